use super::*;
use crate::netmodel::{full_residuals, parse_matpower, BranchEnd};
use crate::partition::tests::path;
use crate::sparse::spectral_norm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn case9() -> PowerNetwork {
    parse_matpower(include_str!("../../data/case9.m")).unwrap()
}

fn random_state(net: &PowerNetwork, rng: &mut ChaCha8Rng) -> RectState {
    let n = net.n_buses();
    let mut s = RectState::flat(n);
    for i in 0..n {
        s.e[i] = rng.gen_range(0.9..1.1);
        s.f[i] = rng.gen_range(-0.2..0.2);
        s.p_g[i] = rng.gen_range(-1.0..3.0);
        s.q_g[i] = rng.gen_range(-1.0..1.0);
    }
    s
}

#[test]
fn single_region_has_no_coupling() {
    let net = path(4);
    let prob = build_distributed(&net, &Partition::single(&net)).unwrap();
    assert_eq!(prob.n_rows(), 0);
    assert_eq!(prob.coupling().n_xbar(), 0);
    assert_eq!(prob.block(0).dim(), 16);
}

#[test]
fn path_split_counts() {
    let net = path(4);
    let part = Partition::from_assignment(&net, vec![0, 0, 1, 1]).unwrap();
    let prob = build_distributed(&net, &part).unwrap();
    let c = prob.coupling();
    assert_eq!(c.n_rows(), 8);
    assert_eq!(c.n_xbar(), 4);
    assert_eq!(prob.block(0).dim(), 4 * 2 + 2);
    // bus 2 (index 1) first: region 0 owns it, region 1 copies it
    let r0 = c.rows()[0];
    assert_eq!((r0.bus, r0.region, r0.component), (1, 0, Component::E));
    assert_eq!(c.rows()[2].region, 1);
    assert_eq!(c.rows()[3].component, Component::F);
    assert_eq!(c.rows()[4].bus, 2);
    assert!((spectral_norm(&c.a_matrix(), 500, 1e-14) - 1.0).abs() < 1e-8);
    assert!((spectral_norm(&c.b_matrix(), 500, 1e-14) - 2f64.sqrt()).abs() < 1e-8);
    assert_eq!(c.max_copies(), 2);
    let (a, b) = c.dump_matrix_market();
    assert!(a.starts_with("%%MatrixMarket") && b.contains("-1"));
}

#[test]
fn slack_angle_is_fixed() {
    let net = path(3);
    let prob = build_distributed(&net, &Partition::single(&net)).unwrap();
    let b = prob.block(0);
    let (_, f) = b.voltage_index(net.slack_bus()).unwrap();
    assert_eq!((b.lower()[f], b.upper()[f]), (0.0, 0.0));
}

#[test]
fn single_region_matches_full_network() {
    let net = case9();
    let prob = build_distributed(&net, &Partition::single(&net)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let s = random_state(&net, &mut rng);
        let x = prob.blocks_from_state(&s).unwrap();
        let reg = regional_constraint_residuals(&prob, 0, &x[0]).unwrap();
        assert_eq!(reg, full_residuals(&net, &s).unwrap());
    }
}

#[test]
fn consensus_reassembles_full_residuals() {
    let net = case9();
    let part = Partition::from_assignment(&net, vec![0, 0, 1, 0, 0, 1, 1, 1, 0]).unwrap();
    let prob = build_distributed(&net, &part).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = random_state(&net, &mut rng);
    let x = prob.blocks_from_state(&s).unwrap();
    let xbar = prob.xbar_from_blocks(&x);
    assert!(prob.coupling().consensus_residual(&x, &xbar).iter().all(|v| *v == 0.0));
    let full = full_residuals(&net, &s).unwrap();
    let mut flows = Vec::new();
    for r in 0..2 {
        let reg = regional_constraint_residuals(&prob, r, &x[r]).unwrap();
        for (k, &i) in prob.block(r).interior().iter().enumerate() {
            assert_eq!(reg.p_balance[k], full.p_balance[i]);
            assert_eq!(reg.q_balance[k], full.q_balance[i]);
            assert_eq!(reg.vmag_upper[k], full.vmag_upper[i]);
        }
        flows.extend(reg.flow);
    }
    flows.sort_by_key(|t| (t.0, t.1 == BranchEnd::To));
    assert_eq!(flows, full.flow);
    assert_eq!(prob.stitch(&x).unwrap(), s);
}

/// Term-by-term evaluation of the regional balance equations straight from
/// the dense admittance entries.
fn oracle_balance(prob: &DistributedProblem, r: usize, x: &[f64]) -> Vec<(f64, f64)> {
    let net = prob.network();
    let b = prob.block(r);
    let n = net.n_buses();
    let volt = |j: usize| b.voltage_index(j).map(|(ie, jf)| (x[ie], x[jf]));
    b.interior()
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let (ei, fi) = volt(i).unwrap();
            let (gii, bii) = (net.g().get(i, i), net.b().get(i, i));
            let mut p = gii * (ei * ei + fi * fi);
            let mut q = -bii * (ei * ei + fi * fi);
            for j in (0..n).filter(|&j| j != i) {
                let (gij, bij) = (net.g().get(i, j), net.b().get(i, j));
                if gij == 0.0 && bij == 0.0 {
                    continue;
                }
                let (ej, fj) = volt(j).expect("neighbour is interior or copied");
                p += gij * (ei * ej + fi * fj) - bij * (ei * fj - ej * fi);
                q += -bij * (ei * ej + fi * fj) - gij * (ei * fj - ej * fi);
            }
            let bus = &net.buses()[i];
            (x[4 * k] - bus.p_d - p, x[4 * k + 1] - bus.q_d - q)
        })
        .collect()
}

#[test]
fn random_blocks_match_term_by_term_oracle() {
    let net = path(4);
    let part = Partition::from_assignment(&net, vec![0, 0, 1, 1]).unwrap();
    let prob = build_distributed(&net, &part).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        for r in 0..2 {
            let x: Vec<f64> = (0..prob.block(r).dim()).map(|_| rng.gen_range(-1.2..1.2)).collect();
            let reg = regional_constraint_residuals(&prob, r, &x).unwrap();
            for (k, (p, q)) in oracle_balance(&prob, r, &x).into_iter().enumerate() {
                assert!((reg.p_balance[k] - p).abs() < 1e-12);
                assert!((reg.q_balance[k] - q).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn constraint_forms_match_residuals() {
    let net = case9();
    let part = Partition::from_assignment(&net, vec![0, 0, 1, 0, 0, 1, 1, 1, 0]).unwrap();
    let prob = build_distributed(&net, &part).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for r in 0..2 {
        let b = prob.block(r);
        let x: Vec<f64> = (0..b.dim()).map(|_| rng.gen_range(-1.1..1.1)).collect();
        let reg = regional_constraint_residuals(&prob, r, &x).unwrap();
        for c in b.equalities() {
            let k = |i: usize| b.interior().iter().position(|&v| v == i).unwrap();
            let want = match c.tag {
                ConstraintTag::PBalance(i) => -reg.p_balance[k(i)],
                ConstraintTag::QBalance(i) => -reg.q_balance[k(i)],
                _ => unreachable!(),
            };
            assert!((c.eval(&x) - want).abs() < 1e-12);
        }
        for c in b.inequalities() {
            if let ConstraintTag::Flow { branch, end } = c.tag {
                let s = net.branches()[branch].s_max;
                let t = reg.flow.iter().find(|t| t.0 == branch && t.1 == end).unwrap();
                assert!((c.eval(&x) - t.2 / (s * s)).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn layout_errors() {
    let net = path(4);
    let part = Partition::from_assignment(&net, vec![0, 0, 1, 1]).unwrap();
    let prob = build_distributed(&net, &part).unwrap();
    assert!(matches!(
        regional_constraint_residuals(&prob, 0, &[0.0; 3]),
        Err(Error::Layout { .. })
    ));
    assert!(regional_constraint_residuals(&prob, 2, &[0.0; 10]).is_err());
}

#[test]
fn hypercube_projection() {
    let cube = Hypercube::new(vec![1.1, 1.1, 1.05]);
    assert_eq!(project_hypercube(&[0.3, -0.2, 1.0], &cube).unwrap(), vec![0.3, -0.2, 1.0]);
    assert_eq!(project_hypercube(&[2.0, -3.0, 0.0], &cube).unwrap(), vec![1.1, -1.1, 0.0]);
    assert!(project_hypercube(&[0.0], &cube).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let c: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let p = project_hypercube(&c, &cube).unwrap();
        let dist = |v: &[f64]| v.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let best = dist(&p);
        for _ in 0..10_000 {
            let s: Vec<f64> = cube.bounds().iter().map(|&b| rng.gen_range(-b..=b)).collect();
            assert!(dist(&s) >= best - 1e-12);
        }
    }
}
