use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::netmodel::{full_residuals, parse_matpower, power_injection, Branch, Bus, BusKind, Generator};
use crate::partition::tests::path;

const CASE9: &str = include_str!("../../data/case9.m");

fn bus(id: usize, kind: BusKind, p_d: f64, q_d: f64) -> Bus {
    Bus {
        id,
        kind,
        p_d,
        q_d,
        v_min: 0.9,
        v_max: 1.1,
        shunt_gs: 0.0,
        shunt_bs: 0.0,
    }
}

fn generator(bus: usize) -> Generator {
    Generator {
        bus,
        p_min: 0.0,
        p_max: 2.0,
        q_min: -2.0,
        q_max: 2.0,
        cost_c2: 10.0,
        cost_c1: 20.0,
        cost_c0: 0.0,
    }
}

/// Slack with a generator feeding a 0.5 + 0.1j load over one lossy line.
fn two_bus() -> PowerNetwork {
    PowerNetwork::new(
        100.0,
        vec![bus(1, BusKind::Slack, 0.0, 0.0), bus(2, BusKind::Pq, 0.5, 0.1)],
        vec![generator(0)],
        vec![Branch {
            from: 0,
            to: 1,
            r: 0.02,
            x: 0.2,
            b_charge: 0.0,
            tap: 1.0,
            s_max: 0.0,
            in_service: true,
        }],
    )
    .unwrap()
}

/// Brute-force optimum of [`two_bus`]: scan the slack voltage `e1` (with
/// `f1 = 0`), solve the load bus for the high-voltage branch by 2-D Newton,
/// keep points inside every bound and read `p_g` off the slack injection.
fn two_bus_oracle(net: &PowerNetwork) -> f64 {
    let solve_load_bus = |e1: f64| -> Option<(f64, f64)> {
        let (mut e2, mut f2) = (e1, 0.0);
        let mismatch = |e2: f64, f2: f64| {
            let (p, q) = power_injection(net, &[e1, e2], &[0.0, f2], 1).unwrap();
            (p + 0.5, q + 0.1)
        };
        for _ in 0..50 {
            let (r1, r2) = mismatch(e2, f2);
            if r1.abs().max(r2.abs()) < 1e-14 {
                return Some((e2, f2));
            }
            let h = 1e-7;
            let (a1, a2) = mismatch(e2 + h, f2);
            let (b1, b2) = mismatch(e2, f2 + h);
            let j = [[(a1 - r1) / h, (b1 - r1) / h], [(a2 - r2) / h, (b2 - r2) / h]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            e2 -= (j[1][1] * r1 - j[0][1] * r2) / det;
            f2 -= (-j[1][0] * r1 + j[0][0] * r2) / det;
        }
        None
    };
    let gen = net.generator_at(0).unwrap();
    let cost_at = |e1: f64| -> Option<f64> {
        let (e2, f2) = solve_load_bus(e1)?;
        let v2 = (e2 * e2 + f2 * f2).sqrt();
        let (p1, q1) = power_injection(net, &[e1, e2], &[0.0, f2], 0).unwrap();
        let ok = (0.9..=1.1).contains(&v2)
            && (gen.p_min..=gen.p_max).contains(&p1)
            && (gen.q_min..=gen.q_max).contains(&q1);
        ok.then(|| gen.cost(p1))
    };
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=2000 {
        let e1 = 0.9 + 0.2 * k as f64 / 2000.0;
        if let Some(c) = cost_at(e1) {
            if c < best.0 {
                best = (c, e1);
            }
        }
    }
    best.0
}

#[test]
fn two_bus_grid_oracle_is_frozen() {
    let oracle = two_bus_oracle(&two_bus());
    assert!((oracle - TWO_BUS_OPTIMUM).abs() <= 1e-9 * TWO_BUS_OPTIMUM, "{oracle}");
}

/// Output of [`two_bus_oracle`].
const TWO_BUS_OPTIMUM: f64 = 12.636954833379983;

#[test]
fn centralized_matches_two_bus_oracle() {
    let sol = solve_centralized(&two_bus(), &Tolerances::default()).unwrap();
    assert!(sol.converged);
    let rel = (sol.objective - TWO_BUS_OPTIMUM).abs() / TWO_BUS_OPTIMUM;
    assert!(rel <= 1e-3, "{} vs {TWO_BUS_OPTIMUM}", sol.objective);
}

#[test]
fn centralized_case9() {
    let net = parse_matpower(CASE9).unwrap();
    let sol = solve_centralized(&net, &Tolerances::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.kkt_residual <= 1e-6 && sol.violation <= 1e-7);
    assert!(full_residuals(&net, &sol.state).unwrap().max_violation() <= 1e-5);
    // published optimum of this case
    assert!((sol.objective - 5296.69).abs() / 5296.69 <= 1e-4, "{}", sol.objective);
}

#[test]
fn zero_loads_give_zero_generation() {
    let net = PowerNetwork::new(
        100.0,
        vec![bus(1, BusKind::Slack, 0.0, 0.0), bus(2, BusKind::Pv, 0.0, 0.0), bus(3, BusKind::Pq, 0.0, 0.0)],
        vec![generator(0), generator(1)],
        path(3).branches().to_vec(),
    )
    .unwrap();
    let sol = solve_centralized(&net, &Tolerances::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.state.p_g.iter().all(|p| p.abs() <= 1e-6), "{:?}", sol.state.p_g);
    assert!(sol.objective.abs() <= 1e-4);
}

#[test]
fn single_bus_generation_equals_load() {
    let net = PowerNetwork::new(100.0, vec![bus(1, BusKind::Slack, 0.3, 0.05)], vec![generator(0)], vec![])
        .unwrap();
    let problem = build_distributed(&net, &Partition::single(&net)).unwrap();
    let spec = SubproblemSpec {
        block: problem.block(0),
        slots: vec![],
        warm_start: problem.flat_start().remove(0),
        multipliers: None,
    };
    let out = solve_subproblem(&spec, &Tolerances::default()).unwrap();
    let state = problem.stitch(&[out.x]).unwrap();
    assert!((state.p_g[0] - 0.3).abs() <= 1e-7);
    assert!((state.q_g[0] - 0.05).abs() <= 1e-7);
}

fn case9_split() -> (PowerNetwork, crate::reform::DistributedProblem, RectState) {
    let net = parse_matpower(CASE9).unwrap();
    let sol = solve_centralized(&net, &Tolerances::default()).unwrap();
    let part = Partition::from_assignment(&net, vec![0, 0, 1, 0, 0, 1, 1, 1, 0]).unwrap();
    let problem = build_distributed(&net, &part).unwrap();
    (net, problem, sol.state)
}

#[test]
fn optimum_is_a_fixed_point() {
    let net = parse_matpower(CASE9).unwrap();
    let sol = solve_centralized(&net, &Tolerances::default()).unwrap();
    let problem = build_distributed(&net, &Partition::single(&net)).unwrap();
    let warm = problem.blocks_from_state(&sol.state).unwrap().remove(0);
    let spec = SubproblemSpec {
        block: problem.block(0),
        slots: vec![],
        warm_start: warm.clone(),
        multipliers: None,
    };
    let out = solve_subproblem(&spec, &Tolerances::default()).unwrap();
    let moved = out.x.iter().zip(&warm).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(moved <= 1e-5, "{moved}");
    assert!(out.objective_after <= out.objective_before);
    assert!(out.kkt_residual <= 1e-6);
}

fn random_slots(block: &RegionBlock, x: &[f64], rng: &mut ChaCha8Rng, rho: f64) -> Vec<SlotPenalty> {
    block
        .coupled_slots()
        .iter()
        .map(|&(local, _)| SlotPenalty {
            local,
            y: rng.gen_range(-5.0..5.0),
            rho,
            target: x[local] + rng.gen_range(-0.05..0.05),
        })
        .collect()
}

#[test]
fn objective_f_reduces_to_cost() {
    let (_, problem, state) = case9_split();
    let x = problem.blocks_from_state(&state).unwrap();
    for (r, xr) in x.iter().enumerate() {
        let block = problem.block(r);
        let mut slots = random_slots(block, xr, &mut ChaCha8Rng::seed_from_u64(1), 1.0);
        slots.iter_mut().for_each(|s| {
            s.y = 0.0;
            s.rho = 0.0;
        });
        let spec = SubproblemSpec {
            block,
            slots,
            warm_start: xr.clone(),
            multipliers: None,
        };
        assert_eq!(objective_F(&spec, xr), block.cost(xr));
    }
}

#[test]
fn proximal_term_vanishes_on_target() {
    let (_, problem, state) = case9_split();
    let x = problem.blocks_from_state(&state).unwrap();
    let block = problem.block(1);
    let mut slots = random_slots(block, &x[1], &mut ChaCha8Rng::seed_from_u64(2), 700.0);
    slots.iter_mut().for_each(|s| s.y = 0.0);
    let mut at_target = x[1].clone();
    for s in &slots {
        at_target[s.local] = s.target;
    }
    let spec = SubproblemSpec {
        block,
        slots,
        warm_start: at_target.clone(),
        multipliers: None,
    };
    assert_eq!(objective_F(&spec, &at_target), block.cost(&at_target));
}

#[test]
fn gradient_f_matches_finite_differences() {
    let (_, problem, state) = case9_split();
    let x = problem.blocks_from_state(&state).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for r in 0..2 {
        let block = problem.block(r);
        for _ in 0..20 {
            let point: Vec<f64> = x[r].iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
            let spec = SubproblemSpec {
                block,
                slots: random_slots(block, &x[r], &mut rng, 300.0),
                warm_start: point.clone(),
                multipliers: None,
            };
            let g = gradient_F(&spec, &point);
            for k in 0..point.len() {
                let h = 1e-6 * point[k].abs().max(1.0);
                let (mut a, mut b) = (point.clone(), point.clone());
                a[k] += h;
                b[k] -= h;
                let fd = (objective_F(&spec, &a) - objective_F(&spec, &b)) / (2.0 * h);
                let err = (fd - g[k]).abs() / g[k].abs().max(1.0);
                assert!(err <= 1e-6, "slot {k}: {fd} vs {}", g[k]);
            }
        }
    }
}

#[test]
fn subproblem_never_increases_f() {
    let (_, problem, state) = case9_split();
    let x = problem.blocks_from_state(&state).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..6 {
        let r = trial % 2;
        let block = problem.block(r);
        let spec = SubproblemSpec {
            block,
            slots: random_slots(block, &x[r], &mut rng, [10.0, 2000.0, 1e5][trial / 2]),
            warm_start: x[r].clone(),
            multipliers: None,
        };
        let out = solve_subproblem(&spec, &Tolerances::default()).unwrap();
        assert!(out.objective_after <= out.objective_before);
        assert_eq!(out.objective_after, objective_F(&spec, &out.x));
        assert!(block.in_box(&out.x));
        if out.status == NlpStatus::ImprovedStationary {
            assert!(out.kkt_residual <= 1e-6 && out.violation <= 1e-7);
        }
    }
}

#[test]
fn warm_start_kept_when_candidate_is_worse() {
    let (_, problem, state) = case9_split();
    let x = problem.blocks_from_state(&state).unwrap();
    let block = problem.block(0);
    let spec = SubproblemSpec {
        block,
        slots: random_slots(block, &x[0], &mut ChaCha8Rng::seed_from_u64(5), 1e3),
        warm_start: x[0].clone(),
        multipliers: None,
    };
    let tight = Tolerances {
        inner_cap: 1,
        outer_cap: 1,
        ..Default::default()
    };
    let out = solve_subproblem(&spec, &tight).unwrap();
    if out.status == NlpStatus::KeptPrevious {
        assert_eq!(out.x, x[0]);
        assert_eq!(out.objective_after, out.objective_before);
    } else {
        assert!(out.objective_after <= out.objective_before);
    }
}

#[test]
fn solves_are_deterministic() {
    let (_, problem, state) = case9_split();
    let x = problem.blocks_from_state(&state).unwrap();
    let block = problem.block(1);
    let spec = SubproblemSpec {
        block,
        slots: random_slots(block, &x[1], &mut ChaCha8Rng::seed_from_u64(6), 2000.0),
        warm_start: problem.flat_start().remove(1),
        multipliers: None,
    };
    let a = solve_subproblem(&spec, &Tolerances::default()).unwrap();
    let b = solve_subproblem(&spec, &Tolerances::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_specs_are_rejected() {
    let (_, problem, state) = case9_split();
    let x = problem.blocks_from_state(&state).unwrap();
    let block = problem.block(0);
    let mut slots = random_slots(block, &x[0], &mut ChaCha8Rng::seed_from_u64(7), 1.0);
    slots[0].rho = 0.0;
    let spec = SubproblemSpec {
        block,
        slots,
        warm_start: x[0].clone(),
        multipliers: None,
    };
    assert!(matches!(solve_subproblem(&spec, &Tolerances::default()), Err(Error::InvalidArgument(_))));
    let short = SubproblemSpec {
        block,
        slots: vec![],
        warm_start: vec![1.0; 3],
        multipliers: None,
    };
    assert!(matches!(solve_subproblem(&short, &Tolerances::default()), Err(Error::Layout { .. })));
    let mut bad = x[0].clone();
    bad[0] = f64::NAN;
    let nan = SubproblemSpec {
        block,
        slots: vec![],
        warm_start: bad,
        multipliers: None,
    };
    assert!(matches!(solve_subproblem(&nan, &Tolerances::default()), Err(Error::NonFinite { .. })));
}
