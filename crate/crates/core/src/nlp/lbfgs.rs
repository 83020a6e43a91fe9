//! Projected limited-memory BFGS for smooth functions over a box.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, Dyn};

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BoxOutcome {
    pub value: f64,
    pub iterations: usize,
    /// `‖x − P(x − ∇f)‖∞` at the returned point.
    pub projected_gradient: f64,
}

pub(crate) fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

pub(crate) fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let step = (x[i] - g[i]).clamp(lo[i], hi[i]);
        m = m.max((x[i] - step).abs());
    }
    m
}

fn dot_masked(a: &[f64], b: &[f64], free: &[bool]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        if free[i] {
            s += a[i] * b[i];
        }
    }
    s
}

struct Memory {
    cap: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl Memory {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y));
    }

    /// `−H g` restricted to the free coordinates (two-loop recursion) with
    /// initial matrix `γ·M⁻¹`.
    fn direction(&self, g: &[f64], free: &[bool], pre: &mut Preconditioner) -> Vec<f64> {
        let mut q: Vec<f64> = g.iter().zip(free).map(|(v, f)| if *f { *v } else { 0.0 }).collect();
        let mut alpha = Vec::with_capacity(self.pairs.len());
        let mut gamma = 1.0;
        let mut usable = Vec::with_capacity(self.pairs.len());
        for (s, y) in &self.pairs {
            let sy = dot_masked(s, y, free);
            usable.push(sy > 1e-12 * dot_masked(s, s, free).sqrt() * dot_masked(y, y, free).sqrt());
        }
        for (k, (s, y)) in self.pairs.iter().enumerate().rev() {
            if !usable[k] {
                alpha.push(0.0);
                continue;
            }
            let rho = 1.0 / dot_masked(s, y, free);
            let a = rho * dot_masked(s, &q, free);
            for i in 0..q.len() {
                if free[i] {
                    q[i] -= a * y[i];
                }
            }
            alpha.push(a);
        }
        alpha.reverse();
        if let Some(k) = (0..self.pairs.len()).rev().find(|&k| usable[k]) {
            let (s, y) = &self.pairs[k];
            let mut my: Vec<f64> = y.iter().zip(free).map(|(v, f)| if *f { *v } else { 0.0 }).collect();
            pre.solve(&mut my, free);
            let ymy = dot_masked(y, &my, free);
            if ymy > 0.0 {
                gamma = dot_masked(s, y, free) / ymy;
            }
        }
        pre.solve(&mut q, free);
        q.iter_mut().for_each(|v| *v *= gamma);
        for (k, (s, y)) in self.pairs.iter().enumerate() {
            if !usable[k] {
                continue;
            }
            let rho = 1.0 / dot_masked(s, y, free);
            let b = rho * dot_masked(y, &q, free);
            for i in 0..q.len() {
                if free[i] {
                    q[i] += (alpha[k] - b) * s[i];
                }
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Curvature model `M` used as the initial inverse-Hessian scaling `M⁻¹`.
pub(crate) enum Preconditioner {
    #[cfg_attr(not(test), allow(dead_code))]
    Identity,
    /// Positive diagonal of `M`.
    Diagonal(Vec<f64>),
    /// Symmetric positive semidefinite `M`; factored on each new free set.
    Dense {
        m: DMatrix<f64>,
        factor: Option<(Vec<bool>, Vec<usize>, Cholesky<f64, Dyn>)>,
    },
}

impl Preconditioner {
    pub(crate) fn dense(m: DMatrix<f64>) -> Self {
        Preconditioner::Dense { m, factor: None }
    }

    fn inv_diag(&self, i: usize) -> f64 {
        match self {
            Preconditioner::Identity => 1.0,
            Preconditioner::Diagonal(d) => 1.0 / d[i],
            Preconditioner::Dense { m, .. } => 1.0 / m[(i, i)],
        }
    }

    /// `v ← M_FF⁻¹ v` on the free coordinates; other entries are untouched.
    fn solve(&mut self, v: &mut [f64], free: &[bool]) {
        match self {
            Preconditioner::Identity => {}
            Preconditioner::Diagonal(d) => {
                for i in 0..v.len() {
                    if free[i] {
                        v[i] /= d[i];
                    }
                }
            }
            Preconditioner::Dense { m, factor } => {
                if factor.as_ref().map_or(true, |(f, _, _)| f != free) {
                    let idx: Vec<usize> = (0..free.len()).filter(|&i| free[i]).collect();
                    let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])]);
                    *factor = factor_shifted(sub).map(|c| (free.to_vec(), idx, c));
                }
                match factor {
                    Some((_, idx, chol)) => {
                        let mut rhs = nalgebra::DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]));
                        chol.solve_mut(&mut rhs);
                        for (k, &i) in idx.iter().enumerate() {
                            v[i] = rhs[k];
                        }
                    }
                    None => {
                        for i in 0..v.len() {
                            if free[i] {
                                v[i] /= m[(i, i)];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cholesky of `m + δI`, raising `δ` from a tiny multiple of the diagonal
/// until the factorization succeeds.
fn factor_shifted(m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if n == 0 {
        return None;
    }
    let top = (0..n).map(|i| m[(i, i)]).fold(0.0f64, f64::max).max(1e-12);
    let mut delta = 1e-10 * top;
    for _ in 0..12 {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] += delta;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c);
        }
        delta *= 100.0;
    }
    None
}

/// Minimizes `f` over `[lo, hi]` from `x` (projected first) until the
/// projected gradient drops to `tol` or `max_iter` steps are taken. `f`
/// writes the gradient into its second argument and returns the value.
/// `pre` supplies the initial inverse-Hessian scaling.
#[allow(clippy::too_many_arguments)]
pub(crate) fn minimize_box(
    f: &mut dyn FnMut(&[f64], &mut [f64]) -> f64,
    x: &mut Vec<f64>,
    lo: &[f64],
    hi: &[f64],
    tol: f64,
    max_iter: usize,
    memory: usize,
    pre: &mut Preconditioner,
) -> BoxOutcome {
    let n = x.len();
    let inv_d: Vec<f64> = (0..n).map(|i| pre.inv_diag(i)).collect();
    project(x, lo, hi);
    let mut g = vec![0.0; n];
    let mut fx = f(x, &mut g);
    let mut mem = Memory {
        cap: memory.max(1),
        pairs: VecDeque::new(),
    };
    let mut xt = vec![0.0; n];
    let mut gt = vec![0.0; n];
    let mut free = vec![true; n];
    let mut iterations = 0;
    let mut pg = projected_gradient_norm(x, &g, lo, hi);
    while iterations < max_iter && pg > tol && fx.is_finite() {
        iterations += 1;
        let eps = pg.min(1e-3);
        for i in 0..n {
            free[i] = !(hi[i] <= lo[i]
                || (x[i] <= lo[i] + eps && g[i] > 0.0)
                || (x[i] >= hi[i] - eps && g[i] < 0.0));
        }
        let mut d = mem.direction(&g, &free, pre);
        let mut slope = dot_masked(&d, &g, &free);
        if !(slope < 0.0) {
            mem.pairs.clear();
            d = (0..n).map(|i| if free[i] { -g[i] * inv_d[i] } else { 0.0 }).collect();
        }
        // ε-active coordinates take a scaled gradient step into their bound
        for i in 0..n {
            if !free[i] && hi[i] > lo[i] {
                d[i] = -g[i] * inv_d[i];
            }
        }
        slope = (0..n).map(|i| d[i] * g[i]).sum::<f64>();
        if !(slope < 0.0) {
            break;
        }
        let mut step = if mem.pairs.is_empty() {
            let gmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            (1.0 / gmax).min(1.0)
        } else {
            1.0
        };
        let accepted = loop {
            for i in 0..n {
                xt[i] = (x[i] + step * d[i]).clamp(lo[i], hi[i]);
            }
            let ft = f(&xt, &mut gt);
            let decrease: f64 = (0..n).map(|i| g[i] * (xt[i] - x[i])).sum();
            if ft.is_finite() && ft <= fx + ARMIJO * decrease {
                break Some(ft);
            }
            // safeguarded quadratic interpolation along the ray
            let mut next = 0.5 * step;
            if ft.is_finite() && decrease < 0.0 {
                let denom = 2.0 * (ft - fx - decrease);
                if denom > 0.0 {
                    next = (-decrease * step / denom).clamp(0.1 * step, 0.5 * step);
                }
            }
            step = next;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some(ft) = accepted else {
            if mem.pairs.is_empty() {
                break;
            }
            mem.pairs.clear();
            continue;
        };
        let s: Vec<f64> = (0..n).map(|i| xt[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gt[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            mem.push(s, y);
        }
        std::mem::swap(x, &mut xt);
        std::mem::swap(&mut g, &mut gt);
        fx = ft;
        pg = projected_gradient_norm(x, &g, lo, hi);
    }
    BoxOutcome {
        value: fx,
        iterations,
        projected_gradient: pg,
    }
}
