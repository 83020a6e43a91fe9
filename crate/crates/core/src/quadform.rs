//! Sparse quadratic forms `Σ c·x_a·x_b + Σ l·x_a + k`.
//!
//! Every OPF quantity in rectangular coordinates (injections, branch flows,
//! squared voltage magnitude) is one of these, so the solver evaluates and
//! differentiates constraints through this single type.

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadForm {
    pub quad: Vec<(usize, usize, f64)>,
    pub lin: Vec<(usize, f64)>,
    pub constant: f64,
}

impl QuadForm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_quad(&mut self, a: usize, b: usize, coef: f64) {
        if coef != 0.0 {
            self.quad.push((a, b, coef));
        }
    }

    pub fn add_lin(&mut self, a: usize, coef: f64) {
        if coef != 0.0 {
            self.lin.push((a, coef));
        }
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.quad.iter_mut().for_each(|t| t.2 *= s);
        self.lin.iter_mut().for_each(|t| t.1 *= s);
        self.constant *= s;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let q: f64 = self.quad.iter().map(|&(a, b, c)| c * x[a] * x[b]).sum();
        let l: f64 = self.lin.iter().map(|&(a, c)| c * x[a]).sum();
        q + l + self.constant
    }

    /// `grad += weight · ∇form(x)`.
    pub fn add_gradient(&self, x: &[f64], weight: f64, grad: &mut [f64]) {
        if weight == 0.0 {
            return;
        }
        for &(a, b, c) in &self.quad {
            let wc = weight * c;
            grad[a] += wc * x[b];
            grad[b] += wc * x[a];
        }
        for &(a, c) in &self.lin {
            grad[a] += weight * c;
        }
    }

    /// Largest absolute coefficient, ignoring the constant.
    pub fn max_coef(&self) -> f64 {
        self.quad
            .iter()
            .map(|t| t.2.abs())
            .chain(self.lin.iter().map(|t| t.1.abs()))
            .fold(0.0, f64::max)
    }

    /// Variables this form touches, sorted and deduplicated.
    pub fn support(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .quad
            .iter()
            .flat_map(|&(a, b, _)| [a, b])
            .chain(self.lin.iter().map(|t| t.0))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_and_gradient() {
        // 2·x0·x1 + 3·x1² − x0 + 4
        let mut q = QuadForm::new();
        q.add_quad(0, 1, 2.0);
        q.add_quad(1, 1, 3.0);
        q.add_lin(0, -1.0);
        q.constant = 4.0;
        let x = [1.5, -2.0];
        assert_eq!(q.eval(&x), 2.0 * 1.5 * -2.0 + 3.0 * 4.0 - 1.5 + 4.0);
        let mut g = [0.0; 2];
        q.add_gradient(&x, 1.0, &mut g);
        assert_eq!(g, [2.0 * -2.0 - 1.0, 2.0 * 1.5 + 6.0 * -2.0]);
        assert_eq!(q.support(), vec![0, 1]);
    }
}
