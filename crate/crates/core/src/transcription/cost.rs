//! Objective machinery: differentiable cost terms, named basis features, and
//! weighted-sum / proximal objectives.

use crate::ad::{eval_hessian_bucket, eval_jacobian_bucket, Dual2, Grad, LocalJacobian, Real, MAX_ARITY};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub enum TermKind {
    /// Vars `[ta, tb, dt]`: `(ta^2 + tb^2) * dt`.
    TorqueSquared,
    /// Vars `[t0_j, t1_j]` for each of `pairs` joints then `dt`:
    /// `scale * sum_j (t1_j - t0_j)^2 / dt`.
    TorqueRate { scale: f64, pairs: usize },
    /// Vars `[y, dt]`: `y^2 * dt`.
    SquareDt,
    /// Vars `[x, theta]`: `(x - sin(theta)*offset_z - target)^2`.
    StepLengthError { offset_z: f64, target: f64 },
    /// Vars `[z, theta]`: `(z + cos(theta)*offset_z) * scale`.
    PointHeightMean { offset_z: f64, scale: f64 },
    /// `-ln(offset + sum_i diff_i * w_i)` over the weight variables.
    NegLogMargin { offset: f64, diff: Vec<f64> },
    /// Sum of monomials `coef * prod x_i^p_i`.
    Poly { monomials: Vec<(f64, Vec<(usize, u32)>)> },
}

impl TermKind {
    fn hessian_seeds(&self, arity: usize) -> Vec<usize> {
        match self {
            TermKind::TorqueSquared => vec![0, 1],
            TermKind::TorqueRate { .. } | TermKind::NegLogMargin { .. } | TermKind::Poly { .. } => {
                (0..arity).collect()
            }
            TermKind::SquareDt => vec![0],
            TermKind::StepLengthError { .. } => vec![0, 1],
            TermKind::PointHeightMean { .. } => vec![1],
        }
    }

    fn eval<R: Real>(&self, x: &[R]) -> R {
        match self {
            TermKind::TorqueSquared => (x[0].sq() + x[1].sq()) * x[2],
            TermKind::TorqueRate { scale, pairs } => {
                let dt = x[2 * pairs];
                let mut acc = R::from_f64(0.0);
                for j in 0..*pairs {
                    let d = x[2 * j + 1] - x[2 * j];
                    acc = acc + d.sq() / dt;
                }
                acc.scale(*scale)
            }
            TermKind::SquareDt => x[0].sq() * x[1],
            TermKind::StepLengthError { offset_z, target } => {
                let len = x[0] - x[1].sin().scale(*offset_z);
                (len.shift(-target)).sq()
            }
            TermKind::PointHeightMean { offset_z, scale } => {
                (x[0] + x[1].cos().scale(*offset_z)).scale(*scale)
            }
            TermKind::NegLogMargin { offset, diff } => {
                let mut m = R::from_f64(*offset);
                for (i, d) in diff.iter().enumerate() {
                    m = m + x[i].scale(*d);
                }
                -(m.ln())
            }
            TermKind::Poly { monomials } => {
                let mut acc = R::from_f64(0.0);
                for (coef, powers) in monomials {
                    let mut term = R::from_f64(*coef);
                    for (i, p) in powers {
                        for _ in 0..*p {
                            term = term * x[*i];
                        }
                    }
                    acc = acc + term;
                }
                acc
            }
        }
    }
}

/// One scalar cost term bound to global variable indices.
#[derive(Clone, Debug)]
pub struct CostTerm {
    pub vars: Vec<usize>,
    pub kind: TermKind,
}

impl CostTerm {
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut xloc = [0.0; MAX_ARITY];
        for (i, &v) in self.vars.iter().enumerate() {
            xloc[i] = x[v];
        }
        self.kind.eval::<f64>(&xloc[..self.vars.len()])
    }

    /// Add `scale * grad(term)` into the dense gradient.
    pub fn add_gradient(&self, x: &[f64], scale: f64, grad: &mut [f64]) {
        let mut xloc = [0.0; MAX_ARITY];
        for (i, &v) in self.vars.iter().enumerate() {
            xloc[i] = x[v];
        }
        let xloc = &xloc[..self.vars.len()];
        let mut jac = LocalJacobian::default();
        let k = self.vars.len();
        match k {
            0..=4 => eval_jacobian_bucket::<4, _>(|x, o| o[0] = self.kind.eval::<Grad<4>>(x), xloc, 1, &mut jac),
            5..=8 => eval_jacobian_bucket::<8, _>(|x, o| o[0] = self.kind.eval::<Grad<8>>(x), xloc, 1, &mut jac),
            9..=16 => {
                eval_jacobian_bucket::<16, _>(|x, o| o[0] = self.kind.eval::<Grad<16>>(x), xloc, 1, &mut jac)
            }
            _ => eval_jacobian_bucket::<32, _>(|x, o| o[0] = self.kind.eval::<Grad<32>>(x), xloc, 1, &mut jac),
        }
        for (i, &v) in self.vars.iter().enumerate() {
            grad[v] += scale * jac.get(0, i);
        }
    }

    /// Add `scale * hess(term)` entries via `sink` (one emission per unordered pair).
    pub fn add_hessian(&self, x: &[f64], scale: f64, sink: &mut dyn FnMut(usize, usize, f64)) {
        if scale == 0.0 {
            return;
        }
        let seeds = self.kind.hessian_seeds(self.vars.len());
        if seeds.is_empty() {
            return;
        }
        let mut xloc = [0.0; MAX_ARITY];
        for (i, &v) in self.vars.iter().enumerate() {
            xloc[i] = x[v];
        }
        let xloc = &xloc[..self.vars.len()];
        let mut mask = [false; MAX_ARITY];
        for &s in &seeds {
            mask[s] = true;
        }
        let lambda = [scale];
        let vars = &self.vars;
        let mut local_sink = |p: usize, q: usize, v: f64| sink(vars[p], vars[q], v);
        match self.vars.len() {
            0..=4 => eval_hessian_bucket::<4, _>(
                |x, o| o[0] = self.kind.eval::<Dual2<4>>(x),
                xloc,
                1,
                &lambda,
                &seeds,
                &mask,
                &mut local_sink,
            ),
            5..=8 => eval_hessian_bucket::<8, _>(
                |x, o| o[0] = self.kind.eval::<Dual2<8>>(x),
                xloc,
                1,
                &lambda,
                &seeds,
                &mask,
                &mut local_sink,
            ),
            9..=16 => eval_hessian_bucket::<16, _>(
                |x, o| o[0] = self.kind.eval::<Dual2<16>>(x),
                xloc,
                1,
                &lambda,
                &seeds,
                &mask,
                &mut local_sink,
            ),
            _ => eval_hessian_bucket::<32, _>(
                |x, o| o[0] = self.kind.eval::<Dual2<32>>(x),
                xloc,
                1,
                &lambda,
                &seeds,
                &mask,
                &mut local_sink,
            ),
        }
    }

    pub fn hessian_pattern(&self, sink: &mut dyn FnMut(usize, usize)) {
        let seeds = self.kind.hessian_seeds(self.vars.len());
        let mut mask = [false; MAX_ARITY];
        for &s in &seeds {
            mask[s] = true;
        }
        for &p in &seeds {
            for q in 0..self.vars.len() {
                if mask[q] && q > p {
                    continue;
                }
                sink(self.vars[p], self.vars[q]);
            }
        }
    }
}

/// A named basis cost function: a sum of terms with a stable position in the
/// basis ordering.
#[derive(Clone, Debug)]
pub struct Feature {
    pub name: String,
    pub terms: Vec<CostTerm>,
}

impl Feature {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.value(x)).sum()
    }
}

/// Ordered list of basis cost functions; weights index into it.
#[derive(Clone, Debug, Default)]
pub struct CostBasis {
    pub features: Vec<Feature>,
}

impl CostBasis {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// Feature vector `phi(x)`.
    pub fn values(&self, x: &[f64]) -> Vec<f64> {
        self.features.iter().map(|f| f.value(x)).collect()
    }
}

/// Cost-component weights. Nonnegative and finite; unit 2-norm is enforced by
/// the weight-recovery pipeline, not by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> crate::Result<Self> {
        if w.is_empty() || w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(crate::Error::Config(format!("invalid weight vector {w:?}")));
        }
        Ok(WeightVector(w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescaled to unit 2-norm.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        WeightVector(self.0.iter().map(|v| v / n).collect())
    }

    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    }
}

/// The NLP objective.
#[derive(Clone, Debug)]
pub enum Objective {
    /// `sum_i w_i * phi_i(x)` over a cost basis.
    WeightedBasis { basis: CostBasis, weights: Vec<f64> },
    /// `||x - target||_2^2`, used by feasibility projection.
    Proximal { target: Vec<f64> },
    /// Plain sum of terms.
    Terms(Vec<CostTerm>),
    /// Feasibility-only problems.
    Zero,
}

impl Objective {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Objective::WeightedBasis { basis, weights } => basis
                .features
                .iter()
                .zip(weights.iter())
                .map(|(f, w)| w * f.value(x))
                .sum(),
            Objective::Proximal { target } => {
                x.iter().zip(target.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
            }
            Objective::Terms(terms) => terms.iter().map(|t| t.value(x)).sum(),
            Objective::Zero => 0.0,
        }
    }

    pub fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        match self {
            Objective::WeightedBasis { basis, weights } => {
                for (f, w) in basis.features.iter().zip(weights.iter()) {
                    for term in &f.terms {
                        term.add_gradient(x, *w, grad);
                    }
                }
            }
            Objective::Proximal { target } => {
                for i in 0..x.len() {
                    grad[i] = 2.0 * (x[i] - target[i]);
                }
            }
            Objective::Terms(terms) => {
                for term in terms {
                    term.add_gradient(x, 1.0, grad);
                }
            }
            Objective::Zero => {}
        }
    }

    /// Add `scale * hess(objective)` entries via `sink`.
    pub fn add_hessian(&self, x: &[f64], scale: f64, sink: &mut dyn FnMut(usize, usize, f64)) {
        match self {
            Objective::WeightedBasis { basis, weights } => {
                for (f, w) in basis.features.iter().zip(weights.iter()) {
                    for term in &f.terms {
                        term.add_hessian(x, scale * w, sink);
                    }
                }
            }
            Objective::Proximal { target } => {
                for i in 0..target.len() {
                    sink(i, i, 2.0 * scale);
                }
            }
            Objective::Terms(terms) => {
                for term in terms {
                    term.add_hessian(x, scale, sink);
                }
            }
            Objective::Zero => {}
        }
    }

    pub fn hessian_pattern(&self, dim: usize, sink: &mut dyn FnMut(usize, usize)) {
        match self {
            Objective::WeightedBasis { basis, .. } => {
                for f in &basis.features {
                    for term in &f.terms {
                        term.hessian_pattern(sink);
                    }
                }
            }
            Objective::Proximal { .. } => {
                for i in 0..dim {
                    sink(i, i);
                }
            }
            Objective::Terms(terms) => {
                for term in terms {
                    term.hessian_pattern(sink);
                }
            }
            Objective::Zero => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn torque_squared_closed_form() {
        let term = CostTerm { vars: vec![0, 1, 2], kind: TermKind::TorqueSquared };
        assert_relative_eq!(term.value(&[1.0, 1.0, 0.01]), 0.02);
    }

    #[test]
    fn neg_log_margin_gradient() {
        let term = CostTerm {
            vars: vec![0, 1],
            kind: TermKind::NegLogMargin { offset: 1.5, diff: vec![2.0, -1.0] },
        };
        let x = [0.4, 0.3];
        let m = 1.5 + 2.0 * x[0] - x[1];
        assert_relative_eq!(term.value(&x), -m.ln());
        let mut g = vec![0.0; 2];
        term.add_gradient(&x, 1.0, &mut g);
        assert_relative_eq!(g[0], -2.0 / m, max_relative = 1e-14);
        assert_relative_eq!(g[1], 1.0 / m, max_relative = 1e-14);
    }
}
