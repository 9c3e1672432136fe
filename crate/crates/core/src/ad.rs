//! Forward-mode automatic differentiation over small fixed-arity expressions.
//!
//! Constraint and cost functions are written once, generically over [`Real`],
//! and evaluated three ways: with `f64` for values, with [`Grad`] for exact
//! first derivatives, and with [`Dual2`] (forward-over-forward) for exact
//! second derivatives. The const parameter `N` is the partial-derivative
//! capacity; callers pick the smallest bucket that fits the expression's
//! input arity so every operation stays on the stack.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Largest supported input arity for a single differentiated expression.
pub const MAX_ARITY: usize = 32;

/// Scalar abstraction shared by plain values and dual numbers.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(c: f64) -> Self;
    fn val(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;

    /// Multiply by a plain constant.
    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }

    /// Add a plain constant.
    fn shift(self, c: f64) -> Self {
        self + Self::from_f64(c)
    }

    fn sq(self) -> Self {
        self * self
    }
}

impl Real for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }
    fn val(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// First-order dual number carrying a value and up to `N` partials.
#[derive(Clone, Copy, Debug)]
pub struct Grad<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Grad<N> {
    pub fn constant(v: f64) -> Self {
        Grad { v, d: [0.0; N] }
    }

    /// Variable seeded at local slot `i`.
    pub fn seeded(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Grad { v, d }
    }
}

impl<const N: usize> Add for Grad<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d.iter()) {
            *a += *b;
        }
        Grad { v: self.v + rhs.v, d }
    }
}

impl<const N: usize> Sub for Grad<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for (a, b) in d.iter_mut().zip(rhs.d.iter()) {
            *a -= *b;
        }
        Grad { v: self.v - rhs.v, d }
    }
}

impl<const N: usize> Mul for Grad<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Grad { v: self.v * rhs.v, d }
    }
}

impl<const N: usize> Div for Grad<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let v = self.v / rhs.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] - v * rhs.d[i]) / rhs.v;
        }
        Grad { v, d }
    }
}

impl<const N: usize> Neg for Grad<N> {
    type Output = Self;
    fn neg(self) -> Self {
        let mut d = self.d;
        for a in d.iter_mut() {
            *a = -*a;
        }
        Grad { v: -self.v, d }
    }
}

impl<const N: usize> Real for Grad<N> {
    fn from_f64(c: f64) -> Self {
        Grad::constant(c)
    }
    fn val(self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        let mut d = self.d;
        for a in d.iter_mut() {
            *a *= c;
        }
        Grad { v: s, d }
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        let mut d = self.d;
        for a in d.iter_mut() {
            *a *= -s;
        }
        Grad { v: c, d }
    }
    fn ln(self) -> Self {
        let mut d = self.d;
        for a in d.iter_mut() {
            *a /= self.v;
        }
        Grad { v: self.v.ln(), d }
    }
    fn sqrt(self) -> Self {
        let v = self.v.sqrt();
        let mut d = self.d;
        for a in d.iter_mut() {
            *a /= 2.0 * v;
        }
        Grad { v, d }
    }
}

/// Second-order dual: a [`Grad`] value plus its directional derivative along
/// one seed direction. One evaluation per seed direction yields a full row of
/// the Hessian in `dot.d`.
#[derive(Clone, Copy, Debug)]
pub struct Dual2<const N: usize> {
    pub val: Grad<N>,
    pub dot: Grad<N>,
}

impl<const N: usize> Dual2<N> {
    /// Variable at local slot `i`, differentiated along direction `p`.
    pub fn seeded(v: f64, i: usize, p: usize) -> Self {
        Dual2 {
            val: Grad::seeded(v, i),
            dot: Grad::constant(if i == p { 1.0 } else { 0.0 }),
        }
    }
}

impl<const N: usize> Add for Dual2<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Dual2 { val: self.val + rhs.val, dot: self.dot + rhs.dot }
    }
}

impl<const N: usize> Sub for Dual2<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Dual2 { val: self.val - rhs.val, dot: self.dot - rhs.dot }
    }
}

impl<const N: usize> Mul for Dual2<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Dual2 {
            val: self.val * rhs.val,
            dot: self.dot * rhs.val + self.val * rhs.dot,
        }
    }
}

impl<const N: usize> Div for Dual2<N> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let val = self.val / rhs.val;
        Dual2 { val, dot: (self.dot - val * rhs.dot) / rhs.val }
    }
}

impl<const N: usize> Neg for Dual2<N> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual2 { val: -self.val, dot: -self.dot }
    }
}

impl<const N: usize> Real for Dual2<N> {
    fn from_f64(c: f64) -> Self {
        Dual2 { val: Grad::constant(c), dot: Grad::constant(0.0) }
    }
    fn val(self) -> f64 {
        self.val.v
    }
    fn sin(self) -> Self {
        Dual2 { val: self.val.sin(), dot: self.val.cos() * self.dot }
    }
    fn cos(self) -> Self {
        Dual2 { val: self.val.cos(), dot: -(self.val.sin()) * self.dot }
    }
    fn ln(self) -> Self {
        Dual2 { val: self.val.ln(), dot: self.dot / self.val }
    }
    fn sqrt(self) -> Self {
        let val = self.val.sqrt();
        Dual2 { val, dot: self.dot / (val.scale(2.0)) }
    }
}

/// Dense row-major `rows x arity` local Jacobian of one expression block.
#[derive(Clone, Debug, Default)]
pub struct LocalJacobian {
    pub rows: usize,
    pub arity: usize,
    pub data: Vec<f64>,
}

impl LocalJacobian {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.arity + c]
    }
}

/// Evaluate a block's local Jacobian with one seeded forward pass per bucket.
/// `f` must be the same generic body instantiated at `Grad<N>`.
pub fn eval_jacobian_bucket<const N: usize, F>(f: F, x: &[f64], rows: usize, jac: &mut LocalJacobian)
where
    F: Fn(&[Grad<N>], &mut [Grad<N>]),
{
    let k = x.len();
    debug_assert!(k <= N);
    let mut xin = [Grad::<N>::constant(0.0); MAX_ARITY];
    for i in 0..k {
        xin[i] = Grad::seeded(x[i], i);
    }
    let mut out = [Grad::<N>::constant(0.0); 16];
    debug_assert!(rows <= 16);
    f(&xin[..k], &mut out[..rows]);
    jac.rows = rows;
    jac.arity = k;
    jac.data.clear();
    jac.data.reserve(rows * k);
    for r in 0..rows {
        for c in 0..k {
            jac.data.push(out[r].d[c]);
        }
    }
}

/// Accumulate `sum_r lambda_r * H(f_r)` rows for the seed directions `seeds`,
/// invoking `sink(p, q, value)` for every contribution with local indices
/// `p` (the seed) and `q`. Entries with both `p` and `q` in `seeds` are only
/// emitted for `q <= p` so symmetric pairs are not double counted.
pub fn eval_hessian_bucket<const N: usize, F>(
    f: F,
    x: &[f64],
    rows: usize,
    lambda: &[f64],
    seeds: &[usize],
    seed_mask: &[bool],
    sink: &mut dyn FnMut(usize, usize, f64),
) where
    F: Fn(&[Dual2<N>], &mut [Dual2<N>]),
{
    let k = x.len();
    debug_assert!(k <= N);
    debug_assert!(rows <= 16);
    for &p in seeds {
        let mut xin = [Dual2::<N>::from_f64(0.0); MAX_ARITY];
        for i in 0..k {
            xin[i] = Dual2::seeded(x[i], i, p);
        }
        let mut out = [Dual2::<N>::from_f64(0.0); 16];
        f(&xin[..k], &mut out[..rows]);
        for q in 0..k {
            if seed_mask[q] && q > p {
                continue; // the q-seeded pass will emit (q, p)
            }
            let mut acc = 0.0;
            for r in 0..rows {
                acc += lambda[r] * out[r].dot.d[q];
            }
            if acc != 0.0 {
                sink(p, q, acc);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // f0 = x*sin(y) + y^2, f1 = ln(x) / y
    fn body<R: Real>(x: &[R], out: &mut [R]) {
        out[0] = x[0] * x[1].sin() + x[1].sq();
        out[1] = x[0].ln() / x[1];
    }

    #[test]
    fn jacobian_matches_hand_derivatives() {
        let x = [1.3, 0.7];
        let mut jac = LocalJacobian::default();
        eval_jacobian_bucket::<4, _>(body::<Grad<4>>, &x, 2, &mut jac);
        assert_relative_eq!(jac.get(0, 0), x[1].sin(), max_relative = 1e-14);
        assert_relative_eq!(jac.get(0, 1), x[0] * x[1].cos() + 2.0 * x[1], max_relative = 1e-14);
        assert_relative_eq!(jac.get(1, 0), 1.0 / (x[0] * x[1]), max_relative = 1e-14);
        assert_relative_eq!(jac.get(1, 1), -x[0].ln() / (x[1] * x[1]), max_relative = 1e-14);
    }

    #[test]
    fn hessian_matches_finite_difference_of_gradient() {
        let x = [1.3, 0.7];
        let lambda = [0.8, -0.4];
        let mut h = [[0.0f64; 2]; 2];
        let seeds = [0usize, 1];
        let mask = [true, true];
        eval_hessian_bucket::<4, _>(body::<Dual2<4>>, &x, 2, &lambda, &seeds, &mask, &mut |p, q, v| {
            h[p][q] += v;
            if p != q {
                h[q][p] += v;
            }
        });

        // central differences of the weighted gradient
        let grad = |x: &[f64; 2]| -> [f64; 2] {
            let mut jac = LocalJacobian::default();
            eval_jacobian_bucket::<4, _>(body::<Grad<4>>, x, 2, &mut jac);
            [
                lambda[0] * jac.get(0, 0) + lambda[1] * jac.get(1, 0),
                lambda[0] * jac.get(0, 1) + lambda[1] * jac.get(1, 1),
            ]
        };
        let eps = 1e-6;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += eps;
            xm[i] -= eps;
            let gp = grad(&xp);
            let gm = grad(&xm);
            for j in 0..2 {
                let fd = (gp[j] - gm[j]) / (2.0 * eps);
                assert_relative_eq!(h[i][j], fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn partial_seed_set_emits_full_row() {
        // f = x0 * x1 (bilinear): Hessian nonzeros all live in row/col 0,
        // so seeding only {0} must recover them.
        fn bil<R: Real>(x: &[R], out: &mut [R]) {
            out[0] = x[0] * x[1];
        }
        let x = [2.0, 3.0];
        let mut entries = Vec::new();
        eval_hessian_bucket::<4, _>(
            bil::<Dual2<4>>,
            &x,
            1,
            &[1.0],
            &[0],
            &[true, false],
            &mut |p, q, v| entries.push((p, q, v)),
        );
        assert_eq!(entries, vec![(0, 1, 1.0)]);
    }
}
