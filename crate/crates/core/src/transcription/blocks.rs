//! Constraint blocks: small differentiable expressions over a few decision
//! variables, evaluated generically for values, Jacobians, and Hessians.

use crate::ad::{
    eval_hessian_bucket, eval_jacobian_bucket, Dual2, Grad, LocalJacobian, Real, MAX_ARITY,
};
use crate::dynamics::SegmentParams;

/// Largest number of rows a single block may emit.
pub const MAX_BLOCK_ROWS: usize = 16;

/// One attachment side of a pin block: either three state slots of a segment
/// plus a frame offset, or a fixed world point.
#[derive(Clone, Debug)]
pub enum AttachSide {
    /// Local slots are assigned by the block in declaration order.
    Segment { offset: [f64; 2] },
    World { anchor: [f64; 2] },
}

/// Force or torque feeding a Newton-Euler balance.
#[derive(Clone, Debug)]
pub struct PinLoad {
    /// +1 when this segment is side A of the pin, -1 for side B.
    pub sign: f64,
    /// Application point in the segment frame.
    pub offset: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct NewtonEulerData {
    pub params: SegmentParams,
    pub gravity: f64,
    pub pin_loads: Vec<PinLoad>,
    /// Signs of pure torques (actuators first, then kneelocks, matching the
    /// block's variable order).
    pub torque_signs: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum BlockKind {
    /// Vars: `[theta, thetad, xdd, zdd, thetadd, (fx, fz) per pin load, tau per torque]`.
    /// Rows: force balance x, force balance z, moment balance about the COM.
    NewtonEuler(NewtonEulerData),
    /// Vars: `[p0, v0, a0, pm, vm, am, p2, v2, a2, dt]`; 4 defect rows.
    SimpsonCoord,
    /// Vars: side A segment slots `[x, z, theta]` if any, then side B slots.
    /// Rows: attachment position of A minus B (2 rows).
    PinPosition { a: AttachSide, b: AttachSide },
    /// Vars: `[theta, thetad, xd, zd]` per segment side, A then B.
    /// Rows: attachment velocity of A minus B (2 rows).
    PinVelocity { a: AttachSide, b: AttachSide },
    /// Vars: `[z, theta]`. Row: attachment-point height minus target.
    PointHeight { offset_z: f64, target: f64 },
    /// Vars: `[x, theta, dt]`. Row: foot x-position minus `speed * horizon * dt`.
    StepSpeed { offset_z: f64, speed: f64, horizon: f64 },
    /// Vars declared by caller. Rows: `coeffs * x - rhs` (dense small matrix).
    Linear { coeffs: Vec<Vec<f64>>, rhs: Vec<f64> },
    /// Vars: `[tau, qa, qb]`. Row: `tau * (qa - qb) - slack`.
    TorqueGate { slack: f64 },
    /// Single polynomial row: sum of `coef * prod x_i^p_i`.
    Poly { monomials: Vec<(f64, Vec<(usize, u32)>)> },
}

impl BlockKind {
    pub fn rows(&self) -> usize {
        match self {
            BlockKind::NewtonEuler(_) => 3,
            BlockKind::SimpsonCoord => 4,
            BlockKind::PinPosition { .. } | BlockKind::PinVelocity { .. } => 2,
            BlockKind::PointHeight { .. }
            | BlockKind::StepSpeed { .. }
            | BlockKind::TorqueGate { .. }
            | BlockKind::Poly { .. } => 1,
            BlockKind::Linear { rhs, .. } => rhs.len(),
        }
    }

    /// Local indices whose Hessian rows are structurally nonzero.
    fn hessian_seeds(&self, arity: usize) -> Vec<usize> {
        match self {
            BlockKind::NewtonEuler(_) => vec![0, 1],
            BlockKind::SimpsonCoord => vec![9],
            BlockKind::PinPosition { a, b } => {
                let mut seeds = Vec::new();
                let mut slot = 0;
                for side in [a, b] {
                    if let AttachSide::Segment { .. } = side {
                        seeds.push(slot + 2);
                        slot += 3;
                    }
                }
                seeds
            }
            BlockKind::PinVelocity { a, b } => {
                let mut seeds = Vec::new();
                let mut slot = 0;
                for side in [a, b] {
                    if let AttachSide::Segment { .. } = side {
                        seeds.push(slot);
                        seeds.push(slot + 1);
                        slot += 4;
                    }
                }
                seeds
            }
            BlockKind::PointHeight { .. } => vec![1],
            BlockKind::StepSpeed { .. } => vec![1],
            BlockKind::Linear { .. } => vec![],
            BlockKind::TorqueGate { .. } => vec![0],
            BlockKind::Poly { .. } => (0..arity).collect(),
        }
    }

    pub fn eval<R: Real>(&self, x: &[R], out: &mut [R]) {
        match self {
            BlockKind::NewtonEuler(data) => {
                let theta = x[0];
                let thetad = x[1];
                let (xdd, zdd, thetadd) = (x[2], x[3], x[4]);
                let (s, c) = (theta.sin(), theta.cos());
                let rc = data.params.com_offset;
                // R(theta)*rc and R(theta+pi/2)*rc
                let rot_rc = [c.scale(rc[0]) - s.scale(rc[1]), s.scale(rc[0]) + c.scale(rc[1])];
                let rot90_rc = [-(s.scale(rc[0])) - c.scale(rc[1]), c.scale(rc[0]) - s.scale(rc[1])];
                let w2 = thetad * thetad;
                let acx = xdd + thetadd * rot90_rc[0] - w2 * rot_rc[0];
                let acz = zdd + thetadd * rot90_rc[1] - w2 * rot_rc[1];

                let m = data.params.mass;
                let mut fx = R::from_f64(0.0);
                let mut fz = R::from_f64(-m * data.gravity);
                let mut tau = R::from_f64(0.0); // gravity acts at the COM: no moment
                let mut slot = 5;
                for load in &data.pin_loads {
                    let lfx = x[slot].scale(load.sign);
                    let lfz = x[slot + 1].scale(load.sign);
                    slot += 2;
                    fx = fx + lfx;
                    fz = fz + lfz;
                    let dx = load.offset[0] - rc[0];
                    let dz = load.offset[1] - rc[1];
                    let arm = [c.scale(dx) - s.scale(dz), s.scale(dx) + c.scale(dz)];
                    tau = tau + arm[0] * lfz - arm[1] * lfx;
                }
                for sign in &data.torque_signs {
                    tau = tau + x[slot].scale(*sign);
                    slot += 1;
                }
                out[0] = fx - acx.scale(m);
                out[1] = fz - acz.scale(m);
                out[2] = tau - thetadd.scale(data.params.inertia);
            }
            BlockKind::SimpsonCoord => {
                let rows = super::collocation::coord_defect(
                    x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7], x[8], x[9],
                );
                out[..4].copy_from_slice(&rows);
            }
            BlockKind::PinPosition { a, b } => {
                let mut slot = 0;
                let point = |side: &AttachSide, slot: &mut usize| match side {
                    AttachSide::Segment { offset } => {
                        let p = crate::dynamics::attach_pos(x[*slot], x[*slot + 1], x[*slot + 2], *offset);
                        *slot += 3;
                        p
                    }
                    AttachSide::World { anchor } => {
                        [R::from_f64(anchor[0]), R::from_f64(anchor[1])]
                    }
                };
                let pa = point(a, &mut slot);
                let pb = point(b, &mut slot);
                out[0] = pa[0] - pb[0];
                out[1] = pa[1] - pb[1];
            }
            BlockKind::PinVelocity { a, b } => {
                let mut slot = 0;
                let vel = |side: &AttachSide, slot: &mut usize| match side {
                    AttachSide::Segment { offset } => {
                        let v = crate::dynamics::attach_vel(
                            x[*slot + 2],
                            x[*slot + 3],
                            x[*slot],
                            x[*slot + 1],
                            *offset,
                        );
                        *slot += 4;
                        v
                    }
                    AttachSide::World { .. } => [R::from_f64(0.0), R::from_f64(0.0)],
                };
                let va = vel(a, &mut slot);
                let vb = vel(b, &mut slot);
                out[0] = va[0] - vb[0];
                out[1] = va[1] - vb[1];
            }
            BlockKind::PointHeight { offset_z, target } => {
                // z + cos(theta)*offset_z - target
                out[0] = x[0] + x[1].cos().scale(*offset_z).shift(-target);
            }
            BlockKind::StepSpeed { offset_z, speed, horizon } => {
                // x - sin(theta)*offset_z - speed*horizon*dt
                out[0] = x[0] - x[1].sin().scale(*offset_z) - x[2].scale(speed * horizon);
            }
            BlockKind::Linear { coeffs, rhs } => {
                for (r, (row, b)) in coeffs.iter().zip(rhs.iter()).enumerate() {
                    let mut acc = R::from_f64(-b);
                    for (i, c) in row.iter().enumerate() {
                        if *c != 0.0 {
                            acc = acc + x[i].scale(*c);
                        }
                    }
                    out[r] = acc;
                }
            }
            BlockKind::TorqueGate { slack } => {
                out[0] = x[0] * (x[1] - x[2]) - R::from_f64(*slack);
            }
            BlockKind::Poly { monomials } => {
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
                out[0] = acc;
            }
        }
    }
}

/// A constraint block bound to global decision-variable indices.
#[derive(Clone, Debug)]
pub struct ConstraintBlock {
    pub vars: Vec<usize>,
    pub kind: BlockKind,
    /// Knot this block is associated with, for bandwidth-reducing ordering.
    pub anchor: Option<usize>,
    pub label: String,
}

impl ConstraintBlock {
    pub fn new(vars: Vec<usize>, kind: BlockKind, anchor: Option<usize>, label: impl Into<String>) -> Self {
        ConstraintBlock { vars, kind, anchor, label: label.into() }
    }

    pub fn rows(&self) -> usize {
        self.kind.rows()
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    /// Evaluate residual rows at `x` (full decision vector).
    pub fn values(&self, x: &[f64], out: &mut [f64]) {
        let mut xloc = [0.0; MAX_ARITY];
        for (i, &v) in self.vars.iter().enumerate() {
            xloc[i] = x[v];
        }
        self.kind.eval::<f64>(&xloc[..self.vars.len()], out);
    }

    /// Local Jacobian (rows x arity) at `x`.
    pub fn jacobian(&self, x: &[f64], jac: &mut LocalJacobian) {
        let mut xloc = [0.0; MAX_ARITY];
        for (i, &v) in self.vars.iter().enumerate() {
            xloc[i] = x[v];
        }
        let xloc = &xloc[..self.vars.len()];
        let rows = self.rows();
        match bucket(self.arity()) {
            Bucket::B4 => eval_jacobian_bucket::<4, _>(|x, o| self.kind.eval::<Grad<4>>(x, o), xloc, rows, jac),
            Bucket::B8 => eval_jacobian_bucket::<8, _>(|x, o| self.kind.eval::<Grad<8>>(x, o), xloc, rows, jac),
            Bucket::B16 => {
                eval_jacobian_bucket::<16, _>(|x, o| self.kind.eval::<Grad<16>>(x, o), xloc, rows, jac)
            }
            Bucket::B32 => {
                eval_jacobian_bucket::<32, _>(|x, o| self.kind.eval::<Grad<32>>(x, o), xloc, rows, jac)
            }
        }
    }

    /// Accumulate `sum_r lambda_r * hess(f_r)` into `sink(global_i, global_j, v)`
    /// with `global_i >= global_j` not guaranteed; entries are emitted once per
    /// unordered pair.
    pub fn hessian(&self, x: &[f64], lambda: &[f64], sink: &mut dyn FnMut(usize, usize, f64)) {
        let seeds = self.kind.hessian_seeds(self.arity());
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
        let rows = self.rows();
        let vars = &self.vars;
        let mut local_sink = |p: usize, q: usize, v: f64| sink(vars[p], vars[q], v);
        match bucket(self.arity()) {
            Bucket::B4 => eval_hessian_bucket::<4, _>(
                |x, o| self.kind.eval::<Dual2<4>>(x, o),
                xloc,
                rows,
                lambda,
                &seeds,
                &mask,
                &mut local_sink,
            ),
            Bucket::B8 => eval_hessian_bucket::<8, _>(
                |x, o| self.kind.eval::<Dual2<8>>(x, o),
                xloc,
                rows,
                lambda,
                &seeds,
                &mask,
                &mut local_sink,
            ),
            Bucket::B16 => eval_hessian_bucket::<16, _>(
                |x, o| self.kind.eval::<Dual2<16>>(x, o),
                xloc,
                rows,
                lambda,
                &seeds,
                &mask,
                &mut local_sink,
            ),
            Bucket::B32 => eval_hessian_bucket::<32, _>(
                |x, o| self.kind.eval::<Dual2<32>>(x, o),
                xloc,
                rows,
                lambda,
                &seeds,
                &mask,
                &mut local_sink,
            ),
        }
    }

    /// Structural Hessian pairs (global indices), superset of the true pattern.
    pub fn hessian_pattern(&self, sink: &mut dyn FnMut(usize, usize)) {
        let seeds = self.kind.hessian_seeds(self.arity());
        let mut mask = [false; MAX_ARITY];
        for &s in &seeds {
            mask[s] = true;
        }
        for &p in &seeds {
            for q in 0..self.arity() {
                if mask[q] && q > p {
                    continue;
                }
                sink(self.vars[p], self.vars[q]);
            }
        }
    }
}

enum Bucket {
    B4,
    B8,
    B16,
    B32,
}

fn bucket(arity: usize) -> Bucket {
    match arity {
        0..=4 => Bucket::B4,
        5..=8 => Bucket::B8,
        9..=16 => Bucket::B16,
        17..=32 => Bucket::B32,
        _ => panic!("block arity {arity} exceeds MAX_ARITY"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_block_evaluates_rows() {
        let block = ConstraintBlock::new(
            vec![0, 2],
            BlockKind::Linear { coeffs: vec![vec![2.0, -1.0], vec![0.0, 3.0]], rhs: vec![1.0, 6.0] },
            None,
            "toy",
        );
        let x = [1.0, 99.0, 4.0];
        let mut out = [0.0; 2];
        block.values(&x, &mut out);
        assert_eq!(out, [2.0 - 4.0 - 1.0, 12.0 - 6.0]);
    }

    #[test]
    fn torque_gate_jacobian_is_exact() {
        let block = ConstraintBlock::new(vec![0, 1, 2], BlockKind::TorqueGate { slack: 1e-4 }, None, "gate");
        let x = [0.3, 0.8, 0.1];
        let mut jac = LocalJacobian::default();
        block.jacobian(&x, &mut jac);
        assert_eq!(jac.get(0, 0), x[1] - x[2]);
        assert_eq!(jac.get(0, 1), x[0]);
        assert_eq!(jac.get(0, 2), -x[0]);
    }
}
