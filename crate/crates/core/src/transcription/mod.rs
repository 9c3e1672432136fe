//! Sparse constrained NLP assembly from a linkage model: decision-vector
//! layout, Hermite-Simpson defect constraints, pin constraints, and weighted
//! cost assembly.
//!
//! # Decision vector
//!
//! `x = [dt, states, accels, pin forces, actuator torques, kneelock torques]`
//! with each family stored knot-major. `dt` is the single shared uniform
//! timestep. For `S` segments, `P` pins, `A` actuators, `K` kneelocks and `T`
//! knots the dimension is `1 + T*(9S + 2P + A + K)`.
//!
//! # Constraint census (walker task)
//!
//! Per knot and segment, three Newton-Euler rows: `3*S*T`. Per Simpson
//! interval (`(T-1)/2` of them), segment, and coordinate, four defect rows:
//! `6*S*(T-1)`. Pin position matching at every knot: `2*P*T`; pin velocity
//! matching at the final knot: `2*P`. The walking task adds leg-swapped
//! periodicity (`6*S`) with the step length expressed as
//! `speed * (T-1) * dt`, plus the knee inequalities. Rows that the
//! periodicity map makes redundant (internal-pin position matches at the
//! final knot, explicit touchdown and average-speed rows) are omitted so the
//! Jacobian keeps full row rank; the walker census is therefore
//! `3*S*T + 6*S*(T-1) + 2*P*(T-1) + 2*T_ground + 2*P + 6*S` equalities.

pub mod blocks;
pub mod collocation;
pub mod cost;

pub use blocks::{AttachSide, BlockKind, ConstraintBlock, NewtonEulerData, PinLoad};
pub use collocation::hermite_simpson_defect;
pub use cost::{CostBasis, CostTerm, Feature, Objective, TermKind, WeightVector};

use crate::dynamics::{ModelSpec, PinSide, SegmentState};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const STATE_DIM: usize = 6;
pub const ACCEL_DIM: usize = 3;

/// State component indices.
pub const C_X: usize = 0;
pub const C_Z: usize = 1;
pub const C_TH: usize = 2;
pub const C_XD: usize = 3;
pub const C_ZD: usize = 4;
pub const C_THD: usize = 5;

/// Bounds on the shared timestep, nondimensional time units.
pub const DT_MIN: f64 = 1e-3;
pub const DT_MAX: f64 = 0.2;

/// Index map for the trajectory decision vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionLayout {
    pub knots: usize,
    pub segments: usize,
    pub pins: usize,
    pub actuators: usize,
    pub kneelocks: usize,
}

impl DecisionLayout {
    pub fn for_model(model: &ModelSpec, knots: usize) -> Self {
        DecisionLayout {
            knots,
            segments: model.segments.len(),
            pins: model.pins.len(),
            actuators: model.pins.iter().filter(|p| p.actuated).count(),
            kneelocks: model.pins.iter().filter(|p| p.has_kneelock).count(),
        }
    }

    pub fn dim(&self) -> usize {
        1 + self.knots * (9 * self.segments + 2 * self.pins + self.actuators + self.kneelocks)
    }

    pub fn delta_t(&self) -> usize {
        0
    }

    fn states_base(&self) -> usize {
        1
    }

    fn accels_base(&self) -> usize {
        1 + STATE_DIM * self.segments * self.knots
    }

    fn pins_base(&self) -> usize {
        self.accels_base() + ACCEL_DIM * self.segments * self.knots
    }

    fn torques_base(&self) -> usize {
        self.pins_base() + 2 * self.pins * self.knots
    }

    fn kneelocks_base(&self) -> usize {
        self.torques_base() + self.actuators * self.knots
    }

    pub fn state(&self, segment: usize, knot: usize, comp: usize) -> usize {
        debug_assert!(segment < self.segments && knot < self.knots && comp < STATE_DIM);
        self.states_base() + (knot * self.segments + segment) * STATE_DIM + comp
    }

    pub fn accel(&self, segment: usize, knot: usize, comp: usize) -> usize {
        debug_assert!(segment < self.segments && knot < self.knots && comp < ACCEL_DIM);
        self.accels_base() + (knot * self.segments + segment) * ACCEL_DIM + comp
    }

    pub fn pin_force(&self, pin: usize, knot: usize, comp: usize) -> usize {
        debug_assert!(pin < self.pins && knot < self.knots && comp < 2);
        self.pins_base() + (knot * self.pins + pin) * 2 + comp
    }

    pub fn torque(&self, actuator: usize, knot: usize) -> usize {
        debug_assert!(actuator < self.actuators && knot < self.knots);
        self.torques_base() + knot * self.actuators + actuator
    }

    pub fn kneelock(&self, kneelock: usize, knot: usize) -> usize {
        debug_assert!(kneelock < self.kneelocks && knot < self.knots);
        self.kneelocks_base() + knot * self.kneelocks + kneelock
    }

    /// Knot associated with a variable; `None` for the shared timestep.
    pub fn anchor(&self, idx: usize) -> Option<usize> {
        if idx == 0 {
            return None;
        }
        let (s, p, a, k, t) = (self.segments, self.pins, self.actuators, self.kneelocks, self.knots);
        let mut i = idx - 1;
        if i < STATE_DIM * s * t {
            return Some(i / (STATE_DIM * s));
        }
        i -= STATE_DIM * s * t;
        if i < ACCEL_DIM * s * t {
            return Some(i / (ACCEL_DIM * s));
        }
        i -= ACCEL_DIM * s * t;
        if i < 2 * p * t {
            return Some(i / (2 * p));
        }
        i -= 2 * p * t;
        if i < a * t {
            return Some(i / a);
        }
        i -= a * t;
        Some(i / k)
    }

    /// Signal channel of a variable: the (family, entity, component) series it
    /// belongs to across knots. The timestep is channel 0.
    pub fn channel(&self, idx: usize) -> usize {
        if idx == 0 {
            return 0;
        }
        let (s, p, a, t) = (self.segments, self.pins, self.actuators, self.knots);
        let mut i = idx - 1;
        if i < STATE_DIM * s * t {
            return 1 + i % (STATE_DIM * s);
        }
        i -= STATE_DIM * s * t;
        if i < ACCEL_DIM * s * t {
            return 1 + STATE_DIM * s + i % (ACCEL_DIM * s);
        }
        i -= ACCEL_DIM * s * t;
        if i < 2 * p * t {
            return 1 + 9 * s + i % (2 * p);
        }
        i -= 2 * p * t;
        if i < a * t {
            return 1 + 9 * s + 2 * p + i % a;
        }
        i -= a * t;
        1 + 9 * s + 2 * p + a + i % self.kneelocks
    }

    pub fn channel_count(&self) -> usize {
        1 + 9 * self.segments + 2 * self.pins + self.actuators + self.kneelocks
    }

    pub fn channel_label(&self, ch: usize) -> String {
        if ch == 0 {
            return "dt".into();
        }
        let (s, p, a) = (self.segments, self.pins, self.actuators);
        let mut c = ch - 1;
        const STATE_NAMES: [&str; 6] = ["x", "z", "theta", "xd", "zd", "thetad"];
        const ACCEL_NAMES: [&str; 3] = ["xdd", "zdd", "thetadd"];
        if c < STATE_DIM * s {
            return format!("seg{}.{}", c / STATE_DIM, STATE_NAMES[c % STATE_DIM]);
        }
        c -= STATE_DIM * s;
        if c < ACCEL_DIM * s {
            return format!("seg{}.{}", c / ACCEL_DIM, ACCEL_NAMES[c % ACCEL_DIM]);
        }
        c -= ACCEL_DIM * s;
        if c < 2 * p {
            return format!("pin{}.{}", c / 2, if c % 2 == 0 { "fx" } else { "fz" });
        }
        c -= 2 * p;
        if c < a {
            return format!("torque{c}");
        }
        format!("kneelock{}", c - a)
    }
}

/// Variable space of an NLP: a trajectory layout or a plain flat vector.
#[derive(Clone, Debug)]
pub enum VarSpace {
    Trajectory(DecisionLayout),
    Flat { dim: usize },
}

impl VarSpace {
    pub fn dim(&self) -> usize {
        match self {
            VarSpace::Trajectory(l) => l.dim(),
            VarSpace::Flat { dim } => *dim,
        }
    }

    pub fn anchor(&self, idx: usize) -> Option<usize> {
        match self {
            VarSpace::Trajectory(l) => l.anchor(idx),
            VarSpace::Flat { .. } => None,
        }
    }

    pub fn channel(&self, idx: usize) -> usize {
        match self {
            VarSpace::Trajectory(l) => l.channel(idx),
            VarSpace::Flat { .. } => idx,
        }
    }

    pub fn channel_count(&self) -> usize {
        match self {
            VarSpace::Trajectory(l) => l.channel_count(),
            VarSpace::Flat { dim } => *dim,
        }
    }

    pub fn layout(&self) -> Option<&DecisionLayout> {
        match self {
            VarSpace::Trajectory(l) => Some(l),
            VarSpace::Flat { .. } => None,
        }
    }
}

/// Sparse constrained NLP: `min f(x)  s.t.  ce(x) = 0, c(x) <= 0, l <= x <= u`.
#[derive(Clone, Debug)]
pub struct NlpProblem {
    pub space: VarSpace,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eq: Vec<ConstraintBlock>,
    pub ineq: Vec<ConstraintBlock>,
    pub objective: Objective,
    eq_offsets: Vec<usize>,
    ineq_offsets: Vec<usize>,
    num_eq: usize,
    num_ineq: usize,
}

impl NlpProblem {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn num_eq(&self) -> usize {
        self.num_eq
    }

    pub fn num_ineq(&self) -> usize {
        self.num_ineq
    }

    pub fn eval_eq(&self, x: &[f64], out: &mut [f64]) {
        for (block, &off) in self.eq.iter().zip(self.eq_offsets.iter()) {
            block.values(x, &mut out[off..off + block.rows()]);
        }
    }

    pub fn eval_ineq(&self, x: &[f64], out: &mut [f64]) {
        for (block, &off) in self.ineq.iter().zip(self.ineq_offsets.iter()) {
            block.values(x, &mut out[off..off + block.rows()]);
        }
    }

    pub fn cost(&self, x: &[f64]) -> f64 {
        self.objective.value(x)
    }

    pub fn cost_gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.objective.gradient(x, grad);
    }

    /// Max violation over equalities, inequalities, and variable bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut ce = vec![0.0; self.num_eq];
        let mut ci = vec![0.0; self.num_ineq];
        self.eval_eq(x, &mut ce);
        self.eval_ineq(x, &mut ci);
        let mut v: f64 = 0.0;
        for r in &ce {
            v = v.max(r.abs());
        }
        for r in &ci {
            v = v.max(*r);
        }
        for i in 0..self.dim() {
            v = v.max(self.lower[i] - x[i]).max(x[i] - self.upper[i]);
        }
        v
    }

    /// Constraint Jacobian as triplets. Row indices: equalities first
    /// (`0..num_eq`), then inequalities.
    pub fn jacobian(&self, x: &[f64]) -> SparseTriplets {
        let mut entries = Vec::new();
        let mut jac = crate::ad::LocalJacobian::default();
        for (block, &off) in self.eq.iter().zip(self.eq_offsets.iter()) {
            block.jacobian(x, &mut jac);
            for r in 0..jac.rows {
                for c in 0..jac.arity {
                    entries.push((off + r, block.vars[c], jac.get(r, c)));
                }
            }
        }
        for (block, &off) in self.ineq.iter().zip(self.ineq_offsets.iter()) {
            block.jacobian(x, &mut jac);
            for r in 0..jac.rows {
                for c in 0..jac.arity {
                    entries.push((self.num_eq + off + r, block.vars[c], jac.get(r, c)));
                }
            }
        }
        SparseTriplets { rows: self.num_eq + self.num_ineq, cols: self.dim(), entries }
    }

    /// Objective gradient (the cost side of the derivative contract).
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.cost_gradient(x, &mut g);
        g
    }

    /// Hessian of `obj_scale * f + y_eq . ce + y_ineq . c` via `sink`.
    pub fn lagrangian_hessian(
        &self,
        x: &[f64],
        obj_scale: f64,
        y_eq: &[f64],
        y_ineq: &[f64],
        sink: &mut dyn FnMut(usize, usize, f64),
    ) {
        self.objective.add_hessian(x, obj_scale, sink);
        for (block, &off) in self.eq.iter().zip(self.eq_offsets.iter()) {
            block.hessian(x, &y_eq[off..off + block.rows()], sink);
        }
        for (block, &off) in self.ineq.iter().zip(self.ineq_offsets.iter()) {
            block.hessian(x, &y_ineq[off..off + block.rows()], sink);
        }
    }

    pub fn hessian_pattern(&self, sink: &mut dyn FnMut(usize, usize)) {
        self.objective.hessian_pattern(self.dim(), sink);
        for block in self.eq.iter().chain(self.ineq.iter()) {
            block.hessian_pattern(sink);
        }
    }

    /// Per-row labels, equalities first.
    pub fn row_labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.num_eq + self.num_ineq);
        for block in self.eq.iter().chain(self.ineq.iter()) {
            for r in 0..block.rows() {
                labels.push(if block.rows() == 1 {
                    block.label.clone()
                } else {
                    format!("{}#{r}", block.label)
                });
            }
        }
        labels
    }

    /// Anchor knot per constraint row (equalities first), for ordering.
    pub fn row_anchors(&self) -> Vec<Option<usize>> {
        let mut anchors = Vec::with_capacity(self.num_eq + self.num_ineq);
        for block in self.eq.iter().chain(self.ineq.iter()) {
            for _ in 0..block.rows() {
                anchors.push(block.anchor);
            }
        }
        anchors
    }

    pub fn census(&self) -> Census {
        let mut jac_nnz = 0;
        for block in self.eq.iter().chain(self.ineq.iter()) {
            jac_nnz += block.rows() * block.arity();
        }
        let mut hess_nnz = 0;
        self.hessian_pattern(&mut |_, _| hess_nnz += 1);
        Census {
            dim: self.dim(),
            num_eq: self.num_eq,
            num_ineq: self.num_ineq,
            jacobian_nnz: jac_nnz,
            hessian_nnz: hess_nnz,
            bounded_below: self.lower.iter().filter(|v| v.is_finite()).count(),
            bounded_above: self.upper.iter().filter(|v| v.is_finite()).count(),
        }
    }
}

/// Structural and dimensional summary of an NLP.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub dim: usize,
    pub num_eq: usize,
    pub num_ineq: usize,
    pub jacobian_nnz: usize,
    pub hessian_nnz: usize,
    pub bounded_below: usize,
    pub bounded_above: usize,
}

/// Sparse matrix in triplet form.
#[derive(Clone, Debug)]
pub struct SparseTriplets {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseTriplets {
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.cols]; self.rows];
        for &(r, c, v) in &self.entries {
            m[r][c] += v;
        }
        m
    }
}

/// Incremental NLP assembly.
pub struct NlpBuilder {
    pub model: ModelSpec,
    layout: DecisionLayout,
    lower: Vec<f64>,
    upper: Vec<f64>,
    eq: Vec<ConstraintBlock>,
    ineq: Vec<ConstraintBlock>,
    skip_final_pin_position: Vec<bool>,
}

impl NlpBuilder {
    pub fn new(model: &ModelSpec, knots: usize) -> Result<Self> {
        model.validate()?;
        if knots < 5 || knots % 2 == 0 {
            return Err(Error::Construction {
                block: "layout".into(),
                reason: format!("knot count {knots} must be odd and >= 5"),
            });
        }
        let layout = DecisionLayout::for_model(model, knots);
        let dim = layout.dim();
        let mut lower = vec![f64::NEG_INFINITY; dim];
        let mut upper = vec![f64::INFINITY; dim];
        lower[layout.delta_t()] = DT_MIN;
        upper[layout.delta_t()] = DT_MAX;
        let skip = vec![false; model.pins.len()];
        Ok(NlpBuilder {
            model: model.clone(),
            layout,
            lower,
            upper,
            eq: Vec::new(),
            ineq: Vec::new(),
            skip_final_pin_position: skip,
        })
    }

    /// Omit the position-match rows of `pin` at the final knot. Used when a
    /// task's cyclicity constraints already imply them; keeping such rows
    /// would leave the Jacobian structurally rank-deficient.
    pub fn omit_final_pin_position(&mut self, pin: usize) {
        self.skip_final_pin_position[pin] = true;
    }

    pub fn layout(&self) -> &DecisionLayout {
        &self.layout
    }

    pub fn push_eq(&mut self, block: ConstraintBlock) {
        self.eq.push(block);
    }

    pub fn push_ineq(&mut self, block: ConstraintBlock) {
        self.ineq.push(block);
    }

    pub fn set_lower(&mut self, var: usize, v: f64) {
        self.lower[var] = v;
    }

    pub fn set_upper(&mut self, var: usize, v: f64) {
        self.upper[var] = v;
    }

    /// Newton-Euler rows at every knot, Hermite-Simpson defects over every
    /// interval, pin position matching at every knot, and pin velocity
    /// matching at the final knot.
    pub fn install_dynamics(&mut self) {
        let l = self.layout;
        let t_count = l.knots;
        let model = self.model.clone();

        // Per-segment load tables.
        let mut actuator_of_pin = vec![None; model.pins.len()];
        let mut kneelock_of_pin = vec![None; model.pins.len()];
        let mut next_act = 0;
        let mut next_kl = 0;
        for (p, pin) in model.pins.iter().enumerate() {
            if pin.actuated {
                actuator_of_pin[p] = Some(next_act);
                next_act += 1;
            }
            if pin.has_kneelock {
                kneelock_of_pin[p] = Some(next_kl);
                next_kl += 1;
            }
        }

        for t in 0..t_count {
            for (s, params) in model.segments.iter().enumerate() {
                let mut vars = vec![
                    l.state(s, t, C_TH),
                    l.state(s, t, C_THD),
                    l.accel(s, t, 0),
                    l.accel(s, t, 1),
                    l.accel(s, t, 2),
                ];
                let mut pin_loads = Vec::new();
                let mut torque_signs = Vec::new();
                for (p, pin) in model.pins.iter().enumerate() {
                    let side = |side: &PinSide, sign: f64| match side {
                        PinSide::Segment { segment, offset } if *segment == s => {
                            Some(PinLoad { sign, offset: *offset })
                        }
                        _ => None,
                    };
                    if let Some(load) = side(&pin.side_a, 1.0).or_else(|| side(&pin.side_b, -1.0)) {
                        vars.push(l.pin_force(p, t, 0));
                        vars.push(l.pin_force(p, t, 1));
                        pin_loads.push(load);
                    }
                }
                // Actuator torque drives side B against side A; kneelock
                // pushes the joint angle (theta_a - theta_b) positive.
                for (p, pin) in model.pins.iter().enumerate() {
                    if let Some(a_idx) = actuator_of_pin[p] {
                        let sign = match (&pin.side_a, &pin.side_b) {
                            (PinSide::Segment { segment, .. }, _) if *segment == s => Some(-1.0),
                            (_, PinSide::Segment { segment, .. }) if *segment == s => Some(1.0),
                            _ => None,
                        };
                        if let Some(sign) = sign {
                            vars.push(l.torque(a_idx, t));
                            torque_signs.push(sign);
                        }
                    }
                }
                for (p, pin) in model.pins.iter().enumerate() {
                    if let Some(k_idx) = kneelock_of_pin[p] {
                        let sign = match (&pin.side_a, &pin.side_b) {
                            (PinSide::Segment { segment, .. }, _) if *segment == s => Some(1.0),
                            (_, PinSide::Segment { segment, .. }) if *segment == s => Some(-1.0),
                            _ => None,
                        };
                        if let Some(sign) = sign {
                            vars.push(l.kneelock(k_idx, t));
                            torque_signs.push(sign);
                        }
                    }
                }
                self.eq.push(ConstraintBlock::new(
                    vars,
                    BlockKind::NewtonEuler(NewtonEulerData {
                        params: *params,
                        gravity: model.gravity,
                        pin_loads,
                        torque_signs,
                    }),
                    Some(t),
                    format!("dynamics[s{s}.t{t}]"),
                ));
            }
        }

        for s in 0..model.segments.len() {
            for c in 0..3 {
                let mut t = 0;
                while t + 2 < t_count {
                    let vars = vec![
                        l.state(s, t, c),
                        l.state(s, t, c + 3),
                        l.accel(s, t, c),
                        l.state(s, t + 1, c),
                        l.state(s, t + 1, c + 3),
                        l.accel(s, t + 1, c),
                        l.state(s, t + 2, c),
                        l.state(s, t + 2, c + 3),
                        l.accel(s, t + 2, c),
                        l.delta_t(),
                    ];
                    self.eq.push(ConstraintBlock::new(
                        vars,
                        BlockKind::SimpsonCoord,
                        Some(t + 1),
                        format!("defect[s{s}.c{c}.t{t}]"),
                    ));
                    t += 2;
                }
            }
        }

        for (p, pin) in model.pins.iter().enumerate() {
            for t in 0..t_count {
                if t == t_count - 1 && self.skip_final_pin_position[p] {
                    continue;
                }
                let (vars, a, b) = pin_position_sides(&l, pin, t);
                self.eq.push(ConstraintBlock::new(
                    vars,
                    BlockKind::PinPosition { a, b },
                    Some(t),
                    format!("pin_pos[p{p}.t{t}]"),
                ));
            }
            let t = t_count - 1;
            let (vars, a, b) = pin_velocity_sides(&l, pin, t);
            self.eq.push(ConstraintBlock::new(
                vars,
                BlockKind::PinVelocity { a, b },
                Some(t),
                format!("pin_vel[p{p}.t{t}]"),
            ));
        }
    }

    pub fn finish(self, objective: Objective) -> Result<NlpProblem> {
        let dim = self.layout.dim();
        let space = VarSpace::Trajectory(self.layout);
        self.finish_with_space(space, dim, objective)
    }

    fn finish_with_space(self, space: VarSpace, dim: usize, objective: Objective) -> Result<NlpProblem> {
        if let Objective::WeightedBasis { basis, weights } = &objective {
            if basis.len() != weights.len() {
                return Err(Error::Construction {
                    block: "objective".into(),
                    reason: format!(
                        "{} weights supplied for a basis of {} features",
                        weights.len(),
                        basis.len()
                    ),
                });
            }
        }
        validate_blocks(&self.eq, dim)?;
        validate_blocks(&self.ineq, dim)?;
        Ok(assemble(space, self.lower, self.upper, self.eq, self.ineq, objective))
    }
}

fn validate_blocks(blocks: &[ConstraintBlock], dim: usize) -> Result<()> {
    for block in blocks {
        if block.arity() > crate::ad::MAX_ARITY {
            return Err(Error::Construction {
                block: block.label.clone(),
                reason: format!("arity {} exceeds {}", block.arity(), crate::ad::MAX_ARITY),
            });
        }
        if block.rows() == 0 || block.rows() > blocks::MAX_BLOCK_ROWS {
            return Err(Error::Construction {
                block: block.label.clone(),
                reason: format!("row count {} out of range", block.rows()),
            });
        }
        if let Some(&bad) = block.vars.iter().find(|&&v| v >= dim) {
            return Err(Error::Construction {
                block: block.label.clone(),
                reason: format!("variable index {bad} out of range (dim {dim})"),
            });
        }
    }
    Ok(())
}

fn assemble(
    space: VarSpace,
    lower: Vec<f64>,
    upper: Vec<f64>,
    eq: Vec<ConstraintBlock>,
    ineq: Vec<ConstraintBlock>,
    objective: Objective,
) -> NlpProblem {
    let mut eq_offsets = Vec::with_capacity(eq.len());
    let mut num_eq = 0;
    for b in &eq {
        eq_offsets.push(num_eq);
        num_eq += b.rows();
    }
    let mut ineq_offsets = Vec::with_capacity(ineq.len());
    let mut num_ineq = 0;
    for b in &ineq {
        ineq_offsets.push(num_ineq);
        num_ineq += b.rows();
    }
    NlpProblem { space, lower, upper, eq, ineq, objective, eq_offsets, ineq_offsets, num_eq, num_ineq }
}

/// Assemble a flat (non-trajectory) NLP from explicit parts. Used for the
/// weight-recovery problem and for small test problems.
pub fn flat_nlp(
    dim: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    eq: Vec<ConstraintBlock>,
    ineq: Vec<ConstraintBlock>,
    objective: Objective,
) -> Result<NlpProblem> {
    validate_blocks(&eq, dim)?;
    validate_blocks(&ineq, dim)?;
    if lower.len() != dim || upper.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "bounds of length {}/{} for dimension {dim}",
            lower.len(),
            upper.len()
        )));
    }
    Ok(assemble(VarSpace::Flat { dim }, lower, upper, eq, ineq, objective))
}

fn pin_position_sides(
    l: &DecisionLayout,
    pin: &crate::dynamics::PinJointSpec,
    t: usize,
) -> (Vec<usize>, AttachSide, AttachSide) {
    let mut vars = Vec::new();
    let mut side = |s: &PinSide| match s {
        PinSide::Segment { segment, offset } => {
            vars.extend([l.state(*segment, t, C_X), l.state(*segment, t, C_Z), l.state(*segment, t, C_TH)]);
            AttachSide::Segment { offset: *offset }
        }
        PinSide::World { anchor } => AttachSide::World { anchor: *anchor },
    };
    let a = side(&pin.side_a);
    let b = side(&pin.side_b);
    (vars, a, b)
}

fn pin_velocity_sides(
    l: &DecisionLayout,
    pin: &crate::dynamics::PinJointSpec,
    t: usize,
) -> (Vec<usize>, AttachSide, AttachSide) {
    let mut vars = Vec::new();
    let mut side = |s: &PinSide| match s {
        PinSide::Segment { segment, offset } => {
            vars.extend([
                l.state(*segment, t, C_TH),
                l.state(*segment, t, C_THD),
                l.state(*segment, t, C_XD),
                l.state(*segment, t, C_ZD),
            ]);
            AttachSide::Segment { offset: *offset }
        }
        PinSide::World { anchor } => AttachSide::World { anchor: *anchor },
    };
    let a = side(&pin.side_a);
    let b = side(&pin.side_b);
    (vars, a, b)
}

/// Task-specific constraints installed on top of the base physics.
pub trait TaskConstraints {
    fn install(&self, builder: &mut NlpBuilder) -> Result<()>;
}

/// No task constraints (free linkage).
pub struct NoTask;

impl TaskConstraints for NoTask {
    fn install(&self, _builder: &mut NlpBuilder) -> Result<()> {
        Ok(())
    }
}

/// Build the full NLP: physics from the model, task constraints, and the
/// weighted cost.
pub fn build_nlp(
    model: &ModelSpec,
    task: &dyn TaskConstraints,
    basis: CostBasis,
    weights: &WeightVector,
    knots: usize,
) -> Result<NlpProblem> {
    let mut builder = NlpBuilder::new(model, knots)?;
    // Task first: it may mark physics rows (final-knot pin matches) as
    // implied by its own cyclicity constraints.
    task.install(&mut builder)?;
    builder.install_dynamics();
    builder.finish(Objective::WeightedBasis { basis, weights: weights.0.clone() })
}

/// Position-match residuals at every knot plus the final-knot velocity-match
/// residual for one pin, recomputed directly from the kinematic maps. This is
/// the reference implementation the NLP blocks are tested against.
pub fn pin_constraints(
    pin: &crate::dynamics::PinJointSpec,
    states: &[Vec<SegmentState>],
) -> (Vec<[f64; 2]>, [f64; 2]) {
    let point = |side: &PinSide, t: usize| -> [f64; 2] {
        match side {
            PinSide::Segment { segment, offset } => {
                crate::dynamics::attachment_position(&states[*segment][t], *offset)
            }
            PinSide::World { anchor } => *anchor,
        }
    };
    let vel = |side: &PinSide, t: usize| -> [f64; 2] {
        match side {
            PinSide::Segment { segment, offset } => {
                crate::dynamics::attachment_velocity(&states[*segment][t], *offset)
            }
            PinSide::World { .. } => [0.0, 0.0],
        }
    };
    let knots = states.iter().map(|s| s.len()).min().unwrap_or(0);
    let mut pos = Vec::with_capacity(knots);
    for t in 0..knots {
        let pa = point(&pin.side_a, t);
        let pb = point(&pin.side_b, t);
        pos.push([pa[0] - pb[0], pa[1] - pb[1]]);
    }
    let t = knots - 1;
    let va = vel(&pin.side_a, t);
    let vb = vel(&pin.side_b, t);
    (pos, [va[0] - vb[0], va[1] - vb[1]])
}

/// Result of the finite-difference derivative audit.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DerivativeAudit {
    pub max_rel_jacobian: f64,
    pub max_rel_gradient: f64,
}

/// Compare the analytic constraint Jacobian and cost gradient against central
/// finite differences at `x`. Relative error uses `|a - fd| / max(1, |a|, |fd|)`.
pub fn check_derivatives(nlp: &NlpProblem, x: &[f64]) -> DerivativeAudit {
    let n = nlp.dim();
    let m = nlp.num_eq() + nlp.num_ineq();
    let eval_all = |x: &[f64], out: &mut [f64]| {
        let (eqs, ineqs) = out.split_at_mut(nlp.num_eq());
        nlp.eval_eq(x, eqs);
        nlp.eval_ineq(x, ineqs);
    };

    let analytic = nlp.jacobian(x).to_dense();
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    let mut max_rel_jacobian: f64 = 0.0;
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        let orig = xp[j];
        xp[j] = orig + h;
        eval_all(&xp, &mut fp);
        xp[j] = orig - h;
        eval_all(&xp, &mut fm);
        xp[j] = orig;
        for i in 0..m {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            let a = analytic[i][j];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1.0);
            max_rel_jacobian = max_rel_jacobian.max(rel);
        }
    }

    let grad = nlp.gradient(x);
    let mut max_rel_gradient: f64 = 0.0;
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        let orig = xp[j];
        xp[j] = orig + h;
        let cp = nlp.cost(&xp);
        xp[j] = orig - h;
        let cm = nlp.cost(&xp);
        xp[j] = orig;
        let fd = (cp - cm) / (2.0 * h);
        let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1.0);
        max_rel_gradient = max_rel_gradient.max(rel);
    }

    DerivativeAudit { max_rel_jacobian, max_rel_gradient }
}
