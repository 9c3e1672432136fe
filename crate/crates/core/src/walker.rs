//! The five-segment planar walker: a torso and two thigh-shank legs joined by
//! actuated hips and knees, walking one periodic step with the stance foot
//! pinned to the ground.
//!
//! Conventions: leg A is the stance leg (foot pinned at the origin), leg B is
//! the swing leg (foot touches down at step length L at the final knot).
//! Segment angles are measured counterclockwise from vertical; each segment's
//! reference point is its proximal joint and the segment body extends along
//! the local -z axis (the torso extends along +z). The knee angle
//! `q = theta_thigh - theta_shank` is zero at full extension and positive in
//! flexion; hyperextension (`q < 0`) is forbidden by the knee stop, and the
//! kneelock torque is a unilateral, non-energy-adding holding torque active
//! only near full extension.

use crate::dynamics::{ModelSpec, PinForce, PinJointSpec, PinSide, SegmentAccel, SegmentParams, SegmentState};
use crate::transcription::{
    blocks::{BlockKind, ConstraintBlock},
    cost::{CostBasis, CostTerm, Feature, TermKind, WeightVector},
    DecisionLayout, NlpBuilder, NlpProblem, TaskConstraints, C_TH, C_THD, C_X, C_XD, C_Z, C_ZD,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const TORSO: usize = 0;
pub const THIGH_A: usize = 1;
pub const SHANK_A: usize = 2;
pub const THIGH_B: usize = 3;
pub const SHANK_B: usize = 4;

pub const PIN_HIP_A: usize = 0;
pub const PIN_KNEE_A: usize = 1;
pub const PIN_HIP_B: usize = 2;
pub const PIN_KNEE_B: usize = 3;
pub const PIN_GROUND: usize = 4;

pub const ACT_HIP_A: usize = 0;
pub const ACT_KNEE_A: usize = 1;
pub const ACT_HIP_B: usize = 2;
pub const ACT_KNEE_B: usize = 3;

pub const KNEELOCK_A: usize = 0;
pub const KNEELOCK_B: usize = 1;

/// Activation slack for the kneelock torque: `tau * q <= KNEELOCK_SLACK`.
pub const KNEELOCK_SLACK: f64 = 1e-4;

/// Relaxation of the kneelock power bound `tau * qd <= KNEELOCK_POWER_SLACK`.
/// The exact bound (zero) is a complementarity-type constraint whose gradient
/// vanishes at `tau = 0`; a strictly positive slack keeps the feasible set
/// regular, like the activation gate.
pub const KNEELOCK_POWER_SLACK: f64 = 1e-5;

/// Desired step length used by the initial guess and the step-length
/// distractor cost.
pub const NOMINAL_STEP_LENGTH: f64 = 0.3;

/// Relative-weight scale of the torque-rate cost.
pub const TORQUE_RATE_SCALE: f64 = 1e-3;

/// Segment parameters of the walker; both legs share the thigh and shank
/// parameters, so left/right symmetry holds by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkerParams {
    pub torso: SegmentParams,
    pub thigh: SegmentParams,
    pub shank: SegmentParams,
}

impl Default for WalkerParams {
    fn default() -> Self {
        // Anthropomorphic mass fractions with uniform-rod inertias; torso
        // extends upward from the hip.
        let torso_mass = 0.678;
        let torso_len = 0.5;
        WalkerParams {
            torso: SegmentParams {
                mass: torso_mass,
                inertia: torso_mass * torso_len * torso_len / 12.0,
                length: torso_len,
                com_offset: [0.0, torso_len / 2.0],
            },
            thigh: SegmentParams::uniform_rod(0.100, 0.5),
            shank: SegmentParams::uniform_rod(0.061, 0.5),
        }
    }
}

impl WalkerParams {
    pub fn total_mass(&self) -> f64 {
        self.torso.mass + 2.0 * self.thigh.mass + 2.0 * self.shank.mass
    }

    pub fn leg_length(&self) -> f64 {
        self.thigh.length + self.shank.length
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.torso, &self.thigh, &self.shank] {
            p.validate()?;
        }
        if (self.total_mass() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!(
                "walker total mass {} must be 1",
                self.total_mass()
            )));
        }
        Ok(())
    }

    /// Segment and pin table of the one-step model.
    pub fn to_model_spec(&self) -> ModelSpec {
        let seg = |s: usize| PinSide::Segment { segment: s, offset: [0.0, 0.0] };
        let seg_at = |s: usize, z: f64| PinSide::Segment { segment: s, offset: [0.0, z] };
        let hip = |thigh: usize| PinJointSpec {
            side_a: seg(TORSO),
            side_b: seg(thigh),
            actuated: true,
            has_kneelock: false,
            joint_limit: None,
        };
        let knee = |thigh: usize, shank: usize| PinJointSpec {
            side_a: seg_at(thigh, -self.thigh.length),
            side_b: seg(shank),
            actuated: true,
            has_kneelock: true,
            joint_limit: Some(0.0),
        };
        ModelSpec {
            segments: vec![self.torso, self.thigh, self.shank, self.thigh, self.shank],
            pins: vec![
                hip(THIGH_A),
                knee(THIGH_A, SHANK_A),
                hip(THIGH_B),
                knee(THIGH_B, SHANK_B),
                PinJointSpec {
                    side_a: seg_at(SHANK_A, -self.shank.length),
                    side_b: PinSide::World { anchor: [0.0, 0.0] },
                    actuated: false,
                    has_kneelock: false,
                    joint_limit: None,
                },
            ],
            gravity: 1.0,
        }
    }
}

/// Gait task: walk one leg-swapped periodic step at a given average speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaitTask {
    /// Average forward speed, nondimensional.
    pub speed: f64,
}

impl Default for GaitTask {
    fn default() -> Self {
        GaitTask { speed: 0.4 }
    }
}

impl GaitTask {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0) {
            return Err(Error::Config(format!("task speed {} must be > 0", self.speed)));
        }
        Ok(())
    }
}

/// A full collocation trajectory: one value per decision variable, organized
/// by family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub delta_t: f64,
    /// `[segment][knot]`
    pub states: Vec<Vec<SegmentState>>,
    pub accels: Vec<Vec<SegmentAccel>>,
    /// `[pin][knot]`
    pub pin_forces: Vec<Vec<PinForce>>,
    /// `[actuator][knot]`
    pub torques: Vec<Vec<f64>>,
    /// `[kneelock][knot]`
    pub kneelock_torques: Vec<Vec<f64>>,
}

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

impl Trajectory {
    pub fn knots(&self) -> usize {
        self.states.first().map(|s| s.len()).unwrap_or(0)
    }

    pub fn matches_layout(&self, layout: &DecisionLayout) -> bool {
        self.states.len() == layout.segments
            && self.accels.len() == layout.segments
            && self.pin_forces.len() == layout.pins
            && self.torques.len() == layout.actuators
            && self.kneelock_torques.len() == layout.kneelocks
            && self
                .states
                .iter()
                .map(|v| v.len())
                .chain(self.accels.iter().map(|v| v.len()))
                .chain(self.pin_forces.iter().map(|v| v.len()))
                .chain(self.torques.iter().map(|v| v.len()))
                .chain(self.kneelock_torques.iter().map(|v| v.len()))
                .all(|l| l == layout.knots)
    }

    pub fn to_decision_vec(&self, layout: &DecisionLayout) -> Result<Vec<f64>> {
        if !self.matches_layout(layout) {
            return Err(Error::DimensionMismatch(format!(
                "trajectory does not match layout (S={}, P={}, A={}, K={}, T={})",
                layout.segments, layout.pins, layout.actuators, layout.kneelocks, layout.knots
            )));
        }
        let mut x = vec![0.0; layout.dim()];
        x[layout.delta_t()] = self.delta_t;
        for s in 0..layout.segments {
            for t in 0..layout.knots {
                let st = self.states[s][t].as_array();
                for c in 0..6 {
                    x[layout.state(s, t, c)] = st[c];
                }
                let a = &self.accels[s][t];
                x[layout.accel(s, t, 0)] = a.xdd;
                x[layout.accel(s, t, 1)] = a.zdd;
                x[layout.accel(s, t, 2)] = a.thetadd;
            }
        }
        for p in 0..layout.pins {
            for t in 0..layout.knots {
                x[layout.pin_force(p, t, 0)] = self.pin_forces[p][t].fx;
                x[layout.pin_force(p, t, 1)] = self.pin_forces[p][t].fz;
            }
        }
        for a in 0..layout.actuators {
            for t in 0..layout.knots {
                x[layout.torque(a, t)] = self.torques[a][t];
            }
        }
        for k in 0..layout.kneelocks {
            for t in 0..layout.knots {
                x[layout.kneelock(k, t)] = self.kneelock_torques[k][t];
            }
        }
        Ok(x)
    }

    pub fn from_decision_vec(layout: &DecisionLayout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.dim() {
            return Err(Error::DimensionMismatch(format!(
                "decision vector of length {} for layout dimension {}",
                x.len(),
                layout.dim()
            )));
        }
        let t_count = layout.knots;
        let mut states = vec![vec![SegmentState::default(); t_count]; layout.segments];
        let mut accels = vec![vec![SegmentAccel::default(); t_count]; layout.segments];
        for s in 0..layout.segments {
            for t in 0..t_count {
                let mut arr = [0.0; 6];
                for c in 0..6 {
                    arr[c] = x[layout.state(s, t, c)];
                }
                states[s][t] = SegmentState::from_array(arr);
                accels[s][t] = SegmentAccel {
                    xdd: x[layout.accel(s, t, 0)],
                    zdd: x[layout.accel(s, t, 1)],
                    thetadd: x[layout.accel(s, t, 2)],
                };
            }
        }
        let mut pin_forces = vec![vec![PinForce::default(); t_count]; layout.pins];
        for p in 0..layout.pins {
            for t in 0..t_count {
                pin_forces[p][t] =
                    PinForce { fx: x[layout.pin_force(p, t, 0)], fz: x[layout.pin_force(p, t, 1)] };
            }
        }
        let torques =
            (0..layout.actuators).map(|a| (0..t_count).map(|t| x[layout.torque(a, t)]).collect()).collect();
        let kneelock_torques =
            (0..layout.kneelocks).map(|k| (0..t_count).map(|t| x[layout.kneelock(k, t)]).collect()).collect();
        Ok(Trajectory {
            schema_version: TRAJECTORY_SCHEMA_VERSION,
            delta_t: x[layout.delta_t()],
            states,
            accels,
            pin_forces,
            torques,
            kneelock_torques,
        })
    }

    /// World position of the swing foot at knot `t`.
    pub fn swing_foot(&self, params: &WalkerParams, t: usize) -> [f64; 2] {
        crate::dynamics::attachment_position(&self.states[SHANK_B][t], [0.0, -params.shank.length])
    }
}

/// Integrated squared hip torque: `sum_t (tau_hipA^2 + tau_hipB^2) * dt`.
pub fn cost_hip_torque(traj: &Trajectory) -> f64 {
    sum_torque_squared(traj, ACT_HIP_A, ACT_HIP_B)
}

/// Integrated squared knee torque (kneelock torques carry no actuation cost
/// and are excluded).
pub fn cost_knee_torque(traj: &Trajectory) -> f64 {
    sum_torque_squared(traj, ACT_KNEE_A, ACT_KNEE_B)
}

fn sum_torque_squared(traj: &Trajectory, a: usize, b: usize) -> f64 {
    let mut acc = 0.0;
    for t in 0..traj.knots() {
        acc += (traj.torques[a][t].powi(2) + traj.torques[b][t].powi(2)) * traj.delta_t;
    }
    acc
}

/// Integrated squared torque rate over all four actuators, scaled by
/// [`TORQUE_RATE_SCALE`]; the final knot's torques appear only through the
/// difference at `T-1`.
pub fn cost_torque_rate(traj: &Trajectory) -> f64 {
    let mut acc = 0.0;
    for j in 0..traj.torques.len() {
        for t in 0..traj.knots() - 1 {
            let d = (traj.torques[j][t + 1] - traj.torques[j][t]) / traj.delta_t;
            acc += d * d * traj.delta_t;
        }
    }
    TORQUE_RATE_SCALE * acc
}

/// Distractor costs: integrated squared torso angle, squared step-length
/// error from [`NOMINAL_STEP_LENGTH`], and mean swing-foot height.
pub fn distractor_costs(params: &WalkerParams, traj: &Trajectory) -> (f64, f64, f64) {
    let t_count = traj.knots();
    let mut torso = 0.0;
    for t in 0..t_count {
        torso += traj.states[TORSO][t].theta.powi(2) * traj.delta_t;
    }
    let step = traj.swing_foot(params, t_count - 1)[0];
    let step_err = (step - NOMINAL_STEP_LENGTH).powi(2);
    let mut height = 0.0;
    for t in 0..t_count {
        height += traj.swing_foot(params, t)[1];
    }
    (torso, step_err, height / t_count as f64)
}

/// Which cost components are in play.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSelection {
    /// (hip torque, knee torque, torque rate)
    Nominal,
    /// Nominal plus (torso angle, step-length error, foot height).
    WithDistractors,
}

impl BasisSelection {
    pub fn len(&self) -> usize {
        match self {
            BasisSelection::Nominal => 3,
            BasisSelection::WithDistractors => 6,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Build the cost basis over a walker layout.
pub fn cost_basis(params: &WalkerParams, layout: &DecisionLayout, selection: BasisSelection) -> CostBasis {
    let t_count = layout.knots;
    let dt = layout.delta_t();
    let torque_sq = |a: usize, b: usize| -> Feature {
        let terms = (0..t_count)
            .map(|t| CostTerm {
                vars: vec![layout.torque(a, t), layout.torque(b, t), dt],
                kind: TermKind::TorqueSquared,
            })
            .collect();
        Feature { name: String::new(), terms }
    };
    let mut hip = torque_sq(ACT_HIP_A, ACT_HIP_B);
    hip.name = "hip_torque".into();
    let mut knee = torque_sq(ACT_KNEE_A, ACT_KNEE_B);
    knee.name = "knee_torque".into();

    let rate_terms = (0..t_count - 1)
        .map(|t| {
            let mut vars = Vec::with_capacity(9);
            for j in 0..4 {
                vars.push(layout.torque(j, t));
                vars.push(layout.torque(j, t + 1));
            }
            vars.push(dt);
            CostTerm { vars, kind: TermKind::TorqueRate { scale: TORQUE_RATE_SCALE, pairs: 4 } }
        })
        .collect();
    let rate = Feature { name: "torque_rate".into(), terms: rate_terms };

    let mut features = vec![hip, knee, rate];
    if selection == BasisSelection::WithDistractors {
        let torso_terms = (0..t_count)
            .map(|t| CostTerm {
                vars: vec![layout.state(TORSO, t, C_TH), dt],
                kind: TermKind::SquareDt,
            })
            .collect();
        features.push(Feature { name: "torso_angle".into(), terms: torso_terms });

        let last = t_count - 1;
        features.push(Feature {
            name: "step_length_error".into(),
            terms: vec![CostTerm {
                vars: vec![layout.state(SHANK_B, last, C_X), layout.state(SHANK_B, last, C_TH)],
                kind: TermKind::StepLengthError {
                    offset_z: -params.shank.length,
                    target: NOMINAL_STEP_LENGTH,
                },
            }],
        });

        let height_terms = (0..t_count)
            .map(|t| CostTerm {
                vars: vec![layout.state(SHANK_B, t, C_Z), layout.state(SHANK_B, t, C_TH)],
                kind: TermKind::PointHeightMean {
                    offset_z: -params.shank.length,
                    scale: 1.0 / t_count as f64,
                },
            })
            .collect();
        features.push(Feature { name: "foot_height".into(), terms: height_terms });
    }
    CostBasis { features }
}

/// Gait task constraints: ground-contact unilaterality, knee stops, kneelock
/// gates, leg-swapped periodicity, touchdown, and average speed.
pub struct GaitConstraints {
    pub params: WalkerParams,
    pub task: GaitTask,
}

impl TaskConstraints for GaitConstraints {
    fn install(&self, b: &mut NlpBuilder) -> Result<()> {
        self.task.validate()?;
        let l = *b.layout();
        let t_count = l.knots;
        let last = t_count - 1;
        let speed = self.task.speed;

        // Ground may only push: vertical pin force on the stance foot >= 0.
        for t in 0..t_count {
            b.set_lower(l.pin_force(PIN_GROUND, t, 1), 0.0);
        }
        // Kneelock torques are unilateral.
        for k in 0..l.kneelocks {
            for t in 0..t_count {
                b.set_lower(l.kneelock(k, t), 0.0);
            }
        }

        // Knee stop and kneelock gates per knee per knot.
        let knees = [(THIGH_A, SHANK_A, KNEELOCK_A), (THIGH_B, SHANK_B, KNEELOCK_B)];
        for (thigh, shank, kl) in knees {
            for t in 0..t_count {
                b.push_ineq(ConstraintBlock::new(
                    vec![l.state(thigh, t, C_TH), l.state(shank, t, C_TH)],
                    BlockKind::Linear { coeffs: vec![vec![-1.0, 1.0]], rhs: vec![0.0] },
                    Some(t),
                    format!("knee_stop[k{kl}.t{t}]"),
                ));
                b.push_ineq(ConstraintBlock::new(
                    vec![l.kneelock(kl, t), l.state(thigh, t, C_TH), l.state(shank, t, C_TH)],
                    BlockKind::TorqueGate { slack: KNEELOCK_SLACK },
                    Some(t),
                    format!("kneelock_activation[k{kl}.t{t}]"),
                ));
                b.push_ineq(ConstraintBlock::new(
                    vec![l.kneelock(kl, t), l.state(thigh, t, C_THD), l.state(shank, t, C_THD)],
                    BlockKind::TorqueGate { slack: KNEELOCK_POWER_SLACK },
                    Some(t),
                    format!("kneelock_power[k{kl}.t{t}]"),
                ));
            }
        }

        // Leg-swapped periodicity: swap(s) at the last knot equals s at the
        // first, shifted forward by the step length v*(T-1)*dt in x. Composed
        // with the stance pin at the first knot this already places the swing
        // foot at (v*(T-1)*dt, 0) at touchdown, and makes the internal pin
        // matches at the final knot redundant; those rows are omitted to keep
        // the Jacobian full-rank.
        for pin in [PIN_HIP_A, PIN_KNEE_A, PIN_HIP_B, PIN_KNEE_B] {
            b.omit_final_pin_position(pin);
        }
        let swap = [TORSO, THIGH_B, SHANK_B, THIGH_A, SHANK_A];
        for s in 0..5 {
            let from = swap[s];
            let mut vars = Vec::with_capacity(13);
            for c in 0..6 {
                vars.push(l.state(from, last, c));
            }
            for c in 0..6 {
                vars.push(l.state(s, 0, c));
            }
            vars.push(l.delta_t());
            let mut coeffs = vec![vec![0.0; 13]; 6];
            for c in 0..6 {
                coeffs[c][c] = 1.0;
                coeffs[c][6 + c] = -1.0;
            }
            coeffs[C_X][12] = -speed * (t_count - 1) as f64;
            b.push_eq(ConstraintBlock::new(
                vars,
                BlockKind::Linear { coeffs, rhs: vec![0.0; 6] },
                None,
                format!("periodicity[s{s}]"),
            ));
        }
        Ok(())
    }
}

/// Build the one-step gait NLP for the walker.
pub fn build_gait_nlp(
    params: &WalkerParams,
    task: &GaitTask,
    selection: BasisSelection,
    weights: &WeightVector,
    knots: usize,
) -> Result<NlpProblem> {
    params.validate()?;
    let model = params.to_model_spec();
    let layout = DecisionLayout::for_model(&model, knots);
    let basis = cost_basis(params, &layout, selection);
    crate::transcription::build_nlp(
        &model,
        &GaitConstraints { params: *params, task: *task },
        basis,
        weights,
        knots,
    )
}

/// Deterministic kinematic initial guess: the torso stays upright over the
/// hip, both legs are straight, the stance leg pivots from +alpha to -alpha
/// over the step and the swing leg mirrors it, with the stance foot at the
/// origin throughout. Torques and pin forces start at zero, so the guess is
/// kinematically periodic but dynamically infeasible.
pub fn initial_guess(params: &WalkerParams, task: &GaitTask, knots: usize) -> Vec<f64> {
    let model = params.to_model_spec();
    let layout = DecisionLayout::for_model(&model, knots);
    let leg = params.leg_length();
    let half_step = NOMINAL_STEP_LENGTH / 2.0;
    let alpha = (half_step / leg).asin();
    let duration_target = NOMINAL_STEP_LENGTH / task.speed;
    let dt = (duration_target / (knots - 1) as f64).clamp(
        crate::transcription::DT_MIN,
        crate::transcription::DT_MAX,
    );
    let duration = dt * (knots - 1) as f64;

    let mut x = vec![0.0; layout.dim()];
    x[layout.delta_t()] = dt;

    let thigh_len = params.thigh.length;
    let stance_rate = -2.0 * alpha / duration;
    let swing_rate = 2.0 * alpha / duration;
    for t in 0..knots {
        let tau = t as f64 / (knots - 1) as f64;
        let th_st = alpha * (1.0 - 2.0 * tau);
        let th_sw = alpha * (2.0 * tau - 1.0);

        // Hip point from the stance leg pivoting about the origin.
        let hip = [-leg * th_st.sin(), leg * th_st.cos()];
        let hip_v = [-leg * th_st.cos() * stance_rate, -leg * th_st.sin() * stance_rate];
        let hip_a = [
            leg * th_st.sin() * stance_rate * stance_rate,
            -leg * th_st.cos() * stance_rate * stance_rate,
        ];

        let mut put = |s: usize, pos: [f64; 2], theta: f64, vel: [f64; 2], thetad: f64, acc: [f64; 2]| {
            x[layout.state(s, t, C_X)] = pos[0];
            x[layout.state(s, t, C_Z)] = pos[1];
            x[layout.state(s, t, C_TH)] = theta;
            x[layout.state(s, t, C_XD)] = vel[0];
            x[layout.state(s, t, C_ZD)] = vel[1];
            x[layout.state(s, t, C_THD)] = thetad;
            x[layout.accel(s, t, 0)] = acc[0];
            x[layout.accel(s, t, 1)] = acc[1];
            x[layout.accel(s, t, 2)] = 0.0;
        };

        put(TORSO, hip, 0.0, hip_v, 0.0, hip_a);
        put(THIGH_A, hip, th_st, hip_v, stance_rate, hip_a);
        put(THIGH_B, hip, th_sw, hip_v, swing_rate, hip_a);

        // Knee points: hip + R(theta)*(0, -thigh_len).
        let knee = |th: f64| [hip[0] + thigh_len * th.sin(), hip[1] - thigh_len * th.cos()];
        let knee_v = |th: f64, rate: f64| {
            [hip_v[0] + thigh_len * th.cos() * rate, hip_v[1] + thigh_len * th.sin() * rate]
        };
        let knee_a = |th: f64, rate: f64| {
            [
                hip_a[0] - thigh_len * th.sin() * rate * rate,
                hip_a[1] + thigh_len * th.cos() * rate * rate,
            ]
        };
        put(SHANK_A, knee(th_st), th_st, knee_v(th_st, stance_rate), stance_rate, knee_a(th_st, stance_rate));
        put(SHANK_B, knee(th_sw), th_sw, knee_v(th_sw, swing_rate), swing_rate, knee_a(th_sw, swing_rate));
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcription::Objective;
    use approx::assert_relative_eq;

    fn empty_trajectory(knots: usize) -> Trajectory {
        Trajectory {
            schema_version: TRAJECTORY_SCHEMA_VERSION,
            delta_t: 0.01,
            states: vec![vec![SegmentState::default(); knots]; 5],
            accels: vec![vec![SegmentAccel::default(); knots]; 5],
            pin_forces: vec![vec![PinForce::default(); knots]; 5],
            torques: vec![vec![0.0; knots]; 4],
            kneelock_torques: vec![vec![0.0; knots]; 2],
        }
    }

    #[test]
    fn default_walker_masses_are_normalized() {
        let p = WalkerParams::default();
        assert_relative_eq!(p.total_mass(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.leg_length(), 1.0, epsilon = 1e-12);
        p.validate().unwrap();
        p.to_model_spec().validate().unwrap();
    }

    #[test]
    fn hip_torque_constant_signal_closed_form() {
        let t_count = 9;
        let mut traj = empty_trajectory(t_count);
        for t in 0..t_count {
            traj.torques[ACT_HIP_A][t] = 1.0;
            traj.torques[ACT_HIP_B][t] = 1.0;
        }
        assert_relative_eq!(cost_hip_torque(&traj), 2.0 * t_count as f64 * 0.01, epsilon = 1e-12);
        assert_eq!(cost_knee_torque(&traj), 0.0);
    }

    #[test]
    fn knee_torque_single_knee_closed_form() {
        let t_count = 7;
        let mut traj = empty_trajectory(t_count);
        for t in 0..t_count {
            traj.torques[ACT_KNEE_B][t] = 2.0;
        }
        assert_relative_eq!(cost_knee_torque(&traj), 4.0 * t_count as f64 * 0.01, epsilon = 1e-12);
    }

    #[test]
    fn torque_rate_zero_for_constant_and_ramp_closed_form() {
        let t_count = 11;
        let mut traj = empty_trajectory(t_count);
        for t in 0..t_count {
            traj.torques[ACT_HIP_A][t] = 0.37;
        }
        assert_eq!(cost_torque_rate(&traj), 0.0);

        // Unit-slope ramp on one joint: each difference quotient is 1.
        for t in 0..t_count {
            traj.torques[ACT_HIP_A][t] = t as f64 * traj.delta_t;
        }
        assert_relative_eq!(
            cost_torque_rate(&traj),
            TORQUE_RATE_SCALE * (t_count - 1) as f64 * traj.delta_t,
            epsilon = 1e-12
        );
    }

    #[test]
    fn distractor_trivial_cases() {
        let params = WalkerParams::default();
        let t_count = 9;
        let mut traj = empty_trajectory(t_count);
        // Swing foot exactly on the ground with step length 0.3: shank
        // upright at x = 0.3, foot at z = 0 requires z_ref = shank length.
        for t in 0..t_count {
            traj.states[SHANK_B][t] =
                SegmentState { x: 0.3, z: params.shank.length, ..Default::default() };
        }
        let (torso, step_err, height) = distractor_costs(&params, &traj);
        assert_eq!(torso, 0.0);
        assert!(step_err.abs() < 1e-24);
        assert!(height.abs() < 1e-12);
    }

    #[test]
    fn walker_census_matches_closed_form() {
        let params = WalkerParams::default();
        let task = GaitTask::default();
        let weights = WeightVector::new(vec![1.0, 1.0, 1.0]).unwrap().normalized();
        let nlp = build_gait_nlp(&params, &task, BasisSelection::Nominal, &weights, 31).unwrap();
        let census = nlp.census();
        // n = 1 + T*(9S + 2P + A + K); equalities = 3ST (dynamics)
        // + 6S(T-1) (defects) + 2*4*(T-1) + 2T (pin positions; internal pins
        // skip the final knot) + 2P (final-knot pin velocities)
        // + 6S (periodicity); inequalities = 3KT.
        assert_eq!(census.dim, 1 + 31 * (9 * 5 + 2 * 5 + 4 + 2));
        assert_eq!(census.dim, 1892);
        assert_eq!(census.num_eq, 465 + 900 + (240 + 62) + 10 + 30);
        assert_eq!(census.num_eq, 1707);
        assert_eq!(census.num_ineq, 186);
    }

    #[test]
    fn free_segment_census() {
        // A single unpinned segment: only dynamics and defect rows.
        let model = ModelSpec {
            segments: vec![SegmentParams::uniform_rod(1.0, 0.7)],
            pins: vec![],
            gravity: 1.0,
        };
        let weights = WeightVector::new(vec![1.0]).unwrap();
        let nlp = crate::transcription::build_nlp(
            &model,
            &crate::transcription::NoTask,
            CostBasis { features: vec![Feature { name: "zero".into(), terms: vec![] }] },
            &weights,
            5,
        )
        .unwrap();
        let census = nlp.census();
        assert_eq!(census.num_eq, 5 * 3 + 2 * 12);
        assert_eq!(census.num_ineq, 0);
        assert_eq!(census.dim, 1 + 5 * 9);
    }

    #[test]
    fn weight_length_mismatch_is_a_construction_error() {
        let params = WalkerParams::default();
        let task = GaitTask::default();
        let weights = WeightVector::new(vec![1.0, 1.0]).unwrap();
        let err = build_gait_nlp(&params, &task, BasisSelection::Nominal, &weights, 15).unwrap_err();
        assert!(matches!(err, Error::Construction { .. }), "{err}");
    }

    #[test]
    fn initial_guess_is_deterministic_and_kinematically_periodic() {
        let params = WalkerParams::default();
        let task = GaitTask::default();
        let knots = 15;
        let g1 = initial_guess(&params, &task, knots);
        let g2 = initial_guess(&params, &task, knots);
        assert_eq!(g1, g2);

        let model = params.to_model_spec();
        let layout = DecisionLayout::for_model(&model, knots);
        let last = knots - 1;
        let dt = g1[layout.delta_t()];
        let step = task.speed * (knots - 1) as f64 * dt;
        let swap = [TORSO, THIGH_B, SHANK_B, THIGH_A, SHANK_A];
        for s in 0..5 {
            // Positions only: the kinematic guess makes no claim about
            // velocity periodicity (heel strike redirects velocities).
            for c in [C_X, C_Z, C_TH] {
                let shift = if c == C_X { step } else { 0.0 };
                let lhs = g1[layout.state(swap[s], last, c)];
                let rhs = g1[layout.state(s, 0, c)] + shift;
                assert!((lhs - rhs).abs() < 1e-12, "s={s} c={c}: {lhs} vs {rhs}");
            }
        }

        // Stance foot pinned at the origin at every knot.
        let traj = Trajectory::from_decision_vec(&layout, &g1).unwrap();
        for t in 0..knots {
            let foot = crate::dynamics::attachment_position(
                &traj.states[SHANK_A][t],
                [0.0, -params.shank.length],
            );
            assert!(foot[0].abs() < 1e-12 && foot[1].abs() < 1e-12);
        }
        // Touchdown and speed rows hold exactly on the guess.
        let foot = traj.swing_foot(&params, last);
        assert!((foot[0] - step).abs() < 1e-12);
        assert!(foot[1].abs() < 1e-12);

        // The guess violates dynamics: feasibility is the solver's job.
        let weights = WeightVector::new(vec![1.0, 1.0, 1.0]).unwrap().normalized();
        let nlp = build_gait_nlp(&params, &task, BasisSelection::Nominal, &weights, knots).unwrap();
        assert!(nlp.max_violation(&g1) > 1e-3);
    }

    #[test]
    fn trajectory_round_trips_through_decision_vector() {
        let params = WalkerParams::default();
        let task = GaitTask::default();
        let knots = 7;
        let layout = DecisionLayout::for_model(&params.to_model_spec(), knots);
        let x = initial_guess(&params, &task, knots);
        let traj = Trajectory::from_decision_vec(&layout, &x).unwrap();
        let back = traj.to_decision_vec(&layout).unwrap();
        assert_eq!(x, back);
    }

    #[test]
    fn nlp_cost_terms_agree_with_trajectory_costs() {
        // The NLP objective path (AD blocks) and the trajectory cost path are
        // written independently; they must agree.
        let params = WalkerParams::default();
        let task = GaitTask::default();
        let knots = 9;
        let layout = DecisionLayout::for_model(&params.to_model_spec(), knots);
        let mut x = initial_guess(&params, &task, knots);
        // Sprinkle nonzero torques deterministically.
        for a in 0..4 {
            for t in 0..knots {
                x[layout.torque(a, t)] = ((a + 1) as f64 * 0.1) * ((t as f64 * 0.7).sin() + 0.3);
            }
        }
        let traj = Trajectory::from_decision_vec(&layout, &x).unwrap();
        let basis = cost_basis(&params, &layout, BasisSelection::WithDistractors);
        let phi = basis.values(&x);
        let (torso, step_err, height) = distractor_costs(&params, &traj);
        assert_relative_eq!(phi[0], cost_hip_torque(&traj), max_relative = 1e-12);
        assert_relative_eq!(phi[1], cost_knee_torque(&traj), max_relative = 1e-12);
        assert_relative_eq!(phi[2], cost_torque_rate(&traj), max_relative = 1e-12);
        assert_relative_eq!(phi[3], torso, max_relative = 1e-12);
        assert_relative_eq!(phi[4], step_err, max_relative = 1e-9, epsilon = 1e-15);
        assert_relative_eq!(phi[5], height, max_relative = 1e-9, epsilon = 1e-15);
    }

    #[test]
    fn gait_nlp_objective_is_weighted_feature_sum() {
        let params = WalkerParams::default();
        let task = GaitTask::default();
        let knots = 7;
        let w = WeightVector::new(vec![0.9, 0.3, 0.3]).unwrap().normalized();
        let nlp = build_gait_nlp(&params, &task, BasisSelection::Nominal, &w, knots).unwrap();
        let x = initial_guess(&params, &task, knots);
        if let Objective::WeightedBasis { basis, weights } = &nlp.objective {
            let phi = basis.values(&x);
            let manual: f64 = phi.iter().zip(weights.iter()).map(|(p, w)| p * w).sum();
            assert_relative_eq!(nlp.cost(&x), manual, max_relative = 1e-12);
        } else {
            panic!("gait NLP must carry a weighted basis objective");
        }
    }
}
