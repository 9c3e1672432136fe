//! Planar rigid-segment kinematics and Newton-Euler dynamics residuals.
//!
//! All quantities are nondimensional: leg length, gravitational acceleration,
//! and total body mass are 1. A segment's reference point is its proximal
//! joint; the center of mass is given as an offset in the segment frame.
//! World frame: x forward, z up, angles counterclockwise.

use crate::ad::Real;
use serde::{Deserialize, Serialize};

/// Mass, inertia, and geometry of one rigid segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Mass as a fraction of total body mass.
    pub mass: f64,
    /// Rotational inertia about the center of mass.
    pub inertia: f64,
    /// Segment length as a fraction of leg length.
    pub length: f64,
    /// Center of mass in the segment frame, measured from the proximal end.
    pub com_offset: [f64; 2],
}

impl SegmentParams {
    /// Uniform thin rod of the given mass and length, hanging from its
    /// proximal end along the segment frame's -z axis.
    pub fn uniform_rod(mass: f64, length: f64) -> Self {
        SegmentParams {
            mass,
            inertia: mass * length * length / 12.0,
            length,
            com_offset: [0.0, -length / 2.0],
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.mass >= 0.0) || !self.mass.is_finite() {
            return Err(crate::Error::InvalidModel(format!("segment mass {} must be >= 0", self.mass)));
        }
        if !(self.inertia >= 0.0) || !self.inertia.is_finite() {
            return Err(crate::Error::InvalidModel(format!("segment inertia {} must be >= 0", self.inertia)));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(crate::Error::InvalidModel(format!("segment length {} must be > 0", self.length)));
        }
        Ok(())
    }
}

/// State of one segment at one knot: reference-point position, orientation,
/// and their time derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentState {
    pub x: f64,
    pub z: f64,
    pub theta: f64,
    pub xd: f64,
    pub zd: f64,
    pub thetad: f64,
}

impl SegmentState {
    pub fn as_array(&self) -> [f64; 6] {
        [self.x, self.z, self.theta, self.xd, self.zd, self.thetad]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        SegmentState { x: a[0], z: a[1], theta: a[2], xd: a[3], zd: a[4], thetad: a[5] }
    }
}

/// Second derivatives of one segment's reference point and orientation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentAccel {
    pub xdd: f64,
    pub zdd: f64,
    pub thetadd: f64,
}

/// One side of a pin joint: a point fixed on a segment, or a point fixed in
/// the world (used for ground contact).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PinSide {
    Segment { segment: usize, offset: [f64; 2] },
    World { anchor: [f64; 2] },
}

/// A pin joint between two attachment points. Pin forces are decision
/// variables; the force acts on `side_a` and its reaction on `side_b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinJointSpec {
    pub side_a: PinSide,
    pub side_b: PinSide,
    /// Torque actuator across this joint.
    pub actuated: bool,
    /// Unilateral holding torque active only at full knee extension.
    pub has_kneelock: bool,
    /// Lower bound on the joint angle (hyperextension stop), if any.
    pub joint_limit: Option<f64>,
}

/// Force transmitted through one pin at one knot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PinForce {
    pub fx: f64,
    pub fz: f64,
}

/// A linkage: segments, pins, and gravity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub segments: Vec<SegmentParams>,
    pub pins: Vec<PinJointSpec>,
    /// Nondimensional gravitational acceleration, acting in -z.
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn validate(&self) -> crate::Result<()> {
        for s in &self.segments {
            s.validate()?;
        }
        let ns = self.segments.len();
        let mut adjacency = vec![Vec::new(); ns.max(1)];
        for (i, pin) in self.pins.iter().enumerate() {
            let mut segs = Vec::new();
            for side in [&pin.side_a, &pin.side_b] {
                if let PinSide::Segment { segment, .. } = side {
                    if *segment >= ns {
                        return Err(crate::Error::InvalidModel(format!(
                            "pin {i} references segment {segment}, but model has {ns} segments"
                        )));
                    }
                    segs.push(*segment);
                }
            }
            if segs.len() == 2 && segs[0] == segs[1] {
                return Err(crate::Error::InvalidModel(format!(
                    "pin {i} connects segment {} to itself",
                    segs[0]
                )));
            }
            if segs.len() == 2 {
                adjacency[segs[0]].push(segs[1]);
                adjacency[segs[1]].push(segs[0]);
            }
        }
        // Pin graph connectivity (single segment or empty model is trivially fine).
        if ns > 1 {
            let mut seen = vec![false; ns];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(s) = stack.pop() {
                for &n in &adjacency[s] {
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
            if !seen.iter().all(|&b| b) {
                return Err(crate::Error::InvalidModel("pin graph is not connected".into()));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.segments.iter().map(|s| s.mass).sum()
    }
}

/// World position of a point given in the segment frame: `[x, z] + R(theta) * offset`.
pub fn attachment_position(state: &SegmentState, offset: [f64; 2]) -> [f64; 2] {
    attach_pos(state.x, state.z, state.theta, offset)
}

/// World velocity of a point given in the segment frame:
/// `[xd, zd] + thetad * R(theta + pi/2) * offset`.
pub fn attachment_velocity(state: &SegmentState, offset: [f64; 2]) -> [f64; 2] {
    attach_vel(state.xd, state.zd, state.theta, state.thetad, offset)
}

/// Generic attachment position used by both the public API and the AD paths.
pub(crate) fn attach_pos<R: Real>(x: R, z: R, theta: R, offset: [f64; 2]) -> [R; 2] {
    let (s, c) = (theta.sin(), theta.cos());
    [
        x + c.scale(offset[0]) - s.scale(offset[1]),
        z + s.scale(offset[0]) + c.scale(offset[1]),
    ]
}

/// Generic attachment velocity: d/dt of [`attach_pos`] along the state path.
pub(crate) fn attach_vel<R: Real>(xd: R, zd: R, theta: R, thetad: R, offset: [f64; 2]) -> [R; 2] {
    let (s, c) = (theta.sin(), theta.cos());
    // R(theta + pi/2) * offset = (-sin*ox - cos*oz, cos*ox - sin*oz)
    [
        xd + thetad * (-s.scale(offset[0]) - c.scale(offset[1])),
        zd + thetad * (c.scale(offset[0]) - s.scale(offset[1])),
    ]
}

/// A force applied to a segment (world frame) at a point given in the segment
/// frame, plus an optional pure torque.
#[derive(Clone, Copy, Debug)]
pub struct Load {
    pub force: [f64; 2],
    /// Application point in the segment frame, from the proximal end.
    pub offset: [f64; 2],
    /// Pure torque about the center of mass.
    pub torque: f64,
}

/// Newton-Euler residual for one segment at one knot:
/// `[sum Fx - m*xdd, sum Fz - m*zdd, sum tau_com - I*thetadd]`.
///
/// `accel` holds reference-point accelerations; because the reference point
/// is rigidly attached, the residual is formed about the center of mass, so
/// the COM acceleration is reconstructed from the reference-point motion:
/// `a_com = a_ref + thetadd * R(theta+pi/2) * r_com - thetad^2 * R(theta) * r_com`.
/// Moments of applied forces use the arm `R(theta) * (offset - com_offset)`.
pub fn newton_euler_residual(
    params: &SegmentParams,
    state: &SegmentState,
    accel: &SegmentAccel,
    loads: &[Load],
) -> [f64; 3] {
    let (s, c) = (state.theta.sin(), state.theta.cos());
    let rot = |v: [f64; 2]| [c * v[0] - s * v[1], s * v[0] + c * v[1]];
    let rot90 = |v: [f64; 2]| [-s * v[0] - c * v[1], c * v[0] - s * v[1]];

    let rc = params.com_offset;
    let rot_rc = rot(rc);
    let rot90_rc = rot90(rc);
    let w2 = state.thetad * state.thetad;
    let a_com = [
        accel.xdd + accel.thetadd * rot90_rc[0] - w2 * rot_rc[0],
        accel.zdd + accel.thetadd * rot90_rc[1] - w2 * rot_rc[1],
    ];

    let mut fx = 0.0;
    let mut fz = 0.0;
    let mut tau = 0.0;
    for load in loads {
        fx += load.force[0];
        fz += load.force[1];
        let arm = rot([load.offset[0] - rc[0], load.offset[1] - rc[1]]);
        tau += arm[0] * load.force[1] - arm[1] * load.force[0] + load.torque;
    }
    [
        fx - params.mass * a_com[0],
        fz - params.mass * a_com[1],
        tau - params.inertia * accel.thetadd,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn attachment_position_identity_and_translation() {
        let s = SegmentState::default();
        assert_eq!(attachment_position(&s, [0.0, 0.0]), [0.0, 0.0]);

        let s = SegmentState { x: 1.0, z: 2.0, ..Default::default() };
        assert_eq!(attachment_position(&s, [0.5, 0.0]), [1.5, 2.0]);
    }

    #[test]
    fn attachment_position_quarter_turn() {
        let s = SegmentState { theta: std::f64::consts::FRAC_PI_2, ..Default::default() };
        let p = attachment_position(&s, [1.0, 0.0]);
        assert!((p[0] - 0.0).abs() < 1e-12);
        assert!((p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attachment_velocity_static_and_pure_rotation() {
        let s = SegmentState { theta: 0.3, ..Default::default() };
        assert_eq!(attachment_velocity(&s, [0.7, -0.2]), [0.0, 0.0]);

        let s = SegmentState { thetad: 1.0, ..Default::default() };
        let v = attachment_velocity(&s, [1.0, 0.0]);
        assert!((v[0] - 0.0).abs() < 1e-12);
        assert!((v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn attachment_velocity_matches_finite_difference_along_path() {
        // Simulated state path: x(t), z(t), theta(t) smooth in t.
        let path = |t: f64| SegmentState {
            x: 0.3 * t + 0.1 * (2.0 * t).sin(),
            z: -0.2 * t * t + 0.4,
            theta: 0.9 * (1.3 * t).cos(),
            xd: 0.3 + 0.2 * (2.0 * t).cos(),
            zd: -0.4 * t,
            thetad: -0.9 * 1.3 * (1.3 * t).sin(),
        };
        let offset = [0.37, -0.55];
        let t0 = 0.8;
        let h = 1e-5;
        let p_plus = attachment_position(&path(t0 + h), offset);
        let p_minus = attachment_position(&path(t0 - h), offset);
        let v = attachment_velocity(&path(t0), offset);
        for i in 0..2 {
            let fd = (p_plus[i] - p_minus[i]) / (2.0 * h);
            assert_relative_eq!(v[i], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn ballistic_fall_has_zero_residual() {
        let params = SegmentParams::uniform_rod(0.3, 0.8);
        let state = SegmentState { theta: 0.4, ..Default::default() };
        let accel = SegmentAccel { xdd: 0.0, zdd: -1.0, thetadd: 0.0 };
        let gravity = Load { force: [0.0, -params.mass], offset: params.com_offset, torque: 0.0 };
        let r = newton_euler_residual(&params, &state, &accel, &[gravity]);
        for v in r {
            assert!(v.abs() < 1e-14, "residual {v}");
        }
    }

    #[test]
    fn zero_loads_zero_accel_is_balanced() {
        let params = SegmentParams::uniform_rod(0.1, 0.5);
        let r = newton_euler_residual(&params, &SegmentState::default(), &SegmentAccel::default(), &[]);
        assert_eq!(r, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn point_force_at_com_accelerates_by_f_over_m() {
        let m = 0.25;
        let params = SegmentParams { mass: m, inertia: 0.01, length: 0.5, com_offset: [0.1, -0.2] };
        let state = SegmentState { theta: 0.0, ..Default::default() };
        let accel = SegmentAccel { xdd: 1.0 / m, zdd: 0.0, thetadd: 0.0 };
        let pin = Load { force: [1.0, 0.0], offset: params.com_offset, torque: 0.0 };
        let r = newton_euler_residual(&params, &state, &accel, &[pin]);
        for v in r {
            assert!(v.abs() < 1e-13, "residual {v}");
        }
    }

    #[test]
    fn model_validation_rejects_self_pin_and_disconnection() {
        let seg = SegmentParams::uniform_rod(0.5, 1.0);
        let self_pin = ModelSpec {
            segments: vec![seg, seg],
            pins: vec![PinJointSpec {
                side_a: PinSide::Segment { segment: 0, offset: [0.0, 0.0] },
                side_b: PinSide::Segment { segment: 0, offset: [0.0, -1.0] },
                actuated: false,
                has_kneelock: false,
                joint_limit: None,
            }],
            gravity: 1.0,
        };
        assert!(self_pin.validate().is_err());

        let disconnected = ModelSpec { segments: vec![seg, seg], pins: vec![], gravity: 1.0 };
        assert!(disconnected.validate().is_err());
    }

    proptest! {
        /// Distances between two attached points on one rigid segment do not
        /// depend on the segment's pose.
        #[test]
        fn rigid_body_map_preserves_distances(
            x in -2.0f64..2.0, z in -2.0f64..2.0, theta in -6.3f64..6.3,
            ax in -1.0f64..1.0, az in -1.0f64..1.0,
            bx in -1.0f64..1.0, bz in -1.0f64..1.0,
        ) {
            let s = SegmentState { x, z, theta, ..Default::default() };
            let pa = attachment_position(&s, [ax, az]);
            let pb = attachment_position(&s, [bx, bz]);
            let d_world = ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt();
            let d_local = ((ax - bx).powi(2) + (az - bz).powi(2)).sqrt();
            prop_assert!((d_world - d_local).abs() < 1e-12);
        }

        /// For a closed two-segment system with an internal pin force in
        /// balance, the total linear momentum rate equals the total external
        /// force: internal forces cancel pairwise.
        #[test]
        fn internal_pin_forces_cancel_pairwise(
            theta0 in -3.0f64..3.0, theta1 in -3.0f64..3.0,
            fx in -2.0f64..2.0, fz in -2.0f64..2.0,
            gx in -1.0f64..1.0, gz in -1.0f64..1.0,
        ) {
            let p0 = SegmentParams::uniform_rod(0.4, 0.7);
            let p1 = SegmentParams::uniform_rod(0.6, 0.5);
            let s0 = SegmentState { theta: theta0, ..Default::default() };
            let s1 = SegmentState { theta: theta1, x: 0.3, z: -0.4, ..Default::default() };

            // External force g on segment 0 at its COM; internal pin force
            // (fx, fz) on segment 0 at its distal end, reaction on segment 1
            // at its proximal end.
            let ext = Load { force: [gx, gz], offset: p0.com_offset, torque: 0.0 };
            let pin0 = Load { force: [fx, fz], offset: [0.0, -p0.length], torque: 0.0 };
            let pin1 = Load { force: [-fx, -fz], offset: [0.0, 0.0], torque: 0.0 };

            // Choose COM accelerations that zero the force rows, with zero
            // angular velocity so reference accel equals COM accel plus a
            // thetadd term we set to zero.
            let a0 = SegmentAccel { xdd: (gx + fx) / p0.mass, zdd: (gz + fz) / p0.mass, thetadd: 0.0 };
            let a1 = SegmentAccel { xdd: -fx / p1.mass, zdd: -fz / p1.mass, thetadd: 0.0 };

            let r0 = newton_euler_residual(&p0, &s0, &a0, &[ext, pin0]);
            let r1 = newton_euler_residual(&p1, &s1, &a1, &[pin1]);
            prop_assert!(r0[0].abs() < 1e-12 && r0[1].abs() < 1e-12);
            prop_assert!(r1[0].abs() < 1e-12 && r1[1].abs() < 1e-12);

            // Momentum rate of the whole system = m0*a0 + m1*a1 equals the
            // external force alone.
            let px = p0.mass * a0.xdd + p1.mass * a1.xdd;
            let pz = p0.mass * a0.zdd + p1.mass * a1.zdd;
            prop_assert!((px - gx).abs() < 1e-12);
            prop_assert!((pz - gz).abs() < 1e-12);
        }
    }
}
