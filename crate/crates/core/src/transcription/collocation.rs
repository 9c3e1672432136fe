//! Separated Hermite-Simpson collocation defects.
//!
//! Knots pair into intervals `[t, t+2]` of duration `2*dt` with the odd knot
//! `t+1` serving as the explicit midpoint. Per coordinate the interval
//! contributes four defect rows:
//!
//! 1. Simpson quadrature for velocity:  `v2 - v0 - (h/6)(a0 + 4*am + a2)`
//! 2. Simpson quadrature for position:  `p2 - p0 - (h/6)(v0 + 4*vm + v2)`
//! 3. Hermite midpoint velocity:        `vm - (v0 + v2)/2 - (h/8)(a0 - a2)`
//! 4. Hermite midpoint position:        `pm - (p0 + p2)/2 - (h/8)(v0 - v2)`
//!
//! with `h = 2*dt`. All four vanish identically whenever the acceleration is
//! linear in time over the interval (cubic position), and the worst row decays
//! as O(h^4) for smooth trajectories.

use crate::ad::Real;
use crate::dynamics::{SegmentAccel, SegmentState};

/// One coordinate's four defect rows. Inputs are endpoint/midpoint samples of
/// position `p`, velocity `v`, and acceleration `a`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn coord_defect<R: Real>(
    p0: R,
    v0: R,
    a0: R,
    pm: R,
    vm: R,
    am: R,
    p2: R,
    v2: R,
    a2: R,
    dt: R,
) -> [R; 4] {
    let h = dt.scale(2.0);
    let h6 = h.scale(1.0 / 6.0);
    let h8 = h.scale(1.0 / 8.0);
    let half = R::from_f64(0.5);
    [
        v2 - v0 - h6 * (a0 + am.scale(4.0) + a2),
        p2 - p0 - h6 * (v0 + vm.scale(4.0) + v2),
        vm - (v0 + v2) * half - h8 * (a0 - a2),
        pm - (p0 + p2) * half - h8 * (v0 - v2),
    ]
}

/// Hermite-Simpson defect vector for one segment over one interval.
///
/// Returns 12 entries: for each coordinate (x, z, theta) in order, the four
/// rows documented at module level.
pub fn hermite_simpson_defect(
    x_t: &SegmentState,
    a_t: &SegmentAccel,
    x_mid: &SegmentState,
    a_mid: &SegmentAccel,
    x_next: &SegmentState,
    a_next: &SegmentAccel,
    dt: f64,
) -> [f64; 12] {
    let mut out = [0.0; 12];
    let coords = [
        (x_t.x, x_t.xd, a_t.xdd, x_mid.x, x_mid.xd, a_mid.xdd, x_next.x, x_next.xd, a_next.xdd),
        (x_t.z, x_t.zd, a_t.zdd, x_mid.z, x_mid.zd, a_mid.zdd, x_next.z, x_next.zd, a_next.zdd),
        (
            x_t.theta, x_t.thetad, a_t.thetadd, x_mid.theta, x_mid.thetad, a_mid.thetadd,
            x_next.theta, x_next.thetad, a_next.thetadd,
        ),
    ];
    for (c, &(p0, v0, a0, pm, vm, am, p2, v2, a2)) in coords.iter().enumerate() {
        let rows = coord_defect(p0, v0, a0, pm, vm, am, p2, v2, a2, dt);
        out[4 * c..4 * c + 4].copy_from_slice(&rows);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(p: [f64; 3], v: [f64; 3]) -> SegmentState {
        SegmentState { x: p[0], z: p[1], theta: p[2], xd: v[0], zd: v[1], thetad: v[2] }
    }

    #[test]
    fn linear_motion_has_zero_defect() {
        let dt = 0.05;
        let v = [0.3, -0.1, 0.7];
        let at = |t: f64| state([v[0] * t, v[1] * t, v[2] * t], v);
        let zero = SegmentAccel::default();
        let d = hermite_simpson_defect(&at(0.0), &zero, &at(dt), &zero, &at(2.0 * dt), &zero, dt);
        for r in d {
            assert!(r.abs() < 1e-15, "defect {r}");
        }
    }

    #[test]
    fn constant_acceleration_is_exact() {
        let dt = 0.04;
        let a = [0.2, -1.0, 0.5];
        let p0 = [0.1, 1.0, -0.3];
        let v0 = [0.4, 0.0, 0.2];
        let sample = |t: f64| {
            state(
                [
                    p0[0] + v0[0] * t + 0.5 * a[0] * t * t,
                    p0[1] + v0[1] * t + 0.5 * a[1] * t * t,
                    p0[2] + v0[2] * t + 0.5 * a[2] * t * t,
                ],
                [v0[0] + a[0] * t, v0[1] + a[1] * t, v0[2] + a[2] * t],
            )
        };
        let acc = SegmentAccel { xdd: a[0], zdd: a[1], thetadd: a[2] };
        let d = hermite_simpson_defect(&sample(0.0), &acc, &sample(dt), &acc, &sample(2.0 * dt), &acc, dt);
        for r in d {
            assert!(r.abs() < 1e-12, "defect {r}");
        }
    }

    #[test]
    fn sinusoid_defect_converges_at_fourth_order() {
        // theta(t) = sin(t): defect measured by sampling the analytic solution.
        let max_defect = |dt: f64| {
            let sample = |t: f64| state([0.0, 0.0, t.sin()], [0.0, 0.0, t.cos()]);
            let accel = |t: f64| SegmentAccel { thetadd: -t.sin(), ..Default::default() };
            let mut worst: f64 = 0.0;
            let mut t = 0.0;
            while t + 2.0 * dt <= 2.0 {
                let d = hermite_simpson_defect(
                    &sample(t),
                    &accel(t),
                    &sample(t + dt),
                    &accel(t + dt),
                    &sample(t + 2.0 * dt),
                    &accel(t + 2.0 * dt),
                    dt,
                );
                for r in d {
                    worst = worst.max(r.abs());
                }
                t += 2.0 * dt;
            }
            worst
        };
        let mut dt = 0.1;
        let mut prev = max_defect(dt);
        for _ in 0..4 {
            dt /= 2.0;
            let cur = max_defect(dt);
            let order = (prev / cur).log2();
            assert!(order >= 3.8, "observed order {order}");
            prev = cur;
        }
    }
}
