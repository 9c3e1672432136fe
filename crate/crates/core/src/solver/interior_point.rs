//! Primal-dual interior-point NLP solver.
//!
//! Solves `min f(x) s.t. ce(x) = 0, c(x) <= 0, l <= x <= u` by introducing
//! slacks `c(x) + s = 0, s >= 0`, a log barrier on slacks and bounds, and
//! Newton steps on the perturbed KKT conditions. The reduced symmetric system
//!
//! ```text
//! [ W + Sigma_x + dx*I   Je^T            Ji^T        ] [ dx  ]
//! [ Je                  -dc*I            0           ] [ dy_e]
//! [ Ji                   0              -Y^-1 S - dc ] [ dy_i]
//! ```
//!
//! is factorized by sparse LDL^T under a bandwidth-reducing knot ordering;
//! `dx` is raised until the factor has inertia `(n, me+mi)` and the small
//! `dc` keeps the system quasi-definite. Steps obey the fraction-to-boundary
//! rule and a filter line search (feasibility/barrier-objective pairs with
//! margins and an Armijo switching condition), with a monotone
//! Fiacco-McCormick barrier schedule. Inequality duals are pulled back into a
//! box around the central path after each step.

use super::linalg::{LdlFactor, LdlSymbolic, SparseSym};
use super::{IterationRecord, SolveOptions, SolveResult, SolveStatus};
use crate::ad::LocalJacobian;
use crate::transcription::NlpProblem;

const DELTA_C: f64 = 1e-8;
const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const TAU_MIN: f64 = 0.99;
const ALPHA_MIN: f64 = 1e-12;
const BOUND_PUSH: f64 = 1e-2;
const SLACK_FLOOR: f64 = 1e-4;
const PIVOT_TOL: f64 = 1e-11;
const DELTA_X_MIN: f64 = 1e-9;
const DELTA_X_MAX: f64 = 1e12;
/// Central-path box for inequality duals (IPOPT's kappa_Sigma).
const KAPPA_SIGMA: f64 = 1e10;

// Filter line-search constants.
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-5;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const DELTA_SWITCH: f64 = 1.0;
const ETA_PHI: f64 = 1e-8;

pub fn solve_ipm(nlp: &NlpProblem, x0: &[f64], opts: &SolveOptions) -> SolveResult {
    let n = nlp.dim();
    if x0.len() != n {
        return fail(nlp, x0, format!("initial point has length {}, expected {n}", x0.len()));
    }
    let mut ws = match Workspace::new(nlp) {
        Ok(ws) => ws,
        Err(msg) => return fail(nlp, x0, msg),
    };
    ws.run(x0, opts)
}

fn fail(nlp: &NlpProblem, x0: &[f64], message: String) -> SolveResult {
    SolveResult {
        status: SolveStatus::Failed,
        x: x0.to_vec(),
        cost: f64::NAN,
        max_violation: if x0.len() == nlp.dim() { nlp.max_violation(x0) } else { f64::NAN },
        iterations: 0,
        message,
        trace: Vec::new(),
    }
}

struct Workspace<'a> {
    nlp: &'a NlpProblem,
    n: usize,
    me: usize,
    mi: usize,
    perm: Vec<usize>,
    kkt: SparseSym,
    sym: LdlSymbolic,
    factor: LdlFactor,
    /// (constraint row, var, value); equality rows then inequality rows.
    jac: Vec<(u32, u32, f64)>,
    has_lower: Vec<bool>,
    has_upper: Vec<bool>,
    debug: bool,
}

struct Iterate {
    x: Vec<f64>,
    s: Vec<f64>,
    y_e: Vec<f64>,
    y_i: Vec<f64>,
    z_l: Vec<f64>,
    z_u: Vec<f64>,
}

struct Eval {
    f: f64,
    grad: Vec<f64>,
    ce: Vec<f64>,
    ci: Vec<f64>,
}

impl Eval {
    fn finite(&self) -> bool {
        self.f.is_finite() && self.ce.iter().chain(self.ci.iter()).all(|v| v.is_finite())
    }
}

impl<'a> Workspace<'a> {
    fn new(nlp: &'a NlpProblem) -> Result<Self, String> {
        let n = nlp.dim();
        let me = nlp.num_eq();
        let mi = nlp.num_ineq();
        let total = n + me + mi;

        // Bandwidth-reducing order: sort KKT indices by anchor knot, globals
        // last, variables before dual rows within a knot.
        let row_anchors = nlp.row_anchors();
        let key = |idx: usize| -> (usize, usize, usize) {
            if idx < n {
                (nlp.space.anchor(idx).unwrap_or(usize::MAX - 1), 0, idx)
            } else {
                (row_anchors[idx - n].unwrap_or(usize::MAX - 1), 1, idx)
            }
        };
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by_key(|&i| key(i));
        let mut perm = vec![0usize; total];
        for (pos, &idx) in order.iter().enumerate() {
            perm[idx] = pos;
        }

        // Structural pattern.
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut push = |a: usize, b: usize, pairs: &mut Vec<(usize, usize)>| {
            let (pa, pb) = (perm[a], perm[b]);
            pairs.push(if pa <= pb { (pa, pb) } else { (pb, pa) });
        };
        nlp.hessian_pattern(&mut |i, j| push(i, j, &mut pairs));
        let mut row = 0usize;
        for block in nlp.eq.iter().chain(nlp.ineq.iter()) {
            for r in 0..block.rows() {
                for &v in &block.vars {
                    push(v, n + row + r, &mut pairs);
                }
            }
            row += block.rows();
        }
        let kkt = SparseSym::from_pairs(total, &mut pairs);
        let sym = LdlSymbolic::analyze(&kkt);
        let factor = LdlFactor::new(&sym);

        let has_lower: Vec<bool> = nlp.lower.iter().map(|v| v.is_finite()).collect();
        let has_upper: Vec<bool> = nlp.upper.iter().map(|v| v.is_finite()).collect();
        let debug = std::env::var("GAITOPT_IPM_DEBUG").is_ok();
        Ok(Workspace { nlp, n, me, mi, perm, kkt, sym, factor, jac: Vec::new(), has_lower, has_upper, debug })
    }

    fn evaluate(&self, x: &[f64]) -> Eval {
        let mut ce = vec![0.0; self.me];
        let mut ci = vec![0.0; self.mi];
        self.nlp.eval_eq(x, &mut ce);
        self.nlp.eval_ineq(x, &mut ci);
        let mut grad = vec![0.0; self.n];
        self.nlp.cost_gradient(x, &mut grad);
        Eval { f: self.nlp.cost(x), grad, ce, ci }
    }

    fn refresh_jacobian(&mut self, x: &[f64]) {
        self.jac.clear();
        let mut local = LocalJacobian::default();
        let mut row = 0usize;
        for block in self.nlp.eq.iter().chain(self.nlp.ineq.iter()) {
            block.jacobian(x, &mut local);
            for r in 0..local.rows {
                for (c, &v) in block.vars.iter().enumerate() {
                    self.jac.push(((row + r) as u32, v as u32, local.get(r, c)));
                }
            }
            row += block.rows();
        }
    }

    /// l1 primal infeasibility of the slack formulation.
    fn theta(&self, ce: &[f64], ci: &[f64], s: &[f64]) -> f64 {
        let mut l1 = 0.0;
        for v in ce {
            l1 += v.abs();
        }
        for (v, sv) in ci.iter().zip(s.iter()) {
            l1 += (v + sv).abs();
        }
        l1
    }

    /// True constraint violation of x (slack-free), inf-norm.
    fn violation(&self, ce: &[f64], ci: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for r in ce {
            v = v.max(r.abs());
        }
        for r in ci {
            v = v.max(*r);
        }
        v
    }

    fn barrier_value(&self, x: &[f64], s: &[f64], f: f64, mu: f64) -> f64 {
        let mut phi = f;
        for i in 0..self.n {
            if self.has_lower[i] {
                phi -= mu * (x[i] - self.nlp.lower[i]).ln();
            }
            if self.has_upper[i] {
                phi -= mu * (self.nlp.upper[i] - x[i]).ln();
            }
        }
        for v in s {
            phi -= mu * v.ln();
        }
        phi
    }

    /// Scaled KKT error at barrier parameter `mu`.
    fn kkt_error(&self, it: &Iterate, ev: &Eval, mu: f64) -> f64 {
        let mut r_dual = ev.grad.clone();
        for &(row, col, v) in &self.jac {
            let (row, col) = (row as usize, col as usize);
            let y = if row < self.me { it.y_e[row] } else { it.y_i[row - self.me] };
            r_dual[col] += v * y;
        }
        let mut dual_inf: f64 = 0.0;
        for i in 0..self.n {
            let mut r = r_dual[i];
            if self.has_lower[i] {
                r -= it.z_l[i];
            }
            if self.has_upper[i] {
                r += it.z_u[i];
            }
            dual_inf = dual_inf.max(r.abs());
        }

        let mut primal_inf: f64 = 0.0;
        for v in &ev.ce {
            primal_inf = primal_inf.max(v.abs());
        }
        for (v, sv) in ev.ci.iter().zip(it.s.iter()) {
            primal_inf = primal_inf.max((v + sv).abs());
        }

        let mut compl: f64 = 0.0;
        let mut z_sum = 0.0;
        let mut z_cnt = 0usize;
        for i in 0..self.mi {
            compl = compl.max((it.s[i] * it.y_i[i] - mu).abs());
            z_sum += it.y_i[i].abs();
            z_cnt += 1;
        }
        for i in 0..self.n {
            if self.has_lower[i] {
                compl = compl.max(((it.x[i] - self.nlp.lower[i]) * it.z_l[i] - mu).abs());
                z_sum += it.z_l[i];
                z_cnt += 1;
            }
            if self.has_upper[i] {
                compl = compl.max(((self.nlp.upper[i] - it.x[i]) * it.z_u[i] - mu).abs());
                z_sum += it.z_u[i];
                z_cnt += 1;
            }
        }
        let y_sum: f64 = it.y_e.iter().chain(it.y_i.iter()).map(|v| v.abs()).sum();
        let y_cnt = self.me + self.mi;
        let s_max = 100.0;
        let s_d = ((y_sum + z_sum) / ((y_cnt + z_cnt).max(1) as f64)).max(s_max) / s_max;
        let s_c = (z_sum / (z_cnt.max(1) as f64)).max(s_max) / s_max;
        (dual_inf / s_d).max(primal_inf).max(compl / s_c)
    }

    fn assemble_and_factor(&mut self, it: &Iterate, mu: f64, delta_x: &mut f64) -> Result<(), String> {
        let n = self.n;
        // Keeps the system quasi-definite when constraint rows are dependent;
        // shrinks with the barrier so late steps stay accurate.
        let delta_c = DELTA_C * mu.powf(0.25) + 1e-14;
        let mut attempt = if *delta_x > 0.0 { (*delta_x / 3.0).max(DELTA_X_MIN) } else { 0.0 };
        loop {
            self.kkt.zero_values();
            {
                let perm = &self.perm;
                let kkt = &mut self.kkt;
                self.nlp.lagrangian_hessian(&it.x, 1.0, &it.y_e, &it.y_i, &mut |i, j, v| {
                    kkt.add(perm[i], perm[j], v);
                });
            }
            for i in 0..n {
                let mut sig = attempt;
                if self.has_lower[i] {
                    sig += it.z_l[i] / (it.x[i] - self.nlp.lower[i]);
                }
                if self.has_upper[i] {
                    sig += it.z_u[i] / (self.nlp.upper[i] - it.x[i]);
                }
                if sig != 0.0 {
                    self.kkt.add(self.perm[i], self.perm[i], sig);
                }
            }
            for &(row, col, v) in &self.jac {
                self.kkt.add(self.perm[col as usize], self.perm[n + row as usize], v);
            }
            for r in 0..self.me {
                self.kkt.add(self.perm[n + r], self.perm[n + r], -delta_c);
            }
            for r in 0..self.mi {
                let d = it.s[r] / it.y_i[r];
                self.kkt.add(self.perm[n + self.me + r], self.perm[n + self.me + r], -d - delta_c);
            }

            let fact = self.factor.factorize(&self.kkt, &self.sym, PIVOT_TOL);
            if fact.is_ok() && self.factor.inertia() == (n, self.me + self.mi) {
                *delta_x = attempt;
                return Ok(());
            }
            attempt = if attempt == 0.0 { DELTA_X_MIN.max(1e-6) } else { attempt * 10.0 };
            if attempt > DELTA_X_MAX {
                return Err("inertia correction exhausted".into());
            }
        }
    }

    /// Solve the reduced KKT system; returns (dx, dy_e).
    fn solve_step(&mut self, it: &Iterate, ev: &Eval, mu: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let total = n + self.me + self.mi;
        let mut rhs = vec![0.0; total];

        let mut r = ev.grad.clone();
        for i in 0..n {
            if self.has_lower[i] {
                r[i] -= mu / (it.x[i] - self.nlp.lower[i]);
            }
            if self.has_upper[i] {
                r[i] += mu / (self.nlp.upper[i] - it.x[i]);
            }
        }
        for &(row, col, v) in &self.jac {
            let (row, col) = (row as usize, col as usize);
            let y = if row < self.me { it.y_e[row] } else { it.y_i[row - self.me] };
            r[col] += v * y;
        }
        for i in 0..n {
            rhs[self.perm[i]] = -r[i];
        }
        for row in 0..self.me {
            rhs[self.perm[n + row]] = -ev.ce[row];
        }
        for row in 0..self.mi {
            rhs[self.perm[n + self.me + row]] = -(ev.ci[row] + mu / it.y_i[row]);
        }

        let rhs_orig = rhs.clone();
        self.factor.solve(&mut rhs);
        let mut resid = vec![0.0; total];
        super::linalg::sym_matvec(&self.kkt, &rhs, &mut resid);
        for i in 0..total {
            resid[i] = rhs_orig[i] - resid[i];
        }
        self.factor.solve(&mut resid);
        for i in 0..total {
            rhs[i] += resid[i];
        }

        let dx: Vec<f64> = (0..n).map(|i| rhs[self.perm[i]]).collect();
        let dy_e: Vec<f64> = (0..self.me).map(|r| rhs[self.perm[n + r]]).collect();
        (dx, dy_e)
    }

    fn run(&mut self, x0: &[f64], opts: &SolveOptions) -> SolveResult {
        let n = self.n;
        let nlp = self.nlp;

        let mut x = x0.to_vec();
        for i in 0..n {
            let (l, u) = (nlp.lower[i], nlp.upper[i]);
            if self.has_lower[i] && self.has_upper[i] {
                let p = (BOUND_PUSH * (u - l)).min(0.5 * (u - l));
                x[i] = x[i].clamp(l + p, u - p);
            } else if self.has_lower[i] {
                x[i] = x[i].max(l + BOUND_PUSH * l.abs().max(1.0));
            } else if self.has_upper[i] {
                x[i] = x[i].min(u - BOUND_PUSH * u.abs().max(1.0));
            }
        }

        let mut mu = opts.mu_init;
        let mut ev = self.evaluate(&x);
        if !ev.finite() {
            return fail(nlp, &x, "non-finite objective or constraints at the initial point".into());
        }

        let mut it = Iterate {
            s: ev.ci.iter().map(|&c| (-c).max(SLACK_FLOOR)).collect(),
            y_e: vec![0.0; self.me],
            y_i: Vec::new(),
            z_l: vec![0.0; n],
            z_u: vec![0.0; n],
            x,
        };
        it.y_i = it.s.iter().map(|&s| mu / s).collect();
        for i in 0..n {
            if self.has_lower[i] {
                it.z_l[i] = mu / (it.x[i] - nlp.lower[i]);
            }
            if self.has_upper[i] {
                it.z_u[i] = mu / (nlp.upper[i] - it.x[i]);
            }
        }

        let mut best_feasible: Option<(f64, Vec<f64>, f64)> = None;
        let mut least_viol: (f64, Vec<f64>, f64) = (self.violation(&ev.ce, &ev.ci), it.x.clone(), ev.f);
        let mut trace = Vec::new();
        let mut delta_x = 0.0f64;
        let mut stalls = 0usize;
        let mut iterations = 0usize;

        // Filter over (theta, phi) pairs for the current barrier problem.
        let theta0 = self.theta(&ev.ce, &ev.ci, &it.s);
        let theta_min_factor = 1e-4 * theta0.max(1.0);
        let mut theta_max = 1e4 * theta0.max(1.0);
        let mut filter: Vec<(f64, f64)> = Vec::new();

        let tol = opts.optimality_tol;
        let mut status = SolveStatus::IterLimit;
        let mut message = String::new();

        while iterations < opts.max_iterations {
            iterations += 1;
            self.refresh_jacobian(&it.x);

            let viol = self.violation(&ev.ce, &ev.ci);
            if viol <= opts.feasibility_tol {
                let better = best_feasible.as_ref().map(|(c, _, _)| ev.f < *c).unwrap_or(true);
                if better {
                    best_feasible = Some((ev.f, it.x.clone(), viol));
                }
            }
            if viol < least_viol.0 {
                least_viol = (viol, it.x.clone(), ev.f);
            }

            let e0 = self.kkt_error(&it, &ev, 0.0);
            if self.debug {
                eprintln!(
                    "it {iterations} mu {mu:.3e} e0 {e0:.3e} viol {viol:.3e} f {:.6e} th {:.3e}",
                    ev.f,
                    self.theta(&ev.ce, &ev.ci, &it.s)
                );
            }
            if e0 <= tol && viol <= opts.feasibility_tol {
                status = SolveStatus::Optimal;
                best_feasible = Some((ev.f, it.x.clone(), viol));
                break;
            }
            let e_mu = self.kkt_error(&it, &ev, mu);
            if e_mu <= KAPPA_EPS * mu && mu > tol / 100.0 {
                mu = (tol / 100.0).max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
                filter.clear();
                theta_max = 1e4 * self.theta(&ev.ce, &ev.ci, &it.s).max(1.0);
                continue;
            }

            if let Err(msg) = self.assemble_and_factor(&it, mu, &mut delta_x) {
                status = SolveStatus::Failed;
                message = msg;
                break;
            }
            let (dx, dy_e) = self.solve_step(&it, &ev, mu);
            if dx.iter().any(|v| !v.is_finite()) {
                status = SolveStatus::Failed;
                message = "non-finite search direction".into();
                break;
            }
            let mut ds = vec![0.0; self.mi];
            for r in 0..self.mi {
                ds[r] = -(ev.ci[r] + it.s[r]);
            }
            for &(row, col, v) in &self.jac {
                let (row, col) = (row as usize, col as usize);
                if row >= self.me {
                    ds[row - self.me] -= v * dx[col];
                }
            }
            let mut dz_l = vec![0.0; n];
            let mut dz_u = vec![0.0; n];
            for i in 0..n {
                if self.has_lower[i] {
                    let gap = it.x[i] - nlp.lower[i];
                    dz_l[i] = mu / gap - it.z_l[i] - it.z_l[i] / gap * dx[i];
                }
                if self.has_upper[i] {
                    let gap = nlp.upper[i] - it.x[i];
                    dz_u[i] = mu / gap - it.z_u[i] + it.z_u[i] / gap * dx[i];
                }
            }
            // Inequality dual step from linearized complementarity.
            let dy_i: Vec<f64> = (0..self.mi)
                .map(|r| (mu - it.s[r] * it.y_i[r] - it.y_i[r] * ds[r]) / it.s[r])
                .collect();

            let tau = TAU_MIN.max(1.0 - mu);
            let mut alpha_max: f64 = 1.0;
            for i in 0..n {
                if self.has_lower[i] && dx[i] < 0.0 {
                    alpha_max = alpha_max.min(-tau * (it.x[i] - nlp.lower[i]) / dx[i]);
                }
                if self.has_upper[i] && dx[i] > 0.0 {
                    alpha_max = alpha_max.min(tau * (nlp.upper[i] - it.x[i]) / dx[i]);
                }
            }
            for r in 0..self.mi {
                if ds[r] < 0.0 {
                    alpha_max = alpha_max.min(-tau * it.s[r] / ds[r]);
                }
            }
            let mut alpha_dual: f64 = 1.0;
            for r in 0..self.mi {
                if dy_i[r] < 0.0 {
                    alpha_dual = alpha_dual.min(-tau * it.y_i[r] / dy_i[r]);
                }
            }
            for i in 0..n {
                if self.has_lower[i] && dz_l[i] < 0.0 {
                    alpha_dual = alpha_dual.min(-tau * it.z_l[i] / dz_l[i]);
                }
                if self.has_upper[i] && dz_u[i] < 0.0 {
                    alpha_dual = alpha_dual.min(-tau * it.z_u[i] / dz_u[i]);
                }
            }

            // Filter line search.
            let theta_cur = self.theta(&ev.ce, &ev.ci, &it.s);
            let phi_cur = self.barrier_value(&it.x, &it.s, ev.f, mu);
            let mut gphi_d = 0.0;
            for i in 0..n {
                let mut g = ev.grad[i];
                if self.has_lower[i] {
                    g -= mu / (it.x[i] - nlp.lower[i]);
                }
                if self.has_upper[i] {
                    g += mu / (nlp.upper[i] - it.x[i]);
                }
                gphi_d += g * dx[i];
            }
            for r in 0..self.mi {
                gphi_d += -mu / it.s[r] * ds[r];
            }

            let mut alpha = alpha_max;
            let mut accepted = false;
            let mut f_type_step = false;
            let mut trial_ev = None;
            while alpha >= ALPHA_MIN {
                let xt: Vec<f64> = (0..n).map(|i| it.x[i] + alpha * dx[i]).collect();
                let st: Vec<f64> = (0..self.mi).map(|r| it.s[r] + alpha * ds[r]).collect();
                let evt = self.evaluate(&xt);
                if evt.finite() {
                    let theta_t = self.theta(&evt.ce, &evt.ci, &st);
                    let phi_t = self.barrier_value(&xt, &st, evt.f, mu);
                    if phi_t.is_finite() && theta_t <= theta_max {
                        let in_filter_margin = filter
                            .iter()
                            .all(|&(th, ph)| theta_t <= (1.0 - GAMMA_THETA) * th || phi_t <= ph - GAMMA_PHI * th);
                        let switching = gphi_d < 0.0
                            && alpha * (-gphi_d).powf(S_PHI) > DELTA_SWITCH * theta_cur.powf(S_THETA);
                        if theta_cur <= theta_min_factor && switching {
                            // f-type: Armijo decrease on the barrier objective.
                            if phi_t <= phi_cur + ETA_PHI * alpha * gphi_d && in_filter_margin {
                                accepted = true;
                                f_type_step = true;
                            }
                        } else if in_filter_margin
                            && (theta_t <= (1.0 - GAMMA_THETA) * theta_cur
                                || phi_t <= phi_cur - GAMMA_PHI * theta_cur)
                        {
                            accepted = true;
                        }
                        if accepted {
                            it.x = xt;
                            it.s = st;
                            trial_ev = Some(evt);
                            break;
                        }
                    }
                }
                alpha *= 0.5;
            }

            if self.debug && !accepted {
                eprintln!("    ls rejected: alpha_max {alpha_max:.2e} gphi_d {gphi_d:.3e} theta {theta_cur:.3e}");
            }
            if !accepted {
                stalls += 1;
                delta_x = delta_x.max(1e-4) * 10.0;
                if stalls >= 4 {
                    message = "line search stalled".into();
                    status = SolveStatus::IterLimit;
                    break;
                }
                continue;
            }
            stalls = 0;
            // Augment the filter unless the step was a pure Armijo (f-type) step.
            if !f_type_step {
                filter.push((
                    (1.0 - GAMMA_THETA) * theta_cur,
                    phi_cur - GAMMA_PHI * theta_cur,
                ));
            }

            for r in 0..self.me {
                it.y_e[r] += alpha * dy_e[r];
            }
            for r in 0..self.mi {
                it.y_i[r] = (it.y_i[r] + alpha_dual * dy_i[r]).max(1e-16);
            }
            for i in 0..n {
                if self.has_lower[i] {
                    it.z_l[i] = (it.z_l[i] + alpha_dual * dz_l[i]).max(1e-16);
                }
                if self.has_upper[i] {
                    it.z_u[i] = (it.z_u[i] + alpha_dual * dz_u[i]).max(1e-16);
                }
            }
            ev = trial_ev.unwrap();
            // Pull duals back toward the central path (kappa_Sigma safeguard).
            for r in 0..self.mi {
                let center = mu / it.s[r];
                it.y_i[r] = it.y_i[r].clamp(center / KAPPA_SIGMA, center * KAPPA_SIGMA);
            }
            for i in 0..n {
                if self.has_lower[i] {
                    let center = mu / (it.x[i] - nlp.lower[i]);
                    it.z_l[i] = it.z_l[i].clamp(center / KAPPA_SIGMA, center * KAPPA_SIGMA);
                }
                if self.has_upper[i] {
                    let center = mu / (nlp.upper[i] - it.x[i]);
                    it.z_u[i] = it.z_u[i].clamp(center / KAPPA_SIGMA, center * KAPPA_SIGMA);
                }
            }

            if opts.record_trace {
                trace.push(IterationRecord {
                    iteration: iterations,
                    mu,
                    cost: ev.f,
                    infeasibility: self.violation(&ev.ce, &ev.ci),
                    step: alpha,
                    regularization: delta_x,
                });
            }
        }

        // The last accepted point is only examined at the top of the next
        // iteration; fold it into the trackers before resolving status.
        {
            let viol = self.violation(&ev.ce, &ev.ci);
            if viol <= opts.feasibility_tol {
                let better = best_feasible.as_ref().map(|(c, _, _)| ev.f < *c).unwrap_or(true);
                if better {
                    best_feasible = Some((ev.f, it.x.clone(), viol));
                }
            }
            if viol < least_viol.0 {
                least_viol = (viol, it.x.clone(), ev.f);
            }
        }

        let (status, x, cost, viol) = match status {
            SolveStatus::Optimal => {
                let (c, x, v) = best_feasible.unwrap();
                (SolveStatus::Optimal, x, c, v)
            }
            SolveStatus::Failed => {
                let v = least_viol.clone();
                (SolveStatus::Failed, v.1, v.2, v.0)
            }
            _ => {
                if let Some((c, x, v)) = best_feasible {
                    (SolveStatus::Feasible, x, c, v)
                } else if iterations >= opts.max_iterations {
                    let v = least_viol.clone();
                    (SolveStatus::IterLimit, v.1, v.2, v.0)
                } else {
                    let v = least_viol.clone();
                    (SolveStatus::Infeasible, v.1, v.2, v.0)
                }
            }
        };
        SolveResult { status, x, cost, max_violation: viol, iterations, message, trace }
    }
}
