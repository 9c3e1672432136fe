//! Constrained NLP solving: the built-in interior-point baseline, a pluggable
//! backend interface, and the multi-start restart protocol.

pub mod interior_point;
pub mod linalg;

use crate::transcription::NlpProblem;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveOptions {
    #[serde(default = "default_feas_tol")]
    pub feasibility_tol: f64,
    #[serde(default = "default_opt_tol")]
    pub optimality_tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iterations: usize,
    /// Initial barrier parameter.
    #[serde(default = "default_mu_init")]
    pub mu_init: f64,
    #[serde(default)]
    pub seed: u64,
    /// Record per-iteration progress rows in the result.
    #[serde(default)]
    pub record_trace: bool,
    /// Backend name; the built-in solver is `interior-point`.
    #[serde(default = "default_backend")]
    pub backend: String,
}

fn default_feas_tol() -> f64 {
    1e-6
}
fn default_opt_tol() -> f64 {
    1e-6
}
fn default_max_iter() -> usize {
    3000
}
fn default_mu_init() -> f64 {
    0.1
}
fn default_backend() -> String {
    "interior-point".into()
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feasibility_tol: default_feas_tol(),
            optimality_tol: default_opt_tol(),
            max_iterations: default_max_iter(),
            mu_init: default_mu_init(),
            seed: 0,
            record_trace: false,
            backend: default_backend(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.feasibility_tol > 0.0) || !(self.optimality_tol > 0.0) {
            return Err(crate::Error::Config("solver tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    /// KKT conditions hold to tolerance at a feasible point.
    Optimal,
    /// A feasible point was found but optimality was not certified.
    Feasible,
    /// Terminated at an infeasible point.
    Infeasible,
    /// Iteration budget exhausted without a feasible point.
    IterLimit,
    /// Numerical breakdown (non-finite values, factorization failure).
    Failed,
}

impl SolveStatus {
    pub fn is_feasible(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mu: f64,
    pub cost: f64,
    pub infeasibility: f64,
    pub step: f64,
    pub regularization: f64,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub cost: f64,
    pub max_violation: f64,
    pub iterations: usize,
    pub message: String,
    pub trace: Vec<IterationRecord>,
}

/// Solver backend interface; lets an external NLP solver stand in for the
/// built-in one behind the same contract.
pub trait NlpBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, nlp: &NlpProblem, x0: &[f64], opts: &SolveOptions) -> SolveResult;
}

/// Built-in primal-dual interior-point solver.
pub struct InteriorPointSolver;

impl NlpBackend for InteriorPointSolver {
    fn name(&self) -> &str {
        "interior-point"
    }
    fn solve(&self, nlp: &NlpProblem, x0: &[f64], opts: &SolveOptions) -> SolveResult {
        interior_point::solve_ipm(nlp, x0, opts)
    }
}

/// Resolve a backend by name.
pub fn backend(name: &str) -> crate::Result<Box<dyn NlpBackend>> {
    match name {
        "interior-point" => Ok(Box::new(InteriorPointSolver)),
        other => Err(crate::Error::Config(format!(
            "unknown solver backend `{other}`; available: interior-point"
        ))),
    }
}

/// Solve with the backend named in the options.
pub fn solve(nlp: &NlpProblem, x0: &[f64], opts: &SolveOptions) -> SolveResult {
    match backend(&opts.backend) {
        Ok(b) => b.solve(nlp, x0, opts),
        Err(e) => SolveResult {
            status: SolveStatus::Failed,
            x: x0.to_vec(),
            cost: f64::NAN,
            max_violation: f64::NAN,
            iterations: 0,
            message: e.to_string(),
            trace: Vec::new(),
        },
    }
}

/// Per-variable noise scales for restart perturbations: `scale * span` of the
/// variable's signal channel over the base point, falling back to `|x0_i|`
/// and then to 1 for flat channels.
pub fn restart_noise_sigmas(nlp: &NlpProblem, base: &[f64], scale: f64) -> Vec<f64> {
    let nch = nlp.space.channel_count();
    let mut lo = vec![f64::INFINITY; nch];
    let mut hi = vec![f64::NEG_INFINITY; nch];
    for (i, &v) in base.iter().enumerate() {
        let c = nlp.space.channel(i);
        lo[c] = lo[c].min(v);
        hi[c] = hi[c].max(v);
    }
    base.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = nlp.space.channel(i);
            let span = hi[c] - lo[c];
            let basis = if span > 0.0 {
                span
            } else if v.abs() > 0.0 {
                v.abs()
            } else {
                1.0
            };
            scale * basis
        })
        .collect()
}

/// Run `n` solves from `base_x0` plus `n - 1` Gaussian-perturbed copies and
/// return the feasible result with lowest cost. If no start is feasible,
/// returns the least-violating result with status downgraded to
/// `Infeasible`. Deterministic given the seed: perturbations are drawn per
/// start index and results are reduced in index order.
pub fn multi_start(
    nlp: &NlpProblem,
    base_x0: &[f64],
    n: usize,
    noise_scale: f64,
    seed: u64,
    opts: &SolveOptions,
) -> SolveResult {
    assert!(n >= 1, "multi_start requires n >= 1");
    let sigmas = restart_noise_sigmas(nlp, base_x0, noise_scale);
    let starts: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            if k == 0 {
                base_x0.to_vec()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                base_x0
                    .iter()
                    .zip(sigmas.iter())
                    .map(|(&v, &s)| {
                        v + s * rng.sample::<f64, _>(rand_distr::StandardNormal)
                    })
                    .collect()
            }
        })
        .collect();

    let results: Vec<SolveResult> = starts
        .par_iter()
        .map(|x0| solve(nlp, x0, opts))
        .collect();

    let mut best_feasible: Option<&SolveResult> = None;
    let mut least_violating: Option<&SolveResult> = None;
    for r in &results {
        if r.status.is_feasible() {
            let better = best_feasible.map(|b| r.cost < b.cost).unwrap_or(true);
            if better {
                best_feasible = Some(r);
            }
        }
        let lv = least_violating
            .map(|b| {
                r.max_violation.is_finite() && (!b.max_violation.is_finite() || r.max_violation < b.max_violation)
            })
            .unwrap_or(true);
        if lv {
            least_violating = Some(r);
        }
    }
    if let Some(best) = best_feasible {
        best.clone()
    } else {
        let mut r = least_violating.expect("at least one start").clone();
        if r.status != SolveStatus::Failed {
            r.status = SolveStatus::Infeasible;
        }
        r
    }
}
