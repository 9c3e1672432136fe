use gaitopt::solver::{solve, SolveOptions};
use gaitopt::walker::*;
use gaitopt::WeightVector;
use std::time::Instant;

fn main() {
    let knots: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(15);
    let params = WalkerParams::default();
    let task = GaitTask::default();
    let w = WeightVector::new(vec![1.0, 1.0, 1.0]).unwrap().normalized();
    let nlp = build_gait_nlp(&params, &task, BasisSelection::Nominal, &w, knots).unwrap();
    println!("census: {:?}", nlp.census());
    let x0 = initial_guess(&params, &task, knots);
    println!("guess violation: {:.3e}, cost {:.4}", nlp.max_violation(&x0), nlp.cost(&x0));
    let opts = SolveOptions { record_trace: true, ..Default::default() };
    let t0 = Instant::now();
    let r = solve(&nlp, &x0, &opts);
    println!("status {:?} cost {:.6} viol {:.3e} iters {} in {:.2?} msg '{}'",
        r.status, r.cost, r.max_violation, r.iterations, t0.elapsed(), r.message);
    let n = r.trace.len();
    for t in r.trace.iter().rev().take(8).rev() {
        println!("  it {:3} mu {:9.2e} f {:12.5e} th {:9.2e} alpha {:9.2e} dx {:9.2e}", t.iteration, t.mu, t.cost, t.infeasibility, t.step, t.regularization);
    }
    let _ = n;
}
