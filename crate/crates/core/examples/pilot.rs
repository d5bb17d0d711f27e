use hdsens::glmfit::CvRule;
use hdsens::simulate::{run_coverage, SimScenario};
use std::time::Instant;

fn main() {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let rho: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.8);
    let reps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(24);
    let rule = match args.get(4).map(|s| s.as_str()) {
        Some("one_se") => CvRule::OneSe,
        _ => CvRule::Min,
    };
    let mut sc = SimScenario::table_cell(n, rho, reps, 20260811);
    sc.cv_rule = rule;
    if let Some(t) = args.get(5).and_then(|s| s.parse::<f64>().ok()) {
        sc.trim = t;
    }
    let t0 = Instant::now();
    let table = run_coverage(&sc).unwrap();
    for r in &table.rows {
        println!(
            "n={} rho={} {}: coverage {:.3} (se {:.3}), width {:.3}, failures {}",
            r.n, r.rho, r.estimator.label(), r.coverage, r.mc_se, r.mean_ci_width, r.failures
        );
    }
    println!("{} reps in {:?} ({:?}/rep/core est)", reps, t0.elapsed(), t0.elapsed() / reps as u32 * 2);
}
