use hdsens::glmfit::{fit_nuisance, Arm, FitOptions};
use hdsens::simulate::{generate, SimScenario};
use std::time::Instant;

fn main() {
    env_logger::init();
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let sc = SimScenario::table_cell(n, 0.8, 1, 42);
    let data = generate(&sc, 0).unwrap();
    let t0 = Instant::now();
    let fit = fit_nuisance(&data, Arm::Treated, &FitOptions::default()).unwrap();
    println!("n={n} fit took {:?}", t0.elapsed());
    println!("outcome selected ({}): {:?}", fit.selected_outcome.len(), fit.selected_outcome);
    println!(
        "propensity selected ({}): {:?}",
        fit.selected_propensity.len(),
        fit.selected_propensity
    );
    if let Some(pf) = &fit.propensity_fit {
        println!("probit refit iters: {}", pf.iterations);
    }
}
