use hdsens::aipw::{aipw_mean_y1, TargetParameter};
use hdsens::glmfit::{fit_nuisance, Arm, CvRule, FitOptions};
use hdsens::mathfn::inv_mills;
use hdsens::sensitivity::{bias_hat, sigma_corrected, sigma_naive};
use hdsens::simulate::{generate, oracle_e_lambda, true_tau, SimScenario};

fn main() {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let rho: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.8);
    let reps: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
    let rule = match args.get(4).map(|s| s.as_str()) {
        Some("one_se") => CvRule::OneSe,
        _ => CvRule::Min,
    };
    let mut sc = SimScenario::table_cell(n, rho, reps as usize, 777);
    sc.cv_rule = rule;
    let tau = true_tau(&sc);
    let e_lam = oracle_e_lambda(&sc.gamma_vec());
    println!("tau={tau:.4} E(lambda(g))={e_lam:.4} true b={:.4}", rho * e_lam);
    let (mut s_sig, mut s_sigc, mut s_lam, mut s_center, mut s_center2, mut s_se, mut s_df) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut s_lam_true, mut s_tau_err) = (0.0, 0.0);
    for rep in 0..reps {
        let data = generate(&sc, rep).unwrap();
        let opt = FitOptions {
            cv_seed: rep,
            propensity_cv_rule: rule,
            ..FitOptions::default()
        };
        let fit = fit_nuisance(&data, Arm::Treated, &opt).unwrap();
        let aipw = aipw_mean_y1(&data, &fit).unwrap();
        let sig = sigma_naive(&data, &fit).unwrap();
        let sigc = sigma_corrected(&data, &fit, rho).unwrap();
        let b = bias_hat(&fit, rho, sig, TargetParameter::MeanY1).unwrap();
        // in-sample mean of lambda at the TRUE index
        let (_, g_true) = hdsens::simulate::truth(&sc, &data);
        let lam_true: f64 =
            g_true.iter().map(|&g| inv_mills(g)).sum::<f64>() / data.n() as f64;
        s_sig += sig;
        s_sigc += sigc;
        s_lam += b.lambda_bar;
        s_lam_true += lam_true;
        let center = aipw.estimate - b.b_hat - tau;
        s_center += center;
        s_center2 += center * center;
        s_se += aipw.standard_error();
        s_df += fit.selected_propensity.len() as f64;
        s_tau_err += aipw.estimate - (tau + rho * e_lam);
    }
    let m = reps as f64;
    let center_mean = s_center / m;
    let center_sd = (s_center2 / m - center_mean * center_mean).sqrt();
    println!("mean sigma_naive   = {:.4} (pop limit {:.4})", s_sig / m, (1.0f64 - rho * rho * 0.5314365).sqrt());
    println!("mean sigma_corr    = {:.4} (true 1.0)", s_sigc / m);
    println!("mean lambda_bar    = {:.4} (E lambda(g) {:.4}, in-sample true {:.4})", s_lam / m, e_lam, s_lam_true / m);
    println!("mean tau_hat - tau^- = {:.4}", s_tau_err / m);
    println!("mean center error  = {:.4} (sd across reps {:.4})", center_mean, center_sd);
    println!("mean SE_hat        = {:.4}", s_se / m);
    println!("mean propensity df = {:.1}", s_df / m);
    println!("implied z = {:.2}", center_mean / (s_se / m));
}
