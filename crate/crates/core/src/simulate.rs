//! Data-generating process, Monte Carlo coverage harness and nuisance-rate
//! diagnostics.
//!
//! The DGP: covariates iid N(0,1); latent treatment T* = X gamma + eta with
//! T = 1{T* > 0}; Y(1) = 2 + X beta - rho * lambda(X gamma) + xi, where
//! (eta, xi) are bivariate standard normal with correlation rho (sampled by
//! Cholesky, xi = rho*eta + sqrt(1-rho^2)*eps). The -rho*lambda term makes
//! E(Y(1) | X, T=1) = 2 + X beta exactly, so the linear outcome model on
//! treated rows is correctly specified while E(Y(1)) = 2 - rho E(lambda(X gamma)).

use crate::aipw::{aipw_mean_y1, TargetParameter};
use crate::data::{Dataset, DesignMatrix};
use crate::error::{Error, Result};
use crate::glmfit::{fit_nuisance, Arm, CvRule, FitOptions, NuisanceFit};
use crate::mathfn::{inv_mills, norm_cdf};
use crate::sensitivity::{bias_hat, confidence_interval, sigma_corrected, sigma_naive, BiasEstimate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;

/// Bias estimator variants compared in the coverage study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasEstimator {
    /// true sigma = 1, true rho, oracle E(lambda(g(X)))
    OracleBias,
    /// plug-in: naive sigma_hat and E_n[lambda(g_hat)]
    PlugInBias,
    /// corrected sigma_hat_c and E_n[lambda(g_hat)]
    CorrectedBias,
}

impl BiasEstimator {
    pub fn label(&self) -> &'static str {
        match self {
            BiasEstimator::OracleBias => "oracle",
            BiasEstimator::PlugInBias => "plugin",
            BiasEstimator::CorrectedBias => "corrected",
        }
    }
}

/// Optional symmetric extension generating the control potential outcome
/// `Y(0) = intercept0 + X beta0 - rho0 * lambda(X gamma) + xi0`, mirroring
/// the treated-arm construction (an extension for ATE scenarios; the
/// coverage study of the main grid never uses it).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AteExtension {
    #[serde(default)]
    pub intercept0: f64,
    /// defaults to the treated-arm beta
    #[serde(default)]
    pub beta0: Option<Vec<f64>>,
    #[serde(default)]
    pub rho0: f64,
    /// share the treated-arm noise xi (makes the two arms literally
    /// identical when the other parameters match)
    #[serde(default)]
    pub share_xi: bool,
}

/// A simulation scenario: dimensions, confounding level, replication count
/// and seed. `beta`/`gamma` default to the standard sparse patterns
/// 0.6*(1,1/2,1/3,1/4,1/5,1,1/2,1/3,1/4,1/5,0,...) and
/// 0.3*(1,1/2,1/3,1/4,1/5,1,1,1,1,1,0,...).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimScenario {
    pub n: usize,
    /// defaults to n
    #[serde(default)]
    pub p: Option<usize>,
    pub rho: f64,
    pub n_reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<BiasEstimator>,
    #[serde(default)]
    pub ate: Option<AteExtension>,
    /// propensity trim floor passed to the fits
    #[serde(default = "default_trim")]
    pub trim: f64,
    /// probit-lasso cross-validation rule
    #[serde(default = "default_cv_rule")]
    pub cv_rule: CvRule,
}

fn default_cv_rule() -> CvRule {
    CvRule::OneSe
}

fn default_estimators() -> Vec<BiasEstimator> {
    vec![BiasEstimator::OracleBias, BiasEstimator::PlugInBias, BiasEstimator::CorrectedBias]
}

fn default_trim() -> f64 {
    0.01
}

impl SimScenario {
    /// The standard grid cell: given n (= p), rho, replication count, seed.
    pub fn table_cell(n: usize, rho: f64, n_reps: usize, seed: u64) -> Self {
        SimScenario {
            n,
            p: None,
            rho,
            n_reps,
            seed,
            beta: None,
            gamma: None,
            estimators: default_estimators(),
            ate: None,
            trim: default_trim(),
            cv_rule: default_cv_rule(),
        }
    }

    pub fn dim_p(&self) -> usize {
        self.p.unwrap_or(self.n)
    }

    pub fn beta_vec(&self) -> Vec<f64> {
        self.beta.clone().unwrap_or_else(|| default_beta(self.dim_p()))
    }

    pub fn gamma_vec(&self) -> Vec<f64> {
        self.gamma.clone().unwrap_or_else(|| default_gamma(self.dim_p()))
    }

    fn validate(&self) -> Result<()> {
        if self.n_reps < 1 {
            return Err(Error::InvalidArgument("n_reps must be >= 1".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!("|rho| < 1 required, got {}", self.rho)));
        }
        let p = self.dim_p();
        if let Some(b) = &self.beta {
            if b.len() != p {
                return Err(Error::InvalidArgument(format!("beta length {} != p {p}", b.len())));
            }
        }
        if let Some(g) = &self.gamma {
            if g.len() != p {
                return Err(Error::InvalidArgument(format!("gamma length {} != p {p}", g.len())));
            }
        }
        Ok(())
    }
}

/// 0.6*(1, 1/2, 1/3, 1/4, 1/5, 1, 1/2, 1/3, 1/4, 1/5, 0, ..., 0), truncated
/// for p < 10.
pub fn default_beta(p: usize) -> Vec<f64> {
    let pattern = [1.0, 0.5, 1.0 / 3.0, 0.25, 0.2, 1.0, 0.5, 1.0 / 3.0, 0.25, 0.2];
    (0..p).map(|j| if j < 10 { 0.6 * pattern[j] } else { 0.0 }).collect()
}

/// 0.3*(1, 1/2, 1/3, 1/4, 1/5, 1, 1, 1, 1, 1, 0, ..., 0), truncated for
/// p < 10.
pub fn default_gamma(p: usize) -> Vec<f64> {
    let pattern = [1.0, 0.5, 1.0 / 3.0, 0.25, 0.2, 1.0, 1.0, 1.0, 1.0, 1.0];
    (0..p).map(|j| if j < 10 { 0.3 * pattern[j] } else { 0.0 }).collect()
}

/// Deterministic draw of one replication: rep_index selects an independent
/// ChaCha stream under the scenario seed. The design has no intercept column
/// (the constant 2 lives in the outcome equation; the fitting pipeline adds
/// its own intercept). For non-ATE scenarios the control-row outcome is left
/// NaN: it is never observed and never read.
pub fn generate(scenario: &SimScenario, rep_index: u64) -> Result<Dataset> {
    scenario.validate()?;
    let n = scenario.n;
    let p = scenario.dim_p();
    let beta = scenario.beta_vec();
    let gamma = scenario.gamma_vec();
    let mut rng = ChaCha12Rng::seed_from_u64(scenario.seed);
    rng.set_stream(rep_index);

    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
    for _ in 0..p {
        cols.push((0..n).map(|_| rng.sample(StandardNormal)).collect());
    }
    let mut xb = vec![0.0; n];
    let mut xg = vec![0.0; n];
    for (j, col) in cols.iter().enumerate() {
        if beta[j] != 0.0 {
            for (acc, &v) in xb.iter_mut().zip(col) {
                *acc += beta[j] * v;
            }
        }
        if gamma[j] != 0.0 {
            for (acc, &v) in xg.iter_mut().zip(col) {
                *acc += gamma[j] * v;
            }
        }
    }

    // control-arm linear predictor when an ATE extension is configured
    let xb0: Option<Vec<f64>> = scenario.ate.as_ref().map(|ext| match &ext.beta0 {
        None => xb.clone(),
        Some(b0) => {
            let mut acc = vec![0.0; n];
            for (j, col) in cols.iter().enumerate() {
                if b0[j] != 0.0 {
                    for (a, &v) in acc.iter_mut().zip(col) {
                        *a += b0[j] * v;
                    }
                }
            }
            acc
        }
    });

    let rho = scenario.rho;
    let rho_c = (1.0 - rho * rho).sqrt();
    let mut treat = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let eta: f64 = rng.sample(StandardNormal);
        let eps: f64 = rng.sample(StandardNormal);
        let xi = rho * eta + rho_c * eps;
        let t = xg[i] + eta > 0.0;
        let yi = if t {
            2.0 + xb[i] - rho * inv_mills(xg[i]) + xi
        } else if let Some(ext) = &scenario.ate {
            let xi0 = if ext.share_xi {
                xi
            } else {
                let eps0: f64 = rng.sample(StandardNormal);
                ext.rho0 * eta + (1.0 - ext.rho0 * ext.rho0).sqrt() * eps0
            };
            ext.intercept0 + xb0.as_ref().unwrap()[i] - ext.rho0 * inv_mills(xg[i]) + xi0
        } else {
            // the control potential outcome is never observed in a Y(1)-only
            // scenario; NaN trips any code path that wrongly reads it
            f64::NAN
        };
        treat.push(t);
        y.push(yi);
    }
    let design = DesignMatrix::from_columns(cols, vec![], false)?;
    Dataset::new(design, treat, y)
}

/// True nuisance values for a generated dataset: m(X) = 2 + X beta (the
/// lambda terms cancel on treated rows) and g(X) = X gamma.
pub fn truth(scenario: &SimScenario, data: &Dataset) -> (Vec<f64>, Vec<f64>) {
    let beta = scenario.beta_vec();
    let gamma = scenario.gamma_vec();
    let xb = data.design.xdot(&beta);
    let xg = data.design.xdot(&gamma);
    (xb.iter().map(|v| 2.0 + v).collect(), xg)
}

const ORACLE_SEED: u64 = 0x5EED_0F0A_C1E5;
const ORACLE_DRAWS: usize = 1_000_000;

/// Monte Carlo oracle for E(lambda(X gamma)) with a fixed seed; since
/// X gamma ~ N(0, ||gamma||^2) only the norm matters, and values are cached
/// per norm.
pub fn oracle_e_lambda(gamma: &[f64]) -> f64 {
    static CACHE: Mutex<Option<HashMap<u64, f64>>> = Mutex::new(None);
    let s = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
    let key = s.to_bits();
    let mut guard = CACHE.lock().unwrap();
    let map = guard.get_or_insert_with(HashMap::new);
    if let Some(&v) = map.get(&key) {
        return v;
    }
    let mut rng = ChaCha12Rng::seed_from_u64(ORACLE_SEED);
    let mut acc = 0.0;
    for _ in 0..ORACLE_DRAWS {
        let z: f64 = rng.sample(StandardNormal);
        acc += inv_mills(s * z);
    }
    let v = acc / ORACLE_DRAWS as f64;
    map.insert(key, v);
    v
}

/// True target value tau = E(Y(1)) = 2 - rho * E(lambda(X gamma)), with the
/// expectation from the fixed-seed Monte Carlo oracle (affine in rho).
pub fn true_tau(scenario: &SimScenario) -> f64 {
    2.0 - scenario.rho * oracle_e_lambda(&scenario.gamma_vec())
}

/// One row of a coverage table.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageRow {
    pub n: usize,
    pub rho: f64,
    pub estimator: BiasEstimator,
    pub n_reps: usize,
    /// replications excluded by fit failures
    pub failures: usize,
    pub coverage: f64,
    pub mean_ci_width: f64,
    /// binomial Monte Carlo standard error of the coverage estimate
    pub mc_se: f64,
    /// true when more than 2% of replications failed
    pub flagged: bool,
}

/// Empirical coverage results keyed by (n, rho, estimator).
#[derive(Debug, Clone, Default, Serialize)]
pub struct CoverageTable {
    pub rows: Vec<CoverageRow>,
}

impl CoverageTable {
    pub fn merge(&mut self, other: CoverageTable) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,rho,estimator,n_reps,failures,coverage,mean_ci_width,mc_se,flagged")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{:.6},{:.6},{:.6},{}",
                r.n,
                r.rho,
                r.estimator.label(),
                r.n_reps,
                r.failures,
                r.coverage,
                r.mean_ci_width,
                r.mc_se,
                r.flagged
            )?;
        }
        Ok(())
    }

    /// Text rendering in the usual layout: one block of columns per
    /// estimator, rho decreasing within a block, one row per sample size.
    pub fn render_text(&self) -> String {
        let mut ns: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        ns.sort_unstable();
        ns.dedup();
        let mut rhos: Vec<f64> = self.rows.iter().map(|r| r.rho).collect();
        rhos.sort_by(|a, b| b.partial_cmp(a).unwrap());
        rhos.dedup();
        let ests: Vec<BiasEstimator> = [
            BiasEstimator::OracleBias,
            BiasEstimator::PlugInBias,
            BiasEstimator::CorrectedBias,
        ]
        .into_iter()
        .filter(|e| self.rows.iter().any(|r| r.estimator == *e))
        .collect();

        let mut out = String::new();
        out.push_str("Empirical coverages of 95% confidence intervals\n\n");
        out.push_str("estimator      ");
        for e in &ests {
            out.push_str(&format!("| {:<width$}", e.label(), width = 8 * rhos.len() - 2));
        }
        out.push('\n');
        out.push_str("n \\ rho        ");
        for _ in &ests {
            out.push('|');
            for r in &rhos {
                out.push_str(&format!(" {r:>6.2}"));
            }
            out.push(' ');
        }
        out.push('\n');
        for n in &ns {
            out.push_str(&format!("{n:<15}"));
            for e in &ests {
                out.push('|');
                for r in &rhos {
                    let cell = self
                        .rows
                        .iter()
                        .find(|row| row.n == *n && row.rho == *r && row.estimator == *e);
                    match cell {
                        Some(c) => out.push_str(&format!(
                            " {:>5.2}{}",
                            c.coverage,
                            if c.flagged { "*" } else { " " }
                        )),
                        None => out.push_str("     - "),
                    }
                }
            }
            out.push('\n');
        }
        if self.rows.iter().any(|r| r.flagged) {
            out.push_str("\n* more than 2% of replications failed and were excluded\n");
        }
        out
    }
}

struct RepOutcome {
    /// per estimator: Some((covered, ci_width)) or None when that estimator
    /// failed on this replication
    results: Vec<Option<(bool, f64)>>,
    fit_failed: bool,
}

/// Run the coverage study for one scenario: per replication, generate data,
/// fit the post-lasso nuisances, form the AIPW estimate and each estimator's
/// bias-corrected confidence interval, and tabulate coverage of the true tau.
/// Replications run in parallel and are reduced in index order.
pub fn run_coverage(scenario: &SimScenario) -> Result<CoverageTable> {
    scenario.validate()?;
    if scenario.estimators.is_empty() {
        return Err(Error::InvalidArgument("estimators must be nonempty".into()));
    }
    let tau = true_tau(scenario);
    let e_lambda = oracle_e_lambda(&scenario.gamma_vec());
    let outcomes: Vec<RepOutcome> = (0..scenario.n_reps as u64)
        .into_par_iter()
        .map(|rep| run_rep(scenario, rep, e_lambda, tau))
        .collect();

    let mut rows = Vec::with_capacity(scenario.estimators.len());
    for (ei, est) in scenario.estimators.iter().enumerate() {
        let mut covered = 0usize;
        let mut used = 0usize;
        let mut width_sum = 0.0;
        let mut failures = 0usize;
        for o in &outcomes {
            match &o.results[ei] {
                Some((c, w)) => {
                    used += 1;
                    covered += usize::from(*c);
                    width_sum += w;
                }
                None => failures += 1,
            }
        }
        let coverage = if used > 0 { covered as f64 / used as f64 } else { f64::NAN };
        let mc_se =
            if used > 0 { (coverage * (1.0 - coverage) / used as f64).sqrt() } else { f64::NAN };
        let flagged = failures as f64 > 0.02 * scenario.n_reps as f64;
        if flagged {
            log::warn!(
                "coverage row (n={}, rho={}, {}) excluded {} of {} replications",
                scenario.n,
                scenario.rho,
                est.label(),
                failures,
                scenario.n_reps
            );
        }
        rows.push(CoverageRow {
            n: scenario.n,
            rho: scenario.rho,
            estimator: *est,
            n_reps: scenario.n_reps,
            failures,
            coverage,
            mean_ci_width: if used > 0 { width_sum / used as f64 } else { f64::NAN },
            mc_se,
            flagged,
        });
    }
    Ok(CoverageTable { rows })
}

fn run_rep(scenario: &SimScenario, rep: u64, e_lambda: f64, tau: f64) -> RepOutcome {
    let k = scenario.estimators.len();
    let fail = RepOutcome { results: vec![None; k], fit_failed: true };
    let Ok(data) = generate(scenario, rep) else { return fail };
    let options = FitOptions {
        trim_floor: scenario.trim,
        cv_seed: scenario.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(rep),
        propensity_cv_rule: scenario.cv_rule,
        ..FitOptions::default()
    };
    let Ok(fit) = fit_nuisance(&data, Arm::Treated, &options) else { return fail };
    let Ok(aipw) = aipw_mean_y1(&data, &fit) else { return fail };

    let results = scenario
        .estimators
        .iter()
        .map(|est| {
            let bias = match est {
                BiasEstimator::OracleBias => Some(BiasEstimate {
                    rho: scenario.rho,
                    sigma_hat: 1.0,
                    lambda_bar: e_lambda,
                    b_hat: scenario.rho * e_lambda,
                    corrected: false,
                }),
                BiasEstimator::PlugInBias => sigma_naive(&data, &fit)
                    .and_then(|s| bias_hat(&fit, scenario.rho, s, TargetParameter::MeanY1))
                    .ok(),
                BiasEstimator::CorrectedBias => sigma_corrected(&data, &fit, scenario.rho)
                    .and_then(|s| bias_hat(&fit, scenario.rho, s, TargetParameter::MeanY1))
                    .ok(),
            };
            bias.map(|b| {
                let (lo, _, hi) = confidence_interval(&aipw, &b, 0.05);
                (lo <= tau && tau <= hi, hi - lo)
            })
        })
        .collect();
    RepOutcome { results, fit_failed: false }
}

/// Per-replication nuisance-rate diagnostics for the convergence conditions:
/// E_n[(m_hat - m)^2], E_n[(e_hat - e)^2] and sqrt(n) * the product of their
/// square roots.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRecord {
    pub rep: u64,
    pub mse_m: f64,
    pub mse_e: f64,
    /// sqrt(E_n[(m_hat-m)^2]) * sqrt(E_n[(e_hat-e)^2]) * sqrt(n)
    pub product_rate: f64,
}

/// Whether diagnostics evaluate the fitted pipeline or plug in the oracle
/// nuisances (which gives exact zeros).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticsMode {
    Fitted,
    Oracle,
}

/// Nuisance diagnostics across replications (parallel, reduced in order).
pub fn nuisance_diagnostics(
    scenario: &SimScenario,
    mode: DiagnosticsMode,
) -> Result<Vec<DiagnosticsRecord>> {
    scenario.validate()?;
    (0..scenario.n_reps as u64)
        .into_par_iter()
        .map(|rep| {
            let data = generate(scenario, rep)?;
            let (m_true, g_true) = truth(scenario, &data);
            let e_true: Vec<f64> = g_true.iter().map(|&g| norm_cdf(g)).collect();
            let (m_hat, e_hat) = match mode {
                DiagnosticsMode::Oracle => (m_true.clone(), e_true.clone()),
                DiagnosticsMode::Fitted => {
                    let options = FitOptions {
                        trim_floor: scenario.trim,
                        cv_seed: scenario
                            .seed
                            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                            .wrapping_add(rep),
                        propensity_cv_rule: scenario.cv_rule,
                        ..FitOptions::default()
                    };
                    let fit = fit_nuisance(&data, Arm::Treated, &options)?;
                    (fit.m_hat.clone(), fit.e_hat.clone())
                }
            };
            let n = data.n() as f64;
            let mse_m =
                m_hat.iter().zip(&m_true).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
            let mse_e =
                e_hat.iter().zip(&e_true).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
            Ok(DiagnosticsRecord {
                rep,
                mse_m,
                mse_e,
                product_rate: mse_m.sqrt() * mse_e.sqrt() * n.sqrt(),
            })
        })
        .collect()
}

/// Oracle nuisance fit for a generated dataset (true m and g).
pub fn oracle_fit(scenario: &SimScenario, data: &Dataset, trim: f64) -> Result<NuisanceFit> {
    let (m, g) = truth(scenario, data);
    NuisanceFit::from_values(Arm::Treated, m, g, &data.treat, trim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_patterns_match_definitions() {
        let b = default_beta(12);
        assert!((b[0] - 0.6).abs() < 1e-15);
        assert!((b[4] - 0.12).abs() < 1e-15);
        assert!((b[5] - 0.6).abs() < 1e-15);
        assert_eq!(b[10], 0.0);
        let g = default_gamma(12);
        assert!((g[1] - 0.15).abs() < 1e-15);
        assert!((g[9] - 0.3).abs() < 1e-15);
        assert_eq!(g[11], 0.0);
    }

    #[test]
    fn generate_is_deterministic_per_rep() {
        let sc = SimScenario::table_cell(50, 0.4, 1, 99);
        let d1 = generate(&sc, 3).unwrap();
        let d2 = generate(&sc, 3).unwrap();
        assert_eq!(d1.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   d2.y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(d1.treat, d2.treat);
        let d3 = generate(&sc, 4).unwrap();
        assert_ne!(d1.treat, d3.treat);
    }

    #[test]
    fn error_correlation_matches_rho() {
        // reconstruct (eta, xi) from the generated data: eta and xi are not
        // directly observable, so check the observable implication instead:
        // with rho = 0 the sample correlation of (T - E(T|X)) and the outcome
        // residual on treated rows is near 0 at large n. Simplest proxy per
        // the DGP contract: regenerate with rho = 0 and check the residual
        // correlation between treatment indicator and xi via y.
        let sc = SimScenario { p: Some(10), ..SimScenario::table_cell(10_000, 0.0, 1, 7) };
        let data = generate(&sc, 0).unwrap();
        let (m, g) = truth(&sc, &data);
        // on treated rows: y - m = xi - rho*lambda = xi; correlation of xi
        // with eta-proxy should vanish; use corr(xi, g) as a smoke check and
        // corr with the treatment latent sign
        let mut xs = Vec::new();
        let mut es = Vec::new();
        for i in 0..data.n() {
            if data.treat[i] {
                xs.push(data.y[i] - m[i]);
                es.push(g[i]);
            }
        }
        let nn = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / nn;
        let me = es.iter().sum::<f64>() / nn;
        let cov: f64 =
            xs.iter().zip(&es).map(|(a, b)| (a - mx) * (b - me)).sum::<f64>() / nn;
        let sx = (xs.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / nn).sqrt();
        let se = (es.iter().map(|a| (a - me) * (a - me)).sum::<f64>() / nn).sqrt();
        assert!((cov / (sx * se)).abs() < 0.05);
    }

    #[test]
    fn marginal_treatment_probability_is_half() {
        // X gamma + eta is symmetric around 0, so P(T=1) = 1/2; frozen
        // Monte Carlo value with the fixed oracle seed stays within 2e-3.
        let sc = SimScenario { p: Some(10), ..SimScenario::table_cell(200, 0.2, 1, 1) };
        let gamma = sc.gamma_vec();
        let s = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
        let mut rng = ChaCha12Rng::seed_from_u64(ORACLE_SEED);
        let mut count = 0usize;
        let draws = 1_000_000;
        for _ in 0..draws {
            let zg: f64 = rng.sample(StandardNormal);
            let eta: f64 = rng.sample(StandardNormal);
            if s * zg + eta > 0.0 {
                count += 1;
            }
        }
        let p_hat = count as f64 / draws as f64;
        assert!((p_hat - 0.5).abs() < 2e-3, "P(T=1) MC = {p_hat}");
    }

    #[test]
    fn true_tau_is_affine_in_rho_and_exact_at_zero() {
        let s0 = SimScenario::table_cell(100, 0.0, 1, 5);
        assert_eq!(true_tau(&s0), 2.0);
        let e = oracle_e_lambda(&s0.gamma_vec());
        for rho in [0.2, 0.4, 0.8, -0.3] {
            let s = SimScenario::table_cell(100, rho, 1, 5);
            assert!((true_tau(&s) - (2.0 - rho * e)).abs() < 1e-15);
        }
    }

    #[test]
    fn oracle_e_lambda_matches_quadrature() {
        // independent oracle: Simpson quadrature of E(lambda(s Z))
        let gamma = default_gamma(500);
        let s = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
        let f = |z: f64| inv_mills(s * z) * crate::mathfn::norm_pdf(z);
        let (a, b, m) = (-10.0, 10.0, 20_000usize);
        let h = (b - a) / m as f64;
        let mut integral = f(a) + f(b);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            integral += w * f(a + i as f64 * h);
        }
        integral *= h / 3.0;
        let mc = oracle_e_lambda(&gamma);
        assert!(
            (mc - integral).abs() < 1.5e-3,
            "MC {mc} vs quadrature {integral} (||gamma|| = {s})"
        );
    }

    #[test]
    fn treated_conditional_mean_is_linear() {
        // E(Y(1)|X, T=1) = 2 + X beta: regressing Y on the true support over
        // treated rows recovers beta within sampling error
        let sc = SimScenario { p: Some(10), ..SimScenario::table_cell(20_000, 0.6, 1, 11) };
        let data = generate(&sc, 0).unwrap();
        let x = data.design.with_intercept();
        let x_t = x.filter_rows(&data.treat).unwrap();
        let y_t: Vec<f64> =
            data.y.iter().zip(&data.treat).filter(|(_, &t)| t).map(|(&v, _)| v).collect();
        let fit = crate::glmfit::refit_linear(&x_t, &y_t, &(1..=10).collect::<Vec<_>>()).unwrap();
        let beta = sc.beta_vec();
        assert!((fit.coefficients[0] - 2.0).abs() < 0.06, "intercept {}", fit.coefficients[0]);
        for j in 0..10 {
            assert!(
                (fit.coefficients[j + 1] - beta[j]).abs() < 0.06,
                "beta_{j}: {} vs {}",
                fit.coefficients[j + 1],
                beta[j]
            );
        }
    }

    #[test]
    fn misspecified_outcome_mse_matches_moment() {
        // m_hat = 0: E_n[(0 - m)^2] ~ 4 + var(X beta) = 4 + ||beta||^2
        let sc = SimScenario { p: Some(10), ..SimScenario::table_cell(40_000, 0.0, 1, 13) };
        let data = generate(&sc, 0).unwrap();
        let (m, _) = truth(&sc, &data);
        let mse = m.iter().map(|v| v * v).sum::<f64>() / data.n() as f64;
        let beta = sc.beta_vec();
        let expected = 4.0 + beta.iter().map(|b| b * b).sum::<f64>();
        assert!((mse - expected).abs() < 0.15, "mse {mse} vs {expected}");
    }

    #[test]
    fn oracle_diagnostics_are_exactly_zero() {
        let sc = SimScenario { p: Some(20), ..SimScenario::table_cell(200, 0.2, 3, 17) };
        let recs = nuisance_diagnostics(&sc, DiagnosticsMode::Oracle).unwrap();
        assert_eq!(recs.len(), 3);
        for r in recs {
            assert_eq!(r.mse_m, 0.0);
            assert_eq!(r.mse_e, 0.0);
            assert_eq!(r.product_rate, 0.0);
        }
    }

    #[test]
    fn coverage_run_is_bit_reproducible() {
        let sc = SimScenario {
            p: Some(30),
            ..SimScenario::table_cell(120, 0.2, 3, 23)
        };
        let t1 = run_coverage(&sc).unwrap();
        let t2 = run_coverage(&sc).unwrap();
        let mut c1 = Vec::new();
        let mut c2 = Vec::new();
        t1.to_csv(&mut c1).unwrap();
        t2.to_csv(&mut c2).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(t1.rows.len(), 3);
        for r in &t1.rows {
            assert_eq!(r.n_reps, 3);
            assert!(r.failures <= 3);
        }
    }

    #[test]
    fn ate_extension_identical_arms() {
        // with shared xi and identical parameters the observed outcome
        // follows the same construction on every row, so the reconstructed
        // noise xi_i = y_i - (2 + X beta - rho lambda(X gamma)) is marginally
        // standard normal on the full sample
        let ext = AteExtension { intercept0: 2.0, beta0: None, rho0: 0.5, share_xi: true };
        let sc = SimScenario {
            p: Some(10),
            ate: Some(ext),
            ..SimScenario::table_cell(5_000, 0.5, 1, 31)
        };
        let data = generate(&sc, 0).unwrap();
        assert!(data.y.iter().all(|v| v.is_finite()));
        let (m, g) = truth(&sc, &data);
        let xi: Vec<f64> = (0..data.n())
            .map(|i| data.y[i] - (m[i] - 0.5 * inv_mills(g[i])))
            .collect();
        let mean = xi.iter().sum::<f64>() / xi.len() as f64;
        let var = xi.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / xi.len() as f64;
        assert!(mean.abs() < 0.05, "xi mean {mean}");
        assert!((var - 1.0).abs() < 0.07, "xi var {var}");
    }
}
