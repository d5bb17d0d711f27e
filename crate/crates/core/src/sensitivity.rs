//! Everything that depends on the sensitivity parameter rho: residual-scale
//! estimators (naive and corrected), confounding-bias estimates, per-rho
//! confidence intervals, uncertainty intervals over a rho range, and
//! rho-bound derivation from outcome ordering constraints.

use crate::aipw::{aipw_mean_y0, aipw_mean_y1, aipw_tau01, aipw_tau10, AipwResult, TargetParameter};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glmfit::{Arm, NuisanceFit};
use crate::mathfn::{inv_mills, norm_quantile};
use serde::{Deserialize, Serialize};

/// Residual-scale estimator choice: the naive treated-row root mean squared
/// residual, or the corrected estimator that deflates the rho-dependent
/// truncation terms out of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    Naive,
    Corrected,
}

/// A sensitivity analysis request: a rho grid (possibly a single point), the
/// sigma estimator, and the confidence level.
#[derive(Debug, Clone)]
pub struct SensitivitySpec {
    rho_grid: Vec<f64>,
    pub sigma_mode: SigmaMode,
    pub alpha: f64,
}

impl SensitivitySpec {
    /// Single rho value.
    pub fn single(rho: f64, sigma_mode: SigmaMode, alpha: f64) -> Result<Self> {
        Self::range(rho, rho, 1, sigma_mode, alpha)
    }

    /// Inclusive grid over [rho_min, rho_max]. A degenerate range
    /// (rho_min == rho_max) collapses to a single point; otherwise
    /// `grid_size >= 2` points are used (default 101).
    pub fn range(
        rho_min: f64,
        rho_max: f64,
        grid_size: usize,
        sigma_mode: SigmaMode,
        alpha: f64,
    ) -> Result<Self> {
        if !(rho_min > -1.0 && rho_max < 1.0 && rho_min <= rho_max) {
            return Err(Error::InvalidArgument(format!(
                "need -1 < rho_min <= rho_max < 1, got [{rho_min}, {rho_max}]"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must be in (0,1), got {alpha}")));
        }
        let rho_grid = if rho_min == rho_max {
            vec![rho_min]
        } else {
            if grid_size < 2 {
                return Err(Error::InvalidArgument(
                    "a rho range needs grid_size >= 2".into(),
                ));
            }
            (0..grid_size)
                .map(|i| rho_min + (rho_max - rho_min) * i as f64 / (grid_size - 1) as f64)
                .collect()
        };
        Ok(SensitivitySpec { rho_grid, sigma_mode, alpha })
    }

    pub fn rho_grid(&self) -> &[f64] {
        &self.rho_grid
    }
}

/// A confounding-bias estimate at one rho.
///
/// `lambda_bar` is the target-specific multiplier M with
/// `b_hat = rho * sigma_hat * M`: the mean inverse Mills ratio of the fitted
/// index for E(Y(1)) (positive), its mirrored negative for E(Y(0)), and the
/// same quantities divided by the relevant treatment share for the
/// conditional means.
#[derive(Debug, Clone, Serialize)]
pub struct BiasEstimate {
    pub rho: f64,
    pub sigma_hat: f64,
    pub lambda_bar: f64,
    pub b_hat: f64,
    pub corrected: bool,
}

/// One grid entry of an interval report.
#[derive(Debug, Clone, Serialize)]
pub struct RhoPoint {
    pub rho: f64,
    pub point: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Per-rho confidence intervals and their union (the uncertainty interval).
#[derive(Debug, Clone, Serialize)]
pub struct IntervalReport {
    pub target: TargetParameter,
    pub per_rho: Vec<RhoPoint>,
    pub ui_lower: f64,
    pub ui_upper: f64,
    /// grid points excluded because the corrected variance was infeasible
    pub invalid_rhos: Vec<f64>,
    /// the rho = 0 analysis (no unobserved confounding), always computable
    pub unconfounded: RhoPoint,
    pub v_hat: f64,
    pub n: usize,
    pub alpha: f64,
}

/// Naive residual scale: root mean squared outcome-model residual over the
/// rows of the fit's arm.
pub fn sigma_naive(data: &Dataset, fit: &NuisanceFit) -> Result<f64> {
    let rows = arm_rows(data, fit);
    if rows.len() < 2 {
        return Err(Error::Data(format!(
            "sigma_naive needs at least 2 rows in the {:?} arm, got {}",
            fit.arm,
            rows.len()
        )));
    }
    let mut ss = 0.0;
    for &i in &rows {
        if !data.y[i].is_finite() {
            return Err(Error::Data(format!("non-finite outcome on arm row {i}")));
        }
        let r = data.y[i] - fit.m_hat[i];
        ss += r * r;
    }
    Ok((ss / rows.len() as f64).sqrt())
}

/// Corrected residual scale:
/// `sigma_c^2 = E_nt[(Y - m_hat)^2] / (1 - rho^2 E_nt[g l(g)] - rho^2 E_nt[l^2(g)])`
/// over the arm rows, with the index sign mirrored for the control arm.
/// Reduces exactly to `sigma_naive` at rho = 0. A non-positive denominator
/// means the postulated rho contradicts the observed residual variance and
/// is reported as `InvalidRho` rather than clamped.
pub fn sigma_corrected(data: &Dataset, fit: &NuisanceFit, rho: f64) -> Result<f64> {
    let naive = sigma_naive(data, fit)?;
    if rho == 0.0 {
        return Ok(naive);
    }
    let rows = arm_rows(data, fit);
    let mut gl = 0.0;
    let mut ll = 0.0;
    for &i in &rows {
        let s = match fit.arm {
            Arm::Treated => fit.g_hat[i],
            Arm::Control => -fit.g_hat[i],
        };
        let l = inv_mills(s);
        gl += s * l;
        ll += l * l;
    }
    let m = rows.len() as f64;
    let denom = 1.0 - rho * rho * (gl / m) - rho * rho * (ll / m);
    if denom <= 1e-8 {
        return Err(Error::InvalidRho { rho, denom });
    }
    Ok((naive * naive / denom).sqrt())
}

fn arm_rows(data: &Dataset, fit: &NuisanceFit) -> Vec<usize> {
    (0..data.n())
        .filter(|&i| match fit.arm {
            Arm::Treated => data.treat[i],
            Arm::Control => !data.treat[i],
        })
        .collect()
}

/// Confounding-bias estimate for `target` at the given rho and sigma.
///
/// E(Y(1)): `b = rho sigma E_n[lambda(g_hat)]`; E(Y(0)) by the T -> 1-T
/// symmetry of the sensitivity model: `b0 = -rho sigma E_n[lambda(-g_hat)]`;
/// the conditional means divide by E_n[1-T] and E_n[T] respectively.
pub fn bias_hat(
    fit: &NuisanceFit,
    rho: f64,
    sigma_hat: f64,
    target: TargetParameter,
) -> Result<BiasEstimate> {
    if sigma_hat < 0.0 || !sigma_hat.is_finite() {
        return Err(Error::InvalidArgument(format!("sigma_hat must be finite nonnegative, got {sigma_hat}")));
    }
    let want_arm = target.arm().ok_or_else(|| {
        Error::InvalidArgument("bias_hat is per-arm; use estimate_ate for the ATE".into())
    })?;
    if fit.arm != want_arm {
        return Err(Error::InvalidArgument(format!(
            "bias for {target:?} needs a {want_arm:?}-arm fit, got {:?}",
            fit.arm
        )));
    }
    let n = fit.n as f64;
    let lambda_bar = match target {
        TargetParameter::MeanY1 | TargetParameter::MeanY1GivenT0 => {
            let base = fit.g_hat.iter().map(|&g| inv_mills(g)).sum::<f64>() / n;
            match target {
                TargetParameter::MeanY1 => base,
                _ => {
                    let frac_control = 1.0 - fit.n_treated as f64 / n;
                    if frac_control == 0.0 {
                        return Err(Error::Data("no control rows for E(Y(1)|T=0) bias".into()));
                    }
                    base / frac_control
                }
            }
        }
        TargetParameter::MeanY0 | TargetParameter::MeanY0GivenT1 => {
            let base = -fit.g_hat.iter().map(|&g| inv_mills(-g)).sum::<f64>() / n;
            match target {
                TargetParameter::MeanY0 => base,
                _ => {
                    let frac_treated = fit.n_treated as f64 / n;
                    if frac_treated == 0.0 {
                        return Err(Error::Data("no treated rows for E(Y(0)|T=1) bias".into()));
                    }
                    base / frac_treated
                }
            }
        }
        TargetParameter::Ate => unreachable!(),
    };
    Ok(BiasEstimate {
        rho,
        sigma_hat,
        lambda_bar,
        b_hat: rho * sigma_hat * lambda_bar,
        corrected: false,
    })
}

/// Bias-corrected confidence interval:
/// `(tau_hat - b_hat) +/- Phi^{-1}(1 - alpha/2) * sqrt(V_hat / n)`.
/// Returns (lower, point, upper).
pub fn confidence_interval(aipw: &AipwResult, bias: &BiasEstimate, alpha: f64) -> (f64, f64, f64) {
    let point = aipw.estimate - bias.b_hat;
    let half = norm_quantile(1.0 - alpha / 2.0) * aipw.standard_error();
    (point - half, point, point + half)
}

fn zero_bias(rho: f64) -> BiasEstimate {
    BiasEstimate { rho, sigma_hat: 0.0, lambda_bar: 0.0, b_hat: 0.0, corrected: false }
}

/// Evaluate the per-rho confidence intervals over the spec's grid and take
/// their union as the uncertainty interval. Grid points where the corrected
/// sigma is infeasible are excluded with a prominent warning; if every point
/// is infeasible the whole evaluation fails.
pub fn uncertainty_interval(
    data: &Dataset,
    fit: &NuisanceFit,
    aipw: &AipwResult,
    spec: &SensitivitySpec,
    target: TargetParameter,
) -> Result<IntervalReport> {
    if aipw.target != target {
        return Err(Error::InvalidArgument(format!(
            "AIPW result is for {:?}, uncertainty interval requested for {target:?}",
            aipw.target
        )));
    }
    let sigma_n = sigma_naive(data, fit)?;
    let mut per_rho = Vec::with_capacity(spec.rho_grid.len());
    let mut invalid_rhos = Vec::new();
    for &rho in &spec.rho_grid {
        let sigma = match spec.sigma_mode {
            SigmaMode::Naive => sigma_n,
            SigmaMode::Corrected => match sigma_corrected(data, fit, rho) {
                Ok(s) => s,
                Err(Error::InvalidRho { .. }) => {
                    invalid_rhos.push(rho);
                    continue;
                }
                Err(e) => return Err(e),
            },
        };
        let mut bias = bias_hat(fit, rho, sigma, target)?;
        bias.corrected = spec.sigma_mode == SigmaMode::Corrected;
        let (lo, point, hi) = confidence_interval(aipw, &bias, spec.alpha);
        per_rho.push(RhoPoint { rho, point, ci_lower: lo, ci_upper: hi });
    }
    if !invalid_rhos.is_empty() {
        log::warn!(
            "{} of {} rho grid points are incompatible with the data (corrected variance infeasible) and were excluded: [{:.3}, {:.3}]",
            invalid_rhos.len(),
            spec.rho_grid.len(),
            invalid_rhos.first().unwrap(),
            invalid_rhos.last().unwrap()
        );
    }
    if per_rho.is_empty() {
        return Err(Error::Numeric(
            "every rho grid point was infeasible; no uncertainty interval exists".into(),
        ));
    }
    let ui_lower = per_rho.iter().map(|p| p.ci_lower).fold(f64::INFINITY, f64::min);
    let ui_upper = per_rho.iter().map(|p| p.ci_upper).fold(f64::NEG_INFINITY, f64::max);
    let (lo0, p0, hi0) = confidence_interval(aipw, &zero_bias(0.0), spec.alpha);
    Ok(IntervalReport {
        target,
        per_rho,
        ui_lower,
        ui_upper,
        invalid_rhos,
        unconfounded: RhoPoint { rho: 0.0, point: p0, ci_lower: lo0, ci_upper: hi0 },
        v_hat: aipw.v_hat,
        n: aipw.n,
        alpha: spec.alpha,
    })
}

/// One (rho1, rho0) grid entry of an ATE report.
#[derive(Debug, Clone, Serialize)]
pub struct AtePoint {
    pub rho1: f64,
    pub rho0: f64,
    pub point: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Average-causal-effect report over the product grid of the two per-arm
/// sensitivity parameters.
#[derive(Debug, Clone, Serialize)]
pub struct AteReport {
    pub per_pair: Vec<AtePoint>,
    pub ui_lower: f64,
    pub ui_upper: f64,
    pub invalid_rho1: Vec<f64>,
    pub invalid_rho0: Vec<f64>,
    /// the (rho1, rho0) = (0, 0) analysis, always computable
    pub unconfounded: AtePoint,
    pub v_hat: f64,
    pub n: usize,
    pub alpha: f64,
}

/// ATE with independent sensitivity parameters per arm:
/// point = (tau1_hat - b1(rho1)) - (tau0_hat - b0(rho0)); the variance comes
/// from the combined influence function psi1 - psi0; the uncertainty
/// interval is the union of the confidence intervals over the product grid.
pub fn estimate_ate(
    data: &Dataset,
    fit1: &NuisanceFit,
    fit0: &NuisanceFit,
    spec1: &SensitivitySpec,
    spec0: &SensitivitySpec,
    alpha: f64,
) -> Result<AteReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must be in (0,1), got {alpha}")));
    }
    let a1 = aipw_mean_y1(data, fit1)?;
    let a0 = aipw_mean_y0(data, fit0)?;
    let n = data.n();
    let v_hat =
        a1.psi.iter().zip(&a0.psi).map(|(p1, p0)| (p1 - p0) * (p1 - p0)).sum::<f64>() / n as f64;
    let half = norm_quantile(1.0 - alpha / 2.0) * (v_hat / n as f64).sqrt();

    // per-arm bias along each grid, with infeasible points excluded
    let biases = |fit: &NuisanceFit,
                  spec: &SensitivitySpec,
                  target: TargetParameter|
     -> Result<(Vec<(f64, f64)>, Vec<f64>)> {
        let sigma_n = sigma_naive(data, fit)?;
        let mut ok = Vec::new();
        let mut bad = Vec::new();
        for &rho in spec.rho_grid() {
            let sigma = match spec.sigma_mode {
                SigmaMode::Naive => sigma_n,
                SigmaMode::Corrected => match sigma_corrected(data, fit, rho) {
                    Ok(s) => s,
                    Err(Error::InvalidRho { .. }) => {
                        bad.push(rho);
                        continue;
                    }
                    Err(e) => return Err(e),
                },
            };
            ok.push((rho, bias_hat(fit, rho, sigma, target)?.b_hat));
        }
        Ok((ok, bad))
    };
    let (b1, invalid_rho1) = biases(fit1, spec1, TargetParameter::MeanY1)?;
    let (b0, invalid_rho0) = biases(fit0, spec0, TargetParameter::MeanY0)?;
    if b1.is_empty() || b0.is_empty() {
        return Err(Error::Numeric(
            "every rho grid point was infeasible in at least one arm".into(),
        ));
    }

    let mut per_pair = Vec::with_capacity(b1.len() * b0.len());
    for &(rho1, bias1) in &b1 {
        for &(rho0, bias0) in &b0 {
            let point = (a1.estimate - bias1) - (a0.estimate - bias0);
            per_pair.push(AtePoint {
                rho1,
                rho0,
                point,
                ci_lower: point - half,
                ci_upper: point + half,
            });
        }
    }
    let ui_lower = per_pair.iter().map(|p| p.ci_lower).fold(f64::INFINITY, f64::min);
    let ui_upper = per_pair.iter().map(|p| p.ci_upper).fold(f64::NEG_INFINITY, f64::max);
    let p00 = a1.estimate - a0.estimate;
    Ok(AteReport {
        per_pair,
        ui_lower,
        ui_upper,
        invalid_rho1,
        invalid_rho0,
        unconfounded: AtePoint {
            rho1: 0.0,
            rho0: 0.0,
            point: p00,
            ci_lower: p00 - half,
            ci_upper: p00 + half,
        },
        v_hat,
        n,
        alpha,
    })
}

/// Data behind a rho-bound derivation: the grid, the middle-term estimates
/// for both arms (None where infeasible), the two sample-average reference
/// lines, and the derived plausible ranges (None = empty feasible set).
#[derive(Debug, Clone, Serialize)]
pub struct RhoBoundsReport {
    pub grid: Vec<f64>,
    pub middle_y1_t0: Vec<Option<f64>>,
    pub middle_y0_t1: Vec<Option<f64>>,
    pub mean_y_treated: f64,
    pub mean_y_control: f64,
    pub rho1_range: Option<(f64, f64)>,
    pub rho0_range: Option<(f64, f64)>,
}

/// Uniform grid on [-0.99, 0.99] with the given step (default resolution for
/// rho-bound searches).
pub fn default_rho_grid(step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let k = (0.99 * 2.0 / step).round() as usize;
    for i in 0..=k {
        let rho = -0.99 + step * i as f64;
        if rho <= 0.99 + 1e-12 {
            // snap to the grid resolution to avoid f64 drift
            out.push((rho / step).round() * step);
        }
    }
    out
}

/// Derive plausible rho ranges from the outcome ordering constraints:
/// the counterfactual-mean estimate at each grid rho must lie strictly
/// between the treated and control sample means,
/// `mean(Y|T=1) < estimate < mean(Y|T=0)`. Returns the contiguous satisfying
/// run (preferring the one containing rho = 0, else the widest, with a
/// warning); an empty feasible set is reported as None.
pub fn derive_rho_bounds(
    data: &Dataset,
    fit1: &NuisanceFit,
    fit0: &NuisanceFit,
    grid: &[f64],
    sigma_mode: SigmaMode,
) -> Result<RhoBoundsReport> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("rho-bound grid is empty".into()));
    }
    if data.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("rho bounds need a fully observed outcome".into()));
    }
    let nt = data.n_treated();
    if nt == 0 || nt == data.n() {
        return Err(Error::Data("rho bounds need both treated and control rows".into()));
    }
    let mean_y_treated = data
        .y
        .iter()
        .zip(&data.treat)
        .filter(|(_, &t)| t)
        .map(|(&v, _)| v)
        .sum::<f64>()
        / nt as f64;
    let mean_y_control = data
        .y
        .iter()
        .zip(&data.treat)
        .filter(|(_, &t)| !t)
        .map(|(&v, _)| v)
        .sum::<f64>()
        / (data.n() - nt) as f64;

    let tau10 = aipw_tau10(data, fit1)?;
    let tau01 = aipw_tau01(data, fit0)?;

    let middle = |fit: &NuisanceFit, est: f64, target: TargetParameter| -> Result<Vec<Option<f64>>> {
        let sigma_n = sigma_naive(data, fit)?;
        grid.iter()
            .map(|&rho| {
                let sigma = match sigma_mode {
                    SigmaMode::Naive => sigma_n,
                    SigmaMode::Corrected => match sigma_corrected(data, fit, rho) {
                        Ok(s) => s,
                        Err(Error::InvalidRho { .. }) => return Ok(None),
                        Err(e) => return Err(e),
                    },
                };
                Ok(Some(est - bias_hat(fit, rho, sigma, target)?.b_hat))
            })
            .collect()
    };
    let middle_y1_t0 = middle(fit1, tau10.estimate, TargetParameter::MeanY1GivenT0)?;
    let middle_y0_t1 = middle(fit0, tau01.estimate, TargetParameter::MeanY0GivenT1)?;

    let satisfies = |m: &Option<f64>| -> bool {
        m.map(|v| mean_y_treated < v && v < mean_y_control).unwrap_or(false)
    };
    let rho1_range = contiguous_run(grid, &middle_y1_t0.iter().map(satisfies).collect::<Vec<_>>());
    let rho0_range = contiguous_run(grid, &middle_y0_t1.iter().map(satisfies).collect::<Vec<_>>());

    Ok(RhoBoundsReport {
        grid: grid.to_vec(),
        middle_y1_t0,
        middle_y0_t1,
        mean_y_treated,
        mean_y_control,
        rho1_range,
        rho0_range,
    })
}

/// Pick the contiguous run of satisfying grid points: the run containing
/// rho = 0 when the ordering holds there, otherwise the widest run (with a
/// warning when the satisfying set was non-contiguous).
fn contiguous_run(grid: &[f64], mask: &[bool]) -> Option<(f64, f64)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &ok) in mask.iter().enumerate() {
        match (ok, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, mask.len() - 1));
    }
    if runs.is_empty() {
        return None;
    }
    if runs.len() > 1 {
        log::warn!(
            "the rho-bound satisfying set is non-contiguous ({} components)",
            runs.len()
        );
        // prefer the component containing rho = 0 when the ordering holds there
        let zero_idx = grid
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if mask[zero_idx] {
            if let Some(&(s, e)) = runs.iter().find(|&&(s, e)| s <= zero_idx && zero_idx <= e) {
                return Some((grid[s], grid[e]));
            }
        }
    }
    let (s, e) = *runs.iter().max_by_key(|(s, e)| e - s).unwrap();
    Some((grid[s], grid[e]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DesignMatrix;

    fn fixture(t: Vec<bool>, y: Vec<f64>) -> Dataset {
        let n = t.len();
        let col: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let design = DesignMatrix::from_columns(vec![col], vec![], false).unwrap();
        Dataset::new(design, t, y).unwrap()
    }

    fn fit_with_g(arm: Arm, m: Vec<f64>, g: Vec<f64>, t: &[bool]) -> NuisanceFit {
        NuisanceFit::from_values(arm, m, g, t, 0.0).unwrap()
    }

    #[test]
    fn sigma_naive_basics() {
        let t = vec![true, true, false];
        let data = fixture(t.clone(), vec![1.0, 3.0, f64::NAN]);
        // residuals on treated rows: (0, 0)
        let fit = fit_with_g(Arm::Treated, vec![1.0, 3.0, 0.0], vec![0.0; 3], &t);
        assert_eq!(sigma_naive(&data, &fit).unwrap(), 0.0);
        // residuals (1, -1) -> sigma = 1
        let fit = fit_with_g(Arm::Treated, vec![0.0, 4.0, 0.0], vec![0.0; 3], &t);
        assert!((sigma_naive(&data, &fit).unwrap() - 1.0).abs() < 1e-15);
        // fewer than two arm rows rejected
        let t1 = vec![true, false, false];
        let data1 = fixture(t1.clone(), vec![1.0, f64::NAN, f64::NAN]);
        let fit1 = fit_with_g(Arm::Treated, vec![0.0; 3], vec![0.0; 3], &t1);
        assert!(sigma_naive(&data1, &fit1).is_err());
    }

    #[test]
    fn sigma_corrected_reduces_to_naive_at_rho_zero() {
        let t = vec![true, true, true, false];
        let data = fixture(t.clone(), vec![1.0, 2.0, 4.0, f64::NAN]);
        let fit = fit_with_g(Arm::Treated, vec![0.5, 2.5, 3.0, 0.0], vec![0.3, -0.2, 1.0, 0.0], &t);
        let n = sigma_naive(&data, &fit).unwrap();
        let c = sigma_corrected(&data, &fit, 0.0).unwrap();
        assert_eq!(n, c);
    }

    #[test]
    fn sigma_corrected_closed_form_at_zero_index() {
        // g = 0 on treated rows: denominator = 1 - rho^2 * (2/pi)
        let t = vec![true, true, false];
        let data = fixture(t.clone(), vec![1.0, -1.0, f64::NAN]);
        let fit = fit_with_g(Arm::Treated, vec![0.0; 3], vec![0.0; 3], &t);
        let c = sigma_corrected(&data, &fit, 0.5).unwrap();
        let denom = 1.0 - 0.25 * std::f64::consts::FRAC_2_PI;
        assert!((denom - 0.8408450569081046).abs() < 1e-12);
        assert!((c - (1.0 / denom).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sigma_corrected_infeasible_rho_is_reported() {
        // For |rho| < 1 the denominator 1 - rho^2 E[lambda(g)(g + lambda(g))]
        // is always positive (the bracket is a truncated-normal variance
        // complement, strictly below 1), so infeasibility requires |rho| >= 1,
        // which sigma_corrected accepts as a raw float.
        let t = vec![true, true, false];
        let data = fixture(t.clone(), vec![1.0, -1.0, f64::NAN]);
        let fit = fit_with_g(Arm::Treated, vec![0.0; 3], vec![-2.0, -2.0, 0.0], &t);
        let err = sigma_corrected(&data, &fit, 1.2).unwrap_err();
        assert!(matches!(err, Error::InvalidRho { .. }), "got {err:?}");
        // while every |rho| < 1 stays feasible on the same fit
        for rho in [-0.99, -0.5, 0.5, 0.99] {
            assert!(sigma_corrected(&data, &fit, rho).is_ok());
        }
    }

    #[test]
    fn bias_hat_zero_rho_and_closed_form() {
        let t = vec![true, false, true, false];
        let fit = fit_with_g(Arm::Treated, vec![0.0; 4], vec![0.0; 4], &t);
        for target in [TargetParameter::MeanY1, TargetParameter::MeanY1GivenT0] {
            let b = bias_hat(&fit, 0.0, 1.0, target).unwrap();
            assert_eq!(b.b_hat, 0.0);
        }
        // g = 0, sigma = 1, rho = 0.5: b = 0.5 * sqrt(2/pi) = 0.39894...
        let b = bias_hat(&fit, 0.5, 1.0, TargetParameter::MeanY1).unwrap();
        assert!((b.b_hat - 0.3989422804014327).abs() < 1e-12);
        // conditional target divides by the control share (= 0.5 here)
        let b10 = bias_hat(&fit, 0.5, 1.0, TargetParameter::MeanY1GivenT0).unwrap();
        assert!((b10.b_hat - 2.0 * b.b_hat).abs() < 1e-12);
        // invariant: b_hat = rho * sigma * lambda_bar, sign follows rho
        assert!((b.b_hat - 0.5 * 1.0 * b.lambda_bar).abs() < 1e-15);
        assert!(bias_hat(&fit, -0.5, 1.0, TargetParameter::MeanY1).unwrap().b_hat < 0.0);
    }

    #[test]
    fn bias_mirror_symmetry_for_y0() {
        // The Y0 bias on (T, g) equals the negated Y1 bias on the relabeled
        // data (1-T, -g) at the same rho.
        let t = vec![true, false, false, true];
        let g = vec![0.4, -0.7, 1.2, -0.1];
        let fit0 = fit_with_g(Arm::Control, vec![0.0; 4], g.clone(), &t);
        let b0 = bias_hat(&fit0, 0.3, 2.0, TargetParameter::MeanY0).unwrap();

        let t_flip: Vec<bool> = t.iter().map(|&v| !v).collect();
        let g_neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let fit1 = fit_with_g(Arm::Treated, vec![0.0; 4], g_neg, &t_flip);
        let b1 = bias_hat(&fit1, 0.3, 2.0, TargetParameter::MeanY1).unwrap();
        assert!((b0.b_hat + b1.b_hat).abs() < 1e-15);
    }

    #[test]
    fn confidence_interval_hand_values() {
        let aipw = AipwResult {
            target: TargetParameter::MeanY1,
            estimate: 0.0,
            psi: vec![0.0; 100],
            v_hat: 1.0,
            n: 100,
            n_treated: 50,
        };
        let (lo, p, hi) = confidence_interval(&aipw, &zero_bias(0.0), 0.05);
        assert!(p == 0.0 && (lo + 0.19599639845400545).abs() < 1e-10 && (hi - 0.19599639845400545).abs() < 1e-10);
        // a bias of 0.5 shifts the interval left by exactly 0.5
        let b = BiasEstimate { rho: 0.5, sigma_hat: 1.0, lambda_bar: 1.0, b_hat: 0.5, corrected: false };
        let (lo2, p2, hi2) = confidence_interval(&aipw, &b, 0.05);
        assert!((p2 - (p - 0.5)).abs() < 1e-15);
        assert!((hi2 - lo2 - (hi - lo)).abs() < 1e-15);
        // alpha = 0.32 halves the critical value to ~0.9945
        let (lo3, _, hi3) = confidence_interval(&aipw, &zero_bias(0.0), 0.32);
        let ratio = (hi3 - lo3) / (hi - lo);
        assert!((ratio - 0.994457883209753 / 1.959963984540054).abs() < 1e-9);
    }

    fn small_synthetic() -> (Dataset, NuisanceFit, AipwResult) {
        let t: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let y: Vec<f64> = (0..40).map(|i| (i % 7) as f64 * 0.5).collect();
        let data = fixture(t.clone(), y);
        let g: Vec<f64> = (0..40).map(|i| ((i % 5) as f64 - 2.0) * 0.3).collect();
        let m: Vec<f64> = (0..40).map(|i| (i % 3) as f64).collect();
        let fit = fit_with_g(Arm::Treated, m, g, &t);
        let aipw = aipw_mean_y1(&data, &fit).unwrap();
        (data, fit, aipw)
    }

    #[test]
    fn ui_degenerate_range_equals_single_ci() {
        let (data, fit, aipw) = small_synthetic();
        let spec = SensitivitySpec::range(0.3, 0.3, 7, SigmaMode::Corrected, 0.05).unwrap();
        let rep = uncertainty_interval(&data, &fit, &aipw, &spec, TargetParameter::MeanY1).unwrap();
        assert_eq!(rep.per_rho.len(), 1);
        assert_eq!(rep.ui_lower, rep.per_rho[0].ci_lower);
        assert_eq!(rep.ui_upper, rep.per_rho[0].ci_upper);
    }

    #[test]
    fn ui_naive_sigma_endpoints_attained_at_range_ends() {
        let (data, fit, aipw) = small_synthetic();
        let spec = SensitivitySpec::range(-0.4, 0.4, 21, SigmaMode::Naive, 0.05).unwrap();
        let rep = uncertainty_interval(&data, &fit, &aipw, &spec, TargetParameter::MeanY1).unwrap();
        let first = rep.per_rho.first().unwrap();
        let last = rep.per_rho.last().unwrap();
        assert_eq!(rep.ui_upper, first.ci_upper.max(last.ci_upper));
        assert_eq!(rep.ui_lower, first.ci_lower.min(last.ci_lower));
    }

    #[test]
    fn ui_invariants_hold() {
        let (data, fit, aipw) = small_synthetic();
        // bias linear in rho with the naive sigma
        let sigma = sigma_naive(&data, &fit).unwrap();
        let b1 = bias_hat(&fit, 1.0, sigma, TargetParameter::MeanY1).unwrap().b_hat;
        for rho in [-0.8, -0.3, 0.1, 0.5, 0.9] {
            let b = bias_hat(&fit, rho, sigma, TargetParameter::MeanY1).unwrap().b_hat;
            assert!((b - rho * b1).abs() < 1e-12);
        }
        // CI width independent of rho across the grid, to 1e-12
        let spec = SensitivitySpec::range(-0.6, 0.6, 31, SigmaMode::Corrected, 0.05).unwrap();
        let rep = uncertainty_interval(&data, &fit, &aipw, &spec, TargetParameter::MeanY1).unwrap();
        let w0 = rep.per_rho[0].ci_upper - rep.per_rho[0].ci_lower;
        for p in &rep.per_rho {
            assert!((p.ci_upper - p.ci_lower - w0).abs() < 1e-12);
            assert!(p.ci_lower <= p.point && p.point <= p.ci_upper);
        }
        // widening the range never shrinks the union
        let narrow = uncertainty_interval(
            &data,
            &fit,
            &aipw,
            &SensitivitySpec::range(-0.3, 0.3, 31, SigmaMode::Corrected, 0.05).unwrap(),
            TargetParameter::MeanY1,
        )
        .unwrap();
        assert!(rep.ui_lower <= narrow.ui_lower && rep.ui_upper >= narrow.ui_upper);
        // sigma_corrected(0) = sigma_naive exactly
        assert_eq!(sigma_corrected(&data, &fit, 0.0).unwrap(), sigma);
    }

    #[test]
    fn rho_grid_spec_validation() {
        assert!(SensitivitySpec::range(-1.0, 0.5, 11, SigmaMode::Naive, 0.05).is_err());
        assert!(SensitivitySpec::range(0.5, 0.2, 11, SigmaMode::Naive, 0.05).is_err());
        assert!(SensitivitySpec::range(-0.2, 0.2, 1, SigmaMode::Naive, 0.05).is_err());
        assert!(SensitivitySpec::single(0.2, SigmaMode::Naive, 1.5).is_err());
        let g = SensitivitySpec::range(-0.2, 0.2, 5, SigmaMode::Naive, 0.05).unwrap();
        assert_eq!(g.rho_grid().len(), 5);
        assert_eq!(g.rho_grid()[0], -0.2);
        assert_eq!(g.rho_grid()[4], 0.2);
    }

    #[test]
    fn ate_at_zero_is_plain_aipw_difference() {
        let t: Vec<bool> = (0..60).map(|i| i % 2 == 0).collect();
        let y: Vec<f64> = (0..60).map(|i| (i % 9) as f64 * 0.3 + if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let data = fixture(t.clone(), y);
        let g: Vec<f64> = (0..60).map(|i| ((i % 4) as f64 - 1.5) * 0.4).collect();
        let fit1 = fit_with_g(Arm::Treated, vec![0.8; 60], g.clone(), &t);
        let fit0 = fit_with_g(Arm::Control, vec![0.1; 60], g, &t);
        let s0 = SensitivitySpec::single(0.0, SigmaMode::Corrected, 0.05).unwrap();
        let rep = estimate_ate(&data, &fit1, &fit0, &s0, &s0, 0.05).unwrap();
        let a1 = aipw_mean_y1(&data, &fit1).unwrap();
        let a0 = aipw_mean_y0(&data, &fit0).unwrap();
        assert_eq!(rep.per_pair.len(), 1);
        assert!((rep.per_pair[0].point - (a1.estimate - a0.estimate)).abs() < 1e-12);
        assert_eq!(rep.unconfounded.point, rep.per_pair[0].point);
        // combined influence variance
        let v: f64 = a1
            .psi
            .iter()
            .zip(&a0.psi)
            .map(|(p1, p0)| (p1 - p0) * (p1 - p0))
            .sum::<f64>()
            / 60.0;
        assert!((rep.v_hat - v).abs() < 1e-12);
    }

    /// Alternating-arm fixture where both counterfactual-mean estimates are
    /// exactly 0.5 at rho = 0 and move linearly in rho (naive sigma = 1,
    /// g = 0, so the slope is 2*lambda(0)). Sample means are -1 (treated)
    /// and +1 (control).
    fn crossing_fixture() -> (Dataset, NuisanceFit, NuisanceFit) {
        let n = 100;
        let t: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let mut y = vec![0.0; n];
        let mut m1 = vec![0.0; n];
        let mut m0 = vec![0.0; n];
        let mut arm_counter = [0usize; 2];
        for i in 0..n {
            let a = usize::from(t[i]);
            let sign = if arm_counter[a] % 2 == 0 { 1.0 } else { -1.0 };
            arm_counter[a] += 1;
            y[i] = if t[i] { -1.0 + sign } else { 1.0 + sign };
            m1[i] = if t[i] { -1.0 } else { 0.5 };
            m0[i] = if t[i] { 0.5 } else { 1.0 };
        }
        let data = fixture(t.clone(), y);
        let fit1 = fit_with_g(Arm::Treated, m1, vec![0.0; n], &t);
        let fit0 = fit_with_g(Arm::Control, m0, vec![0.0; n], &t);
        (data, fit1, fit0)
    }

    #[test]
    fn bounds_analytic_crossing() {
        // middle1(rho) = 0.5 - 2*lambda(0)*rho = 0.5 - 1.59577*rho; ordering
        // -1 < middle1 < 1 holds for rho in (-0.31333, 0.93998), so the 0.01
        // grid keeps [-0.31, 0.93]. The control arm is the mirror image.
        let (data, fit1, fit0) = crossing_fixture();
        let grid: Vec<f64> = (-99..=99).map(|i| i as f64 / 100.0).collect();
        let rep = derive_rho_bounds(&data, &fit1, &fit0, &grid, SigmaMode::Naive).unwrap();
        assert_eq!(rep.mean_y_treated, -1.0);
        assert_eq!(rep.mean_y_control, 1.0);
        let (lo, hi) = rep.rho1_range.unwrap();
        assert!((lo + 0.31).abs() < 1e-9, "lo = {lo}");
        assert!((hi - 0.93).abs() < 1e-9, "hi = {hi}");
        let (lo0, hi0) = rep.rho0_range.unwrap();
        assert!((lo0 + 0.93).abs() < 1e-9 && (hi0 - 0.31).abs() < 1e-9, "({lo0}, {hi0})");
        // the reported middle estimates follow the analytic line
        let slope = 2.0 * 0.7978845608028654;
        for (idx, &rho) in rep.grid.iter().enumerate() {
            let m = rep.middle_y1_t0[idx].unwrap();
            assert!((m - (0.5 - slope * rho)).abs() < 1e-10);
        }
    }

    #[test]
    fn bounds_full_grid_when_strictly_inside() {
        let n = 60;
        let t: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let y: Vec<f64> = t.iter().map(|&ti| if ti { -5.0 } else { 5.0 }).collect();
        let data = fixture(t.clone(), y);
        // near-degenerate propensities and tiny residual scale: the middle
        // terms stay within (-5, 5) over the whole grid
        let fit1 = fit_with_g(Arm::Treated, vec![-4.99; n], vec![3.0; n], &t);
        let fit0 = fit_with_g(Arm::Control, vec![4.99; n], vec![-3.0; n], &t);
        let grid = default_rho_grid(0.01);
        let rep = derive_rho_bounds(&data, &fit1, &fit0, &grid, SigmaMode::Naive).unwrap();
        assert_eq!(rep.rho1_range.unwrap(), (grid[0], *grid.last().unwrap()));
        assert_eq!(rep.rho0_range.unwrap(), (grid[0], *grid.last().unwrap()));
    }

    #[test]
    fn bounds_empty_set_is_explicit() {
        let n = 40;
        let t: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        // treated mean above control mean: the ordering can never hold
        let y: Vec<f64> = t.iter().map(|&ti| if ti { 5.0 } else { -5.0 }).collect();
        let data = fixture(t.clone(), y);
        let fit1 = fit_with_g(Arm::Treated, vec![0.0; n], vec![0.0; n], &t);
        let fit0 = fit_with_g(Arm::Control, vec![0.0; n], vec![0.0; n], &t);
        let grid = default_rho_grid(0.01);
        let rep = derive_rho_bounds(&data, &fit1, &fit0, &grid, SigmaMode::Naive).unwrap();
        assert!(rep.rho1_range.is_none());
        assert!(rep.rho0_range.is_none());
    }
}
