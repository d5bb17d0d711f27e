//! Augmented inverse propensity weighting (AIPW) point estimation,
//! influence-function values and the variance estimator behind the
//! confidence intervals.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::glmfit::{Arm, NuisanceFit};
use serde::{Deserialize, Serialize};

/// Target causal parameter. `Ate` is the pair (MeanY1, MeanY0) with
/// independent sensitivity parameters per arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetParameter {
    /// E(Y(1))
    MeanY1,
    /// E(Y(0))
    MeanY0,
    /// E(Y(1) | T = 0)
    MeanY1GivenT0,
    /// E(Y(0) | T = 1)
    MeanY0GivenT1,
    /// E(Y(1)) - E(Y(0))
    Ate,
}

impl TargetParameter {
    /// The nuisance arm whose outcome model this target consumes. `Ate`
    /// needs both and has no single arm.
    pub fn arm(&self) -> Option<Arm> {
        match self {
            TargetParameter::MeanY1 | TargetParameter::MeanY1GivenT0 => Some(Arm::Treated),
            TargetParameter::MeanY0 | TargetParameter::MeanY0GivenT1 => Some(Arm::Control),
            TargetParameter::Ate => None,
        }
    }
}

/// AIPW estimate with per-observation influence values.
#[derive(Debug, Clone)]
pub struct AipwResult {
    pub target: TargetParameter,
    pub estimate: f64,
    /// influence values; mean exactly 0 for the centered MeanY1/MeanY0 form
    pub psi: Vec<f64>,
    /// variance estimate for sqrt(n)(estimate - target): the two-term
    /// formula for the mean targets, the influence-function second moment
    /// for the conditional-mean targets
    pub v_hat: f64,
    pub n: usize,
    pub n_treated: usize,
}

impl AipwResult {
    /// Standard error of the point estimate, sqrt(v_hat / n).
    pub fn standard_error(&self) -> f64 {
        (self.v_hat / self.n as f64).sqrt()
    }
}

fn validate(data: &Dataset, fit: &NuisanceFit, want_arm: Arm, op: &str) -> Result<()> {
    if fit.arm != want_arm {
        return Err(Error::InvalidArgument(format!(
            "{op} needs a nuisance fit for the {want_arm:?} arm, got {:?}",
            fit.arm
        )));
    }
    if fit.n != data.n() || fit.m_hat.len() != data.n() {
        return Err(Error::InvalidArgument(format!(
            "{op}: nuisance fit rows ({}) do not match data rows ({})",
            fit.n,
            data.n()
        )));
    }
    for (i, &e) in fit.e_hat.iter().enumerate() {
        if !(e > 0.0 && e < 1.0) && !(e == 1.0 && want_arm == Arm::Treated)
            && !(e == 0.0 && want_arm == Arm::Control)
        {
            return Err(Error::InvalidArgument(format!(
                "{op}: propensity out of range at row {i}: {e}"
            )));
        }
    }
    // outcome must be observed (finite) on the rows the estimator weights
    for i in 0..data.n() {
        let used = match want_arm {
            Arm::Treated => data.treat[i],
            Arm::Control => !data.treat[i],
        };
        if used && !data.y[i].is_finite() {
            return Err(Error::Data(format!("{op}: non-finite outcome on used row {i}")));
        }
        if !fit.m_hat[i].is_finite() || !fit.g_hat[i].is_finite() {
            return Err(Error::Data(format!("{op}: non-finite nuisance value at row {i}")));
        }
    }
    Ok(())
}

/// AIPW estimator of E(Y(1)):
/// `E_n[ T_i (Y_i - m_hat(X_i)) / e_hat(X_i) + m_hat(X_i) ]`,
/// with `psi_i = T_i (Y_i - m_hat(X_i))/e_hat(X_i) + m_hat(X_i) - estimate`.
pub fn aipw_mean_y1(data: &Dataset, fit: &NuisanceFit) -> Result<AipwResult> {
    validate(data, fit, Arm::Treated, "aipw_mean_y1")?;
    let n = data.n();
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let aug = if data.treat[i] {
            (data.y[i] - fit.m_hat[i]) / fit.weight_propensity(i)
        } else {
            0.0
        };
        terms.push(aug + fit.m_hat[i]);
    }
    let estimate = mean(&terms);
    let psi: Vec<f64> = terms.iter().map(|t| t - estimate).collect();
    let v_hat = variance_hat(data, fit, estimate)?;
    Ok(AipwResult {
        target: TargetParameter::MeanY1,
        estimate,
        psi,
        v_hat,
        n,
        n_treated: data.n_treated(),
    })
}

/// AIPW estimator of E(Y(0)): the mirror image of [`aipw_mean_y1`] under
/// T -> 1-T, with the outcome model trained on control rows and the control
/// assignment probability 1 - e_hat(X).
pub fn aipw_mean_y0(data: &Dataset, fit: &NuisanceFit) -> Result<AipwResult> {
    validate(data, fit, Arm::Control, "aipw_mean_y0")?;
    let n = data.n();
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        let aug = if !data.treat[i] {
            (data.y[i] - fit.m_hat[i]) / fit.weight_propensity(i)
        } else {
            0.0
        };
        terms.push(aug + fit.m_hat[i]);
    }
    let estimate = mean(&terms);
    let psi: Vec<f64> = terms.iter().map(|t| t - estimate).collect();
    let v_hat = variance_hat(data, fit, estimate)?;
    Ok(AipwResult {
        target: TargetParameter::MeanY0,
        estimate,
        psi,
        v_hat,
        n,
        n_treated: data.n_treated(),
    })
}

/// AIPW estimator of E(Y(1) | T = 0):
/// `E_n[(1-T_i) m_hat(X_i) + T_i (Y_i - m_hat(X_i))(1 - e_hat(X_i))/e_hat(X_i)] / E_n[1 - T_i]`.
/// The influence values come from the ratio delta-method expansion with
/// denominator E_n[1 - T_i]; `v_hat` is their second moment.
pub fn aipw_tau10(data: &Dataset, fit: &NuisanceFit) -> Result<AipwResult> {
    validate(data, fit, Arm::Treated, "aipw_tau10")?;
    let n = data.n();
    let n_treated = data.n_treated();
    if n_treated == n {
        return Err(Error::Data("E(Y(1)|T=0) is undefined without control rows".into()));
    }
    let mut num = Vec::with_capacity(n);
    for i in 0..n {
        let e = fit.weight_propensity(i);
        let v = if data.treat[i] {
            (data.y[i] - fit.m_hat[i]) * (1.0 - e) / e
        } else {
            fit.m_hat[i]
        };
        num.push(v);
    }
    let denom = (n - n_treated) as f64 / n as f64;
    let estimate = mean(&num) / denom;
    let psi: Vec<f64> = (0..n)
        .map(|i| {
            let b = if data.treat[i] { 0.0 } else { 1.0 };
            (num[i] - estimate * b) / denom
        })
        .collect();
    let v_hat = mean_sq(&psi);
    Ok(AipwResult { target: TargetParameter::MeanY1GivenT0, estimate, psi, v_hat, n, n_treated })
}

/// AIPW estimator of E(Y(0) | T = 1): the mirrored functional of
/// [`aipw_tau10`], with the control-arm outcome model.
pub fn aipw_tau01(data: &Dataset, fit: &NuisanceFit) -> Result<AipwResult> {
    validate(data, fit, Arm::Control, "aipw_tau01")?;
    let n = data.n();
    let n_treated = data.n_treated();
    if n_treated == 0 {
        return Err(Error::Data("E(Y(0)|T=1) is undefined without treated rows".into()));
    }
    let mut num = Vec::with_capacity(n);
    for i in 0..n {
        let e0 = fit.weight_propensity(i); // control assignment probability
        let v = if data.treat[i] {
            fit.m_hat[i]
        } else {
            (data.y[i] - fit.m_hat[i]) * (1.0 - e0) / e0
        };
        num.push(v);
    }
    let denom = n_treated as f64 / n as f64;
    let estimate = mean(&num) / denom;
    let psi: Vec<f64> = (0..n)
        .map(|i| {
            let b = if data.treat[i] { 1.0 } else { 0.0 };
            (num[i] - estimate * b) / denom
        })
        .collect();
    let v_hat = mean_sq(&psi);
    Ok(AipwResult { target: TargetParameter::MeanY0GivenT1, estimate, psi, v_hat, n, n_treated })
}

/// Variance estimator for the mean targets:
/// `V_hat = E_n[ T_i (Y_i - m_hat(X_i))^2 / e_hat(X_i)^2 ] + E_n[ (m_hat(X_i) - tau_hat)^2 ]`
/// (mirrored across arms). The confidence interval uses
/// `c_alpha * sqrt(V_hat / n)`.
pub fn variance_hat(data: &Dataset, fit: &NuisanceFit, tau_hat: f64) -> Result<f64> {
    if fit.n != data.n() {
        return Err(Error::InvalidArgument("variance_hat: row mismatch".into()));
    }
    let n = data.n() as f64;
    let mut first = 0.0;
    let mut second = 0.0;
    for i in 0..data.n() {
        let in_arm = match fit.arm {
            Arm::Treated => data.treat[i],
            Arm::Control => !data.treat[i],
        };
        if in_arm {
            let e = fit.weight_propensity(i);
            let r = data.y[i] - fit.m_hat[i];
            first += r * r / (e * e);
        }
        let d = fit.m_hat[i] - tau_hat;
        second += d * d;
    }
    Ok(first / n + second / n)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}
