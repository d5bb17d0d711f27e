//! Nuisance-model estimation: lasso-penalized linear and probit regression,
//! cross-validated and plug-in penalty selection, and post-selection
//! refitting (fit a preliminary lasso, keep its selected variables, refit
//! without penalty).

mod linear;
mod nuisance;
mod probit;

pub use linear::{lasso_linear, lasso_linear_with, refit_linear};
pub use nuisance::{fit_nuisance, NuisanceFit};
pub use probit::{lasso_probit, lasso_probit_with, refit_probit};

pub use crate::data::DesignMatrix;
use crate::error::{Error, Result};

/// Penalty level for a lasso fit. `Auto` means data-driven selection: the
/// plug-in rule (with cross-validation fallback) for the linear model,
/// K-fold cross-validated deviance for the probit model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Auto,
    Fixed(f64),
}

/// Cross-validation selection rule: the deviance minimizer, or the largest
/// penalty within one standard error of it (sparser).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvRule {
    Min,
    OneSe,
}

/// Which potential-outcome arm a nuisance fit targets. The outcome
/// regression is fitted on the rows of this arm only; the propensity model
/// is always the probit of `T` on `X` over all rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Treated,
    Control,
}

/// Options shared by `fit_nuisance`.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub outcome_penalty: Penalty,
    pub propensity_penalty: Penalty,
    /// Floor applied to the propensity when it enters AIPW weights.
    pub trim_floor: f64,
    pub cv_folds: usize,
    /// Seed for the cross-validation fold shuffle; fixing it makes every fit
    /// reproducible.
    pub cv_seed: u64,
    /// Selection rule for the probit-lasso cross-validation.
    pub propensity_cv_rule: CvRule,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            outcome_penalty: Penalty::Auto,
            propensity_penalty: Penalty::Auto,
            trim_floor: 0.01,
            cv_folds: 10,
            cv_seed: 0,
            propensity_cv_rule: CvRule::OneSe,
        }
    }
}

/// Fitted (post-lasso or plain) linear regression.
#[derive(Debug, Clone)]
pub struct LinearFit {
    /// Full-length coefficient vector; exactly 0 outside the selected set.
    pub coefficients: Vec<f64>,
    /// Selected non-intercept column indices, sorted.
    pub selected: Vec<usize>,
    /// Penalty level actually used (None for an unpenalized refit).
    pub lambda: Option<f64>,
}

impl LinearFit {
    pub fn predict(&self, x: &DesignMatrix) -> Vec<f64> {
        x.xdot(&self.coefficients)
    }

    pub fn fitted_row(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }
}

/// Fitted (post-lasso or plain) probit regression. `index` is the linear
/// predictor g(x); `propensity` is Phi(g(x)).
#[derive(Debug, Clone)]
pub struct ProbitFit {
    pub coefficients: Vec<f64>,
    pub selected: Vec<usize>,
    pub lambda: Option<f64>,
    /// False when the optimizer hit its divergence cap (quasi-separation);
    /// the coefficients then are the last iterate, flagged rather than
    /// silently huge.
    pub converged: bool,
    pub iterations: usize,
}

impl ProbitFit {
    pub fn index(&self, x: &DesignMatrix) -> Vec<f64> {
        x.xdot(&self.coefficients)
    }

    pub fn propensity(&self, x: &DesignMatrix) -> Vec<f64> {
        self.index(x).into_iter().map(crate::mathfn::norm_cdf).collect()
    }

    pub fn index_row(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }
}

/// Standardized copy of the penalized (non-intercept) columns of a design
/// matrix, column-major. With an intercept present, columns are centered and
/// scaled to unit variance (divisor n); zero-variance columns are marked dead
/// (scale 0) so the penalty silently never selects them. Without an
/// intercept no transformation is applied.
pub(crate) struct StdDesign {
    pub n: usize,
    pub k: usize,
    xs: Vec<f64>,
    /// original column index of standardized column j
    pub orig_idx: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub centered: bool,
}

impl StdDesign {
    pub fn new(x: &DesignMatrix) -> StdDesign {
        let n = x.n();
        let start = usize::from(x.has_intercept());
        let k = x.p() - start;
        let mut xs = Vec::with_capacity(n * k);
        let mut mean = Vec::with_capacity(k);
        let mut scale = Vec::with_capacity(k);
        let mut orig_idx = Vec::with_capacity(k);
        for j in start..x.p() {
            let col = x.col(j);
            if x.has_intercept() {
                let mu = col.iter().sum::<f64>() / n as f64;
                let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
                let sd = var.sqrt();
                if sd > 1e-12 {
                    xs.extend(col.iter().map(|v| (v - mu) / sd));
                    mean.push(mu);
                    scale.push(sd);
                } else {
                    // dead column: never selectable
                    xs.extend(std::iter::repeat(0.0).take(n));
                    mean.push(mu);
                    scale.push(0.0);
                }
            } else {
                xs.extend_from_slice(col);
                mean.push(0.0);
                scale.push(1.0);
            }
            orig_idx.push(j);
        }
        StdDesign { n, k, xs, orig_idx, mean, scale, centered: x.has_intercept() }
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.xs[j * self.n..(j + 1) * self.n]
    }

    /// Linear predictor on the standardized scale: b0 + Xs * beta.
    pub fn predictor(&self, beta: &[f64], b0: f64) -> Vec<f64> {
        let mut eta = vec![b0; self.n];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (e, &v) in eta.iter_mut().zip(self.col(j)) {
                    *e += b * v;
                }
            }
        }
        eta
    }

    /// Map standardized coefficients back to the original columns of `p_full`
    /// columns, returning (intercept, full coefficient vector). The intercept
    /// is also written into the vector when `intercept_col` is given.
    pub fn back_transform(
        &self,
        beta_std: &[f64],
        b0_std: f64,
        p_full: usize,
        intercept_col: Option<usize>,
    ) -> (f64, Vec<f64>) {
        let mut coefs = vec![0.0; p_full];
        let mut b0 = b0_std;
        for (j, &b) in beta_std.iter().enumerate() {
            if b != 0.0 && self.scale[j] > 0.0 {
                coefs[self.orig_idx[j]] = b / self.scale[j];
                b0 -= b * self.mean[j] / self.scale[j];
            }
        }
        if let Some(c) = intercept_col {
            coefs[c] = b0;
        }
        (b0, coefs)
    }
}

#[inline]
pub(crate) fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Cyclic coordinate descent for a (weighted) lasso on standardized columns,
/// restricted to the `candidates` columns, with the usual active-set
/// strategy: iterate on the active set until stable, then sweep the
/// candidates to pick up penalty violations. `r` holds the current residual
/// of the working response and is kept in sync with `beta`/`intercept`.
/// Callers using a screening rule must verify the stationarity conditions on
/// the non-candidate columns themselves. Returns the number of passes used.
#[allow(clippy::too_many_arguments)]
pub(crate) fn weighted_lasso_cd(
    xs: &StdDesign,
    w: Option<&[f64]>,
    candidates: &[usize],
    beta: &mut [f64],
    mut intercept: Option<&mut f64>,
    r: &mut [f64],
    lambda: f64,
    tol: f64,
    max_passes: usize,
) -> usize {
    let n = xs.n as f64;
    let mut norms: Vec<f64> = vec![f64::NAN; xs.k];
    let sum_w: f64 = w.map_or(xs.n as f64, |w| w.iter().sum());

    let norm_of = |j: usize, norms: &mut Vec<f64>| -> f64 {
        if norms[j].is_nan() {
            let col = xs.col(j);
            norms[j] = match w {
                Some(w) => col.iter().zip(w).map(|(x, wi)| wi * x * x).sum::<f64>() / n,
                // centered+scaled columns have unit variance by construction
                None if xs.centered => 1.0,
                None => col.iter().map(|x| x * x).sum::<f64>() / n,
            };
        }
        norms[j]
    };

    let update_intercept = |b0: &mut f64, r: &mut [f64]| -> f64 {
        if sum_w <= 0.0 {
            return 0.0;
        }
        let g = match w {
            Some(w) => r.iter().zip(w).map(|(ri, wi)| wi * ri).sum::<f64>() / sum_w,
            None => r.iter().sum::<f64>() / sum_w,
        };
        if g != 0.0 {
            *b0 += g;
            for ri in r.iter_mut() {
                *ri -= g;
            }
        }
        g.abs()
    };

    // single coordinate update; returns |delta beta_j|
    let update = |j: usize, beta: &mut [f64], r: &mut [f64], norms: &mut Vec<f64>| -> f64 {
        if xs.scale[j] == 0.0 {
            return 0.0;
        }
        let nrm = norm_of(j, norms);
        if nrm <= 1e-14 {
            return 0.0;
        }
        let col = xs.col(j);
        let g = match w {
            Some(w) => col
                .iter()
                .zip(r.iter())
                .zip(w)
                .map(|((x, ri), wi)| wi * x * ri)
                .sum::<f64>()
                / n,
            None => col.iter().zip(r.iter()).map(|(x, ri)| x * ri).sum::<f64>() / n,
        };
        let z = g + nrm * beta[j];
        let new = soft_threshold(z, lambda) / nrm;
        let delta = new - beta[j];
        if delta != 0.0 {
            for (ri, &x) in r.iter_mut().zip(col) {
                *ri -= delta * x;
            }
            beta[j] = new;
        }
        delta.abs()
    };

    let mut passes = 0usize;
    let mut active: Vec<usize> =
        candidates.iter().copied().filter(|&j| beta[j] != 0.0).collect();
    loop {
        // inner iterations on the current active set
        loop {
            let mut max_d: f64 = 0.0;
            if let Some(b0) = intercept.as_deref_mut() {
                max_d = max_d.max(update_intercept(b0, r));
            }
            for &j in &active {
                max_d = max_d.max(update(j, beta, r, &mut norms));
            }
            passes += 1;
            if max_d < tol || passes >= max_passes {
                break;
            }
        }
        // candidate sweep: update every candidate, catching violations
        let mut max_d: f64 = 0.0;
        let mut grew = false;
        if let Some(b0) = intercept.as_deref_mut() {
            max_d = max_d.max(update_intercept(b0, r));
        }
        for &j in candidates {
            let was_zero = beta[j] == 0.0;
            let d = update(j, beta, r, &mut norms);
            max_d = max_d.max(d);
            if was_zero && beta[j] != 0.0 {
                grew = true;
            }
        }
        passes += 1;
        if (!grew && max_d < tol) || passes >= max_passes {
            if passes >= max_passes {
                log::warn!("coordinate descent hit the pass cap ({max_passes}) at lambda={lambda:.4e}");
            }
            break;
        }
        active = candidates.iter().copied().filter(|&j| beta[j] != 0.0).collect();
    }
    passes
}

/// Log-spaced penalty path from `lambda_max` down to `lambda_max * ratio`.
pub(crate) fn lambda_path(lambda_max: f64, ratio: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && lambda_max > 0.0 && ratio > 0.0 && ratio < 1.0);
    let lmax = lambda_max.ln();
    let lmin = (lambda_max * ratio).ln();
    (0..count)
        .map(|i| (lmax + (lmin - lmax) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Deterministic K-fold assignment: a seeded shuffle of row indices dealt
/// round-robin into folds. Returns fold id per row.
pub(crate) fn fold_ids(n: usize, k: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut out = vec![0usize; n];
    for (pos, &i) in idx.iter().enumerate() {
        out[i] = pos % k;
    }
    out
}

pub(crate) fn validate_binary_both_classes(t: &[bool]) -> Result<()> {
    let nt = t.iter().filter(|&&v| v).count();
    if nt == 0 || nt == t.len() {
        return Err(Error::Data(
            "treatment vector contains a single class; probit fit is undefined".into(),
        ));
    }
    Ok(())
}
