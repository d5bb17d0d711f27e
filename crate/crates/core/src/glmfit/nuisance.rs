//! Bundled nuisance estimation: post-lasso outcome regression on one
//! treatment arm plus post-lasso probit propensity model, evaluated on every
//! row.

use super::{
    lasso_linear_with, lasso_probit_with, refit_linear, refit_probit, Arm, FitOptions,
    LinearFit, ProbitFit,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mathfn::norm_cdf;

/// Fitted nuisance values for one target arm: outcome regression m_hat
/// (trained on the arm's rows, evaluated everywhere), probit index g_hat and
/// propensity e_hat = Phi(g_hat) (trained on all rows).
///
/// `e_hat` is stored untrimmed; the floor is applied where the propensity
/// enters an AIPW weight, so that the inverse Mills ratio of the index keeps
/// its untrimmed value wherever the bias formulas use it.
#[derive(Debug, Clone)]
pub struct NuisanceFit {
    pub arm: Arm,
    pub m_hat: Vec<f64>,
    pub g_hat: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub selected_outcome: Vec<usize>,
    pub selected_propensity: Vec<usize>,
    pub trim_floor: f64,
    pub n: usize,
    /// rows in the arm the outcome model was trained on
    pub n_arm: usize,
    pub n_treated: usize,
    /// rows whose weight-side propensity fell below the trim floor
    pub n_below_floor: usize,
    pub outcome_fit: Option<LinearFit>,
    pub propensity_fit: Option<ProbitFit>,
}

impl NuisanceFit {
    /// Assemble a fit from externally computed values (oracle nuisances in
    /// simulations, deliberately misspecified models in diagnostics).
    /// `e_hat` is derived as Phi(g_hat).
    pub fn from_values(
        arm: Arm,
        m_hat: Vec<f64>,
        g_hat: Vec<f64>,
        treat: &[bool],
        trim_floor: f64,
    ) -> Result<Self> {
        let n = treat.len();
        if m_hat.len() != n || g_hat.len() != n {
            return Err(Error::InvalidArgument("nuisance value lengths must match n".into()));
        }
        let e_hat: Vec<f64> = g_hat.iter().map(|&g| norm_cdf(g)).collect();
        let n_treated = treat.iter().filter(|&&t| t).count();
        let n_arm = match arm {
            Arm::Treated => n_treated,
            Arm::Control => n - n_treated,
        };
        let n_below_floor = count_below_floor(arm, &e_hat, trim_floor);
        Ok(NuisanceFit {
            arm,
            m_hat,
            g_hat,
            e_hat,
            selected_outcome: vec![],
            selected_propensity: vec![],
            trim_floor,
            n,
            n_arm,
            n_treated,
            n_below_floor,
            outcome_fit: None,
            propensity_fit: None,
        })
    }

    /// Propensity-side weight for AIPW: the arm's assignment probability,
    /// floored at `trim_floor`.
    #[inline]
    pub fn weight_propensity(&self, i: usize) -> f64 {
        match self.arm {
            Arm::Treated => self.e_hat[i].max(self.trim_floor),
            Arm::Control => (1.0 - self.e_hat[i]).max(self.trim_floor),
        }
    }
}

fn count_below_floor(arm: Arm, e_hat: &[f64], floor: f64) -> usize {
    e_hat
        .iter()
        .filter(|&&e| match arm {
            Arm::Treated => e < floor,
            Arm::Control => 1.0 - e < floor,
        })
        .count()
}

/// Fit both nuisance models with the refit strategy: a preliminary lasso
/// selects variables, then an unpenalized refit on the selected set produces
/// the values used downstream.
///
/// The outcome model is trained on the rows of `arm` only; the propensity
/// probit is trained on all rows. Both are evaluated on every row.
pub fn fit_nuisance(data: &Dataset, arm: Arm, options: &FitOptions) -> Result<NuisanceFit> {
    if !data.has_both_classes() {
        return Err(Error::Data("both treated and control rows are required".into()));
    }
    if !(options.trim_floor >= 0.0 && options.trim_floor < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "trim floor must be in [0, 0.5), got {}",
            options.trim_floor
        )));
    }
    let x = data.design.with_intercept();
    let arm_mask: Vec<bool> = match arm {
        Arm::Treated => data.treat.clone(),
        Arm::Control => data.treat.iter().map(|&t| !t).collect(),
    };
    let x_arm = x.filter_rows(&arm_mask)?;
    let y_arm: Vec<f64> =
        data.y.iter().zip(&arm_mask).filter(|(_, &k)| k).map(|(&v, _)| v).collect();
    if y_arm.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("outcome contains non-finite values on the model arm".into()));
    }

    // outcome: lasso selection + unpenalized refit on the selected columns
    let outcome_lasso = lasso_linear_with(
        &x_arm,
        &y_arm,
        options.outcome_penalty,
        options.cv_folds,
        options.cv_seed,
    )?;
    let outcome_fit = refit_linear(&x_arm, &y_arm, &outcome_lasso.selected)?;
    let m_hat = outcome_fit.predict(&x);

    // propensity: probit lasso selection + probit refit, always on T vs X
    let prop_lasso = lasso_probit_with(
        &x,
        &data.treat,
        options.propensity_penalty,
        options.cv_folds,
        options.cv_seed.wrapping_add(1),
        options.propensity_cv_rule,
    )?;
    let prop_fit = refit_probit(&x, &data.treat, &prop_lasso.selected)?;
    let g_hat = prop_fit.index(&x);
    let e_hat: Vec<f64> = g_hat.iter().map(|&g| norm_cdf(g)).collect();

    let n_below_floor = count_below_floor(arm, &e_hat, options.trim_floor);
    if n_below_floor > 0 {
        log::warn!(
            "{n_below_floor} rows have an estimated {} propensity below the trim floor {}; weights are floored",
            match arm { Arm::Treated => "treatment", Arm::Control => "control" },
            options.trim_floor
        );
    }

    let n_treated = data.n_treated();
    Ok(NuisanceFit {
        arm,
        m_hat,
        g_hat,
        e_hat,
        selected_outcome: outcome_fit.selected.clone(),
        selected_propensity: prop_fit.selected.clone(),
        trim_floor: options.trim_floor,
        n: data.n(),
        n_arm: x_arm.n(),
        n_treated,
        n_below_floor,
        outcome_fit: Some(outcome_fit),
        propensity_fit: Some(prop_fit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DesignMatrix;
    use crate::glmfit::Penalty;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn small_data(seed: u64, n: usize) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let c1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let c2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let t: Vec<bool> =
            (0..n).map(|i| 0.7 * c1[i] + rng.sample::<f64, _>(StandardNormal) > 0.0).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 1.0 + 2.0 * c1[i] - c2[i] + rng.sample::<f64, _>(StandardNormal) * 0.3)
            .collect();
        let design = DesignMatrix::from_columns(vec![c1, c2], vec![], false).unwrap();
        Dataset::new(design, t, y).unwrap()
    }

    #[test]
    fn low_dimensional_unpenalized_equals_ols_probit_pipeline() {
        let data = small_data(21, 300);
        let opts = FitOptions {
            outcome_penalty: Penalty::Fixed(0.0),
            propensity_penalty: Penalty::Fixed(0.0),
            ..FitOptions::default()
        };
        let fit = fit_nuisance(&data, Arm::Treated, &opts).unwrap();

        // oracle pipeline: OLS on treated rows, probit MLE on all rows
        let x = data.design.with_intercept();
        let x_t = x.filter_rows(&data.treat).unwrap();
        let y_t: Vec<f64> =
            data.y.iter().zip(&data.treat).filter(|(_, &k)| k).map(|(&v, _)| v).collect();
        let ols = refit_linear(&x_t, &y_t, &[1, 2]).unwrap();
        let probit = refit_probit(&x, &data.treat, &[1, 2]).unwrap();
        let m = ols.predict(&x);
        let g = probit.index(&x);
        for i in 0..data.n() {
            assert!((fit.m_hat[i] - m[i]).abs() < 1e-8);
            assert!((fit.g_hat[i] - g[i]).abs() < 1e-6);
            assert!((fit.e_hat[i] - norm_cdf(fit.g_hat[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn control_arm_is_symmetric_under_relabeling() {
        let data = small_data(22, 300);
        let opts = FitOptions {
            outcome_penalty: Penalty::Fixed(0.0),
            propensity_penalty: Penalty::Fixed(0.0),
            ..FitOptions::default()
        };
        let fit0 = fit_nuisance(&data, Arm::Control, &opts).unwrap();

        // relabeled data: T -> 1-T; the control-arm pipeline on the original
        // equals the treated-arm pipeline on the relabeled data
        let flipped = Dataset::new(
            data.design.clone(),
            data.treat.iter().map(|&t| !t).collect(),
            data.y.clone(),
        )
        .unwrap();
        let fit1 = fit_nuisance(&flipped, Arm::Treated, &opts).unwrap();
        for i in 0..data.n() {
            assert!((fit0.m_hat[i] - fit1.m_hat[i]).abs() < 1e-8);
            // probit of 1-T has exactly negated index
            assert!((fit0.g_hat[i] + fit1.g_hat[i]).abs() < 1e-6);
            assert!((fit0.weight_propensity(i) - fit1.weight_propensity(i)).abs() < 1e-6);
        }
        assert_eq!(fit0.n_arm, fit1.n_arm);
    }

    #[test]
    fn rejects_single_class_and_bad_trim() {
        let mut data = small_data(23, 60);
        data.treat.iter_mut().for_each(|t| *t = true);
        assert!(fit_nuisance(&data, Arm::Treated, &FitOptions::default()).is_err());

        let data = small_data(24, 60);
        let opts = FitOptions { trim_floor: 0.7, ..FitOptions::default() };
        assert!(fit_nuisance(&data, Arm::Treated, &opts).is_err());
    }

    #[test]
    fn from_values_counts_floored_rows() {
        let treat = vec![true, false, true, false];
        let fit = NuisanceFit::from_values(
            Arm::Treated,
            vec![0.0; 4],
            vec![-3.0, 0.0, 3.0, -2.2],
            &treat,
            0.01,
        )
        .unwrap();
        assert_eq!(fit.n_below_floor, 1); // Phi(-3) < 0.01 but Phi(-2.2) > 0.01
        assert!((fit.weight_propensity(0) - 0.01).abs() < 1e-15);
        assert!((fit.weight_propensity(2) - norm_cdf(3.0)).abs() < 1e-15);
    }
}
