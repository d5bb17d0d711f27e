//! Lasso-penalized probit regression (proximal Newton / penalized IRLS) and
//! unpenalized probit refitting (Newton-Raphson).

use super::linear::active_columns;
use super::{
    fold_ids, lambda_path, validate_binary_both_classes, weighted_lasso_cd, CvRule,
    DesignMatrix, Penalty, ProbitFit, StdDesign,
};
use crate::error::{Error, Result};
use crate::mathfn::{inv_mills, log_norm_cdf, norm_quantile};

const CD_TOL: f64 = 1e-7;
const CD_MAX_PASSES: usize = 300;
const OUTER_TOL: f64 = 1e-7;
const MAX_OUTER: usize = 60;
/// Divergence cap on the standardized coefficient scale; a quasi-separated
/// fit runs into this long before overflow and is flagged instead of
/// returning a silently huge coefficient.
const DIVERGE_CAP: f64 = 1e3;
const W_MIN: f64 = 1e-10;

/// Penalized probit regression maximizing
/// `(1/n) sum_i [ t_i log Phi(x_i b) + (1 - t_i) log Phi(-x_i b) ] - lambda ||b_{-0}||_1`
/// by proximal Newton steps (IRLS quadratic expansion + weighted lasso).
///
/// `Penalty::Auto` picks lambda by K-fold cross-validated mean deviance over
/// a 30-point log-spaced path, with the one-standard-error rule (the
/// deviance minimizer over-selects heavily when p is of the order of n,
/// which overfits the propensity and distorts the mean inverse Mills ratio
/// the bias correction relies on).
pub fn lasso_probit(x: &DesignMatrix, t: &[bool], penalty: Penalty) -> Result<ProbitFit> {
    lasso_probit_with(x, t, penalty, 10, 0, CvRule::OneSe)
}

/// `lasso_probit` with explicit cross-validation settings.
pub fn lasso_probit_with(
    x: &DesignMatrix,
    t: &[bool],
    penalty: Penalty,
    cv_folds: usize,
    cv_seed: u64,
    cv_rule: CvRule,
) -> Result<ProbitFit> {
    if t.len() != x.n() {
        return Err(Error::Data(format!(
            "treatment length {} does not match design rows {}",
            t.len(),
            x.n()
        )));
    }
    validate_binary_both_classes(t)?;
    match penalty {
        Penalty::Fixed(l) if l < 0.0 || l.is_nan() => {
            Err(Error::InvalidArgument(format!("penalty must be nonnegative, got {l}")))
        }
        Penalty::Fixed(l) if l == 0.0 => {
            // unpenalized MLE over every column
            let all: Vec<usize> = (usize::from(x.has_intercept())..x.p()).collect();
            let mut fit = refit_probit(x, t, &all)?;
            fit.lambda = Some(0.0);
            Ok(fit)
        }
        Penalty::Fixed(l) if l.is_infinite() => Ok(intercept_only(x, t)),
        Penalty::Fixed(l) => {
            let xs = StdDesign::new(x);
            let q = signs(t);
            let mut beta = vec![0.0; xs.k];
            let mut b0 = null_intercept(x, t);
            let (converged, iterations) = prox_newton(&xs, &q, l, None, &mut beta, &mut b0);
            if !converged {
                log::warn!(
                    "penalized probit did not converge at lambda={l:.4e}; partial result flagged"
                );
            }
            Ok(assemble(x, &xs, &beta, b0, Some(l), converged, iterations))
        }
        Penalty::Auto => cv_fit(x, t, cv_folds.max(2), cv_seed, cv_rule),
    }
}

fn signs(t: &[bool]) -> Vec<f64> {
    t.iter().map(|&ti| if ti { 1.0 } else { -1.0 }).collect()
}

fn null_intercept(x: &DesignMatrix, t: &[bool]) -> f64 {
    if x.has_intercept() {
        let tbar = t.iter().filter(|&&v| v).count() as f64 / t.len() as f64;
        norm_quantile(tbar)
    } else {
        0.0
    }
}

fn intercept_only(x: &DesignMatrix, t: &[bool]) -> ProbitFit {
    let mut coefficients = vec![0.0; x.p()];
    if x.has_intercept() {
        coefficients[0] = null_intercept(x, t);
    }
    ProbitFit {
        coefficients,
        selected: vec![],
        lambda: Some(f64::INFINITY),
        converged: true,
        iterations: 0,
    }
}

fn assemble(
    x: &DesignMatrix,
    xs: &StdDesign,
    beta_std: &[f64],
    b0_std: f64,
    lambda: Option<f64>,
    converged: bool,
    iterations: usize,
) -> ProbitFit {
    let intercept_col = x.has_intercept().then_some(0);
    let (_, coefficients) = xs.back_transform(beta_std, b0_std, x.p(), intercept_col);
    let selected: Vec<usize> = beta_std
        .iter()
        .enumerate()
        .filter(|(_, &b)| b != 0.0)
        .map(|(j, _)| xs.orig_idx[j])
        .collect();
    ProbitFit { coefficients, selected, lambda, converged, iterations }
}

/// IRLS ingredients at the current linear predictor. With z = q*eta:
/// score u = q*lambda(z), curvature w = lambda(z)*(z + lambda(z)) (always
/// positive, clamped away from 0 where the likelihood has saturated).
fn irls_terms(eta: &[f64], q: &[f64], u: &mut [f64], w: &mut [f64]) {
    for i in 0..eta.len() {
        let z = q[i] * eta[i];
        let lam = inv_mills(z);
        u[i] = q[i] * lam;
        w[i] = (lam * (z + lam)).clamp(W_MIN, 1e10);
    }
}

fn mean_negloglik(eta: &[f64], q: &[f64]) -> f64 {
    let s: f64 = eta.iter().zip(q).map(|(&e, &qi)| log_norm_cdf(qi * e)).sum();
    -s / eta.len() as f64
}

fn penalized_objective(eta: &[f64], q: &[f64], beta: &[f64], lambda: f64) -> f64 {
    mean_negloglik(eta, q) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Gradient of the mean log-likelihood for every penalized coordinate (one
/// full pass over the design).
fn full_gradient(xs: &StdDesign, u: &[f64]) -> Vec<f64> {
    let n = xs.n as f64;
    (0..xs.k)
        .map(|j| xs.col(j).iter().zip(u).map(|(x, ui)| x * ui).sum::<f64>() / n)
        .collect()
}

/// Proximal Newton restricted to `candidates`; `beta`/`b0` are warm-start
/// in, solution out (standardized scale). Returns (converged, outer
/// iterations).
fn prox_newton_on(
    xs: &StdDesign,
    q: &[f64],
    lambda: f64,
    candidates: &[usize],
    beta: &mut Vec<f64>,
    b0: &mut f64,
) -> (bool, usize) {
    let n = xs.n;
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut eta = xs.predictor(beta, *b0);
    let mut obj = penalized_objective(&eta, q, beta, lambda);

    for outer in 1..=MAX_OUTER {
        irls_terms(&eta, q, &mut u, &mut w);
        let mut r: Vec<f64> = u.iter().zip(&w).map(|(ui, wi)| ui / wi).collect();
        let beta_old = beta.clone();
        let b0_old = *b0;
        weighted_lasso_cd(
            xs,
            Some(&w),
            candidates,
            beta,
            Some(b0),
            &mut r,
            lambda,
            CD_TOL,
            CD_MAX_PASSES,
        );

        // backtrack toward the previous iterate if the penalized objective
        // got worse (the quadratic model can overshoot when curvature is
        // nearly flat)
        let beta_cd = beta.clone();
        let b0_cd = *b0;
        let mut step = 1.0;
        let mut eta_new;
        let mut obj_new;
        loop {
            if step < 1.0 {
                for &j in candidates {
                    beta[j] = beta_old[j] + step * (beta_cd[j] - beta_old[j]);
                }
                *b0 = b0_old + step * (b0_cd - b0_old);
            }
            eta_new = xs.predictor(beta, *b0);
            obj_new = penalized_objective(&eta_new, q, beta, lambda);
            if obj_new <= obj + 1e-12 || step <= 1.0 / 64.0 {
                break;
            }
            step *= 0.5;
        }
        eta = eta_new;
        obj = obj_new;

        let mut delta = (*b0 - b0_old).abs();
        for &j in candidates {
            delta = delta.max((beta[j] - beta_old[j]).abs());
        }
        let sup = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        if sup > DIVERGE_CAP {
            return (false, outer);
        }
        if delta < OUTER_TOL {
            return (true, outer);
        }
    }
    (false, MAX_OUTER)
}

/// Proximal Newton with sequential strong-rule screening: coordinate descent
/// only ever touches the screened set, and full-design gradient passes are
/// limited to the screening step and the final stationarity check (repeated
/// with an enlarged set if any excluded coordinate violates it).
fn prox_newton(
    xs: &StdDesign,
    q: &[f64],
    lambda: f64,
    lambda_prev: Option<f64>,
    beta: &mut Vec<f64>,
    b0: &mut f64,
) -> (bool, usize) {
    let mut u = vec![0.0; xs.n];
    let mut w = vec![0.0; xs.n];

    let mut candidates: Vec<usize> = match lambda_prev {
        Some(lp) => {
            // sequential strong rule at the warm start
            let eta = xs.predictor(beta, *b0);
            irls_terms(&eta, q, &mut u, &mut w);
            let grad = full_gradient(xs, &u);
            let threshold = 2.0 * lambda - lp;
            (0..xs.k)
                .filter(|&j| beta[j] != 0.0 || grad[j].abs() >= threshold)
                .collect()
        }
        None => (0..xs.k).collect(),
    };

    let mut iters_total = 0;
    loop {
        let (converged, iters) = prox_newton_on(xs, q, lambda, &candidates, beta, b0);
        iters_total += iters;
        if !converged {
            return (false, iters_total);
        }
        // stationarity check on the full design
        let eta = xs.predictor(beta, *b0);
        irls_terms(&eta, q, &mut u, &mut w);
        let grad = full_gradient(xs, &u);
        let mut in_set = vec![false; xs.k];
        for &j in &candidates {
            in_set[j] = true;
        }
        let mut violations: Vec<usize> = (0..xs.k)
            .filter(|&j| {
                !in_set[j] && beta[j] == 0.0 && xs.scale[j] > 0.0 && grad[j].abs() > lambda + 1e-9
            })
            .collect();
        if violations.is_empty() {
            return (true, iters_total);
        }
        candidates.append(&mut violations);
        candidates.sort_unstable();
        candidates.dedup();
    }
}

/// Largest penalty with an all-zero solution: the sup-norm of the score of
/// the penalized coordinates at the intercept-only fit.
fn probit_lambda_max(xs: &StdDesign, q: &[f64], b0: f64) -> f64 {
    let n = xs.n as f64;
    let u: Vec<f64> = q
        .iter()
        .map(|&qi| {
            let z = qi * b0;
            qi * inv_mills(z)
        })
        .collect();
    (0..xs.k)
        .map(|j| (xs.col(j).iter().zip(&u).map(|(x, ui)| x * ui).sum::<f64>() / n).abs())
        .fold(0.0f64, f64::max)
}

struct PathEntry {
    lambda: f64,
    b0_std: f64,
    beta_std: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Warm-started stepping along a decreasing penalty path.
struct PathState {
    beta: Vec<f64>,
    b0: f64,
    lambda_prev: Option<f64>,
}

impl PathState {
    fn new(k: usize, b0: f64) -> Self {
        PathState { beta: vec![0.0; k], b0, lambda_prev: None }
    }

    fn step(&mut self, xs: &StdDesign, q: &[f64], lambda: f64) -> (bool, usize) {
        let out = prox_newton(xs, q, lambda, self.lambda_prev, &mut self.beta, &mut self.b0);
        self.lambda_prev = Some(lambda);
        out
    }

    fn df(&self) -> usize {
        self.beta.iter().filter(|&&b| b != 0.0).count()
    }
}

/// 10-fold (by default) cross-validation minimizing held-out deviance
/// `-2 log Phi(q * eta)`, evaluated lazily along the penalty path: the
/// master and fold fits advance together, and the walk stops three steps
/// after the pooled deviance last improved (or when the active set exceeds
/// `dfmax`). With `CvRule::OneSe` the largest penalty within one standard
/// error of the minimum is chosen instead of the minimizer.
fn cv_fit(
    x: &DesignMatrix,
    t: &[bool],
    folds: usize,
    seed: u64,
    rule: CvRule,
) -> Result<ProbitFit> {
    let n = x.n();
    let folds = folds.min(n);
    let xs = StdDesign::new(x);
    let q = signs(t);
    let b0_null = null_intercept(x, t);
    let lmax = probit_lambda_max(&xs, &q, b0_null);
    if lmax <= 0.0 {
        return Ok(intercept_only(x, t));
    }
    let lambdas = lambda_path(lmax * 1.0001, 0.01, 30);
    let dfmax = xs.k.min((n / 2).max(50));

    let ids = fold_ids(n, folds, seed);
    let mut fold_work = Vec::with_capacity(folds);
    for f in 0..folds {
        let keep: Vec<bool> = ids.iter().map(|&id| id != f).collect();
        let t_tr: Vec<bool> = t.iter().zip(&keep).filter(|(_, &k)| k).map(|(&v, _)| v).collect();
        if t_tr.iter().all(|&v| v) || t_tr.iter().all(|&v| !v) {
            return Err(Error::Data(format!(
                "cross-validation fold {f} lost a treatment class; too few observations per class"
            )));
        }
        let x_tr = x.filter_rows(&keep)?;
        let xs_tr = StdDesign::new(&x_tr);
        let b0_tr = null_intercept(&x_tr, &t_tr);
        let q_tr = signs(&t_tr);
        let holdout: Vec<usize> = (0..n).filter(|&i| ids[i] == f).collect();
        let state = PathState::new(xs_tr.k, b0_tr);
        fold_work.push((xs_tr, q_tr, holdout, state));
    }

    let mut master_state = PathState::new(xs.k, b0_null);
    let mut master_entries: Vec<PathEntry> = Vec::new();
    // mean held-out deviance and its fold-to-fold standard error per lambda
    let mut dev_mean: Vec<f64> = Vec::new();
    let mut dev_se: Vec<f64> = Vec::new();
    let mut best_idx = 0usize;
    const PATIENCE: usize = 3;

    for &l in &lambdas {
        let (converged, iterations) = master_state.step(&xs, &q, l);
        master_entries.push(PathEntry {
            lambda: l,
            b0_std: master_state.b0,
            beta_std: master_state.beta.clone(),
            converged,
            iterations,
        });
        let mut fold_devs = Vec::with_capacity(folds);
        for (xs_tr, q_tr, holdout, state) in fold_work.iter_mut() {
            state.step(xs_tr, q_tr, l);
            let intercept_col = x.has_intercept().then_some(0);
            let (b0, coefs) = xs_tr.back_transform(&state.beta, state.b0, x.p(), intercept_col);
            // eta on held-out rows, accumulated over nonzero coefficients
            let mut eta = vec![if x.has_intercept() { coefs[0] } else { b0 }; holdout.len()];
            for (j, &b) in coefs.iter().enumerate() {
                if b != 0.0 && !(x.has_intercept() && j == 0) {
                    let col = x.col(j);
                    for (e, &i) in eta.iter_mut().zip(holdout.iter()) {
                        *e += b * col[i];
                    }
                }
            }
            let dev: f64 = eta
                .iter()
                .zip(holdout.iter())
                .map(|(&e, &i)| -2.0 * log_norm_cdf(q[i] * e))
                .sum::<f64>()
                / holdout.len() as f64;
            fold_devs.push(dev);
        }
        let mean = fold_devs.iter().sum::<f64>() / folds as f64;
        let var = fold_devs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / (folds as f64 - 1.0).max(1.0);
        dev_mean.push(mean);
        dev_se.push((var / folds as f64).sqrt());

        let li = dev_mean.len() - 1;
        if dev_mean[li] < dev_mean[best_idx] {
            best_idx = li;
        }
        if li >= best_idx + PATIENCE || master_state.df() > dfmax {
            break;
        }
    }

    let chosen = match rule {
        CvRule::Min => best_idx,
        CvRule::OneSe => {
            let cutoff = dev_mean[best_idx] + dev_se[best_idx];
            (0..=best_idx).find(|&li| dev_mean[li] <= cutoff).unwrap_or(best_idx)
        }
    };
    let e = &master_entries[chosen];
    if !e.converged {
        log::warn!("cross-validated probit lasso flagged non-convergence at the chosen penalty");
    }
    Ok(assemble(x, &xs, &e.beta_std, e.b0_std, Some(e.lambda), e.converged, e.iterations))
}

/// Unpenalized probit MLE on the selected columns plus the intercept, by
/// Newton-Raphson with step halving (tolerance 1e-8 on the sup-norm of the
/// mean score, at most 100 iterations). Perfect separation is reported as
/// non-convergence, never as a silent huge coefficient.
pub fn refit_probit(x: &DesignMatrix, t: &[bool], selected: &[usize]) -> Result<ProbitFit> {
    if t.len() != x.n() {
        return Err(Error::Data(format!(
            "treatment length {} does not match design rows {}",
            t.len(),
            x.n()
        )));
    }
    validate_binary_both_classes(t)?;
    let active = active_columns(x, selected)?;
    if active.is_empty() {
        return Err(Error::InvalidArgument("probit refit needs at least one column".into()));
    }
    if active.len() >= x.n() {
        return Err(Error::InvalidArgument(format!(
            "refit needs |selected|+1 < n: {} columns for {} rows",
            active.len(),
            x.n()
        )));
    }
    let n = x.n();
    let k = active.len();
    // standardize non-intercept active columns for conditioning
    let mut mean = vec![0.0; k];
    let mut scale = vec![1.0; k];
    let mut a = nalgebra::DMatrix::zeros(n, k);
    for (jj, &j) in active.iter().enumerate() {
        let col = x.col(j);
        if x.has_intercept() && j == 0 {
            for i in 0..n {
                a[(i, jj)] = 1.0;
            }
            continue;
        }
        let mu = col.iter().sum::<f64>() / n as f64;
        let sd = (col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64).sqrt();
        let (mu, sd) = if sd > 1e-12 { (mu, sd) } else { (0.0, 1.0) };
        mean[jj] = mu;
        scale[jj] = sd;
        for i in 0..n {
            a[(i, jj)] = (col[i] - mu) / sd;
        }
    }
    let q = signs(t);
    let mut beta = nalgebra::DVector::zeros(k);
    if x.has_intercept() {
        beta[0] = null_intercept(x, t);
    }
    let loglik = |eta: &nalgebra::DVector<f64>| -> f64 {
        eta.iter().zip(&q).map(|(&e, &qi)| log_norm_cdf(qi * e)).sum()
    };
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut warned_rank = false;
    for iter in 1..=100 {
        let eta = &a * &beta;
        // every observation fitted correctly beyond 4 standard deviations
        // means the classes are (quasi-)separated: the likelihood has no
        // finite maximizer and the score tends to zero along the divergent
        // path, so the score test alone would falsely report convergence
        let min_qeta =
            eta.iter().zip(&q).map(|(&e, &qi)| qi * e).fold(f64::INFINITY, f64::min);
        if min_qeta > 4.0 {
            return Err(Error::NonConvergence(
                "perfect separation: every observation fitted beyond 4 standard deviations".into(),
            ));
        }
        irls_terms(eta.as_slice(), &q, &mut u, &mut w);
        let uv = nalgebra::DVector::from_column_slice(&u);
        let score = a.transpose() * &uv / n as f64;
        if score.amax() <= 1e-8 {
            let coefficients = unstandardize(x, &active, &mean, &scale, beta.as_slice());
            let sel: Vec<usize> =
                active.iter().copied().filter(|&j| !(x.has_intercept() && j == 0)).collect();
            return Ok(ProbitFit {
                coefficients,
                selected: sel,
                lambda: None,
                converged: true,
                iterations: iter,
            });
        }
        let mut wa = a.clone();
        for i in 0..n {
            for jj in 0..k {
                wa[(i, jj)] *= w[i];
            }
        }
        let h = a.transpose() * &wa / n as f64;
        let delta = match h.clone().cholesky() {
            Some(ch) => ch.solve(&score),
            None => {
                if !warned_rank {
                    log::warn!("rank-deficient probit refit Hessian; using a pseudo-inverse step");
                    warned_rank = true;
                }
                h.svd(true, true)
                    .solve(&score, 1e-10)
                    .map_err(|e| Error::Numeric(format!("SVD solve failed: {e}")))?
            }
        };
        let ll0 = loglik(&eta);
        let mut step = 1.0;
        for _ in 0..30 {
            let cand = &beta + &delta * step;
            let ll = loglik(&(&a * &cand));
            if ll >= ll0 || step < 1e-8 {
                beta = cand;
                break;
            }
            step *= 0.5;
        }
        let sup_noninter = (0..k)
            .filter(|&jj| !(x.has_intercept() && active[jj] == 0))
            .map(|jj| beta[jj].abs())
            .fold(0.0f64, f64::max);
        if sup_noninter > 500.0 {
            return Err(Error::NonConvergence(
                "probit refit diverged (perfect or quasi-separation suspected)".into(),
            ));
        }
    }
    Err(Error::NonConvergence("probit refit did not reach score tolerance in 100 iterations".into()))
}

fn unstandardize(
    x: &DesignMatrix,
    active: &[usize],
    mean: &[f64],
    scale: &[f64],
    beta_std: &[f64],
) -> Vec<f64> {
    let mut coefs = vec![0.0; x.p()];
    let mut b0_shift = 0.0;
    for (jj, &j) in active.iter().enumerate() {
        if x.has_intercept() && j == 0 {
            coefs[0] = beta_std[jj];
        } else {
            coefs[j] = beta_std[jj] / scale[jj];
            b0_shift += beta_std[jj] * mean[jj] / scale[jj];
        }
    }
    if x.has_intercept() {
        coefs[0] -= b0_shift;
    }
    coefs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathfn::norm_cdf;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    /// brute-force probit MLE by iterated grid refinement (independent oracle)
    fn grid_oracle(x: &DesignMatrix, t: &[bool], k: usize) -> Vec<f64> {
        let q = signs(t);
        let ll = |b: &[f64]| -> f64 {
            (0..x.n())
                .map(|i| {
                    let eta: f64 = (0..k).map(|j| b[j] * x.value(i, j)).sum();
                    log_norm_cdf(q[i] * eta)
                })
                .sum()
        };
        let mut center = vec![0.0; k];
        let mut radius = 5.0;
        for _ in 0..9 {
            let mut best = (f64::NEG_INFINITY, center.clone());
            let steps = 13i64;
            let mut idx = vec![0i64; k];
            'outer: loop {
                let cand: Vec<f64> = (0..k)
                    .map(|j| center[j] + radius * (idx[j] - steps / 2) as f64 / (steps / 2) as f64)
                    .collect();
                let v = ll(&cand);
                if v > best.0 {
                    best = (v, cand);
                }
                for j in 0..k {
                    idx[j] += 1;
                    if idx[j] < steps {
                        continue 'outer;
                    }
                    idx[j] = 0;
                }
                break;
            }
            center = best.1;
            radius *= 0.25;
        }
        center
    }

    #[test]
    fn infinite_penalty_is_intercept_only_mle() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 100;
        let cols: Vec<Vec<f64>> =
            (0..3).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let x = DesignMatrix::from_columns(cols, vec![], false).unwrap().with_intercept();
        let t: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let fit = lasso_probit(&x, &t, Penalty::Fixed(f64::INFINITY)).unwrap();
        let tbar = t.iter().filter(|&&v| v).count() as f64 / n as f64;
        assert!((fit.coefficients[0] - norm_quantile(tbar)).abs() < 1e-10);
        assert!(fit.selected.is_empty());
    }

    #[test]
    fn unpenalized_matches_grid_oracle() {
        // overlapping single-covariate data (the classes interleave, so the
        // MLE is finite)
        let xcol = vec![-1.0, -0.5, -0.25, 0.25, 0.5, 1.0, -0.75, 0.75];
        let t = vec![false, true, false, true, false, true, false, true];
        let x = DesignMatrix::from_columns(vec![xcol], vec![], false).unwrap().with_intercept();
        let fit = lasso_probit(&x, &t, Penalty::Fixed(0.0)).unwrap();
        let oracle = grid_oracle(&x, &t, 2);
        assert!(
            (fit.coefficients[0] - oracle[0]).abs() < 1e-5
                && (fit.coefficients[1] - oracle[1]).abs() < 1e-5,
            "fit {:?} vs oracle {:?}",
            fit.coefficients,
            oracle
        );
    }

    #[test]
    fn refit_two_covariates_matches_grid_oracle() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let n = 60;
        let c1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let c2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let t: Vec<bool> = (0..n)
            .map(|i| {
                let eta = 0.4 + 0.8 * c1[i] - 0.5 * c2[i];
                let u: f64 = rng.sample(StandardNormal);
                eta + u > 0.0
            })
            .collect();
        let x = DesignMatrix::from_columns(vec![c1, c2], vec![], false).unwrap().with_intercept();
        let fit = refit_probit(&x, &t, &[1, 2]).unwrap();
        let oracle = grid_oracle(&x, &t, 3);
        for j in 0..3 {
            assert!(
                (fit.coefficients[j] - oracle[j]).abs() < 1e-5,
                "coef {j}: {} vs {}",
                fit.coefficients[j],
                oracle[j]
            );
        }
        assert!(fit.converged);
    }

    #[test]
    fn probit_symmetry_negates_coefficients() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let n = 150;
        let c1: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let c2: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let t: Vec<bool> = (0..n)
            .map(|i| 0.5 * c1[i] - 0.3 * c2[i] + rng.sample::<f64, _>(StandardNormal) > 0.2)
            .collect();
        let x = DesignMatrix::from_columns(vec![c1.clone(), c2.clone()], vec![], false)
            .unwrap()
            .with_intercept();
        let tflip: Vec<bool> = t.iter().map(|&v| !v).collect();
        let fit = lasso_probit(&x, &t, Penalty::Fixed(0.05)).unwrap();

        // relabeling t -> 1-t negates every coefficient (log Phi(q eta) with
        // q flipped is maximized at -beta; the l1 penalty is sign-invariant)
        let fit_relabel = lasso_probit(&x, &tflip, Penalty::Fixed(0.05)).unwrap();
        for j in 0..x.p() {
            assert!(
                (fit.coefficients[j] + fit_relabel.coefficients[j]).abs() < 1e-8,
                "coef {j}: {} vs {}",
                fit.coefficients[j],
                fit_relabel.coefficients[j]
            );
        }

        // flipping t and x together negates the intercept and keeps slopes
        let xneg = DesignMatrix::from_columns(
            vec![c1.iter().map(|v| -v).collect(), c2.iter().map(|v| -v).collect()],
            vec![],
            false,
        )
        .unwrap()
        .with_intercept();
        let fit_m = lasso_probit(&xneg, &tflip, Penalty::Fixed(0.05)).unwrap();
        assert!((fit.coefficients[0] + fit_m.coefficients[0]).abs() < 1e-8);
        for j in 1..x.p() {
            assert!((fit.coefficients[j] - fit_m.coefficients[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn refit_empty_selection_is_intercept_only() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let n = 80;
        let c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let t: Vec<bool> = (0..n).map(|i| i % 4 == 0).collect();
        let x = DesignMatrix::from_columns(vec![c], vec![], false).unwrap().with_intercept();
        let fit = refit_probit(&x, &t, &[]).unwrap();
        assert!((fit.coefficients[0] - norm_quantile(0.25)).abs() < 1e-8);
    }

    #[test]
    fn perfect_separation_is_reported() {
        // the classes split exactly at zero: no finite MLE exists
        let xcol = vec![-1.0, -0.5, 0.5, 1.0];
        let t = vec![false, false, true, true];
        let x = DesignMatrix::from_columns(vec![xcol], vec![], false).unwrap().with_intercept();
        let err = refit_probit(&x, &t, &[1]).unwrap_err();
        assert!(matches!(err, Error::NonConvergence(_)), "got {err:?}");
    }

    #[test]
    fn single_class_rejected() {
        let x = DesignMatrix::from_columns(vec![vec![0.1, 0.2, 0.3]], vec![], false)
            .unwrap()
            .with_intercept();
        assert!(lasso_probit(&x, &[true, true, true], Penalty::Fixed(0.1)).is_err());
        assert!(refit_probit(&x, &[false, false, false], &[1]).is_err());
    }

    #[test]
    fn cv_is_deterministic_and_recovers_signal() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let n = 250;
        let p = 40;
        let cols: Vec<Vec<f64>> =
            (0..p).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let t: Vec<bool> = (0..n)
            .map(|i| {
                1.2 * cols[0][i] - 0.9 * cols[1][i] + rng.sample::<f64, _>(StandardNormal) > 0.0
            })
            .collect();
        let x = DesignMatrix::from_columns(cols, vec![], false).unwrap().with_intercept();
        let fit1 = lasso_probit_with(&x, &t, Penalty::Auto, 10, 42, CvRule::Min).unwrap();
        let fit2 = lasso_probit_with(&x, &t, Penalty::Auto, 10, 42, CvRule::Min).unwrap();
        assert_eq!(fit1.selected, fit2.selected);
        assert_eq!(fit1.lambda, fit2.lambda);
        assert!(fit1.selected.contains(&1) && fit1.selected.contains(&2), "{:?}", fit1.selected);
        // propensities are probabilities
        for e in fit1.propensity(&x) {
            assert!(e > 0.0 && e < 1.0);
        }
    }

    #[test]
    fn propensity_uses_normal_cdf() {
        let x = DesignMatrix::from_columns(vec![vec![0.0, 1.0, -1.0]], vec![], false).unwrap();
        let fit = ProbitFit {
            coefficients: vec![1.0],
            selected: vec![0],
            lambda: None,
            converged: true,
            iterations: 1,
        };
        let e = fit.propensity(&x);
        assert_eq!(e[0], 0.5);
        assert!((e[1] - norm_cdf(1.0)).abs() < 1e-15);
    }
}
