//! L1-penalised logistic regression with storm-grouped cross-validation.
//!
//! The fitted objective is `(1/n) loglik(b0, b) - lambda * sum |b_j|` on
//! standardised predictors, maximised by iteratively reweighted least squares
//! with cyclic coordinate descent on each quadratic approximation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Target};
use crate::numeric::{logit, sigmoid};

#[derive(Debug, Error)]
pub enum LassoError {
    #[error("labels contain a single class; both are required")]
    SingleClass,
    #[error("no observations")]
    Empty,
    #[error("row {row} has {found} values, expected {expected}")]
    Shape { row: usize, expected: usize, found: usize },
    #[error("column `{0}` required by the model is not in the data")]
    UnknownColumn(String),
    #[error("need at least 2 storms for cross-validation, got {0}")]
    TooFewStorms(usize),
    #[error("every cross-validation fold failed to fit")]
    AllFoldsFailed,
    #[error("lambda must be non-negative and finite, got {0}")]
    BadLambda(f64),
}

/// Per-column centring and scaling learnt on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    /// Population standard deviations.
    pub sds: Vec<f64>,
    /// Zero-variance training columns; they are zeroed and never enter the fit.
    pub excluded: Vec<bool>,
}

impl Standardization {
    pub fn fit(x: &[Vec<f64>]) -> Standardization {
        let p = x.first().map_or(0, |r| r.len());
        let n = x.len() as f64;
        let mut means = vec![0.0; p];
        for r in x {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut sds = vec![0.0; p];
        for r in x {
            for ((s, v), m) in sds.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        sds.iter_mut().for_each(|s| *s = (*s / n).sqrt());
        let excluded: Vec<bool> = sds
            .iter()
            .zip(&means)
            .map(|(s, m)| !(*s > 1e-12 * m.abs().max(1.0)))
            .collect();
        for (j, e) in excluded.iter().enumerate() {
            if *e {
                log::warn!("column {j} has zero variance in training data; excluded from the fit");
            }
        }
        Standardization { means, sds, excluded }
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(j, v)| if self.excluded[j] { 0.0 } else { (v - self.means[j]) / self.sds[j] })
                    .collect()
            })
            .collect()
    }
}

/// Standardises `x` with `params` if given, otherwise with parameters fit on `x`.
pub fn standardize(x: &[Vec<f64>], params: Option<&Standardization>) -> (Vec<Vec<f64>>, Standardization) {
    let params = params.cloned().unwrap_or_else(|| Standardization::fit(x));
    (params.apply(x), params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    /// Convergence: weighted RMS change of the linear predictor in one
    /// IRLS step.
    pub tol: f64,
    /// Coordinate descent stops when no update moves the weighted fit by more
    /// than this (`|delta_j| * sqrt(mean w x_j^2)`).
    pub cd_tol: f64,
    pub max_outer: usize,
    pub max_sweeps: usize,
    pub weight_floor: f64,
}

impl LassoOptions {
    /// Tight tolerances for comparisons against exact solutions.
    pub fn precise() -> LassoOptions {
        LassoOptions {
            tol: 1e-12,
            cd_tol: 1e-13,
            ..LassoOptions::default()
        }
    }
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-4,
            cd_tol: 3e-4,
            max_outer: 100,
            max_sweeps: 100_000,
            weight_floor: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    /// Penalised objective after each IRLS step.
    pub objective_trace: Vec<f64>,
    pub warning: Option<String>,
}

impl LassoFit {
    pub fn n_nonzero(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }
}

/// Column-major design matrix.
struct Design {
    n: usize,
    cols: Vec<Vec<f64>>,
    active: Vec<usize>,
}

impl Design {
    fn new(x: &[Vec<f64>], excluded: Option<&[bool]>) -> Result<Design, LassoError> {
        let n = x.len();
        if n == 0 {
            return Err(LassoError::Empty);
        }
        let p = x[0].len();
        let mut cols = vec![Vec::with_capacity(n); p];
        for (row, r) in x.iter().enumerate() {
            if r.len() != p {
                return Err(LassoError::Shape { row, expected: p, found: r.len() });
            }
            for (c, v) in cols.iter_mut().zip(r) {
                c.push(*v);
            }
        }
        let active = (0..p)
            .filter(|&j| !excluded.is_some_and(|e| e[j]) && cols[j].iter().any(|v| *v != 0.0))
            .collect();
        Ok(Design { n, cols, active })
    }

    fn eta(&self, b0: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.n];
        for &j in &self.active {
            if beta[j] != 0.0 {
                for (e, x) in eta.iter_mut().zip(&self.cols[j]) {
                    *e += beta[j] * x;
                }
            }
        }
        eta
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn soft_threshold(z: f64, g: f64) -> f64 {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        0.0
    }
}

/// Mean Bernoulli log-likelihood at linear predictor `eta`.
fn mean_loglik(eta: &[f64], y: &[f64]) -> f64 {
    eta.iter().zip(y).map(|(e, y)| y * e - softplus(*e)).sum::<f64>() / eta.len() as f64
}

fn penalised(eta: &[f64], y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    mean_loglik(eta, y) - lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Smallest penalty at which every coefficient is zero.
pub fn lambda_max(x_std: &[Vec<f64>], y: &[bool]) -> f64 {
    let n = x_std.len() as f64;
    let ybar = y.iter().filter(|v| **v).count() as f64 / n;
    let p = x_std.first().map_or(0, |r| r.len());
    (0..p)
        .map(|j| {
            x_std
                .iter()
                .zip(y)
                .map(|(r, &yi)| r[j] * (yi as u8 as f64 - ybar))
                .sum::<f64>()
                .abs()
                / n
        })
        .fold(0.0, f64::max)
}

/// Minimises `(1/2n) sum w_i (z_i - b0 - x_i b)^2 + lambda |b|_1` by cyclic
/// coordinate descent, starting from the given coefficients.
///
/// Works on the weighted gradient with covariance updates: a column's
/// weighted inner products with every other column are computed the first
/// time its coefficient moves, so a sweep costs O(p) per coordinate.
///
/// `resid` must hold `z - b0 - X b` on entry and is brought up to date on exit.
#[allow(clippy::too_many_arguments)]
fn weighted_lasso_cd(
    d: &Design,
    w: &[f64],
    lambda: f64,
    b0: &mut f64,
    beta: &mut [f64],
    resid: &mut [f64],
    tol: f64,
    max_sweeps: usize,
) -> usize {
    let n = d.n as f64;
    let p = d.cols.len();
    let wmean = w.iter().sum::<f64>() / n;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(w).map(|((a, b), w)| w * a * b).sum::<f64>() / n;
    let ones = vec![1.0; d.n];
    let mut xwx = vec![0.0; p];
    let mut xw = vec![0.0; p];
    let mut grad = vec![0.0; p];
    for &j in &d.active {
        xwx[j] = dot(&d.cols[j], &d.cols[j]);
        xw[j] = dot(&d.cols[j], &ones);
        grad[j] = dot(&d.cols[j], resid);
    }
    let mut grad0 = dot(&ones, resid);
    let mut gram: Vec<Option<Vec<f64>>> = vec![None; p];
    let (b0_start, beta_start) = (*b0, beta.to_vec());

    let update = |j: usize, beta: &mut [f64], grad: &mut [f64], grad0: &mut f64, gram: &mut Vec<Option<Vec<f64>>>| -> f64 {
        if xwx[j] <= 0.0 {
            return 0.0;
        }
        let old = beta[j];
        let new = soft_threshold(grad[j] + xwx[j] * old, lambda) / xwx[j];
        let delta = new - old;
        if delta != 0.0 {
            beta[j] = new;
            let col = gram[j].get_or_insert_with(|| {
            let mut c = vec![0.0; p];
                for &k in &d.active {
                    c[k] = dot(&d.cols[j], &d.cols[k]);
                }
                c
            });
            for &k in &d.active {
                grad[k] -= delta * col[k];
            }
            *grad0 -= delta * xw[j];
        }
        delta.abs() * xwx[j].sqrt()
    };
    let update_intercept = |b0: &mut f64, grad: &mut [f64], grad0: &mut f64| -> f64 {
        if wmean <= 0.0 {
            return 0.0;
        }
        let delta = *grad0 / wmean;
        if delta != 0.0 {
            *b0 += delta;
            *grad0 -= delta * wmean;
            for &k in &d.active {
                grad[k] -= delta * xw[k];
            }
        }
        delta.abs() * wmean.sqrt()
    };

    let mut sweeps = 0;
    'outer: loop {
        let mut change = update_intercept(b0, &mut grad, &mut grad0);
        for &j in &d.active {
            change = change.max(update(j, beta, &mut grad, &mut grad0, &mut gram));
        }
        sweeps += 1;
        if change < tol || sweeps >= max_sweeps {
            break;
        }
        // iterate on the current support until it settles
        let support: Vec<usize> = d.active.iter().copied().filter(|&j| beta[j] != 0.0).collect();
        let mut inner = 0;
        loop {
            let mut change = update_intercept(b0, &mut grad, &mut grad0);
            for &j in &support {
                change = change.max(update(j, beta, &mut grad, &mut grad0, &mut gram));
            }
            sweeps += 1;
            inner += 1;
            if sweeps >= max_sweeps {
                break 'outer;
            }
            if change < tol {
                break;
            }
            // correlated columns make cyclic updates crawl; once the signs
            // look stable, jump to the exact minimiser on the support
            if inner % 10 == 0 {
                let cols: Vec<&[f64]> = support.iter().map(|&j| gram[j].as_deref().expect("moved")).collect();
                if let Some((d0, dbeta, full)) = support_newton_step(&support, &cols, &xw, wmean, &grad, grad0, beta, lambda) {
                    *b0 += d0;
                    grad0 -= d0 * wmean;
                    for &k in &d.active {
                        grad[k] -= d0 * xw[k];
                    }
                    for (&j, (col, dj)) in support.iter().zip(cols.iter().zip(&dbeta)) {
                        beta[j] += dj;
                        grad0 -= dj * xw[j];
                        for &k in &d.active {
                            grad[k] -= dj * col[k];
                        }
                    }
                    if full {
                        break;
                    }
                }
            }
        }
    }

    let db0 = *b0 - b0_start;
    resid.iter_mut().for_each(|r| *r -= db0);
    for &j in &d.active {
        let delta = beta[j] - beta_start[j];
        if delta != 0.0 {
            for (r, x) in resid.iter_mut().zip(&d.cols[j]) {
                *r -= delta * x;
            }
        }
    }
    sweeps
}

/// Exact minimiser of the quadratic subproblem restricted to `support`,
/// assuming the current signs hold. The step is cut short where the first
/// coefficient would change sign; that coefficient lands exactly on zero.
/// Returns `None` when the system is singular.
#[allow(clippy::too_many_arguments)]
fn support_newton_step(
    support: &[usize],
    gram_cols: &[&[f64]],
    xw: &[f64],
    wmean: f64,
    grad: &[f64],
    grad0: f64,
    beta: &[f64],
    lambda: f64,
) -> Option<(f64, Vec<f64>, bool)> {
    let m = support.len() + 1;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    a[(0, 0)] = wmean;
    rhs[0] = grad0;
    for (i, (&j, col)) in support.iter().zip(gram_cols).enumerate() {
        a[(0, i + 1)] = xw[j];
        a[(i + 1, 0)] = xw[j];
        for (l, &k) in support.iter().enumerate() {
            a[(i + 1, l + 1)] = col[k];
        }
        rhs[i + 1] = grad[j] - lambda * beta[j].signum();
    }
    let step = a.cholesky()?.solve(&rhs);
    if !step.iter().all(|v| v.is_finite()) {
        return None;
    }
    // the objective is quadratic inside the current orthant, so it falls
    // monotonically along the step until the first coefficient reaches zero
    let mut t = 1.0_f64;
    let mut hit = None;
    for (i, &j) in support.iter().enumerate() {
        let dj = step[i + 1];
        if (beta[j] + dj) * beta[j] <= 0.0 {
            let tj = -beta[j] / dj;
            if tj < t {
                t = tj;
                hit = Some(i);
            }
        }
    }
    let mut dbeta: Vec<f64> = step.iter().skip(1).map(|v| t * v).collect();
    if let Some(i) = hit {
        dbeta[i] = -beta[support[i]];
    }
    Some((t * step[0], dbeta, hit.is_none()))
}

/// Solves the weighted quadratic lasso subproblem directly; exposed for
/// checking the soft-thresholding behaviour.
pub fn weighted_lasso(x: &[Vec<f64>], z: &[f64], w: &[f64], lambda: f64) -> Result<(f64, Vec<f64>), LassoError> {
    let d = Design::new(x, None)?;
    let mut b0 = 0.0;
    let mut beta = vec![0.0; d.cols.len()];
    let mut resid = z.to_vec();
    weighted_lasso_cd(&d, w, lambda, &mut b0, &mut beta, &mut resid, 1e-13, 100_000);
    Ok((b0, beta))
}

fn fit_design(
    d: &Design,
    y: &[f64],
    lambda: f64,
    start: Option<(f64, &[f64])>,
    opts: &LassoOptions,
) -> LassoFit {
    let p = d.cols.len();
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let (mut b0, mut beta) = match start {
        Some((b0, b)) => (b0, b.to_vec()),
        None => (logit(ybar), vec![0.0; p]),
    };
    let mut eta = d.eta(b0, &beta);
    let mut obj = penalised(&eta, y, &beta, lambda);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        let prob: Vec<f64> = eta.iter().map(|e| sigmoid(*e)).collect();
        let w: Vec<f64> = prob.iter().map(|p| (p * (1.0 - p)).max(opts.weight_floor)).collect();
        // working response minus current fit
        let mut resid: Vec<f64> = y.iter().zip(&prob).zip(&w).map(|((y, p), w)| (y - p) / w).collect();
        let before = obj;
        let (mut nb0, mut nbeta) = (b0, beta.clone());
        weighted_lasso_cd(d, &w, lambda, &mut nb0, &mut nbeta, &mut resid, opts.cd_tol, opts.max_sweeps);

        // step halving keeps the objective from decreasing
        let mut t = 1.0;
        let (mut cb0, mut cbeta, mut ceta, mut cobj);
        loop {
            cb0 = b0 + t * (nb0 - b0);
            cbeta = beta.iter().zip(&nbeta).map(|(o, n)| o + t * (n - o)).collect::<Vec<_>>();
            ceta = d.eta(cb0, &cbeta);
            cobj = penalised(&ceta, y, &cbeta, lambda);
            if cobj >= obj - 1e-13 * obj.abs().max(1.0) || t < 1e-9 {
                break;
            }
            t *= 0.5;
        }
        // weighted RMS movement of the linear predictor
        let change = (eta.iter().zip(&ceta).zip(&w).map(|((a, b), w)| w * (a - b) * (a - b)).sum::<f64>()
            / d.n as f64)
            .sqrt();
        if cobj >= obj {
            b0 = cb0;
            beta = cbeta;
            eta = ceta;
            obj = cobj;
        }
        trace.push(obj);
        // a flat objective means rounding, not the algorithm, limits `change`
        let stalled = obj - before <= 4.0 * f64::EPSILON * obj.abs().max(1.0);
        if change < opts.tol || stalled {
            converged = true;
            break;
        }
    }
    let big = beta.iter().fold(b0.abs(), |m, b| m.max(b.abs()));
    let warning = if !converged && big > 20.0 {
        Some(format!(
            "coefficients still growing after {outer} iterations (largest {big:.3e}); the classes look separable, use a positive lambda"
        ))
    } else if !converged {
        Some(format!("not converged after {outer} iterations"))
    } else {
        None
    };
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    LassoFit {
        intercept: b0,
        beta,
        lambda,
        converged,
        outer_iterations: outer,
        objective_trace: trace,
        warning,
    }
}

fn to_f64(y: &[bool]) -> Vec<f64> {
    y.iter().map(|&v| v as u8 as f64).collect()
}

fn check_classes(y: &[bool]) -> Result<(), LassoError> {
    if y.is_empty() {
        return Err(LassoError::Empty);
    }
    if y.iter().all(|v| *v) || y.iter().all(|v| !*v) {
        return Err(LassoError::SingleClass);
    }
    Ok(())
}

/// Fits at a single penalty on already standardised predictors. Columns
/// flagged in `excluded` keep a zero coefficient.
pub fn fit_logistic_lasso(
    x_std: &[Vec<f64>],
    y: &[bool],
    lambda: f64,
    excluded: Option<&[bool]>,
    opts: &LassoOptions,
) -> Result<LassoFit, LassoError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(LassoError::BadLambda(lambda));
    }
    check_classes(y)?;
    let d = Design::new(x_std, excluded)?;
    let yf = to_f64(y);
    let lmax = lambda_max_design(&d, &yf);
    if lambda >= lmax {
        return Ok(null_fit(&d, &yf, lambda));
    }
    Ok(fit_design(&d, &yf, lambda, None, opts))
}

fn lambda_max_design(d: &Design, y: &[f64]) -> f64 {
    let n = d.n as f64;
    let ybar = y.iter().sum::<f64>() / n;
    d.active
        .iter()
        .map(|&j| d.cols[j].iter().zip(y).map(|(x, y)| x * (y - ybar)).sum::<f64>().abs() / n)
        .fold(0.0, f64::max)
}

fn null_fit(d: &Design, y: &[f64], lambda: f64) -> LassoFit {
    let b0 = logit(y.iter().sum::<f64>() / y.len() as f64);
    let beta = vec![0.0; d.cols.len()];
    let obj = penalised(&vec![b0; d.n], y, &beta, lambda);
    LassoFit {
        intercept: b0,
        beta,
        lambda,
        converged: true,
        outer_iterations: 0,
        objective_trace: vec![obj],
        warning: None,
    }
}

/// `len` log-spaced penalties from `lmax` down to `min_ratio * lmax`.
pub fn lambda_grid(lmax: f64, len: usize, min_ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![lmax];
    }
    let (hi, lo) = (lmax.ln(), (lmax * min_ratio).ln());
    (0..len)
        .map(|i| {
            if i == 0 {
                lmax
            } else {
                (hi + (lo - hi) * i as f64 / (len - 1) as f64).exp()
            }
        })
        .collect()
}

/// Fits the path with warm starts, one fit per penalty in order. The path
/// ends early once the explained deviance saturates or stops improving, so
/// the result may be shorter than `lambdas`.
pub fn fit_path(
    x_std: &[Vec<f64>],
    y: &[bool],
    lambdas: &[f64],
    excluded: Option<&[bool]>,
    opts: &LassoOptions,
) -> Result<Vec<LassoFit>, LassoError> {
    path_fits(x_std, y, lambdas, excluded, opts, true)
}

fn path_fits(
    x_std: &[Vec<f64>],
    y: &[bool],
    lambdas: &[f64],
    excluded: Option<&[bool]>,
    opts: &LassoOptions,
    early_stop: bool,
) -> Result<Vec<LassoFit>, LassoError> {
    check_classes(y)?;
    let d = Design::new(x_std, excluded)?;
    let yf = to_f64(y);
    let lmax = lambda_max_design(&d, &yf);
    let null_ll = mean_loglik(&vec![logit(yf.iter().sum::<f64>() / yf.len() as f64); d.n], &yf);
    let mut out: Vec<LassoFit> = Vec::with_capacity(lambdas.len());
    let mut prev_ratio = 0.0;
    for &lam in lambdas {
        let fit = if lam >= lmax {
            null_fit(&d, &yf, lam)
        } else {
            let start = out.last().map(|f| (f.intercept, f.beta.as_slice()));
            fit_design(&d, &yf, lam, start, opts)
        };
        // fraction of null deviance explained; the path stops once it
        // saturates or stalls, as further penalties only chase separation
        let ratio = 1.0 - mean_loglik(&d.eta(fit.intercept, &fit.beta), &yf) / null_ll;
        out.push(fit);
        if early_stop && lam < lmax && (ratio > PATH_MAX_DEV_RATIO || ratio - prev_ratio < PATH_MIN_DEV_GAIN * ratio) {
            break;
        }
        prev_ratio = ratio;
    }
    Ok(out)
}

/// Path stops when this fraction of the null deviance is explained.
const PATH_MAX_DEV_RATIO: f64 = 0.999;
/// Path stops when the relative gain in explained deviance falls below this.
const PATH_MIN_DEV_GAIN: f64 = 1e-5;

pub fn linear_predictor(intercept: f64, beta: &[f64], x_std: &[f64]) -> f64 {
    intercept + beta.iter().zip(x_std).map(|(b, x)| b * x).sum::<f64>()
}

/// Mean binomial deviance of probabilities `p` for labels `y`.
pub fn binomial_deviance(p: &[f64], y: &[bool]) -> f64 {
    let eps = 1e-15;
    let s: f64 = p
        .iter()
        .zip(y)
        .map(|(p, &y)| {
            let p = p.clamp(eps, 1.0 - eps);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    2.0 * s / p.len() as f64
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPath {
    pub lambdas: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub path_len: usize,
    pub min_ratio: f64,
    /// Pick the largest penalty within one standard error of the minimum.
    pub one_se: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 10,
            seed: 0,
            path_len: 100,
            min_ratio: 1e-4,
            one_se: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub path: LambdaPath,
    pub chosen_index: usize,
    pub lambda: f64,
    pub folds_used: usize,
    pub fold_of_storm: BTreeMap<String, usize>,
    pub failed_folds: Vec<usize>,
}

/// Assigns whole storms to folds: sorted unique ids are shuffled with the
/// seed and dealt out round-robin.
pub fn assign_folds(storms: &[String], folds: usize, seed: u64) -> (BTreeMap<String, usize>, usize) {
    let mut ids: Vec<&String> = storms.iter().collect();
    ids.sort();
    ids.dedup();
    let k = folds.min(ids.len()).max(1);
    if k < folds {
        log::warn!("only {} storms for {} folds; using {} folds", ids.len(), folds, k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let map = ids.into_iter().enumerate().map(|(i, s)| (s.clone(), i % k)).collect();
    (map, k)
}

/// Chooses the penalty by storm-grouped K-fold cross-validation on
/// held-out binomial deviance. `x` is unstandardised; every fold is
/// standardised with its own training rows.
pub fn cv_select_lambda(
    x: &[Vec<f64>],
    y: &[bool],
    storms: &[String],
    cfg: &CvConfig,
    opts: &LassoOptions,
) -> Result<CvResult, LassoError> {
    check_classes(y)?;
    let (fold_of_storm, k) = assign_folds(storms, cfg.folds, cfg.seed);
    if k < 2 {
        return Err(LassoError::TooFewStorms(k));
    }
    let (x_std, params) = standardize(x, None);
    let lambdas = lambda_grid(lambda_max_excluding(&x_std, y, &params.excluded), cfg.path_len, cfg.min_ratio);
    let fold: Vec<usize> = storms.iter().map(|s| fold_of_storm[s]).collect();

    let per_fold: Vec<Option<Vec<f64>>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..x.len()).filter(|&i| fold[i] != f).collect();
            let val: Vec<usize> = (0..x.len()).filter(|&i| fold[i] == f).collect();
            let xt: Vec<Vec<f64>> = train.iter().map(|&i| x[i].clone()).collect();
            let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
            let (xt_std, p) = standardize(&xt, None);
            let xv: Vec<Vec<f64>> = p.apply(&val.iter().map(|&i| x[i].clone()).collect::<Vec<_>>());
            let yv: Vec<bool> = val.iter().map(|&i| y[i]).collect();
            let fits = fit_path(&xt_std, &yt, &lambdas, Some(&p.excluded), opts).ok()?;
            Some(
                fits.iter()
                    .map(|fit| {
                        let prob: Vec<f64> = xv
                            .iter()
                            .map(|r| sigmoid(linear_predictor(fit.intercept, &fit.beta, r)))
                            .collect();
                        binomial_deviance(&prob, &yv)
                    })
                    .collect(),
            )
        })
        .collect();

    let failed_folds: Vec<usize> = (0..k).filter(|&f| per_fold[f].is_none()).collect();
    let ok: Vec<&Vec<f64>> = per_fold.iter().flatten().collect();
    if ok.is_empty() {
        return Err(LassoError::AllFoldsFailed);
    }
    if !failed_folds.is_empty() {
        log::warn!("folds {failed_folds:?} have a single class in training and were skipped");
    }
    // folds may stop their paths early; keep the penalties every fold reached
    let len = ok.iter().map(|d| d.len()).min().unwrap_or(0).min(lambdas.len());
    let mut lambdas = lambdas;
    lambdas.truncate(len);
    let m = ok.len() as f64;
    let cv_mean: Vec<f64> = (0..lambdas.len()).map(|l| ok.iter().map(|d| d[l]).sum::<f64>() / m).collect();
    let cv_se: Vec<f64> = (0..lambdas.len())
        .map(|l| {
            if ok.len() < 2 {
                return 0.0;
            }
            let v = ok.iter().map(|d| (d[l] - cv_mean[l]).powi(2)).sum::<f64>() / (m - 1.0);
            (v / m).sqrt()
        })
        .collect();

    // strict comparison keeps the larger penalty on ties
    let mut best = 0;
    for l in 1..lambdas.len() {
        if cv_mean[l] < cv_mean[best] {
            best = l;
        }
    }
    let chosen_index = if cfg.one_se {
        let bound = cv_mean[best] + cv_se[best];
        (0..=best).find(|&l| cv_mean[l] <= bound).unwrap_or(best)
    } else {
        best
    };
    Ok(CvResult {
        lambda: lambdas[chosen_index],
        path: LambdaPath { lambdas, cv_mean, cv_se },
        chosen_index,
        folds_used: k,
        fold_of_storm,
        failed_folds,
    })
}

fn lambda_max_excluding(x_std: &[Vec<f64>], y: &[bool], excluded: &[bool]) -> f64 {
    let d = match Design::new(x_std, Some(excluded)) {
        Ok(d) => d,
        Err(_) => return 0.0,
    };
    lambda_max_design(&d, &to_f64(y))
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub predictor_set: String,
    pub target: Target,
    pub columns: Vec<String>,
    pub intercept: f64,
    /// Coefficients on the standardised scale, one per column.
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub standardization: Standardization,
    pub p_star: f64,
    pub seed: u64,
    pub data_fingerprint: String,
    pub cv: Option<CvResult>,
    pub warning: Option<String>,
}

impl FittedModel {
    /// Non-zero coefficients by column name.
    pub fn named_coefficients(&self) -> BTreeMap<String, f64> {
        self.columns
            .iter()
            .zip(&self.coefficients)
            .filter(|(_, b)| **b != 0.0)
            .map(|(c, b)| (c.clone(), *b))
            .collect()
    }
}

/// `sigmoid(b0 + x_std . b)` for raw rows in model column order.
pub fn predict_proba(model: &FittedModel, x: &[Vec<f64>]) -> Vec<f64> {
    model
        .standardization
        .apply(x)
        .iter()
        .map(|r| sigmoid(linear_predictor(model.intercept, &model.coefficients, r)))
        .collect()
}

/// Predicts a dataset, matching its columns to the model by name.
pub fn predict_dataset(model: &FittedModel, ds: &Dataset) -> Result<Vec<f64>, LassoError> {
    let idx: Vec<usize> = model
        .columns
        .iter()
        .map(|c| {
            ds.columns
                .iter()
                .position(|x| x == c)
                .ok_or_else(|| LassoError::UnknownColumn(c.clone()))
        })
        .collect::<Result<_, _>>()?;
    let x: Vec<Vec<f64>> = ds.rows.iter().map(|r| idx.iter().map(|&i| r.values[i]).collect()).collect();
    Ok(predict_proba(model, &x))
}

/// Cutoff maximising balanced accuracy over the midpoints of the sorted
/// distinct values of `{0, p..., 1}`; ties go to the larger cutoff. Rows with
/// `p > cutoff` are predicted positive.
pub fn choose_cutoff(p: &[f64], y: &[bool]) -> Result<(f64, f64), LassoError> {
    check_classes(y)?;
    let mut pairs: Vec<(f64, bool)> = p.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n_pos = y.iter().filter(|v| **v).count() as f64;
    let n_neg = y.len() as f64 - n_pos;

    let mut levels: Vec<f64> = vec![0.0];
    levels.extend(pairs.iter().map(|p| p.0));
    levels.push(1.0);
    levels.dedup();

    // counts of rows at or below each level
    let (mut i, mut neg_below, mut pos_below) = (0usize, 0.0, 0.0);
    let (mut best_ba, mut best_cut) = (f64::NEG_INFINITY, 0.5);
    for w in levels.windows(2) {
        while i < pairs.len() && pairs[i].0 <= w[0] {
            if pairs[i].1 {
                pos_below += 1.0;
            } else {
                neg_below += 1.0;
            }
            i += 1;
        }
        let cut = 0.5 * (w[0] + w[1]);
        let ba = 0.5 * ((n_pos - pos_below) / n_pos + neg_below / n_neg);
        if ba >= best_ba {
            best_ba = ba;
            best_cut = cut;
        }
    }
    Ok((best_cut, best_ba))
}

pub fn balanced_accuracy(p: &[f64], y: &[bool], cutoff: f64) -> f64 {
    let (mut tp, mut tn, mut np, mut nn) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &y) in p.iter().zip(y) {
        if y {
            np += 1.0;
            if p > cutoff {
                tp += 1.0;
            }
        } else {
            nn += 1.0;
            if p <= cutoff {
                tn += 1.0;
            }
        }
    }
    0.5 * (tp / np + tn / nn)
}

/// Cross-validates, refits on all training rows at the chosen penalty and
/// picks the balanced-accuracy cutoff on the training predictions.
pub fn fit_model(
    train: &Dataset,
    target: Target,
    predictor_set: &str,
    cfg: &CvConfig,
    opts: &LassoOptions,
    data_fingerprint: &str,
) -> Result<FittedModel, LassoError> {
    let x = train.matrix();
    let y = train.labels(target);
    let storms = train.storms();
    let cv = cv_select_lambda(&x, &y, &storms, cfg, opts)?;
    let (x_std, params) = standardize(&x, None);
    let path = path_fits(&x_std, &y, &cv.path.lambdas[..=cv.chosen_index], Some(&params.excluded), opts, false)?;
    let fit = path.last().expect("non-empty path").clone();
    let mut model = FittedModel {
        predictor_set: predictor_set.to_string(),
        target,
        columns: train.columns.clone(),
        intercept: fit.intercept,
        coefficients: fit.beta,
        lambda: fit.lambda,
        standardization: params,
        p_star: 0.5,
        seed: cfg.seed,
        data_fingerprint: data_fingerprint.to_string(),
        cv: Some(cv),
        warning: fit.warning,
    };
    let p = predict_proba(&model, &x);
    model.p_star = choose_cutoff(&p, &y)?.0;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_sd_standardisation() {
        let (z, p) = standardize(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]], None);
        assert!((z[0][0] + 1.224_744_871).abs() < 1e-9);
        assert_eq!(z[1][0], 0.0);
        assert!((z[2][0] - 1.224_744_871).abs() < 1e-9);
        assert!(p.excluded[1] && !p.excluded[0]);
        let (t, _) = standardize(&[vec![4.0, 1.0]], Some(&p));
        assert!((t[0][0] - 2.0 / (2.0 / 3.0_f64).sqrt()).abs() < 1e-12);
        assert_eq!(t[0][1], 0.0);
    }

    #[test]
    fn hand_cutoff_case() {
        let (c, ba) = choose_cutoff(&[0.1, 0.4, 0.6, 0.9], &[false, false, true, true]).unwrap();
        assert_eq!(c, 0.5);
        assert_eq!(ba, 1.0);
    }

    #[test]
    fn large_penalty_gives_null_model() {
        let x = vec![vec![1.0], vec![-1.0], vec![0.5], vec![-0.5]];
        let y = [true, false, false, false];
        let f = fit_logistic_lasso(&x, &y, 10.0, None, &LassoOptions::default()).unwrap();
        assert_eq!(f.beta, vec![0.0]);
        assert_eq!(f.intercept, logit(0.25));
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = lambda_grid(2.0, 100, 1e-4);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert!((g[99] - 2e-4).abs() < 1e-15);
        let r = g[1] / g[0];
        assert!(g.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
    }

    #[test]
    fn folds_keep_storms_together() {
        let storms: Vec<String> = (0..30).map(|i| format!("S{}", i % 12)).collect();
        let (m, k) = assign_folds(&storms, 10, 7);
        assert_eq!(k, 10);
        assert_eq!(m.len(), 12);
        let doubled: Vec<String> = storms.iter().chain(&storms).cloned().collect();
        assert_eq!(assign_folds(&doubled, 10, 7).0, m);
        let (_, k) = assign_folds(&storms[..3], 10, 7);
        assert_eq!(k, 3);
    }
}
