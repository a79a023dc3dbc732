//! First-stage nuisance learners behind one fit/predict surface.
//!
//! The estimation theory only asks the first stage for an o(N^-1/4) mean
//! square error, so the learners here are deliberately plain: l1-penalized
//! least squares and logistic regression solved by coordinate descent, and
//! cell-wise empirical quantiles. An oracle learner that reproduces the
//! exact population nuisances of a synthetic DGP backs the infeasible
//! benchmark, and a memorizing wrapper reproduces in-sample overfitting for
//! the sample-splitting studies.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};

use crate::dataset::DgpTruth;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::rng::{substream, Stream};

/// Fitted class probabilities are clamped into this closed interval before
/// they ever reach a moment denominator.
pub const PROB_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Lasso,
    LogisticLasso,
    EmpiricalQuantile,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// lambda = sigma_hat * sqrt(2 log(2 p n) / n), sigma_hat from a ridge
    /// pilot fit.
    Plugin,
    Fixed(f64),
    /// K-fold cross-validated lambda on a 20-point log grid.
    Cv(usize),
}

fn default_kind() -> LearnerKind {
    LearnerKind::Lasso
}
fn default_penalty() -> Penalty {
    Penalty::Plugin
}
fn default_max_iter() -> usize {
    2000
}
fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSpec {
    #[serde(default = "default_kind")]
    pub kind: LearnerKind,
    #[serde(default = "default_penalty")]
    pub penalty: Penalty,
    /// Covariate column indices that define quantile cells.
    #[serde(default)]
    pub quantile_cells: Vec<usize>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Optional N(0, sd^2) noise added to outcomes before the quantile sort.
    #[serde(default)]
    pub jitter_sd: Option<f64>,
    /// Test hook: blend the fitted prediction with the memorized training
    /// response on exact feature matches (weight on the memorized value).
    #[serde(default)]
    pub memorize_weight: Option<f64>,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec {
            kind: LearnerKind::Lasso,
            penalty: Penalty::Plugin,
            quantile_cells: Vec::new(),
            max_iter: 2000,
            tol: 1e-9,
            jitter_sd: None,
            memorize_weight: None,
        }
    }
}

impl LearnerSpec {
    pub fn lasso(penalty: Penalty) -> Self {
        LearnerSpec { penalty, ..Default::default() }
    }

    pub fn logistic(penalty: Penalty) -> Self {
        LearnerSpec { kind: LearnerKind::LogisticLasso, penalty, ..Default::default() }
    }

    pub fn quantile(cells: Vec<usize>) -> Self {
        LearnerSpec {
            kind: LearnerKind::EmpiricalQuantile,
            quantile_cells: cells,
            ..Default::default()
        }
    }

    pub fn oracle() -> Self {
        LearnerSpec { kind: LearnerKind::Oracle, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tol <= 0.0 {
            return Err(Error::invalid("tol must be positive"));
        }
        if let Penalty::Fixed(l) = self.penalty {
            if l < 0.0 {
                return Err(Error::invalid("fixed lambda must be >= 0"));
            }
        }
        if let Penalty::Cv(k) = self.penalty {
            if k < 2 {
                return Err(Error::invalid("cv folds must be >= 2"));
            }
        }
        if let Some(w) = self.memorize_weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid("memorize weight must lie in [0,1]"));
            }
        }
        Ok(())
    }
}

/// Which population quantity an oracle learner reproduces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleTarget {
    /// E[D_j | X] for coordinate j (PLP/APD first stage).
    EtaCoordinate(usize),
    /// E[Y_L | features] (features are X, or [D|X] for the APD model).
    GammaLower,
    /// E[Y_U - Y_L | features].
    GammaWidth,
    /// Pr(S = 1 | D = 0, X).
    Selection0,
    /// Pr(S = 1 | D = 1, X).
    Selection1,
    /// Conditional quantile of Y given D=1, S=1, X.
    QuantileTreated,
    /// E[Y | S = 1, D = 0, X].
    ControlMean,
}

/// A fitted first-stage model. Prediction is a pure function of the model
/// and the feature row.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Linear {
        coefficients: Vec<f64>,
        intercept: f64,
    },
    Logistic {
        coefficients: Vec<f64>,
        intercept: f64,
    },
    Quantile {
        cells: Vec<usize>,
        table: BTreeMap<Vec<i64>, Vec<f64>>,
    },
    Oracle {
        truth: Box<DgpTruth>,
        target: OracleTarget,
        /// Length of the D block when features are [D|X]; 0 when features
        /// are X alone.
        d_dim: usize,
    },
    Memorize {
        base: Box<FittedModel>,
        weight: f64,
        table: HashMap<u64, f64>,
    },
}

fn hash_row(x: &ArrayView1<f64>) -> u64 {
    let mut h = DefaultHasher::new();
    for v in x.iter() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

impl FittedModel {
    /// Point prediction at a feature row.
    pub fn predict(&self, x: &ArrayView1<f64>) -> f64 {
        match self {
            FittedModel::Linear { coefficients, intercept } => {
                intercept + dot_view(coefficients, x)
            }
            FittedModel::Logistic { coefficients, intercept } => {
                let lin = intercept + dot_view(coefficients, x);
                let p = 1.0 / (1.0 + (-lin).exp());
                p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
            }
            FittedModel::Quantile { .. } => f64::NAN,
            FittedModel::Oracle { truth, target, d_dim } => {
                oracle_predict(truth, *target, *d_dim, x)
            }
            FittedModel::Memorize { base, weight, table } => {
                let b = base.predict(x);
                match table.get(&hash_row(x)) {
                    Some(&resp) => weight * resp + (1.0 - weight) * b,
                    None => b,
                }
            }
        }
    }

    /// Quantile prediction at level `u` for the cell of `x`.
    pub fn predict_quantile(&self, u: f64, x: &ArrayView1<f64>) -> Result<f64> {
        match self {
            FittedModel::Quantile { cells, table } => {
                let key = cell_key(cells, x);
                let vals = table.get(&key).ok_or_else(|| {
                    Error::MissingCell(format!("{key:?}"))
                })?;
                Ok(interpolate_quantile(vals, u))
            }
            FittedModel::Oracle { truth, target: OracleTarget::QuantileTreated, .. } => {
                match truth.as_ref() {
                    DgpTruth::Lee(t) => Ok(t.quantile_treated(u, x)),
                    _ => Err(Error::Unsupported("oracle quantile needs a selection DGP".into())),
                }
            }
            _ => Err(Error::Unsupported("not a quantile model".into())),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        match self {
            FittedModel::Linear { coefficients, .. }
            | FittedModel::Logistic { coefficients, .. } => coefficients,
            _ => &[],
        }
    }

    pub fn intercept(&self) -> f64 {
        match self {
            FittedModel::Linear { intercept, .. } | FittedModel::Logistic { intercept, .. } => {
                *intercept
            }
            _ => f64::NAN,
        }
    }
}

fn dot_view(a: &[f64], x: &ArrayView1<f64>) -> f64 {
    a.iter().zip(x.iter()).map(|(c, v)| c * v).sum()
}

fn cell_key(cells: &[usize], x: &ArrayView1<f64>) -> Vec<i64> {
    cells.iter().map(|&c| x[c].round() as i64).collect()
}

/// Linear interpolation between order statistics; u outside [0,1] clamps to
/// the extremes.
fn interpolate_quantile(sorted: &[f64], u: f64) -> f64 {
    let m = sorted.len();
    debug_assert!(m >= 1);
    let t = (u.clamp(0.0, 1.0)) * (m - 1) as f64;
    let lo = t.floor() as usize;
    if lo + 1 >= m {
        return sorted[m - 1];
    }
    let frac = t - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

fn oracle_predict(truth: &DgpTruth, target: OracleTarget, d_dim: usize, x: &ArrayView1<f64>) -> f64 {
    match (truth, target) {
        (DgpTruth::Plp(t) | DgpTruth::Apd(t), OracleTarget::EtaCoordinate(_)) => {
            // Features are X; every D coordinate shares the index x' theta.
            x.iter().zip(&t.theta).map(|(v, th)| v * th).sum()
        }
        (DgpTruth::Plp(t) | DgpTruth::Apd(t), OracleTarget::GammaLower) => {
            let (d, xs) = x.split_at(ndarray::Axis(0), d_dim);
            let index: f64 = xs.iter().zip(&t.theta).map(|(v, th)| v * th).sum();
            let dy: f64 = d.iter().zip(&t.beta0).map(|(v, b)| v * b).sum();
            // E[Y_L | D, X]; without a D block this is E[Y_L | X] because
            // E[D | X] enters through beta0.
            if d_dim == 0 {
                index * (1.0 + t.beta0.iter().sum::<f64>()) - t.width / 2.0
            } else {
                dy + index - t.width / 2.0
            }
        }
        (DgpTruth::Plp(t) | DgpTruth::Apd(t), OracleTarget::GammaWidth) => t.width,
        (DgpTruth::Lee(t), OracleTarget::Selection0) => t.s0(x),
        (DgpTruth::Lee(t), OracleTarget::Selection1) => t.s1(x),
        (DgpTruth::Lee(t), OracleTarget::ControlMean) => t.location(x),
        _ => f64::NAN,
    }
}

/// Wrap the population nuisance of a synthetic DGP as a fitted model.
pub fn oracle_learner(truth: &DgpTruth, target: OracleTarget, d_dim: usize) -> FittedModel {
    FittedModel::Oracle { truth: Box::new(truth.clone()), target, d_dim }
}

fn check_design(x: &ArrayView2<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid("design and response lengths differ"));
    }
    if x.nrows() < 2 {
        return Err(Error::invalid("need at least two observations"));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite value in training data"));
    }
    Ok(())
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Residual standard deviation from a ridge pilot fit (penalty 1.0 on the
/// centered design), used by the plug-in lambda rule.
fn ridge_sigma(x: &ArrayView2<f64>, y: &[f64]) -> f64 {
    let n = x.nrows();
    let p = x.ncols();
    let nf = n as f64;
    let xm: Vec<f64> = (0..p).map(|j| x.column(j).sum() / nf).collect();
    let ym = y.iter().sum::<f64>() / nf;
    let lam = 1.0;
    let beta: Array1<f64> = if p <= n {
        let mut gram = Array2::<f64>::zeros((p, p));
        let mut xty = Array1::<f64>::zeros(p);
        for i in 0..n {
            for a in 0..p {
                let xa = x[[i, a]] - xm[a];
                xty[a] += xa * (y[i] - ym);
                for b in a..p {
                    gram[[a, b]] += xa * (x[[i, b]] - xm[b]);
                }
            }
        }
        for a in 0..p {
            for b in a..p {
                let v = gram[[a, b]] / nf;
                gram[[a, b]] = v;
                gram[[b, a]] = v;
            }
            gram[[a, a]] += lam;
            xty[a] /= nf;
        }
        match solve_spd(&gram.view(), &xty.view()) {
            Ok(b) => b,
            Err(_) => Array1::zeros(p),
        }
    } else {
        // Dual form: beta = X'(XX' + n lam I)^-1 y on centered data.
        let mut k = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for a in 0..p {
                    s += (x[[i, a]] - xm[a]) * (x[[j, a]] - xm[a]);
                }
                k[[i, j]] = s;
                k[[j, i]] = s;
            }
            k[[i, i]] += nf * lam;
        }
        let yc = Array1::from_iter(y.iter().map(|v| v - ym));
        match solve_spd(&k.view(), &yc.view()) {
            Ok(alpha) => {
                let mut beta = Array1::<f64>::zeros(p);
                for a in 0..p {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += (x[[i, a]] - xm[a]) * alpha[i];
                    }
                    beta[a] = s;
                }
                beta
            }
            Err(_) => Array1::zeros(p),
        }
    };
    let mut rss = 0.0;
    for i in 0..n {
        let mut pred = ym;
        for a in 0..p {
            pred += beta[a] * (x[[i, a]] - xm[a]);
        }
        let r = y[i] - pred;
        rss += r * r;
    }
    (rss / nf).sqrt().max(1e-8)
}

fn plugin_lambda(x: &ArrayView2<f64>, y: &[f64]) -> f64 {
    let n = x.nrows() as f64;
    let p = x.ncols() as f64;
    let sigma = ridge_sigma(x, y);
    sigma * (2.0 * (2.0 * p * n).ln() / n).sqrt()
}

/// Core coordinate-descent solver for the lasso objective
/// (1/2n) sum (y_i - b0 - x_i' b)^2 + lambda |b|_1 with optional
/// observation weights (used by the logistic IRLS loop). Returns
/// (intercept, slopes, sweeps used).
fn cd_lasso(
    x: &ArrayView2<f64>,
    y: &[f64],
    weights: Option<&[f64]>,
    lambda: f64,
    max_iter: usize,
    tol: f64,
    warm: Option<&[f64]>,
) -> Result<(f64, Vec<f64>, usize)> {
    let n = x.nrows();
    let p = x.ncols();
    let nf = n as f64;
    let unit = vec![1.0; n];
    let w = weights.unwrap_or(&unit);
    let wsum: f64 = w.iter().sum();

    let xm: Vec<f64> = (0..p)
        .map(|j| x.column(j).iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / wsum)
        .collect();
    let ym = y.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / wsum;
    // Weighted second moments of centered columns, in (1/n) scale.
    let cj: Vec<f64> = (0..p)
        .map(|j| {
            x.column(j)
                .iter()
                .zip(w)
                .map(|(v, wi)| wi * (v - xm[j]) * (v - xm[j]))
                .sum::<f64>()
                / nf
        })
        .collect();

    let mut beta = warm.map(|b| b.to_vec()).unwrap_or_else(|| vec![0.0; p]);
    // Residual against the centered fit.
    let mut r: Vec<f64> = (0..n)
        .map(|i| {
            let mut pred = 0.0;
            for j in 0..p {
                if beta[j] != 0.0 {
                    pred += beta[j] * (x[[i, j]] - xm[j]);
                }
            }
            (y[i] - ym) - pred
        })
        .collect();

    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            if cj[j] <= 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let mut rho = 0.0;
            for i in 0..n {
                rho += w[i] * (x[[i, j]] - xm[j]) * r[i];
            }
            rho = rho / nf + cj[j] * beta[j];
            let new = soft_threshold(rho, lambda) / cj[j];
            let delta = new - beta[j];
            if delta != 0.0 {
                for i in 0..n {
                    r[i] -= delta * (x[[i, j]] - xm[j]);
                }
                max_delta = max_delta.max(delta.abs() * cj[j].sqrt());
                beta[j] = new;
            }
        }
        if max_delta < tol {
            break;
        }
        if sweeps >= max_iter {
            return Err(Error::Convergence { iterations: sweeps, tol });
        }
    }
    let intercept = ym - beta.iter().zip(&xm).map(|(b, m)| b * m).sum::<f64>();
    Ok((intercept, beta, sweeps))
}

fn resolve_lambda(x: &ArrayView2<f64>, y: &[f64], spec: &LearnerSpec) -> Result<f64> {
    match spec.penalty {
        Penalty::Fixed(l) => Ok(l),
        Penalty::Plugin => Ok(plugin_lambda(x, y)),
        Penalty::Cv(k) => cv_lambda(x, y, k, spec),
    }
}

/// K-fold cross-validated lambda over a 20-point log grid below the
/// all-zero threshold. Folds are contiguous blocks, which is enough for
/// tuning and keeps the learner free of hidden random state.
fn cv_lambda(x: &ArrayView2<f64>, y: &[f64], k: usize, spec: &LearnerSpec) -> Result<f64> {
    let n = x.nrows();
    let p = x.ncols();
    if k < 2 || k > n {
        return Err(Error::invalid("cv folds out of range"));
    }
    let nf = n as f64;
    let xm: Vec<f64> = (0..p).map(|j| x.column(j).sum() / nf).collect();
    let ym = y.iter().sum::<f64>() / nf;
    let mut lmax: f64 = 0.0;
    for j in 0..p {
        let mut s = 0.0;
        for i in 0..n {
            s += (x[[i, j]] - xm[j]) * (y[i] - ym);
        }
        lmax = lmax.max((s / nf).abs());
    }
    if lmax <= 0.0 {
        return Ok(0.0);
    }
    let grid: Vec<f64> = (0..20).map(|t| lmax * (0.01f64).powf(t as f64 / 19.0)).collect();
    let fold_of: Vec<usize> = (0..n).map(|i| i * k / n).collect();
    let mut best = (f64::INFINITY, lmax);
    for &lam in grid.iter().rev() {
        let mut sse = 0.0;
        for fold in 0..k {
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
            let xt = select_rows(x, &train);
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let (b0, b, _) = cd_lasso(&xt.view(), &yt, None, lam, spec.max_iter, spec.tol, None)?;
            for &i in &test {
                let pred = b0 + (0..p).map(|j| b[j] * x[[i, j]]).sum::<f64>();
                let e = y[i] - pred;
                sse += e * e;
            }
        }
        if sse < best.0 {
            best = (sse, lam);
        }
    }
    Ok(best.1)
}

fn select_rows(x: &ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    let p = x.ncols();
    let mut out = Array2::<f64>::zeros((rows.len(), p));
    for (r, &i) in rows.iter().enumerate() {
        out.row_mut(r).assign(&x.row(i));
    }
    out
}

/// Penalized least squares by cyclic coordinate descent.
pub fn fit_lasso(x: &ArrayView2<f64>, y: &[f64], spec: &LearnerSpec) -> Result<FittedModel> {
    spec.validate()?;
    check_design(x, y)?;
    let lambda = resolve_lambda(x, y, spec)?;
    let (intercept, coefficients, _) =
        cd_lasso(x, y, None, lambda, spec.max_iter, spec.tol, None)?;
    let model = FittedModel::Linear { coefficients, intercept };
    Ok(maybe_memorize(model, spec, x, y))
}

/// Worst-case KKT residual of a lasso fit, for the convergence invariant
/// tests: at an optimum the absolute subgradient residual of every
/// coordinate is zero.
pub fn lasso_kkt_residual(x: &ArrayView2<f64>, y: &[f64], model: &FittedModel, lambda: f64) -> f64 {
    let (coefficients, intercept) = match model {
        FittedModel::Linear { coefficients, intercept } => (coefficients, *intercept),
        _ => return f64::NAN,
    };
    let n = x.nrows();
    let nf = n as f64;
    let mut worst: f64 = 0.0;
    for j in 0..x.ncols() {
        let mut grad = 0.0;
        for i in 0..n {
            let pred = intercept + dot_view(coefficients, &x.row(i));
            grad += x[[i, j]] * (y[i] - pred);
        }
        grad /= nf;
        let resid = if coefficients[j] == 0.0 {
            (grad.abs() - lambda).max(0.0)
        } else {
            (grad - lambda * coefficients[j].signum()).abs()
        };
        worst = worst.max(resid);
    }
    worst
}

/// Penalized logistic regression by IRLS with an inner weighted
/// coordinate-descent step.
pub fn fit_logistic_lasso(x: &ArrayView2<f64>, y: &[f64], spec: &LearnerSpec) -> Result<FittedModel> {
    spec.validate()?;
    check_design(x, y)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::invalid("logistic response must be 0/1"));
    }
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    if ybar == 0.0 || ybar == 1.0 {
        return Err(Error::invalid("logistic response has a single class"));
    }
    let lambda = match spec.penalty {
        Penalty::Fixed(l) => l,
        // Plug-in scale for a Bernoulli response.
        Penalty::Plugin => {
            let n = x.nrows() as f64;
            let p = x.ncols() as f64;
            (ybar * (1.0 - ybar)).sqrt() * (2.0 * (2.0 * p * n).ln() / n).sqrt()
        }
        Penalty::Cv(_) => {
            return Err(Error::Unsupported("cv tuning is for the linear lasso".into()))
        }
    };

    let n = x.nrows();
    let p = x.ncols();
    let mut beta = vec![0.0; p];
    let mut intercept = (ybar / (1.0 - ybar)).ln();
    let outer_max = 100;
    let mut outer = 0;
    loop {
        outer += 1;
        let mut w = vec![0.0; n];
        let mut z = vec![0.0; n];
        for i in 0..n {
            let lin = intercept + dot_view(&beta, &x.row(i));
            let prob = 1.0 / (1.0 + (-lin).exp());
            let wi = (prob * (1.0 - prob)).max(1e-6);
            w[i] = wi;
            z[i] = lin + (y[i] - prob) / wi;
        }
        let (b0, b, _) = cd_lasso(x, &z, Some(&w), lambda, spec.max_iter, spec.tol, Some(&beta))?;
        let change = (b0 - intercept)
            .abs()
            .max(b.iter().zip(&beta).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max));
        intercept = b0;
        beta = b;
        if change < spec.tol.max(1e-10) * 10.0 {
            break;
        }
        if outer >= outer_max {
            return Err(Error::Convergence { iterations: outer, tol: spec.tol });
        }
    }
    let model = FittedModel::Logistic { coefficients: beta, intercept };
    Ok(maybe_memorize(model, spec, x, y))
}

fn maybe_memorize(base: FittedModel, spec: &LearnerSpec, x: &ArrayView2<f64>, y: &[f64]) -> FittedModel {
    match spec.memorize_weight {
        Some(weight) if weight > 0.0 => {
            let mut table = HashMap::with_capacity(x.nrows());
            for i in 0..x.nrows() {
                table.insert(hash_row(&x.row(i)), y[i]);
            }
            FittedModel::Memorize { base: Box::new(base), weight, table }
        }
        _ => base,
    }
}

/// Cell-wise empirical quantiles: stores the sorted outcome values of every
/// cell spanned by the listed discrete covariates.
pub fn fit_conditional_quantile(
    x: &ArrayView2<f64>,
    y: &[f64],
    cells: &[usize],
    jitter: Option<(f64, u64)>,
) -> Result<FittedModel> {
    check_design(x, y)?;
    if cells.iter().any(|&c| c >= x.ncols()) {
        return Err(Error::invalid("quantile cell column out of range"));
    }
    let mut table: BTreeMap<Vec<i64>, Vec<f64>> = BTreeMap::new();
    match jitter {
        None => {
            for i in 0..x.nrows() {
                table.entry(cell_key(cells, &x.row(i))).or_default().push(y[i]);
            }
        }
        Some((sd, seed)) => {
            let mut rng = substream(seed, Stream::Jitter, 0);
            for i in 0..x.nrows() {
                let noise: f64 = rng.sample(StandardNormal);
                table.entry(cell_key(cells, &x.row(i))).or_default().push(y[i] + sd * noise);
            }
        }
    }
    for (key, vals) in table.iter_mut() {
        if vals.len() < 2 {
            return Err(Error::invalid(format!("quantile cell {key:?} has fewer than 2 points")));
        }
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    Ok(FittedModel::Quantile { cells: cells.to_vec(), table })
}


#[cfg(test)]
mod tuning_tests {
    use super::*;
    use ndarray::Array2;
    use rand::Rng;

    #[test]
    fn cv_penalty_recovers_a_sparse_signal() {
        let mut rng = crate::rng::substream(3, crate::rng::Stream::Data, 9);
        let n = 120;
        let p = 8;
        let mut x = Array2::<f64>::zeros((n, p));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            for j in 0..p {
                x[[i, j]] = rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            y.push(2.0 * x[[i, 0]] - 1.0 * x[[i, 1]] + 0.3 * noise);
        }
        let spec = LearnerSpec { penalty: Penalty::Cv(5), ..Default::default() };
        let model = fit_lasso(&x.view(), &y, &spec).unwrap();
        let coef = model.coefficients();
        assert!((coef[0] - 2.0).abs() < 0.2, "coef0 {}", coef[0]);
        assert!((coef[1] + 1.0).abs() < 0.2, "coef1 {}", coef[1]);
        for &c in &coef[2..] {
            assert!(c.abs() < 0.2, "noise coefficient {c}");
        }
    }

    #[test]
    fn quantile_jitter_is_deterministic_and_small() {
        let x = Array2::<f64>::zeros((6, 1));
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let cell = ndarray::array![0.0];
        let plain = fit_conditional_quantile(&x.view(), &y, &[0], None).unwrap();
        let a = fit_conditional_quantile(&x.view(), &y, &[0], Some((0.01, 4))).unwrap();
        let b = fit_conditional_quantile(&x.view(), &y, &[0], Some((0.01, 4))).unwrap();
        let qa = a.predict_quantile(0.5, &cell.view()).unwrap();
        let qb = b.predict_quantile(0.5, &cell.view()).unwrap();
        let qp = plain.predict_quantile(0.5, &cell.view()).unwrap();
        assert_eq!(qa, qb);
        assert_ne!(qa, qp);
        assert!((qa - qp).abs() < 0.1);
    }
}
