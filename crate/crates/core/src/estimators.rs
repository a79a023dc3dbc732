//! Second-stage estimators: sample averages of the moment functions over a
//! direction grid, assembled into support-function values and bounds.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::crossfit::{NuisanceProfile, Records};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, matvec, sym_eigenvalues};
use crate::moments::{apd_moment, lee_ate_moments, lee_lower_moment, lee_upper_moment, plp_moment, ApdEval, LeeEval, MomentValue};
use crate::rng::{substream, Stream};

/// Norm bounds on admissible projection vectors when the scale matrix is
/// estimated.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for ProjectionBounds {
    fn default() -> Self {
        ProjectionBounds { lambda_min: 1e-4, lambda_max: 1e4 }
    }
}

/// A direction's projection vector p = (Sigma^-1)' q together with the
/// admissibility bounds it was checked against.
#[derive(Debug, Clone)]
pub struct ProjectionVector {
    pub p: Vec<f64>,
    pub source_q: Option<Vec<f64>>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ProjectionVector {
    pub fn norm(&self) -> f64 {
        self.p.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Support-function values over a grid of unit directions.
#[derive(Debug, Clone)]
pub struct SupportFunctionEstimate {
    pub grid: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Estimated scale matrix when it was not supplied.
    pub sigma_hat: Option<Array2<f64>>,
    /// Raw per-observation moment contributions, one column per direction.
    pub influence: Array2<f64>,
    pub n: usize,
}

impl SupportFunctionEstimate {
    /// Centered influence column for a grid index.
    pub fn centered_influence(&self, j: usize) -> Vec<f64> {
        let mean = self.values[j];
        self.influence.column(j).iter().map(|v| v - mean).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsKind {
    Plp1d,
    LeeOutcome,
    LeeAte,
}

/// Interval estimate with centered per-observation influence contributions.
#[derive(Debug, Clone)]
pub struct BoundsEstimate {
    pub lower: f64,
    pub upper: f64,
    pub kind: BoundsKind,
    pub influence_lower: Vec<f64>,
    pub influence_upper: Vec<f64>,
}

/// Deterministic grid of unit directions. One dimension gives {+1, -1};
/// two dimensions give `m` equally spaced angles; higher dimensions use a
/// low-discrepancy (Halton-normal) sequence on the sphere.
pub fn direction_grid(d: usize, m: usize) -> Vec<Vec<f64>> {
    assert!(d >= 1);
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..m.max(2))
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / m.max(2) as f64;
                vec![angle.cos(), angle.sin()]
            })
            .collect(),
        _ => {
            const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];
            let mut grid = Vec::with_capacity(m);
            let mut k = 0u64;
            while grid.len() < m.max(2) {
                k += 1;
                let mut v: Vec<f64> = (0..d)
                    .map(|j| {
                        let u = halton(k + 20, PRIMES[j % PRIMES.len()]);
                        crate::stats::normal_quantile(u.clamp(1e-12, 1.0 - 1e-12))
                    })
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm < 1e-9 {
                    continue;
                }
                for x in v.iter_mut() {
                    *x /= norm;
                }
                grid.push(v);
            }
            grid
        }
    }
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

fn check_spd(sigma: &ArrayView2<f64>) -> Result<()> {
    let n = sigma.nrows();
    for i in 0..n {
        for j in 0..i {
            if (sigma[[i, j]] - sigma[[j, i]]).abs() > 1e-10 * (1.0 + sigma[[i, i]].abs()) {
                return Err(Error::invalid("scale matrix is not symmetric"));
            }
        }
    }
    let eig = sym_eigenvalues(sigma);
    if let Some(bad) = eig.iter().find(|&&l| l <= 0.0) {
        return Err(Error::invalid(format!("scale matrix has non-positive eigenvalue {bad:e}")));
    }
    Ok(())
}

/// Admissibility of the projection vector under the stated norm bounds.
pub fn check_projection(
    p: Vec<f64>,
    q: &[f64],
    bounds: &ProjectionBounds,
) -> Result<ProjectionVector> {
    let pv = ProjectionVector {
        p,
        source_q: Some(q.to_vec()),
        lambda_min: bounds.lambda_min,
        lambda_max: bounds.lambda_max,
    };
    let norm = pv.norm();
    if norm < 0.5 * bounds.lambda_min || norm > 2.0 * bounds.lambda_max {
        return Err(Error::ProjectionSet(format!(
            "|p| = {norm:e} outside [{:e}, {:e}]",
            0.5 * bounds.lambda_min,
            2.0 * bounds.lambda_max
        )));
    }
    Ok(pv)
}

/// Which moment the support-function average uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Route {
    /// Bias-corrected moment g.
    Orthogonal,
    /// Plug-in moment m (no correction term).
    PlugIn,
}

fn plp_support_core(
    data: &Dataset,
    profile: &NuisanceProfile,
    sigma: Array2<f64>,
    sigma_estimated: bool,
    grid: &[Vec<f64>],
    bounds: &ProjectionBounds,
    route: Route,
) -> Result<SupportFunctionEstimate> {
    let rows = profile.plp()?;
    let n = data.n();
    if rows.len() != n {
        return Err(Error::IncompleteProfile("profile size does not match data".into()));
    }
    let inv = inverse_spd(&sigma.view())?;
    let mut values = Vec::with_capacity(grid.len());
    let mut influence = Array2::<f64>::zeros((n, grid.len()));
    for (jq, q) in grid.iter().enumerate() {
        let p = matvec(&inv.view(), q);
        let p = if sigma_estimated {
            check_projection(p, q, bounds)?.p
        } else {
            p
        };
        let mut sum = 0.0;
        for i in 0..n {
            let obs = data.row(i);
            let mv = plp_moment(&obs, &p, &rows[i])?;
            let v = match route {
                Route::Orthogonal => mv.g,
                Route::PlugIn => mv.m,
            };
            influence[[i, jq]] = v;
            sum += v;
        }
        values.push(sum / n as f64);
    }
    Ok(SupportFunctionEstimate {
        grid: grid.to_vec(),
        values,
        sigma_hat: sigma_estimated.then_some(sigma),
        influence,
        n,
    })
}

/// Residual scale matrix (1/N) sum V V' from the cross-fitted first stage.
pub fn residual_sigma_hat(data: &Dataset, profile: &NuisanceProfile) -> Result<Array2<f64>> {
    let rows = profile.plp()?;
    let n = data.n();
    let dd = data.d_dim();
    let mut sigma = Array2::<f64>::zeros((dd, dd));
    for i in 0..n {
        for a in 0..dd {
            let va = data.d()[[i, a]] - rows[i].eta[a];
            for b in a..dd {
                let vb = data.d()[[i, b]] - rows[i].eta[b];
                sigma[[a, b]] += va * vb;
            }
        }
    }
    for a in 0..dd {
        for b in a..dd {
            let v = sigma[[a, b]] / n as f64;
            sigma[[a, b]] = v;
            sigma[[b, a]] = v;
        }
    }
    Ok(sigma)
}

/// Support-function estimator with a known scale matrix.
pub fn support_known_sigma(
    data: &Dataset,
    profile: &NuisanceProfile,
    sigma: &Array2<f64>,
    grid: &[Vec<f64>],
) -> Result<SupportFunctionEstimate> {
    check_spd(&sigma.view())?;
    plp_support_core(data, profile, sigma.clone(), false, grid, &ProjectionBounds::default(), Route::Orthogonal)
}

/// Support-function estimator with the scale matrix estimated from the
/// cross-fitted residuals.
pub fn support_unknown_sigma(
    data: &Dataset,
    profile: &NuisanceProfile,
    grid: &[Vec<f64>],
    bounds: &ProjectionBounds,
) -> Result<SupportFunctionEstimate> {
    let sigma = residual_sigma_hat(data, profile)?;
    let eig = sym_eigenvalues(&sigma.view());
    for l in &eig {
        if *l < 0.5 * bounds.lambda_min || *l > 2.0 * bounds.lambda_max {
            return Err(Error::ProjectionSet(format!(
                "estimated scale eigenvalue {l:e} outside [{:e}, {:e}]",
                0.5 * bounds.lambda_min,
                2.0 * bounds.lambda_max
            )));
        }
    }
    plp_support_core(data, profile, sigma, true, grid, bounds, Route::Orthogonal)
}

/// Plug-in support function (no correction term) with a known scale matrix.
/// This is the exact support function of the sample-level set, so it is
/// sublinear and has nonnegative widths by construction.
pub fn plug_in_support(
    data: &Dataset,
    profile: &NuisanceProfile,
    sigma: &Array2<f64>,
    grid: &[Vec<f64>],
) -> Result<SupportFunctionEstimate> {
    check_spd(&sigma.view())?;
    plp_support_core(data, profile, sigma.clone(), false, grid, &ProjectionBounds::default(), Route::PlugIn)
}

/// Plug-in support function with the estimated scale matrix: the naive
/// estimator without the bias-correction term.
pub fn naive_support(
    data: &Dataset,
    profile: &NuisanceProfile,
    grid: &[Vec<f64>],
    bounds: &ProjectionBounds,
) -> Result<SupportFunctionEstimate> {
    let sigma = residual_sigma_hat(data, profile)?;
    plp_support_core(data, profile, sigma, true, grid, bounds, Route::PlugIn)
}

fn bounds_from_two_point_grid(est: &SupportFunctionEstimate, kind: BoundsKind) -> BoundsEstimate {
    // Grid order is [+1, -1]: sigma(+1) = upper, sigma(-1) = -lower.
    let upper = est.values[0];
    let lower = -est.values[1];
    let inf_u = est.centered_influence(0);
    let inf_l: Vec<f64> = est.centered_influence(1).iter().map(|v| -v).collect();
    BoundsEstimate { lower, upper, kind, influence_lower: inf_l, influence_upper: inf_u }
}

/// One-dimensional interval bounds of the partially linear predictor:
/// the support function evaluated at q = +1 and q = -1 with the estimated
/// residual scale, which reproduces the two generator-based least-squares
/// steps exactly.
pub fn plp_bounds_1d(data: &Dataset, profile: &NuisanceProfile) -> Result<BoundsEstimate> {
    if data.d_dim() != 1 {
        return Err(Error::invalid("one-dimensional bounds need a scalar endogenous variable"));
    }
    let grid = direction_grid(1, 2);
    let est = support_unknown_sigma(data, profile, &grid, &ProjectionBounds::default())?;
    Ok(bounds_from_two_point_grid(&est, BoundsKind::Plp1d))
}

/// Naive (no correction term) one-dimensional bounds.
pub fn naive_bounds_1d(data: &Dataset, profile: &NuisanceProfile) -> Result<BoundsEstimate> {
    if data.d_dim() != 1 {
        return Err(Error::invalid("one-dimensional bounds need a scalar endogenous variable"));
    }
    let grid = direction_grid(1, 2);
    let est = naive_support(data, profile, &grid, &ProjectionBounds::default())?;
    Ok(bounds_from_two_point_grid(&est, BoundsKind::Plp1d))
}

/// How the average-partial-derivative estimator obtains the residual
/// covariance that maps residuals into density scores.
#[derive(Debug, Clone)]
pub enum LambdaMode {
    /// Sample covariance of the cross-fitted residuals (the Gaussian
    /// first-stage route).
    SampleCovariance,
    /// Known covariance (the oracle route).
    Known(Array2<f64>),
}

/// Support-function estimator for the average partial derivative: scores
/// from Gaussian residuals, sign-gated reduced form, and the full
/// orthogonal moment averaged per direction.
pub fn apd_support(
    data: &Dataset,
    profile: &NuisanceProfile,
    grid: &[Vec<f64>],
    lambda: &LambdaMode,
) -> Result<SupportFunctionEstimate> {
    apd_support_route(data, profile, grid, lambda, Route::Orthogonal)
}

/// Plug-in (no correction term) average-partial-derivative support values.
pub fn apd_naive_support(
    data: &Dataset,
    profile: &NuisanceProfile,
    grid: &[Vec<f64>],
    lambda: &LambdaMode,
) -> Result<SupportFunctionEstimate> {
    apd_support_route(data, profile, grid, lambda, Route::PlugIn)
}

fn apd_support_route(
    data: &Dataset,
    profile: &NuisanceProfile,
    grid: &[Vec<f64>],
    lambda: &LambdaMode,
    route: Route,
) -> Result<SupportFunctionEstimate> {
    let rows = profile.apd()?;
    let n = data.n();
    let dd = data.d_dim();
    if rows.len() != n {
        return Err(Error::IncompleteProfile("profile size does not match data".into()));
    }
    // Residuals and their covariance.
    let mut vhat = Array2::<f64>::zeros((n, dd));
    for i in 0..n {
        for j in 0..dd {
            vhat[[i, j]] = data.d()[[i, j]] - rows[i].mhat[j];
        }
    }
    let lam = match lambda {
        LambdaMode::Known(l) => l.clone(),
        LambdaMode::SampleCovariance => {
            let mut l = Array2::<f64>::zeros((dd, dd));
            for i in 0..n {
                for a in 0..dd {
                    for b in a..dd {
                        l[[a, b]] += vhat[[i, a]] * vhat[[i, b]];
                    }
                }
            }
            for a in 0..dd {
                for b in a..dd {
                    let v = l[[a, b]] / n as f64;
                    l[[a, b]] = v;
                    l[[b, a]] = v;
                }
            }
            l
        }
    };
    let lam_inv = inverse_spd(&lam.view())
        .map_err(|_| Error::DegenerateDesign("residual covariance is singular".into()))?;

    // Density scores eta_i = Lambda^-1 V_i.
    let mut eta = Array2::<f64>::zeros((n, dd));
    for i in 0..n {
        let row: Vec<f64> = vhat.row(i).to_vec();
        let e = matvec(&lam_inv.view(), &row);
        for j in 0..dd {
            eta[[i, j]] = e[j];
        }
    }

    let mut values = Vec::with_capacity(grid.len());
    let mut influence = Array2::<f64>::zeros((n, grid.len()));
    for (jq, q) in grid.iter().enumerate() {
        // Scale of the projected score z_q = q' Lambda^-1 V under the
        // Gaussian first stage.
        let linv_q = matvec(&lam_inv.view(), q);
        let z_scale: f64 = q.iter().zip(&linv_q).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
        // The sign-gated reduced form has a kink along {z_q = 0}; its
        // almost-everywhere D-gradient inside the moment misses the flux
        // through that boundary, which for Gaussian scores equals
        // gamma_{U-L} * z_scale / sqrt(2 pi) on average. Adding it per
        // observation restores the interval-width component of the
        // support function; it vanishes under point identification.
        let sheet = z_scale / (2.0 * std::f64::consts::PI).sqrt();
        let mut sum = 0.0;
        for i in 0..n {
            let obs = data.row(i);
            let eta_i: Vec<f64> = eta.row(i).to_vec();
            let ev = ApdEval::from_record(&rows[i], &eta_i);
            let mv: MomentValue = apd_moment(&obs, q, &ev)?;
            let v = match route {
                Route::Orthogonal => mv.g + rows[i].gamma_ul * sheet,
                Route::PlugIn => mv.m,
            };
            influence[[i, jq]] = v;
            sum += v;
        }
        values.push(sum / n as f64);
    }
    Ok(SupportFunctionEstimate { grid: grid.to_vec(), values, sigma_hat: Some(lam), influence, n })
}

fn lee_bounds_core(
    data: &Dataset,
    profile: &NuisanceProfile,
    route: Route,
) -> Result<BoundsEstimate> {
    let rows = profile.lee()?;
    let n = data.n();
    let pr = profile.pr_d0_s1;
    let mut low = Vec::with_capacity(n);
    let mut up = Vec::with_capacity(n);
    for i in 0..n {
        let obs = data.row(i);
        let ev = LeeEval::from_record(&rows[i]);
        let l = lee_lower_moment(&obs, &ev, pr, i)?;
        let u = lee_upper_moment(&obs, &ev, pr, i)?;
        match route {
            Route::Orthogonal => {
                low.push(l.g);
                up.push(u.g);
            }
            Route::PlugIn => {
                low.push(l.m);
                up.push(u.m);
            }
        }
    }
    let lower = crate::stats::mean(&low);
    let upper = crate::stats::mean(&up);
    Ok(BoundsEstimate {
        lower,
        upper,
        kind: BoundsKind::LeeOutcome,
        influence_lower: low.iter().map(|v| v - lower).collect(),
        influence_upper: up.iter().map(|v| v - upper).collect(),
    })
}

/// Orthogonal bounds on the treated outcome mean of the always-selected
/// subpopulation.
pub fn lee_bounds(data: &Dataset, profile: &NuisanceProfile) -> Result<BoundsEstimate> {
    lee_bounds_core(data, profile, Route::Orthogonal)
}

/// Plug-in (trimmed-mean) bounds without correction terms. The upper value
/// dominates the lower one on every dataset because both trim the same
/// empirical distribution at the same share.
pub fn lee_bounds_plugin(data: &Dataset, profile: &NuisanceProfile) -> Result<BoundsEstimate> {
    lee_bounds_core(data, profile, Route::PlugIn)
}

/// Orthogonal bounds on the average treatment effect for the
/// always-selected subpopulation.
pub fn lee_ate(data: &Dataset, profile: &NuisanceProfile) -> Result<BoundsEstimate> {
    let rows = profile.lee()?;
    let n = data.n();
    let pr = profile.pr_d0_s1;
    let mut low = Vec::with_capacity(n);
    let mut up = Vec::with_capacity(n);
    for i in 0..n {
        let obs = data.row(i);
        let ev = LeeEval::from_record(&rows[i]);
        let (l, u) = lee_ate_moments(&obs, &ev, pr, i)?;
        low.push(l);
        up.push(u);
    }
    let lower = crate::stats::mean(&low);
    let upper = crate::stats::mean(&up);
    Ok(BoundsEstimate {
        lower,
        upper,
        kind: BoundsKind::LeeAte,
        influence_lower: low.iter().map(|v| v - lower).collect(),
        influence_upper: up.iter().map(|v| v - upper).collect(),
    })
}

/// Numerical directional gradient of the mean orthogonal moment in the
/// projection vector, a diagnostic stand-in for the scale-estimation term
/// of the influence function.
pub fn numerical_gradient(
    data: &Dataset,
    profile: &NuisanceProfile,
    p: &[f64],
    eps: f64,
) -> Result<Vec<f64>> {
    let rows = profile.plp()?;
    let n = data.n();
    let mut grad = Vec::with_capacity(p.len());
    for j in 0..p.len() {
        let mut plus = p.to_vec();
        let mut minus = p.to_vec();
        plus[j] += eps;
        minus[j] -= eps;
        let mut sum_plus = 0.0;
        let mut sum_minus = 0.0;
        for i in 0..n {
            let obs = data.row(i);
            sum_plus += plp_moment(&obs, &plus, &rows[i])?.g;
            sum_minus += plp_moment(&obs, &minus, &rows[i])?.g;
        }
        grad.push((sum_plus - sum_minus) / (2.0 * eps * n as f64));
    }
    Ok(grad)
}

/// Add a small deterministic Gaussian perturbation to the first-stage
/// means, the smoothing device for discretely distributed residuals.
pub fn jitter_profile(profile: &NuisanceProfile, sd: f64, seed: u64) -> NuisanceProfile {
    let mut out = profile.clone();
    let mut rng = substream(seed, Stream::Jitter, 1);
    match &mut out.records {
        Records::Plp(rows) => {
            for r in rows.iter_mut() {
                for e in r.eta.iter_mut() {
                    let noise: f64 = rng.sample(StandardNormal);
                    *e += sd * noise;
                }
            }
        }
        Records::Apd(rows) => {
            for r in rows.iter_mut() {
                for e in r.mhat.iter_mut() {
                    let noise: f64 = rng.sample(StandardNormal);
                    *e += sd * noise;
                }
            }
        }
        Records::Lee(_) => {}
    }
    out
}
