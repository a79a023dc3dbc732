//! Independent references: closed-form population values for the synthetic
//! DGPs, a brute-force vertex-enumeration support function, and the
//! infeasible estimator that plugs in exact population nuisances.
//!
//! Nothing here feeds the estimators; these functions exist so tests and
//! acceptance runs have something external to compare against.

use ndarray::Array2;

use crate::crossfit::PlpRecord;
use crate::dataset::{Dataset, DgpSpec, LeeTruth, ModelKind, PlpTruth};
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, matvec};
use crate::moments::plp_moment;
use crate::stats::{normal_pdf, normal_quantile};

/// Closed-form population quantities of an interval-outcome DGP with
/// Gaussian first-stage residuals.
#[derive(Debug, Clone)]
pub struct PopulationTruth {
    pub model: ModelKind,
    pub beta0: Vec<f64>,
    /// True scale matrix (residual covariance).
    pub sigma: Array2<f64>,
    pub width: f64,
}

impl PopulationTruth {
    /// sigma(q, B) = q' beta0 + (width/2) E |q' Sigma^-1 V| for Gaussian V.
    pub fn sigma_q(&self, q: &[f64]) -> f64 {
        let inv = inverse_spd(&self.sigma.view()).expect("truth scale is SPD");
        let p = matvec(&inv.view(), q);
        // Var(q' Sigma^-1 V) = q' Sigma^-1 q.
        let var: f64 = q.iter().zip(&p).map(|(a, b)| a * b).sum();
        let qb: f64 = q.iter().zip(&self.beta0).map(|(a, b)| a * b).sum();
        qb + self.width / 2.0 * (2.0 / std::f64::consts::PI).sqrt() * var.sqrt()
    }

    /// Interval [beta_L, beta_U] of a one-dimensional model.
    pub fn beta_interval(&self) -> (f64, f64) {
        assert_eq!(self.beta0.len(), 1);
        (-self.sigma_q(&[-1.0]), self.sigma_q(&[1.0]))
    }

    /// Population width beta_U - beta_L of a one-dimensional model.
    pub fn interval_width(&self) -> f64 {
        let (l, u) = self.beta_interval();
        u - l
    }
}

/// Population truth for the Gaussian interval-outcome designs (the
/// partially linear predictor and the average partial derivative share it).
pub fn analytic_plp_truth(spec: &DgpSpec) -> Result<PopulationTruth> {
    spec.validate()?;
    if spec.model == ModelKind::Lee {
        return Err(Error::Unsupported("closed form needs an interval-outcome model".into()));
    }
    let dd = spec.beta0.len();
    let mut sigma = Array2::<f64>::zeros((dd, dd));
    for j in 0..dd {
        sigma[[j, j]] = spec.residual_sd * spec.residual_sd;
    }
    Ok(PopulationTruth {
        model: spec.model,
        beta0: spec.beta0.clone(),
        sigma,
        width: spec.interval_width,
    })
}

/// Population bounds of the selection DGP, computed cell by cell over the
/// discrete covariate support.
#[derive(Debug, Clone, Copy)]
pub struct LeePopulationTruth {
    pub beta_l: f64,
    pub beta_u: f64,
    pub theta_l: f64,
    pub theta_u: f64,
}

pub fn analytic_lee_truth(truth: &LeeTruth) -> LeePopulationTruth {
    // x1 in {0,1} each w.p. 1/2; x2 in {0,1,2} each w.p. 1/3.
    let mut num_u = 0.0;
    let mut num_l = 0.0;
    let mut den = 0.0;
    let mut mean_loc = 0.0;
    for x1 in 0..2 {
        for x2 in 0..3 {
            let pr = 0.5 / 3.0;
            let idx0 = truth.sel0[0] + truth.sel0[1] * x1 as f64 + truth.sel0[2] * x2 as f64;
            let s0 = crate::stats::normal_cdf(idx0);
            let s1 = crate::stats::normal_cdf(idx0.max(idx0 + truth.shift));
            let p0 = (s0 / s1).min(1.0);
            let loc = truth.loc[0] * x1 as f64 + truth.loc[1] * x2 as f64;
            // Mean of the top/bottom p0 tail of the outcome distribution.
            let (tm_u, tm_l) = if p0 >= 1.0 - 1e-12 {
                (loc + truth.tau, loc + truth.tau)
            } else {
                let z_hi = normal_quantile(1.0 - p0);
                let z_lo = normal_quantile(p0);
                (
                    loc + truth.tau + truth.outcome_sd * normal_pdf(z_hi) / p0,
                    loc + truth.tau - truth.outcome_sd * normal_pdf(z_lo) / p0,
                )
            };
            num_u += pr * s0 * tm_u;
            num_l += pr * s0 * tm_l;
            den += pr * s0;
            mean_loc += pr * loc;
        }
    }
    let beta_u = num_u / den;
    let beta_l = num_l / den;
    LeePopulationTruth { beta_l, beta_u, theta_l: beta_l - mean_loc, theta_u: beta_u - mean_loc }
}

/// Result of the exhaustive sharpness check.
#[derive(Debug, Clone, Copy)]
pub struct BruteForceSupport {
    /// Maximum of (1/n) sum z_i y_i over all 2^n endpoint selections.
    pub exhaustive_max: f64,
    /// Value of the sign rule (1/n) sum z_i * (y_l or y_u by sign of z_i).
    pub sign_rule: f64,
}

/// Enumerate every vertex of the interval box and maximize the projected
/// average; also evaluate the endpoint sign rule directly. The two must
/// agree exactly. Capped at n = 18 (2^18 evaluations).
pub fn brute_force_sample_support(
    data: &Dataset,
    q: &[f64],
    truth: &PlpTruth,
    sigma: &Array2<f64>,
) -> Result<BruteForceSupport> {
    let n = data.n();
    if n > 18 {
        return Err(Error::Unsupported(format!("exhaustive search capped at n = 18, got {n}")));
    }
    let inv = inverse_spd(&sigma.view())?;
    let p = matvec(&inv.view(), q);
    let mut z = Vec::with_capacity(n);
    let mut yl = Vec::with_capacity(n);
    let mut yu = Vec::with_capacity(n);
    for i in 0..n {
        let x = data.x().row(i);
        let index: f64 = x.iter().zip(&truth.theta).map(|(v, th)| v * th).sum();
        let mut zi = 0.0;
        for j in 0..p.len() {
            zi += p[j] * (data.d()[[i, j]] - index);
        }
        z.push(zi);
        yl.push(data.y_lower()[i].ok_or_else(|| Error::invalid("missing lower bound"))?);
        yu.push(data.y_upper()[i].ok_or_else(|| Error::invalid("missing upper bound"))?);
    }

    let mut best = f64::NEG_INFINITY;
    for mask in 0u32..(1u32 << n) {
        let mut sum = 0.0;
        for i in 0..n {
            let y = if (mask >> i) & 1 == 1 { yu[i] } else { yl[i] };
            sum += z[i] * y;
        }
        let value = sum / n as f64;
        if value > best {
            best = value;
        }
    }

    // Independent transcription of the endpoint rule (lower on z <= 0).
    let mut sum = 0.0;
    for i in 0..n {
        let y = if z[i] <= 0.0 { yl[i] } else { yu[i] };
        sum += z[i] * y;
    }
    let sign_rule = sum / n as f64;
    Ok(BruteForceSupport { exhaustive_max: best, sign_rule })
}

/// Exact-nuisance records for an interval-outcome dataset.
pub fn oracle_plp_records(data: &Dataset, truth: &PlpTruth) -> Vec<PlpRecord> {
    let beta_sum: f64 = truth.beta0.iter().sum();
    (0..data.n())
        .map(|i| {
            let x = data.x().row(i);
            let index: f64 = x.iter().zip(&truth.theta).map(|(v, th)| v * th).sum();
            PlpRecord {
                eta: vec![index; data.d_dim()],
                gamma_l: index * (1.0 + beta_sum) - truth.width / 2.0,
                gamma_ul: truth.width,
            }
        })
        .collect()
}

/// The orthogonal support-function estimator evaluated at the exact
/// population nuisances and a known scale matrix: the infeasible benchmark
/// that cross-fitting with the oracle learner must reproduce.
pub fn oracle_plugin_estimator(
    data: &Dataset,
    q: &[f64],
    truth: &PlpTruth,
    sigma: &Array2<f64>,
) -> Result<f64> {
    let records = oracle_plp_records(data, truth);
    let inv = inverse_spd(&sigma.view())?;
    let p = matvec(&inv.view(), q);
    let mut sum = 0.0;
    for i in 0..data.n() {
        let obs = data.row(i);
        sum += plp_moment(&obs, &p, &records[i])?.g;
    }
    Ok(sum / data.n() as f64)
}
