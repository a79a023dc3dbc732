//! Estimation, simulation and coverage pipelines behind the CLI (and the
//! Python bindings): everything here is a deterministic function of a
//! [`RunConfig`].

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    bootstrap_draws, pointwise_region, uniform_band, BootstrapRun, ConfidenceRegion, TargetSpec,
    WeightScheme,
};
use crate::config::{Command, RunConfig, Variant};
use crate::crossfit::{crossfit, crossfit_nosplit, LearnerSet};
use crate::dataset::{generate, Dataset, DgpSpec, DgpTruth, ModelKind};
use crate::error::{Error, Result};
use crate::estimators::{
    apd_naive_support, apd_support, direction_grid, lee_bounds, lee_bounds_plugin, naive_bounds_1d,
    plp_bounds_1d, support_unknown_sigma, BoundsEstimate, BoundsKind, LambdaMode,
    ProjectionBounds, SupportFunctionEstimate,
};
use crate::oracle::{analytic_lee_truth, analytic_plp_truth, oracle_plugin_estimator};
use crate::rng::{substream, Stream};
use crate::stats::mean;

// ---------------------------------------------------------------------------
// Output documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsDoc {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaDoc {
    pub seeds: Vec<u64>,
    pub learner_specs: LearnerSet,
}

/// The estimation result document (written as results.json).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsDoc {
    pub model: String,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub grid: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub bounds: BoundsDoc,
    pub meta: MetaDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointwiseDoc {
    pub lower: f64,
    pub upper: f64,
    pub critical_value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniformDoc {
    pub critical_value: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub excluded: Vec<usize>,
}

/// The confidence-region document (written as region.json).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionDoc {
    pub alpha: f64,
    pub level: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub flagged: usize,
    pub pointwise: Option<PointwiseDoc>,
    pub uniform: Option<UniformDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimRow {
    pub rep: usize,
    pub variant: String,
    pub bound: String,
    pub estimate: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub bound: String,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
}

/// The simulation summary document (written as summary.json).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub m: usize,
    pub failures: usize,
    pub variants: Vec<VariantSummary>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub rows: Vec<SimRow>,
    pub summary: SummaryDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub kind: String,
    pub coverage: f64,
    pub mc_se: f64,
}

/// The coverage document (written as coverage.json).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageDoc {
    pub m: usize,
    pub failures: usize,
    pub alpha: f64,
    pub entries: Vec<CoverageEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistBin {
    pub variant: String,
    pub bound: String,
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

// ---------------------------------------------------------------------------
// Estimate pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub results: ResultsDoc,
    pub region: RegionDoc,
}

/// Map a support-function bootstrap run over {+e1, -e1} into a
/// (lower, upper) run.
fn bounds_run_from_support(run: &BootstrapRun, plus: usize, minus: usize) -> BootstrapRun {
    let mut draws = Array2::<f64>::zeros((run.b, 2));
    for i in 0..run.b {
        draws[[i, 0]] = -run.draws[[i, minus]];
        draws[[i, 1]] = run.draws[[i, plus]];
    }
    BootstrapRun { draws, grid: Vec::new(), ..run.clone() }
}

fn axis_grid(d: usize) -> Vec<Vec<f64>> {
    let mut plus = vec![0.0; d];
    plus[0] = 1.0;
    let mut minus = vec![0.0; d];
    minus[0] = -1.0;
    vec![plus, minus]
}

/// Full estimation pipeline on a dataset: cross-fit, estimate the support
/// function and bounds, bootstrap, and assemble the two result documents.
pub fn run_estimate(cfg: &RunConfig, data: &Dataset, truth: Option<&DgpTruth>) -> Result<EstimateOutput> {
    data.validate_for(cfg.model)?;
    let n = data.n();
    let d = data.d_dim();
    let learners = &cfg.learners;
    let profile = crossfit(data, cfg.model, learners, cfg.k, cfg.seed, truth)?;
    let pb = ProjectionBounds::default();

    let (grid, sigma, bounds, run_bounds, band_input): (
        Vec<Vec<f64>>,
        Vec<f64>,
        BoundsEstimate,
        BootstrapRun,
        Option<(SupportFunctionEstimate, BootstrapRun)>,
    ) = match cfg.model {
        ModelKind::Plp => {
            if d == 1 {
                let grid = direction_grid(1, 2);
                let est = support_unknown_sigma(data, &profile, &grid, &pb)?;
                let bounds = plp_bounds_1d(data, &profile)?;
                let run = bootstrap_draws(
                    data,
                    &profile,
                    &TargetSpec::PlpBounds1d,
                    &grid,
                    cfg.b,
                    cfg.seed,
                    WeightScheme::Exp1,
                )?;
                (grid, est.values, bounds, run, None)
            } else {
                let grid = direction_grid(d, cfg.grid_size);
                let est = support_unknown_sigma(data, &profile, &grid, &pb)?;
                let run = bootstrap_draws(
                    data,
                    &profile,
                    &TargetSpec::SupportUnknown { bounds: pb },
                    &grid,
                    cfg.b,
                    cfg.seed,
                    WeightScheme::Exp1,
                )?;
                let ax = axis_grid(d);
                let est_ax = support_unknown_sigma(data, &profile, &ax, &pb)?;
                let bounds = BoundsEstimate {
                    lower: -est_ax.values[1],
                    upper: est_ax.values[0],
                    kind: BoundsKind::Plp1d,
                    influence_lower: est_ax.centered_influence(1).iter().map(|v| -v).collect(),
                    influence_upper: est_ax.centered_influence(0),
                };
                let run_ax = bootstrap_draws(
                    data,
                    &profile,
                    &TargetSpec::SupportUnknown { bounds: pb },
                    &ax,
                    cfg.b,
                    cfg.seed,
                    WeightScheme::Exp1,
                )?;
                let run_bounds = bounds_run_from_support(&run_ax, 0, 1);
                (grid, est.values.clone(), bounds, run_bounds, Some((est, run)))
            }
        }
        ModelKind::Apd => {
            let lam = LambdaMode::SampleCovariance;
            let grid =
                if d == 1 { direction_grid(1, 2) } else { direction_grid(d, cfg.grid_size) };
            let est = apd_support(data, &profile, &grid, &lam)?;
            let run = bootstrap_draws(
                data,
                &profile,
                &TargetSpec::ApdSupport { lambda: lam.clone() },
                &grid,
                cfg.b,
                cfg.seed,
                WeightScheme::Exp1,
            )?;
            let ax = axis_grid(d);
            let est_ax = apd_support(data, &profile, &ax, &lam)?;
            let bounds = BoundsEstimate {
                lower: -est_ax.values[1],
                upper: est_ax.values[0],
                kind: BoundsKind::Plp1d,
                influence_lower: est_ax.centered_influence(1).iter().map(|v| -v).collect(),
                influence_upper: est_ax.centered_influence(0),
            };
            let run_ax = bootstrap_draws(
                data,
                &profile,
                &TargetSpec::ApdSupport { lambda: lam },
                &ax,
                cfg.b,
                cfg.seed,
                WeightScheme::Exp1,
            )?;
            let run_bounds = bounds_run_from_support(&run_ax, 0, 1);
            let band = (d >= 2).then(|| (est.clone(), run));
            (grid, est.values, bounds, run_bounds, band)
        }
        ModelKind::Lee => {
            let grid = direction_grid(1, 2);
            let bounds = lee_bounds(data, &profile)?;
            let sigma = vec![bounds.upper, -bounds.lower];
            let run = bootstrap_draws(
                data,
                &profile,
                &TargetSpec::LeeBounds,
                &grid,
                cfg.b,
                cfg.seed,
                WeightScheme::Exp1,
            )?;
            (grid, sigma, bounds, run, None)
        }
    };

    let pw = pointwise_region(&bounds, &run_bounds, cfg.alpha)?;
    let uniform = match &band_input {
        Some((est, run)) => {
            let band = uniform_band(est, run, cfg.alpha)?;
            Some(UniformDoc {
                critical_value: band.critical_value,
                lower: band.lower,
                upper: band.upper,
                excluded: band.excluded,
            })
        }
        None => None,
    };

    let results = ResultsDoc {
        model: cfg.model.to_string(),
        n,
        k: cfg.k,
        grid,
        sigma,
        bounds: BoundsDoc { lower: bounds.lower, upper: bounds.upper },
        meta: MetaDoc { seeds: vec![cfg.seed], learner_specs: cfg.learners.clone() },
    };
    let region = RegionDoc {
        alpha: cfg.alpha,
        level: 1.0 - cfg.alpha,
        b: cfg.b,
        seed: cfg.seed,
        flagged: run_bounds.flagged,
        pointwise: Some(PointwiseDoc {
            lower: pw.lower[0],
            upper: pw.upper[0],
            critical_value: pw.critical_value,
        }),
        uniform,
    };
    Ok(EstimateOutput { results, region })
}

// ---------------------------------------------------------------------------
// Simulation pipeline
// ---------------------------------------------------------------------------

/// Derive the DGP seed of a replication from the master seed.
fn replication_seed(seed: u64, rep: usize) -> u64 {
    substream(seed, Stream::Replication, rep as u64).random()
}

fn variant_bounds(
    variant: Variant,
    cfg: &RunConfig,
    data: &Dataset,
    truth: &DgpTruth,
    rep_seed: u64,
) -> Result<(f64, f64)> {
    match cfg.model {
        ModelKind::Plp => {
            if data.d_dim() != 1 {
                return Err(Error::invalid("simulation bounds need a scalar endogenous variable"));
            }
            match variant {
                Variant::OrthogonalCrossfit => {
                    let profile =
                        crossfit(data, cfg.model, &cfg.learners, cfg.k, rep_seed, Some(truth))?;
                    let b = plp_bounds_1d(data, &profile)?;
                    Ok((b.lower, b.upper))
                }
                Variant::OrthogonalNosplit => {
                    let profile = crossfit_nosplit(data, cfg.model, &cfg.learners, Some(truth))?;
                    let b = plp_bounds_1d(data, &profile)?;
                    Ok((b.lower, b.upper))
                }
                Variant::Naive => {
                    let profile =
                        crossfit(data, cfg.model, &cfg.learners, cfg.k, rep_seed, Some(truth))?;
                    let b = naive_bounds_1d(data, &profile)?;
                    Ok((b.lower, b.upper))
                }
                Variant::Oracle => {
                    let t = match truth {
                        DgpTruth::Plp(t) | DgpTruth::Apd(t) => t,
                        _ => unreachable!(),
                    };
                    let mut sigma = Array2::<f64>::zeros((1, 1));
                    sigma[[0, 0]] = t.sigma_v * t.sigma_v;
                    let upper = oracle_plugin_estimator(data, &[1.0], t, &sigma)?;
                    let lower = -oracle_plugin_estimator(data, &[-1.0], t, &sigma)?;
                    Ok((lower, upper))
                }
            }
        }
        ModelKind::Apd => {
            let d = data.d_dim();
            let ax = axis_grid(d);
            let est = match variant {
                Variant::OrthogonalCrossfit => {
                    let profile =
                        crossfit(data, cfg.model, &cfg.learners, cfg.k, rep_seed, Some(truth))?;
                    apd_support(data, &profile, &ax, &LambdaMode::SampleCovariance)?
                }
                Variant::OrthogonalNosplit => {
                    let profile = crossfit_nosplit(data, cfg.model, &cfg.learners, Some(truth))?;
                    apd_support(data, &profile, &ax, &LambdaMode::SampleCovariance)?
                }
                Variant::Naive => {
                    let profile =
                        crossfit(data, cfg.model, &cfg.learners, cfg.k, rep_seed, Some(truth))?;
                    apd_naive_support(data, &profile, &ax, &LambdaMode::SampleCovariance)?
                }
                Variant::Oracle => {
                    let t = match truth {
                        DgpTruth::Plp(t) | DgpTruth::Apd(t) => t,
                        _ => unreachable!(),
                    };
                    let profile =
                        crossfit(data, cfg.model, &LearnerSet::oracle(), cfg.k, rep_seed, Some(truth))?;
                    let mut lam = Array2::<f64>::zeros((d, d));
                    for j in 0..d {
                        lam[[j, j]] = t.sigma_v * t.sigma_v;
                    }
                    apd_support(data, &profile, &ax, &LambdaMode::Known(lam))?
                }
            };
            Ok((-est.values[1], est.values[0]))
        }
        ModelKind::Lee => match variant {
            Variant::OrthogonalCrossfit => {
                let profile =
                    crossfit(data, cfg.model, &cfg.learners, cfg.k, rep_seed, Some(truth))?;
                let b = lee_bounds(data, &profile)?;
                Ok((b.lower, b.upper))
            }
            Variant::OrthogonalNosplit => {
                let profile = crossfit_nosplit(data, cfg.model, &cfg.learners, Some(truth))?;
                let b = lee_bounds(data, &profile)?;
                Ok((b.lower, b.upper))
            }
            Variant::Naive => {
                let profile =
                    crossfit(data, cfg.model, &cfg.learners, cfg.k, rep_seed, Some(truth))?;
                let b = lee_bounds_plugin(data, &profile)?;
                Ok((b.lower, b.upper))
            }
            Variant::Oracle => {
                let profile =
                    crossfit(data, cfg.model, &LearnerSet::oracle(), cfg.k, rep_seed, Some(truth))?;
                let b = lee_bounds(data, &profile)?;
                Ok((b.lower, b.upper))
            }
        },
    }
}

fn true_bounds(cfg: &RunConfig, dgp: &DgpSpec, truth: &DgpTruth) -> Result<(f64, f64)> {
    match truth {
        DgpTruth::Plp(_) | DgpTruth::Apd(_) => {
            let t = analytic_plp_truth(dgp)?;
            Ok(t.beta_interval())
        }
        DgpTruth::Lee(t) => {
            let _ = cfg;
            let pop = analytic_lee_truth(t);
            Ok((pop.beta_l, pop.beta_u))
        }
    }
}

/// Monte Carlo study: for each replication draw a fresh dataset and compute
/// every requested estimator variant. Failures are tolerated up to 5% of
/// replications.
pub fn run_simulation(cfg: &RunConfig) -> Result<SimOutput> {
    cfg.validate(Command::Simulate)?;
    let dgp = cfg.dgp.as_ref().unwrap();
    let results: Vec<Result<Vec<SimRow>>> = (0..cfg.m)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = replication_seed(cfg.seed, rep);
            let spec = DgpSpec { seed: rep_seed, ..dgp.clone() };
            let (data, truth) = generate(&spec)?;
            let (tl, tu) = true_bounds(cfg, &spec, &truth)?;
            let mut rows = Vec::with_capacity(cfg.estimator_variants.len() * 2);
            for &variant in &cfg.estimator_variants {
                let (lo, up) = variant_bounds(variant, cfg, &data, &truth, rep_seed)?;
                rows.push(SimRow {
                    rep,
                    variant: variant.name().into(),
                    bound: "lower".into(),
                    estimate: lo,
                    truth: tl,
                });
                rows.push(SimRow {
                    rep,
                    variant: variant.name().into(),
                    bound: "upper".into(),
                    estimate: up,
                    truth: tu,
                });
            }
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(mut v) => rows.append(&mut v),
            Err(e) => {
                eprintln!("replication failed: {e}");
                failures += 1;
            }
        }
    }
    if failures * 20 > cfg.m {
        return Err(Error::DegenerateDesign(format!(
            "{failures} of {} replications failed",
            cfg.m
        )));
    }

    let mut summary = Vec::new();
    for &variant in &cfg.estimator_variants {
        for bound in ["lower", "upper"] {
            let errs: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == variant.name() && r.bound == bound)
                .map(|r| r.estimate - r.truth)
                .collect();
            if errs.is_empty() {
                continue;
            }
            let bias = mean(&errs);
            let sd = crate::stats::sd(&errs);
            let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
            summary.push(VariantSummary {
                variant: variant.name().into(),
                bound: bound.into(),
                bias,
                sd,
                rmse,
            });
        }
    }
    Ok(SimOutput { rows, summary: SummaryDoc { m: cfg.m, failures, variants: summary } })
}

/// Histogram bins of the estimate distribution per (variant, bound), the
/// plot data for the finite-sample figures.
pub fn histogram(rows: &[SimRow], bins: usize) -> Vec<HistBin> {
    let mut out = Vec::new();
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.variant.clone(), r.bound.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    for (variant, bound) in keys {
        let vals: Vec<f64> = rows
            .iter()
            .filter(|r| r.variant == variant && r.bound == bound)
            .map(|r| r.estimate)
            .collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let width = ((hi - lo) / bins as f64).max(1e-12);
        let mut counts = vec![0usize; bins];
        for v in &vals {
            let idx = (((v - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        for (i, &count) in counts.iter().enumerate() {
            out.push(HistBin {
                variant: variant.clone(),
                bound: bound.clone(),
                left: lo + i as f64 * width,
                right: lo + (i + 1) as f64 * width,
                count,
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Coverage pipeline
// ---------------------------------------------------------------------------

enum CoverageCase {
    Pointwise { covered: bool },
    Uniform { covered: bool },
}

fn coverage_replication(cfg: &RunConfig, rep: usize) -> Result<CoverageCase> {
    let dgp = cfg.dgp.as_ref().unwrap();
    let rep_seed = replication_seed(cfg.seed, rep);
    let spec = DgpSpec { seed: rep_seed, ..dgp.clone() };
    let (data, truth) = generate(&spec)?;
    let profile = crossfit(&data, cfg.model, &cfg.learners, cfg.k, rep_seed, Some(&truth))?;
    match cfg.model {
        ModelKind::Plp if data.d_dim() >= 2 => {
            let grid = direction_grid(data.d_dim(), cfg.grid_size);
            let pb = ProjectionBounds::default();
            let est = support_unknown_sigma(&data, &profile, &grid, &pb)?;
            let run = bootstrap_draws(
                &data,
                &profile,
                &TargetSpec::SupportUnknown { bounds: pb },
                &grid,
                cfg.b,
                rep_seed,
                WeightScheme::Exp1,
            )?;
            let band: ConfidenceRegion = uniform_band(&est, &run, cfg.alpha)?;
            let pop = analytic_plp_truth(&spec)?;
            let covered = grid.iter().enumerate().all(|(j, q)| {
                let t = pop.sigma_q(q);
                band.lower[j] <= t && t <= band.upper[j]
            });
            Ok(CoverageCase::Uniform { covered })
        }
        ModelKind::Plp => {
            let est = plp_bounds_1d(&data, &profile)?;
            let run = bootstrap_draws(
                &data,
                &profile,
                &TargetSpec::PlpBounds1d,
                &[],
                cfg.b,
                rep_seed,
                WeightScheme::Exp1,
            )?;
            let region = pointwise_region(&est, &run, cfg.alpha)?;
            let pop = analytic_plp_truth(&spec)?;
            let (tl, tu) = pop.beta_interval();
            Ok(CoverageCase::Pointwise {
                covered: region.lower[0] <= tl && region.upper[0] >= tu,
            })
        }
        ModelKind::Lee => {
            let est = lee_bounds(&data, &profile)?;
            let run = bootstrap_draws(
                &data,
                &profile,
                &TargetSpec::LeeBounds,
                &[],
                cfg.b,
                rep_seed,
                WeightScheme::Exp1,
            )?;
            let region = pointwise_region(&est, &run, cfg.alpha)?;
            let t = match &truth {
                DgpTruth::Lee(t) => t,
                _ => unreachable!(),
            };
            let pop = analytic_lee_truth(t);
            Ok(CoverageCase::Pointwise {
                covered: region.lower[0] <= pop.beta_l && region.upper[0] >= pop.beta_u,
            })
        }
        ModelKind::Apd => Err(Error::Unsupported(
            "coverage study is defined for the plp and lee models".into(),
        )),
    }
}

/// Monte Carlo coverage study of the confidence regions.
pub fn run_coverage(cfg: &RunConfig) -> Result<CoverageDoc> {
    cfg.validate(Command::Coverage)?;
    let results: Vec<Result<CoverageCase>> =
        (0..cfg.m).into_par_iter().map(|rep| coverage_replication(cfg, rep)).collect();

    let mut failures = 0usize;
    let mut pw: Vec<bool> = Vec::new();
    let mut un: Vec<bool> = Vec::new();
    for r in results {
        match r {
            Ok(CoverageCase::Pointwise { covered }) => pw.push(covered),
            Ok(CoverageCase::Uniform { covered }) => un.push(covered),
            Err(e) => {
                eprintln!("coverage replication failed: {e}");
                failures += 1;
            }
        }
    }
    if failures * 20 > cfg.m {
        return Err(Error::DegenerateDesign(format!(
            "{failures} of {} coverage replications failed",
            cfg.m
        )));
    }
    let mut entries = Vec::new();
    let mut push = |kind: &str, flags: &[bool]| {
        if flags.is_empty() {
            return;
        }
        let c = flags.iter().filter(|&&b| b).count() as f64 / flags.len() as f64;
        entries.push(CoverageEntry {
            kind: kind.into(),
            coverage: c,
            mc_se: (c * (1.0 - c) / flags.len() as f64).sqrt(),
        });
    };
    push("pointwise_set", &pw);
    push("uniform_band", &un);
    Ok(CoverageDoc { m: cfg.m, failures, alpha: cfg.alpha, entries })
}


#[cfg(test)]
mod extra_tests {
    use super::*;
    use crate::learners::{LearnerSpec, Penalty};

    #[test]
    fn point_identified_oracle_variant_is_unbiased() {
        let cfg = RunConfig {
            model: ModelKind::Plp,
            dgp: Some(DgpSpec {
                model: ModelKind::Plp,
                n: 150,
                p: 4,
                sparsity: 2,
                beta0: vec![1.0],
                interval_width: 0.0,
                noise_sd: 1.0,
                residual_sd: 1.0,
                seed: 1,
            }),
            data_path: None,
            learners: LearnerSet {
                eta: LearnerSpec::lasso(Penalty::Fixed(0.05)),
                reduced_form: LearnerSpec::lasso(Penalty::Fixed(0.05)),
                ..LearnerSet::default()
            },
            k: 2,
            grid_size: 8,
            b: 100,
            alpha: 0.05,
            m: 50,
            estimator_variants: vec![
                Variant::OrthogonalCrossfit,
                Variant::OrthogonalNosplit,
                Variant::Naive,
                Variant::Oracle,
            ],
            seed: 77,
            output_dir: "out".into(),
        };
        let out = run_simulation(&cfg).unwrap();
        assert_eq!(out.rows.len(), 50 * 4 * 2);
        for bound in ["lower", "upper"] {
            let s = out
                .summary
                .variants
                .iter()
                .find(|v| v.variant == "oracle" && v.bound == bound)
                .unwrap();
            let se = s.sd / (cfg.m as f64).sqrt();
            assert!(s.bias.abs() <= 3.0 * se, "{bound}: oracle bias {} (se {se})", s.bias);
        }
    }

    #[test]
    fn coverage_decreases_with_alpha_on_the_same_seeds() {
        let base = RunConfig {
            model: ModelKind::Plp,
            dgp: Some(DgpSpec {
                model: ModelKind::Plp,
                n: 250,
                p: 4,
                sparsity: 2,
                beta0: vec![0.0],
                interval_width: 1.0,
                noise_sd: 0.5,
                residual_sd: 1.0,
                seed: 1,
            }),
            data_path: None,
            learners: LearnerSet {
                eta: LearnerSpec::lasso(Penalty::Fixed(0.03)),
                reduced_form: LearnerSpec::lasso(Penalty::Fixed(0.03)),
                ..LearnerSet::default()
            },
            k: 2,
            grid_size: 8,
            b: 100,
            alpha: 0.05,
            m: 60,
            estimator_variants: vec![Variant::OrthogonalCrossfit],
            seed: 313,
            output_dir: "out".into(),
        };
        let tight = run_coverage(&base).unwrap();
        let loose = run_coverage(&RunConfig { alpha: 0.5, ..base }).unwrap();
        let c_tight = tight.entries[0].coverage;
        let c_loose = loose.entries[0].coverage;
        assert!(
            c_loose < c_tight,
            "alpha = 0.5 coverage {c_loose} should be below alpha = 0.05 coverage {c_tight}"
        );
    }
}

#[cfg(test)]
mod estimate_d2_tests {
    use super::*;
    use crate::learners::{LearnerSpec, Penalty};

    #[test]
    fn two_dimensional_estimate_produces_a_band_and_axis_bounds() {
        let dgp = DgpSpec {
            model: ModelKind::Plp,
            n: 400,
            p: 4,
            sparsity: 2,
            beta0: vec![1.0, -0.5],
            interval_width: 1.0,
            noise_sd: 1.0,
            residual_sd: 1.0,
            seed: 12,
        };
        let (data, _) = generate(&dgp).unwrap();
        let cfg = RunConfig {
            model: ModelKind::Plp,
            dgp: None,
            data_path: Some("unused".into()),
            learners: LearnerSet {
                eta: LearnerSpec::lasso(Penalty::Fixed(0.05)),
                reduced_form: LearnerSpec::lasso(Penalty::Fixed(0.05)),
                ..LearnerSet::default()
            },
            k: 2,
            grid_size: 12,
            b: 120,
            alpha: 0.05,
            m: 1,
            estimator_variants: vec![Variant::OrthogonalCrossfit],
            seed: 2,
            output_dir: String::new(),
        };
        let out = run_estimate(&cfg, &data, None).unwrap();
        assert_eq!(out.results.grid.len(), 12);
        assert!(out.results.bounds.lower <= out.results.bounds.upper);
        let band = out.region.uniform.expect("band for d >= 2");
        assert_eq!(band.lower.len(), 12);
        for j in 0..12 {
            assert!(band.lower[j] <= out.results.sigma[j]);
            assert!(band.upper[j] >= out.results.sigma[j]);
        }
        let pw = out.region.pointwise.unwrap();
        assert!(pw.lower <= out.results.bounds.lower);
    }
}
