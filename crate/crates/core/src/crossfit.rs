//! K-fold cross-fitting: every observation's nuisance record is produced by
//! learners trained on the folds that do not contain it.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::dataset::{kfold_partition, Dataset, DgpTruth, FoldPartition, ModelKind};
use crate::error::{Error, Result};
use crate::learners::{
    fit_conditional_quantile, fit_lasso, fit_logistic_lasso, oracle_learner, FittedModel,
    LearnerKind, LearnerSpec, OracleTarget, PROB_CLAMP,
};

/// Quantile levels are clamped into [LEVEL_FLOOR, 1 - LEVEL_FLOOR] before a
/// threshold is looked up, so a trimming share of exactly zero or one stays
/// finite.
pub const LEVEL_FLOOR: f64 = 1e-6;

/// The learners used for each nuisance component.
fn default_selection() -> LearnerSpec {
    LearnerSpec::logistic(crate::learners::Penalty::Plugin)
}
fn default_quantile() -> LearnerSpec {
    LearnerSpec::quantile(vec![0, 1])
}
fn default_propensity() -> PropensityMode {
    PropensityMode::Known(0.5)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnerSet {
    /// First stage E[D|X] (one model per coordinate of D).
    #[serde(default)]
    pub eta: LearnerSpec,
    /// Interval reduced forms E[Y_L|.] and E[Y_U - Y_L|.].
    #[serde(default)]
    pub reduced_form: LearnerSpec,
    /// Selection probabilities s(d, X) in the sample-selection model.
    #[serde(default = "default_selection")]
    pub selection: LearnerSpec,
    /// Conditional quantile of the treated, selected outcome.
    #[serde(default = "default_quantile")]
    pub quantile: LearnerSpec,
    /// Control-arm conditional mean E[Y|S=1, D=0, X].
    #[serde(default)]
    pub control_mean: LearnerSpec,
    /// Treatment propensity Pr(D=1|X).
    #[serde(default = "default_propensity")]
    pub propensity: PropensityMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityMode {
    /// Randomized designs: the propensity is known.
    Known(f64),
    /// Estimate by logistic lasso. No extra correction term is added for
    /// this estimation step.
    Estimate,
}

impl Default for LearnerSet {
    fn default() -> Self {
        LearnerSet {
            eta: LearnerSpec::default(),
            reduced_form: LearnerSpec::default(),
            selection: LearnerSpec::logistic(crate::learners::Penalty::Plugin),
            quantile: LearnerSpec::quantile(vec![0, 1]),
            control_mean: LearnerSpec::default(),
            propensity: PropensityMode::Known(0.5),
        }
    }
}

impl LearnerSet {
    /// Every component backed by the population oracle.
    pub fn oracle() -> Self {
        LearnerSet {
            eta: LearnerSpec::oracle(),
            reduced_form: LearnerSpec::oracle(),
            selection: LearnerSpec {
                kind: LearnerKind::Oracle,
                ..LearnerSpec::logistic(crate::learners::Penalty::Plugin)
            },
            quantile: LearnerSpec { kind: LearnerKind::Oracle, ..LearnerSpec::quantile(vec![0, 1]) },
            control_mean: LearnerSpec::oracle(),
            propensity: PropensityMode::Known(0.5),
        }
    }
}

/// Cross-fitted nuisance values for the partially linear predictor:
/// first-stage means per D coordinate and the interval reduced forms
/// (functions of X alone under the symmetric-width design).
#[derive(Debug, Clone, PartialEq)]
pub struct PlpRecord {
    pub eta: Vec<f64>,
    pub gamma_l: f64,
    pub gamma_ul: f64,
}

impl PlpRecord {
    /// Reduced form of the selected interval endpoint; constant in the
    /// projection under the symmetric-width design.
    pub fn gamma(&self) -> f64 {
        self.gamma_l + 0.5 * self.gamma_ul
    }
}

/// Cross-fitted nuisance values for the average partial derivative:
/// first-stage means, reduced forms in (D, X), and their D-gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ApdRecord {
    pub mhat: Vec<f64>,
    pub gamma_l: f64,
    pub gamma_ul: f64,
    pub dgamma_l: Vec<f64>,
    pub dgamma_ul: Vec<f64>,
}

/// Cross-fitted nuisance values for the sample-selection bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LeeRecord {
    pub s0: f64,
    pub s1: f64,
    /// Trimming share s0/s1, capped at one.
    pub p0: f64,
    /// Clamped quantile levels actually used for the thresholds.
    pub u_up: f64,
    pub u_lo: f64,
    /// Outcome thresholds: the upper bound keeps Y >= t_up, the lower
    /// keeps Y <= t_lo.
    pub t_up: f64,
    pub t_lo: f64,
    /// Pr(D=1|X).
    pub prop: f64,
    /// E[Y | S=1, D=0, X], used by the treatment-effect moments.
    pub control_mean: f64,
}

#[derive(Debug, Clone)]
pub enum Records {
    Plp(Vec<PlpRecord>),
    Apd(Vec<ApdRecord>),
    Lee(Vec<LeeRecord>),
}

/// Out-of-fold nuisance values for every observation plus the fold map and
/// the learner provenance.
#[derive(Debug, Clone)]
pub struct NuisanceProfile {
    pub model: ModelKind,
    pub fold_of: FoldPartition,
    pub records: Records,
    /// Sample frequency of (D=0, S=1); the scale of the selection-model
    /// moments. NaN outside the selection model.
    pub pr_d0_s1: f64,
    pub provenance: LearnerSet,
}

impl NuisanceProfile {
    pub fn n(&self) -> usize {
        match &self.records {
            Records::Plp(r) => r.len(),
            Records::Apd(r) => r.len(),
            Records::Lee(r) => r.len(),
        }
    }

    pub fn plp(&self) -> Result<&[PlpRecord]> {
        match &self.records {
            Records::Plp(r) => Ok(r),
            _ => Err(Error::IncompleteProfile("expected plp records".into())),
        }
    }

    pub fn apd(&self) -> Result<&[ApdRecord]> {
        match &self.records {
            Records::Apd(r) => Ok(r),
            _ => Err(Error::IncompleteProfile("expected apd records".into())),
        }
    }

    pub fn lee(&self) -> Result<&[LeeRecord]> {
        match &self.records {
            Records::Lee(r) => Ok(r),
            _ => Err(Error::IncompleteProfile("expected lee records".into())),
        }
    }

    /// One row per observation, one column per nuisance component.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match &self.records {
            Records::Plp(rows) => {
                let dd = rows.first().map(|r| r.eta.len()).unwrap_or(0);
                let mut header = vec!["fold".to_string()];
                for j in 0..dd {
                    header.push(format!("eta_{}", j + 1));
                }
                header.push("gamma_l".into());
                header.push("gamma_ul".into());
                w.write_record(&header)?;
                for (i, r) in rows.iter().enumerate() {
                    let mut rec = vec![self.fold_of.assignments[i].to_string()];
                    rec.extend(r.eta.iter().map(|v| v.to_string()));
                    rec.push(r.gamma_l.to_string());
                    rec.push(r.gamma_ul.to_string());
                    w.write_record(&rec)?;
                }
            }
            Records::Apd(rows) => {
                let dd = rows.first().map(|r| r.mhat.len()).unwrap_or(0);
                let mut header = vec!["fold".to_string()];
                for j in 0..dd {
                    header.push(format!("mhat_{}", j + 1));
                }
                header.push("gamma_l".into());
                header.push("gamma_ul".into());
                for j in 0..dd {
                    header.push(format!("dgamma_l_{}", j + 1));
                }
                for j in 0..dd {
                    header.push(format!("dgamma_ul_{}", j + 1));
                }
                w.write_record(&header)?;
                for (i, r) in rows.iter().enumerate() {
                    let mut rec = vec![self.fold_of.assignments[i].to_string()];
                    rec.extend(r.mhat.iter().map(|v| v.to_string()));
                    rec.push(r.gamma_l.to_string());
                    rec.push(r.gamma_ul.to_string());
                    rec.extend(r.dgamma_l.iter().map(|v| v.to_string()));
                    rec.extend(r.dgamma_ul.iter().map(|v| v.to_string()));
                    w.write_record(&rec)?;
                }
            }
            Records::Lee(rows) => {
                w.write_record([
                    "fold", "s0", "s1", "p0", "u_up", "u_lo", "t_up", "t_lo", "prop",
                    "control_mean",
                ])?;
                for (i, r) in rows.iter().enumerate() {
                    w.write_record(&[
                        self.fold_of.assignments[i].to_string(),
                        r.s0.to_string(),
                        r.s1.to_string(),
                        r.p0.to_string(),
                        r.u_up.to_string(),
                        r.u_lo.to_string(),
                        r.t_up.to_string(),
                        r.t_lo.to_string(),
                        r.prop.to_string(),
                        r.control_mean.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// How training data relate to evaluation data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Honest K-fold cross-fitting.
    KFold(usize),
    /// Fit every learner on the full sample and evaluate on the same
    /// sample. This is the overfit variant (and the negative control for
    /// the leakage probe).
    NoSplit,
}

/// Cross-fit all nuisance learners for `model` and assemble per-observation
/// records. `truth` is required whenever a learner spec asks for the
/// oracle.
pub fn crossfit(
    data: &Dataset,
    model: ModelKind,
    learners: &LearnerSet,
    k: usize,
    seed: u64,
    truth: Option<&DgpTruth>,
) -> Result<NuisanceProfile> {
    crossfit_mode(data, model, learners, FitMode::KFold(k), seed, truth)
}

/// Fit nuisances on the full sample and evaluate them on the same sample.
pub fn crossfit_nosplit(
    data: &Dataset,
    model: ModelKind,
    learners: &LearnerSet,
    truth: Option<&DgpTruth>,
) -> Result<NuisanceProfile> {
    crossfit_mode(data, model, learners, FitMode::NoSplit, 0, truth)
}

pub fn crossfit_mode(
    data: &Dataset,
    model: ModelKind,
    learners: &LearnerSet,
    mode: FitMode,
    seed: u64,
    truth: Option<&DgpTruth>,
) -> Result<NuisanceProfile> {
    data.validate_for(model)?;
    let n = data.n();
    let fold_of = match mode {
        FitMode::KFold(k) => kfold_partition(n, k, seed)?,
        FitMode::NoSplit => FoldPartition::nosplit(n),
    };

    let mut records = match model {
        ModelKind::Plp => {
            Records::Plp(vec![PlpRecord { eta: vec![], gamma_l: f64::NAN, gamma_ul: f64::NAN }; n])
        }
        ModelKind::Apd => Records::Apd(vec![
            ApdRecord {
                mhat: vec![],
                gamma_l: f64::NAN,
                gamma_ul: f64::NAN,
                dgamma_l: vec![],
                dgamma_ul: vec![],
            };
            n
        ]),
        ModelKind::Lee => Records::Lee(vec![
            LeeRecord {
                s0: f64::NAN,
                s1: f64::NAN,
                p0: f64::NAN,
                u_up: f64::NAN,
                u_lo: f64::NAN,
                t_up: f64::NAN,
                t_lo: f64::NAN,
                prop: f64::NAN,
                control_mean: f64::NAN,
            };
            n
        ]),
    };

    for fold in 1..=fold_of.k {
        let eval: Vec<usize> = fold_of.members(fold);
        let train: Vec<usize> = match mode {
            FitMode::KFold(_) => (0..n).filter(|i| fold_of.assignments[*i] != fold).collect(),
            FitMode::NoSplit => (0..n).collect(),
        };
        let annotate = |e: Error| Error::Fold { fold, source: Box::new(e) };
        match (&mut records, model) {
            (Records::Plp(rows), ModelKind::Plp) => {
                fit_fold_plp(data, learners, truth, &train, &eval, rows).map_err(annotate)?;
            }
            (Records::Apd(rows), ModelKind::Apd) => {
                fit_fold_apd(data, learners, truth, &train, &eval, rows).map_err(annotate)?;
            }
            (Records::Lee(rows), ModelKind::Lee) => {
                fit_fold_lee(data, learners, truth, &train, &eval, rows, seed, fold)
                    .map_err(annotate)?;
            }
            _ => unreachable!(),
        }
    }

    let pr_d0_s1 = match model {
        ModelKind::Lee => {
            let s = data.s().expect("validated");
            (0..n).map(|i| (1.0 - data.d()[[i, 0]]) * f64::from(s[i])).sum::<f64>() / n as f64
        }
        _ => f64::NAN,
    };

    Ok(NuisanceProfile { model, fold_of, records, pr_d0_s1, provenance: learners.clone() })
}

fn rows_matrix(data: &Dataset, rows: &[usize]) -> Array2<f64> {
    let p = data.p();
    let mut out = Array2::<f64>::zeros((rows.len(), p));
    for (r, &i) in rows.iter().enumerate() {
        out.row_mut(r).assign(&data.x().row(i));
    }
    out
}

fn need_truth<'a>(truth: Option<&'a DgpTruth>) -> Result<&'a DgpTruth> {
    truth.ok_or_else(|| {
        Error::Unsupported("oracle learner is only available for generated datasets".into())
    })
}

/// Fit a mean-regression component: lasso unless the spec asks for the
/// oracle.
fn fit_mean_component(
    spec: &LearnerSpec,
    truth: Option<&DgpTruth>,
    target: OracleTarget,
    d_dim: usize,
    x: &Array2<f64>,
    y: &[f64],
) -> Result<FittedModel> {
    match spec.kind {
        LearnerKind::Oracle => Ok(oracle_learner(need_truth(truth)?, target, d_dim)),
        LearnerKind::Lasso => fit_lasso(&x.view(), y, spec),
        LearnerKind::LogisticLasso => fit_logistic_lasso(&x.view(), y, spec),
        LearnerKind::EmpiricalQuantile => {
            Err(Error::invalid("quantile learner cannot fit a mean component"))
        }
    }
}

fn fit_fold_plp(
    data: &Dataset,
    learners: &LearnerSet,
    truth: Option<&DgpTruth>,
    train: &[usize],
    eval: &[usize],
    rows: &mut [PlpRecord],
) -> Result<()> {
    let dd = data.d_dim();
    let xt = rows_matrix(data, train);
    let mut eta_models = Vec::with_capacity(dd);
    for j in 0..dd {
        let y: Vec<f64> = train.iter().map(|&i| data.d()[[i, j]]).collect();
        eta_models.push(fit_mean_component(
            &learners.eta,
            truth,
            OracleTarget::EtaCoordinate(j),
            0,
            &xt,
            &y,
        )?);
    }
    let yl: Vec<f64> = train.iter().map(|&i| data.y_lower()[i].unwrap()).collect();
    let width: Vec<f64> =
        train.iter().map(|&i| data.y_upper()[i].unwrap() - data.y_lower()[i].unwrap()).collect();
    let gl_model =
        fit_mean_component(&learners.reduced_form, truth, OracleTarget::GammaLower, 0, &xt, &yl)?;
    let gul_model =
        fit_mean_component(&learners.reduced_form, truth, OracleTarget::GammaWidth, 0, &xt, &width)?;

    for &i in eval {
        let x = data.x().row(i);
        rows[i] = PlpRecord {
            eta: eta_models.iter().map(|m| m.predict(&x)).collect(),
            gamma_l: gl_model.predict(&x),
            gamma_ul: gul_model.predict(&x),
        };
    }
    Ok(())
}

fn concat_features(d: &ArrayView1<f64>, x: &ArrayView1<f64>) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(d.len() + x.len());
    for (j, v) in d.iter().enumerate() {
        out[j] = *v;
    }
    for (j, v) in x.iter().enumerate() {
        out[d.len() + j] = *v;
    }
    out
}

fn fit_fold_apd(
    data: &Dataset,
    learners: &LearnerSet,
    truth: Option<&DgpTruth>,
    train: &[usize],
    eval: &[usize],
    rows: &mut [ApdRecord],
) -> Result<()> {
    let dd = data.d_dim();
    let xt = rows_matrix(data, train);
    let mut m_models = Vec::with_capacity(dd);
    for j in 0..dd {
        let y: Vec<f64> = train.iter().map(|&i| data.d()[[i, j]]).collect();
        m_models.push(fit_mean_component(
            &learners.eta,
            truth,
            OracleTarget::EtaCoordinate(j),
            0,
            &xt,
            &y,
        )?);
    }
    // Reduced forms are functions of (D, X).
    let p = data.p();
    let mut dx = Array2::<f64>::zeros((train.len(), dd + p));
    for (r, &i) in train.iter().enumerate() {
        for j in 0..dd {
            dx[[r, j]] = data.d()[[i, j]];
        }
        for j in 0..p {
            dx[[r, dd + j]] = data.x()[[i, j]];
        }
    }
    let yl: Vec<f64> = train.iter().map(|&i| data.y_lower()[i].unwrap()).collect();
    let width: Vec<f64> =
        train.iter().map(|&i| data.y_upper()[i].unwrap() - data.y_lower()[i].unwrap()).collect();
    let gl_model =
        fit_mean_component(&learners.reduced_form, truth, OracleTarget::GammaLower, dd, &dx, &yl)?;
    let gul_model =
        fit_mean_component(&learners.reduced_form, truth, OracleTarget::GammaWidth, dd, &dx, &width)?;
    // The D-gradient of a linear reduced form is its D-block coefficients;
    // the oracle knows its gradient in closed form.
    let grad = |model: &FittedModel, target: OracleTarget| -> Vec<f64> {
        match model {
            FittedModel::Linear { coefficients, .. } => coefficients[..dd].to_vec(),
            FittedModel::Oracle { truth, .. } => match (truth.as_ref(), target) {
                (DgpTruth::Plp(t) | DgpTruth::Apd(t), OracleTarget::GammaLower) => t.beta0.clone(),
                _ => vec![0.0; dd],
            },
            _ => vec![0.0; dd],
        }
    };
    let dgl = grad(&gl_model, OracleTarget::GammaLower);
    let dgul = grad(&gul_model, OracleTarget::GammaWidth);

    for &i in eval {
        let x = data.x().row(i);
        let feats = concat_features(&data.d().row(i), &x);
        rows[i] = ApdRecord {
            mhat: m_models.iter().map(|m| m.predict(&x)).collect(),
            gamma_l: gl_model.predict(&feats.view()),
            gamma_ul: gul_model.predict(&feats.view()),
            dgamma_l: dgl.clone(),
            dgamma_ul: dgul.clone(),
        };
    }
    Ok(())
}

fn fit_fold_lee(
    data: &Dataset,
    learners: &LearnerSet,
    truth: Option<&DgpTruth>,
    train: &[usize],
    eval: &[usize],
    rows: &mut [LeeRecord],
    seed: u64,
    fold: usize,
) -> Result<()> {
    let s = data.s().expect("validated");
    let control: Vec<usize> = train.iter().copied().filter(|&i| data.d()[[i, 0]] == 0.0).collect();
    let treated: Vec<usize> = train.iter().copied().filter(|&i| data.d()[[i, 0]] == 1.0).collect();

    let fit_selection = |rows_sel: &[usize], target: OracleTarget| -> Result<FittedModel> {
        match learners.selection.kind {
            LearnerKind::Oracle => Ok(oracle_learner(need_truth(truth)?, target, 0)),
            _ => {
                let x = rows_matrix(data, rows_sel);
                let y: Vec<f64> = rows_sel.iter().map(|&i| f64::from(s[i])).collect();
                fit_logistic_lasso(&x.view(), &y, &learners.selection)
            }
        }
    };
    let s0_model = fit_selection(&control, OracleTarget::Selection0)?;
    let s1_model = fit_selection(&treated, OracleTarget::Selection1)?;

    // Conditional quantiles of the treated, selected outcome.
    let q_model = match learners.quantile.kind {
        LearnerKind::Oracle => oracle_learner(need_truth(truth)?, OracleTarget::QuantileTreated, 0),
        _ => {
            let rows_q: Vec<usize> = treated.iter().copied().filter(|&i| s[i] == 1).collect();
            let x = rows_matrix(data, &rows_q);
            let y: Vec<f64> = rows_q.iter().map(|&i| data.y()[i].unwrap()).collect();
            let jitter = learners.quantile.jitter_sd.map(|sd| (sd, seed ^ ((fold as u64) << 32)));
            fit_conditional_quantile(&x.view(), &y, &learners.quantile.quantile_cells, jitter)?
        }
    };

    // Control-arm conditional mean for the treatment-effect moments.
    let cm_rows: Vec<usize> = control.iter().copied().filter(|&i| s[i] == 1).collect();
    let cm_x = rows_matrix(data, &cm_rows);
    let cm_y: Vec<f64> = cm_rows.iter().map(|&i| data.y()[i].unwrap()).collect();
    let cm_model =
        fit_mean_component(&learners.control_mean, truth, OracleTarget::ControlMean, 0, &cm_x, &cm_y)?;

    let prop_model = match &learners.propensity {
        PropensityMode::Known(_) => None,
        PropensityMode::Estimate => {
            let x = rows_matrix(data, train);
            let y: Vec<f64> = train.iter().map(|&i| data.d()[[i, 0]]).collect();
            Some(fit_logistic_lasso(&x.view(), &y, &learners.selection)?)
        }
    };

    for &i in eval {
        let x = data.x().row(i);
        let s0 = s0_model.predict(&x).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let s1 = s1_model.predict(&x).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let p0 = (s0 / s1).min(1.0);
        let u_up = (1.0 - p0).clamp(LEVEL_FLOOR, 1.0 - LEVEL_FLOOR);
        let u_lo = p0.clamp(LEVEL_FLOOR, 1.0 - LEVEL_FLOOR);
        let t_up = q_model.predict_quantile(u_up, &x)?;
        let t_lo = q_model.predict_quantile(u_lo, &x)?;
        let prop = match &learners.propensity {
            PropensityMode::Known(p) => *p,
            PropensityMode::Estimate => prop_model.as_ref().unwrap().predict(&x),
        };
        rows[i] = LeeRecord {
            s0,
            s1,
            p0,
            u_up,
            u_lo,
            t_up,
            t_lo,
            prop,
            control_mean: cm_model.predict(&x),
        };
    }
    Ok(())
}

/// Perturb observation `i`'s outcome (and treatment, where the model allows
/// it), re-run the engine with the same seed, and report whether row `i`'s
/// nuisance record is unchanged to the last bit. True certifies that the
/// record never saw its own row.
pub fn leakage_probe(
    data: &Dataset,
    model: ModelKind,
    learners: &LearnerSet,
    mode: FitMode,
    seed: u64,
    truth: Option<&DgpTruth>,
    i: usize,
) -> Result<bool> {
    let baseline = crossfit_mode(data, model, learners, mode, seed, truth)?;
    let mut d = data.d().clone();
    let mut y: Vec<Option<f64>> = data.y().to_vec();
    let mut yl: Vec<Option<f64>> = data.y_lower().to_vec();
    let mut yu: Vec<Option<f64>> = data.y_upper().to_vec();
    match model {
        ModelKind::Plp | ModelKind::Apd => {
            y[i] = y[i].map(|v| v + 1000.0);
            yl[i] = yl[i].map(|v| v + 1000.0);
            yu[i] = yu[i].map(|v| v + 1000.0);
            for j in 0..d.ncols() {
                d[[i, j]] += 500.0;
            }
        }
        ModelKind::Lee => {
            // Keep the treatment binary and the presence rule intact.
            y[i] = y[i].map(|v| v + 1000.0);
        }
    }
    let perturbed = Dataset::new(d, data.x().clone(), data.s().map(|s| s.to_vec()), y, yl, yu)?;
    let reran = crossfit_mode(&perturbed, model, learners, mode, seed, truth)?;
    let same = match (&baseline.records, &reran.records) {
        (Records::Plp(a), Records::Plp(b)) => a[i] == b[i],
        (Records::Apd(a), Records::Apd(b)) => a[i] == b[i],
        (Records::Lee(a), Records::Lee(b)) => a[i] == b[i],
        _ => false,
    };
    Ok(same)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_lee, generate_plp, DgpSpec};
    use crate::learners::Penalty;

    fn small_plp(n: usize, seed: u64) -> (Dataset, DgpTruth) {
        generate_plp(&DgpSpec {
            model: ModelKind::Plp,
            n,
            p: 4,
            sparsity: 2,
            beta0: vec![1.0],
            interval_width: 1.0,
            noise_sd: 1.0,
            residual_sd: 1.0,
            seed,
        })
        .unwrap()
    }

    fn plain_learners() -> LearnerSet {
        LearnerSet {
            eta: LearnerSpec::lasso(Penalty::Fixed(0.05)),
            reduced_form: LearnerSpec::lasso(Penalty::Fixed(0.05)),
            ..LearnerSet::default()
        }
    }

    #[test]
    fn constant_learner_matches_hand_arithmetic() {
        // Four rows, K=2: with a huge penalty the eta learner returns the
        // complement-fold mean of D, which is hand-computable.
        let d = ndarray::array![[1.0], [2.0], [3.0], [4.0]];
        let x = ndarray::array![[0.1], [0.2], [0.3], [0.4]];
        let y = vec![Some(0.0); 4];
        let data = Dataset::new(d, x, None, y.clone(), y.clone(), y).unwrap();
        let learners = LearnerSet {
            eta: LearnerSpec::lasso(Penalty::Fixed(1e9)),
            reduced_form: LearnerSpec::lasso(Penalty::Fixed(1e9)),
            ..LearnerSet::default()
        };
        let profile = crossfit(&data, ModelKind::Plp, &learners, 2, 7, None).unwrap();
        let rows = profile.plp().unwrap();
        let folds = &profile.fold_of;
        for i in 0..4 {
            let own = folds.assignments[i];
            let complement: Vec<f64> = (0..4)
                .filter(|&j| folds.assignments[j] != own)
                .map(|j| data.d()[[j, 0]])
                .collect();
            let mean = complement.iter().sum::<f64>() / complement.len() as f64;
            assert!(
                (rows[i].eta[0] - mean).abs() < 1e-12,
                "row {i}: {} vs {}",
                rows[i].eta[0],
                mean
            );
        }
    }

    #[test]
    fn oracle_profile_equals_truth_exactly() {
        let (data, truth) = small_plp(40, 5);
        let profile =
            crossfit(&data, ModelKind::Plp, &LearnerSet::oracle(), 2, 3, Some(&truth)).unwrap();
        let rows = profile.plp().unwrap();
        let t = match &truth {
            DgpTruth::Plp(t) => t,
            _ => unreachable!(),
        };
        for i in 0..data.n() {
            let index: f64 = (0..data.p()).map(|j| t.theta[j] * data.x()[[i, j]]).sum();
            assert_eq!(rows[i].eta[0], index);
            assert_eq!(rows[i].gamma_ul, t.width);
        }
    }

    #[test]
    fn oracle_without_truth_is_unsupported() {
        let (data, _) = small_plp(20, 5);
        let err = crossfit(&data, ModelKind::Plp, &LearnerSet::oracle(), 2, 3, None).unwrap_err();
        assert!(matches!(err, Error::Fold { .. } | Error::Unsupported(_)), "{err}");
    }

    #[test]
    fn honest_engine_passes_leakage_probe_broken_engine_fails() {
        let (data, _) = small_plp(60, 11);
        let learners = plain_learners();
        for &i in &[0usize, 13, 59] {
            let ok =
                leakage_probe(&data, ModelKind::Plp, &learners, FitMode::KFold(2), 4, None, i)
                    .unwrap();
            assert!(ok, "row {i} leaked under K-fold");
        }
        let broken =
            leakage_probe(&data, ModelKind::Plp, &learners, FitMode::NoSplit, 4, None, 0).unwrap();
        assert!(!broken, "full-sample engine must fail the probe");
    }

    #[test]
    fn perturbing_a_row_changes_other_folds_predictions() {
        let (data, _) = small_plp(30, 2);
        let learners = plain_learners();
        let base = crossfit(&data, ModelKind::Plp, &learners, 2, 9, None).unwrap();
        let i = 0usize;
        let mut y: Vec<Option<f64>> = data.y().to_vec();
        let mut yl: Vec<Option<f64>> = data.y_lower().to_vec();
        let mut yu: Vec<Option<f64>> = data.y_upper().to_vec();
        y[i] = y[i].map(|v| v + 100.0);
        yl[i] = yl[i].map(|v| v + 100.0);
        yu[i] = yu[i].map(|v| v + 100.0);
        let perturbed = Dataset::new(data.d().clone(), data.x().clone(), None, y, yl, yu).unwrap();
        let reran = crossfit(&perturbed, ModelKind::Plp, &learners, 2, 9, None).unwrap();
        let own = base.fold_of.assignments[i];
        let a = base.plp().unwrap();
        let b = reran.plp().unwrap();
        assert_eq!(a[i], b[i], "own record must be unchanged");
        let other = (0..30).find(|&j| base.fold_of.assignments[j] != own).unwrap();
        assert_ne!(a[other].gamma_l, b[other].gamma_l, "other fold must react");
    }

    #[test]
    fn leave_one_out_with_memorizing_learner_never_sees_own_row() {
        let (data, _) = small_plp(12, 8);
        let learners = LearnerSet {
            eta: LearnerSpec {
                penalty: Penalty::Fixed(1e9),
                memorize_weight: Some(1.0),
                ..Default::default()
            },
            reduced_form: LearnerSpec::lasso(Penalty::Fixed(1e9)),
            ..LearnerSet::default()
        };
        let profile = crossfit(&data, ModelKind::Plp, &learners, data.n(), 1, None).unwrap();
        let rows = profile.plp().unwrap();
        for i in 0..data.n() {
            // Memorization can never fire out of fold, so the prediction is
            // a training mean, never the row's own D.
            assert_ne!(rows[i].eta[0], data.d()[[i, 0]]);
        }
    }

    #[test]
    fn lee_crossfit_produces_complete_records() {
        let spec = DgpSpec {
            model: ModelKind::Lee,
            n: 600,
            p: 3,
            sparsity: 2,
            beta0: vec![0.4],
            interval_width: 0.0,
            noise_sd: 1.0,
            residual_sd: 0.6,
            seed: 30,
        };
        let (data, truth) = generate_lee(&spec).unwrap();
        let profile =
            crossfit(&data, ModelKind::Lee, &LearnerSet::default(), 2, 5, Some(&truth)).unwrap();
        let rows = profile.lee().unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert!(r.s0.is_finite() && r.s1.is_finite(), "row {i}");
            assert!(r.p0 > 0.0 && r.p0 <= 1.0, "row {i}: p0 {}", r.p0);
            assert!(r.t_up.is_finite() && r.t_lo.is_finite());
            assert_eq!(r.prop, 0.5);
        }
        assert!(profile.pr_d0_s1 > 0.1 && profile.pr_d0_s1 < 0.5);
    }

    #[test]
    fn profile_csv_export_has_one_row_per_observation() {
        let (data, _) = small_plp(15, 4);
        let profile = crossfit(&data, ModelKind::Plp, &plain_learners(), 3, 6, None).unwrap();
        let mut buf = Vec::new();
        profile.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 16);
        assert!(text.lines().next().unwrap().starts_with("fold,eta_1,gamma_l"));
    }
}

#[cfg(test)]
mod exchange_tests {
    use super::*;
    use crate::dataset::generate_plp;
    use crate::learners::Penalty;

    #[test]
    fn swapping_rows_within_a_fold_swaps_their_records() {
        let (data, _) = generate_plp(&crate::dataset::DgpSpec {
            model: ModelKind::Plp,
            n: 24,
            p: 3,
            sparsity: 1,
            beta0: vec![1.0],
            interval_width: 1.0,
            noise_sd: 1.0,
            residual_sd: 1.0,
            seed: 77,
        })
        .unwrap();
        let learners = LearnerSet {
            eta: LearnerSpec::lasso(Penalty::Fixed(0.05)),
            reduced_form: LearnerSpec::lasso(Penalty::Fixed(0.05)),
            ..LearnerSet::default()
        };
        let base = crossfit(&data, ModelKind::Plp, &learners, 2, 5, None).unwrap();
        // Two distinct rows in the same fold.
        let folds = &base.fold_of.assignments;
        let i = 0usize;
        let j = (1..24).find(|&j| folds[j] == folds[i]).unwrap();

        let mut d = data.d().clone();
        let mut x = data.x().clone();
        for c in 0..d.ncols() {
            d.swap([i, c], [j, c]);
        }
        for c in 0..x.ncols() {
            x.swap([i, c], [j, c]);
        }
        let mut y = data.y().to_vec();
        let mut yl = data.y_lower().to_vec();
        let mut yu = data.y_upper().to_vec();
        y.swap(i, j);
        yl.swap(i, j);
        yu.swap(i, j);
        let swapped = Dataset::new(d, x, None, y, yl, yu).unwrap();
        let reran = crossfit(&swapped, ModelKind::Plp, &learners, 2, 5, None).unwrap();
        let a = base.plp().unwrap();
        let b = reran.plp().unwrap();
        // Same training set, swapped evaluation rows: the records swap
        // exactly and everything else is untouched.
        assert_eq!(a[i], b[j]);
        assert_eq!(a[j], b[i]);
        for r in 0..24 {
            if r != i && r != j {
                assert_eq!(a[r], b[r], "row {r} must be untouched");
            }
        }
    }
}
