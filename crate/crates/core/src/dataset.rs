//! Data model: observation tables, K-fold partitions, synthetic
//! data-generating processes and CSV ingestion/emission.
//!
//! A dataset is an immutable column table of observations
//! `W = (D, X, S, Y, Y_L, Y_U)`. The outcome columns are per-row optional:
//! in the sample-selection model the outcome exists only for selected rows,
//! and interval data carry bounds instead of (or besides) the outcome.

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::stats::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Partially linear predictor with an interval-valued outcome.
    Plp,
    /// Average partial derivative with an interval-valued outcome.
    Apd,
    /// Treatment-effect bounds under endogenous sample selection.
    Lee,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelKind::Plp => write!(f, "plp"),
            ModelKind::Apd => write!(f, "apd"),
            ModelKind::Lee => write!(f, "lee"),
        }
    }
}

/// Immutable table of observations.
#[derive(Debug, Clone)]
pub struct Dataset {
    d: Array2<f64>,
    x: Array2<f64>,
    s: Option<Vec<u8>>,
    y: Vec<Option<f64>>,
    y_lower: Vec<Option<f64>>,
    y_upper: Vec<Option<f64>>,
}

/// Borrowed view of a single observation.
#[derive(Debug, Clone, Copy)]
pub struct Obs<'a> {
    pub d: ArrayView1<'a, f64>,
    pub x: ArrayView1<'a, f64>,
    pub s: Option<bool>,
    pub y: Option<f64>,
    pub y_lower: Option<f64>,
    pub y_upper: Option<f64>,
}

impl Dataset {
    pub fn new(
        d: Array2<f64>,
        x: Array2<f64>,
        s: Option<Vec<u8>>,
        y: Vec<Option<f64>>,
        y_lower: Vec<Option<f64>>,
        y_upper: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = d.nrows();
        if x.nrows() != n || y.len() != n || y_lower.len() != n || y_upper.len() != n {
            return Err(Error::invalid("dataset columns have unequal lengths"));
        }
        if let Some(s) = &s {
            if s.len() != n {
                return Err(Error::invalid("selection column length mismatch"));
            }
            if s.iter().any(|&v| v > 1) {
                return Err(Error::invalid("selection indicator must be 0 or 1"));
            }
        }
        let ds = Dataset { d, x, s, y, y_lower, y_upper };
        ds.validate()?;
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    /// Dimension of the endogenous variable D.
    pub fn d_dim(&self) -> usize {
        self.d.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn d(&self) -> &Array2<f64> {
        &self.d
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn s(&self) -> Option<&[u8]> {
        self.s.as_deref()
    }

    pub fn y(&self) -> &[Option<f64>] {
        &self.y
    }

    pub fn y_lower(&self) -> &[Option<f64>] {
        &self.y_lower
    }

    pub fn y_upper(&self) -> &[Option<f64>] {
        &self.y_upper
    }

    pub fn row(&self, i: usize) -> Obs<'_> {
        Obs {
            d: self.d.row(i),
            x: self.x.row(i),
            s: self.s.as_ref().map(|s| s[i] == 1),
            y: self.y[i],
            y_lower: self.y_lower[i],
            y_upper: self.y_upper[i],
        }
    }

    /// Row-level coherence: bounds ordered, outcome inside the bounds, and
    /// the selection presence rule (`y` recorded iff `s = 1`) whenever a
    /// selection column exists.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n() {
            if let (Some(l), Some(u)) = (self.y_lower[i], self.y_upper[i]) {
                if l > u {
                    return Err(Error::schema(
                        None,
                        format!("row {i}: y_lower {l} > y_upper {u}"),
                    ));
                }
                if let Some(y) = self.y[i] {
                    if y < l || y > u {
                        return Err(Error::schema(
                            None,
                            format!("row {i}: y {y} outside [{l}, {u}]"),
                        ));
                    }
                }
            }
            if let Some(s) = &self.s {
                let selected = s[i] == 1;
                if selected != self.y[i].is_some() {
                    return Err(Error::schema(
                        None,
                        format!("row {i}: outcome presence does not match selection"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Check the columns a model requires.
    pub fn validate_for(&self, model: ModelKind) -> Result<()> {
        self.validate()?;
        match model {
            ModelKind::Plp | ModelKind::Apd => {
                for i in 0..self.n() {
                    if self.y_lower[i].is_none() || self.y_upper[i].is_none() {
                        return Err(Error::schema(
                            None,
                            format!("row {i}: interval model needs y_lower and y_upper"),
                        ));
                    }
                }
                Ok(())
            }
            ModelKind::Lee => {
                if self.d_dim() != 1 {
                    return Err(Error::schema(None, "selection model needs a scalar treatment"));
                }
                if self.s.is_none() {
                    return Err(Error::schema(None, "selection model needs an s column"));
                }
                for i in 0..self.n() {
                    let d = self.d[[i, 0]];
                    if d != 0.0 && d != 1.0 {
                        return Err(Error::schema(
                            None,
                            format!("row {i}: treatment must be binary, got {d}"),
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// Write the table in the reserved-column CSV layout. Missing cells are
    /// emitted empty; reading the file back reproduces the table.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = Vec::new();
        for j in 0..self.d_dim() {
            header.push(format!("d_{}", j + 1));
        }
        for j in 0..self.p() {
            header.push(format!("x_{}", j + 1));
        }
        if self.s.is_some() {
            header.push("s".into());
        }
        header.push("y".into());
        header.push("y_lower".into());
        header.push("y_upper".into());
        w.write_record(&header)?;
        let fmt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        for i in 0..self.n() {
            let mut rec: Vec<String> = Vec::with_capacity(header.len());
            for j in 0..self.d_dim() {
                rec.push(format!("{}", self.d[[i, j]]));
            }
            for j in 0..self.p() {
                rec.push(format!("{}", self.x[[i, j]]));
            }
            if let Some(s) = &self.s {
                rec.push(format!("{}", s[i]));
            }
            rec.push(fmt(self.y[i]));
            rec.push(fmt(self.y_lower[i]));
            rec.push(fmt(self.y_upper[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(f)
    }

    /// Read a dataset from the reserved-column CSV layout. Column names
    /// d_1..d_k and x_1..x_p must be contiguous starting at 1; `s`, `y`,
    /// `y_lower`, `y_upper` are optional columns; empty cells are missing.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers()?.clone();
        let mut d_cols: Vec<(usize, usize)> = Vec::new();
        let mut x_cols: Vec<(usize, usize)> = Vec::new();
        let mut s_col = None;
        let mut y_col = None;
        let mut yl_col = None;
        let mut yu_col = None;
        for (idx, name) in header.iter().enumerate() {
            if let Some(k) = name.strip_prefix("d_") {
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::schema(Some(1), format!("bad column name {name}")))?;
                d_cols.push((k, idx));
            } else if let Some(k) = name.strip_prefix("x_") {
                let k: usize = k
                    .parse()
                    .map_err(|_| Error::schema(Some(1), format!("bad column name {name}")))?;
                x_cols.push((k, idx));
            } else {
                match name {
                    "s" => s_col = Some(idx),
                    "y" => y_col = Some(idx),
                    "y_lower" => yl_col = Some(idx),
                    "y_upper" => yu_col = Some(idx),
                    other => {
                        return Err(Error::schema(Some(1), format!("unknown column {other}")))
                    }
                }
            }
        }
        d_cols.sort_unstable();
        x_cols.sort_unstable();
        if d_cols.is_empty() {
            return Err(Error::schema(Some(1), "no d_* columns"));
        }
        for (want, &(got, _)) in (1..).zip(&d_cols) {
            if got != want {
                return Err(Error::schema(Some(1), format!("d_* columns not contiguous at d_{want}")));
            }
        }
        for (want, &(got, _)) in (1..).zip(&x_cols) {
            if got != want {
                return Err(Error::schema(Some(1), format!("x_* columns not contiguous at x_{want}")));
            }
        }

        let parse_opt = |field: &str, line: u64| -> Result<Option<f64>> {
            if field.is_empty() {
                return Ok(None);
            }
            field
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::schema(Some(line), format!("bad number '{field}'")))
        };

        let mut d_rows: Vec<f64> = Vec::new();
        let mut x_rows: Vec<f64> = Vec::new();
        let mut s: Vec<u8> = Vec::new();
        let mut y = Vec::new();
        let mut yl = Vec::new();
        let mut yu = Vec::new();
        let mut n = 0usize;
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            for &(_, idx) in &d_cols {
                let v = parse_opt(&rec[idx], line)?
                    .ok_or_else(|| Error::schema(Some(line), "missing d value"))?;
                d_rows.push(v);
            }
            for &(_, idx) in &x_cols {
                let v = parse_opt(&rec[idx], line)?
                    .ok_or_else(|| Error::schema(Some(line), "missing x value"))?;
                x_rows.push(v);
            }
            if let Some(idx) = s_col {
                let v = parse_opt(&rec[idx], line)?
                    .ok_or_else(|| Error::schema(Some(line), "missing s value"))?;
                if v != 0.0 && v != 1.0 {
                    return Err(Error::schema(Some(line), format!("s must be 0/1, got {v}")));
                }
                s.push(v as u8);
            }
            y.push(match y_col {
                Some(idx) => parse_opt(&rec[idx], line)?,
                None => None,
            });
            yl.push(match yl_col {
                Some(idx) => parse_opt(&rec[idx], line)?,
                None => None,
            });
            yu.push(match yu_col {
                Some(idx) => parse_opt(&rec[idx], line)?,
                None => None,
            });
            n += 1;
        }
        let d = Array2::from_shape_vec((n, d_cols.len()), d_rows)
            .map_err(|e| Error::schema(None, e.to_string()))?;
        let x = Array2::from_shape_vec((n, x_cols.len()), x_rows)
            .map_err(|e| Error::schema(None, e.to_string()))?;
        Dataset::new(d, x, s_col.map(|_| s), y, yl, yu)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Dataset::read_csv(f)
    }
}

/// K-fold assignment of observations, a deterministic function of
/// `(n, K, seed)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPartition {
    /// Fold index of each observation, values in 1..=k.
    pub assignments: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldPartition {
    /// Observation indices belonging to fold `fold` (1-based).
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    /// A single pseudo-fold: everything is both training and evaluation
    /// data. Used by the no-split estimator variant.
    pub fn nosplit(n: usize) -> Self {
        FoldPartition { assignments: vec![1; n], k: 1, seed: 0 }
    }
}

/// Uniformly random K-fold partition. Fold sizes are n/K rounded down or up;
/// the remainder goes to the folds holding the first positions of the
/// shuffled order.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<FoldPartition> {
    if k < 2 || k > n {
        return Err(Error::invalid(format!("need 2 <= K <= n, got K={k}, n={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = substream(seed, Stream::Folds, 0);
    // Fisher-Yates.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let base = n / k;
    let rem = n % k;
    let mut assignments = vec![0usize; n];
    let mut pos = 0usize;
    for fold in 1..=k {
        let size = base + usize::from(fold <= rem);
        for _ in 0..size {
            assignments[order[pos]] = fold;
            pos += 1;
        }
    }
    Ok(FoldPartition { assignments, k, seed })
}

/// Synthetic data-generating process specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpSpec {
    pub model: ModelKind,
    pub n: usize,
    pub p: usize,
    pub sparsity: usize,
    pub beta0: Vec<f64>,
    pub interval_width: f64,
    pub noise_sd: f64,
    pub residual_sd: f64,
    pub seed: u64,
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be positive"));
        }
        if self.sparsity > self.p {
            return Err(Error::invalid("sparsity exceeds p"));
        }
        if self.beta0.is_empty() {
            return Err(Error::invalid("beta0 must be non-empty"));
        }
        if self.interval_width < 0.0 {
            return Err(Error::invalid("interval_width must be >= 0"));
        }
        if self.noise_sd <= 0.0 || self.residual_sd <= 0.0 {
            return Err(Error::invalid("scale parameters must be positive"));
        }
        if self.model == ModelKind::Lee && self.p < 2 {
            return Err(Error::invalid("selection model needs p >= 2"));
        }
        Ok(())
    }
}

/// Exact nuisance values of a synthetic DGP, for the oracle learner and the
/// analytic reference computations.
#[derive(Debug, Clone)]
pub enum DgpTruth {
    Plp(PlpTruth),
    Apd(ApdTruth),
    Lee(LeeTruth),
}

/// PLP/APD share the linear first stage: each coordinate of D has
/// conditional mean `x' theta`, the residual is Gaussian with standard
/// deviation `sigma_v`, the latent outcome is `d' beta0 + x' theta + u`.
#[derive(Debug, Clone)]
pub struct PlpTruth {
    pub theta: Vec<f64>,
    pub beta0: Vec<f64>,
    pub sigma_v: f64,
    pub width: f64,
}

pub type ApdTruth = PlpTruth;

#[derive(Debug, Clone)]
pub struct LeeTruth {
    /// Selection index coefficients on (1, x_1, x_2) in the control arm.
    pub sel0: [f64; 3],
    /// Extra index shift a treated subject receives.
    pub shift: f64,
    /// Outcome location coefficients on (x_1, x_2).
    pub loc: [f64; 2],
    /// Treatment effect on the outcome.
    pub tau: f64,
    pub outcome_sd: f64,
}

impl LeeTruth {
    pub fn index0(&self, x: &ArrayView1<f64>) -> f64 {
        self.sel0[0] + self.sel0[1] * x[0] + self.sel0[2] * x[1]
    }

    pub fn s0(&self, x: &ArrayView1<f64>) -> f64 {
        normal_cdf(self.index0(x))
    }

    pub fn s1(&self, x: &ArrayView1<f64>) -> f64 {
        normal_cdf(self.index0(x).max(self.index0(x) + self.shift))
    }

    pub fn location(&self, x: &ArrayView1<f64>) -> f64 {
        self.loc[0] * x[0] + self.loc[1] * x[1]
    }

    /// Quantile of Y given D=1, S=1, X=x; levels at the boundary map to
    /// -inf/+inf (no trimming).
    pub fn quantile_treated(&self, u: f64, x: &ArrayView1<f64>) -> f64 {
        if u <= 0.0 {
            return f64::NEG_INFINITY;
        }
        if u >= 1.0 {
            return f64::INFINITY;
        }
        self.location(x) + self.tau + self.outcome_sd * crate::stats::normal_quantile(u)
    }
}

/// Draw from the interval-outcome DGP of the partially linear predictor.
///
/// X is a standard Gaussian p-vector; eta0(X) = x' theta with `sparsity`
/// leading coefficients equal to one; D = eta0(X) + V with V ~ N(0,
/// residual_sd^2) independent of X; the latent outcome is D' beta0 + x'
/// theta + U with U ~ N(0, noise_sd^2); the reported interval is the
/// symmetric band of width `interval_width` around the latent outcome.
pub fn generate_plp(spec: &DgpSpec) -> Result<(Dataset, DgpTruth)> {
    spec.validate()?;
    if spec.model != ModelKind::Plp {
        return Err(Error::invalid("generate_plp needs model = plp"));
    }
    let (data, truth) = generate_linear_interval(spec)?;
    Ok((data, DgpTruth::Plp(truth)))
}

/// Same design as [`generate_plp`] but read as an average-partial-derivative
/// model: D = m0(X) + V with Gaussian V, so the density-score weight is
/// V / residual_sd^2 in closed form.
pub fn generate_apd(spec: &DgpSpec) -> Result<(Dataset, DgpTruth)> {
    spec.validate()?;
    if spec.model != ModelKind::Apd {
        return Err(Error::invalid("generate_apd needs model = apd"));
    }
    let (data, truth) = generate_linear_interval(spec)?;
    Ok((data, DgpTruth::Apd(truth)))
}

fn generate_linear_interval(spec: &DgpSpec) -> Result<(Dataset, PlpTruth)> {
    let n = spec.n;
    let p = spec.p;
    let dd = spec.beta0.len();
    let mut rng = substream(spec.seed, Stream::Data, 0);
    let theta: Vec<f64> = (0..p).map(|j| if j < spec.sparsity { 1.0 } else { 0.0 }).collect();

    let mut x = Array2::<f64>::zeros((n, p));
    let mut d = Array2::<f64>::zeros((n, dd));
    let mut y = Vec::with_capacity(n);
    let mut yl = Vec::with_capacity(n);
    let mut yu = Vec::with_capacity(n);
    let half = spec.interval_width / 2.0;
    for i in 0..n {
        let mut index = 0.0;
        for j in 0..p {
            let v: f64 = rng.sample(StandardNormal);
            x[[i, j]] = v;
            if theta[j] != 0.0 {
                index += v;
            }
        }
        let mut dy = 0.0;
        for j in 0..dd {
            let v: f64 = rng.sample(StandardNormal);
            d[[i, j]] = index + spec.residual_sd * v;
            dy += d[[i, j]] * spec.beta0[j];
        }
        let u: f64 = rng.sample(StandardNormal);
        let latent = dy + index + spec.noise_sd * u;
        y.push(Some(latent));
        yl.push(Some(latent - half));
        yu.push(Some(latent + half));
    }
    let data = Dataset::new(d, x, None, y, yl, yu)?;
    let truth = PlpTruth {
        theta,
        beta0: spec.beta0.clone(),
        sigma_v: spec.residual_sd,
        width: spec.interval_width,
    };
    Ok((data, truth))
}

/// Draw from the endogenous-sample-selection DGP.
///
/// The treatment is a fair coin independent of everything else. The first
/// two covariates are discrete (binary and three-valued) and drive both the
/// selection index and the outcome location, so empirical quantiles in the
/// (x_1, x_2) cells recover the conditional outcome distribution. Treatment
/// shifts the selection index by `residual_sd` (never downward selection,
/// so monotonicity holds draw by draw) and the outcome by `beta0[0]`.
pub fn generate_lee(spec: &DgpSpec) -> Result<(Dataset, DgpTruth)> {
    spec.validate()?;
    if spec.model != ModelKind::Lee {
        return Err(Error::invalid("generate_lee needs model = lee"));
    }
    let truth = LeeTruth {
        sel0: [0.4, 0.5, 0.3],
        shift: spec.residual_sd,
        loc: [1.0, 0.5],
        tau: spec.beta0[0],
        outcome_sd: spec.noise_sd,
    };
    let n = spec.n;
    let p = spec.p;
    let mut rng = substream(spec.seed, Stream::Data, 0);
    let mut x = Array2::<f64>::zeros((n, p));
    let mut d = Array2::<f64>::zeros((n, 1));
    let mut s = Vec::with_capacity(n);
    let mut y: Vec<Option<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        x[[i, 0]] = f64::from(rng.random_range(0..2u8));
        x[[i, 1]] = f64::from(rng.random_range(0..3u8));
        for j in 2..p {
            x[[i, j]] = rng.sample(StandardNormal);
        }
        let treated = rng.random_range(0..2u8) == 1;
        d[[i, 0]] = f64::from(u8::from(treated));
        let xr = x.row(i);
        let idx0 = truth.index0(&xr);
        let eps: f64 = rng.sample(StandardNormal);
        let s0 = idx0 + eps > 0.0;
        let s1 = s0 || (idx0 + truth.shift + eps > 0.0);
        let selected = if treated { s1 } else { s0 };
        s.push(u8::from(selected));
        let eps_y: f64 = rng.sample(StandardNormal);
        let latent =
            truth.location(&xr) + if treated { truth.tau } else { 0.0 } + truth.outcome_sd * eps_y;
        y.push(selected.then_some(latent));
    }
    let none = vec![None; n];
    let data = Dataset::new(d, x, Some(s), y, none.clone(), none)?;
    Ok((data, DgpTruth::Lee(truth)))
}

/// Dispatch on the spec's model.
pub fn generate(spec: &DgpSpec) -> Result<(Dataset, DgpTruth)> {
    match spec.model {
        ModelKind::Plp => generate_plp(spec),
        ModelKind::Apd => generate_apd(spec),
        ModelKind::Lee => generate_lee(spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plp_spec(n: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            model: ModelKind::Plp,
            n,
            p: 5,
            sparsity: 2,
            beta0: vec![1.0],
            interval_width: 1.0,
            noise_sd: 1.0,
            residual_sd: 1.0,
            seed,
        }
    }

    #[test]
    fn kfold_is_a_partition_with_balanced_sizes() {
        let part = kfold_partition(4, 2, 7).unwrap();
        let f1 = part.members(1);
        let f2 = part.members(2);
        assert_eq!(f1.len(), 2);
        assert_eq!(f2.len(), 2);
        let mut all: Vec<usize> = f1.into_iter().chain(f2).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);

        let part = kfold_partition(5, 2, 1).unwrap();
        let mut sizes = vec![part.members(1).len(), part.members(2).len()];
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 3]);
    }

    #[test]
    fn kfold_is_deterministic() {
        let a = kfold_partition(4, 2, 7).unwrap();
        let b = kfold_partition(4, 2, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn kfold_rejects_bad_k() {
        assert!(kfold_partition(4, 1, 0).is_err());
        assert!(kfold_partition(4, 5, 0).is_err());
    }

    #[test]
    fn plp_zero_width_is_point_identified() {
        let mut spec = plp_spec(50, 3);
        spec.interval_width = 0.0;
        let (data, _) = generate_plp(&spec).unwrap();
        for i in 0..data.n() {
            assert_eq!(data.y_lower()[i], data.y()[i]);
            assert_eq!(data.y_upper()[i], data.y()[i]);
        }
    }

    #[test]
    fn plp_generation_is_deterministic() {
        let spec = plp_spec(20, 9);
        let (a, _) = generate_plp(&spec).unwrap();
        let (b, _) = generate_plp(&spec).unwrap();
        assert_eq!(a.d(), b.d());
        assert_eq!(a.x(), b.x());
        assert_eq!(a.y(), b.y());
    }

    #[test]
    fn plp_residual_uncorrelated_with_covariates() {
        let mut spec = plp_spec(100_000, 11);
        spec.p = 4;
        spec.sparsity = 2;
        let (data, truth) = generate_plp(&spec).unwrap();
        let truth = match truth {
            DgpTruth::Plp(t) => t,
            _ => unreachable!(),
        };
        let n = data.n();
        for j in 0..data.p() {
            let mut num = 0.0;
            let mut vx = 0.0;
            let mut vv = 0.0;
            for i in 0..n {
                let eta: f64 = (0..data.p()).map(|k| truth.theta[k] * data.x()[[i, k]]).sum();
                let v = data.d()[[i, 0]] - eta;
                let x = data.x()[[i, j]];
                num += v * x;
                vx += x * x;
                vv += v * v;
            }
            let corr = num / (vx.sqrt() * vv.sqrt());
            assert!(corr.abs() < 0.02, "coordinate {j}: corr {corr}");
        }
    }

    #[test]
    fn lee_monotone_selection_and_presence() {
        let spec = DgpSpec {
            model: ModelKind::Lee,
            n: 5000,
            p: 3,
            sparsity: 2,
            beta0: vec![0.5],
            interval_width: 0.0,
            noise_sd: 1.0,
            residual_sd: 0.5,
            seed: 21,
        };
        let (data, _) = generate_lee(&spec).unwrap();
        data.validate_for(ModelKind::Lee).unwrap();
        // Treatment share within 3 binomial standard errors of 1/2.
        let n = data.n() as f64;
        let share = (0..data.n()).map(|i| data.d()[[i, 0]]).sum::<f64>() / n;
        let se = 0.5 / n.sqrt();
        assert!((share - 0.5).abs() < 3.0 * se, "share {share}");
    }

    #[test]
    fn lee_no_selection_effect_when_shift_zero() {
        let truth = LeeTruth {
            sel0: [0.4, 0.5, 0.3],
            shift: 0.0,
            loc: [1.0, 0.5],
            tau: 0.5,
            outcome_sd: 1.0,
        };
        let x = ndarray::array![1.0, 2.0, 0.0];
        let xr = x.view();
        assert!((truth.s0(&xr) - truth.s1(&xr)).abs() < 1e-15);
    }

    #[test]
    fn csv_roundtrip_preserves_missingness() {
        let spec = DgpSpec {
            model: ModelKind::Lee,
            n: 40,
            p: 3,
            sparsity: 2,
            beta0: vec![0.5],
            interval_width: 0.0,
            noise_sd: 1.0,
            residual_sd: 0.5,
            seed: 2,
        };
        let (data, _) = generate_lee(&spec).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(data.s(), back.s());
        assert_eq!(data.y(), back.y());
        assert_eq!(data.d(), back.d());
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let d = Array2::zeros((1, 1));
        let x = Array2::zeros((1, 1));
        let err = Dataset::new(d, x, None, vec![Some(5.0)], vec![Some(0.0)], vec![Some(1.0)]);
        assert!(err.is_err(), "outcome outside bounds must be rejected");
    }
}
