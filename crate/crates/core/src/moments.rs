//! Moment functions.
//!
//! Every estimator in this crate is a sample average of one of the moment
//! functions defined here. Each model has a plug-in moment `m` (the support
//! function kernel `z_q * Y_q` or the trimmed-mean kernel of the selection
//! model) and an orthogonal moment `g = m + correction`, where the
//! correction has conditional mean zero and cancels the first-order effect
//! of nuisance estimation error. The [`gateaux_probe`] turns that defining
//! property into a finite-difference test.

use ndarray::ArrayView1;

use crate::crossfit::{ApdRecord, LeeRecord, PlpRecord, LEVEL_FLOOR};
use crate::dataset::{Dataset, DgpTruth, LeeTruth, Obs, PlpTruth};
use crate::error::{Error, Result};
use crate::learners::PROB_CLAMP;
use crate::stats;

/// The interval endpoint selected by the sign of the projected residual:
/// the lower bound when z <= 0, the upper bound otherwise.
pub fn q_generator(y_lower: f64, y_upper: f64, z: f64) -> Result<f64> {
    if y_lower > y_upper {
        return Err(Error::invalid(format!("y_lower {y_lower} > y_upper {y_upper}")));
    }
    Ok(if z <= 0.0 { y_lower } else { y_upper })
}

/// One evaluation of a moment function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentValue {
    /// Orthogonal moment g = m + correction.
    pub g: f64,
    /// Plug-in (non-orthogonal) moment.
    pub m: f64,
    /// Bias-correction term.
    pub correction: f64,
}

fn interval(obs: &Obs) -> Result<(f64, f64)> {
    match (obs.y_lower, obs.y_upper) {
        (Some(l), Some(u)) => Ok((l, u)),
        _ => Err(Error::IncompleteProfile("observation lacks interval bounds".into())),
    }
}

/// Partially linear predictor moment at projection vector `p`:
/// `m = p'V * Y_p`, `g = p'V * (Y_p - gamma(X))` with V = D - eta(X).
pub fn plp_moment(obs: &Obs, p: &[f64], rec: &PlpRecord) -> Result<MomentValue> {
    if rec.eta.len() != obs.d.len() || !rec.gamma_l.is_finite() || !rec.gamma_ul.is_finite() {
        return Err(Error::IncompleteProfile("plp nuisance record incomplete".into()));
    }
    let (yl, yu) = interval(obs)?;
    let mut z = 0.0;
    for j in 0..p.len() {
        z += p[j] * (obs.d[j] - rec.eta[j]);
    }
    let y_p = q_generator(yl, yu, z)?;
    let m = z * y_p;
    let correction = -z * rec.gamma();
    Ok(MomentValue { g: m + correction, m, correction })
}

/// Per-observation inputs of the average-partial-derivative moment. The
/// density score `eta` is assembled by the caller (sample covariance route
/// or oracle), the reduced forms come from the nuisance record.
#[derive(Debug, Clone)]
pub struct ApdEval<'a> {
    pub eta: &'a [f64],
    pub gamma_l: f64,
    pub gamma_ul: f64,
    pub dgamma_l: &'a [f64],
    pub dgamma_ul: &'a [f64],
}

impl<'a> ApdEval<'a> {
    pub fn from_record(rec: &'a ApdRecord, eta: &'a [f64]) -> Self {
        ApdEval {
            eta,
            gamma_l: rec.gamma_l,
            gamma_ul: rec.gamma_ul,
            dgamma_l: &rec.dgamma_l,
            dgamma_ul: &rec.dgamma_ul,
        }
    }
}

/// Average-partial-derivative moment in direction `q`:
/// `g = z_q Y_q - z_q gamma_q(D,X) + q' d/dD gamma_q(D,X)` with
/// `z_q = q' eta(D,X)` and the reduced form gated by the sign of `z_q`.
pub fn apd_moment(obs: &Obs, q: &[f64], ev: &ApdEval) -> Result<MomentValue> {
    if ev.eta.len() != q.len() || ev.dgamma_l.len() != q.len() || ev.dgamma_ul.len() != q.len() {
        return Err(Error::IncompleteProfile("apd nuisance record incomplete".into()));
    }
    let (yl, yu) = interval(obs)?;
    let z: f64 = q.iter().zip(ev.eta).map(|(a, b)| a * b).sum();
    let y_q = q_generator(yl, yu, z)?;
    let gate = z > 0.0;
    let gamma_q = ev.gamma_l + if gate { ev.gamma_ul } else { 0.0 };
    let mut qdg = 0.0;
    for j in 0..q.len() {
        qdg += q[j] * (ev.dgamma_l[j] + if gate { ev.dgamma_ul[j] } else { 0.0 });
    }
    let m = z * y_q;
    let correction = -z * gamma_q + qdg;
    Ok(MomentValue { g: m + correction, m, correction })
}

/// All slots of the selection-model moment, explicit so each one can be
/// perturbed independently by the orthogonality probe. The correction
/// coefficients `g1..g6` are kernels: the common 1/Pr(D=0,S=1) factor is
/// applied at evaluation time, so reweighting that frequency (as the
/// bootstrap does) rescales the whole moment consistently.
#[derive(Debug, Clone)]
pub struct LeeEval {
    pub s0: f64,
    pub s1: f64,
    pub p0: f64,
    pub u_up: f64,
    pub u_lo: f64,
    pub t_up: f64,
    pub t_lo: f64,
    pub prop: f64,
    pub control_mean: f64,
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
    pub g5: f64,
    pub g6: f64,
}

impl LeeEval {
    /// Build the evaluation slots from a nuisance record, filling the
    /// correction coefficients with their plug-in values.
    pub fn from_record(r: &LeeRecord) -> Self {
        let pi0 = 1.0 - r.prop;
        LeeEval {
            s0: r.s0,
            s1: r.s1,
            p0: r.p0,
            u_up: r.u_up,
            u_lo: r.u_lo,
            t_up: r.t_up,
            t_lo: r.t_lo,
            prop: r.prop,
            control_mean: r.control_mean,
            g1: r.t_up * pi0,
            g2: -r.t_up * r.p0 * pi0,
            g3: r.t_up * pi0 / r.prop,
            g4: r.t_lo * pi0,
            g5: -r.t_lo * r.p0 * pi0,
            g6: -r.t_lo * pi0 / r.prop,
        }
    }

    fn check(&self, index: usize, pr_d0_s1: f64) -> Result<()> {
        let bad = |detail: String| Err(Error::DegenerateCell { index, detail });
        if !(self.s0.is_finite() && self.s1.is_finite() && self.t_up.is_finite() && self.t_lo.is_finite())
        {
            return bad("non-finite nuisance value".into());
        }
        if self.s0 < PROB_CLAMP || self.s1 < PROB_CLAMP {
            return bad(format!("selection probability below floor: s0={} s1={}", self.s0, self.s1));
        }
        if self.prop < PROB_CLAMP || self.prop > 1.0 - PROB_CLAMP {
            return bad(format!("propensity {} outside clamp", self.prop));
        }
        if pr_d0_s1 < PROB_CLAMP {
            return bad(format!("Pr(D=0,S=1) = {pr_d0_s1} below floor"));
        }
        Ok(())
    }
}

fn lee_parts(obs: &Obs, index: usize) -> Result<(f64, f64, f64)> {
    let d = obs.d[0];
    let s = match obs.s {
        Some(s) => f64::from(u8::from(s)),
        None => {
            return Err(Error::DegenerateCell { index, detail: "selection indicator missing".into() })
        }
    };
    let y = obs.y.unwrap_or(0.0);
    Ok((d, s, y))
}

/// Orthogonal moment for the upper outcome bound in the selection model.
pub fn lee_upper_moment(
    obs: &Obs,
    ev: &LeeEval,
    pr_d0_s1: f64,
    index: usize,
) -> Result<MomentValue> {
    ev.check(index, pr_d0_s1)?;
    let (d, s, y) = lee_parts(obs, index)?;
    let pi0 = 1.0 - ev.prop;
    let ds = d * s;
    let m = ds * y * f64::from(u8::from(y >= ev.t_up)) * pi0 / (pr_d0_s1 * ev.prop);
    let r1 = (1.0 - d) * s / pi0 - ev.s0;
    let r2 = ds / ev.prop - ev.s1;
    let a1 = ev.g1 * r1 / pr_d0_s1;
    let a2 = ev.g2 * r2 / pr_d0_s1;
    let a3 = ev.g3 * ds * (f64::from(u8::from(y <= ev.t_up)) - ev.u_up) / pr_d0_s1;
    let correction = a1 + a2 + a3;
    Ok(MomentValue { g: m + correction, m, correction })
}

/// Orthogonal moment for the lower outcome bound in the selection model.
pub fn lee_lower_moment(
    obs: &Obs,
    ev: &LeeEval,
    pr_d0_s1: f64,
    index: usize,
) -> Result<MomentValue> {
    ev.check(index, pr_d0_s1)?;
    let (d, s, y) = lee_parts(obs, index)?;
    let pi0 = 1.0 - ev.prop;
    let ds = d * s;
    let m = ds * y * f64::from(u8::from(y <= ev.t_lo)) * pi0 / (pr_d0_s1 * ev.prop);
    let r1 = (1.0 - d) * s / pi0 - ev.s0;
    let r2 = ds / ev.prop - ev.s1;
    let a4 = ev.g4 * r1 / pr_d0_s1;
    let a5 = ev.g5 * r2 / pr_d0_s1;
    let a6 = ev.g6 * ds * (f64::from(u8::from(y <= ev.t_lo)) - ev.u_lo) / pr_d0_s1;
    let correction = a4 + a5 + a6;
    Ok(MomentValue { g: m + correction, m, correction })
}

/// Per-observation contributions to the treatment-effect bounds: the
/// outcome-bound moment minus a debiased control-arm mean. The lower-bound
/// correction carries 1/s(0,X)^0 and the upper 1/s(0,X)^2, as displayed in
/// the source derivation.
pub fn lee_ate_moments(
    obs: &Obs,
    ev: &LeeEval,
    pr_d0_s1: f64,
    index: usize,
) -> Result<(f64, f64)> {
    let upper = lee_upper_moment(obs, ev, pr_d0_s1, index)?;
    let lower = lee_lower_moment(obs, ev, pr_d0_s1, index)?;
    let (d, s, y) = lee_parts(obs, index)?;
    let pi0 = 1.0 - ev.prop;
    let control = (1.0 - d) * s * y / (pi0 * ev.s0);
    let resid = (1.0 - d) * s / pi0 - ev.s0;
    let corr_l = ev.control_mean * resid;
    let corr_u = ev.control_mean / (ev.s0 * ev.s0) * resid;
    Ok((lower.g - control - corr_l, upper.g - control - corr_u))
}

// ---------------------------------------------------------------------------
// Orthogonality probe
// ---------------------------------------------------------------------------

/// Which moment the probe differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    PlpOrthogonal,
    PlpNaive,
    ApdOrthogonal,
    ApdNaive,
    LeeUpperOrthogonal,
    LeeUpperNaive,
    LeeLowerOrthogonal,
    LeeLowerNaive,
}

impl MomentKind {
    pub fn is_naive(self) -> bool {
        matches!(self, MomentKind::PlpNaive | MomentKind::ApdNaive | MomentKind::LeeUpperNaive | MomentKind::LeeLowerNaive)
    }
}

/// Which nuisance slot the probe perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbComponent {
    /// PLP first stage eta(X).
    PlpEta,
    /// PLP reduced form gamma(X).
    PlpGamma,
    /// APD density score eta(D,X) (every coordinate shifted).
    ApdEta,
    /// APD reduced form, perturbed as one smooth function of (D,X). The
    /// interval pieces gamma_L and gamma_{U-L} only enter the moment through
    /// this sum gated by a sign that is itself a function of (D, X), so a
    /// smooth direction here is the object the orthogonality statement is
    /// about.
    ApdReducedForm,
    LeeS0,
    LeeS1,
    /// The conditional quantile function, shifted by a bounded function of
    /// (level, X).
    LeeQuantile,
    LeeGamma1,
    LeeGamma2,
    LeeGamma3,
    LeeGamma4,
    LeeGamma5,
    LeeGamma6,
}

/// Direction of a perturbation. Which variant is required depends on the
/// component.
pub enum Direction<'a> {
    /// A bounded function of the covariates.
    OfX(&'a dyn Fn(&ArrayView1<f64>) -> f64),
    /// A bounded function of (D, X) together with its D-gradient.
    OfDx {
        value: &'a dyn Fn(&ArrayView1<f64>, &ArrayView1<f64>) -> f64,
        d_grad: &'a dyn Fn(&ArrayView1<f64>, &ArrayView1<f64>) -> Vec<f64>,
    },
    /// A bounded function of (quantile level, X).
    OfLevelX(&'a dyn Fn(f64, &ArrayView1<f64>) -> f64),
}

pub struct Perturbation<'a> {
    pub component: PerturbComponent,
    pub direction: Direction<'a>,
}

/// Result of the finite-difference orthogonality probe.
#[derive(Debug, Clone, Copy)]
pub struct ProbeResult {
    /// Central-difference estimate of the pathwise derivative at the truth.
    pub derivative: f64,
    /// Curvature estimate (second central difference).
    pub curvature: f64,
    /// Largest residual of a quadratic fit through the five evaluations.
    pub second_order_residual: f64,
    /// Monte Carlo standard error of the derivative estimate.
    pub se: f64,
}

impl ProbeResult {
    /// The acceptance threshold for an orthogonal moment:
    /// 5 * (sampling SE + curvature * h^2).
    pub fn tolerance(&self, h: f64) -> f64 {
        5.0 * (self.se + self.curvature.abs() * h * h)
    }
}

/// Evaluate the sample mean of the chosen moment along the path
/// `xi_0 + r * direction` at r in {-h, -h/2, 0, h/2, h} on oracle nuisances
/// and return the central-difference derivative, curvature, the quadratic
/// fit residual and the derivative's sampling error.
///
/// `freeze_indicator` pins the endpoint-selection indicator at its r = 0
/// value, reproducing the smoothed moment used as a proof device.
pub fn gateaux_probe(
    kind: MomentKind,
    data: &Dataset,
    truth: &DgpTruth,
    direction_q: &[f64],
    perturb: &Perturbation,
    h: f64,
    freeze_indicator: bool,
) -> Result<ProbeResult> {
    if h <= 0.0 {
        return Err(Error::invalid("probe step h must be positive"));
    }
    let n = data.n();
    // The selection-model scale Pr(D=0, S=1) is a constant of the probe.
    let lee_pr = match truth {
        DgpTruth::Lee(_) => {
            let s_col = data
                .s()
                .ok_or_else(|| Error::IncompleteProfile("selection column missing".into()))?;
            (0..n).map(|j| (1.0 - data.d()[[j, 0]]) * f64::from(s_col[j])).sum::<f64>() / n as f64
        }
        _ => f64::NAN,
    };
    let rs = [-h, -h / 2.0, 0.0, h / 2.0, h];
    let mut means = [0.0f64; 5];
    // Per-observation values at +h and -h for the SE of the derivative.
    let mut at_plus = vec![0.0f64; n];
    let mut at_minus = vec![0.0f64; n];

    for (ri, &r) in rs.iter().enumerate() {
        let mut sum = 0.0;
        for i in 0..n {
            let v =
                eval_perturbed(kind, data, truth, direction_q, perturb, r, freeze_indicator, i, lee_pr)?;
            sum += v;
            if ri == 0 {
                at_minus[i] = v;
            }
            if ri == 4 {
                at_plus[i] = v;
            }
        }
        means[ri] = sum / n as f64;
    }

    let derivative = (means[4] - means[0]) / (2.0 * h);
    let curvature = (means[4] - 2.0 * means[2] + means[0]) / (h * h);
    // Least-squares quadratic through the five points; report the largest
    // residual as the measure of non-quadratic (kink) behavior.
    let fit = quad_fit(&rs, &means);
    let mut resid: f64 = 0.0;
    for (i, &r) in rs.iter().enumerate() {
        let f = fit.0 + fit.1 * r + fit.2 * r * r;
        resid = resid.max((means[i] - f).abs());
    }
    let diffs: Vec<f64> = (0..n).map(|i| (at_plus[i] - at_minus[i]) / (2.0 * h)).collect();
    let se = stats::sd(&diffs) / (n as f64).sqrt();
    Ok(ProbeResult { derivative, curvature, second_order_residual: resid, se })
}

fn quad_fit(r: &[f64; 5], f: &[f64; 5]) -> (f64, f64, f64) {
    // Normal equations for f ~ a + b r + c r^2.
    let mut s = [0.0f64; 5];
    for &x in r {
        s[0] += 1.0;
        s[1] += x;
        s[2] += x * x;
        s[3] += x * x * x;
        s[4] += x * x * x * x;
    }
    let (mut t0, mut t1, mut t2) = (0.0, 0.0, 0.0);
    for i in 0..5 {
        t0 += f[i];
        t1 += f[i] * r[i];
        t2 += f[i] * r[i] * r[i];
    }
    let a = ndarray::array![[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let b = ndarray::array![t0, t1, t2];
    match crate::linalg::solve_spd(&a.view(), &b.view()) {
        Ok(sol) => (sol[0], sol[1], sol[2]),
        Err(_) => (f[2], 0.0, 0.0),
    }
}

#[allow(clippy::too_many_arguments)]
fn eval_perturbed(
    kind: MomentKind,
    data: &Dataset,
    truth: &DgpTruth,
    direction_q: &[f64],
    perturb: &Perturbation,
    r: f64,
    freeze_indicator: bool,
    i: usize,
    lee_pr: f64,
) -> Result<f64> {
    let obs = data.row(i);
    match kind {
        MomentKind::PlpOrthogonal | MomentKind::PlpNaive => {
            let t = match truth {
                DgpTruth::Plp(t) | DgpTruth::Apd(t) => t,
                _ => return Err(Error::invalid("plp probe needs an interval DGP")),
            };
            eval_plp_perturbed(kind, &obs, t, direction_q, perturb, r, freeze_indicator)
        }
        MomentKind::ApdOrthogonal | MomentKind::ApdNaive => {
            let t = match truth {
                DgpTruth::Plp(t) | DgpTruth::Apd(t) => t,
                _ => return Err(Error::invalid("apd probe needs an interval DGP")),
            };
            eval_apd_perturbed(kind, &obs, t, direction_q, perturb, r, freeze_indicator)
        }
        MomentKind::LeeUpperOrthogonal
        | MomentKind::LeeUpperNaive
        | MomentKind::LeeLowerOrthogonal
        | MomentKind::LeeLowerNaive => {
            let t = match truth {
                DgpTruth::Lee(t) => t,
                _ => return Err(Error::invalid("lee probe needs a selection DGP")),
            };
            eval_lee_perturbed(kind, &obs, t, perturb, r, i, lee_pr)
        }
    }
}

fn plp_truth_index(t: &PlpTruth, x: &ArrayView1<f64>) -> f64 {
    x.iter().zip(&t.theta).map(|(v, th)| v * th).sum()
}

fn eval_plp_perturbed(
    kind: MomentKind,
    obs: &Obs,
    t: &PlpTruth,
    p: &[f64],
    perturb: &Perturbation,
    r: f64,
    freeze_indicator: bool,
) -> Result<f64> {
    let index = plp_truth_index(t, &obs.x);
    let beta_sum: f64 = t.beta0.iter().sum();
    let gamma0 = index * (1.0 + beta_sum);
    let (mut eta_shift, mut gamma_shift) = (0.0, 0.0);
    match (perturb.component, &perturb.direction) {
        (PerturbComponent::PlpEta, Direction::OfX(f)) => eta_shift = r * f(&obs.x),
        (PerturbComponent::PlpGamma, Direction::OfX(f)) => gamma_shift = r * f(&obs.x),
        _ => return Err(Error::invalid("plp probe needs an OfX direction for eta or gamma")),
    }
    let (yl, yu) = interval(obs)?;
    let mut z = 0.0;
    let mut z0 = 0.0;
    for j in 0..p.len() {
        z += p[j] * (obs.d[j] - index - eta_shift);
        z0 += p[j] * (obs.d[j] - index);
    }
    let z_sel = if freeze_indicator { z0 } else { z };
    let y_p = q_generator(yl, yu, z_sel)?;
    let m = z * y_p;
    if kind.is_naive() {
        return Ok(m);
    }
    Ok(m - z * (gamma0 + gamma_shift))
}

fn eval_apd_perturbed(
    kind: MomentKind,
    obs: &Obs,
    t: &PlpTruth,
    q: &[f64],
    perturb: &Perturbation,
    r: f64,
    freeze_indicator: bool,
) -> Result<f64> {
    let dd = obs.d.len();
    let index = plp_truth_index(t, &obs.x);
    let lam_inv = 1.0 / (t.sigma_v * t.sigma_v);
    let mut eta: Vec<f64> = (0..dd).map(|j| (obs.d[j] - index) * lam_inv).collect();
    let eta0 = eta.clone();
    let mut gamma_l: f64 =
        (0..dd).map(|j| obs.d[j] * t.beta0[j]).sum::<f64>() + index - t.width / 2.0;
    let gamma_ul = t.width;
    let mut dgamma_l = t.beta0.clone();
    let dgamma_ul = vec![0.0; dd];
    match (perturb.component, &perturb.direction) {
        (PerturbComponent::ApdEta, Direction::OfDx { value, .. }) => {
            let shift = r * value(&obs.d, &obs.x);
            for e in eta.iter_mut() {
                *e += shift;
            }
        }
        (PerturbComponent::ApdReducedForm, Direction::OfDx { value, d_grad }) => {
            gamma_l += r * value(&obs.d, &obs.x);
            let g = d_grad(&obs.d, &obs.x);
            for j in 0..dd {
                dgamma_l[j] += r * g[j];
            }
        }
        _ => return Err(Error::invalid("apd probe needs an OfDx direction")),
    }
    let (yl, yu) = interval(obs)?;
    let z: f64 = q.iter().zip(&eta).map(|(a, b)| a * b).sum();
    let z0: f64 = q.iter().zip(&eta0).map(|(a, b)| a * b).sum();
    let z_sel = if freeze_indicator { z0 } else { z };
    let y_q = q_generator(yl, yu, z_sel)?;
    let m = z * y_q;
    if kind.is_naive() {
        return Ok(m);
    }
    let gate = z_sel > 0.0;
    let gamma_q = gamma_l + if gate { gamma_ul } else { 0.0 };
    let mut qdg = 0.0;
    for j in 0..dd {
        qdg += q[j] * (dgamma_l[j] + if gate { dgamma_ul[j] } else { 0.0 });
    }
    Ok(m - z * gamma_q + qdg)
}

fn eval_lee_perturbed(
    kind: MomentKind,
    obs: &Obs,
    t: &LeeTruth,
    perturb: &Perturbation,
    r: f64,
    i: usize,
    pr: f64,
) -> Result<f64> {
    let x = &obs.x;
    let mut s0 = t.s0(x);
    let mut s1 = t.s1(x);
    // Base correction coefficients are always evaluated at the truth; the
    // probe moves one slot at a time.
    let base_p0 = (t.s0(x) / t.s1(x)).min(1.0);
    let base_u_up = (1.0 - base_p0).clamp(LEVEL_FLOOR, 1.0 - LEVEL_FLOOR);
    let base_u_lo = base_p0.clamp(LEVEL_FLOOR, 1.0 - LEVEL_FLOOR);
    let base_t_up = t.quantile_treated(base_u_up, x);
    let base_t_lo = t.quantile_treated(base_u_lo, x);
    let prop = 0.5;
    let pi0 = 1.0 - prop;
    let mut ev = LeeEval {
        s0,
        s1,
        p0: base_p0,
        u_up: base_u_up,
        u_lo: base_u_lo,
        t_up: base_t_up,
        t_lo: base_t_lo,
        prop,
        control_mean: t.location(x),
        g1: base_t_up * pi0,
        g2: -base_t_up * base_p0 * pi0,
        g3: base_t_up * pi0 / prop,
        g4: base_t_lo * pi0,
        g5: -base_t_lo * base_p0 * pi0,
        g6: -base_t_lo * pi0 / prop,
    };

    let of_x = |dir: &Direction| -> Result<f64> {
        match dir {
            Direction::OfX(f) => Ok(f(x)),
            _ => Err(Error::invalid("lee probe component needs an OfX direction")),
        }
    };
    match perturb.component {
        PerturbComponent::LeeS0 => {
            s0 += r * of_x(&perturb.direction)?;
            ev.s0 = s0;
            refresh_levels(&mut ev, s0, s1, t, x);
        }
        PerturbComponent::LeeS1 => {
            s1 += r * of_x(&perturb.direction)?;
            ev.s1 = s1;
            refresh_levels(&mut ev, s0, s1, t, x);
        }
        PerturbComponent::LeeQuantile => match &perturb.direction {
            Direction::OfLevelX(f) => {
                ev.t_up += r * f(ev.u_up, x);
                ev.t_lo += r * f(ev.u_lo, x);
            }
            _ => return Err(Error::invalid("quantile perturbation needs an OfLevelX direction")),
        },
        PerturbComponent::LeeGamma1 => ev.g1 += r * of_x(&perturb.direction)?,
        PerturbComponent::LeeGamma2 => ev.g2 += r * of_x(&perturb.direction)?,
        PerturbComponent::LeeGamma3 => ev.g3 += r * of_x(&perturb.direction)?,
        PerturbComponent::LeeGamma4 => ev.g4 += r * of_x(&perturb.direction)?,
        PerturbComponent::LeeGamma5 => ev.g5 += r * of_x(&perturb.direction)?,
        PerturbComponent::LeeGamma6 => ev.g6 += r * of_x(&perturb.direction)?,
        _ => return Err(Error::invalid("component does not belong to the lee moment")),
    }

    let value = match kind {
        MomentKind::LeeUpperOrthogonal => lee_upper_moment(obs, &ev, pr, i)?.g,
        MomentKind::LeeUpperNaive => lee_upper_moment(obs, &ev, pr, i)?.m,
        MomentKind::LeeLowerOrthogonal => lee_lower_moment(obs, &ev, pr, i)?.g,
        MomentKind::LeeLowerNaive => lee_lower_moment(obs, &ev, pr, i)?.m,
        _ => unreachable!(),
    };
    Ok(value)
}

/// Recompute the trimming share, clamped levels and thresholds after a
/// selection-probability slot moved; the quantile function itself stays at
/// the truth.
fn refresh_levels(ev: &mut LeeEval, s0: f64, s1: f64, t: &LeeTruth, x: &ArrayView1<f64>) {
    let p0 = (s0 / s1).min(1.0);
    ev.p0 = p0;
    ev.u_up = (1.0 - p0).clamp(LEVEL_FLOOR, 1.0 - LEVEL_FLOOR);
    ev.u_lo = p0.clamp(LEVEL_FLOOR, 1.0 - LEVEL_FLOOR);
    ev.t_up = t.quantile_treated(ev.u_up, x);
    ev.t_lo = t.quantile_treated(ev.u_lo, x);
}
