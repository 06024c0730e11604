//! Statistical robustness model for ensembles: statistical margins, closed-form
//! lower bounds, WE-vs-MME comparison thresholds, transferability simulations
//! and the λ-proxy estimator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleSpec;
use crate::fmt::fmt17;
use crate::numstats::{fill_gaussian, std_normal_quantile, RngStream};
use crate::{Error, Result};

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` before the radius map.
pub const P_CLAMP: f64 = 1e-6;

const DENOM_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ConfidenceDistribution {
    Uniform { a: f64, b: f64 },
    /// `s_f` is the standard deviation of the minimum of the N confidences.
    Symmetric { mu: f64, s: f64, s_f: f64 },
}

impl ConfidenceDistribution {
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { a, b } => 0.5 * (a + b),
            Self::Symmetric { mu, .. } => mu,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Uniform { a, b } => {
                if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a >= b {
                    return Err(Error::domain(format!("uniform support needs 0 <= a < b <= 1, got [{a}, {b}]")));
                }
            }
            Self::Symmetric { mu, s, s_f } => {
                if !(0.0..=1.0).contains(&mu) || !(s >= 0.0) || !(s_f >= 0.0) {
                    return Err(Error::domain(format!(
                        "symmetric model needs mu in [0,1] and nonnegative spreads, got mu={mu} s={s} s_f={s_f}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginModel {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub p: f64,
    pub n: usize,
    /// WE weights; `None` means equal weights.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub distribution: ConfidenceDistribution,
}

impl MarginModel {
    pub fn validate(&self) -> Result<()> {
        for (name, l) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive, got {l}")));
            }
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::domain(format!("p must lie in [0,1], got {}", self.p)));
        }
        if self.n == 0 {
            return Err(Error::domain("N must be at least 1"));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    got: w.len(),
                });
            }
            if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::domain("weights must be nonnegative with positive sum"));
            }
        }
        self.distribution.validate()
    }

    /// ‖w‖₂² / ‖w‖₁², which is 1/N for equal weights.
    pub fn d_w(&self) -> f64 {
        match &self.weights {
            None => 1.0 / self.n as f64,
            Some(w) => {
                let l1: f64 = w.iter().sum();
                w.iter().map(|x| x * x).sum::<f64>() / (l1 * l1)
            }
        }
    }
}

/// `(1 + λ⁻¹)⁻¹`, the confidence level a single wrong class can reach.
pub fn confidence_threshold(lambda: f64) -> f64 {
    lambda / (1.0 + lambda)
}

/// Variance of the minimum of `n` i.i.d. U[a, b] variables.
pub fn var_min_uniform(n: usize, a: f64, b: f64) -> Result<f64> {
    if n == 0 || !(a < b) {
        return Err(Error::domain(format!("need n >= 1 and a < b, got n={n} [{a}, {b}]")));
    }
    let n = n as f64;
    Ok((1.0 / (n + 1.0)) * (2.0 / (n + 2.0) - 1.0 / (n + 1.0)) * (b - a) * (b - a))
}

/// `c_N` from the uniform MME bound.
pub fn c_n(n: usize) -> f64 {
    let n = n as f64;
    (2.0 / (n + 1.0)) * (2.0 / (n + 2.0) - 1.0 / (n + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatMargins {
    pub x1: f64,
    pub x2: f64,
}

/// Statistical margins for true-class confidences `u` and WE weights `w`.
pub fn stat_margins(u: &[f64], w: &[f64], lambda1: f64, lambda2: f64) -> Result<StatMargins> {
    if u.is_empty() || u.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: w.len(),
        });
    }
    let l1: f64 = w.iter().map(|x| x.abs()).sum();
    let dot: f64 = u.iter().zip(w).map(|(a, b)| a * b).sum();
    let max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = u.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(StatMargins {
        x1: (1.0 + lambda1) * dot - lambda1 * l1,
        x2: (1.0 + lambda2) * (max + min) - 2.0 * lambda2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub raw: f64,
    /// `raw` clamped to [0, 1].
    pub clamped: f64,
}

impl BoundValue {
    fn new(raw: f64) -> Self {
        Self {
            raw,
            clamped: raw.clamp(0.0, 1.0),
        }
    }
}

fn require_above(mu: f64, lambda: f64, name: &str) -> Result<f64> {
    let t = confidence_threshold(lambda);
    if mu > t {
        Ok(t)
    } else {
        Err(Error::domain(format!(
            "mean confidence {mu} must exceed (1 + 1/{name})^-1 = {t}"
        )))
    }
}

pub fn bound_single(model: &MarginModel) -> Result<BoundValue> {
    model.validate()?;
    let t3 = confidence_threshold(model.lambda3);
    let raw = match model.distribution {
        ConfidenceDistribution::Uniform { a, b } => 1.0 - model.p - ((t3 - a) / (b - a)).clamp(0.0, 1.0),
        ConfidenceDistribution::Symmetric { mu, s, .. } => {
            let t3 = require_above(mu, model.lambda3, "lambda3")?;
            1.0 - model.p - s * s / (2.0 * (mu - t3).powi(2))
        }
    };
    Ok(BoundValue::new(raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeBounds {
    /// Second-moment bound: Chebyshev-type for symmetric confidences, the
    /// order-statistics form for uniform ones.
    pub variance: BoundValue,
    pub mcdiarmid: BoundValue,
    pub best: BoundValue,
}

pub fn bound_we(model: &MarginModel) -> Result<WeBounds> {
    model.validate()?;
    let mu = model.distribution.mean();
    let t1 = require_above(mu, model.lambda1, "lambda1")?;
    let d_w = model.d_w();
    let variance = match model.distribution {
        ConfidenceDistribution::Uniform { a, b } => {
            let k1 = (b - a) / (mu - t1);
            1.0 - model.p - d_w * k1 * k1 / 12.0
        }
        ConfidenceDistribution::Symmetric { s, .. } => 1.0 - model.p - d_w * s * s / (2.0 * (mu - t1).powi(2)),
    };
    let mcdiarmid = 1.0 - model.p - (-2.0 * (mu - t1).powi(2) / d_w).exp();
    Ok(WeBounds {
        variance: BoundValue::new(variance),
        mcdiarmid: BoundValue::new(mcdiarmid),
        best: BoundValue::new(variance.max(mcdiarmid)),
    })
}

pub fn bound_mme(model: &MarginModel) -> Result<BoundValue> {
    model.validate()?;
    let mu = model.distribution.mean();
    let t2 = require_above(mu, model.lambda2, "lambda2")?;
    let raw = match model.distribution {
        ConfidenceDistribution::Uniform { a, b } => {
            let k2 = (b - a) / (mu - t2);
            1.0 - model.p - c_n(model.n) * k2 * k2 / 4.0
        }
        ConfidenceDistribution::Symmetric { s_f, .. } => 1.0 - model.p - s_f * s_f / (2.0 * (mu - t2).powi(2)),
    };
    Ok(BoundValue::new(raw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComparisonVerdict {
    WeHigher,
    MmeHigher,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// λ₁/λ₂ below this: WE bound is higher for any weights.
    pub we_higher: f64,
    /// λ₁/λ₂ above this: MME bound is higher for any weights.
    pub mme_higher: f64,
    /// Uniform case only: for N above this MME is never below WE.
    pub n_threshold: Option<f64>,
}

impl Thresholds {
    pub fn verdict(&self, lambda_ratio: f64) -> ComparisonVerdict {
        if lambda_ratio < self.we_higher {
            ComparisonVerdict::WeHigher
        } else if lambda_ratio > self.mme_higher {
            ComparisonVerdict::MmeHigher
        } else {
            ComparisonVerdict::Undetermined
        }
    }
}

fn ratio_threshold(c_inv: f64, mu: f64, lambda2: f64) -> f64 {
    let t2 = confidence_threshold(lambda2);
    (1.0 / (c_inv * (mu - t2) + 1.0 - mu) - 1.0) / lambda2
}

/// Smallest real N above which the uniform MME bound dominates for any λ₁.
pub fn n_threshold(mu: f64, lambda2: f64) -> Result<f64> {
    require_above(mu, lambda2, "lambda2")?;
    Ok(6.0 * (1.0 - 1.0 / (mu * (1.0 + 1.0 / lambda2))).powi(-2) - 2.0)
}

pub fn comparison_thresholds(model: &MarginModel) -> Result<Thresholds> {
    model.validate()?;
    let mu = model.distribution.mean();
    require_above(mu, model.lambda1, "lambda1")?;
    require_above(mu, model.lambda2, "lambda2")?;
    let n = model.n as f64;
    let (we_c, mme_c, n_thr) = match model.distribution {
        ConfidenceDistribution::Symmetric { s, s_f, .. } => {
            if !(s_f < s) {
                return Err(Error::domain(format!("comparison needs s_f < s, got s_f={s_f} s={s}")));
            }
            (s / s_f, s / (n.sqrt() * s_f), None)
        }
        ConfidenceDistribution::Uniform { .. } => (
            (n + 1.0) * ((n + 2.0) / (6.0 * n)).sqrt(),
            ((n + 1.0) / n) * ((n + 2.0) / 6.0).sqrt(),
            Some(n_threshold(mu, model.lambda2)?),
        ),
    };
    Ok(Thresholds {
        we_higher: ratio_threshold(we_c, mu, model.lambda2),
        mme_higher: ratio_threshold(mme_c, mu, model.lambda2),
        n_threshold: n_thr,
    })
}

/// `σΦ⁻¹(p)` with `p` clamped to `[P_CLAMP, 1 - P_CLAMP]`; the flag reports
/// whether clamping happened.
pub fn probability_to_radius(p: f64, sigma: f64) -> Result<(f64, bool)> {
    let c = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    Ok((sigma * std_normal_quantile(c)?, c != p))
}

/// Certified radius implied by a (possibly loose) lower bound: bounds at or
/// below 1/2 certify nothing.
pub fn bound_to_radius(bound: f64, sigma: f64) -> Result<f64> {
    if bound <= 0.5 {
        return Ok(0.0);
    }
    Ok(probability_to_radius(bound, sigma)?.0.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub lambda1: f64,
    pub bound_we: f64,
    pub bound_mme: f64,
    pub radius_we: f64,
    pub radius_mme: f64,
}

/// Evaluates the variance-type WE and MME bounds of `base` across `ns` and
/// `lambda1s`. Bounds whose preconditions fail are reported as 0.
pub fn bound_sweep(base: &MarginModel, ns: &[usize], lambda1s: &[f64], sigma: f64) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(ns.len() * lambda1s.len());
    for &n in ns {
        for &lambda1 in lambda1s {
            let m = MarginModel {
                n,
                lambda1,
                weights: None,
                ..base.clone()
            };
            m.validate()?;
            let we = bound_we(&m).map(|b| b.variance.clamped).unwrap_or(0.0);
            let mme = bound_mme(&m).map(|b| b.clamped).unwrap_or(0.0);
            rows.push(SweepRow {
                n,
                lambda1,
                bound_we: we,
                bound_mme: mme,
                radius_we: bound_to_radius(we, sigma)?,
                radius_mme: bound_to_radius(mme, sigma)?,
            });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "n,lambda1,bound_we,bound_mme,radius_we,radius_mme";

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n,
            fmt17(r.lambda1),
            fmt17(r.bound_we),
            fmt17(r.bound_mme),
            fmt17(r.radius_we),
            fmt17(r.radius_mme)
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub lambda2: f64,
    /// Half-open sampling range for λ₁.
    pub lambda1_range: (f64, f64),
    pub n: usize,
    pub trials: usize,
    /// Inner Monte-Carlo draws per trial.
    pub inner: usize,
    pub sigma: f64,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            lambda2: 0.95,
            lambda1_range: (0.8, 0.95),
            n: 10,
            trials: 2000,
            inner: 1000,
            sigma: 0.25,
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferTrial {
    pub trial: usize,
    pub lambda_ratio: f64,
    pub a: f64,
    pub b: f64,
    pub p_we: f64,
    pub p_mme: f64,
    pub radius_we: f64,
    pub radius_mme: f64,
    pub diff: f64,
    /// Either probability was clamped before the radius map.
    pub clamped: bool,
}

/// Runs independent trials, each on substream `trial` of `rng`. Output is
/// ordered by trial index.
pub fn simulate_transferability(config: &TransferConfig, rng: &RngStream) -> Result<Vec<TransferTrial>> {
    let (lo, hi) = config.lambda1_range;
    if config.trials == 0 || config.inner == 0 || config.n == 0 {
        return Err(Error::domain("trials, inner draws and N must all be positive"));
    }
    if !(lo > 0.0 && lo <= hi) || !(config.lambda2 > 0.0) || !(config.sigma > 0.0) {
        return Err(Error::domain("need 0 < lambda1 range, lambda2 > 0 and sigma > 0"));
    }
    let w = match &config.weights {
        Some(w) if w.len() != config.n => {
            return Err(Error::DimensionMismatch {
                expected: config.n,
                got: w.len(),
            })
        }
        Some(w) => w.clone(),
        None => vec![1.0 / config.n as f64; config.n],
    };
    (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng.substream(trial as u64);
            let lambda1 = if hi > lo { r.uniform_range(lo, hi) } else { lo };
            let a = r.uniform_range(0.3, 1.0);
            let b = r.uniform_range(a, 1.0);
            let mut u = vec![0.0; config.n];
            let (mut hit_we, mut hit_mme) = (0usize, 0usize);
            for _ in 0..config.inner {
                for v in u.iter_mut() {
                    *v = a + (b - a) * r.uniform();
                }
                let m = stat_margins(&u, &w, lambda1, config.lambda2)?;
                hit_we += (m.x1 >= 0.0) as usize;
                hit_mme += (m.x2 >= 0.0) as usize;
            }
            let p_we = hit_we as f64 / config.inner as f64;
            let p_mme = hit_mme as f64 / config.inner as f64;
            let (radius_we, c1) = probability_to_radius(p_we, config.sigma)?;
            let (radius_mme, c2) = probability_to_radius(p_mme, config.sigma)?;
            Ok(TransferTrial {
                trial,
                lambda_ratio: lambda1 / config.lambda2,
                a,
                b,
                p_we,
                p_mme,
                radius_we,
                radius_mme,
                diff: radius_mme - radius_we,
                clamped: c1 || c2,
            })
        })
        .collect()
}

pub const TRANSFER_HEADER: &str = "trial,lambda_ratio,a,b,p_we,p_mme,radius_we,radius_mme,diff";

pub fn transfer_to_csv(trials: &[TransferTrial]) -> String {
    let mut out = String::from(TRANSFER_HEADER);
    out.push('\n');
    for t in trials {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            t.trial,
            fmt17(t.lambda_ratio),
            fmt17(t.a),
            fmt17(t.b),
            fmt17(t.p_we),
            fmt17(t.p_mme),
            fmt17(t.radius_we),
            fmt17(t.radius_mme),
            fmt17(t.diff)
        ));
    }
    out
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation; 0 when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::domain("spearman needs two equal-length samples of size >= 2"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Mann-Whitney AUC: fraction of (positive, negative) pairs ordered correctly,
/// ties counting 1/2.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::domain("roc_auc needs both positive and negative labels"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaProxies {
    pub lambda1: f64,
    pub lambda2: f64,
    pub se1: f64,
    pub se2: f64,
    /// Mean and standard deviation of the true-class confidences over members
    /// and draws, and standard deviation of their per-draw minimum.
    pub mu: f64,
    pub s: f64,
    pub s_f: f64,
}

/// Monte-Carlo estimates of the average confidence portion taken by the
/// strongest wrong class, for the weighted average (λ₁) and the worst member
/// (λ₂). Equal weights are used unless the ensemble carries WE weights.
pub fn lambda_proxies(
    spec: &EnsembleSpec,
    x0: &[f64],
    y0: usize,
    sigma: f64,
    m: usize,
    rng: &mut RngStream,
) -> Result<LambdaProxies> {
    let members = spec.members();
    let (d, c) = (members[0].input_dim(), members[0].num_classes());
    if x0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x0.len(),
        });
    }
    if y0 >= c {
        return Err(Error::InvalidLabel { label: y0, classes: c });
    }
    if m == 0 || !(sigma >= 0.0) {
        return Err(Error::domain("lambda_proxies needs m >= 1 and sigma >= 0"));
    }
    let w = spec.weights().map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; members.len()]);
    let mut xs = vec![0.0; m * d];
    fill_gaussian(rng, sigma, &mut xs);
    for row in xs.chunks_mut(d) {
        for (v, x) in row.iter_mut().zip(x0) {
            *v += x;
        }
    }
    let probs = members
        .iter()
        .map(|mem| mem.confidences_batch(&xs))
        .collect::<Result<Vec<_>>>()?;
    let (mut l1, mut l2) = (Vec::with_capacity(m), Vec::with_capacity(m));
    let mut true_conf = Vec::with_capacity(m * members.len());
    let mut mins = Vec::with_capacity(m);
    let mut num = vec![0.0; c];
    for s in 0..m {
        num.iter_mut().for_each(|v| *v = 0.0);
        let mut den = 0.0;
        let mut worst = f64::NEG_INFINITY;
        let mut min_true = f64::INFINITY;
        for (pi, wi) in probs.iter().zip(&w) {
            let f = &pi[s * c..(s + 1) * c];
            true_conf.push(f[y0]);
            min_true = min_true.min(f[y0]);
            for (acc, v) in num.iter_mut().zip(f) {
                *acc += wi * v;
            }
            den += wi * (1.0 - f[y0]);
            let top_wrong = (0..c).filter(|&j| j != y0).map(|j| f[j]).fold(0.0, f64::max);
            worst = worst.max(top_wrong / (1.0 - f[y0]).max(DENOM_FLOOR));
        }
        let top_wrong = (0..c).filter(|&j| j != y0).map(|j| num[j]).fold(0.0, f64::max);
        l1.push(top_wrong / den.max(DENOM_FLOOR));
        l2.push(worst);
        mins.push(min_true);
    }
    let (lambda1, se1) = mean_se(&l1);
    let (lambda2, se2) = mean_se(&l2);
    let (mu, s) = mean_sd(&true_conf);
    let (_, s_f) = mean_sd(&mins);
    Ok(LambdaProxies {
        lambda1,
        lambda2,
        se1,
        se2,
        mu,
        s,
        s_f,
    })
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let (mean, sd) = mean_sd(v);
    (mean, sd / (v.len() as f64).sqrt())
}
