//! Randomized-smoothing certification (ensemble-before and ensemble-after
//! smoothing), soft smoothing and empirical smoothness probes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::argmax;
use crate::fmt::fmt17;
use crate::model::{Classifier, MlpClassifier};
use crate::numstats::{clopper_pearson_lower, fill_gaussian, std_normal_quantile, RngStream};
use crate::{Error, Result};

/// Rows of noisy inputs generated per classifier call.
const NOISE_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingSpec {
    pub sigma: f64,
    /// Selection draws.
    pub n0: u64,
    /// Certification draws.
    pub n: u64,
    pub alpha: f64,
}

impl Default for SmoothingSpec {
    fn default() -> Self {
        Self {
            sigma: 0.25,
            n0: 100,
            n: 10_000,
            alpha: 0.001,
        }
    }
}

impl SmoothingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n0 < 1 || self.n < self.n0 {
            return Err(Error::Config(format!(
                "need 1 <= n0 <= n, got n0={} n={}",
                self.n0, self.n
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationRecord {
    pub id: u64,
    pub label: usize,
    pub prediction: usize,
    /// Stage-two hits of the predicted class.
    pub k: u64,
    pub n: u64,
    pub p_lower: f64,
    /// `σ Φ⁻¹(p_lower)`, or 0 when abstaining.
    pub radius: f64,
    pub abstain: bool,
}

impl CertificationRecord {
    pub fn correct(&self) -> bool {
        self.prediction == self.label
    }

    fn from_counts(id: u64, label: usize, prediction: usize, k: u64, n: u64, spec: &SmoothingSpec) -> Result<Self> {
        let p_lower = clopper_pearson_lower(k, n, spec.alpha)?;
        let abstain = p_lower <= 0.5;
        let radius = if abstain {
            0.0
        } else {
            spec.sigma * std_normal_quantile(p_lower)?
        };
        Ok(Self {
            id,
            label,
            prediction,
            k,
            n,
            p_lower,
            radius,
            abstain,
        })
    }
}

/// Calls `visit` with successive row-major chunks of `x + ε`, `m` rows in total.
fn for_noisy_chunks(x: &[f64], sigma: f64, m: u64, rng: &mut RngStream, mut visit: impl FnMut(&[f64])) {
    let d = x.len();
    let mut buf = vec![0.0; NOISE_CHUNK.min(m as usize) * d];
    let mut left = m as usize;
    while left > 0 {
        let rows = left.min(NOISE_CHUNK);
        let chunk = &mut buf[..rows * d];
        fill_gaussian(rng, sigma, chunk);
        for row in chunk.chunks_exact_mut(d) {
            for (v, xi) in row.iter_mut().zip(x) {
                *v += xi;
            }
        }
        visit(chunk);
        left -= rows;
    }
}

/// Counts of `classify(x + ε)` over `m` draws of `ε ~ N(0, σ² I)`.
pub fn mc_class_frequencies(
    classifier: &dyn Classifier,
    x: &[f64],
    sigma: f64,
    m: u64,
    rng: &mut RngStream,
) -> Result<Vec<u64>> {
    if x.len() != classifier.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: classifier.input_dim(),
            got: x.len(),
        });
    }
    let mut counts = vec![0u64; classifier.num_classes()];
    for_noisy_chunks(x, sigma, m, rng, |chunk| {
        for label in classifier.classify_batch(chunk) {
            counts[label] += 1;
        }
    });
    Ok(counts)
}

fn argmax_count(counts: &[u64]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Certifies the smoothed version of `classifier` (the whole ensemble, when
/// given one): `n0` draws select the candidate class, `n` fresh draws bound it.
pub fn certify_ebs(
    classifier: &dyn Classifier,
    spec: &SmoothingSpec,
    x: &[f64],
    label: usize,
    id: u64,
    rng: &mut RngStream,
) -> Result<CertificationRecord> {
    spec.validate()?;
    let select = mc_class_frequencies(classifier, x, spec.sigma, spec.n0, rng)?;
    let candidate = argmax_count(&select);
    let count = mc_class_frequencies(classifier, x, spec.sigma, spec.n, rng)?;
    CertificationRecord::from_counts(id, label, candidate, count[candidate], spec.n, spec)
}

/// Per-member and aggregate result of ensemble-after-smoothing certification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EasResult {
    pub prediction: usize,
    /// `(max r_i + min r_i) / 2`, clamped at 0.
    pub radius: f64,
    /// Unclamped value.
    pub raw_radius: f64,
    /// `r_i`, negative for members disagreeing with the ensemble prediction.
    pub member_radii: Vec<f64>,
    pub member_predictions: Vec<usize>,
}

/// Smallest probability fed to `Φ⁻¹` for a member radius.
const EAS_P_FLOOR: f64 = 1e-12;

/// Smooths each member separately; the ensemble follows the member with the
/// highest smoothed top-class frequency.
pub fn certify_eas(
    members: &[MlpClassifier],
    spec: &SmoothingSpec,
    x: &[f64],
    rng: &RngStream,
) -> Result<EasResult> {
    spec.validate()?;
    if members.is_empty() {
        return Err(Error::Config("an ensemble needs at least one member".into()));
    }
    let mut predictions = Vec::with_capacity(members.len());
    let mut freq = Vec::with_capacity(members.len());
    let mut p_lower = Vec::with_capacity(members.len());
    for (i, m) in members.iter().enumerate() {
        let mut r = rng.substream(i as u64);
        let select = mc_class_frequencies(m, x, spec.sigma, spec.n0, &mut r)?;
        let c = argmax_count(&select);
        let count = mc_class_frequencies(m, x, spec.sigma, spec.n, &mut r)?;
        predictions.push(c);
        freq.push(select[c] as f64 / spec.n0 as f64);
        p_lower.push(clopper_pearson_lower(count[c], spec.n, spec.alpha)?);
    }
    let leader = argmax(&freq);
    let prediction = predictions[leader];
    let member_radii = predictions
        .iter()
        .zip(&p_lower)
        .map(|(&c, &p)| {
            let r = spec.sigma * std_normal_quantile(p.clamp(EAS_P_FLOOR, 1.0 - EAS_P_FLOOR))?;
            Ok(if c == prediction { r } else { -r })
        })
        .collect::<Result<Vec<_>>>()?;
    let raw_radius = eas_radius(&member_radii);
    Ok(EasResult {
        prediction,
        radius: raw_radius.max(0.0),
        raw_radius,
        member_radii,
        member_predictions: predictions,
    })
}

/// `(max r_i + min r_i) / 2`.
pub fn eas_radius(signed: &[f64]) -> f64 {
    let max = signed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = signed.iter().cloned().fold(f64::INFINITY, f64::min);
    0.5 * (max + min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrategyVerdict {
    EbsHigher,
    EasHigherOrEqual,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyComparison {
    pub verdict: StrategyVerdict,
    /// Ensemble-before-smoothing radius.
    pub r_g: f64,
    /// Ensemble-after-smoothing radius.
    pub r_h: f64,
    /// Threshold on `p` above which ensemble-before-smoothing wins; NaN when undefined.
    pub threshold: f64,
}

/// Compares the two smoothing strategies for a two-member max-margin ensemble.
///
/// `p_a`, `p_b`: members' smoothed probabilities of the true class; `p_ab`:
/// probability that both are correct; `p`: probability the ensemble picks the
/// true class when exactly one member is correct.
pub fn compare_smoothing_strategies(p_a: f64, p_b: f64, p_ab: f64, p: f64, sigma: f64) -> Result<StrategyComparison> {
    for (name, v) in [("p_a", p_a), ("p_b", p_b)] {
        if !(v > 0.5 && v < 1.0) {
            return Err(Error::domain(format!("{name} must lie in (0.5, 1), got {v}")));
        }
    }
    let p_min = p_a.min(p_b);
    if !(p_ab >= 0.0 && p_ab <= p_min) {
        return Err(Error::domain(format!("p_ab must lie in [0, min(p_a, p_b)], got {p_ab}")));
    }
    if p_a + p_b - p_ab > 1.0 {
        return Err(Error::domain("p_a + p_b - p_ab exceeds 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p must lie in [0, 1], got {p}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    let ebs_prob = p_ab + p * (p_a + p_b - 2.0 * p_ab);
    let r_g = if ebs_prob >= 1.0 {
        f64::INFINITY
    } else if ebs_prob <= 0.0 {
        f64::NEG_INFINITY
    } else {
        sigma * std_normal_quantile(ebs_prob)?
    };
    let r_h = 0.5 * sigma * (std_normal_quantile(p_a)? + std_normal_quantile(p_b)?);
    let delta = (p_a - p_b).abs();
    let threshold = if delta > 0.0 {
        0.5 + 1.0 / (2.0 + 4.0 * (p_min - p_ab) / delta)
    } else if p_min > p_ab {
        0.5
    } else {
        f64::NAN
    };
    let verdict = if p > threshold {
        StrategyVerdict::EbsHigher
    } else if p <= 0.5 {
        StrategyVerdict::EasHigherOrEqual
    } else {
        StrategyVerdict::Undetermined
    };
    Ok(StrategyComparison {
        verdict,
        r_g,
        r_h,
        threshold,
    })
}

/// Mean confidence vector of `model` over `m` noisy copies of `x`.
pub fn soft_confidence(model: &MlpClassifier, x: &[f64], sigma: f64, m: u64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::domain("soft_confidence needs at least one draw"));
    }
    if x.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            got: x.len(),
        });
    }
    let c = model.num_classes();
    let mut total = vec![0.0; c];
    let mut result = Ok(());
    for_noisy_chunks(x, sigma, m, rng, |chunk| match model.confidences_batch(chunk) {
        Ok(f) => {
            for row in f.chunks_exact(c) {
                for (t, v) in total.iter_mut().zip(row) {
                    *t += v;
                }
            }
        }
        Err(e) => result = Err(e),
    });
    result?;
    Ok(total.into_iter().map(|t| t / m as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEstimate {
    pub value: f64,
    pub std_error: f64,
    pub h: f64,
}

/// Second difference `(ḡ(x+hu) − 2ḡ(x) + ḡ(x−hu)) / h²` of a soft-smoothed scalar
/// function `ḡ(x) = E f(x + ε)`.
///
/// `f` maps row-major inputs to one value per row. The three evaluations share
/// each noise draw, so the standard error is that of the per-draw differences.
pub fn smoothness_probe(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    u: &[f64],
    h: f64,
    sigma: f64,
    samples: u64,
    rng: &mut RngStream,
) -> Result<SmoothnessEstimate> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("probe step must be positive, got {h}")));
    }
    if u.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: u.len(),
        });
    }
    if samples < 2 {
        return Err(Error::domain("smoothness_probe needs at least two draws"));
    }
    let d = x.len();
    let zero = vec![0.0; d];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut shifted = Vec::new();
    for_noisy_chunks(&zero, sigma, samples, rng, |eps| {
        let rows = eps.len() / d;
        shifted.clear();
        for sign in [1.0, 0.0, -1.0] {
            for e in eps.chunks_exact(d) {
                shifted.extend(e.iter().zip(x).zip(u).map(|((ei, xi), ui)| xi + sign * h * ui + ei));
            }
        }
        let vals = f(&shifted);
        for k in 0..rows {
            let q = (vals[k] - 2.0 * vals[rows + k] + vals[2 * rows + k]) / (h * h);
            sum += q;
            sum_sq += q * q;
        }
    });
    let m = samples as f64;
    let mean = sum / m;
    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(SmoothnessEstimate {
        value: mean,
        std_error: (var / m).sqrt(),
        h,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub radii: Vec<f64>,
    pub certified_accuracy: Vec<f64>,
    /// Average certified radius, counting wrong or abstaining records as 0.
    pub acr: f64,
}

pub fn certified_accuracy_curve(records: &[CertificationRecord], radii: &[f64]) -> Result<AccuracyCurve> {
    if records.is_empty() {
        return Err(Error::domain("no certification records"));
    }
    let n = records.len() as f64;
    let certified_accuracy = radii
        .iter()
        .map(|&r| {
            records
                .iter()
                .filter(|rec| rec.correct() && !rec.abstain && rec.radius >= r)
                .count() as f64
                / n
        })
        .collect();
    let acr = records
        .iter()
        .map(|rec| if rec.correct() && !rec.abstain { rec.radius } else { 0.0 })
        .sum::<f64>()
        / n;
    Ok(AccuracyCurve {
        radii: radii.to_vec(),
        certified_accuracy,
        acr,
    })
}

/// Certifies every row of `xs` with a per-input substream of `rng`, on `jobs`
/// worker threads. Output order follows input order regardless of `jobs`.
pub fn certify_dataset(
    classifier: &dyn Classifier,
    spec: &SmoothingSpec,
    xs: &[Vec<f64>],
    labels: &[usize],
    ids: &[u64],
    rng: &RngStream,
    jobs: usize,
) -> Result<Vec<CertificationRecord>> {
    if xs.len() != labels.len() || xs.len() != ids.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: labels.len().min(ids.len()),
        });
    }
    let work = || {
        (0..xs.len())
            .into_par_iter()
            .map(|i| {
                let mut r = rng.substream(ids[i]);
                certify_ebs(classifier, spec, &xs[i], labels[i], ids[i], &mut r)
            })
            .collect::<Result<Vec<_>>>()
    };
    run_with_jobs(jobs, work)
}

/// Runs `work` on a dedicated pool of `jobs` threads (0 = rayon default).
pub fn run_with_jobs<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    }
}

pub const RECORDS_HEADER: &str = "id,label,prediction,k,n,p_lower,radius,abstain";

pub fn records_to_csv(records: &[CertificationRecord]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.id,
            r.label,
            r.prediction,
            r.k,
            r.n,
            fmt17(r.p_lower),
            fmt17(r.radius),
            u8::from(r.abstain)
        ));
    }
    out
}

/// Parses a records CSV; errors carry the byte offset of the offending line.
pub fn parse_records_csv(bytes: &[u8]) -> Result<Vec<CertificationRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header_err = |offset| Error::parse(offset, format!("expected header `{RECORDS_HEADER}`"));
    let headers = reader.headers().map_err(|_| header_err(0))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != RECORDS_HEADER {
        return Err(header_err(0));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let offset = e.position().map_or(0, |p| p.byte() as usize);
            Error::parse(offset, e.to_string())
        })?;
        let offset = row.position().map_or(0, |p| p.byte() as usize);
        let field = |i: usize| row.get(i).unwrap_or("");
        fn num<T: std::str::FromStr>(s: &str, name: &str, offset: usize) -> Result<T> {
            s.parse()
                .map_err(|_| Error::parse(offset, format!("invalid {name} `{s}`")))
        }
        let abstain = match field(7) {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(offset, format!("invalid abstain flag `{other}`"))),
        };
        let p_lower: f64 = num(field(5), "p_lower", offset)?;
        let radius: f64 = num(field(6), "radius", offset)?;
        if !(0.0..=1.0).contains(&p_lower) || !radius.is_finite() {
            return Err(Error::parse(offset, "p_lower or radius out of range"));
        }
        let k: u64 = num(field(3), "k", offset)?;
        let n: u64 = num(field(4), "n", offset)?;
        if k > n {
            return Err(Error::parse(offset, "k exceeds n"));
        }
        out.push(CertificationRecord {
            id: num(field(0), "id", offset)?,
            label: num(field(1), "label", offset)?,
            prediction: num(field(2), "prediction", offset)?,
            k,
            n,
            p_lower,
            radius,
            abstain,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, FnClassifier, Layer};
    use crate::numstats::std_normal_cdf;

    fn spec(sigma: f64, n: u64) -> SmoothingSpec {
        SmoothingSpec {
            sigma,
            n0: 100,
            n,
            alpha: 0.001,
        }
    }

    #[test]
    fn spec_validation() {
        assert!(SmoothingSpec::default().validate().is_ok());
        assert!(SmoothingSpec { n0: 0, ..Default::default() }.validate().is_err());
        assert!(SmoothingSpec { n: 10, ..Default::default() }.validate().is_err());
        assert!(SmoothingSpec { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(SmoothingSpec { sigma: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn frequency_examples() {
        let constant = FnClassifier::new(2, 3, |_| 2);
        let mut rng = RngStream::new(1, 0);
        assert_eq!(mc_class_frequencies(&constant, &[0.0, 0.0], 1.0, 500, &mut rng).unwrap(), vec![0, 0, 500]);

        let sign = FnClassifier::new(1, 2, |x| usize::from(x[0] >= 0.0));
        let m = 100_000u64;
        let c = mc_class_frequencies(&sign, &[0.0], 0.7, m, &mut rng).unwrap();
        assert_eq!(c.iter().sum::<u64>(), m);
        assert!((c[0] as f64 - m as f64 / 2.0).abs() <= 3.0 * (m as f64).sqrt());

        let linear = FnClassifier::new(2, 2, |x| usize::from(x[0] < 0.0));
        let c = mc_class_frequencies(&linear, &[0.5, 0.0], 0.5, m, &mut rng).unwrap();
        assert!((c[0] as f64 / m as f64 - std_normal_cdf(1.0)).abs() < 0.004);
    }

    #[test]
    fn ebs_always_correct_classifier() {
        let constant = FnClassifier::new(2, 2, |_| 1);
        let mut rng = RngStream::new(2, 0);
        let rec = certify_ebs(&constant, &spec(0.5, 100), &[0.0, 0.0], 1, 0, &mut rng).unwrap();
        assert_eq!(rec.k, 100);
        assert!((rec.p_lower - 0.001f64.powf(0.01)).abs() < 1e-10);
        // Φ⁻¹(0.001^(1/100)) from bisection on Φ.
        assert!((rec.radius - 0.5 * 1.500_475).abs() < 1e-5);
        assert!(!rec.abstain && rec.correct());
    }

    #[test]
    fn ebs_abstains_on_coin_flip() {
        let sign = FnClassifier::new(1, 2, |x| usize::from(x[0] >= 0.0));
        let mut rng = RngStream::new(3, 0);
        let rec = certify_ebs(&sign, &spec(1.0, 1000), &[0.0], 0, 0, &mut rng).unwrap();
        assert!(rec.abstain);
        assert_eq!(rec.radius, 0.0);
    }

    #[test]
    fn ebs_linear_boundary() {
        let linear = FnClassifier::new(2, 2, |x| usize::from(x[0] < 0.0));
        let mut rng = RngStream::new(4, 0);
        let rec = certify_ebs(&linear, &spec(0.5, 100_000), &[0.5, 0.0], 0, 0, &mut rng).unwrap();
        assert!((0.45..=0.50).contains(&rec.radius), "{}", rec.radius);
    }

    #[test]
    fn radius_monotone_in_k() {
        let s = spec(0.5, 1000);
        let mut prev = 0.0;
        for k in (0..=1000).step_by(25) {
            let r = CertificationRecord::from_counts(0, 0, 0, k, 1000, &s).unwrap();
            assert!(r.radius >= prev);
            assert_eq!(r.abstain, r.p_lower <= 0.5);
            assert_eq!(r.radius > 0.0, !r.abstain);
            prev = r.radius;
        }
    }

    #[test]
    fn eas_formula() {
        assert!((eas_radius(&[1.0, 0.5]) - 0.75).abs() < 1e-15);
        assert!((eas_radius(&[1.0, -0.2]) - 0.4).abs() < 1e-15);
    }

    fn linear_model(w: f64) -> MlpClassifier {
        MlpClassifier::from_layers(
            vec![Layer::new(2, 1, vec![w, -w], vec![0.0, 0.0]).unwrap()],
            Activation::Softplus,
        )
        .unwrap()
    }

    #[test]
    fn eas_single_member_matches_ebs() {
        let m = linear_model(3.0);
        let s = spec(0.5, 20_000);
        let x = [0.2];
        let eas = certify_eas(std::slice::from_ref(&m), &s, &x, &RngStream::new(5, 0)).unwrap();
        let mut rng = RngStream::new(6, 0);
        let ebs = certify_ebs(&m, &s, &x, 0, 0, &mut rng).unwrap();
        // Both radii are σΦ⁻¹ of a CP bound with n = 2·10⁴; Φ(0.4) ≈ 0.655.
        let se = 0.5 * (0.655f64 * 0.345 / 20_000.0).sqrt() / crate::numstats::std_normal_pdf(0.4);
        assert!((eas.radius - ebs.radius).abs() < 3.0 * 2f64.sqrt() * se);
        assert_eq!(eas.prediction, ebs.prediction);
    }

    #[test]
    fn eas_radius_below_best_member() {
        let members = vec![linear_model(3.0), linear_model(0.5), linear_model(-1.0)];
        let out = certify_eas(&members, &spec(0.5, 5000), &[0.3], &RngStream::new(7, 0)).unwrap();
        let best = out.member_radii.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(out.raw_radius < best);
        assert!(out.member_radii.iter().any(|&r| r < 0.0));
        assert_eq!(out.radius, out.raw_radius.max(0.0));
    }

    #[test]
    fn strategy_examples() {
        let c = compare_smoothing_strategies(0.8, 0.8, 0.7, 1.0, 1.0).unwrap();
        assert_eq!(c.verdict, StrategyVerdict::EbsHigher);
        assert!((c.r_g - std_normal_quantile(0.9).unwrap()).abs() < 1e-12);
        let c = compare_smoothing_strategies(0.85, 0.8, 0.7, 0.5, 1.0).unwrap();
        assert_eq!(c.verdict, StrategyVerdict::EasHigherOrEqual);
        assert!(c.r_h >= c.r_g);
        // p = 0.6 sits on the threshold 1/2 + 1/(2 + 4·0.1/0.05) = 0.6, where the
        // before-smoothing probability equals p_a and r_G > r_H still holds.
        let c = compare_smoothing_strategies(0.85, 0.8, 0.7, 0.6, 0.5).unwrap();
        assert!((c.threshold - 0.6).abs() < 1e-12);
        assert_ne!(c.verdict, StrategyVerdict::EasHigherOrEqual);
        assert!(c.r_g > c.r_h);
        let inside = compare_smoothing_strategies(0.85, 0.8, 0.7, 0.55, 0.5).unwrap();
        assert_eq!(inside.verdict, StrategyVerdict::Undetermined);
        let direct_g = 0.5 * std_normal_quantile(0.7 + 0.6 * 0.25).unwrap();
        let direct_h = 0.25 * (std_normal_quantile(0.85).unwrap() + std_normal_quantile(0.8).unwrap());
        assert!((c.r_g - direct_g).abs() < 1e-15 && (c.r_h - direct_h).abs() < 1e-15);
        assert!(compare_smoothing_strategies(0.4, 0.8, 0.3, 0.5, 1.0).is_err());
        assert!(compare_smoothing_strategies(0.8, 0.8, 0.9, 0.5, 1.0).is_err());
    }

    #[test]
    fn soft_confidence_cases() {
        let flat = MlpClassifier::from_layers(
            vec![Layer::new(3, 2, vec![0.0; 6], vec![0.1, 0.5, -0.2]).unwrap()],
            Activation::Tanh,
        )
        .unwrap();
        let mut rng = RngStream::new(8, 0);
        let exact = flat.confidences(&[0.0, 0.0]).unwrap();
        let soft = soft_confidence(&flat, &[1.0, 2.0], 0.5, 300, &mut rng).unwrap();
        for (a, b) in soft.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-12);
        }
        let m = linear_model(2.0);
        let soft = soft_confidence(&m, &[0.3], 1e-12, 1, &mut rng).unwrap();
        let direct = m.confidences(&[0.3]).unwrap();
        assert!((soft[0] - direct[0]).abs() < 1e-9);
        assert!((soft.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn soft_confidence_self_consistency() {
        let m = linear_model(2.0);
        let mut rng = RngStream::new(9, 0);
        let small = 20_000u64;
        let a = soft_confidence(&m, &[0.3], 0.5, small, &mut rng).unwrap();
        let b = soft_confidence(&m, &[0.3], 0.5, 10 * small, &mut rng).unwrap();
        // Component 0 is a logistic of a Gaussian; its std is below 0.5.
        let se = 0.5 / (small as f64).sqrt();
        assert!((a[0] - b[0]).abs() < 3.0 * se);
    }

    #[test]
    fn probe_linear_is_flat() {
        let f = |xs: &[f64]| xs.chunks_exact(2).map(|x| 0.3 * x[0] - 0.7 * x[1]).collect::<Vec<_>>();
        let mut rng = RngStream::new(10, 0);
        let est = smoothness_probe(&f, &[0.2, 0.1], &[0.6, 0.8], 0.025, 0.5, 1000, &mut rng).unwrap();
        assert!(est.value.abs() < 1e-9);
    }

    #[test]
    fn curve_examples() {
        let rec = |radius: f64, correct: bool, abstain: bool| CertificationRecord {
            id: 0,
            label: 0,
            prediction: if correct { 0 } else { 1 },
            k: 0,
            n: 1,
            p_lower: 0.9,
            radius,
            abstain,
        };
        let all = vec![rec(1.0, true, false); 4];
        let c = certified_accuracy_curve(&all, &[0.0, 0.5, 1.0, 1.5]).unwrap();
        assert_eq!(c.certified_accuracy, vec![1.0, 1.0, 1.0, 0.0]);
        assert_eq!(c.acr, 1.0);
        let none = vec![rec(0.0, true, true); 3];
        let c = certified_accuracy_curve(&none, &[0.0, 0.5]).unwrap();
        assert_eq!(c.certified_accuracy, vec![0.0, 0.0]);
        assert_eq!(c.acr, 0.0);
        assert!(certified_accuracy_curve(&[], &[0.0]).is_err());

        // Ten mixed records tallied by hand.
        let mixed = vec![
            rec(0.1, true, false),
            rec(0.3, true, false),
            rec(0.5, true, false),
            rec(0.7, false, false),
            rec(0.9, true, false),
            rec(0.0, true, true),
            rec(0.2, false, false),
            rec(1.2, true, false),
            rec(0.25, true, false),
            rec(0.0, false, true),
        ];
        let c = certified_accuracy_curve(&mixed, &[0.0, 0.25, 0.5, 0.75, 1.0]).unwrap();
        assert_eq!(c.certified_accuracy, vec![0.6, 0.5, 0.3, 0.2, 0.1]);
        assert!((c.acr - (0.1 + 0.3 + 0.5 + 0.9 + 1.2 + 0.25) / 10.0).abs() < 1e-15);
    }

    #[test]
    fn dataset_certification_is_deterministic_across_jobs() {
        let m = linear_model(2.0);
        let xs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 0.1 - 0.2]).collect();
        let labels = vec![0; 6];
        let ids: Vec<u64> = (0..6).collect();
        let rng = RngStream::new(11, 0);
        let s = spec(0.25, 500);
        let a = certify_dataset(&m, &s, &xs, &labels, &ids, &rng, 1).unwrap();
        let b = certify_dataset(&m, &s, &xs, &labels, &ids, &rng, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn records_csv_round_trip() {
        let records = vec![
            CertificationRecord {
                id: 3,
                label: 1,
                prediction: 1,
                k: 97,
                n: 100,
                p_lower: 0.1 + 0.7,
                radius: 0.123_456_789_012_345_67,
                abstain: false,
            },
            CertificationRecord {
                id: 4,
                label: 0,
                prediction: 1,
                k: 40,
                n: 100,
                p_lower: 0.3,
                radius: 0.0,
                abstain: true,
            },
        ];
        let text = records_to_csv(&records);
        assert!(text.starts_with("id,label,prediction,k,n,p_lower,radius,abstain\n"));
        assert_eq!(parse_records_csv(text.as_bytes()).unwrap(), records);
    }

    #[test]
    fn records_csv_errors() {
        assert!(matches!(parse_records_csv(b"id,label\n1,2\n"), Err(Error::Parse { offset: 0, .. })));
        let bad = format!("{RECORDS_HEADER}\n1,0,0,5,10,0.5,0.1,0\n2,0,0,5,10,0.5,0.1,7\n");
        match parse_records_csv(bad.as_bytes()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, RECORDS_HEADER.len() + 1 + 21),
            other => panic!("{other:?}"),
        }
        let k_over = format!("{RECORDS_HEADER}\n1,0,0,11,10,0.5,0.1,0\n");
        assert!(parse_records_csv(k_over.as_bytes()).is_err());
    }
}
