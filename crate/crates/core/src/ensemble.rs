//! Weighted (WE) and max-margin (MME) ensembles and their gradient/margin
//! robustness conditions.

use serde::{Deserialize, Serialize};

use crate::model::{Classifier, MlpClassifier, Prediction};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Protocol {
    We { weights: Vec<f64> },
    Mme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    protocol: Protocol,
    members: Vec<MlpClassifier>,
}

impl EnsembleSpec {
    pub fn new(protocol: Protocol, members: Vec<MlpClassifier>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Config("an ensemble needs at least one member".into()))?;
        let (d, c) = (first.input_dim(), first.num_classes());
        for m in &members[1..] {
            if m.input_dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.input_dim(),
                });
            }
            if m.num_classes() != c {
                return Err(Error::DimensionMismatch {
                    expected: c,
                    got: m.num_classes(),
                });
            }
        }
        if let Protocol::We { weights } = &protocol {
            if weights.len() != members.len() {
                return Err(Error::DimensionMismatch {
                    expected: members.len(),
                    got: weights.len(),
                });
            }
            if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                return Err(Error::Config("WE weights must be positive and finite".into()));
            }
        }
        Ok(Self { protocol, members })
    }

    /// Weighted ensemble with equal weights.
    pub fn average(members: Vec<MlpClassifier>) -> Result<Self> {
        let weights = vec![1.0; members.len()];
        Self::new(Protocol::We { weights }, members)
    }

    pub fn max_margin(members: Vec<MlpClassifier>) -> Result<Self> {
        Self::new(Protocol::Mme, members)
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn members(&self) -> &[MlpClassifier] {
        &self.members
    }

    pub fn into_members(self) -> Vec<MlpClassifier> {
        self.members
    }

    pub fn with_protocol(&self, protocol: Protocol) -> Result<Self> {
        Self::new(protocol, self.members.clone())
    }

    pub fn weights(&self) -> Option<&[f64]> {
        match &self.protocol {
            Protocol::We { weights } => Some(weights),
            Protocol::Mme => None,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        match &self.protocol {
            Protocol::We { weights } => we_label(&self.members, weights, x),
            Protocol::Mme => mme_label(&self.members, x),
        }
    }
}

fn we_label(members: &[MlpClassifier], weights: &[f64], x: &[f64]) -> Result<usize> {
    let mut total = vec![0.0; members[0].num_classes()];
    for (m, &w) in members.iter().zip(weights) {
        for (t, f) in total.iter_mut().zip(m.confidences(x)?) {
            *t += w * f;
        }
    }
    Ok(argmax(&total))
}

fn mme_label(members: &[MlpClassifier], x: &[f64]) -> Result<usize> {
    let mut best: Option<Prediction> = None;
    for m in members {
        let p = m.predict(x)?;
        if best.is_none_or(|b| p.margin > b.margin) {
            best = Some(p);
        }
    }
    Ok(best.expect("non-empty ensemble").top)
}

/// Lowest index among the maxima.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `argmax_i Σ_j w_j f_j(x)_i`.
pub fn we_predict(spec: &EnsembleSpec, x: &[f64]) -> Result<usize> {
    match &spec.protocol {
        Protocol::We { weights } => we_label(&spec.members, weights, x),
        Protocol::Mme => Err(Error::usage("we_predict called on an MME ensemble")),
    }
}

/// Prediction of the member with the largest top-vs-runner-up margin.
pub fn mme_predict(spec: &EnsembleSpec, x: &[f64]) -> Result<usize> {
    match spec.protocol {
        Protocol::Mme => mme_label(&spec.members, x),
        Protocol::We { .. } => Err(Error::usage("mme_predict called on a WE ensemble")),
    }
}

impl Classifier for EnsembleSpec {
    fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    fn num_classes(&self) -> usize {
        self.members[0].num_classes()
    }

    fn classify_batch(&self, xs: &[f64]) -> Vec<usize> {
        let c = self.num_classes();
        let confs: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|m| m.confidences_batch(xs).expect("input length is a multiple of the dimension"))
            .collect();
        let n = confs[0].len() / c;
        match &self.protocol {
            Protocol::We { weights } => (0..n)
                .map(|i| {
                    let mut total = vec![0.0; c];
                    for (f, &w) in confs.iter().zip(weights) {
                        for (t, v) in total.iter_mut().zip(&f[i * c..(i + 1) * c]) {
                            *t += w * v;
                        }
                    }
                    argmax(&total)
                })
                .collect(),
            Protocol::Mme => (0..n)
                .map(|i| {
                    let mut best: Option<Prediction> = None;
                    for f in &confs {
                        let p = Prediction::from_confidences(&f[i * c..(i + 1) * c]);
                        if best.is_none_or(|b| p.margin > b.margin) {
                            best = Some(p);
                        }
                    }
                    best.expect("non-empty").top
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictStatus {
    CertifiedRobust,
    CertifiedNotRobust,
    Undetermined,
}

/// One inequality pair for a competing class (or, for MME, a pair of classes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDiagnostic {
    /// Competing class `y_i`; for MME the pair `(y_1, y_2)`.
    pub classes: Vec<usize>,
    /// Norm of the (weighted) gradient sum: the left-hand side.
    pub gradient_norm: f64,
    /// `(1/r) Σ w_j f_j^{y0/y_i}`.
    pub margin_term: f64,
    pub sufficient_rhs: f64,
    pub necessary_rhs: f64,
    pub sufficient_holds: bool,
    pub necessary_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessVerdict {
    pub status: VerdictStatus,
    pub r: f64,
    pub beta: f64,
    pub diagnostics: Vec<ClassDiagnostic>,
    /// Set when the necessary branch rests on a hypothesis that is assumed, not checked.
    pub necessary_hypothesis_assumed: bool,
}

impl RobustnessVerdict {
    fn from_diagnostics(r: f64, beta: f64, diagnostics: Vec<ClassDiagnostic>, assumed: bool) -> Self {
        let status = if diagnostics.iter().all(|d| d.sufficient_holds) {
            VerdictStatus::CertifiedRobust
        } else if diagnostics.iter().any(|d| !d.necessary_holds) {
            VerdictStatus::CertifiedNotRobust
        } else {
            VerdictStatus::Undetermined
        };
        Self {
            status,
            r,
            beta,
            diagnostics,
            necessary_hypothesis_assumed: assumed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EriEntry {
    pub class: usize,
    pub value: f64,
}

/// Ensemble Robustness Indicator values per competing class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EriReport {
    pub r: f64,
    pub entries: Vec<EriEntry>,
    pub min: f64,
}

/// Weighted gradient sum and weighted margin for one competing class.
struct ClassTerms {
    class: usize,
    grad: Vec<f64>,
    margin: f64,
}

fn check_weights(members: &[MlpClassifier], weights: &[f64]) -> Result<()> {
    if members.is_empty() {
        return Err(Error::Config("an ensemble needs at least one member".into()));
    }
    if weights.len() != members.len() {
        return Err(Error::DimensionMismatch {
            expected: members.len(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) || weights.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("weights must be nonnegative with a positive sum".into()));
    }
    Ok(())
}

fn check_r_beta(r: f64, beta: f64) -> Result<()> {
    if !(r > 0.0) {
        return Err(Error::domain(format!("radius must be positive, got {r}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::domain(format!("beta must be nonnegative, got {beta}")));
    }
    Ok(())
}

fn we_terms(members: &[MlpClassifier], weights: &[f64], x0: &[f64], y0: usize) -> Result<Vec<ClassTerms>> {
    check_weights(members, weights)?;
    let c = members[0].num_classes();
    if y0 >= c {
        return Err(Error::InvalidLabel { label: y0, classes: c });
    }
    let d = members[0].input_dim();
    let mut out = Vec::with_capacity(c - 1);
    for y in (0..c).filter(|&y| y != y0) {
        let mut grad = vec![0.0; d];
        let mut margin = 0.0;
        for (m, &w) in members.iter().zip(weights) {
            for (g, v) in grad.iter_mut().zip(m.margin_input_gradient(x0, y0, y)?) {
                *g += w * v;
            }
            margin += w * m.margin(x0, y0, y)?;
        }
        out.push(ClassTerms { class: y, grad, margin });
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `I_{y_i} = ‖Σ w_j ∇f_j^{y0/y_i}‖ / ‖w‖₁ − Σ w_j f_j^{y0/y_i} / (r ‖w‖₁)`.
pub fn eri_we(members: &[MlpClassifier], weights: &[f64], x0: &[f64], y0: usize, r: f64) -> Result<EriReport> {
    check_r_beta(r, 0.0)?;
    let terms = we_terms(members, weights, x0, y0)?;
    let l1: f64 = weights.iter().sum();
    let entries: Vec<EriEntry> = terms
        .iter()
        .map(|t| EriEntry {
            class: t.class,
            value: norm(&t.grad) / l1 - t.margin / (r * l1),
        })
        .collect();
    let min = entries.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
    Ok(EriReport { r, entries, min })
}

/// Gradient and confidence margin conditions for a weighted ensemble.
pub fn check_we_robustness(
    members: &[MlpClassifier],
    weights: &[f64],
    x0: &[f64],
    y0: usize,
    r: f64,
    beta: f64,
) -> Result<RobustnessVerdict> {
    check_r_beta(r, beta)?;
    check_weights(members, weights)?;
    let predicted = we_label(members, weights, x0)?;
    if predicted != y0 {
        return Err(Error::usage(format!(
            "ensemble predicts {predicted} at x0, not {y0}"
        )));
    }
    let wsum: f64 = weights.iter().sum();
    let diagnostics = we_terms(members, weights, x0, y0)?
        .into_iter()
        .map(|t| {
            let gradient_norm = norm(&t.grad);
            let margin_term = t.margin / r;
            let sufficient_rhs = margin_term - beta * r * wsum;
            let necessary_rhs = margin_term + beta * r * wsum;
            ClassDiagnostic {
                classes: vec![t.class],
                gradient_norm,
                margin_term,
                sufficient_rhs,
                necessary_rhs,
                sufficient_holds: gradient_norm <= sufficient_rhs,
                necessary_holds: gradient_norm <= necessary_rhs,
            }
        })
        .collect();
    Ok(RobustnessVerdict::from_diagnostics(r, beta, diagnostics, false))
}

/// Single-model conditions: the weighted case with one member of weight 1.
pub fn check_single_robustness(
    model: &MlpClassifier,
    x0: &[f64],
    y0: usize,
    r: f64,
    beta: f64,
) -> Result<RobustnessVerdict> {
    check_we_robustness(std::slice::from_ref(model), &[1.0], x0, y0, r, beta)
}

/// Conditions for a two-member max-margin ensemble, over all competing pairs.
///
/// The necessary branch assumes each member ranks `y0` first or second
/// throughout the ball; the verdict records that assumption.
pub fn check_mme_robustness(
    members: &[MlpClassifier],
    x0: &[f64],
    y0: usize,
    r: f64,
    beta: f64,
) -> Result<RobustnessVerdict> {
    if members.len() != 2 {
        return Err(Error::Capability(format!(
            "max-margin conditions are stated for exactly 2 members, got {}",
            members.len()
        )));
    }
    check_r_beta(r, beta)?;
    let predicted = mme_label(members, x0)?;
    if predicted != y0 {
        return Err(Error::usage(format!(
            "ensemble predicts {predicted} at x0, not {y0}"
        )));
    }
    let t1 = we_terms(&members[..1], &[1.0], x0, y0)?;
    let t2 = we_terms(&members[1..], &[1.0], x0, y0)?;
    let mut diagnostics = Vec::with_capacity(t1.len() * t2.len());
    for a in &t1 {
        for b in &t2 {
            let sum: Vec<f64> = a.grad.iter().zip(&b.grad).map(|(p, q)| p + q).collect();
            let gradient_norm = norm(&sum);
            let margin_term = (a.margin + b.margin) / r;
            let sufficient_rhs = margin_term - 2.0 * beta * r;
            let necessary_rhs = margin_term + 2.0 * beta * r;
            diagnostics.push(ClassDiagnostic {
                classes: vec![a.class, b.class],
                gradient_norm,
                margin_term,
                sufficient_rhs,
                necessary_rhs,
                sufficient_holds: gradient_norm <= sufficient_rhs,
                necessary_holds: gradient_norm <= necessary_rhs,
            });
        }
    }
    Ok(RobustnessVerdict::from_diagnostics(r, beta, diagnostics, true))
}

/// Largest `r` for which the weighted sufficient condition holds:
/// per class the positive root of `β W r² + G r − M = 0`, minimised over classes.
///
/// Infinite when every class has zero gradient and `β = 0`.
pub fn max_certified_radius_we(
    members: &[MlpClassifier],
    weights: &[f64],
    x0: &[f64],
    y0: usize,
    beta: f64,
) -> Result<f64> {
    check_r_beta(1.0, beta)?;
    check_weights(members, weights)?;
    let predicted = we_label(members, weights, x0)?;
    if predicted != y0 {
        return Err(Error::usage(format!(
            "ensemble predicts {predicted} at x0, not {y0}"
        )));
    }
    let wsum: f64 = weights.iter().sum();
    let terms = we_terms(members, weights, x0, y0)?;
    Ok(terms
        .iter()
        .map(|t| radius_root(norm(&t.grad), t.margin, beta * wsum))
        .fold(f64::INFINITY, f64::min))
}

// positive root of a r² + g r − m = 0, or 0 when m ≤ 0
fn radius_root(g: f64, m: f64, a: f64) -> f64 {
    if m <= 0.0 {
        return 0.0;
    }
    if a == 0.0 {
        return if g == 0.0 { f64::INFINITY } else { m / g };
    }
    // Rationalised form, stable when g² ≫ 4am.
    2.0 * m / (g + (g * g + 4.0 * a * m).sqrt())
}

/// Radius lower bound for a two-member ensemble built from `r`-robust members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRadiusBound {
    /// `C_WE` or `C_MME`.
    pub coefficient: f64,
    pub radius: f64,
    /// `max(R / r, 1)`.
    pub c: f64,
    /// Largest smoothness `β` for which the bound applies; the caller verifies it.
    pub beta_threshold: f64,
}

/// `R = r (1−Δ)/(1+Δ) (1 − C(1 − cos θ))^{−1/2}` for a two-member ensemble.
pub fn ensemble_radius_bound(
    spec: &EnsembleSpec,
    x0: &[f64],
    y0: usize,
    r: f64,
    delta: f64,
    cos_theta: f64,
) -> Result<EnsembleRadiusBound> {
    if spec.members.len() != 2 {
        return Err(Error::Capability("the radius bound is stated for 2 members".into()));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::domain(format!("delta must lie in [0, 1), got {delta}")));
    }
    if !(-1.0..=1.0).contains(&cos_theta) {
        return Err(Error::domain(format!("cos_theta must lie in [-1, 1], got {cos_theta}")));
    }
    check_r_beta(r, 0.0)?;
    let c_classes = spec.members[0].num_classes();
    if y0 >= c_classes {
        return Err(Error::InvalidLabel {
            label: y0,
            classes: c_classes,
        });
    }
    let margins = |m: &MlpClassifier| -> Result<Vec<f64>> {
        (0..c_classes)
            .filter(|&y| y != y0)
            .map(|y| m.margin(x0, y0, y))
            .collect()
    };
    let f1 = margins(&spec.members[0])?;
    let f2 = margins(&spec.members[1])?;
    let ratio = |w1: f64, w2: f64, a: f64, b: f64| -> Result<(f64, f64)> {
        let den = w1 * a + w2 * b;
        if den == 0.0 {
            return Err(Error::domain("both confidence margins are zero"));
        }
        Ok((2.0 * w1 * w2 * a * b / (den * den), a.min(b)))
    };
    let mut coefficient = f64::INFINITY;
    let mut min_margin = f64::INFINITY;
    match &spec.protocol {
        Protocol::We { weights } => {
            for (&a, &b) in f1.iter().zip(&f2) {
                let (cw, mm) = ratio(weights[0], weights[1], a, b)?;
                coefficient = coefficient.min(cw);
                min_margin = min_margin.min(mm);
            }
        }
        Protocol::Mme => {
            for &a in &f1 {
                for &b in &f2 {
                    let (cw, mm) = ratio(1.0, 1.0, a, b)?;
                    coefficient = coefficient.min(cw);
                    min_margin = min_margin.min(mm);
                }
            }
        }
    }
    let inner = 1.0 - coefficient * (1.0 - cos_theta);
    if !(inner > 0.0) {
        return Err(Error::domain(format!("1 - C(1 - cos theta) = {inner} is not positive")));
    }
    let factor = (1.0 - delta) / (1.0 + delta) / inner.sqrt();
    let radius = r * factor;
    let c = factor.max(1.0);
    Ok(EnsembleRadiusBound {
        coefficient,
        radius,
        c,
        beta_threshold: delta * min_margin / (c * c * r * r),
    })
}

/// Every weight vector on the simplex grid with spacing `step`, in lexicographic order.
pub fn simplex_grid(n: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::domain(format!("grid step must lie in (0, 1], got {step}")));
    }
    let k = (1.0 / step).round();
    if ((1.0 / step) - k).abs() > 1e-9 {
        return Err(Error::domain(format!("grid step {step} does not divide 1")));
    }
    let k = k as usize;
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(n);
    fn rec(n: usize, left: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if current.len() == n - 1 {
            current.push(left);
            out.push(current.iter().map(|&c| c as f64 / k as f64).collect());
            current.pop();
            return;
        }
        for c in 0..=left {
            current.push(c);
            rec(n, left - c, k, current, out);
            current.pop();
        }
    }
    rec(n, k, k, &mut current, &mut out);
    Ok(out)
}

const MAX_GRID_MEMBERS: usize = 4;

/// Grid search over simplex weights maximising the mean `β = 0` certified-radius
/// proxy on a labelled sample; mispredicted points contribute 0.
///
/// Grid points may put zero weight on a member, which drops it. Ties go to the
/// first grid point in lexicographic order.
pub fn optimal_weights_grid(
    members: &[MlpClassifier],
    xs: &[Vec<f64>],
    labels: &[usize],
    step: f64,
) -> Result<Vec<f64>> {
    if members.len() > MAX_GRID_MEMBERS {
        return Err(Error::Capability(format!(
            "grid search enumerates at most {MAX_GRID_MEMBERS} members, got {}",
            members.len()
        )));
    }
    if xs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: labels.len(),
        });
    }
    let grid = simplex_grid(members.len(), step)?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for w in grid {
        let score = weight_objective(members, &w, xs, labels)?;
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, w));
        }
    }
    Ok(best.expect("grid is non-empty").1)
}

/// Mean `β = 0` certified radius under weights `w`, 0 for mispredicted points.
pub fn weight_objective(members: &[MlpClassifier], w: &[f64], xs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(labels) {
        if we_label(members, w, x)? == y {
            total += max_certified_radius_we(members, w, x, y, 0.0)?;
        }
    }
    Ok(total / xs.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Layer};
    use crate::numstats::RngStream;

    /// Softmax-linear model with logits `W x + b`.
    fn linear(w: Vec<f64>, b: Vec<f64>) -> MlpClassifier {
        let c = b.len();
        let d = w.len() / c;
        MlpClassifier::from_layers(vec![Layer::new(c, d, w, b).unwrap()], Activation::Softplus).unwrap()
    }

    /// Constant model with the given confidences.
    fn constant(f: &[f64], d: usize) -> MlpClassifier {
        linear(vec![0.0; f.len() * d], f.iter().map(|p| p.ln()).collect())
    }

    fn random(seed: u64) -> MlpClassifier {
        let mut rng = RngStream::new(seed, 11);
        MlpClassifier::init_random(2, &[6], 3, Activation::Softplus, &mut rng).unwrap()
    }

    #[test]
    fn we_example() {
        let spec = EnsembleSpec::average(vec![constant(&[0.6, 0.4], 1), constant(&[0.3, 0.7], 1)]).unwrap();
        assert_eq!(we_predict(&spec, &[0.0]).unwrap(), 1);
        assert!(mme_predict(&spec, &[0.0]).is_err());
    }

    #[test]
    fn mme_example() {
        let spec = EnsembleSpec::max_margin(vec![constant(&[0.6, 0.4], 1), constant(&[0.3, 0.7], 1)]).unwrap();
        assert_eq!(mme_predict(&spec, &[0.0]).unwrap(), 1);
        assert!(we_predict(&spec, &[0.0]).is_err());
        let single = EnsembleSpec::max_margin(vec![random(1)]).unwrap();
        assert_eq!(mme_predict(&single, &[0.3, 0.1]).unwrap(), random(1).predict(&[0.3, 0.1]).unwrap().top);
    }

    #[test]
    fn spec_validation() {
        assert!(EnsembleSpec::new(Protocol::We { weights: vec![1.0, 0.0] }, vec![random(1), random(2)]).is_err());
        assert!(EnsembleSpec::new(Protocol::We { weights: vec![1.0] }, vec![random(1), random(2)]).is_err());
        assert!(EnsembleSpec::max_margin(vec![]).is_err());
        let other = MlpClassifier::zeros(&[3, 3], Activation::Softplus).unwrap();
        assert!(EnsembleSpec::max_margin(vec![random(1), other]).is_err());
    }

    #[test]
    fn protocols_agree_for_single_member_and_scale_invariance() {
        let m = random(3);
        let we = EnsembleSpec::average(vec![m.clone()]).unwrap();
        let mme = EnsembleSpec::max_margin(vec![m.clone()]).unwrap();
        let members = vec![random(4), random(5), random(6)];
        let a = EnsembleSpec::new(Protocol::We { weights: vec![0.2, 0.5, 0.3] }, members.clone()).unwrap();
        let b = EnsembleSpec::new(Protocol::We { weights: vec![2.0, 5.0, 3.0] }, members).unwrap();
        let mut rng = RngStream::new(7, 0);
        for _ in 0..300 {
            let x = [rng.uniform_range(-3.0, 3.0), rng.uniform_range(-3.0, 3.0)];
            let top = m.predict(&x).unwrap().top;
            assert_eq!(we.predict(&x).unwrap(), top);
            assert_eq!(mme.predict(&x).unwrap(), top);
            assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
        }
    }

    #[test]
    fn batched_classification_matches_predict() {
        let members = vec![random(4), random(5), random(6)];
        let mut rng = RngStream::new(8, 0);
        let xs: Vec<f64> = (0..400).map(|_| rng.uniform_range(-3.0, 3.0)).collect();
        for spec in [
            EnsembleSpec::new(Protocol::We { weights: vec![0.2, 0.5, 0.3] }, members.clone()).unwrap(),
            EnsembleSpec::max_margin(members.clone()).unwrap(),
        ] {
            let batch = spec.classify_batch(&xs);
            for (x, &label) in xs.chunks_exact(2).zip(&batch) {
                assert_eq!(spec.predict(x).unwrap(), label);
            }
        }
    }

    #[test]
    fn eri_arithmetic() {
        // Two classes, one input: margin gradient norm 1 and margin 0.5 at x0.
        // f0 - f1 = 0.5 needs f0 = 0.75; logit gap ln 3 at x0 = 0.
        // Gradient of f0 - f1 is 2 f0 f1 (w0 - w1) = 0.375 (w0 - w1).
        let gap = 1.0 / 0.375;
        let m = linear(vec![gap, 0.0], vec![3f64.ln(), 0.0]);
        let rep = eri_we(std::slice::from_ref(&m), &[1.0], &[0.0], 0, 0.25).unwrap();
        assert_eq!(rep.entries.len(), 1);
        assert!((rep.min - (1.0 - 2.0)).abs() < 1e-12, "{}", rep.min);
        let far = eri_we(std::slice::from_ref(&m), &[1.0], &[0.0], 0, 1e12).unwrap();
        assert!((far.min - 1.0).abs() < 1e-9);
    }

    #[test]
    fn eri_gradient_term_matches_finite_differences() {
        let members = vec![random(21), random(22)];
        let w = [0.4, 0.6];
        let x0 = [0.2, -0.3];
        let y0 = we_label(&members, &w, &x0).unwrap();
        let rep = eri_we(&members, &w, &x0, y0, 1e15).unwrap();
        let h = 1e-6;
        for e in &rep.entries {
            let g: Vec<f64> = (0..2)
                .map(|k| {
                    let mut up = x0;
                    up[k] += h;
                    let mut dn = x0;
                    dn[k] -= h;
                    members
                        .iter()
                        .zip(&w)
                        .map(|(m, wj)| wj * (m.margin(&up, y0, e.class).unwrap() - m.margin(&dn, y0, e.class).unwrap()))
                        .sum::<f64>()
                        / (2.0 * h)
                })
                .collect();
            assert!((e.value - norm(&g)).abs() < 1e-8);
        }
    }

    /// Linear two-class model whose margin is 0.5 with unit gradient norm at x0 = 0.
    fn unit_model() -> MlpClassifier {
        linear(vec![1.0 / 0.375, 0.0], vec![3f64.ln(), 0.0])
    }

    #[test]
    fn we_verdict_boundary() {
        let m = vec![unit_model()];
        let v = check_we_robustness(&m, &[1.0], &[0.0], 0, 0.4, 0.0).unwrap();
        assert_eq!(v.status, VerdictStatus::CertifiedRobust);
        let v = check_we_robustness(&m, &[1.0], &[0.0], 0, 0.6, 0.0).unwrap();
        assert_eq!(v.status, VerdictStatus::CertifiedNotRobust);
        let v = check_we_robustness(&m, &[1.0], &[0.0], 0, 0.5, 5.0).unwrap();
        assert_eq!(v.status, VerdictStatus::Undetermined);
        assert!(check_we_robustness(&m, &[1.0], &[0.0], 1, 0.1, 0.0).is_err());
        let json = serde_json::to_string(&v).unwrap();
        assert!(json.contains("\"sufficient_rhs\""));
    }

    #[test]
    fn single_model_cases() {
        let flat = constant(&[0.7, 0.2, 0.1], 2);
        for r in [0.01, 1.0, 100.0] {
            let v = check_single_robustness(&flat, &[0.5, 0.5], 0, r, 0.0).unwrap();
            assert_eq!(v.status, VerdictStatus::CertifiedRobust);
        }
        // Zero margin with a nonzero gradient: on the boundary.
        let edge = linear(vec![1.0, 0.0, -1.0, 0.0], vec![0.0, 0.0]);
        for r in [1e-3, 0.5, 4.0] {
            let v = check_single_robustness(&edge, &[0.0, 0.0], 0, r, 0.0).unwrap();
            assert_eq!(v.status, VerdictStatus::CertifiedNotRobust);
        }
    }

    #[test]
    fn linear_models_are_never_undetermined_without_curvature() {
        let mut rng = RngStream::new(3, 3);
        for _ in 0..50 {
            let w: Vec<f64> = (0..6).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
            let m = linear(w, vec![0.0; 3]);
            let x = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
            let y0 = m.predict(&x).unwrap().top;
            let v = check_single_robustness(&m, &x, y0, rng.uniform_range(0.01, 2.0), 0.0).unwrap();
            assert_ne!(v.status, VerdictStatus::Undetermined);
        }
    }

    #[test]
    fn mme_conditions() {
        let a = unit_model();
        // Identical members: LHS 2‖g‖ against 2·margin/r, boundary at r = 0.5.
        let pair = vec![a.clone(), a.clone()];
        assert_eq!(check_mme_robustness(&pair, &[0.0], 0, 0.49, 0.0).unwrap().status, VerdictStatus::CertifiedRobust);
        assert_eq!(check_mme_robustness(&pair, &[0.0], 0, 0.51, 0.0).unwrap().status, VerdictStatus::CertifiedNotRobust);
        // Opposite gradients cancel.
        let b = linear(vec![-1.0 / 0.375, 0.0], vec![3f64.ln(), 0.0]);
        let v = check_mme_robustness(&[a.clone(), b], &[0.0], 0, 1e6, 0.0).unwrap();
        assert_eq!(v.status, VerdictStatus::CertifiedRobust);
        assert!(v.necessary_hypothesis_assumed);
        assert!(matches!(
            check_mme_robustness(&[a.clone(), a.clone(), a], &[0.0], 0, 0.1, 0.0),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn max_radius_examples_and_self_consistency() {
        let m = vec![unit_model()];
        let r = max_certified_radius_we(&m, &[1.0], &[0.0], 0, 0.0).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        let tiny = max_certified_radius_we(&m, &[1.0], &[0.0], 0, 1e12).unwrap();
        assert!(tiny < 1e-6);

        let members = vec![random(31), random(32)];
        let w = [0.5, 0.5];
        let mut rng = RngStream::new(1, 9);
        for _ in 0..30 {
            let x = [rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0)];
            let y0 = we_label(&members, &w, &x).unwrap();
            for beta in [0.0, 0.3] {
                let r = max_certified_radius_we(&members, &w, &x, y0, beta).unwrap();
                if !(r > 1e-6 && r.is_finite()) {
                    continue;
                }
                let below = check_we_robustness(&members, &w, &x, y0, r - 1e-9, beta).unwrap();
                assert_eq!(below.status, VerdictStatus::CertifiedRobust);
                let above = check_we_robustness(&members, &w, &x, y0, r + 1e-9, beta).unwrap();
                assert_ne!(above.status, VerdictStatus::CertifiedRobust);
            }
        }
    }

    #[test]
    fn more_members_increase_radius() {
        // Two groups whose ensemble gradients are orthogonal; each certified at r = 0.5.
        let g1 = linear(vec![1.0 / 0.375, 0.0, 0.0, 0.0], vec![3f64.ln(), 0.0]);
        let g2 = linear(vec![0.0, 1.0 / 0.375, 0.0, 0.0], vec![3f64.ln(), 0.0]);
        let x = [0.0, 0.0];
        let r1 = max_certified_radius_we(std::slice::from_ref(&g1), &[1.0], &x, 0, 0.0).unwrap();
        let r2 = max_certified_radius_we(std::slice::from_ref(&g2), &[1.0], &x, 0, 0.0).unwrap();
        let both = max_certified_radius_we(&[g1, g2], &[1.0, 1.0], &x, 0, 0.0).unwrap();
        assert!((r1 - 0.5).abs() < 1e-12 && (r2 - 0.5).abs() < 1e-12);
        assert!(both > 0.5);
        assert!((both - 0.5 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn radius_bound_examples() {
        // Margins f1 = f2 = 0.5 with equal weights: C = 1/2.
        let a = constant(&[0.75, 0.25], 1);
        let spec = EnsembleSpec::average(vec![a.clone(), a.clone()]).unwrap();
        let b = ensemble_radius_bound(&spec, &[0.0], 0, 1.0, 0.0, 0.0).unwrap();
        assert!((b.coefficient - 0.5).abs() < 1e-12);
        assert!((b.radius - 2f64.sqrt()).abs() < 1e-12);
        let b = ensemble_radius_bound(&spec, &[0.0], 0, 1.0, 0.0, 1.0).unwrap();
        assert!((b.radius - 1.0).abs() < 1e-12);

        // Margins 0.2 and 0.6.
        let m1 = constant(&[0.6, 0.4], 1);
        let m2 = constant(&[0.8, 0.2], 1);
        let spec = EnsembleSpec::average(vec![m1, m2]).unwrap();
        let b = ensemble_radius_bound(&spec, &[0.0], 0, 2.0, 0.0, 0.0).unwrap();
        assert!((b.coefficient - 0.375).abs() < 1e-12);
        let expected = 2.0 / (1.0f64 - 0.375).sqrt();
        assert!((b.radius - expected).abs() < 1e-12);
        assert!((b.radius / 2.0 - 1.2649).abs() < 1e-4);
        assert_eq!(b.beta_threshold, 0.0);

        let b = ensemble_radius_bound(&spec, &[0.0], 0, 2.0, 0.1, 0.0).unwrap();
        let c = b.c;
        assert!((b.beta_threshold - 0.1 * 0.2 / (c * c * 4.0)).abs() < 1e-15);

        let flat = constant(&[0.5, 0.5], 1);
        let spec = EnsembleSpec::average(vec![flat.clone(), flat]).unwrap();
        assert!(ensemble_radius_bound(&spec, &[0.0], 0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn grid_enumeration() {
        let g = simplex_grid(2, 0.5).unwrap();
        assert_eq!(g, vec![vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
        // C(10 + 2, 2) points for three members at step 0.1.
        assert_eq!(simplex_grid(3, 0.1).unwrap().len(), 66);
        assert!(simplex_grid(2, 0.3).is_err());
    }

    #[test]
    fn grid_search_cases() {
        let mut rng = RngStream::new(4, 4);
        let xs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)]).collect();

        // Identical members: any grid point achieves the uniform objective.
        let m = random(41);
        let labels: Vec<usize> = xs.iter().map(|x| m.predict(x).unwrap().top).collect();
        let pair = vec![m.clone(), m.clone()];
        let w = optimal_weights_grid(&pair, &xs, &labels, 0.1).unwrap();
        let best = weight_objective(&pair, &w, &xs, &labels).unwrap();
        let uniform = weight_objective(&pair, &[0.5, 0.5], &xs, &labels).unwrap();
        assert!((best - uniform).abs() < 1e-12);

        // A member that is constantly wrong gets the smallest grid weight.
        let xs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.uniform_range(0.1, 1.0), rng.uniform_range(-1.0, 1.0)]).collect();
        let labels = vec![0; xs.len()];
        let good = linear(vec![2.0, 0.0, -2.0, 0.0], vec![0.0, 0.0]);
        let wrong = constant(&[0.2, 0.8], 2);
        let members = vec![good, wrong];
        let w = optimal_weights_grid(&members, &xs, &labels, 0.1).unwrap();
        let grid = simplex_grid(2, 0.1).unwrap();
        let oracle = grid
            .iter()
            .map(|g| weight_objective(&members, g, &xs, &labels).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(weight_objective(&members, &w, &xs, &labels).unwrap(), oracle);
        assert_eq!(w[1], 0.0);

        let many = vec![random(1); 5];
        assert!(matches!(optimal_weights_grid(&many, &xs, &labels, 0.5), Err(Error::Capability(_))));
    }
}
