//! Gaussian-augmented ensemble training with the DRT regularizers and the
//! ADP/GAL baselines.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::mlp::{cross_entropy_node, MlpForward, MlpParams};
use crate::autodiff::{Graph, NodeId, Tensor};
use crate::data::Dataset;
use crate::fmt::fmt17;
use crate::model::{MlpClassifier, Prediction};
use crate::numstats::{fill_gaussian, RngStream};
use crate::{Error, Result};

/// Added inside the log of the ADP determinant term.
pub const ADP_LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Variant {
    /// ρ₁·GD + ρ₂·CM summed over valid pairs.
    DrtPairwise,
    /// ρ₁·GD + ρ₂·CM over the whole ensemble, only when every member is correct.
    DrtAggregate,
    GdOnly,
    CmOnly,
    /// `alpha·H(mean f) + beta·log(ED + floor)`, added as is.
    Adp { alpha: f64, beta: f64 },
    /// GAL term weighted by ρ₁.
    Gal,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    /// Epochs between decays; 0 disables decay.
    pub period: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub rho1: f64,
    pub rho2: f64,
    pub variant: Variant,
    pub sigma: f64,
    pub k_noise: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub lr_decay: LrDecay,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            rho1: 0.0,
            rho2: 0.0,
            variant: Variant::None,
            sigma: 0.25,
            k_noise: 2,
            epochs: 10,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            lr_decay: LrDecay { period: 0, factor: 1.0 },
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("sigma", self.sigma),
            ("lr", self.lr),
            ("momentum", self.momentum),
            ("lr_decay.factor", self.lr_decay.factor),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        if self.k_noise == 0 || self.batch_size == 0 {
            return Err(Error::Config("k_noise and batch_size must be at least 1".into()));
        }
        if let Variant::Adp { alpha, beta } = self.variant {
            if !(alpha.is_finite() && beta.is_finite()) {
                return Err(Error::Config("ADP coefficients must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub velocity: Vec<Vec<f64>>,
    pub step: u64,
}

/// `v ← momentum·v + g`, `p ← p − lr·v` for every parameter tensor.
pub fn sgd_momentum_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: grads.len(),
        });
    }
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
    }
    if state.velocity.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: state.velocity.len(),
            got: params.len(),
        });
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        if p.len() != g.len() || p.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                got: g.len().min(v.len()),
            });
        }
        for ((pk, gk), vk) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *vk = momentum * *vk + gk;
            *pk -= lr * *vk;
        }
    }
    state.step += 1;
    Ok(())
}

/// One member's parameter leaves and forward pass inside a graph.
#[derive(Debug, Clone)]
pub struct MemberNodes {
    pub params: MlpParams,
    pub fwd: MlpForward,
}

impl MemberNodes {
    pub fn new(graph: &mut Graph, model: &MlpClassifier, input: NodeId) -> Result<Self> {
        let params = MlpParams::register(graph, model);
        let fwd = params.forward(graph, input)?;
        Ok(Self { params, fwd })
    }

    /// Prediction at the current node values.
    pub fn prediction(&self, graph: &Graph) -> Prediction {
        Prediction::from_confidences(graph.value(self.fwd.probs).data())
    }

    /// `∇ₓ (f_{y0} − f_{runner-up})`, the runner-up taken from the current values.
    fn margin_gradient(&self, graph: &mut Graph, y0: usize) -> Result<NodeId> {
        let r = self.prediction(graph).runner_up;
        self.params.input_gradient_node(graph, &self.fwd, y0, r)
    }

    /// `f_{runner-up} − f_{y0}`.
    fn negative_margin(&self, graph: &mut Graph, y0: usize) -> Result<NodeId> {
        let r = self.prediction(graph).runner_up;
        let a = graph.select(self.fwd.probs, r)?;
        let b = graph.select(self.fwd.probs, y0)?;
        graph.sub(a, b)
    }

    fn is_correct(&self, graph: &Graph, y0: usize) -> bool {
        self.prediction(graph).top == y0
    }
}

/// `−log f_{y0}` of one member.
pub fn std_loss(graph: &mut Graph, member: &MemberNodes, y0: usize) -> Result<NodeId> {
    cross_entropy_node(graph, &member.fwd, y0)
}

fn zero(graph: &mut Graph) -> NodeId {
    graph.scalar_constant(0.0)
}

/// Norm of the summed margin gradients of a valid pair, else a zero node.
pub fn gd_loss(graph: &mut Graph, a: &MemberNodes, b: &MemberNodes, y0: usize) -> Result<NodeId> {
    gd_loss_aggregate(graph, &[a.clone(), b.clone()], y0)
}

/// Summed negative margins of a valid pair, else a zero node.
pub fn cm_loss(graph: &mut Graph, a: &MemberNodes, b: &MemberNodes, y0: usize) -> Result<NodeId> {
    cm_loss_aggregate(graph, &[a.clone(), b.clone()], y0)
}

/// `‖Σᵢ ∇ₓ f_i^{y0/yᵢ⁽²⁾}‖₂` when every member predicts `y0`, else a zero node.
pub fn gd_loss_aggregate(graph: &mut Graph, members: &[MemberNodes], y0: usize) -> Result<NodeId> {
    if members.is_empty() || !members.iter().all(|m| m.is_correct(graph, y0)) {
        return Ok(zero(graph));
    }
    let grads = members
        .iter()
        .map(|m| m.margin_gradient(graph, y0))
        .collect::<Result<Vec<_>>>()?;
    let s = sum_vectors(graph, &grads)?;
    Ok(graph.norm2(s))
}

/// `Σᵢ f_i^{yᵢ⁽²⁾/y0}` when every member predicts `y0`, else a zero node.
pub fn cm_loss_aggregate(graph: &mut Graph, members: &[MemberNodes], y0: usize) -> Result<NodeId> {
    if members.is_empty() || !members.iter().all(|m| m.is_correct(graph, y0)) {
        return Ok(zero(graph));
    }
    let terms = members
        .iter()
        .map(|m| m.negative_margin(graph, y0))
        .collect::<Result<Vec<_>>>()?;
    graph.sum_scalars(&terms)
}

fn sum_vectors(graph: &mut Graph, v: &[NodeId]) -> Result<NodeId> {
    let mut acc = v[0];
    for &x in &v[1..] {
        acc = graph.add(acc, x)?;
    }
    Ok(acc)
}

/// ADP term and whether its determinant is structurally zero (`C - 1 < N`).
pub fn adp_loss(graph: &mut Graph, members: &[MemberNodes], y0: usize, alpha: f64, beta: f64) -> Result<(NodeId, bool)> {
    if members.len() < 2 {
        return Err(Error::Config("ADP needs at least two members".into()));
    }
    let c = graph.shape(members[0].fwd.probs).len();
    let probs: Vec<NodeId> = members.iter().map(|m| m.fwd.probs).collect();
    let total = sum_vectors(graph, &probs)?;
    let mean = graph.scale(total, 1.0 / members.len() as f64);
    let log_mean = graph.log(mean);
    let plogp = graph.dot(mean, log_mean)?;
    let entropy = graph.neg(plogp);
    let others: Vec<usize> = (0..c).filter(|&j| j != y0).collect();
    let mut rows = Vec::with_capacity(members.len());
    for m in members {
        let sub = graph.gather(m.fwd.probs, others.clone())?;
        let norm = graph.norm2(sub);
        rows.push(graph.div(sub, norm)?);
    }
    let stacked = graph.stack_rows(rows)?;
    let ed = graph.gram_det(stacked)?;
    let floor = graph.scalar_constant(ADP_LOG_FLOOR);
    let shifted = graph.add(ed, floor)?;
    let log_ed = graph.log(shifted);
    let a = graph.scale(entropy, alpha);
    let b = graph.scale(log_ed, beta);
    Ok((graph.add(a, b)?, others.len() < members.len()))
}

/// `log Σ_{i<j} exp(cos⟨∇ₓℓᵢ, ∇ₓℓⱼ⟩)` over cross-entropy input-gradients; a
/// pair involving a zero gradient contributes cosine 0.
pub fn gal_loss(graph: &mut Graph, members: &[MemberNodes], y0: usize) -> Result<NodeId> {
    if members.len() < 2 {
        return Err(Error::Config("GAL needs at least two members".into()));
    }
    let grads = members
        .iter()
        .map(|m| m.params.loss_input_gradient_node(graph, &m.fwd, y0))
        .collect::<Result<Vec<_>>>()?;
    let norms: Vec<NodeId> = grads.iter().map(|&g| graph.norm2(g)).collect();
    let mut cosines = Vec::new();
    for i in 0..grads.len() {
        for j in i + 1..grads.len() {
            if graph.scalar_value(norms[i]) == 0.0 || graph.scalar_value(norms[j]) == 0.0 {
                cosines.push(zero(graph));
                continue;
            }
            let d = graph.dot(grads[i], grads[j])?;
            let nn = graph.mul(norms[i], norms[j])?;
            cosines.push(graph.div(d, nn)?);
        }
    }
    let exps: Vec<NodeId> = cosines.into_iter().map(|c| graph.exp(c)).collect();
    let s = graph.sum_scalars(&exps)?;
    Ok(graph.log(s))
}

/// Loss terms of one noisy draw.
#[derive(Debug, Clone)]
pub struct DrawTerms {
    pub total: NodeId,
    pub std: NodeId,
    pub gd: NodeId,
    pub cm: NodeId,
    pub variant: NodeId,
    /// Members predicting the label at the noisy input.
    pub correct: usize,
    pub adp_degenerate: bool,
}

/// Builds the training objective of one noisy input for all members.
pub fn draw_objective(graph: &mut Graph, members: &[MemberNodes], y0: usize, config: &TrainingConfig) -> Result<DrawTerms> {
    let std_terms = members
        .iter()
        .map(|m| std_loss(graph, m, y0))
        .collect::<Result<Vec<_>>>()?;
    let std = graph.sum_scalars(&std_terms)?;
    let correct: Vec<bool> = members.iter().map(|m| m.is_correct(graph, y0)).collect();
    let (use_gd, use_cm) = match config.variant {
        Variant::DrtPairwise | Variant::DrtAggregate => (true, true),
        Variant::GdOnly => (true, false),
        Variant::CmOnly => (false, true),
        _ => (false, false),
    };
    let mut gd_terms = Vec::new();
    let mut cm_terms = Vec::new();
    let mut adp_degenerate = false;
    let mut variant = zero(graph);
    match config.variant {
        Variant::DrtPairwise | Variant::GdOnly | Variant::CmOnly => {
            // margin gradients are shared by every pair a member takes part in
            let mut grads: Vec<Option<NodeId>> = vec![None; members.len()];
            let mut negm: Vec<Option<NodeId>> = vec![None; members.len()];
            for i in 0..members.len() {
                if !correct[i] {
                    continue;
                }
                if use_gd {
                    grads[i] = Some(members[i].margin_gradient(graph, y0)?);
                }
                if use_cm {
                    negm[i] = Some(members[i].negative_margin(graph, y0)?);
                }
            }
            for i in 0..members.len() {
                for j in i + 1..members.len() {
                    if !(correct[i] && correct[j]) {
                        continue;
                    }
                    if let (Some(a), Some(b)) = (grads[i], grads[j]) {
                        let s = graph.add(a, b)?;
                        gd_terms.push(graph.norm2(s));
                    }
                    if let (Some(a), Some(b)) = (negm[i], negm[j]) {
                        cm_terms.push(graph.add(a, b)?);
                    }
                }
            }
        }
        Variant::DrtAggregate => {
            gd_terms.push(gd_loss_aggregate(graph, members, y0)?);
            cm_terms.push(cm_loss_aggregate(graph, members, y0)?);
        }
        Variant::Adp { alpha, beta } => {
            let (v, degenerate) = adp_loss(graph, members, y0, alpha, beta)?;
            variant = v;
            adp_degenerate = degenerate;
        }
        Variant::Gal => {
            let g = gal_loss(graph, members, y0)?;
            variant = graph.scale(g, config.rho1);
        }
        Variant::None => {}
    }
    let gd = graph.sum_scalars(&gd_terms)?;
    let cm = graph.sum_scalars(&cm_terms)?;
    let wgd = graph.scale(gd, config.rho1);
    let wcm = graph.scale(cm, config.rho2);
    let total = graph.sum_scalars(&[std, wgd, wcm, variant])?;
    Ok(DrawTerms {
        total,
        std,
        gd,
        cm,
        variant,
        correct: correct.iter().filter(|&&c| c).count(),
        adp_degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Per-draw means; `std_loss` sums the members' cross-entropies.
    pub std_loss: f64,
    pub gd_loss: f64,
    pub cm_loss: f64,
    pub variant_loss: f64,
    /// Fraction of (member, noisy draw) pairs classified correctly.
    pub train_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochStats>,
    /// Draws on which the ADP determinant was structurally zero.
    pub adp_degenerate_draws: u64,
}

pub const HISTORY_HEADER: &str = "epoch,std_loss,gd_loss,cm_loss,variant_loss,train_acc";

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch,
                fmt17(e.std_loss),
                fmt17(e.gd_loss),
                fmt17(e.cm_loss),
                fmt17(e.variant_loss),
                fmt17(e.train_acc)
            ));
        }
        out
    }
}

struct SampleResult {
    /// Parameter gradients per member, flattened in leaf order.
    grads: Vec<Vec<Vec<f64>>>,
    std: f64,
    gd: f64,
    cm: f64,
    variant: f64,
    correct: usize,
    degenerate: u64,
}

fn sample_pass(
    members: &[MlpClassifier],
    x: &[f64],
    y0: usize,
    config: &TrainingConfig,
    rng: &mut RngStream,
) -> Result<SampleResult> {
    let mut graph = Graph::new();
    let params: Vec<MlpParams> = members.iter().map(|m| MlpParams::register(&mut graph, m)).collect();
    let mut totals = Vec::with_capacity(config.k_noise);
    let mut res = SampleResult {
        grads: Vec::new(),
        std: 0.0,
        gd: 0.0,
        cm: 0.0,
        variant: 0.0,
        correct: 0,
        degenerate: 0,
    };
    let mut noise = vec![0.0; x.len()];
    for _ in 0..config.k_noise {
        fill_gaussian(rng, config.sigma, &mut noise);
        let xn: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let input = graph.input(Tensor::vector(xn));
        let nodes = params
            .iter()
            .map(|p| {
                Ok(MemberNodes {
                    params: p.clone(),
                    fwd: p.forward(&mut graph, input)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let t = draw_objective(&mut graph, &nodes, y0, config)?;
        for (name, node) in [("std", t.std), ("gd", t.gd), ("cm", t.cm), ("variant", t.variant)] {
            let v = graph.scalar_value(node);
            if !v.is_finite() {
                return Err(Error::Training(format!("non-finite {name} loss ({v})")));
            }
        }
        res.std += graph.scalar_value(t.std);
        res.gd += graph.scalar_value(t.gd);
        res.cm += graph.scalar_value(t.cm);
        res.variant += graph.scalar_value(t.variant);
        res.correct += t.correct;
        res.degenerate += t.adp_degenerate as u64;
        totals.push(t.total);
    }
    let total = graph.sum_scalars(&totals)?;
    let gm = graph.backward(total)?;
    res.grads = params
        .iter()
        .map(|p| {
            p.leaves()
                .into_iter()
                .map(|l| gm.get(l).map(|t| t.data().to_vec()).unwrap_or_default())
                .collect()
        })
        .collect();
    Ok(res)
}

/// Trains `members` in place on Gaussian-augmented copies of `data`.
///
/// Each mini-batch contributes the mean over its noisy draws of the summed
/// member losses plus regularizers; one momentum step is taken per batch.
pub fn train(members: &mut [MlpClassifier], data: &Dataset, config: &TrainingConfig) -> Result<TrainingHistory> {
    config.validate()?;
    if members.is_empty() {
        return Err(Error::Config("no members to train".into()));
    }
    for m in members.iter() {
        if m.input_dim() != data.dim() {
            return Err(Error::DimensionMismatch {
                expected: data.dim(),
                got: m.input_dim(),
            });
        }
        if m.num_classes() != data.num_classes() {
            return Err(Error::DimensionMismatch {
                expected: data.num_classes(),
                got: m.num_classes(),
            });
        }
    }
    let root = RngStream::new(config.seed, 0x7261_696e);
    let mut states: Vec<OptimizerState> = vec![OptimizerState::default(); members.len()];
    let mut history = TrainingHistory::default();
    let n = data.len();
    for epoch in 0..config.epochs {
        let lr = match config.lr_decay.period {
            0 => config.lr,
            p => config.lr * config.lr_decay.factor.powi((epoch / p) as i32),
        };
        let mut erng = root.substream(epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        erng.shuffle(&mut order);
        let mut sums = [0.0f64; 4];
        let mut correct = 0usize;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let snapshot: &[MlpClassifier] = members;
            let results = batch
                .par_iter()
                .map(|&i| {
                    let mut r = erng.substream(i as u64 + 1);
                    sample_pass(snapshot, data.row(i), data.labels()[i], config, &mut r)
                })
                .collect::<Vec<_>>();
            let draws = (batch.len() * config.k_noise) as f64;
            let mut acc: Vec<Vec<Vec<f64>>> = Vec::new();
            for (res, &i) in results.into_iter().zip(batch) {
                let res = res.map_err(|e| match e {
                    Error::Training(msg) => Error::Training(format!("{msg} at epoch {epoch}, batch {b}, sample {i}")),
                    other => other,
                })?;
                sums[0] += res.std;
                sums[1] += res.gd;
                sums[2] += res.cm;
                sums[3] += res.variant;
                correct += res.correct;
                history.adp_degenerate_draws += res.degenerate;
                if acc.is_empty() {
                    acc = res.grads;
                } else {
                    for (am, rm) in acc.iter_mut().zip(&res.grads) {
                        for (a, r) in am.iter_mut().zip(rm) {
                            a.iter_mut().zip(r).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            for ((model, grads), state) in members.iter_mut().zip(&mut acc).zip(&mut states) {
                grads.iter_mut().flatten().for_each(|g| *g /= draws);
                if grads.iter().flatten().any(|g| !g.is_finite()) {
                    return Err(Error::Training(format!(
                        "non-finite parameter gradient at epoch {epoch}, batch {b}"
                    )));
                }
                let mut slices: Vec<&mut [f64]> = Vec::new();
                for layer in model.layers_mut() {
                    let (w, bias) = (&mut layer.w, &mut layer.b);
                    slices.push(w.as_mut_slice());
                    slices.push(bias.as_mut_slice());
                }
                let g: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
                sgd_momentum_step(&mut slices, &g, state, lr, config.momentum)?;
            }
        }
        let draws = (n * config.k_noise) as f64;
        history.epochs.push(EpochStats {
            epoch,
            std_loss: sums[0] / draws,
            gd_loss: sums[1] / draws,
            cm_loss: sums[2] / draws,
            variant_loss: sums[3] / draws,
            train_acc: correct as f64 / (draws * members.len() as f64),
        });
    }
    Ok(history)
}
