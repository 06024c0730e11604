//! Graph construction for [`MlpClassifier`] forward passes and input-gradients.
//!
//! The input-gradient of a confidence margin is assembled as an explicit chain
//! of transposed-weight products and activation-derivative scalings, so it can
//! itself be differentiated with respect to the parameter leaves.

use super::{Graph, NodeId, Tensor};
use crate::model::{Activation, MlpClassifier};
use crate::{Error, Result};

/// Parameter leaves of one model inside a graph.
#[derive(Debug, Clone)]
pub struct MlpParams {
    activation: Activation,
    /// `(weight, bias)` per layer, input side first.
    layers: Vec<(NodeId, NodeId)>,
}

/// Nodes produced by one forward pass.
#[derive(Debug, Clone)]
pub struct MlpForward {
    pub input: NodeId,
    /// Pre-activations of the hidden layers.
    pub pre_activations: Vec<NodeId>,
    pub logits: NodeId,
    pub log_probs: NodeId,
    pub probs: NodeId,
}

impl MlpParams {
    /// Adds one parameter leaf per weight matrix and bias vector.
    pub fn register(graph: &mut Graph, model: &MlpClassifier) -> Self {
        let layers = model
            .layers()
            .iter()
            .map(|layer| {
                let w = graph.param(Tensor::matrix(layer.outputs(), layer.inputs(), layer.w.clone()));
                let b = graph.param(Tensor::vector(layer.b.clone()));
                (w, b)
            })
            .collect();
        Self {
            activation: model.activation(),
            layers,
        }
    }

    pub fn layers(&self) -> &[(NodeId, NodeId)] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// All parameter leaves, in layer order with the weight before the bias.
    pub fn leaves(&self) -> Vec<NodeId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn forward(&self, graph: &mut Graph, input: NodeId) -> Result<MlpForward> {
        let mut h = input;
        let mut pre_activations = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let last = self.layers.len() - 1;
        let mut logits = input;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let wx = graph.matvec(w, h)?;
            let z = graph.add(wx, b)?;
            if l == last {
                logits = z;
            } else {
                pre_activations.push(z);
                h = match self.activation {
                    Activation::Softplus => graph.softplus(z),
                    Activation::Tanh => graph.tanh(z),
                    Activation::Relu => relu_node(graph, z)?,
                };
            }
        }
        let lse = graph.log_sum_exp(logits)?;
        let neg = graph.neg(lse);
        let log_probs = graph.shift(logits, neg)?;
        let probs = graph.exp(log_probs);
        Ok(MlpForward {
            input,
            pre_activations,
            logits,
            log_probs,
            probs,
        })
    }

    /// Pulls a cotangent on the logits back to the input through the layer chain.
    fn pull_back(&self, graph: &mut Graph, fwd: &MlpForward, mut g: NodeId) -> Result<NodeId> {
        for l in (0..self.layers.len()).rev() {
            let v = graph.mattvec(self.layers[l].0, g)?;
            if l == 0 {
                return Ok(v);
            }
            let z = fwd.pre_activations[l - 1];
            let d = match self.activation {
                Activation::Softplus => graph.sigmoid(z),
                Activation::Tanh => graph.tanh_deriv(z),
                Activation::Relu => unreachable!("rejected by require_smooth"),
            };
            g = graph.mul(v, d)?;
        }
        unreachable!("a model has at least one layer")
    }

    fn require_smooth(&self) -> Result<()> {
        if self.activation == Activation::Relu {
            return Err(Error::Config(
                "input-gradient graphs need a twice-differentiable activation (softplus or tanh)".into(),
            ));
        }
        Ok(())
    }

    /// `∇ₓ (f_{y1} − f_{y2})` at the forward pass input, as a vector node.
    pub fn input_gradient_node(
        &self,
        graph: &mut Graph,
        fwd: &MlpForward,
        y1: usize,
        y2: usize,
    ) -> Result<NodeId> {
        self.require_smooth()?;
        let c = graph.shape(fwd.probs).len();
        for y in [y1, y2] {
            if y >= c {
                return Err(Error::InvalidLabel { label: y, classes: c });
            }
        }
        if y1 == y2 {
            return Err(Error::usage("input_gradient_node needs distinct classes"));
        }
        // d(f_{y1} - f_{y2})/dz = f ⊙ c - (f_{y1} - f_{y2}) f with c = e_{y1} - e_{y2}
        let mut cvec = vec![0.0; c];
        cvec[y1] = 1.0;
        cvec[y2] = -1.0;
        let cnode = graph.constant(Tensor::vector(cvec));
        let fc = graph.mul(fwd.probs, cnode)?;
        let m = graph.dot(fwd.probs, cnode)?;
        let mf = graph.scalar_mul(m, fwd.probs)?;
        let g = graph.sub(fc, mf)?;
        self.pull_back(graph, fwd, g)
    }

    /// `∇ₓ` of the cross-entropy loss `−log f_y`.
    pub fn loss_input_gradient_node(&self, graph: &mut Graph, fwd: &MlpForward, y: usize) -> Result<NodeId> {
        self.require_smooth()?;
        let c = graph.shape(fwd.probs).len();
        if y >= c {
            return Err(Error::InvalidLabel { label: y, classes: c });
        }
        let mut e = vec![0.0; c];
        e[y] = 1.0;
        let enode = graph.constant(Tensor::vector(e));
        let g = graph.sub(fwd.probs, enode)?;
        self.pull_back(graph, fwd, g)
    }
}

/// `max(z, 0)` written with primitives; forward-only use, never differentiated twice.
fn relu_node(graph: &mut Graph, z: NodeId) -> Result<NodeId> {
    let mask: Vec<f64> = graph
        .value(z)
        .data()
        .iter()
        .map(|&v| if v > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let m = graph.constant(Tensor::vector(mask));
    graph.mul(z, m)
}

/// Cross-entropy `−log f_y` as a scalar node.
pub fn cross_entropy_node(graph: &mut Graph, fwd: &MlpForward, y: usize) -> Result<NodeId> {
    let lp = graph.select(fwd.log_probs, y)?;
    Ok(graph.neg(lp))
}

/// Confidence margin `f_{y1} − f_{y2}` as a scalar node.
pub fn margin_node(graph: &mut Graph, fwd: &MlpForward, y1: usize, y2: usize) -> Result<NodeId> {
    let a = graph.select(fwd.probs, y1)?;
    let b = graph.select(fwd.probs, y2)?;
    graph.sub(a, b)
}
