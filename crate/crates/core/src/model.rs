//! Feed-forward classifiers with softmax confidence outputs.

use serde::Deserialize;
use serde_json::value::RawValue;

use crate::fmt::fmt17;
use crate::numstats::RngStream;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Softplus,
    Tanh,
    /// Forward-only; rejected wherever second derivatives are needed.
    Relu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Softplus => "softplus",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => crate::autodiff::softplus(z),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Softplus => crate::autodiff::sigmoid(z),
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Dense layer `z = W h + b` with `W` stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    outputs: usize,
    inputs: usize,
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
}

impl Layer {
    pub fn new(outputs: usize, inputs: usize, w: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if outputs == 0 || inputs == 0 {
            return Err(Error::Config("layer dimensions must be positive".into()));
        }
        if w.len() != outputs * inputs {
            return Err(Error::DimensionMismatch {
                expected: outputs * inputs,
                got: w.len(),
            });
        }
        if b.len() != outputs {
            return Err(Error::DimensionMismatch {
                expected: outputs,
                got: b.len(),
            });
        }
        if w.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite layer parameter".into()));
        }
        Ok(Self { outputs, inputs, w, b })
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> &[f64] {
        &self.b
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.b
    }

    fn apply(&self, h: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|r| {
                self.b[r]
                    + self.w[r * self.inputs..(r + 1) * self.inputs]
                        .iter()
                        .zip(h)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect()
    }

    fn apply_transpose(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs];
        for (r, &gr) in g.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(&self.w[r * self.inputs..(r + 1) * self.inputs]) {
                *o += w * gr;
            }
        }
        out
    }
}

/// Top class, runner-up class and their confidence gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub top: usize,
    pub runner_up: usize,
    pub margin: f64,
}

impl Prediction {
    /// Argmax and second argmax, ties going to the lowest index.
    pub fn from_confidences(f: &[f64]) -> Self {
        debug_assert!(f.len() >= 2);
        let mut top = 0;
        for (i, &v) in f.iter().enumerate() {
            if v > f[top] {
                top = i;
            }
        }
        let mut runner_up = if top == 0 { 1 } else { 0 };
        for (i, &v) in f.iter().enumerate() {
            if i != top && v > f[runner_up] {
                runner_up = i;
            }
        }
        Self {
            top,
            runner_up,
            margin: f[top] - f[runner_up],
        }
    }
}

/// Anything that maps a batch of inputs to class labels.
pub trait Classifier: Sync {
    fn input_dim(&self) -> usize;

    fn num_classes(&self) -> usize;

    /// Labels for `xs.len() / input_dim()` row-major inputs.
    fn classify_batch(&self, xs: &[f64]) -> Vec<usize>;

    fn classify(&self, x: &[f64]) -> usize {
        self.classify_batch(x)[0]
    }
}

/// Adapts a closure into a [`Classifier`].
pub struct FnClassifier<F> {
    dim: usize,
    classes: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> usize + Sync> FnClassifier<F> {
    pub fn new(dim: usize, classes: usize, f: F) -> Self {
        Self { dim, classes, f }
    }
}

impl<F: Fn(&[f64]) -> usize + Sync> Classifier for FnClassifier<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn classify_batch(&self, xs: &[f64]) -> Vec<usize> {
        xs.chunks_exact(self.dim).map(|x| (self.f)(x)).collect()
    }
}

/// Multi-layer perceptron with a softmax output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    layers: Vec<Layer>,
    activation: Activation,
}

impl MlpClassifier {
    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].inputs != pair[0].outputs {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs,
                    got: pair[1].inputs,
                });
            }
        }
        let classes = layers.last().expect("non-empty").outputs;
        if classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {classes}")));
        }
        Ok(Self { layers, activation })
    }

    /// All-zero parameters for layer widths `dims = [d, hidden.., C]`.
    pub fn zeros(dims: &[usize], activation: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("dims needs input and output sizes".into()));
        }
        let layers = dims
            .windows(2)
            .map(|p| Layer::new(p[1], p[0], vec![0.0; p[0] * p[1]], vec![0.0; p[1]]))
            .collect::<Result<_>>()?;
        Self::from_layers(layers, activation)
    }

    /// He initialisation: weights ~ N(0, 2 / fan_in), zero biases.
    pub fn init_random(
        d: usize,
        hidden: &[usize],
        classes: usize,
        activation: Activation,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let mut dims = vec![d];
        dims.extend_from_slice(hidden);
        dims.push(classes);
        let mut model = Self::zeros(&dims, activation)?;
        for layer in &mut model.layers {
            let scale = (2.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.w {
                *w = scale * rng.std_normal();
            }
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access to parameter values; shapes cannot change through it.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.num_classes() {
            return Err(Error::InvalidLabel {
                label: y,
                classes: self.num_classes(),
            });
        }
        Ok(())
    }

    /// Forward pass returning hidden pre-activations and the logits.
    fn forward_trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h);
            if l == last {
                return (pre, z);
            }
            h = z.iter().map(|&v| self.activation.apply(v)).collect();
            pre.push(z);
        }
        unreachable!()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_trace(x).1)
    }

    pub fn confidences(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        Ok(Prediction::from_confidences(&self.confidences(x)?))
    }

    /// `f_{y1}(x) − f_{y2}(x)`.
    pub fn margin(&self, x: &[f64], y1: usize, y2: usize) -> Result<f64> {
        self.check_label(y1)?;
        self.check_label(y2)?;
        let f = self.confidences(x)?;
        Ok(f[y1] - f[y2])
    }

    /// Backpropagates a logit cotangent to the input.
    fn pull_back(&self, pre: &[Vec<f64>], mut g: Vec<f64>) -> Vec<f64> {
        for l in (0..self.layers.len()).rev() {
            let v = self.layers[l].apply_transpose(&g);
            if l == 0 {
                return v;
            }
            g = v
                .iter()
                .zip(&pre[l - 1])
                .map(|(a, &z)| a * self.activation.derivative(z))
                .collect();
        }
        unreachable!()
    }

    /// `∇ₓ (f_{y1} − f_{y2})` by direct backpropagation.
    pub fn margin_input_gradient(&self, x: &[f64], y1: usize, y2: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_label(y1)?;
        self.check_label(y2)?;
        let (pre, mut f) = self.forward_trace(x);
        softmax_in_place(&mut f);
        let m = f[y1] - f[y2];
        let mut g: Vec<f64> = f.iter().map(|&p| -m * p).collect();
        g[y1] += f[y1];
        g[y2] -= f[y2];
        Ok(self.pull_back(&pre, g))
    }

    /// `∇ₓ (−log f_y)` by direct backpropagation.
    pub fn loss_input_gradient(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        self.check_input(x)?;
        self.check_label(y)?;
        let (pre, mut f) = self.forward_trace(x);
        softmax_in_place(&mut f);
        f[y] -= 1.0;
        Ok(self.pull_back(&pre, f))
    }

    /// Confidences of `xs.len() / d` row-major inputs as a row-major `n × C` matrix.
    pub fn confidences_batch(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if !xs.len().is_multiple_of(d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: xs.len() % d,
            });
        }
        let n = xs.len() / d;
        let mut h = xs.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (k, m) = (layer.inputs, layer.outputs);
            let mut z = Vec::with_capacity(n * m);
            for _ in 0..n {
                z.extend_from_slice(&layer.b);
            }
            // z (n×m) += h (n×k) · Wᵀ (k×m)
            unsafe {
                matrixmultiply::dgemm(
                    n,
                    k,
                    m,
                    1.0,
                    h.as_ptr(),
                    k as isize,
                    1,
                    layer.w.as_ptr(),
                    1,
                    k as isize,
                    1.0,
                    z.as_mut_ptr(),
                    m as isize,
                    1,
                );
            }
            if l != last {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            h = z;
        }
        let c = self.num_classes();
        for row in h.chunks_exact_mut(c) {
            softmax_in_place(row);
        }
        Ok(h)
    }

    pub fn to_json(&self) -> String {
        let dims: Vec<String> = self.dims().iter().map(|d| d.to_string()).collect();
        let mut out = format!(
            "{{\"dims\":[{}],\"activation\":\"{}\",\"layers\":[",
            dims.join(","),
            self.activation.name()
        );
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                out.push(',');
            }
            out.push_str("{\"w\":[");
            for r in 0..layer.outputs {
                if r > 0 {
                    out.push(',');
                }
                let row: Vec<String> = layer.w[r * layer.inputs..(r + 1) * layer.inputs]
                    .iter()
                    .map(|&v| fmt17(v))
                    .collect();
                out.push('[');
                out.push_str(&row.join(","));
                out.push(']');
            }
            let b: Vec<String> = layer.b.iter().map(|&v| fmt17(v)).collect();
            out.push_str("],\"b\":[");
            out.push_str(&b.join(","));
            out.push_str("]}");
        }
        out.push_str("]}\n");
        out
    }

    /// Parses the JSON model document.
    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Doc<'a> {
            dims: Vec<usize>,
            activation: Activation,
            #[serde(borrow)]
            layers: Vec<&'a RawValue>,
        }
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct LayerDoc {
            w: Vec<Vec<f64>>,
            b: Vec<f64>,
        }
        let doc: Doc = serde_json::from_slice(bytes)?;
        if doc.dims.len() != doc.layers.len() + 1 {
            return Err(Error::Config(format!(
                "dims has {} entries for {} layers",
                doc.dims.len(),
                doc.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (l, raw) in doc.layers.iter().enumerate() {
            let ld: LayerDoc = serde_json::from_str(raw.get())?;
            let (inputs, outputs) = (doc.dims[l], doc.dims[l + 1]);
            if ld.w.len() != outputs || ld.w.iter().any(|row| row.len() != inputs) {
                return Err(Error::Config(format!(
                    "layer {l}: weight matrix is not {outputs}x{inputs}"
                )));
            }
            let w = ld.w.into_iter().flatten().collect();
            layers.push(Layer::new(outputs, inputs, w, ld.b)?);
        }
        Self::from_layers(layers, doc.activation)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_slice(&std::fs::read(path)?)
    }
}

impl Classifier for MlpClassifier {
    fn input_dim(&self) -> usize {
        MlpClassifier::input_dim(self)
    }

    fn num_classes(&self) -> usize {
        MlpClassifier::num_classes(self)
    }

    fn classify_batch(&self, xs: &[f64]) -> Vec<usize> {
        let f = self.confidences_batch(xs).expect("input length is a multiple of the dimension");
        f.chunks_exact(self.num_classes())
            .map(|row| Prediction::from_confidences(row).top)
            .collect()
    }
}

pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in z.iter_mut() {
        *v /= s;
    }
}
