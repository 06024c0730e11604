use super::{Graph, NodeId};
use crate::{Error, Result};

/// Largest relative error between reverse-mode adjoints of `output` and
/// central differences with step `h`, over every component of `leaves`.
///
/// Relative error is `|a - b| / max(|a|, |b|, 1e-8)`. The graph is restored
/// to its original leaf values before returning.
pub fn gradient_check(graph: &mut Graph, output: NodeId, leaves: &[NodeId], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::domain(format!("finite-difference step must be positive, got {h}")));
    }
    let grads = graph.backward(output)?;
    let mut worst: f64 = 0.0;
    for &leaf in leaves {
        let analytic = grads
            .get(leaf)
            .ok_or_else(|| Error::usage("gradient_check on a non-leaf node"))?
            .clone();
        let original = graph.value(leaf).clone();
        for k in 0..original.shape().len() {
            let mut plus = original.clone();
            plus.data_mut()[k] += h;
            graph.set_leaf(leaf, plus)?;
            let up = graph.scalar_value(output);
            let mut minus = original.clone();
            minus.data_mut()[k] -= h;
            graph.set_leaf(leaf, minus)?;
            let down = graph.scalar_value(output);
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        graph.set_leaf(leaf, original)?;
    }
    Ok(worst)
}
