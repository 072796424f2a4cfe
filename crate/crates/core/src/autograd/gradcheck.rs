//! Central finite differences, used as the independent oracle for every
//! backward rule.

use super::graph::{Graph, NodeId};
use crate::error::{bail, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// `(f(x + eps·e_i) − f(x − eps·e_i)) / 2·eps` for every element `i`.
pub fn finite_diff_grad<T, F>(mut f: F, x: &Tensor<T>, eps: f64) -> Result<Tensor<T>>
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> Result<f64>,
{
    if !(eps.is_finite() && eps > 0.0) {
        bail!(Argument, "finite-difference step must be > 0, got {}", eps);
    }
    let step = T::from_f64_lossy(eps);
    let mut probe = x.clone();
    probe.grad = None;
    let mut out = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !(plus.is_finite() && minus.is_finite()) {
            bail!(Numeric, "objective is non-finite around element {}", i);
        }
        // the actual perturbation may differ from eps after rounding into T
        let h = (orig + step).to_f64_lossy() - (orig - step).to_f64_lossy();
        out.push(T::from_f64_lossy((plus - minus) / h));
    }
    Tensor::from_vec(x.shape(), out)
}

/// Largest `|a − e| / max(|a|, |e|, floor)` over paired elements.
pub fn max_relative_error<T: Scalar>(actual: &[T], expected: &[T], floor: f64) -> f64 {
    actual
        .iter()
        .zip(expected)
        .map(|(a, e)| {
            let (a, e) = (a.to_f64_lossy(), e.to_f64_lossy());
            (a - e).abs() / a.abs().max(e.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}

/// Fixed, uneven weights for reducing an output to a scalar probe.
pub fn probe_weights<T: Scalar>(n: usize) -> Vec<T> {
    (0..n)
        .map(|i| T::from_f64_lossy((1.7 * i as f64 + 0.3).cos() + 0.25))
        .collect()
}

/// Checks backward against central differences for every leaf.
///
/// `build` records an expression over the leaf nodes (added as gradient-
/// carrying inputs, in order) and returns its output node. The probed scalar
/// is `Σ r ⊙ output` with `r` from [`probe_weights`]. Returns the largest
/// relative error per leaf.
pub fn check_gradients<T, F>(leaves: &[Tensor<T>], mut build: F, eps: f64, floor: f64) -> Result<Vec<f64>>
where
    T: Scalar,
    F: FnMut(&mut Graph<T>, &[NodeId]) -> Result<NodeId>,
{
    let mut record = |values: &[Tensor<T>]| -> Result<(Graph<T>, Vec<NodeId>, NodeId)> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|v| g.input(v.clone())).collect();
        let out = build(&mut g, &ids)?;
        let shape = g.value(out)?.shape().to_vec();
        let r = g.constant(Tensor::from_vec(&shape, probe_weights(shape.iter().product()))?);
        let weighted = g.mul(out, r)?;
        let loss = g.sum(weighted)?;
        Ok((g, ids, loss))
    };

    let (mut g, ids, loss) = record(leaves)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<T>> = ids
        .iter()
        .map(|&id| {
            g.grad(id)
                .map(<[T]>::to_vec)
                .ok_or_else(|| Error::Graph(format!("leaf {} received no gradient", id.index())))
        })
        .collect::<Result<_>>()?;

    let mut errors = Vec::with_capacity(leaves.len());
    for (j, leaf) in leaves.iter().enumerate() {
        let mut values = leaves.to_vec();
        let numeric = finite_diff_grad(
            |probe| {
                values[j] = probe.clone();
                let (g, _, loss) = record(&values)?;
                Ok(g.value(loss)?.data()[0].to_f64_lossy())
            },
            leaf,
            eps,
        )?;
        errors.push(max_relative_error(&analytic[j], numeric.data(), floor));
    }
    Ok(errors)
}
