//! Reverse-mode automatic differentiation.

mod gradcheck;
mod graph;
pub(crate) mod kernels;

pub use gradcheck::{check_gradients, finite_diff_grad, max_relative_error, probe_weights};
pub use graph::{
    AmpPoint, BnParams, GradientMap, Graph, LayerId, Mode, NodeId, NodeKind, ParamId,
    RunningStats,
};
pub(crate) use graph::validate_factor;

use crate::error::{bail, Result};
use crate::tensor::{Scalar, Tensor};

/// Plain SGD: `p ← p − lr·g` for every gradient in `grads`.
///
/// `params` is indexed by [`ParamId`]; no momentum, no weight decay.
pub fn sgd_step<T: Scalar>(params: &mut [Tensor<T>], grads: &GradientMap<T>, lr: f64) -> Result<()> {
    if !(lr.is_finite() && lr >= 0.0) {
        bail!(Argument, "learning rate must be finite and >= 0, got {}", lr);
    }
    for (id, g) in grads.iter() {
        let Some(p) = params.get(id.0) else {
            bail!(Argument, "gradient for unknown parameter {}", id.0);
        };
        if p.shape() != g.shape() {
            bail!(Argument, "parameter {} has shape {:?}, gradient {:?}", id.0, p.shape(), g.shape());
        }
    }
    let lr = T::from_f64_lossy(lr);
    for (id, g) in grads.iter() {
        for (p, &gv) in params[id.0].data_mut().iter_mut().zip(g.data()) {
            *p = *p - lr * gv;
        }
    }
    Ok(())
}
