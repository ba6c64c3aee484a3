//! Dense `f64` tensors, a recording tape for reverse-mode gradients, and Adam.
//!
//! All kernels use a fixed loop order, so identical inputs give
//! bit-identical outputs.

mod adam;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{Gradients, NodeId, ParamId, ParamStore, Tape};
pub use tensor::{dot, log_softmax, log_sum_exp, sigmoid, softmax, Tensor};

/// Relative error with a floor on the denominator so that tiny gradients
/// are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Largest [`relative_error`] between `analytic` and central differences of
/// `loss` over every parameter value.
pub fn max_finite_difference_error<F>(params: &ParamStore, analytic: &Gradients, eps: f64, loss: F) -> f64
where
    F: Fn(&ParamStore) -> f64,
{
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for id in params.ids() {
        for i in 0..params.get(id).len() {
            let orig = params.get(id).data()[i];
            probe.get_mut(id).data_mut()[i] = orig + eps;
            let up = loss(&probe);
            probe.get_mut(id).data_mut()[i] = orig - eps;
            let down = loss(&probe);
            probe.get_mut(id).data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.get(id).data()[i], fd));
        }
    }
    worst
}
