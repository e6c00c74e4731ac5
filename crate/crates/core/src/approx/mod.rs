//! Small differentiable function approximators with hand-written backprop.

mod checkpoint;
mod mlp;
mod optim;
mod policy;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use mlp::{Activation, LayerSlice, Mlp, MlpSpec, Trace};
pub use optim::{Adam, AdamConfig};
pub use policy::{PolicyFunction, PolicyHead};

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let hi = f(&probe);
            probe[i] = x[i] - step;
            let lo = f(&probe);
            probe[i] = x[i];
            (hi - lo) / (2.0 * step)
        })
        .collect()
}

/// `max_i |a_i − b_i| / max(|a_i|, |b_i|, floor)`.
pub fn max_relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
