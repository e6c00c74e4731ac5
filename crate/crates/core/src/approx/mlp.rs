use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::seeding::{self, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - a * a,
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

/// Layer shapes and activations of a fully-connected network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Offsets of one dense layer inside the flat parameter vector.
///
/// Weights are stored row-major as `out × in`, followed by `out` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlice {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: usize,
    pub biases: usize,
}

impl MlpSpec {
    /// Two hidden layers, i.e. a 4-layer network counting input and output.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            output_dim,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
        }
    }

    pub fn with_activations(mut self, hidden: Activation, output: Activation) -> Self {
        self.hidden_activation = hidden;
        self.output_activation = output;
        self
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn layers(&self) -> Vec<LayerSlice> {
        let widths = self.widths();
        let mut offset = 0;
        widths
            .windows(2)
            .map(|w| {
                let s = LayerSlice {
                    inputs: w[0],
                    outputs: w[1],
                    weights: offset,
                    biases: offset + w[0] * w[1],
                };
                offset += w[0] * w[1] + w[1];
                s
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|l| l.inputs * l.outputs + l.outputs).sum()
    }

    /// Shapes in checkpoint order: `[out, in]` for every weight matrix then `[out]` for its bias.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.layers()
            .iter()
            .flat_map(|l| [vec![l.outputs, l.inputs], vec![l.outputs]])
            .collect()
    }

    fn activation(&self, layer: usize, layers: usize) -> Activation {
        if layer + 1 == layers {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

/// Intermediate values of a forward pass, reused by [`Mlp::backward_into`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an output")
    }
}

/// A network specification together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<LayerSlice>,
    params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Self {
        let params = vec![0.0; spec.num_params()];
        let layers = spec.layers();
        Self { spec, layers, params }
    }

    /// Scaled Gaussian weights (`gain / sqrt(fan_in)`, last layer times
    /// `output_gain`) and zero biases, fixed by `seed`.
    pub fn init(spec: MlpSpec, seed: u64, output_gain: f64) -> Self {
        let mut net = Self::zeros(spec);
        let mut rng = seeding::rng(seed, Stream::Init, &[]);
        let n = net.layers.len();
        for (i, l) in net.layers.clone().into_iter().enumerate() {
            let gain = match net.spec.activation(i, n) {
                Activation::Relu => std::f64::consts::SQRT_2,
                _ => 1.0,
            };
            let scale = gain / (l.inputs as f64).sqrt() * if i + 1 == n { output_gain } else { 1.0 };
            for w in &mut net.params[l.weights..l.biases] {
                *w = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        net
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        if params.len() != spec.num_params() {
            return Err(Error::contract(format!(
                "expected {} parameters, got {}",
                spec.num_params(),
                params.len()
            )));
        }
        let mut net = Self::zeros(spec);
        net.set_params(&params)?;
        Ok(net)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layer_slices(&self) -> &[LayerSlice] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::contract("parameter length mismatch"));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(input)?.activations.pop().expect("output"))
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<Trace> {
        if input.len() != self.spec.input_dim {
            return Err(Error::contract(format!(
                "input has dimension {}, network expects {}",
                input.len(),
                self.spec.input_dim
            )));
        }
        let n = self.layers.len();
        let mut activations = Vec::with_capacity(n + 1);
        let mut pre = Vec::with_capacity(n);
        activations.push(input.to_vec());
        for (i, l) in self.layers.iter().enumerate() {
            let x = &activations[i];
            let w = &self.params[l.weights..l.biases];
            let b = &self.params[l.biases..l.biases + l.outputs];
            let z: Vec<f64> = (0..l.outputs)
                .map(|o| {
                    let row = &w[o * l.inputs..(o + 1) * l.inputs];
                    b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()
                })
                .collect();
            let act = self.spec.activation(i, n);
            let a: Vec<f64> = z.iter().map(|&zi| act.apply(zi)).collect();
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("output of layer {i}")));
            }
            pre.push(z);
            activations.push(a);
        }
        Ok(Trace { activations, pre })
    }

    /// Adds `J^T · cotangent` (the parameter gradient of `<cotangent, output>`)
    /// to `grad`.
    pub fn backward_into(&self, trace: &Trace, cotangent: &[f64], grad: &mut [f64]) -> Result<()> {
        if cotangent.len() != self.spec.output_dim || grad.len() != self.params.len() {
            return Err(Error::contract("cotangent or gradient has the wrong length"));
        }
        let n = self.layers.len();
        let mut delta: Vec<f64> = cotangent.to_vec();
        for i in (0..n).rev() {
            let l = self.layers[i];
            let act = self.spec.activation(i, n);
            let out = &trace.activations[i + 1];
            for (o, d) in delta.iter_mut().enumerate() {
                *d *= act.derivative(trace.pre[i][o], out[o]);
            }
            let x = &trace.activations[i];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[l.weights + o * l.inputs..l.weights + (o + 1) * l.inputs];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += d * xi;
                }
                grad[l.biases + o] += d;
            }
            if i > 0 {
                let w = &self.params[l.weights..l.biases];
                let mut prev = vec![0.0; l.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, wi) in prev.iter_mut().zip(&w[o * l.inputs..(o + 1) * l.inputs]) {
                        *p += d * wi;
                    }
                }
                delta = prev;
            }
        }
        if let Some(j) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {j}")));
        }
        Ok(())
    }

    /// Parameter gradient of `<cotangent, forward(input)>`.
    pub fn backward(&self, input: &[f64], cotangent: &[f64]) -> Result<Vec<f64>> {
        let trace = self.forward_trace(input)?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(&trace, cotangent, &mut grad)?;
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::{finite_difference, max_relative_error};
    use rand::Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(MlpSpec::new(3, &[4, 4], 2));
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = MlpSpec::new(3, &[], 3);
        let mut p = vec![0.0; spec.num_params()];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_params(spec, p).unwrap();
        assert_eq!(net.forward(&[0.5, -1.0, 2.0]).unwrap(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn forward_is_deterministic_and_checks_dims() {
        let net = Mlp::init(MlpSpec::new(3, &[8, 8], 2), 1, 1.0);
        let x = [0.1, 0.2, 0.3];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
        assert!(matches!(net.forward(&[0.0; 2]), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_forward_names_the_layer() {
        let spec = MlpSpec::new(1, &[1], 1).with_activations(Activation::Identity, Activation::Identity);
        let net = Mlp::from_params(spec, vec![1e300, 0.0, 1e300, 0.0]).unwrap();
        match net.forward(&[1e300]) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("layer")),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient_and_is_linear() {
        let net = Mlp::init(MlpSpec::new(4, &[6, 5], 1), 2, 1.0);
        let x = [0.3, -0.2, 0.9, 0.0];
        assert!(net.backward(&x, &[0.0]).unwrap().iter().all(|&g| g == 0.0));
        let g1 = net.backward(&x, &[1.0]).unwrap();
        let g2 = net.backward(&x, &[2.0]).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = seeding::rng(11, Stream::Check, &[]);
        for case in 0..20 {
            let hidden = [rng.random_range(1..=16), rng.random_range(1..=16)];
            let (act, out_act) = match case % 3 {
                0 => (Activation::Tanh, Activation::Identity),
                1 => (Activation::Tanh, Activation::Tanh),
                _ => (Activation::Relu, Activation::Identity),
            };
            let spec =
                MlpSpec::new(rng.random_range(1..=6), &hidden, rng.random_range(1..=3)).with_activations(act, out_act);
            // nonzero biases keep ReLU pre-activations off the kink
            let params: Vec<f64> = Mlp::init(spec.clone(), case, 1.0)
                .params()
                .iter()
                .map(|p| p + rng.random_range(-0.1..0.1))
                .collect();
            let net = Mlp::from_params(spec.clone(), params).unwrap();
            let x: Vec<f64> = (0..spec.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let cot: Vec<f64> = (0..spec.output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let analytic = net.backward(&x, &cot).unwrap();
            let numeric = finite_difference(
                |p| {
                    let probe = Mlp::from_params(spec.clone(), p.to_vec()).unwrap();
                    let y = probe.forward(&x).unwrap();
                    y.iter().zip(&cot).map(|(a, b)| a * b).sum()
                },
                net.params(),
                1e-5,
            );
            let err = max_relative_error(&analytic, &numeric, 1e-6);
            assert!(err <= 1e-5, "case {case}: relative error {err}");
        }
    }
}
