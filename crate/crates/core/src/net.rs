//! Fully connected regression networks with hand-written backpropagation and
//! an adaptive-moment optimizer.
//!
//! The relative-quality head is a three-layer instance fed with the
//! difference of two feature rows. The same machinery backs the downstream
//! regressor used by the experiments.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Stream;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

const CHECKPOINT_MAGIC: &[u8; 8] = b"PC3MLP\0\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Weights (`inputs x outputs`, row-major by input) and biases of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Per-parameter gradients, shaped exactly like the network layers.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub layers: Vec<Layer>,
}

impl GradientBundle {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Layer::values)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Layer::values_mut)
    }

    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn clear(&mut self) {
        self.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// `activations[0]` is the input; `activations[k]` is the post-activation
    /// output of layer `k - 1`.
    activations: Vec<Vec<f64>>,
    generation: u64,
    shape: Vec<(usize, usize)>,
}

impl Tape {
    pub fn output(&self) -> f64 {
        self.activations.last().map_or(0.0, |a| a[0])
    }
}

/// Multi-layer perceptron: rectified-linear hidden layers, one linear output,
/// plus the optimizer moments of every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    first_moment: Vec<Layer>,
    second_moment: Vec<Layer>,
    step: u64,
}

/// Parameters of the relative-quality measure.
pub type HeadParameters = Mlp;

impl Mlp {
    /// Builds a network with layer widths `sizes` (input first, output last,
    /// output width 1). Weights are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`;
    /// biases and moments start at zero.
    pub fn new(sizes: &[usize], rng: &mut Stream) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::validation("a network needs at least one layer"));
        }
        if sizes.contains(&0) {
            return Err(Error::validation(format!(
                "layer sizes must be positive, got {sizes:?}"
            )));
        }
        if sizes[sizes.len() - 1] != 1 {
            return Err(Error::validation("the output layer must have width 1"));
        }
        let layers: Vec<Layer> = sizes
            .windows(2)
            .map(|w| {
                let mut layer = Layer::zeros(w[0], w[1]);
                let bound = 1.0 / (w[0] as f64).sqrt();
                for x in &mut layer.weights {
                    *x = rng.random_range(-bound..bound);
                }
                layer
            })
            .collect();
        let zeros: Vec<Layer> = layers
            .iter()
            .map(|l| Layer::zeros(l.inputs, l.outputs))
            .collect();
        Ok(Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
            layers,
            step: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn first_moment(&self) -> &[Layer] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Layer] {
        &self.second_moment
    }

    /// Number of optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Layer::values)
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Layer::values_mut)
    }

    fn shape(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.inputs, l.outputs)).collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(f64, Tape)> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let x = &activations[k];
            let mut out = layer.bias.clone();
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                for (o, &w) in out.iter_mut().zip(row) {
                    *o += xi * w;
                }
            }
            if k != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(out);
        }
        let tape = Tape {
            activations,
            generation: self.step,
            shape: self.shape(),
        };
        Ok((tape.output(), tape))
    }

    /// Output only; skips keeping the tape around.
    pub fn predict(&self, input: &[f64]) -> Result<f64> {
        self.forward(input).map(|(y, _)| y)
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if tape.generation != self.step || tape.shape != self.shape() {
            return Err(Error::ContractViolation(format!(
                "tape recorded at optimizer step {} with shape {:?} does not match \
                 parameters at step {} with shape {:?}",
                tape.generation,
                tape.shape,
                self.step,
                self.shape()
            )));
        }
        Ok(())
    }

    /// Gradient of the output with respect to every parameter, times `upstream`.
    pub fn backward(&self, tape: &Tape, upstream: f64) -> Result<GradientBundle> {
        let mut grads = GradientBundle::zeros_like(self);
        self.backward_into(tape, upstream, &mut grads)?;
        Ok(grads)
    }

    /// Like [`Mlp::backward`] but adds into an existing accumulator.
    pub fn backward_into(
        &self,
        tape: &Tape,
        upstream: f64,
        grads: &mut GradientBundle,
    ) -> Result<()> {
        self.check_tape(tape)?;
        if upstream == 0.0 {
            return Ok(());
        }
        // delta = dOut/d(pre-activation) of the current layer
        let mut delta = vec![upstream];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let grad = &mut grads.layers[k];
            let input = &tape.activations[k];
            for (i, &xi) in input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &mut grad.weights[i * layer.outputs..(i + 1) * layer.outputs];
                for (g, &d) in row.iter_mut().zip(&delta) {
                    *g += xi * d;
                }
            }
            for (g, &d) in grad.bias.iter_mut().zip(&delta) {
                *g += d;
            }
            if k == 0 {
                break;
            }
            // Input of layer k is the rectified output of layer k-1.
            let mut next = vec![0.0; layer.inputs];
            for (i, n) in next.iter_mut().enumerate() {
                if input[i] <= 0.0 {
                    continue;
                }
                let row = &layer.weights[i * layer.outputs..(i + 1) * layer.outputs];
                *n = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
            }
            delta = next;
        }
        Ok(())
    }

    /// One adaptive-moment update with bias correction.
    pub fn optimizer_step(&mut self, grads: &GradientBundle, lambda: f64) -> Result<()> {
        let shape = self.shape();
        let grad_shape: Vec<_> = grads.layers.iter().map(|l| (l.inputs, l.outputs)).collect();
        if shape != grad_shape {
            return Err(Error::ContractViolation(format!(
                "gradient shape {grad_shape:?} does not match parameters {shape:?}"
            )));
        }
        if let Some(pos) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::non_finite(format!(
                "gradient entry {pos} at optimizer step {}",
                self.step + 1
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::validation(format!("invalid learning rate {lambda}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - ADAM_BETA1.powi(t);
        let correction2 = 1.0 - ADAM_BETA2.powi(t);
        let params = self.layers.iter_mut().flat_map(Layer::values_mut);
        let m = self.first_moment.iter_mut().flat_map(Layer::values_mut);
        let v = self.second_moment.iter_mut().flat_map(Layer::values_mut);
        for (((p, m), v), &g) in params.zip(m).zip(v).zip(grads.iter()) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p -= lambda * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
        if self.parameters().any(|p| !p.is_finite()) {
            return Err(Error::non_finite(format!(
                "parameters after optimizer step {}",
                self.step
            )));
        }
        Ok(())
    }

    /// Binary checkpoint: magic, version, layer shapes, step counter, then
    /// parameters, first and second moments as little-endian `f64`.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            w.write_all(&(l.inputs as u64).to_le_bytes())?;
            w.write_all(&(l.outputs as u64).to_le_bytes())?;
        }
        w.write_all(&self.step.to_le_bytes())?;
        for set in [&self.layers, &self.first_moment, &self.second_moment] {
            for x in set.iter().flat_map(Layer::values) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        fn bad(msg: &str) -> Error {
            Error::validation(format!("malformed checkpoint: {msg}"))
        }
        fn read_bytes<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
            let mut buf = [0u8; N];
            r.read_exact(&mut buf).map_err(|_| bad("truncated"))?;
            Ok(buf)
        }
        if &read_bytes::<8, _>(&mut r)? != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(read_bytes(&mut r)?);
        if version != CHECKPOINT_VERSION {
            return Err(bad("unsupported version"));
        }
        let n_layers = u32::from_le_bytes(read_bytes(&mut r)?) as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(bad("layer count"));
        }
        let mut shape = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let i = u64::from_le_bytes(read_bytes(&mut r)?) as usize;
            let o = u64::from_le_bytes(read_bytes(&mut r)?) as usize;
            if i == 0 || o == 0 || i > 1 << 24 || o > 1 << 24 {
                return Err(bad("layer shape"));
            }
            shape.push((i, o));
        }
        if shape.windows(2).any(|w| w[0].1 != w[1].0) || shape[n_layers - 1].1 != 1 {
            return Err(bad("inconsistent layer shapes"));
        }
        let step = u64::from_le_bytes(read_bytes(&mut r)?);
        let read_set = |r: &mut R| -> Result<Vec<Layer>> {
            let mut set: Vec<Layer> = shape.iter().map(|&(i, o)| Layer::zeros(i, o)).collect();
            for x in set.iter_mut().flat_map(Layer::values_mut) {
                *x = f64::from_le_bytes(read_bytes(r)?);
            }
            Ok(set)
        };
        let layers = read_set(&mut r)?;
        let first_moment = read_set(&mut r)?;
        let second_moment = read_set(&mut r)?;
        let net = Self {
            layers,
            first_moment,
            second_moment,
            step,
        };
        if net.parameters().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        Ok(net)
    }
}

/// Relative-quality head `D -> H1 -> H2 -> 1`.
pub fn head_init(feature_dim: usize, hidden_dims: (usize, usize), rng: &mut Stream) -> Result<Mlp> {
    Mlp::new(&[feature_dim, hidden_dims.0, hidden_dims.1, 1], rng)
}

/// Predicted quality difference between item `x` and reference `r`.
pub fn s_theta_forward(params: &Mlp, feat_x: &[f64], feat_r: &[f64]) -> Result<(f64, Tape)> {
    if feat_x.len() != feat_r.len() {
        return Err(Error::DimensionMismatch {
            expected: feat_x.len(),
            actual: feat_r.len(),
        });
    }
    let diff: Vec<f64> = feat_x.iter().zip(feat_r).map(|(a, b)| a - b).collect();
    params.forward(&diff)
}

pub fn s_theta_backward(params: &Mlp, tape: &Tape, upstream: f64) -> Result<GradientBundle> {
    params.backward(tape, upstream)
}
