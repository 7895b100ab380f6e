use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer widths of the torque estimator: 23 inputs, three tanh layers, 7 linear outputs.
pub const DEFAULT_SIZES: [usize; 5] = [23, 21, 14, 7, 7];

const FORMAT: &str = "exodyn-mlp";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

/// Fully connected layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }

    fn forward_into(&self, x: &[f64], y: &mut [f64]) {
        for (o, out) in y.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z = row.iter().zip(x).fold(self.bias[o], |acc, (w, v)| acc + w * v);
            *out = self.activation.apply(z);
        }
    }
}

/// Per-feature affine map `z = (x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Affine {
    pub fn identity(n: usize) -> Self {
        Affine { mean: vec![0.0; n], scale: vec![1.0; n] }
    }

    /// Mean and standard deviation of each column; constant columns get scale 1.
    pub fn fit<'a>(columns: usize, rows: impl Iterator<Item = &'a [f64]> + Clone) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; columns];
        for r in rows.clone() {
            n += 1;
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        if n == 0 {
            return Affine::identity(columns);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; columns];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n as f64).sqrt();
                if sd > 1e-12 * (1.0 + sd) && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Affine { mean, scale }
    }

    pub fn normalize(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = (x[i] - self.mean[i]) / self.scale[i];
        }
    }

    pub fn denormalize(&self, z: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = z[i] * self.scale[i] + self.mean[i];
        }
    }

    fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.scale).all(|v| v.is_finite()) && self.scale.iter().all(|s| *s != 0.0)
    }
}

/// Dense feed-forward network with input and output standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub format: String,
    pub version: u32,
    pub sizes: Vec<usize>,
    pub layers: Vec<Layer>,
    pub input_norm: Affine,
    pub output_norm: Affine,
}

/// Activations of one forward pass, kept for backpropagation.
pub(crate) struct Trace {
    pub layers: Vec<Vec<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 || sizes.contains(&0) {
            return Err(Error::Config(format!(
                "invalid network shape {sizes:?} with {} activations",
                activations.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                Layer {
                    inputs,
                    outputs,
                    activation,
                    weights: (0..inputs * outputs).map(|_| rng.gen_range(-limit..=limit)).collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Mlp {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            sizes: sizes.to_vec(),
            layers,
            input_norm: Affine::identity(sizes[0]),
            output_norm: Affine::identity(sizes[sizes.len() - 1]),
        })
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All weights and biases, layer by layer (row-major weights, then biases).
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape { expected: self.param_count(), actual: params.len() });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != FORMAT || self.version != FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported model format {} v{}", self.format, self.version)));
        }
        if self.sizes.len() != self.layers.len() + 1 {
            return Err(Error::Config("layer count does not match sizes".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs != self.sizes[i]
                || l.outputs != self.sizes[i + 1]
                || l.weights.len() != l.inputs * l.outputs
                || l.bias.len() != l.outputs
            {
                return Err(Error::Config(format!("layer {} shape is inconsistent", i + 1)));
            }
        }
        if self.input_norm.mean.len() != self.input_width()
            || self.input_norm.scale.len() != self.input_width()
            || self.output_norm.mean.len() != self.output_width()
            || self.output_norm.scale.len() != self.output_width()
            || !self.input_norm.is_finite()
            || !self.output_norm.is_finite()
        {
            return Err(Error::Config("normalization statistics are invalid".into()));
        }
        Ok(())
    }

    pub(crate) fn trace(&self, z_in: &[f64]) -> Trace {
        let mut layers = Vec::with_capacity(self.layers.len() + 1);
        layers.push(z_in.to_vec());
        for l in &self.layers {
            let mut y = vec![0.0; l.outputs];
            l.forward_into(layers.last().unwrap(), &mut y);
            layers.push(y);
        }
        Trace { layers }
    }

    /// Network output in standardized units for a standardized input.
    pub(crate) fn forward_normalized(&self, z_in: &[f64]) -> Vec<f64> {
        self.trace(z_in).layers.pop().unwrap()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::Shape { expected: self.input_width(), actual: input.len() });
        }
        let mut z = vec![0.0; input.len()];
        self.input_norm.normalize(input, &mut z);
        let zo = self.forward_normalized(&z);
        let mut out = vec![0.0; zo.len()];
        self.output_norm.denormalize(&zo, &mut out);
        Ok(out)
    }

    /// Writes `∂(standardized output k)/∂params` for every output `k` into
    /// `out`, one contiguous gradient of length `param_count()` per output.
    pub(crate) fn jacobian_normalized_into(&self, trace: &Trace, out: &mut [f64]) {
        let p = self.param_count();
        let n_out = self.output_width();
        debug_assert_eq!(out.len(), n_out * p);

        // Parameter offset of each layer.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.param_count();
        }

        let last = self.layers.len() - 1;
        for k in 0..n_out {
            let grad = &mut out[k * p..(k + 1) * p];
            // delta at the pre-activation of the current layer
            let mut delta = vec![0.0; self.layers[last].outputs];
            delta[k] = self.layers[last].activation.slope(trace.layers[last + 1][k]);
            for li in (0..=last).rev() {
                let l = &self.layers[li];
                let a_prev = &trace.layers[li];
                let off = offsets[li];
                for (o, d) in delta.iter().enumerate() {
                    let row = &mut grad[off + o * l.inputs..off + (o + 1) * l.inputs];
                    for (g, a) in row.iter_mut().zip(a_prev) {
                        *g = d * a;
                    }
                    grad[off + l.inputs * l.outputs + o] = *d;
                }
                if li > 0 {
                    let prev_act = self.layers[li - 1].activation;
                    let mut next = vec![0.0; l.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                        for (n, w) in next.iter_mut().zip(row) {
                            *n += w * d;
                        }
                    }
                    for (n, a) in next.iter_mut().zip(a_prev) {
                        *n *= prev_act.slope(*a);
                    }
                    delta = next;
                }
            }
        }
    }

    /// Jacobian of the (denormalized) outputs with respect to every weight
    /// and bias; row `k` belongs to output `k`.
    pub fn jacobian(&self, input: &[f64]) -> Result<nalgebra::DMatrix<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::Shape { expected: self.input_width(), actual: input.len() });
        }
        let mut z = vec![0.0; input.len()];
        self.input_norm.normalize(input, &mut z);
        let trace = self.trace(&z);
        let p = self.param_count();
        let n_out = self.output_width();
        let mut buf = vec![0.0; n_out * p];
        self.jacobian_normalized_into(&trace, &mut buf);
        Ok(nalgebra::DMatrix::from_fn(n_out, p, |k, j| buf[k * p + j] * self.output_norm.scale[k]))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mlp: Mlp = serde_json::from_str(text)?;
        mlp.validate()?;
        Ok(mlp)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Mlp::from_json(&text)
    }
}

/// Network with the 23-21-14-7-7 layout, tanh hidden layers and a linear output.
pub fn mlp_init(seed: u64) -> Mlp {
    use Activation::*;
    Mlp::new(&DEFAULT_SIZES, &[Tanh, Tanh, Tanh, Linear], seed).expect("static shape is valid")
}
