use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, ParamGrads, Parameterized, Tensor};
use crate::error::{Error, Result};

/// Elementwise activation. Derivatives are recovered from the activated value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
    Softplus,
    /// `scale · softplus(x)`.
    ScaledSoftplus(f64),
    /// `sigmoid(x / 2)`.
    SigmoidHalfInput,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => softplus(x),
            Activation::ScaledSoftplus(s) => s * softplus(x),
            Activation::SigmoidHalfInput => sigmoid(0.5 * x),
        }
    }

    /// d(apply)/dx expressed through `y = apply(x)`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Softplus => -(-y).exp_m1(),
            Activation::ScaledSoftplus(s) => -s * (-y / s).exp_m1(),
            Activation::SigmoidHalfInput => 0.5 * y * (1.0 - y),
        }
    }
}

/// Named input of an MLP, concatenated into the layer with index `enter_at`
/// (`depth` = the output layer).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSlot {
    pub dim: usize,
    pub enter_at: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputHead {
    pub dim: usize,
    pub activation: Activation,
}

/// Fixed MLP topology: `depth` hidden layers of `width`, optional input
/// re-injection at `skip_layer` (every slot that entered earlier is
/// concatenated again), followed by a linear layer feeding the heads. With no
/// heads the network ends at the last hidden layer (a feature trunk).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub inputs: Vec<InputSlot>,
    pub width: usize,
    pub depth: usize,
    pub skip_layer: Option<usize>,
    pub hidden_activation: Activation,
    pub heads: Vec<OutputHead>,
}

impl MlpConfig {
    pub fn simple(input_dim: usize, width: usize, depth: usize, skip_layer: Option<usize>, heads: Vec<OutputHead>) -> Self {
        MlpConfig {
            inputs: vec![InputSlot {
                dim: input_dim,
                enter_at: 0,
            }],
            width,
            depth,
            skip_layer,
            hidden_activation: Activation::Relu,
            heads,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.depth + usize::from(!self.heads.is_empty())
    }

    pub fn output_dim(&self) -> usize {
        if self.heads.is_empty() {
            self.width
        } else {
            self.heads.iter().map(|h| h.dim).sum()
        }
    }

    /// Slots concatenated after the previous hidden state at layer `i`, ascending.
    fn layer_slots(&self, i: usize) -> Vec<usize> {
        self.inputs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.enter_at == i || (self.skip_layer == Some(i) && s.enter_at < i))
            .map(|(k, _)| k)
            .collect()
    }

    fn layer_dims(&self, i: usize) -> (usize, usize) {
        let prev = if i > 0 { self.width } else { 0 };
        let slots: usize = self.layer_slots(i).iter().map(|&k| self.inputs[k].dim).sum();
        let out = if i < self.depth { self.width } else { self.output_dim() };
        (prev + slots, out)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_layers();
        if n == 0 {
            return Err(Error::Config("MLP without layers".into()));
        }
        if let Some(s) = self.skip_layer {
            if s >= self.depth {
                return Err(Error::Config(format!("skip layer {s} >= depth {}", self.depth)));
            }
        }
        for (k, s) in self.inputs.iter().enumerate() {
            if s.enter_at >= n {
                return Err(Error::Config(format!("input slot {k} enters at layer {} of {n}", s.enter_at)));
            }
        }
        if self.layer_dims(0).0 == 0 {
            return Err(Error::Config("first layer has no inputs".into()));
        }
        Ok(())
    }

    /// Σ (in·out + out) over layers.
    pub fn param_count(&self) -> usize {
        (0..self.num_layers())
            .map(|i| {
                let (a, b) = self.layer_dims(i);
                a * b + b
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    in_dim: usize,
    out_dim: usize,
    /// `in_dim × out_dim`, row-major.
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Weights of one MLP. Optimizer moments live in [`super::AdamState`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpState {
    config: MlpConfig,
    layers: Vec<Dense>,
    version: u64,
}

/// Values recorded by a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    version: u64,
    batch: usize,
    /// Concatenated input of every layer, `batch × in_dim`.
    layer_inputs: Vec<Vec<f64>>,
    /// Activated output of every layer.
    layer_outputs: Vec<Vec<f64>>,
}

/// Per-layer `(dW, db)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads(pub Vec<(Vec<f64>, Vec<f64>)>);

impl MlpGrads {
    pub fn into_param_grads(self) -> ParamGrads {
        ParamGrads(self.0.into_iter().flat_map(|(w, b)| [w, b]).collect())
    }
}

#[derive(Debug, Clone)]
pub struct BackwardResult {
    pub grads: MlpGrads,
    /// Gradient with respect to each input slot, `batch × dim`.
    pub input_grads: Vec<Vec<f64>>,
}

// C(m×n) = A(m×k)·B(k×n) + beta·C with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: strides describe in-bounds views of `a` (m×k), `b` (k×n) and `c` (m×n).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl MlpState {
    /// Fan-in scaled uniform initialization `U(±√(6/fan_in))`, zero biases.
    pub fn new<R: Rng>(config: MlpConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.num_layers())
            .map(|i| {
                let (in_dim, out_dim) = config.layer_dims(i);
                let bound = (6.0 / in_dim as f64).sqrt();
                Dense {
                    in_dim,
                    out_dim,
                    w: (0..in_dim * out_dim).map(|_| rng.gen_range(-bound..bound)).collect(),
                    b: vec![0.0; out_dim],
                }
            })
            .collect();
        Ok(MlpState {
            config,
            layers,
            version: 0,
        })
    }

    pub fn zeros(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        let layers = (0..config.num_layers())
            .map(|i| {
                let (in_dim, out_dim) = config.layer_dims(i);
                Dense {
                    in_dim,
                    out_dim,
                    w: vec![0.0; in_dim * out_dim],
                    b: vec![0.0; out_dim],
                }
            })
            .collect();
        Ok(MlpState {
            config,
            layers,
            version: 0,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    /// Mutable weights `(w, b)` of layer `i`.
    pub fn layer_mut(&mut self, i: usize) -> (&mut [f64], &mut [f64]) {
        self.version += 1;
        let l = &mut self.layers[i];
        (&mut l.w, &mut l.b)
    }

    fn check_inputs(&self, inputs: &[&[f64]], batch: usize) -> Result<()> {
        if inputs.len() != self.config.inputs.len() {
            return Err(Error::Shape {
                expected: self.config.inputs.len(),
                got: inputs.len(),
            });
        }
        for (x, s) in inputs.iter().zip(&self.config.inputs) {
            if x.len() != batch * s.dim {
                return Err(Error::Shape {
                    expected: batch * s.dim,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    /// Forward pass over `batch` rows; `inputs[k]` is `batch × dim_k`.
    pub fn forward_slices(&self, inputs: &[&[f64]], batch: usize) -> Result<(Vec<f64>, MlpTape)> {
        self.check_inputs(inputs, batch)?;
        let n = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(n);
        let mut layer_outputs: Vec<Vec<f64>> = Vec::with_capacity(n);
        for (i, layer) in self.layers.iter().enumerate() {
            let slots = self.config.layer_slots(i);
            let mut x = vec![0.0; batch * layer.in_dim];
            for r in 0..batch {
                let row = &mut x[r * layer.in_dim..(r + 1) * layer.in_dim];
                let mut off = 0;
                if i > 0 {
                    let w = self.config.width;
                    row[..w].copy_from_slice(&layer_outputs[i - 1][r * w..(r + 1) * w]);
                    off = w;
                }
                for &k in &slots {
                    let d = self.config.inputs[k].dim;
                    row[off..off + d].copy_from_slice(&inputs[k][r * d..(r + 1) * d]);
                    off += d;
                }
            }
            let out = layer.out_dim;
            let mut y = vec![0.0; batch * out];
            for r in 0..batch {
                y[r * out..(r + 1) * out].copy_from_slice(&layer.b);
            }
            gemm(batch, layer.in_dim, out, &x, (layer.in_dim as isize, 1), &layer.w, (out as isize, 1), 1.0, &mut y);
            if i < self.config.depth {
                let act = self.config.hidden_activation;
                y.iter_mut().for_each(|v| *v = act.apply(*v));
            } else {
                for r in 0..batch {
                    let row = &mut y[r * out..(r + 1) * out];
                    let mut off = 0;
                    for head in &self.config.heads {
                        for v in &mut row[off..off + head.dim] {
                            *v = head.activation.apply(*v);
                        }
                        off += head.dim;
                    }
                }
            }
            layer_inputs.push(x);
            layer_outputs.push(y);
        }
        let output = layer_outputs.last().cloned().unwrap_or_default();
        Ok((
            output,
            MlpTape {
                version: self.version,
                batch,
                layer_inputs,
                layer_outputs,
            },
        ))
    }

    /// Forward pass on 2-D tensors, one per input slot.
    pub fn forward(&self, inputs: &[&Tensor]) -> Result<(Tensor, MlpTape)> {
        let batch = inputs.first().map(|t| t.rows()).unwrap_or(0);
        let slices: Vec<&[f64]> = inputs.iter().map(|t| t.data()).collect();
        let (y, tape) = self.forward_slices(&slices, batch)?;
        Ok((Tensor::from_rows(batch, self.output_dim(), y)?, tape))
    }

    /// Reverse pass: parameter gradients and input gradients for `d loss / d output`.
    pub fn backward(&self, tape: &MlpTape, output_grad: &[f64]) -> Result<BackwardResult> {
        if tape.version != self.version {
            return Err(Error::StaleTape("parameters changed since the forward pass"));
        }
        if tape.layer_inputs.len() != self.layers.len() {
            return Err(Error::StaleTape("tape recorded for a different network"));
        }
        let batch = tape.batch;
        let n = self.layers.len();
        if output_grad.len() != batch * self.layers[n - 1].out_dim {
            return Err(Error::Shape {
                expected: batch * self.layers[n - 1].out_dim,
                got: output_grad.len(),
            });
        }
        let mut input_grads: Vec<Vec<f64>> = self.config.inputs.iter().map(|s| vec![0.0; batch * s.dim]).collect();
        let mut grads = vec![(Vec::new(), Vec::new()); n];
        let mut upstream = output_grad.to_vec();

        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let out = layer.out_dim;
            let y = &tape.layer_outputs[i];
            let mut dz = upstream;
            if i < self.config.depth {
                let act = self.config.hidden_activation;
                for (g, &v) in dz.iter_mut().zip(y) {
                    *g *= act.derivative_from_output(v);
                }
            } else {
                for r in 0..batch {
                    let mut off = r * out;
                    for head in &self.config.heads {
                        for j in off..off + head.dim {
                            dz[j] *= head.activation.derivative_from_output(y[j]);
                        }
                        off += head.dim;
                    }
                }
            }

            let x = &tape.layer_inputs[i];
            let in_dim = layer.in_dim;
            let mut dw = vec![0.0; in_dim * out];
            gemm(in_dim, batch, out, x, (1, in_dim as isize), &dz, (out as isize, 1), 0.0, &mut dw);
            let mut db = vec![0.0; out];
            for r in 0..batch {
                for (d, g) in db.iter_mut().zip(&dz[r * out..(r + 1) * out]) {
                    *d += g;
                }
            }
            let mut dx = vec![0.0; batch * in_dim];
            gemm(batch, out, in_dim, &dz, (out as isize, 1), &layer.w, (1, out as isize), 0.0, &mut dx);
            grads[i] = (dw, db);

            let slots = self.config.layer_slots(i);
            let width = self.config.width;
            let prev = if i > 0 { width } else { 0 };
            let mut next = vec![0.0; if i > 0 { batch * width } else { 0 }];
            for r in 0..batch {
                let row = &dx[r * in_dim..(r + 1) * in_dim];
                if i > 0 {
                    next[r * width..(r + 1) * width].copy_from_slice(&row[..width]);
                }
                let mut off = prev;
                for &k in &slots {
                    let d = self.config.inputs[k].dim;
                    for (g, v) in input_grads[k][r * d..(r + 1) * d].iter_mut().zip(&row[off..off + d]) {
                        *g += v;
                    }
                    off += d;
                }
            }
            upstream = next;
        }
        Ok(BackwardResult {
            grads: MlpGrads(grads),
            input_grads,
        })
    }
}

impl Parameterized for MlpState {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| [(format!("layer{i}.weight"), l.w.as_slice()), (format!("layer{i}.bias"), l.b.as_slice())])
            .collect()
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.w.as_mut_slice(), l.b.as_mut_slice()])
            .collect()
    }
}
