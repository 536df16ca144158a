//! Minimal feedforward network with hand-written reverse-mode gradients.
//!
//! Hidden layers use relu or tanh, the output layer is affine. Parameters
//! live in 64-bit floats; the relu subgradient at exactly zero is zero so
//! input gradients are reproducible.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read as _, Write as _};
use std::path::Path;

use crate::{Result, W2Error};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the post-activation value.
    fn derivative_from_output(&self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Flat gradient in parameter layout order (per layer: weights row-major,
/// then biases).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>, // [out x in] per layer
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
}

impl Mlp {
    /// Seeded init: weights uniform in `[-s/sqrt(fan_in), s/sqrt(fan_in)]`,
    /// biases zero.
    pub fn new(
        layer_sizes: &[usize],
        activation: Activation,
        seed: u64,
        init_scale: f64,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(W2Error::InvalidNetwork("need at least two layers".into()));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(W2Error::InvalidNetwork("zero-width layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = init_scale / (fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| {
                rng.gen_range(-bound..=bound)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(W2Error::ShapeMismatch(format!(
                "{} parameters for a {}-parameter net",
                flat.len(),
                self.param_count()
            )));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for x in w.iter_mut() {
                *x = flat[k];
                k += 1;
            }
            for x in b.iter_mut() {
                *x = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Forward pass on a batch (rows are samples).
    pub fn forward(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(batch)?.pop().unwrap())
    }

    /// All post-activation layers, `[batch, a_1, ..., output]`.
    fn forward_cached(&self, batch: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        if batch.ncols() != self.input_size() {
            return Err(W2Error::ShapeMismatch(format!(
                "batch has {} columns, input layer expects {}",
                batch.ncols(),
                self.input_size()
            )));
        }
        let last = self.weights.len() - 1;
        let mut acts = vec![batch.clone()];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts.last().unwrap().dot(&w.t());
            z += &b.view().insert_axis(Axis(0));
            if l < last {
                z.mapv_inplace(|v| self.activation.apply(v));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Backpropagates `upstream` (dL/d output, per sample) through the
    /// cached activations. Returns the flat parameter gradient and the
    /// gradient with respect to the input batch.
    fn backward(&self, acts: &[Array2<f64>], upstream: Array2<f64>) -> (GradientVector, Array2<f64>) {
        let layers = self.weights.len();
        let mut grads_w: Vec<Array2<f64>> = Vec::with_capacity(layers);
        let mut grads_b: Vec<Array1<f64>> = Vec::with_capacity(layers);
        let mut delta = upstream;
        for l in (0..layers).rev() {
            grads_w.push(delta.t().dot(&acts[l]));
            grads_b.push(delta.sum_axis(Axis(0)));
            delta = delta.dot(&self.weights[l]);
            if l > 0 {
                // acts[l] is the post-activation of a hidden layer
                delta
                    .iter_mut()
                    .zip(acts[l].iter())
                    .for_each(|(d, &a)| *d *= self.activation.derivative_from_output(a));
            }
        }
        grads_w.reverse();
        grads_b.reverse();
        let mut flat = Vec::with_capacity(self.param_count());
        for (w, b) in grads_w.iter().zip(&grads_b) {
            flat.extend(w.iter());
            flat.extend(b.iter());
        }
        (GradientVector(flat), delta)
    }

    /// Mean squared error `(1/m) sum_i |t_i - f(x_i)|^2` and its exact
    /// parameter gradient.
    pub fn mse_loss_grad(
        &self,
        inputs: &Array2<f64>,
        targets: &Array2<f64>,
    ) -> Result<(f64, GradientVector)> {
        if targets.nrows() != inputs.nrows() || targets.ncols() != self.output_size() {
            return Err(W2Error::ShapeMismatch("targets shape".into()));
        }
        let acts = self.forward_cached(inputs)?;
        let out = acts.last().unwrap();
        let m = inputs.nrows() as f64;
        let diff = out - targets;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / m;
        let upstream = diff.mapv(|d| 2.0 * d / m);
        let (grad, _) = self.backward(&acts, upstream);
        Ok((loss, grad))
    }

    /// Batch mean of the scalar output and the gradient of
    /// `sign * mean` with respect to parameters.
    pub fn scalar_head_grad(
        &self,
        inputs: &Array2<f64>,
        sign: f64,
    ) -> Result<(f64, GradientVector)> {
        if self.output_size() != 1 {
            return Err(W2Error::InvalidNetwork(
                "scalar head requires output size 1".into(),
            ));
        }
        let acts = self.forward_cached(inputs)?;
        let m = inputs.nrows() as f64;
        let value = acts.last().unwrap().sum() / m;
        let upstream = Array2::from_elem((inputs.nrows(), 1), sign / m);
        let (grad, _) = self.backward(&acts, upstream);
        Ok((value, grad))
    }

    /// Scalar-output values for a batch, one per row.
    pub fn scalar_values(&self, batch: &Array2<f64>) -> Result<Array1<f64>> {
        if self.output_size() != 1 {
            return Err(W2Error::InvalidNetwork(
                "scalar values require output size 1".into(),
            ));
        }
        Ok(self.forward(batch)?.index_axis(Axis(1), 0).to_owned())
    }

    /// Parameter gradient of `sum_i c_i * f(x_i)` for a scalar-output net.
    pub fn scalar_weighted_grad(
        &self,
        batch: &Array2<f64>,
        sample_weights: &[f64],
    ) -> Result<GradientVector> {
        if self.output_size() != 1 {
            return Err(W2Error::InvalidNetwork(
                "weighted scalar grad requires output size 1".into(),
            ));
        }
        if sample_weights.len() != batch.nrows() {
            return Err(W2Error::ShapeMismatch("sample weight count".into()));
        }
        let acts = self.forward_cached(batch)?;
        let upstream =
            Array2::from_shape_fn((batch.nrows(), 1), |(i, _)| sample_weights[i]);
        let (grad, _) = self.backward(&acts, upstream);
        Ok(grad)
    }

    /// Parameter gradient for an arbitrary upstream `dL/d output` batch.
    pub fn output_grad(
        &self,
        inputs: &Array2<f64>,
        upstream: &Array2<f64>,
    ) -> Result<GradientVector> {
        if upstream.nrows() != inputs.nrows() || upstream.ncols() != self.output_size() {
            return Err(W2Error::ShapeMismatch("upstream shape".into()));
        }
        let acts = self.forward_cached(inputs)?;
        let (grad, _) = self.backward(&acts, upstream.clone());
        Ok(grad)
    }

    /// Gradient of the scalar output with respect to one input point.
    pub fn input_gradient(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        if self.output_size() != 1 {
            return Err(W2Error::InvalidNetwork(
                "input gradient requires output size 1".into(),
            ));
        }
        let batch = x.view().insert_axis(Axis(0)).to_owned();
        let acts = self.forward_cached(&batch)?;
        let upstream = Array2::from_elem((1, 1), 1.0);
        let (_, dx) = self.backward(&acts, upstream);
        Ok(dx.index_axis(Axis(0), 0).to_owned())
    }

    /// Input gradients for a whole batch of points, one row each.
    pub fn input_gradient_batch(&self, batch: &Array2<f64>) -> Result<Array2<f64>> {
        if self.output_size() != 1 {
            return Err(W2Error::InvalidNetwork(
                "input gradient requires output size 1".into(),
            ));
        }
        let acts = self.forward_cached(batch)?;
        let upstream = Array2::from_elem((batch.nrows(), 1), 1.0);
        let (_, dx) = self.backward(&acts, upstream);
        Ok(dx)
    }

    /// `parameters <- parameters - lr * grad`.
    pub fn sgd_step(&mut self, grad: &GradientVector, lr: f64) -> Result<()> {
        if grad.0.len() != self.param_count() {
            return Err(W2Error::ShapeMismatch("gradient length".into()));
        }
        if grad.0.iter().any(|g| !g.is_finite()) {
            return Err(W2Error::NonFinite("gradient".into()));
        }
        let mut params = self.params_flat();
        for (p, g) in params.iter_mut().zip(&grad.0) {
            *p -= lr * g;
        }
        self.set_params_flat(&params)
    }

    /// `k` successive (loss, gradient, step) cycles on the fixed batch.
    /// Targets are never recomputed inside the loop.
    pub fn persistent_fit(
        &mut self,
        inputs: &Array2<f64>,
        targets: &Array2<f64>,
        k: usize,
        lr: f64,
    ) -> Result<Vec<f64>> {
        if k == 0 {
            return Err(W2Error::OutOfRange("persistency level must be >= 1".into()));
        }
        let mut losses = Vec::with_capacity(k);
        for _ in 0..k {
            let (loss, grad) = self.mse_loss_grad(inputs, targets)?;
            self.sgd_step(&grad, lr)?;
            losses.push(loss);
        }
        Ok(losses)
    }

    /// Writes parameters as little-endian f64s plus a JSON sidecar.
    pub fn save_checkpoint(&self, path: &Path, seed: u64) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for p in self.params_flat() {
            f.write_all(&p.to_le_bytes())?;
        }
        let sidecar = serde_json::json!({
            "layer_sizes": self.layer_sizes,
            "activation": self.activation,
            "seed": seed,
        });
        std::fs::write(
            path.with_extension("json"),
            serde_json::to_string_pretty(&sidecar).map_err(|e| W2Error::Config(e.to_string()))?,
        )?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let sidecar: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(
            path.with_extension("json"),
        )?)
        .map_err(|e| W2Error::Config(e.to_string()))?;
        let layer_sizes: Vec<usize> = serde_json::from_value(sidecar["layer_sizes"].clone())
            .map_err(|e| W2Error::Config(e.to_string()))?;
        let activation: Activation = serde_json::from_value(sidecar["activation"].clone())
            .map_err(|e| W2Error::Config(e.to_string()))?;
        let mut net = Mlp::new(&layer_sizes, activation, 0, 0.0)?;
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * net.param_count() {
            return Err(W2Error::Config("checkpoint size mismatch".into()));
        }
        let params: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        net.set_params_flat(&params)?;
        Ok(net)
    }
}
