//! Fully connected networks as finite sequences of (matrix, bias) pairs,
//! their leaky-ReLU realizations, weight/neuron counts, the exact ReLU <->
//! leaky-ReLU conversions and reverse-mode gradients.
//!
//! A network `((A_1, b_1), ..., (A_L, b_L))` realizes
//!
//! ```text
//!     x_0 = x,  x_l = rho(A_l x_{l-1} + b_l) for l < L,  x_L = A_L x_{L-1} + b_L
//! ```
//!
//! with `rho(t) = max(t, alpha t)` acting componentwise.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};

/// `max(t, alpha t)`.
#[inline]
pub fn lrelu(t: f64, alpha: f64) -> f64 {
    if t >= 0.0 {
        t
    } else {
        alpha * t
    }
}

/// Derivative used in backpropagation; the kink at `t = 0` gets slope `alpha`.
#[inline]
pub fn lrelu_slope(t: f64, alpha: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        alpha
    }
}

/// One affine map `x -> A x + b` with `A` stored row-major (`rows x cols`).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("layer dimensions must be positive"));
        }
        if weights.len() != rows * cols || bias.len() != rows {
            return Err(invalid("layer buffers do not match its shape"));
        }
        Ok(Self {
            rows,
            cols,
            weights,
            bias,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    pub fn weight(&self, r: usize, c: usize) -> f64 {
        self.weights[r * self.cols + c]
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            *o = self.bias[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    fn nonzeros(&self) -> usize {
        self.weights.iter().chain(&self.bias).filter(|&&v| v != 0.0).count()
    }
}

/// Complexity measures of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkCounts {
    /// Nonzero weights and biases.
    pub weights: usize,
    /// `N_0 + N_1 + ... + N_L`.
    pub neurons: usize,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(invalid("leaky-ReLU slope must lie in [0, 1)"))
    }
}

impl Network {
    pub fn new(layers: Vec<Layer>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if layers.is_empty() {
            return Err(invalid("a network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[1].cols != pair[0].rows {
                return Err(invalid("consecutive layer shapes do not chain"));
            }
        }
        for l in &layers {
            if l.weights.len() != l.rows * l.cols || l.bias.len() != l.rows {
                return Err(invalid("layer buffers do not match its shape"));
            }
        }
        Ok(Self { layers, alpha })
    }

    /// Network with architecture `(N_0, ..., N_L)` whose weights and biases
    /// are i.i.d. `N(0, std^2)`, drawn layer by layer (weights row-major, then
    /// bias) from a ChaCha8 stream keyed by `seed`.
    pub fn init(architecture: &[usize], std: f64, alpha: f64, seed: u64) -> Result<Self> {
        if architecture.len() < 2 {
            return Err(invalid("architecture needs an input and an output width"));
        }
        if architecture.contains(&0) {
            return Err(invalid("layer widths must be positive"));
        }
        if !(std >= 0.0) || !std.is_finite() {
            return Err(invalid("initialization std must be finite and non-negative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).map_err(|_| invalid("bad initialization std"))?;
        let mut layers = Vec::with_capacity(architecture.len() - 1);
        for w in architecture.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let mut layer = Layer::zeros(rows, cols);
            if std > 0.0 {
                layer
                    .weights
                    .iter_mut()
                    .chain(layer.bias.iter_mut())
                    .for_each(|v| *v = normal.sample(&mut rng));
            }
            layers.push(layer);
        }
        Self::new(layers, alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    /// `(N_0, ..., N_L)`.
    pub fn architecture(&self) -> Vec<usize> {
        let mut arch = Vec::with_capacity(self.layers.len() + 1);
        arch.push(self.input_dim());
        arch.extend(self.layers.iter().map(|l| l.rows));
        arch
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn counts(&self) -> NetworkCounts {
        NetworkCounts {
            weights: self.layers.iter().map(Layer::nonzeros).sum(),
            neurons: self.architecture().iter().sum(),
            layers: self.layers.len(),
        }
    }

    /// Realization under the network's own slope.
    pub fn realize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.realize_with(self.alpha, x)
    }

    /// Realization under an arbitrary leaky-ReLU slope.
    pub fn realize_with(&self, alpha: f64, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(invalid("input length does not match network input width"));
        }
        let mut cur = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; layer.rows];
            layer.apply(&cur, &mut next);
            if l < last {
                next.iter_mut().for_each(|v| *v = lrelu(*v, alpha));
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Equivalent network for the ReLU: `R_relu(result) = R_alpha(self)`.
    ///
    /// Hidden widths double; every hidden pre-activation `z` is carried as
    /// `(z, -z)` and recombined as `relu(z) - alpha relu(-z)`.
    pub fn to_relu(&self) -> Result<Network> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("source slope must lie in (0, 1)"));
        }
        let alpha = self.alpha;
        Network::new(self.split_hidden(1.0, -alpha), 0.0)
    }

    /// Equivalent network for the `alpha`-leaky ReLU of a ReLU network:
    /// `R_alpha(result) = R_relu(self)`, recombining with
    /// `(rho(z) + alpha rho(-z)) / (1 - alpha^2)`.
    pub fn to_lrelu(&self, alpha: f64) -> Result<Network> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("target slope must lie in (0, 1)"));
        }
        if self.alpha != 0.0 {
            return Err(invalid("source network must be a ReLU network"));
        }
        let scale = 1.0 / (1.0 - alpha * alpha);
        Network::new(self.split_hidden(scale, alpha * scale), alpha)
    }

    /// Applies `P` on the output side of every hidden layer and the
    /// recombination `(x_{2j}, x_{2j+1}) -> c0 x_{2j} + c1 x_{2j+1}` on the
    /// input side of every layer after the first.
    fn split_hidden(&self, c0: f64, c1: f64) -> Vec<Layer> {
        let last = self.layers.len() - 1;
        self.layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let merge_inputs = l > 0;
                let split_outputs = l < last;
                let cols = if merge_inputs { 2 * layer.cols } else { layer.cols };
                let mut base = Vec::with_capacity(layer.rows * cols);
                for r in 0..layer.rows {
                    for c in 0..layer.cols {
                        let w = layer.weight(r, c);
                        if merge_inputs {
                            base.push(w * c0);
                            base.push(w * c1);
                        } else {
                            base.push(w);
                        }
                    }
                }
                if !split_outputs {
                    return Layer {
                        rows: layer.rows,
                        cols,
                        weights: base,
                        bias: layer.bias.clone(),
                    };
                }
                let mut weights = Vec::with_capacity(2 * base.len());
                let mut bias = Vec::with_capacity(2 * layer.rows);
                for r in 0..layer.rows {
                    let row = &base[r * cols..(r + 1) * cols];
                    weights.extend_from_slice(row);
                    weights.extend(row.iter().map(|v| -v));
                    bias.push(layer.bias[r]);
                    bias.push(-layer.bias[r]);
                }
                Layer {
                    rows: 2 * layer.rows,
                    cols,
                    weights,
                    bias,
                }
            })
            .collect()
    }

    /// Batched forward pass. `inputs` holds `batch` rows of length `N_0`.
    pub fn forward_batch(&self, inputs: &[f64], batch: usize) -> Result<Tape> {
        if batch == 0 || inputs.len() != batch * self.input_dim() {
            return Err(invalid("batch input has the wrong size"));
        }
        let last = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(last);
        for (l, layer) in self.layers.iter().enumerate() {
            let x = if l == 0 { inputs } else { &post[l - 1] };
            let mut z = Vec::with_capacity(batch * layer.rows);
            for _ in 0..batch {
                z.extend_from_slice(&layer.bias);
            }
            // Z (B x rows) += X (B x cols) * A^T
            gemm(
                batch,
                layer.cols,
                layer.rows,
                x,
                (layer.cols as isize, 1),
                &layer.weights,
                (1, layer.cols as isize),
                1.0,
                &mut z,
            );
            if l < last {
                let alpha = self.alpha;
                post.push(z.iter().map(|&v| lrelu(v, alpha)).collect());
                pre.push(z);
            } else {
                pre.push(z);
            }
        }
        Ok(Tape {
            batch,
            inputs: inputs.to_vec(),
            pre,
            post,
        })
    }

    /// Gradients of `sum_b <upstream_b, R(x_b)>` with respect to every weight
    /// and bias, for the batch recorded in `tape`.
    pub fn backward_batch(&self, tape: &Tape, upstream: &[f64]) -> Result<Gradients> {
        let batch = tape.batch;
        if upstream.len() != batch * self.output_dim() {
            return Err(invalid("upstream gradient has the wrong size"));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let x: &[f64] = if l == 0 { &tape.inputs } else { &tape.post[l - 1] };
            let g = &mut grads.layers[l];
            // dA (rows x cols) = delta^T (rows x B) * X (B x cols)
            gemm(
                layer.rows,
                batch,
                layer.cols,
                &delta,
                (1, layer.rows as isize),
                x,
                (layer.cols as isize, 1),
                0.0,
                &mut g.weights,
            );
            for row in delta.chunks_exact(layer.rows) {
                for (gb, d) in g.bias.iter_mut().zip(row) {
                    *gb += d;
                }
            }
            if l == 0 {
                break;
            }
            // dX (B x cols) = delta (B x rows) * A (rows x cols)
            let mut dx = vec![0.0; batch * layer.cols];
            gemm(
                batch,
                layer.rows,
                layer.cols,
                &delta,
                (layer.rows as isize, 1),
                &layer.weights,
                (layer.cols as isize, 1),
                0.0,
                &mut dx,
            );
            let alpha = self.alpha;
            for (d, &z) in dx.iter_mut().zip(&tape.pre[l - 1]) {
                *d *= lrelu_slope(z, alpha);
            }
            delta = dx;
        }
        Ok(grads)
    }

    /// Single-input gradient of `<upstream, R(x)>`.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<Gradients> {
        if x.len() != self.input_dim() {
            return Err(invalid("input length does not match network input width"));
        }
        let tape = self.forward_batch(x, 1)?;
        self.backward_batch(&tape, upstream)
    }
}

/// Intermediate values of a batched forward pass, row-major per sample.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    inputs: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Network outputs, `batch x N_L` row-major.
    pub fn output(&self) -> &[f64] {
        &self.pre[self.pre.len() - 1]
    }

    /// Hidden pre-activations of layer `l` (0-based).
    pub fn pre_activations(&self, l: usize) -> &[f64] {
        &self.pre[l]
    }
}

/// Gradients (or any other per-parameter buffer) shaped like a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.rows, l.cols))
                .collect(),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Flattened view in the order weights(1), bias(1), weights(2), ...
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// `C = A B + beta C` where `A` is `m x k`, `B` is `k x n` (given by row and
/// column strides) and `C` is dense row-major `m x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    let span = |rows: usize, cols: usize, (rs, cs): (isize, isize)| {
        (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
    };
    assert!(m > 0 && k > 0 && n > 0);
    assert!(span(m, k, a_strides) <= a.len());
    assert!(span(k, n, b_strides) <= b.len());
    assert_eq!(c.len(), m * n);
    // SAFETY: strides are non-negative and the asserts above keep every
    // addressed element inside the borrowed slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
