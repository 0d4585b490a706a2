//! Mean relative Gram-norm loss, ADAM, and the epoch loop.
//!
//! The objective over a set of records `(y_i, u_i)` is
//!
//! ```text
//!     (1/N) sum_i |R(y_i) - u_i|_G / |u_i|_G
//! ```
//!
//! whose gradient with respect to the prediction `o` of record `i` is
//! `G (o - u_i) / (|o - u_i|_G |u_i|_G N)`. No matrix square root is formed.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, Record};
use crate::error::{invalid, Error, Result};
use crate::nn::{Gradients, Network};
use crate::sparse::CsrMatrix;

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub init_std: f64,
    /// Evaluate the test set every this many epochs (and after the last one).
    pub test_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            lr: 2.0e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1.0e-8,
            epochs: 40_000,
            seed: 0,
            init_std: 0.1,
            test_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(invalid("epochs must be at least 1"));
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0) || !(self.beta2 > 0.0 && self.beta2 < 1.0) {
            return Err(invalid("ADAM betas must lie in (0, 1)"));
        }
        if !(self.eps > 0.0) || !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid("learning rate and epsilon must be positive"));
        }
        if !(self.init_std >= 0.0) {
            return Err(invalid("initialization std must be non-negative"));
        }
        Ok(())
    }
}

/// First and second moment estimates of ADAM.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        Self {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }
    }

    /// One bias-corrected ADAM update of every weight and bias of `net`.
    pub fn step(&mut self, net: &mut Network, grads: &Gradients, cfg: &TrainConfig) -> Result<()> {
        if grads.layers.len() != net.depth() || self.m.layers.len() != net.depth() {
            return Err(invalid("gradient shape does not match network"));
        }
        self.t += 1;
        let hyper = AdamHyper::new(cfg, self.t);
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let g = &grads.layers[l];
            let m = &mut self.m.layers[l];
            let v = &mut self.v.layers[l];
            if g.weights.len() != layer.weights.len() || g.bias.len() != layer.bias.len() {
                return Err(invalid("gradient shape does not match network"));
            }
            hyper.apply(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights);
            hyper.apply(&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct AdamHyper {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    correction1: f64,
    correction2: f64,
}

impl AdamHyper {
    fn new(cfg: &TrainConfig, t: u64) -> Self {
        Self {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            correction1: 1.0 - libm::pow(cfg.beta1, t as f64),
            correction2: 1.0 - libm::pow(cfg.beta2, t as f64),
        }
    }

    fn apply(&self, params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64]) {
        for i in 0..params.len() {
            let g = grads[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = m[i] / self.correction1;
            let v_hat = v[i] / self.correction2;
            params[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
    }
}

/// ADAM update on raw slices with step counter `t` (already incremented).
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &TrainConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || m.len() != n || v.len() != n {
        return Err(invalid("ADAM buffers differ in length"));
    }
    if t == 0 {
        return Err(invalid("ADAM step counter starts at 1"));
    }
    AdamHyper::new(cfg, t).apply(params, grads, m, v);
    Ok(())
}

/// Gram norms of the reference solutions; fails on a vanishing one.
pub fn reference_norms(records: &[Record], gram: &CsrMatrix) -> Result<Vec<f64>> {
    records
        .iter()
        .enumerate()
        .map(|(index, r)| {
            if r.u.len() != gram.nrows() {
                return Err(invalid("record length does not match Gram matrix"));
            }
            let n = libm::sqrt(gram.quadratic_form(&r.u).max(0.0));
            if n > 0.0 {
                Ok(n)
            } else {
                Err(Error::DegenerateReference { index })
            }
        })
        .collect()
}

fn check_dims(net: &Network, records: &[Record], gram: &CsrMatrix) -> Result<()> {
    if net.output_dim() != gram.nrows() {
        return Err(invalid("network output width does not match Gram matrix"));
    }
    if records
        .iter()
        .any(|r| r.y.len() != net.input_dim() || r.u.len() != net.output_dim())
    {
        return Err(invalid("record dimensions do not match network"));
    }
    Ok(())
}

struct BatchEval {
    loss_sum: f64,
    max: f64,
    upstream: Option<Vec<f64>>,
    tape: crate::nn::Tape,
}

/// Forward pass over `idx`, per-sample relative errors, and (optionally) the
/// upstream gradient of `scale * sum_i err_i`.
///
/// The Gram products for the whole batch are formed in one dof-major block
/// product instead of one sparse mat-vec per sample.
fn eval_batch(
    net: &Network,
    records: &[Record],
    norms: &[f64],
    idx: &[usize],
    gram: &CsrMatrix,
    grad_scale: Option<f64>,
) -> Result<BatchEval> {
    let n0 = net.input_dim();
    let d = net.output_dim();
    let width = idx.len();
    let mut inputs = Vec::with_capacity(width * n0);
    for &i in idx {
        inputs.extend_from_slice(&records[i].y);
    }
    let tape = net.forward_batch(&inputs, width)?;
    let out = tape.output();
    let mut residual = vec![0.0; width * d];
    for (b, &i) in idx.iter().enumerate() {
        let o = &out[b * d..(b + 1) * d];
        for ((r, ov), uv) in residual[b * d..(b + 1) * d].iter_mut().zip(o).zip(&records[i].u) {
            *r = ov - uv;
        }
    }
    // diff[j * width + b] = out_b[j] - u_b[j]
    let mut diff = vec![0.0; d * width];
    transpose_into(&residual, width, d, &mut diff);
    let mut gdiff = vec![0.0; d * width];
    gram.mul_block_into(&diff, width, &mut gdiff);
    let mut sq = vec![0.0; width];
    for (dr, gr) in diff.chunks_exact(width).zip(gdiff.chunks_exact(width)) {
        for ((s, a), g) in sq.iter_mut().zip(dr).zip(gr) {
            *s += a * g;
        }
    }
    let mut loss_sum = 0.0;
    let mut max = 0.0f64;
    let mut coeff = vec![0.0; width];
    for (b, &i) in idx.iter().enumerate() {
        let dist = libm::sqrt(sq[b].max(0.0));
        let err = dist / norms[i];
        loss_sum += err;
        max = max.max(err);
        if let Some(scale) = grad_scale {
            if dist > 0.0 {
                coeff[b] = scale / (dist * norms[i]);
            }
        }
    }
    let upstream = grad_scale.map(|_| {
        for gr in gdiff.chunks_exact_mut(width) {
            for (g, c) in gr.iter_mut().zip(&coeff) {
                *g *= c;
            }
        }
        // reuse the residual buffer for the sample-major upstream gradient
        transpose_into(&gdiff, d, width, &mut residual);
        residual
    });
    Ok(BatchEval {
        loss_sum,
        max,
        upstream,
        tape,
    })
}

/// Cache-blocked transpose of a row-major `rows x cols` matrix.
fn transpose_into(src: &[f64], rows: usize, cols: usize, dst: &mut [f64]) {
    const TILE: usize = 32;
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    for r0 in (0..rows).step_by(TILE) {
        let r1 = (r0 + TILE).min(rows);
        for c0 in (0..cols).step_by(TILE) {
            let c1 = (c0 + TILE).min(cols);
            for r in r0..r1 {
                for c in c0..c1 {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

fn loss_grad_indexed(
    net: &Network,
    records: &[Record],
    norms: &[f64],
    idx: &[usize],
    gram: &CsrMatrix,
) -> Result<(f64, Gradients)> {
    let scale = 1.0 / idx.len() as f64;
    let ev = eval_batch(net, records, norms, idx, gram, Some(scale))?;
    let upstream = ev.upstream.expect("gradient requested");
    let grads = net.backward_batch(&ev.tape, &upstream)?;
    Ok((ev.loss_sum * scale, grads))
}

/// Mean relative Gram-norm error of `net` over `batch` and its gradient.
pub fn loss_and_grad(net: &Network, batch: &[Record], gram: &CsrMatrix) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(invalid("empty batch"));
    }
    check_dims(net, batch, gram)?;
    let norms = reference_norms(batch, gram)?;
    let idx: Vec<usize> = (0..batch.len()).collect();
    loss_grad_indexed(net, batch, &norms, &idx, gram)
}

/// Chunk size for gradient-free evaluation passes.
const EVAL_CHUNK: usize = 256;

fn evaluate_records(
    net: &Network,
    records: &[Record],
    norms: &[f64],
    gram: &CsrMatrix,
) -> Result<(f64, f64)> {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let idx: Vec<usize> = (0..records.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let ev = eval_batch(net, records, norms, chunk, gram, None)?;
        sum += ev.loss_sum;
        max = max.max(ev.max);
    }
    Ok((sum / records.len() as f64, max))
}

/// Mean and maximum relative Gram-norm error over a dataset.
pub fn evaluate(net: &Network, dataset: &Dataset, gram: &CsrMatrix) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(invalid("empty dataset"));
    }
    check_dims(net, &dataset.records, gram)?;
    let norms = reference_norms(&dataset.records, gram)?;
    evaluate_records(net, &dataset.records, &norms, gram)
}

/// How the per-epoch training error is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainErrorMode {
    /// A separate forward pass over the whole training set after the epoch.
    #[default]
    FullPass,
    /// Average of the batch losses seen during the epoch.
    Running,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean relative training error after each epoch (index 0 is epoch 1).
    pub train_error: Vec<f64>,
    /// `(epoch, mean relative test error)` at each checkpoint.
    pub test_error: Vec<(usize, f64)>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_error.len()
    }

    pub fn final_test_error(&self) -> Option<f64> {
        self.test_error.last().map(|&(_, e)| e)
    }
}

/// Per-epoch progress passed to the observer of [`train_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train_error: f64,
    pub test_error: Option<f64>,
}

/// Permutation of `0..n` used in `epoch` (1-based) for shuffle seed `seed`.
pub fn epoch_permutation(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Trains `net` in place without a test set.
pub fn train(
    net: &mut Network,
    train_set: &Dataset,
    gram: &CsrMatrix,
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    train_with(net, train_set, None, gram, cfg, TrainErrorMode::FullPass, |_| {})
}

/// Full training loop: `cfg.epochs` passes over shuffled mini-batches (the
/// final partial batch included), one ADAM step per batch.
pub fn train_with<F>(
    net: &mut Network,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    gram: &CsrMatrix,
    cfg: &TrainConfig,
    mode: TrainErrorMode,
    mut observer: F,
) -> Result<TrainHistory>
where
    F: FnMut(&EpochReport),
{
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(invalid("empty training set"));
    }
    check_dims(net, &train_set.records, gram)?;
    let train_norms = reference_norms(&train_set.records, gram)?;
    let test = match test_set {
        Some(ts) if !ts.is_empty() => {
            check_dims(net, &ts.records, gram)?;
            Some((ts, reference_norms(&ts.records, gram)?))
        }
        Some(_) => return Err(invalid("empty test set")),
        None => None,
    };
    let n = train_set.len();
    let mut adam = AdamState::new(net);
    let mut history = TrainHistory {
        train_error: Vec::with_capacity(cfg.epochs),
        test_error: Vec::new(),
    };
    for epoch in 1..=cfg.epochs {
        let perm = epoch_permutation(n, cfg.seed, epoch);
        let mut running = 0.0;
        for (batch, idx) in perm.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) = loss_grad_indexed(net, &train_set.records, &train_norms, idx, gram)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch });
            }
            running += loss * idx.len() as f64;
            adam.step(net, &grads, cfg)?;
        }
        let train_error = match mode {
            TrainErrorMode::Running => running / n as f64,
            TrainErrorMode::FullPass => {
                evaluate_records(net, &train_set.records, &train_norms, gram)?.0
            }
        };
        if !train_error.is_finite() {
            return Err(Error::Divergence { epoch, batch: 0 });
        }
        history.train_error.push(train_error);
        let checkpoint = cfg.test_every > 0 && epoch % cfg.test_every == 0 || epoch == cfg.epochs;
        let mut test_error = None;
        if let (Some((ts, norms)), true) = (&test, checkpoint) {
            let (mean, _) = evaluate_records(net, &ts.records, norms, gram)?;
            history.test_error.push((epoch, mean));
            test_error = Some(mean);
        }
        observer(&EpochReport {
            epoch,
            train_error,
            test_error,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::ParametricFamily;
    use crate::nn::Layer;

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            ..TrainConfig::default()
        }
    }

    fn toy_dataset(records: Vec<Record>, d: usize) -> Dataset {
        Dataset {
            family: ParametricFamily::trig_poly(records[0].y.len(), 0.0, 1.0).unwrap(),
            mesh_n: 0,
            dofs: d,
            seed: 0,
            records,
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..cfg() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..cfg() }.validate().is_err());
        assert!(TrainConfig { beta1: 1.0, ..cfg() }.validate().is_err());
        assert!(TrainConfig { beta2: 0.0, ..cfg() }.validate().is_err());
    }

    #[test]
    fn adam_scalar_first_step() {
        let c = TrainConfig::default();
        let mut p = [0.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, &c).unwrap();
        let expected = -2.0e-4 / (1.0 + 1.0e-8);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!((m[0] - 0.1).abs() < 1e-15);
        assert!((v[0] - 0.001).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut net = Network::init(&[2, 3, 2], 0.5, 0.2, 1).unwrap();
        let before = net.clone();
        let mut st = AdamState::new(&net);
        st.step(&mut net, &Gradients::zeros_like(&before), &cfg()).unwrap();
        assert_eq!(net, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn perfect_net_has_zero_loss_and_gradient() {
        let g = CsrMatrix::identity(2);
        let net = Network::new(vec![Layer::new(2, 1, vec![1.0, 2.0], vec![0.0, 0.0]).unwrap()], 0.2)
            .unwrap();
        let recs = vec![
            Record { y: vec![1.0], u: vec![1.0, 2.0] },
            Record { y: vec![-0.5], u: vec![-0.5, -1.0] },
        ];
        let (loss, grads) = loss_and_grad(&net, &recs, &g).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
        let ds = toy_dataset(recs, 2);
        assert_eq!(evaluate(&net, &ds, &g).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn zero_net_scores_one() {
        let g = CsrMatrix::identity(3);
        let net = Network::init(&[2, 4, 3], 0.0, 0.2, 0).unwrap();
        let recs = vec![
            Record { y: vec![0.1, 0.2], u: vec![1.0, 2.0, 3.0] },
            Record { y: vec![0.3, 0.4], u: vec![-1.0, 0.5, 0.0] },
        ];
        let (mean, max) = evaluate(&net, &toy_dataset(recs, 3), &g).unwrap();
        assert_eq!(mean, 1.0);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn degenerate_reference_rejected() {
        let g = CsrMatrix::identity(2);
        let net = Network::init(&[1, 2], 0.1, 0.2, 0).unwrap();
        let recs = vec![
            Record { y: vec![0.0], u: vec![1.0, 0.0] },
            Record { y: vec![0.0], u: vec![0.0, 0.0] },
        ];
        assert_eq!(
            loss_and_grad(&net, &recs, &g).unwrap_err(),
            Error::DegenerateReference { index: 1 }
        );
        assert!(loss_and_grad(&net, &[], &g).is_err());
    }

    #[test]
    fn loss_is_scale_invariant() {
        let g = CsrMatrix::identity(3);
        let net = Network::new(
            vec![Layer::new(3, 2, vec![1.0, 0.5, -0.2, 0.3, 0.7, 0.1], vec![0.1, 0.0, -0.3]).unwrap()],
            0.2,
        )
        .unwrap();
        let recs = vec![Record { y: vec![0.4, 0.9], u: vec![1.0, 0.2, 0.3] }];
        let (l1, _) = loss_and_grad(&net, &recs, &g).unwrap();
        let lam = 3.5;
        let mut scaled = net.clone();
        for l in scaled.layers_mut() {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= lam);
        }
        let recs2 = vec![Record { y: vec![0.4, 0.9], u: vec![lam, 0.2 * lam, 0.3 * lam] }];
        let (l2, _) = loss_and_grad(&scaled, &recs2, &g).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
    }

    #[test]
    fn permutation_covers_every_record() {
        let p = epoch_permutation(37, 5, 3);
        let mut sorted = p.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..37).collect::<Vec<_>>());
        assert_ne!(p, epoch_permutation(37, 5, 4));
        assert_eq!(p, epoch_permutation(37, 5, 3));
    }

    #[test]
    fn history_has_one_entry_per_epoch() {
        let g = CsrMatrix::identity(2);
        let recs: Vec<Record> = (0..9)
            .map(|i| {
                let t = i as f64 / 9.0;
                Record { y: vec![t], u: vec![1.0 + t, 2.0 - t] }
            })
            .collect();
        let ds = toy_dataset(recs, 2);
        let mut net = Network::init(&[1, 4, 2], 0.1, 0.2, 3).unwrap();
        let c = TrainConfig { epochs: 5, test_every: 2, ..cfg() };
        let h = train_with(&mut net, &ds, Some(&ds), &g, &c, TrainErrorMode::Running, |_| {})
            .unwrap();
        assert_eq!(h.epochs(), 5);
        let epochs: Vec<usize> = h.test_error.iter().map(|&(e, _)| e).collect();
        assert_eq!(epochs, [2, 4, 5]);
        assert!(train(&mut net, &ds, &g, &TrainConfig { epochs: 0, ..cfg() }).is_err());
    }
}
