//! Decoded scoring network.
//!
//! The user and item embeddings (same width `d`) are concatenated into a
//! `2d` input, then passed through one dense layer per hidden block
//! (dense → ReLU → inverted dropout) and a final one-unit dense layer whose
//! logit goes through a sigmoid. Gradients are computed by hand; dense
//! products go through `matrixmultiply`.

mod checkpoint;
mod tensor;
mod train;

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

pub use checkpoint::{load_model, read_model, save_model, write_model};
pub use tensor::Tensor;
pub use train::{fit_proxy, OptimizerKind, Sample, TrainConfig, Trainer};

use crate::genome::{Genome, InitScheme};
use crate::{Error, Result};

/// Constants for the two plain random schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomInitConstants {
    pub normal_std: f64,
    pub uniform_bound: f64,
}

impl Default for RandomInitConstants {
    fn default() -> Self {
        RandomInitConstants {
            normal_std: 0.01,
            uniform_bound: 0.1,
        }
    }
}

/// Samples a `[fan_out, fan_in]` weight matrix with the default random-scheme constants.
pub fn init_weights<R: Rng + ?Sized>(fan_out: usize, fan_in: usize, scheme: InitScheme, rng: &mut R) -> Tensor {
    init_weights_with(fan_out, fan_in, scheme, &RandomInitConstants::default(), rng)
}

pub fn init_weights_with<R: Rng + ?Sized>(
    fan_out: usize,
    fan_in: usize,
    scheme: InitScheme,
    constants: &RandomInitConstants,
    rng: &mut R,
) -> Tensor {
    assert!(fan_in >= 1 && fan_out >= 1, "fans must be positive");
    let (fi, fo) = (fan_in as f64, fan_out as f64);
    let n = fan_in * fan_out;
    let data: Vec<f64> = match scheme {
        InitScheme::Rn => sample_normal(constants.normal_std, n, rng),
        InitScheme::Ru => sample_uniform(constants.uniform_bound, n, rng),
        InitScheme::Xn => sample_normal((2.0 / (fi + fo)).sqrt(), n, rng),
        InitScheme::Xu => sample_uniform((6.0 / (fi + fo)).sqrt(), n, rng),
        InitScheme::Kn => sample_normal((2.0 / fi).sqrt(), n, rng),
        InitScheme::Ku => sample_uniform((6.0 / fi).sqrt(), n, rng),
    };
    Tensor::from_vec(vec![fan_out, fan_in], data).expect("shape matches sample count")
}

fn sample_normal<R: Rng + ?Sized>(std: f64, n: usize, rng: &mut R) -> Vec<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn sample_uniform<R: Rng + ?Sized>(bound: f64, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `[out, in]`, row-major.
    pub weights: Tensor,
    /// `[out]`.
    pub bias: Tensor,
    pub relu: bool,
    pub dropout_rate: f64,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub user_table: Tensor,
    pub item_table: Tensor,
    pub layers: Vec<DenseLayer>,
    /// The genome this network was decoded from, if any.
    pub genome: Option<Genome>,
}

/// Builds a network from a genome: one dense layer per block plus the
/// prediction layer, weights drawn with each gene's scheme, zero biases.
/// Embedding tables are drawn from a normal with the random-scheme std.
pub fn decode<R: Rng + ?Sized>(genome: &Genome, num_users: usize, num_items: usize, rng: &mut R) -> Result<Network> {
    if num_users == 0 || num_items == 0 {
        return Err(Error::Argument("entity counts must be positive".into()));
    }
    let d = genome.embedding.embedding_dim;
    if d == 0 {
        return Err(Error::Argument("embedding_dim must be positive".into()));
    }
    let constants = RandomInitConstants::default();
    let user_table = Tensor::from_vec(
        vec![num_users, d],
        sample_normal(constants.normal_std, num_users * d, rng),
    )?;
    let item_table = Tensor::from_vec(
        vec![num_items, d],
        sample_normal(constants.normal_std, num_items * d, rng),
    )?;

    let mut layers = Vec::with_capacity(genome.blocks.len() + 1);
    let mut width = 2 * d;
    for block in &genome.blocks {
        layers.push(DenseLayer {
            weights: init_weights_with(block.neurons, width, block.init, &constants, rng),
            bias: Tensor::zeros(vec![block.neurons]),
            relu: true,
            dropout_rate: block.dropout_rate,
        });
        width = block.neurons;
    }
    layers.push(DenseLayer {
        weights: init_weights_with(1, width, genome.prediction.init, &constants, rng),
        bias: Tensor::zeros(vec![1]),
        relu: false,
        dropout_rate: 0.0,
    });
    Network::from_parts(user_table, item_table, layers, Some(genome.clone()))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Binary cross-entropy of one logit against a {0, 1} label.
pub fn bce_with_logit(z: f64, label: f64) -> f64 {
    softplus(z) - label * z
}

/// Row-major `C = A·B + beta·C` with arbitrary strides on A and B.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k > 0 {
        assert!(a.len() > (m - 1) * a_strides.0 + (k - 1) * a_strides.1);
        assert!(b.len() > (k - 1) * b_strides.0 + (n - 1) * b_strides.1);
    }
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Intermediate values of one forward pass, kept for backprop.
struct Trace {
    batch: usize,
    /// `[B, 2d]`.
    input: Vec<f64>,
    /// Per layer, the pre-activation `[B, out]`.
    pre: Vec<Vec<f64>>,
    /// Per hidden layer, the output after ReLU and dropout `[B, out]`.
    post: Vec<Vec<f64>>,
    /// Per hidden layer, the dropout multiplier (0 or 1/(1-p)); empty when inactive.
    masks: Vec<Vec<f64>>,
}

impl Trace {
    fn logits(&self) -> &[f64] {
        self.pre.last().expect("network has a prediction layer")
    }
}

/// Parameter gradients. Embedding gradients are kept per touched row.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
    pub user_rows: BTreeMap<usize, Vec<f64>>,
    pub item_rows: BTreeMap<usize, Vec<f64>>,
}

impl Gradients {
    /// Dense gradient in [`Network::parameters`] order.
    pub fn to_flat(&self, net: &Network) -> Vec<f64> {
        let d = net.embedding_dim();
        let mut out = vec![0.0; net.parameter_count()];
        for (&row, g) in &self.user_rows {
            out[row * d..(row + 1) * d].copy_from_slice(g);
        }
        let offset = net.user_table.len();
        for (&row, g) in &self.item_rows {
            out[offset + row * d..offset + (row + 1) * d].copy_from_slice(g);
        }
        let mut at = offset + net.item_table.len();
        for (dw, db) in &self.layers {
            out[at..at + dw.len()].copy_from_slice(dw);
            at += dw.len();
            out[at..at + db.len()].copy_from_slice(db);
            at += db.len();
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b).all(|v| v.is_finite()))
            && self
                .user_rows
                .values()
                .chain(self.item_rows.values())
                .flatten()
                .all(|v| v.is_finite())
    }
}

impl Network {
    /// Assembles a network, checking that layer widths chain from `2d` to 1.
    pub fn from_parts(
        user_table: Tensor,
        item_table: Tensor,
        layers: Vec<DenseLayer>,
        genome: Option<Genome>,
    ) -> Result<Self> {
        let shape_err = |msg: String| Err(Error::Argument(msg));
        if user_table.shape().len() != 2 || item_table.shape().len() != 2 {
            return shape_err("embedding tables must be 2-d".into());
        }
        let d = user_table.shape()[1];
        if item_table.shape()[1] != d || d == 0 {
            return shape_err(format!(
                "embedding widths differ or are zero: {:?} vs {:?}",
                user_table.shape(),
                item_table.shape()
            ));
        }
        if layers.is_empty() {
            return shape_err("network needs at least the prediction layer".into());
        }
        let mut width = 2 * d;
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.shape().len() != 2 || layer.in_dim() != width {
                return shape_err(format!(
                    "layer {i} expects input width {width}, has {:?}",
                    layer.weights.shape()
                ));
            }
            if layer.bias.shape() != [layer.out_dim()] {
                return shape_err(format!("layer {i} bias shape {:?}", layer.bias.shape()));
            }
            if !(0.0..1.0).contains(&layer.dropout_rate) {
                return shape_err(format!("layer {i} dropout {} outside [0, 1)", layer.dropout_rate));
            }
            width = layer.out_dim();
        }
        let last = layers.last().unwrap();
        if last.out_dim() != 1 || last.relu || last.dropout_rate != 0.0 {
            return shape_err("prediction layer must be a plain one-unit dense layer".into());
        }
        if layers[..layers.len() - 1].iter().any(|l| !l.relu) {
            return shape_err("every hidden layer carries a ReLU".into());
        }
        Ok(Network {
            user_table,
            item_table,
            layers,
            genome,
        })
    }

    pub fn num_users(&self) -> usize {
        self.user_table.shape()[0]
    }

    pub fn num_items(&self) -> usize {
        self.item_table.shape()[0]
    }

    pub fn embedding_dim(&self) -> usize {
        self.user_table.shape()[1]
    }

    /// Input width of every dense layer followed by the output width.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![2 * self.embedding_dim()];
        widths.extend(self.layers.iter().map(DenseLayer::out_dim));
        widths
    }

    pub fn parameter_count(&self) -> usize {
        self.user_table.len()
            + self.item_table.len()
            + self
                .layers
                .iter()
                .map(|l| l.weights.len() + l.bias.len())
                .sum::<usize>()
    }

    /// Flat copy of all parameters: user table, item table, then each layer's weights and bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        out.extend_from_slice(self.user_table.data());
        out.extend_from_slice(self.item_table.data());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(layer.bias.data());
        }
        out
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::Argument(format!(
                "expected {} parameters, got {}",
                self.parameter_count(),
                flat.len()
            )));
        }
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(self.user_table.data_mut());
        take(self.item_table.data_mut());
        for layer in &mut self.layers {
            take(layer.weights.data_mut());
            take(layer.bias.data_mut());
        }
        Ok(())
    }

    fn check_indices(&self, users: &[usize], items: &[usize]) -> Result<()> {
        if users.len() != items.len() {
            return Err(Error::Argument(format!(
                "{} users but {} items in batch",
                users.len(),
                items.len()
            )));
        }
        if let Some(u) = users.iter().find(|&&u| u >= self.num_users()) {
            return Err(Error::Argument(format!(
                "user index {u} out of range ({})",
                self.num_users()
            )));
        }
        if let Some(i) = items.iter().find(|&&i| i >= self.num_items()) {
            return Err(Error::Argument(format!(
                "item index {i} out of range ({})",
                self.num_items()
            )));
        }
        Ok(())
    }

    fn run<R: Rng + ?Sized>(&self, users: &[usize], items: &[usize], mut dropout_rng: Option<&mut R>) -> Result<Trace> {
        self.check_indices(users, items)?;
        let batch = users.len();
        let d = self.embedding_dim();
        let mut input = vec![0.0; batch * 2 * d];
        for (row, (&u, &i)) in users.iter().zip(items).enumerate() {
            let dst = &mut input[row * 2 * d..(row + 1) * 2 * d];
            dst[..d].copy_from_slice(self.user_table.row(u));
            dst[d..].copy_from_slice(self.item_table.row(i));
        }

        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() - 1);
        let mut masks = Vec::with_capacity(self.layers.len() - 1);
        for (li, layer) in self.layers.iter().enumerate() {
            let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
            let x = if li == 0 { &input } else { &post[li - 1] };
            let mut z = vec![0.0; batch * out_dim];
            for row in z.chunks_exact_mut(out_dim) {
                row.copy_from_slice(layer.bias.data());
            }
            gemm(
                batch,
                in_dim,
                out_dim,
                x,
                (in_dim, 1),
                layer.weights.data(),
                (1, in_dim),
                &mut z,
                1.0,
            );

            if layer.relu {
                let mut a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
                let mut mask = Vec::new();
                if let Some(rng) = dropout_rng.as_deref_mut() {
                    if layer.dropout_rate > 0.0 {
                        let keep = 1.0 - layer.dropout_rate;
                        let scale = 1.0 / keep;
                        mask = (0..a.len())
                            .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                            .collect();
                        for (v, m) in a.iter_mut().zip(&mask) {
                            *v *= m;
                        }
                    }
                }
                masks.push(mask);
                post.push(a);
            }
            pre.push(z);
        }
        Ok(Trace {
            batch,
            input,
            pre,
            post,
            masks,
        })
    }

    /// Raw prediction-layer outputs. Ranking by logits equals ranking by scores.
    pub fn forward_logits<R: Rng + ?Sized>(
        &self,
        users: &[usize],
        items: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let trace = self.run(users, items, training.then_some(rng))?;
        Ok(trace.logits().to_vec())
    }

    /// Inference-mode logits; no randomness involved.
    pub fn predict_logits(&self, users: &[usize], items: &[usize]) -> Result<Vec<f64>> {
        let trace = self.run::<rand_chacha::ChaCha8Rng>(users, items, None)?;
        Ok(trace.logits().to_vec())
    }

    /// Pre-activation values of every layer (row-major `[B, out]`), with
    /// dropout drawn from `rng` when `training` is set.
    pub fn pre_activations<R: Rng + ?Sized>(
        &self,
        users: &[usize],
        items: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        Ok(self.run(users, items, training.then_some(rng))?.pre)
    }

    /// Scores in (0, 1), one per (user, item) pair. Saturated sigmoids are
    /// pulled back by one ulp-scale epsilon so scores stay strictly inside.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        users: &[usize],
        items: &[usize],
        training: bool,
        rng: &mut R,
    ) -> Result<Tensor> {
        let logits = self.forward_logits(users, items, training, rng)?;
        let n = logits.len();
        let scores = logits
            .into_iter()
            .map(|z| sigmoid(z).clamp(f64::EPSILON, 1.0 - f64::EPSILON))
            .collect();
        Tensor::from_vec(vec![n], scores)
    }

    /// Mean binary cross-entropy over `batch` and its gradient with respect to
    /// every parameter. With `training` set, dropout masks are drawn from `rng`.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        batch: &[Sample],
        training: bool,
        rng: &mut R,
    ) -> Result<(f64, Gradients)> {
        if batch.is_empty() {
            return Err(Error::Argument("empty batch".into()));
        }
        let users: Vec<usize> = batch.iter().map(|s| s.user).collect();
        let items: Vec<usize> = batch.iter().map(|s| s.item).collect();
        let trace = self.run(&users, &items, training.then_some(rng))?;
        let b = trace.batch as f64;

        let logits = trace.logits();
        let loss = batch
            .iter()
            .zip(logits)
            .map(|(s, &z)| bce_with_logit(z, s.label))
            .sum::<f64>()
            / b;
        let mut delta: Vec<f64> = batch
            .iter()
            .zip(logits)
            .map(|(s, &z)| (sigmoid(z) - s.label) / b)
            .collect();

        let mut layer_grads = vec![(Vec::new(), Vec::new()); self.layers.len()];
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let (out_dim, in_dim) = (layer.out_dim(), layer.in_dim());
            let x = if li == 0 { &trace.input } else { &trace.post[li - 1] };

            let mut dw = vec![0.0; out_dim * in_dim];
            gemm(
                out_dim,
                trace.batch,
                in_dim,
                &delta,
                (1, out_dim),
                x,
                (in_dim, 1),
                &mut dw,
                0.0,
            );
            let mut db = vec![0.0; out_dim];
            for row in delta.chunks_exact(out_dim) {
                for (acc, v) in db.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            layer_grads[li] = (dw, db);

            let mut dx = vec![0.0; trace.batch * in_dim];
            gemm(
                trace.batch,
                out_dim,
                in_dim,
                &delta,
                (out_dim, 1),
                layer.weights.data(),
                (in_dim, 1),
                &mut dx,
                0.0,
            );
            if li > 0 {
                let z = &trace.pre[li - 1];
                let mask = &trace.masks[li - 1];
                for (k, g) in dx.iter_mut().enumerate() {
                    if z[k] <= 0.0 {
                        *g = 0.0;
                    } else if !mask.is_empty() {
                        *g *= mask[k];
                    }
                }
            }
            delta = dx;
        }

        let d = self.embedding_dim();
        let mut user_rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut item_rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (row, s) in batch.iter().enumerate() {
            let g = &delta[row * 2 * d..(row + 1) * 2 * d];
            let ur = user_rows.entry(s.user).or_insert_with(|| vec![0.0; d]);
            for (acc, v) in ur.iter_mut().zip(&g[..d]) {
                *acc += v;
            }
            let ir = item_rows.entry(s.item).or_insert_with(|| vec![0.0; d]);
            for (acc, v) in ir.iter_mut().zip(&g[d..]) {
                *acc += v;
            }
        }
        Ok((
            loss,
            Gradients {
                layers: layer_grads,
                user_rows,
                item_rows,
            },
        ))
    }

    /// Mean BCE without gradients.
    pub fn loss<R: Rng + ?Sized>(&self, batch: &[Sample], training: bool, rng: &mut R) -> Result<f64> {
        let users: Vec<usize> = batch.iter().map(|s| s.user).collect();
        let items: Vec<usize> = batch.iter().map(|s| s.item).collect();
        let logits = self.forward_logits(&users, &items, training, rng)?;
        Ok(batch
            .iter()
            .zip(&logits)
            .map(|(s, &z)| bce_with_logit(z, s.label))
            .sum::<f64>()
            / batch.len() as f64)
    }
}
