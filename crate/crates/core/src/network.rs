//! Layer stack shared by the progressive network, its ablation variants and
//! the shrinking baseline.
//!
//! Each hidden layer is `Linear -> ReLU -> BatchNorm` and reads a list of
//! sources (the raw input and/or earlier hidden outputs) concatenated in list
//! order. The classifier is `Linear -> Softmax` over its own source list.
//! Concatenation is never materialized: a layer's weight matrix is split into
//! column blocks, one per source, and each block is multiplied separately.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::container::Reader;
use crate::error::{PnnError, Result};
use crate::scalar::Scalar;

/// Where a layer's input block comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    /// The network input (spectrum batch).
    Input,
    /// Output of hidden layer `j` (0-based).
    Hidden(usize),
}

/// Forward-pass batch-norm behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; requires at least two rows.
    Train,
    /// Running statistics.
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `[out x in]`
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    fn init_uniform(&mut self, rng: &mut ChaCha8Rng) {
        let bound = (6.0 / self.inputs() as f64).sqrt();
        for w in self.weight.iter_mut() {
            *w = T::of(rng.gen_range(-bound..bound));
        }
        self.bias.fill(T::zero());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    pub epsilon: T,
    pub momentum: T,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(width: usize, epsilon: T, momentum: T) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            epsilon,
            momentum,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLayer<T> {
    pub linear: Linear<T>,
    pub norm: BatchNorm<T>,
    sources: Vec<Source>,
}

impl<T> HiddenLayer<T> {
    pub fn sources(&self) -> &[Source] {
        &self.sources
    }
}

/// Shape description used to build a [`Network`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub input_width: usize,
    /// `(output width, sources)` per hidden layer.
    pub hidden: Vec<(usize, Vec<Source>)>,
    pub classifier_sources: Vec<Source>,
    pub classes: usize,
}

impl Topology {
    fn source_width(&self, source: Source) -> usize {
        match source {
            Source::Input => self.input_width,
            Source::Hidden(j) => self.hidden[j].0,
        }
    }

    /// Input width of hidden layer `n` (0-based).
    pub fn hidden_input_width(&self, n: usize) -> usize {
        self.hidden[n].1.iter().map(|&s| self.source_width(s)).sum()
    }

    pub fn classifier_input_width(&self) -> usize {
        self.classifier_sources
            .iter()
            .map(|&s| self.source_width(s))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.classes < 2 {
            return Err(PnnError::Config(format!(
                "input width must be >= 1 and classes >= 2 (got {} and {})",
                self.input_width, self.classes
            )));
        }
        let check = |sources: &[Source], limit: usize, what: &str| -> Result<()> {
            if sources.is_empty() {
                return Err(PnnError::Config(format!("{what} has no inputs")));
            }
            for s in sources {
                if let Source::Hidden(j) = s {
                    if *j >= limit {
                        return Err(PnnError::Config(format!(
                            "{what} reads hidden layer {j}, which is not upstream"
                        )));
                    }
                }
            }
            Ok(())
        };
        for (n, (width, sources)) in self.hidden.iter().enumerate() {
            if *width == 0 {
                return Err(PnnError::Config(format!("hidden layer {n} has zero width")));
            }
            check(sources, n, &format!("hidden layer {n}"))?;
        }
        check(&self.classifier_sources, self.hidden.len(), "classifier")
    }
}

/// Trainable-parameter role; batch-norm affine parameters are exempt from
/// weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight | ParamKind::Bias)
    }
}

pub struct ParamBlockMut<'a, T> {
    pub name: String,
    pub kind: ParamKind,
    pub values: &'a mut [T],
}

pub struct ParamBlock<'a, T> {
    pub name: String,
    pub kind: ParamKind,
    pub values: &'a [T],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    topology: Topology,
    hidden: Vec<HiddenLayer<T>>,
    classifier: Linear<T>,
    revision: u64,
}

/// Per-layer intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    /// `W a + b`
    pub pre_activation: Array2<T>,
    /// `ReLU(W a + b)`
    pub activated: Array2<T>,
    pub normalized: Array2<T>,
    /// Batch-norm output; the layer's contribution to the feature set.
    pub output: Array2<T>,
    /// Statistics actually used (batch in train mode, running in infer mode).
    pub mean: Array1<T>,
    pub var: Array1<T>,
    inv_std: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    mode: Mode,
    revision: u64,
    input: Array2<T>,
    pub layers: Vec<LayerCache<T>>,
    pub logits: Array2<T>,
    pub probabilities: Array2<T>,
}

impl<T: Scalar> ForwardCache<T> {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn batch_size(&self) -> usize {
        self.input.nrows()
    }

    pub fn input(&self) -> ArrayView2<'_, T> {
        self.input.view()
    }

    /// Learned feature block of hidden layer `n` (0-based), e.g. for export
    /// to an external embedding tool.
    pub fn layer_output(&self, n: usize) -> ArrayView2<'_, T> {
        self.layers[n].output.view()
    }

    fn source(&self, source: Source) -> ArrayView2<'_, T> {
        match source {
            Source::Input => self.input.view(),
            Source::Hidden(j) => self.layers[j].output.view(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenGradients<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
}

/// Gradients of the mean cross-entropy, laid out like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub hidden: Vec<HiddenGradients<T>>,
    pub classifier: Linear<T>,
    /// Gradient with respect to the input batch.
    pub input: Array2<T>,
}

impl<T: Scalar> Gradients<T> {
    /// Same order and names as [`Network::param_blocks`].
    pub fn blocks(&self) -> Vec<ParamBlock<'_, T>> {
        let mut out = Vec::with_capacity(4 * self.hidden.len() + 2);
        for (n, g) in self.hidden.iter().enumerate() {
            out.push(block(format!("hidden{n}.weight"), ParamKind::Weight, &g.weight));
            out.push(block1(format!("hidden{n}.bias"), ParamKind::Bias, &g.bias));
            out.push(block1(format!("hidden{n}.gamma"), ParamKind::Gamma, &g.gamma));
            out.push(block1(format!("hidden{n}.beta"), ParamKind::Beta, &g.beta));
        }
        out.push(block("classifier.weight".into(), ParamKind::Weight, &self.classifier.weight));
        out.push(block1("classifier.bias".into(), ParamKind::Bias, &self.classifier.bias));
        out
    }

    /// Signed sum of each block's entries.
    pub fn block_sums(&self) -> Vec<T> {
        self.blocks().iter().map(|b| b.values.iter().copied().sum()).collect()
    }

    /// Sum of absolute entries of each block. Non-finite iff the block holds
    /// a NaN or infinity (or overflows).
    pub fn block_abs_sums(&self) -> Vec<T> {
        self.blocks().iter().map(|b| abs_sum(b.values)).collect()
    }
}

/// Eight interleaved partial sums; fixed order, so still deterministic.
pub(crate) fn abs_sum<T: Scalar>(values: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let chunks = values.chunks_exact(8);
    let tail = chunks.remainder();
    for c in chunks {
        for k in 0..8 {
            acc[k] += c[k].abs();
        }
    }
    for (k, v) in tail.iter().enumerate() {
        acc[k] += v.abs();
    }
    acc.iter().copied().fold(T::zero(), |a, b| a + b)
}

fn block<T>(name: String, kind: ParamKind, a: &Array2<T>) -> ParamBlock<'_, T> {
    ParamBlock {
        name,
        kind,
        values: a.as_slice().expect("standard layout"),
    }
}

fn block1<T>(name: String, kind: ParamKind, a: &Array1<T>) -> ParamBlock<'_, T> {
    ParamBlock {
        name,
        kind,
        values: a.as_slice().expect("standard layout"),
    }
}

/// `acc += src · wᵀ`
fn mul_acc<T: Scalar>(acc: &mut Array2<T>, src: ArrayView2<T>, w: ArrayView2<T>) {
    general_mat_mul(T::one(), &src, &w.t(), T::one(), acc);
}

fn broadcast_bias<T: Scalar>(rows: usize, bias: ArrayView1<T>) -> Array2<T> {
    let mut out = Array2::zeros((rows, bias.len()));
    out.rows_mut().into_iter().for_each(|mut r| r.assign(&bias));
    out
}

pub(crate) fn softmax_rows<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total: T = row.iter().copied().sum();
        row.mapv_inplace(|v| v / total);
    }
    probs
}

impl<T: Scalar> Network<T> {
    /// Builds a network with all weights zero, `gamma = 1`, `beta = 0`,
    /// running mean 0 and running variance 1.
    pub fn zeros(topology: Topology, bn_epsilon: T, bn_momentum: T) -> Result<Self> {
        topology.validate()?;
        let hidden = topology
            .hidden
            .iter()
            .enumerate()
            .map(|(n, (width, sources))| HiddenLayer {
                linear: Linear::zeros(topology.hidden_input_width(n), *width),
                norm: BatchNorm::new(*width, bn_epsilon, bn_momentum),
                sources: sources.clone(),
            })
            .collect();
        let classifier = Linear::zeros(topology.classifier_input_width(), topology.classes);
        Ok(Self {
            topology,
            hidden,
            classifier,
            revision: 0,
        })
    }

    /// Uniform `[-s, s]` weights with `s = sqrt(6 / fan_in)`, zero biases.
    /// Draws layer by layer in row-major order from a seeded ChaCha stream.
    pub fn init(topology: Topology, bn_epsilon: T, bn_momentum: T, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(topology, bn_epsilon, bn_momentum)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.hidden {
            layer.linear.init_uniform(&mut rng);
        }
        net.classifier.init_uniform(&mut rng);
        Ok(net)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn input_width(&self) -> usize {
        self.topology.input_width
    }

    pub fn classes(&self) -> usize {
        self.topology.classes
    }

    pub fn hidden(&self) -> &[HiddenLayer<T>] {
        &self.hidden
    }

    pub fn classifier(&self) -> &Linear<T> {
        &self.classifier
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn hidden_mut(&mut self) -> &mut [HiddenLayer<T>] {
        self.revision += 1;
        &mut self.hidden
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn classifier_mut(&mut self) -> &mut Linear<T> {
        self.revision += 1;
        &mut self.classifier
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Trainable parameter count (batch-norm running statistics excluded).
    pub fn trainable_parameters(&self) -> usize {
        self.param_blocks().iter().map(|b| b.values.len()).sum()
    }

    pub fn param_blocks(&self) -> Vec<ParamBlock<'_, T>> {
        let mut out = Vec::with_capacity(4 * self.hidden.len() + 2);
        for (n, l) in self.hidden.iter().enumerate() {
            out.push(block(format!("hidden{n}.weight"), ParamKind::Weight, &l.linear.weight));
            out.push(block1(format!("hidden{n}.bias"), ParamKind::Bias, &l.linear.bias));
            out.push(block1(format!("hidden{n}.gamma"), ParamKind::Gamma, &l.norm.gamma));
            out.push(block1(format!("hidden{n}.beta"), ParamKind::Beta, &l.norm.beta));
        }
        out.push(block("classifier.weight".into(), ParamKind::Weight, &self.classifier.weight));
        out.push(block1("classifier.bias".into(), ParamKind::Bias, &self.classifier.bias));
        out
    }

    pub fn param_blocks_mut(&mut self) -> Vec<ParamBlockMut<'_, T>> {
        self.revision += 1;
        fn m2<T>(name: String, kind: ParamKind, a: &mut Array2<T>) -> ParamBlockMut<'_, T> {
            ParamBlockMut {
                name,
                kind,
                values: a.as_slice_mut().expect("standard layout"),
            }
        }
        fn m1<T>(name: String, kind: ParamKind, a: &mut Array1<T>) -> ParamBlockMut<'_, T> {
            ParamBlockMut {
                name,
                kind,
                values: a.as_slice_mut().expect("standard layout"),
            }
        }
        let mut out = Vec::with_capacity(4 * self.hidden.len() + 2);
        for (n, l) in self.hidden.iter_mut().enumerate() {
            out.push(m2(format!("hidden{n}.weight"), ParamKind::Weight, &mut l.linear.weight));
            out.push(m1(format!("hidden{n}.bias"), ParamKind::Bias, &mut l.linear.bias));
            out.push(m1(format!("hidden{n}.gamma"), ParamKind::Gamma, &mut l.norm.gamma));
            out.push(m1(format!("hidden{n}.beta"), ParamKind::Beta, &mut l.norm.beta));
        }
        out.push(m2("classifier.weight".into(), ParamKind::Weight, &mut self.classifier.weight));
        out.push(m1("classifier.bias".into(), ParamKind::Bias, &mut self.classifier.bias));
        out
    }

    fn source_offsets(&self, sources: &[Source]) -> Vec<(Source, usize, usize)> {
        let mut offset = 0;
        sources
            .iter()
            .map(|&s| {
                let w = self.topology.source_width(s);
                let entry = (s, offset, w);
                offset += w;
                entry
            })
            .collect()
    }

    /// Forward pass over a `[B x K]` batch. Returns softmax probabilities and
    /// the cache needed by [`Network::backward`]. Running statistics are not
    /// touched; call [`Network::absorb_batch_statistics`] after a train step.
    pub fn forward(&self, x: ArrayView2<T>, mode: Mode) -> Result<(Array2<T>, ForwardCache<T>)> {
        let batch = x.nrows();
        if batch == 0 {
            return Err(PnnError::Shape("empty batch".into()));
        }
        if x.ncols() != self.input_width() {
            return Err(PnnError::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_width()
            )));
        }
        if mode == Mode::Train && batch < 2 && !self.hidden.is_empty() {
            return Err(PnnError::InvalidInput(
                "train-mode batch norm needs at least 2 samples".into(),
            ));
        }
        let mut cache = ForwardCache {
            mode,
            revision: self.revision,
            input: x.to_owned(),
            layers: Vec::with_capacity(self.hidden.len()),
            logits: Array2::zeros((0, 0)),
            probabilities: Array2::zeros((0, 0)),
        };
        let inv_batch = T::one() / T::of_usize(batch);
        for layer in &self.hidden {
            let mut z = broadcast_bias(batch, layer.linear.bias.view());
            for (src, off, w) in self.source_offsets(&layer.sources) {
                mul_acc(
                    &mut z,
                    cache.source(src),
                    layer.linear.weight.slice(s![.., off..off + w]),
                );
            }
            let activated = z.mapv(|v| v.max(T::zero()));
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = activated.sum_axis(Axis(0)) * inv_batch;
                    let centered = &activated - &mean;
                    let var = (&centered * &centered).sum_axis(Axis(0)) * inv_batch;
                    (mean, var)
                }
                Mode::Infer => (layer.norm.running_mean.clone(), layer.norm.running_var.clone()),
            };
            let eps = layer.norm.epsilon;
            let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
            let normalized = (&activated - &mean) * &inv_std;
            let output = &normalized * &layer.norm.gamma + &layer.norm.beta;
            cache.layers.push(LayerCache {
                pre_activation: z,
                activated,
                normalized,
                output,
                mean,
                var,
                inv_std,
            });
        }
        let mut logits = broadcast_bias(batch, self.classifier.bias.view());
        for (src, off, w) in self.source_offsets(&self.topology.classifier_sources) {
            mul_acc(
                &mut logits,
                cache.source(src),
                self.classifier.weight.slice(s![.., off..off + w]),
            );
        }
        let probabilities = softmax_rows(&logits);
        cache.logits = logits;
        cache.probabilities = probabilities.clone();
        Ok((probabilities, cache))
    }

    /// Argmax class per row under running statistics.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<(Vec<usize>, Array2<T>)> {
        let (probs, _) = self.forward(x, Mode::Infer)?;
        let preds = probs
            .rows()
            .into_iter()
            .map(|r| crate::spectral::argmax(r.as_slice().expect("row-major")))
            .collect();
        Ok((preds, probs))
    }

    fn check_cache(&self, cache: &ForwardCache<T>) -> Result<()> {
        if cache.revision != self.revision {
            return Err(PnnError::StaleCache(format!(
                "cache from parameter revision {}, network is at {}",
                cache.revision, self.revision
            )));
        }
        if cache.layers.len() != self.hidden.len()
            || cache.input.ncols() != self.input_width()
            || cache.probabilities.ncols() != self.classes()
            || cache
                .layers
                .iter()
                .zip(&self.hidden)
                .any(|(c, l)| c.output.ncols() != l.norm.width())
        {
            return Err(PnnError::StaleCache("layer shapes differ".into()));
        }
        Ok(())
    }

    /// Gradients of the mean cross-entropy `-(1/B) Σ log p[i, y_i]`.
    ///
    /// Each hidden output block collects gradient from every consumer that
    /// reads it (deeper hidden layers and the classifier); the input gradient
    /// likewise sums over all consumers of the input.
    pub fn backward(&self, cache: &ForwardCache<T>, labels: &[usize]) -> Result<Gradients<T>> {
        self.backward_impl(cache, labels, true)
    }

    /// [`Network::backward`] without the input gradient, which training
    /// never reads; `Gradients::input` is left empty (`0 x 0`).
    pub fn parameter_gradients(&self, cache: &ForwardCache<T>, labels: &[usize]) -> Result<Gradients<T>> {
        self.backward_impl(cache, labels, false)
    }

    fn backward_impl(&self, cache: &ForwardCache<T>, labels: &[usize], with_input: bool) -> Result<Gradients<T>> {
        self.check_cache(cache)?;
        let batch = cache.batch_size();
        if labels.len() != batch {
            return Err(PnnError::Shape(format!(
                "{} labels for a batch of {batch}",
                labels.len()
            )));
        }
        let classes = self.classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(PnnError::InvalidInput(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let inv_batch = T::one() / T::of_usize(batch);
        let mut d_logits = cache.probabilities.clone();
        for (i, &y) in labels.iter().enumerate() {
            d_logits[[i, y]] -= T::one();
        }
        d_logits.mapv_inplace(|v| v * inv_batch);

        let mut d_input = if with_input {
            Array2::<T>::zeros(cache.input.raw_dim())
        } else {
            Array2::<T>::zeros((0, 0))
        };
        let mut d_hidden: Vec<Array2<T>> = self
            .hidden
            .iter()
            .map(|l| Array2::zeros((batch, l.norm.width())))
            .collect();

        let mut classifier = Linear::zeros(self.classifier.inputs(), classes);
        classifier.bias = d_logits.sum_axis(Axis(0));
        for (src, off, w) in self.source_offsets(&self.topology.classifier_sources) {
            let mut dw = classifier.weight.slice_mut(s![.., off..off + w]);
            general_mat_mul(T::one(), &d_logits.t(), &cache.source(src), T::zero(), &mut dw);
            let target = match src {
                Source::Input if !with_input => continue,
                Source::Input => &mut d_input,
                Source::Hidden(j) => &mut d_hidden[j],
            };
            general_mat_mul(
                T::one(),
                &d_logits,
                &self.classifier.weight.slice(s![.., off..off + w]),
                T::one(),
                target,
            );
        }

        let mut hidden_grads = Vec::with_capacity(self.hidden.len());
        for n in (0..self.hidden.len()).rev() {
            let layer = &self.hidden[n];
            let lc = &cache.layers[n];
            let d_out = std::mem::take(&mut d_hidden[n]);

            let gamma_grad = (&d_out * &lc.normalized).sum_axis(Axis(0));
            let beta_grad = d_out.sum_axis(Axis(0));
            let d_norm = &d_out * &layer.norm.gamma;
            let d_act = match cache.mode {
                Mode::Train => {
                    // dx = inv_std/B * (B dx̂ - Σ dx̂ - x̂ Σ(dx̂ x̂))
                    let sum_dn = d_norm.sum_axis(Axis(0));
                    let sum_dn_xn = (&d_norm * &lc.normalized).sum_axis(Axis(0));
                    let mut d = Array2::zeros(d_norm.raw_dim());
                    let b = T::of_usize(batch);
                    Zip::from(d.rows_mut())
                        .and(d_norm.rows())
                        .and(lc.normalized.rows())
                        .for_each(|mut d_row, dn_row, xn_row| {
                            for k in 0..d_row.len() {
                                d_row[k] = lc.inv_std[k] * inv_batch
                                    * (b * dn_row[k] - sum_dn[k] - xn_row[k] * sum_dn_xn[k]);
                            }
                        });
                    d
                }
                Mode::Infer => &d_norm * &lc.inv_std,
            };
            let mut d_pre = d_act;
            Zip::from(&mut d_pre)
                .and(&lc.pre_activation)
                .for_each(|d, &z| {
                    if z <= T::zero() {
                        *d = T::zero();
                    }
                });

            let mut weight = Array2::zeros(layer.linear.weight.raw_dim());
            for (src, off, w) in self.source_offsets(&layer.sources) {
                let mut dw = weight.slice_mut(s![.., off..off + w]);
                general_mat_mul(T::one(), &d_pre.t(), &cache.source(src), T::zero(), &mut dw);
                let target = match src {
                    Source::Input if !with_input => continue,
                    Source::Input => &mut d_input,
                    Source::Hidden(j) => &mut d_hidden[j],
                };
                general_mat_mul(
                    T::one(),
                    &d_pre,
                    &layer.linear.weight.slice(s![.., off..off + w]),
                    T::one(),
                    target,
                );
            }
            hidden_grads.push(HiddenGradients {
                weight,
                bias: d_pre.sum_axis(Axis(0)),
                gamma: gamma_grad,
                beta: beta_grad,
            });
        }
        hidden_grads.reverse();
        Ok(Gradients {
            hidden: hidden_grads,
            classifier,
            input: d_input,
        })
    }

    /// Folds a train-mode cache's batch statistics into the running
    /// estimates: `running = (1 - momentum) running + momentum batch`, with
    /// the unbiased batch variance.
    pub fn absorb_batch_statistics(&mut self, cache: &ForwardCache<T>) -> Result<()> {
        self.check_cache(cache)?;
        if cache.mode != Mode::Train {
            return Err(PnnError::InvalidInput(
                "only train-mode caches carry batch statistics".into(),
            ));
        }
        let b = T::of_usize(cache.batch_size());
        let unbias = b / (b - T::one());
        for (layer, lc) in self.hidden.iter_mut().zip(&cache.layers) {
            let m = layer.norm.momentum;
            let keep = T::one() - m;
            Zip::from(&mut layer.norm.running_mean)
                .and(&lc.mean)
                .for_each(|r, &v| *r = keep * *r + m * v);
            Zip::from(&mut layer.norm.running_var)
                .and(&lc.var)
                .for_each(|r, &v| *r = keep * *r + m * v * unbias);
        }
        self.revision += 1;
        Ok(())
    }

    /// Parameter tensors in declaration order: per hidden layer weight, bias,
    /// gamma, beta, running mean, running var; then classifier weight, bias.
    pub(crate) fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(6 * self.hidden.len() + 2);
        for l in &self.hidden {
            out.push(l.linear.weight.as_slice().expect("standard layout"));
            out.push(l.linear.bias.as_slice().expect("standard layout"));
            out.push(l.norm.gamma.as_slice().expect("standard layout"));
            out.push(l.norm.beta.as_slice().expect("standard layout"));
            out.push(l.norm.running_mean.as_slice().expect("standard layout"));
            out.push(l.norm.running_var.as_slice().expect("standard layout"));
        }
        out.push(self.classifier.weight.as_slice().expect("standard layout"));
        out.push(self.classifier.bias.as_slice().expect("standard layout"));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(6 * self.hidden.len() + 2);
        for l in &mut self.hidden {
            out.push(l.linear.weight.as_slice_mut().expect("standard layout"));
            out.push(l.linear.bias.as_slice_mut().expect("standard layout"));
            out.push(l.norm.gamma.as_slice_mut().expect("standard layout"));
            out.push(l.norm.beta.as_slice_mut().expect("standard layout"));
            out.push(l.norm.running_mean.as_slice_mut().expect("standard layout"));
            out.push(l.norm.running_var.as_slice_mut().expect("standard layout"));
        }
        out.push(self.classifier.weight.as_slice_mut().expect("standard layout"));
        out.push(self.classifier.bias.as_slice_mut().expect("standard layout"));
        out
    }

    /// Appends every tensor as `u64` length followed by `width`-byte values.
    pub(crate) fn write_tensors(&self, out: &mut Vec<u8>, width: u8) {
        for t in self.tensors() {
            out.extend_from_slice(&(t.len() as u64).to_le_bytes());
            for &v in t {
                match width {
                    4 => out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes()),
                    _ => out.extend_from_slice(&v.to_f64c().to_le_bytes()),
                }
            }
        }
    }

    /// Payload byte count that [`Network::write_tensors`] produces.
    pub(crate) fn payload_len(&self, width: u8) -> usize {
        self.tensors()
            .iter()
            .map(|t| 8 + t.len() * width as usize)
            .sum()
    }

    /// Fills this (shape-initialized) network from a tensor payload. The
    /// payload length is verified up front so no partial model escapes.
    pub(crate) fn read_tensors(&mut self, r: &mut Reader<'_>, width: u8) -> Result<()> {
        let expected = self.payload_len(width);
        if r.remaining() != expected {
            return Err(PnnError::format(
                r.offset(),
                format!(
                    "config implies {expected} payload bytes, file has {}",
                    r.remaining()
                ),
            ));
        }
        for t in self.tensors_mut() {
            let at = r.offset();
            let len = r.u64()? as usize;
            if len != t.len() {
                return Err(PnnError::format(
                    at,
                    format!("tensor length {len}, expected {}", t.len()),
                ));
            }
            let values: Vec<T> = r.scalars(len, width)?;
            t.copy_from_slice(&values);
        }
        r.finish()?;
        self.revision = 0;
        Ok(())
    }
}
