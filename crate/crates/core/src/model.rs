//! The stacked document classifier: embedding → graph layers → mean
//! readout → modality fusion → softmax head, with a full backward pass.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, Uniform};
use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::fusion::{
    classify, classify_backward, fuse_concat, transform_modality, transform_modality_backward,
    ClassifierHead, ModalityTransform,
};
use crate::graph::{build_graph, GraphConfig, TextGraph};
use crate::layers::{
    embed_backward, embed_forward, gat_backward, gat_forward, gcn_backward, gcn_forward, nn4g_backward,
    nn4g_forward, readout_mean, readout_mean_backward, sage_backward, sage_forward, Aggregator, GatCache,
    GatLayerParams, GcnCache, GcnLayerParams, Nn4gCache, Nn4gLayerParams, SageCache, SageLayerParams,
};
use crate::tensor::{ParamSet, Scalar, Tensor};

/// Lower bound applied to the true-class probability inside the log.
pub const PROB_CLAMP: f64 = 1e-12;

/// Which branches of the model are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Graph layers plus modality fusion.
    Full,
    /// Graph layers only; modalities are ignored.
    GnnOnly,
    /// Mean of raw word embeddings plus modality fusion; no graph layers.
    MmcOnly,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Full, Mode::GnnOnly, Mode::MmcOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::GnnOnly => "gnn-only",
            Mode::MmcOnly => "mmc-only",
        }
    }

    pub fn uses_graph(self) -> bool {
        self != Mode::MmcOnly
    }

    pub fn uses_modalities(self) -> bool {
        self != Mode::GnnOnly
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "gnn-only" => Ok(Mode::GnnOnly),
            "mmc-only" => Ok(Mode::MmcOnly),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Gat,
    Gcn,
    Sage,
    Nn4g,
}

impl LayerKind {
    pub const ALL: [LayerKind; 4] = [LayerKind::Gat, LayerKind::Gcn, LayerKind::Sage, LayerKind::Nn4g];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Gat => "gat",
            LayerKind::Gcn => "gcn",
            LayerKind::Sage => "sage",
            LayerKind::Nn4g => "nn4g",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gat" => Ok(LayerKind::Gat),
            "gcn" => Ok(LayerKind::Gcn),
            "sage" => Ok(LayerKind::Sage),
            "nn4g" => Ok(LayerKind::Nn4g),
            other => Err(Error::Config(format!("unknown layer kind {other:?}"))),
        }
    }
}

/// A declared modality and its input width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModalitySpec {
    pub name: String,
    pub dim: usize,
}

/// Everything that fixes the model's shape and forward behavior.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub mode: Mode,
    pub layer_kind: LayerKind,
    pub vocab_size: usize,
    pub classes: usize,
    pub d_embed: usize,
    pub widths: Vec<usize>,
    pub modalities: Vec<ModalitySpec>,
    pub d_fuse: usize,
    pub slope: f64,
    pub sage_sample_size: usize,
    pub sage_aggregator: Aggregator,
    pub graph: GraphConfig,
    /// Neighbor-sampling seed used outside training.
    pub sample_seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.graph.validate()?;
        if self.classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.d_embed == 0 || self.d_fuse == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if self.mode.uses_graph() && (self.widths.is_empty() || self.widths.contains(&0)) {
            return Err(Error::Config("layer_widths must be nonempty and positive".into()));
        }
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(Error::Config("leaky_slope must lie in (0, 1)".into()));
        }
        if self.sage_sample_size == 0 {
            return Err(Error::Config("sage_sample_size must be >= 1".into()));
        }
        if let Some(m) = self.modalities.iter().find(|m| m.dim == 0) {
            return Err(Error::Config(format!("modality {} has zero width", m.name)));
        }
        Ok(())
    }

    /// Width of the document representation entering fusion.
    pub fn d_doc(&self) -> usize {
        match self.mode {
            Mode::MmcOnly => self.d_embed,
            _ => *self.widths.last().unwrap_or(&self.d_embed),
        }
    }

    pub fn active_modalities(&self) -> &[ModalitySpec] {
        if self.mode.uses_modalities() {
            &self.modalities
        } else {
            &[]
        }
    }

    pub fn d_total(&self) -> usize {
        self.d_doc() + self.active_modalities().len() * self.d_fuse
    }

    /// `(d_in, d_out)` of each graph layer; for NN4G also the hidden width fed back.
    fn layer_dims(&self) -> Vec<(usize, usize, usize)> {
        if !self.mode.uses_graph() {
            return Vec::new();
        }
        let mut d_in = self.d_embed;
        self.widths
            .iter()
            .map(|&d_out| {
                let dims = match self.layer_kind {
                    LayerKind::Nn4g => (self.d_embed, d_out, d_in),
                    _ => (d_in, d_out, d_in),
                };
                d_in = d_out;
                dims
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams<T> {
    Gcn(GcnLayerParams<T>),
    Gat(GatLayerParams<T>),
    Sage(SageLayerParams<T>),
    Nn4g(Nn4gLayerParams<T>),
}

/// All trainable tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    /// `(|V|+1) × d_embed`; row 0 is the UNK vector.
    pub embedding: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub modalities: Vec<ModalityTransform<T>>,
    pub head: ClassifierHead<T>,
}

fn glorot<T: Scalar, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor<T> {
    let r = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-r, r);
    let data = (0..rows * cols).map(|_| T::of(dist.sample(rng))).collect();
    Tensor::from_vec(&[rows, cols], data).expect("finite init")
}

impl<T: Scalar> ModelParams<T> {
    /// Glorot-uniform weights, zero biases, embeddings in U(-0.05, 0.05).
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let emb_dist = Uniform::new_inclusive(-0.05, 0.05);
        let rows = cfg.vocab_size + 1;
        let embedding = Tensor::from_vec(
            &[rows, cfg.d_embed],
            (0..rows * cfg.d_embed).map(|_| T::of(emb_dist.sample(rng))).collect(),
        )
        .expect("finite init");
        let layers = cfg
            .layer_dims()
            .into_iter()
            .map(|(d_in, d_out, d_hidden)| match cfg.layer_kind {
                LayerKind::Gcn => LayerParams::Gcn(GcnLayerParams { w: glorot(rng, d_in, d_out) }),
                LayerKind::Gat => {
                    let w = glorot(rng, d_in, d_out);
                    let a = glorot::<T, R>(rng, 2 * d_out, 1);
                    let a = Tensor::from_vec(&[1, 2 * d_out], a.into_data()).expect("finite init");
                    LayerParams::Gat(GatLayerParams { w, a })
                }
                LayerKind::Sage => {
                    let w_pool = (cfg.sage_aggregator == Aggregator::Pooling).then(|| glorot(rng, d_in, d_in));
                    LayerParams::Sage(SageLayerParams {
                        w: glorot(rng, d_in, d_out),
                        w_pool,
                        sample_size: cfg.sage_sample_size,
                        aggregator: cfg.sage_aggregator,
                    })
                }
                LayerKind::Nn4g => LayerParams::Nn4g(Nn4gLayerParams {
                    w_input: glorot(rng, d_in, d_out),
                    theta: glorot(rng, d_hidden, d_out),
                }),
            })
            .collect();
        let modalities = cfg
            .active_modalities()
            .iter()
            .map(|m| ModalityTransform {
                w: glorot(rng, m.dim, cfg.d_fuse),
                b: Tensor::zeros(&[1, cfg.d_fuse]),
            })
            .collect();
        let head = ClassifierHead {
            w: glorot(rng, cfg.d_total(), cfg.classes),
            b: Tensor::zeros(&[1, cfg.classes]),
        };
        ModelParams {
            embedding,
            layers,
            modalities,
            head,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill_zero();
        }
        z
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            embedding: self.embedding.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    LayerParams::Gcn(p) => LayerParams::Gcn(GcnLayerParams { w: p.w.cast() }),
                    LayerParams::Gat(p) => LayerParams::Gat(GatLayerParams { w: p.w.cast(), a: p.a.cast() }),
                    LayerParams::Sage(p) => LayerParams::Sage(SageLayerParams {
                        w: p.w.cast(),
                        w_pool: p.w_pool.as_ref().map(Tensor::cast),
                        sample_size: p.sample_size,
                        aggregator: p.aggregator,
                    }),
                    LayerParams::Nn4g(p) => LayerParams::Nn4g(Nn4gLayerParams {
                        w_input: p.w_input.cast(),
                        theta: p.theta.cast(),
                    }),
                })
                .collect(),
            modalities: self
                .modalities
                .iter()
                .map(|m| ModalityTransform { w: m.w.cast(), b: m.b.cast() })
                .collect(),
            head: ClassifierHead {
                w: self.head.w.cast(),
                b: self.head.b.cast(),
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }
}

impl<T: Scalar> ParamSet<T> for ModelParams<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.named(&[])
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.embedding];
        for layer in &mut self.layers {
            match layer {
                LayerParams::Gcn(p) => out.push(&mut p.w),
                LayerParams::Gat(p) => out.extend([&mut p.w, &mut p.a]),
                LayerParams::Sage(p) => {
                    out.push(&mut p.w);
                    if let Some(wp) = p.w_pool.as_mut() {
                        out.push(wp);
                    }
                }
                LayerParams::Nn4g(p) => out.extend([&mut p.w_input, &mut p.theta]),
            }
        }
        for m in &mut self.modalities {
            out.extend([&mut m.w, &mut m.b]);
        }
        out.extend([&mut self.head.w, &mut self.head.b]);
        out
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Stable tensor names; `modality_names` labels the transforms (indices otherwise).
    pub fn named(&self, modality_names: &[&str]) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Gcn(p) => out.push((format!("layer{i}.w"), &p.w)),
                LayerParams::Gat(p) => {
                    out.push((format!("layer{i}.w"), &p.w));
                    out.push((format!("layer{i}.a"), &p.a));
                }
                LayerParams::Sage(p) => {
                    out.push((format!("layer{i}.w"), &p.w));
                    if let Some(wp) = &p.w_pool {
                        out.push((format!("layer{i}.w_pool"), wp));
                    }
                }
                LayerParams::Nn4g(p) => {
                    out.push((format!("layer{i}.w_input"), &p.w_input));
                    out.push((format!("layer{i}.theta"), &p.theta));
                }
            }
        }
        for (i, m) in self.modalities.iter().enumerate() {
            let name = modality_names.get(i).map_or_else(|| i.to_string(), |s| s.to_string());
            out.push((format!("modality.{name}.w"), &m.w));
            out.push((format!("modality.{name}.b"), &m.b));
        }
        out.push(("classifier.w".to_string(), &self.head.w));
        out.push(("classifier.b".to_string(), &self.head.b));
        out
    }
}

/// A document prepared for repeated forward passes: its graph, neighbor
/// lists, token multiset and modality vectors in declaration order.
#[derive(Clone, Debug)]
pub struct Sample {
    pub graph: TextGraph,
    with_self: Vec<Vec<usize>>,
    without_self: Vec<Vec<usize>>,
    /// `(token id, occurrences)` sorted by id.
    token_counts: Vec<(usize, usize)>,
    token_total: usize,
    pub modalities: Vec<Tensor<f32>>,
    pub label: usize,
}

impl Sample {
    pub fn prepare(ids: &[usize], modalities: Vec<Tensor<f32>>, label: usize, graph_cfg: &GraphConfig) -> Result<Self> {
        let graph = build_graph(ids, graph_cfg)?;
        let mut counts = std::collections::BTreeMap::new();
        for &id in ids {
            *counts.entry(id).or_insert(0) += 1;
        }
        Ok(Sample {
            with_self: graph.neighbor_lists(true),
            without_self: graph.neighbor_lists(false),
            graph,
            token_counts: counts.into_iter().collect(),
            token_total: ids.len(),
            modalities,
            label,
        })
    }
}

enum LayerCache<T> {
    Gcn(GcnCache<T>),
    Gat(GatCache<T>),
    Sage(SageCache<T>),
    Nn4g(Nn4gCache<T>),
}

/// Intermediates of one forward pass.
pub struct Trace<T> {
    layers: Vec<LayerCache<T>>,
    modality_inputs: Vec<Tensor<T>>,
    modality_pre: Vec<Tensor<T>>,
    fused: Tensor<T>,
    pub probs: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T = f32> {
    pub cfg: ModelConfig,
    pub params: ModelParams<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new<R: Rng>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let params = ModelParams::init(&cfg, rng);
        Ok(Model { cfg, params })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
        }
    }

    fn slope(&self) -> T {
        T::of(self.cfg.slope)
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        let active = self.cfg.active_modalities();
        if s.modalities.len() < active.len() {
            return Err(Error::Config(format!(
                "sample carries {} modality vectors, model needs {}",
                s.modalities.len(),
                active.len()
            )));
        }
        for (spec, m) in active.iter().zip(&s.modalities) {
            if m.len() != spec.dim {
                return Err(shape_err(format!(
                    "modality {} has width {}, expected {}",
                    spec.name,
                    m.len(),
                    spec.dim
                )));
            }
        }
        if let Some(&(id, _)) = s.token_counts.last() {
            if id > self.cfg.vocab_size {
                return Err(Error::IndexOutOfRange {
                    index: id,
                    len: self.cfg.vocab_size + 1,
                });
            }
        }
        Ok(())
    }

    /// Class probabilities for one document.
    pub fn forward(&self, s: &Sample, sample_seed: u64) -> Result<Tensor<T>> {
        Ok(self.forward_trace(s, sample_seed)?.probs)
    }

    /// Probabilities using the model's own inference sampling seed.
    pub fn predict(&self, s: &Sample) -> Result<Tensor<T>> {
        self.forward(s, self.cfg.sample_seed)
    }

    pub fn forward_trace(&self, s: &Sample, sample_seed: u64) -> Result<Trace<T>> {
        self.check_sample(s)?;
        let slope = self.slope();
        let mut caches = Vec::with_capacity(self.params.layers.len());
        let h_doc = if self.cfg.mode.uses_graph() {
            let g = &s.graph;
            let x = embed_forward(&g.nodes, &self.params.embedding)?;
            let mut h = x.clone();
            for (k, layer) in self.params.layers.iter().enumerate() {
                let (out, cache) = match layer {
                    LayerParams::Gcn(p) => {
                        let (o, c) = gcn_forward(&g.normalized, &h, p, slope)?;
                        (o, LayerCache::Gcn(c))
                    }
                    LayerParams::Gat(p) => {
                        let (o, c) = gat_forward(&h, &s.with_self, p, slope)?;
                        (o, LayerCache::Gat(c))
                    }
                    LayerParams::Sage(p) => {
                        let seed = sample_seed.wrapping_add(k as u64);
                        let (o, c) = sage_forward(&h, &s.without_self, p, seed, slope)?;
                        (o, LayerCache::Sage(c))
                    }
                    LayerParams::Nn4g(p) => {
                        let h_prev = if k == 0 { Tensor::zeros(x.shape()) } else { h };
                        let (o, c) = nn4g_forward(&x, &h_prev, &g.adjacency, p, slope)?;
                        (o, LayerCache::Nn4g(c))
                    }
                };
                caches.push(cache);
                h = out;
            }
            readout_mean(&h)?
        } else {
            self.mean_embedding(s)?
        };

        let active = self.cfg.active_modalities().len();
        let mut modality_inputs = Vec::with_capacity(active);
        let mut modality_pre = Vec::with_capacity(active);
        let mut modality_out = Vec::with_capacity(active);
        for (m, t) in s.modalities.iter().take(active).zip(&self.params.modalities) {
            let input = Tensor::from_vec(&[1, m.len()], m.data().iter().map(|v| T::of(v.wide())).collect())?;
            let (out, pre) = transform_modality(&input, t, slope)?;
            modality_inputs.push(input);
            modality_pre.push(pre);
            modality_out.push(out);
        }
        let fused = fuse_concat(&h_doc, &modality_out)?;
        let probs = classify(&fused, &self.params.head)?;
        Ok(Trace {
            layers: caches,
            modality_inputs,
            modality_pre,
            fused,
            probs,
        })
    }

    /// Occurrence-weighted mean of raw embeddings, summed in token-id order.
    fn mean_embedding(&self, s: &Sample) -> Result<Tensor<T>> {
        if s.token_total == 0 {
            return Err(Error::EmptyDocument);
        }
        let d = self.cfg.d_embed;
        let mut acc = vec![0.0f64; d];
        for &(id, count) in &s.token_counts {
            for (a, &e) in acc.iter_mut().zip(self.params.embedding.row(id)) {
                *a += count as f64 * e.wide();
            }
        }
        let n = s.token_total as f64;
        Tensor::from_vec(&[1, d], acc.into_iter().map(|a| T::of(a / n)).collect())
    }

    /// Backward of `scale · -log(max(p_label, clamp))`, accumulated into `grads`.
    pub fn backward(&self, s: &Sample, trace: &Trace<T>, label: usize, scale: f64, grads: &mut ModelParams<T>) -> Result<()> {
        let slope = self.slope();
        let d_fused = classify_backward(
            &trace.fused,
            &trace.probs,
            label,
            scale,
            PROB_CLAMP,
            &self.params.head,
            &mut grads.head,
        )?;
        let d_doc_width = self.cfg.d_doc();
        let d_fuse = self.cfg.d_fuse;
        for (i, ((input, pre), t_grad)) in trace
            .modality_inputs
            .iter()
            .zip(&trace.modality_pre)
            .zip(grads.modalities.iter_mut())
            .enumerate()
        {
            let start = d_doc_width + i * d_fuse;
            let d_out = Tensor::from_vec(&[1, d_fuse], d_fused.data()[start..start + d_fuse].to_vec())?;
            transform_modality_backward(input, pre, &d_out, slope, t_grad)?;
        }
        let d_doc = Tensor::from_vec(&[1, d_doc_width], d_fused.data()[..d_doc_width].to_vec())?;

        if !self.cfg.mode.uses_graph() {
            let inv = 1.0 / s.token_total as f64;
            for &(id, count) in &s.token_counts {
                let w = count as f64 * inv;
                for (g, &d) in grads.embedding.row_mut(id).iter_mut().zip(d_doc.data()) {
                    *g += T::of(w * d.wide());
                }
            }
            return Ok(());
        }

        let g = &s.graph;
        let n = g.node_count();
        let mut d_h = readout_mean_backward(&d_doc, n);
        let mut d_x = Tensor::zeros(&[n, self.cfg.d_embed]);
        for (k, (layer, cache)) in self.params.layers.iter().zip(&trace.layers).enumerate().rev() {
            d_h = match (layer, cache, &mut grads.layers[k]) {
                (LayerParams::Gcn(p), LayerCache::Gcn(c), LayerParams::Gcn(gp)) => {
                    gcn_backward(&g.normalized, c, p, &d_h, slope, gp)?
                }
                (LayerParams::Gat(p), LayerCache::Gat(c), LayerParams::Gat(gp)) => {
                    gat_backward(&s.with_self, c, p, &d_h, slope, gp)?
                }
                (LayerParams::Sage(p), LayerCache::Sage(c), LayerParams::Sage(gp)) => {
                    sage_backward(c, p, &d_h, slope, gp)?
                }
                (LayerParams::Nn4g(p), LayerCache::Nn4g(c), LayerParams::Nn4g(gp)) => {
                    let (dx, dh_prev) = nn4g_backward(&g.adjacency, c, p, &d_h, slope, gp)?;
                    d_x.add_assign(&dx)?;
                    if k == 0 {
                        Tensor::zeros(&[n, self.cfg.d_embed])
                    } else {
                        dh_prev
                    }
                }
                _ => return Err(shape_err("gradient buffer does not match model layout")),
            };
        }
        if self.cfg.layer_kind != LayerKind::Nn4g {
            d_x = d_h;
        }
        embed_backward(&g.nodes, &d_x, &mut grads.embedding)
    }

    /// Mean cross-entropy over `batch`, accumulating its gradient (averaged
    /// over the batch) into `grads`. `seeds[i]` drives neighbor sampling for
    /// `batch[i]`.
    pub fn batch_loss_and_grad(&self, batch: &[&Sample], seeds: &[u64], grads: &mut ModelParams<T>) -> Result<f64> {
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for (s, &seed) in batch.iter().zip(seeds) {
            total += self.sample_loss_and_grad(s, seed, scale, grads)?;
        }
        Ok(total * scale)
    }

    /// Unscaled loss of one sample; its gradient is accumulated with weight `scale`.
    pub fn sample_loss_and_grad(&self, s: &Sample, seed: u64, scale: f64, grads: &mut ModelParams<T>) -> Result<f64> {
        let trace = self.forward_trace(s, seed)?;
        let loss = sample_loss(&trace.probs, s.label)?;
        self.backward(s, &trace, s.label, scale, grads)?;
        Ok(loss)
    }

    /// Mean cross-entropy of `batch` without gradients.
    pub fn batch_loss(&self, batch: &[&Sample], seeds: &[u64]) -> Result<f64> {
        let mut total = 0.0;
        for (s, &seed) in batch.iter().zip(seeds) {
            total += sample_loss(&self.forward(s, seed)?, s.label)?;
        }
        Ok(total / batch.len() as f64)
    }
}

fn sample_loss<T: Scalar>(probs: &Tensor<T>, label: usize) -> Result<f64> {
    let k = probs.len();
    if label >= k {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    Ok(-probs.data()[label].wide().max(PROB_CLAMP).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_config(mode: Mode, kind: LayerKind, aggregator: Aggregator) -> ModelConfig {
        ModelConfig {
            mode,
            layer_kind: kind,
            vocab_size: 6,
            classes: 3,
            d_embed: 4,
            widths: vec![5, 3],
            modalities: vec![
                ModalitySpec { name: "image".into(), dim: 4 },
                ModalitySpec { name: "meta".into(), dim: 2 },
            ],
            d_fuse: 3,
            slope: 0.2,
            sage_sample_size: 2,
            sage_aggregator: aggregator,
            graph: GraphConfig { window_size: 2, ..GraphConfig::default() },
            sample_seed: 9,
        }
    }

    fn sample(ids: &[usize], label: usize, rng: &mut ChaCha8Rng) -> Sample {
        let mods = vec![
            Tensor::from_vec(&[1, 4], (0..4).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap(),
            Tensor::from_vec(&[1, 2], (0..2).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap(),
        ];
        Sample::prepare(ids, mods, label, &GraphConfig { window_size: 2, ..GraphConfig::default() }).unwrap()
    }

    #[test]
    fn default_widths_follow_config() {
        let mut cfg = small_config(Mode::Full, LayerKind::Gat, Aggregator::Mean);
        cfg.d_embed = 128;
        cfg.widths = vec![128, 64];
        let m: Model<f32> = Model::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let LayerParams::Gat(l0) = &m.params.layers[0] else { panic!() };
        let LayerParams::Gat(l1) = &m.params.layers[1] else { panic!() };
        assert_eq!((l0.w.shape(), l0.a.shape()), (&[128, 128][..], &[1, 256][..]));
        assert_eq!((l1.w.shape(), l1.a.shape()), (&[128, 64][..], &[1, 128][..]));
        assert_eq!(m.params.head.w.rows(), 64 + 2 * 3);
    }

    #[test]
    fn full_mode_without_modalities_equals_gnn_only() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let mut cfg = small_config(Mode::Full, LayerKind::Gat, Aggregator::Mean);
        cfg.modalities.clear();
        let full: Model<f64> = Model::new(cfg.clone(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        cfg.mode = Mode::GnnOnly;
        let gnn: Model<f64> = Model::new(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let s = sample(&[1, 2, 3, 1, 4], 0, &mut r);
        assert_eq!(full.predict(&s).unwrap(), gnn.predict(&s).unwrap());
    }

    #[test]
    fn mmc_only_ignores_token_order() {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let m: Model<f32> =
            Model::new(small_config(Mode::MmcOnly, LayerKind::Gat, Aggregator::Mean), &mut r).unwrap();
        let a = sample(&[1, 2, 3, 2, 5], 1, &mut ChaCha8Rng::seed_from_u64(8));
        let b = sample(&[2, 5, 2, 1, 3], 1, &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(m.predict(&a).unwrap(), m.predict(&b).unwrap());
    }

    #[test]
    fn zeroed_modality_transforms_make_modalities_irrelevant() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let mut m: Model<f32> =
            Model::new(small_config(Mode::Full, LayerKind::Gcn, Aggregator::Mean), &mut r).unwrap();
        for t in &mut m.params.modalities {
            t.w.fill_zero();
            t.b.fill_zero();
        }
        let a = sample(&[1, 2, 3], 0, &mut ChaCha8Rng::seed_from_u64(1));
        let b = sample(&[1, 2, 3], 0, &mut ChaCha8Rng::seed_from_u64(2));
        assert_ne!(a.modalities, b.modalities);
        assert_eq!(m.predict(&a).unwrap(), m.predict(&b).unwrap());
    }

    #[test]
    fn missing_or_wrong_modality_is_rejected() {
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let m: Model<f32> = Model::new(small_config(Mode::Full, LayerKind::Gcn, Aggregator::Mean), &mut r).unwrap();
        let cfg = GraphConfig::default();
        let bare = Sample::prepare(&[1, 2], vec![], 0, &cfg).unwrap();
        assert!(m.predict(&bare).is_err());
        let narrow = Sample::prepare(&[1, 2], vec![Tensor::zeros(&[1, 3]), Tensor::zeros(&[1, 2])], 0, &cfg).unwrap();
        assert!(matches!(m.predict(&narrow), Err(Error::ShapeMismatch(_))));
        let oov = Sample::prepare(&[1, 99], vec![Tensor::zeros(&[1, 4]), Tensor::zeros(&[1, 2])], 0, &cfg).unwrap();
        assert!(matches!(m.predict(&oov), Err(Error::IndexOutOfRange { .. })));
    }

    fn check_model(mode: Mode, kind: LayerKind, aggregator: Aggregator, seed: u64) -> f64 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let mut model: Model<f64> = Model::new(small_config(mode, kind, aggregator), &mut r).unwrap();
        // spread embeddings so max-pool winners are well separated
        model.params.embedding.scale(20.0);
        let docs = [
            sample(&[1, 2, 3, 1, 4], 0, &mut r),
            sample(&[5, 2, 6, 0, 5, 3], 2, &mut r),
        ];
        let batch: Vec<&Sample> = docs.iter().collect();
        let seeds = [11, 12];
        let mut grads = model.params.zeros_like();
        model.batch_loss_and_grad(&batch, &seeds, &mut grads).unwrap();
        let mut params = model.params.clone();
        let cfg = model.cfg.clone();
        let rep = gradcheck(&mut params, &grads, 1e-4, |p| {
            let m = Model { cfg: cfg.clone(), params: p.clone() };
            m.batch_loss(&batch, &seeds)
        })
        .unwrap();
        rep.max_rel_error
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        for mode in Mode::ALL {
            for kind in LayerKind::ALL {
                let aggs: &[Aggregator] = if kind == LayerKind::Sage {
                    &[Aggregator::Mean, Aggregator::Pooling]
                } else {
                    &[Aggregator::Mean]
                };
                for &agg in aggs {
                    let err = check_model(mode, kind, agg, 3);
                    assert!(err < 1e-4, "{mode} {kind} {agg:?}: {err}");
                }
            }
        }
    }

    #[test]
    fn param_names_are_stable() {
        let m: Model<f32> = Model::new(
            small_config(Mode::Full, LayerKind::Nn4g, Aggregator::Mean),
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let names: Vec<String> = m.params.named(&["image", "meta"]).into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            [
                "embedding",
                "layer0.w_input",
                "layer0.theta",
                "layer1.w_input",
                "layer1.theta",
                "modality.image.w",
                "modality.image.b",
                "modality.meta.w",
                "modality.meta.b",
                "classifier.w",
                "classifier.b"
            ]
        );
    }
}
