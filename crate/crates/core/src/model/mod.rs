//! Transformer-encoder performance renderer.
//!
//! Six per-feature score embeddings are concatenated, projected to
//! `d_model`, offset by sinusoidal positions and run through a post-norm
//! bidirectional encoder. The performer embedding is added to the final
//! hidden state, and three linear heads emit logits over the velocity, IOI
//! and duration vocabularies.
//!
//! Only the non-pad prefix of a segment is computed. PAD rows never enter
//! attention, and their logits are left at zero.

mod checkpoint;
pub mod layers;
mod predict;
mod sampling;

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use predict::{predict_performance, predict_tokens};
pub use sampling::{sample, sample_with_rng, SampledTokens, ARGMAX_TEMPERATURE};

use crate::error::{Error, Result};
use crate::tokenizer::{Feature, TokenSegment, VocabSpec, SEGMENT_LEN};
use layers::{gelu, gelu_grad, Attention, AttentionCache, LayerNorm, LayerNormCache, Linear};

/// The three predicted features, in head order.
pub const OUTPUT_FEATURES: [Feature; 3] = [Feature::Velocity, Feature::Ioi, Feature::Duration];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct M2MConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Width of each per-feature input embedding.
    pub d_embed: usize,
    pub dropout: f64,
    pub n_performers: usize,
    pub vocab: VocabSpec,
    pub max_seq_len: usize,
    pub seed: u64,
}

impl Default for M2MConfig {
    /// Desk-scale defaults: 2 layers, width 64, 4 heads.
    fn default() -> Self {
        Self::with_shape(2, 64, 4, 256, 4)
    }
}

impl M2MConfig {
    pub fn with_shape(n_layers: usize, d_model: usize, n_heads: usize, d_ff: usize, n_performers: usize) -> Self {
        Self {
            n_layers,
            d_model,
            n_heads,
            d_ff,
            d_embed: d_model / 4,
            dropout: 0.1,
            n_performers,
            vocab: VocabSpec::default(),
            max_seq_len: SEGMENT_LEN,
            seed: 0,
        }
    }

    /// Roughly 12M parameters: 3 layers of width 512.
    pub fn large(n_performers: usize) -> Self {
        Self::with_shape(3, 512, 8, 2048, n_performers)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail("d_model must be divisible by n_heads");
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.d_embed == 0 {
            return fail("layer count and widths must be positive");
        }
        if self.n_performers == 0 {
            return fail("need at least one performer");
        }
        if self.max_seq_len != SEGMENT_LEN {
            return fail("max_seq_len must be 256");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.vocab != VocabSpec::default() {
            return fail("only the default vocabulary layout is supported");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attention: Attention,
    pub ln1: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub ln2: LayerNorm,
}

/// Every trainable tensor of the model. Also used for gradients and
/// optimizer moments, which share the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// One table per input feature, in [`Feature::ALL`] order.
    pub embeddings: Vec<Array2<f64>>,
    pub input_proj: Linear,
    pub layers: Vec<EncoderLayer>,
    /// `n_performers × d_model`
    pub performer: Array2<f64>,
    /// Velocity, IOI and duration heads.
    pub heads: Vec<Linear>,
}

impl Params {
    pub fn zeros(cfg: &M2MConfig) -> Self {
        let d = cfg.d_model;
        Self {
            embeddings: Feature::ALL
                .iter()
                .map(|&f| Array2::zeros((cfg.vocab.size(f), cfg.d_embed)))
                .collect(),
            input_proj: Linear::zeros(6 * cfg.d_embed, d),
            layers: (0..cfg.n_layers)
                .map(|_| EncoderLayer {
                    attention: Attention::zeros(d),
                    ln1: LayerNorm::zeros(d),
                    ff1: Linear::zeros(d, cfg.d_ff),
                    ff2: Linear::zeros(cfg.d_ff, d),
                    ln2: LayerNorm::zeros(d),
                })
                .collect(),
            performer: Array2::zeros((cfg.n_performers, d)),
            heads: OUTPUT_FEATURES
                .iter()
                .map(|&f| Linear::zeros(d, cfg.vocab.size(f)))
                .collect(),
        }
    }

    fn init(cfg: &M2MConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut p = Self::zeros(cfg);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let xavier = |rng: &mut ChaCha8Rng, w: &mut Array2<f64>| {
            let limit = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("valid range");
            w.iter_mut().for_each(|v| *v = dist.sample(rng));
        };
        for table in &mut p.embeddings {
            table.iter_mut().for_each(|v| *v = unit.sample(&mut rng));
        }
        xavier(&mut rng, &mut p.input_proj.w);
        for layer in &mut p.layers {
            for lin in [
                &mut layer.attention.q,
                &mut layer.attention.k,
                &mut layer.attention.v,
                &mut layer.attention.o,
                &mut layer.ff1,
                &mut layer.ff2,
            ] {
                xavier(&mut rng, &mut lin.w);
            }
            layer.ln1 = LayerNorm::new(cfg.d_model);
            layer.ln2 = LayerNorm::new(cfg.d_model);
        }
        p.performer
            .iter_mut()
            .for_each(|v| *v = 0.1 * unit.sample(&mut rng));
        for head in &mut p.heads {
            xavier(&mut rng, &mut head.w);
        }
        p
    }

    /// Tensors in a fixed order with stable names.
    pub fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out: Vec<(String, &Array2<f64>)> = Vec::new();
        for (f, t) in Feature::ALL.iter().zip(&self.embeddings) {
            out.push((format!("embedding.{}", f.name()), t));
        }
        out.push(("input_proj.w".into(), &self.input_proj.w));
        out.push(("input_proj.b".into(), &self.input_proj.b));
        for (i, l) in self.layers.iter().enumerate() {
            let a = &l.attention;
            for (name, lin) in [("q", &a.q), ("k", &a.k), ("v", &a.v), ("o", &a.o)] {
                out.push((format!("layer{i}.attention.{name}.w"), &lin.w));
                out.push((format!("layer{i}.attention.{name}.b"), &lin.b));
            }
            out.push((format!("layer{i}.ln1.gamma"), &l.ln1.gamma));
            out.push((format!("layer{i}.ln1.beta"), &l.ln1.beta));
            out.push((format!("layer{i}.ff1.w"), &l.ff1.w));
            out.push((format!("layer{i}.ff1.b"), &l.ff1.b));
            out.push((format!("layer{i}.ff2.w"), &l.ff2.w));
            out.push((format!("layer{i}.ff2.b"), &l.ff2.b));
            out.push((format!("layer{i}.ln2.gamma"), &l.ln2.gamma));
            out.push((format!("layer{i}.ln2.beta"), &l.ln2.beta));
        }
        out.push(("performer".into(), &self.performer));
        for (f, h) in OUTPUT_FEATURES.iter().zip(&self.heads) {
            out.push((format!("head.{}.w", f.name()), &h.w));
            out.push((format!("head.{}.b", f.name()), &h.b));
        }
        out
    }

    /// Mutable tensors in the same order as [`Params::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = self.embeddings.iter_mut().collect();
        out.push(&mut self.input_proj.w);
        out.push(&mut self.input_proj.b);
        for l in &mut self.layers {
            let a = &mut l.attention;
            for lin in [&mut a.q, &mut a.k, &mut a.v, &mut a.o] {
                out.push(&mut lin.w);
                out.push(&mut lin.b);
            }
            out.push(&mut l.ln1.gamma);
            out.push(&mut l.ln1.beta);
            out.push(&mut l.ff1.w);
            out.push(&mut l.ff1.b);
            out.push(&mut l.ff2.w);
            out.push(&mut l.ff2.b);
            out.push(&mut l.ln2.gamma);
            out.push(&mut l.ln2.beta);
        }
        out.push(&mut self.performer);
        for h in &mut self.heads {
            out.push(&mut h.w);
            out.push(&mut h.b);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += scale · other`
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, b);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Coarse parameter group a tensor belongs to, keyed by its name.
pub fn param_group(name: &str) -> &'static str {
    if name.starts_with("embedding.") {
        "embeddings"
    } else if name.starts_with("input_proj") {
        "input_projection"
    } else if name.contains(".attention.") {
        "attention"
    } else if name.contains(".ln") {
        "layer_norm"
    } else if name.contains(".ff") {
        "feed_forward"
    } else if name == "performer" {
        "performer"
    } else {
        "heads"
    }
}

/// Standard sinusoidal position table, `len × d`.
pub fn sinusoidal_positions(len: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((len, d), |(pos, i)| {
        let pair = (i / 2) as f64;
        let angle = pos as f64 / 10_000f64.powf(2.0 * pair / d as f64);
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Per-position logits for the three predicted features. Rows past
/// `n_valid` belong to PAD positions and hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputDistributions {
    pub velocity: Array2<f64>,
    pub ioi: Array2<f64>,
    pub duration: Array2<f64>,
    pub n_valid: usize,
}

impl OutputDistributions {
    pub fn logits(&self, task: usize) -> &Array2<f64> {
        match task {
            0 => &self.velocity,
            1 => &self.ioi,
            2 => &self.duration,
            _ => panic!("task index {task} out of range"),
        }
    }

    pub fn logits_mut(&mut self, task: usize) -> &mut Array2<f64> {
        match task {
            0 => &mut self.velocity,
            1 => &mut self.ioi,
            2 => &mut self.duration,
            _ => panic!("task index {task} out of range"),
        }
    }
}

struct LayerCache {
    input: Array2<f64>,
    attention: AttentionCache,
    attn_dropout: Option<Array2<f64>>,
    ln1: LayerNormCache,
    h1: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ff_dropout: Option<Array2<f64>>,
    ln2: LayerNormCache,
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache {
    tokens: Vec<[u32; 6]>,
    performer_id: usize,
    x_cat: Array2<f64>,
    embed_dropout: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    hidden: Array2<f64>,
}

impl ForwardCache {
    pub fn n_valid(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct M2MModel {
    pub config: M2MConfig,
    pub params: Params,
    positions: Array2<f64>,
}

fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

impl M2MModel {
    /// Randomly initialized model seeded from `config.seed`.
    pub fn new(config: M2MConfig) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config);
        Ok(Self::from_params(config, params))
    }

    pub fn from_params(config: M2MConfig, params: Params) -> Self {
        let positions = sinusoidal_positions(config.max_seq_len, config.d_model);
        Self {
            config,
            params,
            positions,
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.n_params()
    }

    fn check_segment(&self, segment: &TokenSegment) -> Result<usize> {
        if segment.tuples.len() != self.config.max_seq_len || segment.pad_mask.len() != segment.tuples.len() {
            return Err(Error::LengthMismatch(format!(
                "segment must hold {} positions, got {} tuples and {} mask entries",
                self.config.max_seq_len,
                segment.tuples.len(),
                segment.pad_mask.len()
            )));
        }
        let n = segment.n_notes();
        if segment.pad_mask[..n].iter().any(|&p| p) {
            return Err(Error::Config("non-pad positions must form a prefix".into()));
        }
        if segment.performer_id >= self.config.n_performers {
            return Err(Error::PerformerOutOfRange {
                id: segment.performer_id,
                count: self.config.n_performers,
            });
        }
        for (position, t) in segment.tuples[..n].iter().enumerate() {
            for f in Feature::ALL {
                let vocab = self.config.vocab.size(f);
                if t.get(f) as usize >= vocab {
                    return Err(Error::TokenOutOfRange {
                        feature: f.name(),
                        position,
                        token: t.get(f),
                        vocab,
                    });
                }
            }
        }
        Ok(n)
    }

    /// Inference forward pass (no dropout).
    pub fn forward(&self, segment: &TokenSegment) -> Result<OutputDistributions> {
        Ok(self.forward_cached(segment, None)?.0)
    }

    /// Forward pass that also returns the activations needed by
    /// [`M2MModel::accumulate_gradients`]. Dropout is applied when an RNG is given.
    pub fn forward_cached(
        &self,
        segment: &TokenSegment,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(OutputDistributions, ForwardCache)> {
        let n = self.check_segment(segment)?;
        let cfg = &self.config;
        let p = &self.params;
        let de = cfg.d_embed;
        let drop = cfg.dropout;

        let tokens: Vec<[u32; 6]> = segment.tuples[..n].iter().map(|t| t.as_array()).collect();
        let mut x_cat = Array2::zeros((n, 6 * de));
        for (i, toks) in tokens.iter().enumerate() {
            for (f, &tok) in toks.iter().enumerate() {
                x_cat
                    .slice_mut(s![i, f * de..(f + 1) * de])
                    .assign(&p.embeddings[f].row(tok as usize));
            }
        }
        let mut x = p.input_proj.forward(&x_cat.view()) + &self.positions.slice(s![..n, ..]);
        let mut mask_for = |shape: (usize, usize)| -> Option<Array2<f64>> {
            match dropout_rng.as_deref_mut() {
                Some(rng) if drop > 0.0 => Some(dropout_mask(rng, shape, drop)),
                _ => None,
            }
        };
        let embed_dropout = mask_for(x.dim());
        if let Some(m) = &embed_dropout {
            x *= m;
        }

        let mut layer_caches = Vec::with_capacity(cfg.n_layers);
        for layer in &p.layers {
            let (mut a, attention) = layer.attention.forward(&x, cfg.n_heads);
            let attn_dropout = mask_for(a.dim());
            if let Some(m) = &attn_dropout {
                a *= m;
            }
            let (h1, ln1) = layer.ln1.forward(&(&x + &a));
            let ff_pre = layer.ff1.forward(&h1.view());
            let ff_act = ff_pre.mapv(gelu);
            let mut f = layer.ff2.forward(&ff_act.view());
            let ff_dropout = mask_for(f.dim());
            if let Some(m) = &ff_dropout {
                f *= m;
            }
            let (out, ln2) = layer.ln2.forward(&(&h1 + &f));
            layer_caches.push(LayerCache {
                input: std::mem::replace(&mut x, out),
                attention,
                attn_dropout,
                ln1,
                h1,
                ff_pre,
                ff_act,
                ff_dropout,
                ln2,
            });
        }
        let hidden = x + &p.performer.row(segment.performer_id);

        let total = cfg.max_seq_len;
        let mut heads = p.heads.iter().map(|h| {
            let mut full = Array2::zeros((total, h.w.ncols()));
            full.slice_mut(s![..n, ..]).assign(&h.forward(&hidden.view()));
            full
        });
        let dist = OutputDistributions {
            velocity: heads.next().expect("velocity head"),
            ioi: heads.next().expect("ioi head"),
            duration: heads.next().expect("duration head"),
            n_valid: n,
        };
        let cache = ForwardCache {
            tokens,
            performer_id: segment.performer_id,
            x_cat,
            embed_dropout,
            layers: layer_caches,
            hidden,
        };
        Ok((dist, cache))
    }

    /// Backpropagates one gradient of the final hidden state through the
    /// encoder and input embedding, accumulating into `grad`.
    fn backward_encoder(&self, cache: &ForwardCache, d_hidden: &Array2<f64>, grad: &mut Params) {
        let p = &self.params;
        let de = self.config.d_embed;
        {
            let mut row = grad.performer.row_mut(cache.performer_id);
            row += &d_hidden.sum_axis(Axis(0));
        }
        let mut d = d_hidden.clone();
        for (li, (layer, lc)) in p.layers.iter().zip(&cache.layers).enumerate().rev() {
            let g = &mut grad.layers[li];
            let d_r2 = layer.ln2.backward(&lc.ln2, &d, &mut g.ln2);
            let mut d_f = d_r2.clone();
            if let Some(m) = &lc.ff_dropout {
                d_f *= m;
            }
            let d_act = layer.ff2.backward(&lc.ff_act.view(), &d_f, &mut g.ff2);
            let d_pre = d_act * &lc.ff_pre.mapv(gelu_grad);
            let d_h1 = d_r2 + &layer.ff1.backward(&lc.h1.view(), &d_pre, &mut g.ff1);
            let d_r1 = layer.ln1.backward(&lc.ln1, &d_h1, &mut g.ln1);
            let mut d_a = d_r1.clone();
            if let Some(m) = &lc.attn_dropout {
                d_a *= m;
            }
            d = d_r1 + &layer
                .attention
                .backward(&lc.input, &lc.attention, &d_a, &mut g.attention);
        }
        if let Some(m) = &cache.embed_dropout {
            d *= m;
        }
        let d_cat = p.input_proj.backward(&cache.x_cat.view(), &d, &mut grad.input_proj);
        for (i, toks) in cache.tokens.iter().enumerate() {
            for (f, &tok) in toks.iter().enumerate() {
                let mut row = grad.embeddings[f].row_mut(tok as usize);
                row += &d_cat.slice(s![i, f * de..(f + 1) * de]);
            }
        }
    }

    /// Accumulates the gradient of each task's loss separately.
    ///
    /// `d_logits[k]` is the gradient of task `k`'s loss with respect to the
    /// first `n_valid` rows of its logits. `grads[k]` receives the full
    /// parameter gradient of that loss.
    pub fn accumulate_gradients(
        &self,
        cache: &ForwardCache,
        d_logits: [&Array2<f64>; 3],
        grads: &mut [Params; 3],
    ) {
        let hv = cache.hidden.view();
        for (k, dl) in d_logits.into_iter().enumerate() {
            let d_hidden = self.params.heads[k].backward(&hv, dl, &mut grads[k].heads[k]);
            self.backward_encoder(cache, &d_hidden, &mut grads[k]);
        }
    }
}
