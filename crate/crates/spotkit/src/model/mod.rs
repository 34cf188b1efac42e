//! Desk-scale encoder + token-router shared decoder.
//!
//! The encoder is a linear patch embedding over the one-hot feature grid
//! with learned positional encodings. The decoder stacks pre-normalization
//! transformer layers whose feed-forward experts are selected per position
//! by a pre-determined router plan (structured / detection / recognition),
//! never learned. Training minimizes a weighted negative log-likelihood
//! with structural tags up-weighted and prompt tokens excluded. Everything
//! runs in f64 with hand-written backward passes verified against central
//! finite differences.

pub mod checkpoint;
pub mod gradcheck;
pub mod infer;
pub mod linalg;
pub(crate) mod net;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::PromptRng;
use crate::vocab::TokenCategory;
use linalg::Mat;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use infer::{infer_spot, InferOutput, InferResult, SpotPrompts};
pub use net::{encode_features, forward, weighted_nll, EncodedFeatures};
pub use train::{
    build_train_example, train, OptimizerSettings, TraceRow, TrainError, TrainExample,
    TrainOutcome, TrainSequence, TrainSettings,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("router plan length {plan} does not match prefix length {prefix}")]
    PlanMismatch { plan: usize, prefix: usize },
    #[error("prefix length {len} exceeds max decoding length {max}")]
    PrefixTooLong { len: usize, max: usize },
    #[error("feature grid is {got_g}x{got_g}x{got_c} but the model expects {want_g}x{want_g}x{want_c}")]
    GridShape {
        got_g: usize,
        got_c: usize,
        want_g: usize,
        want_c: usize,
    },
    #[error("token id {0} outside the model vocabulary ({1})")]
    TokenOutOfRange(u32, usize),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("empty prefix")]
    EmptyPrefix,
}

/// Which positional-encoding table a sequence uses. Stage-1 and stage-2
/// have different maximum lengths and separately initialized tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeRole {
    Stage1,
    Stage2,
}

/// Model dimensions and decoding limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_factor: usize,
    pub max_len_stage1: usize,
    pub max_len_stage2: usize,
    pub vocab_size: usize,
    /// Feature grid side length.
    pub grid_g: usize,
    /// Feature grid channel count.
    pub grid_c: usize,
    /// Patch side length for the linear patch embedding.
    pub patch: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            mlp_factor: 4,
            max_len_stage1: 128,
            max_len_stage2: 64,
            vocab_size: 1099,
            grid_g: 32,
            grid_c: 17,
            patch: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(ModelError::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.patch == 0 || self.grid_g % self.patch != 0 {
            return Err(ModelError::Config(format!(
                "patch {} must divide grid_g {}",
                self.patch, self.grid_g
            )));
        }
        if self.n_layers == 0 || self.vocab_size == 0 || self.grid_c == 0 {
            return Err(ModelError::Config("zero-sized dimension".into()));
        }
        if self.max_len_stage1 < 2 || self.max_len_stage2 < 2 {
            return Err(ModelError::Config("max decoding lengths must be >= 2".into()));
        }
        Ok(())
    }

    pub fn mlp_hidden(&self) -> usize {
        self.mlp_factor * self.d_model
    }

    pub fn patches_per_side(&self) -> usize {
        self.grid_g / self.patch
    }

    pub fn n_patches(&self) -> usize {
        self.patches_per_side() * self.patches_per_side()
    }

    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * self.grid_c
    }

    pub fn max_len(&self, role: DecodeRole) -> usize {
        match role {
            DecodeRole::Stage1 => self.max_len_stage1,
            DecodeRole::Stage2 => self.max_len_stage2,
        }
    }
}

/// Per-position token categories for one sequence; pre-determined from the
/// task, aligned to the decoder's input prefix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouterPlan(pub Vec<TokenCategory>);

impl RouterPlan {
    /// Stage-1 sequences route every position through the structured expert.
    pub fn stage1(len: usize) -> Self {
        Self(vec![TokenCategory::Structured; len])
    }

    /// Stage-2 sequences route the point prompt and polygon positions
    /// through the detection expert and the content tail through the
    /// recognition expert.
    pub fn stage2(len: usize, poly_tokens: usize) -> Self {
        Self(
            (0..len)
                .map(|i| {
                    if i < 2 + poly_tokens {
                        TokenCategory::Detection
                    } else {
                        TokenCategory::Recognition
                    }
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub(crate) fn cat_index(cat: TokenCategory) -> usize {
    match cat {
        TokenCategory::Structured => 0,
        TokenCategory::Detection => 1,
        TokenCategory::Recognition => 2,
    }
}

/// Loss weighting: structural/entity tags are up-weighted, prompt tokens
/// contribute zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub structural: f64,
    pub other: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            structural: 4.0,
            other: 1.0,
        }
    }
}

/// One attention block's projections.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams {
    pub wq: Mat,
    pub bq: Mat,
    pub wk: Mat,
    pub bk: Mat,
    pub wv: Mat,
    pub bv: Mat,
    pub wo: Mat,
    pub bo: Mat,
}

/// One category expert: a two-layer MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

/// One decoder layer: self-attention, cross-attention, and the three
/// category experts, each behind its own pre-attention layer norm.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Mat,
    pub ln1_b: Mat,
    pub self_attn: AttnParams,
    pub ln2_g: Mat,
    pub ln2_b: Mat,
    pub cross_attn: AttnParams,
    pub ln3_g: Mat,
    pub ln3_b: Mat,
    pub ffn: [FfnParams; 3],
}

/// All learnable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub config: ModelConfig,
    /// Linear patch embedding.
    pub enc_w: Mat,
    pub enc_b: Mat,
    /// Learned 2-D positional encodings for the patch grid.
    pub enc_pos: Mat,
    pub tok_embed: Mat,
    /// Separate positional tables per decoding role.
    pub pos_stage1: Mat,
    pub pos_stage2: Mat,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Mat,
    pub lnf_b: Mat,
    pub w_out: Mat,
    pub b_out: Mat,
}

fn uniform_mat(rng: &mut PromptRng, rows: usize, cols: usize, limit: f64) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for v in &mut m.data {
        *v = (rng.uniform() * 2.0 - 1.0) * limit;
    }
    m
}

fn xavier(rng: &mut PromptRng, rows: usize, cols: usize) -> Mat {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    uniform_mat(rng, rows, cols, limit)
}

fn ones(cols: usize) -> Mat {
    let mut m = Mat::zeros(1, cols);
    m.data.fill(1.0);
    m
}

impl ParamSet {
    /// Seed-controlled initialization: scaled-uniform projections, zero
    /// biases, unit layer-norm gains, small uniform embeddings.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = PromptRng::new(seed).derive(0x6d6f64656c); // "model" stream
        let d = config.d_model;
        let f = config.mlp_hidden();
        let attn = |rng: &mut PromptRng| AttnParams {
            wq: xavier(rng, d, d),
            bq: Mat::zeros(1, d),
            wk: xavier(rng, d, d),
            bk: Mat::zeros(1, d),
            wv: xavier(rng, d, d),
            bv: Mat::zeros(1, d),
            wo: xavier(rng, d, d),
            bo: Mat::zeros(1, d),
        };
        let ffn = |rng: &mut PromptRng| FfnParams {
            w1: xavier(rng, d, f),
            b1: Mat::zeros(1, f),
            w2: xavier(rng, f, d),
            b2: Mat::zeros(1, d),
        };
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_g: ones(d),
                ln1_b: Mat::zeros(1, d),
                self_attn: attn(&mut rng),
                ln2_g: ones(d),
                ln2_b: Mat::zeros(1, d),
                cross_attn: attn(&mut rng),
                ln3_g: ones(d),
                ln3_b: Mat::zeros(1, d),
                ffn: [ffn(&mut rng), ffn(&mut rng), ffn(&mut rng)],
            })
            .collect();
        Ok(Self {
            enc_w: xavier(&mut rng, config.patch_dim(), d),
            enc_b: Mat::zeros(1, d),
            enc_pos: uniform_mat(&mut rng, config.n_patches(), d, 0.02),
            tok_embed: uniform_mat(&mut rng, config.vocab_size, d, 0.02),
            pos_stage1: uniform_mat(&mut rng, config.max_len_stage1, d, 0.02),
            pos_stage2: uniform_mat(&mut rng, config.max_len_stage2, d, 0.02),
            layers,
            lnf_g: ones(d),
            lnf_b: Mat::zeros(1, d),
            w_out: xavier(&mut rng, d, config.vocab_size),
            b_out: Mat::zeros(1, config.vocab_size),
            config: config.clone(),
        })
    }

    /// Same shapes, all zeros: the gradient / optimizer-state buffer.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.for_each_tensor_mut(|_, m| m.data.fill(0.0));
        out
    }

    /// Stable dotted names, in the canonical tensor order shared by
    /// [`ParamSet::tensors`] and [`ParamSet::tensors_mut`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec![
            "enc_w".to_string(),
            "enc_b".to_string(),
            "enc_pos".to_string(),
            "tok_embed".to_string(),
            "pos_stage1".to_string(),
            "pos_stage2".to_string(),
        ];
        for i in 0..self.layers.len() {
            names.push(format!("layers.{i}.ln1_g"));
            names.push(format!("layers.{i}.ln1_b"));
            for w in ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"] {
                names.push(format!("layers.{i}.self_attn.{w}"));
            }
            names.push(format!("layers.{i}.ln2_g"));
            names.push(format!("layers.{i}.ln2_b"));
            for w in ["wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"] {
                names.push(format!("layers.{i}.cross_attn.{w}"));
            }
            names.push(format!("layers.{i}.ln3_g"));
            names.push(format!("layers.{i}.ln3_b"));
            for c in 0..3 {
                for w in ["w1", "b1", "w2", "b2"] {
                    names.push(format!("layers.{i}.ffn.{c}.{w}"));
                }
            }
        }
        names.extend(["lnf_g", "lnf_b", "w_out", "b_out"].map(String::from));
        names
    }

    /// All tensors in canonical order.
    pub fn tensors(&self) -> Vec<&Mat> {
        let mut v: Vec<&Mat> = vec![
            &self.enc_w,
            &self.enc_b,
            &self.enc_pos,
            &self.tok_embed,
            &self.pos_stage1,
            &self.pos_stage2,
        ];
        for layer in &self.layers {
            v.push(&layer.ln1_g);
            v.push(&layer.ln1_b);
            let a = &layer.self_attn;
            v.extend([&a.wq, &a.bq, &a.wk, &a.bk, &a.wv, &a.bv, &a.wo, &a.bo]);
            v.push(&layer.ln2_g);
            v.push(&layer.ln2_b);
            let a = &layer.cross_attn;
            v.extend([&a.wq, &a.bq, &a.wk, &a.bk, &a.wv, &a.bv, &a.wo, &a.bo]);
            v.push(&layer.ln3_g);
            v.push(&layer.ln3_b);
            for ffn in &layer.ffn {
                v.extend([&ffn.w1, &ffn.b1, &ffn.w2, &ffn.b2]);
            }
        }
        v.extend([&self.lnf_g, &self.lnf_b, &self.w_out, &self.b_out]);
        v
    }

    /// All tensors mutably, same order as [`ParamSet::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v: Vec<&mut Mat> = vec![
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.enc_pos,
            &mut self.tok_embed,
            &mut self.pos_stage1,
            &mut self.pos_stage2,
        ];
        for layer in &mut self.layers {
            v.push(&mut layer.ln1_g);
            v.push(&mut layer.ln1_b);
            let a = &mut layer.self_attn;
            v.extend([
                &mut a.wq, &mut a.bq, &mut a.wk, &mut a.bk, &mut a.wv, &mut a.bv, &mut a.wo,
                &mut a.bo,
            ]);
            v.push(&mut layer.ln2_g);
            v.push(&mut layer.ln2_b);
            let a = &mut layer.cross_attn;
            v.extend([
                &mut a.wq, &mut a.bq, &mut a.wk, &mut a.bk, &mut a.wv, &mut a.bv, &mut a.wo,
                &mut a.bo,
            ]);
            v.push(&mut layer.ln3_g);
            v.push(&mut layer.ln3_b);
            for ffn in &mut layer.ffn {
                v.extend([&mut ffn.w1, &mut ffn.b1, &mut ffn.w2, &mut ffn.b2]);
            }
        }
        v.extend([
            &mut self.lnf_g,
            &mut self.lnf_b,
            &mut self.w_out,
            &mut self.b_out,
        ]);
        v
    }

    /// Visit every tensor with its stable name.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&str, &Mat)) {
        for (name, m) in self.tensor_names().iter().zip(self.tensors()) {
            f(name, m);
        }
    }

    /// Visit every tensor mutably with its stable name.
    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut Mat)) {
        let names = self.tensor_names();
        for (name, m) in names.iter().zip(self.tensors_mut()) {
            f(name, m);
        }
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|_, m| n += m.data.len());
        n
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_tensor(|_, m| ok &= m.is_finite());
        ok
    }
}
