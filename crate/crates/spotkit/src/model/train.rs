//! Teacher-forced training of the token-router decoder with a decoupled
//! weight-decay adaptive optimizer (linear warmup, cosine decay).
//!
//! One optimizer step consumes one document: the feature grid is encoded
//! once and every stage-1/stage-2 sequence of the document is pushed through
//! the shared decoder, gradients summed (including the encoder gradient
//! through cross-attention) and normalized by the total token weight.
//! Training is single-threaded and bit-deterministic per seed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{encode_stage1, Task};
use crate::corpus::{rasterize, CorpusRecord, FeatureGrid};
use crate::prompting::{
    filter_by_prefix_window, filter_by_spatial_window, sample_prefix_window,
    sample_spatial_window, stage1_prompt_ids, PrefixWindow, PromptRng, SpatialWindow,
};
use crate::vocab::{Special, TokenId, TokenVocabulary};

use super::linalg::Mat;
use super::net::{backward_tape, encode_features, forward_tape, weighted_nll};
use super::{DecodeRole, LossWeights, ModelConfig, ModelError, ParamSet, RouterPlan};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training diverged at step {step} (non-finite loss); last finite checkpoint attached")]
    Diverged { step: usize, last_good: Box<ParamSet> },
    #[error("empty training set")]
    EmptyCorpus,
    #[error("record {record}: {message}")]
    BadRecord { record: u64, message: String },
}

/// One teacher-forced sequence: full token ids (prompt included), the router
/// plan over the input positions, and per-target weights with prompt
/// positions zeroed.
#[derive(Debug, Clone)]
pub struct TrainSequence {
    pub ids: Vec<TokenId>,
    pub plan: RouterPlan,
    pub role: DecodeRole,
    pub weights: Vec<f64>,
}

impl TrainSequence {
    /// Build from a raw sequence: `k` prompt tokens are excluded from the
    /// loss and structural tags are up-weighted.
    pub fn new(
        ids: Vec<TokenId>,
        plan_for_inputs: RouterPlan,
        role: DecodeRole,
        k: usize,
        vocab: &TokenVocabulary,
        weights: &LossWeights,
    ) -> Self {
        let n_inputs = ids.len().saturating_sub(1);
        let mut w = Vec::with_capacity(n_inputs);
        for i in 0..n_inputs {
            let target = ids[i + 1];
            w.push(if i + 1 < k {
                0.0
            } else if vocab.is_tag(target) {
                weights.structural
            } else {
                weights.other
            });
        }
        Self {
            ids,
            plan: plan_for_inputs,
            role,
            weights: w,
        }
    }
}

/// One training document: the rasterized features plus all sequences.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub grid: FeatureGrid,
    pub sequences: Vec<TrainSequence>,
}

/// Assemble the teacher-forcing example for one corpus record with the
/// given prompt windows attached to its stage-1 target.
pub fn build_train_example(
    record: &CorpusRecord,
    vocab: &TokenVocabulary,
    spatial: SpatialWindow,
    prefix: PrefixWindow,
    weights: &LossWeights,
    grid_g: usize,
) -> Result<TrainExample, TrainError> {
    let charset: Vec<char> = record.charset.chars().collect();
    let grid = rasterize(&record.scene(), grid_g, &charset);

    let seq_start = vocab.special_id(Special::SeqStart);
    if record.stage1_ids.first() != Some(&seq_start) {
        return Err(TrainError::BadRecord {
            record: record.id,
            message: "stage-1 ids do not start with <S>".into(),
        });
    }
    let mut stage1 = stage1_prompt_ids(spatial, prefix, vocab);
    let k = stage1.len();
    stage1.extend_from_slice(&record.stage1_ids[1..]);
    let n_inputs = stage1.len() - 1;
    let mut sequences = vec![TrainSequence::new(
        stage1,
        RouterPlan::stage1(n_inputs),
        DecodeRole::Stage1,
        k,
        vocab,
        weights,
    )];

    for (i, ids) in record.stage2_ids.iter().enumerate() {
        let poly_tokens = match record.task {
            Task::Table => 0,
            _ => record
                .instances
                .get(i)
                .map(|inst| inst.geometry.kind().vertex_count() * 2)
                .unwrap_or(0),
        };
        let n_inputs = ids.len().saturating_sub(1);
        sequences.push(TrainSequence::new(
            ids.clone(),
            RouterPlan::stage2(n_inputs, poly_tokens),
            DecodeRole::Stage2,
            2,
            vocab,
            weights,
        ));
    }
    Ok(TrainExample { grid, sequences })
}

/// The prompted stage-1 sequence for one window pair: instances are run
/// through the spatial and prefix filters and the surviving subset is
/// re-encoded, so the same scene yields different targets under different
/// windows.
pub fn windowed_stage1_sequence(
    record: &CorpusRecord,
    vocab: &TokenVocabulary,
    spatial: SpatialWindow,
    prefix: PrefixWindow,
    weights: &LossWeights,
) -> Result<TrainSequence, TrainError> {
    let kept = filter_by_spatial_window(&record.instances, spatial);
    let kept = filter_by_prefix_window(&kept, prefix).kept;
    let encoded = encode_stage1(&kept, record.task, vocab).map_err(|e| TrainError::BadRecord {
        record: record.id,
        message: e.to_string(),
    })?;
    let mut ids = stage1_prompt_ids(spatial, prefix, vocab);
    let k = ids.len();
    ids.extend_from_slice(&encoded.tokens[1..]);
    let n_inputs = ids.len() - 1;
    Ok(TrainSequence::new(
        ids,
        RouterPlan::stage1(n_inputs),
        DecodeRole::Stage1,
        k,
        vocab,
        weights,
    ))
}

/// Window-prompt sampling policy used when training with augmentation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowSampling {
    /// Probability a step draws prompting windows instead of using the
    /// fixed full-range pair.
    pub probability: f64,
    /// Probability the drawn step also samples a prefix window (otherwise
    /// the full-range prefix is kept).
    pub prefix_probability: f64,
}

impl Default for WindowSampling {
    fn default() -> Self {
        Self {
            probability: 0.5,
            prefix_probability: 0.5,
        }
    }
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    /// Global-norm gradient clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            lr: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            warmup_steps: 100,
            grad_clip: Some(1.0),
        }
    }
}

/// Training-run settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSettings {
    pub seed: u64,
    /// Total optimizer steps (one document each, cycling shuffled epochs).
    pub steps: usize,
    pub optimizer: OptimizerSettings,
    /// Emit a trace row every this many steps (and on the final step).
    pub trace_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 1000,
            optimizer: OptimizerSettings::default(),
            trace_every: 25,
        }
    }
}

/// One metrics-trace row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub token_accuracy: f64,
}

/// Trained parameters plus the loss/accuracy trace.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ParamSet,
    pub trace: Vec<TraceRow>,
}

/// Write a trace as the `step,loss,token_accuracy` CSV.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("step,loss,token_accuracy\n");
    for row in trace {
        out.push_str(&format!("{},{},{}\n", row.step, row.loss, row.token_accuracy));
    }
    out
}

/// Loss, gradient, and accuracy counts for one example (gradients summed,
/// not normalized).
pub(crate) fn example_loss_and_grad(
    params: &ParamSet,
    example: &TrainExample,
    grads: &mut ParamSet,
) -> Result<(f64, f64, usize, usize), ModelError> {
    let features = encode_features(params, &example.grid)?;
    let mut d_mem = Mat::zeros(features.mem.rows, features.mem.cols);
    let mut loss_sum = 0.0;
    let mut weight_sum = 0.0;
    let mut correct = 0;
    let mut counted = 0;
    for seq in &example.sequences {
        if seq.ids.len() < 2 {
            continue;
        }
        let inputs = &seq.ids[..seq.ids.len() - 1];
        let targets = &seq.ids[1..];
        let tape = forward_tape(params, &features, inputs, &seq.plan, seq.role)?;
        let (loss, d_logits, (c, n)) = weighted_nll(&tape.logits, targets, &seq.weights);
        loss_sum += loss;
        weight_sum += seq.weights.iter().sum::<f64>();
        correct += c;
        counted += n;
        backward_tape(
            params, &features, inputs, &seq.plan, seq.role, &tape, &d_logits, grads, &mut d_mem,
        );
    }
    super::net::encoder_backward(&features, &d_mem, grads);
    Ok((loss_sum, weight_sum, correct, counted))
}

/// Compute only the loss of one example (used by the gradient checker).
pub(crate) fn example_loss(params: &ParamSet, example: &TrainExample) -> Result<f64, ModelError> {
    let features = encode_features(params, &example.grid)?;
    let mut loss_sum = 0.0;
    for seq in &example.sequences {
        if seq.ids.len() < 2 {
            continue;
        }
        let inputs = &seq.ids[..seq.ids.len() - 1];
        let targets = &seq.ids[1..];
        let tape = forward_tape(params, &features, inputs, &seq.plan, seq.role)?;
        let (loss, _, _) = weighted_nll(&tape.logits, targets, &seq.weights);
        loss_sum += loss;
    }
    Ok(loss_sum)
}

fn lr_at(step: usize, total: usize, opt: &OptimizerSettings) -> f64 {
    let t = step + 1;
    if t <= opt.warmup_steps {
        return opt.lr * t as f64 / opt.warmup_steps.max(1) as f64;
    }
    let span = total.saturating_sub(opt.warmup_steps).max(1) as f64;
    let progress = (t - opt.warmup_steps) as f64 / span;
    opt.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress.min(1.0)).cos())
}

struct AdamW {
    m: ParamSet,
    v: ParamSet,
    t: usize,
}

impl AdamW {
    fn new(params: &ParamSet) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64, opt: &OptimizerSettings) {
        self.t += 1;
        let bc1 = 1.0 - opt.beta1.powi(self.t as i32);
        let bc2 = 1.0 - opt.beta2.powi(self.t as i32);
        let g_tensors = grads.tensors();
        let m_tensors = self.m.tensors_mut();
        for (m, g) in m_tensors.into_iter().zip(&g_tensors) {
            for (mv, &gv) in m.data.iter_mut().zip(&g.data) {
                *mv = opt.beta1 * *mv + (1.0 - opt.beta1) * gv;
            }
        }
        let v_tensors = self.v.tensors_mut();
        for (v, g) in v_tensors.into_iter().zip(&g_tensors) {
            for (vv, &gv) in v.data.iter_mut().zip(&g.data) {
                *vv = opt.beta2 * *vv + (1.0 - opt.beta2) * gv * gv;
            }
        }
        let p_tensors = params.tensors_mut();
        let m_tensors = self.m.tensors();
        let v_tensors = self.v.tensors();
        for ((p, m), v) in p_tensors.into_iter().zip(m_tensors).zip(v_tensors) {
            for i in 0..p.data.len() {
                let mhat = m.data[i] / bc1;
                let vhat = v.data[i] / bc2;
                p.data[i] -=
                    lr * (mhat / (vhat.sqrt() + opt.eps) + opt.weight_decay * p.data[i]);
            }
        }
    }
}

fn clip_gradients(grads: &mut ParamSet, max_norm: f64) {
    let mut sq = 0.0;
    grads.for_each_tensor(|_, m| {
        for &v in &m.data {
            sq += v * v;
        }
    });
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grads.for_each_tensor_mut(|_, m| m.scale(scale));
    }
}

/// Train from scratch over the examples. Deterministic per seed: the
/// parameter init, the per-epoch shuffle, and every update are pure f64
/// arithmetic in a fixed order. A non-finite loss aborts with the last
/// finite parameters attached.
pub fn train(
    examples: &[TrainExample],
    config: &ModelConfig,
    settings: &TrainSettings,
) -> Result<TrainOutcome, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut params = ParamSet::init(config, settings.seed)?;
    let mut optimizer = AdamW::new(&params);
    let mut rng = PromptRng::new(settings.seed).derive(0x736875666668); // shuffle stream
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len(); // force a shuffle on the first step
    let mut trace = Vec::new();
    let mut last_good = params.clone();

    for step in 0..settings.steps {
        if cursor >= order.len() {
            // Fisher-Yates reshuffle per epoch
            for i in (1..order.len()).rev() {
                let j = rng.range_usize(0, i);
                order.swap(i, j);
            }
            cursor = 0;
        }
        let example = &examples[order[cursor]];
        cursor += 1;

        let mut grads = params.zeros_like();
        let (loss_sum, weight_sum, correct, counted) =
            example_loss_and_grad(&params, example, &mut grads)?;
        let mean_loss = if weight_sum > 0.0 { loss_sum / weight_sum } else { 0.0 };
        if !mean_loss.is_finite() {
            return Err(TrainError::Diverged {
                step,
                last_good: Box::new(last_good),
            });
        }
        if weight_sum > 0.0 {
            let inv = 1.0 / weight_sum;
            grads.for_each_tensor_mut(|_, m| m.scale(inv));
        }
        if let Some(max_norm) = settings.optimizer.grad_clip {
            clip_gradients(&mut grads, max_norm);
        }
        last_good = params.clone();
        let lr = lr_at(step, settings.steps, &settings.optimizer);
        optimizer.step(&mut params, &grads, lr, &settings.optimizer);

        if settings.trace_every > 0
            && (step % settings.trace_every == 0 || step + 1 == settings.steps)
        {
            trace.push(TraceRow {
                step,
                loss: mean_loss,
                token_accuracy: if counted > 0 {
                    correct as f64 / counted as f64
                } else {
                    0.0
                },
            });
        }
        if !params.all_finite() {
            return Err(TrainError::Diverged {
                step,
                last_good: Box::new(last_good),
            });
        }
    }
    Ok(TrainOutcome { params, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, gen_record, CorpusConfig, SceneConfig, TableConfig};
    use crate::geometry::ImageExtent;

    fn tiny_corpus_config() -> CorpusConfig {
        CorpusConfig {
            task: Task::Spotting,
            scene: SceneConfig {
                extent: ImageExtent { width: 128, height: 128 },
                n_bins: 32,
                words: (1, 2),
                word_len: (1, 2),
                charset: ('a'..='d').collect(),
                char_width_px: 16,
                char_height_px: 16,
                placement_grid_px: 8,
                margin_px: 2,
                max_retries: 100,
                line_band_bins: 8,
                ..SceneConfig::default()
            },
            table: TableConfig::default(),
        }
    }

    fn tiny_model_config(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_layers: 1,
            n_heads: 2,
            mlp_factor: 2,
            max_len_stage1: 24,
            max_len_stage2: 16,
            vocab_size,
            grid_g: 16,
            grid_c: 5,
            patch: 4,
        }
    }

    fn tiny_examples(n: u64) -> (Vec<TrainExample>, ModelConfig) {
        let cfg = tiny_corpus_config();
        let vocab = build_vocab(&cfg).unwrap();
        let root = PromptRng::new(1);
        let mcfg = tiny_model_config(vocab.size() as usize);
        let weights = LossWeights::default();
        let spatial = SpatialWindow::full(cfg.scene.n_bins);
        let prefix = PrefixWindow::new('a', 'd').unwrap();
        let examples = (0..n)
            .map(|id| {
                let record = gen_record(&root, id, &cfg, &vocab).unwrap();
                build_train_example(&record, &vocab, spatial, prefix, &weights, mcfg.grid_g)
                    .unwrap()
            })
            .collect();
        (examples, mcfg)
    }

    #[test]
    fn zero_lr_keeps_loss_constant() {
        let (examples, mcfg) = tiny_examples(1);
        let settings = TrainSettings {
            seed: 3,
            steps: 5,
            optimizer: OptimizerSettings {
                lr: 0.0,
                warmup_steps: 0,
                weight_decay: 0.0,
                ..Default::default()
            },
            trace_every: 1,
        };
        let outcome = train(&examples, &mcfg, &settings).unwrap();
        let losses: Vec<f64> = outcome.trace.iter().map(|r| r.loss).collect();
        for w in losses.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12, "{losses:?}");
        }
        // parameters unchanged from initialization
        let init = ParamSet::init(&mcfg, 3).unwrap();
        assert_eq!(outcome.params, init);
    }

    #[test]
    fn same_seed_same_parameters() {
        let (examples, mcfg) = tiny_examples(3);
        let settings = TrainSettings {
            seed: 11,
            steps: 12,
            optimizer: OptimizerSettings {
                warmup_steps: 2,
                ..Default::default()
            },
            trace_every: 4,
        };
        let a = train(&examples, &mcfg, &settings).unwrap();
        let b = train(&examples, &mcfg, &settings).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn loss_decreases_on_one_example() {
        let (examples, mcfg) = tiny_examples(1);
        let settings = TrainSettings {
            seed: 5,
            steps: 60,
            optimizer: OptimizerSettings {
                lr: 1e-2,
                warmup_steps: 5,
                ..Default::default()
            },
            trace_every: 1,
        };
        let outcome = train(&examples, &mcfg, &settings).unwrap();
        let first = outcome.trace.first().unwrap().loss;
        let last = outcome.trace.last().unwrap().loss;
        assert!(last < first * 0.5, "loss did not drop: {first} -> {last}");
    }

    #[test]
    fn trace_csv_format() {
        let rows = vec![TraceRow {
            step: 0,
            loss: 1.5,
            token_accuracy: 0.25,
        }];
        assert_eq!(trace_to_csv(&rows), "step,loss,token_accuracy\n0,1.5,0.25\n");
    }
}
