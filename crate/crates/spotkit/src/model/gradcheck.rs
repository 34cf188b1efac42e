//! Analytic-vs-numeric gradient verification.
//!
//! Central finite differences over every scalar parameter, compared against
//! the hand-written backward pass. Intended for tiny configs (d_model <= 16)
//! where the full sweep runs in seconds.

use super::train::{example_loss, example_loss_and_grad, TrainExample};
use super::{ModelError, ParamSet};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Finite-difference step, scaled by `max(1, |theta|)` per parameter.
    pub step: f64,
    /// Scale this tensor's analytic gradient by 2 before comparing: the
    /// negative control that a broken gradient is actually detected.
    pub corrupt_tensor: Option<String>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            corrupt_tensor: None,
        }
    }
}

/// Worst-case relative error over all parameters.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub params_checked: usize,
}

/// Compare analytic gradients against central finite differences
/// (`(L(p+h) - L(p-h)) / 2h`, `h = step * max(1, |p|)`) for every parameter.
pub fn grad_check(
    params: &ParamSet,
    example: &TrainExample,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport, ModelError> {
    let mut grads = params.zeros_like();
    example_loss_and_grad(params, example, &mut grads)?;
    if let Some(name) = &opts.corrupt_tensor {
        let names = grads.tensor_names();
        let found = names.iter().any(|n| n == name);
        assert!(found, "corrupt_tensor {name:?} does not name a tensor");
        grads.for_each_tensor_mut(|n, m| {
            if n == name {
                m.scale(2.0);
            }
        });
    }

    let names = params.tensor_names();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|m| m.data.clone()).collect();
    let mut probe = params.clone();
    let mut max_rel = 0.0f64;
    let mut worst_tensor = String::new();
    let mut worst_index = 0;
    let mut checked = 0usize;

    let n_tensors = names.len();
    for ti in 0..n_tensors {
        let len = analytic[ti].len();
        for ei in 0..len {
            let orig = probe.tensors()[ti].data[ei];
            let h = opts.step * orig.abs().max(1.0);
            probe.tensors_mut()[ti].data[ei] = orig + h;
            let lp = example_loss(&probe, example)?;
            probe.tensors_mut()[ti].data[ei] = orig - h;
            let lm = example_loss(&probe, example)?;
            probe.tensors_mut()[ti].data[ei] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let ga = analytic[ti][ei];
            // central differences carry ~eps * |L| / 2h of cancellation
            // noise; differences inside that band are indistinguishable
            // from an exact match (flat directions like key biases, and
            // elements whose gradient is orders below the tensor norm)
            let fd_noise = 32.0 * f64::EPSILON * lp.abs().max(lm.abs()) / (2.0 * h);
            let diff = (ga - numeric).abs();
            let rel = if diff <= fd_noise {
                0.0
            } else {
                diff / ga.abs().max(numeric.abs())
            };
            checked += 1;
            if rel > max_rel {
                max_rel = rel;
                worst_tensor = names[ti].clone();
                worst_index = ei;
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        worst_tensor,
        worst_index,
        params_checked: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Task;
    use crate::corpus::{build_vocab, gen_record, CorpusConfig, SceneConfig, TableConfig};
    use crate::geometry::ImageExtent;
    use crate::model::{build_train_example, LossWeights, ModelConfig};
    use crate::prompting::{PrefixWindow, PromptRng, SpatialWindow};

    fn tiny_example() -> (crate::model::TrainExample, ModelConfig) {
        let cfg = CorpusConfig {
            task: Task::Spotting,
            scene: SceneConfig {
                extent: ImageExtent { width: 64, height: 64 },
                n_bins: 16,
                words: (2, 2),
                word_len: (1, 2),
                charset: ('a'..='c').collect(),
                char_width_px: 12,
                char_height_px: 12,
                placement_grid_px: 4,
                margin_px: 2,
                max_retries: 100,
                line_band_bins: 4,
                ..SceneConfig::default()
            },
            table: TableConfig::default(),
        };
        let vocab = build_vocab(&cfg).unwrap();
        let record = gen_record(&PromptRng::new(2), 0, &cfg, &vocab).unwrap();
        let mcfg = ModelConfig {
            d_model: 12,
            n_layers: 1,
            n_heads: 2,
            mlp_factor: 2,
            max_len_stage1: 24,
            max_len_stage2: 16,
            vocab_size: vocab.size() as usize,
            grid_g: 8,
            grid_c: cfg.scene.charset.len() + 1,
            patch: 4,
        };
        let example = build_train_example(
            &record,
            &vocab,
            SpatialWindow::full(16),
            PrefixWindow::new('a', 'c').unwrap(),
            &LossWeights::default(),
            mcfg.grid_g,
        )
        .unwrap();
        (example, mcfg)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (example, mcfg) = tiny_example();
        let params = ParamSet::init(&mcfg, 17).unwrap();
        let report = grad_check(&params, &example, &GradCheckOptions::default()).unwrap();
        assert!(
            report.max_rel_error < 1e-4,
            "max rel error {} at {}[{}], {} params",
            report.max_rel_error,
            report.worst_tensor,
            report.worst_index,
            report.params_checked
        );
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let (example, mcfg) = tiny_example();
        let params = ParamSet::init(&mcfg, 17).unwrap();
        let opts = GradCheckOptions {
            corrupt_tensor: Some("layers.0.ffn.0.w2".to_string()),
            ..Default::default()
        };
        let report = grad_check(&params, &example, &opts).unwrap();
        assert!(
            report.max_rel_error > 1e-2,
            "corruption went undetected: {}",
            report.max_rel_error
        );
    }
}
