//! Forward and backward passes for the token-router decoder.
//!
//! Layout conventions: sequences are `L x d` matrices, one row per position.
//! The forward pass caches every intermediate needed by the hand-written
//! backward pass; `grad_check` verifies the pair against central finite
//! differences.

use crate::corpus::FeatureGrid;
use crate::vocab::TokenId;

use super::linalg::{gelu, gelu_grad, logsumexp, softmax_inplace, Mat};
use super::{cat_index, AttnParams, DecodeRole, FfnParams, ModelError, ParamSet, RouterPlan};

const LN_EPS: f64 = 1e-5;

/// Encoded feature memory: the flattened patches and their embeddings.
#[derive(Debug, Clone)]
pub struct EncodedFeatures {
    pub patches: Mat,
    pub mem: Mat,
}

/// Linear patch embedding plus learned positional encodings.
pub fn encode_features(params: &ParamSet, grid: &FeatureGrid) -> Result<EncodedFeatures, ModelError> {
    let cfg = &params.config;
    if grid.g != cfg.grid_g || grid.c != cfg.grid_c {
        return Err(ModelError::GridShape {
            got_g: grid.g,
            got_c: grid.c,
            want_g: cfg.grid_g,
            want_c: cfg.grid_c,
        });
    }
    let p = cfg.patch;
    let side = cfg.patches_per_side();
    let mut patches = Mat::zeros(cfg.n_patches(), cfg.patch_dim());
    for pr in 0..side {
        for pc in 0..side {
            let row = patches.row_mut(pr * side + pc);
            let mut idx = 0;
            for dy in 0..p {
                for dx in 0..p {
                    let gy = pr * p + dy;
                    let gx = pc * p + dx;
                    let base = (gy * grid.g + gx) * grid.c;
                    for ch in 0..grid.c {
                        row[idx] = grid.data[base + ch] as f64;
                        idx += 1;
                    }
                }
            }
        }
    }
    let mut mem = patches.matmul(&params.enc_w);
    mem.add_bias(&params.enc_b);
    mem.add_inplace(&params.enc_pos);
    Ok(EncodedFeatures { patches, mem })
}

/// Accumulate encoder gradients given the gradient w.r.t. the memory.
pub(crate) fn encoder_backward(features: &EncodedFeatures, d_mem: &Mat, grads: &mut ParamSet) {
    features.patches.matmul_tn_acc(d_mem, &mut grads.enc_w);
    d_mem.colsum_acc(&mut grads.enc_b);
    grads.enc_pos.add_inplace(d_mem);
}

struct LnTape {
    xhat: Mat,
    inv_std: Vec<f64>,
}

fn ln_fwd(x: &Mat, g: &Mat, b: &Mat) -> (Mat, LnTape) {
    let (rows, cols) = (x.rows, x.cols);
    let mut out = Mat::zeros(rows, cols);
    let mut xhat = Mat::zeros(rows, cols);
    let mut inv_std = Vec::with_capacity(rows);
    for i in 0..rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let istd = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(istd);
        let xh = xhat.row_mut(i);
        let o = &mut out.data[i * cols..(i + 1) * cols];
        for j in 0..cols {
            xh[j] = (row[j] - mean) * istd;
            o[j] = g.data[j] * xh[j] + b.data[j];
        }
    }
    (out, LnTape { xhat, inv_std })
}

/// Returns the gradient w.r.t. the layer-norm input and accumulates the
/// gain/bias gradients.
fn ln_bwd(tape: &LnTape, g: &Mat, d_out: &Mat, d_g: &mut Mat, d_b: &mut Mat) -> Mat {
    let (rows, cols) = (d_out.rows, d_out.cols);
    let mut d_x = Mat::zeros(rows, cols);
    for i in 0..rows {
        let dy = d_out.row(i);
        let xh = tape.xhat.row(i);
        let istd = tape.inv_std[i];
        let mut mean_h = 0.0;
        let mut mean_hx = 0.0;
        for j in 0..cols {
            let h = dy[j] * g.data[j];
            mean_h += h;
            mean_hx += h * xh[j];
            d_g.data[j] += dy[j] * xh[j];
            d_b.data[j] += dy[j];
        }
        mean_h /= cols as f64;
        mean_hx /= cols as f64;
        let dx = d_x.row_mut(i);
        for j in 0..cols {
            let h = dy[j] * g.data[j];
            dx[j] = (h - mean_h - xh[j] * mean_hx) * istd;
        }
    }
    d_x
}

struct AttnTape {
    q: Mat,
    k: Mat,
    v: Mat,
    /// Softmaxed attention per head, `Lq x Lk`.
    attn: Vec<Mat>,
    ctx: Mat,
}

fn mha_fwd(
    hq: &Mat,
    hkv: &Mat,
    p: &AttnParams,
    n_heads: usize,
    causal: bool,
) -> (Mat, AttnTape) {
    let d = hq.cols;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut q = hq.matmul(&p.wq);
    q.add_bias(&p.bq);
    let mut k = hkv.matmul(&p.wk);
    k.add_bias(&p.bk);
    let mut v = hkv.matmul(&p.wv);
    v.add_bias(&p.bv);

    let (lq, lk) = (hq.rows, hkv.rows);
    let mut ctx = Mat::zeros(lq, d);
    let mut attn = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let off = h * dh;
        let mut a = Mat::zeros(lq, lk);
        for i in 0..lq {
            let qi = &q.row(i)[off..off + dh];
            let limit = if causal { i + 1 } else { lk };
            let a_row = a.row_mut(i);
            for (j, a_ij) in a_row.iter_mut().enumerate().take(lk) {
                if j >= limit {
                    *a_ij = f64::NEG_INFINITY;
                    continue;
                }
                let kj = &k.row(j)[off..off + dh];
                let mut dot = 0.0;
                for t in 0..dh {
                    dot += qi[t] * kj[t];
                }
                *a_ij = dot * scale;
            }
            softmax_inplace(&mut a_row[..limit.max(1)]);
            for a_ij in a_row.iter_mut().skip(limit) {
                *a_ij = 0.0;
            }
        }
        for i in 0..lq {
            let a_row = a.row(i);
            let ctx_row = &mut ctx.data[i * d + off..i * d + off + dh];
            for (j, &w) in a_row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let vj = &v.row(j)[off..off + dh];
                for t in 0..dh {
                    ctx_row[t] += w * vj[t];
                }
            }
        }
        attn.push(a);
    }
    let mut out = ctx.matmul(&p.wo);
    out.add_bias(&p.bo);
    (out, AttnTape { q, k, v, attn, ctx })
}

/// Backward through multi-head attention. Returns `(d_hq, d_hkv)` and
/// accumulates projection gradients.
fn mha_bwd(
    tape: &AttnTape,
    hq: &Mat,
    hkv: &Mat,
    p: &AttnParams,
    g: &mut AttnParams,
    n_heads: usize,
    d_out: &Mat,
) -> (Mat, Mat) {
    let d = hq.cols;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (lq, lk) = (hq.rows, hkv.rows);

    // out = ctx @ wo + bo
    tape.ctx.matmul_tn_acc(d_out, &mut g.wo);
    d_out.colsum_acc(&mut g.bo);
    let d_ctx = d_out.matmul_nt(&p.wo);

    let mut d_q = Mat::zeros(lq, d);
    let mut d_k = Mat::zeros(lk, d);
    let mut d_v = Mat::zeros(lk, d);

    for h in 0..n_heads {
        let off = h * dh;
        let a = &tape.attn[h];
        // d_attn = d_ctx_h @ v_h^T ; d_v_h = a^T @ d_ctx_h
        let mut d_a = Mat::zeros(lq, lk);
        for i in 0..lq {
            let dctx = &d_ctx.row(i)[off..off + dh];
            let a_row = a.row(i);
            let da_row = d_a.row_mut(i);
            for j in 0..lk {
                let vj = &tape.v.row(j)[off..off + dh];
                let mut dot = 0.0;
                for t in 0..dh {
                    dot += dctx[t] * vj[t];
                }
                da_row[j] = dot;
                let w = a_row[j];
                if w != 0.0 {
                    let dv = &mut d_v.row_mut(j)[off..off + dh];
                    for t in 0..dh {
                        dv[t] += w * dctx[t];
                    }
                }
            }
        }
        // softmax backward per row: ds = a * (d_a - sum(d_a * a)); masked
        // entries have a = 0 and contribute nothing
        for i in 0..lq {
            let a_row = a.row(i);
            let da_row = d_a.row_mut(i);
            let dot: f64 = da_row.iter().zip(a_row).map(|(&da, &av)| da * av).sum();
            for j in 0..lk {
                da_row[j] = a_row[j] * (da_row[j] - dot);
            }
        }
        // scores = scale * q_h k_h^T
        for i in 0..lq {
            let ds_row = d_a.row(i);
            let qi: Vec<f64> = tape.q.row(i)[off..off + dh].to_vec();
            let dq = &mut d_q.row_mut(i)[off..off + dh];
            for (j, &ds) in ds_row.iter().enumerate() {
                if ds == 0.0 {
                    continue;
                }
                let kj = &tape.k.row(j)[off..off + dh];
                for t in 0..dh {
                    dq[t] += ds * kj[t] * scale;
                }
            }
            for (j, &ds) in ds_row.iter().enumerate() {
                if ds == 0.0 {
                    continue;
                }
                let dk = &mut d_k.row_mut(j)[off..off + dh];
                for t in 0..dh {
                    dk[t] += ds * qi[t] * scale;
                }
            }
        }
    }

    // projections
    hq.matmul_tn_acc(&d_q, &mut g.wq);
    d_q.colsum_acc(&mut g.bq);
    hkv.matmul_tn_acc(&d_k, &mut g.wk);
    d_k.colsum_acc(&mut g.bk);
    hkv.matmul_tn_acc(&d_v, &mut g.wv);
    d_v.colsum_acc(&mut g.bv);

    let mut d_hq = d_q.matmul_nt(&p.wq);
    let d_hk = d_k.matmul_nt(&p.wk);
    let d_hv = d_v.matmul_nt(&p.wv);
    let mut d_hkv = d_hk;
    d_hkv.add_inplace(&d_hv);
    if std::ptr::eq(hq, hkv) {
        // self-attention: both flows land on the same input
        d_hq.add_inplace(&d_hkv);
        let zero = Mat::zeros(d_hkv.rows, d_hkv.cols);
        return (d_hq, zero);
    }
    (d_hq, d_hkv)
}

struct FfnTape {
    /// Pre-activation `L x F`.
    h1: Mat,
    /// Activated `L x F`.
    act: Mat,
}

fn ffn_fwd(x: &Mat, plan: &RouterPlan, ffn: &[FfnParams; 3]) -> (Mat, FfnTape) {
    let (l, d) = (x.rows, x.cols);
    let f = ffn[0].w1.cols;
    let mut h1 = Mat::zeros(l, f);
    let mut act = Mat::zeros(l, f);
    let mut out = Mat::zeros(l, d);
    for i in 0..l {
        let p = &ffn[cat_index(plan.0[i])];
        let xi = x.row(i);
        let h1_row = h1.row_mut(i);
        for j in 0..f {
            let mut acc = p.b1.data[j];
            for (t, &xv) in xi.iter().enumerate() {
                acc += xv * p.w1.data[t * f + j];
            }
            h1_row[j] = acc;
        }
        let act_row = act.row_mut(i);
        for j in 0..f {
            act_row[j] = gelu(h1_row[j]);
        }
        let out_row = out.row_mut(i);
        for t in 0..d {
            let mut acc = p.b2.data[t];
            for (j, &aj) in act_row.iter().enumerate() {
                acc += aj * p.w2.data[j * d + t];
            }
            out_row[t] = acc;
        }
    }
    (out, FfnTape { h1, act })
}

fn ffn_bwd(
    tape: &FfnTape,
    x: &Mat,
    plan: &RouterPlan,
    ffn: &[FfnParams; 3],
    g: &mut [FfnParams; 3],
    d_out: &Mat,
) -> Mat {
    let (l, d) = (x.rows, x.cols);
    let f = tape.h1.cols;
    let mut d_x = Mat::zeros(l, d);
    for i in 0..l {
        let c = cat_index(plan.0[i]);
        let p = &ffn[c];
        let gr = &mut g[c];
        let dy = d_out.row(i);
        let act_row = tape.act.row(i);
        let h1_row = tape.h1.row(i);
        let xi = x.row(i);
        // d_act = dy @ w2^T; d_w2 += act^T dy; d_b2 += dy
        let mut d_act = vec![0.0; f];
        for j in 0..f {
            let w2_row = &p.w2.data[j * d..(j + 1) * d];
            let mut acc = 0.0;
            for t in 0..d {
                acc += dy[t] * w2_row[t];
            }
            d_act[j] = acc;
            let gw2_row = &mut gr.w2.data[j * d..(j + 1) * d];
            for t in 0..d {
                gw2_row[t] += act_row[j] * dy[t];
            }
        }
        for t in 0..d {
            gr.b2.data[t] += dy[t];
        }
        // through the activation
        let mut d_h1 = d_act;
        for j in 0..f {
            d_h1[j] *= gelu_grad(h1_row[j]);
        }
        // d_w1 += x^T d_h1; d_b1 += d_h1; d_x = d_h1 @ w1^T
        for (t, &xv) in xi.iter().enumerate() {
            let gw1_row = &mut gr.w1.data[t * f..(t + 1) * f];
            for j in 0..f {
                gw1_row[j] += xv * d_h1[j];
            }
        }
        for j in 0..f {
            gr.b1.data[j] += d_h1[j];
        }
        let dx_row = d_x.row_mut(i);
        for (t, dx) in dx_row.iter_mut().enumerate() {
            let w1_row_t = &p.w1.data[t * f..(t + 1) * f];
            let mut acc = 0.0;
            for j in 0..f {
                acc += d_h1[j] * w1_row_t[j];
            }
            *dx = acc;
        }
    }
    d_x
}

struct LayerTape {
    x_in: Mat,
    ln1: LnTape,
    t1: Mat,
    sa: AttnTape,
    x1: Mat,
    ln2: LnTape,
    t2: Mat,
    ca: AttnTape,
    x2: Mat,
    ln3: LnTape,
    t3: Mat,
    ffn: FfnTape,
}

pub(crate) struct SeqTape {
    layers: Vec<LayerTape>,
    lnf: LnTape,
    xf: Mat,
    pub logits: Mat,
}

fn check_inputs(
    params: &ParamSet,
    prefix: &[TokenId],
    plan: &RouterPlan,
    role: DecodeRole,
) -> Result<(), ModelError> {
    if prefix.is_empty() {
        return Err(ModelError::EmptyPrefix);
    }
    if plan.len() != prefix.len() {
        return Err(ModelError::PlanMismatch {
            plan: plan.len(),
            prefix: prefix.len(),
        });
    }
    let max = params.config.max_len(role);
    if prefix.len() > max {
        return Err(ModelError::PrefixTooLong {
            len: prefix.len(),
            max,
        });
    }
    for &id in prefix {
        if id as usize >= params.config.vocab_size {
            return Err(ModelError::TokenOutOfRange(id, params.config.vocab_size));
        }
    }
    Ok(())
}

pub(crate) fn forward_tape(
    params: &ParamSet,
    features: &EncodedFeatures,
    prefix: &[TokenId],
    plan: &RouterPlan,
    role: DecodeRole,
) -> Result<SeqTape, ModelError> {
    check_inputs(params, prefix, plan, role)?;
    let d = params.config.d_model;
    let pos = match role {
        DecodeRole::Stage1 => &params.pos_stage1,
        DecodeRole::Stage2 => &params.pos_stage2,
    };
    let mut x = Mat::zeros(prefix.len(), d);
    for (i, &id) in prefix.iter().enumerate() {
        let emb = params.tok_embed.row(id as usize);
        let pe = pos.row(i);
        let row = x.row_mut(i);
        for j in 0..d {
            row[j] = emb[j] + pe[j];
        }
    }

    let n_heads = params.config.n_heads;
    let mut layers = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let x_in = x.clone();
        let (t1, ln1) = ln_fwd(&x, &lp.ln1_g, &lp.ln1_b);
        let (sa_out, sa) = mha_fwd(&t1, &t1, &lp.self_attn, n_heads, true);
        x.add_inplace(&sa_out);
        let x1 = x.clone();
        let (t2, ln2) = ln_fwd(&x, &lp.ln2_g, &lp.ln2_b);
        let (ca_out, ca) = mha_fwd(&t2, &features.mem, &lp.cross_attn, n_heads, false);
        x.add_inplace(&ca_out);
        let x2 = x.clone();
        let (t3, ln3) = ln_fwd(&x, &lp.ln3_g, &lp.ln3_b);
        let (ffn_out, ffn) = ffn_fwd(&t3, plan, &lp.ffn);
        x.add_inplace(&ffn_out);
        layers.push(LayerTape {
            x_in,
            ln1,
            t1,
            sa,
            x1,
            ln2,
            t2,
            ca,
            x2,
            ln3,
            t3,
            ffn,
        });
    }
    let (xf, lnf) = ln_fwd(&x, &params.lnf_g, &params.lnf_b);
    let mut logits = xf.matmul(&params.w_out);
    logits.add_bias(&params.b_out);
    Ok(SeqTape {
        layers,
        lnf,
        xf,
        logits,
    })
}

/// Per-position vocabulary logits for a target prefix under a router plan.
pub fn forward(
    params: &ParamSet,
    features: &EncodedFeatures,
    prefix: &[TokenId],
    plan: &RouterPlan,
    role: DecodeRole,
) -> Result<Mat, ModelError> {
    Ok(forward_tape(params, features, prefix, plan, role)?.logits)
}

/// Backward through one sequence given the logits gradient. Accumulates
/// parameter gradients and the cross-attention gradient into `d_mem`.
pub(crate) fn backward_tape(
    params: &ParamSet,
    features: &EncodedFeatures,
    prefix: &[TokenId],
    plan: &RouterPlan,
    role: DecodeRole,
    tape: &SeqTape,
    d_logits: &Mat,
    grads: &mut ParamSet,
    d_mem: &mut Mat,
) {
    let n_heads = params.config.n_heads;

    // logits = xf @ w_out + b_out
    tape.xf.matmul_tn_acc(d_logits, &mut grads.w_out);
    d_logits.colsum_acc(&mut grads.b_out);
    let d_xf = d_logits.matmul_nt(&params.w_out);
    let mut d_x = ln_bwd(&tape.lnf, &params.lnf_g, &d_xf, &mut grads.lnf_g, &mut grads.lnf_b);

    for (li, lt) in tape.layers.iter().enumerate().rev() {
        let lp = &params.layers[li];
        let lg = &mut grads.layers[li];

        // x3 = x2 + ffn(ln3(x2))
        let d_t3 = ffn_bwd(&lt.ffn, &lt.t3, plan, &lp.ffn, &mut lg.ffn, &d_x);
        let d_x2_from_ln = ln_bwd(&lt.ln3, &lp.ln3_g, &d_t3, &mut lg.ln3_g, &mut lg.ln3_b);
        d_x.add_inplace(&d_x2_from_ln);
        let _ = &lt.x2;

        // x2 = x1 + cross(ln2(x1), mem)
        let (d_t2, d_mem_part) = mha_bwd(
            &lt.ca,
            &lt.t2,
            &features.mem,
            &lp.cross_attn,
            &mut lg.cross_attn,
            n_heads,
            &d_x,
        );
        d_mem.add_inplace(&d_mem_part);
        let d_x1_from_ln = ln_bwd(&lt.ln2, &lp.ln2_g, &d_t2, &mut lg.ln2_g, &mut lg.ln2_b);
        d_x.add_inplace(&d_x1_from_ln);
        let _ = &lt.x1;

        // x1 = x0 + self(ln1(x0))
        let (d_t1, _zero) = mha_bwd(
            &lt.sa,
            &lt.t1,
            &lt.t1,
            &lp.self_attn,
            &mut lg.self_attn,
            n_heads,
            &d_x,
        );
        let d_x0_from_ln = ln_bwd(&lt.ln1, &lp.ln1_g, &d_t1, &mut lg.ln1_g, &mut lg.ln1_b);
        d_x.add_inplace(&d_x0_from_ln);
        let _ = &lt.x_in;
    }

    // embeddings
    let pos_grad = match role {
        DecodeRole::Stage1 => &mut grads.pos_stage1,
        DecodeRole::Stage2 => &mut grads.pos_stage2,
    };
    let d = params.config.d_model;
    for (i, &id) in prefix.iter().enumerate() {
        let src = d_x.row(i);
        let emb_row = grads.tok_embed.row_mut(id as usize);
        for j in 0..d {
            emb_row[j] += src[j];
        }
        let pos_row = pos_grad.row_mut(i);
        for j in 0..d {
            pos_row[j] += src[j];
        }
    }
}

/// Weighted negative log-likelihood over one teacher-forced sequence.
///
/// `logits` row `i` scores `targets[i]`; `pos_weights[i]` is the Eq.-style
/// per-token weight with prompt positions already zeroed. Returns the loss,
/// the logits gradient, and `(correct, counted)` greedy token accuracy
/// counts over the weighted positions.
pub fn weighted_nll(
    logits: &Mat,
    targets: &[TokenId],
    pos_weights: &[f64],
) -> (f64, Mat, (usize, usize)) {
    assert_eq!(logits.rows, targets.len(), "targets misaligned");
    assert_eq!(logits.rows, pos_weights.len(), "weights misaligned");
    let v = logits.cols;
    let mut d_logits = Mat::zeros(logits.rows, v);
    let mut loss = 0.0;
    let mut correct = 0;
    let mut counted = 0;
    for i in 0..logits.rows {
        let w = pos_weights[i];
        if w == 0.0 {
            continue;
        }
        let row = logits.row(i);
        let t = targets[i] as usize;
        let lse = logsumexp(row);
        loss += w * (lse - row[t]);
        counted += 1;
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
            .map(|(j, _)| j)
            .expect("non-empty row");
        if argmax == t {
            correct += 1;
        }
        let d_row = d_logits.row_mut(i);
        let mut probs: Vec<f64> = row.to_vec();
        softmax_inplace(&mut probs);
        for j in 0..v {
            d_row[j] = w * probs[j];
        }
        d_row[t] -= w;
    }
    (loss, d_logits, (correct, counted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LossWeights, ModelConfig, RouterPlan};
    use crate::vocab::TokenCategory;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            mlp_factor: 2,
            max_len_stage1: 12,
            max_len_stage2: 10,
            vocab_size: 19,
            grid_g: 8,
            grid_c: 3,
            patch: 4,
        }
    }

    fn tiny_grid(cfg: &ModelConfig) -> FeatureGrid {
        let mut data = vec![0.0f32; cfg.grid_g * cfg.grid_g * cfg.grid_c];
        for (i, v) in data.iter_mut().enumerate() {
            if i % cfg.grid_c == (i / 7) % cfg.grid_c {
                *v = 1.0;
            }
        }
        FeatureGrid {
            g: cfg.grid_g,
            c: cfg.grid_c,
            data,
        }
    }

    #[test]
    fn forward_shapes() {
        let cfg = tiny_config();
        let params = ParamSet::init(&cfg, 3).unwrap();
        let feats = encode_features(&params, &tiny_grid(&cfg)).unwrap();
        let logits = forward(&params, &feats, &[5], &RouterPlan::stage1(1), DecodeRole::Stage1)
            .unwrap();
        assert_eq!((logits.rows, logits.cols), (1, cfg.vocab_size));
        let logits = forward(
            &params,
            &feats,
            &[1, 2, 3, 4],
            &RouterPlan::stage1(4),
            DecodeRole::Stage1,
        )
        .unwrap();
        assert_eq!((logits.rows, logits.cols), (4, cfg.vocab_size));
    }

    #[test]
    fn plan_mismatch_is_a_contract_error() {
        let cfg = tiny_config();
        let params = ParamSet::init(&cfg, 3).unwrap();
        let feats = encode_features(&params, &tiny_grid(&cfg)).unwrap();
        let err = forward(&params, &feats, &[1, 2], &RouterPlan::stage1(3), DecodeRole::Stage1)
            .unwrap_err();
        assert!(matches!(err, ModelError::PlanMismatch { plan: 3, prefix: 2 }));
    }

    #[test]
    fn zero_params_give_uniform_logits() {
        let cfg = tiny_config();
        let params = ParamSet::init(&cfg, 3).unwrap().zeros_like();
        let feats = encode_features(&params, &tiny_grid(&cfg)).unwrap();
        let logits = forward(
            &params,
            &feats,
            &[0, 1, 2],
            &RouterPlan::stage1(3),
            DecodeRole::Stage1,
        )
        .unwrap();
        for i in 0..logits.rows {
            let mut p = logits.row(i).to_vec();
            softmax_inplace(&mut p);
            for &v in &p {
                assert!((v - 1.0 / cfg.vocab_size as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn causality_and_routing_locality() {
        let cfg = tiny_config();
        let params = ParamSet::init(&cfg, 5).unwrap();
        let feats = encode_features(&params, &tiny_grid(&cfg)).unwrap();
        let t = 3usize;
        let base: Vec<TokenId> = vec![1, 2, 3, 4, 5, 6];
        let mut changed = base.clone();
        changed[t] = 9;
        let plan = RouterPlan::stage1(base.len());
        let la = forward(&params, &feats, &base, &plan, DecodeRole::Stage1).unwrap();
        let lb = forward(&params, &feats, &changed, &plan, DecodeRole::Stage1).unwrap();
        for i in 0..t {
            assert_eq!(la.row(i), lb.row(i), "position {i} depends on the future");
        }
        assert_ne!(la.row(t), lb.row(t));

        // changing only position t's category leaves positions < t unchanged
        let mut plan_b = plan.clone();
        plan_b.0[t] = TokenCategory::Recognition;
        let lc = forward(&params, &feats, &base, &plan_b, DecodeRole::Stage1).unwrap();
        for i in 0..t {
            assert_eq!(la.row(i), lc.row(i));
        }
        assert_ne!(la.row(t), lc.row(t));
    }

    #[test]
    fn routing_exclusivity_zeroing_unused_experts() {
        let cfg = tiny_config();
        let params = ParamSet::init(&cfg, 7).unwrap();
        let feats = encode_features(&params, &tiny_grid(&cfg)).unwrap();
        let ids: Vec<TokenId> = vec![1, 4, 7, 2];
        let plan = RouterPlan::stage2(4, 8); // all Detection (index 1)
        let base = forward(&params, &feats, &ids, &plan, DecodeRole::Stage2).unwrap();
        let mut stripped = params.clone();
        for layer in &mut stripped.layers {
            for c in [0usize, 2] {
                layer.ffn[c].w1.data.fill(0.0);
                layer.ffn[c].b1.data.fill(0.0);
                layer.ffn[c].w2.data.fill(0.0);
                layer.ffn[c].b2.data.fill(0.0);
            }
        }
        let after = forward(&stripped, &feats, &ids, &plan, DecodeRole::Stage2).unwrap();
        assert_eq!(base.data, after.data, "non-selected experts leaked into logits");
    }

    #[test]
    fn nll_examples() {
        // single target with probability 1: loss 0
        let mut logits = Mat::zeros(1, 3);
        logits.data = vec![1000.0, 0.0, 0.0];
        let (loss, _, (correct, counted)) = weighted_nll(&logits, &[0], &[1.0]);
        assert!(loss.abs() < 1e-9);
        assert_eq!((correct, counted), (1, 1));

        // structural token with log-prob -c contributes 4c
        let c = 1.7f64;
        let p = (-c).exp();
        let rest = (1.0 - p) / 2.0;
        let mut logits = Mat::zeros(1, 3);
        logits.data = vec![p.ln(), rest.ln(), rest.ln()];
        let w = LossWeights::default();
        let (loss, _, _) = weighted_nll(&logits, &[0], &[w.structural]);
        assert!((loss - 4.0 * c).abs() < 1e-9, "{loss}");

        // all prompt positions: zero loss
        let (loss, grad, (_, counted)) = weighted_nll(&logits, &[0], &[0.0]);
        assert_eq!(loss, 0.0);
        assert_eq!(counted, 0);
        assert!(grad.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nll_gradient_matches_hand_formula_one_param() {
        // 2-class logits (theta, 0): dL/dtheta = softmax(theta)-1 for target 0
        let theta = 0.37f64;
        let mut logits = Mat::zeros(1, 2);
        logits.data = vec![theta, 0.0];
        let (_, grad, _) = weighted_nll(&logits, &[0], &[1.0]);
        let p0 = theta.exp() / (theta.exp() + 1.0);
        assert!((grad.at(0, 0) - (p0 - 1.0)).abs() < 1e-12);
        assert!((grad.at(0, 1) - (1.0 - p0)).abs() < 1e-12);
    }
}
