//! Batch loss and its gradient with respect to every parameter.
//!
//! The forward pass is recomputed from the cached [`Forward`] and the chain
//! rule is applied by hand: heads and fusion, then the attention softmax,
//! then the shared projection and the embedding rows.

use std::hash::{Hash, Hasher};

use crate::graph::HeteroGraph;
use crate::model::{dot, leaky_relu, leaky_relu_grad, DropoutMode, Forward, Model, Params};

/// One training example: node ids of the user, the item, and the span
/// containing the interaction (absent when span nodes are disabled).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example {
    pub user: usize,
    pub item: usize,
    pub span: Option<usize>,
    pub target: f64,
}

pub fn squared_error(prediction: f64, target: f64) -> f64 {
    let e = prediction - target;
    e * e
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    /// Mean squared error over the batch.
    pub loss: f64,
    pub predictions: Vec<f64>,
    pub grads: Option<Params>,
    /// Dropout mask used by the pass, for replay.
    pub mask: Option<Vec<f64>>,
    /// Hash of all piecewise-linear branches taken.
    pub signature: u64,
}

pub fn evaluate_batch(
    model: &Model,
    graph: &HeteroGraph,
    batch: &[Example],
    dropout: DropoutMode<'_>,
    want_grad: bool,
) -> BatchResult {
    let p = &model.params;
    let h = model.config.hidden_dim();
    let dim = model.config.embed_dim;
    let slope = model.config.leaky_slope;

    let mut centers = Vec::with_capacity(batch.len() * 3);
    for ex in batch {
        centers.push(ex.user);
        centers.push(ex.item);
        centers.extend(ex.span);
    }
    let fwd = Forward::run(model, graph, &centers, dropout);

    let n = batch.len().max(1) as f64;
    let alpha = p.alpha.value();
    let beta = p.beta.value();
    let (long_u, long_i) = p.long_head.data.split_at(h);
    let (short_s, short_i) = p.short_head.data.split_at(h);

    let mut grads = want_grad.then(|| p.zeros_like());
    let mut d_out = if want_grad { vec![0.0; fwd.centers.len() * h] } else { Vec::new() };
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    fwd.branch_signature().hash(&mut hasher);

    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(batch.len());
    for ex in batch {
        let cu = fwd.center_slot[&ex.user];
        let ci = fwd.center_slot[&ex.item];
        let hu = &fwd.output[cu * h..(cu + 1) * h];
        let hi = &fwd.output[ci * h..(ci + 1) * h];
        let pre_long = dot(long_u, hu) + dot(long_i, hi) + p.long_bias.value();
        let r_long = leaky_relu(pre_long, slope);
        (pre_long > 0.0).hash(&mut hasher);

        let short = ex.span.map(|s| {
            let cs = fwd.center_slot[&s];
            let hs = &fwd.output[cs * h..(cs + 1) * h];
            let pre = dot(short_s, hs) + dot(short_i, hi) + p.short_bias.value();
            (pre > 0.0).hash(&mut hasher);
            (cs, pre, leaky_relu(pre, slope))
        });
        let y = match short {
            Some((_, _, r_short)) => alpha * r_short + beta * r_long,
            None => beta * r_long,
        };
        loss += squared_error(y, ex.target);
        predictions.push(y);

        let Some(g) = grads.as_mut() else { continue };
        let dy = 2.0 * (y - ex.target) / n;

        g.beta.data[0] += dy * r_long;
        let d_pre_long = dy * beta * leaky_relu_grad(pre_long, slope);
        g.long_bias.data[0] += d_pre_long;
        let (gl_u, gl_i) = g.long_head.data.split_at_mut(h);
        for j in 0..h {
            gl_u[j] += d_pre_long * hu[j];
            gl_i[j] += d_pre_long * hi[j];
            d_out[cu * h + j] += d_pre_long * long_u[j];
            d_out[ci * h + j] += d_pre_long * long_i[j];
        }

        if let Some((cs, pre_short, r_short)) = short {
            let hs = &fwd.output[cs * h..(cs + 1) * h];
            g.alpha.data[0] += dy * r_short;
            let d_pre_short = dy * alpha * leaky_relu_grad(pre_short, slope);
            g.short_bias.data[0] += d_pre_short;
            let (gs_s, gs_i) = g.short_head.data.split_at_mut(h);
            for j in 0..h {
                gs_s[j] += d_pre_short * hs[j];
                gs_i[j] += d_pre_short * hi[j];
                d_out[cs * h + j] += d_pre_short * short_s[j];
                d_out[ci * h + j] += d_pre_short * short_i[j];
            }
        }
    }
    loss /= n;

    if let Some(g) = grads.as_mut() {
        attention_backward(model, &fwd, &d_out, g, h, dim, slope);
    }

    BatchResult {
        loss,
        predictions,
        grads,
        mask: fwd.mask.clone(),
        signature: hasher.finish(),
    }
}

fn attention_backward(
    model: &Model,
    fwd: &Forward,
    d_out: &[f64],
    g: &mut Params,
    h: usize,
    dim: usize,
    slope: f64,
) {
    let p = &model.params;
    let (attn_center, rest) = p.attn.data.split_at(h);
    let (attn_nbr, attn_edge) = rest.split_at(h);

    let mut d_z = vec![0.0; fwd.support.len() * h];
    let mut d_nbr_score = vec![0.0; fwd.support.len()];
    let mut d_edge_scale = 0.0;
    let mut d_mixed = vec![0.0; h];
    let mut d_alpha: Vec<f64> = Vec::new();

    for c in 0..fwd.centers.len() {
        let mut any = false;
        for j in 0..h {
            let v = d_out[c * h + j] * leaky_relu_grad(fwd.mixed[c * h + j], slope);
            d_mixed[j] = v;
            any |= v != 0.0;
        }
        if !any {
            continue;
        }
        let range = fwd.nbr_start[c]..fwd.nbr_start[c + 1];
        d_alpha.clear();
        let mut weighted = 0.0;
        for k in range.clone() {
            let s = fwd.nbr_support[k];
            let da = dot(&d_mixed, &fwd.projected[s * h..(s + 1) * h]);
            weighted += fwd.alpha[k] * da;
            d_alpha.push(da);
        }
        let mut d_center_score = 0.0;
        for (k, &da) in range.clone().zip(&d_alpha) {
            let s = fwd.nbr_support[k];
            let a = fwd.alpha[k];
            for (dz, dm) in d_z[s * h..(s + 1) * h].iter_mut().zip(&d_mixed) {
                *dz += a * dm;
            }
            let d_pre = a * (da - weighted) * leaky_relu_grad(fwd.pre[k], slope);
            d_center_score += d_pre;
            d_nbr_score[s] += d_pre;
            d_edge_scale += d_pre * fwd.nbr_weight[k];
        }
        let own = fwd.nbr_support[range.start];
        let z_own = &fwd.projected[own * h..(own + 1) * h];
        for j in 0..h {
            g.attn.data[j] += d_center_score * z_own[j];
            d_z[own * h + j] += d_center_score * attn_center[j];
        }
    }

    for (s, &dn) in d_nbr_score.iter().enumerate() {
        if dn == 0.0 {
            continue;
        }
        let z = &fwd.projected[s * h..(s + 1) * h];
        for j in 0..h {
            g.attn.data[h + j] += dn * z[j];
            d_z[s * h + j] += dn * attn_nbr[j];
        }
    }
    let e = attn_edge.len();
    for k in 0..e {
        g.attn.data[2 * h + k] += d_edge_scale * p.edge_proj.data[k];
        g.edge_proj.data[k] += d_edge_scale * attn_edge[k];
    }

    // z = mask * (W x): push through the mask into W and the embedding rows
    let mut d_wx = vec![0.0; h];
    for (s, &node) in fwd.support.iter().enumerate() {
        let dz = &d_z[s * h..(s + 1) * h];
        match &fwd.mask {
            Some(m) => {
                for j in 0..h {
                    d_wx[j] = dz[j] * m[s * h + j];
                }
            }
            None => d_wx.copy_from_slice(dz),
        }
        if d_wx.iter().all(|&v| v == 0.0) {
            continue;
        }
        let x = p.embeddings.row(node);
        let d_x = g.embeddings.row_mut(node);
        for (k, &dk) in d_wx.iter().enumerate() {
            if dk == 0.0 {
                continue;
            }
            let w_row = &p.proj.data[k * dim..(k + 1) * dim];
            let gw_row = &mut g.proj.data[k * dim..(k + 1) * dim];
            for j in 0..dim {
                gw_row[j] += dk * x[j];
                d_x[j] += dk * w_row[j];
            }
        }
    }
}
