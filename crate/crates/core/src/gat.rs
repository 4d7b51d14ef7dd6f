//! Stacked graph-attention layers over a conversation graph, the
//! concatenation head, binary cross-entropy, hand-written backward passes,
//! and attention extraction.
//!
//! Aggregation runs over IN-neighbors: reply and post-link edges point from
//! context toward later content, so in-aggregation delivers ancestor and
//! post signal to the target. Every node carries an implicit self-loop that
//! is not stored as an edge.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::ConversationGraph;
use crate::nn::mat::{
    dropout, dropout_vec, elu_grad, elu_scalar, leaky_relu_grad, leaky_relu_scalar,
    masked_softmax, sigmoid_scalar, DetRng, Mat,
};
use crate::nn::params::{ParamStore, Tensor};

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatConfig {
    pub num_layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub input_dropout: f64,
    pub layer_dropout: f64,
    pub leaky_slope: f64,
}

impl Default for GatConfig {
    fn default() -> Self {
        GatConfig {
            num_layers: 3,
            heads: 8,
            dim: 768,
            input_dropout: 0.3,
            layer_dropout: 0.4,
            leaky_slope: 0.2,
        }
    }
}

impl GatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 1 || self.num_layers > 8 {
            return Err(Error::Argument(format!(
                "num_layers {} outside 1..=8",
                self.num_layers
            )));
        }
        if self.heads < 1 {
            return Err(Error::Argument("heads must be at least 1".into()));
        }
        if self.dim < 1 {
            return Err(Error::Argument("dim must be at least 1".into()));
        }
        for (name, p) in [
            ("input_dropout", self.input_dropout),
            ("layer_dropout", self.layer_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Argument(format!("{} {} outside [0, 1)", name, p)));
            }
        }
        Ok(())
    }
}

pub fn layer_weight_name(layer: usize, head: usize) -> String {
    format!("layer{}.head{}.w", layer, head)
}

pub fn layer_attn_name(layer: usize, head: usize) -> String {
    format!("layer{}.head{}.a", layer, head)
}

/// Fresh Glorot-initialized parameters for the full model: per-layer,
/// per-head W (d x d) and a (2d), plus the head tensors W_f (d x 2d),
/// b_f, W_c (1 x d), b_c. Biases start at zero.
pub fn init_gat_params(cfg: &GatConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    use rand::SeedableRng;
    let mut rng = DetRng::seed_from_u64(seed);
    let d = cfg.dim;
    let mut store = ParamStore::new(seed);
    for l in 0..cfg.num_layers {
        for h in 0..cfg.heads {
            store.insert(
                layer_weight_name(l, h),
                ParamStore::glorot(d, d, d, d, &mut rng),
            )?;
            store.insert(
                layer_attn_name(l, h),
                ParamStore::glorot(2 * d, 1, 2 * d, 1, &mut rng),
            )?;
        }
    }
    store.insert("head.w_f", ParamStore::glorot(d, 2 * d, 2 * d, d, &mut rng))?;
    store.insert("head.b_f", Tensor::zeros(d, 1))?;
    store.insert("head.w_c", ParamStore::glorot(1, d, d, 1, &mut rng))?;
    store.insert("head.b_c", Tensor::zeros(1, 1))?;
    Ok(store)
}

/// Per-node in-neighborhoods: the unique sources of stored in-edges plus the
/// node itself, sorted by node index. Parallel edges of different kinds
/// collapse to a single neighbor.
#[derive(Debug, Clone)]
pub struct Neighborhoods {
    pub members: Vec<Vec<usize>>,
}

impl Neighborhoods {
    pub fn new(graph: &ConversationGraph) -> Self {
        let n = graph.nodes.len();
        let mut sets: Vec<std::collections::BTreeSet<usize>> =
            (0..n).map(|i| [i].into_iter().collect()).collect();
        for &(s, d, _) in &graph.edges {
            sets[d].insert(s);
        }
        Neighborhoods {
            members: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    /// projected inputs, row n = W x_n
    pub p: Mat,
    /// raw attention logits s_m + t_n, aligned with the neighborhood lists
    pub raw: Vec<Vec<f64>>,
    /// normalized attention before dropout
    pub alpha: Vec<Vec<f64>>,
    /// attention actually used in aggregation (after dropout)
    pub alpha_used: Vec<Vec<f64>>,
    /// dropout multiplier mask over alpha
    pub alpha_mask: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    /// layer input after layer dropout
    pub xd: Mat,
    /// dropout multiplier mask applied to the layer input
    pub x_mask: Mat,
    /// head-averaged pre-ELU output
    pub o: Mat,
    pub heads: Vec<HeadCache>,
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    pub nbrs: Neighborhoods,
    /// raw input features (pre input-dropout)
    pub x0: Mat,
    pub layers: Vec<LayerCache>,
    pub target: usize,
    pub z: Vec<f64>,
    pub h: Vec<f64>,
    pub prob: f64,
}

#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub prob: f64,
    pub target_repr_z: Vec<f64>,
    pub hidden_h: Vec<f64>,
    /// per layer, per head: (src, dst) -> attention weight, self-loops included
    pub attention: Vec<Vec<BTreeMap<(usize, usize), f64>>>,
    pub cache: Option<ModelCache>,
}

/// Heads-averaged attention for one layer, self-loop mass reported apart.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub edges: BTreeMap<(usize, usize), f64>,
    pub self_loops: BTreeMap<usize, f64>,
}

fn project(xd: &Mat, w: &Tensor) -> Mat {
    // p[n] = W x_n
    let d_out = w.rows;
    let mut p = Mat::zeros(xd.rows, d_out);
    for n in 0..xd.rows {
        let x_row = xd.row(n);
        let p_row = p.row_mut(n);
        for i in 0..d_out {
            let w_row = w.row(i);
            let mut acc = 0.0;
            for (wv, xv) in w_row.iter().zip(x_row) {
                acc += wv * xv;
            }
            p_row[i] = acc;
        }
    }
    p
}

/// One GAT layer over the graph. Layer dropout applies to the input rows and
/// to the post-softmax attention coefficients in training mode; the cached
/// `alpha` stays normalized for interpretability either way.
pub fn layer_forward(
    x: &Mat,
    nbrs: &Neighborhoods,
    params: &ParamStore,
    layer: usize,
    cfg: &GatConfig,
    mut training: Option<&mut DetRng>,
) -> Result<(Mat, LayerCache)> {
    let n = nbrs.len();
    if x.rows != n {
        return Err(Error::Shape(format!(
            "feature rows {} != node count {}",
            x.rows, n
        )));
    }
    let d = cfg.dim;
    if x.cols != d {
        return Err(Error::Shape(format!(
            "feature dim {} != configured dim {}",
            x.cols, d
        )));
    }

    let (xd, x_mask) = match training.as_deref_mut() {
        Some(rng) => dropout(x, cfg.layer_dropout, true, rng)?,
        None => {
            let mut mask = Mat::zeros(x.rows, x.cols);
            mask.data.fill(1.0);
            (x.clone(), mask)
        }
    };

    let mut heads = Vec::with_capacity(cfg.heads);
    let mut o = Mat::zeros(n, d);
    let head_scale = 1.0 / cfg.heads as f64;

    for h in 0..cfg.heads {
        let w = params.get(&layer_weight_name(layer, h))?;
        let a = params.get(&layer_attn_name(layer, h))?;
        if w.rows != d || w.cols != d || a.rows != 2 * d {
            return Err(Error::Shape(format!(
                "layer {} head {} parameter shapes ({}x{}, {}) do not match dim {}",
                layer, h, w.rows, w.cols, a.rows, d
            )));
        }
        let p = project(&xd, w);
        let (a_dst, a_src) = a.data.split_at(d);

        let s: Vec<f64> = (0..n).map(|m| crate::nn::dot(a_dst, p.row(m))).collect();
        let t: Vec<f64> = (0..n).map(|m| crate::nn::dot(a_src, p.row(m))).collect();

        let mut raw = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        let mut alpha_used = Vec::with_capacity(n);
        let mut alpha_mask = Vec::with_capacity(n);
        for m in 0..n {
            let members = &nbrs.members[m];
            let raw_m: Vec<f64> = members.iter().map(|&src| s[m] + t[src]).collect();
            let scores: Vec<f64> = raw_m
                .iter()
                .map(|&v| leaky_relu_scalar(v, cfg.leaky_slope))
                .collect();
            let active: Vec<usize> = (0..members.len()).collect();
            let alpha_m = masked_softmax(&scores, &active)?;
            let (used, mask) = match training.as_deref_mut() {
                Some(rng) => dropout_vec(&alpha_m, cfg.layer_dropout, true, rng)?,
                None => (alpha_m.clone(), vec![1.0; alpha_m.len()]),
            };
            raw.push(raw_m);
            alpha.push(alpha_m);
            alpha_used.push(used);
            alpha_mask.push(mask);
        }

        for m in 0..n {
            let members = &nbrs.members[m];
            let used = &alpha_used[m];
            let o_row = o.row_mut(m);
            for (pos, &src) in members.iter().enumerate() {
                let coeff = used[pos] * head_scale;
                if coeff == 0.0 {
                    continue;
                }
                for (ov, pv) in o_row.iter_mut().zip(p.row(src)) {
                    *ov += coeff * pv;
                }
            }
        }

        heads.push(HeadCache {
            p,
            raw,
            alpha,
            alpha_used,
            alpha_mask,
        });
    }

    let x_out = o.map(elu_scalar);
    Ok((
        x_out,
        LayerCache {
            xd,
            x_mask,
            o,
            heads,
        },
    ))
}

/// Gradient of one layer: consumes dL/d(layer output), accumulates parameter
/// gradients into `params`, and returns dL/d(layer input).
fn layer_backward(
    grad_out: &Mat,
    cache: &LayerCache,
    nbrs: &Neighborhoods,
    params: &mut ParamStore,
    layer: usize,
    cfg: &GatConfig,
) -> Result<Mat> {
    let n = nbrs.len();
    let d = cfg.dim;
    let head_scale = 1.0 / cfg.heads as f64;

    // through the ELU
    let mut d_o = Mat::zeros(n, d);
    for i in 0..n * d {
        d_o.data[i] = grad_out.data[i] * elu_grad(cache.o.data[i]);
    }

    let mut d_xd = Mat::zeros(n, d);
    for (h, hc) in cache.heads.iter().enumerate() {
        let mut d_p = Mat::zeros(n, d);
        let mut d_alpha_used: Vec<Vec<f64>> = nbrs
            .members
            .iter()
            .map(|mem| vec![0.0; mem.len()])
            .collect();

        // aggregation: o_m += head_scale * alpha_used * p[src]
        for m in 0..n {
            let members = &nbrs.members[m];
            let d_o_row = d_o.row(m);
            for (pos, &src) in members.iter().enumerate() {
                let coeff = hc.alpha_used[m][pos] * head_scale;
                d_alpha_used[m][pos] = head_scale * crate::nn::dot(d_o_row, hc.p.row(src));
                if coeff != 0.0 {
                    let d_p_row = d_p.row_mut(src);
                    for (dp, go) in d_p_row.iter_mut().zip(d_o_row) {
                        *dp += coeff * go;
                    }
                }
            }
        }

        // attention dropout, softmax, leaky
        let mut d_s = vec![0.0; n];
        let mut d_t = vec![0.0; n];
        for m in 0..n {
            let members = &nbrs.members[m];
            let alpha = &hc.alpha[m];
            let d_alpha: Vec<f64> = (0..members.len())
                .map(|pos| d_alpha_used[m][pos] * hc.alpha_mask[m][pos])
                .collect();
            let weighted: f64 = alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
            for (pos, &src) in members.iter().enumerate() {
                let d_e = alpha[pos] * (d_alpha[pos] - weighted);
                let d_raw = d_e * leaky_relu_grad(hc.raw[m][pos], cfg.leaky_slope);
                d_s[m] += d_raw;
                d_t[src] += d_raw;
            }
        }

        // s_m = a_dst . p_m, t_n = a_src . p_n
        let a = params.get(&layer_attn_name(layer, h))?;
        let (a_dst, a_src) = a.data.split_at(d);
        let a_dst = a_dst.to_vec();
        let a_src = a_src.to_vec();
        {
            let mut d_a = vec![0.0; 2 * d];
            for m in 0..n {
                let p_row = hc.p.row(m);
                for j in 0..d {
                    d_a[j] += d_s[m] * p_row[j];
                    d_a[d + j] += d_t[m] * p_row[j];
                }
                let d_p_row = d_p.row_mut(m);
                for j in 0..d {
                    d_p_row[j] += d_s[m] * a_dst[j] + d_t[m] * a_src[j];
                }
            }
            let a = params.get_mut(&layer_attn_name(layer, h))?;
            for (g, v) in a.grad.iter_mut().zip(&d_a) {
                *g += v;
            }
        }

        // p = W xd: dW[i][j] += sum_n d_p[n][i] xd[n][j]; d_xd[n][j] += sum_i d_p[n][i] W[i][j]
        let w = params.get(&layer_weight_name(layer, h))?;
        let w_data = w.data.clone();
        {
            let w_grad = &mut params.get_mut(&layer_weight_name(layer, h))?.grad;
            for node in 0..n {
                let d_p_row = d_p.row(node);
                let xd_row = cache.xd.row(node);
                for i in 0..d {
                    let dpi = d_p_row[i];
                    if dpi == 0.0 {
                        continue;
                    }
                    let w_grad_row = &mut w_grad[i * d..(i + 1) * d];
                    for (gw, xv) in w_grad_row.iter_mut().zip(xd_row) {
                        *gw += dpi * xv;
                    }
                }
            }
        }
        for node in 0..n {
            let d_p_row = d_p.row(node);
            let d_xd_row = d_xd.row_mut(node);
            for i in 0..d {
                let dpi = d_p_row[i];
                if dpi == 0.0 {
                    continue;
                }
                let w_row = &w_data[i * d..(i + 1) * d];
                for (dx, wv) in d_xd_row.iter_mut().zip(w_row) {
                    *dx += dpi * wv;
                }
            }
        }
    }

    // input dropout of this layer
    let mut d_x = Mat::zeros(n, d);
    for i in 0..n * d {
        d_x.data[i] = d_xd.data[i] * cache.x_mask.data[i];
    }
    Ok(d_x)
}

/// Full model forward. Input dropout applies once to the features; the
/// target's final representation is concatenated with its pre-dropout text
/// embedding, reduced by the fully connected head, then classified.
pub fn model_forward(
    graph: &ConversationGraph,
    features: &FeatureMatrix,
    params: &ParamStore,
    cfg: &GatConfig,
    mut training: Option<&mut DetRng>,
) -> Result<ModelOutput> {
    cfg.validate()?;
    let n = graph.nodes.len();
    if features.data.rows != n {
        return Err(Error::Shape(format!(
            "feature rows {} != node count {}",
            features.data.rows, n
        )));
    }
    if features.data.cols != cfg.dim {
        return Err(Error::Shape(format!(
            "feature dim {} != configured dim {}",
            features.data.cols, cfg.dim
        )));
    }
    let nbrs = Neighborhoods::new(graph);
    let x0 = features.data.clone();

    let (mut x, _input_mask) = match training.as_deref_mut() {
        Some(rng) => dropout(&x0, cfg.input_dropout, true, rng)?,
        None => {
            let mut mask = Mat::zeros(x0.rows, x0.cols);
            mask.data.fill(1.0);
            (x0.clone(), mask)
        }
    };

    let mut layers = Vec::with_capacity(cfg.num_layers);
    let mut attention = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let (x_next, cache) = layer_forward(&x, &nbrs, params, l, cfg, training.as_deref_mut())?;
        let mut per_head = Vec::with_capacity(cfg.heads);
        for hc in &cache.heads {
            let mut map = BTreeMap::new();
            for (m, members) in nbrs.members.iter().enumerate() {
                for (pos, &src) in members.iter().enumerate() {
                    map.insert((src, m), hc.alpha[m][pos]);
                }
            }
            per_head.push(map);
        }
        attention.push(per_head);
        layers.push(cache);
        x = x_next;
    }

    let d = cfg.dim;
    let target = graph.target_index;
    let mut z = Vec::with_capacity(2 * d);
    z.extend_from_slice(x.row(target));
    z.extend_from_slice(x0.row(target));

    let w_f = params.get("head.w_f")?;
    let b_f = params.get("head.b_f")?;
    let w_c = params.get("head.w_c")?;
    let b_c = params.get("head.b_c")?;
    if w_f.rows != d || w_f.cols != 2 * d || w_c.rows != 1 || w_c.cols != d {
        return Err(Error::Shape(format!(
            "head shapes ({}x{}, {}x{}) do not match dim {}",
            w_f.rows, w_f.cols, w_c.rows, w_c.cols, d
        )));
    }
    let mut h = vec![0.0; d];
    for (i, hv) in h.iter_mut().enumerate() {
        *hv = crate::nn::dot(w_f.row(i), &z) + b_f.data[i];
    }
    let u = crate::nn::dot(w_c.row(0), &h) + b_c.data[0];
    let prob = sigmoid_scalar(u);
    if !prob.is_finite() {
        return Err(Error::Numeric(format!("non-finite probability {}", prob)));
    }

    Ok(ModelOutput {
        prob,
        target_repr_z: z.clone(),
        hidden_h: h.clone(),
        attention,
        cache: Some(ModelCache {
            nbrs,
            x0,
            layers,
            target,
            z,
            h,
            prob,
        }),
    })
}

/// Binary cross-entropy with the probability clamped away from 0 and 1.
pub fn bce_loss(prob: f64, label: f64) -> Result<f64> {
    if label != 0.0 && label != 1.0 {
        return Err(Error::Argument(format!("label {} outside {{0, 1}}", label)));
    }
    let p = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    Ok(-(label * p.ln() + (1.0 - label) * (1.0 - p).ln()))
}

/// Arithmetic mean of per-sample BCE losses.
pub fn batch_loss(probs: &[f64], labels: &[f64]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Argument("batch_loss: empty batch".into()));
    }
    let mut total = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        total += bce_loss(p, y)?;
    }
    Ok(total / probs.len() as f64)
}

/// Accumulate (+=) gradients of the BCE loss at `label` into `params`.
/// Requires the cache produced by `model_forward`.
pub fn model_backward(
    output: &ModelOutput,
    label: f64,
    params: &mut ParamStore,
    cfg: &GatConfig,
) -> Result<()> {
    if label != 0.0 && label != 1.0 {
        return Err(Error::Argument(format!("label {} outside {{0, 1}}", label)));
    }
    let cache = output
        .cache
        .as_ref()
        .ok_or_else(|| Error::State("model_backward: forward cache missing".into()))?;
    let d = cfg.dim;

    // dL/du is (p - y) unless the clamp is active, where the loss is flat
    let d_u = if cache.prob <= PROB_CLAMP || cache.prob >= 1.0 - PROB_CLAMP {
        0.0
    } else {
        cache.prob - label
    };

    let w_c = params.get("head.w_c")?.data.clone();
    let w_f = params.get("head.w_f")?;
    let (w_f_rows, w_f_data) = (w_f.rows, w_f.data.clone());

    {
        let w_c_t = params.get_mut("head.w_c")?;
        for (g, hv) in w_c_t.grad.iter_mut().zip(&cache.h) {
            *g += d_u * hv;
        }
    }
    params.get_mut("head.b_c")?.grad[0] += d_u;

    let d_h: Vec<f64> = w_c.iter().map(|w| w * d_u).collect();
    {
        let w_f_t = params.get_mut("head.w_f")?;
        for i in 0..w_f_rows {
            let row = w_f_t.grad_row_mut(i);
            for (g, zv) in row.iter_mut().zip(&cache.z) {
                *g += d_h[i] * zv;
            }
        }
    }
    {
        let b_f_t = params.get_mut("head.b_f")?;
        for (g, dh) in b_f_t.grad.iter_mut().zip(&d_h) {
            *g += dh;
        }
    }

    let mut d_z = vec![0.0; 2 * d];
    for i in 0..w_f_rows {
        let row = &w_f_data[i * 2 * d..(i + 1) * 2 * d];
        for (dz, wv) in d_z.iter_mut().zip(row) {
            *dz += d_h[i] * wv;
        }
    }

    // first half of z is the target's final-layer representation; the second
    // half is the raw text embedding, which has no parameters upstream
    let mut grad = Mat::zeros(cache.x0.rows, d);
    grad.row_mut(cache.target).copy_from_slice(&d_z[..d]);

    for (l, layer_cache) in cache.layers.iter().enumerate().rev() {
        grad = layer_backward(&grad, layer_cache, &cache.nbrs, params, l, cfg)?;
    }
    Ok(())
}

/// Heads-averaged attention for one (1-based) layer. Per destination, the
/// stored-edge weights plus the self-loop weight sum to one.
pub fn extract_attention(output: &ModelOutput, layer: usize) -> Result<AttentionMap> {
    if layer < 1 || layer > output.attention.len() {
        return Err(Error::Argument(format!(
            "layer {} outside 1..={}",
            layer,
            output.attention.len()
        )));
    }
    let per_head = &output.attention[layer - 1];
    let heads = per_head.len() as f64;
    let mut edges: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut self_loops: BTreeMap<usize, f64> = BTreeMap::new();
    for head in per_head {
        for (&(src, dst), &w) in head {
            if src == dst {
                *self_loops.entry(src).or_insert(0.0) += w / heads;
            } else {
                *edges.entry((src, dst)).or_insert(0.0) += w / heads;
            }
        }
    }
    Ok(AttentionMap { edges, self_loops })
}

#[derive(Serialize)]
struct AttentionEdgeOut<'a> {
    src: &'a str,
    dst: &'a str,
    weight: f64,
}

#[derive(Serialize)]
struct SelfLoopOut<'a> {
    node: &'a str,
    weight: f64,
}

#[derive(Serialize)]
struct AttentionOut<'a> {
    layer: usize,
    edges: Vec<AttentionEdgeOut<'a>>,
    self_loops: Vec<SelfLoopOut<'a>>,
}

/// JSON rendering of an attention map with node ids resolved.
pub fn attention_to_json(
    graph: &ConversationGraph,
    map: &AttentionMap,
    layer: usize,
) -> String {
    let edges = map
        .edges
        .iter()
        .map(|(&(s, d), &w)| AttentionEdgeOut {
            src: &graph.nodes[s],
            dst: &graph.nodes[d],
            weight: w,
        })
        .collect();
    let self_loops = map
        .self_loops
        .iter()
        .map(|(&n, &w)| SelfLoopOut {
            node: &graph.nodes[n],
            weight: w,
        })
        .collect();
    serde_json::to_string_pretty(&AttentionOut {
        layer,
        edges,
        self_loops,
    })
    .expect("attention serialization cannot fail")
}
