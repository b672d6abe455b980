//! Vector-quantized graph autoencoder: two message-passing layers, a
//! nearest-codeword quantizer, and linear feature and edge decoders.

use std::collections::HashSet;
use std::rc::Rc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::bigraph::{Aggregator, BipartiteGraph, FEATURE_DIM};
use crate::diffcore::{squared_distance, DiffError, Gradients, Tape, Tensor, Var};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width.
    pub d: usize,
    /// Codebook size.
    pub k: usize,
    /// Edge-embedding width of the edge decoder.
    pub edge_dim: usize,
    /// Commitment weight.
    pub alpha: f64,
    pub aggregator: Aggregator,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 64,
            k: 128,
            edge_dim: 64,
            alpha: 0.25,
            aggregator: Aggregator::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub w_self1: Tensor,
    pub w_nbr1: Tensor,
    pub b1: Tensor,
    pub w_self2: Tensor,
    pub w_nbr2: Tensor,
    pub b2: Tensor,
}

impl EncoderParams {
    pub fn init(d: usize, rng: &mut Rng) -> Self {
        Self {
            w_self1: Tensor::glorot(FEATURE_DIM, d, rng),
            w_nbr1: Tensor::glorot(FEATURE_DIM, d, rng),
            b1: Tensor::zeros(1, d),
            w_self2: Tensor::glorot(d, d, rng),
            w_nbr2: Tensor::glorot(d, d, rng),
            b2: Tensor::zeros(1, d),
        }
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            w_self1: Tensor::zeros(FEATURE_DIM, d),
            w_nbr1: Tensor::zeros(FEATURE_DIM, d),
            b1: Tensor::zeros(1, d),
            w_self2: Tensor::zeros(d, d),
            w_nbr2: Tensor::zeros(d, d),
            b2: Tensor::zeros(1, d),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 6] {
        [&self.w_self1, &self.w_nbr1, &self.b1, &self.w_self2, &self.w_nbr2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.w_self1,
            &mut self.w_nbr1,
            &mut self.b1,
            &mut self.w_self2,
            &mut self.w_nbr2,
            &mut self.b2,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// `k x d`.
    pub codewords: Tensor,
    /// Assignments counted since the last reset.
    pub usage: Vec<u64>,
}

impl Codebook {
    pub fn new(codewords: Tensor) -> Self {
        let k = codewords.rows();
        assert!(k >= 2, "codebook needs at least two codes");
        Self { codewords, usage: vec![0; k] }
    }

    pub fn k(&self) -> usize {
        self.codewords.rows()
    }

    /// Codewords drawn from the rows of `h` (with replacement when `h` has
    /// fewer rows than codes), each jittered by uniform noise scaled to the
    /// rows' RMS magnitude.
    pub fn from_samples(h: &Tensor, k: usize, rng: &mut Rng) -> Self {
        assert!(h.rows() > 0, "codebook init needs at least one embedding");
        let d = h.cols();
        let rms = (h.data().iter().map(|v| v * v).sum::<f64>() / h.len() as f64).sqrt();
        let noise = 1e-2 * rms.max(1e-6);
        let picks: Vec<usize> = if h.rows() >= k {
            rand::seq::index::sample(rng, h.rows(), k).into_vec()
        } else {
            (0..k).map(|_| rng.gen_range(0..h.rows())).collect()
        };
        let mut cw = Tensor::zeros(k, d);
        for (c, &r) in picks.iter().enumerate() {
            for (o, v) in cw.row_mut(c).iter_mut().zip(h.row(r)) {
                *o = v + rng.gen_range(-noise..=noise);
            }
        }
        Self::new(cw)
    }

    /// Replaces every code with zero `usage` by a random row of `recent`.
    /// Returns how many codes were reseeded.
    pub fn reseed_dead(&mut self, recent: &[Vec<f64>], rng: &mut Rng) -> usize {
        if recent.is_empty() {
            return 0;
        }
        let mut count = 0;
        for c in 0..self.k() {
            if self.usage[c] == 0 {
                let pick = &recent[rng.gen_range(0..recent.len())];
                self.codewords.row_mut(c).copy_from_slice(pick);
                count += 1;
            }
        }
        count
    }

    pub fn dead_fraction(&self) -> f64 {
        self.usage.iter().filter(|&&u| u == 0).count() as f64 / self.k() as f64
    }

    pub fn reset_usage(&mut self) {
        self.usage.iter_mut().for_each(|u| *u = 0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub w_feat: Tensor,
    pub b_feat: Tensor,
    pub w_edge: Tensor,
    pub b_edge: Tensor,
}

impl DecoderParams {
    pub fn init(d: usize, edge_dim: usize, rng: &mut Rng) -> Self {
        Self {
            w_feat: Tensor::glorot(d, FEATURE_DIM, rng),
            b_feat: Tensor::zeros(1, FEATURE_DIM),
            w_edge: Tensor::glorot(d, edge_dim, rng),
            b_edge: Tensor::zeros(1, edge_dim),
        }
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.w_feat, &self.b_feat, &self.w_edge, &self.b_edge]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w_feat, &mut self.b_feat, &mut self.w_edge, &mut self.b_edge]
    }
}

/// Per-epoch or per-step loss terms. `commitment` already includes `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub edge_recon: f64,
    pub feat_recon: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub total: f64,
    pub alpha: f64,
}

impl LossBreakdown {
    pub fn from_parts(edge_recon: f64, feat_recon: f64, codebook: f64, commitment: f64, alpha: f64) -> Self {
        Self {
            edge_recon,
            feat_recon,
            codebook,
            commitment,
            total: edge_recon + feat_recon + codebook + commitment,
            alpha,
        }
    }

    pub fn parts_sum(&self) -> f64 {
        self.edge_recon + self.feat_recon + self.codebook + self.commitment
    }

    /// Term-wise mean; `total` is recomputed from the averaged parts.
    pub fn mean(items: &[LossBreakdown]) -> Self {
        if items.is_empty() {
            return Self::default();
        }
        let n = items.len() as f64;
        let avg = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self::from_parts(
            avg(|l| l.edge_recon),
            avg(|l| l.feat_recon),
            avg(|l| l.codebook),
            avg(|l| l.commitment),
            items[0].alpha,
        )
    }

    pub fn is_finite(&self) -> bool {
        [self.edge_recon, self.feat_recon, self.codebook, self.commitment, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// A graph prepared for the model: feature tensor plus message plan.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub n_constraints: usize,
    pub n_variables: usize,
    pub features: Tensor,
    pub msg_src: Rc<[usize]>,
    pub msg_dst: Rc<[usize]>,
    pub msg_weight: Rc<[f64]>,
    /// `(constraint node, variable node)` pairs of the true edges.
    pub edges: Vec<(usize, usize)>,
}

impl GraphInput {
    pub fn new(graph: &BipartiteGraph, aggregator: Aggregator) -> Self {
        let plan = graph.message_plan(aggregator);
        Self {
            n_constraints: graph.n_constraints,
            n_variables: graph.n_variables,
            features: Tensor::from_vec(graph.n_nodes(), FEATURE_DIM, graph.node_features.clone()),
            msg_src: plan.src.into(),
            msg_dst: plan.dst.into(),
            msg_weight: plan.weight.into(),
            edges: graph.edges.iter().map(|e| (e.constraint, e.variable)).collect(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_constraints + self.n_variables
    }
}

/// Node pairs scored by the edge loss with their 0/1 targets.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSample {
    pub left: Rc<[usize]>,
    pub right: Rc<[usize]>,
    pub targets: Rc<[f64]>,
}

impl EdgeSample {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// All true edges plus `ratio x |E|` uniformly drawn constraint/variable
/// non-edges (with replacement). Fewer negatives are drawn only when the
/// graph is complete bipartite.
pub fn sample_edges(input: &GraphInput, ratio: f64, rng: &mut Rng) -> EdgeSample {
    let m = input.n_constraints;
    let n = input.n_variables;
    let n_edges = input.edges.len();
    let mut left: Vec<usize> = input.edges.iter().map(|e| e.0).collect();
    let mut right: Vec<usize> = input.edges.iter().map(|e| e.1).collect();
    let mut targets = vec![1.0; n_edges];
    let non_edges = m * n - n_edges.min(m * n);
    if non_edges > 0 && n_edges > 0 {
        let existing: HashSet<(usize, usize)> = input.edges.iter().copied().collect();
        let want = (ratio * n_edges as f64).round() as usize;
        let mut drawn = 0;
        while drawn < want {
            let c = rng.gen_range(0..m);
            let v = m + rng.gen_range(0..n);
            if existing.contains(&(c, v)) {
                continue;
            }
            left.push(c);
            right.push(v);
            targets.push(0.0);
            drawn += 1;
        }
    }
    EdgeSample {
        left: left.into(),
        right: right.into(),
        targets: targets.into(),
    }
}

/// Index of the nearest codeword for every row of `h`; ties go to the lowest
/// index.
pub fn assign_codes(h: &Tensor, codewords: &Tensor) -> Vec<usize> {
    (0..h.rows())
        .map(|i| {
            let row = h.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..codewords.rows() {
                let d = squared_distance(row, codewords.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Tape handles for every model parameter.
#[derive(Debug, Clone, Copy)]
pub struct ModelVars {
    pub encoder: [Var; 6],
    pub codebook: Var,
    pub decoder: [Var; 4],
}

impl ModelVars {
    pub fn all(&self) -> Vec<Var> {
        let mut v = self.encoder.to_vec();
        v.push(self.codebook);
        v.extend_from_slice(&self.decoder);
        v
    }
}

/// Quantizer outputs on a tape.
#[derive(Debug, Clone)]
pub struct Quantized {
    pub codes: Vec<usize>,
    /// Gathered codewords (gradient flows to the codebook).
    pub cw: Var,
    /// Straight-through codewords `h + sg(cw - h)`.
    pub cw_st: Var,
    pub codebook_loss: Var,
    /// Already scaled by `alpha`.
    pub commitment_loss: Var,
}

/// Loss handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub h: Var,
    pub quantized: Quantized,
    pub feat_hat: Var,
    pub edge_emb: Var,
    pub edge_loss: Var,
    pub feat_loss: Var,
    pub total: Var,
}

impl ForwardPass {
    pub fn breakdown(&self, tape: &Tape, alpha: f64) -> LossBreakdown {
        LossBreakdown::from_parts(
            tape.value(self.edge_loss).item(),
            tape.value(self.feat_loss).item(),
            tape.value(self.quantized.codebook_loss).item(),
            tape.value(self.quantized.commitment_loss).item(),
            alpha,
        )
    }
}

/// Two message-passing layers; relu after the first only.
pub fn encode_on_tape(tape: &mut Tape, enc: &[Var; 6], input: &GraphInput) -> Var {
    let x = tape.constant(input.features.clone());
    let h1 = layer(tape, x, enc[0], enc[1], enc[2], input);
    let h1 = tape.relu(h1);
    layer(tape, h1, enc[3], enc[4], enc[5], input)
}

fn layer(tape: &mut Tape, h: Var, w_self: Var, w_nbr: Var, bias: Var, input: &GraphInput) -> Var {
    let own = tape.matmul(h, w_self);
    let msgs = tape.gather_rows(h, input.msg_src.clone());
    let msgs = tape.scale_rows(msgs, input.msg_weight.clone());
    let agg = tape.segment_sum(msgs, input.msg_dst.clone(), input.n_nodes());
    let nbr = tape.matmul(agg, w_nbr);
    let s = tape.add(own, nbr);
    tape.add_row(s, bias)
}

/// Nearest-code assignment with the codebook and commitment terms and the
/// straight-through output.
pub fn quantize_on_tape(tape: &mut Tape, h: Var, codebook: Var, alpha: f64) -> Quantized {
    let codes = assign_codes(tape.value(h), tape.value(codebook));
    let cw = tape.gather_rows(codebook, codes.clone().into());
    let h_sg = tape.stop_gradient(h);
    let codebook_loss = tape.mse(h_sg, cw);
    let cw_sg = tape.stop_gradient(cw);
    let commit = tape.mse(h, cw_sg);
    let commitment_loss = tape.scale(commit, alpha);
    let delta = tape.sub(cw, h);
    let delta = tape.stop_gradient(delta);
    let cw_st = tape.add(h, delta);
    Quantized {
        codes,
        cw,
        cw_st,
        codebook_loss,
        commitment_loss,
    }
}

/// Edge logits `z_l . z_r` for the sampled pairs.
pub fn edge_logits(tape: &mut Tape, z: Var, sample: &EdgeSample) -> Var {
    let zl = tape.gather_rows(z, sample.left.clone());
    let zr = tape.gather_rows(z, sample.right.clone());
    let prod = tape.mul(zl, zr);
    tape.row_sum(prod)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VqGae {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub codebook: Codebook,
    pub decoder: DecoderParams,
}

/// Parameter names in [`VqGae::params`] order.
pub const PARAM_NAMES: [&str; 11] = [
    "encoder.w_self1",
    "encoder.w_nbr1",
    "encoder.b1",
    "encoder.w_self2",
    "encoder.w_nbr2",
    "encoder.b2",
    "codebook",
    "decoder.w_feat",
    "decoder.b_feat",
    "decoder.w_edge",
    "decoder.b_edge",
];

impl VqGae {
    /// Random encoder/decoders; the codebook is a placeholder until
    /// [`VqGae::init_codebook`] sees real embeddings.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Self {
        let encoder = EncoderParams::init(config.d, rng);
        let decoder = DecoderParams::init(config.d, config.edge_dim, rng);
        let codebook = Codebook::new(Tensor::uniform(config.k, config.d, 1.0, rng));
        Self {
            config,
            encoder,
            codebook,
            decoder,
        }
    }

    pub fn init_codebook(&mut self, input: &GraphInput, rng: &mut Rng) {
        let h = self.encode(input);
        self.codebook = Codebook::from_samples(&h, self.config.k, rng);
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.encoder.tensors().to_vec();
        v.push(&self.codebook.codewords);
        v.extend(self.decoder.tensors());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.encoder.tensors_mut().into_iter().collect();
        v.push(&mut self.codebook.codewords);
        v.extend(self.decoder.tensors_mut());
        v
    }

    pub fn load_vars(&self, tape: &mut Tape) -> ModelVars {
        let e = self.encoder.tensors();
        let d = self.decoder.tensors();
        ModelVars {
            encoder: e.map(|t| tape.leaf(t.clone())),
            codebook: tape.leaf(self.codebook.codewords.clone()),
            decoder: d.map(|t| tape.leaf(t.clone())),
        }
    }

    pub fn grads(&self, grads: &mut Gradients, vars: &ModelVars) -> Vec<Tensor> {
        vars.all().into_iter().map(|v| grads.take(v)).collect()
    }

    /// Full forward pass with loss terms recorded on `tape`.
    pub fn forward(&self, tape: &mut Tape, vars: &ModelVars, input: &GraphInput, sample: &EdgeSample) -> ForwardPass {
        let h = encode_on_tape(tape, &vars.encoder, input);
        let quantized = quantize_on_tape(tape, h, vars.codebook, self.config.alpha);
        let x = tape.constant(input.features.clone());
        let fh = tape.matmul(quantized.cw_st, vars.decoder[0]);
        let feat_hat = tape.add_row(fh, vars.decoder[1]);
        let feat_loss = tape.mse(feat_hat, x);
        let z = tape.matmul(quantized.cw_st, vars.decoder[2]);
        let edge_emb = tape.add_row(z, vars.decoder[3]);
        let edge_loss = if sample.is_empty() {
            log::warn!("graph has no edges; edge reconstruction term is zero");
            tape.constant(Tensor::scalar(0.0))
        } else {
            let logits = edge_logits(tape, edge_emb, sample);
            tape.bce_with_logits(logits, sample.targets.clone())
        };
        let a = tape.add(edge_loss, feat_loss);
        let b = tape.add(a, quantized.codebook_loss);
        let total = tape.add(b, quantized.commitment_loss);
        ForwardPass {
            h,
            quantized,
            feat_hat,
            edge_emb,
            edge_loss,
            feat_loss,
            total,
        }
    }

    /// Loss terms for one graph and edge sample, plus gradients for every
    /// parameter in [`VqGae::params`] order.
    pub fn loss_and_grads(
        &self,
        input: &GraphInput,
        sample: &EdgeSample,
    ) -> Result<(LossBreakdown, Vec<Tensor>, Vec<usize>, Tensor), DiffError> {
        let mut tape = Tape::new();
        let vars = self.load_vars(&mut tape);
        let fwd = self.forward(&mut tape, &vars, input, sample);
        let breakdown = fwd.breakdown(&tape, self.config.alpha);
        let mut grads = tape.backward(fwd.total)?;
        let h = tape.value(fwd.h).clone();
        Ok((breakdown, self.grads(&mut grads, &vars), fwd.quantized.codes, h))
    }

    pub fn total_loss(&self, input: &GraphInput, sample: &EdgeSample) -> LossBreakdown {
        let mut tape = Tape::new();
        let vars = self.load_vars(&mut tape);
        self.forward(&mut tape, &vars, input, sample).breakdown(&tape, self.config.alpha)
    }

    /// Encoder output `H` (`N x d`).
    pub fn encode(&self, input: &GraphInput) -> Tensor {
        let mut tape = Tape::new();
        let enc = self.encoder.tensors().map(|t| tape.constant(t.clone()));
        let h = encode_on_tape(&mut tape, &enc, input);
        tape.value(h).clone()
    }

    /// Codes and the matching codeword rows.
    pub fn quantize(&self, h: &Tensor) -> (Vec<usize>, Tensor) {
        let codes = assign_codes(h, &self.codebook.codewords);
        let mut cw = Tensor::zeros(h.rows(), h.cols());
        for (i, &c) in codes.iter().enumerate() {
            cw.row_mut(i).copy_from_slice(self.codebook.codewords.row(c));
        }
        (codes, cw)
    }

    /// Edge embeddings `z = cw W + b` for codeword rows `cw`.
    pub fn edge_embeddings(&self, cw: &Tensor) -> Tensor {
        let mut z = cw.matmul(&self.decoder.w_edge);
        for r in 0..z.rows() {
            for (x, b) in z.row_mut(r).iter_mut().zip(self.decoder.b_edge.data()) {
                *x += b;
            }
        }
        z
    }
}

/// Balanced all-pairs edge BCE: half the mean over true edges plus half the
/// mean over all constraint/variable non-edges. Equals the expectation of
/// the sampled loss at ratio 1.
pub fn dense_edge_bce(z: &Tensor, input: &GraphInput) -> f64 {
    let m = input.n_constraints;
    let edges: HashSet<(usize, usize)> = input.edges.iter().copied().collect();
    let bce = |logit: f64, y: f64| logit.max(0.0) - y * logit + (-logit.abs()).exp().ln_1p();
    let (mut pos, mut n_pos, mut neg, mut n_neg) = (0.0, 0usize, 0.0, 0usize);
    for c in 0..m {
        for v in m..input.n_nodes() {
            let s: f64 = z.row(c).iter().zip(z.row(v)).map(|(a, b)| a * b).sum();
            if edges.contains(&(c, v)) {
                pos += bce(s, 1.0);
                n_pos += 1;
            } else {
                neg += bce(s, 0.0);
                n_neg += 1;
            }
        }
    }
    let mp = if n_pos > 0 { pos / n_pos as f64 } else { 0.0 };
    if n_neg == 0 {
        return mp;
    }
    0.5 * mp + 0.5 * neg / n_neg as f64
}

/// Dense squared reconstruction `mean_ij (A_ij - z_i . z_j)^2` over all node
/// pairs, with `A` the binary symmetric adjacency. Only for small graphs.
///
/// # Panics
/// Panics when the graph has more than 200 nodes.
pub fn dense_edge_mse(z: &Tensor, input: &GraphInput) -> f64 {
    let n = input.n_nodes();
    assert!(n <= 200, "dense edge oracle limited to 200 nodes");
    let mut a = vec![0.0; n * n];
    for &(c, v) in &input.edges {
        a[c * n + v] = 1.0;
        a[v * n + c] = 1.0;
    }
    let zz = z.matmul_t(z);
    a.iter().zip(zz.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / (n * n) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigraph::{apply_feature_scale, fit_feature_scale, to_bipartite};
    use crate::diffcore::check::max_gradient_error;
    use crate::diffcore::Adam;
    use crate::geninst::vertex_cover;
    use crate::mip::{ConstraintDef, ConstraintSense, MipInstance, ObjectiveSense, VariableDef};
    use crate::seed::rng_from_seed;

    fn triangle_input() -> GraphInput {
        let g = to_bipartite(&vertex_cover("t", 3, &[(0, 1), (0, 2), (1, 2)]));
        let g = apply_feature_scale(&g, &fit_feature_scale(std::slice::from_ref(&g)));
        GraphInput::new(&g, Aggregator::Normalized)
    }

    fn pair_input() -> GraphInput {
        let mut m = MipInstance::new("pair", ObjectiveSense::Minimize);
        let x = m.add_variable(VariableDef::binary("x", 1.0));
        m.add_constraint(ConstraintDef::new("c", ConstraintSense::Ge, 1.0), &[(x, 1.0)]);
        GraphInput::new(&to_bipartite(&m), Aggregator::Mean)
    }

    #[test]
    fn zero_encoder_gives_zero_h() {
        let enc = EncoderParams::zeros(4);
        let mut rng = rng_from_seed(0);
        let mut model = VqGae::new(ModelConfig { d: 4, k: 2, edge_dim: 4, ..Default::default() }, &mut rng);
        model.encoder = enc;
        assert!(model.encode(&triangle_input()).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_node_propagation_by_hand() {
        // Identity-like weights at d = 4: first four feature columns pass
        // through, so h_c = relu(x_c + x_v[..4]) etc.
        let input = pair_input();
        let d = 4;
        let mut eye = Tensor::zeros(FEATURE_DIM, d);
        for i in 0..d {
            eye.set(i, i, 1.0);
        }
        let mut eye_d = Tensor::zeros(d, d);
        for i in 0..d {
            eye_d.set(i, i, 1.0);
        }
        let enc = EncoderParams {
            w_self1: eye.clone(),
            w_nbr1: eye.clone(),
            b1: Tensor::zeros(1, d),
            w_self2: eye_d.clone(),
            w_nbr2: eye_d,
            b2: Tensor::zeros(1, d),
        };
        let mut rng = rng_from_seed(0);
        let mut model = VqGae::new(ModelConfig { d, k: 2, edge_dim: d, ..Default::default() }, &mut rng);
        model.encoder = enc;
        let h = model.encode(&input);
        // Constraint [0,1,0,1], variable has zeros in columns 0..4.
        // Layer 1: both nodes -> [0,1,0,1]. Layer 2: both -> [0,2,0,2].
        assert_eq!(h.row(0), &[0.0, 2.0, 0.0, 2.0]);
        assert_eq!(h.row(1), &[0.0, 2.0, 0.0, 2.0]);
    }

    #[test]
    fn quantize_hand_case() {
        let mut tape = Tape::new();
        let h = tape.leaf(Tensor::from_vec(1, 2, vec![1.0, 1.0]));
        let cb = tape.leaf(Tensor::from_rows(&[vec![0.0, 0.0], vec![10.0, 10.0]]));
        let q = quantize_on_tape(&mut tape, h, cb, 0.25);
        assert_eq!(q.codes, vec![0]);
        assert_eq!(tape.value(q.codebook_loss).item(), 2.0);
        assert_eq!(tape.value(q.commitment_loss).item(), 0.5);
    }

    #[test]
    fn ties_go_to_lowest_code() {
        let h = Tensor::from_vec(1, 1, vec![0.0]);
        let cw = Tensor::from_rows(&[vec![1.0], vec![-1.0]]);
        assert_eq!(assign_codes(&h, &cw), vec![0]);
    }

    #[test]
    fn fixed_point_has_zero_vq_loss() {
        let cwv = Tensor::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![3.0, 3.0]]);
        let hv = Tensor::from_rows(&[vec![3.0, 3.0], vec![1.0, 2.0]]);
        let mut tape = Tape::new();
        let h = tape.leaf(hv);
        let cb = tape.leaf(cwv);
        let q = quantize_on_tape(&mut tape, h, cb, 0.25);
        assert_eq!(q.codes, vec![2, 0]);
        assert_eq!(tape.value(q.codebook_loss).item(), 0.0);
        assert_eq!(tape.value(q.commitment_loss).item(), 0.0);
    }

    #[test]
    fn codebook_gradient_only_on_used_codes() {
        let mut tape = Tape::new();
        let hv = Tensor::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]]);
        let cwv = Tensor::from_rows(&[vec![0.0, 0.0], vec![10.0, 10.0], vec![0.5, 1.5]]);
        let h = tape.leaf(hv.clone());
        let cb = tape.leaf(cwv.clone());
        let q = quantize_on_tape(&mut tape, h, cb, 0.25);
        let g = tape.backward(q.codebook_loss).unwrap();
        let gc = g.wrt(cb);
        // Both rows pick code 2; unused codes 0 and 1 get exact zeros.
        assert_eq!(q.codes, vec![2, 2]);
        assert_eq!(gc.row(0), &[0.0, 0.0]);
        assert_eq!(gc.row(1), &[0.0, 0.0]);
        let expected = [(2.0 / 2.0) * ((0.5 - 1.0) + (0.5 - 0.0)), (2.0 / 2.0) * ((1.5 - 1.0) + (1.5 - 2.0))];
        assert!((gc.get(2, 0) - expected[0]).abs() < 1e-15);
        assert!((gc.get(2, 1) - expected[1]).abs() < 1e-15);
        assert_eq!(g.wrt(h).data(), &[0.0; 4]);
    }

    #[test]
    fn breakdown_sums_and_alpha_zero() {
        let input = triangle_input();
        let mut rng = rng_from_seed(5);
        let mut model = VqGae::new(ModelConfig { d: 8, k: 4, edge_dim: 8, ..Default::default() }, &mut rng);
        model.init_codebook(&input, &mut rng);
        let sample = sample_edges(&input, 1.0, &mut rng);
        let l = model.total_loss(&input, &sample);
        assert!((l.total - l.parts_sum()).abs() <= 1e-10 * l.total.abs());
        model.config.alpha = 0.0;
        let l0 = model.total_loss(&input, &sample);
        assert_eq!(l0.commitment, 0.0);
        assert_eq!(l0.total, l0.edge_recon + l0.feat_recon + l0.codebook);
    }

    #[test]
    fn random_init_edge_loss_near_ln2() {
        let input = triangle_input();
        let mut rng = rng_from_seed(1);
        let mut model = VqGae::new(ModelConfig { d: 8, k: 4, edge_dim: 8, ..Default::default() }, &mut rng);
        model.decoder.w_edge = model.decoder.w_edge.map(|v| v * 1e-4);
        model.init_codebook(&input, &mut rng);
        let sample = sample_edges(&input, 1.0, &mut rng);
        let l = model.total_loss(&input, &sample);
        assert!((l.edge_recon - std::f64::consts::LN_2).abs() < 1e-3, "{}", l.edge_recon);
    }

    #[test]
    fn one_step_decreases_loss() {
        let input = pair_input();
        let mut rng = rng_from_seed(11);
        let mut model = VqGae::new(ModelConfig { d: 8, k: 4, edge_dim: 8, ..Default::default() }, &mut rng);
        model.init_codebook(&input, &mut rng);
        let sample = sample_edges(&input, 1.0, &mut rng);
        let (before, grads, _, _) = model.loss_and_grads(&input, &sample).unwrap();
        let mut opt = Adam::new(1e-3, &model.params());
        opt.step(&mut model.params_mut(), &grads).unwrap();
        let after = model.total_loss(&input, &sample);
        assert!(after.total < before.total);
    }

    #[test]
    fn dense_matches_sampled_expectation() {
        let input = triangle_input();
        let mut rng = rng_from_seed(2);
        let mut model = VqGae::new(ModelConfig { d: 8, k: 4, edge_dim: 8, ..Default::default() }, &mut rng);
        model.init_codebook(&input, &mut rng);
        let h = model.encode(&input);
        let (_, cw) = model.quantize(&h);
        let z = model.edge_embeddings(&cw);
        let dense = dense_edge_bce(&z, &input);
        let mut acc = 0.0;
        let runs = 1000;
        for _ in 0..runs {
            let s = sample_edges(&input, 1.0, &mut rng);
            acc += model.total_loss(&input, &s).edge_recon;
        }
        assert!((acc / runs as f64 - dense).abs() < 0.02 * dense.max(0.1));
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let input = pair_input();
        let mut rng = rng_from_seed(3);
        let mut model = VqGae::new(ModelConfig { d: 8, k: 4, edge_dim: 8, ..Default::default() }, &mut rng);
        model.init_codebook(&input, &mut rng);
        let sample = sample_edges(&input, 1.0, &mut rng);
        let params: Vec<Tensor> = model.params().into_iter().cloned().collect();
        let err = max_gradient_error(&params, 1e-5, |tape, v| {
            let vars = ModelVars {
                encoder: [v[0], v[1], v[2], v[3], v[4], v[5]],
                codebook: v[6],
                decoder: [v[7], v[8], v[9], v[10]],
            };
            model.forward(tape, &vars, &input, &sample).total
        });
        assert!(err < 1e-4, "{err}");
    }
}
