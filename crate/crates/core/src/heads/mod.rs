//! Supervised heads on top of a pre-trained model: integrality-gap
//! regression with pseudo-cut emission, and variable guidance with triplet
//! metric learning and hint selection.

mod mlp;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::rc::Rc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mlp::Mlp;

use crate::diffcore::{logistic, squared_distance, Adam, DiffError, Tape, Tensor, Var};
use crate::mip::{add_pseudo_cut, MipInstance, ModelError, ObjectiveSense};
use crate::minisolve::{solve_lp, LpStatus, MipSolution};
use crate::seed::{rng_for, Rng};
use crate::trainer::Checkpoint;
use crate::vqgae::{encode_on_tape, quantize_on_tape, Codebook, GraphInput, VqGae};

pub const TRIPLET_MARGIN: f64 = 2.0;
pub const POSITIVES_PER_ANCHOR: usize = 4;
pub const MAX_TRIPLETS: usize = 10_000;
/// Pool size the guidance labels are defined against.
pub const GUIDANCE_POOL: usize = 5;

#[derive(Debug, Error)]
pub enum HeadError {
    #[error("empty fine-tuning corpus")]
    EmptyCorpus,
    #[error("checkpoint has no {0} head")]
    MissingHead(&'static str),
    #[error("LP relaxation not optimal ({0:?})")]
    Lp(LpStatus),
    #[error("LP relaxation objective is zero")]
    ZeroLp,
    #[error("{0}")]
    Model(#[from] ModelError),
    #[error("numeric failure on `{instance}`: {source}")]
    Numeric { instance: String, source: DiffError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Discard pre-trained weights and start from a random model.
    pub from_scratch: bool,
}

impl FinetuneConfig {
    pub fn gap() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-4,
            hidden: 32,
            seed: 0,
            from_scratch: false,
        }
    }

    pub fn guidance() -> Self {
        Self {
            epochs: 25,
            learning_rate: 1e-5,
            ..Self::gap()
        }
    }
}

/// Closed interval of labels seen in training for one objective sense.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelHull {
    pub lo: f64,
    pub hi: f64,
}

impl LabelHull {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        values.fold(None, |acc, v| match acc {
            None => Some(Self { lo: v, hi: v }),
            Some(h) => Some(Self {
                lo: h.lo.min(v),
                hi: h.hi.max(v),
            }),
        })
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapMeta {
    pub hidden: usize,
    pub min_hull: Option<LabelHull>,
    pub max_hull: Option<LabelHull>,
}

/// Gap regressor on the mean codeword. Output is `1 + softplus(raw)` for
/// minimization and `1 - softplus(raw)` for maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct GapHead {
    pub mlp: Mlp,
    pub meta: GapMeta,
}

const GAP_TENSORS: [&str; 4] = ["gap.w1", "gap.b1", "gap.w2", "gap.b2"];
const GUIDE_TENSORS: [&str; 4] = ["guide.w1", "guide.b1", "guide.w2", "guide.b2"];

impl GapHead {
    pub const TENSOR_NAMES: [&'static str; 4] = GAP_TENSORS;

    pub fn meta(&self) -> GapMeta {
        self.meta
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        GAP_TENSORS.iter().map(|n| n.to_string()).zip(self.mlp.tensors()).collect()
    }

    pub fn from_parts(meta: GapMeta, tensors: Vec<Tensor>) -> Option<Self> {
        let mlp = Mlp::from_tensors(tensors)?;
        (mlp.w1.cols() == meta.hidden).then_some(Self { mlp, meta })
    }

    fn hull(&self, sense: ObjectiveSense) -> Option<LabelHull> {
        match sense {
            ObjectiveSense::Minimize => self.meta.min_hull,
            ObjectiveSense::Maximize => self.meta.max_hull,
        }
    }

    /// Unclamped prediction from a `1 x d` readout.
    pub fn raw_predict(&self, readout: &Tensor, sense: ObjectiveSense) -> f64 {
        let raw = self.mlp.apply(readout)[0];
        1.0 + sense_sign(sense) * softplus(raw)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceMeta {
    pub hidden: usize,
}

/// Per-variable membership probability from the variable's codeword.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceHead {
    pub mlp: Mlp,
    pub meta: GuidanceMeta,
}

impl GuidanceHead {
    pub const TENSOR_NAMES: [&'static str; 4] = GUIDE_TENSORS;

    pub fn meta(&self) -> GuidanceMeta {
        self.meta
    }

    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        GUIDE_TENSORS.iter().map(|n| n.to_string()).zip(self.mlp.tensors()).collect()
    }

    pub fn from_parts(meta: GuidanceMeta, tensors: Vec<Tensor>) -> Option<Self> {
        let mlp = Mlp::from_tensors(tensors)?;
        (mlp.w1.cols() == meta.hidden).then_some(Self { mlp, meta })
    }
}

fn sense_sign(sense: ObjectiveSense) -> f64 {
    match sense {
        ObjectiveSense::Minimize => 1.0,
        ObjectiveSense::Maximize => -1.0,
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn inverse_softplus(y: f64) -> f64 {
    let y = y.max(1e-6);
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

/// Random model with the checkpoint's shapes and scaling; used for the
/// from-scratch ablation.
fn scratch_model(ck: &Checkpoint, inputs: &[GraphInput], seed: u64) -> VqGae {
    let mut rng = rng_for(seed, "finetune/scratch");
    let mut model = VqGae::new(ck.config.model.clone(), &mut rng);
    let k = model.config.k;
    let mut rows = Vec::new();
    let mut n = 0;
    for input in inputs {
        let h = model.encode(input);
        rows.extend_from_slice(h.data());
        n += h.rows();
        if n >= k {
            break;
        }
    }
    let h = Tensor::from_vec(n, model.config.d, rows);
    model.codebook = Codebook::from_samples(&h, k, &mut rng);
    model
}

/// Encoder and codebook variables plus the quantized output for one graph.
struct Trunk {
    enc: [Var; 6],
    codebook: Var,
    h: Var,
    cw_st: Var,
    vq_loss: Var,
}

fn trunk(tape: &mut Tape, model: &VqGae, input: &GraphInput) -> Trunk {
    let enc = model.encoder.tensors().map(|t| tape.leaf(t.clone()));
    let codebook = tape.leaf(model.codebook.codewords.clone());
    let h = encode_on_tape(tape, &enc, input);
    let q = quantize_on_tape(tape, h, codebook, model.config.alpha);
    let vq_loss = tape.add(q.codebook_loss, q.commitment_loss);
    Trunk {
        enc,
        codebook,
        h,
        cw_st: q.cw_st,
        vq_loss,
    }
}

/// Parameters updated during fine-tuning: encoder, codebook, head.
fn trainable<'a>(model: &'a mut VqGae, head: &'a mut Mlp) -> Vec<&'a mut Tensor> {
    let mut v: Vec<&mut Tensor> = model.encoder.tensors_mut().into_iter().collect();
    v.push(&mut model.codebook.codewords);
    v.extend(head.tensors_mut());
    v
}

fn collect_grads(tape: &Tape, loss: Var, t: &Trunk, head: &[Var; 4]) -> Result<Vec<Tensor>, DiffError> {
    let mut g = tape.backward(loss)?;
    let mut out: Vec<Tensor> = t.enc.iter().map(|&v| g.take(v)).collect();
    out.push(g.take(t.codebook));
    out.extend(head.iter().map(|&v| g.take(v)));
    Ok(out)
}

fn readout(tape: &mut Tape, cw_st: Var, n: usize) -> Var {
    tape.segment_mean(cw_st, vec![0; n].into(), 1)
}

/// One labeled instance for gap regression.
#[derive(Debug, Clone)]
pub struct GapExample {
    pub instance: MipInstance,
    pub label: f64,
}

/// Fine-tunes encoder, codebook and a fresh gap head on `(instance, label)`
/// pairs with mean absolute error.
pub fn finetune_gap(
    corpus: &[GapExample],
    checkpoint: &Checkpoint,
    config: &FinetuneConfig,
) -> Result<(Checkpoint, Vec<f64>), HeadError> {
    if corpus.is_empty() {
        return Err(HeadError::EmptyCorpus);
    }
    let inputs: Vec<GraphInput> = corpus.iter().map(|e| checkpoint.prepare(&e.instance)).collect();
    let senses: Vec<ObjectiveSense> = corpus.iter().map(|e| e.instance.objective_sense).collect();
    let mut model = if config.from_scratch {
        scratch_model(checkpoint, &inputs, config.seed)
    } else {
        checkpoint.model.clone()
    };
    let mut rng = rng_for(config.seed, "finetune/gap");
    let mut mlp = Mlp::init(model.config.d, config.hidden, &mut rng);
    // Start at the mean distance of the labels from 1.
    let offset = corpus.iter().map(|e| (e.label - 1.0).abs()).sum::<f64>() / corpus.len() as f64;
    mlp.b2 = Tensor::scalar(inverse_softplus(offset));
    let meta = GapMeta {
        hidden: config.hidden,
        min_hull: LabelHull::of(
            corpus
                .iter()
                .filter(|e| e.instance.objective_sense == ObjectiveSense::Minimize)
                .map(|e| e.label),
        ),
        max_hull: LabelHull::of(
            corpus
                .iter()
                .filter(|e| e.instance.objective_sense == ObjectiveSense::Maximize)
                .map(|e| e.label),
        ),
    };

    let mut opt = {
        let params = trainable(&mut model, &mut mlp);
        let refs: Vec<&Tensor> = params.into_iter().map(|t| &*t).collect();
        Adam::new(config.learning_rate, &refs)
    };
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let numeric = |source| HeadError::Numeric {
                instance: corpus[i].instance.name.clone(),
                source,
            };
            let mut tape = Tape::new();
            let t = trunk(&mut tape, &model, &inputs[i]);
            let head = mlp.load_vars(&mut tape);
            let r = readout(&mut tape, t.cw_st, inputs[i].n_nodes());
            let raw = Mlp::forward(&mut tape, &head, r);
            let sp = tape.softplus(raw);
            let signed = tape.scale(sp, sense_sign(senses[i]));
            let pred = tape.add_scalar(signed, 1.0 - corpus[i].label);
            let err = tape.abs(pred);
            let mae = tape.mean(err);
            let loss = tape.add(mae, t.vq_loss);
            total += tape.value(mae).item();
            let grads = collect_grads(&tape, loss, &t, &head).map_err(numeric)?;
            opt.step(&mut trainable(&mut model, &mut mlp), &grads).map_err(numeric)?;
        }
        history.push(total / corpus.len() as f64);
    }
    let mut out = checkpoint.clone();
    out.model = model;
    out.gap_head = Some(GapHead { mlp, meta });
    Ok((out, history))
}

/// Gap prediction for `instance`, clamped to the training-label hull of its
/// objective sense.
pub fn predict_gap(instance: &MipInstance, checkpoint: &Checkpoint) -> Result<f64, HeadError> {
    let head = checkpoint.gap_head.as_ref().ok_or(HeadError::MissingHead("gap"))?;
    let input = checkpoint.prepare(instance);
    let h = checkpoint.model.encode(&input);
    let (_, cw) = checkpoint.model.quantize(&h);
    let g = head.raw_predict(&cw.mean_rows(), instance.objective_sense);
    Ok(match head.hull(instance.objective_sense) {
        Some(hull) => hull.clamp(g),
        None => g,
    })
}

#[derive(Debug, Clone)]
pub struct CutPrediction {
    pub z_lp: f64,
    pub gap: f64,
    pub bound: f64,
    pub instance: MipInstance,
}

/// Objective bound `z_LP * (1 + shrink * (gap - 1))`.
pub fn pseudo_cut_bound(z_lp: f64, gap: f64, safety_shrink: f64) -> f64 {
    z_lp * (1.0 + safety_shrink * (gap - 1.0))
}

pub fn predict_gap_and_cut(
    instance: &MipInstance,
    checkpoint: &Checkpoint,
    safety_shrink: f64,
) -> Result<CutPrediction, HeadError> {
    let lp = solve_lp(instance);
    if !lp.is_optimal() {
        return Err(HeadError::Lp(lp.status));
    }
    if lp.objective == 0.0 {
        return Err(HeadError::ZeroLp);
    }
    let gap = predict_gap(instance, checkpoint)?;
    let bound = pseudo_cut_bound(lp.objective, gap, safety_shrink.clamp(0.0, 1.0));
    Ok(CutPrediction {
        z_lp: lp.objective,
        gap,
        bound,
        instance: add_pseudo_cut(instance, bound)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReportRow {
    pub instance: String,
    pub z_lp: f64,
    pub gap: f64,
    pub bound: f64,
    pub label: Option<f64>,
}

pub fn write_gap_report(path: &Path, rows: &[GapReportRow]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["instance", "z_lp", "g_hat", "bound", "label", "abs_error"])?;
    for r in rows {
        let label = r.label.map_or(String::new(), |l| l.to_string());
        let err = r.label.map_or(String::new(), |l| (r.gap - l).abs().to_string());
        w.write_record([
            r.instance.clone(),
            r.z_lp.to_string(),
            r.gap.to_string(),
            r.bound.to_string(),
            label,
            err,
        ])?;
    }
    w.flush()
}

/// Per-binary-variable solution counts over a pool.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceLabels {
    /// Variable indices of the binary variables.
    pub variables: Vec<usize>,
    /// Number of pool solutions with the variable at 1.
    pub groups: Vec<usize>,
    pub pool_size: usize,
}

impl GuidanceLabels {
    pub fn positive(&self, i: usize) -> bool {
        self.groups[i] >= 1
    }

    pub fn targets(&self) -> Vec<f64> {
        self.groups.iter().map(|&g| if g >= 1 { 1.0 } else { 0.0 }).collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.pool_size + 1];
        for &g in &self.groups {
            sizes[g] += 1;
        }
        sizes
    }
}

pub fn build_guidance_labels(instance: &MipInstance, pool: &[MipSolution]) -> GuidanceLabels {
    if pool.len() < GUIDANCE_POOL {
        log::warn!(
            "{}: solution pool has {} of {GUIDANCE_POOL} solutions",
            instance.name,
            pool.len()
        );
    }
    let variables = instance.binary_indices();
    let groups = variables
        .iter()
        .map(|&j| pool.iter().filter(|s| s.values[j] >= 0.5).count())
        .collect();
    GuidanceLabels {
        variables,
        groups,
        pool_size: pool.len(),
    }
}

/// Triplets over positions into [`GuidanceLabels::variables`].
#[derive(Debug, Clone, PartialEq)]
pub struct TripletSet {
    pub triplets: Vec<(usize, usize, usize)>,
    pub margin: f64,
}

impl TripletSet {
    /// Anchor differs from positive, both share a positive group, and the
    /// negative is in no pool solution.
    pub fn satisfies_invariants(&self, labels: &GuidanceLabels) -> bool {
        self.triplets.iter().all(|&(a, p, n)| {
            a != p && labels.groups[a] == labels.groups[p] && labels.groups[a] >= 1 && labels.groups[n] == 0
        })
    }
}

/// Anchor/positive pairs within each nonzero group; the negative is the
/// group-0 variable whose embedding is nearest the anchor's.
/// `embeddings` has one row per entry of `labels.variables`.
pub fn mine_triplets(labels: &GuidanceLabels, embeddings: &Tensor, per_anchor: usize, rng: &mut Rng) -> TripletSet {
    let negatives: Vec<usize> = (0..labels.groups.len()).filter(|&i| labels.groups[i] == 0).collect();
    let mut triplets = Vec::new();
    if negatives.is_empty() {
        log::warn!("no negative variables; triplet set is empty");
        return TripletSet {
            triplets,
            margin: TRIPLET_MARGIN,
        };
    }
    'groups: for g in 1..=labels.pool_size {
        let members: Vec<usize> = (0..labels.groups.len()).filter(|&i| labels.groups[i] == g).collect();
        if members.len() < 2 {
            continue;
        }
        for &a in &members {
            let n = nearest(embeddings, a, &negatives);
            let mut others: Vec<usize> = members.iter().copied().filter(|&p| p != a).collect();
            others.shuffle(rng);
            for &p in others.iter().take(per_anchor) {
                if triplets.len() == MAX_TRIPLETS {
                    break 'groups;
                }
                triplets.push((a, p, n));
            }
        }
    }
    TripletSet {
        triplets,
        margin: TRIPLET_MARGIN,
    }
}

fn nearest(embeddings: &Tensor, anchor: usize, candidates: &[usize]) -> usize {
    let a = embeddings.row(anchor);
    let mut best = candidates[0];
    let mut best_d = f64::INFINITY;
    for &c in candidates {
        let d = squared_distance(a, embeddings.row(c));
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// `max(d(a, p) - d(a, n) + margin, 0)` with Euclidean distances.
pub fn triplet_hinge(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    let dp = squared_distance(a, p).sqrt();
    let dn = squared_distance(a, n).sqrt();
    (dp - dn + margin).max(0.0)
}

/// Mean hinge over `triplets` on the rows of `emb`, recorded on the tape.
fn triplet_loss_on_tape(tape: &mut Tape, emb: Var, triplets: &TripletSet) -> Var {
    let a: Rc<[usize]> = triplets.triplets.iter().map(|t| t.0).collect();
    let p: Rc<[usize]> = triplets.triplets.iter().map(|t| t.1).collect();
    let n: Rc<[usize]> = triplets.triplets.iter().map(|t| t.2).collect();
    let ea = tape.gather_rows(emb, a);
    let ep = tape.gather_rows(emb, p);
    let en = tape.gather_rows(emb, n);
    let dp = distance(tape, ea, ep);
    let dn = distance(tape, ea, en);
    let diff = tape.sub(dp, dn);
    let shifted = tape.add_scalar(diff, triplets.margin);
    let hinge = tape.relu(shifted);
    tape.mean(hinge)
}

fn distance(tape: &mut Tape, x: Var, y: Var) -> Var {
    let d = tape.sub(x, y);
    let sq = tape.mul(d, d);
    let s = tape.row_sum(sq);
    let s = tape.add_scalar(s, 1e-12);
    tape.sqrt(s)
}

/// One instance prepared for guidance fine-tuning.
#[derive(Debug, Clone)]
pub struct GuidanceExample {
    pub instance: MipInstance,
    pub labels: GuidanceLabels,
    pub triplets: TripletSet,
}

/// Codeword rows for the binary variables of `instance` under `checkpoint`.
pub fn variable_codewords(instance: &MipInstance, checkpoint: &Checkpoint, variables: &[usize]) -> Tensor {
    let input = checkpoint.prepare(instance);
    let h = checkpoint.model.encode(&input);
    let (_, cw) = checkpoint.model.quantize(&h);
    let m = input.n_constraints;
    let rows: Vec<Vec<f64>> = variables.iter().map(|&j| cw.row(m + j).to_vec()).collect();
    Tensor::from_rows(&rows)
}

/// Labels from a solution pool plus triplets mined in the checkpoint's
/// codeword space.
pub fn guidance_example(
    instance: &MipInstance,
    pool: &[MipSolution],
    unsupervised: &Checkpoint,
    rng: &mut Rng,
) -> GuidanceExample {
    let labels = build_guidance_labels(instance, pool);
    let emb = variable_codewords(instance, unsupervised, &labels.variables);
    let triplets = mine_triplets(&labels, &emb, POSITIVES_PER_ANCHOR, rng);
    GuidanceExample {
        instance: instance.clone(),
        labels,
        triplets,
    }
}

/// Fine-tunes encoder, codebook and a fresh guidance head on BCE plus the
/// triplet term, weighted equally. Returns the per-epoch mean loss.
pub fn finetune_guidance(
    corpus: &[GuidanceExample],
    checkpoint: &Checkpoint,
    config: &FinetuneConfig,
) -> Result<(Checkpoint, Vec<f64>), HeadError> {
    if corpus.is_empty() {
        return Err(HeadError::EmptyCorpus);
    }
    let inputs: Vec<GraphInput> = corpus.iter().map(|e| checkpoint.prepare(&e.instance)).collect();
    let mut model = if config.from_scratch {
        scratch_model(checkpoint, &inputs, config.seed)
    } else {
        checkpoint.model.clone()
    };
    let mut rng = rng_for(config.seed, "finetune/guidance");
    let mut mlp = Mlp::init(model.config.d, config.hidden, &mut rng);
    let mut opt = {
        let params = trainable(&mut model, &mut mlp);
        let refs: Vec<&Tensor> = params.into_iter().map(|t| &*t).collect();
        Adam::new(config.learning_rate, &refs)
    };
    let rows: Vec<Rc<[usize]>> = corpus
        .iter()
        .zip(&inputs)
        .map(|(e, inp)| e.labels.variables.iter().map(|&j| inp.n_constraints + j).collect())
        .collect();
    let targets: Vec<Rc<[f64]>> = corpus.iter().map(|e| e.labels.targets().into()).collect();
    let mut order: Vec<usize> = (0..corpus.len()).filter(|&i| !corpus[i].labels.variables.is_empty()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let numeric = |source| HeadError::Numeric {
                instance: corpus[i].instance.name.clone(),
                source,
            };
            let mut tape = Tape::new();
            let t = trunk(&mut tape, &model, &inputs[i]);
            let head = mlp.load_vars(&mut tape);
            let vars = tape.gather_rows(t.cw_st, rows[i].clone());
            let logits = Mlp::forward(&mut tape, &head, vars);
            let bce = tape.bce_with_logits(logits, targets[i].clone());
            let mut loss = bce;
            if !corpus[i].triplets.triplets.is_empty() {
                let h_vars = tape.gather_rows(t.h, rows[i].clone());
                let trip = triplet_loss_on_tape(&mut tape, h_vars, &corpus[i].triplets);
                loss = tape.add(loss, trip);
            }
            total += tape.value(loss).item();
            let loss = tape.add(loss, t.vq_loss);
            let grads = collect_grads(&tape, loss, &t, &head).map_err(numeric)?;
            opt.step(&mut trainable(&mut model, &mut mlp), &grads).map_err(numeric)?;
        }
        history.push(total / order.len().max(1) as f64);
    }
    let mut out = checkpoint.clone();
    out.model = model;
    out.guidance_head = Some(GuidanceHead {
        mlp,
        meta: GuidanceMeta { hidden: config.hidden },
    });
    Ok((out, history))
}

/// Membership probabilities for the binary variables of `instance`, with
/// their codewords.
pub fn guidance_scores(instance: &MipInstance, checkpoint: &Checkpoint) -> Result<(Vec<usize>, Vec<f64>, Tensor), HeadError> {
    let head = checkpoint.guidance_head.as_ref().ok_or(HeadError::MissingHead("guidance"))?;
    let variables = instance.binary_indices();
    let cw = variable_codewords(instance, checkpoint, &variables);
    let scores = if variables.is_empty() {
        Vec::new()
    } else {
        head.mlp.apply(&cw).into_iter().map(logistic).collect()
    };
    Ok((variables, scores, cw))
}

/// Area under the ROC curve with ties counted half.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    // Mid-ranks over tie blocks.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if positive[k] {
                rank_sum += mid;
            }
        }
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HintSet {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

impl HintSet {
    pub fn is_disjoint(&self) -> bool {
        let inc: BTreeSet<&String> = self.include.iter().collect();
        self.exclude.iter().all(|n| !inc.contains(n))
    }

    pub fn is_empty(&self) -> bool {
        self.include.is_empty() && self.exclude.is_empty()
    }

    /// Lines `name value`, includes first.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for n in &self.include {
            writeln!(s, "{n} 1").unwrap();
        }
        for n in &self.exclude {
            writeln!(s, "{n} 0").unwrap();
        }
        s
    }
}

/// Hints around an anchor solution. Codewords are rescaled to unit mean norm
/// before the radius test. A score is in the top decile when at most that
/// fraction of scores reach it, so tied scores never qualify together.
pub fn select_hints_from_scores(
    instance: &MipInstance,
    variables: &[usize],
    scores: &[f64],
    codewords: &Tensor,
    anchor_values: &[f64],
    radius: f64,
    decile: f64,
) -> HintSet {
    if variables.is_empty() {
        return HintSet::default();
    }
    let mean_norm =
        (0..codewords.rows()).map(|i| codewords.row(i).iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>()
            / codewords.rows() as f64;
    let scale = if mean_norm > 0.0 { 1.0 / mean_norm } else { 1.0 };
    let r2 = (radius / scale).powi(2);
    let n = scores.len() as f64;
    let top = |s: f64| scores.iter().filter(|&&t| t >= s).count() as f64 <= decile * n;
    let bottom = |s: f64| scores.iter().filter(|&&t| t <= s).count() as f64 <= decile * n;
    let pos_anchors: Vec<usize> = (0..variables.len()).filter(|&i| anchor_values[variables[i]] >= 0.5).collect();
    let neg_anchors: Vec<usize> = (0..variables.len()).filter(|&i| anchor_values[variables[i]] < 0.5).collect();
    let near = |i: usize, anchors: &[usize]| {
        anchors
            .iter()
            .any(|&a| squared_distance(codewords.row(i), codewords.row(a)) <= r2)
    };
    let mut hints = HintSet::default();
    for i in 0..variables.len() {
        let inc = top(scores[i]) && near(i, &pos_anchors);
        let exc = bottom(scores[i]) && near(i, &neg_anchors);
        let name = &instance.variables[variables[i]].name;
        match (inc, exc) {
            (true, false) => hints.include.push(name.clone()),
            (false, true) => hints.exclude.push(name.clone()),
            _ => {}
        }
    }
    hints
}

pub fn select_hints(
    instance: &MipInstance,
    anchor_values: &[f64],
    checkpoint: &Checkpoint,
    radius: f64,
    decile: f64,
) -> Result<HintSet, HeadError> {
    let (variables, scores, cw) = guidance_scores(instance, checkpoint)?;
    Ok(select_hints_from_scores(instance, &variables, &scores, &cw, anchor_values, radius, decile))
}
