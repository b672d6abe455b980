//! Unsupervised pre-training, checkpoints, and codebook telemetry.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bigraph::{apply_feature_scale, fit_feature_scale, to_bipartite, BipartiteGraph, FeatureScale};
use crate::diffcore::{Adam, DiffError, Tensor};
use crate::geninst::{CorpusManifest, ManifestEntry};
use crate::heads::{GapHead, GuidanceHead};
use crate::mip::{drop_constraints, parse_mps, MipInstance, MpsError};
use crate::seed::{derive_seed, rng_for};
use crate::vqgae::{sample_edges, Codebook, GraphInput, LossBreakdown, ModelConfig, VqGae, PARAM_NAMES};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FORGECKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Constraint-drop fractions; each original yields one extra graph per
    /// fraction.
    pub fractions: Vec<f64>,
    /// Sampled non-edges per true edge in the edge loss.
    pub negative_ratio: f64,
    /// Reseed codes unused for a whole epoch.
    pub reseed_dead_codes: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            learning_rate: 1e-4,
            epochs: 10,
            seed: 0,
            fractions: vec![0.05, 0.10],
            negative_ratio: 1.0,
            reseed_dead_codes: true,
        }
    }
}

impl TrainConfig {
    /// Desk-scale defaults (`d = 64`, `k = 128`).
    pub fn desk() -> Self {
        Self::default()
    }

    /// Full-size profile: `d = 1024`, `k = 5000`.
    pub fn full() -> Self {
        Self {
            model: ModelConfig {
                d: 1024,
                k: 5000,
                edge_dim: 1024,
                ..ModelConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if self.model.k < 2 {
            return bad("codebook size k must be at least 2");
        }
        if self.model.d < 1 || self.model.edge_dim < 1 {
            return bad("embedding widths must be positive");
        }
        if self.fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
            return bad("drop fractions must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.model.alpha >= 0.0 && self.model.alpha.is_finite()) {
            return bad("alpha must be non-negative");
        }
        if !(self.negative_ratio >= 0.0 && self.negative_ratio.is_finite()) {
            return bad("negative ratio must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
    pub dead_code_fraction: f64,
    pub reseeded: usize,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: MpsError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("numeric failure at epoch {epoch} on `{instance}`: {source}")]
    Numeric {
        epoch: usize,
        instance: String,
        source: DiffError,
    },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("checkpoint format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint integrity check failed")]
    Integrity,
    #[error("bad checkpoint header: {0}")]
    Header(String),
}

/// Trained model plus everything needed to reproduce its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: VqGae,
    pub feature_scale: FeatureScale,
    pub history: Vec<EpochLog>,
    pub gap_head: Option<GapHead>,
    pub guidance_head: Option<GuidanceHead>,
}

impl Checkpoint {
    /// Bipartite graph with this checkpoint's feature scaling.
    pub fn graph(&self, instance: &MipInstance) -> BipartiteGraph {
        apply_feature_scale(&to_bipartite(instance), &self.feature_scale)
    }

    /// Model input for `instance`.
    pub fn prepare(&self, instance: &MipInstance) -> GraphInput {
        GraphInput::new(&self.graph(instance), self.config.model.aggregator)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }

    fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = PARAM_NAMES
            .iter()
            .map(|n| n.to_string())
            .zip(self.model.params())
            .collect();
        if let Some(h) = &self.gap_head {
            out.extend(h.named_tensors());
        }
        if let Some(h) = &self.guidance_head {
            out.extend(h.named_tensors());
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.named_tensors();
        let header = Header {
            config: self.config.clone(),
            feature_scale: self.feature_scale.clone(),
            history: self.history.clone(),
            codebook_usage: self.model.codebook.usage.clone(),
            gap_meta: self.gap_head.as_ref().map(GapHead::meta),
            guidance_meta: self.guidance_head.as_ref().map(GuidanceHead::meta),
            tensors: tensors
                .iter()
                .map(|(n, t)| TensorMeta {
                    name: n.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        for (_, t) in &tensors {
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(if bytes.len() < 8 { CheckpointError::Truncated } else { CheckpointError::BadMagic });
        }
        if bytes.len() < 20 {
            return Err(CheckpointError::Truncated);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body_start = 20usize.checked_add(header_len).ok_or(CheckpointError::Truncated)?;
        if bytes.len() < body_start + 32 {
            return Err(CheckpointError::Truncated);
        }
        let header: Header =
            serde_json::from_slice(&bytes[20..body_start]).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let total: usize = header.tensors.iter().map(|t| t.rows * t.cols).sum();
        let expected_len = body_start + total * 8 + 32;
        if bytes.len() < expected_len {
            return Err(CheckpointError::Truncated);
        }
        if bytes.len() > expected_len {
            return Err(CheckpointError::Integrity);
        }
        let digest = Sha256::digest(&bytes[..expected_len - 32]);
        if digest.as_slice() != &bytes[expected_len - 32..] {
            return Err(CheckpointError::Integrity);
        }
        let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut offset = body_start;
        for meta in &header.tensors {
            let n = meta.rows * meta.cols;
            let data = bytes[offset..offset + n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            offset += n * 8;
            tensors.insert(meta.name.clone(), Tensor::from_vec(meta.rows, meta.cols, data));
        }
        let mut take = |name: &str| {
            tensors
                .remove(name)
                .ok_or_else(|| CheckpointError::Header(format!("missing tensor `{name}`")))
        };
        let mut params = Vec::with_capacity(PARAM_NAMES.len());
        for name in PARAM_NAMES {
            params.push(take(name)?);
        }
        let cfg = header.config.model.clone();
        let mut rng = rng_for(0, "checkpoint/placeholder");
        let mut model = VqGae::new(cfg.clone(), &mut rng);
        for (slot, t) in model.params_mut().into_iter().zip(params) {
            if slot.shape() != t.shape() {
                return Err(CheckpointError::Header("parameter shape does not match config".into()));
            }
            *slot = t;
        }
        model.codebook.usage = header.codebook_usage.clone();
        if model.codebook.usage.len() != model.codebook.k() {
            model.codebook.usage = vec![0; model.codebook.k()];
        }
        let gap_head = match header.gap_meta {
            Some(meta) => {
                let t = GapHead::TENSOR_NAMES.iter().map(|n| take(n)).collect::<Result<Vec<_>, _>>()?;
                Some(GapHead::from_parts(meta, t).ok_or_else(|| CheckpointError::Header("bad gap head".into()))?)
            }
            None => None,
        };
        let guidance_head = match header.guidance_meta {
            Some(meta) => {
                let t = GuidanceHead::TENSOR_NAMES.iter().map(|n| take(n)).collect::<Result<Vec<_>, _>>()?;
                Some(
                    GuidanceHead::from_parts(meta, t)
                        .ok_or_else(|| CheckpointError::Header("bad guidance head".into()))?,
                )
            }
            None => None,
        };
        Ok(Self {
            config: header.config,
            model,
            feature_scale: header.feature_scale,
            history: header.history,
            gap_head,
            guidance_head,
        })
    }

    /// Short content hash, usable as a checkpoint id.
    pub fn id(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    feature_scale: FeatureScale,
    history: Vec<EpochLog>,
    codebook_usage: Vec<u64>,
    gap_meta: Option<crate::heads::GapMeta>,
    guidance_meta: Option<crate::heads::GuidanceMeta>,
    tensors: Vec<TensorMeta>,
}

/// Reads every instance of a manifest; the first unreadable file aborts.
pub fn load_corpus(manifest: &CorpusManifest) -> Result<Vec<(ManifestEntry, MipInstance)>, TrainError> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let path = manifest.resolve(e);
            let text = fs::read_to_string(&path).map_err(|source| TrainError::Io {
                path: path.clone(),
                source,
            })?;
            let inst = parse_mps(&text).map_err(|source| TrainError::Parse { path, source })?;
            Ok((e.clone(), inst))
        })
        .collect()
}

/// Originals followed by one constraint-dropped copy per original and
/// fraction.
pub fn augment(originals: &[MipInstance], fractions: &[f64], seed: u64) -> Vec<MipInstance> {
    let mut out = originals.to_vec();
    for (i, inst) in originals.iter().enumerate() {
        for (j, &f) in fractions.iter().enumerate() {
            let s = derive_seed(seed, &format!("augment/{i}/{j}"));
            let mut dropped = drop_constraints(inst, f, s);
            dropped.name = format!("{}__drop{j}", inst.name);
            out.push(dropped);
        }
    }
    out
}

pub fn pretrain(manifest: &CorpusManifest, config: &TrainConfig) -> Result<Checkpoint, TrainError> {
    config.validate()?;
    let instances: Vec<MipInstance> = load_corpus(manifest)?.into_iter().map(|(_, i)| i).collect();
    pretrain_instances(&instances, config)
}

/// Capacity of the ring of recent embeddings used to reseed dead codes.
const RESERVOIR: usize = 4096;
/// Rows contributed to the ring per graph.
const RESERVOIR_PER_GRAPH: usize = 32;

pub fn pretrain_instances(originals: &[MipInstance], config: &TrainConfig) -> Result<Checkpoint, TrainError> {
    config.validate()?;
    if originals.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let corpus = augment(originals, &config.fractions, config.seed);
    let graphs: Vec<BipartiteGraph> = corpus.iter().map(to_bipartite).collect();
    let scale = fit_feature_scale(&graphs);
    let inputs: Vec<GraphInput> = graphs
        .iter()
        .map(|g| GraphInput::new(&apply_feature_scale(g, &scale), config.model.aggregator))
        .collect();
    let names: Vec<&str> = corpus.iter().map(|i| i.name.as_str()).collect();

    let mut init_rng = rng_for(config.seed, "pretrain/init");
    let mut model = VqGae::new(config.model.clone(), &mut init_rng);
    let mut order_rng = rng_for(config.seed, "pretrain/order");
    let mut sample_rng = rng_for(config.seed, "pretrain/edges");
    let mut reseed_rng = rng_for(config.seed, "pretrain/reseed");

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut order_rng);
    init_codebook(&mut model, &inputs, &order, &mut init_rng);

    let mut opt = Adam::new(config.learning_rate, &model.params());
    let mut history = Vec::with_capacity(config.epochs);
    let mut reservoir: Vec<Vec<f64>> = Vec::with_capacity(RESERVOIR);
    let mut ring_pos = 0usize;

    for epoch in 1..=config.epochs {
        if epoch > 1 {
            order.shuffle(&mut order_rng);
        }
        model.codebook.reset_usage();
        let mut steps = Vec::with_capacity(order.len());
        for &gi in &order {
            let input = &inputs[gi];
            let numeric = |source| TrainError::Numeric {
                epoch,
                instance: names[gi].to_string(),
                source,
            };
            let sample = sample_edges(input, config.negative_ratio, &mut sample_rng);
            let (loss, grads, codes, h) = model.loss_and_grads(input, &sample).map_err(numeric)?;
            if !loss.is_finite() {
                return Err(numeric(DiffError::NonFinite("loss")));
            }
            opt.step(&mut model.params_mut(), &grads).map_err(numeric)?;
            for c in codes {
                model.codebook.usage[c] += 1;
            }
            for _ in 0..RESERVOIR_PER_GRAPH.min(h.rows()) {
                let row = h.row(sample_rng.gen_range(0..h.rows())).to_vec();
                if reservoir.len() < RESERVOIR {
                    reservoir.push(row);
                } else {
                    reservoir[ring_pos] = row;
                    ring_pos = (ring_pos + 1) % RESERVOIR;
                }
            }
            steps.push(loss);
        }
        let dead = model.codebook.dead_fraction();
        let reseeded = if config.reseed_dead_codes && epoch < config.epochs {
            model.codebook.reseed_dead(&reservoir, &mut reseed_rng)
        } else {
            0
        };
        let mean = LossBreakdown::mean(&steps);
        log::info!(
            "epoch {epoch}: total {:.5} (edge {:.5}, feat {:.5}, codebook {:.5}, commit {:.5}), dead codes {:.3}",
            mean.total,
            mean.edge_recon,
            mean.feat_recon,
            mean.codebook,
            mean.commitment,
            dead
        );
        history.push(EpochLog {
            epoch,
            loss: mean,
            dead_code_fraction: dead,
            reseeded,
        });
    }

    Ok(Checkpoint {
        config: config.clone(),
        model,
        feature_scale: scale,
        history,
        gap_head: None,
        guidance_head: None,
    })
}

/// Codebook from encoder outputs of the first graphs in visiting order,
/// taking graphs until at least `k` node embeddings are available.
fn init_codebook(model: &mut VqGae, inputs: &[GraphInput], order: &[usize], rng: &mut crate::seed::Rng) {
    let k = model.config.k;
    let d = model.config.d;
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0;
    for &gi in order {
        let h = model.encode(&inputs[gi]);
        rows.extend_from_slice(h.data());
        n += h.rows();
        if n >= k {
            break;
        }
    }
    let h = Tensor::from_vec(n, d, rows);
    model.codebook = Codebook::from_samples(&h, k, rng);
}

pub fn write_loss_csv(path: &Path, history: &[EpochLog]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "epoch",
        "edge_recon",
        "feat_recon",
        "codebook",
        "commitment",
        "total",
        "dead_code_fraction",
    ])?;
    for e in history {
        w.write_record([
            e.epoch.to_string(),
            e.loss.edge_recon.to_string(),
            e.loss.feat_recon.to_string(),
            e.loss.codebook.to_string(),
            e.loss.commitment.to_string(),
            e.loss.total.to_string(),
            e.dead_code_fraction.to_string(),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodebookReport {
    pub counts: Vec<u64>,
    pub total_nodes: u64,
    pub dead_fraction: f64,
}

/// Code usage over `instances` under `checkpoint`.
pub fn codebook_report(checkpoint: &Checkpoint, instances: &[MipInstance]) -> CodebookReport {
    let k = checkpoint.model.codebook.k();
    let mut counts = vec![0u64; k];
    for inst in instances {
        let input = checkpoint.prepare(inst);
        let h = checkpoint.model.encode(&input);
        let (codes, _) = checkpoint.model.quantize(&h);
        for c in codes {
            counts[c] += 1;
        }
    }
    let total_nodes = counts.iter().sum();
    let dead = counts.iter().filter(|&&c| c == 0).count() as f64 / k as f64;
    CodebookReport {
        counts,
        total_nodes,
        dead_fraction: dead,
    }
}

pub fn write_codebook_csv(path: &Path, report: &CodebookReport) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "code,count")?;
    for (c, n) in report.counts.iter().enumerate() {
        writeln!(f, "{c},{n}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geninst::{gen_instance, Family, SizeTag};

    fn tiny_corpus() -> Vec<MipInstance> {
        (0..4)
            .map(|s| gen_instance(Family::ALL[s as usize % 3], SizeTag::Easy, s))
            .collect()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                d: 8,
                k: 8,
                edge_dim: 8,
                ..ModelConfig::default()
            },
            epochs: 2,
            learning_rate: 1e-3,
            seed: 7,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn augmentation_triples_corpus() {
        let c = augment(&tiny_corpus(), &[0.05, 0.10], 1);
        assert_eq!(c.len(), 12);
    }

    #[test]
    fn training_is_deterministic() {
        let a = pretrain_instances(&tiny_corpus(), &tiny_config()).unwrap();
        let b = pretrain_instances(&tiny_corpus(), &tiny_config()).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
        for e in &a.history {
            assert!(e.loss.is_finite());
            assert!(e.loss.codebook >= 0.0 && e.loss.commitment >= 0.0);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let ck = pretrain_instances(&tiny_corpus(), &tiny_config()).unwrap();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        let inst = &tiny_corpus()[0];
        let h1 = ck.model.encode(&ck.prepare(inst));
        let h2 = back.model.encode(&back.prepare(inst));
        assert_eq!(h1, h2);
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 10]),
            Err(CheckpointError::Truncated)
        ));
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 100;
        flipped[mid] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&flipped), Err(CheckpointError::Integrity)));
        let mut versioned = bytes;
        versioned[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&versioned),
            Err(CheckpointError::Version { found: 9, .. })
        ));
    }

    #[test]
    fn report_counts_are_conserved() {
        let corpus = tiny_corpus();
        let ck = pretrain_instances(&corpus, &tiny_config()).unwrap();
        let r = codebook_report(&ck, &corpus);
        let nodes: u64 = corpus.iter().map(|i| (i.n_constraints() + i.n_variables()) as u64).sum();
        assert_eq!(r.total_nodes, nodes);
        assert!(r.counts.iter().any(|&c| c > 0));
    }

    #[test]
    fn over_provisioned_codebook_reports_dead_codes() {
        let corpus = tiny_corpus();
        let nodes: usize = corpus.iter().map(|i| i.n_constraints() + i.n_variables()).sum();
        let mut cfg = tiny_config();
        cfg.model.k = 10 * nodes;
        cfg.epochs = 1;
        let ck = pretrain_instances(&corpus, &cfg).unwrap();
        assert!(codebook_report(&ck, &corpus).dead_fraction > 0.0);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.fractions = vec![1.0];
        assert!(c.validate().is_err());
    }
}
