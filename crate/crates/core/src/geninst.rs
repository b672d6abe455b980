//! Synthetic instance generators.
//!
//! Five binary families: set cover, vertex cover, independent set, bin
//! packing (assignment `x_ij` plus bin-open `y_j` formulation), and a
//! combinatorial auction. Each size tag maps to a parameter preset; the
//! exact dimensions are drawn from the preset's ranges with the instance
//! seed.
//!
//! | family          | easy               | medium              | hard                 |
//! |-----------------|--------------------|---------------------|----------------------|
//! | set cover       | 20-40 sets, p=0.15 | 60-120 sets, p=0.06 | 200-400 sets, p=0.02 |
//! | vertex cover/IS | 20-40 nodes, p=0.15| 60-120 nodes, p=0.05| 200-400 nodes, p=0.015|
//! | bin packing     | 5-7 items          | 12-16 items         | 28-36 items          |
//! | comb. auction   | 20-40 bids         | 60-120 bids         | 200-400 bids         |
//!
//! Set cover uses `m = 2n/3` elements. Bin packing offers as many bins as
//! first-fit-decreasing needs plus one, so an instance with `k` items has
//! `k * bins + bins` variables. Auctions use `n / 3` goods.
//!
//! Vertex cover and independent set instances generated with the same
//! `(size, seed)` share one graph: the graph stream is derived from
//! `(seed, "graph/<size>")` and does not depend on the family.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mip::{write_mps, ConstraintDef, ConstraintSense, MipInstance, ObjectiveSense, VariableDef};
use crate::seed::{derive_seed, rng_for, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SetCover,
    VertexCover,
    IndependentSet,
    BinPacking,
    CombAuction,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::SetCover,
        Family::VertexCover,
        Family::IndependentSet,
        Family::BinPacking,
        Family::CombAuction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::SetCover => "set_cover",
            Family::VertexCover => "vertex_cover",
            Family::IndependentSet => "independent_set",
            Family::BinPacking => "bin_packing",
            Family::CombAuction => "comb_auction",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = GenError;

    /// Accepts the full tag or the short aliases `sc`, `vc`, `is`, `bp`, `ca`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "set_cover" | "sc" => Ok(Family::SetCover),
            "vertex_cover" | "vc" | "mvc" => Ok(Family::VertexCover),
            "independent_set" | "is" | "mis" => Ok(Family::IndependentSet),
            "bin_packing" | "bp" => Ok(Family::BinPacking),
            "comb_auction" | "ca" => Ok(Family::CombAuction),
            other => Err(GenError::UnknownFamily(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeTag {
    Easy,
    Medium,
    Hard,
}

impl SizeTag {
    pub const ALL: [SizeTag; 3] = [SizeTag::Easy, SizeTag::Medium, SizeTag::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            SizeTag::Easy => "easy",
            SizeTag::Medium => "medium",
            SizeTag::Hard => "hard",
        }
    }
}

impl fmt::Display for SizeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SizeTag {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "easy" => Ok(SizeTag::Easy),
            "medium" => Ok(SizeTag::Medium),
            "hard" => Ok(SizeTag::Hard),
            other => Err(GenError::UnknownSize(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("unknown size `{0}`")]
    UnknownSize(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Dimensions of one instance. Presets come from [`FamilyParams::preset`];
/// tests build smaller ones directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyParams {
    /// `n_sets` sets over `n_elements` elements, inclusion probability `density`.
    SetCover { n_sets: usize, n_elements: usize, density: f64 },
    /// Erdős–Rényi graph `G(n_nodes, edge_prob)`.
    Graph { n_nodes: usize, edge_prob: f64 },
    /// `n_items` items with integer weights in `[1, capacity / 2]`.
    BinPacking { n_items: usize, capacity: u32 },
    /// `n_bids` bids over `n_goods` goods, bundles of 2-5 goods.
    Auction { n_bids: usize, n_goods: usize },
}

impl FamilyParams {
    pub fn preset(family: Family, size: SizeTag, rng: &mut Rng) -> Self {
        let pick = |rng: &mut Rng, lo: usize, hi: usize| rng.gen_range(lo..=hi);
        match family {
            Family::SetCover => {
                // Elements per set and sets per element both grow with size.
                let (lo, hi, per_element, ratio) = match size {
                    SizeTag::Easy => (20, 40, 4.0, 0.5),
                    SizeTag::Medium => (60, 120, 8.0, 1.0),
                    SizeTag::Hard => (200, 400, 12.0, 1.5),
                };
                let n_sets = pick(rng, lo, hi);
                FamilyParams::SetCover {
                    n_sets,
                    n_elements: ((n_sets as f64 * ratio) as usize).max(2),
                    density: (per_element / n_sets as f64).min(1.0),
                }
            }
            Family::VertexCover | Family::IndependentSet => {
                // Expected degree is fixed per size tag.
                let (lo, hi, degree) = match size {
                    SizeTag::Easy => (20, 40, 4.0),
                    SizeTag::Medium => (60, 120, 9.0),
                    SizeTag::Hard => (200, 400, 15.0),
                };
                let n_nodes = pick(rng, lo, hi);
                FamilyParams::Graph {
                    n_nodes,
                    edge_prob: degree / (n_nodes - 1) as f64,
                }
            }
            Family::BinPacking => {
                let (lo, hi) = match size {
                    SizeTag::Easy => (5, 7),
                    SizeTag::Medium => (12, 16),
                    SizeTag::Hard => (28, 36),
                };
                FamilyParams::BinPacking {
                    n_items: pick(rng, lo, hi),
                    capacity: 20,
                }
            }
            Family::CombAuction => {
                let (lo, hi) = match size {
                    SizeTag::Easy => (20, 40),
                    SizeTag::Medium => (60, 120),
                    SizeTag::Hard => (200, 400),
                };
                let n_bids = pick(rng, lo, hi);
                FamilyParams::Auction {
                    n_bids,
                    n_goods: (n_bids / 3).max(5),
                }
            }
        }
    }
}

/// Generates the instance for `(family, size, seed)`.
pub fn gen_instance(family: Family, size: SizeTag, seed: u64) -> MipInstance {
    let mut rng = rng_for(seed, &format!("params/{}", graph_stream(family, size)));
    let params = FamilyParams::preset(family, size, &mut rng);
    let name = format!("{}_{}_{}", family, size, seed);
    gen_with_params(family, params, seed, &name, &graph_stream(family, size))
}

/// VC and IS draw their graph from a shared stream label.
fn graph_stream(family: Family, size: SizeTag) -> String {
    match family {
        Family::VertexCover | Family::IndependentSet => format!("graph/{size}"),
        other => format!("{other}/{size}"),
    }
}

/// Generates an instance with explicit dimensions. `stream` namespaces the
/// random draws; VC/IS instances sharing `(params, seed, stream)` share
/// their graph.
pub fn gen_with_params(
    family: Family,
    params: FamilyParams,
    seed: u64,
    name: &str,
    stream: &str,
) -> MipInstance {
    let mut rng = rng_for(seed, stream);
    match (family, params) {
        (Family::SetCover, FamilyParams::SetCover { n_sets, n_elements, density }) => {
            set_cover(name, n_sets, n_elements, density, &mut rng)
        }
        (Family::VertexCover, FamilyParams::Graph { n_nodes, edge_prob }) => {
            let edges = random_graph(n_nodes, edge_prob, &mut rng);
            vertex_cover(name, n_nodes, &edges)
        }
        (Family::IndependentSet, FamilyParams::Graph { n_nodes, edge_prob }) => {
            let edges = random_graph(n_nodes, edge_prob, &mut rng);
            independent_set(name, n_nodes, &edges)
        }
        (Family::BinPacking, FamilyParams::BinPacking { n_items, capacity }) => {
            bin_packing(name, n_items, capacity, &mut rng)
        }
        (Family::CombAuction, FamilyParams::Auction { n_bids, n_goods }) => {
            comb_auction(name, n_bids, n_goods, &mut rng)
        }
        (f, p) => panic!("parameters {p:?} do not describe family {f}"),
    }
}

pub fn random_graph(n: usize, p: f64, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// `min sum x_v  s.t.  x_u + x_v >= 1` for every edge.
pub fn vertex_cover(name: &str, n: usize, edges: &[(usize, usize)]) -> MipInstance {
    let mut m = MipInstance::new(name, ObjectiveSense::Minimize);
    for v in 0..n {
        m.add_variable(VariableDef::binary(format!("x{v}"), 1.0));
    }
    for &(u, v) in edges {
        m.add_constraint(
            ConstraintDef::new(format!("e{u}_{v}"), ConstraintSense::Ge, 1.0),
            &[(u, 1.0), (v, 1.0)],
        );
    }
    m
}

/// `max sum x_v  s.t.  x_u + x_v <= 1` for every edge.
pub fn independent_set(name: &str, n: usize, edges: &[(usize, usize)]) -> MipInstance {
    let mut m = MipInstance::new(name, ObjectiveSense::Maximize);
    for v in 0..n {
        m.add_variable(VariableDef::binary(format!("x{v}"), 1.0));
    }
    for &(u, v) in edges {
        m.add_constraint(
            ConstraintDef::new(format!("e{u}_{v}"), ConstraintSense::Le, 1.0),
            &[(u, 1.0), (v, 1.0)],
        );
    }
    m
}

fn set_cover(name: &str, n_sets: usize, n_elements: usize, density: f64, rng: &mut Rng) -> MipInstance {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_elements];
    for (e, row) in members.iter_mut().enumerate() {
        for s in 0..n_sets {
            if rng.gen::<f64>() < density {
                row.push(s);
            }
        }
        // Every element needs at least two candidate sets so that the
        // instance is feasible and the row is not a trivial fixing.
        while row.len() < 2.min(n_sets) {
            let s = rng.gen_range(0..n_sets);
            if !row.contains(&s) {
                row.push(s);
            }
        }
        row.sort_unstable();
        debug_assert!(!row.is_empty(), "element {e} uncovered");
    }
    let mut m = MipInstance::new(name, ObjectiveSense::Minimize);
    for s in 0..n_sets {
        m.add_variable(VariableDef::binary(format!("s{s}"), 1.0));
    }
    for (e, row) in members.iter().enumerate() {
        let coeffs: Vec<(usize, f64)> = row.iter().map(|&s| (s, 1.0)).collect();
        m.add_constraint(ConstraintDef::new(format!("u{e}"), ConstraintSense::Ge, 1.0), &coeffs);
    }
    m
}

fn bin_packing(name: &str, n_items: usize, capacity: u32, rng: &mut Rng) -> MipInstance {
    let weights: Vec<u32> = (0..n_items)
        .map(|_| rng.gen_range(1..=(capacity / 2).max(1)))
        .collect();
    let n_bins = first_fit_decreasing(&weights, capacity) + 1;
    let mut m = MipInstance::new(name, ObjectiveSense::Minimize);
    let x = |i: usize, j: usize| i * n_bins + j;
    for i in 0..n_items {
        for j in 0..n_bins {
            m.add_variable(VariableDef::binary(format!("x{i}_{j}"), 0.0));
        }
    }
    let y0 = n_items * n_bins;
    for j in 0..n_bins {
        m.add_variable(VariableDef::binary(format!("y{j}"), 1.0));
    }
    for i in 0..n_items {
        let row: Vec<(usize, f64)> = (0..n_bins).map(|j| (x(i, j), 1.0)).collect();
        m.add_constraint(ConstraintDef::new(format!("assign{i}"), ConstraintSense::Eq, 1.0), &row);
    }
    for j in 0..n_bins {
        let mut row: Vec<(usize, f64)> = (0..n_items).map(|i| (x(i, j), weights[i] as f64)).collect();
        row.push((y0 + j, -(capacity as f64)));
        m.add_constraint(ConstraintDef::new(format!("cap{j}"), ConstraintSense::Le, 0.0), &row);
    }
    m
}

fn first_fit_decreasing(weights: &[u32], capacity: u32) -> usize {
    let mut sorted = weights.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut loads: Vec<u32> = Vec::new();
    for w in sorted {
        match loads.iter_mut().find(|l| **l + w <= capacity) {
            Some(l) => *l += w,
            None => loads.push(w),
        }
    }
    loads.len().max(1)
}

fn comb_auction(name: &str, n_bids: usize, n_goods: usize, rng: &mut Rng) -> MipInstance {
    let goods: Vec<usize> = (0..n_goods).collect();
    let mut bundles = Vec::with_capacity(n_bids);
    let mut m = MipInstance::new(name, ObjectiveSense::Maximize);
    for b in 0..n_bids {
        let size = rng.gen_range(2..=5usize).min(n_goods);
        let mut bundle: Vec<usize> = goods.choose_multiple(rng, size).copied().collect();
        bundle.sort_unstable();
        let noise: f64 = rng.gen_range(-0.5..0.5);
        // Two decimals keep the MPS text short and exact.
        let price = ((size as f64 + noise) * 100.0).round() / 100.0;
        m.add_variable(VariableDef::binary(format!("b{b}"), price));
        bundles.push(bundle);
    }
    for g in 0..n_goods {
        let row: Vec<(usize, f64)> = bundles
            .iter()
            .enumerate()
            .filter(|(_, bundle)| bundle.contains(&g))
            .map(|(b, _)| (b, 1.0))
            .collect();
        if row.len() >= 2 {
            m.add_constraint(ConstraintDef::new(format!("g{g}"), ConstraintSense::Le, 1.0), &row);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub family: Family,
    pub size: SizeTag,
    pub seed: u64,
}

/// List of generated instances, persisted as `manifest.csv` with columns
/// `path,family,size,seed`. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.csv";

impl CorpusManifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), GenError> {
        let io_err = |source: std::io::Error| GenError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| GenError::Manifest(e.to_string()))?;
        w.write_record(["path", "family", "size", "seed"])
            .map_err(|e| GenError::Manifest(e.to_string()))?;
        for e in &self.entries {
            w.write_record([
                e.path.to_string_lossy().as_ref(),
                e.family.as_str(),
                e.size.as_str(),
                &e.seed.to_string(),
            ])
            .map_err(|e| GenError::Manifest(e.to_string()))?;
        }
        w.flush().map_err(io_err)
    }

    /// Reads a manifest file, or `<dir>/manifest.csv` when given a directory.
    pub fn read(path: &Path) -> Result<Self, GenError> {
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut r = csv::Reader::from_path(&file).map_err(|e| GenError::Manifest(format!("{}: {e}", file.display())))?;
        let mut entries = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| GenError::Manifest(e.to_string()))?;
            if rec.len() != 4 {
                return Err(GenError::Manifest(format!("expected 4 fields, got {}", rec.len())));
            }
            entries.push(ManifestEntry {
                path: PathBuf::from(&rec[0]),
                family: rec[1].parse()?,
                size: rec[2].parse()?,
                seed: rec[3]
                    .parse()
                    .map_err(|_| GenError::Manifest(format!("bad seed `{}`", &rec[3])))?,
            });
        }
        Ok(Self { root, entries })
    }
}

/// One `(family, size, count)` line of a corpus request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusSpec {
    pub family: Family,
    pub size: SizeTag,
    pub count: usize,
}

/// Writes `count` MPS files per spec line plus `manifest.csv` into `out_dir`.
/// Entry `i` of `(family, size)` uses seed
/// `derive_seed(seed, "corpus/<family>/<size>/<i>")`, except that vertex
/// cover and independent set share `"corpus/graph/<size>/<i>"` so their
/// `i`-th instances are built on the same graph.
pub fn gen_corpus(specs: &[CorpusSpec], seed: u64, out_dir: &Path) -> Result<CorpusManifest, GenError> {
    fs::create_dir_all(out_dir).map_err(|source| GenError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut manifest = CorpusManifest {
        root: out_dir.to_path_buf(),
        entries: Vec::new(),
    };
    for spec in specs {
        for i in 0..spec.count {
            let stream = match spec.family {
                Family::VertexCover | Family::IndependentSet => format!("corpus/graph/{}/{i}", spec.size),
                f => format!("corpus/{f}/{}/{i}", spec.size),
            };
            let inst_seed = derive_seed(seed, &stream);
            let inst = gen_instance(spec.family, spec.size, inst_seed);
            let rel = PathBuf::from(format!("{}_{}_{:04}.mps", spec.family, spec.size, i));
            let path = out_dir.join(&rel);
            fs::write(&path, write_mps(&inst)).map_err(|source| GenError::Io { path, source })?;
            manifest.entries.push(ManifestEntry {
                path: rel,
                family: spec.family,
                size: spec.size,
                seed: inst_seed,
            });
        }
    }
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
