//! Bipartite variable/constraint graph with static node features.
//!
//! Feature layout (width 10, constraints first):
//!
//! | column | constraint node | variable node |
//! |--------|-----------------|---------------|
//! | 0..3   | one-hot sense (<=, >=, =) | 0 |
//! | 3      | rhs             | 0             |
//! | 4..7   | 0               | one-hot type (binary, integer, continuous) |
//! | 7, 8   | 0               | lower, upper bound |
//! | 9      | 0               | objective coefficient |
//!
//! Maximization objectives are negated so every graph reads as a
//! minimization; [`BipartiteGraph::negated_objective`] records the flip.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mip::{ConstraintSense, MipInstance, ObjectiveSense, VarType};

pub const FEATURE_DIM: usize = 10;
/// Infinite bounds are replaced by `±BOUND_CLIP`.
pub const BOUND_CLIP: f64 = 1e6;
/// Columns holding real values; every other column is one-hot.
pub const SCALED_COLUMNS: [usize; 4] = [3, 7, 8, 9];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Node index of the constraint (`< n_constraints`).
    pub constraint: usize,
    /// Node index of the variable (`>= n_constraints`).
    pub variable: usize,
    pub weight: f64,
}

/// Per-column affine scaling `(x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub shift: [f64; FEATURE_DIM],
    pub scale: [f64; FEATURE_DIM],
}

impl Default for FeatureScale {
    fn default() -> Self {
        Self {
            shift: [0.0; FEATURE_DIM],
            scale: [1.0; FEATURE_DIM],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGraph {
    pub name: String,
    pub n_constraints: usize,
    pub n_variables: usize,
    /// Row-major `N x FEATURE_DIM`.
    pub node_features: Vec<f64>,
    pub edges: Vec<Edge>,
    /// Scaling applied to `node_features`, if any.
    pub feature_scale: Option<FeatureScale>,
    pub negated_objective: bool,
}

/// How neighbor embeddings are combined in message passing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Aggregator {
    /// Plain mean over neighbors.
    Mean,
    /// `sum_j w_ij h_j / sqrt(deg_i deg_j)` with `w_ij` the coefficient
    /// divided by the largest absolute coefficient in its row.
    #[default]
    Normalized,
}

impl std::str::FromStr for Aggregator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "normalized" => Ok(Aggregator::Normalized),
            other => Err(format!("unknown aggregator `{other}` (mean, normalized)")),
        }
    }
}

/// Directed messages `src -> dst` with per-message weights, covering both
/// directions of every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct MessagePlan {
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub weight: Vec<f64>,
}

fn clip(v: f64) -> f64 {
    v.clamp(-BOUND_CLIP, BOUND_CLIP)
}

pub fn to_bipartite(instance: &MipInstance) -> BipartiteGraph {
    let m = instance.n_constraints();
    let n = instance.n_variables();
    let negate = instance.objective_sense == ObjectiveSense::Maximize;
    let mut feats = vec![0.0; (m + n) * FEATURE_DIM];
    for (i, c) in instance.constraints.iter().enumerate() {
        let row = &mut feats[i * FEATURE_DIM..(i + 1) * FEATURE_DIM];
        let slot = match c.sense {
            ConstraintSense::Le => 0,
            ConstraintSense::Ge => 1,
            ConstraintSense::Eq => 2,
        };
        row[slot] = 1.0;
        row[3] = c.rhs;
    }
    for (j, v) in instance.variables.iter().enumerate() {
        let row = &mut feats[(m + j) * FEATURE_DIM..(m + j + 1) * FEATURE_DIM];
        let slot = match v.var_type {
            VarType::Binary => 4,
            VarType::Integer => 5,
            VarType::Continuous => 6,
        };
        row[slot] = 1.0;
        row[7] = clip(v.lower_bound);
        row[8] = clip(v.upper_bound);
        row[9] = if negate { -v.objective_coeff } else { v.objective_coeff };
    }
    let edges = instance
        .coefficients
        .iter()
        .map(|a| Edge {
            constraint: a.row,
            variable: m + a.col,
            weight: a.value,
        })
        .collect();
    BipartiteGraph {
        name: instance.name.clone(),
        n_constraints: m,
        n_variables: n,
        node_features: feats,
        edges,
        feature_scale: None,
        negated_objective: negate,
    }
}

impl BipartiteGraph {
    pub fn n_nodes(&self) -> usize {
        self.n_constraints + self.n_variables
    }

    pub fn feature_row(&self, node: usize) -> &[f64] {
        &self.node_features[node * FEATURE_DIM..(node + 1) * FEATURE_DIM]
    }

    pub fn is_constraint(&self, node: usize) -> bool {
        node < self.n_constraints
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes()];
        for e in &self.edges {
            deg[e.constraint] += 1;
            deg[e.variable] += 1;
        }
        deg
    }

    /// Unweighted adjacency lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for e in &self.edges {
            adj[e.constraint].push(e.variable);
            adj[e.variable].push(e.constraint);
        }
        adj
    }

    pub fn message_plan(&self, aggregator: Aggregator) -> MessagePlan {
        let deg = self.degrees();
        let mut row_max = vec![0.0f64; self.n_constraints];
        for e in &self.edges {
            row_max[e.constraint] = row_max[e.constraint].max(e.weight.abs());
        }
        let cap = 2 * self.edges.len();
        let mut plan = MessagePlan {
            src: Vec::with_capacity(cap),
            dst: Vec::with_capacity(cap),
            weight: Vec::with_capacity(cap),
        };
        for e in &self.edges {
            for (s, d) in [(e.variable, e.constraint), (e.constraint, e.variable)] {
                let w = match aggregator {
                    Aggregator::Mean => 1.0 / deg[d] as f64,
                    Aggregator::Normalized => {
                        let rm = row_max[e.constraint];
                        let w = if rm > 0.0 { e.weight / rm } else { 0.0 };
                        w / ((deg[s] * deg[d]) as f64).sqrt()
                    }
                };
                plan.src.push(s);
                plan.dst.push(d);
                plan.weight.push(w);
            }
        }
        plan
    }

    /// Writes `features.csv` (node,kind,f0..f9) and `edges.csv`
    /// (constraint,variable,weight) into `dir`.
    pub fn write_debug_csv(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("features.csv"))?;
        let mut header = vec!["node".to_string(), "kind".to_string()];
        header.extend((0..FEATURE_DIM).map(|c| format!("f{c}")));
        w.write_record(&header)?;
        for node in 0..self.n_nodes() {
            let kind = if self.is_constraint(node) { "constraint" } else { "variable" };
            let mut rec = vec![node.to_string(), kind.to_string()];
            rec.extend(self.feature_row(node).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("edges.csv"))?;
        w.write_record(["constraint", "variable", "weight"])?;
        for e in &self.edges {
            w.write_record([e.constraint.to_string(), e.variable.to_string(), e.weight.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Z-score statistics of the real-valued columns. Constraint columns are
/// measured over constraint nodes and variable columns over variable nodes,
/// so the zero padding of the other node kind does not bias them.
///
/// # Panics
/// Panics on an empty corpus.
pub fn fit_feature_scale(corpus: &[BipartiteGraph]) -> FeatureScale {
    assert!(!corpus.is_empty(), "feature scaling needs at least one graph");
    let mut record = FeatureScale::default();
    for &col in &SCALED_COLUMNS {
        let constraint_col = col < 4;
        let mut count = 0usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for g in corpus {
            let range = if constraint_col {
                0..g.n_constraints
            } else {
                g.n_constraints..g.n_nodes()
            };
            for node in range {
                let v = g.node_features[node * FEATURE_DIM + col];
                count += 1;
                sum += v;
                sum_sq += v * v;
            }
        }
        if count == 0 {
            continue;
        }
        let mean = sum / count as f64;
        let var = (sum_sq / count as f64 - mean * mean).max(0.0);
        let std = var.sqrt();
        record.shift[col] = mean;
        record.scale[col] = if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 };
    }
    record
}

/// Applies `record` to the real-valued columns of the matching node kind.
/// Padding entries stay zero.
pub fn apply_feature_scale(graph: &BipartiteGraph, record: &FeatureScale) -> BipartiteGraph {
    let mut out = graph.clone();
    for node in 0..graph.n_nodes() {
        let constraint = graph.is_constraint(node);
        for &col in &SCALED_COLUMNS {
            if (col < 4) != constraint {
                continue;
            }
            let v = &mut out.node_features[node * FEATURE_DIM + col];
            *v = (*v - record.shift[col]) / record.scale[col];
        }
    }
    out.feature_scale = Some(record.clone());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geninst::{gen_instance, vertex_cover, Family, SizeTag};
    use crate::mip::{ConstraintDef, VariableDef};
    use proptest::prelude::*;

    #[test]
    fn constraint_and_variable_rows() {
        let mut m = MipInstance::new("t", ObjectiveSense::Minimize);
        let x = m.add_variable(VariableDef::binary("x", 2.0));
        let y = m.add_variable(VariableDef::continuous("y", 0.0, f64::INFINITY, 0.0));
        m.add_constraint(ConstraintDef::new("c", ConstraintSense::Le, 5.0), &[(x, 1.0), (y, 1.0)]);
        let g = to_bipartite(&m);
        assert_eq!(g.feature_row(0), &[1.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(g.feature_row(1), &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(g.feature_row(2)[8], BOUND_CLIP);
    }

    #[test]
    fn triangle_graph_shape() {
        let g = to_bipartite(&vertex_cover("t", 3, &[(0, 1), (0, 2), (1, 2)]));
        assert_eq!(g.n_nodes(), 6);
        assert_eq!(g.edges.len(), 6);
        assert!(g.edges.iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn maximization_negates_objective() {
        let g = to_bipartite(&gen_instance(Family::IndependentSet, SizeTag::Easy, 1));
        assert!(g.negated_objective);
        assert_eq!(g.feature_row(g.n_constraints)[9], -1.0);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let g = to_bipartite(&vertex_cover("t", 3, &[(0, 1), (0, 2), (1, 2)]));
        let rec = fit_feature_scale(std::slice::from_ref(&g));
        let s = apply_feature_scale(&g, &rec);
        for node in 0..3 {
            assert_eq!(s.feature_row(node)[3], 0.0);
            assert_eq!(&s.feature_row(node)[..3], &g.feature_row(node)[..3]);
        }
        for node in 3..6 {
            assert_eq!(&s.feature_row(node)[4..7], &g.feature_row(node)[4..7]);
        }
    }

    #[test]
    fn two_value_column_maps_to_unit() {
        let mut m = MipInstance::new("t", ObjectiveSense::Minimize);
        let x = m.add_variable(VariableDef::binary("x", 1.0));
        m.add_constraint(ConstraintDef::new("a", ConstraintSense::Le, 0.0), &[(x, 1.0)]);
        m.add_constraint(ConstraintDef::new("b", ConstraintSense::Le, 10.0), &[(x, 1.0)]);
        let g = to_bipartite(&m);
        let s = apply_feature_scale(&g, &fit_feature_scale(std::slice::from_ref(&g)));
        assert_eq!(s.feature_row(0)[3], -1.0);
        assert_eq!(s.feature_row(1)[3], 1.0);
    }

    #[test]
    fn message_plan_mean_weights_sum_to_one() {
        let g = to_bipartite(&gen_instance(Family::SetCover, SizeTag::Easy, 2));
        let plan = g.message_plan(Aggregator::Mean);
        let mut totals = vec![0.0; g.n_nodes()];
        for (d, w) in plan.dst.iter().zip(&plan.weight) {
            totals[*d] += w;
        }
        let deg = g.degrees();
        for (t, d) in totals.iter().zip(&deg) {
            if *d > 0 {
                assert!((t - 1.0).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn supports_are_disjoint(seed in 0u64..200, fam in 0usize..5) {
            let g = to_bipartite(&gen_instance(Family::ALL[fam], SizeTag::Easy, seed));
            let g = apply_feature_scale(&g, &fit_feature_scale(std::slice::from_ref(&g)));
            for node in 0..g.n_nodes() {
                let row = g.feature_row(node);
                if g.is_constraint(node) {
                    prop_assert!(row[4..].iter().all(|v| *v == 0.0));
                } else {
                    prop_assert!(row[..4].iter().all(|v| *v == 0.0));
                }
            }
            for e in &g.edges {
                prop_assert!(g.is_constraint(e.constraint) && !g.is_constraint(e.variable));
            }
        }
    }
}
