//! Honest splitting into halves, the randomized forest grown on the first
//! half, and the deduplicated candidate subgroups it yields.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::Criterion;
use crate::data::DataSource;
use crate::error::{Error, Result};
use crate::splitting::{derive_seed, grow_tree, terminal_criteria, SearchTree, TreeParams};

/// Stream index reserved for the D1/D2 partition.
const SPLIT_STREAM: u64 = 0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Fraction of D1 drawn without replacement for each tree.
    pub subsample_fraction: f64,
    pub tree: TreeParams,
    pub master_seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 25, subsample_fraction: 0.632, tree: TreeParams::default(), master_seed: 0 }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees < 1 {
            return Err(Error::Params("n_trees must be at least 1".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::Params(format!(
                "subsample_fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        self.tree.validate()
    }

    pub fn subsample_size(&self, d1: usize) -> usize {
        (self.subsample_fraction * d1 as f64).floor() as usize
    }

    /// Seed of tree `index`; independent of scheduling order.
    pub fn tree_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, index as u64 + 1)
    }
}

/// Uniformly random partition into D1 (`⌈M/2⌉` rows) and D2 (`⌊M/2⌋`),
/// both sorted ascending.
pub fn split_halves(n_rows: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n_rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT_STREAM));
    idx.shuffle(&mut rng);
    let mut d2 = idx.split_off(n_rows.div_ceil(2));
    idx.sort_unstable();
    d2.sort_unstable();
    (idx, d2)
}

/// Grow `n_trees` trees on without-replacement subsamples of `d1`.
/// Output order follows tree index whatever the thread schedule.
pub fn grow_forest<S: DataSource + ?Sized>(
    data: &S,
    d1: &[usize],
    sensitive: &[usize],
    params: &ForestParams,
) -> Result<Vec<SearchTree>> {
    params.validate()?;
    let size = params.subsample_size(d1.len());
    if size < params.tree.min_node_size {
        return Err(Error::TooSmall { rows: size, needed: params.tree.min_node_size });
    }
    (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let seed = params.tree_seed(t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows: Vec<usize> = sample(&mut rng, d1.len(), size).into_iter().map(|i| d1[i]).collect();
            rows.sort_unstable();
            let tree_params = TreeParams { seed: derive_seed(seed, 1), ..params.tree.clone() };
            grow_tree(data, &rows, sensitive, &tree_params)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub criterion: Criterion,
    /// Trees having this criterion as a leaf, ascending.
    pub trees: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub subgroups: Vec<Candidate>,
    pub d1: Vec<usize>,
    pub d2: Vec<usize>,
    pub master_seed: u64,
    pub tree_seeds: Vec<u64>,
    /// Leaves across all trees before deduplication.
    pub total_leaves: usize,
    /// Distinct non-empty criteria dropped for having too few D2 members.
    pub dropped_small: usize,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.subgroups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgroups.is_empty()
    }

    /// JSON with each criterion in string and structured form.
    pub fn to_json(&self) -> serde_json::Value {
        let subgroups: Vec<serde_json::Value> = self
            .subgroups
            .iter()
            .map(|c| {
                serde_json::json!({
                    "criterion": c.criterion.to_string(),
                    "predicates": c.criterion.predicates,
                    "trees": c.trees,
                })
            })
            .collect();
        serde_json::json!({
            "subgroups": subgroups,
            "provenance": {
                "master_seed": self.master_seed,
                "tree_seeds": self.tree_seeds,
                "d1": self.d1,
                "d2": self.d2,
            },
            "total_leaves": self.total_leaves,
            "dropped_small": self.dropped_small,
        })
    }
}

/// Everything Step 1 produces.
#[derive(Debug, Clone)]
pub struct ForestOutcome {
    pub candidates: CandidateSet,
    pub trees: Vec<SearchTree>,
}

/// Indices of attributes flagged sensitive.
pub fn sensitive_attributes<S: DataSource + ?Sized>(data: &S) -> Vec<usize> {
    data.schema().iter().enumerate().filter(|(_, a)| a.sensitive).map(|(i, _)| i).collect()
}

/// Merge leaf criteria across trees, drop the empty criterion and any
/// criterion with fewer than `min_count` members among `d2`.
///
/// Only predictor values of `d2` rows are read.
pub fn collect_candidates<S: DataSource + ?Sized>(
    data: &S,
    trees: &[SearchTree],
    d2: &[usize],
    min_count: usize,
) -> Result<(Vec<Candidate>, usize, usize)> {
    let mut merged: BTreeMap<Criterion, Vec<usize>> = BTreeMap::new();
    let mut total_leaves = 0;
    for (t, tree) in trees.iter().enumerate() {
        for criterion in terminal_criteria(tree) {
            total_leaves += 1;
            if criterion.is_empty() {
                continue;
            }
            let owners = merged.entry(criterion).or_default();
            if owners.last() != Some(&t) {
                owners.push(t);
            }
        }
    }
    let distinct: Vec<(Criterion, Vec<usize>)> = merged.into_iter().collect();
    let counts: Vec<usize> =
        distinct.par_iter().map(|(c, _)| c.count_rows(data, d2)).collect::<Result<_>>()?;
    let mut dropped = 0;
    let mut subgroups = Vec::new();
    for ((criterion, trees), count) in distinct.into_iter().zip(counts) {
        if count < min_count {
            dropped += 1;
        } else {
            subgroups.push(Candidate { criterion, trees });
        }
    }
    Ok((subgroups, total_leaves, dropped))
}

/// Split the data, grow the forest on D1 and collect candidate subgroups.
pub fn generate_subgroups<S: DataSource + ?Sized>(data: &S, params: &ForestParams) -> Result<ForestOutcome> {
    params.validate()?;
    let sensitive = sensitive_attributes(data);
    if sensitive.is_empty() {
        return Err(Error::Params("no attribute is flagged sensitive".into()));
    }
    let needed = 2 * params.tree.min_node_size;
    if data.n_rows() < needed {
        return Err(Error::TooSmall { rows: data.n_rows(), needed });
    }
    let (d1, d2) = split_halves(data.n_rows(), params.master_seed);
    let trees = grow_forest(data, &d1, &sensitive, params)?;
    let (subgroups, total_leaves, dropped_small) =
        collect_candidates(data, &trees, &d2, params.tree.min_leaf_size)?;
    Ok(ForestOutcome {
        candidates: CandidateSet {
            subgroups,
            d1,
            d2,
            master_seed: params.master_seed,
            tree_seeds: (0..params.n_trees).map(|t| params.tree_seed(t)).collect(),
            total_leaves,
            dropped_small,
        },
        trees,
    })
}
