//! Conditional inference trees: permutation-test attribute selection,
//! best binary split search and significance-based stopping.

use std::cmp::Ordering;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::criterion::{Criterion, Predicate};
use crate::data::{AttributeKind, DataSource};
use crate::error::{Error, Result};
use crate::stats::chi2_ln_sf;

/// Correction applied to the per-attribute p-values inside a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplicity {
    #[default]
    Bonferroni,
    /// No correction: stop only when every raw p-value exceeds alpha.
    Univariate,
}

impl std::str::FromStr for Multiplicity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonferroni" => Ok(Multiplicity::Bonferroni),
            "univariate" => Ok(Multiplicity::Univariate),
            other => Err(Error::Config(format!("unknown multiplicity correction `{other}`"))),
        }
    }
}

/// What the trees try to separate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResponseMode {
    /// The binary outcome.
    #[default]
    Outcome,
    /// The error indicator, tested separately within each truth stratum so
    /// that false-positive and false-negative differences both count.
    StratifiedError,
}

impl ResponseMode {
    fn blocks(self) -> usize {
        match self {
            ResponseMode::Outcome => 1,
            ResponseMode::StratifiedError => 2,
        }
    }

    /// `(response, block)` for a row.
    #[inline]
    pub fn observe<S: DataSource + ?Sized>(self, data: &S, row: usize) -> (bool, u8) {
        match self {
            ResponseMode::Outcome => (data.outcome(row), 0),
            ResponseMode::StratifiedError => {
                let truth = data.truth(row).expect("stratified response requires truth labels");
                (data.decision(row) != truth, truth as u8)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub alpha: f64,
    pub min_node_size: usize,
    pub min_leaf_size: usize,
    pub max_depth: Option<usize>,
    /// Attributes drawn per node; `None` means `⌈√K⌉`.
    pub mtry: Option<usize>,
    pub seed: u64,
    pub multiplicity: Multiplicity,
    pub response: ResponseMode,
    /// Nodes with fewer rows use Monte-Carlo permutation p-values.
    pub mc_below: usize,
    pub mc_shuffles: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            min_node_size: 20,
            min_leaf_size: 7,
            max_depth: None,
            mtry: None,
            seed: 0,
            multiplicity: Multiplicity::Bonferroni,
            response: ResponseMode::Outcome,
            mc_below: 30,
            mc_shuffles: 10_000,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Params(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.min_leaf_size < 1 {
            return Err(Error::Params("min_leaf_size must be at least 1".into()));
        }
        if 2 * self.min_leaf_size > self.min_node_size {
            return Err(Error::Params(format!(
                "min_node_size ({}) must be at least twice min_leaf_size ({})",
                self.min_node_size, self.min_leaf_size
            )));
        }
        if self.mtry == Some(0) {
            return Err(Error::Params("mtry must be positive".into()));
        }
        if self.mc_shuffles == 0 {
            return Err(Error::Params("mc_shuffles must be positive".into()));
        }
        Ok(())
    }

    /// Resolved attribute draw size for `k` sensitive attributes.
    pub fn mtry_for(&self, k: usize) -> usize {
        let default = (k as f64).sqrt().ceil() as usize;
        self.mtry.unwrap_or(default).clamp(1, k.max(1))
    }
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ mix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Attribute values gathered for the rows of one node.
#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Continuous(Vec<f64>),
    Categorical { codes: Vec<u32>, n_levels: usize },
}

impl Values {
    pub fn gather<S: DataSource + ?Sized>(data: &S, attr: usize, rows: &[usize]) -> Self {
        match &data.schema()[attr].kind {
            AttributeKind::Continuous => Values::Continuous(rows.iter().map(|&r| data.continuous(attr, r)).collect()),
            AttributeKind::Categorical { levels } => Values::Categorical {
                codes: rows.iter().map(|&r| data.level(attr, r)).collect(),
                n_levels: levels.len(),
            },
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Values::Continuous(v) => v.len(),
            Values::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Values::Continuous(v) => v.windows(2).all(|w| w[0] == w[1]),
            Values::Categorical { codes, .. } => codes.windows(2).all(|w| w[0] == w[1]),
        }
    }
}

/// Per-block response summary.
#[derive(Debug, Clone, Copy, Default)]
struct Block {
    n: f64,
    ones: f64,
}

impl Block {
    fn mean(&self) -> f64 {
        self.ones / self.n
    }

    fn variance(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        let m = self.mean();
        m * (1.0 - m)
    }
}

fn block_summary(y: &[bool], blocks: &[u8], n_blocks: usize) -> Vec<Block> {
    let mut out = vec![Block::default(); n_blocks];
    for (&yi, &b) in y.iter().zip(blocks) {
        out[b as usize].n += 1.0;
        out[b as usize].ones += yi as u8 as f64;
    }
    out
}

/// Standardized quadratic form of the linear statistic `Σ g(x)·y`, summed
/// over blocks, and its degrees of freedom.
pub fn linear_statistic(values: &Values, y: &[bool], blocks: &[u8], n_blocks: usize) -> (f64, u32) {
    let summary = block_summary(y, blocks, n_blocks);
    let mut stat = 0.0;
    let mut df = 0;
    for (b, s) in summary.iter().enumerate() {
        let v = s.variance();
        if v <= 0.0 {
            continue;
        }
        let ybar = s.mean();
        let in_block = |i: usize| blocks[i] as usize == b;
        match values {
            Values::Continuous(x) => {
                let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
                for (_, &xi) in x.iter().enumerate().filter(|(i, _)| in_block(*i)) {
                    lo = lo.min(xi);
                    hi = hi.max(xi);
                    sum += xi;
                }
                if lo == hi {
                    continue;
                }
                let xbar = sum / s.n;
                let (mut cross, mut ss) = (0.0, 0.0);
                for (i, &xi) in x.iter().enumerate() {
                    if in_block(i) {
                        let d = xi - xbar;
                        cross += d * (y[i] as u8 as f64);
                        ss += d * d;
                    }
                }
                let var = v * s.n / (s.n - 1.0) * ss;
                if var > 0.0 {
                    stat += cross * cross / var;
                    df += 1;
                }
            }
            Values::Categorical { codes, n_levels } => {
                let mut n_l = vec![0.0f64; *n_levels];
                let mut t_l = vec![0.0f64; *n_levels];
                for (i, &c) in codes.iter().enumerate() {
                    if in_block(i) {
                        n_l[c as usize] += 1.0;
                        t_l[c as usize] += y[i] as u8 as f64;
                    }
                }
                let present = n_l.iter().filter(|&&n| n > 0.0).count();
                if present < 2 {
                    continue;
                }
                let sum: f64 = n_l
                    .iter()
                    .zip(&t_l)
                    .filter(|(n, _)| **n > 0.0)
                    .map(|(n, t)| (t - n * ybar).powi(2) / n)
                    .sum();
                stat += (s.n - 1.0) / (s.n * v) * sum;
                df += present as u32 - 1;
            }
        }
    }
    (stat, df)
}

/// Result of the independence test between one attribute and the response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Association {
    pub statistic: f64,
    pub df: u32,
    pub ln_p: f64,
    pub monte_carlo: bool,
}

impl Association {
    pub fn p_value(&self) -> f64 {
        self.ln_p.exp()
    }
}

/// Permutation test of independence. Uses the asymptotic χ² form unless
/// `mc` is given, in which case the response is shuffled within blocks.
pub fn association_test(
    values: &Values,
    y: &[bool],
    blocks: &[u8],
    n_blocks: usize,
    mc: Option<(usize, &mut ChaCha8Rng)>,
) -> Association {
    let (statistic, df) = linear_statistic(values, y, blocks, n_blocks);
    if df == 0 {
        return Association { statistic, df, ln_p: 0.0, monte_carlo: false };
    }
    match mc {
        None => Association { statistic, df, ln_p: chi2_ln_sf(statistic, df as f64), monte_carlo: false },
        Some((shuffles, rng)) => {
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_blocks];
            for (i, &b) in blocks.iter().enumerate() {
                groups[b as usize].push(i);
            }
            let mut perm = y.to_vec();
            let mut block_y: Vec<Vec<bool>> = groups.iter().map(|g| g.iter().map(|&i| y[i]).collect()).collect();
            let threshold = statistic * (1.0 - 1e-10);
            let mut hits = 0usize;
            for _ in 0..shuffles {
                for (g, ys) in groups.iter().zip(block_y.iter_mut()) {
                    ys.shuffle(rng);
                    for (&i, &v) in g.iter().zip(ys.iter()) {
                        perm[i] = v;
                    }
                }
                if linear_statistic(values, &perm, blocks, n_blocks).0 >= threshold {
                    hits += 1;
                }
            }
            let p = (hits + 1) as f64 / (shuffles + 1) as f64;
            Association { statistic, df, ln_p: p.ln(), monte_carlo: true }
        }
    }
}

/// Response and block labels for `rows`.
pub fn observe_rows<S: DataSource + ?Sized>(data: &S, rows: &[usize], mode: ResponseMode) -> (Vec<bool>, Vec<u8>) {
    rows.iter().map(|&r| mode.observe(data, r)).unzip()
}

/// p-value of independence between `attr` and the response on `rows`.
/// Constant attributes and constant responses give 1.
pub fn attribute_association_pvalue<S: DataSource + ?Sized>(
    data: &S,
    rows: &[usize],
    attr: usize,
    params: &TreeParams,
) -> f64 {
    let (y, blocks) = observe_rows(data, rows, params.response);
    let values = Values::gather(data, attr, rows);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mc = (rows.len() < params.mc_below).then_some((params.mc_shuffles, &mut rng));
    association_test(&values, &y, &blocks, params.response.blocks(), mc).p_value()
}

/// Outcome of attribute selection at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub attribute: usize,
    pub ln_p_raw: f64,
    pub ln_p_adjusted: f64,
    /// Number of non-constant candidates the correction counted.
    pub tested: usize,
}

/// Pick the candidate with the smallest corrected p-value, or `None` if
/// that p-value exceeds alpha or every candidate is constant.
pub fn select_split_attribute<S: DataSource + ?Sized>(
    data: &S,
    rows: &[usize],
    candidates: &[usize],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Option<Selection> {
    let (y, blocks) = observe_rows(data, rows, params.response);
    let n_blocks = params.response.blocks();
    let mut results: Vec<(usize, f64)> = Vec::new();
    for &attr in candidates {
        let values = Values::gather(data, attr, rows);
        if values.is_constant() {
            continue;
        }
        let mc = (rows.len() < params.mc_below).then_some((params.mc_shuffles, &mut *rng));
        let test = association_test(&values, &y, &blocks, n_blocks, mc);
        results.push((attr, test.ln_p));
    }
    choose_attribute(data, &results, params)
}

/// Apply the multiplicity correction to `(attribute, ln p)` pairs and pick
/// the winner.
pub fn choose_attribute<S: DataSource + ?Sized>(
    data: &S,
    results: &[(usize, f64)],
    params: &TreeParams,
) -> Option<Selection> {
    let m = results.len();
    if m == 0 {
        return None;
    }
    let penalty = match params.multiplicity {
        Multiplicity::Bonferroni => (m as f64).ln(),
        Multiplicity::Univariate => 0.0,
    };
    let schema = data.schema();
    let best = results
        .iter()
        .map(|&(a, lp)| (a, lp, (lp + penalty).min(0.0)))
        .min_by(|x, y| x.2.total_cmp(&y.2).then_with(|| schema[x.0].name.cmp(&schema[y.0].name)))?;
    (best.2 <= params.alpha.ln()).then_some(Selection {
        attribute: best.0,
        ln_p_raw: best.1,
        ln_p_adjusted: best.2,
        tested: m,
    })
}

/// A chosen binary split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub attribute: String,
    pub left: Predicate,
    pub right: Predicate,
    /// Sum over blocks of squared standardized two-sample statistics.
    pub statistic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ln_p_adjusted: Option<f64>,
}

/// Squared standardized difference for sending `left` rows of each block
/// to the left child.
fn two_sample(summary: &[Block], left: &[Block]) -> f64 {
    summary
        .iter()
        .zip(left)
        .map(|(s, l)| {
            let v = s.variance();
            let n_r = s.n - l.n;
            if v <= 0.0 || l.n <= 0.0 || n_r <= 0.0 {
                return 0.0;
            }
            let var = v * l.n * n_r / (s.n - 1.0);
            let d = l.ones - l.n * s.mean();
            d * d / var
        })
        .sum()
}

fn better(stat: f64, best: f64) -> bool {
    stat > best + 1e-12 * best.abs().max(1e-300)
}

/// Strongest legal binary split on `attr`, or `None` when no split leaves
/// `min_leaf_size` rows on both sides.
pub fn best_binary_split<S: DataSource + ?Sized>(
    data: &S,
    rows: &[usize],
    attr: usize,
    params: &TreeParams,
) -> Option<Split> {
    let (y, blocks) = observe_rows(data, rows, params.response);
    let n_blocks = params.response.blocks();
    let values = Values::gather(data, attr, rows);
    let schema = &data.schema()[attr];
    let summary = block_summary(&y, &blocks, n_blocks);
    let min_leaf = params.min_leaf_size;
    let n = rows.len();

    match (&values, &schema.kind) {
        (Values::Continuous(x), _) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
            let mut left = vec![Block::default(); n_blocks];
            let mut best: Option<(f64, f64)> = None;
            for (k, &i) in order.iter().enumerate() {
                left[blocks[i] as usize].n += 1.0;
                left[blocks[i] as usize].ones += y[i] as u8 as f64;
                let n_left = k + 1;
                if k + 1 == n {
                    break;
                }
                let (here, next) = (x[i], x[order[k + 1]]);
                if here == next || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let stat = two_sample(&summary, &left);
                if best.is_none_or(|(b, _)| better(stat, b)) {
                    let mut t = here + (next - here) / 2.0;
                    if t >= next {
                        t = here;
                    }
                    best = Some((stat, t));
                }
            }
            let (statistic, t) = best?;
            Some(Split {
                attribute: schema.name.clone(),
                left: Predicate::at_most(&schema.name, t).ok()?,
                right: Predicate::greater_than(&schema.name, t).ok()?,
                statistic,
                ln_p_adjusted: None,
            })
        }
        (Values::Categorical { codes, n_levels }, AttributeKind::Categorical { levels }) => {
            let mut per_level = vec![vec![Block::default(); n_blocks]; *n_levels];
            for (i, &c) in codes.iter().enumerate() {
                per_level[c as usize][blocks[i] as usize].n += 1.0;
                per_level[c as usize][blocks[i] as usize].ones += y[i] as u8 as f64;
            }
            let count = |l: usize| per_level[l].iter().map(|b| b.n).sum::<f64>() as usize;
            let present: Vec<usize> = (0..*n_levels).filter(|&l| count(l) > 0).collect();
            if present.len() < 2 {
                return None;
            }
            let partitions: Vec<Vec<usize>> = if present.len() <= 6 {
                let k = present.len();
                (1..(1u32 << k) - 1)
                    .filter(|mask| mask & 1 == 1)
                    .map(|mask| (0..k).filter(|j| mask >> j & 1 == 1).map(|j| present[j]).collect())
                    .collect()
            } else {
                let score = |l: usize| -> f64 {
                    let b = &per_level[l];
                    match params.response {
                        ResponseMode::Outcome => b[0].ones / b[0].n,
                        ResponseMode::StratifiedError => {
                            let rate = |blk: &Block| if blk.n > 0.0 { blk.ones / blk.n } else { 0.0 };
                            rate(&b[0]) - rate(&b[1])
                        }
                    }
                };
                let mut ordered = present.clone();
                ordered.sort_by(|&a, &b| score(a).total_cmp(&score(b)).then(a.cmp(&b)));
                (1..ordered.len()).map(|k| ordered[..k].to_vec()).collect()
            };
            let mut best: Option<(f64, Vec<usize>)> = None;
            for side in partitions {
                let other: Vec<usize> = present.iter().copied().filter(|l| !side.contains(l)).collect();
                let left_side = orient(side, other, levels);
                let mut left = vec![Block::default(); n_blocks];
                for &l in &left_side {
                    for (acc, b) in left.iter_mut().zip(&per_level[l]) {
                        acc.n += b.n;
                        acc.ones += b.ones;
                    }
                }
                let n_left: usize = left_side.iter().map(|&l| count(l)).sum();
                if n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let stat = two_sample(&summary, &left);
                let replace = match &best {
                    None => true,
                    Some((b, cur)) => {
                        better(stat, *b) || (!better(*b, stat) && partition_order(&left_side, cur, levels).is_lt())
                    }
                };
                if replace {
                    best = Some((stat, left_side));
                }
            }
            let (statistic, left_side) = best?;
            let left_names: Vec<&str> = left_side.iter().map(|&l| levels[l].as_str()).collect();
            let right_names: Vec<&str> =
                levels.iter().map(String::as_str).filter(|l| !left_names.contains(l)).collect();
            Some(Split {
                attribute: schema.name.clone(),
                left: Predicate::one_of(&schema.name, left_names).ok()?,
                right: Predicate::one_of(&schema.name, right_names).ok()?,
                statistic,
                ln_p_adjusted: None,
            })
        }
        _ => None,
    }
}

fn sorted_names<'a>(side: &[usize], levels: &'a [String]) -> Vec<&'a str> {
    let mut names: Vec<&str> = side.iter().map(|&l| levels[l].as_str()).collect();
    names.sort_unstable();
    names
}

/// Fewer levels first, then lexicographically smaller level names.
fn partition_order(a: &[usize], b: &[usize], levels: &[String]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| sorted_names(a, levels).cmp(&sorted_names(b, levels)))
}

/// The side of a two-way partition that becomes the left child.
fn orient(a: Vec<usize>, b: Vec<usize>, levels: &[String]) -> Vec<usize> {
    if partition_order(&a, &b, levels).is_le() {
        a
    } else {
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    /// Canonical conjunction of the edge predicates from the root.
    pub criterion: Criterion,
    /// Training rows reaching this node.
    #[serde(skip)]
    pub rows: Vec<usize>,
    pub n_rows: usize,
    /// Rows with a positive response (outcome, or error indicator).
    pub n_positive: usize,
    /// Response rate in the node minus the rate in the rest of the tree's
    /// training rows.
    pub psi: f64,
    pub split: Option<Split>,
    pub children: Option<(usize, usize)>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Arena of nodes; node 0 is the root and ids follow depth-first order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub seed: u64,
    pub nodes: Vec<TreeNode>,
}

impl SearchTree {
    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }
}

struct Grower<'a, S: ?Sized> {
    data: &'a S,
    params: &'a TreeParams,
    sensitive: &'a [usize],
    mtry: usize,
    nodes: Vec<TreeNode>,
    root_total: (usize, usize),
}

impl<S: DataSource + ?Sized> Grower<'_, S> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize, parent: Option<usize>, criterion: Criterion) -> usize {
        let id = self.nodes.len();
        let positives = rows.iter().filter(|&&r| self.params.response.observe(self.data, r).0).count();
        let (total_n, total_pos) = self.root_total;
        let outside = total_n - rows.len();
        let psi = if rows.is_empty() || outside == 0 {
            0.0
        } else {
            positives as f64 / rows.len() as f64 - (total_pos - positives) as f64 / outside as f64
        };
        self.nodes.push(TreeNode {
            id,
            depth,
            parent,
            criterion,
            rows: Vec::new(),
            n_rows: rows.len(),
            n_positive: positives,
            psi,
            split: None,
            children: None,
        });

        let can_split = rows.len() >= self.params.min_node_size
            && self.params.max_depth.is_none_or(|d| depth < d)
            && !self.sensitive.is_empty();
        if can_split {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.params.seed, id as u64));
            let candidates: Vec<usize> = self.sensitive.choose_multiple(&mut rng, self.mtry).copied().collect();
            if let Some(sel) = select_split_attribute(self.data, &rows, &candidates, self.params, &mut rng) {
                if let Some(mut split) = best_binary_split(self.data, &rows, sel.attribute, self.params) {
                    split.ln_p_adjusted = Some(sel.ln_p_adjusted);
                    let mask = Criterion::new(vec![split.left.clone()])
                        .membership_rows(self.data, &rows)
                        .expect("split predicate matches schema");
                    let (left_rows, right_rows): (Vec<(usize, bool)>, Vec<(usize, bool)>) =
                        rows.iter().copied().zip(mask).partition(|(_, m)| *m);
                    let base = self.nodes[id].criterion.clone();
                    let left_crit = base.and(split.left.clone()).canonicalize().expect("satisfiable split");
                    let right_crit = base.and(split.right.clone()).canonicalize().expect("satisfiable split");
                    self.nodes[id].split = Some(split);
                    let l = self.grow(left_rows.into_iter().map(|(r, _)| r).collect(), depth + 1, Some(id), left_crit);
                    let r = self.grow(right_rows.into_iter().map(|(r, _)| r).collect(), depth + 1, Some(id), right_crit);
                    self.nodes[id].children = Some((l, r));
                }
            }
        }
        self.nodes[id].rows = rows;
        id
    }
}

/// Grow one tree on `rows`, splitting only on `sensitive` attributes.
pub fn grow_tree<S: DataSource + ?Sized>(
    data: &S,
    rows: &[usize],
    sensitive: &[usize],
    params: &TreeParams,
) -> Result<SearchTree> {
    params.validate()?;
    if params.response == ResponseMode::StratifiedError && !data.has_truth() {
        return Err(Error::TruthRequired("equalized-odds"));
    }
    let positives = rows.iter().filter(|&&r| params.response.observe(data, r).0).count();
    let mut grower = Grower {
        data,
        params,
        sensitive,
        mtry: params.mtry_for(sensitive.len()),
        nodes: Vec::new(),
        root_total: (rows.len(), positives),
    };
    grower.grow(rows.to_vec(), 0, None, Criterion::default());
    Ok(SearchTree { seed: params.seed, nodes: grower.nodes })
}

/// One canonical criterion per leaf, in node order.
pub fn terminal_criteria(tree: &SearchTree) -> Vec<Criterion> {
    tree.leaves().map(|n| n.criterion.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AttributeSchema, AuditDataset, Column, OutcomeKind};

    fn dataset(cols: Vec<(&str, Column, Option<Vec<&str>>)>, y: Vec<bool>) -> AuditDataset {
        let mut schema = Vec::new();
        let mut columns = Vec::new();
        for (name, col, levels) in cols {
            let kind = match levels {
                Some(l) => AttributeKind::Categorical { levels: l.into_iter().map(String::from).collect() },
                None => AttributeKind::Continuous,
            };
            schema.push(AttributeSchema { name: name.into(), kind, sensitive: true });
            columns.push(col);
        }
        AuditDataset::new(schema, columns, "y", y, None, OutcomeKind::Decision).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(TreeParams::default().validate().is_ok());
        assert!(TreeParams { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(TreeParams { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(TreeParams { min_leaf_size: 0, ..Default::default() }.validate().is_err());
        assert!(TreeParams { min_leaf_size: 11, ..Default::default() }.validate().is_err());
        assert_eq!(TreeParams::default().mtry_for(3), 2);
        assert_eq!(TreeParams::default().mtry_for(5), 3);
        assert_eq!(TreeParams::default().mtry_for(1), 1);
    }

    #[test]
    fn constant_outcome_gives_unit_p() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let d = dataset(vec![("x", Column::Continuous(x), None)], vec![true; 50]);
        let rows: Vec<usize> = (0..50).collect();
        assert_eq!(attribute_association_pvalue(&d, &rows, 0, &TreeParams::default()), 1.0);
    }

    #[test]
    fn constant_attribute_gives_unit_p() {
        let d = dataset(
            vec![("x", Column::Continuous(vec![3.0; 40]), None)],
            (0..40).map(|i| i % 2 == 0).collect(),
        );
        let rows: Vec<usize> = (0..40).collect();
        assert_eq!(attribute_association_pvalue(&d, &rows, 0, &TreeParams::default()), 1.0);
    }

    #[test]
    fn aligned_binary_attribute_is_highly_significant() {
        let y: Vec<bool> = (0..200).map(|i| i < 100).collect();
        let codes: Vec<u32> = y.iter().map(|&b| b as u32).collect();
        let d = dataset(vec![("a", Column::Categorical(codes), Some(vec!["n", "p"]))], y);
        let rows: Vec<usize> = (0..200).collect();
        assert!(attribute_association_pvalue(&d, &rows, 0, &TreeParams::default()) < 1e-6);
    }

    #[test]
    fn bonferroni_arithmetic() {
        let d = dataset(
            vec![
                ("a", Column::Continuous(vec![0.0, 1.0]), None),
                ("b", Column::Continuous(vec![0.0, 1.0]), None),
                ("c", Column::Continuous(vec![0.0, 1.0]), None),
            ],
            vec![false, true],
        );
        let results = [(0, 0.04f64.ln()), (1, 0.5f64.ln()), (2, 0.9f64.ln())];
        assert!(choose_attribute(&d, &results, &TreeParams::default()).is_none());
        let uni = TreeParams { multiplicity: Multiplicity::Univariate, ..Default::default() };
        let sel = choose_attribute(&d, &results, &uni).unwrap();
        assert_eq!(sel.attribute, 0);
        let two = [(0, 0.04f64.ln()), (1, 0.5f64.ln())];
        let sel = choose_attribute(&d, &two, &TreeParams::default()).unwrap();
        assert!((sel.ln_p_adjusted.exp() - 0.08).abs() < 1e-12);
    }

    #[test]
    fn tie_breaks_on_attribute_name() {
        let d = dataset(
            vec![
                ("zeta", Column::Continuous(vec![0.0, 1.0]), None),
                ("alpha", Column::Continuous(vec![0.0, 1.0]), None),
            ],
            vec![false, true],
        );
        let results = [(0, 0.001f64.ln()), (1, 0.001f64.ln())];
        assert_eq!(choose_attribute(&d, &results, &TreeParams::default()).unwrap().attribute, 1);
    }

    #[test]
    fn all_constant_candidates_select_nothing() {
        let d = dataset(
            vec![("a", Column::Continuous(vec![1.0; 30]), None), ("b", Column::Categorical(vec![0; 30]), Some(vec!["u", "v"]))],
            (0..30).map(|i| i % 3 == 0).collect(),
        );
        let rows: Vec<usize> = (0..30).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(select_split_attribute(&d, &rows, &[0, 1], &TreeParams::default(), &mut rng).is_none());
    }

    #[test]
    fn separating_threshold_is_found() {
        let x: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let y: Vec<bool> = x.iter().map(|&v| v > 50.0).collect();
        let d = dataset(vec![("x", Column::Continuous(x), None)], y);
        let rows: Vec<usize> = (0..101).collect();
        let split = best_binary_split(&d, &rows, 0, &TreeParams::default()).unwrap();
        let (_, t) = split.left.bounds().unwrap();
        assert!((t - 50.0).abs() <= 1.0, "threshold {t}");
        assert_eq!(split.right.bounds().unwrap().0, t);
    }

    #[test]
    fn single_value_has_no_split() {
        let d = dataset(vec![("x", Column::Continuous(vec![2.0; 10]), None)], (0..10).map(|i| i < 5).collect());
        let rows: Vec<usize> = (0..10).collect();
        let p = TreeParams { min_node_size: 4, min_leaf_size: 2, ..Default::default() };
        assert!(best_binary_split(&d, &rows, 0, &p).is_none());
    }

    #[test]
    fn min_leaf_size_is_respected() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y: Vec<bool> = (0..30).map(|i| i < 3).collect();
        let d = dataset(vec![("x", Column::Continuous(x), None)], y);
        let rows: Vec<usize> = (0..30).collect();
        let split = best_binary_split(&d, &rows, 0, &TreeParams::default()).unwrap();
        let (_, t) = split.left.bounds().unwrap();
        assert!((6.0..=22.5).contains(&t), "threshold {t}");
    }

    #[test]
    fn categorical_partition_with_absent_levels() {
        // level "d" is declared but never observed
        let codes: Vec<u32> = (0..90).map(|i| (i % 3) as u32).collect();
        let y: Vec<bool> = codes.iter().map(|&c| c == 1).collect();
        let d = dataset(vec![("a", Column::Categorical(codes), Some(vec!["a", "b", "c", "d"]))], y);
        let rows: Vec<usize> = (0..90).collect();
        let split = best_binary_split(&d, &rows, 0, &TreeParams::default()).unwrap();
        let left: Vec<&str> = split.left.levels().unwrap().iter().map(String::as_str).collect();
        let right: Vec<&str> = split.right.levels().unwrap().iter().map(String::as_str).collect();
        assert_eq!(left, vec!["b"]);
        assert_eq!(right, vec!["a", "c", "d"]);
    }

    #[test]
    fn single_node_tree_for_constant_outcome() {
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let d = dataset(vec![("x", Column::Continuous(x), None)], vec![false; 100]);
        let rows: Vec<usize> = (0..100).collect();
        let tree = grow_tree(&d, &rows, &[0], &TreeParams::default()).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(terminal_criteria(&tree), vec![Criterion::default()]);
    }

    #[test]
    fn depth_cap_limits_nodes() {
        let x: Vec<f64> = (0..400).map(f64::from).collect();
        let z: Vec<u32> = (0..400).map(|i| i % 2).collect();
        let y: Vec<bool> = (0..400).map(|i| i < 200 && i % 2 == 0).collect();
        let d = dataset(
            vec![("x", Column::Continuous(x), None), ("z", Column::Categorical(z), Some(vec!["a", "b"]))],
            y,
        );
        let rows: Vec<usize> = (0..400).collect();
        let p = TreeParams { max_depth: Some(1), mtry: Some(2), ..Default::default() };
        let tree = grow_tree(&d, &rows, &[0, 1], &p).unwrap();
        assert!(tree.nodes.len() <= 3);
        let p = TreeParams { mtry: Some(2), ..Default::default() };
        let unlimited = grow_tree(&d, &rows, &[0, 1], &p).unwrap();
        assert!(unlimited.nodes.len() > 3);
    }

    #[test]
    fn seeds_are_mixed() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(9, 4), derive_seed(9, 4));
    }
}
