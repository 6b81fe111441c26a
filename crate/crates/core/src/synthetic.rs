//! Synthetic datasets with planted disparities and the location-rate
//! harness that scores how often the audit finds them.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{run_audit, AuditParams};
use crate::criterion::Criterion;
use crate::data::{AttributeKind, AttributeSchema, AuditDataset, Column, OutcomeKind};
use crate::error::{Error, Result};
use crate::splitting::derive_seed;

pub const AGE_RANGE: (f64, f64) = (18.0, 90.0);
const AGE_CENTER: f64 = 54.0;
const AGE_SPAN: f64 = 72.0;
const RACE_RATES: [f64; 3] = [0.4, 0.5, 0.6];

fn levels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn check_probs(name: &str, p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Params(format!("{name} must be non-negative and sum to 1, got {p:?}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dataset1Params {
    pub n: usize,
    pub rho: f64,
    pub w: f64,
    pub race_probs: [f64; 3],
    pub gender_probs: [f64; 3],
    pub seed: u64,
}

impl Default for Dataset1Params {
    fn default() -> Self {
        Self { n: 10_000, rho: 0.3, w: 24.0, race_probs: [0.5, 0.3, 0.2], gender_probs: [0.45, 0.45, 0.10], seed: 0 }
    }
}

impl Dataset1Params {
    /// Lower and upper edge of the elevated age interval `(lo, hi]`.
    pub fn interval(&self) -> (f64, f64) {
        (AGE_CENTER - self.w / 2.0, AGE_CENTER + self.w / 2.0)
    }

    pub fn f_age(&self, age: f64) -> f64 {
        let (lo, hi) = self.interval();
        if age > lo && age <= hi {
            0.5 + self.rho * (AGE_SPAN - self.w) / AGE_SPAN
        } else {
            0.5 - self.rho * self.w / AGE_SPAN
        }
    }

    pub fn f_race(race: usize) -> f64 {
        RACE_RATES[race]
    }

    /// Normalizer making `E[y] = 0.5`.
    pub fn g(&self) -> f64 {
        self.race_probs.iter().zip(RACE_RATES).map(|(p, f)| p * f).sum()
    }

    pub fn q(&self, age: f64, race: usize) -> f64 {
        self.f_age(age) * Self::f_race(race) / self.g()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.rho) {
            return Err(Error::Params(format!("rho must lie in [0, 0.5), got {}", self.rho)));
        }
        if !(self.w > 0.0 && self.w < AGE_SPAN) {
            return Err(Error::Params(format!("w must lie in (0, 72), got {}", self.w)));
        }
        check_probs("race_probs", &self.race_probs)?;
        check_probs("gender_probs", &self.gender_probs)?;
        let (lo, _) = self.interval();
        let worst = (0..3)
            .filter(|&r| self.race_probs[r] > 0.0)
            .flat_map(|r| [self.q(AGE_CENTER, r), self.q(lo, r)])
            .fold(0.0f64, f64::max);
        if worst > 1.0 {
            return Err(Error::Params(format!("Bernoulli parameter q = {worst:.4} exceeds 1")));
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        let (lo, hi) = self.interval();
        GroundTruth {
            attributes: ["age", "race"].into_iter().map(String::from).collect(),
            intervals: BTreeMap::from([("age".to_string(), (lo, hi))]),
            ranges: BTreeMap::from([("age".to_string(), AGE_RANGE)]),
            joint: false,
        }
    }
}

/// Columns `age, race, gender, y`.
pub fn gen_dataset1(params: &Dataset1Params) -> Result<AuditDataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let race_dist = WeightedIndex::new(params.race_probs).map_err(|e| Error::Params(e.to_string()))?;
    let gender_dist = WeightedIndex::new(params.gender_probs).map_err(|e| Error::Params(e.to_string()))?;
    let mut age = Vec::with_capacity(params.n);
    let mut race = Vec::with_capacity(params.n);
    let mut gender = Vec::with_capacity(params.n);
    let mut y = Vec::with_capacity(params.n);
    for _ in 0..params.n {
        let a = rng.random_range(AGE_RANGE.0..AGE_RANGE.1);
        let r = race_dist.sample(&mut rng);
        let g = gender_dist.sample(&mut rng);
        y.push(rng.random_bool(params.q(a, r)));
        age.push(a);
        race.push(r as u32);
        gender.push(g as u32);
    }
    AuditDataset::new(
        vec![
            AttributeSchema { name: "age".into(), kind: AttributeKind::Continuous, sensitive: true },
            AttributeSchema { name: "race".into(), kind: AttributeKind::Categorical { levels: levels("r", 3) }, sensitive: true },
            AttributeSchema { name: "gender".into(), kind: AttributeKind::Categorical { levels: levels("g", 3) }, sensitive: true },
        ],
        vec![Column::Continuous(age), Column::Categorical(race), Column::Categorical(gender)],
        "y",
        y,
        None,
        OutcomeKind::Decision,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dataset2Params {
    pub n: usize,
    pub rho: f64,
    pub seed: u64,
}

impl Default for Dataset2Params {
    fn default() -> Self {
        Self { n: 10_000, rho: 0.3, seed: 0 }
    }
}

impl Dataset2Params {
    /// Positive rate of cell `(race, gender)`, zero-based.
    pub fn s(&self, race: usize, gender: usize) -> f64 {
        if race == gender {
            0.5 - self.rho / 2.0
        } else {
            0.5 + self.rho / 2.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Params(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            attributes: ["gender", "race"].into_iter().map(String::from).collect(),
            intervals: BTreeMap::new(),
            ranges: BTreeMap::from([("age".to_string(), AGE_RANGE)]),
            joint: true,
        }
    }
}

/// Columns `race, gender, age, y`.
pub fn gen_dataset2(params: &Dataset2Params) -> Result<AuditDataset> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut race = Vec::with_capacity(params.n);
    let mut gender = Vec::with_capacity(params.n);
    let mut age = Vec::with_capacity(params.n);
    let mut y = Vec::with_capacity(params.n);
    for _ in 0..params.n {
        let r = rng.random_range(0..2usize);
        let g = rng.random_range(0..2usize);
        let a = rng.random_range(AGE_RANGE.0..AGE_RANGE.1);
        y.push(rng.random_bool(params.s(r, g)));
        race.push(r as u32);
        gender.push(g as u32);
        age.push(a);
    }
    AuditDataset::new(
        vec![
            AttributeSchema { name: "race".into(), kind: AttributeKind::Categorical { levels: levels("r", 2) }, sensitive: true },
            AttributeSchema { name: "gender".into(), kind: AttributeKind::Categorical { levels: levels("g", 2) }, sensitive: true },
            AttributeSchema { name: "age".into(), kind: AttributeKind::Continuous, sensitive: true },
        ],
        vec![Column::Categorical(race), Column::Categorical(gender), Column::Continuous(age)],
        "y",
        y,
        None,
        OutcomeKind::Decision,
    )
}

/// Which attributes carry the planted disparity and, for continuous ones,
/// where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub attributes: BTreeSet<String>,
    #[serde(default)]
    pub intervals: BTreeMap<String, (f64, f64)>,
    /// Observable range of continuous attributes, used for the tolerance
    /// span and to match unbounded interval ends.
    #[serde(default)]
    pub ranges: BTreeMap<String, (f64, f64)>,
    /// Whether all attributes must appear together in one finding. When
    /// false, each attribute may be located by a different finding.
    #[serde(default = "default_joint")]
    pub joint: bool,
}

fn default_joint() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToleranceMode {
    /// Each bound within `tol · span` of the true bound.
    #[default]
    PerBound,
    /// Summed bound deviation within `2 · tol · span`.
    IntervalDistance,
}

impl std::str::FromStr for ToleranceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-bound" => Ok(ToleranceMode::PerBound),
            "interval-distance" => Ok(ToleranceMode::IntervalDistance),
            other => Err(Error::Config(format!("unknown tolerance mode `{other}`"))),
        }
    }
}

impl GroundTruth {
    fn bounds_match(&self, criterion: &Criterion, tol: f64, mode: ToleranceMode) -> bool {
        self.intervals.iter().all(|(attr, &(t_lo, t_hi))| {
            let Some((lo, hi)) = criterion.predicate(attr).and_then(|p| p.bounds()) else {
                return false;
            };
            let (r_lo, r_hi) = self.ranges.get(attr).copied().unwrap_or((t_lo, t_hi));
            let lo = if lo.is_finite() { lo } else { r_lo };
            let hi = if hi.is_finite() { hi } else { r_hi };
            let slack = tol * (r_hi - r_lo);
            let (d_lo, d_hi) = ((lo - t_lo).abs(), (hi - t_hi).abs());
            match mode {
                ToleranceMode::PerBound => d_lo <= slack && d_hi <= slack,
                ToleranceMode::IntervalDistance => d_lo + d_hi <= 2.0 * slack,
            }
        })
    }

    /// Does this single criterion locate the disparity: exactly the true
    /// attributes, with every true interval matched?
    pub fn matches(&self, criterion: &Criterion, tol: f64, mode: ToleranceMode) -> bool {
        let attrs: BTreeSet<&str> = criterion.attributes();
        attrs.len() == self.attributes.len()
            && self.attributes.iter().all(|a| attrs.contains(a.as_str()))
            && self.bounds_match(criterion, tol, mode)
    }

    /// Does the criterion involve `attr` without any decoy attribute, and
    /// (for an attribute with a true interval) match that interval?
    pub fn locates_attribute(&self, criterion: &Criterion, attr: &str, tol: f64, mode: ToleranceMode) -> bool {
        let attrs = criterion.attributes();
        if !attrs.contains(attr) || attrs.iter().any(|a| !self.attributes.contains(*a)) {
            return false;
        }
        match self.intervals.get(attr) {
            None => true,
            Some(_) => {
                let only = GroundTruth {
                    attributes: BTreeSet::new(),
                    intervals: self.intervals.iter().filter(|(a, _)| *a == attr).map(|(a, v)| (a.clone(), *v)).collect(),
                    ranges: self.ranges.clone(),
                    joint: true,
                };
                only.bounds_match(criterion, tol, mode)
            }
        }
    }
}

/// True iff the criteria in `top` locate the ground truth: one criterion
/// matching it exactly when `joint`, otherwise every attribute located by
/// some decoy-free criterion.
pub fn locate_success<'a, I>(top: I, truth: &GroundTruth, tol: f64, mode: ToleranceMode) -> bool
where
    I: IntoIterator<Item = &'a Criterion>,
{
    let top: Vec<&Criterion> = top.into_iter().collect();
    if truth.joint {
        top.iter().any(|c| truth.matches(c, tol, mode))
    } else {
        truth.attributes.iter().all(|a| top.iter().any(|c| truth.locates_attribute(c, a, tol, mode)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    Dataset1,
    Dataset2,
}

impl Generator {
    pub fn as_str(self) -> &'static str {
        match self {
            Generator::Dataset1 => "dataset1",
            Generator::Dataset2 => "dataset2",
        }
    }
}

impl std::str::FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dataset1" => Ok(Generator::Dataset1),
            "dataset2" => Ok(Generator::Dataset2),
            other => Err(Error::Config(format!("unknown generator `{other}`"))),
        }
    }
}

/// Which engine the benchmark scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineVariant {
    #[default]
    Forest,
    /// One tree on all of D1.
    SingleTree,
}

impl EngineVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            EngineVariant::Forest => "forest",
            EngineVariant::SingleTree => "single-tree",
        }
    }

    /// Engine parameters for this variant.
    pub fn apply(self, params: &AuditParams) -> AuditParams {
        let mut out = params.clone();
        if self == EngineVariant::SingleTree {
            out.forest.n_trees = 1;
            out.forest.subsample_fraction = 1.0;
            out.forest.tree.mtry = Some(usize::MAX);
        }
        out
    }
}

impl std::str::FromStr for EngineVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forest" => Ok(EngineVariant::Forest),
            "single-tree" => Ok(EngineVariant::SingleTree),
            other => Err(Error::Config(format!("unknown engine variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub generator: Generator,
    pub n: usize,
    pub rhos: Vec<f64>,
    /// Interval widths; ignored by dataset 2.
    pub ws: Vec<f64>,
    pub runs: usize,
    pub tolerance: f64,
    pub tolerance_mode: ToleranceMode,
    pub variant: EngineVariant,
    pub race_probs: [f64; 3],
    pub gender_probs: [f64; 3],
    pub engine: AuditParams,
    pub master_seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let d1 = Dataset1Params::default();
        Self {
            generator: Generator::Dataset1,
            n: 10_000,
            rhos: vec![0.3],
            ws: vec![24.0],
            runs: 100,
            tolerance: 0.05,
            tolerance_mode: ToleranceMode::PerBound,
            variant: EngineVariant::Forest,
            race_probs: d1.race_probs,
            gender_probs: d1.gender_probs,
            engine: AuditParams::default(),
            master_seed: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::Params("runs must be at least 1".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Params("tolerance must be positive".into()));
        }
        if self.rhos.is_empty() || (self.generator == Generator::Dataset1 && self.ws.is_empty()) {
            return Err(Error::Params("sweep grid is empty".into()));
        }
        self.engine.validate()?;
        for (rho, w) in self.cells() {
            match self.generator {
                Generator::Dataset1 => self.dataset1(rho, w.unwrap_or_default(), 0).validate()?,
                Generator::Dataset2 => self.dataset2(rho, 0).validate()?,
            }
        }
        Ok(())
    }

    /// Grid cells in output order.
    pub fn cells(&self) -> Vec<(f64, Option<f64>)> {
        match self.generator {
            Generator::Dataset1 => {
                self.rhos.iter().flat_map(|&r| self.ws.iter().map(move |&w| (r, Some(w)))).collect()
            }
            Generator::Dataset2 => self.rhos.iter().map(|&r| (r, None)).collect(),
        }
    }

    fn dataset1(&self, rho: f64, w: f64, seed: u64) -> Dataset1Params {
        Dataset1Params { n: self.n, rho, w, race_probs: self.race_probs, gender_probs: self.gender_probs, seed }
    }

    fn dataset2(&self, rho: f64, seed: u64) -> Dataset2Params {
        Dataset2Params { n: self.n, rho, seed }
    }

    /// Seeds for (cell, run); independent of scheduling.
    pub fn run_seed(&self, cell: usize, run: usize) -> u64 {
        derive_seed(derive_seed(self.master_seed, cell as u64), run as u64)
    }

    pub fn params_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }
}

/// Outcome of one benchmark run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub success: bool,
    /// Dataset 1 only: the age interval located without decoys.
    pub age_located: Option<bool>,
    /// Dataset 1 only: race involved without decoys.
    pub race_located: Option<bool>,
}

/// Generate one dataset, audit it and score the top findings.
pub fn run_once(config: &BenchmarkConfig, rho: f64, w: Option<f64>, seed: u64) -> Result<RunOutcome> {
    let (data, truth) = match config.generator {
        Generator::Dataset1 => {
            let p = config.dataset1(rho, w.unwrap_or_default(), seed);
            (gen_dataset1(&p)?, p.ground_truth())
        }
        Generator::Dataset2 => {
            let p = config.dataset2(rho, seed);
            (gen_dataset2(&p)?, p.ground_truth())
        }
    };
    let mut engine = config.variant.apply(&config.engine);
    engine.forest.master_seed = derive_seed(seed, 0xA0D1);
    let run = run_audit(&data, &engine)?;
    let top: Vec<&Criterion> = run.top().into_iter().map(|f| &f.criterion).collect();
    let (tol, mode) = (config.tolerance, config.tolerance_mode);
    let success = locate_success(top.iter().copied(), &truth, tol, mode);
    let per = |attr: &str| top.iter().any(|c| truth.locates_attribute(c, attr, tol, mode));
    let (age_located, race_located) = match config.generator {
        Generator::Dataset1 => (Some(per("age")), Some(per("race"))),
        Generator::Dataset2 => (None, None),
    };
    Ok(RunOutcome { success, age_located, race_located })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub generator: String,
    pub variant: String,
    pub rho: f64,
    pub w: Option<f64>,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub stderr: f64,
    pub age_rate: Option<f64>,
    pub race_rate: Option<f64>,
    pub params_hash: String,
}

/// Binomial standard error of a success fraction.
pub fn binomial_stderr(rate: f64, runs: usize) -> f64 {
    (rate * (1.0 - rate) / runs as f64).sqrt()
}

/// Run the full sweep. Runs execute in parallel; results do not depend on
/// the thread count.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Vec<BenchmarkRow>> {
    config.validate()?;
    let hash = config.params_hash();
    let cells = config.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..config.runs).map(move |r| (c, r))).collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(c, r)| run_once(config, cells[c].0, cells[c].1, config.run_seed(c, r)))
        .collect::<Result<_>>()?;
    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, &(rho, w))| {
            let cell = &outcomes[c * config.runs..(c + 1) * config.runs];
            let frac = |f: &dyn Fn(&RunOutcome) -> bool| cell.iter().filter(|o| f(o)).count();
            let successes = frac(&|o| o.success);
            let rate = successes as f64 / config.runs as f64;
            let sub_rate = |f: &dyn Fn(&RunOutcome) -> Option<bool>| {
                cell[0].age_located.map(|_| cell.iter().filter(|o| f(o) == Some(true)).count() as f64 / config.runs as f64)
            };
            BenchmarkRow {
                generator: config.generator.as_str().into(),
                variant: config.variant.as_str().into(),
                rho,
                w,
                runs: config.runs,
                successes,
                success_rate: rate,
                stderr: binomial_stderr(rate, config.runs),
                age_rate: sub_rate(&|o| o.age_located),
                race_rate: sub_rate(&|o| o.race_located),
                params_hash: hash.clone(),
            }
        })
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV with one row per grid cell.
pub fn write_benchmark_csv<W: std::io::Write>(rows: &[BenchmarkRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "generator", "rho", "w", "runs", "success_rate", "stderr", "params_hash", "variant", "successes", "age_rate",
        "race_rate",
    ])?;
    for r in rows {
        w.write_record([
            r.generator.clone(),
            r.rho.to_string(),
            opt(r.w),
            r.runs.to_string(),
            r.success_rate.to_string(),
            r.stderr.to_string(),
            r.params_hash.clone(),
            r.variant.clone(),
            r.successes.to_string(),
            opt(r.age_rate),
            opt(r.race_rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}
