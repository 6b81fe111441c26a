//! The forest is grown on D1 only and the held-out test reads only D2.

mod common;

use std::sync::atomic::{AtomicBool, Ordering};

use common::*;
use disparity_core::forest::{collect_candidates, generate_subgroups, grow_forest, split_halves, ForestParams};
use disparity_core::splitting::{ResponseMode, TreeParams};
use disparity_core::synthetic::{gen_dataset1, Dataset1Params};
use disparity_core::audit::{run_audit, AuditParams};
use disparity_core::disparity::evaluate_candidates;
use disparity_core::{AttributeSchema, AuditDataset, DataSource, FairnessMetric, OutcomeKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Records which rows had predictors and labels read.
struct Spy<'a> {
    inner: &'a AuditDataset,
    predictors: Vec<AtomicBool>,
    labels: Vec<AtomicBool>,
}

impl<'a> Spy<'a> {
    fn new(inner: &'a AuditDataset) -> Self {
        let n = inner.n_rows();
        Self {
            inner,
            predictors: (0..n).map(|_| AtomicBool::new(false)).collect(),
            labels: (0..n).map(|_| AtomicBool::new(false)).collect(),
        }
    }

    fn take(flags: &[AtomicBool]) -> Vec<usize> {
        flags.iter().enumerate().filter(|(_, f)| f.swap(false, Ordering::Relaxed)).map(|(i, _)| i).collect()
    }

    fn take_predictors(&self) -> Vec<usize> {
        Self::take(&self.predictors)
    }

    fn take_labels(&self) -> Vec<usize> {
        Self::take(&self.labels)
    }
}

impl DataSource for Spy<'_> {
    fn schema(&self) -> &[AttributeSchema] {
        self.inner.schema()
    }
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }
    fn continuous(&self, attr: usize, row: usize) -> f64 {
        self.predictors[row].store(true, Ordering::Relaxed);
        self.inner.continuous(attr, row)
    }
    fn level(&self, attr: usize, row: usize) -> u32 {
        self.predictors[row].store(true, Ordering::Relaxed);
        self.inner.level(attr, row)
    }
    fn outcome(&self, row: usize) -> bool {
        self.labels[row].store(true, Ordering::Relaxed);
        self.inner.outcome(row)
    }
    fn truth(&self, row: usize) -> Option<bool> {
        self.labels[row].store(true, Ordering::Relaxed);
        self.inner.truth(row)
    }
    fn outcome_kind(&self) -> OutcomeKind {
        self.inner.outcome_kind()
    }
    fn has_truth(&self) -> bool {
        self.inner.has_truth()
    }
}

fn subset(rows: &[usize], of: &[usize]) -> bool {
    let mut allowed = of.to_vec();
    allowed.sort_unstable();
    rows.iter().all(|r| allowed.binary_search(r).is_ok())
}

fn with_truth(base: &AuditDataset, seed: u64) -> AuditDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<bool> = (0..base.n_rows()).map(|_| rng.random_bool(0.4)).collect();
    AuditDataset::new(
        base.schema().to_vec(),
        (0..base.n_attributes()).map(|a| base.column(a).clone()).collect(),
        "y",
        base.outcomes().to_vec(),
        Some(("t".into(), truth)),
        OutcomeKind::Decision,
    )
    .unwrap()
}

fn check_phases(data: &AuditDataset, response: ResponseMode, metric: FairnessMetric) {
    let spy = Spy::new(data);
    let params = ForestParams {
        n_trees: 10,
        master_seed: 17,
        tree: TreeParams { alpha: 0.5, response, mtry: Some(2), ..Default::default() },
        ..Default::default()
    };
    let (d1, d2) = split_halves(data.n_rows(), params.master_seed);
    let sensitive = data.sensitive_indices();

    let trees = grow_forest(&spy, &d1, &sensitive, &params).unwrap();
    let read = spy.take_predictors();
    assert!(!read.is_empty());
    assert!(subset(&read, &d1), "forest growth read predictors outside D1");
    assert!(subset(&spy.take_labels(), &d1), "forest growth read labels outside D1");

    let (candidates, _, _) = collect_candidates(&spy, &trees, &d2, params.tree.min_leaf_size).unwrap();
    assert!(!candidates.is_empty());
    assert!(subset(&spy.take_predictors(), &d2), "candidate collection read predictors outside D2");
    assert!(spy.take_labels().is_empty(), "candidate collection read labels");

    evaluate_candidates(&spy, &candidates, &d2, metric).unwrap();
    let read = spy.take_predictors();
    assert!(subset(&read, &d2), "evaluation read predictors outside D2");
    assert_eq!(read.len(), d2.len());
    assert!(subset(&spy.take_labels(), &d2), "evaluation read labels outside D2");
}

#[test]
fn statistical_parity_phases_respect_the_split() {
    let data = gen_dataset1(&Dataset1Params { n: 2000, seed: 4, ..Default::default() }).unwrap();
    check_phases(&data, ResponseMode::Outcome, FairnessMetric::StatisticalParity);
}

#[test]
fn equalized_odds_phases_respect_the_split() {
    let data = with_truth(&null_dataset(1500, 8), 9);
    check_phases(&data, ResponseMode::StratifiedError, FairnessMetric::EqualizedOdds);
}

#[test]
fn held_out_labels_do_not_affect_candidates() {
    let data = gen_dataset1(&Dataset1Params { n: 2000, seed: 11, ..Default::default() }).unwrap();
    let params = AuditParams::default().resolve(&data);
    let (_, d2) = split_halves(data.n_rows(), params.forest.master_seed);
    let mut flipped = data.outcomes().to_vec();
    for &r in &d2 {
        flipped[r] = !flipped[r];
    }
    let altered = AuditDataset::new(
        data.schema().to_vec(),
        (0..data.n_attributes()).map(|a| data.column(a).clone()).collect(),
        "y",
        flipped,
        None,
        OutcomeKind::Decision,
    )
    .unwrap();

    let a = generate_subgroups(&data, &params.forest).unwrap();
    let b = generate_subgroups(&altered, &params.forest).unwrap();
    assert_eq!(a.trees, b.trees);
    assert_eq!(a.candidates, b.candidates);

    let ra = run_audit(&data, &AuditParams::default()).unwrap();
    let rb = run_audit(&altered, &AuditParams::default()).unwrap();
    assert_ne!(ra.evaluated, rb.evaluated);
}
