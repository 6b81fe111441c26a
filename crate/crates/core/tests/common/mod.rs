#![allow(dead_code)]

use disparity_core::{AttributeKind, AttributeSchema, AuditDataset, Column, OutcomeKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn categorical(name: &str, levels: &[&str]) -> AttributeSchema {
    AttributeSchema {
        name: name.into(),
        kind: AttributeKind::Categorical { levels: levels.iter().map(|s| s.to_string()).collect() },
        sensitive: true,
    }
}

pub fn continuous(name: &str) -> AttributeSchema {
    AttributeSchema { name: name.into(), kind: AttributeKind::Continuous, sensitive: true }
}

pub fn dataset(schema: Vec<AttributeSchema>, columns: Vec<Column>, y: Vec<bool>) -> AuditDataset {
    AuditDataset::new(schema, columns, "y", y, None, OutcomeKind::Decision).unwrap()
}

/// `K = 5` attributes (two continuous, three categorical) with `y`
/// independent of all of them.
pub fn null_dataset(n: usize, seed: u64) -> AuditDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = vec![
        continuous("a"),
        continuous("b"),
        categorical("c", &["c1", "c2"]),
        categorical("d", &["d1", "d2", "d3"]),
        categorical("e", &["e1", "e2", "e3", "e4"]),
    ];
    let columns = vec![
        Column::Continuous((0..n).map(|_| rng.random_range(0.0..100.0)).collect()),
        Column::Continuous((0..n).map(|_| rng.random_range(0..40) as f64).collect()),
        Column::Categorical((0..n).map(|_| rng.random_range(0..2)).collect()),
        Column::Categorical((0..n).map(|_| rng.random_range(0..3)).collect()),
        Column::Categorical((0..n).map(|_| rng.random_range(0..4)).collect()),
    ];
    let y = (0..n).map(|_| rng.random_bool(0.5)).collect();
    dataset(schema, columns, y)
}

/// Textbook Pearson χ² of a 2×2 table `[[a, b], [c, d]]` from expected
/// counts.
pub fn pearson_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let n = a + b + c + d;
    let rows = [a + b, c + d];
    let cols = [a + c, b + d];
    let obs = [[a, b], [c, d]];
    let mut chi = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / n;
            chi += (obs[i][j] - e).powi(2) / e;
        }
    }
    chi
}
