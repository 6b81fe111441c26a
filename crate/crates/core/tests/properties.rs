mod common;

use common::*;
use disparity_core::criterion::{Criterion, Predicate};
use disparity_core::disparity::{
    benjamini_hochberg, chi2_sp, disparity_eo, disparity_sp, Assessment, ContingencyCounts, DisparityFinding,
    OddsCounts, ParityCounts,
};
use disparity_core::report::{rank, RankingMode};
use disparity_core::splitting::{grow_tree, terminal_criteria, TreeParams};
use disparity_core::synthetic::{locate_success, Dataset1Params, ToleranceMode};
use disparity_core::{AuditDataset, Column, Error};
use proptest::prelude::*;

const LEVELS: [&str; 4] = ["a", "b", "c", "d"];

fn fixture() -> AuditDataset {
    let n = 60;
    dataset(
        vec![continuous("x"), categorical("c", &LEVELS)],
        vec![
            Column::Continuous((0..n).map(|i| (i % 20) as f64 * 0.5).collect()),
            Column::Categorical((0..n).map(|i| (i % 4) as u32).collect()),
        ],
        (0..n).map(|i| i % 3 == 0).collect(),
    )
}

fn predicate() -> impl Strategy<Value = Predicate> {
    prop_oneof![
        (0.0..10.0f64, 0.0..10.0f64).prop_map(|(a, b)| {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if lo == hi {
                Predicate::at_most("x", hi).unwrap()
            } else {
                Predicate::interval("x", lo, hi).unwrap()
            }
        }),
        (0.0..10.0f64).prop_map(|t| Predicate::at_most("x", t).unwrap()),
        (0.0..10.0f64).prop_map(|t| Predicate::greater_than("x", t).unwrap()),
        proptest::sample::subsequence(LEVELS.to_vec(), 1..=4)
            .prop_map(|ls| Predicate::one_of("c", ls).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn canonicalize_preserves_membership(preds in proptest::collection::vec(predicate(), 1..5)) {
        let data = fixture();
        let rows: Vec<usize> = (0..60).collect();
        let raw = Criterion::new(preds);
        let mask = raw.membership_rows(&data, &rows).unwrap();
        match raw.canonicalize() {
            Ok(canon) => {
                prop_assert_eq!(canon.membership_rows(&data, &rows).unwrap(), mask);
                prop_assert_eq!(canon.canonicalize().unwrap(), canon.clone());
                // the text form writes a bounded interval as two conjuncts
                let parsed = Criterion::parse(&canon.to_string()).unwrap();
                prop_assert_eq!(parsed.to_string(), canon.to_string());
                prop_assert_eq!(parsed.canonicalize().unwrap(), canon);
            }
            Err(Error::Unsatisfiable(_)) => prop_assert!(mask.iter().all(|m| !m)),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn bh_properties(p in proptest::collection::vec(0.0..=1.0f64, 1..40), seed in any::<u64>()) {
        let adj = benjamini_hochberg(&p).unwrap();
        for (a, r) in adj.iter().zip(&p) {
            prop_assert!(*a >= *r - 1e-15 && *a <= 1.0);
        }
        // monotone in the sorted raw values
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.sort_by(|&i, &j| p[i].total_cmp(&p[j]));
        for w in idx.windows(2) {
            prop_assert!(adj[w[0]] <= adj[w[1]] + 1e-15);
        }
        // order invariance
        let mut perm: Vec<usize> = (0..p.len()).collect();
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let adj2 = benjamini_hochberg(&shuffled).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((adj2[k] - adj[i]).abs() <= 1e-15);
        }
    }

    #[test]
    fn chi2_sp_is_pearson_and_symmetric(a in 1u64..5000, b in 1u64..5000, c in 1u64..5000, d in 1u64..5000) {
        let t = ParityCounts { pos_in: a, neg_in: b, pos_out: c, neg_out: d };
        let chi = chi2_sp(&t).unwrap();
        let oracle = pearson_2x2(a as f64, b as f64, c as f64, d as f64);
        prop_assert!((chi.statistic - oracle).abs() <= 1e-10 * oracle.max(1e-12));
        prop_assert_eq!(chi.df, 1);
        let swapped = chi2_sp(&t.swapped()).unwrap();
        prop_assert!((swapped.statistic - chi.statistic).abs() <= 1e-12 * chi.statistic.max(1.0));
        let psi = disparity_sp(&t).unwrap();
        prop_assert!((-1.0..=1.0).contains(&psi));
        prop_assert!((disparity_sp(&t.swapped()).unwrap() + psi).abs() < 1e-12);
    }

    #[test]
    fn odds_disparity_is_mean_of_components(v in proptest::array::uniform8(1u64..500)) {
        let c = OddsCounts {
            fp_in: v[0], tn_in: v[1], fn_in: v[2], tp_in: v[3],
            fp_out: v[4], tn_out: v[5], fn_out: v[6], tp_out: v[7],
        };
        let d = disparity_eo(&c).unwrap();
        prop_assert!((d.psi - 0.5 * (d.fpr.abs() + d.fnr.abs())).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&d.psi));
    }

    #[test]
    fn leaves_partition_the_root(seed in any::<u64>(), n in 40usize..240, alpha in 0.05..0.95f64) {
        let data = null_dataset(n, seed);
        let rows: Vec<usize> = (0..n).filter(|r| r % 5 != 0).collect();
        let params = TreeParams { alpha, seed, mtry: Some(3), ..Default::default() };
        let tree = grow_tree(&data, &rows, &[0, 1, 2, 3, 4], &params).unwrap();
        prop_assert_eq!(&tree, &grow_tree(&data, &rows, &[0, 1, 2, 3, 4], &params).unwrap());
        let mut owner = vec![usize::MAX; data_len(&data)];
        for (k, c) in terminal_criteria(&tree).iter().enumerate() {
            let mask = c.membership_rows(&data, &rows).unwrap();
            for (&r, m) in rows.iter().zip(mask) {
                if m {
                    prop_assert_eq!(owner[r], usize::MAX, "row {} in two leaves", r);
                    owner[r] = k;
                }
            }
        }
        prop_assert!(rows.iter().all(|&r| owner[r] != usize::MAX));
        for node in &tree.nodes {
            if let Some((l, r)) = node.children {
                let (l, r) = (&tree.nodes[l], &tree.nodes[r]);
                prop_assert!(l.n_rows >= params.min_leaf_size && r.n_rows >= params.min_leaf_size);
                prop_assert_eq!(l.n_rows + r.n_rows, node.n_rows);
                prop_assert!(node.split.is_some());
            } else {
                prop_assert!(node.split.is_none());
            }
        }
    }

    #[test]
    fn location_is_monotone_in_tolerance(lo in 18.0..80.0f64, width in 1.0..40.0f64, t in 0.001..0.2f64, dt in 0.0..0.3f64) {
        let truth = Dataset1Params::default().ground_truth();
        let c1 = Criterion::new(vec![Predicate::interval("age", lo, lo + width).unwrap()]);
        let c2 = Criterion::new(vec![Predicate::one_of("race", ["r1"]).unwrap()]);
        for mode in [ToleranceMode::PerBound, ToleranceMode::IntervalDistance] {
            if locate_success([&c1, &c2], &truth, t, mode) {
                prop_assert!(locate_success([&c1, &c2], &truth, t + dt, mode));
            }
        }
    }

    #[test]
    fn ranking_orders_its_key(items in proptest::collection::vec((1e-12..1.0f64, -1.0..1.0f64), 1..30)) {
        let findings: Vec<DisparityFinding> = items
            .iter()
            .enumerate()
            .map(|(i, &(p, psi))| DisparityFinding {
                criterion: Criterion::new(vec![Predicate::one_of("g", [format!("l{i}")]).unwrap()]),
                source_trees: vec![0],
                count: 1,
                share: 0.1,
                counts: ContingencyCounts::StatisticalParity(ParityCounts::default()),
                assessment: Some(Assessment {
                    psi, psi_fpr: None, psi_fnr: None, chi2: 1.0, df: 1,
                    p_raw: p, p_adjusted: p, ln_p_raw: p.ln(), ln_p_adjusted: p.ln(),
                }),
                untestable: None,
            })
            .collect();
        let conf = rank(&findings, RankingMode::Confidence);
        for w in conf.windows(2) {
            prop_assert!(w[0].assessment.as_ref().unwrap().p_adjusted <= w[1].assessment.as_ref().unwrap().p_adjusted);
        }
        let mag = rank(&findings, RankingMode::Magnitude);
        for w in mag.windows(2) {
            prop_assert!(w[0].abs_psi().unwrap() >= w[1].abs_psi().unwrap());
        }
        prop_assert_eq!(conf.len(), findings.len());
    }
}

fn data_len(d: &AuditDataset) -> usize {
    disparity_core::DataSource::n_rows(d)
}
