//! Held-out disparity assessment: statistical parity and equalized-odds
//! differences, their χ² tests, and Benjamini–Hochberg adjustment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::Criterion;
use crate::data::{DataSource, FairnessMetric};
use crate::error::{Error, Result};
use crate::forest::Candidate;
use crate::stats::chi2_ln_sf;

/// Positive/negative outcome counts inside and outside a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParityCounts {
    pub pos_in: u64,
    pub neg_in: u64,
    pub pos_out: u64,
    pub neg_out: u64,
}

impl ParityCounts {
    pub fn total(&self) -> u64 {
        self.pos_in + self.neg_in + self.pos_out + self.neg_out
    }

    /// The same table with group and complement exchanged.
    pub fn swapped(&self) -> Self {
        Self { pos_in: self.pos_out, neg_in: self.neg_out, pos_out: self.pos_in, neg_out: self.neg_in }
    }
}

/// Confusion-matrix cells inside and outside a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OddsCounts {
    pub fp_in: u64,
    pub tn_in: u64,
    pub fn_in: u64,
    pub tp_in: u64,
    pub fp_out: u64,
    pub tn_out: u64,
    pub fn_out: u64,
    pub tp_out: u64,
}

impl OddsCounts {
    pub fn total(&self) -> u64 {
        self.fp_in + self.tn_in + self.fn_in + self.tp_in + self.fp_out + self.tn_out + self.fn_out + self.tp_out
    }

    /// FP vs TN, inside vs outside, laid out as a 2×2 table.
    pub fn fpr_table(&self) -> ParityCounts {
        ParityCounts { pos_in: self.fp_in, neg_in: self.tn_in, pos_out: self.fp_out, neg_out: self.tn_out }
    }

    /// FN vs TP, inside vs outside.
    pub fn fnr_table(&self) -> ParityCounts {
        ParityCounts { pos_in: self.fn_in, neg_in: self.tp_in, pos_out: self.fn_out, neg_out: self.tp_out }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContingencyCounts {
    StatisticalParity(ParityCounts),
    EqualizedOdds(OddsCounts),
}

/// Reason a candidate could not be tested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Untestable(pub String);

impl std::fmt::Display for Untestable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn rate(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Statistical parity difference: positive rate inside minus outside.
pub fn disparity_sp(c: &ParityCounts) -> Result<f64, Untestable> {
    let inside = rate(c.pos_in, c.pos_in + c.neg_in).ok_or_else(|| Untestable("empty group".into()))?;
    let outside =
        rate(c.pos_out, c.pos_out + c.neg_out).ok_or_else(|| Untestable("empty complement".into()))?;
    Ok(inside - outside)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsDisparity {
    /// Absolute odds difference, `(|fpr| + |fnr|) / 2`.
    pub psi: f64,
    /// FPR inside minus FPR outside.
    pub fpr: f64,
    /// FNR inside minus FNR outside.
    pub fnr: f64,
}

pub fn disparity_eo(c: &OddsCounts) -> Result<OddsDisparity, Untestable> {
    let undefined = |what: &str| Untestable(format!("{what} undefined (no cases)"));
    let fpr_in = rate(c.fp_in, c.fp_in + c.tn_in).ok_or_else(|| undefined("FPR inside group"))?;
    let fpr_out = rate(c.fp_out, c.fp_out + c.tn_out).ok_or_else(|| undefined("FPR outside group"))?;
    let fnr_in = rate(c.fn_in, c.fn_in + c.tp_in).ok_or_else(|| undefined("FNR inside group"))?;
    let fnr_out = rate(c.fn_out, c.fn_out + c.tp_out).ok_or_else(|| undefined("FNR outside group"))?;
    let fpr = fpr_in - fpr_out;
    let fnr = fnr_in - fnr_out;
    Ok(OddsDisparity { psi: 0.5 * (fpr.abs() + fnr.abs()), fpr, fnr })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub df: u32,
    /// Natural log of the upper-tail p-value.
    pub ln_p: f64,
}

impl ChiSquare {
    pub fn p_value(&self) -> f64 {
        self.ln_p.exp()
    }
}

/// Pearson χ² (df = 1, no continuity correction) on the outcome × membership
/// table:
/// `|D| (P_G N_out − N_G P_out)² / ((P_G+N_G)(P_out+N_out)(N_G+N_out)(P_G+P_out))`.
pub fn chi2_sp(c: &ParityCounts) -> Result<ChiSquare, Untestable> {
    let (a, b, cc, d) = (c.pos_in as f64, c.neg_in as f64, c.pos_out as f64, c.neg_out as f64);
    let group = a + b;
    let complement = cc + d;
    let negatives = b + d;
    let positives = a + cc;
    if group == 0.0 || complement == 0.0 || negatives == 0.0 || positives == 0.0 {
        return Err(Untestable("degenerate marginal in 2x2 table".into()));
    }
    let n = group + complement;
    let cross = a * d - b * cc;
    // divide step by step to stay clear of overflow on large tables
    let statistic = n * (cross / group) * (cross / complement) / negatives / positives;
    Ok(ChiSquare { statistic, df: 1, ln_p: chi2_ln_sf(statistic, 1.0) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OddsChiSquare {
    /// Fisher combination, χ² with 4 degrees of freedom.
    pub combined: ChiSquare,
    pub fpr: ChiSquare,
    pub fnr: ChiSquare,
}

/// Pearson χ² on the FPR and FNR tables, combined by Fisher's method
/// `−2 (ln p_fpr + ln p_fnr) ~ χ²₄`.
pub fn chi2_eo(c: &OddsCounts) -> Result<OddsChiSquare, Untestable> {
    let fpr = chi2_sp(&c.fpr_table()).map_err(|e| Untestable(format!("FPR table: {e}")))?;
    let fnr = chi2_sp(&c.fnr_table()).map_err(|e| Untestable(format!("FNR table: {e}")))?;
    let statistic = fisher_statistic(&[fpr.ln_p, fnr.ln_p]);
    Ok(OddsChiSquare { combined: ChiSquare { statistic, df: 4, ln_p: chi2_ln_sf(statistic, 4.0) }, fpr, fnr })
}

/// `−2 Σ ln p` over log p-values.
pub fn fisher_statistic(ln_ps: &[f64]) -> f64 {
    -2.0 * ln_ps.iter().sum::<f64>()
}

/// Benjamini–Hochberg step-up adjusted p-values, in input order.
pub fn benjamini_hochberg(p_raw: &[f64]) -> Result<Vec<f64>> {
    if let Some(&bad) = p_raw.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::PValueRange(bad));
    }
    let logs: Vec<f64> = p_raw.iter().map(|p| p.ln()).collect();
    Ok(benjamini_hochberg_ln(&logs).into_iter().map(f64::exp).collect())
}

/// Benjamini–Hochberg on natural-log p-values; returns log adjusted values.
/// `ln p_adj(i) = min_{j ≥ i} (ln p_(j) + ln m − ln j)`, capped at 0.
pub fn benjamini_hochberg_ln(ln_p: &[f64]) -> Vec<f64> {
    let m = ln_p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| ln_p[a].total_cmp(&ln_p[b]).then(a.cmp(&b)));
    let ln_m = (m as f64).ln();
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0_f64;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let candidate = ln_p[idx] + ln_m - ((rank + 1) as f64).ln();
        running = running.min(candidate);
        adjusted[idx] = running.min(0.0).max(ln_p[idx]);
    }
    adjusted
}

/// Measured disparity and test outcome for a testable subgroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub psi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_fpr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_fnr: Option<f64>,
    pub chi2: f64,
    pub df: u32,
    pub p_raw: f64,
    pub p_adjusted: f64,
    pub ln_p_raw: f64,
    pub ln_p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityFinding {
    pub criterion: Criterion,
    pub source_trees: Vec<usize>,
    /// Members in the held-out half.
    pub count: u64,
    /// Members as a share of the held-out half.
    pub share: f64,
    pub counts: ContingencyCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assessment: Option<Assessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub untestable: Option<String>,
}

impl DisparityFinding {
    pub fn is_testable(&self) -> bool {
        self.assessment.is_some()
    }

    pub fn abs_psi(&self) -> Option<f64> {
        self.assessment.as_ref().map(|a| a.psi.abs())
    }
}

/// Count contingency cells over `rows` for the rows where `mask` is set.
pub fn contingency<S: DataSource + ?Sized>(
    data: &S,
    rows: &[usize],
    mask: &[bool],
    metric: FairnessMetric,
) -> ContingencyCounts {
    match metric {
        FairnessMetric::StatisticalParity => {
            let mut c = ParityCounts::default();
            for (&r, &inside) in rows.iter().zip(mask) {
                match (inside, data.outcome(r)) {
                    (true, true) => c.pos_in += 1,
                    (true, false) => c.neg_in += 1,
                    (false, true) => c.pos_out += 1,
                    (false, false) => c.neg_out += 1,
                }
            }
            ContingencyCounts::StatisticalParity(c)
        }
        FairnessMetric::EqualizedOdds => {
            let mut c = OddsCounts::default();
            for (&r, &inside) in rows.iter().zip(mask) {
                let truth = data.truth(r).expect("truth labels checked by caller");
                let cell = match (truth, data.decision(r), inside) {
                    (false, true, true) => &mut c.fp_in,
                    (false, false, true) => &mut c.tn_in,
                    (true, false, true) => &mut c.fn_in,
                    (true, true, true) => &mut c.tp_in,
                    (false, true, false) => &mut c.fp_out,
                    (false, false, false) => &mut c.tn_out,
                    (true, false, false) => &mut c.fn_out,
                    (true, true, false) => &mut c.tp_out,
                };
                *cell += 1;
            }
            ContingencyCounts::EqualizedOdds(c)
        }
    }
}

struct RawTest {
    psi: f64,
    components: Option<(f64, f64)>,
    chi: ChiSquare,
}

fn assess(counts: &ContingencyCounts) -> Result<RawTest, Untestable> {
    match counts {
        ContingencyCounts::StatisticalParity(c) => {
            let psi = disparity_sp(c)?;
            let chi = chi2_sp(c)?;
            Ok(RawTest { psi, components: None, chi })
        }
        ContingencyCounts::EqualizedOdds(c) => {
            let d = disparity_eo(c)?;
            let chi = chi2_eo(c)?.combined;
            Ok(RawTest { psi: d.psi, components: Some((d.fpr, d.fnr)), chi })
        }
    }
}

/// Test every candidate on the held-out rows and adjust the p-values of the
/// testable ones jointly. Only `holdout` rows are read.
pub fn evaluate_candidates<S: DataSource + ?Sized>(
    data: &S,
    candidates: &[Candidate],
    holdout: &[usize],
    metric: FairnessMetric,
) -> Result<Vec<DisparityFinding>> {
    if metric.requires_truth() && !data.has_truth() {
        return Err(Error::TruthRequired(metric.as_str()));
    }
    let n = holdout.len();
    let raw: Vec<(DisparityFinding, Option<RawTest>)> = candidates
        .par_iter()
        .map(|cand| {
            let mask = cand.criterion.membership_rows(data, holdout)?;
            let count = mask.iter().filter(|&&m| m).count() as u64;
            let counts = contingency(data, holdout, &mask, metric);
            let (test, untestable) = match assess(&counts) {
                Ok(t) => (Some(t), None),
                Err(u) => (None, Some(u.0)),
            };
            let finding = DisparityFinding {
                criterion: cand.criterion.clone(),
                source_trees: cand.trees.clone(),
                count,
                share: if n > 0 { count as f64 / n as f64 } else { 0.0 },
                counts,
                assessment: None,
                untestable,
            };
            Ok((finding, test))
        })
        .collect::<Result<_>>()?;

    let ln_raw: Vec<f64> = raw.iter().filter_map(|(_, t)| t.as_ref().map(|t| t.chi.ln_p)).collect();
    let ln_adj = benjamini_hochberg_ln(&ln_raw);
    let mut adj = ln_adj.into_iter();
    Ok(raw
        .into_iter()
        .map(|(mut finding, test)| {
            if let Some(t) = test {
                let ln_p_adjusted = adj.next().expect("one adjusted value per testable candidate");
                finding.assessment = Some(Assessment {
                    psi: t.psi,
                    psi_fpr: t.components.map(|c| c.0),
                    psi_fnr: t.components.map(|c| c.1),
                    chi2: t.chi.statistic,
                    df: t.chi.df,
                    p_raw: t.chi.ln_p.exp(),
                    p_adjusted: ln_p_adjusted.exp(),
                    ln_p_raw: t.chi.ln_p,
                    ln_p_adjusted,
                });
            }
            finding
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(pos_in: u64, neg_in: u64, pos_out: u64, neg_out: u64) -> ParityCounts {
        ParityCounts { pos_in, neg_in, pos_out, neg_out }
    }

    #[test]
    fn parity_difference() {
        assert!((disparity_sp(&sp(70, 30, 50, 50)).unwrap() - 0.20).abs() < 1e-12);
        assert_eq!(disparity_sp(&sp(5, 5, 10, 10)).unwrap(), 0.0);
        assert!(disparity_sp(&sp(0, 0, 3, 4)).is_err());
        assert!(disparity_sp(&sp(3, 4, 0, 0)).is_err());
    }

    #[test]
    fn odds_difference() {
        // FPR_G = 0.3, FPR_out = 0.1, FNR_G = FNR_out = 0.2
        let c = OddsCounts {
            fp_in: 30,
            tn_in: 70,
            fn_in: 20,
            tp_in: 80,
            fp_out: 10,
            tn_out: 90,
            fn_out: 40,
            tp_out: 160,
        };
        let d = disparity_eo(&c).unwrap();
        assert!((d.psi - 0.10).abs() < 1e-12);
        assert!((d.fpr - 0.20).abs() < 1e-12);
        assert!(d.fnr.abs() < 1e-12);

        let same = OddsCounts { fp_in: 1, tn_in: 3, fn_in: 2, tp_in: 2, fp_out: 2, tn_out: 6, fn_out: 4, tp_out: 4 };
        let d = disparity_eo(&same).unwrap();
        assert_eq!((d.psi, d.fpr, d.fnr), (0.0, 0.0, 0.0));

        let no_negatives_inside = OddsCounts { fn_in: 2, tp_in: 2, fp_out: 1, tn_out: 1, fn_out: 1, tp_out: 1, ..Default::default() };
        assert!(disparity_eo(&no_negatives_inside).is_err());
    }

    #[test]
    fn chi2_parity_examples() {
        let indep = chi2_sp(&sp(50, 50, 50, 50)).unwrap();
        assert_eq!(indep.statistic, 0.0);
        assert_eq!(indep.p_value(), 1.0);

        let c = chi2_sp(&sp(30, 70, 10, 90)).unwrap();
        assert!((c.statistic - 12.5).abs() < 1e-12);
        // erfc(2.5) = 4.069520174449590e-4
        assert!((c.p_value() - 4.069_520_174_449_59e-4).abs() < 1e-15);

        let swapped = chi2_sp(&sp(30, 70, 10, 90).swapped()).unwrap();
        assert_eq!(swapped.statistic, c.statistic);

        assert!(chi2_sp(&sp(0, 0, 4, 5)).is_err());
        assert!(chi2_sp(&sp(3, 0, 4, 0)).is_err());
    }

    #[test]
    fn chi2_odds_examples() {
        // both component tables exactly independent
        let c = OddsCounts { fp_in: 5, tn_in: 5, fn_in: 3, tp_in: 3, fp_out: 10, tn_out: 10, fn_out: 6, tp_out: 6 };
        let r = chi2_eo(&c).unwrap();
        assert_eq!(r.combined.statistic, 0.0);
        assert_eq!(r.combined.p_value(), 1.0);
        assert_eq!(r.combined.df, 4);

        let degenerate = OddsCounts { fp_in: 5, fp_out: 3, fn_in: 1, tp_in: 1, fn_out: 1, tp_out: 2, ..Default::default() };
        assert!(chi2_eo(&degenerate).is_err());
    }

    #[test]
    fn fisher_of_two_five_percent_tails() {
        let ln = 0.05f64.ln();
        let stat = fisher_statistic(&[ln, ln]);
        assert!((stat - 11.982_929_094_215_963).abs() < 1e-9);
        let p = chi2_ln_sf(stat, 4.0).exp();
        // e^{-x/2}(1 + x/2) at x = -4 ln 0.05
        assert!((p - 0.0025 * (1.0 - 2.0 * ln)).abs() < 1e-12);
        assert!((p - 0.0175).abs() < 5e-5);
    }

    #[test]
    fn bh_examples() {
        assert_eq!(benjamini_hochberg(&[0.2]).unwrap(), vec![0.2]);
        let adj = benjamini_hochberg(&[0.01, 0.04, 0.03, 0.002]).unwrap();
        for (a, b) in adj.iter().zip([0.02, 0.04, 0.04, 0.008]) {
            assert!((a - b).abs() < 1e-12, "{adj:?}");
        }
        let same = benjamini_hochberg(&[0.3; 5]).unwrap();
        assert!(same.iter().all(|&p| (p - 0.3).abs() < 1e-12));
        assert!(benjamini_hochberg(&[0.5, 1.2]).is_err());
        assert!(benjamini_hochberg(&[-0.1]).is_err());
        assert!(benjamini_hochberg(&[]).unwrap().is_empty());
    }

    #[test]
    fn bh_caps_at_one_and_handles_zero() {
        let adj = benjamini_hochberg(&[0.9, 0.95, 0.0]).unwrap();
        assert_eq!(adj[2], 0.0);
        assert!(adj.iter().all(|&p| p <= 1.0));
    }
}
