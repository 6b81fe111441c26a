//! Ranking, report assembly and rendering.
//!
//! An [`AuditReport`] is self-contained: the JSON form carries everything the
//! text table and the DOT diagrams need, so both can be re-rendered from a
//! saved report without the data.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{AuditParams, AuditRun};
use crate::criterion::{Condition, Criterion, Predicate};
use crate::data::{DataSource, FairnessMetric};
use crate::disparity::{contingency, disparity_eo, disparity_sp, ContingencyCounts, DisparityFinding};
use crate::error::{Error, Result};
use crate::forest::sensitive_attributes;
use crate::splitting::SearchTree;

pub const ENGINE_NAME: &str = "disparity-audit";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// JSON schema every rendered report validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

pub const NO_FINDINGS: &str = "no statistically significant disparities located";

/// Methodology footer embedded in every report.
pub const METHODOLOGY: &[&str] = &[
    "Rows are split at random into halves D1 and D2. Candidate subgroups are generated on D1 only; every reported count, disparity and p-value is computed on D2.",
    "Search trees are conditional inference trees grown on without-replacement subsamples of D1, drawing a random subset of the sensitive attributes at every node.",
    "Split attributes are selected with the asymptotic linear-statistic permutation test (Monte-Carlo permutation p-value below 30 rows) under the configured multiplicity correction, Bonferroni by default. A node stays terminal unless the smallest corrected p-value is at most alpha.",
    "The split point maximizes the standardized two-sample statistic of the response: midpoint thresholds for continuous attributes, exhaustive level partitions up to 6 levels and mean-ordered cut points above.",
    "For equalized odds the trees are grown on the classification-error indicator with permutation tests stratified by the true label.",
    "Candidates are deduplicated by canonical criterion across trees. Criteria with fewer than min_leaf_size members in D2 are dropped before testing.",
    "Statistical parity psi = P(y=1 | G) - P(y=1 | not G). Equalized odds psi = (|psi_fpr| + |psi_fnr|) / 2.",
    "Statistical parity is tested with the Pearson chi-square on the 2x2 outcome table (df 1, no continuity correction). Equalized odds applies the standard Pearson chi-square to the false-positive-rate table and to the false-negative-rate table and combines the two p-values with Fisher's method (df 4), using exact log p-values.",
    "Benjamini-Hochberg adjustment runs once across all testable candidates of the audit. Findings with an adjusted p-value at most fdr_level are reported.",
    "Candidates with an empty group, complement or rate denominator are listed as untestable and excluded from the adjustment.",
    "Node disparities in tree diagrams are computed on the D2 members of each node's criterion.",
    "Ties: confidence ranking orders by adjusted p-value, then larger |psi|, then criterion text; magnitude ranking by |psi|, then adjusted p-value, then criterion text.",
];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash identifying the methodology footer.
pub fn methodology_hash() -> String {
    sha256_hex(METHODOLOGY.join("\n").as_bytes())[..16].to_string()
}

/// Hash of the fully resolved parameters.
pub fn config_hash(params: &AuditParams) -> String {
    let json = serde_json::to_string(params).expect("params serialize");
    sha256_hex(json.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankingMode {
    /// Adjusted p-value ascending.
    #[default]
    Confidence,
    /// |ψ| descending.
    Magnitude,
}

impl std::str::FromStr for RankingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confidence" => Ok(RankingMode::Confidence),
            "magnitude" => Ok(RankingMode::Magnitude),
            other => Err(Error::Config(format!("unknown ranking mode `{other}`"))),
        }
    }
}

impl RankingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RankingMode::Confidence => "confidence",
            RankingMode::Magnitude => "magnitude",
        }
    }
}

fn compare(a: &DisparityFinding, b: &DisparityFinding, mode: RankingMode) -> Ordering {
    let (x, y) = (a.assessment.as_ref().unwrap(), b.assessment.as_ref().unwrap());
    let by_p = x.ln_p_adjusted.total_cmp(&y.ln_p_adjusted);
    let by_psi = y.psi.abs().total_cmp(&x.psi.abs());
    let primary = match mode {
        RankingMode::Confidence => by_p.then(by_psi),
        RankingMode::Magnitude => by_psi.then(by_p),
    };
    primary.then_with(|| a.criterion.to_string().cmp(&b.criterion.to_string()))
}

/// Order testable findings; untestable ones are dropped.
pub fn rank<'a, I>(findings: I, mode: RankingMode) -> Vec<&'a DisparityFinding>
where
    I: IntoIterator<Item = &'a DisparityFinding>,
{
    let mut out: Vec<&DisparityFinding> = findings.into_iter().filter(|f| f.is_testable()).collect();
    out.sort_by(|a, b| compare(a, b, mode));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub n_rows: usize,
    pub n_d1: usize,
    pub n_d2: usize,
    pub sensitive: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master_seed: u64,
    pub tree_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub engine: String,
    pub engine_version: String,
    pub dataset: DatasetInfo,
    pub metric: FairnessMetric,
    pub ranking: RankingMode,
    pub n_groups: usize,
    /// Fully resolved parameters.
    pub config: AuditParams,
    pub config_hash: String,
    pub seeds: Seeds,
    pub timestamp: Option<String>,
    pub n_candidates: usize,
    pub n_significant: usize,
    pub n_untestable: usize,
    pub methodology: Vec<String>,
    pub methodology_hash: String,
}

/// One ranked finding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFinding {
    pub rank: usize,
    pub criterion: String,
    pub predicates: Vec<Predicate>,
    pub count: u64,
    pub share: f64,
    pub psi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_fpr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_fnr: Option<f64>,
    pub chi2: f64,
    pub df: u32,
    pub p_raw: f64,
    pub p_adjusted: f64,
    /// Natural log of `p_adjusted`; keeps resolution where the p-value
    /// underflows.
    pub ln_p_adjusted: f64,
    pub source_trees: Vec<usize>,
    pub counts: ContingencyCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UntestableEntry {
    pub criterion: String,
    pub count: u64,
    pub share: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitView {
    pub attribute: String,
    /// Edge label towards the left child.
    pub left: String,
    pub right: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub criterion: String,
    pub split: Option<SplitView>,
    pub children: Option<[usize; 2]>,
    /// Training rows from the tree's D1 subsample.
    pub n_train: usize,
    /// D2 members.
    pub count: u64,
    pub share: f64,
    /// Disparity on D2; `None` where undefined.
    pub psi: Option<f64>,
    /// Rank of the top finding this leaf represents.
    pub finding_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeView {
    pub index: usize,
    pub seed: u64,
    /// Ranks of the top findings that are leaves of this tree.
    pub covers: Vec<usize>,
    pub nodes: Vec<NodeView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub metadata: ReportMetadata,
    pub findings: Vec<ReportFinding>,
    pub untestable: Vec<UntestableEntry>,
    pub trees: Vec<TreeView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

/// Smallest set of trees such that every entry of `owners` (the trees
/// holding one finding) is hit; among sets of that size the
/// lexicographically smallest.
pub fn cover_trees(owners: &[Vec<usize>]) -> Vec<usize> {
    let needed: Vec<&Vec<usize>> = owners.iter().filter(|o| !o.is_empty()).collect();
    if needed.is_empty() {
        return Vec::new();
    }
    let pool: Vec<usize> = needed.iter().flat_map(|o| o.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let covers = |set: &[usize]| needed.iter().all(|o| o.iter().any(|t| set.binary_search(t).is_ok()));
    const BUDGET: u128 = 2_000_000;
    for k in 1..=needed.len().min(pool.len()) {
        if binomial(pool.len(), k) > BUDGET {
            return greedy_cover(&needed);
        }
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let set: Vec<usize> = idx.iter().map(|&i| pool[i]).collect();
            if covers(&set) {
                return set;
            }
            if !next_combination(&mut idx, pool.len()) {
                break;
            }
        }
    }
    greedy_cover(&needed)
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        acc = acc * (n as u128 - i) / (i + 1);
    }
    acc
}

fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn greedy_cover(needed: &[&Vec<usize>]) -> Vec<usize> {
    let mut chosen = BTreeSet::new();
    for owners in needed {
        if !owners.iter().any(|t| chosen.contains(t)) {
            chosen.insert(owners[0]);
        }
    }
    chosen.into_iter().collect()
}

fn node_psi(counts: &ContingencyCounts) -> Option<f64> {
    match counts {
        ContingencyCounts::StatisticalParity(c) => disparity_sp(c).ok(),
        ContingencyCounts::EqualizedOdds(c) => disparity_eo(c).ok().map(|d| d.psi),
    }
}

fn format_number(x: f64) -> String {
    format!("{x}")
}

/// Edge label of one side of a split.
pub fn edge_label(p: &Predicate) -> String {
    match &p.condition {
        Condition::OneOf(levels) => levels.iter().cloned().collect::<Vec<_>>().join(", "),
        Condition::Interval { lower, upper } => match (lower, upper) {
            (Some(lo), Some(hi)) => format!("({}, {}]", format_number(*lo), format_number(*hi)),
            (Some(lo), None) => format!("> {}", format_number(*lo)),
            (None, Some(hi)) => format!("≤ {}", format_number(*hi)),
            (None, None) => "any".to_string(),
        },
    }
}

fn tree_view<S: DataSource + ?Sized>(
    data: &S,
    tree: &SearchTree,
    index: usize,
    d2: &[usize],
    metric: FairnessMetric,
    ranks: &BTreeMap<String, usize>,
) -> Result<TreeView> {
    let n = d2.len();
    let mut covers = Vec::new();
    let mut nodes = Vec::with_capacity(tree.nodes.len());
    for node in &tree.nodes {
        let mask = node.criterion.membership_rows(data, d2)?;
        let count = mask.iter().filter(|&&m| m).count() as u64;
        let psi = node_psi(&contingency(data, d2, &mask, metric));
        let criterion = node.criterion.to_string();
        let finding_rank = if node.is_leaf() { ranks.get(&criterion).copied() } else { None };
        covers.extend(finding_rank);
        nodes.push(NodeView {
            id: node.id,
            parent: node.parent,
            depth: node.depth,
            criterion,
            split: node.split.as_ref().zip(node.children).map(|(s, (l, r))| {
                // Categorical sides read better restricted to the levels that
                // can reach the child.
                let side = |child: usize, p: &Predicate| match (&p.condition, tree.nodes[child].criterion.predicate(&s.attribute)) {
                    (Condition::OneOf(_), Some(narrowed)) => edge_label(narrowed),
                    _ => edge_label(p),
                };
                SplitView { attribute: s.attribute.clone(), left: side(l, &s.left), right: side(r, &s.right) }
            }),
            children: node.children.map(|(l, r)| [l, r]),
            n_train: node.n_rows,
            count,
            share: if n > 0 { count as f64 / n as f64 } else { 0.0 },
            psi,
            finding_rank,
        });
    }
    covers.sort_unstable();
    Ok(TreeView { index, seed: tree.seed, covers, nodes })
}

impl AuditReport {
    /// Assemble the report of a finished audit. `data` must be the dataset
    /// the audit ran on.
    pub fn build<S: DataSource + ?Sized>(
        data: &S,
        run: &AuditRun,
        dataset_id: &str,
        timestamp: Option<String>,
    ) -> Result<Self> {
        let params = &run.params;
        let cands = &run.forest.candidates;
        let ranked = run.ranked();
        let findings: Vec<ReportFinding> = ranked
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let a = f.assessment.as_ref().expect("ranked findings are testable");
                ReportFinding {
                    rank: i + 1,
                    criterion: f.criterion.to_string(),
                    predicates: f.criterion.predicates.clone(),
                    count: f.count,
                    share: f.share,
                    psi: a.psi,
                    psi_fpr: a.psi_fpr,
                    psi_fnr: a.psi_fnr,
                    chi2: a.chi2,
                    df: a.df,
                    p_raw: a.p_raw,
                    p_adjusted: a.p_adjusted,
                    ln_p_adjusted: a.ln_p_adjusted,
                    source_trees: f.source_trees.clone(),
                    counts: f.counts,
                }
            })
            .collect();
        let untestable: Vec<UntestableEntry> = run
            .untestable()
            .map(|f| UntestableEntry {
                criterion: f.criterion.to_string(),
                count: f.count,
                share: f.share,
                reason: f.untestable.clone().unwrap_or_default(),
            })
            .collect();

        let top = &findings[..findings.len().min(params.n_groups)];
        let owners: Vec<Vec<usize>> = top.iter().map(|f| f.source_trees.clone()).collect();
        let ranks: BTreeMap<String, usize> = top.iter().map(|f| (f.criterion.clone(), f.rank)).collect();
        let trees = cover_trees(&owners)
            .into_iter()
            .map(|t| tree_view(data, &run.forest.trees[t], t, &cands.d2, params.metric, &ranks))
            .collect::<Result<Vec<_>>>()?;

        let sensitive = sensitive_attributes(data).into_iter().map(|i| data.schema()[i].name.clone()).collect();
        let metadata = ReportMetadata {
            engine: ENGINE_NAME.to_string(),
            engine_version: ENGINE_VERSION.to_string(),
            dataset: DatasetInfo {
                id: dataset_id.to_string(),
                n_rows: data.n_rows(),
                n_d1: cands.d1.len(),
                n_d2: cands.d2.len(),
                sensitive,
            },
            metric: params.metric,
            ranking: params.ranking,
            n_groups: params.n_groups,
            config: params.clone(),
            config_hash: config_hash(params),
            seeds: Seeds { master_seed: cands.master_seed, tree_seeds: cands.tree_seeds.clone() },
            timestamp,
            n_candidates: cands.len(),
            n_significant: findings.len(),
            n_untestable: untestable.len(),
            methodology: METHODOLOGY.iter().map(|s| s.to_string()).collect(),
            methodology_hash: methodology_hash(),
        };
        Ok(AuditReport { metadata, findings, untestable, trees })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Text => render_text(self),
        }
    }

    /// Criteria of the top `n_groups` findings, parsed back.
    pub fn top_criteria(&self) -> Result<Vec<Criterion>> {
        self.findings.iter().take(self.metadata.n_groups).map(|f| Criterion::parse(&f.criterion)).collect()
    }
}

fn format_p(p: f64, ln_p: f64) -> String {
    if p >= 1e-3 {
        format!("{p:.4}")
    } else if p > 0.0 {
        format!("{p:.2e}")
    } else {
        format!("exp({ln_p:.1})")
    }
}

fn format_signed(x: Option<f64>) -> String {
    x.map(|v| format!("{v:+.3}")).unwrap_or_else(|| "-".into())
}

fn table(header: &[&str], rows: &[Vec<String>], right_align: &[bool]) -> String {
    let width = |s: &str| s.chars().count();
    let mut widths: Vec<usize> = header.iter().map(|h| width(h)).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(width(cell));
        }
    }
    let line = |cells: Vec<&str>| {
        let mut out = String::new();
        for (i, cell) in cells.iter().enumerate() {
            let pad = widths[i] - width(cell);
            if i > 0 {
                out.push_str("  ");
            }
            if right_align[i] {
                out.push_str(&" ".repeat(pad));
                out.push_str(cell);
            } else {
                out.push_str(cell);
                if i + 1 < cells.len() {
                    out.push_str(&" ".repeat(pad));
                }
            }
        }
        out.push('\n');
        out
    };
    let mut out = line(header.to_vec());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    out.push_str(&line(rule.iter().map(String::as_str).collect()));
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

/// Human-readable report: metadata, ranked table and methodology footer.
pub fn render_text(report: &AuditReport) -> String {
    let m = &report.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "{} {} audit report", m.engine, m.engine_version);
    let _ = writeln!(out, "dataset:     {} ({} rows; D1 {}, D2 {})", m.dataset.id, m.dataset.n_rows, m.dataset.n_d1, m.dataset.n_d2);
    let _ = writeln!(out, "sensitive:   {}", m.dataset.sensitive.join(", "));
    let _ = writeln!(out, "metric:      {}", m.metric.as_str());
    let _ = writeln!(out, "ranking:     {}", m.ranking.as_str());
    let _ = writeln!(out, "master seed: {}", m.seeds.master_seed);
    let _ = writeln!(out, "config hash: {}", m.config_hash);
    if let Some(ts) = &m.timestamp {
        let _ = writeln!(out, "timestamp:   {ts}");
    }
    let _ = writeln!(
        out,
        "candidates:  {} tested, {} significant at FDR {}, {} untestable",
        m.n_candidates, m.n_significant, m.config.fdr_level, m.n_untestable
    );
    out.push('\n');

    if report.findings.is_empty() {
        let _ = writeln!(out, "{NO_FINDINGS}");
    } else {
        let odds = m.metric == FairnessMetric::EqualizedOdds;
        let mut header = vec!["rank", "subgroup", "group size", "psi"];
        if odds {
            header.extend(["psi_fpr", "psi_fnr"]);
        }
        header.extend(["chi2", "p_adj"]);
        let rows: Vec<Vec<String>> = report
            .findings
            .iter()
            .map(|f| {
                let mut row = vec![
                    f.rank.to_string(),
                    f.criterion.clone(),
                    format!("{} / {:.2}%", f.count, 100.0 * f.share),
                    format!("{:.3}", f.psi),
                ];
                if odds {
                    row.push(format_signed(f.psi_fpr));
                    row.push(format_signed(f.psi_fnr));
                }
                row.push(format!("{:.2}", f.chi2));
                row.push(format_p(f.p_adjusted, f.ln_p_adjusted));
                row
            })
            .collect();
        let mut align = vec![true, false, true, true];
        if odds {
            align.extend([true, true]);
        }
        align.extend([true, true]);
        out.push_str(&table(&header, &rows, &align));
    }

    if !report.untestable.is_empty() {
        let _ = writeln!(out, "\nuntestable candidates:");
        for u in &report.untestable {
            let _ = writeln!(out, "  {} ({} / {:.2}%): {}", u.criterion, u.count, 100.0 * u.share, u.reason);
        }
    }

    let _ = writeln!(out, "\nmethodology ({}):", m.methodology_hash);
    for line in &m.methodology {
        let _ = writeln!(out, "  - {line}");
    }
    out
}

const NEUTRAL: [u8; 3] = [0xFF, 0xFF, 0xFF];
const SATURATED: [u8; 3] = [0xD7, 0x30, 0x1F];

/// Fill colour for `|ψ|` on a linear scale from white at 0 to red at `max`.
pub fn fill_color(abs_psi: Option<f64>, max: f64) -> String {
    let t = match abs_psi {
        Some(v) if max > 0.0 && v.is_finite() => (v / max).clamp(0.0, 1.0),
        _ => 0.0,
    };
    let channel = |i: usize| {
        let (a, b) = (NEUTRAL[i] as f64, SATURATED[i] as f64);
        (a + (b - a) * t).round() as u8
    };
    format!("#{:02X}{:02X}{:02X}", channel(0), channel(1), channel(2))
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Largest `|ψ|` among findings and rendered nodes.
pub fn max_abs_psi(report: &AuditReport) -> f64 {
    let findings = report.findings.iter().map(|f| f.psi.abs());
    let nodes = report.trees.iter().flat_map(|t| t.nodes.iter().filter_map(|n| n.psi.map(f64::abs)));
    findings.chain(nodes).filter(|v| v.is_finite()).fold(0.0, f64::max)
}

/// One DOT graph per selected tree, as `(file name, document)`.
pub fn render_tree_viz(report: &AuditReport) -> Vec<(String, String)> {
    let max = max_abs_psi(report);
    let hash = &report.metadata.config_hash;
    report.trees.iter().map(|t| (format!("tree-{:02}.dot", t.index), render_tree_dot(t, max, hash))).collect()
}

pub fn render_tree_dot(tree: &TreeView, max_abs_psi: f64, config_hash: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "// config {config_hash}");
    let _ = writeln!(out, "digraph tree_{} {{", tree.index);
    let _ = writeln!(
        out,
        "  graph [label=\"tree {} (seed {})\", labelloc=t, fontname=\"Helvetica\"];",
        tree.index, tree.seed
    );
    let _ = writeln!(out, "  node [shape=box, style=\"rounded,filled\", fontname=\"Helvetica\"];");
    let _ = writeln!(out, "  edge [fontname=\"Helvetica\"];");
    for node in &tree.nodes {
        let mut label = String::new();
        if let Some(split) = &node.split {
            let _ = write!(label, "<B>{}</B><BR/>", html_escape(&split.attribute));
        }
        let _ = write!(label, "n = {} ({:.1}%)<BR/>", node.count, 100.0 * node.share);
        match node.psi {
            Some(psi) => {
                let _ = write!(label, "ψ = {psi:.3}");
            }
            None => label.push_str("ψ = n/a"),
        }
        let mut attrs = format!("fillcolor=\"{}\"", fill_color(node.psi.map(f64::abs), max_abs_psi));
        if let Some(rank) = node.finding_rank {
            let _ = write!(label, "<BR/>rank {rank}");
            attrs.push_str(", penwidth=3");
        }
        let _ = writeln!(out, "  n{} [label=<{}>, {}];", node.id, label, attrs);
    }
    for node in &tree.nodes {
        if let (Some(split), Some([l, r])) = (&node.split, node.children) {
            let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", node.id, l, dot_escape(&split.left));
            let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", node.id, r, dot_escape(&split.right));
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disparity::{Assessment, ParityCounts};

    fn finding(name: &str, p_adj: f64, psi: f64) -> DisparityFinding {
        DisparityFinding {
            criterion: Criterion::new(vec![Predicate::one_of("a", [name]).unwrap()]),
            source_trees: vec![0],
            count: 10,
            share: 0.1,
            counts: ContingencyCounts::StatisticalParity(ParityCounts::default()),
            assessment: Some(Assessment {
                psi,
                psi_fpr: None,
                psi_fnr: None,
                chi2: 1.0,
                df: 1,
                p_raw: p_adj,
                p_adjusted: p_adj,
                ln_p_raw: p_adj.ln(),
                ln_p_adjusted: p_adj.ln(),
            }),
            untestable: None,
        }
    }

    fn names(v: &[&DisparityFinding]) -> Vec<String> {
        v.iter().map(|f| f.criterion.to_string()).collect()
    }

    #[test]
    fn confidence_orders_by_p() {
        let fs = vec![finding("x", 0.3, 0.1), finding("y", 0.001, 0.1), finding("z", 0.05, 0.1)];
        let r = rank(&fs, RankingMode::Confidence);
        assert_eq!(names(&r), names(&[&fs[1], &fs[2], &fs[0]]));
    }

    #[test]
    fn magnitude_orders_by_abs_psi() {
        let fs = vec![finding("x", 0.001, 0.1), finding("y", 0.01, -0.3), finding("z", 0.02, 0.2)];
        let r = rank(&fs, RankingMode::Magnitude);
        assert_eq!(names(&r), names(&[&fs[1], &fs[2], &fs[0]]));
    }

    #[test]
    fn ties_break_on_criterion_text() {
        let a = vec![finding("b", 0.01, 0.2), finding("a", 0.01, 0.2)];
        let b = vec![finding("a", 0.01, 0.2), finding("b", 0.01, 0.2)];
        for mode in [RankingMode::Confidence, RankingMode::Magnitude] {
            assert_eq!(names(&rank(&a, mode)), names(&rank(&b, mode)));
            assert_eq!(rank(&a, mode)[0].criterion.to_string(), "a in {a}");
        }
    }

    #[test]
    fn untestable_findings_are_dropped() {
        let mut f = finding("x", 0.01, 0.2);
        f.assessment = None;
        f.untestable = Some("empty complement".into());
        assert!(rank(&[f], RankingMode::Confidence).is_empty());
    }

    #[test]
    fn cover_picks_smallest_set() {
        assert_eq!(cover_trees(&[vec![0, 3], vec![3, 5], vec![1, 3]]), vec![3]);
        assert_eq!(cover_trees(&[vec![2], vec![1, 4], vec![4]]), vec![2, 4]);
        assert_eq!(cover_trees(&[vec![0], vec![1], vec![2]]), vec![0, 1, 2]);
        assert!(cover_trees(&[]).is_empty());
    }

    #[test]
    fn colour_scale_is_monotone() {
        assert_eq!(fill_color(Some(0.0), 0.3), "#FFFFFF");
        assert_eq!(fill_color(None, 0.3), "#FFFFFF");
        assert_eq!(fill_color(Some(0.3), 0.3), "#D7301F");
        assert_eq!(fill_color(Some(0.1), 0.0), "#FFFFFF");
        let mut last = 255u8;
        for i in 1..=10 {
            let c = fill_color(Some(i as f64 * 0.03), 0.3);
            let g = u8::from_str_radix(&c[3..5], 16).unwrap();
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn edge_labels() {
        assert_eq!(edge_label(&Predicate::at_most("age", 54.5).unwrap()), "≤ 54.5");
        assert_eq!(edge_label(&Predicate::greater_than("age", 54.5).unwrap()), "> 54.5");
        assert_eq!(edge_label(&Predicate::one_of("race", ["b", "a"]).unwrap()), "a, b");
    }

    #[test]
    fn methodology_hash_is_stable() {
        assert_eq!(methodology_hash(), methodology_hash());
        assert_eq!(methodology_hash().len(), 16);
    }
}
