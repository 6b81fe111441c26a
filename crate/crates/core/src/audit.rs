//! The three-step pipeline: candidate generation on D1, testing on D2,
//! ranking.

use serde::{Deserialize, Serialize};

use crate::data::{DataSource, FairnessMetric};
use crate::disparity::{evaluate_candidates, DisparityFinding};
use crate::error::{Error, Result};
use crate::forest::{generate_subgroups, sensitive_attributes, ForestOutcome, ForestParams};
use crate::report::{rank, RankingMode};
use crate::splitting::ResponseMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditParams {
    pub metric: FairnessMetric,
    pub forest: ForestParams,
    pub ranking: RankingMode,
    pub n_groups: usize,
    /// Findings with an adjusted p-value at or below this level are reported.
    pub fdr_level: f64,
}

impl Default for AuditParams {
    fn default() -> Self {
        Self {
            metric: FairnessMetric::StatisticalParity,
            forest: ForestParams::default(),
            ranking: RankingMode::Confidence,
            n_groups: 3,
            fdr_level: 0.05,
        }
    }
}

impl AuditParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_groups < 1 {
            return Err(Error::Params("n_groups must be at least 1".into()));
        }
        if !(self.fdr_level > 0.0 && self.fdr_level < 1.0) {
            return Err(Error::Params(format!("fdr_level must lie in (0, 1), got {}", self.fdr_level)));
        }
        self.forest.validate()
    }

    /// Fill in everything derived from the data: response mode and `mtry`.
    pub fn resolve<S: DataSource + ?Sized>(&self, data: &S) -> Self {
        let mut out = self.clone();
        out.forest.tree.response = match self.metric {
            FairnessMetric::StatisticalParity => ResponseMode::Outcome,
            FairnessMetric::EqualizedOdds => ResponseMode::StratifiedError,
        };
        let k = sensitive_attributes(data).len();
        out.forest.tree.mtry = Some(self.forest.tree.mtry_for(k));
        out
    }
}

#[derive(Debug, Clone)]
pub struct AuditRun {
    /// Fully resolved parameters.
    pub params: AuditParams,
    pub forest: ForestOutcome,
    /// Every candidate's evaluation, in candidate order.
    pub evaluated: Vec<DisparityFinding>,
}

impl AuditRun {
    /// Significant findings in ranking order.
    pub fn ranked(&self) -> Vec<&DisparityFinding> {
        self.ranked_by(self.params.ranking)
    }

    pub fn ranked_by(&self, mode: RankingMode) -> Vec<&DisparityFinding> {
        let level = self.params.fdr_level;
        let significant: Vec<&DisparityFinding> = self
            .evaluated
            .iter()
            .filter(|f| f.assessment.as_ref().is_some_and(|a| a.p_adjusted <= level))
            .collect();
        rank(significant, mode)
    }

    pub fn untestable(&self) -> impl Iterator<Item = &DisparityFinding> {
        self.evaluated.iter().filter(|f| !f.is_testable())
    }

    pub fn top(&self) -> Vec<&DisparityFinding> {
        let mut r = self.ranked();
        r.truncate(self.params.n_groups);
        r
    }
}

/// Run all three steps.
pub fn run_audit<S: DataSource + ?Sized>(data: &S, params: &AuditParams) -> Result<AuditRun> {
    params.validate()?;
    if params.metric.requires_truth() && !data.has_truth() {
        return Err(Error::TruthRequired(params.metric.as_str()));
    }
    let params = params.resolve(data);
    let forest = generate_subgroups(data, &params.forest)?;
    let evaluated = evaluate_candidates(data, &forest.candidates.subgroups, &forest.candidates.d2, params.metric)?;
    Ok(AuditRun { params, forest, evaluated })
}
