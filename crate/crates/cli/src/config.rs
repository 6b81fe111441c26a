//! Audit configuration files: TOML keyed like the command-line flags, or a
//! saved JSON report whose resolved parameters are replayed.

use std::path::{Path, PathBuf};

use disparity_core::audit::AuditParams;
use disparity_core::report::AuditReport;
use serde::Deserialize;

use crate::args::AuditArgs;
use crate::commands::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AuditConfigFile {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub outcome: Option<String>,
    pub truth: Option<String>,
    pub metric: Option<String>,
    pub sensitive: Option<Vec<String>>,
    pub rank: Option<String>,
    pub n_groups: Option<usize>,
    pub seed: Option<u64>,
    pub n_trees: Option<usize>,
    pub alpha: Option<f64>,
    pub subsample: Option<f64>,
    pub mtry: Option<usize>,
    pub min_node_size: Option<usize>,
    pub min_leaf_size: Option<usize>,
    pub max_depth: Option<usize>,
    pub multiplicity: Option<String>,
    pub fdr_level: Option<f64>,
    pub dataset_id: Option<String>,
    pub out: Option<PathBuf>,
    pub text: Option<PathBuf>,
    pub dot_dir: Option<PathBuf>,
    pub timestamp: Option<bool>,
}

/// What a `--config` file supplies.
pub enum Loaded {
    Toml(AuditConfigFile),
    /// Parameters, sensitive attributes and dataset id of a saved report.
    Report(Box<AuditParams>, Vec<String>, String),
}

fn relative_to(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_relative() { base.join(p) } else { p })
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        let report = AuditReport::from_json(&text)?;
        let m = report.metadata;
        return Ok(Loaded::Report(Box::new(m.config), m.dataset.sensitive, m.dataset.id));
    }
    let mut file: AuditConfigFile =
        toml::from_str(&text).map_err(|e| CliError::new("E_CONFIG", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(""));
    file.data = relative_to(base, file.data.take());
    file.schema = relative_to(base, file.schema.take());
    file.out = relative_to(base, file.out.take());
    file.text = relative_to(base, file.text.take());
    file.dot_dir = relative_to(base, file.dot_dir.take());
    Ok(Loaded::Toml(file))
}

/// Fill every flag left unset from the file.
pub fn merge(args: &mut AuditArgs, file: AuditConfigFile) {
    macro_rules! fill {
        ($($f:ident),*) => { $( if args.$f.is_none() { args.$f = file.$f; } )* };
    }
    fill!(
        data, schema, outcome, truth, metric, sensitive, rank, n_groups, seed, n_trees, alpha, subsample, mtry,
        min_node_size, min_leaf_size, max_depth, multiplicity, fdr_level, dataset_id, out, text, dot_dir
    );
    args.timestamp |= file.timestamp.unwrap_or(false);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let mut args = AuditArgs { alpha: Some(0.2), ..Default::default() };
        let file: AuditConfigFile = toml::from_str("alpha = 0.05\nn-trees = 7\nsensitive = [\"race\"]").unwrap();
        merge(&mut args, file);
        assert_eq!(args.alpha, Some(0.2));
        assert_eq!(args.n_trees, Some(7));
        assert_eq!(args.sensitive, Some(vec!["race".to_string()]));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<AuditConfigFile>("alpah = 0.1").is_err());
    }
}
