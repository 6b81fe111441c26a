use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use disparity_core::audit::{run_audit, AuditParams};
use disparity_core::ingest::{ingest_path, write_csv, Role, SchemaDecl};
use disparity_core::report::{render_text, render_tree_viz, sha256_hex, AuditReport, ReportFormat};
use disparity_core::synthetic::{
    gen_dataset1, gen_dataset2, run_benchmark, write_benchmark_csv, BenchmarkConfig, BenchmarkRow, Dataset1Params,
    Dataset2Params, Generator,
};
use disparity_core::{AuditDataset, Error};

use crate::args::{AuditArgs, BenchmarkArgs, GenerateArgs, RenderArgs};
use crate::config::{self, Loaded};

pub const SEED_ENV: &str = "DISPARITY_AUDIT_SEED";

#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn io(path: &Path, e: impl Display) -> Self {
        Self::new("E_IO", format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self { code: e.code(), message: e.to_string() }
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: Option<&String>) -> Result<Option<T>, CliError> {
    Ok(s.map(|s| s.parse()).transpose()?)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::new("E_CONFIG", format!("{SEED_ENV} is not an unsigned integer: `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// `SOURCE_DATE_EPOCH` if set, else the current time when requested.
fn timestamp(requested: bool) -> Result<Option<String>, CliError> {
    let secs = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v
            .trim()
            .parse::<i64>()
            .map_err(|_| CliError::new("E_CONFIG", format!("SOURCE_DATE_EPOCH is not an integer: `{v}`")))?,
        Err(_) if requested => chrono::Utc::now().timestamp(),
        Err(_) => return Ok(None),
    };
    let t = chrono::DateTime::from_timestamp(secs, 0)
        .ok_or_else(|| CliError::new("E_CONFIG", format!("timestamp {secs} out of range")))?;
    Ok(Some(t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)))
}

/// `data.csv` -> `data.schema.toml`.
pub fn sidecar_path(data: &Path) -> PathBuf {
    data.with_extension("schema.toml")
}

fn load_dataset(args: &AuditArgs, data: &Path) -> Result<AuditDataset, CliError> {
    let decl = match args.schema.clone().or_else(|| Some(sidecar_path(data)).filter(|p| p.exists())) {
        Some(path) => {
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            SchemaDecl::from_toml(&text)?
        }
        None => {
            let mut decl = SchemaDecl::with_default(Role::Auto);
            decl.set(args.outcome.clone().unwrap_or_else(|| "y".into()), Role::Outcome);
            if let Some(t) = &args.truth {
                decl.set(t.clone(), Role::Truth);
            }
            decl
        }
    };
    let mut dataset = ingest_path(data, &decl).map_err(|e| match e {
        Error::Io(io) => CliError::io(data, io),
        other => other.into(),
    })?;
    if let Some(names) = &args.sensitive {
        dataset.set_sensitive(names)?;
    }
    Ok(dataset)
}

/// Apply flag (already merged with the config file) overrides.
fn build_params(args: &AuditArgs, mut params: AuditParams) -> Result<AuditParams, CliError> {
    if let Some(m) = parse(args.metric.as_ref())? {
        params.metric = m;
    }
    if let Some(r) = parse(args.rank.as_ref())? {
        params.ranking = r;
    }
    if let Some(m) = parse(args.multiplicity.as_ref())? {
        params.forest.tree.multiplicity = m;
    }
    let f = &mut params.forest;
    macro_rules! set {
        ($src:ident => $($dst:tt)+) => { if let Some(v) = args.$src { $($dst)+ = v; } };
    }
    set!(n_trees => f.n_trees);
    set!(subsample => f.subsample_fraction);
    set!(alpha => f.tree.alpha);
    set!(min_node_size => f.tree.min_node_size);
    set!(min_leaf_size => f.tree.min_leaf_size);
    set!(n_groups => params.n_groups);
    set!(fdr_level => params.fdr_level);
    if args.mtry.is_some() {
        params.forest.tree.mtry = args.mtry;
    }
    if args.max_depth.is_some() {
        params.forest.tree.max_depth = args.max_depth;
    }
    if let Some(seed) = args.seed {
        params.forest.master_seed = seed;
    }
    params.validate()?;
    Ok(params)
}

pub fn audit(args: AuditArgs) -> Result<(), CliError> {
    audit_to(args, &mut std::io::stdout().lock())
}

/// `audit` with the console output sent to `sink`.
pub fn audit_to<W: Write>(mut args: AuditArgs, sink: &mut W) -> Result<(), CliError> {
    let mut base = AuditParams::default();
    let mut replay_id = None;
    let mut seed_given = false;
    if let Some(path) = args.config.clone() {
        match config::load(&path)? {
            Loaded::Toml(file) => config::merge(&mut args, file),
            Loaded::Report(params, sensitive, id) => {
                base = *params;
                seed_given = true;
                args.sensitive.get_or_insert(sensitive);
                replay_id = Some(id);
            }
        }
    }
    if args.seed.is_none() && !seed_given {
        args.seed = Some(env_seed()?.unwrap_or(0));
    }
    let params = build_params(&args, base)?;
    let data_path = args.data.clone().ok_or_else(|| CliError::new("E_CONFIG", "no dataset given (--data)"))?;
    let stamp = timestamp(args.timestamp)?;

    let dataset = load_dataset(&args, &data_path)?;
    let run = run_audit(&dataset, &params)?;
    let id = args.dataset_id.clone().or(replay_id).unwrap_or_else(|| {
        data_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let report = AuditReport::build(&dataset, &run, &id, stamp)?;

    let to_stdout = args.out.as_deref() == Some(Path::new("-"));
    match &args.out {
        Some(p) if !to_stdout => write_file(p, report.to_json().as_bytes())?,
        _ => {}
    }
    let text = render_text(&report);
    if let Some(p) = &args.text {
        write_file(p, text.as_bytes())?;
    }
    if let Some(dir) = &args.dot_dir {
        write_dots(&report, dir)?;
    }
    let shown = if to_stdout { report.to_json() } else { text };
    sink.write_all(shown.as_bytes()).map_err(|e| CliError::new("E_IO", e.to_string()))?;
    Ok(())
}

fn write_dots(report: &AuditReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (name, doc) in render_tree_viz(report) {
        write_file(&dir.join(name), doc.as_bytes())?;
    }
    Ok(())
}

fn probs(v: &Option<Vec<f64>>, default: [f64; 3], name: &str) -> Result<[f64; 3], CliError> {
    match v {
        None => Ok(default),
        Some(v) => <[f64; 3]>::try_from(v.as_slice())
            .map_err(|_| CliError::new("E_PARAMS", format!("--{name} needs exactly three values"))),
    }
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let generator: Generator = args.generator.parse()?;
    let (dataset, truth, params_json) = match generator {
        Generator::Dataset1 => {
            let d = Dataset1Params::default();
            let p = Dataset1Params {
                n: args.n.unwrap_or(d.n),
                rho: args.rho.unwrap_or(d.rho),
                w: args.w.unwrap_or(d.w),
                race_probs: probs(&args.race_probs, d.race_probs, "race-probs")?,
                gender_probs: probs(&args.gender_probs, d.gender_probs, "gender-probs")?,
                seed: args.seed.unwrap_or(d.seed),
            };
            p.validate()?;
            (gen_dataset1(&p)?, p.ground_truth(), serde_json::to_string(&p).expect("params serialize"))
        }
        Generator::Dataset2 => {
            if args.w.is_some() || args.race_probs.is_some() || args.gender_probs.is_some() {
                return Err(CliError::new("E_PARAMS", "dataset2 takes only --rho, --n and --seed"));
            }
            let d = Dataset2Params::default();
            let p = Dataset2Params {
                n: args.n.unwrap_or(d.n),
                rho: args.rho.unwrap_or(d.rho),
                seed: args.seed.unwrap_or(d.seed),
            };
            p.validate()?;
            (gen_dataset2(&p)?, p.ground_truth(), serde_json::to_string(&p).expect("params serialize"))
        }
    };
    let mut csv = Vec::new();
    write_csv(&dataset, &mut csv)?;
    match &args.out {
        None => std::io::stdout().write_all(&csv).map_err(|e| CliError::new("E_IO", e.to_string()))?,
        Some(path) => {
            let sidecar = format!(
                "# {} {}\n# config hash {}\n{}",
                generator.as_str(),
                params_json,
                sha256_hex(params_json.as_bytes()),
                SchemaDecl::for_dataset(&dataset).to_toml()
            );
            let truth_json = serde_json::to_string_pretty(&truth).expect("truth serializes") + "\n";
            write_file(path, &csv)?;
            write_file(&sidecar_path(path), sidecar.as_bytes())?;
            write_file(&path.with_extension("truth.json"), truth_json.as_bytes())?;
        }
    }
    Ok(())
}

pub fn benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            toml::from_str::<BenchmarkConfig>(&text)
                .map_err(|e| CliError::new("E_CONFIG", format!("{}: {e}", path.display())))?
        }
        None => BenchmarkConfig::default(),
    };
    if let Some(g) = parse(args.generator.as_ref())? {
        config.generator = g;
    }
    if let Some(v) = parse(args.engine_variant.as_ref())? {
        config.variant = v;
    }
    if let Some(m) = parse(args.tolerance_mode.as_ref())? {
        config.tolerance_mode = m;
    }
    if let Some(r) = args.rhos {
        config.rhos = r;
    }
    if let Some(w) = args.ws {
        config.ws = w;
    }
    if let Some(n) = args.n {
        config.n = n;
    }
    if let Some(r) = args.runs {
        config.runs = r;
    }
    if let Some(t) = args.tolerance {
        config.tolerance = t;
    }
    if let Some(s) = args.seed {
        config.master_seed = s;
    } else if args.config.is_none() {
        config.master_seed = env_seed()?.unwrap_or(0);
    }
    config.validate()?;
    let rows = run_benchmark(&config)?;
    let mut csv = Vec::new();
    write_benchmark_csv(&rows, &mut csv)?;
    let mut stdout = std::io::stdout().lock();
    let shown = match &args.out {
        Some(path) => {
            write_file(path, &csv)?;
            benchmark_table(&rows).into_bytes()
        }
        None => csv,
    };
    stdout.write_all(&shown).map_err(|e| CliError::new("E_IO", e.to_string()))?;
    Ok(())
}

fn benchmark_table(rows: &[BenchmarkRow]) -> String {
    let mut out = format!("{:<10} {:<12} {:>6} {:>6} {:>6} {:>8} {:>8}\n", "generator", "variant", "rho", "w", "runs", "rate", "stderr");
    for r in rows {
        let w = r.w.map(|w| w.to_string()).unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{:<10} {:<12} {:>6} {:>6} {:>6} {:>8.3} {:>8.3}\n",
            r.generator, r.variant, r.rho, w, r.runs, r.success_rate, r.stderr
        ));
    }
    out
}

pub fn render(args: RenderArgs) -> Result<(), CliError> {
    let format: ReportFormat = args.format.parse()?;
    let text = fs::read_to_string(&args.report).map_err(|e| CliError::io(&args.report, e))?;
    let report = AuditReport::from_json(&text)?;
    let doc = report.render(format);
    match &args.out {
        Some(p) => write_file(p, doc.as_bytes())?,
        None => std::io::stdout().write_all(doc.as_bytes()).map_err(|e| CliError::new("E_IO", e.to_string()))?,
    }
    if let Some(dir) = &args.dot_dir {
        write_dots(&report, dir)?;
    }
    Ok(())
}
