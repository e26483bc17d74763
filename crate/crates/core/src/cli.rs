//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
//! Any config key can be overridden with `--key value` or `--key=value`
//! after the named options; `--seed` is shorthand for `--global_seed`.
//! `CORRBENCH_DATA_DIR` supplies `data_dir` unless the config file or an
//! override sets it.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::corrnet::build_network;
use crate::correspondence::save_labels;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_instance, summarize, CurveSpec, EvalOptions, EvalReport, PredictedMatching};
use crate::pipeline::{load_instance, load_manifest, manifest_path, run_generation, GenerationConfig};

pub const DATA_DIR_ENV: &str = "CORRBENCH_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "corrbench", version, about = "Shape-matching instance generation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed (same as `--global_seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Config overrides as `--key value` pairs.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, num_args = 0.., value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate matching instances into `output_dir`.
    Generate(ConfigArgs),
    /// Score predictions against generated instances.
    Evaluate {
        /// Generation output directory.
        #[arg(long)]
        instances: PathBuf,
        /// Directory of `<id>.pred` (or `<id>.corr`) files.
        #[arg(long, required_unless_present = "from_gt")]
        predictions: Option<PathBuf>,
        /// Use each instance's ground truth as the prediction.
        #[arg(long)]
        from_gt: bool,
        /// Where reports are written; defaults to `<instances>/eval`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        tau_max: f64,
        #[arg(long, default_value_t = 0.001)]
        step: f64,
        /// Report max(acc, 1 - acc) for left/right accuracy.
        #[arg(long)]
        sign_invariant: bool,
    },
    /// Write labels propagated through the network.
    PropagateAnnotations {
        /// Output directory for `<id>.labels`.
        #[arg(long)]
        out: PathBuf,
        /// Shapes to label; every shape when omitted.
        #[arg(long = "shape")]
        shapes: Vec<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print an instance (or an output directory) summary.
    Inspect { path: PathBuf },
    /// Check the manifest and, unless `--manifest-only`, the loaded network.
    ValidateNetwork {
        #[arg(long)]
        manifest_only: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::UnknownKey { .. }) { 2 } else { 1 };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

/// `--key value` / `--key=value` pairs from the trailing arguments.
fn parse_overrides(raw: &[String]) -> std::result::Result<Vec<(String, String)>, Failure> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(usage(format!("unexpected argument `{arg}`; overrides are `--key value`")));
        };
        let (key, value) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| usage(format!("`--{flag}` needs a value")))?;
                (flag.to_string(), v.clone())
            }
        };
        let key = match key.as_str() {
            "seed" => "global_seed".to_string(),
            _ => key,
        };
        if key != "config" && !GenerationConfig::is_known_key(&key) {
            return Err(Failure::from(Error::UnknownKey {
                key,
                valid: GenerationConfig::valid_keys(),
            }));
        }
        out.push((key, value));
    }
    Ok(out)
}

fn resolve_config(args: &ConfigArgs) -> std::result::Result<GenerationConfig, Failure> {
    let overrides = parse_overrides(&args.overrides)?;
    let mut c = GenerationConfig::default();
    if let Some(d) = std::env::var_os(DATA_DIR_ENV).filter(|d| !d.is_empty()) {
        c.data_dir = PathBuf::from(d);
    }
    let file = overrides
        .iter()
        .rev()
        .find(|(k, _)| k == "config")
        .map(|(_, v)| PathBuf::from(v))
        .or_else(|| args.config.clone());
    if let Some(path) = file {
        let text = fs::read_to_string(&path).map_err(|e| Failure::from(Error::io(&path, e)))?;
        c.apply_text(&text, &path)?;
    }
    if let Some(s) = args.seed {
        c.global_seed = s;
    }
    if let Some(w) = args.workers {
        c.workers = w;
    }
    for (k, v) in overrides.iter().filter(|(k, _)| k != "config") {
        c.set(k, v)?;
    }
    c.validate()?;
    log::debug!("resolved config:\n{}", c.to_text());
    Ok(c)
}

fn generate(args: &ConfigArgs) -> std::result::Result<(), Failure> {
    let config = resolve_config(args)?;
    let s = run_generation(&config)?;
    println!(
        "{} instances: {} generated, {} already present, {} failed",
        s.total,
        s.generated,
        s.skipped,
        s.failed.len()
    );
    if s.failed.is_empty() {
        Ok(())
    } else {
        for (id, e) in &s.failed {
            eprintln!("{id}: {e}");
        }
        Err(Failure {
            code: 1,
            message: format!("{} instances failed", s.failed.len()),
        })
    }
}

/// Instance ids of an output directory, in listing order.
fn instance_ids(root: &Path) -> Result<Vec<String>> {
    let listing = root.join("instances.txt");
    if listing.exists() {
        let text = fs::read_to_string(&listing).map_err(|e| Error::io(&listing, e))?;
        return Ok(text.lines().filter_map(|l| l.split(' ').next()).filter(|s| !s.is_empty()).map(String::from).collect());
    }
    let mut ids: Vec<String> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("meta.txt").exists())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    Ok(ids)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    instances: &Path,
    predictions: Option<&Path>,
    from_gt: bool,
    report: Option<&Path>,
    tau_max: f64,
    step: f64,
    sign_invariant: bool,
) -> std::result::Result<(), Failure> {
    if !(tau_max > 0.0 && step > 0.0 && step <= tau_max) {
        return Err(usage("need 0 < step <= tau_max"));
    }
    let opts = EvalOptions {
        curve: CurveSpec { tau_max, step },
        sign_invariant_lr: sign_invariant,
    };
    let out = report.map(Path::to_path_buf).unwrap_or_else(|| instances.join("eval"));
    fs::create_dir_all(&out).map_err(|e| Failure::from(Error::io(&out, e)))?;
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut missing = 0usize;
    for id in instance_ids(instances)? {
        let dir = instances.join(&id);
        if !dir.exists() {
            log::warn!("instance {id} not generated; skipped");
            missing += 1;
            continue;
        }
        let inst = load_instance(&dir)?;
        let pred = if from_gt {
            PredictedMatching::from_correspondence(&inst.gt, &inst.y)
        } else {
            let pdir = predictions.expect("clap requires predictions");
            let candidates = [pdir.join(format!("{id}.pred")), pdir.join(format!("{id}.corr"))];
            match candidates.iter().find(|p| p.exists()) {
                Some(p) => PredictedMatching::load(p, &inst.y)?,
                None => {
                    log::warn!("no prediction for {id}; skipped");
                    missing += 1;
                    continue;
                }
            }
        };
        let r = evaluate_instance(&inst, &pred, &opts).map_err(|e| Error::Instance {
            id: id.clone(),
            source: Box::new(e),
        })?;
        write_file(&out.join(format!("{id}.json")), &r.to_json())?;
        write_file(&out.join(format!("{id}.curve.txt")), &r.curve_text())?;
        log::info!("instance={id} auc={:.4}", r.auc);
        reports.push(r);
    }
    let summary = summarize(&reports);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&out.join("summary.json"), &json)?;
    println!("{json}");
    if reports.is_empty() {
        return Err(Failure {
            code: 1,
            message: "nothing evaluated".into(),
        });
    }
    if missing > 0 {
        log::warn!("{missing} instances without predictions");
    }
    Ok(())
}

fn propagate(out: &Path, shapes: &[String], args: &ConfigArgs) -> std::result::Result<(), Failure> {
    let config = resolve_config(args)?;
    let manifest = load_manifest(&config)?;
    let net = build_network(&manifest, &config.data_dir)?;
    fs::create_dir_all(out).map_err(|e| Failure::from(Error::io(out, e)))?;
    let ids: Vec<String> = if shapes.is_empty() {
        net.ids().map(String::from).collect()
    } else {
        shapes.to_vec()
    };
    let mut failed = 0;
    for id in &ids {
        match net.propagate_annotation(id) {
            Ok(l) => save_labels(&l, out.join(format!("{id}.labels")))?,
            Err(e) => {
                log::error!("{id}: {e}");
                failed += 1;
            }
        }
    }
    println!("{} shapes labelled, {failed} failed", ids.len() - failed);
    if failed > 0 {
        return Err(Failure {
            code: 1,
            message: format!("{failed} shapes without labels"),
        });
    }
    Ok(())
}

fn inspect(path: &Path) -> std::result::Result<(), Failure> {
    if path.join("meta.txt").exists() {
        let meta = path.join("meta.txt");
        print!("{}", fs::read_to_string(&meta).map_err(|e| Failure::from(Error::io(&meta, e)))?);
        let inst = load_instance(path)?;
        let report = inst.x.validate();
        println!("x_clean = {}", report.is_clean());
        println!("y_clean = {}", inst.y.validate().is_clean());
        return Ok(());
    }
    let ids = instance_ids(path)?;
    let present = ids.iter().filter(|id| path.join(id).join("meta.txt").exists()).count();
    println!("instances = {}", ids.len());
    println!("present = {present}");
    for split in ["train", "val", "test"] {
        let n = ids.iter().filter(|id| id.starts_with(split)).count();
        println!("{split} = {n}");
    }
    Ok(())
}

fn validate_network(manifest_only: bool, args: &ConfigArgs) -> std::result::Result<(), Failure> {
    let config = resolve_config(args)?;
    let manifest = load_manifest(&config)?;
    let source = manifest_path(&config).map_or_else(|| "builtin".to_string(), |p| p.display().to_string());
    println!("manifest = {source}");
    println!("datasets = {}", manifest.datasets().len());
    println!("shapes = {}", manifest.shapes().len());
    println!("edges = {}", manifest.edges().len());
    let groups = manifest.template_components();
    println!("template_components = {}", groups.len());
    let mut ok = groups.len() == 1;
    if !ok {
        for (i, g) in groups.iter().enumerate() {
            println!("component {i}: {}", g.join(" "));
        }
    }
    if !manifest_only {
        let net = build_network(&manifest, &config.data_dir)?;
        let comps = net.components();
        println!("network_components = {}", comps.len());
        ok &= comps.len() == 1;
        let mut unclean = 0;
        for id in net.ids() {
            let r = net.mesh(id)?.validate();
            if !r.is_clean() {
                log::warn!("{id}: {r:?}");
                unclean += 1;
            }
        }
        println!("meshes_with_warnings = {unclean}");
    }
    println!("connected = {ok}");
    if ok {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            message: "network is not connected".into(),
        })
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => generate(args),
        Command::Evaluate {
            instances,
            predictions,
            from_gt,
            report,
            tau_max,
            step,
            sign_invariant,
        } => evaluate(instances, predictions.as_deref(), *from_gt, report.as_deref(), *tau_max, *step, *sign_invariant),
        Command::PropagateAnnotations { out, shapes, config } => propagate(out, shapes, config),
        Command::Inspect { path } => inspect(path),
        Command::ValidateNetwork { manifest_only, config } => validate_network(*manifest_only, config),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_parsing() {
        let raw: Vec<String> = ["--setting", "partial_full", "--seed=4", "--datasets.FAUST", "false"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let o = parse_overrides(&raw).unwrap();
        assert_eq!(o[1], ("global_seed".into(), "4".into()));
        assert_eq!(o[2].0, "datasets.FAUST");
        assert_eq!(parse_overrides(&["--foo".into(), "1".into()]).unwrap_err().code, 2);
        assert_eq!(parse_overrides(&["--remesh".into()]).unwrap_err().code, 2);
        assert_eq!(parse_overrides(&["stray".into()]).unwrap_err().code, 2);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["corrbench", "generate", "--foo", "1"]), 2);
        assert_eq!(run(["corrbench", "nonsense"]), 2);
        assert_eq!(run(["corrbench", "validate-network", "--manifest-only", "--manifest", "builtin"]), 0);
        assert_eq!(
            run(["corrbench", "validate-network", "--manifest-only", "--manifest", "builtin", "--original_settings", "true", "--n_cam_pos", "3"]),
            1
        );
    }
}
