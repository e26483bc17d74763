//! End-to-end dataset generation.
//!
//! Output layout under `output_dir`:
//!
//! ```text
//! config.cfg        resolved configuration
//! instances.txt     id split source target dataset repeat, one per line
//! <id>/meta.txt     key = value record
//! <id>/x.ply        source shape (binary PLY)
//! <id>/y.ply        target shape
//! <id>/y_full.ply   full target behind a partial y
//! <id>/gt.corr      x -> y ground truth
//! <id>/x.parent     partial x vertex -> full vertex (partial settings)
//! <id>/y.parent     partial y vertex -> y_full vertex (partial-partial)
//! <id>/x.labels     propagated labels when the network has annotations
//! <id>/vis_*.ply    colour transfer under store_vis
//! ```
//!
//! Each instance is written to `.tmp-<id>` and renamed into place, so an
//! existing `<id>` directory is always complete and is skipped on rerun.

mod config;
mod instance;
mod pairs;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

pub use config::{CamPosRegime, Combination, GenerationConfig, Setting, SplitSelection, BUILTIN_MANIFEST, KEYS};
pub use instance::{generate_instance, load_instance, write_instance, MatchingInstance, Provenance, ShapeTransform};
pub use pairs::{categories_in, enumerate_pairs, PairSpec};

use crate::corrnet::{build_network, Manifest};
use crate::error::{Error, Result};

/// The registry shipped with the crate: datasets, categories, template
/// links, splits and pair quotas. Scale factors are placeholders to edit.
pub const DEFAULT_MANIFEST: &str = include_str!("../../data/default.manifest");

pub fn default_manifest() -> Manifest {
    Manifest::parse(DEFAULT_MANIFEST, Path::new(BUILTIN_MANIFEST)).expect("shipped manifest parses")
}

pub fn manifest_path(config: &GenerationConfig) -> Option<PathBuf> {
    match config.manifest.as_deref() {
        Some(BUILTIN_MANIFEST) => None,
        Some(p) => Some(PathBuf::from(p)),
        None => Some(config.data_dir.join("manifest.txt")),
    }
}

pub fn load_manifest(config: &GenerationConfig) -> Result<Manifest> {
    match manifest_path(config) {
        None => Ok(default_manifest()),
        Some(p) => Manifest::load(p),
    }
}

pub fn scale_table(manifest: &Manifest) -> BTreeMap<String, f64> {
    manifest.datasets().iter().map(|d| (d.name.clone(), d.scale)).collect()
}

#[derive(Debug, Clone, Default)]
pub struct GenerationSummary {
    pub total: usize,
    pub generated: usize,
    pub skipped: usize,
    pub failed: Vec<(String, String)>,
}

fn instances_text(pairs: &[PairSpec]) -> String {
    let mut s = String::new();
    for p in pairs {
        let _ = writeln!(s, "{} {} {} {} {} {}", p.id, p.split, p.source, p.target, p.dataset, p.repeat);
    }
    s
}

fn clean_stale(out: &Path) -> Result<()> {
    for entry in fs::read_dir(out).map_err(|e| Error::io(out, e))? {
        let entry = entry.map_err(|e| Error::io(out, e))?;
        if entry.file_name().to_string_lossy().starts_with(".tmp-") {
            log::info!("removing stale {}", entry.path().display());
            fs::remove_dir_all(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        }
    }
    Ok(())
}

/// Generates every selected instance into `config.output_dir`, skipping
/// instances already present. Per-instance failures are logged and
/// reported in the summary; the rest of the run continues.
pub fn run_generation(config: &GenerationConfig) -> Result<GenerationSummary> {
    config.validate()?;
    let manifest = load_manifest(config)?;
    let mut pairs = enumerate_pairs(&manifest, config)?;
    if config.max_instances > 0 {
        pairs.truncate(config.max_instances);
    }
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    clean_stale(out)?;
    let write = |name: &str, text: String| {
        let p = out.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("config.cfg", config.to_text())?;
    write("instances.txt", instances_text(&pairs))?;

    let todo: Vec<&PairSpec> = pairs.iter().filter(|p| !out.join(&p.id).exists()).collect();
    let mut summary = GenerationSummary {
        total: pairs.len(),
        skipped: pairs.len() - todo.len(),
        ..Default::default()
    };
    log::info!("{} instances, {} already present", summary.total, summary.skipped);
    if todo.is_empty() {
        return Ok(summary);
    }
    let net = build_network(&manifest, &config.data_dir)?;
    let scales = scale_table(&manifest);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let results: Vec<(String, Result<()>)> = pool.install(|| {
        todo.par_iter()
            .map(|spec| {
                let start = Instant::now();
                let res = (|| {
                    let inst = generate_instance(spec, &net, config, &scales)?;
                    let tmp = out.join(format!(".tmp-{}", spec.id));
                    if tmp.exists() {
                        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
                    }
                    fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
                    write_instance(&inst, &tmp, config.store_vis)?;
                    let dest = out.join(&spec.id);
                    fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
                })();
                match &res {
                    Ok(()) => log::info!("instance={} status=ok seconds={:.3}", spec.id, start.elapsed().as_secs_f64()),
                    Err(e) => log::error!("instance={} status=failed error=\"{e}\"", spec.id),
                }
                (spec.id.clone(), res)
            })
            .collect()
    });
    for (id, r) in results {
        match r {
            Ok(()) => summary.generated += 1,
            Err(e) => summary.failed.push((id, e.to_string())),
        }
    }
    Ok(summary)
}
