use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use multisr_core::corpus::{scan_corpus, CorpusManifest, LoadedCorpus};
use multisr_core::degradation::{lift, synth_lr, NoiseSpec};
use multisr_core::evalkit::{evaluate, save_panel_grid, EvalOptions};
use multisr_core::trainer::{
    build_backbone, checkpoint_config, load_generator, run_training, AblationMode, BackboneChoice,
    TrainConfig,
};
use multisr_core::{load_image, save_image, BitDepth, Domain, Error, Image};
use toml::{Table, Value};

use crate::{DataArgs, EvalArgs, InferArgs, ReportArgs, SynthArgs, TrainArgs};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

pub const RUN_ROOT_ENV: &str = "MULTISR_RUN_ROOT";
pub const CONFIG_SNAPSHOT: &str = "config.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Usage or configuration problem detected by the CLI itself.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow!(Usage(msg.into()))
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(err) = cause.downcast_ref::<Error>() {
            return match err {
                Error::Config(_) | Error::ConfigList(_) | Error::InvalidDomain(_) => EXIT_USAGE,
                Error::Divergence { .. } | Error::Numeric(_) => EXIT_DIVERGED,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn write_snapshot(path: &Path, table: Table) -> Result<()> {
    let text = toml::to_string(&table).context("serializing snapshot")?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn path_value(p: &Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

/// Sorted files of a folder; the caller decides what is decodable.
fn list_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

fn parse_domains(list: Option<&[String]>) -> Result<Vec<Domain>> {
    match list {
        None => Ok(Domain::LR.to_vec()),
        Some(names) => names
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                let d: Domain = s.trim().parse()?;
                if d == Domain::Hr {
                    return Err(usage("--domains: hr is the target, not an input domain"));
                }
                Ok(d)
            })
            .collect(),
    }
}

fn load_manifest(data: &DataArgs) -> Result<CorpusManifest> {
    if let Some(m) = &data.manifest {
        return Ok(CorpusManifest::load(m)?);
    }
    if data.data.is_empty() {
        return Err(usage("no corpus given: pass --data <dir> or --manifest <file>"));
    }
    Ok(scan_corpus(&data.data)?)
}

pub fn synth(a: &SynthArgs) -> Result<u8> {
    if a.scale == 0 {
        return Err(usage("--scale must be positive"));
    }
    let files: Vec<PathBuf> = list_files(&a.hr)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    if files.is_empty() {
        bail!(Error::EmptyCorpus(format!("no PNG images in {}", a.hr.display())));
    }
    let depth = if a.sixteen_bit { BitDepth::Sixteen } else { BitDepth::Eight };
    for d in Domain::SYNTHETIC {
        let dir = a.out.join(d.name());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut written = 0usize;
    for (i, path) in files.iter().enumerate() {
        let hr: Image<f64> = load_image(path)?;
        let cropped = hr.crop_to_multiple(a.scale)?;
        if cropped.dims() != hr.dims() {
            log::warn!(
                "{}: cropped to {}x{} to fit scale {}",
                path.display(),
                cropped.height(),
                cropped.width(),
                a.scale
            );
        }
        let name = path.file_name().expect("listed files have names");
        for d in Domain::SYNTHETIC {
            let noise = NoiseSpec {
                sigma: a.noise_sigma,
                seed: a.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((i as u64) << 3 | d.id() as u64),
            };
            let lr = synth_lr(&cropped, d, a.scale, &noise)?.map(|v| v.clamp(0.0, 1.0));
            save_image(&lr, a.out.join(d.name()).join(name), depth)?;
            written += 1;
        }
    }
    let mut snap = Table::new();
    snap.insert("command".into(), "synth".into());
    snap.insert("hr".into(), path_value(&a.hr));
    snap.insert("scale".into(), Value::Integer(a.scale as i64));
    snap.insert("noise_sigma".into(), Value::Float(a.noise_sigma));
    snap.insert("seed".into(), Value::String(a.seed.to_string()));
    snap.insert("sixteen_bit".into(), Value::Boolean(a.sixteen_bit));
    write_snapshot(&a.out.join("synth.toml"), snap)?;
    log::info!("wrote {written} LR images under {}", a.out.display());
    Ok(EXIT_OK)
}

fn resolve_config(a: &TrainArgs, ov: &[(String, String)]) -> Result<TrainConfig> {
    let mut cfg = match (&a.config, &a.resume) {
        (Some(p), _) => TrainConfig::load(p)?,
        (None, Some(ckpt)) => checkpoint_config(ckpt)?.0,
        (None, None) => TrainConfig::default(),
    };
    if a.desk_scale {
        cfg.apply_desk_scale();
    }
    if let Some(m) = &a.mode {
        cfg.mode = m
            .parse::<AblationMode>()
            .map_err(|e| usage(format!("--mode: {e}")))?;
    }
    let cfg = crate::overrides::apply(&cfg, ov)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run_dir(a: &TrainArgs, cfg: &TrainConfig) -> PathBuf {
    if let Some(d) = &a.run_dir {
        return d.clone();
    }
    let root = std::env::var_os(RUN_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"));
    let name = a
        .name
        .clone()
        .unwrap_or_else(|| format!("{}-seed{}", cfg.mode, cfg.seed));
    root.join(name)
}

/// Writes the snapshot once; a later run in the same directory must use a
/// compatible configuration.
fn ensure_snapshot(dir: &Path, cfg: &TrainConfig, resuming: bool) -> Result<()> {
    let path = dir.join(CONFIG_SNAPSHOT);
    if path.exists() {
        let stored = TrainConfig::load(&path)?;
        let ok = if resuming { stored.resume_compatible(cfg) } else { stored == *cfg };
        if !ok {
            return Err(usage(format!(
                "{} holds a different configuration; use another --run-dir",
                path.display()
            )));
        }
        return Ok(());
    }
    fs::write(&path, cfg.to_toml_string()).with_context(|| format!("writing {}", path.display()))
}

pub fn train(a: &TrainArgs, ov: &[(String, String)]) -> Result<u8> {
    let cfg = resolve_config(a, ov)?;
    let manifest = load_manifest(&a.data)?;
    let dir = run_dir(a, &cfg);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    ensure_snapshot(&dir, &cfg, a.resume.is_some())?;
    manifest.save(dir.join(MANIFEST_FILE))?;
    let corpus = LoadedCorpus::<f32>::load(&manifest, cfg.scale)?;
    log::info!(
        "training {} for {} iterations on {} images in {}",
        cfg.mode,
        cfg.iterations,
        corpus.len(),
        dir.display()
    );
    let summary = run_training(&cfg, &corpus, &dir, a.resume.as_deref())?;
    if summary.stats.is_empty() {
        log::info!("nothing to do: already at iteration {}", summary.iteration);
    }
    println!("{}", summary.final_checkpoint.display());
    Ok(EXIT_OK)
}

pub fn infer(a: &InferArgs) -> Result<u8> {
    let (generator, cfg, _) = load_generator::<f32>(&a.checkpoint)?;
    let files = list_files(&a.input)?;
    if files.is_empty() {
        bail!(Error::EmptyCorpus(format!("no files in {}", a.input.display())));
    }
    fs::create_dir_all(&a.output).with_context(|| format!("creating {}", a.output.display()))?;
    let (mut ok, mut failed) = (0usize, 0usize);
    for path in &files {
        let lr: Image<f32> = match load_image(path) {
            Ok(img) => img,
            Err(e) => {
                log::warn!("skipping {e}");
                failed += 1;
                continue;
            }
        };
        let sr = generator
            .translate_image(&lift(&lr, cfg.scale)?, Domain::Hr)?
            .map(|v| v.clamp(0.0, 1.0));
        let out = a.output.join(path.with_extension("png").file_name().expect("file name"));
        save_image(&sr, &out, BitDepth::Eight)?;
        ok += 1;
    }
    let mut snap = Table::new();
    snap.insert("command".into(), "infer".into());
    snap.insert("checkpoint".into(), path_value(&a.checkpoint));
    snap.insert("input".into(), path_value(&a.input));
    write_snapshot(&a.output.join("infer.toml"), snap)?;
    log::info!("super-resolved {ok} images, skipped {failed}");
    if ok == 0 {
        bail!(Error::EmptyCorpus(format!("no readable images in {}", a.input.display())));
    }
    Ok(EXIT_OK)
}

/// Run directory of a checkpoint stored under `<run>/checkpoints/`.
fn checkpoint_run_dir(ckpt: &Path) -> PathBuf {
    let parent = ckpt.parent().unwrap_or(Path::new("."));
    match parent.file_name() {
        Some(n) if n == multisr_core::trainer::CHECKPOINT_DIR => {
            parent.parent().unwrap_or(Path::new(".")).to_path_buf()
        }
        _ => parent.to_path_buf(),
    }
}

pub fn eval(a: &EvalArgs) -> Result<u8> {
    if !a.checkpoint.is_file() {
        bail!(Error::Checkpoint {
            path: a.checkpoint.clone(),
            reason: "not found".into(),
        });
    }
    let opts = EvalOptions {
        domains: parse_domains(a.domains.as_deref())?,
        panels_per_domain: a.panels,
    };
    let manifest = load_manifest(&a.data)?;
    let choice: BackboneChoice = a.lpips_backbone.parse().expect("infallible");
    let backbone = build_backbone::<f32>(&choice)?;
    let (report, panels) = evaluate(&a.checkpoint, &manifest, &opts, backbone.as_deref())?;
    let out = a.out.clone().unwrap_or_else(|| checkpoint_run_dir(&a.checkpoint));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let tsv = report.to_tsv();
    fs::write(out.join("eval.tsv"), &tsv).context("writing eval.tsv")?;
    let json = serde_json::to_string_pretty(&report).context("serializing report")?;
    fs::write(out.join("eval.json"), json).context("writing eval.json")?;
    if !panels.is_empty() {
        save_panel_grid(&panels, out.join("eval_grid.png"))?;
    }
    let mut snap = Table::new();
    snap.insert("command".into(), "eval".into());
    snap.insert("checkpoint".into(), path_value(&a.checkpoint));
    snap.insert(
        "domains".into(),
        Value::Array(opts.domains.iter().map(|d| d.name().into()).collect()),
    );
    snap.insert("panels".into(), Value::Integer(a.panels as i64));
    snap.insert("lpips_backbone".into(), a.lpips_backbone.clone().into());
    write_snapshot(&out.join("eval.toml"), snap)?;
    print!("{tsv}");
    if report.missing_ground_truth > 0 {
        log::warn!("{} entries had no readable ground truth", report.missing_ground_truth);
    }
    Ok(if report.complete() { EXIT_OK } else { EXIT_DATA })
}

pub fn report(a: &ReportArgs) -> Result<u8> {
    if a.count == 0 {
        return Err(usage("--count must be >= 1"));
    }
    let opts = EvalOptions {
        domains: parse_domains(a.domains.as_deref())?,
        panels_per_domain: a.count,
    };
    let manifest = load_manifest(&a.data)?;
    let (_, panels) = evaluate(&a.checkpoint, &manifest, &opts, None)?;
    if panels.is_empty() {
        bail!(Error::EmptyCorpus("no images to show".into()));
    }
    if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_panel_grid(&panels, &a.out)?;
    log::info!("wrote {} panels to {}", panels.len(), a.out.display());
    Ok(EXIT_OK)
}
