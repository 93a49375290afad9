use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use multisr_tensor::Scalar;

use super::config::TrainConfig;
use super::step::{build_backbone, StepStats, Trainer};
use crate::corpus::LoadedCorpus;
use crate::{Error, Result};

pub const RUN_LOG: &str = "run_log.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub fn checkpoint_path(run_dir: &Path, iteration: u64) -> PathBuf {
    run_dir.join(CHECKPOINT_DIR).join(format!("ckpt-{iteration:07}.msr"))
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub iteration: u64,
    pub resumed_from: Option<u64>,
    /// Checkpoint holding the final state.
    pub final_checkpoint: PathBuf,
    /// Stats of the steps executed by this call.
    pub stats: Vec<StepStats>,
}

/// Keeps only log records up to and including `iteration`.
fn truncate_log(path: &Path, iteration: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut kept = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let rec: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if rec.get("iter").and_then(|v| v.as_u64()).is_some_and(|i| i <= iteration) {
            kept.push(line);
        }
    }
    let mut text = kept.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a run log back into step records.
pub fn read_run_log(path: impl AsRef<Path>) -> Result<Vec<StepStats>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(f)
        .lines()
        .map(|l| {
            let l = l.map_err(|e| Error::io(path, e))?;
            Ok(serde_json::from_str(&l)?)
        })
        .collect()
}

/// Runs (or continues) training in `run_dir`, writing a checkpoint every
/// `checkpoint_every` steps and at the end, and one log record per step.
/// On divergence the error is returned and earlier checkpoints are kept.
pub fn run_training<T: Scalar>(
    cfg: &TrainConfig,
    corpus: &LoadedCorpus<T>,
    run_dir: &Path,
    resume: Option<&Path>,
) -> Result<RunSummary> {
    cfg.validate()?;
    if corpus.scale != cfg.scale {
        return Err(Error::Config(format!(
            "corpus prepared at scale {} but config asks for {}",
            corpus.scale, cfg.scale
        )));
    }
    let ckpt_dir = run_dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let backbone = build_backbone::<T>(&cfg.backbone)?;
    let mut trainer = match resume {
        Some(p) => Trainer::resume(p, Some(cfg), backbone)?,
        None => Trainer::with_backbone(cfg.clone(), backbone)?,
    };
    let resumed_from = resume.map(|_| trainer.iteration);
    let log_path = run_dir.join(RUN_LOG);
    if resumed_from.is_some() {
        truncate_log(&log_path, trainer.iteration)?;
    } else if log_path.exists() {
        fs::remove_file(&log_path).map_err(|e| Error::io(&log_path, e))?;
    }
    let mut last = resume.map(Path::to_path_buf);
    if trainer.iteration >= cfg.iterations {
        let final_checkpoint = match last {
            Some(p) => p,
            None => {
                let p = checkpoint_path(run_dir, trainer.iteration);
                trainer.save_checkpoint(&p)?;
                p
            }
        };
        return Ok(RunSummary {
            iteration: trainer.iteration,
            resumed_from,
            final_checkpoint,
            stats: Vec::new(),
        });
    }
    let log_file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(log_file);
    let mut stats = Vec::new();
    while trainer.iteration < cfg.iterations {
        let s = trainer.step(corpus)?;
        serde_json::to_writer(&mut log, &s)?;
        writeln!(log).map_err(|e| Error::io(&log_path, e))?;
        if s.iter % 10 == 0 || s.iter == cfg.iterations {
            log::info!(
                "iter {} lr {:.3e} total_g {:.4} total_d {:.4} l1 {:.4}",
                s.iter,
                s.lr,
                s.total_g,
                s.total_d,
                s.g.l1
            );
        }
        stats.push(s);
        if trainer.iteration % cfg.checkpoint_every == 0 || trainer.iteration == cfg.iterations {
            log.flush().map_err(|e| Error::io(&log_path, e))?;
            let p = checkpoint_path(run_dir, trainer.iteration);
            trainer.save_checkpoint(&p)?;
            last = Some(p);
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    Ok(RunSummary {
        iteration: trainer.iteration,
        resumed_from,
        final_checkpoint: last.expect("at least one checkpoint written"),
        stats,
    })
}
