//! Evaluation protocol: every LR domain is lifted to the canonical grid,
//! restored toward HR and scored against the HR ground truth.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{lpips, psnr, ssim};
use crate::corpus::{CorpusItem, CorpusManifest};
use crate::degradation::lift;
use crate::models::{FeatureBackbone, Generator, Provenance};
use crate::trainer::load_generator;
use crate::{load_image, Domain, Error, Image, Result, Scalar};

/// Anything that maps a lifted LR image to an HR estimate of the same size.
pub trait Restorer<T: Scalar> {
    fn restore(&self, lifted: &Image<T>) -> Result<Image<T>>;
}

impl<T: Scalar> Restorer<T> for Generator<T> {
    /// Blind restoration: the target label is always HR.
    fn restore(&self, lifted: &Image<T>) -> Result<Image<T>> {
        self.translate_image(lifted, Domain::Hr)
    }
}

/// Returns its input; scores the plain bicubic lift.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityRestorer;

impl<T: Scalar> Restorer<T> for IdentityRestorer {
    fn restore(&self, lifted: &Image<T>) -> Result<Image<T>> {
        Ok(lifted.clone())
    }
}

/// How far LPIPS values can be compared with published numbers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpipsStatus {
    Comparable,
    /// Computed with the fixed-random test backbone; only useful for relative
    /// comparisons inside this toolkit.
    NonComparable,
    Unavailable,
}

impl LpipsStatus {
    pub fn for_backbone<T: Scalar>(backbone: Option<&dyn FeatureBackbone<T>>) -> Self {
        match backbone.map(|b| b.provenance()) {
            Some(Provenance::PretrainedClassifier) => LpipsStatus::Comparable,
            Some(Provenance::FixedRandom) => LpipsStatus::NonComparable,
            None => LpipsStatus::Unavailable,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LpipsStatus::Comparable => "comparable",
            LpipsStatus::NonComparable => "non_comparable",
            LpipsStatus::Unavailable => "unavailable",
        }
    }
}

/// Scores of one LR domain. PSNR is capped at 99 dB for identical images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub domain: Domain,
    pub images: Vec<String>,
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    /// Absent when no backbone was available; never filled with zeros.
    pub lpips: Option<Vec<f64>>,
    /// Entries that cannot provide this domain.
    pub skipped: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl EvalRecord {
    pub fn count(&self) -> usize {
        self.psnr.len()
    }

    pub fn mean_psnr(&self) -> Option<f64> {
        mean(&self.psnr)
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        mean(&self.ssim)
    }

    pub fn mean_lpips(&self) -> Option<f64> {
        self.lpips.as_deref().and_then(mean)
    }
}

/// Unweighted mean of the per-domain means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AverageRow {
    pub domains: Vec<Domain>,
    pub psnr: f64,
    pub ssim: f64,
    pub lpips: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub average: Option<AverageRow>,
    pub lpips_status: LpipsStatus,
    /// Manifest entries whose HR ground truth could not be loaded.
    pub missing_ground_truth: usize,
}

/// One LR / SR / HR triple kept for the visual report.
#[derive(Clone, Debug)]
pub struct Panel<T> {
    pub domain: Domain,
    pub name: String,
    pub input: Image<T>,
    pub output: Image<T>,
    pub target: Image<T>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalOptions {
    /// LR domains to score, in output order.
    pub domains: Vec<Domain>,
    /// Panels kept per domain for the image grid.
    pub panels_per_domain: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            domains: Domain::LR.to_vec(),
            panels_per_domain: 0,
        }
    }
}

impl EvalReport {
    /// True when every requested domain scored at least one image.
    pub fn complete(&self) -> bool {
        self.records.iter().all(|r| r.count() > 0)
    }

    /// Tab-separated table in PSNR / SSIM / LPIPS column order: one row per
    /// domain, then the average row.
    pub fn to_tsv(&self) -> String {
        let fmt = |v: Option<f64>, prec: usize| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.prec$}"));
        let mut s = String::new();
        let _ = writeln!(s, "# lpips: {}", self.lpips_status.as_str());
        s.push_str("domain\timages\tskipped\tpsnr_db\tssim\tlpips\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.domain.name(),
                r.count(),
                r.skipped,
                fmt(r.mean_psnr(), 4),
                fmt(r.mean_ssim(), 4),
                fmt(r.mean_lpips(), 4)
            );
        }
        if let Some(a) = &self.average {
            let n: usize = self.records.iter().map(EvalRecord::count).sum();
            let sk: usize = self.records.iter().map(|r| r.skipped).sum();
            let _ = writeln!(
                s,
                "average\t{n}\t{sk}\t{}\t{}\t{}",
                fmt(Some(a.psnr), 4),
                fmt(Some(a.ssim), 4),
                fmt(a.lpips, 4)
            );
        }
        s
    }
}

fn average(records: &[EvalRecord]) -> Option<AverageRow> {
    let scored: Vec<&EvalRecord> = records.iter().filter(|r| r.count() > 0).collect();
    if scored.is_empty() {
        return None;
    }
    let n = scored.len() as f64;
    let psnr = scored.iter().filter_map(|r| r.mean_psnr()).sum::<f64>() / n;
    let ssim = scored.iter().filter_map(|r| r.mean_ssim()).sum::<f64>() / n;
    let lp: Option<Vec<f64>> = scored.iter().map(|r| r.mean_lpips()).collect();
    Some(AverageRow {
        domains: scored.iter().map(|r| r.domain).collect(),
        psnr,
        ssim,
        lpips: lp.map(|v| v.iter().sum::<f64>() / n),
    })
}

/// Scores `restorer` on every item for each requested domain. Items are
/// visited in the given order, so results are deterministic.
pub fn evaluate_with<T: Scalar, R: Restorer<T> + ?Sized>(
    restorer: &R,
    items: &[CorpusItem<T>],
    scale: usize,
    opts: &EvalOptions,
    backbone: Option<&dyn FeatureBackbone<T>>,
) -> Result<(EvalReport, Vec<Panel<T>>)> {
    let mut records = Vec::with_capacity(opts.domains.len());
    let mut panels = Vec::new();
    for &domain in &opts.domains {
        if domain == Domain::Hr {
            return Err(Error::InvalidDomain(
                "HR is the evaluation target, not an input domain".into(),
            ));
        }
        let mut rec = EvalRecord {
            domain,
            images: Vec::new(),
            psnr: Vec::new(),
            ssim: Vec::new(),
            lpips: backbone.map(|_| Vec::new()),
            skipped: 0,
        };
        for item in items {
            let Some(lr) = item.lr(domain) else {
                rec.skipped += 1;
                continue;
            };
            let input = lift(lr, scale)?;
            let output = restorer.restore(&input)?;
            rec.psnr.push(psnr(&output, &item.hr, 1.0)?);
            rec.ssim.push(ssim(&output, &item.hr)?);
            if let (Some(b), Some(v)) = (backbone, rec.lpips.as_mut()) {
                v.push(lpips(&output, &item.hr, b)?);
            }
            rec.images.push(item.name.clone());
            if panels.iter().filter(|p: &&Panel<T>| p.domain == domain).count() < opts.panels_per_domain {
                panels.push(Panel {
                    domain,
                    name: item.name.clone(),
                    input,
                    output,
                    target: item.hr.clone(),
                });
            }
        }
        records.push(rec);
    }
    let report = EvalReport {
        average: average(&records),
        records,
        lpips_status: LpipsStatus::for_backbone(backbone),
        missing_ground_truth: 0,
    };
    Ok((report, panels))
}

/// Loads the generator from a training checkpoint and scores it on the
/// manifest. Entries whose HR image cannot be read are skipped and counted.
pub fn evaluate(
    checkpoint: impl AsRef<Path>,
    manifest: &CorpusManifest,
    opts: &EvalOptions,
    backbone: Option<&dyn FeatureBackbone<f32>>,
) -> Result<(EvalReport, Vec<Panel<f32>>)> {
    let (generator, cfg, _) = load_generator::<f32>(checkpoint)?;
    let mut items = Vec::with_capacity(manifest.entries.len());
    let mut missing = 0;
    for e in &manifest.entries {
        let hr = match load_image::<f32>(&e.hr_path) {
            Ok(hr) => hr,
            Err(err) => {
                log::warn!("skipping entry without ground truth: {err}");
                missing += 1;
                continue;
            }
        };
        let real = match e.real_lr_path.as_ref().map(load_image::<f32>).transpose() {
            Ok(r) => r,
            Err(err) => {
                log::warn!("ignoring unreadable real LR image: {err}");
                None
            }
        };
        let name = e
            .hr_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        items.push(CorpusItem::new(name, hr, real, cfg.scale)?);
    }
    let (mut report, panels) = evaluate_with(&generator, &items, cfg.scale, opts, backbone)?;
    report.missing_ground_truth = missing;
    Ok((report, panels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(seed: usize) -> CorpusItem<f64> {
        let hr = Image::from_fn(3, 32, 32, |c, y, x| {
            (((c + 1) * (y * 7 + x * 3 + seed)) % 17) as f64 / 16.0
        });
        CorpusItem::new(format!("img{seed}"), hr, None, 4).unwrap()
    }

    #[test]
    fn empty_domain_list_gives_empty_report() {
        let opts = EvalOptions {
            domains: vec![],
            panels_per_domain: 0,
        };
        let (r, _) = evaluate_with(&IdentityRestorer, &[item(0)], 4, &opts, None).unwrap();
        assert!(r.records.is_empty());
        assert!(r.average.is_none());
    }

    #[test]
    fn real_lr_without_pairs_is_skipped_not_zeroed() {
        let opts = EvalOptions {
            domains: vec![Domain::BicubicLr, Domain::RealLr],
            panels_per_domain: 1,
        };
        let items = [item(0), item(1)];
        let (r, panels) = evaluate_with(&IdentityRestorer, &items, 4, &opts, None).unwrap();
        assert_eq!(r.records[0].count(), 2);
        assert_eq!(r.records[1].count(), 0);
        assert_eq!(r.records[1].skipped, 2);
        assert!(!r.complete());
        assert_eq!(r.average.as_ref().unwrap().domains, vec![Domain::BicubicLr]);
        assert_eq!(r.lpips_status, LpipsStatus::Unavailable);
        assert!(r.records[0].lpips.is_none());
        assert_eq!(panels.len(), 1);
        let tsv = r.to_tsv();
        assert!(tsv.contains("real\t0\t2\tn/a"), "{tsv}");
    }

    #[test]
    fn hr_is_not_an_input_domain() {
        let opts = EvalOptions {
            domains: vec![Domain::Hr],
            panels_per_domain: 0,
        };
        assert!(evaluate_with(&IdentityRestorer, &[item(0)], 4, &opts, None).is_err());
    }
}
