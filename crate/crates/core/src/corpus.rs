//! Corpus scanning, in-memory domain stacks, paired patch extraction and
//! target-label sampling.
//!
//! Layout: each root holds HR images either directly or under `hr/`. Real LR
//! counterparts, when present, live in a sibling folder `real_lr/` and share
//! the HR file's basename.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::degradation::{lift, synth_lr, NoiseSpec};
use crate::{load_image, Domain, Error, Image, Result, Scalar};

pub const HR_DIR: &str = "hr";
pub const REAL_LR_DIR: &str = "real_lr";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub hr_path: PathBuf,
    pub real_lr_path: Option<PathBuf>,
    pub available_domains: Vec<Domain>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub roots: Vec<PathBuf>,
    pub entries: Vec<ManifestEntry>,
    /// Files that could not be decoded and were left out.
    pub skipped: usize,
    /// SHA-256 over entry paths and file contents, hex encoded.
    pub checksum: String,
}

fn is_image_file(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn readable(p: &Path) -> bool {
    image::image_dimensions(p).is_ok()
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for ent in rd {
        let ent = ent.map_err(|e| Error::io(dir, e))?;
        let p = ent.path();
        if is_image_file(&p) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Folder holding the HR images of `root`.
pub fn hr_dir(root: &Path) -> PathBuf {
    let sub = root.join(HR_DIR);
    if sub.is_dir() {
        sub
    } else {
        root.to_path_buf()
    }
}

fn real_lr_dir(hr_dir: &Path) -> Option<PathBuf> {
    let dir = hr_dir.parent()?.join(REAL_LR_DIR);
    dir.is_dir().then_some(dir)
}

pub fn scan_corpus(roots: &[PathBuf]) -> Result<CorpusManifest> {
    let mut entries = Vec::new();
    let mut skipped = 0usize;
    for root in roots {
        let hr = hr_dir(root);
        let lr_dir = real_lr_dir(&hr);
        for path in list_images(&hr)? {
            if !readable(&path) {
                log::warn!("skipping unreadable image {}", path.display());
                skipped += 1;
                continue;
            }
            let real = lr_dir
                .as_ref()
                .map(|d| d.join(path.file_name().expect("listed files have names")))
                .filter(|p| p.is_file());
            let real = match real {
                Some(p) if readable(&p) => Some(p),
                Some(p) => {
                    log::warn!("skipping unreadable real LR image {}", p.display());
                    skipped += 1;
                    None
                }
                None => None,
            };
            let mut available: Vec<Domain> = Domain::SYNTHETIC.to_vec();
            if real.is_some() {
                available.push(Domain::RealLr);
            }
            available.push(Domain::Hr);
            entries.push(ManifestEntry {
                hr_path: path,
                real_lr_path: real,
                available_domains: available,
            });
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no readable PNG images under {roots:?}"
        )));
    }
    entries.sort_by(|a, b| a.hr_path.cmp(&b.hr_path));
    let checksum = checksum(&entries)?;
    Ok(CorpusManifest {
        roots: roots.to_vec(),
        entries,
        skipped,
        checksum,
    })
}

fn checksum(entries: &[ManifestEntry]) -> Result<String> {
    let mut h = Sha256::new();
    for e in entries {
        for p in std::iter::once(&e.hr_path).chain(e.real_lr_path.iter()) {
            h.update(p.to_string_lossy().as_bytes());
            h.update([0u8]);
            let bytes = std::fs::read(p).map_err(|err| Error::io(p, err))?;
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
    }
    Ok(hex::encode(h.finalize()))
}

impl CorpusManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// One corpus image with every domain it can provide, LR domains on the LR
/// grid.
#[derive(Clone, Debug)]
pub struct CorpusItem<T> {
    pub name: String,
    pub hr: Image<T>,
    /// Indexed by `Domain::id()` for the four LR domains.
    lr: [Option<Image<T>>; 4],
}

impl<T: Scalar> CorpusItem<T> {
    /// Builds the domain stack: HR is cropped to a multiple of `scale`, the
    /// synthetic LR domains are produced without noise.
    pub fn new(name: impl Into<String>, hr: Image<T>, real_lr: Option<Image<T>>, scale: usize) -> Result<Self> {
        let name = name.into();
        let mut hr = hr.crop_to_multiple(scale)?;
        let real = match real_lr {
            Some(real) => {
                let h = real.height().min(hr.height() / scale);
                let w = real.width().min(hr.width() / scale);
                if h == 0 || w == 0 {
                    return Err(Error::Shape(format!("{name}: real LR does not fit its HR image")));
                }
                hr = hr.crop(0, 0, h * scale, w * scale)?;
                Some(real.crop(0, 0, h, w)?)
            }
            None => None,
        };
        let synth = |d| synth_lr(&hr, d, scale, &NoiseSpec::none());
        let lr = [
            Some(synth(Domain::BicubicLr)?),
            Some(synth(Domain::BilinearLr)?),
            Some(synth(Domain::NearestLr)?),
            real,
        ];
        Ok(CorpusItem { name, hr, lr })
    }

    pub fn has(&self, d: Domain) -> bool {
        d == Domain::Hr || self.lr[d.id()].is_some()
    }

    pub fn available(&self) -> Vec<Domain> {
        Domain::ALL.into_iter().filter(|&d| self.has(d)).collect()
    }

    /// LR-grid image of an LR domain.
    pub fn lr(&self, d: Domain) -> Option<&Image<T>> {
        if d == Domain::Hr {
            None
        } else {
            self.lr[d.id()].as_ref()
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadedCorpus<T> {
    pub scale: usize,
    pub items: Vec<CorpusItem<T>>,
}

impl<T: Scalar> LoadedCorpus<T> {
    pub fn load(manifest: &CorpusManifest, scale: usize) -> Result<Self> {
        let mut items = Vec::with_capacity(manifest.entries.len());
        for e in &manifest.entries {
            let hr = load_image(&e.hr_path)?;
            let real = e.real_lr_path.as_ref().map(load_image).transpose()?;
            let name = e
                .hr_path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            items.push(CorpusItem::new(name, hr, real, scale)?);
        }
        Self::from_items(items, scale)
    }

    pub fn from_items(items: Vec<CorpusItem<T>>, scale: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyCorpus("no images".into()));
        }
        Ok(LoadedCorpus { scale, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Top-left corner of a paired crop on the LR grid; the HR corner is
/// `scale` times larger on both axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchOffset {
    pub lr_y: usize,
    pub lr_x: usize,
    pub scale: usize,
}

impl PatchOffset {
    pub fn hr(&self) -> (usize, usize) {
        (self.lr_y * self.scale, self.lr_x * self.scale)
    }
}

/// Draws a uniformly distributed aligned offset for a `size x size` HR crop.
pub fn draw_patch_offset<R: Rng + ?Sized>(
    hr_h: usize,
    hr_w: usize,
    size: usize,
    scale: usize,
    rng: &mut R,
) -> Result<PatchOffset> {
    if scale == 0 || size == 0 || size % scale != 0 {
        return Err(Error::PatchSize {
            size,
            reason: format!("must be a positive multiple of scale {scale}"),
        });
    }
    if size > hr_h.min(hr_w) {
        return Err(Error::PatchSize {
            size,
            reason: format!("image is only {hr_h}x{hr_w}"),
        });
    }
    let (lh, lw, ls) = (hr_h / scale, hr_w / scale, size / scale);
    Ok(PatchOffset {
        lr_y: rng.random_range(0..=lh - ls),
        lr_x: rng.random_range(0..=lw - ls),
        scale,
    })
}

/// Random `size x size` crop whose corner is aligned to the `scale` grid.
pub fn extract_patch<T: Scalar, R: Rng + ?Sized>(
    img: &Image<T>,
    size: usize,
    scale: usize,
    rng: &mut R,
) -> Result<Image<T>> {
    let off = draw_patch_offset(img.height(), img.width(), size, scale, rng)?;
    let (y, x) = off.hr();
    img.crop(y, x, size, size)
}

/// Co-located crops of every domain an item provides, all on the HR grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainCrops<T> {
    crops: [Option<Image<T>>; 5],
}

impl<T: Scalar> DomainCrops<T> {
    pub fn at(item: &CorpusItem<T>, off: PatchOffset, size: usize) -> Result<Self> {
        let (hy, hx) = off.hr();
        let ls = size / off.scale;
        let mut crops: [Option<Image<T>>; 5] = Default::default();
        crops[Domain::Hr.id()] = Some(item.hr.crop(hy, hx, size, size)?);
        for d in Domain::LR {
            if let Some(lr) = item.lr(d) {
                crops[d.id()] = Some(lift(&lr.crop(off.lr_y, off.lr_x, ls, ls)?, off.scale)?);
            }
        }
        Ok(DomainCrops { crops })
    }

    pub fn from_parts(crops: [Option<Image<T>>; 5]) -> Self {
        DomainCrops { crops }
    }

    pub fn get(&self, d: Domain) -> Option<&Image<T>> {
        self.crops[d.id()].as_ref()
    }

    pub fn map(&self, f: impl Fn(&Image<T>) -> Image<T>) -> Self {
        DomainCrops {
            crops: std::array::from_fn(|i| self.crops[i].as_ref().map(&f)),
        }
    }

    pub fn available(&self) -> Vec<Domain> {
        Domain::ALL.into_iter().filter(|d| self.crops[d.id()].is_some()).collect()
    }
}

/// One training example on the canonical grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample<T> {
    pub image: Image<T>,
    pub src_label: Domain,
    pub trg_label: Domain,
    /// Ground truth for `trg_label` when this entry has it.
    pub target_image: Option<Image<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// Uniform over all five domains.
    Random,
    /// Always HR.
    HrOnly,
}

pub fn sample_target_labels<R: Rng + ?Sized>(batch: usize, mode: LabelMode, rng: &mut R) -> Vec<Domain> {
    (0..batch)
        .map(|_| match mode {
            LabelMode::HrOnly => Domain::Hr,
            LabelMode::Random => Domain::ALL[rng.random_range(0..Domain::ALL.len())],
        })
        .collect()
}

/// Uniform draw among the domains an item provides.
pub fn sample_source_domain<R: Rng + ?Sized>(available: &[Domain], rng: &mut R) -> Domain {
    available[rng.random_range(0..available.len())]
}

/// Distinct domains in first-seen order.
pub fn distinct(labels: &[Domain]) -> BTreeSet<Domain> {
    labels.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn write_png(path: &Path, h: usize, w: usize, seed: usize) {
        let img = Image::<f32>::from_fn(3, h, w, |c, y, x| ((c + y * 3 + x * 5 + seed) % 11) as f32 / 10.0);
        crate::save_image(&img, path, crate::BitDepth::Eight).unwrap();
    }

    #[test]
    fn scan_hr_only_and_paired() {
        let dir = tempfile::tempdir().unwrap();
        let hr = dir.path().join("hr");
        std::fs::create_dir_all(&hr).unwrap();
        for i in 0..8 {
            write_png(&hr.join(format!("{i:02}.png")), 32, 32, i);
        }
        let m = scan_corpus(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(m.entries.len(), 8);
        assert!(m.entries.iter().all(|e| e.real_lr_path.is_none()
            && !e.available_domains.contains(&Domain::RealLr)));

        let lr = dir.path().join(REAL_LR_DIR);
        std::fs::create_dir_all(&lr).unwrap();
        for i in 0..8 {
            write_png(&lr.join(format!("{i:02}.png")), 8, 8, i);
        }
        let m2 = scan_corpus(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(m2.entries.len(), 8);
        assert!(m2.entries.iter().all(|e| e.real_lr_path.is_some()
            && e.available_domains.contains(&Domain::RealLr)));
        assert_ne!(m.checksum, m2.checksum);
        let again = scan_corpus(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(again, m2);

        let path = dir.path().join("manifest.json");
        m2.save(&path).unwrap();
        assert_eq!(CorpusManifest::load(&path).unwrap(), m2);
    }

    #[test]
    fn scan_skips_unreadable_and_rejects_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            scan_corpus(&[dir.path().to_path_buf()]),
            Err(Error::EmptyCorpus(_))
        ));
        std::fs::write(dir.path().join("broken.png"), b"not a png").unwrap();
        write_png(&dir.path().join("ok.png"), 16, 16, 0);
        let m = scan_corpus(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.skipped, 1);
    }

    #[test]
    fn patches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = Image::<f64>::from_fn(3, 128, 128, |c, y, x| (c + y + x) as f64);
        assert_eq!(extract_patch(&img, 128, 4, &mut rng).unwrap(), img);
        let flat = Image::<f64>::filled(3, 40, 48, 0.7);
        for _ in 0..1000 {
            let p = extract_patch(&flat, 16, 4, &mut rng).unwrap();
            assert_eq!(p.dims(), (3, 16, 16));
            assert!(p.data().iter().all(|&v| v == 0.7));
        }
        assert!(matches!(
            extract_patch(&flat, 44, 4, &mut rng),
            Err(Error::PatchSize { .. })
        ));
        assert!(matches!(
            extract_patch(&flat, 18, 4, &mut rng),
            Err(Error::PatchSize { .. })
        ));
    }

    #[test]
    fn paired_offsets_scale_consistently() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let off = draw_patch_offset(96, 64, 32, 4, &mut rng).unwrap();
            assert_eq!(off.hr(), (4 * off.lr_y, 4 * off.lr_x));
            assert!(off.hr().0 + 32 <= 96 && off.hr().1 + 32 <= 64);
        }
        // coordinate bookkeeping: the HR crop's top-left pixel is the one the
        // nearest LR crop samples
        let hr = Image::<f64>::from_fn(3, 64, 64, |_, y, x| (y * 64 + x) as f64);
        let item = CorpusItem::new("c", hr.clone(), None, 4).unwrap();
        for _ in 0..50 {
            let off = draw_patch_offset(64, 64, 16, 4, &mut rng).unwrap();
            let lr_crop = item.lr(Domain::NearestLr).unwrap().crop(off.lr_y, off.lr_x, 4, 4).unwrap();
            let (hy, hx) = off.hr();
            assert_eq!(lr_crop.get(0, 0, 0), hr.get(0, hy, hx));
            let crops = DomainCrops::at(&item, off, 16).unwrap();
            assert_eq!(crops.get(Domain::Hr).unwrap(), &hr.crop(hy, hx, 16, 16).unwrap());
            assert!(crops.get(Domain::RealLr).is_none());
            assert_eq!(crops.get(Domain::BicubicLr).unwrap().dims(), (3, 16, 16));
        }
    }

    #[test]
    fn label_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_target_labels(3, LabelMode::HrOnly, &mut rng), vec![Domain::Hr; 3]);
        let n = 100_000;
        let labels = sample_target_labels(n, LabelMode::Random, &mut rng);
        for d in Domain::ALL {
            let f = labels.iter().filter(|&&l| l == d).count() as f64 / n as f64;
            assert!((0.19..=0.21).contains(&f), "{d}: {f}");
        }
        let a = sample_target_labels(50, LabelMode::Random, &mut ChaCha8Rng::seed_from_u64(5));
        let b = sample_target_labels(50, LabelMode::Random, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }
}
