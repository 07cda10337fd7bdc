//! Training data: source images from a directory, an image-level holdout
//! split and random augmented patches.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pgm::load_pgm;
use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// Directory of `.pgm` source images.
    pub source: PathBuf,
    pub patch_size: usize,
    pub patches_per_image: usize,
    pub flips: bool,
    pub rotations: bool,
    pub split_seed: u64,
    /// Share of source images held out; the rest train.
    pub holdout_fraction: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            source: PathBuf::from("data"),
            patch_size: 96,
            patches_per_image: 50,
            flips: true,
            rotations: true,
            split_seed: 0,
            holdout_fraction: 0.2,
        }
    }
}

impl DatasetSpec {
    /// Checks everything except the source directory.
    pub fn validate(&self, block_size: usize) -> Result<()> {
        if self.patch_size == 0 || block_size == 0 || self.patch_size % block_size != 0 {
            return Err(Error::Config(format!(
                "patch size {} must be a positive multiple of the block size {block_size}",
                self.patch_size
            )));
        }
        if self.patches_per_image == 0 {
            return Err(Error::Config("patches_per_image must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!("holdout_fraction {} outside [0, 1)", self.holdout_fraction)));
        }
        Ok(())
    }

    /// The allowed `(flip, quarter turns)` transforms.
    pub fn transforms(&self) -> Vec<(bool, u8)> {
        let flips: &[bool] = if self.flips { &[false, true] } else { &[false] };
        let turns: &[u8] = if self.rotations { &[0, 1, 2, 3] } else { &[0] };
        flips.iter().flat_map(|&f| turns.iter().map(move |&r| (f, r))).collect()
    }
}

/// A named source image.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub name: String,
    pub image: GrayImage,
}

/// Every `.pgm` in `dir`, sorted by file name.
pub fn load_directory(dir: &Path) -> Result<Vec<Source>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no .pgm images in directory")));
    }
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(Source { name, image: load_pgm(&p)? })
        })
        .collect()
}

/// Indices of the training and holdout images. Holdout takes
/// `round(fraction * n)` images, at least one when `fraction > 0` and `n >= 2`,
/// and never all of them.
pub fn split_indices(n: usize, holdout_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut k = (holdout_fraction * n as f64).round() as usize;
    if holdout_fraction > 0.0 && n >= 2 {
        k = k.max(1);
    }
    k = k.min(n.saturating_sub(1));
    let mut holdout = idx.split_off(n - k);
    idx.sort_unstable();
    holdout.sort_unstable();
    (idx, holdout)
}

/// `patches_per_image` uniformly placed patches per image, each under a
/// uniformly drawn allowed dihedral transform. Order follows `images`.
pub fn extract_patches(images: &[GrayImage], spec: &DatasetSpec, seed: u64) -> Result<Vec<GrayImage>> {
    if images.is_empty() {
        return Err(Error::arg("no source images"));
    }
    let p = spec.patch_size;
    let transforms = spec.transforms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(images.len() * spec.patches_per_image);
    for (k, img) in images.iter().enumerate() {
        if img.height() < p || img.width() < p {
            return Err(Error::dim(format!("image {k} is {}x{}, smaller than patch {p}", img.height(), img.width())));
        }
        for _ in 0..spec.patches_per_image {
            let top = rng.gen_range(0..=img.height() - p);
            let left = rng.gen_range(0..=img.width() - p);
            let (flip, turns) = transforms[rng.gen_range(0..transforms.len())];
            out.push(img.window(top, left, p, p)?.dihedral(flip, turns));
        }
    }
    Ok(out)
}

/// Train and holdout patches with their source names.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<GrayImage>,
    pub holdout: Vec<GrayImage>,
    pub train_sources: Vec<String>,
    pub holdout_sources: Vec<String>,
}

/// Splits `sources` at image level, then extracts patches from each side;
/// holdout patches are not augmented.
pub fn build_dataset(sources: &[Source], spec: &DatasetSpec) -> Result<Dataset> {
    let (train_idx, holdout_idx) = split_indices(sources.len(), spec.holdout_fraction, spec.split_seed);
    let pick = |idx: &[usize]| -> (Vec<GrayImage>, Vec<String>) {
        idx.iter().map(|&i| (sources[i].image.clone(), sources[i].name.clone())).unzip()
    };
    let (train_imgs, train_sources) = pick(&train_idx);
    let (holdout_imgs, holdout_sources) = pick(&holdout_idx);
    let train = extract_patches(&train_imgs, spec, spec.split_seed.wrapping_add(1))?;
    let holdout = if holdout_imgs.is_empty() {
        Vec::new()
    } else {
        let plain = DatasetSpec { flips: false, rotations: false, ..spec.clone() };
        extract_patches(&holdout_imgs, &plain, spec.split_seed.wrapping_add(2))?
    };
    Ok(Dataset { train, holdout, train_sources, holdout_sources })
}
