//! On-disk datasets: `<dir>/manifest.tsv` plus one FSQ1 file per clip under
//! `<dir>/clips/`. Clip paths in the manifest are relative to its directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use m2align_core::descriptor::FeatureClip;
use m2align_core::episode::{Manifest, ManifestEntry, Split};
use m2align_core::synth::{generate_dataset, SynthConfig};
use rayon::prelude::*;

use crate::manifest::{read_manifest, write_manifest};
use crate::store::{read_clip, write_clip, Storage};

pub const MANIFEST_NAME: &str = "manifest.tsv";

/// Renders the synthetic dataset of `cfg` into `dir`. Returns the manifest
/// path.
pub fn write_synth_dataset(cfg: &SynthConfig, dir: &Path, storage: Storage) -> Result<PathBuf> {
    let data = generate_dataset(cfg)?;
    let clips = dir.join("clips");
    fs::create_dir_all(&clips).with_context(|| format!("cannot create {}", clips.display()))?;
    let entries: Vec<ManifestEntry> = data
        .items
        .iter()
        .map(|it| ManifestEntry {
            id: it.id.clone(),
            class: it.label.clone(),
            path: format!("clips/{}.fsq", it.id),
            split: Split::Test,
        })
        .collect();
    data.items
        .par_iter()
        .zip(&entries)
        .try_for_each(|(it, e)| {
            write_clip(
                &dir.join(&e.path),
                &it.instance.clip,
                Some(&it.instance.frame_labels),
                storage,
            )
        })?;
    let manifest = Manifest::new(entries)?;
    let path = dir.join(MANIFEST_NAME);
    write_manifest(&manifest, &path)?;
    Ok(path)
}

/// A manifest with its clips resolved and loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub root: PathBuf,
    /// One per manifest entry; `None` for entries outside the loaded split.
    pub clips: Vec<Option<FeatureClip>>,
}

impl Dataset {
    pub fn clip_path(&self, index: usize) -> PathBuf {
        self.root.join(&self.manifest.entries()[index].path)
    }

    /// Indices of the loaded clips.
    pub fn loaded(&self) -> impl Iterator<Item = (usize, &FeatureClip)> {
        self.clips
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|c| (i, c)))
    }
}

/// Loads every clip of `split`, checking that each one has `frames` x
/// `channels` x `height` x `width` dims.
pub fn load_dataset(manifest_path: &Path, split: Split, dims: [usize; 4]) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let clips = manifest
        .entries()
        .par_iter()
        .map(|e| {
            if e.split != split {
                return Ok(None);
            }
            let path = root.join(&e.path);
            let clip = read_clip(&path)?;
            ensure!(
                clip.dims() == dims,
                "{}: clip dims {:?} do not match the configured [T, C, H, W] = {:?}",
                path.display(),
                clip.dims(),
                dims
            );
            Ok(Some(clip))
        })
        .collect::<Result<Vec<_>>>()?;
    ensure!(
        clips.iter().any(Option::is_some),
        "{}: no clips in split {split}",
        manifest_path.display()
    );
    Ok(Dataset {
        manifest,
        root,
        clips,
    })
}
