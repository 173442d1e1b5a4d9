//! Command implementations. Each returns its report instead of printing it.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{ensure, Context, Result};
use m2align_core::descriptor::FeatureClip;

use crate::config::RunConfig;
use crate::dataset::{load_dataset, write_synth_dataset, Dataset};
use crate::eval::{evaluate_ablation, evaluate_metrics, with_pool, EvalResult};
use crate::report;
use crate::store::{read_clip, write_weights};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    /// Human-readable report.
    pub text: String,
    /// Line-delimited JSON records.
    pub records: String,
    /// Wall-clock timings, reported outside the deterministic output.
    pub timings: Vec<(String, Duration)>,
}

pub fn synth(cfg: &RunConfig) -> Result<Output> {
    cfg.validate_synth()?;
    let dir = &cfg.out;
    let manifest = with_pool(cfg.threads, || {
        write_synth_dataset(&cfg.synth_config(), dir, cfg.storage)
    })
    .with_context(|| format!("writing dataset to {}", dir.display()))?;
    let n = cfg.classes * cfg.instances;
    let text = format!(
        "synth: {n} clips ({} classes x {}) of [T, C, H, W] = [{}, {}, {}, {}] in {}\nmanifest {}\n",
        cfg.classes,
        cfg.instances,
        cfg.frames,
        cfg.c_in,
        cfg.height,
        cfg.width,
        dir.display(),
        manifest.display()
    );
    let records = serde_json::json!({
        "record": "synth",
        "clips": n,
        "classes": cfg.classes,
        "manifest": manifest.display().to_string(),
        "data_seed": cfg.data_seed(),
    })
    .to_string()
        + "\n";
    Ok(Output {
        text,
        records,
        timings: Vec::new(),
    })
}

fn clip_dims(cfg: &RunConfig) -> [usize; 4] {
    [cfg.frames, cfg.c_in, cfg.height, cfg.width]
}

fn load_checked(path: &Path, cfg: &RunConfig) -> Result<FeatureClip> {
    let clip = read_clip(path)?;
    ensure!(
        clip.channels() == cfg.c_in,
        "{}: clip has {} channels, config expects C_in = {}",
        path.display(),
        clip.channels(),
        cfg.c_in
    );
    Ok(clip)
}

pub fn align(cfg: &RunConfig, a: &Path, b: &Path) -> Result<Output> {
    cfg.validate()?;
    let (ca, cb) = (load_checked(a, cfg)?, load_checked(b, cfg)?);
    let metric = cfg.metrics[0];
    let scales = cfg.scales()?;
    let pipeline = cfg.pipeline(metric.pipeline, &scales);
    let (qa, qb) = with_pool(cfg.threads, || {
        let (qa, qb) = rayon::join(|| pipeline.extract(&ca), || pipeline.extract(&cb));
        Ok((
            qa.with_context(|| format!("{}", a.display()))?,
            qb.with_context(|| format!("{}", b.display()))?,
        ))
    })?;
    ensure!(
        qa.dim() == qb.dim(),
        "{} and {} give descriptors of different lengths",
        a.display(),
        b.display()
    );
    let r = report::align(
        &a.display().to_string(),
        &b.display().to_string(),
        metric,
        &qa,
        &qb,
        cfg.top_k,
    )?;
    Ok(Output {
        text: report::align_text(&r),
        records: report::align_records(&r),
        timings: Vec::new(),
    })
}

fn manifest_path(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.manifest
        .clone()
        .context("no manifest: set `manifest` in the config or pass --manifest")
}

fn load(cfg: &RunConfig) -> Result<(PathBuf, Dataset)> {
    let path = manifest_path(cfg)?;
    let ds = load_dataset(&path, cfg.split, clip_dims(cfg))?;
    Ok((path, ds))
}

pub fn eval_result(cfg: &RunConfig) -> Result<(PathBuf, EvalResult)> {
    cfg.validate()?;
    with_pool(cfg.threads, || {
        let (path, ds) = load(cfg)?;
        Ok((path, evaluate_metrics(cfg, &ds, &cfg.metrics)?))
    })
}

pub fn eval(cfg: &RunConfig) -> Result<Output> {
    let (path, r) = eval_result(cfg)?;
    Ok(Output {
        text: report::eval_text(&path.display().to_string(), &r),
        records: report::eval_records(&r),
        timings: r.timings,
    })
}

pub fn ablate_result(cfg: &RunConfig) -> Result<(PathBuf, EvalResult)> {
    cfg.validate()?;
    with_pool(cfg.threads, || {
        let (path, ds) = load(cfg)?;
        Ok((path, evaluate_ablation(cfg, &ds)?))
    })
}

pub fn ablate(cfg: &RunConfig) -> Result<Output> {
    let (path, r) = ablate_result(cfg)?;
    Ok(Output {
        text: report::ablation_text(&path.display().to_string(), &r),
        records: report::ablation_records(&r),
        timings: r.timings,
    })
}

/// Writes the seeded scale weights of `cfg` to `path`.
pub fn weights(cfg: &RunConfig, path: &Path) -> Result<Output> {
    cfg.validate()?;
    let scales = cfg.scales()?;
    write_weights(path, &scales)?;
    Ok(Output {
        text: format!(
            "weights: {} scales written to {}\n",
            scales.len(),
            path.display()
        ),
        records: String::new(),
        timings: Vec::new(),
    })
}

/// Writes `text` to `path`, naming the path on failure.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
