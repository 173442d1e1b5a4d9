//! Parallel descriptor extraction and episode evaluation.
//!
//! Episodes are independent work units keyed by `(seed, index)`, and the
//! summary accumulates integer counts, so results do not depend on the
//! number of worker threads.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use m2align_core::descriptor::{DescriptorSequence, Pipeline};
use m2align_core::episode::{
    run_episode, AccuracySummary, DescriptorSource, EpisodeOutcome, EpisodeParams, EpisodeSampler,
};
use rayon::prelude::*;

use crate::config::{Metric, PipelineKind, RunConfig};
use crate::dataset::Dataset;

/// Descriptors of the loaded clips, indexed like the manifest.
#[derive(Debug, Clone)]
pub struct Descriptors(pub Vec<Option<DescriptorSequence>>);

impl DescriptorSource for Descriptors {
    fn descriptors(&self, clip: usize) -> m2align_core::Result<&DescriptorSequence> {
        self.0.get(clip).and_then(Option::as_ref).ok_or_else(|| {
            m2align_core::Error::Insufficient(format!("clip {clip} has no descriptors"))
        })
    }
}

pub fn compute_descriptors(ds: &Dataset, pipeline: &Pipeline) -> Result<Descriptors> {
    let seqs = ds
        .clips
        .par_iter()
        .enumerate()
        .map(|(i, clip)| match clip {
            None => Ok(None),
            Some(c) => pipeline
                .extract(c)
                .map(Some)
                .with_context(|| format!("{}", ds.clip_path(i).display())),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Descriptors(seqs))
}

/// Runs episodes `0..episodes` and collects outcomes in index order.
pub fn run_episodes(
    sampler: &EpisodeSampler,
    source: &Descriptors,
    params: EpisodeParams,
    metric: Metric,
    seed: u64,
    episodes: u64,
) -> Result<Vec<EpisodeOutcome>> {
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            run_episode(sampler, source, params, metric.scoring, seed, i)
                .with_context(|| format!("metric {metric}, episode {i}"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub metric: Metric,
    pub summary: AccuracySummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub params: EpisodeParams,
    pub episodes: u64,
    pub episode_seed: u64,
    pub results: Vec<MetricResult>,
    /// Wall-clock time per pipeline and per metric. Not part of reports.
    pub timings: Vec<(String, Duration)>,
}

impl EvalResult {
    pub fn get(&self, metric: Metric) -> Option<&AccuracySummary> {
        self.results
            .iter()
            .find(|r| r.metric == metric)
            .map(|r| &r.summary)
    }
}

/// Evaluates each metric once over the same episodes. Descriptors are
/// extracted once per pipeline.
pub fn evaluate_metrics(cfg: &RunConfig, ds: &Dataset, metrics: &[Metric]) -> Result<EvalResult> {
    let sampler = EpisodeSampler::new(&ds.manifest, cfg.split)?;
    let params = cfg.episode_params();
    // Fail on an impossible episode shape before any extraction.
    sampler.sample(params.ways, params.shots, params.queries, 0)?;
    let scales = cfg.scales()?;
    let mut timings = Vec::new();
    let mut cache: BTreeMap<PipelineKind, Descriptors> = BTreeMap::new();
    for m in metrics {
        if let Entry::Vacant(slot) = cache.entry(m.pipeline) {
            let start = Instant::now();
            let d = compute_descriptors(ds, &cfg.pipeline(m.pipeline, &scales))
                .with_context(|| format!("{} descriptors", m.pipeline.as_str()))?;
            timings.push((
                format!("descriptors {}", m.pipeline.as_str()),
                start.elapsed(),
            ));
            slot.insert(d);
        }
    }
    let seed = cfg.episode_seed();
    let mut results: Vec<MetricResult> = Vec::new();
    for &m in metrics {
        if results.iter().any(|r| r.metric == m) {
            continue;
        }
        let start = Instant::now();
        let outcomes = run_episodes(&sampler, &cache[&m.pipeline], params, m, seed, cfg.episodes)?;
        timings.push((format!("episodes {m}"), start.elapsed()));
        results.push(MetricResult {
            metric: m,
            summary: AccuracySummary::from_outcomes(&outcomes)?,
        });
    }
    Ok(EvalResult {
        params,
        episodes: cfg.episodes,
        episode_seed: seed,
        results,
        timings,
    })
}

/// Runs `f` on a pool of `threads` workers (0 = one per core).
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("cannot start worker threads")?;
    pool.install(f)
}

/// One row of an ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationRow {
    pub name: &'static str,
    pub multi_scale: bool,
    pub second_order: bool,
    pub metric: Metric,
}

const fn row(
    name: &'static str,
    multi_scale: bool,
    second_order: bool,
    metric: Metric,
) -> AblationRow {
    AblationRow {
        name,
        multi_scale,
        second_order,
        metric,
    }
}

/// Component grid: multi-scale (M-S) and second-order (SM) toggles, all
/// with adaptive alignment.
pub const COMPONENT_ROWS: [AblationRow; 4] = [
    row("baseline", false, false, Metric::GAP_A2),
    row("Cov-MN", false, true, Metric::COV_MN_A2),
    row("Multi-scale", true, false, Metric::MS_GAP_A2),
    row("full", true, true, Metric::A2),
];

/// Fixed versus adaptive alignment, single and multi scale.
pub const ALIGNMENT_ROWS: [AblationRow; 5] = [
    row("single-scale p-p", false, true, Metric::COV_MN_PP),
    row("single-scale A2", false, true, Metric::COV_MN_A2),
    row("multi-scale p-p", true, true, Metric::PP),
    row("multi-scale cr", true, true, Metric::CR),
    row("multi-scale A2", true, true, Metric::A2),
];

/// Every metric used by either table, each evaluated once on shared
/// episodes.
pub fn ablation_metrics() -> Vec<Metric> {
    let mut out: Vec<Metric> = Vec::new();
    for r in COMPONENT_ROWS.iter().chain(&ALIGNMENT_ROWS) {
        if !out.contains(&r.metric) {
            out.push(r.metric);
        }
    }
    out
}

pub fn evaluate_ablation(cfg: &RunConfig, ds: &Dataset) -> Result<EvalResult> {
    evaluate_metrics(cfg, ds, &ablation_metrics())
}
