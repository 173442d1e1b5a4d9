//! Run configuration: a flat `key = value` text file, one key per line,
//! `#` starts a comment. Unknown keys are errors. Command-line flags are
//! applied on top of the file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use m2align_core::alignment::Scoring;
use m2align_core::descriptor::{
    seeded_scales, MomentOrder, Pipeline, ScaleConfig, ScaleShape, SeedOptions, WeightInit,
};
use m2align_core::episode::{EpisodeParams, Split};
use m2align_core::seed;
use m2align_core::synth::SynthConfig;

use crate::store::{read_weights, Storage};

/// Descriptor extractor selected by a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PipelineKind {
    /// Per-frame spatial mean of the raw clip.
    Gap,
    /// Single scale, identity weights, second order.
    CovMn,
    /// All configured scales, first order.
    MultiScaleFirst,
    /// All configured scales, second order.
    MultiScale,
}

impl PipelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Gap => "gap",
            PipelineKind::CovMn => "cov-mn",
            PipelineKind::MultiScaleFirst => "ms-gap",
            PipelineKind::MultiScale => "ms",
        }
    }
}

/// A descriptor pipeline plus a sequence scoring rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Metric {
    pub pipeline: PipelineKind,
    pub scoring: Scoring,
}

fn scoring_name(s: Scoring) -> &'static str {
    match s {
        Scoring::Adaptive => "a2",
        Scoring::PointToPoint => "pp",
        Scoring::Cross => "cr",
    }
}

impl Metric {
    pub const A2: Metric = Metric::new(PipelineKind::MultiScale, Scoring::Adaptive);
    pub const PP: Metric = Metric::new(PipelineKind::MultiScale, Scoring::PointToPoint);
    pub const CR: Metric = Metric::new(PipelineKind::MultiScale, Scoring::Cross);
    pub const GAP_A2: Metric = Metric::new(PipelineKind::Gap, Scoring::Adaptive);
    pub const COV_MN_A2: Metric = Metric::new(PipelineKind::CovMn, Scoring::Adaptive);
    pub const COV_MN_PP: Metric = Metric::new(PipelineKind::CovMn, Scoring::PointToPoint);
    pub const MS_GAP_A2: Metric = Metric::new(PipelineKind::MultiScaleFirst, Scoring::Adaptive);

    pub const fn new(pipeline: PipelineKind, scoring: Scoring) -> Self {
        Self { pipeline, scoring }
    }

    /// `a2`, `pp`, `cr` (multi-scale second order) or
    /// `<gap|cov-mn|ms-gap|ms>-<a2|pp|cr>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let (pipe, score) = match s.rsplit_once('-') {
            Some((p, sc)) => (p, sc),
            None => ("ms", s),
        };
        let pipeline = match pipe {
            "gap" => PipelineKind::Gap,
            "cov-mn" => PipelineKind::CovMn,
            "ms-gap" => PipelineKind::MultiScaleFirst,
            "ms" => PipelineKind::MultiScale,
            _ => bail!("unknown metric {s:?}"),
        };
        let scoring = match score {
            "a2" => Scoring::Adaptive,
            "pp" => Scoring::PointToPoint,
            "cr" => Scoring::Cross,
            _ => bail!("unknown metric {s:?}"),
        };
        Ok(Self::new(pipeline, scoring))
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let list: Vec<Metric> = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Metric::parse)
            .collect::<Result<_>>()?;
        ensure!(!list.is_empty(), "metric list is empty");
        Ok(list)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pipeline {
            PipelineKind::MultiScale => f.write_str(scoring_name(self.scoring)),
            p => write!(f, "{}-{}", p.as_str(), scoring_name(self.scoring)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,

    pub taus: Vec<usize>,
    pub grids: Vec<usize>,
    pub c_in: usize,
    pub c_prime: usize,
    pub c_out: usize,
    pub ns_iterations: usize,
    pub weight_init: WeightInit,
    pub offset_scale: f64,
    /// Load scale weights from this FSQ1 file instead of seeding them.
    pub weights: Option<PathBuf>,

    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    pub episodes: u64,
    pub metrics: Vec<Metric>,
    pub split: Split,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    pub top_k: usize,

    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    pub storage: Storage,

    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
    pub subactions: usize,
    pub instances: usize,
    pub jitter: f64,
    pub reorder: f64,
    pub noise: f64,
    pub frame_noise: f64,
    pub blobs: usize,
    pub signed_patterns: bool,
    pub shuffle_labels: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            seed: 0,
            taus: vec![1, 3, 5],
            grids: vec![1, 3, 5],
            c_in: 64,
            c_prime: 32,
            c_out: 16,
            ns_iterations: 5,
            weight_init: WeightInit::Inflated,
            offset_scale: 0.0,
            weights: None,
            ways: 5,
            shots: 1,
            queries: 10,
            episodes: 200,
            metrics: vec![Metric::A2],
            split: Split::Test,
            threads: 0,
            top_k: 3,
            manifest: None,
            out: PathBuf::from("data"),
            storage: Storage::F32,
            frames: synth.frames,
            height: synth.height,
            width: synth.width,
            classes: synth.classes,
            subactions: synth.subactions,
            instances: synth.instances_per_class,
            jitter: synth.jitter,
            reorder: synth.reorder_prob,
            noise: synth.noise_sigma,
            frame_noise: synth.frame_noise_sigma,
            blobs: synth.blobs,
            signed_patterns: synth.signed_patterns,
            shuffle_labels: synth.shuffle_labels,
        }
    }
}

/// Sub-stream tags of the config seed.
const DATA_STREAM: u64 = 1;
const WEIGHT_STREAM: u64 = 2;
const EPISODE_STREAM: u64 = 3;

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    v.parse::<T>()
        .with_context(|| format!("{key}: cannot parse {v:?}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("{key}: expected true or false, got {v:?}"),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|p| parse_num(key, p.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "taus",
        "grids",
        "c_in",
        "c_prime",
        "c_out",
        "ns_iterations",
        "weight_init",
        "offset_scale",
        "weights",
        "ways",
        "shots",
        "queries",
        "episodes",
        "metric",
        "split",
        "threads",
        "top_k",
        "manifest",
        "out",
        "storage",
        "frames",
        "height",
        "width",
        "classes",
        "subactions",
        "instances",
        "jitter",
        "reorder",
        "noise",
        "frame_noise",
        "blobs",
        "signed_patterns",
        "shuffle_labels",
    ];

    /// Sets one key. Relative paths are taken as given.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "taus" => self.taus = parse_list(key, v)?,
            "grids" => self.grids = parse_list(key, v)?,
            "c_in" => self.c_in = parse_num(key, v)?,
            "c_prime" => self.c_prime = parse_num(key, v)?,
            "c_out" => self.c_out = parse_num(key, v)?,
            "ns_iterations" => self.ns_iterations = parse_num(key, v)?,
            "weight_init" => {
                self.weight_init = match v {
                    "inflated" => WeightInit::Inflated,
                    "independent" => WeightInit::Independent,
                    _ => bail!("weight_init: expected inflated or independent, got {v:?}"),
                }
            }
            "offset_scale" => self.offset_scale = parse_num(key, v)?,
            "weights" => self.weights = (!v.is_empty()).then(|| PathBuf::from(v)),
            "ways" => self.ways = parse_num(key, v)?,
            "shots" => self.shots = parse_num(key, v)?,
            "queries" => self.queries = parse_num(key, v)?,
            "episodes" => self.episodes = parse_num(key, v)?,
            "metric" => self.metrics = Metric::parse_list(v).context("metric")?,
            "split" => {
                self.split = Split::parse(v)
                    .with_context(|| format!("split: expected train, val or test, got {v:?}"))?
            }
            "threads" => self.threads = parse_num(key, v)?,
            "top_k" => self.top_k = parse_num(key, v)?,
            "manifest" => self.manifest = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "storage" => {
                self.storage = Storage::parse(v)
                    .with_context(|| format!("storage: expected f32 or f64, got {v:?}"))?
            }
            "frames" => self.frames = parse_num(key, v)?,
            "height" => self.height = parse_num(key, v)?,
            "width" => self.width = parse_num(key, v)?,
            "classes" => self.classes = parse_num(key, v)?,
            "subactions" => self.subactions = parse_num(key, v)?,
            "instances" => self.instances = parse_num(key, v)?,
            "jitter" => self.jitter = parse_num(key, v)?,
            "reorder" => self.reorder = parse_num(key, v)?,
            "noise" => self.noise = parse_num(key, v)?,
            "frame_noise" => self.frame_noise = parse_num(key, v)?,
            "blobs" => self.blobs = parse_num(key, v)?,
            "signed_patterns" => self.signed_patterns = parse_bool(key, v)?,
            "shuffle_labels" => self.shuffle_labels = parse_bool(key, v)?,
            _ => bail!("unknown key {key:?}"),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. Path values are resolved
    /// against `base` when relative.
    pub fn apply_text(&mut self, text: &str, origin: &Path, base: Option<&Path>) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ctx = || format!("{}:{}", origin.display(), i + 1);
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("{}: expected key = value", ctx()))?;
            let (k, v) = (k.trim(), v.trim());
            let v = match (k, base) {
                ("manifest" | "out" | "weights", Some(base))
                    if !v.is_empty() && Path::new(v).is_relative() =>
                {
                    base.join(v).to_string_lossy().into_owned()
                }
                _ => v.to_string(),
            };
            self.set(k, &v).with_context(ctx)?;
        }
        Ok(())
    }

    /// Defaults overlaid with the file at `path`; relative paths inside the
    /// file resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path, path.parent())?;
        Ok(cfg)
    }

    /// Channel constants and clip size of the paper: 2048/256/128, T = 8,
    /// a 7x7 grid.
    pub fn paper_dims(&mut self) {
        self.c_in = 2048;
        self.c_prime = 256;
        self.c_out = 128;
        self.frames = 8;
        self.height = 7;
        self.width = 7;
    }

    /// Every key with its current value, in [`Self::KEYS`] order.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let metrics = self
            .metrics
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let init = match self.weight_init {
            WeightInit::Inflated => "inflated",
            WeightInit::Independent => "independent",
        };
        let values: Vec<String> = vec![
            self.seed.to_string(),
            join(&self.taus),
            join(&self.grids),
            self.c_in.to_string(),
            self.c_prime.to_string(),
            self.c_out.to_string(),
            self.ns_iterations.to_string(),
            init.to_string(),
            self.offset_scale.to_string(),
            opt(&self.weights),
            self.ways.to_string(),
            self.shots.to_string(),
            self.queries.to_string(),
            self.episodes.to_string(),
            metrics,
            self.split.to_string(),
            self.threads.to_string(),
            self.top_k.to_string(),
            opt(&self.manifest),
            self.out.display().to_string(),
            self.storage.as_str().to_string(),
            self.frames.to_string(),
            self.height.to_string(),
            self.width.to_string(),
            self.classes.to_string(),
            self.subactions.to_string(),
            self.instances.to_string(),
            self.jitter.to_string(),
            self.reorder.to_string(),
            self.noise.to_string(),
            self.frame_noise.to_string(),
            self.blobs.to_string(),
            self.signed_patterns.to_string(),
            self.shuffle_labels.to_string(),
        ];
        Self::KEYS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn data_seed(&self) -> u64 {
        seed::derive(self.seed, DATA_STREAM)
    }

    pub fn weight_seed(&self) -> u64 {
        seed::derive(self.seed, WEIGHT_STREAM)
    }

    pub fn episode_seed(&self) -> u64 {
        seed::derive(self.seed, EPISODE_STREAM)
    }

    pub fn episode_params(&self) -> EpisodeParams {
        EpisodeParams {
            ways: self.ways,
            shots: self.shots,
            queries: self.queries,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            classes: self.classes,
            subactions: self.subactions,
            instances_per_class: self.instances,
            frames: self.frames,
            channels: self.c_in,
            height: self.height,
            width: self.width,
            jitter: self.jitter,
            reorder_prob: self.reorder,
            noise_sigma: self.noise,
            frame_noise_sigma: self.frame_noise,
            blobs: self.blobs,
            signed_patterns: self.signed_patterns,
            shuffle_labels: self.shuffle_labels,
            seed: self.data_seed(),
        }
    }

    /// Checks everything the model and episode stages require.
    pub fn validate(&self) -> Result<()> {
        ensure!(
            !self.taus.is_empty(),
            "taus: at least one scale is required"
        );
        ensure!(
            self.taus.len() == self.grids.len(),
            "taus has {} entries but grids has {}",
            self.taus.len(),
            self.grids.len()
        );
        for (&tau, &grid) in self.taus.iter().zip(&self.grids) {
            let shape = ScaleShape {
                tau,
                grid,
                c_in: self.c_in,
                c_prime: self.c_prime,
                c_out: self.c_out,
            };
            shape
                .validate()
                .with_context(|| format!("scale tau={tau} grid={grid}"))?;
            ensure!(
                tau <= self.frames,
                "tau {tau} exceeds the clip length of {} frames",
                self.frames
            );
        }
        ensure!(self.ns_iterations > 0, "ns_iterations must be positive");
        ensure!(
            self.offset_scale.is_finite() && self.offset_scale >= 0.0,
            "offset_scale must be finite and >= 0"
        );
        ensure!(
            self.ways > 0 && self.shots > 0,
            "ways and shots must be positive"
        );
        ensure!(self.queries > 0, "queries must be positive");
        ensure!(self.episodes > 0, "episodes must be positive");
        ensure!(u32::try_from(self.queries).is_ok(), "queries exceeds u32");
        Ok(())
    }

    pub fn validate_synth(&self) -> Result<()> {
        self.synth_config()
            .validate()
            .context("synthetic data config")?;
        Ok(())
    }

    pub fn seed_options(&self) -> SeedOptions {
        SeedOptions {
            init: self.weight_init,
            offset_scale: self.offset_scale,
        }
    }

    /// Scale weights from `weights` if set, otherwise seeded.
    pub fn scales(&self) -> Result<Vec<ScaleConfig>> {
        let scales = match &self.weights {
            Some(path) => read_weights(path)?,
            None => seeded_scales(
                &self.taus,
                &self.grids,
                (self.c_in, self.c_prime, self.c_out),
                self.weight_seed(),
                self.seed_options(),
            )?,
        };
        if let Some(path) = &self.weights {
            let s = scales[0].shape();
            ensure!(
                s.c_in == self.c_in,
                "{}: weights expect C_in = {}, config has {}",
                path.display(),
                s.c_in,
                self.c_in
            );
        }
        Ok(scales)
    }

    pub fn pipeline(&self, kind: PipelineKind, scales: &[ScaleConfig]) -> Pipeline {
        match kind {
            PipelineKind::Gap => Pipeline::Gap,
            PipelineKind::CovMn => Pipeline::CovMn {
                iterations: self.ns_iterations,
            },
            PipelineKind::MultiScaleFirst => Pipeline::MultiScale {
                scales: scales.to_vec(),
                order: MomentOrder::First,
                iterations: self.ns_iterations,
            },
            PipelineKind::MultiScale => Pipeline::MultiScale {
                scales: scales.to_vec(),
                order: MomentOrder::Second,
                iterations: self.ns_iterations,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names_round_trip() {
        for name in [
            "a2",
            "pp",
            "cr",
            "gap-a2",
            "cov-mn-a2",
            "cov-mn-pp",
            "ms-gap-a2",
            "gap-cr",
        ] {
            assert_eq!(Metric::parse(name).unwrap().to_string(), name);
        }
        assert_eq!(Metric::parse("ms-a2").unwrap(), Metric::A2);
        assert!(Metric::parse("emd").is_err());
        assert!(Metric::parse("foo-a2").is_err());
        assert_eq!(
            Metric::parse_list("a2, pp").unwrap(),
            vec![Metric::A2, Metric::PP]
        );
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# comment\nseed = 42  # trailing\nmetric = a2,gap-a2\ntaus = 1,3\ngrids=1,3\nsigned_patterns = true\n",
            Path::new("x.cfg"),
            None,
        )
        .unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.metrics, vec![Metric::A2, Metric::GAP_A2]);
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), Path::new("y.cfg"), None)
            .unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_and_bad_values_report_line() {
        let mut cfg = RunConfig::default();
        let e = cfg
            .apply_text("\nbogus = 1\n", Path::new("r.cfg"), None)
            .unwrap_err();
        assert!(format!("{e:#}").contains("r.cfg:2"), "{e:#}");
        let e = cfg
            .apply_text("ways = five\n", Path::new("r.cfg"), None)
            .unwrap_err();
        assert!(format!("{e:#}").contains("ways"), "{e:#}");
        assert!(cfg.apply_text("ways\n", Path::new("r.cfg"), None).is_err());
    }

    #[test]
    fn relative_paths_resolve_against_base() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "manifest = d/m.tsv\nout = /abs\n",
            Path::new("c"),
            Some(Path::new("/cfg")),
        )
        .unwrap();
        assert_eq!(cfg.manifest.as_deref(), Some(Path::new("/cfg/d/m.tsv")));
        assert_eq!(cfg.out, PathBuf::from("/abs"));
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        cfg.validate().unwrap();
        cfg.validate_synth().unwrap();
        cfg.grids = vec![1, 3];
        assert!(cfg.validate().is_err());
        cfg.grids = vec![1, 2, 5];
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            taus: vec![1, 9, 5],
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seeds_are_distinct_streams() {
        let cfg = RunConfig {
            seed: 5,
            ..RunConfig::default()
        };
        let s = [cfg.data_seed(), cfg.weight_seed(), cfg.episode_seed()];
        assert!(s[0] != s[1] && s[1] != s[2] && s[0] != s[2]);
    }

    #[test]
    fn paper_dims_shape() {
        let mut cfg = RunConfig::default();
        cfg.paper_dims();
        let scales = cfg.scales().unwrap();
        let p = cfg.pipeline(PipelineKind::MultiScale, &scales);
        assert_eq!(p.output_shape(cfg.frames, cfg.c_in).unwrap(), (18, 8256));
    }
}
