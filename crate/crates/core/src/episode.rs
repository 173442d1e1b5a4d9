//! N-way K-shot episodes: sampling, prototypes, classification and
//! accuracy aggregation.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index;

use crate::alignment::Scoring;
use crate::descriptor::{DescriptorEntry, DescriptorSequence};
use crate::linalg::DescriptorVector;
use crate::{seed, Error, Result};

/// Normal quantile for a two-sided 95% interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub class: String,
    pub path: String,
    pub split: Split,
}

/// Index of stored clips. Ids are unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = BTreeMap::new();
        for e in &entries {
            if seen.insert(e.id.as_str(), ()).is_some() {
                return Err(Error::Manifest(format!("duplicate id {:?}", e.id)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Classes that occur in more than one split.
    pub fn leaked_classes(&self) -> Vec<String> {
        let mut splits: BTreeMap<&str, Vec<Split>> = BTreeMap::new();
        for e in &self.entries {
            let v = splits.entry(e.class.as_str()).or_default();
            if !v.contains(&e.split) {
                v.push(e.split);
            }
        }
        splits
            .into_iter()
            .filter(|(_, v)| v.len() > 1)
            .map(|(c, _)| String::from(c))
            .collect()
    }
}

/// Reference to a manifest entry with its class slot inside the episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeItem {
    /// Index into the manifest.
    pub clip: usize,
    /// Class slot `0..N`.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
    /// Class label of each slot.
    pub classes: Vec<String>,
    /// `ways * shots` items grouped by slot.
    pub support: Vec<EpisodeItem>,
    pub query: Vec<EpisodeItem>,
    pub seed: u64,
}

/// Samples episodes from one split of a manifest.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    /// Class label -> manifest indices, both in sorted order.
    classes: Vec<(String, Vec<usize>)>,
}

impl EpisodeSampler {
    /// Fails if any class label occurs in more than one split.
    pub fn new(manifest: &Manifest, split: Split) -> Result<Self> {
        let leaked = manifest.leaked_classes();
        if !leaked.is_empty() {
            return Err(Error::Manifest(format!(
                "classes {leaked:?} appear in several splits"
            )));
        }
        let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, e) in manifest.entries().iter().enumerate() {
            if e.split == split {
                by_class.entry(e.class.as_str()).or_default().push(i);
            }
        }
        let classes = by_class
            .into_iter()
            .map(|(c, v)| (String::from(c), v))
            .collect();
        Ok(Self { classes })
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    /// Queries per class slot: `z / n`, with the remainder going to the
    /// first slots.
    fn query_counts(n: usize, z: usize) -> Vec<usize> {
        (0..n).map(|i| z / n + usize::from(i < z % n)).collect()
    }

    pub fn sample(&self, n: usize, k: usize, z: usize, seed: u64) -> Result<Episode> {
        if n == 0 || k == 0 {
            return Err(Error::Config("ways and shots must be positive".into()));
        }
        let need = k + z.div_ceil(n);
        let eligible: Vec<usize> = (0..self.classes.len())
            .filter(|&c| self.classes[c].1.len() >= need)
            .collect();
        if eligible.len() < n {
            return Err(Error::Insufficient(format!(
                "{n}-way {k}-shot with {z} queries needs {n} classes with >= {need} clips; \
                 {} of {} classes qualify",
                eligible.len(),
                self.classes.len()
            )));
        }
        let mut rng = seed::rng(seed);
        let picked = index::sample(&mut rng, eligible.len(), n);
        let counts = Self::query_counts(n, z);
        let mut classes = Vec::with_capacity(n);
        let mut support = Vec::with_capacity(n * k);
        let mut query = Vec::with_capacity(z);
        for (slot, pick) in picked.iter().enumerate() {
            let (label, clips) = &self.classes[eligible[pick]];
            classes.push(label.clone());
            let chosen = index::sample(&mut rng, clips.len(), k + counts[slot]);
            for (r, c) in chosen.iter().enumerate() {
                let item = EpisodeItem {
                    clip: clips[c],
                    label: slot,
                };
                if r < k {
                    support.push(item);
                } else {
                    query.push(item);
                }
            }
        }
        Ok(Episode {
            ways: n,
            shots: k,
            queries: z,
            classes,
            support,
            query,
            seed,
        })
    }
}

/// One averaged descriptor sequence per class slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    pub prototypes: Vec<DescriptorSequence>,
}

/// Entrywise mean of the `k` support sequences of every class.
pub fn build_prototypes(groups: &[Vec<&DescriptorSequence>], k: usize) -> Result<PrototypeSet> {
    if groups.is_empty() {
        return Err(Error::Empty("prototype groups"));
    }
    let mut prototypes = Vec::with_capacity(groups.len());
    for (c, group) in groups.iter().enumerate() {
        if group.len() != k || k == 0 {
            return Err(Error::Shape(format!(
                "class {c} has {} support sequences, expected {k}",
                group.len()
            )));
        }
        let first = group[0];
        if group.iter().any(|g| !g.same_structure(first)) {
            return Err(Error::Shape(format!(
                "support sequences of class {c} differ in structure"
            )));
        }
        let inv = 1.0 / k as f64;
        let entries = first
            .entries()
            .iter()
            .enumerate()
            .map(|(l, e)| {
                let mut acc = vec![0.0; e.vector.len()];
                for g in group {
                    for (a, x) in acc.iter_mut().zip(g.vector(l)) {
                        *a += x;
                    }
                }
                acc.iter_mut().for_each(|a| *a *= inv);
                DescriptorEntry {
                    scale: e.scale,
                    time: e.time,
                    vector: DescriptorVector(acc),
                }
            })
            .collect();
        prototypes.push(DescriptorSequence::new(entries)?);
    }
    Ok(PrototypeSet { prototypes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub predicted: usize,
    pub logits: Vec<f64>,
}

/// Scores the query against every prototype; the highest score wins and
/// exact ties go to the lowest class index.
pub fn classify_query(
    query: &DescriptorSequence,
    prototypes: &PrototypeSet,
    scoring: Scoring,
) -> Result<Classification> {
    if prototypes.prototypes.is_empty() {
        return Err(Error::Empty("prototype set"));
    }
    let logits = prototypes
        .prototypes
        .iter()
        .map(|p| scoring.score(query, p))
        .collect::<Result<Vec<_>>>()?;
    let mut predicted = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[predicted] {
            predicted = i;
        }
    }
    Ok(Classification { predicted, logits })
}

/// Looks up precomputed descriptors by manifest index.
pub trait DescriptorSource {
    fn descriptors(&self, clip: usize) -> Result<&DescriptorSequence>;
}

impl DescriptorSource for [DescriptorSequence] {
    fn descriptors(&self, clip: usize) -> Result<&DescriptorSequence> {
        self.get(clip)
            .ok_or_else(|| Error::Insufficient(format!("no descriptors for clip {clip}")))
    }
}

impl DescriptorSource for Vec<DescriptorSequence> {
    fn descriptors(&self, clip: usize) -> Result<&DescriptorSequence> {
        self.as_slice().descriptors(clip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeParams {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
}

/// Seed of episode `index` under base seed `seed`.
pub fn episode_seed(seed: u64, index: u64) -> u64 {
    seed::derive(seed, index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeOutcome {
    pub index: u64,
    pub correct: u32,
    pub total: u32,
}

pub fn classify_episode(
    episode: &Episode,
    source: &(impl DescriptorSource + ?Sized),
    scoring: Scoring,
) -> Result<u32> {
    let mut groups: Vec<Vec<&DescriptorSequence>> = vec![Vec::new(); episode.ways];
    for item in &episode.support {
        groups[item.label].push(source.descriptors(item.clip)?);
    }
    let protos = build_prototypes(&groups, episode.shots)?;
    let mut correct = 0;
    for item in &episode.query {
        let c = classify_query(source.descriptors(item.clip)?, &protos, scoring)?;
        if c.predicted == item.label {
            correct += 1;
        }
    }
    Ok(correct)
}

/// Samples and classifies episode `index`.
pub fn run_episode(
    sampler: &EpisodeSampler,
    source: &(impl DescriptorSource + ?Sized),
    params: EpisodeParams,
    scoring: Scoring,
    seed: u64,
    index: u64,
) -> Result<EpisodeOutcome> {
    let ep = sampler.sample(
        params.ways,
        params.shots,
        params.queries,
        episode_seed(seed, index),
    )?;
    let correct = classify_episode(&ep, source, scoring)?;
    Ok(EpisodeOutcome {
        index,
        correct,
        total: ep.query.len() as u32,
    })
}

/// Mean per-episode accuracy and its 95% normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracySummary {
    pub episodes: u64,
    pub correct: u64,
    pub queries: u64,
    pub mean: f64,
    /// Sample standard deviation of per-episode accuracy.
    pub std_dev: f64,
    /// `Z_95 * std_dev / sqrt(episodes)`.
    pub half_width: f64,
}

impl AccuracySummary {
    /// Order-independent: only integer counts are accumulated. Every
    /// episode must have the same query count.
    pub fn from_outcomes(outcomes: &[EpisodeOutcome]) -> Result<Self> {
        let first = outcomes.first().ok_or(Error::Empty("episode outcomes"))?;
        let z = first.total;
        if z == 0 || outcomes.iter().any(|o| o.total != z) {
            return Err(Error::Config(
                "episodes must share a positive query count".into(),
            ));
        }
        let e = outcomes.len() as u128;
        let sum: u128 = outcomes.iter().map(|o| o.correct as u128).sum();
        let sum_sq: u128 = outcomes.iter().map(|o| (o.correct as u128).pow(2)).sum();
        let z = z as f64;
        let mean = sum as f64 / (e as f64 * z);
        // (E * sum_sq - sum^2) is exact in integers.
        let std_dev = if e > 1 {
            let num = (e * sum_sq - sum * sum) as f64;
            libm::sqrt(num / (e as f64 * (e as f64 - 1.0))) / z
        } else {
            0.0
        };
        Ok(Self {
            episodes: e as u64,
            correct: sum as u64,
            queries: (e as u64) * first.total as u64,
            mean,
            std_dev,
            half_width: Z_95 * std_dev / libm::sqrt(e as f64),
        })
    }
}

/// Sequential evaluation over `episodes` episodes.
pub fn evaluate(
    sampler: &EpisodeSampler,
    source: &(impl DescriptorSource + ?Sized),
    params: EpisodeParams,
    scoring: Scoring,
    episodes: u64,
    seed: u64,
) -> Result<AccuracySummary> {
    let outcomes = (0..episodes)
        .map(|i| run_episode(sampler, source, params, scoring, seed, i))
        .collect::<Result<Vec<_>>>()?;
    AccuracySummary::from_outcomes(&outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    pub(crate) fn manifest(classes: usize, per_class: usize) -> Manifest {
        let mut entries = Vec::new();
        for c in 0..classes {
            for i in 0..per_class {
                entries.push(ManifestEntry {
                    id: format!("c{c}_{i}"),
                    class: format!("class{c:02}"),
                    path: format!("clips/c{c}_{i}.fsq"),
                    split: Split::Test,
                });
            }
        }
        Manifest::new(entries).unwrap()
    }

    fn seq(v: Vec<Vec<f64>>) -> DescriptorSequence {
        DescriptorSequence::from_vectors(v).unwrap()
    }

    #[test]
    fn sample_contract() {
        let m = manifest(10, 4);
        let s = EpisodeSampler::new(&m, Split::Test).unwrap();
        let ep = s.sample(5, 1, 5, 42).unwrap();
        assert_eq!(ep.support.len(), 5);
        assert_eq!(ep.query.len(), 5);
        let mut distinct = ep.classes.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 5);
        for q in &ep.query {
            assert!(ep.support.iter().all(|s| s.clip != q.clip));
            assert_eq!(m.entries()[q.clip].class, ep.classes[q.label]);
        }
        assert_eq!(ep, s.sample(5, 1, 5, 42).unwrap());
        assert_ne!(ep, s.sample(5, 1, 5, 43).unwrap());
    }

    #[test]
    fn sample_shortfall_is_reported() {
        let m = manifest(3, 4);
        let s = EpisodeSampler::new(&m, Split::Test).unwrap();
        let err = s.sample(5, 1, 5, 0).unwrap_err().to_string();
        assert!(err.contains("5 classes"), "{err}");
        assert!(err.contains("3 of 3"), "{err}");
        assert!(s.sample(3, 4, 3, 0).is_err());
    }

    #[test]
    fn uneven_queries_are_spread() {
        assert_eq!(EpisodeSampler::query_counts(3, 7), vec![3, 2, 2]);
        let m = manifest(5, 6);
        let ep = EpisodeSampler::new(&m, Split::Test)
            .unwrap()
            .sample(3, 2, 7, 1)
            .unwrap();
        assert_eq!(ep.query.len(), 7);
    }

    #[test]
    fn split_hygiene() {
        let mut entries = manifest(2, 2).entries().to_vec();
        entries[0].split = Split::Train;
        let m = Manifest::new(entries).unwrap();
        assert_eq!(m.leaked_classes(), vec!["class00".to_string()]);
        assert!(EpisodeSampler::new(&m, Split::Test).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut entries = manifest(1, 2).entries().to_vec();
        entries[1].id = entries[0].id.clone();
        let err = Manifest::new(entries).unwrap_err().to_string();
        assert!(err.contains("c0_0"));
    }

    #[test]
    fn prototypes() {
        let u = seq(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let v = seq(vec![vec![3.0, 0.0], vec![1.0, 0.0]]);
        let p = build_prototypes(&[vec![&u]], 1).unwrap();
        assert_eq!(p.prototypes[0], u);
        let p = build_prototypes(&[vec![&u, &u]], 2).unwrap();
        assert_eq!(p.prototypes[0], u);
        let p = build_prototypes(&[vec![&u, &v]], 2).unwrap();
        assert_eq!(p.prototypes[0].vector(0), &[2.0, 1.0]);
        assert_eq!(p.prototypes[0].vector(1), &[2.0, 2.0]);
        let short = seq(vec![vec![1.0, 2.0]]);
        assert!(build_prototypes(&[vec![&u, &short]], 2).is_err());
        assert!(build_prototypes(&[vec![&u]], 2).is_err());
    }

    #[test]
    fn classify_examples() {
        let q = seq(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let other = seq(vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 2.0]]);
        let protos = PrototypeSet {
            prototypes: vec![other.clone(), q.clone(), other.clone()],
        };
        let c = classify_query(&q, &protos, Scoring::Adaptive).unwrap();
        assert_eq!(c.predicted, 1);
        assert!((c.logits[1] - 1.0).abs() < 1e-12);
        assert_eq!(c.logits[0], 0.0);

        let same = PrototypeSet {
            prototypes: vec![other.clone(); 4],
        };
        assert_eq!(
            classify_query(&q, &same, Scoring::Adaptive)
                .unwrap()
                .predicted,
            0
        );
        let empty = PrototypeSet { prototypes: vec![] };
        assert!(classify_query(&q, &empty, Scoring::Cross).is_err());
    }

    #[test]
    fn summary_statistics() {
        let outcomes: Vec<EpisodeOutcome> = [5u32, 3, 4, 5]
            .iter()
            .enumerate()
            .map(|(i, &c)| EpisodeOutcome {
                index: i as u64,
                correct: c,
                total: 5,
            })
            .collect();
        let s = AccuracySummary::from_outcomes(&outcomes).unwrap();
        let accs = [1.0, 0.6, 0.8, 1.0];
        let mean = accs.iter().sum::<f64>() / 4.0;
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / 3.0;
        assert!((s.mean - mean).abs() < 1e-15);
        assert!((s.half_width - 1.96 * libm::sqrt(var) / 2.0).abs() < 1e-12);

        let mut rev = outcomes.clone();
        rev.reverse();
        assert_eq!(AccuracySummary::from_outcomes(&rev).unwrap(), s);

        let perfect = vec![
            EpisodeOutcome {
                index: 0,
                correct: 5,
                total: 5
            };
            3
        ];
        let p = AccuracySummary::from_outcomes(&perfect).unwrap();
        assert_eq!((p.mean, p.half_width), (1.0, 0.0));
    }
}
