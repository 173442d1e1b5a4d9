//! Text reports and line-delimited JSON records. Both are pure functions of
//! their inputs; wall-clock timings are kept out of them.

use std::fmt::Write as _;

use anyhow::Result;
use m2align_core::alignment::{adaptive_alignment, Alignment, Scoring};
use m2align_core::descriptor::DescriptorSequence;
use m2align_core::episode::AccuracySummary;
use serde::Serialize;

use crate::config::Metric;
use crate::eval::{AblationRow, EvalResult, ALIGNMENT_ROWS, COMPONENT_ROWS};

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

#[derive(Serialize)]
struct AccuracyRecord<'a> {
    record: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    table: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    row: Option<&'a str>,
    metric: String,
    ways: usize,
    shots: usize,
    queries: usize,
    episodes: u64,
    episode_seed: u64,
    correct: u64,
    total: u64,
    accuracy: f64,
    std_dev: f64,
    ci95: f64,
}

fn accuracy_record<'a>(
    record: &'a str,
    table: Option<&'a str>,
    row: Option<&'a str>,
    metric: Metric,
    s: &AccuracySummary,
    r: &EvalResult,
) -> String {
    serde_json::to_string(&AccuracyRecord {
        record,
        table,
        row,
        metric: metric.to_string(),
        ways: r.params.ways,
        shots: r.params.shots,
        queries: r.params.queries,
        episodes: s.episodes,
        episode_seed: r.episode_seed,
        correct: s.correct,
        total: s.queries,
        accuracy: s.mean,
        std_dev: s.std_dev,
        ci95: s.half_width,
    })
    .expect("records serialize")
}

fn header(out: &mut String, command: &str, source: &str, r: &EvalResult) {
    let _ = writeln!(
        out,
        "{command} {source}: {}-way {}-shot, {} queries, {} episodes, episode seed {}",
        r.params.ways, r.params.shots, r.params.queries, r.episodes, r.episode_seed
    );
}

/// One row per metric: accuracy and 95% interval in percent.
pub fn eval_text(source: &str, r: &EvalResult) -> String {
    let mut out = String::new();
    header(&mut out, "eval", source, r);
    let _ = writeln!(
        out,
        "{:<12} {:>9} {:>8} {:>11}",
        "metric", "acc(%)", "ci95", "correct"
    );
    for m in &r.results {
        let s = &m.summary;
        let _ = writeln!(
            out,
            "{:<12} {:>9} {:>8} {:>11}",
            m.metric.to_string(),
            pct(s.mean),
            format!("±{}", pct(s.half_width)),
            format!("{}/{}", s.correct, s.queries)
        );
    }
    out
}

pub fn eval_records(r: &EvalResult) -> String {
    r.results
        .iter()
        .map(|m| accuracy_record("eval", None, None, m.metric, &m.summary, r) + "\n")
        .collect()
}

fn tick(b: bool) -> &'static str {
    if b {
        "x"
    } else {
        "-"
    }
}

fn table(out: &mut String, title: &str, rows: &[AblationRow], r: &EvalResult) {
    let _ = writeln!(out, "\n{title}");
    let _ = writeln!(
        out,
        "{:<18} {:>3} {:>3} {:<10} {:>9} {:>8}",
        "row", "M-S", "SM", "metric", "acc(%)", "ci95"
    );
    for row in rows {
        let s = r.get(row.metric).expect("ablation metric evaluated");
        let _ = writeln!(
            out,
            "{:<18} {:>3} {:>3} {:<10} {:>9} {:>8}",
            row.name,
            tick(row.multi_scale),
            tick(row.second_order),
            row.metric.to_string(),
            pct(s.mean),
            format!("±{}", pct(s.half_width))
        );
    }
}

pub const COMPONENT_TABLE: &str = "components";
pub const ALIGNMENT_TABLE: &str = "alignment";

/// Component grid and alignment comparison on shared episodes.
pub fn ablation_text(source: &str, r: &EvalResult) -> String {
    let mut out = String::new();
    header(&mut out, "ablate", source, r);
    table(
        &mut out,
        "components (all rows use A2 alignment)",
        &COMPONENT_ROWS,
        r,
    );
    table(&mut out, "alignment", &ALIGNMENT_ROWS, r);
    out
}

pub fn ablation_records(r: &EvalResult) -> String {
    let mut out = String::new();
    for (t, rows) in [
        (COMPONENT_TABLE, &COMPONENT_ROWS[..]),
        (ALIGNMENT_TABLE, &ALIGNMENT_ROWS[..]),
    ] {
        for row in rows {
            let s = r.get(row.metric).expect("ablation metric evaluated");
            out += &accuracy_record("ablate", Some(t), Some(row.name), row.metric, s, r);
            out.push('\n');
        }
    }
    out
}

/// A (query, support) descriptor pair with its transport weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pair {
    pub l: usize,
    pub l_scale: usize,
    pub l_time: usize,
    pub lp: usize,
    pub lp_scale: usize,
    pub lp_time: usize,
    pub weight: f64,
    pub sim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignReport {
    pub a: String,
    pub b: String,
    pub metric: Metric,
    pub alignment: Alignment,
    pub pp: f64,
    pub cr: f64,
    pub len_a: usize,
    pub len_b: usize,
    pub dim: usize,
    pub top: Vec<Pair>,
    /// Scale index of the first clip and its top pairs.
    pub per_scale: Vec<(usize, Vec<Pair>)>,
}

fn top_pairs(
    qa: &DescriptorSequence,
    qb: &DescriptorSequence,
    al: &Alignment,
    k: usize,
    keep: impl Fn(usize) -> bool,
) -> Vec<Pair> {
    let (ea, eb) = (qa.entries(), qb.entries());
    let mut pairs: Vec<Pair> = (0..ea.len())
        .filter(|&l| keep(l))
        .flat_map(|l| (0..eb.len()).map(move |lp| (l, lp)))
        .map(|(l, lp)| Pair {
            l,
            l_scale: ea[l].scale,
            l_time: ea[l].time,
            lp,
            lp_scale: eb[lp].scale,
            lp_time: eb[lp].time,
            weight: al.plan.get(l, lp),
            sim: al.sim.get(l, lp),
        })
        .filter(|p| p.weight > 0.0)
        .collect();
    pairs.sort_by(|x, y| {
        y.weight
            .total_cmp(&x.weight)
            .then((x.l, x.lp).cmp(&(y.l, y.lp)))
    });
    pairs.truncate(k);
    pairs
}

pub fn align(
    a: &str,
    b: &str,
    metric: Metric,
    qa: &DescriptorSequence,
    qb: &DescriptorSequence,
    top_k: usize,
) -> Result<AlignReport> {
    let alignment = adaptive_alignment(qa, qb)?;
    let pp = Scoring::PointToPoint.score(qa, qb)?;
    let cr = Scoring::Cross.score(qa, qb)?;
    let top = top_pairs(qa, qb, &alignment, top_k, |_| true);
    let mut scales: Vec<usize> = qa.entries().iter().map(|e| e.scale).collect();
    scales.dedup();
    let per_scale = scales
        .iter()
        .map(|&s| {
            let p = top_pairs(qa, qb, &alignment, top_k, |l| qa.entries()[l].scale == s);
            (s, p)
        })
        .collect();
    Ok(AlignReport {
        a: a.to_string(),
        b: b.to_string(),
        metric,
        pp,
        cr,
        len_a: qa.len(),
        len_b: qb.len(),
        dim: qa.dim(),
        alignment,
        top,
        per_scale,
    })
}

fn list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn pair_line(out: &mut String, rank: usize, p: &Pair) {
    let _ = writeln!(
        out,
        "  {rank:>2}  l={:<3} (scale {}, t {})  l'={:<3} (scale {}, t {})  weight {:.6}  sim {:.6}",
        p.l, p.l_scale, p.l_time, p.lp, p.lp_scale, p.lp_time, p.weight, p.sim
    );
}

pub fn align_text(r: &AlignReport) -> String {
    let al = &r.alignment;
    let mut out = String::new();
    let _ = writeln!(out, "align {} vs {} (pipeline {})", r.a, r.b, r.metric);
    let _ = writeln!(
        out,
        "descriptors: L = {} vs {}, length {}",
        r.len_a, r.len_b, r.dim
    );
    let _ = writeln!(out, "score a2 {:.9}", al.score);
    let _ = writeln!(out, "score pp {:.9}", r.pp);
    let _ = writeln!(out, "score cr {:.9}", r.cr);
    let _ = writeln!(out, "mu    {}", list(&al.masses.mu));
    let _ = writeln!(out, "gamma {}", list(&al.masses.gamma));
    let _ = writeln!(out, "plan ({} x {})", al.plan.rows(), al.plan.cols());
    for l in 0..al.plan.rows() {
        let row: Vec<f64> = (0..al.plan.cols()).map(|lp| al.plan.get(l, lp)).collect();
        let _ = writeln!(out, "  {}", list(&row));
    }
    let _ = writeln!(out, "top {} pairs", r.top.len());
    for (i, p) in r.top.iter().enumerate() {
        pair_line(&mut out, i + 1, p);
    }
    for (s, pairs) in &r.per_scale {
        let _ = writeln!(out, "scale {s}: top {} pairs", pairs.len());
        for (i, p) in pairs.iter().enumerate() {
            pair_line(&mut out, i + 1, p);
        }
    }
    out
}

#[derive(Serialize)]
struct AlignRecord<'a> {
    record: &'a str,
    a: &'a str,
    b: &'a str,
    pipeline: String,
    len_a: usize,
    len_b: usize,
    descriptor_length: usize,
    score: f64,
    score_pp: f64,
    score_cr: f64,
    mu: &'a [f64],
    gamma: &'a [f64],
    plan: &'a [f64],
    top: &'a [Pair],
}

pub fn align_records(r: &AlignReport) -> String {
    let al = &r.alignment;
    let mut out = serde_json::to_string(&AlignRecord {
        record: "align",
        a: &r.a,
        b: &r.b,
        pipeline: r.metric.to_string(),
        len_a: r.len_a,
        len_b: r.len_b,
        descriptor_length: r.dim,
        score: al.score,
        score_pp: r.pp,
        score_cr: r.cr,
        mu: &al.masses.mu,
        gamma: &al.masses.gamma,
        plan: al.plan.values(),
        top: &r.top,
    })
    .expect("records serialize");
    out.push('\n');
    out
}
