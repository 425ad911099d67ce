//! OLS-threshold-swept AP/AR scoring.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{ObjectAnnotation, Detection, SceneLabel};
use crate::error::{Error, Result};
use crate::geom::{ols, OlsParams, PolarGrid};

/// `t ∈ {0.50, 0.55, ..., 0.90}`.
pub fn ols_thresholds() -> Vec<f64> {
    (0..9).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrameMatch {
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    /// `(detection index, ground-truth index)` into the caller's slices.
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy class-strict matching on one frame.
pub fn match_frame(
    dets: &[Detection],
    gts: &[ObjectAnnotation],
    t: f64,
    grid: &PolarGrid,
    params: &OlsParams,
) -> FrameMatch {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[a].rank_cmp(&dets[b]));
    let mut gt_order: Vec<usize> = (0..gts.len()).collect();
    gt_order.sort_by_key(|&i| (gts[i].class_id, gts[i].range_idx, gts[i].azimuth_idx));
    let mut taken = vec![false; gts.len()];
    let mut m = FrameMatch::default();
    for di in order {
        let d = &dets[di];
        let mut best: Option<(f64, usize)> = None;
        for &gi in &gt_order {
            let g = &gts[gi];
            if taken[gi] || g.class_id != d.class_id {
                continue;
            }
            let s = ols(g, d, grid, params);
            if s >= t && best.is_none_or(|(bs, _)| s > bs) {
                best = Some((s, gi));
            }
        }
        match best {
            Some((_, gi)) => {
                taken[gi] = true;
                m.tp += 1;
                m.pairs.push((di, gi));
            }
            None => m.fp += 1,
        }
    }
    m.fn_count = gts.len() - m.tp;
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSequence {
    pub sequence_id: String,
    pub scene: SceneLabel,
    pub num_frames: usize,
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<ObjectAnnotation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_count: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub num_ground_truth: usize,
    pub num_detections: usize,
    pub ap: f64,
    pub ar: f64,
    pub per_threshold: Vec<ThresholdMetrics>,
}

/// Precision is 1 with neither detections nor ground truth and 0 with
/// ground truth but nothing detected. Recall is 1 without ground truth.
pub fn precision_recall(tp: usize, fp: usize, fn_count: usize) -> (f64, f64) {
    let p = if tp + fp == 0 {
        if fn_count == 0 { 1.0 } else { 0.0 }
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_count == 0 { 1.0 } else { tp as f64 / (tp + fn_count) as f64 };
    (p, r)
}

#[derive(Clone, Debug, Default)]
struct Counts {
    gt: usize,
    det: usize,
    per_t: Vec<[usize; 3]>,
}

impl Counts {
    fn new(n: usize) -> Self {
        Counts { gt: 0, det: 0, per_t: vec![[0; 3]; n] }
    }

    fn block(&self, thresholds: &[f64]) -> MetricBlock {
        let per_threshold: Vec<ThresholdMetrics> = thresholds
            .iter()
            .zip(&self.per_t)
            .map(|(&t, c)| {
                let (precision, recall) = precision_recall(c[0], c[1], c[2]);
                ThresholdMetrics { threshold: t, tp: c[0], fp: c[1], fn_count: c[2], precision, recall }
            })
            .collect();
        let n = per_threshold.len().max(1) as f64;
        MetricBlock {
            num_ground_truth: self.gt,
            num_detections: self.det,
            ap: per_threshold.iter().map(|m| m.precision).sum::<f64>() / n,
            ar: per_threshold.iter().map(|m| m.recall).sum::<f64>() / n,
            per_threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub overall: MetricBlock,
    pub per_scene: BTreeMap<String, MetricBlock>,
    pub per_class: BTreeMap<String, MetricBlock>,
}

fn class_name(names: &[String], c: usize) -> String {
    names.get(c).cloned().unwrap_or_else(|| format!("class{c}"))
}

pub fn evaluate(
    sequences: &[EvalSequence],
    thresholds: &[f64],
    class_names: &[String],
    grid: &PolarGrid,
    params: &OlsParams,
) -> Result<EvalReport> {
    if thresholds.is_empty() {
        return Err(Error::Config("at least one OLS threshold is required".into()));
    }
    let nt = thresholds.len();
    let mut overall = Counts::new(nt);
    let mut scenes: BTreeMap<String, Counts> = BTreeMap::new();
    let mut classes: BTreeMap<usize, Counts> = BTreeMap::new();
    for seq in sequences {
        let mut det_frames: Vec<Vec<Detection>> = vec![Vec::new(); seq.num_frames];
        let mut gt_frames: Vec<Vec<ObjectAnnotation>> = vec![Vec::new(); seq.num_frames];
        for d in &seq.detections {
            det_frames
                .get_mut(d.frame_index)
                .ok_or_else(|| Error::Data(format!(
                    "{}: detection at frame {} outside {} frames",
                    seq.sequence_id, d.frame_index, seq.num_frames
                )))?
                .push(*d);
        }
        for g in &seq.ground_truth {
            gt_frames
                .get_mut(g.frame_index)
                .ok_or_else(|| Error::Data(format!(
                    "{}: annotation at frame {} outside {} frames",
                    seq.sequence_id, g.frame_index, seq.num_frames
                )))?
                .push(*g);
        }
        let scene = scenes.entry(seq.scene.as_str().to_string()).or_insert_with(|| Counts::new(nt));
        for c in [&mut overall, scene] {
            c.gt += seq.ground_truth.len();
            c.det += seq.detections.len();
        }
        for d in &seq.detections {
            classes.entry(d.class_id).or_insert_with(|| Counts::new(nt)).det += 1;
        }
        for g in &seq.ground_truth {
            classes.entry(g.class_id).or_insert_with(|| Counts::new(nt)).gt += 1;
        }
        for (dets, gts) in det_frames.iter().zip(&gt_frames) {
            for (ti, &t) in thresholds.iter().enumerate() {
                let m = match_frame(dets, gts, t, grid, params);
                let mut det_hit = vec![false; dets.len()];
                let mut gt_hit = vec![false; gts.len()];
                for &(di, gi) in &m.pairs {
                    det_hit[di] = true;
                    gt_hit[gi] = true;
                }
                for (d, hit) in dets.iter().zip(&det_hit) {
                    classes.get_mut(&d.class_id).expect("counted above").per_t[ti][if *hit { 0 } else { 1 }] += 1;
                }
                for (g, hit) in gts.iter().zip(&gt_hit) {
                    if !hit {
                        classes.get_mut(&g.class_id).expect("counted above").per_t[ti][2] += 1;
                    }
                }
                let sc = scenes.get_mut(seq.scene.as_str()).expect("inserted above");
                for c in [&mut overall, sc] {
                    c.per_t[ti][0] += m.tp;
                    c.per_t[ti][1] += m.fp;
                    c.per_t[ti][2] += m.fn_count;
                }
            }
        }
    }
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        overall: overall.block(thresholds),
        per_scene: scenes.into_iter().map(|(k, v)| (k, v.block(thresholds))).collect(),
        per_class: classes
            .into_iter()
            .map(|(k, v)| (class_name(class_names, k), v.block(thresholds)))
            .collect(),
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("eval report: {e}")))
    }

    /// One row per (scope, threshold).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scope,threshold,tp,fp,fn,precision,recall\n");
        let mut emit = |scope: &str, b: &MetricBlock| {
            for m in &b.per_threshold {
                let _ = writeln!(
                    out,
                    "{scope},{:.2},{},{},{},{:.6},{:.6}",
                    m.threshold, m.tp, m.fp, m.fn_count, m.precision, m.recall
                );
            }
        };
        emit("overall", &self.overall);
        for (k, b) in &self.per_scene {
            emit(&format!("scene:{k}"), b);
        }
        for (k, b) in &self.per_class {
            emit(&format!("class:{k}"), b);
        }
        out
    }

    /// Headline numbers as `(name, value)`; AP and AR are in percent.
    pub fn summary(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("AP".to_string(), 100.0 * self.overall.ap),
            ("AR".to_string(), 100.0 * self.overall.ar),
        ];
        for m in &self.overall.per_threshold {
            rows.push((format!("AP@{:.2}", m.threshold), 100.0 * m.precision));
        }
        for (k, b) in &self.per_scene {
            let tag = k.chars().next().unwrap_or('?').to_ascii_uppercase();
            rows.push((format!("AP^{tag}"), 100.0 * b.ap));
            rows.push((format!("AR^{tag}"), 100.0 * b.ar));
        }
        for (k, b) in &self.per_class {
            rows.push((format!("AP[{k}]"), 100.0 * b.ap));
        }
        rows
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub metric: String,
    pub baseline: Option<f64>,
    pub candidate: Option<f64>,
    pub delta: Option<f64>,
}

/// Side-by-side ablation table of two reports.
pub fn compare_reports(baseline: &EvalReport, candidate: &EvalReport) -> Vec<CompareRow> {
    let a = baseline.summary();
    let b: BTreeMap<String, f64> = candidate.summary().into_iter().collect();
    let mut rows: Vec<CompareRow> = a
        .iter()
        .map(|(k, v)| {
            let c = b.get(k).copied();
            CompareRow { metric: k.clone(), baseline: Some(*v), candidate: c, delta: c.map(|c| c - v) }
        })
        .collect();
    for (k, v) in candidate.summary() {
        if !a.iter().any(|(n, _)| *n == k) {
            rows.push(CompareRow { metric: k, baseline: None, candidate: Some(v), delta: None });
        }
    }
    rows
}

fn cell(v: Option<f64>, signed: bool) -> String {
    match v {
        Some(x) if signed => format!("{x:+.2}"),
        Some(x) => format!("{x:.2}"),
        None => "-".into(),
    }
}

pub fn compare_table_text(rows: &[CompareRow], baseline: &str, candidate: &str) -> String {
    let w = rows.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
    let cw = baseline.len().max(candidate.len()).max(8);
    let mut out = format!("{:<w$}  {:>cw$}  {:>cw$}  {:>8}\n", "metric", baseline, candidate, "delta");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<w$}  {:>cw$}  {:>cw$}  {:>8}",
            r.metric,
            cell(r.baseline, false),
            cell(r.candidate, false),
            cell(r.delta, true)
        );
    }
    out
}

pub fn compare_table_csv(rows: &[CompareRow]) -> String {
    let mut out = String::from("metric,baseline,candidate,delta\n");
    for r in rows {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.metric, f(r.baseline), f(r.candidate), f(r.delta));
    }
    out
}
