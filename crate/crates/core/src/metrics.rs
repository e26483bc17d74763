//! Evaluation: normalized geodesic error with partiality rules, cumulative
//! error curves and AUC, overlap IoU / F1 and left/right accuracy.
//!
//! Every source vertex falls into one of four cases. Both ground truth and
//! prediction unmatched: excluded. Ground truth matched and prediction
//! unmatched, or (partial-to-partial only) the reverse: infinite error.
//! Both matched: edge-graph geodesic distance on the full target between
//! the predicted vertex and the ground-truth target's dominant vertex,
//! divided by the square root of the full target's area. In full-to-full
//! and partial-to-full problems, ground-truth-unmatched source vertices are
//! excluded whatever the prediction says.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::correspondence::{load_correspondence, DenseCorrespondence, VertexLabels};
use crate::error::{Error, Result};
use crate::geodesic::EdgeGraph;
use crate::geometry::surface_area;
use crate::mesh::Mesh;
use crate::pipeline::{MatchingInstance, Setting};

/// Per source vertex: target vertex index, or `None` for unmatched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictedMatching {
    pub map: Vec<Option<usize>>,
}

impl PredictedMatching {
    pub fn new(map: Vec<Option<usize>>) -> Self {
        Self { map }
    }

    /// Dominant-weight snap of a surface correspondence.
    pub fn from_correspondence(c: &DenseCorrespondence, target: &Mesh) -> Self {
        Self::new(c.to_vertex_map(target))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn matched_mask(&self) -> Vec<bool> {
        self.map.iter().map(Option::is_some).collect()
    }

    pub fn check(&self, source: &Mesh, target: &Mesh) -> Result<()> {
        if self.map.len() != source.vertex_count() {
            return Err(Error::InvalidArgument(format!(
                "prediction has {} entries for {} source vertices",
                self.map.len(),
                source.vertex_count()
            )));
        }
        if let Some((v, t)) = self
            .map
            .iter()
            .enumerate()
            .find_map(|(v, t)| t.filter(|&t| t >= target.vertex_count()).map(|t| (v, t)))
        {
            return Err(Error::InvalidArgument(format!(
                "vertex {v} predicts target {t} outside 0..{}",
                target.vertex_count()
            )));
        }
        Ok(())
    }

    /// One integer per line, `-1` for unmatched.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut s = String::with_capacity(self.map.len() * 6);
        for t in &self.map {
            match t {
                Some(t) => s.push_str(&t.to_string()),
                None => s.push_str("-1"),
            }
            s.push('\n');
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    /// Reads the integer format, or a `.corr` / `.corrb` correspondence
    /// snapped onto `target`.
    pub fn load(path: impl AsRef<Path>, target: &Mesh) -> Result<Self> {
        let path = path.as_ref();
        match path.extension().and_then(|e| e.to_str()) {
            Some("corr" | "corrb") => Ok(Self::from_correspondence(&load_correspondence(path)?, target)),
            _ => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                text.lines()
                    .enumerate()
                    .filter(|(_, l)| !l.trim().is_empty())
                    .map(|(i, l)| match l.trim().parse::<i64>() {
                        Ok(-1) => Ok(None),
                        Ok(t) if t >= 0 => Ok(Some(t as usize)),
                        _ => Err(Error::format(path, i + 1, format!("bad prediction `{}`", l.trim()))),
                    })
                    .collect::<Result<_>>()
                    .map(Self::new)
            }
        }
    }
}

/// What the matcher is asked to solve; decides the unmatched rules.
fn partial_target(setting: Setting) -> bool {
    setting == Setting::PartialPartial
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VertexErrors {
    /// `None` for excluded vertices; `Some(inf)` for unmatched mistakes.
    pub errors: Vec<Option<f64>>,
    /// Ground truth matched, prediction unmatched.
    pub missed: usize,
    /// Prediction matched, ground truth unmatched (partial-to-partial).
    pub spurious: usize,
}

impl VertexErrors {
    pub fn evaluated(&self) -> usize {
        self.errors.iter().filter(|e| e.is_some()).count()
    }
}

/// The emitted target with the full shape behind it.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub mesh: &'a Mesh,
    pub full: &'a Mesh,
    /// Emitted vertex → full vertex; `None` when `mesh` is the full shape.
    pub parent: Option<&'a [usize]>,
}

impl<'a> Target<'a> {
    pub fn full(mesh: &'a Mesh) -> Self {
        Self {
            mesh,
            full: mesh,
            parent: None,
        }
    }

    fn lift(&self, v: usize) -> usize {
        self.parent.map_or(v, |p| p[v])
    }
}

pub fn geodesic_error(pred: &PredictedMatching, gt: &DenseCorrespondence, target: Target<'_>, setting: Setting) -> Result<VertexErrors> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidArgument(format!(
            "prediction has {} entries, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if let Some(p) = target.parent {
        if p.len() != target.mesh.vertex_count() || p.iter().any(|&v| v >= target.full.vertex_count()) {
            return Err(Error::InvalidArgument("target parent map does not fit the full target".into()));
        }
    }
    if let Some(t) = pred.map.iter().flatten().find(|&&t| t >= target.mesh.vertex_count()) {
        return Err(Error::InvalidArgument(format!("predicted target {t} out of range")));
    }
    if let Some(sp) = gt.map.iter().flatten().find(|sp| sp.face >= target.mesh.face_count()) {
        return Err(Error::InvalidArgument(format!("ground-truth face {} out of range", sp.face)));
    }
    let norm = surface_area(target.full).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("full target has zero area".into()));
    }
    let p2p = partial_target(setting);
    let mut out = VertexErrors {
        errors: vec![None; pred.len()],
        ..Default::default()
    };
    // Group the finite queries by ground-truth vertex: one truncated
    // Dijkstra per distinct source.
    let mut queries: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (v, (p, g)) in pred.map.iter().zip(&gt.map).enumerate() {
        match (g, p) {
            (None, None) => {}
            (None, Some(_)) => {
                if p2p {
                    out.errors[v] = Some(f64::INFINITY);
                    out.spurious += 1;
                }
            }
            (Some(_), None) => {
                out.errors[v] = Some(f64::INFINITY);
                out.missed += 1;
            }
            (Some(sp), Some(t)) => {
                let g_full = target.lift(sp.dominant_vertex(target.mesh));
                queries.entry(g_full).or_default().push((v, target.lift(*t)));
            }
        }
    }
    if !queries.is_empty() {
        let graph = EdgeGraph::new(target.full);
        let solved: Vec<Vec<(usize, f64)>> = queries
            .par_iter()
            .map(|(&g, list)| {
                let goals: Vec<usize> = list.iter().map(|&(_, t)| t).collect();
                let d = graph.distances_to(g, &goals);
                list.iter().map(|&(v, t)| (v, d[t] / norm)).collect()
            })
            .collect();
        for (v, e) in solved.into_iter().flatten() {
            out.errors[v] = Some(e);
        }
    }
    Ok(out)
}

/// Threshold grid of the cumulative curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveSpec {
    pub tau_max: f64,
    pub step: f64,
}

impl Default for CurveSpec {
    fn default() -> Self {
        Self {
            tau_max: 1.0,
            step: 0.001,
        }
    }
}

impl CurveSpec {
    pub fn thresholds(&self) -> Vec<f64> {
        let n = (self.tau_max / self.step).round() as usize;
        (0..=n).map(|i| (i as f64 * self.step).min(self.tau_max)).collect()
    }
}

/// Fraction of evaluated vertices with error at most each threshold.
/// Infinite errors never count. With nothing to evaluate the curve is 1.
pub fn error_curve(errors: &[Option<f64>], thresholds: &[f64]) -> Vec<(f64, f64)> {
    let mut finite: Vec<f64> = errors.iter().flatten().copied().filter(|e| e.is_finite()).collect();
    let n = errors.iter().flatten().count();
    finite.sort_by(f64::total_cmp);
    thresholds
        .iter()
        .map(|&t| {
            let within = finite.partition_point(|&e| e <= t);
            (t, if n == 0 { 1.0 } else { within as f64 / n as f64 })
        })
        .collect()
}

/// Trapezoidal area under the curve over `[curve[0].0, tau_max]`, divided
/// by `tau_max`, ×100.
pub fn auc(curve: &[(f64, f64)], tau_max: f64) -> f64 {
    let mut area = 0.0;
    for w in curve.windows(2) {
        let (t0, f0) = w[0];
        let (t1, f1) = w[1];
        if t0 >= tau_max {
            break;
        }
        let t1c = t1.min(tau_max);
        let f1c = if t1 > tau_max { f0 + (f1 - f0) * (t1c - t0) / (t1 - t0) } else { f1 };
        area += 0.5 * (f0 + f1c) * (t1c - t0);
    }
    if curve.len() == 1 {
        return curve[0].1 * 100.0;
    }
    area / tau_max * 100.0
}

fn check_masks(a: &[bool], b: &[bool]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("mask lengths differ: {} and {}", a.len(), b.len())));
    }
    Ok(())
}

fn counts(pred: &[bool], gt: &[bool]) -> (usize, usize, usize) {
    let inter = pred.iter().zip(gt).filter(|(p, g)| **p && **g).count();
    let p = pred.iter().filter(|x| **x).count();
    let g = gt.iter().filter(|x| **x).count();
    (inter, p, g)
}

/// `|P ∩ G| / |P ∪ G|`; 1 when both masks are empty.
pub fn iou(pred: &[bool], gt: &[bool]) -> Result<f64> {
    check_masks(pred, gt)?;
    let (i, p, g) = counts(pred, gt);
    let union = p + g - i;
    Ok(if union == 0 { 1.0 } else { i as f64 / union as f64 })
}

/// Harmonic mean of precision and recall; 0 when both vanish and, like
/// [`iou`], 1 when both masks are empty.
pub fn f1(pred: &[bool], gt: &[bool]) -> Result<f64> {
    check_masks(pred, gt)?;
    let (i, p, g) = counts(pred, gt);
    if p == 0 && g == 0 {
        return Ok(1.0);
    }
    if i == 0 {
        return Ok(0.0);
    }
    let precision = i as f64 / p as f64;
    let recall = i as f64 / g as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Left/right accuracy. `predicted[i]` is the label of the target vertex
/// that vertex `i` was matched to (ignored where the prediction is
/// unmatched). Vertices with an unknown ground-truth label are skipped.
/// In partial-to-partial problems vertices unmatched in both are skipped
/// and a one-sided match scores 0; otherwise an unmatched prediction
/// scores 0. `sign_invariant` reports `max(acc, 1 - acc)`.
pub fn lr_accuracy(
    predicted: &[i32],
    gt_labels: &[i32],
    gt_matched: &[bool],
    pred_matched: &[bool],
    setting: Setting,
    sign_invariant: bool,
) -> Result<f64> {
    let n = gt_labels.len();
    if predicted.len() != n || gt_matched.len() != n || pred_matched.len() != n {
        return Err(Error::InvalidArgument("label and mask lengths differ".into()));
    }
    let p2p = partial_target(setting);
    let (mut hits, mut total) = (0usize, 0usize);
    for i in 0..n {
        if gt_labels[i] == VertexLabels::UNKNOWN {
            continue;
        }
        let (g, p) = (gt_matched[i], pred_matched[i]);
        if p2p && !g && !p {
            continue;
        }
        total += 1;
        let scored = p && (!p2p || g);
        if scored && predicted[i] == gt_labels[i] {
            hits += 1;
        }
    }
    let acc = if total == 0 { 1.0 } else { hits as f64 / total as f64 };
    Ok(if sign_invariant { acc.max(1.0 - acc) } else { acc })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub curve: CurveSpec,
    pub sign_invariant_lr: bool,
}

/// Per-instance report. Percentages are ×100.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub id: String,
    pub setting: String,
    pub vertices: usize,
    pub evaluated: usize,
    pub finite: usize,
    pub infinite_missed: usize,
    pub infinite_spurious: usize,
    pub auc: f64,
    pub tau_max: f64,
    pub iou: Option<f64>,
    pub f1: Option<f64>,
    pub lr_accuracy: Option<f64>,
    pub curve: Vec<(f64, f64)>,
    /// `null` for excluded vertices, `"inf"` for infinite errors.
    #[serde(serialize_with = "ser_errors")]
    pub errors: Vec<Option<f64>>,
}

fn ser_errors<S: serde::Serializer>(errors: &[Option<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(errors.len()))?;
    for e in errors {
        match e {
            None => seq.serialize_element(&Option::<f64>::None)?,
            Some(x) if x.is_infinite() => seq.serialize_element("inf")?,
            Some(x) => seq.serialize_element(x)?,
        }
    }
    seq.end()
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Two columns: threshold and cumulative fraction.
    pub fn curve_text(&self) -> String {
        let mut s = String::with_capacity(self.curve.len() * 16);
        for (t, f) in &self.curve {
            s.push_str(&format!("{t} {f}\n"));
        }
        s
    }
}

pub fn evaluate_instance(inst: &MatchingInstance, pred: &PredictedMatching, opts: &EvalOptions) -> Result<EvalReport> {
    pred.check(&inst.x, &inst.y)?;
    let target = Target {
        mesh: &inst.y,
        full: &inst.y_full,
        parent: inst.y_parent.as_deref(),
    };
    let errs = geodesic_error(pred, &inst.gt, target, inst.setting)?;
    let curve = error_curve(&errs.errors, &opts.curve.thresholds());
    let (iou_v, f1_v) = if partial_target(inst.setting) {
        let (pm, gm) = (pred.matched_mask(), inst.gt.matched_mask());
        (Some(iou(&pm, &gm)? * 100.0), Some(f1(&pm, &gm)? * 100.0))
    } else {
        (None, None)
    };
    let lr = match &inst.labels {
        Some([lx, ly]) => {
            let predicted: Vec<i32> = pred
                .map
                .iter()
                .map(|t| t.map_or(VertexLabels::UNKNOWN, |t| ly.labels[t]))
                .collect();
            Some(
                lr_accuracy(
                    &predicted,
                    &lx.labels,
                    &inst.gt.matched_mask(),
                    &pred.matched_mask(),
                    inst.setting,
                    opts.sign_invariant_lr,
                )? * 100.0,
            )
        }
        None => None,
    };
    let finite = errs.errors.iter().flatten().filter(|e| e.is_finite()).count();
    Ok(EvalReport {
        id: inst.id.clone(),
        setting: inst.setting.to_string(),
        vertices: pred.len(),
        evaluated: errs.evaluated(),
        finite,
        infinite_missed: errs.missed,
        infinite_spurious: errs.spurious,
        auc: auc(&curve, opts.curve.tau_max),
        tau_max: opts.curve.tau_max,
        iou: iou_v,
        f1: f1_v,
        lr_accuracy: lr,
        curve,
        errors: errs.errors,
    })
}

/// Means over a set of reports; optional metrics average over the reports
/// that carry them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub instances: usize,
    pub mean_auc: f64,
    pub mean_iou: Option<f64>,
    pub mean_f1: Option<f64>,
    pub mean_lr_accuracy: Option<f64>,
    pub infinite_missed: usize,
    pub infinite_spurious: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn summarize(reports: &[EvalReport]) -> EvalSummary {
    EvalSummary {
        instances: reports.len(),
        mean_auc: mean(reports.iter().map(|r| r.auc)).unwrap_or(0.0),
        mean_iou: mean(reports.iter().filter_map(|r| r.iou)),
        mean_f1: mean(reports.iter().filter_map(|r| r.f1)),
        mean_lr_accuracy: mean(reports.iter().filter_map(|r| r.lr_accuracy)),
        infinite_missed: reports.iter().map(|r| r.infinite_missed).sum(),
        infinite_spurious: reports.iter().map(|r| r.infinite_spurious).sum(),
    }
}
