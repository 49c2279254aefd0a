//! Embedding grids, nearest-prototype inference, mIoU and query retrieval.

use serde::{Deserialize, Serialize};

use crate::entailment::{aperture_kernel, ext_kernel, EntailmentConfig};
use crate::error::{check_dim, Error, Result};
use crate::lorentz::{distance_kernel, Curvature, LorentzPoint, PointBatch};
use crate::par::{self, Exec};

use super::encoder::{encoder_forward, EncoderParams};
use super::pca::Prototypes;
use super::scene::SyntheticScene;

/// H x W field of encoder outputs, kept both as tangent vectors and as
/// lifted hyperboloid points.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGrid {
    pub height: usize,
    pub width: usize,
    pub tangent: Vec<f64>,
    pub points: PointBatch,
}

impl EmbeddingGrid {
    pub fn from_tangent(height: usize, width: usize, dim: usize, tangent: Vec<f64>) -> Result<Self> {
        check_dim(height * width * dim, tangent.len())?;
        let points = PointBatch::exp_lift_rows(&tangent, dim, Curvature::UNIT)?;
        Ok(Self { height, width, tangent, points })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn tangent_at(&self, p: usize) -> &[f64] {
        let d = self.dim();
        &self.tangent[p * d..(p + 1) * d]
    }
}

pub fn embed(exec: Exec, params: &EncoderParams, scene: &SyntheticScene) -> Result<EmbeddingGrid> {
    check_dim(params.d_in, scene.d_in)?;
    let t = encoder_forward(exec, params, &scene.features)?;
    EmbeddingGrid::from_tangent(scene.height, scene.width, params.d_out, t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<usize>,
    pub legend: Vec<String>,
}

impl LabelMap {
    pub fn from_scene(scene: &SyntheticScene) -> Self {
        Self {
            height: scene.height,
            width: scene.width,
            labels: scene.labels.clone(),
            legend: scene.hierarchy.class_names.clone(),
        }
    }

    pub fn agreement(&self, other: &LabelMap) -> Result<f64> {
        check_dim(self.labels.len(), other.labels.len())?;
        let same = self.labels.iter().zip(&other.labels).filter(|(a, b)| a == b).count();
        Ok(same as f64 / self.labels.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferMode {
    Distance,
    Angle,
    /// Euclidean distance on tangent vectors (baseline head).
    Euclidean,
}

/// Index of the smallest score; ties go to the lowest index.
fn argmin(scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, s) in scores.enumerate() {
        if s < best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Exterior angle with the anchor-coincidence case read as 0.
#[inline]
fn ext_or_zero(protos: &Prototypes, i: usize, yt: f64, ys: &[f64]) -> f64 {
    protos.set.ext(i, yt, ys).unwrap_or(0.0)
}

fn pixel_label(grid: &EmbeddingGrid, protos: &Prototypes, p: usize, mode: InferMode) -> usize {
    let (yt, ys) = (grid.points.time(p), grid.points.spatial(p));
    let n = protos.len();
    match mode {
        InferMode::Distance => argmin((0..n).map(|i| protos.set.distance(i, yt, ys))),
        InferMode::Angle => argmin((0..n).map(|i| ext_or_zero(protos, i, yt, ys))),
        InferMode::Euclidean => {
            let v = grid.tangent_at(p);
            argmin((0..n).map(|i| protos.tangent.row(i).iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
        }
    }
}

pub fn infer(exec: Exec, grid: &EmbeddingGrid, protos: &Prototypes, mode: InferMode) -> Result<LabelMap> {
    check_dim(protos.dim(), grid.dim())?;
    let labels = par::map_range(exec, grid.pixels(), |p| pixel_label(grid, protos, p, mode));
    Ok(LabelMap { height: grid.height, width: grid.width, labels, legend: protos.set.labels().to_vec() })
}

/// Nearest prototype by geodesic distance.
pub fn infer_distance(exec: Exec, grid: &EmbeddingGrid, protos: &Prototypes) -> Result<LabelMap> {
    infer(exec, grid, protos, InferMode::Distance)
}

/// Prototype with the smallest exterior angle.
pub fn infer_angle(exec: Exec, grid: &EmbeddingGrid, protos: &Prototypes) -> Result<LabelMap> {
    infer(exec, grid, protos, InferMode::Angle)
}

/// Mean IoU over the classes present in `gt`.
pub fn miou(pred: &LabelMap, gt: &LabelMap, classes: usize) -> Result<f64> {
    if pred.height != gt.height || pred.width != gt.width {
        return Err(Error::DimensionMismatch { expected: gt.labels.len(), found: pred.labels.len() });
    }
    let mut inter = vec![0usize; classes];
    let mut union = vec![0usize; classes];
    let mut present = vec![false; classes];
    for (&p, &g) in pred.labels.iter().zip(&gt.labels) {
        if g >= classes || p >= classes {
            return Err(Error::Usage(format!("label out of range for {classes} classes")));
        }
        present[g] = true;
        if p == g {
            inter[g] += 1;
            union[g] += 1;
        } else {
            union[g] += 1;
            union[p] += 1;
        }
    }
    let ious: Vec<f64> = (0..classes).filter(|&c| present[c]).map(|c| inter[c] as f64 / union[c] as f64).collect();
    if ious.is_empty() {
        return Err(Error::Usage("ground truth is empty".into()));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

pub fn pixel_accuracy(pred: &LabelMap, gt: &LabelMap) -> Result<f64> {
    pred.agreement(gt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryMode {
    Distance,
    Angle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    /// `-d_L` or `-ext` per pixel.
    pub scores: Vec<f64>,
    pub mask: Vec<bool>,
    pub threshold: f64,
}

impl QueryResult {
    /// Fraction of `target` pixels that were retrieved.
    pub fn recall(&self, target: &[bool]) -> f64 {
        let hit = self.mask.iter().zip(target).filter(|(m, t)| **m && **t).count();
        let total = target.iter().filter(|t| **t).count();
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }

    /// Fraction of retrieved pixels that lie in `target`.
    pub fn precision(&self, target: &[bool]) -> f64 {
        let hit = self.mask.iter().zip(target).filter(|(m, t)| **m && **t).count();
        let got = self.mask.iter().filter(|m| **m).count();
        if got == 0 {
            0.0
        } else {
            hit as f64 / got as f64
        }
    }
}

/// Scores every pixel against a lifted query and keeps those whose score
/// exceeds `threshold`.
pub fn text_query(exec: Exec, grid: &EmbeddingGrid, query: &LorentzPoint, mode: QueryMode, threshold: f64) -> Result<QueryResult> {
    check_dim(grid.dim(), query.dim())?;
    Curvature::UNIT.ensure_same(query.curvature())?;
    if mode == QueryMode::Angle && query.is_origin() {
        return Err(Error::Degenerate("angle query at the origin".into()));
    }
    let (qt, qs, qn) = (query.time(), query.spatial(), query.spatial_norm());
    let scores = par::map_range(exec, grid.pixels(), |p| {
        let (yt, ys) = (grid.points.time(p), grid.points.spatial(p));
        match mode {
            QueryMode::Distance => -distance_kernel(qt, qs, yt, ys, 1.0),
            QueryMode::Angle => -ext_kernel(qt, qs, qn, yt, ys, 1.0).unwrap_or(0.0),
        }
    });
    let mask = scores.iter().map(|&s| s > threshold).collect();
    Ok(QueryResult { scores, mask, threshold })
}

/// Threshold that keeps exactly the pixels inside the query's cone, or
/// `None` when the query is too close to the origin to own one.
pub fn cone_threshold(query: &LorentzPoint, cfg: &EntailmentConfig) -> Option<f64> {
    aperture_kernel(query.spatial_norm(), cfg.k, cfg.curvature.sqrt()).map(|a| -a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorentz::exp_lift_origin;
    use crate::segtoy::pca::{build_prototypes, DescriptorBank};
    use crate::linalg::Mat;

    fn protos() -> Prototypes {
        let raw = Mat::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
        let names = (0..4).map(|i| format!("c{i}")).collect();
        build_prototypes(&DescriptorBank::new(names, raw, 2).unwrap(), &EntailmentConfig::default()).unwrap()
    }

    fn grid(rows: &[[f64; 2]]) -> EmbeddingGrid {
        EmbeddingGrid::from_tangent(1, rows.len(), 2, rows.concat()).unwrap()
    }

    #[test]
    fn prototype_pixels_get_their_class() {
        let p = protos();
        let t: Vec<[f64; 2]> = (0..4).map(|i| [p.tangent[(i, 0)], p.tangent[(i, 1)]]).collect();
        let g = grid(&t);
        for mode in [InferMode::Distance, InferMode::Angle, InferMode::Euclidean] {
            assert_eq!(infer(Exec::Parallel, &g, &p, mode).unwrap().labels, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn ties_go_to_lower_index() {
        let p = protos();
        // the origin is equidistant from all four anchors
        let g = grid(&[[0.0, 0.0]]);
        assert_eq!(infer_distance(Exec::Sequential, &g, &p).unwrap().labels, vec![0]);
        assert_eq!(infer_angle(Exec::Sequential, &g, &p).unwrap().labels, vec![0]);
        assert_eq!(argmin([2.0, 1.0, 1.0].into_iter()), 1);
    }

    #[test]
    fn beyond_anchor_on_its_ray() {
        let p = protos();
        let i = 2;
        let dir = [p.tangent[(i, 0)] * 3.0, p.tangent[(i, 1)] * 3.0];
        let g = grid(&[dir]);
        assert_eq!(infer_angle(Exec::Sequential, &g, &p).unwrap().labels, vec![i]);
    }

    fn map(labels: Vec<usize>, w: usize) -> LabelMap {
        LabelMap { height: labels.len() / w, width: w, labels, legend: vec![] }
    }

    #[test]
    fn miou_identities() {
        let gt = map(vec![0, 0, 1, 1], 2);
        assert_eq!(miou(&gt, &gt, 2).unwrap(), 1.0);
        let a = map(vec![0, 0, 0, 0], 2);
        let b = map(vec![1, 1, 1, 1], 2);
        assert_eq!(miou(&a, &b, 2).unwrap(), 0.0);
        // rectangle A vs its half-shifted copy: |i| = A/2, |u| = 3A/2
        let gt = map(vec![1, 1, 0, 0, 0, 0, 0, 0], 8);
        let pr = map(vec![0, 1, 1, 0, 0, 0, 0, 0], 8);
        let ious = (miou(&pr, &gt, 2).unwrap() * 2.0) - 5.0 / 7.0;
        assert!((ious - 1.0 / 3.0).abs() < 1e-15);
        assert!(miou(&map(vec![0, 0], 2), &map(vec![0, 0], 1), 2).is_err());
    }

    #[test]
    fn exact_prototype_query_retrieves_its_pixels() {
        let p = protos();
        let q = p.set.anchor(1);
        let t = [[p.tangent[(1, 0)], p.tangent[(1, 1)]], [p.tangent[(0, 0)], p.tangent[(0, 1)]], [-2.0, 0.0]];
        let g = grid(&t);
        let r = text_query(Exec::Parallel, &g, &q, QueryMode::Distance, -0.5).unwrap();
        assert_eq!(r.mask, vec![true, false, false]);
        let th = cone_threshold(&q, &EntailmentConfig::default()).unwrap();
        let r = text_query(Exec::Parallel, &g, &q, QueryMode::Angle, th).unwrap();
        assert!(r.mask[0] && !r.mask[1] && r.mask[2]);
        assert_eq!(r.recall(&[true, false, true]), 1.0);
        assert_eq!(r.precision(&[true, false, false]), 0.5);
        let bad = exp_lift_origin(&[1.0, 0.0, 0.0], Curvature::UNIT).unwrap();
        assert!(text_query(Exec::Parallel, &g, &bad, QueryMode::Angle, 0.0).is_err());
    }
}
