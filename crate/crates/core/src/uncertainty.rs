//! Pixel uncertainty, class confidence and boundary maps over an embedding
//! grid.

use serde::{Deserialize, Serialize};

use crate::entailment::ext_kernel;
use crate::error::{check_dim, Error, Result};
use crate::lorentz::{distance_kernel, PointBatch};
use crate::model_maps::hyperbolic_mean;
use crate::par::{self, Exec};
use crate::segtoy::EmbeddingGrid;

/// Default percentile for [`boundary_map`].
pub const DEFAULT_BOUNDARY_PERCENTILE: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    RadiusUncertainty,
    AngleUncertainty,
    Confidence,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarMap {
    pub height: usize,
    pub width: usize,
    pub kind: MapKind,
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// Set when the map could not be thresholded meaningfully.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl ScalarMap {
    pub fn new(height: usize, width: usize, kind: MapKind, values: Vec<f64>) -> Result<Self> {
        check_dim(height * width, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{kind:?} map value")));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { height, width, kind, values, min, max, warning: None })
    }

    /// Per-map min-max normalization to `[0, 1]`; constant maps give zeros.
    pub fn normalized(&self) -> Vec<f64> {
        let span = self.max - self.min;
        if span > 0.0 {
            self.values.iter().map(|v| (v - self.min) / span).collect()
        } else {
            vec![0.0; self.values.len()]
        }
    }

    /// Mean over the pixels where `mask` is `want`; `None` when there are none.
    pub fn masked_mean(&self, mask: &[bool], want: bool) -> Option<f64> {
        let (s, n) = self
            .values
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m == want)
            .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
        (n > 0).then(|| s / n as f64)
    }
}

/// `-x0` per pixel: points nearer the origin are less certain.
pub fn radius_uncertainty(exec: Exec, grid: &EmbeddingGrid) -> Result<ScalarMap> {
    let v = par::map_range(exec, grid.pixels(), |p| -grid.points.time(p));
    ScalarMap::new(grid.height, grid.width, MapKind::RadiusUncertainty, v)
}

/// Radius measures that order pixels the same way as [`radius_uncertainty`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusForm {
    Time,
    SpatialNorm,
    Poincare,
}

/// Negated radius under the chosen form.
pub fn radius_uncertainty_as(exec: Exec, grid: &EmbeddingGrid, form: RadiusForm) -> Result<ScalarMap> {
    let v = par::map_range(exec, grid.pixels(), |p| {
        let (t, n) = (grid.points.time(p), grid.points.spatial_norm(p));
        match form {
            RadiusForm::Time => -t,
            RadiusForm::SpatialNorm => -n,
            RadiusForm::Poincare => -(n / (t + 1.0)),
        }
    });
    ScalarMap::new(grid.height, grid.width, MapKind::RadiusUncertainty, v)
}

/// Smallest exterior angle from any anchor, per pixel. A pixel coinciding
/// with an anchor scores 0.
pub fn angle_uncertainty(exec: Exec, grid: &EmbeddingGrid, anchors: &PointBatch) -> Result<ScalarMap> {
    if anchors.is_empty() {
        return Err(Error::Usage("angle uncertainty needs at least one anchor".into()));
    }
    check_dim(grid.dim(), anchors.dim())?;
    if let Some(i) = (0..anchors.len()).find(|&i| anchors.spatial_norm(i) == 0.0) {
        return Err(Error::Usage(format!("anchor {i} sits at the origin")));
    }
    let c = anchors.curvature().value();
    let v = par::map_range(exec, grid.pixels(), |p| {
        let (yt, ys) = (grid.points.time(p), grid.points.spatial(p));
        (0..anchors.len())
            .map(|i| ext_kernel(anchors.time(i), anchors.spatial(i), anchors.spatial_norm(i), yt, ys, c).unwrap_or(0.0))
            .fold(f64::INFINITY, f64::min)
    });
    ScalarMap::new(grid.height, grid.width, MapKind::AngleUncertainty, v)
}

/// `exp(-d_L(y, y_m))` against the Einstein-midpoint mean of the pixels in
/// `class_pixels`.
pub fn class_confidence(exec: Exec, grid: &EmbeddingGrid, class_pixels: &[usize]) -> Result<ScalarMap> {
    if class_pixels.is_empty() {
        return Err(Error::Usage("class confidence needs a non-empty pixel set".into()));
    }
    if let Some(&p) = class_pixels.iter().find(|&&p| p >= grid.pixels()) {
        return Err(Error::Usage(format!("pixel index {p} out of range")));
    }
    let members: Vec<_> = class_pixels.iter().map(|&p| grid.points.point(p)).collect();
    let m = hyperbolic_mean(&members)?;
    let v = par::map_range(exec, grid.pixels(), |p| {
        (-distance_kernel(m.time(), m.spatial(), grid.points.time(p), grid.points.spatial(p), 1.0)).exp()
    });
    ScalarMap::new(grid.height, grid.width, MapKind::Confidence, v)
}

/// Nearest-rank percentile of `values` (`percentile` in `(0, 100]`).
pub fn percentile_nearest_rank(values: &[f64], percentile: f64) -> Result<f64> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(Error::Usage(format!("percentile must be in (0, 100], got {percentile}")));
    }
    if values.is_empty() {
        return Err(Error::Usage("percentile of an empty map".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((percentile / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// 1 where `u` exceeds its `percentile`-th value, else 0. A constant map
/// yields all zeros and a warning.
pub fn boundary_map(u: &ScalarMap, percentile: f64) -> Result<ScalarMap> {
    let th = percentile_nearest_rank(&u.values, percentile)?;
    let v = u.values.iter().map(|&x| if x > th { 1.0 } else { 0.0 }).collect();
    let mut out = ScalarMap::new(u.height, u.width, MapKind::Boundary, v)?;
    if u.max == u.min {
        out.warning = Some("input map is constant; threshold is degenerate".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorentz::{exp_lift_origin, Curvature};
    use crate::entailment::exterior_angle;

    fn grid(rows: &[Vec<f64>]) -> EmbeddingGrid {
        let d = rows[0].len();
        EmbeddingGrid::from_tangent(1, rows.len(), d, rows.concat()).unwrap()
    }

    fn ranking(v: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
        idx
    }

    #[test]
    fn origin_grid_is_constant() {
        let g = grid(&vec![vec![0.0, 0.0]; 5]);
        let m = radius_uncertainty(Exec::Parallel, &g).unwrap();
        assert!(m.values.iter().all(|&v| v == -1.0));
        let b = boundary_map(&m, 50.0).unwrap();
        assert!(b.values.iter().all(|&v| v == 0.0));
        assert!(b.warning.is_some());
    }

    #[test]
    fn radius_forms_rank_alike() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.7).sin() * 3.0, (i as f64 * 1.3).cos()]).collect();
        let g = grid(&rows);
        let base = ranking(&radius_uncertainty(Exec::Sequential, &g).unwrap().values);
        for form in [RadiusForm::Time, RadiusForm::SpatialNorm, RadiusForm::Poincare] {
            let m = radius_uncertainty_as(Exec::Parallel, &g, form).unwrap();
            assert_eq!(ranking(&m.values), base, "{form:?}");
        }
    }

    #[test]
    fn angle_map_single_anchor_and_ray() {
        let a = exp_lift_origin(&[1.0, 0.5], Curvature::UNIT).unwrap();
        let anchors = PointBatch::from_points(std::slice::from_ref(&a)).unwrap();
        let rows = vec![vec![2.0, 1.0], vec![-0.3, 0.8], vec![0.1, 0.1]];
        let g = grid(&rows);
        let m = angle_uncertainty(Exec::Parallel, &g, &anchors).unwrap();
        assert!(m.values[0].abs() < 1e-7);
        for p in 1..3 {
            assert!((m.values[p] - exterior_angle(&a, &g.points.point(p)).unwrap()).abs() < 1e-15);
            assert!(m.values[p] >= 0.0 && m.values[p] <= std::f64::consts::PI);
        }
        let o = PointBatch::from_points(&[exp_lift_origin(&[0.0, 0.0], Curvature::UNIT).unwrap()]).unwrap();
        assert!(matches!(angle_uncertainty(Exec::Parallel, &g, &o), Err(Error::Usage(_))));
    }

    #[test]
    fn confidence_peaks_at_mean() {
        let rows = vec![vec![0.5, 0.0], vec![0.5, 0.0], vec![1.5, 0.0], vec![-2.0, 0.0]];
        let g = grid(&rows);
        let m = class_confidence(Exec::Parallel, &g, &[0, 1]).unwrap();
        assert!((m.values[0] - 1.0).abs() < 1e-12);
        assert!(m.values[0] > m.values[2] && m.values[2] > m.values[3]);
        assert!(m.values.iter().all(|&v| v > 0.0 && v <= 1.0));
        assert!(class_confidence(Exec::Parallel, &g, &[]).is_err());
    }

    #[test]
    fn step_map_thresholds() {
        let v: Vec<f64> = (0..10).map(|i| if i < 5 { 0.2 } else { 0.9 }).collect();
        let m = ScalarMap::new(2, 5, MapKind::AngleUncertainty, v.clone()).unwrap();
        let b = boundary_map(&m, 50.0).unwrap();
        assert_eq!(b.values, v.iter().map(|&x| if x > 0.5 { 1.0 } else { 0.0 }).collect::<Vec<_>>());
        assert!(boundary_map(&m, 100.0).unwrap().values.iter().all(|&x| x == 0.0));
        assert!(boundary_map(&m, 0.0).is_err());
        assert_eq!(m.normalized()[9], 1.0);
        assert_eq!(m.masked_mean(&[true; 10], false), None);
    }
}
