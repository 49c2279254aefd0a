//! Lorentz (hyperboloid) model primitives.
//!
//! Points live on the upper sheet `<x, x>_L = -1/c` of Minkowski space
//! `R^{1,n}`. A point is stored as its time component `x0` and spatial part
//! `x'`; the time component is always derived from the spatial part as
//! `x0 = sqrt(1/c + |x'|^2)` so constructors land on the manifold up to a
//! single rounding.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Upper bound on `sqrt(c) * |v|` before `cosh`/`sinh` are evaluated.
pub const MAX_TANGENT_NORM: f64 = 12.0;

/// Below this argument `sinh(r)/r` is evaluated by its series.
const SINHC_SERIES_BELOW: f64 = 1e-4;

/// Closeness threshold (in units of `-c<x,y>_L`) under which distances are
/// computed from the Minkowski norm of the difference instead of `acosh`.
const NEAR_FIELD_ALPHA: f64 = 2.0;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of tangent vectors clamped to [`MAX_TANGENT_NORM`] so far.
pub fn clamp_events() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

pub fn reset_clamp_events() {
    CLAMP_EVENTS.store(0, Ordering::Relaxed);
}

pub(crate) fn record_clamp() {
    CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
}

/// Positive curvature magnitude `c`; the manifold has curvature `-c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Curvature(f64);

impl Curvature {
    pub const UNIT: Curvature = Curvature(1.0);

    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Curvature(c))
        } else {
            Err(Error::InvalidCurvature(c))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn sqrt(self) -> f64 {
        self.0.sqrt()
    }

    pub(crate) fn ensure_same(self, other: Curvature) -> Result<()> {
        if self.0 == other.0 {
            Ok(())
        } else {
            Err(Error::CurvatureMismatch { left: self.0, right: other.0 })
        }
    }
}

impl Default for Curvature {
    fn default() -> Self {
        Curvature::UNIT
    }
}

impl TryFrom<f64> for Curvature {
    type Error = Error;
    fn try_from(c: f64) -> Result<Self> {
        Curvature::new(c)
    }
}

impl From<Curvature> for f64 {
    fn from(c: Curvature) -> f64 {
        c.0
    }
}

/// A vector of `R^{1,n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientVector {
    pub time: f64,
    pub spatial: Vec<f64>,
}

impl AmbientVector {
    pub fn new(time: f64, spatial: Vec<f64>) -> Result<Self> {
        if spatial.is_empty() {
            return Err(Error::Usage("ambient vector needs at least one spatial dimension".into()));
        }
        if !time.is_finite() || spatial.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ambient vector entry".into()));
        }
        Ok(Self { time, spatial })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { time: 0.0, spatial: vec![0.0; dim] }
    }

    /// `[0, v]`, the tangent vector at the origin with spatial part `v`.
    pub fn spatial_only(v: &[f64]) -> Self {
        Self { time: 0.0, spatial: v.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.spatial.len()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `-t1 t2 + <s1, s2>` without dimension checks.
#[inline]
pub(crate) fn minkowski(t1: f64, s1: &[f64], t2: f64, s2: &[f64]) -> f64 {
    -t1 * t2 + dot(s1, s2)
}

/// Lorentzian inner product `-x0 y0 + sum_i xi yi`.
pub fn lorentz_inner(x: &AmbientVector, y: &AmbientVector) -> Result<f64> {
    check_dim(x.dim(), y.dim())?;
    Ok(minkowski(x.time, &x.spatial, y.time, &y.spatial))
}

/// `sinh(r) / r` with the removable singularity at zero handled by series.
#[inline]
pub fn sinhc(r: f64) -> f64 {
    if r.abs() < SINHC_SERIES_BELOW {
        1.0 + r * r / 6.0
    } else {
        r.sinh() / r
    }
}

/// Time component for a spatial part of squared norm `s2`.
#[inline]
pub(crate) fn time_from_norm_sq(s2: f64, c: f64) -> f64 {
    (1.0 / c + s2).sqrt()
}

/// A point on the hyperboloid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzPoint {
    time: f64,
    spatial: Vec<f64>,
    curvature: Curvature,
}

impl LorentzPoint {
    /// Lifts a spatial vector onto the hyperboloid by solving for `x0`.
    pub fn lift(spatial: Vec<f64>, c: Curvature) -> Result<Self> {
        if spatial.is_empty() {
            return Err(Error::Usage("point needs at least one spatial dimension".into()));
        }
        if spatial.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spatial coordinate".into()));
        }
        let s2 = norm_sq(&spatial);
        if !s2.is_finite() {
            return Err(Error::Domain("squared spatial norm overflows".into()));
        }
        Ok(Self { time: time_from_norm_sq(s2, c.value()), spatial, curvature: c })
    }

    /// The hyperboloid vertex `(1/sqrt(c), 0)`.
    pub fn origin(dim: usize, c: Curvature) -> Self {
        Self { time: 1.0 / c.sqrt(), spatial: vec![0.0; dim], curvature: c }
    }

    /// Accepts an ambient vector only if it passes [`manifold_check`] at `tol`.
    pub fn from_ambient(v: AmbientVector, c: Curvature, tol: f64) -> Result<Self> {
        let p = Self { time: v.time, spatial: v.spatial, curvature: c };
        if manifold_check(&p, tol) {
            Ok(p)
        } else {
            Err(Error::Domain("vector is not on the hyperboloid".into()))
        }
    }

    /// Builds a point without validation. Callers guarantee the invariant.
    pub(crate) fn from_raw(time: f64, spatial: Vec<f64>, curvature: Curvature) -> Self {
        Self { time, spatial, curvature }
    }

    #[inline]
    pub fn time(&self) -> f64 {
        self.time
    }

    #[inline]
    pub fn spatial(&self) -> &[f64] {
        &self.spatial
    }

    #[inline]
    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.spatial.len()
    }

    pub fn spatial_norm(&self) -> f64 {
        norm_sq(&self.spatial).sqrt()
    }

    pub fn to_ambient(&self) -> AmbientVector {
        AmbientVector { time: self.time, spatial: self.spatial.clone() }
    }

    pub fn into_spatial(self) -> Vec<f64> {
        self.spatial
    }

    /// Lorentzian inner product with another point (no curvature check).
    #[inline]
    pub fn inner(&self, other: &LorentzPoint) -> f64 {
        minkowski(self.time, &self.spatial, other.time, &other.spatial)
    }

    pub fn is_origin(&self) -> bool {
        self.spatial.iter().all(|&v| v == 0.0)
    }
}

/// A tangent vector together with its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: LorentzPoint,
    pub components: AmbientVector,
}

impl TangentVector {
    /// Lorentzian norm; the tangent metric is positive definite so this is
    /// `sqrt(<v, v>_L)` with round-off below zero clipped.
    pub fn norm(&self) -> f64 {
        let v = &self.components;
        minkowski(v.time, &v.spatial, v.time, &v.spatial).max(0.0).sqrt()
    }

    pub fn zero(base: LorentzPoint) -> Self {
        let dim = base.dim();
        Self { base, components: AmbientVector::zeros(dim) }
    }
}

/// `lift_point`: places a spatial vector on the hyperboloid.
pub fn lift_point(spatial: &[f64], c: Curvature) -> Result<LorentzPoint> {
    LorentzPoint::lift(spatial.to_vec(), c)
}

/// Scales `v` so that `sqrt(c)|v| <= MAX_TANGENT_NORM`, counting clamp events.
/// Returns the scale factor (1 when no clamping is needed).
pub(crate) fn clamp_scale(norm: f64, sqrt_c: f64) -> f64 {
    let r = sqrt_c * norm;
    if r > MAX_TANGENT_NORM {
        record_clamp();
        MAX_TANGENT_NORM / r
    } else {
        1.0
    }
}

/// Spatial part of `expm_O([0, v])` written into `out`.
pub(crate) fn exp_origin_spatial(v: &[f64], sqrt_c: f64, out: &mut [f64]) {
    let norm = norm_sq(v).sqrt();
    let scale = clamp_scale(norm, sqrt_c);
    let r = sqrt_c * norm * scale;
    let k = sinhc(r) * scale;
    for (o, &vi) in out.iter_mut().zip(v) {
        *o = k * vi;
    }
}

/// Exponential map at the origin applied to `[0, v_e]`.
///
/// The spatial part is `sinh(r)/r * v_e` with `r = sqrt(c)|v_e|`; the time
/// component is re-derived from it, which equals `cosh(r)/sqrt(c)`.
pub fn exp_lift_origin(v_e: &[f64], c: Curvature) -> Result<LorentzPoint> {
    if v_e.is_empty() {
        return Err(Error::Usage("empty tangent vector".into()));
    }
    if v_e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tangent coordinate".into()));
    }
    let mut spatial = vec![0.0; v_e.len()];
    exp_origin_spatial(v_e, c.sqrt(), &mut spatial);
    LorentzPoint::lift(spatial, c)
}

/// Orthogonal projection of `u` onto the tangent space at `z`:
/// `u + c z <z, u>_L`.
pub fn tangent_project(z: &LorentzPoint, u: &AmbientVector) -> Result<TangentVector> {
    check_dim(z.dim(), u.dim())?;
    let c = z.curvature.value();
    let k = c * minkowski(z.time, &z.spatial, u.time, &u.spatial);
    let components = AmbientVector {
        time: u.time + k * z.time,
        spatial: u.spatial.iter().zip(&z.spatial).map(|(ui, zi)| ui + k * zi).collect(),
    };
    Ok(TangentVector { base: z.clone(), components })
}

/// Exponential map `cosh(r) z + sinh(r)/r v` with `r = sqrt(c)|v|_L`.
pub fn exp_map(z: &LorentzPoint, v: &TangentVector) -> Result<LorentzPoint> {
    check_dim(z.dim(), v.components.dim())?;
    z.curvature.ensure_same(v.base.curvature)?;
    let sqrt_c = z.curvature.sqrt();
    let norm = v.norm();
    if norm == 0.0 {
        return Ok(z.clone());
    }
    let scale = clamp_scale(norm, sqrt_c);
    let r = sqrt_c * norm * scale;
    let a = r.cosh();
    let b = sinhc(r) * scale;
    let spatial: Vec<f64> = z
        .spatial
        .iter()
        .zip(&v.components.spatial)
        .map(|(zi, vi)| a * zi + b * vi)
        .collect();
    LorentzPoint::lift(spatial, z.curvature)
}

/// `acosh(a) / sqrt(a^2 - 1)`, finite at `a = 1`.
fn acosh_ratio(alpha: f64) -> f64 {
    let eps = alpha - 1.0;
    if eps < 1e-8 {
        1.0 - eps / 3.0
    } else {
        alpha.acosh() / (alpha * alpha - 1.0).sqrt()
    }
}

/// Logarithmic map, the inverse of [`exp_map`] at `z`.
pub fn log_map(z: &LorentzPoint, x: &LorentzPoint) -> Result<TangentVector> {
    check_dim(z.dim(), x.dim())?;
    z.curvature.ensure_same(x.curvature)?;
    if z == x {
        return Ok(TangentVector::zero(z.clone()));
    }
    let c = z.curvature.value();
    let alpha = -c * z.inner(x);
    if alpha < 1.0 - 1e-8 {
        return Err(Error::Domain(format!("-c<z,x>_L = {alpha} < 1: inputs are off the manifold")));
    }
    let ratio = acosh_ratio(alpha.max(1.0));
    let proj = tangent_project(z, &x.to_ambient())?;
    let components = AmbientVector {
        time: ratio * proj.components.time,
        spatial: proj.components.spatial.iter().map(|v| ratio * v).collect(),
    };
    Ok(TangentVector { base: z.clone(), components })
}

/// Geodesic distance kernel on raw coordinates.
///
/// Uses `acosh(-c<x,y>_L)/sqrt(c)` with the argument clamped to `>= 1`; for
/// nearby points the equivalent `2 asinh(sqrt(c)|x-y|_L / 2)/sqrt(c)` form
/// is used, which is exact at coincidence.
#[inline]
pub(crate) fn distance_kernel(t1: f64, s1: &[f64], t2: f64, s2: &[f64], c: f64) -> f64 {
    let sqrt_c = c.sqrt();
    let alpha = -c * minkowski(t1, s1, t2, s2);
    if alpha < NEAR_FIELD_ALPHA {
        let dt = t1 - t2;
        let ds: f64 = s1.iter().zip(s2).map(|(a, b)| (a - b) * (a - b)).sum();
        let sq = ds - dt * dt;
        if sq <= 0.0 {
            return 0.0;
        }
        2.0 * (sqrt_c * sq.sqrt() / 2.0).asinh() / sqrt_c
    } else {
        alpha.max(1.0).acosh() / sqrt_c
    }
}

/// Geodesic distance between two points of the same curvature.
pub fn geodesic_distance(x: &LorentzPoint, y: &LorentzPoint) -> Result<f64> {
    check_dim(x.dim(), y.dim())?;
    x.curvature.ensure_same(y.curvature)?;
    // canonical argument order
    let (a, b) = if y.time < x.time { (y, x) } else { (x, y) };
    Ok(distance_kernel(a.time, &a.spatial, b.time, &b.spatial, x.curvature.value()))
}

/// True iff `|<x,x>_L + 1/c| <= tol` and the point is on the upper sheet.
pub fn manifold_check(x: &LorentzPoint, tol: f64) -> bool {
    let c = x.curvature.value();
    let self_inner = minkowski(x.time, &x.spatial, x.time, &x.spatial);
    x.time > 0.0 && (self_inner + 1.0 / c).abs() <= tol
}

/// A batch of points sharing dimension and curvature, stored flat with the
/// per-point spatial norms precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBatch {
    dim: usize,
    curvature: Curvature,
    time: Vec<f64>,
    spatial: Vec<f64>,
    norm: Vec<f64>,
}

impl PointBatch {
    pub fn from_points(points: &[LorentzPoint]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Usage("empty point batch".into()))?;
        let dim = first.dim();
        let curvature = first.curvature;
        let mut batch = Self {
            dim,
            curvature,
            time: Vec::with_capacity(points.len()),
            spatial: Vec::with_capacity(points.len() * dim),
            norm: Vec::with_capacity(points.len()),
        };
        for p in points {
            check_dim(dim, p.dim())?;
            curvature.ensure_same(p.curvature)?;
            batch.time.push(p.time);
            batch.spatial.extend_from_slice(&p.spatial);
            batch.norm.push(p.spatial_norm());
        }
        Ok(batch)
    }

    /// Lifts `rows` (flat, `dim` per row) through `expm_O`.
    pub fn exp_lift_rows(rows: &[f64], dim: usize, c: Curvature) -> Result<Self> {
        if dim == 0 || !rows.len().is_multiple_of(dim) {
            return Err(Error::Usage("row buffer is not a multiple of the dimension".into()));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tangent row".into()));
        }
        let n = rows.len() / dim;
        let sqrt_c = c.sqrt();
        let mut spatial = vec![0.0; rows.len()];
        let mut time = Vec::with_capacity(n);
        let mut norm = Vec::with_capacity(n);
        for (src, dst) in rows.chunks_exact(dim).zip(spatial.chunks_exact_mut(dim)) {
            exp_origin_spatial(src, sqrt_c, dst);
            let s2 = norm_sq(dst);
            time.push(time_from_norm_sq(s2, c.value()));
            norm.push(s2.sqrt());
        }
        Ok(Self { dim, curvature: c, time, spatial, norm })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.time[i]
    }

    #[inline]
    pub fn spatial(&self, i: usize) -> &[f64] {
        &self.spatial[i * self.dim..(i + 1) * self.dim]
    }

    /// Precomputed `|x_i'|`.
    #[inline]
    pub fn spatial_norm(&self, i: usize) -> f64 {
        self.norm[i]
    }

    pub fn times(&self) -> &[f64] {
        &self.time
    }

    pub fn norms(&self) -> &[f64] {
        &self.norm
    }

    pub fn point(&self, i: usize) -> LorentzPoint {
        LorentzPoint::from_raw(self.time[i], self.spatial(i).to_vec(), self.curvature)
    }

    pub fn points(&self) -> Vec<LorentzPoint> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Distance from member `i` to `p`, using the cached coordinates.
    #[inline]
    pub fn distance_to(&self, i: usize, p: &LorentzPoint) -> f64 {
        distance_kernel(self.time[i], self.spatial(i), p.time, &p.spatial, self.curvature.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c1() -> Curvature {
        Curvature::UNIT
    }

    #[test]
    fn inner_trivial_cases() {
        let o = AmbientVector::new(1.0, vec![0.0, 0.0]).unwrap();
        assert_eq!(lorentz_inner(&o, &o).unwrap(), -1.0);
        let a = AmbientVector::new(1.0, vec![0.0]).unwrap();
        let b = AmbientVector::new(0.0, vec![1.0]).unwrap();
        assert_eq!(lorentz_inner(&a, &b).unwrap(), 0.0);
        let short = AmbientVector::new(0.0, vec![1.0, 2.0]).unwrap();
        assert!(matches!(lorentz_inner(&a, &short), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn lift_examples() {
        let p = lift_point(&[0.0, 0.0], c1()).unwrap();
        assert_eq!(p.time(), 1.0);
        let s = [1.0, 1.0, 1.0];
        assert_eq!(lift_point(&s, c1()).unwrap().time(), 2.0);
        let c4 = Curvature::new(4.0).unwrap();
        assert!((lift_point(&s, c4).unwrap().time() - 3.25f64.sqrt()).abs() < 1e-15);
        assert!(matches!(lift_point(&[1e200, 1e200], c1()), Err(Error::Domain(_))));
    }

    #[test]
    fn curvature_validation() {
        assert!(Curvature::new(0.0).is_err());
        assert!(Curvature::new(-1.0).is_err());
        assert!(Curvature::new(f64::NAN).is_err());
    }

    #[test]
    fn exp_origin_zero_and_unit() {
        let o = exp_lift_origin(&[0.0, 0.0, 0.0], c1()).unwrap();
        assert_eq!(o, LorentzPoint::origin(3, c1()));
        let v = [0.6, 0.8];
        let p = exp_lift_origin(&v, c1()).unwrap();
        let d = geodesic_distance(&LorentzPoint::origin(2, c1()), &p).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_clamps_large_norms() {
        let before = clamp_events();
        let p = exp_lift_origin(&[100.0, 0.0], c1()).unwrap();
        assert!(clamp_events() > before);
        assert!(p.time().is_finite());
        let d = geodesic_distance(&LorentzPoint::origin(2, c1()), &p).unwrap();
        assert!((d - MAX_TANGENT_NORM).abs() < 1e-6);
    }

    #[test]
    fn projection_trivial_cases() {
        let o = LorentzPoint::origin(2, c1());
        let u = AmbientVector::spatial_only(&[0.3, -0.2]);
        assert_eq!(tangent_project(&o, &u).unwrap().components, u);
        let z = exp_lift_origin(&[0.4, 0.1], c1()).unwrap();
        let t = tangent_project(&z, &z.to_ambient()).unwrap();
        assert!(t.components.time.abs() < 1e-12);
        assert!(t.components.spatial.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn exp_map_identity_and_consistency() {
        let z = exp_lift_origin(&[0.2, -0.7], c1()).unwrap();
        assert_eq!(exp_map(&z, &TangentVector::zero(z.clone())).unwrap(), z);
        let o = LorentzPoint::origin(2, c1());
        let v = TangentVector { base: o.clone(), components: AmbientVector::spatial_only(&[0.3, 0.4]) };
        let a = exp_map(&o, &v).unwrap();
        let b = exp_lift_origin(&[0.3, 0.4], c1()).unwrap();
        assert!((a.time() - b.time()).abs() < 1e-14);
        for (x, y) in a.spatial().iter().zip(b.spatial()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn log_map_branches() {
        let z = exp_lift_origin(&[0.5, 0.1], c1()).unwrap();
        let zero = log_map(&z, &z).unwrap();
        assert_eq!(zero.norm(), 0.0);
        let bad = LorentzPoint::from_raw(0.2, vec![0.0, 0.0], c1());
        assert!(matches!(log_map(&z, &bad), Err(Error::Domain(_))));
    }

    #[test]
    fn distance_properties() {
        let x = exp_lift_origin(&[0.5, 0.1], c1()).unwrap();
        assert_eq!(geodesic_distance(&x, &x).unwrap(), 0.0);
        let y = exp_lift_origin(&[-0.5, 0.9], c1()).unwrap();
        assert_eq!(
            geodesic_distance(&x, &y).unwrap().to_bits(),
            geodesic_distance(&y, &x).unwrap().to_bits()
        );
        let c2 = Curvature::new(2.0).unwrap();
        let w = exp_lift_origin(&[0.5, 0.1], c2).unwrap();
        assert!(matches!(geodesic_distance(&x, &w), Err(Error::CurvatureMismatch { .. })));
    }

    #[test]
    fn manifold_check_cases() {
        let o = LorentzPoint::origin(3, c1());
        assert!(manifold_check(&o, 1e-12));
        let flipped = LorentzPoint::from_raw(-1.0, vec![0.0; 3], c1());
        assert!(!manifold_check(&flipped, 1e-12));
    }

    #[test]
    fn sinhc_series_is_continuous() {
        let r = SINHC_SERIES_BELOW;
        let below = sinhc(r * (1.0 - 1e-12));
        let above = sinhc(r * (1.0 + 1e-12));
        assert!((below - above).abs() < 1e-15);
        assert_eq!(sinhc(0.0), 1.0);
    }

    #[test]
    fn batch_matches_uncached_points() {
        let rows = [0.1, 0.2, -0.4, 0.3, 1.5, -0.2];
        let batch = PointBatch::exp_lift_rows(&rows, 2, c1()).unwrap();
        let q = exp_lift_origin(&[0.3, 0.3], c1()).unwrap();
        for i in 0..batch.len() {
            let p = exp_lift_origin(&rows[2 * i..2 * i + 2], c1()).unwrap();
            assert_eq!(batch.point(i), p);
            assert_eq!(batch.spatial_norm(i), p.spatial_norm());
            assert_eq!(batch.distance_to(i, &q), geodesic_distance(&p, &q).unwrap());
        }
    }
}
