//! Closed-form gradients for the Lorentz losses (curvature fixed at 1),
//! the exponential-map Jacobian, Euclidean baselines, a central-difference
//! oracle, and the distance-vs-angle gradient interaction study.
//!
//! All spatial gradients treat the time component as dependent:
//! `x0 = sqrt(1 + |x'|^2)`, so `d x0 / d x_j = x_j / x0`.

use serde::{Deserialize, Serialize};

use crate::entailment::ext_kernel;
use crate::error::{check_dim, Error, Result};
use crate::linalg::Mat;
use crate::lorentz::{
    distance_kernel, dot, exp_lift_origin, minkowski, norm_sq, sinhc, Curvature, LorentzPoint,
    MAX_TANGENT_NORM,
};
use crate::par::{self, Exec};
use crate::rng;

/// Central-difference step used by the gradient reports.
pub const FD_STEP: f64 = 1e-6;

/// Current schema tag of [`GradientReport`] documents.
pub const GRADIENT_REPORT_SCHEMA: &str = "lsk.gradient_report/1";

fn ensure_unit(x: &LorentzPoint) -> Result<()> {
    if x.curvature() != Curvature::UNIT {
        return Err(Error::Usage(format!(
            "closed-form gradients assume c = 1, got c = {}",
            x.curvature().value()
        )));
    }
    Ok(())
}

fn ensure_pair(x: &LorentzPoint, y: &LorentzPoint) -> Result<()> {
    check_dim(x.dim(), y.dim())?;
    ensure_unit(x)?;
    ensure_unit(y)
}

/// Accumulates `scale * d d_L(x, y) / d x'` into `out`. Returns `false`
/// (leaving `out` untouched) when the points coincide.
#[inline]
pub(crate) fn distance_grad_kernel(xt: f64, xs: &[f64], yt: f64, ys: &[f64], scale: f64, out: &mut [f64]) -> bool {
    let lu = -minkowski(xt, xs, yt, ys);
    let den2 = lu * lu - 1.0;
    if !(lu > 1.0 + 1e-12) || den2 <= 0.0 {
        return false;
    }
    let k = -scale / den2.sqrt();
    let r = yt / xt;
    for ((o, &xj), &yj) in out.iter_mut().zip(xs).zip(ys) {
        *o += k * (yj - r * xj);
    }
    true
}

/// Gradient of `d_L(x, y)` with respect to the spatial coordinates of `x`.
pub fn grad_lorentz_distance(x: &LorentzPoint, y: &LorentzPoint) -> Result<Vec<f64>> {
    ensure_pair(x, y)?;
    let mut g = vec![0.0; x.dim()];
    if distance_grad_kernel(x.time(), x.spatial(), y.time(), y.spatial(), 1.0, &mut g) {
        Ok(g)
    } else {
        Err(Error::Degenerate("distance gradient undefined at coincident points".into()))
    }
}

/// Accumulates `scale * d ext(anchor, point) / d point'` into `out`.
///
/// With `L = <point, anchor>_L`, `N = x0 + y0 L`, `A = N / (|y'| sqrt(L^2-1))`
/// (`x` the point, `y` the anchor):
/// `1/sqrt(1-A^2) * 1/(|y'| sqrt(L^2-1)) * [-x_j/x0 + (y0 + x0 L)/(L^2-1) * (y_j - y0 x_j / x0)]`.
#[inline]
pub(crate) fn ext_point_grad_kernel(
    xt: f64,
    xs: &[f64],
    yt: f64,
    ys: &[f64],
    ynorm: f64,
    scale: f64,
    out: &mut [f64],
) -> bool {
    let l = minkowski(xt, xs, yt, ys);
    let l2m1 = l * l - 1.0;
    if !(l2m1 > 1e-12) || ynorm == 0.0 {
        return false;
    }
    let d = l2m1.sqrt();
    let a = (xt + yt * l) / (ynorm * d);
    let one_minus = 1.0 - a * a;
    if !(one_minus > 1e-18) {
        return false;
    }
    let pre = scale / (one_minus.sqrt() * ynorm * d);
    let m = (yt + xt * l) / l2m1;
    let r = yt / xt;
    for ((o, &xj), &yj) in out.iter_mut().zip(xs).zip(ys) {
        *o += pre * (-xj / xt + m * (yj - r * xj));
    }
    true
}

/// Gradient of `ext(anchor, point)` with respect to `point'`.
pub fn grad_exterior_angle(point: &LorentzPoint, anchor: &LorentzPoint) -> Result<Vec<f64>> {
    ensure_pair(point, anchor)?;
    let a = exterior_angle_cos(point, anchor)?;
    if a.abs() >= 1.0 - 1e-9 {
        return Err(Error::Degenerate(format!("exterior angle near 0 or pi (cos = {a})")));
    }
    let mut g = vec![0.0; point.dim()];
    if ext_point_grad_kernel(
        point.time(),
        point.spatial(),
        anchor.time(),
        anchor.spatial(),
        anchor.spatial_norm(),
        1.0,
        &mut g,
    ) {
        Ok(g)
    } else {
        Err(Error::Degenerate("exterior-angle gradient undefined".into()))
    }
}

fn exterior_angle_cos(point: &LorentzPoint, anchor: &LorentzPoint) -> Result<f64> {
    let l = point.inner(anchor);
    let l2m1 = l * l - 1.0;
    let n = anchor.spatial_norm();
    if !(l2m1 > 1e-12) || n == 0.0 {
        return Err(Error::Degenerate("exterior angle undefined for this pair".into()));
    }
    Ok((point.time() + anchor.time() * l) / (n * l2m1.sqrt()))
}

/// Accumulates `scale * d ext(anchor, point) / d anchor'` into `out`.
#[inline]
pub(crate) fn ext_anchor_grad_kernel(
    xt: f64,
    xs: &[f64],
    xnorm: f64,
    yt: f64,
    ys: &[f64],
    scale: f64,
    out: &mut [f64],
) -> bool {
    // x is the anchor, y the point
    let l = minkowski(xt, xs, yt, ys);
    let l2m1 = l * l - 1.0;
    if !(l2m1 > 1e-12) || xnorm == 0.0 {
        return false;
    }
    let s = l2m1.sqrt();
    let d = xnorm * s;
    let n = yt + xt * l;
    let a = n / d;
    let one_minus = 1.0 - a * a;
    if !(one_minus > 1e-18) {
        return false;
    }
    let k = -scale / one_minus.sqrt();
    let r = yt / xt;
    for ((o, &xj), &yj) in out.iter_mut().zip(xs).zip(ys) {
        let dl = yj - r * xj;
        let dn = xj / xt * l + xt * dl;
        let dd = xj / xnorm * s + xnorm * l / s * dl;
        *o += k * (dn - a * dd) / d;
    }
    true
}

/// Gradient of `ext(anchor, point)` with respect to `anchor'`.
pub fn grad_exterior_angle_anchor(anchor: &LorentzPoint, point: &LorentzPoint) -> Result<Vec<f64>> {
    ensure_pair(anchor, point)?;
    let a = exterior_angle_cos(point, anchor)?;
    if a.abs() >= 1.0 - 1e-9 {
        return Err(Error::Degenerate(format!("exterior angle near 0 or pi (cos = {a})")));
    }
    let mut g = vec![0.0; anchor.dim()];
    if ext_anchor_grad_kernel(
        anchor.time(),
        anchor.spatial(),
        anchor.spatial_norm(),
        point.time(),
        point.spatial(),
        1.0,
        &mut g,
    ) {
        Ok(g)
    } else {
        Err(Error::Degenerate("exterior-angle gradient undefined".into()))
    }
}

/// `sign((-x0 <x,y>_L) - y0)`: +1 when the distance and angle gradients of
/// a point `x` against anchor `y` point the same way, -1 when they conflict.
pub fn grad_sign_predictor(x: &LorentzPoint, y: &LorentzPoint) -> Result<i8> {
    ensure_pair(x, y)?;
    let s = -x.time() * x.inner(y) - y.time();
    Ok(if s > 0.0 {
        1
    } else if s < 0.0 {
        -1
    } else {
        0
    })
}

/// `(cosh r - sinh(r)/r) / r^2`, with its series near zero.
#[inline]
pub(crate) fn coupling_coefficient(r: f64) -> f64 {
    if r < 1e-3 {
        1.0 / 3.0 + r * r / 30.0
    } else {
        (r.cosh() - r.sinh() / r) / (r * r)
    }
}

/// Jacobian of `v -> expm_O([0, v])` at curvature 1: `(n+1) x n`, row 0 is
/// the time component.
pub fn exp_map_jacobian(v: &[f64]) -> Result<Mat> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("tangent coordinate".into()));
    }
    let n = v.len();
    let r = norm_sq(v).sqrt();
    let a = sinhc(r);
    let b = coupling_coefficient(r);
    let mut j = Mat::zeros(n + 1, n);
    for l in 0..n {
        j[(0, l)] = v[l] * a;
    }
    for row in 0..n {
        for l in 0..n {
            let delta = if row == l { a } else { 0.0 };
            j[(row + 1, l)] = delta + b * v[row] * v[l];
        }
    }
    Ok(j)
}

/// Vector-Jacobian product through the spatial part of `expm_O`, including
/// the magnitude clamp: writes `(d y' / d v)^T g` into `out`.
pub(crate) fn exp_origin_vjp(v: &[f64], g: &[f64], sqrt_c: f64, out: &mut [f64]) {
    let norm = norm_sq(v).sqrt();
    let rho = sqrt_c * norm;
    if rho > MAX_TANGENT_NORM {
        // y' = f(kappa v), kappa = M / (sqrt(c)|v|); radial motion is frozen
        let kappa = MAX_TANGENT_NORM / rho;
        let w: Vec<f64> = v.iter().map(|x| kappa * x).collect();
        let mut inner = vec![0.0; v.len()];
        exp_origin_vjp(&w, g, sqrt_c, &mut inner);
        let unit: Vec<f64> = v.iter().map(|x| x / norm).collect();
        let proj = dot(&unit, &inner);
        for ((o, i), u) in out.iter_mut().zip(&inner).zip(&unit) {
            *o = kappa * (i - proj * u);
        }
        return;
    }
    let a = sinhc(rho);
    let b = sqrt_c * sqrt_c * coupling_coefficient(rho);
    let vg = dot(v, g);
    for ((o, &gi), &vi) in out.iter_mut().zip(g).zip(v) {
        *o = a * gi + b * vi * vg;
    }
}

pub fn grad_dot(_x: &[f64], y: &[f64]) -> Vec<f64> {
    y.to_vec()
}

pub fn grad_euclidean_distance(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.len(), y.len())?;
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = norm_sq(&diff).sqrt();
    if n == 0.0 {
        return Err(Error::Domain("Euclidean distance gradient at coincident points".into()));
    }
    Ok(diff.into_iter().map(|d| d / n).collect())
}

/// `(y |x|^2 - (x.y) x) / (|y| |x|^3)`.
pub fn grad_cosine_similarity(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_dim(x.len(), y.len())?;
    let nx2 = norm_sq(x);
    let ny = norm_sq(y).sqrt();
    if nx2 == 0.0 || ny == 0.0 {
        return Err(Error::Domain("cosine similarity of a zero vector".into()));
    }
    let nx = nx2.sqrt();
    let xy = dot(x, y);
    let den = ny * nx2 * nx;
    Ok(x.iter().zip(y).map(|(xi, yi)| (yi * nx2 - xy * xi) / den).collect())
}

pub fn cosine_similarity(x: &[f64], y: &[f64]) -> f64 {
    let den = (norm_sq(x) * norm_sq(y)).sqrt();
    if den == 0.0 {
        0.0
    } else {
        dot(x, y) / den
    }
}

/// Euclidean analogue of the exterior angle: the angle at `anchor` between
/// the ray from the origin and the segment to `point`.
pub fn euclidean_exterior_angle(anchor: &[f64], point: &[f64]) -> Result<f64> {
    check_dim(anchor.len(), point.len())?;
    let u: Vec<f64> = point.iter().zip(anchor).map(|(p, a)| p - a).collect();
    if norm_sq(&u) == 0.0 || norm_sq(anchor) == 0.0 {
        return Err(Error::Degenerate("Euclidean exterior angle undefined".into()));
    }
    Ok(cosine_similarity(&u, anchor).clamp(-1.0, 1.0).acos())
}

/// Gradient of [`euclidean_exterior_angle`] with respect to `point`.
pub fn grad_euclidean_exterior_angle(anchor: &[f64], point: &[f64]) -> Result<Vec<f64>> {
    check_dim(anchor.len(), point.len())?;
    let u: Vec<f64> = point.iter().zip(anchor).map(|(p, a)| p - a).collect();
    let cos = cosine_similarity(&u, anchor);
    let sin = (1.0 - cos * cos).max(0.0).sqrt();
    if sin < 1e-12 {
        return Err(Error::Degenerate("Euclidean exterior angle at 0 or pi".into()));
    }
    let g = grad_cosine_similarity(&u, anchor)?;
    Ok(g.into_iter().map(|v| -v / sin).collect())
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_difference_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Usage("finite-difference step must be > 0".into()));
    }
    let mut probe = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// `|a - b| / max(|b|, floor)` in the Euclidean norm.
pub fn relative_error(analytic: &[f64], reference: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    diff / norm_sq(reference).sqrt().max(1e-8)
}

/// Options of the gradient interaction study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientReportConfig {
    pub sample_count: usize,
    pub seed: u64,
    pub dim: usize,
    pub fd_step: f64,
    /// Test hook: negate the analytic angle gradient.
    #[serde(default)]
    pub inject_sign_flip: bool,
}

impl GradientReportConfig {
    pub fn new(sample_count: usize, seed: u64) -> Self {
        Self { sample_count, seed, dim: 3, fd_step: FD_STEP, inject_sign_flip: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub index: usize,
    pub point: Vec<f64>,
    pub anchor: Vec<f64>,
    pub grad_distance: Vec<f64>,
    pub grad_angle: Vec<f64>,
    pub fd_distance: Vec<f64>,
    pub fd_angle: Vec<f64>,
    pub rel_error_distance: f64,
    pub rel_error_angle: f64,
    pub cosine: f64,
    pub predicted_sign: i8,
    pub euclidean_cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub schema: String,
    pub seed: u64,
    pub dim: usize,
    pub fd_step: f64,
    pub sample_count: usize,
    pub max_rel_error: f64,
    pub sign_agreement_rate: f64,
    /// Samples with `|cos| > 1e-8`, the denominator of the agreement rate.
    pub sign_samples: usize,
    pub euclidean_orthogonality_violations: usize,
    pub max_euclidean_abs_cosine: f64,
    pub records: Vec<GradientSample>,
}

impl GradientReport {
    /// The acceptance rule: analytic gradients within `1e-5` of finite
    /// differences and the sign theorem holding on every counted sample.
    pub fn passes(&self) -> bool {
        self.max_rel_error <= 1e-5
            && self.sign_agreement_rate == 1.0
            && self.euclidean_orthogonality_violations == 0
    }
}

/// Draws a non-degenerate (point, anchor) pair for sample `index`.
pub(crate) fn sample_pair(seed: u64, index: usize, dim: usize) -> (LorentzPoint, LorentzPoint) {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng::stream(seed, index as u64);
    loop {
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> {
            let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
            let n = norm_sq(&dir).sqrt().max(1e-300);
            let radius = r.random_range(lo..hi);
            dir.into_iter().map(|v| v * radius / n).collect()
        };
        let xv = draw(0.1, 2.5);
        let yv = draw(0.3, 2.5);
        let x = exp_lift_origin(&xv, Curvature::UNIT).expect("finite sample");
        let y = exp_lift_origin(&yv, Curvature::UNIT).expect("finite sample");
        let d = distance_kernel(x.time(), x.spatial(), y.time(), y.spatial(), 1.0);
        let Some(ext) = ext_kernel(y.time(), y.spatial(), y.spatial_norm(), x.time(), x.spatial(), 1.0)
        else {
            continue;
        };
        // keep clear of the derivational degeneracies
        if d > 1e-2 && ext.cos().abs() < 1.0 - 1e-3 {
            return (x, y);
        }
    }
}

fn spatial_distance_objective(y: &LorentzPoint) -> impl Fn(&[f64]) -> f64 + '_ {
    move |xs: &[f64]| {
        let xt = (1.0 + norm_sq(xs)).sqrt();
        distance_kernel(xt, xs, y.time(), y.spatial(), 1.0)
    }
}

fn spatial_angle_objective(anchor: &LorentzPoint) -> impl Fn(&[f64]) -> f64 + '_ {
    move |xs: &[f64]| {
        let xt = (1.0 + norm_sq(xs)).sqrt();
        ext_kernel(anchor.time(), anchor.spatial(), anchor.spatial_norm(), xt, xs, 1.0).unwrap_or(f64::NAN)
    }
}

fn one_sample(cfg: &GradientReportConfig, index: usize) -> Result<GradientSample> {
    let (x, y) = sample_pair(cfg.seed, index, cfg.dim);
    let gd = grad_lorentz_distance(&x, &y)?;
    let mut ga = grad_exterior_angle(&x, &y)?;
    if cfg.inject_sign_flip {
        ga.iter_mut().for_each(|v| *v = -*v);
    }
    let fd_d = finite_difference_gradient(spatial_distance_objective(&y), x.spatial(), cfg.fd_step)?;
    let fd_a = finite_difference_gradient(spatial_angle_objective(&y), x.spatial(), cfg.fd_step)?;
    let eg_d = grad_euclidean_distance(x.spatial(), y.spatial())?;
    let eg_a = grad_euclidean_exterior_angle(y.spatial(), x.spatial())?;
    Ok(GradientSample {
        index,
        rel_error_distance: relative_error(&gd, &fd_d),
        rel_error_angle: relative_error(&ga, &fd_a),
        cosine: cosine_similarity(&gd, &ga),
        predicted_sign: grad_sign_predictor(&x, &y)?,
        euclidean_cosine: cosine_similarity(&eg_d, &eg_a),
        point: x.into_spatial(),
        anchor: y.into_spatial(),
        grad_distance: gd,
        grad_angle: ga,
        fd_distance: fd_d,
        fd_angle: fd_a,
    })
}

/// Samples point/anchor pairs and checks the analytic gradients, the sign
/// theorem, and Euclidean orthogonality on each.
pub fn gradient_interaction_report(cfg: &GradientReportConfig) -> Result<GradientReport> {
    gradient_interaction_report_with(Exec::default(), cfg)
}

pub fn gradient_interaction_report_with(exec: Exec, cfg: &GradientReportConfig) -> Result<GradientReport> {
    if cfg.sample_count == 0 {
        return Err(Error::Usage("sample_count must be > 0".into()));
    }
    if cfg.dim < 2 {
        return Err(Error::Usage("gradient study needs dim >= 2".into()));
    }
    let records = par::try_map_range(exec, cfg.sample_count, |i| one_sample(cfg, i))?;
    let mut max_rel = 0.0f64;
    let mut counted = 0usize;
    let mut agree = 0usize;
    let mut violations = 0usize;
    let mut max_euc = 0.0f64;
    for r in &records {
        max_rel = max_rel.max(r.rel_error_distance).max(r.rel_error_angle);
        if r.cosine.abs() > 1e-8 {
            counted += 1;
            if r.cosine.signum() as i8 == r.predicted_sign {
                agree += 1;
            }
        }
        max_euc = max_euc.max(r.euclidean_cosine.abs());
        if r.euclidean_cosine.abs() >= 1e-8 {
            violations += 1;
        }
    }
    Ok(GradientReport {
        schema: GRADIENT_REPORT_SCHEMA.to_string(),
        seed: cfg.seed,
        dim: cfg.dim,
        fd_step: cfg.fd_step,
        sample_count: cfg.sample_count,
        max_rel_error: max_rel,
        sign_agreement_rate: if counted == 0 { 1.0 } else { agree as f64 / counted as f64 },
        sign_samples: counted,
        euclidean_orthogonality_violations: violations,
        max_euclidean_abs_cosine: max_euc,
        records,
    })
}
