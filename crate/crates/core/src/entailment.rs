//! Entailment cones and the per-pixel loss stack.
//!
//! An anchor `x` owns a cone of half-aperture `asin(2K / (sqrt(c)|x'|))`.
//! The exterior angle `ext(x, y) = pi - angle(O, x, y)` measures how far a
//! point `y` strays from the cone axis; the entailment loss is the hinge
//! `max(0, ext - aper)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::lorentz::{distance_kernel, minkowski, Curvature, LorentzPoint, PointBatch};

/// Slack on `(c<x,y>_L)^2 - 1` below which the exterior angle is undefined.
pub const EXT_DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntailmentConfig {
    /// Cone constant `K`.
    pub k: f64,
    pub curvature: Curvature,
}

impl Default for EntailmentConfig {
    fn default() -> Self {
        Self { k: 0.1, curvature: Curvature::UNIT }
    }
}

impl EntailmentConfig {
    pub fn new(k: f64, curvature: Curvature) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Usage(format!("cone constant K must be > 0, got {k}")));
        }
        Ok(Self { k, curvature })
    }

    /// Smallest spatial norm at which the aperture is defined.
    pub fn min_anchor_norm(&self) -> f64 {
        2.0 * self.k / self.curvature.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    pub lambda_w: f64,
    pub alpha_txt: f64,
    pub alpha_img: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { tau: 0.1, lambda_w: 0.5, alpha_txt: 1.0, alpha_img: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Usage(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.lambda_w.is_finite() && self.lambda_w >= 0.0) {
            return Err(Error::Usage(format!("lambda_w must be >= 0, got {}", self.lambda_w)));
        }
        if !(self.alpha_txt > 0.0 && self.alpha_img > 0.0) {
            return Err(Error::Usage("embedding scales must be > 0".into()));
        }
        Ok(())
    }
}

/// Half-aperture kernel on a precomputed spatial norm.
#[inline]
pub(crate) fn aperture_kernel(norm: f64, k: f64, sqrt_c: f64) -> Option<f64> {
    let arg = 2.0 * k / (sqrt_c * norm);
    if !(arg <= 1.0 + 1e-12) {
        return None;
    }
    Some(arg.min(1.0).asin())
}

/// Half-aperture of the cone anchored at `x`.
pub fn half_aperture(x: &LorentzPoint, cfg: &EntailmentConfig) -> Result<f64> {
    cfg.curvature.ensure_same(x.curvature())?;
    let norm = x.spatial_norm();
    aperture_kernel(norm, cfg.k, cfg.curvature.sqrt()).ok_or_else(|| {
        Error::Domain(format!(
            "aperture undefined: |x'| = {norm} <= 2K/sqrt(c) = {}",
            cfg.min_anchor_norm()
        ))
    })
}

/// Exterior-angle kernel: anchor `(xt, xs)` with precomputed `|xs|`, point
/// `(yt, ys)`. Returns `None` when the configuration is degenerate.
#[inline]
pub(crate) fn ext_kernel(xt: f64, xs: &[f64], xnorm: f64, yt: f64, ys: &[f64], c: f64) -> Option<f64> {
    let cl = c * minkowski(xt, xs, yt, ys);
    let slack = cl * cl - 1.0;
    if !(slack > EXT_DEGENERACY_TOL) || xnorm == 0.0 {
        return None;
    }
    let arg = (yt + xt * cl) / (xnorm * slack.sqrt());
    Some(arg.clamp(-1.0, 1.0).acos())
}

/// Exterior angle at anchor `x` of the geodesic triangle `(O, x, y)`.
pub fn exterior_angle(x: &LorentzPoint, y: &LorentzPoint) -> Result<f64> {
    check_dim(x.dim(), y.dim())?;
    x.curvature().ensure_same(y.curvature())?;
    if x.is_origin() {
        return Err(Error::Degenerate("exterior angle with the anchor at the origin".into()));
    }
    ext_kernel(x.time(), x.spatial(), x.spatial_norm(), y.time(), y.spatial(), x.curvature().value())
        .ok_or_else(|| Error::Degenerate("(c<x,y>_L)^2 <= 1: anchor and point coincide".into()))
}

/// `max(0, ext(x, y) - aper(x))`.
pub fn entailment_loss(x: &LorentzPoint, y: &LorentzPoint, cfg: &EntailmentConfig) -> Result<f64> {
    let aper = half_aperture(x, cfg)?;
    let ext = exterior_angle(x, y)?;
    Ok((ext - aper).max(0.0))
}

/// Class anchors on the hyperboloid.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    anchors: PointBatch,
    labels: Vec<String>,
    apertures: Vec<f64>,
    descriptor_dim: usize,
}

impl PrototypeSet {
    /// Validates that every anchor admits a cone under `cfg`.
    pub fn new(
        anchors: Vec<LorentzPoint>,
        labels: Vec<String>,
        descriptor_dim: usize,
        cfg: &EntailmentConfig,
    ) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::Usage("prototype set needs at least one anchor".into()));
        }
        if labels.len() != anchors.len() {
            return Err(Error::Usage(format!(
                "{} labels for {} anchors",
                labels.len(),
                anchors.len()
            )));
        }
        let min_norm = cfg.min_anchor_norm();
        let mut apertures = Vec::with_capacity(anchors.len());
        for (a, label) in anchors.iter().zip(&labels) {
            cfg.curvature.ensure_same(a.curvature())?;
            let n = a.spatial_norm();
            if n <= min_norm {
                return Err(Error::Domain(format!(
                    "anchor '{label}' has |x'| = {n} <= 2K/sqrt(c) = {min_norm}; aperture undefined"
                )));
            }
            apertures.push(half_aperture(a, cfg)?);
        }
        Ok(Self { anchors: PointBatch::from_points(&anchors)?, labels, apertures, descriptor_dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn descriptor_dim(&self) -> usize {
        self.descriptor_dim
    }

    pub fn dim(&self) -> usize {
        self.anchors.dim()
    }

    pub fn curvature(&self) -> Curvature {
        self.anchors.curvature()
    }

    pub fn anchor(&self, i: usize) -> LorentzPoint {
        self.anchors.point(i)
    }

    pub fn anchors(&self) -> &PointBatch {
        &self.anchors
    }

    /// Cached half-aperture of anchor `i`.
    pub fn aperture(&self, i: usize) -> f64 {
        self.apertures[i]
    }

    /// Distance from anchor `i` to `y`, via cached anchor coordinates.
    #[inline]
    pub(crate) fn distance(&self, i: usize, yt: f64, ys: &[f64]) -> f64 {
        let a = &self.anchors;
        distance_kernel(a.time(i), a.spatial(i), yt, ys, a.curvature().value())
    }

    /// Exterior angle at anchor `i`; `None` when `y` coincides with it.
    #[inline]
    pub(crate) fn ext(&self, i: usize, yt: f64, ys: &[f64]) -> Option<f64> {
        let a = &self.anchors;
        ext_kernel(a.time(i), a.spatial(i), a.spatial_norm(i), yt, ys, a.curvature().value())
    }
}

/// `-d_L(x_i, y) / tau` for every prototype.
pub fn distance_logits(protos: &PrototypeSet, y: &LorentzPoint, cfg: &LossConfig) -> Result<Vec<f64>> {
    check_dim(protos.dim(), y.dim())?;
    protos.curvature().ensure_same(y.curvature())?;
    Ok((0..protos.len()).map(|i| -protos.distance(i, y.time(), y.spatial()) / cfg.tau).collect())
}

/// Softmax probabilities via the max-shifted form.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `log sum exp` with max shift.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// `-log softmax(logits)[label]`.
pub fn pixel_cross_entropy(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::Usage(format!("label {label} out of range for {} classes", logits.len())));
    }
    Ok((log_sum_exp(logits) - logits[label]).max(0.0))
}

/// Cross-entropy plus `lambda_w` times the entailment hinge against the
/// ground-truth prototype.
pub fn combined_pixel_loss(
    protos: &PrototypeSet,
    y: &LorentzPoint,
    label: usize,
    entail_cfg: &EntailmentConfig,
    loss_cfg: &LossConfig,
) -> Result<f64> {
    let logits = distance_logits(protos, y, loss_cfg)?;
    let ce = pixel_cross_entropy(&logits, label)?;
    if loss_cfg.lambda_w == 0.0 {
        return Ok(ce);
    }
    let entail = entailment_loss(&protos.anchor(label), y, entail_cfg)?;
    Ok(ce + loss_cfg.lambda_w * entail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorentz::exp_lift_origin;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn c1() -> Curvature {
        Curvature::UNIT
    }

    #[test]
    fn aperture_examples() {
        let cfg = EntailmentConfig::default();
        let x = exp_lift_origin(&[1.0, 0.0], c1()).unwrap();
        assert!((x.spatial_norm() - 1f64.sinh()).abs() < 1e-15);
        let a = half_aperture(&x, &cfg).unwrap();
        assert!((a - 0.17).abs() < 0.005, "aperture {a}");
        let edge = LorentzPoint::lift(vec![0.2, 0.0], c1()).unwrap();
        assert!((half_aperture(&edge, &cfg).unwrap() - FRAC_PI_2).abs() < 1e-12);
        let inside = LorentzPoint::lift(vec![0.1, 0.0], c1()).unwrap();
        assert!(matches!(half_aperture(&inside, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn aperture_halves_at_large_norm() {
        let cfg = EntailmentConfig::default();
        let at = |n: f64| half_aperture(&LorentzPoint::lift(vec![n], c1()).unwrap(), &cfg).unwrap();
        let ratio = at(200.0) / at(100.0);
        assert!((ratio - 0.5).abs() < 1e-5);
    }

    #[test]
    fn exterior_angle_on_the_ray() {
        let x = exp_lift_origin(&[0.6, 0.8], c1()).unwrap();
        let beyond = exp_lift_origin(&[1.2, 1.6], c1()).unwrap();
        let between = exp_lift_origin(&[0.3, 0.4], c1()).unwrap();
        assert!(exterior_angle(&x, &beyond).unwrap() < 1e-6);
        assert!((exterior_angle(&x, &between).unwrap() - PI).abs() < 1e-6);
        assert!(matches!(exterior_angle(&x, &x), Err(Error::Degenerate(_))));
        let o = LorentzPoint::origin(2, c1());
        assert!(matches!(exterior_angle(&o, &x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn entailment_hinge() {
        let cfg = EntailmentConfig::default();
        let x = exp_lift_origin(&[1.0, 0.0], c1()).unwrap();
        let inside = exp_lift_origin(&[2.0, 0.05], c1()).unwrap();
        assert!(exterior_angle(&x, &inside).unwrap() < half_aperture(&x, &cfg).unwrap());
        assert_eq!(entailment_loss(&x, &inside, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn nearer_point_in_wrong_direction_scores_higher() {
        // y1 is closer to the anchor but off-axis; y2 is farther but inside the cone.
        let cfg = EntailmentConfig::default();
        let x = exp_lift_origin(&[1.0, 0.0], c1()).unwrap();
        let y1 = exp_lift_origin(&[1.0, 0.35], c1()).unwrap();
        let y2 = exp_lift_origin(&[2.5, 0.0], c1()).unwrap();
        let d1 = crate::lorentz::geodesic_distance(&x, &y1).unwrap();
        let d2 = crate::lorentz::geodesic_distance(&x, &y2).unwrap();
        assert!(d1 < d2);
        let l1 = entailment_loss(&x, &y1, &cfg).unwrap();
        let l2 = entailment_loss(&x, &y2, &cfg).unwrap();
        assert!(l1 > l2, "{l1} vs {l2}");
        assert_eq!(l2, 0.0);
    }

    #[test]
    fn cross_entropy_examples() {
        let ce = pixel_cross_entropy(&[0.0, -10.0, -10.0], 0).unwrap();
        assert!(ce < 1e-4 && ce > 9e-5, "{ce}");
        let uniform = pixel_cross_entropy(&[0.3; 7], 2).unwrap();
        assert!((uniform - 7f64.ln()).abs() < 1e-12);
        let a = pixel_cross_entropy(&[0.1, -2.0, 0.7], 1).unwrap();
        let b = pixel_cross_entropy(&[100.1, 98.0, 100.7], 1).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(pixel_cross_entropy(&[0.0, 1.0], 2).is_err());
    }

    fn three_protos() -> PrototypeSet {
        let cfg = EntailmentConfig::default();
        let anchors = vec![
            exp_lift_origin(&[1.0, 0.0], c1()).unwrap(),
            exp_lift_origin(&[-0.5, 0.8], c1()).unwrap(),
            exp_lift_origin(&[-0.4, -0.9], c1()).unwrap(),
        ];
        PrototypeSet::new(anchors, vec!["a".into(), "b".into(), "c".into()], 2, &cfg).unwrap()
    }

    #[test]
    fn logits_peak_at_own_prototype() {
        let protos = three_protos();
        let cfg = LossConfig::default();
        let y = protos.anchor(1);
        let l = distance_logits(&protos, &y, &cfg).unwrap();
        assert_eq!(l[1], 0.0);
        assert!(l[0] < 0.0 && l[2] < 0.0);
        let cold = LossConfig { tau: 3.0, ..cfg };
        let y = exp_lift_origin(&[0.1, -0.3], c1()).unwrap();
        let argmax = |v: &[f64]| {
            v.iter().enumerate().fold(0, |b, (i, x)| if *x > v[b] { i } else { b })
        };
        assert_eq!(
            argmax(&distance_logits(&protos, &y, &cfg).unwrap()),
            argmax(&distance_logits(&protos, &y, &cold).unwrap())
        );
    }

    #[test]
    fn combined_loss_reductions() {
        let protos = three_protos();
        let ecfg = EntailmentConfig::default();
        let y = exp_lift_origin(&[0.2, 0.6], c1()).unwrap();
        let no_entail = LossConfig { lambda_w: 0.0, ..LossConfig::default() };
        let ce = pixel_cross_entropy(&distance_logits(&protos, &y, &no_entail).unwrap(), 0).unwrap();
        assert_eq!(combined_pixel_loss(&protos, &y, 0, &ecfg, &no_entail).unwrap(), ce);
        let in_cone = exp_lift_origin(&[2.0, 0.0], c1()).unwrap();
        let cfg = LossConfig::default();
        let ce = pixel_cross_entropy(&distance_logits(&protos, &in_cone, &cfg).unwrap(), 0).unwrap();
        assert_eq!(combined_pixel_loss(&protos, &in_cone, 0, &ecfg, &cfg).unwrap(), ce);
    }

    #[test]
    fn degenerate_anchor_rejected_at_construction() {
        let cfg = EntailmentConfig::default();
        let small = LorentzPoint::lift(vec![0.1, 0.0], c1()).unwrap();
        let err = PrototypeSet::new(vec![small], vec!["tiny".into()], 2, &cfg).unwrap_err();
        assert!(err.to_string().contains("tiny"));
    }
}
