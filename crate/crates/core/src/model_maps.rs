//! Isometries between the Lorentz, Poincaré-ball and Klein-ball models, and
//! the Einstein midpoint in Klein coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::lorentz::{norm_sq, Curvature, LorentzPoint};

/// Inputs with `c|p|^2` at or above this bound are rejected.
pub const BALL_GUARD: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincarePoint {
    p: Vec<f64>,
    curvature: Curvature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KleinPoint {
    k: Vec<f64>,
    curvature: Curvature,
}

fn check_ball(v: &[f64], c: Curvature, model: &str) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Usage(format!("{model} point needs at least one dimension")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{model} coordinate")));
    }
    let s = c.value() * norm_sq(v);
    if s >= BALL_GUARD {
        return Err(Error::Domain(format!("{model} point outside the ball: c|x|^2 = {s}")));
    }
    Ok(s)
}

impl PoincarePoint {
    pub fn new(p: Vec<f64>, curvature: Curvature) -> Result<Self> {
        check_ball(&p, curvature, "Poincaré")?;
        Ok(Self { p, curvature })
    }

    pub fn coords(&self) -> &[f64] {
        &self.p
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn norm(&self) -> f64 {
        norm_sq(&self.p).sqrt()
    }
}

impl KleinPoint {
    pub fn new(k: Vec<f64>, curvature: Curvature) -> Result<Self> {
        check_ball(&k, curvature, "Klein")?;
        Ok(Self { k, curvature })
    }

    pub fn coords(&self) -> &[f64] {
        &self.k
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    /// Lorentz factor `1/sqrt(1 - c|k|^2)`.
    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 - self.curvature.value() * norm_sq(&self.k)).sqrt()
    }
}

/// `p = x' / (x0 sqrt(c) + 1)`.
pub fn lorentz_to_poincare(x: &LorentzPoint) -> Result<PoincarePoint> {
    let c = x.curvature();
    let denom = x.time() * c.sqrt() + 1.0;
    PoincarePoint::new(x.spatial().iter().map(|v| v / denom).collect(), c)
}

/// `x' = 2p / (1 - c|p|^2)`, time re-derived on the hyperboloid.
pub fn poincare_to_lorentz(p: &PoincarePoint) -> Result<LorentzPoint> {
    let c = p.curvature;
    let s = check_ball(&p.p, c, "Poincaré")?;
    let k = 2.0 / (1.0 - s);
    LorentzPoint::lift(p.p.iter().map(|v| k * v).collect(), c)
}

/// `k = x' / (x0 sqrt(c))`.
pub fn lorentz_to_klein(x: &LorentzPoint) -> Result<KleinPoint> {
    let c = x.curvature();
    let denom = x.time() * c.sqrt();
    KleinPoint::new(x.spatial().iter().map(|v| v / denom).collect(), c)
}

/// `x0 = 1/sqrt(c (1 - c|k|^2))`, `x' = x0 sqrt(c) k`.
pub fn klein_to_lorentz(k: &KleinPoint) -> Result<LorentzPoint> {
    let c = k.curvature;
    let s = check_ball(&k.k, c, "Klein")?;
    let x0 = 1.0 / (c.value() * (1.0 - s)).sqrt();
    let f = x0 * c.sqrt();
    LorentzPoint::lift(k.k.iter().map(|v| f * v).collect(), c)
}

/// `p = k / (1 + sqrt(1 - c|k|^2))`.
pub fn klein_to_poincare(k: &KleinPoint) -> Result<PoincarePoint> {
    let s = check_ball(&k.k, k.curvature, "Klein")?;
    let denom = 1.0 + (1.0 - s).sqrt();
    PoincarePoint::new(k.k.iter().map(|v| v / denom).collect(), k.curvature)
}

/// `k = 2p / (1 + c|p|^2)`.
pub fn poincare_to_klein(p: &PoincarePoint) -> Result<KleinPoint> {
    let s = check_ball(&p.p, p.curvature, "Poincaré")?;
    let f = 2.0 / (1.0 + s);
    KleinPoint::new(p.p.iter().map(|v| f * v).collect(), p.curvature)
}

/// Gamma-weighted Klein average `sum(g_i k_i) / sum(g_i)`.
pub fn einstein_midpoint(points: &[KleinPoint]) -> Result<KleinPoint> {
    let first = points
        .first()
        .ok_or_else(|| Error::Usage("Einstein midpoint of an empty set".into()))?;
    let dim = first.k.len();
    let c = first.curvature;
    let mut num = vec![0.0; dim];
    let mut den = 0.0;
    for k in points {
        check_dim(dim, k.k.len())?;
        c.ensure_same(k.curvature)?;
        let g = k.gamma();
        den += g;
        for (n, v) in num.iter_mut().zip(&k.k) {
            *n += g * v;
        }
    }
    KleinPoint::new(num.into_iter().map(|n| n / den).collect(), c)
}

/// Hyperbolic mean of Lorentz points via the Klein model.
pub fn hyperbolic_mean(points: &[LorentzPoint]) -> Result<LorentzPoint> {
    if points.is_empty() {
        return Err(Error::Usage("hyperbolic mean of an empty set".into()));
    }
    let klein = points.iter().map(lorentz_to_klein).collect::<Result<Vec<_>>>()?;
    klein_to_lorentz(&einstein_midpoint(&klein)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorentz::{exp_lift_origin, geodesic_distance};

    fn c1() -> Curvature {
        Curvature::UNIT
    }

    #[test]
    fn origin_maps_to_zero() {
        let o = LorentzPoint::origin(3, c1());
        assert!(lorentz_to_poincare(&o).unwrap().coords().iter().all(|&v| v == 0.0));
        assert!(lorentz_to_klein(&o).unwrap().coords().iter().all(|&v| v == 0.0));
        let k0 = KleinPoint::new(vec![0.0; 3], c1()).unwrap();
        assert_eq!(klein_to_lorentz(&k0).unwrap(), o);
        let p0 = PoincarePoint::new(vec![0.0; 3], c1()).unwrap();
        assert_eq!(klein_to_poincare(&k0).unwrap(), p0);
        assert_eq!(poincare_to_klein(&p0).unwrap(), k0);
    }

    #[test]
    fn norm_order_is_preserved() {
        let a = exp_lift_origin(&[0.3, 0.1], c1()).unwrap();
        let b = exp_lift_origin(&[0.9, -1.2], c1()).unwrap();
        assert!(a.spatial_norm() < b.spatial_norm());
        assert!(lorentz_to_poincare(&a).unwrap().norm() < lorentz_to_poincare(&b).unwrap().norm());
    }

    #[test]
    fn poincare_to_klein_substitution() {
        // c|p|^2 = 0.25
        let p = PoincarePoint::new(vec![0.5, 0.0], c1()).unwrap();
        let k = poincare_to_klein(&p).unwrap();
        assert!((k.coords()[0] - 1.0 / 1.25).abs() < 1e-15);
        assert_eq!(k.coords()[1], 0.0);
    }

    #[test]
    fn boundary_inputs_are_rejected() {
        assert!(matches!(PoincarePoint::new(vec![1.0, 0.0], c1()), Err(Error::Domain(_))));
        let c4 = Curvature::new(4.0).unwrap();
        assert!(KleinPoint::new(vec![0.5, 0.0], c4).is_err());
        assert!(KleinPoint::new(vec![0.49, 0.0], c4).is_ok());
    }

    #[test]
    fn midpoint_trivial_cases() {
        let k = KleinPoint::new(vec![0.3, -0.4], c1()).unwrap();
        let m = einstein_midpoint(&[k.clone(), k.clone()]).unwrap();
        for (a, b) in m.coords().iter().zip(k.coords()) {
            assert!((a - b).abs() < 1e-15);
        }
        let neg = KleinPoint::new(vec![-0.3, 0.4], c1()).unwrap();
        let z = einstein_midpoint(&[k.clone(), neg.clone()]).unwrap();
        assert!(z.coords().iter().all(|v| v.abs() < 1e-15));
        let j = KleinPoint::new(vec![0.1, 0.7], c1()).unwrap();
        let a = einstein_midpoint(&[k.clone(), neg.clone(), j.clone()]).unwrap();
        let b = einstein_midpoint(&[j, k, neg]).unwrap();
        for (x, y) in a.coords().iter().zip(b.coords()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(matches!(einstein_midpoint(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn mean_of_single_and_symmetric_pair() {
        let x = exp_lift_origin(&[0.4, 0.9], c1()).unwrap();
        let m = hyperbolic_mean(std::slice::from_ref(&x)).unwrap();
        assert!(geodesic_distance(&m, &x).unwrap() < 1e-12);
        // mirror images about the first axis
        let a = exp_lift_origin(&[1.0, 0.5], c1()).unwrap();
        let b = exp_lift_origin(&[1.0, -0.5], c1()).unwrap();
        let m = hyperbolic_mean(&[a, b]).unwrap();
        assert!(m.spatial()[1].abs() < 1e-15);
        assert!(m.spatial()[0] > 0.0);
    }
}
