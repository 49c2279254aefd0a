#![allow(dead_code)]

use lsk_core::lorentz::{exp_lift_origin, lift_point, tangent_project, AmbientVector, LorentzPoint, TangentVector};
use lsk_core::Curvature;
use rand::Rng;

pub fn uniform_vec<R: Rng>(r: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| r.random_range(-scale..scale)).collect()
}

/// A point whose spatial coordinates are uniform in `[-scale, scale]^dim`.
pub fn random_point<R: Rng>(r: &mut R, dim: usize, scale: f64, c: Curvature) -> LorentzPoint {
    lift_point(&uniform_vec(r, dim, scale), c).unwrap()
}

/// A random tangent vector at `z` with Lorentzian norm in `[0, max_norm]`.
pub fn random_tangent<R: Rng>(r: &mut R, z: &LorentzPoint, max_norm: f64) -> TangentVector {
    let u = AmbientVector::new(r.random_range(-1.0..1.0), uniform_vec(r, z.dim(), 1.0)).unwrap();
    let mut v = tangent_project(z, &u).unwrap();
    let n = v.norm();
    if n > 0.0 {
        let s = r.random_range(0.0..max_norm) / n;
        v.components.time *= s;
        v.components.spatial.iter_mut().for_each(|x| *x *= s);
    }
    v
}

pub fn tangent_diff(a: &TangentVector, b: &TangentVector) -> f64 {
    let dt = a.components.time - b.components.time;
    let ds: f64 = a.components.spatial.iter().zip(&b.components.spatial).map(|(x, y)| (x - y) * (x - y)).sum();
    (dt * dt + ds).sqrt()
}

pub fn exp_point(v: &[f64]) -> LorentzPoint {
    exp_lift_origin(v, Curvature::UNIT).unwrap()
}

/// Poincaré-ball distance, `acosh(1 + 2c|p-q|^2 / ((1-c|p|^2)(1-c|q|^2))) / sqrt(c)`.
pub fn poincare_distance(p: &[f64], q: &[f64], c: f64) -> f64 {
    let n2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let diff: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
    let arg = 1.0 + 2.0 * c * diff / ((1.0 - c * n2(p)) * (1.0 - c * n2(q)));
    arg.acosh() / c.sqrt()
}

/// Largest coordinate deviation between two equal-length slices.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `r cosh r - sinh r`, by its leading series terms below `1e-3` where the
/// direct difference cancels to zero.
pub fn cosh_sinh_gap(r: f64) -> f64 {
    if r < 1e-3 {
        r * r * r * (1.0 / 3.0 + r * r / 30.0)
    } else {
        r * r.cosh() - r.sinh()
    }
}
