mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;

use common::*;
use lsk_core::entailment::{
    distance_logits, entailment_loss, exterior_angle, half_aperture, EntailmentConfig, LossConfig, PrototypeSet,
};
use lsk_core::grad::{exp_map_jacobian, grad_exterior_angle, grad_lorentz_distance, grad_sign_predictor, cosine_similarity};
use lsk_core::hyperbolicity::{delta_brute_force, delta_from_matrix, delta_rel_from_matrix, DistanceMatrix};
use lsk_core::lorentz::{exp_lift_origin, exp_map, geodesic_distance, lift_point, log_map, manifold_check, LorentzPoint};
use lsk_core::maskhead::{hungarian_match, sigmoid, MaskHeadConfig};
use lsk_core::model_maps::*;
use lsk_core::segtoy::{infer_distance, EmbeddingGrid, Prototypes};
use lsk_core::uncertainty::{class_confidence, radius_uncertainty_as, RadiusForm};
use lsk_core::{Curvature, Exec, PointBatch};

fn spatial(max_dim: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, 1..=max_dim)
}

fn pair(max_dim: usize, scale: f64) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(move |d| (prop::collection::vec(-scale..scale, d), prop::collection::vec(-scale..scale, d)))
}

fn curvature() -> impl Strategy<Value = Curvature> {
    prop_oneof![Just(1.0), 0.25..4.0f64].prop_map(|c| Curvature::new(c).unwrap())
}

/// Position of `x` in ascending order, ties sharing a rank.
fn ranks(v: &[f64]) -> Vec<usize> {
    v.iter().map(|x| v.iter().filter(|y| *y < x).count()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn constructors_land_on_the_manifold(v in spatial(6, 3.0), c in curvature()) {
        prop_assert!(manifold_check(&lift_point(&v, c).unwrap(), 1e-8));
        // absolute tolerance; x0^2 outgrows it past radius ~6
        let r = c.value().sqrt() * v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r <= 6.0 {
            prop_assert!(manifold_check(&exp_lift_origin(&v, c).unwrap(), 1e-8));
        }
    }

    #[test]
    fn exp_log_round_trip(seed in any::<u64>(), dim in 1usize..6) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z = random_point(&mut r, dim, 1.5, Curvature::UNIT);
        let v = random_tangent(&mut r, &z, 6.0);
        let back = log_map(&z, &exp_map(&z, &v).unwrap()).unwrap();
        prop_assert!(tangent_diff(&back, &v) <= 1e-7 * v.norm().max(1.0));
    }

    #[test]
    fn distance_from_origin_is_tangent_norm(v in spatial(6, 4.0), c in curvature()) {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(c.value().sqrt() * n < 12.0);
        let d = geodesic_distance(&LorentzPoint::origin(v.len(), c), &exp_lift_origin(&v, c).unwrap()).unwrap();
        prop_assert!((d - n).abs() <= 1e-8 * n.max(1.0), "{} vs {}", d, n);
    }

    #[test]
    fn distance_is_bitwise_symmetric((a, b) in pair(6, 3.0)) {
        let (x, y) = (lift_point(&a, Curvature::UNIT).unwrap(), lift_point(&b, Curvature::UNIT).unwrap());
        prop_assert_eq!(geodesic_distance(&x, &y).unwrap().to_bits(), geodesic_distance(&y, &x).unwrap().to_bits());
    }

    #[test]
    fn mixed_curvature_is_rejected(v in spatial(4, 2.0)) {
        let x = lift_point(&v, Curvature::UNIT).unwrap();
        let y = lift_point(&v, Curvature::new(2.0).unwrap()).unwrap();
        prop_assert!(geodesic_distance(&x, &y).is_err());
    }

    #[test]
    fn model_maps_are_inverse_isometries((a, b) in pair(5, 2.5), c in curvature()) {
        let (x, y) = (lift_point(&a, c).unwrap(), lift_point(&b, c).unwrap());
        let p = lorentz_to_poincare(&x).unwrap();
        let k = lorentz_to_klein(&x).unwrap();
        prop_assert!(max_abs_diff(poincare_to_lorentz(&p).unwrap().spatial(), x.spatial()) < 1e-10);
        prop_assert!(max_abs_diff(klein_to_lorentz(&k).unwrap().spatial(), x.spatial()) < 1e-10);
        prop_assert!(max_abs_diff(klein_to_poincare(&k).unwrap().coords(), p.coords()) < 1e-10);
        prop_assert!(max_abs_diff(poincare_to_klein(&p).unwrap().coords(), k.coords()) < 1e-10);
        let q = lorentz_to_poincare(&y).unwrap();
        let dl = geodesic_distance(&x, &y).unwrap();
        prop_assert!((poincare_distance(p.coords(), q.coords(), c.value()) - dl).abs() < 1e-8);
    }

    #[test]
    fn einstein_midpoint_stays_inside(pts in prop::collection::vec(prop::collection::vec(-0.7..0.7f64, 3), 1..12)) {
        let ks: Vec<KleinPoint> = pts.iter().filter_map(|p| KleinPoint::new(p.clone(), Curvature::UNIT).ok()).collect();
        prop_assume!(!ks.is_empty());
        let m = einstein_midpoint(&ks).unwrap();
        prop_assert!(m.gamma().is_finite());
    }

    #[test]
    fn cone_quantities_stay_in_range((a, b) in pair(5, 3.0)) {
        let cfg = EntailmentConfig::default();
        let (x, y) = (lift_point(&a, Curvature::UNIT).unwrap(), lift_point(&b, Curvature::UNIT).unwrap());
        if let Ok(e) = exterior_angle(&x, &y) {
            prop_assert!((0.0..=PI).contains(&e));
        }
        if let Ok(h) = half_aperture(&x, &cfg) {
            prop_assert!(h > 0.0 && h <= PI / 2.0);
            if let Ok(l) = entailment_loss(&x, &y, &cfg) {
                prop_assert!((0.0..=PI).contains(&l));
            }
        }
    }

    #[test]
    fn cone_membership_persists_outward(anchor in prop::collection::vec(-2.0..2.0f64, 3), wobble in prop::collection::vec(-0.05..0.05f64, 3), t in 0.0..3.0f64) {
        // a member near the cone axis, pushed further out along the geodesic ray from the anchor through it
        let cfg = EntailmentConfig::default();
        let x = exp_point(&anchor);
        prop_assume!(half_aperture(&x, &cfg).is_ok());
        let ahead: Vec<f64> = anchor.iter().map(|a| 2.0 * a).collect();
        let axis = log_map(&x, &exp_point(&ahead)).unwrap();
        let mut dir = axis.components.clone();
        dir.spatial.iter_mut().zip(&wobble).for_each(|(s, w)| *s += w * axis.norm());
        let u = lsk_core::lorentz::tangent_project(&x, &dir).unwrap();
        let m = exp_map(&x, &u).unwrap();
        prop_assume!(entailment_loss(&x, &m, &cfg).map(|l| l == 0.0).unwrap_or(false));
        let mut w = u.clone();
        w.components.time *= 1.0 + t;
        w.components.spatial.iter_mut().for_each(|s| *s *= 1.0 + t);
        let further = exp_map(&x, &w).unwrap();
        prop_assert!(entailment_loss(&x, &further, &cfg).unwrap() <= 1e-9);
    }

    #[test]
    fn rays_from_origin_have_zero_angle(v in prop::collection::vec(-2.0..2.0f64, 3), s in 1.05..4.0f64) {
        let x = exp_point(&v);
        let y = exp_point(&v.iter().map(|a| s * a).collect::<Vec<_>>());
        prop_assume!(x.spatial_norm() > 1e-3);
        if let Ok(e) = exterior_angle(&x, &y) {
            prop_assert!(e < 1e-6, "{}", e);
        }
    }

    #[test]
    fn argmin_distance_is_argmax_logit(seed in any::<u64>(), tau in 0.01..2.0f64) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<f64> = uniform_vec(&mut r, 5 * 3, 1.5);
        let tangent = lsk_core::linalg::Mat::from_vec(5, 3, rows).unwrap();
        let cfg = EntailmentConfig::default();
        let anchors: Vec<_> = (0..5).map(|i| exp_lift_origin(tangent.row(i), Curvature::UNIT).unwrap()).collect();
        let set = PrototypeSet::new(anchors, (0..5).map(|i| format!("c{i}")).collect(), 3, &cfg);
        prop_assume!(set.is_ok());
        let protos = Prototypes { tangent, set: set.unwrap() };
        let px = uniform_vec(&mut r, 10 * 3, 2.0);
        let grid = EmbeddingGrid::from_tangent(2, 5, 3, px).unwrap();
        let map = infer_distance(Exec::Sequential, &grid, &protos).unwrap();
        for p in 0..10 {
            let l = distance_logits(&protos.set, &grid.points.point(p), &LossConfig { tau, ..LossConfig::default() }).unwrap();
            let best = (0..5).fold(0, |b, i| if l[i] > l[b] { i } else { b });
            prop_assert_eq!(best, map.labels[p]);
        }
    }

    #[test]
    fn gradient_sign_predictor_matches((a, b) in pair(4, 2.0)) {
        let (x, y) = (lift_point(&a, Curvature::UNIT).unwrap(), lift_point(&b, Curvature::UNIT).unwrap());
        prop_assume!(y.spatial_norm() > 1e-3 && geodesic_distance(&x, &y).unwrap() > 1e-3);
        let (Ok(gd), Ok(ga)) = (grad_lorentz_distance(&x, &y), grad_exterior_angle(&x, &y)) else { return Ok(()) };
        let cos = cosine_similarity(&gd, &ga);
        prop_assume!(cos.abs() > 1e-8);
        prop_assert_eq!(cos.signum() as i8, grad_sign_predictor(&x, &y).unwrap());
    }

    #[test]
    fn exp_jacobian_spatial_diagonal_positive(v in spatial(6, 11.0)) {
        let j = exp_map_jacobian(&v).unwrap();
        for i in 0..v.len() {
            prop_assert!(j[(i + 1, i)] > 0.0);
        }
    }

    #[test]
    fn sinh_inequality(r in 1e-8..12.0f64) {
        prop_assert!(cosh_sinh_gap(r) > 0.0);
    }

    #[test]
    fn maxmin_delta_equals_brute_force(seed in any::<u64>(), n in 4usize..24) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| uniform_vec(&mut r, 3, 2.0)).collect();
        let d = lsk_core::hyperbolicity::pairwise_distances(&pts, lsk_core::hyperbolicity::Metric::Lorentz).unwrap();
        prop_assert_eq!(delta_from_matrix(Exec::Parallel, &d, 0).unwrap(), delta_brute_force(&d, 0).unwrap());
        let rel = delta_rel_from_matrix(Exec::Sequential, &d, 0).unwrap();
        prop_assert!((0.0..=1.0).contains(&rel));
        let scaled = delta_rel_from_matrix(Exec::Sequential, &d.scaled(7.5).unwrap(), 0).unwrap();
        prop_assert!((scaled - rel).abs() <= 1e-12 * rel.max(1e-300) || (scaled - rel).abs() < 1e-15);
    }

    #[test]
    fn radius_rankings_agree(seed in any::<u64>()) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = uniform_vec(&mut r, 12 * 2, 3.0);
        let head = t[0..2].to_vec();
        t[2..4].copy_from_slice(&head);
        let grid = EmbeddingGrid::from_tangent(3, 4, 2, t).unwrap();
        let base = ranks(&radius_uncertainty_as(Exec::Sequential, &grid, RadiusForm::Time).unwrap().values);
        for form in [RadiusForm::SpatialNorm, RadiusForm::Poincare] {
            prop_assert_eq!(&ranks(&radius_uncertainty_as(Exec::Sequential, &grid, form).unwrap().values), &base);
        }
    }

    #[test]
    fn confidence_in_unit_interval(seed in any::<u64>()) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = EmbeddingGrid::from_tangent(2, 6, 3, uniform_vec(&mut r, 12 * 3, 2.0)).unwrap();
        let m = class_confidence(Exec::Sequential, &grid, &[0, 3, 7]).unwrap();
        prop_assert!(m.values.iter().all(|v| *v > 0.0 && *v <= 1.0));
    }

    #[test]
    fn hungarian_beats_every_assignment(seed in any::<u64>(), n in 1usize..=7, extra in 0usize..=1) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = n + extra;
        let cost = uniform_vec(&mut r, rows * n, 5.0);
        let rows_of = hungarian_match(&cost, rows, n).unwrap();
        let total: f64 = rows_of.iter().enumerate().map(|(m, &j)| cost[j * n + m]).sum();
        // every injective map columns -> rows
        fn best(cost: &[f64], rows: usize, n: usize, m: usize, used: &mut Vec<bool>) -> f64 {
            if m == n {
                return 0.0;
            }
            let mut b = f64::INFINITY;
            for j in 0..rows {
                if !used[j] {
                    used[j] = true;
                    b = b.min(cost[j * n + m] + best(cost, rows, n, m + 1, used));
                    used[j] = false;
                }
            }
            b
        }
        let brute = best(&cost, rows, n, 0, &mut vec![false; rows]);
        prop_assert!((total - brute).abs() < 1e-9, "{} vs {}", total, brute);
    }

    #[test]
    fn mask_sigmoids_decrease(a in 0.0..5.0f64, b in 0.0..5.0f64) {
        let cfg = MaskHeadConfig::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(sigmoid(cfg.distance_logit(lo)) >= sigmoid(cfg.distance_logit(hi)));
        prop_assert!(sigmoid(cfg.angle_logit(lo)) >= sigmoid(cfg.angle_logit(hi)));
    }
}

#[test]
fn tree_metric_and_batch_shape() {
    // path metric on a line: delta is exactly zero
    let n = 9;
    let e: Vec<f64> = (0..n * n).map(|k| ((k / n) as f64 - (k % n) as f64).abs()).collect();
    let d = DistanceMatrix::from_entries(n, e).unwrap();
    assert_eq!(delta_from_matrix(Exec::Sequential, &d, 0).unwrap(), 0.0);
    let _ = PointBatch::from_points(&[exp_point(&[0.1, 0.2])]).unwrap();
}
