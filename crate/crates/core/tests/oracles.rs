//! Values frozen from 50-digit evaluations, computed independently of the
//! crate (the exterior angle via the hyperbolic law of cosines).

use lsk_core::entailment::exterior_angle;
use lsk_core::lorentz::{exp_lift_origin, lift_point, lorentz_inner, AmbientVector};
use lsk_core::Curvature;

#[test]
fn five_dim_inner_product() {
    let x = AmbientVector::new(1.5, vec![-0.25, 0.75, 2.0, -1.125, 0.5]).unwrap();
    let y = AmbientVector::new(2.25, vec![0.5, -1.5, 0.125, 1.0, -0.75]).unwrap();
    assert_eq!(lorentz_inner(&x, &y).unwrap(), -5.875);
}

#[test]
fn exp_lift_of_three_four() {
    let p = exp_lift_origin(&[0.3, 0.4], Curvature::UNIT).unwrap();
    assert!((p.time() - 1.127_625_965_206_380_8).abs() < 1e-15);
    assert!((p.spatial()[0] - 0.312_657_183_296_248_42).abs() < 1e-15);
    assert!((p.spatial()[1] - 0.416_876_244_394_997_89).abs() < 1e-15);
}

#[test]
fn exterior_angle_by_law_of_cosines() {
    let a = lift_point(&[0.7, -0.2, 0.4], Curvature::UNIT).unwrap();
    let b = lift_point(&[-0.3, 1.1, 0.9], Curvature::UNIT).unwrap();
    let ext = exterior_angle(&a, &b).unwrap();
    assert!((ext - 2.397_268_940_640_152).abs() < 1e-12, "{ext}");
}
