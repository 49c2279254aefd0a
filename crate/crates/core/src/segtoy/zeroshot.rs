//! Held-out-class protocol: train without one child class, then recover it
//! from its descriptor alone.

use serde::{Deserialize, Serialize};

use crate::entailment::EntailmentConfig;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::par::Exec;

use super::infer::{embed, infer, InferMode};
use super::pca::{build_prototypes, DescriptorBank};
use super::scene::SyntheticScene;
use super::train::{train_with, HeadKind, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotReport {
    pub held_out: usize,
    pub class_name: String,
    pub embed_dim: usize,
    pub pca_warning: Option<String>,
    pub hyperbolic_recall: f64,
    pub hyperbolic_precision: f64,
    /// Same Lorentz head, matched by smallest exterior angle instead.
    pub hyperbolic_angle_recall: f64,
    pub euclidean_recall: f64,
    pub euclidean_precision: f64,
}

fn recall_precision(pred: &[usize], novel: usize, truth: &[bool]) -> (f64, f64) {
    let hit = pred.iter().zip(truth).filter(|(p, t)| **p == novel && **t).count();
    let total = truth.iter().filter(|t| **t).count().max(1);
    let got = pred.iter().filter(|p| **p == novel).count();
    (hit as f64 / total as f64, if got == 0 { 0.0 } else { hit as f64 / got as f64 })
}

/// Trains a Lorentz head and a Euclidean head on every class but
/// `held_out` (its pixels are ignored and its descriptor is left out of the
/// PCA), then appends the held-out descriptor as a novel prototype and
/// measures how many of its pixels each head assigns to it.
pub fn held_out_protocol(
    exec: Exec,
    scene: &SyntheticScene,
    held_out: usize,
    d: usize,
    cfg: &TrainConfig,
) -> Result<ZeroShotReport> {
    let c = scene.classes();
    if held_out >= c {
        return Err(Error::Usage(format!("held-out class {held_out} out of range for {c} classes")));
    }
    if c < 3 {
        return Err(Error::Usage("held-out protocol needs at least 3 classes".into()));
    }
    let keep: Vec<usize> = (0..c).filter(|&k| k != held_out).collect();
    let names: Vec<String> = keep.iter().map(|&k| scene.hierarchy.class_names[k].clone()).collect();
    let rows: Vec<Vec<f64>> = keep.iter().map(|&k| scene.class_descriptors.row(k).to_vec()).collect();
    let bank = DescriptorBank::new(names, Mat::from_rows(&rows)?, d.min(keep.len()))?;
    let entail = EntailmentConfig::new(cfg.k, crate::lorentz::Curvature::UNIT)?;
    let protos = build_prototypes(&bank, &entail)?;
    let remap: Vec<Option<usize>> = (0..c).map(|k| keep.iter().position(|&j| j == k)).collect();
    let targets: Vec<Option<usize>> = scene.labels.iter().map(|&l| remap[l]).collect();

    let novel = bank.encode(scene.class_descriptors.row(held_out))?;
    let name = scene.hierarchy.class_names[held_out].clone();
    let extended = protos.with_extra(&name, &novel, &entail)?;
    let truth: Vec<bool> = scene.labels.iter().map(|&l| l == held_out).collect();
    let novel_idx = extended.len() - 1;

    let mut results = Vec::new();
    let mut angle_recall = 0.0;
    for (head, mode) in [(HeadKind::Lorentz, InferMode::Distance), (HeadKind::Euclidean, InferMode::Euclidean)] {
        let hc = TrainConfig { head, ..cfg.clone() };
        let model = train_with(exec, scene, &targets, &protos, &hc)?;
        let grid = embed(exec, &model.params, scene)?;
        let map = infer(exec, &grid, &extended, mode)?;
        results.push(recall_precision(&map.labels, novel_idx, &truth));
        if head == HeadKind::Lorentz {
            let map = infer(exec, &grid, &extended, InferMode::Angle)?;
            angle_recall = recall_precision(&map.labels, novel_idx, &truth).0;
        }
    }
    Ok(ZeroShotReport {
        held_out,
        class_name: name,
        embed_dim: bank.dim(),
        pca_warning: bank.pca.warning.clone(),
        hyperbolic_recall: results[0].0,
        hyperbolic_precision: results[0].1,
        hyperbolic_angle_recall: angle_recall,
        euclidean_recall: results[1].0,
        euclidean_precision: results[1].1,
    })
}
