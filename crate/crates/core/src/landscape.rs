//! Two-dimensional loss surfaces around a trained parameter vector, along
//! filter-normalized random directions.

use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::par::{self, Exec};
use crate::rng;
use crate::segtoy::{evaluate_loss, Prototypes, SyntheticScene, TrainedModel};

pub const LANDSCAPE_CSV_HEADER: &str = "# lsk.losscape/1\nalpha,beta,loss";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeConfig {
    /// Points per axis; odd so the trained parameters sit on the center cell.
    pub grid: usize,
    pub extent: f64,
    pub directions_seed: u64,
    /// Angles sampled on the unit circle for the curvature proxy.
    pub ring_samples: usize,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self { grid: 41, extent: 1.0, directions_seed: 7, ring_samples: 64 }
    }
}

impl LandscapeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 3 || self.grid.is_multiple_of(2) {
            return Err(Error::Usage(format!("--grid must be odd and >= 3, got {}", self.grid)));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::Usage(format!("--extent must be positive, got {}", self.extent)));
        }
        Ok(())
    }

    /// Axis coordinate of grid index `i`; the middle index is exactly 0.
    pub fn coord(&self, i: usize) -> f64 {
        let half = (self.grid / 2) as f64;
        self.extent * (i as f64 - half) / half
    }
}

/// A Gaussian direction rescaled blockwise so each block has the norm of the
/// matching parameter block. Blocks of zero norm get a zero direction.
pub fn filter_normalized_direction(theta: &[f64], blocks: &[Range<usize>], seed: u64, stream: u64) -> Result<Vec<f64>> {
    let mut r = rng::stream(seed, stream);
    let mut d: Vec<f64> = (0..theta.len()).map(|_| StandardNormal.sample(&mut r)).collect();
    let mut covered = 0;
    for b in blocks {
        if b.end > theta.len() || b.start > b.end {
            return Err(Error::Usage(format!("parameter block {b:?} out of range")));
        }
        covered += b.len();
        let tn = theta[b.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
        let dn = d[b.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
        let s = if dn > 0.0 { tn / dn } else { 0.0 };
        d[b.clone()].iter_mut().for_each(|x| *x *= s);
    }
    check_dim(theta.len(), covered)?;
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossGrid {
    pub config: LandscapeConfig,
    pub coords: Vec<f64>,
    /// Row-major over (alpha, beta).
    pub values: Vec<f64>,
    pub center: f64,
    /// Mean of `loss - center` over the unit circle in (alpha, beta).
    pub curvature_proxy: f64,
}

impl LossGrid {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.coords.len() + j]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(LANDSCAPE_CSV_HEADER);
        s.push('\n');
        for (i, a) in self.coords.iter().enumerate() {
            for (j, b) in self.coords.iter().enumerate() {
                s.push_str(&format!("{a:?},{b:?},{:?}\n", self.at(i, j)));
            }
        }
        s
    }
}

fn perturbed(theta: &[f64], d1: &[f64], d2: &[f64], a: f64, b: f64) -> Vec<f64> {
    if a == 0.0 && b == 0.0 {
        return theta.to_vec();
    }
    theta.iter().zip(d1).zip(d2).map(|((t, x), y)| t + a * x + b * y).collect()
}

/// Evaluates `loss` over the grid spanned by two filter-normalized
/// directions. Grid cells run in parallel; `loss` should be deterministic.
pub fn loss_grid<F>(exec: Exec, theta: &[f64], blocks: &[Range<usize>], cfg: &LandscapeConfig, loss: F) -> Result<LossGrid>
where
    F: Fn(&[f64]) -> Result<f64> + Sync + Send,
{
    cfg.validate()?;
    let d1 = filter_normalized_direction(theta, blocks, cfg.directions_seed, 0)?;
    let d2 = filter_normalized_direction(theta, blocks, cfg.directions_seed, 1)?;
    let n = cfg.grid;
    let coords: Vec<f64> = (0..n).map(|i| cfg.coord(i)).collect();
    let values = par::try_map_range(exec, n * n, |k| loss(&perturbed(theta, &d1, &d2, coords[k / n], coords[k % n])))?;
    let ring = par::try_map_range(exec, cfg.ring_samples, |k| {
        let t = std::f64::consts::TAU * k as f64 / cfg.ring_samples as f64;
        loss(&perturbed(theta, &d1, &d2, t.cos(), t.sin()))
    })?;
    let center = values[(n / 2) * n + n / 2];
    let curvature_proxy = if ring.is_empty() {
        f64::NAN
    } else {
        ring.iter().map(|l| l - center).sum::<f64>() / ring.len() as f64
    };
    Ok(LossGrid { config: cfg.clone(), coords, values, center, curvature_proxy })
}

/// Loss surface of a trained per-pixel head (either geometry), on the data
/// it was trained on. The center cell reproduces `model.final_loss.total`.
pub fn model_loss_grid(
    exec: Exec,
    model: &TrainedModel,
    scene: &SyntheticScene,
    targets: &[Option<usize>],
    protos: &Prototypes,
    cfg: &LandscapeConfig,
) -> Result<LossGrid> {
    let theta = model.params.flatten();
    let blocks = model.params.blocks();
    loss_grid(exec, &theta, &blocks, cfg, |t| {
        let mut p = model.params.clone();
        p.unflatten(t)?;
        // cells already run in parallel
        Ok(evaluate_loss(Exec::Sequential, &p, scene, targets, protos, &model.config)?.total)
    })
}
