//! Two-layer tanh perceptron applied per pixel, with hand-written backprop.

use std::ops::Range;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::par::{self, Exec};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
    /// `hidden x d_in`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `d_out x hidden`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Output scale applied before the exponential map.
    pub alpha_img: f64,
    pub seed: u64,
}

impl EncoderParams {
    /// Gaussian init with variance `1/fan_in`, zero biases, unit scale.
    pub fn init(d_in: usize, hidden: usize, d_out: usize, seed: u64) -> Result<Self> {
        if d_in == 0 || hidden == 0 || d_out == 0 {
            return Err(Error::Usage("encoder widths must be >= 1".into()));
        }
        let mut r = rng::seeded(seed);
        let n1 = Normal::new(0.0, (1.0 / d_in as f64).sqrt()).expect("positive std");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("positive std");
        let w1 = (0..hidden * d_in).map(|_| n1.sample(&mut r)).collect();
        let w2 = (0..d_out * hidden).map(|_| n2.sample(&mut r)).collect();
        Ok(Self {
            d_in,
            hidden,
            d_out,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; d_out],
            alpha_img: 1.0,
            seed,
        })
    }

    pub fn zeros(d_in: usize, hidden: usize, d_out: usize) -> Self {
        Self {
            d_in,
            hidden,
            d_out,
            w1: vec![0.0; hidden * d_in],
            b1: vec![0.0; hidden],
            w2: vec![0.0; d_out * hidden],
            b2: vec![0.0; d_out],
            alpha_img: 1.0,
            seed: 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.d_in + self.hidden + self.d_out * self.hidden + self.d_out + 1
    }

    /// Index ranges of `w1, b1, w2, b2, alpha_img` in the flat layout.
    pub fn blocks(&self) -> Vec<Range<usize>> {
        let sizes = [self.hidden * self.d_in, self.hidden, self.d_out * self.hidden, self.d_out, 1];
        let mut start = 0;
        sizes
            .iter()
            .map(|&s| {
                let r = start..start + s;
                start += s;
                r
            })
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        v.push(self.alpha_img);
        v
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        check_dim(self.param_count(), flat.len())?;
        let b = self.blocks();
        self.w1.copy_from_slice(&flat[b[0].clone()]);
        self.b1.copy_from_slice(&flat[b[1].clone()]);
        self.w2.copy_from_slice(&flat[b[2].clone()]);
        self.b2.copy_from_slice(&flat[b[3].clone()]);
        self.alpha_img = flat[b[4].start];
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    /// Hidden activations and the unscaled output `z` of one pixel.
    #[inline]
    pub fn forward_pixel(&self, f: &[f64], h: &mut [f64], z: &mut [f64]) {
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.w1[j * self.d_in..(j + 1) * self.d_in];
            let a: f64 = row.iter().zip(f).map(|(w, x)| w * x).sum::<f64>() + self.b1[j];
            *hj = a.tanh();
        }
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
            *zk = row.iter().zip(h.iter()).map(|(w, x)| w * x).sum::<f64>() + self.b2[k];
        }
    }

    /// Tangent output `alpha_img * z` of one pixel.
    pub fn tangent(&self, f: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden];
        let mut z = vec![0.0; self.d_out];
        self.forward_pixel(f, &mut h, &mut z);
        z.iter_mut().for_each(|v| *v *= self.alpha_img);
        z
    }

    /// Accumulates parameter gradients given `dv = dL/d(alpha z)` for one
    /// pixel whose forward pass produced `h` and `z`.
    #[inline]
    pub fn backward_pixel(&self, f: &[f64], h: &[f64], z: &[f64], dv: &[f64], grad: &mut [f64]) {
        let (n_w1, n_b1, n_w2) = (self.hidden * self.d_in, self.hidden, self.d_out * self.hidden);
        let (g_w1, rest) = grad.split_at_mut(n_w1);
        let (g_b1, rest) = rest.split_at_mut(n_b1);
        let (g_w2, rest) = rest.split_at_mut(n_w2);
        let (g_b2, g_alpha) = rest.split_at_mut(self.d_out);
        g_alpha[0] += dv.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        let mut da = vec![0.0; self.hidden];
        for k in 0..self.d_out {
            let dz = self.alpha_img * dv[k];
            g_b2[k] += dz;
            let row = &self.w2[k * self.hidden..(k + 1) * self.hidden];
            let grow = &mut g_w2[k * self.hidden..(k + 1) * self.hidden];
            for j in 0..self.hidden {
                grow[j] += dz * h[j];
                da[j] += row[j] * dz;
            }
        }
        for j in 0..self.hidden {
            let d = da[j] * (1.0 - h[j] * h[j]);
            g_b1[j] += d;
            let grow = &mut g_w1[j * self.d_in..(j + 1) * self.d_in];
            for (g, x) in grow.iter_mut().zip(f) {
                *g += d * x;
            }
        }
    }
}

/// Per-pixel tangent vectors `alpha_img * z`, flat `pixels x d_out`.
pub fn encoder_forward(exec: Exec, params: &EncoderParams, features: &[f64]) -> Result<Vec<f64>> {
    if !features.len().is_multiple_of(params.d_in) {
        return Err(Error::DimensionMismatch { expected: params.d_in, found: features.len() % params.d_in });
    }
    let n = features.len() / params.d_in;
    let rows = par::map_range(exec, n, |p| params.tangent(&features[p * params.d_in..(p + 1) * params.d_in]));
    Ok(rows.concat())
}
