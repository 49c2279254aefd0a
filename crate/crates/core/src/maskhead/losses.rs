//! Hungarian matching and the binary mask losses with their gradients.

use crate::error::{check_dim, Error, Result};

pub const DICE_EPS: f64 = 1.0;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` without overflow.
#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Minimum-cost assignment of the `m` columns of an `n x m` cost matrix
/// (row-major, `m <= n`) to distinct rows. Returns `row_of[col]`.
pub fn hungarian_match(cost: &[f64], n: usize, m: usize) -> Result<Vec<usize>> {
    check_dim(n * m, cost.len())?;
    if m > n {
        return Err(Error::Usage(format!("{m} targets cannot be matched to {n} queries")));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::Usage("matching cost contains a non-finite entry".into()));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    // potentials method on the transposed problem: targets are the rows
    // (1-based, 0 is a sentinel) and queries the columns
    let a = |i: usize, j: usize| cost[(j - 1) * m + (i - 1)];
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_of = vec![0usize; m];
    for j in 1..=n {
        if p[j] != 0 {
            row_of[p[j] - 1] = j - 1;
        }
    }
    Ok(row_of)
}

/// Mean of `-(1 - p_t)^gamma log p_t` over pixels, from logits.
pub fn focal_loss_logits(logits: &[f64], gt: &[bool], gamma: f64) -> f64 {
    let n = logits.len().max(1) as f64;
    logits
        .iter()
        .zip(gt)
        .map(|(&z, &g)| {
            let s = if g { z } else { -z };
            let pt = sigmoid(s);
            -(1.0 - pt).powf(gamma) * log_sigmoid(s)
        })
        .sum::<f64>()
        / n
}

/// Focal loss on probabilities in `(0, 1)`.
pub fn focal_loss(probs: &[f64], gt: &[bool], gamma: f64) -> Result<f64> {
    check_dim(probs.len(), gt.len())?;
    let n = probs.len().max(1) as f64;
    Ok(probs
        .iter()
        .zip(gt)
        .map(|(&p, &g)| {
            let pt = if g { p } else { 1.0 - p };
            -(1.0 - pt).powf(gamma) * pt.ln()
        })
        .sum::<f64>()
        / n)
}

/// Writes `d focal / d logit` into `out`.
pub fn focal_grad_logits(logits: &[f64], gt: &[bool], gamma: f64, out: &mut [f64]) {
    let n = logits.len().max(1) as f64;
    for ((o, &z), &g) in out.iter_mut().zip(logits).zip(gt) {
        let sign = if g { 1.0 } else { -1.0 };
        let pt = sigmoid(sign * z);
        let q = 1.0 - pt;
        let grad = gamma * pt * q.powf(gamma) * log_sigmoid(sign * z) - q.powf(gamma + 1.0);
        *o = sign * grad / n;
    }
}

/// `1 - (2 sum p g + eps) / (sum p + sum g + eps)`.
pub fn dice_loss(probs: &[f64], gt: &[bool]) -> Result<f64> {
    check_dim(probs.len(), gt.len())?;
    let (inter, sp, sg) = dice_sums(probs, gt);
    Ok(1.0 - (2.0 * inter + DICE_EPS) / (sp + sg + DICE_EPS))
}

fn dice_sums(probs: &[f64], gt: &[bool]) -> (f64, f64, f64) {
    let mut inter = 0.0;
    let mut sp = 0.0;
    let mut sg = 0.0;
    for (&p, &g) in probs.iter().zip(gt) {
        sp += p;
        if g {
            inter += p;
            sg += 1.0;
        }
    }
    (inter, sp, sg)
}

/// Writes `d dice / d logit` into `out` given the sigmoid probabilities.
pub fn dice_grad_logits(probs: &[f64], gt: &[bool], out: &mut [f64]) {
    let (inter, sp, sg) = dice_sums(probs, gt);
    let num = 2.0 * inter + DICE_EPS;
    let den = sp + sg + DICE_EPS;
    for ((o, &p), &g) in out.iter_mut().zip(probs).zip(gt) {
        let dp = -((if g { 2.0 } else { 0.0 }) * den - num) / (den * den);
        *o = dp * p * (1.0 - p);
    }
}
