//! Mask-classification head: N queries, each with a class embedding scored
//! against the prototypes and a mask embedding scored against every pixel.

pub mod losses;

use serde::{Deserialize, Serialize};

use crate::entailment::{ext_kernel, log_sum_exp, softmax, PrototypeSet};
use crate::error::{check_dim, Error, Result};
use crate::grad::{distance_grad_kernel, exp_origin_vjp, ext_anchor_grad_kernel, ext_point_grad_kernel};
use crate::linalg::Mat;
use crate::lorentz::{distance_kernel, exp_origin_spatial, norm_sq, time_from_norm_sq, Curvature, PointBatch};
use crate::par::{self, Exec};
use crate::rng;
use crate::segtoy::{embed, EmbeddingGrid, EncoderParams, LabelMap, Prototypes, SyntheticScene};
use crate::uncertainty::{angle_uncertainty, ScalarMap};

pub use losses::{
    dice_grad_logits, dice_loss, focal_grad_logits, focal_loss, focal_loss_logits, hungarian_match, sigmoid,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskHeadConfig {
    pub queries: usize,
    pub w_d: f64,
    pub b_d: f64,
    pub s_d: f64,
    pub b_a: f64,
    pub s_a: f64,
    /// Drops the angle term of the mask logits when false.
    pub angle_term: bool,
    pub gamma: f64,
    pub lambda_cls: f64,
    pub lambda_focal: f64,
    pub lambda_dice: f64,
    /// Cross-entropy weight of queries matched to nothing.
    pub no_object_weight: f64,
}

impl Default for MaskHeadConfig {
    fn default() -> Self {
        Self {
            queries: 12,
            w_d: 1.0,
            b_d: 1.0,
            s_d: 0.1,
            b_a: 0.17,
            s_a: 0.02,
            angle_term: true,
            gamma: 2.0,
            lambda_cls: 1.0,
            lambda_focal: 20.0,
            lambda_dice: 1.0,
            no_object_weight: 0.1,
        }
    }
}

impl MaskHeadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_d > 0.0 && self.s_a > 0.0) {
            return Err(Error::Usage("mask-logit scales must be > 0".into()));
        }
        if self.queries == 0 || self.w_d < 0.0 || self.gamma < 0.0 {
            return Err(Error::Usage(format!("invalid mask-head config: {self:?}")));
        }
        if [self.lambda_cls, self.lambda_focal, self.lambda_dice, self.no_object_weight].iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Usage("loss weights must be >= 0".into()));
        }
        Ok(())
    }

    /// Distance part of a mask logit: `(-d + b_d) / s_d`.
    #[inline]
    pub fn distance_logit(&self, d: f64) -> f64 {
        (-d + self.b_d) / self.s_d
    }

    /// Angle part of a mask logit: `(-ext + b_a) / s_a`, or 0 when disabled.
    #[inline]
    pub fn angle_logit(&self, ext: f64) -> f64 {
        if self.angle_term {
            (-ext + self.b_a) / self.s_a
        } else {
            0.0
        }
    }
}

/// Class and mask embeddings of the N queries.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub dim: usize,
    pub class_tangent: Vec<f64>,
    pub mask_tangent: Vec<f64>,
    pub class_points: PointBatch,
    pub mask_points: PointBatch,
}

impl QuerySet {
    pub fn from_tangent(dim: usize, class_tangent: Vec<f64>, mask_tangent: Vec<f64>) -> Result<Self> {
        check_dim(class_tangent.len(), mask_tangent.len())?;
        if dim == 0 || class_tangent.is_empty() || !class_tangent.len().is_multiple_of(dim) {
            return Err(Error::Usage("query tangents must be N x d with N, d >= 1".into()));
        }
        let class_points = PointBatch::exp_lift_rows(&class_tangent, dim, Curvature::UNIT)?;
        let mask_points = PointBatch::exp_lift_rows(&mask_tangent, dim, Curvature::UNIT)?;
        Ok(Self { dim, class_tangent, mask_tangent, class_points, mask_points })
    }

    pub fn len(&self) -> usize {
        self.class_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_points.is_empty()
    }

    /// The same queries in a different order: query `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_dim(self.len(), perm.len())?;
        let d = self.dim;
        let pick = |src: &[f64]| perm.iter().flat_map(|&j| src[j * d..(j + 1) * d].to_vec()).collect::<Vec<_>>();
        Self::from_tangent(d, pick(&self.class_tangent), pick(&self.mask_tangent))
    }
}

#[inline]
fn class_logit(protos: &PrototypeSet, i: usize, qt: f64, qs: &[f64], cfg: &MaskHeadConfig) -> f64 {
    let a = protos.anchors();
    let d = distance_kernel(a.time(i), a.spatial(i), qt, qs, 1.0);
    let ext = ext_kernel(a.time(i), a.spatial(i), a.spatial_norm(i), qt, qs, 1.0).unwrap_or(0.0);
    -cfg.w_d * d - (ext - protos.aperture(i)).max(0.0)
}

/// `q_ij = -w_d d_L(x_i, q_j) - max(0, ext(x_i, q_j) - aper(x_i))`, N x C.
pub fn class_query_logits(protos: &PrototypeSet, queries: &QuerySet, cfg: &MaskHeadConfig) -> Result<Mat> {
    check_dim(protos.dim(), queries.dim)?;
    let (n, c) = (queries.len(), protos.len());
    let mut out = Mat::zeros(n, c);
    for j in 0..n {
        let (qt, qs) = (queries.class_points.time(j), queries.class_points.spatial(j));
        for i in 0..c {
            out[(j, i)] = class_logit(protos, i, qt, qs, cfg);
        }
    }
    Ok(out)
}

#[inline]
fn mask_logit(queries: &QuerySet, j: usize, yt: f64, ys: &[f64], cfg: &MaskHeadConfig) -> f64 {
    let m = &queries.mask_points;
    let d = distance_kernel(m.time(j), m.spatial(j), yt, ys, 1.0);
    let mut z = cfg.distance_logit(d);
    if cfg.angle_term {
        // a pixel sitting on the query has no defined angle; read it as 0
        let ext = ext_kernel(m.time(j), m.spatial(j), m.spatial_norm(j), yt, ys, 1.0).unwrap_or(0.0);
        z += cfg.angle_logit(ext);
    }
    z
}

/// Mask logits `m^d + m^a` for every query and pixel, N x (H W).
pub fn mask_query_logits(exec: Exec, queries: &QuerySet, grid: &EmbeddingGrid, cfg: &MaskHeadConfig) -> Result<Mat> {
    check_dim(queries.dim, grid.dim())?;
    let n = queries.len();
    let rows = par::map_range(exec, n, |j| {
        (0..grid.pixels()).map(|p| mask_logit(queries, j, grid.points.time(p), grid.points.spatial(p), cfg)).collect::<Vec<_>>()
    });
    Mat::from_vec(n, grid.pixels(), rows.concat())
}

/// A ground-truth region: one class and its binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub class: usize,
    pub mask: Vec<bool>,
}

/// One segment per class present in `labels`, in class order.
pub fn segments_from_labels(labels: &[usize], classes: usize) -> Vec<Segment> {
    (0..classes)
        .filter_map(|c| {
            let mask: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            mask.iter().any(|&m| m).then_some(Segment { class: c, mask })
        })
        .collect()
}

/// `cost(j, m) = -l_cls p_j[c_m] + l_focal focal(j, m) + l_dice dice(j, m)`,
/// N x M row-major.
pub fn matching_cost(class_probs: &Mat, mask_probs: &Mat, segments: &[Segment], cfg: &MaskHeadConfig) -> Result<Vec<f64>> {
    check_dim(class_probs.rows(), mask_probs.rows())?;
    let (n, m) = (class_probs.rows(), segments.len());
    let mut cost = vec![0.0; n * m];
    for (k, seg) in segments.iter().enumerate() {
        check_dim(mask_probs.cols(), seg.mask.len())?;
        if seg.class >= class_probs.cols() {
            return Err(Error::Usage(format!("segment class {} has no probability column", seg.class)));
        }
        for j in 0..n {
            let probs = mask_probs.row(j);
            let mut c = -cfg.lambda_cls * class_probs[(j, seg.class)];
            if cfg.lambda_focal != 0.0 {
                c += cfg.lambda_focal * focal_loss(probs, &seg.mask, cfg.gamma)?;
            }
            if cfg.lambda_dice != 0.0 {
                c += cfg.lambda_dice * dice_loss(probs, &seg.mask)?;
            }
            cost[j * m + k] = c;
        }
    }
    Ok(cost)
}

/// Per-pixel `argmax_c sum_i class_probs[i, c] mask_probs[i, p]` over the
/// first `classes` columns; ties go to the lower class.
pub fn semantic_map(class_probs: &Mat, mask_probs: &Mat, classes: usize, height: usize, width: usize, legend: Vec<String>) -> Result<LabelMap> {
    check_dim(class_probs.rows(), mask_probs.rows())?;
    check_dim(height * width, mask_probs.cols())?;
    if classes > class_probs.cols() {
        return Err(Error::Usage(format!("{classes} classes but only {} probability columns", class_probs.cols())));
    }
    let n = class_probs.rows();
    let labels = (0..height * width)
        .map(|p| {
            let mut best = (0, f64::NEG_INFINITY);
            for c in 0..classes {
                let s: f64 = (0..n).map(|i| class_probs[(i, c)] * mask_probs[(i, p)]).sum();
                if s > best.1 {
                    best = (c, s);
                }
            }
            best.0
        })
        .collect();
    Ok(LabelMap { height, width, labels, legend })
}

/// Minimum exterior angle from any mask query, per pixel.
pub fn mask_angle_uncertainty(exec: Exec, grid: &EmbeddingGrid, queries: &QuerySet) -> Result<ScalarMap> {
    angle_uncertainty(exec, grid, &queries.mask_points)
}

/// Trainable state: pixel encoder, query tangents and the no-object bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskHeadParams {
    pub encoder: EncoderParams,
    pub queries: usize,
    pub dim: usize,
    pub class_tangent: Vec<f64>,
    pub mask_tangent: Vec<f64>,
    pub no_object_bias: f64,
}

impl MaskHeadParams {
    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + 2 * self.queries * self.dim + 1
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.encoder.flatten();
        v.extend_from_slice(&self.class_tangent);
        v.extend_from_slice(&self.mask_tangent);
        v.push(self.no_object_bias);
        v
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        check_dim(self.param_count(), flat.len())?;
        let e = self.encoder.param_count();
        let q = self.queries * self.dim;
        self.encoder.unflatten(&flat[..e])?;
        self.class_tangent.copy_from_slice(&flat[e..e + q]);
        self.mask_tangent.copy_from_slice(&flat[e + q..e + 2 * q]);
        self.no_object_bias = flat[e + 2 * q];
        Ok(())
    }

    /// Parameter blocks for filter normalization: the encoder's blocks,
    /// then class queries, mask queries and the bias.
    pub fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        let mut b = self.encoder.blocks();
        let e = self.encoder.param_count();
        let q = self.queries * self.dim;
        b.push(e..e + q);
        b.push(e + q..e + 2 * q);
        b.push(e + 2 * q..e + 2 * q + 1);
        b
    }

    pub fn query_set(&self) -> Result<QuerySet> {
        QuerySet::from_tangent(self.dim, self.class_tangent.clone(), self.mask_tangent.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub weight_decay: f64,
    pub hidden: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Initial tangent norm scale of the queries.
    pub query_init: f64,
    pub head: MaskHeadConfig,
}

impl Default for MaskTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.01,
            seed: 42,
            weight_decay: 1e-4,
            hidden: 32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            query_init: 0.5,
            head: MaskHeadConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskLoss {
    pub ce: f64,
    pub focal: f64,
    pub dice: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskTraceRow {
    pub epoch: usize,
    pub ce: f64,
    pub focal: f64,
    pub dice: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedMaskHead {
    pub params: MaskHeadParams,
    pub config: MaskTrainConfig,
    pub trace: Vec<MaskTraceRow>,
    pub final_loss: MaskLoss,
}

/// Class probabilities over `C + 1` columns (the last is no-object).
fn class_probs_with_bias(logits: &Mat, bias: f64) -> Mat {
    let (n, c) = (logits.rows(), logits.cols());
    let mut out = Mat::zeros(n, c + 1);
    for j in 0..n {
        let mut row = logits.row(j).to_vec();
        row.push(bias);
        out.row_mut(j).copy_from_slice(&softmax(&row));
    }
    out
}

/// Forward pass of the whole head on a scene.
pub struct MaskPrediction {
    pub grid: EmbeddingGrid,
    pub queries: QuerySet,
    pub class_logits: Mat,
    /// N x (C + 1).
    pub class_probs: Mat,
    pub mask_logits: Mat,
    pub mask_probs: Mat,
}

impl MaskPrediction {
    pub fn semantic_map(&self, protos: &Prototypes) -> Result<LabelMap> {
        semantic_map(
            &self.class_probs,
            &self.mask_probs,
            protos.len(),
            self.grid.height,
            self.grid.width,
            protos.set.labels().to_vec(),
        )
    }
}

pub fn predict(exec: Exec, params: &MaskHeadParams, protos: &Prototypes, scene: &SyntheticScene, cfg: &MaskHeadConfig) -> Result<MaskPrediction> {
    let grid = embed(exec, &params.encoder, scene)?;
    let queries = params.query_set()?;
    let class_logits = class_query_logits(&protos.set, &queries, cfg)?;
    let class_probs = class_probs_with_bias(&class_logits, params.no_object_bias);
    let mask_logits = mask_query_logits(exec, &queries, &grid, cfg)?;
    let mut mask_probs = mask_logits.clone();
    mask_probs.as_mut_slice().iter_mut().for_each(|z| *z = sigmoid(*z));
    Ok(MaskPrediction { grid, queries, class_logits, class_probs, mask_logits, mask_probs })
}

/// Loss at `params` and, if asked, its gradient in the flat layout.
pub fn maskhead_loss_and_grad(
    exec: Exec,
    params: &MaskHeadParams,
    protos: &Prototypes,
    scene: &SyntheticScene,
    segments: &[Segment],
    cfg: &MaskHeadConfig,
    with_grad: bool,
) -> Result<(MaskLoss, Vec<f64>)> {
    check_dim(protos.dim(), params.dim)?;
    if segments.len() > params.queries {
        return Err(Error::Usage(format!("{} segments exceed {} queries", segments.len(), params.queries)));
    }
    let pred = predict(exec, params, protos, scene, cfg)?;
    let (n, c, np) = (params.queries, protos.len(), scene.pixels());
    let m = segments.len();
    let cost = matching_cost(&pred.class_probs, &pred.mask_probs, segments, cfg)?;
    let row_of = hungarian_match(&cost, n, m)?;
    let mut target = vec![c; n];
    for (k, &j) in row_of.iter().enumerate() {
        target[j] = segments[k].class;
    }

    // class cross-entropy, weighted mean over queries
    let weights: Vec<f64> = target.iter().map(|&t| if t == c { cfg.no_object_weight } else { 1.0 }).collect();
    let wsum: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let mut ce = 0.0;
    let mut d_class = Mat::zeros(n, c + 1);
    for j in 0..n {
        let mut row = pred.class_logits.row(j).to_vec();
        row.push(params.no_object_bias);
        ce += weights[j] * (log_sum_exp(&row) - row[target[j]]);
        let p = pred.class_probs.row(j);
        for i in 0..=c {
            d_class[(j, i)] = cfg.lambda_cls * weights[j] / wsum * (p[i] - if i == target[j] { 1.0 } else { 0.0 });
        }
    }
    ce /= wsum;

    // mask losses over matched pairs
    let mut focal = 0.0;
    let mut dice = 0.0;
    let mut d_mask = Mat::zeros(n, np);
    let mut tmp = vec![0.0; np];
    let mf = m.max(1) as f64;
    for (k, &j) in row_of.iter().enumerate() {
        let z = pred.mask_logits.row(j);
        let probs = pred.mask_probs.row(j);
        let gt = &segments[k].mask;
        focal += focal_loss_logits(z, gt, cfg.gamma) / mf;
        dice += dice_loss(probs, gt)? / mf;
        if with_grad {
            focal_grad_logits(z, gt, cfg.gamma, &mut tmp);
            for (o, t) in d_mask.row_mut(j).iter_mut().zip(&tmp) {
                *o += cfg.lambda_focal * t / mf;
            }
            dice_grad_logits(probs, gt, &mut tmp);
            for (o, t) in d_mask.row_mut(j).iter_mut().zip(&tmp) {
                *o += cfg.lambda_dice * t / mf;
            }
        }
    }
    let loss = MaskLoss {
        ce,
        focal,
        dice,
        total: cfg.lambda_cls * ce + cfg.lambda_focal * focal + cfg.lambda_dice * dice,
    };
    if !with_grad {
        return Ok((loss, Vec::new()));
    }

    let d = params.dim;
    let enc_len = params.encoder.param_count();
    let mut grad = vec![0.0; params.param_count()];
    let q = &pred.queries;
    let a = protos.set.anchors();

    // class queries
    let mut gq = vec![0.0; d];
    let mut dv = vec![0.0; d];
    for j in 0..n {
        gq.iter_mut().for_each(|v| *v = 0.0);
        let (qt, qs) = (q.class_points.time(j), q.class_points.spatial(j));
        for i in 0..c {
            let g = d_class[(j, i)];
            if g == 0.0 {
                continue;
            }
            distance_grad_kernel(qt, qs, a.time(i), a.spatial(i), -cfg.w_d * g, &mut gq);
            let ext = ext_kernel(a.time(i), a.spatial(i), a.spatial_norm(i), qt, qs, 1.0).unwrap_or(0.0);
            if ext > protos.set.aperture(i) {
                ext_point_grad_kernel(qt, qs, a.time(i), a.spatial(i), a.spatial_norm(i), -g, &mut gq);
            }
        }
        exp_origin_vjp(&params.class_tangent[j * d..(j + 1) * d], &gq, 1.0, &mut dv);
        grad[enc_len + j * d..enc_len + (j + 1) * d].copy_from_slice(&dv);
    }
    grad[enc_len + 2 * n * d] = (0..n).map(|j| d_class[(j, c)]).sum();

    // pixels and mask queries
    let matched: Vec<usize> = row_of.clone();
    let width = enc_len + n * d;
    let enc = &params.encoder;
    let sums = par::chunked_sum(exec, np, width, |p, acc| {
        let f = scene.feature(p);
        let mut h = vec![0.0; enc.hidden];
        let mut z = vec![0.0; d];
        enc.forward_pixel(f, &mut h, &mut z);
        let v: Vec<f64> = z.iter().map(|x| enc.alpha_img * x).collect();
        let mut ys = vec![0.0; d];
        exp_origin_spatial(&v, 1.0, &mut ys);
        let yt = time_from_norm_sq(norm_sq(&ys), 1.0);
        let mut gy = vec![0.0; d];
        let (genc, gmask) = acc.split_at_mut(enc_len);
        for &j in &matched {
            let gz = d_mask[(j, p)];
            if gz == 0.0 {
                continue;
            }
            let m = &q.mask_points;
            let (mt, ms, mn) = (m.time(j), m.spatial(j), m.spatial_norm(j));
            let gm = &mut gmask[j * d..(j + 1) * d];
            distance_grad_kernel(mt, ms, yt, &ys, -gz / cfg.s_d, gm);
            distance_grad_kernel(yt, &ys, mt, ms, -gz / cfg.s_d, &mut gy);
            if cfg.angle_term {
                ext_anchor_grad_kernel(mt, ms, mn, yt, &ys, -gz / cfg.s_a, gm);
                ext_point_grad_kernel(yt, &ys, mt, ms, mn, -gz / cfg.s_a, &mut gy);
            }
        }
        let mut dv = vec![0.0; d];
        exp_origin_vjp(&v, &gy, 1.0, &mut dv);
        enc.backward_pixel(f, &h, &z, &dv, genc);
    });
    grad[..enc_len].copy_from_slice(&sums[..enc_len]);
    for j in 0..n {
        let gm = &sums[enc_len + j * d..enc_len + (j + 1) * d];
        exp_origin_vjp(&params.mask_tangent[j * d..(j + 1) * d], gm, 1.0, &mut dv);
        let off = enc_len + n * d + j * d;
        grad[off..off + d].copy_from_slice(&dv);
    }
    Ok((loss, grad))
}

fn init_params(exec: Exec, scene: &SyntheticScene, dim: usize, cfg: &MaskTrainConfig) -> Result<MaskHeadParams> {
    use rand_distr::{Distribution, Normal};
    let mut encoder = EncoderParams::init(scene.d_in, cfg.hidden, dim, cfg.seed)?;
    let t = crate::segtoy::encoder_forward(exec, &encoder, &scene.features)?;
    let mean = t.chunks(dim).map(|r| norm_sq(r).sqrt()).sum::<f64>() / scene.pixels() as f64;
    if mean > 0.0 && mean.is_finite() {
        encoder.alpha_img = 1.0 / mean;
    }
    let n = cfg.head.queries;
    let mut r = rng::stream(cfg.seed, 1);
    let normal = Normal::new(0.0, cfg.query_init / (dim as f64).sqrt()).map_err(|e| Error::Usage(e.to_string()))?;
    let class_tangent = (0..n * dim).map(|_| normal.sample(&mut r)).collect();
    let mask_tangent = (0..n * dim).map(|_| normal.sample(&mut r)).collect();
    Ok(MaskHeadParams { encoder, queries: n, dim, class_tangent, mask_tangent, no_object_bias: 0.0 })
}

pub fn train_maskhead(exec: Exec, scene: &SyntheticScene, protos: &Prototypes, cfg: &MaskTrainConfig) -> Result<TrainedMaskHead> {
    cfg.head.validate()?;
    if !(cfg.lr >= 0.0) || cfg.hidden == 0 {
        return Err(Error::Usage(format!("invalid mask training config: {cfg:?}")));
    }
    let segments = segments_from_labels(&scene.labels, protos.len());
    let mut params = init_params(exec, scene, protos.dim(), cfg)?;
    let mut theta = params.flatten();
    let mut m1 = vec![0.0; theta.len()];
    let mut m2 = vec![0.0; theta.len()];
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    // AdamW with decoupled weight decay
    for epoch in 0..cfg.epochs {
        let (loss, grad) = maskhead_loss_and_grad(exec, &params, protos, scene, &segments, &cfg.head, true)?;
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training { step: epoch, message: format!("non-finite mask-head loss {}", loss.total) });
        }
        trace.push(MaskTraceRow { epoch, ce: loss.ce, focal: loss.focal, dice: loss.dice, total: loss.total });
        let t = (epoch + 1) as i32;
        let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
        for i in 0..theta.len() {
            m1[i] = cfg.beta1 * m1[i] + (1.0 - cfg.beta1) * grad[i];
            m2[i] = cfg.beta2 * m2[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let step = (m1[i] / c1) / ((m2[i] / c2).sqrt() + cfg.eps);
            theta[i] -= cfg.lr * (step + cfg.weight_decay * theta[i]);
        }
        params.unflatten(&theta)?;
    }
    let (final_loss, _) = maskhead_loss_and_grad(exec, &params, protos, scene, &segments, &cfg.head, false)?;
    trace.push(MaskTraceRow {
        epoch: cfg.epochs,
        ce: final_loss.ce,
        focal: final_loss.focal,
        dice: final_loss.dice,
        total: final_loss.total,
    });
    Ok(TrainedMaskHead { params, config: cfg.clone(), trace, final_loss })
}
