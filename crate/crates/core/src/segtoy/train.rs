//! Full-batch training of the pixel encoder against fixed prototypes.

use serde::{Deserialize, Serialize};

use crate::entailment::{log_sum_exp, softmax};
use crate::error::{check_dim, Error, Result};
use crate::grad::{distance_grad_kernel, exp_origin_vjp, ext_point_grad_kernel};
use crate::lorentz::{distance_kernel, exp_origin_spatial, norm_sq, time_from_norm_sq};
use crate::par::{self, Exec};

use super::encoder::EncoderParams;
use super::pca::Prototypes;
use super::scene::SyntheticScene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Lorentz distance logits plus the entailment hinge.
    Lorentz,
    /// Euclidean distance logits on the tangent vectors; no cones.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub lambda_w: f64,
    pub tau: f64,
    pub k: f64,
    pub seed: u64,
    pub weight_decay: f64,
    /// Heavy-ball coefficient; 0 is plain gradient descent.
    pub momentum: f64,
    pub hidden: usize,
    pub head: HeadKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            lr: 0.05,
            lambda_w: 0.5,
            tau: 0.1,
            k: 0.1,
            seed: 42,
            weight_decay: 1e-4,
            momentum: 0.0,
            hidden: 32,
            head: HeadKind::Lorentz,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && self.tau > 0.0
            && self.lambda_w >= 0.0
            && self.k > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.hidden > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Usage(format!("invalid training config: {self:?}")))
        }
    }
}

/// Mean per-pixel loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub ce: f64,
    pub entail: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub ce: f64,
    pub entail: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: EncoderParams,
    pub config: TrainConfig,
    /// Loss before each update; the last row is the loss after training.
    pub trace: Vec<TraceRow>,
    /// Loss recomputed at the final parameters.
    pub final_loss: LossParts,
}

/// Per-pixel training targets; `None` pixels are ignored.
pub fn targets_from_labels(scene: &SyntheticScene) -> Vec<Option<usize>> {
    scene.labels.iter().map(|&l| Some(l)).collect()
}

struct Scratch {
    h: Vec<f64>,
    z: Vec<f64>,
    v: Vec<f64>,
    ys: Vec<f64>,
    logits: Vec<f64>,
    g: Vec<f64>,
    dv: Vec<f64>,
}

impl Scratch {
    fn new(p: &EncoderParams, classes: usize) -> Self {
        Self {
            h: vec![0.0; p.hidden],
            z: vec![0.0; p.d_out],
            v: vec![0.0; p.d_out],
            ys: vec![0.0; p.d_out],
            logits: vec![0.0; classes],
            g: vec![0.0; p.d_out],
            dv: vec![0.0; p.d_out],
        }
    }
}

/// Loss of one pixel; when `grad` is given, accumulates `dL/dtheta`.
fn pixel_step(
    params: &EncoderParams,
    protos: &Prototypes,
    cfg: &TrainConfig,
    f: &[f64],
    label: usize,
    s: &mut Scratch,
    grad: Option<&mut [f64]>,
) -> (f64, f64) {
    params.forward_pixel(f, &mut s.h, &mut s.z);
    for (v, z) in s.v.iter_mut().zip(&s.z) {
        *v = params.alpha_img * z;
    }
    let set = &protos.set;
    let anchors = set.anchors();
    let n = set.len();
    let (ce, entail);
    s.g.iter_mut().for_each(|x| *x = 0.0);
    match cfg.head {
        HeadKind::Lorentz => {
            exp_origin_spatial(&s.v, 1.0, &mut s.ys);
            let yt = time_from_norm_sq(norm_sq(&s.ys), 1.0);
            for i in 0..n {
                s.logits[i] = -distance_kernel(anchors.time(i), anchors.spatial(i), yt, &s.ys, 1.0) / cfg.tau;
            }
            ce = log_sum_exp(&s.logits) - s.logits[label];
            let ext = set.ext(label, yt, &s.ys).unwrap_or(0.0);
            let hinge = ext - set.aperture(label);
            entail = hinge.max(0.0);
            if grad.is_some() {
                let p = softmax(&s.logits);
                for (i, pi) in p.iter().enumerate() {
                    let w = (pi - if i == label { 1.0 } else { 0.0 }) * (-1.0 / cfg.tau);
                    distance_grad_kernel(yt, &s.ys, anchors.time(i), anchors.spatial(i), w, &mut s.g);
                }
                if hinge > 0.0 && cfg.lambda_w > 0.0 {
                    ext_point_grad_kernel(
                        yt,
                        &s.ys,
                        anchors.time(label),
                        anchors.spatial(label),
                        anchors.spatial_norm(label),
                        cfg.lambda_w,
                        &mut s.g,
                    );
                }
                exp_origin_vjp(&s.v, &s.g, 1.0, &mut s.dv);
            }
        }
        HeadKind::Euclidean => {
            let t = &protos.tangent;
            let mut dists = vec![0.0; n];
            for (i, slot) in dists.iter_mut().enumerate() {
                let d: f64 = s.v.iter().zip(t.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                *slot = d;
                s.logits[i] = -d / cfg.tau;
            }
            ce = log_sum_exp(&s.logits) - s.logits[label];
            entail = 0.0;
            if grad.is_some() {
                let p = softmax(&s.logits);
                for i in 0..n {
                    if dists[i] == 0.0 {
                        continue;
                    }
                    let w = (p[i] - if i == label { 1.0 } else { 0.0 }) * (-1.0 / cfg.tau) / dists[i];
                    for ((g, a), b) in s.g.iter_mut().zip(&s.v).zip(t.row(i)) {
                        *g += w * (a - b);
                    }
                }
                s.dv.copy_from_slice(&s.g);
            }
        }
    }
    if let Some(grad) = grad {
        params.backward_pixel(f, &s.h, &s.z, &s.dv, grad);
    }
    (ce, entail)
}

fn check_inputs(params: &EncoderParams, scene: &SyntheticScene, targets: &[Option<usize>], protos: &Prototypes) -> Result<()> {
    check_dim(scene.d_in, params.d_in)?;
    check_dim(protos.dim(), params.d_out)?;
    check_dim(scene.pixels(), targets.len())?;
    if let Some(bad) = targets.iter().flatten().find(|&&t| t >= protos.len()) {
        return Err(Error::Usage(format!("target class {bad} has no prototype")));
    }
    if targets.iter().all(Option::is_none) {
        return Err(Error::Usage("every pixel is ignored".into()));
    }
    Ok(())
}

/// Mean loss and, if `with_grad`, its gradient in the flat parameter layout.
pub fn loss_and_grad(
    exec: Exec,
    params: &EncoderParams,
    scene: &SyntheticScene,
    targets: &[Option<usize>],
    protos: &Prototypes,
    cfg: &TrainConfig,
    with_grad: bool,
) -> Result<(LossParts, Vec<f64>)> {
    check_inputs(params, scene, targets, protos)?;
    let np = params.param_count();
    let width = if with_grad { np + 3 } else { 3 };
    let sums = par::chunked_sum(exec, scene.pixels(), width, |px, acc| {
        let Some(label) = targets[px] else { return };
        let mut s = Scratch::new(params, protos.len());
        let (loss_acc, grad) = if with_grad {
            let (g, l) = acc.split_at_mut(np);
            (l, Some(g))
        } else {
            (acc, None)
        };
        let (ce, en) = pixel_step(params, protos, cfg, scene.feature(px), label, &mut s, grad);
        loss_acc[0] += ce;
        loss_acc[1] += en;
        loss_acc[2] += 1.0;
    });
    let (grad, tail) = sums.split_at(width - 3);
    let count = tail[2];
    let lambda = if cfg.head == HeadKind::Lorentz { cfg.lambda_w } else { 0.0 };
    let ce = tail[0] / count;
    let entail = tail[1] / count;
    let parts = LossParts { ce, entail, total: ce + lambda * entail };
    Ok((parts, grad.iter().map(|g| g / count).collect()))
}

pub fn evaluate_loss(
    exec: Exec,
    params: &EncoderParams,
    scene: &SyntheticScene,
    targets: &[Option<usize>],
    protos: &Prototypes,
    cfg: &TrainConfig,
) -> Result<LossParts> {
    Ok(loss_and_grad(exec, params, scene, targets, protos, cfg, false)?.0)
}

/// Sets `alpha_img` to the inverse mean norm of the initial encoder output.
fn init_alpha(exec: Exec, params: &mut EncoderParams, scene: &SyntheticScene) -> Result<()> {
    params.alpha_img = 1.0;
    let t = super::encoder::encoder_forward(exec, params, &scene.features)?;
    let n = scene.pixels() as f64;
    let mean = t.chunks(params.d_out).map(|r| norm_sq(r).sqrt()).sum::<f64>() / n;
    if mean > 0.0 && mean.is_finite() {
        params.alpha_img = 1.0 / mean;
    }
    Ok(())
}

pub fn train(scene: &SyntheticScene, targets: &[Option<usize>], protos: &Prototypes, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_with(Exec::default(), scene, targets, protos, cfg)
}

/// Gradient descent with decoupled weight decay and optional momentum.
pub fn train_with(
    exec: Exec,
    scene: &SyntheticScene,
    targets: &[Option<usize>],
    protos: &Prototypes,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let mut params = EncoderParams::init(scene.d_in, cfg.hidden, protos.dim(), cfg.seed)?;
    init_alpha(exec, &mut params, scene)?;
    let mut theta = params.flatten();
    let mut velocity = vec![0.0; theta.len()];
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = loss_and_grad(exec, &params, scene, targets, protos, cfg, true)?;
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training { step: epoch, message: format!("non-finite loss {}", loss.total) });
        }
        trace.push(TraceRow { epoch, ce: loss.ce, entail: loss.entail, total: loss.total });
        for ((t, v), g) in theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
            *v = cfg.momentum * *v + g;
            *t -= cfg.lr * (*v + cfg.weight_decay * *t);
        }
        params.unflatten(&theta)?;
    }
    let final_loss = evaluate_loss(exec, &params, scene, targets, protos, cfg)?;
    if !final_loss.total.is_finite() {
        return Err(Error::Training { step: cfg.epochs, message: "non-finite final loss".into() });
    }
    trace.push(TraceRow { epoch: cfg.epochs, ce: final_loss.ce, entail: final_loss.entail, total: final_loss.total });
    Ok(TrainedModel { params, config: cfg.clone(), trace, final_loss })
}

/// Trace as CSV with an `epoch,ce,entail,total` header.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("epoch,ce,entail,total\n");
    for r in trace {
        s.push_str(&format!("{},{:?},{:?},{:?}\n", r.epoch, r.ce, r.entail, r.total));
    }
    s
}
