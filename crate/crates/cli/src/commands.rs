use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use lsk_core::entailment::EntailmentConfig;
use lsk_core::grad::{
    cosine_similarity, grad_euclidean_distance, grad_euclidean_exterior_angle, grad_exterior_angle, grad_lorentz_distance,
    grad_sign_predictor, gradient_interaction_report_with, GradientReportConfig,
};
use lsk_core::hyperbolicity::{batched_delta_rel, EmbeddingSet, Metric};
use lsk_core::io;
use lsk_core::landscape::{model_loss_grid, LandscapeConfig};
use lsk_core::lorentz::lift_point;
use lsk_core::maskhead::{self, MaskHeadConfig, MaskHeadParams, MaskLoss, MaskTrainConfig};
use lsk_core::segtoy::{
    embed, generate_scene, held_out_protocol, infer as infer_map, miou, pixel_accuracy, prepare, targets_from_labels, train_with,
    EncoderParams, HeadKind, InferMode, LabelMap, LossParts, Prototypes, SceneConfig, SyntheticScene, TrainConfig,
    TrainedModel,
};
use lsk_core::uncertainty::{
    angle_uncertainty, boundary_map, class_confidence, radius_uncertainty, ScalarMap, DEFAULT_BOUNDARY_PERCENTILE,
};
use lsk_core::{Curvature, Exec};

use crate::args::*;
use crate::manifest::{beside, Recorder, RunManifest};

/// A flag-level validation failure (exit status 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exec() -> Exec {
    Exec::default()
}

fn to_metric(m: MetricArg) -> Metric {
    match m {
        MetricArg::Euclidean => Metric::Euclidean,
        MetricArg::Lorentz => Metric::Lorentz,
    }
}

pub fn deltahyp(argv: &[String], a: DeltahypArgs) -> Result<ExitCode> {
    let mut rec = Recorder::new("deltahyp", argv, &a, Some(a.seed));
    rec.input(&a.input);
    let set = EmbeddingSet::load(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let report = batched_delta_rel(exec(), &set, a.batch_size, a.batches, a.seed, to_metric(a.metric))?;
    io::write_json(&a.out, &report)?;
    rec.outputs([a.out.clone()]);
    rec.finish(&beside(&a.out))?;
    println!("delta_rel = {:.6} (delta {:.6}, diameter {:.6}, {} batches of {})", report.delta_rel, report.delta, report.diameter, report.batch_count, report.batch_size);
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(argv: &[String], a: GradcheckArgs) -> Result<ExitCode> {
    let mut rec = Recorder::new("gradcheck", argv, &a, Some(a.seed));
    let cfg = GradientReportConfig { dim: a.dim, inject_sign_flip: a.inject_sign_flip, ..GradientReportConfig::new(a.samples, a.seed) };
    let report = gradient_interaction_report_with(exec(), &cfg)?;
    io::write_json(&a.out, &report)?;
    rec.outputs([a.out.clone()]);
    rec.finish(&beside(&a.out))?;
    let ok = report.passes();
    println!(
        "max relative error {:.3e}, sign agreement {:.6} over {} pairs, {} orthogonality violations: {}",
        report.max_rel_error,
        report.sign_agreement_rate,
        report.sign_samples,
        report.euclidean_orthogonality_violations,
        if ok { "PASS" } else { "FAIL" }
    );
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn parse_target(s: &str) -> Result<[f64; 2]> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--target must be 'x,y', got '{s}'")))?;
    match v[..] {
        [x, y] if x.is_finite() && y.is_finite() => Ok([x, y]),
        _ => Err(usage(format!("--target must be 'x,y', got '{s}'"))),
    }
}

pub const GRADFIELD_HEADER: &str =
    "# lsk.gradfield/1\nvariant,v1,v2,grad_d_x,grad_d_y,grad_d_norm,grad_ext_x,grad_ext_y,grad_ext_norm,cosine,predicted_sign";

fn norm2(g: &[f64]) -> f64 {
    g.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn field_row(variant: &str, v: [f64; 2], gd: Vec<f64>, ga: Vec<f64>, sign: i8) -> String {
    let cos = if norm2(&gd) > 0.0 && norm2(&ga) > 0.0 { cosine_similarity(&gd, &ga) } else { 0.0 };
    format!(
        "{variant},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{sign}\n",
        v[0],
        v[1],
        gd[0],
        gd[1],
        norm2(&gd),
        ga[0],
        ga[1],
        norm2(&ga),
        cos
    )
}

/// Rows over a square grid of spatial coordinates. Lorentz rows lift each
/// grid point onto the hyperboloid; gradients are taken with respect to the
/// spatial coordinates. Undefined gradients are written as zeros.
pub fn gradfield_csv(extent: f64, resolution: usize, target: [f64; 2]) -> Result<String> {
    if resolution < 2 {
        return Err(usage(format!("--resolution must be >= 2, got {resolution}")));
    }
    if !(extent > 0.0 && extent.is_finite()) {
        return Err(usage(format!("--grid-extent must be positive, got {extent}")));
    }
    if target == [0.0, 0.0] {
        return Err(usage("--target must not be the origin"));
    }
    let y = lift_point(&target, Curvature::UNIT)?;
    let zero = || vec![0.0, 0.0];
    let mut s = String::from(GRADFIELD_HEADER);
    s.push('\n');
    let step = 2.0 * extent / (resolution - 1) as f64;
    let coords: Vec<f64> = (0..resolution).map(|i| -extent + step * i as f64).collect();
    for variant in ["euclidean", "lorentz"] {
        for &v1 in &coords {
            for &v2 in &coords {
                let v = [v1, v2];
                if variant == "euclidean" {
                    let gd = if v == target { zero() } else { grad_euclidean_distance(&v, &target).unwrap_or_else(|_| zero()) };
                    let ga = grad_euclidean_exterior_angle(&target, &v).unwrap_or_else(|_| zero());
                    s.push_str(&field_row(variant, v, gd, ga, 0));
                } else {
                    let x = lift_point(&v, Curvature::UNIT)?;
                    let gd = if v == target { zero() } else { grad_lorentz_distance(&x, &y).unwrap_or_else(|_| zero()) };
                    let ga = grad_exterior_angle(&x, &y).unwrap_or_else(|_| zero());
                    let sign = grad_sign_predictor(&x, &y)?;
                    s.push_str(&field_row(variant, v, gd, ga, sign));
                }
            }
        }
    }
    Ok(s)
}

pub fn gradfield(argv: &[String], a: GradfieldArgs) -> Result<ExitCode> {
    let mut rec = Recorder::new("gradfield", argv, &a, None);
    let csv = gradfield_csv(a.grid_extent, a.resolution, parse_target(&a.target)?)?;
    write_file(&a.out, csv.as_bytes())?;
    rec.outputs([a.out.clone()]);
    rec.finish(&beside(&a.out))?;
    println!("wrote {} rows to {}", 2 * a.resolution * a.resolution, a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn scene_config(s: &SceneArgs) -> SceneConfig {
    SceneConfig {
        descriptor_dim: s.descriptor_dim,
        ..SceneConfig::new(s.parents, s.children, s.height, s.width, s.noise, s.scene_seed).with_blend(s.blend)
    }
}

fn check_scene(s: &SceneArgs) -> Result<()> {
    if s.dim == 0 {
        return Err(usage("--dim must be >= 1"));
    }
    if !(s.noise >= 0.0 && s.noise.is_finite()) {
        return Err(usage(format!("--noise must be >= 0, got {}", s.noise)));
    }
    Ok(())
}

/// Training settings of the Euclidean baseline; it has no cone or
/// entailment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub epochs: usize,
    pub lr: f64,
    pub tau: f64,
    pub seed: u64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub hidden: usize,
}

impl BaselineConfig {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            tau: self.tau,
            seed: self.seed,
            weight_decay: self.weight_decay,
            momentum: self.momentum,
            hidden: self.hidden,
            head: HeadKind::Euclidean,
            lambda_w: 0.0,
            ..TrainConfig::default()
        }
    }
}

/// Shapes and settings stored next to the parameter blob.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PixelMeta {
    pub scene: SceneConfig,
    pub dim: usize,
    pub head: HeadKind,
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
    pub encoder_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineConfig>,
    pub final_loss: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_warning: Option<String>,
}

impl PixelMeta {
    fn train_config(&self) -> Result<TrainConfig> {
        match (&self.train, &self.baseline) {
            (Some(t), _) => Ok(t.clone()),
            (None, Some(b)) => Ok(b.train_config()),
            _ => bail!(lsk_core::Error::Parse { line: 0, message: "model has no training config".into() }),
        }
    }

    fn cone_k(&self) -> f64 {
        self.train.as_ref().map_or(EntailmentConfig::default().k, |t| t.k)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskMeta {
    pub scene: SceneConfig,
    pub dim: usize,
    pub k: f64,
    pub d_in: usize,
    pub hidden: usize,
    pub d_out: usize,
    pub queries: usize,
    pub encoder_seed: u64,
    pub train: MaskTrainConfig,
    pub final_loss: MaskLoss,
}

/// Everything needed to evaluate a saved model on its scene.
pub enum Loaded {
    Pixel { meta: PixelMeta, model: TrainedModel, scene: SyntheticScene, protos: Prototypes },
    Mask { meta: MaskMeta, params: MaskHeadParams, scene: SyntheticScene, protos: Prototypes },
}

fn protos_for(scene: &SyntheticScene, dim: usize, k: f64) -> Result<Prototypes> {
    Ok(prepare(scene, dim, &EntailmentConfig::new(k, Curvature::UNIT)?)?.1)
}

pub fn load(path: &Path) -> Result<Loaded> {
    load_inner(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_inner(path: &Path) -> Result<Loaded> {
    let header: io::ModelHeader<serde_json::Value> = io::read_json(path)?;
    match header.kind.as_str() {
        "pixel" => {
            let (h, blob) = io::load_model::<PixelMeta>(path, "pixel")?;
            let meta = h.meta;
            let mut params = EncoderParams::zeros(meta.d_in, meta.hidden, meta.d_out);
            params.seed = meta.encoder_seed;
            params.unflatten(&blob)?;
            let scene = generate_scene(&meta.scene)?;
            let protos = protos_for(&scene, meta.dim, meta.cone_k())?;
            let config = meta.train_config()?;
            let final_loss: LossParts = serde_json::from_value(meta.final_loss.clone()).unwrap_or(LossParts {
                ce: f64::NAN,
                entail: 0.0,
                total: meta.final_loss["total"].as_f64().unwrap_or(f64::NAN),
            });
            let model = TrainedModel { params, config, trace: Vec::new(), final_loss };
            Ok(Loaded::Pixel { meta, model, scene, protos })
        }
        "mask" => {
            let (h, blob) = io::load_model::<MaskMeta>(path, "mask")?;
            let meta = h.meta;
            let mut encoder = EncoderParams::zeros(meta.d_in, meta.hidden, meta.d_out);
            encoder.seed = meta.encoder_seed;
            let q = meta.queries * meta.d_out;
            let mut params = MaskHeadParams {
                encoder,
                queries: meta.queries,
                dim: meta.d_out,
                class_tangent: vec![0.0; q],
                mask_tangent: vec![0.0; q],
                no_object_bias: 0.0,
            };
            params.unflatten(&blob)?;
            let scene = generate_scene(&meta.scene)?;
            let protos = protos_for(&scene, meta.dim, meta.k)?;
            Ok(Loaded::Mask { meta, params, scene, protos })
        }
        other => Err(usage(format!("{} holds an unknown model kind '{other}'", path.display()))),
    }
}

#[derive(Debug, Serialize)]
struct PixelMetrics {
    head: HeadKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    miou_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    miou_angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    miou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<f64>,
    pixel_accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_loss: Option<serde_json::Value>,
}

/// Label maps of a per-pixel model; writes them under `dir`.
fn pixel_maps(
    model: &TrainedModel,
    scene: &SyntheticScene,
    protos: &Prototypes,
    mode: ModeArg,
    dir: &Path,
    rec: &mut Recorder,
) -> Result<PixelMetrics> {
    let ex = exec();
    let grid = embed(ex, &model.params, scene)?;
    let gt = LabelMap::from_scene(scene);
    let c = protos.len();
    if model.config.head == HeadKind::Euclidean {
        let map = infer_map(ex, &grid, protos, InferMode::Euclidean)?;
        rec.outputs(io::write_label_map(&dir.join("labels_euclidean"), &map)?);
        let m = miou(&map, &gt, c)?;
        println!("mIoU (euclidean): {m:.6}");
        return Ok(PixelMetrics {
            head: HeadKind::Euclidean,
            miou_distance: None,
            miou_angle: None,
            miou: Some(m),
            agreement: None,
            pixel_accuracy: pixel_accuracy(&map, &gt)?,
            final_loss: None,
        });
    }
    let want_d = mode != ModeArg::Angle;
    let want_a = mode != ModeArg::Distance;
    let dmap = want_d.then(|| infer_map(ex, &grid, protos, InferMode::Distance)).transpose()?;
    let amap = want_a.then(|| infer_map(ex, &grid, protos, InferMode::Angle)).transpose()?;
    let mut out = PixelMetrics {
        head: HeadKind::Lorentz,
        miou_distance: None,
        miou_angle: None,
        miou: None,
        agreement: None,
        pixel_accuracy: 0.0,
        final_loss: None,
    };
    if let Some(m) = &dmap {
        rec.outputs(io::write_label_map(&dir.join("labels_distance"), m)?);
        let v = miou(m, &gt, c)?;
        println!("mIoU (distance): {v:.6}");
        out.miou_distance = Some(v);
        out.pixel_accuracy = pixel_accuracy(m, &gt)?;
    }
    if let Some(m) = &amap {
        rec.outputs(io::write_label_map(&dir.join("labels_angle"), m)?);
        let v = miou(m, &gt, c)?;
        println!("mIoU (angle): {v:.6}");
        out.miou_angle = Some(v);
        if dmap.is_none() {
            out.pixel_accuracy = pixel_accuracy(m, &gt)?;
        }
    }
    if let (Some(d), Some(a)) = (&dmap, &amap) {
        let ag = d.agreement(a)?;
        println!("distance/angle agreement: {ag:.6}");
        out.agreement = Some(ag);
    }
    Ok(out)
}

fn mask_map(params: &MaskHeadParams, scene: &SyntheticScene, protos: &Prototypes, head: &MaskHeadConfig, dir: &Path, rec: &mut Recorder) -> Result<serde_json::Value> {
    let pred = maskhead::predict(exec(), params, protos, scene, head)?;
    let map = pred.semantic_map(protos)?;
    let gt = LabelMap::from_scene(scene);
    rec.outputs(io::write_label_map(&dir.join("labels"), &map)?);
    let m = miou(&map, &gt, protos.len())?;
    println!("mIoU (mask head): {m:.6}");
    Ok(serde_json::json!({ "head": "mask", "miou": m, "pixel_accuracy": pixel_accuracy(&map, &gt)? }))
}

fn mask_trace_csv(t: &maskhead::TrainedMaskHead) -> String {
    let mut s = String::from("epoch,ce,focal,dice,total\n");
    for r in &t.trace {
        s.push_str(&format!("{},{:?},{:?},{:?},{:?}\n", r.epoch, r.ce, r.focal, r.dice, r.total));
    }
    s
}

fn baseline_trace_csv(t: &TrainedModel) -> String {
    let mut s = String::from("epoch,ce,total\n");
    for r in &t.trace {
        s.push_str(&format!("{},{:?},{:?}\n", r.epoch, r.ce, r.total));
    }
    s
}

fn check_train_flags(a: &TrainArgs, lr: f64) -> Result<()> {
    check_scene(&a.scene)?;
    let bad = |flag: &str, v: f64| usage(format!("{flag} has invalid value {v}"));
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(bad("--lr", lr));
    }
    if !(a.tau > 0.0) {
        return Err(bad("--tau", a.tau));
    }
    if !(a.k > 0.0) {
        return Err(bad("--k", a.k));
    }
    if !(a.lambda_w >= 0.0) {
        return Err(bad("--lambda-w", a.lambda_w));
    }
    if !(a.weight_decay >= 0.0) {
        return Err(bad("--weight-decay", a.weight_decay));
    }
    if !(0.0..1.0).contains(&a.momentum) {
        return Err(bad("--momentum", a.momentum));
    }
    if a.hidden == 0 {
        return Err(usage("--hidden must be >= 1"));
    }
    if a.queries == 0 {
        return Err(usage("--queries must be >= 1"));
    }
    Ok(())
}

pub fn train(argv: &[String], a: TrainArgs, baseline: bool) -> Result<ExitCode> {
    let name = if baseline { "euclid-baseline" } else { "train" };
    let mask = a.head == HeadArg::Mask;
    if baseline && mask {
        return Err(usage("--head mask is not available for the Euclidean baseline"));
    }
    let epochs = a.epochs.unwrap_or(if mask { 300 } else { 500 });
    let lr = a.lr.unwrap_or(if mask { 0.01 } else { 0.05 });
    check_train_flags(&a, lr)?;
    let mut rec = Recorder::new(name, argv, &a, Some(a.seed));
    let scene_cfg = scene_config(&a.scene);
    let scene = generate_scene(&scene_cfg)?;
    let k = if baseline { EntailmentConfig::default().k } else { a.k };
    let (bank, protos) = prepare(&scene, a.scene.dim, &EntailmentConfig::new(k, Curvature::UNIT)?)?;
    if let Some(w) = &bank.pca.warning {
        eprintln!("warning: {w}");
    }
    let dir = &a.out_dir;
    fs::create_dir_all(dir)?;
    let metrics = if mask {
        let head = MaskHeadConfig {
            queries: a.queries,
            w_d: a.w_d,
            angle_term: !a.no_angle_term,
            gamma: a.gamma,
            lambda_cls: a.lambda_cls,
            lambda_focal: a.lambda_focal,
            lambda_dice: a.lambda_dice,
            no_object_weight: a.no_object_weight,
            ..MaskHeadConfig::default()
        };
        let cfg = MaskTrainConfig { epochs, lr, seed: a.seed, weight_decay: a.weight_decay, hidden: a.hidden, head, ..MaskTrainConfig::default() };
        let t = maskhead::train_maskhead(exec(), &scene, &protos, &cfg)?;
        let meta = MaskMeta {
            scene: scene_cfg,
            dim: a.scene.dim,
            k,
            d_in: t.params.encoder.d_in,
            hidden: t.params.encoder.hidden,
            d_out: t.params.encoder.d_out,
            queries: t.params.queries,
            encoder_seed: t.params.encoder.seed,
            train: cfg.clone(),
            final_loss: t.final_loss,
        };
        rec.outputs(io::save_model(&dir.join("model.json"), "mask", &meta, &t.params.flatten())?);
        write_file(&dir.join("trace.csv"), mask_trace_csv(&t).as_bytes())?;
        rec.outputs([dir.join("trace.csv")]);
        let mut m = mask_map(&t.params, &scene, &protos, &cfg.head, dir, &mut rec)?;
        m["final_loss"] = serde_json::to_value(t.final_loss)?;
        m
    } else {
        let (cfg, train_meta, baseline_meta) = if baseline {
            let b = BaselineConfig { epochs, lr, tau: a.tau, seed: a.seed, weight_decay: a.weight_decay, momentum: a.momentum, hidden: a.hidden };
            (b.train_config(), None, Some(b))
        } else {
            let t = TrainConfig {
                epochs,
                lr,
                lambda_w: a.lambda_w,
                tau: a.tau,
                k: a.k,
                seed: a.seed,
                weight_decay: a.weight_decay,
                momentum: a.momentum,
                hidden: a.hidden,
                head: HeadKind::Lorentz,
            };
            (t.clone(), Some(t), None)
        };
        let targets = targets_from_labels(&scene);
        let t = train_with(exec(), &scene, &targets, &protos, &cfg)?;
        let final_loss = if baseline {
            serde_json::json!({ "ce": t.final_loss.ce, "total": t.final_loss.total })
        } else {
            serde_json::to_value(t.final_loss)?
        };
        let meta = PixelMeta {
            scene: scene_cfg,
            dim: a.scene.dim,
            head: cfg.head,
            d_in: t.params.d_in,
            hidden: t.params.hidden,
            d_out: t.params.d_out,
            encoder_seed: t.params.seed,
            train: train_meta,
            baseline: baseline_meta,
            final_loss: final_loss.clone(),
            pca_warning: bank.pca.warning.clone(),
        };
        rec.outputs(io::save_model(&dir.join("model.json"), "pixel", &meta, &t.params.flatten())?);
        let trace = if baseline { baseline_trace_csv(&t) } else { lsk_core::segtoy::trace_csv(&t.trace) };
        write_file(&dir.join("trace.csv"), trace.as_bytes())?;
        rec.outputs([dir.join("trace.csv")]);
        let mut m = pixel_maps(&t, &scene, &protos, ModeArg::Both, dir, &mut rec)?;
        m.final_loss = Some(final_loss);
        serde_json::to_value(m)?
    };
    println!("final loss: {}", metrics["final_loss"]["total"]);
    io::write_json(&dir.join("metrics.json"), &metrics)?;
    rec.outputs([dir.join("metrics.json")]);
    rec.finish(&dir.join("manifest.json"))?;
    Ok(ExitCode::SUCCESS)
}

pub fn infer(argv: &[String], a: InferArgs) -> Result<ExitCode> {
    let mut rec = Recorder::new("infer", argv, &a, None);
    rec.input(&a.model);
    let dir = &a.out_dir;
    fs::create_dir_all(dir)?;
    let (metrics, grid, lorentz) = match load(&a.model)? {
        Loaded::Pixel { model, scene, protos, .. } => (
            serde_json::to_value(pixel_maps(&model, &scene, &protos, a.mode, dir, &mut rec)?)?,
            embed(exec(), &model.params, &scene)?,
            model.config.head == HeadKind::Lorentz,
        ),
        Loaded::Mask { meta, params, scene, protos } => (
            mask_map(&params, &scene, &protos, &meta.train.head, dir, &mut rec)?,
            embed(exec(), &params.encoder, &scene)?,
            true,
        ),
    };
    // hyperboloid spatial coordinates for Lorentz heads, tangent vectors otherwise
    let points = (0..grid.pixels())
        .map(|p| if lorentz { grid.points.spatial(p).to_vec() } else { grid.tangent_at(p).to_vec() })
        .collect();
    let set = EmbeddingSet { dim: grid.dim(), points };
    write_file(&dir.join("embeddings.csv"), set.to_csv().as_bytes())?;
    rec.outputs([dir.join("embeddings.csv")]);
    io::write_json(&dir.join("metrics.json"), &metrics)?;
    rec.outputs([dir.join("metrics.json")]);
    rec.finish(&dir.join("manifest.json"))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize)]
struct MapStats {
    boundary_mean: Option<f64>,
    interior_mean: Option<f64>,
    margin: Option<f64>,
}

impl MapStats {
    fn of(map: &ScalarMap, boundary: &[bool]) -> Self {
        let b = map.masked_mean(boundary, true);
        let i = map.masked_mean(boundary, false);
        Self { boundary_mean: b, interior_mean: i, margin: b.zip(i).map(|(b, i)| b - i) }
    }
}

pub fn uncertainty(argv: &[String], a: UncertaintyArgs) -> Result<ExitCode> {
    if !(a.percentile > 0.0 && a.percentile <= 100.0) {
        return Err(usage(format!("--percentile must be in (0, 100], got {}", a.percentile)));
    }
    let mut rec = Recorder::new("uncertainty", argv, &a, None);
    rec.input(&a.model);
    let ex = exec();
    let (grid, anchors, scene, head) = match load(&a.model)? {
        Loaded::Pixel { mut model, scene, protos, meta } => {
            if meta.head == HeadKind::Euclidean {
                return Err(usage("uncertainty maps need a hyperbolic model; this one is the Euclidean baseline"));
            }
            if a.untrained {
                model.params = EncoderParams::zeros(model.params.d_in, model.params.hidden, model.params.d_out);
            }
            (embed(ex, &model.params, &scene)?, protos.set.anchors().clone(), scene, "pixel")
        }
        Loaded::Mask { mut params, scene, .. } => {
            if a.untrained {
                params.encoder = EncoderParams::zeros(params.encoder.d_in, params.encoder.hidden, params.encoder.d_out);
            }
            let q = params.query_set()?;
            (embed(ex, &params.encoder, &scene)?, q.mask_points, scene, "mask")
        }
    };
    if a.class >= scene.classes() {
        return Err(usage(format!("--class {} out of range for {} classes", a.class, scene.classes())));
    }
    let dir = &a.out_dir;
    fs::create_dir_all(dir)?;
    let radius = radius_uncertainty(ex, &grid)?;
    let angle = angle_uncertainty(ex, &grid, &anchors)?;
    let members: Vec<usize> = (0..scene.pixels()).filter(|&p| scene.labels[p] == a.class).collect();
    let confidence = class_confidence(ex, &grid, &members)?;
    let boundary = boundary_map(&angle, a.percentile)?;
    if let Some(w) = &boundary.warning {
        eprintln!("warning: {w}");
    }
    for (name, m) in [("radius", &radius), ("angle", &angle), ("confidence", &confidence), ("boundary", &boundary)] {
        rec.outputs(io::write_scalar_map(&dir.join(name), m)?);
    }
    let gt_boundary = scene.boundary_mask(1);
    let flagged = boundary.values.iter().zip(&gt_boundary).filter(|(v, b)| **b && **v > 0.5).count();
    let border = gt_boundary.iter().filter(|b| **b).count();
    let member_mask: Vec<bool> = scene.labels.iter().map(|&l| l == a.class).collect();
    let stats = serde_json::json!({
        "head": head,
        "untrained": a.untrained,
        "percentile": a.percentile,
        "default_percentile": DEFAULT_BOUNDARY_PERCENTILE,
        "radius": MapStats::of(&radius, &gt_boundary),
        "angle": MapStats::of(&angle, &gt_boundary),
        "confidence": {
            "class": a.class,
            "member_mean": confidence.masked_mean(&member_mask, true),
            "non_member_mean": confidence.masked_mean(&member_mask, false),
        },
        "boundary_recall": if border == 0 { 0.0 } else { flagged as f64 / border as f64 },
    });
    println!(
        "boundary vs interior: radius {} / {}, angle {} / {}",
        stats["radius"]["boundary_mean"], stats["radius"]["interior_mean"], stats["angle"]["boundary_mean"], stats["angle"]["interior_mean"]
    );
    io::write_json(&dir.join("stats.json"), &stats)?;
    rec.outputs([dir.join("stats.json")]);
    rec.finish(&dir.join("manifest.json"))?;
    Ok(ExitCode::SUCCESS)
}

pub fn losscape(argv: &[String], a: LosscapeArgs) -> Result<ExitCode> {
    let mut rec = Recorder::new("losscape", argv, &a, Some(a.directions_seed));
    rec.input(&a.trained);
    let cfg = LandscapeConfig { grid: a.grid, extent: a.extent, directions_seed: a.directions_seed, ..LandscapeConfig::default() };
    cfg.validate()?;
    let Loaded::Pixel { meta, model, scene, protos } = load(&a.trained)? else {
        return Err(usage("losscape supports per-pixel models only"));
    };
    let targets = targets_from_labels(&scene);
    let grid = model_loss_grid(exec(), &model, &scene, &targets, &protos, &cfg)?;
    write_file(&a.out, grid.to_csv().as_bytes())?;
    let final_total = meta.final_loss["total"].as_f64().unwrap_or(f64::NAN);
    let matches = grid.center == final_total;
    let summary = serde_json::json!({
        "head": meta.head,
        "grid": cfg.grid,
        "extent": cfg.extent,
        "directions_seed": cfg.directions_seed,
        "center": grid.center,
        "final_loss": final_total,
        "center_matches_final_loss": matches,
        "curvature_proxy": grid.curvature_proxy,
        "min": grid.values.iter().copied().fold(f64::INFINITY, f64::min),
        "max": grid.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });
    let side = a.out.with_extension("json");
    io::write_json(&side, &summary)?;
    rec.outputs([a.out.clone(), side]);
    rec.finish(&beside(&a.out))?;
    println!("center {:?} (final {:?}), curvature proxy {:.6}", grid.center, final_total, grid.curvature_proxy);
    Ok(if matches { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

pub fn zeroshot(argv: &[String], a: ZeroshotArgs) -> Result<ExitCode> {
    check_scene(&a.scene)?;
    let mut rec = Recorder::new("zeroshot", argv, &a, Some(a.seed));
    let scene = generate_scene(&scene_config(&a.scene))?;
    let cfg = TrainConfig { epochs: a.epochs, lr: a.lr, lambda_w: a.lambda_w, seed: a.seed, ..TrainConfig::default() };
    cfg.validate().map_err(|e| usage(format!("{e}")))?;
    let classes: Vec<usize> = match a.held_out {
        Some(k) if k >= scene.classes() => return Err(usage(format!("--held-out {k} out of range for {} classes", scene.classes()))),
        Some(k) => vec![k],
        None => (0..scene.classes()).collect(),
    };
    let mut reports = Vec::new();
    for &k in &classes {
        let r = held_out_protocol(exec(), &scene, k, a.scene.dim, &cfg)?;
        println!("held out {} ({}): hyperbolic recall {:.4}, angle {:.4}, euclidean {:.4}", k, r.class_name, r.hyperbolic_recall, r.hyperbolic_angle_recall, r.euclidean_recall);
        reports.push(r);
    }
    let mean = |f: fn(&lsk_core::segtoy::ZeroShotReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
    let summary = serde_json::json!({
        "mean_hyperbolic_recall": mean(|r| r.hyperbolic_recall),
        "mean_hyperbolic_angle_recall": mean(|r| r.hyperbolic_angle_recall),
        "mean_euclidean_recall": mean(|r| r.euclidean_recall),
        "reports": reports,
    });
    println!(
        "mean recall: hyperbolic {:.4}, hyperbolic (angle) {:.4}, euclidean {:.4}",
        summary["mean_hyperbolic_recall"].as_f64().unwrap_or(f64::NAN),
        summary["mean_hyperbolic_angle_recall"].as_f64().unwrap_or(f64::NAN),
        summary["mean_euclidean_recall"].as_f64().unwrap_or(f64::NAN)
    );
    io::write_json(&a.out, &summary)?;
    rec.outputs([a.out.clone()]);
    rec.finish(&beside(&a.out))?;
    Ok(ExitCode::SUCCESS)
}

pub fn replay(a: ReplayArgs) -> Result<ExitCode> {
    let m: RunManifest = io::read_json(&a.manifest)?;
    if m.argv.first().map(String::as_str) == Some("replay") {
        return Err(usage("refusing to replay a replay manifest"));
    }
    eprintln!("replaying: lsk {}", m.argv.join(" "));
    Ok(crate::run(m.argv))
}

