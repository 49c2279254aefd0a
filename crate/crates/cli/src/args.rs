use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "lsk", version, about = "Lorentz-model geometry, hyperbolicity and toy segmentation heads")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Batched relative delta-hyperbolicity of an embedding CSV.
    Deltahyp(DeltahypArgs),
    /// Analytic-vs-finite-difference gradient report with the sign check.
    Gradcheck(GradcheckArgs),
    /// Distance and exterior-angle gradient directions over a 2-D grid.
    Gradfield(GradfieldArgs),
    /// Train a segmentation head on a synthetic scene.
    Train(TrainArgs),
    /// Train the Euclidean per-pixel baseline (no lift, no cones).
    EuclidBaseline(TrainArgs),
    /// Label maps from a trained model.
    Infer(InferArgs),
    /// Uncertainty, confidence and boundary maps from a trained model.
    Uncertainty(UncertaintyArgs),
    /// Loss surface around a trained per-pixel model.
    Losscape(LosscapeArgs),
    /// Held-out-class retrieval, hyperbolic vs Euclidean.
    Zeroshot(ZeroshotArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricArg {
    Euclidean,
    Lorentz,
}

#[derive(Debug, Args, Serialize)]
pub struct DeltahypArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "euclidean")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 1024)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub batches: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub dim: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Negates the analytic angle gradient to exercise the failure path.
    #[arg(long, hide = true)]
    pub inject_sign_flip: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GradfieldArgs {
    #[arg(long, default_value_t = 2.0)]
    pub grid_extent: f64,
    #[arg(long, default_value_t = 21)]
    pub resolution: usize,
    /// Anchor position as `x,y`.
    #[arg(long, default_value = "0.8,0.3")]
    pub target: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadArg {
    Pixel,
    Mask,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SceneArgs {
    #[arg(long, default_value_t = 3)]
    pub parents: usize,
    #[arg(long, default_value_t = 3)]
    pub children: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Box-blur radius mixing features across region borders.
    #[arg(long, default_value_t = 0)]
    pub blend: usize,
    #[arg(long, default_value_t = 42)]
    pub scene_seed: u64,
    #[arg(long, default_value_t = 16)]
    pub descriptor_dim: usize,
    /// Embedding dimension after PCA.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, value_enum, default_value = "pixel")]
    pub head: HeadArg,
    /// Defaults to 500 for the pixel head and 300 for the mask head.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Defaults to 0.05 for the pixel head and 0.01 for the mask head.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_w: f64,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1)]
    pub k: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 12)]
    pub queries: usize,
    #[arg(long, default_value_t = 1.0)]
    pub w_d: f64,
    /// Drop the angle term of the mask logits.
    #[arg(long)]
    pub no_angle_term: bool,
    #[arg(long, default_value_t = 2.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_cls: f64,
    #[arg(long, default_value_t = 20.0)]
    pub lambda_focal: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_dice: f64,
    #[arg(long, default_value_t = 0.1)]
    pub no_object_weight: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Distance,
    Angle,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct UncertaintyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 90.0)]
    pub percentile: f64,
    /// Class whose confidence map is exported.
    #[arg(long, default_value_t = 0)]
    pub class: usize,
    /// Use an all-zero encoder instead of the trained one.
    #[arg(long)]
    pub untrained: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LosscapeArgs {
    #[arg(long)]
    pub trained: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub directions_seed: u64,
    #[arg(long, default_value_t = 41)]
    pub grid: usize,
    #[arg(long, default_value_t = 1.0)]
    pub extent: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ZeroshotArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// One class index, or every class when omitted.
    #[arg(long)]
    pub held_out: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda_w: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}
