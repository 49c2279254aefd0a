//! Desk-scale per-pixel segmentation on synthetic hierarchical scenes.

pub mod encoder;
pub mod infer;
pub mod pca;
pub mod scene;
pub mod train;
pub mod zeroshot;

pub use encoder::{encoder_forward, EncoderParams};
pub use infer::{
    cone_threshold, embed, infer, infer_angle, infer_distance, miou, pixel_accuracy, text_query, EmbeddingGrid,
    InferMode, LabelMap, QueryMode, QueryResult,
};
pub use pca::{build_prototypes, pca_reduce, DescriptorBank, Pca, Prototypes};
pub use scene::{generate_scene, Hierarchy, SceneConfig, SyntheticScene};
pub use train::{
    evaluate_loss, loss_and_grad, targets_from_labels, trace_csv, train, train_with, HeadKind, LossParts, TraceRow,
    TrainConfig, TrainedModel,
};
pub use zeroshot::{held_out_protocol, ZeroShotReport};

use crate::entailment::EntailmentConfig;
use crate::error::Result;

/// Descriptor bank and prototypes for every class of `scene`.
pub fn prepare(scene: &SyntheticScene, d: usize, cfg: &EntailmentConfig) -> Result<(DescriptorBank, Prototypes)> {
    let bank = DescriptorBank::new(scene.hierarchy.class_names.clone(), scene.class_descriptors.clone(), d)?;
    let protos = build_prototypes(&bank, cfg)?;
    Ok((bank, protos))
}
