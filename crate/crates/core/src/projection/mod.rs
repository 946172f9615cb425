//! Modality projection heads and their training, prediction and calibration.

pub mod ablation;
pub mod encoder;
pub mod losses;
pub mod predict;
pub mod train;

pub use ablation::{ablation_run, AblationConfig, AblationReport, Arm, CurvePoint};
pub use encoder::{EncoderShape, FeatureEncoder, Modality, Payload, TokenTable};
pub use losses::{attr_loss, cat_loss, projection_loss, LossGrads, ProjectionLoss};
pub use predict::{
    calibrate_thresholds, concept_probabilities, family_argmax, predict, predict_from_probs, Evaluation, PredictRule,
    ThresholdTable,
};
pub use train::{evaluate, project_probs, train_projection, ProjectionMetrics, ProjectionTrainConfig};
