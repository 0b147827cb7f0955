//! Behavioral analysis: patch detection, revisitation-choice extraction and
//! GLM, spatial/behavioral metrics, movement-phase segmentation.

mod choices;
mod glm;
mod metrics;
mod patches;
mod segment;

pub use choices::{extract_choice_events, CandidateRow, ChoiceEvent, ChoiceParams};
pub use glm::{
    build_design, fit_glm_logistic, fit_logistic_irls, vif, GlmDesign, GlmFit, GlmOptions,
    IrlsFit, PREDICTOR_NAMES, UNCERTAINTY_NAME,
};
pub use metrics::{angular_variance, metric_panel, occupancy_entropy, MetricPanelRow};
pub use patches::{detect_patches, patch_at, Patch};
pub use segment::{
    movement_features, segment_movement, segment_positions, SegmentParams, Segmentation,
};
