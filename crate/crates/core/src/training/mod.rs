//! The joint patient-document / patient-concept learning loop.

pub mod checkpoint;
mod config;
pub mod loss;
mod model;
mod rmsprop;
pub mod sampling;
mod trainer;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader};
pub use config::TrainConfig;
pub use loss::{contrastive_bce, joint_loss, loss_patient_concept, loss_patient_document, BceGrads};
pub use model::{init_concept_table, init_params, ConceptInputs, ModelParams, TrainingData};
pub use rmsprop::RmsProp;
pub use sampling::{make_token_negative, random_split, sample_doc_negatives, Snippet};
pub use trainer::{
    apply_grads, batch_loss_and_grads, build_example, derived_rng, epoch_snippets, fit, init_rng, joint_step, train,
    user_vectors, BatchGrads, EpochLog, Fit, StepLoss, TrainState, TrainingExample,
};
