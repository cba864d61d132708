//! Optimization loop: branch-partitioned cross-entropy, consistency against
//! frozen peers, disagreement-driven hard samples and Adam.

pub mod adam;
pub mod augment;
pub mod caa;
pub mod config;
pub mod loss;
pub mod run;
pub mod step;

pub use adam::Adam;
pub use augment::{augment, LightParams, StrongOp};
pub use caa::{caa_select, CaaSelection, Directive};
pub use config::TrainConfig;
pub use loss::{branch_ce_loss, consistency_loss, cosine_distance};
pub use run::{batch_order, evaluate, run_training, StepRecord, TrainOutcome, LOG_COLUMNS};
pub use step::{build_loss, prepare_batch, train_step, Batch, LossBreakdown, LossVars, Peers};
