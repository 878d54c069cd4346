//! Core library: flow-matching generator over point chains with latent
//! channels, translation-noise training objective, inference-time search
//! algorithms, geometric rewards, and the experiment harness driving them.

pub mod error;
pub mod exp;
pub mod flow;
pub mod geom;
pub mod model;
pub mod pipeline;
pub mod reward;
pub mod search;
pub mod rngkit;

pub use error::{CoreError, Result};
pub use exp::{eval_context, prepare_run, run_experiment, ExpConfig, PreparedRun, RunManifest};
pub use flow::{BinderState, NoisyState, Sampler, ScheduleSpec};
pub use geom::{Alignment, ClusterAssignment, Complex, PointChain};
pub use model::{MlpField, TargetContext, ToyCodec};
pub use reward::{RewardBreakdown, RewardSpec};
pub use search::{SearchConfig, SuccessCriterion, SuccessSet};
pub use rngkit::RngKey;
