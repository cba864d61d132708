//! Prompt engine: spoof-aware context tokens, per-layer sequence assembly and
//! the physical/digital prompt branches.

pub mod assemble;
pub mod branch;
pub mod context;
pub mod kmeans;
pub mod model;

pub use assemble::{assemble_image_layer, assemble_text_layer, ImageHook, Injection, TextHook};
pub use branch::{fuse_branches, BoundBundle, Branch, PromptBundle, PromptConfig};
pub use context::{BoundContext, ContextBank};
pub use kmeans::{kmeans, KMeansResult};
pub use model::{BoundModel, BranchOutput, FusedScore, PromptedModel};
