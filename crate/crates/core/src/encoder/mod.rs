//! The relation encoder: token vocabulary, transformer forward pass with
//! layer-range splitting, classifier head, reverse-mode gradients, AdamW
//! and checkpoints.

pub mod checkpoint;
mod config;
mod model;
mod optim;
mod params;
pub mod tape;
mod vocab;

pub use config::{EncoderConfig, ReprMode};
pub use model::{distribution_of, HiddenStack, RelationModel, RelationRepr};
pub use optim::{AdamW, AdamWConfig, WarmupLinear};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use tape::{Tape, Var};
pub use vocab::{EncodedInput, TokenVocab, PAD, PAD_ID, SPECIAL_TOKENS, UNK, UNK_ID};
