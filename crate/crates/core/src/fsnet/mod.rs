//! Fast adaptation machinery: gradient EMAs, chunked adapters, per-channel
//! transforms, the interference trigger and associative memory.

pub mod adapt;
pub mod adapter;
pub mod ema;
pub mod hyper;
pub mod learner;
pub mod memory;
pub mod trigger;

pub use adapt::{adapt_layer, adapt_weights, AdaptationCoefficients, BlockAdaptation};
pub use adapter::{adapter_backward, adapter_deviation, adapter_forward, AdapterParams};
pub use ema::ema_update;
pub use hyper::FsnetHyperparams;
pub use learner::{make_variant, FsnetLearner, LayerFastState, Variant};
pub use memory::{attend, memory_read, memory_write, AssociativeMemory, TopK};
pub use trigger::{cosine, trigger_check, COSINE_EPS};
