//! Zero- and few-shot classification of event-camera recordings with frozen
//! vision-language embeddings.
//!
//! The pipeline: parse a recording ([`event_io`]), cut it into tri-level
//! frames ([`projection`]), hand the frames to an external encoder and load
//! its embeddings back ([`gateway`]), then score them against class-text
//! embeddings ([`fusion`]), optionally after a spiking inter-timestep
//! [`adapter`] trained on a few labelled samples.

// Matrix code below reads more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod adapter;
pub mod event_io;
pub mod fusion;
pub mod gateway;
pub mod projection;
pub mod synthetic;

pub use adapter::{AdapterError, AdapterParams, LifParams, Reset, SpikeMode, TrainConfig};
pub use event_io::{Event, EventError, EventStream, Polarity};
pub use fusion::{FusionConfig, FusionError, Prediction};
pub use gateway::{EmbeddingMatrix, EmbeddingSet, GatewayError, Manifest, Role, Split};
pub use projection::{FrameStack, OverwritePolicy, ProjectionConfig, WindowPolicy};
