//! Correlation-distance dual-stream dynamic graph learning for binary
//! treatment-response prediction from ROI time series.
//!
//! The pipeline, bottom-up:
//!
//! * [`data_io`]: ROI CSVs, dataset manifests, stratified splits.
//! * [`dynamic_fc`]: sliding windows, Pearson and negated-distance
//!   similarity, top-30% binarization.
//! * [`temporal_encoder`]: LSTM over the whole scan and per-window node
//!   features.
//! * [`cdgin`]: GIN layers with attention readout, one stack per stream, and
//!   the cross-stream contrastive loss.
//! * [`fusion_head`]: channel and temporal attention over fused windows,
//!   classifier and BCE.
//! * [`model`]: everything wired together.
//! * [`train_eval`]: training, metrics, cross-validation, gradient checks.
//! * [`diffcore`]: the reverse-mode autodiff, Adam and checkpoint format
//!   everything above is built on.
//! * [`synthgen`]: labeled synthetic datasets.
//! * [`cli`]: the `cdgin` command line.

pub mod cdgin;
pub mod cli;
pub mod config;
pub mod data_io;
pub mod diffcore;
pub mod dynamic_fc;
pub mod error;
pub mod fusion_head;
mod io_util;
pub mod matrix;
pub mod model;
pub mod synthgen;
pub mod temporal_encoder;
pub mod train_eval;

pub use error::{Error, Result};
pub use io_util::write_atomic;
