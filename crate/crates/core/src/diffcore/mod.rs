//! Numeric substrate: a reverse-mode tape over dense `f64` matrices, named
//! parameter storage, Adam, checkpoints and finite-difference checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod params;
pub mod tape;

pub use adam::AdamState;
pub use gradcheck::GradcheckReport;
pub use params::{ParamStore, Tensor};
pub use tape::{Axis, Tape, Var};
