//! Reverse-mode differentiation, parameter storage and optimization.

mod adam;
mod init;
mod params;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use init::{glorot_bound, glorot_init};
pub use params::{Param, ParamStore};
pub(crate) use tape::sigmoid;
pub use tape::{EdgeEndpoints, LstmInput, LstmVars, Tape, Var};
