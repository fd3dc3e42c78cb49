//! Joint RIS phase and full-duplex beamformer optimization.

pub mod beamforming;
pub mod channel;
pub mod complexity;
pub mod drl;
pub mod error;
pub mod harness;
pub mod neural;
pub mod numerics;
pub mod sysmodel;

pub use error::{Error, Result};
