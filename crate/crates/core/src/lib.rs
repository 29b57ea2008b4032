//! Multitype contact process on Z: Harris graphical construction, the dual
//! ancestor process with its renewal structure, interface observables and a
//! reproducible Monte Carlo harness checking interface tightness and the
//! diffusive scaling of the interface position.

pub mod dual;
pub mod error;
pub mod experiments;
pub mod harris;
pub mod interface;
pub mod process;
pub mod seeds;
pub mod stats;

pub use error::{Error, Result};
pub use harris::{Event, HarrisWindow, Mark, Rates, Site, Window};
