//! Library side of the `hammerstein` command: configuration, the run
//! pipeline and report rendering.

pub mod config;
pub mod pipeline;
pub mod table;
