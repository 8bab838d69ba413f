//! Std companion to `dnr-core`: file formats, the parallel pipeline driver,
//! and the two reproduction studies behind the `dnr` binary.

pub mod engine;
pub mod experiments;
pub mod io;
