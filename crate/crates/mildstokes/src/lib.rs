//! Input language, file formats, verification suites and command-line front
//! end for the numerics in `mildstokes-core`.

pub mod cli;
pub mod formats;
pub mod parser;
pub mod printer;
pub mod verify;
