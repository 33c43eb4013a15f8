//! Library side of the command-line front end.
//!
//! Everything the binary does is reachable from here so integration tests and
//! fuzzers can drive the config parser and the command implementations
//! directly.

pub mod commands;
pub mod config;
pub mod report;

/// Exit-code contract, stable across commands:
/// 0 success, 2 unstable model, 3 unsupported configuration (including parse
/// rejections), 4 numerical failure.
pub fn exit_code(err: &levyq::Error) -> i32 {
    use levyq::Error::*;
    match err {
        Unstable { .. } => 2,
        InvalidModel(_) | Unsupported(_) | Domain(_) => 3,
        Numerical(_) | Singularity(_) => 4,
    }
}
