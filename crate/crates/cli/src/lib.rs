//! Command-line front end: configuration, data files and result bundles.

pub mod bundle;
pub mod commands;
pub mod config;

use spincav_core::error::Error as CoreError;

/// Success.
pub const EXIT_OK: i32 = 0;
/// Bad configuration, arguments or input file.
pub const EXIT_CONFIG: i32 = 2;
/// A numerical routine failed (no root, singular fit, coarse grid, ...).
pub const EXIT_NUMERICAL: i32 = 3;

/// Exit code for an error raised by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<config::ConfigError>().is_some() || cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::Schema { .. } | CoreError::InvalidParameter(_) | CoreError::InvalidTemperature(_) => {
                    EXIT_CONFIG
                }
                _ => EXIT_NUMERICAL,
            };
        }
    }
    EXIT_NUMERICAL
}
