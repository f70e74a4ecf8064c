mod denoise;
mod eval;
mod fit;
mod gen_data;
mod simulate;

pub use denoise::denoise;
pub use eval::eval;
pub use fit::{sweep, train};
pub use gen_data::gen_data;
pub use simulate::simulate;

use crate::CliError;

/// Invariant violations in user-supplied values are usage errors, everything
/// else the core reports is a runtime failure.
fn usage_if_invalid(e: interdiff::Error) -> CliError {
    match e {
        interdiff::Error::InvalidConfig(msg) => CliError::Usage(msg),
        other => other.into(),
    }
}
