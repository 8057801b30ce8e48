pub mod constants;
pub mod coupling;
pub mod error;
pub mod fit;
pub mod numeric;
pub mod spin;
pub mod sweep;
pub mod transmission;
