pub mod averaging;
pub mod birkhoff;
pub mod error;
pub mod hamilton_jacobi;
pub mod numerics;
pub mod oracle;
pub mod quantization;
pub mod surfrev;
pub mod symbol;

pub use error::{Error, Result};
pub use quantization::{QuantizationData, Rectangle, SpectralCloud};
pub use symbol::{Caps, ClassicalSymbol, FrequencyVector, Monomial, OperatorSymbol};
