pub mod bands;
pub mod cli_io;
pub mod error;
pub mod expansion;
pub mod linalg;
pub mod monodromy;
pub mod multipliers;
pub mod ode;
pub mod quadrature;
pub mod roots;
pub mod operator;
pub mod oracle;

pub use error::{Error, Result};
