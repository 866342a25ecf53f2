//! Heat kernels, Cauchy problems and Markov processes for elliptic
//! pseudo-differential operators over p-adic fields.
//!
//! ```
//! use padic_heat::{HomogeneousPolynomial, KernelEvaluator, PAdicVector, Prime};
//!
//! # fn main() -> padic_heat::Result<()> {
//! let p = Prime::new(3)?;
//! let f = HomogeneousPolynomial::new(p, 2, 2, [(vec![2, 0], 1), (vec![0, 2], 3)])?;
//! let ev = KernelEvaluator::certified(f, 1.0)?;
//! let x = PAdicVector::parse_digit_strings(p, &["1 2;-1", "1;0"])?;
//! let z = ev.eval_z(&x, 0.5, 1e-10)?;
//! assert!(z.re() >= -z.error_bound());
//! # Ok(())
//! # }
//! ```

pub mod cauchy;
pub mod error;
pub mod kernel;
pub mod markov;
pub mod oracle;
pub mod padic;
pub mod par;
pub mod rng;
pub mod symbol;
pub mod verify;

pub use error::{Error, Result};
pub use kernel::{ErrorReceipt, KernelConfig, KernelEvaluator, Weight};
pub use padic::{Ball, PAdicScalar, PAdicVector, PPower, Prime, Valuation};
pub use par::Execution;
pub use symbol::{Certification, EllipticCertificate, HomogeneousPolynomial};
