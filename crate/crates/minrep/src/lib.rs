//! Exact-arithmetic realizations of the two minimal representations of
//! SL(p+2,R): a model on homogeneous functions on R^(p+2) and a Fock-type
//! model on the isotropic cone in C^(p+2), together with the diagonal
//! Bargmann-type operator intertwining them.
//!
//! Every scalar sequence entering the models (Funk-Hecke constants, ladder
//! constants, the Maass-lowering sequence, norm weights, intertwiner
//! coefficients) is derived from first principles in Q(i) and compared
//! against the textbook closed forms; all checks are exact identities,
//! never floating point.

pub mod bargmann;
pub mod conformal;
pub mod fock;
pub mod harmonics;
pub mod poly;
pub mod report;
pub mod scalar;
pub mod schrodinger;

pub use poly::{MultiPoly, Monomial};
pub use scalar::{GaussianRational, Rational};
