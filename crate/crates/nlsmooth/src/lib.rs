#![allow(clippy::too_many_arguments)]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::type_complexity)]
#![allow(clippy::manual_is_multiple_of)]

//! Decides whether generalized solutions of model nonlocal elliptic
//! boundary-value problems in plane angles gain full-order Sobolev
//! smoothness, by computing the spectrum and Jordan structure of the
//! associated operator pencil on the angular intervals, classifying
//! eigenvalues, checking the monomial and consistency conditions, and
//! emitting either a smoothness verdict, explicit consistency functionals,
//! or a verified singular-solution certificate.

pub mod numeric;
pub mod tols;
pub mod model;
pub mod polar;
pub mod fundamental;
pub mod pencil;
pub mod spectrum;
pub mod classify;
pub mod conditions;
pub mod consistency;
pub mod certificate;
pub mod verdict;
pub mod oracle;
pub mod cli;

pub use model::{Error, Result};
