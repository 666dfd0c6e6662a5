//! Generalized single-index models fitted by penalized regression splines,
//! with inference on the index coefficients by profile likelihood ratio
//! tests, equivalent standard errors and plug-in Wald tests.

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod expfam;
pub mod fitter;
pub mod inference;
pub mod simharness;
pub mod splines;
