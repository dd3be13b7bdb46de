//! Fastidious attention for semantic segmentation.
//!
//! The crate provides a small reverse-mode autodiff engine ([`tensor`],
//! [`ops`]), the fastidious excitation primitive and its parameter heads
//! ([`attention`]), the U-Net blocks and the FANet family built from them
//! ([`blocks`], [`arch`]), data loading and synthetic data ([`data`]), SGD
//! training ([`train`]) and segmentation metrics ([`metrics`]).

pub mod arch;
pub mod attention;
pub mod blocks;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod metrics;
pub mod ops;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{no_grad, Parameter, Precision, Scalar, Tensor};
