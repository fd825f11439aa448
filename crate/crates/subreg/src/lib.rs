//! Numerical laboratory for metric subregularity of set-valued mappings.

pub mod geometry;
pub mod mappings;
pub mod moduli;
pub mod par;
pub mod perturb;
pub mod radius_cli;
pub mod variational;
pub mod xreal;
