//! Synthetic population and ecosystem generation.
//!
//! Given per-region population counts, region geographies, household/person
//! microdata and optional marginal tables, the engine produces synthetic
//! households, persons, locations and environment assignments for every
//! region, independently and in parallel, plus statistical diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alias;
pub mod assignment;
pub mod cli;
pub mod diagnostics;
pub mod geometry;
pub mod ingest;
pub mod ipf;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod tables;
