// `!(x > 0.0)` is used on purpose so NaN fails the check too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agreement;
pub mod calibration;
pub mod cohort;
pub mod features;
pub mod gold_standard;
pub mod metrics;
pub mod models;
pub mod run;
