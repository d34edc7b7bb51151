//! End-to-end runs of the decomposition pipeline, artifact emission, and
//! static report rendering. The `mdecomp` binary is a thin wrapper over
//! [`run`] and [`report`].

pub mod report;
pub mod run;
