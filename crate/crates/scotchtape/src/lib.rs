//! File formats, statistics, SVG plots and the experiment harness around
//! [`scotchtape_core`].
//!
//! File formats:
//!
//! * graph: `#nodes=N` header then one `i<TAB>j` edge per line;
//! * annotations: one label per line, `name<TAB>i1,i2,...`;
//! * partition: `#groups=K` header then one `node<TAB>group` line per node
//!   (0-based groups);
//! * block specs, profiles and experiment configs: JSON.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod io;
pub mod plot;
pub mod stats;

pub use scotchtape_core as core;
