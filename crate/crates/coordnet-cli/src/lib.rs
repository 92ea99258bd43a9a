//! Support library for the `coordnet` binary: experiment runners, the
//! versioned report schema, feature-map dumps, and PNG export.

pub mod experiments;
pub mod features;
pub mod imgexport;
pub mod report;
