//! Task-level demonstration selection.
//!
//! A fixed demonstration set is chosen once for a whole task by scoring
//! candidate sets with an [`oracle::Evaluator`] on validation queries, then
//! reused for every test query. The [`select`] module holds the strategies,
//! [`oracle`] the evaluator backends and exhaustive search, and [`harness`]
//! the seeded experiment runner and analyses built on top of them.

pub mod error;
pub mod harness;
pub mod ids;
pub mod metrics;
pub mod oracle;
pub mod rng;
pub mod select;
pub mod split;
pub mod subsets;
pub mod utility;

pub use error::CoreError;
pub use ids::{ids, DemoSet, Sample, SampleId};
pub use utility::{MetricTag, Orientation, Utility};
