//! Parametric lognormal assessment of river *E. coli* monitoring data.
//!
//! Log counts at a site are modelled as independent `N(μ, σ)` draws
//! (optionally with a linear trend in time). The crate grades sites against
//! the national swimmability bands both by the usual percentile rules and by
//! the parametric state, fits censored data, analyses trends, and runs the
//! Monte Carlo comparisons between the two approaches.

pub mod cli;
pub mod criteria;
pub mod error;
pub mod estimation;
pub mod ingest;
pub mod normal;
pub mod simulate;
pub mod trend;

pub use criteria::{Category, Criteria, CriteriaThresholds, Criterion, EmpiricalStats};
pub use error::{Error, Result};
pub use estimation::{CensorPolicy, LogNormalParams, Reading, Sample};
