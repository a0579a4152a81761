//! Cost-sharing games for two-type insurance risk pools.
//!
//! A pool of low- and high-risk members must collect enough premium to stay
//! solvent with high probability. Because that premium grows like the
//! standard deviation of claims, larger pools are cheaper per head and the
//! pool cost is submodular. This crate computes pool costs, splits them with
//! four pricing schemes, certifies core stability of the grand coalition and
//! audits schemes against the fairness impossibility results that follow.
//!
//! Modules:
//! - [`model`]: domain types and cost functions
//! - [`quantile`], [`exact`]: `b_p <-> p` conversion and an exact-binomial oracle
//! - [`submodular`]: submodularity checks
//! - [`pricing`]: even-split, proportional, max-subsidy and Shapley pricing
//! - [`stability`]: blocking-coalition search, tightness and defection cascades
//! - [`audit`]: efficiency, independence and incentive-alignment audits
//! - [`scenario`], [`report`], [`tables`], [`sweep`]: scenario files and outputs

pub mod audit;
pub mod error;
pub mod exact;
pub mod model;
pub mod numeric;
pub mod par;
pub mod pricing;
pub mod quantile;
pub mod report;
pub mod scenario;
pub mod stability;
pub mod submodular;
pub mod sweep;
pub mod tables;

pub use error::{Error, Result};
pub use model::{CostModel, CostParams, PoolComposition, Population, RiskClass, RiskProfile};
pub use pricing::{PriceSchedule, PricingScheme, SchemeId};
