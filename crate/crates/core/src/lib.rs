//! Trend tests for renewal-type recurrent event data.
//!
//! The crate covers event data handling, renewal parameter estimation, the
//! tied-down bridge process, single and multi-process trend tests with
//! asymptotic, Monte Carlo and permutation p-values, trend-renewal process
//! simulation and level/power studies.

pub mod bridge;
pub mod error;
pub mod estimators;
pub mod event_data;
pub mod null_dist;
pub mod seeding;
pub mod statistics;
pub mod study;
pub mod trp_sim;

pub use bridge::{build_bridge, quad_functional, BridgePath, Functional};
pub use error::{Error, Result};
pub use estimators::{
    estimate, fit_weibull_rp, pooled_estimates, EstimateMethod, Estimates, EstimatorKind,
    WeibullFit,
};
pub use event_data::{parse_events, DataFormat, EventSeries, Gaps, MultiProcessData, Process};
pub use null_dist::{LimitKind, LimitTable, Sidedness, TableSource};
pub use statistics::{run_test, ElrConfig, PMethod, PValueMethod, TestKind, TestResult, TestSpec};
pub use study::{emit_results, run_study, GridPoint, Scenario, StudyConfig, StudyResult};
pub use trp_sim::{simulate_trp, Bathtub, Trend, TrpModel};
