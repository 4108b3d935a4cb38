//! Measure criteria for difference seminorms.

pub mod balls;
pub mod intervals;
pub mod measure;
pub mod theorem3;
pub mod theorem5;

use serde::{Deserialize, Serialize};

pub use balls::{corollary4_ball_sup, BallDensity, BallSample};
pub use intervals::{
    bliss_constant, brute_force_ratio, corollary3_sup, corollary5_check, corollary5_sufficiency_constant,
    BruteForceResult,
};
pub use measure::{seminorm, Atom, Kernel, PiecewiseLinear, ProductMeasure1D, Span};
pub use theorem3::{grid_seminorm, theorem3_check, GridDensity};
pub use theorem5::{remark6_sharpness, theorem5_constants, NuFunction, Remark6Report, Theorem5Constants};

/// Where a supremum is attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Witness {
    None,
    Interval { lo: f64, hi: f64 },
    IntervalPair { i_lo: f64, i_hi: f64, j_lo: f64, j_hi: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Set { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub positions: usize,
    pub ratio: f64,
    pub min_scale: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub sup_value: f64,
    pub witness: Witness,
    /// Upper bound for the best constant of the matching inequality.
    pub implied_constant: f64,
    /// Lower bound for the best constant.
    pub necessity_bound: f64,
    pub grid_resolution: SearchGrid,
    pub notes: Vec<String>,
}
