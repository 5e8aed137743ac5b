//! Numerical verification of the pointwise and integral inequalities.
//!
//! Integral estimates carry unnamed constants, so their verifiers report an
//! empirical constant `Ĉ = lhs / rhs` and only assert that the two sides are
//! well defined. The pointwise estimate has no constant and is checked node by
//! node against a truncation-error tolerance.

pub mod integral;
pub mod pointwise;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::grid::{BoundaryLayout, Edge, GridSpec};

pub use integral::{verify_combined, verify_elliptic, verify_energy, verify_wave_carleman, DeltaCondition, VerifyOptions};
pub use pointwise::{pointwise_terms, verify_pointwise, PointwiseTerms};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateName {
    Pointwise,
    WaveCarleman,
    Elliptic,
    Energy,
    #[serde(rename = "combined_WeC1")]
    CombinedWec1,
    #[serde(rename = "combined_WeC3")]
    CombinedWec3,
    InitialData,
}

impl EstimateName {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimateName::Pointwise => "pointwise",
            EstimateName::WaveCarleman => "wave_carleman",
            EstimateName::Elliptic => "elliptic",
            EstimateName::Energy => "energy",
            EstimateName::CombinedWec1 => "combined_WeC1",
            EstimateName::CombinedWec3 => "combined_WeC3",
            EstimateName::InitialData => "initial_data",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    /// Both sides vanish.
    PassVacuous,
    Fail,
    /// A hypothesis of the estimate does not hold for the input.
    NotApplicable,
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass | Verdict::PassVacuous)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::PassVacuous => "pass_vacuous",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: EstimateName,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub empirical_constant: f64,
    pub margin: f64,
    pub pointwise_violation_fraction: Option<f64>,
    pub verdict: Verdict,
    pub tolerance_model: String,
    /// Individual integrals and diagnostics, keyed by name.
    pub details: BTreeMap<String, f64>,
    pub note: Option<String>,
}

impl EstimateReport {
    /// Report for an estimate `C·lhs ≤ rhs` with an unnamed constant.
    pub(crate) fn ratio(name: EstimateName, lambda: f64, lhs: f64, rhs: f64, details: BTreeMap<String, f64>) -> Self {
        let (constant, verdict, note) = if rhs == 0.0 && lhs == 0.0 {
            (f64::NAN, Verdict::PassVacuous, Some("both sides vanish".to_owned()))
        } else if rhs <= 0.0 {
            (f64::INFINITY, Verdict::Fail, Some("degenerate right-hand side".to_owned()))
        } else {
            let c = lhs / rhs;
            let v = if c.is_finite() { Verdict::Pass } else { Verdict::Fail };
            (c, v, None)
        };
        EstimateReport {
            name,
            lambda,
            lhs,
            rhs,
            empirical_constant: constant,
            margin: rhs,
            pointwise_violation_fraction: None,
            verdict,
            tolerance_model: "unnamed constant: C = lhs/rhs reported, rhs >= 0 and finite C required".to_owned(),
            details,
            note,
        }
    }
}

/// Trapezoid weights over all space-time nodes.
pub(crate) fn spacetime_weights(g: &GridSpec) -> Vec<f64> {
    let wt = g.time_weights();
    let ws = g.space_weights();
    wt.iter().flat_map(|a| ws.iter().map(move |b| a * b)).collect()
}

/// `∫_{Σ_T} f(m, edge, node)`; corners are counted once per edge.
pub(crate) fn sigma_integral_by(g: &GridSpec, f: impl Fn(usize, &Edge, usize) -> f64) -> f64 {
    let layout = BoundaryLayout::new(g);
    let wt = g.time_weights();
    let mut total = 0.0;
    for e in layout.edges() {
        let we = e.weights();
        for (m, wm) in wt.iter().enumerate() {
            let s: f64 = e.nodes.iter().zip(&we).map(|(&k, w)| w * f(m, e, k)).sum();
            total += wm * s;
        }
    }
    total
}

/// `∫_{∂Ω} f` for a spatial array.
pub(crate) fn boundary0_integral(g: &GridSpec, spatial: &[f64]) -> f64 {
    let layout = BoundaryLayout::new(g);
    layout.gather(spatial).iter().zip(layout.weights()).map(|(v, w)| v * w).sum()
}

pub(crate) fn space_integral(g: &GridSpec, spatial: &[f64]) -> f64 {
    spatial.iter().zip(g.space_weights()).map(|(v, w)| v * w).sum()
}
