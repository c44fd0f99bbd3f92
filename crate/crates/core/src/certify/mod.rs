//! Assembly of observability certificates and the brute-force oracle they
//! are checked against.
//!
//! Every branch runs the same measured pipeline at a chosen degree `n` and
//! radius `r` (see [`stage`]): cover the domain, pick the densest ball,
//! choose a near-maximizer `w` near its center, shoot the best ray, separate
//! nodes on the trace of `E`, and bound the interpolant and its remainder.
//! The branches differ in how `r` is tied to `n` and in how the implicit
//! inequality `sup_Ω ≤ A sup_Ω^γ sup_E^{1−γ}` is set up.

mod branches;
mod stage;

pub use branches::{
    certify_sigma1, certify_sigma_gt1, certify_ucp, choose_r_sigma1, evaluate_sigma1_at,
    evaluate_sigma_gt1_at, master_bound, n0_sigma1, n1_sigma_gt1, propagate_doubling,
    propagation_factor, MasterBound, Propagation,
};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::functions::{Field, GridSamples, Region};
use crate::geometry::{MeasurableSet, Point, DEFAULT_DIRECTIONS};
use crate::{Error, LogValue, Result};

/// Relative tolerance on log-space comparisons in trace steps.
const TRACE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Branch {
    #[serde(rename = "sigma1")]
    Sigma1,
    #[serde(rename = "sigma-gt1")]
    SigmaGt1,
    #[serde(rename = "ucp")]
    Ucp,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Sigma1 => "sigma1",
            Branch::SigmaGt1 => "sigma-gt1",
            Branch::Ucp => "ucp",
        })
    }
}

/// One instantiated inequality `lhs ≤ rhs` of the construction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub name: String,
    /// Which part of the argument the step instantiates.
    pub anchor: String,
    pub inputs: BTreeMap<String, f64>,
    pub lhs: LogValue,
    pub rhs: LogValue,
    pub holds: bool,
}

impl TraceStep {
    pub fn new(
        name: &str,
        anchor: &str,
        inputs: &[(&str, f64)],
        lhs: LogValue,
        rhs: LogValue,
    ) -> Self {
        let mut step = TraceStep {
            name: name.into(),
            anchor: anchor.into(),
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            lhs,
            rhs,
            holds: false,
        };
        step.holds = step.recheck();
        step
    }

    /// Re-evaluates `lhs ≤ rhs` with a small relative tolerance in log space.
    pub fn recheck(&self) -> bool {
        if self.lhs.is_zero() {
            return true;
        }
        let (l, r) = (self.lhs.ln(), self.rhs.ln());
        l <= r + TRACE_TOL * l.abs().max(r.abs()).max(1.0)
    }
}

/// Ordered record of the inequality steps behind a constant.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn push(&mut self, step: TraceStep) {
        self.steps.push(step);
    }

    pub fn all_hold(&self) -> bool {
        self.steps.iter().all(|s| s.holds)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TraceStep> {
        self.steps.iter().filter(|s| !s.holds)
    }

    pub fn step(&self, name: &str) -> Option<&TraceStep> {
        self.steps.iter().find(|s| s.name == name)
    }
}

/// A named factor `ln value` of an assembled constant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Term {
    pub name: String,
    pub ln: f64,
}

/// Measured geometry of one pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeometrySummary {
    pub cover_count: usize,
    pub cover_bound: usize,
    pub densest_index: usize,
    pub densest_cells: usize,
    pub ball_center: Point,
    /// Radius of the ball around which `w` is chosen (`r/10`).
    pub rho: f64,
    pub w: Point,
    pub ray_direction: Point,
    pub t_max: f64,
    pub traced_length: f64,
    pub gap: f64,
    pub nodes: Vec<f64>,
    /// `max |f(x_i)|` over the nodes.
    pub node_sup: f64,
    /// `max(1, node_sup / sup_E)`; the nodes lie on cell faces and inside
    /// cells rather than only at the sampled centers.
    pub discretization: f64,
    /// `Σ_i t_maxⁿ / (i!(n−i)! gⁿ)`.
    pub poly_coefficient: LogValue,
    /// `t_max^{n+1} M (n+1)!^{σ−1} δ^{−(n+1)}`.
    pub remainder_coefficient: LogValue,
}

/// The pipeline at one `(n, r)` with the resulting constant.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub n: usize,
    pub r: f64,
    pub geometry: GeometrySummary,
    pub propagation: Option<Propagation>,
    /// `γ` (or `η`): the power of `sup_Ω` on the right of the implicit bound.
    pub exponent: f64,
    /// Factors of `A` (product of `exp(ln)`), so `ln A = Σ ln`.
    pub terms: Vec<Term>,
    pub ln_a: f64,
    pub constant: LogValue,
    pub trace: Trace,
}

/// One row of the bounded search over `n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchRow {
    pub n: usize,
    pub r: Option<f64>,
    pub constant: Option<LogValue>,
    pub error: Option<String>,
}

/// Branch-specific quantities. Fields not used by a branch are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Auxiliary {
    pub kappa: Option<f64>,
    pub r0: f64,
    pub r0_tilde: f64,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub sigma: f64,
    pub gevrey_m: f64,
    pub gevrey_delta: f64,
    /// `(δ / r̃₀)^{1/(σ−1)}`.
    pub big_b: Option<f64>,
    pub n0: Option<usize>,
    pub n1: Option<usize>,
    pub xi: Option<f64>,
    pub c0: Option<f64>,
    pub ln_c1: Option<f64>,
    pub contraction: Option<f64>,
    pub c0_iterations: Option<usize>,
}

/// The observability constant with everything needed to re-check it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObservabilityCertificate {
    pub branch: Branch,
    /// Certified `C` with `sup_Ω |f| ≤ C sup_E |f|`: the best sound value found.
    pub constant: LogValue,
    pub n: usize,
    pub r: f64,
    pub sup_omega: f64,
    pub sup_e: f64,
    pub measure_omega: f64,
    pub measure_e: f64,
    pub aux: Auxiliary,
    /// The run at the prescribed degree (`n₀` or `n₁`); `None` when the
    /// pipeline is infeasible there but succeeds elsewhere in the search.
    pub prescribed: Option<Evaluation>,
    /// The run achieving `constant` (may coincide with `prescribed`).
    pub best: Evaluation,
    pub search: Vec<SearchRow>,
    /// Whether every trace step of both runs re-checks.
    pub trace_ok: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CertifyOptions {
    pub directions: usize,
    /// The search covers `[n_prescribed, n_prescribed + search_width]`.
    pub search_width: usize,
    /// Probe points for the sampled interpolation checks in the trace.
    pub probes: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            directions: DEFAULT_DIRECTIONS,
            search_width: 16,
            probes: 257,
        }
    }
}

/// Grid sups of `|f|` over `Ω` and over `E`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmpiricalRatio {
    pub sup_omega: f64,
    pub sup_e: f64,
    pub ratio: f64,
    pub argmax_omega: Point,
    pub argmax_e: Point,
}

/// `sup_Ω |f| / sup_E |f|` on the grid of `set`.
pub fn empirical_ratio(f: &dyn Field, set: &MeasurableSet) -> Result<EmpiricalRatio> {
    let grid = set.grid();
    let samples = GridSamples::new(f, grid);
    ratio_from_samples(&samples, set)
}

pub(crate) fn ratio_from_samples(
    samples: &GridSamples,
    set: &MeasurableSet,
) -> Result<EmpiricalRatio> {
    let grid = set.grid();
    if set.count() == 0 {
        return Err(Error::EmptyRegion("E has zero measure on the grid".into()));
    }
    let omega = samples.sup(grid, Region::Domain)?;
    let e = samples.sup(grid, Region::Set(set))?;
    if e.value == 0.0 {
        return Err(Error::Infeasible(
            "f vanishes on E; no observability constant exists".into(),
        ));
    }
    Ok(EmpiricalRatio {
        sup_omega: omega.value,
        sup_e: e.value,
        ratio: omega.value / e.value,
        argmax_omega: omega.argmax,
        argmax_e: e.argmax,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Soundness {
    pub pass: bool,
    /// `ln C − ln ratio`.
    pub slack: f64,
}

/// Passes iff `C ≥ ratio`.
pub fn soundness_check(constant: LogValue, ratio: &EmpiricalRatio) -> Soundness {
    let slack = constant.ln() - ratio.ratio.ln();
    Soundness {
        pass: slack >= 0.0,
        slack,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::functions::FunctionModel;
    use crate::geometry::{Domain, Grid};

    #[test]
    fn ratio_examples() {
        let g = Arc::new(Grid::new(Domain::interval(1.0), &[1024]).unwrap());
        let all = MeasurableSet::full(g.clone());
        assert_eq!(
            empirical_ratio(&FunctionModel::constant(1.0, 1), &all)
                .unwrap()
                .ratio,
            1.0
        );

        let sine = FunctionModel::sine(&[1]);
        let mid = MeasurableSet::from_predicate(g.clone(), |p| (0.2..=0.3).contains(&p[0]));
        assert!((empirical_ratio(&sine, &mid).unwrap().ratio - 1.0).abs() < 1e-5);

        // Cells meeting [0, 0.05].
        let h = g.cell_size(0);
        let left = MeasurableSet::from_predicate(g.clone(), |p| p[0] - h / 2.0 <= 0.05);
        let r = empirical_ratio(&sine, &left).unwrap().ratio;
        assert!(
            (r - 1.0 / (0.1 * std::f64::consts::PI).sin()).abs() < 0.02,
            "{r}"
        );

        assert!(matches!(
            empirical_ratio(&sine, &MeasurableSet::empty(g.clone())),
            Err(Error::EmptyRegion(_))
        ));
        let zero = FunctionModel::constant(0.0, 1);
        assert!(matches!(
            empirical_ratio(&zero, &all),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn soundness_examples() {
        let ratio = EmpiricalRatio {
            sup_omega: 3.0,
            sup_e: 1.0,
            ratio: 3.0,
            argmax_omega: [0.0; 2],
            argmax_e: [0.0; 2],
        };
        assert!(soundness_check(LogValue::new(3.0), &ratio).pass);
        assert!(!soundness_check(LogValue::new(1.5), &ratio).pass);
        let one = EmpiricalRatio {
            ratio: 1.0,
            ..ratio
        };
        assert!(soundness_check(LogValue::ONE, &one).pass);
    }

    #[test]
    fn trace_step_recheck() {
        let ok = TraceStep::new(
            "a",
            "b",
            &[("x", 1.0)],
            LogValue::new(2.0),
            LogValue::new(2.0),
        );
        assert!(ok.holds);
        let bad = TraceStep::new("a", "b", &[], LogValue::new(2.1), LogValue::new(2.0));
        assert!(!bad.holds);
        assert!(TraceStep::new("z", "b", &[], LogValue::ZERO, LogValue::ZERO).holds);
    }
}
