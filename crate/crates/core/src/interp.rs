//! Interpolation on a one-dimensional trace: node separation, barycentric
//! evaluation, and the a-priori bounds on the interpolant and its error.

use serde::Serialize;

use crate::functions::{Field, GevreyCertificate};
use crate::geometry::{IntervalSet, Segment};
use crate::logspace::{ln_factorial, LogValue};
use crate::{Error, Result};

/// Interpolation nodes `x₀ < … < x_n` with consecutive gaps at least `gap`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeSet {
    nodes: Vec<f64>,
    gap: f64,
}

impl NodeSet {
    pub fn new(nodes: Vec<f64>, gap: f64) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid("a node set needs at least one node"));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("nodes must be finite"));
        }
        if !(gap > 0.0) && nodes.len() > 1 {
            return Err(Error::invalid(format!(
                "node gap must be positive, got {gap}"
            )));
        }
        if let Some(i) = (1..nodes.len()).find(|&i| !(nodes[i] - nodes[i - 1] >= gap)) {
            return Err(Error::invalid(format!(
                "nodes {} and {i} are closer than the gap {gap}: {} vs {}",
                i - 1,
                nodes[i - 1],
                nodes[i]
            )));
        }
        Ok(NodeSet { nodes, gap })
    }

    /// Polynomial degree `n` (one less than the node count).
    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }
}

/// Picks `n + 1` nodes in the closure of `trace`: `x₀ = inf trace` and
/// `x_i = inf(trace ∩ [x_{i−1} + g, ∞))` with `g = |trace| / (n + 1)`.
///
/// The infimum ignores an interval that only touches `x_{i−1} + g` at its
/// right endpoint, so each node starts a piece of positive length. At most
/// `i·g` of the trace lies before `x_i`, so all `n + 1` nodes exist.
pub fn separate_points(trace: &IntervalSet, n: usize) -> Result<NodeSet> {
    let total = trace.total();
    if !(total > 0.0) {
        return Err(Error::EmptyRegion("trace has zero length".into()));
    }
    let gap = total / (n as f64 + 1.0);
    let mut nodes = Vec::with_capacity(n + 1);
    let mut x = trace.intervals()[0].0;
    nodes.push(x);
    for i in 1..=n {
        let mut from = x + gap;
        // Rounding must not shrink the guaranteed gap.
        while from - x < gap {
            from = from.next_up();
        }
        x = essential_infimum_from(trace, from).ok_or_else(|| {
            Error::Infeasible(format!(
                "only {i} of {} nodes fit in the trace at degree {n}",
                n + 1
            ))
        })?;
        nodes.push(x);
    }
    NodeSet::new(nodes, gap)
}

fn essential_infimum_from(trace: &IntervalSet, x: f64) -> Option<f64> {
    trace
        .intervals()
        .iter()
        .find(|&&(_, hi)| hi > x)
        .map(|&(lo, _)| lo.max(x))
}

/// Barycentric form of the interpolation polynomial through `(x_i, f_i)`.
#[derive(Clone, Debug)]
pub struct Interpolant {
    nodes: Vec<f64>,
    values: Vec<f64>,
    /// Barycentric weights `1/Π_{j≠i}(x_i − x_j)`, rescaled by a common
    /// positive factor so the largest has magnitude 1.
    weights: Vec<f64>,
}

impl Interpolant {
    pub fn new(nodes: &NodeSet, values: &[f64]) -> Result<Self> {
        let x = nodes.nodes();
        if values.len() != x.len() {
            return Err(Error::invalid(format!(
                "{} values for {} nodes",
                values.len(),
                x.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("interpolation data must be finite"));
        }
        let mut ln_w = Vec::with_capacity(x.len());
        let mut sign = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let mut s = 0.0;
            let mut neg = false;
            for j in 0..x.len() {
                if j != i {
                    let d = x[i] - x[j];
                    if d == 0.0 {
                        return Err(Error::invalid(format!("nodes {i} and {j} coincide")));
                    }
                    s -= d.abs().ln();
                    neg ^= d < 0.0;
                }
            }
            ln_w.push(s);
            sign.push(if neg { -1.0 } else { 1.0 });
        }
        let top = ln_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights = ln_w
            .iter()
            .zip(&sign)
            .map(|(l, s)| s * (l - top).exp())
            .collect();
        Ok(Interpolant {
            nodes: x.to_vec(),
            values: values.to_vec(),
            weights,
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_lebesgue(t).0
    }

    /// `(P(t), Σ|ℓ_i(t)|)`; the second value bounds the amplification of
    /// rounding errors in the data.
    pub fn eval_with_lebesgue(&self, t: f64) -> (f64, f64) {
        if let Some(i) = self.nodes.iter().position(|&x| x == t) {
            return (self.values[i], 1.0);
        }
        let (mut num, mut den, mut abs) = (0.0, 0.0, 0.0);
        for ((x, v), w) in self.nodes.iter().zip(&self.values).zip(&self.weights) {
            let c = w / (t - x);
            num += c * v;
            den += c;
            abs += c.abs();
        }
        (num / den, abs / den.abs())
    }
}

/// `P(t)` for the interpolation polynomial through `(x_i, values_i)`.
pub fn lagrange_eval(nodes: &NodeSet, values: &[f64], t: f64) -> Result<f64> {
    Ok(Interpolant::new(nodes, values)?.eval(t))
}

/// `i! (n−i)! gⁿ` for `i = 0..=n`: lower bounds on `|Π_{j≠i}(x_i − x_j)|`
/// for any nodes with consecutive gaps at least `g`.
pub fn denominator_lower_bound(n: usize, g: f64) -> Vec<LogValue> {
    let ln_g = if n == 0 { 0.0 } else { g.ln() };
    (0..=n)
        .map(|i| {
            LogValue::from_ln(
                ln_factorial(i as u64) + ln_factorial((n - i) as u64) + n as f64 * ln_g,
            )
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PolyBound {
    pub degree: usize,
    pub t_max: f64,
    pub gap: f64,
    pub data_sup: f64,
    /// `Σ_i t_maxⁿ / (i!(n−i)! gⁿ)`.
    pub coefficient: LogValue,
    /// `coefficient · data_sup`.
    pub bound: LogValue,
}

/// Bound on `sup_{[0, t_max]} |P|` from the data sup and the node gap.
pub fn poly_sup_bound(n: usize, t_max: f64, g: f64, data_sup: f64) -> Result<PolyBound> {
    if n > 0 && !(g > 0.0 && g <= t_max) {
        return Err(Error::invalid(format!(
            "need 0 < gap <= t_max, got gap {g}, t_max {t_max}"
        )));
    }
    if !(data_sup >= 0.0) {
        return Err(Error::invalid(format!(
            "data sup must be nonnegative, got {data_sup}"
        )));
    }
    let scale = if n == 0 {
        0.0
    } else {
        n as f64 * (t_max.ln() - g.ln())
    };
    let terms = (0..=n)
        .map(|i| LogValue::from_ln(scale - ln_factorial(i as u64) - ln_factorial((n - i) as u64)));
    let coefficient = LogValue::sum(terms);
    Ok(PolyBound {
        degree: n,
        t_max,
        gap: g,
        data_sup,
        coefficient,
        bound: coefficient * LogValue::new(data_sup),
    })
}

/// `t_max^{n+1} M (n+1)!^{σ−1} δ^{−(n+1)}`, the factor multiplying the domain
/// sup in the remainder bound.
pub fn remainder_coefficient(n: usize, t_max: f64, cert: &GevreyCertificate) -> LogValue {
    if t_max == 0.0 {
        return LogValue::ZERO;
    }
    let k = n as f64 + 1.0;
    LogValue::from_ln(
        k * t_max.ln() + cert.m.ln() + (cert.sigma - 1.0) * ln_factorial(n as u64 + 1)
            - k * cert.delta.ln(),
    )
}

/// Bound on `sup_{[0, t_max]} |f − P|` for degree-`n` interpolation at nodes
/// in `[0, t_max]`, given the Gevrey certificate and `‖f‖_∞(Ω)`.
pub fn remainder_bound(
    n: usize,
    t_max: f64,
    cert: &GevreyCertificate,
    domain_sup: f64,
) -> LogValue {
    remainder_coefficient(n, t_max, cert) * LogValue::new(domain_sup)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbeViolation {
    pub t: f64,
    pub error: f64,
    pub allowed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RemainderCheck {
    pub pass: bool,
    pub probes: usize,
    /// Largest sampled `|f^{(n+1)}|` along the segment.
    pub derivative_sup: f64,
    pub max_error: f64,
    /// Smallest `allowed − error` over the probes.
    pub min_slack: f64,
    /// `Π|t−x_i|/(n+1)! · derivative_sup` at its largest over the probes.
    pub max_pointwise_bound: f64,
    /// Whether the pointwise bounds stay below the a-priori remainder bound.
    pub within_remainder_bound: bool,
    pub worst_violation: Option<ProbeViolation>,
}

/// Samples along the segment used to estimate `sup |f^{(n+1)}|`.
const DERIVATIVE_SAMPLES: usize = 1024;

/// Compares `|f(w + tμ) − P(t)|` with `Π_i|t − x_i| / (n+1)! · sup|f^{(n+1)}|`
/// at each probe, and the latter with `bound`. A floating-point allowance
/// proportional to the Lebesgue function is added to each probe.
pub fn remainder_empirical_check(
    f: &dyn Field,
    seg: &Segment,
    nodes: &NodeSet,
    probes: &[f64],
    bound: LogValue,
) -> Result<RemainderCheck> {
    if let Some(t) = probes.iter().find(|&&t| !(0.0..=seg.t_max).contains(&t)) {
        return Err(Error::invalid(format!(
            "probe {t} outside [0, {}]",
            seg.t_max
        )));
    }
    let n = nodes.degree();
    let values: Vec<f64> = nodes
        .nodes()
        .iter()
        .map(|&x| f.value(seg.point(x)))
        .collect();
    let interp = Interpolant::new(nodes, &values)?;
    let data_max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let derivative_sup = (0..=DERIVATIVE_SAMPLES)
        .map(|k| seg.t_max * k as f64 / DERIVATIVE_SAMPLES as f64)
        .chain(probes.iter().copied())
        .map(|t| f.directional(seg.point(t), seg.direction, n + 1).abs())
        .fold(0.0, f64::max);
    let ln_fact = ln_factorial(n as u64 + 1);

    let eps = f64::EPSILON;
    let mut check = RemainderCheck {
        pass: true,
        probes: probes.len(),
        derivative_sup,
        max_error: 0.0,
        min_slack: f64::INFINITY,
        max_pointwise_bound: 0.0,
        within_remainder_bound: true,
        worst_violation: None,
    };
    for &t in probes {
        let exact = f.value(seg.point(t));
        let (p, lebesgue) = interp.eval_with_lebesgue(t);
        let error = (exact - p).abs();
        let ln_prod: f64 = nodes.nodes().iter().map(|x| (t - x).abs().ln()).sum();
        let pointwise = (ln_prod - ln_fact).exp() * derivative_sup;
        let rounding = 64.0 * eps * ((n as f64 + 1.0) * lebesgue * data_max + exact.abs());
        let allowed = pointwise + rounding;
        check.max_error = check.max_error.max(error);
        check.max_pointwise_bound = check.max_pointwise_bound.max(pointwise);
        let slack = allowed - error;
        if slack < check.min_slack {
            check.min_slack = slack;
        }
        if slack < 0.0 {
            check.pass = false;
            if check
                .worst_violation
                .is_none_or(|v| v.error - v.allowed < -slack)
            {
                check.worst_violation = Some(ProbeViolation { t, error, allowed });
            }
        }
    }
    let max_bound = LogValue::new(check.max_pointwise_bound);
    check.within_remainder_bound = max_bound.ln() <= bound.ln() + 1e-12 * bound.ln().abs().max(1.0);
    check.pass &= check.within_remainder_bound;
    Ok(check)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;
    use crate::functions::{FunctionModel, Monomial};

    fn set(iv: &[(f64, f64)]) -> IntervalSet {
        IntervalSet::new(iv.to_vec()).unwrap()
    }

    fn line_segment(t_max: f64) -> Segment {
        Segment {
            origin: [0.0, 0.0],
            direction: [1.0, 0.0],
            t_max,
        }
    }

    #[test]
    fn separation_examples() {
        let ns = separate_points(&set(&[(0.0, 1.0)]), 1).unwrap();
        assert_eq!(ns.nodes(), &[0.0, 0.5]);
        assert_eq!(ns.gap(), 0.5);

        let ns = separate_points(&set(&[(0.0, 0.25), (0.75, 1.0)]), 1).unwrap();
        assert_eq!(ns.gap(), 0.25);
        assert_eq!(ns.nodes(), &[0.0, 0.75]);

        let ns = separate_points(&set(&[(0.3, 0.4)]), 0).unwrap();
        assert_eq!(ns.nodes(), &[0.3]);
        assert!(separate_points(&IntervalSet::empty(), 2).is_err());
    }

    #[test]
    fn lagrange_examples() {
        let two = NodeSet::new(vec![0.0, 0.5], 0.5).unwrap();
        assert_eq!(lagrange_eval(&two, &[1.0, 1.0], 0.3).unwrap(), 1.0);
        let unit = NodeSet::new(vec![0.0, 1.0], 1.0).unwrap();
        assert!((lagrange_eval(&unit, &[0.0, 1.0], 0.25).unwrap() - 0.25).abs() < 1e-15);
        let three = NodeSet::new(vec![0.0, 0.5, 1.0], 0.5).unwrap();
        assert!((lagrange_eval(&three, &[0.0, 0.25, 1.0], 0.75).unwrap() - 0.5625).abs() < 1e-15);
        assert!(NodeSet::new(vec![0.0, 0.0], 0.1).is_err());
        assert!(lagrange_eval(&three, &[1.0], 0.2).is_err());
    }

    #[test]
    fn denominator_examples() {
        let b = denominator_lower_bound(2, 0.5);
        assert!((b[1].value() - 0.25).abs() < 1e-15);
        let direct = (0.5f64 - 0.0) * (0.5f64 - 1.0);
        assert!((direct.abs() - b[1].value()).abs() < 1e-15);
        assert_eq!(denominator_lower_bound(0, 0.3)[0].value(), 1.0);
        assert!((denominator_lower_bound(3, 0.1)[0].value() - 0.006).abs() < 1e-15);
    }

    #[test]
    fn poly_bound_examples() {
        assert!((poly_sup_bound(1, 1.0, 0.5, 1.0).unwrap().bound.value() - 4.0).abs() < 1e-12);
        assert!((poly_sup_bound(0, 0.7, 0.7, 2.5).unwrap().bound.value() - 2.5).abs() < 1e-15);
        assert!(poly_sup_bound(4, 1.0, 0.1, 0.0).unwrap().bound.is_zero());
        // Closed form (t/g)ⁿ 2ⁿ / n!.
        let b = poly_sup_bound(7, 0.8, 0.05, 1.0).unwrap();
        let closed = 7.0 * (16.0f64).ln() + 7.0 * 2f64.ln() - ln_factorial(7);
        assert!((b.coefficient.ln() - closed).abs() < 1e-12);
    }

    #[test]
    fn remainder_examples() {
        let sine = GevreyCertificate::new(1.0, 1.0 / (2.0 * PI), 1.0).unwrap();
        let b = remainder_bound(1, 0.1, &sine, 1.0).value();
        assert!((b - 0.01 * 4.0 * PI * PI).abs() < 1e-12);
        assert!(remainder_bound(5, 0.0, &sine, 1.0).is_zero());
        let g2 = GevreyCertificate::new(1.0, 1.0, 2.0).unwrap();
        assert!((remainder_bound(1, 1.0, &g2, 1.0).value() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn remainder_check_examples() {
        let linear = FunctionModel::Polynomial {
            terms: vec![
                Monomial {
                    powers: vec![1],
                    coefficient: 3.0,
                },
                Monomial {
                    powers: vec![0],
                    coefficient: -1.0,
                },
            ],
        };
        let nodes = NodeSet::new(vec![0.1, 0.6], 0.5).unwrap();
        let probes: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let chk =
            remainder_empirical_check(&linear, &line_segment(1.0), &nodes, &probes, LogValue::ONE)
                .unwrap();
        assert!(chk.pass && chk.max_error < 1e-14 && chk.derivative_sup == 0.0);

        let sine = FunctionModel::sine(&[1]);
        let nodes = NodeSet::new(vec![0.0, 0.1], 0.1).unwrap();
        let p = lagrange_eval(&nodes, &[0.0, (0.2 * PI).sin()], 0.05).unwrap();
        assert!(((0.1 * PI).sin() - p - 0.0151).abs() < 1e-4);
        let cert = GevreyCertificate::new(1.0, 1.0 / (2.0 * PI), 1.0).unwrap();
        let bound = remainder_bound(1, 0.1, &cert, 1.0);
        let chk =
            remainder_empirical_check(&sine, &line_segment(0.1), &nodes, &[0.05], bound).unwrap();
        assert!(chk.pass);
        assert!((chk.max_error - 0.0151).abs() < 1e-4);
        // Pointwise bound at the probe: 0.05·0.05/2 · sup|f''| on [0, 0.1].
        let expected = 0.05 * 0.05 / 2.0 * 4.0 * PI * PI * (0.2 * PI).sin();
        assert!(
            (chk.max_pointwise_bound - expected).abs() < 1e-9,
            "{}",
            chk.max_pointwise_bound
        );

        let cubic = FunctionModel::Polynomial {
            terms: vec![
                Monomial {
                    powers: vec![3],
                    coefficient: 1.0,
                },
                Monomial {
                    powers: vec![1],
                    coefficient: -2.0,
                },
            ],
        };
        let nodes = separate_points(&set(&[(0.0, 0.3), (0.5, 1.0)]), 3).unwrap();
        let chk =
            remainder_empirical_check(&cubic, &line_segment(1.0), &nodes, &probes, LogValue::ONE)
                .unwrap();
        assert!(chk.pass && chk.max_error < 1e-13);
    }

    #[test]
    fn wide_nodes_interpolate_stably() {
        // Tiny gaps at high degree: the unscaled weights would underflow.
        let n = 60;
        let g = 1e-4;
        let nodes =
            NodeSet::new((0..=n).map(|i| i as f64 * g).collect(), g * (1.0 - 1e-9)).unwrap();
        let values: Vec<f64> = nodes.nodes().iter().map(|x| 1.0 + x).collect();
        let interp = Interpolant::new(&nodes, &values).unwrap();
        let (p, leb) = interp.eval_with_lebesgue(30.5 * g);
        assert!(p.is_finite() && leb.is_finite());
        assert!(
            (p - (1.0 + 30.5 * g)).abs() < 1e-12 * leb.max(1.0),
            "{p} {leb}"
        );
        assert!(interp.eval(0.5 * g).is_finite());
    }

    fn intervals() -> impl Strategy<Value = IntervalSet> {
        prop::collection::vec((0.001f64..0.2, 0.0f64..0.2), 1..8).prop_map(|pieces| {
            let mut t = 0.0;
            let mut iv = Vec::new();
            for (len, skip) in pieces {
                t += skip;
                iv.push((t, t + len));
                t += len + 1e-3;
            }
            IntervalSet::new(iv).unwrap()
        })
    }

    proptest! {
        #[test]
        fn separation_gap_and_membership(trace in intervals(), n in 0usize..25) {
            let ns = separate_points(&trace, n).unwrap();
            prop_assert_eq!(ns.nodes().len(), n + 1);
            prop_assert_eq!(ns.gap(), trace.total() / (n as f64 + 1.0));
            for w in ns.nodes().windows(2) {
                prop_assert!(w[1] - w[0] >= ns.gap());
            }
            for &x in ns.nodes() {
                prop_assert!(trace.contains(x));
            }
        }

        #[test]
        fn reproduction_and_denominators(trace in intervals(), n in 0usize..20, seed in 0u64..1000) {
            let ns = separate_points(&trace, n).unwrap();
            let values: Vec<f64> = (0..=n).map(|i| ((i as u64 * 7919 + seed) % 101) as f64 / 50.0 - 1.0).collect();
            let interp = Interpolant::new(&ns, &values).unwrap();
            for (x, v) in ns.nodes().iter().zip(&values) {
                prop_assert!((interp.eval(*x) - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
            let lower = denominator_lower_bound(n, ns.gap());
            for (i, xi) in ns.nodes().iter().enumerate() {
                let ln_prod: f64 = ns.nodes().iter().enumerate().filter(|(j, _)| *j != i).map(|(_, xj)| (xi - xj).abs().ln()).sum();
                prop_assert!(ln_prod >= lower[i].ln() - 1e-12 * lower[i].ln().abs().max(1.0));
            }
        }

        #[test]
        fn degree_exactness(trace in intervals(), n in 1usize..12, c in prop::collection::vec(-1.0f64..1.0, 12)) {
            let ns = separate_points(&trace, n).unwrap();
            let poly = |t: f64| c[..=n].iter().rev().fold(0.0, |acc, a| acc * t + a);
            let values: Vec<f64> = ns.nodes().iter().map(|&x| poly(x)).collect();
            let interp = Interpolant::new(&ns, &values).unwrap();
            let t_max = trace.intervals().last().unwrap().1;
            let scale: f64 = c[..=n].iter().map(|a| a.abs()).sum::<f64>() * t_max.max(1.0).powi(n as i32);
            for k in 0..=50 {
                let t = t_max * k as f64 / 50.0;
                let (p, leb) = interp.eval_with_lebesgue(t);
                prop_assert!((p - poly(t)).abs() <= 1e-10 * scale.max(1.0) * leb.max(1.0));
            }
        }

        #[test]
        fn poly_bound_dominates_and_is_monotone(trace in intervals(), n in 0usize..15, seed in 0u64..1000) {
            let ns = separate_points(&trace, n).unwrap();
            let t_max = trace.intervals().last().unwrap().1;
            let values: Vec<f64> = (0..=n).map(|i| (((i as u64 + 3) * 104729 + seed) % 199) as f64 / 99.0 - 1.0).collect();
            let data_sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let pb = poly_sup_bound(n, t_max, ns.gap(), data_sup).unwrap();
            let interp = Interpolant::new(&ns, &values).unwrap();
            for k in 0..=400 {
                let t = t_max * k as f64 / 400.0;
                let (p, leb) = interp.eval_with_lebesgue(t);
                prop_assert!(p.abs() <= pb.bound.value() + 64.0 * f64::EPSILON * leb * data_sup);
            }
            if n > 0 {
                let smaller_gap = poly_sup_bound(n, t_max, ns.gap() * 0.999, 1.0).unwrap();
                prop_assert!(smaller_gap.coefficient >= poly_sup_bound(n, t_max, ns.gap(), 1.0).unwrap().coefficient);
                let longer = poly_sup_bound(n, t_max * 1.5, ns.gap(), 1.0).unwrap();
                prop_assert!(longer.coefficient >= poly_sup_bound(n, t_max, ns.gap(), 1.0).unwrap().coefficient);
            }
        }
    }
}
