//! Propagation of smallness and the three ways of closing the master
//! inequality.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use super::stage::{self, Context};
use super::{
    Auxiliary, Branch, CertifyOptions, Evaluation, ObservabilityCertificate, SearchRow, Term,
    Trace, TraceStep,
};
use crate::functions::{DoublingCertificate, Field, GevreyCertificate, UcpCertificate};
use crate::geometry::{chain_of_balls, Grid, MeasurableSet, Point};
use crate::logspace::ln_factorial;
use crate::{Error, LogValue, Result};

/// Relative tolerance when rounding `log₂(r₀/r)` to an integer.
const LOG_TOL: f64 = 1e-12;

/// Iteration cap for the UCP constant `C₀`.
const C0_MAX_ITERATIONS: usize = 30;

/// Multiplicative margin applied when `C₀` is raised.
const C0_MARGIN: f64 = 1.01;

/// Largest degree the UCP branch will run the pipeline at.
const UCP_MAX_DEGREE: f64 = 1e6;

/// `(⌊log₂ x⌋, ⌈log₂ x⌉)`, snapping to an integer within a relative `1e-12`.
fn log2_floor_ceil(x: f64) -> (usize, usize) {
    let l = x.log2();
    let near = l.round();
    if (l - near).abs() <= LOG_TOL * l.abs().max(1.0) {
        let k = near.max(0.0) as usize;
        return (k, k);
    }
    (l.floor().max(0.0) as usize, l.ceil().max(0.0) as usize)
}

fn floor_tol(x: f64) -> f64 {
    let near = x.round();
    if (x - near).abs() <= LOG_TOL * x.abs().max(1.0) {
        near
    } else {
        x.floor()
    }
}

/// `2κ^{K+J}` with `J = ⌈log₂(r₀/r)⌉`.
pub fn propagation_factor(
    dc: &DoublingCertificate,
    r: f64,
    chain_steps: usize,
) -> Result<LogValue> {
    if !(r > 0.0) || r > dc.r0 {
        return Err(Error::invalid(format!(
            "propagation radius {r} must lie in (0, r0 = {}]",
            dc.r0
        )));
    }
    let (_, j) = log2_floor_ceil(dc.r0 / r);
    Ok(LogValue::from_ln(
        LN_2 + (chain_steps + j) as f64 * dc.kappa.ln(),
    ))
}

/// Measured chain from a near-maximizer to a ball center.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Propagation {
    pub kappa: f64,
    pub r0: f64,
    pub r: f64,
    /// `r·2^{⌊log₂(r₀/r)⌋}`, the radius of the chain balls.
    pub r_hat: f64,
    /// Links `K` of the chain at radius `r_hat`.
    pub chain_steps: usize,
    /// `⌊log₂(r₀/r)⌋` halvings from `r_hat` down to `r`.
    pub halvings: usize,
    /// `J = ⌈log₂(r₀/r)⌉` as charged in the factor.
    pub concentric_steps: usize,
    /// `2κ^{K+J}`.
    pub factor: LogValue,
}

/// Joins `from` to `to` by a chain of balls of radius `r̂` and charges one
/// `κ` per link and per concentric halving from `r̂` down to `r`.
pub fn propagate_doubling(
    dc: &DoublingCertificate,
    r: f64,
    grid: &Grid,
    from: Point,
    to: Point,
) -> Result<Propagation> {
    if !(r > 0.0) || r > dc.r0 {
        return Err(Error::invalid(format!(
            "propagation radius {r} must lie in (0, r0 = {}]",
            dc.r0
        )));
    }
    let (halvings, j) = log2_floor_ceil(dc.r0 / r);
    let r_hat = (r * 2f64.powi(halvings as i32)).min(dc.r0);
    let chain = chain_of_balls(grid, from, to, r_hat)?;
    let k = chain.steps();
    Ok(Propagation {
        kappa: dc.kappa,
        r0: dc.r0,
        r,
        r_hat,
        chain_steps: k,
        halvings,
        concentric_steps: j,
        factor: propagation_factor(dc, r, k)?,
    })
}

/// `r̃₀ (sup_E / (M sup_Ω))^{1/(n+1)}`.
pub fn choose_r_sigma1(n: usize, sup_e: f64, sup_omega: f64, m: f64, r0_tilde: f64) -> Result<f64> {
    if !(sup_e > 0.0) {
        return Err(Error::invalid("sup over E must be positive"));
    }
    if !(sup_omega >= sup_e && m >= 1.0 && r0_tilde > 0.0) {
        return Err(Error::invalid(format!(
            "need sup_Ω ≥ sup_E, M ≥ 1, r̃₀ > 0; got {sup_omega}, {sup_e}, {m}, {r0_tilde}"
        )));
    }
    Ok(r0_tilde * ((sup_e.ln() - m.ln() - sup_omega.ln()) / (n as f64 + 1.0)).exp())
}

/// `n₀ = 2⌊log₂ κ⌋ + 2`.
pub fn n0_sigma1(kappa: f64) -> usize {
    2 * floor_tol(kappa.log2()) as usize + 2
}

/// `(n₁, B)` with `B = (δ/r̃₀)^{1/(σ−1)}` and `n₁ = 2⌊max{log₂ κ, B}⌋ + 1`.
pub fn n1_sigma_gt1(kappa: f64, delta: f64, r0_tilde: f64, sigma: f64) -> (usize, f64) {
    let b = (delta / r0_tilde).powf(1.0 / (sigma - 1.0));
    (2 * floor_tol(kappa.log2().max(b)) as usize + 1, b)
}

/// Right side of the master inequality at one `(n, r)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MasterBound {
    pub n: usize,
    pub r: f64,
    /// `2 · 2κ^{K+J}`, including the factor from the choice of `w`.
    pub propagation: LogValue,
    /// `PolyCoef · max_i |f(x_i)|`.
    pub poly_term: LogValue,
    /// `t_max^{n+1} M (n+1)!^{σ−1} δ^{−(n+1)} sup_Ω`.
    pub remainder_term: LogValue,
    pub rhs: LogValue,
    pub sup_omega: f64,
}

/// Runs the pipeline at a given `(n, r)` and bounds `sup_Ω |f|` by
/// `propagation · (poly_term + remainder_term)`.
pub fn master_bound(
    f: &dyn Field,
    set: &MeasurableSet,
    n: usize,
    r: f64,
    dc: &DoublingCertificate,
    gc: &GevreyCertificate,
    opts: &CertifyOptions,
) -> Result<MasterBound> {
    let ctx = Context::new(f, set, opts)?;
    if r > dc.r0 {
        return Err(Error::invalid(format!("radius {r} exceeds r0 = {}", dc.r0)));
    }
    let st = stage::run(&ctx, n, r, gc, false)?;
    let prop = propagate_doubling(
        dc,
        r / 10.0,
        ctx.grid(),
        ctx.sup_omega.argmax,
        st.geometry.ball_center,
    )?;
    Ok(master_from(
        &ctx,
        n,
        r,
        &st,
        prop.factor * LogValue::new(2.0),
    ))
}

fn master_from(
    ctx: &Context<'_>,
    n: usize,
    r: f64,
    st: &stage::StageOut,
    propagation: LogValue,
) -> MasterBound {
    let s = ctx.sup_omega.value;
    let poly_term = st.poly.bound;
    let remainder_term = st.geometry.remainder_coefficient * LogValue::new(s);
    MasterBound {
        n,
        r,
        propagation,
        poly_term,
        remainder_term,
        rhs: propagation * poly_term.add(remainder_term),
        sup_omega: s,
    }
}

fn term(name: &str, ln: f64) -> Term {
    Term {
        name: name.into(),
        ln,
    }
}

/// Common tail of a doubling-based evaluation: hypothesis spot checks,
/// master inequality and the implicit resolution.
struct Closing {
    exponent: f64,
    terms: Vec<Term>,
    r_limit: f64,
    r_limit_name: &'static str,
}

fn evaluate_doubling(
    ctx: &Context<'_>,
    dc: &DoublingCertificate,
    gc: &GevreyCertificate,
    n: usize,
    r: f64,
    checks: bool,
    closing: impl FnOnce(&stage::StageOut, &Propagation) -> Closing,
) -> Result<Evaluation> {
    let s = ctx.sup_omega.value;
    let st = stage::run(ctx, n, r, gc, checks)?;
    let x = st.geometry.ball_center;
    let prop = propagate_doubling(dc, r / 10.0, ctx.grid(), ctx.sup_omega.argmax, x)?;
    let master = master_from(ctx, n, r, &st, prop.factor * LogValue::new(2.0));
    let Closing {
        exponent,
        terms,
        r_limit,
        r_limit_name,
    } = closing(&st, &prop);

    let mut trace = Trace {
        steps: st.steps.clone(),
    };
    let kappa = LogValue::new(dc.kappa);
    trace.push(TraceStep::new(
        "chain propagation",
        "doubling along an overlapping chain from the near-maximizer",
        &[
            ("kappa", dc.kappa),
            ("r_hat", prop.r_hat),
            ("chain_steps", prop.chain_steps as f64),
        ],
        LogValue::new(s),
        kappa.powi(prop.chain_steps as i64) * LogValue::new(ctx.ball_sup(x, prop.r_hat)),
    ));
    trace.push(TraceStep::new(
        "concentric doubling",
        "doubling on concentric balls from r_hat down to r/10",
        &[("kappa", dc.kappa), ("halvings", prop.halvings as f64)],
        LogValue::new(ctx.ball_sup(x, prop.r_hat)),
        kappa.powi(prop.halvings as i64) * LogValue::new(ctx.ball_sup(x, st.geometry.rho)),
    ));
    trace.push(TraceStep::new(
        "master inequality",
        "propagation times interpolant plus remainder on the segment",
        &[("n", n as f64), ("r", r)],
        LogValue::new(s),
        master.rhs,
    ));
    trace.push(TraceStep::new(
        "radius admissible",
        r_limit_name,
        &[("r", r)],
        LogValue::new(r),
        LogValue::new(r_limit),
    ));
    close(ctx, n, r, st, Some(prop), exponent, terms, trace)
}

#[allow(clippy::too_many_arguments)]
fn close(
    ctx: &Context<'_>,
    n: usize,
    r: f64,
    st: stage::StageOut,
    propagation: Option<Propagation>,
    exponent: f64,
    terms: Vec<Term>,
    mut trace: Trace,
) -> Result<Evaluation> {
    let s = ctx.sup_omega.value;
    let d = ctx.sup_e.value;
    if !(exponent > 0.0 && exponent < 1.0) {
        return Err(Error::Internal(format!(
            "exponent {exponent} outside (0, 1)"
        )));
    }
    let ln_a: f64 = terms.iter().map(|t| t.ln).sum();
    if !ln_a.is_finite() {
        return Err(Error::Infeasible(format!(
            "constant at degree {n} is not finite"
        )));
    }
    let constant = LogValue::from_ln((ln_a / (1.0 - exponent)).max(0.0));
    trace.push(TraceStep::new(
        "implicit resolution",
        "sup_Ω ≤ A sup_Ω^γ sup_E^(1-γ)",
        &[("ln_a", ln_a), ("exponent", exponent)],
        LogValue::new(s),
        LogValue::from_ln(ln_a + exponent * s.ln() + (1.0 - exponent) * d.ln()),
    ));
    trace.push(TraceStep::new(
        "final bound",
        "sup_Ω / sup_E ≤ A^(1/(1-γ))",
        &[("sup_omega", s), ("sup_e", d)],
        LogValue::new(s / d),
        constant,
    ));
    Ok(Evaluation {
        n,
        r,
        geometry: st.geometry,
        propagation,
        exponent,
        terms,
        ln_a,
        constant,
        trace,
    })
}

fn evaluate_sigma1(
    ctx: &Context<'_>,
    dc: &DoublingCertificate,
    gc: &GevreyCertificate,
    n: usize,
    checks: bool,
) -> Result<Evaluation> {
    let r0t = dc.r0;
    let r = choose_r_sigma1(n, ctx.sup_e.value, ctx.sup_omega.value, gc.m, r0t)?;
    let l2k = dc.kappa.log2();
    let gamma = l2k / (n as f64 + 1.0);
    evaluate_doubling(ctx, dc, gc, n, r, checks, |st, prop| {
        let geo = &st.geometry;
        let rem_scaled = (n as f64 + 1.0) * ((geo.t_max / r).ln() + (r0t / gc.delta).ln());
        let interp = (geo.poly_coefficient * LogValue::new(geo.discretization))
            .add(LogValue::from_ln(rem_scaled));
        Closing {
            exponent: gamma,
            terms: vec![
                term("propagation", LN_2 + prop.factor.ln()),
                term("radius_power", l2k * r.ln()),
                term("r0_power", -l2k * r0t.ln()),
                term("gevrey_power", gamma * gc.m.ln()),
                term("interpolation", interp.ln()),
            ],
            r_limit: r0t,
            r_limit_name: "r ≤ r̃₀",
        }
    })
}

fn evaluate_sigma_gt1(
    ctx: &Context<'_>,
    dc: &DoublingCertificate,
    gc: &GevreyCertificate,
    n: usize,
    checks: bool,
) -> Result<Evaluation> {
    let r0t = dc.r0;
    let s = ctx.sup_omega.value;
    let d = ctx.sup_e.value;
    let k = n as f64 + 1.0;
    let sm1 = gc.sigma - 1.0;
    let r = gc.delta * (-sm1 * k.ln() + (d.ln() - gc.m.ln() - s.ln()) / k).exp();
    if r > r0t * (1.0 + LOG_TOL) {
        return Err(Error::Infeasible(format!(
            "radius {r:.6e} at degree {n} exceeds r̃₀ = {r0t}"
        )));
    }
    let l2k = dc.kappa.log2();
    let eta = l2k / k;
    evaluate_doubling(ctx, dc, gc, n, r, checks, |st, prop| {
        let geo = &st.geometry;
        let rem_scaled = k * (geo.t_max / r).ln() + sm1 * (ln_factorial(n as u64 + 1) - k * k.ln());
        let interp = (geo.poly_coefficient * LogValue::new(geo.discretization))
            .add(LogValue::from_ln(rem_scaled));
        Closing {
            exponent: eta,
            terms: vec![
                term("propagation", LN_2 + prop.factor.ln()),
                term("radius_power", l2k * r.ln()),
                term("delta_power", -l2k * gc.delta.ln()),
                term("degree_power", sm1 * l2k * k.ln()),
                term("gevrey_power", eta * gc.m.ln()),
                term("interpolation", interp.ln()),
            ],
            r_limit: r0t,
            r_limit_name: "r ≤ r̃₀ for the Gevrey radius choice",
        }
    })
}

struct SearchOutcome {
    prescribed: Option<Evaluation>,
    best: Evaluation,
    rows: Vec<SearchRow>,
}

fn search(
    n_prescribed: usize,
    width: usize,
    eval: impl Fn(usize, bool) -> Result<Evaluation> + Sync,
) -> Result<SearchOutcome> {
    let ns: Vec<usize> = (n_prescribed..=n_prescribed + width).collect();
    let results: Vec<(usize, Result<Evaluation>)> =
        ns.par_iter().map(|&n| (n, eval(n, false))).collect();
    let mut best: Option<(usize, LogValue)> = None;
    let mut rows = Vec::with_capacity(results.len());
    for (n, res) in &results {
        match res {
            Ok(ev) => {
                if best.is_none_or(|(_, c)| ev.constant.ln() < c.ln()) {
                    best = Some((*n, ev.constant));
                }
                rows.push(SearchRow {
                    n: *n,
                    r: Some(ev.r),
                    constant: Some(ev.constant),
                    error: None,
                });
            }
            Err(e) => rows.push(SearchRow {
                n: *n,
                r: None,
                constant: None,
                error: Some(e.to_string()),
            }),
        }
    }
    let Some((best_n, _)) = best else {
        let diag: Vec<String> = rows
            .iter()
            .map(|r| format!("n={}: {}", r.n, r.error.as_deref().unwrap_or("")))
            .collect();
        return Err(Error::Infeasible(format!(
            "pipeline failed at every degree: {}",
            diag.join("; ")
        )));
    };
    let prescribed = results[0]
        .1
        .is_ok()
        .then(|| eval(n_prescribed, true))
        .transpose()?;
    let best = if best_n == n_prescribed {
        prescribed.clone().expect("prescribed degree succeeded")
    } else {
        eval(best_n, true)?
    };
    Ok(SearchOutcome {
        prescribed,
        best,
        rows,
    })
}

fn assemble(
    ctx: &Context<'_>,
    branch: Branch,
    aux: Auxiliary,
    out: SearchOutcome,
) -> ObservabilityCertificate {
    let trace_ok =
        out.best.trace.all_hold() && out.prescribed.as_ref().is_none_or(|p| p.trace.all_hold());
    ObservabilityCertificate {
        branch,
        constant: out.best.constant,
        n: out.best.n,
        r: out.best.r,
        sup_omega: ctx.sup_omega.value,
        sup_e: ctx.sup_e.value,
        measure_omega: ctx.measure_omega,
        measure_e: ctx.measure_e,
        aux,
        prescribed: out.prescribed,
        best: out.best,
        search: out.rows,
        trace_ok,
    }
}

fn base_aux(gc: &GevreyCertificate, r0: f64, r0_tilde: f64) -> Auxiliary {
    Auxiliary {
        r0,
        r0_tilde,
        sigma: gc.sigma,
        gevrey_m: gc.m,
        gevrey_delta: gc.delta,
        ..Default::default()
    }
}

/// Observability constant for an analytic (`σ = 1`) function with a
/// doubling certificate.
pub fn certify_sigma1(
    f: &dyn Field,
    set: &MeasurableSet,
    dc: &DoublingCertificate,
    gc: &GevreyCertificate,
    opts: &CertifyOptions,
) -> Result<ObservabilityCertificate> {
    if gc.sigma != 1.0 {
        return Err(Error::invalid(format!(
            "the σ = 1 branch needs σ = 1, got {}",
            gc.sigma
        )));
    }
    let ctx = Context::new(f, set, opts)?;
    let n0 = n0_sigma1(dc.kappa);
    let out = search(n0, opts.search_width, |n, checks| {
        evaluate_sigma1(&ctx, dc, gc, n, checks)
    })?;
    let aux = Auxiliary {
        kappa: Some(dc.kappa),
        n0: Some(n0),
        ..base_aux(gc, dc.r0, dc.r0)
    };
    Ok(assemble(&ctx, Branch::Sigma1, aux, out))
}

/// Observability constant for a Gevrey function of order `σ > 1` with a
/// doubling certificate.
pub fn certify_sigma_gt1(
    f: &dyn Field,
    set: &MeasurableSet,
    dc: &DoublingCertificate,
    gc: &GevreyCertificate,
    opts: &CertifyOptions,
) -> Result<ObservabilityCertificate> {
    if !(gc.sigma > 1.0) {
        return Err(Error::invalid(format!(
            "the σ > 1 branch needs σ > 1, got {}",
            gc.sigma
        )));
    }
    let ctx = Context::new(f, set, opts)?;
    let (n1, big_b) = n1_sigma_gt1(dc.kappa, gc.delta, dc.r0, gc.sigma);
    let out = search(n1, opts.search_width, |n, checks| {
        evaluate_sigma_gt1(&ctx, dc, gc, n, checks)
    })?;
    let aux = Auxiliary {
        kappa: Some(dc.kappa),
        n1: Some(n1),
        big_b: Some(big_b),
        ..base_aux(gc, dc.r0, dc.r0)
    };
    Ok(assemble(&ctx, Branch::SigmaGt1, aux, out))
}

/// The σ = 1 construction at a fixed degree `n` instead of the searched one.
pub fn evaluate_sigma1_at(
    f: &dyn Field,
    set: &MeasurableSet,
    dc: &DoublingCertificate,
    gc: &GevreyCertificate,
    n: usize,
    opts: &CertifyOptions,
) -> Result<Evaluation> {
    if gc.sigma != 1.0 {
        return Err(Error::invalid(format!(
            "the σ = 1 branch needs σ = 1, got {}",
            gc.sigma
        )));
    }
    let ctx = Context::new(f, set, opts)?;
    evaluate_sigma1(&ctx, dc, gc, n, true)
}

/// The σ > 1 construction at a fixed degree `n`.
pub fn evaluate_sigma_gt1_at(
    f: &dyn Field,
    set: &MeasurableSet,
    dc: &DoublingCertificate,
    gc: &GevreyCertificate,
    n: usize,
    opts: &CertifyOptions,
) -> Result<Evaluation> {
    if !(gc.sigma > 1.0) {
        return Err(Error::invalid(format!(
            "the σ > 1 branch needs σ > 1, got {}",
            gc.sigma
        )));
    }
    let ctx = Context::new(f, set, opts)?;
    evaluate_sigma_gt1(&ctx, dc, gc, n, true)
}

/// Quantities of the UCP closing argument at a fixed `C₀`.
struct UcpParams {
    ln_q: f64,
    y: f64,
    xi: f64,
    n0: usize,
}

fn ucp_params(
    ctx: &Context<'_>,
    uc: &UcpCertificate,
    gc: &GevreyCertificate,
    r0t: f64,
    c0: f64,
) -> Result<UcpParams> {
    let (a, b) = (uc.a, uc.b);
    let p = 1.0 / b - gc.sigma + 1.0;
    let ln_q = c0.ln() + a / b + (ctx.measure_omega / ctx.measure_e).ln();
    let ln_y1 = 10f64.ln() * b + b.ln() - b * r0t.ln();
    let ln_y2 = (LN_2 + c0.ln() + a / b + b.ln() / b - gc.delta.ln()) / p;
    let ln_y = ln_y1.max(ln_y2);
    let ln_ratio = gc.m.ln() + ctx.sup_omega.value.ln() - ctx.sup_e.value.ln();
    let y = ln_y.exp();
    let xi = ln_ratio / (LN_2 + ln_q) + y;
    if !(xi < UCP_MAX_DEGREE) {
        return Err(Error::Infeasible(format!(
            "UCP degree threshold ξ = {xi:.3e} is beyond reach"
        )));
    }
    Ok(UcpParams {
        ln_q,
        y,
        xi,
        n0: xi.floor() as usize,
    })
}

/// Observability constant from a Gevrey certificate and a quantitative
/// unique continuation bound `sup_Ω ≤ exp(a/r^b) sup_{B_r}`.
pub fn certify_ucp(
    f: &dyn Field,
    set: &MeasurableSet,
    uc: &UcpCertificate,
    gc: &GevreyCertificate,
    opts: &CertifyOptions,
) -> Result<ObservabilityCertificate> {
    let (a, b) = (uc.a, uc.b);
    if !(gc.sigma >= 1.0 && gc.sigma < 1.0 + 1.0 / b) {
        return Err(Error::Hypothesis(format!(
            "UCP branch needs 1 ≤ σ < 1 + 1/b; got σ = {}, b = {b}",
            gc.sigma
        )));
    }
    let ctx = Context::new(f, set, opts)?;
    let s = ctx.sup_omega.value;
    let r0t = uc.r0.min(1.0);
    let p = 1.0 / b - gc.sigma + 1.0;
    let ratio_ln = (ctx.measure_omega / ctx.measure_e).ln();

    let mut c0 = 1.0f64;
    let mut iterations = 0;
    let (params, st, required) = loop {
        iterations += 1;
        let params = ucp_params(&ctx, uc, gc, r0t, c0)?;
        let n = params.n0;
        let k = n as f64 + 1.0;
        let r = 10.0 * (b / k).powf(1.0 / b);
        let st = stage::run(&ctx, n, r, gc, false)?;
        let geo = &st.geometry;
        let req1 =
            (LN_2 + geo.poly_coefficient.ln() + geo.discretization.ln() - n as f64 * ratio_ln) / k;
        let req2 = (LN_2 + k * geo.t_max.ln() + (gc.sigma - 1.0) * ln_factorial(n as u64 + 1)
            - a / b
            - k * (b.ln() / b - p * k.ln()))
            / (k + 1.0);
        let required = req1.max(req2).max(0.0).exp();
        if required <= c0 {
            break (params, st, required);
        }
        if iterations >= C0_MAX_ITERATIONS {
            return Err(Error::Infeasible(format!(
                "C₀ did not settle after {C0_MAX_ITERATIONS} rounds"
            )));
        }
        c0 = required * C0_MARGIN;
    };

    let n = params.n0;
    let k = n as f64 + 1.0;
    let r = 10.0 * (b / k).powf(1.0 / b);
    let contraction = (c0.ln() + a / b + b.ln() / b - gc.delta.ln() - p * k.ln()).exp();
    if contraction > 0.5 {
        return Err(Error::Internal(format!(
            "contraction factor {contraction} exceeds 1/2 at n₀ = {n}"
        )));
    }
    // Rerun with the sampled checks for the recorded trace.
    let st = if n <= stage::EMPIRICAL_CHECK_MAX_DEGREE {
        stage::run(&ctx, n, r, gc, true)?
    } else {
        st
    };
    let gamma = params.ln_q / (LN_2 + params.ln_q);
    let geometric =
        LogValue::from_ln(params.y * params.ln_q).add(LogValue::from_ln(-params.y * LN_2));
    let terms = vec![
        term("c0", c0.ln()),
        term("ucp_exponent", a / b),
        term("gevrey_power", gamma * gc.m.ln()),
        term("geometric", geometric.ln()),
    ];
    let ln_c1: f64 = terms.iter().map(|t| t.ln).sum();

    let rho = st.geometry.rho;
    let prop_ln = LN_2 + a * k / b;
    let master = master_from(&ctx, n, r, &st, LogValue::from_ln(prop_ln));
    let mut trace = Trace {
        steps: st.steps.clone(),
    };
    trace.push(TraceStep::new(
        "ucp propagation",
        "unique continuation from the ball of radius r/10",
        &[("a", a), ("b", b), ("rho", rho)],
        LogValue::new(s),
        LogValue::from_ln(a / rho.powf(b))
            * LogValue::new(ctx.ball_sup(st.geometry.ball_center, rho)),
    ));
    trace.push(TraceStep::new(
        "master inequality",
        "propagation times interpolant plus remainder on the segment",
        &[("n", n as f64), ("r", r)],
        LogValue::new(s),
        master.rhs,
    ));
    trace.push(TraceStep::new(
        "c0 sufficiency",
        "C₀ dominates the measured interpolation and remainder factors",
        &[("c0", c0), ("iterations", iterations as f64)],
        LogValue::new(required),
        LogValue::new(c0),
    ));
    trace.push(TraceStep::new(
        "contraction",
        "remainder ratio at n₀ is at most 1/2",
        &[("n0", n as f64), ("exponent_p", p)],
        LogValue::new(contraction),
        LogValue::new(0.5),
    ));
    trace.push(TraceStep::new(
        "radius admissible",
        "r ≤ r̃₀ at n₀",
        &[("r", r)],
        LogValue::new(r),
        LogValue::new(r0t),
    ));
    let eval = close(&ctx, n, r, st, None, gamma, terms, trace)?;

    let aux = Auxiliary {
        a: Some(a),
        b: Some(b),
        n0: Some(n),
        xi: Some(params.xi),
        c0: Some(c0),
        ln_c1: Some(ln_c1),
        contraction: Some(contraction),
        c0_iterations: Some(iterations),
        ..base_aux(gc, uc.r0, r0t)
    };
    let out = SearchOutcome {
        prescribed: Some(eval.clone()),
        rows: vec![SearchRow {
            n,
            r: Some(r),
            constant: Some(eval.constant),
            error: None,
        }],
        best: eval,
    };
    Ok(assemble(&ctx, Branch::Ucp, aux, out))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::certify::{empirical_ratio, soundness_check};
    use crate::functions::{doubling_centers, doubling_radii, estimate_doubling, FunctionModel};
    use crate::geometry::{Domain, Grid};

    fn unit_line() -> Arc<Grid> {
        Arc::new(Grid::new(Domain::interval(1.0), &[1024]).unwrap())
    }

    fn certificates(
        f: &FunctionModel,
        grid: &Grid,
        r0: f64,
    ) -> (DoublingCertificate, GevreyCertificate) {
        let centers = doubling_centers(grid.domain(), 32);
        let dc = estimate_doubling(f, grid, &doubling_radii(r0), &centers)
            .unwrap()
            .certificate
            .unwrap();
        let sup = crate::functions::sup_norm(f, crate::functions::Region::Domain, grid)
            .unwrap()
            .value;
        let gc = GevreyCertificate::from_envelope(f.envelope(grid.domain()), sup).unwrap();
        (dc, gc)
    }

    #[test]
    fn propagation_examples() {
        let dc = DoublingCertificate::new(2.0, 1.0).unwrap();
        assert_eq!(
            propagation_factor(&dc, 1.0, 3).unwrap().ln(),
            (2.0 * 8.0f64).ln()
        );
        assert!((propagation_factor(&dc, 0.125, 4).unwrap().value() - 256.0).abs() < 1e-9);
        let a = propagation_factor(&dc, 0.1, 2).unwrap();
        let b = propagation_factor(&dc, 0.05, 2).unwrap();
        assert!((b.ln() - a.ln() - 2f64.ln()).abs() < 1e-12);
        assert!(propagation_factor(&dc, 1.5, 0).is_err());

        let g = unit_line();
        let p = propagate_doubling(&dc, 0.125, &g, [0.1, 0.0], [0.9, 0.0]).unwrap();
        assert_eq!(p.r_hat, 1.0);
        assert_eq!((p.halvings, p.concentric_steps), (3, 3));
        assert_eq!(p.chain_steps, 2);
        assert!(propagate_doubling(&dc, 2.0, &g, [0.1, 0.0], [0.9, 0.0]).is_err());
    }

    #[test]
    fn radius_choice_examples() {
        assert_eq!(choose_r_sigma1(5, 1.0, 1.0, 1.0, 0.3).unwrap(), 0.3);
        let r = choose_r_sigma1(9, 2f64.powi(-10), 1.0, 1.0, 0.4).unwrap();
        assert!((r - 0.2).abs() < 1e-15);
        let rs: Vec<f64> = (0..40)
            .map(|n| choose_r_sigma1(n, 1e-3, 1.0, 2.0, 0.5).unwrap())
            .collect();
        assert!(rs.windows(2).all(|w| w[0] < w[1] && w[1] <= 0.5));
        assert!(choose_r_sigma1(3, 0.0, 1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn degree_choices() {
        assert_eq!(n0_sigma1(4.0), 6);
        assert!((4f64.log2() / (n0_sigma1(4.0) as f64 + 1.0) - 2.0 / 7.0).abs() < 1e-15);
        assert_eq!(n0_sigma1(2.0), 4);
        let (n1, b) = n1_sigma_gt1(2.0, 1.0, 0.5, 2.0);
        assert_eq!((n1, b), (5, 2.0));
        assert!((2f64.log2() / (n1 as f64 + 1.0) - 1.0 / 6.0).abs() < 1e-15);
        let (n1, b) = n1_sigma_gt1(4.0, 0.2, 0.5, 1.01);
        assert!(b < 1e-30);
        assert_eq!(n1, 5);
        // Radius from the σ > 1 choice at n₁ stays below r̃₀ for M ≥ 1, sup_E ≤ sup_Ω.
        for &(kappa, delta, r0, sigma) in &[
            (2.0, 1.0, 0.5, 2.0),
            (8.0, 3.0, 0.25, 1.5),
            (3.0, 0.01, 1.0, 3.0),
        ] {
            let (n1, _) = n1_sigma_gt1(kappa, delta, r0, sigma);
            let r = delta * (n1 as f64 + 1.0).powf(-(sigma - 1.0));
            assert!(r <= r0, "{kappa} {delta} {r0} {sigma}: {r}");
        }
    }

    #[test]
    fn master_bound_dominates_sup() {
        let g = unit_line();
        let f = FunctionModel::sine(&[1]);
        let h = g.cell_size(0);
        let e = MeasurableSet::from_predicate(g.clone(), |p| p[0] - h / 2.0 <= 0.1);
        let (dc, gc) = certificates(&f, &g, 0.25);
        let mb = master_bound(&f, &e, 8, 0.05, &dc, &gc, &CertifyOptions::default()).unwrap();
        assert!(mb.rhs.ln().is_finite());
        assert!(mb.rhs.ln() >= mb.sup_omega.ln());

        let one = FunctionModel::constant(1.0, 1);
        let all = MeasurableSet::full(g.clone());
        let (dc, gc) = certificates(&one, &g, 0.25);
        let mb = master_bound(&one, &all, 0, 0.25, &dc, &gc, &CertifyOptions::default()).unwrap();
        assert_eq!(mb.poly_term.ln(), 0.0);
        assert!(mb.rhs.ln() >= mb.propagation.ln());
    }

    #[test]
    fn constant_function_is_sound() {
        let g = unit_line();
        let one = FunctionModel::constant(1.0, 1);
        let e = MeasurableSet::from_predicate(g.clone(), |p| (0.3..0.4).contains(&p[0]));
        let (dc, gc) = certificates(&one, &g, 0.25);
        let cert = certify_sigma1(&one, &e, &dc, &gc, &CertifyOptions::default()).unwrap();
        assert!(cert.constant.ln() >= 0.0);
        assert!(
            cert.trace_ok,
            "{:?}",
            cert.best.trace.failures().collect::<Vec<_>>()
        );
        let ratio = empirical_ratio(&one, &e).unwrap();
        assert_eq!(ratio.ratio, 1.0);
        assert!(soundness_check(cert.constant, &ratio).pass);
    }

    #[test]
    fn sine_sigma1_certificate() {
        let g = unit_line();
        let f = FunctionModel::sine(&[1]);
        let e = MeasurableSet::from_predicate(g.clone(), |p| p[0] < 0.1);
        let (dc, gc) = certificates(&f, &g, 0.25);
        let cert = certify_sigma1(&f, &e, &dc, &gc, &CertifyOptions::default()).unwrap();
        let ratio = empirical_ratio(&f, &e).unwrap();
        assert!(soundness_check(cert.constant, &ratio).pass);
        assert!(
            cert.trace_ok,
            "{:?}",
            cert.best.trace.failures().collect::<Vec<_>>()
        );
        let prescribed = cert.prescribed.as_ref().unwrap();
        assert_eq!(prescribed.n, n0_sigma1(dc.kappa));
        assert!(cert.constant.ln() <= prescribed.constant.ln());
        assert_eq!(cert.search.len(), 17);
        let sum: f64 = cert.best.terms.iter().map(|t| t.ln).sum();
        assert!((sum - cert.best.ln_a).abs() < 1e-12);
    }

    #[test]
    fn ucp_hypothesis_and_contraction() {
        let g = unit_line();
        let f = FunctionModel::sine(&[1]);
        let e = MeasurableSet::from_predicate(g.clone(), |p| p[0] < 0.2);
        let sup = crate::functions::sup_norm(&f, crate::functions::Region::Domain, &g)
            .unwrap()
            .value;
        let env = f.envelope(g.domain());
        let gc = GevreyCertificate::new(env.bound / sup, env.delta, 2.0).unwrap();
        let uc = UcpCertificate::new(0.5, 1.0, 0.25).unwrap();
        assert!(matches!(
            certify_ucp(&f, &e, &uc, &gc, &CertifyOptions::default()),
            Err(Error::Hypothesis(_))
        ));

        let gc = GevreyCertificate::new(env.bound / sup, env.delta, 1.5).unwrap();
        let cert = certify_ucp(&f, &e, &uc, &gc, &CertifyOptions::default()).unwrap();
        assert!(cert.aux.contraction.unwrap() <= 0.5);
        assert_eq!(cert.aux.n0.unwrap(), cert.aux.xi.unwrap().floor() as usize);
        let r = 10.0 * (1.0 / (cert.n as f64 + 1.0));
        assert!((cert.r - r).abs() < 1e-15);
        assert!(cert.r <= 0.25);
    }
}
