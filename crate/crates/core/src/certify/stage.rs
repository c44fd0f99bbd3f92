//! The measured part of the construction at one `(n, r)`.

use crate::functions::{Field, GevreyCertificate, GridSamples, Region, SupNorm};
use crate::geometry::{
    best_ray_interval, cover_domain, densest_ball, cover_count_bound, Ball, Grid, MeasurableSet,
    Point,
};
use crate::interp::{
    denominator_lower_bound, poly_sup_bound, remainder_bound, remainder_coefficient,
    remainder_empirical_check, separate_points, Interpolant, PolyBound,
};
use crate::{Error, LogValue, Result};

use super::{CertifyOptions, GeometrySummary, TraceStep};

/// Above this degree the sampled interpolation checks are skipped: the
/// barycentric evaluation loses all digits long before the bounds do.
pub(crate) const EMPIRICAL_CHECK_MAX_DEGREE: usize = 60;

/// Everything about `(f, E)` that does not depend on `(n, r)`.
pub(crate) struct Context<'a> {
    pub f: &'a dyn Field,
    pub set: &'a MeasurableSet,
    pub samples: GridSamples,
    pub sup_omega: SupNorm,
    pub sup_e: SupNorm,
    pub measure_omega: f64,
    pub measure_e: f64,
    pub opts: CertifyOptions,
}

impl<'a> Context<'a> {
    pub fn new(f: &'a dyn Field, set: &'a MeasurableSet, opts: &CertifyOptions) -> Result<Self> {
        let grid = set.grid();
        if set.count() == 0 {
            return Err(Error::EmptyRegion("E has zero measure on the grid".into()));
        }
        if opts.directions == 0 || opts.probes < 2 {
            return Err(Error::invalid(
                "need at least one ray direction and two probes",
            ));
        }
        let samples = GridSamples::new(f, grid);
        let sup_omega = samples.sup(grid, Region::Domain)?;
        let sup_e = samples.sup(grid, Region::Set(set))?;
        if !(sup_e.value > 0.0) {
            return Err(Error::Infeasible(
                "f vanishes on E; observability from null data is vacuous".into(),
            ));
        }
        Ok(Context {
            f,
            set,
            samples,
            sup_omega,
            sup_e,
            measure_omega: grid.interior_count() as f64 * grid.cell_measure(),
            measure_e: set.measure(),
            opts: *opts,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.set.grid()
    }

    /// Grid sup of `|f|` over the ball, including the center itself.
    pub fn ball_sup(&self, center: Point, radius: f64) -> f64 {
        let at_center = self.f.value(center).abs();
        match self
            .samples
            .sup(self.grid(), Region::Ball(Ball { center, radius }))
        {
            Ok(s) => s.value.max(at_center),
            Err(_) => at_center,
        }
    }
}

pub(crate) struct StageOut {
    pub geometry: GeometrySummary,
    pub poly: PolyBound,
    pub steps: Vec<TraceStep>,
}

pub(crate) fn run(
    ctx: &Context<'_>,
    n: usize,
    r: f64,
    gc: &GevreyCertificate,
    checks: bool,
) -> Result<StageOut> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Infeasible(format!(
            "radius {r} at degree {n} is not a positive length"
        )));
    }
    let grid = ctx.grid();
    let s = ctx.sup_omega.value;
    let d = ctx.sup_e.value;
    let mut steps = Vec::new();

    steps.push(TraceStep::new(
        "near-maximizer",
        "choice of the point where |f| is at least half its sup",
        &[("sup_omega", s)],
        LogValue::new(s / 2.0),
        LogValue::new(ctx.f.value(ctx.sup_omega.argmax).abs()),
    ));

    let cover = cover_domain(grid, r)?;
    let cover_bound = cover_count_bound(grid.domain(), r);
    steps.push(TraceStep::new(
        "cover count",
        "cover count, number of radius-r balls",
        &[("r", r)],
        LogValue::new(cover.len() as f64),
        LogValue::new(cover_bound as f64),
    ));
    let dense = densest_ball(ctx.set, &cover)?;
    steps.push(TraceStep::new(
        "pigeonhole",
        "densest cover ball holds at least |E|/count of E",
        &[
            ("set_cells", ctx.set.count() as f64),
            ("densest_cells", dense.count as f64),
            ("cover_count", cover.len() as f64),
        ],
        LogValue::new(ctx.set.count() as f64),
        LogValue::new((dense.count * cover.len()) as f64),
    ));
    let x = dense.ball.center;

    let rho = r / 10.0;
    let fx = ctx.f.value(x).abs();
    let (w, fw) = match ctx.samples.sup(
        grid,
        Region::Ball(Ball {
            center: x,
            radius: rho,
        }),
    ) {
        Ok(sup) if sup.value > fx => (sup.argmax, sup.value),
        _ => (x, fx),
    };
    steps.push(TraceStep::new(
        "w-selection",
        "|f(w)| is at least half the sup over the small ball",
        &[("rho", rho), ("f_w", fw)],
        LogValue::new(ctx.ball_sup(x, rho)),
        LogValue::new(2.0 * fw),
    ));

    let ray = best_ray_interval(&dense.ball, ctx.set, w, ctx.opts.directions)?;
    let seg = ray.segment;
    let t_max = seg.t_max;
    steps.push(TraceStep::new(
        "w on segment",
        "the segment starts at w, so sup over it dominates |f(w)|",
        &[("t_max", t_max)],
        LogValue::new(fw),
        LogValue::new(ctx.f.value(seg.point(0.0)).abs()),
    ));
    steps.push(TraceStep::new(
        "segment length",
        "the segment lies in the ball of radius 2r about w",
        &[("r", r)],
        LogValue::new(t_max),
        LogValue::new(2.0 * r),
    ));

    let nodes = separate_points(&ray.trace, n)?;
    let g = nodes.gap();
    let values: Vec<f64> = nodes
        .nodes()
        .iter()
        .map(|&t| ctx.f.value(seg.point(t)))
        .collect();
    let node_sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let poly = poly_sup_bound(n, t_max, g, node_sup)?;
    let rem_coef = remainder_coefficient(n, t_max, gc);

    if n > 0 {
        let xs = nodes.nodes();
        let min_gap = xs
            .windows(2)
            .map(|p| p[1] - p[0])
            .fold(f64::INFINITY, f64::min);
        steps.push(TraceStep::new(
            "node gap",
            "consecutive nodes at least |trace|/(n+1) apart",
            &[("trace_length", ray.trace.total()), ("n", n as f64)],
            LogValue::new(g),
            LogValue::new(min_gap),
        ));
        let lower = denominator_lower_bound(n, g);
        let (worst, actual) = (0..=n)
            .map(|i| {
                let ln: f64 = (0..=n)
                    .filter(|&j| j != i)
                    .map(|j| (xs[i] - xs[j]).abs().ln())
                    .sum();
                (i, LogValue::from_ln(ln))
            })
            .min_by(|a, b| (a.1.ln() - lower[a.0].ln()).total_cmp(&(b.1.ln() - lower[b.0].ln())))
            .expect("at least one node");
        steps.push(TraceStep::new(
            "denominators",
            "product of node distances at least i!(n-i)! g^n",
            &[("i", worst as f64), ("gap", g)],
            lower[worst],
            actual,
        ));
    }

    if checks && n <= EMPIRICAL_CHECK_MAX_DEGREE {
        let probes: Vec<f64> = (0..ctx.opts.probes)
            .map(|k| t_max * k as f64 / (ctx.opts.probes - 1) as f64)
            .collect();
        let interp = Interpolant::new(&nodes, &values)?;
        let eps = f64::EPSILON;
        let sampled = probes
            .iter()
            .map(|&t| {
                let (p, lebesgue) = interp.eval_with_lebesgue(t);
                (p.abs() - 64.0 * eps * (n as f64 + 1.0) * lebesgue * node_sup).max(0.0)
            })
            .fold(0.0, f64::max);
        steps.push(TraceStep::new(
            "interpolant bound",
            "sampled sup of the interpolant against the node-gap bound",
            &[("probes", probes.len() as f64), ("node_sup", node_sup)],
            LogValue::new(sampled),
            poly.bound,
        ));
        let bound = remainder_bound(n, t_max, gc, s);
        let check = remainder_empirical_check(ctx.f, &seg, &nodes, &probes, bound)?;
        steps.push(TraceStep::new(
            "remainder pointwise",
            "sampled interpolation error against the remainder formula",
            &[
                ("probes", probes.len() as f64),
                ("derivative_sup", check.derivative_sup),
            ],
            LogValue::new(check.max_error),
            LogValue::new((check.max_error + check.min_slack).max(0.0)),
        ));
        steps.push(TraceStep::new(
            "remainder bound",
            "remainder formula against the Gevrey bound",
            &[("m", gc.m), ("delta", gc.delta), ("sigma", gc.sigma)],
            LogValue::new(check.max_pointwise_bound),
            bound,
        ));
    }

    let geometry = GeometrySummary {
        cover_count: cover.len(),
        cover_bound,
        densest_index: dense.index,
        densest_cells: dense.count,
        ball_center: x,
        rho,
        w,
        ray_direction: seg.direction,
        t_max,
        traced_length: ray.trace.total(),
        gap: g,
        nodes: nodes.nodes().to_vec(),
        node_sup,
        discretization: (node_sup / d).max(1.0),
        poly_coefficient: poly.coefficient,
        remainder_coefficient: rem_coef,
    };
    Ok(StageOut {
        geometry,
        poly,
        steps,
    })
}
