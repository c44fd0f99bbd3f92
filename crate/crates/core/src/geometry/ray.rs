use serde::Serialize;

use super::{add_scaled, sphere_interval, Ball, MeasurableSet, Point};
use crate::{Error, Result};

/// Number of sampled directions in the plane.
pub const DEFAULT_DIRECTIONS: usize = 64;

/// Unit directions: `±1` on the line, `n_dir` evenly spaced angles in the
/// plane starting at angle 0.
pub fn direction_fan(dim: usize, n_dir: usize) -> Vec<Point> {
    if dim == 1 {
        return vec![[1.0, 0.0], [-1.0, 0.0]];
    }
    (0..n_dir)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n_dir as f64;
            [theta.cos(), theta.sin()]
        })
        .collect()
}

/// `{origin + t·direction : t ∈ [0, t_max]}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Segment {
    pub origin: Point,
    pub direction: Point,
    pub t_max: f64,
}

impl Segment {
    pub fn point(&self, t: f64) -> Point {
        add_scaled(self.origin, self.direction, t)
    }

    /// Same point set traversed from the other end.
    pub fn reversed(&self) -> Segment {
        Segment {
            origin: self.point(self.t_max),
            direction: [-self.direction[0], -self.direction[1]],
            t_max: self.t_max,
        }
    }
}

/// Sorted, pairwise disjoint closed intervals of the segment parameter.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
    total: f64,
}

impl IntervalSet {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        for (k, &(lo, hi)) in intervals.iter().enumerate() {
            if !(lo <= hi) {
                return Err(Error::invalid(format!(
                    "interval {k} is reversed: [{lo}, {hi}]"
                )));
            }
            if k > 0 && intervals[k - 1].1 >= lo {
                return Err(Error::invalid(format!(
                    "intervals {} and {k} overlap or are unsorted",
                    k - 1
                )));
            }
        }
        let total = intervals.iter().map(|(lo, hi)| hi - lo).sum();
        Ok(IntervalSet { intervals, total })
    }

    pub fn empty() -> Self {
        IntervalSet::default()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Sum of interval lengths.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// `inf (S ∩ [x, ∞))`, if that set is nonempty.
    pub fn infimum_from(&self, x: f64) -> Option<f64> {
        self.intervals
            .iter()
            .find(|&&(_, hi)| hi >= x)
            .map(|&(lo, _)| lo.max(x))
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= t && t <= hi)
    }

    /// The image under `t ↦ t_max − t`.
    pub fn reflected(&self, t_max: f64) -> IntervalSet {
        let intervals = self
            .intervals
            .iter()
            .rev()
            .map(|&(lo, hi)| (t_max - hi, t_max - lo))
            .collect();
        IntervalSet {
            intervals,
            total: self.total,
        }
    }

    fn push_merged(&mut self, lo: f64, hi: f64) {
        if hi <= lo {
            return;
        }
        if let Some(last) = self.intervals.last_mut() {
            if lo - last.1 <= 1e-12 * hi.abs().max(1.0) {
                self.total += hi - last.1;
                last.1 = hi;
                return;
            }
        }
        self.intervals.push((lo, hi));
        self.total += hi - lo;
    }
}

/// Exact cell-by-cell traversal of `origin + t·dir` for `t ∈ [t0, t1]`,
/// keeping the pieces that run through set cells. Each kept piece lies in a
/// single set cell, so the trace never claims a parameter whose point is
/// outside the set.
fn trace_range(set: &MeasurableSet, origin: Point, dir: Point, t0: f64, t1: f64) -> IntervalSet {
    let mut out = IntervalSet::empty();
    if !(t1 > t0) {
        return out;
    }
    let grid = set.grid();
    let dim = grid.dim();
    let p0 = add_scaled(origin, dir, t0);
    let torus = grid.domain().kind() == super::DomainKind::Torus;
    let mut ij = [0i64; 2];
    let mut next_t = [f64::INFINITY; 2];
    let mut delta = [f64::INFINITY; 2];
    let mut step = [0i64; 2];
    for a in 0..dim {
        let n = grid.cells(a) as i64;
        let h = grid.cell_size(a);
        let mut c = grid.axis_cell(a, p0[a]);
        if !torus {
            c = c.clamp(0, n - 1);
        }
        ij[a] = c;
        if dir[a] > 0.0 {
            step[a] = 1;
            next_t[a] = t0 + ((c + 1) as f64 * h - p0[a]) / dir[a];
            delta[a] = h / dir[a];
        } else if dir[a] < 0.0 {
            step[a] = -1;
            next_t[a] = t0 + (c as f64 * h - p0[a]) / dir[a];
            delta[a] = -h / dir[a];
        }
    }
    let mut t = t0;
    loop {
        let t_next = next_t[..dim].iter().copied().fold(t1, f64::min);
        if t_next > t && grid.resolve(ij).is_some_and(|idx| set.contains_cell(idx)) {
            out.push_merged(t, t_next);
        }
        if t_next >= t1 {
            break;
        }
        for a in 0..dim {
            if next_t[a] <= t_next {
                ij[a] += step[a];
                next_t[a] += delta[a];
            }
        }
        t = t_next;
    }
    out
}

/// One-dimensional trace `{t ∈ [0, t_max] : seg(t) ∈ E}` of a set along a
/// segment lying in the domain.
pub fn restrict_to_segment(set: &MeasurableSet, seg: &Segment) -> IntervalSet {
    trace_range(set, seg.origin, seg.direction, 0.0, seg.t_max)
}

/// The ray selected from a fan of directions.
#[derive(Clone, Debug, Serialize)]
pub struct RayChoice {
    pub direction_index: usize,
    /// Starts at `w`; `t_max` is where the ray leaves `B ∩ Ω`, at most `2r`.
    pub segment: Segment,
    /// Parameter where the ray enters the ball (0 when `w` is inside it).
    pub t_enter: f64,
    pub trace: IntervalSet,
    /// Trace length for every sampled direction.
    pub totals: Vec<f64>,
}

/// For each direction of the fan, measures `{t ∈ [0, 2r] : w + tμ ∈ B ∩ Ω ∩ E}`
/// and returns the direction with the largest measure (lowest index on ties).
pub fn best_ray_interval(
    ball: &Ball,
    set: &MeasurableSet,
    w: Point,
    n_dir: usize,
) -> Result<RayChoice> {
    let grid = set.grid();
    let domain = grid.domain();
    if !domain.contains(w) {
        return Err(Error::invalid("ray origin must lie in the domain"));
    }
    let rel = domain.displacement(ball.center, w);
    if super::norm(rel) > 2.0 * ball.radius {
        return Err(Error::invalid(
            "ray origin is farther than 2r from the ball center",
        ));
    }
    let fan = direction_fan(grid.dim(), n_dir);
    let mut best: Option<RayChoice> = None;
    let mut totals = Vec::with_capacity(fan.len());
    for (k, &dir) in fan.iter().enumerate() {
        let (t_in, t_out) = match sphere_interval(rel, dir, ball.radius) {
            Some((lo, hi)) => (
                lo.max(0.0),
                hi.min(2.0 * ball.radius).min(domain.exit_parameter(w, dir)),
            ),
            None => (0.0, 0.0),
        };
        let t_out = t_out.max(0.0);
        let trace = trace_range(set, w, dir, t_in, t_out);
        totals.push(trace.total());
        if best
            .as_ref()
            .is_none_or(|b| trace.total() > b.trace.total())
        {
            best = Some(RayChoice {
                direction_index: k,
                segment: Segment {
                    origin: w,
                    direction: dir,
                    t_max: t_out,
                },
                t_enter: t_in.min(t_out),
                trace,
                totals: Vec::new(),
            });
        }
    }
    let mut best = best.expect("direction fan is nonempty");
    if best.trace.total() <= 0.0 {
        return Err(Error::Resolution(
            "every sampled direction misses the set".into(),
        ));
    }
    best.totals = totals;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::{Domain, Grid};

    #[test]
    fn interval_set_validation_and_infimum() {
        assert!(IntervalSet::new(vec![(0.0, 1.0), (0.5, 2.0)]).is_err());
        assert!(IntervalSet::new(vec![(1.0, 0.0)]).is_err());
        let s = IntervalSet::new(vec![(0.0, 0.25), (0.75, 1.0)]).unwrap();
        assert_eq!(s.total(), 0.5);
        assert_eq!(s.infimum_from(0.25), Some(0.25));
        assert_eq!(s.infimum_from(0.3), Some(0.75));
        assert_eq!(s.infimum_from(1.5), None);
        assert_eq!(s.reflected(1.0).intervals(), &[(0.0, 0.25), (0.75, 1.0)]);
    }

    #[test]
    fn one_dimensional_ray() {
        let g = Arc::new(Grid::new(Domain::interval(1.0), &[1024]).unwrap());
        let e = MeasurableSet::from_predicate(g.clone(), |p| p[0] < 0.25);
        let ball = Ball {
            center: [0.25, 0.0],
            radius: 0.25,
        };
        let ray = best_ray_interval(&ball, &e, [0.0, 0.0], DEFAULT_DIRECTIONS).unwrap();
        assert_eq!(ray.direction_index, 0);
        assert!((ray.trace.total() - 0.25).abs() < 1e-12);
        assert!((ray.segment.t_max - 0.5).abs() < 1e-12);
    }

    #[test]
    fn full_ball_from_center() {
        let g = Arc::new(Grid::new(Domain::rect(1.0, 1.0), &[256]).unwrap());
        let ball = Ball {
            center: [0.5, 0.5],
            radius: 0.2,
        };
        let e = MeasurableSet::full(g);
        let ray = best_ray_interval(&ball, &e, ball.center, 64).unwrap();
        assert_eq!(ray.direction_index, 0);
        assert!((ray.trace.total() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn horizontal_strip_wins() {
        let g = Arc::new(Grid::new(Domain::rect(1.0, 1.0), &[512]).unwrap());
        let r = 0.2;
        let w = [0.5, 0.5];
        let e = MeasurableSet::from_predicate(g, |p| (p[1] - w[1]).abs() <= r / 8.0);
        let ray = best_ray_interval(
            &Ball {
                center: w,
                radius: r,
            },
            &e,
            w,
            64,
        )
        .unwrap();
        assert_eq!(ray.direction_index, 0);
        assert!(ray.trace.total() >= r - 1e-12);
        assert!(ray.totals.iter().all(|&t| t <= ray.trace.total()));
    }

    #[test]
    fn trace_through_two_cells() {
        let g = Arc::new(Grid::new(Domain::rect(1.0, 1.0), &[4]).unwrap());
        let mut mask = vec![false; 16];
        mask[g.index(1, 1)] = true;
        mask[g.index(3, 3)] = true;
        let e = MeasurableSet::new(g, mask).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let seg = Segment {
            origin: [0.0, 0.0],
            direction: [s, s],
            t_max: 2f64.sqrt(),
        };
        let tr = restrict_to_segment(&e, &seg);
        assert_eq!(tr.intervals().len(), 2);
        let chord = 0.25 * 2f64.sqrt();
        assert!((tr.total() - 2.0 * chord).abs() < 1e-12);
        assert!((tr.intervals()[0].0 - chord).abs() < 1e-12);
    }

    #[test]
    fn trace_wraps_on_torus() {
        let g = Arc::new(Grid::new(Domain::torus(&[1.0]), &[100]).unwrap());
        let e = MeasurableSet::from_predicate(g, |p| p[0] < 0.1);
        let seg = Segment {
            origin: [0.95, 0.0],
            direction: [1.0, 0.0],
            t_max: 0.1,
        };
        let tr = restrict_to_segment(&e, &seg);
        assert!((tr.total() - 0.05).abs() < 1e-12);
        assert!((tr.intervals()[0].0 - 0.05).abs() < 1e-12);
    }

    #[test]
    fn full_and_empty_sets() {
        let g = Arc::new(Grid::new(Domain::disk(1.0), &[128]).unwrap());
        let seg = Segment {
            origin: [0.3, 0.5],
            direction: [1.0, 0.0],
            t_max: 0.4,
        };
        let full = restrict_to_segment(&MeasurableSet::full(g.clone()), &seg);
        assert_eq!(full.intervals(), &[(0.0, 0.4)]);
        assert!(restrict_to_segment(&MeasurableSet::empty(g), &seg).is_empty());
    }
}
