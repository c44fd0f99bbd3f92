//! Domains, grids, balls and the geometric constructions of the
//! observability argument: covers, pigeonhole ball selection, chains of
//! balls and one-dimensional traces of a set along rays.

mod chain;
mod cover;
mod mask;
mod ray;

pub use chain::{chain_of_balls, Chain};
pub use cover::{cover_domain, densest_ball, cover_count_bound, DensestBall};
pub use mask::{MaskStyle, MeasurableSet, RNG_NAME};
pub use ray::{
    best_ray_interval, direction_fan, restrict_to_segment, IntervalSet, RayChoice, Segment,
    DEFAULT_DIRECTIONS,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point in the plane. One-dimensional domains use the first coordinate
/// and keep the second at zero.
pub type Point = [f64; 2];

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn add_scaled(a: Point, dir: Point, t: f64) -> Point {
    [a[0] + t * dir[0], a[1] + t * dir[1]]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    /// Interval or axis-aligned rectangle `[0, L₁] × [0, L₂]`.
    Box,
    /// Disk of the given diameter inscribed in `[0, D]²`.
    Disk,
    /// Flat torus `ℝᵈ / (L₁ℤ × L₂ℤ)`.
    Torus,
}

/// The ambient region. Boxes and disks are convex and tori have no
/// boundary, so the part of any ray that stays in a ball and in the domain
/// is a single interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
    extent: [f64; 2],
}

impl Domain {
    pub fn new(kind: DomainKind, extent: &[f64]) -> Result<Self> {
        let dim = extent.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::invalid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if extent.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::invalid("domain extents must be positive and finite"));
        }
        match kind {
            DomainKind::Disk => {
                if dim == 1 {
                    // A one-dimensional disk is an interval; callers should say so.
                    return Err(Error::invalid(
                        "disk domains are two-dimensional; use a box in d = 1",
                    ));
                }
                if extent.len() == 2 && extent[0] != extent[1] {
                    return Err(Error::invalid("disk extent is its diameter on both axes"));
                }
                Ok(Domain {
                    kind,
                    dim: 2,
                    extent: [extent[0], extent[0]],
                })
            }
            _ => {
                let mut e = [1.0, 1.0];
                e[..dim].copy_from_slice(extent);
                Ok(Domain {
                    kind,
                    dim,
                    extent: e,
                })
            }
        }
    }

    pub fn interval(length: f64) -> Self {
        Domain::new(DomainKind::Box, &[length]).expect("valid interval")
    }

    pub fn rect(width: f64, height: f64) -> Self {
        Domain::new(DomainKind::Box, &[width, height]).expect("valid rectangle")
    }

    pub fn disk(diameter: f64) -> Self {
        Domain::new(DomainKind::Disk, &[diameter, diameter]).expect("valid disk")
    }

    pub fn torus(extent: &[f64]) -> Self {
        Domain::new(DomainKind::Torus, extent).expect("valid torus")
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    fn disk_center_radius(&self) -> (Point, f64) {
        let r = self.extent[0] / 2.0;
        ([r, r], r)
    }

    /// Exact diameter; for tori this is in the periodic metric.
    pub fn diameter(&self) -> f64 {
        let axes = &self.extent[..self.dim];
        match self.kind {
            DomainKind::Box => axes.iter().map(|l| l * l).sum::<f64>().sqrt(),
            DomainKind::Disk => self.extent[0],
            DomainKind::Torus => axes.iter().map(|l| l * l / 4.0).sum::<f64>().sqrt(),
        }
    }

    /// Lebesgue measure of the domain.
    pub fn volume(&self) -> f64 {
        match self.kind {
            DomainKind::Disk => std::f64::consts::PI * self.extent[0] * self.extent[0] / 4.0,
            _ => self.extent[..self.dim].iter().product(),
        }
    }

    /// Closed-domain membership; every point belongs to a torus.
    pub fn contains(&self, p: Point) -> bool {
        match self.kind {
            DomainKind::Torus => true,
            DomainKind::Box => (0..self.dim).all(|a| p[a] >= 0.0 && p[a] <= self.extent[a]),
            DomainKind::Disk => {
                let (c, r) = self.disk_center_radius();
                norm(sub(p, c)) <= r
            }
        }
    }

    /// Representative of `p` in the fundamental cell (identity off the torus).
    pub fn wrap(&self, p: Point) -> Point {
        if self.kind != DomainKind::Torus {
            return p;
        }
        let mut q = p;
        for (a, qa) in q.iter_mut().enumerate().take(self.dim) {
            *qa = qa.rem_euclid(self.extent[a]);
        }
        q
    }

    /// `to − from`, taking the minimal image on a torus.
    pub fn displacement(&self, from: Point, to: Point) -> Point {
        let mut d = sub(to, from);
        if self.dim == 1 {
            d[1] = 0.0;
        }
        if self.kind == DomainKind::Torus {
            for (a, da) in d.iter_mut().enumerate().take(self.dim) {
                let l = self.extent[a];
                *da -= l * (*da / l).round();
            }
        }
        d
    }

    pub fn distance(&self, a: Point, b: Point) -> f64 {
        norm(self.displacement(a, b))
    }

    /// Largest `t ≥ 0` with `w + sμ` in the closed domain for every
    /// `s ∈ [0, t]`, for `w` in the domain. Infinite on a torus.
    pub fn exit_parameter(&self, w: Point, dir: Point) -> f64 {
        match self.kind {
            DomainKind::Torus => f64::INFINITY,
            DomainKind::Box => {
                let mut t = f64::INFINITY;
                for a in 0..self.dim {
                    if dir[a] > 0.0 {
                        t = t.min((self.extent[a] - w[a]) / dir[a]);
                    } else if dir[a] < 0.0 {
                        t = t.min(-w[a] / dir[a]);
                    }
                }
                t.max(0.0)
            }
            DomainKind::Disk => {
                let (c, r) = self.disk_center_radius();
                sphere_exit(sub(w, c), dir, r).unwrap_or(0.0).max(0.0)
            }
        }
    }
}

/// For a ray `p + tμ` (with `p` relative to the sphere center, `|μ| = 1`),
/// the parameter range inside the closed ball of radius `r`, if any.
pub(crate) fn sphere_interval(p: Point, dir: Point, r: f64) -> Option<(f64, f64)> {
    let b = dot(p, dir);
    let c = dot(p, p) - r * r;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

fn sphere_exit(p: Point, dir: Point, r: f64) -> Option<f64> {
    sphere_interval(p, dir, r).map(|(_, hi)| hi)
}

/// A closed ball in the domain metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Ball { center, radius })
    }
}

/// Default resolution: 1024 cells in d = 1, 512 per axis in d = 2.
pub fn default_cells(dim: usize) -> usize {
    if dim == 1 {
        1024
    } else {
        512
    }
}

/// Uniform cell discretization of a domain. Samples live at cell centers;
/// cells whose center lies outside the domain are flagged exterior and never
/// count toward any measure.
#[derive(Clone, Debug)]
pub struct Grid {
    domain: Domain,
    cells: [usize; 2],
    h: [f64; 2],
    interior: Vec<bool>,
    interior_count: usize,
}

impl Grid {
    pub fn new(domain: Domain, cells: &[usize]) -> Result<Self> {
        let dim = domain.dim();
        let cells: Vec<usize> = match cells.len() {
            1 => vec![cells[0]; dim],
            n if n == dim => cells.to_vec(),
            n => {
                return Err(Error::invalid(format!(
                    "{n} cell counts for a {dim}-dimensional domain"
                )))
            }
        };
        if cells.contains(&0) {
            return Err(Error::invalid("cell counts must be positive"));
        }
        let mut c = [1usize, 1];
        let mut h = [1.0, 1.0];
        for a in 0..dim {
            c[a] = cells[a];
            h[a] = domain.extent(a) / cells[a] as f64;
        }
        let mut grid = Grid {
            domain,
            cells: c,
            h,
            interior: Vec::new(),
            interior_count: 0,
        };
        grid.interior = (0..grid.len())
            .map(|idx| domain.contains(grid.center(idx)))
            .collect();
        grid.interior_count = grid.interior.iter().filter(|&&b| b).count();
        if grid.interior_count == 0 {
            return Err(Error::Resolution(
                "no cell center lies inside the domain".into(),
            ));
        }
        Ok(grid)
    }

    pub fn with_default_resolution(domain: Domain) -> Self {
        Grid::new(domain, &[default_cells(domain.dim())]).expect("default grid is valid")
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn cell_size(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    /// Largest cell side.
    pub fn max_cell_size(&self) -> f64 {
        self.h[..self.dim()].iter().copied().fold(0.0, f64::max)
    }

    /// Measure of one cell, `Π hₐ`.
    pub fn cell_measure(&self) -> f64 {
        self.h[..self.dim()].iter().product()
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.cells[0] + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.cells[0], idx / self.cells[0])
    }

    pub fn center(&self, idx: usize) -> Point {
        let (i, j) = self.coords(idx);
        let x = (i as f64 + 0.5) * self.h[0];
        let y = if self.dim() == 2 {
            (j as f64 + 0.5) * self.h[1]
        } else {
            0.0
        };
        [x, y]
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        self.interior[idx]
    }

    pub fn interior_count(&self) -> usize {
        self.interior_count
    }

    pub fn interior_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.interior[i])
    }

    /// Cell containing `p`, if `p` lies in the gridded region.
    pub fn cell_of(&self, p: Point) -> Option<usize> {
        let p = self.domain.wrap(p);
        let mut ij = [0usize, 0];
        #[allow(clippy::needless_range_loop)]
        for a in 0..self.dim() {
            let n = self.cells[a];
            let x = p[a] / self.h[a];
            if x.is_nan() || x < 0.0 || x > n as f64 {
                return None;
            }
            ij[a] = (x.floor() as usize).min(n - 1);
        }
        Some(self.index(ij[0], ij[1]))
    }

    /// Integer coordinate of the cell holding coordinate `x` on `axis`,
    /// without wrapping or clamping.
    pub(crate) fn axis_cell(&self, axis: usize, x: f64) -> i64 {
        (x / self.h[axis]).floor() as i64
    }

    /// Maps an unbounded integer cell coordinate pair to a flat index:
    /// periodic on a torus, `None` outside the grid otherwise.
    pub(crate) fn resolve(&self, ij: [i64; 2]) -> Option<usize> {
        let mut out = [0usize; 2];
        for a in 0..2 {
            let n = self.cells[a] as i64;
            let v = if a >= self.dim() {
                0
            } else if self.domain.kind() == DomainKind::Torus {
                ij[a].rem_euclid(n)
            } else if (0..n).contains(&ij[a]) {
                ij[a]
            } else {
                return None;
            };
            out[a] = v as usize;
        }
        Some(self.index(out[0], out[1]))
    }

    /// Interior cells whose center lies in the closed ball, in ascending
    /// index order.
    pub fn cells_in_ball(&self, ball: &Ball) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in_ball(ball, |idx| out.push(idx));
        out
    }

    /// Visits the interior cells of [`Grid::cells_in_ball`] in ascending
    /// index order.
    pub fn for_each_in_ball(&self, ball: &Ball, mut visit: impl FnMut(usize)) {
        let mut ranges: [Vec<usize>; 2] = [vec![0], vec![0]];
        #[allow(clippy::needless_range_loop)]
        for a in 0..self.dim() {
            let n = self.cells[a] as i64;
            let c = self.axis_cell(a, ball.center[a]);
            let span = (ball.radius / self.h[a]).ceil() as i64 + 1;
            ranges[a] = if self.domain.kind() == DomainKind::Torus {
                if 2 * span + 1 >= n {
                    (0..n as usize).collect()
                } else {
                    let mut v: Vec<usize> = (c - span..=c + span)
                        .map(|k| k.rem_euclid(n) as usize)
                        .collect();
                    v.sort_unstable();
                    v
                }
            } else {
                let lo = (c - span).max(0);
                let hi = (c + span).min(n - 1);
                if lo > hi {
                    Vec::new()
                } else {
                    (lo as usize..=hi as usize).collect()
                }
            };
        }
        for &j in &ranges[1] {
            for &i in &ranges[0] {
                let idx = self.index(i, j);
                if self.interior[idx]
                    && self.domain.distance(ball.center, self.center(idx)) <= ball.radius
                {
                    visit(idx);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diameters_and_volumes() {
        assert!((Domain::rect(1.0, 1.0).diameter() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(Domain::interval(2.0).diameter(), 2.0);
        assert_eq!(Domain::disk(2.0).diameter(), 2.0);
        assert!((Domain::torus(&[1.0, 1.0]).diameter() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(Domain::torus(&[1.0]).diameter(), 0.5);
        assert!((Domain::disk(2.0).volume() - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(Domain::new(DomainKind::Box, &[]).is_err());
        assert!(Domain::new(DomainKind::Box, &[1.0, 1.0, 1.0]).is_err());
        assert!(Domain::new(DomainKind::Box, &[0.0]).is_err());
        assert!(Domain::new(DomainKind::Disk, &[1.0]).is_err());
    }

    #[test]
    fn torus_metric_is_periodic() {
        let t = Domain::torus(&[1.0]);
        assert!((t.distance([0.05, 0.0], [0.95, 0.0]) - 0.1).abs() < 1e-12);
        let d = t.displacement([0.95, 0.0], [0.05, 0.0]);
        assert!((d[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn exit_parameters() {
        let b = Domain::rect(1.0, 1.0);
        assert!((b.exit_parameter([0.25, 0.5], [1.0, 0.0]) - 0.75).abs() < 1e-15);
        assert!((b.exit_parameter([0.25, 0.5], [-1.0, 0.0]) - 0.25).abs() < 1e-15);
        let d = Domain::disk(2.0);
        assert!((d.exit_parameter([1.0, 1.0], [0.0, 1.0]) - 1.0).abs() < 1e-15);
        assert!(Domain::torus(&[1.0])
            .exit_parameter([0.3, 0.0], [1.0, 0.0])
            .is_infinite());
    }

    #[test]
    fn grid_cells_and_interior() {
        let g = Grid::new(Domain::interval(1.0), &[4]).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.center(1), [0.375, 0.0]);
        assert_eq!(g.cell_of([1.0, 0.0]), Some(3));
        assert_eq!(g.cell_of([1.5, 0.0]), None);
        let d = Grid::new(Domain::disk(1.0), &[64]).unwrap();
        assert!(d.interior_count() < d.len());
        assert!(!d.is_interior(0));
        let t = Grid::new(Domain::torus(&[1.0]), &[4]).unwrap();
        assert_eq!(t.cell_of([1.1, 0.0]), Some(0));
    }

    #[test]
    fn ball_cells_wrap_on_torus() {
        let t = Grid::new(Domain::torus(&[1.0]), &[100]).unwrap();
        let cells = t.cells_in_ball(&Ball::new([0.0, 0.0], 0.05).unwrap());
        assert_eq!(cells.len(), 10);
        assert!(cells.contains(&0) && cells.contains(&99));
        let all = t.cells_in_ball(&Ball::new([0.3, 0.0], 0.6).unwrap());
        assert_eq!(all.len(), 100);
    }
}
