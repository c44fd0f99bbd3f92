use std::collections::VecDeque;

use serde::Serialize;

use super::{add_scaled, norm, sphere_interval, sub, Grid, Point};
use crate::{Error, Result};

/// Overlapping chain of balls joining two points.
#[derive(Clone, Debug, Serialize)]
pub struct Chain {
    /// `c₀ = from, …, c_K = to`, consecutive centers at distance ≤ r/2.
    pub centers: Vec<Point>,
    pub radius: f64,
}

impl Chain {
    /// Number of links `K`.
    pub fn steps(&self) -> usize {
        self.centers.len() - 1
    }

    /// `K · r`, so that `K ≤ chain_constant / r`.
    pub fn chain_constant(&self) -> f64 {
        self.steps() as f64 * self.radius
    }
}

/// Joins `from` to `to` by centers at most `r/2` apart, all inside the domain.
///
/// A breadth-first search over interior cells (8-neighborhood in the plane,
/// periodic on a torus) gives a path of cell centers; the chain walks along
/// that polyline and places the next center where the polyline leaves the
/// closed ball of radius `r/2` around the current one.
pub fn chain_of_balls(grid: &Grid, from: Point, to: Point, r: f64) -> Result<Chain> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!(
            "chain radius must be positive, got {r}"
        )));
    }
    let domain = grid.domain();
    if !domain.contains(from) || !domain.contains(to) {
        return Err(Error::invalid("chain endpoints must lie in the domain"));
    }
    let step = r / 2.0;
    if domain.distance(from, to) == 0.0 {
        return Ok(Chain {
            centers: vec![from],
            radius: r,
        });
    }
    let link = grid.max_cell_size() * if grid.dim() == 2 { 2f64.sqrt() } else { 1.0 };
    if link >= step {
        return Err(Error::Resolution(format!(
            "grid step {link:.3e} is not below the chain step {step:.3e}"
        )));
    }
    let start = grid
        .cell_of(from)
        .ok_or_else(|| Error::invalid("chain start is off the grid"))?;
    let goal = grid
        .cell_of(to)
        .ok_or_else(|| Error::invalid("chain end is off the grid"))?;
    let path = bfs_path(
        grid,
        nearest_interior(grid, start, from)?,
        nearest_interior(grid, goal, to)?,
    )?;

    // Polyline in unwrapped coordinates so that periodic paths stay continuous.
    let mut poly = Vec::with_capacity(path.len() + 2);
    poly.push(from);
    for &idx in &path {
        let last = *poly.last().unwrap();
        let d = domain.displacement(last, grid.center(idx));
        poly.push([last[0] + d[0], last[1] + d[1]]);
    }
    let last = *poly.last().unwrap();
    let d = domain.displacement(last, to);
    poly.push([last[0] + d[0], last[1] + d[1]]);

    let mut centers = vec![from];
    let mut current = from;
    let mut seg = 0usize;
    let mut u = 0.0f64;
    let end = *poly.last().unwrap();
    // The relative slack keeps floating-point noise from adding a link.
    while norm(sub(end, current)) > step * (1.0 + 1e-12) {
        // Walk forward until the polyline leaves the ball around `current`.
        let mut next = None;
        while seg + 1 < poly.len() {
            let a = poly[seg];
            let b = poly[seg + 1];
            let ab = sub(b, a);
            let len = norm(ab);
            if len == 0.0 {
                seg += 1;
                u = 0.0;
                continue;
            }
            let dir = [ab[0] / len, ab[1] / len];
            let hi = sphere_interval(sub(a, current), dir, step)
                .map(|(_, hi)| hi / len)
                .unwrap_or(u);
            if hi >= 1.0 {
                seg += 1;
                u = 0.0;
                continue;
            }
            let exit = hi.max(u);
            next = Some(add_scaled(a, dir, exit * len));
            u = exit;
            break;
        }
        let Some(p) = next else { break };
        if norm(sub(p, current)) < 1e-12 * step {
            return Err(Error::Resolution("chain made no progress".into()));
        }
        current = p;
        centers.push(p);
    }
    if norm(sub(end, current)) > 0.0 {
        centers.push(end);
    }
    let centers = centers.into_iter().map(|p| domain.wrap(p)).collect();
    Ok(Chain { centers, radius: r })
}

fn nearest_interior(grid: &Grid, idx: usize, p: Point) -> Result<usize> {
    if grid.is_interior(idx) {
        return Ok(idx);
    }
    grid.interior_indices()
        .map(|i| (grid.domain().distance(grid.center(i), p), i))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, i)| i)
        .ok_or_else(|| Error::Resolution("no interior cells".into()))
}

fn bfs_path(grid: &Grid, start: usize, goal: usize) -> Result<Vec<usize>> {
    let mut parent = vec![usize::MAX; grid.len()];
    parent[start] = start;
    let mut queue = VecDeque::from([start]);
    let offsets: &[[i64; 2]] = if grid.dim() == 1 {
        &[[-1, 0], [1, 0]]
    } else {
        &[
            [-1, 0],
            [1, 0],
            [0, -1],
            [0, 1],
            [-1, -1],
            [1, -1],
            [-1, 1],
            [1, 1],
        ]
    };
    while let Some(cur) = queue.pop_front() {
        if cur == goal {
            break;
        }
        let (i, j) = grid.coords(cur);
        for off in offsets {
            let Some(nb) = grid.resolve([i as i64 + off[0], j as i64 + off[1]]) else {
                continue;
            };
            if grid.is_interior(nb) && parent[nb] == usize::MAX {
                parent[nb] = cur;
                queue.push_back(nb);
            }
        }
    }
    if parent[goal] == usize::MAX {
        return Err(Error::Resolution(
            "grid graph does not connect the chain endpoints".into(),
        ));
    }
    let mut path = vec![goal];
    let mut cur = goal;
    while cur != start {
        cur = parent[cur];
        path.push(cur);
    }
    path.reverse();
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    fn check_links(grid: &Grid, chain: &Chain) {
        for w in chain.centers.windows(2) {
            assert!(grid.domain().distance(w[0], w[1]) <= chain.radius / 2.0 + 1e-12);
        }
        assert!(chain.centers.iter().all(|&c| grid.domain().contains(c)));
    }

    #[test]
    fn degenerate_chain() {
        let g = Grid::new(Domain::interval(1.0), &[64]).unwrap();
        let c = chain_of_balls(&g, [0.3, 0.0], [0.3, 0.0], 0.5).unwrap();
        assert_eq!(c.steps(), 0);
    }

    #[test]
    fn unit_interval_end_to_end() {
        let g = Grid::new(Domain::interval(1.0), &[1024]).unwrap();
        let c = chain_of_balls(&g, [0.0, 0.0], [1.0, 0.0], 0.5).unwrap();
        assert_eq!(c.steps(), 4);
        check_links(&g, &c);
        assert_eq!(c.centers[4], [1.0, 0.0]);
    }

    #[test]
    fn unit_square_corner_to_corner() {
        let g = Grid::new(Domain::rect(1.0, 1.0), &[128]).unwrap();
        let c = chain_of_balls(&g, [0.0, 0.0], [1.0, 1.0], 0.5).unwrap();
        assert!(c.steps() <= 6, "K = {}", c.steps());
        check_links(&g, &c);
        assert!(c.steps() as f64 * 0.25 >= 2f64.sqrt());
    }

    #[test]
    fn torus_takes_the_short_way() {
        let g = Grid::new(Domain::torus(&[1.0]), &[512]).unwrap();
        let c = chain_of_balls(&g, [0.05, 0.0], [0.95, 0.0], 0.2).unwrap();
        assert_eq!(c.steps(), 1);
        check_links(&g, &c);
    }

    #[test]
    fn disk_chain_stays_inside() {
        let g = Grid::new(Domain::disk(1.0), &[128]).unwrap();
        let c = chain_of_balls(&g, [0.1, 0.5], [0.9, 0.5], 0.1).unwrap();
        check_links(&g, &c);
        assert!(c.steps() >= 16);
    }

    #[test]
    fn coarse_grid_is_a_resolution_error() {
        let g = Grid::new(Domain::interval(1.0), &[4]).unwrap();
        assert!(matches!(
            chain_of_balls(&g, [0.0, 0.0], [1.0, 0.0], 0.2),
            Err(Error::Resolution(_))
        ));
    }
}
