use rayon::prelude::*;
use serde::Serialize;

use super::{Ball, Domain, DomainKind, Grid, MeasurableSet};
use crate::{Error, Result};

/// `(⌈diam·√d / r⌉ + 1)ᵈ`, an explicit bound on the number of radius-r balls needed to cover the domain.
/// On a torus `diam` is that of the fundamental cell, which the lattice
/// covers.
pub fn cover_count_bound(domain: &Domain, r: f64) -> usize {
    let d = domain.dim();
    let diam = match domain.kind() {
        DomainKind::Torus => (0..d).map(|a| domain.extent(a).powi(2)).sum::<f64>().sqrt(),
        _ => domain.diameter(),
    };
    let per_axis = (diam * (d as f64).sqrt() / r).ceil() as usize + 1;
    per_axis.pow(d as u32)
}

/// Balls of radius `r` whose union contains every interior cell center.
///
/// Centers sit on a lattice of spacing at most `r/√d`, so each lattice cube
/// has diagonal at most `r`. A lattice center that falls outside the domain
/// is replaced by the interior cell center of its cube nearest to it.
pub fn cover_domain(grid: &Grid, r: f64) -> Result<Vec<Ball>> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid(format!(
            "cover radius must be positive, got {r}"
        )));
    }
    let domain = grid.domain();
    let d = domain.dim();
    let side = r / (d as f64).sqrt();
    let mut m = [1usize, 1];
    let mut spacing = [1.0, 1.0];
    for a in 0..d {
        m[a] = ((domain.extent(a) / side).ceil() as usize).max(1);
        spacing[a] = domain.extent(a) / m[a] as f64;
    }

    // Nearest interior cell center per lattice cube, for centers that
    // would otherwise leave the domain.
    let mut fallback: Vec<Option<(f64, usize)>> = vec![None; m[0] * m[1]];
    let needs_fallback =
        (0..m[1]).any(|j| (0..m[0]).any(|i| !domain.contains(lattice_center(i, j, &spacing, d))));
    if needs_fallback {
        for idx in grid.interior_indices() {
            let p = grid.center(idx);
            let ci = ((p[0] / spacing[0]).floor() as usize).min(m[0] - 1);
            let cj = if d == 2 {
                ((p[1] / spacing[1]).floor() as usize).min(m[1] - 1)
            } else {
                0
            };
            let c = lattice_center(ci, cj, &spacing, d);
            let dist = domain.distance(c, p);
            let slot = &mut fallback[cj * m[0] + ci];
            if slot.is_none_or(|(best, _)| dist < best) {
                *slot = Some((dist, idx));
            }
        }
    }

    let mut balls = Vec::with_capacity(m[0] * m[1]);
    for j in 0..m[1] {
        for i in 0..m[0] {
            let c = lattice_center(i, j, &spacing, d);
            if domain.contains(c) {
                balls.push(Ball {
                    center: c,
                    radius: r,
                });
            } else if let Some((_, idx)) = fallback[j * m[0] + i] {
                balls.push(Ball {
                    center: grid.center(idx),
                    radius: r,
                });
            }
        }
    }
    Ok(balls)
}

fn lattice_center(i: usize, j: usize, spacing: &[f64; 2], d: usize) -> [f64; 2] {
    let x = (i as f64 + 0.5) * spacing[0];
    let y = if d == 2 {
        (j as f64 + 0.5) * spacing[1]
    } else {
        0.0
    };
    [x, y]
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DensestBall {
    pub index: usize,
    pub ball: Ball,
    /// Set cells with center in the ball.
    pub count: usize,
    /// `count` times the cell measure.
    pub measure: f64,
}

/// The cover ball with the largest intersection with `set` (lowest index on
/// ties). When the cover covers every interior cell, `count · |cover| ≥
/// set.count()` holds exactly.
pub fn densest_ball(set: &MeasurableSet, cover: &[Ball]) -> Result<DensestBall> {
    if set.count() == 0 {
        return Err(Error::EmptyRegion("densest ball of an empty set".into()));
    }
    if cover.is_empty() {
        return Err(Error::invalid("empty cover"));
    }
    let counts: Vec<usize> = cover.par_iter().map(|b| set.count_in_ball(b)).collect();
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Ok(DensestBall {
        index: best,
        ball: cover[best],
        count: counts[best],
        measure: counts[best] as f64 * set.grid().cell_measure(),
    })
}
