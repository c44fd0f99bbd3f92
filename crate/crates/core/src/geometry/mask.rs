use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Ball, Grid, Point};
use crate::{Error, Result};

/// Name and version of the generator behind [`MeasurableSet::random`].
pub const RNG_NAME: &str = "ChaCha8 (rand_chacha 0.3), seed_from_u64";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskStyle {
    /// Union of random balls, added until the target measure is reached.
    Blobs,
    /// Each cell kept independently with probability equal to the target fraction.
    Bernoulli,
}

/// A set `E` represented as a union of grid cells.
///
/// Measures are exact cell counts times the cell measure. Exterior cells are
/// never part of a set.
#[derive(Clone, Debug)]
pub struct MeasurableSet {
    grid: Arc<Grid>,
    mask: Vec<bool>,
    count: usize,
}

impl MeasurableSet {
    pub fn new(grid: Arc<Grid>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::invalid(format!(
                "mask has {} cells, grid has {}",
                mask.len(),
                grid.len()
            )));
        }
        if let Some(idx) = (0..mask.len()).find(|&i| mask[i] && !grid.is_interior(i)) {
            return Err(Error::invalid(format!("mask marks exterior cell {idx}")));
        }
        let count = mask.iter().filter(|&&b| b).count();
        Ok(MeasurableSet { grid, mask, count })
    }

    pub fn full(grid: Arc<Grid>) -> Self {
        let mask = (0..grid.len()).map(|i| grid.is_interior(i)).collect();
        MeasurableSet::new(grid, mask).expect("interior mask is valid")
    }

    pub fn empty(grid: Arc<Grid>) -> Self {
        let mask = vec![false; grid.len()];
        MeasurableSet::new(grid, mask).expect("empty mask is valid")
    }

    /// Interior cells whose center satisfies `pred`.
    pub fn from_predicate(grid: Arc<Grid>, pred: impl Fn(Point) -> bool) -> Self {
        let mask = (0..grid.len())
            .map(|i| grid.is_interior(i) && pred(grid.center(i)))
            .collect();
        MeasurableSet::new(grid, mask).expect("predicate mask is valid")
    }

    /// Axis-aligned box `[lo, hi]` (cell centers inside).
    pub fn boxed(grid: Arc<Grid>, lo: Point, hi: Point) -> Self {
        let dim = grid.dim();
        MeasurableSet::from_predicate(grid, move |p| {
            (0..dim).all(|a| p[a] >= lo[a] && p[a] <= hi[a])
        })
    }

    /// Cells whose center lies in the given ball (domain metric).
    pub fn ball(grid: Arc<Grid>, ball: Ball) -> Self {
        let mut mask = vec![false; grid.len()];
        for idx in grid.cells_in_ball(&ball) {
            mask[idx] = true;
        }
        MeasurableSet::new(grid, mask).expect("ball mask is valid")
    }

    /// Random set with measure close to `fraction · |Ω|`, reproducible from
    /// `seed`. For a fixed seed and style, sets with smaller fractions are
    /// subsets of sets with larger ones.
    pub fn random(grid: Arc<Grid>, fraction: f64, seed: u64, style: MaskStyle) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "target fraction must lie in (0, 1], got {fraction}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask = vec![false; grid.len()];
        match style {
            MaskStyle::Bernoulli => {
                for (idx, m) in mask.iter_mut().enumerate() {
                    let u: f64 = rng.gen();
                    *m = grid.is_interior(idx) && u < fraction;
                }
            }
            MaskStyle::Blobs => {
                let target = ((fraction * grid.interior_count() as f64).round() as usize).max(1);
                let domain = *grid.domain();
                let scale = (0..grid.dim())
                    .map(|a| domain.extent(a))
                    .fold(f64::INFINITY, f64::min);
                let mut count = 0;
                let mut attempts = 0usize;
                while count < target {
                    attempts += 1;
                    if attempts > 1_000_000 {
                        return Err(Error::Resolution(
                            "random blob generation did not reach the target".into(),
                        ));
                    }
                    let mut c = [0.0, 0.0];
                    for (a, ca) in c.iter_mut().enumerate().take(grid.dim()) {
                        *ca = rng.gen::<f64>() * domain.extent(a);
                    }
                    let radius = scale * rng.gen_range(0.01..0.06);
                    if !domain.contains(c) {
                        continue;
                    }
                    let ball = Ball { center: c, radius };
                    for idx in grid.cells_in_ball(&ball) {
                        if count < target && !mask[idx] {
                            mask[idx] = true;
                            count += 1;
                        }
                    }
                }
            }
        }
        MeasurableSet::new(grid, mask)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn contains_cell(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    /// Whether `p` lies in a cell of the set.
    pub fn contains_point(&self, p: Point) -> bool {
        self.grid.cell_of(p).is_some_and(|i| self.mask[i])
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.mask.len()).filter(move |&i| self.mask[i])
    }

    /// Count of set cells times the cell measure.
    pub fn measure(&self) -> f64 {
        self.count as f64 * self.grid.cell_measure()
    }

    /// Number of set cells whose center lies in `ball`.
    pub fn count_in_ball(&self, ball: &Ball) -> usize {
        let mut count = 0;
        self.grid
            .for_each_in_ball(ball, |i| count += self.mask[i] as usize);
        count
    }

    pub fn is_subset_of(&self, other: &MeasurableSet) -> bool {
        self.mask.len() == other.mask.len()
            && self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }

    /// Plain-text raster in the PBM `P1` layout: a comment line carrying the
    /// cell size, then `nx ny`, then one line of `0`/`1` per grid row with
    /// row `j = 0` (smallest second coordinate) first.
    pub fn to_raster(&self) -> String {
        let g = &self.grid;
        let (nx, ny) = (g.cells(0), g.cells(1));
        let mut out = String::with_capacity(self.mask.len() * 2 + 64);
        out.push_str("P1\n");
        let _ = writeln!(
            out,
            "# cell_size {} {}",
            g.cell_size(0),
            if g.dim() == 2 { g.cell_size(1) } else { 0.0 }
        );
        let _ = writeln!(out, "{nx} {ny}");
        for j in 0..ny {
            let row: Vec<&str> = (0..nx)
                .map(|i| if self.mask[g.index(i, j)] { "1" } else { "0" })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses [`MeasurableSet::to_raster`] output against `grid`.
    pub fn from_raster(grid: Arc<Grid>, text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut cell_size = None;
        for line in text.lines() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                let parts: Vec<&str> = comment.split_whitespace().collect();
                if parts.first() == Some(&"cell_size") && parts.len() >= 2 {
                    let hx: f64 = parts[1]
                        .parse()
                        .map_err(|_| Error::Raster("bad cell_size".into()))?;
                    cell_size = Some(hx);
                }
                continue;
            }
            tokens.extend(line.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        if it.next().as_deref() != Some("P1") {
            return Err(Error::Raster("missing P1 magic".into()));
        }
        let mut dim = || -> Result<usize> {
            it.next()
                .ok_or_else(|| Error::Raster("truncated header".into()))?
                .parse()
                .map_err(|_| Error::Raster("bad dimensions".into()))
        };
        let (nx, ny) = (dim()?, dim()?);
        if nx != grid.cells(0) || ny != grid.cells(1) {
            return Err(Error::Raster(format!(
                "raster is {nx}x{ny}, grid is {}x{}",
                grid.cells(0),
                grid.cells(1)
            )));
        }
        if let Some(hx) = cell_size {
            if (hx - grid.cell_size(0)).abs() > 1e-9 * grid.cell_size(0) {
                return Err(Error::Raster(format!(
                    "cell size {hx} does not match grid {}",
                    grid.cell_size(0)
                )));
            }
        }
        let mut mask = Vec::with_capacity(nx * ny);
        for tok in it {
            // P1 allows digits without separators.
            for ch in tok.chars() {
                match ch {
                    '0' => mask.push(false),
                    '1' => mask.push(true),
                    _ => return Err(Error::Raster(format!("unexpected symbol {ch:?}"))),
                }
            }
        }
        if mask.len() != nx * ny {
            return Err(Error::Raster(format!(
                "expected {} cells, found {}",
                nx * ny,
                mask.len()
            )));
        }
        MeasurableSet::new(grid, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    fn unit_square(n: usize) -> Arc<Grid> {
        Arc::new(Grid::new(Domain::rect(1.0, 1.0), &[n]).unwrap())
    }

    #[test]
    fn measure_examples() {
        let g = unit_square(64);
        assert_eq!(MeasurableSet::full(g.clone()).measure(), 1.0);
        assert_eq!(MeasurableSet::empty(g).measure(), 0.0);
        for n in [2usize, 10, 1024] {
            let g = Arc::new(Grid::new(Domain::interval(1.0), &[n]).unwrap());
            let half = MeasurableSet::from_predicate(g, |p| p[0] < 0.5);
            assert_eq!(half.measure(), 0.5);
        }
    }

    #[test]
    fn rejects_exterior_cells() {
        let g = Arc::new(Grid::new(Domain::disk(1.0), &[16]).unwrap());
        let mut mask = vec![false; g.len()];
        mask[0] = true;
        assert!(MeasurableSet::new(g.clone(), mask).is_err());
        assert!(
            MeasurableSet::full(g.clone()).measure()
                <= g.domain().volume() + 4.0 * g.cell_measure() * 16.0
        );
    }

    #[test]
    fn random_sets_are_nested_and_near_target() {
        let g = unit_square(128);
        for style in [MaskStyle::Blobs, MaskStyle::Bernoulli] {
            let big = MeasurableSet::random(g.clone(), 0.3, 7, style).unwrap();
            let small = MeasurableSet::random(g.clone(), 0.05, 7, style).unwrap();
            assert!(small.is_subset_of(&big));
            assert!(
                (big.measure() - 0.3).abs() < 0.03,
                "{style:?} {}",
                big.measure()
            );
        }
        let a = MeasurableSet::random(g.clone(), 0.1, 3, MaskStyle::Blobs).unwrap();
        let b = MeasurableSet::random(g, 0.1, 3, MaskStyle::Blobs).unwrap();
        assert_eq!(a.mask(), b.mask());
    }

    #[test]
    fn raster_round_trip_and_errors() {
        let g = unit_square(8);
        let set = MeasurableSet::boxed(g.clone(), [0.0, 0.0], [0.5, 0.25]);
        let text = set.to_raster();
        assert!(text.starts_with("P1\n# cell_size 0.125 0.125\n8 8\n"));
        let back = MeasurableSet::from_raster(g.clone(), &text).unwrap();
        assert_eq!(back.mask(), set.mask());
        assert!(MeasurableSet::from_raster(g.clone(), "P2\n8 8\n").is_err());
        assert!(MeasurableSet::from_raster(g.clone(), "P1\n4 4\n").is_err());
        assert!(MeasurableSet::from_raster(g, "P1\n8 8\n0 1\n").is_err());
    }
}
