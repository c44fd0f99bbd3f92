//! Test functions with exact directional derivatives, grid sampling, and
//! checks of the hypotheses the certifier relies on.

mod hypotheses;
mod model;

pub use hypotheses::{
    doubling_centers, doubling_radii, estimate_doubling, estimate_ucp, verify_doubling,
    verify_gevrey, verify_ucp, DoublingCertificate, DoublingReport, DoublingSample,
    GevreyCertificate, GevreyOptions, GevreyReport, GevreyWitness, UcpCertificate, UcpReport,
    UcpSample, DEFAULT_KMAX,
};
pub use model::{Envelope, FunctionModel, Monomial, TrigTerm};

use rayon::prelude::*;
use serde::Serialize;

use crate::geometry::{Ball, Grid, MeasurableSet, Point};
use crate::{Error, Result};

/// A smooth scalar function with exact directional derivatives.
pub trait Field: Sync {
    fn value(&self, p: Point) -> f64;

    /// Derivatives of `t ↦ f(p + t·dir)` at `t = 0` of orders `0..=max_order`.
    fn directional_series(&self, p: Point, dir: Point, max_order: usize) -> Vec<f64>;

    fn directional(&self, p: Point, dir: Point, order: usize) -> f64 {
        self.directional_series(p, dir, order)[order]
    }
}

/// A region over which a grid sup is taken.
#[derive(Clone, Copy, Debug)]
pub enum Region<'a> {
    Domain,
    Ball(Ball),
    Set(&'a MeasurableSet),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SupNorm {
    pub value: f64,
    pub argmax: Point,
    pub cell: usize,
}

/// Values of a function at every cell center of a grid.
#[derive(Clone, Debug)]
pub struct GridSamples {
    values: Vec<f64>,
}

impl GridSamples {
    pub fn new(f: &dyn Field, grid: &Grid) -> Self {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|idx| f.value(grid.center(idx)))
            .collect();
        GridSamples { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max |f|` over the sample points of `region`; the lowest cell index
    /// wins ties.
    pub fn sup(&self, grid: &Grid, region: Region<'_>) -> Result<SupNorm> {
        let mut best: Option<(f64, usize)> = None;
        let mut take = |idx: usize| {
            let v = self.values[idx].abs();
            if best.is_none_or(|(b, bi)| v > b || (v == b && idx < bi)) {
                best = Some((v, idx));
            }
        };
        match region {
            Region::Domain => grid.interior_indices().for_each(&mut take),
            Region::Ball(ball) => grid.for_each_in_ball(&ball, &mut take),
            Region::Set(set) => set.indices().for_each(&mut take),
        }
        let (value, cell) =
            best.ok_or_else(|| Error::EmptyRegion("no sample points in region".into()))?;
        Ok(SupNorm {
            value,
            argmax: grid.center(cell),
            cell,
        })
    }
}

/// Grid sup of `|f|` over a region.
pub fn sup_norm(f: &dyn Field, region: Region<'_>, grid: &Grid) -> Result<SupNorm> {
    let cells: Vec<usize> = match region {
        Region::Domain => grid.interior_indices().collect(),
        Region::Ball(ball) => grid.cells_in_ball(&ball),
        Region::Set(set) => set.indices().collect(),
    };
    let (value, cell) = cells
        .into_iter()
        .map(|idx| (f.value(grid.center(idx)).abs(), idx))
        .fold(None, |acc: Option<(f64, usize)>, (v, i)| match acc {
            Some((b, bi)) if b > v || (b == v && bi < i) => Some((b, bi)),
            _ => Some((v, i)),
        })
        .ok_or_else(|| Error::EmptyRegion("no sample points in region".into()))?;
    Ok(SupNorm {
        value,
        argmax: grid.center(cell),
        cell,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::Domain;

    #[test]
    fn sup_norm_examples() {
        let g = Arc::new(Grid::new(Domain::interval(1.0), &[1024]).unwrap());
        let one = FunctionModel::constant(1.0, 1);
        assert_eq!(sup_norm(&one, Region::Domain, &g).unwrap().value, 1.0);
        let s = FunctionModel::sine(&[1]);
        assert!((sup_norm(&s, Region::Domain, &g).unwrap().value - 1.0).abs() < 1e-4);
        // Cells meeting [0, 0.1].
        let h = g.cell_size(0);
        let e = MeasurableSet::from_predicate(g.clone(), |p| p[0] - h / 2.0 <= 0.1);
        let sup_e = sup_norm(&s, Region::Set(&e), &g).unwrap().value;
        assert!((sup_e - (0.2 * std::f64::consts::PI).sin()).abs() < 1e-3);
        let samples = GridSamples::new(&s, &g);
        assert_eq!(
            samples.sup(&g, Region::Set(&e)).unwrap(),
            sup_norm(&s, Region::Set(&e), &g).unwrap()
        );
        let empty = MeasurableSet::empty(g.clone());
        assert!(matches!(
            sup_norm(&s, Region::Set(&empty), &g),
            Err(Error::EmptyRegion(_))
        ));
        assert!(samples.sup(&g, Region::Set(&empty)).is_err());
    }
}
