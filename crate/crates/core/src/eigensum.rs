//! Sums of Laplace eigenfunctions on the flat unit torus.
//!
//! A mode `a sin(2π k·x + φ)` is an eigenfunction of `−Δ` with eigenvalue
//! `λ = (2π|k|)²`. Modes with equal `|k|²` span one eigenspace, so an
//! [`EigenSum`] groups them into `m` components `φᵢ` with distinct
//! eigenvalues and `h = Σ φᵢ`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::{certify_sigma1, CertifyOptions, ObservabilityCertificate};
use crate::functions::{
    estimate_doubling, sup_norm, DoublingCertificate, Field, FunctionModel, GevreyCertificate,
    Region, TrigTerm,
};
use crate::geometry::{DomainKind, Grid, MeasurableSet, Point};
use crate::{Error, Result};

/// One eigenspace: all modes with the same `|k|²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Eigencomponent {
    pub norm_sq: i64,
    pub lambda: f64,
    pub modes: Vec<TrigTerm>,
}

impl Eigencomponent {
    fn value(&self, p: Point) -> f64 {
        self.modes
            .iter()
            .map(|t| t.amplitude * (2.0 * PI * dot(&t.freq, p) + t.phase).sin())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenSum {
    pub dim: usize,
    /// Ordered by increasing eigenvalue.
    pub components: Vec<Eigencomponent>,
    /// Number of distinct eigenvalues.
    pub m: usize,
    /// Largest eigenvalue.
    pub lambda: f64,
    /// `h = Σ φᵢ` as a trigonometric sum.
    pub model: FunctionModel,
}

fn dot(k: &[i64], p: Point) -> f64 {
    k.iter().enumerate().map(|(a, &ka)| ka as f64 * p[a]).sum()
}

fn same_phase(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(2.0 * PI);
    d < 1e-12 || 2.0 * PI - d < 1e-12
}

/// Groups modes by eigenvalue. The zero frequency (eigenvalue 0) is rejected
/// unless `allow_constant` is set.
pub fn build_eigensum(dim: usize, modes: &[TrigTerm], allow_constant: bool) -> Result<EigenSum> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::invalid(format!(
            "dimension must be 1 or 2, got {dim}"
        )));
    }
    if modes.is_empty() {
        return Err(Error::invalid("eigen-sum without modes"));
    }
    let mut groups: BTreeMap<i64, Vec<TrigTerm>> = BTreeMap::new();
    for (i, t) in modes.iter().enumerate() {
        if t.freq.len() != dim {
            return Err(Error::invalid(format!(
                "mode {i} has {} components in dimension {dim}",
                t.freq.len()
            )));
        }
        if !t.amplitude.is_finite() || !t.phase.is_finite() {
            return Err(Error::invalid(format!(
                "mode {i} has a non-finite parameter"
            )));
        }
        let q: i64 = t.freq.iter().map(|k| k * k).sum();
        if q == 0 && !allow_constant {
            return Err(Error::invalid(
                "zero frequency is a constant mode; allow it explicitly",
            ));
        }
        if modes[..i]
            .iter()
            .any(|u| u.freq == t.freq && u.amplitude == t.amplitude && same_phase(u.phase, t.phase))
        {
            return Err(Error::invalid(format!(
                "mode {i} duplicates an earlier mode"
            )));
        }
        groups.entry(q).or_default().push(t.clone());
    }
    let components: Vec<Eigencomponent> = groups
        .into_iter()
        .map(|(q, modes)| Eigencomponent {
            norm_sq: q,
            lambda: 4.0 * PI * PI * q as f64,
            modes,
        })
        .collect();
    let lambda = components.last().expect("nonempty").lambda;
    Ok(EigenSum {
        dim,
        m: components.len(),
        lambda,
        model: FunctionModel::Trig {
            terms: modes.to_vec(),
        },
        components,
    })
}

impl EigenSum {
    /// `Σ λᵢ φᵢ(p)`.
    pub fn weighted(&self, p: Point) -> f64 {
        self.components.iter().map(|c| c.lambda * c.value(p)).sum()
    }

    /// `−Δh(p)` from exact second directional derivatives along the axes.
    pub fn neg_laplacian(&self, p: Point) -> f64 {
        let axes: [Point; 2] = [[1.0, 0.0], [0.0, 1.0]];
        -axes[..self.dim]
            .iter()
            .map(|&e| self.model.directional(p, e, 2))
            .sum::<f64>()
    }

    fn max_frequency(&self) -> i64 {
        self.components
            .iter()
            .flat_map(|c| c.modes.iter())
            .flat_map(|t| t.freq.iter())
            .map(|k| k.abs())
            .max()
            .unwrap_or(0)
    }
}

/// Largest `|−Δh(p) − Σλᵢφᵢ(p)| / (λ Σ|aⱼ|)` over `count` seeded points in
/// the unit cell.
pub fn eigen_identity_error(es: &EigenSum, count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = es.lambda.max(1.0)
        * es.components
            .iter()
            .flat_map(|c| &c.modes)
            .map(|t| t.amplitude.abs())
            .sum::<f64>();
    (0..count)
        .map(|_| {
            let p = if es.dim == 1 {
                [rng.gen::<f64>(), 0.0]
            } else {
                [rng.gen::<f64>(), rng.gen::<f64>()]
            };
            (es.neg_laplacian(p) - es.weighted(p)).abs() / scale.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// Highest power checked in `‖Δⁿh‖ ≤ λⁿ‖h‖`.
pub const POWER_CHECK_MAX: u32 = 4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    /// Largest `|∫ φᵢ φⱼ|` over pairs of distinct eigenvalues.
    pub max_inner_product: f64,
    /// `(n, ‖Δⁿh‖, λⁿ‖h‖)` for `n = 0..=4`.
    pub power_norms: Vec<(u32, f64, f64)>,
    pub pass: bool,
}

/// Discrete `L²` checks on a periodic grid (trapezoidal rule, exact for
/// trigonometric products below the Nyquist frequency).
pub fn orthogonality_check(es: &EigenSum, grid: &Grid) -> Result<OrthogonalityReport> {
    let domain = grid.domain();
    if domain.kind() != DomainKind::Torus || domain.dim() != es.dim {
        return Err(Error::invalid(
            "orthogonality check needs a torus of the eigen-sum's dimension",
        ));
    }
    if (0..es.dim).any(|a| (domain.extent(a) - 1.0).abs() > 1e-12) {
        return Err(Error::invalid(
            "eigenvalues are computed for the unit torus",
        ));
    }
    let kmax = es.max_frequency();
    if let Some(a) = (0..es.dim).find(|&a| (grid.cells(a) as i64) < 4 * kmax) {
        return Err(Error::Resolution(format!(
            "axis {a} has {} cells, need at least {} to resolve frequency {kmax}",
            grid.cells(a),
            4 * kmax
        )));
    }
    let values: Vec<Vec<f64>> = es
        .components
        .par_iter()
        .map(|c| {
            (0..grid.len())
                .map(|idx| c.value(grid.center(idx)))
                .collect()
        })
        .collect();
    let w = grid.cell_measure();
    let inner = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() * w;

    let mut max_inner_product = 0.0f64;
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            max_inner_product = max_inner_product.max(inner(&values[i], &values[j]).abs());
        }
    }
    let h_norm = {
        let h: Vec<f64> = (0..grid.len())
            .map(|idx| values.iter().map(|v| v[idx]).sum())
            .collect();
        inner(&h, &h).sqrt()
    };
    let mut power_norms = Vec::new();
    let mut pass = max_inner_product <= 1e-10;
    for n in 0..=POWER_CHECK_MAX {
        let iterate: Vec<f64> = (0..grid.len())
            .map(|idx| {
                es.components
                    .iter()
                    .zip(&values)
                    .map(|(c, v)| (-c.lambda).powi(n as i32) * v[idx])
                    .sum()
            })
            .collect();
        let lhs = inner(&iterate, &iterate).sqrt();
        let rhs = es.lambda.powi(n as i32) * h_norm;
        pass &= lhs <= rhs * (1.0 + 1e-12);
        power_norms.push((n, lhs, rhs));
    }
    Ok(OrthogonalityReport {
        max_inner_product,
        power_norms,
        pass,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GammaParams {
    pub c_cal: f64,
    pub gamma: f64,
}

/// `γ = C_cal (√λ + m² ln m + 1)`.
pub fn gamma_params(es: &EigenSum, c_cal: f64) -> Result<GammaParams> {
    if !(c_cal >= 1.0 && c_cal.is_finite()) {
        return Err(Error::invalid(format!(
            "calibration constant must be at least 1, got {c_cal}"
        )));
    }
    Ok(GammaParams {
        c_cal,
        gamma: c_cal * gamma_shape(es.lambda, es.m),
    })
}

/// `√λ + m² ln m + 1`.
pub fn gamma_shape(lambda: f64, m: usize) -> f64 {
    let m = m as f64;
    lambda.sqrt() + m * m * m.ln() + 1.0
}

/// A member of a doubling-growth family, labelled by its `λ` and `m`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthMember {
    pub label: String,
    pub lambda: f64,
    pub m: usize,
    pub field: FunctionModel,
}

impl GrowthMember {
    pub fn from_eigensum(label: impl Into<String>, es: &EigenSum) -> Self {
        GrowthMember {
            label: label.into(),
            lambda: es.lambda,
            m: es.m,
            field: es.model.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthRow {
    pub label: String,
    pub lambda: f64,
    pub sqrt_lambda: f64,
    pub m: usize,
    pub kappa_hat: f64,
    /// `max(κ̂, 2)`.
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthStudy {
    pub rows: Vec<GrowthRow>,
    /// Least-squares slope of `ln κ` against `√λ`.
    pub slope: f64,
    pub intercept: f64,
    /// Least-squares slope of `ln ln κ` against `ln √λ`; above 1 means
    /// faster than `e^{C√λ}` growth.
    pub loglog_slope: f64,
    pub superlinear: bool,
}

/// Threshold on [`GrowthStudy::loglog_slope`] for flagging superlinear growth.
pub const SUPERLINEAR_THRESHOLD: f64 = 1.25;

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (0.0, ys.first().copied().unwrap_or(0.0));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Empirical doubling constants of a family, ordered by increasing `λ`.
pub fn doubling_growth_study(
    members: &[GrowthMember],
    grid: &Grid,
    radii: &[f64],
    centers: &[Point],
) -> Result<GrowthStudy> {
    if members.is_empty() {
        return Err(Error::invalid("growth study needs at least one member"));
    }
    if members.windows(2).any(|w| w[1].lambda < w[0].lambda) {
        return Err(Error::invalid(
            "growth family must be ordered by increasing λ",
        ));
    }
    let mut rows = Vec::with_capacity(members.len());
    for m in members {
        m.field.validate(grid.dim())?;
        let report = estimate_doubling(&m.field, grid, radii, centers)?;
        if report.infinite_samples > 0 {
            return Err(Error::Hypothesis(format!(
                "{}: doubling ratio is infinite at some sample",
                m.label
            )));
        }
        rows.push(GrowthRow {
            label: m.label.clone(),
            lambda: m.lambda,
            sqrt_lambda: m.lambda.sqrt(),
            m: m.m,
            kappa_hat: report.kappa_hat,
            kappa: report.kappa_hat.max(2.0),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.sqrt_lambda).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.kappa.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (loglog_slope, _) = least_squares(&lx, &ly);
    Ok(GrowthStudy {
        rows,
        slope,
        intercept,
        loglog_slope,
        superlinear: loglog_slope > SUPERLINEAR_THRESHOLD,
    })
}

/// Smallest `C_cal ≥ 1` with `e^{C_cal(√λ + m² ln m + 1)} ≥ κ` on every row.
pub fn calibrate(study: &GrowthStudy) -> f64 {
    study
        .rows
        .iter()
        .map(|r| r.kappa.ln() / gamma_shape(r.lambda, r.m))
        .fold(1.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigenCertificate {
    pub certificate: ObservabilityCertificate,
    pub gamma: GammaParams,
    pub kappa: f64,
    /// Smallest `C₂ ≥ 1` with `C ≤ (C₂/|E|)^{C₂γ}`.
    pub c2: f64,
    /// `ln (C₂/|E|)^{C₂γ}`.
    pub ln_shape_bound: f64,
}

/// Smallest `C₂ ≥ 1` (to bisection precision, rounded up) with
/// `ln_c ≤ C₂γ (ln C₂ − ln |E|)`, for `0 < |E| ≤ 1`.
pub fn shape_constant(ln_c: f64, gamma: f64, measure_e: f64) -> Result<f64> {
    if !(measure_e > 0.0 && measure_e <= 1.0 && gamma > 0.0) {
        return Err(Error::invalid(format!(
            "need 0 < |E| ≤ 1 and γ > 0, got {measure_e}, {gamma}"
        )));
    }
    let g = |c2: f64| c2 * gamma * (c2.ln() - measure_e.ln());
    if g(1.0) >= ln_c {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    while g(hi) < ln_c {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) >= ln_c {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Certifies `h` with the doubling constant `κ = max(e^γ, 2)` up to radius
/// `r0` and the closed-form analytic envelope of the trigonometric sum.
pub fn certify_eigensum(
    es: &EigenSum,
    set: &MeasurableSet,
    gp: &GammaParams,
    r0: f64,
    opts: &CertifyOptions,
) -> Result<EigenCertificate> {
    let grid = set.grid();
    let domain = grid.domain();
    if domain.kind() != DomainKind::Torus
        || domain.dim() != es.dim
        || (domain.volume() - 1.0).abs() > 1e-12
    {
        return Err(Error::invalid(
            "eigen-sums are certified on the unit torus of matching dimension",
        ));
    }
    let kappa = gp.gamma.exp().max(2.0);
    let dc = DoublingCertificate::new(kappa, r0)?;
    let sup = sup_norm(&es.model, Region::Domain, grid)?.value;
    let gc = GevreyCertificate::from_envelope(es.model.envelope(domain), sup)?;
    let certificate = certify_sigma1(&es.model, set, &dc, &gc, opts)?;
    let measure_e = set.measure() / domain.volume();
    let c2 = shape_constant(certificate.constant.ln(), gp.gamma, measure_e)?;
    let ln_shape_bound = c2 * gp.gamma * (c2.ln() - measure_e.ln());
    Ok(EigenCertificate {
        certificate,
        gamma: *gp,
        kappa,
        c2,
        ln_shape_bound,
    })
}
