use rayon::prelude::*;
use serde::Serialize;

use super::{Envelope, Field, GridSamples, Region};
use crate::geometry::{direction_fan, Ball, Domain, DomainKind, Grid, Point};
use crate::logspace::ln_factorial;
use crate::{Error, Result};

pub const DEFAULT_KMAX: usize = 12;

/// Relative tolerance on log-ratios when comparing against a certificate.
const LOG_TOL: f64 = 1e-12;

/// `‖∂ᵏ f‖ ≤ M k!^σ δ⁻ᵏ ‖f‖` on the domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GevreyCertificate {
    pub m: f64,
    pub delta: f64,
    pub sigma: f64,
}

impl GevreyCertificate {
    pub fn new(m: f64, delta: f64, sigma: f64) -> Result<Self> {
        if !(m >= 1.0 && m.is_finite()) {
            return Err(Error::invalid(format!(
                "Gevrey constant M must be >= 1, got {m}"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!(
                "Gevrey radius delta must be positive, got {delta}"
            )));
        }
        if !(sigma >= 1.0 && sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "Gevrey index sigma must be >= 1, got {sigma}"
            )));
        }
        Ok(GevreyCertificate { m, delta, sigma })
    }

    /// Analytic certificate from a derivative envelope, normalized by a
    /// (grid) lower estimate of `‖f‖_∞`.
    pub fn from_envelope(env: Envelope, sup: f64) -> Result<Self> {
        if !(sup > 0.0) {
            return Err(Error::Hypothesis(
                "the zero function carries no Gevrey certificate".into(),
            ));
        }
        GevreyCertificate::new((env.bound / sup).max(1.0), env.delta, 1.0)
    }
}

/// `‖f‖(B_{2r}(x)) ≤ κ ‖f‖(B_r(x))` for `r ≤ r₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DoublingCertificate {
    pub kappa: f64,
    pub r0: f64,
}

impl DoublingCertificate {
    pub fn new(kappa: f64, r0: f64) -> Result<Self> {
        if !(kappa >= 2.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!(
                "doubling constant must be >= 2, got {kappa}"
            )));
        }
        if !(r0 > 0.0 && r0 <= 1.0) {
            return Err(Error::invalid(format!(
                "doubling radius must lie in (0, 1], got {r0}"
            )));
        }
        Ok(DoublingCertificate { kappa, r0 })
    }
}

/// `‖f‖(Ω) ≤ exp(a / rᵇ) ‖f‖(B_r(x))` for `r ≤ r₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UcpCertificate {
    pub a: f64,
    pub b: f64,
    pub r0: f64,
}

impl UcpCertificate {
    pub fn new(a: f64, b: f64, r0: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("r0", r0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "unique continuation parameter {name} must be positive, got {v}"
                )));
            }
        }
        Ok(UcpCertificate { a, b, r0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GevreyOptions {
    pub kmax: usize,
    /// Probe points per axis (subsampled from the grid).
    pub probes_per_axis: usize,
    /// Directions in the plane; the line always uses `±1`.
    pub directions: usize,
}

impl Default for GevreyOptions {
    fn default() -> Self {
        GevreyOptions {
            kmax: DEFAULT_KMAX,
            probes_per_axis: 64,
            directions: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GevreyWitness {
    pub k: usize,
    pub point: Point,
    pub direction: Point,
    /// `ln ratio(k)`.
    pub ln_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GevreyReport {
    pub pass: bool,
    pub certificate: GevreyCertificate,
    pub domain_sup: f64,
    /// `ln ratio(k)` for `k = 1..=kmax`.
    pub ln_ratios: Vec<f64>,
    pub worst: GevreyWitness,
    pub first_violation: Option<GevreyWitness>,
}

fn probe_cells(grid: &Grid, per_axis: usize) -> Vec<usize> {
    let stride = |axis: usize| {
        if grid.dim() == 1 {
            1
        } else {
            grid.cells(axis).div_ceil(per_axis.max(1)).max(1)
        }
    };
    let (si, sj) = (stride(0), stride(1));
    grid.interior_indices()
        .filter(|&idx| {
            let (i, j) = grid.coords(idx);
            i % si == 0 && j % sj == 0
        })
        .collect()
}

/// Checks `sup |∂ᵏ_μ f| δᵏ / (k!^σ ‖f‖_∞) ≤ M` for `1 ≤ k ≤ kmax` along a fan
/// of directions at a subsample of grid points. Only one-dimensional
/// sections are checked, which is what the interpolation remainder uses.
pub fn verify_gevrey(
    f: &dyn Field,
    cert: &GevreyCertificate,
    grid: &Grid,
    opts: &GevreyOptions,
) -> Result<GevreyReport> {
    if opts.kmax == 0 {
        return Err(Error::invalid("kmax must be at least 1"));
    }
    let sup = GridSamples::new(f, grid).sup(grid, Region::Domain)?.value;
    if sup == 0.0 {
        return Err(Error::Hypothesis(
            "the zero function carries no Gevrey certificate".into(),
        ));
    }
    let dirs = direction_fan(grid.dim(), opts.directions);
    let kmax = opts.kmax;
    // Per probe point: the largest |∂ᵏ| over directions, with its direction.
    let per_point: Vec<(Point, Vec<(f64, usize)>)> = probe_cells(grid, opts.probes_per_axis)
        .into_par_iter()
        .map(|idx| {
            let p = grid.center(idx);
            let mut best = vec![(0.0f64, 0usize); kmax + 1];
            for (d, &dir) in dirs.iter().enumerate() {
                let series = f.directional_series(p, dir, kmax);
                for k in 1..=kmax {
                    if series[k].abs() > best[k].0 {
                        best[k] = (series[k].abs(), d);
                    }
                }
            }
            (p, best)
        })
        .collect();

    let ln_m = cert.m.ln();
    let mut ln_ratios = vec![f64::NEG_INFINITY; kmax];
    let mut worst: Option<GevreyWitness> = None;
    let mut first_violation = None;
    for k in 1..=kmax {
        let mut best: Option<(f64, Point, Point)> = None;
        for (p, b) in &per_point {
            let (v, d) = b[k];
            if best.is_none_or(|(bv, _, _)| v > bv) {
                best = Some((v, *p, dirs[d]));
            }
        }
        let Some((v, point, direction)) = best else {
            return Err(Error::EmptyRegion("no probe points on the grid".into()));
        };
        let ln_ratio =
            v.ln() + k as f64 * cert.delta.ln() - cert.sigma * ln_factorial(k as u64) - sup.ln();
        ln_ratios[k - 1] = ln_ratio;
        let witness = GevreyWitness {
            k,
            point,
            direction,
            ln_ratio,
        };
        if worst.is_none_or(|w| ln_ratio > w.ln_ratio) {
            worst = Some(witness);
        }
        if first_violation.is_none() && ln_ratio > ln_m + LOG_TOL * ln_m.abs().max(1.0) {
            first_violation = Some(witness);
        }
    }
    Ok(GevreyReport {
        pass: first_violation.is_none(),
        certificate: *cert,
        domain_sup: sup,
        ln_ratios,
        worst: worst.expect("kmax >= 1"),
        first_violation,
    })
}

/// Radical inverse of `i` in base `b`.
fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut inv = 1.0 / b as f64;
    let mut x = 0.0;
    while i > 0 {
        x += (i % b) as f64 * inv;
        i /= b;
        inv /= b as f64;
    }
    x
}

/// `count` deterministic low-discrepancy points in the domain (van der
/// Corput on the line, Halton (2, 3) in the plane).
pub fn doubling_centers(domain: &Domain, count: usize) -> Vec<Point> {
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let p = if domain.dim() == 1 {
            [radical_inverse(i, 2) * domain.extent(0), 0.0]
        } else {
            [
                radical_inverse(i, 2) * domain.extent(0),
                radical_inverse(i, 3) * domain.extent(1),
            ]
        };
        i += 1;
        if domain.kind() != DomainKind::Disk || domain.contains(p) {
            out.push(p);
        }
    }
    out
}

/// Radii `{r₀/8, r₀/4, r₀/2, r₀}`.
pub fn doubling_radii(r0: f64) -> Vec<f64> {
    vec![r0 / 8.0, r0 / 4.0, r0 / 2.0, r0]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DoublingSample {
    pub center: Point,
    pub radius: f64,
    pub inner_sup: f64,
    pub outer_sup: f64,
    /// `outer / inner`; infinite when the inner sup vanishes.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DoublingReport {
    /// Largest sampled ratio before clamping.
    pub kappa_hat: f64,
    pub worst: DoublingSample,
    pub samples: usize,
    pub infinite_samples: usize,
    /// Present when every sample is finite.
    pub certificate: Option<DoublingCertificate>,
    /// For estimation: every sample finite. For verification: additionally
    /// `κ̂` within the certificate.
    pub pass: bool,
}

fn ball_sup(samples: &GridSamples, grid: &Grid, center: Point, radius: f64) -> Result<f64> {
    let ball = Ball::new(center, radius)?;
    samples
        .sup(grid, Region::Ball(ball))
        .map(|s| s.value)
        .map_err(|_| {
            Error::Resolution(format!(
                "ball of radius {radius} at {center:?} contains no grid sample"
            ))
        })
}

fn doubling_samples(
    f: &dyn Field,
    grid: &Grid,
    radii: &[f64],
    centers: &[Point],
) -> Result<Vec<DoublingSample>> {
    if radii.is_empty() || centers.is_empty() {
        return Err(Error::invalid(
            "doubling estimation needs at least one radius and one center",
        ));
    }
    if let Some(&r) = radii.iter().find(|&&r| !(r > 0.0)) {
        return Err(Error::invalid(format!(
            "doubling radii must be positive, got {r}"
        )));
    }
    let samples = GridSamples::new(f, grid);
    let per_center: Vec<Result<Vec<DoublingSample>>> = centers
        .par_iter()
        .map(|&center| {
            radii
                .iter()
                .map(|&radius| {
                    let inner_sup = ball_sup(&samples, grid, center, radius)?;
                    let outer_sup = ball_sup(&samples, grid, center, 2.0 * radius)?;
                    let ratio = if inner_sup > 0.0 {
                        outer_sup / inner_sup
                    } else if outer_sup > 0.0 {
                        f64::INFINITY
                    } else {
                        // 0 ≤ κ·0 holds for any κ.
                        1.0
                    };
                    Ok(DoublingSample {
                        center,
                        radius,
                        inner_sup,
                        outer_sup,
                        ratio,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for batch in per_center {
        out.extend(batch?);
    }
    Ok(out)
}

fn summarize(samples: Vec<DoublingSample>, r0: f64) -> DoublingReport {
    let mut worst = samples[0];
    for s in &samples[1..] {
        if s.ratio > worst.ratio {
            worst = *s;
        }
    }
    let infinite_samples = samples.iter().filter(|s| s.ratio.is_infinite()).count();
    let certificate = (infinite_samples == 0)
        .then(|| DoublingCertificate::new(worst.ratio.max(2.0), r0.min(1.0)).ok())
        .flatten();
    DoublingReport {
        kappa_hat: worst.ratio,
        worst,
        samples: samples.len(),
        infinite_samples,
        pass: certificate.is_some(),
        certificate,
    }
}

/// Empirical doubling constant `κ̂ = max sup_{B_2r} |f| / sup_{B_r} |f|` over
/// the sampled centers and radii; the certificate uses `max(κ̂, 2)` and the
/// largest radius (capped at 1) as `r₀`.
pub fn estimate_doubling(
    f: &dyn Field,
    grid: &Grid,
    radii: &[f64],
    centers: &[Point],
) -> Result<DoublingReport> {
    let samples = doubling_samples(f, grid, radii, centers)?;
    let r0 = radii.iter().cloned().fold(0.0, f64::max);
    Ok(summarize(samples, r0))
}

/// Samples the doubling inequality at radii `{r₀/8, …, r₀}` and compares
/// against `cert.kappa`.
pub fn verify_doubling(
    f: &dyn Field,
    cert: &DoublingCertificate,
    grid: &Grid,
    centers: &[Point],
) -> Result<DoublingReport> {
    let samples = doubling_samples(f, grid, &doubling_radii(cert.r0), centers)?;
    let mut report = summarize(samples, cert.r0);
    report.pass = report.infinite_samples == 0 && report.kappa_hat <= cert.kappa;
    report.certificate = Some(*cert);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct UcpSample {
    pub center: Point,
    pub radius: f64,
    pub ball_sup: f64,
    /// `rᵇ ln(‖f‖_Ω / ‖f‖_B)`, the smallest `a` this sample admits.
    pub required_a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UcpReport {
    pub pass: bool,
    pub domain_sup: f64,
    /// Smallest `a` consistent with every sample (infinite if some ball sup
    /// vanishes).
    pub required_a: f64,
    pub worst: UcpSample,
    /// `min (a/rᵇ + ln ‖f‖_B − ln ‖f‖_Ω)` over samples; negative means failure.
    pub worst_margin: f64,
    pub certificate: Option<UcpCertificate>,
}

fn ucp_samples(
    f: &dyn Field,
    b: f64,
    grid: &Grid,
    radii: &[f64],
    centers: &[Point],
) -> Result<(f64, Vec<UcpSample>)> {
    if radii.is_empty() || centers.is_empty() {
        return Err(Error::invalid(
            "unique continuation check needs at least one radius and one center",
        ));
    }
    let samples = GridSamples::new(f, grid);
    let sup = samples.sup(grid, Region::Domain)?.value;
    let per_center: Vec<Result<Vec<UcpSample>>> = centers
        .par_iter()
        .map(|&center| {
            radii
                .iter()
                .map(|&radius| {
                    let ball_sup = ball_sup(&samples, grid, center, radius)?;
                    let required_a = if sup == 0.0 {
                        0.0
                    } else if ball_sup == 0.0 {
                        f64::INFINITY
                    } else {
                        radius.powf(b) * (sup / ball_sup).ln()
                    };
                    Ok(UcpSample {
                        center,
                        radius,
                        ball_sup,
                        required_a,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for batch in per_center {
        out.extend(batch?);
    }
    Ok((sup, out))
}

fn worst_ucp(samples: &[UcpSample]) -> UcpSample {
    let mut worst = samples[0];
    for s in &samples[1..] {
        if s.required_a > worst.required_a {
            worst = *s;
        }
    }
    worst
}

/// Checks `‖f‖_Ω ≤ exp(a/rᵇ) ‖f‖_{B_r(x)}` at every sampled `(x, r)`.
pub fn verify_ucp(
    f: &dyn Field,
    cert: &UcpCertificate,
    grid: &Grid,
    radii: &[f64],
    centers: &[Point],
) -> Result<UcpReport> {
    let (sup, samples) = ucp_samples(f, cert.b, grid, radii, centers)?;
    let worst = worst_ucp(&samples);
    let worst_margin = samples
        .iter()
        .map(|s| {
            if sup == 0.0 {
                f64::INFINITY
            } else {
                cert.a / s.radius.powf(cert.b) + s.ball_sup.ln() - sup.ln()
            }
        })
        .fold(f64::INFINITY, f64::min);
    Ok(UcpReport {
        pass: worst_margin >= 0.0,
        domain_sup: sup,
        required_a: worst.required_a,
        worst,
        worst_margin,
        certificate: Some(*cert),
    })
}

/// The smallest `a` (for the given `b`) consistent with the samples, as a
/// certificate with `r₀` the largest sampled radius.
pub fn estimate_ucp(
    f: &dyn Field,
    b: f64,
    grid: &Grid,
    radii: &[f64],
    centers: &[Point],
) -> Result<UcpReport> {
    if !(b > 0.0) {
        return Err(Error::invalid(format!(
            "unique continuation exponent b must be positive, got {b}"
        )));
    }
    let (sup, samples) = ucp_samples(f, b, grid, radii, centers)?;
    let worst = worst_ucp(&samples);
    let r0 = radii.iter().cloned().fold(0.0, f64::max);
    let certificate = worst
        .required_a
        .is_finite()
        .then(|| UcpCertificate::new(worst.required_a.max(1e-12), b, r0).ok())
        .flatten();
    Ok(UcpReport {
        pass: certificate.is_some(),
        domain_sup: sup,
        required_a: worst.required_a,
        worst,
        worst_margin: if worst.required_a.is_finite() {
            0.0
        } else {
            f64::NEG_INFINITY
        },
        certificate,
    })
}
