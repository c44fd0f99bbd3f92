use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::Field;
use crate::geometry::{Domain, Point};
use crate::logspace::ln_binomial;
use crate::{Error, Result};

/// Upper bound on the Hermite-function factor `|He_k(u)| e^{-u²/2} / √k!`.
const CRAMER: f64 = 1.0865;

/// `amplitude · sin(2π freq·x + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub freq: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// `coefficient · Π x_a^{powers[a]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub powers: Vec<u32>,
    pub coefficient: f64,
}

/// Declarative test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FunctionModel {
    /// `Σ aⱼ sin(2π kⱼ·x + φⱼ)` with integer frequency vectors.
    Trig {
        terms: Vec<TrigTerm>,
    },
    /// `A exp(−|x − c|² / (2s²))`.
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// Pointwise product of the factors.
    Product {
        factors: Vec<FunctionModel>,
    },
    Polynomial {
        terms: Vec<Monomial>,
    },
    /// `A exp(rate·x)`.
    Exponential {
        amplitude: f64,
        rate: Vec<f64>,
    },
}

/// `sup |∂ᵏ_μ f| ≤ bound · k! / δᵏ` on the domain, for every `k ≥ 0` and
/// unit `μ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Envelope {
    pub bound: f64,
    pub delta: f64,
}

impl FunctionModel {
    pub fn constant(value: f64, dim: usize) -> Self {
        FunctionModel::Polynomial {
            terms: vec![Monomial {
                powers: vec![0; dim],
                coefficient: value,
            }],
        }
    }

    /// `sin(2π k·x)`.
    pub fn sine(freq: &[i64]) -> Self {
        FunctionModel::Trig {
            terms: vec![TrigTerm {
                freq: freq.to_vec(),
                amplitude: 1.0,
                phase: 0.0,
            }],
        }
    }

    /// Checks that every vector parameter has `dim` components.
    pub fn validate(&self, dim: usize) -> Result<()> {
        let check = |len: usize, what: &str| {
            if len == dim {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{what} has {len} components in dimension {dim}"
                )))
            }
        };
        match self {
            FunctionModel::Trig { terms } => {
                if terms.is_empty() {
                    return Err(Error::invalid("trigonometric sum without terms"));
                }
                terms
                    .iter()
                    .try_for_each(|t| check(t.freq.len(), "frequency"))
            }
            FunctionModel::Gaussian { center, width, .. } => {
                if !(*width > 0.0) {
                    return Err(Error::invalid("gaussian width must be positive"));
                }
                check(center.len(), "gaussian center")
            }
            FunctionModel::Product { factors } => {
                if factors.is_empty() {
                    return Err(Error::invalid("product without factors"));
                }
                factors.iter().try_for_each(|f| f.validate(dim))
            }
            FunctionModel::Polynomial { terms } => {
                if terms.is_empty() {
                    return Err(Error::invalid("polynomial without terms"));
                }
                terms
                    .iter()
                    .try_for_each(|m| check(m.powers.len(), "monomial"))
            }
            FunctionModel::Exponential { rate, .. } => check(rate.len(), "exponential rate"),
        }
    }

    /// Whether the function is periodic with the periods of `domain` (only
    /// meaningful on a torus).
    pub fn is_periodic_on(&self, domain: &Domain) -> bool {
        match self {
            FunctionModel::Trig { terms } => terms.iter().all(|t| {
                t.freq.iter().enumerate().all(|(a, &k)| {
                    let cycles = k as f64 * domain.extent(a);
                    (cycles - cycles.round()).abs() < 1e-9
                })
            }),
            FunctionModel::Product { factors } => factors.iter().all(|f| f.is_periodic_on(domain)),
            FunctionModel::Polynomial { terms } => {
                terms.iter().all(|m| m.powers.iter().all(|&p| p == 0))
            }
            _ => false,
        }
    }

    /// Closed-form derivative envelope on `domain`.
    pub fn envelope(&self, domain: &Domain) -> Envelope {
        match self {
            FunctionModel::Trig { terms } => {
                let bound = terms.iter().map(|t| t.amplitude.abs()).sum();
                let kmax = terms.iter().map(|t| norm_i(&t.freq)).fold(0.0, f64::max);
                let delta = if kmax > 0.0 {
                    1.0 / (2.0 * PI * kmax)
                } else {
                    1.0
                };
                Envelope { bound, delta }
            }
            FunctionModel::Gaussian {
                amplitude, width, ..
            } => Envelope {
                bound: CRAMER * amplitude.abs(),
                delta: *width,
            },
            FunctionModel::Product { factors } => {
                let mut acc = factors[0].envelope(domain);
                for f in &factors[1..] {
                    let e = f.envelope(domain);
                    // Leibniz: Σ C(k,j) j!(k−j)! δ₁^{−j} δ₂^{−(k−j)} ≤ k!(k+1)δ_min^{−k} ≤ k!(2/δ_min)^k.
                    acc = Envelope {
                        bound: acc.bound * e.bound,
                        delta: acc.delta.min(e.delta) / 2.0,
                    };
                }
                acc
            }
            FunctionModel::Polynomial { terms } => {
                let reach = (0..domain.dim())
                    .map(|a| domain.extent(a))
                    .fold(0.0, f64::max)
                    + 1.0;
                let bound = terms
                    .iter()
                    .map(|m| m.coefficient.abs() * reach.powi(m.powers.iter().sum::<u32>() as i32))
                    .sum();
                Envelope { bound, delta: 1.0 }
            }
            FunctionModel::Exponential { amplitude, rate } => {
                let peak: f64 = rate
                    .iter()
                    .enumerate()
                    .map(|(a, &c)| (c * domain.extent(a)).max(0.0))
                    .sum();
                let speed = rate.iter().map(|c| c * c).sum::<f64>().sqrt();
                Envelope {
                    bound: amplitude.abs() * peak.exp(),
                    delta: if speed > 0.0 { 1.0 / speed } else { 1.0 },
                }
            }
        }
    }
}

fn norm_i(k: &[i64]) -> f64 {
    k.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt()
}

fn dot_k(k: &[i64], p: Point) -> f64 {
    k.iter().enumerate().map(|(a, &x)| x as f64 * p[a]).sum()
}

fn dot_v(v: &[f64], p: Point) -> f64 {
    v.iter().enumerate().map(|(a, &x)| x * p[a]).sum()
}

impl Field for FunctionModel {
    fn value(&self, p: Point) -> f64 {
        match self {
            FunctionModel::Trig { terms } => terms
                .iter()
                .map(|t| t.amplitude * (2.0 * PI * dot_k(&t.freq, p) + t.phase).sin())
                .sum(),
            FunctionModel::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let r2: f64 = center
                    .iter()
                    .enumerate()
                    .map(|(a, &c)| (p[a] - c) * (p[a] - c))
                    .sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            FunctionModel::Product { factors } => factors.iter().map(|f| f.value(p)).product(),
            FunctionModel::Polynomial { terms } => terms
                .iter()
                .map(|m| {
                    m.coefficient
                        * m.powers
                            .iter()
                            .enumerate()
                            .map(|(a, &e)| p[a].powi(e as i32))
                            .product::<f64>()
                })
                .sum(),
            FunctionModel::Exponential { amplitude, rate } => amplitude * dot_v(rate, p).exp(),
        }
    }

    fn directional_series(&self, p: Point, dir: Point, max_order: usize) -> Vec<f64> {
        let mut out = vec![0.0; max_order + 1];
        match self {
            FunctionModel::Trig { terms } => {
                for t in terms {
                    let w = 2.0 * PI * dot_k(&t.freq, dir);
                    let phase = 2.0 * PI * dot_k(&t.freq, p) + t.phase;
                    let mut scale = t.amplitude;
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += scale * (phase + k as f64 * FRAC_PI_2).sin();
                        scale *= w;
                    }
                }
            }
            FunctionModel::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let rel: Vec<f64> = center.iter().enumerate().map(|(a, &c)| p[a] - c).collect();
                let r2: f64 = rel.iter().map(|x| x * x).sum();
                let u = rel
                    .iter()
                    .enumerate()
                    .map(|(a, &x)| x * dir[a])
                    .sum::<f64>()
                    / width;
                let base = amplitude * (-r2 / (2.0 * width * width)).exp();
                // d^k/dt^k e^{-(u + t/s)²/2} = (−1/s)^k He_k(u) e^{−u²/2}
                let (mut he_prev, mut he) = (0.0, 1.0);
                let mut scale = 1.0;
                for (k, o) in out.iter_mut().enumerate() {
                    *o = base * scale * he;
                    let next = u * he - k as f64 * he_prev;
                    he_prev = he;
                    he = next;
                    scale *= -1.0 / width;
                }
            }
            FunctionModel::Product { factors } => {
                out = factors[0].directional_series(p, dir, max_order);
                for f in &factors[1..] {
                    let g = f.directional_series(p, dir, max_order);
                    let prev = out.clone();
                    for (k, o) in out.iter_mut().enumerate() {
                        *o = (0..=k).map(|j| binomial(k, j) * prev[j] * g[k - j]).sum();
                    }
                }
            }
            FunctionModel::Polynomial { terms } => {
                // Coefficients of t ↦ f(p + t·dir), then k-th derivative = k!·c_k.
                for m in terms {
                    let mut poly = vec![m.coefficient];
                    for (a, &e) in m.powers.iter().enumerate() {
                        let factor: Vec<f64> = (0..=e as usize)
                            .map(|j| {
                                binomial(e as usize, j)
                                    * p[a].powi(e as i32 - j as i32)
                                    * dir[a].powi(j as i32)
                            })
                            .collect();
                        poly = convolve(&poly, &factor);
                    }
                    let mut fact = 1.0;
                    for (k, o) in out.iter_mut().enumerate() {
                        if k > 0 {
                            fact *= k as f64;
                        }
                        if let Some(c) = poly.get(k) {
                            *o += fact * c;
                        }
                    }
                }
            }
            FunctionModel::Exponential { amplitude, rate } => {
                let v = amplitude * dot_v(rate, p).exp();
                let s = dot_v(rate, dir);
                let mut scale = 1.0;
                for o in out.iter_mut() {
                    *o = v * scale;
                    scale *= s;
                }
            }
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    ln_binomial(n as u64, k as u64).exp().round()
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn models() -> Vec<FunctionModel> {
        vec![
            FunctionModel::Trig {
                terms: vec![
                    TrigTerm {
                        freq: vec![1, 2],
                        amplitude: 0.7,
                        phase: 0.3,
                    },
                    TrigTerm {
                        freq: vec![-3, 1],
                        amplitude: 0.4,
                        phase: 1.1,
                    },
                ],
            },
            FunctionModel::Gaussian {
                amplitude: 1.3,
                center: vec![0.4, 0.6],
                width: 0.2,
            },
            FunctionModel::Polynomial {
                terms: vec![
                    Monomial {
                        powers: vec![2, 1],
                        coefficient: 1.5,
                    },
                    Monomial {
                        powers: vec![0, 3],
                        coefficient: -0.5,
                    },
                    Monomial {
                        powers: vec![0, 0],
                        coefficient: 2.0,
                    },
                ],
            },
            FunctionModel::Exponential {
                amplitude: 0.5,
                rate: vec![1.2, -0.7],
            },
            FunctionModel::Product {
                factors: vec![
                    FunctionModel::sine(&[1, 1]),
                    FunctionModel::Gaussian {
                        amplitude: 1.0,
                        center: vec![0.5, 0.5],
                        width: 0.3,
                    },
                ],
            },
        ]
    }

    #[test]
    fn order_zero_is_the_value() {
        let p = [0.31, 0.77];
        let dir = [0.6, 0.8];
        for m in models() {
            let (d, v) = (m.directional(p, dir, 0), m.value(p));
            assert!((d - v).abs() <= 1e-14 * v.abs().max(1.0), "{m:?}");
        }
    }

    #[test]
    fn first_derivative_matches_central_differences() {
        let h = 1e-5;
        let dir = [0.6, -0.8];
        for m in models() {
            for p in [[0.13, 0.29], [0.52, 0.71], [0.88, 0.05]] {
                let exact = m.directional(p, dir, 1);
                let plus = m.value([p[0] + h * dir[0], p[1] + h * dir[1]]);
                let minus = m.value([p[0] - h * dir[0], p[1] - h * dir[1]]);
                let fd = (plus - minus) / (2.0 * h);
                if exact.abs() > 1e-3 {
                    assert!(
                        ((fd - exact) / exact).abs() < 1e-6,
                        "{m:?} at {p:?}: {fd} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn higher_orders_are_consistent() {
        // d/dt of the order-k derivative equals the order-(k+1) derivative.
        let h = 1e-5;
        let dir = [0.28, 0.96];
        let p = [0.41, 0.37];
        for m in models() {
            let s = m.directional_series(p, dir, 5);
            let plus = m.directional_series([p[0] + h * dir[0], p[1] + h * dir[1]], dir, 5);
            let minus = m.directional_series([p[0] - h * dir[0], p[1] - h * dir[1]], dir, 5);
            for k in 0..4 {
                let fd = (plus[k] - minus[k]) / (2.0 * h);
                let scale = s[k + 1].abs().max(1.0);
                assert!((fd - s[k + 1]).abs() / scale < 1e-5, "{m:?} order {k}");
            }
        }
    }

    #[test]
    fn trig_derivative_sup_bound() {
        let m = &models()[0];
        let dir = [0.6, 0.8];
        for k in 0..8 {
            let bound: f64 = [(0.7, [1.0, 2.0]), (0.4, [-3.0, 1.0])]
                .iter()
                .map(|(a, f)| a * (2.0 * PI * (f[0] * dir[0] + f[1] * dir[1])).abs().powi(k))
                .sum();
            for i in 0..50 {
                let p = [i as f64 / 50.0, (i * 7 % 50) as f64 / 50.0];
                assert!(m.directional(p, dir, k as usize).abs() <= bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn envelopes_dominate_sampled_derivatives() {
        let domain = Domain::rect(1.0, 1.0);
        for m in models() {
            let env = m.envelope(&domain);
            for k in 0..12usize {
                let allowed = env.bound * crate::logspace::factorial(k as u64).value()
                    / env.delta.powi(k as i32);
                for i in 0..20 {
                    for j in 0..20 {
                        let p = [i as f64 / 19.0, j as f64 / 19.0];
                        for dir in [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [-0.8, 0.6]] {
                            let d = m.directional(p, dir, k).abs();
                            assert!(
                                d <= allowed * (1.0 + 1e-9),
                                "{m:?} k={k} p={p:?}: {d} > {allowed}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn validation() {
        assert!(FunctionModel::sine(&[1]).validate(2).is_err());
        assert!(FunctionModel::Trig { terms: vec![] }.validate(1).is_err());
        assert!(FunctionModel::Gaussian {
            amplitude: 1.0,
            center: vec![0.5],
            width: 0.0
        }
        .validate(1)
        .is_err());
        assert!(models().iter().all(|m| m.validate(2).is_ok()));
        let torus = Domain::torus(&[1.0, 1.0]);
        assert!(models()[0].is_periodic_on(&torus));
        assert!(!models()[1].is_periodic_on(&torus));
    }
}
