//! Nonnegative reals carried as natural logarithms.
//!
//! Interpolation constants such as `(n+1)!^σ / δ^(n+1)` overflow `f64` long
//! before the certificates stop being meaningful, so every bound is computed
//! and composed as a logarithm.

use std::fmt;
use std::ops::{Div, Mul};
use std::sync::OnceLock;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

/// A nonnegative real `x` stored as `ln x` (`-inf` encodes zero).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogValue(f64);

impl LogValue {
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    pub const ONE: LogValue = LogValue(0.0);

    pub fn from_ln(ln: f64) -> Self {
        debug_assert!(!ln.is_nan());
        LogValue(ln)
    }

    pub fn from_log10(log10: f64) -> Self {
        LogValue(log10 * std::f64::consts::LN_10)
    }

    /// Panics on negative or NaN input.
    pub fn new(x: f64) -> Self {
        assert!(x >= 0.0, "LogValue::new: negative or NaN input {x}");
        LogValue(x.ln())
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn log10(self) -> f64 {
        self.0 / std::f64::consts::LN_10
    }

    pub fn log2(self) -> f64 {
        self.0 / std::f64::consts::LN_2
    }

    /// The plain value; `inf` when it does not fit in an `f64`.
    pub fn value(self) -> f64 {
        self.0.exp()
    }

    /// The plain value if it is finite and nonzero as an `f64`.
    pub fn representable(self) -> Option<f64> {
        let v = self.0.exp();
        (v.is_finite() && (v > 0.0 || self.0 == f64::NEG_INFINITY)).then_some(v)
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn powf(self, p: f64) -> Self {
        if self.is_zero() {
            return if p == 0.0 {
                LogValue::ONE
            } else {
                LogValue::ZERO
            };
        }
        LogValue(self.0 * p)
    }

    pub fn powi(self, p: i64) -> Self {
        self.powf(p as f64)
    }

    /// `ln(e^a + e^b)` without overflow.
    #[allow(clippy::should_implement_trait)]
    pub fn add(self, other: LogValue) -> Self {
        let (hi, lo) = if self.0 >= other.0 {
            (self.0, other.0)
        } else {
            (other.0, self.0)
        };
        if hi == f64::NEG_INFINITY {
            return LogValue::ZERO;
        }
        LogValue(hi + (lo - hi).exp().ln_1p())
    }

    pub fn sum<I: IntoIterator<Item = LogValue>>(items: I) -> Self {
        let items: Vec<LogValue> = items.into_iter().collect();
        let hi = items.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        if hi == f64::NEG_INFINITY {
            return LogValue::ZERO;
        }
        let s: f64 = items.iter().map(|v| (v.0 - hi).exp()).sum();
        LogValue(hi + s.ln())
    }

    pub fn max(self, other: LogValue) -> Self {
        if self.0 >= other.0 {
            self
        } else {
            other
        }
    }
}

impl Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        if self.is_zero() || rhs.is_zero() {
            return LogValue::ZERO;
        }
        LogValue(self.0 + rhs.0)
    }
}

impl Div for LogValue {
    type Output = LogValue;
    fn div(self, rhs: LogValue) -> LogValue {
        assert!(!rhs.is_zero(), "LogValue division by zero");
        if self.is_zero() {
            return LogValue::ZERO;
        }
        LogValue(self.0 - rhs.0)
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.representable() {
            Some(v) if v != 0.0 && (1e-6..1e12).contains(&v.abs()) => write!(f, "{v}"),
            _ if self.is_zero() => write!(f, "0"),
            _ => write!(f, "1e{:.6}", self.log10()),
        }
    }
}

impl Serialize for LogValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("LogValue", 2)?;
        let log10 = if self.is_zero() {
            None
        } else {
            Some(self.log10())
        };
        s.serialize_field("log10", &log10)?;
        s.serialize_field("decimal", &self.representable())?;
        s.end()
    }
}

const TABLE_LEN: usize = 2048;

fn factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(TABLE_LEN);
        let mut acc = 0.0f64;
        t.push(0.0);
        for k in 1..TABLE_LEN {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// `ln(n!)`. Exact summation below 2048, Stirling series above.
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < TABLE_LEN {
        return factorial_table()[n as usize];
    }
    let x = n as f64 + 1.0;
    // ln Γ(x) for x ≥ 2049; the truncated series error is below 1e-20.
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * (2.0 * std::f64::consts::PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

pub fn factorial(n: u64) -> LogValue {
    LogValue(ln_factorial(n))
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}
