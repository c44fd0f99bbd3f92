//! Run configuration, read from a TOML file.
//!
//! ```toml
//! seed = 7
//!
//! [domain]
//! kind = "torus"
//! extent = [1.0]
//! cells = [1024]
//!
//! [function]
//! kind = "trig"
//! terms = [{ freq = [1], amplitude = 1.0 }]
//!
//! [set]
//! kind = "random"
//! fraction = 0.1
//!
//! [hypotheses]
//! branch = "auto"
//! gevrey = "estimate"
//! doubling = "estimate"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use obscert::certify::CertifyOptions;
use obscert::eigensum::{build_eigensum, EigenSum};
use obscert::functions::{
    doubling_centers, doubling_radii, DoublingCertificate, FunctionModel, GevreyCertificate,
    GevreyOptions, TrigTerm, UcpCertificate,
};
use obscert::geometry::{Ball, Domain, DomainKind, Grid, MaskStyle, MeasurableSet, Point};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Stage};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for sweeps; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    pub domain: DomainSpec,
    pub function: Option<FunctionModel>,
    pub eigensum: Option<EigenSpec>,
    #[serde(default)]
    pub set: SetSpec,
    #[serde(default)]
    pub hypotheses: HypothesisSpec,
    #[serde(default)]
    pub certify: CertifySpec,
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub extent: Vec<f64>,
    pub cells: Option<Vec<usize>>,
}

/// A sum of Laplace eigenfunctions on the unit torus.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EigenSpec {
    pub modes: Vec<TrigTerm>,
    #[serde(default)]
    pub allow_constant: bool,
    /// A number `≥ 1`, or `"calibrate"` to fit it from the function itself.
    #[serde(default = "calibrate")]
    pub c_cal: Choice<f64>,
}

fn calibrate() -> Choice<f64> {
    Choice::Keyword("calibrate".into())
}

/// Either an explicit value or a keyword such as `"estimate"`.
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum Choice<T> {
    Given(T),
    Keyword(String),
}

impl<T> Choice<T> {
    fn resolve(&self, keyword: &str, what: &str) -> Result<Option<&T>, CliError> {
        match self {
            Choice::Given(v) => Ok(Some(v)),
            Choice::Keyword(k) if k == keyword => Ok(None),
            Choice::Keyword(k) => Err(CliError::Config(format!(
                "{what}: expected a value or \"{keyword}\", got \"{k}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SetSpec {
    /// Seeded random mask; `seed` defaults to the run seed.
    Random {
        fraction: f64,
        #[serde(default = "default_style")]
        style: MaskStyle,
        seed: Option<u64>,
    },
    /// Raster file, relative to the config file.
    Mask {
        path: PathBuf,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Full,
}

impl Default for SetSpec {
    fn default() -> Self {
        SetSpec::Random {
            fraction: 0.1,
            style: default_style(),
            seed: None,
        }
    }
}

fn default_style() -> MaskStyle {
    MaskStyle::Blobs
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BranchChoice {
    #[default]
    Auto,
    Sigma1,
    SigmaGt1,
    Ucp,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GevreySpec {
    pub m: f64,
    pub delta: f64,
    #[serde(default = "one")]
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DoublingSpec {
    pub kappa: f64,
    pub r0: f64,
}

/// `a` absent means estimate it from the function for the given `b`.
#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UcpSpec {
    pub a: Option<f64>,
    pub b: f64,
    pub r0: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HypothesisSpec {
    #[serde(default)]
    pub branch: BranchChoice,
    #[serde(default = "estimate")]
    pub gevrey: Choice<GevreySpec>,
    #[serde(default = "estimate")]
    pub doubling: Choice<DoublingSpec>,
    pub ucp: Option<UcpSpec>,
    /// Largest radius sampled when estimating or verifying doubling and UCP.
    pub radius: Option<f64>,
    #[serde(default = "default_centers")]
    pub centers: usize,
    #[serde(default = "default_kmax")]
    pub kmax: usize,
}

fn estimate<T>() -> Choice<T> {
    Choice::Keyword("estimate".into())
}

fn default_centers() -> usize {
    32
}

fn default_kmax() -> usize {
    GevreyOptions::default().kmax
}

impl Default for HypothesisSpec {
    fn default() -> Self {
        HypothesisSpec {
            branch: BranchChoice::Auto,
            gevrey: estimate(),
            doubling: estimate(),
            ucp: None,
            radius: None,
            centers: default_centers(),
            kmax: default_kmax(),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CertifySpec {
    pub directions: usize,
    pub search_width: usize,
    pub probes: usize,
}

impl Default for CertifySpec {
    fn default() -> Self {
        let o = CertifyOptions::default();
        CertifySpec {
            directions: o.directions,
            search_width: o.search_width,
            probes: o.probes,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Target `|E|/|Ω|` values; masks share one seed, so they are nested.
    #[serde(default)]
    pub fractions: Vec<f64>,
    /// Degrees `n` evaluated at the configured set.
    #[serde(default)]
    pub degrees: Vec<usize>,
    /// Eigen-function family `sin(2π k·x)`, one frequency vector per member.
    #[serde(default)]
    pub family: Vec<Vec<i64>>,
    /// Random masks per family member.
    #[serde(default = "default_masks")]
    pub masks: usize,
    /// Target fraction of the family masks.
    #[serde(default = "default_family_fraction")]
    pub mask_fraction: f64,
}

fn default_masks() -> usize {
    5
}

fn default_family_fraction() -> f64 {
    0.1
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub report: String,
    pub csv: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: PathBuf::from("."),
            report: "report.json".into(),
            csv: "sweep.csv".into(),
        }
    }
}

/// The function under study.
#[derive(Clone, Debug)]
pub enum Subject {
    Model(FunctionModel),
    Eigen { es: EigenSum, c_cal: Option<f64> },
}

impl Subject {
    pub fn model(&self) -> &FunctionModel {
        match self {
            Subject::Model(m) => m,
            Subject::Eigen { es, .. } => &es.model,
        }
    }
}

/// A validated configuration with its grid, function and set built.
#[derive(Clone, Debug)]
pub struct Problem {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub grid: Arc<Grid>,
    pub subject: Subject,
    pub set: MeasurableSet,
    pub set_label: String,
    pub branch: BranchChoice,
    pub gevrey: Option<GevreyCertificate>,
    pub doubling: Option<DoublingCertificate>,
    pub ucp: Option<UcpSpec>,
    pub radius: f64,
    pub centers: Vec<Point>,
    pub options: CertifyOptions,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Builds grid, function and set, and checks that every piece is
    /// consistent.
    pub fn resolve(self, base_dir: &Path) -> Result<Problem, CliError> {
        let cfg_err = |e: obscert::Error| CliError::Config(e.to_string());
        let domain = Domain::new(self.domain.kind, &self.domain.extent).map_err(cfg_err)?;
        let grid = match &self.domain.cells {
            Some(cells) => Grid::new(domain, cells).map_err(cfg_err)?,
            None => Grid::with_default_resolution(domain),
        };
        let grid = Arc::new(grid);
        let dim = grid.dim();

        let subject = match (&self.function, &self.eigensum) {
            (Some(f), None) => {
                f.validate(dim).map_err(cfg_err)?;
                Subject::Model(f.clone())
            }
            (None, Some(e)) => {
                let es = build_eigensum(dim, &e.modes, e.allow_constant).map_err(cfg_err)?;
                let c_cal = e.c_cal.resolve("calibrate", "eigensum.c_cal")?.copied();
                if let Some(c) = c_cal {
                    if !(c >= 1.0) {
                        return Err(CliError::Config(format!(
                            "eigensum.c_cal must be at least 1, got {c}"
                        )));
                    }
                }
                Subject::Eigen { es, c_cal }
            }
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give exactly one of [function] and [eigensum]".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config("missing [function] or [eigensum]".into()))
            }
        };

        let (set, set_label) = build_set(&self.set, &grid, self.seed, base_dir)?;
        if set.count() == 0 {
            return Err(CliError::Config(format!(
                "set {set_label} has no cells on the grid"
            )));
        }

        let h = &self.hypotheses;
        let gevrey = h
            .gevrey
            .resolve("estimate", "hypotheses.gevrey")?
            .map(|g| GevreyCertificate::new(g.m, g.delta, g.sigma))
            .transpose()
            .map_err(cfg_err)?;
        let doubling = h
            .doubling
            .resolve("estimate", "hypotheses.doubling")?
            .map(|d| DoublingCertificate::new(d.kappa, d.r0))
            .transpose()
            .map_err(cfg_err)?;
        if let Some(u) = &h.ucp {
            if !(u.b > 0.0) || u.a.is_some_and(|a| !(a > 0.0)) || u.r0.is_some_and(|r| !(r > 0.0)) {
                return Err(CliError::Config("ucp parameters must be positive".into()));
            }
        }
        let branch = match h.branch {
            BranchChoice::Auto if h.ucp.is_some() => BranchChoice::Ucp,
            BranchChoice::Auto if gevrey.is_some_and(|g| g.sigma > 1.0) => BranchChoice::SigmaGt1,
            BranchChoice::Auto => BranchChoice::Sigma1,
            b => b,
        };
        if branch == BranchChoice::Ucp && h.ucp.is_none() {
            return Err(CliError::Config(
                "the ucp branch needs a [hypotheses.ucp] table".into(),
            ));
        }
        if branch == BranchChoice::SigmaGt1 && gevrey.is_none_or(|g| g.sigma <= 1.0) {
            return Err(CliError::Config(
                "the sigma-gt1 branch needs an explicit Gevrey certificate with sigma > 1".into(),
            ));
        }
        if branch == BranchChoice::Sigma1 && gevrey.is_some_and(|g| g.sigma != 1.0) {
            return Err(CliError::Config("the sigma1 branch needs sigma = 1".into()));
        }
        if matches!(subject, Subject::Eigen { .. }) && branch != BranchChoice::Sigma1 {
            return Err(CliError::Config(
                "eigen-sums are certified on the sigma1 branch".into(),
            ));
        }

        let min_extent = (0..dim)
            .map(|a| domain.extent(a))
            .fold(f64::INFINITY, f64::min);
        let radius = h
            .radius
            .or(doubling.map(|d| d.r0))
            .or(h.ucp.and_then(|u| u.r0))
            .unwrap_or((min_extent / 4.0).min(1.0));
        if !(radius > 0.0 && radius <= 1.0) {
            return Err(CliError::Config(format!(
                "hypotheses.radius must lie in (0, 1], got {radius}"
            )));
        }
        if h.centers == 0 || h.kmax == 0 {
            return Err(CliError::Config(
                "hypotheses.centers and hypotheses.kmax must be positive".into(),
            ));
        }
        let centers = doubling_centers(&domain, h.centers);

        let c = &self.certify;
        if c.directions == 0 || c.probes < 2 {
            return Err(CliError::Config(
                "certify.directions must be positive and certify.probes at least 2".into(),
            ));
        }
        let options = CertifyOptions {
            directions: c.directions,
            search_width: c.search_width,
            probes: c.probes,
        };

        if let Some(s) = &self.sweep {
            if s.fractions.is_empty() && s.degrees.is_empty() && s.family.is_empty() {
                return Err(CliError::Config("[sweep] has no axis".into()));
            }
            if let Some(f) = s.fractions.iter().find(|&&f| !(f > 0.0 && f <= 1.0)) {
                return Err(CliError::Config(format!(
                    "sweep fraction {f} outside (0, 1]"
                )));
            }
            if !s.family.is_empty()
                && (s.masks == 0 || !(s.mask_fraction > 0.0 && s.mask_fraction <= 1.0))
            {
                return Err(CliError::Config(
                    "family sweeps need masks > 0 and mask_fraction in (0, 1]".into(),
                ));
            }
            if let Some(k) = s.family.iter().find(|k| k.len() != dim) {
                return Err(CliError::Config(format!(
                    "family frequency {k:?} does not match dimension {dim}"
                )));
            }
        }

        Ok(Problem {
            base_dir: base_dir.to_path_buf(),
            grid,
            subject,
            set,
            set_label,
            branch,
            gevrey,
            doubling,
            ucp: h.ucp,
            radius,
            centers,
            options,
            config: self,
        })
    }
}

fn point(v: &[f64], dim: usize, what: &str) -> Result<Point, CliError> {
    if v.len() != dim {
        return Err(CliError::Config(format!(
            "{what} has {} components in dimension {dim}",
            v.len()
        )));
    }
    let mut p = [0.0; 2];
    p[..dim].copy_from_slice(v);
    Ok(p)
}

pub fn build_set(
    spec: &SetSpec,
    grid: &Arc<Grid>,
    seed: u64,
    base_dir: &Path,
) -> Result<(MeasurableSet, String), CliError> {
    let dim = grid.dim();
    Ok(match spec {
        SetSpec::Random {
            fraction,
            style,
            seed: s,
        } => {
            let seed = s.unwrap_or(seed);
            let set = MeasurableSet::random(grid.clone(), *fraction, seed, *style)
                .map_err(|e| CliError::Config(e.to_string()))?;
            (
                set,
                format!("random {style:?} fraction {fraction} seed {seed}").to_lowercase(),
            )
        }
        SetSpec::Mask { path } => {
            let full = base_dir.join(path);
            let text = std::fs::read_to_string(&full).map_err(|e| {
                CliError::Config(format!("cannot read mask {}: {e}", full.display()))
            })?;
            let set = MeasurableSet::from_raster(grid.clone(), &text)
                .map_err(|e| CliError::stage(Stage::Set, e))?;
            (set, format!("mask {}", path.display()))
        }
        SetSpec::Box { lo, hi } => {
            let (lo, hi) = (point(lo, dim, "set.lo")?, point(hi, dim, "set.hi")?);
            (
                MeasurableSet::boxed(grid.clone(), lo, hi),
                format!("box {lo:?} {hi:?}"),
            )
        }
        SetSpec::Ball { center, radius } => {
            let c = point(center, dim, "set.center")?;
            let ball = Ball::new(c, *radius).map_err(|e| CliError::Config(e.to_string()))?;
            (
                MeasurableSet::ball(grid.clone(), ball),
                format!("ball {c:?} radius {radius}"),
            )
        }
        SetSpec::Full => (MeasurableSet::full(grid.clone()), "full domain".into()),
    })
}

impl Problem {
    pub fn radii(&self) -> Vec<f64> {
        doubling_radii(self.radius)
    }

    pub fn gevrey_options(&self) -> GevreyOptions {
        GevreyOptions {
            kmax: self.config.hypotheses.kmax,
            ..GevreyOptions::default()
        }
    }

    pub fn ucp_certificate(&self) -> Option<Result<UcpCertificate, obscert::Error>> {
        let u = self.ucp?;
        let a = u.a?;
        Some(UcpCertificate::new(a, u.b, u.r0.unwrap_or(self.radius)))
    }
}
