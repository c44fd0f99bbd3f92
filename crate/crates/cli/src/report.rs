//! Report and CSV output.

use obscert::certify::{EmpiricalRatio, Evaluation, ObservabilityCertificate, Soundness};
use obscert::eigensum::GrowthStudy;
use obscert::geometry::RNG_NAME;
use obscert::LogValue;
use serde::Serialize;

use crate::config::{BranchChoice, DomainSpec};
use crate::error::{exit, Stage};

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub tool: String,
    pub command: &'static str,
    pub seed: u64,
    pub rng: &'static str,
    pub domain: DomainSpec,
    pub cells: Vec<usize>,
    pub function: serde_json::Value,
    pub set: SetSummary,
    pub branch: BranchChoice,
    pub hypotheses: Vec<Check>,
    pub entries: Vec<Entry>,
    pub family: Option<FamilyStudy>,
    pub summary: Summary,
    pub diagnostics: Vec<String>,
    pub exit_code: i32,
}

#[derive(Clone, Debug, Serialize)]
pub struct SetSummary {
    pub label: String,
    pub cells: usize,
    pub measure: f64,
    pub fraction: f64,
}

/// One hypothesis certificate with its verification.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    /// `"given"` or `"estimated"`.
    pub source: &'static str,
    pub pass: bool,
    pub details: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct Entry {
    pub label: String,
    pub axis: Option<&'static str>,
    pub value: Option<f64>,
    pub mask: Option<usize>,
    #[serde(flatten)]
    pub outcome: Outcome,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenSummary {
    pub lambda: f64,
    pub m: usize,
    pub c_cal: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub c2: f64,
    pub ln_shape_bound: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Outcome {
    Certified {
        certificate: Box<ObservabilityCertificate>,
        eigen: Option<EigenSummary>,
        ratio: EmpiricalRatio,
        soundness: Soundness,
    },
    /// A fixed-degree run (degree sweeps).
    Evaluated {
        evaluation: Box<Evaluation>,
        ratio: EmpiricalRatio,
        soundness: Soundness,
    },
    Failed {
        stage: Stage,
        exit_code: i32,
        error: String,
    },
}

impl Outcome {
    pub fn constant(&self) -> Option<(LogValue, usize, f64)> {
        match self {
            Outcome::Certified { certificate: c, .. } => Some((c.constant, c.n, c.r)),
            Outcome::Evaluated { evaluation: e, .. } => Some((e.constant, e.n, e.r)),
            Outcome::Failed { .. } => None,
        }
    }

    pub fn verdict(&self) -> Option<(&EmpiricalRatio, &Soundness)> {
        match self {
            Outcome::Certified {
                ratio, soundness, ..
            }
            | Outcome::Evaluated {
                ratio, soundness, ..
            } => Some((ratio, soundness)),
            Outcome::Failed { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyStudy {
    pub study: GrowthStudy,
    pub c_cal: f64,
    /// Fitted slope of `ln κ̂` against `√λ` at most the calibrated constant.
    pub slope_bounded: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub certificates: usize,
    pub sound: usize,
    pub unsound: usize,
    pub failed: usize,
    pub all_sound: bool,
    /// `ln C − ln ratio` statistics over certified entries.
    pub min_slack: Option<f64>,
    pub max_slack: Option<f64>,
    pub mean_slack: Option<f64>,
}

impl Summary {
    pub fn of(entries: &[Entry]) -> Summary {
        let slacks: Vec<f64> = entries
            .iter()
            .filter_map(|e| e.outcome.verdict())
            .map(|(_, s)| s.slack)
            .collect();
        let sound = entries
            .iter()
            .filter_map(|e| e.outcome.verdict())
            .filter(|(_, s)| s.pass)
            .count();
        let n = slacks.len();
        Summary {
            certificates: n,
            sound,
            unsound: n - sound,
            failed: entries.len() - n,
            all_sound: sound == n,
            min_slack: slacks.iter().cloned().reduce(f64::min),
            max_slack: slacks.iter().cloned().reduce(f64::max),
            mean_slack: (n > 0).then(|| slacks.iter().sum::<f64>() / n as f64),
        }
    }
}

impl Report {
    pub fn rng_name() -> &'static str {
        RNG_NAME
    }

    /// Exit code from the report contents: failed hypothesis checks first,
    /// then unsound certificates, then (when nothing was certified) the
    /// first failure.
    pub fn compute_exit_code(&self) -> i32 {
        if self.hypotheses.iter().any(|c| !c.pass) {
            return exit::HYPOTHESIS;
        }
        if self.summary.unsound > 0 {
            return exit::UNSOUND;
        }
        if self.summary.certificates == 0 {
            if let Some(code) = self.entries.iter().find_map(|e| match &e.outcome {
                Outcome::Failed { exit_code, .. } => Some(*exit_code),
                _ => None,
            }) {
                return code;
            }
        }
        exit::OK
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    axis: &'a str,
    value: Option<f64>,
    label: &'a str,
    mask: Option<usize>,
    c: Option<String>,
    log10_c: Option<f64>,
    ratio: Option<f64>,
    slack: Option<f64>,
    n: Option<usize>,
    r: Option<f64>,
    sound: Option<bool>,
    error: Option<&'a str>,
}

pub const CSV_HEADER: [&str; 12] = [
    "axis", "value", "label", "mask", "c", "log10_c", "ratio", "slack", "n", "r", "sound", "error",
];

/// Header plus one row per entry; `slack` is `ln C − ln ratio`.
pub fn to_csv(entries: &[Entry]) -> Result<String, csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for e in entries {
        let constant = e.outcome.constant();
        let verdict = e.outcome.verdict();
        let error = match &e.outcome {
            Outcome::Failed { error, .. } => Some(error.as_str()),
            _ => None,
        };
        w.serialize(CsvRow {
            axis: e.axis.unwrap_or(""),
            value: e.value,
            label: &e.label,
            mask: e.mask,
            c: constant.map(|(c, _, _)| c.to_string()),
            log10_c: constant.map(|(c, _, _)| c.log10()),
            ratio: verdict.map(|(r, _)| r.ratio),
            slack: verdict.map(|(_, s)| s.slack),
            n: constant.map(|(_, n, _)| n),
            r: constant.map(|(_, _, r)| r),
            sound: verdict.map(|(_, s)| s.pass),
            error,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
