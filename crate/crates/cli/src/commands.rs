//! The `certify`, `sweep` and `verify` commands.

use std::sync::Arc;

use obscert::certify::{
    certify_sigma1, certify_sigma_gt1, certify_ucp, empirical_ratio, evaluate_sigma1_at,
    evaluate_sigma_gt1_at, soundness_check, CertifyOptions,
};
use obscert::eigensum::{
    build_eigensum, calibrate, certify_eigensum, doubling_growth_study, gamma_params, EigenSum,
    GammaParams, GrowthMember,
};
use obscert::functions::{
    estimate_doubling, estimate_ucp, sup_norm, verify_doubling, verify_gevrey, verify_ucp,
    DoublingCertificate, FunctionModel, GevreyCertificate, Region, UcpCertificate,
};
use obscert::geometry::{DomainKind, Grid, MaskStyle, MeasurableSet};
use rayon::prelude::*;

use crate::config::{BranchChoice, Problem, SetSpec, Subject};
use crate::error::{code_for, CliError, Stage};
use crate::report::{
    Check, EigenSummary, Entry, FamilyStudy, Outcome, Report, SetSummary, Summary,
};

/// Report, plus CSV text for sweeps.
#[derive(Clone, Debug)]
pub struct Output {
    pub report: Report,
    pub csv: Option<String>,
}

/// Hypothesis certificates in force for a run.
#[derive(Clone, Debug, Default)]
struct Hypotheses {
    gevrey: Option<GevreyCertificate>,
    doubling: Option<DoublingCertificate>,
    ucp: Option<UcpCertificate>,
    gamma: Option<GammaParams>,
    checks: Vec<Check>,
    diagnostics: Vec<String>,
}

impl Hypotheses {
    fn ok(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report values serialize")
}

fn hyp(e: obscert::Error) -> CliError {
    CliError::stage(Stage::Hypotheses, e)
}

fn check_gevrey(
    p: &Problem,
    f: &FunctionModel,
    cert: GevreyCertificate,
    source: &'static str,
    h: &mut Hypotheses,
) -> Result<(), CliError> {
    let rep = verify_gevrey(f, &cert, &p.grid, &p.gevrey_options()).map_err(hyp)?;
    if let Some(w) = &rep.first_violation {
        h.diagnostics.push(format!(
            "gevrey: ratio(k) ≤ M fails at k = {} (ln ratio {:.6} > ln M {:.6}) at {:?} along {:?}",
            w.k,
            w.ln_ratio,
            cert.m.ln(),
            w.point,
            w.direction
        ));
    }
    h.checks.push(Check {
        name: "gevrey",
        source,
        pass: rep.pass,
        details: json(&rep),
    });
    h.gevrey = Some(cert);
    Ok(())
}

fn check_doubling(
    p: &Problem,
    f: &FunctionModel,
    cert: DoublingCertificate,
    source: &'static str,
    h: &mut Hypotheses,
) -> Result<(), CliError> {
    let rep = verify_doubling(f, &cert, &p.grid, &p.centers).map_err(hyp)?;
    if !rep.pass {
        h.diagnostics.push(format!(
            "doubling: sup over B(x, 2r) ≤ κ sup over B(x, r) fails with ratio {:.6e} > κ = {:.6e} at x = {:?}, r = {}",
            rep.worst.ratio, cert.kappa, rep.worst.center, rep.worst.radius
        ));
    }
    h.checks.push(Check {
        name: "doubling",
        source,
        pass: rep.pass,
        details: json(&rep),
    });
    h.doubling = Some(cert);
    Ok(())
}

fn check_ucp(
    p: &Problem,
    f: &FunctionModel,
    cert: UcpCertificate,
    source: &'static str,
    h: &mut Hypotheses,
) -> Result<(), CliError> {
    let rep = verify_ucp(
        f,
        &cert,
        &p.grid,
        &obscert::functions::doubling_radii(cert.r0),
        &p.centers,
    )
    .map_err(hyp)?;
    if !rep.pass {
        h.diagnostics.push(format!(
            "ucp: sup over Ω ≤ exp(a/r^b) sup over B(x, r) fails with margin {:.6e} at x = {:?}, r = {}",
            rep.worst_margin, rep.worst.center, rep.worst.radius
        ));
    }
    h.checks.push(Check {
        name: "ucp",
        source,
        pass: rep.pass,
        details: json(&rep),
    });
    h.ucp = Some(cert);
    Ok(())
}

fn envelope_gevrey(p: &Problem, f: &FunctionModel) -> Result<GevreyCertificate, CliError> {
    let sup = sup_norm(f, Region::Domain, &p.grid).map_err(hyp)?.value;
    GevreyCertificate::from_envelope(f.envelope(p.grid.domain()), sup).map_err(hyp)
}

/// Gamma parameters of an eigen-sum, calibrating `C_cal` from the function
/// itself when it is not given.
fn eigen_gamma(p: &Problem, es: &EigenSum, c_cal: Option<f64>) -> Result<GammaParams, CliError> {
    let c = match c_cal {
        Some(c) => c,
        None => {
            let study = doubling_growth_study(
                &[GrowthMember::from_eigensum("self", es)],
                &p.grid,
                &p.radii(),
                &p.centers,
            )
            .map_err(|e| CliError::stage(Stage::Eigensum, e))?;
            calibrate(&study)
        }
    };
    gamma_params(es, c).map_err(|e| CliError::stage(Stage::Eigensum, e))
}

/// Estimates or takes the configured certificates and verifies each one.
fn resolve_hypotheses(p: &Problem) -> Result<Hypotheses, CliError> {
    let mut h = Hypotheses::default();
    let f = p.subject.model();
    match p.gevrey {
        Some(g) => check_gevrey(p, f, g, "given", &mut h)?,
        None => check_gevrey(p, f, envelope_gevrey(p, f)?, "estimated", &mut h)?,
    }
    if let Subject::Eigen { es, c_cal } = &p.subject {
        let gp = eigen_gamma(p, es, *c_cal)?;
        let dc = DoublingCertificate::new(gp.gamma.exp().max(2.0), p.radius).map_err(hyp)?;
        check_doubling(p, f, dc, "eigen-sum", &mut h)?;
        h.gamma = Some(gp);
        return Ok(h);
    }
    match p.branch {
        BranchChoice::Ucp => match p.ucp_certificate() {
            Some(c) => check_ucp(p, f, c.map_err(hyp)?, "given", &mut h)?,
            None => {
                let u = p.ucp.expect("ucp branch has a ucp table");
                // The certifier works on balls of radius r/10 with r well below r₀, so sample finer scales too.
                let r0 = u.r0.unwrap_or(p.radius);
                let radii: Vec<f64> = (0..8).map(|j| r0 / 2f64.powi(j)).collect();
                let rep = estimate_ucp(f, u.b, &p.grid, &radii, &p.centers).map_err(hyp)?;
                let cert = rep.certificate.ok_or_else(|| {
                    hyp(obscert::Error::Hypothesis(
                        "f vanishes on a sampled ball; no UCP bound exists".into(),
                    ))
                })?;
                h.checks.push(Check {
                    name: "ucp",
                    source: "estimated",
                    pass: true,
                    details: json(&rep),
                });
                h.ucp = Some(cert);
            }
        },
        _ => match p.doubling {
            Some(d) => check_doubling(p, f, d, "given", &mut h)?,
            None => {
                let rep = estimate_doubling(f, &p.grid, &p.radii(), &p.centers).map_err(hyp)?;
                let cert = rep.certificate.ok_or_else(|| {
                    hyp(obscert::Error::Hypothesis(format!(
                        "doubling ratio is infinite at {:?}, r = {}",
                        rep.worst.center, rep.worst.radius
                    )))
                })?;
                h.checks.push(Check {
                    name: "doubling",
                    source: "estimated",
                    pass: true,
                    details: json(&rep),
                });
                h.doubling = Some(cert);
            }
        },
    }
    Ok(h)
}

fn failed(stage: Stage, e: obscert::Error) -> Outcome {
    Outcome::Failed {
        stage,
        exit_code: code_for(&e),
        error: e.to_string(),
    }
}

/// Full certification of the problem's function on `set`.
fn certify_on(p: &Problem, h: &Hypotheses, set: &MeasurableSet, opts: &CertifyOptions) -> Outcome {
    let f = p.subject.model();
    let ratio = match empirical_ratio(f, set) {
        Ok(r) => r,
        Err(e) => return failed(Stage::Certification, e),
    };
    let gc = h.gevrey.expect("gevrey certificate resolved");
    if let Subject::Eigen { es, .. } = &p.subject {
        let gp = h.gamma.expect("eigen gamma resolved");
        return match certify_eigensum(es, set, &gp, p.radius, opts) {
            Ok(ec) => {
                let soundness = soundness_check(ec.certificate.constant, &ratio);
                Outcome::Certified {
                    eigen: Some(EigenSummary {
                        lambda: es.lambda,
                        m: es.m,
                        c_cal: gp.c_cal,
                        gamma: gp.gamma,
                        kappa: ec.kappa,
                        c2: ec.c2,
                        ln_shape_bound: ec.ln_shape_bound,
                    }),
                    certificate: Box::new(ec.certificate),
                    ratio,
                    soundness,
                }
            }
            Err(e) => failed(Stage::Eigensum, e),
        };
    }
    let result = match p.branch {
        BranchChoice::Ucp => certify_ucp(f, set, h.ucp.as_ref().expect("ucp resolved"), &gc, opts),
        BranchChoice::SigmaGt1 => certify_sigma_gt1(
            f,
            set,
            h.doubling.as_ref().expect("doubling resolved"),
            &gc,
            opts,
        ),
        _ => certify_sigma1(
            f,
            set,
            h.doubling.as_ref().expect("doubling resolved"),
            &gc,
            opts,
        ),
    };
    match result {
        Ok(c) => {
            let soundness = soundness_check(c.constant, &ratio);
            Outcome::Certified {
                certificate: Box::new(c),
                eigen: None,
                ratio,
                soundness,
            }
        }
        Err(e) => failed(Stage::Certification, e),
    }
}

fn evaluate_on(p: &Problem, h: &Hypotheses, n: usize) -> Outcome {
    let f = p.subject.model();
    let ratio = match empirical_ratio(f, &p.set) {
        Ok(r) => r,
        Err(e) => return failed(Stage::Certification, e),
    };
    let gc = h.gevrey.expect("gevrey certificate resolved");
    let result = match (p.branch, h.doubling.as_ref()) {
        (BranchChoice::SigmaGt1, Some(dc)) => evaluate_sigma_gt1_at(f, &p.set, dc, &gc, n, &p.options),
        (_, Some(dc)) => evaluate_sigma1_at(f, &p.set, dc, &gc, n, &p.options),
        (_, None) => Err(obscert::Error::InvalidArgument(
            "degree sweeps need a doubling certificate; the UCP degree is fixed by the construction".into(),
        )),
    };
    match result {
        Ok(ev) => {
            let soundness = soundness_check(ev.constant, &ratio);
            Outcome::Evaluated {
                evaluation: Box::new(ev),
                ratio,
                soundness,
            }
        }
        Err(e) => failed(Stage::Certification, e),
    }
}

fn base_report(p: &Problem, command: &'static str, h: &Hypotheses, entries: Vec<Entry>) -> Report {
    let function = match &p.subject {
        Subject::Model(m) => json(m),
        Subject::Eigen { es, .. } => json(es),
    };
    let grid = &p.grid;
    let mut report = Report {
        tool: format!("obscert {}", env!("CARGO_PKG_VERSION")),
        command,
        seed: p.config.seed,
        rng: Report::rng_name(),
        domain: p.config.domain.clone(),
        cells: (0..grid.dim()).map(|a| grid.cells(a)).collect(),
        function,
        set: SetSummary {
            label: p.set_label.clone(),
            cells: p.set.count(),
            measure: p.set.measure(),
            fraction: p.set.count() as f64 / grid.interior_count() as f64,
        },
        branch: p.branch,
        hypotheses: h.checks.clone(),
        summary: Summary::of(&entries),
        entries,
        family: None,
        diagnostics: h.diagnostics.clone(),
        exit_code: 0,
    };
    for e in &report.entries {
        if let Outcome::Failed { stage, error, .. } = &e.outcome {
            report
                .diagnostics
                .push(format!("{}: {stage}: {error}", e.label));
        }
        if let Some((ratio, s)) = e.outcome.verdict() {
            if !s.pass {
                report.diagnostics.push(format!(
                    "{}: unsound, certified constant below ratio {}",
                    e.label, ratio.ratio
                ));
            }
        }
    }
    report.exit_code = report.compute_exit_code();
    report
}

/// Verifies the hypotheses, certifies, and checks soundness.
pub fn cmd_certify(p: &Problem) -> Result<Output, CliError> {
    let h = resolve_hypotheses(p)?;
    let entries = if h.ok() {
        vec![Entry {
            label: p.set_label.clone(),
            axis: None,
            value: None,
            mask: None,
            outcome: certify_on(p, &h, &p.set, &p.options),
        }]
    } else {
        Vec::new()
    };
    Ok(Output {
        report: base_report(p, "certify", &h, entries),
        csv: None,
    })
}

/// Runs only the hypothesis checks of explicitly configured certificates.
pub fn cmd_verify(p: &Problem) -> Result<Output, CliError> {
    let f = p.subject.model();
    let mut h = Hypotheses::default();
    if let Some(g) = p.gevrey {
        check_gevrey(p, f, g, "given", &mut h)?;
    }
    if let Some(d) = p.doubling {
        check_doubling(p, f, d, "given", &mut h)?;
    }
    if let Some(u) = p.ucp_certificate() {
        check_ucp(p, f, u.map_err(hyp)?, "given", &mut h)?;
    }
    if h.checks.is_empty() {
        return Err(CliError::Config(
            "verify needs at least one explicit certificate".into(),
        ));
    }
    Ok(Output {
        report: base_report(p, "verify", &h, Vec::new()),
        csv: None,
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Output(e.to_string()))
}

fn mask_style(p: &Problem) -> MaskStyle {
    match &p.config.set {
        SetSpec::Random { style, .. } => *style,
        _ => MaskStyle::Blobs,
    }
}

fn mask_seed(p: &Problem) -> u64 {
    match &p.config.set {
        SetSpec::Random { seed: Some(s), .. } => *s,
        _ => p.config.seed,
    }
}

fn is_unit_torus(grid: &Grid) -> bool {
    let d = grid.domain();
    d.kind() == DomainKind::Torus && (0..d.dim()).all(|a| (d.extent(a) - 1.0).abs() < 1e-12)
}

/// Eigen-function family study: empirical doubling growth, calibration,
/// and certification on `masks` random sets per member.
fn family_sweep(
    p: &Problem,
    family: &[Vec<i64>],
    masks: usize,
    fraction: f64,
) -> Result<(FamilyStudy, Vec<Entry>), CliError> {
    if !is_unit_torus(&p.grid) {
        return Err(CliError::Config(
            "family sweeps run on the unit torus".into(),
        ));
    }
    let eig = |e| CliError::stage(Stage::Eigensum, e);
    let mut members: Vec<(String, EigenSum)> = family
        .iter()
        .map(|k| {
            let mode = obscert::functions::TrigTerm {
                freq: k.clone(),
                amplitude: 1.0,
                phase: 0.0,
            };
            build_eigensum(p.grid.dim(), &[mode], false)
                .map(|es| (format!("sin {k:?}"), es))
                .map_err(eig)
        })
        .collect::<Result<_, _>>()?;
    members.sort_by(|a, b| a.1.lambda.total_cmp(&b.1.lambda));
    let growth: Vec<GrowthMember> = members
        .iter()
        .map(|(l, es)| GrowthMember::from_eigensum(l.clone(), es))
        .collect();
    let study = doubling_growth_study(&growth, &p.grid, &p.radii(), &p.centers).map_err(eig)?;
    let c_cal = calibrate(&study);
    let style = mask_style(p);
    let seed = mask_seed(p);
    let sets: Vec<MeasurableSet> = (0..masks)
        .map(|j| {
            MeasurableSet::random(p.grid.clone(), fraction, seed.wrapping_add(j as u64), style)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::stage(Stage::Set, e))?;
    let jobs: Vec<(usize, usize)> = (0..members.len())
        .flat_map(|i| (0..masks).map(move |j| (i, j)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(i, j)| {
            let (label, es) = &members[i];
            let outcome = match gamma_params(es, c_cal) {
                Ok(gp) => {
                    let sub = Problem {
                        subject: Subject::Eigen {
                            es: es.clone(),
                            c_cal: Some(c_cal),
                        },
                        ..p.clone()
                    };
                    match resolve_for_member(&sub, gp) {
                        Ok(h) => certify_on(&sub, &h, &sets[j], &p.options),
                        Err(e) => failed(Stage::Hypotheses, e),
                    }
                }
                Err(e) => failed(Stage::Eigensum, e),
            };
            Entry {
                label: label.clone(),
                axis: Some("lambda"),
                value: Some(es.lambda),
                mask: Some(j),
                outcome,
            }
        })
        .collect();
    let slope_bounded = study.slope <= c_cal;
    Ok((
        FamilyStudy {
            study,
            c_cal,
            slope_bounded,
        },
        entries,
    ))
}

fn resolve_for_member(p: &Problem, gp: GammaParams) -> Result<Hypotheses, obscert::Error> {
    let f = p.subject.model();
    let sup = sup_norm(f, Region::Domain, &p.grid)?.value;
    Ok(Hypotheses {
        gevrey: Some(GevreyCertificate::from_envelope(
            f.envelope(p.grid.domain()),
            sup,
        )?),
        gamma: Some(gp),
        ..Hypotheses::default()
    })
}

/// One certification per sweep point. Row failures are recorded and the
/// run continues.
pub fn cmd_sweep(p: &Problem) -> Result<Output, CliError> {
    let sweep = p
        .config
        .sweep
        .clone()
        .ok_or_else(|| CliError::Config("sweep needs a [sweep] table".into()))?;
    let pool = pool(p.config.workers)?;
    pool.install(|| {
        let needs_hypotheses = !sweep.fractions.is_empty() || !sweep.degrees.is_empty();
        let h = if needs_hypotheses {
            resolve_hypotheses(p)?
        } else {
            Hypotheses::default()
        };
        let mut entries = Vec::new();
        if h.ok() {
            let style = mask_style(p);
            let seed = mask_seed(p);
            let grid: &Arc<Grid> = &p.grid;
            let rows: Vec<Entry> = sweep
                .fractions
                .par_iter()
                .map(|&fr| {
                    let outcome = match MeasurableSet::random(grid.clone(), fr, seed, style) {
                        Ok(set) => certify_on(p, &h, &set, &p.options),
                        Err(e) => failed(Stage::Set, e),
                    };
                    Entry {
                        label: format!("fraction {fr}"),
                        axis: Some("fraction"),
                        value: Some(fr),
                        mask: None,
                        outcome,
                    }
                })
                .collect();
            entries.extend(rows);
            let rows: Vec<Entry> = sweep
                .degrees
                .par_iter()
                .map(|&n| Entry {
                    label: format!("degree {n}"),
                    axis: Some("degree"),
                    value: Some(n as f64),
                    mask: None,
                    outcome: evaluate_on(p, &h, n),
                })
                .collect();
            entries.extend(rows);
        }
        let mut family = None;
        if !sweep.family.is_empty() && h.ok() {
            let (study, rows) = family_sweep(p, &sweep.family, sweep.masks, sweep.mask_fraction)?;
            family = Some(study);
            entries.extend(rows);
        }
        let csv = crate::report::to_csv(&entries).map_err(|e| CliError::Output(e.to_string()))?;
        let mut report = base_report(p, "sweep", &h, entries);
        report.family = family;
        Ok(Output {
            report,
            csv: Some(csv),
        })
    })
}
