use std::path::PathBuf;

use obscert_cli::report::Outcome;
use obscert_cli::{exit, run, Command, Output};

const HEADER: &str = "seed = 11\n[domain]\nkind = \"torus\"\nextent = [1.0]\ncells = [1024]\n";

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn go(command: Command, body: &str) -> Result<Output, obscert_cli::CliError> {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "run.toml", body);
    run(command, &path, None, None)
}

fn sine() -> String {
    format!("{HEADER}[function]\nkind = \"trig\"\nterms = [{{ freq = [1], amplitude = 1.0 }}]\n")
}

#[test]
fn constant_function_is_sound() {
    let body = "[domain]\nkind = \"box\"\nextent = [1.0]\ncells = [512]\n\
                [function]\nkind = \"polynomial\"\nterms = [{ powers = [0], coefficient = 2.0 }]\n";
    let out = go(Command::Certify, body).unwrap();
    assert_eq!(out.report.exit_code, exit::OK);
    let Outcome::Certified {
        certificate,
        soundness,
        ..
    } = &out.report.entries[0].outcome
    else {
        panic!()
    };
    assert!(certificate.constant.ln() >= 0.0);
    assert!(soundness.pass);
}

#[test]
fn sine_certify_reports_constant_ratio_and_slack() {
    let body = format!("{}[set]\nkind = \"random\"\nfraction = 0.1\n", sine());
    let out = go(Command::Certify, &body).unwrap();
    assert_eq!(
        out.report.exit_code,
        exit::OK,
        "{:?}",
        out.report.diagnostics
    );
    let Outcome::Certified {
        certificate,
        ratio,
        soundness,
        ..
    } = &out.report.entries[0].outcome
    else {
        panic!()
    };
    assert!(certificate.constant.ln() >= ratio.ratio.ln());
    assert!(soundness.slack >= 0.0);
    assert!(certificate.trace_ok);
    assert!(out.report.hypotheses.iter().all(|c| c.pass));
}

#[test]
fn ucp_outside_range_is_a_hypothesis_failure() {
    let body = format!(
        "{}[hypotheses]\nbranch = \"ucp\"\ngevrey = {{ m = 1.0, delta = 0.159, sigma = 2.0 }}\nucp = {{ a = 1.0, b = 1.0, r0 = 0.25 }}\n",
        sine()
    );
    let out = go(Command::Certify, &body).unwrap();
    assert_eq!(out.report.exit_code, exit::HYPOTHESIS);
    assert!(matches!(
        out.report.entries[0].outcome,
        Outcome::Failed {
            exit_code: exit::HYPOTHESIS,
            ..
        }
    ));
}

#[test]
fn fraction_sweep_has_monotone_ratio() {
    let body = format!(
        "{}[sweep]\nfractions = [0.5, 0.25, 0.125, 0.0625, 0.03125]\n",
        sine()
    );
    let out = go(Command::Sweep, &body).unwrap();
    assert_eq!(out.report.exit_code, exit::OK);
    let ratios: Vec<f64> = out
        .report
        .entries
        .iter()
        .map(|e| e.outcome.verdict().unwrap().0.ratio)
        .collect();
    assert!(ratios.windows(2).all(|w| w[1] >= w[0]), "{ratios:?}");
    let csv = out.csv.unwrap();
    assert!(csv.starts_with("axis,value,label,mask,c,log10_c,ratio,slack,n,r,sound,error\n"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn degree_sweep_records_every_degree() {
    let body = format!("{}[sweep]\ndegrees = [2, 3, 4, 5, 6, 8]\n", sine());
    let out = go(Command::Sweep, &body).unwrap();
    let logs: Vec<Option<f64>> = out
        .report
        .entries
        .iter()
        .map(|e| e.outcome.constant().map(|c| c.0.ln()))
        .collect();
    assert_eq!(logs.len(), 6);
    assert!(logs.iter().flatten().count() >= 4);
    assert!(out.report.summary.all_sound);
}

#[test]
fn empty_sweep_is_a_config_error() {
    let err = go(Command::Sweep, &format!("{}[sweep]\n", sine())).unwrap_err();
    assert_eq!(err.exit_code(), exit::CONFIG);
}

#[test]
fn config_errors() {
    let no_function = HEADER.to_string();
    assert_eq!(
        go(Command::Certify, &no_function).unwrap_err().exit_code(),
        exit::CONFIG
    );
    let unknown = format!("bogus = 1\n{}", sine());
    assert_eq!(
        go(Command::Certify, &unknown).unwrap_err().exit_code(),
        exit::CONFIG
    );
    let typo = format!("{}amplitud = 1\n", sine());
    assert_eq!(
        go(Command::Certify, &typo).unwrap_err().exit_code(),
        exit::CONFIG
    );
    let bad_branch = format!("{}[hypotheses]\nbranch = \"sigma-gt1\"\n", sine());
    assert_eq!(
        go(Command::Certify, &bad_branch).unwrap_err().exit_code(),
        exit::CONFIG
    );
}

#[test]
fn verify_examples() {
    let good = format!(
        "{}[hypotheses]\ngevrey = {{ m = 1.0, delta = 0.159154943 }}\n",
        sine()
    );
    let out = go(Command::Verify, &good).unwrap();
    assert_eq!(out.report.exit_code, exit::OK);

    let bad = format!(
        "{}[hypotheses]\ngevrey = {{ m = 1.0, delta = 0.3 }}\n",
        sine()
    );
    let out = go(Command::Verify, &bad).unwrap();
    assert_eq!(out.report.exit_code, exit::HYPOTHESIS);
    assert!(
        out.report.diagnostics.iter().any(|d| d.contains("k = ")),
        "{:?}",
        out.report.diagnostics
    );

    let constant = "[domain]\nkind = \"box\"\nextent = [1.0]\ncells = [256]\n\
                    [function]\nkind = \"polynomial\"\nterms = [{ powers = [0], coefficient = 1.0 }]\n\
                    [hypotheses]\ngevrey = { m = 3.0, delta = 0.5 }\n";
    assert_eq!(
        go(Command::Verify, constant).unwrap().report.exit_code,
        exit::OK
    );

    assert_eq!(
        go(Command::Verify, &sine()).unwrap_err().exit_code(),
        exit::CONFIG
    );
}

#[test]
fn eigensum_certify() {
    let body = format!(
        "{}[eigensum]\nmodes = [{{ freq = [1], amplitude = 1.0 }}, {{ freq = [2], amplitude = 0.5 }}]\n",
        HEADER
    );
    let out = go(Command::Certify, &body).unwrap();
    assert_eq!(
        out.report.exit_code,
        exit::OK,
        "{:?}",
        out.report.diagnostics
    );
    let Outcome::Certified { eigen: Some(e), .. } = &out.report.entries[0].outcome else {
        panic!()
    };
    assert_eq!(e.m, 2);
    assert!(e.c_cal >= 1.0);
}

#[test]
fn mask_file_sets() {
    use std::sync::Arc;

    use obscert::geometry::{Domain, Grid, MaskStyle, MeasurableSet};
    let dir = tempfile::tempdir().unwrap();
    let grid = Arc::new(Grid::new(Domain::torus(&[1.0]), &[1024]).unwrap());
    let set = MeasurableSet::random(grid, 0.2, 5, MaskStyle::Bernoulli).unwrap();
    write(&dir, "e.pbm", &set.to_raster());
    let path = write(
        &dir,
        "run.toml",
        &format!("{}[set]\nkind = \"mask\"\npath = \"e.pbm\"\n", sine()),
    );
    let out = run(Command::Certify, &path, None, None).unwrap();
    assert_eq!(out.report.set.cells, set.count());
    assert_eq!(out.report.exit_code, exit::OK);
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let body = format!("{}[sweep]\nfractions = [0.3, 0.1]\ndegrees = [4]\n", sine());
    let a = go(Command::Sweep, &body).unwrap();
    let b = go(Command::Sweep, &body).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    assert_eq!(a.csv, b.csv);

    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "run.toml", &body);
    let c = run(Command::Sweep, &path, Some(12), None).unwrap();
    assert_eq!(c.report.seed, 12);
    assert_ne!(a.report.to_json(), c.report.to_json());
}
