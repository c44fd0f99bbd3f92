use std::sync::Arc;

use obscert::certify::{certify_sigma1, empirical_ratio, soundness_check, CertifyOptions};
use obscert::eigensum::{build_eigensum, eigen_identity_error, orthogonality_check};
use obscert::functions::{
    doubling_centers, doubling_radii, estimate_doubling, FunctionModel, GevreyCertificate, TrigTerm,
};
use obscert::geometry::IntervalSet;
use obscert::geometry::{cover_domain, densest_ball, Domain, Grid, MaskStyle, MeasurableSet};
use obscert::interp::{denominator_lower_bound, poly_sup_bound, separate_points, Interpolant};
use obscert::LogValue;
use proptest::prelude::*;

fn trig_terms(dim: usize) -> impl Strategy<Value = Vec<TrigTerm>> {
    prop::collection::vec(
        (
            prop::collection::vec(-3i64..=3, dim),
            0.2f64..2.0,
            0.0f64..std::f64::consts::TAU,
        ),
        1..=3,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(freq, amplitude, phase)| TrigTerm {
                freq,
                amplitude,
                phase,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pigeonhole_holds_on_random_masks(fraction in 0.01f64..0.6, seed in any::<u64>(), r in 0.03f64..0.4, torus in any::<bool>()) {
        let domain = if torus { Domain::torus(&[1.0, 1.0]) } else { Domain::rect(1.0, 1.0) };
        let grid = Arc::new(Grid::new(domain, &[48, 48]).unwrap());
        let set = MeasurableSet::random(grid.clone(), fraction, seed, MaskStyle::Bernoulli).unwrap();
        prop_assume!(set.count() > 0);
        let cover = cover_domain(&grid, r).unwrap();
        let dense = densest_ball(&set, &cover).unwrap();
        prop_assert!(dense.count * cover.len() >= set.count());
    }

    #[test]
    fn separated_nodes_respect_denominators(
        pieces in prop::collection::vec((0.0f64..1.0, 0.001f64..0.2), 1..6),
        n in 0usize..16,
    ) {
        let mut iv: Vec<(f64, f64)> = pieces.iter().map(|&(a, l)| (a, (a + l).min(1.0))).collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in iv {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let trace = IntervalSet::new(merged).unwrap();
        let nodes = separate_points(&trace, n).unwrap();
        let xs = nodes.nodes();
        prop_assert_eq!(xs.len(), n + 1);
        let lower = denominator_lower_bound(n, nodes.gap());
        for i in 0..=n {
            let ln: f64 = (0..=n).filter(|&j| j != i).map(|j| (xs[i] - xs[j]).abs().ln()).sum();
            prop_assert!(ln >= lower[i].ln() - 1e-9 * lower[i].ln().abs().max(1.0));
        }
        if n > 0 {
            let t_max = xs[n].max(1.0);
            let values: Vec<f64> = xs.iter().map(|x| (7.0 * x).cos()).collect();
            let bound = poly_sup_bound(n, t_max, nodes.gap(), 1.0).unwrap().bound;
            let p = Interpolant::new(&nodes, &values).unwrap();
            for k in 0..=64 {
                let t = t_max * k as f64 / 64.0;
                prop_assert!(LogValue::new(p.eval(t).abs()).ln() <= bound.ln() + 1e-9);
            }
        }
    }

    #[test]
    fn eigen_identity_and_orthogonality(terms in trig_terms(2)) {
        prop_assume!(terms.iter().all(|t| t.freq.iter().any(|&k| k != 0)));
        let Ok(es) = build_eigensum(2, &terms, false) else { return Ok(()) };
        prop_assert!(eigen_identity_error(&es, 200, 3) <= 1e-8);
        let grid = Grid::new(Domain::torus(&[1.0, 1.0]), &[16, 16]).unwrap();
        let rep = orthogonality_check(&es, &grid).unwrap();
        prop_assert!(rep.pass, "{:?}", rep);
    }

    #[test]
    fn log_values_match_floats(a in 1e-3f64..1e3, b in 1e-3f64..1e3, p in -3i64..4) {
        let (la, lb) = (LogValue::new(a), LogValue::new(b));
        prop_assert!(((la * lb).value() - a * b).abs() <= 1e-12 * a * b);
        prop_assert!((la.add(lb).value() - (a + b)).abs() <= 1e-12 * (a + b));
        prop_assert!((la.powi(p).value() - a.powi(p as i32)).abs() <= 1e-11 * a.powi(p as i32));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sigma1_certificates_are_sound(terms in trig_terms(1), fraction in 0.02f64..0.5, seed in any::<u64>(), torus in any::<bool>()) {
        prop_assume!(terms.iter().any(|t| t.freq[0] != 0));
        let domain = if torus { Domain::torus(&[1.0]) } else { Domain::interval(1.0) };
        let grid = Arc::new(Grid::new(domain, &[512]).unwrap());
        let f = FunctionModel::Trig { terms };
        let set = MeasurableSet::random(grid.clone(), fraction, seed, MaskStyle::Blobs).unwrap();
        let Ok(ratio) = empirical_ratio(&f, &set) else { return Ok(()) };
        let dr = estimate_doubling(&f, &grid, &doubling_radii(0.25), &doubling_centers(grid.domain(), 16)).unwrap();
        let Some(dc) = dr.certificate else { return Ok(()) };
        let gc = GevreyCertificate::from_envelope(f.envelope(grid.domain()), ratio.sup_omega).unwrap();
        let opts = CertifyOptions { search_width: 4, ..CertifyOptions::default() };
        let cert = certify_sigma1(&f, &set, &dc, &gc, &opts).unwrap();
        prop_assert!(soundness_check(cert.constant, &ratio).pass);
        prop_assert!(cert.trace_ok, "{:?}", cert.best.trace.failures().map(|s| &s.name).collect::<Vec<_>>());
    }
}
