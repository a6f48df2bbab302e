//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Run with `cargo test -p fractal-ids --test acceptance -- --nocapture` to
//! see the per-criterion summary lines.

mod common;

use std::time::Instant;

use fractal_ids::bernstein::{low_energy_exponent, BernsteinFunction};
use fractal_ids::environment::sample_configuration;
use fractal_ids::geometry::build_graph;
use fractal_ids::ids::{laplace_exponent_fit, lifshitz_fit_curve, IdsCurve, LaplaceCurve};
use fractal_ids::labeling::{
    build_projection, construct_good_labeling, fold_kernel, verify_good_labeling,
};
use fractal_ids::pipeline::{cmd_fit, cmd_ids, cmd_verify, RunContext};
use fractal_ids::spectral::{
    eigen_decompose, eigen_lowest, eigen_spectrum, estimate_time_scaling, neumann_laplacian,
    renormalize_spectrum, subordinate_spectrum, WalkKernel,
};

use common::{config_from, gasket, gasket_config_json, scratch};

type PointwiseReference = Box<dyn Fn(f64) -> f64>;

const FULL_T_GRID: &str = r#"{"start": 1.0, "stop": 1000.0, "per_decade": 8}"#;

#[test]
fn criterion_1_geometry_and_labeling() {
    let start = Instant::now();
    let sys = gasket();

    // exact vertex counts over five window sizes
    for window in 1..=5i32 {
        let graph = build_graph(&sys, window, 0, 1 << 20).unwrap();
        let expect = 3 * (3usize.pow(window as u32) + 1) / 2;
        assert_eq!(graph.vertex_count(), expect, "window {window}");
    }

    // labeling exists and an exhaustive re-verification over the order-3
    // region is clean
    let labeling = construct_good_labeling(&sys, 0, 3).unwrap();
    let report = verify_good_labeling(&labeling);
    assert!(report.is_clean());
    assert_eq!(report.cells_checked, 27);
    assert_eq!(report.violations.len(), 0);

    // metric axioms on random triples
    use rand::Rng;
    use rand::SeedableRng;
    let graph = build_graph(&sys, 3, 0, 1 << 20).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let n = graph.vertex_count();
    for _ in 0..10_000 {
        let (a, b, c) = (
            rng.random_range(0..n),
            rng.random_range(0..n),
            rng.random_range(0..n),
        );
        let dab = graph.graph_distance(a, b).unwrap();
        assert_eq!(dab, graph.graph_distance(b, a).unwrap());
        assert_eq!(dab == 0, a == b);
        assert!(dab <= graph.graph_distance(a, c).unwrap() + graph.graph_distance(c, b).unwrap());
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 10, "runtime {elapsed:?}");
    println!(
        "[PASS] criterion 1: vertex counts exact for M=1..5, labeling clean over 27 cells, metric axioms on 10^4 triples ({elapsed:?})"
    );
}

#[test]
fn criterion_2_folding() {
    let sys = gasket();
    for window in 1..=3i32 {
        let pm = build_projection(&sys, window, 0, 1, 1 << 20).unwrap();
        let folded = fold_kernel(&WalkKernel::from_graph(&pm.ambient), &pm).unwrap();
        assert!(
            folded.max_row_defect() < 1e-12,
            "window {window}: row defect {}",
            folded.max_row_defect()
        );
        assert!(
            folded.reversibility_defect() < 1e-12,
            "window {window}: reversibility defect {}",
            folded.reversibility_defect()
        );
        assert!(
            pm.projection_well_defined(),
            "window {window}: projection images disagree at a shared vertex"
        );
    }
    println!(
        "[PASS] criterion 2: folded kernels stochastic and reversible to 1e-12 for M=1..3, projection image independent of the incident cell at every vertex"
    );
}

#[test]
fn criterion_3_spectral_scaling() {
    let start = Instant::now();
    let sys = gasket();

    let ts = estimate_time_scaling(&sys, &[1, 2, 3, 4], 0.05, 1 << 20).unwrap();
    assert!(
        ts.tau > 4.95 && ts.tau < 5.05,
        "time-scaling estimate {}",
        ts.tau
    );

    // second-eigenvalue ratio across windows tracks the scaling factor
    let mu2 = |window: i32| {
        let pm = build_projection(&sys, window, 0, 1, 1 << 20).unwrap();
        eigen_lowest(&neumann_laplacian(&pm).unwrap(), 2).unwrap()[1]
    };
    for window in 2..=3i32 {
        let ratio = mu2(window + 1) / mu2(window) * ts.tau;
        assert!(
            (ratio - 1.0).abs() < 0.05,
            "window {window}: scaled ratio {ratio}"
        );
    }

    // simple zero mode with constant eigenvector
    let pm = build_projection(&sys, 3, 0, 1, 1 << 20).unwrap();
    let op = neumann_laplacian(&pm).unwrap();
    let pairs = eigen_decompose(&op).unwrap();
    assert!(pairs.values[0].abs() < 1e-10);
    assert!(pairs.values[1] > 1e-3, "zero mode must be simple");
    let ground = pairs.vectors.column(0);
    let scale = ground[0] / op.weights[0].sqrt();
    for i in 0..op.n {
        assert!(
            (ground[i] / op.weights[i].sqrt() - scale).abs() < 1e-8,
            "ground state deviates from the constant at vertex {i}"
        );
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "runtime {elapsed:?}");
    println!(
        "[PASS] criterion 3: tau = {:.4} in [4.95, 5.05], window scaling within 5%, simple constant zero mode ({elapsed:?})",
        ts.tau
    );
}

#[test]
fn criterion_4_subordination() {
    let sys = gasket();
    let ts = estimate_time_scaling(&sys, &[1, 2, 3, 4], 0.05, 1 << 20).unwrap();
    let dw = ts.walk_dim;
    let pm = build_projection(&sys, 2, 0, 1, 1 << 20).unwrap();
    let rec = eigen_spectrum(&neumann_laplacian(&pm).unwrap()).unwrap();
    let rec = renormalize_spectrum(&rec, ts.tau, 0);

    let catalog: Vec<(BernsteinFunction, PointwiseReference)> = vec![
        (BernsteinFunction::Identity, Box::new(|x: f64| x)),
        (
            BernsteinFunction::Stable { exponent: 0.5 },
            Box::new(|x: f64| x.sqrt()),
        ),
        (
            BernsteinFunction::Relativistic {
                ratio: 0.5,
                mass: 1.0,
            },
            Box::new(|x: f64| {
                if x == 0.0 {
                    0.0
                } else {
                    (x + 1.0).sqrt() - 1.0
                }
            }),
        ),
        (
            BernsteinFunction::Mixture {
                components: vec![
                    BernsteinFunction::Stable { exponent: 0.5 },
                    BernsteinFunction::Identity,
                ],
            },
            Box::new(|x: f64| x.sqrt() + x),
        ),
    ];
    for (phi, reference) in &catalog {
        let sub = subordinate_spectrum(&rec, phi).unwrap();
        let lambda = sub.lambda.as_ref().unwrap();
        for (k, (&l, &m)) in lambda.iter().zip(&rec.mu).enumerate() {
            assert!(
                (l - reference(m.max(0.0))).abs() < 1e-12,
                "{}: entry {k}",
                phi.descriptor()
            );
        }
    }

    // low-energy exponents
    let est = low_energy_exponent(&BernsteinFunction::Identity, dw, 1e-2).unwrap();
    assert!((est.alpha / dw - 1.0).abs() < 0.01);
    let est = low_energy_exponent(
        &BernsteinFunction::Relativistic {
            ratio: 0.5,
            mass: 1.0,
        },
        dw,
        1e-2,
    )
    .unwrap();
    assert!((est.alpha / dw - 1.0).abs() < 0.01);
    let est = low_energy_exponent(&BernsteinFunction::Stable { exponent: 0.5 }, dw, 1e-2).unwrap();
    assert!((est.alpha - 0.5 * dw).abs() < 1e-9);

    println!(
        "[PASS] criterion 4: entrywise subordination to 1e-12 for identity/stable/relativistic/mixture, low-energy exponents recovered"
    );
}

#[test]
fn criterion_5_bound_suite() {
    let start = Instant::now();
    let dir = scratch("crit5");
    let json = gasket_config_json(
        r#"{"family": "identity"}"#,
        "[2, 3, 4]",
        50,
        "[1.0]",
        FULL_T_GRID,
        &dir,
    );
    let ctx = RunContext::new(config_from(&json)).unwrap();
    let report = cmd_verify(&ctx).expect("bound suite passes");

    assert_eq!(report.temple_instances, 500);
    assert_eq!(report.temple_violations, 0);
    assert_eq!(report.lemma33_samples, 100);
    assert_eq!(report.lemma33_violations, 0);
    let lemma34 = report.lemma34.as_ref().unwrap();
    assert_eq!(lemma34.in_event + lemma34.excluded, 100);
    assert!(lemma34.all_pass());
    assert_eq!(report.binomial_violations, 0);
    assert_eq!(report.domination_violations, 0);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 300, "runtime {elapsed:?}");
    std::fs::remove_dir_all(&dir).ok();
    println!(
        "[PASS] criterion 5: Temple sound on 500 instances, bracket bounds hold on 100 samples (event size {}), binomial dominance clean, domination chain intact ({elapsed:?})",
        lemma34.in_event
    );
}

#[test]
fn criterion_6_environment_statistics() {
    // vacancy frequency of one cell at unit intensity
    let sys = gasket();
    let samples = 10_000usize;
    let mut empty = 0usize;
    for s in 0..samples {
        let cfg = sample_configuration(&sys, 1.0, 2, 0, 40_000 + s as u64, 1 << 20).unwrap();
        if cfg.counts[4] == 0 {
            empty += 1;
        }
    }
    let p = (-1.0f64).exp();
    let sigma = (p * (1.0 - p) / samples as f64).sqrt();
    let freq = empty as f64 / samples as f64;
    assert!(
        (freq - p).abs() < 3.0 * sigma,
        "vacancy frequency {freq} vs {p} +- {sigma}"
    );

    // byte-identical artifacts across two runs of the same experiment
    let collect = |tag: &str| -> Vec<(String, String)> {
        let dir = scratch(tag);
        let json = gasket_config_json(
            r#"{"family": "identity"}"#,
            "[2]",
            10,
            "[1.0]",
            r#"{"points": [1.0, 5.0, 25.0]}"#,
            &dir,
        );
        let ctx = RunContext::new(config_from(&json)).unwrap();
        cmd_ids(&ctx).unwrap();
        let mut files = Vec::new();
        let curves = ctx.out_root.join("curves");
        let mut names: Vec<_> = std::fs::read_dir(curves)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        for path in names {
            files.push((
                path.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&path).unwrap(),
            ));
        }
        std::fs::remove_dir_all(&dir).ok();
        files
    };
    let a = collect("crit6a");
    let b = collect("crit6b");
    assert_eq!(a.len(), b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(&b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "artifact {name_a} differs between runs");
    }

    println!(
        "[PASS] criterion 6: vacancy frequency {freq:.5} within 3 sigma of exp(-1), artifacts byte-identical across repeated runs"
    );
}

#[test]
fn criterion_7_ids_convergence_diagnostics() {
    let start = Instant::now();
    for (phi, name) in [
        (r#"{"family": "identity"}"#, "identity"),
        (r#"{"family": "stable", "exponent": 0.5}"#, "stable-1/2"),
    ] {
        let dir = scratch(&format!("crit7-{name}"));
        let json = gasket_config_json(
            phi,
            "[2, 3, 4]",
            50,
            "[1.0]",
            r#"{"points": [1.0, 5.0, 25.0]}"#,
            &dir,
        );
        let ctx = RunContext::new(config_from(&json)).unwrap();
        let outcome = cmd_ids(&ctx).unwrap();
        let (_, diag) = &outcome.diagnostics[0];
        assert!(
            diag.monotonicity.violations.is_empty(),
            "{name}: {:?}",
            diag.monotonicity.violations
        );
        assert!(diag.monotonicity.comparisons >= 6);

        // the killed/reflected gap at t = 1 shrinks from M = 2 to M = 4
        let gap_at = |window: i32| {
            diag.dn_gap
                .entries
                .iter()
                .find(|e| e.window == window && (e.t - 1.0).abs() < 1e-12)
                .unwrap()
        };
        let first = gap_at(2);
        let last = gap_at(4);
        let slack = 2.0 * (first.sem.powi(2) + last.sem.powi(2)).sqrt();
        assert!(
            last.gap <= first.gap + slack,
            "{name}: gap grew from {} to {}",
            first.gap,
            last.gap
        );
        std::fs::remove_dir_all(&dir).ok();
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 900, "runtime {elapsed:?}");
    println!(
        "[PASS] criterion 7: annealed Laplace curves nonincreasing in M within 2 sigma at t = 1, 5, 25; killed/reflected gap shrinks from M=2 to M=4 ({elapsed:?})"
    );
}

#[test]
fn criterion_8_lifshitz_exponents() {
    let start = Instant::now();
    let mut lines = Vec::new();
    for (phi, name) in [
        (r#"{"family": "identity"}"#, "identity"),
        (r#"{"family": "stable", "exponent": 0.5}"#, "stable-1/2"),
    ] {
        let dir = scratch(&format!("crit8-{name}"));
        let json = gasket_config_json(phi, "[2, 3, 4]", 100, "[1.0, 4.0]", FULL_T_GRID, &dir);
        let ctx = RunContext::new(config_from(&json)).unwrap();

        // (a) + (b): exponent fits at the top window, unit intensity
        let fit_outcome = cmd_fit(&ctx).unwrap();
        let unit = fit_outcome
            .fits
            .iter()
            .find(|f| f.nu == 1.0)
            .expect("unit-intensity fit");
        let lifshitz_dev = unit.lifshitz.exponent / unit.lifshitz_target - 1.0;
        assert!(
            lifshitz_dev.abs() <= 0.25,
            "{name}: low-energy slope {} vs target {} ({:+.1}%)",
            unit.lifshitz.exponent,
            unit.lifshitz_target,
            lifshitz_dev * 100.0
        );
        let laplace_dev = unit.laplace.exponent / unit.laplace_target - 1.0;
        assert!(
            laplace_dev.abs() <= 0.25,
            "{name}: long-time slope {} vs target {} ({:+.1}%)",
            unit.laplace.exponent,
            unit.laplace_target,
            laplace_dev * 100.0
        );

        // (d) intensity scaling of the stretched-exponential prefactor
        let scaling = fit_outcome.nu_scaling.as_ref().expect("two intensities");
        let ratio_dev = scaling.prefactor_ratio / scaling.expected_ratio - 1.0;
        assert!(
            ratio_dev.abs() <= 0.20,
            "{name}: prefactor ratio {} vs {} ({:+.1}%)",
            scaling.prefactor_ratio,
            scaling.expected_ratio,
            ratio_dev * 100.0
        );

        // (c) measured annealed curve dominates the vacancy lower bound
        let verify = cmd_verify(&ctx).expect("verify suite");
        assert!(verify.vacancy_checked > 0);
        assert_eq!(
            verify.vacancy_violations, 0,
            "{name}: vacancy bound violated"
        );

        lines.push(format!(
            "{name}: lifshitz {:+.1}%, laplace {:+.1}%, nu-ratio {:+.1}%, vacancy 0/{} violations",
            lifshitz_dev * 100.0,
            laplace_dev * 100.0,
            ratio_dev * 100.0,
            verify.vacancy_checked
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 3600, "runtime {elapsed:?}");
    println!(
        "[PASS] criterion 8: {} | {} ({elapsed:?})",
        lines[0], lines[1]
    );
}

#[test]
fn criterion_9_fit_self_tests() {
    let sys = gasket();
    let d = sys.dim();
    let ts = estimate_time_scaling(&sys, &[1, 2, 3, 4], 0.05, 1 << 20).unwrap();
    let alpha = ts.walk_dim;

    // counting-function side: Lambda(l) = exp(-l^(-d/alpha))
    let q = d / alpha;
    let lambda: Vec<f64> = (0..240).map(|i| 0.02 * 1.04f64.powi(i)).collect();
    let mean: Vec<f64> = lambda.iter().map(|&l| (-(l.powf(-q))).exp()).collect();
    let curve = IdsCurve {
        sem: vec![0.0; lambda.len()],
        lambda,
        mean,
    };
    let fit = lifshitz_fit_curve(&curve, None).unwrap();
    assert!(
        (fit.exponent + q).abs() < 1e-6,
        "synthetic low-energy slope {} vs {}",
        fit.exponent,
        -q
    );

    // Laplace side: L(t) = exp(-c t^(d/(d+alpha)))
    let theta = d / (d + alpha);
    let c = 0.7;
    let t: Vec<f64> = (0..100).map(|i| 10.0 * 1.06f64.powi(i)).collect();
    let mean: Vec<f64> = t.iter().map(|&t| (-c * t.powf(theta)).exp()).collect();
    let curve = LaplaceCurve {
        sem: vec![0.0; t.len()],
        t,
        mean,
    };
    let fit = laplace_exponent_fit(&curve, None).unwrap();
    assert!(
        (fit.exponent - theta).abs() < 1e-6,
        "synthetic long-time slope {} vs {theta}",
        fit.exponent
    );
    assert!((fit.prefactor - c).abs() < 1e-6);

    println!(
        "[PASS] criterion 9: synthetic counting and Laplace curves recover their exponents to 1e-6"
    );
}
