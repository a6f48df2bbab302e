//! Shared helpers for the integration suites: an independent dense
//! eigensolver (cyclic Jacobi) used as an oracle against the production
//! solver, and config builders.

// each test target uses a subset of these helpers
#![allow(dead_code)]

use std::sync::Arc;

use fractal_ids::config::ExperimentConfig;
use fractal_ids::geometry::{build_fractal_system, FractalSystem, SimilitudeSystem};

/// Cyclic Jacobi eigenvalues of a symmetric matrix; independent of the
/// production eigensolver path.
pub fn jacobi_eigenvalues(matrix: &[f64], n: usize) -> Vec<f64> {
    let mut a = matrix.to_vec();
    let idx = |i: usize, j: usize| i * n + j;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[idx(i, j)] * a[idx(i, j)];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[idx(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[idx(q, q)] - a[idx(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = c * akp - s * akq;
                    a[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = c * apk - s * aqk;
                    a[idx(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut vals: Vec<f64> = (0..n).map(|i| a[idx(i, i)]).collect();
    vals.sort_by(|x, y| x.partial_cmp(y).unwrap());
    vals
}

pub fn gasket() -> Arc<FractalSystem> {
    Arc::new(build_fractal_system(SimilitudeSystem::sierpinski_gasket(), 2).unwrap())
}

/// Scratch directory unique to the calling test.
pub fn scratch(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("fractal-ids-test-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn gasket_config_json(
    phi: &str,
    windows: &str,
    samples: usize,
    intensities: &str,
    t_grid: &str,
    out: &std::path::Path,
) -> String {
    format!(
        r#"{{
        "fractal": {{"builtin": "sierpinski-gasket"}},
        "windows": {windows},
        "resolution": 0,
        "phi": {phi},
        "profile": {{"kind": "indicator", "amplitude": 1.0, "support_scale": 0}},
        "intensities": {intensities},
        "samples": {samples},
        "seed": 7,
        "t_grid": {t_grid},
        "output_dir": "{}",
        "cache_dir": "{}"
    }}"#,
        out.join("out").display(),
        out.join("cache").display()
    )
}

pub fn config_from(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).expect("test config parses")
}
