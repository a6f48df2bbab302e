//! End-to-end pipeline behaviour: artifact shapes, the spectrum cache, and
//! stage reports.

mod common;

use fractal_ids::pipeline::{cmd_fractal, cmd_label, cmd_spectrum, RunContext};

use common::{config_from, gasket_config_json, scratch};

fn context(tag: &str, phi: &str) -> (RunContext, std::path::PathBuf) {
    let dir = scratch(tag);
    let json = gasket_config_json(
        phi,
        "[2, 3]",
        5,
        "[1.0]",
        r#"{"points": [1.0, 5.0, 25.0]}"#,
        &dir,
    );
    (RunContext::new(config_from(&json)).unwrap(), dir)
}

#[test]
fn graph_export_rows_match_vertex_counts() {
    let (ctx, dir) = context("geom", r#"{"family": "identity"}"#);
    let report = cmd_fractal(&ctx).unwrap();
    for &(window, count) in &report.vertex_counts {
        let csv = std::fs::read_to_string(
            ctx.out_root
                .join(format!("geometry/vertices_M{window}.csv")),
        )
        .unwrap();
        assert_eq!(csv.lines().count(), count + 1);
    }
    assert!((report.hausdorff_dim - 1.58496).abs() < 1e-5);
    // manifest records the stage
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ctx.out_root.join("manifest.json")).unwrap())
            .unwrap();
    assert!(manifest["stages"]["fractal"]["millis"].is_number());
    assert_eq!(
        manifest["config_hash"].as_str().unwrap(),
        ctx.config.canonical_hash()
    );
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn labeling_stage_writes_reproducible_artifacts() {
    let (ctx, dir) = context("label", r#"{"family": "identity"}"#);
    cmd_label(&ctx).unwrap();
    let first = std::fs::read_to_string(ctx.out_root.join("label/labeling.csv")).unwrap();
    cmd_label(&ctx).unwrap();
    let second = std::fs::read_to_string(ctx.out_root.join("label/labeling.csv")).unwrap();
    assert_eq!(first, second);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn spectrum_cache_serves_warm_runs_and_detects_corruption() {
    let (ctx, dir) = context("cache", r#"{"family": "stable", "exponent": 0.5}"#);
    let cold = cmd_spectrum(&ctx).unwrap();
    assert_eq!(cold.cache_hits, 0);
    assert_eq!(cold.computed, 4); // two windows, two boundaries
    let cold_csv = std::fs::read_to_string(ctx.out_root.join("spectra/N_M2.csv")).unwrap();

    let warm = cmd_spectrum(&ctx).unwrap();
    assert_eq!(warm.cache_hits, 4);
    assert_eq!(warm.computed, 0);
    let warm_csv = std::fs::read_to_string(ctx.out_root.join("spectra/N_M2.csv")).unwrap();
    assert_eq!(cold_csv, warm_csv);

    // corrupt one cache payload: the entry is recomputed, not trusted
    let key = &warm.entries[0];
    let cache_file = ctx.config.cache_root().join(format!("{key}.csv"));
    std::fs::write(&cache_file, "index,mu,lambda\n1,0.5,0.5\n").unwrap();
    let healed = cmd_spectrum(&ctx).unwrap();
    assert_eq!(healed.computed, 1);
    assert_eq!(healed.cache_hits, 3);

    // a different exponent must produce different cache keys
    let (ctx_id, dir_id) = context("cache-id", r#"{"family": "identity"}"#);
    let other = cmd_spectrum(&ctx_id).unwrap();
    for key in &other.entries {
        assert!(!warm.entries.contains(key), "cache key reused across phi");
    }
    std::fs::remove_dir_all(dir).ok();
    std::fs::remove_dir_all(dir_id).ok();
}

#[test]
fn spectra_artifacts_have_expected_shape() {
    let (ctx, dir) = context("spectra", r#"{"family": "identity"}"#);
    let report = cmd_spectrum(&ctx).unwrap();
    assert!((report.tau - 4.9711).abs() < 1e-3);
    let csv = std::fs::read_to_string(ctx.out_root.join("spectra/N_M2.csv")).unwrap();
    assert!(csv.starts_with("index,mu,lambda\n"));
    assert_eq!(csv.lines().count(), 15 + 1);
    let sidecar: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(ctx.out_root.join("spectra/N_M2.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(sidecar["meta"]["window"], 2);
    assert_eq!(sidecar["meta"]["boundary"], "Neumann");
    std::fs::remove_dir_all(dir).ok();
}
