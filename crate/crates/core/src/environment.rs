//! Poisson environments on window grids: sampled configurations, single-site
//! profiles, periodized potentials, and the occupancy (alloy) reduction.
//!
//! Points are never represented by coordinates. A configuration stores
//! Poisson counts per cell at a chosen resolution `r`, and every profile in
//! the catalog reads a point only through its cell ancestry at scales at or
//! above `r` — this makes sampling of the uniform measure exact and keeps
//! all potential evaluations combinatorial.
//!
//! Cell indices double as base-N words (coarsest digit first), so the
//! ancestor of cell `i` found `t` levels up is simply `i / N^t`.

use rand::SeedableRng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    enumerate_cells, grid_key, ApproxGraph, FractalSystem, GeometryError, GridKey,
};
use crate::labeling::ProjectionMap;
use crate::vec2::Mat2;

#[derive(Debug, Error)]
pub enum EnvironmentError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Labeling(#[from] Box<crate::labeling::LabelingError>),
    #[error("resolution mismatch: {0}")]
    ResolutionMismatch(String),
    #[error("profile support scale {support} reaches the window scale {window}")]
    SupportExceedsWindow { support: i32, window: i32 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("configuration budget exceeded: {needed} cells > {cap}")]
    ResourceLimit { needed: usize, cap: usize },
    #[error("diminished amplitude factor {factor} is not below one; enlarge the window")]
    AmplitudeTooLarge { factor: f64 },
}

/// Poisson counts per cell of the window at resolution `r`.
///
/// Counts over disjoint cells are independent `Poisson(nu * N^r)`; the layout
/// follows the lexicographic cell enumeration.
#[derive(Clone, Debug, PartialEq)]
pub struct PoissonConfiguration {
    pub intensity: f64,
    pub window: i32,
    pub resolution: i32,
    pub maps: usize,
    pub seed: u64,
    pub counts: Vec<u32>,
}

impl PoissonConfiguration {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    /// Superposition of two independent configurations on the same grid.
    pub fn merge(&self, other: &PoissonConfiguration) -> PoissonConfiguration {
        assert_eq!(self.counts.len(), other.counts.len());
        let mut out = self.clone();
        out.intensity += other.intensity;
        for (c, o) in out.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        out
    }

    /// `cell_word,count` rows over every cell.
    pub fn csv(&self, system: &FractalSystem) -> String {
        let cells = enumerate_cells(system, self.window, self.resolution)
            .expect("configuration scales are valid");
        let mut out = String::from("cell_word,count\n");
        for (cell, &count) in cells.iter().zip(&self.counts) {
            out.push_str(&format!("{},{}\n", cell.word_string(), count));
        }
        out
    }
}

/// Draws per-cell counts at resolution `r`; deterministic in the seed.
pub fn sample_configuration(
    system: &FractalSystem,
    intensity: f64,
    window: i32,
    resolution: i32,
    seed: u64,
    max_cells: usize,
) -> Result<PoissonConfiguration, EnvironmentError> {
    if intensity <= 0.0 {
        return Err(EnvironmentError::InvalidProfile(format!(
            "intensity must be positive, got {intensity}"
        )));
    }
    if resolution > window {
        return Err(GeometryError::ScaleOrderViolation { window, resolution }.into());
    }
    let n = system.map_count();
    let depth = (window - resolution) as u32;
    let cells = n.checked_pow(depth).filter(|&c| c <= max_cells).ok_or(
        EnvironmentError::ResourceLimit {
            needed: usize::MAX,
            cap: max_cells,
        },
    )?;
    let mean = intensity * (n as f64).powi(resolution);
    let poisson = rand_distr::Poisson::new(mean).map_err(|e| {
        EnvironmentError::InvalidProfile(format!("invalid poisson mean {mean}: {e}"))
    })?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let counts: Vec<u32> = (0..cells)
        .map(|_| poisson.sample(&mut rng) as u32)
        .collect();
    Ok(PoissonConfiguration {
        intensity,
        window,
        resolution,
        maps: n,
        seed,
        counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rung {
    pub scale: i32,
    pub amplitude: f64,
}

/// Single-site profile: the influence of one point on its surroundings,
/// expressed through chain distances at fixed scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SingleSiteProfile {
    /// `W(x, y) = amplitude` when `d_{support_scale}(x, y) <= 1`, else 0.
    Indicator { amplitude: f64, support_scale: i32 },
    /// Amplitude ladder, tightest scale first: the value at the smallest
    /// scale whose chain distance is at most 1; zero beyond the last rung.
    Tiered { rungs: Vec<Rung> },
}

impl SingleSiteProfile {
    pub fn validate(&self) -> Result<(), EnvironmentError> {
        match self {
            SingleSiteProfile::Indicator { amplitude, .. } => {
                if *amplitude > 0.0 {
                    Ok(())
                } else {
                    Err(EnvironmentError::InvalidProfile(
                        "indicator amplitude must be positive".into(),
                    ))
                }
            }
            SingleSiteProfile::Tiered { rungs } => {
                if rungs.is_empty() {
                    return Err(EnvironmentError::InvalidProfile(
                        "tiered profile needs at least one rung".into(),
                    ));
                }
                for w in rungs.windows(2) {
                    if w[1].scale <= w[0].scale {
                        return Err(EnvironmentError::InvalidProfile(
                            "rung scales must increase".into(),
                        ));
                    }
                    if w[1].amplitude > w[0].amplitude {
                        return Err(EnvironmentError::InvalidProfile(
                            "rung amplitudes must not increase with distance".into(),
                        ));
                    }
                }
                if rungs.iter().any(|r| r.amplitude <= 0.0) {
                    return Err(EnvironmentError::InvalidProfile(
                        "rung amplitudes must be positive".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Floor scale: tightest scale at which the floor amplitude is
    /// guaranteed.
    pub fn floor_scale(&self) -> i32 {
        match self {
            SingleSiteProfile::Indicator { support_scale, .. } => *support_scale,
            SingleSiteProfile::Tiered { rungs } => rungs[0].scale,
        }
    }

    /// Floor amplitude at the floor scale.
    pub fn floor_amplitude(&self) -> f64 {
        match self {
            SingleSiteProfile::Indicator { amplitude, .. } => *amplitude,
            SingleSiteProfile::Tiered { rungs } => rungs[0].amplitude,
        }
    }

    /// Scale beyond which the profile vanishes.
    pub fn support_scale(&self) -> i32 {
        match self {
            SingleSiteProfile::Indicator { support_scale, .. } => *support_scale,
            SingleSiteProfile::Tiered { rungs } => rungs.last().unwrap().scale,
        }
    }

    fn rungs(&self) -> Vec<Rung> {
        match self {
            SingleSiteProfile::Indicator {
                amplitude,
                support_scale,
            } => vec![Rung {
                scale: *support_scale,
                amplitude: *amplitude,
            }],
            SingleSiteProfile::Tiered { rungs } => rungs.clone(),
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            SingleSiteProfile::Indicator {
                amplitude,
                support_scale,
            } => format!("indicator({amplitude}@{support_scale})"),
            SingleSiteProfile::Tiered { rungs } => {
                let inner: Vec<String> = rungs
                    .iter()
                    .map(|r| format!("{}@{}", r.amplitude, r.scale))
                    .collect();
                format!("tiered({})", inner.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub configuration: String,
    pub profile: String,
    pub periodized: bool,
}

/// A nonnegative potential sampled on the vertices of a window grid.
#[derive(Clone, Debug)]
pub struct PotentialField {
    pub window: i32,
    pub resolution: i32,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl PotentialField {
    /// `vertex_id,value` rows.
    pub fn csv(&self) -> String {
        let mut out = String::from("vertex_id,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }
}

fn config_hash(config: &PoissonConfiguration) -> String {
    let mut bytes = Vec::with_capacity(config.counts.len() * 4 + 32);
    bytes.extend_from_slice(&config.seed.to_le_bytes());
    bytes.extend_from_slice(&config.intensity.to_le_bytes());
    bytes.extend_from_slice(&config.window.to_le_bytes());
    bytes.extend_from_slice(&config.resolution.to_le_bytes());
    for &c in &config.counts {
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    crate::hash::content_hash(&bytes)
}

/// Evaluates one profile term: the amplitude a point in `point_cell` (at
/// `point_res`) contributes at a vertex whose cell list lives at
/// `vertex_res`.
fn profile_value(
    rungs: &[Rung],
    n: usize,
    window: i32,
    vertex_cells: &[usize],
    vertex_res: i32,
    point_cell: usize,
    point_res: i32,
) -> f64 {
    for rung in rungs {
        let s = rung.scale;
        if s >= window {
            // the whole window sits inside one cell of this scale
            return rung.amplitude;
        }
        let point_anc = point_cell / n.pow((s - point_res) as u32);
        let hit = vertex_cells
            .iter()
            .any(|&c| c / n.pow((s - vertex_res) as u32) == point_anc);
        if hit {
            return rung.amplitude;
        }
    }
    0.0
}

fn check_scales(
    profile: &SingleSiteProfile,
    config: &PoissonConfiguration,
    graph_res: i32,
) -> Result<(), EnvironmentError> {
    profile.validate()?;
    let m0 = profile.floor_scale();
    if config.resolution > m0 {
        return Err(EnvironmentError::ResolutionMismatch(format!(
            "points addressed at scale {} cannot resolve a profile with floor scale {m0}",
            config.resolution
        )));
    }
    if graph_res > m0 {
        return Err(EnvironmentError::ResolutionMismatch(format!(
            "grid resolution {graph_res} is coarser than the profile floor scale {m0}"
        )));
    }
    Ok(())
}

/// Sums `count * W(x, cell)` over the configuration, at every grid vertex.
pub fn evaluate_potential(
    config: &PoissonConfiguration,
    profile: &SingleSiteProfile,
    graph: &ApproxGraph,
) -> Result<PotentialField, EnvironmentError> {
    if graph.window != config.window {
        return Err(EnvironmentError::ResolutionMismatch(format!(
            "configuration window {} differs from grid window {}",
            config.window, graph.window
        )));
    }
    check_scales(profile, config, graph.resolution)?;
    let rungs = profile.rungs();
    let n = config.maps;
    let occupied: Vec<(usize, u32)> = config
        .counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(i, &c)| (i, c))
        .collect();
    let values = graph
        .vertices
        .iter()
        .map(|v| {
            occupied
                .iter()
                .map(|&(cell, count)| {
                    count as f64
                        * profile_value(
                            &rungs,
                            n,
                            config.window,
                            &v.cells,
                            graph.resolution,
                            cell,
                            config.resolution,
                        )
                })
                .sum()
        })
        .collect();
    Ok(PotentialField {
        window: config.window,
        resolution: graph.resolution,
        values,
        provenance: Provenance {
            configuration: config_hash(config),
            profile: profile.descriptor(),
            periodized: false,
        },
    })
}

/// Spreads the window configuration into every window-scale cell of the
/// padded ambient grid: the preimage of the configuration under the folding
/// projection, restricted to the cells that can interact with the window.
fn unfold_counts(
    config: &PoissonConfiguration,
    pm: &ProjectionMap,
) -> Result<Vec<u32>, EnvironmentError> {
    let system = &pm.ambient.system;
    let r = config.resolution;
    let window_cells = enumerate_cells(system, pm.window, r)?;
    let ambient_cells = enumerate_cells(system, pm.window + pm.pad, r)?;
    // ambient cells keyed by barycenter in window-scale units
    let unit = system.scale().powi(r - pm.window);
    let ambient_at: std::collections::BTreeMap<GridKey, usize> = ambient_cells
        .iter()
        .enumerate()
        .map(|(i, c)| (grid_key(c.barycenter_units(system) * unit), i))
        .collect();
    let bary = system.corner_centroid();
    let k = system.corner_count();
    let mut out = vec![0u32; ambient_cells.len()];
    for (region, region_cell) in pm.labeling.region.cells.iter().enumerate() {
        let shift = pm.labeling.shifts[region];
        let inv = Mat2::rotation(-std::f64::consts::TAU * shift as f64 / k as f64);
        let base = region_cell.base_point_units(system.similitudes());
        for (i, &count) in config.counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let p = window_cells[i].barycenter_units(system) * unit;
            let image = inv.apply(p - bary) + bary + base;
            let idx = *ambient_at.get(&grid_key(image)).ok_or_else(|| {
                EnvironmentError::ResolutionMismatch(
                    "configuration cell has no image in the ambient grid".into(),
                )
            })?;
            out[idx] += count;
        }
    }
    Ok(out)
}

/// Periodized potential: the window configuration is tiled through the
/// folding projection and `W` is attached at every resulting cell. Every
/// copy that can reach the window lies inside one padding level, so the
/// ambient grid is exhaustive.
pub fn periodize_potential(
    config: &PoissonConfiguration,
    profile: &SingleSiteProfile,
    pm: &ProjectionMap,
) -> Result<PotentialField, EnvironmentError> {
    if pm.window != config.window {
        return Err(EnvironmentError::ResolutionMismatch(format!(
            "configuration window {} differs from projection window {}",
            config.window, pm.window
        )));
    }
    check_scales(profile, config, pm.resolution)?;
    if profile.support_scale() >= pm.window {
        return Err(EnvironmentError::SupportExceedsWindow {
            support: profile.support_scale(),
            window: pm.window,
        });
    }
    let rungs = profile.rungs();
    let n = config.maps;
    let ambient_counts = unfold_counts(config, pm)?;
    let occupied: Vec<(usize, u32)> = ambient_counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(i, &c)| (i, c))
        .collect();
    let ambient_window = pm.window + pm.pad;
    let values = pm
        .target_to_ambient
        .iter()
        .map(|&xa| {
            let cells = &pm.ambient.vertices[xa].cells;
            occupied
                .iter()
                .map(|&(cell, count)| {
                    count as f64
                        * profile_value(
                            &rungs,
                            n,
                            ambient_window,
                            cells,
                            pm.resolution,
                            cell,
                            config.resolution,
                        )
                })
                .sum()
        })
        .collect();
    Ok(PotentialField {
        window: config.window,
        resolution: pm.resolution,
        values,
        provenance: Provenance {
            configuration: config_hash(config),
            profile: profile.descriptor(),
            periodized: true,
        },
    })
}

/// Which cells at the occupancy scale received at least one point.
#[derive(Clone, Debug)]
pub struct OccupancyField {
    pub scale: i32,
    pub window: i32,
    pub maps: usize,
    pub bits: Vec<bool>,
    pub fraction: f64,
}

pub fn occupancy_indicators(
    config: &PoissonConfiguration,
    scale: i32,
) -> Result<OccupancyField, EnvironmentError> {
    if scale < config.resolution || scale > config.window {
        return Err(EnvironmentError::ResolutionMismatch(format!(
            "occupancy scale {scale} outside [{}, {}]",
            config.resolution, config.window
        )));
    }
    let n = config.maps;
    let stride = n.pow((scale - config.resolution) as u32);
    let cells = config.counts.len() / stride;
    let mut bits = vec![false; cells];
    for (i, &c) in config.counts.iter().enumerate() {
        if c > 0 {
            bits[i / stride] = true;
        }
    }
    let occupied = bits.iter().filter(|&&b| b).count();
    Ok(OccupancyField {
        scale,
        window: config.window,
        maps: n,
        bits,
        fraction: occupied as f64 / cells as f64,
    })
}

/// Alloy-type potential: the floor amplitude on every occupied cell at the
/// occupancy scale, with the cell-boundary vertices excised (their value is
/// zero by convention, matching the continuum definition off the grid).
pub fn alloy_potential(
    occupancy: &OccupancyField,
    amplitude: f64,
    graph: &ApproxGraph,
) -> Result<PotentialField, EnvironmentError> {
    if graph.window != occupancy.window {
        return Err(EnvironmentError::ResolutionMismatch(
            "occupancy window differs from grid window".into(),
        ));
    }
    if graph.resolution > occupancy.scale {
        return Err(EnvironmentError::ResolutionMismatch(
            "grid must be at least as fine as the occupancy scale".into(),
        ));
    }
    let system = &graph.system;
    let n = occupancy.maps;
    // keys of the occupancy-scale grid vertices, in graph resolution units
    let coarse_cells = enumerate_cells(system, occupancy.window, occupancy.scale)?;
    let blow = system.scale().powi(occupancy.scale - graph.resolution);
    let mut coarse_grid: std::collections::BTreeSet<GridKey> = std::collections::BTreeSet::new();
    for cell in &coarse_cells {
        let base = cell.base_point_units(system.similitudes());
        for &corner in system.corners() {
            coarse_grid.insert(grid_key((corner + base) * blow));
        }
    }
    let stride = n.pow((occupancy.scale - graph.resolution) as u32);
    let values = graph
        .vertices
        .iter()
        .map(|v| {
            if coarse_grid.contains(&v.key) {
                0.0
            } else {
                let coarse = v.cells[0] / stride;
                if occupancy.bits[coarse] {
                    amplitude
                } else {
                    0.0
                }
            }
        })
        .collect();
    Ok(PotentialField {
        window: graph.window,
        resolution: graph.resolution,
        values,
        provenance: Provenance {
            configuration: format!("occupancy@{}", occupancy.scale),
            profile: format!("alloy({amplitude})"),
            periodized: true,
        },
    })
}

/// Caps the alloy potential at the window-dependent level
/// `D0 / L^(M alpha)` with `D0 = c1_tilde / (4 amplitude)`; the factor must
/// not exceed one.
pub fn diminished_potential(
    alloy: &PotentialField,
    c1_tilde: f64,
    amplitude: f64,
    alpha: f64,
    scale: f64,
) -> Result<PotentialField, EnvironmentError> {
    let d0 = c1_tilde / (4.0 * amplitude);
    let factor = d0 / scale.powf(alloy.window as f64 * alpha);
    if factor > 1.0 {
        return Err(EnvironmentError::AmplitudeTooLarge { factor });
    }
    let mut out = alloy.clone();
    out.values = alloy.values.iter().map(|&v| v * factor).collect();
    out.provenance.profile = format!("{}*dim({factor})", alloy.provenance.profile);
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileConditionReport {
    pub floor_ok: bool,
    pub bounded_support: bool,
    pub support_scale: i32,
    pub floor_scale: i32,
    /// Windows where the projection-monotonicity inequality held on all
    /// tested pairs.
    pub monotone_windows: Vec<i32>,
    /// Smallest tested window where it held, if any.
    pub monotone_from: Option<i32>,
    pub pairs_checked: usize,
    pub notes: Vec<String>,
}

/// Structural checks of the profile assumptions plus an exhaustive test of
/// the projection-consistency inequality on grid pairs: for a single point
/// `y`, the potential of its window-scale orbit must be no larger at the
/// projection of `x` onto the window than at the projection one level up.
/// Cell-ancestry profiles are equivariant under the folding isometries, so
/// catalog profiles are expected to pass with equality.
pub fn check_profile_conditions(
    profile: &SingleSiteProfile,
    system: &std::sync::Arc<FractalSystem>,
    resolution: i32,
    windows: &[i32],
    max_vertices: usize,
) -> Result<ProfileConditionReport, EnvironmentError> {
    profile.validate()?;
    let mut report = ProfileConditionReport {
        floor_ok: profile.floor_amplitude() > 0.0
            && profile.floor_scale() <= profile.support_scale(),
        bounded_support: true,
        support_scale: profile.support_scale(),
        floor_scale: profile.floor_scale(),
        monotone_windows: Vec::new(),
        monotone_from: None,
        pairs_checked: 0,
        notes: vec![
            "integrability holds structurally: bounded support and finitely many amplitudes".into(),
        ],
    };
    let r = profile.floor_scale().min(resolution);
    for &window in windows {
        if profile.support_scale() >= window {
            report.notes.push(format!(
                "window {window} skipped: support reaches the window scale"
            ));
            continue;
        }
        // pad 2: the ambient holds the window one level up plus everything
        // its vertices can interact with
        let pm = crate::labeling::build_projection(system, window, resolution, 2, max_vertices)
            .map_err(Box::new)?;
        let pm_up =
            crate::labeling::build_projection(system, window + 1, resolution, 1, max_vertices)
                .map_err(Box::new)?;
        let n = system.map_count();
        let cells = n.pow((window - r) as u32);
        let mut ok = true;
        for cell in 0..cells {
            let mut config = PoissonConfiguration {
                intensity: 1.0,
                window,
                resolution: r,
                maps: n,
                seed: 0,
                counts: vec![0; cells],
            };
            config.counts[cell] = 1;
            let orbit = orbit_potential_on_ambient(&config, profile, &pm)?;
            // x ranges over the window-one-up grid, embedded in the ambient
            for v_up in &pm_up.target.vertices {
                let xa = match pm.ambient.vertex_at(v_up.position) {
                    Some(id) => id,
                    None => continue,
                };
                let folded = pm.vertex_image[xa];
                let lhs = orbit[pm.target_to_ambient[folded]];
                let rhs = orbit[xa];
                report.pairs_checked += 1;
                if lhs > rhs + 1e-12 {
                    ok = false;
                }
            }
        }
        if ok {
            report.monotone_windows.push(window);
        }
    }
    report.monotone_from = report.monotone_windows.iter().copied().min();
    Ok(report)
}

/// Potential of the unfolded (orbit) configuration, evaluated at every
/// ambient vertex.
fn orbit_potential_on_ambient(
    config: &PoissonConfiguration,
    profile: &SingleSiteProfile,
    pm: &ProjectionMap,
) -> Result<Vec<f64>, EnvironmentError> {
    check_scales(profile, config, pm.resolution)?;
    let rungs = profile.rungs();
    let n = config.maps;
    let ambient_counts = unfold_counts(config, pm)?;
    let occupied: Vec<(usize, u32)> = ambient_counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(i, &c)| (i, c))
        .collect();
    let ambient_window = pm.window + pm.pad;
    Ok(pm
        .ambient
        .vertices
        .iter()
        .map(|v| {
            occupied
                .iter()
                .map(|&(cell, count)| {
                    count as f64
                        * profile_value(
                            &rungs,
                            n,
                            ambient_window,
                            &v.cells,
                            pm.resolution,
                            cell,
                            config.resolution,
                        )
                })
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_fractal_system, build_graph, SimilitudeSystem};
    use crate::labeling::build_projection;
    use std::sync::Arc;

    fn gasket() -> Arc<FractalSystem> {
        Arc::new(build_fractal_system(SimilitudeSystem::sierpinski_gasket(), 2).unwrap())
    }

    fn indicator() -> SingleSiteProfile {
        SingleSiteProfile::Indicator {
            amplitude: 1.0,
            support_scale: 0,
        }
    }

    #[test]
    fn sampling_is_deterministic_and_additive_in_mean() {
        let sys = gasket();
        let a = sample_configuration(&sys, 2.0, 3, 0, 7, 1 << 20).unwrap();
        let b = sample_configuration(&sys, 2.0, 3, 0, 7, 1 << 20).unwrap();
        assert_eq!(a, b);
        let c = sample_configuration(&sys, 2.0, 3, 0, 8, 1 << 20).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.counts.len(), 27);
    }

    #[test]
    fn empirical_vacancy_matches_exponential() {
        // P[cell empty] = exp(-nu) at unit intensity, within 3 binomial sigma
        let sys = gasket();
        let samples = 10_000;
        let mut empty = 0usize;
        for s in 0..samples {
            let cfg = sample_configuration(&sys, 1.0, 2, 0, 1000 + s as u64, 1 << 20).unwrap();
            if cfg.counts[0] == 0 {
                empty += 1;
            }
        }
        let p = (-1.0f64).exp();
        let sigma = (p * (1.0 - p) / samples as f64).sqrt();
        let freq = empty as f64 / samples as f64;
        assert!(
            (freq - p).abs() < 3.0 * sigma,
            "vacancy {freq} vs {p} +- {sigma}"
        );
    }

    #[test]
    fn merge_matches_summed_intensity_moments() {
        let sys = gasket();
        let samples = 10_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let cells = 9.0;
        for s in 0..samples {
            let a = sample_configuration(&sys, 0.7, 2, 0, 2 * s as u64, 1 << 20).unwrap();
            let b = sample_configuration(&sys, 1.3, 2, 0, 2 * s as u64 + 1, 1 << 20).unwrap();
            let m = a.merge(&b);
            for &c in &m.counts {
                sum += c as f64;
                sumsq += (c as f64) * (c as f64);
            }
        }
        let n = samples as f64 * cells;
        let mean = sum / n;
        let var = sumsq / n - mean * mean;
        // Poisson(2.0): both moments near 2 (4 sigma slack)
        let sigma_mean = (2.0f64 / n).sqrt();
        assert!((mean - 2.0).abs() < 4.0 * sigma_mean, "mean {mean}");
        assert!((var - 2.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn tiny_intensity_is_mostly_empty() {
        let sys = gasket();
        let empty = (0..100)
            .filter(|&s| {
                sample_configuration(&sys, 1e-4, 1, 0, s, 1 << 20)
                    .unwrap()
                    .is_empty()
            })
            .count();
        assert!(empty >= 95, "{empty}");
    }

    #[test]
    fn potential_point_examples() {
        let sys = gasket();
        let graph = build_graph(&sys, 1, 0, 1 << 20).unwrap();
        let mut config = PoissonConfiguration {
            intensity: 1.0,
            window: 1,
            resolution: 0,
            maps: 3,
            seed: 0,
            counts: vec![0, 0, 0],
        };
        // empty configuration: identically zero
        let v = evaluate_potential(&config, &indicator(), &graph).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));

        // one point in the first cell reaches exactly that cell's corners
        config.counts[0] = 1;
        let v = evaluate_potential(&config, &indicator(), &graph).unwrap();
        for (id, vert) in graph.vertices.iter().enumerate() {
            let expect = if vert.cells.contains(&0) { 1.0 } else { 0.0 };
            assert_eq!(v.values[id], expect);
        }

        // two points in adjacent cells: their shared vertex sees both
        config.counts = vec![1, 1, 0];
        let v = evaluate_potential(&config, &indicator(), &graph).unwrap();
        let shared = graph
            .vertices
            .iter()
            .position(|vv| vv.cells == vec![0, 1])
            .unwrap();
        assert_eq!(v.values[shared], 2.0);
    }

    #[test]
    fn periodization_doubles_window_corners_only() {
        // hand-tiled single-point case: a point in the right cell of window 1
        let sys = gasket();
        let pm = build_projection(&sys, 1, 0, 1, 1 << 20).unwrap();
        let config = PoissonConfiguration {
            intensity: 1.0,
            window: 1,
            resolution: 0,
            maps: 3,
            seed: 0,
            counts: vec![0, 1, 0],
        };
        let v = periodize_potential(&config, &indicator(), &pm).unwrap();
        let expect = [
            ((0.0, 0.0), 0.0),               // origin: one-sided, no copy
            ((2.0, 0.0), 1.0),               // interior midpoint of the cell
            ((1.0, 3f64.sqrt()), 0.0),       // far midpoint
            ((4.0, 0.0), 2.0),               // window corner: direct + wrapped
            ((3.0, 3f64.sqrt()), 1.0),       // cell corner, not a window corner
            ((2.0, 2.0 * 3f64.sqrt()), 0.0), // top window corner
        ];
        for ((x, y), want) in expect {
            let id = pm
                .target
                .vertex_at(crate::vec2::Vec2::new(x, y))
                .unwrap_or_else(|| panic!("vertex ({x},{y})"));
            assert_eq!(v.values[id], want, "at ({x},{y})");
        }
        // away from the fold the two evaluations coincide
        let direct = evaluate_potential(&config, &indicator(), &pm.target).unwrap();
        for id in 0..pm.target.vertex_count() {
            if !pm.target.vertices[id].window_corner {
                assert_eq!(v.values[id], direct.values[id]);
            }
        }
    }

    #[test]
    fn periodization_needs_room() {
        let sys = gasket();
        let pm = build_projection(&sys, 1, 0, 1, 1 << 20).unwrap();
        let config = PoissonConfiguration {
            intensity: 1.0,
            window: 1,
            resolution: 0,
            maps: 3,
            seed: 0,
            counts: vec![1, 0, 0],
        };
        let wide = SingleSiteProfile::Indicator {
            amplitude: 1.0,
            support_scale: 1,
        };
        assert!(matches!(
            periodize_potential(&config, &wide, &pm),
            Err(EnvironmentError::SupportExceedsWindow { .. })
        ));
    }

    #[test]
    fn occupancy_statistics() {
        let sys = gasket();
        let samples = 10_000;
        let mut occupied = 0usize;
        for s in 0..samples {
            let cfg = sample_configuration(&sys, 1.0, 2, 0, 5000 + s as u64, 1 << 20).unwrap();
            let occ = occupancy_indicators(&cfg, 0).unwrap();
            if occ.bits[3] {
                occupied += 1;
            }
        }
        let p = 1.0 - (-1.0f64).exp();
        let sigma = (p * (1.0 - p) / samples as f64).sqrt();
        let freq = occupied as f64 / samples as f64;
        assert!((freq - p).abs() < 3.0 * sigma, "{freq} vs {p}");
    }

    #[test]
    fn occupancy_edge_cases() {
        let sys = gasket();
        let empty = PoissonConfiguration {
            intensity: 1.0,
            window: 2,
            resolution: 0,
            maps: 3,
            seed: 0,
            counts: vec![0; 9],
        };
        let occ = occupancy_indicators(&empty, 0).unwrap();
        assert!(occ.bits.iter().all(|&b| !b));
        assert_eq!(occ.fraction, 0.0);
        let dense = sample_configuration(&sys, 50.0, 2, 0, 3, 1 << 20).unwrap();
        let occ = occupancy_indicators(&dense, 0).unwrap();
        assert!(occ.fraction > 0.99);
        // coarser occupancy scale groups sub-cells
        let occ1 = occupancy_indicators(&empty, 1).unwrap();
        assert_eq!(occ1.bits.len(), 3);
    }

    #[test]
    fn alloy_values_and_grid_excision() {
        let sys = gasket();
        let graph = build_graph(&sys, 2, -1, 1 << 20).unwrap();
        let full = OccupancyField {
            scale: 0,
            window: 2,
            maps: 3,
            bits: vec![true; 9],
            fraction: 1.0,
        };
        let v = alloy_potential(&full, 2.5, &graph).unwrap();
        // zero exactly on the occupancy-scale grid, the amplitude elsewhere
        let coarse = build_graph(&sys, 2, 0, 1 << 20).unwrap();
        let blow = 2.0; // L^(0 - (-1))
        for (id, vert) in graph.vertices.iter().enumerate() {
            let on_coarse = coarse
                .vertex_at(crate::vec2::Vec2::new(
                    vert.position.x / blow,
                    vert.position.y / blow,
                ))
                .is_some();
            if on_coarse {
                assert_eq!(v.values[id], 0.0);
            } else {
                assert_eq!(v.values[id], 2.5);
            }
        }
        let none = OccupancyField {
            scale: 0,
            window: 2,
            maps: 3,
            bits: vec![false; 9],
            fraction: 0.0,
        };
        let v0 = alloy_potential(&none, 2.5, &graph).unwrap();
        assert!(v0.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn domination_chain_holds_per_sample() {
        let sys = gasket();
        let pm = build_projection(&sys, 3, -1, 1, 1 << 20).unwrap();
        let profile = indicator();
        for seed in 0..50 {
            let cfg = sample_configuration(&sys, 1.0, 3, 0, seed, 1 << 20).unwrap();
            let per = periodize_potential(&cfg, &profile, &pm).unwrap();
            let occ = occupancy_indicators(&cfg, 0).unwrap();
            let alloy = alloy_potential(&occ, 1.0, &pm.target).unwrap();
            let dim = diminished_potential(&alloy, 1.0, 1.0, 1.0, 2.0).unwrap();
            for i in 0..per.values.len() {
                assert!(dim.values[i] <= alloy.values[i] + 1e-15);
                assert!(alloy.values[i] <= per.values[i] + 1e-15);
            }
        }
    }

    #[test]
    fn diminished_scaling_is_exact() {
        let alloy = PotentialField {
            window: 3,
            resolution: 0,
            values: vec![0.0, 2.0, 2.0],
            provenance: Provenance {
                configuration: "x".into(),
                profile: "alloy(2)".into(),
                periodized: true,
            },
        };
        let c1 = 1.6;
        let dim = diminished_potential(&alloy, c1, 2.0, 1.5, 2.0).unwrap();
        let factor = (c1 / 8.0) / 2f64.powf(4.5);
        assert!((dim.values[1] - 2.0 * factor).abs() < 1e-15);
        // window too small: factor above one is refused
        let mut small = alloy.clone();
        small.window = -2;
        assert!(matches!(
            diminished_potential(&small, c1, 2.0, 1.5, 2.0),
            Err(EnvironmentError::AmplitudeTooLarge { .. })
        ));
    }

    #[test]
    fn profile_monotonicity_check_passes_for_indicator() {
        let sys = gasket();
        let report = check_profile_conditions(&indicator(), &sys, 0, &[2, 3], 1 << 20).unwrap();
        assert!(report.floor_ok && report.bounded_support);
        assert_eq!(report.monotone_windows, vec![2, 3]);
        assert!(report.pairs_checked > 0);
    }

    #[test]
    fn profile_validation_rejects_bad_rungs() {
        let bad = SingleSiteProfile::Tiered {
            rungs: vec![
                Rung {
                    scale: 0,
                    amplitude: 1.0,
                },
                Rung {
                    scale: 1,
                    amplitude: 2.0,
                },
            ],
        };
        assert!(bad.validate().is_err());
        let good = SingleSiteProfile::Tiered {
            rungs: vec![
                Rung {
                    scale: 0,
                    amplitude: 2.0,
                },
                Rung {
                    scale: 1,
                    amplitude: 0.5,
                },
            ],
        };
        assert!(good.validate().is_ok());
        assert_eq!(good.floor_scale(), 0);
        assert_eq!(good.support_scale(), 1);
    }

    #[test]
    fn resolution_preconditions() {
        let sys = gasket();
        let graph = build_graph(&sys, 2, 1, 1 << 20).unwrap();
        let cfg = sample_configuration(&sys, 1.0, 2, 0, 1, 1 << 20).unwrap();
        // grid coarser than the profile floor scale is refused
        assert!(matches!(
            evaluate_potential(&cfg, &indicator(), &graph),
            Err(EnvironmentError::ResolutionMismatch(_))
        ));
        // points coarser than the floor scale are refused
        let coarse_cfg = sample_configuration(&sys, 1.0, 2, 1, 1, 1 << 20).unwrap();
        let fine_graph = build_graph(&sys, 2, 0, 1 << 20).unwrap();
        assert!(matches!(
            evaluate_potential(&coarse_cfg, &indicator(), &fine_graph),
            Err(EnvironmentError::ResolutionMismatch(_))
        ));
    }

    #[test]
    fn configuration_csv_shape() {
        let sys = gasket();
        let cfg = sample_configuration(&sys, 1.0, 1, 0, 1, 1 << 20).unwrap();
        let csv = cfg.csv(&sys);
        assert!(csv.starts_with("cell_word,count\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
