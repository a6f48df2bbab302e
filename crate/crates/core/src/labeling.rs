//! Corner labelings and the folding projection.
//!
//! A *good labeling* of order `M` assigns one of `k` letters to every vertex
//! of the `M`-grid so that each `M`-cell carries all `k` letters and the
//! letter arrangement on every cell is a rotation of the primary cell's.
//! When such a labeling exists, every cell carries a unique rotation index
//! and the map
//!
//! ```text
//! pi_M(x) = R_cell(x - nu_cell)
//! ```
//!
//! sends the whole grid onto the primary window; folding a walk kernel
//! through `pi_M` produces the reflected (Neumann) kernel on the window.
//!
//! Once the primary cell's corner bijection is pinned, label propagation is
//! forced: any shared vertex between a labeled and an unlabeled cell
//! determines the latter's rotation, so the breadth-first search never
//! branches and inconsistencies surface directly as conflict certificates.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{build_graph, grid_key, ApproxGraph, FractalSystem, GeometryError, VertexId};
use crate::spectral::WalkKernel;
use crate::vec2::{Mat2, Vec2};

/// Evidence that label propagation hit an inconsistency.
#[derive(Clone, Debug, Serialize)]
pub struct LabelConflict {
    pub cell_word: String,
    pub vertex: (f64, f64),
    pub existing: u8,
    pub conflicting: u8,
}

#[derive(Debug, Error)]
pub enum LabelingError {
    #[error("no good labeling: cell {} assigns label {} to a vertex already labeled {}",
            .0.cell_word, .0.conflicting, .0.existing)]
    NoGlp(LabelConflict),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("vertex or cell {0} cannot be resolved in this projection")]
    UnresolvableLocation(usize),
    #[error("padding too small: row deficit {deficit:e} at vertex {vertex}")]
    InsufficientPadding { vertex: usize, deficit: f64 },
}

/// A verified rotation-consistent labeling of the `order`-grid over a region
/// window.
#[derive(Clone, Debug)]
pub struct GoodLabeling {
    /// Scale of the labeled cells.
    pub order: i32,
    /// Region grid: window `order + span` at resolution `order`.
    pub region: ApproxGraph,
    /// Letter per region vertex, values in `0..k`.
    pub labels: Vec<u8>,
    /// Rotation index per region cell.
    pub shifts: Vec<u8>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LabelingViolation {
    pub cell_word: String,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct LabelingReport {
    pub cells_checked: usize,
    pub primary_bijective: bool,
    pub precondition_errors: Vec<String>,
    pub violations: Vec<LabelingViolation>,
}

impl LabelingReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty() && self.precondition_errors.is_empty() && self.primary_bijective
    }
}

impl GoodLabeling {
    pub fn alphabet(&self) -> usize {
        self.region.system.corner_count()
    }

    pub fn label(&self, v: VertexId) -> u8 {
        self.labels[v]
    }

    pub fn shift(&self, cell: usize) -> u8 {
        self.shifts[cell]
    }

    /// `vertex_id,label,cell_word,rotation` rows, one per cell corner.
    pub fn csv(&self) -> String {
        let mut out = String::from("vertex_id,label,cell_word,rotation\n");
        for (ci, cell) in self.region.cells.iter().enumerate() {
            for &v in &self.region.cell_vertices[ci] {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    v,
                    self.labels[v] + 1,
                    cell.word_string(),
                    self.shifts[ci]
                ));
            }
        }
        out
    }
}

/// Constructs a good labeling of the given order over `span` extra window
/// levels, or returns the conflict that rules one out.
///
/// The primary cell is pinned to the identity rotation (labels equal corner
/// indices there), and rotations propagate breadth-first over cell adjacency
/// with lexicographic tie-breaking.
pub fn construct_good_labeling(
    system: &std::sync::Arc<FractalSystem>,
    order: i32,
    span: u32,
) -> Result<GoodLabeling, LabelingError> {
    let span = span.max(1) as i32;
    let region = build_graph(system, order + span, order, usize::MAX)?;
    let k = system.corner_count();
    let n_cells = region.cells.len();

    let mut labels: Vec<Option<u8>> = vec![None; region.vertices.len()];
    let mut shifts: Vec<Option<u8>> = vec![None; n_cells];

    let assign_cell = |cell: usize,
                       shift: u8,
                       labels: &mut Vec<Option<u8>>,
                       region: &ApproxGraph|
     -> Result<(), LabelingError> {
        for (corner, &v) in region.cell_vertices[cell].iter().enumerate() {
            let want = ((corner + shift as usize) % k) as u8;
            match labels[v] {
                None => labels[v] = Some(want),
                Some(have) if have == want => {}
                Some(have) => {
                    let pos = region.vertices[v].position;
                    return Err(LabelingError::NoGlp(LabelConflict {
                        cell_word: region.cells[cell].word_string(),
                        vertex: (pos.x, pos.y),
                        existing: have,
                        conflicting: want,
                    }));
                }
            }
        }
        Ok(())
    };

    // Primary cell is the all-zeros word, first in lexicographic order.
    shifts[0] = Some(0);
    assign_cell(0, 0, &mut labels, &region)?;
    let mut queue = VecDeque::from([0usize]);
    while let Some(cell) = queue.pop_front() {
        for &next in &region.cell_neighbors[cell] {
            if shifts[next].is_some() {
                continue;
            }
            // the first labeled corner determines the rotation
            let (corner, lbl) = region.cell_vertices[next]
                .iter()
                .enumerate()
                .find_map(|(c, &v)| labels[v].map(|l| (c, l)))
                .expect("adjacent cell shares a labeled vertex");
            let shift = ((lbl as usize + k - corner % k) % k) as u8;
            shifts[next] = Some(shift);
            assign_cell(next, shift, &mut labels, &region)?;
            queue.push_back(next);
        }
    }

    let labels: Vec<u8> = labels
        .into_iter()
        .map(|l| l.expect("connected region labels every vertex"))
        .collect();
    let shifts: Vec<u8> = shifts.into_iter().map(|s| s.unwrap()).collect();
    let gl = GoodLabeling {
        order,
        region,
        labels,
        shifts,
    };
    let report = verify_good_labeling(&gl);
    if let Some(v) = report.violations.first() {
        return Err(LabelingError::NoGlp(LabelConflict {
            cell_word: v.cell_word.clone(),
            vertex: (f64::NAN, f64::NAN),
            existing: 0,
            conflicting: 0,
        }));
    }
    Ok(gl)
}

/// Brute-force re-verification of both labeling conditions, done
/// geometrically: for each cell it searches for a rotation about the primary
/// barycenter matching all corner labels.
pub fn verify_good_labeling(gl: &GoodLabeling) -> LabelingReport {
    let mut report = LabelingReport {
        cells_checked: gl.region.cells.len(),
        ..Default::default()
    };
    let k = gl.alphabet();
    if let Some(&bad) = gl.labels.iter().find(|&&l| l as usize >= k) {
        report
            .precondition_errors
            .push(format!("label {bad} outside alphabet of size {k}"));
        report.primary_bijective = false;
        return report;
    }

    // Condition (1): bijection on the primary cell corners.
    let mut seen = vec![false; k];
    for &v in &gl.region.cell_vertices[0] {
        seen[gl.labels[v] as usize] = true;
    }
    report.primary_bijective = seen.iter().all(|&s| s);

    let system = &gl.region.system;
    let bary = system.corner_centroid();
    for (ci, cell) in gl.region.cells.iter().enumerate() {
        let base = cell.base_point_units(system.similitudes());
        let matched = (0..k).any(|s| {
            let rot = Mat2::rotation(std::f64::consts::TAU * s as f64 / k as f64);
            gl.region.cell_vertices[ci].iter().all(|&v| {
                let rel = gl.region.vertices[v].position - base - bary;
                let image = rot.apply(rel) + bary;
                match gl.region.vertex_at(image) {
                    Some(w) => gl.labels[w] == gl.labels[v],
                    None => false,
                }
            })
        });
        if !matched {
            report.violations.push(LabelingViolation {
                cell_word: cell.word_string(),
                detail: "no rotation matches the corner labels".into(),
            });
        }
    }
    report
}

/// Per-cell isometry `x -> rot (x - base - bary) + bary` in resolution units.
#[derive(Clone, Copy, Debug)]
struct CellIsometry {
    rot: Mat2,
    inv: Mat2,
    base: Vec2,
    bary: Vec2,
}

impl CellIsometry {
    fn project(&self, p: Vec2) -> Vec2 {
        self.rot.apply(p - self.base - self.bary) + self.bary
    }

    fn embed(&self, p: Vec2) -> Vec2 {
        self.inv.apply(p - self.bary) + self.bary + self.base
    }
}

/// The folding projection from an ambient window onto its primary sub-window,
/// realized on a fixed resolution grid.
#[derive(Clone, Debug)]
pub struct ProjectionMap {
    pub window: i32,
    pub resolution: i32,
    pub pad: i32,
    pub labeling: GoodLabeling,
    /// Grid of the padded window at the working resolution.
    pub ambient: ApproxGraph,
    /// Grid of the primary window at the working resolution.
    pub target: ApproxGraph,
    /// Image of every ambient vertex in the target grid.
    pub vertex_image: Vec<VertexId>,
    /// Image of every ambient cell in the target grid.
    pub cell_image: Vec<usize>,
    /// Identity embedding of target vertices into the ambient grid.
    pub target_to_ambient: Vec<VertexId>,
    /// Number of window-scale cells of the ambient grid containing each
    /// ambient vertex.
    pub window_rank: Vec<usize>,
    cell_maps: Vec<CellIsometry>,
}

pub fn build_projection(
    system: &std::sync::Arc<FractalSystem>,
    window: i32,
    resolution: i32,
    pad: i32,
    max_vertices: usize,
) -> Result<ProjectionMap, LabelingError> {
    if resolution > window {
        return Err(GeometryError::ScaleOrderViolation { window, resolution }.into());
    }
    let pad = pad.max(1);
    let labeling = construct_good_labeling(system, window, pad as u32)?;
    let ambient = build_graph(system, window + pad, resolution, max_vertices)?;
    let target = build_graph(system, window, resolution, max_vertices)?;

    let k = system.corner_count();
    let l = system.scale();
    let blow = l.powi(window - resolution);
    let bary = system.corner_centroid() * blow;
    let cell_maps: Vec<CellIsometry> = labeling
        .region
        .cells
        .iter()
        .zip(&labeling.shifts)
        .map(|(cell, &shift)| {
            let theta = std::f64::consts::TAU * shift as f64 / k as f64;
            CellIsometry {
                rot: Mat2::rotation(theta),
                inv: Mat2::rotation(-theta),
                base: cell.base_point_units(system.similitudes()) * blow,
                bary,
            }
        })
        .collect();

    // Ambient cells map through their window-scale ancestor's word prefix.
    let n = system.map_count();
    let region_index =
        |word: &[u8]| -> usize { word.iter().fold(0usize, |acc, &d| acc * n + d as usize) };
    let target_cell_at: std::collections::BTreeMap<_, _> = target
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| (grid_key(c.barycenter_units(system)), i))
        .collect();

    let mut cell_image = Vec::with_capacity(ambient.cells.len());
    for cell in &ambient.cells {
        let region_cell = region_index(&cell.word[..pad as usize]);
        let image = cell_maps[region_cell].project(cell.barycenter_units(system));
        let idx = *target_cell_at
            .get(&grid_key(image))
            .ok_or(LabelingError::UnresolvableLocation(region_cell))?;
        cell_image.push(idx);
    }

    let mut vertex_image = Vec::with_capacity(ambient.vertices.len());
    let mut window_rank = Vec::with_capacity(ambient.vertices.len());
    for v in &ambient.vertices {
        let mut regions: Vec<usize> = v
            .cells
            .iter()
            .map(|&c| region_index(&ambient.cells[c].word[..pad as usize]))
            .collect();
        regions.sort_unstable();
        regions.dedup();
        window_rank.push(regions.len());
        let image = cell_maps[regions[0]].project(v.position);
        let id = target
            .vertex_at(image)
            .ok_or(LabelingError::UnresolvableLocation(regions[0]))?;
        vertex_image.push(id);
    }

    let mut target_to_ambient = Vec::with_capacity(target.vertices.len());
    for v in &target.vertices {
        let id = ambient
            .vertex_at(v.position)
            .ok_or(LabelingError::UnresolvableLocation(0))?;
        target_to_ambient.push(id);
    }

    Ok(ProjectionMap {
        window,
        resolution,
        pad,
        labeling,
        ambient,
        target,
        vertex_image,
        cell_image,
        target_to_ambient,
        window_rank,
        cell_maps,
    })
}

impl ProjectionMap {
    /// Image of an ambient grid vertex in the primary window.
    pub fn project_vertex(&self, v: VertexId) -> Result<VertexId, LabelingError> {
        self.vertex_image
            .get(v)
            .copied()
            .ok_or(LabelingError::UnresolvableLocation(v))
    }

    /// Image of an ambient cell in the primary window.
    pub fn project_cell(&self, cell: usize) -> Result<usize, LabelingError> {
        self.cell_image
            .get(cell)
            .copied()
            .ok_or(LabelingError::UnresolvableLocation(cell))
    }

    /// Projects onto an arbitrary window-scale cell of the region: first fold
    /// to the primary window, then embed by the cell's inverse isometry.
    pub fn project_to_cell(
        &self,
        region_cell: usize,
        v: VertexId,
    ) -> Result<VertexId, LabelingError> {
        let map = self
            .cell_maps
            .get(region_cell)
            .ok_or(LabelingError::UnresolvableLocation(region_cell))?;
        let folded = self.project_vertex(v)?;
        let pos = map.embed(self.target.vertices[folded].position);
        self.ambient
            .vertex_at(pos)
            .ok_or(LabelingError::UnresolvableLocation(v))
    }

    /// True when every ambient vertex has the same image through each of its
    /// incident cells.
    pub fn projection_well_defined(&self) -> bool {
        let n = self.ambient.system.map_count();
        let pad = self.pad as usize;
        self.ambient.vertices.iter().enumerate().all(|(vi, v)| {
            let mut image = None;
            for &c in &v.cells {
                let region = self.ambient.cells[c].word[..pad]
                    .iter()
                    .fold(0usize, |acc, &d| acc * n + d as usize);
                let p = self.cell_maps[region].project(v.position);
                match (image, self.target.vertex_at(p)) {
                    (_, None) => return false,
                    (None, some) => image = some,
                    (Some(prev), Some(now)) if prev != now => return false,
                    _ => {}
                }
            }
            image == Some(self.vertex_image[vi])
        })
    }
}

/// Folds a row-stochastic ambient kernel through the projection.
///
/// Each window vertex keeps its own ambient row (its full neighborhood lies
/// inside the padded window), columns are pushed through the projection, and
/// the reversibility weight is the ambient weight divided by the number of
/// window-scale cells meeting at the vertex.
pub fn fold_kernel(ambient: &WalkKernel, pm: &ProjectionMap) -> Result<WalkKernel, LabelingError> {
    let n = pm.target.vertex_count();
    let mut rows = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for x in 0..n {
        let xa = pm.target_to_ambient[x];
        let mut folded: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        let mut total = 0.0;
        for &(y, p) in &ambient.rows[xa] {
            *folded.entry(pm.vertex_image[y]).or_insert(0.0) += p;
            total += p;
        }
        let deficit = (1.0 - total).abs();
        if deficit > 1e-12 {
            return Err(LabelingError::InsufficientPadding { vertex: x, deficit });
        }
        rows.push(folded.into_iter().collect::<Vec<_>>());
        weights.push(ambient.weights[xa] / pm.window_rank[xa] as f64);
    }
    Ok(WalkKernel { rows, weights })
}
