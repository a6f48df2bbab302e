//! Planar nested fractals: similitude systems, cell addressing, window
//! graphs, and the chain metric on grids.
//!
//! A system of N similitudes `Psi_i(x) = U(x)/L + nu_i` with common ratio
//! `1/L` and common isometric part `U` generates a compact self-similar set.
//! Windows of size `L^M` tile into `N^(M-m)` cells of size `L^m`; all
//! combinatorics here (addresses, vertex identities, adjacency, the chain
//! metric) are exact on those grids.
//!
//! Coordinates are stored in *resolution units*: positions divided by `L^m`,
//! so a cell at the working resolution always spans the corner polygon of the
//! generator. Vertex identity is decided by rounding resolution-unit
//! coordinates to a fixed 1e-9 grid, which is coarse enough to absorb
//! floating-point drift at supported depths and fine enough to separate
//! distinct grid points.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vec2::{Mat2, Vec2};

/// Rounding denominator for vertex identity in resolution units.
const KEY_SCALE: f64 = 1e9;

/// Matching tolerance for coincidence checks done in plain coordinates.
pub const COORD_TOL: f64 = 1e-9;

pub type VertexId = usize;
pub type GridKey = (i64, i64);

pub fn grid_key(p: Vec2) -> GridKey {
    (
        (p.x * KEY_SCALE).round() as i64,
        (p.y * KEY_SCALE).round() as i64,
    )
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("need at least 3 essential fixed points, found {found}")]
    TooFewEssentialFixedPoints { found: usize },
    #[error("axiom violation: {0}")]
    AxiomViolation(String),
    #[error("depth-1 cell graph is not connected")]
    NotConnected,
    #[error("scale order violated: resolution {resolution} exceeds window {window}")]
    ScaleOrderViolation { window: i32, resolution: i32 },
    #[error("vertex budget exceeded: {needed} > {cap}")]
    ResourceLimit { needed: usize, cap: usize },
    #[error("vertex {0} outside the window grid")]
    VertexOutsideWindow(usize),
    #[error("invalid similitude system: {0}")]
    InvalidSystem(String),
}

/// Common isometric part of the similitudes: a rotation, optionally composed
/// with a reflection across the x axis.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Isometry {
    pub angle: f64,
    #[serde(default)]
    pub reflect: bool,
}

impl Isometry {
    pub fn identity() -> Self {
        Isometry {
            angle: 0.0,
            reflect: false,
        }
    }

    pub fn matrix(&self) -> Mat2 {
        let rot = Mat2::rotation(self.angle);
        if self.reflect {
            rot.compose(Mat2::flip_y())
        } else {
            rot
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.reflect && self.angle.abs() < 1e-15
    }
}

/// The generating maps `Psi_i(x) = U(x)/L + nu_i`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SimilitudeSystem {
    pub scale: f64,
    pub isometry: Isometry,
    pub translations: Vec<(f64, f64)>,
}

impl SimilitudeSystem {
    pub fn map_count(&self) -> usize {
        self.translations.len()
    }

    pub fn translation(&self, i: usize) -> Vec2 {
        let (x, y) = self.translations[i];
        Vec2::new(x, y)
    }

    pub fn apply(&self, i: usize, p: Vec2) -> Vec2 {
        self.isometry.matrix().apply(p) * (1.0 / self.scale) + self.translation(i)
    }

    /// Unique fixed point of `Psi_i`, solving `(I - U/L) p = nu_i`.
    pub fn fixed_point(&self, i: usize) -> Vec2 {
        let m = Mat2::IDENTITY - self.isometry.matrix().scale(1.0 / self.scale);
        let inv = m.inverse().expect("contraction has a unique fixed point");
        inv.apply(self.translation(i))
    }

    /// The standard three-map Sierpinski gasket (`L = 2`, unit-triangle
    /// translations, identity isometry).
    pub fn sierpinski_gasket() -> Self {
        SimilitudeSystem {
            scale: 2.0,
            isometry: Isometry::identity(),
            translations: vec![(0.0, 0.0), (1.0, 0.0), (0.5, 3f64.sqrt() / 2.0)],
        }
    }

    /// Seven-map hexagonal snowflake (`L = 3`): six corner maps plus a
    /// central one, connected through the center cell.
    pub fn hex_snowflake() -> Self {
        let mut translations = vec![(0.0, 0.0)];
        for i in 0..6 {
            let a = std::f64::consts::TAU * i as f64 / 6.0;
            translations.push((2.0 / 3.0 * a.cos(), 2.0 / 3.0 * a.sin()));
        }
        SimilitudeSystem {
            scale: 3.0,
            isometry: Isometry::identity(),
            translations,
        }
    }

    /// Five-map Vicsek cross (`L = 3`, four corner maps and a center one);
    /// its four essential fixed points form a square.
    pub fn vicsek_cross() -> Self {
        SimilitudeSystem {
            scale: 3.0,
            isometry: Isometry::identity(),
            translations: vec![
                (0.0, 0.0),
                (2.0 / 3.0, 2.0 / 3.0),
                (-2.0 / 3.0, 2.0 / 3.0),
                (-2.0 / 3.0, -2.0 / 3.0),
                (2.0 / 3.0, -2.0 / 3.0),
            ],
        }
    }

    fn validate(&self) -> Result<(), GeometryError> {
        if self.map_count() < 2 {
            return Err(GeometryError::InvalidSystem(
                "need at least two maps".into(),
            ));
        }
        if self.scale <= 1.0 || !self.scale.is_finite() {
            return Err(GeometryError::InvalidSystem(format!(
                "scale factor must exceed 1, got {}",
                self.scale
            )));
        }
        if self.translation(0).norm() > COORD_TOL {
            return Err(GeometryError::InvalidSystem(
                "first translation must be the origin".into(),
            ));
        }
        Ok(())
    }
}

/// A validated nested fractal with its derived constants.
#[derive(Clone, Debug)]
pub struct FractalSystem {
    sim: SimilitudeSystem,
    /// Essential fixed points in counterclockwise order about their centroid.
    corners: Vec<Vec2>,
    hausdorff_dim: f64,
    walk_dim: Option<f64>,
    max_corner_rank: usize,
    vertex_count_constant: f64,
    validation_depth: u32,
}

impl FractalSystem {
    pub fn similitudes(&self) -> &SimilitudeSystem {
        &self.sim
    }

    /// Number of maps N.
    pub fn map_count(&self) -> usize {
        self.sim.map_count()
    }

    /// Contraction ratio denominator L.
    pub fn scale(&self) -> f64 {
        self.sim.scale
    }

    /// Essential fixed points (corner polygon of the generator).
    pub fn corners(&self) -> &[Vec2] {
        &self.corners
    }

    pub fn corner_count(&self) -> usize {
        self.corners.len()
    }

    pub fn corner_centroid(&self) -> Vec2 {
        let mut c = Vec2::ZERO;
        for &v in &self.corners {
            c = c + v;
        }
        c * (1.0 / self.corners.len() as f64)
    }

    /// Hausdorff dimension `log N / log L`.
    pub fn dim(&self) -> f64 {
        self.hausdorff_dim
    }

    /// Walk dimension, available once time scaling has been estimated.
    pub fn walk_dim(&self) -> Option<f64> {
        self.walk_dim
    }

    /// Spectral dimension `2 d / d_w`.
    pub fn spectral_dim(&self) -> Option<f64> {
        self.walk_dim.map(|dw| 2.0 * self.hausdorff_dim / dw)
    }

    pub fn with_walk_dim(&self, dw: f64) -> FractalSystem {
        let mut s = self.clone();
        s.walk_dim = Some(dw);
        s
    }

    /// Largest observed number of unit cells meeting at a grid vertex.
    pub fn max_corner_rank(&self) -> usize {
        self.max_corner_rank
    }

    /// Measured constant bounding `#V / N^depth` over validated windows.
    pub fn vertex_count_constant(&self) -> f64 {
        self.vertex_count_constant
    }

    pub fn validation_depth(&self) -> u32 {
        self.validation_depth
    }
}

/// Builds and validates a [`FractalSystem`].
///
/// Essential fixed points are found by scanning for coincidences
/// `Psi_i(p) = Psi_j(q)` among fixed points of distinct maps. Nesting,
/// symmetry, and connectivity are then checked on grids up to
/// `validation_depth`; the open-set condition is not decided algorithmically.
pub fn build_fractal_system(
    spec: SimilitudeSystem,
    validation_depth: u32,
) -> Result<FractalSystem, GeometryError> {
    spec.validate()?;
    let depth = validation_depth.max(1);
    let n = spec.map_count();
    let fixed: Vec<Vec2> = (0..n).map(|i| spec.fixed_point(i)).collect();

    // Essential fixed points: Psi_i(p_a) = Psi_j(p_b) for i != j.
    let scale_hint = fixed.iter().map(|p| p.norm()).fold(1.0f64, f64::max);
    let tol = COORD_TOL * scale_hint.max(1.0);
    let mut essential = vec![false; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for a in 0..n {
                for b in 0..n {
                    if spec.apply(i, fixed[a]).dist(spec.apply(j, fixed[b])) <= tol {
                        essential[a] = true;
                        essential[b] = true;
                    }
                }
            }
        }
    }
    let mut corners: Vec<Vec2> = fixed
        .iter()
        .zip(&essential)
        .filter(|(_, &e)| e)
        .map(|(&p, _)| p)
        .collect();
    // distinct points only
    corners.dedup_by(|a, b| a.dist(*b) <= tol);
    if corners.len() < 3 {
        return Err(GeometryError::TooFewEssentialFixedPoints {
            found: corners.len(),
        });
    }

    // Counterclockwise order about the centroid, starting at the smallest angle.
    let centroid =
        corners.iter().fold(Vec2::ZERO, |acc, &v| acc + v) * (1.0 / corners.len() as f64);
    corners.sort_by(|a, b| {
        (*a - centroid)
            .angle()
            .partial_cmp(&(*b - centroid).angle())
            .unwrap()
    });

    // Regular polygon check: equal radii, equally spaced angles.
    let k = corners.len();
    let r0 = (corners[0] - centroid).norm();
    for (i, &c) in corners.iter().enumerate() {
        let d = c - centroid;
        if (d.norm() - r0).abs() > tol * 10.0 {
            return Err(GeometryError::AxiomViolation(
                "essential fixed points are not concyclic".into(),
            ));
        }
        let expect = (corners[0] - centroid).angle() + std::f64::consts::TAU * i as f64 / k as f64;
        let diff = (d.angle() - expect).rem_euclid(std::f64::consts::TAU);
        if diff.min(std::f64::consts::TAU - diff) > 1e-7 {
            return Err(GeometryError::AxiomViolation(
                "essential fixed points are not equally spaced".into(),
            ));
        }
    }

    let mut system = FractalSystem {
        hausdorff_dim: (n as f64).ln() / spec.scale.ln(),
        sim: spec,
        corners,
        walk_dim: None,
        max_corner_rank: 0,
        vertex_count_constant: 1.0,
        validation_depth: depth,
    };

    validate_axioms(&system, depth)?;

    // Measured constants: r0 and the vertex-count ratio over validated windows.
    let mut c0: f64 = 1.0;
    let mut rank_max = 1usize;
    for d in 1..=depth.max(2) {
        let g = build_graph_arc(&Arc::new(system.clone()), d as i32, 0, usize::MAX)?;
        let ratio = g.vertex_count() as f64 / (n as f64).powi(d as i32);
        c0 = c0.max(ratio);
        rank_max = rank_max.max(g.vertices.iter().map(|v| v.rank()).max().unwrap_or(1));
    }
    if system.corner_count() == 3 && !(2..=3).contains(&rank_max) {
        return Err(GeometryError::AxiomViolation(format!(
            "triangular system with corner rank {rank_max}, expected 2 or 3"
        )));
    }
    system.max_corner_rank = rank_max;
    system.vertex_count_constant = c0;
    Ok(system)
}

fn validate_axioms(system: &FractalSystem, depth: u32) -> Result<(), GeometryError> {
    let sim = &system.sim;
    let n = sim.map_count();
    let corner_keys: Vec<GridKey> = system.corners.iter().map(|&c| grid_key(c)).collect();

    // Grid of the generator at the validation depth, as key sets per depth-1 cell.
    let deep_grid = |cell: usize| -> Vec<GridKey> {
        let mut pts: Vec<Vec2> = system.corners.clone();
        for _ in 1..depth {
            let mut next = Vec::with_capacity(pts.len() * n);
            for i in 0..n {
                for &p in &pts {
                    next.push(sim.apply(i, p));
                }
            }
            pts = next;
        }
        let mut keys: Vec<GridKey> = pts.iter().map(|&p| grid_key(sim.apply(cell, p))).collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    };
    let cell_grids: Vec<Vec<GridKey>> = (0..n).map(deep_grid).collect();
    let cell_corners: Vec<Vec<GridKey>> = (0..n)
        .map(|i| {
            let mut ks: Vec<GridKey> = system
                .corners
                .iter()
                .map(|&c| grid_key(sim.apply(i, c)))
                .collect();
            ks.sort_unstable();
            ks
        })
        .collect();

    // Nesting: cells intersect only in shared corner images.
    for i in 0..n {
        for j in (i + 1)..n {
            let shared: Vec<&GridKey> = cell_grids[i]
                .iter()
                .filter(|k| cell_grids[j].binary_search(k).is_ok())
                .collect();
            for key in shared {
                let in_corners = cell_corners[i].binary_search(key).is_ok()
                    && cell_corners[j].binary_search(key).is_ok();
                if !in_corners {
                    return Err(GeometryError::AxiomViolation(format!(
                        "nesting: cells {i} and {j} overlap off their corner sets"
                    )));
                }
            }
        }
    }

    // Symmetry: each corner-bisector reflection permutes depth-1 corner sets.
    let k = system.corner_count();
    for a in 0..k {
        for b in (a + 1)..k {
            let x = system.corners[a];
            let y = system.corners[b];
            let mid = (x + y) * 0.5;
            let axis = y - x;
            let len2 = axis.x * axis.x + axis.y * axis.y;
            let reflect = |p: Vec2| -> Vec2 {
                // reflection across the line through `mid` perpendicular to `axis`
                let d = p - mid;
                let proj = (d.x * axis.x + d.y * axis.y) / len2;
                p - axis * (2.0 * proj)
            };
            for i in 0..n {
                let mut img: Vec<GridKey> = system
                    .corners
                    .iter()
                    .map(|&c| grid_key(reflect(sim.apply(i, c))))
                    .collect();
                img.sort_unstable();
                if !cell_corners.iter().any(|cs| cs == &img) {
                    return Err(GeometryError::AxiomViolation(format!(
                        "symmetry: reflection across bisector of corners {a},{b} does not permute cells"
                    )));
                }
            }
        }
    }

    // Connectivity of the depth-1 cell graph.
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            let touching = cell_corners[i]
                .iter()
                .any(|k| cell_corners[j].binary_search(k).is_ok());
            if touching {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut queue = vec![0usize];
    seen[0] = true;
    while let Some(c) = queue.pop() {
        for &d in &adj[c] {
            if !seen[d] {
                seen[d] = true;
                queue.push(d);
            }
        }
    }
    if !seen.iter().all(|&s| s) {
        return Err(GeometryError::NotConnected);
    }

    // Non-identity isometric parts must preserve the generator's grid; the
    // translate-only cell addressing depends on it.
    if !sim.isometry.is_identity() {
        let u = sim.isometry.matrix();
        let mut all: Vec<GridKey> = cell_grids.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        for &(kx, ky) in &all {
            let p = Vec2::new(kx as f64 / KEY_SCALE, ky as f64 / KEY_SCALE);
            if all.binary_search(&grid_key(u.apply(p))).is_err() {
                return Err(GeometryError::AxiomViolation(
                    "isometric part does not preserve the generator".into(),
                ));
            }
        }
        for &ck in &corner_keys {
            let p = Vec2::new(ck.0 as f64 / KEY_SCALE, ck.1 as f64 / KEY_SCALE);
            if corner_keys
                .iter()
                .all(|&other| other != grid_key(u.apply(p)))
            {
                return Err(GeometryError::AxiomViolation(
                    "isometric part does not permute essential fixed points".into(),
                ));
            }
        }
    }

    Ok(())
}

/// Address of an `m`-cell inside the window `K^<M>`: the word lists digit
/// choices from the coarsest level down, so the ancestor at scale `s` is the
/// prefix of length `M - s`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddress {
    pub scale: i32,
    pub window: i32,
    pub word: Vec<u8>,
}

impl CellAddress {
    pub fn depth(&self) -> usize {
        (self.window - self.scale) as usize
    }

    /// Base point of the cell in resolution units (positions over `L^m`).
    pub fn base_point_units(&self, sim: &SimilitudeSystem) -> Vec2 {
        let len = self.word.len();
        let mut base = Vec2::ZERO;
        for (s, &digit) in self.word.iter().enumerate() {
            base = base + sim.translation(digit as usize) * sim.scale.powi((len - s) as i32);
        }
        base
    }

    /// Barycenter of the cell's corner polygon, in resolution units.
    pub fn barycenter_units(&self, system: &FractalSystem) -> Vec2 {
        self.base_point_units(system.similitudes()) + system.corner_centroid()
    }

    /// Address of the enclosing cell at coarser scale `s`.
    pub fn ancestor(&self, s: i32) -> CellAddress {
        assert!(
            s >= self.scale && s <= self.window,
            "ancestor scale out of range"
        );
        CellAddress {
            scale: s,
            window: self.window,
            word: self.word[..(self.window - s) as usize].to_vec(),
        }
    }

    /// 1-based digit string, coarsest level first; the window itself is `"e"`.
    pub fn word_string(&self) -> String {
        if self.word.is_empty() {
            return "e".into();
        }
        self.word.iter().map(|d| (d + 1).to_string()).collect()
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}/{}", self.word_string(), self.scale, self.window)
    }
}

/// All `m`-cells of the window `K^<M>` in lexicographic word order.
pub fn enumerate_cells(
    system: &FractalSystem,
    window: i32,
    scale: i32,
) -> Result<Vec<CellAddress>, GeometryError> {
    if scale > window {
        return Err(GeometryError::ScaleOrderViolation {
            window,
            resolution: scale,
        });
    }
    let depth = (window - scale) as usize;
    let n = system.map_count();
    let count = n
        .checked_pow(depth as u32)
        .ok_or(GeometryError::ResourceLimit {
            needed: usize::MAX,
            cap: usize::MAX,
        })?;
    let mut cells = Vec::with_capacity(count);
    let mut word = vec![0u8; depth];
    loop {
        cells.push(CellAddress {
            scale,
            window,
            word: word.clone(),
        });
        // lexicographic increment
        let mut pos = depth;
        loop {
            if pos == 0 {
                return Ok(cells);
            }
            pos -= 1;
            if (word[pos] as usize) + 1 < n {
                word[pos] += 1;
                word[pos + 1..].fill(0);
                break;
            }
        }
    }
}

/// A vertex of the window grid.
#[derive(Clone, Debug)]
pub struct Vertex {
    /// Position in resolution units.
    pub position: Vec2,
    pub key: GridKey,
    /// Indices of incident cells within the owning graph.
    pub cells: Vec<usize>,
    pub window_corner: bool,
}

impl Vertex {
    pub fn rank(&self) -> usize {
        self.cells.len()
    }
}

/// The grid of `m`-cells inside a window `K^<M>` with vertex and cell
/// adjacency.
#[derive(Clone, Debug)]
pub struct ApproxGraph {
    pub system: Arc<FractalSystem>,
    pub window: i32,
    pub resolution: i32,
    pub cells: Vec<CellAddress>,
    /// Corner vertex ids per cell, in the canonical corner order.
    pub cell_vertices: Vec<Vec<VertexId>>,
    pub vertices: Vec<Vertex>,
    /// `(neighbor, conductance)` pairs; conductance counts shared cells.
    pub adjacency: Vec<Vec<(VertexId, u32)>>,
    /// Cells sharing at least one vertex.
    pub cell_neighbors: Vec<Vec<usize>>,
    /// The k window corners in corner order.
    pub corner_ids: Vec<VertexId>,
}

pub fn build_graph(
    system: &Arc<FractalSystem>,
    window: i32,
    resolution: i32,
    max_vertices: usize,
) -> Result<ApproxGraph, GeometryError> {
    build_graph_arc(system, window, resolution, max_vertices)
}

fn build_graph_arc(
    system: &Arc<FractalSystem>,
    window: i32,
    resolution: i32,
    max_vertices: usize,
) -> Result<ApproxGraph, GeometryError> {
    let cells = enumerate_cells(system, window, resolution)?;
    let k = system.corner_count();
    if cells.len().saturating_mul(k) > max_vertices.saturating_mul(system.max_corner_rank.max(3)) {
        return Err(GeometryError::ResourceLimit {
            needed: cells.len() * k,
            cap: max_vertices * system.max_corner_rank.max(3),
        });
    }

    let sim = system.similitudes();
    let mut by_key: BTreeMap<GridKey, (Vec2, Vec<(usize, usize)>)> = BTreeMap::new();
    for (ci, cell) in cells.iter().enumerate() {
        let base = cell.base_point_units(sim);
        for (corner_idx, &corner) in system.corners().iter().enumerate() {
            let p = corner + base;
            match by_key.entry(grid_key(p)) {
                Entry::Vacant(e) => {
                    e.insert((p, vec![(ci, corner_idx)]));
                }
                Entry::Occupied(mut e) => e.get_mut().1.push((ci, corner_idx)),
            }
        }
    }
    if by_key.len() > max_vertices {
        return Err(GeometryError::ResourceLimit {
            needed: by_key.len(),
            cap: max_vertices,
        });
    }

    // Ids in sorted key order: stable under any enumeration order.
    let mut vertices = Vec::with_capacity(by_key.len());
    let mut cell_vertices = vec![vec![0usize; k]; cells.len()];
    let mut key_to_id: BTreeMap<GridKey, VertexId> = BTreeMap::new();
    for (id, (key, (pos, incidences))) in by_key.into_iter().enumerate() {
        let mut cell_ids: Vec<usize> = incidences.iter().map(|&(c, _)| c).collect();
        cell_ids.sort_unstable();
        cell_ids.dedup();
        for &(c, corner_idx) in &incidences {
            cell_vertices[c][corner_idx] = id;
        }
        vertices.push(Vertex {
            position: pos,
            key,
            cells: cell_ids,
            window_corner: false,
        });
        key_to_id.insert(key, id);
    }

    // Window corners L^depth * V0.
    let depth = window - resolution;
    let blow = system.scale().powi(depth);
    let mut corner_ids = Vec::with_capacity(k);
    for &c in system.corners() {
        let key = grid_key(c * blow);
        let id = *key_to_id.get(&key).ok_or_else(|| {
            GeometryError::AxiomViolation("window corner missing from grid".into())
        })?;
        vertices[id].window_corner = true;
        corner_ids.push(id);
    }

    // Vertex adjacency: complete graph within each cell, conductance counts
    // shared cells.
    let mut edge_mult: BTreeMap<(VertexId, VertexId), u32> = BTreeMap::new();
    for cv in &cell_vertices {
        for a in 0..k {
            for b in (a + 1)..k {
                let (x, y) = (cv[a].min(cv[b]), cv[a].max(cv[b]));
                *edge_mult.entry((x, y)).or_insert(0) += 1;
            }
        }
    }
    let mut adjacency = vec![Vec::new(); vertices.len()];
    for (&(x, y), &mult) in &edge_mult {
        adjacency[x].push((y, mult));
        adjacency[y].push((x, mult));
    }

    // Cell adjacency via shared vertices.
    let mut cell_neighbors = vec![Vec::new(); cells.len()];
    for v in &vertices {
        for (i, &a) in v.cells.iter().enumerate() {
            for &b in &v.cells[i + 1..] {
                cell_neighbors[a].push(b);
                cell_neighbors[b].push(a);
            }
        }
    }
    for nb in &mut cell_neighbors {
        nb.sort_unstable();
        nb.dedup();
    }

    let graph = ApproxGraph {
        system: system.clone(),
        window,
        resolution,
        cells,
        cell_vertices,
        vertices,
        adjacency,
        cell_neighbors,
        corner_ids,
    };
    if !graph.is_connected() {
        return Err(GeometryError::NotConnected);
    }
    Ok(graph)
}

impl ApproxGraph {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn depth(&self) -> i32 {
        self.window - self.resolution
    }

    /// Conductance-counted degree.
    pub fn degree(&self, v: VertexId) -> f64 {
        self.adjacency[v].iter().map(|&(_, c)| c as f64).sum()
    }

    pub fn is_connected(&self) -> bool {
        if self.vertices.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut queue = vec![0usize];
        seen[0] = true;
        let mut visited = 1usize;
        while let Some(v) = queue.pop() {
            for &(w, _) in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    visited += 1;
                    queue.push(w);
                }
            }
        }
        visited == self.vertices.len()
    }

    /// Looks a vertex up by its resolution-unit position.
    pub fn vertex_at(&self, position: Vec2) -> Option<VertexId> {
        let key = grid_key(position);
        self.vertices.binary_search_by(|v| v.key.cmp(&key)).ok()
    }

    /// Cells containing `v` together with its rank.
    pub fn neighborhood(&self, v: VertexId) -> Result<(&[usize], usize), GeometryError> {
        let vert = self
            .vertices
            .get(v)
            .ok_or(GeometryError::VertexOutsideWindow(v))?;
        Ok((&vert.cells, vert.rank()))
    }

    /// Chain metric at the graph's cell scale: the least number of cells in a
    /// chain of pairwise-intersecting cells joining `x` to `y`.
    pub fn graph_distance(&self, x: VertexId, y: VertexId) -> Result<u32, GeometryError> {
        if x >= self.vertices.len() || y >= self.vertices.len() {
            return Err(GeometryError::VertexOutsideWindow(x.max(y)));
        }
        if x == y {
            return Ok(0);
        }
        let target: &[usize] = &self.vertices[y].cells;
        let mut dist = vec![u32::MAX; self.cells.len()];
        let mut queue = std::collections::VecDeque::new();
        for &c in &self.vertices[x].cells {
            dist[c] = 1;
            queue.push_back(c);
        }
        let mut best = u32::MAX;
        while let Some(c) = queue.pop_front() {
            if target.contains(&c) {
                best = best.min(dist[c]);
                continue;
            }
            for &d in &self.cell_neighbors[c] {
                if dist[d] == u32::MAX {
                    dist[d] = dist[c] + 1;
                    queue.push_back(d);
                }
            }
        }
        if best == u32::MAX {
            // disconnected grids are rejected at build time
            return Err(GeometryError::NotConnected);
        }
        Ok(best)
    }

    /// Scale factor from resolution units back to absolute coordinates.
    pub fn unit(&self) -> f64 {
        self.system.scale().powi(self.resolution)
    }

    /// `id,x,y,rank` rows in absolute coordinates.
    pub fn vertices_csv(&self) -> String {
        let unit = self.unit();
        let mut out = String::from("id,x,y,rank\n");
        for (id, v) in self.vertices.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                id,
                v.position.x * unit,
                v.position.y * unit,
                v.rank()
            ));
        }
        out
    }

    /// `src,dst` rows, one per undirected edge.
    pub fn edges_csv(&self) -> String {
        let mut out = String::from("src,dst\n");
        for (v, nbrs) in self.adjacency.iter().enumerate() {
            for &(w, _) in nbrs {
                if v < w {
                    out.push_str(&format!("{v},{w}\n"));
                }
            }
        }
        out
    }
}
