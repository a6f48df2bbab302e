//! Walk kernels, window operators, eigensolves, and spectral subordination.
//!
//! The discrete generator on a window grid is `I - P` for the
//! conductance-weighted walk `P`, symmetrized by the reversible weights and
//! renormalized to continuum scale by the time-scaling factor `tau`:
//! a grid refined `depth` levels below the unit scale carries eigenvalues
//! `mu = tau^depth * mu_hat`. Subordination then acts entrywise through a
//! Bernstein function, and Schrödinger operators are assembled as
//! `U phi(mu) U^T + diag(V)` in the weighted inner product.
//!
//! Boundary conditions: the *Neumann* operator is the folded kernel on the
//! window itself; the *Dirichlet* operator takes the subordinated generator
//! of a padded ambient window and restricts it to the window's rows and
//! columns, which kills exactly the jumps that leave the window.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bernstein::BernsteinFunction;
use crate::geometry::{ApproxGraph, GeometryError};
use crate::labeling::{fold_kernel, LabelingError, ProjectionMap};

/// Dense full eigensolves are used up to this dimension; larger operators get
/// iterative partial solves of the low spectrum.
pub const DENSE_EIGEN_LIMIT: usize = 4000;

/// Number of low eigenvalues reported by the partial solver.
pub const PARTIAL_EIGEN_COUNT: usize = 200;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error("eigensolver failure: {0}")]
    SolverFailure(String),
    #[error("dimension mismatch: operator is {operator}, argument is {argument}")]
    DimensionMismatch { operator: usize, argument: usize },
    #[error("time-scaling ratios did not converge: {0:?}")]
    NonConvergentRatio(Vec<f64>),
    #[error("invalid bernstein function: {0}")]
    Bernstein(String),
}

/// Row-stochastic kernel with its reversible weights.
#[derive(Clone, Debug)]
pub struct WalkKernel {
    /// Sparse rows, columns sorted.
    pub rows: Vec<Vec<(usize, f64)>>,
    pub weights: Vec<f64>,
}

impl WalkKernel {
    /// Conductance-weighted nearest-neighbor walk on a window grid.
    pub fn from_graph(graph: &ApproxGraph) -> WalkKernel {
        let n = graph.vertex_count();
        let mut rows = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for v in 0..n {
            let deg = graph.degree(v);
            let row: Vec<(usize, f64)> = graph.adjacency[v]
                .iter()
                .map(|&(w, c)| (w, c as f64 / deg))
                .collect();
            rows.push(row);
            weights.push(deg);
        }
        WalkKernel { rows, weights }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest deviation of a row sum from 1.
    pub fn max_row_defect(&self) -> f64 {
        self.rows
            .iter()
            .map(|row| (1.0 - row.iter().map(|&(_, p)| p).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    /// Largest deviation from detailed balance `w_x P_xy = w_y P_yx`.
    pub fn reversibility_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (x, row) in self.rows.iter().enumerate() {
            for &(y, p) in row {
                let back = self.rows[y]
                    .iter()
                    .find(|&&(z, _)| z == x)
                    .map(|&(_, q)| q)
                    .unwrap_or(0.0);
                worst = worst.max((self.weights[x] * p - self.weights[y] * back).abs());
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    Neumann,
    Dirichlet,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Neumann => write!(f, "N"),
            Boundary::Dirichlet => write!(f, "D"),
        }
    }
}

#[derive(Clone, Debug)]
enum Storage {
    Sparse(Vec<Vec<(usize, f64)>>),
    Dense(Vec<f64>),
}

/// A symmetric positive-semidefinite operator on a window grid, stored with
/// the weights of the inner product it was symmetrized in.
#[derive(Clone, Debug)]
pub struct SymmetricOperator {
    pub n: usize,
    storage: Storage,
    pub weights: Vec<f64>,
    pub boundary: Boundary,
    pub window: i32,
    pub resolution: i32,
    pub pad: Option<i32>,
}

impl SymmetricOperator {
    /// Symmetrized generator `D^{1/2} (I - P) D^{-1/2}` of a reversible
    /// kernel.
    pub fn from_kernel(
        kernel: &WalkKernel,
        boundary: Boundary,
        window: i32,
        resolution: i32,
    ) -> SymmetricOperator {
        let n = kernel.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for x in 0..n {
            let mut diag = 1.0;
            for &(y, p) in &kernel.rows[x] {
                if y == x {
                    diag -= p;
                    continue;
                }
                if y > x {
                    let back = kernel.rows[y]
                        .iter()
                        .find(|&&(z, _)| z == x)
                        .map(|&(_, q)| q)
                        .unwrap_or(0.0);
                    // average the two detailed-balance routes for exact symmetry
                    let c = 0.5 * (kernel.weights[x] * p + kernel.weights[y] * back);
                    let a = -c / (kernel.weights[x] * kernel.weights[y]).sqrt();
                    rows[x].push((y, a));
                    rows[y].push((x, a));
                }
            }
            rows[x].push((x, diag));
        }
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
        }
        SymmetricOperator {
            n,
            storage: Storage::Sparse(rows),
            weights: kernel.weights.clone(),
            boundary,
            window,
            resolution,
            pad: None,
        }
    }

    pub fn from_dense(
        matrix: Vec<f64>,
        weights: Vec<f64>,
        boundary: Boundary,
        window: i32,
        resolution: i32,
    ) -> SymmetricOperator {
        let n = weights.len();
        assert_eq!(matrix.len(), n * n);
        SymmetricOperator {
            n,
            storage: Storage::Dense(matrix),
            weights,
            boundary,
            window,
            resolution,
            pad: None,
        }
    }

    pub fn with_pad(mut self, pad: i32) -> Self {
        self.pad = Some(pad);
        self
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(m) => m[i * self.n + j],
            Storage::Sparse(rows) => rows[i]
                .iter()
                .find(|&&(c, _)| c == j)
                .map(|&(_, v)| v)
                .unwrap_or(0.0),
        }
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        match &self.storage {
            Storage::Dense(m) => {
                for i in 0..self.n {
                    out[i] = m[i * self.n..(i + 1) * self.n]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum();
                }
            }
            Storage::Sparse(rows) => {
                for i in 0..self.n {
                    out[i] = rows[i].iter().map(|&(j, a)| a * x[j]).sum();
                }
            }
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match &self.storage {
            Storage::Dense(m) => DMatrix::from_row_slice(self.n, self.n, m),
            Storage::Sparse(rows) => {
                let mut m = DMatrix::zeros(self.n, self.n);
                for (i, row) in rows.iter().enumerate() {
                    for &(j, a) in row {
                        m[(i, j)] = a;
                    }
                }
                m
            }
        }
    }

    /// Restriction to the given rows/columns, in the given order.
    pub fn principal_submatrix(&self, keep: &[usize]) -> SymmetricOperator {
        let k = keep.len();
        let mut dense = vec![0.0; k * k];
        for (i, &a) in keep.iter().enumerate() {
            for (j, &b) in keep.iter().enumerate() {
                dense[i * k + j] = self.get(a, b);
            }
        }
        SymmetricOperator {
            n: k,
            storage: Storage::Dense(dense),
            weights: keep.iter().map(|&a| self.weights[a]).collect(),
            boundary: self.boundary,
            window: self.window,
            resolution: self.resolution,
            pad: self.pad,
        }
    }

    /// `A + diag(v)`.
    pub fn add_diagonal(&self, v: &[f64]) -> Result<SymmetricOperator, SpectralError> {
        if v.len() != self.n {
            return Err(SpectralError::DimensionMismatch {
                operator: self.n,
                argument: v.len(),
            });
        }
        let mut out = self.clone();
        match &mut out.storage {
            Storage::Dense(m) => {
                for i in 0..self.n {
                    m[i * self.n + i] += v[i];
                }
            }
            Storage::Sparse(rows) => {
                for (i, row) in rows.iter_mut().enumerate() {
                    match row.binary_search_by_key(&i, |&(j, _)| j) {
                        Ok(pos) => row[pos].1 += v[i],
                        Err(pos) => row.insert(pos, (i, v[i])),
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub window: i32,
    pub resolution: i32,
    pub boundary: Boundary,
    pub phi: Option<String>,
    pub tau: Option<f64>,
    pub renormalized: bool,
    pub partial: bool,
}

/// An ordered spectrum: `mu` are generator eigenvalues, `lambda` their
/// subordinated images once a Bernstein function has been applied.
#[derive(Clone, Debug)]
pub struct SpectrumRecord {
    pub mu: Vec<f64>,
    pub lambda: Option<Vec<f64>>,
    pub meta: SpectrumMeta,
}

impl SpectrumRecord {
    pub fn new(mu: Vec<f64>, meta: SpectrumMeta) -> Self {
        SpectrumRecord {
            mu,
            lambda: None,
            meta,
        }
    }

    /// Subordinated values when present, otherwise the raw generator values.
    pub fn values(&self) -> &[f64] {
        self.lambda.as_deref().unwrap_or(&self.mu)
    }

    /// `index,mu,lambda` rows.
    pub fn csv(&self) -> String {
        let mut out = String::from("index,mu,lambda\n");
        let lam = self.values();
        for (i, (&m, &l)) in self.mu.iter().zip(lam).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, m, l));
        }
        out
    }
}

/// Full eigendecomposition, eigenvalues ascending with matching columns.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Dense symmetric eigendecomposition with a residual check
/// `||A v - lambda v|| <= 1e-8 ||A||` per pair.
pub fn eigen_decompose(op: &SymmetricOperator) -> Result<EigenPairs, SpectralError> {
    let m = op.to_matrix();
    let se = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..op.n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(op.n, op.n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &se.eigenvectors.column(i));
    }
    let norm = values
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1e-300);
    for (col, &lam) in values.iter().enumerate() {
        let v = vectors.column(col);
        let r = (&m * v) - v * lam;
        if r.amax() > 1e-8 * norm {
            return Err(SpectralError::SolverFailure(format!(
                "residual {:.3e} exceeds contract at eigenvalue {lam}",
                r.amax()
            )));
        }
    }
    Ok(EigenPairs { values, vectors })
}

/// Lowest `k` eigenvalues by deflated, restarted Lanczos with full
/// reorthogonalization.
///
/// Plain Lanczos resolves one eigenvector per eigenspace; window spectra are
/// heavily degenerate, so converged Ritz vectors are deflated and the
/// iteration restarts on the orthogonal complement until `k` eigenvalues,
/// counted with multiplicity, have converged. Accuracy contract (covered by
/// tests): each reported value matches a dense solve to `1e-8 ||A||`.
pub fn eigen_lowest(op: &SymmetricOperator, k: usize) -> Result<Vec<f64>, SpectralError> {
    let n = op.n;
    if k >= n || n <= 64 {
        return Ok(eigen_decompose(op)?.values[..k.min(n)].to_vec());
    }
    let steps = (2 * k + 40).min(n);
    let mut converged_vals: Vec<f64> = Vec::new();
    let mut converged_vecs: Vec<Vec<f64>> = Vec::new();
    let mut norm_estimate = 1e-300f64;

    let mut restart = 0usize;
    loop {
        // enough values, and the previous restart found nothing new below
        // the k-th smallest: the low spectrum is exhausted with multiplicity
        restart += 1;
        if restart > 4 * k + 16 {
            break;
        }
        // fresh deterministic start, orthogonal to everything converged
        let mut v0: Vec<f64> = (0..n)
            .map(|i| {
                let z = crate::hash::stream_seed(0x1a2b3c4d + restart as u64, &[i as u64]);
                (z as f64 / u64::MAX as f64) - 0.5
            })
            .collect();
        orthogonalize(&mut v0, &converged_vecs);
        if dot(&v0, &v0).sqrt() < 1e-12 {
            continue;
        }
        normalize(&mut v0);

        let mut basis: Vec<Vec<f64>> = vec![v0];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut w = vec![0.0; n];
        for j in 0..steps {
            op.matvec(&basis[j], &mut w);
            if j > 0 {
                let beta = betas[j - 1];
                for i in 0..n {
                    w[i] -= beta * basis[j - 1][i];
                }
            }
            let alpha = dot(&w, &basis[j]);
            for i in 0..n {
                w[i] -= alpha * basis[j][i];
            }
            // full reorthogonalization against the basis and the deflated set
            for _ in 0..2 {
                orthogonalize(&mut w, &basis);
                orthogonalize(&mut w, &converged_vecs);
            }
            alphas.push(alpha);
            let beta = dot(&w, &w).sqrt();
            if j + 1 == steps || beta < 1e-13 {
                break;
            }
            betas.push(beta);
            let mut next = w.clone();
            for x in &mut next {
                *x /= beta;
            }
            basis.push(next);
        }

        let m = alphas.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let se = nalgebra::SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
        norm_estimate = norm_estimate.max(se.eigenvalues[order[m - 1]].abs());
        let beta_last = betas.last().copied().unwrap_or(0.0);

        let mut accepted = 0usize;
        for &idx in &order {
            let val = se.eigenvalues[idx];
            // standard Lanczos residual bound |beta_m s_mi|
            let residual = (beta_last * se.eigenvectors[(m - 1, idx)]).abs();
            if residual > 1e-10 * norm_estimate.max(1.0) {
                continue;
            }
            let mut ritz = vec![0.0; n];
            for (j, b) in basis.iter().enumerate() {
                let c = se.eigenvectors[(j, idx)];
                for i in 0..n {
                    ritz[i] += c * b[i];
                }
            }
            orthogonalize(&mut ritz, &converged_vecs);
            let norm = dot(&ritz, &ritz).sqrt();
            if norm < 1e-8 {
                continue; // duplicate of an already deflated vector
            }
            for x in &mut ritz {
                *x /= norm;
            }
            converged_vals.push(val);
            converged_vecs.push(ritz);
            if converged_vals.len() >= 3 * k + 8 {
                break;
            }
            let kth = kth_smallest(&converged_vals, k);
            if converged_vals.len() >= k && val > kth {
                accepted += 1; // progress, but already above the target range
                break;
            }
            accepted += 1;
        }
        if converged_vals.len() >= k {
            let kth = kth_smallest(&converged_vals, k);
            // a barren restart below the k-th smallest means the complement
            // holds nothing further down
            if accepted == 0
                || converged_vals[converged_vals.len() - accepted..]
                    .iter()
                    .all(|&v| v > kth)
            {
                break;
            }
        }
    }

    if converged_vals.len() < k {
        return Err(SpectralError::SolverFailure(format!(
            "partial solver converged {} of {k} eigenvalues",
            converged_vals.len()
        )));
    }
    converged_vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    converged_vals.truncate(k);
    Ok(converged_vals)
}

fn kth_smallest(values: &[f64], k: usize) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted[(k - 1).min(sorted.len() - 1)]
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for b in against {
        let c = dot(v, b);
        for i in 0..v.len() {
            v[i] -= c * b[i];
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

/// Eigenvalues only, skipping the eigenvector accumulation.
pub fn eigenvalues_only(op: &SymmetricOperator) -> Vec<f64> {
    let mut vals: Vec<f64> = op
        .to_matrix()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Ascending spectrum of the operator; partial above the dense limit.
pub fn eigen_spectrum(op: &SymmetricOperator) -> Result<SpectrumRecord, SpectralError> {
    let partial = op.n > DENSE_EIGEN_LIMIT;
    let mu = if partial {
        eigen_lowest(op, PARTIAL_EIGEN_COUNT)?
    } else {
        eigen_decompose(op)?.values
    };
    Ok(SpectrumRecord::new(
        mu,
        SpectrumMeta {
            window: op.window,
            resolution: op.resolution,
            boundary: op.boundary,
            phi: None,
            tau: None,
            renormalized: false,
            partial,
        },
    ))
}

/// Reflected-walk generator on the window: `I - P` for the folded kernel,
/// symmetrized by the fold weights.
pub fn neumann_laplacian(pm: &ProjectionMap) -> Result<SymmetricOperator, SpectralError> {
    let ambient = WalkKernel::from_graph(&pm.ambient);
    let folded = fold_kernel(&ambient, pm)?;
    Ok(SymmetricOperator::from_kernel(
        &folded,
        Boundary::Neumann,
        pm.window,
        pm.resolution,
    ))
}

/// Killed-walk generator: the ambient window's generator restricted to the
/// rows and columns of the primary window's vertices.
pub fn dirichlet_laplacian(pm: &ProjectionMap) -> Result<SymmetricOperator, SpectralError> {
    let ambient = WalkKernel::from_graph(&pm.ambient);
    let full =
        SymmetricOperator::from_kernel(&ambient, Boundary::Dirichlet, pm.window, pm.resolution);
    let mut sub = full.principal_submatrix(&pm.target_to_ambient);
    sub.boundary = Boundary::Dirichlet;
    sub.pad = Some(pm.pad);
    Ok(sub)
}

#[derive(Clone, Debug)]
pub struct TimeScaling {
    pub tau: f64,
    pub walk_dim: f64,
    pub depths: Vec<u32>,
    pub mu2: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// Estimates the time-scaling factor from second eigenvalues of the unit
/// window under deepening resolution.
///
/// `tau_hat` is the deepest available ratio `mu2(depth)/mu2(depth+1)`; the
/// estimate is rejected when the last two ratios still drift by more than
/// `ratio_tol`.
pub fn estimate_time_scaling(
    system: &std::sync::Arc<crate::geometry::FractalSystem>,
    depths: &[u32],
    ratio_tol: f64,
    max_vertices: usize,
) -> Result<TimeScaling, SpectralError> {
    if depths.len() < 2 {
        return Err(SpectralError::SolverFailure(
            "need at least two depths for time scaling".into(),
        ));
    }
    let mut depths = depths.to_vec();
    depths.sort_unstable();
    let mut mu2 = Vec::with_capacity(depths.len());
    for &d in &depths {
        let pm = crate::labeling::build_projection(system, d as i32, 0, 1, max_vertices)?;
        let op = neumann_laplacian(&pm)?;
        let low = eigen_lowest(&op, 2)?;
        mu2.push(low[1]);
    }
    let ratios: Vec<f64> = mu2.windows(2).map(|w| w[0] / w[1]).collect();
    let tau = *ratios.last().unwrap();
    if ratios.len() >= 2 {
        let prev = ratios[ratios.len() - 2];
        if (tau / prev - 1.0).abs() > ratio_tol {
            return Err(SpectralError::NonConvergentRatio(ratios));
        }
    }
    let walk_dim = tau.ln() / system.scale().ln();
    Ok(TimeScaling {
        tau,
        walk_dim,
        depths,
        mu2,
        ratios,
    })
}

/// Rescales raw grid eigenvalues to continuum normalization:
/// `mu = tau^resolution_depth * mu_hat`, where `resolution_depth` counts
/// refinement levels below the unit scale (`-m` for a grid at resolution
/// `m`).
pub fn renormalize_spectrum(
    rec: &SpectrumRecord,
    tau: f64,
    resolution_depth: i32,
) -> SpectrumRecord {
    let factor = tau.powi(resolution_depth);
    let mut out = rec.clone();
    out.mu = rec.mu.iter().map(|&m| m * factor).collect();
    out.meta.tau = Some(tau);
    out.meta.renormalized = true;
    out
}

/// Applies a Bernstein function entrywise: `lambda_k = phi(mu_k)`.
pub fn subordinate_spectrum(
    rec: &SpectrumRecord,
    phi: &BernsteinFunction,
) -> Result<SpectrumRecord, SpectralError> {
    let lambda = rec
        .mu
        .iter()
        .map(|&m| phi.evaluate(m.max(0.0)))
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| SpectralError::Bernstein(e.to_string()))?;
    let mut out = rec.clone();
    out.lambda = Some(lambda);
    out.meta.phi = Some(phi.descriptor());
    Ok(out)
}

/// `sum_k exp(-lambda_k t)`.
pub fn trace_heat(values: &[f64], t: f64) -> f64 {
    values.iter().map(|&l| (-l * t).exp()).sum()
}

/// A subordinated free operator, cached so per-sample Schrödinger assemblies
/// only add a diagonal.
#[derive(Clone, Debug)]
pub struct SchrodingerBase {
    /// Dense `U phi(mu) U^T`, already restricted for Dirichlet boundaries.
    phi_matrix: Vec<f64>,
    pub weights: Vec<f64>,
    pub free: SpectrumRecord,
    pub boundary: Boundary,
    pub window: i32,
    pub resolution: i32,
    pub pad: Option<i32>,
}

impl SchrodingerBase {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

fn phi_of_operator(
    op: &SymmetricOperator,
    tau: f64,
    phi: &BernsteinFunction,
) -> Result<(Vec<f64>, Vec<f64>), SpectralError> {
    let pairs = eigen_decompose(op)?;
    let depth = -op.resolution;
    let factor = tau.powi(depth);
    let lambda: Vec<f64> = pairs
        .values
        .iter()
        .map(|&m| phi.evaluate((m * factor).max(0.0)))
        .collect::<Result<_, _>>()
        .map_err(|e| SpectralError::Bernstein(e.to_string()))?;
    let n = op.n;
    let mut scaled = pairs.vectors.clone();
    for (c, &l) in lambda.iter().enumerate() {
        scaled.column_mut(c).scale_mut(l);
    }
    let dense_m = scaled * pairs.vectors.transpose();
    let mut dense = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            dense[i * n + j] = dense_m[(i, j)];
        }
    }
    // exact symmetry for downstream solvers
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (dense[i * n + j] + dense[j * n + i]);
            dense[i * n + j] = avg;
            dense[j * n + i] = avg;
        }
    }
    Ok((dense, lambda))
}

/// Subordinated Neumann base on the window.
pub fn subordinated_neumann_base(
    pm: &ProjectionMap,
    tau: f64,
    phi: &BernsteinFunction,
) -> Result<SchrodingerBase, SpectralError> {
    let op = neumann_laplacian(pm)?;
    let (dense, mut lambda) = phi_of_operator(&op, tau, phi)?;
    lambda.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut free = SpectrumRecord::new(
        lambda.clone(),
        SpectrumMeta {
            window: pm.window,
            resolution: pm.resolution,
            boundary: Boundary::Neumann,
            phi: Some(phi.descriptor()),
            tau: Some(tau),
            renormalized: true,
            partial: false,
        },
    );
    // mu column keeps the renormalized generator values
    let base_rec = eigen_spectrum(&op)?;
    free.mu = renormalize_spectrum(&base_rec, tau, -pm.resolution).mu;
    free.lambda = Some(lambda);
    Ok(SchrodingerBase {
        phi_matrix: dense,
        weights: op.weights.clone(),
        free,
        boundary: Boundary::Neumann,
        window: pm.window,
        resolution: pm.resolution,
        pad: None,
    })
}

/// Subordinated Dirichlet base: `phi` of the ambient generator restricted to
/// the window's vertices.
pub fn subordinated_dirichlet_base(
    pm: &ProjectionMap,
    tau: f64,
    phi: &BernsteinFunction,
) -> Result<SchrodingerBase, SpectralError> {
    let ambient = WalkKernel::from_graph(&pm.ambient);
    let full =
        SymmetricOperator::from_kernel(&ambient, Boundary::Dirichlet, pm.window, pm.resolution);
    let (dense, _) = phi_of_operator(&full, tau, phi)?;
    let keep = &pm.target_to_ambient;
    let k = keep.len();
    let na = full.n;
    let mut sub = vec![0.0; k * k];
    for (i, &a) in keep.iter().enumerate() {
        for (j, &b) in keep.iter().enumerate() {
            sub[i * k + j] = dense[a * na + b];
        }
    }
    let weights: Vec<f64> = keep.iter().map(|&a| full.weights[a]).collect();
    let sub_op = SymmetricOperator::from_dense(
        sub.clone(),
        weights.clone(),
        Boundary::Dirichlet,
        pm.window,
        pm.resolution,
    );
    let free_vals = eigen_decompose(&sub_op)?.values;
    let free = SpectrumRecord {
        mu: free_vals.clone(),
        lambda: Some(free_vals),
        meta: SpectrumMeta {
            window: pm.window,
            resolution: pm.resolution,
            boundary: Boundary::Dirichlet,
            phi: Some(phi.descriptor()),
            tau: Some(tau),
            renormalized: true,
            partial: false,
        },
    };
    Ok(SchrodingerBase {
        phi_matrix: sub,
        weights,
        free,
        boundary: Boundary::Dirichlet,
        window: pm.window,
        resolution: pm.resolution,
        pad: Some(pm.pad),
    })
}

/// `phi(generator) + diag(V)`.
pub fn schrodinger_operator(
    base: &SchrodingerBase,
    potential: &[f64],
) -> Result<SymmetricOperator, SpectralError> {
    let n = base.dim();
    if potential.len() != n {
        return Err(SpectralError::DimensionMismatch {
            operator: n,
            argument: potential.len(),
        });
    }
    let mut dense = base.phi_matrix.clone();
    for i in 0..n {
        dense[i * n + i] += potential[i];
    }
    Ok(SymmetricOperator::from_dense(
        dense,
        base.weights.clone(),
        base.boundary,
        base.window,
        base.resolution,
    )
    .with_pad(base.pad.unwrap_or(0)))
}
