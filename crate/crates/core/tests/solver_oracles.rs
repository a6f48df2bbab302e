//! Cross-checks of the production eigensolver path against an independent
//! Jacobi implementation, plus the partial-solver accuracy contract.

mod common;

use fractal_ids::labeling::build_projection;
use fractal_ids::spectral::{
    eigen_decompose, eigen_lowest, eigenvalues_only, neumann_laplacian, Boundary, SymmetricOperator,
};

use common::{gasket, jacobi_eigenvalues};

fn random_symmetric(n: usize, seed: u64) -> Vec<f64> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = rng.random_range(-1.0..1.0);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    m
}

#[test]
fn dense_solver_matches_jacobi_oracle() {
    let n = 50;
    let m = random_symmetric(n, 31);
    let oracle = jacobi_eigenvalues(&m, n);
    let op = SymmetricOperator::from_dense(m, vec![1.0; n], Boundary::Neumann, 0, 0);
    let ours = eigen_decompose(&op).unwrap().values;
    let fast = eigenvalues_only(&op);
    for ((a, b), c) in ours.iter().zip(&oracle).zip(&fast) {
        assert!((a - b).abs() < 1e-9, "{a} vs oracle {b}");
        assert!((a - c).abs() < 1e-10);
    }
}

#[test]
fn window_operator_matches_jacobi_oracle() {
    let sys = gasket();
    let pm = build_projection(&sys, 2, 0, 1, 1 << 20).unwrap();
    let op = neumann_laplacian(&pm).unwrap();
    let dense: Vec<f64> = (0..op.n)
        .flat_map(|i| (0..op.n).map(move |j| (i, j)))
        .map(|(i, j)| op.get(i, j))
        .collect();
    let oracle = jacobi_eigenvalues(&dense, op.n);
    let ours = eigen_decompose(&op).unwrap().values;
    for (a, b) in ours.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn partial_solver_contract_on_large_windows() {
    // the lowest Ritz values must match the dense spectrum with multiplicity,
    // within the documented contract
    let sys = gasket();
    for (window, k) in [(5, 30), (6, 40)] {
        let pm = build_projection(&sys, window, 0, 1, 1 << 20).unwrap();
        let op = neumann_laplacian(&pm).unwrap();
        let dense = eigen_decompose(&op).unwrap().values;
        let low = eigen_lowest(&op, k).unwrap();
        let norm = dense.last().copied().unwrap();
        for (i, (a, b)) in low.iter().zip(&dense[..k]).enumerate() {
            assert!(
                (a - b).abs() <= 1e-8 * norm,
                "window {window} ritz value {i}: {a} vs {b}"
            );
        }
    }
}
