//! Eigenvalue counting measures, annealed Laplace curves, convergence
//! diagnostics, variational bounds, and Lifshitz-exponent fits.
//!
//! The empirical integrated density of states of a window spectrum is the
//! normalized counting function `N^-M #{n : lambda_n <= lambda}`; pooling
//! samples gives the annealed measure. Low-energy tails are extracted by
//! least squares on `log(-log IDS)` against `log lambda` (target slope
//! `-d/alpha`) and `log(-log L(t))` against `log t` (target `d/(d+alpha)`).

use serde::Serialize;
use thiserror::Error;

use crate::bernstein::BernsteinFunction;
use crate::environment::PotentialField;
use crate::spectral::{Boundary, SpectrumRecord, SymmetricOperator};

#[derive(Debug, Error)]
pub enum IdsError {
    #[error("temple precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("need 0 < p < gamma < 1, got p = {p}, gamma = {gamma}")]
    ParameterOrderViolation { p: f64, gamma: f64 },
    #[error("empty fit window: {0}")]
    EmptyWindow(String),
    #[error("counting function not positive on the window")]
    NonpositiveIds,
    #[error("diminished amplitude too large for the bracket: {0}")]
    AmplitudeTooLarge(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Pooled normalized eigenvalue counting measure.
#[derive(Clone, Debug)]
pub struct EmpiricalIds {
    pub window: i32,
    pub boundary: Boundary,
    pub maps: usize,
    pub samples: usize,
    /// All pooled eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
}

impl EmpiricalIds {
    pub fn from_spectrum(rec: &SpectrumRecord, maps: usize) -> EmpiricalIds {
        let mut eigenvalues = rec.values().to_vec();
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
        EmpiricalIds {
            window: rec.meta.window,
            boundary: rec.meta.boundary,
            maps,
            samples: 1,
            eigenvalues,
        }
    }

    pub fn pooled(
        spectra: &[Vec<f64>],
        window: i32,
        boundary: Boundary,
        maps: usize,
    ) -> EmpiricalIds {
        let mut eigenvalues: Vec<f64> = spectra.iter().flatten().copied().collect();
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
        EmpiricalIds {
            window,
            boundary,
            maps,
            samples: spectra.len().max(1),
            eigenvalues,
        }
    }

    fn norm(&self) -> f64 {
        (self.maps as f64).powi(self.window) * self.samples as f64
    }

    /// `Lambda(lambda)`: normalized count of eigenvalues at or below
    /// `lambda`.
    pub fn value(&self, lambda: f64) -> f64 {
        let count = self.eigenvalues.partition_point(|&e| e <= lambda);
        count as f64 / self.norm()
    }

    /// Laplace transform of the counting measure.
    pub fn laplace(&self, t: f64) -> f64 {
        self.eigenvalues
            .iter()
            .map(|&e| (-e * t).exp())
            .sum::<f64>()
            / self.norm()
    }

    /// Total mass `#eigenvalues / (samples * N^M)`.
    pub fn mass(&self) -> f64 {
        self.eigenvalues.len() as f64 / self.norm()
    }

    pub fn smallest_positive(&self) -> Option<f64> {
        self.eigenvalues.iter().copied().find(|&e| e > 0.0)
    }

    /// q-th percentile of the pooled spectrum, q in (0, 1).
    pub fn percentile(&self, q: f64) -> f64 {
        let idx =
            ((q * self.eigenvalues.len() as f64).ceil() as usize).clamp(1, self.eigenvalues.len());
        self.eigenvalues[idx - 1]
    }
}

/// Sample-averaged Laplace transform on a fixed time grid.
#[derive(Clone, Debug, Serialize)]
pub struct LaplaceCurve {
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
}

/// Sample-averaged counting function on a fixed energy grid.
#[derive(Clone, Debug, Serialize)]
pub struct IdsCurve {
    pub lambda: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
}

fn mean_sem(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregates per-sample spectra into annealed Laplace and IDS curves.
pub fn annealed_curves(
    per_sample: &[Vec<f64>],
    window: i32,
    maps: usize,
    t_grid: &[f64],
    lambda_grid: &[f64],
) -> (LaplaceCurve, IdsCurve) {
    let norm = (maps as f64).powi(window);
    let mut laplace_mean = Vec::with_capacity(t_grid.len());
    let mut laplace_sem = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let vals: Vec<f64> = per_sample
            .iter()
            .map(|eigs| eigs.iter().map(|&e| (-e * t).exp()).sum::<f64>() / norm)
            .collect();
        let (m, s) = mean_sem(&vals);
        laplace_mean.push(m);
        laplace_sem.push(s);
    }
    let mut ids_mean = Vec::with_capacity(lambda_grid.len());
    let mut ids_sem = Vec::with_capacity(lambda_grid.len());
    for &l in lambda_grid {
        let vals: Vec<f64> = per_sample
            .iter()
            .map(|eigs| eigs.iter().filter(|&&e| e <= l).count() as f64 / norm)
            .collect();
        let (m, s) = mean_sem(&vals);
        ids_mean.push(m);
        ids_sem.push(s);
    }
    (
        LaplaceCurve {
            t: t_grid.to_vec(),
            mean: laplace_mean,
            sem: laplace_sem,
        },
        IdsCurve {
            lambda: lambda_grid.to_vec(),
            mean: ids_mean,
            sem: ids_sem,
        },
    )
}

impl LaplaceCurve {
    /// `t,value,stderr` rows.
    pub fn csv(&self) -> String {
        let mut out = String::from("t,value,stderr\n");
        for ((t, m), s) in self.t.iter().zip(&self.mean).zip(&self.sem) {
            out.push_str(&format!("{t},{m},{s}\n"));
        }
        out
    }
}

impl IdsCurve {
    /// `lambda,ids,stderr` rows.
    pub fn csv(&self) -> String {
        let mut out = String::from("lambda,ids,stderr\n");
        for ((l, m), s) in self.lambda.iter().zip(&self.mean).zip(&self.sem) {
            out.push_str(&format!("{l},{m},{s}\n"));
        }
        out
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityViolation {
    pub window_low: i32,
    pub window_high: i32,
    pub t: f64,
    pub low_value: f64,
    pub high_value: f64,
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct MonotonicityReport {
    pub comparisons: usize,
    pub violations: Vec<MonotonicityViolation>,
}

/// Checks that annealed Laplace curves do not increase with the window, up
/// to twice the combined standard error at each grid time.
pub fn monotonicity_diagnostic(curves: &[(i32, &LaplaceCurve)]) -> MonotonicityReport {
    let mut sorted: Vec<&(i32, &LaplaceCurve)> = curves.iter().collect();
    sorted.sort_by_key(|&&(m, _)| m);
    let mut report = MonotonicityReport::default();
    for pair in sorted.windows(2) {
        let (m_low, low) = *pair[0];
        let (m_high, high) = *pair[1];
        for (i, &t) in low.t.iter().enumerate() {
            let Some(j) = high.t.iter().position(|&s| (s - t).abs() < 1e-12) else {
                continue;
            };
            report.comparisons += 1;
            let slack = 2.0 * (low.sem[i].powi(2) + high.sem[j].powi(2)).sqrt();
            if high.mean[j] > low.mean[i] + slack {
                report.violations.push(MonotonicityViolation {
                    window_low: m_low,
                    window_high: m_high,
                    t,
                    low_value: low.mean[i],
                    high_value: high.mean[j],
                    slack,
                });
            }
        }
    }
    report
}

#[derive(Clone, Debug, Serialize)]
pub struct GapEntry {
    pub window: i32,
    pub t: f64,
    pub gap: f64,
    pub sem: f64,
}

#[derive(Clone, Debug, Serialize, Default)]
pub struct GapReport {
    pub entries: Vec<GapEntry>,
    pub violations: Vec<MonotonicityViolation>,
}

/// Distance between Dirichlet and Neumann Laplace curves per window; the gap
/// must not grow with the window (within twice the combined error).
pub fn dn_gap_diagnostic(
    neumann: &[(i32, &LaplaceCurve)],
    dirichlet: &[(i32, &LaplaceCurve)],
) -> GapReport {
    let mut report = GapReport::default();
    let mut windows: Vec<i32> = neumann.iter().map(|&(m, _)| m).collect();
    windows.sort_unstable();
    fn curve<'a>(set: &[(i32, &'a LaplaceCurve)], m: i32) -> Option<&'a LaplaceCurve> {
        set.iter().find(|&&(w, _)| w == m).map(|&(_, c)| c)
    }
    for &m in &windows {
        let (Some(n), Some(d)) = (curve(neumann, m), curve(dirichlet, m)) else {
            continue;
        };
        for (i, &t) in n.t.iter().enumerate() {
            let gap = (d.mean[i] - n.mean[i]).abs();
            let sem = (d.sem[i].powi(2) + n.sem[i].powi(2)).sqrt();
            report.entries.push(GapEntry {
                window: m,
                t,
                gap,
                sem,
            });
        }
    }
    for pair in windows.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let lows: Vec<&GapEntry> = report.entries.iter().filter(|e| e.window == lo).collect();
        let highs: Vec<&GapEntry> = report.entries.iter().filter(|e| e.window == hi).collect();
        for l in &lows {
            let Some(h) = highs.iter().find(|h| (h.t - l.t).abs() < 1e-12) else {
                continue;
            };
            let slack = 2.0 * (l.sem.powi(2) + h.sem.powi(2)).sqrt();
            if h.gap > l.gap + slack {
                report.violations.push(MonotonicityViolation {
                    window_low: lo,
                    window_high: hi,
                    t: l.t,
                    low_value: l.gap,
                    high_value: h.gap,
                    slack,
                });
            }
        }
    }
    report
}

/// Variational lower bound for the ground state: for a unit trial vector
/// with Rayleigh quotient below `eta <= second spectral point`,
///
/// ```text
/// lambda_1 >= <psi, H psi> - (<H psi, H psi> - <psi, H psi>^2) / (eta - <psi, H psi>)
/// ```
pub fn temple_bound(h: &SymmetricOperator, eta: f64, psi: &[f64]) -> Result<f64, IdsError> {
    if psi.len() != h.n {
        return Err(IdsError::DimensionMismatch(format!(
            "trial vector has {} entries for an operator of size {}",
            psi.len(),
            h.n
        )));
    }
    let norm: f64 = psi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(IdsError::PreconditionViolated(format!(
            "trial vector norm {norm} is not 1"
        )));
    }
    let mut hpsi = vec![0.0; h.n];
    h.matvec(psi, &mut hpsi);
    let q1: f64 = psi.iter().zip(&hpsi).map(|(a, b)| a * b).sum();
    if q1 >= eta {
        return Err(IdsError::PreconditionViolated(format!(
            "Rayleigh quotient {q1} is not below eta = {eta}"
        )));
    }
    let q2: f64 = hpsi.iter().map(|x| x * x).sum();
    Ok(q1 - (q2 - q1 * q1) / (eta - q1))
}

/// Ground-state bound through the constant trial vector: the bracket
///
/// ```text
/// (1/L^Md) [ Int V - 2 Int V^2 / (c1 L^-M alpha) ]
/// ```
///
/// with integrals realized by uniform vertex quadrature.
pub fn lemma33_bound(
    field: &PotentialField,
    c1_tilde: f64,
    alpha: f64,
    scale: f64,
) -> Result<f64, IdsError> {
    let eta = c1_tilde / scale.powf(field.window as f64 * alpha);
    let vmax = field.values.iter().cloned().fold(0.0f64, f64::max);
    if vmax >= eta {
        return Err(IdsError::AmplitudeTooLarge(format!(
            "max potential {vmax} reaches the spectral-gap level {eta}"
        )));
    }
    let count = field.values.len() as f64;
    let mean = field.values.iter().sum::<f64>() / count;
    let mean_sq = field.values.iter().map(|v| v * v).sum::<f64>() / count;
    Ok(mean - 2.0 * mean_sq / eta)
}

#[derive(Clone, Debug, Serialize)]
pub struct Lemma34Report {
    pub threshold: f64,
    pub delta: f64,
    pub in_event: usize,
    pub excluded: usize,
    pub failures: Vec<usize>,
}

impl Lemma34Report {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// For every sample whose occupied fraction reaches `delta`, the alloy
/// ground state must clear `c1 delta / (8 L^(M alpha))`.
pub fn lemma34_check(
    ground_states: &[f64],
    occupied_fractions: &[f64],
    delta: f64,
    c1_tilde: f64,
    alpha: f64,
    scale: f64,
    window: i32,
) -> Lemma34Report {
    let threshold = c1_tilde * delta / (8.0 * scale.powf(window as f64 * alpha));
    let mut report = Lemma34Report {
        threshold,
        delta,
        in_event: 0,
        excluded: 0,
        failures: Vec::new(),
    };
    for (i, (&l1, &frac)) in ground_states.iter().zip(occupied_fractions).enumerate() {
        if frac + 1e-15 < delta {
            report.excluded += 1;
            continue;
        }
        report.in_event += 1;
        if l1 + 1e-12 < threshold {
            report.failures.push(i);
        }
    }
    report
}

/// Upper tail of a binomial count: `P[S_n >= gamma n]` is at most
///
/// ```text
/// (((1-p)/(1-gamma))^(1-gamma) (p/gamma)^gamma)^n
/// ```
pub fn bernstein_tail_bound(n: u32, p: f64, gamma: f64) -> Result<f64, IdsError> {
    if !(0.0 < p && p < gamma && gamma < 1.0) {
        return Err(IdsError::ParameterOrderViolation { p, gamma });
    }
    let log_term = (1.0 - gamma) * ((1.0 - p) / (1.0 - gamma)).ln() + gamma * (p / gamma).ln();
    Ok((n as f64 * log_term).exp())
}

/// The unique window index balancing the two exponential costs:
/// `ratio L^(M(d+alpha)) <= t/nu < ratio L^((M+1)(d+alpha))`.
pub fn window_select(t: f64, nu: f64, d: f64, alpha: f64, scale: f64, ratio: f64) -> i32 {
    assert!(t > 0.0 && nu > 0.0);
    let target = t / (nu * ratio);
    let step = (d + alpha) * scale.ln();
    let mut m = (target.ln() / step).floor() as i32;
    // exact boundary handling near floating-point edges
    while (scale.ln() * (m + 1) as f64 * (d + alpha)).exp() <= target {
        m += 1;
    }
    while (scale.ln() * m as f64 * (d + alpha)).exp() > target {
        m -= 1;
    }
    m
}

/// Lower bound on the annealed Laplace transform from the vacancy event: an
/// empty 1-vicinity of one window copy keeps the free killed trace,
///
/// ```text
/// exp( -t phi(L^(-M d_w) lambda_1) - nu (L^(M d) + c1 L^(M0 d)) )
/// ```
#[allow(clippy::too_many_arguments)]
pub fn vacancy_lower_bound(
    nu: f64,
    window: i32,
    support_scale: i32,
    c1_geometry: f64,
    lambda1_dirichlet_unit: f64,
    phi: &BernsteinFunction,
    t: f64,
    scale: f64,
    d: f64,
    walk_dim: f64,
) -> f64 {
    let shrunk = scale.powf(-(window as f64) * walk_dim) * lambda1_dirichlet_unit;
    let spectral_cost = t * phi.evaluate(shrunk).unwrap_or(f64::INFINITY);
    let vacancy_cost =
        nu * (scale.powf(window as f64 * d) + c1_geometry * scale.powf(support_scale as f64 * d));
    (-spectral_cost - vacancy_cost).exp()
}

/// Least-squares exponent fit result.
#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub exponent: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub residual: f64,
    pub points: usize,
    /// `exp(intercept)`: the stretched-exponential prefactor.
    pub prefactor: f64,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let dof = (xs.len().max(3) - 2) as f64;
    let stderr = (ssr / dof / sxx).sqrt();
    (slope, intercept, stderr, (ssr / n).sqrt())
}

/// Slope of `log(-log IDS)` against `log lambda` on a low-energy window;
/// the default window runs from the smallest positive jump to the 5th
/// percentile of the pooled spectrum.
pub fn lifshitz_fit(ids: &EmpiricalIds, window: Option<(f64, f64)>) -> Result<FitResult, IdsError> {
    // deviation band defining the stretched-exponential regime: shallower
    // values sit in the bulk shoulder, deeper ones in the finite-window
    // saturated tail
    const BAND: (f64, f64) = (1.6, 4.6);
    let band_mode = window.is_none();
    let (lo, hi) = match window {
        Some(w) => w,
        None => {
            let lo = ids
                .smallest_positive()
                .ok_or_else(|| IdsError::EmptyWindow("no positive eigenvalues".into()))?;
            (lo, ids.percentile(0.6))
        }
    };
    if !(hi > lo && lo > 0.0) {
        return Err(IdsError::EmptyWindow(format!("[{lo}, {hi}]")));
    }
    let points = 200usize;
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for i in 0..points {
        let l = lo * (hi / lo).powf(i as f64 / (points - 1) as f64);
        let v = ids.value(l);
        if v <= 0.0 {
            return Err(IdsError::NonpositiveIds);
        }
        if v >= 1.0 {
            continue;
        }
        let deviation = -v.ln();
        if band_mode && !(BAND.0..=BAND.1).contains(&deviation) {
            continue;
        }
        xs.push(l.ln());
        ys.push(deviation.ln());
    }
    if xs.len() < 3 {
        return Err(IdsError::EmptyWindow("fewer than 3 usable points".into()));
    }
    let (slope, intercept, stderr, residual) = linear_fit(&xs, &ys);
    Ok(FitResult {
        exponent: slope,
        stderr,
        window: (xs[0].exp(), xs[xs.len() - 1].exp()),
        residual,
        points: xs.len(),
        prefactor: intercept.exp(),
    })
}

/// Largest grid time at which the annealed mean still rests on at least
/// `floor` effective samples; beyond it the mean is carried by a couple of
/// extreme realizations.
pub fn ess_time_cutoff(per_sample_eigs: &[Vec<f64>], t_grid: &[f64], floor: f64) -> f64 {
    let mut cutoff = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    for &t in t_grid {
        let weights: Vec<f64> = per_sample_eigs
            .iter()
            .map(|eigs| eigs.iter().map(|&e| (-e * t).exp()).sum::<f64>())
            .collect();
        let s: f64 = weights.iter().sum();
        let s2: f64 = weights.iter().map(|w| w * w).sum();
        let ess = if s2 > 0.0 { s * s / s2 } else { 0.0 };
        if ess >= floor {
            cutoff = cutoff.max(t);
        }
    }
    cutoff
}

/// Prefactor ratio of two stretched-exponential curves, read off the scaling
/// plateau: the minimum over the common grid of `log L_hi / log L_lo`.
/// Bulk contamination inflates the pointwise ratio at small times and early
/// saturation of the stronger disorder inflates it at large times, so the
/// plateau sits at the minimum.
pub fn scaling_ratio_minimum(
    lo_curve: &LaplaceCurve,
    hi_curve: &LaplaceCurve,
    t_floor: f64,
) -> Option<f64> {
    let floor = 10.0 * f64::EPSILON;
    let mut best: Option<f64> = None;
    for (i, &t) in lo_curve.t.iter().enumerate() {
        if t < t_floor {
            continue;
        }
        let j = hi_curve.t.iter().position(|&s| (s - t).abs() < 1e-12)?;
        let (vl, vh) = (lo_curve.mean[i], hi_curve.mean[j]);
        if vl <= floor || vh <= floor || vl >= 1.0 || vh >= 1.0 {
            continue;
        }
        let r = vh.ln() / vl.ln();
        best = Some(best.map_or(r, |b: f64| b.min(r)));
    }
    best
}

/// Curve-based variant of [`lifshitz_fit`] for continuous or annealed
/// counting curves on a fixed grid.
pub fn lifshitz_fit_curve(
    curve: &IdsCurve,
    window: Option<(f64, f64)>,
) -> Result<FitResult, IdsError> {
    let (lo, hi) = window.unwrap_or((f64::MIN_POSITIVE, f64::MAX));
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&l, &v) in curve.lambda.iter().zip(&curve.mean) {
        if l < lo || l > hi || l <= 0.0 || v <= 0.0 || v >= 1.0 {
            continue;
        }
        xs.push(l.ln());
        ys.push((-v.ln()).ln());
    }
    if xs.len() < 3 {
        return Err(IdsError::EmptyWindow("fewer than 3 usable points".into()));
    }
    let (slope, intercept, stderr, residual) = linear_fit(&xs, &ys);
    Ok(FitResult {
        exponent: slope,
        stderr,
        window: (lo, hi),
        residual,
        points: xs.len(),
        prefactor: intercept.exp(),
    })
}

/// Slope of `log(-log L)` against `log t`; the default window is
/// `[10, t_max]` with `t_max` the last grid point where the curve still
/// clears ten machine epsilons.
pub fn laplace_exponent_fit(
    curve: &LaplaceCurve,
    window: Option<(f64, f64)>,
) -> Result<FitResult, IdsError> {
    let floor = 10.0 * f64::EPSILON;
    let (lo, hi) = match window {
        Some(w) => w,
        None => {
            let hi = curve
                .t
                .iter()
                .zip(&curve.mean)
                .filter(|&(_, &v)| v > floor)
                .map(|(&t, _)| t)
                .fold(f64::NEG_INFINITY, f64::max);
            (10.0, hi)
        }
    };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in curve.t.iter().zip(&curve.mean) {
        if t < lo || t > hi || v <= floor || v >= 1.0 {
            continue;
        }
        xs.push(t.ln());
        ys.push((-v.ln()).ln());
    }
    if xs.len() < 3 {
        return Err(IdsError::EmptyWindow(format!(
            "window [{lo}, {hi}] covers {} usable points",
            xs.len()
        )));
    }
    let (slope, intercept, stderr, residual) = linear_fit(&xs, &ys);
    Ok(FitResult {
        exponent: slope,
        stderr,
        window: (lo, hi),
        residual,
        points: xs.len(),
        prefactor: intercept.exp(),
    })
}
