//! Eigen-analysis of flow networks.
//!
//! Two routes are provided. The directed, nonnegative lending matrix has a
//! real dominant eigenvalue (its Perron root) with a nonnegative eigenvector;
//! [`leading_eigenpair`] finds it by power iteration. The symmetrized matrix
//! has a full real spectrum; [`full_spectrum`] computes it with cyclic Jacobi
//! rotations. Eigenvectors are unit L2 norm.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Period;
use crate::matrix::{dot, norm2, SquareMatrix};
use crate::network::{NetworkSnapshot, SymmetricMatrix};

/// Tolerance on `‖v‖₂ - 1` accepted by [`ipr`].
pub const UNIT_NORM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("matrix has no nonzero entry")]
    ZeroMatrix,
    #[error("matrix has a negative or non-finite entry")]
    NotNonnegative,
    #[error("power iteration did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("vector norm is {0}, expected 1")]
    NotNormalized(f64),
    #[error("mean IPR needs the full symmetrized spectrum, got a {0} summary")]
    WrongMode(SpectrumMode),
}

/// Which matrix a spectrum was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumMode {
    /// Nonnegative directed matrix, Perron root only.
    #[default]
    DirectedPerron,
    /// `(A + Aᵀ) / 2`, all eigenpairs.
    Symmetrized,
}

impl std::fmt::Display for SpectrumMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SpectrumMode::DirectedPerron => "directed-perron",
            SpectrumMode::Symmetrized => "symmetrized",
        })
    }
}

impl std::str::FromStr for SpectrumMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "directed-perron" => Ok(Self::DirectedPerron),
            "symmetrized" => Ok(Self::Symmetrized),
            other => Err(format!("unknown spectrum mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub mode: SpectrumMode,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub iprs: Vec<f64>,
    pub lambda_max: f64,
    pub market_mode: Vec<f64>,
}

/// JSON export shape of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub period: Period,
    pub mode: SpectrumMode,
    pub eigenvalues: Vec<f64>,
    pub iprs: Vec<f64>,
    pub lambda_max: f64,
    pub market_mode: Vec<f64>,
    pub participation: Vec<f64>,
}

impl SpectralSummary {
    pub fn report(&self, period: Period) -> SpectralReport {
        SpectralReport {
            period,
            mode: self.mode,
            eigenvalues: self.eigenvalues.clone(),
            iprs: self.iprs.clone(),
            lambda_max: self.lambda_max,
            market_mode: self.market_mode.clone(),
            participation: participation_percent(&self.market_mode),
        }
    }
}

// ---------------------------------------------------------------------------
// Power iteration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationOptions {
    pub max_iterations: usize,
    /// Successive eigenvalue estimates must agree to this relative tolerance.
    pub lambda_rel_tol: f64,
    /// `‖Av - λv‖ ≤ residual_rel_tol · λ`
    pub residual_rel_tol: f64,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        PowerIterationOptions { max_iterations: 100_000, lambda_rel_tol: 1e-12, residual_rel_tol: 1e-8 }
    }
}

/// Perron root and nonnegative unit eigenvector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadingEigenpair {
    pub lambda: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// `‖Av - λv‖₂`
    pub residual: f64,
}

pub fn leading_eigenpair(snapshot: &NetworkSnapshot) -> Result<LeadingEigenpair, SpectralError> {
    perron_eigenpair(snapshot.weights(), &PowerIterationOptions::default())
}

/// Nodes reachable in a cycle exist iff the spectral radius is positive.
/// Returns the in-degree-zero nodes when the positive-entry graph is acyclic.
fn acyclic_sources(a: &SquareMatrix) -> Option<Vec<usize>> {
    let n = a.dim();
    let mut indeg = vec![0usize; n];
    for i in 0..n {
        for (j, &w) in a.row(i).iter().enumerate() {
            if w > 0.0 {
                indeg[j] += 1;
            }
        }
    }
    let sources: Vec<usize> = (0..n).filter(|&j| indeg[j] == 0).collect();
    let mut stack = sources.clone();
    let mut removed = 0;
    while let Some(i) = stack.pop() {
        removed += 1;
        for (j, &w) in a.row(i).iter().enumerate() {
            if w > 0.0 {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    stack.push(j);
                }
            }
        }
    }
    (removed == n).then_some(sources)
}

/// Power iteration on `A + αI` with α the mean row sum.
///
/// The shift leaves eigenvectors unchanged and moves every eigenvalue other
/// than the Perron root strictly inside the circle of radius `ρ + α`, so
/// periodic (e.g. bipartite) matrices converge too. Acyclic matrices have
/// spectral radius 0 and are answered directly.
pub fn perron_eigenpair(a: &SquareMatrix, opts: &PowerIterationOptions) -> Result<LeadingEigenpair, SpectralError> {
    let n = a.dim();
    if a.as_slice().iter().any(|&x| !(x.is_finite() && x >= 0.0)) {
        return Err(SpectralError::NotNonnegative);
    }
    let total = a.sum();
    if n == 0 || total == 0.0 {
        return Err(SpectralError::ZeroMatrix);
    }

    if let Some(sources) = acyclic_sources(a) {
        // Any vector supported on columns without positive entries is a null vector.
        let mut v = vec![0.0; n];
        let x = 1.0 / (sources.len() as f64).sqrt();
        for &s in &sources {
            v[s] = x;
        }
        return Ok(LeadingEigenpair { lambda: 0.0, vector: v, iterations: 0, residual: 0.0 });
    }

    let shift = total / n as f64;
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = vec![0.0; n];
    let mut prev_lambda = f64::NAN;
    let mut rel_residual = f64::INFINITY;

    for it in 1..=opts.max_iterations {
        a.mul_vec_into(&v, &mut av);
        let lambda = dot(&v, &av);
        let residual = av.iter().zip(&v).map(|(w, x)| (w - lambda * x).powi(2)).sum::<f64>().sqrt();
        rel_residual = residual / lambda;
        let settled = (lambda - prev_lambda).abs() <= opts.lambda_rel_tol * lambda;
        if settled && rel_residual <= opts.residual_rel_tol {
            return Ok(LeadingEigenpair { lambda, vector: v, iterations: it, residual });
        }
        prev_lambda = lambda;
        for (x, w) in v.iter_mut().zip(&av) {
            *x = w + shift * *x;
        }
        let norm = norm2(&v);
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Err(SpectralError::NoConvergence { iterations: opts.max_iterations, residual: rel_residual })
}

/// Directed-mode summary: a single eigenpair, the Perron root.
pub fn directed_summary(snapshot: &NetworkSnapshot) -> Result<SpectralSummary, SpectralError> {
    let pair = leading_eigenpair(snapshot)?;
    let ipr_value = ipr(&pair.vector)?;
    Ok(SpectralSummary {
        mode: SpectrumMode::DirectedPerron,
        eigenvalues: vec![pair.lambda],
        eigenvectors: vec![pair.vector.clone()],
        iprs: vec![ipr_value],
        lambda_max: pair.lambda,
        market_mode: pair.vector,
    })
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition
// ---------------------------------------------------------------------------

const MAX_SWEEPS: usize = 100;

/// Eigenvalues and eigenvectors (as columns of the returned matrix) of a
/// symmetric matrix by cyclic Jacobi rotations. Unsorted.
pub fn jacobi_eigen(m: &SquareMatrix) -> (Vec<f64>, SquareMatrix) {
    let n = m.dim();
    let mut a = m.clone();
    let mut v = SquareMatrix::identity(n);
    let scale = a.frobenius_sq();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).map(|(p, q)| a[(p, q)].powi(2)).sum();
        if off == 0.0 || off <= (f64::EPSILON * f64::EPSILON) * scale * 1e-4 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[(p, p)], a[(q, q)]);
                // Negligible against both diagonal entries: drop it.
                let tiny = 1e-3 * f64::EPSILON;
                if apq.abs() < tiny * app.abs() && apq.abs() < tiny * aqq.abs() {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_infinite() {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Flips `v` so its largest-magnitude component is positive. Among
/// components equal in magnitude up to rounding, the first one decides.
pub fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(lead) = v.iter().find(|x| x.abs() >= max * (1.0 - 1e-12)) {
        if *lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// All eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn full_spectrum(sym: &SymmetricMatrix) -> SpectralSummary {
    let n = sym.len();
    let (values, vectors) = jacobi_eigen(sym.values());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let mut col: Vec<f64> = (0..n).map(|i| vectors[(i, k)]).collect();
            let norm = norm2(&col);
            col.iter_mut().for_each(|x| *x /= norm);
            fix_sign(&mut col);
            col
        })
        .collect();
    let iprs = eigenvectors.iter().map(|v| ipr_unchecked(v)).collect();
    SpectralSummary {
        mode: SpectrumMode::Symmetrized,
        lambda_max: eigenvalues.first().copied().unwrap_or(0.0),
        market_mode: eigenvectors.first().cloned().unwrap_or_default(),
        eigenvalues,
        eigenvectors,
        iprs,
    }
}

// ---------------------------------------------------------------------------
// Localization measures
// ---------------------------------------------------------------------------

fn ipr_unchecked(v: &[f64]) -> f64 {
    1.0 / v.iter().map(|x| x.powi(4)).sum::<f64>()
}

/// Inverse participation ratio `1 / Σ vᵢ⁴` of a unit vector: N when all
/// components are equal, 1 when a single component carries everything.
pub fn ipr(v: &[f64]) -> Result<f64, SpectralError> {
    let norm = norm2(v);
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(SpectralError::NotNormalized(norm));
    }
    Ok(ipr_unchecked(v))
}

/// Mean IPR over all eigenvectors of a symmetrized spectrum.
pub fn mean_ipr(summary: &SpectralSummary) -> Result<f64, SpectralError> {
    if summary.mode != SpectrumMode::Symmetrized {
        return Err(SpectralError::WrongMode(summary.mode));
    }
    Ok(summary.iprs.iter().sum::<f64>() / summary.iprs.len() as f64)
}

/// Squared components in percent.
pub fn participation_percent(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x * x * 100.0).collect()
}
