//! Generalized Hermitian eigenproblem `C x = E D x` by whitening.
//!
//! `D = V diag(lambda) V^T`; directions with `lambda < tol * lambda_max` are
//! dropped, `W = V_k diag(lambda_k)^(-1/2)` and the reduced problem
//! `W^H C W y = E y` is solved densely. `x = W y` is then D-normalized.

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::BlockSystem;
use crate::geometry::{Rect, Vec2};
use crate::rbf::RbfBasis;

pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-10;
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;
/// Allowed deviation of `x^H D x` from one.
pub const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigenError {
    #[error("D is numerically rank zero")]
    RankZero,
    #[error("truncation tolerance must lie in (0, 1), got {0}")]
    BadTolerance(f64),
    #[error("dimension mismatch: C is {c}, D is {d}")]
    Dimension { c: usize, d: usize },
    #[error("Hermitian eigensolver did not converge")]
    NoConvergence,
}

fn complexify(m: &Mat<f64>) -> Mat<Complex64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| Complex64::new(m[(i, j)], 0.0))
}

/// Truncated inverse square root of `D`, reusable for every `C` sharing it.
#[derive(Debug, Clone)]
pub struct Whitening {
    w: Mat<Complex64>,
    lambda_max: f64,
    lambda_min: f64,
    rank: usize,
}

fn whiten_real(d: &Mat<f64>, tol: f64) -> Result<(Mat<f64>, f64, f64), EigenError> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(EigenError::BadTolerance(tol));
    }
    let eig = d.self_adjoint_eigen(Side::Lower).map_err(|_| EigenError::NoConvergence)?;
    let lambda: Vec<f64> = eig.S().column_vector().iter().copied().collect();
    let lambda_max = lambda.iter().copied().fold(0.0, f64::max);
    let lambda_min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lambda_max > 0.0) {
        return Err(EigenError::RankZero);
    }
    let keep: Vec<usize> = (0..lambda.len()).filter(|&k| lambda[k] >= tol * lambda_max).collect();
    let u = eig.U();
    let w = Mat::from_fn(d.nrows(), keep.len(), |i, k| u[(i, keep[k])] / lambda[keep[k]].sqrt());
    Ok((w, lambda_max, lambda_min))
}

impl Whitening {
    pub fn from_matrix(d: &Mat<f64>, tol: f64) -> Result<Self, EigenError> {
        let (w, lambda_max, lambda_min) = whiten_real(d, tol)?;
        Ok(Self { rank: w.ncols(), w: complexify(&w), lambda_max, lambda_min })
    }

    /// `D = diag(G, G)`: only `G` is decomposed.
    pub fn block_diagonal(gram: &Mat<f64>, tol: f64) -> Result<Self, EigenError> {
        let (wg, lambda_max, lambda_min) = whiten_real(gram, tol)?;
        let (n, k) = (wg.nrows(), wg.ncols());
        let w = Mat::from_fn(2 * n, 2 * k, |i, j| {
            if i / n == j / k {
                Complex64::new(wg[(i % n, j % k)], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        Ok(Self { w, lambda_max, lambda_min, rank: 2 * k })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// `lambda_max / lambda_min` of `D` before truncation; infinite when
    /// `lambda_min <= 0`.
    pub fn condition_number(&self) -> f64 {
        if self.lambda_min > 0.0 {
            self.lambda_max / self.lambda_min
        } else {
            f64::INFINITY
        }
    }

    pub fn diagnostics(&self) -> SolverDiagnostics {
        SolverDiagnostics { d_condition: self.condition_number(), truncation_rank: self.rank, dimension: self.dim() }
    }

    pub fn solve(&self, c: &Mat<Complex64>) -> Result<RawEigenpairs, EigenError> {
        if c.nrows() != self.dim() || c.ncols() != self.dim() {
            return Err(EigenError::Dimension { c: c.nrows(), d: self.dim() });
        }
        let cw = c.as_ref() * self.w.as_ref();
        let a = self.w.as_ref().adjoint() * cw.as_ref();
        let eig = a.self_adjoint_eigen(Side::Lower).map_err(|_| EigenError::NoConvergence)?;
        let values = eig.S().column_vector().iter().map(|z| z.re).collect();
        let vectors = self.w.as_ref() * eig.U();
        Ok(RawEigenpairs { values, vectors, diagnostics: self.diagnostics() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub d_condition: f64,
    pub truncation_rank: usize,
    pub dimension: usize,
}

/// All eigenvalues of the reduced problem, ascending, with D-normalized
/// vectors in the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct RawEigenpairs {
    pub values: Vec<f64>,
    pub vectors: Mat<Complex64>,
    pub diagnostics: SolverDiagnostics,
}

impl RawEigenpairs {
    pub fn vector(&self, k: usize) -> Vec<Complex64> {
        self.vectors.col(k).iter().copied().collect()
    }
}

/// Solves a general pencil with real symmetric `D`.
pub fn solve_pencil(c: &Mat<Complex64>, d: &Mat<f64>, truncation_tol: f64) -> Result<RawEigenpairs, EigenError> {
    if c.nrows() != d.nrows() {
        return Err(EigenError::Dimension { c: c.nrows(), d: d.nrows() });
    }
    Whitening::from_matrix(d, truncation_tol)?.solve(c)
}

/// Solves an assembled system through its block-diagonal `D`.
pub fn solve_system(system: &BlockSystem, truncation_tol: f64) -> Result<RawEigenpairs, EigenError> {
    Whitening::block_diagonal(&system.gram, truncation_tol)?.solve(&system.c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    OutsideGap,
    Residual,
    NullSpaceTruncation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapEigenpair {
    pub energy: f64,
    pub residual: f64,
    /// `(a, b)` stacked.
    pub coefficients: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discarded {
    pub energy: f64,
    pub reason: DiscardReason,
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub delta: f64,
    pub gap: Vec<GapEigenpair>,
    pub discarded: Vec<Discarded>,
    pub diagnostics: SolverDiagnostics,
}

impl SpectralResult {
    pub fn energies(&self) -> Vec<f64> {
        self.gap.iter().map(|p| p.energy).collect()
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `||C x - E D x|| / (||C x|| + |E| ||D x||)`.
pub fn relative_residual(system: &BlockSystem, energy: f64, x: &[Complex64]) -> f64 {
    let cx = system.apply_c(x);
    let dx = system.apply_d(x);
    let r: Vec<Complex64> = cx.iter().zip(&dx).map(|(a, b)| a - b * energy).collect();
    let denom = norm(&cx) + energy.abs() * norm(&dx);
    if denom == 0.0 {
        0.0
    } else {
        norm(&r) / denom
    }
}

/// Keeps eigenpairs in `(-delta, delta)` that are D-normalized and whose
/// relative residual is at most `residual_tol`; everything else is recorded
/// with the reason it was dropped.
pub fn gap_filter(raw: &RawEigenpairs, system: &BlockSystem, delta: f64, residual_tol: f64) -> SpectralResult {
    let mut gap = Vec::new();
    let mut discarded = Vec::new();
    for (k, &energy) in raw.values.iter().enumerate() {
        if !(energy > -delta && energy < delta) {
            discarded.push(Discarded { energy, reason: DiscardReason::OutsideGap, residual: None });
            continue;
        }
        let x = raw.vector(k);
        let dx = system.apply_d(&x);
        let xdx: Complex64 = x.iter().zip(&dx).map(|(a, b)| a.conj() * b).sum();
        if (xdx.re - 1.0).abs() > NORMALIZATION_TOL || xdx.im.abs() > NORMALIZATION_TOL {
            discarded.push(Discarded { energy, reason: DiscardReason::NullSpaceTruncation, residual: None });
            continue;
        }
        let residual = relative_residual(system, energy, &x);
        if residual > residual_tol {
            discarded.push(Discarded { energy, reason: DiscardReason::Residual, residual: Some(residual) });
            continue;
        }
        gap.push(GapEigenpair { energy, residual, coefficients: x });
    }
    gap.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.residual.total_cmp(&b.residual)));
    SpectralResult { delta, gap, discarded, diagnostics: raw.diagnostics }
}

/// Regular sampling lattice including the rectangle's boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub bbox: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl SampleGrid {
    pub fn new(bbox: Rect, nx: usize, ny: usize) -> Self {
        Self { bbox, nx: nx.max(1), ny: ny.max(1) }
    }

    /// Row-major points, `x` fastest.
    pub fn points(&self) -> Vec<Vec2> {
        let frac = |k: usize, m: usize| if m == 1 { 0.5 } else { k as f64 / (m - 1) as f64 };
        (0..self.ny)
            .flat_map(|iy| (0..self.nx).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| self.bbox.from_unit(frac(ix, self.nx), frac(iy, self.ny)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSamples {
    pub grid: SampleGrid,
    pub points: Vec<Vec2>,
    pub values: Vec<f64>,
}

/// `|psi|(r) = sqrt(|sum a_j phi_j(r)|^2 + |sum b_j phi_j(r)|^2)` on `grid`.
pub fn eigenfunction_magnitude(coefficients: &[Complex64], basis: &RbfBasis, grid: &SampleGrid) -> FieldSamples {
    let n = basis.len();
    assert_eq!(coefficients.len(), 2 * n, "coefficient vector must have length 2N");
    let points = grid.points();
    let values = points
        .iter()
        .map(|&p| {
            let (mut a, mut b) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for j in 0..n {
                let phi = basis.eval(j, p);
                a += coefficients[j] * phi;
                b += coefficients[n + j] * phi;
            }
            (a.norm_sqr() + b.norm_sqr()).sqrt()
        })
        .collect();
    FieldSamples { grid: *grid, points, values }
}
