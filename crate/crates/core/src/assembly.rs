//! The `2N x 2N` Galerkin system `C x = E D x` for spinors
//! `psi = (sum a_j phi_j, sum b_j phi_j)`.
//!
//! ```text
//!     C11 = -i Dy + eps M(V11)      C12 = Kx + eps M(V12)
//!     C21 = Kx + eps M(conj V12)    C22 = +i Dy + eps M(V22)
//!     D   = diag(G, G)
//! ```

use std::io::{self, Write};

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Rect;
use crate::model::{Model, Potential};
use crate::quadrature::QuadControls;
use crate::rbf::{RbfBasis, RbfError};

/// Relative tolerance for the Hermiticity and block-conjugation checks.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("C is not Hermitian: defect {defect:e} exceeds {allowed:e}")]
    NotHermitian { defect: f64, allowed: f64 },
    #[error("C21 differs from C12^H by {defect:e}")]
    BlockConjugation { defect: f64 },
    #[error(transparent)]
    Rbf(#[from] RbfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisProvenance {
    pub count: usize,
    pub shape: f64,
    pub fill_distance: f64,
    pub bbox: Rect,
}

impl BasisProvenance {
    pub fn of(basis: &RbfBasis) -> Self {
        Self { count: basis.len(), shape: basis.shape(), fill_distance: basis.fill_distance(), bbox: basis.bbox() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelProvenance {
    pub delta: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub c: Mat<Complex64>,
    /// The Gram matrix `G`; `D = diag(G, G)`.
    pub gram: Mat<f64>,
    pub basis: BasisProvenance,
    pub model: ModelProvenance,
}

impl BlockSystem {
    /// Number of basis functions `N`.
    pub fn n(&self) -> usize {
        self.gram.nrows()
    }

    pub fn dim(&self) -> usize {
        2 * self.n()
    }

    /// Dense `D`.
    pub fn d_matrix(&self) -> Mat<f64> {
        let n = self.n();
        Mat::from_fn(2 * n, 2 * n, |i, j| if i / n == j / n { self.gram[(i % n, j % n)] } else { 0.0 })
    }

    pub fn block(&self, row: usize, col: usize) -> Mat<Complex64> {
        let n = self.n();
        self.c.as_ref().submatrix(row * n, col * n, n, n).to_owned()
    }

    /// `D x` using the block structure.
    pub fn apply_d(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n();
        let mut out = vec![Complex64::new(0.0, 0.0); 2 * n];
        for half in 0..2 {
            for i in 0..n {
                out[half * n + i] = (0..n).map(|j| x[half * n + j] * self.gram[(i, j)]).sum();
            }
        }
        out
    }

    pub fn apply_c(&self, x: &[Complex64]) -> Vec<Complex64> {
        let m = self.dim();
        (0..m).map(|i| (0..m).map(|j| self.c[(i, j)] * x[j]).sum()).collect()
    }

    pub fn hermitian_defect(&self) -> f64 {
        hermitian_defect(&self.c)
    }
}

pub fn max_abs(m: &Mat<Complex64>) -> f64 {
    let mut v = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            v = v.max(m[(i, j)].norm());
        }
    }
    v
}

/// `max |C - C^H|`.
pub fn hermitian_defect(m: &Mat<Complex64>) -> f64 {
    let mut v = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..=j.min(m.nrows() - 1) {
            v = v.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    v
}

/// The `eps`-independent matrices for one basis and potential. Assembling
/// at many couplings only rescales the potential part.
#[derive(Debug, Clone)]
pub struct KernelCache {
    pub delta: f64,
    pub gram: Mat<f64>,
    pub dy: Mat<f64>,
    pub kinetic: Mat<f64>,
    pub m11: Mat<Complex64>,
    pub m22: Mat<Complex64>,
    pub m12: Mat<Complex64>,
    pub m21: Mat<Complex64>,
    basis: BasisProvenance,
}

impl KernelCache {
    pub fn new(basis: &RbfBasis, potential: &Potential, delta: f64, controls: &QuadControls) -> Result<Self, AssemblyError> {
        let ((m11, m22), (m12, m21)) = rayon::join(
            || rayon::join(|| basis.potential_matrix(&potential.v11, controls), || basis.potential_matrix(&potential.v22, controls)),
            || {
                rayon::join(
                    || basis.potential_matrix(&potential.v12, controls),
                    || basis.potential_matrix(&potential.v12.conj(), controls),
                )
            },
        );
        Ok(Self {
            delta,
            gram: basis.gram_matrix(),
            dy: basis.dy_matrix(),
            kinetic: basis.kinetic_matrix(delta),
            m11: m11?,
            m22: m22?,
            m12: m12?,
            m21: m21?,
            basis: BasisProvenance::of(basis),
        })
    }

    pub fn n(&self) -> usize {
        self.gram.nrows()
    }

    /// The system at coupling `eps`, with the invariant checks applied.
    pub fn assemble(&self, eps: f64) -> Result<BlockSystem, AssemblyError> {
        let n = self.n();
        let i = Complex64::new(0.0, 1.0);
        let re = |x: f64| Complex64::new(x, 0.0);
        let mut c = Mat::<Complex64>::zeros(2 * n, 2 * n);
        for col in 0..n {
            for row in 0..n {
                c[(row, col)] = -i * self.dy[(row, col)] + self.m11[(row, col)] * eps;
                c[(row, n + col)] = re(self.kinetic[(row, col)]) + self.m12[(row, col)] * eps;
                c[(n + row, col)] = re(self.kinetic[(row, col)]) + self.m21[(row, col)] * eps;
                c[(n + row, n + col)] = i * self.dy[(row, col)] + self.m22[(row, col)] * eps;
            }
        }

        let scale = max_abs(&c).max(f64::MIN_POSITIVE);
        let mut conj_defect = 0.0f64;
        for col in 0..n {
            for row in 0..n {
                conj_defect = conj_defect.max((c[(n + row, col)] - c[(col, n + row)].conj()).norm());
            }
        }
        if conj_defect > HERMITIAN_TOL * scale {
            return Err(AssemblyError::BlockConjugation { defect: conj_defect });
        }
        for col in 0..n {
            for row in 0..n {
                c[(n + row, col)] = c[(col, n + row)].conj();
            }
        }

        let defect = hermitian_defect(&c);
        if defect > HERMITIAN_TOL * scale {
            return Err(AssemblyError::NotHermitian { defect, allowed: HERMITIAN_TOL * scale });
        }
        Ok(BlockSystem {
            c,
            gram: self.gram.clone(),
            basis: self.basis,
            model: ModelProvenance { delta: self.delta, epsilon: eps },
        })
    }
}

pub fn assemble(model: &Model, basis: &RbfBasis, controls: &QuadControls) -> Result<BlockSystem, AssemblyError> {
    KernelCache::new(basis, model.potential(), model.delta(), controls)?.assemble(model.epsilon())
}

/// Writes `i j re im` per nonzero-or-not entry, one line each, zero-based.
pub fn write_matrix_dump<W: Write>(m: &Mat<Complex64>, mut out: W) -> io::Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            writeln!(out, "{i} {j} {:.16e} {:.16e}", v.re, v.im)?;
        }
    }
    Ok(())
}

/// Parses the output of [`write_matrix_dump`].
pub fn read_matrix_dump(text: &str, rows: usize, cols: usize) -> Result<Mat<Complex64>, String> {
    let mut m = Mat::<Complex64>::zeros(rows, cols);
    for (k, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            return Err(format!("line {}: expected 4 fields", k + 1));
        }
        let bad = |e: &dyn std::fmt::Display| format!("line {}: {e}", k + 1);
        let i: usize = f[0].parse().map_err(|e| bad(&e))?;
        let j: usize = f[1].parse().map_err(|e| bad(&e))?;
        if i >= rows || j >= cols {
            return Err(format!("line {}: index ({i}, {j}) out of range", k + 1));
        }
        m[(i, j)] = Complex64::new(f[2].parse().map_err(|e| bad(&e))?, f[3].parse().map_err(|e| bad(&e))?);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::model::ScalarField2D;
    use crate::rbf::{generate_nodes, NodeLayout};
    use std::f64::consts::PI;

    fn small_basis() -> RbfBasis {
        let bbox = Rect::centered_square(3.0);
        RbfBasis::with_shape_factor(generate_nodes(bbox, 16, NodeLayout::Grid).unwrap(), bbox, 0.8).unwrap()
    }

    fn symmetric(eps: f64) -> Model {
        Model::new(5.0, eps, Potential::off_diagonal(ScalarField2D::disk(Vec2::ORIGIN, 2.0, -1.0).unwrap())).unwrap()
    }

    fn general(eps: f64) -> Model {
        let p = Potential::new(
            ScalarField2D::disk(Vec2::new(0.5, 0.0), 1.5, 0.2).unwrap(),
            ScalarField2D::gaussian(Vec2::ORIGIN, 1.0, -0.9).unwrap(),
            ScalarField2D::sum(vec![
                ScalarField2D::disk(Vec2::ORIGIN, 2.0, -1.0).unwrap(),
                ScalarField2D::gaussian(Vec2::new(0.0, 1.0), 0.8, Complex64::new(0.0, 0.5)).unwrap(),
            ]),
        );
        Model::new(5.0, eps, p).unwrap()
    }

    #[test]
    fn single_node_example() {
        let basis = RbfBasis::new(vec![Vec2::ORIGIN], 1.0, Rect::centered_square(8.0)).unwrap();
        let s = assemble(&symmetric(0.0), &basis, &QuadControls::default()).unwrap();
        let three_pi = Complex64::new(3.0 * PI, 0.0);
        assert!(s.c[(0, 0)].norm() < 1e-15 && s.c[(1, 1)].norm() < 1e-15);
        assert!((s.c[(0, 1)] - three_pi).norm() < 1e-13);
        assert!((s.c[(1, 0)] - three_pi).norm() < 1e-13);
        let d = s.d_matrix();
        assert!((d[(0, 0)] - PI / 2.0).abs() < 1e-15 && d[(0, 1)] == 0.0);
    }

    #[test]
    fn zero_coupling_blocks() {
        let s = assemble(&general(0.0), &small_basis(), &QuadControls::default()).unwrap();
        let (c11, c22, c12, c21) = (s.block(0, 0), s.block(1, 1), s.block(0, 1), s.block(1, 0));
        for i in 0..s.n() {
            for j in 0..s.n() {
                assert_eq!(c11[(i, j)], -c22[(i, j)]);
                assert_eq!(c12[(i, j)], c21[(i, j)]);
                assert_eq!(c12[(i, j)].im, 0.0);
                assert_eq!(c12[(i, j)], c12[(j, i)]);
            }
        }
    }

    #[test]
    fn hermitian_with_complex_off_diagonal() {
        let s = assemble(&general(2.5), &small_basis(), &QuadControls::default()).unwrap();
        assert!(s.hermitian_defect() <= HERMITIAN_TOL * max_abs(&s.c));
        let (c12, c21) = (s.block(0, 1), s.block(1, 0));
        for i in 0..s.n() {
            for j in 0..s.n() {
                assert_eq!(c21[(i, j)], c12[(j, i)].conj());
            }
        }
    }

    #[test]
    fn linear_in_coupling() {
        let cache = KernelCache::new(&small_basis(), general(1.0).potential(), 5.0, &QuadControls::default()).unwrap();
        let s0 = cache.assemble(0.0).unwrap();
        let s1 = cache.assemble(1.0).unwrap();
        let s25 = cache.assemble(2.5).unwrap();
        let scale = max_abs(&s25.c);
        for i in 0..s0.dim() {
            for j in 0..s0.dim() {
                let predicted = s0.c[(i, j)] + (s1.c[(i, j)] - s0.c[(i, j)]) * 2.5;
                assert!((predicted - s25.c[(i, j)]).norm() < 1e-13 * scale);
            }
        }
    }

    #[test]
    fn chiral_symmetry_in_symmetric_setting() {
        let s = assemble(&symmetric(2.5), &small_basis(), &QuadControls::default()).unwrap();
        let n = s.n();
        let scale = max_abs(&s.c);
        for i in 0..2 * n {
            for j in 0..2 * n {
                let sign = if (i < n) == (j < n) { 1.0 } else { -1.0 };
                let flipped = (s.c[(i, j)] * sign).conj();
                assert!((flipped + s.c[(i, j)]).norm() <= 1e-14 * scale);
            }
        }
        // A diagonal term breaks it.
        let broken = assemble(&general(2.5), &small_basis(), &QuadControls::default()).unwrap();
        let defect = (0..n).map(|i| (broken.c[(i, i)].conj() + broken.c[(i, i)]).norm()).fold(0.0, f64::max);
        assert!(defect > 1e-3);
    }

    #[test]
    fn gram_blocks_identical() {
        let s = assemble(&symmetric(1.0), &small_basis(), &QuadControls::default()).unwrap();
        let d = s.d_matrix();
        let n = s.n();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(d[(i, j)], d[(n + i, n + j)]);
                assert_eq!(d[(i, n + j)], 0.0);
            }
        }
        let ev = d.self_adjoint_eigenvalues(faer::Side::Lower).unwrap();
        let max = ev.iter().cloned().fold(0.0, f64::max);
        assert!(ev.iter().all(|&l| l >= -1e-12 * max));
    }

    #[test]
    fn matrix_dump_round_trip() {
        let s = assemble(&general(1.0), &small_basis(), &QuadControls::default()).unwrap();
        let mut buf = Vec::new();
        write_matrix_dump(&s.c, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), s.dim() * s.dim());
        assert!(text.starts_with("0 0 "));
        let back = read_matrix_dump(&text, s.dim(), s.dim()).unwrap();
        assert_eq!(back, s.c);
        assert!(read_matrix_dump("0 0 1.0", 1, 1).is_err());
        assert!(read_matrix_dump("3 0 1.0 0.0", 1, 1).is_err());
    }

    #[test]
    fn apply_helpers_match_dense() {
        let s = assemble(&general(1.0), &small_basis(), &QuadControls::default()).unwrap();
        let x: Vec<Complex64> = (0..s.dim()).map(|k| Complex64::new((k as f64).sin(), (k as f64 * 0.3).cos())).collect();
        let d = s.d_matrix();
        let dense: Vec<Complex64> = (0..s.dim()).map(|i| (0..s.dim()).map(|j| x[j] * d[(i, j)]).sum()).collect();
        for (a, b) in s.apply_d(&x).iter().zip(&dense) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
