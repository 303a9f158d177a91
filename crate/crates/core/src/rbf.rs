//! Gaussian radial basis `phi_j(r) = exp(-s^2 |r - r_j|^2)` on scattered nodes.
//!
//! The product of two basis functions is again a Gaussian,
//!
//! ```text
//!     phi_i phi_j = exp(-s^2 d^2 / 2) exp(-2 s^2 |r - m|^2),   m = (r_i + r_j) / 2,
//! ```
//!
//! so the Gram, `d_y` and `-d_x^2` kernels have closed forms. Potential-weighted
//! entries are integrated on rules aligned to the potential's support.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Rect, Vec2};
use crate::model::{ScalarField2D, GAUSSIAN_TAIL};
use crate::quadrature::{integrate, QuadControls, QuadratureError, QuadratureRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbfError {
    #[error("basis needs at least one node")]
    Empty,
    #[error("shape parameter must be positive and finite, got {0}")]
    BadShape(f64),
    #[error("nodes {0} and {1} coincide")]
    DuplicateNodes(usize, usize),
    #[error("node generation box is degenerate")]
    DegenerateBox,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLayout {
    Halton,
    #[default]
    Grid,
}

/// Deterministic node sets inside `bbox`.
///
/// `Grid` takes the near-square lattice with `cols = ceil(sqrt(count))` and
/// `rows = ceil(count / cols)`, then spreads the surplus over the rows so that
/// every row is cell-centred with `cols` or `cols - 1` nodes. Square counts
/// give the plain `m x m` lattice. `Halton` uses bases 2 and 3 starting at
/// index 1.
pub fn generate_nodes(bbox: Rect, count: usize, layout: NodeLayout) -> Result<Vec<Vec2>, RbfError> {
    if !bbox.is_non_degenerate() {
        return Err(RbfError::DegenerateBox);
    }
    if count == 0 {
        return Err(RbfError::Empty);
    }
    Ok(match layout {
        NodeLayout::Halton => (1..=count as u64)
            .map(|i| bbox.from_unit(radical_inverse(i, 2), radical_inverse(i, 3)))
            .collect(),
        NodeLayout::Grid => {
            let mut cols = (count as f64).sqrt().ceil() as usize;
            while cols * cols < count {
                cols += 1;
            }
            let rows = count.div_ceil(cols);
            (0..rows)
                .flat_map(|row| {
                    let in_row = (row + 1) * count / rows - row * count / rows;
                    (0..in_row).map(move |col| {
                        bbox.from_unit((col as f64 + 0.5) / in_row as f64, (row as f64 + 0.5) / rows as f64)
                    })
                })
                .collect()
        }
    })
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Largest distance from a point of `bbox` to its nearest node, estimated on a
/// `samples x samples` lattice that includes the box boundary.
pub fn fill_distance(nodes: &[Vec2], bbox: Rect, samples: usize) -> f64 {
    let samples = samples.max(2);
    let mut worst: f64 = 0.0;
    for a in 0..samples {
        for b in 0..samples {
            let p = bbox.from_unit(a as f64 / (samples - 1) as f64, b as f64 / (samples - 1) as f64);
            let nearest = nodes.iter().map(|q| (p - *q).norm2()).fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
    }
    worst.sqrt()
}

/// Default shape parameter scale: `s = DEFAULT_SHAPE_FACTOR / h_fill`.
pub const DEFAULT_SHAPE_FACTOR: f64 = 0.8;
const FILL_SAMPLES: usize = 129;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfBasis {
    nodes: Vec<Vec2>,
    shape: f64,
    bbox: Rect,
    fill_distance: f64,
}

impl RbfBasis {
    pub fn new(nodes: Vec<Vec2>, shape: f64, bbox: Rect) -> Result<Self, RbfError> {
        if nodes.is_empty() {
            return Err(RbfError::Empty);
        }
        if !(shape.is_finite() && shape > 0.0) {
            return Err(RbfError::BadShape(shape));
        }
        for i in 0..nodes.len() {
            for j in 0..i {
                if nodes[i] == nodes[j] {
                    return Err(RbfError::DuplicateNodes(j, i));
                }
            }
        }
        let fill_distance = fill_distance(&nodes, bbox, FILL_SAMPLES);
        Ok(Self { nodes, shape, bbox, fill_distance })
    }

    /// Shape chosen as `factor / h_fill`.
    pub fn with_shape_factor(nodes: Vec<Vec2>, bbox: Rect, factor: f64) -> Result<Self, RbfError> {
        let h = fill_distance(&nodes, bbox, FILL_SAMPLES);
        Self::new(nodes, factor / h, bbox)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn bbox(&self) -> Rect {
        self.bbox
    }

    pub fn fill_distance(&self) -> f64 {
        self.fill_distance
    }

    /// `phi_j(p)`.
    pub fn eval(&self, j: usize, p: Vec2) -> f64 {
        (-self.shape * self.shape * (p - self.nodes[j]).norm2()).exp()
    }

    /// Distance beyond which a single basis function is below [`GAUSSIAN_TAIL`].
    pub fn reach(&self) -> f64 {
        (-GAUSSIAN_TAIL.ln()).sqrt() / self.shape
    }

    /// `(phi_i, phi_j) = pi / (2 s^2) exp(-s^2 d^2 / 2)`.
    pub fn gram(&self, i: usize, j: usize) -> f64 {
        let s2 = self.shape * self.shape;
        let d2 = (self.nodes[i] - self.nodes[j]).norm2();
        PI / (2.0 * s2) * (-0.5 * s2 * d2).exp()
    }

    /// `(phi_i, d_y phi_j) = s^2 (y_j - y_i) (phi_i, phi_j)`.
    pub fn dy_moment(&self, i: usize, j: usize) -> f64 {
        let s2 = self.shape * self.shape;
        s2 * (self.nodes[j].y - self.nodes[i].y) * self.gram(i, j)
    }

    /// `(phi_i, (-d_x^2 + delta) phi_j) = (d_x phi_i, d_x phi_j) + delta (phi_i, phi_j)`
    /// `= [s^2 (1 - s^2 dx^2) + delta] (phi_i, phi_j)`.
    pub fn kinetic_x(&self, i: usize, j: usize, delta: f64) -> f64 {
        let s2 = self.shape * self.shape;
        let dx = self.nodes[i].x - self.nodes[j].x;
        (s2 * (1.0 - s2 * dx * dx) + delta) * self.gram(i, j)
    }

    /// `(phi_i, V phi_j)` by quadrature over the support of each leaf of `V`
    /// intersected with the region where `phi_i phi_j` exceeds [`GAUSSIAN_TAIL`]
    /// of its peak.
    pub fn potential_moment(&self, i: usize, j: usize, field: &ScalarField2D, controls: &QuadControls) -> Result<Complex64, RbfError> {
        let s2 = self.shape * self.shape;
        let (a, b) = (self.nodes[i], self.nodes[j]);
        let m = a.midpoint(b);
        let prefactor = (-0.5 * s2 * (a - b).norm2()).exp();
        // exp(-2 s^2 rho^2) = GAUSSIAN_TAIL
        let rho = self.reach() / std::f64::consts::SQRT_2;
        let product = |p: Vec2| prefactor * (-2.0 * s2 * (p - m).norm2()).exp();
        let local = || QuadratureRule::polar_disk(m, rho, controls.radial_order, controls.angular_count);

        let mut total = Complex64::new(0.0, 0.0);
        for leaf in field.leaves() {
            let rule = match leaf {
                ScalarField2D::DiskIndicator { center, radius, .. } => {
                    let dist = (m - *center).norm();
                    if dist >= radius + rho {
                        continue;
                    }
                    if dist + rho <= *radius {
                        local()
                    } else {
                        controls.disk_rule(*center, *radius, 2.0_f64.sqrt() * self.shape)
                    }
                }
                ScalarField2D::GaussianDecay { .. } => local(),
                _ => continue,
            };
            total += integrate(|p| leaf.eval(p) * product(p), &rule)?;
        }
        Ok(total)
    }

    pub fn gram_matrix(&self) -> Mat<f64> {
        Mat::from_fn(self.len(), self.len(), |i, j| self.gram(i, j))
    }

    pub fn dy_matrix(&self) -> Mat<f64> {
        Mat::from_fn(self.len(), self.len(), |i, j| self.dy_moment(i, j))
    }

    pub fn kinetic_matrix(&self, delta: f64) -> Mat<f64> {
        Mat::from_fn(self.len(), self.len(), |i, j| self.kinetic_x(i, j, delta))
    }

    /// Full matrix of [`potential_moment`](Self::potential_moment) entries.
    ///
    /// Each leaf contributes `amplitude * Phi W Phi^T`, where `Phi` samples the
    /// basis functions that reach the leaf's aligned rule and `W` carries the
    /// rule weights times the leaf profile.
    pub fn potential_matrix(&self, field: &ScalarField2D, controls: &QuadControls) -> Result<Mat<Complex64>, RbfError> {
        let n = self.len();
        let mut re = Mat::<f64>::zeros(n, n);
        let mut im = Mat::<f64>::zeros(n, n);
        let s2 = self.shape * self.shape;
        let reach = self.reach();
        for leaf in field.leaves() {
            let Some(rule) = controls.leaf_rule(leaf, 2.0_f64.sqrt() * self.shape) else { continue };
            let (center, radius) = match leaf {
                ScalarField2D::DiskIndicator { center, radius, .. } => (*center, *radius),
                ScalarField2D::GaussianDecay { center, width, .. } => {
                    (*center, crate::model::gaussian_tail_radius(*width))
                }
                _ => continue,
            };
            let active: Vec<usize> = (0..n).filter(|&i| (self.nodes[i] - center).norm() < radius + reach).collect();
            if active.is_empty() {
                continue;
            }
            let q = rule.len();
            let phi = Mat::<f64>::from_fn(active.len(), q, |a, k| {
                (-s2 * (rule.nodes[k].point - self.nodes[active[a]]).norm2()).exp()
            });
            let mut weights = Vec::with_capacity(q);
            for (k, node) in rule.nodes.iter().enumerate() {
                let v = leaf.eval(node.point) * node.weight;
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(QuadratureError::NonFinite { index: k, x: node.point.x, y: node.point.y }.into());
                }
                weights.push(v);
            }
            let has_imag = weights.iter().any(|w| w.im != 0.0);
            let scaled = |part: fn(&Complex64) -> f64| {
                Mat::<f64>::from_fn(active.len(), q, |a, k| phi[(a, k)] * part(&weights[k]))
            };
            let block_re = &scaled(|w| w.re) * phi.transpose();
            let block_im = if has_imag { Some(&scaled(|w| w.im) * phi.transpose()) } else { None };
            for (a, &i) in active.iter().enumerate() {
                for (b, &j) in active.iter().enumerate() {
                    re[(i, j)] += block_re[(a, b)];
                    if let Some(bi) = &block_im {
                        im[(i, j)] += bi[(a, b)];
                    }
                }
            }
        }
        Ok(Mat::from_fn(n, n, |i, j| Complex64::new(re[(i, j)], im[(i, j)])))
    }
}
