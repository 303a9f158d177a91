//! Deterministic 2D quadrature: tensor Gauss-Legendre on rectangles,
//! Gauss-Legendre × trapezoid on disks, and a log-radius annulus rule for
//! integrands that vary on a logarithmic scale.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Rect, Vec2};
use crate::model::{gaussian_tail_radius, ScalarField2D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("integrand is not finite at node {index} ({x}, {y})")]
    NonFinite { index: usize, x: f64, y: f64 },
    #[error("quadrature not converged: value {value:e}, error estimate {estimate:e} exceeds tolerance {tolerance:e}")]
    NotConverged { value: f64, estimate: f64, tolerance: f64 },
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Roots of `P_order` by Newton iteration from the Tricomi initial guess.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Legendre order must be positive");
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, half * w))
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKind {
    TensorRect { rect: Rect, order: usize },
    PolarDisk { center: Vec2, radius: f64, radial_order: usize, angular_count: usize },
    /// Annulus `r_inner < |r - center| < r_outer` with Gauss-Legendre in `log r`.
    LogPolarAnnulus { center: Vec2, r_inner: f64, r_outer: f64, radial_order: usize, angular_count: usize },
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadNode {
    pub point: Vec2,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: RuleKind,
    pub nodes: Vec<QuadNode>,
}

impl QuadratureRule {
    /// `order^2` tensor Gauss-Legendre nodes.
    pub fn tensor_rect(rect: Rect, order: usize) -> Self {
        let gl = GaussLegendre::new(order);
        let mut nodes = Vec::with_capacity(order * order);
        for (x, wx) in gl.on_interval(rect.min.x, rect.max.x) {
            for (y, wy) in gl.on_interval(rect.min.y, rect.max.y) {
                nodes.push(QuadNode { point: Vec2::new(x, y), weight: wx * wy });
            }
        }
        Self { kind: RuleKind::TensorRect { rect, order }, nodes }
    }

    /// Gauss-Legendre in `r` (weight `r dr`) times the periodic trapezoid rule in `theta`.
    pub fn polar_disk(center: Vec2, radius: f64, radial_order: usize, angular_count: usize) -> Self {
        let nodes = polar_nodes(center, 0.0, radius, radial_order, angular_count, false);
        Self { kind: RuleKind::PolarDisk { center, radius, radial_order, angular_count }, nodes }
    }

    /// Annulus rule in `(log r, theta)`; the area element is `r^2 dt dtheta`.
    pub fn log_polar_annulus(
        center: Vec2,
        r_inner: f64,
        r_outer: f64,
        radial_order: usize,
        angular_count: usize,
    ) -> Self {
        assert!(r_inner > 0.0 && r_outer > r_inner, "log-polar annulus needs 0 < r_inner < r_outer");
        let nodes = polar_nodes(center, r_inner, r_outer, radial_order, angular_count, true);
        Self {
            kind: RuleKind::LogPolarAnnulus { center, r_inner, r_outer, radial_order, angular_count },
            nodes,
        }
    }

    /// Concatenation of rules over disjoint regions.
    pub fn composite(parts: impl IntoIterator<Item = QuadratureRule>) -> Self {
        let nodes = parts.into_iter().flat_map(|r| r.nodes).collect();
        Self { kind: RuleKind::Composite, nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Sum of the weights.
    pub fn area(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// Exact area of the region the rule covers, where defined.
    pub fn region_area(&self) -> Option<f64> {
        match self.kind {
            RuleKind::TensorRect { rect, .. } => Some(rect.area()),
            RuleKind::PolarDisk { radius, .. } => Some(PI * radius * radius),
            RuleKind::LogPolarAnnulus { r_inner, r_outer, .. } => Some(PI * (r_outer * r_outer - r_inner * r_inner)),
            RuleKind::Composite => None,
        }
    }
}

fn polar_nodes(center: Vec2, r0: f64, r1: f64, radial_order: usize, angular_count: usize, log_radius: bool) -> Vec<QuadNode> {
    assert!(radial_order >= 1 && angular_count >= 1, "polar rule orders must be positive");
    let gl = GaussLegendre::new(radial_order);
    let dtheta = 2.0 * PI / angular_count as f64;
    let angles: Vec<(f64, f64)> = (0..angular_count).map(|k| (k as f64 * dtheta).sin_cos()).collect();
    let radial: Vec<(f64, f64)> = if log_radius {
        gl.on_interval(r0.ln(), r1.ln()).map(|(t, w)| {
            let r = t.exp();
            (r, w * r * r)
        })
        .collect()
    } else {
        gl.on_interval(r0, r1).map(|(r, w)| (r, w * r)).collect()
    };
    let mut nodes = Vec::with_capacity(radial.len() * angular_count);
    for &(r, wr) in &radial {
        for &(s, c) in &angles {
            nodes.push(QuadNode { point: Vec2::new(center.x + r * c, center.y + r * s), weight: wr * dtheta });
        }
    }
    nodes
}

/// Weighted sum `sum_k w_k f(x_k)` in node order.
pub fn integrate<F>(f: F, rule: &QuadratureRule) -> Result<Complex64, QuadratureError>
where
    F: Fn(Vec2) -> Complex64,
{
    let mut acc = Complex64::new(0.0, 0.0);
    for (index, node) in rule.nodes.iter().enumerate() {
        let v = f(node.point);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(QuadratureError::NonFinite { index, x: node.point.x, y: node.point.y });
        }
        acc += v * node.weight;
    }
    Ok(acc)
}

/// Real-valued variant of [`integrate`].
pub fn integrate_real<F>(f: F, rule: &QuadratureRule) -> Result<f64, QuadratureError>
where
    F: Fn(Vec2) -> f64,
{
    let mut acc = 0.0;
    for (index, node) in rule.nodes.iter().enumerate() {
        let v = f(node.point);
        if !v.is_finite() {
            return Err(QuadratureError::NonFinite { index, x: node.point.x, y: node.point.y });
        }
        acc += v * node.weight;
    }
    Ok(acc)
}

/// Value from the finer rule together with `|high - low|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    pub error: f64,
    pub converged: bool,
}

impl Estimate {
    pub fn into_result(self, tolerance: f64) -> Result<Complex64, QuadratureError> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(QuadratureError::NotConverged { value: self.value.norm(), estimate: self.error, tolerance })
        }
    }
}

/// Integrates with both rules; `converged` is false when the difference
/// exceeds `tolerance * max(1, |value|)`.
pub fn adaptive_tolerance_check<F>(
    f: F,
    low: &QuadratureRule,
    high: &QuadratureRule,
    tolerance: f64,
) -> Result<Estimate, QuadratureError>
where
    F: Fn(Vec2) -> Complex64,
{
    let lo = integrate(&f, low)?;
    let hi = integrate(&f, high)?;
    let error = (hi - lo).norm();
    Ok(Estimate { value: hi, error, converged: error <= tolerance * hi.norm().max(1.0) })
}

/// Quadrature orders shared by every module that integrates against a
/// potential. Polar orders apply to supports with `radius * shape <= 6`
/// and grow linearly beyond that, so basis-function products stay resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadControls {
    pub radial_order: usize,
    pub angular_count: usize,
    pub tensor_order: usize,
    /// Gauss-Legendre order per smooth piece of a log-radius annulus.
    pub annulus_order: usize,
    pub annulus_angular: usize,
    pub tolerance: f64,
}

impl Default for QuadControls {
    fn default() -> Self {
        Self {
            radial_order: 48,
            angular_count: 96,
            tensor_order: 48,
            annulus_order: 32,
            annulus_angular: 32,
            tolerance: 1e-10,
        }
    }
}

impl QuadControls {
    pub fn validate(&self) -> Result<(), String> {
        let orders = [
            ("radial_order", self.radial_order),
            ("angular_count", self.angular_count),
            ("tensor_order", self.tensor_order),
            ("annulus_order", self.annulus_order),
            ("annulus_angular", self.annulus_angular),
        ];
        if let Some((name, _)) = orders.iter().find(|(_, v)| *v == 0) {
            return Err(format!("{name} must be positive"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(format!("tolerance must lie in (0, 1), got {}", self.tolerance));
        }
        Ok(())
    }

    /// Polar rule on a disk of `radius`, refined for Gaussians of inverse
    /// width `shape` (pass 0 when no basis function is involved).
    pub fn disk_rule(&self, center: Vec2, radius: f64, shape: f64) -> QuadratureRule {
        let scale = (radius * shape / 6.0).max(1.0);
        let radial = (self.radial_order as f64 * scale).ceil() as usize;
        let angular = (self.angular_count as f64 * scale).ceil() as usize;
        QuadratureRule::polar_disk(center, radius, radial, angular)
    }

    /// Rule aligned to the support of a single field leaf: the disk itself
    /// for indicators, the tail disk for Gaussians. `None` for `Zero`/`Sum`.
    pub fn leaf_rule(&self, leaf: &ScalarField2D, shape: f64) -> Option<QuadratureRule> {
        match leaf {
            ScalarField2D::DiskIndicator { center, radius, .. } => Some(self.disk_rule(*center, *radius, shape)),
            ScalarField2D::GaussianDecay { center, width, .. } => {
                Some(self.disk_rule(*center, gaussian_tail_radius(*width), shape))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn gauss_legendre_matches_known_values() {
        let gl = GaussLegendre::new(2);
        assert!((gl.nodes[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((gl.weights[0] - 1.0).abs() < 1e-15);
        let gl = GaussLegendre::new(3);
        assert!((gl.nodes[2] - (0.6f64).sqrt()).abs() < 1e-15);
        assert!((gl.weights[1] - 8.0 / 9.0).abs() < 1e-15);
        for n in [1, 5, 24, 48, 97] {
            let gl = GaussLegendre::new(n);
            let sum: f64 = gl.weights.iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "order {n}: {sum}");
            assert!(gl.nodes.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exact_up_to_degree() {
        // Degree 2n-1 exactness on [-1, 1].
        let gl = GaussLegendre::new(6);
        for d in 0..12 {
            let num: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(d)).sum();
            let exact = if d % 2 == 1 { 0.0 } else { 2.0 / (d as f64 + 1.0) };
            assert!((num - exact).abs() < 1e-14, "degree {d}");
        }
    }

    #[test]
    fn weights_sum_to_area() {
        let rules = [
            QuadratureRule::tensor_rect(Rect::new(Vec2::new(-1.0, 2.0), Vec2::new(3.0, 2.5)), 7),
            QuadratureRule::polar_disk(Vec2::new(1.0, -1.0), 2.0, 24, 48),
            QuadratureRule::log_polar_annulus(Vec2::ORIGIN, 4.0, 16.0, 20, 16),
        ];
        for r in &rules {
            let exact = r.region_area().unwrap();
            assert!((r.area() - exact).abs() <= 1e-12 * exact, "{:?}", r.kind);
            assert!(r.nodes.iter().all(|n| n.weight > 0.0));
        }
        assert_eq!(rules[0].len(), 49);
        assert_eq!(rules[1].len(), 24 * 48);
    }

    #[test]
    fn integrate_examples() {
        let unit = QuadratureRule::tensor_rect(Rect::new(Vec2::ORIGIN, Vec2::new(1.0, 1.0)), 2);
        assert!((integrate(|_| c(1.0), &unit).unwrap().re - 1.0).abs() < 1e-15);

        let sq = QuadratureRule::tensor_rect(Rect::centered_square(1.0), 2);
        let v = integrate(|p| c(p.x * p.x * p.y * p.y), &sq).unwrap();
        assert!((v.re - 4.0 / 9.0).abs() < 1e-15);

        let disk = QuadratureRule::polar_disk(Vec2::ORIGIN, 2.0, 32, 8);
        let v = integrate(|p| c((-2.0 * p.norm2()).exp()), &disk).unwrap();
        let exact = 0.5 * PI * (1.0 - (-8.0f64).exp());
        assert!((v.re - exact).abs() < 1e-13);
        assert!((exact - 1.570_268).abs() < 2e-6);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let r = QuadratureRule::tensor_rect(Rect::centered_square(1.0), 3);
        let err = integrate(|p| if p.x > 0.5 { c(f64::NAN) } else { c(1.0) }, &r).unwrap_err();
        match err {
            QuadratureError::NonFinite { x, .. } => assert!(x > 0.5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tolerance_check_examples() {
        let low = QuadratureRule::polar_disk(Vec2::ORIGIN, 2.0, 24, 16);
        let high = QuadratureRule::polar_disk(Vec2::ORIGIN, 2.0, 48, 32);
        let e = adaptive_tolerance_check(|_| c(1.0), &low, &high, 1e-12).unwrap();
        assert!(e.error < 1e-13 && e.converged);

        let g = |p: Vec2| c((-2.0 * p.norm2()).exp());
        let e = adaptive_tolerance_check(g, &low, &high, 1e-10).unwrap();
        assert!(e.error < 1e-10);
        let exact = 0.5 * PI * (1.0 - (-8.0f64).exp());
        assert!((e.value.re - exact).abs() < 1e-10);
    }

    #[test]
    fn discontinuous_integrand_converges_algebraically() {
        // chi of the radius-2 disk over [0, 3] x [-3, 3]: exact value 2 pi.
        let rect = Rect::new(Vec2::new(0.0, -3.0), Vec2::new(3.0, 3.0));
        let chi = |p: Vec2| if p.norm2() <= 4.0 { c(1.0) } else { c(0.0) };
        let errors: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&n| (integrate(chi, &QuadratureRule::tensor_rect(rect, n)).unwrap().re - 2.0 * PI).abs())
            .collect();
        // Slow decay: far from the spectral convergence of smooth integrands.
        assert!(errors[3] > 1e-6, "{errors:?}");
        assert!(errors[3] < errors[0], "{errors:?}");
        let low = QuadratureRule::tensor_rect(rect, 32);
        let high = QuadratureRule::tensor_rect(rect, 64);
        let est = adaptive_tolerance_check(chi, &low, &high, 1e-10).unwrap();
        assert!(!est.converged);
        assert!(matches!(est.into_result(1e-10), Err(QuadratureError::NotConverged { .. })));
    }

    #[test]
    fn polar_and_tensor_agree_on_disk_supported_integrand() {
        // Smooth and compactly supported inside the disk: (4 - r^2)^3 on r < 2.
        let f = |p: Vec2| {
            let t = 4.0 - p.norm2();
            c(if t > 0.0 { t * t * t } else { 0.0 })
        };
        let polar = integrate(f, &QuadratureRule::polar_disk(Vec2::ORIGIN, 2.0, 16, 16)).unwrap().re;
        let exact = PI * 4f64.powi(4) / 4.0;
        assert!((polar - exact).abs() < 1e-10 * exact);
        let low = QuadratureRule::tensor_rect(Rect::centered_square(2.0), 40);
        let high = QuadratureRule::tensor_rect(Rect::centered_square(2.0), 80);
        let est = adaptive_tolerance_check(f, &low, &high, 1.0).unwrap();
        assert!((est.value.re - polar).abs() <= est.error.max(1e-8 * exact), "{} vs {polar}, est {}", est.value.re, est.error);
    }

    #[test]
    fn log_annulus_integrates_power_law() {
        // Integral of 1/r^2 over n < r < n^2 is 2 pi log n.
        let n: f64 = 8.0;
        let rule = QuadratureRule::log_polar_annulus(Vec2::ORIGIN, n, n * n, 8, 8);
        let v = integrate_real(|p| 1.0 / p.norm2(), &rule).unwrap();
        assert!((v - 2.0 * PI * n.ln()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn linearity(a in -3.0..3.0f64, b in -3.0..3.0f64, kx in -2.0..2.0f64, ky in -2.0..2.0f64) {
            let rule = QuadratureRule::tensor_rect(Rect::new(Vec2::new(-1.0, -2.0), Vec2::new(2.0, 1.0)), 9);
            let f = |p: Vec2| Complex64::new((kx * p.x).cos(), p.y * p.y);
            let g = |p: Vec2| Complex64::new((ky * p.y).exp(), -p.x);
            let lhs = integrate(|p| f(p) * a + g(p) * b, &rule).unwrap();
            let rhs = integrate(f, &rule).unwrap() * a + integrate(g, &rule).unwrap() * b;
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        }

        #[test]
        fn region_additivity(split in 0.1..0.9f64, k in 0.1..2.0f64) {
            let f = |p: Vec2| c((k * p.x).sin() + (p.y * k).cos() * p.x * p.x);
            let whole = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(1.0, 2.0));
            let left = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(split, 2.0));
            let right = Rect::new(Vec2::new(split, 0.0), Vec2::new(1.0, 2.0));
            let w = integrate(f, &QuadratureRule::tensor_rect(whole, 20)).unwrap().re;
            let l = integrate(f, &QuadratureRule::tensor_rect(left, 20)).unwrap().re;
            let r = integrate(f, &QuadratureRule::tensor_rect(right, 20)).unwrap().re;
            prop_assert!((w - (l + r)).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }
}
