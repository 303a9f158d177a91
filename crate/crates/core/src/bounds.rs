//! Closed-form quantities of the variational analysis.
//!
//! With the constant spinors `psi^+ = (1, 0)` and `psi^- = (0, 1)` as trial
//! states for `H_eps^2`, the limiting quadratic form values are
//!
//! ```text
//!     I^+ = eps^2 |V11|^2 + eps^2 |V12|^2 + 2 delta eps <Re V12>
//!     I^- = eps^2 |V22|^2 + eps^2 |V12|^2 + 2 delta eps <Re V12>
//! ```
//!
//! and a negative value certifies a discrete eigenvalue in the gap. The
//! logarithmic cutoff `phi_n` regularizes the trial states and yields the
//! upper bound `E^2 - delta^2 <= g(eps, n)` minimized at `n_eps`.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{gaussian_tail_radius, Potential, ScalarField2D};
use crate::quadrature::{adaptive_tolerance_check, integrate, QuadControls, QuadratureError, QuadratureRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("cutoff radius n = {0} is below e")]
    NBelowE(f64),
    #[error("I = {0} is not negative; g has no negative minimum")]
    NonNegativeI(f64),
    #[error("invalid cutoff profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// `<Re V12>` and the squared L^2 norms of the three stored coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialMoments {
    pub mean_re_v12: f64,
    pub norm2_v11: f64,
    pub norm2_v12: f64,
    pub norm2_v22: f64,
}

impl PotentialMoments {
    pub fn is_diagonal_free(&self) -> bool {
        self.norm2_v11 == 0.0 && self.norm2_v22 == 0.0
    }
}

/// Moments of `p`, in closed form wherever one exists (disk-disk lens areas,
/// Gaussian-Gaussian products) and by polar quadrature for disk-Gaussian
/// cross terms.
pub fn potential_moments(p: &Potential, controls: &QuadControls) -> Result<PotentialMoments, BoundsError> {
    let mean: Complex64 = p.v12.leaves().iter().map(|l| leaf_integral(l)).sum();
    Ok(PotentialMoments {
        mean_re_v12: mean.re,
        norm2_v11: norm2(&p.v11, controls)?,
        norm2_v12: norm2(&p.v12, controls)?,
        norm2_v22: norm2(&p.v22, controls)?,
    })
}

fn leaf_integral(leaf: &ScalarField2D) -> Complex64 {
    match leaf {
        ScalarField2D::DiskIndicator { radius, amplitude, .. } => amplitude * (PI * radius * radius),
        ScalarField2D::GaussianDecay { width, amplitude, .. } => amplitude * (PI * width * width),
        _ => Complex64::new(0.0, 0.0),
    }
}

fn norm2(f: &ScalarField2D, controls: &QuadControls) -> Result<f64, BoundsError> {
    let leaves = f.leaves();
    let mut total = 0.0;
    for (i, a) in leaves.iter().enumerate() {
        total += leaf_overlap(a, a, controls)?.re;
        for b in &leaves[i + 1..] {
            total += 2.0 * leaf_overlap(a, b, controls)?.re;
        }
    }
    Ok(total.max(0.0))
}

/// `∫ a conj(b)` over the plane for two leaves.
pub fn leaf_overlap(a: &ScalarField2D, b: &ScalarField2D, controls: &QuadControls) -> Result<Complex64, BoundsError> {
    use ScalarField2D::{DiskIndicator as Disk, GaussianDecay as Gauss};
    let amp = a.amplitude() * b.amplitude().conj();
    match (a, b) {
        (Disk { center: c1, radius: r1, .. }, Disk { center: c2, radius: r2, .. }) => {
            Ok(amp * lens_area((*c1 - *c2).norm(), *r1, *r2))
        }
        (Gauss { center: c1, width: w1, .. }, Gauss { center: c2, width: w2, .. }) => {
            let (alpha, beta) = (1.0 / (w1 * w1), 1.0 / (w2 * w2));
            let d2 = (*c1 - *c2).norm2();
            Ok(amp * (PI / (alpha + beta)) * (-(alpha * beta / (alpha + beta)) * d2).exp())
        }
        (Disk { center, radius, .. }, Gauss { .. }) => {
            let width = gauss_width(b);
            let low = controls.disk_rule(*center, *radius, 1.0 / width);
            let high = QuadratureRule::polar_disk(
                *center,
                *radius,
                2 * low_radial(&low),
                2 * low_angular(&low),
            );
            let est = adaptive_tolerance_check(|p| a.eval(p) * b.eval(p).conj(), &low, &high, controls.tolerance)?;
            Ok(est.into_result(controls.tolerance)?)
        }
        (Gauss { .. }, Disk { .. }) => Ok(leaf_overlap(b, a, controls)?.conj()),
        _ => Ok(Complex64::new(0.0, 0.0)),
    }
}

fn gauss_width(f: &ScalarField2D) -> f64 {
    match f {
        ScalarField2D::GaussianDecay { width, .. } => *width,
        _ => unreachable!("gaussian leaf expected"),
    }
}

fn low_radial(rule: &QuadratureRule) -> usize {
    match rule.kind {
        crate::quadrature::RuleKind::PolarDisk { radial_order, .. } => radial_order,
        _ => unreachable!(),
    }
}

fn low_angular(rule: &QuadratureRule) -> usize {
    match rule.kind {
        crate::quadrature::RuleKind::PolarDisk { angular_count, .. } => angular_count,
        _ => unreachable!(),
    }
}

/// Area of the intersection of two disks with centre distance `d`.
pub fn lens_area(d: f64, r1: f64, r2: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    if d <= (r1 - r2).abs() {
        let r = r1.min(r2);
        return PI * r * r;
    }
    let a1 = ((d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)).clamp(-1.0, 1.0).acos();
    let a2 = ((d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)).clamp(-1.0, 1.0).acos();
    let k = ((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)).max(0.0).sqrt();
    r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * k
}

/// `(I^+, I^-)`.
pub fn i_eps(m: &PotentialMoments, delta: f64, eps: f64) -> (f64, f64) {
    let shared = eps * eps * m.norm2_v12 + 2.0 * delta * eps * m.mean_re_v12;
    (eps * eps * m.norm2_v11 + shared, eps * eps * m.norm2_v22 + shared)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sufficiency {
    pub nonempty: bool,
    /// Guaranteed number of gap eigenvalues, counting multiplicity.
    pub count_lower_bound: u8,
}

/// A negative `I^±` certifies a gap eigenvalue; both negative certify two,
/// since the trial spinors are orthogonal.
pub fn sufficient_condition(i_plus: f64, i_minus: f64) -> Sufficiency {
    let count = u8::from(i_plus < 0.0) + u8::from(i_minus < 0.0);
    Sufficiency { nonempty: count > 0, count_lower_bound: count }
}

/// Couplings below which `I^+` (resp. `I^-`) is guaranteed negative:
/// `-2 delta <Re V12> / (|V11|^2 + |V12|^2)` and its `V22` analogue.
pub fn weak_thresholds(m: &PotentialMoments, delta: f64) -> (Option<f64>, Option<f64>) {
    if !(m.mean_re_v12 < 0.0) {
        return (None, None);
    }
    let threshold = |diag: f64| {
        let denom = diag + m.norm2_v12;
        (denom > 0.0).then(|| -2.0 * delta * m.mean_re_v12 / denom)
    };
    (threshold(m.norm2_v11), threshold(m.norm2_v22))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingBound {
    Bound(f64),
    Absent(String),
}

impl CouplingBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            CouplingBound::Bound(v) => Some(*v),
            CouplingBound::Absent(_) => None,
        }
    }
}

/// Lower bound `-2 delta <Re V12> / |V12|^2` on the critical coupling, stated
/// for potentials without diagonal components.
pub fn coupling_lower_bound(m: &PotentialMoments, delta: f64) -> CouplingBound {
    if !m.is_diagonal_free() {
        return CouplingBound::Absent("bound holds only for vanishing diagonal components".into());
    }
    if !(m.mean_re_v12 < 0.0) {
        return CouplingBound::Absent("requires <Re V12> < 0".into());
    }
    if m.norm2_v12 <= 0.0 {
        return CouplingBound::Absent("|V12|^2 vanishes".into());
    }
    CouplingBound::Bound(-2.0 * delta * m.mean_re_v12 / m.norm2_v12)
}

/// Number of grid points used to compute the sup-norms of a profile.
pub const SUP_GRID_POINTS: usize = 100_000;

/// The transition function `xi: [0, 1] -> [0, 1]` of the logarithmic cutoff.
///
/// `xi(t) = S((t - a) / (1 - 2a))` clamped to `[0, 1]`, with flat margins of
/// width `a` and `S(s) = s^3 (10 - 15 s + 6 s^2)`. `xi` is C^2 and its first
/// two derivatives vanish on the margins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    margin: f64,
    sup1: f64,
    sup2: f64,
}

impl Default for CutoffProfile {
    fn default() -> Self {
        Self::smoothstep(0.1).expect("default margin is valid")
    }
}

impl CutoffProfile {
    pub fn smoothstep(margin: f64) -> Result<Self, BoundsError> {
        if !(margin.is_finite() && (0.0..0.5).contains(&margin)) {
            return Err(BoundsError::Profile(format!("margin must lie in [0, 0.5), got {margin}")));
        }
        let mut profile = Self { margin, sup1: 0.0, sup2: 0.0 };
        let (sup1, sup2) = profile.sup_norms_on_grid(SUP_GRID_POINTS);
        profile.sup1 = sup1;
        profile.sup2 = sup2;
        Ok(profile)
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// `||xi'||_inf`.
    pub fn sup1(&self) -> f64 {
        self.sup1
    }

    /// `||xi''||_inf`.
    pub fn sup2(&self) -> f64 {
        self.sup2
    }

    fn scale(&self) -> f64 {
        1.0 / (1.0 - 2.0 * self.margin)
    }

    fn local(&self, t: f64) -> Option<f64> {
        let s = (t - self.margin) * self.scale();
        (s > 0.0 && s < 1.0).then_some(s)
    }

    pub fn xi(&self, t: f64) -> f64 {
        match self.local(t) {
            Some(s) => s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
            None if (t - self.margin) * self.scale() >= 1.0 => 1.0,
            None => 0.0,
        }
    }

    pub fn xi_d1(&self, t: f64) -> f64 {
        self.local(t).map_or(0.0, |s| 30.0 * s * s * (1.0 - s) * (1.0 - s) * self.scale())
    }

    pub fn xi_d2(&self, t: f64) -> f64 {
        let k = self.scale();
        self.local(t).map_or(0.0, |s| 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s) * k * k)
    }

    /// Maxima of `|xi'|` and `|xi''|` over a uniform grid of `points + 1`
    /// samples of `[0, 1]`.
    pub fn sup_norms_on_grid(&self, points: usize) -> (f64, f64) {
        (0..=points).fold((0.0_f64, 0.0_f64), |(m1, m2), k| {
            let t = k as f64 / points as f64;
            (m1.max(self.xi_d1(t).abs()), m2.max(self.xi_d2(t).abs()))
        })
    }
}

/// Constants of the cutoff-derivative estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffConstants {
    pub c1: f64,
    pub c2: f64,
    pub c: f64,
    pub sup1: f64,
    pub sup2: f64,
    pub delta: f64,
}

impl CutoffConstants {
    /// `c1 = pi sup1^2`, `c2 = (3 pi sup2^2 / 4 + pi sup1^2) / e^2`,
    /// `c = c1 + 2 delta c1 + c2`.
    pub fn from_sup_norms(sup1: f64, sup2: f64, delta: f64) -> Self {
        let c1 = PI * sup1 * sup1;
        let c2 = (0.75 * PI * sup2 * sup2 + PI * sup1 * sup1) / (E * E);
        Self { c1, c2, c: c1 + 2.0 * delta * c1 + c2, sup1, sup2, delta }
    }
}

pub fn cutoff_constants(profile: &CutoffProfile, delta: f64) -> CutoffConstants {
    CutoffConstants::from_sup_norms(profile.sup1(), profile.sup2(), delta)
}

/// `g(n) = (c / log n + I) / (pi n^4)`, valid for `n >= e`.
pub fn g_bound(c: f64, i_val: f64, n: f64) -> Result<f64, BoundsError> {
    if !(n >= E) {
        return Err(BoundsError::NBelowE(n));
    }
    Ok((c / n.ln() + i_val) / (PI * n.powi(4)))
}

/// `g` at `n = exp(log_n)` in log space: `(sign, ln|g|)`. Survives `n^4`
/// overflowing.
pub fn g_bound_log(c: f64, i_val: f64, log_n: f64) -> Result<(f64, f64), BoundsError> {
    if !(log_n >= 1.0) {
        return Err(BoundsError::NBelowE(log_n.exp()));
    }
    let bracket = c / log_n + i_val;
    Ok((bracket.signum(), bracket.abs().ln() - PI.ln() - 4.0 * log_n))
}

/// `log n_eps = (c + sqrt(c^2 - c I)) / (-2 I)`, the stationary point of
/// `log n -> g`.
pub fn critical_log_n(c: f64, i_val: f64) -> Result<f64, BoundsError> {
    if !(i_val < 0.0) {
        return Err(BoundsError::NonNegativeI(i_val));
    }
    Ok((c + (c * c - c * i_val).sqrt()) / (-2.0 * i_val))
}

/// `n_eps`; `+inf` once it overflows.
pub fn critical_n(c: f64, i_val: f64) -> Result<f64, BoundsError> {
    critical_log_n(c, i_val).map(f64::exp)
}

/// `sqrt(delta^2 + g)`, absent when `delta^2 + g < 0`.
pub fn envelope_from_g(delta: f64, g: f64) -> Option<f64> {
    let v = delta * delta + g;
    (v >= 0.0).then(|| v.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    Bound { h: f64, g: f64 },
    NotApplicable,
    Degenerate { g: f64 },
}

impl Envelope {
    pub fn h(&self) -> Option<f64> {
        match self {
            Envelope::Bound { h, .. } => Some(*h),
            _ => None,
        }
    }
}

/// Minimizing `n >= e` and the value of `g` there for one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BranchMinimum {
    log_n: f64,
    sign: f64,
    log_abs_g: f64,
}

impl BranchMinimum {
    fn g(&self) -> f64 {
        self.sign * self.log_abs_g.exp()
    }
}

fn branch_minimum(c: f64, i_val: f64) -> Option<BranchMinimum> {
    let log_n = critical_log_n(c, i_val).ok()?.max(1.0);
    let (sign, log_abs_g) = g_bound_log(c, i_val, log_n).ok()?;
    Some(BranchMinimum { log_n, sign, log_abs_g })
}

/// `h = sqrt(delta^2 + min g^±(n_eps^±))` over the branches with negative `I`
/// whose minimum is negative.
pub fn energy_envelope(delta: f64, c: f64, i_plus: f64, i_minus: f64) -> Envelope {
    let g = [i_plus, i_minus]
        .into_iter()
        .filter_map(|i| branch_minimum(c, i))
        .filter(|b| b.sign < 0.0)
        .map(|b| b.g())
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))));
    match g {
        None => Envelope::NotApplicable,
        Some(g) => match envelope_from_g(delta, g) {
            Some(h) => Envelope::Bound { h, g },
            None => Envelope::Degenerate { g },
        },
    }
}

/// `log|g|` of the weak-coupling asymptotic
/// `g ≈ -(delta^2 <Re V12>^2 eps^2 / (pi c)) exp(2 c / (delta <Re V12> eps))`.
pub fn weak_asymptotic_log(delta: f64, c: f64, mean_re_v12: f64, eps: f64) -> f64 {
    (delta * delta * mean_re_v12 * mean_re_v12 * eps * eps / (PI * c)).ln() + 2.0 * c / (delta * mean_re_v12 * eps)
}

/// Every analytic quantity at one coupling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub delta: f64,
    pub epsilon: f64,
    pub i_plus: f64,
    pub i_minus: f64,
    pub sufficient_plus: bool,
    pub sufficient_minus: bool,
    pub eigenvalue_count_lower_bound: u8,
    pub threshold_plus: Option<f64>,
    pub threshold_minus: Option<f64>,
    pub coupling_lower_bound: Option<f64>,
    pub n_crit_plus: Option<f64>,
    pub n_crit_minus: Option<f64>,
    pub log_n_crit_plus: Option<f64>,
    pub log_n_crit_minus: Option<f64>,
    pub g_plus: Option<f64>,
    pub g_minus: Option<f64>,
    pub log_abs_g_plus: Option<f64>,
    pub log_abs_g_minus: Option<f64>,
    pub envelope_h: Option<f64>,
    pub asymptotic_log_abs_g: Option<f64>,
    pub notes: Vec<String>,
}

pub fn bounds_report(m: &PotentialMoments, constants: &CutoffConstants, eps: f64) -> BoundsReport {
    let delta = constants.delta;
    let c = constants.c;
    let (i_plus, i_minus) = i_eps(m, delta, eps);
    let suff = sufficient_condition(i_plus, i_minus);
    let (threshold_plus, threshold_minus) = weak_thresholds(m, delta);
    let mut notes = Vec::new();
    let coupling = coupling_lower_bound(m, delta);
    if let CouplingBound::Absent(reason) = &coupling {
        notes.push(format!("coupling bound absent: {reason}"));
    }

    let plus = branch_minimum(c, i_plus);
    let minus = branch_minimum(c, i_minus);
    for (name, b) in [("plus", &plus), ("minus", &minus)] {
        if let Some(b) = b {
            if b.log_n == 1.0 {
                notes.push(format!("{name}: stationary point below n = e, using n = e"));
            }
            if b.sign >= 0.0 {
                notes.push(format!("{name}: g is not negative at n = e"));
            }
        }
    }
    let negative = |b: &Option<BranchMinimum>| b.filter(|b| b.sign < 0.0);
    let envelope = energy_envelope(delta, c, i_plus, i_minus);
    if let Envelope::Degenerate { g } = envelope {
        notes.push(format!("delta^2 + g = {} < 0, envelope undefined", delta * delta + g));
    }

    BoundsReport {
        delta,
        epsilon: eps,
        i_plus,
        i_minus,
        sufficient_plus: i_plus < 0.0,
        sufficient_minus: i_minus < 0.0,
        eigenvalue_count_lower_bound: suff.count_lower_bound,
        threshold_plus,
        threshold_minus,
        coupling_lower_bound: coupling.value(),
        n_crit_plus: plus.map(|b| b.log_n.exp()).filter(|n| n.is_finite()),
        n_crit_minus: minus.map(|b| b.log_n.exp()).filter(|n| n.is_finite()),
        log_n_crit_plus: plus.map(|b| b.log_n),
        log_n_crit_minus: minus.map(|b| b.log_n),
        g_plus: negative(&plus).map(|b| b.g()),
        g_minus: negative(&minus).map(|b| b.g()),
        log_abs_g_plus: negative(&plus).map(|b| b.log_abs_g),
        log_abs_g_minus: negative(&minus).map(|b| b.log_abs_g),
        envelope_h: envelope.h(),
        asymptotic_log_abs_g: (m.mean_re_v12 < 0.0 && eps > 0.0)
            .then(|| weak_asymptotic_log(delta, c, m.mean_re_v12, eps)),
        notes,
    }
}

/// `∫ |f|^2` by leaf-aligned quadrature only; an independent route to the
/// closed-form norms for fields whose leaves do not overlap.
pub fn norm2_by_quadrature(f: &ScalarField2D, controls: &QuadControls) -> Result<f64, BoundsError> {
    let mut total = 0.0;
    for leaf in f.leaves() {
        let rule = match leaf {
            ScalarField2D::DiskIndicator { center, radius, .. } => controls.disk_rule(*center, *radius, 0.0),
            ScalarField2D::GaussianDecay { center, width, .. } => {
                controls.disk_rule(*center, gaussian_tail_radius(*width), 1.0 / width)
            }
            _ => continue,
        };
        total += integrate(|p| Complex64::new(f.eval(p).norm_sqr(), 0.0), &rule)?.re;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use proptest::prelude::*;

    fn chi(amplitude: f64) -> ScalarField2D {
        ScalarField2D::disk(Vec2::ORIGIN, 2.0, amplitude).unwrap()
    }

    fn symmetric() -> PotentialMoments {
        potential_moments(&Potential::off_diagonal(chi(-1.0)), &QuadControls::default()).unwrap()
    }

    fn lower() -> PotentialMoments {
        potential_moments(&Potential::new(chi(0.2), chi(-0.9), chi(-1.0)), &QuadControls::default()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn moments_of_disk_settings() {
        let m = symmetric();
        assert!(rel(m.mean_re_v12, -4.0 * PI) < 1e-15);
        assert!(rel(m.norm2_v12, 4.0 * PI) < 1e-15);
        assert_eq!((m.norm2_v11, m.norm2_v22), (0.0, 0.0));
        let l = lower();
        assert!((l.norm2_v11 - 0.502_655).abs() < 1e-6);
        assert!(rel(l.norm2_v22, 0.81 * 4.0 * PI) < 1e-14);

        let controls = QuadControls::default();
        let q = norm2_by_quadrature(&chi(-1.0), &controls).unwrap();
        assert!(rel(q, 4.0 * PI) < 1e-12);

        let zero = potential_moments(&Potential::default(), &controls).unwrap();
        assert_eq!(zero, PotentialMoments { mean_re_v12: 0.0, norm2_v11: 0.0, norm2_v12: 0.0, norm2_v22: 0.0 });
    }

    #[test]
    fn moments_with_overlaps_and_gaussians() {
        let controls = QuadControls::default();
        // Concentric disks: |V|^2 = 0.25 on r < 1 plus 1 on 1 < r < 2.
        let f = ScalarField2D::sum(vec![chi(-1.0), ScalarField2D::disk(Vec2::ORIGIN, 1.0, 0.5).unwrap()]);
        let n = norm2(&f, &controls).unwrap();
        assert!(rel(n, 0.25 * PI + 3.0 * PI) < 1e-14);

        let g = ScalarField2D::gaussian(Vec2::new(0.3, 0.0), 0.7, Complex64::new(0.5, -0.5)).unwrap();
        assert!(rel(norm2(&g, &controls).unwrap(), 0.5 * PI * 0.49 / 2.0) < 1e-14);
        assert!(rel(norm2_by_quadrature(&g, &controls).unwrap(), 0.5 * PI * 0.49 / 2.0) < 1e-12);

        // Disk plus Gaussian: closed-form diagonal terms, quadrature cross term.
        let mixed = ScalarField2D::sum(vec![chi(-1.0), g.clone()]);
        let brute = {
            let rule = QuadratureRule::composite([
                QuadratureRule::polar_disk(Vec2::ORIGIN, 2.0, 120, 240),
                QuadratureRule::log_polar_annulus(Vec2::ORIGIN, 2.0, 12.0, 120, 240),
            ]);
            integrate(|p| Complex64::new(mixed.eval(p).norm_sqr(), 0.0), &rule).unwrap().re
        };
        assert!(rel(norm2(&mixed, &controls).unwrap(), brute) < 1e-10);
    }

    #[test]
    fn lens_area_limits() {
        assert_eq!(lens_area(5.0, 2.0, 2.0), 0.0);
        assert!(rel(lens_area(0.5, 2.0, 1.0), PI) < 1e-15);
        // Two unit disks at distance 1: 2 pi / 3 - sqrt(3) / 2.
        assert!(rel(lens_area(1.0, 1.0, 1.0), 2.0 * PI / 3.0 - 3f64.sqrt() / 2.0) < 1e-14);
    }

    #[test]
    fn i_eps_examples() {
        let m = symmetric();
        let (ip, im) = i_eps(&m, 5.0, 2.5);
        assert!(rel(ip, -75.0 * PI) < 1e-14 && ip == im);
        assert!((ip - (-235.619_449)).abs() < 1e-6);
        let (ip, _) = i_eps(&m, 5.0, 10.0);
        assert!(ip.abs() < 1e-12);
        assert_eq!(i_eps(&m, 5.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn sufficient_condition_examples() {
        assert_eq!(sufficient_condition(-235.6, -235.6), Sufficiency { nonempty: true, count_lower_bound: 2 });
        assert_eq!(sufficient_condition(0.1, 0.2), Sufficiency { nonempty: false, count_lower_bound: 0 });
        assert_eq!(sufficient_condition(-1.0, 5.0), Sufficiency { nonempty: true, count_lower_bound: 1 });
    }

    #[test]
    fn thresholds_and_coupling() {
        let (tp, tm) = weak_thresholds(&symmetric(), 5.0);
        assert!(rel(tp.unwrap(), 10.0) < 1e-15 && rel(tm.unwrap(), 10.0) < 1e-15);
        let (tp, tm) = weak_thresholds(&lower(), 5.0);
        assert!(rel(tp.unwrap(), 9.615_385) < 1e-7);
        assert!(rel(tm.unwrap(), 5.524_862) < 1e-7);
        let flat = PotentialMoments { mean_re_v12: 0.0, norm2_v11: 1.0, norm2_v12: 1.0, norm2_v22: 1.0 };
        assert_eq!(weak_thresholds(&flat, 5.0), (None, None));

        assert!(rel(coupling_lower_bound(&symmetric(), 5.0).value().unwrap(), 10.0) < 1e-15);
        let double = potential_moments(&Potential::off_diagonal(chi(-2.0)), &QuadControls::default()).unwrap();
        assert!(rel(coupling_lower_bound(&double, 5.0).value().unwrap(), 5.0) < 1e-15);
        assert!(coupling_lower_bound(&flat, 5.0).value().is_none());
        assert!(matches!(coupling_lower_bound(&lower(), 5.0), CouplingBound::Absent(_)));
    }

    #[test]
    fn profile_shape() {
        let p = CutoffProfile::default();
        assert_eq!(p.xi(0.0), 0.0);
        assert_eq!(p.xi(1.0), 1.0);
        assert!((p.xi(0.5) - 0.5).abs() < 1e-15);
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            assert!((0.0..=1.0).contains(&p.xi(t)));
            if t <= 0.1 || t >= 0.9 {
                assert_eq!((p.xi_d1(t), p.xi_d2(t)), (0.0, 0.0));
            }
        }
        assert!(p.sup1() >= 1.0);
        assert!(CutoffProfile::smoothstep(0.5).is_err());
    }

    #[test]
    fn profile_derivatives_match_finite_differences() {
        let p = CutoffProfile::default();
        let h = 1e-5;
        for k in 1..40 {
            let t = 0.1 + 0.8 * k as f64 / 40.0;
            let d1 = (p.xi(t + h) - p.xi(t - h)) / (2.0 * h);
            let d2 = (p.xi(t + h) - 2.0 * p.xi(t) + p.xi(t - h)) / (h * h);
            assert!((d1 - p.xi_d1(t)).abs() < 1e-8, "t={t}");
            assert!((d2 - p.xi_d2(t)).abs() < 1e-4, "t={t}");
        }
    }

    #[test]
    fn sup_norms_converge_under_refinement() {
        let p = CutoffProfile::default();
        let coarse = p.sup_norms_on_grid(10_000);
        let fine = p.sup_norms_on_grid(100_000);
        assert!(rel(coarse.0, fine.0) < 1e-4 && rel(coarse.1, fine.1) < 1e-4);
        // Interior extrema of the quintic smoothstep: S' = 15/8 at 1/2,
        // |S''| = 10 / sqrt(3) at (3 - sqrt 3) / 6; rescaled by 1/0.8.
        assert!(rel(p.sup1(), 1.875 / 0.8) < 1e-12);
        assert!(rel(p.sup2(), 10.0 / 3f64.sqrt() / 0.64) < 1e-8);
    }

    #[test]
    fn cutoff_constant_examples() {
        let k = CutoffConstants::from_sup_norms(2.0, 8.0, 5.0);
        assert!(rel(k.c1, 4.0 * PI) < 1e-15);
        assert!((k.c2 - 22.108).abs() < 1e-3);
        assert!((k.c - 160.35).abs() < 2e-2);
        let k2 = CutoffConstants::from_sup_norms(2.0, 8.0, 10.0);
        assert!(((k2.c - k.c) - 2.0 * 5.0 * k.c1).abs() < 1e-12);
    }

    #[test]
    fn g_bound_examples() {
        assert!((g_bound(1.0, 0.0, E).unwrap() - 1.0 / (PI * E.powi(4))).abs() < 1e-18);
        assert!((g_bound(1.0, 0.0, E).unwrap() - 0.005_83).abs() < 1e-5);
        let g = g_bound(1.0, -1.0, 3.34372).unwrap();
        assert!((g - (-4.369e-4)).abs() < 1e-7, "{g}");
        assert!(matches!(g_bound(1.0, -1.0, 2.0), Err(BoundsError::NBelowE(_))));
        assert!(g_bound(3.0, -2.0, 1e6).unwrap().abs() < 1e-20);
        let (sign, log_abs) = g_bound_log(1.0, -1.0, 3.34372f64.ln()).unwrap();
        assert!(sign < 0.0 && (log_abs.exp() - 4.369e-4).abs() < 1e-7);
    }

    #[test]
    fn critical_n_examples() {
        let log_n = critical_log_n(1.0, -1.0).unwrap();
        assert!((log_n - (1.0 + 2f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((critical_n(1.0, -1.0).unwrap() - 3.3438).abs() < 1e-4);
        assert!(critical_n(1.0, -1e-3).unwrap() > critical_n(1.0, -1e-2).unwrap());
        assert!(critical_n(1.0, -1e-4).unwrap() > 1e100);
        assert!(matches!(critical_n(1.0, 0.0), Err(BoundsError::NonNegativeI(_))));
        // Grid-search oracle.
        let n_star = critical_n(1.0, -1.0).unwrap();
        let g_star = g_bound(1.0, -1.0, n_star).unwrap();
        for k in 0..1000 {
            let n = E * (1e3f64).powf(k as f64 / 999.0);
            assert!(g_star <= g_bound(1.0, -1.0, n).unwrap() + 1e-18);
        }
    }

    #[test]
    fn envelope_examples() {
        assert_eq!(envelope_from_g(5.0, 0.0), Some(5.0));
        assert!((envelope_from_g(5.0, -4.369e-4).unwrap() - 4.999_956_3).abs() < 1e-7);
        assert_eq!(envelope_from_g(1.0, -2.0), None);
        assert_eq!(energy_envelope(5.0, 1.0, 0.0, 3.0), Envelope::NotApplicable);
        let env = energy_envelope(5.0, 1.0, -1.0, -0.5);
        let h = env.h().unwrap();
        assert!(h < 5.0 && h > 0.0);
        // Tightest branch wins: I = -1 gives the more negative minimum.
        let g1 = g_bound(1.0, -1.0, critical_n(1.0, -1.0).unwrap()).unwrap();
        assert!((h - (25.0 + g1).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn asymptotic_examples() {
        let v = weak_asymptotic_log(5.0, 100.0, -4.0 * PI, 0.1);
        assert!((v - (-33.905)).abs() < 1e-3, "{v}");
        assert!(((0.125_664f64).ln() - 31.8310 - v).abs() < 1e-3);
        let (delta, c, mean, eps) = (5.0, 100.0, -4.0 * PI, 0.05);
        let diff = weak_asymptotic_log(delta, c, mean, eps) - weak_asymptotic_log(delta, c, mean, eps / 2.0);
        let expected = 4f64.ln() + (2.0 * c / (delta * mean)) * (1.0 / eps - 2.0 / eps);
        assert!((diff - expected).abs() < 1e-10);
    }

    #[test]
    fn report_symmetric_setting() {
        let k = cutoff_constants(&CutoffProfile::default(), 5.0);
        let r = bounds_report(&symmetric(), &k, 2.5);
        assert_eq!(r.eigenvalue_count_lower_bound, 2);
        assert!(rel(r.threshold_plus.unwrap(), 10.0) < 1e-15);
        assert!(rel(r.coupling_lower_bound.unwrap(), 10.0) < 1e-15);
        let h = r.envelope_h.unwrap();
        assert!(h > 0.0 && h < 5.0);
        assert!(r.g_plus.unwrap() <= 0.0);
        assert_eq!(r.g_plus, r.g_minus);
        assert!(r.n_crit_plus.unwrap() > E);

        let zero = bounds_report(&symmetric(), &k, 0.0);
        assert_eq!(zero.eigenvalue_count_lower_bound, 0);
        assert_eq!(zero.envelope_h, None);
        assert_eq!(zero.g_plus, None);

        // Tiny coupling: n_eps overflows but log-space values stay finite.
        let tiny = bounds_report(&symmetric(), &k, 1e-3);
        assert!(tiny.n_crit_plus.is_none());
        assert!(tiny.log_n_crit_plus.unwrap() > 700.0);
        assert!(tiny.log_abs_g_plus.unwrap().is_finite());
        assert_eq!(tiny.envelope_h, Some(5.0));
    }

    #[test]
    fn sum_decomposition_invariance() {
        let controls = QuadControls::default();
        let split = ScalarField2D::sum(vec![chi(-0.5), ScalarField2D::sum(vec![chi(-0.25), chi(-0.25)])]);
        let m = potential_moments(&Potential::off_diagonal(split), &controls).unwrap();
        let k = cutoff_constants(&CutoffProfile::default(), 5.0);
        let a = bounds_report(&m, &k, 1.7);
        let b = bounds_report(&symmetric(), &k, 1.7);
        assert!(rel(a.i_plus, b.i_plus) < 1e-14);
        assert!(rel(a.envelope_h.unwrap(), b.envelope_h.unwrap()) < 1e-14);
        assert!(rel(a.threshold_plus.unwrap(), b.threshold_plus.unwrap()) < 1e-14);
    }

    proptest! {
        #[test]
        fn i_difference_is_diagonal_difference(n11 in 0.0..10.0f64, n22 in 0.0..10.0f64, n12 in 0.0..10.0f64,
                                               mean in -10.0..10.0f64, delta in 0.1..10.0f64, eps in 0.0..5.0f64) {
            let m = PotentialMoments { mean_re_v12: mean, norm2_v11: n11, norm2_v12: n12, norm2_v22: n22 };
            let (ip, im) = i_eps(&m, delta, eps);
            let scale = eps * eps * (n11 + n22 + n12) + 2.0 * delta * eps * mean.abs() + 1.0;
            prop_assert!(((ip - im) - eps * eps * (n11 - n22)).abs() <= 1e-13 * scale);
        }

        #[test]
        fn below_threshold_i_is_negative(n11 in 0.0..10.0f64, n12 in 0.01..10.0f64, mean in -10.0..-0.01f64,
                                         delta in 0.1..10.0f64, frac in 0.001..0.999f64) {
            let m = PotentialMoments { mean_re_v12: mean, norm2_v11: n11, norm2_v12: n12, norm2_v22: 0.0 };
            let (tp, _) = weak_thresholds(&m, delta);
            let (ip, _) = i_eps(&m, delta, frac * tp.unwrap());
            prop_assert!(ip < 0.0);
        }

        #[test]
        fn envelope_never_exceeds_delta(delta in 0.1..10.0f64, c in 0.1..500.0f64, ip in -50.0..5.0f64, im in -50.0..5.0f64) {
            match energy_envelope(delta, c, ip, im) {
                Envelope::Bound { h, g } => {
                    prop_assert!(h <= delta);
                    prop_assert!(h > 0.0 || g == -delta * delta);
                }
                Envelope::NotApplicable => prop_assert!(ip >= 0.0 || im >= 0.0),
                Envelope::Degenerate { g } => prop_assert!(delta * delta + g < 0.0),
            }
        }
    }
}
