//! The Hamiltonian family `H_eps = H_0 + eps V` as plain data.
//!
//! `H_0` acts on two-component spinors as
//!
//! ```text
//!     [ -i d_y          -d_x^2 + delta ]
//!     [ -d_x^2 + delta   i d_y          ]
//! ```
//!
//! and `V` is a Hermitian 2x2 matrix of bounded coefficient fields. Only
//! `v11`, `v22` and `v12` are stored; the lower off-diagonal entry is always
//! the pointwise conjugate of `v12`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

/// Relative magnitude below which a Gaussian tail is treated as zero.
pub const GAUSSIAN_TAIL: f64 = 1e-16;

/// Radius, in units of the Gaussian width, beyond which `exp(-r^2/w^2)`
/// drops below [`GAUSSIAN_TAIL`].
pub fn gaussian_tail_radius(width: f64) -> f64 {
    width * (-GAUSSIAN_TAIL.ln()).sqrt()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("delta must be positive and finite, got {0}")]
    NonPositiveDelta(f64),
    #[error("epsilon must be non-negative and finite, got {0}")]
    NegativeEpsilon(f64),
    #[error("invalid field descriptor: {0}")]
    InvalidField(String),
    #[error("potential violates assumption `{check}`: {detail}")]
    Assumption { check: CheckKind, detail: String },
}

/// A bounded complex coefficient function on the plane, given in closed form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarField2D {
    #[default]
    Zero,
    /// `amplitude` on the closed disk, zero outside.
    #[serde(rename = "disk")]
    DiskIndicator {
        #[serde(default)]
        center: Vec2,
        radius: f64,
        #[serde(with = "amplitude_serde")]
        amplitude: Complex64,
    },
    /// `amplitude * exp(-|r - center|^2 / width^2)`.
    #[serde(rename = "gaussian")]
    GaussianDecay {
        #[serde(default)]
        center: Vec2,
        width: f64,
        #[serde(with = "amplitude_serde")]
        amplitude: Complex64,
    },
    Sum { terms: Vec<ScalarField2D> },
}


impl ScalarField2D {
    pub fn disk(center: Vec2, radius: f64, amplitude: impl Into<Complex64>) -> Result<Self, ModelError> {
        let f = ScalarField2D::DiskIndicator { center, radius, amplitude: amplitude.into() };
        f.check_parameters()?;
        Ok(f)
    }

    pub fn gaussian(center: Vec2, width: f64, amplitude: impl Into<Complex64>) -> Result<Self, ModelError> {
        let f = ScalarField2D::GaussianDecay { center, width, amplitude: amplitude.into() };
        f.check_parameters()?;
        Ok(f)
    }

    pub fn sum(terms: Vec<ScalarField2D>) -> Self {
        ScalarField2D::Sum { terms }
    }

    /// Pointwise value.
    pub fn eval(&self, p: Vec2) -> Complex64 {
        match self {
            ScalarField2D::Zero => Complex64::new(0.0, 0.0),
            ScalarField2D::DiskIndicator { center, radius, amplitude } => {
                if (p - *center).norm2() <= radius * radius {
                    *amplitude
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            ScalarField2D::GaussianDecay { center, width, amplitude } => {
                amplitude * (-(p - *center).norm2() / (width * width)).exp()
            }
            ScalarField2D::Sum { terms } => terms.iter().map(|t| t.eval(p)).sum(),
        }
    }

    /// Non-zero leaves of the descriptor tree in depth-first order.
    pub fn leaves(&self) -> Vec<&ScalarField2D> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a ScalarField2D>) {
        match self {
            ScalarField2D::Zero => {}
            ScalarField2D::Sum { terms } => terms.iter().for_each(|t| t.collect_leaves(out)),
            leaf => out.push(leaf),
        }
    }

    /// True when every leaf amplitude has zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.leaves().iter().all(|l| l.amplitude().im == 0.0)
    }

    /// True when the field is identically zero as a descriptor.
    pub fn is_zero(&self) -> bool {
        self.leaves().iter().all(|l| l.amplitude() == Complex64::new(0.0, 0.0))
    }

    /// Amplitude of a leaf; zero for `Zero` and `Sum`.
    pub fn amplitude(&self) -> Complex64 {
        match self {
            ScalarField2D::DiskIndicator { amplitude, .. }
            | ScalarField2D::GaussianDecay { amplitude, .. } => *amplitude,
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Pointwise conjugate field.
    pub fn conj(&self) -> ScalarField2D {
        match self {
            ScalarField2D::Zero => ScalarField2D::Zero,
            ScalarField2D::DiskIndicator { center, radius, amplitude } => ScalarField2D::DiskIndicator {
                center: *center,
                radius: *radius,
                amplitude: amplitude.conj(),
            },
            ScalarField2D::GaussianDecay { center, width, amplitude } => ScalarField2D::GaussianDecay {
                center: *center,
                width: *width,
                amplitude: amplitude.conj(),
            },
            ScalarField2D::Sum { terms } => ScalarField2D::Sum { terms: terms.iter().map(|t| t.conj()).collect() },
        }
    }

    /// Upper bound on `|eval(p)|` over the whole plane.
    pub fn sup_bound(&self) -> f64 {
        self.leaves().iter().map(|l| l.amplitude().norm()).sum()
    }

    /// `Some(R)` if the field vanishes exactly for `|r| > R`.
    pub fn compact_support_radius(&self) -> Option<f64> {
        match self {
            ScalarField2D::Zero => Some(0.0),
            ScalarField2D::DiskIndicator { center, radius, .. } => Some(center.norm() + radius),
            ScalarField2D::GaussianDecay { .. } => None,
            ScalarField2D::Sum { terms } => terms
                .iter()
                .map(|t| t.compact_support_radius())
                .try_fold(0.0_f64, |acc, r| r.map(|r| acc.max(r))),
        }
    }

    /// Radius about the origin outside which the field is zero or below
    /// [`GAUSSIAN_TAIL`] relative to its amplitude.
    pub fn effective_support_radius(&self) -> f64 {
        match self {
            ScalarField2D::GaussianDecay { center, width, .. } => center.norm() + gaussian_tail_radius(*width),
            ScalarField2D::Sum { terms } => terms.iter().map(|t| t.effective_support_radius()).fold(0.0, f64::max),
            other => other.compact_support_radius().unwrap_or(0.0),
        }
    }

    /// Checks radius/width positivity and finiteness of every parameter.
    pub fn check_parameters(&self) -> Result<(), ModelError> {
        let finite = |c: &Complex64| c.re.is_finite() && c.im.is_finite();
        match self {
            ScalarField2D::Zero => Ok(()),
            ScalarField2D::DiskIndicator { center, radius, amplitude } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(ModelError::InvalidField(format!("disk radius must be positive, got {radius}")));
                }
                if !center.is_finite() || !finite(amplitude) {
                    return Err(ModelError::InvalidField("disk parameters must be finite".into()));
                }
                Ok(())
            }
            ScalarField2D::GaussianDecay { center, width, amplitude } => {
                if !(width.is_finite() && *width > 0.0) {
                    return Err(ModelError::InvalidField(format!("gaussian width must be positive, got {width}")));
                }
                if !center.is_finite() || !finite(amplitude) {
                    return Err(ModelError::InvalidField("gaussian parameters must be finite".into()));
                }
                Ok(())
            }
            ScalarField2D::Sum { terms } => terms.iter().try_for_each(|t| t.check_parameters()),
        }
    }
}

/// The Hermitian matrix potential. `v21 = conj(v12)` is implied.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Potential {
    #[serde(default)]
    pub v11: ScalarField2D,
    #[serde(default)]
    pub v22: ScalarField2D,
    #[serde(default)]
    pub v12: ScalarField2D,
}

impl Potential {
    pub fn new(v11: ScalarField2D, v22: ScalarField2D, v12: ScalarField2D) -> Self {
        Self { v11, v22, v12 }
    }

    /// Off-diagonal-only potential.
    pub fn off_diagonal(v12: ScalarField2D) -> Self {
        Self { v12, ..Self::default() }
    }

    pub fn v21(&self, p: Vec2) -> Complex64 {
        self.v12.eval(p).conj()
    }

    pub fn is_diagonal_free(&self) -> bool {
        self.v11.is_zero() && self.v22.is_zero()
    }

    /// Radius beyond which every component is (effectively) zero.
    pub fn effective_support_radius(&self) -> f64 {
        [&self.v11, &self.v22, &self.v12]
            .iter()
            .map(|f| f.effective_support_radius())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Parameters,
    Realness,
    Decay,
    Integrability,
}

impl std::fmt::Display for CheckKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CheckKind::Parameters => "parameters",
            CheckKind::Realness => "realness",
            CheckKind::Decay => "decay",
            CheckKind::Integrability => "integrability",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: CheckKind,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`validate_potential`]: one entry per assumption, in check order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn into_result(self) -> Result<(), ModelError> {
        match self.first_failure() {
            None => Ok(()),
            Some(c) => Err(ModelError::Assumption { check: c.check, detail: c.detail.clone() }),
        }
    }
}

/// Checks the standing assumptions on the coefficients: well-formed
/// parameters, real diagonal, vanishing at infinity, and `v11, v22 in L^2`,
/// `v12 in L^1 ∩ L^2`.
///
/// Every descriptor variant is bounded and either compactly supported or
/// Gaussian, so once the parameters are well formed, decay and integrability
/// hold leaf by leaf.
pub fn validate_potential(p: &Potential) -> ValidationReport {
    let named = [("v11", &p.v11), ("v22", &p.v22), ("v12", &p.v12)];
    let mut checks = Vec::with_capacity(4);

    let param_failure = named.iter().find_map(|(name, f)| f.check_parameters().err().map(|e| format!("{name}: {e}")));
    let params_ok = param_failure.is_none();
    checks.push(CheckResult {
        check: CheckKind::Parameters,
        passed: params_ok,
        detail: param_failure.unwrap_or_else(|| "all descriptor parameters well formed".into()),
    });

    let non_real: Vec<&str> = named[..2].iter().filter(|(_, f)| !f.is_real()).map(|(n, _)| *n).collect();
    checks.push(CheckResult {
        check: CheckKind::Realness,
        passed: non_real.is_empty(),
        detail: if non_real.is_empty() {
            "diagonal coefficients are real".into()
        } else {
            format!("{} has non-zero imaginary amplitude", non_real.join(", "))
        },
    });

    checks.push(CheckResult {
        check: CheckKind::Decay,
        passed: params_ok,
        detail: if params_ok {
            "every leaf is compactly supported or Gaussian".into()
        } else {
            "cannot establish decay for malformed descriptors".into()
        },
    });

    checks.push(CheckResult {
        check: CheckKind::Integrability,
        passed: params_ok,
        detail: if params_ok {
            "bounded leaves with compact support or Gaussian decay are in L^1 and L^2".into()
        } else {
            "cannot establish integrability for malformed descriptors".into()
        },
    });

    ValidationReport { checks }
}

/// Gap parameter, coupling and potential: a complete descriptor of `H_eps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    delta: f64,
    epsilon: f64,
    potential: Potential,
}

impl Model {
    pub fn new(delta: f64, epsilon: f64, potential: Potential) -> Result<Self, ModelError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(ModelError::NonPositiveDelta(delta));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(ModelError::NegativeEpsilon(epsilon));
        }
        validate_potential(&potential).into_result()?;
        Ok(Self { delta, epsilon, potential })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    /// Same operator at a different coupling.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, ModelError> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(ModelError::NegativeEpsilon(epsilon));
        }
        Ok(Self { epsilon, ..self.clone() })
    }

    pub fn gap(&self) -> Gap {
        spectral_edges(self.delta)
    }
}

/// Both bands `(E_-, E_+)` of the unperturbed operator at momentum `k`.
///
/// The Fourier symbol is `[[k_y, k_x^2 + delta], [k_x^2 + delta, -k_y]]`, whose
/// eigenvalues are `±sqrt(k_y^2 + (k_x^2 + delta)^2)`.
pub fn dispersion(k: Vec2, delta: f64) -> (f64, f64) {
    let mass = k.x * k.x + delta;
    let e = k.y.hypot(mass);
    (-e, e)
}

/// Open interval `(lower, upper)` that may contain discrete eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub lower: f64,
    pub upper: f64,
}

impl Gap {
    pub fn contains(&self, e: f64) -> bool {
        e > self.lower && e < self.upper
    }
}

/// The essential spectrum is `(-inf, -delta] ∪ [delta, inf)` for every
/// decaying perturbation, leaving the gap `(-delta, delta)`.
pub fn spectral_edges(delta: f64) -> Gap {
    Gap { lower: -delta, upper: delta }
}

/// Amplitudes in JSON are either a real number or a `[re, im]` pair.
mod amplitude_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Real(f64),
        Pair([f64; 2]),
    }

    pub fn serialize<S: Serializer>(c: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        if c.im == 0.0 {
            Repr::Real(c.re).serialize(s)
        } else {
            Repr::Pair([c.re, c.im]).serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        Ok(match Repr::deserialize(d)? {
            Repr::Real(re) => Complex64::new(re, 0.0),
            Repr::Pair([re, im]) => Complex64::new(re, im),
        })
    }
}
