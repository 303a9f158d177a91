//! Regularized trial spinors `psi_n^+ = (phi_n, 0)` and `psi_n^- = (0, phi_n)`
//! and the quadratic form `Q[psi] = ||H psi||^2 - delta^2 ||psi||^2` on them.
//!
//! `phi_n(r) = xi(f(r))` with `f(r) = log_n(n^2 / r) = 2 - ln r / ln n`, so
//! `phi_n = 1` for `r <= n` and `phi_n = 0` for `r >= n^2`.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{cutoff_constants, i_eps, potential_moments, BoundsError, CutoffProfile};
use crate::geometry::Vec2;
use crate::model::Model;
use crate::quadrature::{adaptive_tolerance_check, QuadControls, QuadratureError, QuadratureRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TestFnError {
    #[error("cutoff radius n = {0} must exceed 1")]
    NTooSmall(f64),
    #[error("cutoff radius n = {n} does not clear the potential support (radius {support})")]
    SupportNotCleared { n: f64, support: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizedTestFunction {
    pub profile: CutoffProfile,
    n: f64,
    log_n: f64,
    pub sign: Sign,
}

/// Pointwise value and the derivatives used by the quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CutoffJet {
    pub phi: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
}

impl RegularizedTestFunction {
    pub fn new(profile: CutoffProfile, n: f64, sign: Sign) -> Result<Self, TestFnError> {
        if !(n.is_finite() && n > 1.0) {
            return Err(TestFnError::NTooSmall(n));
        }
        Ok(Self { profile, n, log_n: n.ln(), sign })
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    fn f(&self, r: f64) -> f64 {
        2.0 - r.ln() / self.log_n
    }

    pub fn value(&self, p: Vec2) -> f64 {
        let r = p.norm();
        if r <= self.n {
            1.0
        } else if r >= self.n * self.n {
            0.0
        } else {
            self.profile.xi(self.f(r))
        }
    }

    pub fn jet(&self, p: Vec2) -> CutoffJet {
        let r = p.norm();
        if r <= self.n {
            return CutoffJet { phi: 1.0, ..Default::default() };
        }
        if r >= self.n * self.n {
            return CutoffJet::default();
        }
        let (l, t) = (self.log_n, self.f(r));
        let (d1, d2) = (self.profile.xi_d1(t), self.profile.xi_d2(t));
        let phi_r = -d1 / (r * l);
        let phi_rr = d2 / (r * r * l * l) + d1 / (r * r * l);
        let (c, s) = (p.x / r, p.y / r);
        CutoffJet {
            phi: self.profile.xi(t),
            dx: phi_r * c,
            dy: phi_r * s,
            dxx: phi_rr * c * c + phi_r * s * s / r,
        }
    }

    pub fn dx(&self, p: Vec2) -> f64 {
        self.jet(p).dx
    }

    pub fn dy(&self, p: Vec2) -> f64 {
        self.jet(p).dy
    }

    pub fn dxx(&self, p: Vec2) -> f64 {
        self.jet(p).dxx
    }

    /// Radii between which `phi_n` actually varies: `n^(1 + a)` to `n^(2 - a)`.
    fn transition(&self) -> (f64, f64) {
        let a = self.profile.margin();
        ((self.log_n * (1.0 + a)).exp(), (self.log_n * (2.0 - a)).exp())
    }

    fn annulus_integral<F>(&self, f: F, controls: &QuadControls) -> Result<f64, TestFnError>
    where
        F: Fn(CutoffJet, Vec2) -> f64,
    {
        let (r0, r1) = self.transition();
        let low = QuadratureRule::log_polar_annulus(Vec2::ORIGIN, r0, r1, controls.annulus_order, controls.annulus_angular);
        let high =
            QuadratureRule::log_polar_annulus(Vec2::ORIGIN, r0, r1, 2 * controls.annulus_order, 2 * controls.annulus_angular);
        let est = adaptive_tolerance_check(
            |p| Complex64::new(f(self.jet(p), p), 0.0),
            &low,
            &high,
            controls.tolerance,
        )?;
        Ok(est.into_result(controls.tolerance)?.re)
    }
}

/// Squared norms of `phi_n` and its derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffNorms {
    pub phi: f64,
    pub dx: f64,
    pub dy: f64,
    pub dxx: f64,
}

pub fn cutoff_norms(t: &RegularizedTestFunction, controls: &QuadControls) -> Result<CutoffNorms, TestFnError> {
    let (r0, _) = t.transition();
    Ok(CutoffNorms {
        phi: PI * r0 * r0 + t.annulus_integral(|j, _| j.phi * j.phi, controls)?,
        dx: t.annulus_integral(|j, _| j.dx * j.dx, controls)?,
        dy: t.annulus_integral(|j, _| j.dy * j.dy, controls)?,
        dxx: t.annulus_integral(|j, _| j.dxx * j.dxx, controls)?,
    })
}

/// `Q_eps[psi_n^±]`.
///
/// Inside `r < n` the cutoff is flat and the integrand reduces to the
/// potential terms, which integrate to `I^±`. The transition annulus carries
/// `|d_y phi|^2 + |d_x^2 phi|^2 - 2 delta phi d_x^2 phi`, integrated in
/// `(log r, theta)`.
pub fn qform(model: &Model, t: &RegularizedTestFunction, controls: &QuadControls) -> Result<f64, TestFnError> {
    let support = model.potential().effective_support_radius();
    if t.n() <= support {
        return Err(TestFnError::SupportNotCleared { n: t.n(), support });
    }
    let delta = model.delta();
    let moments = potential_moments(model.potential(), controls)?;
    let (i_plus, i_minus) = i_eps(&moments, delta, model.epsilon());
    let plateau = match t.sign {
        Sign::Plus => i_plus,
        Sign::Minus => i_minus,
    };
    let annulus = t.annulus_integral(|j, _| j.dy * j.dy + j.dxx * j.dxx - 2.0 * delta * j.phi * j.dxx, controls)?;
    Ok(plateau + annulus)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QformRow {
    pub n: f64,
    #[serde(rename = "Q")]
    pub q: f64,
    #[serde(rename = "I")]
    pub i: f64,
    pub diff: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QformTable {
    pub sign: Sign,
    pub c: f64,
    pub rows: Vec<QformRow>,
    /// Every row within its bound and `Q - I` strictly decreasing in `n`.
    pub verdict: bool,
}

/// Evaluates `Q_eps[psi_n^±]` on `n_grid` and checks `|Q - I| <= c / log n`
/// together with monotone decay of `Q - I`.
pub fn qform_convergence(
    model: &Model,
    profile: &CutoffProfile,
    sign: Sign,
    n_grid: &[f64],
    controls: &QuadControls,
) -> Result<QformTable, TestFnError> {
    let c = cutoff_constants(profile, model.delta()).c;
    let moments = potential_moments(model.potential(), controls)?;
    let (i_plus, i_minus) = i_eps(&moments, model.delta(), model.epsilon());
    let i = if sign == Sign::Plus { i_plus } else { i_minus };
    if let Some(&n) = n_grid.iter().find(|&&n| !(n > E)) {
        return Err(BoundsError::NBelowE(n).into());
    }
    let rows = n_grid
        .par_iter()
        .map(|&n| {
            let t = RegularizedTestFunction::new(*profile, n, sign)?;
            let q = qform(model, &t, controls)?;
            let bound = c / n.ln();
            Ok(QformRow { n, q, i, diff: q - i, bound, pass: (q - i).abs() <= bound })
        })
        .collect::<Result<Vec<_>, TestFnError>>()?;
    let decreasing = rows.windows(2).all(|w| w[1].diff < w[0].diff);
    let verdict = decreasing && rows.iter().all(|r| r.pass);
    Ok(QformTable { sign, c, rows, verdict })
}
