use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::RunConfig;
use crate::assembly::{AssemblyError, BasisProvenance, KernelCache};
use crate::bounds::{bounds_report, cutoff_constants, potential_moments, BoundsError, BoundsReport, CutoffConstants, PotentialMoments};
use crate::eigensolve::{gap_filter, EigenError, SolverDiagnostics, SpectralResult, Whitening};
use crate::rbf::{generate_nodes, RbfBasis, RbfError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("basis: {0}")]
    Basis(#[from] RbfError),
    #[error("assembly: {0}")]
    Assembly(#[from] AssemblyError),
    #[error("eigensolve: {0}")]
    Eigen(#[from] EigenError),
    #[error("bounds: {0}")]
    Bounds(#[from] BoundsError),
}

/// Everything that does not depend on the coupling.
pub struct Prepared {
    pub basis: RbfBasis,
    pub cache: KernelCache,
    pub whitening: Whitening,
    pub moments: PotentialMoments,
    pub constants: CutoffConstants,
}

impl Prepared {
    pub fn new(config: &RunConfig) -> Result<Self, PipelineError> {
        let b = &config.basis;
        let nodes = generate_nodes(b.bbox, b.count, b.layout)?;
        let basis = match b.shape {
            Some(s) => RbfBasis::new(nodes, s, b.bbox)?,
            None => RbfBasis::with_shape_factor(nodes, b.bbox, b.shape_factor)?,
        };
        log::info!("basis: {} nodes, shape {:.4}, fill distance {:.4}", basis.len(), basis.shape(), basis.fill_distance());
        let cache = KernelCache::new(&basis, &config.potential, config.delta, &config.quadrature)?;
        let whitening = Whitening::block_diagonal(&cache.gram, config.solver.truncation_tol)?;
        log::info!("whitening rank {} of {}", whitening.rank(), whitening.dim());
        let moments = potential_moments(&config.potential, &config.quadrature)?;
        let constants = cutoff_constants(&config.profile(), config.delta);
        Ok(Self { basis, cache, whitening, moments, constants })
    }

    pub fn solve(&self, config: &RunConfig, eps: f64) -> Result<SpectralResult, PipelineError> {
        let system = self.cache.assemble(eps)?;
        let raw = self.whitening.solve(&system.c)?;
        Ok(gap_filter(&raw, &system, config.delta, config.solver.residual_tol))
    }

    pub fn bounds(&self, eps: f64) -> BoundsReport {
        bounds_report(&self.moments, &self.constants, eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub index: usize,
    #[serde(rename = "E")]
    pub energy: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub epsilon: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the materialized config echo.
    pub config_hash: String,
    pub basis: BasisProvenance,
    pub solver: Option<SolverDiagnostics>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub bounds: Vec<BoundsReport>,
    pub failures: Vec<SweepFailure>,
    pub provenance: Provenance,
}

pub fn config_hash(config: &RunConfig) -> String {
    Sha256::digest(config.echo().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Solves and bounds every coupling of the grid. Failures at one coupling
/// are recorded and do not stop the sweep.
pub fn run_sweep(config: &RunConfig) -> Result<SweepTable, PipelineError> {
    let prepared = Prepared::new(config)?;
    Ok(sweep_prepared(config, &prepared))
}

pub fn sweep_prepared(config: &RunConfig, prepared: &Prepared) -> SweepTable {
    let eps = config.epsilons();
    let solved: Vec<(f64, Result<SpectralResult, PipelineError>)> =
        eps.par_iter().map(|&e| (e, prepared.solve(config, e))).collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (epsilon, result) in solved {
        match result {
            Ok(r) => {
                log::info!("eps = {epsilon}: {} gap eigenvalues", r.gap.len());
                rows.extend(r.gap.iter().enumerate().map(|(index, p)| SweepRow {
                    epsilon,
                    index,
                    energy: p.energy,
                    residual: p.residual,
                }));
            }
            Err(e) => {
                log::warn!("eps = {epsilon}: {e}");
                failures.push(SweepFailure { epsilon, error: e.to_string() });
            }
        }
    }
    SweepTable {
        rows,
        bounds: eps.iter().map(|&e| prepared.bounds(e)).collect(),
        failures,
        provenance: Provenance {
            config_hash: config_hash(config),
            basis: BasisProvenance::of(&prepared.basis),
            solver: Some(prepared.whitening.diagnostics()),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    }
}
