//! Embedded-eigenvalue candidates: localization filter and virial exclusion.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::funcalc::{eigendecompose_with, kahan_sum, EigenOptions, Eigensystem};
use crate::lattice::{build_h, Grid2D, OperatorParams};
use crate::potentials::PotentialSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    BulkCandidate,
    BoundaryArtifact,
    ExcludedByVirial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenCandidate {
    pub index: usize,
    pub eigenvalue: f64,
    pub boundary_mass: f64,
    /// Set once the virial test has run.
    pub virial: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub loc_threshold: f64,
    /// Width of the boundary layer, in cells.
    pub boundary_cells: usize,
    /// Virial margin as a fraction of epsilon.
    pub margin_fraction: f64,
    pub eigen: EigenOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { loc_threshold: 0.05, boundary_cells: 3, margin_fraction: 0.1, eigen: EigenOptions::default() }
    }
}

/// Squared weight of `v` on nodes at most `cells` cells from a wall.
pub fn boundary_mass(grid: &Grid2D, v: &[Complex64], cells: usize) -> f64 {
    let total = kahan_sum(v.iter().map(|z| z.norm_sqr()));
    let edge =
        kahan_sum(v.iter().enumerate().filter(|(i, _)| grid.wall_distance(*i) <= cells).map(|(_, z)| z.norm_sqr()));
    if total > 0.0 {
        (edge / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Every eigenpair with eigenvalue in `[lo, hi]`, annotated with its boundary mass.
pub fn scan(
    es: &Eigensystem,
    window: (f64, f64),
    loc_threshold: f64,
    boundary_cells: usize,
) -> Result<Vec<EigenCandidate>> {
    let (lo, hi) = window;
    let first = es.values.partition_point(|&l| l < lo);
    let last = es.values.partition_point(|&l| l <= hi);
    (first..last.max(first))
        .into_par_iter()
        .map(|i| {
            let mass = boundary_mass(&es.grid, es.vector(i)?, boundary_cells);
            Ok(EigenCandidate {
                index: i,
                eigenvalue: es.values[i],
                boundary_mass: mass,
                virial: None,
                verdict: if mass < loc_threshold { Verdict::BulkCandidate } else { Verdict::BoundaryArtifact },
            })
        })
        .collect()
}

/// `eps + <phi, (dV/dx) phi>` for a unit vector `phi`.
pub fn virial_test(phi: &[Complex64], grid: &Grid2D, params: &OperatorParams, spec: &PotentialSpec) -> Result<f64> {
    if phi.len() != grid.dim() {
        return Err(Error::DimensionMismatch { left: phi.len(), right: grid.dim() });
    }
    let norm = kahan_sum(phi.iter().map(|z| z.norm_sqr())).sqrt();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized(norm));
    }
    let w = grid.sample(|x, y| spec.dx(x, y));
    Ok(params.eps + kahan_sum(phi.iter().zip(&w).map(|(z, w)| z.norm_sqr() * w)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub window: (f64, f64),
    pub epsilon: f64,
    pub margin: f64,
    /// Largest `|dV/dx|` over the grid nodes.
    pub sup_dx_potential: f64,
    pub candidates: Vec<EigenCandidate>,
    pub excluded_count: usize,
    pub surviving: Vec<EigenCandidate>,
    /// The sup-norm bound does not apply: `sup |dV/dx| >= eps`.
    pub inconclusive: bool,
    pub note: Option<String>,
}

impl ExclusionReport {
    pub fn bulk_count(&self) -> usize {
        self.candidates.iter().filter(|c| c.verdict != Verdict::BoundaryArtifact).count()
    }

    /// Passes when nothing survives or the bound is inapplicable.
    pub fn passed(&self) -> bool {
        self.surviving.is_empty() || self.inconclusive
    }
}

/// Diagonalizes `H`, scans the window and runs the virial test on bulk candidates.
pub fn exclusion_report(
    grid: &Grid2D,
    params: &OperatorParams,
    spec: &PotentialSpec,
    window: (f64, f64),
    opts: &ScanOptions,
) -> Result<ExclusionReport> {
    if window.0.is_nan() || window.1.is_nan() || window.0 > window.1 {
        return Err(invalid("window", format!("lower end {} exceeds upper end {}", window.0, window.1)));
    }
    let es = eigendecompose_with(&build_h(grid, params, spec)?, &opts.eigen)?;
    exclusion_report_for(&es, params, spec, window, opts)
}

/// As [`exclusion_report`], reusing an eigensystem of `H`.
pub fn exclusion_report_for(
    es: &Eigensystem,
    params: &OperatorParams,
    spec: &PotentialSpec,
    window: (f64, f64),
    opts: &ScanOptions,
) -> Result<ExclusionReport> {
    let grid = es.grid;
    let sup = grid.sample(|x, y| spec.dx(x, y)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let margin = opts.margin_fraction * params.eps;
    let mut candidates = scan(es, window, opts.loc_threshold, opts.boundary_cells)?;
    candidates.par_iter_mut().filter(|c| c.verdict == Verdict::BulkCandidate).try_for_each(|c| {
        let v = virial_test(es.vector(c.index)?, &grid, params, spec)?;
        c.virial = Some(v);
        if margin > 0.0 && v.abs() >= margin {
            c.verdict = Verdict::ExcludedByVirial;
        }
        Ok::<_, Error>(())
    })?;
    let excluded_count = candidates.iter().filter(|c| c.verdict == Verdict::ExcludedByVirial).count();
    let surviving: Vec<_> = candidates.iter().filter(|c| c.verdict == Verdict::BulkCandidate).cloned().collect();
    let inconclusive = sup >= params.eps;
    let note = inconclusive.then(|| "inconclusive: virial bound inapplicable".to_string());
    Ok(ExclusionReport {
        window,
        epsilon: params.eps,
        margin,
        sup_dx_potential: sup,
        candidates,
        excluded_count,
        surviving,
        inconclusive,
        note,
    })
}
