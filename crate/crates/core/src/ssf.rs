//! Smoothed spectral shift function by two independent routes.
//!
//! The difference route evaluates `tr g(H - lambda) - tr g(H0 - lambda)` from
//! the two spectra. The formula route evaluates
//! `-(1/eps) tr((dV/dx) g(H - lambda))` from `H` alone.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigenscan::boundary_mass;
use crate::error::{invalid, Error, Result};
use crate::funcalc::{
    self, eigendecompose_with, kahan_sum, normal_cdf, perturbative_weighted_trace, spectrum, trace_diff,
    weighted_trace, EigenOptions, Eigensystem, PerturbativeOptions, SmoothingFunction, SpectralFunction,
};
use crate::lattice::{build_h, build_h0, build_multiplication, build_shift, is_shift_interior, Grid2D, OperatorParams};
use crate::potentials::PotentialSpec;
use crate::sparse::CsrMatrix;

/// Grid, field strengths and potential defining `H` and `H0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorContext {
    pub grid: Grid2D,
    pub params: OperatorParams,
    pub potential: PotentialSpec,
}

impl OperatorContext {
    pub fn new(grid: Grid2D, params: OperatorParams, potential: PotentialSpec) -> Self {
        Self { grid, params, potential }
    }

    fn key(&self, with_potential: bool) -> String {
        if with_potential && !self.potential.is_zero() {
            format!("H|{:?}|{:?}|{:?}", self.grid, self.params, self.potential)
        } else {
            format!("H0|{:?}|{:?}", self.grid, self.params)
        }
    }

    /// `dV/dx` at the nodes.
    pub fn dx_potential(&self) -> Vec<f64> {
        self.grid.sample(|x, y| self.potential.dx(x, y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SsfMethod {
    Difference,
    Formula,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsfQuery {
    pub lambdas: Vec<f64>,
    pub sigma: f64,
    pub method: SsfMethod,
    pub context: OperatorContext,
    /// Enforce the boundary-pollution guard.
    pub guard: bool,
}

impl SsfQuery {
    pub fn new(lambdas: Vec<f64>, sigma: f64, method: SsfMethod, context: OperatorContext) -> Self {
        Self { lambdas, sigma, method, context, guard: true }
    }

    pub fn unguarded(mut self) -> Self {
        self.guard = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(invalid("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if self.lambdas.is_empty() {
            return Err(Error::InvalidQuery("lambda grid is empty".into()));
        }
        if self.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidQuery("lambda grid has non-finite entries".into()));
        }
        if self.lambdas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidQuery("lambda grid must be strictly ascending".into()));
        }
        self.context.potential.validate()
    }
}

/// How the formula route obtains `tr(W g(H))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormulaRoute {
    /// Eigenvectors up to the dense limit, perturbative beyond it.
    Auto,
    Eigenvectors,
    Perturbative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsfOptions {
    pub eigen: EigenOptions,
    pub perturbative: PerturbativeOptions,
    pub formula_route: FormulaRoute,
    /// Boundary mass above which an eigenvector counts as boundary-localized.
    pub pollution_mass: f64,
    /// Largest tolerated window weight on boundary-localized states.
    pub pollution_limit: f64,
}

impl Default for SsfOptions {
    fn default() -> Self {
        Self {
            eigen: EigenOptions::default(),
            perturbative: PerturbativeOptions::default(),
            formula_route: FormulaRoute::Auto,
            pollution_mass: 0.5,
            pollution_limit: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsfMetadata {
    pub grid: Grid2D,
    pub params: OperatorParams,
    pub sigma: f64,
    pub formula_route: Option<FormulaRoute>,
    /// Lowest eigenvalue of `H` and `H0` together.
    pub spectrum_min: Option<f64>,
    pub spectrum_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsfResult {
    pub lambdas: Vec<f64>,
    pub difference: Option<Vec<f64>>,
    pub formula: Option<Vec<f64>>,
    /// `|difference - formula|` when both are present.
    pub residuals: Option<Vec<f64>>,
    pub metadata: SsfMetadata,
}

impl SsfResult {
    /// Floor in relative residuals, `1e-8 * dimension`.
    pub fn floor(&self) -> f64 {
        1e-8 * self.metadata.grid.dim() as f64
    }

    /// `sup |difference - formula| / (sup |difference| + floor)`.
    pub fn sup_relative_residual(&self) -> Option<f64> {
        let r = self.residuals.as_ref()?;
        let d = self.difference.as_ref()?;
        let num = r.iter().fold(0.0f64, |m, v| m.max(*v));
        let den = d.iter().fold(0.0f64, |m, v| m.max(v.abs())) + self.floor();
        Some(num / den)
    }

    /// Per-lambda `|difference - formula| / (sup |difference| + floor)`.
    pub fn relative_residuals(&self) -> Option<Vec<f64>> {
        let r = self.residuals.as_ref()?;
        let d = self.difference.as_ref()?;
        let den = d.iter().fold(0.0f64, |m, v| m.max(v.abs())) + self.floor();
        Some(r.iter().map(|v| v / den).collect())
    }
}

/// Memoized spectra keyed by operator, shared across queries.
#[derive(Default)]
pub struct SpectrumCache {
    entries: Mutex<HashMap<String, Arc<Eigensystem>>>,
}

impl SpectrumCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn get_or_insert(&self, key: String, make: impl FnOnce() -> Result<Eigensystem>) -> Result<Arc<Eigensystem>> {
        if let Some(es) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(es.clone());
        }
        let es = Arc::new(make()?);
        self.entries.lock().expect("cache lock").insert(key, es.clone());
        Ok(es)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Evaluates queries against a shared spectrum cache.
#[derive(Default)]
pub struct SsfEngine {
    pub options: SsfOptions,
    cache: SpectrumCache,
}

impl SsfEngine {
    pub fn new(options: SsfOptions) -> Self {
        Self { options, cache: SpectrumCache::new() }
    }

    pub fn cache(&self) -> &SpectrumCache {
        &self.cache
    }

    /// Eigenvalues of `H` (with potential) or `H0`.
    pub fn spectrum(&self, ctx: &OperatorContext, with_potential: bool) -> Result<Arc<Eigensystem>> {
        self.cache.get_or_insert(ctx.key(with_potential), || {
            let op = if with_potential {
                build_h(&ctx.grid, &ctx.params, &ctx.potential)?
            } else {
                build_h0(&ctx.grid, &ctx.params)?
            };
            spectrum(&op)
        })
    }

    /// Full eigensystem of `H` or `H0`, subject to the dense limit.
    pub fn eigensystem(&self, ctx: &OperatorContext, with_potential: bool) -> Result<Arc<Eigensystem>> {
        self.cache.get_or_insert(format!("{}|vectors", ctx.key(with_potential)), || {
            let op = if with_potential {
                build_h(&ctx.grid, &ctx.params, &ctx.potential)?
            } else {
                build_h0(&ctx.grid, &ctx.params)?
            };
            eigendecompose_with(&op, &self.options.eigen)
        })
    }

    fn has_vectors(&self, ctx: &OperatorContext, with_potential: bool) -> Option<Arc<Eigensystem>> {
        self.cache.entries.lock().expect("cache lock").get(&format!("{}|vectors", ctx.key(with_potential))).cloned()
    }

    fn metadata(&self, q: &SsfQuery, route: Option<FormulaRoute>, spectra: &[&Eigensystem]) -> SsfMetadata {
        let lo = spectra.iter().filter_map(|e| e.values.first().copied()).reduce(f64::min);
        let hi = spectra.iter().filter_map(|e| e.values.last().copied()).reduce(f64::max);
        SsfMetadata {
            grid: q.context.grid,
            params: q.context.params,
            sigma: q.sigma,
            formula_route: route,
            spectrum_min: lo,
            spectrum_max: hi,
        }
    }

    /// Rejects lambdas closer than `3 sigma` to the ends of the computed
    /// spectra, and, where eigenvectors are at hand, lambdas whose window
    /// puts more than `pollution_limit` of its weight on boundary states.
    pub fn guard(&self, q: &SsfQuery, spectra: &[&Eigensystem]) -> Result<()> {
        if !q.guard {
            return Ok(());
        }
        for es in spectra {
            let (lo, hi) = (es.values[0] + 3.0 * q.sigma, es.values[es.dim() - 1] - 3.0 * q.sigma);
            if let Some(&bad) = q.lambdas.iter().find(|&&l| l < lo || l > hi) {
                return Err(Error::InvalidQuery(format!(
                    "lambda = {bad} lies outside the resolved window [{lo}, {hi}] of {}",
                    es.tag
                )));
            }
            if es.has_vectors() {
                let pollution = boundary_pollution(es, &q.lambdas, q.sigma, self.options.pollution_mass)?;
                if let Some((k, p)) = pollution.iter().enumerate().find(|(_, &p)| p >= self.options.pollution_limit) {
                    return Err(Error::InvalidQuery(format!(
                        "lambda = {} puts weight {p:.3} on boundary-localized states of {}",
                        q.lambdas[k], es.tag
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn difference(&self, q: &SsfQuery) -> Result<SsfResult> {
        q.validate()?;
        let es_h = self.spectrum(&q.context, true)?;
        let es_0 = self.spectrum(&q.context, false)?;
        let with_vectors: Vec<_> = [true, false].iter().filter_map(|&p| self.has_vectors(&q.context, p)).collect();
        self.guard(q, &[&es_h, &es_0])?;
        for es in &with_vectors {
            self.guard(q, &[es])?;
        }
        let values = q
            .lambdas
            .par_iter()
            .map(|&l| trace_diff(&SmoothingFunction::gaussian(l, q.sigma)?, &es_h, &es_0))
            .collect::<Result<Vec<_>>>()?;
        Ok(SsfResult {
            lambdas: q.lambdas.clone(),
            difference: Some(values),
            formula: None,
            residuals: None,
            metadata: self.metadata(q, None, &[&es_h, &es_0]),
        })
    }

    fn route(&self, ctx: &OperatorContext) -> FormulaRoute {
        match self.options.formula_route {
            FormulaRoute::Auto if ctx.grid.dim() <= self.options.eigen.dense_limit => FormulaRoute::Eigenvectors,
            FormulaRoute::Auto => FormulaRoute::Perturbative,
            r => r,
        }
    }

    pub fn formula(&self, q: &SsfQuery) -> Result<SsfResult> {
        q.validate()?;
        let eps = q.context.params.eps;
        if eps <= 0.0 {
            return Err(invalid("epsilon", "the formula route divides by epsilon and needs epsilon > 0"));
        }
        let route = self.route(&q.context);
        let weight = q.context.dx_potential();
        let (values, spectra) = match route {
            FormulaRoute::Eigenvectors => {
                let es = self.eigensystem(&q.context, true)?;
                self.guard(q, &[&es])?;
                let w = build_multiplication(&q.context.grid, |x, y| q.context.potential.dx(x, y))?;
                let diag = es.diagonal_elements(&w.matrix)?;
                let values = q
                    .lambdas
                    .par_iter()
                    .map(|&l| {
                        let g = SmoothingFunction::gaussian(l, q.sigma)?;
                        Ok(-kahan_sum(diag.iter().zip(&es.values).map(|(d, &e)| g.eval(e) * d.re)) / eps)
                    })
                    .collect::<Result<Vec<_>>>()?;
                (values, es)
            }
            _ => {
                let es = self.spectrum(&q.context, true)?;
                self.guard(q, &[&es])?;
                let h = build_h(&q.context.grid, &q.context.params, &q.context.potential)?;
                let tr = perturbative_weighted_trace(&h, &weight, &q.lambdas, q.sigma, &self.options.perturbative)?;
                (tr.into_iter().map(|t| -t / eps).collect(), es)
            }
        };
        Ok(SsfResult {
            lambdas: q.lambdas.clone(),
            difference: None,
            formula: Some(values),
            residuals: None,
            metadata: self.metadata(q, Some(route), &[&spectra]),
        })
    }

    pub fn both(&self, q: &SsfQuery) -> Result<SsfResult> {
        let f = self.formula(q)?;
        let d = self.difference(q)?;
        let (dv, fv) = (d.difference.expect("difference route"), f.formula.expect("formula route"));
        let residuals = dv.iter().zip(&fv).map(|(a, b)| (a - b).abs()).collect();
        let mut metadata = d.metadata;
        metadata.formula_route = f.metadata.formula_route;
        Ok(SsfResult {
            lambdas: q.lambdas.clone(),
            difference: Some(dv),
            formula: Some(fv),
            residuals: Some(residuals),
            metadata,
        })
    }

    pub fn run(&self, q: &SsfQuery) -> Result<SsfResult> {
        match q.method {
            SsfMethod::Difference => self.difference(q),
            SsfMethod::Formula => self.formula(q),
            SsfMethod::Both => self.both(q),
        }
    }

    /// Smoothed increment `xi(lambda2) - xi(lambda1)`, that is
    /// `tr F(H) - tr F(H0)` with `F(e) = Phi((l2 - e)/s) - Phi((l1 - e)/s)`.
    pub fn increment(&self, ctx: &OperatorContext, lambda1: f64, lambda2: f64, sigma: f64) -> Result<f64> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be positive, got {sigma}")));
        }
        let es_h = self.spectrum(ctx, true)?;
        let es_0 = self.spectrum(ctx, false)?;
        let window = |e: f64| normal_cdf((lambda2 - e) / sigma) - normal_cdf((lambda1 - e) / sigma);
        trace_diff(&window, &es_h, &es_0)
    }
}

pub fn ssf_via_difference(q: &SsfQuery) -> Result<SsfResult> {
    SsfEngine::default().difference(q)
}

pub fn ssf_via_formula(q: &SsfQuery) -> Result<SsfResult> {
    SsfEngine::default().formula(q)
}

pub fn ssf_both(q: &SsfQuery) -> Result<SsfResult> {
    SsfEngine::default().both(q)
}

/// Window weight on boundary-localized eigenvectors:
/// `sum_i g(l_i - lambda) [mass_i > threshold] / sum_i g(l_i - lambda)`.
pub fn boundary_pollution(es: &Eigensystem, lambdas: &[f64], sigma: f64, threshold: f64) -> Result<Vec<f64>> {
    let flags = (0..es.dim())
        .into_par_iter()
        .map(|i| Ok(boundary_mass(&es.grid, es.vector(i)?, 3) > threshold))
        .collect::<Result<Vec<bool>>>()?;
    lambdas
        .iter()
        .map(|&l| {
            let g = SmoothingFunction::gaussian(l, sigma)?;
            let total = kahan_sum(es.values.iter().map(|&e| g.eval(e)));
            let bad = kahan_sum(es.values.iter().zip(&flags).filter(|(_, &f)| f).map(|(&e, _)| g.eval(e)));
            Ok(if total > 0.0 { bad / total } else { 0.0 })
        })
        .collect()
}

/// Interior-restricted traces of the shift identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub tau: f64,
    /// `tr_I(U (f(H) - f(H0)))`.
    pub lhs: f64,
    /// `-(1/(eps tau)) tr_I(diag(V(x+tau, y) - V(x, y)) U f(H))`.
    pub rhs: f64,
    pub residual: f64,
    /// `-(1/eps) tr((dV/dx) f(H))` on the same grid, the `tau -> 0` limit.
    pub formula: f64,
    /// Largest imaginary part among the traces (zero up to rounding).
    pub imaginary: f64,
}

/// Checks `tr(U f(H)) - tr(U f(H0)) = -(1/(eps tau)) tr(D U f(H))` on rows
/// farther than `|steps|` cells from the x-walls.
pub fn shift_identity_check(
    grid: &Grid2D,
    params: &OperatorParams,
    spec: &PotentialSpec,
    steps: i64,
    f: &impl SpectralFunction,
    options: &EigenOptions,
) -> Result<ShiftReport> {
    if steps == 0 {
        return Err(invalid("steps", "the shift must be nonzero"));
    }
    if params.eps <= 0.0 {
        return Err(invalid("epsilon", "the identity divides by epsilon and needs epsilon > 0"));
    }
    let u = build_shift(grid, steps)?;
    let tau = steps as f64 * grid.dx();
    let interior = u.matrix.restrict_rows(|i| is_shift_interior(grid, i, steps));
    let d: Vec<f64> = grid.sample(|x, y| spec.value(x + tau, y) - spec.value(x, y));
    let du = CsrMatrix::from_real_diagonal(&d).matmul(&interior)?;
    let es_h = eigendecompose_with(&build_h(grid, params, spec)?, options)?;
    let es_0 = eigendecompose_with(&build_h0(grid, params)?, options)?;
    let as_op = |m: CsrMatrix| crate::lattice::DiscreteOperator { matrix: m, ..u.clone() };
    let (iu, idu) = (as_op(interior), as_op(du));
    let t_h = weighted_trace(&iu, f, &es_h)?;
    let t_0 = weighted_trace(&iu, f, &es_0)?;
    let t_d = weighted_trace(&idu, f, &es_h)?;
    let w = build_multiplication(grid, |x, y| spec.dx(x, y))?;
    let t_w = funcalc::weighted_trace(&w, f, &es_h)?;
    let lhs = (t_h - t_0).re;
    let rhs = -t_d.re / (params.eps * tau);
    let imaginary = [(t_h - t_0).im, t_d.im / (params.eps * tau), t_w.im].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(ShiftReport { tau, lhs, rhs, residual: (lhs - rhs).abs(), formula: -t_w.re / params.eps, imaginary })
}

/// Cumulative trapezoid integral of every series, pinned to zero at the
/// left end. The grid must start at least `3 sigma` below both spectra.
pub fn normalize_ssf(result: &SsfResult) -> Result<SsfResult> {
    let start = result.lambdas[0];
    let required =
        result.metadata.spectrum_min.ok_or_else(|| Error::InvalidQuery("result carries no spectrum bounds".into()))?
            - 3.0 * result.metadata.sigma;
    if start > required {
        return Err(Error::GridNotFarEnoughLeft { start, required });
    }
    let integrate = |v: &Vec<f64>| {
        let mut acc = vec![0.0; v.len()];
        for k in 1..v.len() {
            acc[k] = acc[k - 1] + 0.5 * (v[k] + v[k - 1]) * (result.lambdas[k] - result.lambdas[k - 1]);
        }
        acc
    };
    let difference = result.difference.as_ref().map(integrate);
    let formula = result.formula.as_ref().map(integrate);
    let residuals = match (&difference, &formula) {
        (Some(d), Some(f)) => Some(d.iter().zip(f).map(|(a, b)| (a - b).abs()).collect()),
        _ => None,
    };
    Ok(SsfResult { lambdas: result.lambdas.clone(), difference, formula, residuals, metadata: result.metadata.clone() })
}
