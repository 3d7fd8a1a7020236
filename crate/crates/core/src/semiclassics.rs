//! Phase-space functionals of the symbol `(zeta - y)^2 + eta^2 + x + V(x, y)`.
//!
//! The fiber over `(x, y)` is a disc in `(zeta, eta)`, so every functional
//! reduces to a planar integral. Planar integrals are iterated: an adaptive
//! outer integral in `y` over inner integrals in `x` that are split at the
//! crossings of the level set `x + V = tau`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::funcalc::{normal_cdf, SmoothingFunction, WindowKind};
use crate::potentials::{smoothstep, Extents, PotentialSpec};
use crate::quadrature::{integrate, level_crossings, QuadratureOptions};

/// Cutoff weight `psi` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Weight {
    /// One on the whole quadrature region.
    Unit,
    /// One for `r <= inner`, smooth decay to zero at `r = outer`.
    RadialPlateau { center: (f64, f64), inner: f64, outer: f64 },
}

impl Weight {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match *self {
            Weight::Unit => 1.0,
            Weight::RadialPlateau { center, inner, outer } => {
                let r = (x - center.0).hypot(y - center.1);
                smoothstep((outer - r) / (outer - inner)).0
            }
        }
    }

    fn extents(&self) -> Option<Extents> {
        match *self {
            Weight::Unit => None,
            Weight::RadialPlateau { center, outer, .. } => {
                Some(Extents::new((center.0 - outer, center.0 + outer), (center.1 - outer, center.1 + outer)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolContext {
    pub potential: PotentialSpec,
    pub weight: Weight,
    /// Quadrature region; derived from the supports when absent.
    pub region: Option<Extents>,
    pub quadrature: QuadratureOptions,
    /// Smallest step of the level-crossing search.
    pub crossing_floor: f64,
}

impl SymbolContext {
    pub fn new(potential: PotentialSpec) -> Self {
        Self {
            potential,
            weight: Weight::Unit,
            region: None,
            quadrature: QuadratureOptions::default(),
            crossing_floor: 1e-5,
        }
    }

    pub fn with_weight(mut self, weight: Weight) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_region(mut self, region: Extents) -> Self {
        self.region = Some(region);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        if let Weight::RadialPlateau { inner, outer, .. } = self.weight {
            if !(inner >= 0.0 && outer > inner && outer.is_finite()) {
                return Err(invalid("weight", format!("need 0 <= inner < outer, got {inner}, {outer}")));
            }
        }
        if let Some(r) = self.region {
            if !(r.width() > 0.0 && r.height() > 0.0) {
                return Err(invalid("region", "must have positive width and height"));
            }
        }
        Ok(())
    }

    /// Region carrying `psi`: explicit, else the support of `psi`, else the
    /// support box of the potential.
    pub fn weight_region(&self) -> Option<Extents> {
        self.region.or_else(|| self.weight.extents()).or_else(|| self.potential.support_extents())
    }

    /// Region carrying `dV/dx`.
    pub fn potential_region(&self) -> Option<Extents> {
        let support = self.potential.support_extents()?;
        Some(match self.region {
            Some(r) => r.union(&support),
            None => support,
        })
    }

    fn lipschitz(&self) -> f64 {
        (1.0 + self.potential.gradient_bound()) * (1.0 + 1e-9)
    }

    fn psi(&self, x: f64, y: f64) -> f64 {
        match self.region {
            Some(r) if !r.contains(x, y) => 0.0,
            _ => self.weight.value(x, y),
        }
    }
}

/// `int_region F(x, y) 1[x + V <= tau] dx dy`, with the indicator resolved by
/// splitting each x-fiber at its level crossings.
fn below_level(
    ctx: &SymbolContext,
    region: Extents,
    tau: f64,
    tol: f64,
    integrand: &(impl Fn(f64, f64) -> f64 + Sync),
) -> Result<f64> {
    let spec = &ctx.potential;
    let lip = ctx.lipschitz();
    let inner_opts = QuadratureOptions { abs_tol: 0.25 * tol / region.height(), ..ctx.quadrature };
    let outer_opts = QuadratureOptions { abs_tol: 0.5 * tol, ..ctx.quadrature };
    let fiber = |y: f64| -> Result<f64> {
        let g = |x: f64| x + spec.value(x, y) - tau;
        let mut cuts = vec![region.x.0];
        cuts.extend(level_crossings(g, region.x.0, region.x.1, lip, ctx.crossing_floor));
        cuts.push(region.x.1);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            if w[1] > w[0] && g(0.5 * (w[0] + w[1])) <= 0.0 {
                total += integrate(|x| Ok(integrand(x, y)), w[0], w[1], &inner_opts)?.value;
            }
        }
        Ok(total)
    };
    Ok(integrate(fiber, region.y.0, region.y.1, &outer_opts)?.value)
}

fn smooth_2d(
    ctx: &SymbolContext,
    region: Extents,
    tol: f64,
    integrand: &(impl Fn(f64, f64) -> Result<f64> + Sync),
) -> Result<f64> {
    let inner_opts = QuadratureOptions { abs_tol: 0.25 * tol / region.height(), ..ctx.quadrature };
    let outer_opts = QuadratureOptions { abs_tol: 0.5 * tol, ..ctx.quadrature };
    let fiber = |y: f64| Ok(integrate(|x| integrand(x, y), region.x.0, region.x.1, &inner_opts)?.value);
    Ok(integrate(fiber, region.y.0, region.y.1, &outer_opts)?.value)
}

/// `c0(lambda) = -pi int dV/dx (lambda - x - V)_+ dx dy`, to absolute
/// accuracy `1e-8 (1 + |lambda|)`.
pub fn c0(lambda: f64, ctx: &SymbolContext) -> Result<f64> {
    ctx.validate()?;
    let Some(region) = ctx.potential_region() else { return Ok(0.0) };
    let spec = &ctx.potential;
    let tol = 1e-8 * (1.0 + lambda.abs());
    let integral = below_level(ctx, region, lambda, tol / PI, &|x, y| {
        let (v, vx, _) = spec.gradient_and_value(x, y);
        vx * (lambda - x - v)
    })?;
    Ok(-PI * integral)
}

/// `d c0 / d lambda = -pi int dV/dx 1[x + V <= lambda] dx dy`.
pub fn c0_derivative(lambda: f64, ctx: &SymbolContext) -> Result<f64> {
    ctx.validate()?;
    let Some(region) = ctx.potential_region() else { return Ok(0.0) };
    let spec = &ctx.potential;
    let integral = below_level(ctx, region, lambda, 1e-10 / PI, &|x, y| spec.dx(x, y))?;
    Ok(-PI * integral)
}

/// `gamma0(tau) = pi int psi 1[x + V <= tau] dx dy`, the level density of the
/// symbol. The level set must be nondegenerate.
pub fn gamma0(tau: f64, ctx: &SymbolContext) -> Result<f64> {
    ctx.validate()?;
    let Some(region) = ctx.weight_region() else { return Ok(0.0) };
    let report = check_nondegeneracy(tau, ctx, DEFAULT_MARGIN);
    if !report.ok {
        let (x, y) = report.argmin.unwrap_or((f64::NAN, f64::NAN));
        return Err(Error::DegenerateLevelSet { level: tau, min_grad: report.min_grad, x, y });
    }
    Ok(PI * below_level(ctx, region, tau, 1e-10 / PI, &|x, y| ctx.psi(x, y))?)
}

/// Phase-space volume `int int_{p2 <= tau} psi = pi int psi (tau - x - V)_+`.
pub fn phase_space_volume(tau: f64, ctx: &SymbolContext) -> Result<f64> {
    ctx.validate()?;
    let Some(region) = ctx.weight_region() else { return Ok(0.0) };
    let spec = &ctx.potential;
    Ok(PI * below_level(ctx, region, tau, 1e-11 / PI, &|x, y| ctx.psi(x, y) * (tau - x - spec.value(x, y)))?)
}

/// `int_u^inf f`.
fn upper_tail(f: &SmoothingFunction, u: f64, opts: &QuadratureOptions) -> Result<f64> {
    match f.kind {
        WindowKind::GaussianWindow => Ok(normal_cdf((f.center - u) / f.width)),
        WindowKind::BumpWindow => {
            let (a, b) = f.support().expect("bump has compact support");
            if u >= b {
                return Ok(0.0);
            }
            Ok(integrate(|s| Ok(f.eval(s)), u.max(a), b, opts)?.value)
        }
        WindowKind::PrimitiveOfGaussian => {
            Err(invalid("f", "the phase-space integral needs a window that decays at +infinity"))
        }
    }
}

/// `a0 = (2 pi)^-2 int psi f(p2)`, with the fiber reduced to
/// `pi int_{x + V}^inf f`.
pub fn a0(f: &SmoothingFunction, ctx: &SymbolContext) -> Result<f64> {
    ctx.validate()?;
    if f.kind == WindowKind::PrimitiveOfGaussian {
        upper_tail(f, 0.0, &ctx.quadrature)?;
    }
    let Some(region) = ctx.weight_region() else { return Ok(0.0) };
    let spec = &ctx.potential;
    let tail_opts = QuadratureOptions { abs_tol: 1e-13, ..ctx.quadrature };
    let integral = smooth_2d(ctx, region, 1e-10, &|x, y| {
        let w = ctx.psi(x, y);
        if w == 0.0 {
            return Ok(0.0);
        }
        Ok(w * upper_tail(f, x + spec.value(x, y), &tail_opts)?)
    })?;
    Ok(integral / (4.0 * PI))
}

pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub level: f64,
    pub ok: bool,
    pub min_grad: f64,
    /// Sampled point attaining `min_grad`; `None` when it lies outside the
    /// potential's support, where the gradient is `(1, 0)`.
    pub argmin: Option<(f64, f64)>,
    pub samples: usize,
}

/// Samples `|grad(x + V)|` near the level set `x + V = lambda` on a
/// 401 x 401 grid over the potential's support.
pub fn check_nondegeneracy(lambda: f64, ctx: &SymbolContext, margin: f64) -> NondegeneracyReport {
    // outside the support the level set is the line x = lambda, gradient (1, 0)
    let mut report = NondegeneracyReport { level: lambda, ok: true, min_grad: 1.0, argmin: None, samples: 0 };
    let Some(region) = ctx.potential.support_extents() else {
        report.ok = report.min_grad >= margin;
        return report;
    };
    const N: usize = 401;
    let (hx, hy) = (region.width() / (N - 1) as f64, region.height() / (N - 1) as f64);
    let band = 0.5 * hx.hypot(hy) * ctx.lipschitz();
    let spec = &ctx.potential;
    let (count, best) = (0..N)
        .into_par_iter()
        .map(|j| {
            let x = region.x.0 + j as f64 * hx;
            let mut count = 0;
            let mut best: Option<(f64, (f64, f64))> = None;
            for k in 0..N {
                let y = region.y.0 + k as f64 * hy;
                let (v, vx, vy) = spec.gradient_and_value(x, y);
                if (x + v - lambda).abs() <= band {
                    count += 1;
                    let g = (1.0 + vx).hypot(vy);
                    if best.is_none_or(|(b, _)| g < b) {
                        best = Some((g, (x, y)));
                    }
                }
            }
            (count, best)
        })
        .reduce(
            || (0, None),
            |(c1, b1), (c2, b2)| {
                let best = match (b1, b2) {
                    (Some(a), Some(b)) => Some(if b.0 < a.0 { b } else { a }),
                    (a, b) => a.or(b),
                };
                (c1 + c2, best)
            },
        );
    report.samples = count;
    if let Some((g, at)) = best {
        if g < report.min_grad {
            report.min_grad = g;
            report.argmin = Some(at);
        }
    }
    report.ok = report.min_grad >= margin;
    report
}

/// `(2 pi h)^-2 (c0(lambda2) - c0(lambda1))`, the leading Weyl term of the
/// increment `xi_h(lambda2) - xi_h(lambda1)`.
pub fn predict_ssf_increment(lambda1: f64, lambda2: f64, h: f64, ctx: &SymbolContext) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("h", format!("must be positive, got {h}")));
    }
    for lambda in [lambda1, lambda2] {
        let r = check_nondegeneracy(lambda, ctx, DEFAULT_MARGIN);
        if !r.ok {
            let (x, y) = r.argmin.unwrap_or((f64::NAN, f64::NAN));
            return Err(Error::DegenerateLevelSet { level: lambda, min_grad: r.min_grad, x, y });
        }
    }
    if lambda1 == lambda2 {
        return Ok(0.0);
    }
    Ok((c0(lambda2, ctx)? - c0(lambda1, ctx)?) / (2.0 * PI * h).powi(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// `theta = phi * phi~`, so the transform `|phi^|^2 / (2 pi h)` is nonnegative.
    Autocorrelation,
    /// `theta = 1` on `[-1/(2 C0), 1/(2 C0)]`.
    FlatTop,
}

/// Time-domain profile and the sampled transform
/// `theta_h(tau) = (2 pi h)^-1 int exp(i tau t / h) theta(t) dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauberianKernel {
    pub kind: KernelKind,
    pub c0: f64,
    pub h: f64,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub theta_at_zero: f64,
    /// `int theta`.
    pub theta_integral: f64,
    /// Nonnegativity certificate of the samples, autocorrelation kind only.
    pub nonnegative: Option<bool>,
    pub min_value: f64,
    pub max_value: f64,
    /// Trapezoid nodes of the time-domain function.
    nodes: Vec<f64>,
    node_values: Vec<f64>,
    node_step: f64,
    cumulative: Vec<f64>,
}

const TIME_NODES: usize = 1025;

impl TauberianKernel {
    /// Half-width of the time-domain function that is transformed.
    fn half_width(kind: KernelKind, c0: f64) -> f64 {
        match kind {
            KernelKind::Autocorrelation => 0.5 / c0,
            KernelKind::FlatTop => 1.0 / c0,
        }
    }

    /// `(2 pi)^-1 int g(t) cos(u t) dt` for the stored time-domain function.
    fn transform(&self, u: f64) -> f64 {
        let s: f64 =
            self.nodes.iter().zip(&self.node_values).map(|(t, g)| g * (u * t).cos()).sum::<f64>() * self.node_step;
        match self.kind {
            KernelKind::Autocorrelation => s * s / (2.0 * PI),
            KernelKind::FlatTop => s / (2.0 * PI),
        }
    }

    /// `theta_h(tau)` evaluated directly.
    pub fn eval(&self, tau: f64) -> f64 {
        self.transform(tau / self.h) / self.h
    }

    /// `theta(t)`.
    pub fn theta(&self, t: f64) -> f64 {
        let a = Self::half_width(self.kind, self.c0);
        match self.kind {
            KernelKind::Autocorrelation => {
                // theta(t) = int phi(s) phi(s - t) ds
                let shift = t.abs();
                if shift >= 2.0 * a {
                    return 0.0;
                }
                let phi = |s: f64| autocorrelation_factor(s, a) / self.node_scale();
                let opts = QuadratureOptions { abs_tol: 1e-14, ..QuadratureOptions::default() };
                integrate(|s| Ok(phi(s) * phi(s - shift)), shift - a, a, &opts).map_or(f64::NAN, |e| e.value)
            }
            KernelKind::FlatTop => flat_top(t, a),
        }
    }

    fn node_scale(&self) -> f64 {
        let a = Self::half_width(self.kind, self.c0);
        autocorrelation_factor(0.0, a) / self.node_values[TIME_NODES / 2]
    }

    /// `int theta_h` over the sampled range (trapezoid).
    pub fn mass(&self) -> f64 {
        *self.cumulative.last().expect("samples")
    }

    /// `|int_{-inf}^{lambda} theta_h(l - mu) dl - 1[mu < lambda]|` from the
    /// sampled profile, for `offset = lambda - mu`.
    pub fn step_approximation_error(&self, offset: f64) -> f64 {
        let target = if offset > 0.0 { 1.0 } else { 0.0 };
        let n = self.taus.len();
        let integral = if offset <= self.taus[0] {
            0.0
        } else if offset >= self.taus[n - 1] {
            self.mass()
        } else {
            let k = self.taus.partition_point(|&t| t <= offset) - 1;
            let frac = (offset - self.taus[k]) / (self.taus[k + 1] - self.taus[k]);
            let end = self.values[k] + frac * (self.values[k + 1] - self.values[k]);
            self.cumulative[k] + 0.5 * (self.values[k] + end) * (offset - self.taus[k])
        };
        (integral - target).abs()
    }
}

fn autocorrelation_factor(t: f64, a: f64) -> f64 {
    let u = t / a;
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

fn flat_top(t: f64, support: f64) -> f64 {
    smoothstep((support - t.abs()) / (0.5 * support)).0
}

/// Builds the kernel supported in `(-1/C0, 1/C0)` at scale `h` and samples
/// its transform on `|tau| <= U h`, with `U a = 100` (autocorrelation) or
/// `400` (flat top) for the time half-width `a`.
pub fn tauberian_kernel(kind: KernelKind, c0: f64, h: f64) -> Result<TauberianKernel> {
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(invalid("C0", format!("must be positive, got {c0}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(invalid("h", format!("must be positive, got {h}")));
    }
    let a = TauberianKernel::half_width(kind, c0);
    let step = 2.0 * a / (TIME_NODES - 1) as f64;
    let nodes: Vec<f64> = (0..TIME_NODES).map(|j| -a + j as f64 * step).collect();
    let mut node_values: Vec<f64> = match kind {
        KernelKind::Autocorrelation => nodes.iter().map(|&t| autocorrelation_factor(t, a)).collect(),
        KernelKind::FlatTop => nodes.iter().map(|&t| flat_top(t, a)).collect(),
    };
    if kind == KernelKind::Autocorrelation {
        // theta(0) = int phi^2 = 1
        let norm = (node_values.iter().map(|v| v * v).sum::<f64>() * step).sqrt();
        node_values.iter_mut().for_each(|v| *v /= norm);
    }
    let theta_integral = match kind {
        KernelKind::Autocorrelation => (node_values.iter().sum::<f64>() * step).powi(2),
        KernelKind::FlatTop => node_values.iter().sum::<f64>() * step,
    };
    let (range, du) = match kind {
        KernelKind::Autocorrelation => (100.0 / a, 0.01 / a),
        KernelKind::FlatTop => (400.0 / a, 0.02 / a),
    };
    let half = (range / du).ceil() as usize;
    let mut kernel = TauberianKernel {
        kind,
        c0,
        h,
        taus: Vec::new(),
        values: Vec::new(),
        theta_at_zero: 1.0,
        theta_integral,
        nonnegative: None,
        min_value: 0.0,
        max_value: 0.0,
        nodes,
        node_values,
        node_step: step,
        cumulative: Vec::new(),
    };
    let us: Vec<f64> = (0..=2 * half).map(|k| (k as f64 - half as f64) * du).collect();
    // theta is even, so the transform is too
    let positive: Vec<f64> = us[half..].par_iter().map(|&u| kernel.transform(u) / h).collect();
    kernel.values = (0..=2 * half).map(|k| positive[k.abs_diff(half)]).collect();
    kernel.taus = us.iter().map(|u| u * h).collect();
    kernel.cumulative = std::iter::once(0.0)
        .chain(kernel.values.windows(2).zip(kernel.taus.windows(2)).scan(0.0, |acc, (v, t)| {
            *acc += 0.5 * (v[0] + v[1]) * (t[1] - t[0]);
            Some(*acc)
        }))
        .collect();
    kernel.min_value = kernel.values.iter().copied().fold(f64::INFINITY, f64::min);
    kernel.max_value = kernel.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if kind == KernelKind::Autocorrelation {
        kernel.nonnegative = Some(kernel.min_value >= -1e-12 * kernel.max_value);
    }
    Ok(kernel)
}
