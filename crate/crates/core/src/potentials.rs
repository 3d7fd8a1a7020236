//! Analytic test potentials `V(x, y)` and their derivatives.
//!
//! Every profile is smooth. Gaussian profiles may be truncated by a C^inf
//! cutoff that equals one up to two thirds of the support radius and reaches
//! zero exactly at the radius, so truncated potentials vanish identically
//! outside it.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extents {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Extents {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        Self { x, y }
    }

    /// The square `[-half, half]^2`.
    pub fn square(half: f64) -> Self {
        Self { x: (-half, half), y: (-half, half) }
    }

    pub fn width(&self) -> f64 {
        self.x.1 - self.x.0
    }

    pub fn height(&self) -> f64 {
        self.y.1 - self.y.0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x.0 && x <= self.x.1 && y >= self.y.0 && y <= self.y.1
    }

    pub fn union(&self, other: &Extents) -> Extents {
        Extents {
            x: (self.x.0.min(other.x.0), self.x.1.max(other.x.1)),
            y: (self.y.0.min(other.y.0), self.y.1.max(other.y.1)),
        }
    }

    fn is_valid(&self) -> bool {
        [self.x.0, self.x.1, self.y.0, self.y.1].iter().all(|v| v.is_finite())
            && self.x.1 >= self.x.0
            && self.y.1 >= self.y.0
    }
}

/// One bump: amplitude `A` (energy), width `w` (length), center `(x0, y0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub amplitude: f64,
    pub width: f64,
    pub center: (f64, f64),
}

impl Bump {
    pub fn new(amplitude: f64, width: f64, center: (f64, f64)) -> Self {
        Self { amplitude, width, center }
    }
}

/// Closed-form shape of the potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Zero,
    /// `A exp(-|r - c|^2 / w^2)`.
    GaussianBump(Bump),
    /// Sum of Gaussian bumps, each truncated about its own center.
    SumOfBumps {
        bumps: Vec<Bump>,
    },
    /// `A (1 - |r - c|^2 / R^2)^4` inside radius `R`, zero outside.
    CompactPolynomialBump(Bump),
}

/// Declared constants of `|V| <= C (1+|x|)^(-2-delta) (1+|y|)^(-1-delta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayBound {
    pub c: f64,
    pub delta: f64,
}

impl Default for DecayBound {
    fn default() -> Self {
        Self { c: 10.0, delta: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub profile: Profile,
    /// `None` means unbounded (no truncation of Gaussian profiles).
    pub support_radius: Option<f64>,
    pub decay: DecayBound,
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self { profile: Profile::Zero, support_radius: None, decay: DecayBound::default() }
    }

    /// Untruncated Gaussian bump centered at the origin.
    pub fn gaussian(amplitude: f64, width: f64) -> Self {
        Self {
            profile: Profile::GaussianBump(Bump::new(amplitude, width, (0.0, 0.0))),
            support_radius: None,
            decay: DecayBound::default(),
        }
    }

    pub fn sum_of_bumps(bumps: Vec<Bump>) -> Self {
        Self { profile: Profile::SumOfBumps { bumps }, support_radius: None, decay: DecayBound::default() }
    }

    /// Polynomial bump of the given support radius.
    pub fn compact_polynomial(amplitude: f64, radius: f64) -> Self {
        Self {
            profile: Profile::CompactPolynomialBump(Bump::new(amplitude, radius, (0.0, 0.0))),
            support_radius: Some(radius),
            decay: DecayBound::default(),
        }
    }

    /// The default experiment potential: `0.5 exp(-r^2)` truncated at radius 6.
    pub fn default_bump() -> Self {
        Self::gaussian(0.5, 1.0).truncated(6.0)
    }

    pub fn truncated(mut self, radius: f64) -> Self {
        self.support_radius = Some(radius);
        self
    }

    pub fn centered_at(mut self, x0: f64, y0: f64) -> Self {
        match &mut self.profile {
            Profile::GaussianBump(b) | Profile::CompactPolynomialBump(b) => b.center = (x0, y0),
            Profile::SumOfBumps { bumps } => {
                for b in bumps {
                    b.center = (b.center.0 + x0, b.center.1 + y0);
                }
            }
            Profile::Zero => {}
        }
        self
    }

    pub fn with_decay(mut self, c: f64, delta: f64) -> Self {
        self.decay = DecayBound { c, delta };
        self
    }

    pub fn validate(&self) -> Result<()> {
        let check_bump = |b: &Bump| -> Result<()> {
            if !b.amplitude.is_finite() {
                return Err(invalid("amplitude", format!("must be finite, got {}", b.amplitude)));
            }
            if !(b.width.is_finite() && b.width > 0.0) {
                return Err(invalid("width", format!("must be positive, got {}", b.width)));
            }
            if !(b.center.0.is_finite() && b.center.1.is_finite()) {
                return Err(invalid("center", "must be finite"));
            }
            Ok(())
        };
        match &self.profile {
            Profile::Zero => {}
            Profile::GaussianBump(b) | Profile::CompactPolynomialBump(b) => check_bump(b)?,
            Profile::SumOfBumps { bumps } => {
                if bumps.is_empty() {
                    return Err(invalid("bumps", "sum-of-bumps needs at least one bump"));
                }
                bumps.iter().try_for_each(check_bump)?;
            }
        }
        if let Some(r) = self.support_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid("support_radius", format!("must be positive, got {r}")));
            }
        }
        if !(self.decay.c > 0.0 && self.decay.c.is_finite()) {
            return Err(invalid("decay_c", "must be positive"));
        }
        if !(self.decay.delta > 0.0 && self.decay.delta.is_finite()) {
            return Err(invalid("decay_delta", "must be positive"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        match &self.profile {
            Profile::Zero => true,
            Profile::GaussianBump(b) | Profile::CompactPolynomialBump(b) => b.amplitude == 0.0,
            Profile::SumOfBumps { bumps } => bumps.iter().all(|b| b.amplitude == 0.0),
        }
    }

    /// True when the potential vanishes identically outside a finite radius.
    pub fn is_compact(&self) -> bool {
        match self.profile {
            Profile::Zero | Profile::CompactPolynomialBump(_) => true,
            _ => self.support_radius.is_some(),
        }
    }

    fn bumps(&self) -> &[Bump] {
        match &self.profile {
            Profile::Zero => &[],
            Profile::GaussianBump(b) | Profile::CompactPolynomialBump(b) => std::slice::from_ref(b),
            Profile::SumOfBumps { bumps } => bumps,
        }
    }

    fn polynomial_radius(&self, b: &Bump) -> f64 {
        self.support_radius.unwrap_or(b.width)
    }

    /// `V(x, y)`.
    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.gradient_and_value(x, y).0
    }

    /// `dV/dx`.
    pub fn dx(&self, x: f64, y: f64) -> f64 {
        self.gradient_and_value(x, y).1
    }

    /// `dV/dy`.
    pub fn dy(&self, x: f64, y: f64) -> f64 {
        self.gradient_and_value(x, y).2
    }

    /// `(V, dV/dx, dV/dy)` at one point.
    pub fn gradient_and_value(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let poly = matches!(self.profile, Profile::CompactPolynomialBump(_));
        let mut acc = (0.0, 0.0, 0.0);
        for b in self.bumps() {
            let (dx, dy) = (x - b.center.0, y - b.center.1);
            let rho2 = dx * dx + dy * dy;
            let (v, dv_drho2) = if poly {
                let r = self.polynomial_radius(b);
                if rho2 >= r * r {
                    continue;
                }
                let u = 1.0 - rho2 / (r * r);
                let u3 = u * u * u;
                (b.amplitude * u3 * u, -4.0 * b.amplitude * u3 / (r * r))
            } else {
                let w2 = b.width * b.width;
                let g = b.amplitude * (-rho2 / w2).exp();
                match self.support_radius {
                    None => (g, -g / w2),
                    Some(r) => {
                        if rho2 >= r * r {
                            continue;
                        }
                        let rho = rho2.sqrt();
                        let (chi, dchi) = cutoff(rho, r);
                        if chi == 0.0 {
                            continue;
                        }
                        // d(chi)/d(rho^2) = chi'(rho) / (2 rho)
                        let dchi_drho2 = if rho > 0.0 { dchi / (2.0 * rho) } else { 0.0 };
                        (g * chi, -g / w2 * chi + g * dchi_drho2)
                    }
                }
            };
            acc.0 += v;
            acc.1 += 2.0 * dx * dv_drho2;
            acc.2 += 2.0 * dy * dv_drho2;
        }
        acc
    }

    /// Radius (about each center) beyond which the potential is zero, or
    /// negligible below `1e-17 A` for untruncated Gaussians.
    pub fn effective_radius(&self) -> f64 {
        match &self.profile {
            Profile::Zero => 0.0,
            Profile::CompactPolynomialBump(b) => self.polynomial_radius(b),
            Profile::GaussianBump(_) | Profile::SumOfBumps { .. } => match self.support_radius {
                Some(r) => r,
                None => {
                    let w = self.bumps().iter().map(|b| b.width).fold(0.0, f64::max);
                    w * (17.0 * std::f64::consts::LN_10).sqrt()
                }
            },
        }
    }

    /// Bounding box of the (effective) support, `None` for the zero potential.
    pub fn support_extents(&self) -> Option<Extents> {
        let r = self.effective_radius();
        self.bumps()
            .iter()
            .filter(|b| b.amplitude != 0.0)
            .map(|b| Extents::new((b.center.0 - r, b.center.0 + r), (b.center.1 - r, b.center.1 + r)))
            .reduce(|a, b| a.union(&b))
    }

    /// Upper bound on `|grad V|` over the plane.
    pub fn gradient_bound(&self) -> f64 {
        let poly = matches!(self.profile, Profile::CompactPolynomialBump(_));
        self.bumps()
            .iter()
            .map(|b| {
                let a = b.amplitude.abs();
                if poly {
                    // max_rho 8 A rho / R^2 (1 - rho^2/R^2)^3 <= 8 A / R
                    8.0 * a / self.polynomial_radius(b)
                } else {
                    let gauss = a * std::f64::consts::SQRT_2 * (-0.5f64).exp() / b.width;
                    match self.support_radius {
                        None => gauss,
                        Some(r) => {
                            let r0 = CUTOFF_START * r;
                            // |grad(g chi)| <= |grad g| + g(r0) max|chi'|
                            gauss + a * (-(r0 * r0) / (b.width * b.width)).exp() * SMOOTHSTEP_SLOPE_MAX / (r - r0)
                        }
                    }
                }
            })
            .sum()
    }
}

const CUTOFF_START: f64 = 2.0 / 3.0;
// max of d/dt smoothstep(t) on [0, 1] is 2, attained at t = 1/2.
const SMOOTHSTEP_SLOPE_MAX: f64 = 2.0;

/// C^inf step from 0 (t <= 0) to 1 (t >= 1) and its derivative.
pub(crate) fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    let s = a + b;
    let slope = a * b * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / (s * s);
    (a / s, slope)
}

/// Radial cutoff equal to 1 for `rho <= 2R/3` and 0 for `rho >= R`.
fn cutoff(rho: f64, radius: f64) -> (f64, f64) {
    if rho >= radius {
        return (0.0, 0.0);
    }
    let r0 = CUTOFF_START * radius;
    let span = radius - r0;
    let (s, ds) = smoothstep((rho - r0) / span);
    (1.0 - s, -ds / span)
}

pub fn eval_potential(spec: &PotentialSpec, x: f64, y: f64) -> f64 {
    spec.value(x, y)
}

pub fn eval_dx_potential(spec: &PotentialSpec, x: f64, y: f64) -> f64 {
    spec.dx(x, y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub ok: bool,
    pub worst_ratio: f64,
    pub worst_point: (f64, f64),
}

/// Samples the declared decay bound on a uniform lattice of about
/// `sample_count` points covering `extents`.
pub fn validate_decay(spec: &PotentialSpec, sample_count: usize, extents: &Extents) -> Result<DecayReport> {
    if sample_count == 0 {
        return Err(invalid("sample_count", "must be at least 1"));
    }
    if !extents.is_valid() {
        return Err(invalid("extents", "bounds must be finite and ordered"));
    }
    let side = (sample_count as f64).sqrt().ceil() as usize;
    let coord = |lo: f64, hi: f64, i: usize| {
        if side == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (side - 1) as f64
        }
    };
    let DecayBound { c, delta } = spec.decay;
    let mut worst = (0.0, (coord(extents.x.0, extents.x.1, 0), coord(extents.y.0, extents.y.1, 0)));
    for i in 0..side {
        let x = coord(extents.x.0, extents.x.1, i);
        let wx = (1.0 + x.abs()).powf(2.0 + delta);
        for j in 0..side {
            let y = coord(extents.y.0, extents.y.1, j);
            let ratio = spec.value(x, y).abs() * wx * (1.0 + y.abs()).powf(1.0 + delta) / c;
            if ratio > worst.0 {
                worst = (ratio, (x, y));
            }
        }
    }
    Ok(DecayReport { ok: worst.0 <= 1.0, worst_ratio: worst.0, worst_point: worst.1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn centered_difference(spec: &PotentialSpec, x: f64, y: f64, step: f64) -> f64 {
        (spec.value(x + step, y) - spec.value(x - step, y)) / (2.0 * step)
    }

    #[test]
    fn zero_potential_is_zero_everywhere() {
        let z = PotentialSpec::zero();
        assert_eq!(eval_potential(&z, 3.2, -1.0), 0.0);
        assert_eq!(eval_dx_potential(&z, 0.3, 7.0), 0.0);
    }

    #[test]
    fn gaussian_closed_form_values() {
        let g = PotentialSpec::gaussian(1.0, 1.0);
        assert_eq!(eval_potential(&g, 0.0, 0.0), 1.0);
        assert!((eval_potential(&g, 1.0, 0.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(eval_dx_potential(&g, 0.0, 0.0), 0.0);
        assert!((eval_dx_potential(&g, 1.0, 0.0) + 0.735_758_882_342_884_6).abs() < 1e-15);
    }

    #[test]
    fn truncation_leaves_the_core_untouched() {
        let g = PotentialSpec::gaussian(1.0, 1.0);
        let t = g.clone().truncated(6.0);
        for &(x, y) in &[(0.0, 0.0), (1.0, 0.0), (-2.5, 2.0), (0.3, -3.9)] {
            assert_eq!(g.value(x, y), t.value(x, y));
            assert_eq!(g.dx(x, y), t.dx(x, y));
        }
    }

    #[test]
    fn compact_kinds_vanish_exactly_outside_radius() {
        let specs = [
            PotentialSpec::gaussian(2.0, 1.0).truncated(3.0).centered_at(0.5, -1.0),
            PotentialSpec::compact_polynomial(1.5, 2.0).centered_at(0.5, -1.0),
        ];
        for spec in &specs {
            let r = spec.effective_radius();
            for k in 0..64 {
                let phi = k as f64 * std::f64::consts::TAU / 64.0;
                for scale in [1.0, 1.0 + 1e-12, 1.5, 4.0] {
                    let (x, y) = (0.5 + r * scale * phi.cos(), -1.0 + r * scale * phi.sin());
                    if (x - 0.5) * (x - 0.5) + (y + 1.0) * (y + 1.0) >= r * r {
                        assert_eq!(spec.value(x, y), 0.0);
                        assert_eq!(spec.dx(x, y), 0.0);
                    }
                }
            }
            assert!(spec.value(0.5, -1.0) > 0.0);
        }
    }

    #[test]
    fn gradient_bound_dominates_sampled_gradient() {
        let specs = [
            PotentialSpec::default_bump(),
            PotentialSpec::gaussian(-3.0, 0.5).truncated(2.0),
            PotentialSpec::compact_polynomial(2.0, 1.5),
            PotentialSpec::sum_of_bumps(vec![Bump::new(1.0, 1.0, (1.0, 0.0)), Bump::new(-0.5, 0.7, (-1.0, 1.0))]),
        ];
        for spec in &specs {
            let bound = spec.gradient_bound();
            let mut sup: f64 = 0.0;
            for i in 0..201 {
                for j in 0..201 {
                    let (x, y) = (-7.0 + 0.07 * i as f64, -7.0 + 0.07 * j as f64);
                    let (_, gx, gy) = spec.gradient_and_value(x, y);
                    sup = sup.max(gx.hypot(gy));
                }
            }
            assert!(sup <= bound, "{sup} > {bound} for {spec:?}");
        }
    }

    #[test]
    fn gaussian_dx_sup_norm_matches_closed_form() {
        // max |dV/dx| = A sqrt(2) e^{-1/2} / w, attained at x = w / sqrt(2)
        let spec = PotentialSpec::gaussian(0.5, 1.0);
        let at = spec.dx(-std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert!((at - 0.5 * std::f64::consts::SQRT_2 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn decay_of_zero_potential() {
        let r = validate_decay(&PotentialSpec::zero(), 100, &Extents::square(5.0)).unwrap();
        assert!(r.ok);
        assert_eq!(r.worst_ratio, 0.0);
    }

    #[test]
    fn decay_of_unit_gaussian_is_within_declared_bound() {
        let spec = PotentialSpec::gaussian(1.0, 1.0).with_decay(10.0, 0.5);
        let r = validate_decay(&spec, 10_000, &Extents::square(10.0)).unwrap();
        assert!(r.ok, "{r:?}");
        // independent brute force over a finer lattice
        let mut brute: f64 = 0.0;
        for i in 0..=2000 {
            for j in 0..=200 {
                let (x, y) = (-10.0 + 0.01 * i as f64, 0.02 * j as f64);
                brute = brute.max((-(x * x + y * y)).exp() * (1.0 + x.abs()).powf(2.5) * (1.0 + y).powf(1.5) / 10.0);
            }
        }
        assert!(r.worst_ratio <= brute + 1e-12 && r.worst_ratio > 0.9 * brute);
    }

    #[test]
    fn decay_of_wide_tall_gaussian_fails() {
        let spec = PotentialSpec::gaussian(100.0, 5.0).with_decay(1.0, 0.5);
        let r = validate_decay(&spec, 10_000, &Extents::square(10.0)).unwrap();
        assert!(!r.ok);
        // stationary point of exp(-r^2/25)(1+x)^{5/2}(1+y)^{3/2}: 2x(1+x) = 62.5, 2y(1+y) = 37.5
        let xs = (-1.0 + (1.0f64 + 125.0).sqrt()) / 2.0;
        let ys = (-1.0 + (1.0f64 + 75.0).sqrt()) / 2.0;
        assert!((r.worst_point.0.abs() - xs).abs() < 0.25, "{r:?}");
        assert!((r.worst_point.1.abs() - ys).abs() < 0.25, "{r:?}");
        assert!(r.worst_ratio > 1.0e4);
    }

    #[test]
    fn decay_ratio_decreases_on_outer_strips() {
        let spec = PotentialSpec::gaussian(1.0, 1.0).with_decay(10.0, 0.5);
        let strip = |s: f64| validate_decay(&spec, 2_500, &Extents::new((s, s + 1.0), (-s, s))).unwrap().worst_ratio;
        let ratios: Vec<f64> = [3.0, 4.0, 5.0, 6.0].iter().map(|&s| strip(s)).collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]), "{ratios:?}");
    }

    #[test]
    fn rejects_empty_sample_and_bad_parameters() {
        assert!(validate_decay(&PotentialSpec::zero(), 0, &Extents::square(1.0)).is_err());
        assert!(PotentialSpec::gaussian(1.0, 0.0).validate().is_err());
        assert!(PotentialSpec::gaussian(1.0, 1.0).truncated(-1.0).validate().is_err());
        assert!(PotentialSpec::sum_of_bumps(vec![]).validate().is_err());
        assert!(PotentialSpec::default_bump().validate().is_ok());
    }

    fn any_spec() -> impl Strategy<Value = PotentialSpec> {
        prop_oneof![
            Just(PotentialSpec::default_bump()),
            Just(PotentialSpec::gaussian(1.0, 1.0)),
            Just(PotentialSpec::gaussian(-2.0, 0.7).truncated(2.5).centered_at(0.3, -0.2)),
            Just(PotentialSpec::compact_polynomial(1.2, 2.0)),
            Just(
                PotentialSpec::sum_of_bumps(vec![Bump::new(1.0, 1.0, (1.0, 0.0)), Bump::new(-0.5, 0.7, (-1.0, 1.0)),])
                    .truncated(4.0)
            ),
        ]
    }

    proptest! {
        #[test]
        fn dx_matches_centered_difference(spec in any_spec(), x in -6.0f64..6.0, y in -6.0f64..6.0) {
            let w = match &spec.profile {
                Profile::GaussianBump(b) | Profile::CompactPolynomialBump(b) => b.width,
                Profile::SumOfBumps { bumps } => bumps[0].width,
                Profile::Zero => 1.0,
            };
            let analytic = spec.dx(x, y);
            let fd = centered_difference(&spec, x, y, 1e-5 * w);
            prop_assert!((analytic - fd).abs() / (1.0 + analytic.abs()) <= 1e-6);
        }

        #[test]
        fn values_are_finite(spec in any_spec(), x in -1e6f64..1e6, y in -1e6f64..1e6) {
            let (v, gx, gy) = spec.gradient_and_value(x, y);
            prop_assert!(v.is_finite() && gx.is_finite() && gy.is_finite());
        }
    }
}
