//! Functional calculus and traces on discretized operators.
//!
//! Dense eigendecomposition provides eigenvectors up to a configurable size.
//! Eigenvalue-only spectra use banded LAPACK solvers, so trace differences
//! are available far beyond the dense limit. For large grids the weighted
//! trace `tr(W g(H))` is obtained without eigenvectors from
//! `d/dt tr G(H + tW) = tr(W G'(H))` with `G` a primitive of `g`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lattice::{DiscreteOperator, Grid2D, OperatorParams, OperatorTag, ReflectionBasis};
use crate::linalg;
use crate::sparse::CsrMatrix;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / SQRT_2PI
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// `(2 pi s^2)^(-1/2) exp(-(t - c)^2 / 2 s^2)`.
    GaussianWindow,
    /// `exp(1 - 1/(1 - u^2))` for `u = (t - c)/s` in `(-1, 1)`, zero outside.
    BumpWindow,
    /// The distribution function of the Gaussian window, `Phi((t - c)/s)`.
    PrimitiveOfGaussian,
}

/// Energy window `f` used in traces `tr f(H)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingFunction {
    pub kind: WindowKind,
    pub center: f64,
    pub width: f64,
}

impl SmoothingFunction {
    pub fn gaussian(center: f64, sigma: f64) -> Result<Self> {
        Self::new(WindowKind::GaussianWindow, center, sigma)
    }

    /// Bump supported on `[a, b]`.
    pub fn bump(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(invalid("support", format!("need a < b, got [{a}, {b}]")));
        }
        Self::new(WindowKind::BumpWindow, 0.5 * (a + b), 0.5 * (b - a))
    }

    pub fn primitive_of_gaussian(center: f64, sigma: f64) -> Result<Self> {
        Self::new(WindowKind::PrimitiveOfGaussian, center, sigma)
    }

    pub fn new(kind: WindowKind, center: f64, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(invalid("sigma", format!("width must be positive, got {width}")));
        }
        if !center.is_finite() {
            return Err(invalid("center", "must be finite"));
        }
        Ok(Self { kind, center, width })
    }

    /// Closed support interval, `None` when unbounded.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self.kind {
            WindowKind::BumpWindow => Some((self.center - self.width, self.center + self.width)),
            _ => None,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let u = (s - self.center) / self.width;
        match self.kind {
            WindowKind::GaussianWindow => normal_pdf(u) / self.width,
            WindowKind::BumpWindow => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - u * u)).exp()
                }
            }
            WindowKind::PrimitiveOfGaussian => normal_cdf(u),
        }
    }
}

/// Anything that can be applied to a spectrum.
pub trait SpectralFunction: Sync {
    fn apply(&self, s: f64) -> f64;
}

impl SpectralFunction for SmoothingFunction {
    fn apply(&self, s: f64) -> f64 {
        self.eval(s)
    }
}

impl<F: Fn(f64) -> f64 + Sync> SpectralFunction for F {
    fn apply(&self, s: f64) -> f64 {
        self(s)
    }
}

/// Eigenvalues in ascending order, optionally with orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub grid: Grid2D,
    pub params: Option<OperatorParams>,
    pub tag: OperatorTag,
    pub values: Vec<f64>,
    /// Column-major, column `i` belongs to `values[i]`.
    vectors: Option<Vec<Complex64>>,
}

impl Eigensystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn has_vectors(&self) -> bool {
        self.vectors.is_some()
    }

    pub fn vector(&self, i: usize) -> Result<&[Complex64]> {
        let n = self.dim();
        self.vectors.as_ref().map(|v| &v[i * n..(i + 1) * n]).ok_or(Error::MissingEigenvectors)
    }

    /// Eigenvalue-only view.
    pub fn from_values(grid: Grid2D, params: Option<OperatorParams>, tag: OperatorTag, values: Vec<f64>) -> Self {
        Self { grid, params, tag, values, vectors: None }
    }

    /// `sum_i f(lambda_i)`.
    pub fn trace_of(&self, f: &impl SpectralFunction) -> f64 {
        kahan_sum(self.values.iter().map(|&l| f.apply(l)))
    }

    /// `(v_i^H W v_i)` for every eigenpair.
    pub fn diagonal_elements(&self, w: &CsrMatrix) -> Result<Vec<Complex64>> {
        if w.dim() != self.dim() {
            return Err(Error::DimensionMismatch { left: w.dim(), right: self.dim() });
        }
        let n = self.dim();
        let vecs = self.vectors.as_ref().ok_or(Error::MissingEigenvectors)?;
        Ok(vecs
            .par_chunks(n.max(1))
            .map(|v| (0..n).map(|r| v[r].conj() * w.row(r).map(|(c, x)| x * v[c]).sum::<Complex64>()).sum())
            .collect())
    }
}

/// Compensated summation; traces add thousands of terms of mixed size.
pub(crate) fn kahan_sum(it: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in it {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    /// Largest dimension accepted for dense eigendecomposition.
    pub dense_limit: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { dense_limit: 4096 }
    }
}

fn check_hermitian(op: &DiscreteOperator) -> Result<()> {
    let defect = op.hermitian_defect();
    let tol = if op.tag == OperatorTag::Function { 1e-12 * op.matrix.max_abs() } else { 0.0 };
    if defect > tol {
        return Err(Error::NotHermitian { tag: op.tag.to_string(), defect });
    }
    Ok(())
}

/// Full eigendecomposition with the default dense limit.
pub fn eigendecompose(op: &DiscreteOperator) -> Result<Eigensystem> {
    eigendecompose_with(op, &EigenOptions::default())
}

/// Full eigendecomposition. Each eigenvector is scaled so that its first
/// component of non-negligible modulus is real and positive.
pub fn eigendecompose_with(op: &DiscreteOperator, opts: &EigenOptions) -> Result<Eigensystem> {
    check_hermitian(op)?;
    let n = op.dim();
    if n > opts.dense_limit {
        return Err(Error::DenseLimitExceeded { dim: n, limit: opts.dense_limit });
    }
    let basis = ReflectionBasis::new(&op.grid);
    let (values, mut vectors) = match basis.real_form(&op.matrix) {
        Some(real) => {
            let (w, z) = linalg::real_symmetric_eig(real.dense(), n, true)?;
            let z = z.expect("vectors requested");
            let lifted: Vec<Complex64> = z.par_chunks(n.max(1)).flat_map_iter(|col| basis.lift(col)).collect();
            (w, lifted)
        }
        None => {
            let (w, z) = linalg::hermitian_eig(op.matrix.to_dense(), n, true)?;
            (w, z.expect("vectors requested"))
        }
    };
    vectors.par_chunks_mut(n.max(1)).for_each(fix_phase);
    let es = Eigensystem { grid: op.grid, params: op.params, tag: op.tag, values, vectors: Some(vectors) };
    verify(op, &es)?;
    Ok(es)
}

/// Rejects eigenpairs with residual above `1e-8 ||H||` or norm off by more
/// than `1e-8`. Costs `O(n nnz)`, small next to the decomposition.
fn verify(op: &DiscreteOperator, es: &Eigensystem) -> Result<()> {
    let n = es.dim();
    let scale = op.matrix.norm_inf().max(f64::MIN_POSITIVE);
    let vecs = es.vectors.as_ref().expect("verified systems carry vectors");
    let worst = vecs
        .par_chunks(n.max(1))
        .zip(es.values.par_iter())
        .map(|(v, &l)| {
            let hv = op.matrix.matvec(v);
            let res = hv.iter().zip(v).map(|(a, b)| (a - b * l).norm_sqr()).sum::<f64>().sqrt() / scale;
            let norm = (v.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs();
            res.max(norm)
        })
        .reduce(|| 0.0, f64::max);
    if worst > 1e-8 {
        return Err(Error::InaccurateEigensolver { defect: worst });
    }
    Ok(())
}

fn fix_phase(v: &mut [Complex64]) {
    let max = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(&lead) = v.iter().find(|z| z.norm() > 1e-8 * max) {
        let phase = lead.conj() / lead.norm();
        v.iter_mut().for_each(|z| *z *= phase);
    }
}

/// Eigenvalues only, through banded solvers; no dense limit applies.
pub fn spectrum(op: &DiscreteOperator) -> Result<Eigensystem> {
    check_hermitian(op)?;
    let n = op.dim();
    let values = match ReflectionBasis::new(&op.grid).real_form(&op.matrix) {
        Some(real) => {
            let (ab, kd) = real.band();
            linalg::real_band_eigenvalues_two_stage(ab, n, kd)?
        }
        None => {
            let (ab, kd) = op.hermitian_band();
            linalg::hermitian_band_eigenvalues(ab, n, kd)?
        }
    };
    Ok(Eigensystem::from_values(op.grid, op.params, op.tag, values))
}

/// Materializes `sum_i f(lambda_i) v_i v_i^H`.
pub fn apply_function(es: &Eigensystem, f: &impl SpectralFunction) -> Result<DiscreteOperator> {
    let n = es.dim();
    let vecs = es.vectors.as_ref().ok_or(Error::MissingEigenvectors)?;
    let weights: Vec<f64> = es.values.iter().map(|&l| f.apply(l)).collect();
    let mut dense = vec![Complex64::default(); n * n];
    dense.par_chunks_mut(n.max(1)).enumerate().for_each(|(c, col)| {
        for (i, &wt) in weights.iter().enumerate() {
            if wt == 0.0 {
                continue;
            }
            let v = &vecs[i * n..(i + 1) * n];
            let s = v[c].conj() * wt;
            for (r, out) in col.iter_mut().enumerate() {
                *out += v[r] * s;
            }
        }
    });
    // exact Hermitian symmetry by averaging
    for c in 0..n {
        for r in 0..c {
            let avg = 0.5 * (dense[r + c * n] + dense[c + r * n].conj());
            dense[r + c * n] = avg;
            dense[c + r * n] = avg.conj();
        }
        dense[c + c * n] = Complex64::new(dense[c + c * n].re, 0.0);
    }
    DiscreteOperator::new(es.grid, es.params, OperatorTag::Function, CsrMatrix::from_dense(n, &dense))
}

/// `tr f(H) - tr f(H0)` from the two spectra.
pub fn trace_diff(f: &impl SpectralFunction, es_h: &Eigensystem, es_h0: &Eigensystem) -> Result<f64> {
    if es_h.dim() != es_h0.dim() {
        return Err(Error::DimensionMismatch { left: es_h.dim(), right: es_h0.dim() });
    }
    // pairing sorted eigenvalues keeps every summand small
    Ok(kahan_sum(es_h.values.iter().zip(&es_h0.values).map(|(&a, &b)| f.apply(a) - f.apply(b))))
}

/// `tr(W f(H)) = sum_i f(lambda_i) v_i^H W v_i`; needs eigenvectors.
pub fn weighted_trace(w: &DiscreteOperator, f: &impl SpectralFunction, es: &Eigensystem) -> Result<Complex64> {
    let diag = es.diagonal_elements(&w.matrix)?;
    let re = kahan_sum(diag.iter().zip(&es.values).map(|(d, &l)| f.apply(l) * d.re));
    let im = kahan_sum(diag.iter().zip(&es.values).map(|(d, &l)| f.apply(l) * d.im));
    Ok(Complex64::new(re, im))
}

/// `tr(A B)` of two materialized operators.
pub fn trace_product(a: &DiscreteOperator, b: &DiscreteOperator) -> Result<Complex64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    Ok((0..a.dim()).map(|i| a.matrix.row(i).map(|(j, v)| v * b.matrix.get(j, i)).sum::<Complex64>()).sum())
}

/// Settings of the eigenvector-free weighted trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbativeOptions {
    /// Perturbation step as a fraction of `sigma / max|W|`.
    pub step_fraction: f64,
}

impl Default for PerturbativeOptions {
    fn default() -> Self {
        Self { step_fraction: 0.05 }
    }
}

/// `tr(W g_sigma(H - lambda))` for every `lambda` in `centers`, where `W` is
/// a real diagonal weight and `g_sigma` the Gaussian window.
///
/// With `T(t) = sum Phi((lambda - mu_i(t)) / sigma)` over the eigenvalues of
/// `H + tW`, `T'(0) = -tr(W g_sigma(H - lambda))`. The derivative is taken by
/// central differences at steps `t` and `2t` combined by Richardson
/// extrapolation, so the truncation error is `O(t^4)`.
pub fn perturbative_weighted_trace(
    h: &DiscreteOperator,
    weight: &[f64],
    centers: &[f64],
    sigma: f64,
    opts: &PerturbativeOptions,
) -> Result<Vec<f64>> {
    if weight.len() != h.dim() {
        return Err(Error::DimensionMismatch { left: weight.len(), right: h.dim() });
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    let wmax = weight.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if wmax == 0.0 {
        return Ok(vec![0.0; centers.len()]);
    }
    let t = opts.step_fraction * sigma / wmax;
    let w_op = CsrMatrix::from_real_diagonal(weight);
    let shifted = |s: f64| -> Result<Vec<f64>> {
        let m = h.matrix.add_scaled(&w_op, Complex64::new(s, 0.0))?;
        let op = DiscreteOperator { matrix: m, ..h.clone() };
        Ok(spectrum(&op)?.values)
    };
    let (p1, m1, p2, m2) = (shifted(t)?, shifted(-t)?, shifted(2.0 * t)?, shifted(-2.0 * t)?);
    Ok(centers
        .iter()
        .map(|&lambda| {
            let diff = |a: &[f64], b: &[f64]| {
                kahan_sum(
                    a.iter().zip(b).map(|(&x, &y)| normal_cdf((lambda - x) / sigma) - normal_cdf((lambda - y) / sigma)),
                )
            };
            let d1 = diff(&p1, &m1) / (2.0 * t);
            let d2 = diff(&p2, &m2) / (4.0 * t);
            -(4.0 * d1 - d2) / 3.0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_h, build_h0, build_multiplication};
    use crate::potentials::PotentialSpec;
    use proptest::prelude::*;

    fn small_grid() -> Grid2D {
        Grid2D::new(3.0, 2.5, 9, 8).unwrap()
    }

    fn diag_op(d: &[f64]) -> DiscreteOperator {
        let g = Grid2D { lx: 1.0, ly: 1.0, nx: d.len(), ny: 3 };
        let mut full = Vec::new();
        for &x in d {
            full.extend([x, x + 10.0, x + 20.0]);
        }
        DiscreteOperator::new(g, None, OperatorTag::Multiplication, CsrMatrix::from_real_diagonal(&full)).unwrap()
    }

    fn max_residual(op: &DiscreteOperator, es: &Eigensystem) -> f64 {
        (0..es.dim())
            .map(|i| {
                let v = es.vector(i).unwrap();
                let hv = op.matrix.matvec(v);
                hv.iter().zip(v).map(|(a, b)| (a - b * es.values[i]).norm_sqr()).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    fn max_unitarity_defect(es: &Eigensystem) -> f64 {
        let n = es.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d: Complex64 =
                    es.vector(i).unwrap().iter().zip(es.vector(j).unwrap()).map(|(a, b)| a.conj() * b).sum();
                worst = worst.max((d - if i == j { 1.0 } else { 0.0 }).norm());
            }
        }
        worst
    }

    #[test]
    fn windows_evaluate_as_documented() {
        let g = SmoothingFunction::gaussian(1.0, 0.5).unwrap();
        assert!((g.eval(1.0) - 1.0 / (0.5 * SQRT_2PI)).abs() < 1e-15);
        assert!(g.eval(40.0) >= 0.0 && g.eval(4.0) > 0.0);
        let b = SmoothingFunction::bump(-1.0, 3.0).unwrap();
        assert_eq!(b.support(), Some((-1.0, 3.0)));
        assert_eq!(b.eval(-1.0), 0.0);
        assert_eq!(b.eval(3.5), 0.0);
        assert_eq!(b.eval(1.0), 1.0);
        let p = SmoothingFunction::primitive_of_gaussian(0.0, 2.0).unwrap();
        assert_eq!(p.eval(0.0), 0.5);
        assert!((p.eval(2.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!(SmoothingFunction::gaussian(0.0, 0.0).is_err());
        assert!(SmoothingFunction::bump(1.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_window_integrates_to_one() {
        let g = SmoothingFunction::gaussian(0.3, 0.7).unwrap();
        let step = 1e-3;
        let total: f64 = (-10_000..=10_000).map(|k| g.eval(0.3 + k as f64 * step) * step).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_by_one_and_diagonal_eigensystems() {
        let one = DiscreteOperator::new(
            Grid2D { lx: 1.0, ly: 1.0, nx: 1, ny: 1 },
            None,
            OperatorTag::Multiplication,
            CsrMatrix::from_real_diagonal(&[2.5]),
        )
        .unwrap();
        let es = eigendecompose(&one).unwrap();
        assert_eq!(es.values, vec![2.5]);
        assert_eq!(es.vector(0).unwrap(), &[Complex64::new(1.0, 0.0)]);

        let op = diag_op(&[1.0, 2.0, 3.0]);
        let es = eigendecompose(&op).unwrap();
        assert_eq!(&es.values[..3], &[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let v = es.vector(i).unwrap();
            let k = v.iter().position(|z| z.norm() > 0.5).unwrap();
            assert_eq!(v[k], Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn three_by_three_laplacian_has_chebyshev_spectrum() {
        let g = Grid2D::square(2.0, 3).unwrap();
        let op = build_h0(&g, &OperatorParams::new(0.0, 0.0, 1.0).unwrap()).unwrap();
        let es = eigendecompose(&op).unwrap();
        let axis = [2.0 - 2f64.sqrt(), 2.0, 2.0 + 2f64.sqrt()];
        let mut want: Vec<f64> = axis.iter().flat_map(|a| axis.iter().map(move |b| a + b)).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in es.values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn dense_eigensystem_is_accurate_with_and_without_reflection_form() {
        let g = small_grid();
        let params = OperatorParams::new(1.0, 1.0, 0.8).unwrap();
        let even = build_h(&g, &params, &PotentialSpec::default_bump()).unwrap();
        let odd = build_h(&g, &params, &PotentialSpec::gaussian(1.0, 1.0).centered_at(0.4, 0.7)).unwrap();
        for op in [&even, &odd] {
            let es = eigendecompose(op).unwrap();
            let norm = op.matrix.norm_inf();
            assert!(max_residual(op, &es) <= 1e-8 * norm);
            assert!(max_unitarity_defect(&es) <= 1e-8);
            let band = spectrum(op).unwrap();
            for (a, b) in es.values.iter().zip(&band.values) {
                assert!((a - b).abs() < 1e-10 * norm);
            }
        }
    }

    #[test]
    fn dense_limit_and_hermiticity_are_enforced() {
        let g = small_grid();
        let op = build_h0(&g, &OperatorParams::unit()).unwrap();
        let err = eigendecompose_with(&op, &EigenOptions { dense_limit: 10 }).unwrap_err();
        assert_eq!(err, Error::DenseLimitExceeded { dim: 72, limit: 10 });
        let shift = crate::lattice::build_shift(&g, 1).unwrap();
        assert!(matches!(eigendecompose(&shift), Err(Error::NotHermitian { .. })));
        assert!(matches!(spectrum(&shift), Err(Error::NotHermitian { .. })));
        let es = spectrum(&op).unwrap();
        assert!(matches!(apply_function(&es, &|s: f64| s), Err(Error::MissingEigenvectors)));
    }

    #[test]
    fn apply_function_spectral_mapping() {
        let op = diag_op(&[1.0, 2.0]);
        let es = eigendecompose(&op).unwrap();
        let id = apply_function(&es, &|s: f64| s).unwrap();
        assert!(id.matrix.sub(&op.matrix).unwrap().max_abs() < 1e-14);

        let g = small_grid();
        let h = build_h(&g, &OperatorParams::unit(), &PotentialSpec::default_bump()).unwrap();
        let es = eigendecompose(&h).unwrap();
        let far = SmoothingFunction::gaussian(1e4, 0.5).unwrap();
        assert!(apply_function(&es, &far).unwrap().matrix.max_abs() < 1e-14);

        let f = |s: f64| (s * 0.1).sin();
        let fh = apply_function(&es, &f).unwrap();
        let mapped = eigendecompose(&fh).unwrap();
        let mut want: Vec<f64> = es.values.iter().map(|&l| f(l)).collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in mapped.values.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_on_isolated_eigenvalue_is_a_projector() {
        let op = diag_op(&[0.0, 5.0]);
        let es = eigendecompose(&op).unwrap();
        let sigma = 0.05;
        let f = SmoothingFunction::gaussian(5.0, sigma).unwrap();
        let fh = apply_function(&es, &f).unwrap();
        let peak = 1.0 / (sigma * SQRT_2PI);
        let idx = 3; // node holding the value 5.0
        assert!((fh.matrix.get(idx, idx).re - peak).abs() < 1e-12 * peak);
        assert_eq!(fh.matrix.nnz(), 1);
    }

    #[test]
    fn trace_diff_of_identical_and_shifted_operators() {
        let g = small_grid();
        let h0 = build_h0(&g, &OperatorParams::unit()).unwrap();
        let es = spectrum(&h0).unwrap();
        let f = SmoothingFunction::gaussian(0.0, 1.0).unwrap();
        assert_eq!(trace_diff(&f, &es, &es).unwrap(), 0.0);
        let c = 0.3;
        let id = build_multiplication(&g, |_, _| 1.0).unwrap();
        let shifted = spectrum(&h0.perturbed(&id, c).unwrap()).unwrap();
        let oracle: f64 = es.values.iter().map(|&l| f.eval(l + c) - f.eval(l)).sum();
        assert!((trace_diff(&f, &shifted, &es).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn weighted_trace_trivial_weights_and_cyclicity() {
        let g = small_grid();
        let spec = PotentialSpec::default_bump();
        let h = build_h(&g, &OperatorParams::unit(), &spec).unwrap();
        let es = eigendecompose(&h).unwrap();
        let f = SmoothingFunction::gaussian(1.0, 0.7).unwrap();
        let id = build_multiplication(&g, |_, _| 1.0).unwrap();
        let tr = weighted_trace(&id, &f, &es).unwrap();
        assert!((tr.re - es.trace_of(&f)).abs() < 1e-12 * es.trace_of(&f).abs());
        let zero = build_multiplication(&g, |_, _| 0.0).unwrap();
        assert_eq!(weighted_trace(&zero, &f, &es).unwrap(), Complex64::default());
        let zero_spec = PotentialSpec::zero();
        let dv0 = build_multiplication(&g, |x, y| zero_spec.dx(x, y)).unwrap();
        assert_eq!(weighted_trace(&dv0, &f, &es).unwrap(), Complex64::default());

        let w = build_multiplication(&g, |x, y| spec.dx(x, y)).unwrap();
        let fh = apply_function(&es, &f).unwrap();
        let direct = weighted_trace(&w, &f, &es).unwrap();
        let left = trace_product(&w, &fh).unwrap();
        let right = trace_product(&fh, &w).unwrap();
        assert!((direct - left).norm() <= 1e-10 * direct.norm());
        assert!((left - right).norm() <= 1e-10 * direct.norm());
    }

    #[test]
    fn perturbative_trace_matches_eigenvector_route() {
        let g = Grid2D::square_with_spacing(4.0, 0.25).unwrap();
        let spec = PotentialSpec::default_bump();
        let h = build_h(&g, &OperatorParams::unit(), &spec).unwrap();
        let w = g.sample(|x, y| spec.dx(x, y));
        let sigma = 0.5;
        let centers = [-1.0, 0.0, 0.75];
        let hf = perturbative_weighted_trace(&h, &w, &centers, sigma, &PerturbativeOptions::default()).unwrap();
        let es = eigendecompose(&h).unwrap();
        let w_op = build_multiplication(&g, |x, y| spec.dx(x, y)).unwrap();
        let scale = centers
            .iter()
            .map(|&c| weighted_trace(&w_op, &SmoothingFunction::gaussian(c, sigma).unwrap(), &es).unwrap().re.abs())
            .fold(0.0, f64::max);
        for (k, &c) in centers.iter().enumerate() {
            let exact = weighted_trace(&w_op, &SmoothingFunction::gaussian(c, sigma).unwrap(), &es).unwrap();
            assert!(exact.im.abs() < 1e-12);
            assert!((hf[k] - exact.re).abs() < 1e-7 * scale, "{} vs {}", hf[k], exact.re);
        }
    }

    proptest! {
        #[test]
        fn trace_diff_is_linear_in_f(a in -2.0f64..2.0, b in -2.0f64..2.0, c1 in -3.0f64..3.0, c2 in -3.0f64..3.0) {
            let g = Grid2D::new(2.5, 2.0, 7, 6).unwrap();
            let p = OperatorParams::unit();
            let es_h = spectrum(&build_h(&g, &p, &PotentialSpec::gaussian(1.0, 0.8)).unwrap()).unwrap();
            let es_0 = spectrum(&build_h0(&g, &p).unwrap()).unwrap();
            let f1 = SmoothingFunction::gaussian(c1, 0.6).unwrap();
            let f2 = SmoothingFunction::bump(c2 - 1.0, c2 + 1.5).unwrap();
            let comb = |s: f64| a * f1.eval(s) + b * f2.eval(s);
            let lhs = trace_diff(&comb, &es_h, &es_0).unwrap();
            let rhs = a * trace_diff(&f1, &es_h, &es_0).unwrap() + b * trace_diff(&f2, &es_h, &es_0).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
