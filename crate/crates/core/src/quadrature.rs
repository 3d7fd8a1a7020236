//! Globally adaptive Gauss-Kronrod (7, 15) quadrature and level-crossing search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Largest number of subintervals per one-dimensional integral.
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-12, max_intervals: 4000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

fn kronrod(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64) -> Result<Piece> {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c)?;
    let (mut k, mut g) = (fc * WGK[7], fc * WG[3]);
    for j in 0..7 {
        let s = f(c - r * XGK[j])? + f(c + r * XGK[j])?;
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Ok(Piece { a, b, value: k * r, error: ((k - g) * r).abs() })
}

/// Integrates `f` over `[a, b]` until the summed error estimate falls below
/// `max(abs_tol, rel_tol |value|)`.
pub fn integrate(f: impl Fn(f64) -> Result<f64>, a: f64, b: f64, opts: &QuadratureOptions) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    if b < a {
        let e = integrate(f, b, a, opts)?;
        return Ok(Estimate { value: -e.value, ..e });
    }
    let first = kronrod(&f, a, b)?;
    let (mut value, mut error) = (first.value, first.error);
    let mut heap = BinaryHeap::from([first]);
    let mut evaluations = 15;
    while error > opts.abs_tol.max(opts.rel_tol * value.abs()) {
        if heap.len() >= opts.max_intervals {
            return Err(Error::QuadratureBudget { estimate: value, error_bound: error });
        }
        let worst = heap.pop().expect("nonempty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at machine resolution
            return Err(Error::QuadratureBudget { estimate: value, error_bound: error });
        }
        let (l, r) = (kronrod(&f, worst.a, mid)?, kronrod(&f, mid, worst.b)?);
        evaluations += 30;
        value += l.value + r.value - worst.value;
        error += l.error + r.error - worst.error;
        heap.push(l);
        heap.push(r);
        // recompute occasionally to shed accumulated rounding
        if heap.len() % 64 == 0 {
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok(Estimate { value, error, evaluations })
}

/// Sign changes of `g` on `[a, b]`, given `|g'| <= lipschitz`.
///
/// Steps of `|g(x)| / lipschitz` cannot jump over a root; steps never fall
/// below `floor`, so roots closer together than `floor` may be missed.
pub fn level_crossings(g: impl Fn(f64) -> f64, a: f64, b: f64, lipschitz: f64, floor: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let (mut x, mut gx) = (a, g(a));
    while x < b {
        let step = (gx.abs() / lipschitz).max(floor);
        let xn = (x + step).min(b);
        let gn = g(xn);
        if (gx < 0.0) != (gn < 0.0) {
            let (mut lo, mut hi, glo) = (x, xn, gx);
            while hi - lo > 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1.0) {
                let m = 0.5 * (lo + hi);
                if (g(m) < 0.0) == (glo < 0.0) {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        x = xn;
        gx = gn;
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn polynomials_are_exact_and_reversal_flips_sign() {
        let opts = QuadratureOptions::default();
        let e = integrate(|x| Ok(x.powi(5) - 3.0 * x * x), -1.0, 2.0, &opts).unwrap();
        assert!((e.value - (64.0 / 6.0 - 1.0 / 6.0 - 9.0)).abs() < 1e-13);
        let r = integrate(|x| Ok(x.powi(5) - 3.0 * x * x), 2.0, -1.0, &opts).unwrap();
        assert_eq!(r.value, -e.value);
    }

    #[test]
    fn kinked_and_peaked_integrands() {
        let opts = QuadratureOptions::default();
        let e = integrate(|x: f64| Ok(x.abs().sqrt()), -1.0, 1.0, &opts).unwrap();
        assert!((e.value - 4.0 / 3.0).abs() < 1e-9);
        let g = integrate(|x: f64| Ok((-x * x / 0.18).exp()), -3.0, 5.0, &opts).unwrap();
        assert!((g.value - (0.18 * std::f64::consts::PI).sqrt()).abs() < 1e-11);
    }

    #[test]
    fn budget_error_carries_estimate() {
        let opts = QuadratureOptions { abs_tol: 1e-15, rel_tol: 0.0, max_intervals: 3 };
        match integrate(|x: f64| Ok(x.abs().sqrt()), -1.0, 1.0, &opts) {
            Err(Error::QuadratureBudget { estimate, error_bound }) => {
                assert!((estimate - 4.0 / 3.0).abs() < 0.1 && error_bound > 0.0)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn crossings_of_a_wiggle() {
        let roots = level_crossings(|x: f64| x.sin() - 0.3, 0.0, 10.0, 1.0, 1e-6);
        let (a, pi) = (0.3f64.asin(), std::f64::consts::PI);
        let expected = [a, pi - a, 2.0 * pi + a, 3.0 * pi - a];
        assert_eq!(roots.len(), 4);
        for (r, e) in roots.iter().zip(expected) {
            assert!((r - e).abs() < 1e-13);
        }
    }

    proptest! {
        #[test]
        fn crossings_of_shifted_lines(c in -5.0f64..5.0, s in 0.1f64..3.0) {
            let roots = level_crossings(|x| s * (x - c), -6.0, 6.0, s, 1e-9);
            prop_assert_eq!(roots.len(), 1);
            prop_assert!((roots[0] - c).abs() < 1e-12);
        }
    }
}
