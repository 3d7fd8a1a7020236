//! Thin safe wrappers over the LAPACK symmetric/Hermitian eigensolvers.
//!
//! Dense matrices are column-major. Band matrices use LAPACK upper storage:
//! `ab[(kd + i - j) + j * (kd + 1)] = A[i][j]` for `j - kd <= i <= j`.

use lapack_sys::{__BindgenComplex, dsbevd_, dsbevd_2stage_, dsyevd_, zhbevd_, zheevd_};
use num_complex::Complex64;

use crate::error::{Error, Result};

fn as_lapack(p: *mut Complex64) -> *mut __BindgenComplex<f64> {
    // Complex64 is #[repr(C)] { re, im }, the same layout.
    p.cast()
}

fn to_i32(n: usize) -> Result<i32> {
    i32::try_from(n).map_err(|_| Error::DenseLimitExceeded { dim: n, limit: i32::MAX as usize })
}

fn check(routine: &'static str, info: i32) -> Result<()> {
    if info == 0 {
        Ok(())
    } else {
        Err(Error::Lapack { routine, info })
    }
}

fn jobz(vectors: bool) -> i8 {
    if vectors {
        b'V' as i8
    } else {
        b'N' as i8
    }
}

/// Eigenvalues (ascending) and optionally eigenvectors of a real symmetric
/// column-major matrix. Only the upper triangle is read.
pub fn real_symmetric_eig(mut a: Vec<f64>, n: usize, vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok((Vec::new(), vectors.then(Vec::new)));
    }
    let ni = to_i32(n)?;
    let mut w = vec![0.0; n];
    let (jz, up) = (jobz(vectors), b'U' as i8);
    let mut info = 0;
    let mut work_q = 0.0;
    let mut iwork_q = 0;
    let q = -1;
    unsafe {
        dsyevd_(&jz, &up, &ni, a.as_mut_ptr(), &ni, w.as_mut_ptr(), &mut work_q, &q, &mut iwork_q, &q, &mut info);
    }
    check("dsyevd", info)?;
    let (lwork, liwork) = (work_q as i32, iwork_q);
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0; liwork.max(1) as usize];
    unsafe {
        dsyevd_(
            &jz,
            &up,
            &ni,
            a.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    check("dsyevd", info)?;
    Ok((w, vectors.then_some(a)))
}

/// Eigenvalues (ascending) and optionally eigenvectors of a complex Hermitian
/// column-major matrix. Only the upper triangle is read.
pub fn hermitian_eig(mut a: Vec<Complex64>, n: usize, vectors: bool) -> Result<(Vec<f64>, Option<Vec<Complex64>>)> {
    assert_eq!(a.len(), n * n);
    if n == 0 {
        return Ok((Vec::new(), vectors.then(Vec::new)));
    }
    let ni = to_i32(n)?;
    let mut w = vec![0.0; n];
    let (jz, up) = (jobz(vectors), b'U' as i8);
    let mut info = 0;
    let mut work_q = Complex64::default();
    let mut rwork_q = 0.0;
    let mut iwork_q = 0;
    let q = -1;
    unsafe {
        zheevd_(
            &jz,
            &up,
            &ni,
            as_lapack(a.as_mut_ptr()),
            &ni,
            w.as_mut_ptr(),
            as_lapack(&mut work_q),
            &q,
            &mut rwork_q,
            &q,
            &mut iwork_q,
            &q,
            &mut info,
        );
    }
    check("zheevd", info)?;
    let (lwork, lrwork, liwork) = (work_q.re as i32, rwork_q as i32, iwork_q);
    let mut work = vec![Complex64::default(); lwork.max(1) as usize];
    let mut rwork = vec![0.0; lrwork.max(1) as usize];
    let mut iwork = vec![0; liwork.max(1) as usize];
    unsafe {
        zheevd_(
            &jz,
            &up,
            &ni,
            as_lapack(a.as_mut_ptr()),
            &ni,
            w.as_mut_ptr(),
            as_lapack(work.as_mut_ptr()),
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    check("zheevd", info)?;
    Ok((w, vectors.then_some(a)))
}

/// Eigenvalues (ascending) of a real symmetric band matrix in upper storage.
pub fn real_band_eigenvalues(mut ab: Vec<f64>, n: usize, kd: usize) -> Result<Vec<f64>> {
    assert_eq!(ab.len(), n * (kd + 1));
    if n == 0 {
        return Ok(Vec::new());
    }
    let (ni, kdi, ldab) = (to_i32(n)?, to_i32(kd)?, to_i32(kd + 1)?);
    let mut w = vec![0.0; n];
    let mut z = [0.0];
    let one = 1;
    let lwork = to_i32(2 * n)?;
    let liwork = 1;
    let mut work = vec![0.0; 2 * n];
    let mut iwork = [0];
    let mut info = 0;
    unsafe {
        dsbevd_(
            &(b'N' as i8),
            &(b'U' as i8),
            &ni,
            &kdi,
            ab.as_mut_ptr(),
            &ldab,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &one,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    check("dsbevd", info)?;
    Ok(w)
}

/// As [`real_band_eigenvalues`], through the two-stage band reduction.
pub fn real_band_eigenvalues_two_stage(mut ab: Vec<f64>, n: usize, kd: usize) -> Result<Vec<f64>> {
    assert_eq!(ab.len(), n * (kd + 1));
    if n == 0 {
        return Ok(Vec::new());
    }
    let (ni, kdi, ldab) = (to_i32(n)?, to_i32(kd)?, to_i32(kd + 1)?);
    let mut w = vec![0.0; n];
    let mut z = [0.0];
    let (one, q) = (1, -1);
    let (jz, up) = (b'N' as i8, b'U' as i8);
    let mut work_q = 0.0;
    let mut iwork_q = 0;
    let mut info = 0;
    unsafe {
        dsbevd_2stage_(
            &jz,
            &up,
            &ni,
            &kdi,
            ab.as_mut_ptr(),
            &ldab,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &one,
            &mut work_q,
            &q,
            &mut iwork_q,
            &q,
            &mut info,
        );
    }
    check("dsbevd_2stage", info)?;
    let (lwork, liwork) = (work_q as i32, iwork_q.max(1));
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0; liwork as usize];
    unsafe {
        dsbevd_2stage_(
            &jz,
            &up,
            &ni,
            &kdi,
            ab.as_mut_ptr(),
            &ldab,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &one,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    check("dsbevd_2stage", info)?;
    Ok(w)
}

/// Eigenvalues (ascending) of a complex Hermitian band matrix in upper storage.
pub fn hermitian_band_eigenvalues(mut ab: Vec<Complex64>, n: usize, kd: usize) -> Result<Vec<f64>> {
    assert_eq!(ab.len(), n * (kd + 1));
    if n == 0 {
        return Ok(Vec::new());
    }
    let (ni, kdi, ldab) = (to_i32(n)?, to_i32(kd)?, to_i32(kd + 1)?);
    let mut w = vec![0.0; n];
    let mut z = [Complex64::default()];
    let one = 1;
    let mut work = vec![Complex64::default(); n];
    let mut rwork = vec![0.0; n];
    let mut iwork = [0];
    let (lwork, lrwork, liwork) = (ni, ni, 1);
    let mut info = 0;
    unsafe {
        zhbevd_(
            &(b'N' as i8),
            &(b'U' as i8),
            &ni,
            &kdi,
            as_lapack(ab.as_mut_ptr()),
            &ldab,
            w.as_mut_ptr(),
            as_lapack(z.as_mut_ptr()),
            &one,
            as_lapack(work.as_mut_ptr()),
            &lwork,
            rwork.as_mut_ptr(),
            &lrwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    check("zhbevd", info)?;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiagonal(n: usize) -> Vec<f64> {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i + i * n] = 2.0;
            if i + 1 < n {
                a[i + (i + 1) * n] = -1.0;
                a[i + 1 + i * n] = -1.0;
            }
        }
        a
    }

    fn chebyshev(n: usize) -> Vec<f64> {
        (1..=n).map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n + 1) as f64).cos()).collect()
    }

    #[test]
    fn dense_real_matches_chebyshev_eigenvalues() {
        for n in [7, 72] {
            let (w, v) = real_symmetric_eig(tridiagonal(n), n, true).unwrap();
            for (a, b) in w.iter().zip(chebyshev(n)) {
                assert!((a - b).abs() < 1e-13);
            }
            let v = v.unwrap();
            for i in 0..n {
                for j in 0..n {
                    let d: f64 = (0..n).map(|r| v[r + i * n] * v[r + j * n]).sum();
                    assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-13, "{i} {j} {d}");
                }
            }
        }
    }

    #[test]
    fn band_solvers_agree_with_closed_form() {
        let n = 9;
        let mut ab = vec![0.0; 2 * n];
        let mut abc = vec![Complex64::default(); 2 * n];
        for j in 0..n {
            ab[1 + 2 * j] = 2.0;
            abc[1 + 2 * j] = Complex64::new(2.0, 0.0);
            if j > 0 {
                ab[2 * j] = -1.0;
                // a unitary diagonal gauge leaves the spectrum unchanged
                abc[2 * j] = Complex64::from_polar(1.0, 0.3 * j as f64) * -1.0;
            }
        }
        let exact = chebyshev(n);
        let wr = real_band_eigenvalues(ab, n, 1).unwrap();
        let wc = hermitian_band_eigenvalues(abc, n, 1).unwrap();
        for i in 0..n {
            assert!((wr[i] - exact[i]).abs() < 1e-13);
            assert!((wc[i] - exact[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn two_stage_band_solver_matches_one_stage() {
        // pentadiagonal: 2 - 2cos plus a second-neighbour coupling
        let (n, kd) = (300, 2);
        let mut ab = vec![0.0; n * (kd + 1)];
        for j in 0..n {
            ab[kd + j * (kd + 1)] = 3.0 + (j as f64 * 0.37).sin();
            if j >= 1 {
                ab[kd - 1 + j * (kd + 1)] = -1.0;
            }
            if j >= 2 {
                ab[j * (kd + 1)] = 0.25;
            }
        }
        let one = real_band_eigenvalues(ab.clone(), n, kd).unwrap();
        let two = real_band_eigenvalues_two_stage(ab, n, kd).unwrap();
        for (a, b) in one.iter().zip(&two) {
            assert!((a - b).abs() < 1e-12);
        }
        let exact = chebyshev(9);
        let mut tri = vec![0.0; 18];
        for j in 0..9 {
            tri[1 + 2 * j] = 2.0;
            if j > 0 {
                tri[2 * j] = -1.0;
            }
        }
        for (a, b) in real_band_eigenvalues_two_stage(tri, 9, 1).unwrap().iter().zip(exact) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn hermitian_dense_two_by_two() {
        // [[1, i], [-i, 1]] has eigenvalues 0 and 2
        let a = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(1.0, 0.0),
        ];
        let (w, _) = hermitian_eig(a, 2, false).unwrap();
        assert!(w[0].abs() < 1e-15 && (w[1] - 2.0).abs() < 1e-15);
    }
}
