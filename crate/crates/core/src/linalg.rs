//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::cmp::Ordering;

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

/// Decreasing real part; ties by decreasing `|Im|`, positive `Im` first.
pub fn cmp_by_real_part(a: &Complex64, b: &Complex64) -> Ordering {
    b.re.total_cmp(&a.re)
        .then(b.im.abs().total_cmp(&a.im.abs()))
        .then(b.im.total_cmp(&a.im))
}

/// Decreasing magnitude; ties by decreasing real part, positive `Im` first.
pub fn cmp_by_magnitude(a: &Complex64, b: &Complex64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

/// Sign of the determinant, from an LU factorisation (0 if singular).
pub fn det_sign(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut s: f64 = lu.p().determinant();
    for i in 0..u.nrows() {
        let d = u[(i, i)];
        if d == 0.0 {
            return 0.0;
        }
        s *= d.signum();
    }
    s
}

/// Sign of the real product `prod z_i`, where the factors come in
/// conjugate pairs or are real.
pub fn product_sign(factors: impl IntoIterator<Item = Complex64>) -> f64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for z in factors {
        let r = z.norm();
        if r == 0.0 {
            return 0.0;
        }
        acc *= z / r;
    }
    acc.re.signum()
}

pub fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().min()
}

/// Unit vector spanning (numerically) the kernel of a wide matrix.
pub fn null_vector(a: &DMatrix<f64>) -> DVector<f64> {
    let c = a.ncols();
    let mut sq = DMatrix::zeros(c, c);
    sq.view_mut((0, 0), (a.nrows(), c)).copy_from(a);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let k = svd.singular_values.argmin().0;
    let v: DVector<f64> = vt.row(k).transpose();
    v.normalize()
}

fn seed_vector(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7).sin())
}

/// Eigenvector of `m` for the complex eigenvalue `lambda` by inverse
/// iteration; returned as `(Re v, Im v)` with `Re v ⟂ Im v`, `|Re v| = 1`.
pub fn complex_eigenvector(m: &DMatrix<f64>, lambda: Complex64) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = m.nrows();
    let (a, b) = (lambda.re, lambda.im);
    let shift = 1e-13 * (1.0 + lambda.norm());
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            big[(i, j)] = m[(i, j)];
            big[(n + i, n + j)] = m[(i, j)];
        }
        big[(i, i)] -= a + shift;
        big[(n + i, n + i)] -= a + shift;
        big[(i, n + i)] = b;
        big[(n + i, i)] = -b;
    }
    let lu = big.lu();
    let mut v = seed_vector(2 * n);
    for _ in 0..3 {
        v = lu.solve(&v)?;
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        v /= norm;
    }
    let x = v.rows(0, n).into_owned();
    let z = v.rows(n, n).into_owned();
    // rotate the phase so that the real and imaginary parts are orthogonal
    let phi = 0.5 * (-2.0 * x.dot(&z)).atan2(x.norm_squared() - z.norm_squared());
    let (c, s) = (phi.cos(), phi.sin());
    let xr = &x * c - &z * s;
    let zr = &x * s + &z * c;
    let scale = xr.norm();
    Some((
        (xr / scale).as_slice().to_vec(),
        (zr / scale).as_slice().to_vec(),
    ))
}

/// Unit eigenvector of `m` for the real eigenvalue `mu` by inverse iteration.
pub fn real_eigenvector(m: &DMatrix<f64>, mu: f64) -> Option<Vec<f64>> {
    let n = m.nrows();
    let shift = 1e-13 * (1.0 + mu.abs());
    let a = m - DMatrix::identity(n, n) * (mu + shift);
    let lu = a.lu();
    let mut v = seed_vector(n);
    for _ in 0..3 {
        v = lu.solve(&v)?;
        let norm = v.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return None;
        }
        v /= norm;
    }
    Some(v.as_slice().to_vec())
}
