//! Small dense linear-algebra helpers shared by the physics modules.

use nalgebra::{Complex, DMatrix, DVector};

use crate::{Error, Result};

pub type C64 = Complex<f64>;

/// Replaces `m` by `(m + mᵀ)/2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest elementwise deviation from symmetry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// True when every off-diagonal entry is exactly zero.
pub fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0))
}

/// `a · diag(d) · a` for symmetric `a`, without forming the diagonal matrix.
pub fn sandwich_diagonal(a: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (j, dj) in d.iter().enumerate() {
        if *dj == 0.0 {
            scaled.column_mut(j).fill(0.0);
        } else {
            scaled.column_mut(j).scale_mut(*dj);
        }
    }
    &scaled * a
}

fn log_abs_det(m: &DMatrix<C64>) -> Option<f64> {
    let lu = m.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].norm();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        acc += d.ln();
    }
    Some(acc)
}

/// Principal square root of a complex matrix with no eigenvalues on the
/// closed negative real axis.
///
/// Scaled product-form Denman–Beavers iteration.
pub fn complex_sqrtm(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape("square root of a non-square matrix".into()));
    }
    let ident = DMatrix::<C64>::identity(n, n);
    let mut m = a.clone();
    let mut y = a.clone();
    for iter in 0..100 {
        let m_inv = m.clone().try_inverse().ok_or(Error::EigenSolve)?;
        // determinant scaling only while far from convergence
        let mu = if iter < 8 {
            let lad = log_abs_det(&m).ok_or(Error::EigenSolve)?;
            (-lad / (2.0 * n as f64)).exp()
        } else {
            1.0
        };
        let mu2 = C64::new(mu * mu, 0.0);
        let inv_mu2 = C64::new(1.0 / (mu * mu), 0.0);
        let scaled_inv = &m_inv * inv_mu2;
        let next_m = (&ident + (&m * mu2 + &scaled_inv) * C64::new(0.5, 0.0)) * C64::new(0.5, 0.0);
        let next_y = (&y * C64::new(0.5 * mu, 0.0)) * (&ident + &scaled_inv);
        let delta = (&next_m - &ident).norm();
        m = next_m;
        y = next_y;
        if delta < 1e-14 * (n as f64).sqrt() && iter >= 8 {
            return Ok(y);
        }
    }
    Err(Error::EigenSolve)
}

/// Real and imaginary parts of a complex matrix.
pub fn split_complex(m: &DMatrix<C64>) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

/// Principal square root with the branch `Im ≤ 0`.
pub fn decaying_sqrt(z: C64) -> C64 {
    let w = z.sqrt();
    if w.im > 0.0 {
        -w
    } else {
        w
    }
}

/// Ordinary least squares via SVD. Returns the minimum-norm solution.
pub fn lstsq(design: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-12 * smax.max(f64::MIN_POSITIVE);
    svd.solve(rhs, eps).map_err(|e| Error::Fit(e.to_string()))
}

/// Moore–Penrose pseudo-inverse of a symmetric positive-semidefinite matrix.
pub fn pinv_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let smax = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cut = 1e-12 * smax.max(f64::MIN_POSITIVE);
    let n = m.nrows();
    let mut out = DMatrix::zeros(n, n);
    for (k, lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > cut {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / *lam;
        }
    }
    out
}
