//! Polylogarithms, dispersion relations and finite-size non-Hermitian spectra.
//!
//! Bulk dispersions use the Fourier transform of the long-range coupling,
//!
//! ```text
//! h_α(q) = Σ_{r≥1} (2/r^α)(1 − cos qr) = 2ζ(α) − 2 Re Li_α(e^{iq}),
//! ```
//!
//! and the normal-mode frequencies `ω(q) = √(Ω(Ω + K h_α(q) − 2iγ_eff))`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::gaussian_states::matrix_io::atomic_write;
use crate::lattice_model::{build_hamiltonian, build_jumps, MeasurementKind, ModelSpec};
use crate::linalg::{decaying_sqrt, C64};
use crate::{Error, Result};

/// Default absolute tolerance for [`polylog`].
pub const POLYLOG_TOL: f64 = 1e-13;
/// Largest number of explicit terms the unit-circle evaluation may sum.
const MAX_DIRECT_TERMS: usize = 10_000_000;

/// `Σ_{r≥1} z^r / r^α` for `|z| ≤ 1`.
///
/// Inside `|z| < 0.9` the series is summed directly until the geometric tail
/// bound drops below `tol`. Otherwise `N` terms are summed explicitly and the
/// remainder `z^N Σ_m z^m/(N+m)^α` is taken from its large-`N` expansion
/// `z^N Σ_k g_k (α)_k N^{−α−k}`, where `g_k` are the Taylor coefficients of
/// `1/(1 − z e^{−t})`. The expansion converges quickly once `N|ln z| ≫ 1`.
pub fn polylog(alpha: f64, z: C64, tol: f64) -> Result<C64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidModel(format!("polylog order must be positive, got {alpha}")));
    }
    let modulus = z.norm();
    if modulus > 1.0 + 1e-14 {
        return Err(Error::OutOfRange { value: modulus, lo: 0.0, hi: 1.0 });
    }
    if z == C64::new(0.0, 0.0) {
        return Ok(z);
    }
    if (z - 1.0).norm() == 0.0 {
        return zeta(alpha).map(|v| C64::new(v, 0.0));
    }
    if modulus < 0.9 {
        return Ok(direct_sum(alpha, z, tol));
    }
    lerch_tail_sum(alpha, z, tol)
}

fn direct_sum(alpha: f64, z: C64, tol: f64) -> C64 {
    let modulus = z.norm();
    let mut acc = C64::new(0.0, 0.0);
    let mut power = z;
    let mut r = 1usize;
    loop {
        acc += power / (r as f64).powf(alpha);
        let bound = modulus.powi(r as i32 + 1) / (1.0 - modulus);
        if bound < tol {
            return acc;
        }
        power *= z;
        r += 1;
    }
}

fn lerch_tail_sum(alpha: f64, z: C64, tol: f64) -> Result<C64> {
    let log_z = z.ln().norm();
    let n_f = (40.0 / log_z).ceil().max(32.0);
    if n_f > MAX_DIRECT_TERMS as f64 {
        return Err(Error::SeriesNonConvergence(format!(
            "argument {z} is too close to 1 for the unit-circle expansion"
        )));
    }
    let n = n_f as usize;
    let mut acc = C64::new(0.0, 0.0);
    let mut power = C64::new(1.0, 0.0);
    for r in 1..n {
        power *= z;
        acc += power / (r as f64).powf(alpha);
    }
    let z_n = power * z;

    // Taylor coefficients of 1/(1 − z e^{−t})
    const K_MAX: usize = 80;
    let u0 = C64::new(1.0, 0.0) - z;
    let mut u = Vec::with_capacity(K_MAX + 1);
    u.push(u0);
    let mut fact = 1.0;
    for k in 1..=K_MAX {
        fact *= k as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        u.push(-z * (sign / fact));
    }
    let mut g: Vec<C64> = Vec::with_capacity(K_MAX + 1);
    g.push(C64::new(1.0, 0.0) / u0);
    let mut coeff = n_f.powf(-alpha);
    let mut tail = g[0] * coeff;
    let mut previous = tail.norm();
    // coefficients can vanish for alternate k, so sizes are judged in pairs
    let mut smallest = f64::INFINITY;
    for k in 1..=K_MAX {
        let s: C64 = (1..=k).map(|j| u[j] * g[k - j]).sum();
        g.push(-s / u0);
        coeff *= (alpha + k as f64 - 1.0) / n_f;
        let term = g[k] * coeff;
        let size = term.norm();
        let pair = size.max(previous);
        if k > 4 && pair > 100.0 * smallest {
            break;
        }
        tail += term;
        if pair < 0.01 * tol {
            return Ok(acc + z_n * tail);
        }
        smallest = smallest.min(pair);
        previous = size;
    }
    if smallest < tol {
        Ok(acc + z_n * tail)
    } else {
        Err(Error::SeriesNonConvergence(format!("tail expansion stalled at {smallest:e} for z = {z}")))
    }
}

/// Riemann zeta for `α > 1` by Euler–Maclaurin summation.
pub fn zeta(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) {
        return Err(Error::PolylogPole { alpha });
    }
    // B_{2k}/(2k)!
    const B2K_OVER_FACT: [f64; 10] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
        -691.0 / 1307674368000.0,
        1.0 / 74724249600.0,
        -3617.0 / 10670622842880000.0,
        43867.0 / 5109094217170944000.0,
        -174611.0 / 802857662698291200000.0,
    ];
    let n = 20.0f64;
    let mut acc: f64 = (1..20).map(|k| (k as f64).powf(-alpha)).sum();
    acc += n.powf(1.0 - alpha) / (alpha - 1.0) + 0.5 * n.powf(-alpha);
    // rising product s(s+1)…(s+2k−2) times N^{−s−2k+1}
    let mut rising = alpha;
    let mut power = n.powf(-alpha - 1.0);
    for (k, b) in B2K_OVER_FACT.iter().enumerate() {
        if k > 0 {
            let m = 2.0 * k as f64;
            rising *= (alpha + m - 1.0) * (alpha + m);
            power /= n * n;
        }
        acc += b * rising * power;
    }
    Ok(acc)
}

/// Riemann zeta continued to `0 < α < 1` through the alternating series.
pub fn zeta_continued(alpha: f64) -> Result<f64> {
    if alpha > 1.0 {
        return zeta(alpha);
    }
    if !(alpha > 0.0) || alpha == 1.0 {
        return Err(Error::PolylogPole { alpha });
    }
    let eta = -polylog(alpha, C64::new(-1.0, 0.0), POLYLOG_TOL)?.re;
    Ok(eta / (1.0 - 2f64.powf(1.0 - alpha)))
}

/// How `h_α(q)` is made finite when `α ≤ 1`, where `Σ 1/r^α` diverges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Regularization {
    /// `Σ_{r≤cutoff} (2/r^α)(1 − cos qr)`, the lattice sum with a finite range.
    /// Nonnegative, and growing like `cutoff^{1−α}` away from `q = 0`.
    Truncated { cutoff: usize },
    /// `2ζ(α) − 2 Re Li_α(e^{iq})` with the continued zeta value. Negative
    /// for every `q ≠ 0` when `α < 1`.
    AnalyticContinuation,
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::Truncated { cutoff: 1000 }
    }
}

/// Maps `q` into `(−π, π]`.
pub fn wrap_momentum(q: f64) -> f64 {
    let mut w = q.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// `h_α(q)`; for `α ≤ 1` the default truncation is used.
pub fn dispersion_h(alpha: f64, q: f64) -> Result<f64> {
    dispersion_h_with(alpha, q, Regularization::default())
}

pub fn dispersion_h_with(alpha: f64, q: f64, regularization: Regularization) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidModel(format!("alpha must be positive, got {alpha}")));
    }
    let q = wrap_momentum(q);
    if q == 0.0 {
        return Ok(0.0);
    }
    if alpha > 1.0 {
        let z = C64::from_polar(1.0, q);
        return Ok(2.0 * zeta(alpha)? - 2.0 * polylog(alpha, z, POLYLOG_TOL)?.re);
    }
    match regularization {
        Regularization::Truncated { cutoff } => Ok((1..=cutoff)
            .map(|r| {
                let rf = r as f64;
                2.0 * (1.0 - (q * rf).cos()) / rf.powf(alpha)
            })
            .sum()),
        Regularization::AnalyticContinuation => {
            let z = C64::from_polar(1.0, q);
            Ok(2.0 * zeta_continued(alpha)? - 2.0 * polylog(alpha, z, POLYLOG_TOL)?.re)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionKind {
    Local,
    Nonlocal,
    Unitary,
}

impl From<MeasurementKind> for DispersionKind {
    fn from(m: MeasurementKind) -> Self {
        match m {
            MeasurementKind::Local => DispersionKind::Local,
            MeasurementKind::Nonlocal => DispersionKind::Nonlocal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionParams {
    pub alpha: f64,
    pub gamma: f64,
    pub omega: f64,
    pub kappa_coupling: f64,
    pub regularization: Regularization,
}

impl DispersionParams {
    pub fn new(alpha: f64, gamma: f64) -> Self {
        DispersionParams { alpha, gamma, omega: 1.0, kappa_coupling: 1.0, regularization: Regularization::default() }
    }

    /// Bulk parameters of a finite chain; the truncation matches its longest bond.
    pub fn from_model(model: &ModelSpec) -> Self {
        DispersionParams {
            alpha: model.alpha,
            gamma: model.gamma,
            omega: model.omega,
            kappa_coupling: model.kappa_coupling,
            regularization: Regularization::Truncated { cutoff: model.sites.saturating_sub(1).max(1) },
        }
    }

    pub fn with_regularization(mut self, regularization: Regularization) -> Self {
        self.regularization = regularization;
        self
    }
}

/// Normal-mode frequency `ω(q)` on the branch `Im ω ≤ 0`.
pub fn nh_dispersion(params: &DispersionParams, q: f64, kind: DispersionKind) -> Result<C64> {
    let h = dispersion_h_with(params.alpha, q, params.regularization)?;
    let damping = match kind {
        DispersionKind::Unitary => 0.0,
        DispersionKind::Local => 2.0 * params.gamma,
        DispersionKind::Nonlocal => 8.0 * params.gamma * zeta(params.alpha)?,
    };
    let arg = C64::new(params.omega + params.kappa_coupling * h, -damping) * params.omega;
    Ok(decaying_sqrt(arg))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dispersion {
    pub q_grid: Vec<f64>,
    pub omega: Vec<C64>,
}

impl Dispersion {
    pub fn evaluate(params: &DispersionParams, kind: DispersionKind, q_grid: Vec<f64>) -> Result<Self> {
        let omega = q_grid.iter().map(|&q| nh_dispersion(params, q, kind)).collect::<Result<Vec<_>>>()?;
        Ok(Dispersion { q_grid, omega })
    }

    /// Writes `q,re_omega,im_omega` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_complex_csv(path, "q", self.q_grid.iter().map(|q| format!("{q:.16e}")), &self.omega)
    }
}

/// `n` points spaced evenly in `(−π, π]`, symmetric under `q → −q` apart from `π`.
pub fn symmetric_q_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| -PI + 2.0 * PI * (k + 1) as f64 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NHSpectrum {
    /// Sorted by real part.
    pub eigenvalues: Vec<C64>,
}

impl NHSpectrum {
    /// Writes `mode,re_omega,im_omega` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_complex_csv(path, "mode", (0..self.eigenvalues.len()).map(|k| k.to_string()), &self.eigenvalues)
    }
}

fn write_complex_csv(path: &Path, label: &str, keys: impl Iterator<Item = String>, values: &[C64]) -> Result<()> {
    let mut text = format!("{label},re_omega,im_omega\n");
    for (key, w) in keys.zip(values) {
        text.push_str(&format!("{key},{:.16e},{:.16e}\n", w.re, w.im));
    }
    atomic_write(path, text.as_bytes())
}

/// Frequencies `√(Ω a_k)` over the eigenvalues `a_k` of `A_H − 2i·(OᵀO)ₓₓ`.
pub fn nh_spectrum_finite(model: &ModelSpec) -> Result<NHSpectrum> {
    let ham = build_hamiltonian(model)?;
    let jumps = build_jumps(model)?;
    if !jumps.acts_on_positions_only() {
        return Err(Error::InvalidModel("finite spectrum needs position-linear jumps".into()));
    }
    let l = model.sites;
    let a = ham.position_block();
    let d = jumps.position_block();
    let a_eff = DMatrix::<C64>::from_fn(l, l, |i, j| C64::new(a[(i, j)], -2.0 * d[(i, j)]));
    let schur = a_eff.try_schur(1e-14, 10_000).ok_or(Error::EigenSolve)?;
    let evs = schur.eigenvalues().ok_or(Error::EigenSolve)?;
    let mut eigenvalues: Vec<C64> = evs.iter().map(|ak| decaying_sqrt(ak * model.omega)).collect();
    eigenvalues.sort_by(|x, y| x.re.total_cmp(&y.re));
    Ok(NHSpectrum { eigenvalues })
}

/// `κ = K/√(Ω² + 4γ_eff²)` with `γ_eff = γ` (local), `4γ` (nonlocal), `0` (unitary).
pub fn correlation_length(gamma: f64, omega: f64, kappa_coupling: f64, kind: DispersionKind) -> f64 {
    let g = match kind {
        DispersionKind::Local => gamma,
        DispersionKind::Nonlocal => 4.0 * gamma,
        DispersionKind::Unitary => 0.0,
    };
    kappa_coupling / (omega * omega + 4.0 * g * g).sqrt()
}

/// Unnormalized short-range correlation shape `e^{−d/κ}/√(d/κ)`.
pub fn asymptotic_correlation(distance: f64, gamma: f64, omega: f64, kappa_coupling: f64, kind: DispersionKind) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::OutOfRange { value: distance, lo: 1.0, hi: f64::INFINITY });
    }
    let x = distance / correlation_length(gamma, omega, kappa_coupling, kind);
    Ok((-x).exp() / x.sqrt())
}
