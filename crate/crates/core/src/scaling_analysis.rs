//! Finite-size scaling fits: power laws, central charge, correlation decay,
//! Padé extrapolation, curve crossings and data collapse.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gaussian_states::matrix_io::atomic_write;
use crate::linalg::{lstsq, pinv_sym};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    /// α or γ.
    pub control: f64,
    pub size: usize,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalingDataset {
    pub points: Vec<ScalingPoint>,
}

impl ScalingDataset {
    pub fn new(points: Vec<ScalingPoint>) -> Self {
        ScalingDataset { points }
    }

    pub fn push(&mut self, control: f64, size: usize, value: f64) {
        self.points.push(ScalingPoint { control, size, value, stderr: None });
    }

    /// Distinct sizes in increasing order.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.points.iter().map(|p| p.size).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// `(control, value)` pairs of one size, sorted by control.
    pub fn curve(&self, size: usize) -> Vec<(f64, f64)> {
        let mut c: Vec<(f64, f64)> =
            self.points.iter().filter(|p| p.size == size).map(|p| (p.control, p.value)).collect();
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
        c
    }

    /// Checks the shape needed by crossing and collapse fits.
    pub fn validate_curves(&self) -> Result<()> {
        let sizes = self.sizes();
        if sizes.len() < 2 {
            return Err(Error::Fit("need at least two system sizes".into()));
        }
        for &l in &sizes {
            if self.curve(l).len() < 3 {
                return Err(Error::Fit(format!("size {l} has fewer than three control values")));
            }
        }
        if self.points.iter().any(|p| !p.value.is_finite() || !p.control.is_finite()) {
            return Err(Error::Fit("dataset contains non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, f64>,
    pub param_stderr: BTreeMap<String, f64>,
    /// Mean squared residual in the space the fit was performed in.
    pub mse: f64,
    pub n_points: usize,
}

impl FitResult {
    pub fn get(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or(f64::NAN)
    }

    pub fn stderr(&self, name: &str) -> f64 {
        self.param_stderr.get(name).copied().unwrap_or(f64::NAN)
    }

    /// Residual sum of squares per degree of freedom.
    pub fn reduced_mse(&self) -> f64 {
        let dof = self.n_points.saturating_sub(self.params.len());
        if dof == 0 {
            f64::NAN
        } else {
            self.mse * self.n_points as f64 / dof as f64
        }
    }

    fn from_pairs(names: &[String], values: &[f64], errors: &[f64], mse: f64, n_points: usize) -> Self {
        FitResult {
            params: names.iter().cloned().zip(values.iter().copied()).collect(),
            param_stderr: names.iter().cloned().zip(errors.iter().copied()).collect(),
            mse,
            n_points,
        }
    }
}

/// Coefficients, standard errors and unweighted mean squared residual.
struct LinearFit {
    coef: Vec<f64>,
    stderr: Vec<f64>,
    mse: f64,
}

/// Least squares with optional per-point standard errors (inverse-variance weights).
fn linear_fit(design: &DMatrix<f64>, y: &[f64], sigma: Option<&[f64]>) -> Result<LinearFit> {
    let n = design.nrows();
    let p = design.ncols();
    if n < p {
        return Err(Error::Fit(format!("{n} points cannot determine {p} parameters")));
    }
    let w: Vec<f64> = match sigma {
        Some(s) => {
            if s.len() != n || s.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Fit("standard errors must be positive, one per point".into()));
            }
            s.iter().map(|v| 1.0 / v).collect()
        }
        None => vec![1.0; n],
    };
    let a = DMatrix::from_fn(n, p, |i, j| design[(i, j)] * w[i]);
    let b = DVector::from_iterator(n, y.iter().zip(&w).map(|(v, wi)| v * wi));
    let coef = lstsq(&a, &b)?;
    let fitted = design * &coef;
    let rss: f64 = fitted.iter().zip(y).map(|(f, v)| (v - f).powi(2)).sum();
    let cov = pinv_sym(&(a.transpose() * &a));
    let scale = match sigma {
        Some(_) => 1.0,
        None if n > p => rss / (n - p) as f64,
        None => 0.0,
    };
    let stderr = (0..p).map(|k| (cov[(k, k)] * scale).max(0.0).sqrt()).collect();
    Ok(LinearFit { coef: coef.iter().copied().collect(), stderr, mse: rss / n as f64 })
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn check_lengths(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Fit(format!("{} abscissae but {} values", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(Error::Fit(format!("need at least {min} points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite input".into()));
    }
    Ok(())
}

/// `S = a L^b` by least squares on `ln S = ln a + b ln L`.
///
/// With standard errors of `S` the log-space weights are `(S/σ)²`.
pub fn fit_power_law(sizes: &[f64], values: &[f64], stderr: Option<&[f64]>) -> Result<FitResult> {
    check_lengths(sizes, values, 3)?;
    if values.iter().any(|v| *v <= 0.0) || sizes.iter().any(|v| *v <= 0.0) {
        return Err(Error::Fit("power-law fit needs positive sizes and values".into()));
    }
    let design = DMatrix::from_fn(sizes.len(), 2, |i, j| if j == 0 { 1.0 } else { sizes[i].ln() });
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let log_sigma: Option<Vec<f64>> = stderr.map(|s| s.iter().zip(values).map(|(e, v)| e / v).collect());
    let fit = linear_fit(&design, &y, log_sigma.as_deref())?;
    let a = fit.coef[0].exp();
    Ok(FitResult::from_pairs(
        &names(&["a", "b"]),
        &[a, fit.coef[1]],
        &[a * fit.stderr[0], fit.stderr[1]],
        fit.mse,
        sizes.len(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLawComparison {
    pub power: FitResult,
    /// `S = c ln L + s0`.
    pub log: FitResult,
    /// Mean squared residuals of both models on the linear `S` scale.
    pub power_mse: f64,
    pub log_mse: f64,
    /// `|b| < 0.1` and the logarithmic model fits better.
    pub log_consistent: bool,
}

pub fn compare_log_law(sizes: &[f64], values: &[f64]) -> Result<LogLawComparison> {
    let power = fit_power_law(sizes, values, None)?;
    let design = DMatrix::from_fn(sizes.len(), 2, |i, j| if j == 0 { sizes[i].ln() } else { 1.0 });
    let lf = linear_fit(&design, values, None)?;
    let log = FitResult::from_pairs(&names(&["c", "s0"]), &lf.coef, &lf.stderr, lf.mse, sizes.len());
    let (a, b) = (power.get("a"), power.get("b"));
    let power_mse =
        sizes.iter().zip(values).map(|(l, s)| (s - a * l.powf(b)).powi(2)).sum::<f64>() / sizes.len() as f64;
    let log_mse = lf.mse;
    let log_consistent = b.abs() < 0.1 && log_mse < power_mse;
    Ok(LogLawComparison { power, log, power_mse, log_mse, log_consistent })
}

/// `S(l) = (c/3) ln((L/π) sin(πl/L)) + s0`.
pub fn fit_central_charge(subsystem: &[usize], values: &[f64], sites: usize) -> Result<FitResult> {
    let x: Vec<f64> = subsystem.iter().map(|&l| l as f64).collect();
    check_lengths(&x, values, 5)?;
    if subsystem.iter().any(|&l| l == 0 || l >= sites) {
        return Err(Error::Fit(format!("subsystem sizes must lie in 1..{sites}")));
    }
    let l = sites as f64;
    let chord: Vec<f64> = x
        .iter()
        .map(|&li| ((l / std::f64::consts::PI) * (std::f64::consts::PI * li / l).sin()).ln() / 3.0)
        .collect();
    let spread = chord.iter().cloned().fold(f64::MIN, f64::max) - chord.iter().cloned().fold(f64::MAX, f64::min);
    if !(spread > 1e-12) {
        return Err(Error::Fit("chord lengths are degenerate".into()));
    }
    let design = DMatrix::from_fn(x.len(), 2, |i, j| if j == 0 { chord[i] } else { 1.0 });
    let fit = linear_fit(&design, values, None)?;
    Ok(FitResult::from_pairs(&names(&["c", "s0"]), &fit.coef, &fit.stderr, fit.mse, x.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayLaw {
    PowerLaw,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFit {
    pub decay: DecayLaw,
    /// `|C| = A L^{−p}`, parameters `amplitude`, `p`.
    pub power: FitResult,
    /// `|C| = A e^{−L/ξ}`, parameters `amplitude`, `xi`.
    pub exponential: FitResult,
}

impl CorrelationFit {
    pub fn winner(&self) -> &FitResult {
        match self.decay {
            DecayLaw::PowerLaw => &self.power,
            DecayLaw::Exponential => &self.exponential,
        }
    }
}

/// Fits both decay laws to `|C(L)|` and keeps the one with the smaller log-space residual.
pub fn fit_correlation_exponent(sizes: &[f64], correlations: &[f64]) -> Result<CorrelationFit> {
    check_lengths(sizes, correlations, 4)?;
    if correlations.contains(&0.0) || sizes.iter().any(|l| *l <= 0.0) {
        return Err(Error::Fit("correlation fit needs nonzero magnitudes and positive sizes".into()));
    }
    let y: Vec<f64> = correlations.iter().map(|c| c.abs().ln()).collect();
    let n = sizes.len();
    let pd = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { sizes[i].ln() });
    let pf = linear_fit(&pd, &y, None)?;
    let ed = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { sizes[i] });
    let ef = linear_fit(&ed, &y, None)?;
    let amp_p = pf.coef[0].exp();
    let power = FitResult::from_pairs(
        &names(&["amplitude", "p"]),
        &[amp_p, -pf.coef[1]],
        &[amp_p * pf.stderr[0], pf.stderr[1]],
        pf.mse,
        n,
    );
    let amp_e = ef.coef[0].exp();
    let xi = -1.0 / ef.coef[1];
    let exponential = FitResult::from_pairs(
        &names(&["amplitude", "xi"]),
        &[amp_e, xi],
        &[amp_e * ef.stderr[0], ef.stderr[1] * xi * xi],
        ef.mse,
        n,
    );
    let decay = if pf.mse <= ef.mse { DecayLaw::PowerLaw } else { DecayLaw::Exponential };
    Ok(CorrelationFit { decay, power, exponential })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadeFit {
    pub order: usize,
    /// `a0..an`, `b1..bn` in the original size variable.
    pub fit: FitResult,
    /// `lim_{L→∞} R(L)`; infinite when the numerator has the higher degree.
    pub asymptote: f64,
    /// A denominator root lies inside the fitted size range.
    pub singular: bool,
}

struct Rational<'a> {
    a: &'a [f64],
    b: &'a [f64],
}

impl Rational<'_> {
    fn parts(&self, x: f64) -> (f64, f64) {
        let num = self.a.iter().rev().fold(0.0, |acc, c| acc * x + c);
        let den = self.b.iter().rev().fold(0.0, |acc, c| acc * x + c) * x + 1.0;
        (num, den)
    }
}

fn split_pade(theta: &[f64], n: usize) -> (&[f64], &[f64]) {
    theta.split_at(n + 1)
}

fn pade_residuals(theta: &[f64], n: usize, x: &[f64], y: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let (a, b) = split_pade(theta, n);
    let r = Rational { a, b };
    let p = 2 * n + 1;
    let mut res = DVector::zeros(x.len());
    let mut jac = DMatrix::zeros(x.len(), p);
    for (i, (&xi, &yi)) in x.iter().zip(y).enumerate() {
        let (num, den) = r.parts(xi);
        let val = num / den;
        res[i] = yi - val;
        let mut pw = 1.0;
        for k in 0..=n {
            jac[(i, k)] = pw / den;
            if k >= 1 {
                jac[(i, n + k)] = -val * pw / den;
            }
            pw *= xi;
        }
    }
    (res, jac)
}

/// Least-squares Padé approximant `R(L) = Σ a_k L^k / (1 + Σ b_k L^k)` of order `n`.
///
/// The fit runs in `u = L/L_max`: a linearized solve gives the start and
/// Levenberg–Marquardt polishes it.
pub fn pade_fit(sizes: &[f64], values: &[f64], order: usize) -> Result<PadeFit> {
    if !(1..=3).contains(&order) {
        return Err(Error::Fit(format!("Padé order must be 1, 2 or 3, got {order}")));
    }
    let n = order;
    check_lengths(sizes, values, 2 * n + 2)?;
    let scale = sizes.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(scale > 0.0) {
        return Err(Error::Fit("sizes must not all vanish".into()));
    }
    let x: Vec<f64> = sizes.iter().map(|l| l / scale).collect();
    let m = x.len();
    let p = 2 * n + 1;

    // y(1 + Σ b x^k) = Σ a x^k  ⇒  y = Σ a x^k − y Σ b x^k
    let design = DMatrix::from_fn(m, p, |i, j| {
        if j <= n {
            x[i].powi(j as i32)
        } else {
            -values[i] * x[i].powi((j - n) as i32)
        }
    });
    let mut theta: Vec<f64> = lstsq(&design, &DVector::from_column_slice(values))?.iter().copied().collect();
    let rss_of = |t: &[f64]| pade_residuals(t, n, &x, values).0.norm_squared();
    let mut rss = rss_of(&theta);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (res, jac) = pade_residuals(&theta, n, &x, values);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * res;
        let mut improved = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            for k in 0..p {
                lhs[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&grad) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            let trial_rss = rss_of(&trial);
            if trial_rss.is_finite() && trial_rss < rss {
                let gain = (rss - trial_rss) / rss.max(f64::MIN_POSITIVE);
                theta = trial;
                rss = trial_rss;
                lambda = (lambda / 3.0).max(1e-15);
                improved = gain > 1e-15;
                break;
            }
            lambda *= 4.0;
        }
        if !improved || rss == 0.0 {
            break;
        }
    }

    let (_, jac) = pade_residuals(&theta, n, &x, values);
    let cov = pinv_sym(&(jac.transpose() * &jac));
    let s2 = if m > p { rss / (m - p) as f64 } else { 0.0 };
    let (a, b) = split_pade(&theta, n);
    let rational = Rational { a, b };
    let (xmin, xmax) = x.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let singular = (0..=2000).any(|k| {
        let xi = xmin + (xmax - xmin) * k as f64 / 2000.0;
        let (_, d0) = rational.parts(xi);
        let (_, d1) = rational.parts(xi + (xmax - xmin) / 2000.0);
        d0 == 0.0 || (k < 2000 && d0.signum() != d1.signum())
    });
    let asymptote = rational_limit(a, b);

    let mut pnames = Vec::with_capacity(p);
    let mut values_out = Vec::with_capacity(p);
    let mut errors_out = Vec::with_capacity(p);
    for k in 0..=n {
        let f = scale.powi(-(k as i32));
        pnames.push(format!("a{k}"));
        values_out.push(a[k] * f);
        errors_out.push((cov[(k, k)] * s2).max(0.0).sqrt() * f);
    }
    for k in 1..=n {
        let f = scale.powi(-(k as i32));
        pnames.push(format!("b{k}"));
        values_out.push(b[k - 1] * f);
        errors_out.push((cov[(n + k, n + k)] * s2).max(0.0).sqrt() * f);
    }
    Ok(PadeFit {
        order: n,
        fit: FitResult::from_pairs(&pnames, &values_out, &errors_out, rss / m as f64, m),
        asymptote,
        singular,
    })
}

/// Limit at infinity from the leading nonzero coefficients.
fn rational_limit(a: &[f64], b: &[f64]) -> f64 {
    let tiny = 1e-12 * a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    let lead = |c: &[f64], offset: usize| {
        c.iter().enumerate().rev().find(|(_, v)| v.abs() > tiny).map(|(k, v)| (k + offset, *v))
    };
    let (dn, cn) = lead(a, 0).unwrap_or((0, 0.0));
    let (dd, cd) = lead(b, 1).unwrap_or((0, 1.0));
    match dn.cmp(&dd) {
        std::cmp::Ordering::Equal => cn / cd,
        std::cmp::Ordering::Less => 0.0,
        std::cmp::Ordering::Greater => f64::INFINITY * (cn / cd).signum(),
    }
}

/// Piecewise-linear interpolation on a sorted curve; `None` outside its range.
pub fn interpolate(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let (first, last) = (curve.first()?, curve.last()?);
    if x < first.0 || x > last.0 {
        return None;
    }
    let k = curve.partition_point(|p| p.0 < x);
    if k == 0 {
        return Some(first.1);
    }
    let (x0, y0) = curve[k - 1];
    let (x1, y1) = curve[k];
    if x1 == x0 {
        return Some(y1);
    }
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCrossing {
    pub smaller: usize,
    pub larger: usize,
    pub control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingResult {
    /// `critical` is the mean pairwise crossing; its stderr is the half-spread.
    pub fit: FitResult,
    pub pairs: Vec<PairCrossing>,
}

/// Crossings of linearly interpolated curves for consecutive sizes.
///
/// When a pair crosses more than once the first crossing in the window is used.
pub fn crossing_point(data: &ScalingDataset) -> Result<CrossingResult> {
    data.validate_curves()?;
    let sizes = data.sizes();
    let mut pairs = Vec::new();
    for w in sizes.windows(2) {
        let (c0, c1) = (data.curve(w[0]), data.curve(w[1]));
        let lo = c0[0].0.max(c1[0].0);
        let hi = c0[c0.len() - 1].0.min(c1[c1.len() - 1].0);
        let mut grid: Vec<f64> =
            c0.iter().chain(c1.iter()).map(|p| p.0).filter(|x| *x >= lo && *x <= hi).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let diff: Vec<(f64, f64)> = grid
            .iter()
            .filter_map(|&x| Some((x, interpolate(&c1, x)? - interpolate(&c0, x)?)))
            .collect();
        let found = diff.windows(2).find_map(|seg| {
            let ((x0, d0), (x1, d1)) = (seg[0], seg[1]);
            if d0 == 0.0 {
                Some(x0)
            } else if d0 * d1 < 0.0 {
                Some(x0 + (x1 - x0) * d0 / (d0 - d1))
            } else {
                None
            }
        });
        let found = found.or_else(|| diff.last().filter(|d| d.1 == 0.0).map(|d| d.0));
        if let Some(x) = found {
            pairs.push(PairCrossing { smaller: w[0], larger: w[1], control: x });
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoCrossing);
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.control).collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let half = 0.5 * (xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min));
    let mse = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    Ok(CrossingResult {
        fit: FitResult::from_pairs(&names(&["critical"]), &[mean], &[half], mse, xs.len()),
        pairs,
    })
}

/// `value − S(critical, L)` with `S(critical, L)` interpolated along each size's curve.
pub fn subtract_critical_column(data: &ScalingDataset, critical: f64) -> Result<ScalingDataset> {
    let mut column = BTreeMap::new();
    for l in data.sizes() {
        let curve = data.curve(l);
        let (lo, hi) = (curve[0].0, curve[curve.len() - 1].0);
        let v = interpolate(&curve, critical).ok_or(Error::OutOfRange { value: critical, lo, hi })?;
        column.insert(l, v);
    }
    Ok(ScalingDataset {
        points: data.points.iter().map(|p| ScalingPoint { value: p.value - column[&p.size], ..*p }).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseAnsatz {
    /// `x = (control − critical)·L^{1/ν}`.
    Algebraic,
    /// `x = (control − critical)·(ln L)²`.
    Bkt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollapseAxis {
    AlphaAtFixedGamma,
    GammaAtFixedAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollapseConfig {
    pub critical_range: (f64, f64),
    pub critical_steps: usize,
    pub nu_range: (f64, f64),
    pub nu_steps: usize,
    /// Degree of the scaling polynomial `Q`.
    pub degree: usize,
    /// Size that defines `Q`; the median size when absent.
    pub reference_size: Option<usize>,
    /// Multiples of the minimum error that bound the reported uncertainty regions.
    pub contour_levels: Vec<f64>,
}

impl Default for CollapseConfig {
    fn default() -> Self {
        CollapseConfig {
            critical_range: (0.5, 1.5),
            critical_steps: 41,
            nu_range: (1.0, 10.0),
            nu_steps: 37,
            degree: 5,
            reference_size: None,
            contour_levels: vec![4.0, 1.4],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    pub critical: f64,
    /// NaN for the BKT ansatz.
    pub nu: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub level: f64,
    pub critical_range: (f64, f64),
    pub nu_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    pub ansatz: CollapseAnsatz,
    pub axis: CollapseAxis,
    /// `critical`, plus `nu` for the algebraic ansatz; stderr is the half-width
    /// of the first contour.
    pub fit: FitResult,
    pub reference_size: usize,
    pub degree: usize,
    pub landscape: Vec<LandscapePoint>,
    pub contours: Vec<Contour>,
}

impl CollapseResult {
    /// Writes `critical,nu,mse` rows.
    pub fn write_landscape_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("critical,nu,mse\n");
        for p in &self.landscape {
            text.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", p.critical, p.nu, p.mse));
        }
        atomic_write(path, text.as_bytes())
    }
}

fn grid(range: (f64, f64), steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![range.0];
    }
    (0..steps).map(|k| range.0 + (range.1 - range.0) * k as f64 / (steps - 1) as f64).collect()
}

fn scaling_variable(ansatz: CollapseAnsatz, control: f64, critical: f64, size: usize, nu: f64) -> f64 {
    let l = size as f64;
    match ansatz {
        CollapseAnsatz::Algebraic => (control - critical) * l.powf(1.0 / nu),
        CollapseAnsatz::Bkt => (control - critical) * l.ln().powi(2),
    }
}

/// Collapse error at one candidate; infinite when too few scored points overlap the reference range.
fn collapse_error(
    data: &ScalingDataset,
    ansatz: CollapseAnsatz,
    critical: f64,
    nu: f64,
    reference: usize,
    degree: usize,
) -> f64 {
    let Ok(shifted) = subtract_critical_column(data, critical) else {
        return f64::INFINITY;
    };
    let xs: Vec<(f64, f64, bool)> = shifted
        .points
        .iter()
        .map(|p| (scaling_variable(ansatz, p.control, critical, p.size, nu), p.value, p.size == reference))
        .collect();
    let reference_points: Vec<(f64, f64)> = xs.iter().filter(|p| p.2).map(|p| (p.0, p.1)).collect();
    let (xmin, xmax) = reference_points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let span = (xmax - xmin).max(f64::MIN_POSITIVE);
    let centre = 0.5 * (xmax + xmin);
    let deg = degree.min(reference_points.len().saturating_sub(1));
    let design = DMatrix::from_fn(reference_points.len(), deg + 1, |i, j| {
        (2.0 * (reference_points[i].0 - centre) / span).powi(j as i32)
    });
    let y = DVector::from_iterator(reference_points.len(), reference_points.iter().map(|p| p.1));
    let Ok(coef) = lstsq(&design, &y) else {
        return f64::INFINITY;
    };
    let scored: Vec<&(f64, f64, bool)> = xs.iter().filter(|p| !p.2).collect();
    let inside: Vec<&&(f64, f64, bool)> = scored.iter().filter(|p| p.0 >= xmin && p.0 <= xmax).collect();
    if scored.is_empty() || 2 * inside.len() < scored.len() {
        return f64::INFINITY;
    }
    let sq: f64 = inside
        .iter()
        .map(|p| {
            let u = 2.0 * (p.0 - centre) / span;
            let q = coef.iter().rev().fold(0.0, |acc, c| acc * u + c);
            (p.1 - q).powi(2)
        })
        .sum();
    sq / inside.len() as f64
}

/// Grid search of the collapse error over `(critical, ν)`.
pub fn data_collapse(
    data: &ScalingDataset,
    ansatz: CollapseAnsatz,
    axis: CollapseAxis,
    config: &CollapseConfig,
) -> Result<CollapseResult> {
    data.validate_curves()?;
    let sizes = data.sizes();
    if sizes.len() < 2 {
        return Err(Error::Fit("collapse needs at least two sizes".into()));
    }
    let reference = match config.reference_size {
        Some(r) if sizes.contains(&r) => r,
        Some(r) => return Err(Error::Fit(format!("reference size {r} is not in the dataset"))),
        None => sizes[sizes.len() / 2],
    };
    let (lo, hi) = sizes.iter().fold((f64::MIN, f64::MAX), |(lo, hi), &l| {
        let c = data.curve(l);
        (lo.max(c[0].0), hi.min(c[c.len() - 1].0))
    });
    let (cmin, cmax) = config.critical_range;
    if cmin < lo || cmax > hi || cmin > cmax {
        return Err(Error::OutOfRange { value: if cmin < lo { cmin } else { cmax }, lo, hi });
    }
    let crits = grid(config.critical_range, config.critical_steps);
    let nus = match ansatz {
        CollapseAnsatz::Algebraic => {
            if !(config.nu_range.0 > 0.0) {
                return Err(Error::Fit("nu range must be positive".into()));
            }
            grid(config.nu_range, config.nu_steps)
        }
        CollapseAnsatz::Bkt => vec![f64::NAN],
    };
    let candidates: Vec<(f64, f64)> = crits.iter().flat_map(|&c| nus.iter().map(move |&n| (c, n))).collect();
    let landscape: Vec<LandscapePoint> = candidates
        .par_iter()
        .map(|&(critical, nu)| LandscapePoint {
            critical,
            nu,
            mse: collapse_error(data, ansatz, critical, nu, reference, config.degree),
        })
        .collect();
    let best = landscape
        .iter()
        .filter(|p| p.mse.is_finite())
        .min_by(|a, b| a.mse.total_cmp(&b.mse))
        .copied()
        .ok_or_else(|| Error::Fit("no candidate overlaps the reference scaling window".into()))?;
    let contours: Vec<Contour> = config
        .contour_levels
        .iter()
        .map(|&level| {
            let bound = level * best.mse;
            let inside = landscape.iter().filter(|p| p.mse <= bound);
            let (c_lo, c_hi, n_lo, n_hi) = inside.fold(
                (best.critical, best.critical, best.nu, best.nu),
                |(a, b, c, d), p| (a.min(p.critical), b.max(p.critical), c.min(p.nu), d.max(p.nu)),
            );
            Contour { level, critical_range: (c_lo, c_hi), nu_range: (n_lo, n_hi) }
        })
        .collect();
    let (c_err, n_err) = contours
        .first()
        .map(|c| (0.5 * (c.critical_range.1 - c.critical_range.0), 0.5 * (c.nu_range.1 - c.nu_range.0)))
        .unwrap_or((f64::NAN, f64::NAN));
    let n_points = data.points.iter().filter(|p| p.size != reference).count();
    let fit = match ansatz {
        CollapseAnsatz::Algebraic => FitResult::from_pairs(
            &names(&["critical", "nu"]),
            &[best.critical, best.nu],
            &[c_err, n_err],
            best.mse,
            n_points,
        ),
        CollapseAnsatz::Bkt => {
            FitResult::from_pairs(&names(&["critical"]), &[best.critical], &[c_err], best.mse, n_points)
        }
    };
    Ok(CollapseResult { ansatz, axis, fit, reference_size: reference, degree: config.degree, landscape, contours })
}

#[cfg(test)]
mod tests;
