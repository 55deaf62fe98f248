//! Deterministic covariance dynamics of the monitored chain.
//!
//! The covariance obeys the matrix Riccati equation
//!
//! ```text
//! dΓ/dt = FΓ + ΓFᵀ + Q − ΓRΓ,   F = σh,  Q = σOᵀOσᵀ,  R = 4η·OᵀO
//! ```
//!
//! Two integrators are available. [`Scheme::Rk4`] is classical fixed-step
//! Runge–Kutta. [`Scheme::Propagator`] uses the linear-fractional form of the
//! Riccati flow: with `[U; V]' = [[F, Q], [R, −Fᵀ]]·[U; V]` and `Γ = U V⁻¹`,
//! one step is `Γ ↦ (Φ₁₁Γ + Φ₁₂)(Φ₂₁Γ + Φ₂₂)⁻¹` for `Φ = exp(Δt·𝓗)`. It is
//! exact up to rounding for any step size.
//!
//! For position-linear jumps and a momentum block `Ω·1` the pure steady state
//! (η = 1) is the Gaussian ground state of `H_eff = Ωp²/2 + xᵀÃx/2` with
//! `Ã = A − 2i·(OᵀO)ₓₓ`: writing the wave function as `exp(−xᵀZx/2)`,
//! `Z = (Ã/Ω)^{1/2}`. For η < 1 the flow for `√η·Γ` is the η = 1 flow with
//! `OᵀO → √η·OᵀO`, which gives the mixed steady state in closed form too.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::gaussian_states::{
    entanglement_entropy, log_negativity, read_checkpoint, scaled_identity_state,
    symplectic_spectrum, vacuum_state, write_checkpoint, CovarianceState, Region,
};
use crate::lattice_model::{build_hamiltonian, build_jumps, JumpOperatorSet, ModelSpec, QuadraticHamiltonian};
use crate::linalg::{self, C64};
use crate::{Error, Result};

/// Entries beyond this magnitude are reported as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e12;
/// Allowed violation of `κ ≥ 1/2` along a trajectory before it is reported.
pub const UNCERTAINTY_BREACH: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    Propagator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfig {
    pub path: PathBuf,
    /// Steps between checkpoint writes.
    pub every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_max: f64,
    pub steady_tol: f64,
    pub symmetrize_every: usize,
    /// Steps between recorded samples.
    pub record_every: usize,
    pub scheme: Scheme,
    /// Stop as soon as the normalized residual drops below `steady_tol`.
    pub stop_at_steady: bool,
    pub checkpoint: Option<CheckpointConfig>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-3,
            t_max: 100.0,
            steady_tol: 1e-9,
            symmetrize_every: 10,
            record_every: 100,
            scheme: Scheme::Rk4,
            stop_at_steady: true,
            checkpoint: None,
        }
    }
}

impl IntegratorConfig {
    /// Exact-propagator stepping; `dt` is an upper bound on the step.
    pub fn propagator(dt: f64, t_max: f64) -> Self {
        IntegratorConfig {
            dt,
            t_max,
            scheme: Scheme::Propagator,
            symmetrize_every: 1,
            record_every: 1,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_max > 0.0) || !(self.steady_tol > 0.0) {
            return Err(Error::Config("dt, t_max and steady_tol must be positive".into()));
        }
        if self.symmetrize_every == 0 || self.record_every == 0 {
            return Err(Error::Config("symmetrize_every and record_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Precomputed pieces of the Riccati right-hand side.
#[derive(Debug, Clone)]
pub struct RiccatiSystem {
    drift: DMatrix<f64>,
    noise: DMatrix<f64>,
    gain: DMatrix<f64>,
    gain_diagonal: Option<DVector<f64>>,
}

impl RiccatiSystem {
    pub fn new(h: &DMatrix<f64>, oto: &DMatrix<f64>, eta: f64) -> Result<Self> {
        let dim = h.nrows();
        if h.ncols() != dim || oto.shape() != (dim, dim) || !dim.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "h is {}×{}, OᵀO is {}×{}",
                h.nrows(),
                h.ncols(),
                oto.nrows(),
                oto.ncols()
            )));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidModel(format!("eta must lie in [0, 1], got {eta}")));
        }
        let sigma = crate::lattice_model::symplectic_form(dim / 2);
        let drift = &sigma * h;
        let noise = &sigma * oto * sigma.transpose();
        let gain = oto * (4.0 * eta);
        let gain_diagonal = linalg::is_diagonal(&gain).then(|| gain.diagonal());
        Ok(RiccatiSystem { drift, noise, gain, gain_diagonal })
    }

    pub fn from_model(model: &ModelSpec) -> Result<Self> {
        let ham = build_hamiltonian(model)?;
        let jumps = build_jumps(model)?;
        RiccatiSystem::new(&ham.h, &jumps.oto, model.eta)
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn rhs(&self, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        let fg = &self.drift * gamma;
        let mut out = &fg + fg.transpose() + &self.noise;
        let quad = match &self.gain_diagonal {
            Some(d) => linalg::sandwich_diagonal(gamma, d),
            None => gamma * &self.gain * gamma,
        };
        // ΓRΓ is symmetric in exact arithmetic
        let n = out.nrows();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] -= 0.5 * (quad[(i, j)] + quad[(j, i)]);
            }
        }
        out
    }

    /// `‖rhs‖_F / ‖Γ‖_F`.
    pub fn residual(&self, gamma: &DMatrix<f64>) -> f64 {
        self.rhs(gamma).norm() / gamma.norm()
    }

    /// The Hamiltonian generator `[[F, Q], [R, −Fᵀ]]` of the linear-fractional form.
    fn generator(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut g = DMatrix::zeros(2 * n, 2 * n);
        g.view_mut((0, 0), (n, n)).copy_from(&self.drift);
        g.view_mut((0, n), (n, n)).copy_from(&self.noise);
        g.view_mut((n, 0), (n, n)).copy_from(&self.gain);
        g.view_mut((n, n), (n, n)).copy_from(&(-self.drift.transpose()));
        g
    }

    /// Bound on the modulus of the generator's eigenvalues, used to size propagator steps.
    fn frequency_bound(&self) -> f64 {
        let n = self.dim() / 2;
        let row_sum = |m: &DMatrix<f64>, rows: std::ops::Range<usize>| {
            rows.map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
        };
        // F = [[0, Ω], [−A, 0]]; |ω|² ≤ Ω·(‖A‖ + ‖Q‖ + ‖R‖/4)
        let omega = row_sum(&self.drift, 0..n);
        let a = row_sum(&self.drift, n..2 * n);
        let q = row_sum(&self.noise, 0..2 * n);
        let r = row_sum(&self.gain, 0..2 * n);
        (omega.max(1e-12) * (a + q + 0.25 * r)).sqrt() + 0.25 * r
    }
}

/// Right-hand side `σhΓ + Γ(σh)ᵀ + σOᵀOσᵀ − 4ηΓOᵀOΓ`.
pub fn riccati_rhs(gamma: &DMatrix<f64>, h: &DMatrix<f64>, oto: &DMatrix<f64>, eta: f64) -> Result<DMatrix<f64>> {
    if gamma.shape() != h.shape() {
        return Err(Error::Shape(format!(
            "Γ is {}×{} but h is {}×{}",
            gamma.nrows(),
            gamma.ncols(),
            h.nrows(),
            h.ncols()
        )));
    }
    let out = RiccatiSystem::new(h, oto, eta)?.rhs(gamma);
    debug_assert!(linalg::asymmetry(&out) <= 1e-12 * linalg::max_abs(&out).max(1.0));
    Ok(out)
}

/// Which observables [`evolve`] samples along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub region: Region,
    pub negativity: bool,
}

impl Recording {
    /// Half-chain entropy, plus negativity when detection is imperfect.
    pub fn half_chain(model: &ModelSpec) -> Result<Self> {
        Ok(Recording { region: Region::half_chain(model.sites)?, negativity: model.eta < 1.0 })
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub entropies: Vec<f64>,
    pub negativities: Option<Vec<f64>>,
    /// Smallest symplectic eigenvalue of the global state at each sample.
    pub min_symplectic: Vec<f64>,
    /// Largest `|Γ − Γᵀ|` entry at each sample, before symmetrization.
    pub asymmetry: Vec<f64>,
    pub final_state: CovarianceState,
    pub converged: bool,
    pub residual: f64,
}

enum Stepper {
    Rk4 { dt: f64 },
    Propagator { phi: DMatrix<f64>, dim: usize },
}

impl Stepper {
    fn new(system: &RiccatiSystem, config: &IntegratorConfig) -> (Self, f64) {
        match config.scheme {
            Scheme::Rk4 => (Stepper::Rk4 { dt: config.dt }, config.dt),
            Scheme::Propagator => {
                let cap = 4.0 / system.frequency_bound().max(1e-12);
                let dt = config.dt.min(cap);
                let phi = (system.generator() * dt).exp();
                (Stepper::Propagator { phi, dim: system.dim() }, dt)
            }
        }
    }

    /// Advances one step; the returned residual refers to the state *before* the step.
    fn step(&self, system: &RiccatiSystem, gamma: &DMatrix<f64>, want_residual: bool) -> Result<(DMatrix<f64>, Option<f64>)> {
        match self {
            Stepper::Rk4 { dt } => {
                let dt = *dt;
                let k1 = system.rhs(gamma);
                let residual = k1.norm() / gamma.norm();
                let k2 = system.rhs(&(gamma + &k1 * (0.5 * dt)));
                let k3 = system.rhs(&(gamma + &k2 * (0.5 * dt)));
                let k4 = system.rhs(&(gamma + &k3 * dt));
                let next = gamma + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
                Ok((next, Some(residual)))
            }
            Stepper::Propagator { phi, dim } => {
                let n = *dim;
                let residual = want_residual.then(|| system.residual(gamma));
                let u = phi.view((0, 0), (n, n)) * gamma + phi.view((0, n), (n, n));
                let v = phi.view((n, 0), (n, n)) * gamma + phi.view((n, n), (n, n));
                // Γ' = U V⁻¹, i.e. Vᵀ Γ'ᵀ = Uᵀ
                let lu = v.transpose().lu();
                let next_t = lu.solve(&u.transpose()).ok_or(Error::EigenSolve)?;
                Ok((next_t.transpose(), residual))
            }
        }
    }
}

struct Sampler<'a> {
    recording: Option<&'a Recording>,
    record: TrajectoryRecord,
}

impl<'a> Sampler<'a> {
    fn sample(&mut self, gamma: &DMatrix<f64>, t: f64, asym: f64) -> Result<()> {
        let spec = symplectic_spectrum(gamma).map_err(|_| Error::Divergence {
            time: t,
            reason: "covariance matrix lost positive definiteness".into(),
        })?;
        let min = spec.min();
        if min < 0.5 - UNCERTAINTY_BREACH {
            return Err(Error::Divergence {
                time: t,
                reason: format!("uncertainty relation violated (min symplectic eigenvalue {min})"),
            });
        }
        let rec = &mut self.record;
        rec.times.push(t);
        rec.min_symplectic.push(min);
        rec.asymmetry.push(asym);
        if let Some(recording) = self.recording {
            let st = CovarianceState::from_symmetric_unchecked(gamma.clone(), t);
            rec.entropies.push(entanglement_entropy(&st, &recording.region)?);
            if let Some(neg) = rec.negativities.as_mut() {
                neg.push(log_negativity(&st, &recording.region)?);
            }
        }
        Ok(())
    }
}

/// Integrates the Riccati flow of `model` from `initial`.
///
/// Samples are taken every `record_every` steps and at the final time. When
/// `recording` is `None` only the uncertainty and symmetry diagnostics are kept.
pub fn evolve(
    initial: &CovarianceState,
    model: &ModelSpec,
    config: &IntegratorConfig,
    recording: Option<&Recording>,
) -> Result<TrajectoryRecord> {
    let system = RiccatiSystem::from_model(model)?;
    evolve_system(initial, &system, config, recording)
}

pub fn evolve_system(
    initial: &CovarianceState,
    system: &RiccatiSystem,
    config: &IntegratorConfig,
    recording: Option<&Recording>,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    if initial.matrix().nrows() != system.dim() {
        return Err(Error::Shape("initial state does not match the model size".into()));
    }
    // integrated states carry O(dt⁴) purity errors, so checkpoints get the trajectory tolerance
    let start_min = symplectic_spectrum(initial.matrix()).map(|s| s.min()).unwrap_or(f64::NAN);
    if !(start_min >= 0.5 - UNCERTAINTY_BREACH) {
        return Err(Error::InvalidModel(format!(
            "initial state violates the uncertainty relation (min symplectic eigenvalue {start_min})"
        )));
    }
    let (stepper, dt) = Stepper::new(system, config);
    let n_steps = (config.t_max / dt).ceil() as usize;
    let mut sampler = Sampler {
        recording,
        record: TrajectoryRecord {
            times: Vec::new(),
            entropies: Vec::new(),
            negativities: recording.and_then(|r| r.negativity.then(Vec::new)),
            min_symplectic: Vec::new(),
            asymmetry: Vec::new(),
            final_state: initial.clone(),
            converged: false,
            residual: f64::NAN,
        },
    };

    let mut gamma = initial.matrix().clone();
    let t0 = initial.time;
    sampler.sample(&gamma, t0, linalg::asymmetry(&gamma))?;
    let mut residual = f64::NAN;
    let mut step = 0usize;
    let mut converged = false;
    while step < n_steps {
        let (mut next, res) = stepper.step(system, &gamma, true)?;
        if let Some(r) = res {
            residual = r;
            if r < config.steady_tol {
                converged = true;
                if config.stop_at_steady {
                    break;
                }
            }
        }
        step += 1;
        let t = t0 + step as f64 * dt;
        let worst = linalg::max_abs(&next);
        if !worst.is_finite() || worst > DIVERGENCE_BOUND {
            return Err(Error::Divergence { time: t, reason: format!("entry magnitude {worst:e}") });
        }
        let asym = if step.is_multiple_of(config.symmetrize_every) || step.is_multiple_of(config.record_every) {
            let a = linalg::asymmetry(&next);
            if step.is_multiple_of(config.symmetrize_every) {
                linalg::symmetrize(&mut next);
            }
            a
        } else {
            0.0
        };
        gamma = next;
        if step.is_multiple_of(config.record_every) {
            sampler.sample(&gamma, t, asym)?;
        }
        if let Some(ck) = &config.checkpoint {
            if ck.every > 0 && step.is_multiple_of(ck.every) {
                write_checkpoint(&ck.path, &CovarianceState::from_symmetric_unchecked(gamma.clone(), t))?;
            }
        }
    }
    let t_final = t0 + step as f64 * dt;
    if sampler.record.times.last().copied() != Some(t_final) {
        let asym = linalg::asymmetry(&gamma);
        sampler.sample(&gamma, t_final, asym)?;
    }
    if !converged {
        residual = system.residual(&gamma);
        converged = residual < config.steady_tol;
    }
    linalg::symmetrize(&mut gamma);
    let mut record = sampler.record;
    record.final_state = CovarianceState::from_symmetric_unchecked(gamma, t_final);
    record.converged = converged;
    record.residual = residual;
    Ok(record)
}

/// Continues an integration from a checkpoint written by [`evolve`].
pub fn resume_from_checkpoint(
    model: &ModelSpec,
    config: &IntegratorConfig,
    recording: Option<&Recording>,
) -> Result<TrajectoryRecord> {
    let ck = config
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("no checkpoint configured".into()))?;
    let state = read_checkpoint(&ck.path)?;
    let remaining = IntegratorConfig { t_max: (config.t_max - state.time).max(config.dt), ..config.clone() };
    evolve(&state, model, &remaining, recording)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    /// Integrate from the vacuum until the residual criterion holds.
    Integrate,
    /// Closed form through the complex matrix square root.
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadyConfig {
    pub method: SteadyMethod,
    pub integrator: IntegratorConfig,
    /// Also integrate from `0.7·1` and require agreement.
    pub validate: bool,
    /// Elementwise agreement required by validation; defaults to `10·steady_tol`.
    pub uniqueness_tol: Option<f64>,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        SteadyConfig {
            method: SteadyMethod::Analytic,
            integrator: IntegratorConfig::propagator(1.0, 5_000.0),
            validate: false,
            uniqueness_tol: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub state: CovarianceState,
    pub residual: f64,
    pub method: SteadyMethod,
}

pub fn steady_state(model: &ModelSpec, config: &SteadyConfig) -> Result<SteadyState> {
    let ham = build_hamiltonian(model)?;
    let jumps = build_jumps(model)?;
    let system = RiccatiSystem::new(&ham.h, &jumps.oto, model.eta)?;
    let steady = match config.method {
        SteadyMethod::Analytic => {
            let gamma = analytic_steady_covariance(model, &ham, &jumps)?;
            let residual = system.residual(&gamma);
            if !(residual < config.integrator.steady_tol) {
                return Err(Error::NotConverged { t_max: f64::INFINITY, residual });
            }
            SteadyState {
                state: CovarianceState::from_symmetric_unchecked(gamma, f64::INFINITY),
                residual,
                method: SteadyMethod::Analytic,
            }
        }
        SteadyMethod::Integrate => {
            let rec = evolve_system(&vacuum_state(model.sites), &system, &config.integrator, None)?;
            if !rec.converged {
                return Err(Error::NotConverged { t_max: config.integrator.t_max, residual: rec.residual });
            }
            SteadyState { state: rec.final_state, residual: rec.residual, method: SteadyMethod::Integrate }
        }
    };
    if config.validate {
        let tol = config.uniqueness_tol.unwrap_or(10.0 * config.integrator.steady_tol);
        let other = evolve_system(&scaled_identity_state(model.sites, 0.7), &system, &config.integrator, None)?;
        if !other.converged {
            return Err(Error::NotConverged { t_max: config.integrator.t_max, residual: other.residual });
        }
        let diff = linalg::max_abs_diff(steady.state.matrix(), other.final_state.matrix());
        if diff > tol {
            return Err(Error::NonUnique { difference: diff });
        }
    }
    Ok(steady)
}

/// Pure (η = 1) or rescaled mixed (0 < η < 1) steady covariance in closed form.
pub fn analytic_steady_covariance(
    model: &ModelSpec,
    ham: &QuadraticHamiltonian,
    jumps: &JumpOperatorSet,
) -> Result<DMatrix<f64>> {
    let l = ham.n_modes();
    if !(model.gamma > 0.0) || !(model.eta > 0.0) {
        return Err(Error::InvalidModel(
            "the closed-form steady state needs gamma > 0 and eta > 0".into(),
        ));
    }
    if !jumps.acts_on_positions_only() {
        return Err(Error::InvalidModel("closed-form steady state needs position-linear jumps".into()));
    }
    let omega = ham.h[(l, l)];
    let mom = ham.h.view((l, l), (l, l));
    let cross = ham.h.view((0, l), (l, l));
    let momentum_is_scalar = (0..l).all(|i| {
        (0..l).all(|j| mom[(i, j)] == if i == j { omega } else { 0.0 } && cross[(i, j)] == 0.0)
    });
    if !momentum_is_scalar {
        return Err(Error::InvalidModel("closed-form steady state needs h = A ⊕ Ω·1".into()));
    }
    let root_eta = model.eta.sqrt();
    let a = ham.position_block();
    let d = jumps.position_block();
    let a_eff = DMatrix::<C64>::from_fn(l, l, |i, j| C64::new(a[(i, j)] / omega, -2.0 * root_eta * d[(i, j)] / omega));
    let z = linalg::complex_sqrtm(&a_eff)?;
    let (mut zr, mut zi) = linalg::split_complex(&z);
    linalg::symmetrize(&mut zr);
    linalg::symmetrize(&mut zi);
    let zr_inv = zr.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
    let x = &zr_inv * 0.5;
    let y = -(&x * &zi);
    let p = &zr * 0.5 + &zi * &x * &zi;
    let mut gamma = DMatrix::zeros(2 * l, 2 * l);
    gamma.view_mut((0, 0), (l, l)).copy_from(&x);
    gamma.view_mut((0, l), (l, l)).copy_from(&y);
    gamma.view_mut((l, 0), (l, l)).copy_from(&y.transpose());
    gamma.view_mut((l, l), (l, l)).copy_from(&p);
    linalg::symmetrize(&mut gamma);
    Ok(gamma / root_eta)
}

/// Covariance path consumed by [`sample_mean_trajectory`].
#[derive(Debug, Clone)]
pub enum CovariancePath {
    /// One frozen covariance for all times.
    Steady(DMatrix<f64>),
    /// Piecewise-constant path; each state holds from its time until the next.
    Samples(Vec<CovarianceState>),
}

impl CovariancePath {
    fn at(&self, t: f64) -> &DMatrix<f64> {
        match self {
            CovariancePath::Steady(g) => g,
            CovariancePath::Samples(states) => {
                let idx = states.partition_point(|s| s.time <= t).saturating_sub(1);
                states[idx].matrix()
            }
        }
    }
}

/// Euler–Maruyama sample of `dφ = σhφ dt + 2ΓOᵀ dW`.
///
/// Returns `φ` at `t = 0, dt, 2dt, …` up to `t_max`.
pub fn sample_mean_trajectory(
    path: &CovariancePath,
    phi0: &DVector<f64>,
    ham: &QuadraticHamiltonian,
    jumps: &JumpOperatorSet,
    seed: u64,
    dt: f64,
    t_max: f64,
) -> Result<Vec<DVector<f64>>> {
    let dim = ham.h.nrows();
    if phi0.len() != dim || jumps.dim != dim {
        return Err(Error::Shape("mean vector, Hamiltonian and jumps disagree in dimension".into()));
    }
    if let CovariancePath::Samples(s) = path {
        if s.is_empty() {
            return Err(Error::Shape("empty covariance path".into()));
        }
    }
    if path.at(0.0).nrows() != dim {
        return Err(Error::Shape("covariance path does not match the model size".into()));
    }
    if !(dt > 0.0) || !(t_max >= 0.0) {
        return Err(Error::Config("dt must be positive and t_max nonnegative".into()));
    }
    let drift = ham.drift();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sqrt_dt = dt.sqrt();
    let n_steps = (t_max / dt).round() as usize;
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut phi = phi0.clone();
    out.push(phi.clone());
    for step in 0..n_steps {
        let t = step as f64 * dt;
        let dw = DVector::from_fn(jumps.n_channels(), |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sqrt_dt
        });
        let kick = path.at(t) * jumps.transpose_apply(&dw) * 2.0;
        phi = &phi + &drift * &phi * dt + kick;
        out.push(phi.clone());
    }
    Ok(out)
}

/// Linear fit of `S_A(t)` for one system size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRate {
    pub sites: usize,
    pub rate: f64,
    pub rate_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthRateReport {
    pub rates: Vec<GrowthRate>,
    /// Regression of the rate against `L`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(max − min)/mean` of the rates.
    pub relative_spread: f64,
}

/// Half-chain entanglement growth under unitary evolution from the vacuum.
pub fn entanglement_growth_rate(
    model: &ModelSpec,
    sizes: &[usize],
    fit_window: (f64, f64),
    config: &IntegratorConfig,
) -> Result<GrowthRateReport> {
    if model.gamma != 0.0 {
        return Err(Error::InvalidModel("growth rates are defined for unitary evolution (gamma = 0)".into()));
    }
    let (t0, t1) = fit_window;
    if !(t0 >= 0.0) || !(t1 > t0) || t1 > config.t_max {
        return Err(Error::OutOfRange { value: t1, lo: 0.0, hi: config.t_max });
    }
    if sizes.len() < 2 {
        return Err(Error::Config("growth-rate regression needs at least two sizes".into()));
    }
    let run = IntegratorConfig { t_max: t1, stop_at_steady: false, ..config.clone() };
    let rates = sizes
        .par_iter()
        .map(|&l| {
            let spec = ModelSpec { sites: l, ..model.clone() };
            let recording = Recording { region: Region::half_chain(l)?, negativity: false };
            let rec = evolve(&vacuum_state(l), &spec, &run, Some(&recording))?;
            let (ts, ss): (Vec<f64>, Vec<f64>) = rec
                .times
                .iter()
                .zip(rec.entropies.iter())
                .filter(|(t, _)| **t >= t0 - 1e-12 && **t <= t1 + 1e-12)
                .map(|(t, s)| (*t, *s))
                .unzip();
            if ts.len() < 3 {
                return Err(Error::Config(format!("fit window holds only {} samples", ts.len())));
            }
            let (slope, _, stderr, _) = simple_regression(&ts, &ss);
            Ok(GrowthRate { sites: l, rate: slope, rate_stderr: stderr })
        })
        .collect::<Result<Vec<_>>>()?;
    let ls: Vec<f64> = rates.iter().map(|r| r.sites as f64).collect();
    let rs: Vec<f64> = rates.iter().map(|r| r.rate).collect();
    let (slope, intercept, _, r_squared) = simple_regression(&ls, &rs);
    let mean = rs.iter().sum::<f64>() / rs.len() as f64;
    let spread = rs.iter().cloned().fold(f64::MIN, f64::max) - rs.iter().cloned().fold(f64::MAX, f64::min);
    Ok(GrowthRateReport { rates, slope, intercept, r_squared, relative_spread: spread / mean.abs() })
}

/// Ordinary least-squares line; returns `(slope, intercept, slope stderr, R²)`.
pub(crate) fn simple_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    (slope, intercept, stderr, r2)
}
