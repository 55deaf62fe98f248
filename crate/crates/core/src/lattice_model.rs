//! Hamiltonian and jump-operator matrices of the monitored long-range chain.
//!
//! Phase-space coordinates are always ordered `(x_1..x_L, p_1..p_L)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingRange {
    LongRange,
    NearestNeighbor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Local,
    Nonlocal,
}

impl MeasurementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MeasurementKind::Local => "local",
            MeasurementKind::Nonlocal => "nonlocal",
        }
    }
}

impl std::str::FromStr for MeasurementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(MeasurementKind::Local),
            "nonlocal" => Ok(MeasurementKind::Nonlocal),
            other => Err(Error::Config(format!("unknown measurement kind `{other}`"))),
        }
    }
}

/// Parameters of one monitored chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Number of sites `L`.
    pub sites: usize,
    /// Power-law exponent of the coupling (and of the nonlocal jumps).
    pub alpha: f64,
    /// Trap frequency.
    #[serde(default = "unit")]
    pub omega: f64,
    /// Coupling strength.
    #[serde(default = "unit")]
    pub kappa_coupling: f64,
    #[serde(default = "default_range")]
    pub coupling_range: CouplingRange,
    pub measurement: MeasurementKind,
    /// Measurement strength.
    pub gamma: f64,
    /// Measurement efficiency.
    #[serde(default = "unit")]
    pub eta: f64,
}

fn unit() -> f64 {
    1.0
}

fn default_range() -> CouplingRange {
    CouplingRange::LongRange
}

impl ModelSpec {
    /// Long-range chain with `Ω = K = 1` and perfect detection.
    pub fn new(sites: usize, alpha: f64, gamma: f64, measurement: MeasurementKind) -> Self {
        ModelSpec {
            sites,
            alpha,
            omega: 1.0,
            kappa_coupling: 1.0,
            coupling_range: CouplingRange::LongRange,
            measurement,
            gamma,
            eta: 1.0,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_range(mut self, range: CouplingRange) -> Self {
        self.coupling_range = range;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 {
            return Err(Error::InvalidModel("chain needs at least one site".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidModel(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.omega > 0.0) || !(self.kappa_coupling > 0.0) {
            return Err(Error::InvalidModel(format!(
                "trap frequency and coupling must be positive, got omega = {}, K = {}",
                self.omega, self.kappa_coupling
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidModel(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidModel(format!("eta must lie in [0, 1], got {}", self.eta)));
        }
        Ok(())
    }
}

/// `H = ½ φᵀ h φ` together with the symplectic form of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticHamiltonian {
    pub h: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl QuadraticHamiltonian {
    pub fn n_modes(&self) -> usize {
        self.h.nrows() / 2
    }

    pub fn position_block(&self) -> DMatrix<f64> {
        let n = self.n_modes();
        self.h.view((0, 0), (n, n)).into_owned()
    }

    /// The drift matrix `σh` of the linear flow.
    pub fn drift(&self) -> DMatrix<f64> {
        &self.sigma * &self.h
    }
}

/// One jump operator, stored as its nonzero phase-space coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpRow {
    pub entries: Vec<(usize, f64)>,
}

/// Position-linear jump operators `Ô_n = Σ_j O_nj φ_j`.
///
/// Rows are kept sparse: the nonlocal set has `L(L−1)` rows with two
/// nonzeros each, which would be wasteful as a dense `M × 2L` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpOperatorSet {
    pub dim: usize,
    pub rows: Vec<JumpRow>,
    /// Precomputed `OᵀO`.
    pub oto: DMatrix<f64>,
}

impl JumpOperatorSet {
    fn from_rows(dim: usize, rows: Vec<JumpRow>) -> Self {
        let mut oto = DMatrix::zeros(dim, dim);
        for row in &rows {
            for &(a, va) in &row.entries {
                for &(b, vb) in &row.entries {
                    oto[(a, b)] += va * vb;
                }
            }
        }
        JumpOperatorSet { dim, rows, oto }
    }

    pub fn n_channels(&self) -> usize {
        self.rows.len()
    }

    /// Dense `M × 2L` coefficient matrix.
    pub fn o_dense(&self) -> DMatrix<f64> {
        let mut o = DMatrix::zeros(self.rows.len(), self.dim);
        for (n, row) in self.rows.iter().enumerate() {
            for &(j, v) in &row.entries {
                o[(n, j)] += v;
            }
        }
        o
    }

    /// `Oᵀ w` for a vector of per-channel weights.
    pub fn transpose_apply(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for (row, wn) in self.rows.iter().zip(w.iter()) {
            for &(j, v) in &row.entries {
                out[j] += v * wn;
            }
        }
        out
    }

    /// The `L × L` position block of `OᵀO`.
    pub fn position_block(&self) -> DMatrix<f64> {
        let n = self.dim / 2;
        self.oto.view((0, 0), (n, n)).into_owned()
    }

    pub fn acts_on_positions_only(&self) -> bool {
        let n = self.dim / 2;
        self.rows.iter().all(|r| r.entries.iter().all(|&(j, _)| j < n))
    }
}

/// The canonical form `[[0, I], [−I, 0]]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for j in 0..n_modes {
        s[(j, n_modes + j)] = 1.0;
        s[(n_modes + j, j)] = -1.0;
    }
    s
}

pub fn build_hamiltonian(spec: &ModelSpec) -> Result<QuadraticHamiltonian> {
    spec.validate()?;
    let l = spec.sites;
    let max_range = match spec.coupling_range {
        CouplingRange::LongRange => l.saturating_sub(1),
        CouplingRange::NearestNeighbor => 1.min(l.saturating_sub(1)),
    };
    let mut h = DMatrix::zeros(2 * l, 2 * l);
    for j in 0..l {
        h[(j, j)] = spec.omega;
        h[(l + j, l + j)] = spec.omega;
    }
    // each pair term (K/2r^α)(x_j − x_{j+r})²
    for r in 1..=max_range {
        let coupling = match spec.coupling_range {
            CouplingRange::LongRange => spec.kappa_coupling / (r as f64).powf(spec.alpha),
            CouplingRange::NearestNeighbor => spec.kappa_coupling,
        };
        for j in 0..(l - r) {
            h[(j, j)] += coupling;
            h[(j + r, j + r)] += coupling;
            h[(j, j + r)] -= coupling;
            h[(j + r, j)] -= coupling;
        }
    }
    Ok(QuadraticHamiltonian { h, sigma: symplectic_form(l) })
}

pub fn build_local_jumps(spec: &ModelSpec) -> Result<JumpOperatorSet> {
    spec.validate()?;
    let l = spec.sites;
    let amp = spec.gamma.sqrt();
    let rows = (0..l).map(|n| JumpRow { entries: vec![(n, amp)] }).collect();
    Ok(JumpOperatorSet::from_rows(2 * l, rows))
}

pub fn build_nonlocal_jumps(spec: &ModelSpec) -> Result<JumpOperatorSet> {
    spec.validate()?;
    let l = spec.sites;
    if l < 2 {
        return Err(Error::InvalidModel("nonlocal jumps need at least two sites".into()));
    }
    let mut rows = Vec::with_capacity(l * (l - 1));
    for j in 0..l {
        for r in 1..(l - j) {
            let amp = (spec.gamma / (r as f64).powf(spec.alpha)).sqrt();
            rows.push(JumpRow { entries: vec![(j, amp), (j + r, amp)] });
            rows.push(JumpRow { entries: vec![(j, amp), (j + r, -amp)] });
        }
    }
    Ok(JumpOperatorSet::from_rows(2 * l, rows))
}

pub fn build_jumps(spec: &ModelSpec) -> Result<JumpOperatorSet> {
    match spec.measurement {
        MeasurementKind::Local => build_local_jumps(spec),
        MeasurementKind::Nonlocal => build_nonlocal_jumps(spec),
    }
}

/// Generalized harmonic number `Σ_{r=1}^m r^{-α}`.
pub fn generalized_harmonic(m: usize, alpha: f64) -> f64 {
    (1..=m).map(|r| (r as f64).powf(-alpha)).sum()
}
