//! Covariance-matrix representation of bosonic Gaussian states.
//!
//! Every functional here depends only on the second moments. Symplectic
//! eigenvalues are obtained through the Cholesky similarity
//! `σΓ ~ LᵀσL` (with `Γ = LLᵀ`): the real antisymmetric matrix `LᵀσL` has
//! singular values `κ_l`, each appearing twice.

pub(crate) mod matrix_io;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::lattice_model::symplectic_form;
use crate::linalg::{asymmetry, symmetrize};
use crate::{Error, Result};

pub use matrix_io::{
    read_checkpoint, read_matrix_binary, read_matrix_text, write_checkpoint, write_matrix_binary,
    write_matrix_text,
};

/// Tolerance on `κ ≥ 1/2` used by [`check_uncertainty`].
pub const UNCERTAINTY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    gamma_mat: DMatrix<f64>,
    pub time: f64,
}

impl CovarianceState {
    /// Wraps a covariance matrix, symmetrizing it.
    ///
    /// Rejects non-square or odd-dimensional input and asymmetry above `1e-10`
    /// relative to the largest entry.
    pub fn new(mut gamma_mat: DMatrix<f64>, time: f64) -> Result<Self> {
        let n = gamma_mat.nrows();
        if n != gamma_mat.ncols() || n == 0 || !n.is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "covariance matrix must be 2N×2N, got {}×{}",
                gamma_mat.nrows(),
                gamma_mat.ncols()
            )));
        }
        let scale = crate::linalg::max_abs(&gamma_mat).max(1.0);
        if asymmetry(&gamma_mat) > 1e-10 * scale {
            return Err(Error::Shape("covariance matrix is not symmetric".into()));
        }
        symmetrize(&mut gamma_mat);
        Ok(CovarianceState { gamma_mat, time })
    }

    pub(crate) fn from_symmetric_unchecked(gamma_mat: DMatrix<f64>, time: f64) -> Self {
        CovarianceState { gamma_mat, time }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.gamma_mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.gamma_mat
    }

    pub fn n_modes(&self) -> usize {
        self.gamma_mat.nrows() / 2
    }

    /// `⟨x_j x_k⟩` block element (0-based sites).
    pub fn position_correlation(&self, j: usize, k: usize) -> f64 {
        self.gamma_mat[(j, k)]
    }
}

/// An ordered set of distinct 0-based site indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    sites: Vec<usize>,
}

impl Region {
    pub fn new(mut sites: Vec<usize>, n_modes: usize) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidRegion("empty region".into()));
        }
        sites.sort_unstable();
        if sites.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidRegion("repeated site index".into()));
        }
        if let Some(&last) = sites.last() {
            if last >= n_modes {
                return Err(Error::InvalidRegion(format!("site {last} outside a {n_modes}-mode state")));
            }
        }
        Ok(Region { sites })
    }

    /// Sites `start..end` (0-based, half-open).
    pub fn contiguous(start: usize, end: usize, n_modes: usize) -> Result<Self> {
        Region::new((start..end).collect(), n_modes)
    }

    /// The left half `{0..⌊L/2⌋}`, or the single site when `L = 1`.
    pub fn half_chain(n_modes: usize) -> Result<Self> {
        Region::contiguous(0, (n_modes / 2).max(1), n_modes)
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| !other.contains(*s))
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut sites: Vec<usize> = self.sites.iter().chain(other.sites.iter()).copied().collect();
        sites.sort_unstable();
        sites.dedup();
        Region { sites }
    }

    /// All sites of an `n_modes` chain outside this region; `None` if that set is empty.
    pub fn complement(&self, n_modes: usize) -> Option<Region> {
        let sites: Vec<usize> = (0..n_modes).filter(|s| !self.contains(*s)).collect();
        if sites.is_empty() {
            None
        } else {
            Some(Region { sites })
        }
    }

    fn check_within(&self, n_modes: usize) -> Result<()> {
        match self.sites.last() {
            Some(&last) if last < n_modes => Ok(()),
            Some(&last) => Err(Error::InvalidRegion(format!("site {last} outside a {n_modes}-mode state"))),
            None => Err(Error::InvalidRegion("empty region".into())),
        }
    }
}

/// Williamson eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticSpectrum {
    pub eigenvalues: Vec<f64>,
}

impl SymplecticSpectrum {
    pub fn min(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(f64::NAN)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(f64::NAN)
    }
}

pub fn vacuum_state(n_modes: usize) -> CovarianceState {
    scaled_identity_state(n_modes, 0.5)
}

/// `Γ = c·1`, e.g. the `0.7·1` start used for uniqueness checks.
pub fn scaled_identity_state(n_modes: usize, c: f64) -> CovarianceState {
    CovarianceState {
        gamma_mat: DMatrix::identity(2 * n_modes, 2 * n_modes) * c,
        time: 0.0,
    }
}

pub fn symplectic_spectrum(gamma_mat: &DMatrix<f64>) -> Result<SymplecticSpectrum> {
    let dim = gamma_mat.nrows();
    if dim != gamma_mat.ncols() || !dim.is_multiple_of(2) || dim == 0 {
        return Err(Error::Shape(format!("expected a 2N×2N matrix, got {}×{}", dim, gamma_mat.ncols())));
    }
    let n = dim / 2;
    let chol = gamma_mat.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let sigma = symplectic_form(n);
    let b = l.transpose() * sigma * &l;
    let svd = b.try_svd(false, false, 1e-15, 10_000).ok_or(Error::EigenSolve)?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let eigenvalues = (0..n).map(|k| 0.5 * (s[2 * k] + s[2 * k + 1])).collect();
    Ok(SymplecticSpectrum { eigenvalues })
}

/// Submatrix on the region's x and p coordinates, keeping the block layout.
pub fn reduce(state: &CovarianceState, region: &Region) -> Result<CovarianceState> {
    let n = state.n_modes();
    region.check_within(n)?;
    let idx: Vec<usize> = region
        .sites()
        .iter()
        .copied()
        .chain(region.sites().iter().map(|s| s + n))
        .collect();
    let m = idx.len();
    let g = &state.gamma_mat;
    let sub = DMatrix::from_fn(m, m, |a, b| g[(idx[a], idx[b])]);
    Ok(CovarianceState { gamma_mat: sub, time: state.time })
}

/// Entropy contribution of one symplectic eigenvalue, clamped at `κ = 1/2`.
pub fn mode_entropy(kappa: f64) -> f64 {
    let k = kappa.max(0.5);
    let plus = k + 0.5;
    let minus = k - 0.5;
    let minus_term = if minus > 0.0 { minus * minus.ln() } else { 0.0 };
    plus * plus.ln() - minus_term
}

pub fn entropy_from_spectrum(spectrum: &SymplecticSpectrum) -> f64 {
    spectrum.eigenvalues.iter().map(|k| mode_entropy(*k)).sum()
}

pub fn entanglement_entropy(state: &CovarianceState, region: &Region) -> Result<f64> {
    let reduced = reduce(state, region)?;
    Ok(entropy_from_spectrum(&symplectic_spectrum(&reduced.gamma_mat)?))
}

/// `I = S_B + S_C − S_{B∪C}`.
pub fn mutual_information(state: &CovarianceState, region_b: &Region, region_c: &Region) -> Result<f64> {
    if !region_b.is_disjoint(region_c) {
        return Err(Error::InvalidRegion("mutual information needs disjoint regions".into()));
    }
    let sb = entanglement_entropy(state, region_b)?;
    let sc = entanglement_entropy(state, region_c)?;
    let sbc = entanglement_entropy(state, &region_b.union(region_c))?;
    Ok(sb + sc - sbc)
}

/// Flips the sign of every momentum coordinate outside `region`.
pub fn partial_transpose(gamma_mat: &DMatrix<f64>, region: &Region) -> DMatrix<f64> {
    let n = gamma_mat.nrows() / 2;
    let sign: Vec<f64> = (0..2 * n)
        .map(|i| if i >= n && !region.contains(i - n) { -1.0 } else { 1.0 })
        .collect();
    DMatrix::from_fn(2 * n, 2 * n, |a, b| sign[a] * sign[b] * gamma_mat[(a, b)])
}

pub fn log_negativity(state: &CovarianceState, region: &Region) -> Result<f64> {
    region.check_within(state.n_modes())?;
    let transposed = partial_transpose(&state.gamma_mat, region);
    let spec = symplectic_spectrum(&transposed)?;
    Ok(spec
        .eigenvalues
        .iter()
        .map(|k| (1.0 / (2.0 * k)).max(1.0).ln())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyCheck {
    pub satisfied: bool,
    /// Smallest symplectic eigenvalue; NaN when the matrix is not positive definite.
    pub min_eigenvalue: f64,
}

pub fn check_uncertainty(state: &CovarianceState) -> UncertaintyCheck {
    match symplectic_spectrum(&state.gamma_mat) {
        Ok(spec) => {
            let min = spec.min();
            UncertaintyCheck { satisfied: min >= 0.5 - UNCERTAINTY_TOL, min_eigenvalue: min }
        }
        Err(_) => UncertaintyCheck { satisfied: false, min_eigenvalue: f64::NAN },
    }
}

#[cfg(test)]
mod tests;
