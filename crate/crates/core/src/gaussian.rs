//! Gaussian states of `n` optical modes and the linear channels acting on them.
//!
//! Quadratures are stored interleaved, `(x₁, p₁, x₂, p₂, …)`, so mode `k`
//! occupies rows and columns `2k` and `2k + 1`. Units are chosen with
//! `ħ = 1`: the vacuum has `Var x̂ = Var p̂ = 1/2`, and every decibel figure in
//! this crate is relative to that value.
//!
//! A channel maps `(mean, cov)` to `(S·mean, S·cov·Sᵀ + N)`. Lossless
//! transformations have `N = 0` and a symplectic `S`; loss channels scale the
//! affected mode and add vacuum noise so the mode count never changes.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, QdmError, Result};

/// Quadrature variance of the vacuum state.
pub const VACUUM_VARIANCE: f64 = 0.5;

/// Tolerance on symmetry and symplectic structure.
pub const STRUCTURAL_TOL: f64 = 1e-12;

/// Tolerance on the uncertainty principle (symplectic eigenvalues ≥ 1/2).
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// The symplectic form `Ω = ⊕ [[0, 1], [-1, 0]]` in interleaved ordering.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m - m.transpose()))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Unit projector selecting `x̂ cos θ + p̂ sin θ` of one mode.
fn quadrature_projector(n_modes: usize, mode: usize, angle: f64) -> DVector<f64> {
    let mut u = DVector::zeros(2 * n_modes);
    u[2 * mode] = angle.cos();
    u[2 * mode + 1] = angle.sin();
    u
}

/// A Gaussian state: first moments and covariance matrix of the quadratures.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Builds a state after checking symmetry and the uncertainty principle.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || dim % 2 != 0 || cov.ncols() != dim {
            return Err(invalid("cov", format!("expected a non-empty 2n×2n matrix, got {}×{}", cov.nrows(), cov.ncols())));
        }
        if mean.len() != dim {
            return Err(QdmError::DimensionMismatch { expected: dim, found: mean.len() });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("cov", "non-finite entry"));
        }
        if asymmetry(&cov) > STRUCTURAL_TOL * max_abs(&cov).max(1.0) {
            return Err(invalid("cov", "matrix is not symmetric"));
        }
        let state = Self { mean, cov: symmetrize(cov) };
        let min = state.min_symplectic_eigenvalue();
        if min < VACUUM_VARIANCE - PHYSICALITY_TOL {
            return Err(QdmError::NotPhysical { min_eigenvalue: min });
        }
        Ok(state)
    }

    /// `n` modes in their ground state.
    pub fn vacuum(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(invalid("n_modes", "must be at least 1"));
        }
        let dim = 2 * n_modes;
        Ok(Self { mean: DVector::zeros(dim), cov: DMatrix::identity(dim, dim) * VACUUM_VARIANCE })
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes() {
            return Err(QdmError::ModeOutOfRange { mode, n_modes: self.n_modes() });
        }
        Ok(())
    }

    /// Pushes the state through a channel.
    pub fn apply(&self, op: &SymplecticOp) -> Result<Self> {
        if op.dim() != self.mean.len() {
            return Err(QdmError::DimensionMismatch { expected: self.mean.len(), found: op.dim() });
        }
        let s = &op.matrix;
        let cov = s * &self.cov * s.transpose() + &op.noise_add;
        Ok(Self { mean: s * &self.mean, cov: symmetrize(cov) })
    }

    /// Adds a classical displacement `(dx, dp)` to one mode's mean.
    pub fn displace(&self, mode: usize, dx: f64, dp: f64) -> Result<Self> {
        self.check_mode(mode)?;
        let mut next = self.clone();
        next.mean[2 * mode] += dx;
        next.mean[2 * mode + 1] += dp;
        Ok(next)
    }

    /// Variance of the rotated quadrature `x̂ cos θ + p̂ sin θ` of `mode`.
    pub fn homodyne_variance(&self, mode: usize, angle: f64) -> Result<f64> {
        self.check_mode(mode)?;
        let u = quadrature_projector(self.n_modes(), mode, angle);
        Ok((u.transpose() * &self.cov * &u)[(0, 0)])
    }

    /// Mean of the rotated quadrature `x̂ cos θ + p̂ sin θ` of `mode`.
    pub fn homodyne_mean(&self, mode: usize, angle: f64) -> Result<f64> {
        self.check_mode(mode)?;
        Ok(self.mean[2 * mode] * angle.cos() + self.mean[2 * mode + 1] * angle.sin())
    }

    /// Joint covariance of several simultaneous homodyne readouts, each given
    /// as `(mode, angle)`.
    pub fn readout_covariance(&self, readouts: &[(usize, f64)]) -> Result<DMatrix<f64>> {
        let mut u = DMatrix::zeros(self.mean.len(), readouts.len());
        for (col, &(mode, angle)) in readouts.iter().enumerate() {
            self.check_mode(mode)?;
            u.set_column(col, &quadrature_projector(self.n_modes(), mode, angle));
        }
        Ok(symmetrize(u.transpose() * &self.cov * u))
    }

    /// Symplectic eigenvalues in ascending order (Williamson normal form).
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        // ν² are the eigenvalues of σ^½ Ωᵀ σ Ω σ^½, each with multiplicity two.
        let n = self.n_modes();
        let omega = symplectic_form(n);
        let eig = SymmetricEigen::new(self.cov.clone());
        let sqrt_diag = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_diag) * eig.eigenvectors.transpose();
        let m = symmetrize(&root * omega.transpose() * &self.cov * &omega * &root);
        let mut nu2: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        nu2.sort_by(f64::total_cmp);
        nu2.iter().step_by(2).map(|v| v.max(0.0).sqrt()).collect()
    }

    fn min_symplectic_eigenvalue(&self) -> f64 {
        self.symplectic_eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Whether `cov + (i/2)Ω ⪰ 0` holds within [`PHYSICALITY_TOL`].
    pub fn is_physical(&self) -> bool {
        asymmetry(&self.cov) <= STRUCTURAL_TOL * max_abs(&self.cov).max(1.0)
            && self.min_symplectic_eigenvalue() >= VACUUM_VARIANCE - PHYSICALITY_TOL
    }

    /// Draws classical phase-space samples with this state's Wigner statistics.
    pub fn sampler(&self) -> Result<PhaseSpaceSampler> {
        PhaseSpaceSampler::new(self.mean.clone(), &self.cov)
    }
}

/// Multivariate normal sampler over the quadrature vector.
#[derive(Debug, Clone)]
pub struct PhaseSpaceSampler {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl PhaseSpaceSampler {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let chol = cov.clone().cholesky().ok_or_else(|| QdmError::NotPositiveSemidefinite {
            min_eigenvalue: SymmetricEigen::new(cov.clone()).eigenvalues.min(),
        })?;
        Ok(Self { mean, factor: chol.unpack() })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * z
    }
}

/// A Gaussian channel `x ↦ S x` with added noise covariance `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticOp {
    matrix: DMatrix<f64>,
    noise_add: DMatrix<f64>,
    label: String,
}

impl SymplecticOp {
    /// Builds a channel, checking the complete-positivity condition
    /// `N + (i/2)(Ω − SΩSᵀ) ⪰ 0`.
    pub fn new(matrix: DMatrix<f64>, noise_add: DMatrix<f64>, label: impl Into<String>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim == 0 || dim % 2 != 0 || matrix.ncols() != dim {
            return Err(invalid("matrix", "expected a non-empty 2n×2n matrix"));
        }
        if noise_add.shape() != (dim, dim) {
            return Err(QdmError::DimensionMismatch { expected: dim, found: noise_add.nrows() });
        }
        if asymmetry(&noise_add) > STRUCTURAL_TOL * max_abs(&noise_add).max(1.0) {
            return Err(invalid("noise_add", "matrix is not symmetric"));
        }
        let op = Self { matrix, noise_add: symmetrize(noise_add), label: label.into() };
        let min = op.complete_positivity_margin();
        if min < -PHYSICALITY_TOL {
            return Err(QdmError::NotPositiveSemidefinite { min_eigenvalue: min });
        }
        Ok(op)
    }

    pub fn identity(n_modes: usize) -> Self {
        let dim = 2 * n_modes;
        Self { matrix: DMatrix::identity(dim, dim), noise_add: DMatrix::zeros(dim, dim), label: "identity".into() }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn noise_add(&self) -> &DMatrix<f64> {
        &self.noise_add
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_modes(&self) -> usize {
        self.matrix.nrows() / 2
    }

    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_unitary(&self) -> bool {
        self.noise_add.iter().all(|v| *v == 0.0)
    }

    /// `max |SΩSᵀ − Ω|`; zero for lossless transformations.
    pub fn symplectic_defect(&self) -> f64 {
        let omega = symplectic_form(self.n_modes());
        max_abs(&(&self.matrix * &omega * self.matrix.transpose() - omega))
    }

    /// Smallest eigenvalue of the Hermitian matrix `N + (i/2)(Ω − SΩSᵀ)`.
    pub fn complete_positivity_margin(&self) -> f64 {
        let omega = symplectic_form(self.n_modes());
        let defect = (&omega - &self.matrix * &omega * self.matrix.transpose()) * 0.5;
        let herm = DMatrix::from_fn(self.dim(), self.dim(), |i, j| Complex::new(self.noise_add[(i, j)], defect[(i, j)]));
        SymmetricEigen::new(herm).eigenvalues.min()
    }

    /// The channel that applies `self` first and then `next`.
    pub fn then(&self, next: &SymplecticOp) -> Result<SymplecticOp> {
        if next.dim() != self.dim() {
            return Err(QdmError::DimensionMismatch { expected: self.dim(), found: next.dim() });
        }
        let s = &next.matrix;
        Ok(Self {
            matrix: s * &self.matrix,
            noise_add: symmetrize(s * &self.noise_add * s.transpose() + &next.noise_add),
            label: format!("{} ; {}", self.label, next.label),
        })
    }

    /// Lifts this channel into an `n_modes` system, acting on `modes` in order
    /// and as the identity elsewhere.
    pub fn embed(&self, n_modes: usize, modes: &[usize]) -> Result<SymplecticOp> {
        if modes.len() != self.n_modes() {
            return Err(QdmError::DimensionMismatch { expected: self.n_modes(), found: modes.len() });
        }
        for (i, &m) in modes.iter().enumerate() {
            if m >= n_modes {
                return Err(QdmError::ModeOutOfRange { mode: m, n_modes });
            }
            if modes[..i].contains(&m) {
                return Err(invalid("modes", format!("mode {m} listed twice")));
            }
        }
        let dim = 2 * n_modes;
        let mut matrix = DMatrix::identity(dim, dim);
        let mut noise_add = DMatrix::zeros(dim, dim);
        let index = |local: usize| 2 * modes[local / 2] + local % 2;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                matrix[(index(i), index(j))] = self.matrix[(i, j)];
                noise_add[(index(i), index(j))] = self.noise_add[(i, j)];
            }
        }
        Ok(Self { matrix, noise_add, label: format!("{}@{:?}", self.label, modes) })
    }
}

fn rotation_block(angle: f64) -> DMatrix<f64> {
    let (s, c) = angle.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Phase-space rotation of a single mode by `angle`.
pub fn rotation(angle: f64) -> SymplecticOp {
    SymplecticOp { matrix: rotation_block(angle), noise_add: DMatrix::zeros(2, 2), label: format!("rotation({angle})") }
}

/// Single-mode squeezer. Acting on vacuum it yields variance `e^{−2r}/2`
/// along the quadrature at `angle` and `e^{+2r}/2` orthogonal to it.
pub fn squeezer(r: f64, angle: f64) -> Result<SymplecticOp> {
    if !r.is_finite() {
        return Err(invalid("r", "must be finite"));
    }
    let rot = rotation_block(angle);
    let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![(-r).exp(), r.exp()]));
    Ok(SymplecticOp {
        matrix: &rot * diag * rot.transpose(),
        noise_add: DMatrix::zeros(2, 2),
        label: format!("squeezer(r={r}, angle={angle})"),
    })
}

/// Beam splitter between `mode_i` and `mode_j` of an `n_modes` system.
///
/// With transmissivity `T` the outputs are `√T·in_i − √(1−T)·in_j` (port i)
/// and `√(1−T)·in_i + √T·in_j` (port j); a 50:50 splitter gives
/// `(in_i − in_j)/√2` and `(in_i + in_j)/√2`.
pub fn beamsplitter(n_modes: usize, transmissivity: f64, mode_i: usize, mode_j: usize) -> Result<SymplecticOp> {
    if !(0.0..=1.0).contains(&transmissivity) {
        return Err(invalid("transmissivity", format!("{transmissivity} is outside [0, 1]")));
    }
    if mode_i == mode_j {
        return Err(invalid("mode_j", "beam splitter needs two distinct modes"));
    }
    for m in [mode_i, mode_j] {
        if m >= n_modes {
            return Err(QdmError::ModeOutOfRange { mode: m, n_modes });
        }
    }
    let t = transmissivity.sqrt();
    let r = (1.0 - transmissivity).sqrt();
    let dim = 2 * n_modes;
    let mut matrix = DMatrix::identity(dim, dim);
    for q in 0..2 {
        let (i, j) = (2 * mode_i + q, 2 * mode_j + q);
        matrix[(i, i)] = t;
        matrix[(i, j)] = -r;
        matrix[(j, i)] = r;
        matrix[(j, j)] = t;
    }
    Ok(SymplecticOp {
        matrix,
        noise_add: DMatrix::zeros(dim, dim),
        label: format!("beamsplitter(T={transmissivity}, {mode_i}, {mode_j})"),
    })
}

/// Pure-loss channel with power efficiency `η` on one mode:
/// `cov → η·cov + (1−η)/2·I`, `mean → √η·mean`.
pub fn loss_channel(n_modes: usize, efficiency: f64, mode: usize) -> Result<SymplecticOp> {
    if !(efficiency > 0.0 && efficiency <= 1.0) {
        return Err(invalid("efficiency", format!("{efficiency} is outside (0, 1]")));
    }
    if mode >= n_modes {
        return Err(QdmError::ModeOutOfRange { mode, n_modes });
    }
    let dim = 2 * n_modes;
    let mut matrix = DMatrix::identity(dim, dim);
    let mut noise_add = DMatrix::zeros(dim, dim);
    for q in [2 * mode, 2 * mode + 1] {
        matrix[(q, q)] = efficiency.sqrt();
        noise_add[(q, q)] = (1.0 - efficiency) * VACUUM_VARIANCE;
    }
    Ok(SymplecticOp { matrix, noise_add, label: format!("loss(eta={efficiency}, {mode})") })
}
