//! Dense complex matrix primitives.
//!
//! Matrices are plain [`nalgebra::DMatrix`] values over `Complex<f64>`; every
//! structural property (unitary, Hermitian, positive) is recomputed on demand
//! by the predicates here and never cached.

mod block;
mod json;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use block::BlockLayout;
pub use json::{MatrixJson, SchemaError};

pub type C64 = nalgebra::Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(
        "matrix is not positive definite (min eigenvalue {min_eig:e}, threshold {threshold:e})"
    )]
    NotPositiveDefinite { min_eig: f64, threshold: f64 },
}

/// Numerical thresholds shared by the whole crate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    /// Bound on `‖V*V − I‖_F` for matrices returned as unitary.
    pub unitary: f64,
    /// Relative residual bound of the polar factorisation.
    pub polar: f64,
    /// Orthogonality threshold for subspace bases and partitions.
    pub ortho: f64,
    /// Positive-definiteness threshold, relative to the largest eigenvalue.
    pub pd_rel: f64,
    /// Rank threshold, relative to the largest singular value of the whole matrix.
    pub rank_rel: f64,
    /// Threshold on `‖R − RR*R‖_F` for partial isometries.
    pub iso: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            unitary: 1e-10,
            polar: 1e-10,
            ortho: 1e-10,
            pd_rel: 1e-12,
            rank_rel: 1e-8,
            iso: 1e-9,
        }
    }
}

/// A reproducible random stream: identical `(seed, stream_id)` pairs give
/// identical draw sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// A subspace of `C^ambient_dim` stored as an orthonormal column basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    pub ambient_dim: usize,
    pub basis: CMat,
}

impl Subspace {
    pub fn new(basis: CMat) -> Self {
        Subspace {
            ambient_dim: basis.nrows(),
            basis,
        }
    }

    pub fn zero(ambient_dim: usize) -> Self {
        Subspace {
            ambient_dim,
            basis: CMat::zeros(ambient_dim, 0),
        }
    }

    /// Span of the selected columns of `m` (assumed orthonormal).
    pub fn from_columns(m: &CMat, cols: impl IntoIterator<Item = usize>) -> Self {
        let cols: Vec<usize> = cols.into_iter().collect();
        Subspace::new(m.select_columns(cols.iter()))
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn projector(&self) -> CMat {
        &self.basis * self.basis.adjoint()
    }

    /// `‖B*B − I‖_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let d = self.dim();
        (self.basis.adjoint() * &self.basis - CMat::identity(d, d)).norm()
    }

    /// Projector distance `‖P_A − P_B‖_F`; bases are never compared directly.
    pub fn distance(&self, other: &Subspace) -> f64 {
        (self.projector() - other.projector()).norm()
    }
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Matrix unit `e_i e_j*` in `M_{rows×cols}`.
pub fn unit(rows: usize, cols: usize, i: usize, j: usize) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}

pub fn basis_vector(n: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[i] = C64::new(1.0, 0.0);
    v
}

pub fn real(m: &DMatrix<f64>) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

/// `‖U*U − I‖_F`.
pub fn unitary_residual(u: &CMat) -> f64 {
    let n = u.ncols();
    (u.adjoint() * u - identity(n)).norm()
}

pub fn hermitian_defect(a: &CMat) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Hilbert–Schmidt inner product `⟨A, B⟩ = Tr(A* B)`.
pub fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn trace(a: &CMat) -> C64 {
    a.diagonal().iter().sum()
}

/// Spectral norm (largest singular value).
pub fn op_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Spectral norm of a Hermitian matrix via its eigenvalues.
pub fn hermitian_op_norm(a: &CMat) -> f64 {
    let (vals, _) = hermitian_eigen(a);
    vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Eigen-decomposition of a Hermitian matrix; eigenvalues ascending, the
/// eigenvectors are the matching columns.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    let eig = hermitian_part(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = eig.eigenvectors.select_columns(order.iter());
    (vals, vecs)
}

/// Thin SVD `A = L·diag(σ)·R*` with singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub left: CMat,
    pub singular: Vec<f64>,
    pub right: CMat,
}

pub fn svd(a: &CMat) -> Svd {
    let s = a.clone().svd(true, true);
    Svd {
        left: s.u.expect("left singular vectors requested"),
        singular: s.singular_values.iter().copied().collect(),
        right: s.v_t.expect("right singular vectors requested").adjoint(),
    }
}

/// Haar-distributed unitary: Ginibre matrix, Householder QR, then the columns
/// of `Q` are rotated by the phases of `diag(R)`.
pub fn haar_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    assert!(n >= 1, "haar_unitary needs n >= 1");
    let g = ginibre(n, n, rng);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Matrix of i.i.d. standard complex Gaussians (`E|z|² = 1`).
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Uniform point on the unit sphere of `C^n`.
pub fn random_unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    let g = ginibre(n, 1, rng);
    let norm = g.norm();
    CVec::from_iterator(n, g.iter().map(|z| z / norm))
}

/// Random density matrix `GG*/Tr(GG*)` with `G` a `k×m` Ginibre matrix.
pub fn random_state<R: Rng + ?Sized>(k: usize, m: usize, rng: &mut R) -> CMat {
    let g = ginibre(k, m, rng);
    let w = &g * g.adjoint();
    let t = trace(&w).re;
    hermitian_part(&w.unscale(t))
}

/// Unitary factor of the polar decomposition `X = V·P`, `P = (X*X)^{1/2}`.
///
/// Computed as `L·R*` from the SVD `X = L Σ R*`. For singular `X` the
/// completion on the kernel is whatever the (deterministic) SVD returns.
pub fn polar_unitary(x: &CMat) -> CMat {
    assert!(x.is_square(), "polar_unitary needs a square matrix");
    let s = svd(x);
    &s.left * s.right.adjoint()
}

/// Number of singular values of `x` not exceeding `rel · σ_max` (0 when `x = 0`
/// counts as fully degenerate).
pub fn degenerate_directions(x: &CMat, rel: f64) -> usize {
    let s = x.clone().singular_values();
    let max = s.max();
    if max == 0.0 {
        return s.len();
    }
    s.iter().filter(|&&v| v <= rel * max).count()
}

/// Hermitian inverse square root of a positive definite matrix.
pub fn inv_sqrt_psd(p: &CMat, tol: &Tolerances) -> Result<CMat, MatError> {
    if !p.is_square() {
        return Err(MatError::DimensionMismatch(format!(
            "inv_sqrt_psd needs a square matrix, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    let (vals, vecs) = hermitian_eigen(p);
    let max = vals.last().copied().unwrap_or(0.0);
    let min = vals.first().copied().unwrap_or(0.0);
    let threshold = tol.pd_rel * max.abs();
    if min <= threshold || min <= 0.0 {
        return Err(MatError::NotPositiveDefinite {
            min_eig: min,
            threshold,
        });
    }
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        let f = 1.0 / v.sqrt();
        scaled.column_mut(j).scale_mut(f);
    }
    Ok(hermitian_part(&(scaled * vecs.adjoint())))
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

fn check_bipartite(x: &CMat, n: usize, k: usize, what: &str) -> Result<(), MatError> {
    if x.nrows() != n * k || x.ncols() != n * k {
        return Err(MatError::DimensionMismatch(format!(
            "{what}: expected {}x{} (n={n}, k={k}), got {}x{}",
            n * k,
            n * k,
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(())
}

/// Partial transpose on the `C^k` factor: every `k×k` block is transposed in
/// place, `(U^Γ)_{ij} = (U_{ij})^T`.
pub fn partial_transpose(u: &CMat, n: usize, k: usize) -> Result<CMat, MatError> {
    check_bipartite(u, n, k, "partial_transpose")?;
    let mut out = CMat::zeros(n * k, n * k);
    for bi in 0..n {
        for bj in 0..n {
            for s in 0..k {
                for t in 0..k {
                    out[(bi * k + s, bj * k + t)] = u[(bi * k + t, bj * k + s)];
                }
            }
        }
    }
    Ok(out)
}

/// `[id ⊗ Tr](X)`: the `n×n` matrix with entries `Tr(X_{ij})`.
pub fn partial_trace_second(x: &CMat, n: usize, k: usize) -> Result<CMat, MatError> {
    check_bipartite(x, n, k, "partial_trace_second")?;
    Ok(CMat::from_fn(n, n, |i, j| {
        (0..k).map(|s| x[(i * k + s, j * k + s)]).sum()
    }))
}

/// `[Tr ⊗ id](X)`: the `k×k` matrix `Σ_i X_{ii}`.
pub fn partial_trace_first(x: &CMat, n: usize, k: usize) -> Result<CMat, MatError> {
    check_bipartite(x, n, k, "partial_trace_first")?;
    Ok(CMat::from_fn(k, k, |s, t| {
        (0..n).map(|i| x[(i * k + s, i * k + t)]).sum()
    }))
}

/// The flip `F_n = Σ e_i e_j* ⊗ e_j e_i*` on `C^n ⊗ C^n`.
pub fn flip(n: usize) -> CMat {
    let mut f = CMat::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            f[(i * n + j, j * n + i)] = C64::new(1.0, 0.0);
        }
    }
    f
}

/// Un-normalised maximally entangled vector `ω_k = Σ e_i ⊗ e_i`.
pub fn omega(k: usize) -> CVec {
    let mut w = CVec::zeros(k * k);
    for i in 0..k {
        w[i * k + i] = C64::new(1.0, 0.0);
    }
    w
}

/// Permutation matrix `P` with `P·(x ⊗ y ⊗ z) = x ⊗ z ⊗ y` for
/// `x ∈ C^a, y ∈ C^b, z ∈ C^c`.
pub fn swap_last_two(a: usize, b: usize, c: usize) -> CMat {
    let n = a * b * c;
    let mut p = CMat::zeros(n, n);
    for x in 0..a {
        for y in 0..b {
            for z in 0..c {
                let from = (x * b + y) * c + z;
                let to = (x * c + z) * b + y;
                p[(to, from)] = C64::new(1.0, 0.0);
            }
        }
    }
    p
}

/// Acts with `w ∈ M_{ac}` on the first and third factor of `C^a ⊗ C^b ⊗ C^c`,
/// identity on the middle one (the operator usually written `W ⊗ I_b`).
pub fn embed_outer(w: &CMat, a: usize, b: usize, c: usize) -> CMat {
    assert_eq!(w.nrows(), a * c);
    let p = swap_last_two(a, b, c);
    // x⊗y⊗z -> x⊗z⊗y, act with W ⊗ I_b, swap back.
    p.transpose() * kron(w, &identity(b)) * p
}
