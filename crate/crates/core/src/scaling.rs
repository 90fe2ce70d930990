//! Sinkhorn-type alternating normalizations.
//!
//! - [`sinkhorn_qls`]: alternately polarize the rows and columns of a grid of
//!   unit vectors, aiming at a quantum Latin square.
//! - [`sinkhorn_unital`]: `U ← Pol(U^Γ)`, aiming at unitaries whose partial
//!   transpose is also unitary.
//! - [`sinkhorn_blocks`]: block-bistochastic scaling of a grid of positive
//!   definite blocks, with the monotone functional `log F = Σ log det Y_ij`.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matcore::{
    degenerate_directions, hermitian_op_norm, identity, inv_sqrt_psd, partial_transpose,
    polar_unitary, random_unit_vector, CMat, CVec, MatError, Tolerances,
};

/// Singular values at or below this fraction of the largest count as a
/// degenerate polar input.
const DEGENERACY_REL: f64 = 1e-12;
/// Relative defect change below which the unital iteration is declared stuck.
const STALL_REL: f64 = 1e-14;
const STALL_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Frobenius,
    Operator,
}

impl Norm {
    /// Norm of a Hermitian matrix.
    pub fn of_hermitian(self, a: &CMat) -> f64 {
        match self {
            Norm::Frobenius => a.norm(),
            Norm::Operator => hermitian_op_norm(a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIter,
    Stalled,
}

/// Record of one scaling run. `defect_history[t]` is the defect after `t`
/// sweeps, so it has `iterations + 1` entries; `f_history[t]` (block scaling
/// only) is `log F` after sweep `t + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleTrace {
    pub iterations: usize,
    pub defect_history: Vec<f64>,
    pub f_history: Option<Vec<f64>>,
    pub converged: bool,
    pub stop: StopReason,
    pub degenerate_polar: usize,
    pub elapsed_secs: f64,
}

impl ScaleTrace {
    fn new(with_f: bool) -> Self {
        ScaleTrace {
            iterations: 0,
            defect_history: Vec::new(),
            f_history: with_f.then(Vec::new),
            converged: false,
            stop: StopReason::MaxIter,
            degenerate_polar: 0,
            elapsed_secs: 0.0,
        }
    }

    pub fn final_defect(&self) -> f64 {
        self.defect_history.last().copied().unwrap_or(f64::NAN)
    }

    /// First sweep count at which the defect was `≤ eps`.
    pub fn first_hit(&self, eps: f64) -> Option<usize> {
        self.defect_history.iter().position(|&d| d <= eps)
    }

    /// Trace as CSV with header `iter,defect[,logF]`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.f_history {
            None => {
                out.push_str("iter,defect\n");
                for (t, d) in self.defect_history.iter().enumerate() {
                    out.push_str(&format!("{t},{d:e}\n"));
                }
            }
            Some(f) => {
                out.push_str("iter,defect,logF\n");
                for (t, d) in self.defect_history.iter().enumerate() {
                    let lf = if t == 0 {
                        String::new()
                    } else {
                        format!("{:e}", f[t - 1])
                    };
                    out.push_str(&format!("{t},{d:e},{lf}\n"));
                }
            }
        }
        out
    }
}

/// `n × n` grid of unit vectors in `C^n`; `x(i, j)` is row `i`, column `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct QLSGrid {
    n: usize,
    vectors: Vec<CVec>,
}

impl QLSGrid {
    pub fn new(n: usize, vectors: Vec<CVec>) -> Result<Self, MatError> {
        if vectors.len() != n * n {
            return Err(MatError::DimensionMismatch(format!(
                "QLS grid of order {n} needs {} vectors, got {}",
                n * n,
                vectors.len()
            )));
        }
        for (idx, v) in vectors.iter().enumerate() {
            if v.len() != n {
                return Err(MatError::DimensionMismatch(format!(
                    "vector {idx} is not in C^{n}"
                )));
            }
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(MatError::DimensionMismatch(format!(
                    "vector {idx} has norm {}, expected 1",
                    v.norm()
                )));
            }
        }
        Ok(QLSGrid { n, vectors })
    }

    /// Independent uniformly random unit vectors.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        QLSGrid {
            n,
            vectors: (0..n * n).map(|_| random_unit_vector(n, rng)).collect(),
        }
    }

    /// Classical Latin square `x_ij = e_{(i+j) mod n}`.
    pub fn shifted_basis(n: usize) -> Self {
        let vectors = (0..n * n)
            .map(|idx| {
                let mut v = CVec::zeros(n);
                v[(idx / n + idx % n) % n] = 1.0.into();
                v
            })
            .collect();
        QLSGrid { n, vectors }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x(&self, i: usize, j: usize) -> &CVec {
        &self.vectors[i * self.n + j]
    }

    /// `R_i = Σ_j x_ij e_j*`.
    pub fn row(&self, i: usize) -> CMat {
        CMat::from_columns(
            &(0..self.n)
                .map(|j| self.x(i, j).clone())
                .collect::<Vec<_>>(),
        )
    }

    /// `C_j = Σ_i x_ij e_i*`.
    pub fn col(&self, j: usize) -> CMat {
        CMat::from_columns(
            &(0..self.n)
                .map(|i| self.x(i, j).clone())
                .collect::<Vec<_>>(),
        )
    }

    pub fn row_defects(&self) -> Vec<f64> {
        let id = identity(self.n);
        (0..self.n)
            .map(|i| {
                let r = self.row(i);
                (&r * r.adjoint() - &id).norm()
            })
            .collect()
    }

    pub fn col_defects(&self) -> Vec<f64> {
        let id = identity(self.n);
        (0..self.n)
            .map(|j| {
                let c = self.col(j);
                (&c * c.adjoint() - &id).norm()
            })
            .collect()
    }

    /// Overwrites row `i` with the columns of `m`.
    fn set_row(&mut self, i: usize, m: &CMat) {
        for j in 0..self.n {
            self.vectors[i * self.n + j] = m.column(j).into_owned();
        }
    }

    fn set_col(&mut self, j: usize, m: &CMat) {
        for i in 0..self.n {
            self.vectors[i * self.n + j] = m.column(i).into_owned();
        }
    }
}

/// `sqrt(Σ_i ‖R_i R_i* − I‖_F² + Σ_j ‖C_j C_j* − I‖_F²)`.
pub fn qls_defect(g: &QLSGrid) -> f64 {
    let rows: f64 = g.row_defects().iter().map(|d| d * d).sum();
    let cols: f64 = g.col_defects().iter().map(|d| d * d).sum();
    (rows + cols).sqrt()
}

/// Alternating row/column polarization until `qls_defect ≤ eps`. One
/// iteration is a row sweep followed by a column sweep.
pub fn sinkhorn_qls(g0: &QLSGrid, eps: f64, max_iter: usize) -> (QLSGrid, ScaleTrace) {
    let start = Instant::now();
    let mut g = g0.clone();
    let mut trace = ScaleTrace::new(false);
    let n = g.n;
    loop {
        let d = qls_defect(&g);
        trace.defect_history.push(d);
        if d <= eps {
            trace.converged = true;
            trace.stop = StopReason::Converged;
            break;
        }
        if trace.iterations >= max_iter {
            break;
        }
        for i in 0..n {
            let r = g.row(i);
            if degenerate_directions(&r, DEGENERACY_REL) > 0 {
                trace.degenerate_polar += 1;
            }
            g.set_row(i, &polar_unitary(&r));
        }
        for j in 0..n {
            let c = g.col(j);
            if degenerate_directions(&c, DEGENERACY_REL) > 0 {
                trace.degenerate_polar += 1;
            }
            g.set_col(j, &polar_unitary(&c));
        }
        trace.iterations += 1;
    }
    trace.elapsed_secs = start.elapsed().as_secs_f64();
    (g, trace)
}

/// `‖U^Γ (U^Γ)* − I‖` in the chosen norm.
pub fn unital_defect(u: &CMat, n: usize, k: usize, norm: Norm) -> Result<f64, MatError> {
    let g = partial_transpose(u, n, k)?;
    Ok(norm.of_hermitian(&(&g * g.adjoint() - identity(n * k))))
}

/// `U ← Pol(U^Γ)` until the partial transpose is `eps`-unitary.
///
/// Stops with [`StopReason::Stalled`] when the defect changes by less than a
/// relative `1e-14` over 50 consecutive iterations while still above `eps`.
pub fn sinkhorn_unital(
    u0: &CMat,
    n: usize,
    k: usize,
    eps: f64,
    max_iter: usize,
    norm: Norm,
) -> Result<(CMat, ScaleTrace), MatError> {
    let start = Instant::now();
    let mut u = u0.clone();
    let mut trace = ScaleTrace::new(false);
    loop {
        let g = partial_transpose(&u, n, k)?;
        let d = norm.of_hermitian(&(&g * g.adjoint() - identity(n * k)));
        trace.defect_history.push(d);
        if d <= eps {
            trace.converged = true;
            trace.stop = StopReason::Converged;
            break;
        }
        if trace.iterations >= max_iter {
            break;
        }
        let h = &trace.defect_history;
        if h.len() > STALL_WINDOW {
            let old = h[h.len() - 1 - STALL_WINDOW];
            if (old - d).abs() <= STALL_REL * d {
                trace.stop = StopReason::Stalled;
                break;
            }
        }
        if degenerate_directions(&g, DEGENERACY_REL) > 0 {
            trace.degenerate_polar += 1;
        }
        u = polar_unitary(&g);
        trace.iterations += 1;
    }
    trace.elapsed_secs = start.elapsed().as_secs_f64();
    Ok((u, trace))
}

/// `n × n` grid of `k × k` positive definite blocks, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPSDMatrix {
    n: usize,
    k: usize,
    blocks: Vec<CMat>,
}

impl BlockPSDMatrix {
    pub fn new(n: usize, k: usize, blocks: Vec<CMat>) -> Result<Self, MatError> {
        if n == 0 || k == 0 || blocks.len() != n * n {
            return Err(MatError::DimensionMismatch(format!(
                "expected {} blocks for n={n}, k={k}, got {}",
                n * n,
                blocks.len()
            )));
        }
        for b in &blocks {
            if b.nrows() != k || b.ncols() != k {
                return Err(MatError::DimensionMismatch(format!(
                    "blocks must be {k}x{k}, got {}x{}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        let x = BlockPSDMatrix { n, k, blocks };
        x.check_positive()?;
        Ok(x)
    }

    /// Blocks `G G* + δ I` with `G` Ginibre `k × k`; `δ = 1e-3` keeps the
    /// conditioning away from the numerical floor.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Self {
        let blocks = (0..n * n)
            .map(|_| {
                let g = crate::matcore::ginibre(k, k, rng);
                &g * g.adjoint() + identity(k).scale(1e-3)
            })
            .collect();
        BlockPSDMatrix { n, k, blocks }
    }

    /// Every block equal to `I/n`.
    pub fn uniform(n: usize, k: usize) -> Self {
        BlockPSDMatrix {
            n,
            k,
            blocks: vec![identity(k).unscale(n as f64); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn block(&self, i: usize, j: usize) -> &CMat {
        &self.blocks[i * self.n + j]
    }

    pub fn block_mut(&mut self, i: usize, j: usize) -> &mut CMat {
        &mut self.blocks[i * self.n + j]
    }

    pub fn row_sum(&self, i: usize) -> CMat {
        (0..self.n).fold(CMat::zeros(self.k, self.k), |acc, j| acc + self.block(i, j))
    }

    pub fn col_sum(&self, j: usize) -> CMat {
        (0..self.n).fold(CMat::zeros(self.k, self.k), |acc, i| acc + self.block(i, j))
    }

    /// `log F = Σ_ij log det X_ij`.
    pub fn log_f(&self) -> Result<f64, MatError> {
        self.blocks.iter().map(log_det_pd).sum()
    }

    fn check_positive(&self) -> Result<(), MatError> {
        for b in &self.blocks {
            log_det_pd(b)?;
        }
        Ok(())
    }

    /// Largest deviation of a row or column sum from `I_k`.
    pub fn bistochastic_defect(&self, norm: Norm) -> f64 {
        let id = identity(self.k);
        (0..self.n)
            .flat_map(|i| [self.row_sum(i) - &id, self.col_sum(i) - &id])
            .map(|d| norm.of_hermitian(&d))
            .fold(0.0, f64::max)
    }
}

fn log_det_pd(b: &CMat) -> Result<f64, MatError> {
    let (vals, _) = crate::matcore::hermitian_eigen(b);
    if vals[0] <= 0.0 {
        return Err(MatError::NotPositiveDefinite {
            min_eig: vals[0],
            threshold: 0.0,
        });
    }
    Ok(vals.iter().map(|v| v.ln()).sum())
}

/// All row and column sums within `eps` of `I_k` in operator norm.
pub fn is_block_bistochastic(x: &BlockPSDMatrix, eps: f64) -> bool {
    x.bistochastic_defect(Norm::Operator) <= eps
}

/// Alternating row and column block normalization
/// `Y_ij ← S^{-1/2} Y_ij S^{-1/2}`, stopping once every row and column sum is
/// within `eps` of the identity. `log F` is recorded after every sweep and
/// positive definiteness is re-checked every 100 sweeps.
pub fn sinkhorn_blocks(
    x: &BlockPSDMatrix,
    eps: f64,
    max_iter: usize,
    norm: Norm,
) -> Result<(BlockPSDMatrix, ScaleTrace), MatError> {
    let start = Instant::now();
    x.check_positive()?;
    let tol = Tolerances {
        pd_rel: 0.0,
        ..Tolerances::default()
    };
    let n = x.n;
    let mut y = x.clone();
    let mut trace = ScaleTrace::new(true);
    let f_hist = trace.f_history.as_mut().expect("block trace records F");
    loop {
        let d = y.bistochastic_defect(norm);
        trace.defect_history.push(d);
        if d <= eps {
            trace.converged = true;
            trace.stop = StopReason::Converged;
            break;
        }
        if trace.iterations >= max_iter {
            break;
        }
        for i in 0..n {
            let s = inv_sqrt_psd(&y.row_sum(i), &tol)?;
            for j in 0..n {
                let b = y.block_mut(i, j);
                *b = crate::matcore::hermitian_part(&(&s * &*b * &s));
            }
        }
        for j in 0..n {
            let s = inv_sqrt_psd(&y.col_sum(j), &tol)?;
            for i in 0..n {
                let b = y.block_mut(i, j);
                *b = crate::matcore::hermitian_part(&(&s * &*b * &s));
            }
        }
        trace.iterations += 1;
        f_hist.push(y.log_f()?);
        if trace.iterations.is_multiple_of(100) {
            y.check_positive()?;
        }
    }
    trace.elapsed_secs = start.elapsed().as_secs_f64();
    Ok((y, trace))
}
