//! Partial isometries and the (C1)-(C4) type system for block matrices.
//!
//! A block `R` is a partial isometry iff `R = RR*R`; its initial space is
//! `(ker R)^⊥` and its final space is `ran R`. Both are extracted from the SVD
//! with one rank threshold shared by every block of the enclosing matrix.

use rayon::prelude::*;
use serde::Serialize;

use crate::matcore::{
    identity, op_norm, partial_trace_first, svd, unitary_residual, BlockLayout, CMat, Subspace,
    Tolerances,
};

#[derive(Debug, Clone)]
pub struct IsometryReport {
    pub is_partial_isometry: bool,
    pub rank: usize,
    /// Initial space `E = (ker R)^⊥`.
    pub initial: Subspace,
    /// Final space `F = ran R`.
    pub final_space: Subspace,
    /// `‖R − RR*R‖_F`.
    pub residual: f64,
}

/// `‖R − RR*R‖_F`.
pub fn isometry_residual(r: &CMat) -> f64 {
    (r - r * r.adjoint() * r).norm()
}

/// Analyses a single block using `1e-8·σ_max(R)` as rank threshold.
pub fn analyze_block(r: &CMat) -> IsometryReport {
    let tol = Tolerances::default();
    analyze_block_with(r, tol.rank_rel * op_norm(r), tol.iso)
}

/// Analyses a block with an absolute rank threshold (singular values strictly
/// above it count) and a residual threshold for the partial-isometry verdict.
pub fn analyze_block_with(r: &CMat, rank_tol: f64, iso_tol: f64) -> IsometryReport {
    let residual = isometry_residual(r);
    let s = svd(r);
    let keep: Vec<usize> = (0..s.singular.len())
        .filter(|&i| s.singular[i] > rank_tol)
        .collect();
    IsometryReport {
        is_partial_isometry: residual <= iso_tol,
        rank: keep.len(),
        initial: Subspace {
            ambient_dim: r.ncols(),
            basis: s.right.select_columns(keep.iter()),
        },
        final_space: Subspace {
            ambient_dim: r.nrows(),
            basis: s.left.select_columns(keep.iter()),
        },
        residual,
    }
}

/// True iff the subspaces are pairwise orthogonal (`‖B_a* B_b‖_F ≤ tol`) and
/// their dimensions add up to `ambient_dim`.
pub fn is_partition(subspaces: &[&Subspace], ambient_dim: usize, tol: f64) -> bool {
    if subspaces.iter().any(|s| s.ambient_dim != ambient_dim) {
        return false;
    }
    let total: usize = subspaces.iter().map(|s| s.dim()).sum();
    if total != ambient_dim {
        return false;
    }
    for (a, sa) in subspaces.iter().enumerate() {
        for sb in &subspaces[a + 1..] {
            if sa.dim() > 0 && sb.dim() > 0 && (sa.basis.adjoint() * &sb.basis).norm() > tol {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct TypeFlags {
    /// Rows: initial spaces `{E_ij}_j` partition `C^k`.
    pub c1: bool,
    /// Rows: final spaces `{F_ij}_j` partition `C^k`.
    pub c2: bool,
    /// Columns: initial spaces `{E_ij}_i` partition `C^k`.
    pub c3: bool,
    /// Columns: final spaces `{F_ij}_i` partition `C^k`.
    pub c4: bool,
}

#[derive(Debug, Clone)]
pub struct TypeReport {
    pub n: usize,
    pub k: usize,
    pub blocks: Vec<Vec<IsometryReport>>,
    pub all_partial_isometries: bool,
    pub flags: TypeFlags,
    pub unitary_residual: f64,
}

impl TypeReport {
    pub fn ranks(&self) -> Vec<Vec<usize>> {
        self.blocks
            .iter()
            .map(|row| row.iter().map(|b| b.rank).collect())
            .collect()
    }
}

fn analyze_grid(u: &CMat, layout: &BlockLayout, tol: &Tolerances) -> Vec<Vec<IsometryReport>> {
    let rank_tol = tol.rank_rel * op_norm(u);
    let m = layout.count();
    let cells: Vec<IsometryReport> = (0..m * m)
        .into_par_iter()
        .map(|idx| {
            let b = layout
                .get(u, idx / m, idx % m)
                .expect("layout matches matrix");
            analyze_block_with(&b, rank_tol, tol.iso)
        })
        .collect();
    cells.chunks(m).map(|c| c.to_vec()).collect()
}

/// Classifies `U ∈ M_n(M_k)` as a matrix of partial isometries. Flags are all
/// false unless every block is a partial isometry; the per-block reports say
/// which ones are not.
pub fn classify_type(u: &CMat, n: usize, k: usize) -> TypeReport {
    classify_type_with(u, n, k, &Tolerances::default())
}

pub fn classify_type_with(u: &CMat, n: usize, k: usize, tol: &Tolerances) -> TypeReport {
    assert_eq!(u.nrows(), n * k, "classify_type: U must be nk x nk");
    let layout = BlockLayout::uniform(n, k);
    let blocks = analyze_grid(u, &layout, tol);
    let all = blocks.iter().flatten().all(|b| b.is_partial_isometry);
    let flags = if all {
        let grid_partition = |rows: bool, initial: bool| {
            (0..n).all(|outer| {
                let v: Vec<&Subspace> = (0..n)
                    .map(|inner| {
                        let (i, j) = if rows { (outer, inner) } else { (inner, outer) };
                        let b = &blocks[i][j];
                        if initial {
                            &b.initial
                        } else {
                            &b.final_space
                        }
                    })
                    .collect();
                is_partition(&v, k, tol.ortho)
            })
        };
        TypeFlags {
            c1: grid_partition(true, true),
            c2: grid_partition(true, false),
            c3: grid_partition(false, true),
            c4: grid_partition(false, false),
        }
    } else {
        TypeFlags::default()
    };
    TypeReport {
        n,
        k,
        blocks,
        all_partial_isometries: all,
        flags,
        unitary_residual: unitary_residual(u),
    }
}

/// Block-level structure for the block-diagonal algebra `⊕_a M_{d_a}`: blocks
/// `U_ab : V_b⊗C^k → V_a⊗C^k` of size `d_a k × d_b k`.
#[derive(Debug, Clone)]
pub struct BlockTypeReport {
    pub dims: Vec<usize>,
    pub k: usize,
    pub blocks: Vec<Vec<IsometryReport>>,
    pub all_partial_isometries: bool,
    /// `F̂_ab`, the `C^k` factor of `F_ab = V_a ⊗ F̂_ab`.
    pub final_hat: Vec<Vec<Subspace>>,
    /// `max_ab ‖P_{F_ab} − I_{d_a} ⊗ P_{F̂_ab}‖_F`.
    pub tensor_factor_defect: f64,
    /// For each row `a`, `{F̂_ab}_b` partitions `C^k` (and the tensor structure holds).
    pub row_final_hat: bool,
    /// For each column `b`, `{E_ab}_a` partitions `V_b ⊗ C^k`.
    pub col_initial: bool,
    /// For each column `b`, `{F̂_ab}_a` partitions `C^k`.
    pub col_final_hat: bool,
    pub unitary_residual: f64,
}

impl BlockTypeReport {
    /// Structural conditions of the Heisenberg block-diagonal characterisation.
    pub fn heisenberg(&self) -> bool {
        self.all_partial_isometries && self.row_final_hat && self.col_initial
    }

    /// Structural conditions of the Schrödinger block-diagonal characterisation.
    pub fn schrodinger(&self) -> bool {
        self.heisenberg() && self.col_final_hat
    }
}

pub fn classify_block_type(u: &CMat, dims: &[usize], k: usize) -> BlockTypeReport {
    classify_block_type_with(u, dims, k, &Tolerances::default())
}

pub fn classify_block_type_with(
    u: &CMat,
    dims: &[usize],
    k: usize,
    tol: &Tolerances,
) -> BlockTypeReport {
    let nb = dims.len();
    let layout = BlockLayout::ragged(dims.iter().map(|d| d * k).collect());
    let blocks = analyze_grid(u, &layout, tol);
    let all = blocks.iter().flatten().all(|b| b.is_partial_isometry);

    let mut defect = 0.0_f64;
    let mut final_hat = Vec::with_capacity(nb);
    for (a, row) in blocks.iter().enumerate() {
        let mut hats = Vec::with_capacity(nb);
        for rep in row {
            let p = rep.final_space.projector();
            let hat = partial_trace_first(&p, dims[a], k)
                .expect("square block")
                .unscale(dims[a] as f64);
            defect = defect.max((&p - identity(dims[a]).kronecker(&hat)).norm());
            hats.push(projector_range(&hat));
        }
        final_hat.push(hats);
    }
    let tensor_ok = defect <= tol.iso;
    let row_final_hat = all
        && tensor_ok
        && (0..nb).all(|a| {
            let v: Vec<&Subspace> = (0..nb).map(|b| &final_hat[a][b]).collect();
            is_partition(&v, k, tol.ortho)
        });
    let col_initial = all
        && (0..nb).all(|b| {
            let v: Vec<&Subspace> = (0..nb).map(|a| &blocks[a][b].initial).collect();
            is_partition(&v, dims[b] * k, tol.ortho)
        });
    let col_final_hat = all
        && tensor_ok
        && (0..nb).all(|b| {
            let v: Vec<&Subspace> = (0..nb).map(|a| &final_hat[a][b]).collect();
            is_partition(&v, k, tol.ortho)
        });
    BlockTypeReport {
        dims: dims.to_vec(),
        k,
        blocks,
        all_partial_isometries: all,
        final_hat,
        tensor_factor_defect: defect,
        row_final_hat,
        col_initial,
        col_final_hat,
        unitary_residual: unitary_residual(u),
    }
}

/// Range of an (approximate) orthogonal projector: eigenvectors with
/// eigenvalue above one half.
fn projector_range(p: &CMat) -> Subspace {
    let (vals, vecs) = crate::matcore::hermitian_eigen(p);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > 0.5).collect();
    Subspace {
        ambient_dim: p.nrows(),
        basis: vecs.select_columns(keep.iter()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CochranReport {
    /// `‖Σ A_i*A_i − I‖_F ≤ tol`.
    pub sum_ok: bool,
    pub sum_residual: f64,
    pub rank_sum: usize,
    /// `rank_sum == k` (with `sum_ok`).
    pub equality_case: bool,
    pub all_partial_isometries: bool,
    pub initial_partition: bool,
}

/// Cochran's rank inequality: with `Σ A_i*A_i = I`, `Σ rk(A_i) ≥ k`, with
/// equality iff the `A_i` are partial isometries whose initial spaces
/// partition `C^k`. The report exposes both sides of the equivalence.
pub fn check_cochran(a: &[CMat], k: usize, tol: &Tolerances) -> CochranReport {
    let mut sum = CMat::zeros(k, k);
    for m in a {
        assert_eq!(m.ncols(), k, "check_cochran: blocks must have k columns");
        sum += m.adjoint() * m;
    }
    let sum_residual = (sum - identity(k)).norm();
    let sum_ok = sum_residual <= tol.iso;
    let max_sv = a.iter().map(op_norm).fold(0.0, f64::max);
    let reports: Vec<IsometryReport> = a
        .iter()
        .map(|m| analyze_block_with(m, tol.rank_rel * max_sv, tol.iso))
        .collect();
    let rank_sum = reports.iter().map(|r| r.rank).sum();
    let initial: Vec<&Subspace> = reports.iter().map(|r| &r.initial).collect();
    CochranReport {
        sum_ok,
        sum_residual,
        rank_sum,
        equality_case: sum_ok && rank_sum == k,
        all_partial_isometries: reports.iter().all(|r| r.is_partial_isometry),
        initial_partition: is_partition(&initial, k, tol.ortho),
    }
}

/// `max_{i≠j} ‖A_i*A_j‖_F ≤ tol`.
pub fn check_mutual_annihilation(a: &[CMat], tol: f64) -> bool {
    mutual_annihilation_defect(a) <= tol
}

pub fn mutual_annihilation_defect(a: &[CMat]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, x) in a.iter().enumerate() {
        for (j, y) in a.iter().enumerate() {
            if i != j {
                worst = worst.max((x.adjoint() * y).norm());
            }
        }
    }
    worst
}

/// Final spaces of a family, using the family-wide rank threshold.
pub fn final_spaces(a: &[CMat], tol: &Tolerances) -> Vec<Subspace> {
    let max_sv = a.iter().map(op_norm).fold(0.0, f64::max);
    a.iter()
        .map(|m| analyze_block_with(m, tol.rank_rel * max_sv, tol.iso).final_space)
        .collect()
}
