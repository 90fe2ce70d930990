//! Random constructors for the structured unitary families, each returned with
//! the algebra it is meant to preserve and a witness of its construction.

mod fixtures;

use std::collections::BTreeMap;

use petgraph::algo::matching::maximum_matching;
use petgraph::graph::UnGraph;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channels::{AlgebraSpec, Picture};
use crate::matcore::{
    embed_outer, haar_unitary, identity, kron, partial_transpose, unit, unitary_residual,
    BlockLayout, CMat, MatrixJson,
};
use crate::scaling::{sinkhorn_qls, sinkhorn_unital, Norm, QLSGrid};

pub use fixtures::{fixture, fixtures, perp, Expectation, Fixture, FIXTURE_NAMES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid pattern: {0}")]
    InvalidPattern(String),
    #[error("pattern not realizable: {0}")]
    PatternNotRealizable(String),
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
}

/// Integer matrix whose rows and columns all sum to `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternMatrix {
    pub n: usize,
    pub k: usize,
    pub delta: Vec<Vec<usize>>,
}

impl PatternMatrix {
    pub fn new(k: usize, delta: Vec<Vec<usize>>) -> Result<Self, GenError> {
        let n = delta.len();
        if n == 0 || k == 0 {
            return Err(GenError::InvalidPattern("n and k must be positive".into()));
        }
        if delta.iter().any(|row| row.len() != n) {
            return Err(GenError::InvalidPattern("pattern must be square".into()));
        }
        for i in 0..n {
            let row: usize = delta[i].iter().sum();
            let col: usize = (0..n).map(|t| delta[t][i]).sum();
            if row != k || col != k {
                return Err(GenError::InvalidPattern(format!(
                    "row {i} sums to {row} and column {i} to {col}, both must equal {k}"
                )));
            }
        }
        Ok(PatternMatrix { n, k, delta })
    }

    /// The all-ones pattern (`k = n`).
    pub fn canonical(n: usize) -> Self {
        PatternMatrix {
            n,
            k: n,
            delta: vec![vec![1; n]; n],
        }
    }

    /// Sum of `k` independent uniformly random permutation matrices.
    pub fn random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Self {
        let mut delta = vec![vec![0; n]; n];
        let mut perm: Vec<usize> = (0..n).collect();
        for _ in 0..k {
            perm.shuffle(rng);
            for (i, &j) in perm.iter().enumerate() {
                delta[i][j] += 1;
            }
        }
        PatternMatrix { n, k, delta }
    }

    pub fn is_all_ones(&self) -> bool {
        self.delta.iter().flatten().all(|&d| d == 1)
    }

    /// Start of `E_ij` among the columns of `C_j`: `Σ_{t<i} δ_tj`.
    fn col_offset(&self, i: usize, j: usize) -> usize {
        (0..i).map(|t| self.delta[t][j]).sum()
    }

    /// Start of `F_ij` among the columns of `R_i`: `Σ_{t<j} δ_it`.
    fn row_offset(&self, i: usize, j: usize) -> usize {
        self.delta[i][..j].iter().sum()
    }
}

/// Writes `δ` as a sum of `k` permutations (`perm[i] = j`), peeling one
/// perfect matching of the support at a time.
pub fn birkhoff_decompose(p: &PatternMatrix) -> Vec<Vec<usize>> {
    let n = p.n;
    let mut rest = p.delta.clone();
    let mut perms = Vec::with_capacity(p.k);
    for _ in 0..p.k {
        let mut g = UnGraph::<(), ()>::with_capacity(2 * n, n * n);
        let nodes: Vec<_> = (0..2 * n).map(|_| g.add_node(())).collect();
        for i in 0..n {
            for j in 0..n {
                if rest[i][j] > 0 {
                    g.add_edge(nodes[i], nodes[n + j], ());
                }
            }
        }
        let m = maximum_matching(&g);
        let mut perm = vec![usize::MAX; n];
        for (a, b) in m.edges() {
            let (i, j) = if a.index() < n {
                (a.index(), b.index() - n)
            } else {
                (b.index(), a.index() - n)
            };
            perm[i] = j;
        }
        assert!(
            perm.iter().all(|&j| j < n),
            "regular bipartite support has a perfect matching"
        );
        for (i, &j) in perm.iter().enumerate() {
            rest[i][j] -= 1;
        }
        perms.push(perm);
    }
    perms
}

/// Construction data kept next to a generated unitary for audit.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Witness {
    pub family: String,
    pub n: usize,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<Vec<Vec<usize>>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub permutations: Option<Vec<Vec<usize>>>,
    pub matrices: BTreeMap<String, MatrixJson>,
}

impl Witness {
    fn new(family: &str, n: usize, k: usize) -> Self {
        Witness {
            family: family.into(),
            n,
            k,
            ..Default::default()
        }
    }

    fn put(&mut self, name: impl Into<String>, m: &CMat) {
        self.matrices
            .insert(name.into(), MatrixJson::from_matrix(m));
    }
}

/// A generated unitary together with what it is supposed to satisfy.
#[derive(Debug, Clone)]
pub struct Generated {
    pub u: CMat,
    pub n: usize,
    pub k: usize,
    pub algebra: AlgebraSpec,
    pub pictures: Vec<Picture>,
    pub witness: Witness,
}

/// Builds `U` from per-block column maps: block `(a, b)` sends the columns of
/// `e[a][b]` to the matching columns of `f[a][b]`.
fn assemble_partial_isometries(layout: &BlockLayout, e: &[Vec<CMat>], f: &[Vec<CMat>]) -> CMat {
    let nb = layout.count();
    let mut u = CMat::zeros(layout.total(), layout.total());
    for a in 0..nb {
        for b in 0..nb {
            let block = &f[a][b] * e[a][b].adjoint();
            layout
                .set(&mut u, a, b, &block)
                .expect("block sizes follow the layout");
        }
    }
    u
}

fn columns(m: &CMat, start: usize, count: usize) -> CMat {
    m.columns(start, count).into_owned()
}

/// Initial spaces carved from per-column Haar unitaries: `E_ij` is `δ_ij`
/// consecutive columns of `C_j` starting at `Σ_{t<i} δ_tj`.
fn carve_initial(p: &PatternMatrix, c: &[CMat]) -> Vec<Vec<CMat>> {
    (0..p.n)
        .map(|i| {
            (0..p.n)
                .map(|j| columns(&c[j], p.col_offset(i, j), p.delta[i][j]))
                .collect()
        })
        .collect()
}

/// Random unitary of type (C2),(C3) with block ranks `δ`: Haar `R_1..R_n`
/// then `C_1..C_n`, `F_ij` carved from `R_i` and `E_ij` from `C_j`.
pub fn generate_pattern_unitary<R: Rng + ?Sized>(p: &PatternMatrix, rng: &mut R) -> Generated {
    let (n, k) = (p.n, p.k);
    let r: Vec<CMat> = (0..n).map(|_| haar_unitary(k, rng)).collect();
    let c: Vec<CMat> = (0..n).map(|_| haar_unitary(k, rng)).collect();
    let e = carve_initial(p, &c);
    let f: Vec<Vec<CMat>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| columns(&r[i], p.row_offset(i, j), p.delta[i][j]))
                .collect()
        })
        .collect();
    let u = assemble_partial_isometries(&BlockLayout::uniform(n, k), &e, &f);
    let mut witness = Witness::new("pattern", n, k);
    witness.delta = Some(p.delta.clone());
    for i in 0..n {
        witness.put(format!("R{i}"), &r[i]);
        witness.put(format!("C{i}"), &c[i]);
    }
    Generated {
        u,
        n,
        k,
        algebra: AlgebraSpec::diagonal(n),
        pictures: vec![Picture::Heisenberg],
        witness,
    }
}

/// How the final spaces of the Schrödinger-type generator are made to
/// partition both rows and columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FinalSpaceMode {
    /// `F_ij` spanned by the columns `D e_t` over the permutations `σ_t` of a
    /// Birkhoff decomposition of `δ` with `σ_t(i) = j`.
    #[default]
    Classical,
    /// `F_ij = C x_ij` for a grid `x` from the non-commutative Sinkhorn
    /// iteration; needs `n = k` and `δ ≡ 1`.
    QuantumLatin,
}

/// QLS precision required for the quantum Latin mode, so that the output is
/// unitary well inside the generator contract.
const QLS_EPS: f64 = 1e-13;
const QLS_MAX_ITER: usize = 100_000;

/// Random unitary of type (C2),(C3),(C4) with block ranks `δ`.
pub fn generate_schrodinger_diag_unitary<R: Rng + ?Sized>(
    p: &PatternMatrix,
    mode: FinalSpaceMode,
    rng: &mut R,
) -> Result<Generated, GenError> {
    let (n, k) = (p.n, p.k);
    let c: Vec<CMat> = (0..n).map(|_| haar_unitary(k, rng)).collect();
    let e = carve_initial(p, &c);
    let mut witness = Witness::new("diag-schrodinger", n, k);
    witness.delta = Some(p.delta.clone());
    let f: Vec<Vec<CMat>> = match mode {
        FinalSpaceMode::Classical => {
            let d = haar_unitary(k, rng);
            let perms = birkhoff_decompose(p);
            let f = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let idx: Vec<usize> = (0..k).filter(|&t| perms[t][i] == j).collect();
                            d.select_columns(idx.iter())
                        })
                        .collect()
                })
                .collect();
            witness.put("D", &d);
            witness.permutations = Some(perms);
            f
        }
        FinalSpaceMode::QuantumLatin => {
            if n != k || !p.is_all_ones() {
                return Err(GenError::PatternNotRealizable(
                    "quantum Latin squares need n = k and an all-ones pattern".into(),
                ));
            }
            let (g, trace) = sinkhorn_qls(&QLSGrid::random(n, rng), QLS_EPS, QLS_MAX_ITER);
            if !trace.converged {
                return Err(GenError::PatternNotRealizable(format!(
                    "QLS iteration stopped at defect {:e} after {} sweeps",
                    trace.final_defect(),
                    trace.iterations
                )));
            }
            (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| CMat::from_columns(&[g.x(i, j).clone()]))
                        .collect()
                })
                .collect()
        }
    };
    for (j, cj) in c.iter().enumerate() {
        witness.put(format!("C{j}"), cj);
    }
    let u = assemble_partial_isometries(&BlockLayout::uniform(n, k), &e, &f);
    Ok(Generated {
        u,
        n,
        k,
        algebra: AlgebraSpec::diagonal(n),
        pictures: vec![Picture::Heisenberg, Picture::Schrodinger],
        witness,
    })
}

/// Block pattern for `⊕_a M_{d_a}`: `δ_ab = dim F̂_ab`, so that
/// `dim E_ab = d_a δ_ab`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPattern {
    pub dims: Vec<usize>,
    pub k: usize,
    pub delta: Vec<Vec<usize>>,
}

impl BlockPattern {
    /// Checks `Σ_b δ_ab = k` and `Σ_a d_a δ_ab = d_b k`, plus `Σ_a δ_ab = k`
    /// for the Schrödinger picture.
    pub fn new(
        dims: Vec<usize>,
        k: usize,
        delta: Vec<Vec<usize>>,
        picture: Picture,
    ) -> Result<Self, GenError> {
        let nb = dims.len();
        if nb == 0 || k == 0 || dims.contains(&0) {
            return Err(GenError::InvalidPattern(
                "dims and k must be positive".into(),
            ));
        }
        if delta.len() != nb || delta.iter().any(|r| r.len() != nb) {
            return Err(GenError::InvalidPattern(format!(
                "pattern must be {nb}x{nb}"
            )));
        }
        let bp = BlockPattern { dims, k, delta };
        if let Some(msg) = bp.violation(picture) {
            return Err(GenError::InvalidPattern(msg));
        }
        Ok(bp)
    }

    fn violation(&self, picture: Picture) -> Option<String> {
        let nb = self.dims.len();
        for a in 0..nb {
            let row: usize = self.delta[a].iter().sum();
            if row != self.k {
                return Some(format!("row {a} sums to {row}, expected {}", self.k));
            }
        }
        for b in 0..nb {
            let weighted: usize = (0..nb).map(|a| self.dims[a] * self.delta[a][b]).sum();
            if weighted != self.dims[b] * self.k {
                return Some(format!(
                    "column {b} has weighted sum {weighted}, expected {}",
                    self.dims[b] * self.k
                ));
            }
            let plain: usize = (0..nb).map(|a| self.delta[a][b]).sum();
            if picture == Picture::Schrodinger && plain != self.k {
                return Some(format!("column {b} sums to {plain}, expected {}", self.k));
            }
        }
        None
    }

    /// Random valid pattern: rows are drawn as compositions of `k` in random
    /// order, depth first, until every column constraint closes.
    pub fn random<R: Rng + ?Sized>(
        dims: &[usize],
        k: usize,
        picture: Picture,
        rng: &mut R,
    ) -> Self {
        let nb = dims.len();
        let comps = compositions(k, nb);
        let orders: Vec<Vec<usize>> = (0..nb)
            .map(|_| {
                let mut o: Vec<usize> = (0..comps.len()).collect();
                o.shuffle(rng);
                o
            })
            .collect();
        let mut rows = Vec::with_capacity(nb);
        let mut bp = BlockPattern {
            dims: dims.to_vec(),
            k,
            delta: Vec::new(),
        };
        let found = search_rows(&mut bp, &comps, &orders, &mut rows, picture);
        assert!(found, "k·I is always a valid block pattern");
        bp.delta = rows;
        bp
    }

    /// Reads the pattern as a plain `N × N` pattern with margins `k`
    /// (valid in the Schrödinger picture).
    fn as_pattern(&self) -> PatternMatrix {
        PatternMatrix {
            n: self.dims.len(),
            k: self.k,
            delta: self.delta.clone(),
        }
    }
}

fn compositions(k: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![k]];
    }
    (0..=k)
        .flat_map(|first| {
            compositions(k - first, parts - 1)
                .into_iter()
                .map(move |mut rest| {
                    rest.insert(0, first);
                    rest
                })
        })
        .collect()
}

fn search_rows(
    bp: &mut BlockPattern,
    comps: &[Vec<usize>],
    orders: &[Vec<usize>],
    rows: &mut Vec<Vec<usize>>,
    picture: Picture,
) -> bool {
    let nb = bp.dims.len();
    let a = rows.len();
    if a == nb {
        bp.delta = rows.clone();
        return bp.violation(picture).is_none();
    }
    for &ci in &orders[a] {
        let cand = &comps[ci];
        let fits = (0..nb).all(|b| {
            let weighted: usize = rows
                .iter()
                .enumerate()
                .map(|(t, r)| bp.dims[t] * r[b])
                .sum::<usize>()
                + bp.dims[a] * cand[b];
            let plain: usize = rows.iter().map(|r| r[b]).sum::<usize>() + cand[b];
            weighted <= bp.dims[b] * bp.k && (picture == Picture::Heisenberg || plain <= bp.k)
        });
        if !fits {
            continue;
        }
        rows.push(cand.clone());
        if search_rows(bp, comps, orders, rows, picture) {
            return true;
        }
        rows.pop();
    }
    false
}

/// Random unitary preserving `⊕_a M_{d_a}` in the given picture.
///
/// `F_ab = C^{d_a} ⊗ F̂_ab` and `E_ab` is `d_a δ_ab` consecutive columns of a
/// Haar unitary `C_b ∈ U_{d_b k}`; the `m`-th column of `E_ab` is sent to
/// `e_{m / δ_ab} ⊗ f̂_{m mod δ_ab}`. In the Heisenberg picture `F̂_ab` is carved
/// from a Haar `R_a ∈ U_k`; in the Schrödinger picture it comes from the
/// Birkhoff decomposition of `δ` against one Haar `D ∈ U_k`.
pub fn generate_block_diag_unitary<R: Rng + ?Sized>(
    bp: &BlockPattern,
    picture: Picture,
    rng: &mut R,
) -> Result<Generated, GenError> {
    if let Some(msg) = bp.violation(picture) {
        return Err(GenError::InvalidPattern(msg));
    }
    let (dims, k) = (&bp.dims, bp.k);
    let nb = dims.len();
    let mut witness = Witness::new(
        if picture == Picture::Heisenberg {
            "blocks-h"
        } else {
            "blocks-s"
        },
        dims.iter().sum(),
        k,
    );
    witness.dims = Some(dims.clone());
    witness.delta = Some(bp.delta.clone());

    let hats: Vec<Vec<CMat>> = match picture {
        Picture::Heisenberg => {
            let r: Vec<CMat> = (0..nb).map(|_| haar_unitary(k, rng)).collect();
            for (a, ra) in r.iter().enumerate() {
                witness.put(format!("R{a}"), ra);
            }
            (0..nb)
                .map(|a| {
                    (0..nb)
                        .map(|b| {
                            let off: usize = bp.delta[a][..b].iter().sum();
                            columns(&r[a], off, bp.delta[a][b])
                        })
                        .collect()
                })
                .collect()
        }
        Picture::Schrodinger => {
            let d = haar_unitary(k, rng);
            let perms = birkhoff_decompose(&bp.as_pattern());
            witness.put("D", &d);
            let hats = (0..nb)
                .map(|a| {
                    (0..nb)
                        .map(|b| {
                            let idx: Vec<usize> = (0..k).filter(|&t| perms[t][a] == b).collect();
                            d.select_columns(idx.iter())
                        })
                        .collect()
                })
                .collect();
            witness.permutations = Some(perms);
            hats
        }
    };
    let c: Vec<CMat> = dims.iter().map(|&d| haar_unitary(d * k, rng)).collect();
    for (b, cb) in c.iter().enumerate() {
        witness.put(format!("C{b}"), cb);
    }
    let e: Vec<Vec<CMat>> = (0..nb)
        .map(|a| {
            (0..nb)
                .map(|b| {
                    let off: usize = (0..a).map(|t| dims[t] * bp.delta[t][b]).sum();
                    columns(&c[b], off, dims[a] * bp.delta[a][b])
                })
                .collect()
        })
        .collect();
    let f: Vec<Vec<CMat>> = (0..nb)
        .map(|a| {
            (0..nb)
                .map(|b| {
                    let delta = bp.delta[a][b];
                    let cols: Vec<_> = (0..dims[a] * delta)
                        .map(|m| {
                            let ex = identity(dims[a]).column(m / delta).into_owned();
                            ex.kronecker(&hats[a][b].column(m % delta))
                        })
                        .collect();
                    if cols.is_empty() {
                        CMat::zeros(dims[a] * k, 0)
                    } else {
                        CMat::from_columns(&cols)
                    }
                })
                .collect()
        })
        .collect();
    let layout = BlockLayout::ragged(dims.iter().map(|d| d * k).collect());
    let u = assemble_partial_isometries(&layout, &e, &f);
    Ok(Generated {
        u,
        n: dims.iter().sum(),
        k,
        algebra: AlgebraSpec::blocks(dims.clone()),
        pictures: vec![picture],
        witness,
    })
}

fn check_positive(what: &[(&str, usize)]) -> Result<(), GenError> {
    match what.iter().find(|(_, v)| *v == 0) {
        Some((name, _)) => Err(GenError::InvalidDimensions(format!(
            "{name} must be positive"
        ))),
        None => Ok(()),
    }
}

/// `U = (I_d ⊗ V)(W ⊗ I_r)` with Haar `V ∈ U_{rk}`, `W ∈ U_{dk}`.
pub fn generate_tensor_h<R: Rng + ?Sized>(
    d: usize,
    r: usize,
    k: usize,
    rng: &mut R,
) -> Result<Generated, GenError> {
    check_positive(&[("d", d), ("r", r), ("k", k)])?;
    let v = haar_unitary(r * k, rng);
    let w = haar_unitary(d * k, rng);
    let u = kron(&identity(d), &v) * embed_outer(&w, d, r, k);
    let mut witness = Witness::new("tensor-h", d * r, k);
    witness.dims = Some(vec![d, r]);
    witness.put("V", &v);
    witness.put("W", &w);
    Ok(Generated {
        u,
        n: d * r,
        k,
        algebra: AlgebraSpec::tensor(d, r),
        pictures: vec![Picture::Heisenberg],
        witness,
    })
}

/// Source of the factor `W ∈ U_{rk} ∩ U_{rk}^Γ` in [`generate_tensor_s`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitalSource {
    /// `W = (A ⊗ B)(Σ_i e_i e_i* ⊗ W_i)(A' ⊗ B')`, exactly in the set.
    Exact,
    /// `W^Γ` is the output of the polar iteration, `W` is `eps`-close.
    Approx { eps: f64, max_iter: usize },
}

/// Random element of `U_{rk} ∩ U_{rk}^Γ` from the exact family.
pub fn random_unital_exact<R: Rng + ?Sized>(r: usize, k: usize, rng: &mut R) -> CMat {
    let mut controlled = CMat::zeros(r * k, r * k);
    for i in 0..r {
        controlled += kron(&unit(r, r, i, i), &haar_unitary(k, rng));
    }
    let left = kron(&haar_unitary(r, rng), &haar_unitary(k, rng));
    let right = kron(&haar_unitary(r, rng), &haar_unitary(k, rng));
    left * controlled * right
}

/// `U = (I_d ⊗ W^Γ)(V ⊗ I_r)` with Haar `V ∈ U_{dk}` and
/// `W ∈ U_{rk} ∩ U_{rk}^Γ`.
pub fn generate_tensor_s<R: Rng + ?Sized>(
    d: usize,
    r: usize,
    k: usize,
    source: UnitalSource,
    rng: &mut R,
) -> Result<Generated, GenError> {
    check_positive(&[("d", d), ("r", r), ("k", k)])?;
    let w_gamma = match source {
        UnitalSource::Exact => {
            let w = random_unital_exact(r, k, rng);
            partial_transpose(&w, r, k).expect("square")
        }
        UnitalSource::Approx { eps, max_iter } => {
            let u0 = haar_unitary(r * k, rng);
            let (u, trace) = sinkhorn_unital(&u0, r, k, eps, max_iter, Norm::Frobenius)
                .expect("dimensions checked");
            if !trace.converged {
                return Err(GenError::PatternNotRealizable(format!(
                    "unital iteration stopped at defect {:e}",
                    trace.final_defect()
                )));
            }
            u
        }
    };
    let v = haar_unitary(d * k, rng);
    let u = kron(&identity(d), &w_gamma) * embed_outer(&v, d, r, k);
    let mut witness = Witness::new("tensor-s", d * r, k);
    witness.dims = Some(vec![d, r]);
    witness.put("V", &v);
    witness.put("W", &partial_transpose(&w_gamma, r, k).expect("square"));
    Ok(Generated {
        u,
        n: d * r,
        k,
        algebra: AlgebraSpec::tensor(d, r),
        pictures: vec![Picture::Schrodinger],
        witness,
    })
}

/// `U = U_00 ⊕ U_11` with independent Haar factors of sizes `d0 k`, `d1 k`.
pub fn generate_zero_block<R: Rng + ?Sized>(
    d0: usize,
    d1: usize,
    k: usize,
    rng: &mut R,
) -> Result<Generated, GenError> {
    check_positive(&[("d1", d1), ("k", k)])?;
    let u00 = if d0 == 0 {
        CMat::zeros(0, 0)
    } else {
        haar_unitary(d0 * k, rng)
    };
    let u11 = haar_unitary(d1 * k, rng);
    let mut u = CMat::zeros((d0 + d1) * k, (d0 + d1) * k);
    u.view_mut((0, 0), (d0 * k, d0 * k)).copy_from(&u00);
    u.view_mut((d0 * k, d0 * k), (d1 * k, d1 * k))
        .copy_from(&u11);
    let mut witness = Witness::new("zero", d0 + d1, k);
    witness.dims = Some(vec![d0, d1]);
    witness.put("U00", &u00);
    witness.put("U11", &u11);
    let algebra = if d0 == 0 {
        AlgebraSpec::full(d1)
    } else {
        AlgebraSpec::zero_block(d0, d1)
    };
    Ok(Generated {
        u,
        n: d0 + d1,
        k,
        algebra,
        pictures: vec![Picture::Heisenberg, Picture::Schrodinger],
        witness,
    })
}

/// The generator families, addressed by their CLI names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Pattern,
    DiagSchrodinger,
    BlocksH,
    BlocksS,
    TensorH,
    TensorS,
    Zero,
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Pattern,
        Family::DiagSchrodinger,
        Family::BlocksH,
        Family::BlocksS,
        Family::TensorH,
        Family::TensorS,
        Family::Zero,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Pattern => "pattern",
            Family::DiagSchrodinger => "diag-schrodinger",
            Family::BlocksH => "blocks-h",
            Family::BlocksS => "blocks-s",
            Family::TensorH => "tensor-h",
            Family::TensorS => "tensor-s",
            Family::Zero => "zero",
        }
    }

    pub fn from_name(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }
}

fn random_composition<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let all = compositions_positive(n);
    all[rng.random_range(0..all.len())].clone()
}

fn compositions_positive(n: usize) -> Vec<Vec<usize>> {
    (1..=n)
        .flat_map(|parts| compositions(n - parts, parts))
        .map(|c| c.into_iter().map(|x| x + 1).collect())
        .collect()
}

/// One random member of `family` acting on `C^n ⊗ C^k`. Free structural
/// parameters (block sizes, the factorization `n = d r`, the zero corner) are
/// drawn uniformly from the admissible choices.
pub fn generate_family<R: Rng + ?Sized>(
    family: Family,
    n: usize,
    k: usize,
    rng: &mut R,
) -> Result<Generated, GenError> {
    check_positive(&[("n", n), ("k", k)])?;
    match family {
        Family::Pattern => Ok(generate_pattern_unitary(
            &PatternMatrix::random(n, k, rng),
            rng,
        )),
        Family::DiagSchrodinger => generate_schrodinger_diag_unitary(
            &PatternMatrix::random(n, k, rng),
            FinalSpaceMode::Classical,
            rng,
        ),
        Family::BlocksH | Family::BlocksS => {
            let picture = if family == Family::BlocksH {
                Picture::Heisenberg
            } else {
                Picture::Schrodinger
            };
            let dims = random_composition(n, rng);
            let bp = BlockPattern::random(&dims, k, picture, rng);
            generate_block_diag_unitary(&bp, picture, rng)
        }
        Family::TensorH | Family::TensorS => {
            let divisors: Vec<usize> = (1..=n).filter(|&d| n.is_multiple_of(d)).collect();
            let d = divisors[rng.random_range(0..divisors.len())];
            if family == Family::TensorH {
                generate_tensor_h(d, n / d, k, rng)
            } else {
                generate_tensor_s(d, n / d, k, UnitalSource::Exact, rng)
            }
        }
        Family::Zero => {
            if n < 2 {
                return Err(GenError::InvalidDimensions(
                    "zero-block family needs n ≥ 2".into(),
                ));
            }
            let d0 = rng.random_range(1..n);
            generate_zero_block(d0, n - d0, k, rng)
        }
    }
}

/// Unitarity of a generated matrix, as checked by the generator tests.
pub fn generated_unitarity(g: &Generated) -> f64 {
    unitary_residual(&g.u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{invariance_oracle, SpanningFamily};
    use crate::isometry::{classify_block_type, classify_type};
    use crate::matcore::RngStream;

    fn rng(seed: u64) -> rand_chacha::ChaCha20Rng {
        RngStream::new(seed, 0).rng()
    }

    fn oracle(g: &Generated) -> f64 {
        let fam = SpanningFamily::canonical(g.k);
        g.pictures
            .iter()
            .map(|&p| {
                invariance_oracle(&g.u, g.k, &g.algebra, p, &fam)
                    .unwrap()
                    .max_defect
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn pattern_examples() {
        let p = PatternMatrix::canonical(3);
        assert!(p.is_all_ones());
        let mut r = rng(1);
        let perm = PatternMatrix::random(4, 1, &mut r);
        assert!(perm.delta.iter().flatten().all(|&d| d <= 1));
        let p = PatternMatrix::random(3, 4, &mut r);
        assert!(PatternMatrix::new(4, p.delta.clone()).is_ok());
        assert!(PatternMatrix::new(2, vec![vec![2, 0], vec![1, 1]]).is_err());
    }

    #[test]
    fn birkhoff_reassembles_pattern() {
        let mut r = rng(2);
        for _ in 0..20 {
            let p = PatternMatrix::random(4, 3, &mut r);
            let perms = birkhoff_decompose(&p);
            let mut sum = vec![vec![0; 4]; 4];
            for perm in &perms {
                for (i, &j) in perm.iter().enumerate() {
                    sum[i][j] += 1;
                }
            }
            assert_eq!(sum, p.delta);
        }
    }

    #[test]
    fn pattern_unitary_ranks_follow_delta() {
        let mut r = rng(3);
        let p = PatternMatrix::random(3, 2, &mut r);
        let g = generate_pattern_unitary(&p, &mut r);
        assert!(generated_unitarity(&g) <= 1e-10);
        let rep = classify_type(&g.u, 3, 2);
        assert!(rep.flags.c2 && rep.flags.c3);
        assert_eq!(rep.ranks(), p.delta);
        assert!(oracle(&g) <= 1e-9);
    }

    #[test]
    fn diagonal_pattern_gives_controlled_unitary() {
        let mut r = rng(4);
        let p = PatternMatrix::new(2, vec![vec![2, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]).unwrap();
        let g = generate_pattern_unitary(&p, &mut r);
        let layout = BlockLayout::uniform(3, 2);
        for i in 0..3 {
            for j in 0..3 {
                let b = layout.get(&g.u, i, j).unwrap();
                if i == j {
                    assert!(unitary_residual(&b) < 1e-12);
                } else {
                    assert_eq!(b.norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn schrodinger_generators_satisfy_all_column_conditions() {
        let mut r = rng(5);
        for (n, k) in [(2, 2), (3, 2), (2, 3), (3, 3)] {
            let p = PatternMatrix::random(n, k, &mut r);
            let g =
                generate_schrodinger_diag_unitary(&p, FinalSpaceMode::Classical, &mut r).unwrap();
            let rep = classify_type(&g.u, n, k);
            assert!(
                rep.flags.c2 && rep.flags.c3 && rep.flags.c4,
                "{:?}",
                p.delta
            );
            assert!(oracle(&g) <= 1e-9);
        }
        let g = generate_schrodinger_diag_unitary(
            &PatternMatrix::canonical(2),
            FinalSpaceMode::QuantumLatin,
            &mut r,
        )
        .unwrap();
        assert!(generated_unitarity(&g) <= 1e-10);
        let rep = classify_type(&g.u, 2, 2);
        assert!(rep.flags.c2 && rep.flags.c3 && rep.flags.c4);
        assert!(matches!(
            generate_schrodinger_diag_unitary(
                &PatternMatrix::random(2, 3, &mut r),
                FinalSpaceMode::QuantumLatin,
                &mut r
            ),
            Err(GenError::PatternNotRealizable(_))
        ));
    }

    #[test]
    fn block_patterns_respect_constraints() {
        let mut r = rng(6);
        for dims in [vec![2, 1, 1], vec![1, 2], vec![3], vec![1, 1, 1]] {
            for k in 1..=3 {
                for picture in [Picture::Heisenberg, Picture::Schrodinger] {
                    let bp = BlockPattern::random(&dims, k, picture, &mut r);
                    assert!(BlockPattern::new(dims.clone(), k, bp.delta.clone(), picture).is_ok());
                }
            }
        }
        // A Heisenberg-only pattern mixing block sizes.
        let bp = BlockPattern::new(
            vec![2, 1, 1],
            2,
            vec![vec![1, 1, 0], vec![1, 0, 1], vec![1, 0, 1]],
            Picture::Heisenberg,
        )
        .unwrap();
        assert!(
            BlockPattern::new(bp.dims.clone(), 2, bp.delta.clone(), Picture::Schrodinger).is_err()
        );
        let g = generate_block_diag_unitary(&bp, Picture::Heisenberg, &mut r).unwrap();
        assert!(generated_unitarity(&g) <= 1e-10);
        assert!(classify_block_type(&g.u, &bp.dims, 2).heisenberg());
        assert!(oracle(&g) <= 1e-9);
    }

    #[test]
    fn unit_block_sizes_reduce_to_pattern_generator() {
        let p = PatternMatrix::random(3, 2, &mut rng(7));
        let bp = BlockPattern::new(vec![1, 1, 1], 2, p.delta.clone(), Picture::Heisenberg).unwrap();
        let a = generate_pattern_unitary(&p, &mut rng(8));
        let b = generate_block_diag_unitary(&bp, Picture::Heisenberg, &mut rng(8)).unwrap();
        assert!((a.u - b.u).norm() < 1e-14);
    }

    #[test]
    fn block_schrodinger_example() {
        let mut r = rng(9);
        let bp = BlockPattern::random(&[2, 1], 2, Picture::Schrodinger, &mut r);
        let g = generate_block_diag_unitary(&bp, Picture::Schrodinger, &mut r).unwrap();
        let rep = classify_block_type(&g.u, &[2, 1], 2);
        assert!(rep.schrodinger());
        assert!(oracle(&g) <= 1e-9);
    }

    #[test]
    fn tensor_h_factorizes_the_channel() {
        let mut r = rng(10);
        let (d, rr, k) = (2, 2, 2);
        let g = generate_tensor_h(d, rr, k, &mut r).unwrap();
        let w = g.witness.matrices["W"].to_matrix().unwrap();
        let beta = crate::matcore::random_state(k, k, &mut r);
        let x = crate::matcore::ginibre(d, d, &mut r);
        let full = crate::channels::ChannelSpec::new(g.u.clone(), beta.clone(), d * rr, k).unwrap();
        let small = crate::channels::ChannelSpec::new(w, beta, d, k).unwrap();
        let lhs = full.apply_s(&kron(&x, &identity(rr))).unwrap();
        let rhs = kron(&small.apply_s(&x).unwrap(), &identity(rr));
        assert!((lhs - rhs).norm() < 1e-10);
        // k = 1: a plain tensor product.
        let g1 = generate_tensor_h(2, 3, 1, &mut r).unwrap();
        let v = g1.witness.matrices["V"].to_matrix().unwrap();
        let w = g1.witness.matrices["W"].to_matrix().unwrap();
        assert!((g1.u - kron(&w, &v)).norm() < 1e-12);
    }

    #[test]
    fn tensor_s_exact_and_approx() {
        let mut r = rng(11);
        let g = generate_tensor_s(2, 2, 2, UnitalSource::Exact, &mut r).unwrap();
        let w = g.witness.matrices["W"].to_matrix().unwrap();
        assert!(unitary_residual(&w) <= 1e-10);
        assert!(unitary_residual(&partial_transpose(&w, 2, 2).unwrap()) <= 1e-10);
        assert!(oracle(&g) <= 1e-9);
        let g = generate_tensor_s(
            2,
            2,
            2,
            UnitalSource::Approx {
                eps: 1e-12,
                max_iter: 100_000,
            },
            &mut r,
        )
        .unwrap();
        assert!(generated_unitarity(&g) <= 1e-10);
        assert!(oracle(&g) <= 1e-9);
    }

    #[test]
    fn zero_block_and_negative_control() {
        let mut r = rng(12);
        let g = generate_zero_block(1, 2, 2, &mut r).unwrap();
        assert!(oracle(&g) <= 1e-9);
        // A Householder reflection along a generic vector mixes the corners.
        let v = crate::matcore::random_unit_vector(6, &mut r);
        let reflect = identity(6) - (&v * v.adjoint()).scale(2.0);
        let bad = Generated {
            u: &g.u * reflect,
            ..g.clone()
        };
        assert!(unitary_residual(&bad.u) < 1e-10);
        assert!(oracle(&bad) > 1e-3);
        let g0 = generate_zero_block(0, 2, 2, &mut r).unwrap();
        assert_eq!(g0.algebra, AlgebraSpec::full(2));
    }

    #[test]
    fn family_dispatch_is_deterministic() {
        for f in Family::ALL {
            assert_eq!(Family::from_name(f.name()), Some(f));
            let a = generate_family(f, 3, 2, &mut rng(13)).unwrap();
            let b = generate_family(f, 3, 2, &mut rng(13)).unwrap();
            assert_eq!(a.u, b.u);
            assert!(generated_unitarity(&a) <= 1e-10);
            assert!(oracle(&a) <= 1e-9, "{}", f.name());
        }
    }
}
