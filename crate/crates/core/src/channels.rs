//! The dual pair of maps generated by a bipartite unitary `U ∈ U_{nk}` and an
//! ancilla state `β`:
//!
//! - Heisenberg picture, unital: `S_{U,β}(X) = [id ⊗ Tr](U*(X ⊗ I_k)U(I_n ⊗ β))`
//! - Schrödinger picture, trace preserving: `T_{U,β}(X) = [id ⊗ Tr](U(X ⊗ β)U*)`
//!
//! Subalgebra membership is measured quantitatively as the Hilbert–Schmidt
//! distance to the algebra, so invariance statements become defect bounds.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isometry::classify_type;
use crate::matcore::{
    hermitian_defect, hermitian_eigen, identity, kron, partial_trace_second, random_state, trace,
    unit, unitary_residual, BlockLayout, CMat, MatError, C64,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("U is not unitary (‖U*U − I‖_F = {0:e})")]
    NotUnitary(f64),
    #[error("β is not a density matrix: {0}")]
    NotState(String),
    #[error("channel does not preserve diagonal matrices (off-diagonal defect {defect:e})")]
    NotDiagonalPreserving { defect: f64 },
    #[error("blocks of U are not partial isometries with partitioned column initial spaces")]
    NotColumnPartition,
    #[error("algebra of size {algebra} does not match system dimension {system}")]
    AlgebraSize { algebra: usize, system: usize },
}

/// Heisenberg (`S_{U,β}`, unital) or Schrödinger (`T_{U,β}`, trace preserving).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Picture {
    Heisenberg,
    Schrodinger,
}

#[derive(Debug, Clone)]
pub struct ChannelSpec {
    pub u: CMat,
    pub beta: CMat,
    pub n: usize,
    pub k: usize,
}

impl ChannelSpec {
    pub fn new(u: CMat, beta: CMat, n: usize, k: usize) -> Result<Self, ChannelError> {
        if u.nrows() != n * k || u.ncols() != n * k {
            return Err(MatError::DimensionMismatch(format!(
                "U must be {0}x{0} for n={n}, k={k}",
                n * k
            ))
            .into());
        }
        if beta.nrows() != k || beta.ncols() != k {
            return Err(MatError::DimensionMismatch(format!("β must be {k}x{k}")).into());
        }
        let res = unitary_residual(&u);
        if res > 1e-9 {
            return Err(ChannelError::NotUnitary(res));
        }
        check_state(&beta)?;
        Ok(ChannelSpec { u, beta, n, k })
    }

    fn check_input(&self, x: &CMat) -> Result<(), ChannelError> {
        if x.nrows() != self.n || x.ncols() != self.n {
            return Err(MatError::DimensionMismatch(format!(
                "channel input must be {0}x{0}, got {1}x{2}",
                self.n,
                x.nrows(),
                x.ncols()
            ))
            .into());
        }
        Ok(())
    }

    /// `S_{U,β}(X)`, evaluated literally.
    pub fn apply_s(&self, x: &CMat) -> Result<CMat, ChannelError> {
        self.check_input(x)?;
        let (n, k) = (self.n, self.k);
        let inner =
            self.u.adjoint() * kron(x, &identity(k)) * &self.u * kron(&identity(n), &self.beta);
        Ok(partial_trace_second(&inner, n, k)?)
    }

    /// `T_{U,β}(X)`, evaluated literally.
    pub fn apply_t(&self, x: &CMat) -> Result<CMat, ChannelError> {
        self.check_input(x)?;
        let inner = &self.u * kron(x, &self.beta) * self.u.adjoint();
        Ok(partial_trace_second(&inner, self.n, self.k)?)
    }

    pub fn apply(&self, picture: Picture, x: &CMat) -> Result<CMat, ChannelError> {
        match picture {
            Picture::Heisenberg => self.apply_s(x),
            Picture::Schrodinger => self.apply_t(x),
        }
    }

    /// Choi matrix `Σ_ab e_a e_b* ⊗ T(e_a e_b*)` of the Schrödinger map.
    pub fn choi_t(&self) -> CMat {
        let n = self.n;
        let mut c = CMat::zeros(n * n, n * n);
        for a in 0..n {
            for b in 0..n {
                let t = self.apply_t(&unit(n, n, a, b)).expect("square input");
                c += kron(&unit(n, n, a, b), &t);
            }
        }
        c
    }

    pub fn kraus(&self) -> Kraus {
        Kraus::new(&self.u, &self.beta, self.n, self.k)
    }
}

fn check_state(beta: &CMat) -> Result<(), ChannelError> {
    let tr = trace(beta);
    if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
        return Err(ChannelError::NotState(format!("trace {tr}")));
    }
    if hermitian_defect(beta) > 1e-12 {
        return Err(ChannelError::NotState("not Hermitian".into()));
    }
    let (vals, _) = hermitian_eigen(beta);
    if vals[0] < -1e-12 {
        return Err(ChannelError::NotState(format!(
            "negative eigenvalue {:e}",
            vals[0]
        )));
    }
    Ok(())
}

/// Kraus operators `K_{lm} = (I ⊗ e_l*) U (I ⊗ β^{1/2} e_m)`, so that
/// `S(X) = Σ K* X K` and `T(X) = Σ K X K*`.
#[derive(Debug, Clone)]
pub struct Kraus {
    pub ops: Vec<CMat>,
}

impl Kraus {
    pub fn new(u: &CMat, beta: &CMat, n: usize, k: usize) -> Self {
        let (vals, vecs) = hermitian_eigen(beta);
        let mut ops = Vec::with_capacity(k * k);
        for (m, lam) in vals.iter().enumerate() {
            if *lam <= 0.0 {
                continue;
            }
            let col = vecs.column(m).scale(lam.sqrt());
            for l in 0..k {
                // K[i, j] = Σ_s U[(i,l), (j,s)] col[s]
                let kop = CMat::from_fn(n, n, |i, j| {
                    (0..k)
                        .map(|s| u[(i * k + l, j * k + s)] * col[s])
                        .sum::<C64>()
                });
                ops.push(kop);
            }
        }
        Kraus { ops }
    }

    pub fn apply(&self, picture: Picture, x: &CMat) -> CMat {
        let n = x.nrows();
        let mut out = CMat::zeros(n, n);
        for kop in &self.ops {
            match picture {
                Picture::Heisenberg => out += kop.adjoint() * x * kop,
                Picture::Schrodinger => out += kop * x * kop.adjoint(),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AlgebraKind {
    /// Diagonal matrices in `M_n`.
    Diagonal(usize),
    /// `⊕_a M_{d_a}`.
    BlockDiagonal(Vec<usize>),
    /// `M_d ⊗ I_r` on `C^d ⊗ C^r`.
    Tensor {
        d: usize,
        r: usize,
    },
    /// `0_{d0} ⊕ M_{d1}`.
    ZeroBlock {
        d0: usize,
        d1: usize,
    },
    Full(usize),
}

/// A subalgebra `V · A_std · V*` of `M_n`; without `basis_change`, `V = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgebraSpec {
    pub kind: AlgebraKind,
    pub basis_change: Option<CMat>,
}

impl AlgebraSpec {
    pub fn new(kind: AlgebraKind) -> Self {
        AlgebraSpec {
            kind,
            basis_change: None,
        }
    }

    pub fn diagonal(n: usize) -> Self {
        Self::new(AlgebraKind::Diagonal(n))
    }

    pub fn blocks(dims: Vec<usize>) -> Self {
        Self::new(AlgebraKind::BlockDiagonal(dims))
    }

    pub fn tensor(d: usize, r: usize) -> Self {
        Self::new(AlgebraKind::Tensor { d, r })
    }

    pub fn zero_block(d0: usize, d1: usize) -> Self {
        Self::new(AlgebraKind::ZeroBlock { d0, d1 })
    }

    pub fn full(n: usize) -> Self {
        Self::new(AlgebraKind::Full(n))
    }

    pub fn with_basis_change(mut self, v: CMat) -> Self {
        assert!(unitary_residual(&v) <= 1e-9, "basis change must be unitary");
        self.basis_change = Some(v);
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            AlgebraKind::Diagonal(n) | AlgebraKind::Full(n) => *n,
            AlgebraKind::BlockDiagonal(d) => d.iter().sum(),
            AlgebraKind::Tensor { d, r } => d * r,
            AlgebraKind::ZeroBlock { d0, d1 } => d0 + d1,
        }
    }

    fn project_std(&self, x: &CMat) -> CMat {
        match &self.kind {
            AlgebraKind::Diagonal(_) => CMat::from_diagonal(&x.diagonal()),
            AlgebraKind::BlockDiagonal(dims) => {
                let layout = BlockLayout::ragged(dims.clone());
                let mut out = CMat::zeros(x.nrows(), x.ncols());
                for a in 0..dims.len() {
                    let b = layout.get(x, a, a).expect("size checked");
                    layout.set(&mut out, a, a, &b).expect("size checked");
                }
                out
            }
            AlgebraKind::Tensor { d, r } => {
                let reduced = partial_trace_second(x, *d, *r).expect("size checked");
                kron(&reduced.unscale(*r as f64), &identity(*r))
            }
            AlgebraKind::ZeroBlock { d0, d1 } => {
                let mut out = CMat::zeros(x.nrows(), x.ncols());
                out.view_mut((*d0, *d0), (*d1, *d1))
                    .copy_from(&x.view((*d0, *d0), (*d1, *d1)));
                out
            }
            AlgebraKind::Full(_) => x.clone(),
        }
    }

    /// Hilbert–Schmidt orthogonal projection onto the algebra.
    pub fn project(&self, x: &CMat) -> CMat {
        assert_eq!(x.nrows(), self.dim(), "algebra projection: size mismatch");
        match &self.basis_change {
            None => self.project_std(x),
            Some(v) => v * self.project_std(&(v.adjoint() * x * v)) * v.adjoint(),
        }
    }

    /// `‖X − Π(X)‖_F`.
    pub fn defect(&self, x: &CMat) -> f64 {
        (x - self.project(x)).norm()
    }

    /// Linear spanning set of the algebra: matrix units inside each block.
    pub fn generators(&self) -> Vec<CMat> {
        let n = self.dim();
        let std: Vec<CMat> = match &self.kind {
            AlgebraKind::Diagonal(_) => (0..n).map(|i| unit(n, n, i, i)).collect(),
            AlgebraKind::BlockDiagonal(dims) => {
                let layout = BlockLayout::ragged(dims.clone());
                let mut g = Vec::new();
                for (a, &d) in dims.iter().enumerate() {
                    let o = layout.offset(a);
                    for i in 0..d {
                        for j in 0..d {
                            g.push(unit(n, n, o + i, o + j));
                        }
                    }
                }
                g
            }
            AlgebraKind::Tensor { d, r } => {
                let mut g = Vec::new();
                for a in 0..*d {
                    for b in 0..*d {
                        g.push(kron(&unit(*d, *d, a, b), &identity(*r)));
                    }
                }
                g
            }
            AlgebraKind::ZeroBlock { d0, d1 } => {
                let mut g = Vec::new();
                for i in 0..*d1 {
                    for j in 0..*d1 {
                        g.push(unit(n, n, d0 + i, d0 + j));
                    }
                }
                g
            }
            AlgebraKind::Full(_) => (0..n * n).map(|idx| unit(n, n, idx / n, idx % n)).collect(),
        };
        match &self.basis_change {
            None => std,
            Some(v) => std.into_iter().map(|g| v * g * v.adjoint()).collect(),
        }
    }
}

/// `in_algebra`: distance of `X` to the algebra.
pub fn in_algebra(x: &CMat, alg: &AlgebraSpec) -> f64 {
    alg.defect(x)
}

/// A family of `k×k` density matrices meant to span `M_k`.
#[derive(Debug, Clone)]
pub struct SpanningFamily {
    pub k: usize,
    pub states: Vec<CMat>,
}

impl SpanningFamily {
    /// The tomographic family: `e_i e_i*`, and for `i < j` the pure states on
    /// `(e_i + e_j)/√2` and `(e_i + i·e_j)/√2`. These `k²` states span `M_k`.
    pub fn canonical(k: usize) -> Self {
        let mut states = Vec::with_capacity(k * k);
        for i in 0..k {
            states.push(unit(k, k, i, i));
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..k {
            for j in i + 1..k {
                for phase in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
                    let mut v = nalgebra::DVector::<C64>::zeros(k);
                    v[i] = C64::new(h, 0.0);
                    v[j] = phase * h;
                    states.push(&v * v.adjoint());
                }
            }
        }
        SpanningFamily { k, states }
    }

    /// `count` independent random mixed states (full-rank Wishart).
    pub fn random<R: Rng + ?Sized>(k: usize, count: usize, rng: &mut R) -> Self {
        SpanningFamily {
            k,
            states: (0..count).map(|_| random_state(k, k, rng)).collect(),
        }
    }

    /// Condition number of the Hilbert–Schmidt Gram matrix; infinite when
    /// the family does not span `M_k`.
    pub fn gram_condition(&self) -> f64 {
        let m = self.states.len();
        let gram = CMat::from_fn(m, m, |a, b| {
            crate::matcore::hs_inner(&self.states[a], &self.states[b])
        });
        let (vals, _) = hermitian_eigen(&gram);
        if m < self.k * self.k || vals[0] <= 1e-14 * vals[m - 1] {
            return f64::INFINITY;
        }
        // Gram is k²-rank at most; with more states than k² only the top k² matter.
        let top = &vals[m - self.k * self.k..];
        top[top.len() - 1] / top[0]
    }

    pub fn spans(&self) -> bool {
        self.gram_condition().is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub max_defect: f64,
    pub worst_state: usize,
    pub worst_generator: usize,
}

/// Brute-force invariance check: the largest distance to the algebra of the
/// image of any algebra generator, over every state of the family.
pub fn invariance_oracle(
    u: &CMat,
    k: usize,
    alg: &AlgebraSpec,
    picture: Picture,
    family: &SpanningFamily,
) -> Result<OracleReport, ChannelError> {
    let n = alg.dim();
    if u.nrows() != n * k || u.ncols() != n * k {
        return Err(ChannelError::AlgebraSize {
            algebra: n,
            system: u.nrows() / k.max(1),
        });
    }
    let gens = alg.generators();
    let per_state: Vec<OracleReport> = family
        .states
        .par_iter()
        .enumerate()
        .map(|(s, beta)| {
            let kraus = Kraus::new(u, beta, n, k);
            let mut best = OracleReport {
                max_defect: 0.0,
                worst_state: s,
                worst_generator: 0,
            };
            for (g, x) in gens.iter().enumerate() {
                let d = alg.defect(&kraus.apply(picture, x));
                if d > best.max_defect {
                    best = OracleReport {
                        max_defect: d,
                        worst_state: s,
                        worst_generator: g,
                    };
                }
            }
            best
        })
        .collect();
    Ok(per_state.into_iter().fold(
        OracleReport {
            max_defect: 0.0,
            worst_state: 0,
            worst_generator: 0,
        },
        |a, b| {
            if b.max_defect > a.max_defect {
                b
            } else {
                a
            }
        },
    ))
}

/// Transition matrix of the Markov chain induced on diagonal matrices:
/// `P_{ij} = Tr(P_{E_ji} β)`, the probability of moving from `e_i` to `e_j`.
///
/// The matrix is read off the initial spaces of the blocks and checked
/// against direct application of `T_{U,β}` to the basis states.
pub fn markov_matrix(spec: &ChannelSpec) -> Result<DMatrix<f64>, ChannelError> {
    let n = spec.n;
    let rep = classify_type(&spec.u, n, spec.k);
    if !rep.all_partial_isometries || !rep.flags.c3 {
        return Err(ChannelError::NotColumnPartition);
    }
    let from_channel = markov_matrix_from_channel(spec)?;
    let p = DMatrix::from_fn(n, n, |i, j| {
        let e = rep.blocks[j][i].initial.projector();
        (e * &spec.beta).trace().re
    });
    let gap = (&p - &from_channel).amax();
    if gap > 1e-9 {
        return Err(ChannelError::NotDiagonalPreserving { defect: gap });
    }
    Ok(p)
}

/// `P_{ij} = ⟨e_j, T(e_i e_i*) e_j⟩`, failing if some `T(e_i e_i*)` has
/// off-diagonal mass above `1e-9`.
pub fn markov_matrix_from_channel(spec: &ChannelSpec) -> Result<DMatrix<f64>, ChannelError> {
    let n = spec.n;
    let diag = AlgebraSpec::diagonal(n);
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        let out = spec.apply_t(&unit(n, n, i, i))?;
        let defect = diag.defect(&out);
        if defect > 1e-9 {
            return Err(ChannelError::NotDiagonalPreserving { defect });
        }
        for j in 0..n {
            p[(i, j)] = out[(j, j)].re;
        }
    }
    Ok(p)
}
