//! Explicit small unitaries with known invariance verdicts, used as
//! regression anchors for the verifiers.

use std::collections::BTreeMap;

use rand::Rng;

use crate::channels::{AlgebraSpec, Picture};
use crate::isometry::TypeFlags;
use crate::matcore::{
    flip, haar_unitary, identity, kron, random_unit_vector, CMat, CVec, RngStream, C64,
};

pub const FIXTURE_NAMES: [&str; 7] = [
    "heisenberg-rank-one",
    "schrodinger-not-c1",
    "diagonal-not-blocks",
    "blocks-not-diagonal",
    "blocks-not-tensor",
    "identity",
    "flip",
];

/// Expected verdict of the invariance oracle for one algebra and picture:
/// members have defect `≤ 1e-9`, non-members `≥ 1e-2`.
#[derive(Debug, Clone)]
pub struct Expectation {
    pub label: String,
    pub algebra: AlgebraSpec,
    pub picture: Picture,
    pub member: bool,
}

impl Expectation {
    fn new(label: &str, algebra: AlgebraSpec, picture: Picture, member: bool) -> Self {
        Expectation {
            label: label.into(),
            algebra,
            picture,
            member,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub u: CMat,
    pub n: usize,
    pub k: usize,
    pub expectations: Vec<Expectation>,
    /// Expected (C1)-(C4) flags, when every block is a partial isometry.
    pub flags: Option<TypeFlags>,
    /// Vectors the fixture was built from, by name.
    pub vectors: BTreeMap<&'static str, CVec>,
}

fn flags(c1: bool, c2: bool, c3: bool, c4: bool) -> Option<TypeFlags> {
    Some(TypeFlags { c1, c2, c3, c4 })
}

/// The unit vector orthogonal to `x ∈ C^2` (up to phase).
pub fn perp(x: &CVec) -> CVec {
    CVec::from_vec(vec![-x[1].conj(), x[0].conj()])
}

fn outer(x: &CVec, y: &CVec) -> CMat {
    x * y.adjoint()
}

fn e(n: usize, i: usize) -> CVec {
    crate::matcore::basis_vector(n, i)
}

/// 2×2 grid of 2×2 blocks.
fn grid2(b: [[CMat; 2]; 2]) -> CMat {
    let mut u = CMat::zeros(4, 4);
    for (i, row) in b.iter().enumerate() {
        for (j, blk) in row.iter().enumerate() {
            u.view_mut((2 * i, 2 * j), (2, 2)).copy_from(blk);
        }
    }
    u
}

fn heisenberg_rank_one<R: Rng + ?Sized>(rng: &mut R) -> Fixture {
    let [a, b, c, d] = [0; 4].map(|_| random_unit_vector(2, rng));
    let u = grid2([
        [outer(&a, &b), outer(&perp(&a), &c)],
        [outer(&d, &perp(&b)), outer(&perp(&d), &perp(&c))],
    ]);
    Fixture {
        name: "heisenberg-rank-one",
        u,
        n: 2,
        k: 2,
        expectations: vec![
            Expectation::new(
                "diagonal",
                AlgebraSpec::diagonal(2),
                Picture::Heisenberg,
                true,
            ),
            Expectation::new(
                "diagonal",
                AlgebraSpec::diagonal(2),
                Picture::Schrodinger,
                false,
            ),
        ],
        flags: flags(false, true, true, false),
        vectors: BTreeMap::from([("a", a), ("b", b), ("c", c), ("d", d)]),
    }
}

fn schrodinger_not_c1<R: Rng + ?Sized>(rng: &mut R) -> Fixture {
    let [a, b, c] = [0; 3].map(|_| random_unit_vector(2, rng));
    let u = grid2([
        [outer(&a, &b), outer(&perp(&a), &c)],
        [outer(&perp(&a), &perp(&b)), outer(&a, &perp(&c))],
    ]);
    Fixture {
        name: "schrodinger-not-c1",
        u,
        n: 2,
        k: 2,
        expectations: vec![
            Expectation::new(
                "diagonal",
                AlgebraSpec::diagonal(2),
                Picture::Schrodinger,
                true,
            ),
            Expectation::new(
                "diagonal",
                AlgebraSpec::diagonal(2),
                Picture::Heisenberg,
                true,
            ),
        ],
        flags: flags(false, true, true, true),
        vectors: BTreeMap::from([("a", a), ("b", b), ("c", c)]),
    }
}

/// Rank-one blocks `e_x e_y*` arranged so that the initial spaces of each
/// block row coincide.
fn diagonal_not_blocks() -> Fixture {
    // (row, col) -> (x, y) for the block e_x e_y*.
    const LAYOUT: [[(usize, usize); 3]; 3] = [
        [(0, 0), (1, 0), (2, 0)],
        [(2, 1), (0, 1), (1, 1)],
        [(1, 2), (2, 2), (0, 2)],
    ];
    let mut u = CMat::zeros(9, 9);
    for (i, row) in LAYOUT.iter().enumerate() {
        for (j, &(x, y)) in row.iter().enumerate() {
            u[(3 * i + x, 3 * j + y)] = C64::new(1.0, 0.0);
        }
    }
    Fixture {
        name: "diagonal-not-blocks",
        u,
        n: 3,
        k: 3,
        expectations: vec![
            Expectation::new(
                "diagonal",
                AlgebraSpec::diagonal(3),
                Picture::Heisenberg,
                true,
            ),
            Expectation::new(
                "blocks[2,1]",
                AlgebraSpec::blocks(vec![2, 1]),
                Picture::Heisenberg,
                false,
            ),
        ],
        flags: flags(false, true, true, true),
        vectors: BTreeMap::new(),
    }
}

/// A 4×4 unitary `W` embedded in a 9×9 permutation frame; its 2×2 blocks are
/// generically not partial isometries.
fn blocks_not_diagonal<R: Rng + ?Sized>(rng: &mut R) -> Fixture {
    let w = haar_unitary(4, rng);
    let mut u = CMat::zeros(9, 9);
    let one = C64::new(1.0, 0.0);
    for (r, c) in [(0, 7), (3, 8), (6, 6), (7, 0), (8, 3)] {
        u[(r, c)] = one;
    }
    let slots = [1, 2, 4, 5];
    for (wi, &r) in slots.iter().enumerate() {
        for (wj, &c) in slots.iter().enumerate() {
            u[(r, c)] = w[(wi, wj)];
        }
    }
    Fixture {
        name: "blocks-not-diagonal",
        u,
        n: 3,
        k: 3,
        expectations: vec![
            Expectation::new(
                "blocks[2,1]",
                AlgebraSpec::blocks(vec![2, 1]),
                Picture::Heisenberg,
                true,
            ),
            Expectation::new(
                "diagonal",
                AlgebraSpec::diagonal(3),
                Picture::Heisenberg,
                false,
            ),
        ],
        flags: None,
        vectors: BTreeMap::new(),
    }
}

/// Permutation taking `C^d ⊗ C^r` (ordering `x·r + a`) to `C^r ⊗ C^d`
/// (ordering `a·d + x`).
fn outer_to_inner(d: usize, r: usize) -> CMat {
    let mut p = CMat::zeros(d * r, d * r);
    for x in 0..d {
        for a in 0..r {
            p[(a * d + x, x * r + a)] = C64::new(1.0, 0.0);
        }
    }
    p
}

/// `U = Σ_ab e_a e_b* ⊗ Ṽ_ab ⊗ f_ab e_ab*` on `C^r ⊗ C^d ⊗ C^k` with `r = k`,
/// `{e_ab}_a` and `{f_ab}_b` orthonormal bases and Haar `Ṽ_ab`.
fn blocks_not_tensor<R: Rng + ?Sized>(rng: &mut R) -> Fixture {
    let (d, r) = (2, 2);
    let k = r;
    let rows: Vec<CMat> = (0..r).map(|_| haar_unitary(k, rng)).collect();
    let cols: Vec<CMat> = (0..r).map(|_| haar_unitary(k, rng)).collect();
    let mut u = CMat::zeros(r * d * k, r * d * k);
    for a in 0..r {
        for b in 0..r {
            let v = haar_unitary(d, rng);
            let f = rows[a].column(b).into_owned();
            let e_ab = cols[b].column(a).into_owned();
            let gab = outer(&e(r, a), &e(r, b));
            u += kron(&kron(&gab, &v), &outer(&f, &e_ab));
        }
    }
    let tensor = AlgebraSpec::tensor(d, r).with_basis_change(outer_to_inner(d, r));
    Fixture {
        name: "blocks-not-tensor",
        u,
        n: r * d,
        k,
        expectations: vec![
            Expectation::new(
                "blocks[2,2]",
                AlgebraSpec::blocks(vec![d; r]),
                Picture::Heisenberg,
                true,
            ),
            Expectation::new("tensor(2,2)", tensor, Picture::Heisenberg, false),
        ],
        flags: None,
        vectors: BTreeMap::new(),
    }
}

fn identity_fixture() -> Fixture {
    Fixture {
        name: "identity",
        u: identity(4),
        n: 2,
        k: 2,
        expectations: vec![
            Expectation::new(
                "diagonal",
                AlgebraSpec::diagonal(2),
                Picture::Heisenberg,
                true,
            ),
            Expectation::new(
                "diagonal",
                AlgebraSpec::diagonal(2),
                Picture::Schrodinger,
                true,
            ),
        ],
        flags: flags(true, true, true, true),
        vectors: BTreeMap::new(),
    }
}

fn flip_fixture() -> Fixture {
    Fixture {
        name: "flip",
        u: flip(2),
        n: 2,
        k: 2,
        expectations: vec![
            Expectation::new(
                "diagonal",
                AlgebraSpec::diagonal(2),
                Picture::Heisenberg,
                true,
            ),
            Expectation::new(
                "diagonal",
                AlgebraSpec::diagonal(2),
                Picture::Schrodinger,
                false,
            ),
        ],
        flags: flags(false, true, true, false),
        vectors: BTreeMap::new(),
    }
}

/// Builds the named fixture; random ingredients come from stream `index` of
/// `seed`.
pub fn fixture(name: &str, seed: u64) -> Option<Fixture> {
    let index = FIXTURE_NAMES.iter().position(|&n| n == name)?;
    let mut rng = RngStream::new(seed, index as u64).rng();
    Some(match index {
        0 => heisenberg_rank_one(&mut rng),
        1 => schrodinger_not_c1(&mut rng),
        2 => diagonal_not_blocks(),
        3 => blocks_not_diagonal(&mut rng),
        4 => blocks_not_tensor(&mut rng),
        5 => identity_fixture(),
        _ => flip_fixture(),
    })
}

pub fn fixtures(seed: u64) -> Vec<Fixture> {
    FIXTURE_NAMES
        .iter()
        .map(|n| fixture(n, seed).expect("known name"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{invariance_oracle, markov_matrix, ChannelSpec, SpanningFamily};
    use crate::isometry::{analyze_block, classify_type};
    use crate::matcore::{random_state, unitary_residual};

    #[test]
    fn fixtures_meet_their_verdicts() {
        for f in fixtures(7) {
            assert!(unitary_residual(&f.u) < 1e-12, "{}", f.name);
            let fam = SpanningFamily::canonical(f.k);
            for ex in &f.expectations {
                let d = invariance_oracle(&f.u, f.k, &ex.algebra, ex.picture, &fam)
                    .unwrap()
                    .max_defect;
                if ex.member {
                    assert!(d <= 1e-9, "{} {} {:?}: {d}", f.name, ex.label, ex.picture);
                } else {
                    assert!(d >= 1e-2, "{} {} {:?}: {d}", f.name, ex.label, ex.picture);
                }
            }
            if let Some(expected) = f.flags {
                let rep = classify_type(&f.u, f.n, f.k);
                assert!(rep.all_partial_isometries, "{}", f.name);
                assert_eq!(rep.flags, expected, "{}", f.name);
            }
        }
    }

    #[test]
    fn embedded_unitary_has_non_isometric_block() {
        let f = fixture("blocks-not-diagonal", 7).unwrap();
        let w11 = f.u.view((1, 1), (2, 2)).into_owned();
        assert!(!analyze_block(&w11).is_partial_isometry);
    }

    #[test]
    fn markov_matrix_matches_closed_form() {
        let f = fixture("schrodinger-not-c1", 3).unwrap();
        let (b, c) = (&f.vectors["b"], &f.vectors["c"]);
        assert!(b.dotc(c).norm() > 1e-3);
        let beta = random_state(2, 2, &mut RngStream::new(3, 99).rng());
        let q = |x: &CVec| (x.adjoint() * &beta * x)[(0, 0)].re;
        let spec = ChannelSpec::new(f.u.clone(), beta.clone(), 2, 2).unwrap();
        let p = markov_matrix(&spec).unwrap();
        let expected =
            nalgebra::DMatrix::from_row_slice(2, 2, &[q(b), q(&perp(b)), q(c), q(&perp(c))]);
        assert!((p - expected).amax() < 1e-12);
    }

    #[test]
    fn unknown_name() {
        assert!(fixture("nope", 1).is_none());
    }
}
