//! Acceptance suite. One line per criterion; the process exits nonzero if any
//! criterion fails. Run with `cargo test -p subalg-core --test acceptance`.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use subalg::channels::{
    invariance_oracle, markov_matrix, markov_matrix_from_channel, AlgebraSpec, ChannelSpec,
    Picture, SpanningFamily,
};
use subalg::experiment::{run_experiment, Algo, ExperimentConfig};
use subalg::generators::{
    fixture, fixtures, generate_family, generated_unitarity, perp, Family, Generated,
};
use subalg::isometry::{
    check_cochran, check_mutual_annihilation, classify_block_type, classify_type, final_spaces,
    is_partition,
};
use subalg::matcore::{
    ginibre, haar_unitary, hermitian_eigen, hs_inner, identity, partial_transpose, random_state,
};
use subalg::scaling::{sinkhorn_blocks, BlockPSDMatrix, Norm};
use subalg::{CMat, RngStream, Tolerances};

const SEED: u64 = 0x5EED_2024;
const DIMS: [(usize, usize); 4] = [(2, 2), (2, 3), (3, 2), (3, 3)];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn oracle(u: &CMat, k: usize, alg: &AlgebraSpec, picture: Picture) -> f64 {
    invariance_oracle(u, k, alg, picture, &SpanningFamily::canonical(k))
        .expect("sizes match")
        .max_defect
}

/// Structural verifier matching the family that produced `g`.
fn structural_ok(family: Family, g: &Generated) -> bool {
    let w = &g.witness;
    let mat = |name: &str| {
        w.matrices[name]
            .to_matrix()
            .expect("witness matrices are well formed")
    };
    match family {
        Family::Pattern => {
            let r = classify_type(&g.u, g.n, g.k);
            r.all_partial_isometries && r.flags.c2 && r.flags.c3
        }
        Family::DiagSchrodinger => {
            let r = classify_type(&g.u, g.n, g.k);
            r.all_partial_isometries && r.flags.c2 && r.flags.c3 && r.flags.c4
        }
        Family::BlocksH => classify_block_type(&g.u, w.dims.as_ref().unwrap(), g.k).heisenberg(),
        Family::BlocksS => classify_block_type(&g.u, w.dims.as_ref().unwrap(), g.k).schrodinger(),
        Family::TensorH => {
            subalg::matcore::unitary_residual(&mat("V")) <= 1e-10
                && subalg::matcore::unitary_residual(&mat("W")) <= 1e-10
        }
        Family::TensorS => {
            let dims = w.dims.as_ref().unwrap();
            let wg = partial_transpose(&mat("W"), dims[1], g.k).unwrap();
            subalg::matcore::unitary_residual(&wg) <= 1e-10
        }
        Family::Zero => {
            let d0 = w.dims.as_ref().unwrap()[0] * g.k;
            let m = g.u.nrows();
            g.u.view((0, d0), (d0, m - d0)).norm() <= 1e-12
                && g.u.view((d0, 0), (m - d0, d0)).norm() <= 1e-12
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let cases: Vec<(usize, Family, (usize, usize), usize)> = Family::ALL
        .iter()
        .enumerate()
        .flat_map(|(fi, &f)| {
            DIMS.iter()
                .enumerate()
                .flat_map(move |(di, &d)| (0..50).map(move |t| (fi * 1000 + di * 100 + t, f, d, t)))
        })
        .collect();
    let failures: Vec<String> = cases
        .par_iter()
        .filter_map(|&(id, family, (n, k), _)| {
            let mut rng = RngStream::new(SEED, id as u64).rng();
            let g = match generate_family(family, n, k, &mut rng) {
                Ok(g) => g,
                Err(e) => return Some(format!("{} ({n},{k}) #{id}: {e}", family.name())),
            };
            let unit = generated_unitarity(&g);
            let defect = g.pictures.iter().map(|&p| oracle(&g.u, k, &g.algebra, p)).fold(0.0, f64::max);
            let structural = structural_ok(family, &g);
            (unit > 1e-10 || defect > 1e-9 || !structural).then(|| {
                format!("{} ({n},{k}) #{id}: unitarity {unit:.1e}, defect {defect:.1e}, structural {structural}", family.name())
            })
        })
        .collect();
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 120.0;
    let mut detail = format!(
        "{} instances, {} failures, {secs:.1}s (limit 120s)",
        cases.len(),
        failures.len()
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first: {f}"));
    }
    outcome(pass, detail)
}

fn criterion_2() -> Outcome {
    let mut diag_ok = 0;
    let mut total = 0;
    for (di, &(n, k)) in DIMS.iter().enumerate() {
        for t in 0..50 {
            let mut rng = RngStream::new(SEED ^ 2, (di * 100 + t) as u64).rng();
            let g =
                generate_family(Family::DiagSchrodinger, n, k, &mut rng).expect("diag-S generates");
            let r = classify_type(&g.u, n, k);
            total += 1;
            if r.all_partial_isometries && r.flags.c2 && r.flags.c3 && r.flags.c4 {
                diag_ok += 1;
            }
        }
    }
    let diagonal = AlgebraSpec::diagonal(2);
    let haar_ok = (0..200)
        .filter(|&t| {
            let u = haar_unitary(4, &mut RngStream::new(SEED ^ 3, t).rng());
            let f = classify_type(&u, 2, 2).flags;
            let no_flags = !(f.c1 || f.c2 || f.c3 || f.c4);
            let d_s = oracle(&u, 2, &diagonal, Picture::Heisenberg);
            let d_t = oracle(&u, 2, &diagonal, Picture::Schrodinger);
            no_flags && d_s > 1e-3 && d_t > 1e-3
        })
        .count();
    outcome(
        diag_ok == total && haar_ok >= 198,
        format!("diag-S c2∧c3∧c4 on {diag_ok}/{total}; Haar flags false and defect > 1e-3 on {haar_ok}/200 (need 198)"),
    )
}

fn criterion_3() -> Outcome {
    let mut verdicts = 0;
    let mut wrong = Vec::new();
    for seed in 0..5 {
        for f in fixtures(SEED + seed) {
            for ex in &f.expectations {
                let d = oracle(&f.u, f.k, &ex.algebra, ex.picture);
                let ok = if ex.member { d <= 1e-9 } else { d >= 1e-2 };
                verdicts += 1;
                if !ok {
                    wrong.push(format!("{} {} {:?}: {d:.2e}", f.name, ex.label, ex.picture));
                }
            }
            if let Some(expected) = f.flags {
                let r = classify_type(&f.u, f.n, f.k);
                verdicts += 1;
                if !r.all_partial_isometries || r.flags != expected {
                    wrong.push(format!("{} flags {:?}", f.name, r.flags));
                }
            }
        }
    }
    // Markov matrix: closed form from the fixture vectors, the structural
    // route and direct application of T.
    let mut markov_gap = 0.0_f64;
    for t in 0..50 {
        let f = fixture("schrodinger-not-c1", SEED + 100 + t).unwrap();
        let (b, c) = (&f.vectors["b"], &f.vectors["c"]);
        let beta = random_state(2, 2, &mut RngStream::new(SEED ^ 4, t).rng());
        let q = |x: &subalg::matcore::CVec| (x.adjoint() * &beta * x)[(0, 0)].re;
        let closed = DMatrix::from_row_slice(2, 2, &[q(b), q(&perp(b)), q(c), q(&perp(c))]);
        let spec = ChannelSpec::new(f.u.clone(), beta.clone(), 2, 2).unwrap();
        let direct = markov_matrix_from_channel(&spec).unwrap();
        let structural = markov_matrix(&spec).unwrap();
        markov_gap = markov_gap
            .max((&closed - &direct).amax())
            .max((&structural - &direct).amax());
    }
    let pass = wrong.is_empty() && markov_gap <= 1e-10;
    let mut detail = format!(
        "{} fixture verdicts over 5 seeds, {} wrong; Markov P vs direct T max gap {markov_gap:.1e} (limit 1e-10)",
        verdicts,
        wrong.len()
    );
    if let Some(w) = wrong.first() {
        detail.push_str(&format!("; first: {w}"));
    }
    outcome(pass, detail)
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0_f64; 3];
    let mut min_choi = f64::INFINITY;
    for (pi, &(n, k)) in [(2, 2), (2, 3), (3, 2)].iter().enumerate() {
        for t in 0..100 {
            let mut rng = RngStream::new(SEED ^ 5, (pi * 1000 + t) as u64).rng();
            let u = haar_unitary(n * k, &mut rng);
            let rank = rng.random_range(1..=k);
            let beta = random_state(k, rank, &mut rng);
            let spec = ChannelSpec::new(u, beta, n, k).unwrap();
            let (x, y) = (ginibre(n, n, &mut rng), ginibre(n, n, &mut rng));
            let lhs = hs_inner(&spec.apply_s(&x).unwrap(), &y);
            let rhs = hs_inner(&x, &spec.apply_t(&y).unwrap());
            worst[0] = worst[0].max((lhs - rhs).norm());
            worst[1] = worst[1].max((spec.apply_s(&identity(n)).unwrap() - identity(n)).norm());
            let tx = spec.apply_t(&x).unwrap();
            worst[2] = worst[2].max((tx.trace() - x.trace()).norm());
            let (eig, _) = hermitian_eigen(&spec.choi_t());
            min_choi = min_choi.min(eig.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst.iter().all(|&w| w <= 1e-10) && min_choi >= -1e-9 && secs < 30.0;
    outcome(
        pass,
        format!(
            "300 instances: duality {:.1e}, unitality {:.1e}, trace {:.1e} (limit 1e-10), min Choi eigenvalue {min_choi:.1e} (limit -1e-9), {secs:.2}s (limit 30s)",
            worst[0], worst[1], worst[2]
        ),
    )
}

/// `m` blocks whose initial spaces partition `C^k` and whose final spaces
/// are mutually orthogonal: `A_i = R_i Q_i*` with `Q_i`, `R_i` disjoint column
/// groups of two Haar unitaries.
fn cochran_positive<R: Rng + ?Sized>(k: usize, m: usize, rng: &mut R) -> Vec<CMat> {
    let (q, r) = (haar_unitary(k, rng), haar_unitary(k, rng));
    let mut sizes = vec![0; m];
    for _ in 0..k {
        sizes[rng.random_range(0..m)] += 1;
    }
    let mut start = 0;
    sizes
        .iter()
        .map(|&s| {
            let a = r.columns(start, s) * q.columns(start, s).adjoint();
            start += s;
            a
        })
        .collect()
}

/// `m` row blocks of the first `k` columns of a Haar `mk × mk` unitary:
/// `Σ A_i*A_i = I` but no block is a partial isometry.
fn cochran_negative<R: Rng + ?Sized>(k: usize, m: usize, rng: &mut R) -> Vec<CMat> {
    let u = haar_unitary(m * k, rng);
    (0..m)
        .map(|i| u.view((i * k, 0), (k, k)).into_owned())
        .collect()
}

fn criterion_5() -> Outcome {
    let tol = Tolerances::default();
    let mut misclassified = 0;
    for t in 0..400u64 {
        let mut rng = RngStream::new(SEED ^ 6, t).rng();
        let k = rng.random_range(2..=4);
        let m = rng.random_range(2..=k + 1);
        let positive = t < 200;
        let a = if positive {
            cochran_positive(k, m, &mut rng)
        } else {
            cochran_negative(k, m, &mut rng)
        };
        let rep = check_cochran(&a, k, &tol);
        let annihilate = check_mutual_annihilation(&a, tol.iso);
        let finals = final_spaces(&a, &tol);
        let final_partition = is_partition(&finals.iter().collect::<Vec<_>>(), k, tol.ortho);
        let ok = if positive {
            rep.sum_ok
                && rep.equality_case
                && rep.all_partial_isometries
                && rep.initial_partition
                && annihilate
                && final_partition
        } else {
            rep.sum_ok && !rep.equality_case && rep.rank_sum > k && !annihilate
        };
        if !ok {
            misclassified += 1;
        }
    }
    outcome(
        misclassified == 0,
        format!("200 positive + 200 negative families, {misclassified} misclassified"),
    )
}

struct BlockRun {
    k_ge_n: bool,
    converged: bool,
    iterations: usize,
    max_drop: f64,
    /// Sweeps after which `log F > -n³ log n`.
    literal_violations: usize,
    /// Sweeps after which `log F > -n²k log n`.
    corrected_violations: usize,
}

fn criterion_6() -> Outcome {
    let results: Vec<BlockRun> = (0..100u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = RngStream::new(SEED ^ 7, t).rng();
            let n = rng.random_range(2..=4);
            let k = rng.random_range(1..=3);
            let x = BlockPSDMatrix::random(n, k, &mut rng);
            let (_, trace) =
                sinkhorn_blocks(&x, 1e-6, 1_000_000, Norm::Operator).expect("PD input");
            let f = trace.f_history.as_ref().unwrap();
            let nf = n as f64;
            let above = |bound: f64| f.iter().filter(|&&v| v > bound + 1e-9).count();
            BlockRun {
                k_ge_n: k >= n,
                converged: trace.converged,
                iterations: trace.iterations,
                max_drop: f.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max),
                literal_violations: above(-nf.powi(3) * nf.ln()),
                corrected_violations: above(-(nf * nf * k as f64) * nf.ln()),
            }
        })
        .collect();
    let converged = results
        .iter()
        .filter(|r| r.converged && r.iterations <= 1_000_000)
        .count();
    let max_iter = results.iter().map(|r| r.iterations).max().unwrap();
    let max_drop = results.iter().map(|r| r.max_drop).fold(0.0, f64::max);
    let literal_bad = results.iter().filter(|r| r.literal_violations > 0).count();
    let literal_bad_k_ge_n = results
        .iter()
        .filter(|r| r.literal_violations > 0 && r.k_ge_n)
        .count();
    let corrected_bad = results
        .iter()
        .filter(|r| r.corrected_violations > 0)
        .count();
    let pass = converged == 100 && max_drop <= 1e-12 && literal_bad == 0;
    outcome(
        pass,
        format!(
            "converged {converged}/100 (max {max_iter} sweeps); max f_history drop {max_drop:.1e} (limit 1e-12); \
             log F ≤ -n³ log n violated on {literal_bad}/100 instances ({literal_bad_k_ge_n} with k ≥ n); \
             log F ≤ -n²k log n violated on {corrected_bad}/100"
        ),
    )
}

fn experiment(algo: Algo, trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        algo,
        n: 2,
        k: 2,
        eps: 1e-3,
        eps_list: vec![1e-1, 1e-2, 1e-3, 1e-4],
        trials,
        seed,
        max_iter: algo.default_max_iter(),
        norm: algo.default_norm(),
        jobs: None,
    }
}

fn criterion_7() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for algo in [Algo::Unital, Algo::Qls] {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let out =
            run_experiment(&experiment(algo, 10_000, SEED), dir.path()).expect("experiment runs");
        let secs = start.elapsed().as_secs_f64();
        let rows = &out.summary.sweep;
        let mut by_eps: Vec<_> = rows.iter().map(|r| (r.eps, r.mean_steps)).collect();
        by_eps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let monotone = by_eps.windows(2).all(|w| w[1].1 <= w[0].1);
        let rate = out.summary.convergence_rate;
        pass &= rate >= 0.99 && monotone && secs < 300.0;
        let means: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.1}", r.mean_steps))
            .collect();
        parts.push(format!(
            "{algo:?}: rate {rate:.4} at 1e-3, mean steps [{}] for eps 1e-1..1e-4, monotone {monotone}, {secs:.1}s",
            means.join(", ")
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_8() -> Outcome {
    let mut diffs = Vec::new();
    let mut compared = 0;
    for algo in [Algo::Unital, Algo::Qls, Algo::Blocks] {
        let mut cfg = experiment(algo, 300, SEED ^ 8);
        if algo == Algo::Blocks {
            cfg.n = 3;
            cfg.eps = 1e-6;
            cfg.eps_list = vec![1e-2, 1e-4, 1e-6];
        }
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&cfg, a.path()).unwrap();
        cfg.jobs = Some(1);
        run_experiment(&cfg, b.path()).unwrap();
        for file in ["histogram.csv", "eps_sweep.csv"] {
            compared += 1;
            if fs::read(a.path().join(file)).unwrap() != fs::read(b.path().join(file)).unwrap() {
                diffs.push(format!("{algo:?}/{file}"));
            }
        }
    }
    outcome(
        diffs.is_empty(),
        format!("{compared} CSV pairs compared across thread counts, differing: {diffs:?}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("generator suite", criterion_1),
        ("converse spot checks", criterion_2),
        ("fixtures and Markov matrix", criterion_3),
        ("duality and channel axioms", criterion_4),
        ("Cochran oracle", criterion_5),
        ("block Sinkhorn", criterion_6),
        ("sampler experiments", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {} [{name}]: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
