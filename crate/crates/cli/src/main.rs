use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use subalg::channels::{invariance_oracle, AlgebraSpec, Picture, SpanningFamily};
use subalg::experiment::{run_experiment, run_trial, Algo, ExperimentConfig};
use subalg::generators::{
    fixture, generate_block_diag_unitary, generate_family, generate_pattern_unitary,
    generate_schrodinger_diag_unitary, generate_tensor_h, generate_tensor_s, generate_zero_block,
    BlockPattern, Family, FinalSpaceMode, Generated, PatternMatrix, UnitalSource, FIXTURE_NAMES,
};
use subalg::isometry::classify_type;
use subalg::matcore::{unitary_residual, MatrixJson};
use subalg::scaling::Norm;
use subalg::{CMat, RngStream};

#[derive(Parser)]
#[command(
    name = "subalg",
    version,
    about = "Bipartite unitaries whose channels preserve matrix subalgebras"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random member of a structured family, or emit a named fixture.
    Generate(GenerateArgs),
    /// Check a unitary against an algebra with the invariance oracle.
    Verify(VerifyArgs),
    /// Run one scaling iteration and optionally dump its trace.
    Scale(ScaleArgs),
    /// Run a batch of scaling iterations and write histogram data.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SeedArg {
    /// Random seed.
    #[arg(long, env = "SUBALG_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    /// pattern, diag-schrodinger, blocks-h, blocks-s, tensor-h, tensor-s, zero, or fixture:NAME.
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Block sizes for the block families, comma separated (sum = n).
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Tensor factor d for the tensor families (n = d·r).
    #[arg(long)]
    d: Option<usize>,
    /// Size of the zero corner for the zero family.
    #[arg(long)]
    d0: Option<usize>,
    /// Use the all-ones pattern (needs n = k).
    #[arg(long)]
    canonical: bool,
    /// Final-space construction for diag-schrodinger.
    #[arg(long, value_enum, default_value_t = ModeArg::Classical)]
    mode: ModeArg,
    /// tensor-s: take the unital factor from the polar iteration, to this eps.
    #[arg(long)]
    approx: Option<f64>,
    #[command(flatten)]
    seed: SeedArg,
    /// Output matrix JSON (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Witness sidecar path (default: <out>.witness.json).
    #[arg(long)]
    witness: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Classical,
    QuantumLatin,
}

#[derive(Clone, Copy, ValueEnum)]
enum PictureArg {
    /// Heisenberg picture, the unital map S.
    #[value(alias = "heisenberg", name = "S")]
    S,
    /// Schrödinger picture, the trace-preserving map T.
    #[value(alias = "schrodinger", name = "T")]
    T,
}

impl From<PictureArg> for Picture {
    fn from(p: PictureArg) -> Self {
        match p {
            PictureArg::S => Picture::Heisenberg,
            PictureArg::T => Picture::Schrodinger,
        }
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Matrix JSON to verify.
    #[arg(long = "in", conflicts_with = "fixture")]
    input: Option<PathBuf>,
    /// Verify a named fixture instead.
    #[arg(long)]
    fixture: Option<String>,
    /// Ancilla dimension.
    #[arg(long)]
    k: Option<usize>,
    /// diagonal, blocks:2,1, tensor:d,r, zero:d0,d1 or full.
    #[arg(long)]
    algebra: Option<String>,
    #[arg(long, value_enum, default_value_t = PictureArg::S)]
    picture: PictureArg,
    /// Ancilla states: canonical or random:COUNT.
    #[arg(long, default_value = "canonical")]
    states: String,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Qls,
    Unital,
    Blocks,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Qls => Algo::Qls,
            AlgoArg::Unital => Algo::Unital,
            AlgoArg::Blocks => Algo::Blocks,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Frobenius,
    Operator,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Frobenius => Norm::Frobenius,
            NormArg::Operator => Norm::Operator,
        }
    }
}

#[derive(Args)]
struct ScaleArgs {
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Defaults to 1e5 (qls, unital) or 1e6 (blocks).
    #[arg(long)]
    max_iter: Option<usize>,
    /// Defaults to frobenius (qls, unital) or operator (blocks).
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    #[command(flatten)]
    seed: SeedArg,
    /// Write the per-iteration trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Tolerance for the histogram.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Tolerances for the mean-steps sweep.
    #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3,1e-4")]
    eps_list: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    #[command(flatten)]
    seed: SeedArg,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "experiment-out")]
    out_dir: PathBuf,
}

/// `Fail` exits with 1; an `Err` from a command exits with 2.
enum Outcome {
    Pass,
    Fail,
}

type CmdResult = Result<Outcome, String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Scale(a) => cmd_scale(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match res {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write_or_print(path: Option<&Path>, body: &str) -> Result<(), String> {
    match path {
        Some(p) => fs::write(p, body).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("plain data serialises")
}

fn cmd_generate(a: GenerateArgs) -> CmdResult {
    let mut rng = RngStream::new(a.seed.seed, 0).rng();
    if let Some(name) = a.family.strip_prefix("fixture:") {
        let f = fixture(name, a.seed.seed).ok_or_else(|| {
            format!(
                "unknown fixture `{name}`; known: {}",
                FIXTURE_NAMES.join(", ")
            )
        })?;
        write_or_print(a.out.as_deref(), &MatrixJson::render(&f.u))?;
        return Ok(Outcome::Pass);
    }
    let family =
        Family::from_name(&a.family).ok_or_else(|| format!("unknown family `{}`", a.family))?;
    let (n, k) = (a.n, a.k);
    let err = |e: subalg::generators::GenError| e.to_string();
    let g: Generated = match family {
        Family::Pattern | Family::DiagSchrodinger => {
            let p = if a.canonical {
                if n != k {
                    return Err("--canonical needs n = k".into());
                }
                PatternMatrix::canonical(n)
            } else {
                PatternMatrix::random(n, k, &mut rng)
            };
            if family == Family::Pattern {
                generate_pattern_unitary(&p, &mut rng)
            } else {
                let mode = match a.mode {
                    ModeArg::Classical => FinalSpaceMode::Classical,
                    ModeArg::QuantumLatin => FinalSpaceMode::QuantumLatin,
                };
                generate_schrodinger_diag_unitary(&p, mode, &mut rng).map_err(err)?
            }
        }
        Family::BlocksH | Family::BlocksS if a.dims.is_some() => {
            let dims = a.dims.clone().unwrap_or_default();
            let picture = if family == Family::BlocksH {
                Picture::Heisenberg
            } else {
                Picture::Schrodinger
            };
            if dims.contains(&0) {
                return Err("--dims entries must be positive".into());
            }
            let bp = BlockPattern::random(&dims, k, picture, &mut rng);
            generate_block_diag_unitary(&bp, picture, &mut rng).map_err(err)?
        }
        Family::TensorH | Family::TensorS if a.d.is_some() || a.approx.is_some() => {
            let d = a.d.unwrap_or(1);
            if d == 0 || n % d != 0 {
                return Err(format!("--d {d} must divide n = {n}"));
            }
            if family == Family::TensorH {
                generate_tensor_h(d, n / d, k, &mut rng).map_err(err)?
            } else {
                let source = match a.approx {
                    Some(eps) => UnitalSource::Approx {
                        eps,
                        max_iter: 100_000,
                    },
                    None => UnitalSource::Exact,
                };
                generate_tensor_s(d, n / d, k, source, &mut rng).map_err(err)?
            }
        }
        Family::Zero if a.d0.is_some() => {
            let d0 = a.d0.unwrap_or(0);
            if d0 > n {
                return Err(format!("--d0 {d0} exceeds n = {n}"));
            }
            generate_zero_block(d0, n - d0, k, &mut rng).map_err(err)?
        }
        _ => generate_family(family, n, k, &mut rng).map_err(err)?,
    };
    write_or_print(a.out.as_deref(), &MatrixJson::render(&g.u))?;
    let witness_path = a
        .witness
        .or_else(|| a.out.as_ref().map(|p| p.with_extension("witness.json")));
    if let Some(p) = witness_path {
        write_or_print(Some(&p), &pretty(&g.witness))?;
    }
    Ok(Outcome::Pass)
}

fn parse_dims(spec: &str, what: &str) -> Result<Vec<usize>, String> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad {what} dimension `{s}`"))
        })
        .collect()
}

fn parse_algebra(spec: &str, n: usize) -> Result<AlgebraSpec, String> {
    let (head, tail) = spec.split_once(':').unwrap_or((spec, ""));
    let alg = match head {
        "diagonal" => AlgebraSpec::diagonal(n),
        "full" => AlgebraSpec::full(n),
        "blocks" => AlgebraSpec::blocks(parse_dims(tail, "block")?),
        "tensor" => match parse_dims(tail, "tensor")?[..] {
            [d, r] => AlgebraSpec::tensor(d, r),
            _ => return Err("tensor algebra needs tensor:d,r".into()),
        },
        "zero" => match parse_dims(tail, "zero-block")?[..] {
            [d0, d1] => AlgebraSpec::zero_block(d0, d1),
            _ => return Err("zero-block algebra needs zero:d0,d1".into()),
        },
        other => return Err(format!("unknown algebra `{other}`")),
    };
    if alg.dim() != n {
        return Err(format!(
            "algebra `{spec}` acts on dimension {}, the system has {n}",
            alg.dim()
        ));
    }
    Ok(alg)
}

fn parse_states(spec: &str, k: usize, seed: u64) -> Result<SpanningFamily, String> {
    if spec == "canonical" {
        return Ok(SpanningFamily::canonical(k));
    }
    let count = spec
        .strip_prefix("random:")
        .and_then(|c| c.parse::<usize>().ok())
        .ok_or_else(|| format!("bad --states `{spec}`; use canonical or random:COUNT"))?;
    Ok(SpanningFamily::random(
        k,
        count,
        &mut RngStream::new(seed, 1).rng(),
    ))
}

fn check(
    u: &CMat,
    k: usize,
    alg: &AlgebraSpec,
    picture: Picture,
    fam: &SpanningFamily,
    tol: f64,
) -> Result<(bool, Value), String> {
    let rep = invariance_oracle(u, k, alg, picture, fam).map_err(|e| e.to_string())?;
    let pass = rep.max_defect <= tol;
    Ok((
        pass,
        json!({
            "picture": format!("{picture:?}"),
            "defect": rep.max_defect,
            "worst_state": rep.worst_state,
            "worst_generator": rep.worst_generator,
            "pass": pass,
        }),
    ))
}

fn cmd_verify(a: VerifyArgs) -> CmdResult {
    let picture: Picture = a.picture.into();
    let (u, k, fix) = match (&a.input, &a.fixture) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let u = MatrixJson::parse(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            let k = a.k.ok_or("--k is required with --in")?;
            (u, k, None)
        }
        (None, Some(name)) => {
            let f = fixture(name, a.seed.seed).ok_or_else(|| {
                format!(
                    "unknown fixture `{name}`; known: {}",
                    FIXTURE_NAMES.join(", ")
                )
            })?;
            (f.u.clone(), f.k, Some(f))
        }
        _ => return Err("give exactly one of --in or --fixture".into()),
    };
    if !u.is_square() || k == 0 || u.nrows() % k != 0 {
        return Err(format!(
            "a {}x{} matrix is not bipartite with k = {k}",
            u.nrows(),
            u.ncols()
        ));
    }
    let n = u.nrows() / k;
    let residual = unitary_residual(&u);
    if residual > 1e-9 {
        return Err(format!("input is not unitary: ‖U*U − I‖_F = {residual:e}"));
    }
    let fam = parse_states(&a.states, k, a.seed.seed)?;
    if !fam.spans() {
        return Err(format!(
            "the {} ancilla states do not span M_{k}",
            fam.states.len()
        ));
    }
    let types = classify_type(&u, n, k);
    let mut report = json!({
        "n": n,
        "k": k,
        "unitary_residual": residual,
        "all_partial_isometries": types.all_partial_isometries,
        "flags": types.flags,
        "states": fam.states.len(),
        "gram_condition": fam.gram_condition(),
        "tol": a.tol,
    });

    let pass = match (&a.algebra, fix) {
        (Some(spec), _) => {
            let alg = parse_algebra(spec, n)?;
            let (pass, r) = check(&u, k, &alg, picture, &fam, a.tol)?;
            report["algebra"] = json!(spec);
            report["oracle"] = r;
            pass
        }
        (None, Some(f)) => {
            let mut all = true;
            let mut rows = Vec::new();
            for ex in &f.expectations {
                let (member, mut r) = check(&u, k, &ex.algebra, ex.picture, &fam, a.tol)?;
                r["algebra"] = json!(ex.label);
                r["expected"] = json!(ex.member);
                all &= member == ex.member;
                rows.push(r);
            }
            report["fixture"] = json!(f.name);
            report["checks"] = Value::Array(rows);
            report["matches_expected"] = json!(all);
            all
        }
        (None, None) => return Err("--algebra is required with --in".into()),
    };
    println!("{}", pretty(&report));
    Ok(if pass { Outcome::Pass } else { Outcome::Fail })
}

fn cmd_scale(a: ScaleArgs) -> CmdResult {
    let algo: Algo = a.algo.into();
    let cfg = ExperimentConfig {
        algo,
        n: a.n,
        k: a.k,
        eps: a.eps,
        eps_list: vec![],
        trials: 1,
        seed: a.seed.seed,
        max_iter: a.max_iter.unwrap_or(algo.default_max_iter()),
        norm: a.norm.map(Norm::from).unwrap_or(algo.default_norm()),
        jobs: None,
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let res = run_trial(&cfg, 0).map_err(|e| e.to_string())?;
    if let Some(p) = &a.trace {
        fs::write(p, res.trace.to_csv()).map_err(|e| format!("{}: {e}", p.display()))?;
    }
    let t = &res.trace;
    println!(
        "{}",
        pretty(&json!({
            "algo": algo,
            "n": a.n,
            "k": a.k,
            "eps": a.eps,
            "iterations": t.iterations,
            "converged": t.converged,
            "stop": t.stop,
            "final_defect": t.final_defect(),
            "final_log_f": t.f_history.as_ref().and_then(|f| f.last()),
            "degenerate_polar": t.degenerate_polar,
            "elapsed_secs": t.elapsed_secs,
        }))
    );
    Ok(if t.converged {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

fn cmd_experiment(a: ExperimentArgs) -> CmdResult {
    let algo: Algo = a.algo.into();
    let cfg = ExperimentConfig {
        algo,
        n: a.n,
        k: a.k,
        eps: a.eps,
        eps_list: a.eps_list,
        trials: a.trials,
        seed: a.seed.seed,
        max_iter: a.max_iter.unwrap_or(algo.default_max_iter()),
        norm: a.norm.map(Norm::from).unwrap_or(algo.default_norm()),
        jobs: a.jobs,
    };
    let out = run_experiment(&cfg, &a.out_dir).map_err(|e| e.to_string())?;
    println!("{}", pretty(&out.summary));
    Ok(Outcome::Pass)
}
