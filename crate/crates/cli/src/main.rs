//! Experiment runner: solve a system once, compare runs across rank
//! counts and reduction plans for bit-identity, or stress the reduction
//! layer against the exact long-accumulator reference.
//!
//! Exit codes: 0 success/converged, 1 usage error, 2 breakdown or
//! non-convergence (or oracle mismatch), 3 not reproducible.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use reprokrylov::{
    build_rhs, dot_global, format_hex, gen_band, gen_poisson27, parse_matrix_market,
    partition_rows, solve, twoprod, CsrMatrix, DotMode, RankWorld, ReductionPlan, SolveReport,
    SolverConfig, SolverVariant, SuperAcc,
};

#[derive(Parser)]
#[command(name = "reprokrylov", version, about = "Bit-reproducible BiCGStab experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one system and write history.csv + report.txt.
    Solve(SolveArgs),
    /// Re-run one configuration across ranks/plans/repeats and verify
    /// bit-identity of the residual histories.
    Compare(CompareArgs),
    /// Cross-check the reduction layer against the exact accumulator on
    /// random dot products.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct ProblemArgs {
    /// Matrix Market file (square, real/integer, general/symmetric).
    #[arg(long, value_name = "PATH")]
    matrix: Option<PathBuf>,
    /// 27-point stencil on an m x m x m grid.
    #[arg(long, value_name = "M")]
    poisson: Option<usize>,
    /// Break the stencil's symmetry with a small sub-diagonal perturbation.
    #[arg(long, requires = "poisson")]
    perturb: bool,
    /// Band matrix: size and half bandwidth.
    #[arg(long, num_args = 2, value_names = ["N", "HB"])]
    band: Option<Vec<usize>>,
}

impl ProblemArgs {
    fn build(&self) -> Result<(CsrMatrix, String), String> {
        let picked =
            self.matrix.is_some() as u8 + self.poisson.is_some() as u8 + self.band.is_some() as u8;
        if picked != 1 {
            return Err("pick exactly one of --matrix, --poisson, --band".into());
        }
        if let Some(path) = &self.matrix {
            let f = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let a = parse_matrix_market(std::io::BufReader::new(f))
                .map_err(|e| format!("{}: {e}", path.display()))?;
            return Ok((a, format!("file {}", path.display())));
        }
        if let Some(m) = self.poisson {
            let a = gen_poisson27(m, self.perturb).map_err(|e| e.to_string())?;
            let label = if self.perturb {
                format!("poisson27 m={m} perturbed")
            } else {
                format!("poisson27 m={m}")
            };
            return Ok((a, label));
        }
        let band = self.band.as_ref().unwrap();
        let a = gen_band(band[0], band[1]).map_err(|e| e.to_string())?;
        Ok((a, format!("band n={} hb={}", band[0], band[1])))
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value = "standard")]
    variant: String,
    #[arg(long, default_value = "exblas")]
    mode: String,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 1)]
    ranks: usize,
    #[arg(long, default_value = "leftfold")]
    plan: String,
    /// Seed for the random reduction plan.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for history.csv and report.txt.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    ranks: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "leftfold,balanced,random")]
    plans: Vec<String>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 1000)]
    max_len: usize,
    /// Decimal exponent range of the random elements (products span twice this).
    #[arg(long, default_value_t = 150)]
    range: i32,
    #[arg(long, default_value = "exblas")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_plan(name: &str, seed: u64) -> Result<ReductionPlan, String> {
    match name {
        "leftfold" => Ok(ReductionPlan::LeftFold),
        "balanced" => Ok(ReductionPlan::Balanced),
        "random" => Ok(ReductionPlan::Random(seed)),
        other => Err(format!("unknown plan `{other}` (leftfold|balanced|random)")),
    }
}

fn parse_mode(name: &str) -> Result<DotMode, String> {
    DotMode::parse(name).ok_or_else(|| format!("unknown mode `{name}` (naive|fpe|exblas)"))
}

fn parse_variant(name: &str) -> Result<SolverVariant, String> {
    SolverVariant::parse(name)
        .ok_or_else(|| format!("unknown variant `{name}` (standard|pipelined)"))
}

fn run_once(
    a: &CsrMatrix,
    run: &RunArgs,
    ranks: usize,
    plan: ReductionPlan,
) -> Result<SolveReport, String> {
    if ranks == 0 || ranks > a.n() {
        return Err(format!("--ranks must be in 1..={}", a.n()));
    }
    let mode = parse_mode(&run.mode)?;
    let variant = parse_variant(&run.variant)?;
    let world = RankWorld::new(partition_rows(a.n(), ranks), plan, mode);
    let b = build_rhs(&world, a);
    let mut config = SolverConfig::for_matrix(a, variant);
    config.tol = run.tol;
    if let Some(k) = run.max_iters {
        config.max_iters = k;
    }
    solve(&world, a, &b, &config).map_err(|e| e.to_string())
}

fn cmd_solve(args: SolveArgs) -> Result<i32, String> {
    let (a, label) = args.problem.build()?;
    let plan = parse_plan(&args.plan, args.seed)?;
    let started = Instant::now();
    let report = run_once(&a, &args.run, args.ranks, plan)?;
    let wall = started.elapsed().as_secs_f64();

    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    let mut csv = String::from("iter,tau_hex,tau_dec\n");
    for &(iter, tau) in &report.history {
        writeln!(csv, "{iter},{},{}", format_hex(tau), tau).unwrap();
    }
    fs::write(args.out.join("history.csv"), csv).map_err(|e| e.to_string())?;

    let mut rep = String::new();
    writeln!(rep, "matrix: {label}").unwrap();
    writeln!(rep, "n: {}", a.n()).unwrap();
    writeln!(rep, "nnz: {}", a.nnz()).unwrap();
    writeln!(rep, "variant: {}", args.run.variant).unwrap();
    writeln!(rep, "mode: {}", args.run.mode).unwrap();
    writeln!(rep, "ranks: {}", args.ranks).unwrap();
    writeln!(rep, "plan: {}", plan.name()).unwrap();
    writeln!(rep, "tol: {}", args.run.tol).unwrap();
    writeln!(rep, "converged: {}", report.converged).unwrap();
    writeln!(rep, "iterations: {}", report.iterations).unwrap();
    writeln!(rep, "initial_residual_hex: {}", format_hex(report.initial_residual)).unwrap();
    writeln!(rep, "initial_residual_dec: {}", report.initial_residual).unwrap();
    writeln!(rep, "final_residual_hex: {}", format_hex(report.final_residual)).unwrap();
    writeln!(rep, "final_residual_dec: {}", report.final_residual).unwrap();
    writeln!(rep, "final_scaled_residual_hex: {}", format_hex(report.final_scaled_residual))
        .unwrap();
    writeln!(rep, "final_scaled_residual_dec: {}", report.final_scaled_residual).unwrap();
    writeln!(rep, "final_true_residual_hex: {}", format_hex(report.final_true_residual)).unwrap();
    writeln!(rep, "final_true_residual_dec: {}", report.final_true_residual).unwrap();
    writeln!(rep, "breakdown: {}", report.breakdown.as_deref().unwrap_or("none")).unwrap();
    writeln!(rep, "warnings: {}", report.warnings.len()).unwrap();
    for (i, w) in report.warnings.iter().enumerate() {
        writeln!(rep, "warning_{}: {w}", i + 1).unwrap();
    }
    writeln!(rep, "wall_seconds: {wall:.3}").unwrap();
    fs::write(args.out.join("report.txt"), rep).map_err(|e| e.to_string())?;

    if let Some(reason) = &report.breakdown {
        println!("breakdown after {} iterations: {reason}", report.iterations);
        return Ok(2);
    }
    println!(
        "{} in {} iterations, scaled residual {}",
        if report.converged { "converged" } else { "NOT converged" },
        report.iterations,
        format_hex(report.final_scaled_residual)
    );
    Ok(if report.converged { 0 } else { 2 })
}

fn cmd_compare(args: CompareArgs) -> Result<i32, String> {
    let (a, label) = args.problem.build()?;
    let mut runs: Vec<(String, Vec<u64>)> = Vec::new();
    for &ranks in &args.ranks {
        for plan_name in &args.plans {
            let plan = parse_plan(plan_name, args.seed)?;
            for rep in 0..args.repeats.max(1) {
                let report = run_once(&a, &args.run, ranks, plan)?;
                let bits: Vec<u64> =
                    report.history.iter().map(|&(_, t)| t.to_bits()).collect();
                runs.push((format!("P{ranks}/{}/r{rep}", plan.name()), bits));
            }
        }
    }
    println!("matrix: {label}  variant: {}  mode: {}", args.run.variant, args.run.mode);
    let max_len = runs.iter().map(|(_, b)| b.len()).max().unwrap_or(0);
    let show = args.ranks.len() * args.plans.len(); // first repeat of each config
    print!("{:>5}", "iter");
    for (name, _) in runs.iter().step_by(args.repeats.max(1)).take(show) {
        print!("  {name:>24}");
    }
    println!();
    for i in 0..max_len {
        print!("{i:>5}");
        for (_, bits) in runs.iter().step_by(args.repeats.max(1)).take(show) {
            match bits.get(i) {
                Some(&b) => print!("  {:>24}", format_hex(f64::from_bits(b))),
                None => print!("  {:>24}", "-"),
            }
        }
        println!();
    }
    let identical = runs.windows(2).all(|w| w[0].1 == w[1].1);
    if identical {
        println!("verdict: REPRODUCIBLE ({} runs bit-identical)", runs.len());
        Ok(0)
    } else {
        println!("verdict: NOT-REPRODUCIBLE");
        Ok(3)
    }
}

fn cmd_oracle(args: OracleArgs) -> Result<i32, String> {
    let mode = parse_mode(&args.mode)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut mismatches = 0usize;
    let mut warned = 0usize;
    let mut warned_mismatches = 0usize;
    let mut max_ulps = 0u64;
    for _ in 0..args.trials {
        let len = rng.gen_range(2..=args.max_len.max(2));
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            let m: f64 = rng.gen_range(-1.0..1.0);
            m * 10f64.powi(rng.gen_range(-args.range..=args.range))
        };
        let x: Vec<f64> = (0..len).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..len).map(|_| draw(&mut rng)).collect();
        // Exact reference: both EFT halves of every product into the long
        // accumulator, rounded once.
        let mut acc = SuperAcc::new();
        for (&p, &q) in x.iter().zip(&y) {
            let t = twoprod(p, q);
            acc.accumulate(t.result);
            acc.accumulate(t.error);
        }
        let exact = acc.round();
        let world = RankWorld::new(partition_rows(len, 2), ReductionPlan::Balanced, mode);
        let got = dot_global(&world, &x, &y);
        if got.fpe_overflow {
            warned += 1;
        }
        if got.values[0].to_bits() != exact.to_bits() {
            if got.fpe_overflow {
                warned_mismatches += 1;
            } else {
                mismatches += 1;
            }
            max_ulps = max_ulps.max(got.values[0].to_bits().abs_diff(exact.to_bits()));
        }
    }
    println!("trials: {}", args.trials);
    println!("mode: {}", args.mode);
    println!("warnings: {warned}");
    println!("mismatches_unwarned: {mismatches}");
    println!("mismatches_warned: {warned_mismatches}");
    println!("max_discrepancy_ulps: {max_ulps}");
    Ok(if mismatches == 0 { 0 } else { 2 })
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // clap's own exit code for bad flags is 2; the contract here
            // reserves 2 for numerical failure, so usage errors map to 1.
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.cmd {
        Cmd::Solve(a) => cmd_solve(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}
