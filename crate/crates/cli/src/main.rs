use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use perihom::cell::effective_assembly;
use perihom::harness::{converge_sweep, flux_special_case, trotter_kato_oracle, SweepConfig, SweepResult, TheoremSpec, TheoremTag};
use perihom::{CMat, Error, Problem};
use serde::Serialize;
use serde_json::json;

mod output;

use output::OutDir;

#[derive(Parser)]
#[command(name = "perihom", version, about = "Periodic homogenization error sweeps")]
struct Cli {
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problems and print the effective coefficients.
    Cell(CommonArgs),
    /// Run a convergence sweep.
    Converge(CommonArgs),
    /// Flux sweep plus the constant-flux special case.
    Flux(CommonArgs),
    /// Schrödinger sweep.
    Schrodinger(CommonArgs),
    /// Trotter–Kato identity residuals on random matrices.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    t: f64,
    #[arg(long, default_value_t = 128)]
    quad: usize,
}

/// Exit 2 for anything wrong with the input, 1 for failures while running.
enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    args: Vec<String>,
    config: Option<String>,
    seed: Option<u64>,
    out: String,
    version: &'static str,
    threads: Option<usize>,
    wall_time_s: f64,
    files: Vec<String>,
}

struct Run {
    command: &'static str,
    config: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
    started: Instant,
}

impl Run {
    fn finish(&self, out: OutDir) -> Outcome {
        let files = out.written().to_vec();
        let manifest = RunManifest {
            command: self.command,
            args: std::env::args().skip(1).collect(),
            config: self.config.as_ref().map(|p| p.display().to_string()),
            seed: self.seed,
            out: out.path().display().to_string(),
            version: env!("CARGO_PKG_VERSION"),
            threads: self.threads,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            files,
        };
        out.write_manifest(&manifest).map_err(|e| Failure::Run(e.to_string()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let started = Instant::now();
    let result = match &cli.cmd {
        Command::Cell(a) => cmd_cell(a, run("cell", a, cli.threads, started)),
        Command::Converge(a) => cmd_sweep(a, run("converge", a, cli.threads, started), |th| th),
        Command::Flux(a) => cmd_flux(a, run("flux", a, cli.threads, started)),
        Command::Schrodinger(a) => cmd_sweep(a, run("schrodinger", a, cli.threads, started), |th| {
            only(th, &[TheoremTag::Schrodinger, TheoremTag::SchrodingerCorr])
        }),
        Command::Oracle(a) => cmd_oracle(a, Run { command: "oracle", config: None, seed: Some(a.seed), threads: cli.threads, started }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: &'static str, a: &CommonArgs, threads: Option<usize>, started: Instant) -> Run {
    Run { command, config: Some(a.config.clone()), seed: a.seed, threads, started }
}

/// Theorems of the given tags from the config, or all of them at default r if none are listed.
fn only(theorems: Vec<TheoremSpec>, tags: &[TheoremTag]) -> Vec<TheoremSpec> {
    let kept: Vec<TheoremSpec> = theorems.into_iter().filter(|s| tags.contains(&s.tag)).collect();
    if kept.is_empty() {
        tags.iter().map(|&t| TheoremSpec::new(t)).collect()
    } else {
        kept
    }
}

fn open_out(path: &Option<PathBuf>, required: bool) -> Result<Option<OutDir>, Failure> {
    match path {
        Some(p) => OutDir::create(p).map(Some).map_err(|e| Failure::Run(format!("{}: {e}", p.display()))),
        None if required => Err(Failure::Config("--out is required for this command".into())),
        None => Ok(None),
    }
}

fn load_sweep(a: &CommonArgs, pick: impl Fn(Vec<TheoremSpec>) -> Vec<TheoremSpec>) -> Result<(SweepConfig, Problem), Failure> {
    let text = std::fs::read_to_string(&a.config).map_err(|e| Failure::Config(format!("{}: {e}", a.config.display())))?;
    let mut cfg = SweepConfig::parse(&text)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.theorems = pick(cfg.theorems);
    cfg.validate()?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let problem = cfg.load_problem(base)?;
    Ok((cfg, problem))
}

fn fmt_entry(z: perihom::C64) -> String {
    // Adding 0.0 turns -0.0 into 0.0.
    let z = perihom::C64::new(z.re + 0.0, z.im + 0.0);
    if z.im == 0.0 {
        format!("{:.16e}", z.re)
    } else {
        format!("{:.16e}{:+.16e}i", z.re, z.im)
    }
}

fn fmt_mat(m: &CMat) -> String {
    let rows: Vec<String> = (0..m.nrows()).map(|i| format!("[{}]", (0..m.ncols()).map(|j| fmt_entry(m[(i, j)])).collect::<Vec<_>>().join(", "))).collect();
    format!("[{}]", rows.join(", "))
}

fn cmd_cell(a: &CommonArgs, run: Run) -> Outcome {
    let problem = Problem::from_path(&a.config)?;
    let cell = effective_assembly(&problem)?;
    let (upper, lower) = cell.voigt_reuss_margins();
    println!("problem {}", problem.name);
    println!("g0 = {}", fmt_mat(&cell.g0));
    println!("V = {}", fmt_mat(&cell.v));
    println!("W = {}", fmt_mat(&cell.w));
    println!("Qbar = {}", fmt_mat(&cell.qbar));
    println!("Q0bar = {}", fmt_mat(&cell.q0bar));
    println!("voigt margin = {upper:.16e}");
    println!("reuss margin = {lower:.16e}");
    println!("|Lambda| = {:.16e}", cell.lambda.l2_norm() + 0.0);
    println!("|Lambda~| = {:.16e}", cell.lambda_tilde.l2_norm() + 0.0);
    if let Some(mut out) = open_out(&a.out, false)? {
        let mut doc = cell.to_json();
        doc["problem"] = json!(problem.name);
        doc["voigt_margin"] = json!(upper);
        doc["reuss_margin"] = json!(lower);
        out.write_json("cell.json", &doc).map_err(|e| Failure::Run(e.to_string()))?;
        run.finish(out)?;
    }
    Ok(())
}

fn write_sweep(out: &mut OutDir, res: &SweepResult) -> Outcome {
    let io = |e: std::io::Error| Failure::Run(e.to_string());
    out.write("errors.csv", res.errors_csv().as_bytes()).map_err(io)?;
    out.write("rates.csv", res.rates_csv().as_bytes()).map_err(io)?;
    out.write("probes.csv", res.probes_csv().as_bytes()).map_err(io)?;
    Ok(())
}

fn print_rates(res: &SweepResult) {
    println!("benchmark {} lambda {:.6}", res.benchmark, res.lambda);
    for r in &res.rates {
        let slope = r.fit.map_or("-".to_string(), |f| format!("{:.3} (r2 {:.3})", f.slope, f.r2));
        println!("{:<24} {:<12} t={:<6} slope {slope} expected {:.3} [{}]", r.theorem, r.norm, r.t, r.expected, r.status.as_str());
    }
}

fn cmd_sweep(a: &CommonArgs, mut run: Run, pick: impl Fn(Vec<TheoremSpec>) -> Vec<TheoremSpec>) -> Outcome {
    let mut out = open_out(&a.out, true)?.unwrap();
    let (cfg, problem) = load_sweep(a, pick)?;
    run.seed = Some(cfg.seed);
    let res = converge_sweep(&cfg, &problem)?;
    print_rates(&res);
    write_sweep(&mut out, &res)?;
    run.finish(out)
}

fn cmd_flux(a: &CommonArgs, mut run: Run) -> Outcome {
    let mut out = open_out(&a.out, true)?.unwrap();
    let (cfg, problem) = load_sweep(a, |th| only(th, &[TheoremTag::Flux]))?;
    run.seed = Some(cfg.seed);
    let res = converge_sweep(&cfg, &problem)?;
    print_rates(&res);
    write_sweep(&mut out, &res)?;
    let special = flux_special_case(&cfg, &problem)?;
    if special.applicable {
        println!("special case: max relative gap {:.3e} over {} comparisons", special.max_relative_gap, special.comparisons);
    } else {
        println!("special case: not applicable");
    }
    out.write_json("special_case.json", &special).map_err(|e| Failure::Run(e.to_string()))?;
    run.finish(out)?;
    if !special.passed() {
        return Err(Failure::Run(format!("flux special case gap {:e} exceeds tolerance", special.max_relative_gap)));
    }
    Ok(())
}

fn cmd_oracle(a: &OracleArgs, run: Run) -> Outcome {
    if a.n == 0 || a.quad < 2 || !a.t.is_finite() {
        return Err(Failure::Config("oracle needs n >= 1, quad >= 2 and finite t".into()));
    }
    let report = trotter_kato_oracle(a.n, a.seed, a.t, a.quad);
    println!("n {} seed {} t {} eps {}", report.n, report.seed, report.t, report.eps);
    println!("four-term residual  {:.3e} (doubled {:.3e})", report.four_term, report.four_term_doubled);
    println!("seven-term residual {:.3e} (doubled {:.3e})", report.seven_term, report.seven_term_doubled);
    for r in &report.ladder {
        println!("  q = {:<3} four {:.3e} seven {:.3e}", r.quad_points, r.four_term, r.seven_term);
    }
    println!("G = 0 difference {:.3e}", report.g_zero_difference);
    println!("quadrature limited: {}", report.quadrature_limited);
    if let Some(mut out) = open_out(&a.out, false)? {
        out.write_json("oracle.json", &report).map_err(|e| Failure::Run(e.to_string()))?;
        run.finish(out)?;
    }
    let mut failed = Vec::new();
    if report.max_residual() > 1e-8 {
        failed.push(format!("residual {:e} > 1e-8", report.max_residual()));
    }
    if !report.quadrature_limited {
        failed.push("residual does not shrink with quadrature refinement".to_string());
    }
    if report.g_zero_difference > 1e-10 {
        failed.push(format!("G = 0 difference {:e}", report.g_zero_difference));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(failed.join("; ")))
    }
}
