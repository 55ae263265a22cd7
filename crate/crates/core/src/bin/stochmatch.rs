use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use stochmatch::arrivals::{ArrivalModel, ArrivalSampler, Designation};
use stochmatch::engines::{designations, Engine, EngineKind};
use stochmatch::files::{load_activation, load_instance};
use stochmatch::instance::{validate_instance, EdgeClass, FractionalSolution, Graph, Instance, KernelInstance, XSpec};
use stochmatch::lp::{build_jl_lp, check_feasibility, solve_jl_lp, FeasibilityReport, LP_TOL};
use stochmatch::manifest::RunManifest;
use stochmatch::montecarlo::{estimate, ratio_report, uniform_grid, EstimateConfig, EstimateReport, RatioEstimate};
use stochmatch::output::{to_json, Cell, Table};
use stochmatch::ratiocalc::{check_all, curve, unmatched_lower_bound, unmatched_loose_bound, RatioReport, TOTAL_TOL};
use stochmatch::search::{grid_levels, optimize, SearchConfig, SearchOutcome};
use stochmatch::{Error, PiecewiseConstantF, TOL};

const DEFAULT_SEED: u64 = 42;
const SEED_ENV: &str = "STOCHMATCH_SEED";

#[derive(Parser)]
#[command(name = "stochmatch", version, about = "Evolving Suggested Matching toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Jaillet-Lu linear program.
    #[command(subcommand)]
    Lp(LpCommand),
    /// Kernel-instance validation.
    #[command(subcommand)]
    Kernel(KernelCommand),
    /// Monte Carlo simulation of a matching engine.
    Simulate(SimulateArgs),
    /// Analytic ratio bounds of an activation function.
    #[command(subcommand)]
    Ratio(RatioCommand),
    /// Search for an activation function with a large certified ratio.
    Search(SearchArgs),
    /// Empirical Pr[U_j(t) = 1] next to its analytic lower bound, as CSV.
    Curve(CurveArgs),
}

#[derive(Subcommand)]
enum LpCommand {
    /// Solve the LP and print the objective and optimal x.
    Solve(FileArgs),
    /// Residuals of the instance's `x` section against the LP constraints.
    Check(FileArgs),
}

#[derive(Subcommand)]
enum KernelCommand {
    /// Classify the instance with its `x` section as a kernel instance.
    Check(FileArgs),
}

#[derive(Args)]
struct FileArgs {
    instance: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    instance: PathBuf,
    #[arg(long, default_value = "esm")]
    engine: String,
    /// Activation function (required by `esm`).
    #[arg(long = "f")]
    activation: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Use `round(Λ)` arrivals at times `k/Λ` instead of Poisson streams.
    #[arg(long)]
    fixed_n: bool,
    /// Write the arrival events of the first trials as CSV.
    #[arg(long)]
    dump_arrivals: Option<PathBuf>,
    /// Number of trials included in `--dump-arrivals`.
    #[arg(long, default_value_t = 1)]
    dump_trials: u64,
    #[arg(long)]
    out_curves: Option<PathBuf>,
    #[arg(long)]
    out_edges: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum RatioCommand {
    /// Evaluate r1, r2, cons1, cons2 and the validity flags.
    Eval(RatioEvalArgs),
    /// (y, r1, r2) on a grid over [0, 1 - ln 2], as CSV.
    Curve(RatioCurveArgs),
}

#[derive(Args)]
struct RatioEvalArgs {
    #[arg(long = "f")]
    activation: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RatioCurveArgs {
    #[arg(long = "f")]
    activation: PathBuf,
    #[arg(long, default_value_t = 64)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = 40)]
    m: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Spacing of the candidate levels in [0, 2].
    #[arg(long, default_value_t = 0.025)]
    step: f64,
    #[arg(long, default_value_t = 5_000)]
    max_iters: usize,
    /// Starting function for restart 0.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Where to write the best activation function.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the full search report (stdout otherwise).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CurveArgs {
    instance: PathBuf,
    #[arg(long = "f")]
    activation: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a subcommand, with its exit code.
enum Failure {
    /// Bad input data (exit 1).
    Invalid(String),
    /// Bad flag combination or value (exit 2).
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_) | Error::ZeroTrials => Failure::Usage(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

struct Run {
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    fn new(command: &str, seed: Option<u64>) -> Self {
        Run {
            manifest: RunManifest::new(command, std::env::args().skip(1).collect(), seed),
            started: Instant::now(),
        }
    }

    fn input(&mut self, path: &Path) -> CliResult {
        Ok(self.manifest.add_input(path)?)
    }

    fn finished(&self) -> RunManifest {
        let mut m = self.manifest.clone();
        m.wall_time_seconds = self.started.elapsed().as_secs_f64();
        m
    }

    fn emit_json<T: Serialize>(&self, out: Option<&Path>, report: &T) -> CliResult {
        #[derive(Serialize)]
        struct Envelope<'a, T> {
            manifest: RunManifest,
            report: &'a T,
        }
        let text = to_json(&Envelope { manifest: self.finished(), report });
        write_or_print(out, &text)
    }

    /// CSV goes to `out` with a `<out>.manifest.json` sidecar, or to stdout
    /// with the manifest on stderr.
    fn emit_csv(&self, out: Option<&Path>, csv: &str) -> CliResult {
        let manifest = to_json(&self.finished());
        match out {
            Some(path) => {
                write_file(path, csv)?;
                write_file(&sidecar(path), &manifest)
            }
            None => {
                print!("{csv}");
                eprint!("{manifest}");
                Ok(())
            }
        }
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_file(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn write_or_print(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => write_file(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_graph(path: &Path) -> CliResult<(Instance, Graph)> {
    let inst = load_instance(path)?;
    let report = validate_instance(&inst);
    if !report.is_ok() {
        return Err(Failure::Invalid(format!("{}: {report}", path.display())));
    }
    let graph = Graph::build(&inst)?;
    Ok((inst, graph))
}

fn declared_x(inst: &Instance, graph: &Graph, path: &Path) -> CliResult<FractionalSolution> {
    let specs = inst
        .x
        .as_deref()
        .ok_or_else(|| Failure::Invalid(format!("{}: instance has no `x` section", path.display())))?;
    Ok(FractionalSolution::from_specs(graph, specs)?)
}

#[derive(Serialize)]
struct LpSolveReport {
    objective: f64,
    x: Vec<XSpec>,
    feasibility: FeasibilityReport,
}

fn lp_solve(args: &FileArgs) -> CliResult {
    let mut run = Run::new("lp solve", None);
    run.input(&args.instance)?;
    let (_, graph) = load_graph(&args.instance)?;
    let sol = solve_jl_lp(&graph, &build_jl_lp(&graph), LP_TOL)?;
    let report = LpSolveReport {
        objective: sol.objective,
        x: sol.x.to_specs(&graph),
        feasibility: check_feasibility(&graph, &sol.x, LP_TOL),
    };
    run.emit_json(args.out.as_deref(), &report)
}

fn lp_check(args: &FileArgs) -> CliResult<bool> {
    let mut run = Run::new("lp check", None);
    run.input(&args.instance)?;
    let (inst, graph) = load_graph(&args.instance)?;
    let x = declared_x(&inst, &graph, &args.instance)?;
    let report = check_feasibility(&graph, &x, LP_TOL);
    run.emit_json(args.out.as_deref(), &report)?;
    Ok(report.ok)
}

#[derive(Serialize)]
struct Competitor {
    j: String,
    c: f64,
}

#[derive(Serialize)]
struct OfflineSummary {
    j: String,
    y: f64,
    first_class: Vec<String>,
    second_class: Vec<String>,
    competitors: Vec<Competitor>,
    competitor_total: f64,
}

#[derive(Serialize)]
struct OnlineSummary {
    i: String,
    class: EdgeClass,
}

#[derive(Serialize)]
struct KernelReport {
    ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    violation: Option<String>,
    online: Vec<OnlineSummary>,
    offline: Vec<OfflineSummary>,
}

fn kernel_summary(k: &KernelInstance) -> KernelReport {
    let g = k.graph();
    let names = |ids: &[usize]| ids.iter().map(|&i| g.online_id(i).to_owned()).collect();
    KernelReport {
        ok: true,
        violation: None,
        online: (0..g.num_online())
            .map(|i| OnlineSummary { i: g.online_id(i).to_owned(), class: k.class(i).edge_class() })
            .collect(),
        offline: (0..g.num_offline())
            .map(|j| OfflineSummary {
                j: g.offline_id(j).to_owned(),
                y: k.y(j),
                first_class: names(k.first_class_neighbors(j)),
                second_class: names(k.second_class_neighbors(j)),
                competitors: k
                    .competitors_of(j)
                    .iter()
                    .map(|&(c, rate)| Competitor { j: g.offline_id(c).to_owned(), c: rate })
                    .collect(),
                competitor_total: k.competitors_of(j).iter().map(|c| c.1).sum(),
            })
            .collect(),
    }
}

fn kernel_check(args: &FileArgs) -> CliResult<bool> {
    let mut run = Run::new("kernel check", None);
    run.input(&args.instance)?;
    let (inst, graph) = load_graph(&args.instance)?;
    declared_x(&inst, &graph, &args.instance)?;
    let report = match KernelInstance::from_instance(&inst, TOL) {
        Ok(k) => kernel_summary(&k),
        Err(Error::NotKernel(v)) => KernelReport {
            ok: false,
            violation: Some(v.to_string()),
            online: Vec::new(),
            offline: Vec::new(),
        },
        Err(e) => return Err(e.into()),
    };
    run.emit_json(args.out.as_deref(), &report)?;
    Ok(report.ok)
}

#[derive(Serialize)]
struct SimulateReport {
    engine: EngineKind,
    activation: Option<PiecewiseConstantF>,
    ratio: RatioEstimate,
    estimate: EstimateReport,
}

fn build_engine(
    kind: EngineKind,
    inst: &Instance,
    graph: Graph,
    path: &Path,
    f: Option<PiecewiseConstantF>,
) -> CliResult<Engine> {
    if kind == EngineKind::Esm && f.is_none() {
        return Err(Failure::Usage("engine `esm` needs --f".into()));
    }
    match KernelInstance::from_instance(inst, TOL) {
        Ok(k) => Ok(Engine::from_kind(kind, k, f)?),
        Err(Error::NotKernel(_) | Error::InvalidSolution(_)) if kind == EngineKind::Sm => {
            // general instance: use the declared x, else solve the LP
            let x = match inst.x.as_deref() {
                Some(_) => declared_x(inst, &graph, path)?,
                None => solve_jl_lp(&graph, &build_jl_lp(&graph), LP_TOL)?.x,
            };
            Ok(Engine::suggested(graph, x))
        }
        Err(e) => Err(e.into()),
    }
}

fn dump_arrivals(engine: &Engine, sampler: &ArrivalSampler, trials: u64) -> CliResult<String> {
    let graph = engine.graph();
    let mut table = Table::new(&["trial", "t", "type", "u", "r1", "r2", "designation"]);
    for trial in 0..trials {
        let events = sampler.sample(trial);
        let labels: Vec<Option<Designation>> = match (engine.kernel(), engine.activation()) {
            (Some(k), Some(f)) => designations(k, f, &events)?.into_iter().map(Some).collect(),
            _ => vec![None; events.len()],
        };
        for (ev, d) in events.iter().zip(labels) {
            let second_class = engine
                .kernel()
                .is_some_and(|k| k.class(ev.online).edge_class() == EdgeClass::Second);
            let label = match d {
                Some(d) if second_class => d.display(graph, ev.online).to_string(),
                Some(_) => "first_class".to_owned(),
                None => String::new(),
            };
            table.row(&[
                Cell::Int(trial),
                Cell::Float(ev.time),
                Cell::Text(graph.online_id(ev.online)),
                Cell::Int(ev.first_choice() as u64),
                Cell::Float(ev.r1),
                Cell::Float(ev.r2),
                Cell::Text(&label),
            ]);
        }
    }
    Ok(table.finish())
}

fn curves_csv(report: &EstimateReport) -> String {
    let mut table = Table::new(&["t", "j", "p_hat", "se"]);
    for c in &report.curves {
        for (g, &t) in report.grid.iter().enumerate() {
            table.row(&[Cell::Float(t), Cell::Text(&c.j), Cell::Float(c.p_hat[g]), Cell::Float(c.se[g])]);
        }
    }
    table.finish()
}

fn edges_csv(report: &EstimateReport) -> String {
    let mut table = Table::new(&["i", "j", "x_ij", "p_hat", "se", "ratio"]);
    for e in &report.edges {
        table.row(&[
            Cell::Text(&e.i),
            Cell::Text(&e.j),
            Cell::Float(e.x),
            Cell::Float(e.p_hat),
            Cell::Float(e.se),
            e.ratio.map_or(Cell::Missing, Cell::Float),
        ]);
    }
    table.finish()
}

fn simulate(args: &SimulateArgs) -> CliResult {
    let seed = resolve_seed(args.seed)?;
    let kind: EngineKind = args.engine.parse()?;
    let mut run = Run::new("simulate", Some(seed));
    run.input(&args.instance)?;
    let f = match &args.activation {
        Some(p) if kind == EngineKind::Esm => {
            run.input(p)?;
            Some(load_activation(p)?)
        }
        _ => None,
    };
    let (inst, graph) = load_graph(&args.instance)?;
    let engine = build_engine(kind, &inst, graph, &args.instance, f)?;
    let model = if args.fixed_n { ArrivalModel::FixedN } else { ArrivalModel::Poisson };
    let mut config = EstimateConfig::new(args.trials, seed);
    config.grid = uniform_grid(args.grid);
    config.model = model;
    let estimate = estimate(&engine, &config)?;

    if let Some(path) = &args.dump_arrivals {
        let sampler = ArrivalSampler::new(engine.graph(), seed, model);
        let csv = dump_arrivals(&engine, &sampler, args.dump_trials.min(args.trials))?;
        run.emit_csv(Some(path), &csv)?;
    }
    if let Some(path) = &args.out_curves {
        run.emit_csv(Some(path), &curves_csv(&estimate))?;
    }
    if let Some(path) = &args.out_edges {
        run.emit_csv(Some(path), &edges_csv(&estimate))?;
    }
    let report = SimulateReport {
        engine: kind,
        activation: engine.activation().cloned(),
        ratio: ratio_report(&estimate),
        estimate,
    };
    run.emit_json(args.out.as_deref(), &report)
}

fn ratio_eval(args: &RatioEvalArgs) -> CliResult {
    let mut run = Run::new("ratio eval", None);
    run.input(&args.activation)?;
    let f = load_activation(&args.activation)?;
    let report: RatioReport = check_all(&f);
    run.emit_json(args.out.as_deref(), &report)
}

fn ratio_curve(args: &RatioCurveArgs) -> CliResult {
    let mut run = Run::new("ratio curve", None);
    run.input(&args.activation)?;
    let f = load_activation(&args.activation)?;
    if args.grid < 2 {
        return Err(Failure::Usage("--grid must be at least 2".into()));
    }
    let mut table = Table::new(&["y", "r1", "r2"]);
    for p in curve(&f, args.grid) {
        table.row(&[Cell::Float(p.y), Cell::Float(p.r1), Cell::Float(p.r2)]);
    }
    run.emit_csv(args.out.as_deref(), &table.finish())
}

fn search(args: &SearchArgs) -> CliResult<bool> {
    let seed = resolve_seed(args.seed)?;
    let mut run = Run::new("search", Some(seed));
    let mut config = SearchConfig::new(args.m, args.restarts, seed);
    if !(args.step > 0.0 && args.step <= 2.0) {
        return Err(Failure::Usage("--step must lie in (0, 2]".into()));
    }
    config.levels = grid_levels(args.step);
    config.max_iters = args.max_iters;
    if let Some(p) = &args.init {
        run.input(p)?;
        config.init = Some(load_activation(p)?.values().to_vec());
    }
    let outcome: SearchOutcome = optimize(&config)?;
    let found = outcome.best.is_some();
    if let (Some(path), Some((f, _))) = (&args.out, &outcome.best) {
        write_file(path, &to_json(f))?;
        write_file(&sidecar(path), &to_json(&run.finished()))?;
    }
    run.emit_json(args.report.as_deref(), &outcome)?;
    Ok(found)
}

fn curve_cmd(args: &CurveArgs) -> CliResult {
    let seed = resolve_seed(args.seed)?;
    let mut run = Run::new("curve", Some(seed));
    run.input(&args.instance)?;
    run.input(&args.activation)?;
    let f = load_activation(&args.activation)?;
    let inst = load_instance(&args.instance)?;
    let kernel = KernelInstance::from_instance(&inst, TOL)?;
    let engine = Engine::esm(kernel.clone(), f.clone());
    let mut config = EstimateConfig::new(args.trials, seed);
    config.grid = uniform_grid(args.grid);
    config.joint = Some(Vec::new());
    let est = estimate(&engine, &config)?;
    let improved_valid = f.total() >= 1.0 - TOTAL_TOL;
    let mut table = Table::new(&["t", "j", "y_j", "p_hat", "se", "lower_bound"]);
    for (j, c) in est.curves.iter().enumerate() {
        let y = kernel.y(j);
        for (g, &t) in est.grid.iter().enumerate() {
            let bound = if improved_valid || t <= f.t_star() {
                unmatched_lower_bound(&f, y, t)
            } else {
                unmatched_loose_bound(&f, y, t)
            };
            table.row(&[
                Cell::Float(t),
                Cell::Text(&c.j),
                Cell::Float(y),
                Cell::Float(c.p_hat[g]),
                Cell::Float(c.se[g]),
                Cell::Float(bound),
            ]);
        }
    }
    run.emit_csv(args.out.as_deref(), &table.finish())
}

fn dispatch(cli: &Cli) -> CliResult<bool> {
    match &cli.command {
        Command::Lp(LpCommand::Solve(a)) => lp_solve(a).map(|_| true),
        Command::Lp(LpCommand::Check(a)) => lp_check(a),
        Command::Kernel(KernelCommand::Check(a)) => kernel_check(a),
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Ratio(RatioCommand::Eval(a)) => ratio_eval(a).map(|_| true),
        Command::Ratio(RatioCommand::Curve(a)) => ratio_curve(a).map(|_| true),
        Command::Search(a) => search(a),
        Command::Curve(a) => curve_cmd(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
