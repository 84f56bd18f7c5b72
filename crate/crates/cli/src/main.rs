//! Command-line front end for current-flow group closeness maximization.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cfcm::exact::{self, DENSE_LIMIT};
use cfcm::forest::{uniformity_test, SourceOrder};
use cfcm::graph::{largest_connected_component, load_edge_list, LoadOptions};
use cfcm::report::{write_csv, ResultRecord};
use cfcm::{maximize, Algorithm, CfcmError, Graph, NodeSet, RunConfig, SchurRoots};

#[derive(Parser)]
#[command(name = "cfcm", version, about = "Current-flow group closeness maximization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select a k-node group with one of the maximizers or baselines.
    Maximize(MaximizeArgs),
    /// CFCC of a given group.
    Evaluate(EvaluateArgs),
    /// Best k-node group by exhaustive enumeration (small graphs only).
    Optimum(OptimumArgs),
    /// Chi-square test of the forest sampler against brute-force enumeration.
    SamplerCheck(SamplerCheckArgs),
    /// Sweep accuracy and group size, one CSV row per (algo, eps, k).
    Bench(BenchArgs),
}

#[derive(Args)]
struct GraphArg {
    /// Edge list: two integer labels per line, `#` or `%` comments.
    #[arg(long)]
    graph: PathBuf,
}

#[derive(Args)]
struct SamplingArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Extra Schur roots: `auto` or a count.
    #[arg(long, default_value = "auto")]
    schur_roots: String,
    /// Per-round cap on sampled forests.
    #[arg(long)]
    rmax: Option<u64>,
    /// Cap on the sketch width.
    #[arg(long)]
    sketch_dim: Option<usize>,
    /// How reported CFCC values are computed.
    #[arg(long, value_enum, default_value_t = Evaluation::Auto)]
    eval: Evaluation,
}

#[derive(Args)]
struct MaximizeArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long, default_value = "schur")]
    algo: String,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output encoding; defaults to the extension of `--out`, else JSON.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Comma-separated original labels.
    #[arg(long)]
    set: String,
    #[arg(long, value_enum, default_value_t = Method::Dense)]
    method: Method,
    /// Hutchinson probes for `--method cg`.
    #[arg(long, default_value_t = 512)]
    probes: usize,
    /// Conjugate-gradient residual tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OptimumArgs {
    #[command(flatten)]
    graph: GraphArg,
    #[arg(long)]
    k: usize,
}

#[derive(Args)]
struct SamplerCheckArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Comma-separated original labels of the roots.
    #[arg(long)]
    roots: String,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Visit walk sources in descending id order.
    #[arg(long)]
    descending: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    graph: GraphArg,
    /// Comma-separated algorithms.
    #[arg(long, default_value = "forest,schur")]
    algos: String,
    /// Comma-separated accuracy values.
    #[arg(long, default_value = "0.3,0.2,0.15")]
    eps: String,
    /// Comma-separated group sizes.
    #[arg(long, default_value = "20")]
    k: String,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Dense,
    Cg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Evaluation {
    /// Dense up to the dense size limit, conjugate gradients beyond.
    Auto,
    Dense,
    Cg,
    /// Skip evaluation; CFCC fields are left at zero.
    None,
}

enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl From<CfcmError> for Failure {
    fn from(e: CfcmError) -> Self {
        let msg = e.to_string();
        match e {
            _ if e.is_numerical() => Failure::Numerical(msg),
            CfcmError::InvalidArgument(_) | CfcmError::NodeOutOfRange { .. } => Failure::Usage(msg),
            _ => Failure::Data(msg),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn load(path: &Path) -> CliResult<Graph> {
    let g = load_edge_list(path, LoadOptions::default())?;
    let lcc = largest_connected_component(&g);
    if lcc.n() < g.n() {
        eprintln!("using the largest connected component: {} of {} nodes", lcc.n(), g.n());
    }
    Ok(lcc)
}

fn graph_name(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "graph".into(), |s| s.to_string_lossy().into_owned())
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| usage(format!("bad {what} {s:?}"))))
        .collect()
}

fn labels_to_set(graph: &Graph, text: &str) -> CliResult<NodeSet> {
    let labels: Vec<u64> = parse_list(text, "node label")?;
    let ids = labels
        .iter()
        .map(|&l| {
            graph
                .node_of(l)
                .ok_or_else(|| usage(format!("label {l} is not in the graph")))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if ids.is_empty() {
        return Err(usage("empty node set"));
    }
    Ok(NodeSet::new(ids, graph.n())?)
}

fn run_config(algo: Algorithm, k: usize, eps: f64, s: &SamplingArgs) -> CliResult<RunConfig> {
    let mut c = RunConfig::new(algo, k, eps, s.seed);
    c.workers = s.threads;
    c.schur_roots = match s.schur_roots.as_str() {
        "auto" => SchurRoots::Auto,
        n => SchurRoots::Count(
            n.parse()
                .map_err(|_| usage(format!("--schur-roots expects auto or a count, got {n:?}")))?,
        ),
    };
    if let Some(r) = s.rmax {
        c.r_max = r;
    }
    if let Some(w) = s.sketch_dim {
        c.max_sketch_dim = w;
    }
    Ok(c)
}

const CG_PROBES: usize = 64;
const CG_TOL: f64 = 1e-6;

/// CFCC of each prefix of `nodes` and the name of the method used.
fn prefix_cfcc(graph: &Graph, nodes: &[usize], how: Evaluation, seed: u64) -> CliResult<(Vec<f64>, &'static str)> {
    let dense = match how {
        Evaluation::None => return Ok((vec![0.0; nodes.len()], "none")),
        Evaluation::Auto => graph.n() <= DENSE_LIMIT,
        Evaluation::Dense => true,
        Evaluation::Cg => false,
    };
    let mut out = Vec::with_capacity(nodes.len());
    for i in 1..=nodes.len() {
        let set = NodeSet::new(nodes[..i].iter().copied(), graph.n())?;
        out.push(if dense {
            exact::group_cfcc(graph, &set)?.1
        } else {
            exact::cfcc_iterative(graph, &set, CG_PROBES, CG_TOL, seed)?.cfcc
        });
    }
    Ok((out, if dense { "dense" } else { "cg" }))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run_maximize(a: MaximizeArgs) -> CliResult<()> {
    let graph = load(&a.graph.graph)?;
    let algo: Algorithm = a.algo.parse()?;
    let config = run_config(algo, a.k, a.eps, &a.sampling)?;
    let trace = maximize(&graph, &config)?;
    let (prefix, method) = prefix_cfcc(&graph, &trace.nodes(), a.sampling.eval, a.sampling.seed)?;
    let record = ResultRecord::from_trace(
        algo.name(),
        &graph_name(&a.graph.graph),
        &graph,
        a.eps,
        a.sampling.seed,
        &trace,
        prefix,
        method,
    )?;
    let format = a
        .format
        .unwrap_or_else(|| match a.out.as_deref().and_then(|p| p.extension()) {
            Some(ext) if ext == "csv" => Format::Csv,
            _ => Format::Json,
        });
    let mut out = output(a.out.as_deref())?;
    match format {
        Format::Json => writeln!(out, "{}", record.to_json()?)?,
        Format::Csv => write_csv(std::slice::from_ref(&record), &mut out)?,
    }
    out.flush()?;
    eprintln!(
        "{} chose {:?}, cfcc {:.6} ({method}), {:.2}s",
        algo, record.chosen, record.cfcc, record.seconds
    );
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> CliResult<()> {
    let graph = load(&a.graph.graph)?;
    let set = labels_to_set(&graph, &a.set)?;
    match a.method {
        Method::Dense => {
            let (trace, cfcc) = exact::group_cfcc(&graph, &set)?;
            println!("cfcc {cfcc}");
            println!("trace {trace}");
        }
        Method::Cg => {
            let it = exact::cfcc_iterative(&graph, &set, a.probes, a.tol, a.seed)?;
            println!("cfcc {}", it.cfcc);
            println!("cfcc_std_error {}", it.cfcc_std_error);
            println!("trace {}", it.trace);
            println!("trace_std_error {}", it.trace_std_error);
        }
    }
    Ok(())
}

fn run_optimum(a: OptimumArgs) -> CliResult<()> {
    let graph = load(&a.graph.graph)?;
    let (set, cfcc) = exact::exhaustive_optimum(&graph, a.k)?;
    let labels: Vec<String> = set.iter().map(|u| graph.label(u).to_string()).collect();
    println!("set {}", labels.join(","));
    println!("cfcc {cfcc}");
    Ok(())
}

fn run_sampler_check(a: SamplerCheckArgs) -> CliResult<()> {
    let graph = load(&a.graph.graph)?;
    let roots = labels_to_set(&graph, &a.roots)?;
    let order = if a.descending {
        SourceOrder::Descending
    } else {
        SourceOrder::Ascending
    };
    let t = uniformity_test(&graph, &roots, a.samples, a.seed, order)?;
    println!("forests {}", t.forests);
    println!("samples {}", t.samples);
    println!("chi_square {}", t.chi_square);
    println!("dof {}", t.dof);
    println!("p_value {}", t.p_value);
    if t.p_value <= 0.001 {
        return Err(Failure::Numerical(format!("sampler rejected at p={}", t.p_value)));
    }
    Ok(())
}

fn run_bench(a: BenchArgs) -> CliResult<()> {
    let graph = load(&a.graph.graph)?;
    let name = graph_name(&a.graph.graph);
    let algos: Vec<Algorithm> = a
        .algos
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, CfcmError>>()?;
    let eps: Vec<f64> = parse_list(&a.eps, "eps")?;
    let ks: Vec<usize> = parse_list(&a.k, "k")?;
    let mut w = csv_writer(a.out.as_deref())?;
    w.write_record([
        "algo", "graph", "n", "m", "k", "eps", "seed", "samples", "cfcc", "seconds",
    ])
    .map_err(|e| Failure::Data(e.to_string()))?;
    for &algo in &algos {
        for &e in &eps {
            for &k in &ks {
                let config = run_config(algo, k, e, &a.sampling)?;
                let start = Instant::now();
                let trace = maximize(&graph, &config)?;
                let seconds = start.elapsed().as_secs_f64();
                let (prefix, _) = prefix_cfcc(&graph, &trace.nodes(), a.sampling.eval, a.sampling.seed)?;
                let row = [
                    algo.name().to_string(),
                    name.clone(),
                    graph.n().to_string(),
                    graph.m().to_string(),
                    k.to_string(),
                    e.to_string(),
                    a.sampling.seed.to_string(),
                    trace.total_samples().to_string(),
                    prefix.last().copied().unwrap_or(0.0).to_string(),
                    seconds.to_string(),
                ];
                w.write_record(&row).map_err(|e| Failure::Data(e.to_string()))?;
                w.flush()?;
            }
        }
    }
    Ok(())
}

fn csv_writer(path: Option<&Path>) -> CliResult<csv::Writer<Box<dyn Write>>> {
    Ok(csv::Writer::from_writer(output(path)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Maximize(a) => run_maximize(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Optimum(a) => run_optimum(a),
        Command::SamplerCheck(a) => run_sampler_check(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, kind, msg) = match f {
                Failure::Usage(m) => (2, "usage error", m),
                Failure::Data(m) => (3, "data error", m),
                Failure::Numerical(m) => (4, "numerical failure", m),
            };
            eprintln!("cfcm: {kind}: {msg}");
            ExitCode::from(code)
        }
    }
}
