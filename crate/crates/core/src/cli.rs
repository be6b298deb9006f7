//! The `paf` command-line pipeline.
//!
//! Subcommands:
//! - `run` regularizes a label field and writes the artifacts.
//! - `gen` writes a synthetic scenario.
//! - `dictgraph` exports the dictionary graph.
//! - `check` compares the fast gradient against the reference oracles.
//!
//! Every input is read and validated before any output is written, so input
//! errors leave no partial artifacts behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::dictionary::{build_adjacency, PatchDictionary, Similarity};
use crate::error::{Error, Result};
use crate::flow::{euclidean_gradient, integrate, objective, FlowConfig, FlowProblem, FlowResult};
use crate::grid::GridGraph;
use crate::io;
use crate::labeling::{
    extract_labeling, initialize, mean_patch_assignment, mean_patch_assignment_multiclass, sample_labeling,
    smooth_labels, Boundary, LabelField, UncertaintyField,
};
use crate::oracle;
use crate::scenario::{gen_scenario, ScenarioKind};

/// Exit status for a converged run or a successful command.
pub const EXIT_OK: u8 = 0;
/// Exit status for unreadable or invalid input.
pub const EXIT_INPUT: u8 = 1;
/// Exit status when the step budget ran out before convergence.
pub const EXIT_NOT_CONVERGED: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "paf",
    version,
    about = "Label regularization by patch assignment flows on grid graphs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Regularize a label field and write labels, uncertainty, trace and manifest.
    Run(RunArgs),
    /// Write a synthetic scenario: dictionary, clean labels and noisy labels.
    Gen(GenArgs),
    /// Export the weighted dictionary graph of a dictionary.
    Dictgraph(DictgraphArgs),
    /// Compare the gradient against the brute-force oracles on one problem.
    Check(CheckArgs),
}

/// Similarity selection as given on the command line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SimilarityArg {
    Overlap,
    Binary,
    Custom(PathBuf),
}

impl FromStr for SimilarityArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "overlap" => Ok(SimilarityArg::Overlap),
            "binary" => Ok(SimilarityArg::Binary),
            _ => match s.strip_prefix("custom:") {
                Some(p) if !p.is_empty() => Ok(SimilarityArg::Custom(PathBuf::from(p))),
                _ => Err(format!("expected overlap, binary or custom:<path>, got '{s}'")),
            },
        }
    }
}

impl std::fmt::Display for SimilarityArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SimilarityArg::Overlap => f.write_str("overlap"),
            SimilarityArg::Binary => f.write_str("binary"),
            SimilarityArg::Custom(p) => write!(f, "custom:{}", p.display()),
        }
    }
}

impl SimilarityArg {
    fn resolve(&self) -> Result<Similarity> {
        Ok(match self {
            SimilarityArg::Overlap => Similarity::Overlap,
            SimilarityArg::Binary => Similarity::Binary,
            SimilarityArg::Custom(path) => Similarity::Custom(io::read_omega(path)?),
        })
    }
}

fn parse_weights(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>().map_err(|_| format!("cannot parse class weight '{t}'"))
        })
        .collect()
}

/// Inputs shared by `run` and `check`.
#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Input label field (PGM, or CSV by extension).
    #[arg(long)]
    pub input: PathBuf,
    /// Patch dictionary file.
    #[arg(long)]
    pub dict: PathBuf,
    /// Template similarity: overlap, binary or custom:<omega file>.
    #[arg(long, default_value = "overlap")]
    pub similarity: SimilarityArg,
    /// Label smoothing toward the uniform distribution, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Per-class weights of the initial scores, comma separated; default all 1.
    #[arg(long, value_parser = parse_weights)]
    pub class_weights: Option<Vec<f64>>,
    /// Treatment of template cells outside the grid: replicate or clip.
    #[arg(long, default_value = "replicate")]
    pub boundary: Boundary,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Step size of the geometric Euler scheme.
    #[arg(long, default_value_t = 0.02)]
    pub step_size: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_steps: usize,
    /// Stop once the mean row maximum reaches this value.
    #[arg(long, default_value_t = 0.999)]
    pub tol: f64,
    /// Stop once no assignment entry changes by more than this in one step.
    #[arg(long, default_value_t = 1e-10)]
    pub stall_tol: f64,
    /// Sample the labeling from the final assignments with this seed instead
    /// of taking the most probable template.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output prefix; artifacts are written as `<prefix>.<name>`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Scenario name: lines5x5-like, checkerboard or two-class-blobs.
    pub name: String,
    /// Grid size, `N` or `HxW`.
    #[arg(long, default_value = "16")]
    pub size: String,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix for `<prefix>.dict.txt`, `<prefix>.clean.pgm` and `<prefix>.noisy.pgm`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DictgraphArgs {
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long, default_value = "overlap")]
    pub similarity: SimilarityArg,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Central difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub fd_step: f64,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit status.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("paf: {e}");
            EXIT_INPUT
        }
    }
}

pub fn execute(command: &Command) -> Result<u8> {
    match command {
        Command::Run(a) => run(a),
        Command::Gen(a) => gen(a),
        Command::Dictgraph(a) => dictgraph(a),
        Command::Check(a) => check(a),
    }
}

/// A fully validated problem ready to integrate.
struct Prepared {
    labels: LabelField,
    dict: PatchDictionary,
    graph: GridGraph,
    class_weights: Vec<f64>,
    problem: FlowProblem,
}

fn prepare(a: &ProblemArgs) -> Result<Prepared> {
    let dict = io::read_dictionary(&a.dict)?;
    let labels = io::read_labels(&a.input)?;
    labels
        .check_classes(dict.class_count())
        .map_err(|e| Error::Domain(format!("{}: {e}", a.input.display())))?;
    let class_weights = a.class_weights.clone().unwrap_or_else(|| vec![1.0; dict.class_count()]);
    let similarity = a.similarity.resolve()?;
    let adjacency = build_adjacency(&dict, &similarity)?;
    let graph = GridGraph::canonical(labels.height(), labels.width())?;
    let smoothed = smooth_labels(&labels, dict.class_count(), a.lambda)?;
    let initial = initialize(&smoothed, &dict, &graph, &class_weights, a.boundary)?;
    let problem = FlowProblem::new(graph.clone(), adjacency, initial)?;
    Ok(Prepared {
        labels,
        dict,
        graph,
        class_weights,
        problem,
    })
}

fn uncertainty(p: &Prepared, result: &FlowResult) -> Result<UncertaintyField> {
    if p.dict.class_count() == 2 {
        return mean_patch_assignment(&result.final_state, &p.dict, &p.graph);
    }
    // Without a foreground class, report the share of the winning class.
    let multi = mean_patch_assignment_multiclass(&result.final_state, &p.dict, &p.graph)?;
    let best = |row: ndarray::ArrayView1<'_, f64>| row.iter().copied().fold(0.0, f64::max);
    Ok(UncertaintyField {
        height: multi.height,
        width: multi.width,
        raw: multi.raw.rows().into_iter().map(best).collect(),
        normalized: multi.normalized.rows().into_iter().map(best).collect(),
    })
}

fn list(values: &[f64]) -> String {
    values.iter().map(|&x| io::fmt_g17(x)).collect::<Vec<_>>().join(",")
}

fn manifest(a: &RunArgs, p: &Prepared, config: &FlowConfig, result: &FlowResult) -> Result<String> {
    let (entropy, max_entry) = result.convergence_stats;
    let final_objective = objective(&p.problem, result.final_state.view())?;
    let fields: Vec<(&str, String)> = vec![
        ("input", a.problem.input.display().to_string()),
        ("dictionary", a.problem.dict.display().to_string()),
        ("grid", format!("{}x{}", p.labels.height(), p.labels.width())),
        ("templates", p.dict.len().to_string()),
        ("patch_side", p.dict.side().to_string()),
        ("classes", p.dict.class_count().to_string()),
        ("similarity", a.problem.similarity.to_string()),
        ("lambda", io::fmt_g17(a.problem.lambda)),
        ("class_weights", list(&p.class_weights)),
        ("boundary", a.problem.boundary.name().into()),
        ("initialization", "softmax of class-weighted template agreement with smoothed labels".into()),
        ("step_size", io::fmt_g17(config.step_size)),
        ("max_steps", config.max_steps.to_string()),
        ("convergence_tol", io::fmt_g17(config.convergence_tol)),
        ("stall_tol", io::fmt_g17(config.stall_tol)),
        ("trace_every", config.record_every.to_string()),
        (
            "stopping_rule",
            "integral when mean row maximum >= convergence_tol; stalled when max entry change < stall_tol; else max_steps".into(),
        ),
        (
            "labeling",
            match a.seed {
                Some(s) => format!("sampled template center, seed {s}"),
                None => "center of most probable template".into(),
            },
        ),
        ("tie_break", "lowest template index".into()),
        (
            "uncertainty_raw",
            if p.dict.class_count() == 2 {
                "foreground mass over covering windows divided by template count".into()
            } else {
                "largest class mass over covering windows divided by template count".into()
            },
        ),
        (
            "uncertainty_normalized",
            "same mass divided by the number of covering windows, PGM scaled to 0..255".into(),
        ),
        ("steps_taken", result.steps_taken.to_string()),
        ("final_time", io::fmt_g17(result.final_time(config))),
        ("stop_reason", result.stop_reason.as_str().into()),
        ("converged", result.converged.to_string()),
        ("final_objective", io::fmt_g17(final_objective)),
        ("mean_entropy", io::fmt_g17(entropy)),
        ("mean_max_entry", io::fmt_g17(max_entry)),
    ];
    let mut s = String::from("paf run manifest\n");
    for (k, v) in fields {
        let _ = writeln!(s, "{k} = {v}");
    }
    Ok(s)
}

fn artifact(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

fn run(a: &RunArgs) -> Result<u8> {
    let config = FlowConfig {
        step_size: a.step_size,
        max_steps: a.max_steps,
        convergence_tol: a.tol,
        stall_tol: a.stall_tol,
        ..FlowConfig::default()
    };
    config.validate()?;
    let p = prepare(&a.problem)?;
    let result = integrate(&p.problem, &config)?;
    let labels = match a.seed {
        Some(seed) => sample_labeling(&result.final_state, &p.dict, &p.graph, seed)?,
        None => extract_labeling(&result.final_state, &p.dict, &p.graph)?,
    };
    let u = uncertainty(&p, &result)?;
    let outputs = [
        ("labels.pgm", io::format_labels_pgm(&labels, p.dict.class_count())),
        ("labels.csv", io::format_labels_csv(&labels)),
        ("uncertainty.raw.csv", io::format_real_grid_csv(&u.raw, u.width)),
        ("uncertainty.pgm", io::format_uncertainty_pgm(&u)),
        ("trace.csv", io::format_trace_csv(&result.trace)),
        ("dictgraph.txt", io::format_dictionary_graph(p.problem.adjacency())),
        ("manifest.txt", manifest(a, &p, &config, &result)?),
    ];
    for (suffix, contents) in &outputs {
        io::write_text(&artifact(&a.out, suffix), contents)?;
    }
    eprintln!(
        "paf: {} after {} steps, mean max entry {}",
        result.stop_reason.as_str(),
        result.steps_taken,
        io::fmt_g17(result.convergence_stats.1)
    );
    Ok(if result.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Domain(format!("size must be N or HxW, got '{s}'"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((num(h)?, num(w)?)),
        None => num(s).map(|n| (n, n)),
    }
}

fn gen(a: &GenArgs) -> Result<u8> {
    let kind: ScenarioKind = a.name.parse()?;
    let (height, width) = parse_size(&a.size)?;
    let s = gen_scenario(kind, height, width, a.noise, a.seed)?;
    let c = s.dictionary.class_count();
    let outputs = [
        ("dict.txt", io::format_dictionary(&s.dictionary)),
        ("clean.pgm", io::format_labels_pgm(&s.clean, c)),
        ("noisy.pgm", io::format_labels_pgm(&s.noisy, c)),
    ];
    for (suffix, contents) in &outputs {
        io::write_text(&artifact(&a.out, suffix), contents)?;
    }
    Ok(EXIT_OK)
}

fn dictgraph(a: &DictgraphArgs) -> Result<u8> {
    let dict = io::read_dictionary(&a.dict)?;
    let adjacency = build_adjacency(&dict, &a.similarity.resolve()?)?;
    let text = io::format_dictionary_graph(&adjacency);
    match &a.out {
        Some(path) => io::write_text(path, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

fn max_abs_diff(a: &ndarray::Array2<f64>, b: &ndarray::Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn check(a: &CheckArgs) -> Result<u8> {
    let p = prepare(&a.problem)?;
    let x = p.problem.initial().view();
    let fast = euclidean_gradient(&p.problem, x)?;
    let scale = 1.0 + fast.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut ok = true;
    let mut report = |name: &str, err: f64, tol: f64| {
        let pass = err <= tol;
        ok &= pass;
        println!(
            "{} {name}: max error {} (tolerance {})",
            if pass { "PASS" } else { "FAIL" },
            io::fmt_g17(err),
            io::fmt_g17(tol)
        );
    };

    let j = objective(&p.problem, x)?;
    let j_ref = oracle::objective_edge_sum(&p.problem, x)?;
    report("objective vs edge sum", (j - j_ref).abs(), 1e-12 * (1.0 + j.abs()));

    match oracle::kronecker_gradient(&p.problem, x) {
        Ok(dense) => report("gradient vs Kronecker form", max_abs_diff(&fast, &dense), 1e-12 * scale),
        Err(Error::OracleTooLarge { size, limit }) => {
            println!("SKIP gradient vs Kronecker form: n*|D| = {size} exceeds {limit}");
        }
        Err(e) => return Err(e),
    }

    let fd = oracle::finite_difference_gradient(&p.problem, x, a.fd_step)?;
    report(
        "gradient vs central differences",
        max_abs_diff(&fast, &fd),
        1e-5 * scale,
    );

    Ok(if ok { EXIT_OK } else { EXIT_INPUT })
}
