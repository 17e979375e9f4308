//! Command-line workbench behind the `grover-tree` binary.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::dynamics::radial::{radial_cesaro, radial_limit, RadialDistribution};
use crate::dynamics::{
    cesaro_average, derived_localization_b, evolve_each, limit_distribution, make_initial, measure,
    memory_estimate, padded_depth, printed_localization_b, root_amplitudes, support_depth, EvolveConfig,
    InitialState, Semantics, LIMIT_HYPOTHESIS,
};
use crate::error::{Error, Result};
use crate::flows::{build_all_flows, build_flow, FlowIndex, Sign};
use crate::io::{read_arc_state_file, read_tree_spec, write_distribution_csv, write_flow_csv, TrajectoryWriter};
use crate::marked::MarkedGraph;
use crate::spectral::{birth_density, full_spectrum_with, marked_spectrum, SpectrumOptions, SCHEMA_VERSION};
use crate::tree::{build_tree, TreeSpec, TruncatedTree, VertexPath, DEFAULT_VERTEX_CAP};
use crate::verify::run_suite;

#[derive(Parser, Debug)]
#[command(name = "grover-tree", version, about = "Grover walks on infinite trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Classified eigendecomposition of the cut-off walk, as JSON.
    Spectrum(SpectrumArgs),
    /// Flow eigenfunctions: one flow as CSV, or a listing of all flows.
    Flows(FlowsArgs),
    /// Birth-eigenspace density by depth, as CSV.
    Density(DensityArgs),
    /// Finding probabilities over time, as long-format CSV.
    Evolve(EvolveArgs),
    /// Cesàro time average of the finding probabilities.
    Timeavg(TimeavgArgs),
    /// Limit distribution from the eigenprojections.
    Limit(LimitArgs),
    /// Run the invariant suite and print a pass/fail table.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct TreeArg {
    /// Tree spec file (JSON).
    #[arg(long)]
    pub tree: PathBuf,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    /// Tree spec file (JSON).
    #[arg(long, required_unless_present = "marked")]
    pub tree: Option<PathBuf>,
    /// Marked graph file (JSON) instead of a tree.
    #[arg(long, conflicts_with = "tree")]
    pub marked: Option<PathBuf>,
    /// Cutoff depth of the walk.
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Largest eigen-residual accepted before exiting with code 2.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FlowsArgs {
    #[command(flatten)]
    pub tree: TreeArg,
    #[arg(long)]
    pub depth: usize,
    /// Vertex path such as `0.2.1`, or `root`.
    #[arg(long, requires_all = ["j", "sign"])]
    pub vertex: Option<VertexPath>,
    /// Root-of-unity index, `1 ≤ j < m(u)`.
    #[arg(long)]
    pub j: Option<u32>,
    /// `+` or `-`.
    #[arg(long, allow_hyphen_values = true)]
    pub sign: Option<Sign>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DensityArgs {
    #[command(flatten)]
    pub tree: TreeArg,
    #[arg(long)]
    pub max_depth: usize,
    /// CSV, or JSON when the path ends in `.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    /// Radial engine for A/B on spherically symmetric trees, full otherwise.
    Auto,
    Full,
    Radial,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub tree: TreeArg,
    /// `A`, `B` or `custom:PATH` (CSV with `arc_id,re,im`).
    #[arg(long, default_value = "B")]
    pub initial: String,
    /// Truncation depth; padded automatically for exact runs when omitted.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub steps: usize,
    /// Allow amplitude to reflect at the cutoff instead of requiring exactness.
    #[arg(long)]
    pub reflecting: bool,
}

#[derive(Args, Debug)]
pub struct TimeavgArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = Engine::Auto)]
    pub engine: Engine,
}

#[derive(Args, Debug)]
pub struct LimitArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value_t = Engine::Auto)]
    pub engine: Engine,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub tree: TreeArg,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn open_out(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Error::Input(format!("cannot write {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    let mut w = open_out(out)?;
    w.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn parse_initial(text: &str) -> Result<InitialSpec> {
    match text {
        "A" | "a" => Ok(InitialSpec::Kind(InitialState::A)),
        "B" | "b" => Ok(InitialSpec::Kind(InitialState::B)),
        _ => match text.strip_prefix("custom:") {
            Some(p) if !p.is_empty() => Ok(InitialSpec::File(PathBuf::from(p))),
            _ => Err(Error::Input(format!(
                "--initial must be A, B or custom:PATH, got {text:?}"
            ))),
        },
    }
}

enum InitialSpec {
    Kind(InitialState),
    File(PathBuf),
}

fn load_spec(arg: &TreeArg) -> Result<TreeSpec> {
    read_tree_spec(&arg.tree)
}

/// Builds the truncation after reporting its size; custom states need an
/// explicit depth because their support is unknown until read.
fn prepare(run: &RunArgs, spec: &TreeSpec, steps: usize, exact: bool) -> Result<(TruncatedTree, Vec<num_complex::Complex64>)> {
    let initial = parse_initial(&run.initial)?;
    let depth = match (run.depth, &initial) {
        (Some(d), _) => d,
        (None, InitialSpec::Kind(_)) if exact => padded_depth(1, steps),
        (None, InitialSpec::Kind(_)) => steps.max(1),
        (None, InitialSpec::File(_)) => {
            return Err(Error::Precondition("custom initial states need --depth".into()))
        }
    };
    let sizes = spec.level_sizes(depth + 1)?;
    let vertices: u128 = sizes.iter().sum();
    eprintln!(
        "truncation depth {depth}: {vertices} vertices, about {:.1} MiB",
        memory_estimate(vertices) as f64 / (1u128 << 20) as f64
    );
    if vertices > DEFAULT_VERTEX_CAP as u128 {
        return Err(Error::Size {
            what: "vertices",
            needed: vertices,
            cap: DEFAULT_VERTEX_CAP,
        });
    }
    let tree = build_tree(spec, depth)?;
    let psi = match initial {
        InitialSpec::Kind(k) => make_initial(&tree, &k, true)?,
        InitialSpec::File(p) => make_initial(&tree, &InitialState::Custom(read_arc_state_file(&p, tree.num_arcs())?), true)?,
    };
    Ok((tree, psi.0))
}

fn meta_path(out: Option<&Path>) -> Option<PathBuf> {
    out.map(|p| {
        let mut s = p.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    })
}

fn write_meta(out: Option<&Path>, meta: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)?;
    match meta_path(out) {
        Some(p) => write_text(Some(&p), &text),
        None => {
            eprintln!("{text}");
            Ok(())
        }
    }
}

fn radial_rows(dist: &RadialDistribution) -> String {
    let mut s = String::from("vertex_path,depth,value\n");
    s.push_str(&format!("root,0,{}\n", dist.root));
    for (k, row) in dist.levels.iter().enumerate() {
        for (i, x) in row.iter().enumerate() {
            let mut path = vec![k.to_string()];
            path.extend(std::iter::repeat_n("0".to_string(), i));
            s.push_str(&format!("{},{},{}\n", path.join("."), i + 1, x));
        }
    }
    s
}

fn use_radial(engine: Engine, spec: &TreeSpec, initial: &str) -> Result<bool> {
    let standard = matches!(parse_initial(initial)?, InitialSpec::Kind(_));
    match engine {
        Engine::Full => Ok(false),
        Engine::Auto => Ok(standard && spec.is_spherically_symmetric()),
        Engine::Radial if standard && spec.is_spherically_symmetric() => Ok(true),
        Engine::Radial => Err(Error::Precondition(
            "radial engine needs initial A or B on a spherically symmetric tree".into(),
        )),
    }
}

fn spectrum(a: &SpectrumArgs) -> Result<()> {
    if let Some(p) = &a.marked {
        let text = std::fs::read_to_string(p)
            .map_err(|e| Error::Input(format!("cannot read marked graph {}: {e}", p.display())))?;
        let s = marked_spectrum(&MarkedGraph::from_json(&text)?)?;
        let worst = s.lifts.iter().map(|l| l.residual).fold(0.0, f64::max);
        if worst > a.tol {
            return Err(Error::Consistency(format!("lift residual {worst:e} exceeds {:e}", a.tol)));
        }
        let v = json!({
            "schema_version": SCHEMA_VERSION,
            "transition_eigenvalues": s.transition_eigenvalues,
            "spectral_radius": s.spectral_radius,
            "lifts": s.lifts.iter().map(|l| json!({
                "lambda": l.lambda, "re": l.re, "im": l.im,
                "norm_defect": l.norm_defect, "residual": l.residual,
            })).collect::<Vec<_>>(),
        });
        return write_text(a.out.as_deref(), &serde_json::to_string_pretty(&v)?);
    }
    let spec = read_tree_spec(a.tree.as_ref().expect("clap requires --tree"))?;
    let report = full_spectrum_with(&spec, a.depth, SpectrumOptions { tol: a.tol, ..Default::default() })?;
    let c = &report.counts;
    eprintln!(
        "dim {}: {} inherited, {} birth_plus, {} birth_minus",
        report.dim, c.inherited, c.birth_plus, c.birth_minus
    );
    write_text(a.out.as_deref(), &report.to_json())
}

fn flows(a: &FlowsArgs) -> Result<()> {
    let spec = load_spec(&a.tree)?;
    let tree = build_tree(&spec, a.depth)?;
    let mut w = open_out(a.out.as_deref())?;
    match (&a.vertex, a.j, a.sign) {
        (Some(u), Some(j), Some(sign)) => {
            let f = build_flow(&tree, &FlowIndex::new(u.clone(), j, sign)?)?;
            eprintln!(
                "{}: truncated norm² {}, tail-inclusive norm² {}",
                f.index,
                f.truncated_norm_sq(),
                f.norm_sq()
            );
            write_flow_csv(&mut w, &tree, &f)?;
        }
        _ => {
            writeln!(w, "flow,vertex_path,j,sign,truncated_norm_sq,norm_sq,summable")?;
            for f in build_all_flows(&tree, a.depth)? {
                let i = &f.index;
                let path = if i.u.is_root() { "root".to_string() } else { i.u.to_string() };
                writeln!(
                    w,
                    "\"{i}\",{path},{},{},{},{},{}",
                    i.j,
                    i.sign,
                    f.truncated_norm_sq(),
                    f.norm_sq(),
                    f.is_square_summable()
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn density(a: &DensityArgs) -> Result<()> {
    let spec = load_spec(&a.tree)?;
    let series = birth_density(&spec, a.max_depth)?;
    eprintln!("limit: {}", serde_json::to_string(&series.limit)?);
    let json_out = a.out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "json"));
    if json_out {
        write_text(a.out.as_deref(), &serde_json::to_string_pretty(&series)?)
    } else {
        write_text(a.out.as_deref(), &series.to_csv())
    }
}

fn evolve_cmd(a: &EvolveArgs) -> Result<()> {
    let spec = load_spec(&a.run.tree)?;
    let (tree, psi) = prepare(&a.run, &spec, a.steps, !a.reflecting)?;
    let cfg = EvolveConfig {
        steps: a.steps,
        cutoff: None,
        exact: !a.reflecting,
    };
    let mut writer = TrajectoryWriter::new(open_out(a.run.out.as_deref())?)?;
    let mut failure = None;
    let (_, semantics) = evolve_each(&tree, &psi, &cfg, |t, state| {
        if failure.is_none() {
            if let Err(e) = writer.write_step(&tree, t, &measure(&tree, state)) {
                failure = Some(e);
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    writer.finish()?;
    write_meta(
        a.run.out.as_deref(),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "trajectory",
            "initial": a.run.initial,
            "steps": a.steps,
            "depth": tree.depth(),
            "support_depth": support_depth(&tree, &psi),
            "semantics": semantics,
        }),
    )
}

fn timeavg(a: &TimeavgArgs) -> Result<()> {
    let spec = load_spec(&a.run.tree)?;
    if use_radial(a.engine, &spec, &a.run.initial)? {
        let InitialSpec::Kind(kind) = parse_initial(&a.run.initial)? else {
            unreachable!("radial engine only takes standard states")
        };
        let dist = radial_cesaro(&spec, &kind, a.steps)?;
        write_text(a.run.out.as_deref(), &radial_rows(&dist))?;
        return write_meta(
            a.run.out.as_deref(),
            &json!({
                "schema_version": SCHEMA_VERSION,
                "kind": "cesaro_average",
                "engine": "radial",
                "lumped": "each row holds the value shared by every vertex of its root branch at that depth",
                "initial": a.run.initial,
                "steps": a.steps,
                "semantics": Semantics::Exact,
            }),
        );
    }
    let (tree, psi) = prepare(&a.run, &spec, a.steps, true)?;
    let avg = cesaro_average(&tree, &psi, a.steps, None)?;
    write_distribution_csv(open_out(a.run.out.as_deref())?, &tree, &avg)?;
    write_meta(
        a.run.out.as_deref(),
        &json!({
            "schema_version": SCHEMA_VERSION,
            "kind": "cesaro_average",
            "engine": "full",
            "initial": a.run.initial,
            "steps": a.steps,
            "depth": tree.depth(),
            "semantics": Semantics::Exact,
        }),
    )
}

fn limit(a: &LimitArgs) -> Result<()> {
    let spec = load_spec(&a.run.tree)?;
    let depth = a.run.depth.unwrap_or(6);
    let regular = spec.depth_degrees().filter(|d| d.len() == 1).map(|d| d[0]);
    let (masses, coefficients);
    if use_radial(a.engine, &spec, &a.run.initial)? {
        let InitialSpec::Kind(kind) = parse_initial(&a.run.initial)? else {
            unreachable!("radial engine only takes standard states")
        };
        let d0 = spec.degree_at(&VertexPath::root());
        let l = radial_limit(&spec, &root_amplitudes(&kind, d0, true)?, depth)?;
        let mut text = radial_rows(&l.per_eigen);
        let comb = radial_rows(&l.combined);
        text = text
            .lines()
            .zip(comb.lines())
            .map(|(x, y)| {
                let tail = y.rsplit(',').next().unwrap_or("");
                if x.starts_with("vertex_path") {
                    format!("{x},combined\n")
                } else {
                    format!("{x},{tail}\n")
                }
            })
            .collect();
        write_text(a.run.out.as_deref(), &text)?;
        masses = (l.mass_plus, l.mass_minus);
        coefficients = l.coefficients;
    } else {
        let run = RunArgs {
            tree: TreeArg { tree: a.run.tree.tree.clone() },
            initial: a.run.initial.clone(),
            depth: Some(depth),
            out: a.run.out.clone(),
        };
        let (tree, psi) = prepare(&run, &spec, 0, false)?;
        let l = limit_distribution(&tree, &psi)?;
        let mut w = open_out(a.run.out.as_deref())?;
        writeln!(w, "vertex_path,depth,value,combined")?;
        for v in 0..tree.num_vertices() {
            let p = if v == 0 { "root".to_string() } else { tree.path_of(v).to_string() };
            writeln!(w, "{p},{},{},{}", tree.vertex(v).depth, l.per_eigen[v], l.combined[v])?;
        }
        w.flush()?;
        masses = (l.mass_plus, l.mass_minus);
        coefficients = l.coefficients;
    }
    let mut meta = json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "limit_distribution",
        "initial": a.run.initial,
        "depth": depth,
        "mass_plus": masses.0,
        "mass_minus": masses.1,
        "total_mass": masses.0 + masses.1,
        "hypothesis": LIMIT_HYPOTHESIS,
        "coefficients": coefficients.iter().map(|(i, c)| json!({
            "flow": i.to_string(), "re": c.re, "im": c.im,
        })).collect::<Vec<_>>(),
    });
    if let (Some(kappa), true) = (regular, a.run.initial.eq_ignore_ascii_case("B")) {
        meta["closed_form_comparison"] = (0..=depth.min(6))
            .map(|d| json!({
                "depth": d,
                "derived": derived_localization_b(kappa, d),
                "printed": printed_localization_b(kappa, d),
            }))
            .collect();
    }
    write_meta(a.run.out.as_deref(), &meta)
}

fn verify(a: &VerifyArgs) -> Result<()> {
    let spec = load_spec(&a.tree)?;
    let report = run_suite(&spec, a.depth, a.seed)?;
    println!("{report}");
    if let Some(p) = &a.out {
        write_text(Some(p), &serde_json::to_string_pretty(&report)?)?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Error::Consistency("verify suite reported failures".into()))
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Spectrum(a) => spectrum(a),
        Command::Flows(a) => flows(a),
        Command::Density(a) => density(a),
        Command::Evolve(a) => evolve_cmd(a),
        Command::Timeavg(a) => timeavg(a),
        Command::Limit(a) => limit(a),
        Command::Verify(a) => verify(a),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
