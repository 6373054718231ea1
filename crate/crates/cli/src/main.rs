//! `isomush`: batch driver for cycle-consistent multi-shape matching.

mod export;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use isomush::bundle::{write_matrix, Bundle};
use isomush::config::{RunConfig, UniverseSize};
use isomush::eval::{evaluate, PairwiseSet};
use isomush::fmap::PairwiseMap;
use isomush::pipeline::{self, AtStage, Stage, StageError};
use isomush::{Error, Shape};

#[derive(Parser)]
#[command(name = "isomush", version, about = "Cycle-consistent dense correspondences for collections of near-isometric meshes")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: pairwise init, synchronisation, alternating optimisation.
    Match(RunArgs),
    /// Pairwise init and synchronisation only; writes the starting U/Q.
    SyncOnly(RunArgs),
    /// Pairwise functional maps and point-wise maps only.
    InitOnly(RunArgs),
    /// Score predicted correspondences against ground truth.
    Eval(EvalArgs),
    /// Colour meshes by universe point.
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Input meshes (.off or .ply), in collection order.
    shapes: Vec<PathBuf>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Spectral basis size.
    #[arg(long)]
    basis: Option<usize>,
    /// Universe size, or "auto" for the largest mesh.
    #[arg(long)]
    universe: Option<UniverseSize>,
    /// Relative-improvement stopping threshold.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Diagonal band kept in pairwise maps before synchronisation.
    #[arg(long)]
    band_radius: Option<usize>,
    /// Worker threads, 0 for one per core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rectangular universe maps for partial shapes.
    #[arg(long)]
    partial: bool,
    /// Cache directory for eigenbases.
    #[arg(long)]
    basis_cache: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Meshes the correspondence files refer to, in collection order.
    shapes: Vec<PathBuf>,
    /// Directory of predicted `map_<i>_<j>.txt` files.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth `map_<i>_<j>.txt` files.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "isomush-eval")]
    out: PathBuf,
    /// Largest PCK threshold (fraction of the diameter).
    #[arg(long)]
    tau_max: Option<f64>,
    /// Objective trace CSV to embed in the report.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    /// One coloured mesh per shape.
    Colormap,
    /// Shape j coloured through its partners on shape i, for every pair.
    Pairs,
}

#[derive(Args)]
struct ExportArgs {
    /// Meshes in the bundle's shape order.
    shapes: Vec<PathBuf>,
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, value_enum, default_value = "colormap")]
    style: Style,
    #[arg(long, default_value = "isomush-export")]
    out: PathBuf,
}

/// A failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { code: e.exit_code() as u8, message: e.to_string() }
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure { code: e.error.exit_code() as u8, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Match(a) => cmd_run(a, Mode::Match),
        Command::SyncOnly(a) => cmd_run(a, Mode::SyncOnly),
        Command::InitOnly(a) => cmd_run(a, Mode::InitOnly),
        Command::Eval(a) => cmd_eval(a),
        Command::Export(a) => cmd_export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn init_threads(n: usize) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure { code: 3, message: format!("thread pool: {e}") })
}

fn resolve_config(a: RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if !a.shapes.is_empty() {
        cfg.shapes = a.shapes;
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { cfg.$field = v; } )* };
    }
    set!(basis, universe, epsilon, max_iters, band_radius, threads, seed, out);
    if a.partial {
        cfg.partial = true;
    }
    if a.basis_cache.is_some() {
        cfg.basis_cache = a.basis_cache;
    }
    cfg.validate()?;
    if cfg.shapes.len() < 2 {
        return Err(usage(format!("need at least 2 meshes, got {}", cfg.shapes.len())));
    }
    Ok(cfg)
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Match,
    SyncOnly,
    InitOnly,
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).at(Stage::Export)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e)).at(Stage::Export)?;
    Ok(())
}

fn write_maps(dir: &Path, maps: &[PairwiseMap]) -> Result<(), Failure> {
    for m in maps {
        m.write_text(&dir.join(format!("map_{}_{}.txt", m.source, m.target)))
            .at(Stage::Export)?;
    }
    Ok(())
}

fn cmd_run(args: RunArgs, mode: Mode) -> Result<(), Failure> {
    let cfg = resolve_config(args)?;
    init_threads(cfg.threads)?;
    let started = std::time::Instant::now();
    let shapes = pipeline::load_shapes(&cfg.shapes).at(Stage::Load)?;
    let dims = pipeline::resolve_dimensions(&shapes, &cfg).at(Stage::Load)?;
    let mut timings = pipeline::Timings::default();

    let t = std::time::Instant::now();
    let bases = pipeline::compute_bases(&shapes, dims.basis, cfg.basis_cache.as_deref()).at(Stage::Basis)?;
    timings.basis = t.elapsed().as_secs_f64();
    let t = std::time::Instant::now();
    let init = pipeline::pairwise_init(&bases, &dims, &cfg).at(Stage::Init)?;
    timings.init = t.elapsed().as_secs_f64();
    create_dir(&cfg.out)?;

    let mut manifest = json!({
        "command": match mode { Mode::Match => "match", Mode::SyncOnly => "sync-only", Mode::InitOnly => "init-only" },
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(&cfg).expect("config serialises"),
        "dimensions": serde_json::to_value(&dims).expect("dimensions serialise"),
        "shapes": shapes.iter().zip(&cfg.shapes).map(|(s, p)| json!({
            "path": p, "vertices": s.len(), "faces": s.faces().len(), "sha256": s.content_hash(),
        })).collect::<Vec<_>>(),
        "identity_fallbacks": init.identity_fallbacks,
    });

    if mode == Mode::InitOnly {
        for f in &init.fmaps {
            write_matrix(&cfg.out.join(format!("fmap_{}_{}.txt", f.source, f.target)), &f.c).at(Stage::Export)?;
        }
        write_maps(&cfg.out, &init.maps)?;
        return finish(&cfg.out, manifest, &timings, started);
    }

    let t = std::time::Instant::now();
    let sync = pipeline::synchronise(&bases, &init, &dims, &cfg).at(Stage::Sync)?;
    timings.sync = t.elapsed().as_secs_f64();
    if sync.ambiguous {
        log::warn!("synchronisation eigen-gap {:e} is tiny; the starting maps are ambiguous", sync.eigen_gap);
    }
    manifest["sync"] = json!({ "eigen_gap": sync.eigen_gap, "ambiguous": sync.ambiguous });
    let start = Bundle::new(sync.u.clone(), sync.q.clone()).at(Stage::Export)?;
    start.write(&cfg.out.join("bundle_init.txt")).at(Stage::Export)?;

    if mode == Mode::SyncOnly {
        write_maps(&cfg.out, &pipeline::universe_pairs(&sync.u))?;
        return finish(&cfg.out, manifest, &timings, started);
    }

    let t = std::time::Instant::now();
    let state = pipeline::optimise(&bases, &sync, &dims, &cfg).at(Stage::Optimise)?;
    timings.optimise = t.elapsed().as_secs_f64();
    Bundle::new(state.u.clone(), state.q.clone())
        .at(Stage::Export)?
        .write(&cfg.out.join("bundle.txt"))
        .at(Stage::Export)?;
    write_maps(&cfg.out, &pipeline::universe_pairs(&state.u))?;
    write_text(&cfg.out.join("trace.csv"), &state.trace_csv())?;
    manifest["solver"] = json!({
        "status": state.status,
        "iterations": state.iteration,
        "objective_initial": state.trace[0],
        "objective_final": state.objective(),
    });
    finish(&cfg.out, manifest, &timings, started)
}

fn finish(out: &Path, mut manifest: serde_json::Value, timings: &pipeline::Timings, started: std::time::Instant) -> Result<(), Failure> {
    manifest["timings_seconds"] = json!({
        "basis": timings.basis,
        "init": timings.init,
        "sync": timings.sync,
        "optimise": timings.optimise,
        "total": started.elapsed().as_secs_f64(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    write_text(&out.join("manifest.json"), &text)
}

/// `(i, j, path)` for every `map_<i>_<j>.txt` in `dir`, sorted by pair.
fn map_files(dir: &Path) -> Result<Vec<(usize, usize, PathBuf)>, Failure> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Some(pair) = name.strip_prefix("map_").and_then(|s| s.strip_suffix(".txt")) else { continue };
        let mut it = pair.split('_').map(str::parse::<usize>);
        if let (Some(Ok(i)), Some(Ok(j)), None) = (it.next(), it.next(), it.next()) {
            out.push((i, j, path));
        }
    }
    out.sort();
    Ok(out)
}

fn read_map_dir(dir: &Path, shapes: &[Shape]) -> Result<PairwiseSet, Failure> {
    let files = map_files(dir)?;
    if files.is_empty() {
        return Err(usage(format!("{}: no map_<i>_<j>.txt files", dir.display())));
    }
    let mut maps = Vec::with_capacity(files.len());
    for (i, j, path) in files {
        if i >= shapes.len() || j >= shapes.len() || i == j {
            return Err(usage(format!("{}: pair ({i}, {j}) does not fit {} meshes", path.display(), shapes.len())));
        }
        maps.push(PairwiseMap::read_text(&path, i, j, shapes[i].len(), shapes[j].len())?);
    }
    Ok(PairwiseSet::new(maps))
}

fn read_trace(path: &Path) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.split(',')
                .nth(1)
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| Error::parse(path, n + 1, "expected objective in second column").into())
        })
        .collect()
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    init_threads(a.threads.unwrap_or(0))?;
    if a.shapes.len() < 2 {
        return Err(usage(format!("need at least 2 meshes, got {}", a.shapes.len())));
    }
    let started = std::time::Instant::now();
    let shapes = pipeline::load_shapes(&a.shapes)?;
    let pred = read_map_dir(&a.pred, &shapes)?;
    let gt = read_map_dir(&a.gt, &shapes)?;
    let mut cfg = isomush::eval::EvalConfig::default();
    if let Some(t) = a.tau_max {
        cfg.tau_max = t;
    }
    let mut report = evaluate(&pred, &gt, &shapes, &cfg)?;
    if let Some(t) = &a.trace {
        report.objective_trace = Some(read_trace(t)?);
    }
    report.runtime_seconds = Some(started.elapsed().as_secs_f64());
    report.write(&a.out)?;
    println!("auc {:.6} cycle_error {:.6}", report.auc, report.cycle_error);
    Ok(())
}

fn cmd_export(a: ExportArgs) -> Result<(), Failure> {
    let bundle = Bundle::read(&a.bundle)?;
    let shapes = pipeline::load_shapes(&a.shapes)?;
    if shapes.len() != bundle.u.num_shapes() {
        return Err(usage(format!("bundle has {} shapes, {} meshes given", bundle.u.num_shapes(), shapes.len())));
    }
    for (i, s) in shapes.iter().enumerate() {
        if s.len() != bundle.u.block(i).len() {
            return Err(usage(format!(
                "mesh {i} has {} vertices, bundle expects {}",
                s.len(),
                bundle.u.block(i).len()
            )));
        }
    }
    create_dir(&a.out)?;
    match a.style {
        Style::Colormap => export::colormap(&a.out, &shapes, &bundle.u)?,
        Style::Pairs => export::pairs(&a.out, &shapes, &bundle.u)?,
    }
    Ok(())
}
