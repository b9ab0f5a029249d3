use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use lba_bench::calibrate::{run_calibration, CalibrationConfig};
use lba_bench::config::{parse_list, BenchConfig, Method, Preset};
use lba_bench::pipeline::{run_pipeline, write_trace_csv, PipelineConfig};
use lba_bench::sweep::run_sweep;
use lba_core::budget::{LocalBaMode, TimeModel};
use lba_core::io::{self, parse_problem, write_calibration_csv, write_json, write_results_csv, Format, Problem};
use lba_core::sim::generate_scene;

#[derive(Parser)]
#[command(name = "lba-bench", version, about = "Subgraph selection studies for local bundle adjustment")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores; 1 = deterministic ordering).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Comma-separated subgraph fractions, e.g. 0.1,0.5,0.9.
    #[arg(long, global = true)]
    fractions: Option<String>,
    #[arg(long, global = true, value_parser = ["ci", "paper"])]
    preset: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene and write it as JSON with ground truth.
    Simulate,
    /// Run a selection sweep and write one CSV row per trial.
    Sweep {
        /// Comma-separated methods: gg, greedy, covis, random, full, oracle.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Problem file (.bal, .g2o or .json) used instead of synthetic scenes.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Write zero in the time columns so the CSV is reproducible.
        #[arg(long)]
        no_timing: bool,
    },
    /// Time solves over subgraph sizes and fit the time model.
    Calibrate {
        /// Comma-separated subgraph sizes.
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Walk a simulated trajectory running budget-aware local BA.
    Pipeline {
        /// Time model JSON written by `calibrate`.
        #[arg(long)]
        model: PathBuf,
        /// budget, full, or both.
        #[arg(long, default_value = "both")]
        mode: String,
        #[arg(long)]
        no_timing: bool,
    },
    /// Parse a problem file and check that writing and re-parsing it is lossless.
    Parse { file: PathBuf },
}

/// Errors in the user's request, reported with exit code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Reached when more than the allowed share of trials failed.
#[derive(Debug)]
struct TrialFailures(String);

impl std::fmt::Display for TrialFailures {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for TrialFailures {}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", p.display())))
        }
    }
}

fn preset(common: &Common) -> Option<Preset> {
    common.preset.as_deref().map(|p| p.parse().expect("clap restricts the values"))
}

fn format_of(path: &Path) -> anyhow::Result<Format> {
    path.extension()
        .and_then(|e| e.to_str())
        .and_then(Format::from_extension)
        .ok_or_else(|| config_err(format!("{}: unknown problem format", path.display())))
}

fn load_problem(path: &Path) -> anyhow::Result<Problem> {
    let format = format_of(path)?;
    let bytes = fs::read(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    parse_problem(&bytes, format).with_context(|| format!("parsing {}", path.display()))
}

fn write_out(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn bench_config(common: &Common) -> anyhow::Result<BenchConfig> {
    let mut c: BenchConfig = match (&common.config, preset(common)) {
        (Some(p), _) => read_config(Some(p))?,
        (None, Some(p)) => BenchConfig::preset(p),
        (None, None) => BenchConfig::default(),
    };
    if let (Some(_), Some(p)) = (&common.config, preset(common)) {
        c.scene = p.scene();
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(w) = common.workers {
        c.workers = w;
    }
    if let Some(e) = common.epsilon {
        c.epsilon = e;
    }
    if let Some(f) = &common.fractions {
        c.fractions = parse_list(f).map_err(config_err)?;
    }
    Ok(c)
}

fn simulate(common: &Common) -> anyhow::Result<()> {
    let c = bench_config(common)?;
    c.scene.validate().map_err(|e| config_err(e.to_string()))?;
    let scene = generate_scene(&c.scene, c.seed)?;
    let g = &scene.graph;
    let min_points = (0..g.cameras().len()).map(|s| g.camera_observations(s).len()).min().unwrap_or(0);
    let min_views = (0..g.points().len()).map(|s| g.point_observations(s).len()).min().unwrap_or(0);
    println!(
        "cameras {} points {} observations {} min points/camera {} min views/point {}",
        g.cameras().len(),
        g.points().len(),
        g.observations().len(),
        min_points,
        min_views
    );
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("scene.json"));
    write_out(&out, &write_json(g, Some(&scene.ground_truth)))
}

fn sweep(common: &Common, methods: Option<&str>, repeats: Option<usize>, input: Option<&Path>, no_timing: bool) -> anyhow::Result<()> {
    let mut c = bench_config(common)?;
    if let Some(m) = methods {
        c.methods = parse_list::<Method>(m).map_err(config_err)?;
    }
    if let Some(r) = repeats {
        c.repeats = r;
    }
    if no_timing {
        c.timing = false;
    }
    c.validate().map_err(config_err)?;
    let input = input.map(Path::to_path_buf).or_else(|| c.input.clone());
    let problem = input.as_deref().map(load_problem).transpose()?;
    let out = run_sweep(&c, problem.as_ref());
    let path = common.out.clone().unwrap_or_else(|| PathBuf::from("sweep.csv"));
    write_out(&path, &write_results_csv(&out.rows))?;
    eprintln!("{} rows, {} of {} trials failed", out.rows.len(), out.failed, out.attempted);
    if out.too_many_failures() {
        return Err(TrialFailures(format!("{} of {} trials failed", out.failed, out.attempted)).into());
    }
    Ok(())
}

fn calibrate(common: &Common, ks: Option<&str>, repeats: Option<usize>) -> anyhow::Result<()> {
    let mut c: CalibrationConfig = read_config(common.config.as_deref())?;
    if let Some(p) = preset(common) {
        c.scene = p.scene();
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(k) = ks {
        c.ks = parse_list(k).map_err(config_err)?;
    }
    if let Some(r) = repeats {
        c.repeats = r;
    }
    c.scene.validate().map_err(|e| config_err(e.to_string()))?;
    let out = run_calibration(&c).map_err(|e| {
        if lba_bench::calibrate::is_insufficient(&e) {
            config_err(e.to_string())
        } else {
            e
        }
    })?;
    let path = common.out.clone().unwrap_or_else(|| PathBuf::from("time_model.json"));
    write_out(&path, &serde_json::to_string_pretty(&out.model)?)?;
    write_out(&path.with_extension("csv"), &write_calibration_csv(&out.samples))?;
    let c = out.model.coefficients;
    println!("tau(k) = {:e} + {:e} k + {:e} k^2 + {:e} k^3 s, k in [{}, {}]", c[0], c[1], c[2], c[3], out.model.k_min, out.model.k_max);
    Ok(())
}

fn pipeline(common: &Common, model: &Path, mode: &str, no_timing: bool) -> anyhow::Result<()> {
    let mut c: PipelineConfig = read_config(common.config.as_deref())?;
    if let Some(p) = preset(common) {
        c.scene = p.scene();
    }
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(e) = common.epsilon {
        c.local.epsilon = e;
    }
    if no_timing {
        c.timing = false;
    }
    let modes = match mode {
        "budget" => vec![LocalBaMode::BudgetAware],
        "full" => vec![LocalBaMode::AlwaysFull],
        "both" => vec![LocalBaMode::BudgetAware, LocalBaMode::AlwaysFull],
        other => return Err(config_err(format!("unknown mode {other:?} (expected budget, full or both)"))),
    };
    let text = fs::read_to_string(model).map_err(|e| config_err(format!("{}: {e}", model.display())))?;
    let model: TimeModel = serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", model.display())))?;
    let mut rows = Vec::new();
    for m in modes {
        let trace = run_pipeline(&c, &model, m)?;
        if let Some(a) = trace.adherence(1.5) {
            eprintln!("{}: solve within 1.5x budget on {:.0}% of triggered steps", lba_bench::pipeline::mode_name(m), 100.0 * a);
        }
        eprintln!("{}: solve time std {:.3} ms", lba_bench::pipeline::mode_name(m), trace.solve_std());
        rows.extend(trace.rows);
    }
    let path = common.out.clone().unwrap_or_else(|| PathBuf::from("trace.csv"));
    write_out(&path, &write_trace_csv(&rows)?)
}

fn parse(common: &Common, file: &Path) -> anyhow::Result<()> {
    let format = format_of(file)?;
    let problem = load_problem(file)?;
    let g = &problem.graph;
    println!(
        "{}: {} cameras, {} points, {} observations",
        file.display(),
        g.cameras().len(),
        g.points().len(),
        g.observations().len()
    );
    let written = match format {
        Format::Bal => io::write_bal(g)?,
        Format::G2o => io::write_g2o(g)?,
        Format::Json => write_json(g, problem.ground_truth.as_ref()),
    };
    let again = parse_problem(written.as_bytes(), format)?;
    if again.graph != problem.graph {
        anyhow::bail!("round trip changed the problem");
    }
    println!("round trip ok");
    if let Some(out) = &common.out {
        write_out(out, &written)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match &cli.command {
        Command::Simulate => simulate(c),
        Command::Sweep {
            methods,
            repeats,
            input,
            no_timing,
        } => sweep(c, methods.as_deref(), *repeats, input.as_deref(), *no_timing),
        Command::Calibrate { ks, repeats } => calibrate(c, ks.as_deref(), *repeats),
        Command::Pipeline { model, mode, no_timing } => pipeline(c, model, mode, *no_timing),
        Command::Parse { file } => parse(c, file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else if e.downcast_ref::<TrialFailures>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
