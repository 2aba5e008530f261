use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gapseg::imagery::{load_label_image, load_probability_map, save_label_image, save_probability_map, Polarity};
use gapseg::learn::{fit_weights, FitStatus, WeightGrid};
use gapseg::metrics::Background;
use gapseg::pipeline::{run_eval, run_segment, DumpOptions, EvalOptions, PipelineConfig, PipelineError, Stage};
use gapseg::solve::SolverKind;
use gapseg::synth::{generate_scene, GapSpec, SceneSpec};

#[derive(Parser)]
#[command(name = "gapseg", version, about = "Membrane segmentation with closed-contour integer programming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one probability map.
    Segment(SegmentArgs),
    /// Compare predicted label images with ground truth.
    Eval(EvalArgs),
    /// Fit the objective weights on labelled maps.
    Learn(LearnArgs),
    /// Write a synthetic scene.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Which end of the grey scale is membrane.
    #[arg(long)]
    polarity: Option<Polarity>,
    /// Solver wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Bnb,
    Exhaustive,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackgroundArg {
    Segment,
    Excluded,
}

impl From<BackgroundArg> for Background {
    fn from(b: BackgroundArg) -> Self {
        match b {
            BackgroundArg::Segment => Background::Segment,
            BackgroundArg::Excluded => Background::Excluded,
        }
    }
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv.split_once('=').ok_or_else(|| PipelineError {
                stage: Stage::Config,
                message: format!("override `{kv}` is not KEY=VALUE"),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(p) = self.polarity {
            cfg.input.polarity = p;
        }
        if let Some(t) = self.time_limit {
            cfg.solve.time_limit = Some(t);
        }
        if let Some(s) = self.solver {
            cfg.solve.solver = match s {
                SolverArg::Bnb => SolverKind::Bnb,
                SolverArg::Exhaustive => SolverKind::Exhaustive,
            };
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// Probability map (PNG or PGM, single channel).
    input: PathBuf,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    dump_watershed: bool,
    #[arg(long)]
    dump_graph: bool,
    #[arg(long)]
    dump_lp: bool,
}

#[derive(Args)]
struct EvalArgs {
    pred_dir: PathBuf,
    truth_dir: PathBuf,
    /// Comma-separated boundary tolerances in pixels.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8")]
    tolerances: Vec<u32>,
    /// Report error counts divided by the number of truth segments.
    #[arg(long)]
    normalize_ted: bool,
    #[arg(long, value_enum, default_value = "segment")]
    background: BackgroundArg,
    /// Method name written into the CSV.
    #[arg(long, default_value = "ilp")]
    method: String,
    /// CSV output file; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LearnArgs {
    /// Probability map; repeat together with --truth for several images.
    #[arg(long, required = true)]
    map: Vec<PathBuf>,
    /// Truth label image, one per --map.
    #[arg(long, required = true)]
    truth: Vec<PathBuf>,
    /// Comma-separated candidate values for every weight.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-2,-1,-0.5,0,0.5")]
    grid: Vec<f64>,
    /// Maximum number of weight vectors to evaluate.
    #[arg(long, default_value_t = 200)]
    budget: usize,
    #[arg(long, value_enum, default_value = "segment")]
    background: BackgroundArg,
    /// Output config with the fitted weights.
    #[arg(short, long, default_value = "weights.toml")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for map.png, clean.png, truth.png and scene.toml.
    #[arg(short, long, default_value = "scene")]
    out: PathBuf,
    /// Scene description (TOML); flags override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    membrane_width: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gap as `boundary:position:length`; repeatable.
    #[arg(long, value_parser = parse_gap)]
    gap: Vec<GapSpec>,
}

fn parse_gap(s: &str) -> Result<GapSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [b, p, l] = parts.as_slice() else {
        return Err(format!("gap `{s}` is not boundary:position:length"));
    };
    Ok(GapSpec {
        boundary: b.parse().map_err(|e| format!("gap boundary `{b}`: {e}"))?,
        position: p.parse().map_err(|e| format!("gap position `{p}`: {e}"))?,
        length: l.parse().map_err(|e| format!("gap length `{l}`: {e}"))?,
    })
}

fn fail(stage: Stage, message: impl Into<String>) -> PipelineError {
    PipelineError {
        stage,
        message: message.into(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| fail(Stage::Save, format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| fail(Stage::Save, format!("{}: {e}", path.display())))
}

fn segment(a: &SegmentArgs) -> Result<i32, PipelineError> {
    let cfg = a.config.load()?;
    let dumps = DumpOptions {
        watershed: a.dump_watershed,
        graph: a.dump_graph,
        lp: a.dump_lp,
    };
    let r = run_segment(&a.input, &a.out, &cfg, &dumps)?;
    println!(
        "status={:?} objective={:.6} segments={} nodes={} time={:.3}s labels={}",
        r.status,
        r.objective,
        r.num_segments,
        r.nodes_explored,
        r.wall_time.as_secs_f64(),
        r.labels_path.display()
    );
    if r.exit_code() != 0 {
        eprintln!("[solve] stopped before proving optimality; wrote the best solution found");
    }
    Ok(r.exit_code())
}

fn eval(a: &EvalArgs) -> Result<i32, PipelineError> {
    let opts = EvalOptions {
        tolerances: a.tolerances.clone(),
        method: a.method.clone(),
        normalize_ted: a.normalize_ted,
        background: a.background.into(),
        ..EvalOptions::default()
    };
    let r = run_eval(&a.pred_dir, &a.truth_dir, &opts)?;
    for name in &r.unmatched {
        eprintln!("[eval] unmatched file: {name}");
    }
    match &a.out {
        Some(p) => write_file(p, &r.to_csv())?,
        None => print!("{}", r.to_csv()),
    }
    Ok(0)
}

fn learn(a: &LearnArgs) -> Result<i32, PipelineError> {
    if a.map.len() != a.truth.len() {
        return Err(fail(
            Stage::Config,
            format!("{} maps but {} truth images", a.map.len(), a.truth.len()),
        ));
    }
    let mut cfg = a.config.load()?;
    let mut maps = Vec::new();
    let mut truths = Vec::new();
    for (m, t) in a.map.iter().zip(&a.truth) {
        maps.push(load_probability_map::<f64>(m, cfg.input.polarity).map_err(|e| fail(Stage::Load, e.to_string()))?);
        truths.push(load_label_image(t).map_err(|e| fail(Stage::Load, e.to_string()))?);
    }
    let pairs: Vec<_> = maps.iter().zip(&truths).collect();
    let grid = WeightGrid::uniform(&a.grid);
    let r = fit_weights(&pairs, &grid, a.budget, &cfg, a.background.into())
        .map_err(|e| fail(Stage::Config, e.to_string()))?;
    if r.status == FitStatus::IncompleteSweep {
        eprintln!("[learn] warning: budget exhausted before one full sweep; weights are the best seen so far");
    }
    cfg.weights = r.weights;
    write_file(&a.out, &cfg.to_toml())?;
    println!(
        "weights={:?} voi={:.6} evaluations={} sweeps={} status={:?} config={}",
        r.weights.to_array(),
        r.voi,
        r.evaluations,
        r.sweeps,
        r.status,
        a.out.display()
    );
    Ok(0)
}

fn synth(a: &SynthArgs) -> Result<i32, PipelineError> {
    let mut spec = match &a.spec {
        Some(p) => {
            let s = std::fs::read_to_string(p).map_err(|e| fail(Stage::Config, format!("{}: {e}", p.display())))?;
            SceneSpec::from_toml(&s).map_err(|e| fail(Stage::Config, format!("{}: {e}", p.display())))?
        }
        None => SceneSpec::default(),
    };
    macro_rules! apply {
        ($($field:ident <- $flag:ident),*) => {
            $(if let Some(v) = a.$flag { spec.$field = v; })*
        };
    }
    apply!(width <- width, height <- height, num_cells <- cells, membrane_width <- membrane_width, noise_sigma <- noise, seed <- seed);
    if !a.gap.is_empty() {
        spec.gaps = a.gap.clone();
    }
    let scene = generate_scene::<f64>(&spec).map_err(|e| fail(Stage::Config, e.to_string()))?;
    std::fs::create_dir_all(&a.out).map_err(|e| fail(Stage::Save, format!("{}: {e}", a.out.display())))?;
    let save = |e: gapseg::imagery::ImageryError| fail(Stage::Save, e.to_string());
    save_probability_map(&scene.map, a.out.join("map.png")).map_err(save)?;
    save_probability_map(&scene.clean, a.out.join("clean.png")).map_err(save)?;
    save_label_image(&scene.truth, a.out.join("truth.png")).map_err(save)?;
    write_file(
        &a.out.join("scene.toml"),
        &spec.to_toml(),
    )?;
    println!(
        "cells={} segments={} gap_pixels={} out={}",
        spec.num_cells,
        scene.truth.num_segments(),
        scene.gap_pixels.len(),
        a.out.display()
    );
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Segment(a) => segment(a),
        Command::Eval(a) => eval(a),
        Command::Learn(a) => learn(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
