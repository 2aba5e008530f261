//! End-to-end driver: probability map to label image, plus the threshold
//! baseline and the file-level segment and evaluation runs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::filters::{gaussian_smooth, FilterBank, FilterConfig, OrientedResponse};
use crate::ilpmodel::{build_model, IlpModel, Weights};
use crate::imagery::{
    load_label_image, load_probability_map, save_label_image, save_mask, LabelImage, Polarity, ProbabilityMap, Raster,
};
use crate::metrics::{mean_rows, rand_index, topo_errors, variation_of_information, Background, MetricRow, TopoOptions};
use crate::plangraph::{enumerate_node_states_with, extract_graph, BetaMode, BetaSource, BoundaryGraph, NodeStateTable};
use crate::priors::{compute_priors, PriorConfig, PriorTable};
use crate::scalar::Scalar;
use crate::segment::{decode, membrane_mask};
use crate::solve::{solve, IlpSolution, SolveOptions, SolveStatus};
use crate::watershed::{watershed_transform, WatershedResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Filter,
    Smooth,
    Watershed,
    Graph,
    Priors,
    Model,
    Solve,
    Decode,
    Save,
    Eval,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Filter => "filter",
            Stage::Smooth => "smooth",
            Stage::Watershed => "watershed",
            Stage::Graph => "graph",
            Stage::Priors => "priors",
            Stage::Model => "model",
            Stage::Solve => "solve",
            Stage::Decode => "decode",
            Stage::Save => "save",
            Stage::Eval => "eval",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError {
        stage,
        message: e.to_string(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub beta_source: BetaMode,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub polarity: Polarity,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub filters: FilterConfig,
    pub plangraph: GraphConfig,
    pub priors: PriorConfig,
    pub weights: Weights,
    pub solve: SolveOptions,
}

impl PipelineConfig {
    pub fn from_toml(s: &str) -> Result<Self, PipelineError> {
        toml::from_str(s).map_err(at(Stage::Config))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| PipelineError {
            stage: Stage::Config,
            message: format!("{}: {e}", path.display()),
        })?;
        Self::from_toml(&s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Overrides `section.key` with a TOML value; bare words are strings.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let err = |m: String| PipelineError {
            stage: Stage::Config,
            message: m,
        };
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| err(format!("override key `{key}` must be section.key")))?;
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("present"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let mut root = toml::Table::try_from(&*self).map_err(|e| err(e.to_string()))?;
        let table = root
            .get_mut(section)
            .and_then(toml::Value::as_table_mut)
            .ok_or_else(|| err(format!("unknown config section `{section}`")))?;
        table.insert(field.to_string(), parsed);
        *self = toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| err(format!("override `{key} = {value}`: {e}")))?;
        Ok(())
    }
}

/// Every intermediate of one run.
#[derive(Clone, Debug)]
pub struct PipelineOutput<T> {
    pub response: OrientedResponse<T>,
    pub smoothed: Raster<T>,
    pub watershed: WatershedResult,
    pub graph: BoundaryGraph,
    pub states: NodeStateTable,
    pub priors: PriorTable<T>,
    pub model: IlpModel<T>,
    pub solution: IlpSolution<T>,
    pub labels: LabelImage,
    pub timings: Vec<(Stage, Duration)>,
}

/// Everything up to (and including) the model, without solving.
pub struct Prepared<T> {
    pub response: OrientedResponse<T>,
    pub smoothed: Raster<T>,
    pub watershed: WatershedResult,
    pub graph: BoundaryGraph,
    pub states: NodeStateTable,
    pub priors: PriorTable<T>,
    pub timings: Vec<(Stage, Duration)>,
}

pub fn prepare<T: Scalar>(map: &ProbabilityMap<T>, cfg: &PipelineConfig) -> Result<Prepared<T>, PipelineError> {
    let mut timings = Vec::new();
    let mut clock = Instant::now();
    let mut lap = |stage: Stage, timings: &mut Vec<(Stage, Duration)>| {
        let now = Instant::now();
        timings.push((stage, now - clock));
        clock = now;
    };
    let bank = FilterBank::from_config(&cfg.filters).map_err(at(Stage::Filter))?;
    let response = bank.apply(map.raster()).map_err(at(Stage::Filter))?;
    lap(Stage::Filter, &mut timings);
    let smoothed = gaussian_smooth(&response.max_response, cfg.filters.smooth_sigma).map_err(at(Stage::Smooth))?;
    lap(Stage::Smooth, &mut timings);
    let watershed = watershed_transform(&smoothed);
    lap(Stage::Watershed, &mut timings);
    let graph = extract_graph(&watershed).map_err(at(Stage::Graph))?;
    let source = match cfg.plangraph.beta_source {
        BetaMode::Geometry => BetaSource::Geometry,
        BetaMode::Filter => BetaSource::Filter(&response),
    };
    let states = enumerate_node_states_with(&graph, source).map_err(at(Stage::Graph))?;
    lap(Stage::Graph, &mut timings);
    let priors = compute_priors(map, &response, &graph, &states, &cfg.priors).map_err(at(Stage::Priors))?;
    lap(Stage::Priors, &mut timings);
    Ok(Prepared {
        response,
        smoothed,
        watershed,
        graph,
        states,
        priors,
        timings,
    })
}

impl<T: Scalar> Prepared<T> {
    pub fn model(&self, w: &Weights) -> Result<IlpModel<T>, PipelineError> {
        build_model(&self.graph, &self.states, &self.priors, w).map_err(at(Stage::Model))
    }

    /// Builds, solves and decodes with the given weights.
    pub fn segment(&self, w: &Weights, opts: &SolveOptions) -> Result<(IlpModel<T>, IlpSolution<T>, LabelImage), PipelineError> {
        let model = self.model(w)?;
        let sol = solve(&model, opts).map_err(at(Stage::Solve))?;
        let labels = decode(&self.graph, &model.layout, &sol.assignment).map_err(at(Stage::Decode))?;
        Ok((model, sol, labels))
    }
}

pub fn run_pipeline<T: Scalar>(map: &ProbabilityMap<T>, cfg: &PipelineConfig) -> Result<PipelineOutput<T>, PipelineError> {
    let p = prepare(map, cfg)?;
    let t = Instant::now();
    let (model, solution, labels) = p.segment(&cfg.weights, &cfg.solve)?;
    let mut timings = p.timings;
    timings.push((Stage::Solve, t.elapsed()));
    Ok(PipelineOutput {
        response: p.response,
        smoothed: p.smoothed,
        watershed: p.watershed,
        graph: p.graph,
        states: p.states,
        priors: p.priors,
        model,
        solution,
        labels,
        timings,
    })
}

/// Pixels with `P(membrane) < threshold` grouped into 4-connected segments.
pub fn threshold_baseline<T: Scalar>(map: &ProbabilityMap<T>, threshold: f64) -> LabelImage {
    let t = T::lit(threshold);
    LabelImage::new(map.raster().map(|&p| u32::from(p < t))).relabel_components()
}

#[derive(Clone, Debug, Default)]
pub struct DumpOptions {
    pub watershed: bool,
    pub graph: bool,
    pub lp: bool,
}

#[derive(Clone, Debug)]
pub struct SegmentReport {
    pub status: SolveStatus<f64>,
    pub objective: f64,
    pub labels_path: PathBuf,
    pub membrane_path: PathBuf,
    pub num_segments: usize,
    pub nodes_explored: u64,
    pub wall_time: Duration,
}

impl SegmentReport {
    /// 0 for a proven optimum, 2 for a time-out or node limit.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            SolveStatus::ProvenOptimal => 0,
            _ => 2,
        }
    }
}

/// Loads a map, runs the pipeline and writes `labels.png` and
/// `membrane.png` (plus optional dumps) into `out_dir`.
pub fn run_segment(
    input: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
    dumps: &DumpOptions,
) -> Result<SegmentReport, PipelineError> {
    let map: ProbabilityMap<f64> = load_probability_map(input, cfg.input.polarity).map_err(at(Stage::Load))?;
    let out = run_pipeline(&map, cfg)?;
    let save = at(Stage::Save);
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError {
        stage: Stage::Save,
        message: format!("{}: {e}", out_dir.display()),
    })?;
    let labels_path = out_dir.join("labels.png");
    let membrane_path = out_dir.join("membrane.png");
    save_label_image(&out.labels, &labels_path).map_err(&save)?;
    save_mask(&membrane_mask(&out.labels), &membrane_path).map_err(&save)?;
    if dumps.watershed {
        let ws = LabelImage::new(out.watershed.basin_labels.clone());
        save_label_image(&ws, out_dir.join("watershed.png")).map_err(&save)?;
    }
    if dumps.graph {
        out.graph.write_json(out_dir.join("graph.json")).map_err(at(Stage::Save))?;
    }
    if dumps.lp {
        let f = std::fs::File::create(out_dir.join("model.lp")).map_err(at(Stage::Save))?;
        out.model.write_lp(&out.graph, std::io::BufWriter::new(f)).map_err(at(Stage::Save))?;
    }
    Ok(SegmentReport {
        status: out.solution.status,
        objective: out.solution.objective,
        labels_path,
        membrane_path,
        num_segments: out.labels.num_segments(),
        nodes_explored: out.solution.stats.nodes_explored,
        wall_time: out.solution.stats.wall_time,
    })
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub tolerances: Vec<u32>,
    pub method: String,
    pub normalize_ted: bool,
    pub background: Background,
    pub topo: TopoOptions,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tolerances: vec![0, 1, 2, 4, 8],
            method: "ilp".to_string(),
            normalize_ted: false,
            background: Background::Segment,
            topo: TopoOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalResult {
    pub rows: Vec<MetricRow>,
    pub means: Vec<MetricRow>,
    /// File names present in only one of the two directories.
    pub unmatched: Vec<String>,
}

impl EvalResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(MetricRow::HEADER);
        s.push('\n');
        for r in self.rows.iter().chain(&self.means) {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }
}

fn png_names(dir: &Path) -> Result<Vec<String>, PipelineError> {
    let rd = std::fs::read_dir(dir).map_err(|e| PipelineError {
        stage: Stage::Eval,
        message: format!("{}: {e}", dir.display()),
    })?;
    let mut names: Vec<String> = rd
        .filter_map(Result::ok)
        .filter(|e| e.path().is_file())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(PipelineError {
            stage: Stage::Eval,
            message: format!("{}: no PNG label images", dir.display()),
        });
    }
    Ok(names)
}

pub fn evaluate_pair(pred: &LabelImage, truth: &LabelImage, image: &str, opts: &EvalOptions) -> Result<Vec<MetricRow>, PipelineError> {
    let ri = rand_index(pred, truth, opts.background).map_err(at(Stage::Eval))?;
    let voi = variation_of_information(pred, truth, opts.background).map_err(at(Stage::Eval))?;
    opts.tolerances
        .iter()
        .map(|&t| {
            let r = topo_errors(pred, truth, t, &opts.topo).map_err(at(Stage::Eval))?;
            Ok(MetricRow::new(image, &opts.method, ri, voi, &r, opts.normalize_ted))
        })
        .collect()
}

/// Pairs label PNGs by file name across two directories.
pub fn run_eval(pred_dir: &Path, truth_dir: &Path, opts: &EvalOptions) -> Result<EvalResult, PipelineError> {
    let preds = png_names(pred_dir)?;
    let truths = png_names(truth_dir)?;
    let mut unmatched: Vec<String> = preds
        .iter()
        .filter(|n| !truths.contains(n))
        .chain(truths.iter().filter(|n| !preds.contains(n)))
        .cloned()
        .collect();
    unmatched.sort();
    let mut rows = Vec::new();
    for name in preds.iter().filter(|n| truths.contains(n)) {
        let load = |dir: &Path| {
            load_label_image(dir.join(name)).map_err(|e| PipelineError {
                stage: Stage::Eval,
                message: e.to_string(),
            })
        };
        let (p, t) = (load(pred_dir)?, load(truth_dir)?);
        rows.extend(evaluate_pair(&p, &t, name, opts)?);
    }
    if rows.is_empty() {
        return Err(PipelineError {
            stage: Stage::Eval,
            message: format!("no file names in common; unmatched: {}", unmatched.join(", ")),
        });
    }
    let means = mean_rows(&rows);
    Ok(EvalResult { rows, means, unmatched })
}
