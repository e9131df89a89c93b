use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pillarvote_core::{
    generate_scene_pair, pillarize, sparsity, total_objective, BackgroundSpec, BinLayout,
    EvalReport, Extraction, FlowField, GridConfig, MoverSpec, PipelineConfig, PointCloud,
    SceneFlowEstimator, SceneSpec, VoteConfig, DEFAULT_FRAME_INTERVAL,
};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::formats::{
    flow_csv, load_features, load_flow, load_mask, load_point_cloud, save_flow, save_point_cloud,
    CloudFormat,
};
use crate::report::{report_json, round6, summary_table};
use crate::votes::dump_votes;

#[derive(Debug, Parser)]
#[command(name = "pillarvote", version, about = "Pillar-voting scene flow for LiDAR scan pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate per-point flow from a source scan to a target scan.
    Estimate(EstimateArgs),
    /// Score a predicted flow against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic scan pair with ground truth.
    Synth(SynthArgs),
    /// Run estimate + eval over a parameter grid.
    Sweep(SweepArgs),
    /// Evaluate the Chamfer, dynamic, static and cluster objectives of a flow.
    Objectives(ObjectivesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractionArg {
    Argmax,
    SoftArgmax,
}

impl ExtractionArg {
    fn name(self) -> &'static str {
        match self {
            ExtractionArg::Argmax => "argmax",
            ExtractionArg::SoftArgmax => "soft-argmax",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    /// Odd grid centered on zero translation.
    Centered,
    /// Even grid without the +max edge.
    Even,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Pillar edge length in meters.
    #[arg(long, default_value_t = 0.2)]
    pub pillar_size: f64,
    /// Half-width of the square grid in meters.
    #[arg(long, default_value_t = 51.2)]
    pub extent: f64,
}

impl GridArgs {
    pub fn config(&self) -> CliResult<GridConfig> {
        Ok(GridConfig::square(self.pillar_size, self.extent)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Translation bound per axis in meters.
    #[arg(long, default_value_t = 2.0)]
    pub max_translation: f64,
    /// Source neighbours per pillar (M).
    #[arg(long, default_value_t = 8)]
    pub m_neighbors: usize,
    /// Target candidates per neighbour (N).
    #[arg(long, default_value_t = 128)]
    pub n_neighbors: usize,
    /// Ball-query radius; defaults to the corner of the translation square.
    #[arg(long)]
    pub ball_radius: Option<f64>,
    /// Soft-argmax temperature.
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    #[arg(long, value_enum, default_value = "soft-argmax")]
    pub extraction: ExtractionArg,
    /// Fuse votes over connected pillar clusters.
    #[arg(long, value_enum, default_value = "on")]
    pub cluster: Switch,
    /// Same as `--cluster off`.
    #[arg(long)]
    pub no_cluster: bool,
    /// Flows shorter than this many meters are zeroed.
    #[arg(long, default_value_t = 0.04)]
    pub static_threshold: f64,
    #[arg(long, value_enum, default_value = "centered")]
    pub layout: LayoutArg,
    /// Seconds between the two scans.
    #[arg(long, default_value_t = DEFAULT_FRAME_INTERVAL)]
    pub frame_interval: f64,
}

impl PipelineArgs {
    pub fn config(&self) -> CliResult<PipelineConfig> {
        let grid = self.grid.config()?;
        let mut cfg = PipelineConfig::new(grid);
        cfg.vote = VoteConfig::new(grid.cell_size())
            .with_max_translation([self.max_translation, self.max_translation]);
        cfg.vote.m_neighbors = self.m_neighbors;
        cfg.vote.n_candidates = self.n_neighbors;
        if let Some(r) = self.ball_radius {
            cfg.vote.ball_radius = r;
        }
        cfg.vote.temperature = self.temperature;
        cfg.vote.layout = match self.layout {
            LayoutArg::Centered => BinLayout::Centered,
            LayoutArg::Even => BinLayout::Even,
        };
        cfg.extraction = match self.extraction {
            ExtractionArg::Argmax => Extraction::Argmax,
            ExtractionArg::SoftArgmax => Extraction::SoftArgmax,
        };
        cfg.cluster_fusion = self.cluster == Switch::On && !self.no_cluster;
        cfg.static_gate = self.static_threshold;
        cfg.frame_interval = self.frame_interval;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ThreadArgs {
    /// Worker threads; 0 or unset uses every core.
    #[arg(long, env = "PILLARVOTE_THREADS")]
    pub threads: Option<usize>,
}

impl ThreadArgs {
    /// Runs `f` on a pool capped at the requested width.
    pub fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> CliResult<T> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            b = b.num_threads(n);
        }
        let pool = b
            .build()
            .map_err(|e| CliError::Contract(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Everything needed to replay a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub timings_ms: Vec<StageTiming>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            timings_ms: Vec::new(),
        }
    }

    fn input(&mut self, name: &str, p: &Path) {
        self.inputs.insert(name.into(), p.display().to_string());
    }

    fn output(&mut self, name: &str, p: &Path) {
        self.outputs.insert(name.into(), p.display().to_string());
    }

    fn write(&mut self, path: &Path) -> CliResult<()> {
        self.output("manifest", path);
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        std::fs::write(path, s).map_err(|e| CliError::io(path, e))
    }
}

/// Stopwatch that records named stages.
struct Stages {
    last: Instant,
    done: Vec<StageTiming>,
}

impl Stages {
    fn start() -> Self {
        Self {
            last: Instant::now(),
            done: Vec::new(),
        }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.done.push(StageTiming {
            stage: stage.into(),
            ms: (now - self.last).as_secs_f64() * 1e3,
        });
        self.last = now;
    }

    fn total(&self) -> f64 {
        self.done.iter().map(|s| s.ms).sum()
    }

    fn print(&self) {
        for s in &self.done {
            println!("{:<12}{:>10.2} ms", s.stage, s.ms);
        }
        println!("{:<12}{:>10.2} ms", "total", self.total());
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

fn config_json(cfg: &PipelineConfig) -> serde_json::Value {
    json!({
        "pillar_size": cfg.grid.cell_size(),
        "extent": cfg.grid.extent(),
        "grid": [cfg.grid.width(), cfg.grid.height()],
        "max_translation": cfg.vote.max_translation,
        "m_neighbors": cfg.vote.m_neighbors,
        "n_neighbors": cfg.vote.n_candidates,
        "ball_radius": cfg.vote.ball_radius,
        "temperature": cfg.vote.temperature,
        "layout": match cfg.vote.layout { BinLayout::Centered => "centered", BinLayout::Even => "even" },
        "extraction": match cfg.extraction { Extraction::Argmax => "argmax", Extraction::SoftArgmax => "soft-argmax" },
        "cluster": cfg.cluster_fusion,
        "static_threshold": cfg.static_gate,
        "frame_interval": cfg.frame_interval,
    })
}

fn load(path: &Path) -> CliResult<PointCloud> {
    load_point_cloud(path, CloudFormat::from_path(path))
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Scan at time t (.csv or .vfpc).
    #[arg(long)]
    pub src: PathBuf,
    /// Scan at time t + dt.
    #[arg(long)]
    pub tgt: PathBuf,
    /// Flow CSV to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// External features for source pillars.
    #[arg(long)]
    pub src_features: Option<PathBuf>,
    /// External features for target pillars.
    #[arg(long)]
    pub tgt_features: Option<PathBuf>,
    /// Dump the voting space of the source pillar at this cell index.
    #[arg(long, value_name = "CELL")]
    pub dump_votes: Vec<u64>,
    /// Dump the fused voting space of this cluster id.
    #[arg(long, value_name = "ID")]
    pub dump_votes_cluster: Vec<usize>,
    /// Directory for vote dumps; defaults to the flow file's directory.
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
    /// Skip the timing table.
    #[arg(long, short)]
    pub quiet: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

pub fn cmd_estimate(a: &EstimateArgs) -> CliResult<()> {
    let cfg = a.pipeline.config()?;
    let mut manifest = RunManifest::new("estimate", config_json(&cfg));
    manifest.config["threads"] = json!(a.threads.threads);
    let mut t = Stages::start();

    let src = load(&a.src)?;
    let tgt = load(&a.tgt)?;
    manifest.input("src", &a.src);
    manifest.input("tgt", &a.tgt);
    let src_feat = a.src_features.as_deref().map(load_features).transpose()?;
    let tgt_feat = a.tgt_features.as_deref().map(load_features).transpose()?;
    if let Some(p) = &a.src_features {
        manifest.input("src_features", p);
    }
    if let Some(p) = &a.tgt_features {
        manifest.input("tgt_features", p);
    }
    t.lap("load");

    let (est, flow) = a.threads.run(|| -> CliResult<_> {
        let mut sg = pillarize(&src, &cfg.grid);
        let mut tg = pillarize(&tgt, &cfg.grid);
        if let Some(f) = &src_feat {
            sg = sg.with_feature_overrides(f)?;
        }
        if let Some(f) = &tgt_feat {
            tg = tg.with_feature_overrides(f)?;
        }
        t.lap("pillarize");
        let est = SceneFlowEstimator::from_grids(sg, tg, &cfg)?;
        t.lap("vote");
        let translations = est.pillar_translations();
        t.lap("extract");
        let flow = est.assemble(&translations)?;
        t.lap("assemble");
        Ok((est, flow))
    })??;

    save_flow(&a.out, &flow)?;
    manifest.output("flow", &a.out);
    t.lap("write");

    let dir = a
        .dump_dir
        .clone()
        .unwrap_or_else(|| a.out.parent().map(Path::to_path_buf).unwrap_or_default());
    if !(a.dump_votes.is_empty() && a.dump_votes_cluster.is_empty()) {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    for cell in &a.dump_votes {
        let Some(k) = est.source_grid().find(*cell) else {
            return Err(CliError::Data(format!("cell {cell} has no source points")));
        };
        for p in dump_votes(&est.voting_space(k), &dir.join(format!("votes_cell_{cell}")))? {
            manifest.output(&p.file_name().unwrap().to_string_lossy(), &p);
        }
    }
    for id in &a.dump_votes_cluster {
        if *id >= est.clusters().len() {
            return Err(CliError::Data(format!(
                "cluster {id} does not exist ({} clusters)",
                est.clusters().len()
            )));
        }
        for p in dump_votes(&est.cluster_voting_space(*id), &dir.join(format!("votes_cluster_{id}")))? {
            manifest.output(&p.file_name().unwrap().to_string_lossy(), &p);
        }
    }
    if !(a.dump_votes.is_empty() && a.dump_votes_cluster.is_empty()) {
        t.lap("dump");
    }

    manifest.timings_ms = t.done.clone();
    manifest.config["pillars"] = json!(est.source_grid().len());
    manifest.config["clusters"] = json!(est.clusters().len());
    manifest.write(&a.manifest.clone().unwrap_or_else(|| manifest_path(&a.out)))?;
    if !a.quiet {
        println!(
            "points {}  pillars {}  clusters {}  sparsity {:.4}",
            src.len(),
            est.source_grid().len(),
            est.clusters().len(),
            sparsity(est.source_grid())
        );
        t.print();
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricsArg {
    /// Whatever the gt labels allow.
    Auto,
    ThreeWay,
    Bucketed,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predicted flow CSV.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth cloud with fx, fy, fz columns.
    #[arg(long)]
    pub gt: PathBuf,
    /// JSON report to write.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub metrics: MetricsArg,
    #[arg(long, default_value_t = DEFAULT_FRAME_INTERVAL)]
    pub frame_interval: f64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, short)]
    pub quiet: bool,
}

/// Evaluates `pred` against the labels carried by `gt`.
pub fn evaluate(pred: &FlowField, gt: &PointCloud, metrics: MetricsArg) -> CliResult<EvalReport> {
    let gt_flow = gt
        .gt_flow_field(pred.frame_interval())
        .ok_or_else(|| CliError::Data("gt flow columns fx,fy,fz required".into()))?;
    if pred.len() != gt.len() {
        return Err(CliError::Data(format!(
            "prediction has {} rows but the gt cloud has {} points",
            pred.len(),
            gt.len()
        )));
    }
    let (want_fg, want_class) = match metrics {
        MetricsArg::Auto => (gt.is_foreground().is_some(), gt.class_id().is_some()),
        MetricsArg::ThreeWay => (true, false),
        MetricsArg::Bucketed => (false, true),
        MetricsArg::All => (true, true),
    };
    let fg = want_fg
        .then(|| gt.is_foreground().ok_or_else(|| CliError::Data("foreground column required".into())))
        .transpose()?;
    let class = want_class
        .then(|| gt.class_id().ok_or_else(|| CliError::Data("class column required".into())))
        .transpose()?;
    Ok(EvalReport::evaluate(pred, &gt_flow, fg, class)?)
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new(
        "eval",
        json!({ "metrics": format!("{:?}", a.metrics).to_lowercase(), "frame_interval": a.frame_interval }),
    );
    let mut t = Stages::start();
    let pred = load_flow(&a.pred, a.frame_interval)?;
    let gt = load(&a.gt)?;
    manifest.input("pred", &a.pred);
    manifest.input("gt", &a.gt);
    t.lap("load");
    let report = evaluate(&pred, &gt, a.metrics)?;
    t.lap("evaluate");
    std::fs::write(&a.out, report_json(&report)).map_err(|e| CliError::io(&a.out, e))?;
    manifest.output("report", &a.out);
    t.lap("write");
    manifest.timings_ms = t.done;
    manifest.write(&a.manifest.clone().unwrap_or_else(|| manifest_path(&a.out)))?;
    if !a.quiet {
        print!("{}", summary_table(&report));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// 100k points: structures, cars, cyclists, pedestrians.
    Driving,
    /// Background only; both scans identical.
    Static,
    /// One 4 x 2 m box over sparse background.
    OneMover,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "driving")]
    pub preset: Preset,
    /// Scene spec JSON; replaces the preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the noise sigma in meters.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Override the background point count.
    #[arg(long)]
    pub background: Option<usize>,
    /// Mover translation `dx,dy` for the one-mover preset.
    #[arg(long, value_name = "DX,DY", allow_hyphen_values = true, default_value = "0.6,-0.4", value_parser = parse_pair)]
    pub translation: [f64; 2],
    /// Source scan to write (.csv or .vfpc).
    #[arg(long)]
    pub out_src: PathBuf,
    /// Target scan to write.
    #[arg(long)]
    pub out_tgt: PathBuf,
    /// Spec JSON to write; defaults to `<out-src>.spec.json`.
    #[arg(long)]
    pub out_spec: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

pub fn preset_spec(preset: Preset, seed: u64, translation: [f64; 2]) -> SceneSpec {
    match preset {
        Preset::Driving => SceneSpec::driving(seed),
        Preset::Static => SceneSpec {
            background: BackgroundSpec {
                count: 10_000,
                seed: seed.wrapping_add(1),
                structures: 30,
                clearance: 0.0,
            },
            rng_seed: seed,
            ..SceneSpec::default()
        },
        Preset::OneMover => SceneSpec {
            movers: vec![MoverSpec {
                dims: [4.0, 2.0, 1.5],
                density: 30.0,
                surface: false,
                center: [5.0, 3.0],
                translation,
                class_id: 1,
            }],
            background: BackgroundSpec {
                count: 5_000,
                seed: seed.wrapping_add(1),
                structures: 20,
                clearance: 1.0,
            },
            rng_seed: seed,
            ..SceneSpec::default()
        },
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v[..] {
        [dx, dy] if dx.is_finite() && dy.is_finite() => Ok([dx, dy]),
        _ => Err("expected two finite numbers `dx,dy`".into()),
    }
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::at(p, e))?
        }
        None => preset_spec(a.preset, a.seed, a.translation),
    };
    if let Some(n) = a.noise {
        spec.noise_sigma = n;
    }
    if let Some(n) = a.background {
        spec.background.count = n;
    }
    let mut t = Stages::start();
    let pair = generate_scene_pair(&spec).map_err(|e| CliError::Data(format!("invalid scene spec: {e}")))?;
    t.lap("generate");
    save_point_cloud(&a.out_src, &pair.source, CloudFormat::from_path(&a.out_src))?;
    save_point_cloud(&a.out_tgt, &pair.target, CloudFormat::from_path(&a.out_tgt))?;
    let spec_path = a.out_spec.clone().unwrap_or_else(|| a.out_src.with_extension("spec.json"));
    let mut text = serde_json::to_string_pretty(&spec).expect("spec serializes");
    text.push('\n');
    std::fs::write(&spec_path, text).map_err(|e| CliError::io(&spec_path, e))?;
    t.lap("write");

    let mut manifest = RunManifest::new("synth", serde_json::to_value(&spec).expect("spec serializes"));
    if let Some(p) = &a.spec {
        manifest.input("spec", p);
    }
    manifest.output("src", &a.out_src);
    manifest.output("tgt", &a.out_tgt);
    manifest.output("spec", &spec_path);
    manifest.timings_ms = t.done;
    manifest.write(&a.manifest.clone().unwrap_or_else(|| manifest_path(&a.out_src)))?;
    println!(
        "source {} points, target {} points, {} movers",
        pair.source.len(),
        pair.target.len(),
        spec.movers.len()
    );
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    /// Source scans; paired with `--tgt` in order.
    #[arg(long)]
    pub src: Vec<PathBuf>,
    #[arg(long)]
    pub tgt: Vec<PathBuf>,
    /// Also run on generated driving scenes with these seeds.
    #[arg(long, value_delimiter = ',')]
    pub driving_seeds: Vec<u64>,
    /// Comma-separated pillar sizes; an empty list yields no rows.
    #[arg(long, default_value = "0.2")]
    pub pillar_sizes: String,
    #[arg(long, default_value = "8")]
    pub m_neighbors: String,
    #[arg(long, default_value = "128")]
    pub n_neighbors: String,
    #[arg(long, default_value = "0.1")]
    pub temperatures: String,
    /// Any of `argmax`, `soft-argmax`.
    #[arg(long, default_value = "soft-argmax")]
    pub extractions: String,
    /// Any of `on`, `off`.
    #[arg(long, default_value = "on")]
    pub cluster: String,
    #[arg(long, default_value_t = 51.2)]
    pub extent: f64,
    #[arg(long, default_value_t = 2.0)]
    pub max_translation: f64,
    #[arg(long, default_value_t = 0.04)]
    pub static_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_FRAME_INTERVAL)]
    pub frame_interval: f64,
    /// Runs per combination; the fastest is reported.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
    /// Consolidated CSV to write.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

fn parse_list<T>(flag: &str, s: &str, parse: impl Fn(&str) -> Option<T>) -> CliResult<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(v).ok_or_else(|| CliError::Usage(format!("--{flag}: bad value {v:?}"))))
        .collect()
}

pub const SWEEP_HEADER: &str = "scene,pillar_size,m_neighbors,n_neighbors,temperature,extraction,cluster,\
points,pillars,sparsity,mean_epe,fd,fs,bs,dynamic_normalized_epe,latency_ms";

struct Scene {
    name: String,
    src: PointCloud,
    tgt: PointCloud,
}

pub fn cmd_sweep(a: &SweepArgs) -> CliResult<()> {
    let sizes = parse_list("pillar-sizes", &a.pillar_sizes, |v| v.parse::<f64>().ok())?;
    let ms = parse_list("m-neighbors", &a.m_neighbors, |v| v.parse::<usize>().ok())?;
    let ns = parse_list("n-neighbors", &a.n_neighbors, |v| v.parse::<usize>().ok())?;
    let temps = parse_list("temperatures", &a.temperatures, |v| v.parse::<f64>().ok())?;
    let extractions = parse_list("extractions", &a.extractions, |v| ExtractionArg::from_str(v, false).ok())?;
    let clusters = parse_list("cluster", &a.cluster, |v| Switch::from_str(v, false).ok())?;
    if a.src.len() != a.tgt.len() {
        return Err(CliError::Usage(format!(
            "{} --src but {} --tgt; they pair up in order",
            a.src.len(),
            a.tgt.len()
        )));
    }
    if a.repeat == 0 {
        return Err(CliError::Usage("--repeat must be at least 1".into()));
    }

    let mut manifest = RunManifest::new(
        "sweep",
        json!({
            "pillar_sizes": sizes, "m_neighbors": ms, "n_neighbors": ns, "temperatures": temps,
            "extractions": extractions.iter().map(|e| e.name()).collect::<Vec<_>>(),
            "cluster": clusters.iter().map(|c| *c == Switch::On).collect::<Vec<_>>(),
            "extent": a.extent, "max_translation": a.max_translation,
            "static_threshold": a.static_threshold, "frame_interval": a.frame_interval,
            "repeat": a.repeat, "threads": a.threads.threads,
        }),
    );
    let mut t = Stages::start();
    let mut scenes = Vec::new();
    for (i, (s, g)) in a.src.iter().zip(&a.tgt).enumerate() {
        manifest.input(&format!("src{i}"), s);
        manifest.input(&format!("tgt{i}"), g);
        scenes.push(Scene {
            name: s.file_stem().map_or(format!("scene{i}"), |n| n.to_string_lossy().into_owned()),
            src: load(s)?,
            tgt: load(g)?,
        });
    }
    for seed in &a.driving_seeds {
        let pair = generate_scene_pair(&SceneSpec::driving(*seed))?;
        scenes.push(Scene {
            name: format!("driving{seed}"),
            src: pair.source,
            tgt: pair.target,
        });
    }
    t.lap("load");

    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| round6(v).to_string());
    for scene in &scenes {
        for &size in &sizes {
            for &m in &ms {
                for &n in &ns {
                    for &temp in &temps {
                        for &ex in &extractions {
                            for &cl in &clusters {
                                let args = PipelineArgs {
                                    grid: GridArgs {
                                        pillar_size: size,
                                        extent: a.extent,
                                    },
                                    max_translation: a.max_translation,
                                    m_neighbors: m,
                                    n_neighbors: n,
                                    ball_radius: None,
                                    temperature: temp,
                                    extraction: ex,
                                    cluster: cl,
                                    no_cluster: false,
                                    static_threshold: a.static_threshold,
                                    layout: LayoutArg::Centered,
                                    frame_interval: a.frame_interval,
                                };
                                let cfg = args.config()?;
                                let mut best = f64::INFINITY;
                                let mut result = None;
                                for _ in 0..a.repeat {
                                    let start = Instant::now();
                                    let r = a.threads.run(|| -> CliResult<_> {
                                        let est = SceneFlowEstimator::new(&scene.src, &scene.tgt, &cfg)?;
                                        let flow = est.estimate()?;
                                        Ok((est.source_grid().len(), sparsity(est.source_grid()), flow))
                                    })??;
                                    best = best.min(start.elapsed().as_secs_f64() * 1e3);
                                    result = Some(r);
                                }
                                let (pillars, sp, flow) = result.expect("repeat >= 1");
                                let report = scene
                                    .src
                                    .gt_flow()
                                    .is_some()
                                    .then(|| evaluate(&flow, &scene.src, MetricsArg::Auto))
                                    .transpose()?;
                                let mean_epe = report.as_ref().and_then(|_| {
                                    let gt = scene.src.gt_flow_field(flow.frame_interval())?;
                                    let e = pillarvote_core::epe(&flow, &gt).ok()?;
                                    Some(e.iter().sum::<f64>() / e.len().max(1) as f64)
                                });
                                let tw = report.as_ref().and_then(|r| r.three_way);
                                let dyn_norm = report.as_ref().and_then(|r| r.bucketed.as_ref()).and_then(|b| {
                                    let v: Vec<f64> = b.values().filter_map(|c| c.dynamic_normalized_epe).collect();
                                    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
                                });
                                writeln!(
                                    out,
                                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3}",
                                    scene.name,
                                    size,
                                    m,
                                    n,
                                    temp,
                                    ex.name(),
                                    if cl == Switch::On { "on" } else { "off" },
                                    scene.src.len(),
                                    pillars,
                                    round6(sp),
                                    opt(mean_epe),
                                    opt(tw.and_then(|t| t.fd)),
                                    opt(tw.and_then(|t| t.fs)),
                                    opt(tw.and_then(|t| t.bs)),
                                    opt(dyn_norm),
                                    best
                                )
                                .unwrap();
                            }
                        }
                    }
                }
            }
        }
    }
    t.lap("sweep");
    std::fs::write(&a.out, out).map_err(|e| CliError::io(&a.out, e))?;
    manifest.output("results", &a.out);
    t.lap("write");
    manifest.timings_ms = t.done.clone();
    manifest.write(&a.manifest.clone().unwrap_or_else(|| manifest_path(&a.out)))?;
    t.print();
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ObjectivesArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    /// Flow CSV for the source scan.
    #[arg(long)]
    pub flow: PathBuf,
    /// Dynamic mask CSV; defaults to the source's `dynamic` column.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// JSON to write; printed either way.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = DEFAULT_FRAME_INTERVAL)]
    pub frame_interval: f64,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

pub fn cmd_objectives(a: &ObjectivesArgs) -> CliResult<()> {
    let grid_cfg = a.grid.config()?;
    let src = load(&a.src)?;
    let tgt = load(&a.tgt)?;
    let flow = load_flow(&a.flow, a.frame_interval)?;
    if flow.len() != src.len() {
        return Err(CliError::Data(format!(
            "flow has {} rows but the source has {} points",
            flow.len(),
            src.len()
        )));
    }
    let dynamic = match &a.mask {
        Some(p) => load_mask(p)?,
        None => src
            .is_dynamic()
            .map(<[bool]>::to_vec)
            .ok_or_else(|| CliError::Data("dynamic mask required (--mask or a dynamic column)".into()))?,
    };
    if dynamic.len() != src.len() {
        return Err(CliError::Data(format!(
            "mask has {} rows but the source has {} points",
            dynamic.len(),
            src.len()
        )));
    }
    let r = a.threads.run(|| -> CliResult<_> {
        let grid = pillarize(&src, &grid_cfg);
        let clusters = pillarvote_core::cluster_pillars(&grid);
        Ok(total_objective(&src, &tgt, &flow, &dynamic, &clusters, &grid)?)
    })??;
    let v = json!({
        "chamfer": round6(r.chamfer),
        "dynamic_chamfer": round6(r.dynamic_chamfer),
        "static_penalty": round6(r.static_penalty),
        "cluster_penalty": round6(r.cluster_penalty),
        "total": round6(r.total),
    });
    let mut s = serde_json::to_string_pretty(&v).expect("json");
    s.push('\n');
    if let Some(p) = &a.out {
        std::fs::write(p, &s).map_err(|e| CliError::io(p, e))?;
    }
    print!("{s}");
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Objectives(a) => cmd_objectives(a),
    }
}

/// The flow CSV `estimate` would write, computed in memory.
pub fn estimate_flow_csv(src: &PointCloud, tgt: &PointCloud, cfg: &PipelineConfig) -> CliResult<String> {
    let est = SceneFlowEstimator::new(src, tgt, cfg)?;
    Ok(flow_csv(&est.estimate()?))
}
