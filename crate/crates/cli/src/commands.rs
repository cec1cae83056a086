use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fpseg::data::{generate_synthetic, load_dataset, save_scene, split_dataset, DatasetSplit, SplitRule, SynthParams};
use fpseg::distxform::io::{read_class_png, read_mask_png, write_class_png, write_mask_png, write_sdt};
use fpseg::distxform::{decode_mask, quantize, signed_truncated_distance};
use fpseg::eval::{evaluate_pairs, predict_scene, DecodeRule, MetricsReport};
use fpseg::net::checkpoint;
use fpseg::trainer::{gradcheck, run_experiment, TrainConfig};
use fpseg::{BinSpec, Error, LossMode, Mask, Model, Scene};

use crate::report::ComparisonTable;

pub const DATA_ROOT_ENV: &str = "FPSEG_DATA_ROOT";

#[derive(Debug, Parser)]
#[command(name = "fpseg", version, about = "Building footprint segmentation with distance-class supervision")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset in the images/ + gt/ layout.
    Synth(SynthArgs),
    /// Encode masks into distance-class PNGs and signed-distance rasters.
    Encode(EncodeArgs),
    /// Train one regime.
    Train(TrainArgs),
    /// Write stitched full-scene masks, or decode distance-class PNGs.
    Predict(PredictArgs),
    /// Score a checkpoint or a directory of predicted masks.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences on a small network.
    Gradcheck(GradcheckArgs),
    /// Tabulate metric reports of several runs by regime.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 250)]
    pub count: usize,
    #[arg(long, default_value_t = 128)]
    pub extent: usize,
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CodecArgs {
    /// Truncation radius R in pixels.
    #[arg(long, default_value_t = 20.0)]
    pub radius: f64,
    /// Number of distance classes K (even).
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Directory of mask PNGs.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub codec: CodecArgs,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset root holding images/ and gt/.
    #[arg(long, env = DATA_ROOT_ENV)]
    pub data_root: PathBuf,
    /// `standard` (indices 1-5 validate) or `ratio:<train fraction>:<seed>`.
    #[arg(long, default_value = "standard", value_parser = parse_split)]
    pub split: SplitRule,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Flat `key = value` config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<LossMode>,
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Validation,
    Train,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Head {
    Seg,
    Dist,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, required_unless_present = "from_classes", conflicts_with = "from_classes")]
    pub checkpoint: Option<PathBuf>,
    /// Decode distance-class PNGs from this directory instead of running a network.
    #[arg(long)]
    pub from_classes: Option<PathBuf>,
    #[arg(long, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    #[arg(long, default_value = "standard", value_parser = parse_split)]
    pub split: SplitRule,
    #[arg(long, value_enum, default_value = "validation")]
    pub subset: Subset,
    #[arg(long, default_value_t = 128)]
    pub patch: usize,
    /// First distance class counted as building; defaults to K/2.
    #[arg(long)]
    pub threshold_bin: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Directory of `<scene id>.png` masks to score instead of a checkpoint.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 128)]
    pub patch: usize,
    /// Which head to decode; defaults to the segmentation head when present.
    #[arg(long, value_enum)]
    pub head: Option<Head>,
    #[arg(long)]
    pub threshold_bin: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Negative control: flip one analytic gradient before comparing.
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `<mode>=<report.json>`, one per run.
    #[arg(required = true, value_parser = parse_entry)]
    pub runs: Vec<(LossMode, PathBuf)>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<LossMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> Result<SplitRule, String> {
    if s == "standard" {
        return Ok(SplitRule::STANDARD);
    }
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["ratio", f, seed] => {
            let train_fraction: f64 = f.parse().map_err(|_| format!("bad fraction {f:?}"))?;
            if !(0.0..=1.0).contains(&train_fraction) {
                return Err(format!("fraction {train_fraction} outside [0, 1]"));
            }
            let seed = seed.parse().map_err(|_| format!("bad seed {seed:?}"))?;
            Ok(SplitRule::Ratio { train_fraction, seed })
        }
        _ => Err(format!("expected `standard` or `ratio:<fraction>:<seed>`, got {s:?}")),
    }
}

fn parse_entry(s: &str) -> Result<(LossMode, PathBuf), String> {
    let (mode, path) = s.split_once('=').ok_or_else(|| format!("expected <mode>=<path>, got {s:?}"))?;
    Ok((parse_mode(mode)?, PathBuf::from(path)))
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(Error),
    /// A verification command ran and its check did not pass.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CmdResult = Result<(), Failure>;

/// Parses and runs; returns the exit code (0 ok, 1 usage, 2 runtime).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
        Err(Failure::Check(m)) => {
            eprintln!("{m}");
            2
        }
    }
}

pub fn execute(cmd: Command) -> CmdResult {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Encode(a) => encode(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Gradcheck(a) => grad_check(a),
        Command::Report(a) => report(a),
    }
}

fn load_split(data: &DataArgs) -> Result<DatasetSplit, Failure> {
    let scenes = load_dataset(&data.data_root)?;
    Ok(split_dataset(scenes, data.split)?)
}

fn synth(a: SynthArgs) -> CmdResult {
    let params = SynthParams::default();
    println!("synth: out = {}, count = {}, extent = {}", a.out.display(), a.count, a.extent);
    println!("seed = {}", a.seed);
    let scenes = generate_synthetic(a.count, a.extent, a.seed, &params)?;
    for s in &scenes {
        save_scene(&a.out, s)?;
    }
    let manifest = serde_json::json!({
        "seed": a.seed,
        "count": a.count,
        "extent": a.extent,
        "params": params,
    });
    fs::write(a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {} scenes", scenes.len());
    Ok(())
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn encode(a: EncodeArgs) -> CmdResult {
    let bins = BinSpec::new(a.codec.bins, a.codec.radius)?;
    println!(
        "encode: input = {}, out = {}, radius = {}, bins = {}",
        a.input.display(),
        a.out.display(),
        a.codec.radius,
        a.codec.bins
    );
    println!("seed = none (deterministic)");
    let (classes_dir, sdt_dir) = (a.out.join("classes"), a.out.join("sdt"));
    fs::create_dir_all(&classes_dir)?;
    fs::create_dir_all(&sdt_dir)?;
    for path in png_files(&a.input)? {
        let name = path.file_name().unwrap();
        let mask = read_mask_png(&path)?;
        let sdm = signed_truncated_distance(&mask, bins.radius())?;
        let dcm = quantize(&sdm, &bins)?;
        write_class_png(&classes_dir.join(name), &dcm)?;
        write_sdt(&sdt_dir.join(Path::new(name).with_extension("sdt")), &sdm)?;
        println!("{}: {:?}", name.to_string_lossy(), dcm.histogram());
    }
    Ok(())
}

pub fn resolve_train_config(a: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::parse(&fs::read_to_string(p)?)?,
        None => TrainConfig::default(),
    };
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(p) = &a.init_from {
        cfg.init_from = Some(p.clone());
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.radius {
        cfg.radius = r;
    }
    if let Some(k) = a.bins {
        cfg.bins = k;
    }
    if let Some(n) = a.max_iters {
        cfg.max_iters = n;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn train(a: TrainArgs) -> CmdResult {
    let cfg = resolve_train_config(&a)?;
    print!("{}", cfg.render());
    println!("split = {}", a.data.split.describe());
    println!("seed = {}", cfg.seed);
    let split = load_split(&a.data)?;
    println!("train scenes = {}, validation scenes = {}", split.train.len(), split.validation.len());
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("config.cfg"), cfg.render())?;
    let run = run_experiment(&split.train, &cfg, Some(&a.out), |r| {
        if r.iter % 100 == 0 || r.iter + 1 == cfg.max_iters {
            println!(
                "iter {:>6}  loss {:.5}  lr {:.2e}  s_seg {:+.4}  s_dist {:+.4}",
                r.iter, r.total, r.lr, r.s_seg, r.s_dist
            );
        }
    })?;
    if let Some(rep) = &run.init {
        println!(
            "init: loaded {}, kept fresh {:?}, ignored {:?}",
            rep.loaded.len(),
            rep.kept,
            rep.ignored
        );
    }
    for c in &run.checkpoints {
        println!("checkpoint {}", c.display());
    }
    Ok(())
}

fn decode_rule(model: &Model, head: Option<Head>, threshold: Option<usize>) -> DecodeRule {
    let dist = DecodeRule::DistThreshold(threshold.unwrap_or(model.config().num_distance_classes / 2));
    match head {
        Some(Head::Seg) => DecodeRule::SegArgmax,
        Some(Head::Dist) => dist,
        None => match DecodeRule::for_model(model) {
            DecodeRule::DistThreshold(_) => dist,
            r => r,
        },
    }
}

fn subset(split: DatasetSplit, which: Subset) -> Vec<Scene> {
    match which {
        Subset::Validation => split.validation,
        Subset::Train => split.train,
        Subset::All => split.train.into_iter().chain(split.validation).collect(),
    }
}

fn predict(a: PredictArgs) -> CmdResult {
    fs::create_dir_all(&a.out)?;
    if let Some(dir) = &a.from_classes {
        let bins = BinSpec::new(a.bins, 20.0)?;
        let t = a.threshold_bin.unwrap_or(a.bins / 2);
        println!("predict: decode {} with threshold bin {t} of {}", dir.display(), a.bins);
        println!("seed = none (deterministic)");
        for path in png_files(dir)? {
            let dcm = read_class_png(&path, &bins)?;
            write_mask_png(&a.out.join(path.file_name().unwrap()), &decode_mask(&dcm, t)?)?;
        }
        return Ok(());
    }
    let ckpt = a.checkpoint.as_ref().expect("clap requires a checkpoint");
    let root = a
        .data_root
        .clone()
        .ok_or_else(|| Failure::Usage(format!("--data-root or {DATA_ROOT_ENV} is required")))?;
    let model = checkpoint::load_model(ckpt)?;
    let k = model.config().num_distance_classes;
    let t = a.threshold_bin.unwrap_or(k / 2);
    println!(
        "predict: checkpoint = {}, data = {}, split = {}, subset = {:?}, patch = {}, threshold bin = {t}",
        ckpt.display(),
        root.display(),
        a.split.describe(),
        a.subset,
        a.patch
    );
    println!("seed = none (deterministic)");
    let scenes = subset(split_dataset(load_dataset(&root)?, a.split)?, a.subset);
    let heads = model.config().heads;
    let mut rules = Vec::new();
    if heads.has_seg() {
        rules.push(("seg", DecodeRule::SegArgmax));
    }
    if heads.has_dist() {
        rules.push(("dist", DecodeRule::DistThreshold(t)));
    }
    for (name, _) in &rules {
        fs::create_dir_all(a.out.join(name))?;
    }
    for s in &scenes {
        for (name, rule) in &rules {
            let m = predict_scene(&model, s, a.patch, *rule)?;
            write_mask_png(&a.out.join(name).join(format!("{}.png", s.id)), &m)?;
        }
    }
    println!("wrote {} scenes", scenes.len());
    Ok(())
}

fn eval(a: EvalArgs) -> CmdResult {
    let split = load_split(&a.data)?;
    let scenes = split.validation;
    let report = match (&a.checkpoint, &a.predictions) {
        (Some(ckpt), _) => {
            let model = checkpoint::load_model(ckpt)?;
            let rule = decode_rule(&model, a.head, a.threshold_bin);
            println!(
                "eval: checkpoint = {}, split = {}, patch = {}, decode = {rule:?}",
                ckpt.display(),
                a.data.split.describe(),
                a.patch
            );
            println!("seed = none (deterministic)");
            let preds = scenes
                .iter()
                .map(|s| predict_scene(&model, s, a.patch, rule))
                .collect::<fpseg::Result<Vec<Mask>>>()?;
            evaluate_pairs(scenes.iter().zip(&preds).map(|(s, p)| (s.location.as_str(), p, &s.mask)))?
        }
        (None, Some(dir)) => {
            println!("eval: predictions = {}, split = {}", dir.display(), a.data.split.describe());
            println!("seed = none (deterministic)");
            let preds = scenes
                .iter()
                .map(|s| read_mask_png(&dir.join(format!("{}.png", s.id))))
                .collect::<fpseg::Result<Vec<Mask>>>()?;
            evaluate_pairs(scenes.iter().zip(&preds).map(|(s, p)| (s.location.as_str(), p, &s.mask)))?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    let text = serde_json::to_string_pretty(&report.to_json())?;
    println!("{text}");
    if let Some(p) = &a.out {
        fs::write(p, &text)?;
    }
    if let Some(p) = &a.csv {
        fs::write(p, report.to_csv())?;
    }
    Ok(())
}

fn grad_check(a: GradcheckArgs) -> CmdResult {
    println!("gradcheck: 2-stage cascade, 8x8 inputs, uncertainty-weighted loss, corrupt = {}", a.corrupt_gradient);
    println!("seed = {}", a.seed);
    let rep = gradcheck(a.seed, a.corrupt_gradient)?;
    for p in &rep.params {
        println!(
            "{:<24} n={:<5} max rel {:.3e}  max abs {:.3e}  refined {}",
            p.name, p.count, p.max_rel_err, p.max_abs_err, p.refined
        );
    }
    println!(
        "checked {} entries, unresolved {}, max relative error {:.3e} (tolerance {:.0e}): {}",
        rep.checked,
        rep.unresolved,
        rep.max_rel_err,
        rep.tolerance,
        if rep.passed { "PASS" } else { "FAIL" }
    );
    if rep.passed {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check failed: max relative error {:.3e}",
            rep.max_rel_err
        )))
    }
}

fn report(a: ReportArgs) -> CmdResult {
    println!("report: {} runs", a.runs.len());
    println!("seed = none (deterministic)");
    let mut runs = Vec::new();
    for (mode, path) in &a.runs {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        runs.push((*mode, MetricsReport::from_json(&v)?));
    }
    let table = ComparisonTable::build(&runs).render();
    print!("{table}");
    if let Some(p) = &a.out {
        fs::write(p, table)?;
    }
    Ok(())
}
