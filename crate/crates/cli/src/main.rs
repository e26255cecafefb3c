//! `bmvseg` command-line front end.

mod input;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bmvseg::eval::{
    intermediate_cost_reduction, miou, per_offset_miou, sweep_with_motion, throughput_model,
    CostModel, SweepOptions,
};
use bmvseg::fusion::{fit_conv_fusion, FitOptions};
use bmvseg::io::{
    load_labels, read_json, read_sidecar, save_frames, save_labels, sweep_svg, write_json,
    write_sidecar, write_sweep_csv, MotionSidecar, RasterFormat,
};
use bmvseg::pipeline::Component;
use bmvseg::{
    estimate_stream_motion, fusion_samples, run, FusionKind, FusionWeights, MatchParams,
    PipelineConfig, Scheme, SegModel, ToyFeatureNet, ToyModel,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use input::{load_input, load_model, training_seed, SceneArg};

#[derive(Parser)]
#[command(
    name = "bmvseg",
    version,
    about = "Video segmentation with block-motion feature propagation"
)]
struct Cli {
    /// Seed for scene rendering; outputs are deterministic given the seed.
    #[arg(long, global = true, default_value_t = bmvseg::eval::BENCHMARK_SEED)]
    seed: u64,

    /// Worker threads for pipeline runs.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    workers: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Block-match consecutive frames and write a motion sidecar.
    EstimateMotion(EstimateMotionArgs),
    /// Segment a frame directory with one scheme.
    Run(RunArgs),
    /// Score predicted label maps against ground truth.
    Evaluate(EvaluateArgs),
    /// Accuracy and throughput of every scheme over a range of intervals, as CSV.
    Sweep(SweepArgs),
    /// Component costs, the analytic throughput model and measured throughput.
    Bench(BenchArgs),
    /// Render a synthetic scene to frames and labels.
    MakeScene(MakeSceneArgs),
    /// Fit the reference model, and optionally a conv fusion kernel.
    FitModel(FitModelArgs),
}

#[derive(Args)]
struct MotionOpts {
    /// Block-matching search radius in pixels.
    #[arg(long, default_value_t = 16)]
    radius: usize,

    #[arg(long, default_value_t = bmvseg::BLOCK_SIZE)]
    block_size: usize,
}

impl MotionOpts {
    fn params(&self) -> Result<MatchParams> {
        Ok(MatchParams::new(self.block_size, self.radius)?)
    }
}

#[derive(Args)]
struct EstimateMotionArgs {
    frames: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    motion: MotionOpts,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Max,
    Avg,
    Conv,
}

impl From<FusionArg> for FusionKind {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Max => FusionKind::Max,
            FusionArg::Avg => FusionKind::Average,
            FusionArg::Conv => FusionKind::Conv,
        }
    }
}

#[derive(Args)]
struct FusionOpts {
    #[arg(long, value_enum, default_value_t = FusionArg::Avg)]
    fusion: FusionArg,

    /// Fusion weights JSON, as written by `fit-model --fusion-out`. Required
    /// for conv fusion.
    #[arg(long)]
    fusion_weights: Option<PathBuf>,
}

impl FusionOpts {
    fn weights(&self) -> Result<FusionWeights> {
        let kind = FusionKind::from(self.fusion);
        match &self.fusion_weights {
            Some(path) => {
                let w: FusionWeights = read_json(path)?;
                if w.kind() != kind {
                    bail!(
                        "{} holds {} weights but --fusion is {kind}",
                        path.display(),
                        w.kind()
                    );
                }
                Ok(w)
            }
            None if kind == FusionKind::Conv => {
                bail!("conv fusion needs --fusion-weights (see fit-model --fusion-out)")
            }
            None => Ok(FusionWeights::parameter_free(kind)?),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    frames: PathBuf,
    #[arg(long, value_parser = parse_scheme)]
    mode: Scheme,
    #[arg(long, default_value_t = 1)]
    interval: usize,
    #[command(flatten)]
    fusion: FusionOpts,
    /// Motion sidecar; estimated on the fly when absent.
    #[arg(long)]
    motion: Option<PathBuf>,
    #[command(flatten)]
    match_opts: MotionOpts,
    /// Model JSON; defaults to the model fitted on the bundled scene.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "pnm", value_parser = parse_format)]
    format: RasterFormat,
}

#[derive(Args)]
struct EvaluateArgs {
    predictions: PathBuf,
    ground_truth: PathBuf,
    #[arg(long)]
    classes: usize,
    /// Also report mIoU by offset from the keyframe for this interval.
    #[arg(long)]
    interval: Option<usize>,
}

#[derive(Args)]
struct SceneOpts {
    /// Scene spec JSON, a directory made by `make-scene`, or `benchmark`.
    #[arg(long, default_value = "benchmark")]
    scene: SceneArg,
    /// Class count for directories without a scene.json.
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scene: SceneOpts,
    /// Model JSON; fitted on a separately seeded render when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Keyframe intervals: `1..10`, `1..=10`, `2,4,8` or `4`.
    #[arg(long, default_value = "1..10", value_parser = parse_intervals)]
    intervals: Intervals,
    /// Comma-separated schemes to run.
    #[arg(long, value_delimiter = ',', default_values = ["baseline", "prop", "inter"], value_parser = parse_scheme)]
    schemes: Vec<Scheme>,
    #[command(flatten)]
    fusion: FusionOpts,
    #[command(flatten)]
    match_opts: MotionOpts,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Charge motion estimation time to the propagating schemes.
    #[arg(long)]
    include_motion_cost: bool,
    /// CSV destination; standard output when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write an SVG plot of accuracy against throughput.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    scene: SceneOpts,
    /// Model JSON; fitted on a separately seeded render when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "1..10", value_parser = parse_intervals)]
    intervals: Intervals,
    #[command(flatten)]
    match_opts: MotionOpts,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// Per-frame cost of an optical-flow network for the flow-based
    /// prediction, in ms. Defaults to the measured feature cost.
    #[arg(long)]
    flow_ms: Option<f64>,
    /// Charge motion estimation time to the propagating schemes.
    #[arg(long)]
    include_motion_cost: bool,
}

#[derive(Args)]
struct MakeSceneArgs {
    /// Scene spec JSON, or `benchmark` for the bundled scene.
    spec: String,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "pnm", value_parser = parse_format)]
    format: RasterFormat,
}

#[derive(Args)]
struct FitModelArgs {
    #[command(flatten)]
    scene: SceneOpts,
    #[arg(short, long)]
    output: PathBuf,
    /// Also fit a conv fusion kernel and write it here.
    #[arg(long)]
    fusion_out: Option<PathBuf>,
    /// Keyframe interval the fusion kernel is fitted at.
    #[arg(long, default_value_t = 4)]
    fusion_interval: usize,
    /// Singular values below this fraction of the largest count as zero.
    #[arg(long, default_value_t = 1e-12)]
    rank_tolerance: f64,
    #[command(flatten)]
    match_opts: MotionOpts,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    s.parse().map_err(|e: bmvseg::Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<RasterFormat, String> {
    s.parse().map_err(|e: bmvseg::Error| e.to_string())
}

/// A list of keyframe intervals given as one argument.
#[derive(Debug, Clone, PartialEq)]
struct Intervals(Vec<usize>);

fn parse_intervals(s: &str) -> std::result::Result<Intervals, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad interval '{t}'"))
    };
    let out: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        // Both `a..b` and `a..=b` include `b`.
        (num(a)?..=num(b.strip_prefix('=').unwrap_or(b))?).collect()
    } else {
        s.split(',')
            .map(num)
            .collect::<std::result::Result<_, _>>()?
    };
    if out.is_empty() || out.contains(&0) {
        return Err(format!("'{s}' must name intervals of at least 1"));
    }
    Ok(Intervals(out))
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn estimate_motion_cmd(args: &EstimateMotionArgs) -> Result<()> {
    let frames = bmvseg::io::load_frames(&args.frames)?;
    let start = Instant::now();
    let fields = estimate_stream_motion(&frames, &args.motion.params()?)?;
    let elapsed = start.elapsed();
    let sidecar = MotionSidecar::from_fields(fields)?;
    write_sidecar(&args.output, &sidecar)?;
    eprintln!(
        "{} frames, {}x{} blocks, {:.1} ms",
        frames.len(),
        sidecar.grid_w(),
        sidecar.grid_h(),
        elapsed.as_secs_f64() * 1e3
    );
    Ok(())
}

fn run_cmd(cli: &Cli, args: &RunArgs) -> Result<()> {
    let frames = bmvseg::io::load_frames(&args.frames)?;
    let model = load_model(args.model.as_deref())?;
    let motion = match &args.motion {
        Some(path) => read_sidecar(path)?.into_fields(),
        None => estimate_stream_motion(&frames, &args.match_opts.params()?)?,
    };
    let config = PipelineConfig::new(args.mode, args.interval, model.num_classes())?
        .with_fusion(args.fusion.weights()?)
        .with_workers(cli.workers as usize);
    let result = run(
        &frames,
        &motion,
        &config,
        SegModel::new(&ToyFeatureNet, &model),
    )?;
    save_labels(&args.output, &result.segmentations, args.format)?;
    let total: f64 = result.costs.iter().map(|c| c.total().as_secs_f64()).sum();
    eprintln!(
        "{} frames, {} feature extractions, {:.1} ms",
        result.len(),
        result.feature_calls(),
        total * 1e3
    );
    Ok(())
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let preds = load_labels(&args.predictions)?;
    let gts = load_labels(&args.ground_truth)?;
    let report = miou(&preds, &gts, args.classes)?;
    println!("mean_iou {:.6}", report.mean);
    for (c, counts) in report.counts.iter().enumerate() {
        match counts.iou() {
            Some(iou) => println!(
                "class {c} iou {iou:.6} tp {} fp {} fn {}",
                counts.true_pos, counts.false_pos, counts.false_neg
            ),
            None => println!("class {c} absent"),
        }
    }
    if let Some(n) = args.interval {
        let per = per_offset_miou(&preds, &gts, n, args.classes)?;
        for (p, v) in per.iter().enumerate() {
            println!("offset {p} miou {v:.4}");
        }
    }
    Ok(())
}

fn sweep_cmd(cli: &Cli, args: &SweepArgs) -> Result<()> {
    let input = load_input(&args.scene, args.model.as_deref(), cli.seed)?;
    let data = input.dataset()?;
    let params = args.match_opts.params()?;
    let start = Instant::now();
    let motion = estimate_stream_motion(&input.frames, &params)?;
    let motion_time = start.elapsed();
    let options = SweepOptions {
        schemes: args.schemes.clone(),
        intervals: args.intervals.0.clone(),
        fusion: args.fusion.weights()?,
        match_params: params,
        repetitions: args.repetitions,
        workers: cli.workers as usize,
        include_motion_cost: args.include_motion_cost,
    };
    let reports = sweep_with_motion(
        &data,
        &motion,
        motion_time,
        SegModel::new(&ToyFeatureNet, &input.model),
        &options,
    )?;
    let mut out = writer(args.output.as_deref())?;
    write_sweep_csv(&mut out, &reports)?;
    out.flush()?;
    if let Some(path) = &args.svg {
        std::fs::write(path, sweep_svg(&reports))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn per_call_ms(result: &bmvseg::StreamResult, component: Component) -> f64 {
    let calls: usize = result.costs.iter().map(|c| c.calls(component)).sum();
    if calls == 0 {
        0.0
    } else {
        result.time(component).as_secs_f64() * 1e3 / calls as f64
    }
}

fn bench_cmd(cli: &Cli, args: &BenchArgs) -> Result<()> {
    let input = load_input(&args.scene, args.model.as_deref(), cli.seed)?;
    let data = input.dataset()?;
    let model = SegModel::new(&ToyFeatureNet, &input.model);
    let len = input.frames.len();
    let start = Instant::now();
    let motion = estimate_stream_motion(&input.frames, &args.match_opts.params()?)?;
    let motion_time = start.elapsed();
    let motion_ms = motion_time.as_secs_f64() * 1e3 / len as f64;

    // Component costs from a warm run of each scheme at the widest interval.
    let widest = args
        .intervals
        .0
        .iter()
        .copied()
        .max()
        .unwrap_or(1)
        .clamp(2, len.max(2));
    let profile = |scheme| -> Result<bmvseg::StreamResult> {
        let config = PipelineConfig::new(scheme, widest.min(len), data.num_classes)?;
        run(&input.frames, &motion, &config, model)?;
        Ok(run(&input.frames, &motion, &config, model)?)
    };
    let baseline = profile(Scheme::Baseline)?;
    let prop = profile(Scheme::Prop)?;
    let inter = profile(Scheme::Inter)?;
    let feature = per_call_ms(&baseline, Component::Feature);
    let mut costs = CostModel {
        feature,
        warp: per_call_ms(&prop, Component::Warp),
        task: per_call_ms(&baseline, Component::Task),
        flow: args.flow_ms.unwrap_or(feature),
        fusion: per_call_ms(&inter, Component::Fusion),
    };
    if args.include_motion_cost {
        costs.warp += motion_ms;
    }

    let options = SweepOptions {
        intervals: args.intervals.0.clone(),
        repetitions: args.repetitions,
        workers: cli.workers as usize,
        include_motion_cost: args.include_motion_cost,
        ..Default::default()
    };
    let reports = sweep_with_motion(&data, &motion, motion_time, model, &options)?;
    let measured = |scheme, n| {
        reports
            .iter()
            .find(|r| r.scheme == scheme && r.keyframe_interval == n)
            .map_or(f64::NAN, |r| r.throughput)
    };

    let mut out = io::stdout().lock();
    writeln!(
        out,
        "# frames {len}, {}x{}",
        input.frames[0].width(),
        input.frames[0].height()
    )?;
    writeln!(
        out,
        "# ms per call: feature {:.4} task {:.4} warp {:.4} fusion {:.4} flow {:.4} motion {:.4}",
        costs.feature, costs.task, costs.warp, costs.fusion, costs.flow, motion_ms
    )?;
    writeln!(
        out,
        "# intermediate cost cut, block motion vs flow: {:.1}%",
        100.0 * intermediate_cost_reduction(&costs)?
    )?;
    writeln!(
        out,
        "interval,model_baseline,model_prop_bmv,model_prop_flow,model_inter_bmv,measured_baseline,measured_prop,measured_inter"
    )?;
    for &n in &args.intervals.0 {
        let t = throughput_model(&costs, n)?;
        // The model is in frames per ms.
        writeln!(
            out,
            "{n},{:.1},{:.1},{:.1},{:.1},{:.1},{:.1},{:.1}",
            t.baseline * 1e3,
            t.prop_bmv * 1e3,
            t.prop_flow * 1e3,
            t.inter_bmv * 1e3,
            measured(Scheme::Baseline, n),
            measured(Scheme::Prop, n),
            measured(Scheme::Inter, n)
        )?;
    }
    Ok(())
}

fn make_scene_cmd(cli: &Cli, args: &MakeSceneArgs) -> Result<()> {
    let spec = input::scene_spec(&args.spec)?;
    let scene = bmvseg::eval::make_scene(&spec, cli.seed)?;
    save_frames(args.output.join("frames"), &scene.frames, args.format)?;
    save_labels(args.output.join("labels"), &scene.ground_truth, args.format)?;
    write_json(args.output.join("scene.json"), &spec)?;
    eprintln!(
        "{} frames, {} classes, seed {}",
        scene.len(),
        scene.num_classes(),
        cli.seed
    );
    Ok(())
}

fn fit_model_cmd(cli: &Cli, args: &FitModelArgs) -> Result<()> {
    let training = input::training_data(&args.scene, training_seed(cli.seed))?;
    let data = training.dataset()?;
    let model: ToyModel = bmvseg::eval::fit_toy_model(&data)?;
    write_json(&args.output, &model)?;
    eprintln!(
        "fitted {} classes on {} frames",
        model.num_classes(),
        training.frames.len()
    );
    if let Some(path) = &args.fusion_out {
        let motion = estimate_stream_motion(&training.frames, &args.match_opts.params()?)?;
        let samples = fusion_samples(
            &training.frames,
            &motion,
            args.fusion_interval,
            SegModel::new(&ToyFeatureNet, &model),
        )?;
        let fit = fit_conv_fusion(
            &samples,
            &FitOptions {
                rank_tolerance: args.rank_tolerance,
            },
        )?;
        if fit.rank_deficient {
            eprintln!(
                "warning: fusion inputs are rank deficient (rank {}); kept the minimum-norm kernel",
                fit.rank
            );
        }
        write_json(path, &fit.weights)?;
        eprintln!(
            "fusion kernel from {} samples, residual mse {:.3e}",
            samples.len(),
            fit.residual_mse
        );
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::EstimateMotion(a) => estimate_motion_cmd(a),
        Command::Run(a) => run_cmd(cli, a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep_cmd(cli, a),
        Command::Bench(a) => bench_cmd(cli, a),
        Command::MakeScene(a) => make_scene_cmd(cli, a),
        Command::FitModel(a) => fit_model_cmd(cli, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("bmvseg: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
