use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mmgp_cp::features::{BandSelection, FeatureSet};
use mmgp_cp::gpr::{fit, Axis, MmgpModel};
use mmgp_cp::harness::{
    format_table, prediction_rows, read_predictions, run_experiment, run_sweep, summarize_predictions, write_predictions,
    CoverageReport, ExperimentConfig, Method, Pipeline, PredictOptions, Predictor, SweepSpec,
};
use mmgp_cp::kernel::ScaleRule;
use mmgp_cp::sim::dataset::{DatasetPlan, GridSpec, Role};
use mmgp_cp::sim::signal::SourceSignal;
use mmgp_cp::sim::{MultichannelRecording, Scene};

/// Source localization with manifold Gaussian processes and conformal prediction intervals.
#[derive(Parser)]
#[command(name = "mmgp-cp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one recording, or a full labeled/unlabeled/test dataset.
    Simulate(SimulateArgs),
    /// Extract RTF features from a simulated dataset directory or WAV files.
    Features(FeaturesArgs),
    /// Fit the GP on a feature file.
    Fit(FitArgs),
    /// Point estimates and intervals for the test rows of a feature file.
    Predict(PredictArgs),
    /// Run the coverage experiment grid and write a report directory.
    Evaluate(EvaluateArgs),
    /// Interval width along a line through the ROI.
    Sweep(SweepArgs),
    /// Print a report directory or summarize a predictions file.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Axis {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
        }
    }
}

/// Experiment configuration: a TOML file, then individual overrides.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Experiment TOML; defaults are used for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene TOML replacing the config's scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    t60s: Option<Vec<f64>>,
    /// SNR levels in dB; `inf` disables noise.
    #[arg(long, value_delimiter = ',')]
    snrs: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// Any of gpr, jackknife_plus, gpr_cp.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Score normalization exponent; `inf` for unnormalized scores.
    #[arg(long)]
    gamma: Option<f64>,
    /// Labeled grid as NXxNY, e.g. 15x15.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    n_unlabeled: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    sigma_p2: Option<f64>,
    /// Fixed per-node kernel scales (comma separated); median heuristic otherwise.
    #[arg(long, value_delimiter = ',')]
    kernel_scales: Option<Vec<f64>>,
    /// Band edges in Hz as LOW,HIGH.
    #[arg(long, value_delimiter = ',')]
    band_hz: Option<Vec<f64>>,
    /// Excitation duration in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Mono WAV used as source material instead of speech-shaped noise.
    #[arg(long)]
    source_wav: Option<PathBuf>,
    /// Leave the label noise out of the Gaussian baseline's variance.
    #[arg(long)]
    no_baseline_noise: bool,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = &self.scene {
            cfg.scene = Scene::from_file(p)?;
        }
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$target = v.clone(); })*
            };
        }
        set!(t60s => t60s, snrs => snrs_db, deltas => deltas, methods => methods, repeats => repeats,
             seed => seed, gamma => gamma, n_unlabeled => n_unlabeled, n_test => n_test, sigma_p2 => sigma_p2);
        if let Some(g) = &self.grid {
            let (nx, ny) = g.split_once('x').context("grid must look like 15x15")?;
            cfg.grid = GridSpec {
                nx: nx.trim().parse()?,
                ny: ny.trim().parse()?,
            };
        }
        if let Some(s) = &self.kernel_scales {
            cfg.scale_rule = ScaleRule::Fixed { sigma: s.clone() };
        }
        if let Some(b) = &self.band_hz {
            cfg.band_hz = pair(b, "--band-hz")?;
        }
        if let Some(d) = self.duration {
            cfg.signal.duration = d;
        }
        if let Some(p) = &self.source_wav {
            cfg.signal.source = SourceSignal::from_wav(p)?;
        }
        if self.no_baseline_noise {
            cfg.baseline_noise = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Reverberation time of the simulated room (first of --t60s by default).
    #[arg(long)]
    t60: Option<f64>,
    /// SNR in dB (first of --snrs by default).
    #[arg(long)]
    snr: Option<f64>,
    /// Repeat index selecting the dataset seed.
    #[arg(long, default_value_t = 0)]
    repeat: usize,
    /// Single source position X,Y; writes one WAV to --out instead of a dataset directory.
    #[arg(long, value_delimiter = ',')]
    position: Option<Vec<f64>>,
    /// Write 32-bit float WAV instead of 16-bit PCM.
    #[arg(long)]
    float: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Written next to the WAV files of a simulated dataset.
#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    t60: f64,
    #[serde(with = "mmgp_cp::serde_float")]
    snr_db: f64,
    seed: u64,
    config: ExperimentConfig,
    plan: DatasetPlan,
}

const DATASET_MANIFEST: &str = "dataset.json";
const ROLES: [Role; 3] = [Role::Labeled, Role::Unlabeled, Role::Test];

fn wav_name(role: Role, i: usize) -> String {
    format!("{}_{i:04}.wav", role.as_str())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let t60 = args.t60.unwrap_or(cfg.t60s[0]);
    let snr = args.snr.unwrap_or(cfg.snrs_db[0]);
    let pipeline = Pipeline::new(&cfg.scene_for(t60, snr), &cfg.signal, &cfg.stft, cfg.band_hz)?;
    let seed = cfg.repeat_seed(args.repeat);
    if let Some(p) = &args.position {
        let rec = pipeline.recording(pair(p, "--position")?, seed, Role::Test, 0)?;
        rec.write_wav(&args.out, args.float)?;
        log::info!("wrote {}", args.out.display());
        return Ok(());
    }
    let plan = DatasetPlan::new(&cfg.scene.roi, &cfg.grid, cfg.n_unlabeled, cfg.n_test, seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for role in ROLES {
        for (i, &pos) in plan.positions(role).iter().enumerate() {
            pipeline
                .recording(pos, seed, role, i)?
                .write_wav(args.out.join(wav_name(role, i)), args.float)?;
        }
        log::info!("{}: {} recordings", role.as_str(), plan.positions(role).len());
    }
    let manifest = DatasetManifest {
        t60,
        snr_db: snr,
        seed,
        config: cfg,
        plan,
    };
    fs::write(args.out.join(DATASET_MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Dataset directory written by `simulate`.
    #[arg(long, conflicts_with = "wav")]
    dataset: Option<PathBuf>,
    /// Individual recordings, stored as test rows without positions.
    #[arg(long, num_args = 1..)]
    wav: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn features(args: FeaturesArgs) -> Result<()> {
    let (cfg, recordings): (ExperimentConfig, Vec<(Role, Option<[f64; 2]>, PathBuf)>) = match &args.dataset {
        Some(dir) => {
            let text = fs::read_to_string(dir.join(DATASET_MANIFEST))
                .with_context(|| format!("reading {}", dir.join(DATASET_MANIFEST).display()))?;
            let m: DatasetManifest = serde_json::from_str(&text)?;
            let mut list = Vec::new();
            for role in ROLES {
                for (i, &pos) in m.plan.positions(role).iter().enumerate() {
                    list.push((role, Some(pos), dir.join(wav_name(role, i))));
                }
            }
            (m.config, list)
        }
        None => {
            if args.wav.is_empty() {
                bail!("give --dataset DIR or --wav FILE...");
            }
            let list = args.wav.iter().map(|p| (Role::Test, None, p.clone())).collect();
            (args.cfg.load()?, list)
        }
    };
    let pipeline = Pipeline::new(&cfg.scene, &cfg.signal, &cfg.stft, cfg.band_hz)?;
    let band = BandSelection::new(cfg.band_hz[0], cfg.band_hz[1], &cfg.stft)?;
    let mut set = FeatureSet::new(cfg.stft.clone(), band);
    for (role, pos, path) in recordings {
        let rec = MultichannelRecording::read_wav(&path)?;
        let h = pipeline
            .features(&rec)
            .with_context(|| format!("features of {}", path.display()))?;
        set.push(role, pos, h);
    }
    set.save(&args.out)?;
    log::info!("wrote {} feature rows to {}", set.rows.len(), args.out.display());
    Ok(())
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = mmgp_cp::gpr::DEFAULT_SIGMA_P2)]
    sigma_p2: f64,
    /// Fixed per-node kernel scales; median heuristic otherwise.
    #[arg(long, value_delimiter = ',')]
    kernel_scales: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

fn fit_model(args: FitArgs) -> Result<()> {
    let set = FeatureSet::load(&args.features)?;
    let mut labeled = Vec::new();
    let mut labels = Vec::new();
    for row in set.with_role(Role::Labeled) {
        labels.push(row.position.context("labeled row without a position")?);
        labeled.push(row.feature.clone());
    }
    let unlabeled = set.with_role(Role::Unlabeled).map(|r| r.feature.clone()).collect();
    let rule = match args.kernel_scales {
        Some(sigma) => ScaleRule::Fixed { sigma },
        None => ScaleRule::MedianHeuristic,
    };
    let model = fit(labeled, &labels, unlabeled, &rule, args.sigma_p2)?;
    model.save(&args.out)?;
    log::info!("fitted on {} labeled samples, wrote {}", model.n_labeled(), args.out.display());
    Ok(())
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.01")]
    deltas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "gpr,jackknife_plus,gpr_cp")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = mmgp_cp::conformal::DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long)]
    no_baseline_noise: bool,
    /// Predictions CSV.
    #[arg(long)]
    out: PathBuf,
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = MmgpModel::load(&args.model)?;
    let set = FeatureSet::load(&args.features)?;
    let opts = PredictOptions {
        methods: args.methods,
        deltas: args.deltas,
        gamma: args.gamma,
        baseline_noise: !args.no_baseline_noise,
    };
    let predictor = Predictor::new(&model, opts)?;
    let mut rows = Vec::new();
    for (i, row) in set.with_role(Role::Test).enumerate() {
        let pred = predictor.predict(&row.feature)?;
        rows.extend(prediction_rows(i, row.position, &pred));
    }
    write_predictions(&args.out, &rows)?;
    log::info!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

fn evaluate(args: EvaluateArgs) -> Result<bool> {
    let cfg = args.cfg.load()?;
    let report = run_experiment(&cfg)?;
    report.write(&args.out)?;
    println!("{}", format_table(&report.rows));
    for f in &report.manifest.failures {
        eprintln!("failed cell: {f:?}");
    }
    eprintln!(
        "{}/{} cells completed in {:.1} s; report in {}",
        report.manifest.cells_completed,
        report.manifest.cells_total,
        report.wall_time_s,
        args.out.display()
    );
    Ok(report.all_completed())
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    t60: Option<f64>,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    repeat: usize,
    /// Coordinate that varies.
    #[arg(long, value_enum, default_value = "x")]
    axis: AxisArg,
    /// Value of the other coordinate (ROI centre by default).
    #[arg(long)]
    fixed: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Sweep CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also save the fitted model.
    #[arg(long)]
    model_out: Option<PathBuf>,
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = args.cfg.load()?;
    let axis: Axis = args.axis.into();
    let other = cfg.scene.roi.extent(1 - axis.index());
    let spec = SweepSpec {
        axis,
        fixed_other: args.fixed.unwrap_or(0.5 * (other[0] + other[1])),
        step: args.step,
    };
    let t60 = args.t60.unwrap_or(cfg.t60s[0]);
    let snr = args.snr.unwrap_or(cfg.snrs_db[0]);
    let (model, rows) = run_sweep(&cfg, t60, snr, args.repeat, &spec)?;
    let mut w = csv::Writer::from_path(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    if let Some(p) = args.model_out {
        model.save(p)?;
    }
    log::info!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

#[derive(Args)]
struct ReportArgs {
    /// Report directory written by `evaluate`.
    #[arg(long, conflicts_with = "predictions")]
    dir: Option<PathBuf>,
    /// Predictions CSV written by `predict`.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Scene whose ROI clips unbounded widths (default scene otherwise).
    #[arg(long)]
    scene: Option<PathBuf>,
}

fn report(args: ReportArgs) -> Result<()> {
    let rows = match (&args.dir, &args.predictions) {
        (Some(dir), _) => {
            let rep = CoverageReport::load(dir)?;
            if !rep.manifest.failures.is_empty() {
                eprintln!("{} failed cells", rep.manifest.failures.len());
            }
            rep.rows
        }
        (None, Some(p)) => {
            let scene = match &args.scene {
                Some(s) => Scene::from_file(s)?,
                None => Scene::default(),
            };
            summarize_predictions(&read_predictions(p)?, &scene.roi)?
        }
        (None, None) => bail!("give --dir or --predictions"),
    };
    println!("{}", format_table(&rows));
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(a) => simulate(a)?,
        Command::Features(a) => features(a)?,
        Command::Fit(a) => fit_model(a)?,
        Command::Predict(a) => predict(a)?,
        Command::Evaluate(a) => return evaluate(a),
        Command::Sweep(a) => sweep(a)?,
        Command::Report(a) => report(a)?,
    }
    Ok(true)
}

fn pair(v: &[f64], flag: &str) -> Result<[f64; 2]> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => bail!("{flag} takes exactly two comma-separated values"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
