use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isac_core::calibration::{greedy_calibrate, CalibrationResult};
use isac_core::config::{ExperimentConfig, Preset};
use isac_core::error::{Error, Result};
use isac_core::experiment::{self, System};
use isac_core::omp::write_map_csv;
use isac_core::output::{prepare_dir, Manifest, Table};
use isac_core::training::{train_with_progress, write_loss_trace, LearnableParams, Mode, Scenario, TrainState};
use isac_core::array::ArrayModel;

/// Multi-target OFDM sensing and communication with learned array models.
#[derive(Debug, Parser)]
#[command(name = "isac", version)]
struct Cli {
    /// TOML file overriding the preset.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "paper")]
    preset: Preset,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pmd, Pfa and GOSPA versus the maximum number of targets.
    Simulate(Systems),
    /// Learns the array model by gradient descent.
    Train(TrainArgs),
    /// Greedy per-antenna calibration of the nominal array.
    Calibrate(CalibrateArgs),
    /// Detection and localization over a fixed threshold grid.
    Roc(Systems),
    /// Sensing / communication trade-off over the precoder weights.
    IsacSweep(Systems),
    /// Sensing versus the mean angle of the target sector.
    Generalize(Systems),
    /// Angle-delay maps of one test scene.
    MapDump(Systems),
}

#[derive(Debug, Args)]
struct Systems {
    /// Adds a trained model, e.g. `--checkpoint impairment=out/checkpoint_impairment.json`.
    #[arg(long = "checkpoint", value_name = "NAME=PATH")]
    checkpoints: Vec<String>,
    /// Adds a calibrated array written by `calibrate`.
    #[arg(long, value_name = "PATH")]
    calibrated: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value = "impairment")]
    mode: Mode,
    /// Continues from a checkpoint.
    #[arg(long, value_name = "PATH")]
    resume: Option<PathBuf>,
    /// Defaults to `<out>/checkpoint_<mode>.json`.
    #[arg(long, value_name = "PATH")]
    checkpoint_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Defaults to `<out>/calibrated.json`.
    #[arg(long, value_name = "PATH")]
    calibration_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, cli.preset)?,
        None => ExperimentConfig::preset(cli.preset),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Impairment => "impairment",
        Mode::Dictionary => "dictionary",
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn systems(args: &Systems, scenario: &Scenario) -> Result<Vec<System>> {
    let mut out = vec![System::known(scenario), System::agnostic(scenario)];
    for spec in &args.checkpoints {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--checkpoint expects NAME=PATH, got '{spec}'")))?;
        let state = TrainState::from_json(&read(Path::new(path))?)?;
        check_shape(&state.params, scenario)?;
        out.push(System::from_checkpoint(name, &state, &scenario.angle_grid)?);
    }
    if let Some(path) = &args.calibrated {
        let cal = CalibrationResult::from_json(&read(path)?)?;
        if cal.positions.len() != scenario.num_antennas() {
            return Err(Error::InvalidArgument(format!(
                "calibrated array has {} antennas, configuration has {}",
                cal.positions.len(),
                scenario.num_antennas()
            )));
        }
        out.push(System::from_array("calibrated", cal.array()?));
    }
    let mut names: Vec<&str> = out.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("system names must be unique".into()));
    }
    Ok(out)
}

fn check_shape(params: &LearnableParams, scenario: &Scenario) -> Result<()> {
    let fresh = LearnableParams::new(params.mode(), scenario.num_antennas(), scenario.wavelength(), &scenario.angle_grid)?;
    if fresh.num_real_parameters() != params.num_real_parameters() {
        return Err(Error::Checkpoint("checkpoint does not match the configured array or grid".into()));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let dir = cli.out.clone();
    prepare_dir(&dir)?;
    let scenario = cfg.scenario()?;
    let (command, files) = match &cli.command {
        Command::Simulate(args) => {
            let rows = experiment::run_sensing_eval(&cfg, &scenario, &systems(args, &scenario)?)?;
            Table::sensing(&rows).write(&dir.join("sensing.csv"))?;
            ("simulate", vec!["sensing.csv".to_string()])
        }
        Command::Roc(args) => {
            let rows = experiment::run_roc(&cfg, &scenario, &systems(args, &scenario)?)?;
            Table::roc(&rows).write(&dir.join("roc.csv"))?;
            ("roc", vec!["roc.csv".to_string()])
        }
        Command::IsacSweep(args) => {
            let rows = experiment::run_isac_sweep(&cfg, &scenario, &systems(args, &scenario)?)?;
            Table::isac(&rows, false).write(&dir.join("isac.csv"))?;
            Table::isac(&rows, true).write(&dir.join("isac_pareto.csv"))?;
            ("isac-sweep", vec!["isac.csv".to_string(), "isac_pareto.csv".to_string()])
        }
        Command::Generalize(args) => {
            let rows = experiment::run_generalization(&cfg, &scenario, &systems(args, &scenario)?)?;
            Table::generalization(&rows).write(&dir.join("generalization.csv"))?;
            ("generalize", vec!["generalization.csv".to_string()])
        }
        Command::MapDump(args) => {
            let (targets, maps) = experiment::map_dump(&cfg, &scenario, &systems(args, &scenario)?)?;
            Table::targets(&targets).write(&dir.join("targets.csv"))?;
            let mut files = vec!["targets.csv".to_string()];
            for (name, map) in &maps {
                let file = format!("map_{name}.csv");
                write_map_csv(create(&dir.join(&file))?, map, &scenario.angle_grid, &scenario.delay.delay_grid)?;
                files.push(file);
            }
            ("map-dump", files)
        }
        Command::Train(args) => ("train", train(args, &cfg, &scenario, &dir)?),
        Command::Calibrate(args) => ("calibrate", calibrate(args, &cfg, &scenario, &dir)?),
    };
    Manifest::new(command, &cfg, files).write(&dir, &cfg)?;
    Ok(())
}

fn train(args: &TrainArgs, cfg: &ExperimentConfig, scenario: &Scenario, dir: &Path) -> Result<Vec<String>> {
    let name = mode_name(args.mode);
    let tc = cfg.train_config(args.mode);
    let mut state = match &args.resume {
        Some(path) => {
            let state = TrainState::from_json(&read(path)?)?;
            if state.params.mode() != args.mode {
                return Err(Error::Checkpoint(format!("checkpoint is not a {name} model")));
            }
            check_shape(&state.params, scenario)?;
            state
        }
        None => TrainState::new(LearnableParams::new(args.mode, scenario.num_antennas(), scenario.wavelength(), &scenario.angle_grid)?, tc.learning_rate),
    };
    let every = (tc.iterations / 20).max(1);
    let trace = train_with_progress(&mut state, &tc, scenario, |row| {
        if (row.iteration + 1) % every == 0 {
            eprintln!("[{name}] iteration {}/{} gospa {:.4} cce {:.4}", row.iteration + 1, tc.iterations, row.gospa, row.cce);
        }
    })?;
    let trace_file = format!("loss_{name}.csv");
    write_loss_trace(create(&dir.join(&trace_file))?, &trace)?;
    let ckpt = args.checkpoint_out.clone().unwrap_or_else(|| dir.join(format!("checkpoint_{name}.json")));
    write_text(&ckpt, &state.to_json()?)?;
    let mut files = vec![trace_file];
    if let Some(array) = state.params.array() {
        let error = spacing_error(&array?, &scenario.true_array);
        eprintln!("[{name}] mean spacing error {:.5} wavelengths", error / scenario.wavelength());
    }
    files.push(listed(&ckpt, dir));
    Ok(files)
}

/// Paths inside the output directory are listed relative to it.
fn listed(path: &Path, dir: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).display().to_string()
}

fn spacing_error(learned: &ArrayModel, truth: &ArrayModel) -> f64 {
    let (a, b) = (learned.spacing(), truth.spacing());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
}

fn calibrate(args: &CalibrateArgs, cfg: &ExperimentConfig, scenario: &Scenario, dir: &Path) -> Result<Vec<String>> {
    let assumed = ArrayModel::nominal(scenario.num_antennas(), scenario.wavelength());
    let result = greedy_calibrate(scenario, &assumed, &cfg.calibration_config())?;
    let report = "calibration.csv".to_string();
    result.write_report(create(&dir.join(&report))?)?;
    let path = args.calibration_out.clone().unwrap_or_else(|| dir.join("calibrated.json"));
    write_text(&path, &result.to_json()?)?;
    let error = spacing_error(&result.array()?, &scenario.true_array);
    eprintln!("[calibrate] mean spacing error {:.5} wavelengths", error / scenario.wavelength());
    Ok(vec![report, listed(&path, dir)])
}
