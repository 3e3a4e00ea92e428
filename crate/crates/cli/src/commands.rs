use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use peershare::example::worked_example_raw;
use peershare::mechanism::{fairness_alpha_formula, fairness_precondition, ir_alpha_bound};
use peershare::simulation::{run_experiment, ConfigError, ExperimentConfig, ExperimentKind};
use peershare::{compute_shares, score_matrix, validate_profile, MechanismParams, OpinionProfile, ValidationError};
use thiserror::Error;

use crate::formats;
use crate::verify::{run_suite, Suite};
use crate::{
    BoundsArgs, Command, ExampleArgs, Experiment, Format, ReportArgs, SimulateArgs, SuiteArg, VerifyArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed profile: {source}")]
    Malformed {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(#[from] ValidationError),
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            _ => 1,
        }
    }

    fn io(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.display().to_string(), source }
    }
}

pub(crate) fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Share(args) => share(&args, out),
        Command::Score(args) => score(&args, out),
        Command::Bounds(args) => bounds(&args, out),
        Command::Simulate(args) => simulate(&args, out),
        Command::Verify(args) => verify(&args, out),
        Command::Example(args) => example(&args, out),
    }
}

fn load_profile(path: &Path) -> Result<OpinionProfile, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let raw = formats::parse_profile(&text)
        .map_err(|source| CliError::Malformed { path: path.display().to_string(), source })?;
    Ok(validate_profile(&raw)?)
}

fn emit(target: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match target {
        Some(path) => fs::write(path, text).map_err(CliError::io(path)),
        None => out.write_all(text.as_bytes()).map_err(CliError::io(Path::new("<stdout>"))),
    }
}

fn share(args: &ReportArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let report = compute_shares(&load_profile(&args.input)?);
    let text = match args.format {
        Format::Json => formats::share_json(&report),
        Format::Csv => formats::share_csv(&report),
    };
    emit(args.output.as_deref(), &text, out)?;
    Ok(0)
}

fn score(args: &ReportArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let profile = load_profile(&args.input)?;
    let scores = score_matrix(&profile);
    let text = match args.format {
        Format::Json => formats::score_json(profile.agents(), &scores),
        Format::Csv => formats::score_csv(profile.agents(), &scores),
    };
    emit(args.output.as_deref(), &text, out)?;
    Ok(0)
}

fn bounds(args: &BoundsArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    // alpha does not enter either bound; any valid value passes validation.
    let params = MechanismParams::new(args.n, args.m, args.v, 1.0, args.epsilon)?;
    let mut text = format!("fairness: {:.5e}", fairness_alpha_formula(&params));
    if !fairness_precondition(&params) {
        text.push_str(" (inapplicable: M > sqrt(n-2))");
    }
    text.push_str(&format!("\nir: {:.5e}\n", ir_alpha_bound(&params)));
    emit(None, &text, out)?;
    Ok(0)
}

fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let (kind, swept) = match args.experiment {
        Experiment::M => (ExperimentKind::MSweep, ("--m", args.m.is_some())),
        Experiment::Alpha => (ExperimentKind::AlphaSweep, ("--alpha", args.alpha.is_some())),
        Experiment::N => (ExperimentKind::NSweep, ("--agents", args.agents.is_some())),
    };
    if swept.1 {
        return Err(CliError::Usage(format!(
            "{} conflicts with --experiment {kind}: the swept parameter comes from --grid",
            swept.0
        )));
    }
    let defaults = ExperimentConfig::defaults(kind, args.trials.max(1), args.seed)?;
    let base = defaults.base;
    let base = MechanismParams::new(
        args.agents.unwrap_or(base.n()),
        args.m.unwrap_or(base.m()),
        args.v.unwrap_or(base.v()),
        args.alpha.unwrap_or(base.alpha()),
        args.epsilon.unwrap_or(base.epsilon()),
    )?;
    let grid = args.grid.clone().unwrap_or(defaults.grid);
    let config = ExperimentConfig::new(kind, grid, base, args.trials, args.seed)?;
    let report = run_experiment(&config);

    fs::create_dir_all(&args.out_dir).map_err(CliError::io(&args.out_dir))?;
    let stem = kind.to_string();
    let csv_path = args.out_dir.join(format!("{stem}.csv"));
    let json_path = args.out_dir.join(format!("{stem}.json"));
    fs::write(&csv_path, formats::experiment_csv(&report)).map_err(CliError::io(&csv_path))?;
    fs::write(&json_path, formats::experiment_json(&report)).map_err(CliError::io(&json_path))?;
    let summary = format!("wrote {} and {}\n", csv_path.display(), json_path.display());
    emit(None, &summary, out)?;
    Ok(0)
}

fn verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if args.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let suite = match args.suite {
        SuiteArg::Budget => Suite::Budget,
        SuiteArg::Bounds => Suite::Bounds,
        SuiteArg::Fairness => Suite::Fairness,
        SuiteArg::Ir => Suite::Ir,
        SuiteArg::Equilibrium => Suite::Equilibrium,
    };
    let outcome = run_suite(suite, args.trials, args.seed);
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        for (stem, table) in &outcome.tables {
            let path: PathBuf = dir.join(format!("{stem}.csv"));
            fs::write(&path, formats::deviation_csv(table)).map_err(CliError::io(&path))?;
        }
    }
    emit(None, &outcome.render(), out)?;
    Ok(if outcome.passed() { 0 } else { 1 })
}

fn example(args: &ExampleArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    emit(args.output.as_deref(), &formats::raw_profile_json(&worked_example_raw()), out)?;
    Ok(0)
}
