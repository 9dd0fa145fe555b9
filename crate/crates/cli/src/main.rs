use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use pinn_core::check;
use pinn_core::experiment::{report, run_experiment, validate_config, ReportFormat, SummaryTable};
use pinn_core::models::Preset;

#[derive(Parser)]
#[command(name = "pinn-lab", version, about = "Train and compare physics-informed networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run only this seed instead of the config's seed list
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Replace every arm's layer widths with a named preset
    #[arg(long, global = true, value_enum)]
    preset: Option<PresetArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Train every arm of an experiment config over its seeds
    Run { config: PathBuf },
    /// Recompute the summary of a finished run directory from its traces
    Report {
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
    },
    /// Run the oracle suite
    Check {
        /// Also run the desk-scale training comparison (several minutes)
        #[arg(long)]
        full: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum FormatArg {
    Text,
    Json,
    Both,
}

impl From<ReportFormat> for FormatArg {
    fn from(f: ReportFormat) -> Self {
        match f {
            ReportFormat::Text => FormatArg::Text,
            ReportFormat::Json => FormatArg::Json,
            ReportFormat::Both => FormatArg::Both,
        }
    }
}

fn print_table(t: &SummaryTable, format: FormatArg) -> Result<(), String> {
    if format != FormatArg::Json {
        print!("{}", t.render_text());
    }
    if format != FormatArg::Text {
        println!("{}", serde_json::to_string_pretty(t).map_err(|e| e.to_string())?);
    }
    Ok(())
}

fn run(cli: &Cli, config: &Path) -> Result<ExitCode, String> {
    let text = std::fs::read_to_string(config).map_err(|e| format!("{}: {e}", config.display()))?;
    let mut spec = validate_config(&text).map_err(|e| format!("{}: {e}", config.display()))?;
    if let Some(p) = cli.preset {
        spec.apply_preset(match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        });
    }
    if let Some(s) = cli.seed {
        spec.seeds = vec![s];
    }
    let out = cli
        .out
        .clone()
        .or_else(|| spec.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&spec.name));
    eprintln!(
        "running {} arms x {} seeds into {}",
        spec.arms.len(),
        spec.seeds.len(),
        out.display()
    );
    let table = run_experiment(&spec, &out, cli.threads).map_err(|e| e.to_string())?;
    print_table(&table, spec.report.into())?;
    let aborted = table.aborted();
    if aborted > 0 {
        eprintln!("{aborted} run(s) aborted");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn run_check(cli: &Cli, full: bool) -> ExitCode {
    let mut results = check::quick_suite();
    for r in &results {
        println!("{r}");
    }
    if full {
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join("desk-trend"));
        let (r, table) = check::desk_trend(&out, cli.threads);
        if let Some(t) = table {
            print!("{}", t.render_text());
        }
        println!("{r}");
        results.push(r);
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config } => run(&cli, config),
        Command::Report { dir, format } => report(dir)
            .map_err(|e| format!("{}: {e}", dir.display()))
            .and_then(|t| print_table(&t, *format).map(|_| ExitCode::SUCCESS)),
        Command::Check { full } => Ok(run_check(&cli, *full)),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
