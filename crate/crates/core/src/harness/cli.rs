//! Command-line entry point.

use super::config::parse_config;
use super::suite::{render_comparison, run_suite, AgentSelection, OutputFormat, SuiteOptions};
use clap::{CommandFactory, Parser};
use std::io::Write;
use std::path::PathBuf;

/// Environment variable naming the default artifact directory.
pub const OUT_ENV: &str = "LUMEN_SCAN_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "lumen-scan",
    version,
    about = "Run scanning-agent scenarios and print the AIAM/OAM comparison table"
)]
pub struct Cli {
    /// Scenario config file (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Artifact directory.
    #[arg(long, value_name = "DIR", env = OUT_ENV, default_value = "out")]
    pub out: PathBuf,
    /// Base seed for every scenario, overriding the config.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, default_value = "both", value_parser = ["aiam", "oam", "both"])]
    pub agent: String,
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    pub format: String,
    /// Write one SVG per CIPG curve and one CILG SVG per run.
    #[arg(long)]
    pub emit_plots: bool,
    /// Print scenario names and exit.
    #[arg(long)]
    pub list_scenarios: bool,
    /// Run only the named scenario.
    #[arg(long, value_name = "NAME")]
    pub scenario: Option<String>,
    /// Run scenarios one at a time.
    #[arg(long)]
    pub sequential: bool,
}

/// Runs the CLI with explicit output streams. Returns the process exit code:
/// 0 on success, 1 on config or run errors, 2 on usage errors.
pub fn cli_main_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let mut text = e.render().to_string();
            return if e.use_stderr() {
                if !text.contains("Usage:") {
                    text = format!("{text}\n{}\n", Cli::command().render_usage());
                }
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };

    let mut specs = match parse_config(&cli.config) {
        Ok(s) => s,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}: {e}", cli.config.display());
            return 1;
        }
    };
    if cli.list_scenarios {
        for s in &specs {
            let _ = writeln!(stdout, "{}", s.name);
        }
        return 0;
    }
    if let Some(name) = &cli.scenario {
        specs.retain(|s| &s.name == name);
        if specs.is_empty() {
            let _ = writeln!(
                stderr,
                "error: no scenario named `{name}` in {}",
                cli.config.display()
            );
            return 1;
        }
    }
    if let Some(seed) = cli.seed {
        for s in &mut specs {
            s.base_seed = seed;
        }
    }
    let format: OutputFormat = cli.format.parse().expect("restricted by clap");
    let opts = SuiteOptions {
        out_dir: Some(cli.out.clone()),
        agents: cli
            .agent
            .parse::<AgentSelection>()
            .expect("restricted by clap"),
        format,
        emit_plots: cli.emit_plots,
        parallel: !cli.sequential,
    };
    match run_suite(&specs, &opts) {
        Ok(outcome) => {
            let _ = write!(stdout, "{}", render_comparison(&outcome.rows, format));
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    cli_main_with(
        argv,
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    )
}
