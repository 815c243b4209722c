use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rocesim::config::{parse_variants, ConfigError, RunConfig, Scenario};
use rocesim::report::{self, emit_figure_data, figure_presets, run_matrix, RunResult, SummaryRow};

#[derive(Parser)]
#[command(name = "rocesim", version, about = "RoCE fabric simulator for collective and DLRM workloads")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario under each selected congestion-control variant.
    Run(RunArgs),
    /// Write the link table of the configured topology.
    DumpTopology(RunArgs),
    /// Print every configuration key with its default value.
    PrintDefaults {
        /// Start from a named experiment setup instead.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Run the scenarios behind one figure and write its data table.
    Reproduce {
        #[arg(long)]
        figure: u32,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        cc: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named experiment setup (see `print-defaults --preset`).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    scenario: Option<String>,
    /// Comma-separated variants, or `all`.
    #[arg(long)]
    cc: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    chunks: Option<u32>,
}

enum Failure {
    Config(String),
    Sim(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Sim(e.to_string())
    }
}

fn cli_value<T>(flag: &str, r: Result<T, String>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Config(format!("--{flag}: {e}")))
}

fn resolve(a: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(_), Some(_)) => return Err(Failure::Config("--config and --preset are exclusive".into())),
        (Some(p), None) => RunConfig::load(p)?,
        (None, Some(p)) => RunConfig::preset(p)?,
        (None, None) => match &a.scenario {
            Some(s) => RunConfig::new(cli_value("scenario", s.parse::<Scenario>())?),
            None => return Err(ConfigError::Missing("scenario").into()),
        },
    };
    if let Some(s) = &a.scenario {
        cfg.scenario = cli_value("scenario", s.parse())?;
    }
    if let Some(cc) = &a.cc {
        cfg.variants = if cc.eq_ignore_ascii_case("all") {
            rocesim::transport::cc::CcVariant::ALL.to_vec()
        } else {
            cli_value("cc", parse_variants(cc))?
        };
    }
    if let Some(o) = &a.out {
        cfg.out = o.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.chunks {
        if c == 0 {
            return Err(Failure::Config("--chunks: must be at least 1".into()));
        }
        cfg.chunks = c;
    }
    Ok(cfg)
}

fn print_rows(rows: &[&SummaryRow]) -> Result<(), Failure> {
    report::write_summary(io::stdout().lock(), rows.iter().copied()).map_err(|e| Failure::Sim(e.to_string()))
}

fn split(results: Vec<Result<RunResult, SummaryRow>>) -> (Vec<RunResult>, Vec<SummaryRow>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for r in results {
        match r {
            Ok(r) => ok.push(r),
            Err(e) => bad.push(e),
        }
    }
    (ok, bad)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Run(a) => {
            let cfg = resolve(&a)?;
            let label = a.preset.clone().unwrap_or_else(|| cfg.scenario.name().to_string());
            let results = run_matrix(&cfg, &label, Some(&cfg.out)).map_err(|e| Failure::Sim(e.to_string()))?;
            let (ok, bad) = split(results);
            let rows: Vec<&SummaryRow> = ok.iter().map(|r| &r.row).chain(bad.iter()).collect();
            print_rows(&rows)?;
            if let Some(e) = bad.first() {
                return Err(Failure::Sim(format!(
                    "{} of {} runs failed; first: {} {}",
                    bad.len(),
                    rows.len(),
                    e.cc.name(),
                    e.error.as_deref().unwrap_or("")
                )));
            }
        }
        Cmd::DumpTopology(a) => {
            let cfg = resolve(&a)?;
            let topo = cfg.topology.build().map_err(|e| Failure::Config(e.to_string()))?;
            match &a.out {
                Some(p) => {
                    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                        fs::create_dir_all(dir)?;
                    }
                    topo.write_csv(BufWriter::new(File::create(p)?))?
                }
                None => topo.write_csv(io::stdout().lock())?,
            }
        }
        Cmd::PrintDefaults { preset, scenario } => {
            let cfg = match preset {
                Some(p) => RunConfig::preset(&p)?,
                None => RunConfig::new(match scenario {
                    Some(s) => cli_value("scenario", s.parse())?,
                    None => Scenario::AllToAll,
                }),
            };
            io::stdout().lock().write_all(cfg.to_text().as_bytes())?;
        }
        Cmd::Reproduce { figure, out, cc, seed } => {
            let presets = figure_presets(figure).ok_or_else(|| {
                Failure::Config(format!(
                    "no data for figure {figure}; choose one of {:?}",
                    report::FIGURES
                ))
            })?;
            let mut all_ok = Vec::new();
            let mut all_bad = Vec::new();
            for p in presets {
                let mut cfg = RunConfig::preset(p)?;
                if let Some(cc) = &cc {
                    cfg.variants = cli_value("cc", parse_variants(cc))?;
                }
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                let dir = out.join(p);
                eprintln!("running {p} ({} variants)", cfg.variants.len());
                let results = run_matrix(&cfg, p, Some(&dir)).map_err(|e| Failure::Sim(e.to_string()))?;
                let (ok, bad) = split(results);
                all_ok.extend(ok);
                all_bad.extend(bad);
            }
            fs::create_dir_all(&out)?;
            let data = emit_figure_data(figure, &all_ok).expect("figure has presets");
            let path = out.join(format!("figure{figure}.csv"));
            fs::write(&path, data)?;
            let rows: Vec<&SummaryRow> = all_ok.iter().map(|r| &r.row).chain(all_bad.iter()).collect();
            report::write_summary(File::create(out.join("summary.csv"))?, rows.iter().copied())
                .map_err(|e| Failure::Sim(e.to_string()))?;
            print_rows(&rows)?;
            eprintln!("wrote {}", path.display());
            if !all_bad.is_empty() {
                return Err(Failure::Sim(format!("{} runs failed", all_bad.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Sim(m)) => {
            eprintln!("simulation error: {m}");
            ExitCode::from(1)
        }
    }
}
