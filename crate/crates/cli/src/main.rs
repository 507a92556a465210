use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dsbic_core::experiment::{
    capture, dump_psd, load_with_overrides, parse_override, run_scenario, run_sweep, scenario_hash, write_current,
    write_psd, write_run, write_sweep, PsdStage, Scenario, SweepOptions, SweepSpec,
};
use dsbic_core::metrics::Crossing;

#[derive(Parser)]
#[command(name = "dsbic", version, about = "SSB Kramers-Kronig link simulation with dither-beat cancellation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory under which `{scenario_hash}/` output folders are created.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Overrides the scenario seed (`base.seed` for sweeps).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Overrides a config field by dotted path, e.g. `dsbic.iterations=3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs one scenario and writes curve.csv and summary.json.
    Run {
        scenario: PathBuf,
        /// Also writes the photocurrent of every frame as raw f64 with a JSON sidecar.
        #[arg(long)]
        export_current: bool,
    },
    /// Runs a sweep and writes curve.csv and summary.json.
    Sweep {
        spec: PathBuf,
        /// Records failing points in the summary instead of stopping.
        #[arg(long)]
        continue_on_error: bool,
    },
    /// Writes the Welch PSD of one pipeline stage as psd_{stage}.csv.
    Psd {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        stage: Stage,
    },
    /// Prints a default scenario or sweep file.
    Template {
        #[arg(value_enum, default_value = "scenario")]
        kind: TemplateKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Stage {
    TxField,
    RxCurrent,
    CorrectedCurrent,
}

impl From<Stage> for PsdStage {
    fn from(s: Stage) -> Self {
        match s {
            Stage::TxField => PsdStage::TxField,
            Stage::RxCurrent => PsdStage::RxCurrent,
            Stage::CorrectedCurrent => PsdStage::CorrectedCurrent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TemplateKind {
    Scenario,
    Sweep,
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn overrides(cli: &Cli, seed_key: &str) -> AnyResult<Vec<(String, String)>> {
    let mut out = cli.sets.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = cli.seed {
        out.push((seed_key.to_owned(), seed.to_string()));
    }
    Ok(out)
}

fn load<T: serde::de::DeserializeOwned>(path: &Path, overrides: &[(String, String)]) -> AnyResult<T> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    load_with_overrides(&text, overrides).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn show_crossing(c: &Crossing) -> String {
    match c {
        Crossing::At(v) => format!("{v:.3}"),
        Crossing::BeforeFirst => "before first point".into(),
        Crossing::NotReached => "not reached".into(),
    }
}

fn run(cli: &Cli) -> AnyResult<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    match &cli.command {
        Command::Run {
            scenario,
            export_current,
        } => {
            let s: Scenario = load(scenario, &overrides(cli, "seed")?)?;
            let result = run_scenario(&s)?;
            let dir = write_run(&cli.out_dir, &s, &result)?;
            if *export_current {
                let hash = scenario_hash(&s)?;
                for i in 0..s.frames {
                    write_current(&dir.join(format!("current_{i}.f64")), &capture(&s, i)?.current, &hash, i)?;
                }
            }
            println!("receiver  bit_errors  bits_total  ber         evm_db");
            let p = &result.plain_kk;
            println!("plain_kk  {:>10}  {:>10}  {:<10.3e}  {:.2}", p.ber.bit_errors, p.ber.bits_total, p.ber.ber, p.evm.evm_db);
            if let Some(d) = &result.dsbic {
                println!("dsbic     {:>10}  {:>10}  {:<10.3e}  {:.2}", d.ber.bit_errors, d.ber.bits_total, d.ber.ber, d.evm.evm_db);
            }
            println!("{}", dir.display());
        }
        Command::Sweep {
            spec,
            continue_on_error,
        } => {
            let spec: SweepSpec = load(spec, &overrides(cli, "base.seed")?)?;
            let opts = SweepOptions {
                workers: cli.workers,
                continue_on_error: *continue_on_error,
            };
            let outcome = run_sweep(&spec, opts)?;
            let dir = write_sweep(&cli.out_dir, &spec, &outcome)?;
            for p in &outcome.summary.points {
                let d = p.dsbic.map(|d| format!("{:.3e}", d.ber)).unwrap_or_else(|| "-".into());
                println!("{} = {:<8} plain_kk {:.3e}  dsbic {d}", spec.axis.name(), p.value, p.plain_kk.ber);
            }
            if let Some(c) = &outcome.summary.crossings {
                print!("HD-FEC crossing: plain_kk {}", show_crossing(&c.plain_kk));
                if let Some(d) = &c.dsbic {
                    print!(", dsbic {}", show_crossing(d));
                }
                println!();
            }
            for e in &outcome.summary.errors {
                eprintln!("point {} failed: {}", e.value, e.message);
            }
            println!("{}", dir.display());
        }
        Command::Psd { scenario, stage } => {
            let s: Scenario = load(scenario, &overrides(cli, "seed")?)?;
            let stage = PsdStage::from(*stage);
            let est = dump_psd(&s, stage)?;
            println!("{}", write_psd(&cli.out_dir, &s, stage, &est)?.display());
        }
        Command::Template { kind } => {
            let text = match kind {
                TemplateKind::Scenario => serde_json::to_string_pretty(&Scenario::default())?,
                TemplateKind::Sweep => serde_json::to_string_pretty(&SweepSpec {
                    base: Scenario::default(),
                    axis: dsbic_core::experiment::SweepAxis::SnrDb,
                    values: vec![28.0, 30.0, 32.0, 34.0, 36.0],
                })?,
            };
            println!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
