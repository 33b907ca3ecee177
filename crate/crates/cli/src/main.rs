use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use msense_core::extraction::write_peaks_jsonl;
use msense_core::harness::{
    acquire, default_noise_grid, run_baseline, run_drop, run_sweep, CsvSink, Manifest, SimConfig, SweepAxis, SweepSpec,
};
use msense_core::periodogram::dump_periodogram;
use msense_core::rng::child_seed;
use msense_core::validation::run_checks;

#[derive(Parser)]
#[command(name = "msense", version, about = "Multi-static OFDM radar sensing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Root seed; drop i uses a seed derived from (seed, i).
    #[arg(long)]
    seed: u64,
    /// Drops to run (per sweep point for `sweep` and `baseline`).
    #[arg(long)]
    drops: usize,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// TOML config file; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override applied after the file, e.g. `radio.n_ant=16`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<SimConfig> {
        let text = match &self.config {
            Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        let cfg = SimConfig::from_toml_with_overrides(&text, &self.overrides)?;
        if self.drops == 0 {
            bail!("--drops must be at least 1");
        }
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run individual drops and write per-drop results.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write periodograms, peak lists and scenes for every drop.
        #[arg(long)]
        dump: bool,
    },
    /// Sweep one parameter and write a CSV row per (value, SAP count, filter).
    Sweep {
        #[command(flatten)]
        common: Common,
        /// noise_power_dbm, n_saps, n_antennas, bandwidth, n_targets or room_side.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated axis values; defaults to -80..-10 dBm for the noise axis.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
        /// SAP counts evaluated per drop.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        sap_counts: Vec<usize>,
    },
    /// Single-SAP, single-target reference curve over noise power.
    Baseline {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Calibration and invariant self-checks; fails if any check fails.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn write_manifest(out: &Path, manifest: &Manifest) -> Result<()> {
    fs::write(out.join("manifest.json"), manifest.to_json()? + "\n")?;
    Ok(())
}

fn run(common: &Common, dump: bool) -> Result<()> {
    let cfg = common.load()?;
    let mut results = BufWriter::new(File::create(common.out.join("drops.jsonl"))?);
    for i in 0..common.drops {
        let seed = child_seed(common.seed, i as u64);
        let result = run_drop(&cfg, seed)?;
        log::info!(
            "drop {i}: {} targets, {} fused, p_det {:.3}",
            result.n_targets,
            result.fused,
            result.metrics.p_det
        );
        writeln!(results, "{}", serde_json::to_string(&result)?)?;
        if dump {
            let acq = acquire(&cfg, seed, true)?;
            let dir = common.out.join(format!("drop{i:04}"));
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("scene.json"), acq.scene.to_json()?)?;
            for sap in &acq.saps {
                let id = sap.pose.id;
                if let Some(p) = &sap.periodogram {
                    dump_periodogram(p, &dir.join(format!("sap{id}")), Some(id))?;
                }
                write_peaks_jsonl(File::create(dir.join(format!("sap{id}_peaks.jsonl")))?, &sap.peaks)?;
            }
        }
    }
    results.flush()?;
    let mut manifest = Manifest::new("run", &cfg, common.seed);
    manifest.drops_per_point = common.drops;
    write_manifest(&common.out, &manifest)
}

fn sweep(common: &Common, axis: SweepAxis, values: Vec<f64>, sap_counts: Vec<usize>) -> Result<()> {
    let cfg = common.load()?;
    let values = match (values.is_empty(), axis) {
        (false, _) => values,
        (true, SweepAxis::NoisePowerDbm) => default_noise_grid(),
        (true, _) => bail!("--values is required for axis {axis}"),
    };
    let mut spec = SweepSpec::new(axis, values, common.drops, common.seed);
    spec.sap_counts = sap_counts;
    let mut manifest = Manifest::new("sweep", &cfg, common.seed);
    manifest.axis = Some(axis.to_string());
    manifest.values = spec.values.clone();
    manifest.drops_per_point = spec.drops_per_point;
    manifest.sap_counts = spec.sap_counts.clone();
    write_manifest(&common.out, &manifest)?;
    let mut sink = CsvSink::new(File::create(common.out.join("sweep.csv"))?)?;
    run_sweep(&cfg, &spec, |row| sink.write_row(row))?;
    Ok(())
}

fn baseline(common: &Common, values: Vec<f64>) -> Result<()> {
    let cfg = common.load()?;
    let values = if values.is_empty() { default_noise_grid() } else { values };
    let mut manifest = Manifest::new("baseline", &cfg, common.seed);
    manifest.axis = Some(SweepAxis::NoisePowerDbm.to_string());
    manifest.values = values.clone();
    manifest.drops_per_point = common.drops;
    manifest.sap_counts = vec![1];
    write_manifest(&common.out, &manifest)?;
    let mut sink = CsvSink::new(File::create(common.out.join("baseline.csv"))?)?;
    run_baseline(&cfg, &values, common.drops, common.seed, |row| sink.write_row(row))?;
    Ok(())
}

fn validate(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    let checks = run_checks(&cfg, common.seed, common.drops)?;
    fs::write(common.out.join("validation.json"), serde_json::to_string_pretty(&checks)? + "\n")?;
    let mut failed = 0;
    for c in &checks {
        println!("{} {:<26} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", checks.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { common, dump } => run(&common, dump),
        Command::Sweep { common, axis, values, sap_counts } => sweep(&common, axis, values, sap_counts),
        Command::Baseline { common, values } => baseline(&common, values),
        Command::Validate { common } => validate(&common),
    }
}
