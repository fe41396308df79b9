//! Command-line runner: configuration-driven scans and checks with
//! reproducible file outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use fourphoton::config::{RunConfig, RunManifest};
use fourphoton::detection::{write_events_csv, TriggerChain};
use fourphoton::error::{Result, SimError};
use fourphoton::experiments::bell::{bell_check, ghz_check, SymbolicCheck};
use fourphoton::experiments::compensate::opl_compensation;
use fourphoton::experiments::delay::{
    calibrate_delays, DelayCalibration, DelayScanSettings, PlantedOffsets,
};
use fourphoton::experiments::fourfold::{fourfold_mc, fourfold_rates, scaling_slopes};
use fourphoton::experiments::g2::G2Scanner;
use fourphoton::experiments::hom::{minima_vs_power, DipReport, DipScanner};
use fourphoton::experiments::scan::{derive_seed, fit_dip_floor, DipFit};
use fourphoton::layouts::{Geometry, Layout};

#[derive(Parser)]
#[command(
    name = "fourphoton",
    version,
    about = "Four-beam pulsed pair source with gated detection: \
             interference scans, autocorrelation, fourfold rates, and \
             the supporting calibration protocols."
)]
struct Cli {
    /// Run configuration file (TOML); defaults to the protocol
    /// layout's standard profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured trial count.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for scan points; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Heralded two-photon dip scan over cover-slip delays (one CSV
    /// per power plus a combined report with the floor fit).
    HomScan {
        /// Pump powers in milliwatts, comma-separated.
        #[arg(long, value_delimiter = ',', default_value = "25,50,100")]
        powers: Vec<f64>,
        /// Cover-slip counts: an inclusive range like 0..8 or a
        /// comma-separated list.
        #[arg(long, default_value = "0..8")]
        slips: String,
    },
    /// Heralded cross-correlation histogram across the gate-delay dial.
    G2Scan {
        /// Full scanned span of the delay dial, nanoseconds.
        #[arg(long, default_value_t = 60.0)]
        span_ns: f64,
        /// Dial step between points, nanoseconds.
        #[arg(long, default_value_t = 0.5)]
        step_ns: f64,
    },
    /// Four-photon coincidence rates: analytic, event-level Monte
    /// Carlo with a click log, and the efficiency/power scaling fits.
    Fourfold {
        /// Insert the cover-slip plan that best balances the four
        /// pump paths before running.
        #[arg(long)]
        compensated: bool,
    },
    /// Recover the gate-delay dials with the three single-beam scans
    /// and write the resulting chain settings.
    Calibrate {
        /// Extra delay hidden on the first gate channel, nanoseconds.
        #[arg(long, default_value_t = 0.0)]
        plant_ch1: f64,
        /// Same for the second channel.
        #[arg(long, default_value_t = 0.0)]
        plant_ch2: f64,
        /// Same for the herald detector's internal dial.
        #[arg(long, default_value_t = 0.0)]
        plant_herald: f64,
    },
    /// Search cover-slip counts that balance the pump paths of a
    /// geometry and report the residual mismatches.
    Compensate {
        /// Geometry description file (TOML); defaults to the run
        /// configuration's geometry.
        geometry: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        max_slips: u32,
    },
    /// Check the post-selected four-port state symbolically and print
    /// PASS or FAIL at a 1e-9 deviation threshold.
    GhzCheck,
    /// Same check for the two-port state.
    BellCheck,
}

/// `out!` that tolerates a closed stdout (piping into `head` must not
/// panic the run — the files on disk are the product, chatter is best-effort).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let threads = match cli.threads {
        Some(0) => return Err(SimError::Config("threads must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    match &cli.command {
        Command::HomScan { powers, slips } => {
            let config = load_config(&cli, Layout::Hom)?;
            cmd_hom_scan(&config, powers, slips, threads)
        }
        Command::G2Scan { span_ns, step_ns } => {
            let config = load_config(&cli, Layout::G2)?;
            cmd_g2_scan(&config, *span_ns, *step_ns, threads)
        }
        Command::Fourfold { compensated } => {
            let config = load_config(&cli, Layout::Ghz)?;
            cmd_fourfold(&config, *compensated)
        }
        Command::Calibrate {
            plant_ch1,
            plant_ch2,
            plant_herald,
        } => {
            let config = load_config(&cli, Layout::Ghz)?;
            let planted = PlantedOffsets {
                ch1_ns: *plant_ch1,
                ch2_ns: *plant_ch2,
                herald_ns: *plant_herald,
            };
            cmd_calibrate(&config, &planted)
        }
        Command::Compensate {
            geometry,
            max_slips,
        } => {
            let config = load_config(&cli, Layout::Ghz)?;
            cmd_compensate(&config, geometry.as_deref(), *max_slips)
        }
        Command::GhzCheck => {
            let config = load_config(&cli, Layout::Ghz)?;
            cmd_symbolic_check(&config, Layout::Ghz)
        }
        Command::BellCheck => {
            let config = load_config(&cli, Layout::Bell)?;
            cmd_symbolic_check(&config, Layout::Bell)
        }
    }
}

/// Read the configuration (or take the protocol's standard profile)
/// and apply the global overrides.
fn load_config(cli: &Cli, default_layout: Layout) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default_profile(default_layout),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(out) = &cli.out {
        config.output = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn require_layout(config: &RunConfig, expected: Layout) -> Result<()> {
    if config.layout != expected.token() {
        return Err(SimError::Config(format!(
            "this protocol runs on layout '{}'; the configuration says '{}'",
            expected.token(),
            config.layout
        )));
    }
    Ok(())
}

fn write_file(dir: &FsPath, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    out!("wrote {}", path.display());
    Ok(())
}

fn write_manifest(config: &RunConfig) -> Result<()> {
    let manifest = RunManifest::new(config)?;
    write_file(&config.output, "manifest.json", &manifest.to_json()?)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| SimError::Config(format!("serialize: {e}")))
}

/// Cover-slip counts: `a..b` (inclusive) or a comma-separated list.
fn parse_slips(text: &str) -> Result<Vec<u32>> {
    let bad = || SimError::Config(format!("slips '{text}': expected a..b or n,n,..."));
    if let Some((a, b)) = text.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn cmd_hom_scan(config: &RunConfig, powers: &[f64], slips: &str, threads: usize) -> Result<()> {
    require_layout(config, Layout::Hom)?;
    if powers.is_empty() {
        return Err(SimError::Config("need at least one power".into()));
    }
    let slips = parse_slips(slips)?;
    let bench = config.bench()?;
    let mut scans = BTreeMap::new();
    for (i, &power) in powers.iter().enumerate() {
        let scanner = DipScanner::new(&bench, &config.geometry, config.overlap, &config.spdc, power);
        let scan = scanner.scan_mc(&slips, config.trials, derive_seed(config.seed, i as u64), threads)?;
        write_file(&config.output, &format!("hom_{power}mw.csv"), &scan.to_csv())?;
        if let Some(min) = scan.minimum() {
            out!("{power} mW: minimum {} at {} slips", min.normalized_rate, min.setting);
        }
        scans.insert(format!("{power}"), scan);
    }
    let analytic_minima =
        minima_vs_power(&bench, &config.geometry, &config.overlap, &config.spdc, powers)?;
    let fit = if powers.len() >= 2 {
        let fit = fit_dip_floor(&analytic_minima)?;
        out!(
            "dip floor ≈ {} + {} per mW (analytic minima)",
            fit.intercept, fit.slope_per_mw
        );
        Some(fit)
    } else {
        None
    };
    #[derive(Serialize)]
    struct HomReport {
        #[serde(flatten)]
        report: DipReport,
        fit: Option<DipFit>,
    }
    let report = HomReport {
        report: DipReport {
            powers_mw: powers.to_vec(),
            scans,
            analytic_minima,
        },
        fit,
    };
    write_file(&config.output, "hom_report.json", &to_json(&report)?)?;
    write_manifest(config)
}

fn cmd_g2_scan(config: &RunConfig, span_ns: f64, step_ns: f64, threads: usize) -> Result<()> {
    require_layout(config, Layout::G2)?;
    let bench = config.bench()?;
    let scanner = G2Scanner::new(
        &bench,
        &config.geometry,
        &config.chain,
        config.overlap,
        &config.spdc,
        config.pump.power_mw,
    );
    let scan = scanner.scan_mc(span_ns, step_ns, config.trials, config.seed, threads)?;
    write_file(&config.output, "g2_scan.csv", &scan.to_csv())?;
    let outcome = scanner.zero_delay_outcome(2, config.trials, derive_seed(config.seed, 1), threads)?;
    out!(
        "peak spacing {} ns, matched/side ratio {} (analytic), {:?} (sampled)",
        outcome.mean_spacing_ns, outcome.zero_delay_ratio_analytic, outcome.zero_delay_ratio_mc
    );
    write_file(&config.output, "g2_outcome.json", &to_json(&outcome)?)?;
    write_manifest(config)
}

fn cmd_fourfold(config: &RunConfig, compensated: bool) -> Result<()> {
    require_layout(config, Layout::Ghz)?;
    let bench = config.bench()?;
    let pump = if compensated {
        let plan = opl_compensation(&config.geometry, 8)?;
        out!(
            "compensation slips {:?}, residual {} ps",
            plan.slips, plan.residual_ps
        );
        plan.applied_pump(&config.geometry, &config.pump)
    } else {
        config.pump.clone()
    };
    let rates = fourfold_rates(
        &bench,
        &config.geometry,
        &pump,
        &config.spdc,
        &config.overlap,
        &config.chain,
    )?;
    let mut outcome = fourfold_mc(
        &bench,
        &config.geometry,
        &pump,
        &config.spdc,
        &config.overlap,
        &config.chain,
        config.trials,
        config.seed,
        10_000,
    )?;
    let scaling = scaling_slopes(
        &bench,
        &config.geometry,
        &pump,
        &config.spdc,
        &config.overlap,
        &config.chain,
        0.01,
    )?;
    out!(
        "fourfold rate {} per s analytic, {} per s sampled ({} fourfolds / {} heralds)",
        outcome.fourfold_rate_hz_analytic,
        outcome.fourfold_rate_hz_mc,
        outcome.fourfolds,
        outcome.heralds
    );
    out!(
        "scaling: efficiency slope {}, power slope {}",
        scaling.efficiency_slope, scaling.power_slope
    );
    let mut events_csv = Vec::new();
    write_events_csv(&mut events_csv, &outcome.events)?;
    write_file(
        &config.output,
        "fourfold_events.csv",
        std::str::from_utf8(&events_csv).expect("CSV is UTF-8"),
    )?;
    outcome.events.clear();
    #[derive(Serialize)]
    struct FourfoldReport {
        rates: fourphoton::experiments::fourfold::FourfoldRates,
        outcome: fourphoton::experiments::fourfold::FourfoldOutcome,
        scaling: fourphoton::experiments::fourfold::ScalingReport,
    }
    let report = FourfoldReport {
        rates,
        outcome,
        scaling,
    };
    write_file(&config.output, "fourfold.json", &to_json(&report)?)?;
    write_manifest(config)
}

fn cmd_calibrate(config: &RunConfig, planted: &PlantedOffsets) -> Result<()> {
    require_layout(config, Layout::Ghz)?;
    let calibration = calibrate_delays(
        &config.geometry,
        &config.overlap,
        &config.spdc,
        config.pump.power_mw,
        &config.chain,
        planted,
        &DelayScanSettings::default(),
        config.seed,
    )?;
    out!(
        "located dials: ch1 {} ns, ch2 {} ns, herald {} ns",
        calibration.ch1_ns, calibration.ch2_ns, calibration.herald_internal_ns
    );
    #[derive(Serialize)]
    struct ChainFile {
        calibration: DelayCalibration,
        chain: TriggerChain,
    }
    let file = ChainFile {
        calibration,
        chain: calibration.applied_to(&config.chain),
    };
    let text = toml::to_string_pretty(&file).map_err(|e| SimError::Config(format!("{e}")))?;
    write_file(&config.output, "chain.toml", &text)?;
    write_manifest(config)
}

fn cmd_compensate(config: &RunConfig, geometry_file: Option<&FsPath>, max_slips: u32) -> Result<()> {
    // A geometry handed in directly is deliberately not run through the
    // bench ordering checks: balancing an already-equal geometry is a
    // legitimate query and must report zero slips, not reject.
    let geom: Geometry = match geometry_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?
        }
        None => config.geometry,
    };
    let plan = opl_compensation(&geom, max_slips)?;
    let json = to_json(&plan)?;
    out!("{json}");
    write_file(&config.output, "compensation.json", &json)
}

fn cmd_symbolic_check(config: &RunConfig, layout: Layout) -> Result<()> {
    require_layout(config, layout)?;
    let (name, check): (&str, SymbolicCheck) = match layout {
        Layout::Ghz => ("ghz_check", ghz_check(&config.geometry)?),
        _ => ("bell_check", bell_check(&config.geometry)?),
    };
    for (pattern, re, im) in &check.amplitudes {
        out!("  {pattern}: {re} {im:+}i");
    }
    out!("max amplitude deviation {:e}", check.max_deviation);
    out!("stray probability {:e}", check.stray_probability);
    let pass = check.max_deviation < 1e-9 && check.stray_probability < 1e-9;
    out!("{}", if pass { "PASS" } else { "FAIL" });
    write_file(&config.output, &format!("{name}.json"), &to_json(&check)?)
}
