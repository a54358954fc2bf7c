//! `toroid-sim`: batch runs of the toroid cQED simulator.
//!
//! Exit status is 0 on success, 1 for user errors (arguments, config,
//! files) and 2 for internal failures.

mod commands;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{CliError, Manifest, TransitOutputs};
use toroid_cqed::config::Preset;
use toroid_cqed::pipeline::Variant;
use toroid_cqed::units::mhz;

#[derive(Parser)]
#[command(name = "toroid-sim", version, about = "Monte-Carlo cQED of atoms falling past a microtoroid")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults are used for missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parameter set used when no config file is given.
    #[arg(long, global = true, value_enum, default_value_t = PresetArg::Apparatus)]
    preset: PresetArg,
    /// Override a config key by dotted path, e.g. `--set cavity.delta_ca_mhz=40`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Base RNG seed (same as `--set numerics.seed=N`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Apparatus,
    FiniteElement,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Apparatus => Preset::Apparatus,
            PresetArg::FiniteElement => Preset::FiniteElementCoupling,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    NoSurface,
    NoForces,
    PFall,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Full => Variant::Full,
            VariantArg::NoSurface => Variant::NoSurface,
            VariantArg::NoForces => Variant::NoForces,
            VariantArg::PFall => Variant::PFall,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the default config document as TOML.
    Config,
    /// Triggered transits: T_B(t) trace, fit, class histograms.
    Transits {
        #[arg(long, value_enum, default_value_t = VariantArg::Full)]
        variant: VariantArg,
        /// Write sampled paths of the first N triggered atoms.
        #[arg(long, default_value_t = 0)]
        dump: usize,
        /// Export photon records of the first N triggered atoms.
        #[arg(long, default_value_t = 0)]
        photons: usize,
    },
    /// Atom-present and empty-cavity spectra over post-trigger detunings.
    Spectra {
        #[arg(long, value_enum, default_value_t = VariantArg::Full)]
        variant: VariantArg,
        /// Δ_pa/2π in MHz: `start:stop:step` or a comma list.
        #[arg(long, default_value = "-80:140:5", allow_hyphen_values = true)]
        detunings: String,
    },
    /// Cross-correlation C12(τ) of the forward detectors.
    Correlations {
        #[arg(long, default_value_t = 50.0)]
        bin_ns: f64,
        /// Lags on each side of τ = 0.
        #[arg(long, default_value_t = 20)]
        lags: usize,
    },
    /// Ensemble g²(τ) model over a coupling distribution.
    G2model {
        /// p(g) histogram table (as written by `transits`); runs transits if absent.
        #[arg(long)]
        distribution: Option<PathBuf>,
        #[arg(long, default_value_t = 60.0)]
        span_ns: f64,
        #[arg(long, default_value_t = 0.5)]
        step_ns: f64,
    },
    /// Transits with the two-colour trap switched on at the trigger.
    Fort {
        /// Write sampled paths of the first N captured atoms.
        #[arg(long, default_value_t = 0)]
        dump: usize,
    },
    /// cQED eigenvalues over a sweep of Δ_ca.
    Eigen {
        #[arg(long, default_value_t = 40.0)]
        g_mhz: f64,
        /// Δ_ca/2π in MHz: `start:stop:step` or a comma list.
        #[arg(long, default_value = "-100:100:1", allow_hyphen_values = true)]
        detunings: String,
    },
    /// Dipole and surface potentials against distance.
    Potentials {
        /// Δ_ca = Δ_pa values (MHz) for the dipole curves.
        #[arg(long, default_value = "0,-40,40", allow_hyphen_values = true)]
        detunings: String,
        #[arg(long, default_value_t = 20.0)]
        from_nm: f64,
        #[arg(long, default_value_t = 600.0)]
        to_nm: f64,
        #[arg(long, default_value_t = 2.0)]
        step_nm: f64,
    },
    /// Every figure with defaults, one subdirectory each.
    ReproduceAll,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let c = &cli.common;
    if let Command::Config = cli.command {
        commands::print_config(c.preset.into());
        return Ok(());
    }
    let command = std::iter::once("toroid-sim".to_string()).chain(std::env::args().skip(1)).collect::<Vec<_>>().join(" ");
    let m = Manifest::new(&command, c.config.as_deref(), c.preset.into(), &c.sets, c.seed, &c.out, c.workers)?;
    match cli.command {
        Command::Config => unreachable!(),
        Command::Transits { variant, dump, photons } => commands::transits(&m, variant.into(), &TransitOutputs { dump, photons }),
        Command::Spectra { variant, detunings } => commands::spectra(&m, variant.into(), &commands::parse_detunings(&detunings)?),
        Command::Correlations { bin_ns, lags } => commands::correlations(&m, bin_ns * 1e-9, lags),
        Command::G2model { distribution, span_ns, step_ns } => commands::g2model(&m, distribution.as_deref(), span_ns * 1e-9, step_ns * 1e-9),
        Command::Fort { dump } => commands::fort(&m, dump),
        Command::Eigen { g_mhz, detunings } => commands::eigen(&m, mhz(g_mhz), &commands::parse_detunings(&detunings)?),
        Command::Potentials { detunings, from_nm, to_nm, step_nm } => {
            commands::potentials(&m, &commands::parse_detunings(&detunings)?, from_nm * 1e-9, to_nm * 1e-9, step_nm * 1e-9)
        }
        Command::ReproduceAll => commands::reproduce_all(&m),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let user = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if user { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
