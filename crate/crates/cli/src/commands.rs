use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use toroid_cqed::config::{load_config_file, ConfigDocument, ConfigError, PhysicsConfig, Preset};
use toroid_cqed::io::{RunInfo, Table, TableError};
use toroid_cqed::pipeline::*;
use toroid_cqed::trajectory::Environment;
use toroid_cqed::units::{as_mhz, mhz};

use crate::tables;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, config, or files. Exit status 1.
    User(String),
    /// A simulation or numerical failure. Exit status 2.
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => CliError::User(c.to_string()),
            PipelineError::Invalid(m) => CliError::User(m),
            other => CliError::Internal(other.to_string()),
        }
    }
}

/// Everything a subcommand needs: resolved config, output directory, pool.
pub struct Manifest {
    pub command: String,
    pub cfg: PhysicsConfig,
    pub out: PathBuf,
    pub runner: Arc<Runner>,
}

impl Manifest {
    pub fn new(
        command: &str,
        config: Option<&Path>,
        preset: Preset,
        sets: &[String],
        seed: Option<u64>,
        out: &Path,
        workers: usize,
    ) -> Result<Self, CliError> {
        let base = match config {
            Some(p) => load_config_file(p)?,
            None => PhysicsConfig::from_document(preset.document())?,
        };
        let mut sets = sets.to_vec();
        if let Some(s) = seed {
            sets.push(format!("numerics.seed={s}"));
        }
        let cfg = base.with_overrides(&sets)?;
        let runner = Arc::new(Runner::new(workers)?);
        Ok(Self { command: command.into(), cfg, out: out.to_path_buf(), runner })
    }

    /// Same manifest with a different config and output subdirectory.
    fn derived(&self, name: &str, cfg: PhysicsConfig) -> Manifest {
        Manifest { command: format!("{} / {name}", self.command), cfg, out: self.out.join(name), runner: self.runner.clone() }
    }

    fn run(&self) -> RunInfo {
        RunInfo::new(&self.cfg)
    }

    fn prepare(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::User(format!("cannot create {}: {e}", self.out.display())))?;
        let header = format!("# command: {}\n# config_hash: {:016x}\n", self.command, self.cfg.hash());
        toroid_cqed::io::write_text(&self.out.join("run.toml"), &(header + &self.cfg.to_toml()))?;
        Ok(())
    }

    fn write(&self, name: &str, t: &Table) -> Result<(), CliError> {
        let path = self.out.join(name);
        t.write(&path)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

/// Parses `a:b:step` (inclusive range) or `a,b,c`, in MHz, to rad/s.
pub fn parse_detunings(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = |m: &str| CliError::User(format!("detunings '{s}': {m}"));
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| bad(&format!("'{x}' is not a number")));
    let vals = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("range must be start:stop:step"));
        }
        let (a, b, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || b < a {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(bad("too many points"));
        }
        (0..=n).map(|k| a + k as f64 * step).collect()
    } else {
        s.split(',').filter(|x| !x.trim().is_empty()).map(num).collect::<Result<Vec<_>, _>>()?
    };
    if vals.is_empty() {
        return Err(bad("empty list"));
    }
    Ok(vals.into_iter().map(mhz).collect())
}

pub fn print_config(preset: Preset) {
    let doc: ConfigDocument = preset.document();
    print!("{}", doc.to_toml());
}

pub struct TransitOutputs {
    pub dump: usize,
    pub photons: usize,
}

pub fn transits(m: &Manifest, variant: Variant, extra: &TransitOutputs) -> Result<(), CliError> {
    let cfg = variant.apply(&m.cfg)?;
    m.prepare()?;
    let ens = run_transits(&cfg, &m.runner, TransitOptions::default())?;
    let a = analyse_transits(&cfg, &ens)?;
    let run = m.run();
    let tag = |t: Table| tables::fates(t.with_meta("variant", variant.name()), &a.counts);
    m.write("trace.tsv", &tag(tables::trace(&run, &a.trace)))?;
    match &a.fit {
        Ok(f) => {
            m.write("fit.tsv", &tag(tables::fit(&run, f)))?;
            println!("dt_I = {:.3} us, dt_II = {:.3} us ({} triggered of {})", f.tau_exp * 1e6, f.tau_gauss * 1e6, a.counts.triggered, a.counts.launched);
        }
        Err(e) => eprintln!("warning: fit failed: {e}"),
    }
    let h = &a.classes;
    m.write("classes_d.tsv", &tables::class_pair(&run, "d", "nm", &h.d, |x| x * 1e9))?;
    m.write("classes_g.tsv", &tables::class_pair(&run, "g", "MHz", &h.g, as_mhz))?;
    m.write("classes_delta_a.tsv", &tables::class_pair(&run, "delta_a", "MHz", &h.delta_a, as_mhz))?;
    let mut all = h.g[0].clone();
    all.merge(&h.g[1]);
    m.write("coupling_histogram.tsv", &tables::histogram(&run, "coupling of triggered atoms over the first 500 ns", "MHz", &all, as_mhz))?;
    let r0 = Environment::new(&cfg).major_radius();
    for r in ens.triggered.iter().take(extra.dump) {
        m.write(&format!("trajectory_{}.tsv", r.index), &tables::trajectory(&run, r, r0))?;
    }
    for r in ens.triggered.iter().take(extra.photons) {
        let path = m.out.join(format!("photons_{}.txt", r.index));
        toroid_cqed::io::write_text(&path, &r.photons.to_text())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

pub fn spectra(m: &Manifest, variant: Variant, detunings: &[f64]) -> Result<(), CliError> {
    m.prepare()?;
    let s = run_spectra(&m.cfg, &m.runner, detunings, variant)?;
    let run = m.run();
    m.write(&format!("spectra_{}.tsv", variant.name()), &tables::spectra(&run, &s))?;
    if let Some(p) = &s.p_fall {
        m.write("p_fall.tsv", &tables::histogram(&run, "p_fall(g) of detected falling atoms", "MHz", p, as_mhz))?;
    }
    let show = |v: Option<f64>| v.map(|x| format!("{:.1} MHz", as_mhz(x))).unwrap_or_else(|| "none".into());
    println!("splitting R = {}, g_bar = {} ({} triggered)", show(s.splitting_r), show(s.g_bar), s.triggered);
    Ok(())
}

pub fn correlations(m: &Manifest, bin: f64, lags: usize) -> Result<(), CliError> {
    if !(bin > 0.0) || lags == 0 {
        return Err(CliError::User("need --bin-ns > 0 and --lags >= 1".into()));
    }
    m.prepare()?;
    let ens = run_transits(&m.cfg, &m.runner, TransitOptions::default())?;
    let c = correlation_analysis(&m.cfg, &ens, bin, lags);
    let t = tables::fates(tables::correlations(&m.run(), &c, bin), &ens.counts);
    m.write("correlations.tsv", &t)?;
    let (all, z) = c.super_poissonian();
    println!("C12 > C12_bar at all lags: {all}, combined z = {z:.1}");
    Ok(())
}

pub fn g2model(m: &Manifest, distribution: Option<&Path>, span: f64, step: f64) -> Result<(), CliError> {
    if !(step > 0.0) || span < step {
        return Err(CliError::User("need --step-ns > 0 and --span-ns >= --step-ns".into()));
    }
    let dist = match distribution {
        Some(p) => tables::read_distribution(&Table::load(p)?).map_err(|e| CliError::User(format!("{}: {e}", p.display())))?,
        None => {
            let ens = run_transits(&m.cfg, &m.runner, TransitOptions::default())?;
            triggered_coupling_distribution(&analyse_transits(&m.cfg, &ens)?)
        }
    };
    m.prepare()?;
    let model = g2_model(&m.cfg, &dist, &delay_grid(span, step))?;
    m.write("g2model.tsv", &tables::g2(&m.run(), &model))?;
    println!(
        "min/peak = {}, half-width = {}",
        model.ensemble.dip_to_peak().map(|v| format!("{v:.3}")).unwrap_or_else(|| "none".into()),
        model.ensemble.recovery_half_width().map(|v| format!("{:.2} ns", v * 1e9)).unwrap_or_else(|| "none".into())
    );
    Ok(())
}

pub fn fort(m: &Manifest, dump: usize) -> Result<(), CliError> {
    m.prepare()?;
    let f = run_fort(&m.cfg, &m.runner)?;
    let s = &f.stats;
    let run = m.run();
    let t = tables::histogram(&run, "trap residence after trigger", "us", &s.residence, |x| x * 1e6)
        .with_meta("triggered", s.triggered)
        .with_meta("captured", s.captured)
        .with_meta("capture_fraction", s.capture_fraction)
        .with_meta("mean_phi_dot_rad_s", s.mean_phi_dot)
        .with_meta("phi_dot_sem_rad_s", s.phi_dot_sem);
    m.write("fort.tsv", &t)?;
    let r0 = Environment::new(&m.cfg).major_radius();
    let captured = f.ensemble.triggered.iter().filter(|r| r.fort_residence.is_some_and(|x| x > m.cfg.fort.capture_time));
    for r in captured.take(dump) {
        m.write(&format!("trajectory_{}.tsv", r.index), &tables::trajectory(&run, r, r0))?;
    }
    println!("captured {}/{} = {:.3}", s.captured, s.triggered, s.capture_fraction);
    Ok(())
}

pub fn eigen(m: &Manifest, g: f64, detunings: &[f64]) -> Result<(), CliError> {
    m.prepare()?;
    let rows = eigen_sweep(&m.cfg, g, detunings);
    m.write("eigen.tsv", &tables::eigen(&m.run(), g, &rows))
}

pub fn potentials(m: &Manifest, detunings: &[f64], d_from: f64, d_to: f64, d_step: f64) -> Result<(), CliError> {
    if !(d_step > 0.0) || d_to <= d_from || d_from <= m.cfg.surface.d_min {
        return Err(CliError::User(format!(
            "need d_min ({:.1} nm) < --from-nm < --to-nm and --step-nm > 0",
            m.cfg.surface.d_min * 1e9
        )));
    }
    m.prepare()?;
    let n = ((d_to - d_from) / d_step + 1e-9).floor() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| d_from + k as f64 * d_step).collect();
    let curves = detunings.iter().map(|&d| Ok((d, potential_curves(&m.cfg, d, &grid)?))).collect::<Result<Vec<_>, CliError>>()?;
    m.write("potentials.tsv", &tables::potentials(&m.run(), &curves))
}

/// Every figure's command with defaults, into subdirectories of `--out`.
pub fn reproduce_all(m: &Manifest) -> Result<(), CliError> {
    let set = |sets: &[String]| m.cfg.with_overrides(sets).map_err(CliError::from);
    let ca = |d: f64| format!("cavity.delta_ca_mhz={d}");
    let none = TransitOutputs { dump: 0, photons: 0 };
    transits(&m.derived("transits_resonant", m.cfg.clone()), Variant::Full, &TransitOutputs { dump: 5, photons: 5 })?;
    for (name, d) in [("red", -40.0), ("blue", 40.0)] {
        for v in [Variant::Full, Variant::NoSurface, Variant::NoForces] {
            transits(&m.derived(&format!("transits_{name}_{}", v.name()), set(&[ca(d)])?), v, &none)?;
        }
    }
    let grid = parse_detunings("-80:140:5")?;
    for v in Variant::ALL {
        spectra(&m.derived(&format!("spectra_plus60_{}", v.name()), set(&[ca(60.0)])?), v, &grid)?;
    }
    for (name, d) in [("plus40", 40.0), ("minus40", -40.0)] {
        for v in [Variant::Full, Variant::NoForces] {
            spectra(&m.derived(&format!("spectra_{name}_{}", v.name()), set(&[ca(d)])?), v, &grid)?;
        }
    }
    correlations(&m.derived("correlations", m.cfg.clone()), CORRELATION_COARSE.0, CORRELATION_COARSE.1)?;
    correlations(&m.derived("correlations_fine", m.cfg.clone()), CORRELATION_FINE.0, CORRELATION_FINE.1)?;
    g2model(&m.derived("g2model", m.cfg.clone()), None, 60e-9, 0.5e-9)?;
    fort(&m.derived("fort", m.cfg.clone()), 5)?;
    eigen(&m.derived("eigen", m.cfg.clone()), mhz(40.0), &parse_detunings("-100:100:1")?)?;
    potentials(&m.derived("potentials", m.cfg.clone()), &parse_detunings("0,-40,40")?, 20e-9, 600e-9, 2e-9)?;
    Ok(())
}
