//! End-to-end runs shared by the command-line tool and the tests: ensembles
//! of closed-loop transits and their reductions.
//!
//! Trajectories are processed in fixed chunks of consecutive indices and the
//! chunk results are merged in index order, so every result is independent
//! of the worker count.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, PhysicsConfig};
use crate::cqed::{effective_potential_curve, steady_state, track_eigenvalues, CqedError, PotentialCurve};
use crate::detection::{Channel, DriveSetting};
use crate::ensemble::{
    average_trace, class_histograms, fit_exp_gauss, fort_statistics, inferred_coupling, p_fall_distribution, peak_splitting,
    AveragedTrace, ClassHistograms, CorrelationAccumulator, CorrelationResult, EnsembleError, ExpGaussFit, FitOptions,
    FortStatistics, Histogram, HistogramSpec, PeakOptions, SpectrumAccumulator, SpectrumPoint, SpectrumReference,
    TraceSource,
};
use crate::mode::CylPoint;
use crate::quantum::{ensemble_g2, g2_transmitted, CorrelationCurve, EnsembleG2Options, QuantumError, TruncatedSpace};
use crate::trajectory::{simulate_branches, Branches, Environment, Fate, RunOptions, TrajectoryError, TrajectoryRecord};

const CHUNK: u64 = 64;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: TrajectoryError,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Cqed(#[from] CqedError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Worker pool for trajectory fan-out.
pub struct Runner {
    pool: rayon::ThreadPool,
}

impl Runner {
    /// `workers = 0` uses one worker per available core.
    pub fn new(workers: usize) -> Result<Self, PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| PipelineError::Pool(e.to_string()))?;
        Ok(Self { pool })
    }

    /// Applies `f` to consecutive index chunks of `0..n` in parallel and
    /// returns the chunk results in order.
    pub fn chunks<T: Send>(
        &self,
        n: u64,
        f: impl Fn(Range<u64>) -> Result<T, PipelineError> + Sync,
    ) -> Result<Vec<T>, PipelineError> {
        let count = n.div_ceil(CHUNK);
        self.pool.install(|| {
            (0..count)
                .into_par_iter()
                .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
                .collect::<Result<Vec<T>, PipelineError>>()
        })
    }
}

/// Model variants for spectra and transit comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    /// Casimir-Polder force removed; level shift and dipole force kept.
    NoSurface,
    /// Free fall: no surface or dipole force.
    NoForces,
    /// Fixed-coupling spectra averaged over the trigger-window coupling
    /// distribution of freely falling atoms.
    PFall,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoSurface, Variant::NoForces, Variant::PFall];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSurface => "no-surface",
            Variant::NoForces => "no-forces",
            Variant::PFall => "p-fall",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// The trajectory model this variant simulates.
    pub fn apply(self, cfg: &PhysicsConfig) -> Result<PhysicsConfig, PipelineError> {
        Ok(cfg.modified(|doc| match self {
            Variant::Full => {}
            Variant::NoSurface => doc.model.surface_force = false,
            Variant::NoForces | Variant::PFall => {
                doc.model.surface_force = false;
                doc.model.dipole_force = false;
            }
        })?)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FateCounts {
    pub launched: usize,
    pub triggered: usize,
    pub crashed: usize,
    pub exited: usize,
    pub trapped: usize,
}

impl FateCounts {
    fn add(&mut self, r: &TrajectoryRecord) {
        if r.trigger.is_none() {
            return;
        }
        self.triggered += 1;
        match r.fate {
            Fate::Crashed => self.crashed += 1,
            Fate::Exited => self.exited += 1,
            Fate::Trapped => self.trapped += 1,
        }
    }

    fn merge(&mut self, o: &Self) {
        self.launched += o.launched;
        self.triggered += o.triggered;
        self.crashed += o.crashed;
        self.exited += o.exited;
        self.trapped += o.trapped;
    }
}

/// Triggered transits (plus any untriggered ones kept for path dumps).
#[derive(Clone, Debug)]
pub struct TransitEnsemble {
    pub triggered: Vec<TrajectoryRecord>,
    pub untriggered_samples: Vec<TrajectoryRecord>,
    pub counts: FateCounts,
}

/// Options for [`run_transits`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TransitOptions {
    /// Record the pre-trigger path of every atom.
    pub record_paths: bool,
    /// Keep this many untriggered records (with paths) for plotting.
    pub keep_untriggered: usize,
}

/// Runs `cfg.numerics.trajectories` closed-loop transits.
pub fn run_transits(cfg: &PhysicsConfig, runner: &Runner, options: TransitOptions) -> Result<TransitEnsemble, PipelineError> {
    let env = Environment::new(cfg);
    let base = RunOptions::from_config(cfg);
    let n = cfg.numerics.trajectories as u64;
    let parts = runner.chunks(n, |range| {
        let mut out = TransitEnsemble { triggered: Vec::new(), untriggered_samples: Vec::new(), counts: FateCounts::default() };
        for i in range {
            let keep = (i as usize) < options.keep_untriggered;
            let opts = RunOptions { record_path: options.record_paths || keep, ..base };
            let b = simulate_branches(&env, i, &[env.after], &opts).map_err(|source| PipelineError::Trajectory { index: i, source })?;
            out.counts.launched += 1;
            match b {
                Branches::Triggered(mut v) => {
                    let r = v.remove(0);
                    out.counts.add(&r);
                    out.triggered.push(r);
                }
                Branches::Untriggered(r) if keep => out.untriggered_samples.push(*r),
                Branches::Untriggered(_) => {}
            }
        }
        Ok(out)
    })?;
    let mut all = TransitEnsemble { triggered: Vec::new(), untriggered_samples: Vec::new(), counts: FateCounts::default() };
    for p in parts {
        all.counts.merge(&p.counts);
        all.triggered.extend(p.triggered);
        all.untriggered_samples.extend(p.untriggered_samples);
    }
    Ok(all)
}

/// Bin width of averaged transmission traces.
pub const TRACE_BIN: f64 = 40e-9;
/// Start of the tail window used for the background `B`.
pub const TAIL_START: f64 = 6e-6;
/// Span after the trigger over which per-class means are taken.
pub const CLASS_SPAN: f64 = 500e-9;

#[derive(Clone, Debug)]
pub struct TransitAnalysis {
    pub counts: FateCounts,
    pub trace: AveragedTrace,
    pub fit: Result<ExpGaussFit, EnsembleError>,
    pub classes: ClassHistograms,
}

pub fn analyse_transits(cfg: &PhysicsConfig, ens: &TransitEnsemble) -> Result<TransitAnalysis, PipelineError> {
    let len = cfg.detection.record_length;
    let trace = average_trace(
        &ens.triggered,
        TRACE_BIN,
        cfg.numerics.sample_interval,
        len,
        TraceSource::Expected,
        None,
        (TAIL_START.min(0.75 * len), len),
    )?;
    // Uniform weights: after most fates every record carries the same
    // empty-cavity value, so the per-bin SEM collapses in the tail and would
    // let a handful of late bins dominate the fit.
    let fit = fit_exp_gauss(&trace.t, &trace.subtracted(), None, &FitOptions::default());
    let classes = class_histograms(&ens.triggered, CLASS_SPAN, &HistogramSpec::for_coupling(cfg.mode.g_max));
    Ok(TransitAnalysis { counts: ens.counts, trace, fit, classes })
}

#[derive(Clone, Debug)]
pub struct SpectraResult {
    pub variant: Variant,
    pub delta_ca: f64,
    pub points: Vec<SpectrumPoint>,
    /// Outer-peak splittings of the atom-present transmission and
    /// reflection spectra.
    pub splitting_t: Option<f64>,
    pub splitting_r: Option<f64>,
    /// `ḡ` from the reflection splitting.
    pub g_bar: Option<f64>,
    pub p_fall: Option<Histogram>,
    pub triggered: usize,
}

/// Number of coupling bins of the `p_fall(g)` distribution.
pub const P_FALL_BINS: usize = 40;
/// Phase samples for fixed-coupling spectra.
const THETA_POINTS: usize = 8;

/// Atom-present and empty-cavity spectra over post-trigger probe detunings
/// `detunings` (`Δ_pa`, rad/s), averaged over the configured window.
pub fn run_spectra(
    cfg: &PhysicsConfig,
    runner: &Runner,
    detunings: &[f64],
    variant: Variant,
) -> Result<SpectraResult, PipelineError> {
    if detunings.is_empty() {
        return Err(PipelineError::Invalid("detuning list is empty".into()));
    }
    let vcfg = variant.apply(cfg)?;
    let env = Environment::new(&vcfg);
    let window = vcfg.numerics.window;
    let power = vcfg.probe.power_after;
    let afters: Vec<DriveSetting> = detunings.iter().map(|&d| DriveSetting { power, delta_pa: d }).collect();
    let references = afters
        .iter()
        .map(|&a| {
            let (t, r) = env.empty_cavity(a)?;
            let forward_rate: f64 = Channel::ALL
                .iter()
                .filter(|c| c.is_forward())
                .map(|_| env.detection.detector_rate(a.power, env.probe_omega(a)) - env.detection.background_rate)
                .sum();
            Ok(SpectrumReference { t_empty: t, r_empty: r, unit_counts: forward_rate * (window.1 - window.0) })
        })
        .collect::<Result<Vec<_>, CqedError>>()?;

    let (acc, p_fall, triggered) = if variant == Variant::PFall {
        let ens = run_transits(&vcfg, runner, TransitOptions { record_paths: true, keep_untriggered: 0 })?;
        let h = p_fall_distribution(&ens.triggered, vcfg.detection.window, vcfg.mode.g_max, P_FALL_BINS);
        let acc = fixed_coupling_spectra(&env, &h.distribution(), &afters)?;
        (acc, Some(h), ens.counts.triggered)
    } else {
        let opts = RunOptions::from_config(&vcfg).truncated(window.1);
        let n = vcfg.numerics.trajectories as u64;
        let parts = runner.chunks(n, |range| {
            let mut acc: Vec<SpectrumAccumulator> = detunings.iter().map(|&d| SpectrumAccumulator::new(d)).collect();
            let mut trig = 0usize;
            for i in range {
                let b = simulate_branches(&env, i, &afters, &opts).map_err(|source| PipelineError::Trajectory { index: i, source })?;
                if let Branches::Triggered(v) = b {
                    trig += 1;
                    for (a, r) in acc.iter_mut().zip(&v) {
                        a.add(r, window, vcfg.numerics.sample_interval);
                    }
                }
            }
            Ok((acc, trig))
        })?;
        let mut acc: Vec<SpectrumAccumulator> = detunings.iter().map(|&d| SpectrumAccumulator::new(d)).collect();
        let mut trig = 0;
        for (p, t) in parts {
            trig += t;
            for (a, b) in acc.iter_mut().zip(&p) {
                a.merge(b);
            }
        }
        (acc, None, trig)
    };
    let points = crate::ensemble::assemble_spectra(&acc, &references)?;
    let (splitting_t, splitting_r) = splittings(&points);
    Ok(SpectraResult {
        variant,
        delta_ca: vcfg.cavity.delta_ca,
        g_bar: splitting_r.and_then(|s| inferred_coupling(s, vcfg.cavity.delta_ca)),
        points,
        splitting_t,
        splitting_r,
        p_fall,
        triggered,
    })
}

/// Outer-peak splittings of `T_A` and `R_A`.
pub fn splittings(points: &[SpectrumPoint]) -> (Option<f64>, Option<f64>) {
    let x: Vec<f64> = points.iter().map(|p| p.delta_pa).collect();
    let t: Vec<f64> = points.iter().map(|p| p.t_atom).collect();
    let r: Vec<f64> = points.iter().map(|p| p.r_atom).collect();
    let o = PeakOptions::default();
    (peak_splitting(&x, &t, &o), peak_splitting(&x, &r, &o))
}

/// Steady-state spectra of a motionless atom with no surface shift,
/// averaged over `(g, weight)` and the standing-wave phase.
fn fixed_coupling_spectra(
    env: &Environment,
    distribution: &[(f64, f64)],
    afters: &[DriveSetting],
) -> Result<Vec<SpectrumAccumulator>, PipelineError> {
    let total: f64 = distribution.iter().map(|d| d.1).sum();
    afters
        .iter()
        .map(|&a| {
            let mut acc = SpectrumAccumulator::new(a.delta_pa);
            let (mut t, mut r) = (0.0, 0.0);
            for &(g, w) in distribution {
                for k in 0..THETA_POINTS {
                    let theta = std::f64::consts::PI * k as f64 / THETA_POINTS as f64;
                    let s = steady_state(&env.params(g, theta, 0.0, env.cfg.atom.gamma0, a))?;
                    let wk = w / total / THETA_POINTS as f64;
                    t += wk * s.transmission;
                    r += wk * s.reflection;
                }
            }
            acc.add_value(t, r);
            Ok(acc)
        })
        .collect()
}

/// Correlation bins: a coarse set spanning the transit for the
/// super-Poissonian comparison and a fine set for short delays.
pub const CORRELATION_COARSE: (f64, usize) = (50e-9, 20);
pub const CORRELATION_FINE: (f64, usize) = (2e-9, 25);

pub fn correlation_analysis(cfg: &PhysicsConfig, ens: &TransitEnsemble, bin: f64, max_lag: usize) -> CorrelationResult {
    let mut acc = CorrelationAccumulator::new(bin, cfg.detection.record_length, max_lag);
    for r in &ens.triggered {
        acc.add(r);
    }
    acc.result()
}

#[derive(Clone, Debug)]
pub struct G2Model {
    pub ensemble: CorrelationCurve,
    /// Single atom at the distribution's mean coupling.
    pub single: CorrelationCurve,
    pub mean_coupling: f64,
    /// Uncoupled control (g = 0).
    pub control: CorrelationCurve,
}

/// Weak-drive `g²(τ)` of the transmitted light for the post-trigger drive,
/// averaged over a coupling distribution `(g, weight)`.
pub fn g2_model(cfg: &PhysicsConfig, distribution: &[(f64, f64)], tau: &[f64]) -> Result<G2Model, PipelineError> {
    let env = Environment::new(cfg);
    let base = env.params(0.0, 0.0, 0.0, cfg.atom.gamma0, env.after);
    let ensemble = ensemble_g2(distribution, &base, tau, &EnsembleG2Options::default())?;
    let total: f64 = distribution.iter().map(|d| d.1).sum();
    let mean = distribution.iter().map(|d| d.0 * d.1).sum::<f64>() / total;
    let space = TruncatedSpace::new();
    let single = g2_transmitted(&crate::cqed::CavityAtomParams { g: mean, ..base }, &space, tau)?;
    let control = g2_transmitted(&base, &space, tau)?;
    Ok(G2Model { ensemble, single, mean_coupling: mean, control })
}

/// Symmetric delay grid `−span..span` with step `step`, containing 0.
pub fn delay_grid(span: f64, step: f64) -> Vec<f64> {
    let n = (span / step).round() as i64;
    (-n..=n).map(|k| k as f64 * step).collect()
}

/// Coupling distribution of triggered atoms over the first 500 ns, both
/// classes combined.
pub fn triggered_coupling_distribution(analysis: &TransitAnalysis) -> Vec<(f64, f64)> {
    let mut h = analysis.classes.g[0].clone();
    h.merge(&analysis.classes.g[1]);
    h.distribution()
}

#[derive(Clone, Debug)]
pub struct FortRun {
    pub stats: FortStatistics,
    pub ensemble: TransitEnsemble,
}

/// Transits with the two-colour trap switched on at the probe switch.
pub fn run_fort(cfg: &PhysicsConfig, runner: &Runner) -> Result<FortRun, PipelineError> {
    let fcfg = cfg.modified(|d| d.fort.enabled = true)?;
    let ensemble = run_transits(&fcfg, runner, TransitOptions::default())?;
    let stats = fort_statistics(&ensemble.triggered, fcfg.fort.capture_time, fcfg.fort.horizon);
    Ok(FortRun { stats, ensemble })
}

/// Eigenvalues `(λ₊, λ₋, λ₀)` over a sweep of `Δ_ca` at fixed `g`, with the
/// configured decay rates and no surface shift.
pub fn eigen_sweep(cfg: &PhysicsConfig, g: f64, delta_ca: &[f64]) -> Vec<(f64, [Complex64; 3])> {
    let env = Environment::new(cfg);
    let base = env.params(g, 0.0, 0.0, cfg.atom.gamma0, DriveSetting { power: 0.0, delta_pa: 0.0 });
    let sweep: Vec<_> = delta_ca.iter().map(|&d| crate::cqed::CavityAtomParams { delta_ca: d, delta_pa: d, ..base }).collect();
    delta_ca.iter().copied().zip(track_eigenvalues(&sweep)).collect()
}

/// `U_d(d)` and `U_s(d)` on the equator for `Δ_ca = Δ_pa = delta` at the
/// post-trigger probe power.
pub fn potential_curves(cfg: &PhysicsConfig, delta: f64, d_grid: &[f64]) -> Result<PotentialCurve, PipelineError> {
    let dcfg = cfg.modified(|d| {
        let mhz = crate::units::as_mhz(delta);
        d.cavity.delta_ca_mhz = mhz;
        d.probe.delta_pa_after_mhz = Some(mhz);
    })?;
    let env = Environment::new(&dcfg);
    let r0 = env.major_radius();
    let d_far = d_grid.iter().cloned().fold(0.0, f64::max).max(1e-6);
    let curve = effective_potential_curve(
        d_grid,
        d_far,
        1e-9,
        |d| {
            let p = CylPoint::from_distance(d, 0.0, 0.0, r0);
            let g = env.field.coupling(&p).unwrap_or(0.0);
            let dg = env.field.coupling_gradient(&p).map(|g| g.rho).unwrap_or(0.0);
            (env.params(g, 0.0, env.delta_a(d), env.gamma(d), env.after), dg)
        },
        |d| env.surface.cp_potential_unchecked(d, crate::surface::AtomicState::Ground),
    )?;
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> PhysicsConfig {
        PhysicsConfig::default()
            .with_overrides(&[format!("numerics.trajectories={n}"), "detection.efficiency=1.0".into()])
            .unwrap()
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let cfg = small(150);
        let a = run_transits(&cfg, &Runner::new(1).unwrap(), TransitOptions::default()).unwrap();
        let b = run_transits(&cfg, &Runner::new(3).unwrap(), TransitOptions::default()).unwrap();
        assert_eq!(a.triggered, b.triggered);
        assert_eq!(a.counts, b.counts);
        assert_eq!(a.counts.launched, 150);
    }

    #[test]
    fn variants_switch_forces() {
        let cfg = PhysicsConfig::default();
        let v = Variant::NoForces.apply(&cfg).unwrap();
        assert!(!v.model.surface_force && !v.model.dipole_force && v.model.level_shift);
        let s = Variant::NoSurface.apply(&cfg).unwrap();
        assert!(!s.model.surface_force && s.model.dipole_force);
        assert_eq!(Variant::parse("p-fall"), Some(Variant::PFall));
        assert_eq!(Variant::parse("nope"), None);
    }

    #[test]
    fn empty_detuning_list_is_rejected() {
        let cfg = small(1);
        let r = run_spectra(&cfg, &Runner::new(1).unwrap(), &[], Variant::Full);
        assert!(matches!(r, Err(PipelineError::Invalid(_))));
    }

    #[test]
    fn anticrossing_splitting() {
        let cfg = PhysicsConfig::default();
        let g = crate::units::mhz(40.0);
        let sweep = eigen_sweep(&cfg, g, &[0.0, crate::units::mhz(60.0)]);
        let s0 = (sweep[0].1[0] - sweep[0].1[1]).im.abs();
        assert!((s0 / (2.0 * g) - 1.0).abs() < 0.05, "{}", s0 / (2.0 * g));
    }

    #[test]
    fn red_dipole_potential_is_attractive() {
        let cfg = PhysicsConfig::default();
        let d: Vec<f64> = (1..=30).map(|k| k as f64 * 10e-9).collect();
        let red = potential_curves(&cfg, crate::units::mhz(-40.0), &d).unwrap();
        let blue = potential_curves(&cfg, crate::units::mhz(40.0), &d).unwrap();
        let i = 9; // 100 nm
        assert!(red.dipole[i] < 0.0 && blue.dipole[i] > 0.0, "{} {}", red.dipole[i], blue.dipole[i]);
        assert!(red.surface[i] < 0.0);
    }
}
