//! Centre-of-mass motion of a single atom near the resonator with the
//! closed-loop trigger.
//!
//! The state is Cartesian `(x, y, z, vx, vy, vz)` with the symmetry axis
//! along `z`. Forces are gravity, the Casimir-Polder attraction, the
//! quasi-static cavity dipole force and, once switched on, the two-colour
//! FORT. Detection events are generated segment by segment on the FPGA
//! clock grid while the atom moves, so the trigger can switch the drive
//! (and therefore the force) mid-transit.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use thiserror::Error;

use crate::config::{ModelSwitches, PhysicsConfig};
use crate::cqed::{dipole_force, drive_amplitude, steady_state, CavityAtomParams, CqedError, SteadyState};
use crate::detection::{
    drive_settings, generate_segment, DetectionModel, DriveSetting, FluxSegment, PhotonRecord, TriggerConfig,
    TriggerState,
};
use crate::integrator::{dp45_step, next_step, Tolerance};
use crate::mode::{CouplingField, CylPoint, ModeField};
use crate::surface::{AtomicState, SurfaceError, SurfaceModel};
use crate::units::consts::{HBAR, K_B, STANDARD_GRAVITY};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("initial distance {d:e} m is not above the cutoff {d_min:e} m")]
    InitialBelowCutoff { d: f64, d_min: f64 },
    #[error("point inside the dielectric (d = {0:e} m)")]
    InsideDielectric(f64),
    #[error("non-finite state at t = {t:e} s: {state:?}")]
    NonFinite { t: f64, state: [f64; 6] },
    #[error(transparent)]
    Cqed(#[from] CqedError),
}

/// Position, velocity and time of the atom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomKinematics {
    pub position: CylPoint,
    pub velocity: Vector3<f64>,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Fate {
    /// Reached `d ≤ d_min`.
    Crashed,
    /// Left the bounding volume or fell below the interaction region.
    Exited,
    /// Still alive when the integration horizon was reached.
    Trapped,
}

impl Fate {
    pub fn name(self) -> &'static str {
        match self {
            Fate::Crashed => "crashed",
            Fate::Exited => "exited",
            Fate::Trapped => "trapped",
        }
    }
}

/// Quasi-static observables at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub d: f64,
    pub z: f64,
    pub phi: f64,
    pub velocity: Vector3<f64>,
    pub g: f64,
    pub delta_a: f64,
    pub gamma: f64,
    pub transmission: f64,
    pub reflection: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub index: u64,
    pub initial: AtomKinematics,
    pub trigger: Option<f64>,
    pub fate: Fate,
    pub fate_time: f64,
    /// Drive after the switch (equal to the pre-trigger drive if untriggered).
    pub drive_after: DriveSetting,
    /// Post-trigger samples every `sample_interval` while the atom is alive
    /// (or the whole open-loop run for [`integrate`]).
    pub samples: Vec<Sample>,
    /// `(T, R)` on the post-trigger grid `trigger + k·Δ` over the record
    /// length; empty-cavity values once the atom is gone.
    pub trace: Vec<(f64, f64)>,
    /// Pre-trigger path sampled on the clock grid, if requested.
    pub path: Vec<Sample>,
    pub photons: PhotonRecord,
    /// Unwrapped azimuthal travel after the trigger (rad).
    pub azimuth_travel: f64,
    /// Time the FORT was on before the fate, if it was switched on.
    pub fort_residence: Option<f64>,
}

impl TrajectoryRecord {
    /// Mean azimuthal angular velocity after the trigger.
    pub fn mean_phi_dot(&self) -> f64 {
        match self.trigger {
            Some(t0) if self.fate_time > t0 => self.azimuth_travel / (self.fate_time - t0),
            _ => 0.0,
        }
    }
}

/// Two-colour evanescent trap: a repulsive blue wall and an attractive red
/// well, both with the fundamental vertical Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FortField {
    /// Intensity decay lengths are half these field decay lengths.
    pub blue_length: f64,
    pub red_length: f64,
    /// Surface light shifts (J), both positive.
    pub u_blue: f64,
    pub u_red: f64,
    pub waist: f64,
    /// Azimuthal radiation-pressure acceleration at the surface (m/s²); zero
    /// when disabled.
    pub radiation_acceleration: f64,
}

impl FortField {
    pub fn from_config(cfg: &PhysicsConfig) -> Self {
        let f = &cfg.fort;
        let scale = cfg.mode.decay_length / cfg.atom.wavelength;
        Self {
            blue_length: scale * f.blue_wavelength,
            red_length: scale * f.red_wavelength * f.red_mode_decay_factor,
            u_blue: f.blue_shift_per_power * f.blue_power,
            u_red: f.red_shift_per_power * f.red_power,
            waist: cfg.mode.waist,
            radiation_acceleration: if f.radiation_pressure { f.radiation_acceleration } else { 0.0 },
        }
    }

    /// `(U, ∂U/∂d, ∂U/∂z)` with no cutoff check.
    pub fn potential(&self, d: f64, z: f64) -> (f64, f64, f64) {
        let vert = (-2.0 * z * z / (self.waist * self.waist)).exp();
        let b = self.u_blue * (-2.0 * d / self.blue_length).exp();
        let r = self.u_red * (-2.0 * d / self.red_length).exp();
        let radial = b - r;
        let d_radial = -2.0 * b / self.blue_length + 2.0 * r / self.red_length;
        let dz = -4.0 * z / (self.waist * self.waist);
        (radial * vert, d_radial * vert, radial * vert * dz)
    }

    /// Blue-mode intensity relative to the surface value.
    pub fn blue_intensity(&self, d: f64, z: f64) -> f64 {
        (-2.0 * d / self.blue_length - 2.0 * z * z / (self.waist * self.waist)).exp()
    }

    /// Position and depth (J, positive) of the well on the equator, or `None`
    /// if the potential has no minimum outside the surface.
    pub fn well(&self) -> Option<(f64, f64)> {
        if self.u_red <= 0.0 || self.u_blue <= 0.0 {
            return None;
        }
        let kb = 2.0 / self.blue_length;
        let kr = 2.0 / self.red_length;
        if kb <= kr {
            return None;
        }
        let d = (self.u_blue * kb / (self.u_red * kr)).ln() / (kb - kr);
        if d <= 0.0 {
            return None;
        }
        let (u, _, _) = self.potential(d, 0.0);
        (u < 0.0).then_some((d, -u))
    }

    /// Common rescaling of both light shifts that gives well depth `depth`,
    /// keeping their ratio (and so the well position) fixed.
    pub fn calibrated_to_depth(&self, depth: f64) -> Option<Self> {
        let (_, current) = self.well()?;
        let s = depth / current;
        Some(Self { u_blue: self.u_blue * s, u_red: self.u_red * s, ..*self })
    }
}

/// Trap potential and `(∂U/∂ρ, ∂U/∂z)` at `p`.
pub fn fort_potential(p: &CylPoint, fort: &FortField, d_min: f64) -> Result<(f64, (f64, f64)), SurfaceError> {
    let d = p.d();
    if d < d_min {
        return Err(SurfaceError::BelowCutoff { d, d_min });
    }
    let (u, du_dd, du_dz) = fort.potential(d, p.z);
    Ok((u, (du_dd, du_dz)))
}

/// Local internal state of the atom-cavity system.
#[derive(Clone, Copy, Debug)]
pub struct LocalState {
    pub point: CylPoint,
    pub g: f64,
    pub delta_a: f64,
    pub gamma: f64,
    pub params: CavityAtomParams,
    pub steady: SteadyState,
}

enum Stage {
    /// Stage evaluation inside the dielectric; the step must shrink.
    Inside,
    Cqed(CqedError),
}

/// Everything a trajectory needs that does not change between atoms.
#[derive(Clone)]
pub struct Environment {
    pub cfg: PhysicsConfig,
    pub field: Arc<dyn CouplingField>,
    /// Azimuthal mode number, `θ = mφ`.
    pub mode_number: f64,
    pub surface: SurfaceModel,
    pub fort: FortField,
    pub switches: ModelSwitches,
    pub detection: DetectionModel,
    pub trigger: TriggerConfig,
    pub before: DriveSetting,
    pub after: DriveSetting,
    major_radius: f64,
    base: CavityAtomParams,
    omega_a: f64,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment").field("hash", &self.cfg.hash()).finish_non_exhaustive()
    }
}

impl Environment {
    pub fn new(cfg: &PhysicsConfig) -> Self {
        let field = ModeField::from_config(cfg);
        let m = field.k_phi * cfg.toroid.major_radius();
        Self::with_field(cfg, Arc::new(field), m)
    }

    pub fn with_field(cfg: &PhysicsConfig, field: Arc<dyn CouplingField>, mode_number: f64) -> Self {
        let (before, after) = drive_settings(cfg);
        Self {
            cfg: cfg.clone(),
            field,
            mode_number,
            surface: SurfaceModel::from_config(cfg),
            fort: FortField::from_config(cfg),
            switches: cfg.model.clone(),
            detection: DetectionModel::from_params(&cfg.detection),
            trigger: TriggerConfig::from_config(cfg),
            before,
            after,
            major_radius: cfg.toroid.major_radius(),
            base: CavityAtomParams::from_config(cfg),
            omega_a: cfg.atom.transition_frequency(),
        }
    }

    pub fn major_radius(&self) -> f64 {
        self.major_radius
    }

    pub fn probe_omega(&self, drive: DriveSetting) -> f64 {
        self.omega_a + drive.delta_pa
    }

    /// cQED parameters for an atom with the given local values.
    pub fn params(&self, g: f64, theta: f64, delta_a: f64, gamma: f64, drive: DriveSetting) -> CavityAtomParams {
        CavityAtomParams {
            g,
            theta,
            delta_pa: drive.delta_pa,
            delta_a,
            gamma,
            drive: drive_amplitude(drive.power, self.probe_omega(drive)),
            ..self.base
        }
    }

    /// Empty-cavity `(T, R)` for a drive setting.
    pub fn empty_cavity(&self, drive: DriveSetting) -> Result<(f64, f64), CqedError> {
        let s = steady_state(&self.params(0.0, 0.0, 0.0, self.cfg.atom.gamma0, drive))?;
        Ok((s.transmission, s.reflection))
    }

    /// Surface shift at `d` if enabled.
    pub fn delta_a(&self, d: f64) -> f64 {
        if self.switches.level_shift {
            self.surface.level_shift_unchecked(d)
        } else {
            0.0
        }
    }

    /// Atomic decay rate at `d` if surface modification is enabled.
    pub fn gamma(&self, d: f64) -> f64 {
        if self.switches.modified_decay {
            self.surface.modified_decay(d)
        } else {
            self.cfg.atom.gamma0
        }
    }

    /// Internal steady state at Cartesian position `r`.
    pub fn local(&self, r: &Vector3<f64>, drive: DriveSetting) -> Result<LocalState, TrajectoryError> {
        self.local_inner(r, drive).map_err(|e| match e {
            Stage::Cqed(e) => TrajectoryError::Cqed(e),
            Stage::Inside => TrajectoryError::InsideDielectric(CylPoint::from_cartesian(r, self.major_radius).d()),
        })
    }

    fn local_inner(&self, r: &Vector3<f64>, drive: DriveSetting) -> Result<LocalState, Stage> {
        let point = CylPoint::from_cartesian(r, self.major_radius);
        let d = point.d();
        if d <= 0.0 {
            return Err(Stage::Inside);
        }
        let g = self.field.coupling(&point).map_err(|_| Stage::Inside)?;
        let theta = self.mode_number * point.phi();
        let delta_a = self.delta_a(d);
        let gamma = self.gamma(d);
        let params = self.params(g, theta, delta_a, gamma, drive);
        let steady = steady_state(&params).map_err(Stage::Cqed)?;
        Ok(LocalState { point, g, delta_a, gamma, params, steady })
    }

    fn sample(&self, t: f64, y: &[f64; 6], drive: DriveSetting) -> Result<Sample, TrajectoryError> {
        let r = Vector3::new(y[0], y[1], y[2]);
        let l = self.local(&r, drive)?;
        Ok(Sample {
            t,
            d: l.point.d(),
            z: l.point.z,
            phi: l.point.phi(),
            velocity: Vector3::new(y[3], y[4], y[5]),
            g: l.g,
            delta_a: l.delta_a,
            gamma: l.gamma,
            transmission: l.steady.transmission,
            reflection: l.steady.reflection,
        })
    }

    /// Acceleration at `r` for the given drive; `fort_on` adds the trap.
    pub fn acceleration(&self, r: &Vector3<f64>, drive: DriveSetting, fort_on: bool) -> Result<Vector3<f64>, TrajectoryError> {
        self.accel_inner(r, drive, fort_on).map_err(|e| match e {
            Stage::Cqed(e) => TrajectoryError::Cqed(e),
            Stage::Inside => TrajectoryError::InsideDielectric(CylPoint::from_cartesian(r, self.major_radius).d()),
        })
    }

    fn accel_inner(&self, r: &Vector3<f64>, drive: DriveSetting, fort_on: bool) -> Result<Vector3<f64>, Stage> {
        let point = CylPoint::from_cartesian(r, self.major_radius);
        let d = point.d();
        if d <= 0.0 {
            return Err(Stage::Inside);
        }
        let (mut f_rho, mut f_z, mut f_phi) = (0.0, 0.0, 0.0);
        if self.switches.surface_force {
            f_rho += self.surface.cp_force_unchecked(d, AtomicState::Ground);
        }
        if self.switches.dipole_force && drive.power > 0.0 {
            let g = self.field.coupling(&point).map_err(|_| Stage::Inside)?;
            if g > 1e-12 * self.field.g_max() {
                let grad = self.field.coupling_gradient(&point).map_err(|_| Stage::Inside)?;
                let theta = self.mode_number * point.phi();
                let p = self.params(g, theta, self.delta_a(d), self.gamma(d), drive);
                let s = steady_state(&p).map_err(Stage::Cqed)?;
                let grad_theta = if self.switches.probe_radiation_pressure { self.mode_number / point.rho } else { 0.0 };
                let f = dipole_force(&p, &s, (grad.rho, grad.z), grad_theta);
                f_rho += f.rho;
                f_z += f.z;
                f_phi += f.phi;
            }
        }
        let m = self.cfg.atom.mass;
        if fort_on {
            let (_, du_dd, du_dz) = self.fort.potential(d, point.z);
            f_rho -= du_dd;
            f_z -= du_dz;
            if self.fort.radiation_acceleration != 0.0 {
                f_phi += m * self.fort.radiation_acceleration * self.fort.blue_intensity(d, point.z);
            }
        }
        let (rho_hat, phi_hat) = point.basis();
        let mut a = (rho_hat * f_rho + phi_hat * f_phi) / m;
        a.z += f_z / m - STANDARD_GRAVITY;
        Ok(a)
    }

    /// Conservative mechanical energy `½mv² + mgz + U_s(d)` (+ `U_t` when the
    /// trap is on). Meaningful only with the drive off.
    pub fn mechanical_energy(&self, y: &[f64; 6], fort_on: bool) -> f64 {
        let m = self.cfg.atom.mass;
        let point = CylPoint::from_cartesian(&Vector3::new(y[0], y[1], y[2]), self.major_radius);
        let mut e = 0.5 * m * (y[3] * y[3] + y[4] * y[4] + y[5] * y[5]) + m * STANDARD_GRAVITY * y[2];
        if self.switches.surface_force {
            e += self.surface.cp_potential_unchecked(point.d(), AtomicState::Ground);
        }
        if fort_on {
            e += self.fort.potential(point.d(), point.z).0;
        }
        e
    }

    fn tolerance(&self) -> Tolerance<6> {
        let x = self.cfg.numerics.abs_tol;
        let v = x / 1e-6;
        Tolerance { rtol: self.cfg.numerics.rel_tol, atol: [x, x, x, v, v, v] }
    }

    fn outside_bounds(&self, y: &[f64; 6]) -> bool {
        let rho = y[0].hypot(y[1]);
        let p = &self.cfg;
        let falling_out = y[2] < -p.numerics.interaction_half_height && y[5] < 0.0;
        rho > 3.0 * p.toroid.principal_diameter || y[2].abs() > 10.0 * p.mode.waist || falling_out
    }
}

/// Launch state: uniform in `d ∈ (d_min, d_min + extent]` and `φ`, at the
/// configured start height, with a thermal velocity spread superposed on the
/// mean downward speed.
pub fn sample_initial<R: Rng + ?Sized>(cfg: &PhysicsConfig, rng: &mut R) -> AtomKinematics {
    let c = &cfg.cloud;
    let sigma = (K_B * c.temperature / cfg.atom.mass).sqrt();
    let u: f64 = rng.random();
    let d = cfg.surface.d_min + (1.0 - u) * c.transverse_extent;
    let phi = rng.random::<f64>() * TAU;
    let mut n = || -> f64 { StandardNormal.sample(rng) };
    let velocity = Vector3::new(sigma * n(), sigma * n(), -c.mean_arrival_speed + sigma * n());
    AtomKinematics {
        position: CylPoint::from_distance(d, c.start_height, phi, cfg.toroid.major_radius()),
        velocity,
        time: 0.0,
    }
}

/// Deterministic per-trajectory generator: `(seed, index)` selects the key,
/// `stream` separates independent uses (launch and pre-trigger on 0,
/// post-trigger branches on 1, 2, ...).
pub fn trajectory_rng(seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(index)));
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Event {
    None,
    Crashed(f64),
    Exited(f64),
}

/// Integrator state between checkpoints.
#[derive(Clone, Debug)]
struct Propagator {
    t: f64,
    y: [f64; 6],
    dydt: [f64; 6],
    h: f64,
    drive: DriveSetting,
    fort_on: bool,
    azimuth_travel: f64,
    major_radius: f64,
}

fn state_of(k: &AtomKinematics) -> [f64; 6] {
    let r = k.position.to_cartesian();
    [r.x, r.y, r.z, k.velocity.x, k.velocity.y, k.velocity.z]
}

impl Propagator {
    fn new(env: &Environment, init: &AtomKinematics, drive: DriveSetting) -> Result<Self, TrajectoryError> {
        let d = init.position.d();
        if d <= env.surface.d_min {
            return Err(TrajectoryError::InitialBelowCutoff { d, d_min: env.surface.d_min });
        }
        let y = state_of(init);
        let mut p = Self { t: init.time, y, dydt: [0.0; 6], h: 1e-9, drive, fort_on: false, azimuth_travel: 0.0, major_radius: env.major_radius };
        p.refresh(env)?;
        Ok(p)
    }

    fn rhs(env: &Environment, drive: DriveSetting, fort_on: bool, y: &[f64; 6]) -> Result<[f64; 6], Stage> {
        let a = env.accel_inner(&Vector3::new(y[0], y[1], y[2]), drive, fort_on)?;
        Ok([y[3], y[4], y[5], a.x, a.y, a.z])
    }

    /// Recomputes the derivative after a change of drive, trap or velocity.
    fn refresh(&mut self, env: &Environment) -> Result<(), TrajectoryError> {
        self.dydt = Self::rhs(env, self.drive, self.fort_on, &self.y).map_err(|e| match e {
            Stage::Cqed(e) => TrajectoryError::Cqed(e),
            Stage::Inside => TrajectoryError::NonFinite { t: self.t, state: self.y },
        })?;
        Ok(())
    }

    fn d_of(env: &Environment, y: &[f64; 6]) -> f64 {
        y[0].hypot(y[1]) - env.major_radius
    }

    /// Largest step allowed by the near-surface cap and the global maximum.
    fn step_cap(env: &Environment, y: &[f64; 6]) -> f64 {
        let v = (y[3] * y[3] + y[4] * y[4] + y[5] * y[5]).sqrt();
        let cap = if v > 0.0 { env.cfg.mode.decay_length / (10.0 * v) } else { f64::INFINITY };
        cap.min(env.cfg.numerics.max_step)
    }

    /// Advances to `t_end` unless the atom crashes or leaves first.
    fn advance_to<R: Rng + ?Sized>(
        &mut self,
        env: &Environment,
        t_end: f64,
        mut rng: Option<&mut R>,
    ) -> Result<Event, TrajectoryError> {
        let tol = env.tolerance();
        let d_min = env.surface.d_min;
        let (drive, fort_on) = (self.drive, self.fort_on);
        let mut f = |_t: f64, y: &[f64; 6]| Self::rhs(env, drive, fort_on, y);
        while self.t < t_end {
            let remaining = t_end - self.t;
            let free = self.h.min(Self::step_cap(env, &self.y));
            let last = free >= remaining * (1.0 - 1e-6);
            let h = if last { remaining } else { free };
            if !last && h < 1e-18 {
                return Ok(Event::Crashed(self.t));
            }
            let attempt = match dp45_step(&mut f, self.t, &self.y, &self.dydt, h, &tol) {
                Ok(a) => a,
                Err(Stage::Inside) => {
                    self.h = 0.25 * h;
                    continue;
                }
                Err(Stage::Cqed(e)) => return Err(e.into()),
            };
            if !attempt.error.is_finite() {
                self.h = 0.25 * h;
                continue;
            }
            if attempt.error > 1.0 {
                self.h = next_step(h, attempt.error);
                continue;
            }
            if attempt.y.iter().any(|v| !v.is_finite()) {
                return Err(TrajectoryError::NonFinite { t: self.t + h, state: attempt.y });
            }
            if Self::d_of(env, &attempt.y) <= d_min {
                let tc = self.locate_crash(&mut f, h, &tol, d_min);
                return Ok(Event::Crashed(tc));
            }
            let phi0 = self.y[1].atan2(self.y[0]);
            let phi1 = attempt.y[1].atan2(attempt.y[0]);
            let mut dphi = phi1 - phi0;
            if dphi > std::f64::consts::PI {
                dphi -= TAU;
            } else if dphi < -std::f64::consts::PI {
                dphi += TAU;
            }
            self.azimuth_travel += dphi;
            // snap onto the checkpoint to avoid sub-ulp leftovers
            self.t = if last { t_end } else { self.t + h };
            self.y = attempt.y;
            self.dydt = attempt.dydt;
            self.h = if last { next_step(h, attempt.error).max(self.h) } else { next_step(h, attempt.error) };
            if env.outside_bounds(&self.y) {
                return Ok(Event::Exited(self.t));
            }
            if env.switches.recoil_heating {
                if let Some(r) = rng.as_deref_mut() {
                    if self.recoil(env, h, r)? {
                        self.dydt = Self::rhs(env, drive, fort_on, &self.y).map_err(|e| match e {
                            Stage::Cqed(e) => TrajectoryError::Cqed(e),
                            Stage::Inside => TrajectoryError::NonFinite { t: self.t, state: self.y },
                        })?;
                    }
                }
            }
        }
        Ok(Event::None)
    }

    /// Bisects the step length for the time at which `d = d_min`.
    fn locate_crash(
        &self,
        f: &mut impl FnMut(f64, &[f64; 6]) -> Result<[f64; 6], Stage>,
        h: f64,
        tol: &Tolerance<6>,
        d_min: f64,
    ) -> f64 {
        let (mut lo, mut hi) = (0.0, h);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let below = match dp45_step(f, self.t, &self.y, &self.dydt, mid, tol) {
                Ok(a) => a.y[0].hypot(a.y[1]) - self.major_radius <= d_min,
                Err(_) => true,
            };
            if below {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * (self.t + h).abs().max(1e-12) {
                break;
            }
        }
        self.t + 0.5 * (lo + hi)
    }

    /// Poissonian photon-recoil kicks over a step of length `h`. Returns
    /// whether the velocity changed.
    fn recoil<R: Rng + ?Sized>(&mut self, env: &Environment, h: f64, rng: &mut R) -> Result<bool, TrajectoryError> {
        if self.drive.power <= 0.0 {
            return Ok(false);
        }
        let r = Vector3::new(self.y[0], self.y[1], self.y[2]);
        let l = env.local(&r, self.drive)?;
        let rate = 2.0 * l.gamma * l.steady.excited_population();
        let mean = rate * h;
        if !(mean > 0.0) {
            return Ok(false);
        }
        let n = Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0);
        if n == 0 {
            return Ok(false);
        }
        let k = TAU / env.cfg.atom.wavelength;
        let vr = HBAR * k / env.cfg.atom.mass;
        let (_, phi_hat) = l.point.basis();
        let wa = l.steady.alpha.norm_sqr();
        let wb = l.steady.beta.norm_sqr();
        let pa = if wa + wb > 0.0 { wa / (wa + wb) } else { 0.5 };
        let mut dv = Vector3::zeros();
        for _ in 0..n {
            let sign = if rng.random::<f64>() < pa { 1.0 } else { -1.0 };
            dv += phi_hat * (sign * vr);
            let cz: f64 = 2.0 * rng.random::<f64>() - 1.0;
            let az = rng.random::<f64>() * TAU;
            let s = (1.0 - cz * cz).sqrt();
            dv += Vector3::new(s * az.cos(), s * az.sin(), cz) * vr;
        }
        self.y[3] += dv.x;
        self.y[4] += dv.y;
        self.y[5] += dv.z;
        Ok(true)
    }
}

/// Settings of a closed-loop run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    /// Keep the pre-trigger path on the clock grid.
    pub record_path: bool,
    /// Post-trigger record length for samples, trace and photon events.
    pub record_length: f64,
    /// Integration horizon after the trigger; alive atoms are then trapped.
    pub horizon: f64,
    /// Switch the FORT on together with the probe.
    pub fort: bool,
    /// Untriggered atoms still alive this long after launch are abandoned.
    pub pre_trigger_limit: f64,
}

impl RunOptions {
    pub fn from_config(cfg: &PhysicsConfig) -> Self {
        let record = cfg.detection.record_length;
        Self {
            record_path: false,
            record_length: record,
            horizon: cfg.fort.horizon.max(record),
            fort: cfg.fort.enabled,
            pre_trigger_limit: 1e-3,
        }
    }

    /// Short post-trigger run ending at `t_end` after the trigger, for spectra.
    pub fn truncated(mut self, t_end: f64) -> Self {
        self.record_length = t_end;
        self.horizon = t_end;
        self
    }
}

/// State at the trigger from which post-trigger branches start.
#[derive(Clone, Debug)]
pub struct TriggerSnapshot {
    pub index: u64,
    pub initial: AtomKinematics,
    pub trigger: f64,
    pub photons: PhotonRecord,
    pub path: Vec<Sample>,
    prop: Propagator,
}

impl TriggerSnapshot {
    /// Atom state at the trigger.
    pub fn kinematics(&self, env: &Environment) -> AtomKinematics {
        let y = &self.prop.y;
        AtomKinematics {
            position: CylPoint::from_cartesian(&Vector3::new(y[0], y[1], y[2]), env.major_radius),
            velocity: Vector3::new(y[3], y[4], y[5]),
            time: self.trigger,
        }
    }
}

#[derive(Clone, Debug)]
pub enum PreTrigger {
    Triggered(Box<TriggerSnapshot>),
    Untriggered(Box<TrajectoryRecord>),
}

fn flux(env: &Environment, y: &[f64; 6], drive: DriveSetting) -> Result<(f64, f64), TrajectoryError> {
    let l = env.local(&Vector3::new(y[0], y[1], y[2]), drive)?;
    Ok((l.steady.transmission, l.steady.reflection))
}

fn segment(env: &Environment, t0: f64, t1: f64, f0: (f64, f64), f1: (f64, f64), drive: DriveSetting) -> FluxSegment {
    let p = drive.power;
    FluxSegment {
        t0,
        t1,
        forward: (f0.0 * p, f1.0 * p),
        reflected: (f0.1 * p, f1.1 * p),
        omega: env.probe_omega(drive),
    }
}

/// Launch-to-trigger part of a closed-loop transit. The integrator stops on
/// every clock tick, detection events for the elapsed tick are drawn from
/// the flux at its two ends and the trigger window is evaluated.
pub fn run_pre_trigger<R: Rng + ?Sized>(
    env: &Environment,
    index: u64,
    init: &AtomKinematics,
    rng: &mut R,
    opts: &RunOptions,
) -> Result<PreTrigger, TrajectoryError> {
    let drive = env.before;
    let mut prop = Propagator::new(env, init, drive)?;
    let mut photons = PhotonRecord::new(env.detection.resolution);
    let mut trig = TriggerState::new(env.trigger, env.detection.resolution);
    let clock = env.trigger.clock_period;
    let mut path = Vec::new();
    if opts.record_path {
        path.push(env.sample(prop.t, &prop.y, drive)?);
    }
    let mut f0 = flux(env, &prop.y, drive)?;
    let mut t_prev = prop.t;
    let mut k = (prop.t / clock).floor() as u64 + 1;
    let finish = |fate: Fate, t: f64, photons: PhotonRecord, path: Vec<Sample>, prop: &Propagator| TrajectoryRecord {
        index,
        initial: *init,
        trigger: None,
        fate,
        fate_time: t,
        drive_after: drive,
        samples: Vec::new(),
        trace: Vec::new(),
        path,
        photons,
        azimuth_travel: prop.azimuth_travel,
        fort_residence: None,
    };
    loop {
        let tick = k as f64 * clock;
        match prop.advance_to(env, tick, Some(&mut *rng))? {
            Event::None => {
                let f1 = flux(env, &prop.y, drive)?;
                generate_segment(&env.detection, &segment(env, t_prev, tick, f0, f1, drive), rng, &mut photons);
                f0 = f1;
                t_prev = tick;
                if opts.record_path {
                    path.push(env.sample(tick, &prop.y, drive)?);
                }
                if trig.tick(&photons, tick) {
                    photons.trigger = Some(tick);
                    return Ok(PreTrigger::Triggered(Box::new(TriggerSnapshot {
                        index,
                        initial: *init,
                        trigger: tick,
                        photons,
                        path,
                        prop,
                    })));
                }
                if tick - init.time >= opts.pre_trigger_limit {
                    return Ok(PreTrigger::Untriggered(Box::new(finish(Fate::Trapped, tick, photons, path, &prop))));
                }
            }
            ev @ (Event::Crashed(t) | Event::Exited(t)) => {
                let fate = if matches!(ev, Event::Crashed(_)) { Fate::Crashed } else { Fate::Exited };
                generate_segment(&env.detection, &segment(env, t_prev, t, f0, f0, drive), rng, &mut photons);
                return Ok(PreTrigger::Untriggered(Box::new(finish(fate, t, photons, path, &prop))));
            }
        }
        k += 1;
    }
}

/// Checkpoints on the grid `t0 + kΔ` (`k = 1..=n`) with `extra` merged in.
/// Each entry is `(time, grid index or None)`.
fn checkpoints(t0: f64, dt: f64, n: usize, extra: &[f64]) -> Vec<(f64, Option<usize>)> {
    let mut out: Vec<(f64, Option<usize>)> = (1..=n).map(|k| (t0 + k as f64 * dt, Some(k))).collect();
    for &e in extra {
        let k = (e - t0) / dt;
        let aligned = (k - k.round()).abs() < 1e-6 && k.round() >= 1.0 && (k.round() as usize) <= n;
        if !aligned && e > t0 && e < t0 + n as f64 * dt {
            out.push((e, None));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn is_at(t: f64, target: f64) -> bool {
    (t - target).abs() <= 1e-6 * 1e-9
}

/// Post-trigger part of a transit: the probe (and FORT) switch at
/// `trigger + latency`, samples and the transmission trace are taken every
/// sample interval over the record, and the atom is followed to its fate or
/// the horizon.
pub fn run_post_trigger<R: Rng + ?Sized>(
    env: &Environment,
    snap: &TriggerSnapshot,
    after: DriveSetting,
    rng: &mut R,
    opts: &RunOptions,
) -> Result<TrajectoryRecord, TrajectoryError> {
    let t0 = snap.trigger;
    let mut prop = snap.prop.clone();
    prop.azimuth_travel = 0.0;
    let mut photons = snap.photons.clone();
    let before = env.before;
    let na_before = env.empty_cavity(before)?;
    let na_after = env.empty_cavity(after)?;
    let empty = |d: DriveSetting| if d == after { na_after } else { na_before };
    let dt = env.cfg.numerics.sample_interval;
    let n = (opts.record_length / dt).round() as usize;
    let t_switch = t0 + env.trigger.switch_latency;
    let ks = env.trigger.switch_latency / dt;
    let switch_grid = ((ks - ks.round()).abs() < 1e-6).then(|| ks.round() as usize);
    let points = checkpoints(t0, dt, n, &[t_switch]);

    let mut switched = false;
    let mut fort_start = None;
    let mut fate: Option<(Fate, f64)> = None;
    let mut samples = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(n);
    let s0 = env.sample(t0, &prop.y, before)?;
    samples.push(s0);
    trace.push((s0.transmission, s0.reflection));
    let mut f0 = (s0.transmission, s0.reflection);
    let mut t_prev = t0;

    for &(tc, grid) in &points {
        let is_switch = !switched && (grid.is_some() && grid == switch_grid || grid.is_none() && is_at(tc, t_switch));
        let drive = prop.drive;
        if fate.is_none() {
            match prop.advance_to(env, tc, Some(&mut *rng))? {
                Event::None => {
                    let f1 = flux(env, &prop.y, drive)?;
                    generate_segment(&env.detection, &segment(env, t_prev, tc, f0, f1, drive), rng, &mut photons);
                    f0 = f1;
                }
                ev @ (Event::Crashed(tf) | Event::Exited(tf)) => {
                    let kind = if matches!(ev, Event::Crashed(_)) { Fate::Crashed } else { Fate::Exited };
                    generate_segment(&env.detection, &segment(env, t_prev, tf, f0, f0, drive), rng, &mut photons);
                    let na = empty(drive);
                    generate_segment(&env.detection, &segment(env, tf, tc, na, na, drive), rng, &mut photons);
                    fate = Some((kind, tf));
                }
            }
        } else {
            let na = empty(drive);
            generate_segment(&env.detection, &segment(env, t_prev, tc, na, na, drive), rng, &mut photons);
        }
        t_prev = tc;
        if is_switch {
            switched = true;
            prop.drive = after;
            if fate.is_none() {
                prop.fort_on = opts.fort;
                if opts.fort {
                    fort_start = Some(tc);
                }
                prop.refresh(env)?;
                f0 = flux(env, &prop.y, after)?;
            }
        }
        if let Some(k) = grid {
            if k < n {
                if fate.is_none() {
                    let s = env.sample(tc, &prop.y, prop.drive)?;
                    trace.push((s.transmission, s.reflection));
                    samples.push(s);
                } else {
                    trace.push(empty(prop.drive));
                }
            }
        }
    }

    if fate.is_none() && !switched {
        match prop.advance_to(env, t_switch, Some(&mut *rng))? {
            Event::None => {
                prop.drive = after;
                prop.fort_on = opts.fort;
                if opts.fort {
                    fort_start = Some(t_switch);
                }
                prop.refresh(env)?;
            }
            Event::Crashed(tf) => fate = Some((Fate::Crashed, tf)),
            Event::Exited(tf) => fate = Some((Fate::Exited, tf)),
        }
    }
    let horizon = t0 + opts.horizon.max(n as f64 * dt);
    let (fate, fate_time) = match fate {
        Some(f) => f,
        None => match prop.advance_to(env, horizon, Some(&mut *rng))? {
            Event::None => (Fate::Trapped, horizon),
            Event::Crashed(tf) => (Fate::Crashed, tf),
            Event::Exited(tf) => (Fate::Exited, tf),
        },
    };
    Ok(TrajectoryRecord {
        index: snap.index,
        initial: snap.initial,
        trigger: Some(t0),
        fate,
        fate_time,
        drive_after: after,
        samples,
        trace,
        path: snap.path.clone(),
        photons,
        azimuth_travel: prop.azimuth_travel,
        fort_residence: fort_start.map(|ts| (fate_time - ts).max(0.0)),
    })
}

/// Outcome of a closed-loop transit with several post-trigger branches.
#[derive(Clone, Debug)]
pub enum Branches {
    Untriggered(Box<TrajectoryRecord>),
    Triggered(Vec<TrajectoryRecord>),
}

/// Closed-loop transit of atom `index` from an explicit launch state; one
/// post-trigger branch per entry of `afters`, each with its own stream.
pub fn simulate_from(
    env: &Environment,
    index: u64,
    init: &AtomKinematics,
    afters: &[DriveSetting],
    opts: &RunOptions,
) -> Result<Branches, TrajectoryError> {
    let mut rng = trajectory_rng(env.cfg.numerics.seed, index, 0);
    simulate_with_rng(env, index, init, afters, opts, &mut rng)
}

fn simulate_with_rng(
    env: &Environment,
    index: u64,
    init: &AtomKinematics,
    afters: &[DriveSetting],
    opts: &RunOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Branches, TrajectoryError> {
    match run_pre_trigger(env, index, init, rng, opts)? {
        PreTrigger::Untriggered(r) => Ok(Branches::Untriggered(r)),
        PreTrigger::Triggered(snap) => {
            let seed = env.cfg.numerics.seed;
            let mut out = Vec::with_capacity(afters.len());
            for (b, &after) in afters.iter().enumerate() {
                let mut r = trajectory_rng(seed, index, 1 + b as u64);
                out.push(run_post_trigger(env, &snap, after, &mut r, opts)?);
            }
            Ok(Branches::Triggered(out))
        }
    }
}

/// Closed-loop transit of atom `index` with a launch drawn from the cloud.
pub fn simulate_branches(
    env: &Environment,
    index: u64,
    afters: &[DriveSetting],
    opts: &RunOptions,
) -> Result<Branches, TrajectoryError> {
    let mut rng = trajectory_rng(env.cfg.numerics.seed, index, 0);
    let init = sample_initial(&env.cfg, &mut rng);
    simulate_with_rng(env, index, &init, afters, opts, &mut rng)
}

/// Closed-loop transit with the configured post-trigger drive.
pub fn simulate(env: &Environment, index: u64, opts: &RunOptions) -> Result<TrajectoryRecord, TrajectoryError> {
    match simulate_branches(env, index, &[env.after], opts)? {
        Branches::Untriggered(r) => Ok(*r),
        Branches::Triggered(mut v) => Ok(v.remove(0)),
    }
}

/// Open-loop integration with a prescribed drive schedule and optional trap
/// switch-on time, sampled every sample interval until `t_end` or the fate.
pub fn integrate<R: Rng + ?Sized>(
    env: &Environment,
    init: &AtomKinematics,
    schedule: &crate::detection::DriveSchedule,
    fort_from: Option<f64>,
    t_end: f64,
    mut rng: Option<&mut R>,
) -> Result<TrajectoryRecord, TrajectoryError> {
    let t0 = init.time;
    let mut prop = Propagator::new(env, init, schedule.at(t0))?;
    prop.fort_on = fort_from.is_some_and(|tf| tf <= t0);
    prop.refresh(env)?;
    let dt = env.cfg.numerics.sample_interval;
    let n = ((t_end - t0) / dt).ceil().max(0.0) as usize;
    let mut extra = vec![t_end];
    extra.extend(schedule.switch_time);
    extra.extend(fort_from);
    let mut points = checkpoints(t0, dt, n, &extra);
    points.retain(|p| p.0 <= t_end + 1e-18);
    let mut samples = vec![env.sample(t0, &prop.y, prop.drive)?];
    let mut fate = (Fate::Trapped, t_end);
    for &(tc, _) in &points {
        let tc = tc.min(t_end);
        match prop.advance_to(env, tc, rng.as_deref_mut())? {
            Event::None => {}
            Event::Crashed(t) => {
                fate = (Fate::Crashed, t);
                break;
            }
            Event::Exited(t) => {
                fate = (Fate::Exited, t);
                break;
            }
        }
        let drive = schedule.at(tc);
        let fort = fort_from.is_some_and(|tf| tc >= tf);
        if drive != prop.drive || fort != prop.fort_on {
            prop.drive = drive;
            prop.fort_on = fort;
            prop.refresh(env)?;
        }
        samples.push(env.sample(tc, &prop.y, prop.drive)?);
    }
    Ok(TrajectoryRecord {
        index: 0,
        initial: *init,
        trigger: None,
        fate: fate.0,
        fate_time: fate.1,
        drive_after: schedule.after,
        samples,
        trace: Vec::new(),
        path: Vec::new(),
        photons: PhotonRecord::new(env.detection.resolution),
        azimuth_travel: prop.azimuth_travel,
        fort_residence: fort_from.map(|tf| (fate.1 - tf).max(0.0)),
    })
}

/// Final state of an open-loop run (position and velocity at the last
/// sample).
pub fn final_state(record: &TrajectoryRecord) -> Option<&Sample> {
    record.samples.last()
}
