//! Atom-surface physics: Casimir-Polder potentials, the surface-induced
//! transition shift, and dipole decay rates modified by the dielectric.
//!
//! The potential uses the interpolation
//! `U(d) = −C3 / (d³ (1 + d/λ_ret))`, which is `−C3/d³` in the near field and
//! `−C3 λ_ret / d⁴` in the retarded regime. Decay rates come from the
//! reflection-coefficient integral for a dipole above a lossless half-space.

use std::f64::consts::PI;
use std::path::Path;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use thiserror::Error;

use crate::config::{DecayModel, PhysicsConfig, Polarization};
use crate::units::consts::HBAR;

#[derive(Debug, Error, PartialEq)]
pub enum SurfaceError {
    #[error("distance {d:e} m is below the cutoff {d_min:e} m")]
    BelowCutoff { d: f64, d_min: f64 },
    #[error("surface table: {0}")]
    Table(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtomicState {
    Ground,
    Excited,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DipoleOrientation {
    /// Parallel to the surface (TE mode).
    Parallel,
    /// Normal to the surface (TM mode).
    Perpendicular,
}

impl From<Polarization> for DipoleOrientation {
    fn from(p: Polarization) -> Self {
        match p {
            Polarization::TE => DipoleOrientation::Parallel,
            Polarization::TM => DipoleOrientation::Perpendicular,
        }
    }
}

/// Two-column `d_nm value` table with linear interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileTable {
    d: Vec<f64>,
    v: Vec<f64>,
}

impl ProfileTable {
    pub fn new(d: Vec<f64>, v: Vec<f64>) -> Result<Self, SurfaceError> {
        if d.len() < 2 || d.len() != v.len() {
            return Err(SurfaceError::Table("need at least two (d, value) rows".into()));
        }
        if !d.windows(2).all(|w| w[1] > w[0]) {
            return Err(SurfaceError::Table("distances must be strictly increasing".into()));
        }
        Ok(Self { d, v })
    }

    /// Parses `d_nm value` rows; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, SurfaceError> {
        let mut d = Vec::new();
        let mut v = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(a)), Some(Ok(b)), None) => {
                    d.push(a * 1e-9);
                    v.push(b);
                }
                _ => return Err(SurfaceError::Table(format!("line {}: expected two numbers", n + 1))),
            }
        }
        Self::new(d, v)
    }

    pub fn load(path: &Path) -> Result<Self, SurfaceError> {
        let text = std::fs::read_to_string(path).map_err(|e| SurfaceError::Table(e.to_string()))?;
        Self::parse(&text)
    }

    /// Linear interpolation; clamps to the end values when `clamp` is set,
    /// otherwise returns `None` outside the table.
    fn eval(&self, x: f64) -> Option<f64> {
        let n = self.d.len();
        if x < self.d[0] || x > self.d[n - 1] {
            return None;
        }
        let i = match self.d.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => return Some(self.v[i]),
            Err(i) => i - 1,
        };
        let t = (x - self.d[i]) / (self.d[i + 1] - self.d[i]);
        Some(self.v[i] + t * (self.v[i + 1] - self.v[i]))
    }

    fn derivative(&self, x: f64) -> Option<f64> {
        let n = self.d.len();
        if x < self.d[0] || x > self.d[n - 1] {
            return None;
        }
        let i = match self.d.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        Some((self.v[i + 1] - self.v[i]) / (self.d[i + 1] - self.d[i]))
    }
}

/// Decay-rate source.
#[derive(Clone, Debug)]
enum DecaySource {
    FreeSpace,
    HalfSpace(Arc<DecayTable>),
    /// `γ/γ₀` versus distance.
    Tabulated(ProfileTable),
}

/// Precomputed half-space rates on a 1 nm grid.
#[derive(Debug)]
struct DecayTable {
    step: f64,
    parallel: Vec<f64>,
    perpendicular: Vec<f64>,
}

const DECAY_TABLE_STEP: f64 = 1e-9;
const DECAY_TABLE_RANGE: f64 = 3e-6;

#[derive(Clone, Debug)]
pub struct SurfaceModel {
    pub c3_ground: f64,
    pub c3_excited: f64,
    pub retardation_length: f64,
    pub d_min: f64,
    pub refractive_index: f64,
    pub gamma0: f64,
    pub wavelength: f64,
    pub orientation: DipoleOrientation,
    decay: DecaySource,
    /// Optional ground-state potential table, `U/h` in MHz.
    potential_table: Option<ProfileTable>,
}

impl SurfaceModel {
    pub fn from_config(cfg: &PhysicsConfig) -> Self {
        let s = &cfg.surface;
        let mut model = Self {
            c3_ground: s.c3_ground,
            c3_excited: s.c3_excited,
            retardation_length: s.retardation_length,
            d_min: s.d_min,
            refractive_index: s.refractive_index,
            gamma0: cfg.atom.gamma0,
            wavelength: cfg.atom.wavelength,
            orientation: cfg.mode.polarization.into(),
            decay: DecaySource::FreeSpace,
            potential_table: None,
        };
        if s.decay_model == DecayModel::AnalyticHalfspace {
            model.decay = DecaySource::HalfSpace(cached_decay_table(model.wavelength, model.refractive_index));
        }
        model
    }

    /// Replaces the decay model by a `d_nm γ/γ₀` table.
    pub fn with_decay_table(mut self, table: ProfileTable) -> Self {
        self.decay = DecaySource::Tabulated(table);
        self
    }

    /// Replaces the ground-state potential by a `d_nm U/h[MHz]` table.
    pub fn with_potential_table(mut self, table: ProfileTable) -> Self {
        self.potential_table = Some(table);
        self
    }

    fn check(&self, d: f64) -> Result<(), SurfaceError> {
        if d < self.d_min {
            Err(SurfaceError::BelowCutoff { d, d_min: self.d_min })
        } else {
            Ok(())
        }
    }

    fn c3(&self, state: AtomicState) -> f64 {
        match state {
            AtomicState::Ground => self.c3_ground,
            AtomicState::Excited => self.c3_excited,
        }
    }

    fn analytic_potential(&self, d: f64, c3: f64) -> f64 {
        -c3 / (d * d * d * (1.0 + d / self.retardation_length))
    }

    /// `−dU/dd` for the analytic form; negative (toward the surface).
    fn analytic_force(&self, d: f64, c3: f64) -> f64 {
        let x = d / self.retardation_length;
        let denom = d.powi(4) * (1.0 + x) * (1.0 + x);
        -c3 * (3.0 * (1.0 + x) + x) / denom
    }

    /// Casimir-Polder potential in J.
    pub fn cp_potential(&self, d: f64, state: AtomicState) -> Result<f64, SurfaceError> {
        self.check(d)?;
        Ok(self.cp_potential_unchecked(d, state))
    }

    /// Radial force `−dU/dd` in N (negative means attraction).
    pub fn cp_force(&self, d: f64, state: AtomicState) -> Result<f64, SurfaceError> {
        self.check(d)?;
        Ok(self.cp_force_unchecked(d, state))
    }

    /// Surface shift of the transition, `δ_a = (U_e − U_g)/ħ` in rad/s.
    pub fn level_shift(&self, d: f64) -> Result<f64, SurfaceError> {
        self.check(d)?;
        Ok(self.level_shift_unchecked(d))
    }

    /// As [`Self::cp_potential`] without the cutoff check. Any `d > 0` is
    /// accepted; integrator stages may probe slightly below `d_min`.
    pub fn cp_potential_unchecked(&self, d: f64, state: AtomicState) -> f64 {
        if state == AtomicState::Ground {
            if let Some(t) = &self.potential_table {
                let h = 2.0 * PI * HBAR;
                return t.eval(d).map(|v| v * 1e6 * h).unwrap_or(0.0);
            }
        }
        self.analytic_potential(d, self.c3(state))
    }

    pub fn cp_force_unchecked(&self, d: f64, state: AtomicState) -> f64 {
        if state == AtomicState::Ground {
            if let Some(t) = &self.potential_table {
                let h = 2.0 * PI * HBAR;
                return t.derivative(d).map(|v| -v * 1e6 * h).unwrap_or(0.0);
            }
        }
        self.analytic_force(d, self.c3(state))
    }

    pub fn level_shift_unchecked(&self, d: f64) -> f64 {
        let ue = self.cp_potential_unchecked(d, AtomicState::Excited);
        let ug = self.cp_potential_unchecked(d, AtomicState::Ground);
        (ue - ug) / HBAR
    }

    /// Amplitude decay rate for the configured dipole orientation.
    pub fn modified_decay(&self, d: f64) -> f64 {
        self.modified_decay_for(d, self.orientation)
    }

    pub fn modified_decay_for(&self, d: f64, orientation: DipoleOrientation) -> f64 {
        let d = d.max(0.0);
        match &self.decay {
            DecaySource::FreeSpace => self.gamma0,
            DecaySource::Tabulated(t) => self.gamma0 * t.eval(d).unwrap_or(1.0),
            DecaySource::HalfSpace(table) => {
                let x = d / table.step;
                let i = x.floor() as usize;
                let values = match orientation {
                    DipoleOrientation::Parallel => &table.parallel,
                    DipoleOrientation::Perpendicular => &table.perpendicular,
                };
                if i + 1 < values.len() {
                    let t = x - i as f64;
                    self.gamma0 * (values[i] + t * (values[i + 1] - values[i]))
                } else {
                    self.gamma0 * halfspace_decay_ratio(d, self.wavelength, self.refractive_index, orientation)
                }
            }
        }
    }

}

/// Tables depend only on wavelength and index; they are shared process-wide.
fn cached_decay_table(wavelength: f64, n: f64) -> Arc<DecayTable> {
    static CACHE: OnceLock<Mutex<HashMap<(u64, u64), Arc<DecayTable>>>> = OnceLock::new();
    let key = (wavelength.to_bits(), n.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(&key) {
        return t.clone();
    }
    let count = (DECAY_TABLE_RANGE / DECAY_TABLE_STEP).round() as usize + 1;
    let eval = |o| {
        (0..count)
            .map(|i| halfspace_decay_ratio(i as f64 * DECAY_TABLE_STEP, wavelength, n, o))
            .collect()
    };
    let table = Arc::new(DecayTable {
        step: DECAY_TABLE_STEP,
        parallel: eval(DipoleOrientation::Parallel),
        perpendicular: eval(DipoleOrientation::Perpendicular),
    });
    cache.lock().unwrap().insert(key, table.clone());
    table
}

// ---------------------------------------------------------------------------
// Half-space decay rate
// ---------------------------------------------------------------------------

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pn1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn composite_gl(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    thread_local! {
        static NODES: (Vec<f64>, Vec<f64>) = gauss_legendre(10);
    }
    NODES.with(|(x, w)| {
        let h = (b - a) / panels as f64;
        let mut sum = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (xi, wi) in x.iter().zip(w) {
                sum += wi * f(mid + 0.5 * h * xi);
            }
        }
        0.5 * h * sum
    })
}

/// Fresnel coefficients `(r_s, r_p)` for normalized in-plane wavevector `s`
/// and `s_z = √(1 − s²)` on the physical branch.
fn fresnel(s: f64, sz: Complex64, eps: f64) -> (Complex64, Complex64) {
    let sz2 = (Complex64::new(eps - s * s, 0.0)).sqrt();
    let rs = (sz - sz2) / (sz + sz2);
    let rp = (eps * sz - sz2) / (eps * sz + sz2);
    (rs, rp)
}

/// `γ(d)/γ₀` for a dipole at distance `d` above a half-space of index `n`.
///
/// Propagating waves (`s < 1`) are integrated in the angle `s = sin t`,
/// frustrated-total-internal-reflection waves (`1 < s < n`) in
/// `s = cosh u`. Beyond `s = n` the integrand is purely imaginary.
pub fn halfspace_decay_ratio(d: f64, wavelength: f64, n: f64, orientation: DipoleOrientation) -> f64 {
    let k = 2.0 * PI / wavelength;
    let eps = n * n;
    let phase = 2.0 * k * d;
    let panels = (phase / PI).ceil() as usize + 4;
    let weight = |s: f64, sz: Complex64| -> Complex64 {
        let (rs, rp) = fresnel(s, sz, eps);
        match orientation {
            DipoleOrientation::Perpendicular => 1.5 * s * s * rp,
            DipoleOrientation::Parallel => 0.75 * (rs - sz * sz * rp),
        }
    };
    let i = Complex64::i();
    // ∫ (s/s_z) W e^{2ikd s_z} ds with ds/s_z = dt
    let prop = composite_gl(0.0, 0.5 * PI, panels, |t| {
        let (s, c) = t.sin_cos();
        let sz = Complex64::new(c, 0.0);
        (weight(s, sz) * s * (i * phase * c).exp()).re
    });
    let umax = n.acosh();
    let evan_panels = (phase * (eps - 1.0).sqrt() / PI).ceil() as usize + 4;
    // ds/s_z = −i du
    let evan = composite_gl(0.0, umax, evan_panels, |u| {
        let s = u.cosh();
        let q = u.sinh();
        let sz = Complex64::new(0.0, q);
        (weight(s, sz) * s * (-i) * (-phase * q).exp()).re
    });
    1.0 + prop + evan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz;
    use proptest::prelude::*;

    fn model() -> SurfaceModel {
        SurfaceModel::from_config(&PhysicsConfig::default())
    }

    fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn potential_vanishes_at_infinity() {
        let m = model();
        let u = m.cp_potential(1.0, AtomicState::Ground).unwrap();
        assert!(u < 0.0 && u > -1e-50);
    }

    #[test]
    fn near_field_cubic_scaling() {
        let mut m = model();
        m.retardation_length = 1.0; // push retardation far out
        let d = 2e-9;
        let r = m.cp_potential(2.0 * d, AtomicState::Ground).unwrap() / m.cp_potential(d, AtomicState::Ground).unwrap();
        assert!((r - 0.125).abs() < 1e-6);
        let s = m.level_shift(2.0 * d).unwrap() / m.level_shift(d).unwrap();
        assert!((s - 0.125).abs() < 1e-6);
    }

    #[test]
    fn retarded_quartic_limit() {
        let m = model();
        let d = 1e-3;
        let u = m.cp_potential(d, AtomicState::Ground).unwrap();
        let limit = -m.c3_ground * m.retardation_length / d.powi(4);
        assert!((u / limit - 1.0).abs() < 1e-3);
    }

    #[test]
    fn ground_potential_equals_linewidth_near_65nm() {
        let m = model();
        let hg = HBAR * m.gamma0;
        let root = bisect(10e-9, 500e-9, |d| -m.cp_potential(d, AtomicState::Ground).unwrap() - hg);
        assert!((root - 65e-9).abs() < 0.5e-9, "root at {root:e}");
    }

    #[test]
    fn excited_shift_exceeds_10mhz_below_60nm() {
        let m = model();
        for d in [5e-9, 20e-9, 40e-9, 60e-9] {
            let shift = m.level_shift(d).unwrap();
            assert!(shift <= -mhz(10.0), "{d:e}: {}", shift / mhz(1.0));
        }
        assert!(m.level_shift(80e-9).unwrap() > -mhz(10.0));
    }

    #[test]
    fn cutoff_is_an_error() {
        let m = model();
        assert_eq!(
            m.cp_potential(0.5e-9, AtomicState::Ground),
            Err(SurfaceError::BelowCutoff { d: 0.5e-9, d_min: 1e-9 })
        );
        assert!(m.level_shift(0.0).is_err());
    }

    #[test]
    fn free_space_limit_of_decay() {
        let m = model();
        let lam = m.wavelength;
        for o in [DipoleOrientation::Parallel, DipoleOrientation::Perpendicular] {
            let r10 = m.modified_decay_for(10.0 * lam, o) / m.gamma0;
            assert!((r10 - 1.0).abs() < 0.05, "{o:?}: {r10}");
            let r100 = halfspace_decay_ratio(100.0 * lam, lam, 1.45, o);
            assert!((r100 - 1.0).abs() < 1e-3, "{o:?}: {r100}");
        }
    }

    #[test]
    fn perpendicular_enhanced_at_contact() {
        let m = model();
        let par = m.modified_decay_for(0.0, DipoleOrientation::Parallel);
        let perp = m.modified_decay_for(0.0, DipoleOrientation::Perpendicular);
        assert!(perp > par && par > m.gamma0);
    }

    #[test]
    fn perfect_mirror_limits() {
        // Large index approaches the ideal mirror, where r_s = −1, r_p = 1 and
        // the integrals have closed forms in x = 2kd.
        let lam = 852e-9;
        let d = 0.05 * lam;
        let x = 4.0 * PI * d / lam;
        let c0 = x.sin() / x;
        let c2 = x.sin() / x + 2.0 * x.cos() / (x * x) - 2.0 * x.sin() / x.powi(3);
        let perp_ideal = 1.0 + 1.5 * (c0 - c2);
        let par_ideal = 1.0 - 0.75 * (c0 + c2);
        let perp = halfspace_decay_ratio(d, lam, 1e5, DipoleOrientation::Perpendicular);
        let par = halfspace_decay_ratio(d, lam, 1e5, DipoleOrientation::Parallel);
        assert!((perp - perp_ideal).abs() < 2e-3, "{perp} vs {perp_ideal}");
        assert!((par - par_ideal).abs() < 2e-3, "{par} vs {par_ideal}");
        assert!(perp > 1.9 && par < 0.1);
    }

    #[test]
    fn table_decay_matches_direct() {
        let m = model();
        for d in [0.0, 37.3e-9, 412.7e-9, 2.9e-6] {
            let direct = halfspace_decay_ratio(d, m.wavelength, 1.45, DipoleOrientation::Parallel) * m.gamma0;
            assert!((m.modified_decay(d) - direct).abs() < 1e-5 * m.gamma0);
        }
    }

    #[test]
    fn tabulated_sources() {
        let t = ProfileTable::parse("# d_nm ratio\n0 2\n100 1\n").unwrap();
        let m = model().with_decay_table(t);
        assert!((m.modified_decay(50e-9) / m.gamma0 - 1.5).abs() < 1e-12);
        let u = ProfileTable::parse("1 -10\n101 -0\n").unwrap();
        let m = m.with_potential_table(u);
        let h = 2.0 * PI * HBAR;
        let pot = m.cp_potential(51e-9, AtomicState::Ground).unwrap();
        assert!((pot / (h * 1e6) + 5.0).abs() < 1e-9);
        assert!(m.cp_force(51e-9, AtomicState::Ground).unwrap() < 0.0);
        assert!(ProfileTable::parse("1 2 3\n").is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn force_is_attractive_and_matches_finite_difference(d in 2e-9f64..2e-6) {
            let m = model();
            let f = m.cp_force(d, AtomicState::Ground).unwrap();
            prop_assert!(f < 0.0);
            let h = d * 1e-5;
            let fd = -(m.cp_potential(d + h, AtomicState::Ground).unwrap()
                - m.cp_potential(d - h, AtomicState::Ground).unwrap()) / (2.0 * h);
            prop_assert!((fd - f).abs() <= 1e-6 * f.abs());
        }

        #[test]
        fn shift_is_red_and_consistent(d in 1e-9f64..5e-6, e in 1e-9f64..1e-7) {
            let m = model();
            let shift = m.level_shift(d).unwrap();
            prop_assert!(shift <= 0.0);
            prop_assert!(m.level_shift(d + e).unwrap().abs() <= shift.abs());
            let direct = (m.cp_potential(d, AtomicState::Excited).unwrap()
                - m.cp_potential(d, AtomicState::Ground).unwrap()) / HBAR;
            prop_assert_eq!(shift, direct);
        }

        #[test]
        fn potential_monotone_increasing(d in 1e-9f64..5e-6, e in 1e-10f64..1e-7) {
            let m = model();
            let a = m.cp_potential(d, AtomicState::Ground).unwrap();
            let b = m.cp_potential(d + e, AtomicState::Ground).unwrap();
            prop_assert!(a < b && b < 0.0);
        }
    }
}
