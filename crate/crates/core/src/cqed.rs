//! Weak-drive steady state of two counter-propagating cavity modes `a`, `b`
//! coupled to a two-level atom.
//!
//! Conventions (rotating frame at the probe frequency `ω_p`, `σ_z ≈ −1`):
//!
//! ```text
//! 0 = −(κ + iΔ_c) α − i h β − i G_a* s + √(2κ_ex) a_in
//! 0 = −(κ + iΔ_c) β − i h α − i G_b* s
//! 0 = −(γ + iΔ_a) s − i (G_a α + G_b β)
//! ```
//!
//! with `Δ_c = Δ_ca − Δ_pa`, `Δ_a = δ_a − Δ_pa`, `G_a = g e^{iθ}/√2`,
//! `G_b = g e^{−iθ}/√2`. Output fields are `t = 1 − √(2κ_ex) α / a_in`
//! (forward) and `r = −√(2κ_ex) β / a_in` (backward). `a_in` is normalized
//! so that `|a_in|²` is the incident photon flux.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use thiserror::Error;

use crate::config::PhysicsConfig;
use crate::units::consts::HBAR;

#[derive(Debug, Error, PartialEq)]
pub enum CqedError {
    #[error("singular steady-state system (no dissipation at an exceptional point)")]
    Singular,
}

/// Inputs of the single-position steady-state problem. All rates in rad/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityAtomParams {
    pub g: f64,
    /// Traveling-wave phase `θ = mφ`.
    pub theta: f64,
    /// Probe detuning from the free-space atomic line, `ω_p − ω_a`.
    pub delta_pa: f64,
    /// Cavity detuning from the free-space atomic line, `ω_c − ω_a`.
    pub delta_ca: f64,
    /// Surface shift of the atomic line.
    pub delta_a: f64,
    pub kappa_i: f64,
    pub kappa_ex: f64,
    pub h: f64,
    /// Atomic amplitude decay rate.
    pub gamma: f64,
    /// Input amplitude, `√(photons/s)`.
    pub drive: f64,
}

impl CavityAtomParams {
    /// Empty-cavity parameters at the pre-trigger probe setting.
    pub fn from_config(cfg: &PhysicsConfig) -> Self {
        let delta_pa = cfg.delta_pa_before();
        Self {
            g: 0.0,
            theta: 0.0,
            delta_pa,
            delta_ca: cfg.cavity.delta_ca,
            delta_a: 0.0,
            kappa_i: cfg.cavity.kappa_i,
            kappa_ex: cfg.cavity.kappa_ex,
            h: cfg.cavity.h,
            gamma: cfg.atom.gamma0,
            drive: drive_amplitude(cfg.probe.power_before, cfg.atom.transition_frequency() + delta_pa),
        }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa_i + self.kappa_ex
    }

    /// Complex couplings `(G_a, G_b)`.
    pub fn couplings(&self) -> (Complex64, Complex64) {
        let a = Complex64::from_polar(self.g * FRAC_1_SQRT_2, self.theta);
        (a, a.conj())
    }
}

/// Input amplitude `√(P / ħω)` for power `P` at angular frequency `ω`.
pub fn drive_amplitude(power: f64, omega: f64) -> f64 {
    (power / (HBAR * omega)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteadyState {
    pub alpha: Complex64,
    pub beta: Complex64,
    /// `⟨σ−⟩`.
    pub sigma: Complex64,
    /// Forward and backward output amplitudes relative to the input.
    pub t: Complex64,
    pub r: Complex64,
    pub transmission: f64,
    pub reflection: f64,
    pub photon_number: f64,
}

impl SteadyState {
    /// Excited-state population in the weak-drive limit, `|⟨σ−⟩|²`.
    pub fn excited_population(&self) -> f64 {
        self.sigma.norm_sqr()
    }
}

fn system_matrix(p: &CavityAtomParams) -> Matrix3<Complex64> {
    let i = Complex64::i();
    let (ga, gb) = p.couplings();
    let cav = Complex64::new(p.kappa(), p.delta_ca - p.delta_pa);
    let atom = Complex64::new(p.gamma, p.delta_a - p.delta_pa);
    let ih = i * p.h;
    Matrix3::new(
        cav, ih, i * ga.conj(),
        ih, cav, i * gb.conj(),
        i * ga, i * gb, atom,
    )
}

/// Solves the linear steady-state equations.
pub fn steady_state(p: &CavityAtomParams) -> Result<SteadyState, CqedError> {
    let m = system_matrix(p);
    let k = (2.0 * p.kappa_ex).sqrt();
    // Unit drive: the response is linear, amplitudes are rescaled below.
    let rhs = Vector3::new(Complex64::new(k, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    // Hadamard bound: |det| ≤ Π row norms, with equality for orthogonal rows.
    let bound: f64 = (0..3).map(|i| m.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).product();
    let lu = m.lu();
    let det = lu.determinant();
    if !(det.norm() > 1e-14 * bound) {
        return Err(CqedError::Singular);
    }
    let x = lu.solve(&rhs).ok_or(CqedError::Singular)?;
    let t = Complex64::new(1.0, 0.0) - k * x[0];
    let r = -k * x[1];
    let alpha = x[0] * p.drive;
    let beta = x[1] * p.drive;
    Ok(SteadyState {
        alpha,
        beta,
        sigma: x[2] * p.drive,
        t,
        r,
        transmission: t.norm_sqr(),
        reflection: r.norm_sqr(),
        photon_number: alpha.norm_sqr() + beta.norm_sqr(),
    })
}

/// Relative residual of a steady state against the linear system.
pub fn steady_state_residual(p: &CavityAtomParams, s: &SteadyState) -> f64 {
    let m = system_matrix(p);
    let x = Vector3::new(s.alpha, s.beta, s.sigma);
    let rhs = Vector3::new(Complex64::new((2.0 * p.kappa_ex).sqrt() * p.drive, 0.0), 0.0.into(), 0.0.into());
    let res = m * x - rhs;
    res.norm() / rhs.norm().max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------------------
// Eigenvalues
// ---------------------------------------------------------------------------

/// Eigen-structure of the single-excitation problem.
///
/// Each eigenvalue is reported as `λ = −Γ + iω`, with `ω` the eigenfrequency
/// relative to the free-space atomic line and `Γ` its amplitude damping rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigenvalues {
    pub plus: Complex64,
    pub minus: Complex64,
    /// The eigenvalue with the least atomic character.
    pub zero: Complex64,
    /// Atomic weights `|⟨e|v⟩|²` of (plus, minus, zero).
    pub atomic_weight: [f64; 3],
}

impl Eigenvalues {
    /// `Im(λ₊ − λ₋)`.
    pub fn splitting(&self) -> f64 {
        (self.plus - self.minus).im
    }

    pub fn as_array(&self) -> [Complex64; 3] {
        [self.plus, self.minus, self.zero]
    }
}

fn effective_hamiltonian(p: &CavityAtomParams) -> Matrix3<Complex64> {
    let (ga, gb) = p.couplings();
    let h = Complex64::new(p.h, 0.0);
    let cav = Complex64::new(p.delta_ca, -p.kappa());
    let atom = Complex64::new(p.delta_a, -p.gamma);
    Matrix3::new(
        cav, h, ga.conj(),
        h, cav, gb.conj(),
        ga, gb, atom,
    )
}

/// Roots of the characteristic cubic, polished with Newton steps.
fn eigen_values_3(m: &Matrix3<Complex64>) -> [Complex64; 3] {
    let tr = m.trace();
    let m2 = m * m;
    let c2 = -tr;
    let c1 = (tr * tr - m2.trace()) * 0.5;
    let c0 = -m.determinant();
    // Shift to the depressed cubic x³ + px + q with x = e + c2/3.
    let s = c2 / 3.0;
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let disc = (q * q / 4.0 + p * p * p / 27.0).sqrt();
    let mut u = (-q / 2.0 + disc).cbrt_c();
    if u.norm() < 1e-300 {
        u = (-q / 2.0 - disc).cbrt_c();
    }
    let omega = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let mut roots = [Complex64::new(0.0, 0.0); 3];
    for (k, root) in roots.iter_mut().enumerate() {
        let uk = u * omega.powi(k as i32);
        let x = if uk.norm() < 1e-300 { Complex64::new(0.0, 0.0) } else { uk - p / (3.0 * uk) };
        *root = x - s;
    }
    let f = |e: Complex64| ((e + c2) * e + c1) * e + c0;
    let df = |e: Complex64| (3.0 * e + 2.0 * c2) * e + c1;
    for root in roots.iter_mut() {
        for _ in 0..3 {
            let d = df(*root);
            if d.norm() == 0.0 {
                break;
            }
            let step = f(*root) / d;
            if !step.is_finite() {
                break;
            }
            *root -= step;
        }
    }
    roots
}

trait CubeRoot {
    fn cbrt_c(self) -> Self;
}

impl CubeRoot for Complex64 {
    fn cbrt_c(self) -> Self {
        if self.norm() == 0.0 {
            self
        } else {
            Complex64::from_polar(self.norm().cbrt(), self.arg() / 3.0)
        }
    }
}

/// Null vector of a (nearly) singular 3×3 matrix, normalized.
fn null_vector(m: &Matrix3<Complex64>) -> Vector3<Complex64> {
    let rows = [m.row(0).transpose(), m.row(1).transpose(), m.row(2).transpose()];
    let mut best = Vector3::zeros();
    let mut best_norm = -1.0;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        let v = rows[i].cross(&rows[j]);
        let n = v.norm();
        if n > best_norm {
            best_norm = n;
            best = v;
        }
    }
    if best_norm <= 0.0 {
        // Fully degenerate: any vector, pick the one with the largest-norm column free.
        return Vector3::new(1.0.into(), 0.0.into(), 0.0.into());
    }
    best / Complex64::new(best_norm, 0.0)
}

pub fn eigenvalues(p: &CavityAtomParams) -> Eigenvalues {
    let hm = effective_hamiltonian(p);
    let e = eigen_values_3(&hm);
    let mut items: Vec<(Complex64, f64)> = e
        .iter()
        .map(|&ev| {
            let v = null_vector(&(hm - Matrix3::from_diagonal_element(ev)));
            let w = v[2].norm_sqr() / v.norm_squared();
            (Complex64::i() * ev.conj(), w)
        })
        .collect();
    // λ₀: least atomic weight; ties broken by Im.
    let zero_idx = (0..3)
        .min_by(|&a, &b| items[a].1.partial_cmp(&items[b].1).unwrap())
        .unwrap();
    let (zero, wz) = items.remove(zero_idx);
    items.sort_by(|a, b| b.0.im.partial_cmp(&a.0.im).unwrap());
    Eigenvalues {
        plus: items[0].0,
        minus: items[1].0,
        zero,
        atomic_weight: [items[0].1, items[1].1, wz],
    }
}

/// Eigenvalues along a parameter sweep, with branches continued by nearest
/// matching to the previous point rather than re-sorted at every point.
pub fn track_eigenvalues(sweep: &[CavityAtomParams]) -> Vec<[Complex64; 3]> {
    let mut out: Vec<[Complex64; 3]> = Vec::with_capacity(sweep.len());
    for p in sweep {
        let ev = eigenvalues(p).as_array();
        let next = match out.last() {
            None => ev,
            Some(prev) => {
                const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
                let best = PERMS
                    .iter()
                    .min_by(|a, b| {
                        let ca: f64 = (0..3).map(|k| (ev[a[k]] - prev[k]).norm()).sum();
                        let cb: f64 = (0..3).map(|k| (ev[b[k]] - prev[k]).norm()).sum();
                        ca.partial_cmp(&cb).unwrap()
                    })
                    .unwrap();
                [ev[best[0]], ev[best[1]], ev[best[2]]]
            }
        };
        out.push(next);
    }
    out
}

// ---------------------------------------------------------------------------
// Forces
// ---------------------------------------------------------------------------

/// Force in local cylindrical components (N).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CylForce {
    pub rho: f64,
    pub z: f64,
    pub phi: f64,
}

/// `−⟨∇H_int⟩` on the factorized steady state.
///
/// `grad_g` holds `(∂g/∂ρ, ∂g/∂z)` and `grad_theta` is `(1/ρ)∂θ/∂φ`, the
/// azimuthal gradient of the traveling-wave phase.
pub fn dipole_force(p: &CavityAtomParams, s: &SteadyState, grad_g: (f64, f64), grad_theta: f64) -> CylForce {
    let ua = Complex64::from_polar(FRAC_1_SQRT_2, p.theta);
    let ub = ua.conj();
    let sc = s.sigma.conj();
    let gradient_part = -2.0 * HBAR * (sc * (ua * s.alpha + ub * s.beta)).re;
    let phase_part = -2.0 * HBAR * p.g * (Complex64::i() * sc * (ua * s.alpha - ub * s.beta)).re;
    CylForce {
        rho: gradient_part * grad_g.0,
        z: gradient_part * grad_g.1,
        phi: phase_part * grad_theta,
    }
}

/// Dipole and surface potential curves along `d` at `z = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialCurve {
    pub d: Vec<f64>,
    /// Line integral of the radial dipole force from far away (J).
    pub dipole: Vec<f64>,
    /// Ground-state Casimir-Polder potential (J).
    pub surface: Vec<f64>,
}

/// Tabulates `U_d(d)` and `U_s(d)`.
///
/// `params_at(d)` returns the cQED parameters and `∂g/∂ρ` at distance `d`;
/// `surface(d)` returns `U_s`. The dipole potential is obtained by
/// trapezoidal integration of the radial force inward from `d_far` with
/// steps no longer than `max_step`.
pub fn effective_potential_curve(
    d_grid: &[f64],
    d_far: f64,
    max_step: f64,
    params_at: impl Fn(f64) -> (CavityAtomParams, f64),
    surface: impl Fn(f64) -> f64,
) -> Result<PotentialCurve, CqedError> {
    let force = |d: f64| -> Result<f64, CqedError> {
        let (p, dg) = params_at(d);
        let s = steady_state(&p)?;
        Ok(dipole_force(&p, &s, (dg, 0.0), 0.0).rho)
    };
    let mut order: Vec<usize> = (0..d_grid.len()).collect();
    order.sort_by(|&a, &b| d_grid[b].partial_cmp(&d_grid[a]).unwrap());
    let mut dipole = vec![0.0; d_grid.len()];
    let mut x = d_far;
    let mut fx = force(x)?;
    let mut acc = 0.0;
    for idx in order {
        let target = d_grid[idx];
        if target < x {
            let n = ((x - target) / max_step).ceil().max(1.0) as usize;
            let h = (x - target) / n as f64;
            for _ in 0..n {
                let y = x - h;
                let fy = force(y)?;
                // U(y) = U(x) + ∫_y^x F
                acc += 0.5 * h * (fx + fy);
                x = y;
                fx = fy;
            }
        }
        dipole[idx] = acc;
    }
    Ok(PotentialCurve {
        d: d_grid.to_vec(),
        dipole,
        surface: d_grid.iter().map(|&d| surface(d)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz;
    use proptest::prelude::*;

    fn paper_rates(g: f64) -> CavityAtomParams {
        CavityAtomParams {
            g: mhz(g),
            theta: 0.3,
            delta_pa: 0.0,
            delta_ca: 0.0,
            delta_a: 0.0,
            kappa_i: mhz(8.0),
            kappa_ex: mhz(13.0),
            h: mhz(10.0),
            gamma: mhz(2.6),
            drive: 1e3,
        }
    }

    fn lossless(g: f64, delta_ca: f64) -> CavityAtomParams {
        CavityAtomParams {
            g: mhz(g),
            theta: 0.0,
            delta_pa: 0.0,
            delta_ca: mhz(delta_ca),
            delta_a: 0.0,
            kappa_i: 0.0,
            kappa_ex: 0.0,
            h: 0.0,
            gamma: 0.0,
            drive: 0.0,
        }
    }

    #[test]
    fn critical_coupling_single_mode_is_dark() {
        let mut p = paper_rates(0.0);
        p.h = 0.0;
        p.kappa_ex = p.kappa_i;
        let s = steady_state(&p).unwrap();
        assert!(s.transmission < 1e-28);
    }

    #[test]
    fn far_detuned_passes_through() {
        let mut p = paper_rates(0.0);
        p.delta_pa = mhz(1e5);
        let s = steady_state(&p).unwrap();
        assert!((s.transmission - 1.0).abs() < 1e-6 && s.reflection < 1e-6);
    }

    #[test]
    fn coupled_atom_raises_transmission() {
        let empty = steady_state(&paper_rates(0.0)).unwrap().transmission;
        let full = steady_state(&paper_rates(40.0)).unwrap().transmission;
        assert!(full > 10.0 * empty.max(1e-3), "{empty} -> {full}");
    }

    #[test]
    fn lossless_splitting_after_resonance() {
        let e = eigenvalues(&lossless(40.0, 0.0));
        assert!((e.splitting() - mhz(80.0)).abs() < 1e-9 * mhz(80.0));
    }

    #[test]
    fn uncoupled_limit() {
        let mut p = paper_rates(0.0);
        p.delta_ca = mhz(30.0);
        let e = eigenvalues(&p);
        let mut ims: Vec<f64> = e.as_array().iter().map(|l| l.im / mhz(1.0)).collect();
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in ims.iter().zip([0.0, 20.0, 40.0]) {
            assert!((got - want).abs() < 1e-6, "{ims:?}");
        }
        assert!((e.plus.re + mhz(21.0)).abs() < 1e-6 * mhz(1.0));
        assert!(e.atomic_weight[2] < 1e-12);
    }

    #[test]
    fn zero_eigenvalue_stays_cavity_like() {
        for g in [10.0, 40.0, 80.0] {
            let mut p = paper_rates(g);
            p.theta = 0.0;
            let e = eigenvalues(&p);
            assert!(e.atomic_weight[2] < 1e-12);
            // standing-wave combination orthogonal to the atom
            let expected = Complex64::new(-mhz(21.0), 0.0);
            let dark = [Complex64::new(-mhz(21.0), mhz(10.0)), Complex64::new(-mhz(21.0), -mhz(10.0))];
            assert!(dark.iter().any(|d| (e.zero - d).norm() < 1e-6 * mhz(1.0)), "{:?} vs {expected}", e.zero);
        }
    }

    #[test]
    fn force_vanishes_without_drive_or_coupling() {
        let mut p = paper_rates(40.0);
        p.drive = 0.0;
        let s = steady_state(&p).unwrap();
        assert_eq!(dipole_force(&p, &s, (1e10, 1e10), 1e6), CylForce { rho: -0.0, z: -0.0, phi: -0.0 });
        let p = paper_rates(0.0);
        let s = steady_state(&p).unwrap();
        let f = dipole_force(&p, &s, (1e10, 1e10), 1e6);
        assert!(f.rho == 0.0 && f.phi == 0.0);
    }

    #[test]
    fn red_attracts_blue_repels() {
        // g decreases outward, so ∂g/∂ρ < 0; toward the surface is −ρ.
        let dg = -mhz(40.0) / 136e-9;
        for (delta, sign) in [(-40.0, -1.0), (40.0, 1.0)] {
            let mut p = paper_rates(20.0);
            p.delta_ca = mhz(delta);
            p.delta_pa = mhz(delta);
            let s = steady_state(&p).unwrap();
            let f = dipole_force(&p, &s, (dg, 0.0), 0.0);
            assert!(f.rho * sign > 0.0, "Δ = {delta}: {}", f.rho);
        }
    }

    #[test]
    fn potential_curve_matches_force() {
        let lam = 136e-9;
        let params_at = |d: f64| {
            let mut p = paper_rates(0.0);
            p.delta_ca = mhz(-40.0);
            p.delta_pa = mhz(-40.0);
            p.g = mhz(100.0) * (-d / lam).exp();
            (p, -p.g / lam)
        };
        let grid: Vec<f64> = (1..=200).map(|i| i as f64 * 2e-9).collect();
        let c = effective_potential_curve(&grid, 3e-6, 1e-9, params_at, |_| 0.0).unwrap();
        // −dU/dd at interior points against the force
        for i in 20..180 {
            let du = (c.dipole[i + 1] - c.dipole[i - 1]) / (grid[i + 1] - grid[i - 1]);
            let (p, dg) = params_at(grid[i]);
            let f = dipole_force(&p, &steady_state(&p).unwrap(), (dg, 0.0), 0.0).rho;
            assert!((-du - f).abs() < 2e-3 * f.abs(), "{i}: {} vs {f}", -du);
        }
        assert!(c.dipole[199].abs() < 0.05 * c.dipole[0].abs());
        assert!(c.dipole[0] < 0.0);
    }

    #[test]
    fn tracking_keeps_branches_continuous() {
        let sweep: Vec<_> = (-100..=100)
            .map(|k| {
                let mut p = paper_rates(40.0);
                p.delta_ca = mhz(k as f64);
                p
            })
            .collect();
        let tr = track_eigenvalues(&sweep);
        for w in tr.windows(2) {
            for k in 0..3 {
                assert!((w[1][k] - w[0][k]).norm() < mhz(2.0));
            }
        }
    }

    proptest! {
        #[test]
        fn energy_flux_bound(g in 0.0f64..200.0, th in 0.0f64..6.3, dpa in -300.0f64..300.0,
                             dca in -100.0f64..100.0, da in -50.0f64..0.0, ki in 0.1f64..30.0,
                             kex in 0.0f64..30.0, h in 0.0f64..30.0, gam in 0.0f64..10.0) {
            let p = CavityAtomParams {
                g: mhz(g), theta: th, delta_pa: mhz(dpa), delta_ca: mhz(dca), delta_a: mhz(da),
                kappa_i: mhz(ki), kappa_ex: mhz(kex), h: mhz(h), gamma: mhz(gam), drive: 3e3,
            };
            let s = steady_state(&p).unwrap();
            prop_assert!(s.transmission >= 0.0 && s.reflection >= 0.0);
            prop_assert!(s.transmission + s.reflection <= 1.0 + 1e-12);
            prop_assert!(steady_state_residual(&p, &s) < 1e-12);
            let mut q = p;
            q.theta += std::f64::consts::PI;
            let s2 = steady_state(&q).unwrap();
            prop_assert!((s2.transmission - s.transmission).abs() < 1e-12);
            prop_assert!((s2.reflection - s.reflection).abs() < 1e-12);
        }

        #[test]
        fn eigenvalues_are_continuous(g in 0.0f64..100.0, dca in -80.0f64..80.0, eps in 1e-6f64..1e-3) {
            let mut p = paper_rates(g);
            p.delta_ca = mhz(dca);
            let a = eigenvalues(&p).as_array();
            let mut q = p;
            q.g += mhz(eps);
            let tr = track_eigenvalues(&[p, q]);
            for k in 0..3 {
                prop_assert!((tr[1][k] - a[k]).norm() <= 4.0 * mhz(eps) + 1e-6);
            }
        }

        #[test]
        fn eigenvalues_solve_characteristic_equation(g in 0.0f64..100.0, dca in -80.0f64..80.0, th in 0.0f64..6.3) {
            let mut p = paper_rates(g);
            p.delta_ca = mhz(dca);
            p.theta = th;
            let hm = effective_hamiltonian(&p);
            for lam in eigenvalues(&p).as_array() {
                // λ = i·conj(e)  ⇒  e = conj(−iλ)
                let e = (-Complex64::i() * lam).conj();
                let det = (hm - Matrix3::from_diagonal_element(e)).determinant();
                prop_assert!(det.norm() < 1e-9 * mhz(100.0).powi(3));
            }
        }
    }
}
