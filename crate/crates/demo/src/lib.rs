//! Browser bindings for the steady-state parts of the model: spectra at a
//! fixed coupling, the eigenvalue sweep and the potential curves. All
//! inputs and outputs in MHz (rate/2π) and nm. Results are flat row-major
//! arrays; each function documents its columns.

use toroid_cqed::cqed::{steady_state, CavityAtomParams};
use toroid_cqed::config::PhysicsConfig;
use toroid_cqed::pipeline::{eigen_sweep, potential_curves};
use toroid_cqed::units::consts::HBAR;
use toroid_cqed::units::{as_mhz, mhz};
use wasm_bindgen::prelude::*;

fn grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(step > 0.0) || !(to >= from) || (to - from) / step > 20_000.0 {
        return Err(format!("bad grid {from}..{to} step {step}"));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| from + k as f64 * step).collect())
}

/// Columns `Δ_pa, T, R, T_empty, R_empty` for an atom at fixed `g` and
/// phase `theta` (weak drive).
pub fn spectrum_rows(g_mhz: f64, delta_ca_mhz: f64, theta: f64, from: f64, to: f64, step: f64) -> Result<Vec<f64>, String> {
    let cfg = PhysicsConfig::default();
    let base = CavityAtomParams { g: mhz(g_mhz), theta, delta_ca: mhz(delta_ca_mhz), ..CavityAtomParams::from_config(&cfg) };
    let mut out = Vec::new();
    for d in grid(from, to, step)? {
        let p = CavityAtomParams { delta_pa: mhz(d), ..base };
        let atom = steady_state(&p).map_err(|e| e.to_string())?;
        let empty = steady_state(&CavityAtomParams { g: 0.0, ..p }).map_err(|e| e.to_string())?;
        out.extend([d, atom.transmission, atom.reflection, empty.transmission, empty.reflection]);
    }
    Ok(out)
}

/// Columns `Δ_ca, f₊, γ₊, f₋, γ₋, f₀, γ₀`: frequency and damping of each
/// eigenvalue, branches tracked along the sweep.
pub fn eigen_rows(g_mhz: f64, from: f64, to: f64, step: f64) -> Result<Vec<f64>, String> {
    let cfg = PhysicsConfig::default();
    let deltas: Vec<f64> = grid(from, to, step)?.into_iter().map(mhz).collect();
    let mut out = Vec::new();
    for (d, l) in eigen_sweep(&cfg, mhz(g_mhz), &deltas) {
        out.push(as_mhz(d));
        for z in l {
            out.extend([as_mhz(z.im), as_mhz(-z.re)]);
        }
    }
    Ok(out)
}

/// Columns `d, U_s/h, U_d/h` (nm, MHz) on the equator for
/// `Δ_ca = Δ_pa = delta`.
pub fn potential_rows(delta_mhz: f64, from_nm: f64, to_nm: f64, step_nm: f64) -> Result<Vec<f64>, String> {
    let cfg = PhysicsConfig::default();
    if from_nm * 1e-9 <= cfg.surface.d_min {
        return Err(format!("start must exceed {:.1} nm", cfg.surface.d_min * 1e9));
    }
    let d: Vec<f64> = grid(from_nm, to_nm, step_nm)?.into_iter().map(|x| x * 1e-9).collect();
    let c = potential_curves(&cfg, mhz(delta_mhz), &d).map_err(|e| e.to_string())?;
    let to_mhz = 1.0 / (2.0 * std::f64::consts::PI * 1e6 * HBAR);
    let mut out = Vec::new();
    for i in 0..c.d.len() {
        out.extend([c.d[i] * 1e9, c.surface[i] * to_mhz, c.dipole[i] * to_mhz]);
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn spectrum(g_mhz: f64, delta_ca_mhz: f64, theta: f64, from: f64, to: f64, step: f64) -> Result<Vec<f64>, String> {
    spectrum_rows(g_mhz, delta_ca_mhz, theta, from, to, step)
}

#[wasm_bindgen]
pub fn eigen(g_mhz: f64, from: f64, to: f64, step: f64) -> Result<Vec<f64>, String> {
    eigen_rows(g_mhz, from, to, step)
}

#[wasm_bindgen]
pub fn potentials(delta_mhz: f64, from_nm: f64, to_nm: f64, step_nm: f64) -> Result<Vec<f64>, String> {
    potential_rows(delta_mhz, from_nm, to_nm, step_nm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cavity_is_lossless_sum_bounded() {
        let r = spectrum_rows(0.0, 0.0, 0.0, -50.0, 50.0, 5.0).unwrap();
        assert_eq!(r.len(), 21 * 5);
        for row in r.chunks(5) {
            assert_eq!(row[1], row[3]);
            assert!(row[1] + row[2] <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn atom_on_resonance_lowers_transmission_dip_depth() {
        let r = spectrum_rows(60.0, 0.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        // Empty cavity at resonance is nearly opaque in transmission; the
        // atom splits the resonance and restores it.
        assert!(r[1] > r[3]);
    }

    #[test]
    fn eigen_and_potential_shapes() {
        assert_eq!(eigen_rows(40.0, -10.0, 10.0, 10.0).unwrap().len(), 3 * 7);
        let p = potential_rows(0.0, 50.0, 150.0, 50.0).unwrap();
        assert_eq!(p.len(), 9);
        assert!(p[1] < p[4] && p[4] < p[7] && p[7] < 0.0);
        assert!(potential_rows(0.0, 0.1, 10.0, 1.0).is_err());
        assert!(grid(1.0, 0.0, 1.0).is_err());
    }
}
