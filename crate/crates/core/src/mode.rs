//! Toroid geometry and the evanescent coupling field `g(r)`.

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::config::PhysicsConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ModeError {
    #[error("point is inside the dielectric (d = {0:e} m)")]
    InsideDielectric(f64),
    #[error("mode table: {0}")]
    Table(String),
}

/// Cylindrical point around the toroid symmetry axis. `z = 0` is the equator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylPoint {
    pub rho: f64,
    pub z: f64,
    phi: f64,
    major_radius: f64,
}

impl CylPoint {
    pub fn new(rho: f64, z: f64, phi: f64, major_radius: f64) -> Self {
        Self {
            rho,
            z,
            phi: phi.rem_euclid(TAU),
            major_radius,
        }
    }

    /// Point at surface distance `d` from the rim.
    pub fn from_distance(d: f64, z: f64, phi: f64, major_radius: f64) -> Self {
        Self::new(major_radius + d, z, phi, major_radius)
    }

    pub fn from_cartesian(r: &Vector3<f64>, major_radius: f64) -> Self {
        Self::new(r.x.hypot(r.y), r.z, r.y.atan2(r.x), major_radius)
    }

    pub fn to_cartesian(&self) -> Vector3<f64> {
        Vector3::new(self.rho * self.phi.cos(), self.rho * self.phi.sin(), self.z)
    }

    /// Azimuth in `[0, 2π)`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Distance from the rim, `ρ − D_p/2`.
    pub fn d(&self) -> f64 {
        self.rho - self.major_radius
    }

    pub fn major_radius(&self) -> f64 {
        self.major_radius
    }

    /// Local unit vectors `(ρ̂, φ̂)` in the Cartesian frame.
    pub fn basis(&self) -> (Vector3<f64>, Vector3<f64>) {
        let (s, c) = self.phi.sin_cos();
        (Vector3::new(c, s, 0.0), Vector3::new(-s, c, 0.0))
    }
}

/// Gradient of the coupling in cylindrical components, rad/s/m.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingGradient {
    pub rho: f64,
    pub z: f64,
}

/// Anything that can report `|g|` and its gradient outside the dielectric.
pub trait CouplingField: Send + Sync {
    fn coupling(&self, p: &CylPoint) -> Result<f64, ModeError>;
    fn coupling_gradient(&self, p: &CylPoint) -> Result<CouplingGradient, ModeError>;
    fn g_max(&self) -> f64;
}

/// Separable model `g_max · exp(−d/λ̄) · exp(−(z/w₀)²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeField {
    pub g_max: f64,
    pub decay_length: f64,
    pub waist: f64,
    pub k_phi: f64,
}

impl ModeField {
    pub fn new(g_max: f64, decay_length: f64, waist: f64, k_phi: f64) -> Self {
        assert!(decay_length > 0.0 && waist > 0.0, "mode scale lengths must be positive");
        Self {
            g_max,
            decay_length,
            waist,
            k_phi,
        }
    }

    pub fn from_config(cfg: &PhysicsConfig) -> Self {
        let m = mode_number(
            cfg.mode.effective_index,
            cfg.toroid.principal_diameter,
            cfg.atom.wavelength,
        );
        Self::new(
            cfg.mode.g_max,
            cfg.mode.decay_length,
            cfg.mode.waist,
            m as f64 / cfg.toroid.major_radius(),
        )
    }

    #[inline]
    pub fn profile(&self, d: f64, z: f64) -> f64 {
        let zz = z / self.waist;
        self.g_max * (-d / self.decay_length - zz * zz).exp()
    }
}

impl CouplingField for ModeField {
    fn coupling(&self, p: &CylPoint) -> Result<f64, ModeError> {
        let d = p.d();
        if d < 0.0 {
            return Err(ModeError::InsideDielectric(d));
        }
        Ok(self.profile(d, p.z))
    }

    fn coupling_gradient(&self, p: &CylPoint) -> Result<CouplingGradient, ModeError> {
        let g = self.coupling(p)?;
        Ok(CouplingGradient {
            rho: -g / self.decay_length,
            z: -2.0 * p.z / (self.waist * self.waist) * g,
        })
    }

    fn g_max(&self) -> f64 {
        self.g_max
    }
}

/// Whispering-gallery azimuthal mode number `round(2π n_eff (D_p/2) / λ)`.
pub fn mode_number(effective_index: f64, principal_diameter: f64, wavelength: f64) -> u64 {
    (TAU * effective_index * 0.5 * principal_diameter / wavelength).round() as u64
}

/// Traveling-wave phase of mode `a` at `p`; mode `b` carries the negative.
pub fn traveling_phase(p: &CylPoint, k_phi: f64) -> f64 {
    k_phi * p.major_radius() * p.phi()
}

/// `g(d, z)` sampled on a rectangular grid, bilinearly interpolated.
///
/// File format: `#` comment lines, then whitespace-separated rows
/// `d_nm z_nm g_mhz` (rate / 2π). Rows may come in any order but must cover
/// a full grid. Outside the grid the coupling is zero.
#[derive(Clone, Debug)]
pub struct TabulatedField {
    d: Vec<f64>,
    z: Vec<f64>,
    /// Row-major: `values[i * z.len() + j]` at `(d[i], z[j])`.
    values: Vec<f64>,
    g_max: f64,
}

impl TabulatedField {
    pub fn new(d: Vec<f64>, z: Vec<f64>, values: Vec<f64>) -> Result<Self, ModeError> {
        if d.len() < 2 || z.len() < 2 {
            return Err(ModeError::Table("grid needs at least 2 points per axis".into()));
        }
        if values.len() != d.len() * z.len() {
            return Err(ModeError::Table("value count does not match grid".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&d) || !increasing(&z) {
            return Err(ModeError::Table("grid axes must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ModeError::Table("coupling values must be finite and non-negative".into()));
        }
        let g_max = values.iter().cloned().fold(0.0, f64::max);
        Ok(Self { d, z, values, g_max })
    }

    /// Samples an analytic model, mainly for testing the table path.
    pub fn sample(field: &ModeField, d_max: f64, nd: usize, z_max: f64, nz: usize) -> Self {
        let d: Vec<f64> = (0..nd).map(|i| d_max * i as f64 / (nd - 1) as f64).collect();
        let z: Vec<f64> = (0..nz)
            .map(|j| -z_max + 2.0 * z_max * j as f64 / (nz - 1) as f64)
            .collect();
        let mut values = Vec::with_capacity(nd * nz);
        for &di in &d {
            for &zj in &z {
                values.push(field.profile(di, zj));
            }
        }
        Self::new(d, z, values).expect("sampled grid is valid")
    }

    pub fn parse(text: &str) -> Result<Self, ModeError> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            let cols = cols.map_err(|e| ModeError::Table(format!("line {}: {e}", lineno + 1)))?;
            if cols.len() != 3 {
                return Err(ModeError::Table(format!("line {}: expected 3 columns", lineno + 1)));
            }
            rows.push((cols[0] * 1e-9, cols[1] * 1e-9, crate::units::mhz(cols[2])));
        }
        let mut d: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut z: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for axis in [&mut d, &mut z] {
            axis.sort_by(|a, b| a.partial_cmp(b).unwrap());
            axis.dedup();
        }
        let mut values = vec![f64::NAN; d.len() * z.len()];
        for (di, zi, g) in rows {
            let i = d.binary_search_by(|x| x.partial_cmp(&di).unwrap()).unwrap();
            let j = z.binary_search_by(|x| x.partial_cmp(&zi).unwrap()).unwrap();
            values[i * z.len() + j] = g;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(ModeError::Table("grid is incomplete".into()));
        }
        Self::new(d, z, values)
    }

    pub fn load(path: &Path) -> Result<Self, ModeError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModeError::Table(e.to_string()))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# d_nm z_nm g_over_2pi_mhz\n");
        for (i, di) in self.d.iter().enumerate() {
            for (j, zj) in self.z.iter().enumerate() {
                let g = crate::units::as_mhz(self.values[i * self.z.len() + j]);
                out.push_str(&format!("{} {} {}\n", di * 1e9, zj * 1e9, g));
            }
        }
        out
    }

    fn locate(axis: &[f64], x: f64) -> Option<(usize, f64)> {
        if x < axis[0] || x > axis[axis.len() - 1] {
            return None;
        }
        let i = match axis.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(axis.len() - 2),
            Err(i) => i - 1,
        };
        let t = (x - axis[i]) / (axis[i + 1] - axis[i]);
        Some((i, t))
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.z.len() + j]
    }

    /// Value and `(∂/∂d, ∂/∂z)` of the bilinear patch.
    fn eval(&self, d: f64, z: f64) -> (f64, f64, f64) {
        let (Some((i, u)), Some((j, v))) = (Self::locate(&self.d, d), Self::locate(&self.z, z)) else {
            return (0.0, 0.0, 0.0);
        };
        let (f00, f10, f01, f11) = (self.at(i, j), self.at(i + 1, j), self.at(i, j + 1), self.at(i + 1, j + 1));
        let hd = self.d[i + 1] - self.d[i];
        let hz = self.z[j + 1] - self.z[j];
        let val = f00 * (1.0 - u) * (1.0 - v) + f10 * u * (1.0 - v) + f01 * (1.0 - u) * v + f11 * u * v;
        let dd = ((f10 - f00) * (1.0 - v) + (f11 - f01) * v) / hd;
        let dz = ((f01 - f00) * (1.0 - u) + (f11 - f10) * u) / hz;
        (val, dd, dz)
    }
}

impl CouplingField for TabulatedField {
    fn coupling(&self, p: &CylPoint) -> Result<f64, ModeError> {
        let d = p.d();
        if d < 0.0 {
            return Err(ModeError::InsideDielectric(d));
        }
        Ok(self.eval(d, p.z).0)
    }

    fn coupling_gradient(&self, p: &CylPoint) -> Result<CouplingGradient, ModeError> {
        let d = p.d();
        if d < 0.0 {
            return Err(ModeError::InsideDielectric(d));
        }
        let (_, dd, dz) = self.eval(d, p.z);
        Ok(CouplingGradient { rho: dd, z: dz })
    }

    fn g_max(&self) -> f64 {
        self.g_max
    }
}
