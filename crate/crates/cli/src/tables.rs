//! Table builders for every output file. Human units throughout: μs, ns,
//! nm, MHz (as rate/2π).

use toroid_cqed::cqed::PotentialCurve;
use toroid_cqed::ensemble::{AveragedTrace, CorrelationResult, ExpGaussFit, Histogram, SpectrumPoint};
use toroid_cqed::io::{RunInfo, Table};
use num_complex::Complex64;
use toroid_cqed::pipeline::{FateCounts, G2Model, SpectraResult};
use toroid_cqed::trajectory::TrajectoryRecord;
use toroid_cqed::units::as_mhz;
use toroid_cqed::units::consts::HBAR;

const HBAR_2PI_MHZ: f64 = 1.0 / (2.0 * std::f64::consts::PI * 1e6 * HBAR);

pub fn fates(table: Table, c: &FateCounts) -> Table {
    table
        .with_meta("launched", c.launched)
        .with_meta("triggered", c.triggered)
        .with_meta("crashed", c.crashed)
        .with_meta("exited", c.exited)
        .with_meta("trapped", c.trapped)
}

pub fn trace(run: &RunInfo, tr: &AveragedTrace) -> Table {
    let mut t = Table::new("transmission trace after trigger", &["t_us", "T", "T_sem", "T_B"])
        .with_run(run)
        .with_meta("background", tr.background)
        .with_meta("background_sem", tr.background_sem)
        .with_meta("records", tr.n);
    for (i, tb) in tr.subtracted().iter().enumerate() {
        t.push(vec![tr.t[i] * 1e6, tr.mean[i], tr.sem[i], *tb]).unwrap();
    }
    t
}

pub fn fit(run: &RunInfo, f: &ExpGaussFit) -> Table {
    let mut t = Table::new(
        "exponential + Gaussian fit of T_B(t)",
        &["A", "A_err", "dt_I_us", "dt_I_err_us", "C", "C_err", "dt_II_us", "dt_II_err_us", "chi2", "dof"],
    )
    .with_run(run)
    .with_meta("model", "A exp(-t/dt_I) + C exp(-(t/dt_II)^2)")
    .with_meta("starts", f.starts);
    t.push(vec![
        f.amplitude_exp,
        f.sigma[0],
        f.tau_exp * 1e6,
        f.sigma[1] * 1e6,
        f.amplitude_gauss,
        f.sigma[2],
        f.tau_gauss * 1e6,
        f.sigma[3] * 1e6,
        f.chi2,
        f.dof as f64,
    ])
    .unwrap();
    t
}

/// Class I/II histograms side by side. `scale` converts SI bin centres to
/// the column unit.
pub fn class_pair(run: &RunInfo, name: &str, unit: &str, h: &[Histogram; 2], scale: impl Fn(f64) -> f64) -> Table {
    let x = format!("{name}_{unit}");
    let mut t = Table::new(&format!("class densities of {name} over the first 500 ns"), &[&x, "p_I", "p_II", "n_I", "n_II"])
        .with_run(run)
        .with_meta("density_unit", format!("1/{unit}"))
        .with_meta("class_rule", "I = crashed, II = exited or trapped");
    let (p1, p2) = (h[0].density(), h[1].density());
    let widths: Vec<f64> = h[0].edges.windows(2).map(|w| scale(w[1]) - scale(w[0])).collect();
    let w_si: Vec<f64> = h[0].edges.windows(2).map(|w| w[1] - w[0]).collect();
    for (i, c) in h[0].centres().iter().enumerate() {
        // density per human unit
        let k = w_si[i] / widths[i];
        t.push(vec![scale(*c), p1[i] * k, p2[i] * k, h[0].counts[i] as f64, h[1].counts[i] as f64]).unwrap();
    }
    t
}

/// Histogram with `lo hi centre count density` rows; readable by
/// [`read_distribution`].
pub fn histogram(run: &RunInfo, title: &str, unit: &str, h: &Histogram, scale: impl Fn(f64) -> f64) -> Table {
    let mut t = Table::new(title, &["lo", "hi", "centre", "count", "density"]).with_run(run).with_meta("unit", unit);
    let dens = h.density();
    for (i, w) in h.edges.windows(2).enumerate() {
        let (lo, hi) = (scale(w[0]), scale(w[1]));
        let k = (w[1] - w[0]) / (hi - lo);
        t.push(vec![lo, hi, scale(0.5 * (w[0] + w[1])), h.counts[i] as f64, dens[i] * k]).unwrap();
    }
    t
}

/// `(g, weight)` pairs in rad/s from a histogram table in MHz.
pub fn read_distribution(t: &Table) -> Result<Vec<(f64, f64)>, String> {
    if t.meta("unit").is_some_and(|u| u != "MHz") {
        return Err(format!("coupling histogram must be in MHz, found {}", t.meta("unit").unwrap_or("")));
    }
    let g = t.column("centre").ok_or("histogram has no 'centre' column")?;
    let w = t.column("count").or_else(|| t.column("density")).ok_or("histogram has no 'count' or 'density' column")?;
    let out: Vec<(f64, f64)> =
        g.iter().zip(&w).filter(|(_, w)| **w > 0.0).map(|(g, w)| (toroid_cqed::units::mhz(*g), *w)).collect();
    if out.is_empty() {
        return Err("histogram is empty".into());
    }
    if out.iter().any(|(g, w)| !g.is_finite() || *g < 0.0 || !w.is_finite()) {
        return Err("histogram has negative or non-finite entries".into());
    }
    Ok(out)
}

pub fn spectra(run: &RunInfo, s: &SpectraResult) -> Table {
    let mut t = Table::new(
        &format!("spectra, variant {}", s.variant.name()),
        &["delta_pa_MHz", "n", "T_A", "T_A_sem", "R_A", "R_A_sem", "T_NA", "R_NA", "dT", "dR", "T_counts", "R_counts"],
    )
    .with_run(run)
    .with_meta("variant", s.variant.name())
    .with_meta("delta_ca_MHz", as_mhz(s.delta_ca))
    .with_meta("triggered", s.triggered)
    .with_meta("peak_smoothing", "5-point local quadratic, 5% prominence");
    let opt = |v: Option<f64>| v.map(|x| format!("{}", as_mhz(x))).unwrap_or_else(|| "none".into());
    t.set_meta("splitting_T_MHz", opt(s.splitting_t));
    t.set_meta("splitting_R_MHz", opt(s.splitting_r));
    t.set_meta("g_bar_MHz", opt(s.g_bar));
    for p in &s.points {
        t.push(point_row(p)).unwrap();
    }
    t
}

fn point_row(p: &SpectrumPoint) -> Vec<f64> {
    vec![
        as_mhz(p.delta_pa),
        p.n as f64,
        p.t_atom,
        p.t_sem,
        p.r_atom,
        p.r_sem,
        p.t_empty,
        p.r_empty,
        p.delta_t(),
        p.delta_r(),
        p.t_counts,
        p.r_counts,
    ]
}

pub fn correlations(run: &RunInfo, c: &CorrelationResult, bin: f64) -> Table {
    let (all, z) = c.super_poissonian();
    let mut t = Table::new("forward cross-correlation", &["tau_ns", "C12", "C12_bar", "diff_sigma"])
        .with_run(run)
        .with_meta("bin_ns", bin * 1e9)
        .with_meta("records", c.n)
        .with_meta("super_poissonian_all_lags", all)
        .with_meta("combined_z", z);
    for i in 0..c.tau.len() {
        t.push(vec![c.tau[i] * 1e9, c.c12[i], c.c12_bar[i], c.sigma_diff[i]]).unwrap();
    }
    t
}

pub fn g2(run: &RunInfo, m: &G2Model) -> Table {
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
    let mut t = Table::new("two-time correlation of transmitted light", &["tau_ns", "g2_ensemble", "g2_single", "g2_control"])
        .with_run(run)
        .with_meta("mean_g_MHz", as_mhz(m.mean_coupling))
        .with_meta("ensemble_min_to_peak", fmt(m.ensemble.dip_to_peak()))
        .with_meta("ensemble_half_width_ns", fmt(m.ensemble.recovery_half_width().map(|x| x * 1e9)))
        .with_meta("weighting", "flux");
    for i in 0..m.ensemble.tau.len() {
        t.push(vec![m.ensemble.tau[i] * 1e9, m.ensemble.g2[i], m.single.g2[i], m.control.g2[i]]).unwrap();
    }
    t
}

pub fn eigen(run: &RunInfo, g: f64, rows: &[(f64, [Complex64; 3])]) -> Table {
    let mut t = Table::new(
        "cQED eigenvalues",
        &["delta_ca_MHz", "plus_freq_MHz", "plus_damp_MHz", "minus_freq_MHz", "minus_damp_MHz", "zero_freq_MHz", "zero_damp_MHz"],
    )
    .with_run(run)
    .with_meta("g_MHz", as_mhz(g))
    .with_meta("convention", "lambda = -damping + i freq");
    for (d, l) in rows {
        t.push(vec![as_mhz(*d), as_mhz(l[0].im), as_mhz(-l[0].re), as_mhz(l[1].im), as_mhz(-l[1].re), as_mhz(l[2].im), as_mhz(-l[2].re)])
            .unwrap();
    }
    t
}

/// Potential curves for several detunings on a common grid, as `U/h` in MHz.
pub fn potentials(run: &RunInfo, curves: &[(f64, PotentialCurve)]) -> Table {
    let mut cols = vec!["d_nm".to_string(), "U_s_MHz".to_string()];
    for (delta, _) in curves {
        cols.push(format!("U_d_{:+}_MHz", as_mhz(*delta)));
    }
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new("dipole and surface potentials at z = 0", &refs).with_run(run).with_meta("energy_unit", "U/h in MHz");
    let Some((_, first)) = curves.first() else { return t };
    for i in 0..first.d.len() {
        let mut row = vec![first.d[i] * 1e9, first.surface[i] * HBAR_2PI_MHZ];
        row.extend(curves.iter().map(|(_, c)| c.dipole[i] * HBAR_2PI_MHZ));
        t.push(row).unwrap();
    }
    t
}

/// `major_radius` is the radius at which `d = 0`.
pub fn trajectory(run: &RunInfo, r: &TrajectoryRecord, major_radius: f64) -> Table {
    let mut t = Table::new(
        "trajectory samples after trigger",
        &["t_us", "d_nm", "z_nm", "phi", "rho_um", "v_rho", "v_phi", "v_z", "g_MHz", "delta_a_MHz", "T", "R"],
    )
    .with_run(run)
    .with_meta("index", r.index)
    .with_meta("fate", r.fate.name())
    .with_meta("fate_time_us", r.fate_time * 1e6);
    for s in &r.samples {
        let (c, sn) = (s.phi.cos(), s.phi.sin());
        let v_rho = s.velocity.x * c + s.velocity.y * sn;
        let v_phi = -s.velocity.x * sn + s.velocity.y * c;
        t.push(vec![
            s.t * 1e6,
            s.d * 1e9,
            s.z * 1e9,
            s.phi,
            (major_radius + s.d) * 1e6,
            v_rho,
            v_phi,
            s.velocity.z,
            as_mhz(s.g),
            as_mhz(s.delta_a),
            s.transmission,
            s.reflection,
        ])
        .unwrap();
    }
    t
}
