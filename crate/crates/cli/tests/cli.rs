use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_toroid-sim"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("toroid-sim-test-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    d
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

/// Data rows of a table file, split on tabs.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split('\t').map(String::from).collect()).collect()
}

fn meta(path: &Path, key: &str) -> Option<String> {
    let text = fs::read_to_string(path).unwrap();
    let prefix = format!("# {key}: ");
    text.lines().find_map(|l| l.strip_prefix(&prefix).map(String::from))
}

#[test]
fn help_and_version_exit_zero() {
    assert!(bin().arg("--help").output().unwrap().status.success());
    assert!(bin().arg("--version").output().unwrap().status.success());
}

#[test]
fn argument_errors_exit_one() {
    let out = scratch("args");
    assert_eq!(bin().arg("--frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(run(&["transits", "--set", "numerics.trajectories=0"], &out).status.code(), Some(1));
    assert_eq!(run(&["transits", "--set", "cavity.no_such_key=3"], &out).status.code(), Some(1));
    assert_eq!(run(&["transits", "--set", "missing-equals"], &out).status.code(), Some(1));
    assert_eq!(run(&["eigen", "--detunings", "5:1:1"], &out).status.code(), Some(1));
    assert_eq!(run(&["potentials", "--from-nm", "0.1"], &out).status.code(), Some(1));
    assert_eq!(run(&["g2model", "--distribution", "/nonexistent/p_g.tsv"], &out).status.code(), Some(1));
    assert_eq!(run(&["transits", "--config", "/nonexistent/c.toml"], &out).status.code(), Some(1));
}

#[test]
fn config_prints_loadable_toml() {
    let out = scratch("config");
    let o = bin().arg("config").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("[cavity]") && text.contains("g_max_mhz"));
    fs::create_dir_all(&out).unwrap();
    let cfg = out.join("c.toml");
    fs::write(&cfg, text.replace("delta_ca_mhz = 0.0", "delta_ca_mhz = 25.0")).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "eigen", "--detunings", "0"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(out.join("run.toml")).unwrap().contains("delta_ca_mhz = 25"));
}

#[test]
fn eigen_table_matches_closed_form_at_zero_backscatter() {
    let out = scratch("eigen");
    let o = run(&["--set", "cavity.h_mhz=0", "eigen", "--g-mhz", "30", "--detunings=-20,0,20"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = out.join("eigen.tsv");
    assert_eq!(meta(&t, "g_MHz").as_deref(), Some("30"));
    let r = rows(&t);
    assert_eq!(r.len(), 3);
    // Resonant, h = 0: each travelling mode couples with g/sqrt(2), so the
    // symmetric mode couples with g and the pair is a damped two-level
    // problem. Damping columns are amplitude
    // rates: kappa_i + kappa_ex for the cavity and 2.6 MHz for the atom.
    let f: Vec<f64> = r[1].iter().map(|x| x.parse().unwrap()).collect();
    assert_eq!(f[0], 0.0);
    let split = f[1] - f[3];
    let (kappa, gamma): (f64, f64) = (8.0 + 13.0, 2.6);
    let expect = 2.0 * (30.0f64.powi(2) - ((kappa - gamma) / 2.0).powi(2)).sqrt();
    assert!((split - expect).abs() < 1e-6, "{split} vs {expect}");
}

#[test]
fn potentials_surface_term_scales_as_inverse_cube_far_out() {
    let out = scratch("pot");
    let o = run(&["potentials", "--detunings", "0", "--from-nm", "100", "--to-nm", "200", "--step-nm", "100"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out.join("potentials.tsv"));
    assert_eq!(r.len(), 2);
    let u: Vec<f64> = r.iter().map(|row| row[1].parse().unwrap()).collect();
    assert!(u[0] < 0.0 && u[1] < 0.0);
    let ratio = u[0] / u[1];
    // Between the 1/d^3 and 1/d^4 limits.
    assert!(ratio > 8.0 && ratio < 16.0, "{ratio}");
}

#[test]
fn transits_are_reproducible_from_seed_and_export_records() {
    let a = scratch("tr-a");
    let b = scratch("tr-b");
    let args = ["--seed", "11", "--set", "numerics.trajectories=150", "transits", "--dump", "1", "--photons", "1"];
    let oa = run(&args, &a);
    assert!(oa.status.success(), "{}", String::from_utf8_lossy(&oa.stderr));
    let ob = bin().args(args).args(["--workers", "1", "--out"]).arg(&b).output().unwrap();
    assert!(ob.status.success());
    for f in ["trace.tsv", "classes_g.tsv", "coupling_histogram.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    assert_eq!(meta(&a.join("trace.tsv"), "seed").as_deref(), Some("11"));
    let triggered: usize = meta(&a.join("trace.tsv"), "triggered").unwrap().parse().unwrap();
    if triggered > 0 {
        let photons: Vec<_> = fs::read_dir(&a).unwrap().filter_map(|e| e.ok()).filter(|e| e.file_name().to_string_lossy().starts_with("photons_")).collect();
        assert_eq!(photons.len(), 1);
        let text = fs::read_to_string(photons[0].path()).unwrap();
        assert!(text.contains("# channel timestamp_ns epoch"));
    }
    // The manifest written alongside reproduces the run.
    let c = scratch("tr-c");
    let oc = bin().args(["--config"]).arg(a.join("run.toml")).args(["transits", "--out"]).arg(&c).output().unwrap();
    assert!(oc.status.success(), "{}", String::from_utf8_lossy(&oc.stderr));
    assert_eq!(fs::read(a.join("trace.tsv")).unwrap(), fs::read(c.join("trace.tsv")).unwrap());
}

#[test]
fn spectra_single_detuning() {
    let out = scratch("spec");
    let o = run(&["--set", "numerics.trajectories=150", "--set", "cavity.delta_ca_mhz=60", "spectra", "--detunings", "60"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = out.join("spectra_full.tsv");
    let r = rows(&t);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][0].parse::<f64>().unwrap(), 60.0);
    let t_empty: f64 = r[0][6].parse().unwrap();
    assert!((0.0..=1.0).contains(&t_empty));
    assert_eq!(meta(&t, "delta_ca_MHz").as_deref(), Some("60"));
}

#[test]
fn g2model_reads_histogram_file() {
    let out = scratch("g2");
    fs::create_dir_all(&out).unwrap();
    let h = out.join("p_g.tsv");
    fs::write(&h, "# title: p(g)\n# unit: MHz\nlo\thi\tcentre\tcount\tdensity\n35\t45\t40\t10\t0.1\n").unwrap();
    let o = run(&["g2model", "--distribution", h.to_str().unwrap(), "--span-ns", "20", "--step-ns", "1"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = out.join("g2model.tsv");
    assert_eq!(meta(&t, "mean_g_MHz").map(|s| s.parse::<f64>().unwrap().round()), Some(40.0));
    let r = rows(&t);
    assert_eq!(r.len(), 41);
    // Stationary light: every curve is even in tau.
    let col = |k: usize| r.iter().map(|row| row[k].parse::<f64>().unwrap()).collect::<Vec<_>>();
    for k in 1..=3 {
        let c = col(k);
        for i in 0..c.len() {
            assert!((c[i] - c[c.len() - 1 - i]).abs() < 1e-9 * c[i].abs().max(1.0));
        }
    }
    let bad = out.join("bad.tsv");
    fs::write(&bad, "# unit: nm\nlo\thi\tcentre\tcount\tdensity\n1\t2\t1.5\t3\t1\n").unwrap();
    assert_eq!(run(&["g2model", "--distribution", bad.to_str().unwrap()], &out).status.code(), Some(1));
}
