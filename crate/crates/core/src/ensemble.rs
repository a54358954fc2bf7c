//! Reductions of many triggered transits into averaged observables: the
//! post-trigger transmission trace and its two-component fit, probe spectra,
//! per-class distributions, detector cross-correlations and FORT capture
//! statistics.
//!
//! Accumulators are plain sums so that partial results from parallel
//! workers merge associatively.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::detection::Channel;
use crate::trajectory::{Fate, Sample, TrajectoryRecord};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("no triggered records")]
    NoTriggered,
    #[error("trace has {0} bins; at least {1} are required")]
    TooFewBins(usize, usize),
    #[error("fit did not converge: {0}")]
    NoConvergence(String),
    #[error("reference spectrum missing for {0} detuning point(s)")]
    MissingReference(usize),
    #[error("bin width {0:e} s is not a multiple of the sample interval {1:e} s")]
    BinWidth(f64, f64),
}

/// Per-bin sums of a family of equally binned traces.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceAccumulator {
    pub bin_width: f64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: usize,
}

impl TraceAccumulator {
    pub fn new(bin_width: f64, bins: usize) -> Self {
        Self { bin_width, sum: vec![0.0; bins], sum_sq: vec![0.0; bins], n: 0 }
    }

    pub fn add(&mut self, values: &[f64]) {
        for (i, &v) in values.iter().take(self.sum.len()).enumerate() {
            self.sum[i] += v;
            self.sum_sq[i] += v * v;
        }
        self.n += 1;
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.sum.len(), other.sum.len(), "accumulators differ in length");
        for i in 0..self.sum.len() {
            self.sum[i] += other.sum[i];
            self.sum_sq[i] += other.sum_sq[i];
        }
        self.n += other.n;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bins(&self) -> usize {
        self.sum.len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.n.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Standard error of each bin mean.
    pub fn sem(&self) -> Vec<f64> {
        let n = self.n as f64;
        if self.n < 2 {
            return vec![0.0; self.sum.len()];
        }
        self.sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| {
                let m = s / n;
                ((q / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt()
            })
            .collect()
    }
}

/// What a per-record trace is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TraceSource {
    /// Quasi-static transmission along the trajectory (noise-free).
    #[default]
    Expected,
    /// Forward photocounts scaled to transmission.
    Counts,
}

/// Conversion of forward photocounts to transmission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountScale {
    /// Detection rate summed over both forward detectors at `T = 1`.
    pub rate_at_unit_transmission: f64,
    /// Background rate summed over both forward detectors.
    pub background_rate: f64,
}

/// Per-record transmission trace binned to `bin_width` starting at the
/// trigger. `None` for untriggered records.
pub fn record_trace(
    rec: &TrajectoryRecord,
    bin_width: f64,
    sample_interval: f64,
    bins: usize,
    source: TraceSource,
    scale: Option<&CountScale>,
) -> Option<Vec<f64>> {
    let t0 = rec.trigger?;
    match (source, scale) {
        (TraceSource::Counts, Some(s)) => {
            let mut out = vec![0.0; bins];
            for c in [Channel::D1, Channel::D2] {
                for t in rec.photons.times(c) {
                    let k = ((t - t0) / bin_width).floor();
                    if k >= 0.0 && (k as usize) < bins {
                        out[k as usize] += 1.0;
                    }
                }
            }
            let expected_bg = s.background_rate * bin_width;
            let unit = s.rate_at_unit_transmission * bin_width;
            Some(out.into_iter().map(|c| (c - expected_bg) / unit).collect())
        }
        _ => {
            let per = (bin_width / sample_interval).round().max(1.0) as usize;
            let mut out = vec![0.0; bins];
            for (j, slot) in out.iter_mut().enumerate() {
                let lo = j * per;
                let hi = ((j + 1) * per).min(rec.trace.len());
                if lo >= hi {
                    break;
                }
                *slot = rec.trace[lo..hi].iter().map(|x| x.0).sum::<f64>() / (hi - lo) as f64;
            }
            Some(out)
        }
    }
}

/// Ensemble trace with its tail background.
#[derive(Clone, Debug, PartialEq)]
pub struct AveragedTrace {
    /// Bin centres relative to the trigger.
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub sem: Vec<f64>,
    pub n: usize,
    /// `B ≡ T(t ≫ δt)`, the mean over the tail window.
    pub background: f64,
    pub background_sem: f64,
}

impl AveragedTrace {
    pub fn from_accumulator(acc: &TraceAccumulator, tail: (f64, f64)) -> Result<Self, EnsembleError> {
        if acc.n() == 0 {
            return Err(EnsembleError::NoTriggered);
        }
        let w = acc.bin_width;
        let t: Vec<f64> = (0..acc.bins()).map(|j| (j as f64 + 0.5) * w).collect();
        let mean = acc.mean();
        let sem = acc.sem();
        let idx: Vec<usize> = (0..t.len()).filter(|&j| t[j] >= tail.0 && t[j] < tail.1).collect();
        let (background, background_sem) = if idx.is_empty() {
            (0.0, 0.0)
        } else {
            let m = idx.len() as f64;
            let b = idx.iter().map(|&j| mean[j]).sum::<f64>() / m;
            // tail bins of one record are correlated; the bound below treats
            // them as fully correlated
            let s = idx.iter().map(|&j| sem[j]).sum::<f64>() / m;
            (b, s)
        };
        Ok(Self { t, mean, sem, n: acc.n(), background, background_sem })
    }

    /// `T_B(t) = T(t) − B`.
    pub fn subtracted(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m - self.background).collect()
    }
}

/// Bin-averaged post-trigger transmission of all triggered records.
pub fn average_trace(
    records: &[TrajectoryRecord],
    bin_width: f64,
    sample_interval: f64,
    record_length: f64,
    source: TraceSource,
    scale: Option<&CountScale>,
    tail: (f64, f64),
) -> Result<AveragedTrace, EnsembleError> {
    let ratio = bin_width / sample_interval;
    if source == TraceSource::Expected && (ratio - ratio.round()).abs() > 1e-6 {
        return Err(EnsembleError::BinWidth(bin_width, sample_interval));
    }
    let bins = (record_length / bin_width).round() as usize;
    let mut acc = TraceAccumulator::new(bin_width, bins);
    for r in records {
        if let Some(v) = record_trace(r, bin_width, sample_interval, bins, source, scale) {
            acc.add(&v);
        }
    }
    AveragedTrace::from_accumulator(&acc, tail)
}

/// `A·e^{−t/δt_I} + C·e^{−(t/δt_II)²} + offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpGaussFit {
    pub amplitude_exp: f64,
    pub tau_exp: f64,
    pub amplitude_gauss: f64,
    pub tau_gauss: f64,
    pub offset: f64,
    /// One-standard-deviation (68 %) uncertainties in the order above.
    pub sigma: [f64; 5],
    pub chi2: f64,
    pub dof: usize,
    pub residual_rms: f64,
    pub iterations: usize,
    pub starts: usize,
}

impl ExpGaussFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude_exp * (-t / self.tau_exp).exp()
            + self.amplitude_gauss * (-(t / self.tau_gauss).powi(2)).exp()
            + self.offset
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Bins before this time are ignored.
    pub t_start: f64,
    pub free_offset: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { t_start: 0.0, free_offset: false }
    }
}

/// Internal parameters `[A, ln δt_I, C, ln δt_II, offset]`, times in μs.
fn model_and_jacobian(p: &[f64; 5], t: f64) -> (f64, [f64; 5]) {
    let (a, l1, c, l2, off) = (p[0], p[1], p[2], p[3], p[4]);
    let tau1 = l1.exp();
    let tau2 = l2.exp();
    let e = (-t / tau1).exp();
    let x = t / tau2;
    let gss = (-x * x).exp();
    let f = a * e + c * gss + off;
    (f, [e, a * e * t / tau1, gss, c * gss * 2.0 * x * x, 1.0])
}

struct FitData<'a> {
    t: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
    free: Vec<usize>,
}

impl FitData<'_> {
    fn chi2(&self, p: &[f64; 5]) -> f64 {
        self.t
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((&t, &y), &w)| {
                let r = y - model_and_jacobian(p, t).0;
                w * r * r
            })
            .sum()
    }

    fn normal_equations(&self, p: &[f64; 5]) -> (DMatrix<f64>, DVector<f64>) {
        let k = self.free.len();
        let mut jtj = DMatrix::zeros(k, k);
        let mut jtr = DVector::zeros(k);
        for ((&t, &y), &w) in self.t.iter().zip(self.y).zip(&self.w) {
            let (f, jac) = model_and_jacobian(p, t);
            let r = y - f;
            for (a, &ia) in self.free.iter().enumerate() {
                jtr[a] += w * jac[ia] * r;
                for (b, &ib) in self.free.iter().enumerate() {
                    jtj[(a, b)] += w * jac[ia] * jac[ib];
                }
            }
        }
        (jtj, jtr)
    }

    /// Linear least squares for the amplitudes (and offset) at fixed times.
    fn linear_amplitudes(&self, l1: f64, l2: f64, free_offset: bool) -> Option<[f64; 5]> {
        let cols = if free_offset { 3 } else { 2 };
        let mut ata = DMatrix::zeros(cols, cols);
        let mut aty = DVector::zeros(cols);
        for ((&t, &y), &w) in self.t.iter().zip(self.y).zip(&self.w) {
            let (_, j) = model_and_jacobian(&[0.0, l1, 0.0, l2, 0.0], t);
            let row = [j[0], j[2], 1.0];
            for a in 0..cols {
                aty[a] += w * row[a] * y;
                for b in 0..cols {
                    ata[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        let x = ata.lu().solve(&aty)?;
        Some([x[0], l1, x[1], l2, if free_offset { x[2] } else { 0.0 }])
    }

    fn levenberg_marquardt(&self, mut p: [f64; 5]) -> ([f64; 5], f64, usize) {
        let mut chi = self.chi2(&p);
        let mut lambda = 1e-3;
        let mut it = 0;
        while it < 200 {
            it += 1;
            let (jtj, jtr) = self.normal_equations(&p);
            let mut improved = false;
            for _ in 0..30 {
                let mut a = jtj.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
                }
                let Some(step) = a.lu().solve(&jtr) else {
                    lambda *= 10.0;
                    continue;
                };
                let mut trial = p;
                for (a, &ia) in self.free.iter().enumerate() {
                    trial[ia] += step[a];
                }
                trial[1] = trial[1].clamp(-12.0, 8.0);
                trial[3] = trial[3].clamp(-12.0, 8.0);
                let c = self.chi2(&trial);
                if c.is_finite() && c <= chi {
                    let rel = (chi - c) / chi.max(1e-300);
                    p = trial;
                    chi = c;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = true;
                    if rel < 1e-12 {
                        return (p, chi, it);
                    }
                    break;
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
        }
        (p, chi, it)
    }
}

/// Nonlinear least squares of an exponential plus a Gaussian, from a fixed
/// schedule of starting time constants. Times are seconds; `sigma` weights
/// the bins when given.
pub fn fit_exp_gauss(t: &[f64], y: &[f64], sigma: Option<&[f64]>, opts: &FitOptions) -> Result<ExpGaussFit, EnsembleError> {
    const MIN_BINS: usize = 20;
    let keep: Vec<usize> = (0..t.len()).filter(|&i| t[i] >= opts.t_start).collect();
    if keep.len() < MIN_BINS {
        return Err(EnsembleError::TooFewBins(keep.len(), MIN_BINS));
    }
    let tu: Vec<f64> = keep.iter().map(|&i| t[i] * 1e6).collect();
    let yy: Vec<f64> = keep.iter().map(|&i| y[i]).collect();
    let w: Vec<f64> = match sigma {
        Some(s) => {
            let floor = keep.iter().map(|&i| s[i]).filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
            let floor = if floor.is_finite() { floor } else { 1.0 };
            keep.iter().map(|&i| 1.0 / s[i].max(floor).powi(2)).collect()
        }
        None => vec![1.0; keep.len()],
    };
    let free: Vec<usize> = if opts.free_offset { vec![0, 1, 2, 3, 4] } else { vec![0, 1, 2, 3] };
    let data = FitData { t: &tu, y: &yy, w, free };

    let tau1_starts = [0.05, 0.2, 0.5, 1.0, 2.0];
    let tau2_starts = [1.0, 2.0, 4.0, 8.0];
    let mut best: Option<([f64; 5], f64, usize)> = None;
    let mut starts = 0;
    for &a in &tau1_starts {
        for &b in &tau2_starts {
            let Some(p0) = data.linear_amplitudes(f64::ln(a), f64::ln(b), opts.free_offset) else {
                continue;
            };
            starts += 1;
            let (p, chi, it) = data.levenberg_marquardt(p0);
            if chi.is_finite() && best.as_ref().is_none_or(|b| chi < b.1) {
                best = Some((p, chi, it));
            }
        }
    }
    let (p, chi, iterations) = best.ok_or_else(|| EnsembleError::NoConvergence("no usable start".into()))?;
    let k = data.free.len();
    let dof = keep.len().saturating_sub(k).max(1);
    let (jtj, _) = data.normal_equations(&p);
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| EnsembleError::NoConvergence(format!("singular covariance at {p:?}")))?;
    // without explicit errors the residual variance sets the scale
    let s2 = if sigma.is_some() { 1.0 } else { chi / dof as f64 };
    let mut sig = [0.0; 5];
    for (a, &ia) in data.free.iter().enumerate() {
        sig[ia] = (cov[(a, a)] * s2).max(0.0).sqrt();
    }
    let tau1 = p[1].exp();
    let tau2 = p[3].exp();
    let rss: f64 = tu.iter().zip(&yy).map(|(&t, &y)| (y - model_and_jacobian(&p, t).0).powi(2)).sum();
    Ok(ExpGaussFit {
        amplitude_exp: p[0],
        tau_exp: tau1 * 1e-6,
        amplitude_gauss: p[2],
        tau_gauss: tau2 * 1e-6,
        offset: p[4],
        sigma: [sig[0], sig[1] * tau1 * 1e-6, sig[2], sig[3] * tau2 * 1e-6, sig[4]],
        chi2: chi,
        dof,
        residual_rms: (rss / keep.len() as f64).sqrt(),
        iterations,
        starts,
    })
}

/// Sums for one probe detuning.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumAccumulator {
    pub delta_pa: f64,
    pub n: usize,
    sum_t: f64,
    sum_t2: f64,
    sum_r: f64,
    sum_r2: f64,
    pub counts_t: u64,
    pub counts_r: u64,
}

impl SpectrumAccumulator {
    pub fn new(delta_pa: f64) -> Self {
        Self { delta_pa, n: 0, sum_t: 0.0, sum_t2: 0.0, sum_r: 0.0, sum_r2: 0.0, counts_t: 0, counts_r: 0 }
    }

    /// Adds one triggered record averaged over `window` after the trigger.
    pub fn add(&mut self, rec: &TrajectoryRecord, window: (f64, f64), sample_interval: f64) {
        let Some(t0) = rec.trigger else { return };
        let (t, r) = window_average(rec, window, sample_interval);
        self.n += 1;
        self.sum_t += t;
        self.sum_t2 += t * t;
        self.sum_r += r;
        self.sum_r2 += r * r;
        for c in Channel::ALL {
            let k = rec.photons.count_in(c, t0 + window.0, t0 + window.1) as u64;
            if c.is_forward() {
                self.counts_t += k;
            } else {
                self.counts_r += k;
            }
        }
    }

    /// Adds one already-averaged `(T, R)` pair with no photocounts.
    pub fn add_value(&mut self, t: f64, r: f64) {
        self.n += 1;
        self.sum_t += t;
        self.sum_t2 += t * t;
        self.sum_r += r;
        self.sum_r2 += r * r;
    }

    pub fn merge(&mut self, o: &Self) {
        self.n += o.n;
        self.sum_t += o.sum_t;
        self.sum_t2 += o.sum_t2;
        self.sum_r += o.sum_r;
        self.sum_r2 += o.sum_r2;
        self.counts_t += o.counts_t;
        self.counts_r += o.counts_r;
    }

    fn mean_sem(sum: f64, sum2: f64, n: usize) -> (f64, f64) {
        if n == 0 {
            return (0.0, 0.0);
        }
        let nf = n as f64;
        let m = sum / nf;
        let var = if n > 1 { (sum2 / nf - m * m).max(0.0) * nf / (nf - 1.0) } else { 0.0 };
        (m, (var / nf).sqrt())
    }
}

/// Mean quasi-static `(T, R)` of a record over `window` after its trigger.
pub fn window_average(rec: &TrajectoryRecord, window: (f64, f64), sample_interval: f64) -> (f64, f64) {
    let lo = (window.0 / sample_interval).round() as usize;
    let hi = ((window.1 / sample_interval).round() as usize).min(rec.trace.len());
    if lo >= hi {
        return (0.0, 0.0);
    }
    let n = (hi - lo) as f64;
    let (t, r) = rec.trace[lo..hi].iter().fold((0.0, 0.0), |a, x| (a.0 + x.0, a.1 + x.1));
    (t / n, r / n)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumPoint {
    pub delta_pa: f64,
    pub n: usize,
    pub t_atom: f64,
    pub t_sem: f64,
    pub r_atom: f64,
    pub r_sem: f64,
    pub t_empty: f64,
    pub r_empty: f64,
    /// Photocount estimates normalized by the far-detuned count level.
    pub t_counts: f64,
    pub r_counts: f64,
    pub counts_t: u64,
    pub counts_r: u64,
}

impl SpectrumPoint {
    pub fn delta_t(&self) -> f64 {
        self.t_atom - self.t_empty
    }

    pub fn delta_r(&self) -> f64 {
        self.r_atom - self.r_empty
    }
}

/// Reference values for one detuning: empty-cavity `(T, R)` and the number
/// of forward counts per record expected in the window at `T = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumReference {
    pub t_empty: f64,
    pub r_empty: f64,
    pub unit_counts: f64,
}

/// Combines per-detuning sums with their references, sorted by detuning.
pub fn assemble_spectra(
    acc: &[SpectrumAccumulator],
    reference: &[SpectrumReference],
) -> Result<Vec<SpectrumPoint>, EnsembleError> {
    if reference.len() != acc.len() {
        return Err(EnsembleError::MissingReference(acc.len().abs_diff(reference.len())));
    }
    let mut out: Vec<SpectrumPoint> = acc
        .iter()
        .zip(reference)
        .map(|(a, r)| {
            let (t, ts) = SpectrumAccumulator::mean_sem(a.sum_t, a.sum_t2, a.n);
            let (rr, rs) = SpectrumAccumulator::mean_sem(a.sum_r, a.sum_r2, a.n);
            let norm = r.unit_counts * a.n.max(1) as f64;
            SpectrumPoint {
                delta_pa: a.delta_pa,
                n: a.n,
                t_atom: t,
                t_sem: ts,
                r_atom: rr,
                r_sem: rs,
                t_empty: r.t_empty,
                r_empty: r.r_empty,
                t_counts: a.counts_t as f64 / norm,
                r_counts: a.counts_r as f64 / norm,
                counts_t: a.counts_t,
                counts_r: a.counts_r,
            }
        })
        .collect();
    out.sort_by(|a, b| a.delta_pa.total_cmp(&b.delta_pa));
    Ok(out)
}

/// Peak-finder settings; the smoothing width is reported with results.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakOptions {
    /// Odd number of points in the quadratic smoothing window.
    pub smoothing_points: usize,
    /// Minimum prominence as a fraction of the smoothed range.
    pub min_prominence: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self { smoothing_points: 5, min_prominence: 0.05 }
    }
}

/// Savitzky-Golay-style smoothing: a local quadratic least-squares fit over
/// `width` neighbouring points (shrunk at the edges), evaluated at the
/// centre. Works on non-uniform abscissae.
pub fn smooth(x: &[f64], y: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let n = y.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            if hi - lo < 3 {
                return y[i];
            }
            let mut ata = nalgebra::Matrix3::<f64>::zeros();
            let mut aty = nalgebra::Vector3::<f64>::zeros();
            for j in lo..hi {
                let u = x[j] - x[i];
                let row = [1.0, u, u * u];
                for a in 0..3 {
                    aty[a] += row[a] * y[j];
                    for b in 0..3 {
                        ata[(a, b)] += row[a] * row[b];
                    }
                }
            }
            ata.lu().solve(&aty).map(|c| c[0]).unwrap_or(y[i])
        })
        .collect()
}

/// Local maxima of the smoothed curve with sufficient prominence, refined by
/// parabolic interpolation. Returns `(x, y_smoothed)` sorted by `x`.
pub fn find_peaks(x: &[f64], y: &[f64], opts: &PeakOptions) -> Vec<(f64, f64)> {
    let s = smooth(x, y, opts.smoothing_points);
    let n = s.len();
    if n < 3 {
        return Vec::new();
    }
    let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let need = opts.min_prominence * (hi - lo);
    let mut out = Vec::new();
    for i in 1..n - 1 {
        if !(s[i] > s[i - 1] && s[i] >= s[i + 1]) {
            continue;
        }
        let left_min = s[..i].iter().rev().take_while(|&&v| v <= s[i]).fold(s[i], |a, &v| a.min(v));
        let right_min = s[i + 1..].iter().take_while(|&&v| v <= s[i]).fold(s[i], |a, &v| a.min(v));
        let prominence = s[i] - left_min.max(right_min);
        if prominence < need {
            continue;
        }
        let (x0, x1, x2) = (x[i - 1], x[i], x[i + 1]);
        let (y0, y1, y2) = (s[i - 1], s[i], s[i + 1]);
        let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
        let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
        let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
        let xv = if a < 0.0 { (-b / (2.0 * a)).clamp(x0, x2) } else { x1 };
        out.push((xv, y1));
    }
    out
}

/// Distance between the lowest- and highest-frequency peaks.
pub fn peak_splitting(x: &[f64], y: &[f64], opts: &PeakOptions) -> Option<f64> {
    let p = find_peaks(x, y, opts);
    (p.len() >= 2).then(|| p[p.len() - 1].0 - p[0].0)
}

/// Average coupling from a peak splitting, inverting `√(Δ_ca² + 4ḡ²)`.
pub fn inferred_coupling(splitting: f64, delta_ca: f64) -> Option<f64> {
    let s = splitting * splitting - delta_ca * delta_ca;
    (s > 0.0).then(|| 0.5 * s.sqrt())
}

/// Normalized histogram on uniform bins; out-of-range values are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        let w = (hi - lo) / bins as f64;
        Self { edges: (0..=bins).map(|i| lo + i as f64 * w).collect(), counts: vec![0; bins] }
    }

    pub fn fill(&mut self, v: f64) {
        let lo = self.edges[0];
        let w = self.edges[1] - lo;
        let k = ((v - lo) / w).floor();
        if k >= 0.0 && (k as usize) < self.counts.len() {
            self.counts[k as usize] += 1;
        }
    }

    pub fn from_values(lo: f64, hi: f64, bins: usize, values: impl IntoIterator<Item = f64>) -> Self {
        let mut h = Self::new(lo, hi, bins);
        for v in values {
            h.fill(v);
        }
        h
    }

    pub fn merge(&mut self, o: &Self) {
        assert_eq!(self.edges, o.edges, "histogram binning differs");
        for (a, b) in self.counts.iter_mut().zip(&o.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn centres(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Probability density with unit mass (all zeros when empty).
    pub fn density(&self) -> Vec<f64> {
        let n = self.total();
        if n == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(w, &c)| c as f64 / (n as f64 * (w[1] - w[0])))
            .collect()
    }

    /// `Σ p_i Δ_i`, equal to 1 for a non-empty histogram.
    pub fn mass(&self) -> f64 {
        self.density().iter().zip(self.edges.windows(2)).map(|(p, w)| p * (w[1] - w[0])).sum()
    }

    /// Centre of the most populated bin after a three-bin running sum.
    pub fn mode(&self) -> Option<f64> {
        if self.total() == 0 {
            return None;
        }
        let n = self.counts.len();
        let smoothed: Vec<u64> = (0..n)
            .map(|i| self.counts[i.saturating_sub(1)..(i + 2).min(n)].iter().sum())
            .collect();
        let k = (0..n).max_by_key(|&i| (smoothed[i], self.counts[i]))?;
        Some(self.centres()[k])
    }

    /// `(centre, weight)` pairs with unit total weight.
    pub fn distribution(&self) -> Vec<(f64, f64)> {
        let n = self.total().max(1) as f64;
        self.centres().into_iter().zip(&self.counts).filter(|(_, &c)| c > 0).map(|(x, &c)| (x, c as f64 / n)).collect()
    }
}

/// Fate-based split: crashing atoms are class I, all others class II.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransitClass {
    I,
    II,
}

pub fn classify(rec: &TrajectoryRecord) -> Option<TransitClass> {
    rec.trigger?;
    Some(if rec.fate == Fate::Crashed { TransitClass::I } else { TransitClass::II })
}

/// Mean `(d, g, δ_a)` over the live samples in `[trigger, trigger + span]`.
pub fn early_means(rec: &TrajectoryRecord, span: f64) -> Option<(f64, f64, f64)> {
    let t0 = rec.trigger?;
    let s: Vec<&Sample> = rec.samples.iter().filter(|s| s.t >= t0 && s.t <= t0 + span + 1e-15).collect();
    if s.is_empty() {
        return None;
    }
    let n = s.len() as f64;
    Some((
        s.iter().map(|x| x.d).sum::<f64>() / n,
        s.iter().map(|x| x.g).sum::<f64>() / n,
        s.iter().map(|x| x.delta_a).sum::<f64>() / n,
    ))
}

/// Binning of the per-class distributions; `g` and `δ_a` in rad/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramSpec {
    pub d: (f64, f64, usize),
    pub g: (f64, f64, usize),
    pub delta_a: (f64, f64, usize),
}

impl HistogramSpec {
    pub fn for_coupling(g_max: f64) -> Self {
        Self {
            d: (0.0, 600e-9, 30),
            g: (0.0, g_max, 25),
            delta_a: (-g_max, 0.0, 25),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassHistograms {
    /// Index 0 is class I, index 1 class II.
    pub d: [Histogram; 2],
    pub g: [Histogram; 2],
    pub delta_a: [Histogram; 2],
}

impl ClassHistograms {
    pub fn new(spec: &HistogramSpec) -> Self {
        let h = |s: (f64, f64, usize)| Histogram::new(s.0, s.1, s.2);
        Self {
            d: [h(spec.d), h(spec.d)],
            g: [h(spec.g), h(spec.g)],
            delta_a: [h(spec.delta_a), h(spec.delta_a)],
        }
    }

    pub fn add(&mut self, rec: &TrajectoryRecord, span: f64) {
        let (Some(c), Some((d, g, da))) = (classify(rec), early_means(rec, span)) else { return };
        let i = match c {
            TransitClass::I => 0,
            TransitClass::II => 1,
        };
        self.d[i].fill(d);
        self.g[i].fill(g);
        self.delta_a[i].fill(da);
    }

    pub fn merge(&mut self, o: &Self) {
        for i in 0..2 {
            self.d[i].merge(&o.d[i]);
            self.g[i].merge(&o.g[i]);
            self.delta_a[i].merge(&o.delta_a[i]);
        }
    }

    pub fn class_count(&self, c: TransitClass) -> u64 {
        self.d[c as usize].total()
    }
}

pub fn class_histograms(records: &[TrajectoryRecord], span: f64, spec: &HistogramSpec) -> ClassHistograms {
    let mut h = ClassHistograms::new(spec);
    for r in records {
        h.add(r, span);
    }
    h
}

/// Mean coupling over the trigger window `(trigger − window, trigger]`,
/// from the pre-trigger path.
pub fn trigger_window_coupling(rec: &TrajectoryRecord, window: f64) -> Option<f64> {
    let t0 = rec.trigger?;
    let v: Vec<f64> = rec.path.iter().filter(|s| s.t > t0 - window * (1.0 - 1e-9) && s.t <= t0 + 1e-15).map(|s| s.g).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Histogram of trigger-window couplings for the vertical-fall model.
pub fn p_fall_distribution(records: &[TrajectoryRecord], window: f64, g_max: f64, bins: usize) -> Histogram {
    Histogram::from_values(0.0, g_max * (1.0 + 1e-12), bins, records.iter().filter_map(|r| trigger_window_coupling(r, window)))
}

const JACKKNIFE_BLOCKS: usize = 20;

/// Sums for `C₁₂(τ)` and `C̄₁₂(τ)` on bins of width `bin` over the record,
/// kept per jackknife block.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationAccumulator {
    pub bin: f64,
    pub bins: usize,
    pub max_lag: usize,
    n: [usize; JACKKNIFE_BLOCKS],
    c1: Vec<Vec<f64>>,
    c2: Vec<Vec<f64>>,
    x: Vec<Vec<f64>>,
}

impl CorrelationAccumulator {
    pub fn new(bin: f64, record_length: f64, max_lag: usize) -> Self {
        let bins = (record_length / bin).round() as usize;
        Self {
            bin,
            bins,
            max_lag,
            n: [0; JACKKNIFE_BLOCKS],
            c1: vec![vec![0.0; bins]; JACKKNIFE_BLOCKS],
            c2: vec![vec![0.0; bins]; JACKKNIFE_BLOCKS],
            x: vec![vec![0.0; 2 * max_lag + 1]; JACKKNIFE_BLOCKS],
        }
    }

    fn binned(&self, rec: &TrajectoryRecord, c: Channel, t0: f64) -> Vec<usize> {
        rec.photons
            .times(c)
            .filter_map(|t| {
                let k = ((t - t0) / self.bin + 1e-9).floor();
                (k >= 0.0 && (k as usize) < self.bins).then_some(k as usize)
            })
            .collect()
    }

    pub fn add(&mut self, rec: &TrajectoryRecord) {
        let Some(t0) = rec.trigger else { return };
        let b = (rec.index as usize) % JACKKNIFE_BLOCKS;
        let e1 = self.binned(rec, Channel::D1, t0);
        let e2 = self.binned(rec, Channel::D2, t0);
        for &i in &e1 {
            self.c1[b][i] += 1.0;
        }
        for &j in &e2 {
            self.c2[b][j] += 1.0;
        }
        let l = self.max_lag as i64;
        for &i in &e1 {
            for &j in &e2 {
                let lag = j as i64 - i as i64;
                if lag.abs() <= l {
                    self.x[b][(lag + l) as usize] += 1.0;
                }
            }
        }
        self.n[b] += 1;
    }

    pub fn merge(&mut self, o: &Self) {
        assert!(self.bins == o.bins && self.max_lag == o.max_lag, "correlation binning differs");
        for b in 0..JACKKNIFE_BLOCKS {
            self.n[b] += o.n[b];
            for i in 0..self.bins {
                self.c1[b][i] += o.c1[b][i];
                self.c2[b][i] += o.c2[b][i];
            }
            for k in 0..self.x[b].len() {
                self.x[b][k] += o.x[b][k];
            }
        }
    }

    pub fn n(&self) -> usize {
        self.n.iter().sum()
    }

    /// Estimates from the blocks selected by `use_block`.
    fn estimate(&self, use_block: impl Fn(usize) -> bool) -> (Vec<f64>, Vec<f64>) {
        let l = self.max_lag as i64;
        let n: usize = (0..JACKKNIFE_BLOCKS).filter(|&b| use_block(b)).map(|b| self.n[b]).sum();
        let nf = n.max(1) as f64;
        let mut m1 = vec![0.0; self.bins];
        let mut m2 = vec![0.0; self.bins];
        let mut x = vec![0.0; 2 * self.max_lag + 1];
        for b in (0..JACKKNIFE_BLOCKS).filter(|&b| use_block(b)) {
            for i in 0..self.bins {
                m1[i] += self.c1[b][i] / nf;
                m2[i] += self.c2[b][i] / nf;
            }
            for k in 0..x.len() {
                x[k] += self.x[b][k] / nf;
            }
        }
        let bar: Vec<f64> = (-l..=l)
            .map(|lag| {
                (0..self.bins as i64)
                    .filter_map(|i| {
                        let j = i + lag;
                        (j >= 0 && j < self.bins as i64).then(|| m1[i as usize] * m2[j as usize])
                    })
                    .sum()
            })
            .collect();
        (x, bar)
    }

    pub fn result(&self) -> CorrelationResult {
        let (c12, bar) = self.estimate(|_| true);
        let used: Vec<usize> = (0..JACKKNIFE_BLOCKS).filter(|&b| self.n[b] > 0).collect();
        let k = used.len();
        let diff: Vec<f64> = c12.iter().zip(&bar).map(|(a, b)| a - b).collect();
        let mean_diff = diff.iter().sum::<f64>() / diff.len() as f64;
        let mut sigma = vec![0.0; diff.len()];
        let mut sigma_mean = 0.0;
        if k >= 2 {
            let kf = k as f64;
            let mut reps = Vec::with_capacity(k);
            for &drop in &used {
                let (x, b) = self.estimate(|bb| bb != drop);
                let d: Vec<f64> = x.iter().zip(&b).map(|(a, b)| a - b).collect();
                reps.push(d);
            }
            for i in 0..diff.len() {
                let m = reps.iter().map(|r| r[i]).sum::<f64>() / kf;
                let v: f64 = reps.iter().map(|r| (r[i] - m).powi(2)).sum();
                sigma[i] = ((kf - 1.0) / kf * v).sqrt();
            }
            let means: Vec<f64> = reps.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
            let mm = means.iter().sum::<f64>() / kf;
            sigma_mean = ((kf - 1.0) / kf * means.iter().map(|v| (v - mm).powi(2)).sum::<f64>()).sqrt();
        }
        let l = self.max_lag as i64;
        CorrelationResult {
            tau: (-l..=l).map(|k| k as f64 * self.bin).collect(),
            c12,
            c12_bar: bar,
            sigma_diff: sigma,
            mean_diff,
            sigma_mean_diff: sigma_mean,
            n: self.n(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationResult {
    pub tau: Vec<f64>,
    pub c12: Vec<f64>,
    pub c12_bar: Vec<f64>,
    /// Jackknife uncertainty of `C₁₂ − C̄₁₂` per lag.
    pub sigma_diff: Vec<f64>,
    /// Mean of `C₁₂ − C̄₁₂` over lags and its jackknife uncertainty.
    pub mean_diff: f64,
    pub sigma_mean_diff: f64,
    pub n: usize,
}

impl CorrelationResult {
    /// Whether `C₁₂ > C̄₁₂` at every lag, and the combined significance of
    /// the lag-averaged excess.
    pub fn super_poissonian(&self) -> (bool, f64) {
        let all = self.c12.iter().zip(&self.c12_bar).all(|(a, b)| a > b);
        let z = if self.sigma_mean_diff > 0.0 { self.mean_diff / self.sigma_mean_diff } else { 0.0 };
        (all, z)
    }
}

pub fn correlations(records: &[TrajectoryRecord], bin: f64, record_length: f64, max_lag: usize) -> CorrelationResult {
    let mut acc = CorrelationAccumulator::new(bin, record_length, max_lag);
    for r in records {
        acc.add(r);
    }
    acc.result()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FortStatistics {
    pub triggered: usize,
    pub captured: usize,
    pub capture_fraction: f64,
    /// Trap residence times of all triggered atoms with the FORT on.
    pub residence: Histogram,
    /// Mean azimuthal angular velocity of captured atoms and its error.
    pub mean_phi_dot: f64,
    pub phi_dot_sem: f64,
}

/// Captured atoms have a trap residence above `capture_time` or survive
/// to the horizon.
pub fn fort_statistics(records: &[TrajectoryRecord], capture_time: f64, horizon: f64) -> FortStatistics {
    let trig: Vec<&TrajectoryRecord> = records.iter().filter(|r| r.trigger.is_some()).collect();
    let mut residence = Histogram::new(0.0, horizon * (1.0 + 1e-9), 24);
    let mut rates = Vec::new();
    for r in &trig {
        let Some(res) = r.fort_residence else { continue };
        residence.fill(res);
        if res > capture_time || r.fate == Fate::Trapped {
            rates.push(r.mean_phi_dot());
        }
    }
    let captured = rates.len();
    let n = captured as f64;
    let mean = if captured > 0 { rates.iter().sum::<f64>() / n } else { 0.0 };
    let sem = if captured > 1 { (rates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt() } else { 0.0 };
    FortStatistics {
        triggered: trig.len(),
        captured,
        capture_fraction: if trig.is_empty() { 0.0 } else { n / trig.len() as f64 },
        residence,
        mean_phi_dot: mean,
        phi_dot_sem: sem,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{DriveSetting, PhotonRecord};
    use crate::mode::CylPoint;
    use crate::trajectory::AtomKinematics;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Poisson};

    const DT: f64 = 20e-9;
    const LEN: f64 = 8e-6;

    fn record(index: u64, fate: Fate, trace: Vec<(f64, f64)>) -> TrajectoryRecord {
        TrajectoryRecord {
            index,
            initial: AtomKinematics { position: CylPoint::new(1.0, 0.0, 0.0, 1.0), velocity: Vector3::zeros(), time: 0.0 },
            trigger: Some(1e-6),
            fate,
            fate_time: 2e-6,
            drive_after: DriveSetting { power: 2e-12, delta_pa: 0.0 },
            samples: Vec::new(),
            trace,
            path: Vec::new(),
            photons: PhotonRecord::new(2e-9),
            azimuth_travel: 0.0,
            fort_residence: None,
        }
    }

    fn grid() -> Vec<f64> {
        (0..(LEN / DT).round() as usize).map(|k| k as f64 * DT).collect()
    }

    #[test]
    fn tail_background_recovers_injected_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let b = 0.013;
        let recs: Vec<_> = (0..400)
            .map(|i| {
                let tr = grid().iter().map(|&t| (0.2 * (-t / 1e-6).exp() + b + noise.sample(&mut rng), 0.0)).collect();
                record(i, Fate::Exited, tr)
            })
            .collect();
        let avg = average_trace(&recs, 2.0 * DT, DT, LEN, TraceSource::Expected, None, (6e-6, 8e-6)).unwrap();
        assert_eq!(avg.n, 400);
        assert!((avg.background - b).abs() < 2.0 * avg.background_sem, "{} ± {}", avg.background, avg.background_sem);
        assert!(avg.subtracted()[0] > 0.15);
    }

    #[test]
    fn count_traces_convert_to_transmission() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let scale = CountScale { rate_at_unit_transmission: 2e7, background_rate: 4e2 };
        let level = 0.3;
        let recs: Vec<_> = (0..300)
            .map(|i| {
                let mut r = record(i, Fate::Exited, Vec::new());
                let t0 = r.trigger.unwrap();
                let rate = scale.rate_at_unit_transmission * level + scale.background_rate;
                let mut t = t0;
                loop {
                    t += -(1.0 - rng.random::<f64>()).ln() / rate;
                    if t >= t0 + LEN {
                        break;
                    }
                    let c = if rng.random::<bool>() { Channel::D1 } else { Channel::D2 };
                    r.photons.push(c, t);
                }
                r
            })
            .collect();
        let avg = average_trace(&recs, 400e-9, DT, LEN, TraceSource::Counts, Some(&scale), (0.0, LEN)).unwrap();
        assert!((avg.background - level).abs() < 0.01, "{}", avg.background);
    }

    #[test]
    fn bin_width_must_tile_samples() {
        let recs = vec![record(0, Fate::Exited, vec![(0.0, 0.0); 400])];
        let e = average_trace(&recs, 30e-9, DT, LEN, TraceSource::Expected, None, (6e-6, 8e-6)).unwrap_err();
        assert!(matches!(e, EnsembleError::BinWidth(..)));
        let none: Vec<TrajectoryRecord> = Vec::new();
        assert_eq!(average_trace(&none, DT, DT, LEN, TraceSource::Expected, None, (6e-6, 8e-6)), Err(EnsembleError::NoTriggered));
    }

    #[test]
    fn standard_error_falls_as_inverse_root_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let ns = [100usize, 400, 1600, 6400];
        let mut pts = Vec::new();
        for &n in &ns {
            let mut acc = TraceAccumulator::new(DT, 50);
            for _ in 0..n {
                let v: Vec<f64> = (0..50).map(|_| 0.1 + noise.sample(&mut rng)).collect();
                acc.add(&v);
            }
            let s = acc.sem().iter().sum::<f64>() / 50.0;
            pts.push(((n as f64).ln(), s.ln()));
        }
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() < 0.05, "slope {slope}");
    }

    fn synthetic_trace(a: f64, t1: f64, c: f64, t2: f64, sigma: f64, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let t: Vec<f64> = (0..200).map(|k| (k as f64 + 0.5) * 40e-9).collect();
        let y = t.iter().map(|&t| a * (-t / t1).exp() + c * (-(t / t2).powi(2)).exp() + noise.sample(&mut rng)).collect();
        (t, y, vec![sigma; 200])
    }

    #[test]
    fn fit_recovers_synthetic_time_constants() {
        let (t, y, s) = synthetic_trace(0.06, 0.78e-6, 0.15, 3.75e-6, 0.002, 1);
        let f = fit_exp_gauss(&t, &y, Some(&s), &FitOptions::default()).unwrap();
        assert!((f.tau_exp - 0.78e-6).abs() < 3.0 * f.sigma[1], "{} ± {}", f.tau_exp, f.sigma[1]);
        assert!((f.tau_gauss - 3.75e-6).abs() < 3.0 * f.sigma[3], "{} ± {}", f.tau_gauss, f.sigma[3]);
        assert!(f.sigma[1] < 0.1e-6 && f.sigma[3] < 0.1e-6);
        assert!((f.chi2 / f.dof as f64 - 1.0).abs() < 0.3);
        assert_eq!(f, fit_exp_gauss(&t, &y, Some(&s), &FitOptions::default()).unwrap());
    }

    #[test]
    fn fit_coverage_of_one_sigma_intervals() {
        // the 68 % intervals should cover the truth in roughly 68 % of draws
        let mut inside = 0;
        let n = 60;
        for seed in 0..n {
            let (t, y, s) = synthetic_trace(0.06, 0.78e-6, 0.15, 3.75e-6, 0.004, 100 + seed);
            let f = fit_exp_gauss(&t, &y, Some(&s), &FitOptions::default()).unwrap();
            if (f.tau_gauss - 3.75e-6).abs() < f.sigma[3] {
                inside += 1;
            }
        }
        let frac = inside as f64 / n as f64;
        assert!((frac - 0.68).abs() < 0.2, "coverage {frac}");
    }

    #[test]
    fn pure_exponential_gives_null_gaussian() {
        let (t, y, s) = synthetic_trace(0.2, 0.5e-6, 0.0, 3.0e-6, 0.002, 3);
        let f = fit_exp_gauss(&t, &y, Some(&s), &FitOptions::default()).unwrap();
        assert!(f.amplitude_gauss.abs() < 3.0 * f.sigma[2].max(1e-3), "{} ± {}", f.amplitude_gauss, f.sigma[2]);
        assert!((f.tau_exp - 0.5e-6).abs() < 0.05e-6);
    }

    #[test]
    fn fit_needs_enough_bins() {
        let t = vec![0.0; 5];
        assert!(matches!(fit_exp_gauss(&t, &t, None, &FitOptions::default()), Err(EnsembleError::TooFewBins(5, _))));
    }

    fn lorentz(x: f64, x0: f64, w: f64) -> f64 {
        1.0 / (1.0 + ((x - x0) / w).powi(2))
    }

    #[test]
    fn peak_finder_resolves_two_lines() {
        let x: Vec<f64> = (0..121).map(|i| -100.0 + 2.0 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&x| 0.4 * lorentz(x, -30.0, 8.0) + lorentz(x, 70.0, 12.0)).collect();
        let p = find_peaks(&x, &y, &PeakOptions::default());
        assert_eq!(p.len(), 2, "{p:?}");
        let s = peak_splitting(&x, &y, &PeakOptions::default()).unwrap();
        assert!((s - 100.0).abs() < 1.5, "{s}");
        // a lone line has no splitting
        let y1: Vec<f64> = x.iter().map(|&x| lorentz(x, 10.0, 10.0)).collect();
        assert_eq!(peak_splitting(&x, &y1, &PeakOptions::default()), None);
    }

    #[test]
    fn coupling_inversion() {
        let g = 40.0;
        let s = (60.0f64.powi(2) + 4.0 * g * g).sqrt();
        assert!((inferred_coupling(s, 60.0).unwrap() - g).abs() < 1e-12);
        assert_eq!(inferred_coupling(50.0, 60.0), None);
    }

    #[test]
    fn smoothing_preserves_quadratics() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64).powf(1.3)).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.0 - 0.3 * x + 0.01 * x * x).collect();
        for (a, b) in smooth(&x, &y, 7).iter().zip(&y) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn spectra_without_coupling_have_zero_difference() {
        let mut acc = Vec::new();
        let mut refs = Vec::new();
        for (k, det) in [-40.0, 0.0, 40.0].iter().enumerate() {
            let (te, re) = (0.1 * k as f64, 0.5 - 0.1 * k as f64);
            let mut a = SpectrumAccumulator::new(*det);
            for i in 0..5 {
                a.add(&record(i, Fate::Exited, vec![(te, re); 400]), (200e-9, 700e-9), DT);
            }
            acc.push(a);
            refs.push(SpectrumReference { t_empty: te, r_empty: re, unit_counts: 1.0 });
        }
        let s = assemble_spectra(&acc, &refs).unwrap();
        for p in &s {
            assert!(p.delta_t().abs() < 1e-15 && p.delta_r().abs() < 1e-15);
            assert_eq!(p.n, 5);
        }
        assert!(matches!(assemble_spectra(&acc, &refs[..2]), Err(EnsembleError::MissingReference(1))));
    }

    #[test]
    fn all_crashing_population_leaves_class_two_empty() {
        let spec = HistogramSpec::for_coupling(2.0 * std::f64::consts::PI * 100e6);
        let recs: Vec<_> = (0..10)
            .map(|i| {
                let mut r = record(i, Fate::Crashed, Vec::new());
                r.samples.push(Sample {
                    t: 1.1e-6,
                    d: 90e-9,
                    z: 0.0,
                    phi: 0.0,
                    velocity: Vector3::zeros(),
                    g: 2.0 * std::f64::consts::PI * 40e6,
                    delta_a: -1e7,
                    gamma: 1e7,
                    transmission: 0.2,
                    reflection: 0.1,
                });
                r
            })
            .collect();
        let h = class_histograms(&recs, 500e-9, &spec);
        assert_eq!(h.class_count(TransitClass::I), 10);
        assert_eq!(h.class_count(TransitClass::II), 0);
        assert!((h.d[0].mode().unwrap() - 90e-9).abs() < 10e-9);
        assert_eq!(h.d[1].mode(), None);
    }

    fn photon_records(n: u64, level: impl Fn(u64) -> f64, seed: u64) -> Vec<TrajectoryRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut r = record(i, Fate::Exited, Vec::new());
                let t0 = r.trigger.unwrap();
                for c in [Channel::D1, Channel::D2] {
                    let k = Poisson::new(level(i)).unwrap().sample(&mut rng) as usize;
                    let mut t: Vec<f64> = (0..k).map(|_| t0 + rng.random::<f64>() * 2e-6).collect();
                    t.sort_by(f64::total_cmp);
                    for t in t {
                        r.photons.push(c, t);
                    }
                }
                r
            })
            .collect()
    }

    #[test]
    fn constant_intensity_is_poissonian() {
        let recs = photon_records(2000, |_| 8.0, 5);
        let c = correlations(&recs, 200e-9, 2e-6, 4);
        let (_, z) = c.super_poissonian();
        assert!(z.abs() < 3.5, "z = {z}");
    }

    #[test]
    fn fluctuating_intensity_is_super_poissonian() {
        let recs = photon_records(2000, |i| if i % 2 == 0 { 2.0 } else { 14.0 }, 6);
        let c = correlations(&recs, 200e-9, 2e-6, 4);
        let (all, z) = c.super_poissonian();
        assert!(all && z > 3.0, "all={all} z={z}");
        assert_eq!(c.tau.len(), 9);
        assert!(c.sigma_diff.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn correlation_accumulators_merge() {
        let recs = photon_records(200, |i| 1.0 + (i % 3) as f64, 8);
        let mut a = CorrelationAccumulator::new(100e-9, 2e-6, 3);
        let mut b = a.clone();
        let mut whole = a.clone();
        for (i, r) in recs.iter().enumerate() {
            whole.add(r);
            if i < 77 { a.add(r) } else { b.add(r) }
        }
        a.merge(&b);
        assert_eq!(a, whole);
    }

    #[test]
    fn trap_statistics() {
        let mut recs: Vec<_> = (0..10).map(|i| record(i, Fate::Crashed, Vec::new())).collect();
        let none = fort_statistics(&recs, 50e-6, 120e-6);
        assert_eq!((none.captured, none.capture_fraction), (0, 0.0));
        for (i, r) in recs.iter_mut().enumerate() {
            r.fort_residence = Some(if i < 3 { 80e-6 } else { 5e-6 });
            r.fate_time = r.trigger.unwrap() + 80e-6;
            r.azimuth_travel = 8.0;
        }
        let s = fort_statistics(&recs, 50e-6, 120e-6);
        assert_eq!(s.captured, 3);
        assert!((s.capture_fraction - 0.3).abs() < 1e-12);
        assert!((s.mean_phi_dot - 1e5).abs() < 1e-6);
        assert_eq!(s.residence.total(), 10);
    }

    #[test]
    fn p_fall_uses_trigger_window() {
        let mut r = record(0, Fate::Exited, Vec::new());
        let t0 = r.trigger.unwrap();
        for k in 0..60 {
            let t = t0 - 1.4e-6 + k as f64 * 25e-9;
            r.path.push(Sample {
                t,
                d: 1e-7,
                z: 0.0,
                phi: 0.0,
                velocity: Vector3::zeros(),
                g: if k > 26 { 10.0 } else { 100.0 },
                delta_a: 0.0,
                gamma: 1.0,
                transmission: 0.0,
                reflection: 0.0,
            });
        }
        assert_eq!(trigger_window_coupling(&r, 750e-9), Some(10.0));
        let h = p_fall_distribution(&[r], 750e-9, 100.0, 10);
        assert_eq!(h.total(), 1);
        assert_eq!(p_fall_distribution(&[], 750e-9, 100.0, 10).total(), 0);
    }

    proptest! {
        #[test]
        fn histogram_has_unit_mass(values in proptest::collection::vec(-1.0f64..2.0, 1..300), bins in 1usize..40) {
            let h = Histogram::from_values(-1.0, 2.0, bins, values);
            prop_assert!((h.mass() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn trace_merge_is_order_independent(rows in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 6), 2..20), split in 1usize..19) {
            let split = split.min(rows.len() - 1);
            let mut whole = TraceAccumulator::new(1.0, 6);
            let mut a = TraceAccumulator::new(1.0, 6);
            let mut b = TraceAccumulator::new(1.0, 6);
            for (i, r) in rows.iter().enumerate() {
                whole.add(r);
                if i < split { a.add(r) } else { b.add(r) }
            }
            b.merge(&a);
            prop_assert_eq!(b.n(), whole.n());
            for (x, y) in b.mean().iter().zip(whole.mean()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
