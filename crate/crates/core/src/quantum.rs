//! Photon statistics of the transmitted field in a Hilbert space truncated at
//! two total excitations.
//!
//! Two routes are provided. [`g2_transmitted`] is the weak-drive limit, where
//! the state is a pure superposition of the 0-, 1- and 2-excitation manifolds
//! and the conditional state after a click evolves under the non-Hermitian
//! effective Hamiltonian. It is the leading order in the drive of
//! [`g2_transmitted_lindblad`], which builds the full Liouvillian and applies
//! the quantum regression theorem at the configured drive strength.
//!
//! The click operator is the forward output field `A = a_in − √(2κ_ex) a`,
//! so the empty-cavity interference at the taper is part of the statistics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::cqed::CavityAtomParams;

type CMat = DMatrix<Complex64>;

#[derive(Debug, Error, PartialEq)]
pub enum QuantumError {
    #[error("stationary state is not unique (null-space dimension {0})")]
    NullSpace(usize),
    #[error("empty coupling distribution")]
    EmptyDistribution,
    #[error("transmitted flux vanishes; g2 is undefined")]
    NoFlux,
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Product basis `|n_a, n_b, e⟩` with `n_a + n_b + e ≤ 2`.
///
/// A two-level atom carries at most one excitation, so the space has
/// 1 + 3 + 5 = 9 states.
#[derive(Clone, Debug)]
pub struct TruncatedSpace {
    states: Vec<[u8; 3]>,
    a: CMat,
    b: CMat,
    sm: CMat,
}

impl Default for TruncatedSpace {
    fn default() -> Self {
        Self::new()
    }
}

impl TruncatedSpace {
    pub fn new() -> Self {
        let mut states = Vec::new();
        for n in 0..=2u8 {
            for e in 0..=1u8.min(n) {
                for na in (0..=n - e).rev() {
                    states.push([na, n - e - na, e]);
                }
            }
        }
        // order inside a manifold: cavity states first, then atom-excited
        states.sort_by_key(|s| (s[0] + s[1] + s[2], s[2], std::cmp::Reverse(s[0])));
        let dim = states.len();
        let index = |s: [u8; 3]| states.iter().position(|&x| x == s);
        let mut a = CMat::zeros(dim, dim);
        let mut b = CMat::zeros(dim, dim);
        let mut sm = CMat::zeros(dim, dim);
        for (j, &s) in states.iter().enumerate() {
            if s[0] > 0 {
                if let Some(i) = index([s[0] - 1, s[1], s[2]]) {
                    a[(i, j)] = c((s[0] as f64).sqrt());
                }
            }
            if s[1] > 0 {
                if let Some(i) = index([s[0], s[1] - 1, s[2]]) {
                    b[(i, j)] = c((s[1] as f64).sqrt());
                }
            }
            if s[2] == 1 {
                if let Some(i) = index([s[0], s[1], 0]) {
                    sm[(i, j)] = c(1.0);
                }
            }
        }
        Self { states, a, b, sm }
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[[u8; 3]] {
        &self.states
    }

    /// Total excitation number of basis state `i`.
    pub fn excitation(&self, i: usize) -> usize {
        self.states[i].iter().map(|&x| x as usize).sum()
    }

    fn manifold(&self, n: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.excitation(i) == n).collect()
    }

    pub fn a(&self) -> &CMat {
        &self.a
    }

    pub fn b(&self) -> &CMat {
        &self.b
    }

    pub fn sigma_minus(&self) -> &CMat {
        &self.sm
    }

    fn identity(&self) -> CMat {
        CMat::identity(self.dim(), self.dim())
    }

    /// Forward output operator `A = a_in − √(2κ_ex) a` at input amplitude `ain`.
    pub fn output_operator(&self, p: &CavityAtomParams, ain: f64) -> CMat {
        self.identity() * c(ain) - &self.a * c((2.0 * p.kappa_ex).sqrt())
    }
}

/// System Hamiltonian in the probe frame, without the drive.
fn bare_hamiltonian(space: &TruncatedSpace, p: &CavityAtomParams) -> CMat {
    let (a, b, sm) = (&space.a, &space.b, &space.sm);
    let (ad, bd, sp) = (a.adjoint(), b.adjoint(), sm.adjoint());
    let (ga, gb) = p.couplings();
    let dc = p.delta_ca - p.delta_pa;
    let da = p.delta_a - p.delta_pa;
    let mut h = (&ad * a + &bd * b) * c(dc) + &sp * sm * c(da);
    h += (&ad * b + &bd * a) * c(p.h);
    h += &sp * a * ga + &ad * sm * ga.conj();
    h += &sp * b * gb + &bd * sm * gb.conj();
    h
}

/// Drive term `i √(2κ_ex) a_in (a† − a)`.
fn drive_hamiltonian(space: &TruncatedSpace, p: &CavityAtomParams, ain: f64) -> CMat {
    let eps = (2.0 * p.kappa_ex).sqrt() * ain;
    (space.a.adjoint() - &space.a) * Complex64::new(0.0, eps)
}

pub fn hamiltonian(space: &TruncatedSpace, p: &CavityAtomParams) -> CMat {
    bare_hamiltonian(space, p) + drive_hamiltonian(space, p, p.drive)
}

/// Jump operators `√(2κ) a`, `√(2κ) b`, `√(2γ) σ−`.
pub fn collapse_operators(space: &TruncatedSpace, p: &CavityAtomParams) -> Vec<CMat> {
    let k = c((2.0 * p.kappa()).sqrt());
    vec![&space.a * k, &space.b * k, &space.sm * c((2.0 * p.gamma).sqrt())]
}

fn kron(x: &CMat, y: &CMat) -> CMat {
    x.kronecker(y)
}

/// Liouvillian superoperator on column-stacked density matrices,
/// `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.
pub fn liouvillian(space: &TruncatedSpace, p: &CavityAtomParams) -> CMat {
    let id = space.identity();
    let h = hamiltonian(space, p);
    let i = Complex64::i();
    let mut l = kron(&id, &h) * (-i) + kron(&h.transpose(), &id) * i;
    for cop in collapse_operators(space, p) {
        let cdc = cop.adjoint() * &cop;
        l += kron(&cop.conjugate(), &cop);
        l -= kron(&id, &cdc) * c(0.5);
        l -= kron(&cdc.transpose(), &id) * c(0.5);
    }
    l
}

fn vec_of(m: &CMat) -> DVector<Complex64> {
    DVector::from_column_slice(m.as_slice())
}

fn mat_of(v: &DVector<Complex64>, n: usize) -> CMat {
    CMat::from_column_slice(n, n, v.as_slice())
}

/// Stationary density operator.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub rho: CMat,
    /// `‖L vec(ρ)‖ / ‖L‖` (Frobenius).
    pub residual: f64,
    /// `‖ρ − ρ†‖` of the raw solution, before symmetrization.
    pub hermiticity_error: f64,
}

impl DensityMatrix {
    pub fn trace(&self) -> Complex64 {
        self.rho.trace()
    }

    pub fn expect(&self, op: &CMat) -> Complex64 {
        (op * &self.rho).trace()
    }

    /// Total population in the `n`-excitation manifold.
    pub fn manifold_population(&self, space: &TruncatedSpace, n: usize) -> f64 {
        space.manifold(n).iter().map(|&i| self.rho[(i, i)].re).sum()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.rho + self.rho.adjoint()) * c(0.5);
        herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Solves `L ρ = 0` with `Tr ρ = 1`.
pub fn liouvillian_steady_state(p: &CavityAtomParams, space: &TruncatedSpace) -> Result<DensityMatrix, QuantumError> {
    let n = space.dim();
    let l = liouvillian(space, p);
    // Null-space dimension from the singular values of L.
    let sv = l.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let null = sv.iter().filter(|&&s| s <= 1e-10 * smax).count();
    if null != 1 {
        return Err(QuantumError::NullSpace(null));
    }
    let mut m = l.clone();
    for j in 0..n * n {
        m[(0, j)] = c(0.0);
    }
    for k in 0..n {
        m[(0, k * n + k)] = c(1.0);
    }
    let mut rhs = DVector::zeros(n * n);
    rhs[0] = c(1.0);
    let x = m.lu().solve(&rhs).ok_or(QuantumError::NullSpace(0))?;
    let residual = (&l * &x).norm() / l.norm();
    let mut rho = mat_of(&x, n);
    let hermiticity_error = (&rho - rho.adjoint()).norm();
    rho = (&rho + rho.adjoint()) * c(0.5);
    Ok(DensityMatrix { rho, residual, hermiticity_error })
}

/// Evolves a density matrix by `e^{Lτ}`.
pub fn evolve(l: &CMat, rho: &CMat, tau: f64) -> CMat {
    let n = rho.nrows();
    let prop = (l * c(tau)).exp();
    mat_of(&(prop * vec_of(rho)), n)
}

/// Normalized second-order correlation on a τ grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationCurve {
    pub tau: Vec<f64>,
    pub g2: Vec<f64>,
    /// Multiplicative scale applied to `g2` (1 unless fitted).
    pub scale: f64,
}

impl CorrelationCurve {
    /// Value at τ = 0 divided by the maximum over the grid.
    pub fn dip_to_peak(&self) -> Option<f64> {
        let i0 = self.tau.iter().position(|&t| t == 0.0)?;
        let peak = self.g2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Some(self.g2[i0] / peak)
    }

    /// Smallest τ > 0 at which the curve has recovered halfway from its
    /// τ = 0 value to its maximum, linearly interpolated.
    pub fn recovery_half_width(&self) -> Option<f64> {
        let i0 = self.tau.iter().position(|&t| t == 0.0)?;
        let peak = self.g2.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let half = 0.5 * (self.g2[i0] + peak);
        let mut order: Vec<usize> = (0..self.tau.len()).filter(|&i| self.tau[i] >= 0.0).collect();
        order.sort_by(|&a, &b| self.tau[a].partial_cmp(&self.tau[b]).unwrap());
        for w in order.windows(2) {
            let (y0, y1) = (self.g2[w[0]], self.g2[w[1]]);
            if y0 < half && y1 >= half {
                let (t0, t1) = (self.tau[w[0]], self.tau[w[1]]);
                return Some(t0 + (half - y0) / (y1 - y0) * (t1 - t0));
            }
        }
        None
    }
}

/// Weak-drive amplitudes at unit input amplitude.
struct WeakDrive {
    h1: CMat,
    v10: DVector<Complex64>,
    /// `√(2κ_ex) ⟨0|a|·⟩` on the one-excitation manifold.
    out1: DVector<Complex64>,
    /// Conditional one-excitation amplitudes and vacuum amplitude after a click.
    psi_c1: DVector<Complex64>,
    psi_c0: Complex64,
    /// `⟨0|A|ψ⟩`.
    out_ss: Complex64,
}

impl WeakDrive {
    fn new(space: &TruncatedSpace, p: &CavityAtomParams) -> Self {
        let i = Complex64::i();
        let mut heff = bare_hamiltonian(space, p);
        for cop in collapse_operators(space, p) {
            heff -= cop.adjoint() * &cop * (i * 0.5);
        }
        let up = space.a.adjoint() * Complex64::new(0.0, (2.0 * p.kappa_ex).sqrt());
        let m0 = space.manifold(0);
        let m1 = space.manifold(1);
        let m2 = space.manifold(2);
        let block = |m: &CMat, r: &[usize], cidx: &[usize]| CMat::from_fn(r.len(), cidx.len(), |x, y| m[(r[x], cidx[y])]);
        let h1 = block(&heff, &m1, &m1);
        let h2 = block(&heff, &m2, &m2);
        let v10 = DVector::from_iterator(m1.len(), m1.iter().map(|&r| up[(r, m0[0])]));
        let v21 = block(&up, &m2, &m1);
        let k = (2.0 * p.kappa_ex).sqrt();
        let a01 = DVector::from_iterator(m1.len(), m1.iter().map(|&cc| space.a[(m0[0], cc)] * k));
        let a12 = block(&space.a, &m1, &m2) * c(k);
        // H_n ψ_n = −V ψ_{n−1}
        let lu1 = h1.clone().lu();
        let psi1 = lu1.solve(&(-&v10)).expect("one-excitation block is dissipative");
        let psi2 = h2.lu().solve(&(-(&v21 * &psi1))).expect("two-excitation block is dissipative");
        let out_ss = c(1.0) - a01.dot(&psi1);
        let psi_c0 = out_ss;
        let psi_c1 = &psi1 - &a12 * &psi2;
        Self { h1, v10, out1: a01, psi_c1, psi_c0, out_ss }
    }

    /// `|⟨0|A|ψ_c(τ)⟩|²` at unit input.
    fn coincidence(&self, tau: f64) -> Complex64 {
        let lu = self.h1.clone().lu();
        let fixed = lu.solve(&(-(&self.v10 * self.psi_c0))).unwrap();
        let prop = (&self.h1 * Complex64::new(0.0, -tau.abs())).exp();
        let psi1 = &fixed + prop * (&self.psi_c1 - &fixed);
        self.psi_c0 - self.out1.dot(&psi1)
    }
}

/// Unnormalized pieces: transmitted flux per unit input flux (`T`) and
/// `G²(τ)` per unit input flux squared.
pub fn weak_drive_coincidences(p: &CavityAtomParams, space: &TruncatedSpace, tau: &[f64]) -> (f64, Vec<f64>) {
    let w = WeakDrive::new(space, p);
    let flux = w.out_ss.norm_sqr();
    let g2 = tau.iter().map(|&t| w.coincidence(t).norm_sqr()).collect();
    (flux, g2)
}

/// `g²(τ)` of the forward output in the weak-drive limit.
pub fn g2_transmitted(p: &CavityAtomParams, space: &TruncatedSpace, tau: &[f64]) -> Result<CorrelationCurve, QuantumError> {
    let (flux, raw) = weak_drive_coincidences(p, space, tau);
    if !(flux > 0.0) {
        return Err(QuantumError::NoFlux);
    }
    Ok(CorrelationCurve {
        tau: tau.to_vec(),
        g2: raw.iter().map(|g| g / (flux * flux)).collect(),
        scale: 1.0,
    })
}

/// `g²(τ)` at the finite drive `p.drive` from the truncated master equation.
pub fn g2_transmitted_lindblad(p: &CavityAtomParams, space: &TruncatedSpace, tau: &[f64]) -> Result<CorrelationCurve, QuantumError> {
    let ss = liouvillian_steady_state(p, space)?;
    let l = liouvillian(space, p);
    let a = space.output_operator(p, p.drive);
    let ada = a.adjoint() * &a;
    let n = ss.expect(&ada).re;
    if !(n > 0.0) {
        return Err(QuantumError::NoFlux);
    }
    let rho_c = &a * &ss.rho * a.adjoint();
    let g2 = tau
        .iter()
        .map(|&t| (&ada * evolve(&l, &rho_c, t.abs())).trace().re / (n * n))
        .collect();
    Ok(CorrelationCurve { tau: tau.to_vec(), g2, scale: 1.0 })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum G2Weighting {
    /// Each coupling contributes its coincidence rate, so bright
    /// configurations dominate as they do in a photon-counting experiment.
    #[default]
    Flux,
    /// Each coupling contributes its normalized `g²` with weight `p(g)`.
    Uniform,
}

/// Options for [`ensemble_g2`].
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleG2Options {
    pub weighting: G2Weighting,
    /// Number of traveling-wave phases averaged over `[0, π)`.
    pub theta_points: usize,
    /// Fit a single scale so that the mean of the curve at `±τ` equals `value`.
    pub target: Option<(f64, f64)>,
}

impl Default for EnsembleG2Options {
    fn default() -> Self {
        Self { weighting: G2Weighting::Flux, theta_points: 8, target: None }
    }
}

/// `g²(τ)` averaged over a coupling distribution `(g, weight)`.
///
/// With flux weighting the result is `Σ p G²_g(τ) / (Σ p T_g)²`, which tends
/// to `⟨T²⟩/⟨T⟩² ≥ 1` at long delay.
pub fn ensemble_g2(
    distribution: &[(f64, f64)],
    base: &CavityAtomParams,
    tau: &[f64],
    options: &EnsembleG2Options,
) -> Result<CorrelationCurve, QuantumError> {
    let mut g2 = averaged_curve(distribution, base, tau, options)?;
    let mut scale = 1.0;
    if let Some((t_ref, value)) = options.target {
        let at = averaged_curve(distribution, base, &[t_ref, -t_ref], options)?;
        scale = value / (0.5 * (at[0] + at[1]));
        for v in g2.iter_mut() {
            *v *= scale;
        }
    }
    Ok(CorrelationCurve { tau: tau.to_vec(), g2, scale })
}

fn averaged_curve(
    distribution: &[(f64, f64)],
    base: &CavityAtomParams,
    tau: &[f64],
    options: &EnsembleG2Options,
) -> Result<Vec<f64>, QuantumError> {
    let total: f64 = distribution.iter().map(|d| d.1).sum();
    if distribution.is_empty() || !(total > 0.0) {
        return Err(QuantumError::EmptyDistribution);
    }
    let space = TruncatedSpace::new();
    let nth = options.theta_points.max(1);
    let mut coincidences = vec![0.0; tau.len()];
    let mut normalized = vec![0.0; tau.len()];
    let mut flux_sum = 0.0;
    for &(g, w) in distribution.iter().filter(|d| d.1 != 0.0) {
        for k in 0..nth {
            let mut p = *base;
            p.g = g;
            p.theta = std::f64::consts::PI * k as f64 / nth as f64;
            let weight = w / total / nth as f64;
            let (flux, raw) = weak_drive_coincidences(&p, &space, tau);
            flux_sum += weight * flux;
            for (i, r) in raw.iter().enumerate() {
                coincidences[i] += weight * r;
                if flux > 0.0 {
                    normalized[i] += weight * r / (flux * flux);
                }
            }
        }
    }
    match options.weighting {
        G2Weighting::Flux if flux_sum > 0.0 => Ok(coincidences.iter().map(|x| x / (flux_sum * flux_sum)).collect()),
        G2Weighting::Flux => Err(QuantumError::NoFlux),
        G2Weighting::Uniform => Ok(normalized),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqed::{drive_amplitude, steady_state};
    use crate::units::mhz;

    fn params(g: f64) -> CavityAtomParams {
        CavityAtomParams {
            g: mhz(g),
            theta: 0.4,
            delta_pa: 0.0,
            delta_ca: 0.0,
            delta_a: 0.0,
            kappa_i: mhz(8.0),
            kappa_ex: mhz(13.0),
            h: mhz(10.0),
            gamma: mhz(2.6),
            drive: drive_amplitude(4e-12, 2.21e15),
        }
    }

    fn taus() -> Vec<f64> {
        (-20..=20).map(|k| k as f64 * 2e-9).collect()
    }

    #[test]
    fn space_has_nine_states() {
        let s = TruncatedSpace::new();
        assert_eq!(s.dim(), 9);
        assert_eq!(s.manifold(0).len(), 1);
        assert_eq!(s.manifold(1).len(), 3);
        assert_eq!(s.manifold(2).len(), 5);
        // a†a counts photons
        let n = s.a().adjoint() * s.a();
        for (i, st) in s.states().iter().enumerate() {
            assert!((n[(i, i)].re - st[0] as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn no_drive_gives_vacuum() {
        let mut p = params(40.0);
        p.drive = 0.0;
        let s = TruncatedSpace::new();
        let ss = liouvillian_steady_state(&p, &s).unwrap();
        assert!((ss.rho[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!((ss.rho.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steady_state_is_physical() {
        let s = TruncatedSpace::new();
        let ss = liouvillian_steady_state(&params(40.0), &s).unwrap();
        assert!((ss.trace().re - 1.0).abs() < 1e-12 && ss.trace().im.abs() < 1e-12);
        assert!(ss.residual < 1e-10, "{}", ss.residual);
        assert!(ss.min_eigenvalue() > -1e-9);
        assert!(ss.hermiticity_error < 1e-12);
        let p1 = ss.manifold_population(&s, 1);
        let p2 = ss.manifold_population(&s, 2);
        assert!(p2 < 0.1 * p1, "{p1} {p2}");
    }

    #[test]
    fn empty_cavity_matches_linear_solve() {
        let s = TruncatedSpace::new();
        let mut p = params(0.0);
        p.delta_pa = mhz(15.0);
        let ss = liouvillian_steady_state(&p, &s).unwrap();
        let n_q = ss.expect(&(s.a().adjoint() * s.a() + s.b().adjoint() * s.b())).re;
        let n_c = steady_state(&p).unwrap().photon_number;
        // truncation error is second order in n̄
        assert!((n_q - n_c).abs() < 2.0 * n_c * n_c, "{n_q} vs {n_c}");
        let alpha = ss.expect(s.a());
        assert!((alpha - steady_state(&p).unwrap().alpha).norm() < 2.0 * n_c.powf(1.5));
    }

    #[test]
    fn g2_is_unity_without_atom() {
        let curve = g2_transmitted(&params(0.0), &TruncatedSpace::new(), &taus()).unwrap();
        for v in &curve.g2 {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn resonant_coupling_antibunches() {
        let curve = g2_transmitted(&params(40.0), &TruncatedSpace::new(), &taus()).unwrap();
        let i0 = curve.tau.iter().position(|&t| t == 0.0).unwrap();
        assert!(curve.g2[i0] < curve.g2[i0 + 3], "{:?}", &curve.g2[i0..i0 + 4]);
    }

    #[test]
    fn curve_is_symmetric() {
        let curve = g2_transmitted(&params(30.0), &TruncatedSpace::new(), &taus()).unwrap();
        let n = curve.g2.len();
        for k in 0..n {
            assert_eq!(curve.g2[k], curve.g2[n - 1 - k]);
        }
        let lc = g2_transmitted_lindblad(&params(30.0), &TruncatedSpace::new(), &taus()).unwrap();
        for k in 0..n {
            assert!((lc.g2[k] - lc.g2[n - 1 - k]).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_cavity_turnstile() {
        // Critically coupled single mode, C = g²/(κγ) well above one.
        let p = CavityAtomParams {
            g: mhz(30.0),
            theta: 0.0,
            delta_pa: 0.0,
            delta_ca: 0.0,
            delta_a: 0.0,
            kappa_i: mhz(50.0),
            kappa_ex: mhz(50.0),
            h: 0.0,
            gamma: mhz(2.6),
            drive: 1.0,
        };
        let curve = g2_transmitted(&p, &TruncatedSpace::new(), &[0.0]).unwrap();
        assert!(curve.g2[0] < 0.1, "{}", curve.g2[0]);
    }

    #[test]
    fn lindblad_approaches_weak_limit() {
        let s = TruncatedSpace::new();
        let t = [0.0, 4e-9, 20e-9];
        let weak = g2_transmitted(&params(40.0), &s, &t).unwrap();
        let mut prev = f64::INFINITY;
        for scale in [0.3, 0.03, 0.003] {
            let mut p = params(40.0);
            p.drive *= scale;
            let full = g2_transmitted_lindblad(&p, &s, &t).unwrap();
            let err = (0..3).map(|k| (full.g2[k] - weak.g2[k]).abs()).fold(0.0, f64::max);
            assert!(err < prev, "{err} {prev}");
            prev = err;
        }
        assert!(prev < 1e-3, "{prev}");
    }

    #[test]
    fn trace_preserved_and_fixed_point() {
        let s = TruncatedSpace::new();
        let p = params(40.0);
        let l = liouvillian(&s, &p);
        let ss = liouvillian_steady_state(&p, &s).unwrap();
        let a = s.output_operator(&p, p.drive);
        let rc = &a * &ss.rho * a.adjoint();
        let tr0 = rc.trace();
        for tau in [1e-9, 1e-8, 5e-8, 2e-7] {
            let r = evolve(&l, &rc, tau);
            assert!((r.trace() - tr0).norm() < 1e-9 * tr0.norm());
            let f = evolve(&l, &ss.rho, tau);
            assert!((&f - &ss.rho).norm() < 1e-9);
        }
    }

    #[test]
    fn ensemble_delta_distribution_equals_single() {
        let base = params(0.0);
        let t = taus();
        let opt = EnsembleG2Options { theta_points: 1, ..Default::default() };
        let mut p = base;
        p.g = mhz(35.0);
        p.theta = 0.0;
        let single = g2_transmitted(&p, &TruncatedSpace::new(), &t).unwrap();
        let ens = ensemble_g2(&[(mhz(35.0), 3.0)], &base, &t, &opt).unwrap();
        for (a, b) in single.g2.iter().zip(&ens.g2) {
            assert!((a - b).abs() < 1e-12 * a.abs());
        }
    }

    #[test]
    fn ensemble_two_point_mix() {
        let base = params(0.0);
        let t = taus();
        let s = TruncatedSpace::new();
        let opt = EnsembleG2Options { theta_points: 1, ..Default::default() };
        let ens = ensemble_g2(&[(mhz(20.0), 1.0), (mhz(45.0), 3.0)], &base, &t, &opt).unwrap();
        // two independent runs combined by hand
        let run = |g: f64| {
            let mut p = base;
            p.g = mhz(g);
            p.theta = 0.0;
            weak_drive_coincidences(&p, &s, &t)
        };
        let (f1, r1) = run(20.0);
        let (f2, r2) = run(45.0);
        let flux = 0.25 * f1 + 0.75 * f2;
        for i in 0..t.len() {
            let expect = (0.25 * r1[i] + 0.75 * r2[i]) / (flux * flux);
            assert!((ens.g2[i] - expect).abs() < 1e-12 * expect);
        }
        assert!(matches!(ensemble_g2(&[], &base, &t, &opt), Err(QuantumError::EmptyDistribution)));
    }

    #[test]
    fn ensemble_scale_hits_target() {
        let base = params(0.0);
        let t: Vec<f64> = (-25..=25).map(|k| k as f64 * 2e-9).collect();
        let opt = EnsembleG2Options { target: Some((40e-9, 1.0)), theta_points: 2, ..Default::default() };
        let ens = ensemble_g2(&[(mhz(30.0), 1.0), (mhz(40.0), 1.0)], &base, &t, &opt).unwrap();
        let i = t.iter().position(|&x| (x - 40e-9).abs() < 1e-15).unwrap();
        assert!((ens.g2[i] - 1.0).abs() < 1e-12);
        assert!(ens.scale > 0.0);
    }

    #[test]
    fn half_width_and_ratio() {
        let curve = CorrelationCurve {
            tau: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            g2: vec![1.0, 0.8, 0.5, 0.8, 1.0],
            scale: 1.0,
        };
        assert_eq!(curve.dip_to_peak(), Some(0.5));
        assert!((curve.recovery_half_width().unwrap() - 0.25 / 0.3).abs() < 1e-12);
    }
}
