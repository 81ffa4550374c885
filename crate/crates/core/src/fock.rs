//! Truncated Fock-space states of a single cavity mode.
//!
//! Pure states are amplitude vectors over `|0>, ..., |cutoff>`; mixed states
//! are dense Hermitian matrices over the same basis.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{invalid, Error, Result};

/// Tail mass allowed beyond the cutoff when truncating a coherent state.
pub const COHERENT_TAIL_TOLERANCE: f64 = 1e-12;

const NORM_TOLERANCE: f64 = 1e-10;
const HERMITIAN_TOLERANCE: f64 = 1e-12;

/// `max(20, ceil(alpha^2 + 8 alpha + 10))`.
pub fn default_cutoff(alpha: f64) -> usize {
    let rule = (alpha * alpha + 8.0 * alpha + 10.0).ceil();
    (rule as usize).max(20)
}

/// Poisson weights `e^{-a2} a2^n / n!` for `n = 0..=cutoff`.
pub(crate) fn poisson_weights(alpha_sq: f64, cutoff: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(cutoff + 1);
    let mut p = (-alpha_sq).exp();
    w.push(p);
    for n in 1..=cutoff {
        p *= alpha_sq / n as f64;
        w.push(p);
    }
    w
}

/// Smallest cutoff whose truncated Poisson tail is below `tol`.
pub fn required_coherent_cutoff(alpha: f64, tol: f64) -> usize {
    let alpha_sq = alpha * alpha;
    let mut p = (-alpha_sq).exp();
    let mut terms = vec![p];
    let mut n = 0usize;
    // run well past the mode until terms are negligible against tol
    while n < 10 || (n as f64) < alpha_sq + 1.0 || p > tol * 1e-6 {
        n += 1;
        p *= alpha_sq / n as f64;
        terms.push(p);
    }
    let mut tail = 0.0;
    for c in (0..terms.len()).rev() {
        if tail >= tol {
            return c + 1;
        }
        tail += terms[c];
    }
    1
}

/// Normalized pure state of the cavity field in a truncated Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    amplitudes: Array1<C64>,
}

impl FockState {
    /// Builds a state from raw amplitudes and normalizes it.
    pub fn from_amplitudes(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(invalid("cutoff", "cutoff must be at least 1"));
        }
        if amplitudes
            .iter()
            .any(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(invalid("amplitudes", "non-finite amplitude"));
        }
        let mut state = Self {
            amplitudes: Array1::from(amplitudes),
        };
        state.normalize()?;
        Ok(state)
    }

    pub(crate) fn from_normalized(amplitudes: Array1<C64>) -> Self {
        Self { amplitudes }
    }

    pub fn fock(n: usize, cutoff: usize) -> Result<Self> {
        if n > cutoff {
            return Err(invalid(
                "n",
                format!("photon number {n} exceeds cutoff {cutoff}"),
            ));
        }
        let mut amps = vec![C64::new(0.0, 0.0); cutoff + 1];
        amps[n] = C64::new(1.0, 0.0);
        Self::from_amplitudes(amps)
    }

    pub fn vacuum(cutoff: usize) -> Result<Self> {
        Self::fock(0, cutoff)
    }

    /// Coherent state `|alpha>` with real `alpha >= 0`, truncated at `cutoff`.
    ///
    /// Fails when the discarded Poisson tail would exceed
    /// [`COHERENT_TAIL_TOLERANCE`]; the error carries the cutoff that would
    /// be sufficient.
    pub fn coherent(alpha: f64, cutoff: usize) -> Result<Self> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(invalid(
                "alpha",
                format!("must be real and >= 0, got {alpha}"),
            ));
        }
        if cutoff < 1 {
            return Err(invalid("cutoff", "cutoff must be at least 1"));
        }
        let required = required_coherent_cutoff(alpha, COHERENT_TAIL_TOLERANCE);
        if cutoff < required {
            return Err(Error::CutoffTooSmall {
                cutoff,
                required,
                tolerance: COHERENT_TAIL_TOLERANCE,
            });
        }
        let mut amps = Vec::with_capacity(cutoff + 1);
        let mut b = (-alpha * alpha / 2.0).exp();
        amps.push(C64::new(b, 0.0));
        for n in 1..=cutoff {
            b *= alpha / (n as f64).sqrt();
            amps.push(C64::new(b, 0.0));
        }
        Self::from_amplitudes(amps)
    }

    /// Coherent state at [`default_cutoff`].
    pub fn coherent_default(alpha: f64) -> Result<Self> {
        Self::coherent(alpha, default_cutoff(alpha))
    }

    pub fn cutoff(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, n: usize) -> C64 {
        self.amplitudes[n]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let norm = self.norm_sqr().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NotNormalized { norm });
        }
        self.amplitudes.mapv_inplace(|a| a / norm);
        Ok(())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockState) -> Result<C64> {
        check_cutoffs(self.cutoff(), other.cutoff())?;
        Ok(self
            .amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|self><self|`.
    pub fn to_density(&self) -> DensityMatrix {
        let d = self.dim();
        let elements = Array2::from_shape_fn((d, d), |(m, n)| {
            self.amplitudes[m] * self.amplitudes[n].conj()
        });
        DensityMatrix { elements }
    }

    /// Orthogonal projection onto the listed photon numbers, renormalized.
    pub fn project_onto(&self, support: &[usize]) -> Result<FockState> {
        let mut amps = vec![C64::new(0.0, 0.0); self.dim()];
        for &n in support {
            if n > self.cutoff() {
                return Err(invalid(
                    "support",
                    format!("{n} exceeds cutoff {}", self.cutoff()),
                ));
            }
            amps[n] = self.amplitudes[n];
        }
        Self::from_amplitudes(amps)
    }

    pub fn photon_distribution(&self) -> Result<PhotonDistribution> {
        PhotonDistribution::new(self.amplitudes.iter().map(|a| a.norm_sqr()).collect())
    }

    fn check_normalized(&self) -> Result<()> {
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm });
        }
        Ok(())
    }
}

/// Unit-trace Hermitian density matrix over a truncated Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    elements: Array2<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity and rescales to unit trace.
    pub fn from_matrix(elements: Array2<C64>) -> Result<Self> {
        let (rows, cols) = elements.dim();
        if rows != cols {
            return Err(invalid(
                "elements",
                format!("matrix is {rows}x{cols}, not square"),
            ));
        }
        if rows < 2 {
            return Err(invalid("cutoff", "cutoff must be at least 1"));
        }
        let deviation = hermitian_deviation(&elements);
        if deviation > HERMITIAN_TOLERANCE {
            return Err(Error::NotHermitian { deviation });
        }
        let mut rho = Self { elements };
        rho.normalize()?;
        Ok(rho)
    }

    pub(crate) fn from_raw(elements: Array2<C64>) -> Self {
        Self { elements }
    }

    /// Truncated thermal state `p_n ∝ (n_th / (1 + n_th))^n`.
    pub fn thermal(n_th: f64, cutoff: usize) -> Result<Self> {
        if !n_th.is_finite() || n_th < 0.0 {
            return Err(invalid("n_th", format!("must be >= 0, got {n_th}")));
        }
        let ratio = n_th / (1.0 + n_th);
        let mut elements = Array2::zeros((cutoff + 1, cutoff + 1));
        let mut p = 1.0;
        for n in 0..=cutoff {
            elements[(n, n)] = C64::new(p, 0.0);
            p *= ratio;
        }
        Self::from_matrix(elements)
    }

    /// Uniform mixture of the listed Fock states.
    pub fn mixture_of_fock(levels: &[usize], cutoff: usize) -> Result<Self> {
        let mut elements = Array2::zeros((cutoff + 1, cutoff + 1));
        for &n in levels {
            if n > cutoff {
                return Err(invalid("levels", format!("{n} exceeds cutoff {cutoff}")));
            }
            elements[(n, n)] += C64::new(1.0, 0.0);
        }
        Self::from_matrix(elements)
    }

    pub fn cutoff(&self) -> usize {
        self.elements.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.elements.nrows()
    }

    pub fn elements(&self) -> &Array2<C64> {
        &self.elements
    }

    pub fn trace(&self) -> C64 {
        self.elements.diag().sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let tr = self.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::NotNormalized { norm: tr });
        }
        self.elements.mapv_inplace(|x| x / tr);
        Ok(())
    }

    /// Replaces the matrix with `(rho + rho^dagger) / 2`.
    pub fn hermitize(&mut self) {
        let d = self.dim();
        for m in 0..d {
            self.elements[(m, m)].im = 0.0;
            for n in (m + 1)..d {
                let avg = (self.elements[(m, n)] + self.elements[(n, m)].conj()) * 0.5;
                self.elements[(m, n)] = avg;
                self.elements[(n, m)] = avg.conj();
            }
        }
    }

    /// Zeroes tiny negative populations left by roundoff and restores unit trace.
    pub(crate) fn clip_negative_populations(&mut self) {
        let d = self.dim();
        if (0..d).all(|n| self.elements[(n, n)].re >= 0.0) {
            return;
        }
        for n in 0..d {
            if self.elements[(n, n)].re < 0.0 {
                self.elements[(n, n)] = C64::new(0.0, 0.0);
            }
        }
        let tr = self.trace().re;
        self.elements.mapv_inplace(|x| x / tr);
    }

    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.elements)
    }

    /// `<psi|rho|psi>`.
    pub fn expectation(&self, psi: &FockState) -> Result<f64> {
        check_cutoffs(psi.cutoff(), self.cutoff())?;
        let a = psi.amplitudes();
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for m in 0..d {
            if a[m] == C64::new(0.0, 0.0) {
                continue;
            }
            let row: C64 = (0..d).map(|n| self.elements[(m, n)] * a[n]).sum();
            acc += a[m].conj() * row;
        }
        Ok(acc.re)
    }

    /// True when `rho + tol * I` admits a Cholesky factorization, i.e. the
    /// smallest eigenvalue is at least `-tol`.
    pub fn is_positive_within(&self, tol: f64) -> bool {
        let d = self.dim();
        let a = &self.elements;
        let mut l = Array2::<C64>::zeros((d, d));
        for j in 0..d {
            let mut diag = a[(j, j)].re + tol;
            for k in 0..j {
                diag -= l[(j, k)].norm_sqr();
            }
            if diag.is_nan() || diag <= 0.0 {
                return false;
            }
            let pivot = diag.sqrt();
            l[(j, j)] = C64::new(pivot, 0.0);
            for i in (j + 1)..d {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / pivot;
            }
        }
        true
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.elements
            .diag()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p.re)
            .sum()
    }

    pub fn photon_distribution(&self) -> Result<PhotonDistribution> {
        PhotonDistribution::new(self.elements.diag().iter().map(|p| p.re).collect())
    }

    fn check_normalized(&self) -> Result<()> {
        let tr = self.trace().re;
        if (tr - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm: tr });
        }
        Ok(())
    }
}

fn hermitian_deviation(m: &Array2<C64>) -> f64 {
    let d = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_cutoffs(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::CutoffMismatch { left, right });
    }
    Ok(())
}

/// Photon-number probabilities `Pr(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotonDistribution {
    probabilities: Vec<f64>,
}

impl PhotonDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized { norm: total });
        }
        Ok(Self { probabilities })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// `Pr(n)`, zero beyond the cutoff.
    pub fn get(&self, n: usize) -> f64 {
        self.probabilities.get(n).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Total probability on the listed photon numbers.
    pub fn mass_on(&self, support: &[usize]) -> f64 {
        support.iter().map(|&n| self.get(n)).sum()
    }
}

/// `|<target|state>|^2`.
pub fn fidelity_pure(target: &FockState, state: &FockState) -> Result<f64> {
    check_cutoffs(target.cutoff(), state.cutoff())?;
    target.check_normalized()?;
    state.check_normalized()?;
    Ok(target.inner(state)?.norm_sqr().clamp(0.0, 1.0))
}

/// `<target|rho|target>`.
pub fn fidelity_mixed(target: &FockState, rho: &DensityMatrix) -> Result<f64> {
    check_cutoffs(target.cutoff(), rho.cutoff())?;
    target.check_normalized()?;
    rho.check_normalized()?;
    Ok(rho.expectation(target)?.clamp(0.0, 1.0))
}
