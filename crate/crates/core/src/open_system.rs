//! Cavity relaxation between atoms and imperfect atomic detection.
//!
//! Relaxation uses one explicit Euler step `rho <- rho + t_a L rho` of the
//! thermal-reservoir master equation per atom interval. Times are in
//! milliseconds, rates in 1/ms.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::channel::{
    binomial, kraus_operator, AtomGroup, Outcome, PreparationResult, StageRecord,
    IMPOSSIBLE_THRESHOLD,
};
use crate::error::{invalid, Error, Result};
use crate::fock::DensityMatrix;

/// Floor of the negativity tolerated after a relaxation step.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-10;

/// Cavity damping time used by [`NoiseModel::reference`], in ms.
pub const REFERENCE_CAVITY_LIFETIME_MS: f64 = 65.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Cavity decay rate, 1/ms.
    pub kappa: f64,
    /// Equilibrium thermal photon number.
    pub n_th: f64,
    /// Interval between consecutive atoms, ms.
    pub t_a: f64,
    /// Detector efficiency.
    pub eta_d: f64,
    /// Probability of assigning the wrong level.
    pub eta_f: f64,
}

impl NoiseModel {
    /// Superconducting Fabry-Perot cavity at 0.8 K with field-ionization detection.
    pub fn reference() -> Self {
        Self {
            kappa: 1.0 / REFERENCE_CAVITY_LIFETIME_MS,
            n_th: 0.05,
            t_a: 0.082,
            eta_d: 0.87,
            eta_f: 0.05,
        }
    }

    /// No losses, perfect detection.
    pub fn ideal() -> Self {
        Self {
            kappa: 0.0,
            n_th: 0.0,
            t_a: 0.082,
            eta_d: 1.0,
            eta_f: 0.0,
        }
    }

    pub fn with_cavity_lifetime(self, lifetime_ms: f64) -> Self {
        Self {
            kappa: 1.0 / lifetime_ms,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(invalid(
                "kappa",
                format!("must be >= 0, got {}", self.kappa),
            ));
        }
        if !self.n_th.is_finite() || self.n_th < 0.0 {
            return Err(invalid("n_th", format!("must be >= 0, got {}", self.n_th)));
        }
        if !self.t_a.is_finite() || self.t_a <= 0.0 {
            return Err(invalid("t_a", format!("must be > 0, got {}", self.t_a)));
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(invalid(
                "eta_d",
                format!("must lie in (0, 1], got {}", self.eta_d),
            ));
        }
        if !(self.eta_f >= 0.0 && self.eta_f <= 0.5) {
            return Err(invalid(
                "eta_f",
                format!("must lie in [0, 0.5], got {}", self.eta_f),
            ));
        }
        Ok(())
    }

    /// Checks the Euler-step stability bound for a given truncation.
    pub fn validate_for_cutoff(&self, cutoff: usize) -> Result<()> {
        self.validate()?;
        let value = self.kappa * self.t_a * (1.0 + self.n_th) * cutoff as f64;
        if value >= 0.5 {
            return Err(Error::UnstableStep { value });
        }
        Ok(())
    }

    /// Eigenvalue negativity accepted after one Euler step.
    ///
    /// The first-order map is not completely positive; its negativity is of
    /// second order in the step, bounded by `(kappa t_a (1 + n_th) cutoff)^2`.
    pub fn negativity_tolerance(&self, cutoff: usize) -> f64 {
        let step = self.kappa * self.t_a * (1.0 + self.n_th) * cutoff as f64;
        NEGATIVITY_TOLERANCE + step * step
    }

    pub fn is_lossless(&self) -> bool {
        self.kappa == 0.0
    }
}

/// `L rho` for photon loss and thermal gain at rate `kappa`.
///
/// ```text
/// L rho = -kappa/2 (1 + n_th) (a^dag a rho + rho a^dag a - 2 a rho a^dag)
///         -kappa/2 n_th       (a a^dag rho + rho a a^dag - 2 a^dag rho a)
/// ```
///
/// Ladder operators are truncated at the cutoff, so `a a^dag` vanishes on
/// the top level and the map stays trace-free.
pub fn lindblad_generator(rho: &DensityMatrix, kappa: f64, n_th: f64) -> Array2<C64> {
    let r = rho.elements();
    let d = rho.dim();
    let top = d - 1;
    let down = 0.5 * kappa * (1.0 + n_th);
    let up = 0.5 * kappa * n_th;
    let raised = |m: usize| if m < top { (m + 1) as f64 } else { 0.0 };
    Array2::from_shape_fn((d, d), |(m, n)| {
        let (mf, nf) = (m as f64, n as f64);
        let mut loss = (mf + nf) * r[(m, n)];
        if m < top && n < top {
            loss -= 2.0 * ((mf + 1.0) * (nf + 1.0)).sqrt() * r[(m + 1, n + 1)];
        }
        let mut gain = (raised(m) + raised(n)) * r[(m, n)];
        if m > 0 && n > 0 {
            gain -= 2.0 * (mf * nf).sqrt() * r[(m - 1, n - 1)];
        }
        -(loss * down) - gain * up
    })
}

/// One Euler step of duration `t_a`.
pub fn relax_step(rho: &DensityMatrix, noise: &NoiseModel) -> Result<DensityMatrix> {
    noise.validate_for_cutoff(rho.cutoff())?;
    if noise.is_lossless() {
        return Ok(rho.clone());
    }
    let generator = lindblad_generator(rho, noise.kappa, noise.n_th);
    let mut next = DensityMatrix::from_raw(rho.elements() + &(generator * noise.t_a));
    next.hermitize();
    let tolerance = noise.negativity_tolerance(rho.cutoff());
    if !next.is_positive_within(tolerance) {
        return Err(Error::NegativeEigenvalue { tolerance });
    }
    next.clip_negative_populations();
    Ok(next)
}

/// Conditional state and probability for one imperfectly detected atom.
pub fn imperfect_detect(
    rho: &DensityMatrix,
    outcome: Outcome,
    phi: f64,
    noise: &NoiseModel,
) -> Result<(DensityMatrix, f64)> {
    noise.validate()?;
    let right = kraus_operator(outcome, phi, rho.cutoff());
    let wrong = kraus_operator(outcome.flipped(), phi, rho.cutoff());
    let w_right = noise.eta_d * (1.0 - noise.eta_f);
    let w_wrong = noise.eta_d * noise.eta_f;

    let mut elements = right.sandwich(rho.elements()) * w_right;
    if w_wrong > 0.0 {
        elements = elements + wrong.sandwich(rho.elements()) * w_wrong;
    }
    let probability =
        w_right * right.weight(rho.elements()) + w_wrong * wrong.weight(rho.elements());
    if probability.is_nan() || probability < IMPOSSIBLE_THRESHOLD {
        return Err(Error::ImpossibleOutcome { probability });
    }
    let mut out = DensityMatrix::from_raw(elements.mapv(|x| x / probability));
    out.hermitize();
    Ok((out, probability))
}

/// Atom-by-atom preparation with relaxation between consecutive atoms.
///
/// Within a group the excited detections come first. Each group's stage
/// probability carries the binomial multiplicity of its outcome pattern, so
/// the lossless ideal-detector limit coincides with
/// [`postselect_density`](crate::channel::postselect_density).
pub fn run_noisy(
    rho0: &DensityMatrix,
    groups: &[AtomGroup],
    noise: &NoiseModel,
) -> Result<PreparationResult<DensityMatrix>> {
    noise.validate_for_cutoff(rho0.cutoff())?;
    groups.iter().try_for_each(AtomGroup::validate)?;
    let mut rho = rho0.clone();
    let mut probability = 1.0;
    let mut stage_log = Vec::with_capacity(groups.len());
    let mut first = true;
    for group in groups {
        let mut stage = binomial(group.n_total, group.n_excited);
        for outcome in group.outcomes() {
            if !first {
                rho = relax_step(&rho, noise)?;
            }
            first = false;
            let (next, p) = imperfect_detect(&rho, outcome, group.phi, noise)?;
            rho = next;
            stage *= p;
        }
        probability *= stage;
        stage_log.push(StageRecord {
            group: *group,
            probability: stage,
        });
    }
    Ok(PreparationResult {
        final_state: rho,
        probability,
        stage_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::postselect_density;
    use crate::fock::FockState;
    use approx::assert_abs_diff_eq;

    fn max_abs(m: &Array2<C64>) -> f64 {
        m.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn vacuum_is_dark_at_zero_temperature() {
        let rho = FockState::vacuum(10).unwrap().to_density();
        assert_eq!(max_abs(&lindblad_generator(&rho, 0.3, 0.0)), 0.0);
    }

    #[test]
    fn single_photon_decay_rate() {
        let rho = FockState::fock(1, 10).unwrap().to_density();
        let l = lindblad_generator(&rho, 0.7, 0.0);
        let dn: f64 = (0..=10).map(|n| n as f64 * l[(n, n)].re).sum();
        assert_abs_diff_eq!(dn, -0.7, epsilon = 1e-15);
    }

    #[test]
    fn thermal_state_is_stationary() {
        let rho = DensityMatrix::thermal(0.05, 30).unwrap();
        assert!(max_abs(&lindblad_generator(&rho, 1.0 / 65.0, 0.05)) < 1e-10);
        let hot = DensityMatrix::thermal(1.3, 25).unwrap();
        assert!(max_abs(&lindblad_generator(&hot, 2.0, 1.3)) < 1e-10);
    }

    #[test]
    fn lossless_relax_is_identity() {
        let rho = FockState::coherent(1.0, 20).unwrap().to_density();
        assert_eq!(relax_step(&rho, &NoiseModel::ideal()).unwrap(), rho);
    }

    #[test]
    fn unstable_step_rejected() {
        let rho = FockState::coherent(1.0, 20).unwrap().to_density();
        let noise = NoiseModel {
            kappa: 1.0,
            t_a: 0.1,
            ..NoiseModel::reference()
        };
        assert!(matches!(
            relax_step(&rho, &noise),
            Err(Error::UnstableStep { .. })
        ));
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseModel::reference().validate().is_ok());
        assert!(NoiseModel {
            eta_d: 0.0,
            ..NoiseModel::reference()
        }
        .validate()
        .is_err());
        assert!(NoiseModel {
            eta_f: 0.6,
            ..NoiseModel::reference()
        }
        .validate()
        .is_err());
        assert!(NoiseModel {
            t_a: 0.0,
            ..NoiseModel::reference()
        }
        .validate()
        .is_err());
        assert!(NoiseModel {
            kappa: -1.0,
            ..NoiseModel::reference()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn ideal_detector_matches_closed_form() {
        let rho = FockState::coherent(2.0, 30).unwrap().to_density();
        let (out, p) =
            imperfect_detect(&rho, Outcome::Ground, 0.386, &NoiseModel::ideal()).unwrap();
        let closed = postselect_density(&rho, &[AtomGroup::ground(1, 0.386).unwrap()]).unwrap();
        assert_abs_diff_eq!(p, closed.probability, epsilon = 1e-14);
        assert!(max_abs(&(out.elements() - closed.final_state.elements())) < 1e-14);
    }

    #[test]
    fn maximal_confusion_ignores_label() {
        let rho = FockState::coherent(1.5, 25).unwrap().to_density();
        let noise = NoiseModel {
            eta_f: 0.5,
            ..NoiseModel::reference()
        };
        let (g, pg) = imperfect_detect(&rho, Outcome::Ground, 0.7, &noise).unwrap();
        let (e, pe) = imperfect_detect(&rho, Outcome::Excited, 0.7, &noise).unwrap();
        assert_abs_diff_eq!(pg, pe, epsilon = 1e-15);
        assert!(max_abs(&(g.elements() - e.elements())) < 1e-15);
    }

    #[test]
    fn noisy_detection_probability_direct_sum() {
        let s = FockState::coherent(2.0, 30).unwrap();
        let noise = NoiseModel::reference();
        let (_, p) = imperfect_detect(&s.to_density(), Outcome::Ground, 0.386, &noise).unwrap();
        let (mut cos_sum, mut sin_sum) = (0.0, 0.0);
        for n in 0..=30 {
            let b2 = s.amplitude(n).norm_sqr();
            let half = 0.386 * n as f64 / 2.0;
            cos_sum += b2 * half.cos().powi(2);
            sin_sum += b2 * half.sin().powi(2);
        }
        assert_abs_diff_eq!(p, 0.87 * (0.95 * cos_sum + 0.05 * sin_sum), epsilon = 1e-14);
    }

    #[test]
    fn geometric_decay_of_mean_photon_number() {
        let noise = NoiseModel {
            n_th: 0.0,
            ..NoiseModel::reference()
        };
        let mut rho = FockState::coherent(2.0, 30).unwrap().to_density();
        for _ in 0..1000 {
            rho = relax_step(&rho, &noise).unwrap();
        }
        let expected = 4.0 * (1.0 - noise.kappa * noise.t_a).powi(1000);
        assert!((rho.mean_photon_number() - expected).abs() / expected < 0.02);
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn run_noisy_lossless_limit() {
        let rho = FockState::coherent(2.0, 30).unwrap().to_density();
        let groups = [
            AtomGroup::ground(1, std::f64::consts::FRAC_PI_2).unwrap(),
            AtomGroup::new(3, 1, 0.5).unwrap(),
        ];
        let noisy = run_noisy(&rho, &groups, &NoiseModel::ideal()).unwrap();
        let closed = postselect_density(&rho, &groups).unwrap();
        assert_abs_diff_eq!(noisy.probability, closed.probability, epsilon = 1e-10);
        assert!(max_abs(&(noisy.final_state.elements() - closed.final_state.elements())) < 1e-10);
    }
}
