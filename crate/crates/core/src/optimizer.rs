//! Parameter selection for optical-qubit preparation.
//!
//! The qubit target is `(|0> + beta |1>) / sqrt(1 + |beta|^2)` with
//! `beta = alpha * prod_k e^{-i N_k phi_k / 2} cos^{N_k}(phi_k / 2)`, i.e. the
//! ideal postselected state truncated to `{|0>, |1>}`. Requiring
//! `|beta| = 1` fixes the free phase of the last group for each atom count,
//! leaving a one-dimensional scan over that count.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{postselect_pure, AtomGroup};
use crate::error::{invalid, Error, Result};
use crate::fock::{default_cutoff, fidelity_mixed, fidelity_pure, poisson_weights, FockState};
use crate::open_system::{run_noisy, NoiseModel};

pub const DEFAULT_N_MAX: u32 = 200;

/// Constraint residual accepted for a solved phase.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-12;

const TIE_TOLERANCE: f64 = 1e-12;

/// Right-hand side `alpha cos^{N_3}(phi_3 / 2) = 4 / sqrt(6)` of the
/// three-group scheme; with `cos(pi/4) cos(pi/6) = sqrt(6)/4` it makes the
/// target equiprobable.
pub fn three_group_rhs() -> f64 {
    4.0 / 6f64.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// One group of `N` atoms, all detected in `|g>`.
    Single,
    /// `(1, pi/2)` and `(1, pi/3)` kill `|2>` and `|3>`, then `N_3` atoms.
    Three,
}

/// Solves `alpha cos^n(phi / 2) = rhs` for `phi` in `[0, pi)`.
pub fn phi_for_condition(alpha: f64, n: u32, rhs: f64) -> Result<f64> {
    if n == 0 {
        return Err(invalid("n", "need at least one atom"));
    }
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
    }
    if !rhs.is_finite() || rhs <= 0.0 {
        return Err(invalid("rhs", format!("must be > 0, got {rhs}")));
    }
    if rhs > alpha {
        return Err(Error::NoSolution(format!(
            "alpha cos^{n}(phi/2) = {rhs} needs alpha >= {rhs}, got alpha = {alpha}"
        )));
    }
    let phi = 2.0 * (rhs / alpha).powf(1.0 / n as f64).acos();
    let residual = (alpha * (phi / 2.0).cos().powi(n as i32) - rhs).abs();
    debug_assert!(residual < CONSTRAINT_TOLERANCE, "residual {residual}");
    Ok(phi)
}

/// `phi(N) = 2 arccos(alpha^{-1/N})`, making `|<0|psi>|^2 = |<1|psi>|^2`.
pub fn phi_for_equiprobable(alpha: f64, n: u32) -> Result<f64> {
    phi_for_condition(alpha, n, 1.0)
}

/// Groups of `scheme` with `n` atoms in the tunable group.
pub fn scheme_groups(scheme: Scheme, alpha: f64, n: u32) -> Result<Vec<AtomGroup>> {
    match scheme {
        Scheme::Single => Ok(vec![AtomGroup::ground(n, phi_for_equiprobable(alpha, n)?)?]),
        Scheme::Three => Ok(vec![
            AtomGroup::ground(1, FRAC_PI_2)?,
            AtomGroup::ground(1, FRAC_PI_3)?,
            AtomGroup::ground(n, phi_for_condition(alpha, n, three_group_rhs())?)?,
        ]),
    }
}

/// `beta` of the truncated ideal state produced by `groups` from `|alpha>`.
pub fn qubit_beta(alpha: f64, groups: &[AtomGroup]) -> C64 {
    groups
        .iter()
        .fold(C64::new(alpha, 0.0), |acc, g| acc * g.field_factor(1))
}

pub fn qubit_target(beta: C64, cutoff: usize) -> Result<FockState> {
    let mut amps = vec![C64::new(0.0, 0.0); cutoff + 1];
    amps[0] = C64::new(1.0, 0.0);
    amps[1] = beta;
    FockState::from_amplitudes(amps)
}

fn group_product(groups: &[AtomGroup], n: usize) -> C64 {
    groups
        .iter()
        .fold(C64::new(1.0, 0.0), |acc, g| acc * g.field_factor(n))
}

/// Fidelity between `(|0> + beta|1>)/norm` and the state obtained from
/// `|alpha>` by postselecting `groups`, summed directly over the series.
///
/// Groups with excited detections fall back to the state pipeline.
pub fn fidelity_closed_form(alpha: f64, groups: &[AtomGroup], target_beta: C64) -> Result<f64> {
    groups.iter().try_for_each(AtomGroup::validate)?;
    let cutoff = default_cutoff(alpha);
    if groups.iter().any(|g| g.n_excited > 0) {
        let coherent = FockState::coherent(alpha, cutoff)?;
        let prepared = postselect_pure(&coherent, groups)?;
        return fidelity_pure(&qubit_target(target_beta, cutoff)?, &prepared.final_state);
    }
    let weights = poisson_weights(alpha * alpha, cutoff);
    let denominator: f64 = weights
        .iter()
        .enumerate()
        .map(|(n, w)| w * group_product(groups, n).norm_sqr())
        .sum();
    if denominator.is_nan() || denominator <= 0.0 {
        return Err(Error::ImpossibleOutcome {
            probability: denominator,
        });
    }
    let overlap = weights[0].sqrt() * group_product(groups, 0)
        + target_beta.conj() * weights[1].sqrt() * group_product(groups, 1);
    Ok((overlap.norm_sqr() / ((1.0 + target_beta.norm_sqr()) * denominator)).clamp(0.0, 1.0))
}

/// Postselection probability from `|alpha>`, including binomial multiplicities.
pub fn probability_closed_form(alpha: f64, groups: &[AtomGroup]) -> f64 {
    let weights = poisson_weights(alpha * alpha, default_cutoff(alpha));
    let total: f64 = weights.iter().sum();
    let survive: f64 = weights
        .iter()
        .enumerate()
        .map(|(n, w)| w * group_product(groups, n).norm_sqr())
        .sum();
    let multiplicity: f64 = groups.iter().map(AtomGroup::multiplicity).product();
    multiplicity * survive / total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub n_atoms: u32,
    pub phi: f64,
    pub fidelity: f64,
    pub probability: f64,
    /// The scan maximum sat on `n_max`.
    pub at_boundary: bool,
}

/// Index of the first maximum, treating values within [`TIE_TOLERANCE`] as equal.
fn first_max(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + TIE_TOLERANCE {
            best = i;
        }
    }
    best
}

fn check_n_max(n_max: u32) -> Result<()> {
    if n_max == 0 {
        return Err(invalid("n_max", "must be at least 1"));
    }
    Ok(())
}

/// Noiseless scan over the tunable atom count of `scheme`.
pub fn optimize_scheme(scheme: Scheme, alpha: f64, n_max: u32) -> Result<Optimum> {
    check_n_max(n_max)?;
    let candidates = (1..=n_max)
        .map(|n| {
            let groups = scheme_groups(scheme, alpha, n)?;
            let fidelity = fidelity_closed_form(alpha, &groups, qubit_beta(alpha, &groups))?;
            Ok((groups, fidelity))
        })
        .collect::<Result<Vec<_>>>()?;
    let fidelities: Vec<f64> = candidates.iter().map(|(_, f)| *f).collect();
    let best = first_max(&fidelities);
    let (groups, fidelity) = &candidates[best];
    let n_atoms = best as u32 + 1;
    let at_boundary = n_atoms == n_max;
    if at_boundary {
        log::warn!(
            "{scheme:?} optimum for alpha^2 = {} sits at n_max = {n_max}",
            alpha * alpha
        );
    }
    Ok(Optimum {
        n_atoms,
        phi: groups.last().map_or(0.0, |g| g.phi),
        fidelity: *fidelity,
        probability: probability_closed_form(alpha, groups),
        at_boundary,
    })
}

pub fn optimize_single_group(alpha: f64, n_max: u32) -> Result<Optimum> {
    optimize_scheme(Scheme::Single, alpha, n_max)
}

pub fn optimize_three_group(alpha: f64, n_max: u32) -> Result<Optimum> {
    optimize_scheme(Scheme::Three, alpha, n_max)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoisyMode {
    /// Scan `N_3` again with the noisy fidelity.
    #[default]
    Reoptimize,
    /// Keep the noiseless optimum and only evaluate it under noise.
    ReuseNoiseless,
}

/// Fidelity and probability of `groups` under `noise`, against the ideal qubit target.
pub fn evaluate_noisy(alpha: f64, groups: &[AtomGroup], noise: &NoiseModel) -> Result<(f64, f64)> {
    let cutoff = default_cutoff(alpha);
    let rho0 = FockState::coherent(alpha, cutoff)?.to_density();
    let run = run_noisy(&rho0, groups, noise)?;
    let target = qubit_target(qubit_beta(alpha, groups), cutoff)?;
    Ok((fidelity_mixed(&target, &run.final_state)?, run.probability))
}

/// Optimum of `scheme` including cavity relaxation and imperfect detection.
pub fn optimize_noisy(
    scheme: Scheme,
    alpha: f64,
    noise: &NoiseModel,
    n_max: u32,
    mode: NoisyMode,
) -> Result<Optimum> {
    check_n_max(n_max)?;
    noise.validate_for_cutoff(default_cutoff(alpha))?;
    let counts: Vec<u32> = match mode {
        NoisyMode::Reoptimize => (1..=n_max).collect(),
        NoisyMode::ReuseNoiseless => vec![optimize_scheme(scheme, alpha, n_max)?.n_atoms],
    };
    let evaluated = counts
        .par_iter()
        .map(|&n| {
            let groups = scheme_groups(scheme, alpha, n)?;
            let (fidelity, probability) = evaluate_noisy(alpha, &groups, noise)?;
            Ok((n, groups[groups.len() - 1].phi, fidelity, probability))
        })
        .collect::<Result<Vec<_>>>()?;
    let fidelities: Vec<f64> = evaluated.iter().map(|e| e.2).collect();
    let (n_atoms, phi, fidelity, probability) = evaluated[first_max(&fidelities)];
    let at_boundary = mode == NoisyMode::Reoptimize && n_atoms == n_max;
    if at_boundary {
        log::warn!(
            "noisy optimum for alpha^2 = {} sits at n_max = {n_max}",
            alpha * alpha
        );
    }
    Ok(Optimum {
        n_atoms,
        phi,
        fidelity,
        probability,
        at_boundary,
    })
}

/// Evenly spaced `alpha^2` samples, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepRange {
    pub fn single(alpha_squared: f64) -> Self {
        Self {
            start: alpha_squared,
            stop: alpha_squared,
            step: 1.0,
        }
    }

    pub fn samples(&self) -> Result<Vec<f64>> {
        if !(self.start.is_finite() && self.stop.is_finite() && self.start > 0.0) {
            return Err(invalid(
                "sweep",
                "start and stop must be finite and positive",
            ));
        }
        if self.stop < self.start {
            return Err(invalid("sweep", "stop must not be below start"));
        }
        if self.step.is_nan() || self.step <= 0.0 {
            return Err(invalid("sweep.step", "must be positive"));
        }
        let intervals = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        // round to 12 decimals so 3 + 3 * 0.1 prints as 3.3
        Ok((0..=intervals)
            .map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12)
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha_squared: f64,
    pub optimum: Optimum,
}

/// Optimum at every `alpha^2` sample; order follows the samples.
pub fn sweep<F>(range: &SweepRange, optimize: F) -> Result<Vec<SweepPoint>>
where
    F: Fn(f64) -> Result<Optimum> + Sync,
{
    range
        .samples()?
        .into_par_iter()
        .map(|alpha_squared| {
            Ok(SweepPoint {
                alpha_squared,
                optimum: optimize(alpha_squared.sqrt())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equiprobable_phase_at_unit_alpha() {
        for n in 1..10 {
            assert_eq!(phi_for_equiprobable(1.0, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn equiprobable_phase_reference_points() {
        assert_abs_diff_eq!(
            phi_for_equiprobable(2.0, 37).unwrap(),
            0.386,
            epsilon = 5e-4
        );
        let phi = phi_for_equiprobable(2.0, 4).unwrap();
        assert!((2.0 * (phi / 2.0).cos().powi(4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_solution_below_unit_alpha() {
        assert!(matches!(
            phi_for_equiprobable(0.9, 5),
            Err(Error::NoSolution(_))
        ));
        assert!(matches!(
            phi_for_condition(1.0, 5, 1.5),
            Err(Error::NoSolution(_))
        ));
    }

    #[test]
    fn condition_reference_points() {
        assert_eq!(phi_for_condition(1.7, 3, 1.7).unwrap(), 0.0);
        assert_abs_diff_eq!(
            phi_for_condition(2.0, 11, three_group_rhs()).unwrap(),
            0.383,
            epsilon = 5e-4
        );
        let alpha = 3f64.sqrt();
        let phi = phi_for_condition(alpha, 7, three_group_rhs()).unwrap();
        assert!((alpha * (phi / 2.0).cos().powi(7) - three_group_rhs()).abs() < 1e-12);
    }

    #[test]
    fn three_group_target_is_equiprobable() {
        let groups = scheme_groups(Scheme::Three, 2.0, 11).unwrap();
        assert_abs_diff_eq!(qubit_beta(2.0, &groups).norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_groups_against_own_truncation() {
        // (|0> + alpha|1>)/norm is the target with no atoms; F = (1 + alpha^2) e^{-alpha^2}
        let alpha: f64 = 1.3;
        let f = fidelity_closed_form(alpha, &[], C64::new(alpha, 0.0)).unwrap();
        assert_abs_diff_eq!(
            f,
            (1.0 + alpha * alpha) * (-alpha * alpha).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn single_group_reference() {
        let opt = optimize_single_group(2.0, DEFAULT_N_MAX).unwrap();
        assert_eq!(opt.n_atoms, 37);
        assert_abs_diff_eq!(opt.fidelity, 0.986, epsilon = 1e-3);
        assert_abs_diff_eq!(opt.probability, 0.0372, epsilon = 1e-4);
        assert!(!opt.at_boundary);
    }

    #[test]
    fn three_group_reference() {
        let opt = optimize_three_group(2.0, DEFAULT_N_MAX).unwrap();
        assert_eq!(opt.n_atoms, 11);
        assert_abs_diff_eq!(opt.phi, 0.383, epsilon = 5e-4);
        assert_abs_diff_eq!(opt.fidelity, 0.999, epsilon = 1e-3);
        assert_abs_diff_eq!(opt.probability, 0.0367, epsilon = 1e-4);
    }

    #[test]
    fn boundary_flag() {
        let opt = optimize_single_group(2.0, 5).unwrap();
        assert_eq!(opt.n_atoms, 5);
        assert!(opt.at_boundary);
    }

    #[test]
    fn sweep_samples_include_endpoints() {
        let s = SweepRange {
            start: 3.0,
            stop: 5.0,
            step: 0.1,
        }
        .samples()
        .unwrap();
        assert_eq!(s.len(), 21);
        assert_eq!(s[0], 3.0);
        assert_eq!(*s.last().unwrap(), 5.0);
        assert_eq!(s[3], 3.3);
        assert_eq!(SweepRange::single(4.0).samples().unwrap(), vec![4.0]);
        assert!(SweepRange {
            start: 5.0,
            stop: 3.0,
            step: 0.1
        }
        .samples()
        .is_err());
    }

    #[test]
    fn noisy_ideal_limit_matches_noiseless() {
        let noiseless = optimize_three_group(2.0, 40).unwrap();
        let ideal = optimize_noisy(
            Scheme::Three,
            2.0,
            &NoiseModel::ideal(),
            40,
            NoisyMode::Reoptimize,
        )
        .unwrap();
        assert_eq!(ideal.n_atoms, noiseless.n_atoms);
        assert_abs_diff_eq!(ideal.fidelity, noiseless.fidelity, epsilon = 1e-10);
        assert_abs_diff_eq!(ideal.probability, noiseless.probability, epsilon = 1e-10);
    }
}
