//! Dispersive Ramsey measurement channel.
//!
//! Each atom enters in `|e>`, crosses a `pi/2` zone, picks up a phase
//! `phi * n` on `|e>` inside the cavity and crosses a second `pi/2` zone
//! before being detected. Tracing out the detected atom leaves the field
//! acted on by a diagonal Kraus operator:
//!
//! ```text
//! M_g(n) =  i e^{-i phi n / 2} cos(phi n / 2)
//! M_e(n) = -i e^{-i phi n / 2} sin(phi n / 2)
//! ```
//!
//! Postselection is specified per [`AtomGroup`]: `n_total` atoms sharing
//! one phase, `n_excited` of which are detected in `|e>`. The field state
//! does not depend on which atoms of a group clicked `e`; the number of such
//! orderings enters the probability as a binomial factor.

use std::fmt;

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{DensityMatrix, FockState};

/// Stage norms below this are treated as an impossible outcome.
pub const IMPOSSIBLE_THRESHOLD: f64 = 1e-300;

/// Longest per-atom sequence the joint-space oracle accepts.
pub const MAX_ORACLE_ATOMS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "g")]
    Ground,
    #[serde(rename = "e")]
    Excited,
}

impl Outcome {
    pub fn flipped(self) -> Self {
        match self {
            Outcome::Ground => Outcome::Excited,
            Outcome::Excited => Outcome::Ground,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Ground => "g",
            Outcome::Excited => "e",
        })
    }
}

/// Operator diagonal in the Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalOperator {
    diag: Array1<C64>,
}

impl DiagonalOperator {
    pub fn diagonal(&self) -> &Array1<C64> {
        &self.diag
    }

    pub fn apply(&self, amplitudes: &Array1<C64>) -> Array1<C64> {
        &self.diag * amplitudes
    }

    /// `M rho M^dagger`.
    pub fn sandwich(&self, rho: &Array2<C64>) -> Array2<C64> {
        let d = &self.diag;
        Array2::from_shape_fn(rho.dim(), |(m, n)| d[m] * rho[(m, n)] * d[n].conj())
    }

    /// `Tr(M rho M^dagger)`.
    pub fn weight(&self, rho: &Array2<C64>) -> f64 {
        self.diag
            .iter()
            .enumerate()
            .map(|(n, m)| m.norm_sqr() * rho[(n, n)].re)
            .sum()
    }
}

/// Single-atom Kraus operator for a detected `outcome` at phase `phi`.
pub fn kraus_operator(outcome: Outcome, phi: f64, cutoff: usize) -> DiagonalOperator {
    let diag = (0..=cutoff)
        .map(|n| {
            let half = phi * n as f64 / 2.0;
            let phase = C64::from_polar(1.0, -half);
            match outcome {
                Outcome::Ground => C64::new(0.0, 1.0) * phase * half.cos(),
                Outcome::Excited => C64::new(0.0, -1.0) * phase * half.sin(),
            }
        })
        .collect();
    DiagonalOperator { diag }
}

/// A homogeneous postselection stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomGroup {
    pub n_total: u32,
    #[serde(default)]
    pub n_excited: u32,
    pub phi: f64,
}

impl AtomGroup {
    pub fn new(n_total: u32, n_excited: u32, phi: f64) -> Result<Self> {
        let group = Self {
            n_total,
            n_excited,
            phi,
        };
        group.validate()?;
        Ok(group)
    }

    /// All `n_total` atoms detected in `|g>`.
    pub fn ground(n_total: u32, phi: f64) -> Result<Self> {
        Self::new(n_total, 0, phi)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 {
            return Err(invalid("n_total", "group needs at least one atom"));
        }
        if self.n_excited > self.n_total {
            return Err(invalid(
                "n_excited",
                format!("{} excited out of {} atoms", self.n_excited, self.n_total),
            ));
        }
        if !self.phi.is_finite() || self.phi < 0.0 || self.phi > std::f64::consts::TAU {
            return Err(invalid(
                "phi",
                format!("must lie in [0, 2pi], got {}", self.phi),
            ));
        }
        Ok(())
    }

    pub fn n_ground(&self) -> u32 {
        self.n_total - self.n_excited
    }

    /// Number of orderings, `C(n_total, n_excited)`.
    pub fn multiplicity(&self) -> f64 {
        binomial(self.n_total, self.n_excited)
    }

    /// `e^{-i n phi N / 2} cos^{N - N_e}(phi n / 2) sin^{N_e}(phi n / 2)`.
    pub fn field_factor(&self, n: usize) -> C64 {
        let half = self.phi * n as f64 / 2.0;
        let magnitude =
            half.cos().powi(self.n_ground() as i32) * half.sin().powi(self.n_excited as i32);
        C64::from_polar(1.0, -half * self.n_total as f64) * magnitude
    }

    /// Product of the group's per-atom Kraus operators, up to a global phase.
    pub fn operator(&self, cutoff: usize) -> DiagonalOperator {
        DiagonalOperator {
            diag: (0..=cutoff).map(|n| self.field_factor(n)).collect(),
        }
    }

    /// One outcome per atom: excited detections first, then ground.
    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> {
        std::iter::repeat_n(Outcome::Excited, self.n_excited as usize).chain(std::iter::repeat_n(
            Outcome::Ground,
            self.n_ground() as usize,
        ))
    }
}

pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub group: AtomGroup,
    pub probability: f64,
}

/// Field state after postselection with its cumulative probability.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparationResult<S> {
    pub final_state: S,
    pub probability: f64,
    pub stage_log: Vec<StageRecord>,
}

fn check_groups(groups: &[AtomGroup]) -> Result<()> {
    groups.iter().try_for_each(AtomGroup::validate)
}

/// Closed-form postselection of a pure field state.
pub fn postselect_pure(
    state: &FockState,
    groups: &[AtomGroup],
) -> Result<PreparationResult<FockState>> {
    check_groups(groups)?;
    let mut amps = state.amplitudes().clone();
    let mut norm = state.norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm });
    }
    let mut probability = 1.0;
    let mut stage_log = Vec::with_capacity(groups.len());
    for group in groups {
        let next = group.operator(state.cutoff()).apply(&amps);
        let w: f64 = next.iter().map(|a| a.norm_sqr()).sum::<f64>() / norm;
        if w.is_nan() || w < IMPOSSIBLE_THRESHOLD {
            return Err(Error::ImpossibleOutcome { probability: w });
        }
        let stage = group.multiplicity() * w;
        probability *= stage;
        stage_log.push(StageRecord {
            group: *group,
            probability: stage,
        });
        let scale = (w * norm).sqrt();
        amps = next.mapv(|a| a / scale);
        norm = 1.0;
    }
    Ok(PreparationResult {
        final_state: FockState::from_normalized(amps),
        probability,
        stage_log,
    })
}

/// Closed-form postselection of a mixed field state.
pub fn postselect_density(
    rho: &DensityMatrix,
    groups: &[AtomGroup],
) -> Result<PreparationResult<DensityMatrix>> {
    check_groups(groups)?;
    let trace = rho.trace().re;
    if (trace - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized { norm: trace });
    }
    let mut elements = rho.elements().clone();
    let mut probability = 1.0;
    let mut stage_log = Vec::with_capacity(groups.len());
    for group in groups {
        let op = group.operator(rho.cutoff());
        let w = op.weight(&elements);
        if w.is_nan() || w < IMPOSSIBLE_THRESHOLD {
            return Err(Error::ImpossibleOutcome { probability: w });
        }
        let stage = group.multiplicity() * w;
        probability *= stage;
        stage_log.push(StageRecord {
            group: *group,
            probability: stage,
        });
        elements = op.sandwich(&elements).mapv(|x| x / w);
    }
    let mut out = DensityMatrix::from_raw(elements);
    out.hermitize();
    Ok(PreparationResult {
        final_state: out,
        probability,
        stage_log,
    })
}

/// Atom-by-atom simulation on the joint atom-field space.
///
/// Each atom is prepared in `|e>`, evolved by `U_{pi/2} U_I U_{pi/2}` built
/// as explicit matrices, projected onto its outcome and discarded. Used to
/// validate the closed forms above.
pub fn oracle_postselect(
    state: &FockState,
    sequence: &[(f64, Outcome)],
) -> Result<PreparationResult<FockState>> {
    if sequence.len() > MAX_ORACLE_ATOMS {
        return Err(Error::SequenceTooLong {
            len: sequence.len(),
            max: MAX_ORACLE_ATOMS,
        });
    }
    let dim = state.dim();
    // joint basis index = atom * dim + n, atom 0 = e, 1 = g
    let rotation = {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let pulse = [
            [C64::new(s, 0.0), C64::new(0.0, s)],
            [C64::new(0.0, s), C64::new(s, 0.0)],
        ];
        Array2::from_shape_fn((2 * dim, 2 * dim), |(r, c)| {
            if r % dim == c % dim {
                pulse[r / dim][c / dim]
            } else {
                C64::new(0.0, 0.0)
            }
        })
    };

    let mut field = state.amplitudes().clone();
    let mut probability = 1.0;
    let mut stage_log = Vec::with_capacity(sequence.len());
    for &(phi, outcome) in sequence {
        if !phi.is_finite() {
            return Err(invalid("phi", "non-finite phase"));
        }
        let interaction = Array2::from_shape_fn((2 * dim, 2 * dim), |(r, c)| {
            if r != c {
                C64::new(0.0, 0.0)
            } else if r < dim {
                C64::from_polar(1.0, -phi * r as f64)
            } else {
                C64::new(1.0, 0.0)
            }
        });
        let unitary = rotation.dot(&interaction).dot(&rotation);

        let mut joint = Array1::<C64>::zeros(2 * dim);
        joint.slice_mut(ndarray::s![..dim]).assign(&field);
        let evolved = unitary.dot(&joint);

        let offset = match outcome {
            Outcome::Excited => 0,
            Outcome::Ground => dim,
        };
        let conditional = evolved.slice(ndarray::s![offset..offset + dim]).to_owned();
        let p: f64 = conditional.iter().map(|a| a.norm_sqr()).sum();
        if p.is_nan() || p < IMPOSSIBLE_THRESHOLD {
            return Err(Error::ImpossibleOutcome { probability: p });
        }
        probability *= p;
        stage_log.push(StageRecord {
            group: AtomGroup {
                n_total: 1,
                n_excited: u32::from(outcome == Outcome::Excited),
                phi,
            },
            probability: p,
        });
        let scale = p.sqrt();
        field = conditional.mapv(|a| a / scale);
    }
    Ok(PreparationResult {
        final_state: FockState::from_normalized(field),
        probability,
        stage_log,
    })
}

/// Expands groups into single-atom groups in detection order.
pub fn split_into_atoms(groups: &[AtomGroup]) -> Vec<AtomGroup> {
    groups
        .iter()
        .flat_map(|g| {
            g.outcomes().map(move |o| AtomGroup {
                n_total: 1,
                n_excited: u32::from(o == Outcome::Excited),
                phi: g.phi,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::fidelity_pure;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    #[test]
    fn kraus_identity_at_zero_phase() {
        let m = kraus_operator(Outcome::Ground, 0.0, 10);
        assert!(m.diagonal().iter().all(|x| (x.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn kraus_pi_kills_odd() {
        let m = kraus_operator(Outcome::Ground, PI, 10);
        for (n, x) in m.diagonal().iter().enumerate() {
            let expect = (PI * n as f64 / 2.0).cos().powi(2);
            assert_abs_diff_eq!(x.norm_sqr(), expect, epsilon = 1e-15);
            if n % 2 == 1 {
                assert!(x.norm_sqr() < 1e-30);
            }
        }
    }

    #[test]
    fn kraus_half_pi_twice_eliminates_two() {
        let m = kraus_operator(Outcome::Ground, FRAC_PI_2, 6);
        let twice = m.diagonal()[2] * m.diagonal()[2];
        assert!(twice.norm_sqr() < 1e-60);
    }

    #[test]
    fn kraus_completeness() {
        for k in 0..50 {
            let phi = 0.13 * k as f64;
            let g = kraus_operator(Outcome::Ground, phi, 15);
            let e = kraus_operator(Outcome::Excited, phi, 15);
            for n in 0..=15 {
                let s = g.diagonal()[n].norm_sqr() + e.diagonal()[n].norm_sqr();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn group_validation() {
        assert!(AtomGroup::new(0, 0, 0.3).is_err());
        assert!(AtomGroup::new(2, 3, 0.3).is_err());
        assert!(AtomGroup::new(2, 1, f64::NAN).is_err());
        assert!(AtomGroup::new(2, 1, -0.1).is_err());
        assert_eq!(AtomGroup::new(5, 2, 0.3).unwrap().multiplicity(), 10.0);
    }

    #[test]
    fn empty_group_list_is_identity() {
        let s = FockState::coherent(1.5, 25).unwrap();
        let r = postselect_pure(&s, &[]).unwrap();
        assert_eq!(r.probability, 1.0);
        assert_eq!(r.final_state, s);
    }

    #[test]
    fn impossible_outcome() {
        let v = FockState::vacuum(5).unwrap();
        let g = AtomGroup::new(1, 1, 0.0).unwrap();
        assert!(matches!(
            postselect_pure(&v, &[g]),
            Err(Error::ImpossibleOutcome { .. })
        ));
        assert!(matches!(
            postselect_density(&v.to_density(), &[g]),
            Err(Error::ImpossibleOutcome { .. })
        ));
    }

    #[test]
    fn vacuum_survives_ground_detection() {
        let v = FockState::vacuum(5).unwrap();
        let r = postselect_density(&v.to_density(), &[AtomGroup::ground(7, 0.9).unwrap()]).unwrap();
        assert_abs_diff_eq!(r.probability, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.final_state.elements()[(0, 0)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn odd_parity_from_excited_pi_atom() {
        let s = FockState::coherent(2.0, 30).unwrap();
        let r = postselect_density(&s.to_density(), &[AtomGroup::new(1, 1, PI).unwrap()]).unwrap();
        let odd: f64 = (1..=30).step_by(2).map(|n| s.amplitude(n).norm_sqr()).sum();
        assert_abs_diff_eq!(r.probability, odd, epsilon = 1e-14);
        let pr = r.final_state.photon_distribution().unwrap();
        for n in (0..=30).step_by(2) {
            assert!(pr.get(n) < 1e-28);
        }
    }

    #[test]
    fn oracle_hand_computed_case() {
        let s = FockState::from_amplitudes(vec![
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
        ])
        .unwrap();
        let r = oracle_postselect(&s, &[(FRAC_PI_2, Outcome::Ground)]).unwrap();
        assert_abs_diff_eq!(r.probability, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.final_state.amplitude(0).norm_sqr(), 1.0, epsilon = 1e-15);
        assert!(r.final_state.amplitude(2).norm_sqr() < 1e-30);
    }

    #[test]
    fn oracle_zero_phase_identity() {
        let s = FockState::coherent(1.0, 20).unwrap();
        let seq = vec![(0.0, Outcome::Ground); 5];
        let r = oracle_postselect(&s, &seq).unwrap();
        assert_abs_diff_eq!(r.probability, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            fidelity_pure(&s, &r.final_state).unwrap(),
            1.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn oracle_matches_group_of_two() {
        let s = FockState::coherent(1.0, 20).unwrap();
        let oracle = oracle_postselect(&s, &[(FRAC_PI_2, Outcome::Ground); 2]).unwrap();
        let closed = postselect_pure(&s, &[AtomGroup::ground(2, FRAC_PI_2).unwrap()]).unwrap();
        assert_abs_diff_eq!(oracle.probability, closed.probability, epsilon = 1e-10);
        assert!(fidelity_pure(&oracle.final_state, &closed.final_state).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn oracle_rejects_long_sequence() {
        let s = FockState::vacuum(3).unwrap();
        let seq = vec![(0.1, Outcome::Ground); MAX_ORACLE_ATOMS + 1];
        assert!(matches!(
            oracle_postselect(&s, &seq),
            Err(Error::SequenceTooLong { .. })
        ));
    }

    #[test]
    fn zero_excited_product_has_closed_form_phase() {
        // N_e = 0 reproduces b_n e^{-i n phi N / 2} cos^N(phi n / 2) including the relative phase
        let s = FockState::coherent(1.2, 25).unwrap();
        let g = AtomGroup::ground(3, FRAC_PI_3).unwrap();
        let r = postselect_pure(&s, &[g]).unwrap();
        let ratio = r.final_state.amplitude(1) / r.final_state.amplitude(0);
        let half = FRAC_PI_3 / 2.0;
        let expected = s.amplitude(1) / s.amplitude(0)
            * C64::from_polar(1.0, -half * 3.0)
            * half.cos().powi(3);
        assert_abs_diff_eq!((ratio - expected).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn split_atoms_order() {
        let atoms = split_into_atoms(&[
            AtomGroup::new(3, 1, 0.4).unwrap(),
            AtomGroup::ground(1, 0.2).unwrap(),
        ]);
        let pattern: Vec<u32> = atoms.iter().map(|a| a.n_excited).collect();
        assert_eq!(pattern, vec![1, 0, 0, 0]);
    }
}
