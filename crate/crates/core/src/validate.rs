//! Seeded self-checks: the closed-form channel against the atom-by-atom
//! oracle, plus numerical invariants of every module.

use std::f64::consts::{PI, TAU};
use std::fmt;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{wigner, GridSpec};
use crate::channel::{
    binomial, kraus_operator, oracle_postselect, postselect_density, postselect_pure, AtomGroup,
    Outcome, PreparationResult,
};
use crate::error::{Error, Result};
use crate::fock::{fidelity_pure, DensityMatrix, FockState};
use crate::open_system::{lindblad_generator, relax_step, run_noisy, NoiseModel};
use crate::optimizer::{phi_for_condition, three_group_rhs, CONSTRAINT_TOLERANCE};

pub const SEED_ENV: &str = "RS_SEED";
pub const DEFAULT_SEED: u64 = 20_240_917;

pub const ORACLE_CASES: usize = 200;
pub const ORACLE_MAX_ATOMS: usize = 4;
pub const ORACLE_MAX_CUTOFF: usize = 12;
pub const ORACLE_PROBABILITY_TOLERANCE: f64 = 1e-10;
pub const ORACLE_FIDELITY_TOLERANCE: f64 = 1e-10;
pub const KRAUS_TOLERANCE: f64 = 1e-14;
pub const TRACE_TOLERANCE: f64 = 1e-12;
pub const GENERATOR_TRACE_TOLERANCE: f64 = 1e-12;
pub const THERMAL_TOLERANCE: f64 = 1e-10;
pub const NOISELESS_TOLERANCE: f64 = 1e-10;
pub const WIGNER_NORM_TOLERANCE: f64 = 1e-4;
pub const WIGNER_ORIGIN_TOLERANCE: f64 = 1e-10;

/// `RS_SEED` if set and parseable, otherwise [`DEFAULT_SEED`].
pub fn seed_from_env() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

/// Closed-form postselection under test.
pub type ClosedForm =
    dyn Fn(&FockState, &[AtomGroup]) -> Result<PreparationResult<FockState>> + Sync;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn bound(name: &'static str, observed: f64, limit: f64) -> Self {
        Self {
            name,
            passed: observed < limit,
            detail: format!("max deviation {observed:.3e} (limit {limit:e})"),
        }
    }

    fn from_result(name: &'static str, result: Result<Check>) -> Self {
        result.unwrap_or_else(|e| Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        })
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "seed {}", self.seed)?;
        for check in &self.checks {
            writeln!(f, "{check}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

/// Full suite against the library's own closed form.
pub fn run(seed: u64) -> Report {
    run_with(seed, &postselect_pure)
}

pub fn run_with(seed: u64, closed_form: &ClosedForm) -> Report {
    let checks = vec![
        Check::from_result(
            "oracle equivalence",
            oracle_equivalence(seed, ORACLE_CASES, closed_form),
        ),
        Check::from_result("kraus completeness", kraus_completeness(seed)),
        Check::from_result("relaxation trace preservation", relax_trace(seed)),
        Check::from_result("generator trace", generator_trace(seed)),
        Check::from_result("thermal stationarity", thermal_stationarity()),
        Check::from_result("noiseless limit", noiseless_limit(seed)),
        Check::from_result("constraint residuals", constraint_residuals()),
        Check::from_result("wigner normalization", wigner_normalization()),
        Check::from_result("wigner origin of |1>", wigner_origin()),
    ];
    Report { seed, checks }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_state(rng: &mut ChaCha8Rng, cutoff: usize) -> Result<FockState> {
    let amps = (0..=cutoff)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    FockState::from_amplitudes(amps)
}

fn random_density(rng: &mut ChaCha8Rng, cutoff: usize) -> Result<DensityMatrix> {
    let mut elements = random_state(rng, cutoff)?.to_density().elements().clone();
    for _ in 0..3 {
        let w = rng.gen_range(0.0..1.0);
        elements = elements + random_state(rng, cutoff)?.to_density().elements() * C64::new(w, 0.0);
    }
    DensityMatrix::from_matrix(elements)
}

/// Random sequences of at most four atoms. Half of them share one phase and
/// run as a single group, whose probability must equal the binomial
/// multiplicity times the probability of one ordering.
pub fn oracle_equivalence(seed: u64, cases: usize, closed_form: &ClosedForm) -> Result<Check> {
    let mut rng = rng_for(seed, 1);
    let mut worst_probability: f64 = 0.0;
    let mut worst_fidelity: f64 = 1.0;
    let mut compared = 0;
    for _ in 0..cases {
        let cutoff = rng.gen_range(1..=ORACLE_MAX_CUTOFF);
        let state = random_state(&mut rng, cutoff)?;
        let atoms = rng.gen_range(1..=ORACLE_MAX_ATOMS);
        let shared = rng.gen_bool(0.5);
        let shared_phi = rng.gen_range(0.0..TAU);
        let mut sequence: Vec<(f64, Outcome)> = (0..atoms)
            .map(|_| {
                let phi = if shared {
                    shared_phi
                } else {
                    rng.gen_range(0.0..TAU)
                };
                let outcome = if rng.gen_bool(0.5) {
                    Outcome::Excited
                } else {
                    Outcome::Ground
                };
                (phi, outcome)
            })
            .collect();
        let (groups, multiplicity) = if shared {
            // the grouped channel detects excited atoms first
            sequence.sort_by_key(|&(_, o)| o != Outcome::Excited);
            let n_excited = sequence
                .iter()
                .filter(|(_, o)| *o == Outcome::Excited)
                .count() as u32;
            let group = AtomGroup::new(atoms as u32, n_excited, shared_phi)?;
            (vec![group], binomial(atoms as u32, n_excited))
        } else {
            let groups = sequence
                .iter()
                .map(|&(phi, o)| AtomGroup::new(1, u32::from(o == Outcome::Excited), phi))
                .collect::<Result<Vec<_>>>()?;
            (groups, 1.0)
        };
        let oracle = oracle_postselect(&state, &sequence);
        let closed = closed_form(&state, &groups);
        match (oracle, closed) {
            (Ok(o), Ok(c)) => {
                compared += 1;
                worst_probability =
                    worst_probability.max((c.probability - multiplicity * o.probability).abs());
                worst_fidelity = worst_fidelity.min(fidelity_pure(&o.final_state, &c.final_state)?);
            }
            (Err(Error::ImpossibleOutcome { .. }), Err(Error::ImpossibleOutcome { .. })) => {}
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok(Check {
        name: "oracle equivalence",
        passed: worst_probability < ORACLE_PROBABILITY_TOLERANCE && 1.0 - worst_fidelity < ORACLE_FIDELITY_TOLERANCE,
        detail: format!(
            "{compared}/{cases} sequences, max |dP| {worst_probability:.3e}, min F {worst_fidelity:.17}"
        ),
    })
}

/// `|M_g|^2 + |M_e|^2 = 1` on every level.
pub fn kraus_completeness(seed: u64) -> Result<Check> {
    let mut rng = rng_for(seed, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let phi = rng.gen_range(0.0..TAU);
        let g = kraus_operator(Outcome::Ground, phi, 60);
        let e = kraus_operator(Outcome::Excited, phi, 60);
        for (a, b) in g.diagonal().iter().zip(e.diagonal()) {
            worst = worst.max((a.norm_sqr() + b.norm_sqr() - 1.0).abs());
        }
    }
    Ok(Check::bound("kraus completeness", worst, KRAUS_TOLERANCE))
}

pub fn relax_trace(seed: u64) -> Result<Check> {
    let mut rng = rng_for(seed, 3);
    let noise = NoiseModel::reference();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let cutoff = rng.gen_range(2..=30);
        let rho = random_density(&mut rng, cutoff)?;
        let next = relax_step(&rho, &noise)?;
        worst = worst.max((next.trace() - rho.trace()).norm());
    }
    Ok(Check::bound(
        "relaxation trace preservation",
        worst,
        TRACE_TOLERANCE,
    ))
}

pub fn generator_trace(seed: u64) -> Result<Check> {
    let mut rng = rng_for(seed, 4);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let cutoff = rng.gen_range(1..=30);
        let rho = random_density(&mut rng, cutoff)?;
        let kappa = rng.gen_range(0.0..1.0);
        let n_th = rng.gen_range(0.0..1.0);
        let l = lindblad_generator(&rho, kappa, n_th);
        worst = worst.max(l.diag().sum().norm());
    }
    Ok(Check::bound(
        "generator trace",
        worst,
        GENERATOR_TRACE_TOLERANCE,
    ))
}

pub fn thermal_stationarity() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for &n_th in &[0.0, 0.05, 0.5] {
        let rho = DensityMatrix::thermal(n_th, 40)?;
        let l = lindblad_generator(&rho, 1.0, n_th);
        worst = worst.max(l.iter().map(|x| x.norm()).fold(0.0, f64::max));
    }
    Ok(Check::bound(
        "thermal stationarity",
        worst,
        THERMAL_TOLERANCE,
    ))
}

/// Lossless, ideal-detector `run_noisy` against the closed form.
pub fn noiseless_limit(seed: u64) -> Result<Check> {
    let mut rng = rng_for(seed, 5);
    let noise = NoiseModel::ideal();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rho = random_density(&mut rng, 15)?;
        let groups = (0..rng.gen_range(1..=3))
            .map(|_| {
                let n = rng.gen_range(1..=4);
                AtomGroup::new(n, rng.gen_range(0..=n), rng.gen_range(0.1..3.0))
            })
            .collect::<Result<Vec<_>>>()?;
        let closed = postselect_density(&rho, &groups)?;
        let noisy = run_noisy(&rho, &groups, &noise)?;
        let diff = (closed.final_state.elements() - noisy.final_state.elements())
            .iter()
            .map(|x| x.norm())
            .fold(0.0, f64::max);
        worst = worst
            .max(diff)
            .max((closed.probability - noisy.probability).abs());
    }
    Ok(Check::bound("noiseless limit", worst, NOISELESS_TOLERANCE))
}

/// Solved phases satisfy their constraints for both schemes.
pub fn constraint_residuals() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for step in 0..=20 {
        let alpha = (3.0 + 0.1 * step as f64).sqrt();
        for &rhs in &[1.0, three_group_rhs()] {
            for n in 1..=200 {
                let phi = phi_for_condition(alpha, n, rhs)?;
                worst = worst.max((alpha * (phi / 2.0).cos().powi(n as i32) - rhs).abs());
            }
        }
    }
    Ok(Check::bound(
        "constraint residuals",
        worst,
        CONSTRAINT_TOLERANCE,
    ))
}

pub fn wigner_normalization() -> Result<Check> {
    let mut worst: f64 = 0.0;
    for alpha in [0.0, 1.0, 1.5] {
        let grid = wigner(&FockState::coherent(alpha, 30)?, &GridSpec::default())?;
        worst = worst.max((grid.integral() - 1.0).abs());
    }
    Ok(Check::bound(
        "wigner normalization",
        worst,
        WIGNER_NORM_TOLERANCE,
    ))
}

pub fn wigner_origin() -> Result<Check> {
    let grid = GridSpec {
        nx: 3,
        np: 3,
        ..GridSpec::default()
    };
    let w = wigner(&FockState::fock(1, 10)?, &grid)?;
    Ok(Check::bound(
        "wigner origin of |1>",
        (w.values[1][1] + 1.0 / PI).abs(),
        WIGNER_ORIGIN_TOLERANCE,
    ))
}
