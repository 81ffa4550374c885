//! Experiment configurations, compiled-in presets and the runners behind the
//! command-line tool.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    export_curve, export_grid, export_records, wigner_density, write_json, Format, GridSpec,
    WignerGrid,
};
use crate::channel::{postselect_pure, AtomGroup};
use crate::error::{invalid, Error, Result};
use crate::fock::{
    default_cutoff, fidelity_mixed, fidelity_pure, DensityMatrix, FockState, PhotonDistribution,
};
use crate::open_system::{run_noisy, NoiseModel};
use crate::optimizer::{
    optimize_noisy, optimize_scheme, qubit_beta, qubit_target, scheme_groups, sweep, NoisyMode,
    Scheme, SweepPoint, SweepRange, DEFAULT_N_MAX,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Single,
    Three,
    Custom,
}

impl SchemeKind {
    fn optimizable(self) -> Option<Scheme> {
        match self {
            SchemeKind::Single => Some(Scheme::Single),
            SchemeKind::Three => Some(Scheme::Three),
            SchemeKind::Custom => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// File-name prefix, e.g. `fig3` gives `fig3_summary.json`.
    #[serde(default = "default_stem")]
    pub stem: String,
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn default_stem() -> String {
    "experiment".to_string()
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            stem: default_stem(),
            format: Format::default(),
            dir: None,
        }
    }
}

impl OutputSpec {
    fn path(&self, kind: &str, extension: &str) -> PathBuf {
        let dir = self.dir.clone().unwrap_or_else(|| PathBuf::from("."));
        dir.join(format!("{}_{kind}.{extension}", self.stem))
    }
}

fn default_n_max() -> u32 {
    DEFAULT_N_MAX
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One preparation, sweep or Wigner run.
///
/// `single` and `three` tune the atom count of the last group (fixed by
/// `n_atoms`, otherwise optimized up to `n_max`) and aim at the equiprobable
/// optical qubit. `custom` runs `groups` as given; its target is the ideal
/// postselected state restricted to `target_support`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub scheme: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<u32>,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<AtomGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_support: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    /// Rescan the atom count with the noisy fidelity instead of keeping the
    /// noiseless optimum.
    #[serde(default, skip_serializing_if = "is_false")]
    pub reoptimize_under_noise: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wigner: Option<GridSpec>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

impl ExperimentConfig {
    fn base(scheme: SchemeKind, stem: &str) -> Self {
        Self {
            note: None,
            scheme,
            alpha_squared: None,
            sweep: None,
            n_atoms: None,
            n_max: DEFAULT_N_MAX,
            groups: Vec::new(),
            target_support: None,
            noise: None,
            reoptimize_under_noise: false,
            wigner: None,
            outputs: OutputSpec {
                stem: stem.to_string(),
                ..OutputSpec::default()
            },
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(a2) = self.alpha_squared {
            if !(a2.is_finite() && a2 >= 0.0) {
                return Err(invalid(
                    "alpha_squared",
                    format!("must be finite and >= 0, got {a2}"),
                ));
            }
        }
        if let Some(range) = &self.sweep {
            range.samples()?;
        }
        if self.alpha_squared.is_none() && self.sweep.is_none() {
            return Err(invalid(
                "alpha_squared",
                "either alpha_squared or sweep is required",
            ));
        }
        if self.n_max == 0 {
            return Err(invalid("n_max", "must be at least 1"));
        }
        if self.n_atoms == Some(0) {
            return Err(invalid("n_atoms", "must be at least 1"));
        }
        match self.scheme {
            SchemeKind::Custom => {
                if self.n_atoms.is_some() {
                    return Err(invalid(
                        "n_atoms",
                        "not used by the custom scheme; list the groups instead",
                    ));
                }
                if self.sweep.is_some() {
                    return Err(invalid(
                        "sweep",
                        "the custom scheme has nothing to optimize",
                    ));
                }
                self.groups.iter().try_for_each(AtomGroup::validate)?;
            }
            SchemeKind::Single | SchemeKind::Three => {
                if !self.groups.is_empty() {
                    return Err(invalid("groups", "only allowed with scheme \"custom\""));
                }
                if self.target_support.is_some() {
                    return Err(invalid(
                        "target_support",
                        "only allowed with scheme \"custom\"",
                    ));
                }
            }
        }
        if let Some(support) = &self.target_support {
            if support.is_empty() {
                return Err(invalid("target_support", "must not be empty"));
            }
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        if self.outputs.stem.is_empty() || self.outputs.stem.contains(['/', '\\']) {
            return Err(invalid(
                "outputs.stem",
                "must be a non-empty file-name prefix",
            ));
        }
        Ok(())
    }

    fn noisy_mode(&self) -> NoisyMode {
        if self.reoptimize_under_noise {
            NoisyMode::Reoptimize
        } else {
            NoisyMode::ReuseNoiseless
        }
    }

    fn require_alpha_squared(&self) -> Result<f64> {
        self.alpha_squared
            .ok_or_else(|| invalid("alpha_squared", "required for this command"))
    }
}

pub const PRESET_NAMES: [&str; 8] = [
    "fig2", "fig3", "fig4", "fig5", "fig6", "fig8-02", "fig9-13", "vacuum",
];

fn paper_sweep() -> SweepRange {
    SweepRange {
        start: 3.0,
        stop: 5.0,
        step: 0.1,
    }
}

/// Compiled-in configuration by name.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let config = match name {
        "fig2" => ExperimentConfig {
            note: Some("single group, optimal fidelity and probability versus alpha^2".into()),
            sweep: Some(paper_sweep()),
            ..ExperimentConfig::base(SchemeKind::Single, name)
        },
        "fig3" => ExperimentConfig {
            note: Some("single group of 37 atoms from |alpha|^2 = 4".into()),
            alpha_squared: Some(4.0),
            n_atoms: Some(37),
            wigner: Some(GridSpec::default()),
            ..ExperimentConfig::base(SchemeKind::Single, name)
        },
        "fig4" => ExperimentConfig {
            note: Some("three groups, optimal fidelity and probability versus alpha^2".into()),
            sweep: Some(paper_sweep()),
            ..ExperimentConfig::base(SchemeKind::Three, name)
        },
        "fig5" => ExperimentConfig {
            note: Some("three groups (pi/2, pi/3, 11 atoms) from |alpha|^2 = 4".into()),
            alpha_squared: Some(4.0),
            n_atoms: Some(11),
            wigner: Some(GridSpec::default()),
            ..ExperimentConfig::base(SchemeKind::Three, name)
        },
        "fig6" => ExperimentConfig {
            note: Some("three groups with cavity relaxation and imperfect detection".into()),
            sweep: Some(SweepRange {
                start: 3.0,
                stop: 5.0,
                step: 0.25,
            }),
            noise: Some(NoiseModel::reference()),
            reoptimize_under_noise: true,
            ..ExperimentConfig::base(SchemeKind::Three, name)
        },
        "fig8-02" => ExperimentConfig {
            note: Some("|0> & |2> superposition: one atom at pi, five at 0.535, all ground".into()),
            alpha_squared: Some(3.0),
            groups: vec![group(1, 0, PI), group(5, 0, 0.535)],
            target_support: Some(vec![0, 2]),
            wigner: Some(GridSpec::default()),
            ..ExperimentConfig::base(SchemeKind::Custom, name)
        },
        "fig9-13" => ExperimentConfig {
            note: Some(
                "|1> & |3> superposition: pi detected e, pi/5 detected g, five atoms at 0.372 with one e. \
                 The original parameter list labels both the pi/5 and the 0.372 couplings phi_3; \
                 the sequence is used as listed."
                    .into(),
            ),
            alpha_squared: Some(2.5),
            groups: vec![group(1, 1, PI), group(1, 0, PI / 5.0), group(5, 1, 0.372)],
            target_support: Some(vec![1, 3]),
            wigner: Some(GridSpec::default()),
            ..ExperimentConfig::base(SchemeKind::Custom, name)
        },
        "vacuum" => ExperimentConfig {
            note: Some("empty cavity, no atoms".into()),
            alpha_squared: Some(0.0),
            wigner: Some(GridSpec::default()),
            ..ExperimentConfig::base(SchemeKind::Custom, name)
        },
        _ => return None,
    };
    Some(config)
}

fn group(n_total: u32, n_excited: u32, phi: f64) -> AtomGroup {
    AtomGroup {
        n_total,
        n_excited,
        phi,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PreparedState {
    Pure(FockState),
    Mixed(DensityMatrix),
}

impl PreparedState {
    pub fn to_density(&self) -> DensityMatrix {
        match self {
            PreparedState::Pure(s) => s.to_density(),
            PreparedState::Mixed(rho) => rho.clone(),
        }
    }

    pub fn photon_distribution(&self) -> Result<PhotonDistribution> {
        match self {
            PreparedState::Pure(s) => s.photon_distribution(),
            PreparedState::Mixed(rho) => rho.photon_distribution(),
        }
    }
}

/// Outcome of [`prepare`].
#[derive(Clone, Debug, PartialEq)]
pub struct Preparation {
    pub alpha_squared: f64,
    pub n_atoms: Option<u32>,
    pub groups: Vec<AtomGroup>,
    pub target: FockState,
    pub state: PreparedState,
    pub fidelity: f64,
    pub probability: f64,
    pub distribution: PhotonDistribution,
}

/// Runs the configured postselection from `|alpha>`.
pub fn prepare(config: &ExperimentConfig) -> Result<Preparation> {
    config.validate()?;
    let alpha_squared = config.require_alpha_squared()?;
    let alpha = alpha_squared.sqrt();
    let cutoff = default_cutoff(alpha);
    let coherent = FockState::coherent(alpha, cutoff)?;

    let (groups, n_atoms, target) = match config.scheme.optimizable() {
        Some(scheme) => {
            let n = match (config.n_atoms, &config.noise) {
                (Some(n), _) => n,
                (None, None) => optimize_scheme(scheme, alpha, config.n_max)?.n_atoms,
                (None, Some(noise)) => {
                    optimize_noisy(scheme, alpha, noise, config.n_max, config.noisy_mode())?.n_atoms
                }
            };
            let groups = scheme_groups(scheme, alpha, n)?;
            let target = qubit_target(qubit_beta(alpha, &groups), cutoff)?;
            (groups, Some(n), target)
        }
        None => {
            let ideal = postselect_pure(&coherent, &config.groups)?.final_state;
            let target = match &config.target_support {
                Some(support) => {
                    if let Some(&bad) = support.iter().find(|&&n| n > cutoff) {
                        return Err(invalid(
                            "target_support",
                            format!("level {bad} exceeds cutoff {cutoff}"),
                        ));
                    }
                    ideal.project_onto(support)?
                }
                None => ideal,
            };
            (config.groups.clone(), None, target)
        }
    };

    let (state, fidelity, probability) = match &config.noise {
        None => {
            let run = postselect_pure(&coherent, &groups)?;
            let f = fidelity_pure(&target, &run.final_state)?;
            (PreparedState::Pure(run.final_state), f, run.probability)
        }
        Some(noise) => {
            let run = run_noisy(&coherent.to_density(), &groups, noise)?;
            let f = fidelity_mixed(&target, &run.final_state)?;
            (PreparedState::Mixed(run.final_state), f, run.probability)
        }
    };
    let distribution = state.photon_distribution()?;
    Ok(Preparation {
        alpha_squared,
        n_atoms,
        groups,
        target,
        state,
        fidelity,
        probability,
        distribution,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub scheme: SchemeKind,
    pub alpha_squared: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_atoms: Option<u32>,
    pub groups: Vec<AtomGroup>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    pub cutoff: usize,
    pub fidelity: f64,
    pub probability: f64,
    pub probability_percent: f64,
    pub mean_photon_number: f64,
    pub photon_distribution: Vec<f64>,
}

impl Summary {
    pub fn new(config: &ExperimentConfig, prep: &Preparation) -> Self {
        Self {
            scheme: config.scheme,
            alpha_squared: prep.alpha_squared,
            n_atoms: prep.n_atoms,
            groups: prep.groups.clone(),
            noise: config.noise,
            cutoff: prep.target.cutoff(),
            fidelity: prep.fidelity,
            probability: prep.probability,
            probability_percent: 100.0 * prep.probability,
            mean_photon_number: prep.distribution.mean(),
            photon_distribution: prep.distribution.probabilities().to_vec(),
        }
    }
}

#[derive(Serialize)]
struct DistributionRow {
    n: usize,
    probability: f64,
}

#[derive(Serialize)]
struct AmplitudeRow {
    n: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct DensityRow {
    m: usize,
    n: usize,
    re: f64,
    im: f64,
}

/// Writes distribution, state and summary files; returns their paths.
pub fn write_preparation(config: &ExperimentConfig, prep: &Preparation) -> Result<Vec<PathBuf>> {
    let out = &config.outputs;
    let ext = out.format.extension();
    let distribution_path = out.path("distribution", ext);
    let rows: Vec<DistributionRow> = prep
        .distribution
        .probabilities()
        .iter()
        .enumerate()
        .map(|(n, &probability)| DistributionRow { n, probability })
        .collect();
    export_records(&rows, out.format, &distribution_path)?;

    let state_path = out.path("state", ext);
    match &prep.state {
        PreparedState::Pure(s) => {
            let rows: Vec<AmplitudeRow> = s
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(n, a)| AmplitudeRow {
                    n,
                    re: a.re,
                    im: a.im,
                })
                .collect();
            export_records(&rows, out.format, &state_path)?;
        }
        PreparedState::Mixed(rho) => {
            let rows: Vec<DensityRow> = rho
                .elements()
                .indexed_iter()
                .map(|((m, n), a): ((usize, usize), &C64)| DensityRow {
                    m,
                    n,
                    re: a.re,
                    im: a.im,
                })
                .collect();
            export_records(&rows, out.format, &state_path)?;
        }
    }

    let summary_path = out.path("summary", "json");
    write_json(&Summary::new(config, prep), &summary_path)?;
    Ok(vec![distribution_path, state_path, summary_path])
}

/// Optimum at every configured `alpha^2`; a bare `alpha_squared` is a
/// one-point sweep. A fixed `n_atoms` is ignored.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    let scheme = config
        .scheme
        .optimizable()
        .ok_or_else(|| invalid("scheme", "sweeps need scheme \"single\" or \"three\""))?;
    let range = match (config.sweep, config.alpha_squared) {
        (Some(range), _) => range,
        (None, Some(a2)) => SweepRange::single(a2),
        (None, None) => unreachable!("validated"),
    };
    if config.n_atoms.is_some() {
        log::warn!("sweep optimizes the atom count; n_atoms is ignored");
    }
    match &config.noise {
        None => sweep(&range, |alpha| optimize_scheme(scheme, alpha, config.n_max)),
        Some(noise) => sweep(&range, |alpha| {
            optimize_noisy(scheme, alpha, noise, config.n_max, config.noisy_mode())
        }),
    }
}

#[derive(Serialize)]
struct SweepRow {
    alpha_squared: f64,
    n_atoms: u32,
    phi: f64,
    fidelity: f64,
    probability: f64,
    probability_percent: f64,
    at_boundary: bool,
}

/// Writes the fidelity curve, the probability curve and the full table.
pub fn write_sweep(config: &ExperimentConfig, points: &[SweepPoint]) -> Result<Vec<PathBuf>> {
    let out = &config.outputs;
    let ext = out.format.extension();
    let fidelity_path = out.path("fidelity", ext);
    let probability_path = out.path("probability", ext);
    let table_path = out.path("sweep", ext);
    let fidelity: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.alpha_squared, p.optimum.fidelity))
        .collect();
    let probability: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.alpha_squared, p.optimum.probability))
        .collect();
    export_curve(
        &fidelity,
        ["alpha_squared", "fidelity"],
        out.format,
        &fidelity_path,
    )?;
    export_curve(
        &probability,
        ["alpha_squared", "probability"],
        out.format,
        &probability_path,
    )?;
    let rows: Vec<SweepRow> = points
        .iter()
        .map(|p| SweepRow {
            alpha_squared: p.alpha_squared,
            n_atoms: p.optimum.n_atoms,
            phi: p.optimum.phi,
            fidelity: p.optimum.fidelity,
            probability: p.optimum.probability,
            probability_percent: 100.0 * p.optimum.probability,
            at_boundary: p.optimum.at_boundary,
        })
        .collect();
    export_records(&rows, out.format, &table_path)?;
    Ok(vec![fidelity_path, probability_path, table_path])
}

/// Wigner function of the prepared state on the configured grid.
pub fn run_wigner(config: &ExperimentConfig) -> Result<(Preparation, WignerGrid)> {
    let prep = prepare(config)?;
    let grid = config.wigner.unwrap_or_default();
    let w = wigner_density(&prep.state.to_density(), &grid)?;
    Ok((prep, w))
}

pub fn write_wigner(config: &ExperimentConfig, grid: &WignerGrid) -> Result<PathBuf> {
    let out = &config.outputs;
    let path = out.path("wigner", out.format.extension());
    export_grid(grid, out.format, &path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn presets_validate_and_round_trip() {
        for name in PRESET_NAMES {
            let config = preset(name).unwrap();
            config.validate().unwrap();
            let back = ExperimentConfig::from_json_str(&config.to_json_pretty()).unwrap();
            assert_eq!(back, config, "{name}");
        }
        assert!(preset("fig7").is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_json_str(r#"{"scheme": "single", "alpha_squard": 4}"#)
            .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("alpha_squard") && msg.contains("line 1"),
            "{msg}"
        );
    }

    #[test]
    fn missing_alpha_is_rejected() {
        let err = ExperimentConfig::from_json_str(r#"{"scheme": "three"}"#).unwrap_err();
        assert!(matches!(
            err,
            Error::InvalidParameter {
                name: "alpha_squared",
                ..
            }
        ));
    }

    #[test]
    fn groups_only_with_custom() {
        let text =
            r#"{"scheme": "single", "alpha_squared": 4, "groups": [{"n_total": 1, "phi": 1.0}]}"#;
        assert!(matches!(
            ExperimentConfig::from_json_str(text),
            Err(Error::InvalidParameter { name: "groups", .. })
        ));
    }

    #[test]
    fn fig3_preparation() {
        let prep = prepare(&preset("fig3").unwrap()).unwrap();
        assert_abs_diff_eq!(prep.fidelity, 0.98602, epsilon = 1e-5);
        assert_abs_diff_eq!(prep.probability, 0.037151, epsilon = 1e-5);
        assert_abs_diff_eq!(prep.distribution.get(2), 0.01383, epsilon = 1e-5);
    }

    #[test]
    fn vacuum_preset_is_trivial() {
        let prep = prepare(&preset("vacuum").unwrap()).unwrap();
        assert_eq!(prep.probability, 1.0);
        assert_abs_diff_eq!(prep.fidelity, 1.0, epsilon = 1e-15);
        assert_eq!(prep.distribution.get(0), 1.0);
    }

    #[test]
    fn single_point_sweep_matches_prepare() {
        let mut config = preset("fig3").unwrap();
        config.n_atoms = None;
        let points = run_sweep(&config).unwrap();
        let prep = prepare(&config).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].optimum.n_atoms, 37);
        assert_abs_diff_eq!(points[0].optimum.fidelity, prep.fidelity, epsilon = 1e-12);
        assert_abs_diff_eq!(
            points[0].optimum.probability,
            prep.probability,
            epsilon = 1e-12
        );
    }

    #[test]
    fn custom_sweep_rejected() {
        let config = preset("fig8-02").unwrap();
        assert!(matches!(
            run_sweep(&config),
            Err(Error::InvalidParameter { name: "scheme", .. })
        ));
    }
}
