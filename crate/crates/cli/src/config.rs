//! Scenario files: strict TOML with one section per stage of a run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use decoherence::evolution::Mode;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    #[serde(default)]
    pub bath: BathConfig,
    pub gas: Option<GasConfig>,
    pub grid: Option<GridConfig>,
    pub evolution: Option<EvolutionConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default = "one")]
    pub hbar: f64,
    /// Collective dimension for the master-equation modes. Phase-space
    /// modes use the grid size instead.
    pub d_c: Option<usize>,
    /// Expected environment dimension; checked when the environment is
    /// built explicitly.
    pub d_e: Option<usize>,
    pub hamiltonian: Option<HamiltonianConfig>,
    /// Collective factor `X` of the coupling `X ⊗ B` in the master modes
    /// (operator text file); defaults to the position of a harmonic `H_c`.
    pub coupling_file: Option<PathBuf>,
    pub initial: Option<InitialConfig>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianConfig {
    Harmonic { mass: f64, omega: f64 },
    /// Operator text file (see `Operator::to_text`).
    Tabulated { file: PathBuf },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Gaussian {
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        p0: f64,
        sigma: f64,
    },
    Cat {
        #[serde(default)]
        x0: f64,
        #[serde(default)]
        p0: f64,
        separation: f64,
        sigma: f64,
    },
    /// `(|a> + |b>)/√2` in the collective basis (master modes).
    Superposition { levels: [usize; 2] },
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CouplingForm {
    #[default]
    Position,
    Ladder,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BathConfig {
    #[default]
    None,
    /// Ohmic oscillator bath `J(ω) = η ω e^{-ω/Ω}` sampled by `modes`
    /// oscillators on `(0, span·Ω]`.
    Oscillator {
        #[serde(default)]
        coupling: CouplingForm,
        temperature: f64,
        eta: f64,
        cutoff: f64,
        modes: usize,
        #[serde(default = "default_span")]
        span: f64,
        #[serde(default = "default_truncation")]
        truncation: usize,
        #[serde(default)]
        epsilon: f64,
    },
    /// Coupling spectrum text file (see `CouplingSpectrum::to_text`).
    Spectrum { file: PathBuf },
    /// Decoherence tensor given directly.
    Tensor {
        #[serde(default)]
        gxx: f64,
        #[serde(default)]
        gxp: f64,
        #[serde(default)]
        gpp: f64,
    },
    /// Scattering gas from the `[gas]` section.
    Gas,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GasModel {
    HardSphere,
    Tabulated,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConfig {
    pub model: GasModel,
    pub radius: Option<f64>,
    /// Monochromatic wave number; exclusive with `temperature`.
    pub k0: Option<f64>,
    /// Thermal flux; needs `mass`.
    pub temperature: Option<f64>,
    pub mass: Option<f64>,
    pub flux: f64,
    /// Tabulated model: `theta,dsigma` rows.
    pub file: Option<PathBuf>,
    pub theta_min: Option<f64>,
    /// Kernel export range `[0, xi_max]` with `points` samples.
    pub xi_max: Option<f64>,
    #[serde(default = "default_kernel_points")]
    pub points: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub n_p: usize,
    /// Momentum window centre; its width follows from `Δx Δp n = 2πħ`.
    #[serde(default)]
    pub p_center: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub mode: String,
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "yes")]
    pub flow: bool,
    #[serde(default = "default_hbar_order")]
    pub hbar_order: u32,
    #[serde(default = "default_every")]
    pub record_every: usize,
    #[serde(default)]
    pub stationary_kernel: bool,
    #[serde(default)]
    pub epsilon: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub pointer: bool,
    #[serde(default)]
    pub nogo: bool,
    #[serde(default)]
    pub sieve: bool,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Sieve window; defaults to the run length.
    pub sieve_window: Option<f64>,
    /// Coherent-state width for the no-go sampling; defaults to
    /// `sqrt(ħ/mω)` of a harmonic `H_c`, else 1.
    pub coherent_width: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { pointer: false, nogo: false, sieve: false, samples: default_samples(), sieve_window: None, coherent_width: None }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    /// Write a Wigner snapshot every this many steps; 0 disables them.
    #[serde(default = "default_every")]
    pub snapshot_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: default_directory(), snapshot_every: default_every() }
    }
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_span() -> f64 {
    8.0
}
fn default_truncation() -> usize {
    4
}
fn default_kernel_points() -> usize {
    200
}
fn default_hbar_order() -> u32 {
    1
}
fn default_every() -> usize {
    1
}
fn default_samples() -> usize {
    8
}
fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

/// A parsed scenario together with its source hash and location.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub hash: String,
    /// Directory that relative file references resolve against.
    pub base: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str, base: PathBuf) -> Result<Self> {
        let config: ScenarioConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!(located(text, &e)))?;
        let scenario = Self { config, hash: sha256_hex(text.as_bytes()), base };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn resolve(&self, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            self.base.join(file)
        }
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        positive("system.hbar", c.system.hbar)?;
        match &c.system.hamiltonian {
            Some(HamiltonianConfig::Harmonic { mass, omega }) => {
                positive("system.hamiltonian.mass", *mass)?;
                positive("system.hamiltonian.omega", *omega)?;
            }
            Some(HamiltonianConfig::Tabulated { file }) => self.require_file("system.hamiltonian.file", file)?,
            None => {}
        }
        if let Some(file) = &c.system.coupling_file {
            self.require_file("system.coupling_file", file)?;
        }
        match &c.system.initial {
            Some(InitialConfig::Gaussian { sigma, .. }) => positive("system.initial.sigma", *sigma)?,
            Some(InitialConfig::Cat { sigma, separation, .. }) => {
                positive("system.initial.sigma", *sigma)?;
                positive("system.initial.separation", *separation)?;
            }
            _ => {}
        }
        match &c.bath {
            BathConfig::Oscillator { coupling, temperature, eta, cutoff, modes, span, truncation, epsilon } => {
                non_negative("bath.temperature", *temperature)?;
                non_negative("bath.eta", *eta)?;
                positive("bath.cutoff", *cutoff)?;
                positive("bath.span", *span)?;
                non_negative("bath.epsilon", *epsilon)?;
                if *modes == 0 {
                    bail!("bath.modes must be at least 1");
                }
                if *truncation < 2 {
                    bail!("bath.truncation must be at least 2");
                }
                if *coupling == CouplingForm::Ladder && !matches!(c.system.hamiltonian, Some(HamiltonianConfig::Harmonic { .. })) {
                    bail!("bath.coupling = \"ladder\" needs a harmonic system.hamiltonian");
                }
            }
            BathConfig::Spectrum { file } => self.require_file("bath.file", file)?,
            BathConfig::Tensor { gxx, gxp, gpp } => {
                non_negative("bath.gxx", *gxx)?;
                non_negative("bath.gpp", *gpp)?;
                if gxp * gxp > gxx * gpp * (1.0 + 1e-12) {
                    bail!("bath tensor is not positive semidefinite (gxp^2 > gxx*gpp)");
                }
            }
            BathConfig::Gas if c.gas.is_none() => bail!("bath.kind = \"gas\" needs a [gas] section"),
            _ => {}
        }
        if let Some(gas) = &c.gas {
            positive("gas.flux", gas.flux)?;
            match (gas.k0, gas.temperature) {
                (Some(k0), None) => positive("gas.k0", k0)?,
                (None, Some(t)) => {
                    positive("gas.temperature", t)?;
                    positive("gas.mass", gas.mass.context("gas.temperature needs gas.mass")?)?;
                }
                _ => bail!("[gas] needs exactly one of k0 or temperature"),
            }
            match gas.model {
                GasModel::HardSphere => positive("gas.radius", gas.radius.context("hard_sphere gas needs radius")?)?,
                GasModel::Tabulated => {
                    self.require_file("gas.file", gas.file.as_ref().context("tabulated gas needs file")?)?
                }
            }
            if gas.points < 2 {
                bail!("gas.points must be at least 2");
            }
        }
        if let Some(g) = &c.grid {
            if !(g.x_max > g.x_min) {
                bail!("grid.x_max must exceed grid.x_min");
            }
            if g.n_x != g.n_p {
                bail!("grid.n_x and grid.n_p must agree (got {} and {})", g.n_x, g.n_p);
            }
        }
        if let Some(e) = &c.evolution {
            e.mode.parse::<Mode>()?;
            non_negative("evolution.t_final", e.t_final)?;
            positive("evolution.dt", e.dt)?;
        }
        Ok(())
    }

    fn require_file(&self, key: &str, file: &Path) -> Result<()> {
        let path = self.resolve(file);
        if !path.is_file() {
            bail!("{key}: file {} does not exist", path.display());
        }
        Ok(())
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("{key} must be positive (got {v})");
    }
    Ok(())
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        bail!("{key} must be >= 0 (got {v})");
    }
    Ok(())
}

/// Parse error message with a 1-based line number. Tagged sections
/// report the table header, so an unknown key is looked up in the
/// table body.
fn located(text: &str, e: &toml::de::Error) -> String {
    let Some(span) = e.span() else {
        return e.message().to_string();
    };
    let start = span.start.min(text.len());
    let mut offset = start;
    if let Some(key) = e.message().strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
        let mut pos = start;
        for (i, line) in text[start..].split_inclusive('\n').enumerate() {
            if i > 0 && line.trim_start().starts_with('[') {
                break;
            }
            let rest = line.trim_start().strip_prefix(key).map(str::trim_start);
            if rest.is_some_and(|r| r.starts_with('=')) {
                offset = pos;
                break;
            }
            pos += line.len();
        }
    }
    let line = text[..offset].matches('\n').count() + 1;
    format!("line {line}: {}", e.message())
}
