//! Turns a parsed scenario into library objects.

use std::fs;

use anyhow::{bail, Context, Result};
use log::warn;

use decoherence::coefficients::{
    canonical_rotation, decoherence_coeffs, dissipation_coeffs, ohmic_modes, oscillator_bath, BathCoupling,
    CouplingSpectrum, Degeneracy,
};
use decoherence::hilbert::{tensor_product, thermal_state, DensityOperator, Operator, SpaceTag};
use decoherence::scattering::{effective_gpp, CrossSection, Flux, GasSpec};
use decoherence::weyl::{cat_state, gaussian_state, grid_hamiltonian, PhaseSpaceGrid};
use decoherence::{
    C, DecoherenceTensor64, DensityOperator64, DissipationTensor64, GasSpec64, MasterProblem64, Operator64,
    PhaseSpaceGrid64,
};

use crate::config::{BathConfig, CouplingForm, GasConfig, GasModel, HamiltonianConfig, InitialConfig, Scenario};

/// Composite dimension above which master runs warn about cost.
const LARGE_COMPOSITE: usize = 512;

/// Decoherence tensor, plus friction when the bath provides it.
#[derive(Clone, Debug)]
pub struct Coefficients {
    pub g: DecoherenceTensor64,
    pub gamma: Option<DissipationTensor64>,
    pub theta: f64,
}

impl Coefficients {
    pub const HEADER: &'static str = "gxx,gxp,gpp,gamma_xx,gamma_xp,gamma_px,gamma_pp,det_g,classification,theta";

    pub fn row(&self) -> String {
        let gamma = match &self.gamma {
            Some(d) => format!("{:e},{:e},{:e},{:e}", d.gamma_xx(), d.gamma_xp(), d.gamma_px(), d.gamma_pp()),
            None => "nan,nan,nan,nan".into(),
        };
        let class = match self.g.classification {
            Degeneracy::Degenerate => "Degenerate",
            Degeneracy::NonDegenerate => "NonDegenerate",
        };
        format!(
            "{:e},{:e},{:e},{gamma},{:e},{class},{:e}",
            self.g.gxx(),
            self.g.gxp(),
            self.g.gpp(),
            self.g.det_g,
            self.theta
        )
    }
}

impl Scenario {
    pub fn hbar(&self) -> f64 {
        self.config.system.hbar
    }

    fn harmonic(&self) -> Option<(f64, f64)> {
        match self.config.system.hamiltonian {
            Some(HamiltonianConfig::Harmonic { mass, omega }) => Some((mass, omega)),
            _ => None,
        }
    }

    /// Natural length and momentum units `sqrt(ħ/mω)`, `sqrt(ħmω)`.
    pub fn units(&self) -> (f64, f64) {
        match self.harmonic() {
            Some((m, w)) => ((self.hbar() / (m * w)).sqrt(), (self.hbar() * m * w).sqrt()),
            None => (1.0, 1.0),
        }
    }

    pub fn grid(&self) -> Result<PhaseSpaceGrid64> {
        let g = self.config.grid.as_ref().context("this command needs a [grid] section")?;
        Ok(PhaseSpaceGrid::from_position(g.n_x, g.x_min, g.x_max, self.hbar(), g.p_center)?)
    }

    pub fn spectrum(&self) -> Result<Option<CouplingSpectrum<f64>>> {
        let hbar = self.hbar();
        Ok(match &self.config.bath {
            BathConfig::Oscillator { coupling, temperature, eta, cutoff, modes, span, truncation, epsilon } => {
                let form = match coupling {
                    CouplingForm::Position => BathCoupling::PositionOnly,
                    CouplingForm::Ladder => {
                        let (mass, omega) = self.harmonic().context("ladder coupling needs a harmonic H_c")?;
                        BathCoupling::Ladder { mass, omega }
                    }
                };
                let modes = ohmic_modes(*eta, *cutoff, *modes, *span);
                Some(oscillator_bath(&modes, *temperature, *truncation, form, hbar, *epsilon)?)
            }
            BathConfig::Spectrum { file } => {
                let path = self.resolve(file);
                let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
                let s = CouplingSpectrum::<f64>::from_text(&text).with_context(|| format!("in {}", path.display()))?;
                if (s.hbar - hbar).abs() > 1e-12 * hbar {
                    bail!("spectrum file has hbar = {} but system.hbar = {hbar}", s.hbar);
                }
                Some(s)
            }
            _ => None,
        })
    }

    pub fn gas(&self) -> Result<GasSpec64> {
        let gas = self.config.gas.as_ref().context("this command needs a [gas] section")?;
        build_gas(self, gas)
    }

    pub fn coefficients(&self) -> Result<Coefficients> {
        let (g, gamma) = match &self.config.bath {
            BathConfig::None => (DecoherenceTensor64::zero(1), None),
            BathConfig::Oscillator { .. } | BathConfig::Spectrum { .. } => {
                let s = self.spectrum()?.expect("bath with a spectrum");
                (decoherence_coeffs(&s), Some(dissipation_coeffs(&s)))
            }
            BathConfig::Tensor { gxx, gxp, gpp } => (DecoherenceTensor64::from_components(*gxx, *gxp, *gpp), None),
            BathConfig::Gas => {
                let gpp = effective_gpp(&self.gas()?, self.hbar())?;
                (DecoherenceTensor64::from_components(0.0, 0.0, gpp), None)
            }
        };
        let (l, pi) = self.units();
        let theta = if g.pairs() == 1 { canonical_rotation(&g, l, pi)?.0 } else { f64::NAN };
        Ok(Coefficients { g, gamma, theta })
    }

    /// `H_c` on the grid, when one is configured.
    pub fn grid_hamiltonian(&self, grid: &PhaseSpaceGrid64) -> Result<Option<Operator64>> {
        match &self.config.system.hamiltonian {
            Some(HamiltonianConfig::Harmonic { mass, omega }) => {
                let k = mass * omega * omega * 0.5;
                Ok(Some(grid_hamiltonian(grid, *mass, |x| k * x * x)))
            }
            Some(HamiltonianConfig::Tabulated { file }) => {
                let h = self.read_operator(file)?;
                if h.dim() != grid.n() {
                    bail!("tabulated H_c has dimension {} but the grid has {} nodes", h.dim(), grid.n());
                }
                Ok(Some(h))
            }
            None => Ok(None),
        }
    }

    fn read_operator(&self, file: &std::path::Path) -> Result<Operator64> {
        let path = self.resolve(file);
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let op = Operator::from_text(&text).with_context(|| format!("in {}", path.display()))?;
        Ok(Operator { tag: SpaceTag::Collective, mat: op.mat })
    }

    /// Initial pure state on the grid and, for a cat, the node indices
    /// of the two packet centres.
    pub fn grid_state(&self, grid: &PhaseSpaceGrid64) -> Result<(DensityOperator64, Option<(usize, usize)>)> {
        match self.config.system.initial.as_ref().context("this run needs system.initial")? {
            InitialConfig::Gaussian { x0, p0, sigma } => {
                Ok((DensityOperator::pure(SpaceTag::Collective, &gaussian_state(grid, *x0, *p0, *sigma)), None))
            }
            InitialConfig::Cat { x0, p0, separation, sigma } => {
                let psi = cat_state(grid, *x0, *separation, *p0, *sigma);
                let node = |x: f64| ((x - grid.x_min) / grid.dx()).round() as usize;
                let pair = (node(x0 - separation / 2.0), node(x0 + separation / 2.0));
                if pair.1 >= grid.n() || x0 - separation / 2.0 < grid.x_min {
                    bail!("cat packets lie outside the grid");
                }
                Ok((DensityOperator::pure(SpaceTag::Collective, &psi), Some(pair)))
            }
            InitialConfig::Superposition { .. } => bail!("a level superposition needs a master mode"),
        }
    }

    /// Collective Hamiltonian, coupling `X ⊗ B` to an explicit oscillator
    /// environment, and the initial state.
    pub fn master_problem(&self) -> Result<(MasterProblem64, DensityOperator64, (usize, usize))> {
        let hbar = self.hbar();
        let d_c = self.config.system.d_c.context("master modes need system.d_c")?;
        if d_c < 2 {
            bail!("system.d_c must be at least 2");
        }
        let h_c = match &self.config.system.hamiltonian {
            Some(HamiltonianConfig::Harmonic { omega, .. }) => {
                let levels: Vec<f64> = (0..d_c).map(|n| hbar * omega * (n as f64 + 0.5)).collect();
                Operator::diagonal(SpaceTag::Collective, &levels)
            }
            Some(HamiltonianConfig::Tabulated { file }) => self.read_operator(file)?,
            None => Operator::zeros(SpaceTag::Collective, d_c),
        };
        if h_c.dim() != d_c {
            bail!("H_c has dimension {} but system.d_c = {d_c}", h_c.dim());
        }
        let x = match (&self.config.system.coupling_file, self.harmonic()) {
            (Some(file), _) => self.read_operator(file)?,
            (None, Some(_)) => ladder_sum(d_c, self.units().0 / 2f64.sqrt(), SpaceTag::Collective),
            (None, None) => bail!("master modes need a harmonic H_c or system.coupling_file"),
        };
        if x.dim() != d_c {
            bail!("collective coupling has dimension {} but system.d_c = {d_c}", x.dim());
        }
        let BathConfig::Oscillator { coupling, temperature, eta, cutoff, modes, span, truncation, .. } = &self.config.bath
        else {
            bail!("master modes need bath.kind = \"oscillator\"");
        };
        if *coupling != CouplingForm::Position {
            bail!("master modes support bath.coupling = \"position\" only");
        }
        if !(*temperature > 0.0) {
            bail!("master modes need bath.temperature > 0");
        }
        let modes = ohmic_modes(*eta, *cutoff, *modes, *span);
        let (h_e, b) = oscillator_environment(&modes, *truncation, hbar);
        let d_e = h_e.dim();
        if let Some(expected) = self.config.system.d_e {
            if expected != d_e {
                bail!("system.d_e = {expected} but the bath has {d_e} states");
            }
        }
        if d_c * d_e > LARGE_COMPOSITE {
            warn!("composite dimension {} makes master runs slow", d_c * d_e);
        }
        let env = thermal_state(&h_e, 1.0 / temperature)?;
        let h_1 = tensor_product(&x, &b)?;
        let problem = MasterProblem64::renormalized(&h_c, &h_1, env, hbar)?;
        let levels = match self.config.system.initial {
            Some(InitialConfig::Superposition { levels }) => (levels[0], levels[1]),
            Some(_) => bail!("master modes start from system.initial.kind = \"superposition\""),
            None => (0, 1),
        };
        if levels.0 >= d_c || levels.1 >= d_c || levels.0 == levels.1 {
            bail!("superposition levels must be distinct and below d_c");
        }
        let mut psi = nalgebra::DVector::<C<f64>>::zeros(d_c);
        psi[levels.0] = C::new(0.5f64.sqrt(), 0.0);
        psi[levels.1] = C::new(0.5f64.sqrt(), 0.0);
        Ok((problem, DensityOperator::pure(SpaceTag::Collective, &psi), levels))
    }
}

/// `scale · (a + a†)` on `d` levels.
fn ladder_sum(d: usize, scale: f64, tag: SpaceTag) -> Operator64 {
    let mut m = nalgebra::DMatrix::<C<f64>>::zeros(d, d);
    for n in 0..d - 1 {
        let v = C::new(scale * ((n + 1) as f64).sqrt(), 0.0);
        m[(n, n + 1)] = v;
        m[(n + 1, n)] = v;
    }
    Operator { tag, mat: m }
}

/// `H_e = Σ ħω_i n_i` and `B = Σ λ_i (a_i + a_i†)` on the product of
/// `truncation`-level modes.
fn oscillator_environment(modes: &[(C<f64>, f64)], truncation: usize, hbar: f64) -> (Operator64, Operator64) {
    let tag = SpaceTag::Environment;
    let mut h = Operator::zeros(tag, 1);
    let mut b = Operator::zeros(tag, 1);
    for &(lambda, w) in modes {
        let levels: Vec<f64> = (0..truncation).map(|n| hbar * w * n as f64).collect();
        let hm = Operator::diagonal(tag, &levels);
        let bm = ladder_sum(truncation, lambda.re, tag);
        let (i_old, i_new) = (Operator::identity(tag, h.dim()), Operator::identity(tag, truncation));
        let h_next = h.mat.kronecker(&i_new.mat) + i_old.mat.kronecker(&hm.mat);
        let b_next = b.mat.kronecker(&i_new.mat) + i_old.mat.kronecker(&bm.mat);
        h = Operator { tag, mat: h_next };
        b = Operator { tag, mat: b_next };
    }
    (h, b)
}

fn build_gas(s: &Scenario, gas: &GasConfig) -> Result<GasSpec64> {
    let cross_section = match gas.model {
        GasModel::HardSphere => CrossSection::HardSphere { radius: gas.radius.expect("validated") },
        GasModel::Tabulated => {
            let path = s.resolve(gas.file.as_ref().expect("validated"));
            let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            let (theta, dsigma) = read_table(&text).with_context(|| format!("in {}", path.display()))?;
            CrossSection::Tabulated { theta, dsigma }
        }
    };
    let flux = match (gas.k0, gas.temperature) {
        (Some(k0), _) => Flux::Monochromatic { k0, total: gas.flux },
        (None, Some(temperature)) => Flux::Thermal {
            particle_mass: gas.mass.expect("validated"),
            temperature,
            hbar: s.hbar(),
            total: gas.flux,
        },
        (None, None) => unreachable!("validated"),
    };
    let mut spec = GasSpec::new(cross_section, flux);
    if let Some(t) = gas.theta_min {
        spec = spec.with_theta_min(t);
    }
    Ok(spec)
}

/// Two-column `theta,dsigma` table; `#` lines and a non-numeric header
/// line are skipped.
fn read_table(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("theta") {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("line {}: expected numbers", i + 1))?;
        if f.len() != 2 {
            bail!("line {}: expected 2 fields, found {}", i + 1, f.len());
        }
        a.push(f[0]);
        b.push(f[1]);
    }
    Ok((a, b))
}

/// Largest wave number the gas carries, used to scale the kernel range.
pub fn gas_wavenumber(gas: &GasConfig, hbar: f64) -> f64 {
    match (gas.k0, gas.temperature, gas.mass) {
        (Some(k0), _, _) => k0,
        (None, Some(t), Some(m)) => (2.0 * m * t).sqrt() / hbar,
        _ => 1.0,
    }
}
