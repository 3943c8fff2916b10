//! Parameterised Hamiltonians and the closed field loop.
//!
//! Units: hbar = 1 and mu_B = 1, so every coupling is a plain number. The
//! field direction is `n(θ, φ) = (sinθ cosφ, sinθ sinφ, cosθ)`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::Operator;
use crate::spin_algebra::{spin_ops, HalfInt, VectorOp};

/// Declarative description of one physical system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    /// `G S1·S2 - B0 (g1 S1 + g2 S2)·n`.
    TwoMomenta {
        j1: HalfInt,
        j2: HalfInt,
        #[serde(rename = "G")]
        coupling: f64,
        g1: f64,
        g2: f64,
        #[serde(rename = "B0")]
        b0: f64,
    },
    /// `K (J_z'^2 - J^2 / 3)` with `z'` along `n`.
    Quadrupole {
        j: HalfInt,
        #[serde(rename = "K")]
        k: f64,
    },
}

impl SystemSpec {
    pub fn two_spin_half(coupling: f64, g1: f64, g2: f64, b0: f64) -> Self {
        SystemSpec::TwoMomenta { j1: HalfInt::HALF, j2: HalfInt::HALF, coupling, g1, g2, b0 }
    }

    /// A lone spin `j` with gyromagnetic ratio `g` (second momentum `j2 = 0`).
    pub fn single_spin(j: HalfInt, g: f64, b0: f64) -> Self {
        SystemSpec::TwoMomenta { j1: j, j2: HalfInt::ZERO, coupling: 0.0, g1: g, g2: 0.0, b0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SystemSpec::TwoMomenta { j1, j2, coupling, g1, g2, b0 } => {
                if j1.twice() < 0 || j2.twice() < 0 {
                    return Err(Error::InvalidSpec(format!("spins must be nonnegative (j1={j1}, j2={j2})")));
                }
                if ![coupling, g1, g2, b0].iter().all(|x| x.is_finite()) {
                    return Err(Error::InvalidSpec("couplings must be finite".into()));
                }
                if b0 < 0.0 {
                    return Err(Error::InvalidSpec(format!("B0 must be >= 0, got {b0}")));
                }
                Ok(())
            }
            SystemSpec::Quadrupole { j, k } => {
                if j.multiplicity() < 3 {
                    return Err(Error::InvalidSpec(format!(
                        "quadrupole coupling vanishes identically for j = {j}; need 2j+1 >= 3"
                    )));
                }
                if !k.is_finite() {
                    return Err(Error::InvalidSpec("K must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        match *self {
            SystemSpec::TwoMomenta { j1, j2, .. } => j1.multiplicity() * j2.multiplicity(),
            SystemSpec::Quadrupole { j, .. } => j.multiplicity(),
        }
    }

    /// Short human-readable name, e.g. `two_momenta(1/2,1/2)`.
    pub fn label(&self) -> String {
        match self {
            SystemSpec::TwoMomenta { j1, j2, .. } => format!("two_momenta({j1},{j2})"),
            SystemSpec::Quadrupole { j, .. } => format!("quadrupole({j})"),
        }
    }

    pub fn is_quadrupole(&self) -> bool {
        matches!(self, SystemSpec::Quadrupole { .. })
    }
}

/// Signed (g1, g2) presets. Electron-like moments are antiparallel to the
/// spin, hence negative in the `-B·(g1 S1 + g2 S2)` convention; nuclear and
/// muon g-factors are scaled by the electron/particle mass ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Hydrogen,
    Positronium,
    Muonium,
    SpinOrbit,
}

pub const ELECTRON_G: f64 = 2.002_319_304_36;
const PROTON_G: f64 = 5.585_694_689;
const PROTON_ELECTRON_MASS_RATIO: f64 = 1_836.152_673_43;
const MUON_G: f64 = 2.002_331_841;
const MUON_ELECTRON_MASS_RATIO: f64 = 206.768_283;

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Hydrogen, Preset::Positronium, Preset::Muonium, Preset::SpinOrbit];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Hydrogen => "hydrogen",
            Preset::Positronium => "positronium",
            Preset::Muonium => "muonium",
            Preset::SpinOrbit => "spin-orbit",
        }
    }

    pub fn spins(self) -> (HalfInt, HalfInt) {
        match self {
            Preset::SpinOrbit => (HalfInt::ONE, HalfInt::HALF),
            _ => (HalfInt::HALF, HalfInt::HALF),
        }
    }

    pub fn g_factors(self) -> (f64, f64) {
        match self {
            Preset::Hydrogen => (-ELECTRON_G, PROTON_G / PROTON_ELECTRON_MASS_RATIO),
            Preset::Positronium => (-ELECTRON_G, ELECTRON_G),
            Preset::Muonium => (-ELECTRON_G, MUON_G / MUON_ELECTRON_MASS_RATIO),
            // orbital g_L = 1, spin g_s ≈ 2, both for an electron
            Preset::SpinOrbit => (-1.0, -ELECTRON_G),
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Hydrogen => "electron (g1 = -g_e) and proton (g2 = g_p m_e/m_p), j1 = j2 = 1/2",
            Preset::Positronium => "electron (g1 = -g_e) and positron (g2 = +g_e), j1 = j2 = 1/2",
            Preset::Muonium => "electron (g1 = -g_e) and mu+ (g2 = g_mu m_e/m_mu), j1 = j2 = 1/2",
            Preset::SpinOrbit => "orbital l = 1 (g1 = -1) and electron spin 1/2 (g2 = -g_e)",
        }
    }

    pub fn spec(self, coupling: f64, b0: f64) -> SystemSpec {
        let (j1, j2) = self.spins();
        let (g1, g2) = self.g_factors();
        SystemSpec::TwoMomenta { j1, j2, coupling, g1, g2, b0 }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset '{s}' (expected hydrogen, positronium, muonium, spin-orbit)"))
    }
}

pub fn field_vector(b0: f64, theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [b0 * st * cp, b0 * st * sp, b0 * ct]
}

/// Precomputed operators for repeated Hamiltonian evaluation along a loop.
#[derive(Clone, Debug)]
pub struct SystemModel {
    spec: SystemSpec,
    /// Total angular momentum (for one-momentum systems, just `J`).
    total: VectorOp,
    kind: ModelKind,
}

#[derive(Clone, Debug)]
enum ModelKind {
    TwoMomenta { hyperfine: Operator, moment: VectorOp },
    Quadrupole { k: f64, casimir: Operator },
}

impl SystemModel {
    pub fn new(spec: &SystemSpec) -> Result<Self> {
        spec.validate()?;
        match *spec {
            SystemSpec::TwoMomenta { j1, j2, coupling, g1, g2, b0 } => {
                let dims = [j1.multiplicity(), j2.multiplicity()];
                let s1 = spin_ops(j1)?.vector().embed(0, &dims)?;
                let s2 = spin_ops(j2)?.vector().embed(1, &dims)?;
                let hyperfine = s1.dot(&s2).scale(coupling);
                // -B0 (g1 S1 + g2 S2), to be projected on n
                let moment = s1.scale(-b0 * g1).plus(&s2.scale(-b0 * g2));
                Ok(SystemModel {
                    spec: spec.clone(),
                    total: s1.plus(&s2),
                    kind: ModelKind::TwoMomenta { hyperfine, moment },
                })
            }
            SystemSpec::Quadrupole { j, k } => {
                let total = spin_ops(j)?.vector();
                let casimir = total.squared();
                Ok(SystemModel { spec: spec.clone(), total, kind: ModelKind::Quadrupole { k, casimir } })
            }
        }
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.total.dim()
    }

    pub fn total_momentum(&self) -> &VectorOp {
        &self.total
    }

    /// Total angular momentum projected on the field axis, `S_z'`.
    pub fn axis_projection(&self, theta: f64, phi: f64) -> Operator {
        self.total.along(theta, phi)
    }

    pub fn hamiltonian(&self, theta: f64, phi: f64) -> Operator {
        match &self.kind {
            ModelKind::TwoMomenta { hyperfine, moment } => hyperfine + &moment.along(theta, phi),
            ModelKind::Quadrupole { k, casimir } => {
                let jn = self.total.along(theta, phi);
                (&(&jn * &jn) - &casimir.scale(1.0 / 3.0)).scale(*k)
            }
        }
    }
}

pub fn two_momenta_hamiltonian(spec: &SystemSpec, theta: f64, phi: f64) -> Result<Operator> {
    if spec.is_quadrupole() {
        return Err(Error::InvalidSpec("expected a two_momenta system".into()));
    }
    Ok(SystemModel::new(spec)?.hamiltonian(theta, phi))
}

pub fn quadrupole_hamiltonian(spec: &SystemSpec, theta: f64, phi: f64) -> Result<Operator> {
    if !spec.is_quadrupole() {
        return Err(Error::InvalidSpec("expected a quadrupole system".into()));
    }
    Ok(SystemModel::new(spec)?.hamiltonian(theta, phi))
}

/// Either Hamiltonian, dispatched on the spec kind.
pub fn hamiltonian(spec: &SystemSpec, theta: f64, phi: f64) -> Result<Operator> {
    Ok(SystemModel::new(spec)?.hamiltonian(theta, phi))
}

pub const MIN_LOOP_SAMPLES: usize = 8;

/// Closed azimuthal loop at fixed polar angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldLoop {
    pub theta: f64,
    pub n_samples: usize,
    /// `n_samples + 1` grid values `2πk/n`, from 0 to exactly 2π.
    pub phis: Vec<f64>,
    /// Traverse with φ decreasing (sample `k` sits at `-phis[k]`).
    #[serde(default)]
    pub reversed: bool,
}

impl FieldLoop {
    /// Azimuth of sample `k` in traversal order.
    pub fn angle(&self, k: usize) -> f64 {
        if self.reversed {
            -self.phis[k]
        } else {
            self.phis[k]
        }
    }

    pub fn reversed(&self) -> FieldLoop {
        FieldLoop { reversed: !self.reversed, ..self.clone() }
    }

    /// θ at (or numerically at) a pole: the cone collapses.
    pub fn is_degenerate(&self) -> bool {
        self.theta.sin().abs() < 1e-12
    }
}

pub fn loop_samples(theta: f64, n_samples: usize) -> Result<FieldLoop> {
    if n_samples < MIN_LOOP_SAMPLES {
        return Err(Error::TooFewSamples(n_samples));
    }
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::InvalidSpec(format!("theta must lie in [0, π], got {theta}")));
    }
    let n = n_samples as f64;
    let phis = (0..=n_samples).map(|k| TAU * (k as f64 / n)).collect();
    Ok(FieldLoop { theta, n_samples, phis, reversed: false })
}
