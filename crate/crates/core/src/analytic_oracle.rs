//! Closed-form eigensystems and phase tables for the three reference systems.
//!
//! Two kinds of content live here. The phase tables are exact statements that
//! the numerics are expected to reproduce. The two-spin eigensystem and the
//! spin-1 ⊗ spin-1/2 energy formulas are literal transcriptions kept for
//! comparison only: they are evaluated against the numerically built
//! Hamiltonian and the differences are reported, never asserted.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use nalgebra::DVector;
use serde::Serialize;

use crate::berry_engine::circular_distance;
use crate::error::{Error, Result};
use crate::operators::{eig_hermitian, StateVector, C64};
use crate::spin_algebra::{coupled_basis, HalfInt};
use crate::systems::{SystemModel, SystemSpec};

/// Systems with a closed-form phase table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSystem {
    /// Two spin-1/2 momenta.
    TwoSpinHalf,
    /// Spin 1 coupled to spin 1/2.
    SpinOneSpinHalf,
    /// Spin-1 quadrupole.
    QuadrupoleSpinOne,
}

impl ReferenceSystem {
    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        match *spec {
            SystemSpec::TwoMomenta { j1, j2, .. } if j1 == HalfInt::HALF && j2 == HalfInt::HALF => {
                Ok(ReferenceSystem::TwoSpinHalf)
            }
            SystemSpec::TwoMomenta { j1, j2, .. }
                if (j1 == HalfInt::ONE && j2 == HalfInt::HALF) || (j1 == HalfInt::HALF && j2 == HalfInt::ONE) =>
            {
                Ok(ReferenceSystem::SpinOneSpinHalf)
            }
            SystemSpec::Quadrupole { j, .. } if j == HalfInt::ONE => Ok(ReferenceSystem::QuadrupoleSpinOne),
            _ => Err(Error::UnsupportedKind(spec.label())),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpectedPhase {
    pub label: &'static str,
    pub formula: &'static str,
    pub value: f64,
    /// Only meaningful mod 2π (degenerate-block eigenphases).
    pub modular: bool,
    /// Conflicts with first-principles evaluation.
    pub disputed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpectedPhaseTable {
    pub system: ReferenceSystem,
    pub theta: f64,
    pub entries: Vec<ExpectedPhase>,
}

pub fn expected_phases(system: ReferenceSystem, theta: f64) -> ExpectedPhaseTable {
    let one_minus = 1.0 - theta.cos();
    let entry = |label, formula, value| ExpectedPhase { label, formula, value, modular: false, disputed: false };
    let entries = match system {
        ReferenceSystem::TwoSpinHalf => vec![
            entry("n1", "-2π(1-cosθ)", -TAU * one_minus),
            entry("n2", "+2π(1-cosθ)", TAU * one_minus),
            entry("n3", "0", 0.0),
            entry("n4", "0", 0.0),
        ],
        ReferenceSystem::SpinOneSpinHalf => vec![
            entry("n1", "-3π(1-cosθ)", -3.0 * PI * one_minus),
            entry("n2", "+3π(1-cosθ)", 3.0 * PI * one_minus),
            entry("n3", "-π(1-cosθ)", -PI * one_minus),
            entry("n4", "-π(1-cosθ)", -PI * one_minus),
            entry("n5", "+π(1-cosθ)", PI * one_minus),
            entry("n6", "+π(1-cosθ)", PI * one_minus),
        ],
        ReferenceSystem::QuadrupoleSpinOne => vec![
            ExpectedPhase { modular: true, ..entry("chi+", "2π cosθ", TAU * theta.cos()) },
            ExpectedPhase { modular: true, ..entry("chi-", "-2π cosθ", -TAU * theta.cos()) },
            ExpectedPhase { disputed: true, ..entry("chi0", "π(1-cosθ)", PI * one_minus) },
        ],
    };
    ExpectedPhaseTable { system, theta, entries }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparedPhase {
    pub label: &'static str,
    pub formula: &'static str,
    pub printed: f64,
    pub computed: Option<f64>,
    /// `|printed - computed|`, on the circle for modular entries.
    pub delta: Option<f64>,
    pub modular: bool,
    pub disputed: bool,
}

/// Pairs printed entries with computed values as multisets, repeatedly taking
/// the globally closest unpaired pair. Modular entries are matched against
/// block eigenphases, the others against band phases.
pub fn compare_table(table: &ExpectedPhaseTable, band_phases: &[f64], block_eigenphases: &[f64]) -> Vec<ComparedPhase> {
    let mut assigned: Vec<Option<(f64, f64)>> = vec![None; table.entries.len()];
    for (modular, computed) in [(false, band_phases), (true, block_eigenphases)] {
        let dist = |e: f64, c: f64| if modular { circular_distance(e, c) } else { (e - c).abs() };
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, e) in table.entries.iter().enumerate().filter(|(_, e)| e.modular == modular) {
            for (j, &c) in computed.iter().enumerate() {
                pairs.push((dist(e.value, c), i, j));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut used = vec![false; computed.len()];
        for (d, i, j) in pairs {
            if assigned[i].is_none() && !used[j] {
                assigned[i] = Some((computed[j], d));
                used[j] = true;
            }
        }
    }
    table
        .entries
        .iter()
        .zip(assigned)
        .map(|(e, a)| ComparedPhase {
            label: e.label,
            formula: e.formula,
            printed: e.value,
            computed: a.map(|(c, _)| c),
            delta: a.map(|(_, d)| d),
            modular: e.modular,
            disputed: e.disputed,
        })
        .collect()
}

/// Literal two-spin eigensystem in the coupled basis
/// `(|1,1>, |1,0>, |1,-1>, |0,0>)`.
#[derive(Clone, Debug)]
pub struct PaperTwoSpinSolution {
    pub eta: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub chi: f64,
    pub k: f64,
    pub theta: f64,
    pub phi: f64,
    pub energies: [f64; 4],
    /// Norms of the states as printed, before normalisation.
    pub printed_norms: [f64; 4],
    /// Normalised states.
    pub states: [StateVector; 4],
}

pub fn paper_two_spin_eigensystem(eta: f64, gamma_plus: f64, gamma_minus: f64, theta: f64, phi: f64) -> PaperTwoSpinSolution {
    let base = 5.0 * eta / 8.0;
    let k = (base * base + gamma_minus * gamma_minus).sqrt();
    let chi = gamma_minus.atan2(base + k);
    let (s, c) = theta.sin_cos();
    let (sx, cx) = chi.sin_cos();
    let e = |m: f64| C64::from_polar(1.0, m * phi);
    let r = |x: f64| C64::new(x, 0.0);
    // order: |1,1>, |1,0>, |1,-1>, |0,0>
    let printed = [
        [r(0.5 * (1.0 + c)), e(1.0) * (FRAC_1_SQRT_2 * s), e(2.0) * (0.5 * (1.0 - c)), r(0.0)],
        [e(-2.0) * (0.5 * (1.0 + c)), e(-1.0) * (FRAC_1_SQRT_2 * s), r(-0.5 * (1.0 - c)), r(0.0)],
        [e(-1.0) * (FRAC_1_SQRT_2 * sx * s), r(-sx * c), e(1.0) * (-FRAC_1_SQRT_2 * sx * s), r(cx)],
        [e(-1.0) * (-FRAC_1_SQRT_2 * cx * s), r(cx * c), e(1.0) * (FRAC_1_SQRT_2 * cx * s), r(sx)],
    ];
    let mut printed_norms = [0.0; 4];
    let states = std::array::from_fn(|i| {
        let v = DVector::from_row_slice(&printed[i]);
        printed_norms[i] = v.norm();
        &v / C64::new(printed_norms[i], 0.0)
    });
    let energies = [eta / 2.0 + gamma_plus, eta / 2.0 - gamma_plus, -eta / 8.0 + k, -eta / 8.0 - k];
    PaperTwoSpinSolution { eta, gamma_plus, gamma_minus, chi, k, theta, phi, energies, printed_norms, states }
}

#[derive(Clone, Debug, Serialize)]
pub struct TranscriptionRow {
    pub state: &'static str,
    pub printed_energy: f64,
    pub printed_norm: f64,
    /// `‖H n - E n‖` with the normalised printed state.
    pub residual: f64,
    /// `<n|H|n>`.
    pub rayleigh_quotient: f64,
    /// Closest eigenvalue of the numerically built Hamiltonian.
    pub nearest_numeric_energy: f64,
    pub energy_delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TranscriptionReport {
    pub theta: f64,
    pub phi: f64,
    pub eta: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub rows: Vec<TranscriptionRow>,
    /// Printed norms that differ from 1 by more than 1e-9.
    pub norm_warnings: Vec<String>,
}

const STATE_LABELS: [&str; 4] = ["n1", "n2", "n3", "n4"];

/// Residuals of the two-spin transcription against the numerical Hamiltonian
/// (`η = G`, `γ± = -B0 g±` in hbar = mu_B = 1 units).
pub fn two_spin_transcription_report(spec: &SystemSpec, theta: f64, phi: f64) -> Result<TranscriptionReport> {
    let SystemSpec::TwoMomenta { j1, j2, coupling, g1, g2, b0 } = *spec else {
        return Err(Error::UnsupportedKind(spec.label()));
    };
    if j1 != HalfInt::HALF || j2 != HalfInt::HALF {
        return Err(Error::UnsupportedKind(spec.label()));
    }
    let gamma_plus = -b0 * (g1 + g2) / 2.0;
    let gamma_minus = -b0 * (g1 - g2) / 2.0;
    let sol = paper_two_spin_eigensystem(coupling, gamma_plus, gamma_minus, theta, phi);

    let cb = coupled_basis(j1, j2)?;
    let h = cb.to_coupled(&SystemModel::new(spec)?.hamiltonian(theta, phi));
    let numeric = eig_hermitian(&h)?.values;

    let mut rows = Vec::with_capacity(4);
    let mut norm_warnings = Vec::new();
    for (i, state) in sol.states.iter().enumerate() {
        let e = sol.energies[i];
        let hv = h.apply(state);
        let residual = (&hv - state * C64::new(e, 0.0)).norm();
        let rayleigh_quotient = state.dotc(&hv).re;
        let nearest = numeric.iter().copied().min_by(|a, b| (a - e).abs().total_cmp(&(b - e).abs())).unwrap_or(f64::NAN);
        if (sol.printed_norms[i] - 1.0).abs() > 1e-9 {
            norm_warnings.push(format!(
                "{}: printed norm {:.12} at theta={theta}, chi={:.12}",
                STATE_LABELS[i], sol.printed_norms[i], sol.chi
            ));
        }
        rows.push(TranscriptionRow {
            state: STATE_LABELS[i],
            printed_energy: e,
            printed_norm: sol.printed_norms[i],
            residual,
            rayleigh_quotient,
            nearest_numeric_energy: nearest,
            energy_delta: (nearest - e).abs(),
        });
    }
    Ok(TranscriptionReport { theta, phi, eta: coupling, gamma_plus, gamma_minus, rows, norm_warnings })
}

#[derive(Clone, Debug, Serialize)]
pub struct QuartetEnergyRow {
    pub state: &'static str,
    /// `None` where the printed `k²` is negative or undefined.
    pub printed_energy: Option<f64>,
    pub nearest_numeric_energy: Option<f64>,
    pub energy_delta: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuartetEnergyReport {
    pub eta: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub k_squared: Option<f64>,
    pub numeric_energies: Vec<f64>,
    pub rows: Vec<QuartetEnergyRow>,
    pub warnings: Vec<String>,
}

/// Printed spin-1 ⊗ spin-1/2 energy formulas next to the numerical spectrum.
pub fn quartet_energy_report(spec: &SystemSpec, theta: f64) -> Result<QuartetEnergyReport> {
    if ReferenceSystem::from_spec(spec)? != ReferenceSystem::SpinOneSpinHalf {
        return Err(Error::UnsupportedKind(spec.label()));
    }
    let SystemSpec::TwoMomenta { coupling: eta, g1, g2, b0, .. } = *spec else {
        unreachable!("checked above");
    };
    let gp = -b0 * (g1 + g2) / 2.0;
    let gm = -b0 * (g1 - g2) / 2.0;
    let numeric_energies = eig_hermitian(&SystemModel::new(spec)?.hamiltonian(theta, 0.0))?.values;

    let mut warnings = Vec::new();
    let denom = (gp + 5.0 * gm / 3.0) * (gp + gm / 3.0);
    let k_squared = if denom != 0.0 { Some((gp + 3.0 * gm) * (gp + gm) / denom) } else { None };
    let k = match k_squared {
        Some(k2) if k2 >= 0.0 => Some(k2.sqrt()),
        Some(k2) => {
            warnings.push(format!("k^2 = {k2:.6e} < 0 for gamma+={gp:.6e}, gamma-={gm:.6e}; k-dependent rows skipped"));
            None
        }
        None => {
            warnings.push(format!("k^2 undefined (zero denominator) for gamma+={gp:.6e}, gamma-={gm:.6e}"));
            None
        }
    };
    let stretched = 1.5 * gp + 0.5 * gm;
    let printed: [(&'static str, Option<f64>); 6] = [
        ("n1", Some(eta / 4.0 + stretched)),
        ("n2", Some(eta / 4.0 - stretched)),
        ("n3", k.map(|k| eta / 4.0 + (gp / 2.0 + gm / 6.0) * k)),
        ("n4", k.map(|k| eta / 4.0 - (gp / 2.0 + gm / 6.0) * k)),
        ("n5", k.map(|k| -eta + (gp / 2.0 + 5.0 * gm / 6.0) * k)),
        ("n6", k.map(|k| -eta - (gp / 2.0 + 5.0 * gm / 6.0) * k)),
    ];
    let rows = printed
        .iter()
        .map(|&(state, printed_energy)| {
            let nearest = printed_energy.and_then(|e| {
                numeric_energies.iter().copied().min_by(|a, b| (a - e).abs().total_cmp(&(b - e).abs()))
            });
            QuartetEnergyRow {
                state,
                printed_energy,
                nearest_numeric_energy: nearest,
                energy_delta: printed_energy.zip(nearest).map(|(p, n)| (p - n).abs()),
            }
        })
        .collect();
    Ok(QuartetEnergyReport { eta, gamma_plus: gp, gamma_minus: gm, k_squared, numeric_energies, rows, warnings })
}
