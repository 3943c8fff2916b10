//! Brute-force Schrödinger evolution over one drive period.
//!
//! The field azimuth advances as `φ = ωt`. Each step applies the exact
//! propagator of the Hamiltonian frozen at the step midpoint, so the state
//! norm is preserved to round-off. After one period `T = 2π/ω` the overlap
//! with the initial eigenvector is `exp(iγ - iE T)` up to nonadiabatic
//! corrections of order `ω/gap`.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::berry_engine::{instantaneous_blocks, reduce_phase, TrackOptions, DEFAULT_SAMPLES};
use crate::error::{Error, Result};
use crate::operators::{step_propagator, StateVector, C64};
use crate::systems::{SystemModel, SystemSpec};

pub const MIN_STEPS: usize = 1000;
pub const DEFAULT_STEPS: usize = 20 * DEFAULT_SAMPLES;
/// Default drive frequency is the band gap divided by this.
pub const DEFAULT_SLOWNESS: f64 = 500.0;
pub const MIN_ADIABATIC_OVERLAP: f64 = 0.99;

const GAP_PROBES: usize = 8;

#[derive(Clone, Debug, Serialize)]
pub struct EvolutionRun {
    pub spec: SystemSpec,
    pub theta: f64,
    pub omega: f64,
    pub n_steps: usize,
    pub initial_band: usize,
    #[serde(skip)]
    pub initial_state: StateVector,
    #[serde(skip)]
    pub final_state: StateVector,
    /// `<n(0)|ψ(T)>`.
    #[serde(serialize_with = "serialize_complex")]
    pub overlap: C64,
    pub energy: f64,
    pub max_norm_drift: f64,
}

fn serialize_complex<S: serde::Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

impl EvolutionRun {
    pub fn period(&self) -> f64 {
        TAU / self.omega
    }

    pub fn is_adiabatic(&self) -> bool {
        self.overlap.norm() >= MIN_ADIABATIC_OVERLAP
    }

    /// `1 - |<n(0)|ψ(T)>|`.
    pub fn infidelity(&self) -> f64 {
        1.0 - self.overlap.norm()
    }
}

/// Initial eigenvector, energy and level range of a nondegenerate band at φ = 0.
fn band_at_start(model: &SystemModel, theta: f64, band: usize) -> Result<(StateVector, f64)> {
    let opts = TrackOptions::for_spec(model.spec());
    let (values, blocks, frames) = instantaneous_blocks(model, theta, 0.0, &opts)?;
    let block = blocks.get(band).ok_or(Error::NoSuchBand(band))?;
    if block.dim != 1 {
        return Err(Error::DegenerateBand { band, dim: block.dim });
    }
    Ok((frames[band].column(0).into_owned(), values[block.levels.start]))
}

/// Smallest distance from the band's level to any other level, over a few
/// azimuths. Levels degenerate with the band itself (projection-split
/// partners) do not count.
pub fn band_gap(spec: &SystemSpec, theta: f64, band: usize) -> Result<f64> {
    let model = SystemModel::new(spec)?;
    let opts = TrackOptions::for_spec(spec);
    let mut gap = f64::INFINITY;
    for p in 0..GAP_PROBES {
        let phi = TAU * p as f64 / GAP_PROBES as f64;
        let (values, blocks, _) = instantaneous_blocks(&model, theta, phi, &opts)?;
        let block = blocks.get(band).ok_or(Error::NoSuchBand(band))?;
        let e = values[block.levels.start];
        for (i, v) in values.iter().enumerate() {
            if !block.levels.contains(&i) {
                gap = gap.min((v - e).abs());
            }
        }
    }
    if !gap.is_finite() || gap <= 0.0 {
        return Err(Error::InvalidSpec(format!("band {band} has no spectral gap")));
    }
    Ok(gap)
}

pub fn default_omega(spec: &SystemSpec, theta: f64, band: usize) -> Result<f64> {
    Ok(band_gap(spec, theta, band)? / DEFAULT_SLOWNESS)
}

/// Evolves the band's eigenvector once around the loop without judging
/// adiabaticity.
pub fn evolve_loop_unchecked(
    spec: &SystemSpec,
    theta: f64,
    omega: f64,
    n_steps: usize,
    initial_band: usize,
) -> Result<EvolutionRun> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidSpec(format!("omega must be positive, got {omega}")));
    }
    if n_steps < MIN_STEPS {
        return Err(Error::InvalidSpec(format!("need at least {MIN_STEPS} time steps, got {n_steps}")));
    }
    let model = SystemModel::new(spec)?;
    let (initial_state, energy) = band_at_start(&model, theta, initial_band)?;

    let period = TAU / omega;
    let dt = period / n_steps as f64;
    let mut psi = initial_state.clone();
    let mut max_norm_drift = 0.0_f64;
    for k in 0..n_steps {
        let phi = omega * (k as f64 + 0.5) * dt;
        let u = step_propagator(&model.hamiltonian(theta, phi), dt)?;
        psi = u.apply(&psi);
        max_norm_drift = max_norm_drift.max((psi.norm() - 1.0).abs());
    }
    let overlap = initial_state.dotc(&psi);
    Ok(EvolutionRun {
        spec: spec.clone(),
        theta,
        omega,
        n_steps,
        initial_band,
        initial_state,
        final_state: psi,
        overlap,
        energy,
        max_norm_drift,
    })
}

/// Like [`evolve_loop_unchecked`], failing with `NonAdiabatic` when the state
/// did not return to its band.
pub fn evolve_loop(spec: &SystemSpec, theta: f64, omega: f64, n_steps: usize, initial_band: usize) -> Result<EvolutionRun> {
    let run = evolve_loop_unchecked(spec, theta, omega, n_steps, initial_band)?;
    if !run.is_adiabatic() {
        return Err(Error::NonAdiabatic { overlap: run.overlap.norm() });
    }
    Ok(run)
}

/// `arg<n(0)|ψ(T)> + E T`, reduced to `(-π, π]`.
pub fn extract_geometric_phase(run: &EvolutionRun) -> f64 {
    reduce_phase(run.overlap.arg() + reduce_phase(run.energy * run.period()))
}
