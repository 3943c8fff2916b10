//! Band tracking around the field loop and extraction of geometric phases.
//!
//! Eigenframes are computed independently at every loop sample, grouped into
//! degenerate blocks, and then gauge-fixed by discrete parallel transport: the
//! frame at sample `k+1` is rotated by the unitary polar factor of its overlap
//! with frame `k`, which makes every consecutive overlap Hermitian positive.
//! The whole geometric content is then carried by the closing overlap between
//! the last sample and sample 0.
//!
//! A closed loop only fixes an abelian phase modulo 2π. To report the
//! unwrapped value (e.g. `-2π(1-cosθ)` for `θ > π/2`) every nondegenerate band
//! also carries a reference obtained by opening the cone from `θ = 0`, where
//! the loop is trivial, in steps small enough that the phase cannot jump by
//! more than π between steps. The fine-loop phase is taken on the branch
//! closest to that reference.

use std::f64::consts::{PI, TAU};
use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operators::{eig_hermitian, polar_unitary, unitary_eigenvalues, Frame, Operator, StateVector, C64};
use crate::spin_algebra::HalfInt;
use crate::systems::{loop_samples, FieldLoop, SystemModel, SystemSpec};

/// Relative eigenvalue tolerance for grouping levels into a degenerate block.
pub const DEG_TOL: f64 = 1e-8;
/// Smallest admissible singular value of a consecutive block overlap.
pub const MIN_OVERLAP: f64 = 0.9;
pub const DEFAULT_SAMPLES: usize = 2048;
pub const ACCEPTANCE_SAMPLES: usize = 4096;

const PROJECTION_TOL: f64 = 1e-6;
const REFERENCE_SAMPLES: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct TrackOptions {
    /// Split degenerate energy blocks into eigenspaces of the total
    /// axis projection `S_z'`.
    pub split_by_projection: bool,
    /// Compute the θ-continuation reference used for unwrapping.
    pub unwrap_reference: bool,
}

impl TrackOptions {
    /// Magnetic systems split by `S_z'`: a degeneracy there (e.g. `g1 = -g2`)
    /// is between different `m'` and carries no non-abelian structure. The
    /// quadrupole keeps its `±m` blocks whole.
    pub fn for_spec(spec: &SystemSpec) -> Self {
        TrackOptions { split_by_projection: !spec.is_quadrupole(), unwrap_reference: true }
    }
}

/// A set of bands transported together.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    /// Indices (into the ascending spectrum) of the degenerate energy level.
    pub levels: Range<usize>,
    pub dim: usize,
    /// Shared `S_z'` eigenvalue when the block came from a projection split.
    pub projection: Option<f64>,
}

impl Block {
    fn same_structure(&self, other: &Block) -> bool {
        self.levels == other.levels
            && self.dim == other.dim
            && match (self.projection, other.projection) {
                (None, None) => true,
                (Some(a), Some(b)) => (a - b).abs() <= PROJECTION_TOL,
                _ => false,
            }
    }
}

#[derive(Clone, Debug)]
pub struct LoopSpectrum {
    pub spec: SystemSpec,
    pub field_loop: FieldLoop,
    /// Ascending eigenvalues at each of the `n_samples` loop samples.
    pub energies: Vec<Vec<f64>>,
    pub blocks: Vec<Block>,
    /// `frames[k][b]`: orthonormal columns spanning block `b` at sample `k`,
    /// parallel-transported from sample 0.
    pub frames: Vec<Vec<Frame>>,
    /// Per block, the continuation estimate of the unwrapped phase
    /// (nondegenerate blocks only).
    pub unwrap_reference: Vec<Option<f64>>,
}

/// Groups ascending `values` into runs whose neighbours differ by at most `tol`.
fn cluster_levels(values: &[f64], tol: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        if k == values.len() || values[k] - values[k - 1] > tol {
            out.push(start..k);
            start = k;
        }
    }
    out
}

fn degeneracy_tolerance(values: &[f64]) -> f64 {
    let range = values.last().copied().unwrap_or(0.0) - values.first().copied().unwrap_or(0.0);
    DEG_TOL * range.max(1.0)
}

/// Eigen-decomposition at one field direction, grouped into blocks.
pub(crate) fn instantaneous_blocks(
    model: &SystemModel,
    theta: f64,
    phi: f64,
    opts: &TrackOptions,
) -> Result<(Vec<f64>, Vec<Block>, Vec<Frame>)> {
    let eig = eig_hermitian(&model.hamiltonian(theta, phi))?;
    let tol = degeneracy_tolerance(&eig.values);
    let mut blocks = Vec::new();
    let mut frames = Vec::new();
    let projection = opts.split_by_projection.then(|| model.axis_projection(theta, phi));
    for levels in cluster_levels(&eig.values, tol) {
        let frame = eig.frame(levels.clone());
        match &projection {
            Some(sz) if levels.len() > 1 => {
                let local = eig_hermitian(&Operator::from_matrix(sz.project(&frame)))?;
                for group in cluster_levels(&local.values, PROJECTION_TOL) {
                    let m = local.values[group.clone()].iter().sum::<f64>() / group.len() as f64;
                    blocks.push(Block { levels: levels.clone(), dim: group.len(), projection: Some(m) });
                    frames.push(&frame * local.frame(group));
                }
            }
            _ => {
                blocks.push(Block { levels: levels.clone(), dim: levels.len(), projection: None });
                frames.push(frame);
            }
        }
    }
    Ok((eig.values, blocks, frames))
}

pub fn track_bands(spec: &SystemSpec, field_loop: &FieldLoop) -> Result<LoopSpectrum> {
    track_bands_with(spec, field_loop, &TrackOptions::for_spec(spec))
}

pub fn track_bands_with(spec: &SystemSpec, field_loop: &FieldLoop, opts: &TrackOptions) -> Result<LoopSpectrum> {
    let model = SystemModel::new(spec)?;
    let mut ls = track_model(&model, field_loop, opts)?;
    if opts.unwrap_reference {
        ls.unwrap_reference = continuation_references(&model, &ls, opts)?;
    }
    Ok(ls)
}

fn track_model(model: &SystemModel, field_loop: &FieldLoop, opts: &TrackOptions) -> Result<LoopSpectrum> {
    let n = field_loop.n_samples;
    let theta = field_loop.theta;
    let mut energies = Vec::with_capacity(n);
    let mut raw = Vec::with_capacity(n);
    let mut blocks: Vec<Block> = Vec::new();
    for k in 0..n {
        let (values, blocks_k, frames_k) = instantaneous_blocks(model, theta, field_loop.angle(k), opts)?;
        if k == 0 {
            blocks = blocks_k;
        } else if blocks.len() != blocks_k.len() || !blocks.iter().zip(&blocks_k).all(|(a, b)| a.same_structure(b)) {
            return Err(Error::BlockInstability { sample: k });
        }
        energies.push(values);
        raw.push(frames_k);
    }
    LoopSpectrum::from_frames(model.spec().clone(), field_loop.clone(), energies, blocks, raw)
}

impl LoopSpectrum {
    /// Builds a spectrum from arbitrary-gauge frames, applying parallel
    /// transport. References are left empty.
    pub fn from_frames(
        spec: SystemSpec,
        field_loop: FieldLoop,
        energies: Vec<Vec<f64>>,
        blocks: Vec<Block>,
        mut frames: Vec<Vec<Frame>>,
    ) -> Result<LoopSpectrum> {
        let n = frames.len();
        for b in 0..blocks.len() {
            for k in 1..n {
                let overlap = frames[k - 1][b].adjoint() * &frames[k][b];
                let (w, sv) = polar_unitary(&overlap)?;
                let smallest = sv.last().copied().unwrap_or(0.0);
                if smallest < MIN_OVERLAP {
                    return Err(Error::TrackingFailure { sample: k, overlap: smallest });
                }
                frames[k][b] = &frames[k][b] * w.adjoint();
            }
            let closing = frames[n - 1][b].adjoint() * &frames[0][b];
            let (_, sv) = polar_unitary(&closing)?;
            let smallest = sv.last().copied().unwrap_or(0.0);
            if smallest < MIN_OVERLAP {
                return Err(Error::TrackingFailure { sample: n, overlap: smallest });
            }
        }
        let unwrap_reference = vec![None; blocks.len()];
        Ok(LoopSpectrum { spec, field_loop, energies, blocks, frames, unwrap_reference })
    }

    pub fn n_samples(&self) -> usize {
        self.frames.len()
    }

    pub fn theta(&self) -> f64 {
        self.field_loop.theta
    }

    /// Energy of block `b` at sample 0.
    pub fn block_energy(&self, b: usize) -> f64 {
        let levels = self.blocks[b].levels.clone();
        let len = levels.len() as f64;
        self.energies[0][levels].iter().sum::<f64>() / len
    }

    /// Indices of nondegenerate (1-dim) blocks.
    pub fn bands(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().enumerate().filter(|(_, b)| b.dim == 1).map(|(i, _)| i)
    }

    /// Indices of blocks of dimension ≥ 2.
    pub fn degenerate_blocks(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().enumerate().filter(|(_, b)| b.dim > 1).map(|(i, _)| i)
    }

    fn block(&self, b: usize) -> Result<&Block> {
        self.blocks.get(b).ok_or(Error::NoSuchBand(b))
    }

    /// Ordered product of overlaps `F_k^† F_{k+stride}` around the loop,
    /// closing onto sample 0.
    fn loop_product(&self, b: usize, stride: usize) -> DMatrix<C64> {
        let n = self.n_samples();
        let dim = self.blocks[b].dim;
        let mut acc = DMatrix::<C64>::identity(dim, dim);
        let mut k = 0;
        while k < n {
            let next = (k + stride) % n;
            acc = acc * (self.frames[k][b].adjoint() * &self.frames[next][b]);
            k += stride;
        }
        acc
    }

    fn principal_phase(&self, b: usize, stride: usize) -> f64 {
        -self.loop_product(b, stride)[(0, 0)].arg()
    }

    fn reference_or(&self, b: usize, fallback: f64) -> f64 {
        self.unwrap_reference[b].unwrap_or(fallback)
    }

    /// Sample-0 eigenvector of a nondegenerate band.
    pub fn band_vector(&self, band: usize) -> Result<StateVector> {
        let block = self.block(band)?;
        if block.dim != 1 {
            return Err(Error::DegenerateBand { band, dim: block.dim });
        }
        Ok(self.frames[0][band].column(0).into_owned())
    }
}

/// Moves `phase` by a multiple of 2π to the representative closest to
/// `reference`.
pub fn unwrap_toward(phase: f64, reference: f64) -> f64 {
    phase + TAU * ((reference - phase) / TAU).round()
}

/// Reduces an angle to `(-π, π]`.
pub fn reduce_phase(x: f64) -> f64 {
    let r = x - TAU * ((x - PI) / TAU).ceil();
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

/// Distance between two angles on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    reduce_phase(a - b).abs()
}

/// Discrete Wilson-loop phase `-arg Π <v_k|v_{k+stride}>` of a nondegenerate
/// band, on the branch selected by the unwrapping reference. No
/// extrapolation.
pub fn wilson_loop_phase(ls: &LoopSpectrum, band: usize, stride: usize) -> Result<f64> {
    let block = ls.block(band)?;
    if block.dim != 1 {
        return Err(Error::DegenerateBand { band, dim: block.dim });
    }
    let n = ls.n_samples();
    if stride == 0 || n % stride != 0 {
        return Err(Error::InvalidSpec(format!("stride {stride} does not divide {n} samples")));
    }
    let p = ls.principal_phase(band, stride);
    Ok(unwrap_toward(p, ls.reference_or(band, p)))
}

/// Unwrapped Berry phase of a nondegenerate band.
///
/// The discrete loop phase carries an `O(1/N²)` error with only even powers
/// of `1/N`, so when the sample count is even the full loop and its
/// every-other-sample subloop are combined by one Richardson step.
pub fn berry_phase_band(ls: &LoopSpectrum, band: usize) -> Result<f64> {
    let fine = wilson_loop_phase(ls, band, 1)?;
    let n = ls.n_samples();
    if n % 2 != 0 || n < 16 {
        return Ok(fine);
    }
    let coarse = unwrap_toward(ls.principal_phase(band, 2), fine);
    Ok((4.0 * fine - coarse) / 3.0)
}

#[derive(Clone, Debug)]
pub struct Holonomy {
    /// Unitary acquired by the block, acting on coefficients in the sample-0
    /// frame.
    pub matrix: Operator,
    /// Arguments of the eigenvalues in `(-π, π]`, ascending; defined mod 2π.
    pub eigenphases: Vec<f64>,
}

/// Ordered product of unitary polar factors of the overlaps
/// `F_k^† F_{k+stride}` around the loop.
fn transport_product(ls: &LoopSpectrum, block: usize, stride: usize) -> Result<DMatrix<C64>> {
    let n = ls.n_samples();
    let dim = ls.blocks[block].dim;
    let mut product = DMatrix::<C64>::identity(dim, dim);
    let mut k = 0;
    while k < n {
        let next = (k + stride) % n;
        let overlap = ls.frames[k][block].adjoint() * &ls.frames[next][block];
        let (w, sv) = polar_unitary(&overlap)?;
        let smallest = sv.last().copied().unwrap_or(0.0);
        if smallest < MIN_OVERLAP {
            return Err(Error::TrackingFailure { sample: next, overlap: smallest });
        }
        product *= w;
        k += stride;
    }
    Ok(product)
}

fn sorted_eigenphases(u: &DMatrix<C64>) -> Result<Vec<f64>> {
    let mut phases: Vec<f64> = unitary_eigenvalues(u)?.iter().map(|z| reduce_phase(z.arg())).collect();
    phases.sort_by(f64::total_cmp);
    Ok(phases)
}

/// Wilczek–Zee holonomy of a block (any dimension; for a 1-dim band this is
/// `exp(iγ)`).
///
/// The ordered product of unitary polar factors of consecutive overlaps
/// `F_k^† F_{k+1}` maps the sample-0 frame onto the frame transported back
/// to sample 0; the holonomy is its adjoint. With parallel-transported frames
/// only the closing factor differs from the identity.
///
/// The eigenphases get the same Richardson step as [`berry_phase_band`]:
/// each is combined with the nearest eigenphase of the every-other-sample
/// product. The matrix itself is the plain fine-loop product.
pub fn wz_holonomy(ls: &LoopSpectrum, block: usize) -> Result<Holonomy> {
    ls.block(block)?;
    let n = ls.n_samples();
    let matrix = transport_product(ls, block, 1)?.adjoint();
    let mut eigenphases = sorted_eigenphases(&matrix)?;
    if n % 2 == 0 && n >= 16 {
        let coarse = sorted_eigenphases(&transport_product(ls, block, 2)?.adjoint())?;
        let mut used = vec![false; coarse.len()];
        for e in eigenphases.iter_mut() {
            let j = (0..coarse.len())
                .filter(|&j| !used[j])
                .min_by(|&a, &b| circular_distance(*e, coarse[a]).total_cmp(&circular_distance(*e, coarse[b])))
                .expect("coarse and fine products have the same dimension");
            used[j] = true;
            let c = unwrap_toward(coarse[j], *e);
            *e = reduce_phase((4.0 * *e - c) / 3.0);
        }
        eigenphases.sort_by(f64::total_cmp);
    }
    Ok(Holonomy { matrix: Operator::from_matrix(matrix), eigenphases })
}

/// Solid angle `2π(1 - cosθ)` of the cone.
pub fn solid_angle(theta: f64) -> f64 {
    TAU * (1.0 - theta.cos())
}

/// `-m Ω(θ)`.
pub fn predicted_phase(m: HalfInt, theta: f64) -> f64 {
    -m.value() * solid_angle(theta)
}

/// Projection `m'` of a nondegenerate band on the field axis at sample 0.
pub fn m_label(ls: &LoopSpectrum, band: usize) -> Result<HalfInt> {
    let v = ls.band_vector(band)?;
    let model = SystemModel::new(&ls.spec)?;
    let sz = model.axis_projection(ls.theta(), ls.field_loop.angle(0));
    let value = sz.expectation(&v).re;
    let (m, err) = HalfInt::nearest(value);
    if err > PROJECTION_TOL {
        return Err(Error::NotProjectionEigenstate { band, value });
    }
    Ok(m)
}

/// `S_z'` eigenvalues inside a block at sample 0, ascending.
pub fn block_projection_labels(ls: &LoopSpectrum, block: usize) -> Result<Vec<HalfInt>> {
    ls.block(block)?;
    let model = SystemModel::new(&ls.spec)?;
    let sz = model.axis_projection(ls.theta(), ls.field_loop.angle(0));
    let local = eig_hermitian(&Operator::from_matrix(sz.project(&ls.frames[0][block])))?;
    local
        .values
        .iter()
        .map(|&value| {
            let (m, err) = HalfInt::nearest(value);
            if err > PROJECTION_TOL {
                Err(Error::NotProjectionEigenstate { band: block, value })
            } else {
                Ok(m)
            }
        })
        .collect()
}

/// Opens the cone from θ = 0 to the target θ, unwrapping the coarse loop
/// phase of every nondegenerate band at each step against the previous step.
fn continuation_references(model: &SystemModel, target: &LoopSpectrum, opts: &TrackOptions) -> Result<Vec<Option<f64>>> {
    let theta = target.theta();
    let mut refs = vec![None; target.blocks.len()];
    if target.bands().next().is_none() {
        return Ok(refs);
    }
    if theta == 0.0 {
        for b in target.bands() {
            refs[b] = Some(0.0);
        }
        return Ok(refs);
    }
    let coarse_opts = TrackOptions { unwrap_reference: false, ..opts.clone() };
    // Per step the phase of a band with projection m moves by at most
    // 2π|m| Δθ; |m| <= (dim - 1)/2 keeps that below π/2.
    let steps = ((theta * 2.0 * model.dim() as f64).ceil() as usize).max(4);
    // Consecutive overlaps fall like cos(Δφ σ) with σ <= max|J_z|; keep
    // Δφ σ <= 1/4.
    let j_max = model.total_momentum().z.max_norm();
    let samples = REFERENCE_SAMPLES.max((TAU * j_max * 4.0).ceil() as usize);

    let mut prev: Vec<(StateVector, f64)> = Vec::new();
    for i in 1..=steps {
        let th = theta * i as f64 / steps as f64;
        let mut coarse_loop = loop_samples(th, samples)?;
        coarse_loop.reversed = target.field_loop.reversed;
        let ls = track_model(model, &coarse_loop, &coarse_opts)?;
        let mut current = Vec::new();
        for b in ls.bands() {
            let v = ls.band_vector(b)?;
            let p = ls.principal_phase(b, 1);
            let reference = if i == 1 { 0.0 } else { best_match(&prev, &v)?.1 };
            current.push((v, unwrap_toward(p, reference)));
        }
        prev = current;
    }
    for b in target.bands() {
        let v = target.band_vector(b)?;
        refs[b] = Some(best_match(&prev, &v)?.1);
    }
    Ok(refs)
}

fn best_match<'a>(candidates: &'a [(StateVector, f64)], v: &StateVector) -> Result<&'a (StateVector, f64)> {
    let (best, overlap) = candidates
        .iter()
        .map(|c| (c, c.0.dotc(v).norm()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(Error::TrackingFailure { sample: 0, overlap: 0.0 })?;
    if overlap < 0.5 {
        return Err(Error::TrackingFailure { sample: 0, overlap });
    }
    Ok(best)
}
