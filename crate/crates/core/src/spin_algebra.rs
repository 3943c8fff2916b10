//! Angular-momentum matrices for arbitrary `j`, product-space embeddings and
//! the coupled `|J, M>` basis.
//!
//! Single-spin bases are ordered `m = j, j-1, ..., -j`. Product spaces follow
//! the Kronecker convention of [`kron`], so slot 0 is the slowest index.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::operators::{kron, Operator, StateVector, C64};

/// A (signed) multiple of 1/2, stored as twice its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt {
    twice: i32,
}

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt { twice: 0 };
    pub const HALF: HalfInt = HalfInt { twice: 1 };
    pub const ONE: HalfInt = HalfInt { twice: 2 };
    pub const THREE_HALVES: HalfInt = HalfInt { twice: 3 };

    pub const fn from_twice(twice: i32) -> Self {
        HalfInt { twice }
    }

    /// `None` unless `2x` is within 1e-9 of an integer.
    pub fn from_f64(x: f64) -> Option<Self> {
        let t = (2.0 * x).round();
        if x.is_finite() && (2.0 * x - t).abs() <= 1e-9 && t.abs() < i32::MAX as f64 {
            Some(HalfInt { twice: t as i32 })
        } else {
            None
        }
    }

    /// Nearest multiple of 1/2 and the distance to it.
    pub fn nearest(x: f64) -> (Self, f64) {
        let t = (2.0 * x).round();
        let h = HalfInt { twice: t as i32 };
        (h, (x - h.value()).abs())
    }

    pub fn twice(self) -> i32 {
        self.twice
    }

    pub fn value(self) -> f64 {
        f64::from(self.twice) / 2.0
    }

    /// Number of states `2j + 1` for a nonnegative spin.
    pub fn multiplicity(self) -> usize {
        (self.twice + 1).max(0) as usize
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice % 2 == 0 {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

impl FromStr for HalfInt {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((num, den)) = s.split_once('/') {
            let num: i32 = num.trim().parse().map_err(|_| format!("bad half-integer '{s}'"))?;
            match den.trim() {
                "1" => Ok(HalfInt { twice: 2 * num }),
                "2" => Ok(HalfInt { twice: num }),
                _ => Err(format!("'{s}' is not a multiple of 1/2")),
            }
        } else {
            let x: f64 = s.parse().map_err(|_| format!("bad half-integer '{s}'"))?;
            HalfInt::from_f64(x).ok_or_else(|| format!("'{s}' is not a multiple of 1/2"))
        }
    }
}

impl Serialize for HalfInt {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for HalfInt {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(x) => HalfInt::from_f64(x)
                .ok_or_else(|| serde::de::Error::custom(format!("{x} is not a multiple of 1/2"))),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

fn check_spin(j: HalfInt) -> Result<()> {
    if j.twice < 0 {
        Err(Error::InvalidSpin(j.value()))
    } else {
        Ok(())
    }
}

/// Cartesian triple of operators on a common space.
#[derive(Clone, Debug)]
pub struct VectorOp {
    pub x: Operator,
    pub y: Operator,
    pub z: Operator,
}

impl VectorOp {
    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    /// `x sinθ cosφ + y sinθ sinφ + z cosθ`.
    pub fn along(&self, theta: f64, phi: f64) -> Operator {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let xy = &self.x.scale(st * cp) + &self.y.scale(st * sp);
        &xy + &self.z.scale(ct)
    }

    /// Scalar product `a·b = a_x b_x + a_y b_y + a_z b_z`.
    pub fn dot(&self, other: &VectorOp) -> Operator {
        let xy = &(&self.x * &other.x) + &(&self.y * &other.y);
        &xy + &(&self.z * &other.z)
    }

    pub fn squared(&self) -> Operator {
        self.dot(self)
    }

    pub fn plus(&self, other: &VectorOp) -> VectorOp {
        VectorOp { x: &self.x + &other.x, y: &self.y + &other.y, z: &self.z + &other.z }
    }

    pub fn minus(&self, other: &VectorOp) -> VectorOp {
        VectorOp { x: &self.x - &other.x, y: &self.y - &other.y, z: &self.z - &other.z }
    }

    pub fn scale(&self, s: f64) -> VectorOp {
        VectorOp { x: self.x.scale(s), y: self.y.scale(s), z: self.z.scale(s) }
    }

    /// Raising operator `x + i y`.
    pub fn raising(&self) -> Operator {
        &self.x + &self.y.scale_c(C64::new(0.0, 1.0))
    }

    /// Lowering operator `x - i y`.
    pub fn lowering(&self) -> Operator {
        &self.x - &self.y.scale_c(C64::new(0.0, 1.0))
    }

    /// Embeds each component into slot `slot` of a product space.
    pub fn embed(&self, slot: usize, dims: &[usize]) -> Result<VectorOp> {
        Ok(VectorOp {
            x: embed(&self.x, slot, dims)?,
            y: embed(&self.y, slot, dims)?,
            z: embed(&self.z, slot, dims)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SpinOps {
    pub j: HalfInt,
    pub jx: Operator,
    pub jy: Operator,
    pub jz: Operator,
    pub jplus: Operator,
    pub jminus: Operator,
}

impl SpinOps {
    pub fn dim(&self) -> usize {
        self.jz.dim()
    }

    pub fn vector(&self) -> VectorOp {
        VectorOp { x: self.jx.clone(), y: self.jy.clone(), z: self.jz.clone() }
    }

    /// `j(j+1)`.
    pub fn casimir_value(&self) -> f64 {
        let j = self.j.value();
        j * (j + 1.0)
    }
}

/// Ladder coefficient `sqrt(j(j+1) - m(m+1))` for `J+ |j m> `.
fn raise_coeff(j: f64, m: f64) -> f64 {
    (j * (j + 1.0) - m * (m + 1.0)).max(0.0).sqrt()
}

pub fn spin_ops(j: HalfInt) -> Result<SpinOps> {
    check_spin(j)?;
    let n = j.multiplicity();
    let jv = j.value();
    let m_of = |i: usize| jv - i as f64;

    let jz = Operator::diag(&(0..n).map(m_of).collect::<Vec<_>>());
    // J+ |m> = c |m+1>: column i (m) feeds row i-1 (m+1).
    let jplus = Operator::from_fn(n, |r, c| {
        if c >= 1 && r == c - 1 {
            C64::new(raise_coeff(jv, m_of(c)), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let jminus = jplus.adjoint();
    let jx = (&jplus + &jminus).scale(0.5);
    let jy = (&jplus - &jminus).scale_c(C64::new(0.0, -0.5));
    Ok(SpinOps { j, jx, jy, jz, jplus, jminus })
}

/// `op` placed in `slot` of the product space with factor dimensions `dims`.
pub fn embed(op: &Operator, slot: usize, dims: &[usize]) -> Result<Operator> {
    let expected = *dims.get(slot).ok_or(Error::DimMismatch { expected: dims.len(), found: slot })?;
    if op.dim() != expected {
        return Err(Error::DimMismatch { expected, found: op.dim() });
    }
    let left: usize = dims[..slot].iter().product();
    let right: usize = dims[slot + 1..].iter().product();
    let mut out = op.clone();
    if left > 1 {
        out = kron(&Operator::identity(left), &out);
    }
    if right > 1 {
        out = kron(&out, &Operator::identity(right));
    }
    Ok(out)
}

/// `J ⊗ J` field-axis projection `jx sinθ cosφ + jy sinθ sinφ + jz cosθ`.
pub fn axis_projection(ops: &SpinOps, theta: f64, phi: f64) -> Operator {
    ops.vector().along(theta, phi)
}

#[derive(Clone, Debug)]
pub struct CoupledBasis {
    pub j1: HalfInt,
    pub j2: HalfInt,
    /// Rows: coupled states in [`CoupledBasis::labels`] order; columns:
    /// uncoupled `|m1> ⊗ |m2>`.
    pub u: Operator,
    /// `(J, M)` for every row, J descending then M descending.
    pub labels: Vec<(HalfInt, HalfInt)>,
}

impl CoupledBasis {
    /// Coupled-basis matrix of an uncoupled-basis operator.
    pub fn to_coupled(&self, op: &Operator) -> Operator {
        op.conjugate_by(&self.u)
    }

    /// Uncoupled-basis amplitudes of the coupled state in row `row`.
    pub fn state(&self, row: usize) -> StateVector {
        self.u.matrix().row(row).adjoint()
    }

    pub fn row_of(&self, j: HalfInt, m: HalfInt) -> Option<usize> {
        self.labels.iter().position(|&l| l == (j, m))
    }
}

/// Clebsch–Gordan transform by highest-weight recursion plus repeated
/// lowering, Condon–Shortley phases (`<j1 j1; j2 J-j1 | J J> > 0`).
pub fn coupled_basis(j1: HalfInt, j2: HalfInt) -> Result<CoupledBasis> {
    check_spin(j1)?;
    check_spin(j2)?;
    let (n1, n2) = (j1.multiplicity(), j2.multiplicity());
    let dim = n1 * n2;
    let (a, b) = (j1.value(), j2.value());
    let index = |m1: f64, m2: f64| -> usize {
        let i1 = (a - m1).round() as usize;
        let i2 = (b - m2).round() as usize;
        i1 * n2 + i2
    };

    let s1 = spin_ops(j1)?;
    let s2 = spin_ops(j2)?;
    let lower = &embed(&s1.jminus, 0, &[n1, n2])? + &embed(&s2.jminus, 1, &[n1, n2])?;

    let mut rows: Vec<StateVector> = Vec::with_capacity(dim);
    let mut labels = Vec::with_capacity(dim);
    let mut big_j = j1.twice + j2.twice;
    let j_min = (j1.twice - j2.twice).abs();
    while big_j >= j_min {
        let jv = f64::from(big_j) / 2.0;
        // Highest weight: J+ annihilates sum_m1 c(m1) |m1, J-m1>, giving
        // c(m1) a(j1, m1) + c(m1+1) a(j2, J-m1-1) = 0.
        let mut hw = DVector::<C64>::zeros(dim);
        let mut coeff = 1.0;
        let mut m1 = a;
        loop {
            let m2 = jv - m1;
            if m2.abs() > b + 1e-9 || m1 < -a - 1e-9 {
                break;
            }
            hw[index(m1, m2)] = C64::new(coeff, 0.0);
            let m1_next = m1 - 1.0;
            let denom = raise_coeff(a, m1_next);
            if denom == 0.0 {
                break;
            }
            coeff = -coeff * raise_coeff(b, jv - m1_next - 1.0) / denom;
            m1 = m1_next;
        }
        let norm = hw.norm();
        let mut state = hw / C64::new(norm, 0.0);

        let mut m = big_j;
        loop {
            labels.push((HalfInt::from_twice(big_j), HalfInt::from_twice(m)));
            rows.push(state.clone());
            if m == -big_j {
                break;
            }
            let mv = f64::from(m) / 2.0;
            let c = (jv * (jv + 1.0) - mv * (mv - 1.0)).sqrt();
            state = lower.apply(&state) / C64::new(c, 0.0);
            m -= 2;
        }
        big_j -= 2;
    }

    // Rows hold <J M|m1 m2> = conj of the column amplitudes.
    let u = Operator::from_fn(dim, |r, c| rows[r][c].conj());
    Ok(CoupledBasis { j1, j2, u, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::eig_hermitian;

    fn h(s: &str) -> HalfInt {
        s.parse().unwrap()
    }

    fn assert_spin_invariants(ops: &SpinOps) {
        let i = C64::new(0.0, 1.0);
        let n = ops.dim();
        assert!(ops.jx.commutator(&ops.jy).max_abs_diff(&ops.jz.scale_c(i)) <= 1e-12);
        assert!(ops.jy.commutator(&ops.jz).max_abs_diff(&ops.jx.scale_c(i)) <= 1e-12);
        assert!(ops.jz.commutator(&ops.jx).max_abs_diff(&ops.jy.scale_c(i)) <= 1e-12);
        let casimir = ops.vector().squared();
        assert!(casimir.max_abs_diff(&Operator::identity(n).scale(ops.casimir_value())) <= 1e-12);
        assert!(ops.jminus.max_abs_diff(&ops.jplus.adjoint()) == 0.0);
        let jp = &ops.jx + &ops.jy.scale_c(i);
        assert!(jp.max_abs_diff(&ops.jplus) <= 1e-15);
    }

    #[test]
    fn half_int_parsing_and_display() {
        assert_eq!(h("3/2").twice(), 3);
        assert_eq!(h("1.5").twice(), 3);
        assert_eq!(h("-1/2").twice(), -1);
        assert_eq!(h("2").twice(), 4);
        assert!("0.3".parse::<HalfInt>().is_err());
        assert!("1/3".parse::<HalfInt>().is_err());
        assert_eq!(HalfInt::from_twice(-3).to_string(), "-3/2");
        assert_eq!(HalfInt::from_twice(4).to_string(), "2");
        let json = serde_json::to_string(&HalfInt::from_twice(3)).unwrap();
        assert_eq!(json, "1.5");
        let back: HalfInt = serde_json::from_str("\"3/2\"").unwrap();
        assert_eq!(back, HalfInt::THREE_HALVES);
    }

    #[test]
    fn spin_half_is_pauli_over_two() {
        let s = spin_ops(HalfInt::HALF).unwrap();
        assert_eq!(s.jz, Operator::diag(&[0.5, -0.5]));
        assert_eq!(s.jplus.get(0, 1), C64::new(1.0, 0.0));
        let nonzero = s.jplus.matrix().iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 1);
        assert_spin_invariants(&s);
    }

    #[test]
    fn spin_one_ladder() {
        let s = spin_ops(HalfInt::ONE).unwrap();
        let r2 = 2f64.sqrt();
        assert!((s.jplus.get(0, 1).re - r2).abs() < 1e-15);
        assert!((s.jplus.get(1, 2).re - r2).abs() < 1e-15);
        assert_spin_invariants(&s);
    }

    #[test]
    fn larger_spins_satisfy_algebra() {
        for twice in 0..=7 {
            let s = spin_ops(HalfInt::from_twice(twice)).unwrap();
            assert_eq!(s.dim(), twice as usize + 1);
            assert_spin_invariants(&s);
        }
    }

    #[test]
    fn negative_spin_rejected() {
        assert!(matches!(spin_ops(HalfInt::from_twice(-1)), Err(Error::InvalidSpin(_))));
    }

    #[test]
    fn embed_places_factor() {
        let s = spin_ops(HalfInt::HALF).unwrap();
        let e = embed(&s.jz, 0, &[2, 2]).unwrap();
        assert_eq!(e, Operator::diag(&[0.5, 0.5, -0.5, -0.5]));
        let e1 = embed(&s.jz, 1, &[2, 2]).unwrap();
        assert_eq!(e1, Operator::diag(&[0.5, -0.5, 0.5, -0.5]));
        for slot in 0..3 {
            let dims = [2, 3, 2];
            let id = embed(&Operator::identity(dims[slot]), slot, &dims).unwrap();
            assert_eq!(id, Operator::identity(12));
        }
        assert!(matches!(embed(&s.jz, 1, &[2, 3]), Err(Error::DimMismatch { .. })));
        assert!(matches!(embed(&s.jz, 2, &[2, 2]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn embedded_factors_commute() {
        let a = spin_ops(HalfInt::ONE).unwrap();
        let b = spin_ops(HalfInt::THREE_HALVES).unwrap();
        let dims = [3, 4];
        for x in [&a.jx, &a.jy, &a.jplus] {
            for y in [&b.jx, &b.jz, &b.jminus] {
                let ex = embed(x, 0, &dims).unwrap();
                let ey = embed(y, 1, &dims).unwrap();
                assert!(ex.commutator(&ey).max_norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn singlet_row() {
        let cb = coupled_basis(HalfInt::HALF, HalfInt::HALF).unwrap();
        let row = cb.row_of(HalfInt::ZERO, HalfInt::ZERO).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let want = [0.0, r, -r, 0.0];
        for (c, w) in want.iter().enumerate() {
            assert!((cb.u.get(row, c) - C64::new(*w, 0.0)).norm() < 1e-14);
        }
        assert_eq!(cb.labels[0], (HalfInt::ONE, HalfInt::ONE));
        assert_eq!(cb.labels[3], (HalfInt::ZERO, HalfInt::ZERO));
    }

    #[test]
    fn stretched_quartet_state() {
        let cb = coupled_basis(HalfInt::ONE, HalfInt::HALF).unwrap();
        let row = cb.row_of(HalfInt::THREE_HALVES, HalfInt::THREE_HALVES).unwrap();
        assert_eq!(row, 0);
        assert!((cb.u.get(0, 0) - C64::new(1.0, 0.0)).norm() < 1e-15);
        for c in 1..6 {
            assert!(cb.u.get(0, c).norm() < 1e-15);
        }
        // |1/2 1/2> = sqrt(2/3)|1,-1/2> - sqrt(1/3)|0,1/2>
        let d = cb.row_of(HalfInt::HALF, HalfInt::HALF).unwrap();
        assert!((cb.u.get(d, 1).re - (2.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!((cb.u.get(d, 2).re + (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
    }

    /// The transform diagonalises S^2 and S_z with the advertised labels,
    /// checked against an independent diagonalisation of S^2.
    fn check_coupled(j1: HalfInt, j2: HalfInt) {
        let cb = coupled_basis(j1, j2).unwrap();
        let dims = [j1.multiplicity(), j2.multiplicity()];
        let total = spin_ops(j1)
            .unwrap()
            .vector()
            .embed(0, &dims)
            .unwrap()
            .plus(&spin_ops(j2).unwrap().vector().embed(1, &dims).unwrap());
        assert!(cb.u.unitarity_deviation() <= 1e-10);
        let jj = cb.to_coupled(&total.squared());
        let mz = cb.to_coupled(&total.z);
        let jvals: Vec<f64> = cb.labels.iter().map(|(j, _)| j.value() * (j.value() + 1.0)).collect();
        let mvals: Vec<f64> = cb.labels.iter().map(|(_, m)| m.value()).collect();
        assert!(jj.max_abs_diff(&Operator::diag(&jvals)) <= 1e-10);
        assert!(mz.max_abs_diff(&Operator::diag(&mvals)) <= 1e-10);

        let mut spectrum = eig_hermitian(&total.squared()).unwrap().values;
        let mut want = jvals.clone();
        want.sort_by(f64::total_cmp);
        spectrum.sort_by(f64::total_cmp);
        for (a, b) in spectrum.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }

        // Clebsch–Gordan series |j1-j2| ..= j1+j2.
        let mut js: Vec<i32> = cb.labels.iter().map(|(j, _)| j.twice()).collect();
        js.dedup();
        let series: Vec<i32> = ((j1.twice() - j2.twice()).abs()..=j1.twice() + j2.twice())
            .rev()
            .step_by(2)
            .collect();
        assert_eq!(js, series);
        assert_eq!(cb.labels.len(), dims[0] * dims[1]);
    }

    #[test]
    fn coupled_basis_diagonalises_total_spin() {
        for (a, b) in [(1, 1), (2, 1), (1, 2), (3, 2), (3, 3), (4, 3), (0, 2)] {
            check_coupled(HalfInt::from_twice(a), HalfInt::from_twice(b));
        }
    }

    #[test]
    fn hyperfine_split_in_coupled_basis() {
        let s = spin_ops(HalfInt::HALF).unwrap().vector();
        let s1 = s.embed(0, &[2, 2]).unwrap();
        let s2 = s.embed(1, &[2, 2]).unwrap();
        let cb = coupled_basis(HalfInt::HALF, HalfInt::HALF).unwrap();
        let hf = cb.to_coupled(&s1.dot(&s2));
        assert!(hf.max_abs_diff(&Operator::diag(&[0.25, 0.25, 0.25, -0.75])) <= 1e-12);
    }

    #[test]
    fn axis_projection_limits() {
        let s = spin_ops(HalfInt::ONE).unwrap();
        assert!(axis_projection(&s, 0.0, 0.8).max_abs_diff(&s.jz) == 0.0);
        let eq = axis_projection(&s, std::f64::consts::FRAC_PI_2, 0.0);
        assert!(eq.max_abs_diff(&s.jx) < 1e-16);
        let gen = axis_projection(&s, std::f64::consts::FRAC_PI_3, 1.1);
        let vals = eig_hermitian(&gen).unwrap().values;
        for (v, w) in vals.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((v - w).abs() <= 1e-12);
        }
        assert!(gen.is_hermitian());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn axis_projection_has_jz_spectrum(twice in 0i32..8, theta in 0.0f64..std::f64::consts::PI, phi in -7.0f64..7.0) {
                let s = spin_ops(HalfInt::from_twice(twice)).unwrap();
                let vals = eig_hermitian(&axis_projection(&s, theta, phi)).unwrap().values;
                let j = f64::from(twice) / 2.0;
                for (k, v) in vals.iter().enumerate() {
                    prop_assert!((v - (-j + k as f64)).abs() <= 1e-12);
                }
            }

            #[test]
            fn half_int_display_round_trips(twice in -40i32..40) {
                let h = HalfInt::from_twice(twice);
                prop_assert_eq!(h.to_string().parse::<HalfInt>().unwrap(), h);
            }
        }
    }
}
