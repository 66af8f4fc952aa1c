//! Finite signal sets and joint symbol-vector enumeration.
//!
//! Every constellation is normalized to unit average energy so the precoder
//! trace constraint carries the entire power budget. Joint vectors over N
//! dimensions are addressed by base-M digit strings and materialized lazily;
//! the M^N enumeration is never stored.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::Error;
use crate::matcore::{cplx, CVec};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstellationKind {
    Bpsk,
    Qpsk,
    Psk8,
    Qam16,
    /// Square M-QAM for a caller-provided M.
    Qam,
}

impl ConstellationKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConstellationKind::Bpsk => "BPSK",
            ConstellationKind::Qpsk => "QPSK",
            ConstellationKind::Psk8 => "PSK-8",
            ConstellationKind::Qam16 => "QAM-16",
            ConstellationKind::Qam => "QAM-M",
        }
    }
}

/// A finite complex signal set with unit average energy.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub kind: ConstellationKind,
    pub m: usize,
    /// Gray-ordered points; the labeling is metadata only, rates are
    /// labeling-invariant.
    pub points: Vec<Complex64>,
}

/// Base-M digit string identifying one joint symbol vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorIndex {
    digits: Vec<usize>,
}

impl VectorIndex {
    pub fn new(digits: Vec<usize>, m: usize) -> Result<Self> {
        if digits.iter().any(|&d| d >= m) {
            return Err(Error::InvalidParameter(format!(
                "digit out of range for M = {m}: {digits:?}"
            )));
        }
        Ok(Self { digits })
    }

    /// Decomposes a flat index in [0, M^N) into base-M digits, most
    /// significant first.
    pub fn from_flat(flat: usize, n: usize, m: usize) -> Self {
        let mut digits = vec![0usize; n];
        let mut rest = flat;
        for j in (0..n).rev() {
            digits[j] = rest % m;
            rest /= m;
        }
        Self { digits }
    }

    pub fn digits(&self) -> &[usize] {
        &self.digits
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }
}

/// Number of joint vectors M^N.
pub fn vector_count(m: usize, n: usize) -> usize {
    m.pow(n as u32)
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

/// Builds a constellation with the requested kind and size. The kind fixes M
/// for the named sets; `Qam` accepts any square M.
pub fn make_constellation(kind: ConstellationKind, m: usize) -> Result<Constellation> {
    let expect = |expected: usize| -> Result<()> {
        if m == expected {
            Ok(())
        } else {
            Err(Error::ConstellationMismatch {
                kind: kind.name(),
                expected: expected.to_string(),
                got: m,
            })
        }
    };
    let points = match kind {
        ConstellationKind::Bpsk => {
            expect(2)?;
            vec![cplx(1.0, 0.0), cplx(-1.0, 0.0)]
        }
        ConstellationKind::Qpsk => {
            expect(4)?;
            psk_points(4)
        }
        ConstellationKind::Psk8 => {
            expect(8)?;
            psk_points(8)
        }
        ConstellationKind::Qam16 => {
            expect(16)?;
            qam_points(16)?
        }
        ConstellationKind::Qam => qam_points(m)?,
    };
    Ok(Constellation { kind, m, points })
}

fn psk_points(m: usize) -> Vec<Complex64> {
    // Gray-ordered M-PSK with a π/M offset so QPSK lands on (±1±i)/√2
    (0..m)
        .map(|i| {
            let angle = 2.0 * PI * gray(i) as f64 / m as f64 + PI / m as f64;
            cplx(angle.cos(), angle.sin())
        })
        .collect()
}

fn qam_points(m: usize) -> Result<Vec<Complex64>> {
    let l = (m as f64).sqrt().round() as usize;
    if l * l != m || l < 2 {
        return Err(Error::ConstellationMismatch {
            kind: "QAM-M",
            expected: "a square M >= 4".to_string(),
            got: m,
        });
    }
    // unit average energy: divide the odd-integer grid by sqrt(2(M−1)/3)
    let scale = (2.0 * (m as f64 - 1.0) / 3.0).sqrt();
    let level = |idx: usize| (2.0 * gray(idx) as f64 - (l as f64 - 1.0)) / scale;
    let mut pts = Vec::with_capacity(m);
    for i in 0..l {
        for q in 0..l {
            pts.push(cplx(level(i), level(q)));
        }
    }
    Ok(pts)
}

impl Constellation {
    /// Average symbol energy (1 by construction, exposed for checks).
    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.m as f64
    }

    /// Bits per symbol, log2 M.
    pub fn bits_per_symbol(&self) -> f64 {
        (self.m as f64).log2()
    }

    /// Materializes the joint vector for an index: component j is
    /// points[digit_j].
    pub fn symbol_vector(&self, idx: &VectorIndex) -> CVec {
        CVec::from_iterator(idx.len(), idx.digits().iter().map(|&d| self.points[d]))
    }

    /// Difference vector b_pq = x_p − x_q.
    pub fn difference_vector(&self, p: &VectorIndex, q: &VectorIndex) -> CVec {
        assert_eq!(p.len(), q.len(), "index lengths differ");
        self.symbol_vector(p) - self.symbol_vector(q)
    }

    /// All M^N joint vectors as columns, flat-index order. Callers are
    /// responsible for keeping N inside the evaluation cap.
    pub fn joint_vectors(&self, n: usize) -> Vec<CVec> {
        (0..vector_count(self.m, n))
            .map(|f| self.symbol_vector(&VectorIndex::from_flat(f, n, self.m)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_points() {
        let c = make_constellation(ConstellationKind::Bpsk, 2).unwrap();
        assert_eq!(c.points, vec![cplx(1.0, 0.0), cplx(-1.0, 0.0)]);
        assert!((c.average_energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qpsk_points_are_diagonal() {
        let c = make_constellation(ConstellationKind::Qpsk, 4).unwrap();
        let inv = 1.0 / 2f64.sqrt();
        for p in &c.points {
            assert!((p.re.abs() - inv).abs() < 1e-12);
            assert!((p.im.abs() - inv).abs() < 1e-12);
        }
        assert!((c.average_energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qam16_normalization_and_min_distance() {
        let c = make_constellation(ConstellationKind::Qam16, 16).unwrap();
        // brute-force energy sum confirms the closed-form normalization
        let energy: f64 = c.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((energy - 1.0).abs() < 1e-12);
        let mut min_d2 = f64::INFINITY;
        for i in 0..16 {
            for j in 0..16 {
                if i != j {
                    min_d2 = min_d2.min((c.points[i] - c.points[j]).norm_sqr());
                }
            }
        }
        assert!((min_d2 - 0.4).abs() < 1e-12, "min squared distance {min_d2}");
    }

    #[test]
    fn unit_energy_all_kinds() {
        let cases = [
            (ConstellationKind::Bpsk, 2),
            (ConstellationKind::Qpsk, 4),
            (ConstellationKind::Psk8, 8),
            (ConstellationKind::Qam16, 16),
            (ConstellationKind::Qam, 64),
        ];
        for (kind, m) in cases {
            let c = make_constellation(kind, m).unwrap();
            assert!(
                (c.average_energy() - 1.0).abs() < 1e-12,
                "{kind:?} energy {}",
                c.average_energy()
            );
            // pairwise distinct
            for i in 0..m {
                for j in i + 1..m {
                    assert!((c.points[i] - c.points[j]).norm() > 1e-9);
                }
            }
        }
    }

    #[test]
    fn rejects_mismatched_m() {
        assert!(make_constellation(ConstellationKind::Bpsk, 4).is_err());
        assert!(make_constellation(ConstellationKind::Qam, 12).is_err());
    }

    #[test]
    fn symbol_vector_lookup() {
        let c = make_constellation(ConstellationKind::Bpsk, 2).unwrap();
        let idx = VectorIndex::new(vec![0, 1], 2).unwrap();
        let v = c.symbol_vector(&idx);
        assert_eq!(v[0], cplx(1.0, 0.0));
        assert_eq!(v[1], cplx(-1.0, 0.0));
    }

    #[test]
    fn qpsk_repeated_digit() {
        let c = make_constellation(ConstellationKind::Qpsk, 4).unwrap();
        let idx = VectorIndex::new(vec![0, 0], 4).unwrap();
        let v = c.symbol_vector(&idx);
        assert_eq!(v[0], v[1]);
        assert_eq!(v[0], c.points[0]);
    }

    #[test]
    fn joint_enumeration_has_no_duplicates() {
        let c = make_constellation(ConstellationKind::Qpsk, 4).unwrap();
        let vecs = c.joint_vectors(2);
        assert_eq!(vecs.len(), 16);
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                assert!((&vecs[i] - &vecs[j]).norm() > 1e-9, "{i} vs {j}");
            }
        }
    }

    #[test]
    fn difference_antisymmetry_exhaustive() {
        let c = make_constellation(ConstellationKind::Qpsk, 4).unwrap();
        let n = 2;
        for p in 0..vector_count(4, n) {
            for q in 0..vector_count(4, n) {
                let ip = VectorIndex::from_flat(p, n, 4);
                let iq = VectorIndex::from_flat(q, n, 4);
                let b_pq = c.difference_vector(&ip, &iq);
                let b_qp = c.difference_vector(&iq, &ip);
                assert!((&b_pq + &b_qp).norm() < 1e-15);
                if p == q {
                    assert_eq!(b_pq.norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn bpsk_difference_energy_sum() {
        // Σ over all (p,q) of ‖b_pq‖² for BPSK N=1 equals 8
        let c = make_constellation(ConstellationKind::Bpsk, 2).unwrap();
        let mut total = 0.0;
        for p in 0..2 {
            for q in 0..2 {
                let b = c.difference_vector(
                    &VectorIndex::from_flat(p, 1, 2),
                    &VectorIndex::from_flat(q, 1, 2),
                );
                total += b.norm_squared();
            }
        }
        assert!((total - 8.0).abs() < 1e-12);
    }

    #[test]
    fn flat_index_round_trip() {
        for flat in 0..vector_count(4, 3) {
            let idx = VectorIndex::from_flat(flat, 3, 4);
            let mut rebuilt = 0usize;
            for &d in idx.digits() {
                rebuilt = rebuilt * 4 + d;
            }
            assert_eq!(rebuilt, flat);
        }
    }
}
