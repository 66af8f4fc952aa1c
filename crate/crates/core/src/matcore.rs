//! Dense complex matrix primitives and the generalized singular value
//! decomposition (GSVD) of a matrix pair.
//!
//! The GSVD here produces the exact block form the precoder pipeline relies on:
//! for a pair (A, B) sharing a column count, it returns unitary `U_ba`, `U_ea`,
//! `U_a`, a nonsingular triangular `Omega` with real positive diagonal, and the
//! structured gain matrices `Sigma_ba` / `Sigma_ea` whose diagonals expose the
//! receiver-only, shared, and eavesdropper-only subchannels together with the
//! paired gains (b_p, e_p), b_p² + e_p² = 1.
//!
//! Construction route: stack [A; B], take an SVD to fix the stack rank k and an
//! orthonormal basis of the joint row space, apply the CS decomposition to the
//! two sub-blocks of the stacked left factor, and extract the shared factor by
//! a QR so Omega is triangular with real positive diagonal.
//!
//! SVDs and Hermitian eigendecompositions are computed by one-sided and
//! two-sided Jacobi iterations. These converge to high relative accuracy on
//! the clustered spectra this pipeline produces (projectors, cosine/sine
//! blocks with repeated values), where faster bidiagonalization iterations
//! can mis-converge.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Error;
use crate::Result;

/// Dense complex matrix used throughout the crate.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

pub const fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Default relative threshold for numerical rank decisions.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols) as f64
}

/// Checks every entry for NaN/Inf; `what` names the matrix in the error.
pub fn ensure_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Relative Frobenius error ‖a − b‖ / ‖b‖ (absolute when ‖b‖ = 0).
pub fn rel_fro_err(a: &CMat, b: &CMat) -> f64 {
    let d = (a - b).norm();
    let n = b.norm();
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

// ---------------------------------------------------------------------------
// Jacobi decompositions
// ---------------------------------------------------------------------------

/// Thin SVD: `a = u · diag(sv) · v^H` with `u` (m×min), `v` (n×min) having
/// orthonormal columns and `sv` sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: CMat,
    pub sv: Vec<f64>,
    pub v: CMat,
}

/// One-sided Jacobi SVD.
pub fn jacobi_svd(a: &CMat) -> Svd {
    let (m, n) = (a.nrows(), a.ncols());
    if m >= n {
        jacobi_svd_tall(a)
    } else {
        let t = jacobi_svd_tall(&a.adjoint());
        Svd {
            u: t.v,
            sv: t.sv,
            v: t.u,
        }
    }
}

fn jacobi_svd_tall(a: &CMat) -> Svd {
    let (m, n) = (a.nrows(), a.ncols());
    let mut work = a.clone();
    let mut v = CMat::identity(n, n);
    if n > 0 && work.norm() > 0.0 {
        for _sweep in 0..64 {
            let mut rotated = false;
            for p in 0..n.saturating_sub(1) {
                for q in p + 1..n {
                    let app: f64 = work.column(p).norm_squared();
                    let aqq: f64 = work.column(q).norm_squared();
                    let apq: Complex64 = work.column(p).dotc(&work.column(q));
                    let r = apq.norm();
                    if r <= 1e-15 * (app * aqq).sqrt() + f64::MIN_POSITIVE {
                        continue;
                    }
                    // unitary plane rotation diagonalizing the 2×2 Gram block;
                    // the phase is scaled elementwise — complex division by
                    // r underflows |r|² for denormal-range columns
                    let inv_r = 1.0 / r;
                    let phase = cplx(apq.re * inv_r, apq.im * inv_r);
                    let tau = (aqq - app) / (2.0 * r);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    if s == 0.0 {
                        // the rotation rounds to the identity; nothing to do
                        continue;
                    }
                    rotated = true;
                    let cs = cplx(c, 0.0);
                    let s_cplx = cplx(s, 0.0);
                    let s_conj_phase = phase.conj() * s;
                    let c_conj_phase = phase.conj() * c;
                    for i in 0..m {
                        let wp = work[(i, p)];
                        let wq = work[(i, q)];
                        work[(i, p)] = wp * cs - wq * s_conj_phase;
                        work[(i, q)] = wp * s_cplx + wq * c_conj_phase;
                    }
                    for i in 0..n {
                        let vp = v[(i, p)];
                        let vq = v[(i, q)];
                        v[(i, p)] = vp * cs - vq * s_conj_phase;
                        v[(i, q)] = vp * s_cplx + vq * c_conj_phase;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
    }
    // columns are now orthogonal; norms are the singular values
    let norms: Vec<f64> = (0..n).map(|j| work.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let mut u = CMat::zeros(m, n);
    let mut v_sorted = CMat::zeros(n, n);
    let mut sv = Vec::with_capacity(n);
    let mut zero_cols = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        sv.push(norms[src]);
        v_sorted.set_column(dst, &v.column(src));
        if norms[src] > 0.0 {
            let inv = cplx(1.0 / norms[src], 0.0);
            for i in 0..m {
                u[(i, dst)] = work[(i, src)] * inv;
            }
        } else {
            zero_cols.push(dst);
        }
    }
    // zero singular values leave u columns undefined; fill them with an
    // orthonormal completion so u always has orthonormal columns
    if !zero_cols.is_empty() {
        let rank = n - zero_cols.len();
        let base = u.view((0, 0), (m, rank)).into_owned();
        let full = complete_unitary(&base);
        for (extra, &dst) in zero_cols.iter().enumerate() {
            u.set_column(dst, &full.column(rank + extra));
        }
    }
    Svd { u, sv, v: v_sorted }
}

/// Eigendecomposition of a Hermitian matrix by two-sided Jacobi:
/// `a = q · diag(vals) · q^H` with `vals` sorted descending.
pub fn hermitian_eigen(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "hermitian_eigen needs a square matrix");
    let mut work = (a + a.adjoint()).scale(0.5);
    let mut q = CMat::identity(n, n);
    let scale = work.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for col in p + 1..n {
                let apq = work[(p, col)];
                let r = apq.norm();
                if r <= 1e-16 * scale {
                    continue;
                }
                let app = work[(p, p)].re;
                let aqq = work[(col, col)].re;
                let inv_r = 1.0 / r;
                let phase = cplx(apq.re * inv_r, apq.im * inv_r);
                let tau = (aqq - app) / (2.0 * r);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                if s == 0.0 {
                    continue;
                }
                rotated = true;
                let cs = cplx(c, 0.0);
                let s_cplx = cplx(s, 0.0);
                let s_conj_phase = phase.conj() * s;
                let c_conj_phase = phase.conj() * c;
                // A ← A J on columns (p, col)
                for i in 0..n {
                    let wp = work[(i, p)];
                    let wq = work[(i, col)];
                    work[(i, p)] = wp * cs - wq * s_conj_phase;
                    work[(i, col)] = wp * s_cplx + wq * c_conj_phase;
                }
                // A ← J^H A on rows (p, col)
                let s_phase = phase * s;
                let c_phase = phase * c;
                for jcol in 0..n {
                    let wp = work[(p, jcol)];
                    let wq = work[(col, jcol)];
                    work[(p, jcol)] = wp * cs - wq * s_phase;
                    work[(col, jcol)] = wp * s_cplx + wq * c_phase;
                }
                for i in 0..n {
                    let qp = q[(i, p)];
                    let qq = q[(i, col)];
                    q[(i, p)] = qp * cs - qq * s_conj_phase;
                    q[(i, col)] = qp * s_cplx + qq * c_conj_phase;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let diag: Vec<f64> = (0..n).map(|i| work[(i, i)].re).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let mut vals = Vec::with_capacity(n);
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(diag[src]);
        vecs.set_column(dst, &q.column(src));
    }
    (vals, vecs)
}

/// Eigenvalues only, descending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    hermitian_eigen(a).0
}

/// Operator-norm deviation of U^H U from the identity.
pub fn unitary_deviation(u: &CMat) -> f64 {
    let k = u.ncols();
    if k == 0 {
        return 0.0;
    }
    let dev = u.adjoint() * u - CMat::identity(k, k);
    jacobi_svd(&dev).sv.first().copied().unwrap_or(0.0)
}

/// Relative Hermitian deviation ‖m − m^H‖ / max(‖m‖, 1).
pub fn hermitian_deviation(m: &CMat) -> f64 {
    (m - m.adjoint()).norm() / m.norm().max(1.0)
}

/// Numerical rank: number of singular values above `tol` times the largest.
pub fn numerical_rank(m: &CMat, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = jacobi_svd(m).sv;
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Extends `q` (n×k, orthonormal columns) to an n×n unitary matrix by
/// pivoted Gram–Schmidt over the canonical basis with a second
/// orthogonalization pass. Deterministic; ties pick the lowest index.
pub fn complete_unitary(q: &CMat) -> CMat {
    let n = q.nrows();
    let k = q.ncols();
    assert!(k <= n, "cannot complete {k} columns in dimension {n}");
    let mut out = CMat::zeros(n, n);
    out.view_mut((0, 0), (n, k)).copy_from(q);
    let mut have = k;
    while have < n {
        // canonical vector with the largest residual against current columns
        let mut best = (0usize, -1.0f64);
        for cand in 0..n {
            let mut res_sq = 1.0;
            for j in 0..have {
                res_sq -= out[(cand, j)].norm_sqr();
            }
            if res_sq > best.1 {
                best = (cand, res_sq);
            }
        }
        let mut col = CVec::zeros(n);
        col[best.0] = cplx(1.0, 0.0);
        for _pass in 0..2 {
            for j in 0..have {
                let proj = out.column(j).dotc(&col);
                let basis = out.column(j).into_owned();
                col -= basis * proj;
            }
        }
        let nrm = col.norm();
        col /= cplx(nrm, 0.0);
        out.set_column(have, &col);
        have += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// Plain-text matrix format: first line "rows cols", then one "re im" pair per
// entry, row-major. Used by the CLI for channel fixtures.
// ---------------------------------------------------------------------------

pub fn format_matrix_text(m: &CMat) -> String {
    let mut s = String::new();
    s.push_str(&format!("{} {}\n", m.nrows(), m.ncols()));
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            s.push_str(&format!("{} {}\n", z.re, z.im));
        }
    }
    s
}

pub fn parse_matrix_text(text: &str) -> Result<CMat> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
    let mut it = header.split_whitespace();
    let rows: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad header line: {header:?}")))?;
    let cols: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad header line: {header:?}")))?;
    let mut entries = Vec::with_capacity(rows * cols);
    for line in lines {
        let mut parts = line.split_whitespace();
        let re: f64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad entry line: {line:?}")))?;
        let im: f64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad entry line: {line:?}")))?;
        entries.push(cplx(re, im));
    }
    if entries.len() != rows * cols {
        return Err(Error::Parse(format!(
            "expected {} entries, found {}",
            rows * cols,
            entries.len()
        )));
    }
    let m = CMat::from_row_slice(rows, cols, &entries);
    ensure_finite(&m, "parsed matrix")?;
    Ok(m)
}

pub fn write_matrix_text(path: &std::path::Path, m: &CMat) -> Result<()> {
    std::fs::write(path, format_matrix_text(m))?;
    Ok(())
}

pub fn read_matrix_text(path: &std::path::Path) -> Result<CMat> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix_text(&text)
}

// ---------------------------------------------------------------------------
// Subspace dimensions
// ---------------------------------------------------------------------------

/// Dimensions of the canonical subspaces of a channel pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubspaceDims {
    /// Rank of the stacked pair [A; B].
    pub k: usize,
    /// Receiver-only subchannels: directions in row([A;B]) killed by B.
    pub r: usize,
    /// Shared subchannels: dim(row(A) ∩ row(B)).
    pub s: usize,
    /// Eavesdropper-only subchannels, equals k − r − s.
    pub dim_s_ea: usize,
    /// Common null space, equals N_t − k.
    pub dim_s_n: usize,
}

fn orthonormal_row_basis(m: &CMat, tol: f64) -> CMat {
    let n = m.ncols();
    if m.nrows() == 0 || n == 0 {
        return CMat::zeros(n, 0);
    }
    let svd = jacobi_svd(m);
    let smax = svd.sv.first().copied().unwrap_or(0.0);
    let rank = if smax == 0.0 {
        0
    } else {
        svd.sv.iter().filter(|&&s| s > tol * smax).count()
    };
    svd.v.view((0, 0), (n, rank)).into_owned()
}

/// Computes (k, r, s, dim S_ea, dim S_n) for the pair via the rank identities
/// r = k − rank(B), r + s = rank(A), and cross-checks them against
/// set-theoretic intersection dimensions computed from explicit orthonormal
/// bases. A mismatch signals a tol that is too loose or too tight.
pub fn subspace_dims(a: &CMat, b: &CMat, tol: f64) -> Result<SubspaceDims> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "column counts differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    let n = a.ncols();
    let n1 = numerical_rank(a, tol);
    let n2 = numerical_rank(b, tol);
    let stack = stack_rows(a, b);
    let k = numerical_rank(&stack, tol);
    let r = k - n2;
    let s = n1 + n2 - k;

    // set-theoretic cross-check: dim(U ∩ V) = dim U + dim V − rank([P Q]).
    // The receiver-only and eavesdropper-only subspaces live inside the
    // joint row space row([A;B]); intersecting the null spaces with row(A)
    // or row(B) alone undercounts them.
    let row_a = orthonormal_row_basis(a, tol);
    let row_b = orthonormal_row_basis(b, tol);
    let row_stack = orthonormal_row_basis(&stack, tol);
    let null_a = null_space_basis(a, tol);
    let null_b = null_space_basis(b, tol);
    let inter = |p: &CMat, q: &CMat| -> usize {
        let joined = stack_cols(p, q);
        p.ncols() + q.ncols() - numerical_rank(&joined, tol)
    };
    let r_set = inter(&row_stack, &null_b);
    if r_set != r {
        return Err(Error::SubspaceDims {
            quantity: "r (receiver-only)",
            set_theoretic: r_set,
            rank_identity: r,
        });
    }
    let s_set = inter(&row_a, &row_b);
    if s_set != s {
        return Err(Error::SubspaceDims {
            quantity: "s (shared)",
            set_theoretic: s_set,
            rank_identity: s,
        });
    }
    let sea_set = inter(&row_stack, &null_a);
    if sea_set != k - r - s {
        return Err(Error::SubspaceDims {
            quantity: "dim(S_ea)",
            set_theoretic: sea_set,
            rank_identity: k - r - s,
        });
    }
    let null_set = inter(&null_a, &null_b);
    if null_set != n - k {
        return Err(Error::SubspaceDims {
            quantity: "dim(S_n)",
            set_theoretic: null_set,
            rank_identity: n - k,
        });
    }
    Ok(SubspaceDims {
        k,
        r,
        s,
        dim_s_ea: k - r - s,
        dim_s_n: n - k,
    })
}

pub(crate) fn stack_rows(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((a.nrows(), 0), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

fn stack_cols(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

/// Orthonormal basis of null(A); returns an N×d matrix, d = N − rank(A).
pub fn null_space_basis(a: &CMat, tol: f64) -> CMat {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return CMat::identity(n, n);
    }
    let svd = jacobi_svd(a);
    let smax = svd.sv.first().copied().unwrap_or(0.0);
    let rank = if smax == 0.0 {
        0
    } else {
        svd.sv.iter().filter(|&&s| s > tol * smax).count()
    };
    let thin = svd.v.ncols();
    let d = n - rank;
    let mut out = CMat::zeros(n, d);
    let thin_null = thin - rank;
    out.view_mut((0, 0), (n, thin_null))
        .copy_from(&svd.v.view((0, rank), (n, thin_null)).into_owned());
    if d > thin_null {
        let full = complete_unitary(&svd.v);
        out.view_mut((0, thin_null), (n, d - thin_null))
            .copy_from(&full.view((0, thin), (n, d - thin_null)).into_owned());
    }
    out
}

// ---------------------------------------------------------------------------
// Hermitian PSD square roots
// ---------------------------------------------------------------------------

fn is_exactly_diagonal(r: &CMat) -> bool {
    for i in 0..r.nrows() {
        for j in 0..r.ncols() {
            if i != j && r[(i, j)] != cplx(0.0, 0.0) {
                return false;
            }
        }
    }
    true
}

fn hermitian_eigs_checked(r: &CMat) -> Result<(Vec<f64>, CMat)> {
    if r.nrows() != r.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "square matrix expected, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let dev = hermitian_deviation(r);
    if dev > 1e-10 {
        return Err(Error::NotHermitian {
            deviation: dev,
            tol: 1e-10,
        });
    }
    let (vals, vecs) = hermitian_eigen(r);
    let max_eig = vals.iter().copied().fold(0.0, f64::max);
    let floor = -1e-10 * max_eig.max(1.0);
    if let Some(&bad) = vals.iter().find(|&&l| l < floor) {
        return Err(Error::NotPsd { min_eig: bad });
    }
    let clipped = vals.into_iter().map(|l| l.max(0.0)).collect();
    Ok((clipped, vecs))
}

/// Rectangular factor T with T^H T = R and rank(R) rows.
pub fn matrix_sqrt_factor(r: &CMat) -> Result<CMat> {
    ensure_finite(r, "R")?;
    let (vals, vecs) = hermitian_eigs_checked(r)?;
    let n = r.nrows();
    let max_eig = vals.iter().copied().fold(0.0, f64::max);
    let tol = default_rank_tol(n, n);
    let rank = vals
        .iter()
        .filter(|&&l| l > tol * max_eig.max(f64::MIN_POSITIVE))
        .count();
    let mut t = CMat::zeros(rank, n);
    for i in 0..rank {
        let scale = vals[i].sqrt();
        for j in 0..n {
            t[(i, j)] = vecs[(j, i)].conj() * scale;
        }
    }
    Ok(t)
}

/// Hermitian PSD square root (same shape as R). Exactly-diagonal inputs take
/// an exact per-entry path so that identity correlations are a bit-exact
/// no-op in the channel samplers.
pub fn matrix_sqrt_psd(r: &CMat) -> Result<CMat> {
    ensure_finite(r, "R")?;
    if r.nrows() == r.ncols() && is_exactly_diagonal(r) {
        let n = r.nrows();
        let mut out = CMat::zeros(n, n);
        for i in 0..n {
            let d = r[(i, i)];
            if d.im != 0.0 || d.re < -1e-10 * d.re.abs().max(1.0) {
                return Err(Error::NotPsd { min_eig: d.re });
            }
            out[(i, i)] = cplx(d.re.max(0.0).sqrt(), 0.0);
        }
        return Ok(out);
    }
    let (vals, vecs) = hermitian_eigs_checked(r)?;
    let n = r.nrows();
    let mut scaled = CMat::zeros(n, n);
    for c in 0..n {
        let scale = cplx(vals[c].sqrt(), 0.0);
        for i in 0..n {
            scaled[(i, c)] = vecs[(i, c)] * scale;
        }
    }
    Ok(scaled * vecs.adjoint())
}

// ---------------------------------------------------------------------------
// GSVD of a pair
// ---------------------------------------------------------------------------

/// GSVD of a pair (A, B): A = U_ba Σ_ba [Ω^{-1} 0] U_a^H and
/// B = U_ea Σ_ea [Ω^{-1} 0] U_a^H.
///
/// Σ_ba is N_r×k with the block pattern (zeros of height N_r−r−s, then the
/// diagonal D_b, then I_r); Σ_ea is N_e×k with (I_{k−r−s}, then D_e, then a
/// zero block of height N_e−k+r). The shared gains satisfy b_p² + e_p² = 1
/// with b ascending and e descending. Omega is triangular, not necessarily
/// diagonal; downstream rate evaluation uses assembled matrices so only its
/// diagonal enters the bookkeeping formulas.
#[derive(Debug, Clone)]
pub struct GsvdFactorization {
    pub u_ba: CMat,
    pub u_ea: CMat,
    pub u_a: CMat,
    /// k×k lower triangular, real positive diagonal.
    pub omega: CMat,
    /// Its inverse as constructed (lower triangular as well).
    pub omega_inv: CMat,
    /// Shared gains for the receiver, ascending, length s.
    pub b_gains: Vec<f64>,
    /// Shared gains for the eavesdropper, descending, length s.
    pub e_gains: Vec<f64>,
    pub k: usize,
    pub r: usize,
    pub s: usize,
    pub n_r: usize,
    pub n_e: usize,
    pub n_t: usize,
}

impl GsvdFactorization {
    /// Materializes Σ_ba (N_r×k).
    pub fn sigma_ba(&self) -> CMat {
        let mut m = CMat::zeros(self.n_r, self.k);
        let z = self.k - self.r - self.s;
        for i in 0..self.s {
            m[(self.n_r - self.r - self.s + i, z + i)] = cplx(self.b_gains[i], 0.0);
        }
        for j in 0..self.r {
            m[(self.n_r - self.r + j, self.k - self.r + j)] = cplx(1.0, 0.0);
        }
        m
    }

    /// Materializes Σ_ea (N_e×k).
    pub fn sigma_ea(&self) -> CMat {
        let mut m = CMat::zeros(self.n_e, self.k);
        let z = self.k - self.r - self.s;
        for i in 0..z {
            m[(i, i)] = cplx(1.0, 0.0);
        }
        for i in 0..self.s {
            m[(z + i, z + i)] = cplx(self.e_gains[i], 0.0);
        }
        m
    }

    /// Diagonal of Omega (real positive by construction).
    pub fn omega_diag(&self) -> Vec<f64> {
        (0..self.k).map(|i| self.omega[(i, i)].re).collect()
    }

    /// The N_t×N_t matrix A = [[Ω, 0], [0, 0]] used in precoder assembly.
    pub fn a_matrix(&self) -> CMat {
        let mut m = CMat::zeros(self.n_t, self.n_t);
        m.view_mut((0, 0), (self.k, self.k)).copy_from(&self.omega);
        m
    }

    /// Receiver gain at subchannel position `pos` (0-based, Σ̂ layout).
    pub fn bob_gain_raw(&self, pos: usize) -> f64 {
        let z = self.k - self.r - self.s;
        if pos < z || pos >= self.k {
            0.0
        } else if pos < z + self.s {
            self.b_gains[pos - z]
        } else {
            1.0
        }
    }

    /// Eavesdropper gain at subchannel position `pos`.
    pub fn eve_gain_raw(&self, pos: usize) -> f64 {
        let z = self.k - self.r - self.s;
        if pos < z {
            1.0
        } else if pos < z + self.s {
            self.e_gains[pos - z]
        } else {
            0.0
        }
    }

    /// Row of U_ba^H·H_ba·G carrying subchannel `pos`, when it exists.
    pub fn bob_row_of_position(&self, pos: usize) -> Option<usize> {
        let z = self.k - self.r - self.s;
        if pos >= z && pos < self.k {
            Some(pos + self.n_r - self.k)
        } else {
            None
        }
    }

    /// Row of U_ea^H·H_ea·G carrying subchannel `pos`, when it exists.
    pub fn eve_row_of_position(&self, pos: usize) -> Option<usize> {
        if pos < self.k - self.r {
            Some(pos)
        } else {
            None
        }
    }

    /// [Ω^{-1} 0]·U_a^H, the shared right factor (k×N_t).
    pub fn right_factor(&self) -> CMat {
        let mut oi = CMat::zeros(self.k, self.n_t);
        oi.view_mut((0, 0), (self.k, self.k))
            .copy_from(&self.omega_inv);
        oi * self.u_a.adjoint()
    }

    /// Reconstructs the receiver channel from the stored factors.
    pub fn reconstruct_ba(&self) -> CMat {
        &self.u_ba * self.sigma_ba() * self.right_factor()
    }

    /// Reconstructs the eavesdropper channel from the stored factors.
    pub fn reconstruct_ea(&self) -> CMat {
        &self.u_ea * self.sigma_ea() * self.right_factor()
    }

    /// Verifies every structural invariant against the original pair.
    /// Returns a list of violation descriptions (empty means all good).
    pub fn check_invariants(&self, a: &CMat, b: &CMat) -> Vec<String> {
        let mut bad = Vec::new();
        for (name, u) in [("U_ba", &self.u_ba), ("U_ea", &self.u_ea), ("U_a", &self.u_a)] {
            let dev = unitary_deviation(u);
            if dev > 1e-10 {
                bad.push(format!("{name} unitary deviation {dev:.3e} > 1e-10"));
            }
        }
        let ra = rel_fro_err(&self.reconstruct_ba(), a);
        if ra > 1e-9 {
            bad.push(format!("H_ba reconstruction residual {ra:.3e} > 1e-9"));
        }
        let rb = rel_fro_err(&self.reconstruct_ea(), b);
        if rb > 1e-9 {
            bad.push(format!("H_ea reconstruction residual {rb:.3e} > 1e-9"));
        }
        for p in 0..self.s {
            let pair = self.b_gains[p] * self.b_gains[p] + self.e_gains[p] * self.e_gains[p];
            if (pair - 1.0).abs() > 1e-10 {
                bad.push(format!("b_{p}² + e_{p}² = {pair} deviates from 1"));
            }
            if p + 1 < self.s {
                if self.b_gains[p] > self.b_gains[p + 1] {
                    bad.push(format!("b gains not ascending at {p}"));
                }
                if self.e_gains[p] < self.e_gains[p + 1] {
                    bad.push(format!("e gains not descending at {p}"));
                }
            }
        }
        if self.s > 0 {
            if !(self.b_gains[0] > 0.0 && self.b_gains[self.s - 1] < 1.0) {
                bad.push("b gains outside (0, 1)".to_string());
            }
            if !(self.e_gains[self.s - 1] > 0.0 && self.e_gains[0] < 1.0) {
                bad.push("e gains outside (0, 1)".to_string());
            }
        }
        for i in 0..self.k {
            let d = self.omega[(i, i)];
            if !(d.re > 0.0 && d.im == 0.0) {
                bad.push(format!("omega diagonal {i} not real positive: {d}"));
            }
        }
        bad
    }
}

/// Computes the GSVD of the pair (A, B). `tol` is the relative threshold for
/// numerical rank decisions (see [`default_rank_tol`]).
pub fn gsvd_pair(a: &CMat, b: &CMat, tol: f64) -> Result<GsvdFactorization> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "column counts differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    ensure_finite(a, "A")?;
    ensure_finite(b, "B")?;
    let (m1, m2, n) = (a.nrows(), b.nrows(), a.ncols());

    // 1. stack and factor the joint row space
    let stack = stack_rows(a, b);
    let svd_c = jacobi_svd(&stack);
    let smax = svd_c.sv.first().copied().unwrap_or(0.0);
    let k = if smax == 0.0 {
        0
    } else {
        svd_c.sv.iter().filter(|&&s| s > tol * smax).count()
    };

    if k == 0 {
        return Ok(GsvdFactorization {
            u_ba: CMat::identity(m1, m1),
            u_ea: CMat::identity(m2, m2),
            u_a: CMat::identity(n, n),
            omega: CMat::zeros(0, 0),
            omega_inv: CMat::zeros(0, 0),
            b_gains: vec![],
            e_gains: vec![],
            k: 0,
            r: 0,
            s: 0,
            n_r: m1,
            n_e: m2,
            n_t: n,
        });
    }

    let q1 = svd_c.u.view((0, 0), (m1, k)).into_owned();
    let q2 = svd_c.u.view((m1, 0), (m2, k)).into_owned();
    // X = Σ_k V_k^H spans the joint row space with full row rank k
    let mut x = svd_c.v.view((0, 0), (n, k)).adjoint();
    for i in 0..k {
        let s_i = cplx(svd_c.sv[i], 0.0);
        for j in 0..n {
            x[(i, j)] *= s_i;
        }
    }

    // 2. CS decomposition of (Q1, Q2) with the ascending arrangement
    let svd1 = jacobi_svd(&q1);
    let cos: Vec<f64> = svd1.sv.iter().map(|&c| c.clamp(0.0, 1.0)).collect();
    let rank1 = cos.iter().filter(|&&c| c > tol).count(); // = rank(A) = r + s
    let r = cos.iter().filter(|&&c| c >= 1.0 - tol).count();
    let s = rank1 - r;
    let z = k - rank1; // eavesdropper-only block width, k − r − s

    // shared gains ascending
    let b_gains: Vec<f64> = (0..s).map(|i| cos[r + s - 1 - i]).collect();
    let e_gains: Vec<f64> = b_gains.iter().map(|&bv| (1.0 - bv * bv).sqrt()).collect();

    // W columns in ascending-cosine order: the null directions of Q1 first,
    // then the thin right vectors reversed.
    let v1 = &svd1.v; // k × min(m1, k)
    let thin = v1.ncols();
    let mut w = CMat::zeros(k, k);
    let thin_null = thin - rank1;
    w.view_mut((0, 0), (k, thin_null))
        .copy_from(&v1.view((0, rank1), (k, thin_null)).into_owned());
    if k > thin {
        let v_full = complete_unitary(v1);
        w.view_mut((0, thin_null), (k, k - thin))
            .copy_from(&v_full.view((0, thin), (k, k - thin)).into_owned());
    }
    for t in 0..rank1 {
        w.set_column(z + t, &v1.column(rank1 - 1 - t));
    }

    // U_ba: left-null completion in front, then thin left vectors reversed
    let u1_cols = svd1.u.view((0, 0), (m1, rank1)).into_owned();
    let u1_full = complete_unitary(&u1_cols);
    let mut u_ba = CMat::zeros(m1, m1);
    u_ba.view_mut((0, 0), (m1, m1 - rank1))
        .copy_from(&u1_full.view((0, rank1), (m1, m1 - rank1)).into_owned());
    for t in 0..rank1 {
        u_ba.set_column(m1 - rank1 + t, &svd1.u.column(rank1 - 1 - t));
    }

    // U_ea from the sine-side columns Y = Q2 W, normalized; columns past
    // k − r multiply exact zero rows of Σ_ea and come from completion.
    let y = &q2 * &w;
    let visible = k - r; // = rank(B)
    let mut u2_cols = CMat::zeros(m2, visible);
    for j in 0..visible {
        let col = y.column(j);
        let nrm = col.norm();
        if nrm > 1e-150 {
            let inv = cplx(1.0 / nrm, 0.0);
            for i in 0..m2 {
                u2_cols[(i, j)] = y[(i, j)] * inv;
            }
        }
        // a vanishing norm means the rank split was unstable; the
        // reconstruction gate below reports it
    }
    let u_ea = complete_unitary(&u2_cols);

    // 3. shared factor: W^H X = Ω^{-1} (first k rows of U_a^H)
    let core = w.adjoint() * &x; // k×n, full row rank
    let qr = core.adjoint().qr();
    let mut qx = qr.q(); // n×k orthonormal
    let mut rx = qr.r(); // k×k upper triangular
    // phase-normalize so the triangular factor has real positive diagonal
    for i in 0..k {
        let d = rx[(i, i)];
        let mag = d.norm();
        if mag == 0.0 {
            return Err(Error::GsvdReconstruction {
                residual: f64::INFINITY,
                tol: 1e-9,
            });
        }
        let phase = d / cplx(mag, 0.0);
        let conj_phase = phase.conj();
        for j in i..k {
            rx[(i, j)] *= conj_phase;
        }
        rx[(i, i)] = cplx(rx[(i, i)].re, 0.0);
        for row in 0..n {
            qx[(row, i)] *= phase;
        }
    }
    let omega_inv = rx.adjoint(); // lower triangular, real positive diagonal
    let mut omega = omega_inv
        .clone()
        .solve_lower_triangular(&CMat::identity(k, k))
        .ok_or(Error::GsvdReconstruction {
            residual: f64::INFINITY,
            tol: 1e-9,
        })?;
    for i in 0..k {
        omega[(i, i)] = cplx(omega[(i, i)].re, 0.0);
    }
    let u_a = complete_unitary(&qx);

    let fact = GsvdFactorization {
        u_ba,
        u_ea,
        u_a,
        omega,
        omega_inv,
        b_gains,
        e_gains,
        k,
        r,
        s,
        n_r: m1,
        n_e: m2,
        n_t: n,
    };

    let res_a = rel_fro_err(&fact.reconstruct_ba(), a);
    let res_b = rel_fro_err(&fact.reconstruct_ea(), b);
    let residual = res_a.max(res_b);
    if residual > 1e-9 {
        return Err(Error::GsvdReconstruction { residual, tol: 1e-9 });
    }
    Ok(fact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_iid;
    use proptest::prelude::*;

    fn rand_pair(n_r: usize, n_e: usize, n_t: usize, seed: u64) -> (CMat, CMat) {
        (
            sample_iid(n_r, n_t, seed),
            sample_iid(n_e, n_t, seed.wrapping_add(1)),
        )
    }

    fn tol_for(a: &CMat, b: &CMat) -> f64 {
        default_rank_tol(a.nrows() + b.nrows(), a.ncols())
    }

    #[test]
    fn jacobi_svd_reconstructs() {
        for (m, n, seed) in [(5, 3, 1), (3, 5, 2), (4, 4, 3), (7, 2, 4)] {
            let a = sample_iid(m, n, seed);
            let svd = jacobi_svd(&a);
            let mn = m.min(n);
            let mut rec = CMat::zeros(m, n);
            for i in 0..mn {
                rec += svd.u.column(i) * svd.v.column(i).adjoint() * cplx(svd.sv[i], 0.0);
            }
            assert!(rel_fro_err(&rec, &a) < 1e-13, "{m}x{n}");
            assert!(unitary_deviation(&svd.u) < 1e-13);
            assert!(unitary_deviation(&svd.v) < 1e-13);
            for i in 1..mn {
                assert!(svd.sv[i - 1] >= svd.sv[i]);
            }
        }
    }

    #[test]
    fn jacobi_svd_projector_with_repeated_values() {
        // Hermitian projector with eigenvalues (1,1,1,0,0): clustered spectra
        // must not break orthogonality or values
        let q = jacobi_svd(&sample_iid(5, 2, 42)).u;
        let proj = CMat::identity(5, 5) - &q * q.adjoint();
        let svd = jacobi_svd(&proj);
        for i in 0..3 {
            assert!((svd.sv[i] - 1.0).abs() < 1e-12, "sv[{i}] = {}", svd.sv[i]);
        }
        for i in 3..5 {
            assert!(svd.sv[i] < 1e-12);
        }
        assert!(unitary_deviation(&svd.u) < 1e-12);
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let m = sample_iid(5, 5, 9);
        let h = &m * m.adjoint();
        let (vals, vecs) = hermitian_eigen(&h);
        let mut rec = CMat::zeros(5, 5);
        for i in 0..5 {
            rec += vecs.column(i) * vecs.column(i).adjoint() * cplx(vals[i], 0.0);
        }
        assert!(rel_fro_err(&rec, &h) < 1e-12);
        assert!(unitary_deviation(&vecs) < 1e-12);
        for i in 1..5 {
            assert!(vals[i - 1] >= vals[i]);
        }
    }

    #[test]
    fn complete_unitary_orthonormal() {
        let q = jacobi_svd(&sample_iid(6, 2, 77)).u;
        let q = q.view((0, 0), (6, 2)).into_owned();
        let full = complete_unitary(&q);
        assert!(unitary_deviation(&full) < 1e-12);
        assert_eq!(full.view((0, 0), (6, 2)).into_owned(), q);
    }

    #[test]
    fn gsvd_identity_pair() {
        let a = CMat::identity(2, 2);
        let b = CMat::identity(2, 2);
        let f = gsvd_pair(&a, &b, tol_for(&a, &b)).unwrap();
        assert_eq!((f.k, f.r, f.s), (2, 0, 2));
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        for i in 0..2 {
            assert!((f.b_gains[i] - inv_sqrt2).abs() < 1e-10);
            assert!((f.e_gains[i] - inv_sqrt2).abs() < 1e-10);
        }
        assert!(f.check_invariants(&a, &b).is_empty());
    }

    #[test]
    fn gsvd_zero_eavesdropper() {
        let a = CMat::identity(2, 2);
        let b = CMat::zeros(1, 2);
        let f = gsvd_pair(&a, &b, tol_for(&a, &b)).unwrap();
        assert_eq!((f.k, f.r, f.s), (2, 2, 0));
        assert!(f.check_invariants(&a, &b).is_empty());
    }

    #[test]
    fn gsvd_generic_3x2x4() {
        // random 3×4 and 2×4: generically k=4, r=2, s=1
        let (a, b) = rand_pair(3, 2, 4, 7);
        let f = gsvd_pair(&a, &b, tol_for(&a, &b)).unwrap();
        assert_eq!((f.k, f.r, f.s), (4, 2, 1));
        let t = tol_for(&a, &b);
        assert_eq!(f.k, numerical_rank(&stack_rows(&a, &b), t));
        assert_eq!(f.r, f.k - numerical_rank(&b, t));
        assert_eq!(f.r + f.s, numerical_rank(&a, t));
        assert!(
            f.check_invariants(&a, &b).is_empty(),
            "{:?}",
            f.check_invariants(&a, &b)
        );
    }

    #[test]
    fn gsvd_round_trip_random_dims() {
        // 200 random triples with dimensions ≤ 8
        let mut rng_state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            rng_state ^= rng_state << 13;
            rng_state ^= rng_state >> 7;
            rng_state ^= rng_state << 17;
            rng_state
        };
        for trial in 0..200 {
            let n_r = (next() % 8 + 1) as usize;
            let n_e = (next() % 8 + 1) as usize;
            let n_t = (next() % 8 + 1) as usize;
            let (a, b) = rand_pair(n_r, n_e, n_t, 1000 + trial);
            let f = gsvd_pair(&a, &b, tol_for(&a, &b)).unwrap();
            let bad = f.check_invariants(&a, &b);
            assert!(
                bad.is_empty(),
                "trial {trial} dims {n_r}x{n_e}x{n_t}: {bad:?}"
            );
            let t = tol_for(&a, &b);
            assert_eq!(f.r + f.s, numerical_rank(&a, t), "trial {trial}");
            assert_eq!(f.r, f.k - numerical_rank(&b, t), "trial {trial}");
        }
    }

    #[test]
    fn gsvd_zero_pair() {
        let a = CMat::zeros(2, 3);
        let b = CMat::zeros(2, 3);
        let f = gsvd_pair(&a, &b, 1e-9).unwrap();
        assert_eq!((f.k, f.r, f.s), (0, 0, 0));
    }

    #[test]
    fn subspace_dims_identity_pair() {
        let a = CMat::identity(2, 2);
        let d = subspace_dims(&a, &a, 1e-9).unwrap();
        assert_eq!(
            d,
            SubspaceDims {
                k: 2,
                r: 0,
                s: 2,
                dim_s_ea: 0,
                dim_s_n: 0
            }
        );
    }

    #[test]
    fn subspace_dims_generic_4x3x2() {
        let (a, b) = rand_pair(3, 2, 4, 21);
        let d = subspace_dims(&a, &b, tol_for(&a, &b)).unwrap();
        assert_eq!((d.k, d.r, d.s, d.dim_s_ea, d.dim_s_n), (4, 2, 1, 1, 0));
    }

    #[test]
    fn subspace_dims_large_instance() {
        // 64×48×48: k = 64, r = k − rank(B) = 16, s = rank(A) − r = 32
        let (a, b) = rand_pair(48, 48, 64, 33);
        let d = subspace_dims(&a, &b, tol_for(&a, &b)).unwrap();
        assert_eq!((d.k, d.r, d.s), (64, 16, 32));
        assert_eq!(d.r + d.s, 48);
        assert_eq!(d.r, d.k - 48);
    }

    #[test]
    fn null_space_simple() {
        let a = CMat::from_row_slice(
            2,
            2,
            &[cplx(1.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0)],
        );
        let v = null_space_basis(&a, 1e-10);
        assert_eq!(v.ncols(), 1);
        assert!((v[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(v[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn null_space_full_rank() {
        let a = CMat::identity(3, 3);
        let v = null_space_basis(&a, 1e-10);
        assert_eq!(v.ncols(), 0);
    }

    #[test]
    fn null_space_projector_oracle() {
        // random full-row-rank 3×5: projector V V^H equals I − A^H (A A^H)^{-1} A
        let a = sample_iid(3, 5, 5);
        let v = null_space_basis(&a, default_rank_tol(3, 5));
        assert_eq!(v.ncols(), 2);
        let gram = &a * a.adjoint();
        let inv = gram.try_inverse().unwrap();
        let projector = CMat::identity(5, 5) - a.adjoint() * inv * &a;
        let vvh = &v * v.adjoint();
        assert!(rel_fro_err(&vvh, &projector) < 1e-8);
        assert!((&a * &v).norm() <= default_rank_tol(3, 5) * a.norm());
    }

    #[test]
    fn sqrt_factor_identity() {
        let r = CMat::identity(3, 3);
        let t = matrix_sqrt_factor(&r).unwrap();
        assert_eq!(t.nrows(), 3);
        assert!(rel_fro_err(&(t.adjoint() * &t), &r) < 1e-12);
    }

    #[test]
    fn sqrt_factor_rank_deficient_diagonal() {
        let r = CMat::from_row_slice(
            3,
            3,
            &[
                cplx(4.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0),
                cplx(0.0, 0.0), cplx(1.0, 0.0), cplx(0.0, 0.0),
                cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0),
            ],
        );
        let t = matrix_sqrt_factor(&r).unwrap();
        assert_eq!(t.nrows(), 2);
        assert!(rel_fro_err(&(t.adjoint() * &t), &r) < 1e-12);
    }

    #[test]
    fn sqrt_factor_random_psd_round_trip() {
        let m = sample_iid(4, 4, 11);
        let r = m.adjoint() * &m;
        let t = matrix_sqrt_factor(&r).unwrap();
        assert!(rel_fro_err(&(t.adjoint() * &t), &r) < 1e-9);
    }

    #[test]
    fn sqrt_factor_rejects_non_hermitian() {
        let m = sample_iid(3, 3, 13);
        assert!(matches!(
            matrix_sqrt_factor(&m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn sqrt_psd_reconstructs() {
        let m = sample_iid(4, 4, 19);
        let r = m.adjoint() * &m;
        let s = matrix_sqrt_psd(&r).unwrap();
        assert!(rel_fro_err(&(&s * &s), &r) < 1e-9);
        assert!(hermitian_deviation(&s) < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let m = sample_iid(3, 2, 99);
        let parsed = parse_matrix_text(&format_matrix_text(&m)).unwrap();
        assert_eq!(parsed, m);
    }

    #[test]
    fn text_rejects_truncated() {
        assert!(parse_matrix_text("2 2\n1 0\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn prop_gsvd_pairing_and_ordering(seed in 0u64..10_000, n_r in 1usize..6, n_e in 1usize..6, n_t in 1usize..6) {
            let (a, b) = rand_pair(n_r, n_e, n_t, seed);
            let f = gsvd_pair(&a, &b, tol_for(&a, &b)).unwrap();
            for p in 0..f.s {
                let pair = f.b_gains[p].powi(2) + f.e_gains[p].powi(2);
                prop_assert!((pair - 1.0).abs() < 1e-10);
                if p + 1 < f.s {
                    prop_assert!(f.b_gains[p] <= f.b_gains[p + 1]);
                    prop_assert!(f.e_gains[p] >= f.e_gains[p + 1]);
                }
            }
        }
    }
}
