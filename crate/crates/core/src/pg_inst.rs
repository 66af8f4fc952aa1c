//! Instantaneous-CSI pipeline: the baseline GSVD precoder, the per-group
//! GSVD construction with subchannel pairing, secrecy-rate evaluation, and
//! gradient-ascent optimization of the per-group powers and unitaries.
//!
//! Rates are always evaluated from the exact effective matrices
//! U_ba^H·H_ba·G and U_ea^H·H_ea·G sliced to group coordinates — never from
//! the √ω-scaled diagonal bookkeeping, which only informs pairing decisions.
//! A decoupling-residual gate asserts that the off-group energy of those
//! matrices is negligible instead of assuming it.
//!
//! Power convention: optimization maintains tr(A P A^H) = N_t and assembly
//! rescales G by √(P/N_t), so the transmit constraint tr(G G^H) ≤ P binds
//! with equality whenever any power is nonzero.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::WiretapInstance;
use crate::constellation::Constellation;
use crate::error::Error;
use crate::matcore::{self, cplx, default_rank_tol, CMat, GsvdFactorization};
use crate::miengine::{self, McConfig};
use crate::Result;

/// Relative off-group energy above which the decoupling check fails.
pub const DECOUPLING_TOL: f64 = 1e-8;

/// A partition of the (possibly zero-padded) subchannel positions into S
/// groups of size N_s. `perm[j]` is the position assigned to slot j; slots
/// are grouped in consecutive chunks of `n_s`.
#[derive(Debug, Clone)]
pub struct Grouping {
    pub perm: Vec<usize>,
    pub n_s: usize,
}

impl Grouping {
    pub fn new(perm: Vec<usize>, n_s: usize) -> Result<Self> {
        if n_s == 0 || perm.is_empty() || !perm.len().is_multiple_of(n_s) {
            return Err(Error::InvalidParameter(format!(
                "permutation length {} not a multiple of group size {n_s}",
                perm.len()
            )));
        }
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::InvalidParameter(format!(
                    "not a permutation of 0..{}: {perm:?}",
                    perm.len()
                )));
            }
            seen[p] = true;
        }
        Ok(Self { perm, n_s })
    }

    /// Number of groups S.
    pub fn group_count(&self) -> usize {
        self.perm.len() / self.n_s
    }

    /// Total slot count (N_t, zero-padded up to a multiple of N_s).
    pub fn padded_len(&self) -> usize {
        self.perm.len()
    }

    /// Positions owned by group `s`.
    pub fn positions(&self, s: usize) -> &[usize] {
        &self.perm[s * self.n_s..(s + 1) * self.n_s]
    }
}

/// Zero-padded symbol dimension for a given N_t and group size.
pub fn padded_dim(n_t: usize, n_s: usize) -> usize {
    n_t.div_ceil(n_s) * n_s
}

/// Per-group diagonal gain bookkeeping (from the √ω-scaled diagonals).
#[derive(Debug, Clone)]
pub struct GroupChannels {
    pub bob_gains: Vec<DVector<f64>>,
    pub eve_gains: Vec<DVector<f64>>,
    pub positions: Vec<Vec<usize>>,
}

/// The assembled per-group precoder. `g` is N_t×L where L is the padded
/// symbol dimension (equal to N_t whenever N_s divides N_t).
#[derive(Debug, Clone)]
pub struct PgPrecoder {
    pub gsvd: GsvdFactorization,
    pub grouping: Grouping,
    /// Per-group diagonal powers after normalization.
    pub p_groups: Vec<DVector<f64>>,
    /// Per-group unitaries.
    pub v_groups: Vec<CMat>,
    /// Assembled transmit matrix, scaled so tr(G G^H) equals the budget.
    pub g: CMat,
    pub power_budget: f64,
    /// Set when every power entry is zero (G = 0).
    pub zero_power: bool,
}

/// The √ω-scaled diagonal bookkeeping: N_t-length diagonals whose layout is
/// (eavesdropper-only block, shared block, receiver-only block, null block)
/// for the receiver and (visible blocks, then zeros) for the eavesdropper.
/// The division by √ω_i uses Omega's diagonal; these values drive pairing
/// heuristics only, never rates.
pub fn build_hat_sigmas(gsvd: &GsvdFactorization) -> (DVector<f64>, DVector<f64>) {
    let n = gsvd.n_t;
    let omega = gsvd.omega_diag();
    let mut bob = DVector::zeros(n);
    let mut eve = DVector::zeros(n);
    for pos in 0..n {
        let scale = if pos < gsvd.k {
            1.0 / omega[pos].sqrt()
        } else {
            0.0
        };
        bob[pos] = gsvd.bob_gain_raw(pos) * scale;
        eve[pos] = gsvd.eve_gain_raw(pos) * scale;
    }
    (bob, eve)
}

/// Per-group gain bookkeeping for a grouping (positions past N_t are
/// zero-padding and carry zero gains).
pub fn group_channels(gsvd: &GsvdFactorization, grouping: &Grouping) -> GroupChannels {
    let (bob, eve) = build_hat_sigmas(gsvd);
    let sc = grouping.group_count();
    let mut bob_gains = Vec::with_capacity(sc);
    let mut eve_gains = Vec::with_capacity(sc);
    let mut positions = Vec::with_capacity(sc);
    for s in 0..sc {
        let pos = grouping.positions(s).to_vec();
        bob_gains.push(DVector::from_iterator(
            grouping.n_s,
            pos.iter().map(|&t| if t < gsvd.n_t { bob[t] } else { 0.0 }),
        ));
        eve_gains.push(DVector::from_iterator(
            grouping.n_s,
            pos.iter().map(|&t| if t < gsvd.n_t { eve[t] } else { 0.0 }),
        ));
        positions.push(pos);
    }
    GroupChannels {
        bob_gains,
        eve_gains,
        positions,
    }
}

/// Default pairing: one receiver-only subchannel per group where supply
/// allows, remaining slots filled round-robin from the strongest remaining
/// receiver gains (stable order: gain descending, index ascending).
pub fn default_pairing(gsvd: &GsvdFactorization, n_s: usize) -> Result<Grouping> {
    if n_s == 0 {
        return Err(Error::InvalidParameter("group size must be positive".into()));
    }
    let padded = padded_dim(gsvd.n_t, n_s);
    let s_count = padded / n_s;
    let (bob_hat, _) = build_hat_sigmas(gsvd);
    let bob_only_range = gsvd.k - gsvd.r..gsvd.k;
    let bob_only: Vec<usize> = bob_only_range.clone().collect();
    let mut rest: Vec<usize> = (0..padded).filter(|t| !bob_only_range.contains(t)).collect();
    rest.sort_by(|&a, &b| {
        let ga = if a < gsvd.n_t { bob_hat[a] } else { 0.0 };
        let gb = if b < gsvd.n_t { bob_hat[b] } else { 0.0 };
        gb.total_cmp(&ga).then(a.cmp(&b))
    });
    let mut groups: Vec<Vec<usize>> = vec![Vec::with_capacity(n_s); s_count];
    let mut bob_iter = bob_only.into_iter();
    for g in groups.iter_mut() {
        if let Some(t) = bob_iter.next() {
            g.push(t);
        }
    }
    let mut pool: Vec<usize> = bob_iter.collect();
    pool.extend(rest);
    let mut pi = pool.into_iter();
    loop {
        let mut placed = false;
        for g in groups.iter_mut() {
            if g.len() < n_s {
                if let Some(t) = pi.next() {
                    g.push(t);
                    placed = true;
                }
            }
        }
        if !placed {
            break;
        }
    }
    let perm: Vec<usize> = groups.into_iter().flatten().collect();
    Grouping::new(perm, n_s)
}

/// High-SNR pairing: requires (k − N₂)·N_s ≥ N_t, i.e. r·N_s ≥ N_t. Each
/// group gets exactly one receiver-only subchannel in its last slot with
/// initial power 1/ω at that position; every other slot carries zero power,
/// so nothing is radiated on eavesdropper-visible dimensions.
pub fn high_snr_pairing(
    gsvd: &GsvdFactorization,
    n_s: usize,
) -> Result<(Grouping, Vec<DVector<f64>>)> {
    let n2 = gsvd.k - gsvd.r;
    if gsvd.r * n_s < gsvd.n_t {
        return Err(Error::PairingInfeasible {
            k: gsvd.k,
            n2,
            n_s,
            product: gsvd.r * n_s,
            n_t: gsvd.n_t,
        });
    }
    let padded = padded_dim(gsvd.n_t, n_s);
    let s_count = padded / n_s;
    let omega = gsvd.omega_diag();
    let powered: Vec<usize> = (gsvd.k - gsvd.r..gsvd.k).take(s_count).collect();
    let mut fillers: Vec<usize> = (0..padded).filter(|t| !powered.contains(t)).collect();
    fillers.reverse(); // pop from the low-index end
    let mut groups = Vec::with_capacity(s_count);
    let mut p_init = Vec::with_capacity(s_count);
    for &t_pow in &powered {
        let mut group = Vec::with_capacity(n_s);
        for _ in 0..n_s - 1 {
            group.push(fillers.pop().expect("enough filler positions"));
        }
        group.push(t_pow);
        let mut p = DVector::zeros(n_s);
        p[n_s - 1] = 1.0 / omega[t_pow];
        groups.push(group);
        p_init.push(p);
    }
    let perm: Vec<usize> = groups.into_iter().flatten().collect();
    Ok((Grouping::new(perm, n_s)?, p_init))
}

/// Radiated-power weights κ_t = ‖Ω column t‖² (zero past k).
fn kappa_weights(gsvd: &GsvdFactorization, padded: usize) -> DVector<f64> {
    let mut k = DVector::zeros(padded);
    for t in 0..gsvd.k {
        k[t] = gsvd.omega.column(t).norm_squared();
    }
    k
}

fn trace_apah(p_diag: &DVector<f64>, kappa: &DVector<f64>) -> f64 {
    p_diag.iter().zip(kappa.iter()).map(|(p, k)| p * k).sum()
}

/// Assembles G = √(P/N_t)·U_a·A·P^{1/2}·V from group parameters, normalizing
/// the powers so tr(A P A^H) = N_t first (so tr(G G^H) equals the budget).
/// All-zero power yields the zero precoder with a warning flag.
pub fn assemble_precoder(
    gsvd: &GsvdFactorization,
    grouping: &Grouping,
    p_groups: &[DVector<f64>],
    v_groups: &[CMat],
    p_budget: f64,
) -> Result<PgPrecoder> {
    let padded = grouping.padded_len();
    let s_count = grouping.group_count();
    if padded_dim(gsvd.n_t, grouping.n_s) != padded {
        return Err(Error::DimensionMismatch(format!(
            "grouping covers {padded} slots but N_t = {} with N_s = {}",
            gsvd.n_t, grouping.n_s
        )));
    }
    if p_groups.len() != s_count || v_groups.len() != s_count {
        return Err(Error::DimensionMismatch(format!(
            "expected {s_count} groups, got {} powers / {} unitaries",
            p_groups.len(),
            v_groups.len()
        )));
    }
    for (s, (p, v)) in p_groups.iter().zip(v_groups).enumerate() {
        if p.len() != grouping.n_s || v.nrows() != grouping.n_s || v.ncols() != grouping.n_s {
            return Err(Error::DimensionMismatch(format!(
                "group {s} blocks have the wrong size"
            )));
        }
        if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "group {s} has negative or non-finite power"
            )));
        }
        let dev = matcore::unitary_deviation(v);
        if dev > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "group {s} V deviates from unitary by {dev:.3e}"
            )));
        }
    }
    if p_budget <= 0.0 {
        return Err(Error::InvalidParameter(
            "power budget must be positive".into(),
        ));
    }

    let kappa = kappa_weights(gsvd, padded);
    let mut p_diag = DVector::zeros(padded);
    for s in 0..s_count {
        for (i, &pos) in grouping.positions(s).iter().enumerate() {
            p_diag[pos] = p_groups[s][i];
        }
    }
    let tau = trace_apah(&p_diag, &kappa);
    if tau <= 0.0 {
        return Ok(PgPrecoder {
            gsvd: gsvd.clone(),
            grouping: grouping.clone(),
            p_groups: p_groups.to_vec(),
            v_groups: v_groups.to_vec(),
            g: CMat::zeros(gsvd.n_t, padded),
            power_budget: p_budget,
            zero_power: true,
        });
    }
    let scale = gsvd.n_t as f64 / tau;
    let p_norm: Vec<DVector<f64>> = p_groups.iter().map(|p| p * scale).collect();
    let g = assemble_g(gsvd, grouping, &p_norm, v_groups, p_budget);
    Ok(PgPrecoder {
        gsvd: gsvd.clone(),
        grouping: grouping.clone(),
        p_groups: p_norm,
        v_groups: v_groups.to_vec(),
        g,
        power_budget: p_budget,
        zero_power: false,
    })
}

/// G = √(P/N_t)·U_a·A_pad·P^{1/2}·V with A_pad the N_t×L padded [[Ω,0],[0,0]].
fn assemble_g(
    gsvd: &GsvdFactorization,
    grouping: &Grouping,
    p_groups: &[DVector<f64>],
    v_groups: &[CMat],
    p_budget: f64,
) -> CMat {
    let padded = grouping.padded_len();
    let n_t = gsvd.n_t;
    let mut pv = CMat::zeros(padded, padded);
    for s in 0..grouping.group_count() {
        let pos = grouping.positions(s);
        for (i, &pi) in pos.iter().enumerate() {
            let root_p = cplx(p_groups[s][i].sqrt(), 0.0);
            for (j, &pj) in pos.iter().enumerate() {
                pv[(pi, pj)] = root_p * v_groups[s][(i, j)];
            }
        }
    }
    let mut a_pad = CMat::zeros(n_t, padded);
    a_pad
        .view_mut((0, 0), (gsvd.k, gsvd.k))
        .copy_from(&gsvd.omega);
    let scale = cplx((p_budget / n_t as f64).sqrt(), 0.0);
    let mut g = &gsvd.u_a * a_pad * pv;
    for v in g.iter_mut() {
        *v *= scale;
    }
    g
}

/// Secrecy-rate report in bits.
#[derive(Debug, Clone, Copy)]
pub struct RateReport {
    pub rate_bob: f64,
    pub rate_eve: f64,
    /// max(0, rate_bob − rate_eve)
    pub secrecy: f64,
    /// signed difference rate_bob − rate_eve
    pub diff: f64,
    pub std_error_bob: f64,
    pub std_error_eve: f64,
}

impl RateReport {
    pub fn zero() -> Self {
        Self {
            rate_bob: 0.0,
            rate_eve: 0.0,
            secrecy: 0.0,
            diff: 0.0,
            std_error_bob: 0.0,
            std_error_eve: 0.0,
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.std_error_bob * self.std_error_bob + self.std_error_eve * self.std_error_eve).sqrt()
    }
}

/// Slices M = U^H·H·G into per-group blocks after the decoupling gate.
/// `reference_scale` sets the absolute floor (‖H‖·‖G‖): an M entirely below
/// the threshold is a structurally zero channel; a group block below it is
/// structurally disconnected and evaluates to exactly zero rate.
fn slice_groups(
    m: &CMat,
    grouping: &Grouping,
    reference_scale: f64,
    row_of_position: impl Fn(usize) -> Option<usize>,
) -> Result<Vec<CMat>> {
    let mut blocks = Vec::with_capacity(grouping.group_count());
    let floor = DECOUPLING_TOL * reference_scale;
    if m.norm() <= floor {
        for s in 0..grouping.group_count() {
            let rows = grouping
                .positions(s)
                .iter()
                .filter_map(|&t| row_of_position(t))
                .count();
            blocks.push(CMat::zeros(rows, grouping.n_s));
        }
        return Ok(blocks);
    }
    let total_sq = m.norm_squared();
    let mut kept_sq = 0.0;
    for s in 0..grouping.group_count() {
        let pos = grouping.positions(s);
        let rows: Vec<usize> = pos.iter().filter_map(|&t| row_of_position(t)).collect();
        let mut block = CMat::zeros(rows.len(), pos.len());
        for (bi, &ri) in rows.iter().enumerate() {
            for (bj, &cj) in pos.iter().enumerate() {
                block[(bi, bj)] = m[(ri, cj)];
            }
        }
        kept_sq += block.norm_squared();
        blocks.push(block);
    }
    let off = (total_sq - kept_sq).max(0.0).sqrt();
    // relative to ‖H‖·‖G‖: the 1e-9 GSVD reconstruction gate bounds the
    // legitimate leakage on that scale, while a malformed assembly leaks
    // energy of order ‖H‖·‖G‖ itself
    if off / reference_scale > DECOUPLING_TOL {
        return Err(Error::DecouplingResidual {
            residual: off / reference_scale,
            tol: DECOUPLING_TOL,
        });
    }
    for block in blocks.iter_mut() {
        if block.norm() <= floor {
            block.fill(cplx(0.0, 0.0));
        }
    }
    Ok(blocks)
}

fn group_seed(base: u64, side: u64, group: usize) -> u64 {
    base ^ (side << 32) ^ ((group as u64) << 16)
}

/// Secrecy rate of an assembled precoder over exact effective channels.
/// Requires instantaneous eavesdropper CSI.
pub fn secrecy_rate(
    prec: &PgPrecoder,
    inst: &WiretapInstance,
    c: &Constellation,
    mc: &McConfig,
) -> Result<RateReport> {
    let h_ea = inst.h_ea.as_ref().ok_or_else(|| {
        Error::InvalidParameter("secrecy_rate needs instantaneous eavesdropper CSI".into())
    })?;
    let m_b = prec.gsvd.u_ba.adjoint() * &inst.h_ba * &prec.g;
    let m_e = prec.gsvd.u_ea.adjoint() * h_ea * &prec.g;
    let gsvd = &prec.gsvd;
    let scale_b = inst.h_ba.norm() * prec.g.norm();
    let scale_e = h_ea.norm() * prec.g.norm();
    let bob_blocks = slice_groups(&m_b, &prec.grouping, scale_b, |t| {
        gsvd.bob_row_of_position(t)
    })?;
    let eve_blocks = slice_groups(&m_e, &prec.grouping, scale_e, |t| {
        gsvd.eve_row_of_position(t)
    })?;

    let mut report = RateReport::zero();
    let mut var_bob = 0.0;
    let mut var_eve = 0.0;
    for s in 0..prec.grouping.group_count() {
        let bb = &bob_blocks[s];
        if bb.nrows() > 0 && bb.norm() > 0.0 {
            let est = miengine::mutual_info(
                bb,
                c,
                inst.sigma_b,
                &mc.reseed(group_seed(mc.seed, 0xB0B, s)),
            )?;
            report.rate_bob += est.value;
            var_bob += est.std_error * est.std_error;
        }
        let eb = &eve_blocks[s];
        if eb.nrows() > 0 && eb.norm() > 0.0 {
            let est = miengine::mutual_info(
                eb,
                c,
                inst.sigma_e,
                &mc.reseed(group_seed(mc.seed, 0xE5E, s)),
            )?;
            report.rate_eve += est.value;
            var_eve += est.std_error * est.std_error;
        }
    }
    report.diff = report.rate_bob - report.rate_eve;
    report.secrecy = report.diff.max(0.0);
    report.std_error_bob = var_bob.sqrt();
    report.std_error_eve = var_eve.sqrt();
    Ok(report)
}

/// Receiver rate over exact sliced group channels U_ba^H·H_ba·G; returns
/// (rate, std_error). Shared by the instantaneous and statistical pipelines.
pub(crate) fn bob_rate_exact(
    prec: &PgPrecoder,
    h_ba: &CMat,
    sigma_b: f64,
    c: &Constellation,
    mc: &McConfig,
) -> Result<(f64, f64)> {
    let m_b = prec.gsvd.u_ba.adjoint() * h_ba * &prec.g;
    let scale_b = h_ba.norm() * prec.g.norm();
    let gsvd = &prec.gsvd;
    let blocks = slice_groups(&m_b, &prec.grouping, scale_b, |t| {
        gsvd.bob_row_of_position(t)
    })?;
    let mut rate = 0.0;
    let mut var = 0.0;
    for (s, bb) in blocks.iter().enumerate() {
        if bb.nrows() > 0 && bb.norm() > 0.0 {
            let est = miengine::mutual_info(
                bb,
                c,
                sigma_b,
                &mc.reseed(group_seed(mc.seed, 0xB0B, s)),
            )?;
            rate += est.value;
            var += est.std_error * est.std_error;
        }
    }
    Ok((rate, var.sqrt()))
}

/// Brute-force joint secrecy rate I(y_b; x) − I(y_e; x) over the full
/// unsliced channels; cost M^(2L). The tiny-instance oracle for the grouped
/// evaluation.
pub fn full_joint_secrecy(
    prec: &PgPrecoder,
    inst: &WiretapInstance,
    c: &Constellation,
    mc: &McConfig,
) -> Result<RateReport> {
    let h_ea = inst.h_ea.as_ref().ok_or_else(|| {
        Error::InvalidParameter("full_joint_secrecy needs instantaneous eavesdropper CSI".into())
    })?;
    let hb = &inst.h_ba * &prec.g;
    let he = h_ea * &prec.g;
    let est_b = miengine::mutual_info(&hb, c, inst.sigma_b, &mc.reseed(mc.seed ^ 0xB0B))?;
    let est_e = miengine::mutual_info(&he, c, inst.sigma_e, &mc.reseed(mc.seed ^ 0xE5E))?;
    let diff = est_b.value - est_e.value;
    Ok(RateReport {
        rate_bob: est_b.value,
        rate_eve: est_e.value,
        secrecy: diff.max(0.0),
        diff,
        std_error_bob: est_b.std_error,
        std_error_eve: est_e.std_error,
    })
}

/// Baseline GSVD precoder: diagonal power allocation, V = I, power granted
/// only to subchannels where the receiver's gain-to-noise beats the
/// eavesdropper's. The allocation maximizes the sum of per-subchannel scalar
/// rate differences by projected gradient ascent under Σ w ≤ P; slack is
/// allowed because saturating more power on a shared subchannel only feeds
/// the eavesdropper.
pub fn gsvd_baseline(
    gsvd: &GsvdFactorization,
    inst: &WiretapInstance,
    c: &Constellation,
    mc: &McConfig,
) -> Result<(PgPrecoder, RateReport)> {
    let n_t = gsvd.n_t;
    let grouping = Grouping::new((0..n_t).collect(), 1)?;
    let kappa = kappa_weights(gsvd, n_t);
    let scale_amp_sq = inst.p / n_t as f64;

    let active: Vec<usize> = (0..gsvd.k)
        .filter(|&t| {
            kappa[t] > 0.0
                && gsvd.bob_gain_raw(t) / inst.sigma_b > gsvd.eve_gain_raw(t) / inst.sigma_e
        })
        .collect();
    let identity_v: Vec<CMat> = (0..n_t).map(|_| CMat::identity(1, 1)).collect();
    if active.is_empty() {
        let p_zero: Vec<DVector<f64>> = (0..n_t).map(|_| DVector::zeros(1)).collect();
        let prec = assemble_precoder(gsvd, &grouping, &p_zero, &identity_v, inst.p)?;
        return Ok((prec, RateReport::zero()));
    }

    // radiated powers w_t on the active set; the received amplitude on
    // subchannel t is gain_t·√(w_t/κ_t)
    let scalar_mi = |gain: f64, sigma: f64, seed: u64| -> f64 {
        if gain <= 0.0 {
            return 0.0;
        }
        let h = CMat::from_row_slice(1, 1, &[cplx(gain, 0.0)]);
        miengine::mutual_info(&h, c, sigma, &mc.reseed(seed))
            .map(|e| e.value)
            .unwrap_or(0.0)
    };
    let eval = |w: &[f64]| -> f64 {
        active
            .iter()
            .enumerate()
            .map(|(ai, &t)| {
                let amp = (w[ai] / kappa[t]).max(0.0).sqrt();
                scalar_mi(
                    gsvd.bob_gain_raw(t) * amp,
                    inst.sigma_b,
                    group_seed(mc.seed, 0xBA5E, t),
                ) - scalar_mi(
                    gsvd.eve_gain_raw(t) * amp,
                    inst.sigma_e,
                    group_seed(mc.seed, 0xEA5E, t),
                )
            })
            .sum()
    };
    let scalar_grad = |gain: f64, p_eff: f64, sigma: f64, seed: u64| -> f64 {
        if gain <= 0.0 {
            return 0.0;
        }
        let gains = DVector::from_vec(vec![gain]);
        let powers = DVector::from_vec(vec![p_eff]);
        let v1 = CMat::identity(1, 1);
        miengine::grad_mi_wrt_group_params(&gains, &powers, &v1, c, sigma, &mc.reseed(seed))
            .map(|(gp, _)| gp[0])
            .unwrap_or(0.0)
    };
    let grad = |w: &[f64]| -> Vec<f64> {
        active
            .iter()
            .enumerate()
            .map(|(ai, &t)| {
                let p_eff = (w[ai] / kappa[t]).max(0.0);
                let gb = scalar_grad(
                    gsvd.bob_gain_raw(t),
                    p_eff,
                    inst.sigma_b,
                    group_seed(mc.seed, 0xBA5E, t),
                );
                let ge = scalar_grad(
                    gsvd.eve_gain_raw(t),
                    p_eff,
                    inst.sigma_e,
                    group_seed(mc.seed, 0xEA5E, t),
                );
                (gb - ge) / kappa[t]
            })
            .collect()
    };

    let mut w = vec![inst.p / active.len() as f64; active.len()];
    let mut best = eval(&w);
    for _iter in 0..60 {
        let g = grad(&w);
        let gmax = g.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if gmax < 1e-12 {
            break;
        }
        let wmax = w.iter().fold(0.0f64, |a, &b| a.max(b));
        let mut mu = wmax.max(inst.p / active.len() as f64) / gmax;
        let mut improved = false;
        for _half in 0..24 {
            let mut cand: Vec<f64> = w
                .iter()
                .zip(&g)
                .map(|(wi, gi)| (wi + mu * gi).max(0.0))
                .collect();
            let total: f64 = cand.iter().sum();
            if total > inst.p {
                project_simplex(&mut cand, inst.p);
            }
            let val = eval(&cand);
            if val > best + 1e-12 {
                w = cand;
                best = val;
                improved = true;
                break;
            }
            mu *= 0.5;
        }
        if !improved {
            break;
        }
    }

    // direct assembly without the equality renormalization: tr(GG^H) = Σw ≤ P
    let mut p_groups: Vec<DVector<f64>> = (0..n_t).map(|_| DVector::zeros(1)).collect();
    for (ai, &t) in active.iter().enumerate() {
        p_groups[t][0] = w[ai] / kappa[t] / scale_amp_sq;
    }
    let zero = w.iter().all(|&x| x == 0.0);
    let g_mat = assemble_g(gsvd, &grouping, &p_groups, &identity_v, inst.p);
    let prec = PgPrecoder {
        gsvd: gsvd.clone(),
        grouping,
        p_groups,
        v_groups: identity_v,
        g: g_mat,
        power_budget: inst.p,
        zero_power: zero,
    };
    let report = secrecy_rate(&prec, inst, c, mc)?;
    Ok((prec, report))
}

/// Euclidean projection onto {w ≥ 0, Σ w = budget}.
fn project_simplex(w: &mut [f64], budget: f64) {
    let mut sorted: Vec<f64> = w.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let cand = (cumsum - budget) / (i as f64 + 1.0);
        if v - cand > 0.0 {
            theta = cand;
        }
    }
    for v in w.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

/// Optimization settings for the gradient-ascent algorithms.
#[derive(Debug, Clone, Copy)]
pub struct OptimizerConfig {
    pub n_iter: usize,
    /// Convergence threshold on the objective improvement, in bits.
    pub eps_bits: f64,
    pub restarts: usize,
    pub seed: u64,
    pub step_init: f64,
    pub max_halvings: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_iter: 100,
            eps_bits: 1e-4,
            restarts: 5,
            seed: 0,
            step_init: 1.0,
            max_halvings: 20,
        }
    }
}

/// Result of a precoder optimization run.
#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub precoder: PgPrecoder,
    pub report: RateReport,
    /// Objective trace per restart (index 0 is the initial value).
    pub traces: Vec<Vec<f64>>,
    pub best_restart: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Random unitary from a seeded Gaussian matrix via QR.
pub fn random_unitary(n: usize, seed: u64) -> CMat {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let g = CMat::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        cplx(re, im)
    });
    g.qr().q()
}

/// Closest unitary to `m` (polar factor).
pub fn polar_unitary(m: &CMat) -> CMat {
    let svd = matcore::jacobi_svd(m);
    &svd.u * svd.v.adjoint()
}

/// Secrecy objective over structured group channels: Σ_s I_b,s − I_e,s with
/// common random numbers per group and side, so the optimizer sees a
/// deterministic function.
pub(crate) struct GroupObjective<'a> {
    /// √(P/N_t)-scaled receiver gains per group slot.
    pub bob_gains: Vec<DVector<f64>>,
    /// Eavesdropper side; an empty vector means that side contributes a
    /// deterministic closed form supplied through `eve_override`.
    pub eve_gains: Vec<DVector<f64>>,
    /// κ at each group slot (radiated-power weight).
    pub kappa: Vec<DVector<f64>>,
    pub sigma_b: f64,
    pub sigma_e: f64,
    pub n_t: f64,
    pub c: &'a Constellation,
    pub mc: McConfig,
    /// When set, replaces the per-group Monte-Carlo eavesdropper terms with
    /// a closed-form value/gradient pair (statistical-CSI pipeline).
    pub eve_override: Option<EveOverride<'a>>,
}

/// Closed-form eavesdropper objective: value and gradients with the same
/// signatures as the Monte-Carlo side.
#[allow(clippy::type_complexity)]
pub(crate) struct EveOverride<'a> {
    pub value: Box<dyn Fn(&[DVector<f64>], &[CMat]) -> f64 + Sync + 'a>,
    pub gradients:
        Box<dyn Fn(&[DVector<f64>], &[CMat]) -> (Vec<DVector<f64>>, Vec<CMat>) + Sync + 'a>,
}

impl GroupObjective<'_> {
    fn s_count(&self) -> usize {
        self.bob_gains.len()
    }

    fn normalize(&self, p: &mut [DVector<f64>]) -> bool {
        let mut tau = 0.0;
        for (ps, ks) in p.iter().zip(&self.kappa) {
            tau += ps.iter().zip(ks.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        if tau <= 0.0 {
            return false;
        }
        let scale = self.n_t / tau;
        for ps in p.iter_mut() {
            *ps *= scale;
        }
        true
    }

    fn value(&self, p: &[DVector<f64>], v: &[CMat]) -> f64 {
        let mut total = 0.0;
        for s in 0..self.s_count() {
            let hb = miengine::assemble_group_channel(&self.bob_gains[s], &p[s], &v[s]);
            if hb.norm() > 0.0 {
                total += miengine::mutual_info(
                    &hb,
                    self.c,
                    self.sigma_b,
                    &self.mc.reseed(group_seed(self.mc.seed, 0xB0B, s)),
                )
                .map(|e| e.value)
                .unwrap_or(0.0);
            }
        }
        match &self.eve_override {
            Some(ov) => total -= (ov.value)(p, v),
            None => {
                for s in 0..self.s_count() {
                    let he = miengine::assemble_group_channel(&self.eve_gains[s], &p[s], &v[s]);
                    if he.norm() > 0.0 {
                        total -= miengine::mutual_info(
                            &he,
                            self.c,
                            self.sigma_e,
                            &self.mc.reseed(group_seed(self.mc.seed, 0xE5E, s)),
                        )
                        .map(|e| e.value)
                        .unwrap_or(0.0);
                    }
                }
            }
        }
        total
    }

    fn gradients(&self, p: &[DVector<f64>], v: &[CMat]) -> (Vec<DVector<f64>>, Vec<CMat>) {
        let n_s = self.bob_gains[0].len();
        let mut gp = Vec::with_capacity(self.s_count());
        let mut gv = Vec::with_capacity(self.s_count());
        for s in 0..self.s_count() {
            let (gpb, gvb) = miengine::grad_mi_wrt_group_params(
                &self.bob_gains[s],
                &p[s],
                &v[s],
                self.c,
                self.sigma_b,
                &self.mc.reseed(group_seed(self.mc.seed, 0xB0B, s)),
            )
            .unwrap_or_else(|_| (DVector::zeros(n_s), CMat::zeros(n_s, n_s)));
            gp.push(gpb);
            gv.push(gvb);
        }
        match &self.eve_override {
            Some(ov) => {
                let (gpe, gve) = (ov.gradients)(p, v);
                for s in 0..self.s_count() {
                    gp[s] -= &gpe[s];
                    gv[s] -= &gve[s];
                }
            }
            None => {
                for s in 0..self.s_count() {
                    let (gpe, gve) = miengine::grad_mi_wrt_group_params(
                        &self.eve_gains[s],
                        &p[s],
                        &v[s],
                        self.c,
                        self.sigma_e,
                        &self.mc.reseed(group_seed(self.mc.seed, 0xE5E, s)),
                    )
                    .unwrap_or_else(|_| (DVector::zeros(n_s), CMat::zeros(n_s, n_s)));
                    gp[s] -= &gpe;
                    gv[s] -= &gve;
                }
            }
        }
        (gp, gv)
    }

    fn active_mask(&self) -> Vec<DVector<f64>> {
        self.bob_gains
            .iter()
            .zip(&self.kappa)
            .map(|(bg, ks)| {
                DVector::from_fn(bg.len(), |i, _| {
                    if bg[i] > 0.0 && ks[i] > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                })
            })
            .collect()
    }
}

pub(crate) struct RestartOutcome {
    pub(crate) p: Vec<DVector<f64>>,
    pub(crate) v: Vec<CMat>,
    pub(crate) trace: Vec<f64>,
    pub(crate) converged: bool,
}

/// Initial point of one restart.
pub(crate) struct RestartInit {
    pub(crate) p: Vec<DVector<f64>>,
    pub(crate) v: Vec<CMat>,
}

/// The restart schedule: uniform power with V = I first, then random
/// unitaries, plus one structured start (all power on each group's
/// receiver-only subchannel through a generic mixing row) when the
/// zero-leakage pairing condition holds. Gradient ascent cannot leave the
/// high-SNR saturation plateau from a uniform start, so the structured
/// initialization is what realizes the maximal rate there.
pub(crate) fn restart_inits(
    obj: &GroupObjective<'_>,
    gsvd: &GsvdFactorization,
    grouping: &Grouping,
    cfg: &OptimizerConfig,
    c: &Constellation,
) -> Vec<RestartInit> {
    let s_count = grouping.group_count();
    let n_s = grouping.n_s;
    let mask = obj.active_mask();
    let mut inits = Vec::new();
    for restart in 0..cfg.restarts.max(1) {
        let v = if restart == 0 {
            (0..s_count).map(|_| CMat::identity(n_s, n_s)).collect()
        } else {
            let seed = cfg.seed ^ 0x9e37_79b9 ^ ((restart as u64) << 8);
            (0..s_count)
                .map(|s| random_unitary(n_s, seed ^ ((s as u64) << 4)))
                .collect()
        };
        inits.push(RestartInit {
            p: mask.clone(),
            v,
        });
    }
    if let Some(structured) = structured_init(gsvd, grouping, c, cfg.seed ^ 0x51ab) {
        inits.push(structured);
    }
    inits
}

/// Power on exactly one receiver-only subchannel per group, mixed by a
/// generic unitary row; feasible whenever every group owns such a
/// subchannel, which the pairing guarantees under (k − N₂)·N_s ≥ N_t.
fn structured_init(
    gsvd: &GsvdFactorization,
    grouping: &Grouping,
    c: &Constellation,
    seed: u64,
) -> Option<RestartInit> {
    let n_s = grouping.n_s;
    let mut p = Vec::with_capacity(grouping.group_count());
    let mut v = Vec::with_capacity(grouping.group_count());
    for s in 0..grouping.group_count() {
        let pos = grouping.positions(s);
        let slot = pos
            .iter()
            .position(|&t| t >= gsvd.k - gsvd.r && t < gsvd.k)?;
        let mut ps = DVector::zeros(n_s);
        let kappa = gsvd.omega.column(pos[slot]).norm_squared();
        ps[slot] = 1.0 / kappa.max(1e-300);
        p.push(ps);
        v.push(mixing_unitary_for_row(c, n_s, seed ^ ((s as u64) << 6), slot).ok()?);
    }
    Some(RestartInit { p, v })
}

/// One gradient-ascent run from an explicit initial point. Both parameter
/// blocks take backtracking line searches that accept only strict
/// improvements, which makes the trace non-decreasing by construction.
pub(crate) fn optimize_restart(
    obj: &GroupObjective<'_>,
    cfg: &OptimizerConfig,
    init: &RestartInit,
) -> RestartOutcome {
    let mask = obj.active_mask();
    let mut p: Vec<DVector<f64>> = init
        .p
        .iter()
        .zip(&mask)
        .map(|(ps, ms)| DVector::from_fn(ps.len(), |i, _| if ms[i] > 0.0 { ps[i] } else { 0.0 }))
        .collect();
    let feasible = obj.normalize(&mut p);
    let mut v: Vec<CMat> = init.v.clone();
    if !feasible {
        return RestartOutcome {
            p,
            v,
            trace: vec![0.0],
            converged: true,
        };
    }
    let mut current = obj.value(&p, &v);
    let mut trace = vec![current];
    let mut converged = false;
    for _iter in 0..cfg.n_iter {
        let before = current;
        let (gp, gv) = obj.gradients(&p, &v);

        let gmax = gp
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        if gmax > 1e-14 {
            let pmax = p
                .iter()
                .flat_map(|ps| ps.iter())
                .fold(0.0f64, |a, &b| a.max(b));
            let mut mu = cfg.step_init * pmax.max(1.0) / gmax;
            for _half in 0..cfg.max_halvings {
                let mut cand: Vec<DVector<f64>> = p
                    .iter()
                    .zip(&gp)
                    .zip(&mask)
                    .map(|((ps, gs), ms)| {
                        DVector::from_fn(ps.len(), |i, _| {
                            if ms[i] > 0.0 {
                                (ps[i] + mu * gs[i]).max(0.0)
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect();
                if obj.normalize(&mut cand) {
                    let val = obj.value(&cand, &v);
                    if val > current + 1e-12 {
                        p = cand;
                        current = val;
                        break;
                    }
                }
                mu *= 0.5;
            }
        }

        let gvmax = gv.iter().map(|g| g.norm()).fold(0.0f64, f64::max);
        if gvmax > 1e-14 {
            let mut mu = cfg.step_init / gvmax;
            for _half in 0..cfg.max_halvings {
                let cand: Vec<CMat> = v
                    .iter()
                    .zip(&gv)
                    .map(|(vs, gs)| polar_unitary(&(vs + gs.scale(mu))))
                    .collect();
                let val = obj.value(&p, &cand);
                if val > current + 1e-12 {
                    v = cand;
                    current = val;
                    break;
                }
                mu *= 0.5;
            }
        }

        trace.push(current);
        if current - before <= cfg.eps_bits {
            converged = true;
            break;
        }
    }
    RestartOutcome {
        p,
        v,
        trace,
        converged,
    }
}

/// Gradient-ascent maximization of the grouped secrecy rate over the
/// per-group powers (renormalized to tr(A P A^H) = N_t each step) and
/// unitaries (polar retraction), best of `cfg.restarts` initializations.
/// The first restart uses V = I, the rest random unitaries; all share the
/// same noise draws so the objective landscape is one deterministic
/// function.
pub fn algorithm1(
    inst: &WiretapInstance,
    c: &Constellation,
    n_s: usize,
    cfg: &OptimizerConfig,
    mc: &McConfig,
) -> Result<OptimizeResult> {
    let h_ea = inst.h_ea.as_ref().ok_or_else(|| {
        Error::InvalidParameter("algorithm1 needs instantaneous eavesdropper CSI".into())
    })?;
    let tol = default_rank_tol(inst.n_r + inst.n_e, inst.n_t);
    let gsvd = matcore::gsvd_pair(&inst.h_ba, h_ea, tol)?;
    let grouping = default_pairing(&gsvd, n_s)?;
    let amp = (inst.p / gsvd.n_t as f64).sqrt();
    let obj = build_objective(&gsvd, &grouping, inst, c, mc, amp, None);
    run_restarts(obj, gsvd, grouping, inst.p, cfg, |prec| {
        secrecy_rate(prec, inst, c, mc)
    })
}

pub(crate) fn build_objective<'a>(
    gsvd: &GsvdFactorization,
    grouping: &Grouping,
    inst: &WiretapInstance,
    c: &'a Constellation,
    mc: &McConfig,
    amp: f64,
    eve_override: Option<EveOverride<'a>>,
) -> GroupObjective<'a> {
    let n_s = grouping.n_s;
    let s_count = grouping.group_count();
    let padded = grouping.padded_len();
    let kappa_all = kappa_weights(gsvd, padded);
    let mut bob_gains = Vec::with_capacity(s_count);
    let mut eve_gains = Vec::with_capacity(s_count);
    let mut kappa = Vec::with_capacity(s_count);
    for s in 0..s_count {
        let pos = grouping.positions(s);
        bob_gains.push(DVector::from_iterator(
            n_s,
            pos.iter().map(|&t| amp * gsvd.bob_gain_raw(t)),
        ));
        eve_gains.push(DVector::from_iterator(
            n_s,
            pos.iter().map(|&t| amp * gsvd.eve_gain_raw(t)),
        ));
        kappa.push(DVector::from_iterator(
            n_s,
            pos.iter().map(|&t| kappa_all[t]),
        ));
    }
    GroupObjective {
        bob_gains,
        eve_gains,
        kappa,
        sigma_b: inst.sigma_b,
        sigma_e: inst.sigma_e,
        n_t: gsvd.n_t as f64,
        c,
        mc: *mc,
        eve_override,
    }
}

pub(crate) fn run_restarts<F>(
    obj: GroupObjective<'_>,
    gsvd: GsvdFactorization,
    grouping: Grouping,
    p_budget: f64,
    cfg: &OptimizerConfig,
    final_report: F,
) -> Result<OptimizeResult>
where
    F: Fn(&PgPrecoder) -> Result<RateReport>,
{
    let inits = restart_inits(&obj, &gsvd, &grouping, cfg, obj.c);
    let outcomes: Vec<RestartOutcome> = inits
        .par_iter()
        .map(|init| optimize_restart(&obj, cfg, init))
        .collect();

    let mut best: Option<(usize, PgPrecoder, RateReport)> = None;
    for (idx, out) in outcomes.iter().enumerate() {
        let prec = assemble_precoder(&gsvd, &grouping, &out.p, &out.v, p_budget)?;
        let report = final_report(&prec)?;
        let better = match &best {
            None => true,
            Some((_, _, b)) => report.diff > b.diff,
        };
        if better {
            best = Some((idx, prec, report));
        }
    }
    let (best_restart, precoder, report) = best.expect("at least one restart");
    let iterations = outcomes[best_restart].trace.len() - 1;
    let converged = outcomes[best_restart].converged;
    Ok(OptimizeResult {
        precoder,
        report,
        traces: outcomes.into_iter().map(|o| o.trace).collect(),
        best_restart,
        iterations,
        converged,
    })
}

/// Builds the explicit zero-leakage construction: high-SNR pairing plus a generic
/// mixing unitary whose powered row keeps the mixed constellation separated,
/// so every group reaches N_s·log₂M at the receiver while radiating nothing
/// the eavesdropper can see.
pub fn zero_leakage_construction(
    gsvd: &GsvdFactorization,
    c: &Constellation,
    n_s: usize,
    p_budget: f64,
    seed: u64,
) -> Result<PgPrecoder> {
    let (grouping, p_init) = high_snr_pairing(gsvd, n_s)?;
    let v_groups: Vec<CMat> = (0..grouping.group_count())
        .map(|s| mixing_unitary(c, n_s, seed ^ ((s as u64) << 6)))
        .collect::<Result<Vec<_>>>()?;
    assemble_precoder(gsvd, &grouping, &p_init, &v_groups, p_budget)
}

/// Deterministic generic unitary whose last row mixes the group's symbols
/// injectively: retries seeds until the mixed constellation clears a
/// minimum-distance threshold.
pub fn mixing_unitary(c: &Constellation, n_s: usize, seed: u64) -> Result<CMat> {
    mixing_unitary_for_row(c, n_s, seed, n_s.saturating_sub(1))
}

/// Same separation requirement for an arbitrary powered row.
pub fn mixing_unitary_for_row(
    c: &Constellation,
    n_s: usize,
    seed: u64,
    row_idx: usize,
) -> Result<CMat> {
    if n_s == 1 {
        return Ok(CMat::identity(1, 1));
    }
    let points = c.joint_vectors(n_s);
    let threshold = 0.8 / (points.len() as f64).sqrt();
    for attempt in 0..256u64 {
        let v = random_unitary(n_s, seed.wrapping_add(attempt));
        let row = v.row(row_idx).into_owned();
        let mixed: Vec<Complex64> = points
            .iter()
            .map(|x| (0..n_s).map(|i| row[i] * x[i]).sum())
            .collect();
        let mut min_d = f64::INFINITY;
        for i in 0..mixed.len() {
            for j in 0..i {
                min_d = min_d.min((mixed[i] - mixed[j]).norm());
            }
        }
        if min_d >= threshold {
            return Ok(v);
        }
    }
    Err(Error::InvalidParameter(format!(
        "no mixing unitary with separation {threshold:.3} found for N_s = {n_s}"
    )))
}

/// Complexity scheme selector for the addition counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplexityScheme {
    PgGsvd,
    CompleteSearch,
}

/// Number of additions for evaluating the mutual information and MSE matrix:
/// S·M^(2·N_s) for the per-group design, M^(2·N_t) for the complete search.
/// Returned as f64 because the complete-search count overflows integers at
/// large-antenna sizes.
pub fn complexity_count(n_t: usize, n_s: usize, m: usize, scheme: ComplexityScheme) -> f64 {
    let m = m as f64;
    match scheme {
        ComplexityScheme::PgGsvd => {
            let s = (n_t as f64 / n_s as f64).ceil();
            s * m.powi(2 * n_s as i32)
        }
        ComplexityScheme::CompleteSearch => m.powi(2 * n_t as i32),
    }
}
