//! Statistical-CSI pipeline: GSVD against the correlation square root, the
//! ergodic secrecy-rate lower bound with a closed-form eavesdropper bound and
//! its gradients, the matching gradient-ascent optimizer, and null-space
//! artificial-noise injection with the asymptotic whitening correction.
//!
//! When the transmitter knows only the eavesdropper's correlation matrices
//! (R_Nt, R_Ne), the per-group structure is built from the GSVD of
//! (H_ba, T) with T^H·T = R_Nt. The receiver side is evaluated exactly as in
//! the instantaneous pipeline; the eavesdropper side is the closed-form
//! Jensen upper bound
//!
//!   R_eve,u = Σ_s [ N_s·log₂M − (1/M^{N_s}) Σ_{p_s} log₂ Σ_{q_s}
//!             exp(−(tr R_Ne/σ_e²)·‖W_s (x_p − x_q)‖²) ]
//!
//! with W_s the group's exact effective factor diag(√(P/N_t)·gain·√p)·V_s.
//! The per-group 1/M^{N_s} prefactor makes the bound vanish exactly at zero
//! power; the brute-force equality with the ungrouped form is a test oracle.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::channel::{sample_kronecker, WiretapInstance};
use crate::constellation::{vector_count, Constellation};
use crate::error::Error;
use crate::matcore::{
    self, cplx, default_rank_tol, hermitian_eigen, matrix_sqrt_factor, null_space_basis, CMat,
    CVec, GsvdFactorization,
};
use crate::miengine::{self, McConfig};
use crate::pg_inst::{
    self, assemble_precoder, default_pairing, OptimizerConfig, PgPrecoder, RestartOutcome,
};
use crate::Result;

const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// A wiretap instance where the eavesdropper is known only statistically.
#[derive(Debug, Clone)]
pub struct StatWiretapInstance {
    pub n_t: usize,
    pub n_r: usize,
    pub n_e: usize,
    /// The one known realization of the receiver's channel.
    pub h_ba: CMat,
    /// Eavesdropper transmit-side correlation (N_t×N_t).
    pub r_nt: CMat,
    /// Eavesdropper receive-side correlation (N_e×N_e).
    pub r_ne: CMat,
    pub sigma_b: f64,
    pub sigma_e: f64,
    pub p: f64,
}

impl StatWiretapInstance {
    pub fn tr_r_ne(&self) -> f64 {
        self.r_ne.trace().re
    }
}

/// The statistical-CSI precoder shares the per-group structure of the
/// instantaneous one; its factorization is the GSVD of (H_ba, T).
pub type StatPrecoder = PgPrecoder;

/// Ergodic secrecy-rate lower bound report, in bits.
#[derive(Debug, Clone, Copy)]
pub struct ErgodicBound {
    /// Deterministic-channel receiver rate Σ_s I(y_b,s; x_s).
    pub bob_rate: f64,
    pub bob_std_error: f64,
    /// Closed-form upper bound on the eavesdropper's average rate.
    pub eve_upper: f64,
    /// bob_rate − eve_upper (signed).
    pub lower_bound: f64,
}

/// Artificial-noise configuration: power and the null-space basis of the
/// receiver's channel that carries it.
#[derive(Debug, Clone)]
pub struct AnConfig {
    pub p_an: f64,
    /// Orthonormal basis of null(H_ba), N_t×(N_t − rank).
    pub v_b: CMat,
    /// False when the null space is empty (N_t ≤ rank(H_ba)).
    pub enabled: bool,
}

/// GSVD of (H_ba, T) with T^H T = R_Nt; the factorization's (k, r, s) are the
/// ergodic-design dimensions.
pub fn gsvd_stat(h_ba: &CMat, r_nt: &CMat) -> Result<GsvdFactorization> {
    if r_nt.nrows() != h_ba.ncols() || r_nt.ncols() != h_ba.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "R_Nt is {}x{} but N_t = {}",
            r_nt.nrows(),
            r_nt.ncols(),
            h_ba.ncols()
        )));
    }
    let t = matrix_sqrt_factor(r_nt)?;
    let tol = default_rank_tol(h_ba.nrows() + t.nrows(), h_ba.ncols());
    matcore::gsvd_pair(h_ba, &t, tol)
}

/// Per-group eavesdropper-bound parameters: W_s = diag(scaled gains·√p)·V_s
/// enters only through ‖W_s·b‖².
struct EveBound<'a> {
    /// √(P/N_t)·(raw eavesdropper gain) per group slot.
    gains: Vec<DVector<f64>>,
    /// tr(R_Ne)/σ_e², or tr(R_Ne·W^{-1}) when whitened.
    c_coef: f64,
    c: &'a Constellation,
}

impl<'a> EveBound<'a> {
    fn from_precoder(prec: &PgPrecoder, c_coef: f64, c: &'a Constellation) -> EveBound<'a> {
        let amp = (prec.power_budget / prec.gsvd.n_t as f64).sqrt();
        let gains = (0..prec.grouping.group_count())
            .map(|s| {
                DVector::from_iterator(
                    prec.grouping.n_s,
                    prec.grouping
                        .positions(s)
                        .iter()
                        .map(|&t| amp * prec.gsvd.eve_gain_raw(t)),
                )
            })
            .collect();
        EveBound { gains, c_coef, c }
    }

    /// Mixed points z_q = W_s x_q for one group.
    fn group_points(&self, s: usize, p: &DVector<f64>, v: &CMat) -> Vec<CVec> {
        let n_s = self.gains[s].len();
        let mut w = v.clone();
        for i in 0..n_s {
            let scale = cplx(self.gains[s][i] * p[i].sqrt(), 0.0);
            for j in 0..n_s {
                w[(i, j)] *= scale;
            }
        }
        self.c
            .joint_vectors(n_s)
            .iter()
            .map(|x| &w * x)
            .collect()
    }

    /// Σ_s [N_s log₂M − (1/M^{N_s}) Σ_p log₂ Σ_q exp(−c·quad_pq)]; exactly
    /// zero when every group's quad vanishes.
    fn value(&self, p: &[DVector<f64>], v: &[CMat]) -> f64 {
        let mut total = 0.0;
        for s in 0..self.gains.len() {
            let n_s = self.gains[s].len();
            let count = vector_count(self.c.m, n_s);
            let z = self.group_points(s, &p[s], &v[s]);
            let mut mean_lse = 0.0;
            let mut exps = vec![0.0f64; count];
            for pi in 0..count {
                for (qi, e) in exps.iter_mut().enumerate() {
                    *e = -self.c_coef * (&z[pi] - &z[qi]).norm_squared();
                }
                mean_lse += log2_sum_exp(&exps);
            }
            mean_lse /= count as f64;
            total += n_s as f64 * self.c.bits_per_symbol() - mean_lse;
        }
        total
    }

    /// Closed-form gradients with respect to the group powers and unitaries
    /// (conjugate convention for V, matching the ascent step V + μ·grad).
    fn gradients(&self, p: &[DVector<f64>], v: &[CMat]) -> (Vec<DVector<f64>>, Vec<CMat>) {
        let mut gp_out = Vec::with_capacity(self.gains.len());
        let mut gv_out = Vec::with_capacity(self.gains.len());
        for s in 0..self.gains.len() {
            let n_s = self.gains[s].len();
            let count = vector_count(self.c.m, n_s);
            let xs = self.c.joint_vectors(n_s);
            let us: Vec<CVec> = xs.iter().map(|x| &v[s] * x).collect();
            // quad_pq = Σ_i d2[i]·p[i]·|[V b]_i|², d2[i] = (amp·gain_i)²
            let d2: Vec<f64> = (0..n_s).map(|i| self.gains[s][i] * self.gains[s][i]).collect();
            let mut gp = DVector::zeros(n_s);
            let mut gv = CMat::zeros(n_s, n_s);
            let coeff = self.c_coef * LOG2_E / count as f64;
            for pi in 0..count {
                let mut weights = vec![0.0f64; count];
                let mut denom = 0.0;
                for qi in 0..count {
                    let vb = &us[pi] - &us[qi];
                    let quad: f64 = (0..n_s)
                        .map(|i| d2[i] * p[s][i] * vb[i].norm_sqr())
                        .sum();
                    let g = (-self.c_coef * quad).exp();
                    weights[qi] = g;
                    denom += g;
                }
                let mut num_p = DVector::zeros(n_s);
                let mut num_v = CMat::zeros(n_s, n_s);
                for qi in 0..count {
                    let g = weights[qi];
                    if g == 0.0 {
                        continue;
                    }
                    let vb = &us[pi] - &us[qi];
                    let b = &xs[pi] - &xs[qi];
                    for i in 0..n_s {
                        num_p[i] += g * d2[i] * vb[i].norm_sqr();
                        let row_scale = cplx(g * d2[i] * p[s][i], 0.0) * vb[i];
                        for j in 0..n_s {
                            num_v[(i, j)] += row_scale * b[j].conj();
                        }
                    }
                }
                gp += num_p.scale(coeff / denom);
                gv += num_v.scale(coeff / denom);
            }
            gp_out.push(gp);
            gv_out.push(gv);
        }
        (gp_out, gv_out)
    }
}

fn log2_sum_exp(exponents: &[f64]) -> f64 {
    let mx = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = exponents.iter().map(|e| (e - mx).exp()).sum();
    (mx + sum.ln()) * LOG2_E
}

/// Closed-form upper bound on the eavesdropper's ergodic rate for an
/// assembled precoder.
pub fn r_eve_upper(prec: &PgPrecoder, tr_r_ne: f64, sigma_e: f64, c: &Constellation) -> f64 {
    let bound = EveBound::from_precoder(prec, tr_r_ne / (sigma_e * sigma_e), c);
    if prec.zero_power {
        return 0.0;
    }
    bound.value(&prec.p_groups, &prec.v_groups)
}

/// Gradient of [`r_eve_upper`] with respect to the per-group power diagonals.
pub fn grad_reve_wrt_p(
    prec: &PgPrecoder,
    tr_r_ne: f64,
    sigma_e: f64,
    c: &Constellation,
) -> Vec<DVector<f64>> {
    let bound = EveBound::from_precoder(prec, tr_r_ne / (sigma_e * sigma_e), c);
    bound.gradients(&prec.p_groups, &prec.v_groups).0
}

/// Gradient of [`r_eve_upper`] with respect to the per-group unitaries.
pub fn grad_reve_wrt_v(
    prec: &PgPrecoder,
    tr_r_ne: f64,
    sigma_e: f64,
    c: &Constellation,
) -> Vec<CMat> {
    let bound = EveBound::from_precoder(prec, tr_r_ne / (sigma_e * sigma_e), c);
    bound.gradients(&prec.p_groups, &prec.v_groups).1
}

/// Ungrouped form of the bound from the dense matrices: N_t·log₂M −
/// (1/M^L)·Σ_p log₂ Σ_q exp(−c·‖T·G·b_pq‖²). Brute-force oracle for the
/// grouped closed form; cost M^(2L).
pub fn r_eve_upper_ungrouped(
    g: &CMat,
    r_nt: &CMat,
    tr_r_ne: f64,
    sigma_e: f64,
    c: &Constellation,
) -> Result<f64> {
    let t = matrix_sqrt_factor(r_nt)?;
    let tg = &t * g;
    let l = g.ncols();
    let count = vector_count(c.m, l);
    let c_coef = tr_r_ne / (sigma_e * sigma_e);
    let z: Vec<CVec> = c.joint_vectors(l).iter().map(|x| &tg * x).collect();
    let mut mean_lse = 0.0;
    let mut exps = vec![0.0f64; count];
    for pi in 0..count {
        for (qi, e) in exps.iter_mut().enumerate() {
            *e = -c_coef * (&z[pi] - &z[qi]).norm_squared();
        }
        mean_lse += log2_sum_exp(&exps);
    }
    mean_lse /= count as f64;
    Ok(l as f64 * c.bits_per_symbol() - mean_lse)
}

/// Ergodic secrecy-rate lower bound: exact sliced receiver rate minus the
/// closed-form eavesdropper bound.
pub fn secrecy_lower_bound(
    prec: &PgPrecoder,
    stat: &StatWiretapInstance,
    c: &Constellation,
    mc: &McConfig,
) -> Result<ErgodicBound> {
    let (bob_rate, bob_std_error) =
        pg_inst::bob_rate_exact(prec, &stat.h_ba, stat.sigma_b, c, mc)?;
    let eve_upper = r_eve_upper(prec, stat.tr_r_ne(), stat.sigma_e, c);
    Ok(ErgodicBound {
        bob_rate,
        bob_std_error,
        eve_upper,
        lower_bound: bob_rate - eve_upper,
    })
}

/// Result of the statistical-CSI optimization.
#[derive(Debug, Clone)]
pub struct StatOptimizeResult {
    pub precoder: StatPrecoder,
    pub bound: ErgodicBound,
    pub traces: Vec<Vec<f64>>,
    pub best_restart: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient-ascent maximization of the ergodic secrecy-rate lower bound:
/// Monte-Carlo receiver gradients plus closed-form eavesdropper-bound
/// gradients, with the same normalization, retraction, and accept-only-
/// improving line searches as the instantaneous optimizer.
pub fn algorithm2(
    stat: &StatWiretapInstance,
    c: &Constellation,
    n_s: usize,
    cfg: &OptimizerConfig,
    mc: &McConfig,
) -> Result<StatOptimizeResult> {
    let gsvd = gsvd_stat(&stat.h_ba, &stat.r_nt)?;
    let grouping = default_pairing(&gsvd, n_s)?;
    let amp = (stat.p / gsvd.n_t as f64).sqrt();
    let c_coef = stat.tr_r_ne() / (stat.sigma_e * stat.sigma_e);

    let eve_gains: Vec<DVector<f64>> = (0..grouping.group_count())
        .map(|s| {
            DVector::from_iterator(
                n_s,
                grouping
                    .positions(s)
                    .iter()
                    .map(|&t| amp * gsvd.eve_gain_raw(t)),
            )
        })
        .collect();
    let bound = EveBound {
        gains: eve_gains,
        c_coef,
        c,
    };
    let value_bound = EveBound {
        gains: bound.gains.clone(),
        c_coef,
        c,
    };
    let eve_override = pg_inst::EveOverride {
        value: Box::new(move |p: &[DVector<f64>], v: &[CMat]| value_bound.value(p, v)),
        gradients: Box::new(move |p: &[DVector<f64>], v: &[CMat]| bound.gradients(p, v)),
    };

    let pseudo_inst = WiretapInstance {
        n_t: stat.n_t,
        n_r: stat.n_r,
        n_e: stat.n_e,
        h_ba: stat.h_ba.clone(),
        h_ea: None,
        sigma_b: stat.sigma_b,
        sigma_e: stat.sigma_e,
        p: stat.p,
    };
    let obj = pg_inst::build_objective(
        &gsvd,
        &grouping,
        &pseudo_inst,
        c,
        mc,
        amp,
        Some(eve_override),
    );

    let inits = pg_inst::restart_inits(&obj, &gsvd, &grouping, cfg, c);
    let outcomes: Vec<RestartOutcome> = inits
        .par_iter()
        .map(|init| pg_inst::optimize_restart(&obj, cfg, init))
        .collect();

    let mut best: Option<(usize, PgPrecoder, ErgodicBound)> = None;
    for (idx, out) in outcomes.iter().enumerate() {
        let prec = assemble_precoder(&gsvd, &grouping, &out.p, &out.v, stat.p)?;
        let report = secrecy_lower_bound(&prec, stat, c, mc)?;
        let better = match &best {
            None => true,
            Some((_, _, b)) => report.lower_bound > b.lower_bound,
        };
        if better {
            best = Some((idx, prec, report));
        }
    }
    let (best_restart, precoder, bound) = best.expect("at least one restart");
    let iterations = outcomes[best_restart].trace.len() - 1;
    let converged = outcomes[best_restart].converged;
    Ok(StatOptimizeResult {
        precoder,
        bound,
        traces: outcomes.into_iter().map(|o| o.trace).collect(),
        best_restart,
        iterations,
        converged,
    })
}

/// Zero-leakage construction against the correlation square root: places
/// all power on subchannels it cannot see, requiring (k_erg − rank T)·N_s ≥ N_t.
pub fn zero_leakage_construction_stat(
    gsvd_erg: &GsvdFactorization,
    c: &Constellation,
    n_s: usize,
    p_budget: f64,
    seed: u64,
) -> Result<StatPrecoder> {
    pg_inst::zero_leakage_construction(gsvd_erg, c, n_s, p_budget, seed)
}

/// Monte-Carlo estimate of the eavesdropper's ergodic rate E[I(y_e; x)] over
/// channel draws from the Kronecker model; the validation oracle for the
/// closed-form bound. Cost M^(2L) per draw.
pub fn mc_ergodic_eve_rate(
    prec: &PgPrecoder,
    stat: &StatWiretapInstance,
    c: &Constellation,
    n_draws: usize,
    mc: &McConfig,
) -> Result<(f64, f64)> {
    let mut vals = Vec::with_capacity(n_draws);
    for draw in 0..n_draws {
        let h_ea = sample_kronecker(
            &stat.r_ne,
            &stat.r_nt,
            stat.n_e,
            stat.n_t,
            mc.seed ^ 0xD4A ^ ((draw as u64) << 8),
        )?;
        let he = &h_ea * &prec.g;
        let est = miengine::mutual_info(&he, c, stat.sigma_e, &mc.reseed(mc.seed ^ draw as u64))?;
        vals.push(est.value);
    }
    let mean = vals.iter().sum::<f64>() / n_draws as f64;
    let var = vals
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / (n_draws as f64 - 1.0).max(1.0);
    Ok((mean, (var / n_draws as f64).sqrt()))
}

/// Null-space artificial-noise configuration: P_AN = P_total − tr(G G^H)
/// clipped at zero, carried by an orthonormal basis of null(H_ba).
pub fn an_inject(prec: &PgPrecoder, stat: &StatWiretapInstance, p_total: f64) -> AnConfig {
    let tol = default_rank_tol(stat.h_ba.nrows(), stat.h_ba.ncols());
    let v_b = null_space_basis(&stat.h_ba, tol);
    let used = (&prec.g * prec.g.adjoint()).trace().re;
    let p_an = (p_total - used).max(0.0);
    let enabled = v_b.ncols() > 0;
    AnConfig { p_an, v_b, enabled }
}

/// Whitened eavesdropper bound under artificial noise: the noise covariance
/// W = P_AN/(N_t−N_r)·tr(V_b V_b^H R_Nt)·R_Ne + σ_e²·I replaces the white
/// noise, so tr(R_Ne·W^{-1}) replaces tr(R_Ne)/σ_e² in the exponent.
pub fn an_whitened_eve_bound(
    prec: &PgPrecoder,
    an: &AnConfig,
    stat: &StatWiretapInstance,
    c: &Constellation,
) -> Result<f64> {
    if !an.enabled || an.p_an == 0.0 {
        return Ok(r_eve_upper(prec, stat.tr_r_ne(), stat.sigma_e, c));
    }
    let dof = (stat.n_t - stat.n_r).max(1) as f64;
    let spatial = (an.v_b.adjoint() * &stat.r_nt * &an.v_b).trace().re;
    let w = stat
        .r_ne
        .scale(an.p_an / dof * spatial)
        + CMat::identity(stat.n_e, stat.n_e).scale(stat.sigma_e * stat.sigma_e);
    let (vals, vecs) = hermitian_eigen(&w);
    let min_eig = vals.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(Error::SingularWhitening { min_eig });
    }
    // tr(R_Ne W^{-1}) via the eigendecomposition of W
    let mut w_inv = CMat::zeros(stat.n_e, stat.n_e);
    for i in 0..stat.n_e {
        let col = vecs.column(i);
        let scale = cplx(1.0 / vals[i], 0.0);
        w_inv += (col * col.adjoint()).scale_complex(scale);
    }
    let c_coef = (&stat.r_ne * &w_inv).trace().re;
    if prec.zero_power {
        return Ok(0.0);
    }
    let bound = EveBound::from_precoder(prec, c_coef, c);
    Ok(bound.value(&prec.p_groups, &prec.v_groups))
}

trait ScaleComplexExt {
    fn scale_complex(self, z: Complex64) -> Self;
}

impl ScaleComplexExt for CMat {
    fn scale_complex(mut self, z: Complex64) -> Self {
        for v in self.iter_mut() {
            *v *= z;
        }
        self
    }
}

/// Signal/AN power-split sweep: for each fraction f, the signal precoder is
/// optimized at (1−f)·P and the remaining f·P goes to the null-space noise;
/// reports the whitened lower bound at every split. A utility beyond the
/// residual split rule, for exploring the trade-off.
pub fn an_power_split_sweep(
    stat: &StatWiretapInstance,
    c: &Constellation,
    n_s: usize,
    cfg: &OptimizerConfig,
    mc: &McConfig,
    fractions: &[f64],
) -> Result<Vec<(f64, ErgodicBound)>> {
    let mut out = Vec::with_capacity(fractions.len());
    for &f in fractions {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::InvalidParameter(format!(
                "AN fraction {f} outside [0, 1)"
            )));
        }
        let mut signal_stat = stat.clone();
        signal_stat.p = stat.p * (1.0 - f);
        let result = algorithm2(&signal_stat, c, n_s, cfg, mc)?;
        let an = an_inject(&result.precoder, stat, stat.p);
        let eve = an_whitened_eve_bound(&result.precoder, &an, stat, c)?;
        let bound = ErgodicBound {
            bob_rate: result.bound.bob_rate,
            bob_std_error: result.bound.bob_std_error,
            eve_upper: eve,
            lower_bound: result.bound.bob_rate - eve,
        };
        out.push((f, bound));
    }
    Ok(out)
}
