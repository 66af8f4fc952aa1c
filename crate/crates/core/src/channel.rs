//! Wiretap channel generation: i.i.d. Gaussian channels, Kronecker-correlated
//! channels, synthetic transmit correlations from a truncated Laplacian power
//! angle spectrum, and correlation estimation from channel realizations.
//!
//! Every sampler takes an explicit seed and is a pure function of it. Parallel
//! generation derives per-task seeds as `seed XOR task_index`.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::matcore::{cplx, matrix_sqrt_psd, CMat};
use crate::Result;

/// One wiretap channel instance. `h_ea` is absent when the transmitter has
/// only statistical knowledge of the eavesdropper.
#[derive(Debug, Clone)]
pub struct WiretapInstance {
    pub n_t: usize,
    pub n_r: usize,
    pub n_e: usize,
    pub h_ba: CMat,
    pub h_ea: Option<CMat>,
    pub sigma_b: f64,
    pub sigma_e: f64,
    /// Transmit power budget; SNR = P / (N_r σ_b²).
    pub p: f64,
}

impl WiretapInstance {
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.p / (self.n_r as f64 * self.sigma_b * self.sigma_b)).log10()
    }

    /// Power budget realizing `snr_db` under the SNR = P/(N_r σ_b²) convention.
    pub fn power_for_snr_db(snr_db: f64, n_r: usize, sigma_b: f64) -> f64 {
        10f64.powf(snr_db / 10.0) * n_r as f64 * sigma_b * sigma_b
    }
}

/// Kronecker correlation model for the eavesdropper (and optionally the
/// intended receiver).
#[derive(Debug, Clone)]
pub struct KroneckerModel {
    /// Transmit-side correlation of the eavesdropper's channel (N_t×N_t).
    pub r_nt: CMat,
    /// Receive-side correlation of the eavesdropper's channel (N_e×N_e).
    pub r_ne: CMat,
    /// Optional transmit-side correlation of the receiver's channel.
    pub r_nt_bob: Option<CMat>,
    /// Optional receive-side correlation of the receiver's channel.
    pub r_nb_bob: Option<CMat>,
}

/// Per-task seed derivation used by every parallel sweep.
pub fn derive_seed(master: u64, task_index: u64) -> u64 {
    master ^ task_index
}

/// i.i.d. CN(0, 1) matrix, filled row-major, deterministic under `seed`.
pub fn sample_iid(n_rows: usize, n_cols: usize, seed: u64) -> CMat {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let half = 1.0 / 2f64.sqrt();
    let mut entries = Vec::with_capacity(n_rows * n_cols);
    for _ in 0..n_rows * n_cols {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        entries.push(cplx(re * half, im * half));
    }
    CMat::from_row_slice(n_rows, n_cols, &entries)
}

/// Kronecker-correlated channel H = R_rx^{1/2} W R_tx^{1/2} with W i.i.d.
/// CN(0,1) drawn exactly as [`sample_iid`] under the same seed.
pub fn sample_kronecker(
    r_rx: &CMat,
    r_tx: &CMat,
    n_rows: usize,
    n_cols: usize,
    seed: u64,
) -> Result<CMat> {
    if r_rx.nrows() != n_rows || r_tx.nrows() != n_cols {
        return Err(Error::DimensionMismatch(format!(
            "correlation dims ({}, {}) do not match channel {}x{}",
            r_rx.nrows(),
            r_tx.nrows(),
            n_rows,
            n_cols
        )));
    }
    let w = sample_iid(n_rows, n_cols, seed);
    let sq_rx = matrix_sqrt_psd(r_rx)?;
    let sq_tx = matrix_sqrt_psd(r_tx)?;
    if is_identity(&sq_rx) && is_identity(&sq_tx) {
        return Ok(w);
    }
    Ok(sq_rx * w * sq_tx)
}

fn is_identity(m: &CMat) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let want = if i == j { cplx(1.0, 0.0) } else { cplx(0.0, 0.0) };
            if m[(i, j)] != want {
                return false;
            }
        }
    }
    true
}

/// Antenna correlation from a truncated Laplacian power angle spectrum:
/// [R]_{mn} = ∫ exp(i 2π d (m−n) sin θ) p(θ) dθ over [θ₀−π, θ₀+π], where p is
/// the Laplacian with the given mean angle of arrival and angular spread,
/// normalized over the truncation interval. The diagonal is exactly 1.
pub fn laplacian_correlation(
    n: usize,
    mean_aoa: f64,
    angle_spread: f64,
    antenna_spacing_wavelengths: f64,
) -> CMat {
    laplacian_correlation_with_panels(n, mean_aoa, angle_spread, antenna_spacing_wavelengths, 4096)
}

/// Same as [`laplacian_correlation`] with an explicit quadrature resolution;
/// higher resolutions serve as a refinement oracle in tests.
pub fn laplacian_correlation_with_panels(
    n: usize,
    mean_aoa: f64,
    angle_spread: f64,
    antenna_spacing_wavelengths: f64,
    panels: usize,
) -> CMat {
    assert!(n >= 1, "need at least one antenna");
    assert!(angle_spread > 0.0, "angle spread must be positive");
    // composite Simpson on [θ0−π, θ0] and [θ0, θ0+π] so the |θ−θ0| kink sits
    // on a panel boundary
    let two_pi_d = 2.0 * std::f64::consts::PI * antenna_spacing_wavelengths;
    let lap = |theta: f64| (-(2f64.sqrt()) * (theta - mean_aoa).abs() / angle_spread).exp();
    let mut lag_moments: Vec<Complex64> = Vec::with_capacity(n);
    let norm = simpson_two_sided(mean_aoa, panels, |t| cplx(lap(t), 0.0)).re;
    for lag in 0..n {
        if lag == 0 {
            lag_moments.push(cplx(1.0, 0.0));
            continue;
        }
        let phase = two_pi_d * lag as f64;
        let val = simpson_two_sided(mean_aoa, panels, |t| {
            let arg = phase * t.sin();
            cplx(arg.cos(), arg.sin()) * lap(t)
        });
        lag_moments.push(val / norm);
    }
    CMat::from_fn(n, n, |i, j| {
        if i >= j {
            lag_moments[i - j]
        } else {
            lag_moments[j - i].conj()
        }
    })
}

fn simpson_two_sided<F: Fn(f64) -> Complex64>(center: f64, panels: usize, f: F) -> Complex64 {
    let pi = std::f64::consts::PI;
    simpson(center - pi, center, panels / 2, &f) + simpson(center, center + pi, panels / 2, &f)
}

fn simpson<F: Fn(f64) -> Complex64>(a: f64, b: f64, panels: usize, f: &F) -> Complex64 {
    let m = panels.max(2) & !1usize; // even panel count
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(a + i as f64 * h) * cplx(w, 0.0);
    }
    acc * cplx(h / 3.0, 0.0)
}

/// Correlation estimation from realizations, exactly the raw averages
/// R_Nt = (1/L) Σ H_l^H H_l and R_Ne = (1/L) Σ H_l H_l^H.
pub fn estimate_correlations(realizations: &[CMat]) -> Result<KroneckerModel> {
    let first = realizations
        .first()
        .ok_or_else(|| Error::InvalidParameter("need at least one realization".into()))?;
    let (rows, cols) = (first.nrows(), first.ncols());
    let mut r_nt = CMat::zeros(cols, cols);
    let mut r_ne = CMat::zeros(rows, rows);
    for h in realizations {
        if h.nrows() != rows || h.ncols() != cols {
            return Err(Error::DimensionMismatch(
                "realizations have differing shapes".into(),
            ));
        }
        r_nt += h.adjoint() * h;
        r_ne += h * h.adjoint();
    }
    let scale = cplx(1.0 / realizations.len() as f64, 0.0);
    Ok(KroneckerModel {
        r_nt: r_nt * scale,
        r_ne: r_ne * scale,
        r_nt_bob: None,
        r_nb_bob: None,
    })
}

/// Reproducibility manifest stored next to channel fixtures.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelManifest {
    pub n_t: usize,
    pub n_r: usize,
    pub n_e: usize,
    pub channel_seed: u64,
    pub h_ba_file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_ea_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_nt_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_ne_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationParams>,
}

/// Parameters of the synthetic Laplacian correlation plant.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationParams {
    pub mean_aoa: f64,
    pub angle_spread: f64,
    pub antenna_spacing_wavelengths: f64,
    /// Number of realizations used by the estimation recipe.
    pub l_realizations: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::rel_fro_err;

    #[test]
    fn iid_deterministic_under_seed() {
        let a = sample_iid(4, 5, 123);
        let b = sample_iid(4, 5, 123);
        assert_eq!(a, b);
    }

    #[test]
    fn iid_distinct_seeds_differ() {
        let a = sample_iid(10, 10, 1);
        let b = sample_iid(10, 10, 2);
        let differing = a
            .iter()
            .zip(b.iter())
            .filter(|(x, y)| x != y)
            .count();
        assert!(differing as f64 >= 0.99 * 100.0);
    }

    #[test]
    fn iid_unit_variance() {
        let h = sample_iid(1000, 1000, 7);
        let mean_sq: f64 = h.iter().map(|z| z.norm_sqr()).sum::<f64>() / 1e6;
        // Var(|z|²) = 1 for CN(0,1), so 3 standard errors is 3e-3
        assert!((mean_sq - 1.0).abs() < 3e-3, "mean |entry|² = {mean_sq}");
    }

    #[test]
    fn kronecker_identity_matches_iid_bitwise() {
        let r_rx = CMat::identity(3, 3);
        let r_tx = CMat::identity(4, 4);
        let h = sample_kronecker(&r_rx, &r_tx, 3, 4, 99).unwrap();
        assert_eq!(h, sample_iid(3, 4, 99));
    }

    #[test]
    fn kronecker_rank_deficiency_propagates() {
        let r_rx = CMat::identity(2, 2);
        let mut r_tx = CMat::zeros(2, 2);
        r_tx[(0, 0)] = cplx(2.0, 0.0);
        let h = sample_kronecker(&r_rx, &r_tx, 2, 2, 5).unwrap();
        for i in 0..2 {
            assert_eq!(h[(i, 1)], cplx(0.0, 0.0));
        }
    }

    #[test]
    fn kronecker_covariance_recovery() {
        // E[H^H H] / N_rows → R_tx
        let r_rx = CMat::identity(2, 2);
        let r_tx = CMat::from_row_slice(
            2,
            2,
            &[cplx(1.5, 0.0), cplx(0.4, 0.2), cplx(0.4, -0.2), cplx(0.7, 0.0)],
        );
        let mut acc = CMat::zeros(2, 2);
        let draws = 10_000;
        for i in 0..draws {
            let h = sample_kronecker(&r_rx, &r_tx, 2, 2, derive_seed(400, i)).unwrap();
            acc += h.adjoint() * &h;
        }
        let est = acc * cplx(1.0 / (2.0 * draws as f64), 0.0);
        assert!(rel_fro_err(&est, &r_tx) < 0.05, "err {}", rel_fro_err(&est, &r_tx));
    }

    #[test]
    fn laplacian_single_antenna() {
        let r = laplacian_correlation(1, 0.3, 0.9, 0.5);
        assert_eq!(r.nrows(), 1);
        assert_eq!(r[(0, 0)], cplx(1.0, 0.0));
    }

    #[test]
    fn laplacian_wide_spread_decorrelates() {
        // spread → ∞ approximated by 10³: off-diagonals shrink toward
        // Bessel-like small magnitudes, diagonal exactly 1
        let r = laplacian_correlation(4, 0.0, 1e3, 0.5);
        for i in 0..4 {
            assert_eq!(r[(i, i)], cplx(1.0, 0.0));
        }
        assert!(r[(0, 1)].norm() < 0.35, "|R_01| = {}", r[(0, 1)].norm());
    }

    #[test]
    fn laplacian_quadrature_refinement_oracle() {
        let r = laplacian_correlation(4, 0.0, std::f64::consts::PI / 2.0, 0.5);
        let fine = laplacian_correlation_with_panels(4, 0.0, std::f64::consts::PI / 2.0, 0.5, 65_536);
        assert!(
            (r[(0, 1)].norm() - fine[(0, 1)].norm()).abs() < 1e-6,
            "coarse {} fine {}",
            r[(0, 1)].norm(),
            fine[(0, 1)].norm()
        );
        // PSD to within the stated slack
        let eigs = crate::matcore::hermitian_eigenvalues(&r);
        let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-10, "min eigenvalue {min}");
    }

    #[test]
    fn laplacian_psd_random_parameters() {
        let mut state = 1u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        for _ in 0..100 {
            let n = 2 + (next() * 6.0) as usize;
            let mean = (next() - 0.5) * std::f64::consts::PI / 3.0;
            let spread = 0.05 + next() * 2.0;
            let spacing = 0.1 + next();
            let r = laplacian_correlation(n, mean, spread, spacing);
            let eigs = crate::matcore::hermitian_eigenvalues(&r);
            let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
            assert!(min >= -1e-10, "min eigenvalue {min} at n={n}");
        }
    }

    #[test]
    fn estimate_single_identity() {
        let model = estimate_correlations(&[CMat::identity(2, 2)]).unwrap();
        assert_eq!(model.r_nt, CMat::identity(2, 2));
        assert_eq!(model.r_ne, CMat::identity(2, 2));
    }

    #[test]
    fn estimate_iid_expectation() {
        // E[H^H H] = N_rows · I for 2×2 i.i.d. draws
        let hs: Vec<CMat> = (0..10_000).map(|i| sample_iid(2, 2, derive_seed(900, i))).collect();
        let model = estimate_correlations(&hs).unwrap();
        let target = CMat::identity(2, 2) * cplx(2.0, 0.0);
        assert!(rel_fro_err(&model.r_nt, &target) < 0.05);
    }

    #[test]
    fn estimate_planted_kronecker() {
        let mut r_tx = CMat::zeros(2, 2);
        r_tx[(0, 0)] = cplx(2.0, 0.0);
        r_tx[(1, 1)] = cplx(1.0, 0.0);
        let r_rx = CMat::identity(2, 2);
        let hs: Vec<CMat> = (0..10_000)
            .map(|i| sample_kronecker(&r_rx, &r_tx, 2, 2, derive_seed(901, i)).unwrap())
            .collect();
        let model = estimate_correlations(&hs).unwrap();
        // recovered up to the N_rows factor: (1/L)ΣH^H H → tr(R_rx)·R_tx = 2·diag(2,1)
        let target = &r_tx * cplx(2.0, 0.0);
        assert!(rel_fro_err(&model.r_nt, &target) < 0.05);
    }

    #[test]
    fn snr_convention() {
        let p = WiretapInstance::power_for_snr_db(10.0, 3, 1.0);
        assert!((p - 30.0).abs() < 1e-9);
    }
}
