//! Sweep and convergence runners: seeded, reproducible experiment execution
//! over (scheme, SNR) grids.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wiretap_core::channel::{
    derive_seed, estimate_correlations, laplacian_correlation, sample_iid, sample_kronecker,
    ChannelManifest, CorrelationParams, WiretapInstance,
};
use wiretap_core::constellation::Constellation;
use wiretap_core::matcore::{self, default_rank_tol, CMat};
use wiretap_core::miengine::McConfig;
use wiretap_core::pg_inst::{
    self, complexity_count, ComplexityScheme, OptimizerConfig, RateReport,
};
use wiretap_core::pg_stat::{self, StatWiretapInstance};

use crate::config::{CsiMode, ExperimentConfig, Scheme};

/// One output row of a sweep.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub scheme: String,
    pub snr_db: f64,
    pub rate_bob: f64,
    pub rate_eve: f64,
    pub secrecy: f64,
    pub std_err: f64,
    pub seed: u64,
    pub iterations: usize,
    pub complexity_additions: f64,
    pub wall_ms: u64,
}

/// Sweep result with the config embedded for reproducibility.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub rows: Vec<SweepRow>,
}

/// Prepared channel state shared by all sweep points.
pub enum Prepared {
    Instantaneous {
        inst_template: WiretapInstance,
    },
    Statistical {
        stat_template: StatWiretapInstance,
        bob_correlation: CorrelationParams,
    },
}

/// Draws the channel (or channel statistics) for a config.
pub fn prepare_channel(cfg: &ExperimentConfig) -> Result<Prepared, wiretap_core::Error> {
    let d = cfg.dims;
    match cfg.csi_mode {
        CsiMode::Instantaneous => {
            let h_ba = sample_iid(d.n_r, d.n_t, derive_seed(cfg.seeds.channel, 0xBA));
            let h_ea = sample_iid(d.n_e, d.n_t, derive_seed(cfg.seeds.channel, 0xEA));
            Ok(Prepared::Instantaneous {
                inst_template: WiretapInstance {
                    n_t: d.n_t,
                    n_r: d.n_r,
                    n_e: d.n_e,
                    h_ba,
                    h_ea: Some(h_ea),
                    sigma_b: 1.0,
                    sigma_e: 1.0,
                    p: 1.0,
                },
            })
        }
        CsiMode::Statistical => {
            // synthetic correlation plants; the mean angle of arrival is
            // drawn uniformly from [-π/6, π/6] unless pinned by the config
            let aoa = |tag: u64| -> f64 {
                match cfg.correlation.mean_aoa {
                    Some(a) => a,
                    None => {
                        use rand::{Rng, SeedableRng};
                        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(derive_seed(
                            cfg.seeds.channel,
                            tag,
                        ));
                        let lim = std::f64::consts::PI / 6.0;
                        rng.random_range(-lim..lim)
                    }
                }
            };
            let aoa_bob = aoa(0xA0A_B0B);
            let aoa_eve = aoa(0xA0A_E5E);
            let spread = cfg.correlation.angle_spread;
            let spacing = cfg.correlation.antenna_spacing_wavelengths;
            let r_tx_bob = laplacian_correlation(d.n_t, aoa_bob, spread, spacing);
            let r_tx_eve = laplacian_correlation(d.n_t, aoa_eve, spread, spacing);
            let eye_rx_bob = CMat::identity(d.n_r, d.n_r);
            let eye_rx_eve = CMat::identity(d.n_e, d.n_e);
            // one realization for the receiver, L for the estimation recipe
            let h_ba = sample_kronecker(
                &eye_rx_bob,
                &r_tx_bob,
                d.n_r,
                d.n_t,
                derive_seed(cfg.seeds.channel, 0xBA),
            )?;
            let realizations: Vec<CMat> = (0..cfg.correlation.l_realizations as u64)
                .map(|l| {
                    sample_kronecker(
                        &eye_rx_eve,
                        &r_tx_eve,
                        d.n_e,
                        d.n_t,
                        derive_seed(cfg.seeds.channel, 0xE000 + l),
                    )
                })
                .collect::<Result<_, _>>()?;
            let model = estimate_correlations(&realizations)?;
            Ok(Prepared::Statistical {
                stat_template: StatWiretapInstance {
                    n_t: d.n_t,
                    n_r: d.n_r,
                    n_e: d.n_e,
                    h_ba,
                    r_nt: model.r_nt,
                    r_ne: model.r_ne,
                    sigma_b: 1.0,
                    sigma_e: 1.0,
                    p: 1.0,
                },
                bob_correlation: CorrelationParams {
                    mean_aoa: aoa_bob,
                    angle_spread: spread,
                    antenna_spacing_wavelengths: spacing,
                    l_realizations: cfg.correlation.l_realizations,
                },
            })
        }
    }
}

fn point_task(scheme_idx: usize, snr_idx: usize) -> u64 {
    (scheme_idx as u64) * 1009 + snr_idx as u64
}

struct PointOutcome {
    rate_bob: f64,
    rate_eve: f64,
    secrecy: f64,
    std_err: f64,
    iterations: usize,
}

fn report_outcome(r: &RateReport, iterations: usize) -> PointOutcome {
    PointOutcome {
        rate_bob: r.rate_bob,
        rate_eve: r.rate_eve,
        secrecy: r.secrecy,
        std_err: r.std_error(),
        iterations,
    }
}

fn run_point(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    c: &Constellation,
    scheme: Scheme,
    scheme_idx: usize,
    snr_idx: usize,
) -> Result<PointOutcome, wiretap_core::Error> {
    let snr_db = cfg.snr_grid_db[snr_idx];
    let task = point_task(scheme_idx, snr_idx);
    let mc = McConfig::new(
        cfg.optimizer.mc_samples,
        derive_seed(cfg.seeds.noise, task),
    );
    let opt = OptimizerConfig {
        n_iter: cfg.optimizer.n_iter,
        eps_bits: cfg.optimizer.eps_bits,
        restarts: cfg.optimizer.restarts,
        seed: derive_seed(cfg.seeds.optimizer, task),
        ..Default::default()
    };
    match prepared {
        Prepared::Instantaneous { inst_template } => {
            let mut inst = inst_template.clone();
            inst.p = WiretapInstance::power_for_snr_db(snr_db, inst.n_r, inst.sigma_b);
            let tol = default_rank_tol(inst.n_r + inst.n_e, inst.n_t);
            match scheme {
                Scheme::GsvdBaseline => {
                    let gsvd =
                        matcore::gsvd_pair(&inst.h_ba, inst.h_ea.as_ref().unwrap(), tol)?;
                    let (_, report) = pg_inst::gsvd_baseline(&gsvd, &inst, c, &mc)?;
                    Ok(report_outcome(&report, 0))
                }
                Scheme::PgGsvd => {
                    let result = pg_inst::algorithm1(&inst, c, cfg.n_s, &opt, &mc)?;
                    Ok(report_outcome(&result.report, result.iterations))
                }
                Scheme::TheoremOracle => {
                    let gsvd =
                        matcore::gsvd_pair(&inst.h_ba, inst.h_ea.as_ref().unwrap(), tol)?;
                    let prec =
                        pg_inst::zero_leakage_construction(&gsvd, c, cfg.n_s, inst.p, opt.seed)?;
                    let report = pg_inst::secrecy_rate(&prec, &inst, c, &mc)?;
                    Ok(report_outcome(&report, 0))
                }
                Scheme::PgGsvdAn => unreachable!("rejected by config validation"),
            }
        }
        Prepared::Statistical { stat_template, .. } => {
            let mut stat = stat_template.clone();
            stat.p = WiretapInstance::power_for_snr_db(snr_db, stat.n_r, stat.sigma_b);
            match scheme {
                Scheme::PgGsvd => {
                    let result = pg_stat::algorithm2(&stat, c, cfg.n_s, &opt, &mc)?;
                    let b = result.bound;
                    Ok(PointOutcome {
                        rate_bob: b.bob_rate,
                        rate_eve: b.eve_upper,
                        secrecy: b.lower_bound.max(0.0),
                        std_err: b.bob_std_error,
                        iterations: result.iterations,
                    })
                }
                Scheme::PgGsvdAn => {
                    let mut signal_stat = stat.clone();
                    signal_stat.p = stat.p * (1.0 - cfg.an_fraction);
                    let result = pg_stat::algorithm2(&signal_stat, c, cfg.n_s, &opt, &mc)?;
                    let an = pg_stat::an_inject(&result.precoder, &stat, stat.p);
                    let eve = pg_stat::an_whitened_eve_bound(&result.precoder, &an, &stat, c)?;
                    Ok(PointOutcome {
                        rate_bob: result.bound.bob_rate,
                        rate_eve: eve,
                        secrecy: (result.bound.bob_rate - eve).max(0.0),
                        std_err: result.bound.bob_std_error,
                        iterations: result.iterations,
                    })
                }
                Scheme::TheoremOracle => {
                    let gsvd = pg_stat::gsvd_stat(&stat.h_ba, &stat.r_nt)?;
                    let prec =
                        pg_stat::zero_leakage_construction_stat(&gsvd, c, cfg.n_s, stat.p, opt.seed)?;
                    let b = pg_stat::secrecy_lower_bound(&prec, &stat, c, &mc)?;
                    Ok(PointOutcome {
                        rate_bob: b.bob_rate,
                        rate_eve: b.eve_upper,
                        secrecy: b.lower_bound.max(0.0),
                        std_err: b.bob_std_error,
                        iterations: 0,
                    })
                }
                Scheme::GsvdBaseline => unreachable!("rejected by config validation"),
            }
        }
    }
}

/// Runs every (scheme, SNR) point of a sweep. Points execute in parallel;
/// the ordered collection keeps output rows deterministic.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, wiretap_core::Error> {
    let c = cfg
        .build_constellation()
        .map_err(wiretap_core::Error::InvalidParameter)?;
    let prepared = prepare_channel(cfg)?;
    let points: Vec<(usize, usize)> = (0..cfg.schemes.len())
        .flat_map(|si| (0..cfg.snr_grid_db.len()).map(move |gi| (si, gi)))
        .collect();
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&(si, gi)| {
            let start = Instant::now();
            let outcome = run_point(cfg, &prepared, &c, cfg.schemes[si], si, gi)?;
            let wall_ms = if cfg.record_timings {
                start.elapsed().as_millis() as u64
            } else {
                0
            };
            Ok(SweepRow {
                scheme: cfg.schemes[si].name().to_string(),
                snr_db: cfg.snr_grid_db[gi],
                rate_bob: outcome.rate_bob,
                rate_eve: outcome.rate_eve,
                secrecy: outcome.secrecy,
                std_err: outcome.std_err,
                seed: derive_seed(cfg.seeds.noise, point_task(si, gi)),
                iterations: outcome.iterations,
                complexity_additions: complexity_for(cfg, cfg.schemes[si]),
                wall_ms,
            })
        })
        .collect::<Result<_, wiretap_core::Error>>()?;
    Ok(SweepResult {
        config: cfg.clone(),
        rows,
    })
}

fn complexity_for(cfg: &ExperimentConfig, scheme: Scheme) -> f64 {
    // the per-group cost model; the baseline evaluates scalar subchannels,
    // which is the N_s = 1 case of the same model
    let n_s = match scheme {
        Scheme::GsvdBaseline => 1,
        _ => cfg.n_s,
    };
    complexity_count(
        cfg.dims.n_t,
        n_s,
        cfg.constellation.m,
        ComplexityScheme::PgGsvd,
    )
}

/// Per-restart convergence trace of one optimizing scheme at a single SNR.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub scheme: String,
    pub snr_db: f64,
    /// traces[restart][iteration] in bits.
    pub traces: Vec<Vec<f64>>,
    pub best_restart: usize,
    pub converged: bool,
    pub iterations: usize,
    /// First iteration reaching 99% of the final objective (best restart).
    pub iterations_to_99pct: usize,
}

/// Runs the optimizer at one SNR and records the per-iteration objective for
/// every restart. Only optimizing schemes produce traces.
pub fn run_convergence(
    cfg: &ExperimentConfig,
    snr_db: f64,
) -> Result<Vec<ConvergenceTrace>, wiretap_core::Error> {
    let c = cfg
        .build_constellation()
        .map_err(wiretap_core::Error::InvalidParameter)?;
    let prepared = prepare_channel(cfg)?;
    let mut out = Vec::new();
    for (si, &scheme) in cfg.schemes.iter().enumerate() {
        let task = point_task(si, 0);
        let mc = McConfig::new(
            cfg.optimizer.mc_samples,
            derive_seed(cfg.seeds.noise, task),
        );
        let opt = OptimizerConfig {
            n_iter: cfg.optimizer.n_iter,
            eps_bits: cfg.optimizer.eps_bits,
            restarts: cfg.optimizer.restarts,
            seed: derive_seed(cfg.seeds.optimizer, task),
            ..Default::default()
        };
        let (traces, best_restart, converged, iterations) = match (&prepared, scheme) {
            (Prepared::Instantaneous { inst_template }, Scheme::PgGsvd) => {
                let mut inst = inst_template.clone();
                inst.p = WiretapInstance::power_for_snr_db(snr_db, inst.n_r, inst.sigma_b);
                let r = pg_inst::algorithm1(&inst, &c, cfg.n_s, &opt, &mc)?;
                (r.traces, r.best_restart, r.converged, r.iterations)
            }
            (Prepared::Statistical { stat_template, .. }, Scheme::PgGsvd | Scheme::PgGsvdAn) => {
                let mut stat = stat_template.clone();
                stat.p = WiretapInstance::power_for_snr_db(snr_db, stat.n_r, stat.sigma_b);
                if scheme == Scheme::PgGsvdAn {
                    stat.p *= 1.0 - cfg.an_fraction;
                }
                let r = pg_stat::algorithm2(&stat, &c, cfg.n_s, &opt, &mc)?;
                (r.traces, r.best_restart, r.converged, r.iterations)
            }
            _ => continue, // non-iterative schemes have no trace
        };
        let best = &traces[best_restart];
        let final_val = *best.last().unwrap_or(&0.0);
        let iterations_to_99pct = if final_val > 0.0 {
            best.iter()
                .position(|&v| v >= 0.99 * final_val)
                .unwrap_or(best.len() - 1)
        } else {
            0
        };
        out.push(ConvergenceTrace {
            scheme: scheme.name().to_string(),
            snr_db,
            traces,
            best_restart,
            converged,
            iterations,
            iterations_to_99pct,
        });
    }
    Ok(out)
}

/// Writes the channel fixture (matrices + manifest) for reproducibility.
pub fn write_fixture(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    dir: &std::path::Path,
) -> Result<(), wiretap_core::Error> {
    std::fs::create_dir_all(dir)?;
    match prepared {
        Prepared::Instantaneous { inst_template } => {
            matcore::write_matrix_text(&dir.join("h_ba.txt"), &inst_template.h_ba)?;
            matcore::write_matrix_text(
                &dir.join("h_ea.txt"),
                inst_template.h_ea.as_ref().unwrap(),
            )?;
            let manifest = ChannelManifest {
                n_t: cfg.dims.n_t,
                n_r: cfg.dims.n_r,
                n_e: cfg.dims.n_e,
                channel_seed: cfg.seeds.channel,
                h_ba_file: "h_ba.txt".into(),
                h_ea_file: Some("h_ea.txt".into()),
                r_nt_file: None,
                r_ne_file: None,
                correlation: None,
            };
            std::fs::write(
                dir.join("manifest.json"),
                serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
            )?;
        }
        Prepared::Statistical {
            stat_template,
            bob_correlation,
        } => {
            matcore::write_matrix_text(&dir.join("h_ba.txt"), &stat_template.h_ba)?;
            matcore::write_matrix_text(&dir.join("r_nt.txt"), &stat_template.r_nt)?;
            matcore::write_matrix_text(&dir.join("r_ne.txt"), &stat_template.r_ne)?;
            let manifest = ChannelManifest {
                n_t: cfg.dims.n_t,
                n_r: cfg.dims.n_r,
                n_e: cfg.dims.n_e,
                channel_seed: cfg.seeds.channel,
                h_ba_file: "h_ba.txt".into(),
                h_ea_file: None,
                r_nt_file: Some("r_nt.txt".into()),
                r_ne_file: Some("r_ne.txt".into()),
                correlation: Some(bob_correlation.clone()),
            };
            std::fs::write(
                dir.join("manifest.json"),
                serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
            )?;
        }
    }
    Ok(())
}
