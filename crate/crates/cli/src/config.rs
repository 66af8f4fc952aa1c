//! Experiment configuration: a single JSON document with defaults for every
//! field and unknown fields rejected, so a config reproduces one experiment
//! or fails loudly.

use serde::{Deserialize, Serialize};
use wiretap_core::constellation::{make_constellation, Constellation, ConstellationKind};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dims: Dims,
    pub constellation: ConstellationCfg,
    pub csi_mode: CsiMode,
    pub schemes: Vec<Scheme>,
    pub n_s: usize,
    pub snr_grid_db: Vec<f64>,
    pub optimizer: OptimizerCfg,
    pub seeds: Seeds,
    pub correlation: CorrelationCfg,
    /// Fraction of the budget handed to artificial noise by pg_gsvd_an.
    pub an_fraction: f64,
    /// Real wall-clock timings break byte-reproducibility; opt in explicitly.
    pub record_timings: bool,
    pub out_dir: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dims: Dims::default(),
            constellation: ConstellationCfg::default(),
            csi_mode: CsiMode::Instantaneous,
            schemes: vec![Scheme::GsvdBaseline, Scheme::PgGsvd],
            n_s: 2,
            snr_grid_db: vec![-10.0, 0.0, 10.0, 20.0, 30.0, 40.0],
            optimizer: OptimizerCfg::default(),
            seeds: Seeds::default(),
            correlation: CorrelationCfg::default(),
            an_fraction: 0.5,
            record_timings: false,
            out_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n_t: usize,
    pub n_r: usize,
    pub n_e: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            n_t: 4,
            n_r: 3,
            n_e: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct ConstellationCfg {
    pub kind: String,
    pub m: usize,
}

impl Default for ConstellationCfg {
    fn default() -> Self {
        Self {
            kind: "qpsk".to_string(),
            m: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CsiMode {
    Instantaneous,
    Statistical,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    GsvdBaseline,
    PgGsvd,
    PgGsvdAn,
    TheoremOracle,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::GsvdBaseline => "gsvd_baseline",
            Scheme::PgGsvd => "pg_gsvd",
            Scheme::PgGsvdAn => "pg_gsvd_an",
            Scheme::TheoremOracle => "theorem_oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerCfg {
    pub n_iter: usize,
    pub eps_bits: f64,
    pub restarts: usize,
    pub mc_samples: usize,
}

impl Default for OptimizerCfg {
    fn default() -> Self {
        Self {
            n_iter: 100,
            eps_bits: 1e-4,
            restarts: 5,
            mc_samples: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub channel: u64,
    pub noise: u64,
    pub optimizer: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            channel: 1,
            noise: 2,
            optimizer: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelationCfg {
    /// Fixed mean angle of arrival in radians; absent means one is drawn
    /// uniformly from [-π/6, π/6] using the channel seed.
    pub mean_aoa: Option<f64>,
    pub angle_spread: f64,
    pub antenna_spacing_wavelengths: f64,
    /// Number of eavesdropper channel realizations for the correlation
    /// estimation recipe.
    pub l_realizations: usize,
}

impl Default for CorrelationCfg {
    fn default() -> Self {
        Self {
            mean_aoa: None,
            angle_spread: std::f64::consts::PI / 2.0,
            antenna_spacing_wavelengths: 0.5,
            l_realizations: 1000,
        }
    }
}

/// Cap on the per-group joint dimension: M^(2·N_s) additions per noise
/// sample is the whole cost model.
const MAX_N_S: usize = 4;
const MAX_M: usize = 16;

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| format!("config parse error: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dims.n_t == 0 || self.dims.n_r == 0 || self.dims.n_e == 0 {
            return Err("dims: antenna counts must be positive".into());
        }
        if self.snr_grid_db.is_empty() {
            return Err("snr_grid_db: must be nonempty".into());
        }
        if self.schemes.is_empty() {
            return Err("schemes: must name at least one scheme".into());
        }
        if self.n_s == 0 {
            return Err("n_s: group size must be positive".into());
        }
        if self.n_s > MAX_N_S {
            return Err(format!(
                "n_s: {} exceeds the cap {MAX_N_S} (cost scales as M^(2 N_s))",
                self.n_s
            ));
        }
        if self.constellation.m > MAX_M {
            return Err(format!(
                "constellation.m: {} exceeds the cap {MAX_M}",
                self.constellation.m
            ));
        }
        if self.optimizer.mc_samples == 0 {
            return Err("optimizer.mc_samples: must be positive".into());
        }
        if !(0.0..1.0).contains(&self.an_fraction) {
            return Err(format!(
                "an_fraction: {} outside [0, 1)",
                self.an_fraction
            ));
        }
        for scheme in &self.schemes {
            match (self.csi_mode, scheme) {
                (CsiMode::Instantaneous, Scheme::PgGsvdAn) => {
                    return Err(
                        "schemes: pg_gsvd_an requires csi_mode = statistical (the noise \
                         injection is designed against statistical eavesdropper knowledge)"
                            .into(),
                    );
                }
                (CsiMode::Statistical, Scheme::GsvdBaseline) => {
                    return Err(
                        "schemes: gsvd_baseline requires csi_mode = instantaneous".into(),
                    );
                }
                _ => {}
            }
        }
        self.build_constellation().map(|_| ())?;
        if self.correlation.angle_spread <= 0.0 {
            return Err("correlation.angle_spread: must be positive".into());
        }
        if self.correlation.l_realizations == 0 {
            return Err("correlation.l_realizations: must be positive".into());
        }
        Ok(())
    }

    pub fn build_constellation(&self) -> Result<Constellation, String> {
        let kind = match self.constellation.kind.to_ascii_lowercase().as_str() {
            "bpsk" => ConstellationKind::Bpsk,
            "qpsk" => ConstellationKind::Qpsk,
            "psk8" | "psk-8" | "8psk" => ConstellationKind::Psk8,
            "qam16" | "qam-16" | "16qam" => ConstellationKind::Qam16,
            "qam" | "qam-m" => ConstellationKind::Qam,
            other => {
                return Err(format!(
                    "constellation.kind: unknown kind {other:?} (bpsk, qpsk, psk8, qam16, qam)"
                ))
            }
        };
        make_constellation(kind, self.constellation.m)
            .map_err(|e| format!("constellation: {e}"))
    }
}
