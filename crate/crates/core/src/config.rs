//! System configuration: array/surface geometry, user populations, link
//! budgets, and solver tolerances.
//!
//! Two built-in profiles are provided: `desk` is sized so every algorithm
//! runs in seconds on a laptop, `paper` reproduces the published evaluation
//! scale. All physical quantities are SI; powers are configured in dBm and
//! folded into a single normalized transmit SNR because the noise floor is
//! normalized out of the closed forms.

use crate::error::Error;
use crate::Result;
use serde::{Deserialize, Serialize};

/// Built-in configuration presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::InvalidConfig(format!("unknown profile '{other}'"))),
        }
    }
}

/// How the exponential-cone constraints of the power allocator are handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpConeMode {
    /// Native exponential cones in the conic subproblem (default).
    Native,
    /// Golden-section search over the rate split with SOC-only subproblems.
    Bisection,
}

/// Iteration caps and tolerances for the optimization loops.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Rank-one residual target for the phase-profile penalty loop.
    pub phase_eps: f64,
    /// Relative objective-improvement stop for the power SCA loop.
    pub power_eps: f64,
    /// Initial penalty weight for the phase-profile loop.
    pub penalty_init: f64,
    /// Multiplicative penalty growth per outer scaling.
    pub penalty_scale: f64,
    /// Inner-iteration cap per penalty weight.
    pub max_inner: usize,
    /// Cap on penalty scalings.
    pub max_outer: usize,
    /// SCA iteration cap.
    pub max_sca: usize,
    /// Condition-number limit for ZF channel inversions.
    pub zf_cond_limit: f64,
    pub exp_cone_mode: ExpConeMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            phase_eps: 1e-4,
            power_eps: 1e-3,
            penalty_init: 1e-6,
            penalty_scale: 10.0,
            max_inner: 30,
            max_outer: 30,
            max_sca: 30,
            zf_cond_limit: 1e8,
            exp_cone_mode: ExpConeMode::Native,
        }
    }
}

/// Per-user quality-of-service floors for the power allocator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum QosMode {
    /// No rate floors.
    None,
    /// Floors set per user from the equal-power random-phase baseline rates.
    Auto,
    /// Explicit floors in bit/s/Hz, one per near-field and far-field user.
    Explicit { nf: Vec<f64>, ff: Vec<f64> },
}

/// Full physical and algorithmic configuration of one system instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemConfig {
    /// Transmit array width in antennas (x direction).
    pub m_x: usize,
    /// Transmit array height in antennas (y direction).
    pub m_y: usize,
    /// Number of equal consecutive subarrays the array is partitioned into.
    pub num_subarrays: usize,
    /// Reflecting-surface width in elements.
    pub n_1: usize,
    /// Reflecting-surface height in elements.
    pub n_2: usize,
    /// Near-field user count.
    pub k_nf: usize,
    /// Far-field user count.
    pub k_ff: usize,
    pub carrier_hz: f64,
    /// Array-to-surface distance in meters.
    pub dist_array_surface: f64,
    /// Surface-to-far-user distance in meters.
    pub dist_surface_user: f64,
    /// Rician factor of the array-to-surface link.
    pub rician_factor: f64,
    /// Reference path loss at 1 m.
    pub pathloss_ref: f64,
    /// Path-loss exponent of the array-to-surface link.
    pub pathloss_exp_as: f64,
    /// Path-loss exponent of the surface-to-user link.
    pub pathloss_exp_su: f64,
    /// Array departure azimuth/elevation toward the surface, radians.
    pub aod_azimuth: f64,
    pub aod_elevation: f64,
    /// Surface arrival azimuth/elevation from the array, radians.
    pub aoa_azimuth: f64,
    pub aoa_elevation: f64,
    /// Fixed elevation of far-field users as seen from the surface, radians.
    pub ffue_elevation: f64,
    /// Near-field drop volume, axis-aligned, meters (x, y, z minima).
    pub nf_box_min: [f64; 3],
    pub nf_box_max: [f64; 3],
    pub tx_power_dbm: f64,
    pub noise_dbm: f64,
    /// Scalarization weight of the worst near-field rate.
    pub weight_nf: f64,
    /// Scalarization weight of the worst far-field rate.
    pub weight_ff: f64,
    /// Visibility-region retention factor in (0, 1].
    pub vr_delta: f64,
    /// Monte-Carlo draws for expectation caches.
    pub cache_draws: usize,
    /// Monte-Carlo draws for oracle validation runs.
    pub oracle_draws: usize,
    pub qos: QosMode,
    pub solver: SolverConfig,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig::profile(Profile::Desk)
    }
}

impl SystemConfig {
    pub fn profile(p: Profile) -> Self {
        let base = SystemConfig {
            m_x: 10,
            m_y: 10,
            num_subarrays: 4,
            n_1: 4,
            n_2: 4,
            k_nf: 2,
            k_ff: 2,
            carrier_hz: 5e9,
            dist_array_surface: 100.0,
            dist_surface_user: 20.0,
            rician_factor: 2.0,
            pathloss_ref: 1e-3,
            pathloss_exp_as: 2.5,
            pathloss_exp_su: 2.0,
            aod_azimuth: 0.35,
            aod_elevation: 0.12,
            aoa_azimuth: -0.40,
            aoa_elevation: 0.20,
            ffue_elevation: 0.0,
            nf_box_min: [0.0, 0.0, 2.0],
            nf_box_max: [20.0, 20.0, 20.0],
            tx_power_dbm: 30.0,
            noise_dbm: -104.0,
            weight_nf: 0.5,
            weight_ff: 0.5,
            vr_delta: 0.8,
            cache_draws: 1000,
            oracle_draws: 20_000,
            qos: QosMode::None,
            solver: SolverConfig::default(),
        };
        match p {
            Profile::Desk => base,
            Profile::Paper => SystemConfig {
                m_x: 20,
                m_y: 10,
                n_1: 10,
                n_2: 10,
                k_nf: 5,
                k_ff: 5,
                cache_draws: 10_000,
                qos: QosMode::Auto,
                ..base
            },
        }
    }

    // ---- derived quantities ----

    /// Total antenna count.
    pub fn m(&self) -> usize {
        self.m_x * self.m_y
    }

    /// Antennas per subarray.
    pub fn m_sub(&self) -> usize {
        self.m() / self.num_subarrays
    }

    /// Surface element count.
    pub fn n(&self) -> usize {
        self.n_1 * self.n_2
    }

    /// Carrier wavelength in meters.
    pub fn lambda(&self) -> f64 {
        299_792_458.0 / self.carrier_hz
    }

    /// Antenna spacing (half wavelength).
    pub fn spacing(&self) -> f64 {
        self.lambda() / 2.0
    }

    /// Normalized transmit SNR: per-group power over noise power, linear.
    pub fn rho(&self) -> f64 {
        10f64.powf((self.tx_power_dbm - self.noise_dbm) / 10.0)
    }

    /// Large-scale gain of the array-to-surface link.
    pub fn zeta(&self) -> f64 {
        self.pathloss_ref * self.dist_array_surface.powf(-self.pathloss_exp_as)
    }

    /// Large-scale gain of the surface-to-user link.
    pub fn varsigma(&self) -> f64 {
        self.pathloss_ref * self.dist_surface_user.powf(-self.pathloss_exp_su)
    }

    /// Deterministic (LoS) amplitude of the array-to-surface link.
    pub fn alpha2(&self) -> f64 {
        let iota = self.rician_factor;
        (iota * self.zeta() / (iota + 1.0)).sqrt()
    }

    /// Diffuse (NLoS) amplitude of the array-to-surface link.
    pub fn beta2(&self) -> f64 {
        (self.zeta() / (self.rician_factor + 1.0)).sqrt()
    }

    /// Antenna index range of subarray `s` (zero-based, consecutive blocks).
    pub fn subarray_range(&self, s: usize) -> std::ops::Range<usize> {
        let ms = self.m_sub();
        s * ms..(s + 1) * ms
    }

    // ---- validation and serialization ----

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.m_x == 0 || self.m_y == 0 {
            return fail("array dimensions must be positive".into());
        }
        if self.num_subarrays == 0 || self.m() % self.num_subarrays != 0 {
            return fail(format!(
                "subarray count {} must divide antenna count {}",
                self.num_subarrays,
                self.m()
            ));
        }
        if self.n_1 == 0 || self.n_2 == 0 {
            return fail("surface dimensions must be positive".into());
        }
        if self.k_nf + self.k_ff == 0 {
            return fail("at least one user is required".into());
        }
        if self.k_nf > 0 && self.k_nf * 1 > self.m() {
            return fail("more near-field users than antennas".into());
        }
        if !(self.carrier_hz > 0.0) {
            return fail("carrier frequency must be positive".into());
        }
        if !(self.dist_array_surface > 0.0) || !(self.dist_surface_user > 0.0) {
            return fail("link distances must be positive".into());
        }
        if !(self.rician_factor >= 0.0) {
            return fail("Rician factor must be nonnegative".into());
        }
        if !(self.vr_delta > 0.0 && self.vr_delta <= 1.0) {
            return fail(format!("vr_delta {} outside (0, 1]", self.vr_delta));
        }
        if self.weight_nf < 0.0 || self.weight_ff < 0.0 || self.weight_nf + self.weight_ff == 0.0 {
            return fail("scalarization weights must be nonnegative and not both zero".into());
        }
        if self.cache_draws == 0 || self.oracle_draws == 0 {
            return fail("Monte-Carlo draw counts must be positive".into());
        }
        for (lo, hi) in self.nf_box_min.iter().zip(self.nf_box_max.iter()) {
            if !(lo <= hi) {
                return fail("near-field box has inverted bounds".into());
            }
        }
        if !(self.nf_box_min[2] > 0.0) {
            return fail("near-field box must sit in front of the array (z > 0)".into());
        }
        if let QosMode::Explicit { nf, ff } = &self.qos {
            if nf.len() != self.k_nf || ff.len() != self.k_ff {
                return fail("explicit QoS floors must match user counts".into());
            }
        }
        let s = &self.solver;
        if !(s.phase_eps > 0.0 && s.power_eps > 0.0 && s.penalty_init > 0.0) {
            return fail("solver tolerances must be positive".into());
        }
        if s.penalty_scale <= 1.0 {
            return fail("penalty growth factor must exceed 1".into());
        }
        if s.max_inner == 0 || s.max_outer == 0 || s.max_sca == 0 {
            return fail("iteration caps must be positive".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SystemConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}
