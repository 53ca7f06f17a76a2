//! Channel synthesis for the partitioned planar array, the reflecting
//! surface, and both user groups.
//!
//! The transmit array is an `M_x * M_y` planar grid at half-wavelength
//! spacing, split into consecutive equal subarrays along the linear antenna
//! index. Near-field users see each antenna through a distance- and
//! aperture-aware gain with spherical wavefronts; far-field users reach the
//! surface through plane-wave steering vectors. The array-to-surface link is
//! Rician: a deterministic rank-one component plus i.i.d. diffuse fading
//! redrawn per realization.

use crate::config::SystemConfig;
use crate::error::Error;
use crate::rng::complex_gaussian_matrix;
use crate::{C64, CMat, CVec, Result};
use nalgebra::DVector;
use rand::Rng;
use std::f64::consts::{PI, TAU};

// ---- array geometry ----

/// Planar-grid coordinates of antenna `m` (zero-based linear index), in
/// units of the antenna spacing. x runs fastest; the grid is centered on the
/// array origin, so coordinates are half-integers when a dimension is even.
pub fn antenna_coords(m: usize, m_x: usize, m_y: usize) -> (f64, f64) {
    let col = (m % m_x) as f64;
    let row = (m / m_x) as f64;
    let x = -0.5 * (m_x as f64 - 1.0) + col;
    let y = 0.5 * (m_y as f64 - 1.0) - row;
    (x, y)
}

/// Inverse of [`antenna_coords`]: recover the linear index from grid
/// coordinates. Returns `None` when the coordinates are off-grid.
pub fn antenna_index(x: f64, y: f64, m_x: usize, m_y: usize) -> Option<usize> {
    let col = x + 0.5 * (m_x as f64 - 1.0);
    let row = 0.5 * (m_y as f64 - 1.0) - y;
    let (c, r) = (col.round(), row.round());
    if (col - c).abs() > 1e-9 || (row - r).abs() > 1e-9 {
        return None;
    }
    if c < 0.0 || r < 0.0 || c >= m_x as f64 || r >= m_y as f64 {
        return None;
    }
    Some(r as usize * m_x + c as usize)
}

// ---- elementary responses ----

/// Near-field link gain between one antenna and a user at `u = (x, y, z)`
/// meters (array plane at z = 0). Combines free-space spreading with the
/// projected-aperture and polarization losses of a patch of area
/// `lambda^2 / 4 pi`.
pub fn nf_link_gain(u: [f64; 3], coords: (f64, f64), spacing: f64, lambda: f64) -> f64 {
    let aperture = lambda * lambda / (4.0 * PI);
    let dx = u[0] - coords.0 * spacing;
    let dy = u[1] - coords.1 * spacing;
    let z = u[2];
    let horiz = dx * dx + z * z;
    let dist_sq = dx * dx + dy * dy + z * z;
    aperture / (4.0 * PI) * z * horiz / dist_sq.powf(2.5)
}

/// Exact distance between antenna `coords` (in spacing units) and `u`.
fn nf_distance(u: [f64; 3], coords: (f64, f64), spacing: f64) -> f64 {
    let dx = u[0] - coords.0 * spacing;
    let dy = u[1] - coords.1 * spacing;
    (dx * dx + dy * dy + u[2] * u[2]).sqrt()
}

/// Near-field channel vector of one user over all `M` antennas: per-antenna
/// amplitude `sqrt(gain)` with the spherical-wavefront phase `-2 pi r / lambda`.
pub fn nf_channel_vector(u: [f64; 3], cfg: &SystemConfig) -> CVec {
    let (sp, lam) = (cfg.spacing(), cfg.lambda());
    CVec::from_fn(cfg.m(), |m, _| {
        let c = antenna_coords(m, cfg.m_x, cfg.m_y);
        let amp = nf_link_gain(u, c, sp, lam).sqrt();
        amp * C64::cis(-TAU * nf_distance(u, c, sp) / lam)
    })
}

/// Plane-wave steering vector of an `n1 * n2` grid. Entry `i * n2 + j` has
/// phase `2 pi spacing (i cos(el) sin(az) + j sin(el)) / lambda` for
/// `i in 0..n1`, `j in 0..n2`; all entries are unit modulus.
pub fn steering_vector(
    n1: usize,
    n2: usize,
    azimuth: f64,
    elevation: f64,
    spacing: f64,
    lambda: f64,
) -> CVec {
    let k = TAU * spacing / lambda;
    CVec::from_fn(n1 * n2, |idx, _| {
        let (i, j) = ((idx / n2) as f64, (idx % n2) as f64);
        C64::cis(k * (i * elevation.cos() * azimuth.sin() + j * elevation.sin()))
    })
}

/// Steering vector of the transmit array, laid out on the same linear
/// antenna index as [`antenna_coords`] (x index fastest) so that subarray
/// slices address the same physical antennas everywhere.
pub fn array_steering(cfg: &SystemConfig, azimuth: f64, elevation: f64) -> CVec {
    let k = TAU * cfg.spacing() / cfg.lambda();
    CVec::from_fn(cfg.m(), |m, _| {
        let (i, j) = ((m % cfg.m_x) as f64, (m / cfg.m_x) as f64);
        C64::cis(k * (i * elevation.cos() * azimuth.sin() + j * elevation.sin()))
    })
}

// ---- user drop ----

/// One random placement of both user groups.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    /// Near-field user positions in meters.
    pub nf_positions: Vec<[f64; 3]>,
    /// Far-field user azimuths as seen from the surface, radians.
    pub ff_azimuths: Vec<f64>,
}

/// Draw user positions: near-field users uniform in the configured box,
/// far-field users uniform on the semicircle in front of the surface.
pub fn draw_geometry<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Geometry {
    let nf_positions = (0..cfg.k_nf)
        .map(|_| {
            let mut p = [0.0; 3];
            for a in 0..3 {
                let (lo, hi) = (cfg.nf_box_min[a], cfg.nf_box_max[a]);
                p[a] = lo + (hi - lo) * rng.random::<f64>();
            }
            p
        })
        .collect();
    let ff_azimuths = (0..cfg.k_ff)
        .map(|_| (rng.random::<f64>() - 0.5) * PI)
        .collect();
    Geometry {
        nf_positions,
        ff_azimuths,
    }
}

// ---- assembled channel state ----

/// All channel state for one user drop: deterministic parts, the current
/// diffuse realization of the array-to-surface link, and the current surface
/// phase profile.
#[derive(Clone, Debug)]
pub struct ChannelSet {
    pub cfg: SystemConfig,
    /// Near-field user channels over the full array.
    pub nf: Vec<CVec>,
    /// Per-antenna link gains behind each near-field channel.
    pub nf_gains: Vec<DVector<f64>>,
    /// Deterministic (LoS) part of the array-to-surface link, `N x M`.
    pub h2_bar: CMat,
    /// Current diffuse realization, `N x M`, standard complex normal.
    pub h2_nlos: CMat,
    /// Far-field user channels at the surface.
    pub ff: Vec<CVec>,
    /// Large-scale gain of each far-field channel.
    pub ff_gain: Vec<f64>,
    /// Current surface phase profile, radians.
    pub theta: DVector<f64>,
}

impl ChannelSet {
    /// Build deterministic channel state for a user drop. The diffuse part
    /// starts at zero and the phase profile at zero; call
    /// [`ChannelSet::resample_fading`] and [`ChannelSet::with_theta`] to set
    /// them.
    pub fn new(cfg: &SystemConfig, geo: &Geometry) -> Result<Self> {
        if geo.nf_positions.len() != cfg.k_nf || geo.ff_azimuths.len() != cfg.k_ff {
            return Err(Error::DimensionMismatch(format!(
                "geometry holds {} NF / {} FF users, config expects {} / {}",
                geo.nf_positions.len(),
                geo.ff_azimuths.len(),
                cfg.k_nf,
                cfg.k_ff
            )));
        }
        cfg.validate()?;
        let (sp, lam) = (cfg.spacing(), cfg.lambda());
        let nf: Vec<CVec> = geo
            .nf_positions
            .iter()
            .map(|&u| nf_channel_vector(u, cfg))
            .collect();
        let nf_gains = geo
            .nf_positions
            .iter()
            .map(|&u| {
                DVector::from_fn(cfg.m(), |m, _| {
                    nf_link_gain(u, antenna_coords(m, cfg.m_x, cfg.m_y), sp, lam)
                })
            })
            .collect();
        let b_in = steering_vector(cfg.n_1, cfg.n_2, cfg.aoa_azimuth, cfg.aoa_elevation, sp, lam);
        let a_out = array_steering(cfg, cfg.aod_azimuth, cfg.aod_elevation);
        let h2_bar = &b_in * a_out.adjoint();
        let gain = cfg.varsigma();
        let ff: Vec<CVec> = geo
            .ff_azimuths
            .iter()
            .map(|&az| {
                let b = steering_vector(cfg.n_1, cfg.n_2, az, cfg.ffue_elevation, sp, lam);
                b * C64::from(gain.sqrt())
            })
            .collect();
        Ok(ChannelSet {
            cfg: cfg.clone(),
            nf,
            nf_gains,
            h2_bar,
            h2_nlos: CMat::zeros(cfg.n(), cfg.m()),
            ff,
            ff_gain: vec![gain; cfg.k_ff],
            theta: DVector::zeros(cfg.n()),
        })
    }

    /// Redraw the diffuse part of the array-to-surface link in place.
    pub fn resample_fading<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.h2_nlos = complex_gaussian_matrix(rng, self.cfg.n(), self.cfg.m());
    }

    /// Replace the surface phase profile.
    pub fn with_theta(mut self, theta: DVector<f64>) -> Self {
        assert_eq!(theta.len(), self.cfg.n(), "phase profile length");
        self.theta = theta;
        self
    }

    /// Current array-to-surface link: LoS plus scaled diffuse part.
    pub fn h2(&self) -> CMat {
        let a = C64::from(self.cfg.alpha2());
        let b = C64::from(self.cfg.beta2());
        &self.h2_bar * a + &self.h2_nlos * b
    }

    /// Far-field channel `k` folded through the conjugate phase profile:
    /// entry `n` is `exp(-j theta_n) h_{k,n}`.
    pub fn q(&self, k: usize) -> CVec {
        CVec::from_fn(self.cfg.n(), |n, _| {
            C64::cis(-self.theta[n]) * self.ff[k][n]
        })
    }

    /// Cascaded array-side channel of far-field user `k` for the current
    /// diffuse realization, over the full array.
    pub fn cascaded(&self, k: usize) -> CVec {
        self.h2().adjoint() * self.q(k)
    }

    /// Cascaded channel restricted to subarray `s`.
    pub fn cascaded_sub(&self, k: usize, s: usize) -> CVec {
        let r = self.cfg.subarray_range(s);
        self.cascaded(k).rows(r.start, r.len()).into_owned()
    }

    /// Near-field channel of user `k` restricted to subarray `s`.
    pub fn nf_sub(&self, k: usize, s: usize) -> CVec {
        let r = self.cfg.subarray_range(s);
        self.nf[k].rows(r.start, r.len()).into_owned()
    }

    /// Stacked near-field channel matrix, `M x K_nf`, one user per column.
    pub fn nf_matrix(&self) -> CMat {
        CMat::from_fn(self.cfg.m(), self.cfg.k_nf, |m, k| self.nf[k][m])
    }

    /// LoS array steering restricted to subarray `s` (column of `h2_bar`
    /// structure: `h2_bar = b_in a_out^H`).
    pub fn a_out_sub(&self, s: usize) -> CVec {
        let a = array_steering(&self.cfg, self.cfg.aod_azimuth, self.cfg.aod_elevation);
        let r = self.cfg.subarray_range(s);
        a.rows(r.start, r.len()).into_owned()
    }

    /// Surface steering of the incoming LoS path.
    pub fn b_in(&self) -> CVec {
        steering_vector(
            self.cfg.n_1,
            self.cfg.n_2,
            self.cfg.aoa_azimuth,
            self.cfg.aoa_elevation,
            self.cfg.spacing(),
            self.cfg.lambda(),
        )
    }
}
