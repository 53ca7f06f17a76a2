//! Per-subarray precoders and transmit-power bookkeeping.
//!
//! Three schemes are supported. MRT copies the (masked) channel. Cooperative
//! ZF inverts the stacked channel over the full array so every user's
//! precoder nulls all same-group users. Local ZF inverts each subarray's
//! channel over the users whose visibility region contains that subarray, so
//! nulling holds per subarray with only local channel knowledge.
//!
//! Near-field precoders are deterministic; far-field precoders are rebuilt
//! per diffuse-fading realization from the current cascaded channels. Power
//! enters separately through per-(subarray, user) coefficients against a
//! normalized unit budget.

use crate::channel::ChannelSet;
use crate::error::Error;
use crate::{C64, CMat, CVec, Result};
use nalgebra::DMatrix;
use rand::Rng;

/// Precoding scheme selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecoderKind {
    Mrt,
    Czf,
    Lzf,
}

impl std::fmt::Display for PrecoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PrecoderKind::Mrt => write!(f, "mrt"),
            PrecoderKind::Czf => write!(f, "czf"),
            PrecoderKind::Lzf => write!(f, "lzf"),
        }
    }
}

impl std::str::FromStr for PrecoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mrt" => Ok(PrecoderKind::Mrt),
            "czf" => Ok(PrecoderKind::Czf),
            "lzf" => Ok(PrecoderKind::Lzf),
            other => Err(Error::InvalidConfig(format!("unknown precoder '{other}'"))),
        }
    }
}

// ---- visibility regions ----

/// Which subarrays serve which user: one boolean mask per user over the
/// subarray index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VrAssignment {
    pub nf: Vec<Vec<bool>>,
    pub ff: Vec<Vec<bool>>,
}

impl VrAssignment {
    /// Every subarray serves every user.
    pub fn full(k_nf: usize, k_ff: usize, num_subarrays: usize) -> Self {
        VrAssignment {
            nf: vec![vec![true; num_subarrays]; k_nf],
            ff: vec![vec![true; num_subarrays]; k_ff],
        }
    }

    /// Subarrays in near-field user `k`'s region, ascending.
    pub fn nf_subarrays(&self, k: usize) -> Vec<usize> {
        mask_indices(&self.nf[k])
    }

    /// Subarrays in far-field user `k`'s region, ascending.
    pub fn ff_subarrays(&self, k: usize) -> Vec<usize> {
        mask_indices(&self.ff[k])
    }

    /// Near-field users whose region contains subarray `s`.
    pub fn nf_active(&self, s: usize) -> Vec<usize> {
        self.nf.iter().enumerate().filter(|(_, m)| m[s]).map(|(k, _)| k).collect()
    }

    /// Far-field users whose region contains subarray `s`.
    pub fn ff_active(&self, s: usize) -> Vec<usize> {
        self.ff.iter().enumerate().filter(|(_, m)| m[s]).map(|(k, _)| k).collect()
    }

    /// Total retained (user, subarray) pairs over both groups.
    pub fn active_pairs(&self) -> usize {
        self.nf.iter().chain(self.ff.iter()).map(|m| m.iter().filter(|&&b| b).count()).sum()
    }

    /// Every user must keep at least one subarray.
    pub fn validate(&self) -> Result<()> {
        for (k, m) in self.nf.iter().enumerate() {
            if !m.iter().any(|&b| b) {
                return Err(Error::InvalidConfig(format!("NF user {k} has an empty region")));
            }
        }
        for (k, m) in self.ff.iter().enumerate() {
            if !m.iter().any(|&b| b) {
                return Err(Error::InvalidConfig(format!("FF user {k} has an empty region")));
            }
        }
        Ok(())
    }
}

fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &b)| b).map(|(s, _)| s).collect()
}

// ---- precoder construction ----

/// One scheme's precoders for the current channel state: full-length columns
/// with zeros outside each user's visibility region.
#[derive(Clone, Debug)]
pub struct PrecoderSet {
    pub kind: PrecoderKind,
    /// Near-field user precoders (deterministic), `M` entries each.
    pub nf: Vec<CVec>,
    /// Far-field user precoders for the current fading realization.
    pub ff: Vec<CVec>,
}

/// Zero the blocks of `w` outside the masked subarrays.
fn apply_mask(w: &mut CVec, mask: &[bool], ch: &ChannelSet) {
    for (s, &keep) in mask.iter().enumerate() {
        if !keep {
            let r = ch.cfg.subarray_range(s);
            for m in r {
                w[m] = C64::from(0.0);
            }
        }
    }
}

/// Least-squares right inverse `A (A^H A)^{-1}` via SVD, guarded by a
/// condition-number limit.
fn ls_right_inverse(a: &CMat, cond_limit: f64, context: &str) -> Result<CMat> {
    let k = a.ncols();
    if k == 0 {
        return Ok(CMat::zeros(a.nrows(), 0));
    }
    if a.nrows() < k {
        return Err(Error::SingularChannel {
            cond: f64::INFINITY,
            limit: cond_limit,
            context: format!("{context}: {} channels on {} antennas", k, a.nrows()),
        });
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= cond_limit) {
        return Err(Error::SingularChannel {
            cond,
            limit: cond_limit,
            context: context.to_string(),
        });
    }
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    // A (A^H A)^{-1} = U S^{-1} V^H with A = U S V^H
    let mut us = u.clone();
    for j in 0..k {
        let inv = C64::from(1.0 / svd.singular_values[j]);
        us.column_mut(j).scale_mut(inv.re);
    }
    Ok(us * vt)
}

/// MRT: each precoder is the user's own channel, masked to its region.
pub fn mrt_precoders(ch: &ChannelSet, vr: &VrAssignment) -> Result<PrecoderSet> {
    vr.validate()?;
    let mut nf = Vec::with_capacity(ch.cfg.k_nf);
    for k in 0..ch.cfg.k_nf {
        let mut w = ch.nf[k].clone();
        apply_mask(&mut w, &vr.nf[k], ch);
        nf.push(w);
    }
    let mut ff = Vec::with_capacity(ch.cfg.k_ff);
    for k in 0..ch.cfg.k_ff {
        let mut w = ch.cascaded(k);
        apply_mask(&mut w, &vr.ff[k], ch);
        ff.push(w);
    }
    Ok(PrecoderSet { kind: PrecoderKind::Mrt, nf, ff })
}

/// Cooperative ZF: full-array right inverse of the stacked same-group
/// channel matrix, columns masked to each user's region afterwards.
pub fn czf_precoders(ch: &ChannelSet, vr: &VrAssignment) -> Result<PrecoderSet> {
    vr.validate()?;
    let limit = ch.cfg.solver.zf_cond_limit;
    let nf = if ch.cfg.k_nf > 0 {
        let h1 = ch.nf_matrix();
        let w = ls_right_inverse(&h1, limit, "cooperative ZF, near-field stack")?;
        (0..ch.cfg.k_nf)
            .map(|k| {
                let mut col = w.column(k).into_owned();
                apply_mask(&mut col, &vr.nf[k], ch);
                col
            })
            .collect()
    } else {
        Vec::new()
    };
    let ff = if ch.cfg.k_ff > 0 {
        let g = CMat::from_fn(ch.cfg.m(), ch.cfg.k_ff, |m, k| ch.cascaded(k)[m]);
        let w = ls_right_inverse(&g, limit, "cooperative ZF, far-field stack")?;
        (0..ch.cfg.k_ff)
            .map(|k| {
                let mut col = w.column(k).into_owned();
                apply_mask(&mut col, &vr.ff[k], ch);
                col
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(PrecoderSet { kind: PrecoderKind::Czf, nf, ff })
}

/// Local ZF: per subarray, invert the channel of the users active there.
/// Within subarray `s`, `g_sk^H w_si = delta_ki` holds for all active pairs.
pub fn lzf_precoders(ch: &ChannelSet, vr: &VrAssignment) -> Result<PrecoderSet> {
    vr.validate()?;
    let cfg = &ch.cfg;
    let limit = cfg.solver.zf_cond_limit;
    let ms = cfg.m_sub();
    let mut nf = vec![CVec::zeros(cfg.m()); cfg.k_nf];
    let mut ff = vec![CVec::zeros(cfg.m()); cfg.k_ff];
    for s in 0..cfg.num_subarrays {
        let r = cfg.subarray_range(s);
        let active_nf = vr.nf_active(s);
        if !active_nf.is_empty() {
            let a = CMat::from_fn(ms, active_nf.len(), |m, j| ch.nf[active_nf[j]][r.start + m]);
            let w = ls_right_inverse(&a, limit, &format!("local ZF, near-field, subarray {s}"))?;
            for (j, &k) in active_nf.iter().enumerate() {
                for m in 0..ms {
                    nf[k][r.start + m] = w[(m, j)];
                }
            }
        }
        let active_ff = vr.ff_active(s);
        if !active_ff.is_empty() {
            let a = CMat::from_fn(ms, active_ff.len(), |m, j| {
                ch.cascaded(active_ff[j])[r.start + m]
            });
            let w = ls_right_inverse(&a, limit, &format!("local ZF, far-field, subarray {s}"))?;
            for (j, &k) in active_ff.iter().enumerate() {
                for m in 0..ms {
                    ff[k][r.start + m] = w[(m, j)];
                }
            }
        }
    }
    Ok(PrecoderSet { kind: PrecoderKind::Lzf, nf, ff })
}

/// Build one scheme's precoders for the current channel state.
pub fn build_precoders(ch: &ChannelSet, kind: PrecoderKind, vr: &VrAssignment) -> Result<PrecoderSet> {
    match kind {
        PrecoderKind::Mrt => mrt_precoders(ch, vr),
        PrecoderKind::Czf => czf_precoders(ch, vr),
        PrecoderKind::Lzf => lzf_precoders(ch, vr),
    }
}

/// Subarray block of a stored precoder column.
pub fn precoder_sub(w: &CVec, ch: &ChannelSet, s: usize) -> CVec {
    let r = ch.cfg.subarray_range(s);
    w.rows(r.start, r.len()).into_owned()
}

// ---- power accounting ----

/// Expected per-(subarray, user) precoder energies used by the normalized
/// power constraint. Near-field entries are exact; far-field entries are
/// Monte-Carlo means over diffuse realizations with their standard errors.
#[derive(Clone, Debug)]
pub struct PowerConstants {
    /// `S x K_nf`, exact.
    pub c_nf: DMatrix<f64>,
    /// `S x K_ff`, sampled mean.
    pub c_ff: DMatrix<f64>,
    /// Standard error of each far-field entry.
    pub c_ff_se: DMatrix<f64>,
    pub draws: usize,
}

/// Estimate the power constants for one scheme: exact near-field energies
/// and fading-averaged far-field energies over `draws` resampled
/// realizations. The channel's current realization is left untouched.
pub fn power_constants<R: Rng + ?Sized>(
    ch: &ChannelSet,
    kind: PrecoderKind,
    vr: &VrAssignment,
    draws: usize,
    rng: &mut R,
) -> Result<PowerConstants> {
    let cfg = &ch.cfg;
    let s_num = cfg.num_subarrays;
    let det = build_precoders(ch, kind, vr)?;
    let mut c_nf = DMatrix::zeros(s_num, cfg.k_nf);
    for k in 0..cfg.k_nf {
        for s in 0..s_num {
            c_nf[(s, k)] = precoder_sub(&det.nf[k], ch, s).norm_squared();
        }
    }
    let mut sum = DMatrix::<f64>::zeros(s_num, cfg.k_ff);
    let mut sumsq = DMatrix::<f64>::zeros(s_num, cfg.k_ff);
    let mut work = ch.clone();
    for _ in 0..draws {
        work.resample_fading(rng);
        let set = build_precoders(&work, kind, vr)?;
        for k in 0..cfg.k_ff {
            for s in 0..s_num {
                let e = precoder_sub(&set.ff[k], &work, s).norm_squared();
                sum[(s, k)] += e;
                sumsq[(s, k)] += e * e;
            }
        }
    }
    let n = draws as f64;
    let c_ff = sum.map(|x| x / n);
    let mut c_ff_se = DMatrix::zeros(s_num, cfg.k_ff);
    for k in 0..cfg.k_ff {
        for s in 0..s_num {
            let mean = c_ff[(s, k)];
            let var = (sumsq[(s, k)] / n - mean * mean).max(0.0);
            c_ff_se[(s, k)] = (var / n).sqrt();
        }
    }
    Ok(PowerConstants { c_nf, c_ff, c_ff_se, draws })
}

/// Per-(subarray, user) power-control coefficients. Entries outside a
/// user's visibility region are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerAllocation {
    /// `S x K_nf`.
    pub eta_nf: DMatrix<f64>,
    /// `S x K_ff`.
    pub eta_ff: DMatrix<f64>,
}

impl PowerAllocation {
    pub fn zeros(num_subarrays: usize, k_nf: usize, k_ff: usize) -> Self {
        PowerAllocation {
            eta_nf: DMatrix::zeros(num_subarrays, k_nf),
            eta_ff: DMatrix::zeros(num_subarrays, k_ff),
        }
    }
}

/// Equal-power allocation: each user receives an equal share of the unit
/// budget, spread uniformly over its own visibility region.
pub fn equal_power(consts: &PowerConstants, vr: &VrAssignment) -> Result<PowerAllocation> {
    let s_num = consts.c_nf.nrows();
    let (k_nf, k_ff) = (consts.c_nf.ncols(), consts.c_ff.ncols());
    let total = k_nf + k_ff;
    if total == 0 {
        return Err(Error::InvalidConfig("no users to allocate power to".into()));
    }
    let share = 1.0 / total as f64;
    let mut alloc = PowerAllocation::zeros(s_num, k_nf, k_ff);
    for k in 0..k_nf {
        let subs = vr.nf_subarrays(k);
        let energy: f64 = subs.iter().map(|&s| consts.c_nf[(s, k)]).sum();
        if energy <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "NF user {k} has zero precoder energy over its region"
            )));
        }
        for &s in &subs {
            alloc.eta_nf[(s, k)] = share / energy;
        }
    }
    for k in 0..k_ff {
        let subs = vr.ff_subarrays(k);
        let energy: f64 = subs.iter().map(|&s| consts.c_ff[(s, k)]).sum();
        if energy <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "FF user {k} has zero expected precoder energy over its region"
            )));
        }
        for &s in &subs {
            alloc.eta_ff[(s, k)] = share / energy;
        }
    }
    Ok(alloc)
}

/// Total expected transmit power of an allocation against the unit budget.
pub fn total_power(alloc: &PowerAllocation, consts: &PowerConstants) -> f64 {
    let mut total = 0.0;
    for k in 0..consts.c_nf.ncols() {
        for s in 0..consts.c_nf.nrows() {
            total += alloc.eta_nf[(s, k)] * consts.c_nf[(s, k)];
        }
    }
    for k in 0..consts.c_ff.ncols() {
        for s in 0..consts.c_ff.nrows() {
            total += alloc.eta_ff[(s, k)] * consts.c_ff[(s, k)];
        }
    }
    total
}

/// Check an allocation against the unit budget with tolerance `tol`.
pub fn check_power(alloc: &PowerAllocation, consts: &PowerConstants, tol: f64) -> Result<f64> {
    let total = total_power(alloc, consts);
    if total > 1.0 + tol {
        return Err(Error::Infeasible(format!(
            "allocation spends {total:.6} of the unit power budget"
        )));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Geometry;
    use crate::config::{Profile, SystemConfig};
    use crate::rng::{substream, Stage};
    use approx::assert_relative_eq;

    fn desk_channels(seed: u64) -> ChannelSet {
        let cfg = SystemConfig::profile(Profile::Desk);
        let mut rng = substream(seed, 0, Stage::Geometry);
        let geo = crate::channel::draw_geometry(&cfg, &mut rng);
        let mut ch = ChannelSet::new(&cfg, &geo).unwrap();
        let mut frng = substream(seed, 0, Stage::FadingRealization);
        ch.resample_fading(&mut frng);
        let mut prng = substream(seed, 0, Stage::InitialPhases);
        let theta = crate::rng::uniform_phases(&mut prng, cfg.n());
        ch.with_theta(theta)
    }

    #[test]
    fn mrt_copies_the_channel_inside_the_region() {
        let ch = desk_channels(41);
        let mut vr = VrAssignment::full(ch.cfg.k_nf, ch.cfg.k_ff, ch.cfg.num_subarrays);
        vr.nf[0] = vec![true, false, true, false];
        let set = mrt_precoders(&ch, &vr).unwrap();
        for s in 0..4 {
            let block = precoder_sub(&set.nf[0], &ch, s);
            if vr.nf[0][s] {
                assert_relative_eq!((block - ch.nf_sub(0, s)).norm(), 0.0, epsilon = 1e-15);
            } else {
                assert_eq!(block.norm(), 0.0);
            }
        }
        // per-subarray precoder norm equals channel norm inside the region
        for k in 0..ch.cfg.k_ff {
            for s in 0..4 {
                let b = precoder_sub(&set.ff[k], &ch, s);
                assert_relative_eq!(b.norm(), ch.cascaded_sub(k, s).norm(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn czf_nulls_same_group_users_over_the_full_array() {
        let ch = desk_channels(42);
        let vr = VrAssignment::full(ch.cfg.k_nf, ch.cfg.k_ff, ch.cfg.num_subarrays);
        let set = czf_precoders(&ch, &vr).unwrap();
        for k in 0..ch.cfg.k_nf {
            for i in 0..ch.cfg.k_nf {
                let g = ch.nf[k].dotc(&set.nf[i]);
                let expect = if k == i { 1.0 } else { 0.0 };
                assert!(
                    (g - C64::from(expect)).norm() < 1e-10,
                    "NF pair ({k},{i}): {g}"
                );
            }
        }
        for k in 0..ch.cfg.k_ff {
            for i in 0..ch.cfg.k_ff {
                let g = ch.cascaded(k).dotc(&set.ff[i]);
                let expect = if k == i { 1.0 } else { 0.0 };
                assert!(
                    (g - C64::from(expect)).norm() < 1e-10,
                    "FF pair ({k},{i}): {g}"
                );
            }
        }
    }

    #[test]
    fn czf_reduces_to_scaled_mrt_for_orthogonal_channels() {
        // two orthogonal single-user channels on an 8-antenna array
        let mut cfg = SystemConfig::profile(Profile::Desk);
        cfg.m_x = 4;
        cfg.m_y = 2;
        cfg.num_subarrays = 2;
        cfg.k_nf = 2;
        cfg.k_ff = 0;
        let geo = Geometry {
            nf_positions: vec![[0.0, 0.0, 5.0], [0.0, 0.0, 5.0]],
            ff_azimuths: vec![],
        };
        let mut ch = ChannelSet::new(&cfg, &geo).unwrap();
        // overwrite with exactly orthogonal vectors
        let mut g0 = CVec::zeros(8);
        let mut g1 = CVec::zeros(8);
        for m in 0..4 {
            g0[m] = C64::new(0.3, 0.1 * m as f64);
            g1[4 + m] = C64::new(-0.2, 0.05 * m as f64);
        }
        ch.nf = vec![g0.clone(), g1.clone()];
        let vr = VrAssignment::full(2, 0, 2);
        let set = czf_precoders(&ch, &vr).unwrap();
        let scaled0 = &g0 / C64::from(g0.norm_squared());
        let scaled1 = &g1 / C64::from(g1.norm_squared());
        assert!((&set.nf[0] - scaled0).norm() < 1e-12);
        assert!((&set.nf[1] - scaled1).norm() < 1e-12);
    }

    #[test]
    fn lzf_is_identity_on_active_pairs_per_subarray() {
        let ch = desk_channels(43);
        let mut vr = VrAssignment::full(ch.cfg.k_nf, ch.cfg.k_ff, ch.cfg.num_subarrays);
        vr.nf[1] = vec![true, true, false, false];
        vr.ff[0] = vec![false, true, true, true];
        let set = lzf_precoders(&ch, &vr).unwrap();
        for s in 0..4 {
            for &k in &vr.nf_active(s) {
                for &i in &vr.nf_active(s) {
                    let g = ch.nf_sub(k, s).dotc(&precoder_sub(&set.nf[i], &ch, s));
                    let expect = if k == i { 1.0 } else { 0.0 };
                    assert!((g - C64::from(expect)).norm() < 1e-10);
                }
            }
            for &k in &vr.ff_active(s) {
                for &i in &vr.ff_active(s) {
                    let g = ch
                        .cascaded_sub(k, s)
                        .dotc(&precoder_sub(&set.ff[i], &ch, s));
                    let expect = if k == i { 1.0 } else { 0.0 };
                    assert!((g - C64::from(expect)).norm() < 1e-10);
                }
            }
        }
        // blocks outside the region stay zero
        assert_eq!(precoder_sub(&set.nf[1], &ch, 3).norm(), 0.0);
        assert_eq!(precoder_sub(&set.ff[0], &ch, 0).norm(), 0.0);
    }

    #[test]
    fn overloaded_subarray_is_rejected() {
        let mut cfg = SystemConfig::profile(Profile::Desk);
        cfg.m_x = 2;
        cfg.m_y = 2;
        cfg.num_subarrays = 4; // one antenna per subarray
        cfg.k_nf = 2;
        cfg.k_ff = 0;
        let geo = Geometry {
            nf_positions: vec![[1.0, 0.0, 4.0], [0.0, 1.0, 4.0]],
            ff_azimuths: vec![],
        };
        let ch = ChannelSet::new(&cfg, &geo).unwrap();
        let vr = VrAssignment::full(2, 0, 4);
        match lzf_precoders(&ch, &vr) {
            Err(Error::SingularChannel { .. }) => {}
            other => panic!("expected SingularChannel, got {other:?}"),
        }
    }

    #[test]
    fn duplicated_channel_hits_the_condition_limit() {
        let ch = desk_channels(44);
        let mut bad = ch.clone();
        bad.nf[1] = bad.nf[0].clone();
        let vr = VrAssignment::full(bad.cfg.k_nf, bad.cfg.k_ff, bad.cfg.num_subarrays);
        match czf_precoders(&bad, &vr) {
            Err(Error::SingularChannel { cond, .. }) => assert!(cond > 1e8),
            other => panic!("expected SingularChannel, got {other:?}"),
        }
    }

    #[test]
    fn equal_power_spends_exactly_the_budget() {
        let ch = desk_channels(45);
        let vr = VrAssignment::full(ch.cfg.k_nf, ch.cfg.k_ff, ch.cfg.num_subarrays);
        let mut rng = substream(45, 0, Stage::CacheDraws);
        for kind in [PrecoderKind::Mrt, PrecoderKind::Czf, PrecoderKind::Lzf] {
            let consts = power_constants(&ch, kind, &vr, 200, &mut rng).unwrap();
            let alloc = equal_power(&consts, &vr).unwrap();
            let total = check_power(&alloc, &consts, 1e-9).unwrap();
            assert_relative_eq!(total, 1.0, max_relative = 1e-9);
            // per-user share is 1/K on both sides
            let k_total = (ch.cfg.k_nf + ch.cfg.k_ff) as f64;
            for k in 0..ch.cfg.k_nf {
                let spent: f64 = (0..4).map(|s| alloc.eta_nf[(s, k)] * consts.c_nf[(s, k)]).sum();
                assert_relative_eq!(spent, 1.0 / k_total, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn power_constants_are_reproducible_for_a_fixed_stream() {
        let ch = desk_channels(46);
        let vr = VrAssignment::full(ch.cfg.k_nf, ch.cfg.k_ff, ch.cfg.num_subarrays);
        let mut r1 = substream(46, 1, Stage::CacheDraws);
        let mut r2 = substream(46, 1, Stage::CacheDraws);
        let a = power_constants(&ch, PrecoderKind::Mrt, &vr, 100, &mut r1).unwrap();
        let b = power_constants(&ch, PrecoderKind::Mrt, &vr, 100, &mut r2).unwrap();
        assert_eq!(a.c_ff, b.c_ff);
        assert_eq!(a.c_nf, b.c_nf);
    }
}
