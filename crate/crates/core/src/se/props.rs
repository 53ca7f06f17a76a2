//! Per-user ergodic SINR assemblies for every (precoder, user group)
//! combination.
//!
//! Each assembly returns the use-and-forget decomposition of the SINR:
//! desired-signal power, beamforming-uncertainty power, same-group
//! interference, cross-group interference, and unit noise, all scaled by
//! the normalized transmit SNR. Near-field terms are deterministic given
//! the drop; far-field and cross-group terms average over the diffuse link
//! through the closed forms in [`super::terms`] or the sampled moments in
//! [`super::cache`].

use crate::channel::ChannelSet;
use crate::error::Error;
use crate::precoding::{
    build_precoders, precoder_sub, PowerAllocation, PrecoderKind, PrecoderSet, VrAssignment,
};
use crate::se::cache::ExpectationCache;
use crate::se::terms::{ordered_sum, psi_nf, psi_nf_own, sqrt_weights, TermCtx};
use crate::{C64, Result};

/// Additive decomposition of one user's ergodic SINR.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct SinrTerms {
    /// Desired-signal power.
    pub ds: f64,
    /// Beamforming-uncertainty power (variance of the desired coefficient).
    pub bu: f64,
    /// Same-group interference power.
    pub intra: f64,
    /// Cross-group interference power.
    pub inter: f64,
    /// Noise power (unity under the normalized link budget).
    pub noise: f64,
}

impl SinrTerms {
    pub fn sinr(&self) -> f64 {
        let denom = ordered_sum(vec![self.bu, self.intra, self.inter, self.noise]);
        self.ds / denom
    }

    /// Spectral efficiency in bit/s/Hz.
    pub fn se(&self) -> f64 {
        (1.0 + self.sinr()).log2()
    }
}

/// Uniform per-user power read-out for the cooperative scheme, where one
/// coefficient scales a user's whole distributed precoder.
fn uniform_eta(eta: &nalgebra::DMatrix<f64>, subs: &[usize], k: usize) -> f64 {
    subs.first().map_or(0.0, |&s| eta[(s, k)])
}

// ---- MRT ----

/// Near-field user `k` under per-subarray MRT.
pub fn mrt_nf_sinr(
    ctx: &TermCtx<'_>,
    vr: &VrAssignment,
    alloc: &PowerAllocation,
    k: usize,
) -> SinrTerms {
    let ch = ctx.ch;
    let rho = ch.cfg.rho();
    let own = vr.nf_subarrays(k);
    let w_own = sqrt_weights(&alloc.eta_nf, k, &own);
    let ds_amp: f64 = own
        .iter()
        .zip(w_own.iter())
        .map(|(&s, w)| w * psi_nf_own(ch, k, s))
        .sum();
    let mut intra = Vec::new();
    for i in 0..ch.cfg.k_nf {
        if i == k {
            continue;
        }
        let subs = vr.nf_subarrays(i);
        let w = sqrt_weights(&alloc.eta_nf, i, &subs);
        let z: C64 = subs
            .iter()
            .zip(w.iter())
            .map(|(&s, wi)| C64::from(*wi) * psi_nf(ch, k, i, s))
            .sum();
        intra.push(z.norm_sqr());
    }
    let mut inter = Vec::new();
    for j in 0..ch.cfg.k_ff {
        let subs = vr.ff_subarrays(j);
        let w = sqrt_weights(&alloc.eta_ff, j, &subs);
        let mut acc = Vec::new();
        for (ai, &s) in subs.iter().enumerate() {
            for (bi, &s2) in subs.iter().enumerate() {
                acc.push(w[ai] * w[bi] * ctx.xi_nf_sees_ff(k, j, s, s2));
            }
        }
        inter.push(ordered_sum(acc));
    }
    SinrTerms {
        ds: rho * ds_amp * ds_amp,
        bu: 0.0,
        intra: rho * ordered_sum(intra),
        inter: rho * ordered_sum(inter),
        noise: 1.0,
    }
}

/// Far-field user `k` under per-subarray MRT.
pub fn mrt_ff_sinr(
    ctx: &TermCtx<'_>,
    vr: &VrAssignment,
    alloc: &PowerAllocation,
    k: usize,
) -> SinrTerms {
    let ch = ctx.ch;
    let rho = ch.cfg.rho();
    let own = vr.ff_subarrays(k);
    let w_own = sqrt_weights(&alloc.eta_ff, k, &own);
    let ds_amp: f64 = own
        .iter()
        .zip(w_own.iter())
        .map(|(&s, w)| w * ctx.psi_ff(k, s))
        .sum();
    let bu: f64 = own
        .iter()
        .map(|&s| alloc.eta_ff[(s, k)] * ctx.a_tilde(k, s))
        .sum();
    let mut intra = Vec::new();
    for j in 0..ch.cfg.k_ff {
        if j == k {
            continue;
        }
        let subs = vr.ff_subarrays(j);
        let w = sqrt_weights(&alloc.eta_ff, j, &subs);
        let mut acc = Vec::new();
        for (ai, &s) in subs.iter().enumerate() {
            for (bi, &s2) in subs.iter().enumerate() {
                acc.push(w[ai] * w[bi] * ctx.b_tilde(k, j, s, s2));
            }
        }
        intra.push(ordered_sum(acc));
    }
    let mut inter = Vec::new();
    for i in 0..ch.cfg.k_nf {
        let subs = vr.nf_subarrays(i);
        let w = sqrt_weights(&alloc.eta_nf, i, &subs);
        let mut acc = Vec::new();
        for (ai, &s) in subs.iter().enumerate() {
            for (bi, &s2) in subs.iter().enumerate() {
                acc.push(w[ai] * w[bi] * ctx.xi_ff_sees_nf(k, i, s, s2));
            }
        }
        inter.push(ordered_sum(acc));
    }
    SinrTerms {
        ds: rho * ds_amp * ds_amp,
        bu: rho * bu,
        intra: rho * ordered_sum(intra),
        inter: rho * ordered_sum(inter),
        noise: 1.0,
    }
}

// ---- cooperative ZF ----

/// All users under cooperative ZF. Needs the deterministic near-field
/// precoders and a sampled cache for the far-field expectations.
pub fn czf_sinrs(
    ctx: &TermCtx<'_>,
    set: &PrecoderSet,
    vr: &VrAssignment,
    alloc: &PowerAllocation,
    cache: &ExpectationCache,
) -> (Vec<SinrTerms>, Vec<SinrTerms>) {
    let ch = ctx.ch;
    let rho = ch.cfg.rho();
    let mut nf_terms = Vec::with_capacity(ch.cfg.k_nf);
    for k in 0..ch.cfg.k_nf {
        let own = vr.nf_subarrays(k);
        let eta_k = uniform_eta(&alloc.eta_nf, &own, k);
        let d: C64 = own
            .iter()
            .map(|&s| ch.nf_sub(k, s).dotc(&precoder_sub(&set.nf[k], ch, s)))
            .sum();
        let mut intra = Vec::new();
        for i in 0..ch.cfg.k_nf {
            if i == k {
                continue;
            }
            let subs = vr.nf_subarrays(i);
            let eta_i = uniform_eta(&alloc.eta_nf, &subs, i);
            let v: C64 = subs
                .iter()
                .map(|&s| ch.nf_sub(k, s).dotc(&precoder_sub(&set.nf[i], ch, s)))
                .sum();
            intra.push(eta_i * v.norm_sqr());
        }
        let mut inter = Vec::new();
        for j in 0..ch.cfg.k_ff {
            let eta_j = uniform_eta(&alloc.eta_ff, &vr.ff_subarrays(j), j);
            inter.push(eta_j * cache.nf_inter[(k, j)]);
        }
        nf_terms.push(SinrTerms {
            ds: rho * eta_k * d.norm_sqr(),
            bu: 0.0,
            intra: rho * ordered_sum(intra),
            inter: rho * ordered_sum(inter),
            noise: 1.0,
        });
    }
    let mut ff_terms = Vec::with_capacity(ch.cfg.k_ff);
    for k in 0..ch.cfg.k_ff {
        let own = vr.ff_subarrays(k);
        let eta_k = uniform_eta(&alloc.eta_ff, &own, k);
        let mean: C64 = own.iter().map(|&s| cache.ds_mean[(s, k)]).sum();
        let var: f64 = own.iter().map(|&s| cache.ds_var[(s, k)]).sum();
        let mut intra = Vec::new();
        for j in 0..ch.cfg.k_ff {
            if j == k {
                continue;
            }
            let eta_j = uniform_eta(&alloc.eta_ff, &vr.ff_subarrays(j), j);
            intra.push(eta_j * cache.ff_intra[(k, j)]);
        }
        let mut inter = Vec::new();
        for i in 0..ch.cfg.k_nf {
            let subs = vr.nf_subarrays(i);
            let eta_i = uniform_eta(&alloc.eta_nf, &subs, i);
            let ones = vec![1.0; subs.len()];
            inter.push(eta_i * ctx.ff_sees_nf_precoder(k, &set.nf[i], &subs, &ones));
        }
        ff_terms.push(SinrTerms {
            ds: rho * eta_k * mean.norm_sqr(),
            bu: rho * eta_k * var,
            intra: rho * ordered_sum(intra),
            inter: rho * ordered_sum(inter),
            noise: 1.0,
        });
    }
    (nf_terms, ff_terms)
}

// ---- local ZF ----

/// All users under per-subarray local ZF.
pub fn lzf_sinrs(
    ctx: &TermCtx<'_>,
    set: &PrecoderSet,
    vr: &VrAssignment,
    alloc: &PowerAllocation,
    cache: &ExpectationCache,
) -> (Vec<SinrTerms>, Vec<SinrTerms>) {
    let ch = ctx.ch;
    let rho = ch.cfg.rho();
    let mut nf_terms = Vec::with_capacity(ch.cfg.k_nf);
    for k in 0..ch.cfg.k_nf {
        let own = vr.nf_subarrays(k);
        let w_own = sqrt_weights(&alloc.eta_nf, k, &own);
        let d: C64 = own
            .iter()
            .zip(w_own.iter())
            .map(|(&s, w)| C64::from(*w) * ch.nf_sub(k, s).dotc(&precoder_sub(&set.nf[k], ch, s)))
            .sum();
        let mut intra = Vec::new();
        for i in 0..ch.cfg.k_nf {
            if i == k {
                continue;
            }
            let subs = vr.nf_subarrays(i);
            let w = sqrt_weights(&alloc.eta_nf, i, &subs);
            let v: C64 = subs
                .iter()
                .zip(w.iter())
                .map(|(&s, wi)| {
                    C64::from(*wi) * ch.nf_sub(k, s).dotc(&precoder_sub(&set.nf[i], ch, s))
                })
                .sum();
            intra.push(v.norm_sqr());
        }
        let mut inter = Vec::new();
        for j in 0..ch.cfg.k_ff {
            let subs = vr.ff_subarrays(j);
            let w = sqrt_weights(&alloc.eta_ff, j, &subs);
            let mut z = C64::from(0.0);
            for (ai, &s) in subs.iter().enumerate() {
                for (bi, &s2) in subs.iter().enumerate() {
                    z += C64::from(w[ai] * w[bi]) * cache.nf_pair[k][j][(s, s2)];
                }
            }
            inter.push(z.re);
        }
        nf_terms.push(SinrTerms {
            ds: rho * d.norm_sqr(),
            bu: 0.0,
            intra: rho * ordered_sum(intra),
            inter: rho * ordered_sum(inter),
            noise: 1.0,
        });
    }
    let mut ff_terms = Vec::with_capacity(ch.cfg.k_ff);
    for k in 0..ch.cfg.k_ff {
        let own = vr.ff_subarrays(k);
        let w_own = sqrt_weights(&alloc.eta_ff, k, &own);
        // local ZF pins the active desired coefficient to one per draw
        let ds_amp: f64 = w_own.iter().sum();
        let mut intra = Vec::new();
        for j in 0..ch.cfg.k_ff {
            if j == k {
                continue;
            }
            let subs = vr.ff_subarrays(j);
            let w = sqrt_weights(&alloc.eta_ff, j, &subs);
            let mut z = C64::from(0.0);
            for (ai, &s) in subs.iter().enumerate() {
                for (bi, &s2) in subs.iter().enumerate() {
                    z += C64::from(w[ai] * w[bi]) * cache.ff_pair[k][j][(s, s2)];
                }
            }
            intra.push(z.re);
        }
        let mut inter = Vec::new();
        for i in 0..ch.cfg.k_nf {
            let subs = vr.nf_subarrays(i);
            let w = sqrt_weights(&alloc.eta_nf, i, &subs);
            inter.push(ctx.ff_sees_nf_precoder(k, &set.nf[i], &subs, w.as_slice()));
        }
        ff_terms.push(SinrTerms {
            ds: rho * ds_amp * ds_amp,
            bu: 0.0,
            intra: rho * ordered_sum(intra),
            inter: rho * ordered_sum(inter),
            noise: 1.0,
        });
    }
    (nf_terms, ff_terms)
}

/// Dispatcher: evaluate both groups' SINR decompositions for one scheme.
/// ZF schemes require a matching expectation cache.
pub fn scheme_sinrs(
    ch: &ChannelSet,
    kind: PrecoderKind,
    vr: &VrAssignment,
    alloc: &PowerAllocation,
    cache: Option<&ExpectationCache>,
) -> Result<(Vec<SinrTerms>, Vec<SinrTerms>)> {
    let ctx = TermCtx::new(ch);
    match kind {
        PrecoderKind::Mrt => {
            let nf = (0..ch.cfg.k_nf).map(|k| mrt_nf_sinr(&ctx, vr, alloc, k)).collect();
            let ff = (0..ch.cfg.k_ff).map(|k| mrt_ff_sinr(&ctx, vr, alloc, k)).collect();
            Ok((nf, ff))
        }
        PrecoderKind::Czf | PrecoderKind::Lzf => {
            let cache = cache.ok_or_else(|| {
                Error::InvalidConfig(format!("{kind} SINR evaluation requires an expectation cache"))
            })?;
            if cache.kind != kind {
                return Err(Error::InvalidConfig(format!(
                    "cache was estimated for {} but requested scheme is {kind}",
                    cache.kind
                )));
            }
            let set = build_precoders(ch, kind, vr)?;
            Ok(match kind {
                PrecoderKind::Czf => czf_sinrs(&ctx, &set, vr, alloc, cache),
                _ => lzf_sinrs(&ctx, &set, vr, alloc, cache),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_geometry, ChannelSet, Geometry};
    use crate::config::{Profile, SystemConfig};
    use crate::precoding::{equal_power, power_constants};
    use crate::rng::{substream, uniform_phases, Stage};

    fn desk_channels(seed: u64) -> ChannelSet {
        let cfg = SystemConfig::profile(Profile::Desk);
        let mut rng = substream(seed, 0, Stage::Geometry);
        let geo = draw_geometry(&cfg, &mut rng);
        let mut ch = ChannelSet::new(&cfg, &geo).unwrap();
        let mut frng = substream(seed, 0, Stage::FadingRealization);
        ch.resample_fading(&mut frng);
        let mut prng = substream(seed, 0, Stage::InitialPhases);
        let theta = uniform_phases(&mut prng, cfg.n());
        ch.with_theta(theta)
    }

    fn equal_alloc(ch: &ChannelSet, kind: PrecoderKind, vr: &VrAssignment, seed: u64) -> PowerAllocation {
        let mut rng = substream(seed, 5, Stage::CacheDraws);
        let consts = power_constants(ch, kind, vr, 400, &mut rng).unwrap();
        equal_power(&consts, vr).unwrap()
    }

    #[test]
    fn single_nf_user_single_subarray_mrt_reduces_to_beamforming_gain() {
        let mut cfg = SystemConfig::profile(Profile::Desk);
        cfg.k_nf = 1;
        cfg.k_ff = 0;
        cfg.num_subarrays = 1;
        let geo = Geometry {
            nf_positions: vec![[4.0, 6.0, 9.0]],
            ff_azimuths: vec![],
        };
        let ch = ChannelSet::new(&cfg, &geo).unwrap();
        let vr = VrAssignment::full(1, 0, 1);
        let alloc = equal_alloc(&ch, PrecoderKind::Mrt, &vr, 7);
        let ctx = TermCtx::new(&ch);
        let terms = mrt_nf_sinr(&ctx, &vr, &alloc, 0);
        let g4 = ch.nf[0].norm_squared().powi(2);
        let expected = cfg.rho() * alloc.eta_nf[(0, 0)] * g4;
        assert!((terms.sinr() - expected).abs() / expected < 1e-12);
        assert_eq!(terms.bu, 0.0);
        assert_eq!(terms.intra, 0.0);
        assert_eq!(terms.inter, 0.0);
    }

    #[test]
    fn pure_los_link_kills_the_uncertainty_term() {
        // with no diffuse power the desired coefficient is deterministic
        let mut cfg = SystemConfig::profile(Profile::Desk);
        cfg.rician_factor = 1e12;
        let mut rng = substream(51, 0, Stage::Geometry);
        let geo = draw_geometry(&cfg, &mut rng);
        let ch = ChannelSet::new(&cfg, &geo).unwrap();
        let vr = VrAssignment::full(cfg.k_nf, cfg.k_ff, cfg.num_subarrays);
        let alloc = equal_alloc(&ch, PrecoderKind::Mrt, &vr, 51);
        let ctx = TermCtx::new(&ch);
        for k in 0..cfg.k_ff {
            let t = mrt_ff_sinr(&ctx, &vr, &alloc, k);
            assert!(t.bu / t.ds < 1e-10, "bu {} vs ds {}", t.bu, t.ds);
        }
    }

    #[test]
    fn single_ff_user_one_element_surface_matches_hand_value() {
        // N = 1: the cascaded channel is rank-one and every moment collapses
        let mut cfg = SystemConfig::profile(Profile::Desk);
        cfg.k_nf = 0;
        cfg.k_ff = 1;
        cfg.n_1 = 1;
        cfg.n_2 = 1;
        cfg.num_subarrays = 1;
        cfg.rician_factor = 1e15; // effectively beta2 = 0
        let geo = Geometry {
            nf_positions: vec![],
            ff_azimuths: vec![0.2],
        };
        let ch = ChannelSet::new(&cfg, &geo).unwrap();
        let vr = VrAssignment::full(0, 1, 1);
        let alloc = equal_alloc(&ch, PrecoderKind::Mrt, &vr, 9);
        let ctx = TermCtx::new(&ch);
        let t = mrt_ff_sinr(&ctx, &vr, &alloc, 0);
        // psi = varsigma * alpha2^2 * M, ds = rho * eta * psi^2
        let psi = cfg.varsigma() * cfg.alpha2().powi(2) * cfg.m() as f64;
        let expected = cfg.rho() * alloc.eta_ff[(0, 0)] * psi * psi;
        assert!(
            (t.ds - expected).abs() / expected < 1e-9,
            "ds {} vs {expected}",
            t.ds
        );
        assert!(t.bu / t.ds < 1e-12);
    }

    #[test]
    fn czf_full_region_kills_nf_intra_interference() {
        let ch = desk_channels(53);
        let vr = VrAssignment::full(ch.cfg.k_nf, ch.cfg.k_ff, ch.cfg.num_subarrays);
        let mut rng = substream(53, 1, Stage::CacheDraws);
        let cache = ExpectationCache::estimate(&ch, PrecoderKind::Czf, &vr, 300, &mut rng).unwrap();
        let consts = cache.power_constants(&ch, &vr).unwrap();
        let alloc = equal_power(&consts, &vr).unwrap();
        let (nf, _ff) = scheme_sinrs(&ch, PrecoderKind::Czf, &vr, &alloc, Some(&cache)).unwrap();
        for (k, t) in nf.iter().enumerate() {
            assert!(t.intra.abs() < 1e-10 * t.ds, "user {k} intra {}", t.intra);
        }
    }

    #[test]
    fn lzf_nf_desired_gain_is_the_power_sum() {
        let ch = desk_channels(54);
        let vr = VrAssignment::full(ch.cfg.k_nf, ch.cfg.k_ff, ch.cfg.num_subarrays);
        let mut rng = substream(54, 1, Stage::CacheDraws);
        let cache = ExpectationCache::estimate(&ch, PrecoderKind::Lzf, &vr, 200, &mut rng).unwrap();
        let consts = cache.power_constants(&ch, &vr).unwrap();
        let alloc = equal_power(&consts, &vr).unwrap();
        let (nf, ff) = scheme_sinrs(&ch, PrecoderKind::Lzf, &vr, &alloc, Some(&cache)).unwrap();
        for k in 0..ch.cfg.k_nf {
            let amp: f64 = (0..4).map(|s| alloc.eta_nf[(s, k)].sqrt()).sum();
            let expected = ch.cfg.rho() * amp * amp;
            assert!(
                (nf[k].ds - expected).abs() / expected < 1e-9,
                "user {k}: ds {} vs {expected}",
                nf[k].ds
            );
            // same-subarray activity nulls NF intra exactly at full regions
            assert!(nf[k].intra < 1e-10 * nf[k].ds);
        }
        for t in &ff {
            assert_eq!(t.bu, 0.0);
        }
    }

    #[test]
    fn raising_own_power_never_lowers_own_sinr() {
        let ch = desk_channels(55);
        let vr = VrAssignment::full(ch.cfg.k_nf, ch.cfg.k_ff, ch.cfg.num_subarrays);
        let alloc = equal_alloc(&ch, PrecoderKind::Mrt, &vr, 55);
        let ctx = TermCtx::new(&ch);
        for k in 0..ch.cfg.k_nf {
            let base = mrt_nf_sinr(&ctx, &vr, &alloc, k).sinr();
            let mut boosted = alloc.clone();
            for s in 0..ch.cfg.num_subarrays {
                boosted.eta_nf[(s, k)] *= 1.7;
            }
            let up = mrt_nf_sinr(&ctx, &vr, &boosted, k).sinr();
            assert!(up >= base * (1.0 - 1e-12), "NF {k}: {base} -> {up}");
        }
        for k in 0..ch.cfg.k_ff {
            let base = mrt_ff_sinr(&ctx, &vr, &alloc, k).sinr();
            let mut boosted = alloc.clone();
            for s in 0..ch.cfg.num_subarrays {
                boosted.eta_ff[(s, k)] *= 1.7;
            }
            let up = mrt_ff_sinr(&ctx, &vr, &boosted, k).sinr();
            assert!(up >= base * (1.0 - 1e-12), "FF {k}: {base} -> {up}");
        }
    }

    #[test]
    fn common_phase_shift_leaves_all_sinrs_unchanged() {
        // adding one constant to every surface phase rotates q_k by a
        // global phase, which cancels in every quadratic form
        let ch = desk_channels(56);
        let vr = VrAssignment::full(ch.cfg.k_nf, ch.cfg.k_ff, ch.cfg.num_subarrays);
        let alloc = equal_alloc(&ch, PrecoderKind::Mrt, &vr, 56);
        let ctx = TermCtx::new(&ch);
        let shifted = ch.clone().with_theta(ch.theta.map(|t| t + 1.234));
        let ctx2 = TermCtx::new(&shifted);
        for k in 0..ch.cfg.k_ff {
            let a = mrt_ff_sinr(&ctx, &vr, &alloc, k);
            let b = mrt_ff_sinr(&ctx2, &vr, &alloc, k);
            assert!((a.sinr() - b.sinr()).abs() <= 1e-9 * a.sinr().abs());
        }
        for k in 0..ch.cfg.k_nf {
            let a = mrt_nf_sinr(&ctx, &vr, &alloc, k);
            let b = mrt_nf_sinr(&ctx2, &vr, &alloc, k);
            assert!((a.sinr() - b.sinr()).abs() <= 1e-9 * a.sinr().abs());
        }
    }

    #[test]
    fn missing_cache_is_reported() {
        let ch = desk_channels(57);
        let vr = VrAssignment::full(ch.cfg.k_nf, ch.cfg.k_ff, ch.cfg.num_subarrays);
        let alloc = equal_alloc(&ch, PrecoderKind::Mrt, &vr, 57);
        match scheme_sinrs(&ch, PrecoderKind::Czf, &vr, &alloc, None) {
            Err(Error::InvalidConfig(_)) => {}
            other => panic!("expected InvalidConfig, got {other:?}"),
        }
    }
}
