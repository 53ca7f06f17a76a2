//! Greedy visibility-region selection.
//!
//! Starting from full regions, each user's subarrays are scanned in index
//! order and tentatively removed; a removal sticks when the user's own
//! closed-form SINR, with every other user frozen at full regions and the
//! full-region equal-power coefficients held fixed, stays above a retention
//! threshold `delta` times the full-region baseline. Each user therefore
//! costs exactly one closed-form evaluation per subarray.
//!
//! MRT selects against its own SINR expressions. The cooperative-ZF
//! selection also serves local ZF, which inherits the cooperative regions;
//! its sampled expectations are estimated once at full regions, and only
//! the desired-signal and self-uncertainty sums change while pruning.

use crate::channel::ChannelSet;
use crate::error::Error;
use crate::precoding::{
    build_precoders, equal_power, power_constants, precoder_sub, PrecoderKind, VrAssignment,
};
use crate::se::cache::ExpectationCache;
use crate::se::props::{mrt_ff_sinr, mrt_nf_sinr, scheme_sinrs};
use crate::se::terms::TermCtx;
use crate::{C64, Result};
use rand::Rng;

/// Retention metric for the scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VrCriterion {
    /// Full SINR: interference, self-uncertainty, and noise in the
    /// denominator (default).
    Sinr,
    /// Interference-blind: only self-uncertainty and noise count.
    Snr,
}

/// Outcome of one selection run.
#[derive(Clone, Debug)]
pub struct VrSelection {
    pub vr: VrAssignment,
    /// Full-region metric per near-field user the thresholds came from.
    pub baseline_nf: Vec<f64>,
    pub baseline_ff: Vec<f64>,
    /// Scan metric at each user's final region (others full, powers fixed).
    pub post_nf: Vec<f64>,
    pub post_ff: Vec<f64>,
    /// Closed-form evaluations spent (one per user per subarray).
    pub evaluations: usize,
    /// Users rescued by the keep-best-subarray fallback.
    pub fallbacks: usize,
}

/// Fraction of retained (user, subarray) pairs, in (0, 1].
pub fn vr_efficiency(vr: &VrAssignment, num_subarrays: usize) -> f64 {
    let users = vr.nf.len() + vr.ff.len();
    if users == 0 {
        return 1.0;
    }
    vr.active_pairs() as f64 / (users * num_subarrays) as f64
}

/// Per-user scan state: the own-signal pieces that depend on the user's own
/// region, and the frozen denominator contribution of everybody else.
struct UserScan {
    /// Desired-coefficient contribution of each subarray.
    amp: Vec<C64>,
    /// Self-uncertainty power contribution of each subarray.
    bu: Vec<f64>,
    /// Multiplies the squared desired-coefficient sum.
    scale: f64,
    /// Noise plus (criterion-dependent) frozen interference.
    denom_const: f64,
}

impl UserScan {
    fn eval(&self, keep: &[bool]) -> f64 {
        let mut amp = C64::from(0.0);
        let mut bu = 0.0;
        for (s, &k) in keep.iter().enumerate() {
            if k {
                amp += self.amp[s];
                bu += self.bu[s];
            }
        }
        self.scale * amp.norm_sqr() / (self.denom_const + bu)
    }
}

fn denom_of(criterion: VrCriterion, intra: f64, inter: f64) -> f64 {
    match criterion {
        VrCriterion::Sinr => 1.0 + intra + inter,
        VrCriterion::Snr => 1.0,
    }
}

/// Run the greedy scan over precomputed per-user states. Returns the final
/// masks plus bookkeeping.
fn scan_users(
    scans: &[UserScan],
    baselines: &[f64],
    delta: f64,
    s_num: usize,
    evaluations: &mut usize,
    fallbacks: &mut usize,
) -> Result<Vec<Vec<bool>>> {
    let mut out = Vec::with_capacity(scans.len());
    for (k, scan) in scans.iter().enumerate() {
        if !(baselines[k] > 0.0) {
            return Err(Error::DegenerateBaseline { user: k });
        }
        let gamma = delta * baselines[k];
        let mut keep = vec![true; s_num];
        for s in 0..s_num {
            keep[s] = false;
            *evaluations += 1;
            if scan.eval(&keep) < gamma {
                keep[s] = true;
            }
        }
        if !keep.iter().any(|&b| b) {
            // unreachable through the scan itself (the last viable removal
            // is always rejected), kept as a guard against threshold abuse
            let best = (0..s_num)
                .max_by(|&a, &b| {
                    let mut ka = vec![false; s_num];
                    ka[a] = true;
                    let mut kb = vec![false; s_num];
                    kb[b] = true;
                    scan.eval(&ka).partial_cmp(&scan.eval(&kb)).unwrap()
                })
                .unwrap();
            keep[best] = true;
            *fallbacks += 1;
        }
        out.push(keep);
    }
    Ok(out)
}

/// Select visibility regions for one precoding scheme. The local-ZF scheme
/// inherits the cooperative-ZF selection. `cache_draws` bounds the
/// Monte-Carlo effort for the ZF expectation cache and the far-field power
/// constants.
pub fn select_vrs<R: Rng + ?Sized>(
    ch: &ChannelSet,
    kind: PrecoderKind,
    delta: f64,
    criterion: VrCriterion,
    cache_draws: usize,
    rng: &mut R,
) -> Result<VrSelection> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidConfig(format!("retention factor {delta} outside (0, 1]")));
    }
    let cfg = &ch.cfg;
    let s_num = cfg.num_subarrays;
    let full = VrAssignment::full(cfg.k_nf, cfg.k_ff, s_num);
    let rho = cfg.rho();

    let effective = match kind {
        PrecoderKind::Lzf => PrecoderKind::Czf,
        other => other,
    };

    let (nf_scans, ff_scans) = match effective {
        PrecoderKind::Mrt => {
            let consts = power_constants(ch, PrecoderKind::Mrt, &full, cache_draws, rng)?;
            let alloc = equal_power(&consts, &full)?;
            let ctx = TermCtx::new(ch);
            let nf = (0..cfg.k_nf)
                .map(|k| {
                    let t = mrt_nf_sinr(&ctx, &full, &alloc, k);
                    UserScan {
                        amp: (0..s_num)
                            .map(|s| {
                                C64::from(
                                    alloc.eta_nf[(s, k)].sqrt()
                                        * crate::se::terms::psi_nf_own(ch, k, s),
                                )
                            })
                            .collect(),
                        bu: vec![0.0; s_num],
                        scale: rho,
                        denom_const: denom_of(criterion, t.intra, t.inter),
                    }
                })
                .collect::<Vec<_>>();
            let ff = (0..cfg.k_ff)
                .map(|k| {
                    let t = mrt_ff_sinr(&ctx, &full, &alloc, k);
                    UserScan {
                        amp: (0..s_num)
                            .map(|s| C64::from(alloc.eta_ff[(s, k)].sqrt() * ctx.psi_ff(k, s)))
                            .collect(),
                        bu: (0..s_num)
                            .map(|s| rho * alloc.eta_ff[(s, k)] * ctx.a_tilde(k, s))
                            .collect(),
                        scale: rho,
                        denom_const: denom_of(criterion, t.intra, t.inter),
                    }
                })
                .collect::<Vec<_>>();
            (nf, ff)
        }
        _ => {
            let cache = ExpectationCache::estimate(ch, PrecoderKind::Czf, &full, cache_draws, rng)?;
            let consts = cache.power_constants(ch, &full)?;
            let alloc = equal_power(&consts, &full)?;
            let set = build_precoders(ch, PrecoderKind::Czf, &full)?;
            let (nf_t, ff_t) = scheme_sinrs(ch, PrecoderKind::Czf, &full, &alloc, Some(&cache))?;
            let nf = (0..cfg.k_nf)
                .map(|k| {
                    let eta_k = alloc.eta_nf[(0, k)];
                    UserScan {
                        amp: (0..s_num)
                            .map(|s| ch.nf_sub(k, s).dotc(&precoder_sub(&set.nf[k], ch, s)))
                            .collect(),
                        bu: vec![0.0; s_num],
                        scale: rho * eta_k,
                        denom_const: denom_of(criterion, nf_t[k].intra, nf_t[k].inter),
                    }
                })
                .collect::<Vec<_>>();
            let ff = (0..cfg.k_ff)
                .map(|k| {
                    let eta_k = alloc.eta_ff[(0, k)];
                    UserScan {
                        amp: (0..s_num).map(|s| cache.ds_mean[(s, k)]).collect(),
                        bu: (0..s_num).map(|s| rho * eta_k * cache.ds_var[(s, k)]).collect(),
                        scale: rho * eta_k,
                        denom_const: denom_of(criterion, ff_t[k].intra, ff_t[k].inter),
                    }
                })
                .collect::<Vec<_>>();
            (nf, ff)
        }
    };

    let full_mask = vec![true; s_num];
    let baseline_nf: Vec<f64> = nf_scans.iter().map(|u| u.eval(&full_mask)).collect();
    let baseline_ff: Vec<f64> = ff_scans.iter().map(|u| u.eval(&full_mask)).collect();

    let mut evaluations = 0;
    let mut fallbacks = 0;
    let nf_masks =
        scan_users(&nf_scans, &baseline_nf, delta, s_num, &mut evaluations, &mut fallbacks)?;
    let ff_masks =
        scan_users(&ff_scans, &baseline_ff, delta, s_num, &mut evaluations, &mut fallbacks)?;
    let post_nf: Vec<f64> = nf_scans.iter().zip(&nf_masks).map(|(u, m)| u.eval(m)).collect();
    let post_ff: Vec<f64> = ff_scans.iter().zip(&ff_masks).map(|(u, m)| u.eval(m)).collect();
    Ok(VrSelection {
        vr: VrAssignment {
            nf: nf_masks,
            ff: ff_masks,
        },
        baseline_nf,
        baseline_ff,
        post_nf,
        post_ff,
        evaluations,
        fallbacks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_geometry, ChannelSet, Geometry};
    use crate::config::{Profile, SystemConfig};
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

    #[test]
    fn efficiency_counts_retained_pairs() {
        let mut vr = VrAssignment::full(2, 2, 4);
        assert_eq!(vr_efficiency(&vr, 4), 1.0);
        vr.nf[0] = vec![true, false, false, false];
        vr.ff[1] = vec![true, true, false, false];
        assert!((vr_efficiency(&vr, 4) - (1 + 4 + 4 + 2) as f64 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn scan_spends_one_evaluation_per_user_per_subarray() {
        let ch = desk_channels(71);
        let mut rng = substream(71, 3, Stage::CacheDraws);
        for kind in [PrecoderKind::Mrt, PrecoderKind::Czf] {
            let sel = select_vrs(&ch, kind, 0.8, VrCriterion::Sinr, 300, &mut rng).unwrap();
            let users = ch.cfg.k_nf + ch.cfg.k_ff;
            assert_eq!(sel.evaluations, users * ch.cfg.num_subarrays);
            assert_eq!(sel.fallbacks, 0);
            sel.vr.validate().unwrap();
        }
    }

    #[test]
    fn retained_regions_meet_the_threshold() {
        let ch = desk_channels(72);
        let mut rng = substream(72, 3, Stage::CacheDraws);
        for kind in [PrecoderKind::Mrt, PrecoderKind::Czf] {
            let sel = select_vrs(&ch, kind, 0.8, VrCriterion::Sinr, 300, &mut rng).unwrap();
            for (k, (&post, &base)) in sel.post_nf.iter().zip(&sel.baseline_nf).enumerate() {
                assert!(post >= 0.8 * base * (1.0 - 1e-12), "NF {k}: {post} < 0.8 * {base}");
            }
            for (k, (&post, &base)) in sel.post_ff.iter().zip(&sel.baseline_ff).enumerate() {
                assert!(post >= 0.8 * base * (1.0 - 1e-12), "FF {k}: {post} < 0.8 * {base}");
            }
        }
    }

    #[test]
    fn tight_threshold_keeps_full_regions() {
        let ch = desk_channels(73);
        let mut rng = substream(73, 3, Stage::CacheDraws);
        let sel = select_vrs(&ch, PrecoderKind::Mrt, 0.999_999, VrCriterion::Sinr, 200, &mut rng)
            .unwrap();
        assert_eq!(vr_efficiency(&sel.vr, ch.cfg.num_subarrays), 1.0);
    }

    #[test]
    fn loosening_the_threshold_never_grows_regions() {
        let ch = desk_channels(74);
        let mut r1 = substream(74, 3, Stage::CacheDraws);
        let mut r2 = substream(74, 3, Stage::CacheDraws);
        let tight = select_vrs(&ch, PrecoderKind::Mrt, 0.9, VrCriterion::Sinr, 200, &mut r1).unwrap();
        let loose = select_vrs(&ch, PrecoderKind::Mrt, 0.6, VrCriterion::Sinr, 200, &mut r2).unwrap();
        let e_tight = vr_efficiency(&tight.vr, 4);
        let e_loose = vr_efficiency(&loose.vr, 4);
        assert!(e_loose <= e_tight + 1e-12, "0.6 kept {e_loose}, 0.9 kept {e_tight}");
    }

    #[test]
    fn greedy_matches_exhaustive_search_on_a_dominant_subarray_toy() {
        // single near-field user parked over subarray 0 of a two-subarray
        // strip; subarray 1 barely contributes
        let mut cfg = SystemConfig::profile(Profile::Desk);
        cfg.m_x = 8;
        cfg.m_y = 1;
        cfg.num_subarrays = 2;
        cfg.k_nf = 1;
        cfg.k_ff = 0;
        let spacing = cfg.spacing();
        // hovering right over the first antenna of subarray 0
        let geo = Geometry {
            nf_positions: vec![[-3.5 * spacing, 0.0, 0.05]],
            ff_azimuths: vec![],
        };
        let ch = ChannelSet::new(&cfg, &geo).unwrap();
        let mut rng = substream(75, 3, Stage::CacheDraws);
        let sel = select_vrs(&ch, PrecoderKind::Mrt, 0.8, VrCriterion::Sinr, 50, &mut rng).unwrap();
        assert_eq!(sel.vr.nf[0], vec![true, false]);
        // exhaustive check over all nonempty subsets: {0} is the smallest
        // subset meeting the threshold
        let gains: Vec<f64> = (0..2).map(|s| ch.nf_sub(0, s).norm_squared()).collect();
        let total: f64 = gains.iter().sum();
        let gamma = 0.8 * total * total; // eta cancels in the pure-SNR toy
        assert!(gains[0] * gains[0] >= gamma * 0.99);
        assert!(gains[1] * gains[1] < gamma);
    }

    #[test]
    fn zero_baseline_is_diagnosed() {
        let mut cfg = SystemConfig::profile(Profile::Desk);
        cfg.tx_power_dbm = -4000.0; // normalized SNR underflows to zero
        let mut rng = substream(76, 0, Stage::Geometry);
        let geo = draw_geometry(&cfg, &mut rng);
        let mut ch = ChannelSet::new(&cfg, &geo).unwrap();
        let mut frng = substream(76, 0, Stage::FadingRealization);
        ch.resample_fading(&mut frng);
        let mut crng = substream(76, 3, Stage::CacheDraws);
        match select_vrs(&ch, PrecoderKind::Mrt, 0.8, VrCriterion::Sinr, 50, &mut crng) {
            Err(Error::DegenerateBaseline { user: 0 }) => {}
            other => panic!("expected DegenerateBaseline, got {other:?}"),
        }
    }

    #[test]
    fn local_zf_inherits_the_cooperative_selection() {
        let ch = desk_channels(77);
        let mut r1 = substream(77, 3, Stage::CacheDraws);
        let mut r2 = substream(77, 3, Stage::CacheDraws);
        let czf = select_vrs(&ch, PrecoderKind::Czf, 0.8, VrCriterion::Sinr, 300, &mut r1).unwrap();
        let lzf = select_vrs(&ch, PrecoderKind::Lzf, 0.8, VrCriterion::Sinr, 300, &mut r2).unwrap();
        assert_eq!(czf.vr, lzf.vr);
    }

    #[test]
    fn snr_criterion_ignores_interference() {
        let ch = desk_channels(78);
        let mut r1 = substream(78, 3, Stage::CacheDraws);
        let sel = select_vrs(&ch, PrecoderKind::Mrt, 0.8, VrCriterion::Snr, 200, &mut r1).unwrap();
        // SNR baselines dominate the SINR ones because the denominator only
        // holds noise and self-uncertainty
        let mut r2 = substream(78, 3, Stage::CacheDraws);
        let sinr_sel = select_vrs(&ch, PrecoderKind::Mrt, 0.8, VrCriterion::Sinr, 200, &mut r2).unwrap();
        for (a, b) in sel.baseline_nf.iter().zip(&sinr_sel.baseline_nf) {
            assert!(a >= b);
        }
    }
}
