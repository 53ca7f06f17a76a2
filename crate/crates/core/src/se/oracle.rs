//! Monte-Carlo oracle for the closed-form ergodic SINR terms.
//!
//! The oracle never reuses the closed forms: it replays the exact
//! use-and-forget definitions on raw channel draws. Per draw it resamples
//! the diffuse link, rebuilds the scheme's far-field precoders, and records
//! every received coefficient; afterwards it reduces the stored columns to
//! means, variances, and standard errors. Deterministic terms (near-field
//! desired and same-group coefficients) come out with zero standard error.

use crate::channel::ChannelSet;
use crate::precoding::{build_precoders, precoder_sub, PowerAllocation, PrecoderKind, VrAssignment};
use crate::se::props::SinrTerms;
use crate::se::terms::sqrt_weights;
use crate::{C64, Result};
use rand::Rng;

/// One user's oracle-estimated SINR decomposition with per-term standard
/// errors.
#[derive(Clone, Debug)]
pub struct OracleEstimate {
    pub terms: SinrTerms,
    pub se: SinrTerms,
    pub draws: usize,
}

fn mean_c(col: &[C64]) -> C64 {
    col.iter().sum::<C64>() / col.len() as f64
}

/// Sample mean and standard error of `|z|^2` over a column.
fn power_stat(col: &[C64]) -> (f64, f64) {
    let n = col.len() as f64;
    let xs: Vec<f64> = col.iter().map(|z| z.norm_sqr()).collect();
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, (var / n).sqrt())
}

/// Sample variance of a complex column around its sample mean, plus the
/// standard errors of the mean and of the variance estimate.
fn fluctuation_stat(col: &[C64]) -> (C64, f64, f64, f64) {
    let n = col.len() as f64;
    let mu = mean_c(col);
    let devs: Vec<f64> = col.iter().map(|z| (z - mu).norm_sqr()).collect();
    let var = devs.iter().sum::<f64>() / (n - 1.0);
    let dev_mean = devs.iter().sum::<f64>() / n;
    let dev_var = devs.iter().map(|d| (d - dev_mean).powi(2)).sum::<f64>() / n;
    let se_mean = (var / n).sqrt();
    let se_var = (dev_var / n).sqrt();
    (mu, var, se_mean, se_var)
}

/// Estimate every user's SINR decomposition for one scheme by raw
/// Monte-Carlo averaging over `draws` diffuse realizations.
pub fn oracle_estimate<R: Rng + ?Sized>(
    ch: &ChannelSet,
    kind: PrecoderKind,
    vr: &VrAssignment,
    alloc: &PowerAllocation,
    draws: usize,
    rng: &mut R,
) -> Result<(Vec<OracleEstimate>, Vec<OracleEstimate>)> {
    assert!(draws >= 2, "oracle needs at least two draws");
    let cfg = &ch.cfg;
    let rho = cfg.rho();
    let (k_nf, k_ff) = (cfg.k_nf, cfg.k_ff);
    let det = build_precoders(ch, kind, vr)?;

    // deterministic near-field coefficients
    let nf_own: Vec<C64> = (0..k_nf)
        .map(|k| {
            let subs = vr.nf_subarrays(k);
            let w = sqrt_weights(&alloc.eta_nf, k, &subs);
            subs.iter()
                .zip(w.iter())
                .map(|(&s, wi)| C64::from(*wi) * ch.nf_sub(k, s).dotc(&precoder_sub(&det.nf[k], ch, s)))
                .sum()
        })
        .collect();
    let nf_intra: Vec<Vec<C64>> = (0..k_nf)
        .map(|k| {
            (0..k_nf)
                .map(|i| {
                    if i == k {
                        return C64::from(0.0);
                    }
                    let subs = vr.nf_subarrays(i);
                    let w = sqrt_weights(&alloc.eta_nf, i, &subs);
                    subs.iter()
                        .zip(w.iter())
                        .map(|(&s, wi)| {
                            C64::from(*wi) * ch.nf_sub(k, s).dotc(&precoder_sub(&det.nf[i], ch, s))
                        })
                        .sum()
                })
                .collect()
        })
        .collect();

    // per-draw columns of the random coefficients
    let mut nf_sees_ff = vec![vec![C64::from(0.0); draws]; k_nf * k_ff];
    let mut ff_own = vec![vec![C64::from(0.0); draws]; k_ff];
    let mut ff_sees_ff = vec![vec![C64::from(0.0); draws]; k_ff * k_ff];
    let mut ff_sees_nf = vec![vec![C64::from(0.0); draws]; k_ff * k_nf];

    let mut work = ch.clone();
    for d in 0..draws {
        work.resample_fading(rng);
        let set = build_precoders(&work, kind, vr)?;
        let casc: Vec<_> = (0..k_ff).map(|k| work.cascaded(k)).collect();
        for j in 0..k_ff {
            let subs = vr.ff_subarrays(j);
            let w = sqrt_weights(&alloc.eta_ff, j, &subs);
            for k in 0..k_nf {
                let z: C64 = subs
                    .iter()
                    .zip(w.iter())
                    .map(|(&s, wi)| {
                        C64::from(*wi)
                            * work.nf_sub(k, s).dotc(&precoder_sub(&set.ff[j], &work, s))
                    })
                    .sum();
                nf_sees_ff[k * k_ff + j][d] = z;
            }
            for k in 0..k_ff {
                let z: C64 = subs
                    .iter()
                    .zip(w.iter())
                    .map(|(&s, wi)| {
                        let r = cfg.subarray_range(s);
                        let g = casc[k].rows(r.start, r.len());
                        C64::from(*wi) * g.dotc(&precoder_sub(&set.ff[j], &work, s))
                    })
                    .sum();
                if k == j {
                    ff_own[k][d] = z;
                } else {
                    ff_sees_ff[k * k_ff + j][d] = z;
                }
            }
        }
        for i in 0..k_nf {
            let subs = vr.nf_subarrays(i);
            let w = sqrt_weights(&alloc.eta_nf, i, &subs);
            for k in 0..k_ff {
                let z: C64 = subs
                    .iter()
                    .zip(w.iter())
                    .map(|(&s, wi)| {
                        let r = cfg.subarray_range(s);
                        let g = casc[k].rows(r.start, r.len());
                        C64::from(*wi) * g.dotc(&precoder_sub(&det.nf[i], &work, s))
                    })
                    .sum();
                ff_sees_nf[k * k_nf + i][d] = z;
            }
        }
    }

    let mut nf_out = Vec::with_capacity(k_nf);
    for k in 0..k_nf {
        let mut inter = 0.0;
        let mut inter_se = 0.0;
        for j in 0..k_ff {
            let (m, se) = power_stat(&nf_sees_ff[k * k_ff + j]);
            inter += m;
            inter_se += se;
        }
        let intra: f64 = (0..k_nf).map(|i| nf_intra[k][i].norm_sqr()).sum();
        nf_out.push(OracleEstimate {
            terms: SinrTerms {
                ds: rho * nf_own[k].norm_sqr(),
                bu: 0.0,
                intra: rho * intra,
                inter: rho * inter,
                noise: 1.0,
            },
            se: SinrTerms {
                ds: 0.0,
                bu: 0.0,
                intra: 0.0,
                inter: rho * inter_se,
                noise: 0.0,
            },
            draws,
        });
    }
    let mut ff_out = Vec::with_capacity(k_ff);
    for k in 0..k_ff {
        let (mu, var, se_mean, se_var) = fluctuation_stat(&ff_own[k]);
        let mut intra = 0.0;
        let mut intra_se = 0.0;
        for j in 0..k_ff {
            if j == k {
                continue;
            }
            let (m, se) = power_stat(&ff_sees_ff[k * k_ff + j]);
            intra += m;
            intra_se += se;
        }
        let mut inter = 0.0;
        let mut inter_se = 0.0;
        for i in 0..k_nf {
            let (m, se) = power_stat(&ff_sees_nf[k * k_nf + i]);
            inter += m;
            inter_se += se;
        }
        ff_out.push(OracleEstimate {
            terms: SinrTerms {
                ds: rho * mu.norm_sqr(),
                bu: rho * var,
                intra: rho * intra,
                inter: rho * inter,
                noise: 1.0,
            },
            se: SinrTerms {
                ds: rho * (2.0 * mu.norm() * se_mean + se_mean * se_mean),
                bu: rho * se_var,
                intra: rho * intra_se,
                inter: rho * inter_se,
                noise: 0.0,
            },
            draws,
        });
    }
    Ok((nf_out, ff_out))
}

/// Relative-or-statistical agreement check between a closed-form term and
/// its oracle estimate: passes when the gap is below `rel` of the oracle
/// value or below `n_se` standard errors.
pub fn agrees(closed: f64, oracle: f64, se: f64, rel: f64, n_se: f64) -> bool {
    let gap = (closed - oracle).abs();
    gap <= rel * oracle.abs().max(f64::MIN_POSITIVE) || gap <= n_se * se
}
