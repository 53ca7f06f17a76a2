//! Monte-Carlo estimation of the fading expectations that have no closed
//! form: ZF far-field precoders seen through the desired and interfering
//! channels.
//!
//! One estimation pass resamples the diffuse link `draws` times, rebuilds
//! the scheme's far-field precoders per draw, and accumulates single-pass
//! sum / sum-of-squares statistics for every quantity the SINR assemblies
//! need. All estimates carry standard errors. The channel's live
//! realization is not touched.

use crate::channel::ChannelSet;
use crate::precoding::{build_precoders, precoder_sub, PrecoderKind, VrAssignment};
use crate::{C64, CMat, Result};
use nalgebra::DMatrix;
use rand::Rng;

/// Scalar accumulator: mean and standard error from sum / sum of squares.
#[derive(Clone, Copy, Debug, Default)]
struct Acc {
    sum: f64,
    sumsq: f64,
}

impl Acc {
    fn push(&mut self, x: f64) {
        self.sum += x;
        self.sumsq += x * x;
    }
    fn mean(&self, n: f64) -> f64 {
        self.sum / n
    }
    fn se(&self, n: f64) -> f64 {
        let m = self.mean(n);
        ((self.sumsq / n - m * m).max(0.0) / n).sqrt()
    }
}

/// Complex accumulator with a norm-based standard error.
#[derive(Clone, Copy, Debug, Default)]
struct CAcc {
    sum: C64,
    sumsq: f64,
}

impl CAcc {
    fn push(&mut self, z: C64) {
        self.sum += z;
        self.sumsq += z.norm_sqr();
    }
    fn mean(&self, n: f64) -> C64 {
        self.sum / n
    }
    fn se(&self, n: f64) -> f64 {
        let m = self.mean(n);
        ((self.sumsq / n - m.norm_sqr()).max(0.0) / n).sqrt()
    }
}

/// Fading-averaged quantities for one (scheme, phase profile, visibility
/// assignment) triple.
#[derive(Clone, Debug)]
pub struct ExpectationCache {
    pub kind: PrecoderKind,
    pub draws: usize,
    /// Expected far-field precoder energies per (subarray, user), with SEs.
    pub c_ff: DMatrix<f64>,
    pub c_ff_se: DMatrix<f64>,
    /// Cooperative ZF: mean desired coefficient per (subarray, user).
    pub ds_mean: DMatrix<C64>,
    pub ds_mean_se: DMatrix<f64>,
    /// Cooperative ZF: per-subarray variance of the desired coefficient.
    pub ds_var: DMatrix<f64>,
    pub ds_var_se: DMatrix<f64>,
    /// Cooperative ZF: `E|sum_s g_sk^H w_sj|^2` between far-field users
    /// (row: victim `k`, column: source `j`; diagonal unused).
    pub ff_intra: DMatrix<f64>,
    pub ff_intra_se: DMatrix<f64>,
    /// Cooperative ZF: `E|sum_s gbar_sk^H w_sj|^2`, near-field victim `k`
    /// (row) against far-field source `j` (column).
    pub nf_inter: DMatrix<f64>,
    pub nf_inter_se: DMatrix<f64>,
    /// Local ZF: subarray-pair cross moments between far-field users,
    /// `omega[k][j][(s, s2)] = E{ (g_sk^H w_sj)(g_s2k^H w_s2j)^* }`.
    pub ff_pair: Vec<Vec<CMat>>,
    pub ff_pair_se: Vec<Vec<DMatrix<f64>>>,
    /// Local ZF: subarray-pair moments of near-field victims against
    /// far-field precoders.
    pub nf_pair: Vec<Vec<CMat>>,
    pub nf_pair_se: Vec<Vec<DMatrix<f64>>>,
}

impl ExpectationCache {
    /// Estimate all scheme-relevant expectations under the channel's current
    /// phase profile and the given visibility assignment.
    pub fn estimate<R: Rng + ?Sized>(
        ch: &ChannelSet,
        kind: PrecoderKind,
        vr: &VrAssignment,
        draws: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let cfg = &ch.cfg;
        let s_num = cfg.num_subarrays;
        let (k_nf, k_ff) = (cfg.k_nf, cfg.k_ff);
        let mut c_ff = vec![Acc::default(); s_num * k_ff];
        let mut ds_mean = vec![CAcc::default(); s_num * k_ff];
        let mut ds_sq = vec![Acc::default(); s_num * k_ff];
        let mut ff_intra = vec![Acc::default(); k_ff * k_ff];
        let mut nf_inter = vec![Acc::default(); k_nf * k_ff];
        let mut ff_pair = vec![CAcc::default(); k_ff * k_ff * s_num * s_num];
        let mut nf_pair = vec![CAcc::default(); k_nf * k_ff * s_num * s_num];
        let at = |s: usize, k: usize| s * k_ff + k;
        let pair_at = |k: usize, j: usize, s: usize, s2: usize| {
            ((k * k_ff + j) * s_num + s) * s_num + s2
        };
        let nf_pair_at = |k: usize, j: usize, s: usize, s2: usize| {
            ((k * k_ff + j) * s_num + s) * s_num + s2
        };

        let mut work = ch.clone();
        // per-draw coefficient tables: coeff[(s, j)] = g_sk^H w_sj etc.
        for _ in 0..draws {
            work.resample_fading(rng);
            let set = build_precoders(&work, kind, vr)?;
            let casc: Vec<_> = (0..k_ff).map(|k| work.cascaded(k)).collect();
            // received coefficients per (victim k, source j, subarray s)
            let mut ff_coeff = vec![C64::from(0.0); k_ff * k_ff * s_num];
            let mut nf_coeff = vec![C64::from(0.0); k_nf * k_ff * s_num];
            for j in 0..k_ff {
                for s in 0..s_num {
                    let w = precoder_sub(&set.ff[j], &work, s);
                    c_ff[at(s, j)].push(w.norm_squared());
                    let r = cfg.subarray_range(s);
                    for k in 0..k_ff {
                        let g = casc[k].rows(r.start, r.len()).into_owned();
                        ff_coeff[(k * k_ff + j) * s_num + s] = g.dotc(&w);
                    }
                    for k in 0..k_nf {
                        let g = work.nf_sub(k, s);
                        nf_coeff[(k * k_ff + j) * s_num + s] = g.dotc(&w);
                    }
                }
            }
            for k in 0..k_ff {
                for s in 0..s_num {
                    let own = ff_coeff[(k * k_ff + k) * s_num + s];
                    ds_mean[at(s, k)].push(own);
                    ds_sq[at(s, k)].push(own.norm_sqr());
                }
                for j in 0..k_ff {
                    let sum: C64 = (0..s_num)
                        .map(|s| ff_coeff[(k * k_ff + j) * s_num + s])
                        .sum();
                    ff_intra[k * k_ff + j].push(sum.norm_sqr());
                    for s in 0..s_num {
                        for s2 in 0..s_num {
                            let a = ff_coeff[(k * k_ff + j) * s_num + s];
                            let b = ff_coeff[(k * k_ff + j) * s_num + s2];
                            ff_pair[pair_at(k, j, s, s2)].push(a * b.conj());
                        }
                    }
                }
            }
            for k in 0..k_nf {
                for j in 0..k_ff {
                    let sum: C64 = (0..s_num)
                        .map(|s| nf_coeff[(k * k_ff + j) * s_num + s])
                        .sum();
                    nf_inter[k * k_ff + j].push(sum.norm_sqr());
                    for s in 0..s_num {
                        for s2 in 0..s_num {
                            let a = nf_coeff[(k * k_ff + j) * s_num + s];
                            let b = nf_coeff[(k * k_ff + j) * s_num + s2];
                            nf_pair[nf_pair_at(k, j, s, s2)].push(a * b.conj());
                        }
                    }
                }
            }
        }

        let n = draws as f64;
        let grid = |acc: &[Acc]| {
            (
                DMatrix::from_fn(s_num, k_ff, |s, k| acc[at(s, k)].mean(n)),
                DMatrix::from_fn(s_num, k_ff, |s, k| acc[at(s, k)].se(n)),
            )
        };
        let (c_ff_m, c_ff_se) = grid(&c_ff);
        let ds_mean_m = DMatrix::from_fn(s_num, k_ff, |s, k| ds_mean[at(s, k)].mean(n));
        let ds_mean_se = DMatrix::from_fn(s_num, k_ff, |s, k| ds_mean[at(s, k)].se(n));
        // Var per subarray: E|z|^2 - |E z|^2, with the SE of the dominant
        // second-moment estimate.
        let ds_var = DMatrix::from_fn(s_num, k_ff, |s, k| {
            (ds_sq[at(s, k)].mean(n) - ds_mean_m[(s, k)].norm_sqr()).max(0.0)
        });
        let ds_var_se = DMatrix::from_fn(s_num, k_ff, |s, k| {
            ds_sq[at(s, k)].se(n) + 2.0 * ds_mean_m[(s, k)].norm() * ds_mean_se[(s, k)]
        });
        let ff_intra_m = DMatrix::from_fn(k_ff, k_ff, |k, j| ff_intra[k * k_ff + j].mean(n));
        let ff_intra_se = DMatrix::from_fn(k_ff, k_ff, |k, j| ff_intra[k * k_ff + j].se(n));
        let nf_inter_m = DMatrix::from_fn(k_nf, k_ff, |k, j| nf_inter[k * k_ff + j].mean(n));
        let nf_inter_se = DMatrix::from_fn(k_nf, k_ff, |k, j| nf_inter[k * k_ff + j].se(n));
        let ff_pair_m: Vec<Vec<CMat>> = (0..k_ff)
            .map(|k| {
                (0..k_ff)
                    .map(|j| {
                        CMat::from_fn(s_num, s_num, |s, s2| ff_pair[pair_at(k, j, s, s2)].mean(n))
                    })
                    .collect()
            })
            .collect();
        let ff_pair_se: Vec<Vec<DMatrix<f64>>> = (0..k_ff)
            .map(|k| {
                (0..k_ff)
                    .map(|j| {
                        DMatrix::from_fn(s_num, s_num, |s, s2| ff_pair[pair_at(k, j, s, s2)].se(n))
                    })
                    .collect()
            })
            .collect();
        let nf_pair_m: Vec<Vec<CMat>> = (0..k_nf)
            .map(|k| {
                (0..k_ff)
                    .map(|j| {
                        CMat::from_fn(s_num, s_num, |s, s2| {
                            nf_pair[nf_pair_at(k, j, s, s2)].mean(n)
                        })
                    })
                    .collect()
            })
            .collect();
        let nf_pair_se: Vec<Vec<DMatrix<f64>>> = (0..k_nf)
            .map(|k| {
                (0..k_ff)
                    .map(|j| {
                        DMatrix::from_fn(s_num, s_num, |s, s2| {
                            nf_pair[nf_pair_at(k, j, s, s2)].se(n)
                        })
                    })
                    .collect()
            })
            .collect();
        Ok(ExpectationCache {
            kind,
            draws,
            c_ff: c_ff_m,
            c_ff_se,
            ds_mean: ds_mean_m,
            ds_mean_se,
            ds_var,
            ds_var_se,
            ff_intra: ff_intra_m,
            ff_intra_se,
            nf_inter: nf_inter_m,
            nf_inter_se,
            ff_pair: ff_pair_m,
            ff_pair_se,
            nf_pair: nf_pair_m,
            nf_pair_se,
        })
    }

    /// Bundle the sampled far-field energies with exact near-field energies
    /// into the power-constant form the allocators consume.
    pub fn power_constants(
        &self,
        ch: &ChannelSet,
        vr: &VrAssignment,
    ) -> Result<crate::precoding::PowerConstants> {
        let set = build_precoders(ch, self.kind, vr)?;
        let s_num = ch.cfg.num_subarrays;
        let mut c_nf = DMatrix::zeros(s_num, ch.cfg.k_nf);
        for k in 0..ch.cfg.k_nf {
            for s in 0..s_num {
                c_nf[(s, k)] = precoder_sub(&set.nf[k], ch, s).norm_squared();
            }
        }
        Ok(crate::precoding::PowerConstants {
            c_nf,
            c_ff: self.c_ff.clone(),
            c_ff_se: self.c_ff_se.clone(),
            draws: self.draws,
        })
    }
}
