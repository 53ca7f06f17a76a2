use xlris_core::channel::{draw_geometry, ChannelSet};
use xlris_core::config::{Profile, SolverConfig, SystemConfig};
use xlris_core::power::optimize_power;
use xlris_core::precoding::{power_constants, PrecoderKind, VrAssignment};
use xlris_core::rng::{substream, uniform_phases, Stage};
use xlris_core::se::ExpectationCache;

fn channels_for(cfg: &SystemConfig, seed: u64) -> ChannelSet {
    let geo = draw_geometry(cfg, &mut substream(seed, 0, Stage::Geometry));
    let mut ch = ChannelSet::new(cfg, &geo).unwrap();
    ch.resample_fading(&mut substream(seed, 0, Stage::FadingRealization));
    let theta = uniform_phases(&mut substream(seed, 0, Stage::InitialPhases), cfg.n());
    ch.with_theta(theta)
}

fn main() {
    let mut cfg = SystemConfig::profile(Profile::Desk);
    cfg.cache_draws = 300;
    let vr = VrAssignment::full(cfg.k_nf, cfg.k_ff, cfg.num_subarrays);
    let solver = SolverConfig::default();
    let seeds: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().unwrap())
        .collect();
    let seeds = if seeds.is_empty() { (751..771).collect() } else { seeds };
    for &seed in &seeds {
        let ch = channels_for(&cfg, seed);
        for kind in [PrecoderKind::Mrt, PrecoderKind::Czf, PrecoderKind::Lzf] {
            let mut rng = substream(seed, 1, Stage::CacheDraws);
            let cache = match kind {
                PrecoderKind::Mrt => None,
                _ => Some(ExpectationCache::estimate(&ch, kind, &vr, cfg.cache_draws, &mut rng).unwrap()),
            };
            let consts = match &cache {
                Some(c) => c.power_constants(&ch, &vr).unwrap(),
                None => power_constants(&ch, kind, &vr, cfg.cache_draws, &mut rng).unwrap(),
            };
            let out = optimize_power(&ch, kind, &vr, cache.as_ref(), &consts, None, &solver).unwrap();
            let objs: Vec<String> = out.trace.iter().map(|t| format!("{:.5}", t.objective)).collect();
            let viols: Vec<String> = out
                .trace
                .iter()
                .map(|t| format!("{:.1e}", t.max_violation))
                .collect();
            println!(
                "seed {seed} {kind:?}: iters {} trace {} viol {:.2e} budget {:.6} obj {:.5}",
                out.iterations, out.trace.len(), out.max_violation, out.budget_used, out.objective
            );
            println!("    objs  [{}]", objs.join(", "));
            println!("    viols [{}]", viols.join(", "));
        }
    }
}
