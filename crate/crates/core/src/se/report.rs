//! Per-drop spectral-efficiency summaries.

use crate::config::SystemConfig;
use crate::se::props::SinrTerms;

/// Spectral efficiencies of every user for one (scheme, phase, power)
/// operating point, with the scalarized objective used by the optimizers.
#[derive(Clone, Debug, serde::Serialize)]
pub struct SeReport {
    pub nf_terms: Vec<SinrTerms>,
    pub ff_terms: Vec<SinrTerms>,
    pub nf_se: Vec<f64>,
    pub ff_se: Vec<f64>,
    /// Worst rate in each group (`infinity` when the group is empty, so it
    /// never binds the objective).
    pub min_nf_se: f64,
    pub min_ff_se: f64,
    /// `weight_nf * min_nf_se + weight_ff * min_ff_se`, empty groups
    /// contributing zero.
    pub objective: f64,
    pub sum_se: f64,
}

/// Roll per-user SINR decompositions into a report.
pub fn se_report(cfg: &SystemConfig, nf_terms: Vec<SinrTerms>, ff_terms: Vec<SinrTerms>) -> SeReport {
    let nf_se: Vec<f64> = nf_terms.iter().map(|t| t.se()).collect();
    let ff_se: Vec<f64> = ff_terms.iter().map(|t| t.se()).collect();
    let min_nf_se = nf_se.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_ff_se = ff_se.iter().cloned().fold(f64::INFINITY, f64::min);
    let objective = if nf_se.is_empty() { 0.0 } else { cfg.weight_nf * min_nf_se }
        + if ff_se.is_empty() { 0.0 } else { cfg.weight_ff * min_ff_se };
    let sum_se = nf_se.iter().sum::<f64>() + ff_se.iter().sum::<f64>();
    SeReport {
        nf_terms,
        ff_terms,
        nf_se,
        ff_se,
        min_nf_se,
        min_ff_se,
        objective,
        sum_se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Profile, SystemConfig};

    #[test]
    fn report_scalarizes_worst_rates() {
        let cfg = SystemConfig::profile(Profile::Desk);
        let t = |sinr: f64| SinrTerms {
            ds: sinr,
            noise: 1.0,
            ..Default::default()
        };
        let rep = se_report(&cfg, vec![t(3.0), t(1.0)], vec![t(7.0), t(15.0)]);
        assert_eq!(rep.min_nf_se, 1.0);
        assert_eq!(rep.min_ff_se, 3.0);
        assert!((rep.objective - (0.5 * 1.0 + 0.5 * 3.0)).abs() < 1e-12);
        assert!((rep.sum_se - (2.0 + 1.0 + 3.0 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_group_does_not_poison_the_objective() {
        let mut cfg = SystemConfig::profile(Profile::Desk);
        cfg.k_nf = 0;
        let t = SinrTerms {
            ds: 1.0,
            noise: 1.0,
            ..Default::default()
        };
        let rep = se_report(&cfg, vec![], vec![t]);
        assert_eq!(rep.objective, cfg.weight_ff * 1.0);
        assert!(rep.min_nf_se.is_infinite());
    }
}
