//! Scaling studies over several scenarios.

use super::stats::{loglog_slope, median};
use super::{run_scenario, ScenarioConfig, TrialMetrics};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub trials: usize,
    pub decided_fraction: f64,
    pub median_rounds: Option<f64>,
    pub mean_sends: f64,
    pub median_decide_time: Option<f64>,
    pub violations: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// Mean consensus sends of the last row over the first.
    pub fn sends_ratio(&self) -> Option<f64> {
        let (a, b) = (self.rows.first()?, self.rows.last()?);
        (a.mean_sends > 0.0).then(|| b.mean_sends / a.mean_sends)
    }

    /// Largest minus smallest median round count.
    pub fn rounds_spread(&self) -> Option<f64> {
        let m: Vec<f64> = self.rows.iter().filter_map(|r| r.median_rounds).collect();
        if m.is_empty() {
            return None;
        }
        let max = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = m.iter().copied().fold(f64::INFINITY, f64::min);
        Some(max - min)
    }

    /// Least-squares exponent of mean sends against n.
    pub fn sends_exponent(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| (r.n as f64, r.mean_sends))
            .collect();
        loglog_slope(&pts)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("n,trials,decided_fraction,median_rounds,mean_sends,median_decide_time_ms,violations\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.4},{},{:.2},{},{}\n",
                r.n,
                r.trials,
                r.decided_fraction,
                r.median_rounds.map(|x| x.to_string()).unwrap_or_default(),
                r.mean_sends,
                r.median_decide_time.map(|x| x.to_string()).unwrap_or_default(),
                r.violations
            ));
        }
        s
    }
}

pub fn row(n: usize, trials: &[TrialMetrics]) -> SweepRow {
    let k = trials.len().max(1) as f64;
    let rounds: Vec<f64> = trials.iter().filter_map(|t| t.rounds.map(f64::from)).collect();
    let times: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.decide_time.map(|x| x as f64))
        .collect();
    SweepRow {
        n,
        trials: trials.len(),
        decided_fraction: trials.iter().filter(|t| t.decided).count() as f64 / k,
        median_rounds: median(&rounds),
        mean_sends: trials.iter().map(|t| t.sends_consensus as f64).sum::<f64>() / k,
        median_decide_time: median(&times),
        violations: trials.iter().map(|t| t.violations.len()).sum(),
    }
}

/// Runs each scenario and reports one row per scenario, in input order.
pub fn sweep(configs: &[ScenarioConfig]) -> SweepReport {
    SweepReport {
        rows: configs.iter().map(|c| row(c.n, &run_scenario(c))).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sweep() {
        let r = sweep(&[]);
        assert!(r.rows.is_empty());
        assert_eq!(r.sends_ratio(), None);
        assert_eq!(r.rounds_spread(), None);
    }

    #[test]
    fn rows_follow_input_order() {
        let cfgs: Vec<ScenarioConfig> = [7, 4].iter().map(|n| ScenarioConfig::new(*n)).collect();
        let r = sweep(&cfgs);
        assert_eq!(r.rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![7, 4]);
        assert!(r.rows.iter().all(|r| r.decided_fraction == 1.0));
        assert_eq!(r.csv().lines().count(), 3);
    }
}
