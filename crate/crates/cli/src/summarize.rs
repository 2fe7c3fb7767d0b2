//! Summaries over record files: per-group accuracy against the oracle,
//! failure rates, method usage, and cost-scaling slopes.

use std::collections::BTreeMap;

use seqmix::linalg;
use seqmix::markov::Distribution;

use crate::records::{Oracle, Record};

/// Aggregates for one `(step, n, delta)` group of rows.
#[derive(Debug, Clone)]
pub struct GroupSummary {
    pub step: u64,
    pub n: usize,
    pub delta: f64,
    /// Sample rows in the group.
    pub rows: usize,
    /// Distinct `(trial, step)` executions.
    pub executions: usize,
    pub failed_executions: usize,
    /// Executions per preparation method.
    pub method_counts: BTreeMap<String, usize>,
    /// Walk calls per execution.
    pub median_walk_calls: f64,
    pub mean_walk_calls: f64,
    /// Total variation between the group's samples and the oracle
    /// distribution, when the oracle carries one.
    pub tv_to_oracle: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Summary {
    pub groups: Vec<GroupSummary>,
    pub total_rows: usize,
    pub total_executions: usize,
    pub failure_rate: f64,
    /// Log-log slope of median walk calls against `n`, over groups that
    /// vary in `n`.
    pub size_slope: Option<f64>,
    /// Log-log slope of median walk calls against `delta`, over groups
    /// that vary in `delta`.
    pub gap_slope: Option<f64>,
}

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k == 0 {
        return f64::NAN;
    }
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

pub fn summarize(records: &[Record], oracle: Option<&Oracle>) -> Summary {
    let mut groups: BTreeMap<(u64, usize, u64), Vec<&Record>> = BTreeMap::new();
    for record in records {
        groups
            .entry((record.step, record.n, record.delta.to_bits()))
            .or_default()
            .push(record);
    }

    let mut summaries = Vec::with_capacity(groups.len());
    let mut total_executions = 0usize;
    let mut total_failed = 0usize;
    for ((step, n, delta_bits), rows) in &groups {
        let mut by_trial: BTreeMap<u64, (u64, bool, &str)> = BTreeMap::new();
        let mut samples = Vec::with_capacity(rows.len());
        for row in rows {
            samples.push(row.sample);
            let entry = by_trial.entry(row.trial).or_insert((0, false, ""));
            entry.0 += row.walk_calls;
            entry.1 |= row.failed;
            if entry.2.is_empty() {
                entry.2 = &row.method;
            }
        }
        let mut walk_totals: Vec<f64> = by_trial.values().map(|v| v.0 as f64).collect();
        walk_totals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let failed = by_trial.values().filter(|v| v.1).count();
        let mut method_counts: BTreeMap<String, usize> = BTreeMap::new();
        for v in by_trial.values() {
            *method_counts.entry(v.2.to_string()).or_default() += 1;
        }
        let tv_to_oracle = oracle.and_then(|o| {
            o.steps
                .iter()
                .find(|s| s.step == *step && s.n == *n && !s.pi.is_empty())
                .and_then(|s| {
                    let target = Distribution::from_probs(s.pi.clone()).ok()?;
                    let mut counts = vec![0.0f64; *n];
                    for &sample in &samples {
                        if sample >= *n {
                            return None;
                        }
                        counts[sample] += 1.0;
                    }
                    let total = samples.len() as f64;
                    let empirical =
                        Distribution::from_probs(counts.into_iter().map(|c| c / total).collect())
                            .ok()?;
                    empirical.total_variation(&target).ok()
                })
        });
        total_executions += by_trial.len();
        total_failed += failed;
        summaries.push(GroupSummary {
            step: *step,
            n: *n,
            delta: f64::from_bits(*delta_bits),
            rows: rows.len(),
            executions: by_trial.len(),
            failed_executions: failed,
            method_counts,
            median_walk_calls: median(&walk_totals),
            mean_walk_calls: walk_totals.iter().sum::<f64>() / walk_totals.len().max(1) as f64,
            tv_to_oracle,
        });
    }

    let size_slope = slope_over(&summaries, |g| g.n as f64);
    let gap_slope = slope_over(&summaries, |g| g.delta);
    Summary {
        total_rows: records.len(),
        total_executions,
        failure_rate: if total_executions == 0 {
            0.0
        } else {
            total_failed as f64 / total_executions as f64
        },
        size_slope,
        gap_slope,
        groups: summaries,
    }
}

/// Slope of `ln(median walk calls)` against `ln(x)` over groups, one
/// point per distinct x, requiring at least two distinct positive x and
/// positive medians.
fn slope_over(groups: &[GroupSummary], x_of: impl Fn(&GroupSummary) -> f64) -> Option<f64> {
    let mut by_x: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for g in groups {
        let x = x_of(g);
        if x > 0.0 && g.median_walk_calls > 0.0 {
            by_x.entry(x.to_bits()).or_default().push(g.median_walk_calls);
        }
    }
    if by_x.len() < 2 {
        return None;
    }
    let mut xs = Vec::with_capacity(by_x.len());
    let mut ys = Vec::with_capacity(by_x.len());
    for (bits, medians) in by_x {
        let mut sorted = medians;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.push(f64::from_bits(bits).ln());
        ys.push(median(&sorted).ln());
    }
    let (slope, _) = linalg::least_squares_slope(&xs, &ys);
    Some(slope)
}

pub fn render(summary: &Summary) -> String {
    let mut out = String::new();
    for g in &summary.groups {
        let methods: Vec<String> =
            g.method_counts.iter().map(|(m, k)| format!("{m}:{k}")).collect();
        out.push_str(&format!(
            "step {} n {} delta {:.6e}: rows {} executions {} failed {} methods [{}] \
             walk median {:.1} mean {:.1}",
            g.step,
            g.n,
            g.delta,
            g.rows,
            g.executions,
            g.failed_executions,
            methods.join(" "),
            g.median_walk_calls,
            g.mean_walk_calls,
        ));
        if let Some(tv) = g.tv_to_oracle {
            out.push_str(&format!(" tv {tv:.4}"));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "rows {} executions {} failure_rate {:.6}\n",
        summary.total_rows, summary.total_executions, summary.failure_rate
    ));
    if let Some(s) = summary.size_slope {
        out.push_str(&format!("size_slope {s:.4}\n"));
    }
    if let Some(s) = summary.gap_slope {
        out.push_str(&format!("gap_slope {s:.4}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::OracleStep;

    fn row(step: u64, trial: u64, sample: usize, walk: u64, failed: bool) -> Record {
        Record {
            step,
            trial,
            sample,
            method: "uniform".into(),
            walk_calls: walk,
            diffusion_calls: 0,
            failed,
            delta: 0.25,
            n: 2,
        }
    }

    #[test]
    fn groups_count_executions_not_rows() {
        let records = vec![row(1, 0, 0, 10, false), row(1, 0, 1, 0, false), row(1, 1, 0, 14, true)];
        let summary = summarize(&records, None);
        assert_eq!(summary.groups.len(), 1);
        let g = &summary.groups[0];
        assert_eq!(g.rows, 3);
        assert_eq!(g.executions, 2);
        assert_eq!(g.failed_executions, 1);
        assert_eq!(g.median_walk_calls, 12.0);
        assert_eq!(summary.failure_rate, 0.5);
    }

    #[test]
    fn tv_uses_matching_oracle_step() {
        let records = vec![
            row(1, 0, 0, 5, false),
            row(1, 0, 1, 0, false),
            row(1, 1, 0, 5, false),
            row(1, 1, 1, 0, false),
        ];
        let oracle = Oracle {
            mode: "protocol".into(),
            steps: vec![OracleStep { step: 1, n: 2, delta: 0.25, pi: vec![0.5, 0.5] }],
        };
        let summary = summarize(&records, Some(&oracle));
        let tv = summary.groups[0].tv_to_oracle.unwrap();
        assert!(tv.abs() < 1e-12, "balanced samples give zero tv, got {tv}");
    }

    #[test]
    fn slopes_recover_power_laws() {
        let mut records = Vec::new();
        for (step, n) in [(1u64, 4usize), (2, 16), (3, 64)] {
            for trial in 0..3u64 {
                let walk = (10.0 * (n as f64).powf(0.5)) as u64;
                let mut r = row(step, trial, 0, walk, false);
                r.n = n;
                records.push(r);
            }
        }
        let summary = summarize(&records, None);
        let slope = summary.size_slope.unwrap();
        assert!((slope - 0.5).abs() < 0.02, "slope {slope}");
        assert!(summary.gap_slope.is_none());
    }

    #[test]
    fn gap_slope_over_delta_groups() {
        let mut records = Vec::new();
        for (step, delta) in [(1u64, 0.2f64), (2, 0.02), (3, 0.002)] {
            for trial in 0..2u64 {
                let mut r = row(step, trial, 0, (5.0 / delta.sqrt()) as u64, false);
                r.delta = delta;
                records.push(r);
            }
        }
        let summary = summarize(&records, None);
        let slope = summary.gap_slope.unwrap();
        assert!((slope + 0.5).abs() < 0.02, "slope {slope}");
    }

    #[test]
    fn render_mentions_each_group_and_totals() {
        let records = vec![row(1, 0, 0, 10, false), row(2, 0, 1, 12, false)];
        let summary = summarize(&records, None);
        let text = render(&summary);
        assert!(text.contains("step 1"));
        assert!(text.contains("step 2"));
        assert!(text.contains("failure_rate 0.000000"));
    }
}
