use std::io::Write;

use fleet_core::sim::{Metrics, Mode};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One row of the metrics file. `seed` is `"mean"` on aggregate rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: String,
    pub mode: Mode,
    pub robot_deliveries: f64,
    pub human_deliveries: f64,
    pub total_deliveries: f64,
    pub encounters: f64,
    pub encounters_per_min: f64,
    pub sim_seconds: f64,
}

impl MetricsRow {
    pub fn from_run(seed: u64, mode: Mode, m: &Metrics) -> Self {
        Self {
            seed: seed.to_string(),
            mode,
            robot_deliveries: m.robot_deliveries as f64,
            human_deliveries: m.human_deliveries as f64,
            total_deliveries: m.total_deliveries as f64,
            encounters: m.encounters as f64,
            encounters_per_min: m.encounters_per_min,
            sim_seconds: m.sim_time,
        }
    }

    pub fn is_mean(&self) -> bool {
        self.seed == "mean"
    }
}

/// Per-mode averages over `rows`, in [`Mode::ALL`] order; modes without
/// rows are skipped.
pub fn mode_means(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    Mode::ALL
        .iter()
        .filter_map(|&mode| {
            let mine: Vec<&MetricsRow> = rows.iter().filter(|r| r.mode == mode && !r.is_mean()).collect();
            if mine.is_empty() {
                return None;
            }
            let n = mine.len() as f64;
            let avg = |f: fn(&MetricsRow) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / n;
            Some(MetricsRow {
                seed: "mean".into(),
                mode,
                robot_deliveries: avg(|r| r.robot_deliveries),
                human_deliveries: avg(|r| r.human_deliveries),
                total_deliveries: avg(|r| r.total_deliveries),
                encounters: avg(|r| r.encounters),
                encounters_per_min: avg(|r| r.encounters_per_min),
                sim_seconds: avg(|r| r.sim_seconds),
            })
        })
        .collect()
}

pub fn write_rows<W: Write>(out: W, rows: &[MetricsRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(input: R) -> Result<Vec<MetricsRow>, CliError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// One-sided paired sign test: the probability of at least `wins` successes
/// among `wins + losses` fair coin flips. Ties are dropped beforehand.
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let mut c = 1.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += c;
        }
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

/// Paired comparison of `a` against `b` over matching seeds: (wins, losses).
pub fn paired_wins(a: &[f64], b: &[f64]) -> (usize, usize) {
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    (wins, losses)
}

/// Human-readable comparison table over per-mode means.
pub fn summary_table(means: &[MetricsRow]) -> String {
    let mut s = format!(
        "{:<6} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
        "mode", "robot", "human", "total", "enc/min", "sim_s"
    );
    for m in means {
        s += &format!(
            "{:<6} {:>10.1} {:>10.1} {:>10.1} {:>10.3} {:>8.0}\n",
            m.mode.as_str(),
            m.robot_deliveries,
            m.human_deliveries,
            m.total_deliveries,
            m.encounters_per_min,
            m.sim_seconds
        );
    }
    s
}
