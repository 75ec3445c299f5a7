use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const METRICS_HEADER: &str =
    "epoch,global_steps,wall_time_s,mean_episode_reward,episodes,mean_policy_loss,mean_value_loss";

/// One row of training metrics. Loss fields are None for tabular algorithms
/// and serialize as blank, not zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub global_steps: u64,
    pub wall_time_s: f64,
    pub mean_episode_reward: f64,
    pub episodes: u64,
    pub mean_policy_loss: Option<f64>,
    pub mean_value_loss: Option<f64>,
}

/// Render a real at 6 significant digits, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        let trimmed = s.trim_end_matches('0').trim_end_matches('.');
        trimmed.to_string()
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

impl EpochRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.global_steps,
            fmt_sig(self.wall_time_s),
            fmt_sig(self.mean_episode_reward),
            self.episodes,
            fmt_opt(self.mean_policy_loss),
            fmt_opt(self.mean_value_loss),
        )
    }

    pub fn parse_csv_row(line: &str, line_no: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Config(format!(
                "metrics line {line_no}: expected 7 fields, got {}",
                fields.len()
            )));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("metrics line {line_no}: bad {what} {s:?}")))
        };
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                num(s, what).map(Some)
            }
        };
        Ok(EpochRecord {
            epoch: num(fields[0], "epoch")? as u64,
            global_steps: num(fields[1], "global_steps")? as u64,
            wall_time_s: num(fields[2], "wall_time_s")?,
            mean_episode_reward: num(fields[3], "mean_episode_reward")?,
            episodes: num(fields[4], "episodes")? as u64,
            mean_policy_loss: opt(fields[5], "mean_policy_loss")?,
            mean_value_loss: opt(fields[6], "mean_value_loss")?,
        })
    }
}

/// Append-only metrics CSV: header on creation, one row per record, flushed
/// immediately so partial runs leave usable files.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path)?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{METRICS_HEADER}")?;
        out.flush()?;
        Ok(MetricsWriter { out })
    }

    pub fn append(&mut self, record: &EpochRecord) -> Result<()> {
        writeln!(self.out, "{}", record.to_csv_row())?;
        self.out.flush()?;
        Ok(())
    }
}

/// Shared epoch bookkeeping: collects episode rewards and losses, and turns
/// global-step boundary crossings into EpochRecords. Wall time is the
/// process-monotonic clock since construction.
pub struct EpochTracker {
    steps_per_epoch: u64,
    start: std::time::Instant,
    episode_rewards: Vec<f64>,
    policy_losses: Vec<f64>,
    value_losses: Vec<f64>,
    track_losses: bool,
}

impl EpochTracker {
    pub fn new(steps_per_epoch: u64, track_losses: bool) -> Self {
        EpochTracker {
            steps_per_epoch,
            start: std::time::Instant::now(),
            episode_rewards: Vec::new(),
            policy_losses: Vec::new(),
            value_losses: Vec::new(),
            track_losses,
        }
    }

    pub fn record_episode(&mut self, reward: f64) {
        self.episode_rewards.push(reward);
    }

    pub fn record_losses(&mut self, policy: f64, value: f64) {
        if self.track_losses {
            self.policy_losses.push(policy);
            self.value_losses.push(value);
        }
    }

    /// Epochs crossed when the global step counter moves old -> new; one
    /// record per crossed boundary, draining the accumulators.
    pub fn crossings(&mut self, old_steps: u64, new_steps: u64) -> Vec<EpochRecord> {
        let mut out = Vec::new();
        for epoch in (old_steps / self.steps_per_epoch + 1)..=(new_steps / self.steps_per_epoch) {
            out.push(self.emit(epoch));
        }
        out
    }

    fn emit(&mut self, epoch: u64) -> EpochRecord {
        let mean = |xs: &[f64]| {
            if xs.is_empty() {
                0.0
            } else {
                xs.iter().sum::<f64>() / xs.len() as f64
            }
        };
        let record = EpochRecord {
            epoch,
            global_steps: epoch * self.steps_per_epoch,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            mean_episode_reward: mean(&self.episode_rewards),
            episodes: self.episode_rewards.len() as u64,
            mean_policy_loss: self.track_losses.then(|| mean(&self.policy_losses)),
            mean_value_loss: self.track_losses.then(|| mean(&self.value_losses)),
        };
        self.episode_rewards.clear();
        self.policy_losses.clear();
        self.value_losses.clear();
        record
    }
}

/// Read a metrics CSV back into records, validating the header.
pub fn read_metrics(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Config(format!("unexpected metrics header {header:?}")))
        }
        None => return Err(Error::Config("empty metrics file".into())),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| EpochRecord::parse_csv_row(l, i + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.5904900), "0.59049");
        assert_eq!(fmt_sig(123456.7), "123457");
        assert_eq!(fmt_sig(-0.123456789), "-0.123457");
        assert_eq!(fmt_sig(0.000012345678), "0.0000123457");
    }

    #[test]
    fn blank_fields_for_absent_losses() {
        let r = EpochRecord {
            epoch: 1,
            global_steps: 6000,
            wall_time_s: 1.5,
            mean_episode_reward: -0.25,
            episodes: 1500,
            mean_policy_loss: None,
            mean_value_loss: None,
        };
        assert_eq!(r.to_csv_row(), "1,6000,1.5,-0.25,1500,,");
        let parsed = EpochRecord::parse_csv_row(&r.to_csv_row(), 1).unwrap();
        assert_eq!(parsed, r);
    }

    #[test]
    fn writer_emits_header_then_rows() {
        let dir = std::env::temp_dir().join(format!("rlcore-metrics-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("metrics.csv");
        {
            let mut w = MetricsWriter::create(&path).unwrap();
            for epoch in 1..=3 {
                w.append(&EpochRecord {
                    epoch,
                    global_steps: epoch * 6000,
                    wall_time_s: epoch as f64,
                    mean_episode_reward: 0.0,
                    episodes: 10,
                    mean_policy_loss: Some(0.1),
                    mean_value_loss: Some(0.2),
                })
                .unwrap();
            }
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        let records = read_metrics(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[2].global_steps, 18000);
        std::fs::remove_dir_all(&dir).ok();
    }
}
