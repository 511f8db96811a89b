//! Per-step training telemetry, emitted as JSONL with a per-epoch CSV
//! summary. Shared by the policy-gradient and MIXER trainers so their
//! curves can be compared directly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: u64,
    /// Reward of a pure policy sample at this step.
    pub mean_reward: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mle_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_loss: Option<f64>,
    pub grad_norm_theta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grad_norm_phi: Option<f64>,
    /// Estimated Q of the terminal action of the sampled path.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal_q: Option<f64>,
    /// Reward of the sampled path, for auditing the terminal rule.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal_reward: Option<f64>,
    /// Validation loss, recorded on the last step of an epoch when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    pub wallclock: f64,
}

impl StepRecord {
    fn finite(&self) -> bool {
        let opts = [
            self.mle_loss,
            self.baseline_loss,
            self.grad_norm_phi,
            self.terminal_q,
            self.terminal_reward,
            self.val_loss,
        ];
        self.mean_reward.is_finite()
            && self.grad_norm_theta.is_finite()
            && self.wallclock.is_finite()
            && opts.iter().flatten().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    records: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: u64,
    pub steps: usize,
    pub mean_reward: f64,
    pub mean_mle_loss: Option<f64>,
    pub mean_baseline_loss: Option<f64>,
    pub mean_grad_norm_theta: f64,
    pub val_loss: Option<f64>,
}

impl RunLog {
    pub fn new() -> RunLog {
        RunLog::default()
    }

    /// Steps must be strictly increasing and records free of non-finite
    /// values.
    pub fn push(&mut self, rec: StepRecord) -> Result<()> {
        if !rec.finite() {
            return Err(Error::NumericalFailure(format!(
                "refusing to log a non-finite record at step {}",
                rec.step
            )));
        }
        if let Some(last) = self.records.last() {
            if rec.step <= last.step {
                return Err(Error::InvalidConfig(format!(
                    "log steps must increase: {} after {}",
                    rec.step, last.step
                )));
            }
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Equality of everything except wallclock, the only field two
    /// identically-seeded runs may disagree on.
    pub fn same_trajectory(&self, other: &RunLog) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                let mut x = a.clone();
                let mut y = b.clone();
                x.wallclock = 0.0;
                y.wallclock = 0.0;
                x == y
            })
    }

    pub fn epoch_summaries(&self) -> Vec<EpochSummary> {
        let mut out: Vec<EpochSummary> = Vec::new();
        for rec in &self.records {
            if out.last().map(|s| s.epoch) != Some(rec.epoch) {
                out.push(EpochSummary {
                    epoch: rec.epoch,
                    steps: 0,
                    mean_reward: 0.0,
                    mean_mle_loss: None,
                    mean_baseline_loss: None,
                    mean_grad_norm_theta: 0.0,
                    val_loss: None,
                });
            }
            let s = out.last_mut().unwrap();
            s.steps += 1;
            s.mean_reward += rec.mean_reward;
            s.mean_grad_norm_theta += rec.grad_norm_theta;
            if let Some(l) = rec.mle_loss {
                *s.mean_mle_loss.get_or_insert(0.0) += l;
            }
            if let Some(l) = rec.baseline_loss {
                *s.mean_baseline_loss.get_or_insert(0.0) += l;
            }
            if rec.val_loss.is_some() {
                s.val_loss = rec.val_loss;
            }
        }
        for s in &mut out {
            let n = s.steps as f64;
            s.mean_reward /= n;
            s.mean_grad_norm_theta /= n;
            if let Some(l) = &mut s.mean_mle_loss {
                *l /= n;
            }
            if let Some(l) = &mut s.mean_baseline_loss {
                *l /= n;
            }
        }
        out
    }

    /// Number of update steps until the per-epoch mean reward first reaches
    /// `frac` of the final epoch's mean. `None` when never reached.
    pub fn steps_to_threshold(&self, frac: f64) -> Option<u64> {
        let summaries = self.epoch_summaries();
        let final_mean = summaries.last()?.mean_reward;
        let threshold = frac * final_mean;
        let mut steps = 0u64;
        for s in &summaries {
            steps += s.steps as u64;
            if s.mean_reward >= threshold {
                return Some(steps);
            }
        }
        None
    }

    pub fn final_epoch_reward(&self) -> Option<f64> {
        self.epoch_summaries().last().map(|s| s.mean_reward)
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        for rec in &self.records {
            serde_json::to_writer(&mut w, rec).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<RunLog> {
        let r = BufReader::new(File::open(path.as_ref())?);
        let mut log = RunLog::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: StepRecord = serde_json::from_str(&line).map_err(|e| Error::BadRecord {
                line: i + 1,
                msg: format!("malformed log record: {e}"),
            })?;
            log.push(rec)?;
        }
        Ok(log)
    }

    pub fn save_epoch_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path.as_ref())?);
        writeln!(
            w,
            "epoch,steps,mean_reward,mean_mle_loss,mean_baseline_loss,mean_grad_norm_theta,val_loss"
        )?;
        for s in self.epoch_summaries() {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.epoch,
                s.steps,
                s.mean_reward,
                opt(s.mean_mle_loss),
                opt(s.mean_baseline_loss),
                s.mean_grad_norm_theta,
                opt(s.val_loss)
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(step: u64, epoch: u64, reward: f64) -> StepRecord {
        StepRecord {
            step,
            epoch,
            mean_reward: reward,
            mle_loss: None,
            baseline_loss: None,
            grad_norm_theta: 1.0,
            grad_norm_phi: None,
            terminal_q: None,
            terminal_reward: None,
            val_loss: None,
            wallclock: 0.1 * step as f64,
        }
    }

    #[test]
    fn push_enforces_order_and_finiteness() {
        let mut log = RunLog::new();
        log.push(rec(0, 0, 1.0)).unwrap();
        assert!(log.push(rec(0, 0, 1.0)).is_err());
        let mut bad = rec(1, 0, f64::NAN);
        assert!(log.push(bad.clone()).is_err());
        bad.mean_reward = 1.0;
        log.push(bad).unwrap();
    }

    #[test]
    fn round_trip_and_trajectory_compare() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = RunLog::new();
        for i in 0..6 {
            log.push(rec(i, i / 3, i as f64)).unwrap();
        }
        let p = dir.path().join("log.jsonl");
        log.save_jsonl(&p).unwrap();
        let loaded = RunLog::load_jsonl(&p).unwrap();
        assert_eq!(log, loaded);
        let mut other = log.clone();
        other.records[2].wallclock = 99.0;
        assert!(log.same_trajectory(&other));
        other.records[2].mean_reward = 99.0;
        assert!(!log.same_trajectory(&other));
    }

    #[test]
    fn epoch_summaries_and_threshold() {
        let mut log = RunLog::new();
        let rewards = [0.0, 2.0, 4.0, 6.0, 9.0, 11.0];
        for (i, &r) in rewards.iter().enumerate() {
            log.push(rec(i as u64, (i / 2) as u64, r)).unwrap();
        }
        let s = log.epoch_summaries();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].mean_reward, 1.0);
        assert_eq!(s[2].mean_reward, 10.0);
        // 90% of final mean = 9.0: reached in the last epoch (6 steps in)
        assert_eq!(log.steps_to_threshold(0.9), Some(6));
        // half of final mean = 5.0: reached in epoch 1 (4 steps in)
        assert_eq!(log.steps_to_threshold(0.5), Some(4));
    }
}
