//! Trajectory CSV and metrics JSONL files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ppo::IterationMetrics;

/// Column order of trajectory files.
pub const TRAJECTORY_COLUMNS: [&str; 13] = [
    "step", "t_sec", "x", "y", "roll", "pitch", "yaw", "m_left", "m_right", "tail", "reward",
    "wp_x", "wp_y",
];

/// Key order of metrics records.
pub const METRICS_KEYS: [&str; 6] = [
    "iter",
    "mean_return",
    "policy_loss",
    "value_loss",
    "entropy",
    "mean_abs_ratio_dev",
];

/// One simulated step: world-frame pose after the step, the clamped motor
/// actions, the tail angle in radians, the reward and the active waypoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub t_sec: f64,
    pub x: f64,
    pub y: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub m_left: f64,
    pub m_right: f64,
    pub tail: f64,
    pub reward: f64,
    pub wp_x: f64,
    pub wp_y: f64,
}

impl TrajectoryRow {
    pub fn distance_to_waypoint(&self) -> f64 {
        (self.x - self.wp_x).hypot(self.y - self.wp_y)
    }
}

pub fn write_trajectory(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(TRAJECTORY_COLUMNS)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRAJECTORY_COLUMNS {
        return Err(Error::InvalidConfig {
            field: path.display().to_string(),
            reason: format!("unexpected trajectory header {header:?}"),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Appends one JSON object per line, flushing after each record.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &IterationMetrics) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out
            .write_all(b"\n")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<IterationMetrics>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .map(|line| {
            let line = line.map_err(|e| Error::io(path, e))?;
            Ok(serde_json::from_str(&line)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_header_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run_0.csv");
        let row = TrajectoryRow {
            step: 1,
            t_sec: 0.1,
            x: 1.0,
            y: -2.0,
            roll: 0.0,
            pitch: 0.01,
            yaw: 0.5,
            m_left: 1.0,
            m_right: -0.5,
            tail: 0.3,
            reward: -0.004,
            wp_x: 0.0,
            wp_y: 0.0,
        };
        write_trajectory(&path, &[row, row]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "step,t_sec,x,y,roll,pitch,yaw,m_left,m_right,tail,reward,wp_x,wp_y"
        );
        assert_eq!(read_trajectory(&path).unwrap(), vec![row, row]);
    }

    #[test]
    fn metrics_keys_are_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.jsonl");
        let m = IterationMetrics {
            iter: 1,
            mean_return: -70.5,
            policy_loss: 0.1,
            value_loss: 2.0,
            entropy: 2.2,
            mean_abs_ratio_dev: 0.0,
        };
        let mut w = MetricsWriter::create(&path).unwrap();
        w.write(&m).unwrap();
        w.write(&m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = METRICS_KEYS.to_vec();
        let mut got = keys.clone();
        expected.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, expected);
        assert!(text.starts_with("{\"iter\":1,\"mean_return\":"));
        assert_eq!(read_metrics(&path).unwrap(), vec![m.clone(), m]);
    }
}
