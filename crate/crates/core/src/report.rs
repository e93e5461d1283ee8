//! Training diagnostics shared by the three trainers.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "gibbs")]
    Gibbs,
    #[serde(rename = "vb")]
    Vb,
    #[serde(rename = "online-vb")]
    OnlineVb,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Gibbs, Algorithm::Vb, Algorithm::OnlineVb];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gibbs => "gibbs",
            Algorithm::Vb => "vb",
            Algorithm::OnlineVb => "online-vb",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gibbs" => Ok(Algorithm::Gibbs),
            "vb" => Ok(Algorithm::Vb),
            "online-vb" => Ok(Algorithm::OnlineVb),
            other => Err(Error::Argument(format!(
                "unknown algorithm {other:?} (expected gibbs, vb or online-vb)"
            ))),
        }
    }
}

/// One sweep (Gibbs), outer iteration (VB) or mini-batch (online VB).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    /// 1-based.
    pub index: usize,
    /// Documents consumed so far. For the batch trainers this is the corpus
    /// size times the number of passes.
    pub documents: u64,
    /// Cumulative training time, excluding perplexity checkpoints.
    pub wall_seconds: f64,
    /// z-change fraction (Gibbs), ELBO (VB) or the step size ρ (online VB).
    pub statistic: f64,
    pub perplexity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub algorithm: Algorithm,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
}

impl TrainReport {
    pub fn new(algorithm: Algorithm) -> Self {
        TrainReport {
            algorithm,
            records: Vec::new(),
            converged: false,
        }
    }

    pub fn wall_seconds(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.wall_seconds)
    }

    pub fn final_statistic(&self) -> Option<f64> {
        self.records.last().map(|r| r.statistic)
    }

    pub fn statistics(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.statistic).collect()
    }

    /// CSV with header `iteration,documents,wall_seconds,statistic,perplexity`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(["iteration", "documents", "wall_seconds", "statistic", "perplexity"])
            .map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.index.to_string(),
                r.documents.to_string(),
                r.wall_seconds.to_string(),
                r.statistic.to_string(),
                r.perplexity.map(|p| p.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))
    }
}

/// Monotonic stopwatch that can be paused around evaluation work.
#[derive(Debug)]
pub(crate) struct Stopwatch {
    elapsed: Duration,
    started: Option<Instant>,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Stopwatch {
            elapsed: Duration::ZERO,
            started: Some(Instant::now()),
        }
    }

    pub(crate) fn pause(&mut self) {
        if let Some(t) = self.started.take() {
            self.elapsed += t.elapsed();
        }
    }

    pub(crate) fn resume(&mut self) {
        if self.started.is_none() {
            self.started = Some(Instant::now());
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        let running = self.started.map_or(Duration::ZERO, |t| t.elapsed());
        (self.elapsed + running).as_secs_f64()
    }
}
