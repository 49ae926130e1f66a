//! Streaming detection over candump-style log lines.
//!
//! Each line is parsed, reduced to features and classified. Only feature
//! extraction, the forward pass and the argmax are inside the timed window;
//! parsing is timed separately and I/O is not timed at all. Malformed lines
//! produce a warning event and the stream continues.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

use crate::canio::{parse_log_line, ClassLabel};
use crate::modelfile::{load_model, ModelFileError};
use crate::nncore::{predict, Model};

/// Per-packet real-time budget in microseconds (10 ms).
pub const REALTIME_BOUND_US: f64 = 10_000.0;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("model file not found: {0}")]
    ModelMissing(PathBuf),
    #[error(transparent)]
    Model(#[from] ModelFileError),
    #[error("reading input: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub timestamp: f64,
    pub arbitration_id: u16,
    pub label: ClassLabel,
    pub class_name: String,
    pub confidence: f64,
    pub latency_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    Detection(DetectionEvent),
    ParseWarning { line_number: usize, message: String },
}

impl StreamEvent {
    /// Tab-separated `ts id class confidence latency_us`, or a `#WARN` line.
    pub fn to_line(&self) -> String {
        match self {
            Self::Detection(e) => format!(
                "{:.6}\t{:03X}\t{}\t{:.6}\t{:.3}",
                e.timestamp, e.arbitration_id, e.class_name, e.confidence, e.latency_us
            ),
            Self::ParseWarning {
                line_number,
                message,
            } => format!("#WARN\tline {line_number}\t{message}"),
        }
    }
}

/// Latency distribution in microseconds. Percentiles use the nearest-rank
/// method; the median averages the two middle samples for even counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LatencyStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let rank = |p: f64| s[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        Self {
            count: n,
            mean: s.iter().sum::<f64>() / n as f64,
            median,
            p95: rank(0.95),
            p99: rank(0.99),
            max: s[n - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StreamStats {
    /// Feature extraction + forward pass + argmax.
    pub classify: LatencyStats,
    pub parse: LatencyStats,
    pub warnings: usize,
}

/// Classifies every frame in `source`, handing events to `sink` in arrival order.
pub fn run_stream<R, F>(model: &Model, source: R, mut sink: F) -> Result<StreamStats, DetectError>
where
    R: BufRead,
    F: FnMut(StreamEvent),
{
    let normalizer = model.normalizer();
    let mut classify_us = Vec::new();
    let mut parse_us = Vec::new();
    let mut warnings = 0;

    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t0 = Instant::now();
        let parsed = parse_log_line(&line);
        parse_us.push(t0.elapsed().as_secs_f64() * 1e6);

        let frame = match parsed {
            Ok(f) => f,
            Err(e) => {
                warnings += 1;
                sink(StreamEvent::ParseWarning {
                    line_number: i + 1,
                    message: e.to_string(),
                });
                continue;
            }
        };

        let t1 = Instant::now();
        let result = normalizer
            .frame_features(&frame)
            .map_err(|e| e.to_string())
            .and_then(|x| predict(model, &x).map_err(|e| e.to_string()));
        let latency_us = t1.elapsed().as_secs_f64() * 1e6;

        match result {
            Ok((label, confidence)) => {
                classify_us.push(latency_us);
                sink(StreamEvent::Detection(DetectionEvent {
                    timestamp: frame.timestamp,
                    arbitration_id: frame.arbitration_id(),
                    label,
                    class_name: model.class_names()[label.0].clone(),
                    confidence,
                    latency_us,
                }));
            }
            Err(message) => {
                warnings += 1;
                sink(StreamEvent::ParseWarning {
                    line_number: i + 1,
                    message,
                });
            }
        }
    }

    Ok(StreamStats {
        classify: LatencyStats::from_samples(&classify_us),
        parse: LatencyStats::from_samples(&parse_us),
        warnings,
    })
}

/// Loads a model for streaming, distinguishing a missing file from a bad one.
pub fn open_model(path: &Path) -> Result<Model, DetectError> {
    if !path.exists() {
        return Err(DetectError::ModelMissing(path.to_path_buf()));
    }
    Ok(load_model(path)?)
}

/// Human-readable summary with a verdict against the 10 ms per-packet bound.
pub fn latency_report(stats: &LatencyStats) -> String {
    if stats.count == 0 {
        return "classification latency: no samples\n".to_string();
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "classification latency over {} samples (us):",
        stats.count
    );
    let _ = writeln!(out, "  mean   {:>12.3}", stats.mean);
    let _ = writeln!(out, "  median {:>12.3}", stats.median);
    let _ = writeln!(out, "  p95    {:>12.3}", stats.p95);
    let _ = writeln!(out, "  p99    {:>12.3}", stats.p99);
    let _ = writeln!(out, "  max    {:>12.3}", stats.max);
    let verdict = if stats.max < REALTIME_BOUND_US {
        "PASS"
    } else {
        "FAIL"
    };
    let _ = writeln!(
        out,
        "real-time bound {:.0} us per packet: {verdict} (max {:.3} us)",
        REALTIME_BOUND_US, stats.max
    );
    out
}
