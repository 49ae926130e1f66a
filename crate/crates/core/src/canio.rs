//! CAN frame ingestion and feature extraction.
//!
//! Frames arrive either as candump-style log lines
//! (`(<ts>) <iface> <id>#<payload>`) or as dataset rows. Every frame is reduced
//! to nine integers (arbitration ID followed by eight data bytes, zero padded)
//! and then scaled into `[0, 1]` with fixed protocol maxima.

use std::fmt;
use std::ops::Deref;

use thiserror::Error;

/// Largest 11-bit (base frame) arbitration ID.
pub const MAX_BASE_ID: u16 = 0x7FF;
/// Number of model input features: the ID plus eight data bytes.
pub const FEATURE_DIM: usize = 9;
/// Default denominator applied to the arbitration ID.
pub const ID_DENOMINATOR: f64 = 2047.0;
/// Default denominator applied to each data byte.
pub const BYTE_DENOMINATOR: f64 = 255.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanError {
    #[error("malformed log line: {0}")]
    MalformedLine(String),
    #[error("arbitration id {0:#X} exceeds the 11-bit range")]
    IdOutOfRange(u32),
    #[error("payload has an odd number of hex digits ({0})")]
    OddPayload(usize),
    #[error("data length code {0} exceeds 8")]
    DlcOutOfRange(usize),
    #[error("feature {index} value {value} exceeds maximum {max}")]
    ValueOutOfRange { index: usize, value: u32, max: u32 },
}

/// One classic CAN data frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCanFrame {
    pub timestamp: f64,
    arbitration_id: u16,
    data: Vec<u8>,
}

impl RawCanFrame {
    pub fn new(timestamp: f64, arbitration_id: u32, data: &[u8]) -> Result<Self, CanError> {
        if arbitration_id > u32::from(MAX_BASE_ID) {
            return Err(CanError::IdOutOfRange(arbitration_id));
        }
        if data.len() > 8 {
            return Err(CanError::DlcOutOfRange(data.len()));
        }
        Ok(Self {
            timestamp,
            arbitration_id: arbitration_id as u16,
            data: data.to_vec(),
        })
    }

    pub fn arbitration_id(&self) -> u16 {
        self.arbitration_id
    }

    pub fn dlc(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }
}

impl fmt::Display for RawCanFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03X}#", self.arbitration_id)?;
        for b in &self.data {
            write!(f, "{b:02X}")?;
        }
        Ok(())
    }
}

/// Parses one candump log line: `(<decimal-ts>) <iface> <3-hex-id>#<hex-payload>`.
pub fn parse_log_line(text: &str) -> Result<RawCanFrame, CanError> {
    let malformed = || CanError::MalformedLine(text.trim_end().to_string());
    let line = text.trim();

    let rest = line.strip_prefix('(').ok_or_else(malformed)?;
    let (ts, rest) = rest.split_once(')').ok_or_else(malformed)?;
    let timestamp: f64 = ts.trim().parse().map_err(|_| malformed())?;
    if !timestamp.is_finite() || timestamp < 0.0 {
        return Err(malformed());
    }

    let mut fields = rest.split_whitespace();
    let _iface = fields.next().ok_or_else(malformed)?;
    let frame = fields.next().ok_or_else(malformed)?;
    if fields.next().is_some() {
        return Err(malformed());
    }

    let (id_hex, payload_hex) = frame.split_once('#').ok_or_else(malformed)?;
    if id_hex.len() != 3 || !id_hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(malformed());
    }
    let id = u32::from_str_radix(id_hex, 16).map_err(|_| malformed())?;
    if id > u32::from(MAX_BASE_ID) {
        return Err(CanError::IdOutOfRange(id));
    }

    if !payload_hex.bytes().all(|b| b.is_ascii_hexdigit()) || payload_hex.len() > 16 {
        return Err(malformed());
    }
    if payload_hex.len() % 2 != 0 {
        return Err(CanError::OddPayload(payload_hex.len()));
    }
    let data = decode_hex(payload_hex).ok_or_else(malformed)?;

    RawCanFrame::new(timestamp, id, &data)
}

/// Decodes an even-length hex string into bytes.
pub(crate) fn decode_hex(hex: &str) -> Option<Vec<u8>> {
    if !hex.len().is_multiple_of(2) {
        return None;
    }
    (0..hex.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(hex.get(i..i + 2)?, 16).ok())
        .collect()
}

/// `[id, db1, .., db8]` in decimal, zero padded past the DLC.
pub fn extract_features(frame: &RawCanFrame) -> [u32; FEATURE_DIM] {
    let mut raw = [0u32; FEATURE_DIM];
    raw[0] = u32::from(frame.arbitration_id);
    for (slot, &b) in raw[1..].iter_mut().zip(frame.data()) {
        *slot = u32::from(b);
    }
    raw
}

/// Per-feature scaling constants. Persisted with every model so that training
/// and inference scale identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub id_denominator: f64,
    pub byte_denominator: f64,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            id_denominator: ID_DENOMINATOR,
            byte_denominator: BYTE_DENOMINATOR,
        }
    }
}

impl Normalizer {
    pub fn normalize(&self, raw: &[u32; FEATURE_DIM]) -> Result<FeatureVector, CanError> {
        let mut values = [0.0; FEATURE_DIM];
        for (i, (&r, v)) in raw.iter().zip(values.iter_mut()).enumerate() {
            let max = if i == 0 {
                self.id_denominator
            } else {
                self.byte_denominator
            };
            if f64::from(r) > max {
                return Err(CanError::ValueOutOfRange {
                    index: i,
                    value: r,
                    max: max as u32,
                });
            }
            *v = f64::from(r) / max;
        }
        Ok(FeatureVector(values))
    }

    pub fn frame_features(&self, frame: &RawCanFrame) -> Result<FeatureVector, CanError> {
        self.normalize(&extract_features(frame))
    }
}

/// Scales raw features with the default protocol maxima (ID/2047, byte/255).
pub fn normalize(raw: &[u32; FEATURE_DIM]) -> Result<FeatureVector, CanError> {
    Normalizer::default().normalize(raw)
}

/// Nine normalized model inputs in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; FEATURE_DIM]);

impl FeatureVector {
    /// Builds a vector from already-normalized values; every value must lie in `[0, 1]`.
    pub fn from_values(values: [f64; FEATURE_DIM]) -> Option<Self> {
        values
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
            .then_some(Self(values))
    }

    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Integer-encoded class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassLabel(pub usize);

impl ClassLabel {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
