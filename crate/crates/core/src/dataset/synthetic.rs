//! Rule-based synthetic CAN traffic for desk-scale experiments.
//!
//! Spec files are line oriented:
//!
//! ```text
//! # comment
//! class Normal id=130,1A0,2C0 payload=0080FF2010400C00±6 n=1000
//! class DoS id=000 payload=0000000000000000 n=1000
//! class Fuzzy id=random payload=random n=1000
//! ```
//!
//! `id` is a hex ID, a comma-separated hex ID set, or `random`; `payload` is a
//! fixed even-length hex pattern, `random`, or a 16-digit pattern with a
//! per-byte uniform jitter `±k` (`+-k` is accepted as well).

use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, DatasetError, LabeledSample};
use crate::canio::{self, decode_hex, ClassLabel, RawCanFrame, MAX_BASE_ID};

#[derive(Debug, Clone, PartialEq)]
pub enum IdRule {
    /// Uniform choice from a nonempty set of base-frame IDs.
    OneOf(Vec<u16>),
    /// Uniform over the whole 11-bit range.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PayloadRule {
    Fixed(Vec<u8>),
    /// Eight uniform random bytes.
    Random,
    /// Pattern bytes each shifted by a uniform offset in `[-spread, spread]`,
    /// clamped to `0..=255`.
    Noisy {
        pattern: [u8; 8],
        spread: u8,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticClass {
    pub name: String,
    pub id: IdRule,
    pub payload: PayloadRule,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: Vec<SyntheticClass>,
}

impl SyntheticSpec {
    /// Five separable classes shaped after the Car-Hacking attack families:
    /// each class owns a distinct ID set and payload signature.
    pub fn car_hacking_like(per_class: usize) -> Self {
        let noisy = |hex: &str, spread| PayloadRule::Noisy {
            pattern: decode_hex(hex).unwrap().try_into().unwrap(),
            spread,
        };
        let class = |name: &str, ids: &[u16], payload| SyntheticClass {
            name: name.to_string(),
            id: IdRule::OneOf(ids.to_vec()),
            payload,
            count: per_class,
        };
        Self {
            classes: vec![
                class(
                    "Normal",
                    &[0x130, 0x1A0, 0x2C0, 0x350, 0x4B0],
                    noisy("0080FF2010400C00", 6),
                ),
                class("DoS", &[0x000], PayloadRule::Fixed(vec![0; 8])),
                class("Fuzzy", &[0x5D2, 0x6E1], PayloadRule::Random),
                class("Gear Spoofing", &[0x43F], noisy("01457F0000F0C000", 3)),
                class("RPM Spoofing", &[0x316], noisy("05212F0A1F00A000", 8)),
            ],
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |reason: String| DatasetError::BadSpec { line: 0, reason };
        if self.classes.len() < 2 {
            return Err(bad("at least 2 classes required".into()));
        }
        for c in &self.classes {
            if c.count == 0 {
                return Err(bad(format!("class {:?} has no samples", c.name)));
            }
            match &c.id {
                IdRule::OneOf(ids) if ids.is_empty() => {
                    return Err(bad(format!("class {:?} has an empty ID set", c.name)))
                }
                IdRule::OneOf(ids) if ids.iter().any(|&i| i > MAX_BASE_ID) => {
                    return Err(bad(format!("class {:?} has an ID above 0x7FF", c.name)))
                }
                _ => {}
            }
            if matches!(&c.payload, PayloadRule::Fixed(p) if p.len() > 8) {
                return Err(bad(format!("class {:?} payload exceeds 8 bytes", c.name)));
            }
        }
        Ok(())
    }

    /// Draws every frame of the spec in class order. Timestamps advance 0.5 ms
    /// per frame.
    pub fn frames(&self, seed: u64) -> Result<Vec<(RawCanFrame, ClassLabel)>, DatasetError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.classes.iter().map(|c| c.count).sum());
        for (label, class) in self.classes.iter().enumerate() {
            for _ in 0..class.count {
                let id = match &class.id {
                    IdRule::OneOf(ids) => ids[rng.random_range(0..ids.len())],
                    IdRule::Random => rng.random_range(0..=MAX_BASE_ID),
                };
                let data = match &class.payload {
                    PayloadRule::Fixed(p) => p.clone(),
                    PayloadRule::Random => (0..8).map(|_| rng.random::<u8>()).collect(),
                    PayloadRule::Noisy { pattern, spread } => {
                        let spread = i16::from(*spread);
                        pattern
                            .iter()
                            .map(|&b| {
                                let jitter = rng.random_range(-spread..=spread);
                                (i16::from(b) + jitter).clamp(0, 255) as u8
                            })
                            .collect()
                    }
                };
                let ts = out.len() as f64 * 5e-4;
                out.push((
                    RawCanFrame::new(ts, u32::from(id), &data)?,
                    ClassLabel(label),
                ));
            }
        }
        Ok(out)
    }
}

impl FromStr for SyntheticSpec {
    type Err = DatasetError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut classes = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            classes.push(
                parse_class_line(line).map_err(|reason| DatasetError::BadSpec {
                    line: i + 1,
                    reason,
                })?,
            );
        }
        let spec = Self { classes };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_class_line(line: &str) -> Result<SyntheticClass, String> {
    let rest = line
        .strip_prefix("class ")
        .ok_or_else(|| "expected `class <name> id=.. payload=.. n=..`".to_string())?;
    let tokens: Vec<&str> = rest.split_whitespace().collect();
    let name_len = tokens
        .iter()
        .position(|t| t.contains('='))
        .unwrap_or(tokens.len());
    if name_len == 0 {
        return Err("missing class name".into());
    }
    let name = tokens[..name_len].join(" ");
    let (mut id, mut payload, mut count) = (None, None, None);
    for tok in &tokens[name_len..] {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {tok:?}"))?;
        match key {
            "id" => id = Some(parse_id_rule(value)?),
            "payload" => payload = Some(parse_payload_rule(value)?),
            "n" => count = Some(value.parse().map_err(|_| format!("bad count {value:?}"))?),
            other => return Err(format!("unknown key {other:?}")),
        }
    }
    Ok(SyntheticClass {
        name,
        id: id.ok_or("missing id=")?,
        payload: payload.ok_or("missing payload=")?,
        count: count.ok_or("missing n=")?,
    })
}

fn parse_id_rule(value: &str) -> Result<IdRule, String> {
    if value.eq_ignore_ascii_case("random") {
        return Ok(IdRule::Random);
    }
    value
        .split(',')
        .map(|h| {
            u16::from_str_radix(h, 16)
                .ok()
                .filter(|&id| id <= MAX_BASE_ID)
                .ok_or_else(|| format!("bad base-frame id {h:?}"))
        })
        .collect::<Result<Vec<_>, _>>()
        .map(IdRule::OneOf)
}

fn parse_payload_rule(value: &str) -> Result<PayloadRule, String> {
    if value.eq_ignore_ascii_case("random") {
        return Ok(PayloadRule::Random);
    }
    let noisy = value.split_once('±').or_else(|| value.split_once("+-"));
    if let Some((pattern, spread)) = noisy {
        let pattern: [u8; 8] = decode_hex(pattern)
            .and_then(|p| p.try_into().ok())
            .ok_or_else(|| format!("noisy payload needs 16 hex digits, got {pattern:?}"))?;
        let spread = spread
            .parse()
            .map_err(|_| format!("bad jitter {spread:?}"))?;
        return Ok(PayloadRule::Noisy { pattern, spread });
    }
    decode_hex(value)
        .filter(|p| p.len() <= 8)
        .map(PayloadRule::Fixed)
        .ok_or_else(|| format!("bad payload {value:?}"))
}

/// Generates a dataset from `spec`, passing every frame through the standard
/// feature extraction and normalization.
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset, DatasetError> {
    let samples = spec
        .frames(seed)?
        .into_iter()
        .map(|(frame, label)| {
            Ok(LabeledSample {
                features: canio::normalize(&canio::extract_features(&frame))?,
                label,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Dataset::new(
        samples,
        spec.classes.iter().map(|c| c.name.clone()).collect(),
    )
}
