//! Plain-text model files.
//!
//! ```text
//! canids-model 1
//! input_dim 9
//! num_classes 6
//! hidden 3 24 18 12
//! norm <id denominator> <byte denominator>
//! class 0 Benign
//! ...
//! layer 0 9 24
//! <fan_in rows of fan_out weights>
//! bias <fan_out values>
//! ...
//! end
//! ```
//!
//! Reals are written with 17 significant digits, so a save/load/save cycle is
//! byte-identical and loading is lossless.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::canio::Normalizer;
use crate::nncore::{DenseLayer, Model, ModelArchitecture};

pub const FORMAT_MAGIC: &str = "canids-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt model file at line {line}: {reason}")]
    CorruptFile { line: usize, reason: String },
    #[error("unsupported model format version {0}")]
    VersionUnsupported(u32),
    #[error("shape mismatch at line {line}: {reason}")]
    ShapeMismatch { line: usize, reason: String },
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn model_to_string(model: &Model) -> String {
    let arch = model.arch();
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "input_dim {}", arch.input_dim());
    let _ = writeln!(out, "num_classes {}", arch.num_classes());
    let widths: Vec<String> = arch.hidden_widths().iter().map(|w| w.to_string()).collect();
    let _ = writeln!(out, "hidden {} {}", arch.num_hidden(), widths.join(" "));
    let norm = model.normalizer();
    let _ = writeln!(
        out,
        "norm {} {}",
        real(norm.id_denominator),
        real(norm.byte_denominator)
    );
    for (i, name) in model.class_names().iter().enumerate() {
        let _ = writeln!(out, "class {i} {name}");
    }
    for (i, layer) in model.layers().iter().enumerate() {
        let _ = writeln!(out, "layer {i} {} {}", layer.fan_in(), layer.fan_out());
        for row in layer.weights.chunks_exact(layer.fan_out()) {
            let vals: Vec<String> = row.iter().map(|&w| real(w)).collect();
            let _ = writeln!(out, "{}", vals.join(" "));
        }
        let vals: Vec<String> = layer.biases.iter().map(|&b| real(b)).collect();
        let _ = writeln!(out, "bias {}", vals.join(" "));
    }
    out.push_str("end\n");
    out
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelFileError> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, ModelFileError> {
    parse_model(&std::fs::read_to_string(path)?)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<&'a str, ModelFileError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(ModelFileError::CorruptFile {
                line: self.line + 1,
                reason: "unexpected end of file".into(),
            }),
        }
    }

    fn corrupt(&self, reason: impl Into<String>) -> ModelFileError {
        ModelFileError::CorruptFile {
            line: self.line,
            reason: reason.into(),
        }
    }

    fn shape(&self, reason: impl Into<String>) -> ModelFileError {
        ModelFileError::ShapeMismatch {
            line: self.line,
            reason: reason.into(),
        }
    }

    /// Next line, which must start with `key`; returns the remainder.
    fn keyed(&mut self, key: &str) -> Result<&'a str, ModelFileError> {
        let l = self.next_line()?;
        match l.split_once(' ') {
            Some((k, rest)) if k == key => Ok(rest),
            _ if l == key => Ok(""),
            _ => Err(self.corrupt(format!("expected `{key}`"))),
        }
    }

    fn usize_field(&self, s: &str) -> Result<usize, ModelFileError> {
        s.trim()
            .parse()
            .map_err(|_| self.corrupt(format!("bad integer {s:?}")))
    }

    fn reals(&self, s: &str) -> Result<Vec<f64>, ModelFileError> {
        s.split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.corrupt(format!("bad real {t:?}")))
            })
            .collect()
    }
}

pub fn parse_model(text: &str) -> Result<Model, ModelFileError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    if text.lines().last() != Some("end") {
        return Err(ModelFileError::CorruptFile {
            line: text.lines().count(),
            reason: "missing `end` marker (truncated file?)".into(),
        });
    }

    let version = lines.keyed(FORMAT_MAGIC)?;
    let version: u32 = version
        .trim()
        .parse()
        .map_err(|_| lines.corrupt("bad version"))?;
    if version != FORMAT_VERSION {
        return Err(ModelFileError::VersionUnsupported(version));
    }

    let field = lines.keyed("input_dim")?;
    let input_dim = lines.usize_field(field)?;
    let field = lines.keyed("num_classes")?;
    let num_classes = lines.usize_field(field)?;
    let hidden = lines.keyed("hidden")?;
    let mut fields = hidden.split_whitespace();
    let count = lines.usize_field(fields.next().unwrap_or(""))?;
    let widths = fields
        .map(|f| lines.usize_field(f))
        .collect::<Result<Vec<_>, _>>()?;
    if widths.len() != count {
        return Err(lines.shape(format!("hidden count {count} but {} widths", widths.len())));
    }
    let arch = ModelArchitecture::custom(input_dim, widths, num_classes)
        .map_err(|e| lines.shape(e.to_string()))?;

    let field = lines.keyed("norm")?;
    let norm = lines.reals(field)?;
    let [id_denominator, byte_denominator] = norm[..] else {
        return Err(lines.corrupt("norm needs two values"));
    };
    if id_denominator <= 0.0 || byte_denominator <= 0.0 {
        return Err(lines.corrupt("norm denominators must be positive"));
    }

    let mut class_names = Vec::with_capacity(num_classes);
    for i in 0..num_classes {
        let rest = lines.keyed("class")?;
        let (idx, name) = rest
            .split_once(' ')
            .ok_or_else(|| lines.corrupt("expected `class <index> <name>`"))?;
        if lines.usize_field(idx)? != i {
            return Err(lines.corrupt(format!("expected class index {i}")));
        }
        if name.is_empty() || class_names.iter().any(|n| n == name) {
            return Err(lines.corrupt(format!("bad class name {name:?}")));
        }
        class_names.push(name.to_string());
    }

    let mut layers = Vec::new();
    for (i, (fan_in, fan_out)) in arch.layer_shapes().into_iter().enumerate() {
        let header = lines.keyed("layer")?;
        let dims = header
            .split_whitespace()
            .map(|f| lines.usize_field(f))
            .collect::<Result<Vec<_>, _>>()?;
        if dims.len() != 3 || dims[0] != i {
            return Err(lines.corrupt(format!("expected `layer {i} <fan_in> <fan_out>`")));
        }
        if dims[1] != fan_in || dims[2] != fan_out {
            return Err(lines.shape(format!(
                "layer {i} declared {}x{}, architecture implies {fan_in}x{fan_out}",
                dims[1], dims[2]
            )));
        }
        let mut weights = Vec::with_capacity(fan_in * fan_out);
        for _ in 0..fan_in {
            let l = lines.next_line()?;
            if l.starts_with("bias") || l.starts_with("layer") || l == "end" {
                return Err(lines.shape(format!("layer {i} has fewer than {fan_in} weight rows")));
            }
            let row = lines.reals(l)?;
            if row.len() != fan_out {
                return Err(lines.shape(format!(
                    "weight row has {} values, expected {fan_out}",
                    row.len()
                )));
            }
            weights.extend(row);
        }
        let l = lines.next_line()?;
        let biases = match l.strip_prefix("bias") {
            Some(rest) => lines.reals(rest)?,
            None if lines.reals(l).is_ok() => {
                return Err(lines.shape(format!("layer {i} has more than {fan_in} weight rows")))
            }
            None => return Err(lines.corrupt("expected `bias`")),
        };
        if biases.len() != fan_out {
            return Err(lines.shape(format!(
                "bias row has {} values, expected {fan_out}",
                biases.len()
            )));
        }
        layers.push(DenseLayer::from_parts(fan_in, fan_out, weights, biases).expect("checked"));
    }

    if lines.next_line()? != "end" {
        return Err(lines.shape("trailing data after the last layer"));
    }

    Model::from_layers(
        arch,
        layers,
        Normalizer {
            id_denominator,
            byte_denominator,
        },
        class_names,
    )
    .map_err(|e| lines.shape(e.to_string()))
}
