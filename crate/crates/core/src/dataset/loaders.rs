use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use csv::{ReaderBuilder, StringRecord};

use super::{Dataset, DatasetError, LabeledSample};
use crate::canio::{self, ClassLabel, RawCanFrame, FEATURE_DIM};

/// CICIoV2024 class order.
pub const CICIOV2024_CLASSES: [&str; 6] =
    ["Benign", "DoS", "Gas", "RPM", "Speed", "Steering Wheel"];
/// Car-Hacking class order.
pub const CAR_HACKING_CLASSES: [&str; 5] =
    ["Normal", "DoS", "Fuzzy", "Gear Spoofing", "RPM Spoofing"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CarHackingAttack {
    DoS,
    Fuzzy,
    Gear,
    Rpm,
}

impl CarHackingAttack {
    pub fn label(self) -> ClassLabel {
        ClassLabel(match self {
            Self::DoS => 1,
            Self::Fuzzy => 2,
            Self::Gear => 3,
            Self::Rpm => 4,
        })
    }

    /// Infers the attack type from a corpus file name such as `DoS_dataset.csv`.
    pub fn from_file_name(path: &Path) -> Option<Self> {
        let name = path.file_name()?.to_string_lossy().to_ascii_lowercase();
        [
            ("dos", Self::DoS),
            ("fuzzy", Self::Fuzzy),
            ("gear", Self::Gear),
            ("rpm", Self::Rpm),
        ]
        .into_iter()
        .find_map(|(key, attack)| name.contains(key).then_some(attack))
    }
}

/// On-disk dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    /// Header `ID,DATA_0..DATA_7,label` with decimal values and string labels.
    CicIoV2024,
    /// Headerless `timestamp,hex_id,dlc,hex bytes..,R|T`. The attack type of
    /// `T` rows comes from the file name unless given explicitly.
    CarHacking(Option<CarHackingAttack>),
    /// Same columns as CICIoV2024 but with integer labels, optionally preceded
    /// by a `# classes: a,b,c` line naming them.
    Labeled,
}

impl FromStr for Schema {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ciciov2024" => Ok(Self::CicIoV2024),
            "carhacking" | "car-hacking" => Ok(Self::CarHacking(None)),
            "synthetic" | "labeled" => Ok(Self::Labeled),
            other => Err(format!("unknown schema {other:?}")),
        }
    }
}

pub fn load_csv(path: &Path, schema: Schema) -> Result<Dataset, DatasetError> {
    let file = BufReader::new(File::open(path)?);
    let ds = match schema {
        Schema::CicIoV2024 => read_decimal(file, LabelMode::Cic)?,
        Schema::Labeled => read_labeled(file)?,
        Schema::CarHacking(attack) => {
            let attack = attack
                .or_else(|| CarHackingAttack::from_file_name(path))
                .ok_or_else(|| DatasetError::SchemaMismatch {
                    line: 0,
                    reason: format!("cannot infer attack type from file name {}", path.display()),
                })?;
            read_car_hacking(file, attack)?
        }
    };
    if ds.is_empty() {
        return Err(DatasetError::EmptyFile);
    }
    Ok(ds)
}

/// Loads and concatenates several files of one schema.
pub fn load_many<P: AsRef<Path>>(paths: &[P], schema: Schema) -> Result<Dataset, DatasetError> {
    let mut iter = paths.iter();
    let first = iter.next().ok_or(DatasetError::EmptyFile)?;
    let mut ds = load_csv(first.as_ref(), schema)?;
    for p in iter {
        ds.extend(load_csv(p.as_ref(), schema)?)?;
    }
    Ok(ds)
}

enum LabelMode {
    Cic,
    Indexed(Vec<String>),
}

fn cic_label(raw: &str) -> Option<usize> {
    let key: String = raw
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    let idx = match key.as_str() {
        "benign" | "normal" => 0,
        "dos" => 1,
        "gas" | "gasspoofing" => 2,
        "rpm" | "rpmspoofing" => 3,
        "speed" | "speedspoofing" => 4,
        "steeringwheel" | "steeringwheelspoofing" => 5,
        _ => return None,
    };
    Some(idx)
}

fn column(headers: &StringRecord, name: &str) -> Option<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
}

fn read_decimal<R: Read>(input: R, mode: LabelMode) -> Result<Dataset, DatasetError> {
    let mut reader = ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| DatasetError::SchemaMismatch {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let missing = |name: &str| DatasetError::SchemaMismatch {
        line: 1,
        reason: format!("missing column {name}"),
    };
    let mut cols = [0usize; FEATURE_DIM];
    cols[0] = column(&headers, "ID").ok_or_else(|| missing("ID"))?;
    for k in 0..8 {
        let name = format!("DATA_{k}");
        cols[k + 1] = column(&headers, &name).ok_or_else(|| missing(&name))?;
    }
    // The published CICIoV2024 files carry the attack name in `specific_class`.
    let label_col = match mode {
        LabelMode::Cic => column(&headers, "specific_class").or_else(|| column(&headers, "label")),
        LabelMode::Indexed(_) => column(&headers, "label"),
    }
    .ok_or_else(|| missing("label"))?;

    let class_names: Vec<String> = match &mode {
        LabelMode::Cic => CICIOV2024_CLASSES.iter().map(|s| s.to_string()).collect(),
        LabelMode::Indexed(names) => names.clone(),
    };
    let mut samples = Vec::new();
    let mut max_label = 0;
    for record in reader.records() {
        let record = record.map_err(|e| DatasetError::SchemaMismatch {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mismatch = |reason: String| DatasetError::SchemaMismatch { line, reason };
        let mut raw = [0u32; FEATURE_DIM];
        for (slot, &c) in raw.iter_mut().zip(&cols) {
            let field = record.get(c).ok_or_else(|| mismatch("short row".into()))?;
            *slot = field
                .parse()
                .map_err(|_| mismatch(format!("bad number {field:?}")))?;
        }
        let label_text = record
            .get(label_col)
            .ok_or_else(|| mismatch("short row".into()))?;
        let unknown = || DatasetError::UnknownLabel {
            line,
            label: label_text.to_string(),
        };
        let label = match &mode {
            LabelMode::Cic => cic_label(label_text).ok_or_else(unknown)?,
            LabelMode::Indexed(names) => {
                let l: usize = label_text.parse().map_err(|_| unknown())?;
                if !names.is_empty() && l >= names.len() {
                    return Err(unknown());
                }
                l
            }
        };
        max_label = max_label.max(label);
        samples.push(LabeledSample {
            features: canio::normalize(&raw)?,
            label: ClassLabel(label),
        });
    }
    let class_names = if class_names.is_empty() {
        // Unnamed integer labels: the class count is the largest label plus one.
        (0..=max_label.max(1)).map(|c| c.to_string()).collect()
    } else {
        class_names
    };
    Dataset::new(samples, class_names)
}

fn read_labeled<R: BufRead>(mut input: R) -> Result<Dataset, DatasetError> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    let names = match first.trim().strip_prefix('#') {
        Some(rest) => {
            let rest = rest.trim();
            let list =
                rest.strip_prefix("classes:")
                    .ok_or_else(|| DatasetError::SchemaMismatch {
                        line: 1,
                        reason: "expected `# classes: ...`".into(),
                    })?;
            let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).collect();
            first.clear();
            names
        }
        None => Vec::new(),
    };
    read_decimal(first.as_bytes().chain(input), LabelMode::Indexed(names))
}

fn read_car_hacking<R: Read>(input: R, attack: CarHackingAttack) -> Result<Dataset, DatasetError> {
    let mut reader = ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| DatasetError::SchemaMismatch {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mismatch = |reason: String| DatasetError::SchemaMismatch { line, reason };
        if record.len() < 4 {
            return Err(mismatch(format!(
                "expected at least 4 columns, got {}",
                record.len()
            )));
        }
        let timestamp: f64 = record[0]
            .parse()
            .map_err(|_| mismatch(format!("bad timestamp {:?}", &record[0])))?;
        let id = u32::from_str_radix(&record[1], 16)
            .map_err(|_| mismatch(format!("bad hex id {:?}", &record[1])))?;
        let dlc: usize = record[2]
            .parse()
            .map_err(|_| mismatch(format!("bad dlc {:?}", &record[2])))?;
        if dlc > 8 || record.len() != dlc + 4 {
            return Err(mismatch(format!(
                "dlc {dlc} does not match {} columns",
                record.len()
            )));
        }
        let data = (0..dlc)
            .map(|k| {
                let f = &record[3 + k];
                u8::from_str_radix(f, 16).map_err(|_| mismatch(format!("bad hex byte {f:?}")))
            })
            .collect::<Result<Vec<u8>, _>>()?;
        let label = match &record[3 + dlc] {
            "R" => ClassLabel(0),
            "T" => attack.label(),
            other => {
                return Err(DatasetError::UnknownLabel {
                    line,
                    label: other.to_string(),
                })
            }
        };
        let frame = RawCanFrame::new(timestamp, id, &data)?;
        samples.push(LabeledSample {
            features: canio::normalize(&canio::extract_features(&frame))?,
            label,
        });
    }
    Dataset::new(
        samples,
        CAR_HACKING_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Writes a dataset in the [`Schema::Labeled`] layout, recovering raw integers
/// from the default normalization.
pub fn write_labeled<W: Write>(ds: &Dataset, out: W) -> Result<(), DatasetError> {
    let mut out = std::io::BufWriter::new(out);
    writeln!(out, "# classes: {}", ds.class_names().join(","))?;
    writeln!(
        out,
        "ID,DATA_0,DATA_1,DATA_2,DATA_3,DATA_4,DATA_5,DATA_6,DATA_7,label"
    )?;
    for s in ds.samples() {
        let v = s.features.values();
        write!(out, "{}", (v[0] * canio::ID_DENOMINATOR).round() as u32)?;
        for b in &v[1..] {
            write!(out, ",{}", (b * canio::BYTE_DENOMINATOR).round() as u32)?;
        }
        writeln!(out, ",{}", s.label)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::NamedTempFile;

    fn file_with(name: &str, contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        std::fs::write(&path, contents).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_toy_labeled_file() {
        let mut f = NamedTempFile::new().unwrap();
        writeln!(
            f,
            "ID,DATA_0,DATA_1,DATA_2,DATA_3,DATA_4,DATA_5,DATA_6,DATA_7,label"
        )
        .unwrap();
        writeln!(f, "125,0,0,247,128,0,63,255,255,0").unwrap();
        writeln!(f, "291,1,5,9,7,0,11,15,4,1").unwrap();
        writeln!(f, "643,218,183,114,74,36,0,112,6,2").unwrap();
        let ds = load_csv(f.path(), Schema::Labeled).unwrap();
        assert_eq!(ds.num_classes(), 3);
        assert_eq!(ds.class_counts(), vec![1, 1, 1]);
        assert!((ds.samples()[1].features[0] - 291.0 / 2047.0).abs() < 1e-15);
    }

    #[test]
    fn loads_ciciov2024_rows() {
        let (_d, path) = file_with(
            "decimal.csv",
            "ID,DATA_0,DATA_1,DATA_2,DATA_3,DATA_4,DATA_5,DATA_6,DATA_7,label,category,specific_class\n\
             65,0,0,0,0,0,0,0,0,BENIGN,BENIGN,BENIGN\n\
             0,0,0,0,0,0,0,0,0,ATTACK,DoS,DoS\n\
             128,1,2,3,4,5,6,7,8,ATTACK,SPOOFING,STEERING_WHEEL\n\
             128,1,2,3,4,5,6,7,8,ATTACK,SPOOFING,GAS\n",
        );
        let ds = load_csv(&path, Schema::CicIoV2024).unwrap();
        assert_eq!(ds.num_classes(), 6);
        assert_eq!(ds.class_counts(), vec![1, 1, 1, 0, 0, 1]);
        assert_eq!(ds.class_names()[5], "Steering Wheel");
    }

    #[test]
    fn ciciov2024_plain_label_column() {
        let (_d, path) = file_with(
            "x.csv",
            "ID,DATA_0,DATA_1,DATA_2,DATA_3,DATA_4,DATA_5,DATA_6,DATA_7,label\n\
             1,0,0,0,0,0,0,0,0,Speed\n1,0,0,0,0,0,0,0,0,RPM\n",
        );
        let ds = load_csv(&path, Schema::CicIoV2024).unwrap();
        assert_eq!(ds.class_counts(), vec![0, 0, 0, 1, 1, 0]);
    }

    #[test]
    fn unknown_label_is_reported() {
        let (_d, path) = file_with(
            "x.csv",
            "ID,DATA_0,DATA_1,DATA_2,DATA_3,DATA_4,DATA_5,DATA_6,DATA_7,label\n\
             1,0,0,0,0,0,0,0,0,Teleport\n",
        );
        assert!(matches!(
            load_csv(&path, Schema::CicIoV2024),
            Err(DatasetError::UnknownLabel { line: 2, .. })
        ));
    }

    #[test]
    fn schema_mismatch_cases() {
        let (_d, path) = file_with("x.csv", "ID,DATA_0,label\n1,2,Benign\n");
        assert!(matches!(
            load_csv(&path, Schema::CicIoV2024),
            Err(DatasetError::SchemaMismatch { .. })
        ));
        let (_d, path) = file_with(
            "x.csv",
            "ID,DATA_0,DATA_1,DATA_2,DATA_3,DATA_4,DATA_5,DATA_6,DATA_7,label\n\
             1,0,0,0,0,0,0,0,300,Benign\n",
        );
        assert!(load_csv(&path, Schema::CicIoV2024).is_err());
    }

    #[test]
    fn empty_file_is_an_error() {
        let (_d, path) = file_with(
            "x.csv",
            "ID,DATA_0,DATA_1,DATA_2,DATA_3,DATA_4,DATA_5,DATA_6,DATA_7,label\n",
        );
        assert!(matches!(
            load_csv(&path, Schema::CicIoV2024),
            Err(DatasetError::EmptyFile)
        ));
    }

    #[test]
    fn loads_car_hacking_rows() {
        let (_d, path) = file_with(
            "RPM_dataset.csv",
            "1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R\n\
             1478198376.389636,018f,8,fe,5b,00,00,00,3c,00,00,T\n\
             1478198376.390065,02b0,5,ff,7f,00,05,49,R\n",
        );
        let ds = load_csv(&path, Schema::CarHacking(None)).unwrap();
        assert_eq!(ds.num_classes(), 5);
        assert_eq!(ds.class_counts(), vec![2, 0, 0, 0, 1]);
        let short = ds.samples()[2].features;
        assert_eq!(short[6..], [0.0, 0.0, 0.0]);
        assert!((short[0] - 0x2b0 as f64 / 2047.0).abs() < 1e-15);
    }

    #[test]
    fn car_hacking_needs_attack_type() {
        let (_d, path) = file_with("mystery.csv", "1.0,0316,1,05,T\n");
        assert!(load_csv(&path, Schema::CarHacking(None)).is_err());
        let ds = load_csv(&path, Schema::CarHacking(Some(CarHackingAttack::Gear))).unwrap();
        assert_eq!(ds.class_counts(), vec![0, 0, 0, 1, 0]);
    }

    #[test]
    fn car_hacking_rejects_bad_rows() {
        for bad in [
            "1.0,0316,8,05,R\n",
            "1.0,0316,1,05,X\n",
            "1.0,0816,1,05,R\n",
            "1.0,zz,1,05,R\n",
        ] {
            let (_d, path) = file_with("DoS_dataset.csv", bad);
            assert!(load_csv(&path, Schema::CarHacking(None)).is_err(), "{bad}");
        }
    }

    #[test]
    fn labeled_roundtrip_through_writer() {
        let mut f = NamedTempFile::new().unwrap();
        writeln!(f, "# classes: Normal,DoS").unwrap();
        writeln!(
            f,
            "ID,DATA_0,DATA_1,DATA_2,DATA_3,DATA_4,DATA_5,DATA_6,DATA_7,label"
        )
        .unwrap();
        writeln!(f, "535,127,255,127,255,127,255,127,255,0").unwrap();
        writeln!(f, "0,0,0,0,0,0,0,0,0,1").unwrap();
        let ds = load_csv(f.path(), Schema::Labeled).unwrap();
        assert_eq!(ds.class_names(), &["Normal", "DoS"]);
        let mut buf = Vec::new();
        write_labeled(&ds, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("535,127,255,127,255,127,255,127,255,0"));
        let g = NamedTempFile::new().unwrap();
        std::fs::write(g.path(), &text).unwrap();
        assert_eq!(load_csv(g.path(), Schema::Labeled).unwrap(), ds);
    }

    #[test]
    fn load_many_concatenates() {
        let (_a, dos) = file_with("DoS_dataset.csv", "1.0,0000,8,00,00,00,00,00,00,00,00,T\n");
        let (_b, fuzzy) = file_with(
            "Fuzzy_dataset.csv",
            "1.0,0123,2,00,01,T\n2.0,0123,2,00,01,R\n",
        );
        let ds = load_many(&[dos, fuzzy], Schema::CarHacking(None)).unwrap();
        assert_eq!(ds.class_counts(), vec![1, 1, 1, 0, 0]);
    }
}
