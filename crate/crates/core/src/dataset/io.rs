//! On-disk formats.
//!
//! Binary feature file: `TSE1`, N (u32 LE), d_in (u32 LE), N·d_in f32 LE, row-major.
//! Matrix file: `TSEW`, d_out (u32 LE), d_in (u32 LE), d_out·d_in f32 LE, row-major.
//! CSV feature file: one row per line, comma-separated, no header.
//! Labels: one decimal integer per line.
//! Templates: `<template_id>:<idx>,<idx>,...` per line.
//! Pair protocol: `<template_id_a>,<template_id_b>,<0|1>` per line.
//!
//! Values are persisted at single precision. Anything loaded from one of
//! these files saves back to identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{ensure_unit, LabeledDataset, Pair, PairProtocol, Template, TemplateSet};
use crate::error::{Error, Result};
use crate::pca::EmbeddingMatrix;

pub const FEATURE_MAGIC: [u8; 4] = *b"TSE1";
pub const MATRIX_MAGIC: [u8; 4] = *b"TSEW";

const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureFormat {
    #[default]
    Binary,
    Csv,
}

impl FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" | "bin" => Ok(FeatureFormat::Binary),
            "csv" => Ok(FeatureFormat::Csv),
            other => Err(Error::InvalidConfig(format!(
                "unknown feature format {other:?} (expected binary or csv)"
            ))),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// Parses a `magic, rows, cols, f32 payload` blob.
fn decode_block(path: &Path, bytes: &[u8], magic: [u8; 4]) -> Result<(usize, usize, Vec<f64>)> {
    if bytes.len() < 4 || bytes[..4] != magic {
        let mut found = [0u8; 4];
        let k = bytes.len().min(4);
        found[..k].copy_from_slice(&bytes[..k]);
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: magic,
            found,
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = rows as u64 * cols as u64 * 4;
    if (payload.len() as u64) < expected {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected,
            found: payload.len() as u64,
        });
    }
    if payload.len() as u64 > expected {
        return Err(parse_err(
            path,
            0,
            format!(
                "{} trailing bytes after a {rows}x{cols} payload",
                payload.len() as u64 - expected
            ),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((rows, cols, data))
}

fn encode_block(magic: [u8; 4], rows: usize, cols: usize, data: &[f64]) -> Result<Vec<u8>> {
    let as_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("{what} {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&as_u32(rows, "row count")?.to_le_bytes());
    out.extend_from_slice(&as_u32(cols, "column count")?.to_le_bytes());
    for &x in data {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    Ok(out)
}

/// Unit-normalized feature rows read from disk, without labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

/// Reads a feature file and brings every row to unit length.
pub fn load_features(path: impl AsRef<Path>, format: FeatureFormat) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let (rows, dim, mut data) = match format {
        FeatureFormat::Binary => decode_block(path, &read(path)?, FEATURE_MAGIC)?,
        FeatureFormat::Csv => parse_csv(path, &read_text(path)?)?,
    };
    if dim < 2 {
        return Err(Error::dim(
            2,
            dim,
            format!("{}: feature dimension", path.display()),
        ));
    }
    for r in 0..rows {
        let row = &mut data[r * dim..(r + 1) * dim];
        let unit = ensure_unit(row).map_err(|e| match e {
            Error::NonFinite { index } => parse_err(
                path,
                r + 1,
                format!("non-finite value in column {}", index + 1),
            ),
            Error::ZeroVector { .. } => parse_err(path, r + 1, "zero feature vector"),
            other => other,
        })?;
        row.copy_from_slice(&unit);
    }
    Ok(FeatureMatrix { rows, dim, data })
}

fn parse_csv(path: &Path, text: &str) -> Result<(usize, usize, Vec<f64>)> {
    let mut dim = None;
    let mut rows = 0;
    let mut data = Vec::new();
    for (line_no, line) in content_lines(text) {
        let start = data.len();
        for field in line.split(',') {
            let v: f32 = field
                .trim()
                .parse()
                .map_err(|e| parse_err(path, line_no, format!("bad float {field:?}: {e}")))?;
            data.push(v as f64);
        }
        let width = data.len() - start;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(Error::dim(
                    d,
                    width,
                    format!("{}:{line_no}: csv row width", path.display()),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    Ok((rows, dim.unwrap_or(0), data))
}

pub fn save_features(
    ds: &LabeledDataset,
    path: impl AsRef<Path>,
    format: FeatureFormat,
) -> Result<()> {
    let path = path.as_ref();
    match format {
        FeatureFormat::Binary => write(
            path,
            &encode_block(FEATURE_MAGIC, ds.len(), ds.dim(), ds.features())?,
        ),
        FeatureFormat::Csv => {
            let mut out = String::new();
            for row in ds.rows() {
                for (j, &x) in row.iter().enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    write!(out, "{}", x as f32).unwrap();
                }
                out.push('\n');
            }
            write(path, out.as_bytes())
        }
    }
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<u64>> {
    let path = path.as_ref();
    content_lines(&read_text(path)?)
        .map(|(line_no, line)| {
            line.parse::<u64>()
                .map_err(|e| parse_err(path, line_no, format!("bad label {line:?}: {e}")))
        })
        .collect()
}

pub fn save_labels(labels: &[u64], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 4);
    for l in labels {
        writeln!(out, "{l}").unwrap();
    }
    write(path.as_ref(), out.as_bytes())
}

pub fn load_dataset(
    features: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    format: FeatureFormat,
) -> Result<LabeledDataset> {
    let fm = load_features(features, format)?;
    let labels_path = labels.as_ref();
    let labels = load_labels(labels_path)?;
    if labels.len() != fm.rows {
        return Err(Error::LabelCountMismatch {
            path: labels_path.to_path_buf(),
            expected: fm.rows,
            found: labels.len(),
        });
    }
    LabeledDataset::new(fm.dim, fm.data, labels)
}

pub fn save_dataset(
    ds: &LabeledDataset,
    features: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    format: FeatureFormat,
) -> Result<()> {
    save_features(ds, features, format)?;
    save_labels(ds.labels(), labels)
}

pub fn save_matrix(w: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    write(
        path.as_ref(),
        &encode_block(MATRIX_MAGIC, w.d_out(), w.d_in(), w.as_slice())?,
    )
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let (d_out, d_in, data) = decode_block(path, &read(path)?, MATRIX_MAGIC)?;
    EmbeddingMatrix::from_rows(d_out, d_in, data)
}

pub fn load_templates(path: impl AsRef<Path>) -> Result<TemplateSet> {
    let path = path.as_ref();
    let mut templates = Vec::new();
    for (line_no, line) in content_lines(&read_text(path)?) {
        let (id, members) = line
            .split_once(':')
            .ok_or_else(|| parse_err(path, line_no, "expected <template_id>:<idx>,..."))?;
        let template_id: u64 = id
            .trim()
            .parse()
            .map_err(|e| parse_err(path, line_no, format!("bad template id {id:?}: {e}")))?;
        let members = members
            .split(',')
            .map(|m| {
                m.trim()
                    .parse::<usize>()
                    .map_err(|e| parse_err(path, line_no, format!("bad member index {m:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        templates.push(Template::new(template_id, members)?);
    }
    TemplateSet::new(templates)
}

pub fn save_templates(templates: &TemplateSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for t in templates.iter() {
        write!(out, "{}:", t.template_id).unwrap();
        for (j, m) in t.members.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{m}").unwrap();
        }
        out.push('\n');
    }
    write(path.as_ref(), out.as_bytes())
}

pub fn load_protocol(path: impl AsRef<Path>) -> Result<PairProtocol> {
    let path = path.as_ref();
    let mut pairs = Vec::new();
    for (line_no, line) in content_lines(&read_text(path)?) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [a, b, flag] = fields[..] else {
            return Err(parse_err(path, line_no, "expected <id_a>,<id_b>,<0|1>"));
        };
        let id = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| parse_err(path, line_no, format!("bad template id {s:?}: {e}")))
        };
        let genuine = match flag {
            "1" => true,
            "0" => false,
            other => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("pair flag must be 0 or 1, got {other:?}"),
                ))
            }
        };
        pairs.push(Pair {
            a: id(a)?,
            b: id(b)?,
            genuine,
        });
    }
    Ok(PairProtocol::new(pairs))
}

pub fn save_protocol(protocol: &PairProtocol, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for p in &protocol.pairs {
        writeln!(out, "{},{},{}", p.a, p.b, u8::from(p.genuine)).unwrap();
    }
    write(path.as_ref(), out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn two_rows() -> LabeledDataset {
        LabeledDataset::from_raw(3, vec![1.0, 2.0, 2.0, 0.0, 0.0, -1.0], vec![4, 9]).unwrap()
    }

    #[test]
    fn binary_layout_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let ds = LabeledDataset::new(2, vec![1.0, 0.0], vec![0]).unwrap();
        save_features(&ds, &path, FeatureFormat::Binary).unwrap();
        let bytes = fs::read(&path).unwrap();
        let mut expected = b"TSE1".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&0.0f32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempdir().unwrap();
        let (f, l) = (dir.path().join("f.bin"), dir.path().join("l.txt"));
        let ds = two_rows();
        save_dataset(&ds, &f, &l, FeatureFormat::Binary).unwrap();
        let back = load_dataset(&f, &l, FeatureFormat::Binary).unwrap();
        assert_eq!((back.len(), back.dim()), (2, 3));
        assert_eq!(back, ds.quantized());
        let first = fs::read(&f).unwrap();
        save_dataset(&back, &f, &l, FeatureFormat::Binary).unwrap();
        assert_eq!(fs::read(&f).unwrap(), first);
        assert_eq!(load_dataset(&f, &l, FeatureFormat::Binary).unwrap(), back);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempdir().unwrap();
        let (f, l) = (dir.path().join("f.csv"), dir.path().join("l.txt"));
        let ds = two_rows();
        save_dataset(&ds, &f, &l, FeatureFormat::Csv).unwrap();
        let back = load_dataset(&f, &l, FeatureFormat::Csv).unwrap();
        assert_eq!(back, ds.quantized());
    }

    #[test]
    fn csv_normalizes_and_checks_width() {
        let dir = tempdir().unwrap();
        let f = dir.path().join("f.csv");
        fs::write(&f, "3,4\n0,2\n").unwrap();
        let fm = load_features(&f, FeatureFormat::Csv).unwrap();
        assert_eq!(fm.rows, 2);
        assert!((fm.data[0] - 0.6).abs() < 1e-7 && (fm.data[1] - 0.8).abs() < 1e-7);
        assert_eq!(&fm.data[2..], &[0.0, 1.0]);
        fs::write(&f, "3,4\n0,2,1\n").unwrap();
        assert!(matches!(
            load_features(&f, FeatureFormat::Csv),
            Err(Error::DimensionMismatch { .. })
        ));
        fs::write(&f, "0,0\n").unwrap();
        assert!(matches!(
            load_features(&f, FeatureFormat::Csv),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn truncated_binary() {
        let dir = tempdir().unwrap();
        let f = dir.path().join("f.bin");
        let mut bytes = b"TSE1".to_vec();
        bytes.extend_from_slice(&5u32.to_le_bytes());
        bytes.extend_from_slice(&2u32.to_le_bytes());
        for _ in 0..4 {
            bytes.extend_from_slice(&1.0f32.to_le_bytes());
            bytes.extend_from_slice(&0.0f32.to_le_bytes());
        }
        fs::write(&f, &bytes).unwrap();
        assert!(matches!(
            load_features(&f, FeatureFormat::Binary),
            Err(Error::TruncatedFile {
                expected: 40,
                found: 32,
                ..
            })
        ));
        fs::write(&f, b"TSE1\x01\x00").unwrap();
        assert!(matches!(
            load_features(&f, FeatureFormat::Binary),
            Err(Error::TruncatedFile { .. })
        ));
    }

    #[test]
    fn label_count_mismatch() {
        let dir = tempdir().unwrap();
        let (f, l) = (dir.path().join("f.bin"), dir.path().join("l.txt"));
        let ds = LabeledDataset::from_raw(
            2,
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -1.0],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        save_features(&ds, &f, FeatureFormat::Binary).unwrap();
        fs::write(&l, "0\n0\n1\n").unwrap();
        assert!(matches!(
            load_dataset(&f, &l, FeatureFormat::Binary),
            Err(Error::LabelCountMismatch {
                expected: 4,
                found: 3,
                ..
            })
        ));
        fs::write(&l, "0\n-1\n1\n1\n").unwrap();
        assert!(matches!(load_labels(&l), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn matrix_round_trip_and_magic() {
        let dir = tempdir().unwrap();
        let (wp, fp) = (dir.path().join("w.bin"), dir.path().join("f.bin"));
        let w = EmbeddingMatrix::from_rows(2, 3, vec![0.5, -1.25, 3.0, 0.0, 1e-3, -7.5]).unwrap();
        save_matrix(&w, &wp).unwrap();
        assert_eq!(&fs::read(&wp).unwrap()[..4], b"TSEW");
        let back = load_matrix(&wp).unwrap();
        assert_eq!(back, w.quantized());
        save_features(&two_rows(), &fp, FeatureFormat::Binary).unwrap();
        assert!(
            matches!(load_matrix(&fp), Err(Error::BadMagic { found, .. }) if &found == b"TSE1")
        );
        assert!(matches!(
            load_features(&wp, FeatureFormat::Binary),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_matrix("/definitely/not/here.bin").unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("/definitely/not/here.bin"));
    }

    #[test]
    fn templates_and_protocol_text() {
        let dir = tempdir().unwrap();
        let (tp, pp) = (dir.path().join("t.txt"), dir.path().join("p.txt"));
        fs::write(&tp, "7:0,1,2\n3:4\n\n").unwrap();
        let ts = load_templates(&tp).unwrap();
        assert_eq!(ts.get(7).unwrap().members, vec![0, 1, 2]);
        assert_eq!(ts.get(3).unwrap().members, vec![4]);
        save_templates(&ts, &tp).unwrap();
        assert_eq!(fs::read_to_string(&tp).unwrap(), "3:4\n7:0,1,2\n");

        fs::write(&pp, "7,3,1\n3,7,0\n3,7,0\n").unwrap();
        let p = load_protocol(&pp).unwrap();
        assert_eq!(p.pairs.len(), 3);
        assert!(p.pairs[0].genuine && !p.pairs[2].genuine);
        save_protocol(&p, &pp).unwrap();
        assert_eq!(fs::read_to_string(&pp).unwrap(), "7,3,1\n3,7,0\n3,7,0\n");

        fs::write(&pp, "7,3,2\n").unwrap();
        assert!(matches!(
            load_protocol(&pp),
            Err(Error::Parse { line: 1, .. })
        ));
        fs::write(&tp, "7:\n").unwrap();
        assert!(load_templates(&tp).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn binary_save_load_is_bitwise_identity(
                rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 5), 1..12),
                labels_seed in any::<u64>(),
            ) {
                prop_assume!(rows.iter().all(|r| crate::linalg::norm(r) > 1e-3));
                let n = rows.len();
                let labels: Vec<u64> = (0..n as u64).map(|i| (labels_seed ^ i) % 5).collect();
                let ds = LabeledDataset::from_raw(5, rows.concat(), labels).unwrap();
                let dir = tempdir().unwrap();
                let (f, l) = (dir.path().join("f.bin"), dir.path().join("l.txt"));
                save_dataset(&ds, &f, &l, FeatureFormat::Binary).unwrap();
                let once = load_dataset(&f, &l, FeatureFormat::Binary).unwrap();
                let bytes = fs::read(&f).unwrap();
                save_dataset(&once, &f, &l, FeatureFormat::Binary).unwrap();
                prop_assert_eq!(fs::read(&f).unwrap(), bytes);
                let twice = load_dataset(&f, &l, FeatureFormat::Binary).unwrap();
                prop_assert_eq!(
                    once.features().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                    twice.features().iter().map(|x| x.to_bits()).collect::<Vec<_>>()
                );
                prop_assert_eq!(once.labels(), twice.labels());
            }
        }
    }
}
