//! Delimited-text import: one sample per line, the class index first, then
//! the feature values. Fields may be separated by commas, tabs or spaces.
//! Blank lines and lines starting with `#` are ignored.

use std::fs;
use std::io::BufRead;
use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub fn read_delimited(reader: impl BufRead, num_classes: Option<usize>) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels: Vec<u16> = Vec::new();
    let mut dim = None;
    let mut offset = 0u64;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line_offset = offset;
        offset += line.len() as u64 + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Format {
            offset: line_offset,
            message: format!("line {}: {message}", lineno + 1),
        };
        let mut fields = trimmed
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty());
        let label_field = fields.next().ok_or_else(|| bad("missing label".into()))?;
        let label: u16 = label_field
            .parse()
            .map_err(|_| bad(format!("label {label_field:?} is not a class index")))?;
        let start = features.len();
        for f in fields {
            let v: f32 = f.parse().map_err(|_| bad(format!("{f:?} is not a number")))?;
            features.push(v);
        }
        let row_dim = features.len() - start;
        match dim {
            None if row_dim == 0 => return Err(bad("no feature values".into())),
            None => dim = Some(row_dim),
            Some(d) if d != row_dim => return Err(bad(format!("{row_dim} values, expected {d}"))),
            _ => {}
        }
        labels.push(label);
    }
    let dim = dim.ok_or_else(|| Error::config("no samples in delimited input"))?;
    let classes = match num_classes {
        Some(c) => c,
        None => labels.iter().copied().max().map_or(0, |m| m as usize + 1),
    };
    Dataset::new(dim, classes, features, labels, None)
}

/// Reads a delimited-text file; `num_classes` defaults to the largest label plus one.
pub fn import_delimited(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    read_delimited(std::io::BufReader::new(file), num_classes)
}
