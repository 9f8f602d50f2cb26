//! Dataset files: the `ALCE` binary embedding format, a delimited-text
//! importer and the synthetic generator.
//!
//! `ALCE` layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "ALCE"
//! 4       4           version (u32, currently 1)
//! 8       4           n_samples (u32)
//! 12      4           feature_dim (u32)
//! 16      4           num_classes (u32)
//! 20      4           flags (u32; bit 0 = thumbnail manifest present)
//! 24      4*n*d       features, row-major f32
//! ..      2*n         labels, u16
//! ```
//!
//! When bit 0 is set, a sidecar text file `<path>.thumbs` holds one thumbnail
//! URI per line, in sample order.

mod synthetic;
mod text;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use text::{import_delimited, read_delimited};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"ALCE";
pub const EMBEDDING_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const FLAG_THUMBNAILS: u32 = 1;

/// Decoded `ALCE` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub version: u32,
    pub n_samples: u32,
    pub feature_dim: u32,
    pub num_classes: u32,
    pub flags: u32,
}

impl EmbeddingFileHeader {
    pub fn has_thumbnails(&self) -> bool {
        self.flags & FLAG_THUMBNAILS != 0
    }

    /// Total file size implied by the header.
    pub fn file_len(&self) -> u64 {
        let n = self.n_samples as u64;
        HEADER_LEN as u64 + n * self.feature_dim as u64 * 4 + n * 2
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format {
                offset: bytes.len() as u64,
                message: format!("file is {} bytes, shorter than the {HEADER_LEN}-byte header", bytes.len()),
            });
        }
        if bytes[..4] != EMBEDDING_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected \"ALCE\"".into(),
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let header = Self {
            version: word(4),
            n_samples: word(8),
            feature_dim: word(12),
            num_classes: word(16),
            flags: word(20),
        };
        if header.version != EMBEDDING_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {}", header.version),
            });
        }
        for (offset, name, v) in [
            (8, "n_samples", header.n_samples),
            (12, "feature_dim", header.feature_dim),
            (16, "num_classes", header.num_classes),
        ] {
            if v == 0 {
                return Err(Error::Format {
                    offset,
                    message: format!("{name} must be positive"),
                });
            }
        }
        Ok(header)
    }

    fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&EMBEDDING_MAGIC)?;
        for v in [self.version, self.n_samples, self.feature_dim, self.num_classes, self.flags] {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Path of the thumbnail manifest that accompanies `path`.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".thumbs");
    PathBuf::from(s)
}

/// Reads only the header of an `ALCE` file.
pub fn read_header(path: impl AsRef<Path>) -> Result<EmbeddingFileHeader> {
    use std::io::Read;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    fs::File::open(path)?.take(HEADER_LEN as u64).read_to_end(&mut buf)?;
    EmbeddingFileHeader::parse(&buf)
}

/// Decodes an in-memory `ALCE` image. `thumbnails` supplies the manifest when the flag is set.
pub fn decode_embeddings(bytes: &[u8], thumbnails: Option<Vec<String>>) -> Result<Dataset> {
    let header = EmbeddingFileHeader::parse(bytes)?;
    let expected = header.file_len();
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(Error::Format {
            offset: actual,
            message: format!(
                "truncated payload: header declares {} samples ({expected} bytes), file has {actual} bytes",
                header.n_samples
            ),
        });
    }
    if actual > expected {
        return Err(Error::Format {
            offset: expected,
            message: format!("{} unexpected trailing bytes", actual - expected),
        });
    }
    let n = header.n_samples as usize;
    let d = header.feature_dim as usize;
    let feat_end = HEADER_LEN + n * d * 4;
    let features = bytes[HEADER_LEN..feat_end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let labels = bytes[feat_end..]
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let thumbnails = if header.has_thumbnails() {
        Some(thumbnails.ok_or_else(|| Error::Format {
            offset: 20,
            message: "thumbnail flag is set but no manifest was found".into(),
        })?)
    } else {
        None
    };
    Dataset::new(d, header.num_classes as usize, features, labels, thumbnails)
}

/// Serializes `dataset` to an `ALCE` image (without the manifest).
pub fn encode_embeddings(dataset: &Dataset) -> Result<Vec<u8>> {
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::config(format!("{what} {v} does not fit the file format")))
    };
    let header = EmbeddingFileHeader {
        version: EMBEDDING_VERSION,
        n_samples: to_u32(dataset.len(), "sample count")?,
        feature_dim: to_u32(dataset.feature_dim(), "feature_dim")?,
        num_classes: to_u32(dataset.num_classes(), "num_classes")?,
        flags: if dataset.features().has_thumbnails() { FLAG_THUMBNAILS } else { 0 },
    };
    let mut out = Vec::with_capacity(header.file_len() as usize);
    header.write(&mut out)?;
    for v in dataset.features().as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for l in dataset.truth().as_slice() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    Ok(out)
}

/// Loads an `ALCE` file and, when flagged, its thumbnail manifest.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let header = EmbeddingFileHeader::parse(&bytes)?;
    let thumbnails = if header.has_thumbnails() {
        let manifest = manifest_path(path);
        let text = fs::read_to_string(&manifest).map_err(|e| Error::Format {
            offset: 20,
            message: format!("thumbnail manifest {}: {e}", manifest.display()),
        })?;
        Some(text.lines().map(str::to_owned).collect())
    } else {
        None
    };
    decode_embeddings(&bytes, thumbnails)
}

/// Writes `dataset` as an `ALCE` file, plus the manifest when it has thumbnails.
pub fn save_embeddings(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_embeddings(dataset)?;
    let manifest = manifest_path(path);
    if dataset.features().has_thumbnails() {
        let mut text = String::new();
        for id in dataset.ids() {
            let uri = dataset.features().thumbnail(id).unwrap_or_default();
            if uri.contains(['\n', '\r']) {
                return Err(Error::validation(format!("thumbnail URI of sample {id} contains a line break")));
            }
            text.push_str(uri);
            text.push('\n');
        }
        fs::write(&manifest, text)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}
