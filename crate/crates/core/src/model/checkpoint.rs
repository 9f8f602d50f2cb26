//! Parameter checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! offset  size       field
//! 0       4          magic "ALCA"
//! 4       4          format version (u32, currently 1)
//! 8       4          num_classes C (u32)
//! 12      4          feature_dim d (u32)
//! 16      4*C*d      weights, row-major, f32
//! ..      4*C        bias, f32
//! ```
//!
//! Parameters are narrowed to f32 on save, so a loaded model matches the
//! saved one to single precision.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::SoftmaxRegression;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ALCA";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;

impl SoftmaxRegression {
    pub fn write_checkpoint(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.classes as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for &v in self.weights.iter().chain(&self.bias) {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN as usize];
        read_exact_at(r, &mut header, 0)?;
        if header[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected \"ALCA\"".into(),
            });
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let classes = word(8) as usize;
        let dim = word(12) as usize;
        if classes == 0 || dim == 0 {
            return Err(Error::Format {
                offset: 8,
                message: "checkpoint dimensions must be positive".into(),
            });
        }
        let n = classes * (dim + 1);
        let mut payload = vec![0u8; n * 4];
        read_exact_at(r, &mut payload, HEADER_LEN)?;
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let (weights, bias) = values.split_at(classes * dim);
        SoftmaxRegression::from_parameters(dim, classes, weights.to_vec(), bias.to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_checkpoint(&mut BufReader::new(File::open(path)?))
    }
}

fn read_exact_at(r: &mut impl Read, buf: &mut [u8], offset: u64) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Format {
                    offset: offset + filled as u64,
                    message: format!("unexpected end of data, {} bytes missing", buf.len() - filled),
                })
            }
            Ok(k) => filled += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
