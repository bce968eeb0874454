//! ```text
//! magic       8 bytes "OTHPALGN"
//! version     u32     1
//! h           u64
//! mode        u8      1 = supervised, 2 = unsupervised
//! r, k        u32, u32
//! provenance  u32 length + UTF-8 key=value lines
//! W           h × h little-endian f32, row-major
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::AlignError;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const ALIGN_MAGIC: &[u8; 8] = b"OTHPALGN";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    Supervised,
    Unsupervised,
}

impl fmt::Display for AlignMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignMode::Supervised => "supervised",
            AlignMode::Unsupervised => "unsupervised",
        })
    }
}

impl FromStr for AlignMode {
    type Err = AlignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "supervised" => Ok(AlignMode::Supervised),
            "unsupervised" => Ok(AlignMode::Unsupervised),
            _ => Err(AlignError::Config(format!("unknown alignment mode {s:?}"))),
        }
    }
}

/// Orthogonal `h × h` map; source rows are mapped as `row · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMap<T> {
    pub w: Matrix<T>,
    pub mode: AlignMode,
    pub refinement_iters: usize,
    pub adversarial_iters: usize,
    pub source: String,
    pub target: String,
    pub flags: String,
}

impl<T: Scalar> AlignmentMap<T> {
    pub fn new(w: Matrix<T>, mode: AlignMode, refinement_iters: usize, adversarial_iters: usize) -> Self {
        AlignmentMap {
            w,
            mode,
            refinement_iters,
            adversarial_iters,
            source: String::new(),
            target: String::new(),
            flags: super::PREPROCESS_FLAGS.to_string(),
        }
    }

    pub fn h(&self) -> usize {
        self.w.rows()
    }

    pub fn apply(&self, src: &Matrix<T>) -> Matrix<T> {
        src.matmul(&self.w)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = self.h();
        let mut out = Vec::with_capacity(h * h * 4 + 256);
        out.extend_from_slice(ALIGN_MAGIC);
        out.extend_from_slice(&1u32.to_le_bytes());
        out.extend_from_slice(&(h as u64).to_le_bytes());
        out.push(match self.mode {
            AlignMode::Supervised => 1,
            AlignMode::Unsupervised => 2,
        });
        out.extend_from_slice(&(self.refinement_iters as u32).to_le_bytes());
        out.extend_from_slice(&(self.adversarial_iters as u32).to_le_bytes());
        let text = format!("source={}\ntarget={}\nflags={}\n", self.source, self.target, self.flags);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for &v in self.w.as_slice() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AlignError> {
        let bad = |m: &str| AlignError::Format(m.to_string());
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8], AlignError> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("unexpected end of file"))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != ALIGN_MAGIC {
            return Err(bad("not an alignment file"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes"));
        if u32_at(take(4)?) != 1 {
            return Err(bad("unsupported version"));
        }
        let h = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let mode = match take(1)?[0] {
            1 => AlignMode::Supervised,
            2 => AlignMode::Unsupervised,
            _ => return Err(bad("unknown mode")),
        };
        let refinement_iters = u32_at(take(4)?) as usize;
        let adversarial_iters = u32_at(take(4)?) as usize;
        let len = u32_at(take(4)?) as usize;
        let text = std::str::from_utf8(take(len)?).map_err(|_| bad("provenance is not UTF-8"))?.to_string();
        let raw = take(h.checked_mul(h * 4).ok_or_else(|| bad("h overflows"))?)?;
        let w = Matrix::from_vec(h, h, raw.chunks_exact(4).map(|c| T::lit(f32::read_le(c) as f64)).collect());
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let mut map = AlignmentMap::new(w, mode, refinement_iters, adversarial_iters);
        for line in text.lines() {
            match line.split_once('=') {
                Some(("source", v)) => map.source = v.to_string(),
                Some(("target", v)) => map.target = v.to_string(),
                Some(("flags", v)) => map.flags = v.to_string(),
                _ => {}
            }
        }
        Ok(map)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AlignError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AlignError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip() {
        let w = Matrix::<f32>::from_fn(3, 3, |i, j| (i * 3 + j) as f32 * 0.25);
        let mut m = AlignmentMap::new(w, AlignMode::Unsupervised, 5, 300);
        m.source = "a:3".into();
        assert_eq!(AlignmentMap::<f32>::from_bytes(&m.to_bytes()).unwrap(), m);
    }
}
