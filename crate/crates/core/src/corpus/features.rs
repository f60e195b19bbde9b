//! Per-window feature matrices and their little-endian binary file format:
//! magic `DVCF`, `u32` version (1), `u32` N, `u32` D, then `N·D` `f32`
//! values row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const FEATURE_MAGIC: &[u8; 4] = b"DVCF";
pub const FEATURE_VERSION: u32 = 1;
pub const DEFAULT_DELTA_FRAMES: u32 = 16;
pub const DEFAULT_FPS: f64 = 16.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub delta_frames: u32,
    pub fps: f64,
    matrix: Tensor,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, delta_frames: u32, fps: f64, matrix: Tensor) -> Result<Self> {
        if delta_frames == 0 || !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Config(format!(
                "delta_frames ({delta_frames}) and fps ({fps}) must be positive"
            )));
        }
        if matrix.dims().len() != 2 {
            return Err(Error::shape("FeatureSequence", format!("expected N x D, got {:?}", matrix.dims())));
        }
        Ok(FeatureSequence {
            video_id: video_id.into(),
            delta_frames,
            fps,
            matrix,
        })
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, n: usize) -> &[f64] {
        self.matrix.row(n)
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    /// Seconds covered by one row: `δ / fps`.
    pub fn window_seconds(&self) -> f64 {
        self.delta_frames as f64 / self.fps
    }

    /// Seconds covered by the whole sequence.
    pub fn duration(&self) -> f64 {
        self.rows() as f64 * self.window_seconds()
    }

    /// Row containing time `t`: `floor(t·fps/δ)` clamped to `[0, N−1]`.
    pub fn time_to_row(&self, t: f64) -> Result<usize> {
        time_to_row(t, self)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, d) = (self.rows(), self.dim());
        let mut out = Vec::with_capacity(16 + 4 * n * d);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        for v in self.matrix.values() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(video_id: &str, bytes: &[u8], delta_frames: u32, fps: f64) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(Error::Format(format!("{video_id}: header truncated ({} bytes)", bytes.len())));
        }
        if &bytes[0..4] != FEATURE_MAGIC {
            return Err(Error::Format(format!("{video_id}: bad magic {:?}", &bytes[0..4])));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap());
        let version = word(4);
        if version != FEATURE_VERSION {
            return Err(Error::Format(format!("{video_id}: unsupported version {version}")));
        }
        let (n, d) = (word(8) as usize, word(12) as usize);
        if n == 0 || d == 0 {
            return Err(Error::Format(format!("{video_id}: empty matrix {n}x{d}")));
        }
        let payload = &bytes[16..];
        let expected = n * d * 4;
        if payload.len() < expected {
            return Err(Error::Format(format!(
                "{video_id}: truncated payload, {n}x{d} declared but only {} complete rows present",
                payload.len() / (4 * d)
            )));
        }
        if payload.len() > expected {
            return Err(Error::Format(format!(
                "{video_id}: {} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        let mut values = Vec::with_capacity(n * d);
        for (k, chunk) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "{video_id}: non-finite value at row {}, column {}",
                    k / d,
                    k % d
                )));
            }
            values.push(v as f64);
        }
        FeatureSequence::new(video_id, delta_frames, fps, Tensor::matrix(n, d, values)?)
    }
}

pub fn time_to_row(t: f64, seq: &FeatureSequence) -> Result<usize> {
    if !(t >= 0.0) {
        return Err(Error::Range(format!("time {t} is negative")));
    }
    let row = (t * seq.fps / seq.delta_frames as f64).floor() as usize;
    Ok(row.min(seq.rows() - 1))
}

/// Load `path`; the video id is the file stem.
pub fn load_features(path: impl AsRef<Path>, delta_frames: u32, fps: f64) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Input(format!("cannot derive video id from {}", path.display())))?;
    FeatureSequence::from_bytes(id, &bytes, delta_frames, fps)
}

pub fn store_features(seq: &FeatureSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, seq.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Path of a video's feature file inside a feature directory.
pub fn feature_path(dir: impl AsRef<Path>, video_id: &str) -> std::path::PathBuf {
    dir.as_ref().join(format!("{video_id}.dvcf"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize, d: usize, values: Vec<f64>) -> FeatureSequence {
        FeatureSequence::new("v", 16, 16.0, Tensor::matrix(n, d, values).unwrap()).unwrap()
    }

    #[test]
    fn zero_matrix_round_trip() {
        let s = seq(4, 2, vec![0.0; 8]);
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..4], b"DVCF");
        let back = FeatureSequence::from_bytes("v", &bytes, 16, 16.0).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = seq(3, 2, vec![0.5, -1.25, 3.0, 0.125, 7.5, -0.0]);
        let path = feature_path(dir.path(), "v");
        store_features(&s, &path).unwrap();
        assert_eq!(load_features(&path, 16, 16.0).unwrap(), s);
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = seq(3, 2, vec![1.0; 6]).to_bytes();
        bytes.truncate(16 + 2 * 2 * 4);
        let err = FeatureSequence::from_bytes("v", &bytes, 16, 16.0).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn nan_cell_named() {
        let mut bytes = seq(2, 3, vec![0.0; 6]).to_bytes();
        let off = 16 + (3 + 2) * 4;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        let err = FeatureSequence::from_bytes("v", &bytes, 16, 16.0).unwrap_err();
        assert!(err.to_string().contains("row 1, column 2"), "{err}");
    }

    #[test]
    fn bad_magic() {
        let mut bytes = seq(1, 1, vec![0.0]).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(FeatureSequence::from_bytes("v", &bytes, 16, 16.0), Err(Error::Format(_))));
    }

    #[test]
    fn time_to_row_cases() {
        let s = FeatureSequence::new("v", 8, 16.0, Tensor::zeros(&[6, 1])).unwrap();
        assert_eq!(s.window_seconds(), 0.5);
        assert_eq!(s.time_to_row(0.0).unwrap(), 0);
        assert_eq!(s.time_to_row(1.0).unwrap(), 2);
        assert_eq!(s.time_to_row(s.duration()).unwrap(), 5);
        assert!(s.time_to_row(-0.1).is_err());
    }
}
