//! Per-frame place and per-detection object embeddings, with a compact
//! little-endian binary file format.
//!
//! Layout: magic `MSGE`, format version (u32, currently 1), embedding
//! dimension (u32), frame count (u32); then per frame: frame id (u32),
//! detection count (u32), the place embedding (dim f32 values), and each
//! detection embedding (dim f32 values) in detection order.

use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use nalgebra::DVector;
use thiserror::Error;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"MSGE";
pub const EMBEDDING_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("bad magic bytes: not an embedding file")]
    WrongMagic,
    #[error("unsupported embedding format version {0}")]
    UnsupportedVersion(u32),
    #[error("unexpected end of embeddings")]
    UnexpectedEof,
    #[error("trailing data after the declared frames")]
    TrailingData,
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("frame {position} has id {found}, expected consecutive ids from 0")]
    NonConsecutiveFrameIds { position: usize, found: u32 },
    #[error("vector in frame {frame} has {found} entries, expected {dim}")]
    WrongLength { frame: usize, found: usize, dim: usize },
    #[error("zero-norm or non-finite embedding in frame {frame}")]
    DegenerateVector { frame: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Embeddings of one frame: one place vector and one vector per detection,
/// aligned one-to-one with the frame's detections.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEmbeddings {
    pub place: DVector<f64>,
    pub objects: Vec<DVector<f64>>,
}

/// All embeddings of a scene. Every vector has exactly `dim` finite entries
/// and a nonzero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    frames: Vec<FrameEmbeddings>,
}

impl EmbeddingSet {
    pub fn new(dim: usize, frames: Vec<FrameEmbeddings>) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        for (index, frame) in frames.iter().enumerate() {
            for vector in std::iter::once(&frame.place).chain(frame.objects.iter()) {
                if vector.len() != dim {
                    return Err(EmbeddingError::WrongLength {
                        frame: index,
                        found: vector.len(),
                        dim,
                    });
                }
                let norm = vector.norm();
                if !(norm.is_finite() && norm > 0.0) {
                    return Err(EmbeddingError::DegenerateVector { frame: index });
                }
            }
        }
        Ok(EmbeddingSet { dim, frames })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames(&self) -> &[FrameEmbeddings] {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// Applies a map to every vector, producing a set of the new dimension.
    pub fn map_vectors(
        &self,
        out_dim: usize,
        mut f: impl FnMut(&DVector<f64>) -> DVector<f64>,
    ) -> Result<EmbeddingSet, EmbeddingError> {
        let frames = self
            .frames
            .iter()
            .map(|frame| FrameEmbeddings {
                place: f(&frame.place),
                objects: frame.objects.iter().map(&mut f).collect(),
            })
            .collect();
        EmbeddingSet::new(out_dim, frames)
    }

    pub fn write_to(&self, writer: &mut impl Write) -> Result<(), EmbeddingError> {
        writer.write_all(&EMBEDDING_MAGIC)?;
        writer.write_u32::<LittleEndian>(EMBEDDING_FORMAT_VERSION)?;
        writer.write_u32::<LittleEndian>(self.dim as u32)?;
        writer.write_u32::<LittleEndian>(self.frames.len() as u32)?;
        for (index, frame) in self.frames.iter().enumerate() {
            writer.write_u32::<LittleEndian>(index as u32)?;
            writer.write_u32::<LittleEndian>(frame.objects.len() as u32)?;
            for value in frame.place.iter() {
                writer.write_f32::<LittleEndian>(*value as f32)?;
            }
            for object in &frame.objects {
                for value in object.iter() {
                    writer.write_f32::<LittleEndian>(*value as f32)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(reader: &mut impl Read) -> Result<Self, EmbeddingError> {
        let mut magic = [0u8; 4];
        read_exact_or_eof(reader, &mut magic)?;
        if magic != EMBEDDING_MAGIC {
            return Err(EmbeddingError::WrongMagic);
        }
        let version = read_u32(reader)?;
        if version != EMBEDDING_FORMAT_VERSION {
            return Err(EmbeddingError::UnsupportedVersion(version));
        }
        let dim = read_u32(reader)? as usize;
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        let frame_count = read_u32(reader)? as usize;
        let mut frames = Vec::with_capacity(frame_count);
        for position in 0..frame_count {
            let frame_id = read_u32(reader)?;
            if frame_id as usize != position {
                return Err(EmbeddingError::NonConsecutiveFrameIds { position, found: frame_id });
            }
            let detections = read_u32(reader)? as usize;
            let place = read_vector(reader, dim)?;
            let mut objects = Vec::with_capacity(detections);
            for _ in 0..detections {
                objects.push(read_vector(reader, dim)?);
            }
            frames.push(FrameEmbeddings { place, objects });
        }
        let mut probe = [0u8; 1];
        if reader.read(&mut probe)? != 0 {
            return Err(EmbeddingError::TrailingData);
        }
        EmbeddingSet::new(dim, frames)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let mut writer = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut writer)?;
        writer.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let mut reader = io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut reader)
    }
}

fn read_exact_or_eof(reader: &mut impl Read, buffer: &mut [u8]) -> Result<(), EmbeddingError> {
    reader.read_exact(buffer).map_err(|error| {
        if error.kind() == io::ErrorKind::UnexpectedEof {
            EmbeddingError::UnexpectedEof
        } else {
            EmbeddingError::Io(error)
        }
    })
}

fn read_u32(reader: &mut impl Read) -> Result<u32, EmbeddingError> {
    let mut bytes = [0u8; 4];
    read_exact_or_eof(reader, &mut bytes)?;
    Ok(u32::from_le_bytes(bytes))
}

fn read_vector(reader: &mut impl Read, dim: usize) -> Result<DVector<f64>, EmbeddingError> {
    let mut values = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut bytes = [0u8; 4];
        read_exact_or_eof(reader, &mut bytes)?;
        values.push(f32::from_le_bytes(bytes) as f64);
    }
    Ok(DVector::from_vec(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(values)
    }

    fn sample() -> EmbeddingSet {
        EmbeddingSet::new(
            3,
            vec![
                FrameEmbeddings {
                    place: v(&[1.0, 0.0, 0.0]),
                    objects: vec![v(&[0.0, 1.0, 0.0]), v(&[0.0, 0.0, 1.0])],
                },
                FrameEmbeddings { place: v(&[0.5, 0.5, 0.25]), objects: vec![] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_f32_precision() {
        let set = sample();
        let mut buffer = Vec::new();
        set.write_to(&mut buffer).unwrap();
        let parsed = EmbeddingSet::read_from(&mut buffer.as_slice()).unwrap();
        assert_eq!(parsed, set);
        // Writing again produces identical bytes.
        let mut again = Vec::new();
        parsed.write_to(&mut again).unwrap();
        assert_eq!(buffer, again);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut buffer = Vec::new();
        sample().write_to(&mut buffer).unwrap();
        buffer[0] = b'X';
        assert!(matches!(
            EmbeddingSet::read_from(&mut buffer.as_slice()),
            Err(EmbeddingError::WrongMagic)
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut buffer = Vec::new();
        sample().write_to(&mut buffer).unwrap();
        buffer[4] = 2;
        assert!(matches!(
            EmbeddingSet::read_from(&mut buffer.as_slice()),
            Err(EmbeddingError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn truncation_is_reported_as_unexpected_eof() {
        let mut buffer = Vec::new();
        sample().write_to(&mut buffer).unwrap();
        buffer.truncate(buffer.len() - 5);
        let error = EmbeddingSet::read_from(&mut buffer.as_slice()).unwrap_err();
        assert!(error.to_string().contains("unexpected end of embeddings"), "{error}");
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut buffer = Vec::new();
        sample().write_to(&mut buffer).unwrap();
        buffer.push(0);
        assert!(matches!(
            EmbeddingSet::read_from(&mut buffer.as_slice()),
            Err(EmbeddingError::TrailingData)
        ));
    }

    #[test]
    fn zero_norm_vectors_are_rejected() {
        let result = EmbeddingSet::new(
            2,
            vec![FrameEmbeddings { place: v(&[0.0, 0.0]), objects: vec![] }],
        );
        assert!(matches!(result, Err(EmbeddingError::DegenerateVector { frame: 0 })));
    }

    #[test]
    fn wrong_length_vectors_are_rejected() {
        let result = EmbeddingSet::new(
            2,
            vec![FrameEmbeddings { place: v(&[1.0, 0.0, 0.0]), objects: vec![] }],
        );
        assert!(matches!(result, Err(EmbeddingError::WrongLength { .. })));
    }
}
