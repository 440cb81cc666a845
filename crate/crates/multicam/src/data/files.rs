//! On-disk formats.
//!
//! Pool file: magic `TCMC1`, one JSON header line `{frames, tracks, dim,
//! fps}`, then `frames·tracks·dim` little-endian f32 values in `[i][j][d]`
//! order. Annotation file: magic `TCMA1`, header `{frames, tracks}`, then
//! `frames` little-endian u16 track indices. Both round-trip bit-exact.
//! Shot lists travel as plain JSON arrays of `{start, end, track}`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DataError, EditAnnotation, FeaturePool, Shot};

pub const POOL_MAGIC: &[u8; 5] = b"TCMC1";
pub const ANNOTATION_MAGIC: &[u8; 5] = b"TCMA1";

#[derive(Serialize, Deserialize)]
struct PoolHeader {
    frames: usize,
    tracks: usize,
    dim: usize,
    fps: f64,
}

#[derive(Serialize, Deserialize)]
struct AnnotationHeader {
    frames: usize,
    tracks: usize,
}

fn check_magic(r: &mut impl Read, expected: &'static [u8; 5]) -> Result<(), DataError> {
    let mut found = [0u8; 5];
    r.read_exact(&mut found).map_err(|_| DataError::Truncated { expected: 5 })?;
    if &found != expected {
        return Err(DataError::BadMagic {
            expected: std::str::from_utf8(expected).unwrap(),
            found: found.to_vec(),
        });
    }
    Ok(())
}

/// Read bytes up to the first newline (the JSON header line).
fn read_header_line(r: &mut impl Read) -> Result<Vec<u8>, DataError> {
    const MAX_HEADER: usize = 64 * 1024;
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)
            .map_err(|_| DataError::Header("unterminated header line".into()))?;
        if byte[0] == b'\n' {
            return Ok(line);
        }
        line.push(byte[0]);
        if line.len() > MAX_HEADER {
            return Err(DataError::Header("header line too long".into()));
        }
    }
}

fn read_payload(r: &mut impl Read, bytes: usize) -> Result<Vec<u8>, DataError> {
    let mut buf = vec![0u8; bytes];
    let mut filled = 0usize;
    while filled < bytes {
        match r.read(&mut buf[filled..]) {
            Ok(0) => return Err(DataError::Truncated { expected: bytes - filled }),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let mut rest = [0u8; 1];
    match r.read(&mut rest) {
        Ok(0) => Ok(buf),
        Ok(_) => {
            let mut extra = Vec::new();
            let more = r.read_to_end(&mut extra).unwrap_or(0);
            Err(DataError::TrailingData(1 + more))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn save_pool(path: impl AsRef<Path>, pool: &FeaturePool) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(POOL_MAGIC)?;
    let header = PoolHeader {
        frames: pool.frames(),
        tracks: pool.tracks(),
        dim: pool.dim(),
        fps: pool.fps(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| DataError::Header(e.to_string()))?;
    w.write_all(b"\n")?;
    for v in pool.features() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_pool(path: impl AsRef<Path>) -> Result<FeaturePool, DataError> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, POOL_MAGIC)?;
    let line = read_header_line(&mut r)?;
    let header: PoolHeader =
        serde_json::from_slice(&line).map_err(|e| DataError::Header(e.to_string()))?;
    let count = header
        .frames
        .checked_mul(header.tracks)
        .and_then(|n| n.checked_mul(header.dim))
        .ok_or_else(|| DataError::Header("pool dimensions overflow".into()))?;
    let bytes = read_payload(&mut r, count * 4)?;
    let features: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeaturePool::new(header.frames, header.tracks, header.dim, header.fps, features)
}

pub fn save_annotation(path: impl AsRef<Path>, ann: &EditAnnotation) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(ANNOTATION_MAGIC)?;
    let header = AnnotationHeader {
        frames: ann.len(),
        tracks: ann.tracks(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| DataError::Header(e.to_string()))?;
    w.write_all(b"\n")?;
    for v in ann.selected() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_annotation(path: impl AsRef<Path>) -> Result<EditAnnotation, DataError> {
    let mut r = BufReader::new(File::open(path)?);
    check_magic(&mut r, ANNOTATION_MAGIC)?;
    let line = read_header_line(&mut r)?;
    let header: AnnotationHeader =
        serde_json::from_slice(&line).map_err(|e| DataError::Header(e.to_string()))?;
    let bytes = read_payload(&mut r, header.frames * 2)?;
    let selected: Vec<u16> = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    EditAnnotation::new(selected, header.tracks)
}

pub fn save_shots(path: impl AsRef<Path>, shots: &[Shot]) -> Result<(), DataError> {
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(w, shots).map_err(|e| DataError::Header(e.to_string()))?;
    Ok(())
}

pub fn load_shots(path: impl AsRef<Path>) -> Result<Vec<Shot>, DataError> {
    let r = BufReader::new(File::open(path)?);
    serde_json::from_reader(r).map_err(|e| DataError::Header(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic_show, SyntheticSpec};

    fn sample_pool() -> (FeaturePool, EditAnnotation) {
        generate_synthetic_show(&SyntheticSpec {
            tracks: 3,
            dim: 4,
            duration_frames: 120,
            seed: 77,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn pool_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.pool");
        let (pool, _) = sample_pool();
        save_pool(&path, &pool).unwrap();
        let loaded = load_pool(&path).unwrap();
        assert_eq!(pool, loaded);
        // Bytes identical on re-save.
        let path2 = dir.path().join("scene2.pool");
        save_pool(&path2, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn annotation_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.ann");
        let (_, ann) = sample_pool();
        save_annotation(&path, &ann).unwrap();
        assert_eq!(load_annotation(&path).unwrap(), ann);
    }

    #[test]
    fn truncated_pool_is_an_error_not_partial_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.pool");
        let (pool, _) = sample_pool();
        save_pool(&path, &pool).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(load_pool(&path), Err(DataError::Truncated { .. })));
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.ann");
        let (_, ann) = sample_pool();
        save_annotation(&path, &ann).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(b"junk");
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_annotation(&path),
            Err(DataError::TrailingData(4))
        ));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.pool");
        let (pool, _) = sample_pool();
        save_pool(&path, &pool).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_pool(&path), Err(DataError::BadMagic { .. })));
    }

    #[test]
    fn annotation_with_out_of_range_track_fails_validation_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.ann");
        let mut w = BufWriter::new(File::create(&path).unwrap());
        w.write_all(ANNOTATION_MAGIC).unwrap();
        w.write_all(br#"{"frames":2,"tracks":2}"#).unwrap();
        w.write_all(b"\n").unwrap();
        w.write_all(&1u16.to_le_bytes()).unwrap();
        w.write_all(&5u16.to_le_bytes()).unwrap(); // ≥ tracks
        w.flush().unwrap();
        drop(w);
        assert!(matches!(load_annotation(&path), Err(DataError::Invalid(_))));
    }

    #[test]
    fn shots_json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shots.json");
        let shots = vec![
            Shot { start: 0, end: 48, track: 2 },
            Shot { start: 48, end: 100, track: 0 },
        ];
        save_shots(&path, &shots).unwrap();
        assert_eq!(load_shots(&path).unwrap(), shots);
    }
}
