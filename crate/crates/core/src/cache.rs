//! On-disk cache of aggregated null π matrices.
//!
//! Layout: magic `KOPI0`, then little-endian version (u32), p, B, D (u64), scheme id (u8),
//! gamma (f64), pairing id (u8), seed (u64), followed by B·p row-major f64 values.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{KopiError, Result};
use crate::jer::{aggregated_null, calibration_streams, NullPiMatrix, Pairing};
use crate::pistats::AggregationScheme;

pub const MAGIC: &[u8; 5] = b"KOPI0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CacheKey {
    pub p: usize,
    pub b: usize,
    pub draws: usize,
    pub scheme: AggregationScheme,
    pub pairing: Pairing,
    pub seed: u64,
}

impl CacheKey {
    pub fn file_name(&self) -> String {
        format!(
            "null_p{}_B{}_D{}_{}_{}_s{}.kopi",
            self.p,
            self.b,
            self.draws,
            self.scheme.label(),
            self.pairing.name(),
            self.seed
        )
    }

    fn header(&self) -> Vec<u8> {
        let mut h = Vec::with_capacity(51);
        h.extend_from_slice(MAGIC);
        h.extend_from_slice(&VERSION.to_le_bytes());
        for v in [self.p, self.b, self.draws] {
            h.extend_from_slice(&(v as u64).to_le_bytes());
        }
        h.push(self.scheme.kind.id());
        h.extend_from_slice(&self.scheme.gamma.to_le_bytes());
        h.push(self.pairing.id());
        h.extend_from_slice(&self.seed.to_le_bytes());
        h
    }
}

pub fn write_null(path: &Path, key: &CacheKey, null: &NullPiMatrix) -> Result<()> {
    if null.p() != key.p || null.nrows() != key.b {
        return Err(KopiError::Cache("matrix shape does not match the cache key".into()));
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        w.write_all(&key.header())?;
        for v in null.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a cached matrix; any header mismatch is an error.
pub fn read_null(path: &Path, key: &CacheKey) -> Result<NullPiMatrix> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let expected = key.header();
    let mut header = vec![0u8; expected.len()];
    r.read_exact(&mut header)
        .map_err(|_| KopiError::Cache("truncated header".into()))?;
    if &header[..5] != MAGIC {
        return Err(KopiError::Cache("bad magic".into()));
    }
    if header != expected {
        return Err(KopiError::Cache("header does not match the requested key".into()));
    }
    let len = key.b * key.p;
    let mut bytes = Vec::with_capacity(len * 8);
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(KopiError::Cache(format!(
            "expected {} payload bytes, found {}",
            len * 8,
            bytes.len()
        )));
    }
    let rows = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    NullPiMatrix::from_rows(rows, key.b, key.p, key.seed, true)
}

/// Directory-backed cache with hit/miss counters.
#[derive(Debug)]
pub struct NullCache {
    dir: Option<PathBuf>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl NullCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        NullCache {
            dir: Some(dir.into()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn disabled() -> Self {
        NullCache {
            dir: None,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn path_for(&self, key: &CacheKey) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(key.file_name()))
    }

    /// Aggregated null matrix for `key`, sampled from the calibration null stream on a miss.
    pub fn null_matrix(&self, key: &CacheKey) -> Result<NullPiMatrix> {
        if let Some(path) = self.path_for(key) {
            if path.exists() {
                match read_null(&path, key) {
                    Ok(m) => {
                        self.hits.fetch_add(1, Ordering::Relaxed);
                        log::info!("null cache hit: {}", path.display());
                        return Ok(m);
                    }
                    Err(e) => log::warn!("ignoring unreadable cache file {}: {e}", path.display()),
                }
            }
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        log::info!("null cache miss: sampling {}x{} null matrix", key.b, key.p);
        let (stream, _) = calibration_streams(key.seed);
        let m = aggregated_null(key.draws, key.b, key.p, &key.scheme, key.pairing, &stream)?;
        if let Some(path) = self.path_for(key) {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            write_null(&path, key, &m)?;
        }
        Ok(m)
    }
}
