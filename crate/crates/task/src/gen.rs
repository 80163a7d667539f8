//! Deterministic input file generator.
//!
//! The input is a sequence of fixed-width tuples. Each tuple starts with a
//! 12-byte header (4-byte magic, 8-byte big-endian tuple index) followed by
//! pseudo-random payload bytes drawn from a seeded generator, so the same
//! `(total_bytes, tuple_bytes, seed)` triple always produces a byte-identical
//! file.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const TUPLE_MAGIC: [u8; 4] = *b"TUPL";
pub const TUPLE_HEADER_BYTES: u64 = 12;
/// Smallest tuple that still carries some payload.
pub const MIN_TUPLE_BYTES: u64 = 16;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("total_bytes must be > 0")]
    EmptyInput,
    #[error("tuple_bytes {0} below minimum {MIN_TUPLE_BYTES}")]
    TupleTooSmall(u64),
    #[error("total_bytes {total} not a multiple of tuple_bytes {tuple}")]
    NotDivisible { total: u64, tuple: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Writes a generated input file of exactly `total_bytes`.
///
/// The file is assembled under a temporary name and renamed into place on
/// success, so a failed generation (for example on a full disk) leaves no
/// partial file behind.
pub fn generate_input(
    path: &Path,
    total_bytes: u64,
    tuple_bytes: u64,
    seed: u64,
) -> Result<(), GenError> {
    if total_bytes == 0 {
        return Err(GenError::EmptyInput);
    }
    if tuple_bytes < MIN_TUPLE_BYTES {
        return Err(GenError::TupleTooSmall(tuple_bytes));
    }
    if total_bytes % tuple_bytes != 0 {
        return Err(GenError::NotDivisible {
            total: total_bytes,
            tuple: tuple_bytes,
        });
    }

    let tmp = path.with_extension("tmp");
    let result = write_tuples(&tmp, total_bytes, tuple_bytes, seed)
        .and_then(|()| fs::rename(&tmp, path).map_err(GenError::from));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

fn write_tuples(tmp: &Path, total_bytes: u64, tuple_bytes: u64, seed: u64) -> Result<(), GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let file = File::create(tmp)?;
    let mut w = BufWriter::with_capacity(1 << 20, file);
    let payload_len = (tuple_bytes - TUPLE_HEADER_BYTES) as usize;
    let mut payload = vec![0u8; payload_len];
    let tuples = total_bytes / tuple_bytes;
    for index in 0..tuples {
        w.write_all(&TUPLE_MAGIC)?;
        w.write_all(&index.to_be_bytes())?;
        rng.fill_bytes(&mut payload);
        w.write_all(&payload)?;
    }
    w.flush()?;
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    Ok(())
}

/// Checks a tuple's fixed-width header.
pub fn parse_header(tuple: &[u8], expected_index: u64) -> Result<(), String> {
    if tuple.len() < TUPLE_HEADER_BYTES as usize {
        return Err(format!("tuple shorter than header: {} bytes", tuple.len()));
    }
    if tuple[0..4] != TUPLE_MAGIC {
        return Err(format!("bad tuple magic {:02x?}", &tuple[0..4]));
    }
    let index = u64::from_be_bytes(tuple[4..12].try_into().unwrap());
    if index != expected_index {
        return Err(format!("tuple index {index}, expected {expected_index}"));
    }
    Ok(())
}
