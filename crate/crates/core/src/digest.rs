//! Content digests used for run ids and manifests.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{InputPaths, INPUT_FILES};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Run id of a set of claim input files: the digest of the per-file digests
/// listed with their names in a fixed order.
pub fn run_id<'a>(files: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut listing = String::new();
    for (name, bytes) in files {
        listing.push_str(name);
        listing.push(' ');
        listing.push_str(&sha256_hex(bytes));
        listing.push('\n');
    }
    sha256_hex(listing.as_bytes())
}

pub fn run_id_of_inputs(paths: &InputPaths) -> Result<String> {
    let contents: Vec<Vec<u8>> = paths
        .all()
        .iter()
        .map(|p| std::fs::read(p).map_err(|e| Error::io(*p, e)))
        .collect::<Result<_>>()?;
    Ok(run_id(INPUT_FILES.iter().copied().zip(contents.iter().map(Vec::as_slice))))
}
