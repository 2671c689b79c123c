//! Dataset download with checksum verification.

use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::env::ManifestEntry;
use crate::error::{Error, Result};

/// What happened to one manifest entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FetchStatus {
    /// Already on disk; not downloaded again.
    Present(PathBuf),
    Downloaded { path: PathBuf, verified: bool },
    /// No source URL in the manifest.
    NoSource,
}

/// Fetches `source` (an `http(s)://` or `file://` URL, or a plain path).
fn read_source(source: &str) -> Result<Vec<u8>> {
    if let Some(rest) = source.strip_prefix("file://") {
        return std::fs::read(rest).map_err(|e| Error::io(rest, e));
    }
    if source.starts_with("http://") || source.starts_with("https://") {
        let mut resp = ureq::get(source)
            .call()
            .map_err(|e| Error::Runtime(format!("download of {source} failed: {e}")))?;
        return resp
            .body_mut()
            .with_config()
            .limit(2 << 30)
            .read_to_vec()
            .map_err(|e| Error::Runtime(format!("download of {source} failed: {e}")));
    }
    std::fs::read(source).map_err(|e| Error::io(source, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Downloads `entry` into `dir` unless its file already exists. The checksum,
/// when present, covers the downloaded bytes; `.bz2` sources are
/// decompressed afterwards.
pub fn fetch_entry(entry: &ManifestEntry, dir: &Path, force: bool) -> Result<FetchStatus> {
    let target = dir.join(&entry.path);
    if target.exists() && !force {
        return Ok(FetchStatus::Present(target));
    }
    let Some(url) = &entry.url else {
        return Ok(FetchStatus::NoSource);
    };
    let raw = read_source(url)?;
    let verified = match &entry.sha256 {
        Some(want) => {
            let got = sha256_hex(&raw);
            if !got.eq_ignore_ascii_case(want) {
                return Err(Error::Validation(format!(
                    "{}: checksum mismatch (expected {want}, got {got})",
                    entry.name
                )));
            }
            true
        }
        None => {
            log::warn!("{}: manifest has no sha256; download not verified", entry.name);
            false
        }
    };
    let body = if url.ends_with(".bz2") {
        let mut out = Vec::new();
        bzip2::read::BzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Runtime(format!("{}: bad bzip2 stream: {e}", entry.name)))?;
        out
    } else {
        raw
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = target.with_extension("part");
    std::fs::write(&tmp, &body).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
    Ok(FetchStatus::Downloaded { path: target, verified })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::DatasetFormat;
    use std::io::Write;

    fn entry(url: String, sha: Option<String>, path: &str) -> ManifestEntry {
        ManifestEntry {
            name: "toy".into(),
            path: path.into(),
            format: DatasetFormat::Libsvm,
            n_classes: 2,
            d: 1,
            sha256: sha,
            url: Some(url),
        }
    }

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn file_source_verified_and_skipped_when_present() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.txt");
        std::fs::write(&src, "1 1:0.5\n2 1:0.1\n").unwrap();
        let e = entry(format!("file://{}", src.display()), Some(sha256_hex(b"1 1:0.5\n2 1:0.1\n")), "toy");
        let out = dir.path().join("data");
        let st = fetch_entry(&e, &out, false).unwrap();
        assert!(matches!(st, FetchStatus::Downloaded { verified: true, .. }));
        assert_eq!(std::fs::read_to_string(out.join("toy")).unwrap(), "1 1:0.5\n2 1:0.1\n");
        assert!(matches!(fetch_entry(&e, &out, false).unwrap(), FetchStatus::Present(_)));
    }

    #[test]
    fn checksum_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.txt");
        std::fs::write(&src, "x").unwrap();
        let e = entry(format!("file://{}", src.display()), Some("00".repeat(32)), "toy");
        assert!(matches!(fetch_entry(&e, dir.path(), false), Err(Error::Validation(_))));
        assert!(!dir.path().join("toy").exists());
    }

    #[test]
    fn bz2_sources_are_decompressed() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.bz2");
        let mut enc = bzip2::write::BzEncoder::new(Vec::new(), bzip2::Compression::default());
        enc.write_all(b"1 1:1\n").unwrap();
        std::fs::write(&src, enc.finish().unwrap()).unwrap();
        let e = entry(format!("file://{}", src.display()), None, "toy");
        let st = fetch_entry(&e, dir.path(), false).unwrap();
        assert!(matches!(st, FetchStatus::Downloaded { verified: false, .. }));
        assert_eq!(std::fs::read_to_string(dir.path().join("toy")).unwrap(), "1 1:1\n");
    }
}
