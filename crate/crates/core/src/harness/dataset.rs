//! Corpus registry and loading.

use std::path::{Path, PathBuf};
use std::process::Command;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lstm::{encode_corpus, EncodedCorpus};

/// Environment variable naming the directory that holds downloaded corpora.
pub const DATA_DIR_ENV: &str = "HMMLSTM_DATA";
pub const DEFAULT_DATA_DIR: &str = "data";
pub const DEFAULT_VALID_FRACTION: f64 = 0.05;

/// Bundled ~100KB public-domain sample (the Sonnets), usable offline.
pub const SAMPLE_NAME: &str = "sample";
pub const SAMPLE_TEXT: &str = include_str!("../../data/sonnets.txt");

/// A corpus that can be fetched by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnownDataset {
    pub name: &'static str,
    pub file_name: &'static str,
    pub url: &'static str,
    /// Size in bytes of the published file, when known.
    pub size: Option<u64>,
    /// SHA-256 of the published file, when known.
    pub sha256: Option<&'static str>,
}

pub const KNOWN_DATASETS: &[KnownDataset] = &[
    KnownDataset {
        name: "shakespeare",
        file_name: "tinyshakespeare.txt",
        url: "https://raw.githubusercontent.com/karpathy/char-rnn/master/data/tinyshakespeare/input.txt",
        size: Some(1_115_394),
        sha256: None,
    },
    KnownDataset {
        name: "linux",
        file_name: "linux_input.txt",
        url: "https://cs.stanford.edu/people/karpathy/char-rnn/linux_input.txt",
        size: None,
        sha256: None,
    },
    KnownDataset {
        name: "ptb",
        file_name: "ptb.char.train.txt",
        url: "https://raw.githubusercontent.com/wojzaremba/lstm/master/data/ptb.char.train.txt",
        size: None,
        sha256: None,
    },
];

pub fn known_dataset(name: &str) -> Option<&'static KnownDataset> {
    KNOWN_DATASETS.iter().find(|d| d.name == name)
}

/// Directory searched for named corpora: `$HMMLSTM_DATA`, else `./data`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

/// Where a dataset name or path resolves to; `None` for the bundled sample.
pub fn resolve_dataset(source: &str) -> Option<PathBuf> {
    if source == SAMPLE_NAME {
        return None;
    }
    match known_dataset(source) {
        Some(d) => Some(data_dir().join(d.file_name)),
        None => Some(PathBuf::from(source)),
    }
}

/// Short name for tables: the registry name, or the file stem of a path.
pub fn dataset_label(source: &str) -> String {
    if source == SAMPLE_NAME || known_dataset(source).is_some() {
        return source.to_string();
    }
    Path::new(source)
        .file_stem()
        .map_or_else(|| source.to_string(), |s| s.to_string_lossy().into_owned())
}

pub fn read_dataset_text(source: &str) -> Result<String> {
    let Some(path) = resolve_dataset(source) else {
        return Ok(SAMPLE_TEXT.to_string());
    };
    let bytes = std::fs::read(&path).map_err(|e| {
        let hint = known_dataset(source)
            .map(|_| format!(" (run `fetch-data --dataset {source}` or set {DATA_DIR_ENV})"))
            .unwrap_or_default();
        Error::io(&path, e).context(format!("loading dataset `{source}`{hint}"))
    })?;
    if bytes.is_empty() {
        return Err(Error::Data(format!("{} is empty", path.display())));
    }
    String::from_utf8(bytes)
        .map_err(|e| Error::Data(format!("{} is not UTF-8: {e}", path.display())))
}

/// Loads and encodes a corpus; the last `valid_fraction` of it is validation.
pub fn load_dataset(source: &str, valid_fraction: f64) -> Result<EncodedCorpus> {
    let text = read_dataset_text(source)?;
    encode_corpus(&text, valid_fraction)
        .map_err(|e| e.context(format!("encoding dataset `{source}`")))
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedFile {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

/// Checks a downloaded file against the registry's size and checksum, when known.
pub fn verify_download(dataset: &KnownDataset, bytes: &[u8]) -> Result<()> {
    if let Some(size) = dataset.size {
        if bytes.len() as u64 != size {
            return Err(Error::Data(format!(
                "{}: expected {size} bytes, downloaded {}",
                dataset.name,
                bytes.len()
            )));
        }
    }
    if let Some(want) = dataset.sha256 {
        let got = sha256_hex(bytes);
        if got != want {
            return Err(Error::Data(format!(
                "{}: sha256 {got} does not match {want}",
                dataset.name
            )));
        }
    }
    Ok(())
}

/// Downloads a registered corpus into `dir` with `curl` and verifies it.
/// The file is only moved into place after verification succeeds.
pub fn fetch_dataset(dataset: &KnownDataset, dir: &Path) -> Result<FetchedFile> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dest = dir.join(dataset.file_name);
    let partial = dir.join(format!("{}.part", dataset.file_name));
    let status = Command::new("curl")
        .args([
            "--fail",
            "--location",
            "--silent",
            "--show-error",
            "--output",
        ])
        .arg(&partial)
        .arg(dataset.url)
        .status()
        .map_err(|e| Error::Data(format!("running curl: {e}")))?;
    if !status.success() {
        let _ = std::fs::remove_file(&partial);
        return Err(Error::Data(format!(
            "download of {} failed ({status})",
            dataset.url
        )));
    }
    let bytes = std::fs::read(&partial).map_err(|e| Error::io(&partial, e))?;
    if let Err(e) = verify_download(dataset, &bytes) {
        let _ = std::fs::remove_file(&partial);
        return Err(e);
    }
    std::fs::rename(&partial, &dest).map_err(|e| Error::io(&dest, e))?;
    Ok(FetchedFile {
        path: dest,
        bytes: bytes.len() as u64,
        sha256: sha256_hex(&bytes),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_loads_deterministically() {
        let a = load_dataset(SAMPLE_NAME, DEFAULT_VALID_FRACTION).unwrap();
        let b = load_dataset(SAMPLE_NAME, DEFAULT_VALID_FRACTION).unwrap();
        assert_eq!(a, b);
        assert!(a.len() > 90_000);
        assert_eq!(a.valid.len(), (a.len() as f64 * 0.05).ceil() as usize);
    }

    #[test]
    fn missing_and_empty_files_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.txt");
        let err = load_dataset(missing.to_str().unwrap(), 0.05).unwrap_err();
        assert!(matches!(err.root(), Error::Io { .. }));
        let empty = dir.path().join("empty.txt");
        std::fs::write(&empty, "").unwrap();
        let err = load_dataset(empty.to_str().unwrap(), 0.05).unwrap_err();
        assert!(matches!(err.root(), Error::Data(_)));
    }

    #[test]
    fn download_verification() {
        let d = KnownDataset {
            name: "x",
            file_name: "x.txt",
            url: "",
            size: Some(3),
            sha256: Some("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
        };
        assert!(verify_download(&d, b"abc").is_ok());
        assert!(verify_download(&d, b"abd").is_err());
        assert!(verify_download(&d, b"ab").is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(dataset_label("shakespeare"), "shakespeare");
        assert_eq!(dataset_label("/tmp/foo/bar.txt"), "bar");
    }
}
