//! Content hashing and the on-disk artifact layout.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Git-style blob hash: `sha256("blob <len>\0" ‖ contents)`.
pub fn blob_hash(contents: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", contents.len()).as_bytes());
    h.update(contents);
    hex(&h.finalize())
}

/// Canonical text of any serializable value.
pub fn canonical<S: Serialize + ?Sized>(value: &S) -> String {
    #[derive(Serialize)]
    struct Wrap<'a, S: ?Sized> {
        v: &'a S,
    }
    toml::to_string(&Wrap { v: value }).expect("configuration values serialize to TOML")
}

/// Short cache key over labelled parts.
pub fn cache_key(parts: &[(&str, String)]) -> String {
    let mut h = Sha256::new();
    for (label, text) in parts {
        h.update(label.as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        h.update([0]);
    }
    hex(&h.finalize())[..16].to_string()
}

/// Hash of the files an output was computed from, named relative to the
/// cache root so that it does not depend on where the cache lives.
#[derive(Debug, Default)]
pub struct InputDigest {
    entries: Vec<(String, String)>,
}

impl InputDigest {
    pub fn add_file(&mut self, root: &Path, path: &Path) -> CliResult<()> {
        let name = path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/");
        self.entries.push((name, blob_hash(&fs::read(path)?)));
        Ok(())
    }

    pub fn finish(mut self) -> String {
        self.entries.sort();
        self.entries.dedup();
        let mut text = String::new();
        for (name, hash) in &self.entries {
            let _ = writeln!(text, "{hash} {name}");
        }
        sha256_hex(text.as_bytes())
    }
}

/// Directory layout of one experiment.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
    pub cache: PathBuf,
    pub plant_key: String,
    pub gramian_key: String,
    pub training_key: String,
    pub fit_key: String,
}

impl Layout {
    pub fn plant_dir(&self) -> PathBuf {
        self.cache.join(format!("plant-{}", self.plant_key))
    }
    pub fn plant_file(&self) -> PathBuf {
        self.plant_dir().join("plant.bundle")
    }
    pub fn trims_file(&self) -> PathBuf {
        self.plant_dir().join("trims.bundle")
    }
    pub fn gramians_file(&self) -> PathBuf {
        self.plant_dir().join(format!("gramians-{}.bundle", self.gramian_key))
    }
    pub fn training_dir(&self, seed: u64) -> PathBuf {
        self.cache
            .join(format!("training-{}", self.training_key))
            .join(format!("seed-{seed}"))
    }
    pub fn trajectory_file(&self, seed: u64, j: usize) -> PathBuf {
        self.training_dir(seed).join(format!("traj-{j:02}.csv"))
    }
    pub fn rom_dir(&self) -> PathBuf {
        self.cache.join(format!("roms-{}", self.fit_key))
    }
    pub fn orders_file(&self) -> PathBuf {
        self.rom_dir().join("orders.toml")
    }
    pub fn rom_file(&self, seed: u64, tag: &str, n_z: usize) -> PathBuf {
        self.rom_dir().join(format!("seed-{seed}")).join(format!("{tag}-nz{n_z:03}.bundle"))
    }
    /// Marker written instead of a ROM when the fit itself failed.
    pub fn rom_failure_file(&self, seed: u64, tag: &str, n_z: usize) -> PathBuf {
        self.rom_file(seed, tag, n_z).with_extension("failed")
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.out.join("eval")
    }
    pub fn mpc_dir(&self) -> PathBuf {
        self.out.join("mpc")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digests() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        // `git hash-object --object-format=sha256` of an empty file.
        assert_eq!(blob_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }

    #[test]
    fn keys_separate_parts() {
        let a = cache_key(&[("x", "ab".into()), ("y", "c".into())]);
        let b = cache_key(&[("x", "a".into()), ("y", "bc".into())]);
        assert_ne!(a, b);
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn input_digest_ignores_order_and_root() {
        let base = std::env::temp_dir().join(format!("lpvrom-digest-{}", std::process::id()));
        let (r1, r2) = (base.join("one"), base.join("two"));
        for r in [&r1, &r2] {
            fs::create_dir_all(r.join("d")).unwrap();
            fs::write(r.join("a.txt"), "alpha").unwrap();
            fs::write(r.join("d/b.txt"), "beta").unwrap();
        }
        let mut d1 = InputDigest::default();
        d1.add_file(&r1, &r1.join("a.txt")).unwrap();
        d1.add_file(&r1, &r1.join("d/b.txt")).unwrap();
        let mut d2 = InputDigest::default();
        d2.add_file(&r2, &r2.join("d/b.txt")).unwrap();
        d2.add_file(&r2, &r2.join("a.txt")).unwrap();
        assert_eq!(d1.finish(), d2.finish());
        fs::remove_dir_all(base).unwrap();
    }
}
