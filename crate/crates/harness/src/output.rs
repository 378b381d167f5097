//! Output files: CSV with a `# key=value` metadata preamble, the binary field
//! snapshot format, and an all-or-nothing commit to the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Ordered key/value pairs written at the top of every output file.
#[derive(Debug, Clone, Default)]
pub struct Metadata {
    entries: Vec<(String, String)>,
}

impl Metadata {
    /// Config hash, versions, seed and the gauge conventions.
    pub fn new(config_text: &str, seed: u64, prng: &str) -> Self {
        let mut m = Metadata::default();
        m.push("config_sha256", config_hash(config_text));
        m.push("bangcross_version", bangcross::VERSION);
        m.push("harness_version", HARNESS_VERSION);
        m.push("seed", seed);
        m.push("prng", prng);
        m.push("gauge", "psi = phi*exp(int_0^tau A)");
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn with(&self, key: &str, value: impl ToString) -> Self {
        let mut m = self.clone();
        m.push(key, value);
        m
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    fn preamble(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> =
            self.entries.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect();
        serde_json::Value::Object(map)
    }
}

pub fn config_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Shortest round-trip representation; fixed for a given value.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// CSV table with a metadata preamble.
pub fn csv_table(meta: &Metadata, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut buf = meta.preamble().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| HarnessError::Csv(e.into()))?;
    }
    Ok(buf)
}

/// Binary snapshot of spectral-grid fields: a text header terminated by
/// `end_header`, then little-endian `f64` pairs `(Re, Im)` for each field in
/// turn, each laid out row-major on the `n³` grid.
pub fn field_snapshot(
    meta: &Metadata,
    n: usize,
    periods: [f64; 3],
    tau: f64,
    fields: &[(&str, &[Complex64])],
) -> Vec<u8> {
    let mut head = String::from("bangcross-field\n");
    for (k, v) in meta.entries() {
        head.push_str(&format!("{k}={v}\n"));
    }
    head.push_str(&format!("n={n}\nperiods={},{},{}\ntau={}\n", num(periods[0]), num(periods[1]), num(periods[2]), num(tau)));
    head.push_str("endianness=little\nlayout=row-major\ndtype=f64\ncomplex=interleaved\n");
    let names: Vec<&str> = fields.iter().map(|f| f.0).collect();
    head.push_str(&format!("fields={}\nend_header\n", names.join(",")));
    let mut buf = head.into_bytes();
    for (_, values) in fields {
        for z in values.iter() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    buf
}

/// Files produced by a command, held in memory until everything succeeded.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|f| f.0.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|f| f.0 == name).map(|f| f.1.as_slice())
    }

    /// Write into a staging directory next to `dir`, then move the files in.
    pub fn commit(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| HarnessError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let staging = dir.join(format!(".staging-{}", std::process::id()));
        fs::create_dir_all(&staging).map_err(io(&staging))?;
        let written: Result<()> = self.files.iter().try_for_each(|(name, bytes)| {
            let p = staging.join(name);
            fs::write(&p, bytes).map_err(io(&p))
        });
        if let Err(e) = written {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        let mut out = Vec::new();
        for (name, _) in &self.files {
            let (from, to) = (staging.join(name), dir.join(name));
            fs::rename(&from, &to).map_err(io(&to))?;
            out.push(to);
        }
        fs::remove_dir_all(&staging).map_err(io(&staging))?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn numbers_round_trip_exactly(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            prop_assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }

        #[test]
        fn hash_tracks_every_byte(a in ".{0,40}", b in ".{0,40}") {
            prop_assert_eq!(config_hash(&a) == config_hash(&b), a == b);
        }
    }

    #[test]
    fn csv_has_preamble_then_quoted_records() {
        let m = Metadata::new("x = 1", 3, "ChaCha8");
        let bytes = csv_table(&m, &["a", "b"], &[vec!["1".into(), "x,y".into()]]).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("# config_sha256="));
        assert!(text.ends_with("a,b\n1,\"x,y\"\n"));
    }

    #[test]
    fn snapshot_payload_follows_header() {
        let m = Metadata::default();
        let v = [Complex64::new(1.5, -2.0)];
        let b = field_snapshot(&m, 1, [1.0; 3], 0.5, &[("phi", &v)]);
        let at = b.windows(11).position(|w| w == b"end_header\n").unwrap() + 11;
        assert_eq!(b.len() - at, 16);
        assert_eq!(f64::from_le_bytes(b[at..at + 8].try_into().unwrap()), 1.5);
        assert_eq!(f64::from_le_bytes(b[at + 8..].try_into().unwrap()), -2.0);
    }

    #[test]
    fn hash_is_hex_sha256() {
        assert_eq!(config_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
