use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::{ClassId, DomainTrials, Error, Real, Result};

pub const EEGB_MAGIC: &[u8; 4] = b"EEGB";
pub const EEGB_VERSION: u32 = 1;
/// magic, version, n_trials, channels, samples, label flag.
pub const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 4 + 1;

/// Serializes a domain. Scalars are widened to `f64` on disk.
pub fn encode_container<T: Real>(domain: &DomainTrials<T>) -> Result<Vec<u8>> {
    let (c, t) = domain.shape().unwrap_or((0, 0));
    let n = domain.len();
    let as_u32 = |v: usize, what: &str| u32::try_from(v).map_err(|_| Error::Config(format!("{what} {v} exceeds the container limit")));
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * n + 8 * n * c * t);
    out.extend_from_slice(EEGB_MAGIC);
    out.extend_from_slice(&EEGB_VERSION.to_le_bytes());
    out.extend_from_slice(&as_u32(n, "trial count")?.to_le_bytes());
    out.extend_from_slice(&as_u32(c, "channel count")?.to_le_bytes());
    out.extend_from_slice(&as_u32(t, "sample count")?.to_le_bytes());
    match domain.labels() {
        Some(labels) => {
            out.push(1);
            for &l in labels {
                let v = i32::try_from(l).map_err(|_| Error::Config(format!("label {l} exceeds i32")))?;
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        None => out.push(0),
    }
    for trial in domain.trials() {
        for r in 0..c {
            for s in 0..t {
                out.extend_from_slice(&trial[(r, s)].as_f64().to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("truncated while reading {what} at byte {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_container(bytes: &[u8], subject_id: &str) -> Result<DomainTrials<f64>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != EEGB_MAGIC {
        return Err(Error::Format { offset: 0, message: "bad magic, expected \"EEGB\"".into() });
    }
    let version = cur.u32("version")?;
    if version > EEGB_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if version == 0 {
        return Err(Error::Format { offset: 4, message: "version 0 is not defined".into() });
    }
    let n = cur.u32("trial count")? as usize;
    let c = cur.u32("channel count")? as usize;
    let t = cur.u32("sample count")? as usize;
    let flag = cur.take(1, "label flag")?[0];
    if flag > 1 {
        return Err(Error::Format { offset: 20, message: format!("label flag {flag} is not 0 or 1") });
    }
    let expected = (HEADER_LEN as u128) + 4 * n as u128 * flag as u128 + 8 * (n as u128) * (c as u128) * (t as u128);
    if (bytes.len() as u128) < expected {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            message: format!("truncated: header declares {expected} bytes, file has {}", bytes.len()),
        });
    }
    if (bytes.len() as u128) > expected {
        return Err(Error::Format { offset: expected as u64, message: format!("{} trailing bytes", bytes.len() as u128 - expected) });
    }
    let labels = if flag == 1 {
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let offset = cur.pos as u64;
            let v = i32::from_le_bytes(cur.take(4, "label")?.try_into().expect("4 bytes"));
            if v < 1 {
                return Err(Error::Format { offset, message: format!("label {v} of trial {i} is below 1") });
            }
            labels.push(v as ClassId);
        }
        Some(labels)
    } else {
        None
    };
    if n > 0 && (c == 0 || t == 0) {
        return Err(Error::Format { offset: 12, message: format!("{n} trials of shape {c}x{t}") });
    }
    let mut trials = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = cur.take(8 * c * t, "payload")?;
        let values = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")));
        trials.push(DMatrix::from_row_iterator(c, t, values));
    }
    DomainTrials::new(trials, labels, subject_id)
}

/// Writes `domain` as EEGB.
pub fn write_container<T: Real>(domain: &DomainTrials<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_container(domain)?)?;
    Ok(())
}

/// Reads an EEGB file. The subject id is the file stem.
pub fn read_container(path: impl AsRef<Path>) -> Result<DomainTrials<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    decode_container(&bytes, &id)
}
