//! `TKRL1` container: a tag line, a JSON header and a list of little-endian `f64` blocks.
//!
//! Layout: `<tag>\n`, `u64` header length, header bytes, `u64` block count, then per block a
//! `u64` length followed by the values.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn write_container<W: Write, H: Serialize>(mut w: W, tag: &str, header: &H, blocks: &[&[f64]]) -> Result<()> {
    w.write_all(tag.as_bytes())?;
    w.write_all(b"\n")?;
    let json = serde_json::to_vec(header)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(blocks.len() as u64).to_le_bytes())?;
    for b in blocks {
        w.write_all(&(b.len() as u64).to_le_bytes())?;
        for x in b.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_container<R: Read, H: DeserializeOwned>(mut r: R, tag: &str) -> Result<(H, Vec<Vec<f64>>)> {
    let mut line = vec![0u8; tag.len() + 1];
    r.read_exact(&mut line)
        .map_err(|_| Error::Format("truncated tag".into()))?;
    if &line[..tag.len()] != tag.as_bytes() || line[tag.len()] != b'\n' {
        return Err(Error::Format(format!(
            "expected tag {tag}, found {:?}",
            String::from_utf8_lossy(&line)
        )));
    }
    let hlen = read_u64(&mut r)? as usize;
    let mut json = vec![0u8; hlen];
    r.read_exact(&mut json)?;
    let header = serde_json::from_slice(&json)?;
    let nb = read_u64(&mut r)? as usize;
    let mut blocks = Vec::with_capacity(nb);
    for _ in 0..nb {
        let n = read_u64(&mut r)? as usize;
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        blocks.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    Ok((header, blocks))
}

/// Writes to a temporary sibling and renames, so a crash never leaves a torn file.
pub fn save<H: Serialize>(path: &Path, tag: &str, header: &H, blocks: &[&[f64]]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let f = fs::File::create(&tmp)?;
        write_container(BufWriter::new(f), tag, header, blocks)?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load<H: DeserializeOwned>(path: &Path, tag: &str) -> Result<(H, Vec<Vec<f64>>)> {
    let f = fs::File::open(path)?;
    read_container(BufReader::new(f), tag)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let a = [1.0, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0];
        let b: [f64; 0] = [];
        let mut buf = Vec::new();
        write_container(&mut buf, "TKRL1-TEST", &serde_json::json!({"k": 3}), &[&a, &b]).unwrap();
        let (h, blocks): (serde_json::Value, _) = read_container(&buf[..], "TKRL1-TEST").unwrap();
        assert_eq!(h["k"], 3);
        assert_eq!(blocks.len(), 2);
        assert!(blocks[0].iter().zip(&a).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(blocks[1].is_empty());
        assert!(matches!(
            read_container::<_, serde_json::Value>(&buf[..], "TKRL1-FLOW"),
            Err(Error::Format(_))
        ));
    }
}
