//! Binary dataset format, little-endian:
//!
//! ```text
//! "LCTJ1" | version u32 | pair count u64 | obs length u16 (244) | mask length u16 (145)
//! per pair: match_id u64 | player u8 | action u16 | mask 19 bytes | obs 244 × f32
//! ```
//!
//! Mask bit `i` is bit `i % 8` of byte `i / 8`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde_json::json;

use super::{Dataset, DatasetError};
use crate::encoding::BATTLE_OBS_LEN;
use crate::engine::BATTLE_ACTIONS;

pub const DATASET_MAGIC: &[u8; 5] = b"LCTJ1";
pub const DATASET_VERSION: u32 = 1;
pub const MASK_BYTES: usize = BATTLE_ACTIONS.div_ceil(8);
const HEADER_LEN: usize = 5 + 4 + 8 + 2 + 2;
const RECORD_LEN: usize = 8 + 1 + 2 + MASK_BYTES + 4 * BATTLE_OBS_LEN;

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    w.write_all(&(BATTLE_OBS_LEN as u16).to_le_bytes())?;
    w.write_all(&(BATTLE_ACTIONS as u16).to_le_bytes())?;
    let mut rec = Vec::with_capacity(RECORD_LEN);
    for i in 0..ds.len() {
        rec.clear();
        rec.extend_from_slice(&ds.match_ids[i].to_le_bytes());
        rec.push(ds.players[i]);
        rec.extend_from_slice(&ds.actions[i].to_le_bytes());
        rec.extend_from_slice(&ds.masks[i]);
        for v in ds.obs_row(i) {
            rec.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&rec)?;
    }
    w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header).map_err(|_| DatasetError::Format("truncated header".into()))?;
    if &header[..5] != DATASET_MAGIC {
        return Err(DatasetError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[5..9].try_into().expect("4 bytes"));
    if version != DATASET_VERSION {
        return Err(DatasetError::Format(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(header[9..17].try_into().expect("8 bytes"));
    let obs_len = u16::from_le_bytes(header[17..19].try_into().expect("2 bytes")) as usize;
    let mask_len = u16::from_le_bytes(header[19..21].try_into().expect("2 bytes")) as usize;
    if obs_len != BATTLE_OBS_LEN || mask_len != BATTLE_ACTIONS {
        return Err(DatasetError::Format(format!("unexpected obs/mask lengths {obs_len}/{mask_len}")));
    }
    let expected = HEADER_LEN as u64 + count * RECORD_LEN as u64;
    if file_len != expected {
        return Err(DatasetError::Format(format!("file has {file_len} bytes, header implies {expected}")));
    }
    let n = count as usize;
    let mut ds = Dataset {
        obs: Vec::with_capacity(n * BATTLE_OBS_LEN),
        masks: Vec::with_capacity(n),
        actions: Vec::with_capacity(n),
        match_ids: Vec::with_capacity(n),
        players: Vec::with_capacity(n),
    };
    let mut rec = vec![0u8; RECORD_LEN];
    for i in 0..n {
        r.read_exact(&mut rec)?;
        let action = u16::from_le_bytes(rec[9..11].try_into().expect("2 bytes"));
        let mask: [u8; MASK_BYTES] = rec[11..11 + MASK_BYTES].try_into().expect("mask bytes");
        if action as usize >= BATTLE_ACTIONS || mask[action as usize / 8] >> (action % 8) & 1 == 0 {
            return Err(DatasetError::Format(format!("record {i}: action {action} not legal under its mask")));
        }
        ds.match_ids.push(u64::from_le_bytes(rec[..8].try_into().expect("8 bytes")));
        ds.players.push(rec[8]);
        ds.actions.push(action);
        ds.masks.push(mask);
        ds.obs.extend(rec[11 + MASK_BYTES..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))));
    }
    Ok(ds)
}

/// Text mirror: one JSON object per pair with named fields.
pub fn write_debug(ds: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..ds.len() {
        let legal: Vec<usize> = ds.mask_row(i).iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| k).collect();
        let rec = json!({
            "match_id": ds.match_ids[i],
            "player": ds.players[i],
            "action": ds.actions[i],
            "legal": legal,
            "obs": ds.obs_row(i),
        });
        writeln!(w, "{rec}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SamplePair;

    fn sample() -> Dataset {
        let mut ds = Dataset::default();
        for k in 0..5u64 {
            let mut mask = vec![false; BATTLE_ACTIONS];
            mask[0] = true;
            mask[144] = true;
            mask[k as usize + 1] = true;
            let obs = (0..BATTLE_OBS_LEN).map(|i| i as f32 * 0.5 - k as f32).collect();
            ds.push(&SamplePair { obs, mask, action: [0, 144, 3, 4, 5][k as usize], match_id: k / 2, player: (k % 2) as u8 })
                .unwrap();
        }
        ds
    }

    #[test]
    fn binary_round_trip_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let ds = sample();
        write_dataset(&ds, &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, HEADER_LEN + 5 * RECORD_LEN);
        assert_eq!(read_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        write_dataset(&sample(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_dataset(&path), Err(DatasetError::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'Z';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(read_dataset(&path), Err(DatasetError::Format(_))));
    }

    #[test]
    fn debug_mirror_has_one_line_per_pair() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_debug(&sample(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["action"], 0);
        assert_eq!(first["obs"].as_array().unwrap().len(), BATTLE_OBS_LEN);
    }
}
