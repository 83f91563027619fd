//! Match logs for deterministic replay, little-endian:
//!
//! ```text
//! "LCML1" | version u32 | params length u32 | generator params (JSON) | match count u64
//! per match: match_id u64 | pool_seed u64 | game_seed u64 | agent_seed u64 | outcome u8
//!            (1 first player, 2 second player, 3 draw) | forfeit u8 (0 none, 1 or 2 seat)
//!            | action count u32 | actions u16[] | final state digest 32 bytes
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::DatasetError;
use crate::cardgen::{generate_pool, GeneratorParams};
use crate::engine::{GameState, Outcome};
use crate::eval::MatchResult;

pub const MATCH_LOG_MAGIC: &[u8; 5] = b"LCML1";
const MATCH_LOG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct MatchLog {
    pub generator: GeneratorParams,
    pub matches: Vec<MatchResult>,
}

pub fn write_match_log(log: &MatchLog, path: &Path) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    out.extend_from_slice(MATCH_LOG_MAGIC);
    out.extend_from_slice(&MATCH_LOG_VERSION.to_le_bytes());
    let params = serde_json::to_string(&log.generator).expect("params serialize");
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    out.extend_from_slice(params.as_bytes());
    out.extend_from_slice(&(log.matches.len() as u64).to_le_bytes());
    for m in &log.matches {
        for v in [m.match_id, m.pool_seed, m.game_seed, m.agent_seed] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(match m.outcome {
            Outcome::P1Win => 1,
            Outcome::P2Win => 2,
            Outcome::Draw => 3,
        });
        out.push(m.forfeit.map_or(0, |s| s as u8 + 1));
        out.extend_from_slice(&(m.actions.len() as u32).to_le_bytes());
        for a in &m.actions {
            out.extend_from_slice(&a.to_le_bytes());
        }
        out.extend_from_slice(&m.digest);
    }
    fs::write(path, out)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DatasetError> {
        if self.bytes.len() - self.pos < n {
            return Err(DatasetError::Format("truncated match log".into()));
        }
        self.pos += n;
        Ok(&self.bytes[self.pos - n..self.pos])
    }
    fn u8(&mut self) -> Result<u8, DatasetError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, DatasetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }
    fn u64(&mut self) -> Result<u64, DatasetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
}

pub fn read_match_log(path: &Path) -> Result<MatchLog, DatasetError> {
    let bytes = fs::read(path)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(5)? != MATCH_LOG_MAGIC {
        return Err(DatasetError::Format("bad match log magic".into()));
    }
    let version = c.u32()?;
    if version != MATCH_LOG_VERSION {
        return Err(DatasetError::Format(format!("unsupported match log version {version}")));
    }
    let len = c.u32()? as usize;
    let generator: GeneratorParams =
        serde_json::from_slice(c.take(len)?).map_err(|e| DatasetError::Format(format!("generator params: {e}")))?;
    let count = c.u64()?;
    let mut matches = Vec::new();
    for _ in 0..count {
        let (match_id, pool_seed, game_seed, agent_seed) = (c.u64()?, c.u64()?, c.u64()?, c.u64()?);
        let outcome = match c.u8()? {
            1 => Outcome::P1Win,
            2 => Outcome::P2Win,
            3 => Outcome::Draw,
            o => return Err(DatasetError::Format(format!("bad outcome code {o}"))),
        };
        let forfeit = match c.u8()? {
            0 => None,
            s @ 1..=2 => Some(s as usize - 1),
            s => return Err(DatasetError::Format(format!("bad forfeit code {s}"))),
        };
        let n = c.u32()? as usize;
        let raw = c.take(n * 2)?;
        let actions = raw.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect();
        let digest = c.take(32)?.try_into().expect("32 bytes");
        matches.push(MatchResult {
            match_id,
            pool_seed,
            game_seed,
            agent_seed,
            outcome,
            forfeit,
            fault: None,
            actions,
            digest,
        });
    }
    if c.pos != bytes.len() {
        return Err(DatasetError::Format("trailing bytes in match log".into()));
    }
    Ok(MatchLog { generator, matches })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    pub match_id: u64,
    pub actions: usize,
    /// `None` when the replay reproduced the recorded final state.
    pub mismatch: Option<String>,
}

impl ReplayReport {
    pub fn verified(&self) -> bool {
        self.mismatch.is_none()
    }
}

/// Re-executes a recorded match on a regenerated pool and compares the final state.
pub fn replay_match(generator: &GeneratorParams, record: &MatchResult) -> ReplayReport {
    let report = |mismatch: Option<String>| ReplayReport {
        match_id: record.match_id,
        actions: record.actions.len(),
        mismatch,
    };
    let pool = Arc::new(generate_pool(record.pool_seed, generator));
    let mut state = match GameState::new(pool, record.game_seed) {
        Ok(s) => s,
        Err(e) => return report(Some(e.to_string())),
    };
    for (k, &a) in record.actions.iter().enumerate() {
        if let Err(e) = state.apply_action(a as usize) {
            return report(Some(format!("action {k} ({a}): {e}")));
        }
    }
    let expected = if record.forfeit.is_some() { None } else { Some(record.outcome) };
    if state.outcome != expected {
        return report(Some(format!("outcome {:?}, recorded {:?}", state.outcome, expected)));
    }
    if state.digest() != record.digest {
        return report(Some("final state digest differs".into()));
    }
    report(None)
}
