//! Conformance stub for the external agent protocol.
//!
//! Usage: `locm-stub-agent [first-legal | die-after N | illegal | slow MS | greedy]`
//!
//! `first-legal` answers every decision with the first legal index. `die-after N` exits after N
//! decisions. `illegal` always answers 144. `slow MS` sleeps before each reply. `greedy` plays
//! the built-in scripted rule.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use locm_core::agents::{Agent, GreedyAgent};
use locm_core::encoding::{Observation, Stage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

enum Mode {
    FirstLegal,
    DieAfter(usize),
    Illegal,
    Slow(u64),
    Greedy,
}

fn parse_mode(args: &[String]) -> Option<Mode> {
    let num = |i: usize| args.get(i).and_then(|s| s.parse::<u64>().ok());
    Some(match args.first().map(String::as_str).unwrap_or("first-legal") {
        "first-legal" => Mode::FirstLegal,
        "die-after" => Mode::DieAfter(num(1)? as usize),
        "illegal" => Mode::Illegal,
        "slow" => Mode::Slow(num(1)?),
        "greedy" => Mode::Greedy,
        _ => return None,
    })
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(mode) = parse_mode(&args) else {
        eprintln!("usage: locm-stub-agent [first-legal | die-after N | illegal | slow MS | greedy]");
        return ExitCode::from(2);
    };
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut decisions = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let Ok(msg) = serde_json::from_str::<Value>(&line) else {
            eprintln!("stub: unparseable line");
            return ExitCode::from(1);
        };
        let reply = match msg["type"].as_str() {
            Some("hello") => json!({"type": "ready", "name": "stub"}),
            Some("reset") => continue,
            Some("act") => {
                if let Mode::DieAfter(n) = mode {
                    if decisions >= n {
                        return ExitCode::from(1);
                    }
                }
                decisions += 1;
                let mask: Vec<bool> =
                    msg["mask"].as_array().map(|a| a.iter().map(|v| v.as_u64() == Some(1)).collect()).unwrap_or_default();
                let first = mask.iter().position(|&m| m).unwrap_or(0);
                let action = match mode {
                    Mode::Illegal => 144,
                    Mode::Slow(ms) => {
                        thread::sleep(Duration::from_millis(ms));
                        first
                    }
                    Mode::Greedy => {
                        let stage = if msg["stage"] == "constructed" { Stage::Constructed } else { Stage::Battle };
                        let values = msg["obs"]
                            .as_array()
                            .map(|a| a.iter().map(|v| v.as_f64().unwrap_or(0.0) as f32).collect())
                            .unwrap_or_default();
                        GreedyAgent.act(&Observation { stage, values }, &mask, &mut rng).unwrap_or(first)
                    }
                    _ => first,
                };
                json!({ "action": action })
            }
            _ => continue,
        };
        if writeln!(out, "{reply}").and_then(|_| out.flush()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
