//! Golden-file checks shared by the command-line self test and the test suite.

use crate::chain::{build_mt, Transaction};
use crate::crypto::{hash, Digest};
use crate::sim::{run_scenario, trace_to_string, ScenarioConfig};

/// Checks `sha256` and `merkle` vector lines; returns how many were checked.
pub fn check_hash_vectors(text: &str) -> Result<usize, String> {
    let mut n = 0;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |msg: &str| format!("line {}: {msg}", idx + 1);
        let f: Vec<&str> = line.split_whitespace().collect();
        let [kind, input, want] = f[..] else { return Err(at("expected three fields")) };
        let want: Digest = want.parse().map_err(|_| at("bad digest"))?;
        let decode = |h: &str| if h == "-" { Ok(Vec::new()) } else { hex::decode(h).map_err(|_| at("bad hex")) };
        let got = match kind {
            "sha256" => hash(&decode(input)?),
            "merkle" => {
                let txs = input.split(',').map(|h| decode(h).map(Transaction::new)).collect::<Result<Vec<_>, _>>()?;
                build_mt(&txs).map_err(|e| at(&e.to_string()))?.root()
            }
            _ => return Err(at("unknown vector kind")),
        };
        if got != want {
            return Err(at(&format!("got {got}, want {want}")));
        }
        n += 1;
    }
    Ok(n)
}

/// Runs a scenario and compares its trace with `golden` line by line.
pub fn check_scenario(config: &str, golden: &str) -> Result<(), String> {
    let cfg: ScenarioConfig = config.parse().map_err(|e| format!("{e}"))?;
    let (trace, _) = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let got = trace_to_string(&trace);
    if got == golden {
        return Ok(());
    }
    for (i, (a, b)) in got.lines().zip(golden.lines()).enumerate() {
        if a != b {
            return Err(format!("line {}: got '{a}', want '{b}'", i + 1));
        }
    }
    Err(format!("length differs: got {} lines, want {}", got.lines().count(), golden.lines().count()))
}
