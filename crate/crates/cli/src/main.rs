//! `superlight`: run scenarios, check the equilibrium theorems, and poke at
//! Merkle proofs and chain predicates. Exit codes: 0 success, 1 verdict or
//! runtime failure, 2 usage or input error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;

use superlight::chain::{build_mt, gen_mtp, vrfy_mtp, MerkleProof, Transaction};
use superlight::codec::{Decoder, Encoder};
use superlight::crypto::{hash, Digest};
use superlight::game::{check_theorem, params_from_pairs, CheckOptions, PfnMode};
use superlight::golden::{check_hash_vectors, check_scenario};
use superlight::money::{parse_rational, Money};
use superlight::predicate::{evaluate, validate_true_bytes, ChainPredicate, Evaluation};
use superlight::sim::{parse_query, run_scenario, trace_to_string, ScenarioConfig, SimError, World};

#[derive(Parser)]
#[command(name = "superlight", version, about = "Rational superlight client simulator and equilibrium checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and print its report.
    Run {
        config: PathBuf,
        /// Write the trace here instead of standard output.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check an equilibrium theorem (1 two relays, 2 one relay, 3 with a public full node).
    Check(CheckArgs),
    /// Merkle tree utilities over hex payloads.
    #[command(subcommand)]
    Merkle(MerkleCmd),
    /// Evaluate or validate a chain predicate on a scenario's chain.
    #[command(subcommand)]
    Predicate(PredicateCmd),
    /// Run the bundled golden suites.
    Selftest,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    theorem: u8,
    /// Parameters as key=value, repeated or comma separated: p, e, r, d_L, d_F, c, v, v1, v2, v_i, rho.
    #[arg(long = "params", value_delimiter = ',')]
    params: Vec<String>,
    #[arg(long, default_value_t = 1)]
    k: u64,
    /// Tremble size.
    #[arg(long, default_value = "1/1000000")]
    eta: String,
    /// Deviation tolerance.
    #[arg(long, default_value = "0")]
    tol: String,
    /// Pin the public full node to idle (theorem 3 only).
    #[arg(long)]
    pfn_idle: bool,
    /// Use the stage decomposition even when the full tree is small.
    #[arg(long)]
    staged: bool,
}

#[derive(Subcommand)]
enum MerkleCmd {
    /// Print the root over the payloads.
    Build { payloads: Vec<String> },
    /// Print the inclusion proof of payload `index`.
    Prove { index: usize, payloads: Vec<String> },
    /// Print 1 if `proof` links `payload` to `root`, else 0.
    Verify { root: String, payload: String, proof: String },
}

#[derive(Args)]
struct ChainArgs {
    /// Scenario config whose initial chain is used; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Height bound N; defaults to the tip.
    #[arg(long)]
    n: Option<u64>,
}

#[derive(Subcommand)]
enum PredicateCmd {
    /// Print "bottom" or "proof <sigma hex>".
    Evaluate {
        /// txid:<hex>, all:<hex>,<hex>... or inflow:<party>:<threshold>:<ell>
        query: String,
        #[command(flatten)]
        chain: ChainArgs,
    },
    /// Print 1 if sigma proves the predicate against the chain's blockhashes, else 0.
    Validate {
        query: String,
        sigma: String,
        #[command(flatten)]
        chain: ChainArgs,
    },
}

/// `println!` that stops quietly when the reader has gone away, as with
/// `superlight run cfg | head`.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        if writeln!(std::io::stdout(), $($arg)*).is_err() {
            std::process::exit(0);
        }
    }};
}

/// Failure split by exit code.
enum Fail {
    Verdict(anyhow::Error),
    Input(anyhow::Error),
}

impl From<anyhow::Error> for Fail {
    fn from(e: anyhow::Error) -> Self {
        Fail::Input(e)
    }
}

fn unhex(s: &str) -> anyhow::Result<Vec<u8>> {
    hex::decode(s).map_err(|_| anyhow!("'{s}' is not hex"))
}

fn payloads(hexes: &[String]) -> anyhow::Result<Vec<Transaction>> {
    if hexes.is_empty() {
        return Err(anyhow!("no payloads given"));
    }
    hexes.iter().map(|h| unhex(h).map(Transaction::new)).collect()
}

fn load_config(path: &PathBuf) -> anyhow::Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.parse().map_err(|e| anyhow!("{}: {e}", path.display()))
}

fn cmd_run(config: PathBuf, trace: Option<PathBuf>, seed: Option<u64>) -> Result<(), Fail> {
    let mut cfg = load_config(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (events, report) = run_scenario(&cfg).map_err(|e| match e {
        SimError::Runtime(_) => Fail::Verdict(e.into()),
        _ => Fail::Input(e.into()),
    })?;
    let text = trace_to_string(&events);
    match trace {
        Some(p) => fs::write(&p, text).with_context(|| format!("cannot write {}", p.display())).map_err(Fail::Verdict)?,
        None => out!("{}", text.trim_end_matches('\n')),
    }
    for line in report.lines() {
        out!("{line}");
    }
    Ok(())
}

fn cmd_check(a: CheckArgs) -> Result<(), Fail> {
    let pairs = a
        .params
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.split_once('=').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| anyhow!("parameters must be key=value"))?;
    let (money, econ) = params_from_pairs(a.theorem, &pairs).map_err(|e| anyhow!(e))?;
    let eta: BigRational = parse_rational(&a.eta).ok_or_else(|| anyhow!("bad eta '{}'", a.eta))?;
    let tol: Money = a.tol.parse().map_err(|e| anyhow!("bad tol: {e}"))?;
    let opts = CheckOptions {
        eta,
        tol,
        pfn: if a.pfn_idle { PfnMode::ForcedIdle } else { PfnMode::Strategic },
        staged: a.staged,
    };
    let report = check_theorem(a.theorem, money, econ, a.k, opts).map_err(|e| anyhow!(e))?;
    for line in report.lines() {
        out!("{line}");
    }
    if report.as_predicted() {
        Ok(())
    } else {
        Err(Fail::Verdict(anyhow!("verdict differs from the conditions' prediction")))
    }
}

fn cmd_merkle(cmd: MerkleCmd) -> Result<(), Fail> {
    match cmd {
        MerkleCmd::Build { payloads: p } => {
            let mt = build_mt(&payloads(&p)?).map_err(|e| anyhow!(e))?;
            out!("{}", mt.root());
        }
        MerkleCmd::Prove { index, payloads: p } => {
            let txs = payloads(&p)?;
            let tx = txs.get(index).ok_or_else(|| anyhow!("index {index} out of range for {} payloads", txs.len()))?;
            let mt = build_mt(&txs).map_err(|e| anyhow!(e))?;
            let proof = gen_mtp(&mt, tx).map_err(|e| anyhow!(e))?;
            let mut enc = Encoder::new();
            proof.encode(&mut enc);
            out!("{}", hex::encode(enc.finish()));
        }
        MerkleCmd::Verify { root, payload, proof } => {
            let root: Digest = root.parse().map_err(|_| anyhow!("bad root '{root}'"))?;
            let leaf = hash(&unhex(&payload)?);
            let bytes = unhex(&proof)?;
            let mut dec = Decoder::new(&bytes);
            let ok = MerkleProof::decode(&mut dec)
                .ok()
                .filter(|_| dec.remaining() == 0)
                .is_some_and(|p| vrfy_mtp(&root, &p, &leaf));
            out!("{}", u8::from(ok));
        }
    }
    Ok(())
}

fn predicate_world(query: &str, chain: &ChainArgs) -> anyhow::Result<(World, ChainPredicate)> {
    let cfg = match &chain.config {
        Some(p) => load_config(p)?,
        None => ScenarioConfig::new(superlight::contract::IncentiveKind::TwoRelayBasic),
    };
    let world = World::new(&cfg)?;
    let tip = world.chain.tip_height().ok_or_else(|| anyhow!("empty chain"))?;
    let (spec, ell) = parse_query(query).map_err(|e| anyhow!(e))?;
    let pred = ChainPredicate::new(spec, ell, chain.n.unwrap_or(tip))?;
    Ok((world, pred))
}

fn cmd_predicate(cmd: PredicateCmd) -> Result<(), Fail> {
    match cmd {
        PredicateCmd::Evaluate { query, chain } => {
            let (world, pred) = predicate_world(&query, &chain)?;
            match evaluate(&pred, &world.chain).map_err(|e| anyhow!(e))? {
                Evaluation::Bottom => out!("bottom"),
                Evaluation::Proof(sigma) => out!("proof {}", hex::encode(sigma.to_bytes())),
            }
        }
        PredicateCmd::Validate { query, sigma, chain } => {
            let (world, pred) = predicate_world(&query, &chain)?;
            let ok = validate_true_bytes(&unhex(&sigma)?, &pred, &world.chain.blockhashes);
            out!("{}", u8::from(ok));
        }
    }
    Ok(())
}

const SCENARIOS: [(&str, &str, &str); 3] = [
    (
        "honest_two_relay",
        include_str!("../../../scenarios/honest_two_relay.cfg"),
        include_str!("../../../scenarios/golden/honest_two_relay.trace"),
    ),
    (
        "cheating_two_relay",
        include_str!("../../../scenarios/cheating_two_relay.cfg"),
        include_str!("../../../scenarios/golden/cheating_two_relay.trace"),
    ),
    (
        "augmented_debate",
        include_str!("../../../scenarios/augmented_debate.cfg"),
        include_str!("../../../scenarios/golden/augmented_debate.trace"),
    ),
];

fn cmd_selftest() -> Result<(), Fail> {
    let mut failed = 0;
    let mut report = |suite: &str, r: Result<String, String>| match r {
        Ok(detail) => out!("selftest suite={suite} pass=true {detail}"),
        Err(e) => {
            failed += 1;
            out!("selftest suite={suite} pass=false error={e}");
        }
    };
    report(
        "hash_vectors",
        check_hash_vectors(include_str!("../../../scenarios/golden/hash_vectors.txt")).map(|n| format!("vectors={n}")),
    );
    for (name, cfg, golden) in SCENARIOS {
        report(name, check_scenario(cfg, golden).map(|()| "trace=identical".to_string()));
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(Fail::Verdict(anyhow!("{failed} suite(s) failed")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, trace, seed } => cmd_run(config, trace, seed),
        Command::Check(a) => cmd_check(a),
        Command::Merkle(m) => cmd_merkle(m),
        Command::Predicate(p) => cmd_predicate(p),
        Command::Selftest => cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail::Verdict(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Fail::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
