//! Deterministic synchronous-round simulator wiring chain, contract and actors.
//!
//! One round is one block height. Transmitted messages take exactly `ΔT`
//! rounds; contract state changes are seen by relays and the public full node
//! in the round they happen. Each round appends a block, delivers due messages,
//! fires contract timers, then steps the actors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::actors::{
    Client, ClientStrategy, Output, OutputRule, Pfn, PfnStrategy, Relay, RelayStrategy, Report, Response,
};
use crate::chain::{generate_chain, random_tx, Chain, PartyId, Transaction};
use crate::contract::{
    ContractEvent, ContractPhase, ContractState, FeedbackBundle, IncentiveKind, PayoutRecord, ProtocolParams,
};
use crate::crypto::{Digest, PubKey, Signature};
use crate::money::{parse_rational, Money};
use crate::predicate::{evaluate, ChainPredicate, Evaluation, PredicateSpec, TruthProof};
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Economic factors: `c`, `v`, `v_1`, `v_2`, `ρ` (ε is fixed to 0).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EconomicParams {
    pub c: Money,
    pub v: Money,
    pub v1: Money,
    pub v2: Money,
    pub rho: BigRational,
    pub no_common_conflict: bool,
}

impl Default for EconomicParams {
    fn default() -> Self {
        EconomicParams {
            c: Money::from_int(6),
            v: Money::from_int(20),
            v1: Money::from_int(5),
            v2: Money::from_int(5),
            rho: BigRational::new(1.into(), 2.into()),
            no_common_conflict: false,
        }
    }
}

impl EconomicParams {
    pub fn v_of(&self, seat: usize) -> &Money {
        if seat == 1 {
            &self.v1
        } else {
            &self.v2
        }
    }
}

/// How each query's predicate is built from planted transactions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QueryKind {
    Txid,
    AllTxids,
    Inflow,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub mode: IncentiveKind,
    pub params: ProtocolParams,
    pub econ: EconomicParams,
    pub num_blocks: usize,
    pub txs_per_block: usize,
    /// Extra payloads planted at seeded heights, for explicit queries.
    pub planted: Vec<Vec<u8>>,
    pub query_kind: QueryKind,
    /// Scripted ground truths; drawn with probability `ρ` when absent.
    pub truths: Option<Vec<bool>>,
    /// Explicit predicates by query index (1-based), overriding generation.
    pub queries: BTreeMap<u64, (PredicateSpec, usize)>,
    pub relays: Vec<RelayStrategy>,
    pub client: ClientStrategy,
    /// Number of queries after which the client aborts.
    pub abort_after: Option<u64>,
    pub pfn: Option<PfnStrategy>,
    pub balances: BTreeMap<PartyId, Money>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(mode: IncentiveKind) -> Self {
        ScenarioConfig {
            mode,
            params: ProtocolParams {
                k: 2,
                p: Money::from_int(4),
                e: Money::from_int(1),
                r: Money::zero(),
                d_l: Money::from_int(10),
                d_f: Money::from_int(10),
                delta_t: 1,
            },
            econ: EconomicParams::default(),
            num_blocks: 16,
            txs_per_block: 4,
            planted: Vec::new(),
            query_kind: QueryKind::Txid,
            truths: None,
            queries: BTreeMap::new(),
            relays: vec![RelayStrategy::Honest; mode.relay_count()],
            client: ClientStrategy::honest(),
            abort_after: None,
            pfn: (mode == IncentiveKind::OneRelayAugmented).then_some(PfnStrategy::Monitor { debate_on_cheat: true }),
            balances: BTreeMap::new(),
            seed: 0,
        }
    }

    pub fn m(&self) -> usize {
        self.mode.relay_count()
    }

    /// Starting balance of `party`: configured, or exactly what it must lock.
    pub fn balance_of(&self, party: &PartyId) -> Money {
        if let Some(b) = self.balances.get(party) {
            return b.clone();
        }
        let k = self.params.k as i64;
        if *party == PartyId::client() {
            (&self.params.d_l + &(&self.params.p + &self.params.e)).times(k)
        } else if party.as_str().starts_with('R') {
            self.params.d_f.times(k)
        } else {
            Money::zero()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.params.check()?;
        if self.relays.len() != self.m() {
            return Err(format!("mode {} needs {} relay strategies", self.mode.name(), self.m()));
        }
        if self.num_blocks == 0 {
            return Err("chain.num_blocks must be at least 1".into());
        }
        if self.econ.rho < BigRational::zero() || self.econ.rho > BigRational::one() {
            return Err("econ.rho must lie in [0, 1]".into());
        }
        for (name, v) in [("econ.c", &self.econ.c), ("econ.v", &self.econ.v), ("econ.v1", &self.econ.v1), ("econ.v2", &self.econ.v2)] {
            if v.is_negative() {
                return Err(format!("{name} must be non-negative"));
            }
        }
        if self.econ.no_common_conflict && !self.econ.v1.is_zero() && !self.econ.v2.is_zero() {
            return Err("econ.no_common_conflict requires v1 = 0 or v2 = 0".into());
        }
        if let Some(t) = &self.truths {
            if t.len() as u64 != self.params.k {
                return Err(format!("queries.truths lists {} values, k = {}", t.len(), self.params.k));
            }
        }
        if let Some(q) = self.queries.keys().find(|q| **q == 0 || **q > self.params.k) {
            return Err(format!("queries.{q} is outside 1..=k"));
        }
        for (i, s) in self.relays.iter().enumerate() {
            if let RelayStrategy::ColludePartner(p) = s {
                if self.m() != 2 || *p == i + 1 || *p == 0 || *p > 2 {
                    return Err("collude needs a two-relay contract".into());
                }
                if matches!(self.relays[p - 1], RelayStrategy::ColludePartner(_)) {
                    return Err("both relays cannot follow each other".into());
                }
            }
        }
        if self.m() == 1 && matches!(self.client.report, Report::Left | Report::Right) {
            return Err("report left/right needs two relays".into());
        }
        if self.pfn.is_some() && self.mode != IncentiveKind::OneRelayAugmented {
            return Err("strategies.pfn only applies to the augmented mode".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: key '{key}': {message}")]
pub struct ConfigError {
    pub line: usize,
    pub key: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Parse(#[from] ConfigError),
    #[error("runtime fault: {0}")]
    Runtime(String),
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, got '{s}'")),
    }
}

fn parse_hex_digest(s: &str) -> Result<Digest, String> {
    s.parse::<Digest>().map_err(|_| format!("'{s}' is not a 32-octet hex digest"))
}

/// `txid:<hex>`, `all:<hex>,<hex>,...` or `inflow:<party>:<threshold>:<ell>`.
pub fn parse_query(s: &str) -> Result<(PredicateSpec, usize), String> {
    let (kind, rest) = s.split_once(':').ok_or("expected <kind>:<args>")?;
    let (spec, ell) = match kind {
        "txid" => (PredicateSpec::TxidEquals(parse_hex_digest(rest)?), 1),
        "all" => {
            let set = rest.split(',').map(|d| parse_hex_digest(d.trim())).collect::<Result<BTreeSet<_>, _>>()?;
            let n = set.len();
            (PredicateSpec::AllTxidsPresent(set), n)
        }
        "inflow" => {
            let parts: Vec<&str> = rest.split(':').collect();
            let [party, threshold, ell] = parts.as_slice() else {
                return Err("expected inflow:<party>:<threshold>:<ell>".into());
            };
            let threshold: Money = threshold.parse().map_err(|e| format!("{e}"))?;
            let ell: usize = ell.parse().map_err(|_| format!("bad ell '{ell}'"))?;
            (PredicateSpec::InflowAtLeast { address: PartyId::new(*party), threshold }, ell)
        }
        _ => return Err(format!("unknown query kind '{kind}'")),
    };
    ChainPredicate::new(spec.clone(), ell, 0).map_err(|e| e.to_string())?;
    Ok((spec, ell))
}

impl FromStr for ScenarioConfig {
    type Err = ConfigError;

    /// Flat `key = value` lines with dotted sections; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self, ConfigError> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        let mut seen = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError { line, key: content.into(), message: "expected key = value".into() });
            };
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if !seen.insert(key.clone()) {
                return Err(ConfigError { line, key, message: "duplicate key".into() });
            }
            entries.push((line, key, value));
        }
        let mode = match entries.iter().find(|(_, k, _)| k == "mode") {
            None => IncentiveKind::TwoRelayBasic,
            Some((line, key, v)) => match v.as_str() {
                "two_relay" => IncentiveKind::TwoRelayBasic,
                "one_relay" => IncentiveKind::OneRelayBasic,
                "augmented" => IncentiveKind::OneRelayAugmented,
                _ => {
                    return Err(ConfigError {
                        line: *line,
                        key: key.clone(),
                        message: format!("unknown mode '{v}' (two_relay, one_relay, augmented)"),
                    })
                }
            },
        };
        let mut cfg = ScenarioConfig::new(mode);
        let mut relays: Vec<Option<RelayStrategy>> = vec![None; cfg.m()];
        let mut last_line = 0;
        for (line, key, value) in &entries {
            last_line = *line;
            let err = |message: String| ConfigError { line: *line, key: key.clone(), message };
            let money = || value.parse::<Money>().map_err(|e| err(e.to_string()));
            let int = || value.parse::<u64>().map_err(|_| err(format!("expected a non-negative integer, got '{value}'")));
            match key.as_str() {
                "mode" => {}
                "k" => cfg.params.k = int()?,
                "p" => cfg.params.p = money()?,
                "e" => cfg.params.e = money()?,
                "r" => cfg.params.r = money()?,
                "d_L" => cfg.params.d_l = money()?,
                "d_F" => cfg.params.d_f = money()?,
                "delta_T" => cfg.params.delta_t = int()?,
                "seed" => cfg.seed = int()?,
                "econ.c" => cfg.econ.c = money()?,
                "econ.v" => cfg.econ.v = money()?,
                "econ.v1" => cfg.econ.v1 = money()?,
                "econ.v2" => cfg.econ.v2 = money()?,
                "econ.rho" => cfg.econ.rho = parse_rational(value).ok_or_else(|| err(format!("expected a probability, got '{value}'")))?,
                "econ.no_common_conflict" => cfg.econ.no_common_conflict = parse_bool(value).map_err(err)?,
                "chain.num_blocks" => cfg.num_blocks = int()? as usize,
                "chain.txs_per_block" => cfg.txs_per_block = int()? as usize,
                "chain.planted" => {
                    cfg.planted = value
                        .split(',')
                        .map(|h| hex::decode(h.trim()).map_err(|_| err(format!("'{h}' is not hex"))))
                        .collect::<Result<_, _>>()?
                }
                "queries.kind" => {
                    cfg.query_kind = match value.as_str() {
                        "txid" => QueryKind::Txid,
                        "all" => QueryKind::AllTxids,
                        "inflow" => QueryKind::Inflow,
                        _ => return Err(err(format!("unknown query kind '{value}' (txid, all, inflow)"))),
                    }
                }
                "queries.truths" => {
                    cfg.truths = Some(value.split(',').map(|t| parse_bool(t.trim())).collect::<Result<_, _>>().map_err(err)?)
                }
                "strategies.client.report" => cfg.client.report = value.parse().map_err(|e: crate::actors::StrategyParseError| err(e.to_string()))?,
                "strategies.client.output" => {
                    cfg.client.output = value.parse::<OutputRule>().map_err(|e| err(e.to_string()))?
                }
                "strategies.client.abort_after" => cfg.abort_after = Some(int()?),
                "strategies.pfn" => cfg.pfn = Some(value.parse().map_err(|e: crate::actors::StrategyParseError| err(e.to_string()))?),
                _ => {
                    if let Some(q) = key.strip_prefix("queries.") {
                        let q: u64 = q.parse().map_err(|_| err("unknown key".into()))?;
                        cfg.queries.insert(q, parse_query(value).map_err(err)?);
                    } else if let Some(seat) = key.strip_prefix("strategies.relay") {
                        let seat: usize = seat.parse().map_err(|_| err("unknown key".into()))?;
                        if seat == 0 || seat > relays.len() {
                            return Err(err(format!("mode {} has no relay {seat}", mode.name())));
                        }
                        let mut s: RelayStrategy = value.parse().map_err(|e: crate::actors::StrategyParseError| err(e.to_string()))?;
                        if let RelayStrategy::ColludePartner(_) = s {
                            s = RelayStrategy::ColludePartner(3 - seat);
                        }
                        relays[seat - 1] = Some(s);
                    } else if let Some(party) = key.strip_prefix("balance.") {
                        cfg.balances.insert(PartyId::new(party), money()?);
                    } else {
                        return Err(err("unknown key".into()));
                    }
                }
            }
        }
        cfg.relays = relays.into_iter().map(|s| s.unwrap_or(RelayStrategy::Honest)).collect();
        if !entries.iter().any(|(_, k, _)| k == "strategies.pfn") && mode != IncentiveKind::OneRelayAugmented {
            cfg.pfn = None;
        }
        cfg.validate().map_err(|message| ConfigError { line: last_line, key: "(config)".into(), message })?;
        Ok(cfg)
    }
}

/// One trace line: `T=<round> actor=<id> kind=<event> k=v ...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimEvent {
    pub round: u64,
    pub actor: String,
    pub kind: String,
    pub fields: Vec<(String, String)>,
}

impl SimEvent {
    pub fn new(round: u64, actor: impl Into<String>, kind: impl Into<String>) -> Self {
        SimEvent { round, actor: actor.into(), kind: kind.into(), fields: Vec::new() }
    }

    pub fn with(mut self, key: impl Into<String>, value: impl fmt::Display) -> Self {
        self.fields.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn parse(line: &str) -> Option<SimEvent> {
        let mut parts = line.split(' ');
        let round = parts.next()?.strip_prefix("T=")?.parse().ok()?;
        let actor = parts.next()?.strip_prefix("actor=")?.to_string();
        let kind = parts.next()?.strip_prefix("kind=")?.to_string();
        let fields = parts
            .map(|p| p.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect::<Option<Vec<_>>>()?;
        Some(SimEvent { round, actor, kind, fields })
    }
}

impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T={} actor={} kind={}", self.round, self.actor, self.kind)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

pub fn trace_to_string(trace: &[SimEvent]) -> String {
    trace.iter().map(|e| format!("{e}\n")).collect()
}

/// One query as reconstructed from the trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryRecord {
    pub query: u64,
    pub truth: bool,
    pub output: Option<Output>,
    pub lock: Money,
    pub clause: Option<String>,
    pub credits: BTreeMap<PartyId, Money>,
    pub burn: Money,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimReport {
    pub queries: Vec<QueryRecord>,
    pub balances: BTreeMap<PartyId, Money>,
    pub utilities: BTreeMap<PartyId, Money>,
    pub expired: bool,
}

impl SimReport {
    /// Rebuilds the report from trace lines alone.
    pub fn from_trace(trace: &[SimEvent], econ: &EconomicParams) -> Result<SimReport, String> {
        let mut queries: BTreeMap<u64, QueryRecord> = BTreeMap::new();
        let mut balances = BTreeMap::new();
        let mut expired = false;
        let qnum = |e: &SimEvent| -> Result<u64, String> {
            e.get("q").ok_or_else(|| format!("event '{e}' lacks q"))?.parse().map_err(|_| format!("bad q in '{e}'"))
        };
        let money = |s: &str| s.parse::<Money>().map_err(|e| e.to_string());
        for ev in trace {
            match (ev.actor.as_str(), ev.kind.as_str()) {
                ("chance", "truth") => {
                    let q = qnum(ev)?;
                    queries.insert(
                        q,
                        QueryRecord {
                            query: q,
                            truth: ev.get("value") == Some("true"),
                            output: None,
                            lock: Money::zero(),
                            clause: None,
                            credits: BTreeMap::new(),
                            burn: Money::zero(),
                        },
                    );
                }
                ("LW", "request") => {
                    let rec = queries.get_mut(&qnum(ev)?).ok_or("request before truth")?;
                    rec.lock = money(ev.get("lock").ok_or("request lacks lock")?)?;
                }
                ("LW", "output") => {
                    let rec = queries.get_mut(&qnum(ev)?).ok_or("output before truth")?;
                    rec.output = Some(match ev.get("value") {
                        Some("A") => Output::True,
                        Some("A'") => Output::False,
                        Some("O") => Output::None,
                        other => return Err(format!("bad output {other:?}")),
                    });
                }
                ("G_ac", "payout") => {
                    let rec = queries.get_mut(&qnum(ev)?).ok_or("payout before truth")?;
                    rec.clause = ev.get("clause").map(str::to_string);
                    for (k, v) in &ev.fields {
                        match k.as_str() {
                            "q" | "clause" => {}
                            "burn" => rec.burn = money(v)?,
                            party => {
                                rec.credits.insert(PartyId::new(party), money(v)?);
                            }
                        }
                    }
                }
                ("G_ac", "expired") => expired = true,
                ("sim", "balances") => {
                    for (k, v) in &ev.fields {
                        balances.insert(PartyId::new(k.as_str()), money(v)?);
                    }
                }
                _ => {}
            }
        }
        let setup = trace.iter().find(|e| e.actor == "sim" && e.kind == "setup").ok_or("trace lacks setup")?;
        let m: usize = setup.get("m").ok_or("setup lacks m")?.parse().map_err(|_| "bad m")?;
        let d_l = money(setup.get("d_L").ok_or("setup lacks d_L")?)?;
        let mut parties = vec![PartyId::client()];
        parties.extend((1..=m).map(PartyId::relay));
        if setup.get("pfn").is_some() {
            parties.push(PartyId::pfn());
        }
        let mut utilities: BTreeMap<PartyId, Money> = parties.iter().map(|p| (p.clone(), Money::zero())).collect();
        for rec in queries.values() {
            for (party, u) in utilities.iter_mut() {
                *u += rec.credits.get(party).cloned().unwrap_or_default();
            }
            let lw = utilities.get_mut(&PartyId::client()).expect("client present");
            *lw -= &rec.lock;
            let output = rec.output.unwrap_or(Output::None);
            if output == Output::None {
                *lw -= &econ.c;
            }
            if output.is_fooled(rec.truth) {
                *lw -= &econ.v;
                for seat in 1..=m {
                    *utilities.get_mut(&PartyId::relay(seat)).expect("relay present") += econ.v_of(seat);
                }
            }
        }
        if expired {
            *utilities.get_mut(&PartyId::client()).expect("client present") += &d_l;
        }
        Ok(SimReport { queries: queries.into_values().collect(), balances, utilities, expired })
    }
}

impl SimReport {
    /// Queries whose output matched the ground truth.
    pub fn correct_outputs(&self) -> usize {
        self.queries
            .iter()
            .filter(|q| matches!((q.output, q.truth), (Some(Output::True), true) | (Some(Output::False), false)))
            .count()
    }

    /// The report in trace-line format.
    pub fn lines(&self) -> Vec<SimEvent> {
        let mut out = Vec::new();
        for q in &self.queries {
            let mut ev = SimEvent::new(0, "report", "query")
                .with("q", q.query)
                .with("truth", q.truth)
                .with("output", q.output.map_or("-".to_string(), |o| o.to_string()))
                .with("clause", q.clause.as_deref().unwrap_or("-"));
            for (party, c) in &q.credits {
                ev = ev.with(party.as_str(), c);
            }
            out.push(ev.with("burn", &q.burn));
        }
        let mut bal = SimEvent::new(0, "report", "balances");
        for (party, b) in &self.balances {
            bal = bal.with(party.as_str(), b);
        }
        out.push(bal);
        let mut util = SimEvent::new(0, "report", "utilities");
        for (party, u) in &self.utilities {
            util = util.with(party.as_str(), u);
        }
        out.push(util);
        out.push(
            SimEvent::new(0, "report", "summary")
                .with("queries", self.queries.len())
                .with("correct", self.correct_outputs())
                .with("expired", self.expired),
        );
        out
    }
}

/// `account_utilities`: the per-party utility of a complete trace.
pub fn account_utilities(trace: &[SimEvent], econ: &EconomicParams) -> Result<BTreeMap<PartyId, Money>, String> {
    SimReport::from_trace(trace, econ).map(|r| r.utilities)
}

#[derive(Clone, Debug)]
enum Msg {
    Create,
    Join { seat: usize, pk: PubKey },
    Request { spec: PredicateSpec, ell: usize },
    Feedback(FeedbackBundle),
    Debating { pred: ChainPredicate, sigma: TruthProof },
    Initialized(BTreeMap<usize, PubKey>),
    Response { relay: usize, ctr: u64, result: Vec<u8>, sig: Signature },
}

#[derive(Clone, Debug)]
struct Envelope {
    deliver_at: u64,
    seq: u64,
    from: PartyId,
    to: PartyId,
    msg: Msg,
}

/// A predicate the client will ask, with its ground truth.
#[derive(Clone, Debug)]
struct PlannedQuery {
    spec: PredicateSpec,
    ell: usize,
    truth: bool,
}

/// The whole simulated system.
pub struct World {
    pub now: u64,
    pub chain: Chain,
    pub contract: ContractState,
    pub client: Client,
    pub relays: Vec<Relay>,
    pub pfn: Option<Pfn>,
    pub trace: Vec<SimEvent>,
    pub params: ProtocolParams,
    econ: EconomicParams,
    queue: Vec<Envelope>,
    seq: u64,
    filler_rng: ChaCha8Rng,
    txs_per_block: usize,
    plan: Vec<PlannedQuery>,
    /// Contract events observed this round by relays and the full node.
    observed: Vec<ContractEvent>,
    next_request: Option<u64>,
    requests_sent: u64,
    abort_after: Option<u64>,
    aborted: bool,
    query_period: u64,
}

fn spec_text(spec: &PredicateSpec) -> String {
    match spec {
        PredicateSpec::TxidEquals(d) => format!("txid:{d}"),
        PredicateSpec::AllTxidsPresent(s) => {
            format!("all:{}", s.iter().map(|d| d.to_hex()).collect::<Vec<_>>().join(","))
        }
        PredicateSpec::InflowAtLeast { address, threshold } => format!("inflow:{address}:{threshold}"),
    }
}

impl World {
    pub fn new(cfg: &ScenarioConfig) -> Result<World, SimError> {
        cfg.validate().map_err(SimError::InvalidConfig)?;
        let mut chain_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut chance_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6368_616e_6365);
        let filler_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6669_6c6c_6572);
        let k = cfg.params.k;
        let rho = cfg.econ.rho.clone();
        let truths: Vec<bool> = match &cfg.truths {
            Some(t) => t.clone(),
            None => (0..k)
                .map(|_| {
                    let draw = BigRational::new(chance_rng.gen_range(0..1_000_000u64).into(), 1_000_000u64.into());
                    draw < rho
                })
                .collect(),
        };
        let last = cfg.num_blocks as u64 - 1;
        let mut planted: Vec<(u64, Transaction)> = Vec::new();
        let mut plant = |rng: &mut ChaCha8Rng, tx: Transaction| {
            let h = rng.gen_range(0..=last);
            planted.push((h, tx));
        };
        for payload in &cfg.planted {
            plant(&mut chain_rng, Transaction::new(payload.clone()));
        }
        let tag = |q: u64, i: u64| format!("seed-{}-query-{q}-{i}", cfg.seed).into_bytes();
        let mut generated: Vec<(PredicateSpec, usize)> = Vec::new();
        for q in 1..=k {
            let truth = truths[q as usize - 1];
            let (spec, ell) = match cfg.query_kind {
                QueryKind::Txid => {
                    let tx = Transaction::new(tag(q, 0));
                    let id = tx.txid;
                    if truth {
                        plant(&mut chain_rng, tx);
                    }
                    (PredicateSpec::TxidEquals(id), 1)
                }
                QueryKind::AllTxids => {
                    let a = Transaction::new(tag(q, 0));
                    let b = Transaction::new(tag(q, 1));
                    let ids = BTreeSet::from([a.txid, b.txid]);
                    plant(&mut chain_rng, a);
                    if truth {
                        plant(&mut chain_rng, b);
                    }
                    (PredicateSpec::AllTxidsPresent(ids), 2)
                }
                QueryKind::Inflow => {
                    let address = PartyId::new(format!("acct{q}"));
                    plant(&mut chain_rng, Transaction::payment(&address, &Money::from_int(3), &tag(q, 0)));
                    if truth {
                        plant(&mut chain_rng, Transaction::payment(&address, &Money::from_int(4), &tag(q, 1)));
                    }
                    (PredicateSpec::InflowAtLeast { address, threshold: Money::from_int(7) }, 2)
                }
            };
            generated.push(cfg.queries.get(&q).cloned().unwrap_or((spec, ell)));
        }
        let mut chain = generate_chain(&mut chain_rng, cfg.num_blocks, cfg.txs_per_block, &planted)
            .map_err(|e| SimError::Runtime(e.to_string()))?;
        // Ground truth is the honest evaluation at the current tip; later blocks
        // are filler and cannot change it.
        let plan = generated
            .into_iter()
            .map(|(spec, ell)| {
                let pred = ChainPredicate { ell, n: last, spec: spec.clone() };
                let truth = !evaluate(&pred, &chain).map_err(|e| SimError::Runtime(e.to_string()))?.is_bottom();
                Ok(PlannedQuery { spec, ell, truth })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let mut parties = vec![PartyId::client()];
        parties.extend((1..=cfg.m()).map(PartyId::relay));
        if cfg.pfn.is_some() {
            parties.push(PartyId::pfn());
        }
        for p in parties.iter().chain(cfg.balances.keys()) {
            if chain.ledger.balance(p).is_zero() {
                chain.ledger.endow(p, cfg.balance_of(p));
            }
        }
        let relays = (1..=cfg.m())
            .map(|seat| {
                let strategy = cfg.relays[seat - 1];
                let partner = match strategy {
                    RelayStrategy::ColludePartner(p) => Some(cfg.relays[p - 1]),
                    _ => None,
                };
                Relay::new(seat, cfg.seed.wrapping_mul(31).wrapping_add(seat as u64), strategy, partner)
            })
            .collect();
        Ok(World {
            now: last,
            chain,
            contract: ContractState::new(cfg.mode),
            client: Client::new(cfg.client, cfg.m(), &cfg.params),
            relays,
            pfn: cfg.pfn.map(|strategy| Pfn { strategy }),
            trace: Vec::new(),
            params: cfg.params.clone(),
            econ: cfg.econ.clone(),
            queue: Vec::new(),
            seq: 0,
            filler_rng,
            txs_per_block: cfg.txs_per_block.max(1),
            plan,
            observed: Vec::new(),
            next_request: None,
            requests_sent: 0,
            abort_after: cfg.abort_after,
            aborted: false,
            query_period: 5 * cfg.params.delta_t,
        })
    }

    fn delta_t(&self) -> u64 {
        self.client.delta_t
    }

    fn send(&mut self, from: PartyId, to: PartyId, msg: Msg) {
        self.seq += 1;
        let deliver_at = self.now + self.delta_t();
        self.queue.push(Envelope { deliver_at, seq: self.seq, from, to, msg });
    }

    fn log(&mut self, ev: SimEvent) {
        self.trace.push(ev);
    }

    fn query_index(&self) -> u64 {
        self.requests_sent
    }

    fn record_payout(&mut self, rec: PayoutRecord) {
        let mut ev = SimEvent::new(self.now, "G_ac", "payout").with("q", rec.query).with("clause", rec.clause);
        for (party, amount) in &rec.credits {
            ev = ev.with(party.as_str(), amount);
        }
        ev = ev.with("burn", &rec.burn);
        self.log(ev);
        if self.contract.phase == ContractPhase::Expired {
            self.log(SimEvent::new(self.now, "G_ac", "expired"));
        }
    }

    fn contract_events(&mut self, events: Vec<ContractEvent>) {
        for ev in events {
            match &ev {
                ContractEvent::Deployed { m, .. } => {
                    let e = SimEvent::new(self.now, "G_ac", "deployed").with("m", m).with("ctr", self.contract.ctr);
                    self.log(e);
                }
                ContractEvent::Initialized { pub_keys } => {
                    self.log(SimEvent::new(self.now, "G_ac", "ready"));
                    let keys = pub_keys.clone();
                    self.send(PartyId::contract(), PartyId::client(), Msg::Initialized(keys));
                }
                ContractEvent::Querying { ctr, predicate } => {
                    let e = SimEvent::new(self.now, "G_ac", "querying")
                        .with("q", self.query_index())
                        .with("ctr", ctr)
                        .with("n", predicate.n)
                        .with("t_end", self.contract.t_end.unwrap_or(0));
                    self.log(e);
                }
                ContractEvent::DebateOpened { t_debate, .. } => {
                    let e = SimEvent::new(self.now, "G_ac", "debate_open").with("q", self.query_index()).with("t_debate", t_debate);
                    self.log(e);
                }
            }
            self.observed.push(ev);
        }
    }

    fn reject(&mut self, from: &PartyId, what: &str, err: impl fmt::Display) {
        let e = SimEvent::new(self.now, "G_ac", "reject").with("from", from).with("msg", what).with("reason", format!("{err}").replace(' ', "_"));
        self.log(e);
    }

    fn deliver(&mut self, env: Envelope) {
        let now = self.now;
        let Envelope { from, to, msg, .. } = env;
        if to == PartyId::contract() {
            match msg {
                Msg::Create => {
                    let params = self.params.clone();
                    match self.contract.on_create(&from, params, &mut self.chain.ledger) {
                        Ok(evs) => self.contract_events(evs),
                        Err(e) => self.reject(&from, "create", e),
                    }
                }
                Msg::Join { seat, pk } => match self.contract.on_join(seat, pk, &mut self.chain.ledger) {
                    Ok(evs) => {
                        self.log(SimEvent::new(now, "G_ac", "joined").with("seat", seat));
                        self.contract_events(evs);
                    }
                    Err(e) => self.reject(&from, "join", e),
                },
                Msg::Request { spec, ell } => match self.contract.on_request(&from, spec, ell, now, &mut self.chain.ledger) {
                    Ok(evs) => self.contract_events(evs),
                    Err(e) => self.reject(&from, "request", e),
                },
                Msg::Feedback(bundle) => {
                    let n = bundle.len();
                    match self.contract.on_feedback(&from, bundle) {
                        Ok(()) => {
                            let e = SimEvent::new(now, "G_ac", "feedback_stored").with("q", self.query_index()).with("entries", n);
                            self.log(e);
                        }
                        Err(e) => self.reject(&from, "feedback", e),
                    }
                }
                Msg::Debating { pred, sigma } => {
                    match self.contract.on_debate(&pred, &sigma, &mut self.chain.ledger, &self.chain.blockhashes) {
                        Ok(rec) => self.record_payout(rec),
                        Err(e) => self.reject(&from, "debating", e),
                    }
                }
                Msg::Initialized(_) | Msg::Response { .. } => self.reject(&from, "misrouted", "not a contract message"),
            }
        } else if to == PartyId::client() {
            match msg {
                Msg::Initialized(keys) => {
                    self.client.on_initialized(keys);
                    self.log(SimEvent::new(now, "LW", "initialized").with("relays", self.client.pub_keys.len()));
                    self.next_request = Some(now);
                }
                Msg::Response { relay, ctr, result, sig } => {
                    let accepted = self.client.on_response(now, relay, ctr, result, sig);
                    let e = SimEvent::new(now, "LW", "response").with("q", self.query_index()).with("from", PartyId::relay(relay)).with("recorded", accepted);
                    self.log(e);
                }
                _ => {}
            }
        }
    }

    /// Appends a block, delivers due messages, fires timers, steps actors.
    pub fn advance_round(&mut self) -> Result<(), SimError> {
        let txs = (0..self.txs_per_block).map(|_| random_tx(&mut self.filler_rng)).collect();
        self.chain.append_block(txs).map_err(|e| SimError::Runtime(e.to_string()))?;
        self.now += 1;
        self.deliver_and_step()
    }

    fn deliver_and_step(&mut self) -> Result<(), SimError> {
        let now = self.now;
        self.queue.sort_by_key(|e| (e.deliver_at, e.seq));
        let (due, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.queue).into_iter().partition(|e| e.deliver_at <= now);
        self.queue = rest;
        for env in due {
            self.deliver(env);
        }
        if matches!(self.contract.phase, ContractPhase::Querying | ContractPhase::Debating) {
            let (rec, evs) = self
                .contract
                .on_timer(now, &mut self.chain.ledger, &self.chain.blockhashes)
                .map_err(|e| SimError::Runtime(e.to_string()))?;
            self.contract_events(evs);
            if let Some(rec) = rec {
                self.record_payout(rec);
            }
        }
        self.step_actors();
        Ok(())
    }

    fn step_actors(&mut self) {
        let now = self.now;
        for ev in std::mem::take(&mut self.observed) {
            match ev {
                ContractEvent::Deployed { .. } => {
                    for i in 0..self.relays.len() {
                        let (seat, pk) = (self.relays[i].seat, self.relays[i].keys.public);
                        self.send(PartyId::relay(seat), PartyId::contract(), Msg::Join { seat, pk });
                    }
                }
                ContractEvent::Querying { ctr, predicate } => {
                    for i in 0..self.relays.len() {
                        let action = self.relays[i].action_for(&predicate, &self.chain);
                        let resp = self.relays[i].on_querying(ctr, &predicate, &self.chain);
                        let seat = self.relays[i].seat;
                        let mut e = SimEvent::new(now, PartyId::relay(seat).as_str(), "respond").with("q", self.query_index()).with("action", action);
                        match resp {
                            Some(Response { result, sig }) => {
                                let claim = Evaluation::from_bytes(&result).map(|r| !r.is_bottom()).unwrap_or(true);
                                e = e.with("claim", claim);
                                self.log(e);
                                self.send(PartyId::relay(seat), PartyId::client(), Msg::Response { relay: seat, ctr, result, sig });
                            }
                            None => self.log(e.with("claim", "none")),
                        }
                    }
                }
                ContractEvent::DebateOpened { predicate, .. } => {
                    let proof = self.pfn.as_ref().and_then(|p| p.on_observe(&predicate, &self.chain));
                    if let Some(sigma) = proof {
                        self.log(SimEvent::new(now, "PFN", "debate").with("q", self.query_index()));
                        self.send(PartyId::pfn(), PartyId::contract(), Msg::Debating { pred: predicate, sigma });
                    }
                }
                ContractEvent::Initialized { .. } => {}
            }
        }
        if let Some(decision) = self.client.on_feed_deadline(now) {
            let q = self.query_index();
            let e = SimEvent::new(now, "LW", "output").with("q", q).with("value", decision.output);
            self.log(e);
            match decision.feedback {
                Some(bundle) => {
                    self.log(SimEvent::new(now, "LW", "feedback").with("q", q).with("entries", bundle.len()));
                    self.send(PartyId::client(), PartyId::contract(), Msg::Feedback(bundle));
                }
                None => self.log(SimEvent::new(now, "LW", "withhold").with("q", q)),
            }
        }
        if self.next_request == Some(now) {
            self.next_request = None;
            if self.abort_after == Some(self.requests_sent) {
                self.aborted = true;
                self.log(SimEvent::new(now, "LW", "abort").with("after", self.requests_sent));
            } else if let Some(planned) = self.plan.get(self.requests_sent as usize).cloned() {
                if self.client.on_app_request(now).is_ok() {
                    self.requests_sent += 1;
                    let q = self.requests_sent;
                    self.log(SimEvent::new(now, "chance", "truth").with("q", q).with("value", planned.truth));
                    let lock = &self.params.p + &self.params.e;
                    let e = SimEvent::new(now, "LW", "request")
                        .with("q", q)
                        .with("lock", lock)
                        .with("t_feed", self.client.t_feed.unwrap_or(0))
                        .with("pred", spec_text(&planned.spec));
                    self.log(e);
                    self.send(PartyId::client(), PartyId::contract(), Msg::Request { spec: planned.spec, ell: planned.ell });
                    if self.client.ctr_lw > 1 {
                        self.next_request = Some(now + self.query_period);
                    }
                }
            }
        }
    }

    fn quiescent(&self) -> bool {
        self.queue.is_empty()
            && self.next_request.is_none()
            && self.client.t_feed.is_none()
            && !matches!(
                self.contract.phase,
                ContractPhase::Querying | ContractPhase::Debating | ContractPhase::Init | ContractPhase::Created
            )
            || (self.aborted && self.queue.is_empty())
    }
}

/// Runs a scenario to completion: setup, then up to `k` queries.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(Vec<SimEvent>, SimReport), SimError> {
    let mut world = World::new(cfg)?;
    let mut setup = SimEvent::new(world.now, "sim", "setup")
        .with("mode", cfg.mode.name())
        .with("m", cfg.m())
        .with("k", cfg.params.k)
        .with("p", &cfg.params.p)
        .with("e", &cfg.params.e)
        .with("r", &cfg.params.r)
        .with("d_L", &cfg.params.d_l)
        .with("d_F", &cfg.params.d_f)
        .with("delta_T", cfg.params.delta_t)
        .with("seed", cfg.seed);
    if let Some(p) = cfg.pfn {
        setup = setup.with("pfn", if matches!(p, PfnStrategy::Idle) { "idle" } else { "monitor" });
    }
    world.log(setup);
    world.log(SimEvent::new(world.now, "LW", "create"));
    world.send(PartyId::client(), PartyId::contract(), Msg::Create);
    let budget = 16 + (cfg.params.k + 2) * world.query_period * 2;
    for _ in 0..budget {
        world.advance_round()?;
        if world.quiescent() {
            break;
        }
    }
    if !world.quiescent() {
        return Err(SimError::Runtime(format!("scenario did not settle within {budget} rounds")));
    }
    let total = world.chain.ledger.total();
    let mut balances = SimEvent::new(world.now, "sim", "balances");
    for (party, amount) in world.chain.ledger.iter() {
        balances = balances.with(party.as_str(), amount);
    }
    world.log(balances);
    world.log(SimEvent::new(world.now, "sim", "end").with("total", total).with("requests", world.requests_sent));
    let report = SimReport::from_trace(&world.trace, &world.econ).map_err(SimError::Runtime)?;
    Ok((world.trace, report))
}
