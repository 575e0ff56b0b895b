//! The arbiter contract as a deterministic state machine, with the three
//! incentive subroutines.
//!
//! Handlers mutate the state only on success; a rejected message leaves state
//! and ledger untouched. Locked funds sit in the [`PartyId::contract`] escrow
//! account. Every settlement pays out of escrow and sends the unpaid remainder
//! of the query's locked funds to [`PartyId::burn_sink`].

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::chain::{ChainError, Ledger, PartyId};
use crate::codec::Encoder;
use crate::crypto::{verify, Digest, PubKey, Signature};
use crate::money::Money;
use crate::predicate::{validate_true, ChainPredicate, Evaluation, PredicateSpec, TruthProof};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IncentiveKind {
    TwoRelayBasic,
    OneRelayBasic,
    OneRelayAugmented,
}

impl IncentiveKind {
    pub fn relay_count(self) -> usize {
        match self {
            IncentiveKind::TwoRelayBasic => 2,
            IncentiveKind::OneRelayBasic | IncentiveKind::OneRelayAugmented => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IncentiveKind::TwoRelayBasic => "two_relay",
            IncentiveKind::OneRelayBasic => "one_relay",
            IncentiveKind::OneRelayAugmented => "augmented",
        }
    }
}

/// Contract parameters fixed at creation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolParams {
    pub k: u64,
    pub p: Money,
    pub e: Money,
    pub r: Money,
    pub d_l: Money,
    pub d_f: Money,
    pub delta_t: u64,
}

impl ProtocolParams {
    pub fn check(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("k must be at least 1".into());
        }
        if self.delta_t == 0 {
            return Err("delta_t must be at least 1".into());
        }
        for (name, v) in [("p", &self.p), ("e", &self.e), ("r", &self.r), ("d_l", &self.d_l), ("d_f", &self.d_f)] {
            if v.is_negative() {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        Ok(())
    }

    /// Funds locked for one query: `p + e + m·d_F + d_L`.
    pub fn locked_per_query(&self, m: usize) -> Money {
        &(&self.p + &self.e) + &(&self.d_f.times(m as i64) + &self.d_l)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ContractPhase {
    Init,
    Created,
    Ready,
    Querying,
    Debating,
    Expired,
}

impl fmt::Display for ContractPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ContractPhase::Init => "INIT",
            ContractPhase::Created => "CREATED",
            ContractPhase::Ready => "READY",
            ContractPhase::Querying => "QUERYING",
            ContractPhase::Debating => "DEBATING",
            ContractPhase::Expired => "EXPIRED",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("message not accepted in phase {0}")]
    WrongPhase(ContractPhase),
    #[error(transparent)]
    Ledger(#[from] ChainError),
    #[error("relay {0} already joined")]
    DuplicateJoin(usize),
    #[error("relay index {0} is not a seat of this contract")]
    UnknownRelay(usize),
    #[error("only the creating client may send this message")]
    NotClient,
    #[error("feedback already stored for this query")]
    AlreadyFed,
    #[error("debate does not match the pending predicate")]
    DebateMismatch,
    #[error("debate proof does not validate")]
    DebateInvalid,
}

/// `(result, sig)` forwarded by the client, tagged with the relay seat that
/// produced it. `result` is kept as the raw octets the relay signed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedbackEntry {
    pub relay: usize,
    pub result: Vec<u8>,
    pub sig: Signature,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeedbackBundle {
    entries: Vec<FeedbackEntry>,
}

impl FeedbackBundle {
    /// Keeps at most one entry per relay seat (the first one wins).
    pub fn new(entries: Vec<FeedbackEntry>) -> Self {
        let mut kept: Vec<FeedbackEntry> = Vec::new();
        for e in entries {
            if !kept.iter().any(|k| k.relay == e.relay) {
                kept.push(e);
            }
        }
        kept.sort_by_key(|e| e.relay);
        FeedbackBundle { entries: kept }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[FeedbackEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// The message a relay signs: `⟨result, ctr⟩` as two length-prefixed fields.
pub fn signed_message(result: &[u8], ctr: u64) -> Vec<u8> {
    Encoder::new().field(result).u64(ctr).finish()
}

/// Which branch of an incentive subroutine settled a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Clause {
    /// Two-relay clauses 1 to 10.
    Two(u8),
    /// Single relay: signed valid proof.
    OneProof,
    /// Single relay: signed proof that fails validation.
    OneInvalidProof,
    /// Single relay: signed ⊥ (basic incentive only).
    OneBottom,
    /// Single relay: no validly signed entry.
    OneNone,
    /// Augmented: a public full node proved the ⊥ claim wrong.
    DebateUpheld,
    /// Augmented: the debate window closed without a valid challenge.
    DebateUnchallenged,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clause::Two(n) => write!(f, "{n}"),
            Clause::OneProof => f.write_str("one-proof"),
            Clause::OneInvalidProof => f.write_str("one-invalid"),
            Clause::OneBottom => f.write_str("one-bottom"),
            Clause::OneNone => f.write_str("one-none"),
            Clause::DebateUpheld => f.write_str("debate-upheld"),
            Clause::DebateUnchallenged => f.write_str("debate-unchallenged"),
        }
    }
}

/// Credits decided by an incentive branch, before they touch the ledger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Settlement {
    pub clause: Clause,
    pub credits: BTreeMap<PartyId, Money>,
}

impl Settlement {
    fn new(clause: Clause) -> Self {
        Settlement { clause, credits: BTreeMap::new() }
    }

    fn credit(mut self, party: PartyId, amount: Money) -> Self {
        *self.credits.entry(party).or_default() += amount;
        self
    }

    pub fn total(&self) -> Money {
        self.credits.values().cloned().sum()
    }
}

/// Per-query outcome written to the trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PayoutRecord {
    pub query: u64,
    pub clause: Clause,
    pub credits: BTreeMap<PartyId, Money>,
    pub burn: Money,
}

/// A classified feedback entry: what the contract can establish about it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    ValidProof,
    InvalidProof,
    Bottom,
}

/// Parses a signed result. Octets that decode to ⊥ are a ⊥ claim; anything
/// else is treated as an attempted proof and must pass `validate_true`, so
/// garbage can never collect the ⊥ payment.
pub fn classify(result: &[u8], pred: &ChainPredicate, blockhashes: &BTreeMap<u64, Digest>) -> Verdict {
    match Evaluation::from_bytes(result) {
        Ok(Evaluation::Bottom) => Verdict::Bottom,
        Ok(Evaluation::Proof(sigma)) if validate_true(&sigma, pred, blockhashes) => Verdict::ValidProof,
        _ => Verdict::InvalidProof,
    }
}

/// Entries whose signature over `⟨result, ctr⟩` verifies under the seat's
/// registered key. Anything else is treated exactly as absent.
fn signed_entries<'a>(
    bundle: &'a FeedbackBundle,
    pub_keys: &BTreeMap<usize, PubKey>,
    ctr: u64,
) -> Vec<&'a FeedbackEntry> {
    bundle
        .entries()
        .iter()
        .filter(|e| {
            pub_keys
                .get(&e.relay)
                .is_some_and(|pk| verify(&signed_message(&e.result, ctr), &e.sig, pk))
        })
        .collect()
}

pub struct IncentiveInput<'a> {
    pub bundle: &'a FeedbackBundle,
    pub pred: &'a ChainPredicate,
    pub pub_keys: &'a BTreeMap<usize, PubKey>,
    pub ctr: u64,
    pub params: &'a ProtocolParams,
    pub blockhashes: &'a BTreeMap<u64, Digest>,
}

/// Two non-cooperative relays: Payout for two signed entries, Payout′ for one,
/// clause 10 otherwise. The client's `d_L` share is returned in every branch.
pub fn incentive_two_relay(input: &IncentiveInput<'_>) -> Settlement {
    let IncentiveInput { bundle, pred, pub_keys, ctr, params, blockhashes } = *input;
    let (p, e, r, d_f, d_l) = (&params.p, &params.e, &params.r, &params.d_f, &params.d_l);
    let lw = PartyId::client;
    let signed = signed_entries(bundle, pub_keys, ctr);
    let verdicts: Vec<(usize, Verdict)> =
        signed.iter().map(|en| (en.relay, classify(&en.result, pred, blockhashes))).collect();
    let half_p = p.half();
    let half_d_f = d_f.half();
    let s = match verdicts.as_slice() {
        [(_, v1), (_, v2)] => {
            use Verdict::*;
            let (r1, r2) = (PartyId::relay(1), PartyId::relay(2));
            match (v1, v2) {
                (ValidProof, ValidProof) => Settlement::new(Clause::Two(1))
                    .credit(r1, &half_p + d_f)
                    .credit(r2, &half_p + d_f)
                    .credit(lw(), e.clone()),
                (ValidProof, InvalidProof) => Settlement::new(Clause::Two(2))
                    .credit(r1, p + &d_f.half().times(3))
                    .credit(lw(), e + &half_d_f),
                (InvalidProof, ValidProof) => Settlement::new(Clause::Two(2))
                    .credit(r2, p + &d_f.half().times(3))
                    .credit(lw(), e + &half_d_f),
                (ValidProof, Bottom) => Settlement::new(Clause::Two(3))
                    .credit(r1, p + &d_f.half().times(3))
                    .credit(lw(), e + &half_d_f),
                (Bottom, ValidProof) => Settlement::new(Clause::Two(3))
                    .credit(r2, p + &d_f.half().times(3))
                    .credit(lw(), e + &half_d_f),
                (InvalidProof, InvalidProof) => {
                    Settlement::new(Clause::Two(4)).credit(lw(), &(p + e) + &d_f.times(2))
                }
                // The ⊥ claimer is paid in both orientations.
                (InvalidProof, Bottom) => Settlement::new(Clause::Two(5))
                    .credit(r2, &(&half_p - r) + d_f)
                    .credit(lw(), &(&(&half_p + e) + r) + d_f),
                (Bottom, InvalidProof) => Settlement::new(Clause::Two(5))
                    .credit(r1, &(&half_p - r) + d_f)
                    .credit(lw(), &(&(&half_p + e) + r) + d_f),
                (Bottom, Bottom) => Settlement::new(Clause::Two(6))
                    .credit(r1, &(&half_p - r) + d_f)
                    .credit(r2, &(&half_p - r) + d_f)
                    .credit(lw(), e + &r.times(2)),
            }
        }
        [(i, v)] => {
            let ri = PartyId::relay(*i);
            let other = PartyId::relay(3 - *i);
            match v {
                Verdict::ValidProof => Settlement::new(Clause::Two(7))
                    .credit(ri, p + d_f)
                    .credit(other, d_f.clone())
                    .credit(lw(), e.half()),
                Verdict::InvalidProof => Settlement::new(Clause::Two(8))
                    .credit(other, d_f.clone())
                    .credit(lw(), &(p + e).half() + &half_d_f),
                Verdict::Bottom => Settlement::new(Clause::Two(9))
                    .credit(ri, &(&half_p - r) + d_f)
                    .credit(other, d_f.clone())
                    .credit(lw(), &e.half() + r),
            }
        }
        _ => Settlement::new(Clause::Two(10))
            .credit(PartyId::relay(1), d_f.clone())
            .credit(PartyId::relay(2), d_f.clone()),
    };
    s.credit(lw(), d_l.clone())
}

/// What the single-relay subroutines decide at the query timer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SingleOutcome {
    Settled(Settlement),
    /// Augmented only: a ⊥ claim opens a debate window instead of paying.
    OpenDebate,
}

/// Single relay, basic and augmented. The client's `d_L` share is returned in
/// every branch, as in the two-relay subroutine.
pub fn incentive_single(input: &IncentiveInput<'_>, augmented: bool) -> SingleOutcome {
    let IncentiveInput { bundle, pred, pub_keys, ctr, params, blockhashes } = *input;
    let (p, e, r, d_f, d_l) = (&params.p, &params.e, &params.r, &params.d_f, &params.d_l);
    let relay = PartyId::relay(1);
    let lw = PartyId::client;
    let signed = signed_entries(bundle, pub_keys, ctr);
    let s = match signed.as_slice() {
        [entry] => match classify(&entry.result, pred, blockhashes) {
            Verdict::ValidProof => Settlement::new(Clause::OneProof).credit(relay, p + d_f).credit(lw(), e.clone()),
            Verdict::InvalidProof => Settlement::new(Clause::OneInvalidProof).credit(lw(), &(p + e) + d_f),
            Verdict::Bottom if augmented => return SingleOutcome::OpenDebate,
            Verdict::Bottom => Settlement::new(Clause::OneBottom).credit(relay, &(p - r) + d_f).credit(lw(), e + r),
        },
        _ => Settlement::new(Clause::OneNone).credit(relay, d_f.clone()),
    };
    SingleOutcome::Settled(s.credit(lw(), d_l.clone()))
}

/// Augmented debate branches.
pub fn debate_settlement(params: &ProtocolParams, upheld: bool) -> Settlement {
    let s = if upheld {
        Settlement::new(Clause::DebateUpheld)
            .credit(PartyId::pfn(), params.d_f.clone())
            .credit(PartyId::client(), &params.p + &params.e)
    } else {
        Settlement::new(Clause::DebateUnchallenged)
            .credit(PartyId::relay(1), &params.d_f + &params.p)
            .credit(PartyId::client(), params.e.clone())
    };
    s.credit(PartyId::client(), params.d_l.clone())
}

/// Messages the contract emits. Only `Deployed` and `Initialized` are ever
/// addressed to the client, both during setup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ContractEvent {
    Deployed { params: ProtocolParams, m: usize },
    Initialized { pub_keys: BTreeMap<usize, PubKey> },
    Querying { ctr: u64, predicate: ChainPredicate },
    DebateOpened { predicate: ChainPredicate, t_debate: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractState {
    pub kind: IncentiveKind,
    pub phase: ContractPhase,
    pub params: Option<ProtocolParams>,
    pub client: Option<PartyId>,
    pub ctr: u64,
    pub pub_keys: BTreeMap<usize, PubKey>,
    pub predicate: Option<ChainPredicate>,
    pub responses: Option<FeedbackBundle>,
    pub t_end: Option<u64>,
    pub debate: Option<ChainPredicate>,
    pub t_debate: Option<u64>,
}

impl ContractState {
    pub fn new(kind: IncentiveKind) -> Self {
        ContractState {
            kind,
            phase: ContractPhase::Init,
            params: None,
            client: None,
            ctr: 0,
            pub_keys: BTreeMap::new(),
            predicate: None,
            responses: None,
            t_end: None,
            debate: None,
            t_debate: None,
        }
    }

    pub fn m(&self) -> usize {
        self.kind.relay_count()
    }

    fn expect_phase(&self, phase: ContractPhase) -> Result<(), ContractError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(ContractError::WrongPhase(self.phase))
        }
    }

    fn params(&self) -> &ProtocolParams {
        self.params.as_ref().expect("params are set once created")
    }

    fn expect_client(&self, sender: &PartyId) -> Result<(), ContractError> {
        if self.client.as_ref() == Some(sender) {
            Ok(())
        } else {
            Err(ContractError::NotClient)
        }
    }

    /// Create: locks `k·d_L` from the client and arms `ctr := k`.
    pub fn on_create(
        &mut self,
        sender: &PartyId,
        params: ProtocolParams,
        ledger: &mut Ledger,
    ) -> Result<Vec<ContractEvent>, ContractError> {
        self.expect_phase(ContractPhase::Init)?;
        let deposit = params.d_l.times(params.k as i64);
        ledger.transfer(sender, &PartyId::contract(), &deposit)?;
        self.ctr = params.k;
        self.client = Some(sender.clone());
        self.params = Some(params.clone());
        self.phase = ContractPhase::Created;
        Ok(vec![ContractEvent::Deployed { params, m: self.m() }])
    }

    /// Join: locks `k·d_F` from relay seat `seat`; READY once all seats filled.
    pub fn on_join(
        &mut self,
        seat: usize,
        pk: PubKey,
        ledger: &mut Ledger,
    ) -> Result<Vec<ContractEvent>, ContractError> {
        self.expect_phase(ContractPhase::Created)?;
        if seat == 0 || seat > self.m() {
            return Err(ContractError::UnknownRelay(seat));
        }
        if self.pub_keys.contains_key(&seat) {
            return Err(ContractError::DuplicateJoin(seat));
        }
        let deposit = self.params().d_f.times(self.params().k as i64);
        ledger.transfer(&PartyId::relay(seat), &PartyId::contract(), &deposit)?;
        self.pub_keys.insert(seat, pk);
        if self.pub_keys.len() == self.m() {
            self.phase = ContractPhase::Ready;
            return Ok(vec![ContractEvent::Initialized { pub_keys: self.pub_keys.clone() }]);
        }
        Ok(Vec::new())
    }

    /// Request: locks `p + e`, pins the predicate to the current height `now`
    /// and sets `T_end := now + 3·ΔT`.
    pub fn on_request(
        &mut self,
        sender: &PartyId,
        spec: PredicateSpec,
        ell: usize,
        now: u64,
        ledger: &mut Ledger,
    ) -> Result<Vec<ContractEvent>, ContractError> {
        self.expect_phase(ContractPhase::Ready)?;
        self.expect_client(sender)?;
        let predicate = ChainPredicate { ell, n: now, spec };
        let fee = &self.params().p + &self.params().e;
        ledger.transfer(sender, &PartyId::contract(), &fee)?;
        self.t_end = Some(now + 3 * self.params().delta_t);
        self.predicate = Some(predicate.clone());
        self.responses = None;
        self.phase = ContractPhase::Querying;
        Ok(vec![ContractEvent::Querying { ctr: self.ctr, predicate }])
    }

    /// Feedback: stores the first bundle of this query verbatim.
    pub fn on_feedback(&mut self, sender: &PartyId, bundle: FeedbackBundle) -> Result<(), ContractError> {
        self.expect_phase(ContractPhase::Querying)?;
        self.expect_client(sender)?;
        if self.responses.is_some() {
            return Err(ContractError::AlreadyFed);
        }
        self.responses = Some(bundle);
        Ok(())
    }

    /// Debate (augmented only): a valid proof for the pending predicate pays
    /// the public full node and refunds the client.
    pub fn on_debate(
        &mut self,
        predicate: &ChainPredicate,
        sigma: &TruthProof,
        ledger: &mut Ledger,
        blockhashes: &BTreeMap<u64, Digest>,
    ) -> Result<PayoutRecord, ContractError> {
        self.expect_phase(ContractPhase::Debating)?;
        if self.debate.as_ref() != Some(predicate) {
            return Err(ContractError::DebateMismatch);
        }
        if !validate_true(sigma, predicate, blockhashes) {
            return Err(ContractError::DebateInvalid);
        }
        let settlement = debate_settlement(self.params(), true);
        Ok(self.settle(settlement, ledger))
    }

    /// Timer: fires the incentive once `now ≥ T_end` (or closes a debate window
    /// once `now ≥ T_debate`). Returns the payout when the query settles.
    pub fn on_timer(
        &mut self,
        now: u64,
        ledger: &mut Ledger,
        blockhashes: &BTreeMap<u64, Digest>,
    ) -> Result<(Option<PayoutRecord>, Vec<ContractEvent>), ContractError> {
        match self.phase {
            ContractPhase::Querying if now >= self.t_end.expect("armed while querying") => {
                let empty = FeedbackBundle::empty();
                let pred = self.predicate.clone().expect("predicate set while querying");
                let input = IncentiveInput {
                    bundle: self.responses.as_ref().unwrap_or(&empty),
                    pred: &pred,
                    pub_keys: &self.pub_keys,
                    ctr: self.ctr,
                    params: self.params(),
                    blockhashes,
                };
                let outcome = match self.kind {
                    IncentiveKind::TwoRelayBasic => SingleOutcome::Settled(incentive_two_relay(&input)),
                    IncentiveKind::OneRelayBasic => incentive_single(&input, false),
                    IncentiveKind::OneRelayAugmented => incentive_single(&input, true),
                };
                match outcome {
                    SingleOutcome::Settled(s) => Ok((Some(self.settle(s, ledger)), Vec::new())),
                    SingleOutcome::OpenDebate => {
                        let t_debate = now + self.params().delta_t;
                        self.phase = ContractPhase::Debating;
                        self.t_end = None;
                        self.debate = Some(pred.clone());
                        self.t_debate = Some(t_debate);
                        Ok((None, vec![ContractEvent::DebateOpened { predicate: pred, t_debate }]))
                    }
                }
            }
            ContractPhase::Debating if now >= self.t_debate.expect("armed while debating") => {
                let settlement = debate_settlement(self.params(), false);
                Ok((Some(self.settle(settlement, ledger)), Vec::new()))
            }
            ContractPhase::Querying | ContractPhase::Debating => Ok((None, Vec::new())),
            phase => Err(ContractError::WrongPhase(phase)),
        }
    }

    /// Pays a settlement out of escrow, burns the rest of this query's locked
    /// funds and advances the counter.
    fn settle(&mut self, settlement: Settlement, ledger: &mut Ledger) -> PayoutRecord {
        let locked = self.params().locked_per_query(self.m());
        let paid = settlement.total();
        let burn = &locked - &paid;
        assert!(!burn.is_negative(), "clause {} pays {paid} out of {locked}", settlement.clause);
        let escrow = PartyId::contract();
        for (party, amount) in &settlement.credits {
            ledger.transfer(&escrow, party, amount).expect("escrow covers locked funds");
        }
        ledger.transfer(&escrow, &PartyId::burn_sink(), &burn).expect("escrow covers locked funds");
        let record = PayoutRecord {
            query: self.params().k - self.ctr + 1,
            clause: settlement.clause,
            credits: settlement.credits,
            burn,
        };
        self.ctr -= 1;
        self.t_end = None;
        self.debate = None;
        self.t_debate = None;
        self.responses = None;
        self.phase = if self.ctr > 0 { ContractPhase::Ready } else { ContractPhase::Expired };
        record
    }
}
