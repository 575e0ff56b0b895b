//! Light client, relay and public full node behaviors, parameterized by pure
//! strategies that map onto the game's action alphabets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::chain::{build_mt, gen_mtp, BlockHeader, Chain, PartyId, Transaction};
use crate::codec::Encoder;
use crate::contract::{signed_message, FeedbackBundle, FeedbackEntry, ProtocolParams};
use crate::crypto::{hash, keygen, sign, verify, KeyPair, PubKey, Signature};
use crate::predicate::{evaluate, ChainPredicate, Evaluation, PredicateSpec, TruthProof};

/// A relay's move at one query, as seen by the game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelayAction {
    /// Forward the ground truth.
    T,
    /// Claim the opposite of the ground truth.
    F,
    /// Stay silent.
    X,
}

impl fmt::Display for RelayAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelayAction::T => "t",
            RelayAction::F => "f",
            RelayAction::X => "x",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelayStrategy {
    Honest,
    AlwaysOpposite,
    Silent,
    /// Honest on true predicates, a fabricated proof on false ones.
    FakeProofOnFalse,
    /// Sends exactly what the partner seat's strategy sends.
    ColludePartner(usize),
}

impl RelayStrategy {
    /// The game action this strategy plays given the ground truth. A colluding
    /// seat resolves through its partner's strategy.
    pub fn action(&self, truth: bool, partner: Option<&RelayStrategy>) -> RelayAction {
        match self {
            RelayStrategy::Honest => RelayAction::T,
            RelayStrategy::AlwaysOpposite => RelayAction::F,
            RelayStrategy::Silent => RelayAction::X,
            RelayStrategy::FakeProofOnFalse if truth => RelayAction::T,
            RelayStrategy::FakeProofOnFalse => RelayAction::F,
            RelayStrategy::ColludePartner(_) => match partner {
                Some(p) if !matches!(p, RelayStrategy::ColludePartner(_)) => p.action(truth, None),
                _ => RelayAction::X,
            },
        }
    }

    /// The pure strategy playing `action` regardless of the ground truth.
    pub fn constant(action: RelayAction) -> Self {
        match action {
            RelayAction::T => RelayStrategy::Honest,
            RelayAction::F => RelayStrategy::AlwaysOpposite,
            RelayAction::X => RelayStrategy::Silent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {what} '{value}' (expected one of: {expected})")]
pub struct StrategyParseError {
    pub what: &'static str,
    pub value: String,
    pub expected: &'static str,
}

impl FromStr for RelayStrategy {
    type Err = StrategyParseError;

    /// `collude` binds to the other seat of a two-relay contract; callers fix
    /// the partner index when the seat is known.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "honest" => RelayStrategy::Honest,
            "always_opposite" => RelayStrategy::AlwaysOpposite,
            "silent" => RelayStrategy::Silent,
            "fake_proof" => RelayStrategy::FakeProofOnFalse,
            "collude" => RelayStrategy::ColludePartner(0),
            _ => {
                return Err(StrategyParseError {
                    what: "relay strategy",
                    value: s.into(),
                    expected: "honest, always_opposite, silent, fake_proof, collude",
                })
            }
        })
    }
}

impl fmt::Display for RelayStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelayStrategy::Honest => "honest",
            RelayStrategy::AlwaysOpposite => "always_opposite",
            RelayStrategy::Silent => "silent",
            RelayStrategy::FakeProofOnFalse => "fake_proof",
            RelayStrategy::ColludePartner(_) => "collude",
        })
    }
}

/// Which recorded responses the client forwards as feedback.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Report {
    /// T: every recorded response.
    All,
    /// L: only the first relay's response.
    Left,
    /// R: only the second relay's response.
    Right,
    /// X: no feedback message at all.
    Withhold,
}

/// What the client outputs to its application.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Output {
    /// A: the predicate is true.
    True,
    /// A′: the predicate is false.
    False,
    /// O: no output; the client falls back to its own full node.
    None,
}

impl Output {
    pub fn from_claim(claim: bool) -> Self {
        if claim {
            Output::True
        } else {
            Output::False
        }
    }

    pub fn is_fooled(self, truth: bool) -> bool {
        matches!((self, truth), (Output::True, false) | (Output::False, true))
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Report::All => "T",
            Report::Left => "L",
            Report::Right => "R",
            Report::Withhold => "X",
        })
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Output::True => "A",
            Output::False => "A'",
            Output::None => "O",
        })
    }
}

impl FromStr for Report {
    type Err = StrategyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "all" => Report::All,
            "left" => Report::Left,
            "right" => Report::Right,
            "withhold" => Report::Withhold,
            _ => {
                return Err(StrategyParseError {
                    what: "report rule",
                    value: s.into(),
                    expected: "all, left, right, withhold",
                })
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OutputRule {
    /// Output the common claim when all `m` relays answered consistently.
    FollowResponses,
    AlwaysTrue,
    AlwaysFalse,
    NoOutput,
}

impl FromStr for OutputRule {
    type Err = StrategyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "follow" => OutputRule::FollowResponses,
            "true" => OutputRule::AlwaysTrue,
            "false" => OutputRule::AlwaysFalse,
            "none" => OutputRule::NoOutput,
            _ => {
                return Err(StrategyParseError {
                    what: "output rule",
                    value: s.into(),
                    expected: "follow, true, false, none",
                })
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ClientStrategy {
    pub report: Report,
    pub output: OutputRule,
}

impl ClientStrategy {
    pub fn honest() -> Self {
        ClientStrategy { report: Report::All, output: OutputRule::FollowResponses }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PfnStrategy {
    Monitor { debate_on_cheat: bool },
    Idle,
}

impl FromStr for PfnStrategy {
    type Err = StrategyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "monitor" => PfnStrategy::Monitor { debate_on_cheat: true },
            "idle" => PfnStrategy::Idle,
            _ => return Err(StrategyParseError { what: "pfn strategy", value: s.into(), expected: "monitor, idle" }),
        })
    }
}

/// A structurally well-formed proof for `pred` whose block headers are not on
/// the chain, so `validate_true` rejects it at the header check. Deterministic
/// in `(pred, ctr)` so colluding relays send identical bytes.
pub fn fabricate_proof(pred: &ChainPredicate, ctr: u64) -> TruthProof {
    let mut pred_enc = Encoder::new();
    pred.encode(&mut pred_enc);
    let seed = hash(&Encoder::new().field(b"superlight/forge").u64(ctr).field(&pred_enc.finish()).finish());
    let count = match &pred.spec {
        PredicateSpec::AllTxidsPresent(t) => t.len(),
        _ => 1,
    };
    let mut proof = TruthProof { txs: Vec::new(), mtps: Vec::new(), blocks: Vec::new() };
    for i in 0..count as u64 {
        let tx = match &pred.spec {
            PredicateSpec::InflowAtLeast { address, threshold } => {
                Transaction::payment(address, threshold, &Encoder::new().field(&seed.0).u64(i).finish())
            }
            _ => Transaction::new(Encoder::new().field(&seed.0).u64(i).finish()),
        };
        let tree = build_mt(std::slice::from_ref(&tx)).expect("one leaf");
        let mtp = gen_mtp(&tree, &tx).expect("tx is the leaf");
        let header = BlockHeader { height: pred.n, prev_hash: seed, nonce: pred.n.to_be_bytes().to_vec(), root: tree.root() };
        proof.txs.push(tx);
        proof.mtps.push(mtp);
        proof.blocks.push(header);
    }
    proof
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("all {0} queries have been used")]
    ProtocolExpired(u64),
    #[error("client is not yet initialized")]
    NotInitialized,
    #[error("a query is already in flight")]
    Busy,
}

/// A relay response held by the client.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Response {
    pub result: Vec<u8>,
    pub sig: Signature,
}

/// The client's decision at the feedback deadline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedDecision {
    /// `None` means no feedback message is sent.
    pub feedback: Option<FeedbackBundle>,
    pub output: Output,
}

/// The light client. After setup its handlers only see off-chain messages and
/// its own clock.
#[derive(Clone, Debug)]
pub struct Client {
    pub strategy: ClientStrategy,
    pub m: usize,
    pub delta_t: u64,
    pub ctr_lw: u64,
    pub pub_keys: BTreeMap<usize, PubKey>,
    pub responses: BTreeMap<usize, Response>,
    pub t_feed: Option<u64>,
}

impl Client {
    pub fn new(strategy: ClientStrategy, m: usize, params: &ProtocolParams) -> Self {
        Client {
            strategy,
            m,
            delta_t: params.delta_t,
            ctr_lw: params.k,
            pub_keys: BTreeMap::new(),
            responses: BTreeMap::new(),
            t_feed: None,
        }
    }

    pub fn on_initialized(&mut self, pub_keys: BTreeMap<usize, PubKey>) {
        self.pub_keys = pub_keys;
    }

    pub fn is_initialized(&self) -> bool {
        self.pub_keys.len() == self.m
    }

    /// Request: arms `T_feed := T + 2ΔT`. `ctr_lw` is unchanged until feedback.
    pub fn on_app_request(&mut self, now: u64) -> Result<(), ClientError> {
        if self.ctr_lw == 0 {
            return Err(ClientError::ProtocolExpired(0));
        }
        if !self.is_initialized() {
            return Err(ClientError::NotInitialized);
        }
        if self.t_feed.is_some() {
            return Err(ClientError::Busy);
        }
        self.responses.clear();
        self.t_feed = Some(now + 2 * self.delta_t);
        Ok(())
    }

    /// Records a response if it is on time, for the current counter, and
    /// correctly signed by that seat. Returns whether it was recorded.
    pub fn on_response(&mut self, now: u64, relay: usize, ctr: u64, result: Vec<u8>, sig: Signature) -> bool {
        let Some(t_feed) = self.t_feed else { return false };
        if now > t_feed || ctr != self.ctr_lw || self.responses.contains_key(&relay) {
            return false;
        }
        let Some(pk) = self.pub_keys.get(&relay) else { return false };
        if !verify(&signed_message(&result, ctr), &sig, pk) {
            return false;
        }
        self.responses.insert(relay, Response { result, sig });
        true
    }

    /// The claim a response makes, as far as the client can tell: ⊥ claims
    /// false, a decodable proof claims true, anything else claims nothing.
    fn claim(resp: &Response) -> Option<bool> {
        match Evaluation::from_bytes(&resp.result) {
            Ok(Evaluation::Bottom) => Some(false),
            Ok(Evaluation::Proof(_)) => Some(true),
            Err(_) => None,
        }
    }

    fn honest_output(&self) -> Output {
        if self.responses.len() != self.m {
            return Output::None;
        }
        let claims: Vec<Option<bool>> = self.responses.values().map(Self::claim).collect();
        match claims.first() {
            Some(Some(b)) if claims.iter().all(|c| *c == Some(*b)) => Output::from_claim(*b),
            _ => Output::None,
        }
    }

    /// Feedback at `T = T_feed`: builds the bundle per the report rule, picks
    /// the output and decrements `ctr_lw`.
    pub fn on_feed_deadline(&mut self, now: u64) -> Option<FeedDecision> {
        if self.t_feed != Some(now) {
            return None;
        }
        let pick = |seats: &[usize]| {
            FeedbackBundle::new(
                seats
                    .iter()
                    .filter_map(|s| {
                        self.responses.get(s).map(|r| FeedbackEntry { relay: *s, result: r.result.clone(), sig: r.sig.clone() })
                    })
                    .collect(),
            )
        };
        let feedback = match self.strategy.report {
            Report::All => Some(pick(&self.responses.keys().copied().collect::<Vec<_>>())),
            Report::Left => Some(pick(&[1])),
            Report::Right => Some(pick(&[2])),
            Report::Withhold => None,
        };
        let output = match self.strategy.output {
            OutputRule::FollowResponses => self.honest_output(),
            OutputRule::AlwaysTrue => Output::True,
            OutputRule::AlwaysFalse => Output::False,
            OutputRule::NoOutput => Output::None,
        };
        self.ctr_lw -= 1;
        self.t_feed = None;
        self.responses.clear();
        Some(FeedDecision { feedback, output })
    }
}

/// A relay full node occupying one contract seat.
#[derive(Clone, Debug)]
pub struct Relay {
    pub seat: usize,
    pub keys: KeyPair,
    pub strategy: RelayStrategy,
    /// The partner's strategy, used when this seat colludes.
    pub partner: Option<RelayStrategy>,
    pub last_ctr: Option<u64>,
}

impl Relay {
    pub fn new(seat: usize, key_seed: u64, strategy: RelayStrategy, partner: Option<RelayStrategy>) -> Self {
        Relay { seat, keys: keygen(key_seed), strategy, partner, last_ctr: None }
    }

    pub fn party(&self) -> PartyId {
        PartyId::relay(self.seat)
    }

    /// The game action this relay plays on `pred`, judged on its replica.
    pub fn action_for(&self, pred: &ChainPredicate, replica: &Chain) -> RelayAction {
        let truth = evaluate(pred, replica).map(|e| !e.is_bottom()).unwrap_or(false);
        self.strategy.action(truth, self.partner.as_ref())
    }

    /// Respond: the signed result for `(ctr, pred)`, or nothing when silent.
    pub fn on_querying(&mut self, ctr: u64, pred: &ChainPredicate, replica: &Chain) -> Option<Response> {
        if self.last_ctr == Some(ctr) {
            return None;
        }
        self.last_ctr = Some(ctr);
        let honest = evaluate(pred, replica).ok()?;
        let result = match self.strategy.action(!honest.is_bottom(), self.partner.as_ref()) {
            RelayAction::X => return None,
            RelayAction::T => honest,
            RelayAction::F if honest.is_bottom() => Evaluation::Proof(fabricate_proof(pred, ctr)),
            RelayAction::F => Evaluation::Bottom,
        };
        let bytes = result.to_bytes();
        let sig = sign(&signed_message(&bytes, ctr), &self.keys.secret);
        Some(Response { result: bytes, sig })
    }
}

/// A public full node that may challenge a ⊥ claim during a debate window.
#[derive(Clone, Debug)]
pub struct Pfn {
    pub strategy: PfnStrategy,
}

impl Pfn {
    /// Debate: a proof for the debated predicate, when one exists on the replica.
    pub fn on_observe(&self, debated: &ChainPredicate, replica: &Chain) -> Option<TruthProof> {
        match self.strategy {
            PfnStrategy::Monitor { debate_on_cheat: true } => match evaluate(debated, replica) {
                Ok(Evaluation::Proof(sigma)) => Some(sigma),
                _ => None,
            },
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::generate_chain;
    use crate::money::Money;
    use crate::predicate::validate_true;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(k: u64) -> ProtocolParams {
        ProtocolParams {
            k,
            p: Money::from_int(4),
            e: Money::from_int(1),
            r: Money::zero(),
            d_l: Money::from_int(10),
            d_f: Money::from_int(10),
            delta_t: 2,
        }
    }

    fn world() -> (Chain, ChainPredicate, ChainPredicate) {
        let tx = Transaction::new(b"planted".to_vec());
        let chain = generate_chain(&mut ChaCha8Rng::seed_from_u64(1), 5, 2, &[(1, tx.clone())]).unwrap();
        (chain, ChainPredicate::txid_equals(tx.txid, 4), ChainPredicate::txid_equals(hash(b"nope"), 4))
    }

    fn ready_client(strategy: ClientStrategy, m: usize, k: u64) -> Client {
        let mut c = Client::new(strategy, m, &params(k));
        c.on_initialized((1..=m).map(|i| (i, keygen(i as u64).public)).collect());
        c
    }

    #[test]
    fn request_arms_deadline_and_expires() {
        let mut c = ready_client(ClientStrategy::honest(), 1, 1);
        c.on_app_request(10).unwrap();
        assert_eq!((c.t_feed, c.ctr_lw), (Some(14), 1));
        assert!(c.on_feed_deadline(13).is_none());
        c.on_feed_deadline(14).unwrap();
        assert_eq!(c.ctr_lw, 0);
        assert_eq!(c.on_app_request(20), Err(ClientError::ProtocolExpired(0)));
    }

    #[test]
    fn strategies_map_to_single_actions() {
        use RelayAction::*;
        for (s, at_true, at_false) in [
            (RelayStrategy::Honest, T, T),
            (RelayStrategy::AlwaysOpposite, F, F),
            (RelayStrategy::Silent, X, X),
            (RelayStrategy::FakeProofOnFalse, T, F),
        ] {
            assert_eq!((s.action(true, None), s.action(false, None)), (at_true, at_false));
        }
        let c = RelayStrategy::ColludePartner(1);
        assert_eq!(c.action(true, Some(&RelayStrategy::AlwaysOpposite)), F);
    }

    #[test]
    fn relay_responses_by_strategy() {
        let (chain, truth, falsity) = world();
        let mut honest = Relay::new(1, 1, RelayStrategy::Honest, None);
        let r = honest.on_querying(3, &truth, &chain).unwrap();
        let Evaluation::Proof(sigma) = Evaluation::from_bytes(&r.result).unwrap() else { panic!() };
        assert!(validate_true(&sigma, &truth, &chain.blockhashes));
        assert!(honest.on_querying(3, &truth, &chain).is_none(), "one answer per counter");

        let mut liar = Relay::new(1, 1, RelayStrategy::AlwaysOpposite, None);
        let r = liar.on_querying(3, &truth, &chain).unwrap();
        assert_eq!(Evaluation::from_bytes(&r.result).unwrap(), Evaluation::Bottom);
        let r = liar.on_querying(2, &falsity, &chain).unwrap();
        let Evaluation::Proof(fake) = Evaluation::from_bytes(&r.result).unwrap() else { panic!() };
        assert!(!validate_true(&fake, &falsity, &chain.blockhashes));

        let mut silent = Relay::new(1, 1, RelayStrategy::Silent, None);
        assert!(silent.on_querying(3, &truth, &chain).is_none());
    }

    #[test]
    fn colluders_send_identical_results() {
        let (chain, _, falsity) = world();
        let mut a = Relay::new(1, 1, RelayStrategy::AlwaysOpposite, None);
        let mut b = Relay::new(2, 2, RelayStrategy::ColludePartner(1), Some(RelayStrategy::AlwaysOpposite));
        assert_eq!(a.on_querying(1, &falsity, &chain).unwrap().result, b.on_querying(1, &falsity, &chain).unwrap().result);
    }

    #[test]
    fn client_records_only_valid_responses() {
        let (chain, truth, _) = world();
        let mut c = ready_client(ClientStrategy::honest(), 2, 2);
        c.on_app_request(0).unwrap();
        let r1 = Relay::new(1, 1, RelayStrategy::Honest, None).on_querying(2, &truth, &chain).unwrap();
        // Wrong seat key, stale counter, late arrival.
        assert!(!c.on_response(1, 2, 2, r1.result.clone(), r1.sig.clone()));
        assert!(!c.on_response(1, 1, 1, r1.result.clone(), r1.sig.clone()));
        assert!(!c.on_response(5, 1, 2, r1.result.clone(), r1.sig.clone()));
        assert!(c.on_response(4, 1, 2, r1.result, r1.sig));
        assert_eq!(c.responses.len(), 1);
    }

    #[test]
    fn honest_output_rule() {
        let (chain, truth, _) = world();
        let mut c = ready_client(ClientStrategy::honest(), 2, 2);
        c.on_app_request(0).unwrap();
        let r1 = Relay::new(1, 1, RelayStrategy::Honest, None).on_querying(2, &truth, &chain).unwrap();
        let r2 = Relay::new(2, 2, RelayStrategy::Honest, None).on_querying(2, &truth, &chain).unwrap();
        c.on_response(1, 1, 2, r1.result, r1.sig);
        c.on_response(1, 2, 2, r2.result, r2.sig);
        let d = c.on_feed_deadline(4).unwrap();
        assert_eq!(d.output, Output::True);
        assert_eq!(d.feedback.unwrap().len(), 2);

        c.on_app_request(10).unwrap();
        let r1 = Relay::new(1, 1, RelayStrategy::Honest, None).on_querying(1, &truth, &chain).unwrap();
        let r2 = Relay::new(2, 2, RelayStrategy::AlwaysOpposite, None).on_querying(1, &truth, &chain).unwrap();
        c.on_response(11, 1, 1, r1.result, r1.sig);
        c.on_response(11, 2, 1, r2.result, r2.sig);
        assert_eq!(c.on_feed_deadline(14).unwrap().output, Output::None, "conflicting claims");
    }

    #[test]
    fn report_rules_select_entries() {
        let (chain, truth, _) = world();
        for (report, expect) in [(Report::Left, Some(0)), (Report::Right, Some(1)), (Report::Withhold, None)] {
            let mut c = ready_client(ClientStrategy { report, output: OutputRule::NoOutput }, 2, 1);
            c.on_app_request(0).unwrap();
            let r2 = Relay::new(2, 2, RelayStrategy::Honest, None).on_querying(1, &truth, &chain).unwrap();
            c.on_response(1, 2, 1, r2.result, r2.sig);
            let d = c.on_feed_deadline(4).unwrap();
            assert_eq!(d.feedback.map(|b| b.len()), expect);
        }
    }

    #[test]
    fn pfn_debates_only_true_predicates_when_monitoring() {
        let (chain, truth, falsity) = world();
        let watcher = Pfn { strategy: PfnStrategy::Monitor { debate_on_cheat: true } };
        assert!(watcher.on_observe(&truth, &chain).is_some());
        assert!(watcher.on_observe(&falsity, &chain).is_none());
        assert!(Pfn { strategy: PfnStrategy::Idle }.on_observe(&truth, &chain).is_none());
    }
}
