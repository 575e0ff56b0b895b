//! Chain predicates with one-sided verifiability.
//!
//! [`evaluate`] needs a full replica and returns either a truth proof or
//! [`Evaluation::Bottom`]. [`validate_true`] needs only `blockhashes` and can
//! confirm trueness. There is deliberately no operation that validates
//! falseness: `Bottom` carries no witness.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::chain::{vrfy_mtp, BlockHeader, Chain, MerkleProof, PartyId, Transaction};
use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{hash, Digest};
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredicateError {
    #[error("replica has {have} blocks but the predicate covers heights 0..={n}")]
    ReplicaTooShort { have: usize, n: u64 },
    #[error("ell must be at least 1")]
    ZeroEll,
    #[error("ell = {ell} does not match the predicate kind (expected {expected})")]
    EllMismatch { ell: usize, expected: usize },
    #[error("AllTxidsPresent needs at least one target")]
    NoTargets,
}

/// The relation `f` of a predicate.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum PredicateSpec {
    TxidEquals(Digest),
    AllTxidsPresent(BTreeSet<Digest>),
    InflowAtLeast { address: PartyId, threshold: Money },
}

/// `P^ℓ_N`: a statement about blocks `C[0..=N]` whose trueness is witnessed by
/// at most `ell` transaction inclusions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ChainPredicate {
    pub ell: usize,
    pub n: u64,
    pub spec: PredicateSpec,
}

impl ChainPredicate {
    pub fn new(spec: PredicateSpec, ell: usize, n: u64) -> Result<Self, PredicateError> {
        if ell == 0 {
            return Err(PredicateError::ZeroEll);
        }
        let expected = match &spec {
            PredicateSpec::TxidEquals(_) => Some(1),
            PredicateSpec::AllTxidsPresent(t) if t.is_empty() => return Err(PredicateError::NoTargets),
            PredicateSpec::AllTxidsPresent(t) => Some(t.len()),
            PredicateSpec::InflowAtLeast { .. } => None,
        };
        match expected {
            Some(e) if e != ell => Err(PredicateError::EllMismatch { ell, expected: e }),
            _ => Ok(ChainPredicate { ell, n, spec }),
        }
    }

    pub fn txid_equals(target: Digest, n: u64) -> Self {
        ChainPredicate { ell: 1, n, spec: PredicateSpec::TxidEquals(target) }
    }

    /// The same relation pinned to a different height bound.
    pub fn at_height(&self, n: u64) -> Self {
        ChainPredicate { n, ..self.clone() }
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.count(self.ell).u64(self.n);
        match &self.spec {
            PredicateSpec::TxidEquals(d) => {
                enc.field(b"txid").field(&d.0);
            }
            PredicateSpec::AllTxidsPresent(ts) => {
                enc.field(b"all").count(ts.len());
                for t in ts {
                    enc.field(&t.0);
                }
            }
            PredicateSpec::InflowAtLeast { address, threshold } => {
                enc.field(b"inflow")
                    .field(address.as_str().as_bytes())
                    .field(threshold.to_string().as_bytes());
            }
        }
    }
}

/// `σ = ({tx_i}, {π_i}, C′)`. `blocks[i]` is the header of the block that
/// includes `txs[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TruthProof {
    pub txs: Vec<Transaction>,
    pub mtps: Vec<MerkleProof>,
    pub blocks: Vec<BlockHeader>,
}

/// The output of [`evaluate`]; also the `result` field relays sign.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Evaluation {
    Proof(TruthProof),
    Bottom,
}

impl Evaluation {
    pub fn is_bottom(&self) -> bool {
        matches!(self, Evaluation::Bottom)
    }

    pub fn proof(&self) -> Option<&TruthProof> {
        match self {
            Evaluation::Proof(p) => Some(p),
            Evaluation::Bottom => None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        match self {
            Evaluation::Bottom => {
                enc.field(&[0]);
            }
            Evaluation::Proof(p) => {
                enc.field(&[1]);
                p.encode(&mut enc);
            }
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let offset = dec.position();
        let out = match dec.fixed::<1>()? {
            [0] => Evaluation::Bottom,
            [1] => Evaluation::Proof(TruthProof::decode(&mut dec)?),
            [tag] => return Err(DecodeError::BadTag { offset, tag }),
        };
        dec.finish()?;
        Ok(out)
    }
}

impl TruthProof {
    pub fn encode(&self, enc: &mut Encoder) {
        enc.count(self.txs.len());
        for tx in &self.txs {
            enc.field(&tx.payload);
        }
        enc.count(self.mtps.len());
        for p in &self.mtps {
            p.encode(enc);
        }
        enc.count(self.blocks.len());
        for b in &self.blocks {
            b.encode(enc);
        }
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n = dec.count()?;
        let txs = (0..n)
            .map(|_| dec.field().map(|p| Transaction::new(p.to_vec())))
            .collect::<Result<_, _>>()?;
        let n = dec.count()?;
        let mtps = (0..n).map(|_| MerkleProof::decode(dec)).collect::<Result<_, _>>()?;
        let n = dec.count()?;
        let blocks = (0..n).map(|_| BlockHeader::decode(dec)).collect::<Result<_, _>>()?;
        Ok(TruthProof { txs, mtps, blocks })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        let p = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(p)
    }
}

/// Evaluates `pred` on a full replica. Witnesses are chosen deterministically
/// by scanning blocks by height and transactions by index.
pub fn evaluate(pred: &ChainPredicate, replica: &Chain) -> Result<Evaluation, PredicateError> {
    if (replica.len() as u64) < pred.n + 1 {
        return Err(PredicateError::ReplicaTooShort { have: replica.len(), n: pred.n });
    }
    let scan = || {
        replica.blocks[..=pred.n as usize]
            .iter()
            .flat_map(|b| b.payload.iter().enumerate().map(move |(i, tx)| (b, i, tx)))
    };
    let picked: Vec<(usize, usize)> = match &pred.spec {
        PredicateSpec::TxidEquals(target) => scan()
            .find(|(_, _, tx)| tx.txid == *target)
            .map(|(b, i, _)| vec![(b.height() as usize, i)])
            .unwrap_or_default(),
        PredicateSpec::AllTxidsPresent(targets) => {
            let mut first: BTreeMap<Digest, (usize, usize)> = BTreeMap::new();
            for (b, i, tx) in scan() {
                if targets.contains(&tx.txid) {
                    first.entry(tx.txid).or_insert((b.height() as usize, i));
                }
            }
            if first.len() == targets.len() {
                let mut v: Vec<_> = first.into_values().collect();
                v.sort();
                v
            } else {
                Vec::new()
            }
        }
        PredicateSpec::InflowAtLeast { address, threshold } => {
            let mut seen = BTreeSet::new();
            let matching: Vec<((usize, usize), Money)> = scan()
                .filter_map(|(b, i, tx)| {
                    let (to, amount) = tx.payment_info()?;
                    (to == *address && seen.insert(tx.txid)).then(|| ((b.height() as usize, i), amount))
                })
                .collect();
            inflow_witness(&matching, threshold, pred.ell)
        }
    };
    if picked.is_empty() {
        return Ok(Evaluation::Bottom);
    }
    let mut proof = TruthProof { txs: Vec::new(), mtps: Vec::new(), blocks: Vec::new() };
    for (h, i) in picked {
        let block = &replica.blocks[h];
        let tx = &block.payload[i];
        let mtp = crate::chain::gen_mtp(&block.tree, tx).expect("transaction is a leaf of its block");
        proof.txs.push(tx.clone());
        proof.mtps.push(mtp);
        proof.blocks.push(block.header.clone());
    }
    Ok(Evaluation::Proof(proof))
}

/// Minimal chain-order prefix meeting the threshold when it fits in `ell`;
/// otherwise the `ell` largest inflows (ties by chain order) if they suffice.
fn inflow_witness(matching: &[((usize, usize), Money)], threshold: &Money, ell: usize) -> Vec<(usize, usize)> {
    let mut sum = Money::zero();
    for (n, (_, amount)) in matching.iter().enumerate() {
        if n == ell {
            break;
        }
        sum += amount;
        if sum >= *threshold {
            return matching[..=n].iter().map(|(pos, _)| *pos).collect();
        }
    }
    let mut by_size: Vec<_> = matching.iter().collect();
    by_size.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    by_size.truncate(ell);
    let total: Money = by_size.iter().map(|(_, a)| a.clone()).sum();
    if by_size.is_empty() || total < *threshold {
        return Vec::new();
    }
    let mut v: Vec<_> = by_size.into_iter().map(|(pos, _)| *pos).collect();
    v.sort();
    v
}

/// `validateTrue`: checks block headers against `blockhashes`, every Merkle
/// proof, and the relation `f`. Any malformed proof yields `false`.
pub fn validate_true(sigma: &TruthProof, pred: &ChainPredicate, blockhashes: &BTreeMap<u64, Digest>) -> bool {
    let n = sigma.txs.len();
    if n == 0 || n > pred.ell || sigma.mtps.len() != n || sigma.blocks.len() != n {
        return false;
    }
    for ((tx, mtp), header) in sigma.txs.iter().zip(&sigma.mtps).zip(&sigma.blocks) {
        if header.height > pred.n || blockhashes.get(&header.height) != Some(&header.hash()) {
            return false;
        }
        if !tx.is_well_formed() || !vrfy_mtp(&header.root, mtp, &hash(&tx.payload)) {
            return false;
        }
    }
    let ids: BTreeSet<Digest> = sigma.txs.iter().map(|t| t.txid).collect();
    if ids.len() != n {
        return false;
    }
    match &pred.spec {
        PredicateSpec::TxidEquals(target) => n == 1 && sigma.txs[0].txid == *target,
        PredicateSpec::AllTxidsPresent(targets) => ids == *targets,
        PredicateSpec::InflowAtLeast { address, threshold } => {
            let mut sum = Money::zero();
            for tx in &sigma.txs {
                match tx.payment_info() {
                    Some((to, amount)) if to == *address => sum += amount,
                    _ => return false,
                }
            }
            sum >= *threshold
        }
    }
}

/// `validateTrue` on canonical bytes; undecodable input is rejected.
pub fn validate_true_bytes(sigma: &[u8], pred: &ChainPredicate, blockhashes: &BTreeMap<u64, Digest>) -> bool {
    TruthProof::from_bytes(sigma).is_ok_and(|p| validate_true(&p, pred, blockhashes))
}
