//! The simulated chain: transactions, Merkle-committed blocks, the global
//! `blockhashes` dictionary and the flat ledger.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{hash, hash_pair, Digest};
use crate::money::Money;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("a block payload must contain at least one transaction")]
    EmptyPayload,
    #[error("transaction {0} is not a leaf of this tree")]
    NotALeaf(Digest),
    #[error("{party} holds {balance}, cannot move {amount}")]
    InsufficientFunds { party: PartyId, balance: Money, amount: Money },
    #[error("negative transfer amount {0}")]
    NegativeAmount(Money),
}

/// A ledger account name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartyId(pub String);

impl PartyId {
    pub fn new(name: impl Into<String>) -> Self {
        PartyId(name.into())
    }

    pub fn client() -> Self {
        PartyId::new("LW")
    }

    pub fn relay(i: usize) -> Self {
        PartyId(format!("R{i}"))
    }

    pub fn pfn() -> Self {
        PartyId::new("PFN")
    }

    pub fn contract() -> Self {
        PartyId::new("G_ac")
    }

    /// Reserved account receiving funds that no clause redistributes.
    pub fn burn_sink() -> Self {
        PartyId::new("⊥sink")
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub payload: Vec<u8>,
    pub txid: Digest,
}

const PAYMENT_TAG: &[u8] = b"pay";

impl Transaction {
    pub fn new(payload: Vec<u8>) -> Self {
        let txid = hash(&payload);
        Transaction { payload, txid }
    }

    /// A transaction carrying an inflow of `amount` to `to`. The memo keeps
    /// otherwise identical payments distinct.
    pub fn payment(to: &PartyId, amount: &Money, memo: &[u8]) -> Self {
        let payload = Encoder::new()
            .field(PAYMENT_TAG)
            .field(to.as_str().as_bytes())
            .field(amount.to_string().as_bytes())
            .field(memo)
            .finish();
        Transaction::new(payload)
    }

    /// Recipient and amount when the payload is a payment.
    pub fn payment_info(&self) -> Option<(PartyId, Money)> {
        let mut d = Decoder::new(&self.payload);
        if d.field().ok()? != PAYMENT_TAG {
            return None;
        }
        let to = std::str::from_utf8(d.field().ok()?).ok()?;
        let amount: Money = std::str::from_utf8(d.field().ok()?).ok()?.parse().ok()?;
        d.field().ok()?;
        d.finish().ok()?;
        if amount.is_negative() {
            return None;
        }
        Some((PartyId::new(to), amount))
    }

    pub fn is_well_formed(&self) -> bool {
        hash(&self.payload) == self.txid
    }
}

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tx({:?}, {} octets)", self.txid, self.payload.len())
    }
}

/// Binary Merkle tree built by splitting at ⌈n/2⌉, with no leaf duplication.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MerkleTree {
    pub leaves: Vec<Digest>,
    nodes: Vec<MtNode>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct MtNode {
    label: Digest,
    children: Option<(usize, usize)>,
    span: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MerkleProof {
    /// `(sibling label, side bit)` from the leaf upwards. Bit 0 means the
    /// running value is the left child.
    pub path: Vec<(Digest, u8)>,
}

impl MerkleTree {
    pub fn root(&self) -> Digest {
        self.nodes.last().expect("tree has a root").label
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Every non-leaf label equals `hash(left ‖ right)`.
    pub fn is_consistent(&self) -> bool {
        self.nodes.iter().all(|n| match n.children {
            Some((l, r)) => n.label == hash_pair(&self.nodes[l].label, &self.nodes[r].label),
            None => n.label == self.leaves[n.span.0],
        })
    }
}

pub fn build_mt(txs: &[Transaction]) -> Result<MerkleTree, ChainError> {
    if txs.is_empty() {
        return Err(ChainError::EmptyPayload);
    }
    let leaves: Vec<Digest> = txs.iter().map(|t| hash(&t.payload)).collect();
    let mut nodes = Vec::with_capacity(2 * leaves.len());
    build_range(&leaves, 0, leaves.len(), &mut nodes);
    Ok(MerkleTree { leaves, nodes })
}

fn build_range(leaves: &[Digest], lo: usize, hi: usize, nodes: &mut Vec<MtNode>) -> usize {
    let n = hi - lo;
    let node = if n == 1 {
        MtNode { label: leaves[lo], children: None, span: (lo, hi) }
    } else {
        let mid = lo + n.div_ceil(2);
        let l = build_range(leaves, lo, mid, nodes);
        let r = build_range(leaves, mid, hi, nodes);
        let label = hash_pair(&nodes[l].label, &nodes[r].label);
        MtNode { label, children: Some((l, r)), span: (lo, hi) }
    };
    nodes.push(node);
    nodes.len() - 1
}

pub fn gen_mtp(mt: &MerkleTree, tx: &Transaction) -> Result<MerkleProof, ChainError> {
    let leaf = hash(&tx.payload);
    let index = mt
        .leaves
        .iter()
        .position(|l| *l == leaf)
        .ok_or(ChainError::NotALeaf(leaf))?;
    let mut path = Vec::new();
    let mut at = mt.nodes.len() - 1;
    while let Some((l, r)) = mt.nodes[at].children {
        if index < mt.nodes[l].span.1 {
            path.push((mt.nodes[r].label, 0));
            at = l;
        } else {
            path.push((mt.nodes[l].label, 1));
            at = r;
        }
    }
    path.reverse();
    Ok(MerkleProof { path })
}

pub fn vrfy_mtp(root: &Digest, proof: &MerkleProof, leaf: &Digest) -> bool {
    let mut x = *leaf;
    for (sibling, bit) in &proof.path {
        x = match bit {
            0 => hash_pair(&x, sibling),
            1 => hash_pair(sibling, &x),
            _ => return false,
        };
    }
    x == *root
}

impl MerkleProof {
    pub fn encode(&self, enc: &mut Encoder) {
        enc.count(self.path.len());
        for (sibling, bit) in &self.path {
            enc.field(&sibling.0).field(&[*bit]);
        }
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n = dec.count()?;
        let mut path = Vec::with_capacity(n);
        for _ in 0..n {
            let sibling = Digest(dec.fixed::<32>()?);
            let [bit] = dec.fixed::<1>()?;
            path.push((sibling, bit));
        }
        Ok(MerkleProof { path })
    }
}

/// The hashed part of a block: `(height, h_{t-1}, nonce, root)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_hash: Digest,
    pub nonce: Vec<u8>,
    pub root: Digest,
}

impl BlockHeader {
    pub fn serialize(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.height)
            .field(&self.prev_hash.0)
            .field(&self.nonce)
            .field(&self.root.0);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BlockHeader {
            height: dec.u64()?,
            prev_hash: Digest(dec.fixed::<32>()?),
            nonce: dec.field()?.to_vec(),
            root: Digest(dec.fixed::<32>()?),
        })
    }

    pub fn hash(&self) -> Digest {
        hash(&self.serialize())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub payload: Vec<Transaction>,
    pub tree: MerkleTree,
}

impl Block {
    pub fn height(&self) -> u64 {
        self.header.height
    }
}

/// Flat balance map. Missing parties hold zero.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ledger {
    balances: BTreeMap<PartyId, Money>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn balance(&self, party: &PartyId) -> Money {
        self.balances.get(party).cloned().unwrap_or_else(Money::zero)
    }

    /// Mints funds; only used to endow parties before a run.
    pub fn endow(&mut self, party: &PartyId, amount: Money) {
        *self.balances.entry(party.clone()).or_default() += amount;
    }

    pub fn transfer(&mut self, from: &PartyId, to: &PartyId, amount: &Money) -> Result<(), ChainError> {
        if amount.is_negative() {
            return Err(ChainError::NegativeAmount(amount.clone()));
        }
        let balance = self.balance(from);
        if balance < *amount {
            return Err(ChainError::InsufficientFunds {
                party: from.clone(),
                balance,
                amount: amount.clone(),
            });
        }
        if amount.is_zero() {
            return Ok(());
        }
        *self.balances.entry(from.clone()).or_default() -= amount;
        *self.balances.entry(to.clone()).or_default() += amount;
        Ok(())
    }

    pub fn total(&self) -> Money {
        self.balances.values().cloned().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PartyId, &Money)> {
        self.balances.iter()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Chain {
    pub blocks: Vec<Block>,
    pub blockhashes: BTreeMap<u64, Digest>,
    pub ledger: Ledger,
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block at the next height. The first block is the genesis
    /// block with an all-zero `prev_hash`.
    pub fn append_block(&mut self, txs: Vec<Transaction>) -> Result<&Block, ChainError> {
        let tree = build_mt(&txs)?;
        let height = self.blocks.len() as u64;
        let prev_hash = match height {
            0 => Digest::ZERO,
            h => self.blockhashes[&(h - 1)],
        };
        let header = BlockHeader {
            height,
            prev_hash,
            nonce: height.to_be_bytes().to_vec(),
            root: tree.root(),
        };
        self.blockhashes.insert(height, header.hash());
        self.blocks.push(Block { header, payload: txs, tree });
        Ok(self.blocks.last().expect("just pushed"))
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn tip_height(&self) -> Option<u64> {
        self.blocks.last().map(Block::height)
    }

    /// Checks heights, linkage, roots and `blockhashes` for every block.
    pub fn is_consistent(&self) -> bool {
        self.blocks.iter().enumerate().all(|(t, b)| {
            let prev_ok = match t {
                0 => b.header.prev_hash == Digest::ZERO,
                _ => Some(&b.header.prev_hash) == self.blockhashes.get(&(t as u64 - 1)),
            };
            b.header.height == t as u64
                && prev_ok
                && b.tree.is_consistent()
                && build_mt(&b.payload).map(|mt| mt.root()) == Ok(b.header.root)
                && self.blockhashes.get(&(t as u64)) == Some(&b.header.hash())
        }) && self.blockhashes.len() == self.blocks.len()
    }

    /// One block per line: height, hex prev_hash, hex root, tx count.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            out.push_str(&format!(
                "{} {} {} {}\n",
                b.header.height,
                b.header.prev_hash,
                b.header.root,
                b.payload.len()
            ));
        }
        out
    }
}

/// Random filler transaction.
pub fn random_tx(rng: &mut impl RngCore) -> Transaction {
    let len = rng.gen_range(8..48);
    let mut payload = vec![0u8; len];
    rng.fill_bytes(&mut payload);
    Transaction::new(payload)
}

/// A chain of `num_blocks` blocks of `txs_per_block` filler transactions, with
/// each `(height, tx)` in `planted` inserted at a seeded position in that block.
pub fn generate_chain(
    rng: &mut impl RngCore,
    num_blocks: usize,
    txs_per_block: usize,
    planted: &[(u64, Transaction)],
) -> Result<Chain, ChainError> {
    let mut chain = Chain::new();
    for t in 0..num_blocks as u64 {
        let mut txs: Vec<Transaction> = (0..txs_per_block).map(|_| random_tx(rng)).collect();
        for (_, tx) in planted.iter().filter(|(h, _)| *h == t) {
            let at = rng.gen_range(0..=txs.len());
            txs.insert(at, tx.clone());
        }
        chain.append_block(txs)?;
    }
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn txs(n: usize) -> Vec<Transaction> {
        (0..n).map(|i| Transaction::new(format!("tx-{i}").into_bytes())).collect()
    }

    #[test]
    fn single_leaf_root_is_leaf_hash() {
        let t = txs(1);
        let mt = build_mt(&t).unwrap();
        assert_eq!(mt.root(), hash(&t[0].payload));
        let proof = gen_mtp(&mt, &t[0]).unwrap();
        assert!(proof.path.is_empty());
        assert!(vrfy_mtp(&mt.root(), &proof, &t[0].txid));
    }

    #[test]
    fn two_leaf_root_hand_expanded() {
        let t = txs(2);
        let mut cat = hash(&t[0].payload).0.to_vec();
        cat.extend_from_slice(&hash(&t[1].payload).0);
        assert_eq!(build_mt(&t).unwrap().root(), hash(&cat));
    }

    #[test]
    fn odd_count_splits_at_ceiling() {
        // n = 3: left covers tx1, tx2 and right is tx3 alone, with no duplication.
        let t = txs(3);
        let h: Vec<Digest> = t.iter().map(|x| hash(&x.payload)).collect();
        let expected = hash_pair(&hash_pair(&h[0], &h[1]), &h[2]);
        assert_eq!(build_mt(&t).unwrap().root(), expected);
        // n = 5: split 3 | 2.
        let t = txs(5);
        let h: Vec<Digest> = t.iter().map(|x| hash(&x.payload)).collect();
        let left = hash_pair(&hash_pair(&h[0], &h[1]), &h[2]);
        let right = hash_pair(&h[3], &h[4]);
        assert_eq!(build_mt(&t).unwrap().root(), hash_pair(&left, &right));
    }

    #[test]
    fn eight_leaf_proofs_have_length_three() {
        let t = txs(8);
        let mt = build_mt(&t).unwrap();
        for tx in &t {
            let proof = gen_mtp(&mt, tx).unwrap();
            assert_eq!(proof.path.len(), 3);
            assert!(vrfy_mtp(&mt.root(), &proof, &tx.txid));
        }
    }

    #[test]
    fn side_bits_follow_position() {
        let t = txs(2);
        let mt = build_mt(&t).unwrap();
        assert_eq!(gen_mtp(&mt, &t[0]).unwrap().path[0].1, 0);
        assert_eq!(gen_mtp(&mt, &t[1]).unwrap().path[0].1, 1);
    }

    #[test]
    fn permutation_changes_root() {
        let t = txs(4);
        let mut u = t.clone();
        u.swap(0, 3);
        assert_ne!(build_mt(&t).unwrap().root(), build_mt(&u).unwrap().root());
    }

    #[test]
    fn empty_and_absent_are_errors() {
        assert_eq!(build_mt(&[]), Err(ChainError::EmptyPayload));
        let mt = build_mt(&txs(3)).unwrap();
        let stranger = Transaction::new(b"stranger".to_vec());
        assert_eq!(gen_mtp(&mt, &stranger), Err(ChainError::NotALeaf(stranger.txid)));
    }

    #[test]
    fn flipped_bit_or_sibling_fails() {
        let t = txs(6);
        let mt = build_mt(&t).unwrap();
        let mut proof = gen_mtp(&mt, &t[4]).unwrap();
        proof.path[0].1 ^= 1;
        assert!(!vrfy_mtp(&mt.root(), &proof, &t[4].txid));
        let mut proof = gen_mtp(&mt, &t[4]).unwrap();
        proof.path[1].0 .0[0] ^= 1;
        assert!(!vrfy_mtp(&mt.root(), &proof, &t[4].txid));
        let mut proof = gen_mtp(&mt, &t[4]).unwrap();
        proof.path[0].1 = 2;
        assert!(!vrfy_mtp(&mt.root(), &proof, &t[4].txid));
    }

    #[test]
    fn genesis_and_append_link() {
        let mut c = Chain::new();
        c.append_block(txs(2)).unwrap();
        c.append_block(txs(3)).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.blockhashes.len(), 2);
        assert_eq!(c.blocks[0].header.prev_hash, Digest::ZERO);
        assert_eq!(c.blocks[1].header.prev_hash, c.blockhashes[&0]);
        assert!(c.is_consistent());
        assert_eq!(c.append_block(vec![]).unwrap_err(), ChainError::EmptyPayload);
    }

    #[test]
    fn hundred_appends_stay_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = generate_chain(&mut rng, 100, 16, &[]).unwrap();
        assert!(c.is_consistent());
        assert_eq!(c.dump().lines().count(), 100);
    }

    #[test]
    fn tampering_breaks_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = generate_chain(&mut rng, 4, 3, &[]).unwrap();
        c.blocks[2].payload[0] = Transaction::new(b"forged".to_vec());
        assert!(!c.is_consistent());
    }

    #[test]
    fn transfers() {
        let (a, b) = (PartyId::new("A"), PartyId::new("B"));
        let mut l = Ledger::new();
        l.endow(&a, Money::from_int(10));
        let before = l.clone();
        l.transfer(&a, &b, &Money::zero()).unwrap();
        assert_eq!(l, before);
        l.transfer(&a, &b, &Money::from_int(4)).unwrap();
        assert_eq!(l.balance(&a), Money::from_int(6));
        assert_eq!(l.balance(&b), Money::from_int(4));
        assert!(matches!(
            l.transfer(&a, &b, &Money::from_int(11)),
            Err(ChainError::InsufficientFunds { .. })
        ));
        assert!(matches!(l.transfer(&a, &b, &Money::from_int(-1)), Err(ChainError::NegativeAmount(_))));
        assert_eq!(l.total(), Money::from_int(10));
    }

    #[test]
    fn payment_payload_round_trip() {
        let to = PartyId::new("LW");
        let tx = Transaction::payment(&to, &Money::ratio(7, 2), b"m1");
        assert_eq!(tx.payment_info(), Some((to, Money::ratio(7, 2))));
        assert_eq!(Transaction::new(b"plain".to_vec()).payment_info(), None);
    }

    #[test]
    fn header_serialization_round_trip() {
        let mut c = Chain::new();
        c.append_block(txs(3)).unwrap();
        let h = &c.blocks[0].header;
        let bytes = h.serialize();
        let mut d = Decoder::new(&bytes);
        assert_eq!(&BlockHeader::decode(&mut d).unwrap(), h);
        d.finish().unwrap();
    }
}
