//! Simulator and equilibrium checker for an incentive-driven superlight
//! blockchain client.

// Money is an arbitrary-precision rational, so errors that carry amounts are
// large; they are rare and never on a hot path.
#![allow(clippy::result_large_err, clippy::large_enum_variant)]

pub mod actors;
pub mod chain;
pub mod codec;
pub mod contract;
pub mod crypto;
pub mod game;
pub mod golden;
pub mod money;
pub mod predicate;
pub mod sim;

pub use chain::{Block, BlockHeader, Chain, ChainError, Ledger, MerkleProof, MerkleTree, PartyId, Transaction};
pub use crypto::{Digest, KeyPair, PubKey, Signature};
pub use money::Money;
pub use predicate::{ChainPredicate, Evaluation, PredicateSpec, TruthProof};
