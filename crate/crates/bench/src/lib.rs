//! Seeded fixtures shared by the benchmarks in `benches/`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use superlight::chain::{generate_chain, Chain, Transaction};
use superlight::money::Money;
use superlight::predicate::{ChainPredicate, PredicateSpec};
use superlight::PartyId;

/// `n` distinct payloads of 64 octets.
pub fn transactions(n: usize) -> Vec<Transaction> {
    (0..n).map(|i| Transaction::new(format!("{i:064}").into_bytes())).collect()
}

/// A chain of `blocks` blocks with a planted target and three payments to
/// `acct`, plus the txid and inflow predicates over them.
pub fn chain_with_predicates(blocks: usize) -> (Chain, ChainPredicate, ChainPredicate) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let target = Transaction::new(b"bench target".to_vec());
    let acct = PartyId::new("acct");
    let mut planted = vec![(blocks as u64 / 2, target.clone())];
    for j in 0..3 {
        let pay = Transaction::payment(&acct, &Money::from_int(j + 2), format!("pay{j}").as_bytes());
        planted.push((j as u64 + 1, pay));
    }
    let chain = generate_chain(&mut rng, blocks, 8, &planted).expect("fixture chain");
    let tip = blocks as u64 - 1;
    let txid = ChainPredicate::txid_equals(target.txid, tip);
    let inflow = ChainPredicate::new(PredicateSpec::InflowAtLeast { address: acct, threshold: Money::from_int(9) }, 3, tip)
        .expect("fixture predicate");
    (chain, txid, inflow)
}
