use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use superlight::chain::{build_mt, gen_mtp, vrfy_mtp};
use superlight::contract::IncentiveKind;
use superlight::game::{build_game, check_theorem, CheckOptions, GameMode, GameSpec, MoneyParams};
use superlight::money::Money;
use superlight::predicate::{evaluate, validate_true, Evaluation};
use superlight::sim::{run_scenario, EconomicParams, ScenarioConfig};
use superlight_bench::{chain_with_predicates, transactions};

fn merkle(c: &mut Criterion) {
    let mut g = c.benchmark_group("merkle");
    for n in [8, 64, 512] {
        let txs = transactions(n);
        g.bench_with_input(BenchmarkId::new("build", n), &txs, |b, txs| b.iter(|| build_mt(black_box(txs)).unwrap()));
        let mt = build_mt(&txs).unwrap();
        let tx = &txs[n / 3];
        let proof = gen_mtp(&mt, tx).unwrap();
        g.bench_with_input(BenchmarkId::new("prove", n), &n, |b, _| b.iter(|| gen_mtp(&mt, black_box(tx)).unwrap()));
        g.bench_with_input(BenchmarkId::new("verify", n), &n, |b, _| {
            b.iter(|| vrfy_mtp(&mt.root(), black_box(&proof), &tx.txid))
        });
    }
    g.finish();
}

fn predicate(c: &mut Criterion) {
    let mut g = c.benchmark_group("predicate");
    let (chain, txid, inflow) = chain_with_predicates(64);
    for (name, pred) in [("txid", &txid), ("inflow", &inflow)] {
        g.bench_function(format!("evaluate/{name}"), |b| b.iter(|| evaluate(black_box(pred), &chain).unwrap()));
        let Evaluation::Proof(sigma) = evaluate(pred, &chain).unwrap() else { unreachable!() };
        g.bench_function(format!("validate/{name}"), |b| {
            b.iter(|| validate_true(black_box(&sigma), pred, &chain.blockhashes))
        });
    }
    g.finish();
}

fn scenario(c: &mut Criterion) {
    let mut g = c.benchmark_group("scenario");
    for (name, mode) in [
        ("two_relay", IncentiveKind::TwoRelayBasic),
        ("one_relay", IncentiveKind::OneRelayBasic),
        ("augmented", IncentiveKind::OneRelayAugmented),
    ] {
        let mut cfg = ScenarioConfig::new(mode);
        cfg.params.k = 4;
        g.bench_function(name, |b| b.iter(|| run_scenario(black_box(&cfg)).unwrap()));
    }
    g.finish();
}

fn game(c: &mut Criterion) {
    let m = Money::from_int;
    let money = MoneyParams { p: m(4), e: m(1), r: m(0), d_l: m(10), d_f: m(10) };
    let econ = EconomicParams { c: m(6), v: m(20), v1: m(5), v2: m(5), ..EconomicParams::default() };
    let mut g = c.benchmark_group("game");
    g.sample_size(10);
    for k in [1, 2] {
        let spec = GameSpec::new(GameMode::TwoRelay, k, money.clone(), econ.clone());
        g.bench_with_input(BenchmarkId::new("build_two_relay", k), &spec, |b, s| b.iter(|| build_game(s).unwrap()));
        g.bench_with_input(BenchmarkId::new("check_two_relay", k), &k, |b, &k| {
            b.iter(|| check_theorem(1, money.clone(), econ.clone(), k, CheckOptions::default()).unwrap())
        });
    }
    g.bench_function("check_two_relay_staged/3", |b| {
        b.iter(|| check_theorem(1, money.clone(), econ.clone(), 3, CheckOptions::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, merkle, predicate, scenario, game);
criterion_main!(benches);
