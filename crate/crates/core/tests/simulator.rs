use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use superlight::actors::{Output, OutputRule, PfnStrategy, RelayAction, RelayStrategy};
use superlight::contract::{IncentiveKind, ProtocolParams};
use superlight::game::{build_game, Action, GameMode, GameSpec, MoneyParams, NodeKind};
use superlight::money::Money;
use superlight::sim::{run_scenario, trace_to_string, EconomicParams, ScenarioConfig, SimError, SimEvent};
use superlight::PartyId;

const HONEST: &str = include_str!("../../../scenarios/honest_two_relay.cfg");
const AUGMENTED: &str = include_str!("../../../scenarios/augmented_debate.cfg");

fn m(n: i64) -> Money {
    Money::from_int(n)
}

#[test]
fn config_errors_name_the_line() {
    let cases = [
        ("k = 2\np = 4\nbogus = 1\n", 3, "bogus"),
        ("# comment\n\np = four\n", 3, "p"),
        ("k = 1\nk = 2\n", 2, "k"),
        ("mode = three_relay\n", 1, "mode"),
        ("mode = one_relay\nstrategies.relay2 = honest\n", 2, "strategies.relay2"),
        ("queries.kind = sometimes\n", 1, "queries.kind"),
        ("k = 1\njust words\n", 2, "just words"),
    ];
    for (text, line, key) in cases {
        let err = text.parse::<ScenarioConfig>().unwrap_err();
        assert_eq!((err.line, err.key.as_str()), (line, key), "{text:?}: {err}");
    }
}

#[test]
fn semantic_errors_are_rejected() {
    for text in [
        "k = 2\nqueries.truths = true\n",
        "k = 0\n",
        "delta_T = 0\n",
        "mode = two_relay\nstrategies.pfn = monitor\n",
        "mode = one_relay\nstrategies.client.report = left\n",
        "econ.rho = 3/2\n",
        "strategies.relay1 = collude\nstrategies.relay2 = collude\n",
    ] {
        assert!(text.parse::<ScenarioConfig>().is_err(), "{text:?} accepted");
    }
}

#[test]
fn runs_are_reproducible() {
    let cfg: ScenarioConfig = HONEST.parse().unwrap();
    for seed in [0, 7, 99] {
        let mut c = cfg.clone();
        c.seed = seed;
        c.truths = None;
        let (a, ra) = run_scenario(&c).unwrap();
        let (b, rb) = run_scenario(&c).unwrap();
        assert_eq!(trace_to_string(&a), trace_to_string(&b));
        assert_eq!(ra, rb);
    }
}

#[test]
fn trace_lines_round_trip() {
    let (trace, _) = run_scenario(&AUGMENTED.parse().unwrap()).unwrap();
    for ev in &trace {
        assert_eq!(SimEvent::parse(&ev.to_string()).as_ref(), Some(ev));
    }
}

#[test]
fn funds_are_conserved_under_random_strategies() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let relay_choices = ["honest", "always_opposite", "fake_proof", "silent", "collude"];
    for round in 0..40 {
        let mode = ["two_relay", "one_relay", "augmented"][round % 3];
        let mut text = format!("mode = {mode}\nk = {}\nseed = {round}\n", rng.gen_range(1..4));
        let seats = if mode == "two_relay" { 2 } else { 1 };
        // Collusion needs a partner seat, so only relay 1 may follow.
        let choices = if seats == 2 { relay_choices.len() } else { relay_choices.len() - 1 };
        text += &format!("strategies.relay1 = {}\n", relay_choices[rng.gen_range(0..choices)]);
        if seats == 2 {
            text += &format!("strategies.relay2 = {}\n", relay_choices[rng.gen_range(0..choices - 1)]);
        }
        let reports: &[&str] = if seats == 2 { &["all", "left", "right", "withhold"] } else { &["all", "withhold"] };
        text += &format!("strategies.client.report = {}\n", reports[rng.gen_range(0..reports.len())]);
        if mode == "augmented" {
            text += &format!("strategies.pfn = {}\n", ["monitor", "idle"][rng.gen_range(0..2)]);
        }
        let cfg: ScenarioConfig = match text.parse() {
            Ok(c) => c,
            Err(e) => panic!("{text}\n{e}"),
        };
        let (trace, report) = run_scenario(&cfg).unwrap();
        let setup_total: Money = [PartyId::client(), PartyId::relay(1), PartyId::relay(2)]
            .iter()
            .take(1 + seats)
            .map(|p| cfg.balance_of(p))
            .sum();
        let end = trace.iter().find(|e| e.kind == "end").unwrap();
        assert_eq!(end.get("total").unwrap(), setup_total.to_string(), "{text}");
        let burned: Money = report.queries.iter().map(|q| q.burn.clone()).sum();
        let held: Money = report.balances.values().cloned().sum();
        assert_eq!(&held, &setup_total, "{text}");
        assert_eq!(report.balances.get(&PartyId::burn_sink()).cloned().unwrap_or_default(), burned);
        assert_eq!(report.balances.get(&PartyId::contract()).cloned().unwrap_or_default(), Money::zero());
    }
}

#[test]
fn abort_stops_requests_and_keeps_the_deposit() {
    let mut cfg: ScenarioConfig = HONEST.parse().unwrap();
    cfg.abort_after = Some(1);
    let (trace, report) = run_scenario(&cfg).unwrap();
    assert_eq!(trace.iter().filter(|e| e.kind == "request").count(), 1);
    assert_eq!(report.queries.len(), 1);
    assert!(!report.expired);
    // The answered query locked p+e+2d_F+d_L = 35 and credited 11 back; the
    // client's deposit for the unused queries stays in the contract.
    let lw = report.balances.get(&PartyId::client()).unwrap();
    assert_eq!(lw, &(&cfg.balance_of(&PartyId::client()) - &m(35 - 11)));
    assert_eq!(report.utilities.get(&PartyId::client()), Some(&m(6)));
    assert!(report.balances.get(&PartyId::contract()).unwrap().is_positive());
}

#[test]
fn client_fooled_only_by_an_uncontested_lie() {
    let mut cfg: ScenarioConfig = HONEST.parse().unwrap();
    cfg.relays = vec![RelayStrategy::constant(RelayAction::F), RelayStrategy::constant(RelayAction::F)];
    let (_, report) = run_scenario(&cfg).unwrap();
    assert_eq!(report.correct_outputs(), 0);
    cfg.relays[1] = RelayStrategy::Honest;
    let (_, report) = run_scenario(&cfg).unwrap();
    assert!(report.queries.iter().all(|q| q.output == Some(Output::None)));
}

fn money_params() -> MoneyParams {
    MoneyParams { p: m(6), e: m(1), r: m(4), d_l: m(10), d_f: m(10) }
}

/// Every terminal of the one-stage augmented game, replayed through the
/// simulator with the full node scripted from its two moves.
#[test]
fn augmented_terminals_match_the_simulator() {
    let econ = EconomicParams { c: m(8), v: m(20), v1: m(3), ..EconomicParams::default() };
    let money = money_params();
    let tree = build_game(&GameSpec::new(GameMode::Augmented, 1, money.clone(), econ.clone())).unwrap();
    let mut compared = 0;
    for (id, node) in tree.nodes.iter().enumerate() {
        let NodeKind::Terminal { utility } = &node.kind else { continue };
        let mut cfg = ScenarioConfig::new(IncentiveKind::OneRelayAugmented);
        cfg.params = ProtocolParams { k: 1, p: money.p.clone(), e: money.e.clone(), r: money.r.clone(), d_l: money.d_l.clone(), d_f: money.d_f.clone(), delta_t: 1 };
        cfg.econ = econ.clone();
        cfg.truths = Some(vec![true]);
        let mut watch = true;
        let mut debate = true;
        for a in tree.history(id) {
            match a {
                Action::Watch(w) => watch = w,
                Action::Debate(d) => debate = d,
                Action::Query(false) => cfg.abort_after = Some(0),
                Action::Chance(t) => cfg.truths = Some(vec![t]),
                Action::Relay(r) => cfg.relays[0] = RelayStrategy::constant(r),
                Action::Client(report, output) => {
                    cfg.client.report = report;
                    cfg.client.output = match output {
                        Output::True => OutputRule::AlwaysTrue,
                        Output::False => OutputRule::AlwaysFalse,
                        Output::None => OutputRule::NoOutput,
                    };
                }
                Action::Query(true) => {}
            }
        }
        cfg.pfn = Some(if watch { PfnStrategy::Monitor { debate_on_cheat: debate } } else { PfnStrategy::Idle });
        let (_, report) = run_scenario(&cfg).unwrap();
        for (i, party) in [PartyId::client(), PartyId::relay(1)].iter().enumerate() {
            let sim = report.utilities.get(party).cloned().unwrap_or_default();
            assert_eq!(sim, utility[i], "{} {party}", tree.history_string(id));
        }
        compared += 1;
    }
    assert!(compared > 30);
}

#[test]
fn invalid_runtime_config_is_reported() {
    let mut cfg: ScenarioConfig = HONEST.parse().unwrap();
    cfg.relays.pop();
    assert!(matches!(run_scenario(&cfg), Err(SimError::InvalidConfig(_))));
}
