//! Theorem checks: parameter conditions, exhaustive deviation search on the
//! protocol-following profile, equilibrium-path comparison, and the client
//! dominance lemma.

use num_rational::BigRational;

use crate::actors::{Output, Report};
use crate::money::Money;
use crate::sim::{EconomicParams, SimEvent};

use super::search::{
    beliefs_from_trembles, deviation_gain, find_profitable_deviation, honest_profile, on_path, values, Deviation,
    SearchStats,
};
use super::tree::{build_game, build_with_tail, GameTree, NodeKind, Utility};
use super::{Action, GameError, GameMode, GameSpec, MoneyParams, PfnMode, Player};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Condition {
    pub name: String,
    pub lhs: Money,
    pub rhs: Money,
    pub holds: bool,
}

impl Condition {
    fn gt(name: &str, lhs: Money, rhs: Money) -> Self {
        let holds = lhs > rhs;
        Condition { name: name.into(), lhs, rhs, holds }
    }
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub eta: BigRational,
    pub tol: Money,
    pub pfn: PfnMode,
    /// Force the stage decomposition even when the explicit tree is small.
    pub staged: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            eta: BigRational::new(1.into(), 1_000_000.into()),
            tol: Money::zero(),
            pfn: PfnMode::Strategic,
            staged: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TheoremReport {
    pub theorem: u8,
    pub spec: GameSpec,
    pub conditions: Vec<Condition>,
    /// All conditions hold, so the theorem predicts an equilibrium.
    pub predicted: bool,
    pub method: &'static str,
    pub stats: SearchStats,
    pub witness: Option<Deviation>,
    pub expected_path: String,
    pub path_matches: bool,
    pub eta_stable: bool,
    /// Augmented only: gain of the relay's `f` at a true predicate.
    pub relay_f_gain: Option<Money>,
    /// The theorem's conclusion holds for this game.
    pub holds: bool,
    pub options: CheckOptions,
}

impl TheoremReport {
    /// The conclusion agrees with what the conditions predict.
    pub fn as_predicted(&self) -> bool {
        self.holds == self.predicted
    }

    /// Key-value lines in the trace format.
    pub fn lines(&self) -> Vec<SimEvent> {
        let s = &self.spec;
        let ev = |kind: &str| SimEvent::new(0, "check", kind);
        let mode = match s.mode {
            GameMode::TwoRelay => "two_relay",
            GameMode::OneRelay => "one_relay",
            GameMode::Augmented => "augmented",
        };
        let mut out = vec![ev("params")
            .with("theorem", self.theorem)
            .with("mode", mode)
            .with("k", s.k)
            .with("p", &s.money.p)
            .with("e", &s.money.e)
            .with("r", &s.money.r)
            .with("d_L", &s.money.d_l)
            .with("d_F", &s.money.d_f)
            .with("c", &s.econ.c)
            .with("v", &s.econ.v)
            .with("v1", &s.econ.v1)
            .with("v2", &s.econ.v2)
            .with("rho", &s.econ.rho)
            .with("eta", &self.options.eta)
            .with("tol", &self.options.tol)
            .with("pfn", if s.pfn == PfnMode::Strategic { "strategic" } else { "idle" })];
        for c in &self.conditions {
            out.push(ev("condition").with("name", &c.name).with("lhs", &c.lhs).with("rhs", &c.rhs).with("holds", c.holds));
        }
        out.push(
            ev("search")
                .with("method", self.method)
                .with("nodes", self.stats.nodes)
                .with("infosets", self.stats.infosets)
                .with("deviations_tested", self.stats.deviations_tested),
        );
        out.push(ev("path").with("expected", &self.expected_path).with("matches", self.path_matches));
        out.push(ev("eta_check").with("eta2", "1/1000").with("same_verdict", self.eta_stable));
        if let Some(g) = &self.relay_f_gain {
            out.push(ev("relay_f").with("gain", g).with("strictly_unprofitable", g.is_negative()));
        }
        if let Some(w) = &self.witness {
            out.push(
                ev("witness")
                    .with("player", w.agent)
                    .with("infoset", w.label.replace(' ', "_"))
                    .with("action", w.action)
                    .with("gain", &w.gain),
            );
        }
        out.push(ev("verdict").with("holds", self.holds).with("predicted", self.predicted).with("as_predicted", self.as_predicted())
            .with("result", if self.holds { "holds" } else { "fails" }));
        out
    }
}

fn conditions(theorem: u8, m: &MoneyParams, c: &EconomicParams) -> Vec<Condition> {
    let mut v = Vec::new();
    match theorem {
        1 => {
            let lhs = &m.d_f + &m.p.half();
            v.push(Condition::gt("d_F+p/2>v1", lhs.clone(), c.v1.clone()));
            v.push(Condition::gt("d_F+p/2>v2", lhs, c.v2.clone()));
        }
        2 => {
            v.push(Condition::gt("d_F+p-r>v1", &(&m.d_f + &m.p) - &m.r, c.v1.clone()));
            v.push(Condition::gt("r>v1", m.r.clone(), c.v1.clone()));
        }
        _ => v.push(Condition::gt("d_F>v1", m.d_f.clone(), c.v1.clone())),
    }
    v.push(Condition::gt("d_L>p+e", m.d_l.clone(), &m.p + &m.e));
    v.push(Condition::gt("c>p", c.c.clone(), m.p.clone()));
    v.push(Condition::gt("p>0", m.p.clone(), Money::zero()));
    v
}

fn expected_stages(mode: GameMode) -> (String, String) {
    match mode {
        GameMode::TwoRelay => ("QattTA".into(), "Qa'ttTA'".into()),
        GameMode::OneRelay => ("QatTA".into(), "Qa'tTA'".into()),
        GameMode::Augmented => ("mQatTA".into(), "mQa'tTA'".into()),
    }
}

/// Every reached history is `k` stages, each one of the two expected strings,
/// and both appear.
fn path_ok(paths: &[Vec<String>], k: u64, mode: GameMode) -> bool {
    let (a, b) = expected_stages(mode);
    let shape = paths.iter().all(|stages| stages.len() == k as usize && stages.iter().all(|s| *s == a || *s == b));
    let both = |w: &String| paths.iter().any(|p| p.iter().any(|s| s == w));
    !paths.is_empty() && shape && both(&a) && both(&b)
}

/// The set holding the relay's move after a true predicate in stage 1.
fn relay_true_set(tree: &GameTree) -> Option<usize> {
    tree.infosets.iter().position(|s| s.mover == Player::R1 && s.label == "s1:R1:Qa")
}

/// Explicit search over the whole tree.
fn explicit(spec: &GameSpec, opts: &CheckOptions) -> Result<(Option<Deviation>, SearchStats, bool, bool, GameTree), GameError> {
    let tree = build_game(spec)?;
    let profile = honest_profile(&tree, &opts.eta);
    let (dev, stats) = find_profitable_deviation(&tree, &profile, &opts.eta, &opts.tol);
    let coarse = BigRational::new(1.into(), 1000.into());
    let coarse_profile = honest_profile(&tree, &coarse);
    let (dev2, _) = find_profitable_deviation(&tree, &coarse_profile, &coarse, &opts.tol);
    let path = path_ok(&on_path(&tree, &profile), spec.k, spec.mode);
    Ok((dev.clone(), stats, path, dev.is_some() == dev2.is_some(), tree))
}

/// Expected utility vector of one stage under the protocol-following profile.
pub fn stage_value(spec: &GameSpec, eta: &BigRational) -> Result<Utility, GameError> {
    let one = GameSpec { k: 1, ..spec.clone() };
    let tree = build_with_tail(&one, Utility::default())?;
    let profile = honest_profile(&tree, eta);
    let mut u = Utility::default();
    for p in Player::ALL {
        u[p.index()] = values(&tree, &profile, p)[0].clone();
    }
    Ok(u)
}

/// Stage decomposition: stage `j` is a one-stage game whose completed
/// histories also carry the protocol-following value of stages `j+1..=k` and
/// the final deposit return. Aborting forfeits both.
pub fn staged(spec: &GameSpec, opts: &CheckOptions) -> Result<(Option<Deviation>, SearchStats, bool, bool), GameError> {
    let one = GameSpec { k: 1, ..spec.clone() };
    let s = stage_value(spec, &opts.eta)?;
    let mut total = SearchStats::default();
    let mut path = true;
    let mut stable = true;
    for j in (1..=spec.k).rev() {
        let mut tail = Utility::default();
        for (t, sv) in tail.iter_mut().zip(&s) {
            *t = sv.times((spec.k - j) as i64);
        }
        tail[0] += &spec.money.d_l;
        let tree = build_with_tail(&one, tail)?;
        let profile = honest_profile(&tree, &opts.eta);
        let (dev, stats) = find_profitable_deviation(&tree, &profile, &opts.eta, &opts.tol);
        let coarse = BigRational::new(1.into(), 1000.into());
        let (dev2, _) = find_profitable_deviation(&tree, &honest_profile(&tree, &coarse), &coarse, &opts.tol);
        stable &= dev.is_some() == dev2.is_some();
        path &= path_ok(&on_path(&tree, &profile), 1, spec.mode);
        total.nodes += stats.nodes;
        total.infosets += stats.infosets;
        total.deviations_tested += stats.deviations_tested;
        if let Some(mut d) = dev {
            d.label = d.label.replacen("s1:", &format!("s{j}:"), 1);
            return Ok((Some(d), total, path, stable));
        }
    }
    Ok((None, total, path, stable))
}

/// Checks theorem 1 (two relays), 2 (one relay) or 3 (one relay plus a public
/// full node) at `k ≤ 3`.
pub fn check_theorem(
    theorem: u8,
    money: MoneyParams,
    econ: EconomicParams,
    k: u64,
    opts: CheckOptions,
) -> Result<TheoremReport, GameError> {
    let mode = match theorem {
        1 => GameMode::TwoRelay,
        2 => GameMode::OneRelay,
        3 => GameMode::Augmented,
        _ => return Err(GameError::BadParams(format!("unknown theorem {theorem}"))),
    };
    if !(1..=3).contains(&k) {
        return Err(GameError::BadParams(format!("k must be 1, 2 or 3, got {k}")));
    }
    let mut spec = GameSpec::new(mode, k, money, econ);
    spec.pfn = opts.pfn;
    spec.check()?;
    let conditions = conditions(theorem, &spec.money, &spec.econ);
    let predicted = conditions.iter().all(|c| c.holds) && opts.pfn == PfnMode::Strategic;
    let use_staged = opts.staged || k == 3;
    let (witness, stats, path_matches, eta_stable, method) = if use_staged {
        let (d, s, p, st) = staged(&spec, &opts)?;
        (d, s, p, st, "staged")
    } else {
        let (d, s, p, st, _) = explicit(&spec, &opts)?;
        (d, s, p, st, "explicit")
    };
    let relay_f_gain = if mode == GameMode::Augmented {
        let one = GameSpec { k: 1, ..spec.clone() };
        let tree = build_game(&one)?;
        let profile = honest_profile(&tree, &opts.eta);
        let a = beliefs_from_trembles(&tree, &profile, &opts.eta);
        let set = relay_true_set(&tree).expect("relay moves after a true predicate");
        let f = tree.infosets[set].actions.iter().position(|x| *x == Action::Relay(crate::actors::RelayAction::F)).expect("f");
        Some(deviation_gain(&tree, &a, set, f))
    } else {
        None
    };
    let mut holds = witness.is_none() && path_matches;
    if let Some(g) = &relay_f_gain {
        holds &= g.is_negative();
    }
    let (a, b) = expected_stages(mode);
    Ok(TheoremReport {
        theorem,
        spec,
        conditions,
        predicted,
        method,
        stats,
        witness,
        expected_path: format!("({a}|{b})^{k}"),
        path_matches,
        eta_stable,
        relay_f_gain,
        holds,
        options: opts,
    })
}

/// Builds theorem parameters from `key=value` pairs. `p`, `e`, `d_L`, `d_F`,
/// `c` and the relay benefit (`v_i`, or `v1` and for theorem 1 also `v2`) are
/// required; `r` is required for theorem 2 and otherwise defaults to 0; `v`
/// and `rho` default to the economic defaults.
pub fn params_from_pairs(theorem: u8, pairs: &[(String, String)]) -> Result<(MoneyParams, EconomicParams), GameError> {
    const KEYS: [&str; 11] = ["p", "e", "r", "d_L", "d_F", "c", "v", "v1", "v2", "v_i", "rho"];
    let mut map = std::collections::BTreeMap::new();
    for (k, v) in pairs {
        if !KEYS.contains(&k.as_str()) {
            return Err(GameError::BadParams(format!("unknown parameter '{k}' (expected one of {})", KEYS.join(", "))));
        }
        if map.insert(k.as_str(), v.as_str()).is_some() {
            return Err(GameError::BadParams(format!("parameter '{k}' given twice")));
        }
    }
    let money = |k: &str| -> Result<Option<Money>, GameError> {
        map.get(k)
            .map(|v| v.parse::<Money>().map_err(|e| GameError::BadParams(format!("parameter '{k}': {e}"))))
            .transpose()
    };
    let need = |k: &str| money(k)?.ok_or_else(|| GameError::BadParams(format!("missing parameter '{k}'")));
    let r = match (money("r")?, theorem) {
        (Some(r), _) => r,
        (None, 2) => return Err(GameError::BadParams("missing parameter 'r'".into())),
        (None, _) => Money::zero(),
    };
    let vi = money("v_i")?;
    let v1 = match (money("v1")?.as_ref(), vi.as_ref()) {
        (Some(v), _) | (None, Some(v)) => v.clone(),
        (None, None) => return Err(GameError::BadParams("missing parameter 'v1' (or 'v_i')".into())),
    };
    let v2 = match (money("v2")?.as_ref(), vi.as_ref()) {
        (Some(v), _) | (None, Some(v)) => v.clone(),
        (None, None) if theorem == 1 => return Err(GameError::BadParams("missing parameter 'v2' (or 'v_i')".into())),
        (None, None) => v1.clone(),
    };
    let mut econ = EconomicParams { c: need("c")?, v1, v2, ..EconomicParams::default() };
    if let Some(v) = money("v")? {
        econ.v = v;
    }
    if let Some(rho) = map.get("rho") {
        econ.rho = crate::money::parse_rational(rho).ok_or_else(|| GameError::BadParams(format!("parameter 'rho': bad number '{rho}'")))?;
    }
    let money = MoneyParams { p: need("p")?, e: need("e")?, r, d_l: need("d_L")?, d_f: need("d_F")? };
    Ok((money, econ))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LemmaViolation {
    pub infoset: String,
    pub history: String,
    pub action: Action,
    pub loss: Money,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LemmaReport {
    pub comparisons: usize,
    pub violations: Vec<LemmaViolation>,
}

fn leaf_utilities(tree: &GameTree, node: usize, out: &mut Vec<Money>) {
    match &tree.nodes[node].kind {
        NodeKind::Terminal { utility } => out.push(utility[0].clone()),
        _ => {
            for c in tree.children(node) {
                leaf_utilities(tree, *c, out);
            }
        }
    }
}

/// At every client set of the final stage and every history in it, each
/// action reporting L, R or X is weakly worse for the client than the same
/// output with T, for every continuation.
pub fn lemma_check(tree: &GameTree) -> LemmaReport {
    let mut report = LemmaReport::default();
    let k = tree.spec.k;
    for s in tree.infosets.iter().filter(|s| s.owner == Player::LW && s.stage == k) {
        if !matches!(s.actions[0], Action::Client(..)) {
            continue;
        }
        for &h in &s.nodes {
            for (i, a) in s.actions.iter().enumerate() {
                let Action::Client(rep, out) = *a else { continue };
                if rep == Report::All {
                    continue;
                }
                let t = s.actions.iter().position(|x| *x == Action::Client(Report::All, out)).expect("T is always available");
                let (mut tv, mut ov) = (Vec::new(), Vec::new());
                leaf_utilities(tree, tree.children(h)[t], &mut tv);
                leaf_utilities(tree, tree.children(h)[i], &mut ov);
                let worst_t = tv.iter().min().expect("leaf").clone();
                let best_other = ov.iter().max().expect("leaf").clone();
                report.comparisons += 1;
                if worst_t < best_other {
                    report.violations.push(LemmaViolation {
                        infoset: s.label.clone(),
                        history: tree.history_string(h),
                        action: *a,
                        loss: &best_other - &worst_t,
                    });
                }
            }
        }
    }
    report
}

/// The client output rule of a profile at its on-path two-claim sets, for
/// reports: `(set label, output)`.
pub fn client_outputs(tree: &GameTree, profile: &super::Profile) -> Vec<(String, Output)> {
    tree.infosets
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s.actions[profile.pure_choice(i)?] {
            Action::Client(_, o) => Some((s.label.clone(), o)),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(n: i64) -> Money {
        Money::from_int(n)
    }

    fn money(p: i64, e: i64, r: i64, d_l: i64, d_f: i64) -> MoneyParams {
        MoneyParams { p: m(p), e: m(e), r: m(r), d_l: m(d_l), d_f: m(d_f) }
    }

    fn econ(c: i64, v: i64, v1: i64, v2: i64) -> EconomicParams {
        EconomicParams { c: m(c), v: m(v), v1: m(v1), v2: m(v2), ..EconomicParams::default() }
    }

    #[test]
    fn first_example_holds() {
        let r = check_theorem(1, money(4, 1, 0, 10, 10), econ(6, 12, 5, 5), 1, CheckOptions::default()).unwrap();
        assert!(r.predicted && r.holds && r.path_matches && r.eta_stable, "{r:?}");
    }

    #[test]
    fn large_relay_benefit_yields_witness() {
        let r = check_theorem(1, money(4, 1, 0, 10, 10), econ(6, 12, 20, 5), 1, CheckOptions::default()).unwrap();
        assert!(!r.predicted && !r.holds);
        let w = r.witness.expect("witness");
        assert_eq!(w.agent, Player::R1);
        assert_eq!(w.action.to_string(), "f");
        assert!(w.gain.is_positive());
    }

    #[test]
    fn one_relay_example_holds() {
        let r = check_theorem(2, money(6, 1, 4, 10, 10), econ(8, 20, 3, 3), 1, CheckOptions::default()).unwrap();
        assert!(r.predicted && r.holds, "{:?}", r.witness);
    }

    #[test]
    fn one_relay_small_bounty_fails() {
        let r = check_theorem(2, money(6, 1, 2, 10, 10), econ(8, 20, 3, 3), 1, CheckOptions::default()).unwrap();
        assert!(!r.predicted && !r.holds && r.witness.is_some());
    }

    #[test]
    fn watched_relay_declines_to_lie() {
        let r = check_theorem(3, money(4, 1, 0, 10, 10), econ(6, 20, 5, 5), 1, CheckOptions::default()).unwrap();
        assert!(r.holds, "{:?}", r.witness);
        assert!(r.relay_f_gain.unwrap().is_negative());
    }

    #[test]
    fn staged_agrees_with_explicit_at_two_stages() {
        for (id, mo, ec) in [
            (1, money(4, 1, 0, 10, 10), econ(6, 12, 5, 5)),
            (1, money(4, 1, 0, 10, 10), econ(6, 12, 20, 5)),
            (2, money(6, 1, 4, 10, 10), econ(8, 20, 3, 3)),
            (2, money(6, 1, 2, 10, 10), econ(8, 20, 3, 3)),
        ] {
            let a = check_theorem(id, mo.clone(), ec.clone(), 2, CheckOptions::default()).unwrap();
            let opts = CheckOptions { staged: true, ..CheckOptions::default() };
            let b = check_theorem(id, mo, ec, 2, opts).unwrap();
            assert_eq!(a.holds, b.holds);
            assert_eq!(a.witness.is_some(), b.witness.is_some());
        }
    }

    #[test]
    fn three_stages_hold() {
        let r = check_theorem(1, money(4, 1, 0, 10, 10), econ(6, 12, 5, 5), 3, CheckOptions::default()).unwrap();
        assert_eq!(r.method, "staged");
        assert!(r.holds);
    }

    #[test]
    fn client_never_prefers_partial_reports() {
        let spec = GameSpec::new(GameMode::TwoRelay, 1, money(4, 1, 0, 10, 10), econ(6, 12, 5, 5));
        let tree = build_game(&spec).unwrap();
        let rep = lemma_check(&tree);
        // Nine sets; the two-claim ones have nine L/R/X actions, the rest three.
        assert!(rep.comparisons > 0);
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
    }

    #[test]
    fn report_lines_parse_back() {
        let r = check_theorem(1, money(4, 1, 0, 10, 10), econ(6, 12, 20, 5), 1, CheckOptions::default()).unwrap();
        let lines = r.lines();
        assert_eq!(lines.last().unwrap().get("holds"), Some("false"));
        for l in &lines {
            assert_eq!(SimEvent::parse(&l.to_string()).unwrap(), *l);
        }
    }
}
