//! Behavioral profiles, tremble-derived beliefs, and the one-shot deviation
//! search with best-response continuations.

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::actors::{Output, RelayAction, Report};
use crate::money::Money;

use super::tree::{GameTree, NodeKind};
use super::{Action, Player};

/// Per information set, a distribution over its actions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Profile {
    pub dist: Vec<Vec<BigRational>>,
}

impl Profile {
    /// Degenerate distributions on `choice[i]` at set `i`.
    pub fn pure(tree: &GameTree, choice: &[usize]) -> Self {
        let dist = tree
            .infosets
            .iter()
            .zip(choice)
            .map(|(s, c)| (0..s.actions.len()).map(|i| if i == *c { BigRational::one() } else { BigRational::zero() }).collect())
            .collect();
        Profile { dist }
    }

    /// The action index played with probability one, if any.
    pub fn pure_choice(&self, infoset: usize) -> Option<usize> {
        self.dist[infoset].iter().position(|p| p.is_one())
    }

    /// `β′(a) = η + (1 − nη)·β(a)`: every action gets at least `η`.
    pub fn perturb(&self, eta: &BigRational) -> Profile {
        let dist = self
            .dist
            .iter()
            .map(|d| {
                let n = BigRational::from_integer(d.len().into());
                let keep = BigRational::one() - &n * eta;
                d.iter().map(|p| eta + &keep * p).collect()
            })
            .collect();
        Profile { dist }
    }

    pub fn set(&mut self, infoset: usize, action: usize) {
        for (i, p) in self.dist[infoset].iter_mut().enumerate() {
            *p = if i == action { BigRational::one() } else { BigRational::zero() };
        }
    }
}

/// Probability of moving from `node` to its `i`-th child.
fn edge_prob<'a>(tree: &'a GameTree, profile: &'a Profile, node: usize, i: usize) -> &'a BigRational {
    match &tree.nodes[node].kind {
        NodeKind::Decision { infoset, .. } => &profile.dist[*infoset][i],
        NodeKind::Chance { probs, .. } => &probs[i],
        NodeKind::Terminal { .. } => unreachable!("terminals have no edges"),
    }
}

/// Reach probability of every node under `profile`.
pub fn reach(tree: &GameTree, profile: &Profile) -> Vec<BigRational> {
    let mut pi = vec![BigRational::zero(); tree.nodes.len()];
    pi[0] = BigRational::one();
    for n in 0..tree.nodes.len() {
        if pi[n].is_zero() {
            continue;
        }
        for (i, c) in tree.children(n).iter().enumerate() {
            pi[*c] = &pi[n] * edge_prob(tree, profile, n, i);
        }
    }
    pi
}

/// Expected utility of `agent` at every node when everyone follows `profile`.
pub fn values(tree: &GameTree, profile: &Profile, agent: Player) -> Vec<Money> {
    let mut v = vec![Money::zero(); tree.nodes.len()];
    for n in (0..tree.nodes.len()).rev() {
        v[n] = match &tree.nodes[n].kind {
            NodeKind::Terminal { utility } => tree.agent_utility(agent, utility),
            _ => tree
                .children(n)
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let p = edge_prob(tree, profile, n, i);
                    if p.is_zero() {
                        Money::zero()
                    } else {
                        v[*c].scale(p)
                    }
                })
                .sum(),
        };
    }
    v
}

/// A profile together with beliefs over the histories of every set.
#[derive(Clone, Debug)]
pub struct Assessment {
    pub profile: Profile,
    /// `beliefs[i][j]` is the weight of `infosets[i].nodes[j]`.
    pub beliefs: Vec<Vec<BigRational>>,
}

/// Beliefs by Bayes' rule under the `η`-perturbed profile. With `η = 0` the
/// profile itself is used; sets it never reaches get uniform beliefs.
pub fn beliefs_from_trembles(tree: &GameTree, profile: &Profile, eta: &BigRational) -> Assessment {
    let perturbed = if eta.is_zero() { profile.clone() } else { profile.perturb(eta) };
    let pi = reach(tree, &perturbed);
    let beliefs = tree
        .infosets
        .iter()
        .map(|s| {
            let total: BigRational = s.nodes.iter().map(|n| pi[*n].clone()).sum();
            if total.is_zero() {
                let u = BigRational::new(1.into(), s.nodes.len().into());
                vec![u; s.nodes.len()]
            } else {
                s.nodes.iter().map(|n| &pi[*n] / &total).collect()
            }
        })
        .collect();
    Assessment { profile: profile.clone(), beliefs }
}

/// `Σ_h μ(h)·V(h)` over the histories of `infoset`.
pub fn expected_utility(tree: &GameTree, assessment: &Assessment, agent: Player, infoset: usize) -> Money {
    let v = values(tree, &assessment.profile, agent);
    belief_average(tree, assessment, infoset, |n| v[n].clone())
}

fn belief_average(tree: &GameTree, a: &Assessment, infoset: usize, f: impl Fn(usize) -> Money) -> Money {
    tree.infosets[infoset].nodes.iter().zip(&a.beliefs[infoset]).map(|(n, mu)| f(*n).scale(mu)).sum()
}

fn nodes_by_depth(tree: &GameTree) -> Vec<Vec<usize>> {
    let max = tree.nodes.iter().map(|n| n.depth).max().unwrap_or(0) as usize;
    let mut levels = vec![Vec::new(); max + 1];
    for (i, n) in tree.nodes.iter().enumerate() {
        levels[n.depth as usize].push(i);
    }
    levels
}

/// Values when `agent` best-responds at each of its sets (given beliefs) and
/// everyone else follows the profile, plus the chosen action per set.
pub fn best_response(tree: &GameTree, a: &Assessment, agent: Player) -> (Vec<Money>, Vec<Option<usize>>) {
    let mut v = vec![Money::zero(); tree.nodes.len()];
    let mut choice: Vec<Option<usize>> = vec![None; tree.infosets.len()];
    for level in nodes_by_depth(tree).iter().rev() {
        for &n in level {
            v[n] = match &tree.nodes[n].kind {
                NodeKind::Terminal { utility } => tree.agent_utility(agent, utility),
                NodeKind::Decision { infoset, children, .. } if tree.infosets[*infoset].owner == agent => {
                    let pick = *choice[*infoset].get_or_insert_with(|| {
                        let scores: Vec<Money> = (0..children.len())
                            .map(|i| {
                                belief_average(tree, a, *infoset, |h| match &tree.nodes[h].kind {
                                    NodeKind::Decision { children, .. } => v[children[i]].clone(),
                                    _ => unreachable!(),
                                })
                            })
                            .collect();
                        let best = scores.iter().max().expect("non-empty action set");
                        match a.profile.pure_choice(*infoset) {
                            Some(c) if scores[c] == *best => c,
                            _ => scores.iter().position(|s| s == best).expect("max exists"),
                        }
                    });
                    v[children[pick]].clone()
                }
                _ => tree
                    .children(n)
                    .iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let p = edge_prob(tree, &a.profile, n, i);
                        if p.is_zero() {
                            Money::zero()
                        } else {
                            v[*c].scale(p)
                        }
                    })
                    .sum(),
            };
        }
    }
    (v, choice)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Deviation {
    pub agent: Player,
    pub infoset: usize,
    pub label: String,
    pub action: Action,
    pub gain: Money,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: usize,
    pub infosets: usize,
    pub deviations_tested: usize,
}

/// Gain of playing `action` once at `infoset` (then best-responding) over
/// following the profile, under the assessment's beliefs.
pub fn deviation_gain(tree: &GameTree, a: &Assessment, infoset: usize, action: usize) -> Money {
    let agent = tree.infosets[infoset].owner;
    let v = values(tree, &a.profile, agent);
    let (br, _) = best_response(tree, a, agent);
    gain_at(tree, a, infoset, action, &v, &br)
}

fn gain_at(tree: &GameTree, a: &Assessment, infoset: usize, action: usize, v: &[Money], br: &[Money]) -> Money {
    let ev = belief_average(tree, a, infoset, |n| v[n].clone());
    let dev = belief_average(tree, a, infoset, |h| br[tree.children(h)[action]].clone());
    &dev - &ev
}

/// Scans every agent, every set and every alternative pure action; returns
/// the first deviation whose gain exceeds `tol`.
pub fn find_profitable_deviation(
    tree: &GameTree,
    profile: &Profile,
    eta: &BigRational,
    tol: &Money,
) -> (Option<Deviation>, SearchStats) {
    let a = beliefs_from_trembles(tree, profile, eta);
    let mut stats = SearchStats { nodes: tree.nodes.len(), infosets: tree.infosets.len(), deviations_tested: 0 };
    for agent in tree.agents() {
        let v = values(tree, profile, agent);
        let (br, _) = best_response(tree, &a, agent);
        for s in tree.infosets_of(agent) {
            for (i, act) in tree.infosets[s].actions.iter().enumerate() {
                if profile.dist[s][i].is_one() {
                    continue;
                }
                stats.deviations_tested += 1;
                let gain = gain_at(tree, &a, s, i, &v, &br);
                if gain > *tol {
                    let dev = Deviation { agent, infoset: s, label: tree.infosets[s].label.clone(), action: *act, gain };
                    return (Some(dev), stats);
                }
            }
        }
    }
    (None, stats)
}

/// The protocol-following profile: query, relays forward the truth, the public
/// full node monitors and debates, the client reports everything. Client
/// outputs are best responses under tremble beliefs, ties broken A, A′, O.
pub fn honest_profile(tree: &GameTree, eta: &BigRational) -> Profile {
    let pick = |acts: &[Action], want: Action| acts.iter().position(|a| *a == want).unwrap_or(0);
    let choice: Vec<usize> = tree
        .infosets
        .iter()
        .map(|s| match s.actions[0] {
            Action::Watch(_) => pick(&s.actions, Action::Watch(true)),
            Action::Query(_) => pick(&s.actions, Action::Query(true)),
            Action::Relay(_) => pick(&s.actions, Action::Relay(RelayAction::T)),
            Action::Debate(_) => pick(&s.actions, Action::Debate(true)),
            Action::Client(..) => pick(&s.actions, Action::Client(Report::All, Output::True)),
            Action::Chance(_) => 0,
        })
        .collect();
    let mut profile = Profile::pure(tree, &choice);
    // Client beliefs do not depend on the client's own choices, so one
    // assessment serves every stage; outputs are fixed deepest stage first.
    let a = beliefs_from_trembles(tree, &profile, eta);
    let mut client_sets: Vec<usize> =
        tree.infosets_of(Player::LW).filter(|s| matches!(tree.infosets[*s].actions[0], Action::Client(..))).collect();
    client_sets.sort_by_key(|s| std::cmp::Reverse(tree.infosets[*s].depth));
    let mut depth = None;
    let mut v = values(tree, &profile, Player::LW);
    for s in client_sets {
        if depth != Some(tree.infosets[s].depth) {
            depth = Some(tree.infosets[s].depth);
            v = values(tree, &profile, Player::LW);
        }
        let acts = &tree.infosets[s].actions;
        let mut best: Option<(usize, Money)> = None;
        for o in [Output::True, Output::False, Output::None] {
            let i = pick(acts, Action::Client(Report::All, o));
            let score = belief_average(tree, &a, s, |h| v[tree.children(h)[i]].clone());
            if best.as_ref().is_none_or(|(_, b)| score > *b) {
                best = Some((i, score));
            }
        }
        profile.set(s, best.expect("three outputs").0);
    }
    profile
}

/// The stage strings of every history the pure profile reaches.
pub fn on_path(tree: &GameTree, profile: &Profile) -> Vec<Vec<String>> {
    let pi = reach(tree, profile);
    let mut out = Vec::new();
    for (n, node) in tree.nodes.iter().enumerate() {
        if !matches!(node.kind, NodeKind::Terminal { .. }) || pi[n].is_zero() {
            continue;
        }
        let mut stages: Vec<String> = Vec::new();
        let mut cur = n;
        let mut rev: Vec<(u64, Action)> = Vec::new();
        while let Some(parent) = tree.nodes[cur].parent {
            rev.push((tree.nodes[parent].stage, tree.nodes[cur].action.expect("edge action")));
            cur = parent;
        }
        rev.reverse();
        for (stage, act) in rev {
            while stages.len() < stage as usize {
                stages.push(String::new());
            }
            stages[stage as usize - 1].push_str(&act.to_string());
        }
        out.push(stages);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::tree::build_game;
    use crate::game::{GameMode, GameSpec, MoneyParams};
    use crate::sim::EconomicParams;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn spec(mode: GameMode, k: u64) -> GameSpec {
        GameSpec::new(
            mode,
            k,
            MoneyParams {
                p: Money::from_int(4),
                e: Money::from_int(1),
                r: Money::zero(),
                d_l: Money::from_int(10),
                d_f: Money::from_int(10),
            },
            EconomicParams { v: Money::from_int(12), ..EconomicParams::default() },
        )
    }

    #[test]
    fn perturbation_keeps_distributions() {
        let g = build_game(&spec(GameMode::OneRelay, 1)).unwrap();
        let p = honest_profile(&g, &r(1, 1000));
        let q = p.perturb(&r(1, 1000));
        for d in &q.dist {
            assert_eq!(d.iter().cloned().sum::<BigRational>(), BigRational::one());
            assert!(d.iter().all(|x| *x >= r(1, 1000)));
        }
    }

    #[test]
    fn root_value_is_two_term_expansion() {
        let g = build_game(&spec(GameMode::TwoRelay, 1)).unwrap();
        let p = honest_profile(&g, &r(1, 1_000_000));
        let a = beliefs_from_trembles(&g, &p, &BigRational::zero());
        let root_set = g.infosets.iter().position(|s| s.label == "s1:LW:query").unwrap();
        let ev = expected_utility(&g, &a, Player::LW, root_set);
        let ut = |h: &str| {
            let n = (0..g.nodes.len()).find(|n| g.history_string(*n) == h).unwrap();
            match &g.nodes[n].kind {
                NodeKind::Terminal { utility } => utility[0].clone(),
                _ => panic!(),
            }
        };
        let expect = &ut("QattTA").scale(&r(1, 2)) + &ut("Qa'ttTA'").scale(&r(1, 2));
        assert_eq!(ev, expect);
    }

    #[test]
    fn beliefs_on_path_are_stable_across_etas() {
        let g = build_game(&spec(GameMode::TwoRelay, 1)).unwrap();
        let p = honest_profile(&g, &r(1, 1_000_000));
        let a3 = beliefs_from_trembles(&g, &p, &r(1, 1000));
        let a6 = beliefs_from_trembles(&g, &p, &r(1, 1_000_000));
        let i1 = g.infosets.iter().position(|s| s.label == "s1:LW:I1").unwrap();
        for (x, y) in a3.beliefs[i1].iter().zip(&a6.beliefs[i1]) {
            let d = x - y;
            let d = if d < BigRational::zero() { -d } else { d };
            assert!(d < r(1, 100));
        }
        // On-path history Qatt carries almost all weight.
        let qatt = g.infosets[i1].nodes.iter().position(|n| g.history_string(*n) == "Qatt").unwrap();
        assert!(a6.beliefs[i1][qatt] > r(999, 1000));
    }

    #[test]
    fn off_path_belief_concentrates_on_single_tremble() {
        // I8 = {Qaxf, Qa'xt}: a'xt needs one relay tremble, axf needs two.
        let g = build_game(&spec(GameMode::TwoRelay, 1)).unwrap();
        let p = honest_profile(&g, &r(1, 1_000_000));
        let a = beliefs_from_trembles(&g, &p, &r(1, 1_000_000));
        let i8 = g.infosets.iter().position(|s| s.label == "s1:LW:I8").unwrap();
        let k = g.infosets[i8].nodes.iter().position(|n| g.history_string(*n) == "Qa'xt").unwrap();
        assert!(a.beliefs[i8][k] > r(999, 1000));
    }

    #[test]
    fn fully_mixed_profile_gives_exact_bayes_beliefs() {
        let g = build_game(&spec(GameMode::OneRelay, 1)).unwrap();
        let mut p = honest_profile(&g, &r(1, 1_000_000));
        for (i, s) in g.infosets.iter().enumerate() {
            let n = s.actions.len() as i64;
            p.dist[i] = vec![r(1, n); s.actions.len()];
        }
        let a = beliefs_from_trembles(&g, &p, &BigRational::zero());
        let silent = g.infosets.iter().position(|s| s.label == "s1:LW:Q(ax|a'x)").unwrap();
        assert_eq!(a.beliefs[silent], vec![r(1, 2), r(1, 2)]);
    }

    /// Enumerates every pure strategy of `agent` and returns the best root value.
    fn brute_force_best(g: &GameTree, base: &Profile, agent: Player) -> Money {
        let sets: Vec<usize> = g.infosets_of(agent).collect();
        let sizes: Vec<usize> = sets.iter().map(|s| g.infosets[*s].actions.len()).collect();
        let total: usize = sizes.iter().product();
        let mut best: Option<Money> = None;
        for mut code in 0..total {
            let mut p = base.clone();
            for (s, n) in sets.iter().zip(&sizes) {
                p.set(*s, code % n);
                code /= n;
            }
            let v = values(g, &p, agent)[0].clone();
            if best.as_ref().is_none_or(|b| v > *b) {
                best = Some(v);
            }
        }
        best.unwrap()
    }

    #[test]
    fn best_response_matches_full_enumeration() {
        // d_F + p - r > v_1 and r > v_1, with O the unique answer to silence.
        let mut s = spec(GameMode::OneRelay, 1);
        s.money.p = Money::from_int(6);
        s.money.r = Money::from_int(4);
        s.econ.v1 = Money::from_int(3);
        s.econ.c = Money::from_int(8);
        s.econ.v = Money::from_int(20);
        let g = build_game(&s).unwrap();
        let p = honest_profile(&g, &r(1, 1_000_000));
        let a = beliefs_from_trembles(&g, &p, &r(1, 1_000_000));
        for agent in [Player::LW, Player::R1] {
            let (br, _) = best_response(&g, &a, agent);
            assert_eq!(br[0], brute_force_best(&g, &p, agent), "{agent}");
        }
        // No one-shot deviation, and no strategy beats the profile ex ante.
        assert!(find_profitable_deviation(&g, &p, &r(1, 1_000_000), &Money::zero()).0.is_none());
        for agent in [Player::LW, Player::R1] {
            assert_eq!(brute_force_best(&g, &p, agent), values(&g, &p, agent)[0]);
        }
    }

    #[test]
    fn coalition_finds_joint_lie() {
        let mut s = spec(GameMode::TwoRelay, 1);
        s.coalition = true;
        let g = build_game(&s).unwrap();
        let p = honest_profile(&g, &r(1, 1_000_000));
        let (dev, _) = find_profitable_deviation(&g, &p, &r(1, 1_000_000), &Money::zero());
        let dev = dev.expect("two relays acting as one gain v1 + v2 by lying together");
        assert_eq!(dev.agent, Player::R1);
        assert_eq!(dev.action, Action::Relay(RelayAction::F));
    }
}
