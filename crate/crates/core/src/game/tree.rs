//! Explicit game trees. Nodes are stored in preorder, so every child has a
//! larger index than its parent.

use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::One;

use crate::actors::{Output, RelayAction, Report};
use crate::money::Money;

use super::payoff::{claim_of, debate_possible, stage_utility, Claim, StageOutcome};
use super::{history_string, Action, GameError, GameMode, GameSpec, PfnMode, Player};

/// Upper bound on terminal histories of an explicitly built tree.
pub const TERMINAL_LIMIT: u128 = 10_000_000;

pub type Utility = [Money; 4];

#[derive(Clone, Debug)]
pub enum NodeKind {
    /// `children[i]` follows `infosets[infoset].actions[i]`.
    Decision { player: Player, infoset: usize, children: Vec<usize> },
    Chance { children: Vec<usize>, probs: Vec<BigRational> },
    Terminal { utility: Utility },
}

#[derive(Clone, Debug)]
pub struct Node {
    pub parent: Option<usize>,
    pub action: Option<Action>,
    pub depth: u32,
    pub stage: u64,
    pub kind: NodeKind,
}

#[derive(Clone, Debug)]
pub struct InfoSet {
    /// The deciding agent (the coalition is represented by `R1`).
    pub owner: Player,
    /// The seat that moves.
    pub mover: Player,
    pub label: String,
    pub stage: u64,
    pub depth: u32,
    pub nodes: Vec<usize>,
    pub actions: Vec<Action>,
}

#[derive(Clone, Debug)]
pub struct GameTree {
    pub spec: GameSpec,
    pub nodes: Vec<Node>,
    pub infosets: Vec<InfoSet>,
}

impl GameTree {
    pub fn root(&self) -> usize {
        0
    }

    pub fn terminal_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n.kind, NodeKind::Terminal { .. })).count()
    }

    pub fn children(&self, node: usize) -> &[usize] {
        match &self.nodes[node].kind {
            NodeKind::Decision { children, .. } | NodeKind::Chance { children, .. } => children,
            NodeKind::Terminal { .. } => &[],
        }
    }

    /// The action sequence leading to `node`.
    pub fn history(&self, mut node: usize) -> Vec<Action> {
        let mut out = Vec::new();
        while let Some(parent) = self.nodes[node].parent {
            out.push(self.nodes[node].action.expect("non-root nodes carry an action"));
            node = parent;
        }
        out.reverse();
        out
    }

    pub fn history_string(&self, node: usize) -> String {
        history_string(&self.history(node))
    }

    /// Follows `actions` from the root.
    pub fn find(&self, actions: &[Action]) -> Option<usize> {
        let mut node = self.root();
        for a in actions {
            node = *self.children(node).iter().find(|c| self.nodes[**c].action == Some(*a))?;
        }
        Some(node)
    }

    /// Infosets owned by `agent`, in construction order.
    pub fn infosets_of(&self, agent: Player) -> impl Iterator<Item = usize> + '_ {
        (0..self.infosets.len()).filter(move |i| self.infosets[*i].owner == agent)
    }

    /// The agents that actually move in this game.
    pub fn agents(&self) -> Vec<Player> {
        let mut v: Vec<Player> = self.infosets.iter().map(|s| s.owner).collect();
        v.sort();
        v.dedup();
        v
    }

    /// An agent's utility: the coalition pools both relays.
    pub fn agent_utility(&self, agent: Player, u: &Utility) -> Money {
        if self.spec.coalition && agent == Player::R1 {
            &u[1] + &u[2]
        } else {
            u[agent.index()].clone()
        }
    }
}

#[derive(Clone, Debug, Default)]
struct StageState {
    watch: bool,
    truth: bool,
    relays: Vec<RelayAction>,
    report: Option<Report>,
    output: Option<Output>,
    debate: bool,
}

#[derive(Clone, Copy, Debug)]
enum Step {
    Watch,
    Query,
    Chance,
    Relay(usize),
    Client,
    Debate,
    End,
}

#[derive(Clone, Debug, Default)]
struct Ctx {
    obs: [Vec<String>; 4],
    acc: Utility,
}

struct Builder {
    spec: GameSpec,
    tail: Utility,
    nodes: Vec<Node>,
    infosets: Vec<InfoSet>,
    index: HashMap<String, usize>,
}

fn client_set_name(mode: GameMode, claims: &[Claim]) -> String {
    match mode {
        GameMode::TwoRelay => {
            let pos = |c: Claim| match c {
                Claim::True => 0,
                Claim::False => 1,
                Claim::Silent => 2,
            };
            format!("I{}", pos(claims[0]) * 3 + pos(claims[1]) + 1)
        }
        _ => match claims[0] {
            Claim::True => "Q(at|a'f)".into(),
            Claim::False => "Q(af|a't)".into(),
            Claim::Silent => "Q(ax|a'x)".into(),
        },
    }
}

fn client_actions(claims: &[Claim]) -> Vec<Action> {
    let both = claims.len() == 2 && claims.iter().all(|c| *c != Claim::Silent);
    let reports: &[Report] =
        if both { &[Report::All, Report::Left, Report::Right, Report::Withhold] } else { &[Report::All, Report::Withhold] };
    let mut v = Vec::new();
    for r in reports {
        for o in [Output::True, Output::False, Output::None] {
            v.push(Action::Client(*r, o));
        }
    }
    v
}

impl Builder {
    fn push(&mut self, parent: Option<usize>, action: Option<Action>, stage: u64) -> usize {
        let depth = parent.map_or(0, |p| self.nodes[p].depth + 1);
        self.nodes.push(Node {
            parent,
            action,
            depth,
            stage,
            kind: NodeKind::Terminal { utility: Default::default() },
        });
        self.nodes.len() - 1
    }

    #[allow(clippy::too_many_arguments)]
    fn infoset(&mut self, owner: Player, mover: Player, key: String, label: String, stage: u64, depth: u32, actions: Vec<Action>, node: usize) -> usize {
        let id = match self.index.get(&key) {
            Some(id) => *id,
            None => {
                self.infosets.push(InfoSet { owner, mover, label, stage, depth, nodes: Vec::new(), actions });
                self.index.insert(key, self.infosets.len() - 1);
                self.infosets.len() - 1
            }
        };
        self.infosets[id].nodes.push(node);
        id
    }

    fn owner_of(&self, mover: Player) -> Player {
        if self.spec.coalition && mover == Player::R2 {
            Player::R1
        } else {
            mover
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn decision(
        &mut self,
        parent: Option<usize>,
        action: Option<Action>,
        stage: u64,
        mover: Player,
        name: &str,
        actions: Vec<Action>,
        st: &StageState,
        ctx: &Ctx,
        step: Step,
    ) -> usize {
        let id = self.push(parent, action, stage);
        let owner = self.owner_of(mover);
        let own = ctx.obs[mover.index()].join(" ");
        let key = format!("{mover}|{own}|{name}");
        let label = if stage == 1 {
            format!("s1:{mover}:{name}")
        } else {
            let past: Vec<&String> = ctx.obs[mover.index()].iter().collect();
            format!("s{stage}:{mover}:{name}[{}]", past.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" "))
        };
        let depth = self.nodes[id].depth;
        let infoset = self.infoset(owner, mover, key, label, stage, depth, actions.clone(), id);
        let mut children = Vec::with_capacity(actions.len());
        for a in actions {
            let (st2, ctx2, next) = self.apply(stage, st, ctx, step, a);
            children.push(self.node(Some(id), Some(a), stage, next, st2, ctx2));
        }
        self.nodes[id].kind = NodeKind::Decision { player: mover, infoset, children };
        id
    }

    /// Updates stage state and observations after `a` is played at `step`.
    fn apply(&self, _stage: u64, st: &StageState, ctx: &Ctx, step: Step, a: Action) -> (StageState, Ctx, Step) {
        let mut st = st.clone();
        let mut ctx = ctx.clone();
        let token = a.to_string();
        let obs = &mut ctx.obs;
        let next = match (step, a) {
            (Step::Watch, Action::Watch(w)) => {
                st.watch = w;
                obs[Player::Pfn.index()].push(token);
                Step::Query
            }
            (Step::Query, Action::Query(_)) => {
                for o in obs.iter_mut() {
                    o.push(token.clone());
                }
                Step::Chance
            }
            (Step::Chance, Action::Chance(t)) => {
                st.truth = t;
                for p in [Player::R1, Player::R2, Player::Pfn] {
                    obs[p.index()].push(token.clone());
                }
                Step::Relay(0)
            }
            (Step::Relay(i), Action::Relay(ra)) => {
                st.relays.push(ra);
                let mover = if i == 0 { Player::R1 } else { Player::R2 };
                obs[mover.index()].push(token.clone());
                if self.spec.coalition && i == 0 {
                    obs[Player::R2.index()].push(format!("R1:{token}"));
                }
                let claim = match claim_of(st.truth, ra) {
                    Claim::True => "T",
                    Claim::False => "F",
                    Claim::Silent => "-",
                };
                obs[Player::LW.index()].push(format!("c{}={claim}", i + 1));
                if i + 1 < self.spec.mode.relay_count() {
                    Step::Relay(i + 1)
                } else {
                    Step::Client
                }
            }
            (Step::Client, Action::Client(r, o)) => {
                st.report = Some(r);
                st.output = Some(o);
                obs[Player::LW.index()].push(token);
                if self.spec.mode == GameMode::Augmented {
                    let opened = r == Report::All && claim_of(st.truth, st.relays[0]) == Claim::False;
                    obs[Player::Pfn.index()].push(if opened { "open".into() } else { "settled".into() });
                }
                Step::Debate
            }
            (Step::Debate, Action::Debate(d)) => {
                st.debate = d;
                obs[Player::Pfn.index()].push(token);
                Step::End
            }
            _ => unreachable!("action {a} does not fit step {step:?}"),
        };
        (st, ctx, next)
    }

    fn node(&mut self, parent: Option<usize>, action: Option<Action>, stage: u64, step: Step, st: StageState, ctx: Ctx) -> usize {
        let spec = self.spec.clone();
        match step {
            Step::Watch => {
                if spec.mode == GameMode::Augmented && spec.pfn == PfnMode::Strategic {
                    let acts = vec![Action::Watch(true), Action::Watch(false)];
                    self.decision(parent, action, stage, Player::Pfn, "watch", acts, &st, &ctx, step)
                } else {
                    self.node(parent, action, stage, Step::Query, st, ctx)
                }
            }
            Step::Query => {
                let acts = vec![Action::Query(true), Action::Query(false)];
                self.decision_or_abort(parent, action, stage, st, ctx, acts)
            }
            Step::Chance => {
                let id = self.push(parent, action, stage);
                let rho = spec.econ.rho.clone();
                let probs = vec![rho.clone(), BigRational::one() - rho];
                let mut children = Vec::new();
                for t in [true, false] {
                    let (st2, ctx2, next) = self.apply(stage, &st, &ctx, step, Action::Chance(t));
                    children.push(self.node(Some(id), Some(Action::Chance(t)), stage, next, st2, ctx2));
                }
                self.nodes[id].kind = NodeKind::Chance { children, probs };
                id
            }
            Step::Relay(i) => {
                let mover = if i == 0 { Player::R1 } else { Player::R2 };
                let name = if st.truth { "Qa" } else { "Qa'" };
                let acts = [RelayAction::T, RelayAction::F, RelayAction::X].map(Action::Relay).to_vec();
                self.decision(parent, action, stage, mover, name, acts, &st, &ctx, step)
            }
            Step::Client => {
                let claims: Vec<Claim> = st.relays.iter().map(|a| claim_of(st.truth, *a)).collect();
                let name = client_set_name(spec.mode, &claims);
                self.decision(parent, action, stage, Player::LW, &name, client_actions(&claims), &st, &ctx, step)
            }
            Step::Debate => {
                let report = st.report.expect("client moved");
                if st.watch && debate_possible(&spec, st.truth, st.relays[0], report) {
                    let acts = vec![Action::Debate(true), Action::Debate(false)];
                    self.decision(parent, action, stage, Player::Pfn, "debate", acts, &st, &ctx, step)
                } else {
                    self.node(parent, action, stage, Step::End, st, ctx)
                }
            }
            Step::End => {
                let outcome = StageOutcome {
                    truth: st.truth,
                    relays: st.relays.clone(),
                    report: st.report.expect("client moved"),
                    output: st.output.expect("client moved"),
                    watch: st.watch,
                    debate: st.debate,
                };
                let u = stage_utility(&spec, &outcome);
                let mut ctx = ctx;
                for (acc, du) in ctx.acc.iter_mut().zip(u.iter()) {
                    *acc += du;
                }
                if stage == spec.k {
                    let id = self.push(parent, action, stage);
                    let mut utility = ctx.acc.clone();
                    for (x, t) in utility.iter_mut().zip(self.tail.iter()) {
                        *x += t;
                    }
                    self.nodes[id].kind = NodeKind::Terminal { utility };
                    id
                } else {
                    self.node(parent, action, stage + 1, Step::Watch, StageState::default(), ctx)
                }
            }
        }
    }

    /// The client's query node; `B` ends the game with no further increments.
    fn decision_or_abort(&mut self, parent: Option<usize>, action: Option<Action>, stage: u64, st: StageState, ctx: Ctx, acts: Vec<Action>) -> usize {
        let id = self.push(parent, action, stage);
        let own = ctx.obs[Player::LW.index()].join(" ");
        let key = format!("LW|{own}|query");
        let label = format!("s{stage}:LW:query");
        let depth = self.nodes[id].depth;
        let infoset = self.infoset(Player::LW, Player::LW, key, label, stage, depth, acts.clone(), id);
        let mut children = Vec::new();
        for a in acts {
            let child = if a == Action::Query(false) {
                let c = self.push(Some(id), Some(a), stage);
                self.nodes[c].kind = NodeKind::Terminal { utility: ctx.acc.clone() };
                c
            } else {
                let (st2, ctx2, next) = self.apply(stage, &st, &ctx, Step::Query, a);
                self.node(Some(id), Some(a), stage, next, st2, ctx2)
            };
            children.push(child);
        }
        self.nodes[id].kind = NodeKind::Decision { player: Player::LW, infoset, children };
        id
    }
}

/// Builds a tree of `spec.k` stages, adding `tail` to every terminal reached
/// after the last stage completes.
pub(crate) fn build_with_tail(spec: &GameSpec, tail: Utility) -> Result<GameTree, GameError> {
    spec.check()?;
    let estimate = estimate_terminals(spec);
    if estimate > TERMINAL_LIMIT {
        return Err(GameError::TooLarge(estimate));
    }
    let mut b = Builder { spec: spec.clone(), tail, nodes: Vec::new(), infosets: Vec::new(), index: HashMap::new() };
    b.node(None, None, 1, Step::Watch, StageState::default(), Ctx::default());
    Ok(GameTree { spec: spec.clone(), nodes: b.nodes, infosets: b.infosets })
}

/// Terminal count from the one-stage shape: `B`-leaves and continuing leaves.
pub fn estimate_terminals(spec: &GameSpec) -> u128 {
    let m = spec.mode.relay_count() as u128;
    // Client leaves per chance branch: two-response sets have 12 actions.
    let per_chance = if m == 2 { 4 * 12 + 5 * 6 } else { 3 * 6 };
    let mut cont = 2 * per_chance;
    let mut aborts = 1u128;
    if spec.mode == GameMode::Augmented && spec.pfn == PfnMode::Strategic {
        // Monitoring adds a debate split after a hidden true predicate.
        cont = cont + (cont + 3);
        aborts = 2;
    }
    let mut total = 0u128;
    let mut reach = 1u128;
    for _ in 0..spec.k {
        total = total.saturating_add(reach.saturating_mul(aborts));
        reach = reach.saturating_mul(cont);
    }
    total.saturating_add(reach)
}

/// The explicit game: the client's remaining deposit `d_L` is returned when
/// all `k` queries complete.
pub fn build_game(spec: &GameSpec) -> Result<GameTree, GameError> {
    let mut tail: Utility = Default::default();
    tail[0] = spec.money.d_l.clone();
    build_with_tail(spec, tail)
}

/// Utility vector `[LW, R1, R2, PFN]` at a terminal history.
pub fn utility_of(tree: &GameTree, history: &[Action]) -> Result<Utility, GameError> {
    let node = tree.find(history).ok_or_else(|| GameError::NotTerminal(history_string(history)))?;
    match &tree.nodes[node].kind {
        NodeKind::Terminal { utility } => Ok(utility.clone()),
        _ => Err(GameError::NotTerminal(history_string(history))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{MoneyParams, PfnMode};
    use crate::sim::EconomicParams;

    pub(crate) fn spec(mode: GameMode, k: u64) -> GameSpec {
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
            EconomicParams::default(),
        )
    }

    #[test]
    fn terminal_counts() {
        // Hand count: B, plus per chance branch four two-response sets with
        // twelve actions and five other sets with six.
        let g = build_game(&spec(GameMode::TwoRelay, 1)).unwrap();
        assert_eq!(g.terminal_count(), 1 + 2 * (4 * 12 + 5 * 6));
        assert_eq!(estimate_terminals(&spec(GameMode::TwoRelay, 1)), 157);
        let g = build_game(&spec(GameMode::OneRelay, 1)).unwrap();
        assert_eq!(g.terminal_count(), 1 + 2 * 3 * 6);
        let g = build_game(&spec(GameMode::TwoRelay, 2)).unwrap();
        assert_eq!(g.terminal_count(), 1 + 156 * 157);
        assert_eq!(estimate_terminals(&spec(GameMode::TwoRelay, 2)), 1 + 156 * 157);
        let g = build_game(&spec(GameMode::Augmented, 1)).unwrap();
        assert_eq!(g.terminal_count() as u128, estimate_terminals(&spec(GameMode::Augmented, 1)));
    }

    #[test]
    fn client_faces_nine_or_three_sets() {
        let g = build_game(&spec(GameMode::TwoRelay, 1)).unwrap();
        let mut names: Vec<&str> = g.infosets.iter().filter(|s| s.mover == Player::LW && s.label != "s1:LW:query").map(|s| s.label.as_str()).collect();
        names.sort();
        assert_eq!(names, (1..=9).map(|i| format!("s1:LW:I{i}")).collect::<Vec<_>>());
        let i1 = g.infosets.iter().find(|s| s.label == "s1:LW:I1").unwrap();
        let mut hs: Vec<String> = i1.nodes.iter().map(|n| g.history_string(*n)).collect();
        hs.sort();
        assert_eq!(hs, vec!["Qa'ff", "Qatt"]);

        let g = build_game(&spec(GameMode::OneRelay, 1)).unwrap();
        let mut names: Vec<&str> = g.infosets.iter().filter(|s| s.mover == Player::LW && s.label != "s1:LW:query").map(|s| s.label.as_str()).collect();
        names.sort();
        assert_eq!(names, vec!["s1:LW:Q(af|a't)", "s1:LW:Q(at|a'f)", "s1:LW:Q(ax|a'x)"]);
    }

    #[test]
    fn second_relay_cannot_see_the_first() {
        let g = build_game(&spec(GameMode::TwoRelay, 1)).unwrap();
        let r2: Vec<&InfoSet> = g.infosets.iter().filter(|s| s.mover == Player::R2).collect();
        assert_eq!(r2.len(), 2);
        assert!(r2.iter().all(|s| s.nodes.len() == 3));
        let mut c = spec(GameMode::TwoRelay, 1);
        c.coalition = true;
        let g = build_game(&c).unwrap();
        let r2: Vec<&InfoSet> = g.infosets.iter().filter(|s| s.mover == Player::R2).collect();
        assert_eq!(r2.len(), 6);
        assert!(r2.iter().all(|s| s.owner == Player::R1));
    }

    #[test]
    fn debate_only_after_monitor_truth_and_hidden_proof() {
        let g = build_game(&spec(GameMode::Augmented, 1)).unwrap();
        let debates: Vec<&InfoSet> = g.infosets.iter().filter(|s| s.label == "s1:PFN:debate").collect();
        assert_eq!(debates.len(), 1);
        let mut hs: Vec<String> = debates[0].nodes.iter().map(|n| g.history_string(*n)).collect();
        hs.sort();
        assert_eq!(hs, vec!["mQafTA", "mQafTA'", "mQafTO"]);
        let mut idle = spec(GameMode::Augmented, 1);
        idle.pfn = PfnMode::ForcedIdle;
        let g = build_game(&idle).unwrap();
        assert!(g.infosets.iter().all(|s| s.mover != Player::Pfn));
        assert_eq!(g.terminal_count(), 37);
    }

    #[test]
    fn utility_examples() {
        let g = build_game(&spec(GameMode::TwoRelay, 1)).unwrap();
        let s = |h: &[Action]| utility_of(&g, h).unwrap();
        use Action::*;
        let (t, f) = (Relay(RelayAction::T), Relay(RelayAction::F));
        // Bonus d_L = 10 is added at game end on top of the stage increment.
        let u = s(&[Query(true), Chance(true), t, t, Client(Report::All, Output::True)]);
        assert_eq!(u[0], Money::from_int(10 - 4 + 10));
        assert_eq!(u[1], Money::from_int(2 + 10));
        // Fooled by two forged proofs: d_L - v + 2d_F, with the default v = 20.
        let u = s(&[Query(true), Chance(false), f, f, Client(Report::All, Output::True)]);
        assert_eq!(u[0], Money::from_int(10 - 20 + 20 + 10));
        assert_eq!((u[1].clone(), u[2].clone()), (Money::from_int(5), Money::from_int(5)));
        // No output: d_L - c - p.
        let u = s(&[Query(true), Chance(true), t, t, Client(Report::All, Output::None)]);
        let stage = 10 - 6 - 4;
        assert_eq!(u[0], Money::from_int(stage + 10));
        assert_eq!(s(&[Query(false)]), Utility::default());
        assert!(matches!(utility_of(&g, &[Query(true)]), Err(GameError::NotTerminal(_))));
    }
}
