//! Finite extensive-form games of the protocol and an exhaustive checker for
//! its equilibrium claims.
//!
//! Histories read as action strings, e.g. `QattTA`: the client queries,
//! chance picks a true predicate, both relays forward the truth, and the
//! client reports both responses and outputs True.

use std::fmt;

use thiserror::Error;

use crate::actors::{Output, RelayAction, Report};
use crate::money::Money;
use crate::sim::EconomicParams;

pub mod payoff;
pub mod search;
pub mod table;
pub mod theorem;
pub mod tree;

pub use search::{
    beliefs_from_trembles, expected_utility, find_profitable_deviation, honest_profile, Assessment, Deviation,
    Profile, SearchStats,
};

pub use theorem::{check_theorem, lemma_check, params_from_pairs, CheckOptions, TheoremReport};
pub use tree::{build_game, utility_of, GameTree, InfoSet, Node, NodeKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GameMode {
    /// Two non-cooperative relays.
    TwoRelay,
    /// One relay, basic incentive.
    OneRelay,
    /// One relay plus a public full node that may debate.
    Augmented,
}

impl GameMode {
    pub fn relay_count(self) -> usize {
        match self {
            GameMode::TwoRelay => 2,
            _ => 1,
        }
    }
}

/// Whether the public full node chooses to monitor or is pinned to idle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PfnMode {
    Strategic,
    ForcedIdle,
}

/// Contract money parameters used by the game.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MoneyParams {
    pub p: Money,
    pub e: Money,
    pub r: Money,
    pub d_l: Money,
    pub d_f: Money,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameSpec {
    pub mode: GameMode,
    pub k: u64,
    pub money: MoneyParams,
    pub econ: EconomicParams,
    /// Merge the two relays into one decision-maker with pooled utility.
    pub coalition: bool,
    pub pfn: PfnMode,
}

impl GameSpec {
    pub fn new(mode: GameMode, k: u64, money: MoneyParams, econ: EconomicParams) -> Self {
        GameSpec { mode, k, money, econ, coalition: false, pfn: PfnMode::Strategic }
    }

    pub fn check(&self) -> Result<(), GameError> {
        if self.k == 0 {
            return Err(GameError::BadParams("k must be at least 1".into()));
        }
        let m = &self.money;
        let c = &self.econ;
        for (name, v) in [
            ("p", &m.p),
            ("e", &m.e),
            ("r", &m.r),
            ("d_L", &m.d_l),
            ("d_F", &m.d_f),
            ("c", &c.c),
            ("v", &c.v),
            ("v1", &c.v1),
            ("v2", &c.v2),
        ] {
            if v.is_negative() {
                return Err(GameError::BadParams(format!("{name} must be non-negative, got {v}")));
            }
        }
        if c.rho <= num_traits::Zero::zero() || c.rho >= num_traits::One::one() {
            return Err(GameError::BadParams("rho must lie strictly between 0 and 1".into()));
        }
        if self.coalition && self.mode != GameMode::TwoRelay {
            return Err(GameError::BadParams("coalition needs two relays".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("game has about {0} terminals, above the enumeration limit")]
    TooLarge(u128),
    #[error("history is not terminal: {0}")]
    NotTerminal(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
}

/// The four seats. In coalition mode `R2` moves on behalf of `R1`'s agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Player {
    LW,
    R1,
    R2,
    Pfn,
}

impl Player {
    pub const ALL: [Player; 4] = [Player::LW, Player::R1, Player::R2, Player::Pfn];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Player::LW => "LW",
            Player::R1 => "R1",
            Player::R2 => "R2",
            Player::Pfn => "PFN",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Action {
    /// Public full node: monitor (`m`) or not (`x`).
    Watch(bool),
    /// Client: query (`Q`) or abort (`B`).
    Query(bool),
    /// Chance: true (`a`) or false (`a'`).
    Chance(bool),
    Relay(RelayAction),
    Client(Report, Output),
    /// Public full node: debate (`d`) or not (`n`).
    Debate(bool),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Watch(true) => f.write_str("m"),
            Action::Watch(false) => f.write_str("x"),
            Action::Query(true) => f.write_str("Q"),
            Action::Query(false) => f.write_str("B"),
            Action::Chance(true) => f.write_str("a"),
            Action::Chance(false) => f.write_str("a'"),
            Action::Relay(a) => write!(f, "{a}"),
            Action::Client(r, o) => write!(f, "{r}{o}"),
            Action::Debate(true) => f.write_str("d"),
            Action::Debate(false) => f.write_str("n"),
        }
    }
}

/// Renders a history as its action string.
pub fn history_string(actions: &[Action]) -> String {
    actions.iter().map(|a| a.to_string()).collect()
}
