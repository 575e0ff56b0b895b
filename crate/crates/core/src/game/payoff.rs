//! Per-stage utility increments, derived mechanically from the incentive
//! clauses plus the economic interpretation of outputs. Written independently
//! of the contract module so the two can be cross-checked.

use crate::actors::{Output, RelayAction, Report};
use crate::money::Money;

use super::{GameMode, GameSpec};

/// What the contract can establish about one reported response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Seen {
    Proof,
    Forged,
    Bottom,
}

/// What the client sees from one relay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Claim {
    True,
    False,
    Silent,
}

pub fn claim_of(truth: bool, act: RelayAction) -> Claim {
    match act {
        RelayAction::X => Claim::Silent,
        RelayAction::T if truth => Claim::True,
        RelayAction::F if !truth => Claim::True,
        _ => Claim::False,
    }
}

fn seen(truth: bool, act: RelayAction) -> Option<Seen> {
    match (truth, act) {
        (_, RelayAction::X) => None,
        (true, RelayAction::T) => Some(Seen::Proof),
        (false, RelayAction::F) => Some(Seen::Forged),
        _ => Some(Seen::Bottom),
    }
}

/// One realized stage: ground truth, relay moves, client move, and (augmented)
/// the public full node's monitor and debate choices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageOutcome {
    pub truth: bool,
    pub relays: Vec<RelayAction>,
    pub report: Report,
    pub output: Output,
    pub watch: bool,
    pub debate: bool,
}

/// Ledger credits `[LW, R1, R2, PFN]` of a stage and the clause label.
pub fn stage_credits(spec: &GameSpec, o: &StageOutcome) -> ([Money; 4], String) {
    let g = &spec.money;
    let (p, e, r, d_f, d_l) = (&g.p, &g.e, &g.r, &g.d_f, &g.d_l);
    let mut c: [Money; 4] = Default::default();
    let reported = |seat: usize| -> Option<Seen> {
        let included = match o.report {
            Report::All => true,
            Report::Left => seat == 0,
            Report::Right => seat == 1,
            Report::Withhold => false,
        };
        if included {
            o.relays.get(seat).and_then(|a| seen(o.truth, *a))
        } else {
            None
        }
    };
    let label;
    match spec.mode {
        GameMode::TwoRelay => {
            let (a, b) = (reported(0), reported(1));
            let three_halves = d_f.half().times(3);
            match (a, b) {
                (Some(x), Some(y)) => {
                    // Sort into (better, worse) so symmetric clauses share code.
                    let rank = |s: Seen| match s {
                        Seen::Proof => 0,
                        Seen::Forged => 1,
                        Seen::Bottom => 2,
                    };
                    let (hi, lo, hi_seat, lo_seat) =
                        if rank(x) <= rank(y) { (x, y, 1, 2) } else { (y, x, 2, 1) };
                    match (hi, lo) {
                        (Seen::Proof, Seen::Proof) => {
                            label = "1";
                            c[1] = &p.half() + d_f;
                            c[2] = &p.half() + d_f;
                            c[0] = e.clone();
                        }
                        (Seen::Proof, Seen::Forged) | (Seen::Proof, Seen::Bottom) => {
                            label = if lo == Seen::Forged { "2" } else { "3" };
                            c[hi_seat] = p + &three_halves;
                            c[0] = e + &d_f.half();
                        }
                        (Seen::Forged, Seen::Forged) => {
                            label = "4";
                            c[0] = &(p + e) + &d_f.times(2);
                        }
                        (Seen::Forged, Seen::Bottom) => {
                            label = "5";
                            c[lo_seat] = &(&p.half() - r) + d_f;
                            c[0] = &(&p.half() + e) + &(r + d_f);
                        }
                        (Seen::Bottom, Seen::Bottom) => {
                            label = "6";
                            c[1] = &(&p.half() - r) + d_f;
                            c[2] = &(&p.half() - r) + d_f;
                            c[0] = e + &r.times(2);
                        }
                        _ => unreachable!("pair is sorted"),
                    }
                }
                (Some(s), None) | (None, Some(s)) => {
                    let seat = if a.is_some() { 1 } else { 2 };
                    let other = 3 - seat;
                    c[other] = d_f.clone();
                    match s {
                        Seen::Proof => {
                            label = "7";
                            c[seat] = p + d_f;
                            c[0] = e.half();
                        }
                        Seen::Forged => {
                            label = "8";
                            c[0] = &(p + e).half() + &d_f.half();
                        }
                        Seen::Bottom => {
                            label = "9";
                            c[seat] = &(&p.half() - r) + d_f;
                            c[0] = &e.half() + r;
                        }
                    }
                }
                (None, None) => {
                    label = "10";
                    c[1] = d_f.clone();
                    c[2] = d_f.clone();
                }
            }
        }
        GameMode::OneRelay | GameMode::Augmented => match reported(0) {
            Some(Seen::Proof) => {
                label = "one-proof";
                c[1] = p + d_f;
                c[0] = e.clone();
            }
            Some(Seen::Forged) => {
                label = "one-invalid";
                c[0] = &(p + e) + d_f;
            }
            Some(Seen::Bottom) if spec.mode == GameMode::Augmented => {
                if o.truth && o.watch && o.debate {
                    label = "debate-upheld";
                    c[3] = d_f.clone();
                    c[0] = p + e;
                } else {
                    label = "debate-unchallenged";
                    c[1] = d_f + p;
                    c[0] = e.clone();
                }
            }
            Some(Seen::Bottom) => {
                label = "one-bottom";
                c[1] = &(p - r) + d_f;
                c[0] = e + r;
            }
            None => {
                label = "one-none";
                c[1] = d_f.clone();
            }
        },
    }
    c[0] += d_l;
    (c, label.to_string())
}

/// Utility increments `[LW, R1, R2, PFN]` of one stage.
pub fn stage_utility(spec: &GameSpec, o: &StageOutcome) -> [Money; 4] {
    let (mut u, _) = stage_credits(spec, o);
    let g = &spec.money;
    u[0] -= &(&g.p + &g.e);
    if o.output == Output::None {
        u[0] -= &spec.econ.c;
    }
    if o.output.is_fooled(o.truth) {
        u[0] -= &spec.econ.v;
        u[1] += &spec.econ.v1;
        if spec.mode == GameMode::TwoRelay {
            u[2] += &spec.econ.v2;
        }
    }
    u
}

/// Whether a truthful debate is possible: the relay hid a true predicate
/// behind a reported ⊥.
pub fn debate_possible(spec: &GameSpec, truth: bool, act: RelayAction, report: Report) -> bool {
    spec.mode == GameMode::Augmented && truth && act == RelayAction::F && report == Report::All
}
