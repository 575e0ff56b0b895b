//! The published per-stage utility tables of the two-relay game as a fixture,
//! with a small parser for their linear expressions and a comparison against
//! the mechanical payoff.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::actors::{Output, RelayAction, Report};
use crate::money::Money;

use super::payoff::{stage_utility, StageOutcome};
use super::{GameMode, GameSpec};

pub const FIXTURE: &str = include_str!("tables.txt");

const VARS: [&str; 10] = ["d_L", "d_F", "v_1", "v_2", "p", "e", "r", "v", "c", "eps"];

/// `Σ coef·var`, with no constant term.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinExpr {
    pub terms: BTreeMap<String, BigRational>,
}

impl LinExpr {
    pub fn parse(s: &str) -> Result<Self, String> {
        let mut out = LinExpr::default();
        if s == "0" {
            return Ok(out);
        }
        let mut rest = s;
        let mut sign = BigRational::one();
        if let Some(r) = rest.strip_prefix('-') {
            sign = -sign;
            rest = r;
        }
        loop {
            let end = rest[1..].find(['+', '-']).map_or(rest.len(), |i| i + 1);
            let (term, tail) = rest.split_at(end);
            let digits = term.chars().take_while(|c| c.is_ascii_digit()).count();
            let num: i64 = if digits == 0 { 1 } else { term[..digits].parse().map_err(|_| s.to_string())? };
            let body = &term[digits..];
            let (var, den) = match body.split_once('/') {
                Some((v, d)) => (v, d.parse::<i64>().map_err(|_| format!("bad divisor in {s}"))?),
                None => (body, 1),
            };
            if !VARS.contains(&var) {
                return Err(format!("unknown symbol {var:?} in {s}"));
            }
            let coef = sign * BigRational::new(BigInt::from(num), BigInt::from(den));
            *out.terms.entry(var.to_string()).or_insert_with(BigRational::zero) += coef;
            if tail.is_empty() {
                break;
            }
            sign = if tail.starts_with('-') { -BigRational::one() } else { BigRational::one() };
            rest = &tail[1..];
        }
        out.terms.retain(|_, c| !c.is_zero());
        Ok(out)
    }

    pub fn eval(&self, vals: &BTreeMap<&str, Money>) -> Money {
        self.terms.iter().map(|(v, c)| vals[v.as_str()].scale(c)).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableRow {
    pub table: u8,
    pub history: String,
    pub action: String,
    pub cells: [Option<LinExpr>; 3],
}

impl TableRow {
    /// The stage this row describes, or `None` for the abort row.
    pub fn outcome(&self) -> Option<StageOutcome> {
        if self.action == "B" {
            return None;
        }
        let truth = !self.history.starts_with("a'");
        let relays = self.history[if truth { 1 } else { 2 }..]
            .chars()
            .map(|c| match c {
                't' => RelayAction::T,
                'f' => RelayAction::F,
                _ => RelayAction::X,
            })
            .collect();
        let report = match &self.action[..1] {
            "T" => Report::All,
            "L" => Report::Left,
            "R" => Report::Right,
            _ => Report::Withhold,
        };
        let output = match &self.action[1..] {
            "A" => Output::True,
            "A'" => Output::False,
            _ => Output::None,
        };
        Some(StageOutcome { truth, relays, report, output, watch: false, debate: false })
    }
}

pub fn rows() -> Vec<TableRow> {
    FIXTURE
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let cell = |s: &str| if s == "-" { None } else { Some(LinExpr::parse(s).expect("fixture parses")) };
            TableRow {
                table: f[0].parse().expect("table number"),
                history: f[2].to_string(),
                action: f[3].to_string(),
                cells: [cell(f[4]), cell(f[5]), cell(f[6])],
            }
        })
        .collect()
}

/// A printed entry that disagrees with the mechanical rule, and the entry the
/// clauses give.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KnownDifference {
    pub history: &'static str,
    pub action: &'static str,
    pub column: usize,
    pub corrected: &'static str,
}

pub const KNOWN_DIFFERENCES: &[KnownDifference] = &[
    kd("atf", "TA", 0, "d_L-p+d_F/2"),
    kd("a'tf", "TA'", 0, "d_L-p/2+r+d_F"),
    kd("a'tf", "TA'", 1, "p/2-r+d_F"),
    kd("a'xt", "XA'", 0, "d_L-p-e"),
    kd("axx", "TA'", 1, "v_1+d_F"),
    kd("axx", "TA'", 2, "v_2+d_F"),
    kd("axx", "XA'", 1, "v_1+d_F"),
    kd("axx", "XA'", 2, "v_2+d_F"),
    kd("a'xx", "TA'", 1, "d_F"),
    kd("a'xx", "TA'", 2, "d_F"),
    kd("a'xx", "XA'", 1, "d_F"),
    kd("a'xx", "XA'", 2, "d_F"),
    kd("att", "LO", 0, "d_L-c-p-e/2"),
    kd("att", "RO", 0, "d_L-c-p-e/2"),
    kd("a'tf", "TO", 0, "d_L-c-p/2+r+d_F"),
    kd("a'xt", "XO", 0, "d_L-c-p-e"),
    kd("axx", "TO", 1, "d_F"),
    kd("axx", "TO", 2, "d_F"),
    kd("axx", "XO", 1, "d_F"),
    kd("axx", "XO", 2, "d_F"),
    kd("a'xx", "TO", 1, "d_F"),
    kd("a'xx", "TO", 2, "d_F"),
    kd("a'xx", "XO", 1, "d_F"),
    kd("a'xx", "XO", 2, "d_F"),
];

const fn kd(history: &'static str, action: &'static str, column: usize, corrected: &'static str) -> KnownDifference {
    KnownDifference { history, action, column, corrected }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mismatch {
    pub table: u8,
    pub history: String,
    pub action: String,
    pub column: usize,
    pub printed: Money,
    pub mechanical: Money,
}

fn values(spec: &GameSpec) -> BTreeMap<&'static str, Money> {
    let (g, c) = (&spec.money, &spec.econ);
    BTreeMap::from([
        ("d_L", g.d_l.clone()),
        ("d_F", g.d_f.clone()),
        ("p", g.p.clone()),
        ("e", g.e.clone()),
        ("r", g.r.clone()),
        ("v", c.v.clone()),
        ("v_1", c.v1.clone()),
        ("v_2", c.v2.clone()),
        ("c", c.c.clone()),
        ("eps", Money::zero()),
    ])
}

/// Rows whose entries differ from the mechanical payoff at `spec`. Output-O
/// rows are compared with the deposit return added, and entries listed in
/// `KNOWN_DIFFERENCES` are replaced by their corrections when `corrected`.
pub fn compare(spec: &GameSpec, corrected: bool) -> Vec<Mismatch> {
    assert_eq!(spec.mode, GameMode::TwoRelay, "the tables describe the two-relay game");
    let vals = values(spec);
    let mut out = Vec::new();
    for row in rows() {
        let mech = match row.outcome() {
            Some(o) => stage_utility(spec, &o),
            None => Default::default(),
        };
        for (col, cell) in row.cells.iter().enumerate() {
            let Some(expr) = cell else { continue };
            let fix = KNOWN_DIFFERENCES
                .iter()
                .find(|k| k.history == row.history && k.action == row.action && k.column == col);
            let mut printed = match fix {
                Some(k) if corrected => LinExpr::parse(k.corrected).expect("correction parses").eval(&vals),
                _ => expr.eval(&vals),
            };
            if col == 0 && row.action.ends_with('O') && !(corrected && fix.is_some()) {
                printed += &spec.money.d_l;
            }
            if printed != mech[col] {
                out.push(Mismatch {
                    table: row.table,
                    history: row.history.clone(),
                    action: row.action.clone(),
                    column: col,
                    printed,
                    mechanical: mech[col].clone(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::MoneyParams;
    use crate::sim::EconomicParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spec(rng: &mut ChaCha8Rng) -> GameSpec {
        // Random rationals make an accidental match between distinct forms unlikely.
        let mut m = || Money::ratio(rng.gen_range(1..=97), rng.gen_range(1..=7));
        let money = MoneyParams { p: m(), e: m(), r: m(), d_l: m(), d_f: m() };
        let econ = EconomicParams { c: m(), v: m(), v1: m(), v2: m(), ..EconomicParams::default() };
        GameSpec::new(GameMode::TwoRelay, 1, money, econ)
    }

    #[test]
    fn parses_linear_forms() {
        let e = LinExpr::parse("d_L-v-p/2+r+3d_F/2").unwrap();
        assert_eq!(e.terms["d_F"], BigRational::new(3.into(), 2.into()));
        assert_eq!(e.terms["p"], BigRational::new((-1).into(), 2.into()));
        assert_eq!(e.terms["v"], -BigRational::one());
        assert!(LinExpr::parse("0").unwrap().terms.is_empty());
        assert!(LinExpr::parse("d_L+q").is_err());
    }

    #[test]
    fn one_row_per_terminal() {
        let rows = rows();
        assert_eq!(rows.len(), 157);
        let mut seen = std::collections::BTreeSet::new();
        for r in &rows {
            assert!(seen.insert((r.history.clone(), r.action.clone())), "duplicate {} {}", r.history, r.action);
        }
        // Nine client sets plus the abort row.
        let sets: std::collections::BTreeSet<_> = FIXTURE.lines().filter(|l| !l.starts_with('#')).filter_map(|l| l.split(' ').nth(1)).collect();
        assert_eq!(sets.len(), 10);
    }

    #[test]
    fn corrected_tables_match_mechanical_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let spec = random_spec(&mut rng);
            let diff = compare(&spec, true);
            assert!(diff.is_empty(), "{diff:?}");
        }
    }

    #[test]
    fn printed_differences_are_exactly_the_listed_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let spec = random_spec(&mut rng);
            let mut got: Vec<_> = compare(&spec, false).into_iter().map(|m| (m.history, m.action, m.column)).collect();
            let mut want: Vec<_> =
                KNOWN_DIFFERENCES.iter().map(|k| (k.history.to_string(), k.action.to_string(), k.column)).collect();
            got.sort();
            want.sort();
            assert_eq!(got, want);
        }
    }
}
