//! Symbolic calculus of the infinite Hopf family: morphisms `tau`,
//! coproducts, counits and antipodes with operator-valued charge shifts,
//! the axioms (a1)-(a3) and the iterated coproduct.
//!
//! Legs of a tensor expression are labelled by algebra index `n`. The
//! central element of the leg with index `n` is the symbol `c_n`, and atom
//! arguments are `z p^{s}` with `s` a [`ChargeForm`] in those symbols.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::relation_checker::{CheckError, Status};
use crate::theta_products::ThetaError;

mod homomorphism;

pub use homomorphism::{
    check_coproduct_homomorphism, parse_homomorphism_relation, tau_changes_structure,
    CoefficientIdentity, FamilyContext, HomomorphismReport, TauStructureReport,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HopfError {
    #[error("atoms carry mixed algebra indices {0:?}")]
    MixedIndices(Vec<i32>),
    #[error("coproduct is defined on generators only, got {0}")]
    InverseAtom(String),
    #[error("antipode applied to an antipode image is not supported")]
    AntipodeTwice,
    #[error("leg {0} out of range")]
    LegOutOfRange(usize),
    #[error("legs {0} and {1} belong to different algebras")]
    LegMismatch(i32, i32),
    #[error("unknown {0} `{1}`")]
    Unknown(&'static str, String),
    #[error("iterated coproduct order {0} outside 1..=4")]
    Order(usize),
    #[error("out of scope: {0}")]
    OutOfScope(String),
    #[error("no exchange rule for {0}")]
    NoRule(String),
    #[error(transparent)]
    Theta(#[from] ThetaError),
    #[error(transparent)]
    Check(#[from] CheckError),
}

/// `constant + sum_k coeffs[k] c_k`, everything in quarter units.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChargeForm {
    pub constant: i32,
    pub coeffs: BTreeMap<i32, i32>,
}

impl ChargeForm {
    pub fn zero() -> Self {
        ChargeForm::default()
    }

    /// `k/4 * c_n`.
    pub fn symbol(n: i32, k: i32) -> Self {
        ChargeForm::zero().plus_symbol(n, k)
    }

    fn plus_symbol(mut self, n: i32, k: i32) -> Self {
        let e = self.coeffs.entry(n).or_insert(0);
        *e += k;
        if *e == 0 {
            self.coeffs.remove(&n);
        }
        self
    }

    pub fn add(&self, o: &ChargeForm) -> ChargeForm {
        let mut out = self.clone();
        out.constant += o.constant;
        for (&n, &k) in &o.coeffs {
            out = out.plus_symbol(n, k);
        }
        out
    }

    pub fn scale(&self, k: i32) -> ChargeForm {
        if k == 0 {
            return ChargeForm::zero();
        }
        ChargeForm {
            constant: self.constant * k,
            coeffs: self.coeffs.iter().map(|(&n, &v)| (n, v * k)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0 && self.coeffs.is_empty()
    }

    /// Replaces each `c_n` by `unit(n)` where given; unmapped symbols stay.
    pub fn subst(&self, unit: &dyn Fn(i32) -> Option<ChargeForm>) -> ChargeForm {
        let mut out = ChargeForm {
            constant: self.constant,
            coeffs: BTreeMap::new(),
        };
        for (&n, &k) in &self.coeffs {
            match unit(n) {
                // unit is in whole units of c_n; k is already quarter units
                Some(f) => out = out.add(&f.scale(k)),
                None => out = out.plus_symbol(n, k),
            }
        }
        out
    }

    /// Value in quarter units with integer charges substituted.
    pub fn instantiate(&self, charge: &dyn Fn(i32) -> i32) -> i32 {
        self.constant
            + self
                .coeffs
                .iter()
                .map(|(&n, &k)| k * charge(n))
                .sum::<i32>()
    }
}

/// `c_n` as a whole-unit form, used as a substitution value.
fn unit(n: i32) -> ChargeForm {
    ChargeForm {
        constant: 0,
        coeffs: BTreeMap::from([(n, 1)]),
    }
}

fn quarter_text(k: i32) -> (bool, String) {
    let g = num_integer::gcd(k.abs(), 4);
    let (num, den) = (k.abs() / g, 4 / g);
    let body = match (num, den) {
        (n, 1) => format!("{n}"),
        (n, d) => format!("{n}/{d}"),
    };
    (k < 0, body)
}

impl fmt::Display for ChargeForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("0");
        }
        let mut first = true;
        let mut put = |f: &mut fmt::Formatter<'_>, k: i32, sym: Option<i32>| -> fmt::Result {
            let (neg, body) = quarter_text(k);
            let sign = match (neg, first) {
                (true, _) => "-",
                (false, true) => "",
                (false, false) => "+",
            };
            first = false;
            match sym {
                None => write!(f, "{sign}{body}"),
                Some(n) => match body.split_once('/') {
                    Some(("1", d)) => write!(f, "{sign}c_{n}/{d}"),
                    Some((a, d)) => write!(f, "{sign}{a}c_{n}/{d}"),
                    None if body == "1" => write!(f, "{sign}c_{n}"),
                    None => write!(f, "{sign}{body}c_{n}"),
                },
            }
        };
        for (&n, &k) in &self.coeffs {
            put(f, k, Some(n))?;
        }
        if self.constant != 0 {
            put(f, self.constant, None)?;
        }
        Ok(())
    }
}

impl Serialize for ChargeForm {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum AtomKind {
    /// The central element of the leg's algebra.
    C,
    HPlus,
    HMinus,
    HPlusInv,
    HMinusInv,
    E,
    F,
}

impl AtomKind {
    fn inverse(self) -> Option<AtomKind> {
        match self {
            AtomKind::HPlus => Some(AtomKind::HPlusInv),
            AtomKind::HMinus => Some(AtomKind::HMinusInv),
            AtomKind::HPlusInv => Some(AtomKind::HPlus),
            AtomKind::HMinusInv => Some(AtomKind::HMinus),
            _ => None,
        }
    }
}

/// `X_node(var p^{shift})` in the algebra of the leg that holds it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub kind: AtomKind,
    pub node: usize,
    pub var: String,
    pub shift: ChargeForm,
}

impl Atom {
    pub fn new(kind: AtomKind, node: usize, var: &str) -> Self {
        Atom {
            kind,
            node,
            var: var.to_string(),
            shift: ChargeForm::zero(),
        }
    }

    fn central() -> Self {
        Atom::new(AtomKind::C, 0, "")
    }

    fn with(&self, kind: AtomKind, extra: &ChargeForm) -> Atom {
        Atom {
            kind,
            node: self.node,
            var: self.var.clone(),
            shift: self.shift.add(extra),
        }
    }

    fn cancels(&self, next: &Atom) -> bool {
        self.kind.inverse() == Some(next.kind)
            && self.node == next.node
            && self.var == next.var
            && self.shift == next.shift
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, inv) = match self.kind {
            AtomKind::C => return f.write_str("c"),
            AtomKind::HPlus => ("H+", false),
            AtomKind::HMinus => ("H-", false),
            AtomKind::HPlusInv => ("H+", true),
            AtomKind::HMinusInv => ("H-", true),
            AtomKind::E => ("E", false),
            AtomKind::F => ("F", false),
        };
        write!(f, "{name}_{}({}", self.node, self.var)?;
        if !self.shift.is_zero() {
            write!(f, " p^({})", self.shift)?;
        }
        f.write_str(if inv { ")^-1" } else { ")" })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Term {
    pub coeff: i64,
    /// One word per leg; the empty word is the unit.
    pub words: Vec<Vec<Atom>>,
}

/// Formal sum of terms over legs with fixed algebra indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorExpression {
    pub algebras: Vec<i32>,
    pub terms: Vec<Term>,
}

fn cancel_inverses(word: Vec<Atom>) -> Vec<Atom> {
    let mut out: Vec<Atom> = Vec::with_capacity(word.len());
    for a in word {
        if out.last().is_some_and(|b| b.cancels(&a)) {
            out.pop();
        } else {
            out.push(a);
        }
    }
    out
}

impl TensorExpression {
    pub fn atom(n: i32, atom: Atom) -> Self {
        TensorExpression {
            algebras: vec![n],
            terms: vec![Term {
                coeff: 1,
                words: vec![vec![atom]],
            }],
        }
    }

    pub fn unit(n: i32) -> Self {
        TensorExpression {
            algebras: vec![n],
            terms: vec![Term {
                coeff: 1,
                words: vec![vec![]],
            }],
        }
    }

    /// A scalar: no legs.
    pub fn scalar(k: i64) -> Self {
        TensorExpression {
            algebras: vec![],
            terms: vec![Term {
                coeff: k,
                words: vec![],
            }],
        }
        .canonical()
    }

    pub fn legs(&self) -> usize {
        self.algebras.len()
    }

    /// Terms merged, zeros dropped, inverse pairs cancelled, sorted.
    pub fn canonical(mut self) -> Self {
        let mut acc: BTreeMap<Vec<Vec<Atom>>, i64> = BTreeMap::new();
        for t in self.terms.drain(..) {
            let words: Vec<Vec<Atom>> = t.words.into_iter().map(cancel_inverses).collect();
            *acc.entry(words).or_insert(0) += t.coeff;
        }
        self.terms = acc
            .into_iter()
            .filter(|(_, c)| *c != 0)
            .map(|(words, coeff)| Term { coeff, words })
            .collect();
        self
    }

    pub fn is_zero(&self) -> bool {
        self.clone().canonical().terms.is_empty()
    }

    pub fn sub(&self, o: &TensorExpression) -> TensorExpression {
        let mut terms = self.terms.clone();
        terms.extend(o.terms.iter().map(|t| Term {
            coeff: -t.coeff,
            words: t.words.clone(),
        }));
        TensorExpression {
            algebras: self.algebras.clone(),
            terms,
        }
        .canonical()
    }

    fn map_shifts(&self, f: &dyn Fn(i32) -> Option<ChargeForm>) -> TensorExpression {
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: t.coeff,
                words: t
                    .words
                    .iter()
                    .map(|w| {
                        w.iter()
                            .map(|a| Atom {
                                shift: a.shift.subst(f),
                                ..a.clone()
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        TensorExpression {
            algebras: self.algebras.clone(),
            terms,
        }
    }

    /// Legwise product `self * o`.
    fn mul(&self, o: &TensorExpression) -> TensorExpression {
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &o.terms {
                let words = a
                    .words
                    .iter()
                    .zip(&b.words)
                    .map(|(x, y)| x.iter().chain(y).cloned().collect())
                    .collect();
                terms.push(Term {
                    coeff: a.coeff * b.coeff,
                    words,
                });
            }
        }
        TensorExpression {
            algebras: self.algebras.clone(),
            terms,
        }
    }

    fn leg(&self, k: usize) -> Result<i32, HopfError> {
        self.algebras
            .get(k)
            .copied()
            .ok_or(HopfError::LegOutOfRange(k))
    }
}

impl fmt::Display for TensorExpression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            let body: Vec<String> = t
                .words
                .iter()
                .zip(&self.algebras)
                .map(|(w, n)| match w.is_empty() {
                    true => "1".to_string(),
                    false => w
                        .iter()
                        .map(|a| {
                            if a.kind == AtomKind::C {
                                format!("c_{n}")
                            } else {
                                a.to_string()
                            }
                        })
                        .collect::<Vec<_>>()
                        .join(" "),
                })
                .collect();
            let body = if body.is_empty() {
                "1".to_string()
            } else {
                body.join(" (x) ")
            };
            let (neg, mag) = (t.coeff < 0, t.coeff.abs());
            let sign = match (k, neg) {
                (0, true) => "-",
                (0, false) => "",
                (_, true) => " - ",
                (_, false) => " + ",
            };
            if mag == 1 {
                write!(f, "{sign}{body}")?;
            } else {
                write!(f, "{sign}{mag} {body}")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Direction {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Direction {
    pub fn step(self) -> i32 {
        match self {
            Direction::Plus => 1,
            Direction::Minus => -1,
        }
    }
}

/// Whether `c` symbols in arguments are central elements (operators) or
/// fixed numbers untouched by coproducts and counits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChargeReading {
    #[default]
    Operator,
    Numeric,
}

/// Whether the antipode also maps the charge symbols it passes over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AntipodeConvention {
    #[default]
    ChargeTransforming,
    Numeric,
}

impl FromStr for AntipodeConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "charge-transforming" => Ok(AntipodeConvention::ChargeTransforming),
            "numeric" => Ok(AntipodeConvention::Numeric),
            _ => Err(format!("unknown antipode convention `{s}`")),
        }
    }
}

impl FromStr for ChargeReading {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "operator" => Ok(ChargeReading::Operator),
            "numeric" => Ok(ChargeReading::Numeric),
            _ => Err(format!("unknown charge reading `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct HopfConventions {
    pub charges: ChargeReading,
    pub antipode: AntipodeConvention,
}

/// `tau_n^{+-}` on a one-leg expression: reindexes the leg and its symbol.
pub fn tau(expr: &TensorExpression, dir: Direction) -> Result<TensorExpression, HopfError> {
    if expr.legs() != 1 {
        return Err(HopfError::MixedIndices(expr.algebras.clone()));
    }
    let n = expr.algebras[0];
    let m = n + dir.step();
    let mut out = expr.map_shifts(&|k| (k == n).then(|| unit(m)));
    out.algebras = vec![m];
    Ok(out)
}

/// `tau^{(to, n)}` as a chain of single steps.
pub fn tau_chain(expr: &TensorExpression, to: i32) -> Result<TensorExpression, HopfError> {
    let mut cur = expr.clone();
    while cur.algebras.first().is_some_and(|&n| n != to) {
        let dir = if cur.algebras[0] < to {
            Direction::Plus
        } else {
            Direction::Minus
        };
        cur = tau(&cur, dir)?;
    }
    tau_guard(&cur)?;
    Ok(cur)
}

fn tau_guard(expr: &TensorExpression) -> Result<(), HopfError> {
    if expr.legs() != 1 {
        return Err(HopfError::MixedIndices(expr.algebras.clone()));
    }
    Ok(())
}

/// Two-leg image of one generator atom; legs carry indices `a`, `b`.
fn coproduct_atom(atom: &Atom, a: i32, b: i32) -> Result<TensorExpression, HopfError> {
    let t = |coeff: i64, x: Vec<Atom>, y: Vec<Atom>| Term {
        coeff,
        words: vec![x, y],
    };
    let sym = |n: i32, k: i32| ChargeForm::symbol(n, k);
    let terms = match atom.kind {
        AtomKind::C => vec![
            t(1, vec![Atom::central()], vec![]),
            t(1, vec![], vec![Atom::central()]),
        ],
        AtomKind::HPlus => vec![t(
            1,
            vec![atom.with(AtomKind::HPlus, &sym(b, 1))],
            vec![atom.with(AtomKind::HPlus, &sym(a, -1))],
        )],
        AtomKind::HMinus => vec![t(
            1,
            vec![atom.with(AtomKind::HMinus, &sym(b, -1))],
            vec![atom.with(AtomKind::HMinus, &sym(a, 1))],
        )],
        AtomKind::E => vec![
            t(1, vec![atom.clone()], vec![]),
            t(
                1,
                vec![atom.with(AtomKind::HMinus, &sym(a, 1))],
                vec![atom.with(AtomKind::E, &sym(a, 2))],
            ),
        ],
        AtomKind::F => vec![
            t(1, vec![], vec![atom.clone()]),
            t(
                1,
                vec![atom.with(AtomKind::F, &sym(b, 2))],
                vec![atom.with(AtomKind::HPlus, &sym(b, 1))],
            ),
        ],
        AtomKind::HPlusInv | AtomKind::HMinusInv => {
            return Err(HopfError::InverseAtom(atom.to_string()))
        }
    };
    Ok(TensorExpression {
        algebras: vec![a, b],
        terms,
    })
}

/// `Delta^{+-}` applied to leg `k`.
pub fn coproduct(
    expr: &TensorExpression,
    k: usize,
    dir: Direction,
    conv: &HopfConventions,
) -> Result<TensorExpression, HopfError> {
    let n = expr.leg(k)?;
    let (a, b) = match dir {
        Direction::Plus => (n, n + 1),
        Direction::Minus => (n - 1, n),
    };
    let expr = match conv.charges {
        ChargeReading::Operator => expr.map_shifts(&|m| (m == n).then(|| unit(a).add(&unit(b)))),
        ChargeReading::Numeric => expr.clone(),
    };
    let mut algebras = expr.algebras.clone();
    algebras.splice(k..=k, [a, b]);
    let mut terms = Vec::new();
    for t in &expr.terms {
        let mut img = TensorExpression::unit(a);
        img.algebras = vec![a, b];
        img.terms[0].words = vec![vec![], vec![]];
        for atom in &t.words[k] {
            img = img.mul(&coproduct_atom(atom, a, b)?);
        }
        for it in img.terms {
            let mut words = t.words.clone();
            words.splice(k..=k, it.words);
            terms.push(Term {
                coeff: t.coeff * it.coeff,
                words,
            });
        }
    }
    Ok(TensorExpression { algebras, terms }.canonical())
}

fn counit_atom(atom: &Atom) -> i64 {
    match atom.kind {
        AtomKind::HPlus | AtomKind::HMinus | AtomKind::HPlusInv | AtomKind::HMinusInv => 1,
        AtomKind::C | AtomKind::E | AtomKind::F => 0,
    }
}

/// `epsilon` on leg `k`, multiplicative; under the operator reading the
/// erased leg's charge is set to 0 everywhere.
pub fn counit(
    expr: &TensorExpression,
    k: usize,
    conv: &HopfConventions,
) -> Result<TensorExpression, HopfError> {
    let n = expr.leg(k)?;
    let expr = match conv.charges {
        ChargeReading::Operator => expr.map_shifts(&|m| (m == n).then(ChargeForm::zero)),
        ChargeReading::Numeric => expr.clone(),
    };
    let mut algebras = expr.algebras.clone();
    algebras.remove(k);
    let terms = expr
        .terms
        .iter()
        .map(|t| {
            let mut words = t.words.clone();
            let w = words.remove(k);
            Term {
                coeff: t.coeff * w.iter().map(counit_atom).product::<i64>(),
                words,
            }
        })
        .collect();
    Ok(TensorExpression { algebras, terms }.canonical())
}

/// Image of one atom under `S`, as a word with a sign; `m` is the target
/// algebra index.
fn antipode_atom(atom: &Atom, m: i32) -> Result<(i64, Vec<Atom>), HopfError> {
    let sym = |k: i32| ChargeForm::symbol(m, k);
    Ok(match atom.kind {
        AtomKind::C => (-1, vec![Atom::central()]),
        AtomKind::HPlus => (1, vec![atom.with(AtomKind::HPlusInv, &ChargeForm::zero())]),
        AtomKind::HMinus => (1, vec![atom.with(AtomKind::HMinusInv, &ChargeForm::zero())]),
        AtomKind::E => (
            -1,
            vec![
                atom.with(AtomKind::HMinusInv, &sym(-1)),
                atom.with(AtomKind::E, &sym(-2)),
            ],
        ),
        AtomKind::F => (
            -1,
            vec![
                atom.with(AtomKind::F, &sym(-2)),
                atom.with(AtomKind::HPlusInv, &sym(-1)),
            ],
        ),
        AtomKind::HPlusInv | AtomKind::HMinusInv => return Err(HopfError::AntipodeTwice),
    })
}

/// `S^{+-}` on leg `k`: an antimorphism into the neighbouring algebra.
pub fn antipode(
    expr: &TensorExpression,
    k: usize,
    dir: Direction,
    conv: &HopfConventions,
) -> Result<TensorExpression, HopfError> {
    let n = expr.leg(k)?;
    let m = n + dir.step();
    let expr = match conv.antipode {
        AntipodeConvention::ChargeTransforming => {
            expr.map_shifts(&|s| (s == n).then(|| unit(m).scale(-1)))
        }
        AntipodeConvention::Numeric => expr.clone(),
    };
    let mut algebras = expr.algebras.clone();
    algebras[k] = m;
    let mut terms = Vec::new();
    for t in &expr.terms {
        let mut coeff = t.coeff;
        let mut word = Vec::new();
        for atom in t.words[k].iter().rev() {
            let (s, w) = antipode_atom(atom, m)?;
            coeff *= s;
            word.extend(w);
        }
        let mut words = t.words.clone();
        words[k] = word;
        terms.push(Term { coeff, words });
    }
    Ok(TensorExpression { algebras, terms }.canonical())
}

/// Multiplies leg `k` into leg `k + 1`.
pub fn multiply_legs(expr: &TensorExpression, k: usize) -> Result<TensorExpression, HopfError> {
    let (a, b) = (expr.leg(k)?, expr.leg(k + 1)?);
    if a != b {
        return Err(HopfError::LegMismatch(a, b));
    }
    let mut algebras = expr.algebras.clone();
    algebras.remove(k + 1);
    let terms = expr
        .terms
        .iter()
        .map(|t| {
            let mut words = t.words.clone();
            let tail = words.remove(k + 1);
            words[k].extend(tail);
            Term {
                coeff: t.coeff,
                words,
            }
        })
        .collect();
    Ok(TensorExpression { algebras, terms }.canonical())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Generator {
    #[serde(rename = "c")]
    C,
    #[serde(rename = "H+")]
    HPlus,
    #[serde(rename = "H-")]
    HMinus,
    E,
    F,
}

impl Generator {
    pub const ALL: [Generator; 5] = [
        Generator::C,
        Generator::HPlus,
        Generator::HMinus,
        Generator::E,
        Generator::F,
    ];

    pub fn atom(self, node: usize, var: &str) -> Atom {
        let kind = match self {
            Generator::C => return Atom::central(),
            Generator::HPlus => AtomKind::HPlus,
            Generator::HMinus => AtomKind::HMinus,
            Generator::E => AtomKind::E,
            Generator::F => AtomKind::F,
        };
        Atom::new(kind, node, var)
    }

    pub fn name(self) -> &'static str {
        match self {
            Generator::C => "c",
            Generator::HPlus => "H+",
            Generator::HMinus => "H-",
            Generator::E => "E",
            Generator::F => "F",
        }
    }
}

impl FromStr for Generator {
    type Err = HopfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Generator::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| HopfError::Unknown("generator", s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Axiom {
    A1,
    A2,
    A3,
}

impl Axiom {
    pub const ALL: [Axiom; 3] = [Axiom::A1, Axiom::A2, Axiom::A3];

    pub fn name(self) -> &'static str {
        match self {
            Axiom::A1 => "a1",
            Axiom::A2 => "a2",
            Axiom::A3 => "a3",
        }
    }
}

impl FromStr for Axiom {
    type Err = HopfError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Axiom::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| HopfError::Unknown("axiom", s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AxiomPart {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    pub lhs: String,
    pub rhs: String,
    pub passed: bool,
    /// Canonical terms of `lhs - rhs`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub difference: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AxiomReport {
    pub axiom: Axiom,
    pub generator: Generator,
    pub node: usize,
    pub algebra: i32,
    pub conventions: HopfConventions,
    pub status: Status,
    pub parts: Vec<AxiomPart>,
}

fn part(direction: Option<Direction>, lhs: TensorExpression, rhs: TensorExpression) -> AxiomPart {
    let diff = lhs.sub(&rhs);
    let difference: Vec<String> = diff
        .terms
        .iter()
        .map(|t| {
            TensorExpression {
                algebras: diff.algebras.clone(),
                terms: vec![t.clone()],
            }
            .to_string()
        })
        .collect();
    AxiomPart {
        direction,
        lhs: lhs.to_string(),
        rhs: rhs.to_string(),
        passed: difference.is_empty(),
        difference,
    }
}

fn epsilon_value(g: Generator) -> i64 {
    match g {
        Generator::HPlus | Generator::HMinus => 1,
        _ => 0,
    }
}

/// Builds both sides of an axiom on one generator at algebra `n` and
/// compares canonical forms.
pub fn check_axiom(
    axiom: Axiom,
    generator: Generator,
    node: usize,
    n: i32,
    conv: &HopfConventions,
) -> Result<AxiomReport, HopfError> {
    let x = TensorExpression::atom(n, generator.atom(node, "z"));
    let mut parts = Vec::new();
    match axiom {
        Axiom::A1 => {
            let plus = counit(&coproduct(&x, 0, Direction::Plus, conv)?, 0, conv)?;
            parts.push(part(
                Some(Direction::Plus),
                plus,
                tau(&x, Direction::Plus)?.canonical(),
            ));
            let minus = counit(&coproduct(&x, 0, Direction::Minus, conv)?, 1, conv)?;
            parts.push(part(
                Some(Direction::Minus),
                minus,
                tau(&x, Direction::Minus)?.canonical(),
            ));
        }
        Axiom::A2 => {
            let eps = epsilon_value(generator);
            let d = coproduct(&x, 0, Direction::Plus, conv)?;
            let plus = multiply_legs(&antipode(&d, 0, Direction::Plus, conv)?, 0)?;
            let mut unit_plus = TensorExpression::unit(n + 1);
            unit_plus.terms[0].coeff = eps;
            parts.push(part(Some(Direction::Plus), plus, unit_plus.canonical()));
            let d = coproduct(&x, 0, Direction::Minus, conv)?;
            let minus = multiply_legs(&antipode(&d, 1, Direction::Minus, conv)?, 0)?;
            let mut unit_minus = TensorExpression::unit(n - 1);
            unit_minus.terms[0].coeff = eps;
            parts.push(part(Some(Direction::Minus), minus, unit_minus.canonical()));
        }
        Axiom::A3 => {
            let lhs = coproduct(
                &coproduct(&x, 0, Direction::Plus, conv)?,
                0,
                Direction::Minus,
                conv,
            )?;
            let rhs = coproduct(
                &coproduct(&x, 0, Direction::Minus, conv)?,
                1,
                Direction::Plus,
                conv,
            )?;
            parts.push(part(None, lhs, rhs));
        }
    }
    let passed = parts.iter().all(|p| p.passed);
    Ok(AxiomReport {
        axiom,
        generator,
        node,
        algebra: n,
        conventions: *conv,
        status: if passed { Status::Pass } else { Status::Fail },
        parts,
    })
}

/// Every requested axiom on every generator, in a fixed order.
pub fn check_axioms(
    axioms: &[Axiom],
    conv: &HopfConventions,
) -> Result<Vec<AxiomReport>, HopfError> {
    let jobs: Vec<(Axiom, Generator)> = axioms
        .iter()
        .flat_map(|&a| Generator::ALL.into_iter().map(move |g| (a, g)))
        .collect();
    jobs.par_iter()
        .map(|&(a, g)| check_axiom(a, g, 0, 1, conv))
        .collect()
}

/// Splits leg `k` with `Delta^+`, first moving the later legs up one index.
pub fn split_leg(
    expr: &TensorExpression,
    k: usize,
    conv: &HopfConventions,
) -> Result<TensorExpression, HopfError> {
    let n = expr.leg(k)?;
    let mut shifted = expr.map_shifts(&|m| (m > n).then(|| unit(m + 1)));
    for a in shifted.algebras.iter_mut().skip(k + 1) {
        *a += 1;
    }
    coproduct(&shifted, k, Direction::Plus, conv)
}

/// The iterated coproduct, always splitting the last leg.
pub fn iterated_coproduct(
    expr: &TensorExpression,
    m: usize,
    conv: &HopfConventions,
) -> Result<TensorExpression, HopfError> {
    if !(1..=4).contains(&m) {
        return Err(HopfError::Order(m));
    }
    let mut cur = expr.clone();
    for _ in 0..m {
        cur = split_leg(&cur, cur.legs() - 1, conv)?;
    }
    Ok(cur)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IteratedReport {
    pub generator: Generator,
    pub m: usize,
    pub legs: usize,
    pub orders_checked: usize,
    pub status: Status,
    pub expression: String,
    /// First split sequence whose result differs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mismatch: Option<Vec<usize>>,
}

/// Compares every split order (leg chosen at each step) with the standard
/// one.
pub fn check_iterated_coproduct(
    generator: Generator,
    m: usize,
    conv: &HopfConventions,
) -> Result<IteratedReport, HopfError> {
    let x = TensorExpression::atom(1, generator.atom(0, "z"));
    let reference = iterated_coproduct(&x, m, conv)?;
    let mut orders: Vec<Vec<usize>> = vec![vec![]];
    for step in 0..m {
        orders = orders
            .into_iter()
            .flat_map(|o| (0..=step).map(move |k| [o.clone(), vec![k]].concat()))
            .collect();
    }
    let mut mismatch = None;
    for o in &orders {
        let mut cur = x.clone();
        for &k in o {
            cur = split_leg(&cur, k, conv)?;
        }
        if cur != reference {
            mismatch = Some(o.clone());
            break;
        }
    }
    Ok(IteratedReport {
        generator,
        m,
        legs: reference.legs(),
        orders_checked: orders.len(),
        status: if mismatch.is_none() {
            Status::Pass
        } else {
            Status::Fail
        },
        expression: reference.to_string(),
        mismatch,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TauLaw {
    pub generator: Generator,
    pub law: &'static str,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TauLawReport {
    pub status: Status,
    pub laws: Vec<TauLaw>,
}

/// Inverse pairs, the chain `tau^(3,1) = tau_2^+ tau_1^+` and associativity
/// `tau^(m,p) tau^(p,n) = tau^(m,n)` on every generator, with the argument
/// shifted by the leg's own charge so that the symbol renaming is visible.
pub fn check_tau_laws() -> Result<TauLawReport, HopfError> {
    let mut laws = Vec::new();
    for g in Generator::ALL {
        let mut atom = g.atom(0, "z");
        if g != Generator::C {
            atom.shift = ChargeForm::symbol(1, 2);
        }
        let x = TensorExpression::atom(1, atom);
        let up = tau(&x, Direction::Plus)?;
        let down = tau(&x, Direction::Minus)?;
        let two = tau(&up, Direction::Plus)?;
        let mut push = |law, passed| {
            laws.push(TauLaw {
                generator: g,
                law,
                passed,
            })
        };
        push("tau- tau+ = id", tau(&up, Direction::Minus)? == x);
        push("tau+ tau- = id", tau(&down, Direction::Plus)? == x);
        push("tau(3,1) = tau2+ tau1+", tau_chain(&x, 3)? == two);
        push(
            "tau(4,2) tau(2,1) = tau(4,1)",
            tau_chain(&tau_chain(&x, 2)?, 4)? == tau_chain(&x, 4)?,
        );
        push("tau(1,3) tau(3,1) = id", tau_chain(&two, 1)? == x);
    }
    let passed = laws.iter().all(|l| l.passed);
    Ok(TauLawReport {
        status: if passed { Status::Pass } else { Status::Fail },
        laws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn at(n: i32, g: Generator) -> TensorExpression {
        TensorExpression::atom(n, g.atom(0, "z"))
    }

    fn shifted(kind: AtomKind, shift: ChargeForm) -> Atom {
        Atom {
            kind,
            node: 0,
            var: "z".into(),
            shift,
        }
    }

    fn expr(algebras: Vec<i32>, terms: Vec<(i64, Vec<Vec<Atom>>)>) -> TensorExpression {
        TensorExpression {
            algebras,
            terms: terms
                .into_iter()
                .map(|(coeff, words)| Term { coeff, words })
                .collect(),
        }
        .canonical()
    }

    fn c(n: i32, k: i32) -> ChargeForm {
        ChargeForm::symbol(n, k)
    }

    const DEFAULT: HopfConventions = HopfConventions {
        charges: ChargeReading::Operator,
        antipode: AntipodeConvention::ChargeTransforming,
    };

    #[test]
    fn tau_reindexes_leg_and_symbol() {
        let x = TensorExpression::atom(1, shifted(AtomKind::E, c(1, 2)));
        let y = tau(&x, Direction::Plus).unwrap();
        assert_eq!(y.algebras, vec![2]);
        assert_eq!(y.terms[0].words[0][0].shift, c(2, 2));
        assert_eq!(tau(&y, Direction::Minus).unwrap(), x);
    }

    #[test]
    fn tau_chains_compose() {
        let x = at(1, Generator::F);
        let direct = tau_chain(&x, 3).unwrap();
        let steps = tau(&tau(&x, Direction::Plus).unwrap(), Direction::Plus).unwrap();
        assert_eq!(direct, steps);
        let via = tau_chain(&tau_chain(&x, 5).unwrap(), 3).unwrap();
        assert_eq!(via, direct);
        assert_eq!(tau_chain(&direct, 1).unwrap(), x);
    }

    #[test]
    fn tau_laws_hold() {
        let r = check_tau_laws().unwrap();
        assert_eq!(r.status, Status::Pass);
        assert_eq!(r.laws.len(), 25);
    }

    #[test]
    fn tau_rejects_several_legs() {
        let d = coproduct(&at(1, Generator::E), 0, Direction::Plus, &DEFAULT).unwrap();
        assert_eq!(
            tau(&d, Direction::Plus),
            Err(HopfError::MixedIndices(vec![1, 2]))
        );
    }

    #[test]
    fn central_element_splits_into_both_legs() {
        let d = coproduct(&at(1, Generator::C), 0, Direction::Plus, &DEFAULT).unwrap();
        assert_eq!(d.to_string(), "1 (x) c_2 + c_1 (x) 1");
    }

    #[test]
    fn h_plus_coproduct_shifts() {
        let d = coproduct(&at(3, Generator::HPlus), 0, Direction::Plus, &DEFAULT).unwrap();
        let want = expr(
            vec![3, 4],
            vec![(
                1,
                vec![
                    vec![shifted(AtomKind::HPlus, c(4, 1))],
                    vec![shifted(AtomKind::HPlus, c(3, -1))],
                ],
            )],
        );
        assert_eq!(d, want);
    }

    #[test]
    fn coproduct_of_inverse_is_an_error() {
        let x = TensorExpression::atom(1, shifted(AtomKind::HPlusInv, ChargeForm::zero()));
        assert!(matches!(
            coproduct(&x, 0, Direction::Plus, &DEFAULT),
            Err(HopfError::InverseAtom(_))
        ));
    }

    #[test]
    fn counit_values() {
        assert_eq!(
            counit(&at(1, Generator::HPlus), 0, &DEFAULT).unwrap(),
            TensorExpression::scalar(1)
        );
        assert_eq!(
            counit(&TensorExpression::unit(1), 0, &DEFAULT).unwrap(),
            TensorExpression::scalar(1)
        );
        let mut eh = at(1, Generator::E);
        eh.terms[0].words[0].push(Atom::new(AtomKind::HPlus, 0, "w"));
        assert!(counit(&eh, 0, &DEFAULT).unwrap().is_zero());
    }

    #[test]
    fn counit_erases_the_leg_charge() {
        let d = coproduct(&at(1, Generator::HPlus), 0, Direction::Plus, &DEFAULT).unwrap();
        let e = counit(&d, 1, &DEFAULT).unwrap();
        // leg 2 erased: c_2 -> 0 in the surviving leg
        assert_eq!(e, TensorExpression::atom(1, Generator::HPlus.atom(0, "z")));
    }

    #[test]
    fn antipode_of_h_plus_is_the_inverse_in_the_next_algebra() {
        let s = antipode(&at(1, Generator::HPlus), 0, Direction::Plus, &DEFAULT).unwrap();
        assert_eq!(
            s,
            TensorExpression::atom(2, shifted(AtomKind::HPlusInv, ChargeForm::zero()))
        );
        assert_eq!(
            antipode(&s, 0, Direction::Plus, &DEFAULT),
            Err(HopfError::AntipodeTwice)
        );
    }

    #[test]
    fn antipode_of_central_element() {
        let s = antipode(&at(1, Generator::C), 0, Direction::Minus, &DEFAULT).unwrap();
        assert_eq!(s.to_string(), "-c_0");
    }

    #[test]
    fn antipode_reverses_words() {
        let mut x = at(1, Generator::HPlus);
        x.terms[0].words[0].push(Atom::new(AtomKind::HMinus, 1, "w"));
        let s = antipode(&x, 0, Direction::Plus, &DEFAULT).unwrap();
        let kinds: Vec<AtomKind> = s.terms[0].words[0].iter().map(|a| a.kind).collect();
        assert_eq!(kinds, vec![AtomKind::HMinusInv, AtomKind::HPlusInv]);
    }

    #[test]
    fn inverse_pairs_cancel_only_on_identical_arguments() {
        let h = shifted(AtomKind::HPlus, c(1, 1));
        let hi = shifted(AtomKind::HPlusInv, c(1, 1));
        let other = shifted(AtomKind::HPlusInv, c(1, 2));
        assert_eq!(
            expr(vec![1], vec![(1, vec![vec![hi.clone(), h.clone()]])]),
            TensorExpression::unit(1)
        );
        assert_eq!(
            expr(vec![1], vec![(1, vec![vec![h.clone(), hi]])]),
            TensorExpression::unit(1)
        );
        assert_eq!(
            expr(vec![1], vec![(1, vec![vec![other, h]])]).terms[0].words[0].len(),
            2
        );
    }

    #[test]
    fn a2_on_e_cancels_atom_by_atom() {
        let d = coproduct(&at(1, Generator::E), 0, Direction::Plus, &DEFAULT).unwrap();
        let m = multiply_legs(&antipode(&d, 0, Direction::Plus, &DEFAULT).unwrap(), 0).unwrap();
        assert!(m.is_zero());
    }

    #[test]
    fn a3_on_e_matches_desk_computation() {
        let x = at(1, Generator::E);
        let lhs = coproduct(
            &coproduct(&x, 0, Direction::Plus, &DEFAULT).unwrap(),
            0,
            Direction::Minus,
            &DEFAULT,
        )
        .unwrap();
        let (a, b) = (0, 1);
        let e = |s| shifted(AtomKind::E, s);
        let hm = |s| shifted(AtomKind::HMinus, s);
        let want = expr(
            vec![0, 1, 2],
            vec![
                (1, vec![vec![e(ChargeForm::zero())], vec![], vec![]]),
                (1, vec![vec![hm(c(a, 1))], vec![e(c(a, 2))], vec![]]),
                (
                    1,
                    vec![
                        vec![hm(c(a, 1))],
                        vec![hm(c(a, 2).add(&c(b, 1)))],
                        vec![e(c(a, 2).add(&c(b, 2)))],
                    ],
                ),
            ],
        );
        assert_eq!(lhs, want);
    }

    #[test]
    fn axioms_hold_under_default_conventions() {
        for r in check_axioms(&Axiom::ALL, &DEFAULT).unwrap() {
            assert_eq!(r.status, Status::Pass, "{:?} {:?}", r.axiom, r.generator);
        }
    }

    #[test]
    fn numeric_antipode_breaks_a2_with_a_witness() {
        let conv = HopfConventions {
            antipode: AntipodeConvention::Numeric,
            ..DEFAULT
        };
        let r = check_axiom(Axiom::A2, Generator::E, 0, 1, &conv).unwrap();
        assert_eq!(r.status, Status::Fail);
        let bad = r.parts.iter().find(|p| !p.passed).unwrap();
        assert_eq!(bad.difference.len(), 2);
        assert_eq!(
            check_axiom(Axiom::A2, Generator::E, 0, 1, &conv).unwrap(),
            r
        );
        for a in [Axiom::A1, Axiom::A3] {
            assert_eq!(
                check_axiom(a, Generator::E, 0, 1, &conv).unwrap().status,
                Status::Pass
            );
        }
    }

    #[test]
    fn numeric_charge_reading_breaks_a1_and_a3() {
        let conv = HopfConventions {
            charges: ChargeReading::Numeric,
            ..DEFAULT
        };
        for a in [Axiom::A1, Axiom::A3] {
            assert_eq!(
                check_axiom(a, Generator::HPlus, 0, 1, &conv)
                    .unwrap()
                    .status,
                Status::Fail
            );
        }
        assert_eq!(
            check_axiom(Axiom::A1, Generator::C, 0, 1, &conv)
                .unwrap()
                .status,
            Status::Pass
        );
    }

    #[test]
    fn iterated_coproduct_of_central_element() {
        let d = iterated_coproduct(&at(1, Generator::C), 2, &DEFAULT).unwrap();
        assert_eq!(
            d.to_string(),
            "1 (x) 1 (x) c_3 + 1 (x) c_2 (x) 1 + c_1 (x) 1 (x) 1"
        );
    }

    #[test]
    fn iterated_coproduct_of_h_minus_has_cumulative_shifts() {
        let d = iterated_coproduct(&at(1, Generator::HMinus), 2, &DEFAULT).unwrap();
        assert_eq!(d.legs(), 3);
        let shifts: Vec<ChargeForm> = d.terms[0]
            .words
            .iter()
            .map(|w| w[0].shift.clone())
            .collect();
        assert_eq!(
            shifts,
            vec![
                c(2, -1).add(&c(3, -1)),
                c(1, 1).add(&c(3, -1)),
                c(1, 1).add(&c(2, 1))
            ]
        );
    }

    #[test]
    fn iterated_coproduct_is_order_independent() {
        for g in Generator::ALL {
            for m in 2..=3 {
                let r = check_iterated_coproduct(g, m, &DEFAULT).unwrap();
                assert_eq!(r.status, Status::Pass, "{g:?} m={m}");
                assert_eq!(r.orders_checked, (1..=m).product::<usize>());
            }
        }
        assert_eq!(
            iterated_coproduct(&at(1, Generator::E), 5, &DEFAULT),
            Err(HopfError::Order(5))
        );
    }

    #[test]
    fn charge_forms_print_in_lowest_terms() {
        assert_eq!(c(1, 2).add(&c(2, 1)).to_string(), "c_1/2+c_2/4");
        assert_eq!(c(3, -4).to_string(), "-c_3");
        assert_eq!(
            ChargeForm {
                constant: 6,
                coeffs: BTreeMap::new()
            }
            .to_string(),
            "3/2"
        );
    }

    #[test]
    fn names_parse_back() {
        for g in Generator::ALL {
            assert_eq!(g.name().parse::<Generator>().unwrap(), g);
        }
        for a in Axiom::ALL {
            assert_eq!(a.name().parse::<Axiom>().unwrap(), a);
        }
        assert!("a4".parse::<Axiom>().is_err());
    }

    fn arb_form() -> impl Strategy<Value = ChargeForm> {
        (
            -8i32..8,
            prop::collection::btree_map(0i32..4, -8i32..8, 0..3),
        )
            .prop_map(|(k, m)| {
                m.into_iter().fold(
                    ChargeForm {
                        constant: k,
                        coeffs: BTreeMap::new(),
                    },
                    |f, (n, v)| f.add(&c(n, v)),
                )
            })
    }

    proptest! {
        #[test]
        fn tau_round_trips(k in -8i32..8, v in -8i32..8, n in -3i32..4, up in any::<bool>()) {
            let shift = ChargeForm { constant: k, coeffs: BTreeMap::new() }.add(&c(n, v));
            let x = TensorExpression::atom(n, shifted(AtomKind::F, shift));
            let (there, back) = if up { (Direction::Plus, Direction::Minus) } else { (Direction::Minus, Direction::Plus) };
            prop_assert_eq!(tau(&tau(&x, there).unwrap(), back).unwrap(), x);
        }

        #[test]
        fn forms_instantiate_linearly(a in arb_form(), b in arb_form(), c1 in -3i32..4, c2 in -3i32..4) {
            let ch = |n: i32| if n % 2 == 0 { c1 } else { c2 };
            prop_assert_eq!(a.add(&b).instantiate(&ch), a.instantiate(&ch) + b.instantiate(&ch));
            prop_assert!(a.add(&b.scale(-1)).add(&b).eq(&a));
        }
    }
}
