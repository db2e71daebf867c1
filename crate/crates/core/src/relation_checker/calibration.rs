//! Exhaustive scan of convention unknowns against a set of target relations.
//!
//! Every check depends on the E and F shifts only through `r = s_F / s_E`,
//! and each constituent identity only on some of `r`, `t`, `H+` shifts and
//! `H-` shifts. Verdicts are memoized on that reduced key, so the scan is
//! exhaustive over the box while each distinct identity is checked once.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use super::{
    check_ef_commutator, check_exchange, check_h_consistency, check_serre, elapsed_ms,
    exchange_equality, Assembly, CheckError, CheckWindow, RelationReport, Status, H_RELATIONS,
};
use crate::cartan_data::CartanData;
use crate::free_field::{Conventions, CurrentKind, Scale, PQ};
use crate::lattice_series::Witness;
use crate::theta_products::Relation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Exchange(Relation),
    /// The seven `H` relations with `H+-` built from E and F factors.
    HConsistency,
    /// Pole supports of `[E_i, F_i]` only.
    EfSupports,
    EfCommutator,
    Serre,
}

impl Target {
    pub fn name(&self) -> String {
        match self {
            Target::Exchange(r) => r.name().to_string(),
            Target::HConsistency => "H-consistency".into(),
            Target::EfSupports => "EF-supports".into(),
            Target::EfCommutator => "EF".into(),
            Target::Serre => "Serre".into(),
        }
    }

    /// Every relation family the checker knows, in report order.
    pub fn standard() -> Vec<Target> {
        let mut v: Vec<Target> = Relation::ALL.iter().map(|&r| Target::Exchange(r)).collect();
        v.extend([Target::HConsistency, Target::EfCommutator, Target::Serre]);
        v
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(r) = Relation::ALL.iter().find(|r| r.name() == s) {
            return Ok(Target::Exchange(*r));
        }
        match s {
            "H-consistency" => Ok(Target::HConsistency),
            "EF-supports" => Ok(Target::EfSupports),
            "EF" => Ok(Target::EfCommutator),
            "Serre" => Ok(Target::Serre),
            _ => Err(format!("unknown target `{s}`")),
        }
    }
}

impl Serialize for Target {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

/// Inclusive exponent ranges, in quarter units.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ZeroModeBox {
    pub q: (i32, i32),
    pub p: (i32, i32),
    pub signs: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CalibrationBox {
    pub e_q: (i32, i32),
    pub e_p: (i32, i32),
    pub f_q: (i32, i32),
    pub f_p: (i32, i32),
    /// `None` keeps `t = 1`.
    pub zero_mode: Option<ZeroModeBox>,
    /// Range for all eight `H+-` shift exponents; `None` keeps them literal.
    pub h_shifts: Option<(i32, i32)>,
}

impl Default for CalibrationBox {
    fn default() -> Self {
        CalibrationBox {
            e_q: (-2, 2),
            e_p: (-2, 2),
            f_q: (-2, 2),
            f_p: (-2, 2),
            zero_mode: Some(ZeroModeBox {
                q: (-4, 4),
                p: (-4, 4),
                signs: vec![1, -1],
            }),
            h_shifts: None,
        }
    }
}

impl CalibrationBox {
    /// The single point of the literal conventions.
    pub fn literal_only() -> Self {
        let lit = Conventions::literal();
        let pt = |e: i32| (e, e);
        CalibrationBox {
            e_q: pt(lit.e_shift.q),
            e_p: pt(lit.e_shift.p),
            f_q: pt(lit.f_shift.q),
            f_p: pt(lit.f_shift.p),
            zero_mode: None,
            h_shifts: None,
        }
    }

    pub fn with_h_shifts(mut self, range: (i32, i32)) -> Self {
        self.h_shifts = Some(range);
        self
    }

    fn contains(&self, c: &Conventions) -> bool {
        let inr = |r: (i32, i32), v: i32| r.0 <= v && v <= r.1;
        let lit = Conventions::literal();
        let shifts = inr(self.e_q, c.e_shift.q)
            && inr(self.e_p, c.e_shift.p)
            && inr(self.f_q, c.f_shift.q)
            && inr(self.f_p, c.f_shift.p);
        let t = match &self.zero_mode {
            None => c.e_zero_scale == Scale::ONE,
            Some(z) => {
                z.signs.contains(&c.e_zero_scale.sign)
                    && inr(z.q, c.e_zero_scale.pq.q)
                    && inr(z.p, c.e_zero_scale.pq.p)
            }
        };
        let h = match self.h_shifts {
            None => c.h_plus == lit.h_plus && c.h_minus == lit.h_minus,
            Some(r) => [c.h_plus.0, c.h_plus.1, c.h_minus.0, c.h_minus.1]
                .iter()
                .all(|e| inr(r, e.p) && inr(r, e.q)),
        };
        shifts && t && h
    }

    fn validate(&self) -> Result<(), CheckError> {
        let mut ranges = vec![self.e_q, self.e_p, self.f_q, self.f_p];
        if let Some(z) = &self.zero_mode {
            if z.signs.is_empty() || z.signs.iter().any(|s| s.abs() != 1) {
                return Err(CheckError::EmptyBox);
            }
            ranges.extend([z.q, z.p]);
        }
        ranges.extend(self.h_shifts);
        if ranges.iter().any(|r| r.0 > r.1) {
            return Err(CheckError::EmptyBox);
        }
        Ok(())
    }

    /// Shift ratio `s_F / s_E` with the number of shift pairs realizing it.
    fn ratios(&self) -> BTreeMap<PQ, u64> {
        let mut out = BTreeMap::new();
        for eq in self.e_q.0..=self.e_q.1 {
            for ep in self.e_p.0..=self.e_p.1 {
                for fq in self.f_q.0..=self.f_q.1 {
                    for fp in self.f_p.0..=self.f_p.1 {
                        *out.entry(PQ::new(fp - ep, fq - eq)).or_insert(0) += 1;
                    }
                }
            }
        }
        out
    }

    fn zero_modes(&self) -> Vec<Scale> {
        match &self.zero_mode {
            None => vec![Scale::ONE],
            Some(z) => {
                let mut v = Vec::new();
                for &sign in &z.signs {
                    for q in z.q.0..=z.q.1 {
                        for p in z.p.0..=z.p.1 {
                            v.push(Scale {
                                sign,
                                pq: PQ::new(p, q),
                            });
                        }
                    }
                }
                v
            }
        }
    }

    fn h_values(&self, literal: (PQ, PQ)) -> Vec<(PQ, PQ)> {
        let Some((lo, hi)) = self.h_shifts else {
            return vec![literal];
        };
        let mut v = Vec::new();
        for ep in lo..=hi {
            for eq in lo..=hi {
                for fp in lo..=hi {
                    for fq in lo..=hi {
                        v.push((PQ::new(ep, eq), PQ::new(fp, fq)));
                    }
                }
            }
        }
        v
    }

    /// A shift pair with ratio `r`, preferring the literal E shift.
    fn representative_shifts(&self, r: PQ) -> Option<(PQ, PQ)> {
        let inr = |rg: (i32, i32), v: i32| rg.0 <= v && v <= rg.1;
        let fits = |e: PQ| {
            let f = e.mul(r);
            inr(self.f_q, f.q) && inr(self.f_p, f.p)
        };
        let lit = Conventions::literal().e_shift;
        if inr(self.e_q, lit.q) && inr(self.e_p, lit.p) && fits(lit) {
            return Some((lit, lit.mul(r)));
        }
        for eq in self.e_q.0..=self.e_q.1 {
            for ep in self.e_p.0..=self.e_p.1 {
                let e = PQ::new(ep, eq);
                if fits(e) {
                    return Some((e, e.mul(r)));
                }
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CalibrationRequest {
    pub targets: Vec<Target>,
    pub search_box: CalibrationBox,
    /// Window of the two-point checks; Serre parts use [`CheckWindow::SERRE`].
    pub window: CheckWindow,
    pub cocycle: bool,
    /// Solution classes listed in full; the rest are only counted.
    pub max_classes: usize,
    /// Leading solution classes that get every standard check re-run.
    pub residual_classes: usize,
}

impl CalibrationRequest {
    pub fn new(targets: Vec<Target>) -> Self {
        CalibrationRequest {
            targets,
            search_box: CalibrationBox::default(),
            window: CheckWindow::TWO_POINT,
            cocycle: false,
            max_classes: 64,
            residual_classes: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TargetOutcome {
    pub target: Target,
    pub status: Status,
    /// First failing node pair.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiteralOutcome {
    pub conventions: Conventions,
    pub in_box: bool,
    pub passed: bool,
    pub targets: Vec<TargetOutcome>,
}

/// Assignments sharing every quantity the checks can see.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionClass {
    pub shift_ratio: PQ,
    pub zero_mode: Scale,
    pub h_plus: (PQ, PQ),
    pub h_minus: (PQ, PQ),
    /// Assignments in the box that fall in this class.
    pub assignments: u64,
    pub representative: Conventions,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub residual: Vec<TargetOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub algebra: String,
    pub targets: Vec<Target>,
    pub search_box: CalibrationBox,
    pub window: CheckWindow,
    pub cocycle: bool,
    pub assignments_scanned: u64,
    pub classes_scanned: u64,
    /// Distinct identities actually expanded.
    pub evaluations: usize,
    pub literal: LiteralOutcome,
    pub solution_count: u64,
    pub classes_total: u64,
    pub solutions: Vec<SolutionClass>,
    pub truncated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

impl CalibrationResult {
    pub fn without_timing(mut self) -> Self {
        self.elapsed_ms = None;
        self
    }
}

/// Single identity that a target is made of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Part {
    Exchange(Relation, usize, usize),
    HComponents(Relation, usize, usize),
    EfSupports,
    EfCore(usize, usize),
    EfOperator(usize, bool),
    Serre(CurrentKind, usize, usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
struct Deps {
    r: bool,
    t: bool,
    hp: bool,
    hm: bool,
}

impl Part {
    fn deps(self) -> Deps {
        use Relation::*;
        let d = |r, t, hp, hm| Deps { r, t, hp, hm };
        match self {
            Part::Exchange(rel, ..) | Part::HComponents(rel, ..) => match rel {
                EE | FF => d(false, false, false, false),
                HpHp => d(true, false, true, false),
                HmHm => d(true, false, false, true),
                HpHm => d(true, false, true, true),
                HpE | HpF => d(true, true, true, false),
                HmE | HmF => d(true, true, false, true),
            },
            Part::EfSupports => d(true, false, false, false),
            Part::EfCore(..) => d(true, true, false, false),
            Part::EfOperator(_, plus) => d(true, false, plus, !plus),
            Part::Serre(..) => d(false, false, false, false),
        }
    }

    /// Rough cost rank; cheap and widely shared identities go first.
    fn rank(self) -> u8 {
        match self {
            Part::EfSupports => 0,
            Part::Exchange(..) => 1,
            Part::EfCore(..) => 2,
            Part::EfOperator(..) => 3,
            Part::HComponents(..) => 4,
            Part::Serre(..) => 5,
        }
    }

    fn eval(
        self,
        cartan: &CartanData,
        window: CheckWindow,
        conv: &Conventions,
    ) -> Result<bool, CheckError> {
        match self {
            Part::Exchange(rel, i, j) => {
                Ok(
                    exchange_equality(rel, i, j, cartan, window, conv, Assembly::Summed, None)?
                        .equal,
                )
            }
            Part::HComponents(rel, i, j) => Ok(exchange_equality(
                rel,
                i,
                j,
                cartan,
                window,
                conv,
                Assembly::PerComponent,
                None,
            )?
            .equal),
            Part::EfSupports => Ok(check_ef_commutator(0, 0, cartan, window, conv)?
                .1
                .supports_match),
            Part::EfCore(i, j) => {
                let (rep, dd) = check_ef_commutator(i, j, cartan, window, conv)?;
                if i != j {
                    return Ok(rep.passed());
                }
                Ok(
                    dd.orderings_agree
                        && dd.supports_match
                        && dd.terms.iter().all(|t| t.order == 1),
                )
            }
            Part::EfOperator(i, plus) => {
                let (_, dd) = check_ef_commutator(i, i, cartan, window, conv)?;
                let tag = if plus { "H+" } else { "H-" };
                let mut hits = dd
                    .terms
                    .iter()
                    .filter(|t| {
                        t.expected_operator
                            .as_deref()
                            .is_some_and(|e| e.starts_with(tag))
                    })
                    .peekable();
                Ok(hits.peek().is_some() && hits.all(|t| t.operator_matches))
            }
            Part::Serre(field, i, j) => {
                Ok(check_serre(field, i, j, cartan, CheckWindow::SERRE, conv)?.passed())
            }
        }
    }

    /// Verdict in the requested window, discarding failures cheaply first.
    fn verdict(
        self,
        cartan: &CartanData,
        window: CheckWindow,
        conv: &Conventions,
    ) -> Result<bool, CheckError> {
        match self {
            Part::Serre(..) => self.eval(cartan, window, conv),
            // supports and operators do not depend on the window
            Part::EfSupports | Part::EfOperator(..) => {
                self.eval(cartan, CheckWindow::PREFILTER, conv)
            }
            _ => {
                if !self.eval(cartan, CheckWindow::PREFILTER, conv)? {
                    return Ok(false);
                }
                if window == CheckWindow::PREFILTER {
                    return Ok(true);
                }
                self.eval(cartan, window, conv)
            }
        }
    }
}

fn target_parts(target: Target, cartan: &CartanData) -> Vec<Part> {
    let pairs = cartan.node_pairs();
    match target {
        Target::Exchange(rel) => pairs
            .iter()
            .map(|&(i, j)| Part::Exchange(rel, i, j))
            .collect(),
        Target::HConsistency => pairs
            .iter()
            .flat_map(|&(i, j)| {
                H_RELATIONS
                    .iter()
                    .map(move |&rel| Part::HComponents(rel, i, j))
            })
            .collect(),
        Target::EfSupports => vec![Part::EfSupports],
        Target::EfCommutator => {
            let mut v = vec![Part::EfSupports];
            v.extend(pairs.iter().map(|&(i, j)| Part::EfCore(i, j)));
            for i in 0..cartan.rank {
                v.extend([Part::EfOperator(i, true), Part::EfOperator(i, false)]);
            }
            v
        }
        Target::Serre => pairs
            .iter()
            .filter(|&&(i, j)| cartan.entry(i, j) == -1)
            .flat_map(|&(i, j)| {
                [
                    Part::Serre(CurrentKind::E, i, j),
                    Part::Serre(CurrentKind::F, i, j),
                ]
            })
            .collect(),
    }
}

/// The quantities a check can see.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct ClassKey {
    r: PQ,
    t: Scale,
    hp: (PQ, PQ),
    hm: (PQ, PQ),
}

impl ClassKey {
    /// Conventions seen by a part: everything it ignores set to a fixed value.
    fn conventions(&self, d: Deps, cocycle: bool) -> Conventions {
        let lit = Conventions::literal();
        Conventions {
            e_shift: PQ::ONE,
            f_shift: if d.r { self.r } else { PQ::ONE },
            e_zero_scale: if d.t { self.t } else { Scale::ONE },
            h_plus: if d.hp { self.hp } else { lit.h_plus },
            h_minus: if d.hm { self.hm } else { lit.h_minus },
            cocycle,
        }
    }
}

struct Scan<'a> {
    cartan: &'a CartanData,
    window: CheckWindow,
    cocycle: bool,
    memo: HashMap<(Part, Conventions), bool>,
}

impl Scan<'_> {
    fn filter(&mut self, cands: Vec<ClassKey>, part: Part) -> Result<Vec<ClassKey>, CheckError> {
        let d = part.deps();
        let todo: BTreeSet<Conventions> = cands
            .iter()
            .map(|k| k.conventions(d, self.cocycle))
            .filter(|c| !self.memo.contains_key(&(part, *c)))
            .collect();
        let todo: Vec<Conventions> = todo.into_iter().collect();
        let (cartan, window) = (self.cartan, self.window);
        let done: Vec<(Conventions, bool)> = todo
            .par_iter()
            .map(|c| part.verdict(cartan, window, c).map(|v| (*c, v)))
            .collect::<Result<_, _>>()?;
        for (c, v) in done {
            self.memo.insert((part, c), v);
        }
        Ok(cands
            .into_iter()
            .filter(|k| self.memo[&(part, k.conventions(d, self.cocycle))])
            .collect())
    }

    fn filter_all(
        &mut self,
        mut cands: Vec<ClassKey>,
        parts: &[Part],
    ) -> Result<Vec<ClassKey>, CheckError> {
        for &p in parts {
            if cands.is_empty() {
                break;
            }
            cands = self.filter(cands, p)?;
        }
        Ok(cands)
    }
}

fn first_failure(target: Target, reports: &[RelationReport], conv: &Conventions) -> TargetOutcome {
    let bad = reports.iter().find(|r| !r.passed());
    TargetOutcome {
        target,
        status: Status::of(bad.is_none(), conv),
        nodes: bad.map(|r| (r.i, r.j)),
        relation: bad.map(|r| r.relation.clone()),
        witness: bad.and_then(|r| r.witness.clone()),
    }
}

/// All reports making up one target at the given conventions.
pub fn check_target(
    target: Target,
    cartan: &CartanData,
    window: CheckWindow,
    conv: &Conventions,
) -> Result<Vec<RelationReport>, CheckError> {
    let pairs = cartan.node_pairs();
    let mut out = Vec::new();
    match target {
        Target::Exchange(rel) => {
            for (i, j) in pairs {
                out.push(check_exchange(rel, i, j, cartan, window, conv)?);
            }
        }
        Target::HConsistency => {
            for (i, j) in pairs {
                out.push(check_h_consistency(i, j, cartan, window, conv)?);
            }
        }
        Target::EfSupports => {
            let (mut rep, dd) = check_ef_commutator(0, 0, cartan, window, conv)?;
            rep.relation = target.name();
            rep.status = Status::of(dd.supports_match, conv);
            rep.witness = (!dd.supports_match).then(|| Witness {
                exponents: vec![],
                monomial: "pole supports".into(),
                lhs: format!(
                    "{{{}}}",
                    dd.terms
                        .iter()
                        .map(|t| t.support.clone())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
                rhs: format!("{{{}}}", dd.expected_supports.join(", ")),
            });
            out.push(rep);
        }
        Target::EfCommutator => {
            for (i, j) in pairs {
                out.push(check_ef_commutator(i, j, cartan, window, conv)?.0);
            }
        }
        Target::Serre => {
            for (i, j) in pairs.into_iter().filter(|&(i, j)| cartan.entry(i, j) == -1) {
                for field in [CurrentKind::E, CurrentKind::F] {
                    out.push(check_serre(field, i, j, cartan, CheckWindow::SERRE, conv)?);
                }
            }
        }
    }
    Ok(out)
}

fn outcomes(
    targets: &[Target],
    cartan: &CartanData,
    window: CheckWindow,
    conv: &Conventions,
) -> Result<Vec<TargetOutcome>, CheckError> {
    targets
        .iter()
        .map(|&t| {
            Ok(first_failure(
                t,
                &check_target(t, cartan, window, conv)?,
                conv,
            ))
        })
        .collect()
}

/// Scans the box for conventions under which every target relation holds.
pub fn calibrate_shifts(
    cartan: &CartanData,
    req: &CalibrationRequest,
) -> Result<CalibrationResult, CheckError> {
    let start = Instant::now();
    if req.targets.is_empty() {
        return Err(CheckError::Precondition("no calibration targets".into()));
    }
    req.search_box.validate()?;
    let bx = &req.search_box;
    let lit = Conventions {
        cocycle: req.cocycle,
        ..Conventions::literal()
    };

    let ratios = bx.ratios();
    let ts = bx.zero_modes();
    let hps = bx.h_values(lit.h_plus);
    let hms = bx.h_values(lit.h_minus);
    let pairs_total: u64 = ratios.values().sum();
    let other = (ts.len() * hps.len() * hms.len()) as u64;

    let mut parts: Vec<Part> = Vec::new();
    for &t in &req.targets {
        for p in target_parts(t, cartan) {
            if !parts.contains(&p) {
                parts.push(p);
            }
        }
    }
    parts.sort_by_key(|p| (p.rank(), *p));
    let stage = |hp: bool, hm: bool| -> Vec<Part> {
        parts
            .iter()
            .copied()
            .filter(|p| p.deps().hp == hp && p.deps().hm == hm)
            .collect()
    };

    let mut scan = Scan {
        cartan,
        window: req.window,
        cocycle: req.cocycle,
        memo: HashMap::new(),
    };

    // stage 1: identities that ignore the H shifts
    let mut base = Vec::new();
    for &r in ratios.keys() {
        for &t in &ts {
            base.push(ClassKey {
                r,
                t,
                hp: lit.h_plus,
                hm: lit.h_minus,
            });
        }
    }
    let base = scan.filter_all(base, &stage(false, false))?;

    // stages 2 and 3: H+ and H- candidates separately, per surviving (r, t)
    let spread = |keys: &[ClassKey], vals: &[(PQ, PQ)], plus: bool| -> Vec<ClassKey> {
        let mut v = Vec::new();
        for k in keys {
            for &h in vals {
                v.push(if plus {
                    ClassKey { hp: h, ..*k }
                } else {
                    ClassKey { hm: h, ..*k }
                });
            }
        }
        v
    };
    let plus = scan.filter_all(spread(&base, &hps, true), &stage(true, false))?;
    let minus = scan.filter_all(spread(&base, &hms, false), &stage(false, true))?;

    // stage 4: joint identities on the product of the survivors
    let mut hm_by_rt: BTreeMap<(PQ, Scale), Vec<(PQ, PQ)>> = BTreeMap::new();
    for k in &minus {
        hm_by_rt.entry((k.r, k.t)).or_default().push(k.hm);
    }
    let mut joint = Vec::new();
    for k in &plus {
        for &hm in hm_by_rt.get(&(k.r, k.t)).map(Vec::as_slice).unwrap_or(&[]) {
            joint.push(ClassKey { hm, ..*k });
        }
    }
    let solutions = scan.filter_all(joint, &stage(true, true))?;

    let solution_count: u64 = solutions.iter().map(|k| ratios[&k.r]).sum();
    let mut classes = Vec::new();
    for (n, k) in solutions.iter().take(req.max_classes).enumerate() {
        let (e, f) = bx
            .representative_shifts(k.r)
            .expect("ratio comes from the box");
        let rep = Conventions {
            e_shift: e,
            f_shift: f,
            e_zero_scale: k.t,
            h_plus: k.hp,
            h_minus: k.hm,
            cocycle: req.cocycle,
        };
        let residual = if n < req.residual_classes {
            outcomes(&Target::standard(), cartan, req.window, &rep)?
        } else {
            vec![]
        };
        classes.push(SolutionClass {
            shift_ratio: k.r,
            zero_mode: k.t,
            h_plus: k.hp,
            h_minus: k.hm,
            assignments: ratios[&k.r],
            representative: rep,
            residual,
        });
    }

    let literal_targets = outcomes(&req.targets, cartan, req.window, &lit)?;
    let literal = LiteralOutcome {
        conventions: lit,
        in_box: bx.contains(&lit),
        passed: literal_targets.iter().all(|t| t.status.passed()),
        targets: literal_targets,
    };

    Ok(CalibrationResult {
        algebra: cartan.label(),
        targets: req.targets.clone(),
        search_box: bx.clone(),
        window: req.window,
        cocycle: req.cocycle,
        assignments_scanned: pairs_total * other,
        classes_scanned: ratios.len() as u64 * other,
        evaluations: scan.memo.len(),
        literal,
        solution_count,
        classes_total: solutions.len() as u64,
        truncated: solutions.len() > req.max_classes,
        solutions: classes,
        elapsed_ms: Some(elapsed_ms(start)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cartan_data::parse_label;

    fn a2() -> CartanData {
        parse_label("A2").unwrap()
    }

    fn all_parts(cartan: &CartanData) -> Vec<Part> {
        let mut v: Vec<Part> = Target::standard()
            .into_iter()
            .flat_map(|t| target_parts(t, cartan))
            .collect();
        v.push(Part::EfSupports);
        v
    }

    #[test]
    fn verdicts_only_see_the_reduced_key() {
        let cartan = a2();
        let w = CheckWindow { kx: 2, knome: 3 };
        let samples = [
            Conventions::literal(),
            Conventions {
                e_shift: PQ::new(-1, 2),
                f_shift: PQ::new(1, 2),
                e_zero_scale: Scale {
                    sign: -1,
                    pq: PQ::new(2, 4),
                },
                h_plus: (PQ::new(0, -2), PQ::new(0, 2)),
                h_minus: (PQ::new(-2, -2), PQ::new(2, 2)),
                cocycle: false,
            },
            Conventions {
                e_shift: PQ::new(1, -2),
                f_shift: PQ::new(-1, 0),
                e_zero_scale: Scale {
                    sign: -1,
                    pq: PQ::new(4, 4),
                },
                h_plus: (PQ::new(1, 1), PQ::new(-2, 0)),
                h_minus: (PQ::new(0, 1), PQ::new(2, -1)),
                cocycle: true,
            },
        ];
        for conv in samples {
            let key = ClassKey {
                r: conv.f_shift.mul(conv.e_shift.inv()),
                t: conv.e_zero_scale,
                hp: conv.h_plus,
                hm: conv.h_minus,
            };
            for part in all_parts(&cartan) {
                if matches!(part, Part::Serre(..)) && conv.cocycle {
                    continue;
                }
                let full = part.eval(&cartan, w, &conv).unwrap();
                let reduced = part
                    .eval(&cartan, w, &key.conventions(part.deps(), conv.cocycle))
                    .unwrap();
                assert_eq!(full, reduced, "{part:?} at {conv:?}");
            }
        }
    }

    fn ee() -> Target {
        Target::Exchange(Relation::EE)
    }

    fn certificate() -> Conventions {
        Conventions {
            e_shift: PQ::new(0, 2),
            f_shift: PQ::new(0, 2),
            e_zero_scale: Scale {
                sign: -1,
                pq: PQ::new(2, 4),
            },
            h_plus: (PQ::new(0, -2), PQ::new(0, 2)),
            h_minus: (PQ::new(-2, -2), PQ::new(2, 2)),
            cocycle: false,
        }
    }

    /// Default shift box, `t` restricted to a corner that holds `-qp`.
    fn narrow() -> CalibrationBox {
        CalibrationBox {
            zero_mode: Some(ZeroModeBox {
                q: (3, 4),
                p: (3, 4),
                signs: vec![1, -1],
            }),
            ..CalibrationBox::default()
        }
    }

    #[test]
    fn target_names_round_trip() {
        for t in Target::standard().into_iter().chain([Target::EfSupports]) {
            assert_eq!(t.name().parse::<Target>().unwrap(), t);
        }
        assert!("EG".parse::<Target>().is_err());
    }

    #[test]
    fn ee_accepts_every_assignment() {
        let r = calibrate_shifts(&a2(), &CalibrationRequest::new(vec![ee()])).unwrap();
        assert!(r.literal.passed && r.literal.in_box);
        assert_eq!(r.assignments_scanned, 625 * 162);
        assert_eq!(r.solution_count, r.assignments_scanned);
        assert_eq!(r.classes_total, r.classes_scanned);
        assert!(r.truncated);
        assert_eq!(r.solutions.len(), 64);
        // one identity per node pair, whatever the box
        assert_eq!(r.evaluations, 4);
    }

    #[test]
    fn literal_point_without_ef_solution_reports_witness() {
        let req = CalibrationRequest {
            search_box: CalibrationBox::literal_only(),
            ..CalibrationRequest::new(vec![Target::EfCommutator])
        };
        let r = calibrate_shifts(&a2(), &req).unwrap();
        assert_eq!(r.assignments_scanned, 1);
        assert!(r.solutions.is_empty());
        assert_eq!(r.solution_count, 0);
        assert!(r.literal.in_box && !r.literal.passed);
        let out = &r.literal.targets[0];
        assert_eq!(out.status, Status::Fail);
        assert!(out.witness.is_some());
    }

    #[test]
    fn ef_supports_force_equal_shifts() {
        let req = CalibrationRequest::new(vec![Target::EfSupports]);
        let r = calibrate_shifts(&a2(), &req).unwrap();
        assert!(r
            .solutions
            .iter()
            .all(|c| c.shift_ratio == PQ::ONE && c.assignments == 25));
        assert_eq!(r.solution_count, 25 * 162);
        assert!(!r.literal.passed);
    }

    #[test]
    fn ef_with_free_h_shifts_has_a_single_class() {
        let mut req = CalibrationRequest::new(vec![Target::EfCommutator]);
        req.search_box = CalibrationBox::default().with_h_shifts((-2, 2));
        let r = calibrate_shifts(&a2(), &req).unwrap();
        assert_eq!(r.classes_total, 1);
        let c = &r.solutions[0];
        assert_eq!(c.assignments, 25);
        let cert = certificate();
        assert_eq!(
            (c.shift_ratio, c.zero_mode, c.h_plus, c.h_minus),
            (PQ::ONE, cert.e_zero_scale, cert.h_plus, cert.h_minus)
        );
        let reps =
            check_target(Target::EfCommutator, &a2(), req.window, &c.representative).unwrap();
        assert!(reps
            .iter()
            .all(|r| r.status == Status::PassAfterCalibration));

        req.targets
            .extend([ee(), Target::Exchange(Relation::FF), Target::HConsistency]);
        let joint = calibrate_shifts(&a2(), &req).unwrap();
        assert_eq!(joint.solution_count, 0);
    }

    #[test]
    fn solutions_pass_when_substituted() {
        let targets = vec![ee(), Target::Exchange(Relation::FF), Target::HConsistency];
        let req = CalibrationRequest {
            search_box: narrow(),
            window: CheckWindow { kx: 2, knome: 3 },
            ..CalibrationRequest::new(targets.clone())
        };
        let r = calibrate_shifts(&a2(), &req).unwrap();
        assert!(!r.literal.passed);
        let lit = Conventions::literal();
        let rescaled = r.solutions.iter().find(|c| {
            c.representative
                == Conventions {
                    e_zero_scale: Scale {
                        sign: -1,
                        pq: PQ::new(4, 4),
                    },
                    ..lit
                }
        });
        assert!(rescaled.is_some());
        for c in &r.solutions {
            for &t in &targets {
                let reps = check_target(t, &a2(), req.window, &c.representative).unwrap();
                assert!(
                    reps.iter().all(|x| x.passed()),
                    "{t} at {:?}",
                    c.representative
                );
            }
        }
    }

    #[test]
    fn bad_requests_are_rejected() {
        let mut req = CalibrationRequest::new(vec![ee()]);
        req.search_box.e_q = (1, 0);
        assert_eq!(calibrate_shifts(&a2(), &req), Err(CheckError::EmptyBox));
        req.search_box = CalibrationBox::default();
        req.search_box.zero_mode.as_mut().unwrap().signs.clear();
        assert_eq!(calibrate_shifts(&a2(), &req), Err(CheckError::EmptyBox));
        req.targets.clear();
        assert!(matches!(
            calibrate_shifts(&a2(), &req),
            Err(CheckError::Precondition(_))
        ));
    }

    #[test]
    fn scans_are_deterministic() {
        let req = CalibrationRequest {
            search_box: narrow(),
            residual_classes: 1,
            ..CalibrationRequest::new(vec![Target::EfSupports])
        };
        let a = calibrate_shifts(&a2(), &req).unwrap().without_timing();
        let b = calibrate_shifts(&a2(), &req).unwrap().without_timing();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.solutions[0].residual.len(), Target::standard().len());
    }
}
