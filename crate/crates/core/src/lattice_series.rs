//! Exact sparse truncated Laurent series on a quarter-integer exponent lattice.
//!
//! Exponents are stored as integers equal to four times the true exponent, so
//! `p^{1/4}` is the exponent `1`. Every variable carries an integer grading
//! weight; the weighted degree of a term is `sum(weight * exponent)` in quarter
//! units. A [`Series`] knows the degree through which it is exact (`prec`), and
//! products propagate that precision so factors with negative degree cannot
//! corrupt low-order coefficients.
//!
//! Spectral bounds of a [`Window`] are applied when a series is observed
//! (coefficient queries, comparisons, serialization). Storage keeps every term
//! up to the working degree bound, which is what keeps later products exact.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

/// Exact rational coefficient type used everywhere.
pub type Q = BigRational;

/// Maximum number of variables in a table.
pub const MAX_VARS: usize = 8;

pub fn q_int(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn q_frac(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

/// `num/den` rendering used by every serializer.
pub fn q_text(c: &Q) -> String {
    format!("{}/{}", c.numer(), c.denom())
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SeriesError {
    #[error("variable tables differ")]
    TableMismatch,
    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),
    #[error("too many variables ({0}, at most {MAX_VARS})")]
    TooManyVariables(usize),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("series is not invertible: {0}")]
    NotInvertible(String),
    #[error("exponent leaves the quarter lattice")]
    LatticeViolation,
    #[error("query {0} lies outside the window")]
    OutsideWindow(String),
    #[error("series is exact only through degree {have}, but degree {need} is required")]
    InsufficientPrecision { have: i64, need: i64 },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Nome,
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VarDesc {
    pub name: String,
    pub kind: VarKind,
    /// Grading weight per quarter unit of exponent.
    pub weight: i64,
    pub note: String,
}

impl VarDesc {
    /// A nome of weight 1.
    pub fn nome(name: &str) -> Self {
        VarDesc {
            name: name.to_string(),
            kind: VarKind::Nome,
            weight: 1,
            note: String::new(),
        }
    }

    /// A spectral variable of weight 0: series are Laurent polynomials in it at
    /// every nome degree.
    pub fn spectral(name: &str) -> Self {
        VarDesc {
            name: name.to_string(),
            kind: VarKind::Spectral,
            weight: 0,
            note: String::new(),
        }
    }

    pub fn with_weight(mut self, weight: i64) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.note = note.to_string();
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VariableTable {
    vars: Vec<VarDesc>,
}

impl VariableTable {
    pub fn new(vars: Vec<VarDesc>) -> Result<Arc<Self>, SeriesError> {
        if vars.len() > MAX_VARS {
            return Err(SeriesError::TooManyVariables(vars.len()));
        }
        for (k, v) in vars.iter().enumerate() {
            if vars[..k].iter().any(|u| u.name == v.name) {
                return Err(SeriesError::DuplicateVariable(v.name.clone()));
            }
        }
        Ok(Arc::new(VariableTable { vars }))
    }

    /// The table `{x, p, q}` used for two-point exchange checks.
    pub fn spectral_nomes(spectral: &[&str]) -> Arc<Self> {
        let mut vars: Vec<VarDesc> = spectral.iter().map(|s| VarDesc::spectral(s)).collect();
        vars.push(VarDesc::nome("p"));
        vars.push(VarDesc::nome("q"));
        VariableTable::new(vars).expect("distinct names")
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn vars(&self) -> &[VarDesc] {
        &self.vars
    }

    pub fn index(&self, name: &str) -> Result<usize, SeriesError> {
        self.vars
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| SeriesError::UnknownVariable(name.to_string()))
    }

    pub fn degree(&self, e: &Exps) -> i64 {
        self.vars
            .iter()
            .enumerate()
            .map(|(k, v)| v.weight * e.0[k] as i64)
            .sum()
    }

    /// Exponent vector from `(name, quarter units)` pairs.
    pub fn exps(&self, parts: &[(&str, i32)]) -> Result<Exps, SeriesError> {
        let mut e = Exps::ZERO;
        for (name, v) in parts {
            e.0[self.index(name)?] += v;
        }
        Ok(e)
    }

    pub fn monomial(&self, parts: &[(&str, i32)], coeff: Q) -> Result<Monomial, SeriesError> {
        Ok(Monomial {
            exps: self.exps(parts)?,
            coeff,
        })
    }

    pub fn format_exps(&self, e: &Exps) -> String {
        let parts: Vec<String> = (0..self.len()).map(|k| e.0[k].to_string()).collect();
        format!("({})", parts.join(","))
    }

    /// Human-readable monomial text such as `x^-1 p^1/2`.
    pub fn format_monomial(&self, e: &Exps) -> String {
        let mut out = Vec::new();
        for (k, v) in self.vars.iter().enumerate() {
            let n = e.0[k];
            if n == 0 {
                continue;
            }
            let r = Q::new(BigInt::from(n), BigInt::from(4));
            if r.is_one() {
                out.push(v.name.clone());
            } else if r.is_integer() {
                out.push(format!("{}^{}", v.name, r.numer()));
            } else {
                out.push(format!("{}^{}/{}", v.name, r.numer(), r.denom()));
            }
        }
        if out.is_empty() {
            "1".to_string()
        } else {
            out.join(" ")
        }
    }
}

/// Exponent vector in quarter units, indexed by variable position.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default)]
pub struct Exps(pub [i32; MAX_VARS]);

impl Exps {
    pub const ZERO: Exps = Exps([0; MAX_VARS]);

    pub fn unit(k: usize, v: i32) -> Exps {
        let mut e = Exps::ZERO;
        e.0[k] = v;
        e
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    pub fn scale(&self, k: i32) -> Exps {
        let mut e = *self;
        for v in e.0.iter_mut() {
            *v *= k;
        }
        e
    }
}

impl std::ops::Add for Exps {
    type Output = Exps;
    fn add(self, o: Exps) -> Exps {
        let mut e = self;
        for k in 0..MAX_VARS {
            e.0[k] += o.0[k];
        }
        e
    }
}

impl std::ops::Sub for Exps {
    type Output = Exps;
    fn sub(self, o: Exps) -> Exps {
        let mut e = self;
        for k in 0..MAX_VARS {
            e.0[k] -= o.0[k];
        }
        e
    }
}

impl std::ops::Neg for Exps {
    type Output = Exps;
    fn neg(self) -> Exps {
        self.scale(-1)
    }
}

/// A single term `coeff * vars^exps`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial {
    pub exps: Exps,
    pub coeff: Q,
}

impl Monomial {
    pub fn new(exps: Exps, coeff: Q) -> Self {
        Monomial { exps, coeff }
    }

    pub fn unit(exps: Exps) -> Self {
        Monomial {
            exps,
            coeff: Q::one(),
        }
    }

    pub fn one() -> Self {
        Monomial::unit(Exps::ZERO)
    }

    pub fn mul(&self, o: &Monomial) -> Monomial {
        Monomial {
            exps: self.exps + o.exps,
            coeff: &self.coeff * &o.coeff,
        }
    }

    pub fn inv(&self) -> Monomial {
        Monomial {
            exps: -self.exps,
            coeff: self.coeff.recip(),
        }
    }

    pub fn pow(&self, k: i32) -> Monomial {
        let coeff = if k >= 0 {
            num_traits::pow(self.coeff.clone(), k as usize)
        } else {
            num_traits::pow(self.coeff.recip(), (-k) as usize)
        };
        Monomial {
            exps: self.exps.scale(k),
            coeff,
        }
    }

    pub fn neg(&self) -> Monomial {
        Monomial {
            exps: self.exps,
            coeff: -self.coeff.clone(),
        }
    }
}

/// Observation region: spectral exponent bounds plus a weighted degree cap.
///
/// `margin` extends the degree bound used while building series so that
/// products with negative-degree factors still reach `cap` exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Window {
    pub bounds: Vec<Option<(i32, i32)>>,
    pub cap: i64,
    pub margin: i64,
}

impl Window {
    /// Spectral variables bounded by `[-4 kx, 4 kx]`, degree cap `4 knome`.
    pub fn symmetric(table: &VariableTable, kx: i32, knome: i64) -> Window {
        let bounds = table
            .vars()
            .iter()
            .map(|v| match v.kind {
                VarKind::Spectral => Some((-4 * kx, 4 * kx)),
                VarKind::Nome => None,
            })
            .collect();
        Window {
            bounds,
            cap: 4 * knome,
            margin: 0,
        }
    }

    /// Explicit bounds in quarter units for the named spectral variables.
    pub fn with_bounds(
        table: &VariableTable,
        spectral: &[(&str, i32, i32)],
        cap: i64,
    ) -> Result<Window, SeriesError> {
        let mut bounds = vec![None; table.len()];
        for (name, lo, hi) in spectral {
            if lo > hi {
                return Err(SeriesError::InvalidWindow(format!("{name}: {lo} > {hi}")));
            }
            bounds[table.index(name)?] = Some((*lo, *hi));
        }
        if cap < 0 {
            return Err(SeriesError::InvalidWindow("negative degree cap".into()));
        }
        Ok(Window {
            bounds,
            cap,
            margin: 0,
        })
    }

    pub fn with_margin(mut self, margin: i64) -> Window {
        self.margin = margin.max(0);
        self
    }

    /// Degree bound used for construction.
    pub fn work(&self) -> i64 {
        self.cap + self.margin
    }

    pub fn contains(&self, table: &VariableTable, e: &Exps) -> bool {
        if table.degree(e) > self.cap {
            return false;
        }
        self.bounds.iter().enumerate().all(|(k, b)| match b {
            Some((lo, hi)) => e.0[k] >= *lo && e.0[k] <= *hi,
            None => true,
        })
    }

    pub fn intersect(&self, o: &Window) -> Window {
        let bounds = self
            .bounds
            .iter()
            .zip(o.bounds.iter())
            .map(|(a, b)| match (a, b) {
                (Some((l1, h1)), Some((l2, h2))) => Some(((*l1).max(*l2), (*h1).min(*h2))),
                (Some(x), None) | (None, Some(x)) => Some(*x),
                (None, None) => None,
            })
            .collect();
        Window {
            bounds,
            cap: self.cap.min(o.cap),
            margin: self.margin.min(o.margin),
        }
    }
}

/// First discrepancy found by [`window_equal`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub exponents: Vec<i32>,
    pub monomial: String,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EqualityReport {
    pub equal: bool,
    pub compared_terms: usize,
    pub witness: Option<Witness>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    table: Arc<VariableTable>,
    window: Window,
    terms: BTreeMap<Exps, Q>,
    prec: Option<i64>,
    truncated: bool,
}

fn min_opt(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

impl Series {
    pub fn zero(table: &Arc<VariableTable>, window: &Window) -> Series {
        Series {
            table: table.clone(),
            window: window.clone(),
            terms: BTreeMap::new(),
            prec: None,
            truncated: false,
        }
    }

    pub fn one(table: &Arc<VariableTable>, window: &Window) -> Series {
        Series::from_monomial(table, window, &Monomial::one())
    }

    pub fn from_monomial(table: &Arc<VariableTable>, window: &Window, m: &Monomial) -> Series {
        Series::from_terms(table, window, vec![(m.exps, m.coeff.clone())])
    }

    /// Exact finite sum of terms; terms beyond the working bound are dropped
    /// and the series becomes truncated.
    pub fn from_terms(
        table: &Arc<VariableTable>,
        window: &Window,
        terms: impl IntoIterator<Item = (Exps, Q)>,
    ) -> Series {
        let mut s = Series::zero(table, window);
        for (e, c) in terms {
            add_term(&mut s.terms, e, c);
        }
        s.clamp(None);
        s
    }

    /// `1 - m`, the building block of every product form.
    pub fn one_minus(table: &Arc<VariableTable>, window: &Window, m: &Monomial) -> Series {
        Series::from_terms(
            table,
            window,
            vec![(Exps::ZERO, Q::one()), (m.exps, -m.coeff.clone())],
        )
    }

    pub fn table(&self) -> &Arc<VariableTable> {
        &self.table
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn prec(&self) -> Option<i64> {
        self.prec
    }

    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Stored terms in canonical order, including those outside the spectral
    /// bounds.
    pub fn terms(&self) -> impl Iterator<Item = (&Exps, &Q)> {
        self.terms.iter()
    }

    /// Terms visible through the window.
    pub fn window_terms(&self) -> impl Iterator<Item = (&Exps, &Q)> {
        self.terms
            .iter()
            .filter(move |(e, _)| self.window.contains(&self.table, e))
    }

    /// Lowest stored weighted degree, `None` for the zero series.
    pub fn valuation(&self) -> Option<i64> {
        self.terms.keys().map(|e| self.table.degree(e)).min()
    }

    pub fn max_degree(&self) -> Option<i64> {
        self.terms.keys().map(|e| self.table.degree(e)).max()
    }

    pub fn with_window(mut self, window: &Window) -> Series {
        self.window = window.clone();
        self.clamp(self.prec);
        self
    }

    /// Lowers the recorded precision to at most `prec`.
    pub fn with_prec(mut self, prec: i64) -> Series {
        let p = min_opt(self.prec, Some(prec));
        self.truncated = true;
        self.clamp(p);
        self
    }

    /// Drops terms beyond `min(prec, work bound)` and records precision.
    fn clamp(&mut self, prec: Option<i64>) {
        let work = self.window.work();
        let bound = prec.map_or(work, |p| p.min(work));
        let table = self.table.clone();
        let before = self.terms.len();
        self.terms.retain(|e, _| table.degree(e) <= bound);
        if self.terms.len() != before {
            self.truncated = true;
        }
        self.prec = match prec {
            Some(p) => Some(p.min(work)),
            None if self.terms.len() != before => Some(bound),
            None => None,
        };
    }

    fn check_table(&self, o: &Series) -> Result<(), SeriesError> {
        if Arc::ptr_eq(&self.table, &o.table) || *self.table == *o.table {
            Ok(())
        } else {
            Err(SeriesError::TableMismatch)
        }
    }

    pub fn try_add(&self, o: &Series) -> Result<Series, SeriesError> {
        self.check_table(o)?;
        let mut terms = self.terms.clone();
        for (e, c) in &o.terms {
            add_term(&mut terms, *e, c.clone());
        }
        let mut s = Series {
            table: self.table.clone(),
            window: self.window.intersect(&o.window),
            terms,
            prec: None,
            truncated: self.truncated || o.truncated,
        };
        s.clamp(min_opt(self.prec, o.prec));
        Ok(s)
    }

    pub fn try_sub(&self, o: &Series) -> Result<Series, SeriesError> {
        self.try_add(&o.neg())
    }

    pub fn neg(&self) -> Series {
        let mut s = self.clone();
        for c in s.terms.values_mut() {
            *c = -c.clone();
        }
        s
    }

    pub fn scale(&self, k: &Q) -> Series {
        if k.is_zero() {
            let mut z = Series::zero(&self.table, &self.window);
            z.prec = self.prec;
            return z;
        }
        let mut s = self.clone();
        for c in s.terms.values_mut() {
            *c *= k;
        }
        s
    }

    /// Multiplication by a single monomial; shifts degree and precision.
    pub fn mul_monomial(&self, m: &Monomial) -> Series {
        if m.coeff.is_zero() {
            return self.scale(&Q::zero());
        }
        let d = self.table.degree(&m.exps);
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| (*e + m.exps, c * &m.coeff))
            .collect();
        let mut s = Series {
            table: self.table.clone(),
            window: self.window.clone(),
            terms,
            prec: None,
            truncated: self.truncated,
        };
        s.clamp(self.prec.map(|p| p + d));
        s
    }

    pub fn try_mul(&self, o: &Series) -> Result<Series, SeriesError> {
        self.check_table(o)?;
        let window = self.window.intersect(&o.window);
        let va = self.valuation();
        let vb = o.valuation();
        // An unknown term of a beyond prec_a meets at worst the lowest term of b.
        let pa = self.prec.map(|p| p + vb.unwrap_or(0));
        let pb = o.prec.map(|p| p + va.unwrap_or(0));
        let exact_zero =
            self.terms.is_empty() && self.prec.is_none() || o.terms.is_empty() && o.prec.is_none();
        let prec = if exact_zero { None } else { min_opt(pa, pb) };
        let bound = prec.map_or(window.work(), |p| p.min(window.work()));
        let (terms, dropped) = mul_terms(&self.table, &self.terms, &o.terms, bound);
        let mut s = Series {
            table: self.table.clone(),
            window,
            terms,
            prec: None,
            truncated: self.truncated || o.truncated || dropped,
        };
        let prec = if dropped && prec.is_none() {
            Some(bound)
        } else {
            prec
        };
        s.clamp(prec);
        Ok(s)
    }

    pub fn pow(&self, k: u32) -> Series {
        let mut acc = Series::one(&self.table, &self.window);
        for _ in 0..k {
            acc = acc.try_mul(self).expect("same table");
        }
        acc
    }

    /// Multiplicative inverse. The lowest-degree slice must be one monomial.
    pub fn invert(&self) -> Result<Series, SeriesError> {
        let v = self
            .valuation()
            .ok_or_else(|| SeriesError::NotInvertible("zero series".into()))?;
        let lead: Vec<(&Exps, &Q)> = self
            .terms
            .iter()
            .filter(|(e, _)| self.table.degree(e) == v)
            .collect();
        if lead.len() != 1 {
            let shown: Vec<String> = lead
                .iter()
                .map(|(e, _)| self.table.format_monomial(e))
                .collect();
            return Err(SeriesError::NotInvertible(format!(
                "lowest degree {v} has {} terms: {}",
                lead.len(),
                shown.join(", ")
            )));
        }
        if matches!(self.prec, Some(p) if p < v) {
            return Err(SeriesError::NotInvertible(
                "leading term not known exactly".into(),
            ));
        }
        let minv = Monomial::new(*lead[0].0, lead[0].1.clone()).inv();
        // self = m (1 + r) with every term of r of positive degree.
        let mut r: BTreeMap<Exps, Q> = BTreeMap::new();
        for (e, c) in &self.terms {
            if self.table.degree(e) > v {
                r.insert(*e + minv.exps, c * &minv.coeff);
            }
        }
        let mut target = self.window.work() + v;
        if let Some(p) = self.prec {
            target = target.min(p - v);
        }
        let one: BTreeMap<Exps, Q> = [(Exps::ZERO, Q::one())].into_iter().collect();
        let mut s = one.clone();
        loop {
            let (rs, _) = mul_terms(&self.table, &r, &s, target);
            let mut next = one.clone();
            for (e, c) in rs {
                add_term(&mut next, e, -c);
            }
            if next == s {
                break;
            }
            s = next;
        }
        let infinite = !r.is_empty();
        let terms = s
            .into_iter()
            .map(|(e, c)| (e + minv.exps, c * &minv.coeff))
            .collect();
        let mut out = Series {
            table: self.table.clone(),
            window: self.window.clone(),
            terms,
            prec: None,
            truncated: self.truncated || infinite,
        };
        let prec = if infinite || self.prec.is_some() {
            Some(target - v)
        } else {
            None
        };
        out.clamp(prec);
        Ok(out)
    }

    /// Replaces `var` by `var * m`. A term `var^e` picks up `m^e`.
    ///
    /// When `m` has nonzero degree and the input is truncated, the result is
    /// exact only within the window's bounds for `var`.
    pub fn substitute(&self, var: &str, m: &Monomial) -> Result<Series, SeriesError> {
        let k = self.table.index(var)?;
        let dm = self.table.degree(&m.exps);
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let n = e.0[k];
            let shifted = m.exps.scale(n);
            if shifted.0.iter().any(|v| v % 4 != 0) {
                return Err(SeriesError::LatticeViolation);
            }
            let coeff = if m.coeff.is_one() {
                Q::one()
            } else if n % 4 == 0 {
                m.pow(n / 4).coeff
            } else {
                return Err(SeriesError::LatticeViolation);
            };
            let mut ne = *e;
            for j in 0..MAX_VARS {
                ne.0[j] += shifted.0[j] / 4;
            }
            add_term(&mut terms, ne, c * coeff);
        }
        let prec = match (self.prec, self.window.bounds[k]) {
            (None, _) => None,
            (Some(p), _) if dm == 0 => Some(p),
            (Some(p), Some((lo, hi))) => {
                let lo_shift = (dm * lo as i64).min(dm * hi as i64).min(0);
                Some(p + lo_shift.div_euclid(4))
            }
            (Some(p), None) => Some(p),
        };
        let mut s = Series {
            table: self.table.clone(),
            window: self.window.clone(),
            terms,
            prec: None,
            truncated: self.truncated || (self.prec.is_some() && dm != 0),
        };
        s.clamp(prec);
        Ok(s)
    }

    pub fn coefficient(&self, e: &Exps) -> Result<Q, SeriesError> {
        if !self.window.contains(&self.table, e) {
            return Err(SeriesError::OutsideWindow(self.table.format_exps(e)));
        }
        let d = self.table.degree(e);
        if let Some(p) = self.prec {
            if d > p {
                return Err(SeriesError::InsufficientPrecision { have: p, need: d });
            }
        }
        Ok(self.terms.get(e).cloned().unwrap_or_else(Q::zero))
    }

    /// Canonical text: a header naming the variables, then one line per term
    /// inside the window as `(e1,...,ek) num/den` with exponents in quarter
    /// units.
    pub fn to_canonical_text(&self) -> String {
        let names: Vec<&str> = self.table.vars().iter().map(|v| v.name.as_str()).collect();
        let mut out = format!("vars {} (quarter units)\n", names.join(","));
        for (e, c) in self.window_terms() {
            out.push_str(&format!("{} {}\n", self.table.format_exps(e), q_text(c)));
        }
        out
    }

    /// Sum of coefficients visible in the window grouped by the nome part of
    /// their exponent, i.e. evaluation of every spectral variable at 1.
    pub fn spectral_sum(&self) -> BTreeMap<Exps, Q> {
        let mut out: BTreeMap<Exps, Q> = BTreeMap::new();
        for (e, c) in self.terms() {
            let mut ne = *e;
            for (k, v) in self.table.vars().iter().enumerate() {
                if v.kind == VarKind::Spectral {
                    ne.0[k] = 0;
                }
            }
            add_term(&mut out, ne, c.clone());
        }
        out
    }
}

/// Cauchy product keeping terms of degree at most `bound`; also reports
/// whether any pair was skipped.
fn mul_terms(
    table: &VariableTable,
    a: &BTreeMap<Exps, Q>,
    b: &BTreeMap<Exps, Q>,
    bound: i64,
) -> (BTreeMap<Exps, Q>, bool) {
    let mut b_sorted: Vec<(i64, &Exps, &Q)> =
        b.iter().map(|(e, c)| (table.degree(e), e, c)).collect();
    b_sorted.sort_by_key(|t| t.0);
    let mut acc: HashMap<Exps, Q> = HashMap::new();
    let mut dropped = false;
    for (ea, ca) in a {
        let da = table.degree(ea);
        for (db, eb, cb) in &b_sorted {
            if da + db > bound {
                dropped = true;
                break;
            }
            let c = ca * *cb;
            match acc.get_mut(&(*ea + **eb)) {
                Some(v) => *v += c,
                None => {
                    acc.insert(*ea + **eb, c);
                }
            }
        }
    }
    (
        acc.into_iter().filter(|(_, c)| !c.is_zero()).collect(),
        dropped,
    )
}

fn add_term(terms: &mut BTreeMap<Exps, Q>, e: Exps, c: Q) {
    if c.is_zero() {
        return;
    }
    match terms.get_mut(&e) {
        Some(v) => {
            *v += c;
            if v.is_zero() {
                terms.remove(&e);
            }
        }
        None => {
            terms.insert(e, c);
        }
    }
}

impl std::ops::Add for &Series {
    type Output = Series;
    fn add(self, o: &Series) -> Series {
        self.try_add(o)
            .expect("series from different variable tables")
    }
}

impl std::ops::Sub for &Series {
    type Output = Series;
    fn sub(self, o: &Series) -> Series {
        self.try_sub(o)
            .expect("series from different variable tables")
    }
}

impl std::ops::Mul for &Series {
    type Output = Series;
    fn mul(self, o: &Series) -> Series {
        self.try_mul(o)
            .expect("series from different variable tables")
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, c) in &self.terms {
            let sign = if c.is_negative() { "-" } else { "+" };
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let a = c.abs();
            let mono = self.table.format_monomial(e);
            if mono == "1" {
                write!(f, "{a}")?;
            } else if a.is_one() {
                write!(f, "{mono}")?;
            } else {
                write!(f, "{a}*{mono}")?;
            }
        }
        Ok(())
    }
}

/// Compares `a` and `b` on every exponent vector inside `w`.
///
/// Both series must be exact through `w.cap`. The witness is the
/// lexicographically first exponent vector where they differ.
pub fn window_equal(a: &Series, b: &Series, w: &Window) -> Result<EqualityReport, SeriesError> {
    a.check_table(b)?;
    for s in [a, b] {
        if let Some(p) = s.prec {
            if p < w.cap {
                return Err(SeriesError::InsufficientPrecision {
                    have: p,
                    need: w.cap,
                });
            }
        }
    }
    let table = &a.table;
    let mut keys: Vec<&Exps> = a
        .terms
        .keys()
        .chain(b.terms.keys())
        .filter(|e| w.contains(table, e))
        .collect();
    keys.sort();
    keys.dedup();
    for e in &keys {
        let ca = a.terms.get(e).cloned().unwrap_or_else(Q::zero);
        let cb = b.terms.get(e).cloned().unwrap_or_else(Q::zero);
        if ca != cb {
            return Ok(EqualityReport {
                equal: false,
                compared_terms: keys.len(),
                witness: Some(Witness {
                    exponents: e.0[..table.len()].to_vec(),
                    monomial: table.format_monomial(e),
                    lhs: q_text(&ca),
                    rhs: q_text(&cb),
                }),
            });
        }
    }
    Ok(EqualityReport {
        equal: true,
        compared_terms: keys.len(),
        witness: None,
    })
}
