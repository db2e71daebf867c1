//! The level-one free boson: Heisenberg bracket, deformed mode coefficients,
//! contraction exponents between current fields and their product forms,
//! plus zero-mode bookkeeping.
//!
//! Every n-dependent scalar is a [`ModeRatio`]: a Laurent polynomial in
//! n-th powers of nome monomials over a product of `(1 - nu^n)` factors.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::cartan_data::CartanData;
use crate::lattice_series::{q_int, Exps, Monomial, Q};
use crate::theta_products::{NomeBasis, ProductForm, Relation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FieldError {
    #[error("mode index must be nonzero")]
    ZeroMode,
    #[error("denominator factor 1 - ({0})^n has zero nome weight")]
    NonPositiveDenominator(String),
    #[error("exponent coefficient {0} of ({1})^n is not an integer")]
    NonIntegral(String, String),
}

/// `p^{p/4} q^{q/4}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PQ {
    pub p: i32,
    pub q: i32,
}

impl PQ {
    pub const ONE: PQ = PQ { p: 0, q: 0 };

    pub const fn new(p: i32, q: i32) -> PQ {
        PQ { p, q }
    }

    pub fn mul(self, o: PQ) -> PQ {
        PQ {
            p: self.p + o.p,
            q: self.q + o.q,
        }
    }

    pub fn inv(self) -> PQ {
        PQ {
            p: -self.p,
            q: -self.q,
        }
    }

    pub fn pow(self, k: i32) -> PQ {
        PQ {
            p: self.p * k,
            q: self.q * k,
        }
    }

    pub fn weight(self) -> i32 {
        self.p + self.q
    }

    pub fn is_one(self) -> bool {
        self == PQ::ONE
    }

    pub fn exps(self, nb: &NomeBasis) -> Exps {
        nb.exps(self.p, self.q)
    }

    /// Value at `p = a^4`, `q = b^4`.
    pub fn eval(self, a: &Q, b: &Q) -> Q {
        a.pow(self.p) * b.pow(self.q)
    }
}

fn quarter_text(k: i32) -> String {
    if k % 4 == 0 {
        format!("{}", k / 4)
    } else if k % 2 == 0 {
        format!("{}/2", k / 2)
    } else {
        format!("{k}/4")
    }
}

impl fmt::Display for PQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        for (name, k) in [("p", self.p), ("q", self.q)] {
            match k {
                0 => {}
                4 => parts.push(name.to_string()),
                _ => parts.push(format!("{name}^{}", quarter_text(k))),
            }
        }
        if parts.is_empty() {
            write!(f, "1")
        } else {
            write!(f, "{}", parts.join(" "))
        }
    }
}

type Poly = BTreeMap<PQ, Q>;

fn poly_add_term(p: &mut Poly, e: PQ, c: Q) {
    if c.is_zero() {
        return;
    }
    let slot = p.entry(e).or_insert_with(Q::zero);
    *slot += c;
    if slot.is_zero() {
        p.remove(&e);
    }
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            poly_add_term(&mut out, ea.mul(*eb), ca * cb);
        }
    }
    out
}

fn one_minus(nu: PQ) -> Poly {
    let mut p = Poly::new();
    poly_add_term(&mut p, PQ::ONE, Q::one());
    poly_add_term(&mut p, nu, -Q::one());
    p
}

/// Representative of `mu` modulo powers of `nu`, and the power removed.
fn coset(mu: PQ, nu: PQ) -> (PQ, i32) {
    let k = if nu.p != 0 {
        mu.p.div_euclid(nu.p)
    } else {
        mu.q.div_euclid(nu.q)
    };
    (mu.mul(nu.pow(-k)), k)
}

/// Exact quotient by `1 - nu`, if it exists.
fn divide_one_minus(num: &Poly, nu: PQ) -> Option<Poly> {
    let mut cosets: BTreeMap<PQ, BTreeMap<i32, Q>> = BTreeMap::new();
    for (mu, c) in num {
        let (rep, k) = coset(*mu, nu);
        if rep.mul(nu.pow(k)) != *mu {
            return None;
        }
        cosets.entry(rep).or_default().insert(k, c.clone());
    }
    let mut out = Poly::new();
    for (rep, terms) in cosets {
        let lo = *terms.keys().next()?;
        let hi = *terms.keys().next_back()?;
        let mut run = Q::zero();
        for k in lo..=hi {
            if let Some(c) = terms.get(&k) {
                run += c;
            }
            if k == hi {
                if !run.is_zero() {
                    return None;
                }
            } else {
                poly_add_term(&mut out, rep.mul(nu.pow(k)), run.clone());
            }
        }
    }
    Some(out)
}

/// `sum_k c_k mu_k^n / prod_j (1 - nu_j^n)`, with every `nu_j` of positive
/// nome weight after normalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeRatio {
    pub numerator: BTreeMap<PQ, Q>,
    pub denominator: Vec<PQ>,
}

impl ModeRatio {
    pub fn zero() -> Self {
        ModeRatio {
            numerator: Poly::new(),
            denominator: vec![],
        }
    }

    pub fn constant(c: Q) -> Self {
        ModeRatio::monomial(PQ::ONE, c)
    }

    /// `c * mu^n`.
    pub fn monomial(mu: PQ, c: Q) -> Self {
        let mut numerator = Poly::new();
        poly_add_term(&mut numerator, mu, c);
        ModeRatio {
            numerator,
            denominator: vec![],
        }
    }

    /// `1 - nu^n`.
    pub fn one_minus(nu: PQ) -> Self {
        ModeRatio {
            numerator: one_minus(nu),
            denominator: vec![],
        }
    }

    /// `num / (1 - nu^n)`, normalized.
    pub fn over(mut self, nu: PQ) -> Result<Self, FieldError> {
        self.denominator.push(nu);
        self.normalize()
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_empty()
    }

    pub fn mul(&self, o: &ModeRatio) -> Result<Self, FieldError> {
        let mut denominator = self.denominator.clone();
        denominator.extend(o.denominator.iter().copied());
        ModeRatio {
            numerator: poly_mul(&self.numerator, &o.numerator),
            denominator,
        }
        .normalize()
    }

    pub fn add(&self, o: &ModeRatio) -> Result<Self, FieldError> {
        let mut a = self.numerator.clone();
        for nu in &o.denominator {
            a = poly_mul(&a, &one_minus(*nu));
        }
        let mut b = o.numerator.clone();
        for nu in &self.denominator {
            b = poly_mul(&b, &one_minus(*nu));
        }
        for (e, c) in b {
            poly_add_term(&mut a, e, c);
        }
        let mut denominator = self.denominator.clone();
        denominator.extend(o.denominator.iter().copied());
        ModeRatio {
            numerator: a,
            denominator,
        }
        .normalize()
    }

    pub fn scale(&self, c: &Q) -> ModeRatio {
        let mut out = ModeRatio::zero();
        for (e, v) in &self.numerator {
            poly_add_term(&mut out.numerator, *e, v * c);
        }
        if !out.is_zero() {
            out.denominator = self.denominator.clone();
        }
        out
    }

    /// Multiplies by `mu^n`.
    pub fn shift(&self, mu: PQ) -> ModeRatio {
        ModeRatio {
            numerator: self
                .numerator
                .iter()
                .map(|(e, c)| (e.mul(mu), c.clone()))
                .collect(),
            denominator: self.denominator.clone(),
        }
    }

    /// The same scalar as a function of `-n`.
    pub fn reflect(&self) -> Result<ModeRatio, FieldError> {
        self.power_map(-1)
    }

    /// Closed form at a fixed mode index: every `mu` becomes `mu^n`.
    pub fn at(&self, n: i32) -> Result<ModeRatio, FieldError> {
        if n == 0 {
            return Err(FieldError::ZeroMode);
        }
        self.power_map(n)
    }

    fn power_map(&self, k: i32) -> Result<ModeRatio, FieldError> {
        ModeRatio {
            numerator: self
                .numerator
                .iter()
                .map(|(e, c)| (e.pow(k), c.clone()))
                .collect(),
            denominator: self.denominator.iter().map(|e| e.pow(k)).collect(),
        }
        .normalize()
    }

    /// Flips negative-weight denominators and cancels every `(1 - nu^n)`
    /// that divides the numerator.
    pub fn normalize(self) -> Result<ModeRatio, FieldError> {
        let mut num = self.numerator;
        num.retain(|_, c| !c.is_zero());
        let mut dens = Vec::new();
        for nu in self.denominator {
            match nu.weight() {
                w if w > 0 => dens.push(nu),
                w if w < 0 => {
                    // 1/(1 - nu) = -nu^{-1} / (1 - nu^{-1})
                    num = num
                        .into_iter()
                        .map(|(e, c)| (e.mul(nu.inv()), -c))
                        .collect();
                    dens.push(nu.inv());
                }
                _ => return Err(FieldError::NonPositiveDenominator(nu.to_string())),
            }
        }
        if num.is_empty() {
            return Ok(ModeRatio::zero());
        }
        let mut kept = Vec::new();
        for nu in dens {
            match divide_one_minus(&num, nu) {
                Some(qt) => num = qt,
                None => kept.push(nu),
            }
        }
        kept.sort();
        Ok(ModeRatio {
            numerator: num,
            denominator: kept,
        })
    }

    /// Equality by cross multiplication, independent of cancellation.
    pub fn equals(&self, o: &ModeRatio) -> bool {
        let mut a = self.numerator.clone();
        for nu in &o.denominator {
            a = poly_mul(&a, &one_minus(*nu));
        }
        let mut b = o.numerator.clone();
        for nu in &self.denominator {
            b = poly_mul(&b, &one_minus(*nu));
        }
        a == b
    }

    /// Value at mode `n` with `p = a^4`, `q = b^4`.
    pub fn eval(&self, n: i32, a: &Q, b: &Q) -> Q {
        let mut num = Q::zero();
        for (mu, c) in &self.numerator {
            num += c * mu.pow(n).eval(a, b);
        }
        let mut den = Q::one();
        for nu in &self.denominator {
            den *= Q::one() - nu.pow(n).eval(a, b);
        }
        num / den
    }

    /// `exp(sum_{n>=1} gamma_n x^n / n)` as a product of Pochhammer families.
    pub fn to_product_form(&self, x: Exps, nb: &NomeBasis) -> Result<ProductForm, FieldError> {
        let nomes: Vec<Exps> = self.denominator.iter().map(|nu| nu.exps(nb)).collect();
        let mut pf = ProductForm::one();
        for (mu, c) in &self.numerator {
            if !c.is_integer() {
                return Err(FieldError::NonIntegral(c.to_string(), mu.to_string()));
            }
            let mult: i32 = (-c.to_integer())
                .try_into()
                .map_err(|_| FieldError::NonIntegral(c.to_string(), mu.to_string()))?;
            pf.push_family(Monomial::unit(x + mu.exps(nb)), nomes.clone(), mult);
        }
        Ok(pf)
    }

    pub fn describe(&self) -> String {
        if self.is_zero() {
            return "0".into();
        }
        let num: Vec<String> = self
            .numerator
            .iter()
            .map(|(e, c)| {
                if e.is_one() {
                    c.to_string()
                } else {
                    format!("{c}*({e})^n")
                }
            })
            .collect();
        let den: Vec<String> = self
            .denominator
            .iter()
            .map(|e| format!("(1-({e})^n)"))
            .collect();
        if den.is_empty() {
            num.join(" + ")
        } else {
            format!("[{}] / {}", num.join(" + "), den.join(""))
        }
    }
}

/// `scalar * ratio`, the closed form of a scalar at a fixed mode index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosedForm {
    pub scalar: Q,
    pub ratio: ModeRatio,
}

impl ClosedForm {
    pub fn eval(&self, a: &Q, b: &Q) -> Q {
        &self.scalar * self.ratio.eval(1, a, b)
    }
}

/// `n [a_i[n], a_j[-n]]` as a function of n.
pub fn bracket_ratio(a_ij: i32) -> ModeRatio {
    if a_ij == 0 {
        return ModeRatio::zero();
    }
    let h = 2 * a_ij;
    let mut pdiff = Poly::new();
    poly_add_term(&mut pdiff, PQ::new(h, 0), Q::one());
    poly_add_term(&mut pdiff, PQ::new(-h, 0), -Q::one());
    let num = poly_mul(
        &poly_mul(&one_minus(PQ::new(0, -4)), &pdiff),
        &one_minus(PQ::new(4, 4)),
    );
    ModeRatio {
        numerator: num,
        denominator: vec![PQ::new(4, 0)],
    }
    .normalize()
    .expect("p has positive weight")
}

/// `[a_i[n], a_j[-n]]` in closed form.
pub fn bracket_value(a_ij: i32, n: i32) -> Result<ClosedForm, FieldError> {
    if n == 0 {
        return Err(FieldError::ZeroMode);
    }
    Ok(ClosedForm {
        scalar: Q::new(1.into(), n.into()),
        ratio: bracket_ratio(a_ij).at(n)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum SMode {
    Plus,
    Minus,
}

/// `s^+[n] / a[n] = 1/(q^n - 1)` and `s^-[n] / a[n] = -1/((pq)^{-n} - 1)`.
pub fn smode_ratio(sign: SMode) -> ModeRatio {
    match sign {
        SMode::Plus => ModeRatio {
            numerator: [(PQ::ONE, -Q::one())].into(),
            denominator: vec![PQ::new(0, 4)],
        },
        SMode::Minus => ModeRatio {
            numerator: [(PQ::new(4, 4), -Q::one())].into(),
            denominator: vec![PQ::new(4, 4)],
        },
    }
}

pub fn smode_coefficient(sign: SMode, n: i32) -> Result<ClosedForm, FieldError> {
    if n == 0 {
        return Err(FieldError::ZeroMode);
    }
    Ok(ClosedForm {
        scalar: Q::one(),
        ratio: smode_ratio(sign).at(n)?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Field {
    E,
    F,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CurrentKind {
    E,
    F,
    #[serde(rename = "H+")]
    HPlus,
    #[serde(rename = "H-")]
    HMinus,
}

impl CurrentKind {
    pub const ALL: [CurrentKind; 4] = [
        CurrentKind::E,
        CurrentKind::F,
        CurrentKind::HPlus,
        CurrentKind::HMinus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CurrentKind::E => "E",
            CurrentKind::F => "F",
            CurrentKind::HPlus => "H+",
            CurrentKind::HMinus => "H-",
        }
    }
}

impl fmt::Display for CurrentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Currents `(X, Y)` of an exchange relation `X(z) Y(w) = R(z/w) Y(w) X(z)`.
pub fn relation_currents(rel: Relation) -> (CurrentKind, CurrentKind) {
    use CurrentKind::*;
    match rel {
        Relation::HpHp => (HPlus, HPlus),
        Relation::HmHm => (HMinus, HMinus),
        Relation::HpHm => (HPlus, HMinus),
        Relation::HpE => (HPlus, E),
        Relation::HmE => (HMinus, E),
        Relation::HpF => (HPlus, F),
        Relation::HmF => (HMinus, F),
        Relation::EE => (E, E),
        Relation::FF => (F, F),
    }
}

/// Monomial scale `sign * p^{p/4} q^{q/4}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Scale {
    pub sign: i32,
    pub pq: PQ,
}

impl Scale {
    pub const ONE: Scale = Scale {
        sign: 1,
        pq: PQ::ONE,
    };

    pub fn mul(self, o: Scale) -> Scale {
        Scale {
            sign: self.sign * o.sign,
            pq: self.pq.mul(o.pq),
        }
    }

    pub fn pow(self, k: i32) -> Scale {
        Scale {
            sign: if k % 2 == 0 { 1 } else { self.sign },
            pq: self.pq.pow(k),
        }
    }

    pub fn monomial(self, nb: &NomeBasis) -> Monomial {
        Monomial::new(self.pq.exps(nb), q_int(self.sign as i64))
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.sign < 0 {
            write!(f, "-{}", self.pq)
        } else {
            write!(f, "{}", self.pq)
        }
    }
}

/// Realization parameters that the bosonization leaves open to convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Conventions {
    /// Argument shift inside the E exponential.
    pub e_shift: PQ,
    /// Argument shift inside the F exponential.
    pub f_shift: PQ,
    /// `E(z)` carries `(t z)^P` instead of `z^P`.
    pub e_zero_scale: Scale,
    /// Shifts of the E and F factors composing `H+`.
    pub h_plus: (PQ, PQ),
    pub h_minus: (PQ, PQ),
    pub cocycle: bool,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions::literal()
    }
}

impl Conventions {
    /// The shifts exactly as written: `(pq)^{1/2}`, `q^{1/2}`, `p^{+-1/4}`.
    pub fn literal() -> Self {
        Conventions {
            e_shift: PQ::new(2, 2),
            f_shift: PQ::new(0, 2),
            e_zero_scale: Scale::ONE,
            h_plus: (PQ::new(1, 0), PQ::new(-1, 0)),
            h_minus: (PQ::new(-1, 0), PQ::new(1, 0)),
            cocycle: false,
        }
    }

    pub fn is_literal(&self) -> bool {
        *self
            == Conventions {
                cocycle: self.cocycle,
                ..Conventions::literal()
            }
    }

    /// `sigma(i, j)` with `sigma(i,j) sigma(j,i) = (-1)^{A_ij}`.
    pub fn cocycle_sign(&self, i: usize, j: usize, a_ij: i32) -> i32 {
        if self.cocycle && i > j && a_ij % 2 != 0 {
            -1
        } else {
            1
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "E shift {}, F shift {}, E zero-mode scale {}, H+ shifts ({}, {}), H- shifts ({}, {}), cocycle {}",
            self.e_shift,
            self.f_shift,
            self.e_zero_scale,
            self.h_plus.0,
            self.h_plus.1,
            self.h_minus.0,
            self.h_minus.1,
            if self.cocycle { "on" } else { "off" }
        )
    }
}

/// One `e^{charge Q} (scale z)^{charge P} :exp(...):` factor of a current.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Component {
    pub field: Field,
    pub charge: i32,
    pub zero_scale: Scale,
    pub mode_shift: PQ,
}

impl Component {
    /// Coefficient of `a[n] z^{-n}` in the exponent.
    pub fn mode_ratio(&self) -> ModeRatio {
        let base = match self.field {
            Field::E => smode_ratio(SMode::Plus),
            Field::F => smode_ratio(SMode::Minus).scale(&-Q::one()),
        };
        base.shift(self.mode_shift.inv())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct VertexOperatorSpec {
    pub kind: CurrentKind,
    pub node: usize,
    pub components: Vec<Component>,
}

impl VertexOperatorSpec {
    pub fn new(kind: CurrentKind, node: usize, conv: &Conventions) -> Self {
        let e = |h: PQ| Component {
            field: Field::E,
            charge: 1,
            zero_scale: conv.e_zero_scale.mul(Scale { sign: 1, pq: h }),
            mode_shift: conv.e_shift.mul(h),
        };
        let f = |h: PQ| Component {
            field: Field::F,
            charge: -1,
            zero_scale: Scale { sign: 1, pq: h },
            mode_shift: conv.f_shift.mul(h),
        };
        let components = match kind {
            CurrentKind::E => vec![e(PQ::ONE)],
            CurrentKind::F => vec![f(PQ::ONE)],
            CurrentKind::HPlus => vec![e(conv.h_plus.0), f(conv.h_plus.1)],
            CurrentKind::HMinus => vec![e(conv.h_minus.0), f(conv.h_minus.1)],
        };
        VertexOperatorSpec {
            kind,
            node,
            components,
        }
    }

    pub fn charge(&self) -> i32 {
        self.components.iter().map(|c| c.charge).sum()
    }

    /// Coefficient of `a[n] z^{-n}` in the exponent, summed over components.
    pub fn mode_ratio(&self) -> Result<ModeRatio, FieldError> {
        let mut acc = ModeRatio::zero();
        for c in &self.components {
            acc = acc.add(&c.mode_ratio())?;
        }
        Ok(acc)
    }
}

/// `gamma_n` in `X(z) Y(w) = (zero modes) exp(sum gamma_n (w/z)^n / n) :X Y:`.
pub fn contraction_exponent(
    x: &VertexOperatorSpec,
    y: &VertexOperatorSpec,
    a_ij: i32,
) -> Result<ModeRatio, FieldError> {
    bracket_ratio(a_ij)
        .mul(&x.mode_ratio()?)?
        .mul(&y.mode_ratio()?.reflect()?)
}

/// Zero-mode factor of `X(z) Y(w)`: `sign * scale * z^{z_power}` times the
/// cocycle sign.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ZeroMode {
    pub z_power: i32,
    pub scale: Scale,
    pub cocycle: i32,
}

pub fn zero_mode_pair(
    x: &VertexOperatorSpec,
    y: &VertexOperatorSpec,
    a_ij: i32,
    conv: &Conventions,
) -> ZeroMode {
    let mut zm = ZeroMode {
        z_power: 0,
        scale: Scale::ONE,
        cocycle: 1,
    };
    for c in &x.components {
        for d in &y.components {
            let e = c.charge * d.charge * a_ij;
            zm.z_power += e;
            zm.scale = zm.scale.mul(c.zero_scale.pow(e));
            zm.cocycle *= conv.cocycle_sign(x.node, y.node, a_ij);
        }
    }
    zm
}

/// A current at a spectral argument, for zero-mode bookkeeping of words.
#[derive(Clone, Debug)]
pub struct Atom {
    pub spec: VertexOperatorSpec,
    pub arg: Monomial,
}

/// Accumulated zero-mode monomial of an ordered word and its cocycle sign.
pub fn zero_mode_factor(
    word: &[Atom],
    cartan: &CartanData,
    conv: &Conventions,
    nb: &NomeBasis,
) -> (Monomial, i32) {
    let mut m = Monomial::one();
    let mut sign = 1;
    for (k, left) in word.iter().enumerate() {
        for right in &word[k + 1..] {
            let a = cartan.entry(left.spec.node, right.spec.node);
            let zm = zero_mode_pair(&left.spec, &right.spec, a, conv);
            m = m.mul(&zm.scale.monomial(nb)).mul(&left.arg.pow(zm.z_power));
            sign *= zm.cocycle;
        }
    }
    (m, sign)
}

/// Contraction data of an ordered pair of currents.
#[derive(Clone, Debug)]
pub struct ContractionDescriptor {
    pub x: CurrentKind,
    pub y: CurrentKind,
    pub i: usize,
    pub j: usize,
    pub a_ij: i32,
    pub gamma: ModeRatio,
    /// `C(x)` in the spectral variable given at construction.
    pub product: ProductForm,
    pub zero_mode: ZeroMode,
}

pub fn contraction_product_form(
    x: &VertexOperatorSpec,
    y: &VertexOperatorSpec,
    a_ij: i32,
    conv: &Conventions,
    var: Exps,
    nb: &NomeBasis,
) -> Result<ContractionDescriptor, FieldError> {
    let gamma = contraction_exponent(x, y, a_ij)?;
    let product = gamma.to_product_form(var, nb)?;
    Ok(ContractionDescriptor {
        x: x.kind,
        y: y.kind,
        i: x.node,
        j: y.node,
        a_ij,
        gamma,
        product,
        zero_mode: zero_mode_pair(x, y, a_ij, conv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice_series::{q_frac, window_equal, Series, VarDesc, VariableTable, Window};
    use std::sync::Arc;

    fn pq(p: i32, q: i32) -> PQ {
        PQ::new(p, q)
    }

    fn ab() -> (Q, Q) {
        (q_frac(1, 2), q_frac(1, 3))
    }

    #[test]
    fn bracket_closed_form_for_diagonal_entry() {
        // (1 - q^-1)(p - p^-1)(1 - pq)/(1 - p) at n = 1
        let v = bracket_value(2, 1).unwrap();
        let mut pdiff = Poly::new();
        poly_add_term(&mut pdiff, pq(4, 0), Q::one());
        poly_add_term(&mut pdiff, pq(-4, 0), -Q::one());
        let num = poly_mul(
            &poly_mul(&one_minus(pq(0, -4)), &pdiff),
            &one_minus(pq(4, 4)),
        );
        let hand = ModeRatio {
            numerator: num,
            denominator: vec![pq(4, 0)],
        };
        assert!(v.ratio.equals(&hand));
        assert_eq!(v.scalar, Q::one());
        let (a, b) = ab();
        let (p, q) = (a.pow(4), b.pow(4));
        let direct =
            (Q::one() - q.recip()) * (&p - p.recip()) * (Q::one() - &p * &q) / (Q::one() - &p);
        assert_eq!(v.eval(&a, &b), direct);
    }

    #[test]
    fn bracket_vanishes_on_orthogonal_nodes() {
        assert!(bracket_value(0, 3).unwrap().ratio.is_zero());
        assert_eq!(bracket_value(2, 0), Err(FieldError::ZeroMode));
    }

    #[test]
    fn bracket_is_antisymmetric_under_mode_reflection() {
        let (a, b) = ab();
        for aij in [2, -1, 0] {
            for n in [-3, -1, 1, 2, 3] {
                let v = bracket_value(aij, n).unwrap().eval(&a, &b);
                let w = bracket_value(aij, -n).unwrap().eval(&a, &b);
                assert_eq!(v, -w, "A={aij} n={n}");
            }
        }
    }

    #[test]
    fn smode_values() {
        let (a, b) = ab();
        let (p, q) = (a.pow(4), b.pow(4));
        let plus = smode_coefficient(SMode::Plus, 1).unwrap().eval(&a, &b);
        assert_eq!(plus, (&q - Q::one()).recip());
        let minus = smode_coefficient(SMode::Minus, 1).unwrap().eval(&a, &b);
        assert_eq!(minus, -((&p * &q).recip() - Q::one()).recip());
        assert_eq!(plus.clone() * plus.recip(), Q::one());
        assert_eq!(
            smode_coefficient(SMode::Minus, 0),
            Err(FieldError::ZeroMode)
        );
    }

    fn spec(kind: CurrentKind) -> VertexOperatorSpec {
        VertexOperatorSpec::new(kind, 0, &Conventions::literal())
    }

    #[test]
    fn ee_exponent_matches_hand_simplification() {
        for aij in [2, -1] {
            let g =
                contraction_exponent(&spec(CurrentKind::E), &spec(CurrentKind::E), aij).unwrap();
            let mut pdiff = Poly::new();
            poly_add_term(&mut pdiff, pq(2 * aij, 0), Q::one());
            poly_add_term(&mut pdiff, pq(-2 * aij, 0), -Q::one());
            let hand = ModeRatio {
                numerator: poly_mul(&pdiff, &one_minus(pq(4, 4))),
                denominator: vec![pq(4, 0), pq(0, 4)],
            };
            assert!(g.equals(&hand), "A={aij}: {}", g.describe());
            // direct numeric evaluation of kappa_E(n) kappa_E(-n) b(n)
            let (a, b) = ab();
            let q = b.pow(4);
            for n in 1..4 {
                let kap = (q.pow(n) - Q::one()).recip() * (q.pow(-n) - Q::one()).recip();
                let direct = kap * bracket_ratio(aij).eval(n, &a, &b);
                assert_eq!(g.eval(n, &a, &b), direct);
            }
        }
    }

    #[test]
    fn ef_literal_shifts_give_finite_form() {
        let table = VariableTable::spectral_nomes(&["x"]);
        let nb = NomeBasis::of(&table).unwrap();
        let x = table.exps(&[("x", 4)]).unwrap();
        let d = contraction_product_form(
            &spec(CurrentKind::E),
            &spec(CurrentKind::F),
            2,
            &Conventions::literal(),
            x,
            &nb,
        )
        .unwrap();
        assert!(d.product.families.is_empty());
        let mut expect = ProductForm::one();
        expect.push_finite(Monomial::unit(x + nb.exps(-6, -4)), -1);
        expect.push_finite(Monomial::unit(x + nb.exps(-2, -4)), -1);
        let mut got = d.product.finite.clone();
        got.sort_by(|a, b| a.0.exps.cmp(&b.0.exps));
        let mut want = expect.finite.clone();
        want.sort_by(|a, b| a.0.exps.cmp(&b.0.exps));
        assert_eq!(got, want);
        assert_eq!(d.zero_mode.z_power, -2);
    }

    #[test]
    fn orthogonal_nodes_give_trivial_contractions() {
        let table = VariableTable::spectral_nomes(&["x"]);
        let nb = NomeBasis::of(&table).unwrap();
        let x = table.exps(&[("x", 4)]).unwrap();
        let conv = Conventions {
            cocycle: true,
            ..Conventions::literal()
        };
        for k1 in CurrentKind::ALL {
            for k2 in CurrentKind::ALL {
                let a = VertexOperatorSpec::new(k1, 0, &conv);
                let b = VertexOperatorSpec::new(k2, 2, &conv);
                let d = contraction_product_form(&a, &b, 0, &conv, x, &nb).unwrap();
                assert!(d.product.is_one());
                assert_eq!(d.zero_mode.z_power, 0);
                assert_eq!(d.zero_mode.scale, Scale::ONE);
                assert_eq!(d.zero_mode.cocycle, 1);
            }
        }
    }

    #[test]
    fn reversed_order_reflects_gamma() {
        // gamma^{YX}_n equals gamma^{XY}_{-n} with the bracket symmetric in n.
        for k1 in CurrentKind::ALL {
            for k2 in CurrentKind::ALL {
                let a = spec(k1);
                let b = spec(k2);
                let xy = contraction_exponent(&a, &b, -1).unwrap();
                let yx = contraction_exponent(&b, &a, -1).unwrap();
                assert!(yx.equals(&xy.reflect().unwrap()), "{k1}{k2}");
            }
        }
    }

    #[test]
    fn coset_division_is_exact() {
        let p = one_minus(pq(4, 0));
        let prod = poly_mul(&poly_mul(&p, &one_minus(pq(0, 4))), &one_minus(pq(2, 2)));
        let back = divide_one_minus(&prod, pq(0, 4)).unwrap();
        assert_eq!(back, poly_mul(&p, &one_minus(pq(2, 2))));
        assert!(divide_one_minus(&one_minus(pq(4, 0)), pq(0, 4)).is_none());
        assert!(divide_one_minus(&one_minus(pq(2, 0)), pq(4, 0)).is_none());
    }

    #[test]
    fn zero_mode_ladder() {
        let table = VariableTable::spectral_nomes(&["z", "w"]);
        let nb = NomeBasis::of(&table).unwrap();
        let cd = crate::cartan_data::parse_label("A2").unwrap();
        let conv = Conventions::literal();
        let z = Monomial::unit(table.exps(&[("z", 4)]).unwrap());
        let w = Monomial::unit(table.exps(&[("w", 4)]).unwrap());
        let atom = |k, node, arg: &Monomial| Atom {
            spec: VertexOperatorSpec::new(k, node, &conv),
            arg: arg.clone(),
        };
        let (m, s) = zero_mode_factor(
            &[atom(CurrentKind::E, 0, &z), atom(CurrentKind::E, 1, &w)],
            &cd,
            &conv,
            &nb,
        );
        assert_eq!((m, s), (z.pow(-1), 1));
        let (m, _) = zero_mode_factor(
            &[atom(CurrentKind::E, 0, &z), atom(CurrentKind::F, 0, &w)],
            &cd,
            &conv,
            &nb,
        );
        assert_eq!(m, z.pow(-2));
        let (m, s) = zero_mode_factor(&[atom(CurrentKind::F, 1, &z)], &cd, &conv, &nb);
        assert_eq!((m, s), (Monomial::one(), 1));
    }

    /// Independent path: sum the exponential directly from the defining
    /// scalars, with every reciprocal taken as a series inverse.
    fn exp_oracle(
        table: &Arc<VariableTable>,
        w: &Window,
        x: &VertexOperatorSpec,
        y: &VertexOperatorSpec,
        aij: i32,
        nmax: i32,
    ) -> Series {
        let nb = NomeBasis::of(table).unwrap();
        let mono = |e: PQ, c: Q| Series::from_monomial(table, w, &Monomial::new(e.exps(&nb), c));
        let one = Series::one(table, w);
        let kappa = |c: &Component, n: i32| -> Series {
            // E: 1/(q^n - 1); F: 1/((pq)^{-n} - 1); then shift^{-n}
            let d = match c.field {
                Field::E => mono(pq(0, 4 * n), Q::one()).try_sub(&one).unwrap(),
                Field::F => mono(pq(-4 * n, -4 * n), Q::one()).try_sub(&one).unwrap(),
            };
            d.invert()
                .unwrap()
                .mul_monomial(&Monomial::unit(c.mode_shift.pow(-n).exps(&nb)))
        };
        let mut s = Series::zero(table, w);
        let xvar = table.exps(&[("x", 4)]).unwrap();
        for n in 1..=nmax {
            let h = 2 * aij;
            let b = one
                .try_sub(&mono(pq(0, -4 * n), Q::one()))
                .unwrap()
                .try_mul(
                    &mono(pq(h * n, 0), Q::one())
                        .try_sub(&mono(pq(-h * n, 0), Q::one()))
                        .unwrap(),
                )
                .unwrap()
                .try_mul(&one.try_sub(&mono(pq(4 * n, 4 * n), Q::one())).unwrap())
                .unwrap()
                .try_mul(
                    &one.try_sub(&mono(pq(4 * n, 0), Q::one()))
                        .unwrap()
                        .invert()
                        .unwrap(),
                )
                .unwrap();
            let mut mx = Series::zero(table, w);
            for c in &x.components {
                mx = mx.try_add(&kappa(c, n)).unwrap();
            }
            let mut my = Series::zero(table, w);
            for c in &y.components {
                my = my.try_add(&kappa(c, -n)).unwrap();
            }
            let term = b.try_mul(&mx).unwrap().try_mul(&my).unwrap();
            let term = term.mul_monomial(&Monomial::new(xvar.scale(n), Q::new(1.into(), n.into())));
            s = s.try_add(&term).unwrap();
        }
        let mut acc = Series::one(table, w);
        let mut power = Series::one(table, w);
        let kmax = 2 * nmax + 2;
        for k in 1..=kmax {
            power = power
                .try_mul(&s)
                .unwrap()
                .scale(&Q::new(1.into(), k.into()));
            acc = acc.try_add(&power).unwrap();
        }
        acc
    }

    #[test]
    fn product_forms_match_summed_exponentials() {
        let table = VariableTable::new(vec![
            VarDesc::spectral("x").with_weight(4),
            VarDesc::nome("p"),
            VarDesc::nome("q"),
        ])
        .unwrap();
        let nb = NomeBasis::of(&table).unwrap();
        let w = Window::with_bounds(&table, &[("x", 0, 8)], 40)
            .unwrap()
            .with_margin(48);
        let conv = Conventions::literal();
        let xvar = table.exps(&[("x", 4)]).unwrap();
        for aij in [2, -1] {
            for k1 in CurrentKind::ALL {
                for k2 in CurrentKind::ALL {
                    let a = VertexOperatorSpec::new(k1, 0, &conv);
                    let b = VertexOperatorSpec::new(k2, 1, &conv);
                    let d = contraction_product_form(&a, &b, aij, &conv, xvar, &nb).unwrap();
                    let (num, den) = d.product.split();
                    let lhs = exp_oracle(&table, &w, &a, &b, aij, 2)
                        .try_mul(&den.expand(&table, &w).unwrap())
                        .unwrap();
                    let rhs = num.expand(&table, &w).unwrap();
                    let rep = window_equal(&lhs, &rhs, &w).unwrap();
                    assert!(rep.equal, "{k1}{k2} A={aij}: {:?}", rep.witness);
                }
            }
        }
    }
}
