//! Pochhammer symbols, Jacobi theta functions and the exchange coefficients
//! built from them, as symbolic product forms with exact windowed expansions.

use std::fmt;
use std::sync::Arc;

use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;
use twofloat::TwoFloat;

use crate::lattice_series::{Exps, Monomial, Series, SeriesError, VariableTable, Window, Q};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ThetaError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("nome generator {0} has non-positive degree")]
    NonPositiveNome(String),
    #[error("product form has a negative multiplicity; clear denominators before expanding")]
    NegativeMultiplicity,
    #[error("exponent p^{0}/4 is not on the quarter lattice")]
    OffLattice(i32),
    #[error("Serre coefficient requires A_ij = -1, got {0}")]
    NotAdjacent(i32),
    #[error("scaling probe: {0}")]
    Probe(String),
}

/// Positions of `p` and `q` in a variable table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NomeBasis {
    pub p: usize,
    pub q: usize,
}

impl NomeBasis {
    pub fn of(table: &VariableTable) -> Result<NomeBasis, SeriesError> {
        Ok(NomeBasis {
            p: table.index("p")?,
            q: table.index("q")?,
        })
    }

    /// `p^{pq/4} q^{qq/4}`.
    pub fn exps(&self, pq: i32, qq: i32) -> Exps {
        let mut e = Exps::ZERO;
        e.0[self.p] += pq;
        e.0[self.q] += qq;
        e
    }

    pub fn mono(&self, pq: i32, qq: i32) -> Monomial {
        Monomial::unit(self.exps(pq, qq))
    }

    /// `q~ = q p^c` with `c` in quarter units.
    pub fn qtilde(&self, c4: i32) -> Exps {
        self.exps(c4, 4)
    }
}

/// One Pochhammer family `(base | nomes)_inf ^ mult`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Family {
    pub base: Monomial,
    pub nomes: Vec<Exps>,
    pub mult: i32,
}

/// `prefactor * prod (1 - u_k)^{m_k} * prod (u_0 | nomes)^{m}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProductForm {
    pub prefactor: Monomial,
    pub finite: Vec<(Monomial, i32)>,
    pub families: Vec<Family>,
}

impl Default for ProductForm {
    fn default() -> Self {
        ProductForm::one()
    }
}

impl ProductForm {
    pub fn one() -> Self {
        ProductForm {
            prefactor: Monomial::one(),
            finite: vec![],
            families: vec![],
        }
    }

    pub fn monomial(m: Monomial) -> Self {
        ProductForm {
            prefactor: m,
            finite: vec![],
            families: vec![],
        }
    }

    pub fn pochhammer(base: Monomial, nomes: Vec<Exps>, mult: i32) -> Self {
        let mut f = ProductForm::one();
        f.push_family(base, nomes, mult);
        f
    }

    /// `theta_nome(u) = (u|nome)(nome/u|nome)(nome|nome)`.
    pub fn theta(u: &Monomial, nome: Exps) -> Self {
        let mut f = ProductForm::one();
        f.push_family(u.clone(), vec![nome], 1);
        f.push_family(Monomial::unit(nome).mul(&u.inv()), vec![nome], 1);
        f.push_family(Monomial::unit(nome), vec![nome], 1);
        f
    }

    pub fn push_finite(&mut self, u: Monomial, mult: i32) {
        if mult == 0 {
            return;
        }
        if let Some(slot) = self.finite.iter_mut().find(|(v, _)| *v == u) {
            slot.1 += mult;
        } else {
            self.finite.push((u, mult));
        }
        self.finite.retain(|(_, m)| *m != 0);
    }

    pub fn push_family(&mut self, base: Monomial, mut nomes: Vec<Exps>, mult: i32) {
        if mult == 0 {
            return;
        }
        if nomes.is_empty() {
            self.push_finite(base, mult);
            return;
        }
        nomes.sort();
        if let Some(slot) = self
            .families
            .iter_mut()
            .find(|f| f.base == base && f.nomes == nomes)
        {
            slot.mult += mult;
        } else {
            self.families.push(Family { base, nomes, mult });
        }
        self.families.retain(|f| f.mult != 0);
    }

    pub fn mul(&self, o: &ProductForm) -> ProductForm {
        let mut out = self.clone();
        out.prefactor = out.prefactor.mul(&o.prefactor);
        for (u, m) in &o.finite {
            out.push_finite(u.clone(), *m);
        }
        for f in &o.families {
            out.push_family(f.base.clone(), f.nomes.clone(), f.mult);
        }
        out
    }

    pub fn inv(&self) -> ProductForm {
        ProductForm {
            prefactor: self.prefactor.inv(),
            finite: self.finite.iter().map(|(u, m)| (u.clone(), -m)).collect(),
            families: self
                .families
                .iter()
                .map(|f| Family {
                    base: f.base.clone(),
                    nomes: f.nomes.clone(),
                    mult: -f.mult,
                })
                .collect(),
        }
    }

    pub fn scale(&self, m: &Monomial) -> ProductForm {
        let mut out = self.clone();
        out.prefactor = out.prefactor.mul(m);
        out
    }

    pub fn is_one(&self) -> bool {
        self.prefactor == Monomial::one() && self.finite.is_empty() && self.families.is_empty()
    }

    /// Splits into `(numerator, denominator)` with positive multiplicities.
    /// The prefactor stays in the numerator.
    pub fn split(&self) -> (ProductForm, ProductForm) {
        let mut num = ProductForm::monomial(self.prefactor.clone());
        let mut den = ProductForm::one();
        for (u, m) in &self.finite {
            if *m > 0 {
                num.push_finite(u.clone(), *m);
            } else {
                den.push_finite(u.clone(), -m);
            }
        }
        for f in &self.families {
            if f.mult > 0 {
                num.push_family(f.base.clone(), f.nomes.clone(), f.mult);
            } else {
                den.push_family(f.base.clone(), f.nomes.clone(), -f.mult);
            }
        }
        (num, den)
    }

    /// Lower bound for the weighted valuation of the expansion.
    pub fn valuation_bound(&self, table: &VariableTable) -> Result<i64, ThetaError> {
        let mut v = table.degree(&self.prefactor.exps);
        for (u, m) in &self.finite {
            v += (*m as i64) * table.degree(&u.exps).min(0);
        }
        for f in &self.families {
            check_nomes(table, &f.nomes)?;
            let neg: i64 = members_below(table, &f.base.exps, &f.nomes, -1)
                .iter()
                .map(|e| table.degree(e))
                .sum();
            v += f.mult as i64 * neg;
        }
        Ok(v)
    }

    /// Exact expansion in `window`. Every multiplicity must be positive.
    pub fn expand(
        &self,
        table: &Arc<VariableTable>,
        window: &Window,
    ) -> Result<Series, ThetaError> {
        if self.finite.iter().any(|(_, m)| *m < 0) || self.families.iter().any(|f| f.mult < 0) {
            return Err(ThetaError::NegativeMultiplicity);
        }
        if self.prefactor.coeff.is_zero() {
            return Ok(Series::zero(table, window));
        }
        let own = table.degree(&self.prefactor.exps);
        let vlb = self.valuation_bound(table)? - own;
        // Each factor is built far enough that the negative valuations of the
        // others cannot pull unknown terms below the working bound.
        let ext = window
            .clone()
            .with_margin(window.margin.max(window.margin - vlb - own));
        let mut factors: Vec<Series> = Vec::new();
        for (u, m) in &self.finite {
            let s = Series::one_minus(table, &ext, u);
            for _ in 0..*m {
                factors.push(s.clone());
            }
        }
        for f in &self.families {
            let s = pochhammer(table, &ext, &f.base, &f.nomes)?;
            for _ in 0..f.mult {
                factors.push(s.clone());
            }
        }
        factors.sort_by_key(|s| s.len());
        let mut acc = Series::one(table, &ext);
        for s in &factors {
            acc = acc.try_mul(s)?;
        }
        Ok(acc.mul_monomial(&self.prefactor).with_window(window))
    }

    /// Equal form in which every factor has nonnegative weighted degree.
    ///
    /// Negative-degree members are peeled off the families one nome at a
    /// time and `(1 - m)` with `deg m < 0` becomes `-m (1 - 1/m)`.
    pub fn normalized(&self, table: &VariableTable) -> Result<ProductForm, ThetaError> {
        let mut out = ProductForm::monomial(self.prefactor.clone());
        let mut finite: Vec<(Monomial, i32)> = self.finite.clone();
        for f in &self.families {
            check_nomes(table, &f.nomes)?;
            peel(table, &f.base, &f.nomes, f.mult, &mut out, &mut finite);
        }
        for (u, m) in finite {
            if table.degree(&u.exps) < 0 {
                out.prefactor = out.prefactor.mul(&u.neg().pow(m));
                out.push_finite(u.inv(), m);
            } else {
                out.push_finite(u, m);
            }
        }
        Ok(out)
    }

    /// `self / o` with identical factors cancelled, split into numerator and
    /// denominator.
    pub fn reduce_against(&self, o: &ProductForm) -> (ProductForm, ProductForm) {
        self.mul(&o.inv()).split()
    }

    pub fn describe(&self, table: &VariableTable) -> String {
        let mut parts = vec![format!(
            "{}*{}",
            self.prefactor.coeff,
            table.format_monomial(&self.prefactor.exps)
        )];
        for (u, m) in &self.finite {
            parts.push(format!(
                "(1 - {}*{})^{}",
                u.coeff,
                table.format_monomial(&u.exps),
                m
            ));
        }
        for f in &self.families {
            let nomes: Vec<String> = f.nomes.iter().map(|n| table.format_monomial(n)).collect();
            parts.push(format!(
                "({}*{} | {})^{}",
                f.base.coeff,
                table.format_monomial(&f.base.exps),
                nomes.join(","),
                f.mult
            ));
        }
        parts.join(" ")
    }
}

fn peel(
    table: &VariableTable,
    base: &Monomial,
    nomes: &[Exps],
    mult: i32,
    out: &mut ProductForm,
    finite: &mut Vec<(Monomial, i32)>,
) {
    if members_below(table, &base.exps, nomes, -1).is_empty() {
        out.push_family(base.clone(), nomes.to_vec(), mult);
        return;
    }
    let Some((last, rest)) = nomes.split_last() else {
        finite.push((base.clone(), mult));
        return;
    };
    // (u | rest, n) = (u | rest) (u n | rest, n)
    if rest.is_empty() {
        finite.push((base.clone(), mult));
    } else {
        peel(table, base, rest, mult, out, finite);
    }
    peel(
        table,
        &base.mul(&Monomial::unit(*last)),
        nomes,
        mult,
        out,
        finite,
    );
}

fn check_nomes(table: &VariableTable, nomes: &[Exps]) -> Result<(), ThetaError> {
    for n in nomes {
        if table.degree(n) <= 0 {
            return Err(ThetaError::NonPositiveNome(table.format_monomial(n)));
        }
    }
    Ok(())
}

/// Exponents `u * prod nomes^i` of degree at most `bound`.
fn members_below(table: &VariableTable, u: &Exps, nomes: &[Exps], bound: i64) -> Vec<Exps> {
    let mut out = Vec::new();
    fn rec(table: &VariableTable, cur: Exps, nomes: &[Exps], bound: i64, out: &mut Vec<Exps>) {
        if table.degree(&cur) > bound {
            return;
        }
        match nomes.split_first() {
            None => out.push(cur),
            Some((first, rest)) => {
                let mut e = cur;
                while table.degree(&e) <= bound {
                    rec(table, e, rest, bound, out);
                    e = e + *first;
                }
            }
        }
    }
    rec(table, *u, nomes, bound, &mut out);
    out
}

/// Windowed expansion of `(u | nomes)_inf`.
///
/// Factors whose argument has degree beyond what can reach the window
/// contribute 1; the result records the degree through which it is exact.
pub fn pochhammer(
    table: &Arc<VariableTable>,
    window: &Window,
    u: &Monomial,
    nomes: &[Exps],
) -> Result<Series, ThetaError> {
    check_nomes(table, nomes)?;
    if nomes.is_empty() {
        return Ok(Series::one_minus(table, window, u));
    }
    let vlb: i64 = members_below(table, &u.exps, nomes, -1)
        .iter()
        .map(|e| table.degree(e))
        .sum();
    let ext = window.clone().with_margin(window.margin - vlb);
    let members = members_below(table, &u.exps, nomes, ext.work());
    let mut acc = Series::one(table, &ext);
    for e in members {
        let f = Series::one_minus(table, &ext, &Monomial::new(e, u.coeff.clone()));
        acc = acc.try_mul(&f)?;
    }
    // Omitted factors (1 - t) have deg t > ext.work(), so they only touch
    // degrees above ext.work() + vlb = window.work().
    Ok(acc.with_window(window).with_prec(window.work()))
}

/// Windowed expansion of `theta_nome(u)`.
pub fn theta(
    table: &Arc<VariableTable>,
    window: &Window,
    u: &Monomial,
    nome: Exps,
) -> Result<Series, ThetaError> {
    ProductForm::theta(u, nome).expand(table, window)
}

/// Exchange relations of the elliptic current algebra.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Relation {
    #[serde(rename = "H+H+")]
    HpHp,
    #[serde(rename = "H-H-")]
    HmHm,
    #[serde(rename = "H+H-")]
    HpHm,
    #[serde(rename = "H+E")]
    HpE,
    #[serde(rename = "H-E")]
    HmE,
    #[serde(rename = "H+F")]
    HpF,
    #[serde(rename = "H-F")]
    HmF,
    EE,
    FF,
}

impl Relation {
    pub const ALL: [Relation; 9] = [
        Relation::HpHp,
        Relation::HmHm,
        Relation::HpHm,
        Relation::HpE,
        Relation::HmE,
        Relation::HpF,
        Relation::HmF,
        Relation::EE,
        Relation::FF,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Relation::HpHp => "H+H+",
            Relation::HmHm => "H-H-",
            Relation::HpHm => "H+H-",
            Relation::HpE => "H+E",
            Relation::HmE => "H-E",
            Relation::HpF => "H+F",
            Relation::HmF => "H-F",
            Relation::EE => "EE",
            Relation::FF => "FF",
        }
    }

    pub fn parse(s: &str) -> Option<Relation> {
        Relation::ALL
            .iter()
            .copied()
            .find(|r| r.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StructureLabel {
    #[serde(rename = "psi_q")]
    PsiQ,
    #[serde(rename = "psi_qtilde")]
    PsiQtilde,
    #[serde(rename = "exchange")]
    Exchange(Relation),
}

/// Theta-ratio coefficient `numerator / denominator`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureFunction {
    pub label: StructureLabel,
    pub i: usize,
    pub j: usize,
    /// Central charge in quarter units.
    pub c4: i32,
    pub numerator: ProductForm,
    pub denominator: ProductForm,
}

impl StructureFunction {
    pub fn as_product(&self) -> ProductForm {
        self.numerator.mul(&self.denominator.inv())
    }
}

fn sign(a: i32) -> Q {
    if a.rem_euclid(2) == 0 {
        Q::one()
    } else {
        -Q::one()
    }
}

/// Which theta nome a structure function uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ThetaKind {
    Q,
    Qtilde,
}

/// `psi^{(a)}_{ij}(x)` evaluated at the spectral monomial `x`.
///
/// `a_ij` is the Cartan entry, `c4` the central charge in quarter units.
pub fn structure_psi(
    kind: ThetaKind,
    i: usize,
    j: usize,
    a_ij: i32,
    c4: i32,
    x: &Exps,
    nb: NomeBasis,
) -> StructureFunction {
    let half = nb.exps(2 * a_ij, 0);
    let xinv = Monomial::unit(-*x);
    let (nome, s, label) = match kind {
        ThetaKind::Q => (nb.exps(0, 4), 1, StructureLabel::PsiQ),
        ThetaKind::Qtilde => (nb.qtilde(c4), -1, StructureLabel::PsiQtilde),
    };
    let pre = Monomial::new(half.scale(-s), sign(a_ij));
    let numerator = ProductForm::theta(&xinv.mul(&Monomial::unit(half.scale(s))), nome).scale(&pre);
    let denominator = ProductForm::theta(&xinv.mul(&Monomial::unit(half.scale(-s))), nome);
    StructureFunction {
        label,
        i,
        j,
        c4,
        numerator,
        denominator,
    }
}

/// Coefficient `R(y)` in `X_i(z) Y_j(w) = R(z/w) Y_j(w) X_i(z)`, with `y` the
/// spectral monomial standing for `z/w`.
pub fn exchange_coefficient(
    rel: Relation,
    i: usize,
    j: usize,
    a_ij: i32,
    c4: i32,
    y: &Exps,
    nb: NomeBasis,
) -> Result<StructureFunction, ThetaError> {
    exchange_coefficient_in(rel, i, j, a_ij, c4, y, nb, nb.exps(0, 4))
}

/// [`exchange_coefficient`] of the family member whose nome is `qn`, so
/// that `q~ = qn p^c`.
#[allow(clippy::too_many_arguments)]
pub fn exchange_coefficient_in(
    rel: Relation,
    i: usize,
    j: usize,
    a_ij: i32,
    c4: i32,
    y: &Exps,
    nb: NomeBasis,
    qn: Exps,
) -> Result<StructureFunction, ThetaError> {
    let a2 = 2 * a_ij; // p^{A/2} in quarter units
    if c4 % 4 != 0
        && matches!(
            rel,
            Relation::HpE | Relation::HmE | Relation::HpF | Relation::HmF
        )
    {
        return Err(ThetaError::OffLattice(c4));
    }
    let c_quarter = c4 / 4; // p^{c/4}
    let qt = qn + nb.exps(c4, 0);
    let arg = |pq: i32| Monomial::unit(*y + nb.exps(pq, 0));
    let th = |pq: i32, nome: Exps| ProductForm::theta(&arg(pq), nome);
    let (num, den) = match rel {
        Relation::HpHp | Relation::HmHm => {
            (th(a2, qn).mul(&th(-a2, qt)), th(-a2, qn).mul(&th(a2, qt)))
        }
        Relation::HpHm => {
            // p^{(A+c)/2} in quarter units is 2A + c4/2.
            if c4 % 2 != 0 {
                return Err(ThetaError::OffLattice(c4));
            }
            let plus = a2 + c4 / 2;
            let minus = a2 - c4 / 2;
            (
                th(plus, qn).mul(&th(-plus, qt)),
                th(-minus, qn).mul(&th(minus, qt)),
            )
        }
        Relation::HpE | Relation::HmE => {
            let s = if rel == Relation::HpE {
                c_quarter
            } else {
                -c_quarter
            };
            let pre = Monomial::new(nb.exps(-a2, 0), sign(a_ij));
            (th(a2 + s, qn).scale(&pre), th(-a2 + s, qn))
        }
        Relation::HpF | Relation::HmF => {
            let s = if rel == Relation::HpF {
                -c_quarter
            } else {
                c_quarter
            };
            let pre = Monomial::new(nb.exps(a2, 0), sign(a_ij));
            (th(-a2 + s, qt).scale(&pre), th(a2 + s, qt))
        }
        Relation::EE => {
            let pre = Monomial::new(nb.exps(-a2, 0), sign(a_ij));
            (th(a2, qn).scale(&pre), th(-a2, qn))
        }
        Relation::FF => {
            let pre = Monomial::new(nb.exps(a2, 0), sign(a_ij));
            (th(-a2, qt).scale(&pre), th(a2, qt))
        }
    };
    Ok(StructureFunction {
        label: StructureLabel::Exchange(rel),
        i,
        j,
        c4,
        numerator: num,
        denominator: den,
    })
}

/// A sum of product forms.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ProductSum(pub Vec<ProductForm>);

impl ProductSum {
    pub fn expand(
        &self,
        table: &Arc<VariableTable>,
        window: &Window,
    ) -> Result<Series, ThetaError> {
        let mut acc = Series::zero(table, window);
        for t in &self.0 {
            acc = acc.try_add(&t.expand(table, window)?)?;
        }
        Ok(acc)
    }

    pub fn mul(&self, o: &ProductSum) -> ProductSum {
        let mut out = Vec::new();
        for a in &self.0 {
            for b in &o.0 {
                out.push(a.mul(b));
            }
        }
        ProductSum(out)
    }

    pub fn scale(&self, f: &ProductForm) -> ProductSum {
        ProductSum(self.0.iter().map(|t| t.mul(f)).collect())
    }

    pub fn valuation_bound(&self, table: &VariableTable) -> Result<i64, ThetaError> {
        let mut v = 0;
        for t in &self.0 {
            v = v.min(t.valuation_bound(table)?);
        }
        Ok(v)
    }
}

/// Cleared form of the Serre coefficient `f^{(a)}_{ij}(z1/w, z2/w)`.
///
/// With `psi = c T / B` written through its theta numerator `T` and
/// denominator `B`, the coefficient equals
/// `(c_ii T_ii + B_ii)(c^2 T_1 T_2 + B_1 B_2) / (c T_2 B_ii B_1 + c_ii c T_ii T_1 B_2)`
/// where `_ii` is evaluated at `z2/z1` and `_1`, `_2` at `w/z1`, `w/z2`.
pub fn serre_coefficient_f(
    kind: ThetaKind,
    i: usize,
    j: usize,
    a_ii: i32,
    a_ij: i32,
    c4: i32,
    z1: &Exps,
    z2: &Exps,
    w: &Exps,
    nb: NomeBasis,
) -> Result<(ProductSum, ProductSum), ThetaError> {
    if a_ij != -1 {
        return Err(ThetaError::NotAdjacent(a_ij));
    }
    let parts = |a: i32, x: Exps, ii: usize, jj: usize| {
        let s = structure_psi(kind, ii, jj, a, c4, &x, nb);
        let pre = s.numerator.prefactor.clone();
        let mut t = s.numerator.clone();
        t.prefactor = Monomial::one();
        (ProductForm::monomial(pre), t, s.denominator)
    };
    let (c_ii, t_ii, b_ii) = parts(a_ii, *z2 - *z1, i, i);
    let (c, t_1, b_1) = parts(a_ij, *w - *z1, i, j);
    let (_, t_2, b_2) = parts(a_ij, *w - *z2, i, j);
    let first = ProductSum(vec![c_ii.mul(&t_ii), b_ii.clone()]);
    let second = ProductSum(vec![c.mul(&c).mul(&t_1).mul(&t_2), b_1.mul(&b_2)]);
    let numerator = first.mul(&second);
    let denominator = ProductSum(vec![
        c.mul(&t_2).mul(&b_ii).mul(&b_1),
        c_ii.mul(&c).mul(&t_ii).mul(&t_1).mul(&b_2),
    ]);
    Ok((numerator, denominator))
}

/// Complex number over double-double reals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Complex2 {
    pub re: TwoFloat,
    pub im: TwoFloat,
}

impl Complex2 {
    pub fn new(re: TwoFloat, im: TwoFloat) -> Self {
        Complex2 { re, im }
    }

    pub fn real(x: TwoFloat) -> Self {
        Complex2 {
            re: x,
            im: TwoFloat::from(0.0),
        }
    }

    pub fn one() -> Self {
        Complex2::real(TwoFloat::from(1.0))
    }

    pub fn add(self, o: Self) -> Self {
        Complex2::new(self.re + o.re, self.im + o.im)
    }

    pub fn sub(self, o: Self) -> Self {
        Complex2::new(self.re - o.re, self.im - o.im)
    }

    pub fn mul(self, o: Self) -> Self {
        Complex2::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }

    pub fn div(self, o: Self) -> Self {
        let d = o.re * o.re + o.im * o.im;
        Complex2::new(
            (self.re * o.re + self.im * o.im) / d,
            (self.im * o.re - self.re * o.im) / d,
        )
    }

    pub fn abs(self) -> TwoFloat {
        (self.re * self.re + self.im * self.im).sqrt()
    }

    /// `exp(a + i b)`.
    pub fn exp(re: TwoFloat, im: TwoFloat) -> Self {
        let r = re.exp();
        let (s, c) = im.sin_cos();
        Complex2::new(r * c, r * s)
    }
}

/// Numeric `theta_q(u) / theta_q(v)`, multiplied factor by factor so that
/// nomes close to 1 do not underflow.
pub fn theta_ratio_numeric(u: Complex2, v: Complex2, q: TwoFloat) -> Complex2 {
    let one = Complex2::one();
    if u == v {
        return one;
    }
    let (uinv, vinv) = (one.div(u), one.div(v));
    let mut acc = one;
    let mut qk = TwoFloat::from(1.0);
    let tiny = TwoFloat::from(1e-34);
    let scale = u.abs() + uinv.abs() + v.abs() + vinv.abs();
    loop {
        let qk1 = qk * q;
        let num = one
            .sub(u.mul(Complex2::real(qk)))
            .mul(one.sub(uinv.mul(Complex2::real(qk1))));
        let den = one
            .sub(v.mul(Complex2::real(qk)))
            .mul(one.sub(vinv.mul(Complex2::real(qk1))));
        acc = acc.mul(num.div(den));
        qk = qk1;
        if qk.abs() * scale < tiny {
            break;
        }
    }
    acc
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingProbeConfig {
    pub eps: Vec<f64>,
    pub hbar: f64,
    pub eta: f64,
    pub u: f64,
    /// Cartan entry selecting `psi^{(q)}_{ij}`.
    pub a_ij: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingProbeReport {
    pub values: Vec<(f64, f64)>,
    pub cauchy_differences: Vec<f64>,
    pub converging: bool,
}

/// Evaluates `psi^{(q)}_{ij}` at `p = exp(-eps hbar)`, `q = exp(-eps/eta)`,
/// `x = exp(i eps u)` along the `eps` schedule and tests that successive
/// differences shrink over the last three steps.
pub fn scaling_probe(cfg: &ScalingProbeConfig) -> Result<ScalingProbeReport, ThetaError> {
    if cfg.eps.len() < 4 {
        return Err(ThetaError::Probe("need at least four eps values".into()));
    }
    if cfg.eps.windows(2).any(|w| w[1] >= w[0]) || cfg.eps.iter().any(|e| *e <= 0.0) {
        return Err(ThetaError::Probe(
            "eps must be positive and strictly decreasing".into(),
        ));
    }
    let mut values = Vec::new();
    for &e in &cfg.eps {
        let e2 = TwoFloat::from(e);
        let lp = -e2 * TwoFloat::from(cfg.hbar);
        let lq = -e2 / TwoFloat::from(cfg.eta);
        if lp.hi() >= 0.0 || lq.hi() >= 0.0 {
            return Err(ThetaError::Probe("nomes must have modulus below 1".into()));
        }
        let q = lq.exp();
        let half = TwoFloat::from(cfg.a_ij as f64) / TwoFloat::from(2.0);
        // x^{-1} p^{+-A/2} = exp(-i eps u +- A/2 log p)
        let num = Complex2::exp(lp * half, -e2 * TwoFloat::from(cfg.u));
        let den = Complex2::exp(-lp * half, -e2 * TwoFloat::from(cfg.u));
        let pre = (-lp * half).exp();
        let sgn = if cfg.a_ij.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        };
        let v = theta_ratio_numeric(num, den, q).mul(Complex2::real(pre * TwoFloat::from(sgn)));
        if !v.re.hi().is_finite() || !v.im.hi().is_finite() {
            return Err(ThetaError::Probe(format!("non-finite value at eps = {e}")));
        }
        values.push(v);
    }
    let diffs: Vec<f64> = values
        .windows(2)
        .map(|w| w[1].sub(w[0]).abs().hi())
        .collect();
    let tail = &diffs[diffs.len().saturating_sub(3)..];
    let converging = tail.windows(2).all(|w| w[1] <= w[0]);
    Ok(ScalingProbeReport {
        values: values.iter().map(|v| (v.re.hi(), v.im.hi())).collect(),
        cauchy_differences: diffs,
        converging,
    })
}

/// Sum of spectral coefficients at each nome monomial; zero everywhere when
/// the series vanishes at spectral value 1.
pub fn vanishes_at_spectral_one(s: &Series) -> bool {
    s.spectral_sum().values().all(|c| c.is_zero())
}
