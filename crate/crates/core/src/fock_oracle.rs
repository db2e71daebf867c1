//! Truncated Fock space of the Heisenberg algebra at rational nomes, where
//! vertex operators act as finite exact maps. Used to cross-check contraction
//! functions and exchange relations independently of the series pipeline.
//!
//! Nomes are instantiated as `p = a^4`, `q = b^4` so every quarter power is
//! rational.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cartan_data::CartanData;
use crate::free_field::{
    contraction_product_form, relation_currents, zero_mode_pair, Component, Conventions,
    CurrentKind, Field, FieldError, VertexOperatorSpec, PQ,
};
use crate::lattice_series::{q_text, Exps, SeriesError, VariableTable, Q};
use crate::theta_products::{exchange_coefficient, NomeBasis, ProductForm, Relation, ThetaError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("mode index must be nonzero")]
    ZeroMode,
    #[error("parameter {0} must lie strictly between 0 and 1")]
    BadParameter(String),
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("node {0} out of range")]
    BadNode(usize),
    #[error("unsupported product form factor: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Theta(#[from] ThetaError),
}

/// Basis vector `prod a_{i}[-n] e^{sum m_k Q_k} |0>`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key {
    /// Sorted creation modes `(node, n)` with `n > 0`.
    pub modes: Vec<(usize, u32)>,
    pub charge: Vec<i32>,
}

impl Key {
    pub fn energy(&self) -> u32 {
        self.modes.iter().map(|m| m.1).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockState {
    pub terms: BTreeMap<Key, Q>,
    pub cutoff: u32,
    /// Set when some component was dropped by the cutoff.
    pub overflow: bool,
}

impl FockState {
    pub fn vacuum(rank: usize, cutoff: u32) -> FockState {
        FockState::charged(vec![0; rank], cutoff)
    }

    pub fn charged(charge: Vec<i32>, cutoff: u32) -> FockState {
        let mut terms = BTreeMap::new();
        terms.insert(
            Key {
                modes: vec![],
                charge,
            },
            Q::one(),
        );
        FockState {
            terms,
            cutoff,
            overflow: false,
        }
    }

    fn empty_like(&self) -> FockState {
        FockState {
            terms: BTreeMap::new(),
            cutoff: self.cutoff,
            overflow: self.overflow,
        }
    }

    fn add_term(&mut self, k: Key, c: Q) {
        if c.is_zero() {
            return;
        }
        if k.energy() > self.cutoff {
            self.overflow = true;
            return;
        }
        let slot = self.terms.entry(k.clone()).or_insert_with(Q::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&k);
        }
    }

    pub fn add(&self, o: &FockState) -> FockState {
        let mut out = self.clone();
        out.overflow |= o.overflow;
        for (k, c) in &o.terms {
            out.add_term(k.clone(), c.clone());
        }
        out
    }

    pub fn scale(&self, c: &Q) -> FockState {
        let mut out = self.empty_like();
        for (k, v) in &self.terms {
            out.add_term(k.clone(), v * c);
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Drops every component above the cutoff `n`.
    pub fn project(&self, n: u32) -> FockState {
        let mut out = self.empty_like();
        out.cutoff = self.cutoff.min(n);
        for (k, v) in &self.terms {
            out.add_term(k.clone(), v.clone());
        }
        out
    }

    pub fn amplitude(&self, k: &Key) -> Q {
        self.terms.get(k).cloned().unwrap_or_else(Q::zero)
    }
}

/// `<charge| prod a_{node}[n]`, the dual of the corresponding creation state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockBra {
    pub charge: Vec<i32>,
    pub modes: Vec<(usize, u32)>,
}

#[derive(Clone, Debug)]
pub struct FockSpace {
    pub cartan: CartanData,
    pub conv: Conventions,
    pub a: Q,
    pub b: Q,
    pub cutoff: u32,
}

fn in_unit_interval(x: &Q) -> bool {
    x.is_positive() && *x < Q::one()
}

impl FockSpace {
    /// Fock space at `p = a^4`, `q = b^4` with total mode energy at most `cutoff`.
    pub fn new(
        cartan: CartanData,
        conv: Conventions,
        a: Q,
        b: Q,
        cutoff: u32,
    ) -> Result<FockSpace, OracleError> {
        if !in_unit_interval(&a) {
            return Err(OracleError::BadParameter(format!(
                "p^(1/4) = {}",
                q_text(&a)
            )));
        }
        if !in_unit_interval(&b) {
            return Err(OracleError::BadParameter(format!(
                "q^(1/4) = {}",
                q_text(&b)
            )));
        }
        Ok(FockSpace {
            cartan,
            conv,
            a,
            b,
            cutoff,
        })
    }

    pub fn with_cutoff(&self, cutoff: u32) -> FockSpace {
        FockSpace {
            cutoff,
            ..self.clone()
        }
    }

    pub fn rank(&self) -> usize {
        self.cartan.rank
    }

    pub fn vacuum(&self) -> FockState {
        FockState::vacuum(self.rank(), self.cutoff)
    }

    fn quarter(&self, e: PQ) -> Q {
        self.a.pow(e.p) * self.b.pow(e.q)
    }

    fn p(&self) -> Q {
        self.a.pow(4)
    }

    fn q(&self) -> Q {
        self.b.pow(4)
    }

    /// `[a_i[n], a_j[-n]]` straight from the defining formula.
    pub fn bracket(&self, i: usize, j: usize, n: i32) -> Q {
        let aij = self.cartan.entry(i, j);
        let (p, q) = (self.p(), self.q());
        let ph = self.a.pow(2 * aij * n);
        (Q::one() - q.pow(-n)) * (&ph - ph.recip()) * (Q::one() - (&p * &q).pow(n))
            / (Q::one() - p.pow(n))
            / Q::from_integer(n.into())
    }

    /// Coefficient of `a[n] z^{-n}` in the exponent of one component.
    fn kappa(&self, c: &Component, n: i32) -> Q {
        let (p, q) = (self.p(), self.q());
        let base = match c.field {
            Field::E => (q.pow(n) - Q::one()).recip(),
            Field::F => ((&p * &q).pow(-n) - Q::one()).recip(),
        };
        base * self.quarter(c.mode_shift).pow(-n)
    }

    pub fn apply_mode(&self, st: &FockState, i: usize, n: i32) -> Result<FockState, OracleError> {
        if n == 0 {
            return Err(OracleError::ZeroMode);
        }
        if i >= self.rank() {
            return Err(OracleError::BadNode(i));
        }
        let mut out = st.empty_like();
        if n < 0 {
            let m = (-n) as u32;
            for (k, c) in &st.terms {
                let mut modes = k.modes.clone();
                let pos = modes.partition_point(|x| *x <= (i, m));
                modes.insert(pos, (i, m));
                out.add_term(
                    Key {
                        modes,
                        charge: k.charge.clone(),
                    },
                    c.clone(),
                );
            }
        } else {
            let m = n as u32;
            for (k, c) in &st.terms {
                let mut idx = 0;
                while idx < k.modes.len() {
                    let (node, mm) = k.modes[idx];
                    let mut end = idx;
                    while end < k.modes.len() && k.modes[end] == (node, mm) {
                        end += 1;
                    }
                    if mm == m {
                        let mult = Q::from_integer(((end - idx) as i64).into());
                        let mut modes = k.modes.clone();
                        modes.remove(idx);
                        let coeff = c * mult * self.bracket(i, node, n);
                        out.add_term(
                            Key {
                                modes,
                                charge: k.charge.clone(),
                            },
                            coeff,
                        );
                    }
                    idx = end;
                }
            }
        }
        Ok(out)
    }

    /// `exp(c a_i[n]) st`, truncated by the cutoff.
    fn apply_exp(&self, st: &FockState, i: usize, n: i32, c: &Q) -> FockState {
        let mut acc = st.clone();
        let mut term = st.clone();
        let mut k = 1i64;
        loop {
            term = self
                .apply_mode(&term, i, n)
                .expect("nonzero mode")
                .scale(&(c / Q::from_integer(k.into())));
            if term.is_zero() {
                break;
            }
            acc = acc.add(&term);
            k += 1;
        }
        acc.overflow |= term.overflow;
        acc
    }

    fn eps(&self, i: usize, charge: &[i32]) -> i32 {
        let mut s = 1;
        for (j, m) in charge.iter().enumerate() {
            if m.rem_euclid(2) == 1 {
                s *= self.conv.cocycle_sign(i, j, self.cartan.entry(i, j));
            }
        }
        s
    }

    /// `X(z) st` with normal ordering: annihilators, creators, `z^P`, `e^Q`.
    pub fn apply_vertex(&self, st: &FockState, spec: &VertexOperatorSpec, z: &Q) -> FockState {
        let i = spec.node;
        let mut cur = st.clone();
        for n in 1..=self.cutoff as i32 {
            let c: Q = spec
                .components
                .iter()
                .map(|comp| self.kappa(comp, n))
                .sum::<Q>()
                * z.pow(-n);
            cur = self.apply_exp(&cur, i, n, &c);
        }
        for n in 1..=self.cutoff as i32 {
            let c: Q = spec
                .components
                .iter()
                .map(|comp| self.kappa(comp, -n))
                .sum::<Q>()
                * z.pow(n);
            cur = self.apply_exp(&cur, i, -n, &c);
        }
        let net: i32 = spec.charge();
        let mut out = cur.empty_like();
        for (k, v) in &cur.terms {
            let mom: i32 = (0..self.rank())
                .map(|j| self.cartan.entry(i, j) * k.charge[j])
                .sum();
            let mut f = v.clone();
            for comp in &spec.components {
                let s =
                    Q::from_integer(comp.zero_scale.sign.into()) * self.quarter(comp.zero_scale.pq);
                f *= (s * z).pow(comp.charge * mom);
            }
            let mut charge = k.charge.clone();
            if net != 0 {
                let before = if net > 0 {
                    charge.clone()
                } else {
                    let mut c = charge.clone();
                    c[i] += net;
                    c
                };
                f *= Q::from_integer(self.eps(i, &before).into());
                charge[i] += net;
            }
            out.add_term(
                Key {
                    modes: k.modes.clone(),
                    charge,
                },
                f,
            );
        }
        out
    }

    /// `<bra| X_1(z_1) ... X_k(z_k) |ket>`.
    pub fn vertex_matrix_element(
        &self,
        bra: &FockBra,
        word: &[(VertexOperatorSpec, Q)],
        ket: &FockState,
    ) -> Q {
        let mut st = ket.clone();
        st.cutoff = self.cutoff;
        for (spec, z) in word.iter().rev() {
            st = self.apply_vertex(&st, spec, z);
        }
        for &(node, n) in &bra.modes {
            st = self.apply_mode(&st, node, n as i32).expect("positive mode");
        }
        st.amplitude(&Key {
            modes: vec![],
            charge: bra.charge.clone(),
        })
    }

    /// Charge reached from `ket_charge` by applying `word`.
    pub fn word_charge(&self, word: &[(VertexOperatorSpec, Q)], ket_charge: &[i32]) -> Vec<i32> {
        let mut c = ket_charge.to_vec();
        for (spec, _) in word {
            c[spec.node] += spec.charge();
        }
        c
    }
}

/// Exact x-Taylor coefficients of a contraction product form at the space's
/// nomes, through `x^n`, computed from per-factor logarithms.
pub fn product_form_taylor(
    pf: &ProductForm,
    table: &VariableTable,
    xvar: usize,
    nb: &NomeBasis,
    a: &Q,
    b: &Q,
    n: usize,
) -> Result<Vec<Q>, OracleError> {
    let split = |e: &Exps| -> Result<(usize, PQ), OracleError> {
        for (k, v) in e.0.iter().enumerate() {
            if k != xvar && k != nb.p && k != nb.q && *v != 0 {
                return Err(OracleError::Unsupported(table.format_monomial(e)));
            }
        }
        let d = e.0[xvar];
        if d < 0 || d % 4 != 0 {
            return Err(OracleError::Unsupported(table.format_monomial(e)));
        }
        Ok(((d / 4) as usize, PQ::new(e.0[nb.p], e.0[nb.q])))
    };
    let val = |e: PQ| a.pow(e.p) * b.pow(e.q);
    let mut log = vec![Q::zero(); n + 1];
    let (d0, pre) = split(&pf.prefactor.exps)?;
    if d0 != 0 {
        return Err(OracleError::Unsupported("x-dependent prefactor".into()));
    }
    // (multiplicity, base coefficient, x power, nome part, nomes)
    let mut factors: Vec<(Q, Q, usize, PQ, Vec<PQ>)> = Vec::new();
    for (u, m) in &pf.finite {
        let (d, mu) = split(&u.exps)?;
        factors.push((Q::from_integer((*m).into()), u.coeff.clone(), d, mu, vec![]));
    }
    for f in &pf.families {
        let (d, mu) = split(&f.base.exps)?;
        let nomes = f
            .nomes
            .iter()
            .map(|e| split(e).map(|s| s.1))
            .collect::<Result<Vec<_>, _>>()?;
        factors.push((
            Q::from_integer(f.mult.into()),
            f.base.coeff.clone(),
            d,
            mu,
            nomes,
        ));
    }
    for (mult, c, d, mu, nomes) in factors {
        if d == 0 {
            return Err(OracleError::Unsupported("x-free factor".into()));
        }
        let mut k = 1;
        while k * d <= n {
            let mut den = Q::one();
            for nu in &nomes {
                den *= Q::one() - val(nu.pow(k as i32));
            }
            let kk = k as i32;
            log[k * d] -= &mult * c.pow(kk) * val(mu.pow(kk)) / (den * Q::from_integer(kk.into()));
            k += 1;
        }
    }
    let mut e = vec![Q::zero(); n + 1];
    e[0] = Q::one();
    for k in 1..=n {
        let mut s = Q::zero();
        for j in 1..=k {
            s += Q::from_integer((j as i64).into()) * &log[j] * &e[k - j];
        }
        e[k] = s / Q::from_integer((k as i64).into());
    }
    let c = &pf.prefactor.coeff * val(pre);
    Ok(e.into_iter().map(|v| v * &c).collect())
}

fn horner(coeffs: &[Q], x: &Q) -> Q {
    coeffs.iter().rev().fold(Q::zero(), |acc, c| acc * x + c)
}

fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Oracle versus product-form comparison for one two-point function.
#[derive(Clone, Debug, Serialize)]
pub struct AgreementReport {
    pub x: CurrentKind,
    pub y: CurrentKind,
    pub i: usize,
    pub j: usize,
    pub z: String,
    pub w: String,
    pub oracle: String,
    pub closed_form: String,
    pub exact_match: bool,
    /// Size of the next Taylor terms beyond the cutoff at this point.
    pub tail_estimate: f64,
}

/// Compares `<m| X_i(z) Y_j(w) |0>` with `zero modes * T_N[C_XY](w/z)`.
pub fn two_point_agreement(
    space: &FockSpace,
    x: CurrentKind,
    i: usize,
    y: CurrentKind,
    j: usize,
    z: &Q,
    w: &Q,
) -> Result<AgreementReport, OracleError> {
    let conv = space.conv;
    let xs = VertexOperatorSpec::new(x, i, &conv);
    let ys = VertexOperatorSpec::new(y, j, &conv);
    let word = vec![(xs.clone(), z.clone()), (ys.clone(), w.clone())];
    let ket = space.vacuum();
    let bra = FockBra {
        charge: space.word_charge(&word, &ket.terms.keys().next().unwrap().charge),
        modes: vec![],
    };
    let oracle = space.vertex_matrix_element(&bra, &word, &ket);

    let table = VariableTable::spectral_nomes(&["x"]);
    let nb = NomeBasis::of(&table)?;
    let xe = table.exps(&[("x", 4)])?;
    let a_ij = space.cartan.entry(i, j);
    let d = contraction_product_form(&xs, &ys, a_ij, &conv, xe, &nb)?;
    let n = space.cutoff as usize;
    let extra = 4;
    let coeffs = product_form_taylor(&d.product, &table, 0, &nb, &space.a, &space.b, n + extra)?;
    let zm = zero_mode_pair(&xs, &ys, a_ij, &conv);
    let zero = Q::from_integer(zm.scale.sign.into())
        * space.a.pow(zm.scale.pq.p)
        * space.b.pow(zm.scale.pq.q)
        * z.pow(zm.z_power)
        * Q::from_integer(zm.cocycle.into());
    let ratio = w / z;
    let closed = &zero * horner(&coeffs[..=n], &ratio);
    let tail = &zero * (horner(&coeffs, &ratio) - horner(&coeffs[..=n], &ratio));
    Ok(AgreementReport {
        x,
        y,
        i,
        j,
        z: q_text(z),
        w: q_text(w),
        exact_match: oracle == closed,
        oracle: q_text(&oracle),
        closed_form: q_text(&closed),
        tail_estimate: to_f64(&tail).abs(),
    })
}

/// Numeric value of a product form with `|nome| < 1`, at real variable values.
pub fn eval_product_form(pf: &ProductForm, table: &VariableTable, values: &[f64]) -> f64 {
    let mono = |e: &Exps, c: &Q| -> f64 {
        let mut v = to_f64(c);
        for (k, x) in e.0.iter().enumerate().take(table.len()) {
            if *x != 0 {
                v *= values[k].powf(*x as f64 / 4.0);
            }
        }
        v
    };
    let one = Q::one();
    let mut out = mono(&pf.prefactor.exps, &pf.prefactor.coeff);
    for (u, m) in &pf.finite {
        out *= (1.0 - mono(&u.exps, &u.coeff)).powi(*m);
    }
    for f in &pf.families {
        let nomes: Vec<f64> = f.nomes.iter().map(|e| mono(e, &one)).collect();
        fn rec(v: f64, nomes: &[f64]) -> f64 {
            match nomes.split_first() {
                None => 1.0 - v,
                Some((nu, rest)) => {
                    let mut acc = 1.0;
                    let mut cur = v;
                    loop {
                        acc *= rec(cur, rest);
                        if cur.abs() < 1e-18 {
                            break;
                        }
                        cur *= nu;
                    }
                    acc
                }
            }
        }
        out *= rec(mono(&f.base.exps, &f.base.coeff), &nomes).powi(f.mult);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpotVerdict {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpotSample {
    pub z: String,
    pub w: String,
    pub states: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    /// False when a truncated side does not visibly converge.
    pub evaluable: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpotcheckReport {
    pub relation: Relation,
    pub i: usize,
    pub j: usize,
    pub cutoff: u32,
    pub samples: Vec<SpotSample>,
    pub verdict: SpotVerdict,
}

/// Value at cutoff `n` and an extrapolated tail bound from cutoffs `n-2..n`.
fn converged(
    space: &FockSpace,
    bra: &FockBra,
    word: &[(VertexOperatorSpec, Q)],
    ket: &FockState,
) -> Option<(f64, f64)> {
    let n = space.cutoff;
    let vals: Vec<f64> = [n - 2, n - 1, n]
        .iter()
        .map(|&c| {
            let mut k = ket.clone();
            k.cutoff = c;
            to_f64(&space.with_cutoff(c).vertex_matrix_element(bra, word, &k))
        })
        .collect();
    let d0 = (vals[1] - vals[0]).abs();
    let d1 = (vals[2] - vals[1]).abs();
    let scale = vals[2].abs().max(1e-300);
    if d1 <= 1e-14 * scale {
        return Some((vals[2], 1e-14 * scale));
    }
    let rho = if d0 > 0.0 { d1 / d0 } else { 1.0 };
    if rho >= 0.9 {
        return None;
    }
    Some((vals[2], d1 * (1.0 + rho / (1.0 - rho))))
}

/// Annulus `r_in < |w/z| < r_out` on which both orderings of a relation's
/// currents converge, read off the nearest pole of each contraction.
pub fn convergence_annulus(
    space: &FockSpace,
    rel: Relation,
    i: usize,
    j: usize,
) -> Result<(f64, f64), OracleError> {
    let conv = space.conv;
    let (xk, yk) = relation_currents(rel);
    let xs = VertexOperatorSpec::new(xk, i, &conv);
    let ys = VertexOperatorSpec::new(yk, j, &conv);
    let a_ij = space.cartan.entry(i, j);
    let table = VariableTable::spectral_nomes(&["x"]);
    let nb = NomeBasis::of(&table)?;
    let xe = table.exps(&[("x", 4)])?;
    let values = [1.0, to_f64(&space.a.pow(4)), to_f64(&space.b.pow(4))];
    // Largest |mu| among denominator factors (1 - x^dir mu); family bases
    // dominate their members.
    let largest = |pf: &ProductForm, dir: i32| -> f64 {
        let mut bases: Vec<&crate::lattice_series::Monomial> = pf
            .finite
            .iter()
            .filter(|(_, m)| *m < 0)
            .map(|(u, _)| u)
            .collect();
        bases.extend(pf.families.iter().filter(|f| f.mult < 0).map(|f| &f.base));
        bases
            .into_iter()
            .filter(|u| u.exps.0[0] == 4 * dir)
            .map(|u| eval_product_form(&ProductForm::monomial(u.clone()), &table, &values).abs())
            .fold(0.0, f64::max)
    };
    let c_xy = contraction_product_form(&xs, &ys, a_ij, &conv, xe, &nb)?.product;
    let c_yx = contraction_product_form(&ys, &xs, a_ij, &conv, -xe, &nb)?.product;
    let out = largest(&c_xy, 1);
    Ok((
        largest(&c_yx, -1),
        if out == 0.0 { f64::INFINITY } else { 1.0 / out },
    ))
}

/// Two rational sample points `(z, w)` with `w/z` at the geometric middle of
/// the convergence annulus; empty when the annulus is empty.
pub fn annulus_samples(
    space: &FockSpace,
    rel: Relation,
    i: usize,
    j: usize,
) -> Result<Vec<(Q, Q)>, OracleError> {
    let (r_in, r_out) = convergence_annulus(space, rel, i, j)?;
    if r_in >= r_out {
        return Ok(vec![]);
    }
    let x = match (r_in > 0.0, r_out.is_finite()) {
        (true, true) => (r_in * r_out).sqrt(),
        (false, true) => (r_out / 4.0).min(0.5),
        (true, false) => (4.0 * r_in).max(2.0),
        (false, false) => 0.5,
    };
    let digits = (-x.log10()).ceil().max(0.0) as u32 + 2;
    let den = 10i64.pow(digits);
    let xq = Q::new(((x * den as f64).round() as i64).into(), den.into());
    let z2 = Q::new(3.into(), 2.into());
    Ok(vec![(Q::one(), xq.clone()), (z2.clone(), z2 * xq)])
}

/// Compares `<bra| X(z) Y(w) |ket>` with `R(z/w) <bra| Y(w) X(z) |ket>` on
/// low-lying states.
pub fn exchange_spotcheck(
    space: &FockSpace,
    relation: &str,
    i: usize,
    j: usize,
    samples: &[(Q, Q)],
) -> Result<SpotcheckReport, OracleError> {
    let rel = Relation::parse(relation)
        .ok_or_else(|| OracleError::UnknownRelation(relation.to_string()))?;
    if i >= space.rank() {
        return Err(OracleError::BadNode(i));
    }
    if j >= space.rank() {
        return Err(OracleError::BadNode(j));
    }
    let conv = space.conv;
    let (xk, yk) = relation_currents(rel);
    let xs = VertexOperatorSpec::new(xk, i, &conv);
    let ys = VertexOperatorSpec::new(yk, j, &conv);
    let a_ij = space.cartan.entry(i, j);
    let table: Arc<VariableTable> = VariableTable::spectral_nomes(&["y"]);
    let nb = NomeBasis::of(&table)?;
    let ye = table.exps(&[("y", 4)])?;
    let sf = exchange_coefficient(rel, i, j, a_ij, 4, &ye, nb)?;
    let (pf, qf) = (to_f64(&space.a.pow(4)), to_f64(&space.b.pow(4)));

    let rank = space.rank();
    let vac = space.vacuum();
    let one_mode = |k: usize| space.apply_mode(&vac, k, -1).expect("creation");
    let mut kets = vec![("vacuum".to_string(), vac.clone())];
    let mut bras_modes: Vec<(String, Vec<(usize, u32)>)> = vec![("vacuum".into(), vec![])];
    for k in [i, j] {
        if !kets.iter().any(|(l, _)| *l == format!("a_{k}[-1]")) {
            kets.push((format!("a_{k}[-1]"), one_mode(k)));
            bras_modes.push((format!("a_{k}[1]"), vec![(k, 1)]));
        }
    }
    let mut pairs = Vec::new();
    for (s, w) in samples {
        pairs.push((s.clone(), w.clone(), 0usize, 0usize));
        for k in 1..kets.len() {
            pairs.push((s.clone(), w.clone(), k, 0));
            pairs.push((s.clone(), w.clone(), 0, k));
        }
    }
    let results: Vec<SpotSample> = pairs
        .par_iter()
        .map(|(z, w, ki, bi)| {
            let (kl, ket) = &kets[*ki];
            let (bl, bm) = &bras_modes[*bi];
            let xy = vec![(xs.clone(), z.clone()), (ys.clone(), w.clone())];
            let yx = vec![(ys.clone(), w.clone()), (xs.clone(), z.clone())];
            let ket_charge = vec![0; rank];
            let bra = FockBra {
                charge: space.word_charge(&xy, &ket_charge),
                modes: bm.clone(),
            };
            let y = to_f64(&(z / w));
            let r = eval_product_form(&sf.numerator, &table, &[y, pf, qf])
                / eval_product_form(&sf.denominator, &table, &[y, pf, qf]);
            let states = format!("<{bl}| .. |{kl}>");
            match (
                converged(space, &bra, &xy, ket),
                converged(space, &bra, &yx, ket),
            ) {
                (Some((l, tl)), Some((m, tm))) => {
                    let rhs = r * m;
                    let tol = 10.0 * (tl + r.abs() * tm) + 1e-10 * (l.abs() + rhs.abs());
                    SpotSample {
                        z: q_text(z),
                        w: q_text(w),
                        states,
                        lhs: l,
                        rhs,
                        tolerance: tol,
                        evaluable: r.is_finite(),
                        pass: (l - rhs).abs() <= tol,
                    }
                }
                _ => SpotSample {
                    z: q_text(z),
                    w: q_text(w),
                    states,
                    lhs: f64::NAN,
                    rhs: f64::NAN,
                    tolerance: f64::NAN,
                    evaluable: false,
                    pass: false,
                },
            }
        })
        .collect();
    let evaluated: Vec<&SpotSample> = results.iter().filter(|s| s.evaluable).collect();
    let verdict = if evaluated.is_empty() {
        SpotVerdict::Inconclusive
    } else if evaluated.iter().all(|s| s.pass) {
        SpotVerdict::Pass
    } else {
        SpotVerdict::Fail
    };
    Ok(SpotcheckReport {
        relation: rel,
        i,
        j,
        cutoff: space.cutoff,
        samples: results,
        verdict,
    })
}
