//! Graded spaces of homogeneous polynomials and polynomial vector fields.
//!
//! Every polynomial lives over one of four variable layouts:
//!
//! * [`VarKind::Center`]: `(x0; x1, conj x1; ...; xp, conj xp; nu; mu1..mus)`, the
//!   center coordinates of the reduced ODE.
//! * [`VarKind::Delay`]: `(v0, w0; v1, w1; ...; mu)`, one `(v, w)` pair per delay.
//! * [`VarKind::Plain`]: `(v0, ..., v_{d-1}; mu)`, one slot per delay.
//! * [`VarKind::Radial`]: `(rho0, ..., rhop; mu)`.
//!
//! Degrees count state variables and parameters jointly. Monomials are ordered
//! graded-lexicographically: lower degree first, and within a degree the
//! exponent vectors compare lexicographically with the larger exponent on the
//! earlier variable first, so `x0^l` leads every homogeneous basis.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Tolerance of the structural reality audit.
pub const REALITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, index: usize) -> Self {
        let mut e = vec![0; nvars];
        e[index] = 1;
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn exponent(&self, index: usize) -> u32 {
        self.0[index]
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), other.0.len());
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// Lowers the exponent of `index` by one, if present.
    pub fn lower(&self, index: usize) -> Option<Monomial> {
        if self.0[index] == 0 {
            return None;
        }
        let mut e = self.0.clone();
        e[index] -= 1;
        Some(Monomial(e))
    }

    pub fn raise(&self, index: usize) -> Monomial {
        let mut e = self.0.clone();
        e[index] += 1;
        Monomial(e)
    }

    pub fn with_exponent(&self, index: usize, value: u32) -> Monomial {
        let mut e = self.0.clone();
        e[index] = value;
        Monomial(e)
    }

    pub fn permuted(&self, perm: &[usize]) -> Monomial {
        let mut e = vec![0; self.0.len()];
        for (i, &a) in self.0.iter().enumerate() {
            e[perm[i]] = a;
        }
        Monomial(e)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, "]")
    }
}

/// All exponent vectors of total degree `degree` in `nvars` variables, in basis order.
pub fn monomials_of_degree(nvars: usize, degree: u32) -> Vec<Monomial> {
    fn rec(prefix: &mut Vec<u32>, nvars: usize, left: u32, out: &mut Vec<Monomial>) {
        if prefix.len() + 1 == nvars {
            prefix.push(left);
            out.push(Monomial(prefix.clone()));
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(prefix, nvars, left - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if nvars == 0 {
        if degree == 0 {
            out.push(Monomial(Vec::new()));
        }
        return out;
    }
    rec(&mut Vec::with_capacity(nvars), nvars, degree, &mut out);
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Center,
    Delay,
    Plain,
    Radial,
}

/// Variable layout. `n` is `p` for center/radial layouts and the number of delays otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layout {
    pub kind: VarKind,
    pub n: usize,
    pub s: usize,
}

impl Layout {
    pub fn center(p: usize, s: usize) -> Self {
        Layout { kind: VarKind::Center, n: p, s }
    }

    pub fn radial(p: usize, s: usize) -> Self {
        Layout { kind: VarKind::Radial, n: p, s }
    }

    pub fn delay(d: usize, s: usize) -> Self {
        Layout { kind: VarKind::Delay, n: d, s }
    }

    pub fn plain(d: usize, s: usize) -> Self {
        Layout { kind: VarKind::Plain, n: d, s }
    }

    /// Number of non-parameter variables (`nu` counts as a state variable).
    pub fn state_vars(&self) -> usize {
        match self.kind {
            VarKind::Center => 2 * self.n + 2,
            VarKind::Delay => 2 * self.n,
            VarKind::Plain => self.n,
            VarKind::Radial => self.n + 1,
        }
    }

    pub fn nvars(&self) -> usize {
        self.state_vars() + self.s
    }

    pub fn mu_index(&self, k: usize) -> usize {
        self.state_vars() + k
    }

    pub fn nu_index(&self) -> Option<usize> {
        match self.kind {
            VarKind::Center => Some(2 * self.n + 1),
            _ => None,
        }
    }

    /// Index permutation of the reality involution on variables.
    pub fn conj_perm(&self) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..self.nvars()).collect();
        if self.kind == VarKind::Center {
            for j in 1..=self.n {
                perm[2 * j - 1] = 2 * j;
                perm[2 * j] = 2 * j - 1;
            }
        }
        perm
    }

    pub fn mu_degree(&self, m: &Monomial) -> u32 {
        m.exponents()[self.state_vars()..].iter().sum()
    }

    pub fn var_name(&self, i: usize) -> String {
        let sv = self.state_vars();
        if i >= sv {
            return format!("mu{}", i - sv + 1);
        }
        match self.kind {
            VarKind::Center => {
                if i == 0 {
                    "x0".into()
                } else if i == 2 * self.n + 1 {
                    "nu".into()
                } else if i % 2 == 1 {
                    format!("x{}", (i + 1) / 2)
                } else {
                    format!("xb{}", i / 2)
                }
            }
            VarKind::Delay => {
                if i % 2 == 0 {
                    format!("v{}", i / 2)
                } else {
                    format!("w{}", i / 2)
                }
            }
            VarKind::Plain => format!("v{i}"),
            VarKind::Radial => format!("rho{i}"),
        }
    }

    pub fn format_monomial(&self, m: &Monomial) -> String {
        let parts: Vec<String> = m
            .exponents()
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(i, &e)| {
                if e == 1 {
                    self.var_name(i)
                } else {
                    format!("{}^{}", self.var_name(i), e)
                }
            })
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Full,
    MuIndependent,
    VanishingAtMu0,
    NuIndependent,
}

impl Flavor {
    pub fn admits(&self, layout: &Layout, m: &Monomial) -> bool {
        match self {
            Flavor::Full => true,
            Flavor::MuIndependent => layout.mu_degree(m) == 0,
            Flavor::VanishingAtMu0 => layout.mu_degree(m) > 0,
            Flavor::NuIndependent => layout.nu_index().map_or(true, |i| m.exponent(i) == 0),
        }
    }
}

/// A homogeneous space `components x {monomials of degree ell admitted by flavor}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceDesc {
    pub layout: Layout,
    pub degree: u32,
    pub components: usize,
    pub flavor: Flavor,
}

impl SpaceDesc {
    pub fn new(layout: Layout, degree: u32, components: usize, flavor: Flavor) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidSpace(format!(
                "degree must be at least 2, got {degree}"
            )));
        }
        if components == 0 {
            return Err(Error::InvalidSpace("at least one component required".into()));
        }
        if layout.kind == VarKind::Center && layout.n == 0 {
            return Err(Error::InvalidSpace("p must be at least 1".into()));
        }
        if flavor == Flavor::NuIndependent && layout.kind != VarKind::Center {
            return Err(Error::InvalidSpace(
                "nu_independent flavor needs the center layout".into(),
            ));
        }
        Ok(SpaceDesc { layout, degree, components, flavor })
    }

    /// Center-coordinate vector fields on `2p+1` components.
    pub fn center_field(p: usize, s: usize, degree: u32, flavor: Flavor) -> Result<Self> {
        SpaceDesc::new(Layout::center(p, s), degree, 2 * p + 1, flavor)
    }

    pub fn scalar_monomials(&self) -> Vec<Monomial> {
        monomials_of_degree(self.layout.nvars(), self.degree)
            .into_iter()
            .filter(|m| self.flavor.admits(&self.layout, m))
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.components * self.scalar_monomials().len()
    }
}

/// Ordered basis `(component, monomial)`; component-major, monomials in graded-lex order.
pub fn enumerate_basis(space: &SpaceDesc) -> Vec<(usize, Monomial)> {
    let monos = space.scalar_monomials();
    let mut out = Vec::with_capacity(space.components * monos.len());
    for k in 0..space.components {
        for m in &monos {
            out.push((k, m.clone()));
        }
    }
    out
}

/// Position lookup for an enumerated basis.
#[derive(Clone, Debug)]
pub struct BasisIndex {
    basis: Vec<(usize, Monomial)>,
    index: HashMap<(usize, Monomial), usize>,
}

impl BasisIndex {
    pub fn new(basis: Vec<(usize, Monomial)>) -> Self {
        let index = basis
            .iter()
            .enumerate()
            .map(|(i, b)| (b.clone(), i))
            .collect();
        BasisIndex { basis, index }
    }

    pub fn of_space(space: &SpaceDesc) -> Self {
        Self::new(enumerate_basis(space))
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn get(&self, i: usize) -> &(usize, Monomial) {
        &self.basis[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, Monomial)> {
        self.basis.iter()
    }

    pub fn index_of(&self, component: usize, m: &Monomial) -> Option<usize> {
        self.index.get(&(component, m.clone())).copied()
    }
}

/// Sparse polynomial with complex coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Monomial, C64>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Poly { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: C64) -> Self {
        let mut p = Poly::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn var(nvars: usize, index: usize) -> Self {
        Poly::monomial(Monomial::var(nvars, index), ONE)
    }

    pub fn monomial(m: Monomial, c: C64) -> Self {
        let mut p = Poly::zero(m.nvars());
        p.add_term(m, c);
        p
    }

    pub fn from_terms<I: IntoIterator<Item = (Monomial, C64)>>(nvars: usize, terms: I) -> Self {
        let mut p = Poly::zero(nvars);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &C64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> C64 {
        self.terms.get(m).copied().unwrap_or(ZERO)
    }

    /// Adds `c * m`; exact cancellations drop the entry.
    pub fn add_term(&mut self, m: Monomial, c: C64) {
        assert_eq!(m.nvars(), self.nvars, "monomial arity mismatch");
        if c == ZERO {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == ZERO {
                    o.remove();
                }
            }
        }
    }

    pub fn set_coeff(&mut self, m: Monomial, c: C64) {
        if c == ZERO {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, c);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-ONE))
    }

    pub fn scale(&self, c: C64) -> Poly {
        if c == ZERO {
            return Poly::zero(self.nvars);
        }
        Poly {
            nvars: self.nvars,
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    /// Product, discarding terms above `max_degree` when given.
    pub fn mul_truncated(&self, other: &Poly, max_degree: Option<u32>) -> Poly {
        assert_eq!(self.nvars, other.nvars);
        let mut out = Poly::zero(self.nvars);
        for (m1, c1) in &self.terms {
            let d1 = m1.degree();
            for (m2, c2) in &other.terms {
                if let Some(maxd) = max_degree {
                    if d1 + m2.degree() > maxd {
                        continue;
                    }
                }
                out.add_term(m1.mul(m2), c1 * c2);
            }
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        self.mul_truncated(other, None)
    }

    pub fn derivative(&self, index: usize) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            let e = m.exponent(index);
            if e > 0 {
                out.add_term(m.lower(index).unwrap(), c * e as f64);
            }
        }
        out
    }

    pub fn eval(&self, point: &[C64]) -> C64 {
        assert_eq!(point.len(), self.nvars);
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut v = *c;
                for (x, &e) in point.iter().zip(m.exponents()) {
                    if e > 0 {
                        v *= x.powu(e);
                    }
                }
                v
            })
            .sum()
    }

    pub fn homogeneous_part(&self, degree: u32) -> Poly {
        self.filter(|m| m.degree() == degree)
    }

    pub fn truncate(&self, max_degree: u32) -> Poly {
        self.filter(|m| m.degree() <= max_degree)
    }

    pub fn filter<F: Fn(&Monomial) -> bool>(&self, keep: F) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| keep(m))
                .map(|(m, c)| (m.clone(), *c))
                .collect(),
        }
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.terms.keys().map(|m| m.degree()).max()
    }

    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(|m| m.degree()).min()
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Drops coefficients with modulus at most `tol`.
    pub fn prune(&self, tol: f64) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.norm() > tol)
                .map(|(m, c)| (m.clone(), *c))
                .collect(),
        }
    }

    /// Image under the reality involution: variables permuted by `perm`, coefficients conjugated.
    pub fn conj_image(&self, perm: &[usize]) -> Poly {
        Poly {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.permuted(perm), c.conj()))
                .collect(),
        }
    }

    pub fn map_coeffs<F: Fn(C64) -> C64>(&self, f: F) -> Poly {
        let mut out = Poly::zero(self.nvars);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(*c));
        }
        out
    }

    /// Substitutes `subs[i]` for variable `i`, truncating at `max_degree` when given.
    pub fn substitute(&self, subs: &[Poly], max_degree: Option<u32>) -> Result<Poly> {
        if subs.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, found: subs.len() });
        }
        let target_nvars = subs.first().map_or(0, |s| s.nvars);
        if subs.iter().any(|s| s.nvars != target_nvars) {
            return Err(Error::InvalidSpace("substitutions disagree on arity".into()));
        }
        let mut powers: HashMap<(usize, u32), Poly> = HashMap::new();
        let mut out = Poly::zero(target_nvars);
        for (m, c) in &self.terms {
            let mut acc = Poly::constant(target_nvars, *c);
            for (i, &e) in m.exponents().iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let pw = power_cached(&mut powers, &subs[i], i, e, max_degree);
                acc = acc.mul_truncated(&pw, max_degree);
                if acc.is_empty() {
                    break;
                }
            }
            out = out.add(&acc);
        }
        Ok(out)
    }
}

fn power_cached(
    cache: &mut HashMap<(usize, u32), Poly>,
    base: &Poly,
    index: usize,
    e: u32,
    max_degree: Option<u32>,
) -> Poly {
    if let Some(p) = cache.get(&(index, e)) {
        return p.clone();
    }
    let p = if e == 1 {
        base.truncate(max_degree.unwrap_or(u32::MAX))
    } else {
        let prev = power_cached(cache, base, index, e - 1, max_degree);
        prev.mul_truncated(base, max_degree)
    };
    cache.insert((index, e), p.clone());
    p
}

/// Polynomial map into `C^components` over a fixed variable layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorPoly {
    layout: Layout,
    comps: Vec<Poly>,
}

impl VectorPoly {
    pub fn zero(layout: Layout, components: usize) -> Self {
        VectorPoly { layout, comps: vec![Poly::zero(layout.nvars()); components] }
    }

    pub fn from_components(layout: Layout, comps: Vec<Poly>) -> Result<Self> {
        for c in &comps {
            if c.nvars() != layout.nvars() {
                return Err(Error::DimensionMismatch { expected: layout.nvars(), found: c.nvars() });
            }
        }
        Ok(VectorPoly { layout, comps })
    }

    /// A single-term field `c * m` in component `component`.
    pub fn unit(layout: Layout, components: usize, component: usize, m: Monomial, c: C64) -> Self {
        let mut v = VectorPoly::zero(layout, components);
        v.comps[component].add_term(m, c);
        v
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn ncomp(&self) -> usize {
        self.comps.len()
    }

    pub fn components(&self) -> &[Poly] {
        &self.comps
    }

    pub fn component(&self, k: usize) -> &Poly {
        &self.comps[k]
    }

    pub fn component_mut(&mut self, k: usize) -> &mut Poly {
        &mut self.comps[k]
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &Monomial, &C64)> {
        self.comps
            .iter()
            .enumerate()
            .flat_map(|(k, p)| p.terms().map(move |(m, c)| (k, m, c)))
    }

    pub fn nterms(&self) -> usize {
        self.comps.iter().map(Poly::len).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.comps.iter().all(Poly::is_empty)
    }

    pub fn add(&self, other: &VectorPoly) -> VectorPoly {
        assert_eq!(self.comps.len(), other.comps.len());
        VectorPoly {
            layout: self.layout,
            comps: self.comps.iter().zip(&other.comps).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn sub(&self, other: &VectorPoly) -> VectorPoly {
        self.add(&other.scale(-ONE))
    }

    pub fn scale(&self, c: C64) -> VectorPoly {
        self.map(|p| p.scale(c))
    }

    pub fn map<F: Fn(&Poly) -> Poly>(&self, f: F) -> VectorPoly {
        VectorPoly { layout: self.layout, comps: self.comps.iter().map(f).collect() }
    }

    pub fn filter_terms<F: Fn(usize, &Monomial) -> bool>(&self, keep: F) -> VectorPoly {
        VectorPoly {
            layout: self.layout,
            comps: self
                .comps
                .iter()
                .enumerate()
                .map(|(k, p)| p.filter(|m| keep(k, m)))
                .collect(),
        }
    }

    pub fn homogeneous_part(&self, degree: u32) -> VectorPoly {
        self.map(|p| p.homogeneous_part(degree))
    }

    pub fn truncate(&self, max_degree: u32) -> VectorPoly {
        self.map(|p| p.truncate(max_degree))
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.comps.iter().filter_map(Poly::max_degree).max()
    }

    pub fn norm(&self) -> f64 {
        self.comps.iter().map(|p| p.norm().powi(2)).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().map(Poly::max_abs).fold(0.0, f64::max)
    }

    pub fn prune(&self, tol: f64) -> VectorPoly {
        self.map(|p| p.prune(tol))
    }

    /// Coordinates in an enumerated basis; terms outside the basis are reported as an error.
    pub fn coordinates(&self, basis: &BasisIndex) -> Result<Vec<C64>> {
        let mut v = vec![ZERO; basis.len()];
        for (k, m, c) in self.terms() {
            match basis.index_of(k, m) {
                Some(i) => v[i] = *c,
                None => {
                    return Err(Error::InvalidSpace(format!(
                        "term {} in component {k} lies outside the basis",
                        self.layout.format_monomial(m)
                    )))
                }
            }
        }
        Ok(v)
    }

    pub fn from_coordinates(layout: Layout, components: usize, basis: &BasisIndex, v: &[C64]) -> Self {
        let mut out = VectorPoly::zero(layout, components);
        for (i, (k, m)) in basis.iter().enumerate() {
            out.comps[*k].add_term(m.clone(), v[i]);
        }
        out
    }
}

/// Composes `f` with the linear substitution `old = m * new`; trailing parameters pass through.
///
/// `f` has `m.nrows() + s` variables; the result has `m.ncols() + s`.
pub fn compose_linear(f: &Poly, m: &DMatrix<C64>) -> Result<Poly> {
    if f.nvars() < m.nrows() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: f.nvars() });
    }
    let s = f.nvars() - m.nrows();
    let new_nvars = m.ncols() + s;
    let mut subs = Vec::with_capacity(f.nvars());
    for i in 0..m.nrows() {
        let mut row = Poly::zero(new_nvars);
        for k in 0..m.ncols() {
            row.add_term(Monomial::var(new_nvars, k), m[(i, k)]);
        }
        subs.push(row);
    }
    for k in 0..s {
        subs.push(Poly::var(new_nvars, m.ncols() + k));
    }
    f.substitute(&subs, None)
}

/// Componentwise [`compose_linear`]; the caller names the layout of the result.
pub fn compose_linear_vector(f: &VectorPoly, m: &DMatrix<C64>, target: Layout) -> Result<VectorPoly> {
    let comps = f
        .components()
        .iter()
        .map(|p| compose_linear(p, m))
        .collect::<Result<Vec<_>>>()?;
    VectorPoly::from_components(target, comps)
}

/// Splits into the parameter-free part and the part vanishing at `mu = 0`.
pub fn split_parameter(f: &VectorPoly) -> (VectorPoly, VectorPoly) {
    let layout = f.layout();
    let h = f.filter_terms(|_, m| layout.mu_degree(m) == 0);
    let q = f.filter_terms(|_, m| layout.mu_degree(m) > 0);
    (h, q)
}

pub fn split_parameter_scalar(f: &Poly, layout: &Layout) -> (Poly, Poly) {
    (
        f.filter(|m| layout.mu_degree(m) == 0),
        f.filter(|m| layout.mu_degree(m) > 0),
    )
}

/// First entry breaking the reality involution.
#[derive(Clone, Debug, PartialEq)]
pub struct RealityViolation {
    pub component: usize,
    pub monomial: Monomial,
    pub expected: C64,
    pub found: C64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealityReport {
    pub real: bool,
    pub violation: Option<RealityViolation>,
}

/// Audits that a complexified field represents a real one.
///
/// Center layout: component 0 is self-conjugate and the `conj xj` row is the conjugate
/// image of the `xj` row. Other layouts: coefficients must be real.
pub fn check_reality(f: &VectorPoly) -> Result<RealityReport> {
    let layout = f.layout();
    let tol = |scale: f64| REALITY_TOL * (1.0 + scale);
    if layout.kind != VarKind::Center {
        for (k, m, c) in f.terms() {
            if c.im.abs() > tol(c.norm()) {
                return Ok(RealityReport {
                    real: false,
                    violation: Some(RealityViolation {
                        component: k,
                        monomial: m.clone(),
                        expected: C64::new(c.re, 0.0),
                        found: *c,
                    }),
                });
            }
        }
        return Ok(RealityReport { real: true, violation: None });
    }
    let p = layout.n;
    if f.ncomp() != 2 * p + 1 {
        return Err(Error::DimensionMismatch { expected: 2 * p + 1, found: f.ncomp() });
    }
    let perm = layout.conj_perm();
    // component k must equal the conjugate image of its partner component
    let partner = |k: usize| if k == 0 { 0 } else if k % 2 == 1 { k + 1 } else { k - 1 };
    for k in 0..f.ncomp() {
        let image = f.component(partner(k)).conj_image(&perm);
        let own = f.component(k);
        let keys: BTreeSet<&Monomial> =
            own.terms().map(|(m, _)| m).chain(image.terms().map(|(m, _)| m)).collect();
        for m in keys {
            let a = own.coeff(m);
            let b = image.coeff(m);
            if (a - b).norm() > tol(a.norm().max(b.norm())) {
                return Ok(RealityReport {
                    real: false,
                    violation: Some(RealityViolation {
                        component: k,
                        monomial: m.clone(),
                        expected: b,
                        found: a,
                    }),
                });
            }
        }
    }
    Ok(RealityReport { real: true, violation: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn basis_counts() {
        let s = SpaceDesc::center_field(1, 0, 2, Flavor::Full).unwrap();
        assert_eq!(enumerate_basis(&s).len(), 30);
        let s = SpaceDesc::new(Layout::center(1, 1), 2, 1, Flavor::Full).unwrap();
        assert_eq!(enumerate_basis(&s).len(), 15);
        let s = SpaceDesc::new(Layout::center(1, 0), 2, 1, Flavor::NuIndependent).unwrap();
        assert_eq!(enumerate_basis(&s).len(), 6);
    }

    #[test]
    fn basis_count_matches_stars_and_bars() {
        for p in 1..=2 {
            for s in 0..=2 {
                for l in 2..=5u32 {
                    let sp = SpaceDesc::center_field(p, s, l, Flavor::Full).unwrap();
                    let nv = 2 * p + 2 + s;
                    assert_eq!(sp.dim(), (2 * p + 1) * binomial(nv + l as usize - 1, l as usize));
                }
            }
        }
    }

    #[test]
    fn degree_below_two_rejected() {
        assert!(matches!(
            SpaceDesc::center_field(1, 0, 1, Flavor::Full),
            Err(Error::InvalidSpace(_))
        ));
    }

    #[test]
    fn basis_is_sorted_and_starts_with_pure_power() {
        let sp = SpaceDesc::new(Layout::center(1, 0), 3, 1, Flavor::Full).unwrap();
        let b = enumerate_basis(&sp);
        assert_eq!(b[0].1.exponents(), &[3, 0, 0, 0]);
        for w in b.windows(2) {
            assert!(w[0].1 < w[1].1);
        }
        let idx = BasisIndex::new(b.clone());
        for (i, (k, m)) in b.iter().enumerate() {
            assert_eq!(idx.index_of(*k, m), Some(i));
        }
    }

    #[test]
    fn flavors_filter_monomials() {
        let l = Layout::center(1, 1);
        let mu_free = SpaceDesc::new(l, 2, 1, Flavor::MuIndependent).unwrap();
        assert!(mu_free.scalar_monomials().iter().all(|m| m.exponent(4) == 0));
        let van = SpaceDesc::new(l, 2, 1, Flavor::VanishingAtMu0).unwrap();
        assert!(van.scalar_monomials().iter().all(|m| m.exponent(4) > 0));
        assert_eq!(mu_free.dim() + van.dim(), 15);
    }

    #[test]
    fn compose_identity_and_binomial() {
        // v0^2 under the identity
        let f = Poly::monomial(Monomial::new(vec![2, 0]), ONE);
        let id = DMatrix::<C64>::identity(2, 2);
        assert_eq!(compose_linear(&f, &id).unwrap(), f);

        // v0 v1 with v0 -> x0 + x1, v1 -> x0 - x1
        let f = Poly::monomial(Monomial::new(vec![1, 1]), ONE);
        let m = DMatrix::from_row_slice(2, 2, &[ONE, ONE, ONE, -ONE]);
        let g = compose_linear(&f, &m).unwrap();
        let expect = Poly::from_terms(
            2,
            [(Monomial::new(vec![2, 0]), ONE), (Monomial::new(vec![0, 2]), -ONE)],
        );
        assert_eq!(g, expect);
    }

    #[test]
    fn compose_first_row_of_center_basis() {
        // v0^2 with v0 -> x0 + e^{it} x1 + e^{-it} xb1 + t nu; oracle: brute-force expansion
        let t: f64 = -0.7;
        let row = [ONE, C64::from_polar(1.0, t), C64::from_polar(1.0, -t), c(t, 0.0)];
        let m = DMatrix::from_row_slice(1, 4, &row);
        let f = Poly::monomial(Monomial::new(vec![2]), ONE);
        let g = compose_linear(&f, &m).unwrap();
        assert_eq!(g.len(), 10);
        let mut oracle = Poly::zero(4);
        for i in 0..4 {
            for j in 0..4 {
                let mono = Monomial::var(4, i).mul(&Monomial::var(4, j));
                oracle.add_term(mono, row[i] * row[j]);
            }
        }
        assert!(g.sub(&oracle).max_abs() < 1e-14);
        assert!((g.coeff(&Monomial::new(vec![0, 0, 0, 2])) - c(t * t, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn compose_dimension_mismatch() {
        let f = Poly::monomial(Monomial::new(vec![2]), ONE);
        let m = DMatrix::<C64>::identity(2, 2);
        assert!(matches!(compose_linear(&f, &m), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn split_parameter_examples() {
        let l = Layout::center(1, 1);
        let x0sq = Monomial::new(vec![2, 0, 0, 0, 0]);
        let mux0nu = Monomial::new(vec![1, 0, 0, 1, 1]);
        let mut f = VectorPoly::zero(l, 3);
        f.component_mut(0).add_term(x0sq.clone(), ONE);
        f.component_mut(0).add_term(mux0nu.clone(), ONE);
        let (h, q) = split_parameter(&f);
        assert_eq!(h.component(0).coeff(&x0sq), ONE);
        assert_eq!(h.component(0).len(), 1);
        assert_eq!(q.component(0).coeff(&mux0nu), ONE);
        assert_eq!(q.component(0).len(), 1);

        let (h, q) = split_parameter(&VectorPoly::zero(l, 3));
        assert!(h.is_zero() && q.is_zero());

        let only_mu = VectorPoly::unit(l, 3, 1, mux0nu, c(0.5, 1.0));
        let (h, q) = split_parameter(&only_mu);
        assert!(h.is_zero());
        assert_eq!(q, only_mu);
    }

    #[test]
    fn reality_examples() {
        let l = Layout::center(1, 0);
        let mut f = VectorPoly::zero(l, 3);
        f.component_mut(0).add_term(Monomial::new(vec![0, 1, 1, 0]), ONE);
        f.component_mut(1).add_term(Monomial::new(vec![1, 1, 0, 0]), c(0.0, 1.0));
        f.component_mut(2).add_term(Monomial::new(vec![1, 0, 1, 0]), c(0.0, -1.0));
        assert!(check_reality(&f).unwrap().real);

        let g = VectorPoly::unit(l, 3, 0, Monomial::new(vec![2, 0, 0, 0]), c(0.0, 1.0));
        let r = check_reality(&g).unwrap();
        assert!(!r.real);
        assert_eq!(r.violation.unwrap().component, 0);

        let wrong = VectorPoly::zero(l, 2);
        assert!(check_reality(&wrong).is_err());
    }

    #[test]
    fn substitute_truncates() {
        // (x + x^2)^2 truncated at degree 3 is x^2 + 2x^3
        let f = Poly::monomial(Monomial::new(vec![2]), ONE);
        let s = Poly::from_terms(1, [(Monomial::new(vec![1]), ONE), (Monomial::new(vec![2]), ONE)]);
        let g = f.substitute(&[s], Some(3)).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.coeff(&Monomial::new(vec![3])), c(2.0, 0.0));
    }
}
