//! Torus and nilpotent actions on center-coordinate vector fields.
//!
//! The torus `T^p` acts on `(x0; x1, conj x1; ...)` by `diag(1, e^{i t1}, e^{-i t1}, ...)`.
//! For a monomial `m` in component `k` the resonance defect is the integer vector
//! `delta_j = (a_j - b_j) - w_{k,j}`, with `a_j`, `b_j` the exponents of `xj`,
//! `conj xj` and `w_k` the weight of the component. Under rational independence
//! of the frequencies a term is torus-equivariant exactly when its defect is zero,
//! so both averaging projections reduce to integer filters on monomials.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::{
    monomials_of_degree, BasisIndex, Flavor, Layout, Monomial, Poly, SpaceDesc, VarKind,
    VectorPoly, C64, ONE,
};

/// Singular-value cutoff of the numerical `Gamma`-equivariant basis.
pub const GAMMA_NULLSPACE_CUTOFF: f64 = 1e-10;

/// Torus weight of component `k` among `(x0; x1, conj x1; ...; xp, conj xp; nu; mu...)`.
pub fn component_weight(p: usize, k: usize) -> Vec<i64> {
    let mut w = vec![0; p];
    if k >= 1 && k <= 2 * p {
        let j = (k + 1) / 2;
        w[j - 1] = if k % 2 == 1 { 1 } else { -1 };
    }
    w
}

pub fn resonance_defect(p: usize, component: usize, m: &Monomial) -> Vec<i64> {
    let w = component_weight(p, component);
    (1..=p)
        .map(|j| {
            let a = m.exponent(2 * j - 1) as i64;
            let b = m.exponent(2 * j) as i64;
            a - b - w[j - 1]
        })
        .collect()
}

pub fn is_resonant(p: usize, component: usize, m: &Monomial) -> bool {
    resonance_defect(p, component, m).iter().all(|&d| d == 0)
}

fn require_center(f: &VectorPoly) -> Result<usize> {
    let layout = f.layout();
    if layout.kind != VarKind::Center {
        return Err(Error::InvalidSpace("expected center-coordinate layout".into()));
    }
    Ok(layout.n)
}

fn nu_exponent(layout: &Layout, m: &Monomial) -> u32 {
    layout.nu_index().map_or(0, |i| m.exponent(i))
}

/// Torus average with `nu` frozen at zero: keeps resonant, `nu`-free terms.
pub fn project_a_ring(f: &VectorPoly) -> VectorPoly {
    let layout = f.layout();
    let p = layout.n;
    f.filter_terms(|k, m| nu_exponent(&layout, m) == 0 && is_resonant(p, k, m))
}

/// Torus average: keeps resonant terms.
pub fn project_a(f: &VectorPoly) -> VectorPoly {
    let p = f.layout().n;
    f.filter_terms(|k, m| is_resonant(p, k, m))
}

/// `gamma f(gamma^{-1} x)` for the torus element with angles `theta`.
pub fn torus_conjugate(f: &VectorPoly, theta: &[f64]) -> Result<VectorPoly> {
    let p = require_center(f)?;
    if theta.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: theta.len() });
    }
    let mut out = VectorPoly::zero(f.layout(), f.ncomp());
    for (k, m, c) in f.terms() {
        let w = component_weight(p, k);
        let mut phase = 0.0;
        for j in 1..=p {
            let a = m.exponent(2 * j - 1) as f64;
            let b = m.exponent(2 * j) as f64;
            phase += theta[j - 1] * (w[j - 1] as f64 - a + b);
        }
        out.component_mut(k).add_term(m.clone(), c * C64::from_polar(1.0, phase));
    }
    Ok(out)
}

/// `(1/T) int_0^T e^{Bs} f(e^{-Bs} x) ds` by the composite trapezoid rule.
pub fn time_average(f: &VectorPoly, omegas: &[f64], horizon: f64, n_steps: usize) -> Result<VectorPoly> {
    let p = require_center(f)?;
    if omegas.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: omegas.len() });
    }
    if !(horizon > 0.0) {
        return Err(Error::Precondition("averaging horizon must be positive".into()));
    }
    let layout = f.layout();
    if f.terms().any(|(_, m, _)| nu_exponent(&layout, m) > 0) {
        return Err(Error::Precondition("time average needs a nu-independent field".into()));
    }
    // fastest oscillation: |<a - b - w, omega>| <= (degree + 1) * omega_max
    let wmax = omegas.iter().copied().fold(0.0, f64::max);
    let dmax = f.max_degree().unwrap_or(0) as f64;
    let kappa = (dmax + 1.0) * wmax;
    let required = ((2.0 * horizon * kappa / std::f64::consts::PI).ceil() as usize).max(1);
    if n_steps < required {
        return Err(Error::Quadrature { required, given: n_steps });
    }
    let h = horizon / n_steps as f64;
    let mut acc = VectorPoly::zero(layout, f.ncomp());
    for i in 0..=n_steps {
        let s = i as f64 * h;
        let w = if i == 0 || i == n_steps { 0.5 } else { 1.0 };
        let theta: Vec<f64> = omegas.iter().map(|om| om * s).collect();
        let g = torus_conjugate(f, &theta)?;
        acc = acc.add(&g.scale(C64::new(w * h / horizon, 0.0)));
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivariantKind {
    /// `nu`-independent torus equivariants on the `2p+1` center components.
    TorusNuIndependent,
    /// Degree-`l` equivariants of `T^p x R` on all `2p+2+s` components.
    FullGamma,
}

/// Real torus-equivariant basis on `ncomp` components; components past `2p` have weight 0.
fn torus_real_basis(layout: Layout, degree: u32, ncomp: usize, flavor: Flavor) -> Vec<VectorPoly> {
    let p = layout.n;
    let perm = layout.conj_perm();
    let monos: Vec<Monomial> = monomials_of_degree(layout.nvars(), degree)
        .into_iter()
        .filter(|m| flavor.admits(&layout, m))
        .collect();
    let mut out = Vec::new();
    for k in 0..ncomp {
        let paired = k >= 1 && k <= 2 * p;
        if paired && k % 2 == 0 {
            continue;
        }
        for m in monos.iter().filter(|m| is_resonant(p, k, m)) {
            if paired {
                let mc = m.permuted(&perm);
                let mut re = VectorPoly::zero(layout, ncomp);
                re.component_mut(k).add_term(m.clone(), ONE);
                re.component_mut(k + 1).add_term(mc.clone(), ONE);
                let mut im = VectorPoly::zero(layout, ncomp);
                im.component_mut(k).add_term(m.clone(), C64::new(0.0, 1.0));
                im.component_mut(k + 1).add_term(mc, C64::new(0.0, -1.0));
                out.push(re);
                out.push(im);
            } else {
                // self-conjugate scalar rows: pair m with its conjugate image
                let mc = m.permuted(&perm);
                if mc == *m {
                    out.push(VectorPoly::unit(layout, ncomp, k, m.clone(), ONE));
                } else if *m < mc {
                    let mut re = VectorPoly::zero(layout, ncomp);
                    re.component_mut(k).add_term(m.clone(), ONE);
                    re.component_mut(k).add_term(mc.clone(), ONE);
                    let mut im = VectorPoly::zero(layout, ncomp);
                    im.component_mut(k).add_term(m.clone(), C64::new(0.0, 1.0));
                    im.component_mut(k).add_term(mc, C64::new(0.0, -1.0));
                    out.push(re);
                    out.push(im);
                }
            }
        }
    }
    out
}

/// Infinitesimal generator of the nilpotent factor `I + Theta N^T`:
/// `N^T f - x0 df/dnu`, where `N^T` copies the `x0` component into the `nu` slot.
pub fn nilpotent_commutator(f: &VectorPoly) -> Result<VectorPoly> {
    let p = require_center(f)?;
    let layout = f.layout();
    let nu = layout.nu_index().unwrap();
    if f.ncomp() != layout.nvars() {
        return Err(Error::DimensionMismatch { expected: layout.nvars(), found: f.ncomp() });
    }
    let x0 = Poly::var(layout.nvars(), 0);
    let mut out = f.map(|c| x0.mul(&c.derivative(nu)).scale(-ONE));
    let nu_comp = 2 * p + 1;
    let lifted = out.component(nu_comp).add(f.component(0));
    *out.component_mut(nu_comp) = lifted;
    Ok(out)
}

/// Real basis of the requested equivariant space.
pub fn equivariant_basis(p: usize, s: usize, degree: u32, kind: EquivariantKind) -> Result<Vec<VectorPoly>> {
    let layout = Layout::center(p, s);
    SpaceDesc::new(layout, degree, 2 * p + 1, Flavor::Full)?;
    match kind {
        EquivariantKind::TorusNuIndependent => {
            Ok(torus_real_basis(layout, degree, 2 * p + 1, Flavor::NuIndependent))
        }
        EquivariantKind::FullGamma => {
            let ncomp = layout.nvars();
            let candidates = torus_real_basis(layout, degree, ncomp, Flavor::Full);
            let space = SpaceDesc::new(layout, degree, ncomp, Flavor::Full)?;
            let index = BasisIndex::of_space(&space);
            let n = index.len();
            let mut m = DMatrix::<f64>::zeros(2 * n, candidates.len());
            for (j, b) in candidates.iter().enumerate() {
                let img = nilpotent_commutator(b)?;
                let v = img.coordinates(&index)?;
                for (i, c) in v.iter().enumerate() {
                    m[(i, j)] = c.re;
                    m[(n + i, j)] = c.im;
                }
            }
            let null = linalg::null_space(&m, GAMMA_NULLSPACE_CUTOFF);
            Ok(null
                .iter()
                .map(|coef| {
                    let mut acc = VectorPoly::zero(layout, ncomp);
                    for (j, b) in candidates.iter().enumerate() {
                        if coef[j].abs() > 1e-14 {
                            acc = acc.add(&b.scale(C64::new(coef[j], 0.0)));
                        }
                    }
                    acc.prune(1e-13)
                })
                .collect())
        }
    }
}

/// `Z_{2,p}`-equivariant monomials of the radial space: component 0 is even in every
/// `rho_j` (j >= 1); component `j` is odd in `rho_j` and even in the other radii.
pub fn radial_target_basis(p: usize, s: usize, degree: u32, flavor: Flavor) -> Vec<(usize, Monomial)> {
    let layout = Layout::radial(p, s);
    let monos: Vec<Monomial> = monomials_of_degree(layout.nvars(), degree)
        .into_iter()
        .filter(|m| flavor.admits(&layout, m))
        .collect();
    let mut out = Vec::new();
    for k in 0..=p {
        for m in &monos {
            let ok = (1..=p).all(|j| {
                let odd = m.exponent(j) % 2 == 1;
                if j == k {
                    odd
                } else {
                    !odd
                }
            });
            if ok {
                out.push((k, m.clone()));
            }
        }
    }
    out
}

fn polar_monomial(layout: &Layout, m: &Monomial, lower: Option<usize>) -> Monomial {
    let p = layout.n;
    let radial = Layout::radial(p, layout.s);
    let mut e = vec![0u32; radial.nvars()];
    e[0] = m.exponent(0);
    for j in 1..=p {
        e[j] = m.exponent(2 * j - 1) + m.exponent(2 * j);
    }
    for k in 0..layout.s {
        e[radial.mu_index(k)] = m.exponent(layout.mu_index(k));
    }
    if let Some(j) = lower {
        e[j] -= 1;
    }
    Monomial::new(e)
}

fn check_polar_input(f: &VectorPoly) -> Result<usize> {
    let p = require_center(f)?;
    if f.ncomp() != 2 * p + 1 {
        return Err(Error::DimensionMismatch { expected: 2 * p + 1, found: f.ncomp() });
    }
    let layout = f.layout();
    for (k, m, _) in f.terms() {
        if nu_exponent(&layout, m) > 0 || !is_resonant(p, k, m) {
            return Err(Error::NotEquivariant {
                component: k,
                monomial: layout.format_monomial(m),
            });
        }
    }
    Ok(p)
}

/// Radial part under `x0 = rho0`, `xj = rhoj e^{i thetaj}`: `(a0, Re(a1) rho1, ..., Re(ap) rhop)`.
pub fn radial_project(f: &VectorPoly) -> Result<VectorPoly> {
    let p = check_polar_input(f)?;
    let layout = f.layout();
    let radial = Layout::radial(p, layout.s);
    let mut out = VectorPoly::zero(radial, p + 1);
    for (k, m, c) in f.terms() {
        if k == 0 {
            out.component_mut(0).add_term(polar_monomial(&layout, m, None), C64::new(c.re, 0.0));
        } else if k % 2 == 1 {
            let j = (k + 1) / 2;
            out.component_mut(j).add_term(polar_monomial(&layout, m, None), C64::new(c.re, 0.0));
        }
    }
    Ok(out)
}

/// Nonlinear angular right-hand sides `Im(a_j)(rho0, rho1^2, ..., mu)`, one per Hopf pair.
pub fn angular_extract(f: &VectorPoly) -> Result<VectorPoly> {
    let p = check_polar_input(f)?;
    let layout = f.layout();
    let radial = Layout::radial(p, layout.s);
    let mut out = VectorPoly::zero(radial, p);
    for (k, m, c) in f.terms() {
        if k >= 1 && k % 2 == 1 {
            let j = (k + 1) / 2;
            out.component_mut(j - 1)
                .add_term(polar_monomial(&layout, m, Some(j)), C64::new(c.im, 0.0));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::enumerate_basis;

    fn mono(e: &[u32]) -> Monomial {
        Monomial::new(e.to_vec())
    }

    /// Product trapezoid rule over the torus, 64 points per circle.
    fn haar_quadrature(f: &VectorPoly) -> VectorPoly {
        let p = f.layout().n;
        let n = 64usize;
        let total = n.pow(p as u32);
        let mut acc = VectorPoly::zero(f.layout(), f.ncomp());
        for idx in 0..total {
            let mut rem = idx;
            let theta: Vec<f64> = (0..p)
                .map(|_| {
                    let t = (rem % n) as f64 * 2.0 * std::f64::consts::PI / n as f64;
                    rem /= n;
                    t
                })
                .collect();
            let g = torus_conjugate(f, &theta).unwrap();
            acc = acc.add(&g.scale(C64::new(1.0 / total as f64, 0.0)));
        }
        acc.prune(1e-13)
    }

    #[test]
    fn project_a_ring_examples() {
        let l = Layout::center(1, 0);
        let fixed = VectorPoly::unit(l, 3, 0, mono(&[2, 0, 0, 0]), ONE);
        assert_eq!(project_a_ring(&fixed), fixed);

        let x1sq = VectorPoly::unit(l, 3, 0, mono(&[0, 2, 0, 0]), ONE);
        assert!(project_a_ring(&x1sq).is_zero());
        assert!(haar_quadrature(&x1sq).max_abs() < 1e-12);

        let x0nu = VectorPoly::unit(l, 3, 0, mono(&[1, 0, 0, 1]), ONE);
        assert!(project_a_ring(&x0nu).is_zero());
    }

    #[test]
    fn project_a_examples() {
        let l = Layout::center(1, 0);
        let kept = VectorPoly::unit(l, 3, 1, mono(&[1, 1, 0, 0]), ONE);
        assert_eq!(resonance_defect(1, 1, &mono(&[1, 1, 0, 0])), vec![0]);
        assert_eq!(project_a(&kept), kept);
        assert!(haar_quadrature(&kept).sub(&kept).max_abs() < 1e-12);

        let killed = VectorPoly::unit(l, 3, 1, mono(&[2, 0, 0, 0]), ONE);
        assert_eq!(resonance_defect(1, 1, &mono(&[2, 0, 0, 0])), vec![-1]);
        assert!(project_a(&killed).is_zero());
        assert!(haar_quadrature(&killed).max_abs() < 1e-12);

        assert!(project_a(&VectorPoly::zero(l, 3)).is_zero());
    }

    #[test]
    fn projection_filter_agrees_with_haar_quadrature() {
        // every basis element of H_3 for p = 2: nu-free part of the filter is the Haar average
        let sp = SpaceDesc::center_field(2, 0, 3, Flavor::NuIndependent).unwrap();
        for (k, m) in enumerate_basis(&sp) {
            let f = VectorPoly::unit(sp.layout, sp.components, k, m, C64::new(0.3, -1.1));
            let d = project_a(&f).sub(&haar_quadrature(&f)).max_abs();
            assert!(d < 1e-12, "{d}");
        }
    }

    #[test]
    fn torus_basis_dimensions() {
        let b2 = equivariant_basis(1, 0, 2, EquivariantKind::TorusNuIndependent).unwrap();
        assert_eq!(b2.len(), 4);
        let b3 = equivariant_basis(1, 0, 3, EquivariantKind::TorusNuIndependent).unwrap();
        assert_eq!(b3.len(), 6);
        for b in b2.iter().chain(&b3) {
            assert!(crate::poly::check_reality(b).unwrap().real);
            assert_eq!(&project_a_ring(b), b);
        }
    }

    #[test]
    fn torus_basis_dimension_matches_fixed_subspace_of_the_action() {
        // oracle: dimension of the fixed subspace of the Haar-quadrature projection
        for (p, l) in [(1usize, 2u32), (1, 3), (2, 2)] {
            let sp = SpaceDesc::center_field(p, 0, l, Flavor::NuIndependent).unwrap();
            let idx = BasisIndex::of_space(&sp);
            let mut cols = Vec::new();
            for (k, m) in idx.iter() {
                let img = haar_quadrature(&VectorPoly::unit(sp.layout, sp.components, *k, m.clone(), ONE));
                let v = img.coordinates(&idx).unwrap();
                cols.push(v.into_iter().enumerate().filter(|(_, c)| c.norm() > 1e-12).collect::<Vec<_>>());
            }
            let rank = linalg::sparse_rank(&cols, idx.len(), 1e-10);
            let b = equivariant_basis(p, 0, l, EquivariantKind::TorusNuIndependent).unwrap();
            assert_eq!(b.len(), rank, "p={p} l={l}");
        }
    }

    #[test]
    fn full_gamma_first_component_divisible_by_x0() {
        let basis = equivariant_basis(1, 0, 2, EquivariantKind::FullGamma).unwrap();
        assert!(!basis.is_empty());
        for b in &basis {
            for (m, _) in b.component(0).terms() {
                assert!(m.exponent(0) >= 1, "{}", b.layout().format_monomial(m));
            }
            // nu-independent except for the nu row
            for k in 0..b.ncomp() {
                if k != 3 {
                    assert!(b.component(k).terms().all(|(m, _)| m.exponent(3) == 0));
                }
            }
            assert!(nilpotent_commutator(b).unwrap().max_abs() < 1e-10);
        }
    }

    #[test]
    fn full_gamma_dimension_by_hand() {
        // p=1, s=0, l=2: a0 = x0 g0 with g0 in span{x0}, b = nu g0 + g1 with g1 in
        // span{x0^2, x1 xb1}, a1 = x0 * const (complex) -> 1 + 2 + 2 = 5
        let basis = equivariant_basis(1, 0, 2, EquivariantKind::FullGamma).unwrap();
        assert_eq!(basis.len(), 5);
    }

    #[test]
    fn radial_projection_examples() {
        let l = Layout::center(1, 0);
        let f = VectorPoly::unit(l, 3, 0, mono(&[0, 1, 1, 0]), ONE);
        let r = radial_project(&f).unwrap();
        assert_eq!(r.component(0).coeff(&mono(&[0, 2])), ONE);

        let (a, b) = (0.7, -0.4);
        let mut g = VectorPoly::zero(l, 3);
        g.component_mut(1).add_term(mono(&[1, 1, 0, 0]), C64::new(a, b));
        g.component_mut(2).add_term(mono(&[1, 0, 1, 0]), C64::new(a, -b));
        let r = radial_project(&g).unwrap();
        assert_eq!(r.component(1).coeff(&mono(&[1, 1])), C64::new(a, 0.0));
        let ang = angular_extract(&g).unwrap();
        assert_eq!(ang.component(0).coeff(&mono(&[1, 0])), C64::new(b, 0.0));
    }

    #[test]
    fn radial_projection_rejects_non_equivariant_terms() {
        let l = Layout::center(1, 0);
        let f = VectorPoly::unit(l, 3, 0, mono(&[0, 2, 0, 0]), ONE);
        match radial_project(&f) {
            Err(Error::NotEquivariant { component, monomial }) => {
                assert_eq!(component, 0);
                assert_eq!(monomial, "x1^2");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn angular_of_imaginary_coefficient() {
        let l = Layout::center(1, 0);
        let mut g = VectorPoly::zero(l, 3);
        g.component_mut(1).add_term(mono(&[1, 1, 0, 0]), C64::new(0.0, 1.0));
        g.component_mut(2).add_term(mono(&[1, 0, 1, 0]), C64::new(0.0, -1.0));
        let ang = angular_extract(&g).unwrap();
        assert_eq!(ang.component(0).coeff(&mono(&[1, 0])), ONE);
        let real = VectorPoly::unit(l, 3, 1, mono(&[1, 1, 0, 0]), C64::new(2.0, 0.0));
        assert!(angular_extract(&real).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn radial_target_dimension() {
        assert_eq!(radial_target_basis(1, 0, 3, Flavor::Full).len(), 4);
        assert_eq!(radial_target_basis(1, 0, 2, Flavor::Full).len(), 3);
    }

    #[test]
    fn radial_projection_is_onto_the_radial_space() {
        for (p, s, l) in [(1usize, 0usize, 2u32), (1, 0, 3), (1, 1, 3), (2, 0, 2), (2, 1, 3)] {
            let target = radial_target_basis(p, s, l, Flavor::Full);
            let tidx = BasisIndex::new(target.clone());
            let eq = torus_real_basis(Layout::center(p, s), l, 2 * p + 1, Flavor::NuIndependent);
            let mut m = DMatrix::<f64>::zeros(tidx.len(), eq.len());
            for (j, b) in eq.iter().enumerate() {
                let r = radial_project(b).unwrap();
                for (i, c) in r.coordinates(&tidx).unwrap().iter().enumerate() {
                    m[(i, j)] = c.re;
                }
            }
            assert_eq!(linalg::numerical_rank(&m, 1e-12), tidx.len(), "p={p} s={s} l={l}");
        }
    }

    #[test]
    fn time_average_of_equivariant_field_is_itself() {
        let l = Layout::center(1, 0);
        let f = VectorPoly::unit(l, 3, 1, mono(&[1, 1, 0, 0]), C64::new(1.0, 2.0));
        let avg = time_average(&f, &[1.0], 37.0, 200).unwrap();
        assert!(avg.sub(&f).max_abs() < 1e-12);
        let z = time_average(&VectorPoly::zero(l, 3), &[1.0], 10.0, 100).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn time_average_guards_step_count() {
        let l = Layout::center(1, 0);
        let f = VectorPoly::unit(l, 3, 0, mono(&[0, 2, 0, 0]), ONE);
        assert!(matches!(time_average(&f, &[1.0], 100.0, 10), Err(Error::Quadrature { .. })));
    }
}
