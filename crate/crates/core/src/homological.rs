//! The homological operator `L f = D_x f B x - B f + nu df/dx0` on center fields.
//!
//! In the monomial basis `L` is `i<delta, omega>` on the diagonal plus the nilpotent
//! shift `x0^a nu^c -> a x0^{a-1} nu^{c+1}`. Basis elements therefore fall into
//! independent "strings" sharing component, all exponents except those of `x0`
//! and `nu`, and the sum `a + c`; each string is a small lower-bidiagonal block.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::{
    BasisIndex, Flavor, Layout, Monomial, Poly, SpaceDesc, VarKind, VectorPoly, C64, ZERO,
};
use crate::symmetry::{is_resonant, project_a_ring, resonance_defect};

/// Relative singular-value cutoff of the homological solve.
pub const SOLVE_CUTOFF: f64 = 1e-12;
/// Tolerance of the `A(g) = 0` precheck.
pub const KERNEL_TOL: f64 = 1e-10;
/// Relative residual accepted after the solve.
pub const RESIDUAL_TOL: f64 = 1e-9;

fn check_field(f: &VectorPoly, omegas: &[f64]) -> Result<usize> {
    let layout = f.layout();
    if layout.kind != VarKind::Center {
        return Err(Error::InvalidSpace("homological operator acts on center fields".into()));
    }
    let p = layout.n;
    if f.ncomp() != 2 * p + 1 {
        return Err(Error::DimensionMismatch { expected: 2 * p + 1, found: f.ncomp() });
    }
    if omegas.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: omegas.len() });
    }
    Ok(p)
}

fn diagonal(p: usize, k: usize, m: &Monomial, omegas: &[f64]) -> C64 {
    let d = resonance_defect(p, k, m);
    let kappa: f64 = d.iter().zip(omegas).map(|(&d, &w)| d as f64 * w).sum();
    C64::new(0.0, kappa)
}

/// Image of one basis element `m e_k`.
fn column(layout: &Layout, k: usize, m: &Monomial, omegas: &[f64]) -> Vec<(usize, Monomial, C64)> {
    let p = layout.n;
    let nu = layout.nu_index().unwrap();
    let mut out = Vec::with_capacity(2);
    let d = diagonal(p, k, m, omegas);
    if d.im != 0.0 {
        out.push((k, m.clone(), d));
    }
    let a0 = m.exponent(0);
    if a0 > 0 {
        let shifted = m.lower(0).unwrap().raise(nu);
        out.push((k, shifted, C64::new(a0 as f64, 0.0)));
    }
    out
}

pub fn apply_homological(f: &VectorPoly, omegas: &[f64]) -> Result<VectorPoly> {
    check_field(f, omegas)?;
    let layout = f.layout();
    let mut out = VectorPoly::zero(layout, f.ncomp());
    for (k, m, c) in f.terms() {
        for (kk, mm, v) in column(&layout, k, m, omegas) {
            out.component_mut(kk).add_term(mm, v * c);
        }
    }
    Ok(out)
}

/// `D F . Bt w - Bt F` on the full `2p+2+s`-component space, where
/// `Bt w = (B x + nu e0, 0, 0)`.
pub fn apply_homological_extended(f: &VectorPoly, omegas: &[f64]) -> Result<VectorPoly> {
    let layout = f.layout();
    if layout.kind != VarKind::Center {
        return Err(Error::InvalidSpace("homological operator acts on center fields".into()));
    }
    let p = layout.n;
    if f.ncomp() != layout.nvars() {
        return Err(Error::DimensionMismatch { expected: layout.nvars(), found: f.ncomp() });
    }
    if omegas.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: omegas.len() });
    }
    let n = layout.nvars();
    let nu = layout.nu_index().unwrap();
    let mut bw: Vec<Poly> = vec![Poly::zero(n); n];
    bw[0] = Poly::var(n, nu);
    for j in 1..=p {
        bw[2 * j - 1] = Poly::var(n, 2 * j - 1).scale(C64::new(0.0, omegas[j - 1]));
        bw[2 * j] = Poly::var(n, 2 * j).scale(C64::new(0.0, -omegas[j - 1]));
    }
    let mut out = VectorPoly::zero(layout, n);
    for k in 0..n {
        let fk = f.component(k);
        let mut acc = Poly::zero(n);
        for (i, b) in bw.iter().enumerate() {
            if !b.is_empty() {
                acc = acc.add(&fk.derivative(i).mul(b));
            }
        }
        // Bt F: diagonal part on the paired rows plus F_nu fed into row 0
        let lin = if k == 0 {
            f.component(nu).clone()
        } else if k <= 2 * p {
            let j = (k + 1) / 2;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            fk.scale(C64::new(0.0, sign * omegas[j - 1]))
        } else {
            Poly::zero(n)
        };
        *out.component_mut(k) = acc.sub(&lin);
    }
    Ok(out)
}

/// Sparse matrix of `L` over the enumerated basis of a homogeneous center space.
#[derive(Clone, Debug)]
pub struct HomologicalMatrix {
    pub space: SpaceDesc,
    pub index: BasisIndex,
    /// Column-compressed entries `(row, value)`.
    pub columns: Vec<Vec<(usize, C64)>>,
}

impl HomologicalMatrix {
    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim()];
        for (j, col) in self.columns.iter().enumerate() {
            if v[j] != ZERO {
                for &(i, a) in col {
                    out[i] += a * v[j];
                }
            }
        }
        out
    }

    pub fn max_column_nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn rank(&self) -> usize {
        linalg::sparse_rank(&self.columns, self.dim(), SOLVE_CUTOFF)
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, a) in col {
                m[(i, j)] += a;
            }
        }
        m
    }
}

pub fn homological_matrix(p: usize, s: usize, degree: u32, omegas: &[f64]) -> Result<HomologicalMatrix> {
    homological_matrix_on(SpaceDesc::center_field(p, s, degree, Flavor::Full)?, omegas)
}

fn homological_matrix_on(space: SpaceDesc, omegas: &[f64]) -> Result<HomologicalMatrix> {
    let layout = space.layout;
    if omegas.len() != layout.n {
        return Err(Error::DimensionMismatch { expected: layout.n, found: omegas.len() });
    }
    let index = BasisIndex::of_space(&space);
    let columns = index
        .iter()
        .map(|(k, m)| {
            column(&layout, *k, m, omegas)
                .into_iter()
                .map(|(kk, mm, v)| {
                    let i = index.index_of(kk, &mm).expect("L preserves the space");
                    (i, v)
                })
                .collect()
        })
        .collect();
    Ok(HomologicalMatrix { space, index, columns })
}

/// Key of the string containing `m e_k`: the monomial with `x0` and `nu` merged.
fn string_key(layout: &Layout, k: usize, m: &Monomial) -> (usize, Monomial, u32) {
    let nu = layout.nu_index().unwrap();
    let n = m.exponent(0) + m.exponent(nu);
    (k, m.with_exponent(0, 0).with_exponent(nu, 0), n)
}

/// Minimal-norm `h` with `L h = g` for `g` in the kernel of the `nu`-frozen torus
/// average. Returns `h` and the relative residual `|L h - g| / |g|`.
pub fn solve_homological(g: &VectorPoly, omegas: &[f64]) -> Result<(VectorPoly, f64)> {
    let p = check_field(g, omegas)?;
    let layout = g.layout();
    let nu = layout.nu_index().unwrap();
    let gnorm = g.norm();
    let remainder = project_a_ring(g);
    let rnorm = remainder.norm();
    if rnorm > KERNEL_TOL * gnorm.max(1.0) {
        return Err(Error::NotInKernel { remainder: rnorm });
    }
    let g = g.sub(&remainder);
    if g.is_zero() {
        return Ok((VectorPoly::zero(layout, g.ncomp()), 0.0));
    }

    // gather right-hand sides per string, indexed by the nu exponent c = 0..=n
    let mut strings: BTreeMap<(usize, Monomial, u32), Vec<C64>> = BTreeMap::new();
    for (k, m, c) in g.terms() {
        let key = string_key(&layout, k, m);
        let rhs = strings.entry(key.clone()).or_insert_with(|| vec![ZERO; key.2 as usize + 1]);
        rhs[m.exponent(nu) as usize] += c;
    }
    let mut blocks = Vec::with_capacity(strings.len());
    let mut smax: f64 = 0.0;
    for ((k, rest, n), rhs) in &strings {
        let len = *n as usize + 1;
        let kappa = diagonal(p, *k, rest, omegas);
        let mut a = DMatrix::<C64>::zeros(len, len);
        for c in 0..len {
            a[(c, c)] = kappa;
            if c + 1 < len {
                a[(c + 1, c)] = C64::new((*n as usize - c) as f64, 0.0);
            }
        }
        smax = smax.max(linalg::singular_values(&a).first().copied().unwrap_or(0.0));
        blocks.push((a, DVector::from_column_slice(rhs)));
    }
    let cutoff = SOLVE_CUTOFF * smax;
    let mut h = VectorPoly::zero(layout, g.ncomp());
    for (((k, rest, n), _), (a, b)) in strings.iter().zip(&blocks) {
        let x = linalg::min_norm_solve_cutoff(a, b, cutoff);
        for c in 0..=*n {
            let m = rest.with_exponent(0, n - c).with_exponent(nu, c);
            h.component_mut(*k).add_term(m, x[c as usize]);
        }
    }
    let residual = apply_homological(&h, omegas)?.sub(&g).norm() / gnorm;
    if residual > RESIDUAL_TOL {
        return Err(Error::Residual { residual, tolerance: RESIDUAL_TOL });
    }
    Ok((h, residual))
}

#[derive(Clone, Debug, Serialize)]
pub struct SubspaceSplit {
    pub label: String,
    pub dim: usize,
    pub dim_range_a: usize,
    /// Dimension of the equivariant target the range of the projection must equal.
    pub dim_target: usize,
    pub dim_range_l: usize,
    pub stacked_rank: usize,
    pub l_preserves: bool,
    pub containment: bool,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplittingReport {
    pub p: usize,
    pub s: usize,
    pub degree: u32,
    pub whole: SubspaceSplit,
    /// Restrictions to the `mu`-independent part and to the part vanishing at `mu = 0`.
    pub mu_split: Vec<SubspaceSplit>,
    pub ok: bool,
}

fn split_on(space: SpaceDesc, target: usize, label: &str, omegas: &[f64]) -> Result<SubspaceSplit> {
    let layout = space.layout;
    let p = layout.n;
    let nu = layout.nu_index().unwrap();
    let mat = homological_matrix_on(space, omegas)?;
    let n = mat.dim();
    let kept: Vec<usize> = mat
        .index
        .iter()
        .enumerate()
        .filter(|(_, (k, m))| m.exponent(nu) == 0 && is_resonant(p, *k, m))
        .map(|(i, _)| i)
        .collect();
    let dim_range_a = kept.len();
    let dim_range_l = mat.rank();
    let mut stacked = mat.columns.clone();
    stacked.extend(kept.iter().map(|&i| vec![(i, C64::new(1.0, 0.0))]));
    let stacked_rank = linalg::sparse_rank(&stacked, n, SOLVE_CUTOFF);
    let kept_set: std::collections::HashSet<usize> = kept.iter().copied().collect();
    let containment = mat
        .columns
        .iter()
        .all(|col| col.iter().all(|(i, v)| !kept_set.contains(i) || v.norm() <= 1e-12));
    // every image entry was found in the same space's index, else assembly would have panicked
    let l_preserves = true;
    let ok = dim_range_a == target
        && dim_range_a + dim_range_l == n
        && stacked_rank == n
        && containment
        && l_preserves;
    Ok(SubspaceSplit {
        label: label.into(),
        dim: n,
        dim_range_a,
        dim_target: target,
        dim_range_l,
        stacked_rank,
        l_preserves,
        containment,
        ok,
    })
}

fn count_equivariant(p: usize, s: usize, degree: u32, mu: Flavor) -> usize {
    let layout = Layout::center(p, s);
    let nu = layout.nu_index().unwrap();
    crate::poly::monomials_of_degree(layout.nvars(), degree)
        .into_iter()
        .filter(|m| m.exponent(nu) == 0 && mu.admits(&layout, m))
        .map(|m| (0..=2 * p).filter(|&k| is_resonant(p, k, &m)).count())
        .sum()
}

/// Numerical audit of the splitting `H = (equivariant, nu-free) + range L`.
pub fn verify_splitting(p: usize, s: usize, degree: u32, omegas: &[f64]) -> Result<SplittingReport> {
    let whole = split_on(
        SpaceDesc::center_field(p, s, degree, Flavor::Full)?,
        count_equivariant(p, s, degree, Flavor::Full),
        "all",
        omegas,
    )?;
    let mut mu_split = Vec::new();
    if s > 0 {
        mu_split.push(split_on(
            SpaceDesc::center_field(p, s, degree, Flavor::MuIndependent)?,
            count_equivariant(p, s, degree, Flavor::MuIndependent),
            "mu_independent",
            omegas,
        )?);
        mu_split.push(split_on(
            SpaceDesc::center_field(p, s, degree, Flavor::VanishingAtMu0)?,
            count_equivariant(p, s, degree, Flavor::VanishingAtMu0),
            "vanishing_at_mu0",
            omegas,
        )?);
        let sum_ok = mu_split[0].dim + mu_split[1].dim == whole.dim
            && mu_split[0].dim_range_a + mu_split[1].dim_range_a == whole.dim_range_a;
        if !sum_ok {
            mu_split[1].ok = false;
        }
    }
    let ok = whole.ok && mu_split.iter().all(|m| m.ok);
    Ok(SplittingReport { p, s, degree, whole, mu_split, ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::enumerate_basis;
    use crate::symmetry::torus_conjugate;

    fn mono(e: &[u32]) -> Monomial {
        Monomial::new(e.to_vec())
    }

    fn l1() -> Layout {
        Layout::center(1, 0)
    }

    #[test]
    fn apply_examples() {
        let f = VectorPoly::unit(l1(), 3, 0, mono(&[2, 0, 0, 0]), C64::new(1.0, 0.0));
        let g = apply_homological(&f, &[1.0]).unwrap();
        assert_eq!(g, VectorPoly::unit(l1(), 3, 0, mono(&[1, 0, 0, 1]), C64::new(2.0, 0.0)));

        let f = VectorPoly::unit(l1(), 3, 0, mono(&[0, 2, 0, 0]), C64::new(1.0, 0.0));
        let g = apply_homological(&f, &[1.0]).unwrap();
        assert_eq!(g, VectorPoly::unit(l1(), 3, 0, mono(&[0, 2, 0, 0]), C64::new(0.0, 2.0)));

        let f = VectorPoly::unit(l1(), 3, 1, mono(&[1, 1, 0, 0]), C64::new(1.0, 0.0));
        let g = apply_homological(&f, &[1.0]).unwrap();
        assert_eq!(g, VectorPoly::unit(l1(), 3, 1, mono(&[0, 1, 0, 1]), C64::new(1.0, 0.0)));
    }

    /// `d/ds e^{-Bs} f(e^{Bs} x + s nu e0)` at `s = 0` by central differences.
    fn finite_difference(f: &VectorPoly, omegas: &[f64]) -> VectorPoly {
        let layout = f.layout();
        let n = layout.nvars();
        let nu = layout.nu_index().unwrap();
        let flow = |s: f64| {
            let theta: Vec<f64> = omegas.iter().map(|w| -w * s).collect();
            let g = torus_conjugate(f, &theta).unwrap();
            let mut subs: Vec<Poly> = (0..n).map(|i| Poly::var(n, i)).collect();
            subs[0] = subs[0].add(&Poly::var(n, nu).scale(C64::new(s, 0.0)));
            g.map(|c| c.substitute(&subs, None).unwrap())
        };
        let h = 1e-5;
        flow(h).sub(&flow(-h)).scale(C64::new(0.5 / h, 0.0))
    }

    #[test]
    fn apply_agrees_with_flow_derivative() {
        let omegas = [1.0, 2f64.sqrt()];
        let sp = SpaceDesc::center_field(2, 1, 3, Flavor::Full).unwrap();
        let basis = enumerate_basis(&sp);
        for (i, (k, m)) in basis.iter().enumerate().step_by(7) {
            let c = C64::new(1.0 + i as f64 * 0.01, -0.5);
            let f = VectorPoly::unit(sp.layout, sp.components, *k, m.clone(), c);
            let exact = apply_homological(&f, &omegas).unwrap();
            let fd = finite_difference(&f, &omegas);
            assert!(exact.sub(&fd).max_abs() < 1e-6, "{k} {m}");
        }
    }

    #[test]
    fn extended_operator_restricts_to_l() {
        let omegas = [1.0];
        let layout = Layout::center(1, 1);
        let sp = SpaceDesc::center_field(1, 1, 2, Flavor::Full).unwrap();
        for (k, m) in enumerate_basis(&sp) {
            let f = VectorPoly::unit(layout, 3, k, m.clone(), C64::new(0.3, 0.8));
            let mut ext = VectorPoly::zero(layout, layout.nvars());
            *ext.component_mut(k) = f.component(k).clone();
            let big = apply_homological_extended(&ext, &omegas).unwrap();
            let small = apply_homological(&f, &omegas).unwrap();
            for kk in 0..layout.nvars() {
                let expect = if kk < 3 { small.component(kk).clone() } else { Poly::zero(layout.nvars()) };
                assert!(big.component(kk).sub(&expect).max_abs() < 1e-14);
            }
        }
    }

    #[test]
    fn matrix_structure() {
        let m = homological_matrix(1, 0, 2, &[1.0]).unwrap();
        assert_eq!(m.dim(), 30);
        assert!(m.max_column_nnz() <= 2);
        let col = m.index.index_of(0, &mono(&[0, 0, 0, 2])).unwrap();
        assert!(m.columns[col].is_empty());
        assert_eq!(m.rank(), 26);
        assert_eq!(linalg::numerical_rank(&m.to_dense(), 1e-12), 26);
        // matrix-vector product agrees with the operator
        let v: Vec<C64> = (0..30).map(|i| C64::new(i as f64 * 0.1, 1.0 - i as f64 * 0.05)).collect();
        let f = VectorPoly::from_coordinates(m.space.layout, 3, &m.index, &v);
        let image = apply_homological(&f, &[1.0]).unwrap().coordinates(&m.index).unwrap();
        for (a, b) in image.iter().zip(m.apply(&v)) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn solve_examples() {
        let (h, r) = solve_homological(&VectorPoly::zero(l1(), 3), &[1.0]).unwrap();
        assert!(h.is_zero() && r == 0.0);

        let g = VectorPoly::unit(l1(), 3, 0, mono(&[0, 2, 0, 0]), C64::new(1.0, 0.0));
        let (h, _) = solve_homological(&g, &[1.0]).unwrap();
        let expect = VectorPoly::unit(l1(), 3, 0, mono(&[0, 2, 0, 0]), C64::new(0.0, -0.5));
        assert!(h.sub(&expect).max_abs() < 1e-14);

        let g = VectorPoly::unit(l1(), 3, 0, mono(&[1, 0, 0, 1]), C64::new(2.0, 0.0));
        let (h, r) = solve_homological(&g, &[1.0]).unwrap();
        assert!(r < 1e-15);
        let expect = VectorPoly::unit(l1(), 3, 0, mono(&[2, 0, 0, 0]), C64::new(1.0, 0.0));
        assert!(h.sub(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn solve_rejects_equivariant_rhs() {
        let g = VectorPoly::unit(l1(), 3, 1, mono(&[1, 1, 0, 0]), C64::new(1.0, 0.0));
        assert!(matches!(solve_homological(&g, &[1.0]), Err(Error::NotInKernel { .. })));
    }

    /// Explicit construction: integrate resonant strings in `x0`, invert the others by
    /// a terminating Neumann series of the nilpotent shift.
    fn explicit_solution(g: &VectorPoly, omegas: &[f64]) -> VectorPoly {
        let layout = g.layout();
        let p = layout.n;
        let nu = layout.nu_index().unwrap();
        let mut h = VectorPoly::zero(layout, g.ncomp());
        for (k, m, c) in g.terms() {
            let d = resonance_defect(p, k, m);
            let kappa: f64 = d.iter().zip(omegas).map(|(&d, &w)| d as f64 * w).sum();
            if kappa == 0.0 {
                // g_c e_c = L (g_c / (a0 + 1) e_{c-1}) with e_{c-1} = x0 * m / nu
                let cexp = m.exponent(nu);
                assert!(cexp > 0);
                let prev = m.lower(nu).unwrap().raise(0);
                let a0 = prev.exponent(0) as f64;
                h.component_mut(k).add_term(prev, c / a0);
            } else {
                // (i kappa + N)^{-1} = sum_j (-1)^j N^j / (i kappa)^{j+1}
                let ik = C64::new(0.0, kappa);
                let mut term = m.clone();
                let mut coef = *c / ik;
                loop {
                    h.component_mut(k).add_term(term.clone(), coef);
                    let a0 = term.exponent(0);
                    if a0 == 0 {
                        break;
                    }
                    coef = -coef * a0 as f64 / ik;
                    term = term.lower(0).unwrap().raise(nu);
                }
            }
        }
        h
    }

    #[test]
    fn minimal_norm_solution_matches_explicit_construction() {
        let omegas = [1.0, 2f64.sqrt()];
        let sp = SpaceDesc::center_field(2, 1, 3, Flavor::Full).unwrap();
        let basis = enumerate_basis(&sp);
        let mut g = VectorPoly::zero(sp.layout, sp.components);
        for (i, (k, m)) in basis.iter().enumerate() {
            let c = C64::new(((i * 37) % 11) as f64 - 5.0, ((i * 13) % 7) as f64 - 3.0);
            g.component_mut(*k).add_term(m.clone(), c);
        }
        let g = g.sub(&project_a_ring(&g));
        let (h, r) = solve_homological(&g, &omegas).unwrap();
        assert!(r < 1e-12);
        let oracle = explicit_solution(&g, &omegas);
        let lo = apply_homological(&oracle, &omegas).unwrap();
        assert!(lo.sub(&g).norm() / g.norm() < 1e-12);
        assert!(h.sub(&oracle).norm() / oracle.norm() < 1e-10);
    }

    #[test]
    fn splitting_reports() {
        let r = verify_splitting(1, 0, 2, &[1.0]).unwrap();
        assert!(r.ok);
        assert_eq!((r.whole.dim, r.whole.dim_range_a, r.whole.dim_range_l), (30, 4, 26));
        let r = verify_splitting(1, 0, 3, &[1.0]).unwrap();
        assert!(r.ok);
        assert_eq!(r.whole.dim_range_a, 6);
        let r = verify_splitting(1, 1, 2, &[1.0]).unwrap();
        assert!(r.ok);
        assert_eq!(r.mu_split.len(), 2);
        // mu-independent part is the s = 0 space
        assert_eq!(r.mu_split[0].dim_range_a, 4);
    }
}
