//! Delay matrices, lifts of delayed polynomials to center fields, the composite
//! maps from delayed nonlinearities to radial normal-form terms, genericity scans,
//! and the degree-by-degree realization solvers.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::normal_form::{forward_radial, RfdeModel};
use crate::poly::{
    compose_linear, monomials_of_degree, BasisIndex, Flavor, Layout, Monomial, Poly,
    VectorPoly, C64,
};
use crate::spectral::{phi_ring_row, SpectralData};
use crate::symmetry::{project_a, project_a_ring, radial_project, radial_target_basis};

/// Relative tolerance of the factorization identity.
pub const FACTORIZATION_TOL: f64 = 1e-10;
/// Relative per-degree round-trip residual accepted by the realization solvers.
pub const ROUND_TRIP_TOL: f64 = 1e-9;
/// Tolerance of the `mu = 0` slice comparison in unfolding realization.
pub const SLICE_TOL: f64 = 1e-10;
const COEFF_DUST: f64 = 1e-12;
const REFINE_STEPS: usize = 2;
const REFINE_TOL: f64 = 1e-13;

/// Distinct delay points in `[-r, 0]`.
pub fn check_delays(tau: &[f64], r: f64) -> Result<()> {
    if tau.is_empty() {
        return Err(Error::InvalidSpace("at least one delay is required".into()));
    }
    for (i, &t) in tau.iter().enumerate() {
        if !(t <= 0.0 && t >= -r) {
            return Err(Error::InvalidSpace(format!("delay {t} lies outside [-{r}, 0]")));
        }
        if tau[..i].contains(&t) {
            return Err(Error::DuplicateDelay(t));
        }
    }
    Ok(())
}

/// `E_ring`: for each delay the row of the center basis at `tau_i` (including the
/// `nu` column `tau_i`) followed by the row `(0, ..., 0, 1)`.
pub fn e_ring(omegas: &[f64], tau: &[f64]) -> DMatrix<C64> {
    let p = omegas.len();
    let mut m = DMatrix::zeros(2 * tau.len(), 2 * p + 2);
    for (i, &t) in tau.iter().enumerate() {
        for (k, v) in phi_ring_row(omegas, t).into_iter().enumerate() {
            m[(2 * i, k)] = v;
        }
        m[(2 * i + 1, 2 * p + 1)] = C64::new(1.0, 0.0);
    }
    m
}

/// `E_plain`: the rows of the center basis at each delay without the `nu` column.
pub fn e_plain(omegas: &[f64], tau: &[f64]) -> DMatrix<C64> {
    let p = omegas.len();
    let mut m = DMatrix::zeros(tau.len(), 2 * p + 1);
    for (i, &t) in tau.iter().enumerate() {
        for (k, v) in phi_ring_row(omegas, t).into_iter().take(2 * p + 1).enumerate() {
            m[(i, k)] = v;
        }
    }
    m
}

pub fn build_e_matrices(data: &SpectralData, tau: &[f64]) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    for (i, &t) in tau.iter().enumerate() {
        if tau[..i].contains(&t) {
            return Err(Error::DuplicateDelay(t));
        }
    }
    Ok((e_ring(&data.omegas, tau), e_plain(&data.omegas, tau)))
}

/// Delay slots `z(t + tau_i)` on the center manifold: first rows of `E_ring`, so the
/// `nu` column carries `tau_i`.
pub fn slot_matrix(omegas: &[f64], tau: &[f64]) -> DMatrix<C64> {
    let p = omegas.len();
    let mut m = DMatrix::zeros(tau.len(), 2 * p + 2);
    for (i, &t) in tau.iter().enumerate() {
        for (k, v) in phi_ring_row(omegas, t).into_iter().enumerate() {
            m[(i, k)] = v;
        }
    }
    m
}

fn scale_by_psi(scalar: &Poly, psi0: &[C64], layout: Layout) -> Result<VectorPoly> {
    let comps = psi0.iter().map(|&u| scalar.scale(u)).collect();
    VectorPoly::from_components(layout, comps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LiftFlavor {
    /// Domain polynomials in `(v0, w0, ..., v_{d-1}, w_{d-1}, mu)`, composed with `E_ring`.
    Ring,
    /// Domain polynomials in `(v0, ..., v_{d-1}, mu)`, composed with `E_plain`.
    Plain,
}

impl LiftFlavor {
    pub fn layout(self, d: usize, s: usize) -> Layout {
        match self {
            LiftFlavor::Ring => Layout::delay(d, s),
            LiftFlavor::Plain => Layout::plain(d, s),
        }
    }
}

/// `Psi(0) h(E x, mu)` on the `2p+1` center components.
pub fn lift(h: &Poly, flavor: LiftFlavor, data: &SpectralData, tau: &[f64]) -> Result<VectorPoly> {
    let p = data.p();
    let d = tau.len();
    let layout = flavor.layout(d, 0);
    if h.nvars() < layout.nvars() {
        return Err(Error::DimensionMismatch { expected: layout.nvars(), found: h.nvars() });
    }
    let s = h.nvars() - layout.nvars();
    let center = Layout::center(p, s);
    let composed = match flavor {
        LiftFlavor::Ring => compose_linear(h, &e_ring(&data.omegas, tau))?,
        LiftFlavor::Plain => {
            // append a zero nu column so the result lives on the center variables
            let e = e_plain(&data.omegas, tau);
            let mut m = DMatrix::zeros(d, 2 * p + 2);
            m.view_mut((0, 0), (d, 2 * p + 1)).copy_from(&e);
            compose_linear(h, &m)?
        }
    };
    scale_by_psi(&composed, &data.psi0, center)
}

/// `R`: sets every `w` slot to zero, mapping delay-layout polynomials to plain ones.
pub fn restrict_r(h: &Poly, d: usize, s: usize) -> Result<Poly> {
    let from = Layout::delay(d, s);
    if h.nvars() != from.nvars() {
        return Err(Error::DimensionMismatch { expected: from.nvars(), found: h.nvars() });
    }
    let to = Layout::plain(d, s);
    let mut out = Poly::zero(to.nvars());
    for (m, c) in h.terms() {
        if (0..d).any(|i| m.exponent(2 * i + 1) > 0) {
            continue;
        }
        out.add_term(restrict_monomial(m, d, s), *c);
    }
    Ok(out)
}

fn restrict_monomial(m: &Monomial, d: usize, s: usize) -> Monomial {
    let mut e: Vec<u32> = (0..d).map(|i| m.exponent(2 * i)).collect();
    e.extend((0..s).map(|k| m.exponent(2 * d + k)));
    Monomial::new(e)
}

/// Section of `R`: a plain polynomial read as a `w`-independent delay-layout one.
pub fn section_r(h: &Poly, d: usize, s: usize) -> Poly {
    let to = Layout::delay(d, s);
    Poly::from_terms(
        to.nvars(),
        h.terms().map(|(m, c)| {
            let mut e = vec![0u32; to.nvars()];
            for i in 0..d {
                e[2 * i] = m.exponent(i);
            }
            for k in 0..s {
                e[2 * d + k] = m.exponent(d + k);
            }
            (Monomial::new(e), *c)
        }),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct CompositeMatrix {
    pub flavor: LiftFlavor,
    pub degree: u32,
    pub p: usize,
    pub s: usize,
    pub d: usize,
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
    #[serde(skip)]
    pub domain: Vec<Monomial>,
    #[serde(skip)]
    pub target: Vec<(usize, Monomial)>,
    pub singular_values: Vec<f64>,
    /// `|M_ring - M_plain M_R| / |M_plain|`, for the ring flavor.
    pub factorization_residual: Option<f64>,
}

impl CompositeMatrix {
    /// Numerical rank with threshold `1e-12 max(m, n) sigma_max`.
    pub fn rank(&self) -> usize {
        rank_of(&self.singular_values, self.matrix.nrows(), self.matrix.ncols())
    }

    pub fn target_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_surjective(&self) -> bool {
        self.rank() == self.target_dim()
    }

    pub fn sigma_min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }
}

fn rank_of(sv: &[f64], m: usize, n: usize) -> usize {
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    linalg::rank_above(sv, 1e-12 * m.max(n) as f64 * smax)
}

fn domain_monomials(flavor: LiftFlavor, d: usize, s: usize, degree: u32, mu: Flavor) -> Vec<Monomial> {
    let layout = flavor.layout(d, s);
    let mut v: Vec<Monomial> = monomials_of_degree(layout.nvars(), degree)
        .into_iter()
        .filter(|m| mu.admits(&layout, m))
        .collect();
    v.sort();
    v
}

fn assemble(
    flavor: LiftFlavor,
    data: &SpectralData,
    tau: &[f64],
    degree: u32,
    s: usize,
    mu: Flavor,
) -> Result<(DMatrix<f64>, Vec<Monomial>, Vec<(usize, Monomial)>)> {
    let p = data.p();
    let d = tau.len();
    let layout = flavor.layout(d, s);
    let domain = domain_monomials(flavor, d, s, degree, mu);
    let target = radial_target_basis(p, s, degree, mu);
    let tindex = BasisIndex::new(target.clone());
    let mut m = DMatrix::<f64>::zeros(target.len(), domain.len());
    for (j, mono) in domain.iter().enumerate() {
        let h = Poly::monomial(mono.clone(), C64::new(1.0, 0.0));
        debug_assert_eq!(h.nvars(), layout.nvars());
        let f = lift(&h, flavor, data, tau)?;
        let avg = match flavor {
            LiftFlavor::Ring => project_a_ring(&f),
            LiftFlavor::Plain => project_a(&f),
        };
        let radial = radial_project(&avg.prune(0.0))?;
        for (i, c) in radial.coordinates(&tindex)?.iter().enumerate() {
            m[(i, j)] = c.re;
        }
    }
    Ok((m, domain, target))
}

/// Matrix of `R` from the ring domain onto the plain domain at one degree.
pub fn r_matrix(d: usize, s: usize, degree: u32, mu: Flavor) -> DMatrix<f64> {
    let ring = domain_monomials(LiftFlavor::Ring, d, s, degree, mu);
    let plain = domain_monomials(LiftFlavor::Plain, d, s, degree, mu);
    let mut m = DMatrix::zeros(plain.len(), ring.len());
    for (j, mono) in ring.iter().enumerate() {
        if (0..d).any(|i| mono.exponent(2 * i + 1) > 0) {
            continue;
        }
        let r = restrict_monomial(mono, d, s);
        let i = plain.binary_search(&r).expect("restriction lands in the plain domain");
        m[(i, j)] = 1.0;
    }
    m
}

pub fn composite_matrix(
    data: &SpectralData,
    tau: &[f64],
    degree: u32,
    s: usize,
    flavor: LiftFlavor,
) -> Result<CompositeMatrix> {
    composite_matrix_on(data, tau, degree, s, flavor, Flavor::Full)
}

/// Composite matrix restricted to the `mu`-flavor block of domain and target.
pub fn composite_matrix_on(
    data: &SpectralData,
    tau: &[f64],
    degree: u32,
    s: usize,
    flavor: LiftFlavor,
    mu: Flavor,
) -> Result<CompositeMatrix> {
    if degree < 2 {
        return Err(Error::InvalidSpace(format!("degree must be >= 2, got {degree}")));
    }
    for (i, &t) in tau.iter().enumerate() {
        if tau[..i].contains(&t) {
            return Err(Error::DuplicateDelay(t));
        }
    }
    let (matrix, domain, target) = assemble(flavor, data, tau, degree, s, mu)?;
    let factorization_residual = if flavor == LiftFlavor::Ring {
        let (plain, _, _) = assemble(LiftFlavor::Plain, data, tau, degree, s, mu)?;
        let r = r_matrix(tau.len(), s, degree, mu);
        let res = (&matrix - &plain * r).norm() / plain.norm().max(f64::MIN_POSITIVE);
        if res > FACTORIZATION_TOL {
            return Err(Error::Residual { residual: res, tolerance: FACTORIZATION_TOL });
        }
        Some(res)
    } else {
        None
    };
    let mut singular_values = linalg::singular_values(&matrix);
    singular_values.truncate(matrix.nrows().min(matrix.ncols()));
    Ok(CompositeMatrix {
        flavor,
        degree,
        p: data.p(),
        s,
        d: tau.len(),
        matrix,
        domain,
        target,
        singular_values,
        factorization_residual,
    })
}

/// Uniform delay tuples in `[-r, 0]^d` with pairwise separation at least `r / 100`.
pub fn sample_delays(r: f64, d: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sep = r / 100.0;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let tau: Vec<f64> = (0..d).map(|_| -r * rng.gen::<f64>()).collect();
        let ok = (0..d).all(|i| (0..i).all(|j| (tau[i] - tau[j]).abs() >= sep));
        if ok {
            out.push(tau);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct RankSample {
    pub index: usize,
    pub tau: Vec<f64>,
    pub degree: u32,
    pub rank: usize,
    pub target_dim: usize,
    pub sigma_min: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeSummary {
    pub degree: u32,
    pub samples: usize,
    pub surjective: usize,
    pub fraction: f64,
    /// Smallest `sigma_min` among the surjective samples.
    pub min_sigma_surjective: Option<f64>,
    pub target_dim: usize,
    pub domain_dim: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RankScanReport {
    pub p: usize,
    pub s: usize,
    pub d: usize,
    pub flavor: LiftFlavor,
    pub rows: Vec<RankSample>,
    pub summary: Vec<DegreeSummary>,
    /// Delay tuples excluded for repeated entries.
    pub degenerate: usize,
    /// First scanned degree at which every sample is rank deficient.
    pub structural_degree: Option<u32>,
}

pub fn rank_scan(
    data: &SpectralData,
    degrees: &[u32],
    s: usize,
    flavor: LiftFlavor,
    samples: &[Vec<f64>],
) -> Result<RankScanReport> {
    let d = samples.first().map_or(data.p() + 1, Vec::len);
    if samples.iter().any(|t| t.len() != d) {
        return Err(Error::InvalidSpace("all delay tuples must have the same length".into()));
    }
    let valid: Vec<(usize, &Vec<f64>)> = samples
        .iter()
        .enumerate()
        .filter(|(_, t)| (0..t.len()).all(|i| !t[..i].contains(&t[i])))
        .collect();
    let degenerate = samples.len() - valid.len();
    let jobs: Vec<(usize, &Vec<f64>, u32)> = valid
        .iter()
        .flat_map(|&(i, t)| degrees.iter().map(move |&l| (i, t, l)))
        .collect();
    let rows: Vec<RankSample> = jobs
        .par_iter()
        .map(|&(index, tau, degree)| {
            let cm = composite_matrix(data, tau, degree, s, flavor)?;
            Ok(RankSample {
                index,
                tau: tau.clone(),
                degree,
                rank: cm.rank(),
                target_dim: cm.target_dim(),
                sigma_min: cm.sigma_min(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = Vec::new();
    let mut structural_degree = None;
    for &l in degrees {
        let rs: Vec<&RankSample> = rows.iter().filter(|r| r.degree == l).collect();
        let surj: Vec<&&RankSample> = rs.iter().filter(|r| r.rank == r.target_dim).collect();
        let target_dim = radial_target_basis(data.p(), s, l, Flavor::Full).len();
        let domain_dim = domain_monomials(flavor, d, s, l, Flavor::Full).len();
        if !rs.is_empty() && surj.is_empty() && structural_degree.is_none() {
            structural_degree = Some(l);
        }
        summary.push(DegreeSummary {
            degree: l,
            samples: rs.len(),
            surjective: surj.len(),
            fraction: if rs.is_empty() { 0.0 } else { surj.len() as f64 / rs.len() as f64 },
            min_sigma_surjective: surj.iter().map(|r| r.sigma_min).reduce(f64::min),
            target_dim,
            domain_dim,
        });
    }
    Ok(RankScanReport { p: data.p(), s, d, flavor, rows, summary, degenerate, structural_degree })
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeResidual {
    pub degree: u32,
    pub residual: f64,
    pub rank: usize,
    pub target_dim: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RealizationResult {
    pub tau: Vec<f64>,
    /// `mu`-independent part of the realized nonlinearity, on the plain layout.
    #[serde(skip)]
    pub eta: Poly,
    /// Part vanishing at `mu = 0`.
    #[serde(skip)]
    pub xi: Poly,
    pub residuals: Vec<DegreeResidual>,
    /// Radial jet produced by the forward pipeline from the realized model.
    #[serde(skip)]
    pub realized: VectorPoly,
}

fn check_radial_target(target: &VectorPoly, p: usize, s: usize) -> Result<()> {
    let layout = target.layout();
    if layout != Layout::radial(p, s) || target.ncomp() != p + 1 {
        return Err(Error::InvalidSpace(format!(
            "target must be a radial jet with {} components on (rho0..rho{p}, mu1..mu{s})",
            p + 1
        )));
    }
    let max_deg = target.max_degree().unwrap_or(2);
    for l in 2..=max_deg.max(2) {
        let allowed = BasisIndex::new(radial_target_basis(p, s, l, Flavor::Full));
        for (k, m, c) in target.terms() {
            if m.degree() < 2 {
                return Err(Error::InvalidSpace(format!("target term of degree {} < 2", m.degree())));
            }
            if m.degree() == l && allowed.index_of(k, m).is_none() {
                return Err(Error::NotEquivariant { component: k, monomial: layout.format_monomial(m) });
            }
            if c.im != 0.0 {
                return Err(Error::InvalidSpace("radial targets must have real coefficients".into()));
            }
        }
    }
    Ok(())
}

/// Solves for the `mu`-block `unknown` of the nonlinearity, degree by degree, so the
/// forward radial jet matches `target` on that block; `fixed` is held as given.
fn solve_blocks(
    data: &SpectralData,
    base: &RfdeModel,
    target: &VectorPoly,
    unknown: Flavor,
    max_degree: u32,
) -> Result<(Poly, Vec<DegreeResidual>)> {
    let s = base.s;
    let tau = &base.delays;
    let layout = Layout::plain(tau.len(), s);
    let mut solved = Poly::zero(layout.nvars());
    let fixed = base.nonlinearity.filter(|m| !unknown.admits(&layout, m));
    let mut ranks = Vec::new();
    for l in 2..=max_degree {
        let cm = composite_matrix_on(data, tau, l, s, LiftFlavor::Plain, unknown)?;
        if !cm.is_surjective() {
            return Err(Error::RankDeficient(format!(
                "composite map at degree {l} has rank {} < {}; resample the delays",
                cm.rank(),
                cm.target_dim()
            )));
        }
        let tindex = BasisIndex::new(cm.target.clone());
        let want = target.homogeneous_part(l).filter_terms(|_, m| unknown.admits(&target.layout(), m));
        let scale = want.norm().max(1.0);
        // first pass solves, later passes refine against the recomputed forward jet
        for _ in 0..=REFINE_STEPS {
            let trial = base.with_nonlinearity(fixed.add(&solved));
            let current = forward_radial(&trial, data, l)?.homogeneous_part(l);
            let have = current.filter_terms(|_, m| unknown.admits(&current.layout(), m));
            let rhs: Vec<f64> = want
                .sub(&have)
                .prune(0.0)
                .coordinates(&tindex)?
                .iter()
                .map(|c| c.re)
                .collect();
            let rhs = DVector::from_vec(rhs);
            if rhs.norm() <= REFINE_TOL * scale {
                break;
            }
            let x = linalg::min_norm_solve(&cm.matrix, &rhs, 1e-12 * cm.matrix.nrows().max(cm.matrix.ncols()) as f64);
            // round-off dust is dropped; residuals below are recomputed from what is kept
            let dust = COEFF_DUST * rhs.amax().max(x.amax()).max(1.0);
            for (j, m) in cm.domain.iter().enumerate() {
                if x[j].abs() > dust {
                    solved.add_term(m.clone(), C64::new(x[j], 0.0));
                }
            }
        }
        ranks.push((l, cm.rank(), cm.target_dim()));
    }
    let model = base.with_nonlinearity(fixed.add(&solved));
    let realized = forward_radial(&model, data, max_degree)?;
    let mut residuals = Vec::new();
    for (l, rank, target_dim) in ranks {
        let want = target.homogeneous_part(l).filter_terms(|_, m| unknown.admits(&target.layout(), m));
        let have = realized.homogeneous_part(l).filter_terms(|_, m| unknown.admits(&realized.layout(), m));
        let residual = want.sub(&have).norm() / want.norm().max(1.0);
        if residual > ROUND_TRIP_TOL {
            return Err(Error::Residual { residual, tolerance: ROUND_TRIP_TOL });
        }
        residuals.push(DegreeResidual { degree: l, residual, rank, target_dim });
    }
    Ok((solved, residuals))
}

/// Nonlinearity `eta + xi` at the delays `tau` whose radial normal-form jet (through
/// degree `order`) equals `target`.
pub fn realize_jet(
    data: &SpectralData,
    kernel: &crate::spectral::DelayKernel,
    tau: &[f64],
    s: usize,
    order: u32,
    target: &VectorPoly,
) -> Result<RealizationResult> {
    let p = data.p();
    if tau.len() != p + 1 {
        return Err(Error::DimensionMismatch { expected: p + 1, found: tau.len() });
    }
    check_delays(tau, kernel.r)?;
    check_radial_target(target, p, s)?;
    if target.max_degree().map_or(false, |d| d > order) {
        return Err(Error::InvalidSpace(format!("target has terms above order {order}")));
    }
    let layout = Layout::plain(tau.len(), s);
    let base = RfdeModel::new(kernel.clone(), tau.to_vec(), s, order, Poly::zero(layout.nvars()))?;
    let (solved, residuals) = solve_blocks(data, &base, target, Flavor::Full, order)?;
    let (eta, xi) = crate::poly::split_parameter_scalar(&solved, &layout);
    let model = base.with_nonlinearity(solved);
    let realized = forward_radial(&model, data, order)?;
    Ok(RealizationResult { tau: tau.to_vec(), eta, xi, residuals, realized })
}

#[derive(Clone, Debug, Serialize)]
pub struct UnfoldingResult {
    #[serde(skip)]
    pub xi: Poly,
    pub residuals: Vec<DegreeResidual>,
    /// Largest deviation of the realized `mu = 0` slice from the base jet.
    pub slice_deviation: f64,
    /// Degree through which the parameter-dependent terms were matched.
    pub xi_order: u32,
    #[serde(skip)]
    pub realized: VectorPoly,
}

/// Parameter-dependent part `xi` realizing `target` on top of the base model's `eta`.
///
/// Terms of `target` vanishing at `mu = 0` are matched through degree `xi_order`
/// (at most the model order); the `mu = 0` slice must equal the base model's radial jet.
pub fn realize_unfolding(
    data: &SpectralData,
    base: &RfdeModel,
    target: &VectorPoly,
    xi_order: u32,
) -> Result<UnfoldingResult> {
    let p = data.p();
    if base.s == 0 {
        return Err(Error::Precondition("nothing to unfold: the model has no parameters".into()));
    }
    if base.delays.len() != p + 1 {
        return Err(Error::DimensionMismatch { expected: p + 1, found: base.delays.len() });
    }
    if xi_order < 2 || xi_order > base.order {
        return Err(Error::InvalidSpace(format!("xi order must lie in 2..={}", base.order)));
    }
    check_radial_target(target, p, base.s)?;
    let layout = Layout::plain(base.delays.len(), base.s);
    let eta_only = base.with_nonlinearity(base.nonlinearity.filter(|m| layout.mu_degree(m) == 0));
    let base_jet = forward_radial(&eta_only, data, base.order)?;
    let rl = target.layout();
    let slice_target = target.filter_terms(|_, m| rl.mu_degree(m) == 0);
    let slice_base = base_jet.filter_terms(|_, m| rl.mu_degree(m) == 0);
    let mismatch = slice_target.sub(&slice_base).max_abs();
    let scale = slice_base.max_abs().max(1.0);
    if mismatch > SLICE_TOL * scale {
        return Err(Error::Precondition(format!(
            "target at mu = 0 differs from the base model's radial jet by {mismatch:.3e}"
        )));
    }
    let (xi, residuals) = solve_blocks(data, &eta_only, target, Flavor::VanishingAtMu0, xi_order)?;
    let model = eta_only.with_nonlinearity(eta_only.nonlinearity.add(&xi));
    let realized = forward_radial(&model, data, base.order)?;
    let slice_deviation = realized
        .filter_terms(|_, m| rl.mu_degree(m) == 0)
        .sub(&slice_base)
        .max_abs();
    Ok(UnfoldingResult { xi, residuals, slice_deviation, xi_order, realized })
}

/// Coordinates of a scalar jet in the sorted monomial basis of one degree (real parts).
pub fn jet_coordinates(h: &Poly, layout: Layout, degree: u32) -> Vec<f64> {
    let mut basis = monomials_of_degree(layout.nvars(), degree);
    basis.sort();
    basis.iter().map(|m| h.coeff(m).re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal_form::GuckenheimerInput;
    use crate::spectral::{design_kernel, DelayKernel};

    fn setup1() -> (DelayKernel, SpectralData) {
        let k = design_kernel(&[1.0], &[0.0, -1.0, -2.0]).unwrap().kernel;
        let data = SpectralData::new(&k, &[1.0], 0.1).unwrap();
        (k, data)
    }

    fn setup2() -> (DelayKernel, SpectralData) {
        let w = [1.0, 2f64.sqrt()];
        let k = design_kernel(&w, &[0.0, -1.0, -2.0, -3.0, -4.0]).unwrap().kernel;
        let data = SpectralData::new(&k, &w, 0.1).unwrap();
        (k, data)
    }

    fn mono(e: &[u32]) -> Monomial {
        Monomial::new(e.to_vec())
    }

    fn one() -> C64 {
        C64::new(1.0, 0.0)
    }

    #[test]
    fn e_matrices() {
        let (_, data) = setup1();
        let (er, ep) = build_e_matrices(&data, &[0.0, -1.0]).unwrap();
        let expect = [[one(), one(), one()], [one(), C64::from_polar(1.0, -1.0), C64::from_polar(1.0, 1.0)]];
        for i in 0..2 {
            for j in 0..3 {
                assert!((ep[(i, j)] - expect[i][j]).norm() < 1e-15);
            }
        }
        assert_eq!(er.nrows(), 4);
        assert_eq!([er[(0, 0)], er[(0, 1)], er[(0, 2)], er[(0, 3)]], [one(), one(), one(), C64::new(0.0, 0.0)]);
        assert_eq!(er[(1, 3)], one());
        assert_eq!(er[(2, 3)], C64::new(-1.0, 0.0));
        assert!(matches!(build_e_matrices(&data, &[-1.0, -1.0]), Err(Error::DuplicateDelay(_))));
    }

    #[test]
    fn plain_lift_expands_the_square() {
        let (_, data) = setup1();
        let h = Poly::monomial(mono(&[2, 0]), one());
        let f = lift(&h, LiftFlavor::Plain, &data, &[0.0, -1.0]).unwrap();
        // oracle: u0 (x0 + x1 + xb1)^2 evaluated at a few points
        for pt in [[0.3, -0.2, 0.5, 0.0], [1.0, 2.0, -1.0, 0.7]] {
            let x: Vec<C64> = pt.iter().map(|&v| C64::new(v, 0.1 * v)).collect();
            let s = x[0] + x[1] + x[2];
            assert!((f.component(0).eval(&x) - data.psi0[0] * s * s).norm() < 1e-13);
            assert!((f.component(1).eval(&x) - data.psi0[1] * s * s).norm() < 1e-13);
        }
        assert!(lift(&Poly::zero(2), LiftFlavor::Plain, &data, &[0.0, -1.0]).unwrap().is_zero());
    }

    #[test]
    fn ring_lift_of_section_averages_like_plain_lift() {
        let (_, data) = setup1();
        let tau = [-0.4, -1.7];
        for e in [[2u32, 0, 0], [1, 1, 0], [0, 3, 0], [1, 0, 1], [1, 1, 1]] {
            let h = Poly::monomial(mono(&e), one());
            let plain = project_a(&lift(&h, LiftFlavor::Plain, &data, &tau).unwrap());
            let ring = project_a_ring(&lift(&section_r(&h, 2, 1), LiftFlavor::Ring, &data, &tau).unwrap());
            assert!(plain.sub(&ring).max_abs() < 1e-13);
        }
    }

    #[test]
    fn restriction_examples() {
        let vw = Poly::monomial(mono(&[1, 1, 0, 0]), one());
        assert!(restrict_r(&vw, 2, 0).unwrap().is_empty());
        let vv = Poly::monomial(mono(&[1, 0, 1, 0]), one());
        assert_eq!(restrict_r(&vv, 2, 0).unwrap(), Poly::monomial(mono(&[1, 1]), one()));
        let plain = Poly::monomial(mono(&[2, 1, 1]), one());
        assert_eq!(restrict_r(&section_r(&plain, 2, 1), 2, 1).unwrap(), plain);
    }

    #[test]
    fn composite_dimensions_and_factorization() {
        let (_, data) = setup1();
        let cm = composite_matrix(&data, &[-0.3, -1.1], 2, 0, LiftFlavor::Plain).unwrap();
        assert_eq!((cm.matrix.nrows(), cm.matrix.ncols()), (3, 3));
        assert!(cm.is_surjective());
        let cm = composite_matrix(&data, &[-0.3, -1.1], 3, 0, LiftFlavor::Plain).unwrap();
        assert_eq!((cm.matrix.nrows(), cm.matrix.ncols()), (4, 4));
        let ring = composite_matrix(&data, &[-0.3, -1.1], 3, 1, LiftFlavor::Ring).unwrap();
        assert!(ring.factorization_residual.unwrap() <= FACTORIZATION_TOL);
        let (_, data2) = setup2();
        let ring = composite_matrix(&data2, &[-0.3, -1.1, -2.9], 2, 0, LiftFlavor::Ring).unwrap();
        assert!(ring.factorization_residual.unwrap() <= FACTORIZATION_TOL);
    }

    #[test]
    fn composite_entries_match_hand_expansion() {
        // degree 2, p = 1: column v0^2 -> (u0, 2 u0, 2 Re(u1 e^{i tau1})) on (rho0^2, rho1^2 | rho0 rho1)
        let (_, data) = setup1();
        let tau = [-0.3, -1.1];
        let cm = composite_matrix(&data, &tau, 2, 0, LiftFlavor::Plain).unwrap();
        let (u0, u1) = (data.psi0[0].re, data.psi0[1]);
        let col = cm.domain.iter().position(|m| *m == mono(&[2, 0])).unwrap();
        let row = |k: usize, e: &[u32]| cm.target.iter().position(|(kk, m)| *kk == k && *m == mono(e)).unwrap();
        assert!((cm.matrix[(row(0, &[2, 0]), col)] - u0).abs() < 1e-14);
        assert!((cm.matrix[(row(0, &[0, 2]), col)] - 2.0 * u0).abs() < 1e-14);
        let b = (u1 * C64::from_polar(2.0, tau[0])).re;
        assert!((cm.matrix[(row(1, &[1, 1]), col)] - b).abs() < 1e-14);
    }

    #[test]
    fn rank_scan_examples() {
        let (_, data) = setup1();
        let samples = sample_delays(2.0, 2, 40, 7);
        let rep = rank_scan(&data, &[2, 3], 0, LiftFlavor::Plain, &samples).unwrap();
        assert!(rep.summary.iter().all(|s| s.fraction >= 0.95));
        assert_eq!(rep.structural_degree, None);

        let single = sample_delays(2.0, 1, 20, 7);
        let rep = rank_scan(&data, &[2], 0, LiftFlavor::Plain, &single).unwrap();
        assert!(rep.rows.iter().all(|r| r.rank <= 1 && r.target_dim == 3));
        assert_eq!(rep.structural_degree, Some(2));

        let degenerate = vec![vec![-1.0, -1.0], vec![-0.5, -1.5]];
        let rep = rank_scan(&data, &[2], 0, LiftFlavor::Plain, &degenerate).unwrap();
        assert_eq!(rep.degenerate, 1);
        assert_eq!(rep.rows.len(), 1);

        // determinism of sampling
        assert_eq!(sample_delays(2.0, 2, 5, 11), sample_delays(2.0, 2, 5, 11));
        for t in sample_delays(2.0, 3, 50, 3) {
            assert!(t.iter().all(|&x| (-2.0..=0.0).contains(&x)));
            assert!((t[0] - t[1]).abs() >= 0.02 && (t[0] - t[2]).abs() >= 0.02 && (t[1] - t[2]).abs() >= 0.02);
        }
    }

    #[test]
    fn realize_quadratic_target_against_direct_solve() {
        let (k, data) = setup1();
        let tau = [-0.4, -1.3];
        let layout = Layout::radial(1, 0);
        let mut target = VectorPoly::zero(layout, 2);
        target.component_mut(0).add_term(mono(&[2, 0]), one());
        target.component_mut(1).add_term(mono(&[1, 1]), one());
        let res = realize_jet(&data, &k, &tau, 0, 2, &target).unwrap();
        assert!(res.residuals.iter().all(|r| r.residual <= 1e-9));
        assert!(res.xi.is_empty());
        // 3x3 oracle on (A20, A11, A02) from the closed forms
        let (u0, u1) = (data.psi0[0].re, data.psi0[1]);
        let e1 = C64::from_polar(1.0, tau[0]);
        let e2 = C64::from_polar(1.0, tau[1]);
        let a = nalgebra::Matrix3::new(
            u0, u0, u0,
            2.0 * u0, 2.0 * u0 * (tau[0] - tau[1]).cos(), 2.0 * u0,
            (u1 * 2.0 * e1).re, (u1 * (e1 + e2)).re, (u1 * 2.0 * e2).re,
        );
        let x = a.lu().solve(&nalgebra::Vector3::new(1.0, 0.0, 1.0)).unwrap();
        let got = [res.eta.coeff(&mono(&[2, 0])).re, res.eta.coeff(&mono(&[1, 1])).re, res.eta.coeff(&mono(&[0, 2])).re];
        for i in 0..3 {
            assert!((got[i] - x[i]).abs() < 1e-10, "{got:?} vs {x:?}");
        }
    }

    #[test]
    fn realize_zero_and_parameter_targets() {
        let (k, data) = setup1();
        let tau = [-0.4, -1.3];
        let zero = VectorPoly::zero(Layout::radial(1, 1), 2);
        let res = realize_jet(&data, &k, &tau, 1, 3, &zero).unwrap();
        assert!(res.eta.is_empty() && res.xi.is_empty());

        let mut q = VectorPoly::zero(Layout::radial(1, 1), 2);
        q.component_mut(1).add_term(mono(&[0, 1, 1]), one());
        let res = realize_jet(&data, &k, &tau, 1, 3, &q).unwrap();
        assert!(res.eta.is_empty());
        assert!(!res.xi.is_empty());
        assert!(res.residuals.iter().all(|r| r.residual <= 1e-9));

        let bad = VectorPoly::unit(Layout::radial(1, 0), 2, 0, mono(&[1, 1]), one());
        assert!(matches!(realize_jet(&data, &k, &tau, 0, 2, &bad), Err(Error::NotEquivariant { .. })));
        let target = VectorPoly::unit(Layout::radial(1, 0), 2, 0, mono(&[2, 0]), one());
        assert!(realize_jet(&data, &k, &[-0.4, -0.4], 0, 2, &target).is_err());
    }

    #[test]
    fn unfolding_examples() {
        let (k, data) = setup1();
        let tau = vec![-0.4, -1.3];
        let g = GuckenheimerInput { a20: 0.5, a11: -0.2, a02: 0.9, a30: 0.1, a21: 0.0, a12: -0.3, a03: 0.2 };
        let nl = g.nonlinearity();
        let base0 = RfdeModel::new(k.clone(), tau.clone(), 0, 3, nl.clone()).unwrap();
        let lifted = Poly::from_terms(3, nl.terms().map(|(m, c)| (mono(&[m.exponent(0), m.exponent(1), 0]), *c)));
        let base = RfdeModel::new(k.clone(), tau.clone(), 1, 3, lifted).unwrap();
        let jet = forward_radial(&base, &data, 3).unwrap();

        let same = realize_unfolding(&data, &base, &jet, 3).unwrap();
        assert!(same.xi.is_empty());

        assert!(matches!(realize_unfolding(&data, &base0, &forward_radial(&base0, &data, 3).unwrap(), 3), Err(Error::Precondition(_))));

        let mut off = jet.clone();
        off.component_mut(0).add_term(mono(&[2, 0, 0]), C64::new(1e-3, 0.0));
        assert!(matches!(realize_unfolding(&data, &base, &off, 3), Err(Error::Precondition(_))));

        // add mu rho1 to rho1': degree-two part of xi is mu (A10 v0 + A01 v1)
        let mut target = jet.clone();
        target.component_mut(1).add_term(mono(&[0, 1, 1]), one());
        let res = realize_unfolding(&data, &base, &target, 2).unwrap();
        assert!(res.slice_deviation <= 1e-10);
        let (u0, u1) = (data.psi0[0].re, data.psi0[1]);
        let a = nalgebra::Matrix2::new(
            u0, u0,
            (u1 * C64::from_polar(1.0, tau[0])).re, (u1 * C64::from_polar(1.0, tau[1])).re,
        );
        let x = a.lu().solve(&nalgebra::Vector2::new(0.0, 1.0)).unwrap();
        assert!((res.xi.coeff(&mono(&[1, 0, 1])).re - x[0]).abs() < 1e-10);
        assert!((res.xi.coeff(&mono(&[0, 1, 1])).re - x[1]).abs() < 1e-10);
        assert_eq!(res.xi.len(), 2);
    }
}
