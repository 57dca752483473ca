//! Center-manifold ODE of a scalar delay model and its torus-equivariant normal form.
//!
//! The reduced system is `x' = B x + nu e0 + f(x, nu, mu)` on `(x0; x1, conj x1; ...)`,
//! with `f = Psi(0) F(slots)` where each delay slot `z(t + tau_i)` is evaluated on the
//! center basis at `tau_i`. Coefficients are stored with factorials absorbed: `f` is the
//! plain polynomial, never `sum f_j / j!`.
//!
//! Near-identity changes `x = y + U_j(y)` remove `(I - A)` of each degree in turn.
//! Only the finite-dimensional part of the transformation is carried, so degrees
//! three and up are the ODE-reduction normal form; degree two is exact.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::homological::solve_homological;
use crate::poly::{check_reality, Layout, Monomial, Poly, VarKind, VectorPoly, C64};
use crate::realize::{check_delays, slot_matrix};
use crate::spectral::{DelayKernel, SpectralData};
use crate::symmetry::{angular_extract, project_a_ring, radial_project};

/// `z'(t) = L0 z_t + nu + F(z(t + tau_1), ..., z(t + tau_d), mu)`.
#[derive(Clone, Debug)]
pub struct RfdeModel {
    pub kernel: DelayKernel,
    pub delays: Vec<f64>,
    pub s: usize,
    pub order: u32,
    /// `F` on the plain layout `(v0, ..., v_{d-1}, mu1, ..., mu_s)`, `v_i = z(t + tau_i)`.
    pub nonlinearity: Poly,
}

impl RfdeModel {
    pub fn new(kernel: DelayKernel, delays: Vec<f64>, s: usize, order: u32, nonlinearity: Poly) -> Result<Self> {
        check_delays(&delays, kernel.r)?;
        if order < 2 {
            return Err(Error::InvalidSpace(format!("order must be >= 2, got {order}")));
        }
        let layout = Layout::plain(delays.len(), s);
        if nonlinearity.nvars() != layout.nvars() {
            return Err(Error::DimensionMismatch { expected: layout.nvars(), found: nonlinearity.nvars() });
        }
        for (m, c) in nonlinearity.terms() {
            if m.degree() < 2 {
                return Err(Error::Hypothesis(format!(
                    "nonlinearity term {} has degree {} < 2",
                    layout.format_monomial(m),
                    m.degree()
                )));
            }
            if c.im != 0.0 {
                return Err(Error::InvalidSpace("nonlinearity coefficients must be real".into()));
            }
        }
        Ok(RfdeModel { kernel, delays, s, order, nonlinearity })
    }

    pub fn layout(&self) -> Layout {
        Layout::plain(self.delays.len(), self.s)
    }

    /// Same linear part and delays with a different nonlinearity.
    pub fn with_nonlinearity(&self, nonlinearity: Poly) -> RfdeModel {
        RfdeModel { nonlinearity, ..self.clone() }
    }

    /// `mu`-independent part.
    pub fn eta(&self) -> Poly {
        let l = self.layout();
        self.nonlinearity.filter(|m| l.mu_degree(m) == 0)
    }

    /// Part vanishing at `mu = 0`.
    pub fn xi(&self) -> Poly {
        let l = self.layout();
        self.nonlinearity.filter(|m| l.mu_degree(m) > 0)
    }
}

/// Reduced ODE jet `f` (degrees `2..=order`) on the center layout.
#[derive(Clone, Debug)]
pub struct OdeJet {
    pub omegas: Vec<f64>,
    pub order: u32,
    pub f: VectorPoly,
}

impl OdeJet {
    /// Parameter-free part `h` and the part `q` vanishing at `mu = 0`.
    pub fn split(&self) -> (VectorPoly, VectorPoly) {
        crate::poly::split_parameter(&self.f)
    }
}

pub fn reduce_to_ode(model: &RfdeModel, data: &SpectralData) -> Result<OdeJet> {
    reduce_to_order(model, data, model.order)
}

fn reduce_to_order(model: &RfdeModel, data: &SpectralData, order: u32) -> Result<OdeJet> {
    let p = data.p();
    let layout = Layout::center(p, model.s);
    let slots = slot_matrix(&data.omegas, &model.delays);
    let f = model.nonlinearity.truncate(order);
    let scalar = crate::poly::compose_linear(&f, &slots)?;
    let comps = data.psi0.iter().map(|&u| scalar.scale(u)).collect();
    let f = VectorPoly::from_components(layout, comps)?;
    Ok(OdeJet { omegas: data.omegas.clone(), order, f })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NfMode {
    /// Only the center-manifold (finite-dimensional) part of each change of variables.
    OdeReduction,
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeStep {
    pub degree: u32,
    /// Equivariant terms kept at this degree.
    #[serde(skip)]
    pub g: VectorPoly,
    /// Terms induced at this degree by the earlier changes of variables (`Y_j + Z_j`).
    #[serde(skip)]
    pub corrections: VectorPoly,
    /// Generator `U_j` of the change `x = y + U_j(y)`.
    #[serde(skip)]
    pub transform: VectorPoly,
    pub homological_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalFormOutput {
    pub order: u32,
    pub mode: NfMode,
    /// True when the result coincides with the full normal form (order 2).
    pub exact: bool,
    pub omegas: Vec<f64>,
    pub steps: Vec<DegreeStep>,
}

impl NormalFormOutput {
    /// `sum_j g_j`.
    pub fn field(&self) -> VectorPoly {
        let mut it = self.steps.iter();
        let first = it.next().expect("at least one degree").g.clone();
        it.fold(first, |acc, s| acc.add(&s.g))
    }
}

/// `Bv` for the diagonal center matrix `B = diag(0, i w1, -i w1, ...)`.
fn apply_b(v: &VectorPoly, omegas: &[f64]) -> VectorPoly {
    let mut out = v.clone();
    for (j, &w) in omegas.iter().enumerate() {
        *out.component_mut(2 * j + 1) = v.component(2 * j + 1).scale(C64::new(0.0, w));
        *out.component_mut(2 * j + 2) = v.component(2 * j + 2).scale(C64::new(0.0, -w));
    }
    *out.component_mut(0) = Poly::zero(v.layout().nvars());
    out
}

/// `(DU . V)_k = sum_i dU_k/dy_i V_i` over the state variables `y`.
fn jacobian_times(u: &VectorPoly, v: &VectorPoly, max_degree: u32) -> VectorPoly {
    let n = u.ncomp();
    u.map(|uk| {
        let mut acc = Poly::zero(uk.nvars());
        for i in 0..n {
            let d = uk.derivative(i);
            if !d.is_empty() && !v.component(i).is_empty() {
                acc = acc.add(&d.mul_truncated(v.component(i), Some(max_degree)));
            }
        }
        acc
    })
}

/// Linear part `B y + nu e0`.
fn linear_part(layout: Layout, omegas: &[f64]) -> VectorPoly {
    let n = layout.nvars();
    let p = omegas.len();
    let mut lin = VectorPoly::zero(layout, 2 * p + 1);
    *lin.component_mut(0) = Poly::var(n, layout.nu_index().unwrap());
    for (j, &w) in omegas.iter().enumerate() {
        *lin.component_mut(2 * j + 1) = Poly::var(n, 2 * j + 1).scale(C64::new(0.0, w));
        *lin.component_mut(2 * j + 2) = Poly::var(n, 2 * j + 2).scale(C64::new(0.0, -w));
    }
    lin
}

/// Nonlinear part after `x = y + U(y)`: `(I + DU)^{-1} [B(y + U) + nu e0 + f(y + U)] - (B y + nu e0)`,
/// truncated at total degree `order`.
pub fn transform_field(f: &VectorPoly, u: &VectorPoly, omegas: &[f64], order: u32) -> Result<VectorPoly> {
    let layout = f.layout();
    let n = layout.nvars();
    let ns = f.ncomp();
    let subs: Vec<Poly> = (0..n)
        .map(|i| {
            let v = Poly::var(n, i);
            if i < ns {
                v.add(u.component(i))
            } else {
                v
            }
        })
        .collect();
    let fsub = f.components().iter().map(|c| c.substitute(&subs, Some(order))).collect::<Result<Vec<_>>>()?;
    let lin = linear_part(layout, omegas);
    let w = VectorPoly::from_components(layout, fsub)?.add(&lin).add(&apply_b(u, omegas)).truncate(order);
    let mut y = w.clone();
    let mut term = w;
    loop {
        term = jacobian_times(u, &term, order).scale(C64::new(-1.0, 0.0));
        if term.is_zero() {
            break;
        }
        y = y.add(&term);
    }
    Ok(y.sub(&lin))
}

fn audit_reality(f: &VectorPoly, degree: u32) -> Result<()> {
    let report = check_reality(f)?;
    if !report.real {
        return Err(Error::Numerical(format!("reality lost at degree {degree}: {:?}", report.violation)));
    }
    Ok(())
}

pub fn normal_form(jet: &OdeJet, order: u32) -> Result<NormalFormOutput> {
    let layout = jet.f.layout();
    if layout.kind != VarKind::Center || jet.f.ncomp() != 2 * layout.n + 1 {
        return Err(Error::InvalidSpace("normal form expects a center-layout field".into()));
    }
    if order < 2 {
        return Err(Error::InvalidSpace(format!("order must be >= 2, got {order}")));
    }
    if jet.f.terms().any(|(_, m, _)| m.degree() < 2) {
        return Err(Error::Hypothesis("reduced field has terms of degree < 2".into()));
    }
    let omegas = &jet.omegas;
    let original = jet.f.truncate(order);
    let mut field = original.clone();
    let mut steps = Vec::new();
    for l in 2..=order {
        let total = field.homogeneous_part(l);
        let corrections = total.sub(&original.homogeneous_part(l));
        let g = project_a_ring(&total);
        let rest = total.sub(&g);
        let (u, residual) = solve_homological(&rest, omegas)?;
        if !u.is_zero() {
            field = transform_field(&field, &u, omegas, order)?;
        }
        // degree l now equals g up to roundoff; pin it exactly
        let drift = field.homogeneous_part(l).sub(&g).max_abs();
        let tol = 1e-9 * total.max_abs().max(1.0);
        if drift > tol {
            return Err(Error::Residual { residual: drift, tolerance: tol });
        }
        field = field.filter_terms(|_, m| m.degree() != l).add(&g);
        audit_reality(&field, l)?;
        steps.push(DegreeStep { degree: l, g, corrections, transform: u, homological_residual: residual });
    }
    Ok(NormalFormOutput { order, mode: NfMode::OdeReduction, exact: order <= 2, omegas: omegas.clone(), steps })
}

/// Decoupled polar system `rho0' = nu + a0`, `rhoj' = rhoj aj`, `thetaj' = omegaj + bj`.
#[derive(Clone, Debug, Serialize)]
pub struct PolarSystem {
    #[serde(skip)]
    pub radial: VectorPoly,
    #[serde(skip)]
    pub angular: VectorPoly,
    pub omegas: Vec<f64>,
    /// Coefficient of the constant `nu` in `rho0'`.
    pub nu_coefficient: f64,
}

pub fn polar_decouple(nf: &NormalFormOutput) -> Result<PolarSystem> {
    let g = nf.field();
    Ok(PolarSystem {
        radial: radial_project(&g)?,
        angular: angular_extract(&g)?,
        omegas: nf.omegas.clone(),
        nu_coefficient: 1.0,
    })
}

/// Full forward pipeline: radial jet of the model through degree `order`.
pub fn forward_radial(model: &RfdeModel, data: &SpectralData, order: u32) -> Result<VectorPoly> {
    let jet = reduce_to_order(model, data, order)?;
    let nf = normal_form(&jet, order)?;
    Ok(polar_decouple(&nf)?.radial)
}

/// Coefficients of the quadratic/cubic delayed nonlinearity in `z(t + tau1)`, `z(t + tau2)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, serde::Deserialize)]
pub struct GuckenheimerInput {
    pub a20: f64,
    pub a11: f64,
    pub a02: f64,
    pub a30: f64,
    pub a21: f64,
    pub a12: f64,
    pub a03: f64,
}

impl GuckenheimerInput {
    pub fn nonlinearity(&self) -> Poly {
        let m = |a: u32, b: u32| Monomial::new(vec![a, b]);
        let c = |x: f64| C64::new(x, 0.0);
        Poly::from_terms(
            2,
            [
                (m(2, 0), c(self.a20)),
                (m(1, 1), c(self.a11)),
                (m(0, 2), c(self.a02)),
                (m(3, 0), c(self.a30)),
                (m(2, 1), c(self.a21)),
                (m(1, 2), c(self.a12)),
                (m(0, 3), c(self.a03)),
            ],
        )
    }
}

/// `rho0' = nu + a1 rho0^2 + a2 rho1^2 + a3 rho0^3 + a4 rho0 rho1^2`,
/// `rho1' = b1 rho0 rho1 + b2 rho1^3 + b3 rho1 rho0^2`.
#[derive(Clone, Debug, Serialize)]
pub struct GuckenheimerNormalForm {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub mode: NfMode,
    pub polar: PolarSystem,
}

pub fn guckenheimer_example(a: &GuckenheimerInput, tau: (f64, f64), data: &SpectralData, kernel: &DelayKernel) -> Result<GuckenheimerNormalForm> {
    if data.p() != 1 {
        return Err(Error::Precondition("the saddle-node/Hopf example needs exactly one Hopf pair".into()));
    }
    let model = RfdeModel::new(kernel.clone(), vec![tau.0, tau.1], 0, 3, a.nonlinearity())?;
    let jet = reduce_to_ode(&model, data)?;
    let nf = normal_form(&jet, 3)?;
    let polar = polar_decouple(&nf)?;
    let r = |k: usize, e: [u32; 2]| polar.radial.component(k).coeff(&Monomial::new(e.to_vec())).re;
    Ok(GuckenheimerNormalForm {
        a1: r(0, [2, 0]),
        a2: r(0, [0, 2]),
        a3: r(0, [3, 0]),
        a4: r(0, [1, 2]),
        b1: r(1, [1, 1]),
        b2: r(1, [0, 3]),
        b3: r(1, [2, 1]),
        mode: nf.mode,
        polar,
    })
}
