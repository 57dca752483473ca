//! Scalar discrete-delay linear parts `z' = sum_i w_i z(t + theta_i)`.
//!
//! Characteristic function `Delta(l) = l - sum w_i e^{l theta_i}`, imaginary-axis
//! root scans, the spectral hypothesis audit, and the dual basis at zero.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::C64;

/// Simplicity threshold on `|Delta'|`.
pub const SIMPLICITY_TOL: f64 = 1e-8;
/// Tolerance of the integer-relation scan.
pub const RELATION_TOL: f64 = 1e-8;
/// Default maximal height of the integer-relation scan.
pub const DEFAULT_R_MAX: u32 = 12;
/// Roots with `|Re| <= AXIS_TOL` are reported as lying on the imaginary axis.
pub const AXIS_TOL: f64 = 1e-8;
/// Placements with a worse condition number are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub theta: f64,
    pub weight: f64,
}

/// Finite atomic measure `d eta = sum weight_i delta(theta - theta_i)` on `[-r, 0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernel")]
pub struct DelayKernel {
    pub r: f64,
    pub atoms: Vec<Atom>,
}

#[derive(Deserialize)]
struct RawKernel {
    r: f64,
    atoms: Vec<Atom>,
}

impl TryFrom<RawKernel> for DelayKernel {
    type Error = Error;
    fn try_from(raw: RawKernel) -> Result<Self> {
        DelayKernel::new(raw.r, raw.atoms)
    }
}

impl DelayKernel {
    pub fn new(r: f64, atoms: Vec<Atom>) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidSpace(format!("history length must be positive, got {r}")));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidSpace("kernel needs at least one atom".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.theta <= 0.0 && a.theta >= -r) || !a.weight.is_finite() {
                return Err(Error::InvalidSpace(format!("atom at {} lies outside [-{r}, 0]", a.theta)));
            }
            if atoms[..i].iter().any(|b| b.theta == a.theta) {
                return Err(Error::DuplicateDelay(a.theta));
            }
        }
        Ok(DelayKernel { r, atoms })
    }

    pub fn char_value(&self, l: C64) -> C64 {
        l - self.atoms.iter().map(|a| a.weight * (l * a.theta).exp()).sum::<C64>()
    }

    pub fn char_derivative(&self, l: C64) -> C64 {
        C64::new(1.0, 0.0) - self.atoms.iter().map(|a| a.weight * a.theta * (l * a.theta).exp()).sum::<C64>()
    }

    /// `L0 phi` for a history segment evaluated at the atoms.
    pub fn apply<F: Fn(f64) -> C64>(&self, phi: F) -> C64 {
        self.atoms.iter().map(|a| a.weight * phi(a.theta)).sum()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelDesign {
    pub kernel: DelayKernel,
    pub condition: f64,
    /// `max |Delta|` over the placed roots.
    pub residual: f64,
}

/// Weights at the given delay points placing roots exactly at `0` and `+-i omega_j`.
pub fn design_kernel(omegas: &[f64], delays: &[f64]) -> Result<KernelDesign> {
    let p = omegas.len();
    let n = 2 * p + 1;
    if delays.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: delays.len() });
    }
    for (i, &t) in delays.iter().enumerate() {
        if t > 0.0 || !t.is_finite() {
            return Err(Error::InvalidSpace(format!("delay point {t} must be <= 0")));
        }
        if delays[..i].contains(&t) {
            return Err(Error::DuplicateDelay(t));
        }
    }
    if omegas.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidSpace("frequencies must be positive".into()));
    }
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (i, &t) in delays.iter().enumerate() {
        a[(0, i)] = 1.0;
        for (j, &w) in omegas.iter().enumerate() {
            a[(1 + 2 * j, i)] = (w * t).cos();
            a[(2 + 2 * j, i)] = (w * t).sin();
        }
    }
    for (j, &w) in omegas.iter().enumerate() {
        b[2 + 2 * j] = w;
    }
    let condition = linalg::condition_number(&a);
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularPlacement { condition });
    }
    let weights = a.lu().solve(&b).ok_or(Error::SingularPlacement { condition })?;
    let r = delays.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let r = if r > 0.0 { r } else { 1.0 };
    let atoms = delays.iter().zip(weights.iter()).map(|(&theta, &weight)| Atom { theta, weight }).collect();
    let kernel = DelayKernel::new(r, atoms)?;
    let mut residual = kernel.char_value(C64::new(0.0, 0.0)).norm();
    for &w in omegas {
        residual = residual.max(kernel.char_value(C64::new(0.0, w)).norm());
    }
    Ok(KernelDesign { kernel, condition, residual })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Half-width of the scanned strip `|Re l| <= re_half_width`.
    pub re_half_width: f64,
    /// Height of the scanned strip `|Im l| <= im_half_height`.
    pub im_half_height: f64,
    /// Newton seed spacing.
    pub grid: f64,
}

impl ScanOptions {
    /// Default window for the given frequencies: `|Re| <= 1`, `|Im| <= 3 max omega`.
    pub fn for_omegas(omegas: &[f64]) -> Self {
        let wmax = omegas.iter().copied().fold(0.0, f64::max);
        ScanOptions { re_half_width: 1.0, im_half_height: (3.0 * wmax).max(1.0), grid: 0.1 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RectangleCount {
    pub re_lo: f64,
    pub re_hi: f64,
    pub im_lo: f64,
    pub im_hi: f64,
    pub winding: i64,
    pub harvested: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RootScan {
    pub axis_roots: Vec<C64>,
    pub other_roots: Vec<C64>,
    /// Smallest `|Re|` among the off-axis roots of the window, or the window half-width.
    pub margin: f64,
    pub rectangles: Vec<RectangleCount>,
    pub options: ScanOptions,
}

fn newton(k: &DelayKernel, mut l: C64) -> Option<C64> {
    for _ in 0..60 {
        let d = k.char_value(l);
        let dp = k.char_derivative(l);
        if dp.norm() == 0.0 {
            return None;
        }
        let step = d / dp;
        l -= step;
        if !l.re.is_finite() || !l.im.is_finite() || l.norm() > 1e6 {
            return None;
        }
        if step.norm() <= 1e-14 * l.norm().max(1.0) {
            break;
        }
    }
    let scale = 1.0 + l.norm() + k.atoms.iter().map(|a| a.weight.abs() * (l.re * a.theta).exp()).sum::<f64>();
    (k.char_value(l).norm() <= 1e-10 * scale).then_some(l)
}

/// Argument change of `Delta` along a segment, subdividing where the phase moves fast.
fn arg_change(k: &DelayKernel, a: C64, b: C64, fa: C64, fb: C64, depth: u32) -> Option<f64> {
    let d = (fb / fa).arg();
    if d.abs() < 0.3 || depth == 0 {
        return (d.abs() < 0.3).then_some(d);
    }
    let m = (a + b) * 0.5;
    let fm = k.char_value(m);
    if fm.norm() == 0.0 {
        return None;
    }
    Some(arg_change(k, a, m, fa, fm, depth - 1)? + arg_change(k, m, b, fm, fb, depth - 1)?)
}

/// Number of zeros inside the rectangle, or `None` if the boundary passes (nearly) through one.
fn winding(k: &DelayKernel, re: (f64, f64), im: (f64, f64)) -> Option<i64> {
    let corners = [
        C64::new(re.0, im.0),
        C64::new(re.1, im.0),
        C64::new(re.1, im.1),
        C64::new(re.0, im.1),
    ];
    let mut total = 0.0;
    for e in 0..4 {
        let (a, b) = (corners[e], corners[(e + 1) % 4]);
        let n = (((b - a).norm() / 0.02).ceil() as usize).max(8);
        let mut prev = a;
        let mut fprev = k.char_value(a);
        for i in 1..=n {
            let z = a + (b - a) * (i as f64 / n as f64);
            let fz = k.char_value(z);
            let scale = 1.0 + z.norm();
            if fz.norm() < 1e-9 * scale || fprev.norm() < 1e-9 * scale {
                return None;
            }
            total += arg_change(k, prev, z, fprev, fz, 30)?;
            prev = z;
            fprev = fz;
        }
    }
    Some((total / (2.0 * std::f64::consts::PI)).round() as i64)
}

/// Roots in the window `|Re| <= d`, `|Im| <= W`, by grid-seeded Newton, cross-checked
/// against the argument principle on horizontal strips of the window.
pub fn find_imaginary_roots(k: &DelayKernel, options: ScanOptions) -> Result<RootScan> {
    let mut grid = options.grid;
    let mut last_err = None;
    for _ in 0..4 {
        match scan_once(k, options, grid) {
            Ok(scan) => return Ok(scan),
            Err(e @ Error::RootCountMismatch { .. }) => {
                last_err = Some(e);
                grid *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

fn scan_once(k: &DelayKernel, options: ScanOptions, grid: f64) -> Result<RootScan> {
    let d = options.re_half_width;
    let w = options.im_half_height;
    if !(d > 0.0 && w > 0.0 && grid > 0.0) {
        return Err(Error::InvalidSpace("scan window must be non-degenerate".into()));
    }
    // strip edges; nudged off any root that sits exactly on them
    let nstrips = ((2.0 * w).ceil() as usize).max(1);
    let mut edges: Vec<f64> = (0..=nstrips).map(|i| -w + 2.0 * w * i as f64 / nstrips as f64).collect();
    let mut re = (-d, d);
    let rects: Vec<(usize, (f64, f64), (f64, f64), i64)> = {
        let mut out = Vec::new();
        'outer: for attempt in 0..12 {
            let nudge = 1e-3 * attempt as f64 * 0.618_033_988_75;
            re = (-d * (1.0 + nudge), d * (1.0 + nudge));
            let im_edges: Vec<f64> = edges
                .iter()
                .enumerate()
                .map(|(i, &e)| {
                    let sign = if i == 0 { -1.0 } else { 1.0 };
                    e + sign * nudge * (2.0 * w / nstrips as f64)
                })
                .collect();
            let counts: Vec<Option<i64>> = (0..nstrips)
                .into_par_iter()
                .map(|i| winding(k, re, (im_edges[i], im_edges[i + 1])))
                .collect();
            if counts.iter().all(Option::is_some) {
                out = counts
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| (i, re, (im_edges[i], im_edges[i + 1]), c.unwrap()))
                    .collect();
                edges = im_edges;
                break 'outer;
            }
        }
        if out.is_empty() {
            return Err(Error::Numerical("root scan boundary kept hitting roots".into()));
        }
        out
    };

    // Newton harvest over a seed grid covering the (slightly enlarged) window
    let (im_lo, im_hi) = (edges[0], edges[nstrips]);
    let nx = ((re.1 - re.0) / grid).ceil() as usize + 1;
    let ny = ((im_hi - im_lo) / grid).ceil() as usize + 1;
    let seeds: Vec<C64> = (0..nx)
        .flat_map(|i| {
            (0..ny).map(move |j| {
                C64::new(re.0 + (re.1 - re.0) * i as f64 / (nx - 1).max(1) as f64, im_lo + (im_hi - im_lo) * j as f64 / (ny - 1).max(1) as f64)
            })
        })
        .collect();
    let found: Vec<C64> = seeds.par_iter().filter_map(|&s| newton(k, s)).collect();
    let mut roots: Vec<C64> = Vec::new();
    for z in found {
        let inside = z.re >= re.0 && z.re <= re.1 && z.im >= im_lo && z.im <= im_hi;
        if inside && !roots.iter().any(|r| (r - z).norm() < 1e-7 * (1.0 + z.norm())) {
            roots.push(z);
        }
    }
    // snap conjugate-symmetric and axis roots
    for z in roots.iter_mut() {
        if z.re.abs() <= AXIS_TOL {
            z.re = 0.0;
        }
        if z.im.abs() <= AXIS_TOL {
            z.im = 0.0;
        }
    }
    roots.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap().then(a.re.partial_cmp(&b.re).unwrap()));

    let mut rectangles = Vec::with_capacity(rects.len());
    for (_, rre, rim, wind) in rects {
        let harvested = roots
            .iter()
            .filter(|z| z.im >= rim.0 && z.im < rim.1 && z.re >= rre.0 && z.re <= rre.1)
            .count();
        if harvested as i64 != wind {
            return Err(Error::RootCountMismatch {
                re_lo: rre.0,
                re_hi: rre.1,
                im_lo: rim.0,
                im_hi: rim.1,
                winding: wind,
                harvested,
            });
        }
        rectangles.push(RectangleCount { re_lo: rre.0, re_hi: rre.1, im_lo: rim.0, im_hi: rim.1, winding: wind, harvested });
    }
    let (axis_roots, other_roots): (Vec<C64>, Vec<C64>) = roots.into_iter().partition(|z| z.re == 0.0);
    let margin = other_roots.iter().map(|z| z.re.abs()).fold(d, f64::min);
    Ok(RootScan { axis_roots, other_roots, margin, rectangles, options })
}

/// Critical spectrum `{0, +-i omega_j}` with the dual basis at zero.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralData {
    pub omegas: Vec<f64>,
    /// `0, i omega_1, -i omega_1, ..., i omega_p, -i omega_p`.
    pub roots: Vec<C64>,
    pub delta_primes: Vec<C64>,
    /// `(u0, u1, conj u1, ..., up, conj up)` with `u_k = 1 / Delta'(root_k)`.
    pub psi0: Vec<C64>,
    pub margin: f64,
}

impl SpectralData {
    /// Assemble from declared frequencies, checking that each is a root of the kernel.
    pub fn new(k: &DelayKernel, omegas: &[f64], margin: f64) -> Result<Self> {
        let mut roots = vec![C64::new(0.0, 0.0)];
        for &w in omegas {
            roots.push(C64::new(0.0, w));
            roots.push(C64::new(0.0, -w));
        }
        for &z in &roots {
            let d = k.char_value(z).norm();
            if d > 1e-10 {
                return Err(Error::Hypothesis(format!("Delta({z}) = {d:.3e} is not a root")));
            }
        }
        let psi = psi_zero(k, &roots)?;
        let delta_primes = roots.iter().map(|&z| k.char_derivative(z)).collect();
        Ok(SpectralData { omegas: omegas.to_vec(), roots, delta_primes, psi0: psi.u, margin })
    }

    /// Assemble from a root scan: the axis roots must be `0` and conjugate pairs.
    pub fn from_scan(k: &DelayKernel, scan: &RootScan) -> Result<Self> {
        if !scan.axis_roots.iter().any(|z| z.norm() <= AXIS_TOL) {
            return Err(Error::Hypothesis("0 is not a characteristic root".into()));
        }
        let mut omegas: Vec<f64> = scan.axis_roots.iter().filter(|z| z.im > AXIS_TOL).map(|z| z.im).collect();
        omegas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let neg = scan.axis_roots.iter().filter(|z| z.im < -AXIS_TOL).count();
        if neg != omegas.len() {
            return Err(Error::Hypothesis("axis roots are not conjugate-symmetric".into()));
        }
        SpectralData::new(k, &omegas, scan.margin)
    }

    pub fn p(&self) -> usize {
        self.omegas.len()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub simple: bool,
    pub min_abs_delta_prime: f64,
    pub nonresonant: bool,
    /// Lowest-height integer relation found, if any.
    pub relation: Option<Vec<i64>>,
    pub r_max: u32,
    pub relation_tol: f64,
    pub distinct: bool,
    pub margin: f64,
    pub margin_positive: bool,
    pub ok: bool,
    pub note: String,
}

fn integer_relation(omegas: &[f64], r_max: u32) -> Option<Vec<i64>> {
    let p = omegas.len();
    let r = r_max as i64;
    let mut v = vec![-r; p];
    let mut best: Option<(i64, Vec<i64>)> = None;
    loop {
        let height: i64 = v.iter().map(|x| x.abs()).sum();
        let first = v.iter().find(|&&x| x != 0).copied();
        if height > 0 && height <= r && first.map_or(false, |f| f > 0) {
            let s: f64 = v.iter().zip(omegas).map(|(&a, &w)| a as f64 * w).sum();
            if s.abs() <= RELATION_TOL && best.as_ref().map_or(true, |(h, _)| height < *h) {
                best = Some((height, v.clone()));
            }
        }
        let mut i = 0;
        loop {
            if i == p {
                return best.map(|(_, v)| v);
            }
            v[i] += 1;
            if v[i] > r {
                v[i] = -r;
                i += 1;
            } else {
                break;
            }
        }
    }
}

pub fn verify_hypothesis(data: &SpectralData, r_max: u32) -> HypothesisReport {
    let min_abs_delta_prime = data.delta_primes.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
    let simple = min_abs_delta_prime >= SIMPLICITY_TOL;
    let distinct = data.omegas.windows(2).all(|w| w[1] > w[0]) && data.omegas.iter().all(|&w| w > 0.0);
    let relation = integer_relation(&data.omegas, r_max);
    let nonresonant = relation.is_none();
    let margin_positive = data.margin > 0.0;
    HypothesisReport {
        simple,
        min_abs_delta_prime,
        nonresonant,
        relation,
        r_max,
        relation_tol: RELATION_TOL,
        distinct,
        margin: data.margin,
        margin_positive,
        ok: simple && nonresonant && margin_positive && distinct,
        note: format!(
            "rational independence certified only for integer relations of height <= {r_max} at tolerance {RELATION_TOL:e}"
        ),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PsiZero {
    pub u: Vec<C64>,
    /// The `(2p+2, 1)` entry of the dual basis at zero, identically zero.
    pub psi_nu_first: f64,
}

pub fn psi_zero(k: &DelayKernel, roots: &[C64]) -> Result<PsiZero> {
    let mut u = Vec::with_capacity(roots.len());
    for &z in roots {
        let d = k.char_derivative(z);
        if d.norm() < SIMPLICITY_TOL {
            return Err(Error::Hypothesis(format!("root {z} is not simple (|Delta'| = {:.3e})", d.norm())));
        }
        u.push(C64::new(1.0, 0.0) / d);
    }
    Ok(PsiZero { u, psi_nu_first: 0.0 })
}

/// `(psi, phi)` for `psi(xi) = e^{-l xi} / Delta'(l)`, `phi(theta) = e^{l' theta}`.
pub fn bilinear_check(k: &DelayKernel, l: C64, lp: C64) -> Result<C64> {
    let dp = k.char_derivative(l);
    if dp.norm() < SIMPLICITY_TOL {
        return Err(Error::Hypothesis(format!("Delta'({l}) vanishes")));
    }
    let one = C64::new(1.0, 0.0);
    let inner: C64 = if l == lp {
        let d = k.char_value(l).norm();
        if d > 1e-8 {
            return Err(Error::Precondition(format!("{l} is not a characteristic root (|Delta| = {d:.3e})")));
        }
        k.atoms.iter().map(|a| a.weight * a.theta * (l * a.theta).exp()).sum()
    } else {
        let dl = lp - l;
        k.atoms
            .iter()
            .map(|a| a.weight * (l * a.theta).exp() * ((dl * a.theta).exp() - one) / dl)
            .sum()
    };
    Ok((one - inner) / dp)
}

/// First row of the center basis at `theta`: `(1, e^{i w1 theta}, e^{-i w1 theta}, ..., theta)`.
pub fn phi_ring_row(omegas: &[f64], theta: f64) -> Vec<C64> {
    let mut row = vec![C64::new(1.0, 0.0)];
    for &w in omegas {
        row.push(C64::from_polar(1.0, w * theta));
        row.push(C64::from_polar(1.0, -w * theta));
    }
    row.push(C64::new(theta, 0.0));
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn i(w: f64) -> C64 {
        C64::new(0.0, w)
    }

    fn designed1() -> DelayKernel {
        design_kernel(&[1.0], &[0.0, -1.0, -2.0]).unwrap().kernel
    }

    fn designed2() -> DelayKernel {
        design_kernel(&[1.0, 2f64.sqrt()], &[0.0, -1.0, -2.0, -3.0, -4.0]).unwrap().kernel
    }

    #[test]
    fn char_value_examples() {
        let k = DelayKernel::new(1.0, vec![Atom { theta: -1.0, weight: 0.0 }]).unwrap();
        assert_eq!(k.char_value(C64::new(2.0, 0.0)), C64::new(2.0, 0.0));
        assert_eq!(k.char_derivative(C64::new(0.3, 4.0)), C64::new(1.0, 0.0));
        let a = 0.7;
        let k = DelayKernel::new(1.0, vec![Atom { theta: 0.0, weight: a }]).unwrap();
        assert_eq!(k.char_value(C64::new(a, 0.0)).norm(), 0.0);
        assert_eq!(k.char_derivative(C64::new(a, 0.0)), C64::new(1.0, 0.0));
        assert!(designed1().char_value(i(1.0)).norm() <= 1e-10);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for k in [designed1(), designed2()] {
            for z in [C64::new(0.0, 0.0), i(1.0), C64::new(-0.4, 2.3), C64::new(0.2, -0.7)] {
                let h = 1e-6;
                let fd = (k.char_value(z + h) - k.char_value(z - h)) / (2.0 * h);
                assert!((fd - k.char_derivative(z)).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn design_places_roots() {
        let d = design_kernel(&[1.0], &[0.0, -1.0, -2.0]).unwrap();
        assert!(d.residual <= 1e-10);
        // independent 3x3 check of the weights by Cramer's rule
        let t = [0.0f64, -1.0, -2.0];
        let rows = [[1.0, 1.0, 1.0], [t[0].cos(), t[1].cos(), t[2].cos()], [t[0].sin(), t[1].sin(), t[2].sin()]];
        let det = |m: [[f64; 3]; 3]| {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        let d0 = det(rows);
        for c in 0..3 {
            let mut m = rows;
            for r in 0..3 {
                m[r][c] = [0.0, 0.0, 1.0][r];
            }
            assert!((det(m) / d0 - d.kernel.atoms[c].weight).abs() < 1e-12);
        }
        let d2 = design_kernel(&[1.0, 2f64.sqrt()], &[0.0, -1.0, -2.0, -3.0, -4.0]).unwrap();
        assert!(d2.residual <= 1e-9);
    }

    #[test]
    fn design_rejects_duplicates_and_singular_placements() {
        assert!(matches!(design_kernel(&[1.0], &[0.0, 0.0, -1.0]), Err(Error::DuplicateDelay(_))));
        // theta = -2 pi aliases theta = 0 for omega = 1
        let e = design_kernel(&[1.0], &[0.0, -2.0 * std::f64::consts::PI, -1.0]);
        assert!(matches!(e, Err(Error::SingularPlacement { .. })), "{e:?}");
    }

    #[test]
    fn scan_designed_kernel() {
        let k = designed1();
        let scan = find_imaginary_roots(&k, ScanOptions::for_omegas(&[1.0])).unwrap();
        assert_eq!(scan.axis_roots.len(), 3);
        for target in [i(-1.0), C64::new(0.0, 0.0), i(1.0)] {
            assert!(scan.axis_roots.iter().any(|z| (z - target).norm() < 1e-9));
        }
        assert!(scan.margin > 0.0);
        for r in &scan.rectangles {
            assert_eq!(r.winding, r.harvested as i64);
        }
        let data = SpectralData::from_scan(&k, &scan).unwrap();
        assert!((data.omegas[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scan_trivial_kernels() {
        let opts = ScanOptions { re_half_width: 1.0, im_half_height: 3.0, grid: 0.1 };
        let k = DelayKernel::new(1.0, vec![Atom { theta: 0.0, weight: -1.0 }]).unwrap();
        let scan = find_imaginary_roots(&k, opts).unwrap();
        assert!(scan.axis_roots.is_empty());
        let k = DelayKernel::new(1.0, vec![Atom { theta: 0.0, weight: 0.0 }]).unwrap();
        let scan = find_imaginary_roots(&k, opts).unwrap();
        assert_eq!(scan.axis_roots, vec![C64::new(0.0, 0.0)]);
    }

    #[test]
    fn hypothesis_checks() {
        let k2 = designed2();
        let data = SpectralData::new(&k2, &[1.0, 2f64.sqrt()], 0.1).unwrap();
        let rep = verify_hypothesis(&data, DEFAULT_R_MAX);
        assert!(rep.ok, "{rep:?}");

        let res = SpectralData {
            omegas: vec![1.0, 2.0],
            roots: vec![],
            delta_primes: vec![C64::new(1.0, 0.0)],
            psi0: vec![],
            margin: 0.1,
        };
        let rep = verify_hypothesis(&res, DEFAULT_R_MAX);
        assert!(!rep.nonresonant);
        assert_eq!(rep.relation, Some(vec![2, -1]));

        let data = SpectralData::new(&designed1(), &[1.0], 0.1).unwrap();
        let rep = verify_hypothesis(&data, DEFAULT_R_MAX);
        assert!(rep.ok && rep.simple);
    }

    #[test]
    fn psi_zero_structure() {
        let k = DelayKernel::new(1.0, vec![Atom { theta: -1.0, weight: 0.0 }]).unwrap();
        let psi = psi_zero(&k, &[C64::new(0.0, 0.0)]).unwrap();
        assert_eq!(psi.u, vec![C64::new(1.0, 0.0)]);
        assert_eq!(psi.psi_nu_first, 0.0);

        let data = SpectralData::new(&designed1(), &[1.0], 0.1).unwrap();
        assert!(data.psi0[0].im.abs() <= 1e-12 && data.psi0[0].re != 0.0);
        assert!((data.psi0[1] - data.psi0[2].conj()).norm() <= 1e-14);
        for (u, d) in data.psi0.iter().zip(&data.delta_primes) {
            assert!((u * d - 1.0).norm() < 1e-14);
        }
    }

    /// `(psi, phi)` by composite Simpson quadrature of the inner integrals.
    fn bilinear_quadrature(k: &DelayKernel, l: C64, lp: C64) -> C64 {
        let psi = |xi: f64| (-l * xi).exp() / k.char_derivative(l);
        let phi = |t: f64| (lp * t).exp();
        let mut acc = psi(0.0) * phi(0.0);
        for a in &k.atoms {
            if a.theta == 0.0 {
                continue;
            }
            let n = 2000;
            let h = a.theta / n as f64;
            let mut s = C64::new(0.0, 0.0);
            for j in 0..=n {
                let xi = j as f64 * h;
                let w = if j == 0 || j == n { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
                s += w * psi(xi - a.theta) * phi(xi);
            }
            acc -= a.weight * s * h / 3.0;
        }
        acc
    }

    #[test]
    fn bilinear_form_is_biorthogonal() {
        for (k, ws) in [(designed1(), vec![1.0]), (designed2(), vec![1.0, 2f64.sqrt()])] {
            let mut roots = vec![C64::new(0.0, 0.0)];
            for w in ws {
                roots.push(i(w));
                roots.push(i(-w));
            }
            for &a in &roots {
                for &b in &roots {
                    let closed = bilinear_check(&k, a, b).unwrap();
                    let quad = bilinear_quadrature(&k, a, b);
                    let expect = if a == b { 1.0 } else { 0.0 };
                    assert!((closed - expect).norm() < 1e-9, "{a} {b} {closed}");
                    assert!((closed - quad).norm() < 1e-9);
                }
            }
        }
        let k = DelayKernel::new(1.0, vec![Atom { theta: -1.0, weight: 0.0 }]).unwrap();
        let z = C64::new(0.0, 0.0);
        assert_eq!(bilinear_check(&k, z, z).unwrap(), C64::new(1.0, 0.0));
        assert!(bilinear_check(&designed1(), i(0.5), i(0.5)).is_err());
    }

    #[test]
    fn kernel_validation() {
        assert!(DelayKernel::new(1.0, vec![]).is_err());
        assert!(DelayKernel::new(1.0, vec![Atom { theta: -2.0, weight: 1.0 }]).is_err());
        let dup = vec![Atom { theta: -0.5, weight: 1.0 }, Atom { theta: -0.5, weight: 2.0 }];
        assert!(matches!(DelayKernel::new(1.0, dup), Err(Error::DuplicateDelay(_))));
    }
}
