use std::path::Path;

use anyhow::Result;
use ddenf_core::normal_form::RfdeModel;
use ddenf_core::spectral::{find_imaginary_roots, DelayKernel, RootScan, ScanOptions, SpectralData};
use ddenf_core::{Layout, Monomial, Poly, VectorPoly, C64};
use serde::{Deserialize, Serialize};

use crate::ParseError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kernel: DelayKernel,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    pub delays: Vec<f64>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
    pub order: u32,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    /// Expected Hopf frequencies; checked against the scan when present.
    #[serde(default)]
    pub omegas: Vec<f64>,
    #[serde(default)]
    pub scan: ScanSection,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin_window: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub s: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nonlinearity {
    #[serde(default)]
    pub eta: Vec<EtaTerm>,
    #[serde(default)]
    pub xi: Vec<XiTerm>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaTerm {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XiTerm {
    pub exponents: Vec<u32>,
    pub mu_exponents: Vec<u32>,
    pub coeff: f64,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ParseError(format!("cannot read {what} file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| ParseError(format!("{}: {e}", path.display())).into())
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let model: ModelFile = read_json(path, "model")?;
        model.validate().map_err(|e| ParseError(format!("{}: {e}", path.display())))?;
        Ok(model)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let d = self.delays.len();
        let s = self.params.s;
        for (i, t) in self.nonlinearity.eta.iter().enumerate() {
            if t.exponents.len() != d {
                return Err(format!("nonlinearity.eta[{i}].exponents has length {}, expected {d} (one per delay)", t.exponents.len()));
            }
        }
        for (i, t) in self.nonlinearity.xi.iter().enumerate() {
            if t.exponents.len() != d {
                return Err(format!("nonlinearity.xi[{i}].exponents has length {}, expected {d} (one per delay)", t.exponents.len()));
            }
            if t.mu_exponents.len() != s {
                return Err(format!("nonlinearity.xi[{i}].mu_exponents has length {}, expected params.s = {s}", t.mu_exponents.len()));
            }
            if t.mu_exponents.iter().all(|&e| e == 0) {
                return Err(format!("nonlinearity.xi[{i}] must vanish at mu = 0 (put it under eta instead)"));
            }
        }
        Ok(())
    }

    pub fn nonlinearity_poly(&self) -> Poly {
        let s = self.params.s;
        let n = self.delays.len() + s;
        let mut f = Poly::zero(n);
        for t in &self.nonlinearity.eta {
            let mut e = t.exponents.clone();
            e.extend(std::iter::repeat(0).take(s));
            f.add_term(Monomial::new(e), C64::new(t.coeff, 0.0));
        }
        for t in &self.nonlinearity.xi {
            let mut e = t.exponents.clone();
            e.extend(&t.mu_exponents);
            f.add_term(Monomial::new(e), C64::new(t.coeff, 0.0));
        }
        f
    }

    pub fn rfde(&self) -> Result<RfdeModel> {
        Ok(RfdeModel::new(self.kernel.clone(), self.delays.clone(), self.params.s, self.order, self.nonlinearity_poly())?)
    }

    pub fn scan_options(&self) -> ScanOptions {
        let mut opts = ScanOptions::for_omegas(&self.spectrum.omegas);
        if let Some(w) = self.spectrum.scan.omega_max {
            opts.im_half_height = w;
        }
        if let Some(m) = self.spectrum.scan.margin_window {
            opts.re_half_width = m;
        }
        opts
    }

    /// Scans the spectrum and assembles the data at the axis roots found.
    pub fn spectral(&self) -> Result<(RootScan, SpectralData)> {
        let scan = find_imaginary_roots(&self.kernel, self.scan_options())?;
        let data = SpectralData::from_scan(&self.kernel, &scan)?;
        let expected = &self.spectrum.omegas;
        if !expected.is_empty() {
            let matches = expected.len() == data.omegas.len()
                && expected.iter().zip(&data.omegas).all(|(a, b)| (a - b).abs() <= 1e-8 * a.abs().max(1.0));
            if !matches {
                return Err(ddenf_core::Error::Hypothesis(format!(
                    "scanned axis frequencies {:?} differ from spectrum.omegas {:?}",
                    data.omegas, expected
                ))
                .into());
            }
        }
        Ok((scan, data))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    #[default]
    Jet,
    Unfolding,
}

/// Desired radial jet: one list of terms per equation `rho0', rho1', ..., rhop'`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetFile {
    #[serde(default)]
    pub kind: TargetKind,
    /// Coefficient of the unfolding parameter in `rho0'`; it is always one.
    pub nu: Option<f64>,
    pub radial: Vec<Vec<RadialTerm>>,
    /// Degree through which parameter-dependent terms are matched (unfolding only).
    pub xi_order: Option<u32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialTerm {
    pub rho: Vec<u32>,
    #[serde(default)]
    pub mu: Vec<u32>,
    pub coeff: f64,
}

impl TargetFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path, "target")
    }

    pub fn to_jet(&self, p: usize, s: usize) -> Result<VectorPoly> {
        if self.radial.len() != p + 1 {
            return Err(ParseError(format!("target has {} radial equations, the model has p + 1 = {}", self.radial.len(), p + 1)).into());
        }
        if let Some(nu) = self.nu {
            if nu != 1.0 {
                return Err(ddenf_core::Error::Precondition(format!("the unfolding parameter enters rho0' with coefficient 1, target asks for {nu}")).into());
            }
        }
        let layout = Layout::radial(p, s);
        let mut jet = VectorPoly::zero(layout, p + 1);
        for (k, terms) in self.radial.iter().enumerate() {
            for (i, t) in terms.iter().enumerate() {
                if t.rho.len() != p + 1 {
                    return Err(ParseError(format!("radial[{k}][{i}].rho has length {}, expected {}", t.rho.len(), p + 1)).into());
                }
                let mu = if t.mu.is_empty() { vec![0; s] } else { t.mu.clone() };
                if mu.len() != s {
                    return Err(ParseError(format!("radial[{k}][{i}].mu has length {}, expected {s}", mu.len())).into());
                }
                let mut e = t.rho.clone();
                e.extend(mu);
                jet.component_mut(k).add_term(Monomial::new(e), C64::new(t.coeff, 0.0));
            }
        }
        Ok(jet)
    }
}
