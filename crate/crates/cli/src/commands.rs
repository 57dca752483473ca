use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ddenf_core::normal_form::{normal_form, polar_decouple, reduce_to_ode, NfMode};
use ddenf_core::realize::{rank_scan, realize_jet, realize_unfolding, sample_delays, DegreeResidual, DegreeSummary, LiftFlavor};
use ddenf_core::spectral::{design_kernel, verify_hypothesis, HypothesisReport};
use ddenf_core::{Layout, C64};
use serde::Serialize;

use crate::model::{ModelFile, Nonlinearity, Params, ScanSection, SpectrumSection, TargetFile, TargetKind};
use crate::report::{emit_machine, format_real_poly, h, hc, scalar_terms, sig, vector_terms, Term, VERSION};
use crate::HypothesisFailed;

#[derive(Serialize)]
struct Complex {
    re: f64,
    im: f64,
}

impl From<C64> for Complex {
    fn from(z: C64) -> Self {
        Complex { re: z.re, im: z.im }
    }
}

#[derive(Serialize)]
struct SpectrumReport {
    command: &'static str,
    version: &'static str,
    omegas: Vec<f64>,
    roots: Vec<Complex>,
    delta_primes: Vec<Complex>,
    psi0: Vec<Complex>,
    other_roots: Vec<Complex>,
    margin: f64,
    rectangles: usize,
    hypothesis: HypothesisReport,
}

pub fn spectrum(model_path: &Path, r_max: u32, json: Option<&Path>) -> Result<()> {
    let model = ModelFile::load(model_path)?;
    let (scan, data) = model.spectral()?;
    let hyp = verify_hypothesis(&data, r_max);

    println!("spectrum of {} (ddenf {VERSION})", model_path.display());
    println!("{:>24}  {:>24}  {:>24}", "root", "Delta'(root)", "u = 1/Delta'");
    for ((z, d), u) in data.roots.iter().zip(&data.delta_primes).zip(&data.psi0) {
        println!("{:>24}  {:>24}  {:>24}", hc(*z), hc(*d), hc(*u));
    }
    let window = format!("|Re| <= {}, |Im| <= {}", h(scan.options.re_half_width), h(scan.options.im_half_height));
    if scan.other_roots.is_empty() {
        println!("scanned window {window}: no other roots, margin >= {}", h(scan.margin));
    } else {
        println!("scanned window {window}: {} other roots, margin {}", scan.other_roots.len(), h(scan.margin));
    }
    println!("simple: {} (min |Delta'| = {})", hyp.simple, h(hyp.min_abs_delta_prime));
    match &hyp.relation {
        Some(r) => println!("nonresonant: false (resonance r=({}))", join(r)),
        None => println!("nonresonant: true ({})", hyp.note),
    }
    println!("distinct frequencies: {}", hyp.distinct);
    println!("hypothesis: {}", if hyp.ok { "ok" } else { "FAILED" });

    let report = SpectrumReport {
        command: "spectrum",
        version: VERSION,
        omegas: data.omegas.clone(),
        roots: data.roots.iter().map(|&z| z.into()).collect(),
        delta_primes: data.delta_primes.iter().map(|&z| z.into()).collect(),
        psi0: data.psi0.iter().map(|&z| z.into()).collect(),
        other_roots: scan.other_roots.iter().map(|&z| z.into()).collect(),
        margin: scan.margin,
        rectangles: scan.rectangles.len(),
        hypothesis: hyp.clone(),
    };
    emit_machine(&report, json)?;
    if !hyp.ok {
        let why = match &hyp.relation {
            Some(r) => format!("resonance r=({})", join(r)),
            None if !hyp.simple => "a center eigenvalue is not simple".into(),
            None => "frequencies are not distinct and positive".into(),
        };
        return Err(HypothesisFailed(why).into());
    }
    Ok(())
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    OdeReduction,
}

#[derive(Serialize)]
struct NfReport {
    command: &'static str,
    version: &'static str,
    mode: NfMode,
    exact: bool,
    order: u32,
    omegas: Vec<f64>,
    nu_coefficient: f64,
    radial: Vec<Term>,
    angular: Vec<Term>,
    normal_form: Vec<Term>,
    homological_residuals: Vec<(u32, f64)>,
    caveats: Vec<String>,
}

pub fn nf(model_path: &Path, order: Option<u32>, _mode: Mode, json: Option<&Path>, csv: Option<&Path>) -> Result<()> {
    let mut model = ModelFile::load(model_path)?;
    if let Some(l) = order {
        model.order = l;
    }
    let rfde = model.rfde()?;
    let (_, data) = model.spectral()?;
    let jet = reduce_to_ode(&rfde, &data)?;
    let nf = normal_form(&jet, model.order)?;
    let polar = polar_decouple(&nf)?;
    let mut caveats = Vec::new();
    if !nf.exact {
        caveats.push(
            "mode ode_reduction: terms of degree >= 3 are the normal form of the reduced ODE jet; \
             the corrections from the rest of the delay equation are not included"
                .to_string(),
        );
    }

    println!("normal form of {} to order {} (ddenf {VERSION})", model_path.display(), model.order);
    println!("mode: {}{}", mode_name(nf.mode), if nf.exact { " (exact through this order)" } else { "" });
    let layout = polar.radial.layout();
    for k in 0..polar.radial.ncomp() {
        let rhs = format_real_poly(polar.radial.component(k), &layout);
        if k == 0 {
            let nu = if polar.nu_coefficient == 1.0 { "nu".to_string() } else { format!("{} nu", h(polar.nu_coefficient)) };
            println!("rho0' = {nu}{}", continuation(&rhs));
        } else {
            println!("rho{k}' = {rhs}");
        }
    }
    for j in 0..polar.angular.ncomp() {
        let rhs = format_real_poly(polar.angular.component(j), &layout);
        let w = h(polar.omegas[j]);
        println!("theta{}' = {w}{}", j + 1, continuation(&rhs));
    }
    for c in &caveats {
        println!("caveat: {c}");
    }

    let field = nf.field();
    if let Some(path) = csv {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(["component", "monomial", "re", "im"])?;
        for t in vector_terms(&field) {
            w.write_record([t.component.to_string(), t.monomial, sig(t.re, 17), sig(t.im, 17)])?;
        }
        w.flush()?;
    }
    let report = NfReport {
        command: "nf",
        version: VERSION,
        mode: nf.mode,
        exact: nf.exact,
        order: nf.order,
        omegas: nf.omegas.clone(),
        nu_coefficient: polar.nu_coefficient,
        radial: vector_terms(&polar.radial),
        angular: vector_terms(&polar.angular),
        normal_form: vector_terms(&field),
        homological_residuals: nf.steps.iter().map(|s| (s.degree, s.homological_residual)).collect(),
        caveats,
    };
    emit_machine(&report, json)
}

/// `rhs` appended to a leading term: `""`, `" + ..."` or `" - ..."`.
fn continuation(rhs: &str) -> String {
    match rhs {
        "0" => String::new(),
        _ => match rhs.strip_prefix('-') {
            Some(rest) => format!(" - {rest}"),
            None => format!(" + {rhs}"),
        },
    }
}

fn mode_name(m: NfMode) -> &'static str {
    match m {
        NfMode::OdeReduction => "ode_reduction",
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum FlavorArg {
    Plain,
    Ring,
}

#[derive(Serialize)]
struct RankReport {
    command: &'static str,
    version: &'static str,
    seed: u64,
    samples: usize,
    delays: usize,
    p: usize,
    s: usize,
    flavor: LiftFlavor,
    degenerate: usize,
    structural_degree: Option<u32>,
    summary: Vec<DegreeSummary>,
}

pub struct RankScanArgs<'a> {
    pub model: &'a Path,
    pub order: Option<u32>,
    pub samples: usize,
    pub delays: Option<usize>,
    pub seed: u64,
    pub flavor: FlavorArg,
    pub csv: Option<&'a Path>,
    pub json: Option<&'a Path>,
}

pub fn rank_scan_cmd(args: RankScanArgs) -> Result<()> {
    let model = ModelFile::load(args.model)?;
    let (_, data) = model.spectral()?;
    let p = data.p();
    let d = args.delays.unwrap_or(p + 1);
    let order = args.order.unwrap_or(model.order).max(2);
    let degrees: Vec<u32> = (2..=order).collect();
    let flavor = match args.flavor {
        FlavorArg::Plain => LiftFlavor::Plain,
        FlavorArg::Ring => LiftFlavor::Ring,
    };
    let tuples = sample_delays(model.kernel.r, d, args.samples, args.seed);
    let rep = rank_scan(&data, &degrees, model.params.s, flavor, &tuples)?;

    let mut csv_buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut csv_buf);
        let mut header = vec!["index".to_string()];
        header.extend((1..=d).map(|i| format!("tau{i}")));
        header.extend(["degree", "rank", "target_dim", "sigma_min"].map(String::from));
        w.write_record(&header)?;
        for r in &rep.rows {
            let mut rec = vec![r.index.to_string()];
            rec.extend(r.tau.iter().map(|t| sig(*t, 17)));
            rec.extend([r.degree.to_string(), r.rank.to_string(), r.target_dim.to_string(), sig(r.sigma_min, 17)]);
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    println!("rank scan of {} (ddenf {VERSION}, seed {})", args.model.display(), args.seed);
    println!("p = {p}, s = {}, {d} delays, {} samples ({} degenerate)", model.params.s, args.samples, rep.degenerate);
    println!("{:>6} {:>8} {:>10} {:>10} {:>10} {:>14}", "degree", "target", "domain", "full rank", "fraction", "min sigma");
    for s in &rep.summary {
        println!(
            "{:>6} {:>8} {:>10} {:>10} {:>10} {:>14}",
            s.degree,
            s.target_dim,
            s.domain_dim,
            s.surjective,
            h(s.fraction),
            s.min_sigma_surjective.map_or("-".into(), h)
        );
    }
    match rep.structural_degree {
        Some(l) => println!("structurally deficient from degree {l} on (no sample has full rank)"),
        None => println!("no structural deficiency observed"),
    }
    match args.csv {
        Some(path) => std::fs::write(path, &csv_buf).with_context(|| format!("cannot write {}", path.display()))?,
        None => {
            println!("--- csv ---");
            std::io::stdout().write_all(&csv_buf)?;
        }
    }
    let report = RankReport {
        command: "rank-scan",
        version: VERSION,
        seed: args.seed,
        samples: args.samples,
        delays: d,
        p,
        s: model.params.s,
        flavor,
        degenerate: rep.degenerate,
        structural_degree: rep.structural_degree,
        summary: rep.summary.clone(),
    };
    emit_machine(&report, args.json)
}

#[derive(Serialize)]
struct RealizeReport {
    command: &'static str,
    version: &'static str,
    kind: TargetKind,
    mode: NfMode,
    tau: Vec<f64>,
    eta: Vec<Term>,
    xi: Vec<Term>,
    residuals: Vec<DegreeResidual>,
    slice_deviation: Option<f64>,
    xi_order: Option<u32>,
    realized: Vec<Term>,
}

pub fn realize(model_path: &Path, target_path: &Path, tau: Option<Vec<f64>>, json: Option<&Path>) -> Result<()> {
    let mut model = ModelFile::load(model_path)?;
    let target_file = TargetFile::load(target_path)?;
    if let Some(t) = tau {
        model.delays = t;
    }
    let (_, data) = model.spectral()?;
    let s = model.params.s;
    let target = target_file.to_jet(data.p(), s)?;
    let layout = Layout::plain(model.delays.len(), s);

    let report = match target_file.kind {
        TargetKind::Jet => {
            let res = realize_jet(&data, &model.kernel, &model.delays, s, model.order, &target)?;
            RealizeReport {
                command: "realize",
                version: VERSION,
                kind: TargetKind::Jet,
                mode: NfMode::OdeReduction,
                tau: res.tau.clone(),
                eta: scalar_terms(&res.eta, &layout),
                xi: scalar_terms(&res.xi, &layout),
                residuals: res.residuals.clone(),
                slice_deviation: None,
                xi_order: None,
                realized: vector_terms(&res.realized),
            }
        }
        TargetKind::Unfolding => {
            let base = model.rfde()?;
            let xi_order = target_file.xi_order.unwrap_or(model.order);
            let res = realize_unfolding(&data, &base, &target, xi_order)?;
            let eta = base.eta();
            RealizeReport {
                command: "realize",
                version: VERSION,
                kind: TargetKind::Unfolding,
                mode: NfMode::OdeReduction,
                tau: model.delays.clone(),
                eta: scalar_terms(&eta, &layout),
                xi: scalar_terms(&res.xi, &layout),
                residuals: res.residuals.clone(),
                slice_deviation: Some(res.slice_deviation),
                xi_order: Some(xi_order),
                realized: vector_terms(&res.realized),
            }
        }
    };

    println!("realization for {} at tau = ({}) (ddenf {VERSION})", target_path.display(), report.tau.iter().map(|t| h(*t)).collect::<Vec<_>>().join(", "));
    let poly_of = |terms: &[Term]| {
        let mut p = ddenf_core::Poly::zero(layout.nvars());
        for t in terms {
            p.add_term(ddenf_core::Monomial::new(t.exponents.clone()), C64::new(t.re, t.im));
        }
        p
    };
    println!("eta = {}", format_real_poly(&poly_of(&report.eta), &layout));
    println!("xi  = {}", format_real_poly(&poly_of(&report.xi), &layout));
    println!("{:>6} {:>14} {:>6} {:>8}", "degree", "residual", "rank", "target");
    for r in &report.residuals {
        println!("{:>6} {:>14} {:>6} {:>8}", r.degree, h(r.residual), r.rank, r.target_dim);
    }
    if let Some(dev) = report.slice_deviation {
        println!("mu = 0 slice deviation: {}", h(dev));
    }
    emit_machine(&report, json)
}

pub fn design(omegas: &[f64], delays: &[f64], tau: Option<Vec<f64>>, order: u32, s: usize, out: Option<&PathBuf>) -> Result<()> {
    let design = design_kernel(omegas, delays)?;
    let p = omegas.len();
    let r = design.kernel.r;
    let tau = tau.unwrap_or_else(|| (0..=p).map(|i| -r * (i as f64 + 1.0) / (p as f64 + 2.0)).collect());
    let model = ModelFile {
        kernel: design.kernel.clone(),
        spectrum: SpectrumSection { omegas: omegas.to_vec(), scan: ScanSection::default() },
        delays: tau,
        params: Params { s },
        nonlinearity: Nonlinearity::default(),
        order,
    };
    eprintln!("designed kernel: condition number {}, residual {}", h(design.condition), h(design.residual));
    for a in &design.kernel.atoms {
        eprintln!("  theta = {:>10}  weight = {}", h(a.theta), h(a.weight));
    }
    let text = serde_json::to_string_pretty(&model)?;
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n")).with_context(|| format!("cannot write {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}
