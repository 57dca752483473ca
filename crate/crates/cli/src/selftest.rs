use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use ddenf_core::homological::{apply_homological, verify_splitting};
use ddenf_core::normal_form::{guckenheimer_example, GuckenheimerInput};
use ddenf_core::poly::enumerate_basis;
use ddenf_core::realize::{composite_matrix, rank_scan, sample_delays, LiftFlavor};
use ddenf_core::spectral::{design_kernel, DelayKernel, SpectralData};
use ddenf_core::symmetry::{project_a, project_a_ring, time_average};
use ddenf_core::{Flavor, SpaceDesc, VectorPoly, C64};
use serde::Serialize;

use crate::report::{emit_machine, h, VERSION};
use crate::{ParseError, SelftestFailed};

const GOLDEN: &str = include_str!("golden.txt");
const GOLDEN_RTOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Fast,
    Full,
}

#[derive(Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct SelftestReport {
    command: &'static str,
    version: &'static str,
    level: Level,
    checks: Vec<Check>,
    golden_entries: usize,
    pass: bool,
}

fn omegas(p: usize) -> Vec<f64> {
    [1.0, 2f64.sqrt()][..p].to_vec()
}

fn setup(p: usize) -> Result<(DelayKernel, SpectralData)> {
    let w = omegas(p);
    let delays: Vec<f64> = (0..=2 * p).map(|i| -(i as f64)).collect();
    let k = design_kernel(&w, &delays)?.kernel;
    let data = SpectralData::new(&k, &w, 0.1)?;
    Ok((k, data))
}

/// Deterministic dense field with irregular coefficients.
fn sample_field(space: &SpaceDesc, nu_free: bool) -> VectorPoly {
    let nu = space.layout.nu_index().unwrap();
    let mut f = VectorPoly::zero(space.layout, space.components);
    for (i, (k, m)) in enumerate_basis(space).into_iter().enumerate() {
        if nu_free && m.exponent(nu) > 0 {
            continue;
        }
        let x = i as f64 + 1.0;
        f.component_mut(k).add_term(m, C64::new((1.618 * x).sin(), (2.718 * x).cos()));
    }
    f
}

fn check_splitting(level: Level, golden: &mut Vec<(String, f64)>) -> Result<Check> {
    let pmax = if level == Level::Fast { 1 } else { 2 };
    let lmax = if level == Level::Fast { 3 } else { 4 };
    let mut failures = Vec::new();
    let mut n = 0;
    for p in 1..=pmax {
        for s in 0..=1 {
            for l in 2..=lmax {
                let w = omegas(p);
                let rep = verify_splitting(p, s, l, &w)?;
                let space = SpaceDesc::center_field(p, s, l, Flavor::Full)?;
                let f = sample_field(&space, false);
                let a = project_a_ring(&f);
                let idempotent = project_a_ring(&a) == a;
                let contained = project_a_ring(&apply_homological(&f, &w)?).max_abs() <= 1e-10 * (1.0 + f.max_abs());
                if !(rep.ok && idempotent && contained) {
                    failures.push(format!("(p, s, l) = ({p}, {s}, {l})"));
                }
                let key = format!("split.p{p}.s{s}.l{l}");
                golden.push((format!("{key}.dim"), rep.whole.dim as f64));
                golden.push((format!("{key}.range_a"), rep.whole.dim_range_a as f64));
                golden.push((format!("{key}.range_l"), rep.whole.dim_range_l as f64));
                n += 1;
            }
        }
    }
    Ok(Check {
        name: "splitting".into(),
        pass: failures.is_empty(),
        detail: if failures.is_empty() { format!("{n} spaces") } else { format!("failed at {}", failures.join(", ")) },
    })
}

fn check_averaging() -> Result<Check> {
    // every non-resonant frequency is a nonzero integer, so the error is at most 2 |f - A f| / T
    let space = SpaceDesc::center_field(1, 0, 3, Flavor::Full)?;
    let f = sample_field(&space, true);
    let exact = project_a(&f);
    let oscillating = f.sub(&exact).norm();
    let mut worst: f64 = 0.0;
    for t in [50.0, 100.0, 200.0] {
        let n = 4 * (8.0 * t / std::f64::consts::PI).ceil() as usize;
        let err = time_average(&f, &[1.0], t, n)?.sub(&exact).norm();
        worst = worst.max(err * t / oscillating);
    }
    Ok(Check { name: "averaging".into(), pass: worst <= 2.0, detail: format!("error * T / |f - A f| <= {}", h(worst)) })
}

fn check_factorization(level: Level) -> Result<Check> {
    let mut cases = vec![(1usize, 0usize, 2u32), (1, 1, 3)];
    if level == Level::Full {
        cases.push((2, 0, 2));
    }
    let mut worst: f64 = 0.0;
    for (p, s, l) in cases {
        let (k, data) = setup(p)?;
        for tau in sample_delays(k.r, p + 1, 10, 17) {
            let cm = composite_matrix(&data, &tau, l, s, LiftFlavor::Ring)?;
            worst = worst.max(cm.factorization_residual.unwrap_or(f64::INFINITY));
        }
    }
    Ok(Check { name: "factorization".into(), pass: worst <= 1e-10, detail: format!("max relative residual {}", h(worst)) })
}

fn check_generic_rank() -> Result<Check> {
    let (_, data) = setup(1)?;
    let rep = rank_scan(&data, &[2, 3, 4], 0, LiftFlavor::Plain, &sample_delays(2.0, 2, 50, 23))?;
    let worst = rep.summary.iter().map(|s| s.fraction).fold(1.0, f64::min);
    Ok(Check { name: "generic rank".into(), pass: worst >= 0.95, detail: format!("lowest full-rank fraction {}", h(worst)) })
}

fn snapshot(level: Level, golden: &mut Vec<(String, f64)>) -> Result<()> {
    let ps: &[usize] = if level == Level::Fast { &[1] } else { &[1, 2] };
    for &p in ps {
        let (k, data) = setup(p)?;
        for (i, a) in k.atoms.iter().enumerate() {
            golden.push((format!("kernel.p{p}.weight{i}"), a.weight));
        }
        for (i, u) in data.psi0.iter().enumerate() {
            golden.push((format!("psi0.p{p}.u{i}.re"), u.re));
            golden.push((format!("psi0.p{p}.u{i}.im"), u.im));
        }
        let tau = [-0.3, -1.1, -2.9];
        let cm = composite_matrix(&data, &tau[..=p], 2, 0, LiftFlavor::Plain)?;
        for (i, s) in cm.singular_values.iter().enumerate() {
            golden.push((format!("composite.p{p}.l2.sv{i}"), *s));
        }
    }
    let (k, data) = setup(1)?;
    let a = GuckenheimerInput { a20: 0.7, a11: -0.4, a02: 0.3, a30: 0.2, a21: -0.1, a12: 0.5, a03: -0.3 };
    let g = guckenheimer_example(&a, (-0.37, -1.61), &data, &k)?;
    for (name, v) in [("a1", g.a1), ("a2", g.a2), ("a3", g.a3), ("a4", g.a4), ("b1", g.b1), ("b2", g.b2), ("b3", g.b3)] {
        golden.push((format!("guckenheimer.{name}"), v));
    }
    Ok(())
}

fn parse_golden(text: &str) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ParseError(format!("golden file line {}: expected `key = value`", n + 1)))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| ParseError(format!("golden file line {}: {e}", n + 1)))?;
        out.push((key.trim().to_string(), value));
    }
    Ok(out)
}

fn compare_golden(expected: &[(String, f64)], computed: &[(String, f64)]) -> Check {
    let mut matched = 0;
    for (key, got) in computed {
        let Some((_, want)) = expected.iter().find(|(k, _)| k == key) else {
            return Check { name: "golden".into(), pass: false, detail: format!("first divergent entry {key}: missing from golden file (computed {got:.16e})") };
        };
        if (got - want).abs() > GOLDEN_RTOL * want.abs().max(1.0) {
            return Check {
                name: "golden".into(),
                pass: false,
                detail: format!("first divergent entry {key}: expected {want:.16e}, computed {got:.16e}"),
            };
        }
        matched += 1;
    }
    Check { name: "golden".into(), pass: true, detail: format!("{matched} entries match") }
}

pub fn run(level: Level, golden_path: Option<&Path>, write_golden: Option<&Path>, json: Option<&Path>) -> Result<()> {
    let start = Instant::now();
    let mut entries = Vec::new();
    let mut checks = vec![check_splitting(level, &mut entries)?, check_averaging()?, check_factorization(level)?];
    if level == Level::Full {
        checks.push(check_generic_rank()?);
    }
    snapshot(level, &mut entries)?;

    if let Some(path) = write_golden {
        let mut text = format!("# ddenf {VERSION} self-test reference values\n");
        for (k, v) in &entries {
            text.push_str(&format!("{k} = {v:.16e}\n"));
        }
        std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    let expected = match golden_path {
        Some(p) => parse_golden(&std::fs::read_to_string(p).map_err(|e| ParseError(format!("cannot read golden file {}: {e}", p.display())))?)?,
        None => parse_golden(GOLDEN)?,
    };
    checks.push(compare_golden(&expected, &entries));

    let pass = checks.iter().all(|c| c.pass);
    println!("self-test ({:?}, ddenf {VERSION})", level);
    for c in &checks {
        println!("{:<16} {}  {}", c.name, if c.pass { "pass" } else { "FAIL" }, c.detail);
    }
    println!("{} in {:.1}s", if pass { "all checks passed" } else { "self-test FAILED" }, start.elapsed().as_secs_f64());
    let report = SelftestReport { command: "selftest", version: VERSION, level, checks, golden_entries: entries.len(), pass };
    emit_machine(&report, json)?;
    if !pass {
        let first = report.checks.iter().find(|c| !c.pass).unwrap();
        return Err(SelftestFailed(format!("{}: {}", first.name, first.detail)).into());
    }
    Ok(())
}
