use std::io::{self, Write};

use anyhow::Result;
use ddenf_core::{Layout, Poly, VectorPoly, C64};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `%g`-style rendering with `digits` significant digits.
pub fn sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    // exponent after rounding to `digits`, as %g does
    let sci = format!("{:.*e}", digits - 1, x);
    let e: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if e < -4 || e >= digits as i32 {
        sci
    } else {
        format!("{:.*}", (digits as i32 - 1 - e).max(0) as usize, x)
    }
}

/// Human-table precision.
pub fn h(x: f64) -> String {
    sig(x, 6)
}

pub fn hc(z: C64) -> String {
    if z.im == 0.0 {
        h(z.re)
    } else {
        format!("{}{}{}i", h(z.re), if z.im < 0.0 { "-" } else { "+" }, h(z.im.abs()))
    }
}

/// Compact JSON with every float written to 17 significant digits.
struct SigFormatter;

impl serde_json::ser::Formatter for SigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn machine_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFormatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf)?)
}

/// Prints the machine block after its marker and optionally stores it.
pub fn emit_machine<T: Serialize>(value: &T, out: Option<&std::path::Path>) -> Result<()> {
    let text = machine_json(value)?;
    println!("--- machine ---");
    println!("{text}");
    if let Some(path) = out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct Term {
    pub component: usize,
    pub exponents: Vec<u32>,
    pub monomial: String,
    pub re: f64,
    pub im: f64,
}

pub fn scalar_terms(p: &Poly, layout: &Layout) -> Vec<Term> {
    p.terms()
        .map(|(m, c)| Term { component: 0, exponents: m.exponents().to_vec(), monomial: layout.format_monomial(m), re: c.re, im: c.im })
        .collect()
}

pub fn vector_terms(f: &VectorPoly) -> Vec<Term> {
    let layout = f.layout();
    f.terms()
        .map(|(k, m, c)| Term { component: k, exponents: m.exponents().to_vec(), monomial: layout.format_monomial(m), re: c.re, im: c.im })
        .collect()
}

/// `c1 m1 + c2 m2 + ...` with real coefficients, `0` when empty.
pub fn format_real_poly(p: &Poly, layout: &Layout) -> String {
    let mut terms: Vec<_> = p.terms().filter(|(_, c)| c.re != 0.0).collect();
    terms.sort_by(|a, b| a.0.degree().cmp(&b.0.degree()).then(b.0.cmp(a.0)));
    if terms.is_empty() {
        return "0".into();
    }
    let mut out = String::new();
    for (i, (m, c)) in terms.iter().enumerate() {
        let v = c.re;
        let sign = if v < 0.0 { "-" } else { "+" };
        if i == 0 {
            if v < 0.0 {
                out.push('-');
            }
        } else {
            out.push_str(&format!(" {sign} "));
        }
        let mono = layout.format_monomial(m);
        if mono == "1" {
            out.push_str(&h(v.abs()));
        } else {
            out.push_str(&format!("{} {mono}", h(v.abs())));
        }
    }
    out
}
