//! Parser for outer perturbations written as trigonometric sums, e.g.
//! `0.01*cos(2θ) - 0.003*sin(3*theta)`.

use std::sync::OnceLock;

use regex::Regex;
use twophase::shape::Perturbation;

fn term() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^([+-]?)((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)?\*?(cos|sin)\((\d*)\*?(?:θ|theta|t)\)").unwrap()
    })
}

/// Parses `expr` into Fourier coefficients on the unit circle. Modes above
/// `kmax` and the constant mode are rejected.
pub fn parse_perturbation(expr: &str, kmax: usize) -> Result<Perturbation, String> {
    let s: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err("empty perturbation expression".into());
    }
    let mut p = Perturbation::zero(kmax, 1.0);
    let mut rest = s.as_str();
    let mut first = true;
    while !rest.is_empty() {
        let caps = term()
            .captures(rest)
            .ok_or_else(|| format!("cannot parse perturbation near '{rest}'"))?;
        let sign = &caps[1];
        if sign.is_empty() && !first {
            return Err(format!("missing '+' or '-' before '{rest}'"));
        }
        let mut a: f64 = match caps.get(2) {
            Some(m) => m.as_str().parse().map_err(|_| format!("bad coefficient '{}'", m.as_str()))?,
            None => 1.0,
        };
        if sign == "-" {
            a = -a;
        }
        let k: usize = if caps[4].is_empty() {
            1
        } else {
            caps[4].parse().map_err(|_| format!("bad mode number '{}'", &caps[4]))?
        };
        if k == 0 || k > kmax {
            return Err(format!("mode {k} outside 1..={kmax}"));
        }
        match &caps[3] {
            "cos" => p.modes[k - 1].0 += a,
            _ => p.modes[k - 1].1 += a,
        }
        rest = &rest[caps[0].len()..];
        first = false;
    }
    Ok(p)
}
