//! Plain-text checkpoint of a [`CumulantState`].
//!
//! ```text
//! dipsqz-tce-checkpoint 1
//! storage translation
//! twice_spin 6
//! lx 10
//! ly 10
//! time 1.25e-1
//! values 12345
//! <re> <im>        one line per moment
//! ```
//!
//! Singles come first (`<T^{ab}>` at flat index `a d + b`), then pairs
//! (`<T_i^{ab} T_j^{cd}>` at `(a d + b) d^2 + c d + d'`) in storage order.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64 as C;

use super::kernel::ZERO;
use super::{CumulantState, Layout, Storage};
use crate::error::{Error, Result};
use crate::spin::Spin;

pub const MAGIC: &str = "dipsqz-tce-checkpoint";
pub const VERSION: u32 = 1;
/// Refuse to allocate states larger than this many complex numbers.
pub const MAX_VALUES: usize = 1 << 26;

pub fn encode(state: &CumulantState) -> String {
    let lay = &state.layout;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "storage {}", lay.storage);
    let _ = writeln!(out, "twice_spin {}", lay.spin.twice());
    let _ = writeln!(out, "lx {}", lay.lx);
    let _ = writeln!(out, "ly {}", lay.ly);
    let _ = writeln!(out, "time {:e}", state.time);
    let _ = writeln!(out, "values {}", lay.len());
    for k in 0..lay.n_singles() {
        for v in state.single_moments(k) {
            let _ = writeln!(out, "{:e} {:e}", v.re, v.im);
        }
    }
    for k in 0..lay.n_pairs() {
        for v in state.pair_moments(k) {
            let _ = writeln!(out, "{:e} {:e}", v.re, v.im);
        }
    }
    out
}

fn header<'a>(lines: &mut impl Iterator<Item = &'a str>, key: &str) -> Result<&'a str> {
    let line = lines.next().ok_or_else(|| Error::Parse(format!("missing `{key}` line")))?;
    let mut it = line.splitn(2, ' ');
    match (it.next(), it.next()) {
        (Some(k), Some(v)) if k == key => Ok(v.trim()),
        _ => Err(Error::Parse(format!("expected `{key} <value>`, got `{line}`"))),
    }
}

fn number<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("bad {what}: `{s}`")))
}

fn finite(s: &str) -> Result<f64> {
    let v: f64 = number(s, "number")?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Parse(format!("non-finite value `{s}`")))
    }
}

pub fn decode(text: &str) -> Result<CumulantState> {
    let mut lines = text.lines();
    let magic = lines.next().ok_or_else(|| Error::Parse("empty checkpoint".into()))?;
    let mut it = magic.split(' ');
    if it.next() != Some(MAGIC) {
        return Err(Error::Parse("not a checkpoint".into()));
    }
    let version: u32 = number(it.next().unwrap_or(""), "version")?;
    if version != VERSION || it.next().is_some() {
        return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
    }
    let storage = match header(&mut lines, "storage")? {
        "translation" => Storage::Translation,
        "full" => Storage::Full,
        other => return Err(Error::Parse(format!("unknown storage `{other}`"))),
    };
    let twice: i64 = number(header(&mut lines, "twice_spin")?, "twice_spin")?;
    let spin = Spin::from_twice(twice)?;
    let lx: usize = number(header(&mut lines, "lx")?, "lx")?;
    let ly: usize = number(header(&mut lines, "ly")?, "ly")?;
    let time = finite(header(&mut lines, "time")?)?;
    let count: usize = number(header(&mut lines, "values")?, "values")?;
    if lx == 0 || ly == 0 || lx.saturating_mul(ly) > 1 << 16 {
        return Err(Error::Parse(format!("unsupported lattice {lx} x {ly}")));
    }
    // size check before building the class tables
    let n = lx * ly;
    let d2 = spin.dim() * spin.dim();
    let pairs_upper = match storage {
        Storage::Translation => n,
        Storage::Full => n.saturating_mul(n) / 2,
    };
    let upper = pairs_upper.saturating_mul(d2).saturating_mul(d2).saturating_add(n * d2);
    if upper > MAX_VALUES.saturating_mul(4) || count > MAX_VALUES {
        return Err(Error::Parse("checkpoint too large".into()));
    }
    let layout = Layout::new(storage, spin, lx, ly).map_err(|e| Error::Parse(e.to_string()))?;
    if layout.len() != count {
        return Err(Error::Parse(format!("expected {} values, header says {count}", layout.len())));
    }
    let mut moments = Vec::with_capacity(count);
    for line in lines.by_ref() {
        if moments.len() == count {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Parse("trailing data after the last value".into()));
        }
        let mut parts = line.split_whitespace();
        let (Some(re), Some(im), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse(format!("expected `<re> <im>`, got `{line}`")));
        };
        moments.push(C::new(finite(re)?, finite(im)?));
    }
    if moments.len() != count {
        return Err(Error::Parse(format!("expected {count} values, found {}", moments.len())));
    }
    let d = spin.dim();
    let mut data = vec![ZERO; count];
    let singles = layout.n_singles() * d2;
    for k in 0..layout.n_singles() {
        for f in 0..d2 {
            let (a, b) = (f / d, f % d);
            data[k * d2 + b * d + a] = moments[k * d2 + f];
        }
    }
    let d4 = d2 * d2;
    for k in 0..layout.n_pairs() {
        let base = singles + k * d4;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        data[base + (b * d + e) * d2 + a * d + c] = moments[base + (a * d + b) * d2 + c * d + e];
                    }
                }
            }
        }
    }
    Ok(CumulantState { layout: Arc::new(layout), data, time })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, LatticeSpec};
    use crate::tce::TceSystem;

    #[test]
    fn roundtrip_is_exact() {
        let spec = LatticeSpec::new(3, Boundary::Periodic, Spin::from_twice(2).unwrap(), 1.0, 0.5).unwrap();
        let sys = TceSystem::new(&spec, Storage::Translation).unwrap();
        let mut st = sys.initialize_css();
        let rhs = sys.eom_rhs(&st);
        for (v, r) in st.data.iter_mut().zip(&rhs) {
            *v += 0.01 * r;
        }
        st.time = 0.01;
        let back = decode(&encode(&st)).unwrap();
        assert_eq!(back.data, st.data);
        assert_eq!(back.time, st.time);
        assert_eq!(*back.layout, *st.layout);
    }

    #[test]
    fn full_storage_roundtrip() {
        let spec = LatticeSpec::rectangular(3, 1, Boundary::Open, Spin::from_twice(1).unwrap(), 1.0, 0.0).unwrap();
        let sys = TceSystem::new(&spec, Storage::Full).unwrap();
        let st = sys.initialize_css();
        let back = decode(&encode(&st)).unwrap();
        assert_eq!(back.data, st.data);
    }

    #[test]
    fn rejects_malformed() {
        assert!(decode("").is_err());
        assert!(decode("hello 1\n").is_err());
        assert!(decode("dipsqz-tce-checkpoint 2\n").is_err());
        let good = encode(
            &TceSystem::new(
                &LatticeSpec::rectangular(2, 1, Boundary::Open, Spin::from_twice(1).unwrap(), 1.0, 0.0).unwrap(),
                Storage::Full,
            )
            .unwrap()
            .initialize_css(),
        );
        let truncated: String = good.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(decode(&truncated).is_err());
        assert!(good.contains("values 24"));
        assert!(decode(&good.replace("values 24", "values 25")).is_err());
        assert!(decode(&format!("{good}1 2\n")).is_err());
        assert!(decode(&good.replacen("lx 2", "lx 99999999", 1)).is_err());
        assert!(decode(&good.replacen("twice_spin 1", "twice_spin 0", 1)).is_err());
        let nan = good.lines().map(|l| if l.starts_with("5e-1") { "NaN 0".to_string() } else { l.to_string() }).collect::<Vec<_>>().join("\n");
        assert!(decode(&nan).is_err());
    }
}
