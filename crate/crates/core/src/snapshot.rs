//! Particle snapshots as plain CSV.
//!
//! ```text
//! n,d,step
//! <N>,<d>,<step>
//! <N rows of xs, d comma-separated values each>
//! <N rows of ys>
//! ```
//!
//! Values are written with 17 significant digits, which round-trips `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dynamics::ParticleState;
use crate::error::{Error, Result};

/// `f64` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv(state: &ParticleState) -> String {
    let (n, d) = (state.n_particles(), state.dim());
    let mut out = String::new();
    let _ = writeln!(out, "n,d,step");
    let _ = writeln!(out, "{n},{d},{}", state.step);
    for block in [state.xs(), state.ys()] {
        for row in block.chunks(d) {
            let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
    }
    out
}

pub fn from_csv(text: &str) -> std::result::Result<ParticleState, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("empty snapshot")?;
    if header.trim() != "n,d,step" {
        return Err(format!("unexpected header `{header}`"));
    }
    let dims = lines.next().ok_or("missing shape line")?;
    let fields: Vec<&str> = dims.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(format!("shape line `{dims}` must have 3 fields"));
    }
    let parse_u = |s: &str| s.parse::<u64>().map_err(|e| format!("bad integer `{s}`: {e}"));
    let n = parse_u(fields[0])? as usize;
    let d = parse_u(fields[1])? as usize;
    let step = parse_u(fields[2])?;
    let mut values = Vec::with_capacity(2 * n * d);
    for (row, line) in lines.enumerate() {
        let parsed: std::result::Result<Vec<f64>, String> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("row {}: bad value `{s}`: {e}", row + 3))
            })
            .collect();
        let parsed = parsed?;
        if parsed.len() != d {
            return Err(format!("row {} has {} values, expected {d}", row + 3, parsed.len()));
        }
        values.extend(parsed);
    }
    if values.len() != 2 * n * d {
        return Err(format!(
            "expected {} rows of particles, found {}",
            2 * n,
            values.len() / d.max(1)
        ));
    }
    let ys = values.split_off(n * d);
    ParticleState::new(n, d, values, ys, step).map_err(|e| e.to_string())
}

pub fn write(path: &Path, state: &ParticleState) -> Result<()> {
    fs::write(path, to_csv(state))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<ParticleState> {
    let text = fs::read_to_string(path).map_err(|e| Error::Snapshot {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    from_csv(&text).map_err(|reason| Error::Snapshot {
        path: path.to_path_buf(),
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_header_then_xs_then_ys() {
        let s = ParticleState::new(2, 1, vec![1.0, 2.0], vec![3.0, -4.5], 7).unwrap();
        let text = to_csv(&s);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "n,d,step");
        assert_eq!(lines[1], "2,1,7");
        assert_eq!(lines[2].parse::<f64>().unwrap(), 1.0);
        assert_eq!(lines[5].parse::<f64>().unwrap(), -4.5);
        assert_eq!(from_csv(&text).unwrap(), s);
    }

    #[test]
    fn rejects_malformed() {
        assert!(from_csv("").is_err());
        assert!(from_csv("n,d,step\n1,2,0\n1.0\n2.0,3.0\n").is_err());
        assert!(from_csv("n,d,step\n2,1,0\n1.0\n2.0\n").is_err());
    }
}
