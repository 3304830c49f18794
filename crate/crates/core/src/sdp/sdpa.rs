//! SDPA sparse format (`.dat-s`) import and export.
//!
//! SDPA's primal is `min sum_i c_i x_i  s.t.  sum_i F_i x_i - F_0 >= 0` and
//! its dual is `max F_0 . Y  s.t.  F_i . Y = c_i, Y >= 0`. An instance
//! `min c'x, A x = b, x in K` maps onto the SDPA *dual* with
//!
//! * one SDPA constraint per row: `F_i = A_i`, `c_i = b_i`;
//! * `F_0 = -C`, so SDPA reports the negated optimal value;
//! * a leading diagonal (LP) block holding `[x_free+, x_free-, x_nonneg]`,
//!   followed by the PSD blocks in layout order.
//!
//! Free variables are split as `x = x+ - x-`. Reading produces an instance
//! without free variables: every diagonal block is appended to the
//! nonnegative part in file order, and PSD blocks keep their order.

use super::{svec_index, ConeLayout, SdpInstance};
use std::f64::consts::SQRT_2;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SdpaError {
    #[error("SDPA input ended early: expected {0}")]
    Truncated(&'static str),
    #[error("SDPA token `{token}` is not a valid {what}")]
    BadToken { token: String, what: &'static str },
    #[error("SDPA entry refers to {what} {index}, outside 1..={limit}")]
    OutOfRange { what: &'static str, index: i64, limit: usize },
    #[error("SDPA diagonal block entry ({i}, {j}) is off the diagonal")]
    OffDiagonal { i: usize, j: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Renders `inst` in SDPA sparse format.
pub fn to_sdpa_string(inst: &SdpInstance) -> String {
    let l = &inst.layout;
    let lp = 2 * l.free + l.nonneg;
    let mut out = String::new();
    let _ = writeln!(out, "\"exported block-conic instance; SDPA optimum is the negated objective");
    let _ = writeln!(out, "{}", inst.rows.len());
    let mut structure: Vec<String> = Vec::new();
    if lp > 0 {
        structure.push(format!("-{lp}"));
    }
    structure.extend(l.psd.iter().map(|s| s.to_string()));
    let _ = writeln!(out, "{}", structure.len());
    let _ = writeln!(out, "{}", structure.join(" "));
    let bs: Vec<String> = inst.b.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(out, "{}", bs.join(" "));

    let psd_base = if lp > 0 { 2 } else { 1 };
    let lp_end = l.free + l.nonneg;
    let entry = |out: &mut String, mat: usize, col: usize, v: f64, sign: f64| {
        if v == 0.0 {
            return;
        }
        if col < l.free {
            let _ = writeln!(out, "{mat} 1 {} {} {:e}", col + 1, col + 1, sign * v);
            let _ = writeln!(out, "{mat} 1 {} {} {:e}", l.free + col + 1, l.free + col + 1, -sign * v);
        } else if col < lp_end {
            let k = l.free + col + 1;
            let _ = writeln!(out, "{mat} 1 {k} {k} {:e}", sign * v);
        } else {
            let (blk, p, q) = locate(l, col);
            let val = if p == q { v } else { v / SQRT_2 };
            let _ = writeln!(out, "{mat} {} {} {} {:e}", psd_base + blk, p + 1, q + 1, sign * val);
        }
    };
    for (k, &c) in inst.c.iter().enumerate() {
        entry(&mut out, 0, k, c, -1.0);
    }
    for (i, row) in inst.rows.iter().enumerate() {
        let mut sorted = row.clone();
        sorted.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::new();
        for (k, v) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += v,
                _ => merged.push((k, v)),
            }
        }
        for (k, v) in merged {
            entry(&mut out, i + 1, k, v, 1.0);
        }
    }
    out
}

pub fn write_sdpa(inst: &SdpInstance, path: &std::path::Path) -> Result<(), SdpaError> {
    std::fs::write(path, to_sdpa_string(inst))?;
    Ok(())
}

fn locate(l: &ConeLayout, col: usize) -> (usize, usize, usize) {
    let mut off = l.free + l.nonneg;
    for (j, &s) in l.psd.iter().enumerate() {
        let len = s * (s + 1) / 2;
        if col < off + len {
            let k = col - off;
            let q = ((((8 * k + 1) as f64).sqrt() - 1.0) / 2.0).floor() as usize;
            let q = if (q + 1) * (q + 2) / 2 <= k { q + 1 } else { q };
            let p = k - q * (q + 1) / 2;
            return (j, p, q);
        }
        off += len;
    }
    unreachable!("column {col} outside layout")
}

struct Tokens<'a> {
    inner: std::vec::IntoIter<&'a str>,
}

impl<'a> Tokens<'a> {
    fn next_raw(&mut self, what: &'static str) -> Result<&'a str, SdpaError> {
        self.inner.next().ok_or(SdpaError::Truncated(what))
    }
    fn int(&mut self, what: &'static str) -> Result<i64, SdpaError> {
        let t = self.next_raw(what)?;
        t.parse::<i64>()
            .or_else(|_| t.parse::<f64>().ok().filter(|v| v.fract() == 0.0).map(|v| v as i64).ok_or(()))
            .map_err(|_| SdpaError::BadToken { token: t.into(), what })
    }
    fn float(&mut self, what: &'static str) -> Result<f64, SdpaError> {
        let t = self.next_raw(what)?;
        t.parse::<f64>().map_err(|_| SdpaError::BadToken { token: t.into(), what })
    }
}

fn first_token(line: &str) -> &str {
    line.split(|c: char| c.is_whitespace() || "{}(),".contains(c)).find(|s| !s.is_empty()).unwrap_or("")
}

/// Parses SDPA sparse text. Separators `{ } ( ) ,` are treated as spaces.
pub fn from_sdpa_str(text: &str) -> Result<SdpInstance, SdpaError> {
    let mut lines = text.lines().filter(|l| {
        let t = l.trim_start();
        !(t.is_empty() || t.starts_with('"') || t.starts_with('*'))
    });
    let parse_header = |line: Option<&str>, what: &'static str| -> Result<usize, SdpaError> {
        let line = line.ok_or(SdpaError::Truncated(what))?;
        let tok = first_token(line);
        tok.parse::<usize>().map_err(|_| SdpaError::BadToken { token: tok.into(), what })
    };
    let m = parse_header(lines.next(), "mDIM")?;
    let nblock = parse_header(lines.next(), "nBLOCK")?;
    // Header lines may carry trailing commentary ("2 = bLOCKsTRUCT"): numbers
    // are read up to the first non-numeric token on each line.
    let numeric = |line: &str| -> Vec<f64> {
        line.split(|c: char| c.is_whitespace() || "{}(),".contains(c))
            .filter(|s| !s.is_empty())
            .map_while(|t| t.parse::<f64>().ok())
            .collect()
    };
    let mut header = Vec::with_capacity(nblock + m);
    while header.len() < nblock {
        let line = lines.next().ok_or(SdpaError::Truncated("block structure"))?;
        header.extend(numeric(line).into_iter().take(nblock - header.len()));
    }
    let structure: Vec<i64> = header.iter().map(|v| *v as i64).collect();
    let mut b = Vec::with_capacity(m);
    while b.len() < m {
        let line = lines.next().ok_or(SdpaError::Truncated("objective coefficients"))?;
        let vals = numeric(line);
        if vals.is_empty() {
            return Err(SdpaError::BadToken { token: first_token(line).into(), what: "objective coefficient" });
        }
        b.extend(vals.into_iter().take(m - b.len()));
    }
    let rest: Vec<&str> = lines
        .flat_map(|l| l.split(|c: char| c.is_whitespace() || "{}(),".contains(c)))
        .filter(|s| !s.is_empty())
        .collect();
    let mut toks = Tokens { inner: rest.into_iter() };

    let mut lp_offsets = vec![None; nblock];
    let mut psd_index = vec![None; nblock];
    let mut nonneg = 0usize;
    let mut psd = Vec::new();
    for (k, &s) in structure.iter().enumerate() {
        if s < 0 {
            lp_offsets[k] = Some(nonneg);
            nonneg += s.unsigned_abs() as usize;
        } else {
            psd_index[k] = Some(psd.len());
            psd.push(s as usize);
        }
    }
    let layout = ConeLayout { free: 0, nonneg, psd };
    let mut inst = SdpInstance::new(layout.clone());
    inst.rows = vec![Vec::new(); m];
    inst.b = b;

    while let Some(first) = toks.inner.next() {
        let mat = first.parse::<i64>().map_err(|_| SdpaError::BadToken { token: first.into(), what: "matrix number" })?;
        let blk = toks.int("block number")?;
        let i = toks.int("row index")?;
        let j = toks.int("column index")?;
        let v = toks.float("entry value")?;
        if mat < 0 || mat as usize > m {
            return Err(SdpaError::OutOfRange { what: "matrix", index: mat, limit: m });
        }
        if blk < 1 || blk as usize > nblock {
            return Err(SdpaError::OutOfRange { what: "block", index: blk, limit: nblock });
        }
        let bk = blk as usize - 1;
        let side = structure[bk].unsigned_abs() as usize;
        for idx in [i, j] {
            if idx < 1 || idx as usize > side {
                return Err(SdpaError::OutOfRange { what: "entry index", index: idx, limit: side });
            }
        }
        let (i, j) = (i as usize - 1, j as usize - 1);
        let (col, coef) = if let Some(off) = lp_offsets[bk] {
            if i != j {
                return Err(SdpaError::OffDiagonal { i: i + 1, j: j + 1 });
            }
            (off + i, v)
        } else {
            let pj = psd_index[bk].unwrap();
            let col = layout.psd_offset(pj) + svec_index(i, j);
            (col, if i == j { v } else { v * SQRT_2 })
        };
        if mat == 0 {
            inst.c[col] -= coef;
        } else {
            inst.rows[mat as usize - 1].push((col, coef));
        }
    }
    Ok(inst)
}

pub fn read_sdpa(path: &std::path::Path) -> Result<SdpInstance, SdpaError> {
    from_sdpa_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_inverts_svec_index() {
        let l = ConeLayout { free: 1, nonneg: 2, psd: vec![3, 4] };
        for (j, &s) in l.psd.iter().enumerate() {
            for q in 0..s {
                for p in 0..=q {
                    assert_eq!(locate(&l, l.psd_offset(j) + svec_index(p, q)), (j, p, q));
                }
            }
        }
    }

    #[test]
    fn reads_classic_example() {
        // The example shipped with SDPA's manual.
        let text = "\"Example 1: mDim = 3, nBLOCK = 1, {2}\"\n\
                    3 = mDIM\n1 = nBOLCK\n2 = bLOCKsTRUCT\n{48, -8, 20}\n\
                    0 1 1 1 -11\n0 1 2 2 23\n1 1 1 1 10\n1 1 1 2 4\n2 1 2 2 -8\n\
                    3 1 1 2 -8\n3 1 2 2 -2\n";
        let inst = from_sdpa_str(text).unwrap();
        assert_eq!(inst.layout.psd, vec![2]);
        assert_eq!(inst.b, vec![48.0, -8.0, 20.0]);
        assert_eq!(inst.c, vec![11.0, 0.0, -23.0]);
        assert_eq!(inst.rows[0], vec![(0, 10.0), (1, 4.0 * SQRT_2)]);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(from_sdpa_str("1\n1\n2\n"), Err(SdpaError::Truncated(_))));
        assert!(matches!(from_sdpa_str("1\n1\n-2\n1\n1 1 1 2 1\n"), Err(SdpaError::OffDiagonal { .. })));
        assert!(matches!(from_sdpa_str("1\n1\n2\n1\n3 1 1 1 1\n"), Err(SdpaError::OutOfRange { .. })));
    }
}
