//! Text format: optional `#` comment lines, a header `w,x1,...,xd`, then one
//! row per atom.

use std::io::{BufRead, Write};

use super::EmpiricalMeasure;
use crate::error::{Error, Result};

pub fn write_measure_csv<W: Write>(m: &EmpiricalMeasure, mut out: W) -> Result<()> {
    let header: Vec<String> = std::iter::once("w".to_string()).chain((1..=m.dim()).map(|k| format!("x{k}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..m.len() {
        write!(out, "{:e}", m.weights()[i])?;
        for x in m.point(i) {
            write!(out, ",{x:e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_measure_csv<R: BufRead>(input: R) -> Result<EmpiricalMeasure> {
    let mut dim = None;
    let mut weights = Vec::new();
    let mut points = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some(d) = dim else {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let ok = cols.len() >= 2
                && cols[0] == "w"
                && cols[1..].iter().enumerate().all(|(k, c)| *c == format!("x{}", k + 1));
            if !ok {
                return Err(Error::Parse { line: lineno, msg: format!("bad header {line:?}") });
            }
            dim = Some(cols.len() - 1);
            continue;
        };
        let values = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        if values.len() != d + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} columns, found {}", d + 1, values.len()),
            });
        }
        weights.push(values[0]);
        points.extend_from_slice(&values[1..]);
    }
    let dim = dim.ok_or(Error::Parse { line: 0, msg: "missing header".into() })?;
    EmpiricalMeasure::new(dim, points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_atoms() {
        let m = EmpiricalMeasure::new(2, vec![0.1, -2.0, 1.0 / 3.0, 4.5], vec![0.3, 0.7]).unwrap();
        let mut buf = Vec::new();
        write_measure_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("w,x1,x2\n"));
        let back = read_measure_csv(&buf[..]).unwrap();
        assert_eq!(back.points(), m.points());
        assert_eq!(back.weights(), m.weights());
    }

    #[test]
    fn skips_comments_and_rejects_bad_rows() {
        let text = "# generated\nw,x1\n0.5,1\n0.5,2\n";
        let m = read_measure_csv(text.as_bytes()).unwrap();
        assert_eq!(m.points(), &[1.0, 2.0]);
        assert!(read_measure_csv("w,y1\n1,0\n".as_bytes()).is_err());
        assert!(read_measure_csv("w,x1\n1,0,3\n".as_bytes()).is_err());
        assert!(read_measure_csv("w,x1\n0.2,0\n".as_bytes()).is_err());
    }
}
