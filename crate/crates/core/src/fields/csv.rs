//! Plain-text field dumps.
//!
//! ```text
//! # nx=<nx> ny=<ny> lx=<lx> ly=<ly>
//! v(0,0),v(1,0),...,v(nx-1,0)
//! ...
//! v(0,ny-1),...,v(nx-1,ny-1)
//! ```
//!
//! Rows run over increasing y, values are written with 17 significant digits
//! so a dump reads back bit-identically.

use super::{Grid2D, ScalarField};
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldCsvError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn write_field<W: Write>(mut w: W, field: &ScalarField) -> io::Result<()> {
    let g = field.grid();
    writeln!(w, "# nx={} ny={} lx={} ly={}", g.nx(), g.ny(), g.lx(), g.ly())?;
    let mut line = String::new();
    for row in field.values().chunks(g.nx()) {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> FieldCsvError {
    FieldCsvError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_field<R: BufRead>(r: R) -> Result<ScalarField, FieldCsvError> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty file"))??;
    let body = header
        .strip_prefix('#')
        .ok_or_else(|| parse_err(1, "missing '#' header"))?;
    let (mut nx, mut ny, mut lx, mut ly) = (None, None, None, None);
    for token in body.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header token '{token}'")))?;
        let bad = |_| parse_err(1, format!("bad value for {key}: '{value}'"));
        match key {
            "nx" => nx = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "ny" => ny = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "lx" => lx = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            "ly" => ly = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(parse_err(1, format!("unknown header key '{key}'"))),
        }
    }
    let (nx, ny, lx, ly) = match (nx, ny, lx, ly) {
        (Some(a), Some(b), Some(c), Some(d)) => (a, b, c, d),
        _ => return Err(parse_err(1, "header needs nx, ny, lx and ly")),
    };
    let grid = Grid2D::new(nx, ny, lx, ly).map_err(|e| parse_err(1, e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        let line = line?;
        let lineno = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        if rows > ny {
            return Err(parse_err(lineno, format!("more than {ny} rows")));
        }
        let before = values.len();
        for cell in line.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad number '{}'", cell.trim())))?;
            if !v.is_finite() {
                return Err(parse_err(lineno, "non-finite value"));
            }
            values.push(v);
        }
        if values.len() - before != nx {
            return Err(parse_err(
                lineno,
                format!("expected {nx} values, found {}", values.len() - before),
            ));
        }
    }
    if rows != ny {
        return Err(parse_err(rows + 1, format!("expected {ny} rows, found {rows}")));
    }
    Ok(ScalarField::from_vec(grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_and_layout() {
        let g = Grid2D::new(4, 4, 1.0, 0.5).unwrap();
        let f = ScalarField::from_fn(g, |x, y| x + 10.0 * y);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# nx=4 ny=4 lx=1 ly=0.5");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 4);
        assert_eq!(first[0], "7.5000000000000000e-1");
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn rejects_ragged_rows() {
        let text = "# nx=4 ny=4 lx=1 ly=1\n1,2,3,4\n1,2,3\n1,2,3,4\n1,2,3,4\n";
        let err = read_field(text.as_bytes()).unwrap_err();
        assert!(matches!(err, FieldCsvError::Parse { line: 3, .. }));
    }

    proptest! {
        #[test]
        fn dump_reads_back_bit_identical(vals in proptest::collection::vec(-1e6..1e6f64, 20)) {
            let g = Grid2D::new(5, 4, 0.3, 1.7).unwrap();
            let f = ScalarField::new(g, vals).unwrap();
            let mut buf = Vec::new();
            write_field(&mut buf, &f).unwrap();
            let back = read_field(buf.as_slice()).unwrap();
            prop_assert_eq!(back, f);
        }
    }
}
