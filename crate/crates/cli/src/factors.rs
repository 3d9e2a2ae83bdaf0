//! `TAPS1` factor files.
//!
//! Both variants start with the same ASCII header:
//!
//! ```text
//! TAPS1 <binary|text>
//! field <name>
//! dims <D>
//! <dim name> <n_d>        (D lines, declaration order)
//! modes <M>
//! end
//! ```
//!
//! followed by the factor matrices in dimension order, each column-major
//! (node index fastest). The binary variant stores little-endian `f64`; the
//! text variant writes one value per line in shortest round-trip form.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use taps_core::td::TdField;

pub const MAGIC: &str = "TAPS1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorFormat {
    #[default]
    Binary,
    Text,
}

#[derive(Debug, thiserror::Error)]
pub enum FactorFileError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed factor file: {0}")]
    Format(String),
}

fn bad(msg: impl Into<String>) -> FactorFileError {
    FactorFileError::Format(msg.into())
}

pub fn write_field<W: Write>(out: &mut W, field: &TdField<f64>, format: FactorFormat) -> Result<(), FactorFileError> {
    let variant = match format {
        FactorFormat::Binary => "binary",
        FactorFormat::Text => "text",
    };
    writeln!(out, "{MAGIC} {variant}")?;
    writeln!(out, "field {}", field.name)?;
    writeln!(out, "dims {}", field.dims.len())?;
    for (d, u) in field.dims.iter().zip(&field.factors) {
        writeln!(out, "{d} {}", u.nrows())?;
    }
    writeln!(out, "modes {}", field.modes())?;
    writeln!(out, "end")?;
    for u in &field.factors {
        for m in 0..u.ncols() {
            for i in 0..u.nrows() {
                let v = u[[i, m]];
                match format {
                    FactorFormat::Binary => out.write_all(&v.to_le_bytes())?,
                    FactorFormat::Text => writeln!(out, "{v:?}")?,
                }
            }
        }
    }
    Ok(())
}

fn header_line<R: BufRead>(r: &mut R) -> Result<String, FactorFileError> {
    let mut s = String::new();
    if r.read_line(&mut s)? == 0 {
        return Err(bad("unexpected end of header"));
    }
    Ok(s.trim_end_matches(['\n', '\r']).to_string())
}

fn keyed(line: &str, key: &str) -> Result<String, FactorFileError> {
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .map(str::to_string)
        .ok_or_else(|| bad(format!("expected `{key} ...`, found `{line}`")))
}

fn number(s: &str) -> Result<usize, FactorFileError> {
    s.trim().parse().map_err(|_| bad(format!("expected a count, found `{s}`")))
}

pub fn read_field<R: Read>(input: R) -> Result<TdField<f64>, FactorFileError> {
    let mut r = BufReader::new(input);
    let first = header_line(&mut r)?;
    let format = match first.as_str() {
        "TAPS1 binary" => FactorFormat::Binary,
        "TAPS1 text" => FactorFormat::Text,
        other => return Err(bad(format!("unknown header `{other}`"))),
    };
    let name = keyed(&header_line(&mut r)?, "field")?;
    let d = number(&keyed(&header_line(&mut r)?, "dims")?)?;
    let mut dims = Vec::with_capacity(d);
    let mut sizes = Vec::with_capacity(d);
    for _ in 0..d {
        let line = header_line(&mut r)?;
        let (dim, n) = line.rsplit_once(' ').ok_or_else(|| bad(format!("bad dimension line `{line}`")))?;
        dims.push(dim.to_string());
        sizes.push(number(n)?);
    }
    let m = number(&keyed(&header_line(&mut r)?, "modes")?)?;
    if header_line(&mut r)? != "end" {
        return Err(bad("missing `end` after header"));
    }
    let total: usize = sizes.iter().map(|n| n * m).sum();
    let values: Vec<f64> = match format {
        FactorFormat::Binary => {
            let mut bytes = Vec::new();
            r.read_to_end(&mut bytes)?;
            if bytes.len() != total * 8 {
                return Err(bad(format!("expected {} payload bytes, found {}", total * 8, bytes.len())));
            }
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect()
        }
        FactorFormat::Text => {
            let mut v = Vec::with_capacity(total);
            for line in r.lines() {
                let line = line?;
                let t = line.trim();
                if t.is_empty() {
                    continue;
                }
                v.push(t.parse::<f64>().map_err(|_| bad(format!("bad value `{t}`")))?);
            }
            if v.len() != total {
                return Err(bad(format!("expected {total} values, found {}", v.len())));
            }
            v
        }
    };
    let mut factors = Vec::with_capacity(d);
    let mut off = 0;
    for &n in &sizes {
        let block = &values[off..off + n * m];
        off += n * m;
        factors.push(Array2::from_shape_fn((n, m), |(i, j)| block[j * n + i]));
    }
    TdField::new(name, dims, factors).map_err(|e| bad(e.to_string()))
}

pub fn save_field(path: &Path, field: &TdField<f64>, format: FactorFormat) -> Result<(), FactorFileError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_field(&mut f, field, format)?;
    f.flush()?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<TdField<f64>, FactorFileError> {
    read_field(std::fs::File::open(path)?)
}

/// File name used for a field's factors.
pub fn factor_file_name(field: &str) -> String {
    format!("factors-{field}.taps")
}
