//! Plain-text model files.
//!
//! ```text
//! parsikern-model v1
//! gaussian <bandwidth>            | polynomial <offset> <degree>
//! <M> <p> <C>
//! M lines of p dictionary coordinates
//! M lines of C weights
//! ```
//!
//! Reals are written with 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{KernelSpec, Points, RkhsFunction};
use crate::error::{Error, Result};

pub const MODEL_HEADER: &str = "parsikern-model v1";

pub(crate) fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn kernel_line(kernel: &KernelSpec) -> String {
    match *kernel {
        KernelSpec::Gaussian { bandwidth } => format!("gaussian {}", fmt_real(bandwidth)),
        KernelSpec::Polynomial { offset, degree } => {
            format!("polynomial {} {degree}", fmt_real(offset))
        }
    }
}

pub fn parse_kernel_line(line: &str) -> Result<KernelSpec> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let num =
        |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|e| Error::parse("kernel line", format!("{s:?}: {e}"))) };
    let spec = match toks.as_slice() {
        ["gaussian", c] => KernelSpec::Gaussian { bandwidth: num(c)? },
        ["polynomial", b, d] => KernelSpec::Polynomial {
            offset: num(b)?,
            degree: d.parse().map_err(|e| Error::parse("kernel line", format!("{d:?}: {e}")))?,
        },
        _ => return Err(Error::parse("kernel line", format!("unrecognized kernel {line:?}"))),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn model_to_string(f: &RkhsFunction) -> String {
    let mut s = String::new();
    writeln!(s, "{MODEL_HEADER}").unwrap();
    writeln!(s, "{}", kernel_line(f.kernel())).unwrap();
    writeln!(s, "{} {} {}", f.model_order(), f.dim(), f.outputs()).unwrap();
    for row in f.dictionary().rows().take(f.model_order()) {
        let line: Vec<String> = row.iter().map(|v| fmt_real(*v)).collect();
        writeln!(s, "{}", line.join(" ")).unwrap();
    }
    let w = f.weights();
    for m in 0..w.nrows() {
        let line: Vec<String> = (0..w.ncols()).map(|c| fmt_real(w[(m, c)])).collect();
        writeln!(s, "{}", line.join(" ")).unwrap();
    }
    s
}

pub fn write_model(f: &RkhsFunction, mut out: impl Write) -> Result<()> {
    out.write_all(model_to_string(f).as_bytes())?;
    Ok(())
}

pub fn save_model(f: &RkhsFunction, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_string(f))?;
    Ok(())
}

pub fn read_model(input: impl BufRead) -> Result<RkhsFunction> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::parse("model file", format!("unexpected end of file, expected {what}"))),
        }
    };
    let (_, header) = next("header")?;
    if header.trim() != MODEL_HEADER {
        return Err(Error::parse("line 1", format!("expected {MODEL_HEADER:?}, got {header:?}")));
    }
    let (_, kline) = next("kernel line")?;
    let kernel = parse_kernel_line(kline.trim())?;
    let (ln, shape) = next("shape line")?;
    let dims: Vec<usize> = shape
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::parse(format!("line {ln}"), e.to_string()))?;
    let [m, p, c] = dims[..] else {
        return Err(Error::parse(format!("line {ln}"), "expected three integers M p C"));
    };
    let mut read_row = |len: usize| -> Result<Vec<f64>> {
        let (ln, l) = next("data row")?;
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(format!("line {ln}"), e.to_string()))?;
        if row.len() != len {
            return Err(Error::parse(format!("line {ln}"), format!("expected {len} values, got {}", row.len())));
        }
        Ok(row)
    };
    let mut flat = Vec::with_capacity(m * p);
    for _ in 0..m {
        flat.extend(read_row(p)?);
    }
    let mut wflat = Vec::with_capacity(m * c);
    for _ in 0..m {
        wflat.extend(read_row(c)?);
    }
    let dictionary = Points::from_flat(p, flat)?;
    let weights = DMatrix::from_row_slice(m, c, &wflat);
    RkhsFunction::new(kernel, dictionary, weights)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RkhsFunction> {
    let file = std::fs::File::open(path)?;
    read_model(std::io::BufReader::new(file))
}
