//! CSV emitters and the spectrum CSV reader.
//!
//! Floats are written in scientific notation with 12 significant digits so
//! identical runs produce identical bytes. Every file starts with a
//! `# config: <json>` line recording the resolved configuration.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::basis::localized_basis;
use crate::scattering::{DensityMap, SpectrumTable};
use crate::spectrum::LevelCurves;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
}

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.11e}")
    }
}

fn write_config_line<W: Write>(w: &mut W, config_json: &str) -> io::Result<()> {
    // keep the header a single line whatever the caller passes
    let flat: String = config_json.chars().filter(|c| *c != '\n' && *c != '\r').collect();
    writeln!(w, "# config: {flat}")
}

pub fn spectrum_header() -> Vec<String> {
    let mut h = vec!["omega".to_string(), "R".to_string(), "T".to_string()];
    h.extend(localized_basis().iter().map(|s| format!("pop_{}", s.label())));
    h.push("pop_sym".into());
    h.push("pop_antisym".into());
    h.push("flags".into());
    h
}

/// Columns: `omega, R, T`, one `pop_<label>` per localized bare state,
/// `pop_sym, pop_antisym, flags`.
pub fn write_spectrum_csv<W: Write>(mut w: W, table: &SpectrumTable, config_json: &str) -> Result<(), IoError> {
    write_config_line(&mut w, config_json)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(spectrum_header())?;
    for row in &table.rows {
        let mut rec = vec![
            format_float(row.omega),
            format_float(row.reflection),
            format_float(row.transmission),
        ];
        match &row.populations {
            Some(p) => {
                rec.extend(p.bare.iter().map(|v| format_float(*v)));
                rec.push(format_float(p.symmetric));
                rec.push(format_float(p.antisymmetric));
            }
            None => rec.extend(std::iter::repeat_n("nan".to_string(), 13)),
        }
        rec.push(row.flag.as_str().to_string());
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns: `delta, E_0..E_{n-1}, label_0..label_{n-1}` with levels sorted
/// ascending at each cavity frequency.
pub fn write_levels_csv<W: Write>(mut w: W, curves: &LevelCurves, config_json: &str) -> Result<(), IoError> {
    write_config_line(&mut w, config_json)?;
    let mut out = csv::Writer::from_writer(w);
    let n = curves.n_levels();
    let mut header = vec!["delta".to_string()];
    header.extend((0..n).map(|i| format!("E_{i}")));
    header.extend((0..n).map(|i| format!("label_{i}")));
    out.write_record(&header)?;
    for ((delta, energies), labels) in curves.delta_grid.iter().zip(&curves.energies).zip(&curves.labels) {
        let mut rec = vec![format_float(*delta)];
        rec.extend(energies.iter().map(|e| format_float(*e)));
        rec.extend(labels.iter().map(|l| l.label()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Columns `omega, delta, R`; rows run over omega fastest, delta outermost.
pub fn write_map_csv<W: Write>(mut w: W, map: &DensityMap, config_json: &str) -> Result<(), IoError> {
    write_config_line(&mut w, config_json)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["omega", "delta", "R"])?;
    for (i, delta) in map.deltas.iter().enumerate() {
        for (j, omega) in map.omegas.iter().enumerate() {
            out.write_record([format_float(*omega), format_float(*delta), format_float(map.get(i, j))])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Populations projected on the eigenstates of the localized block.
/// Columns `omega, dressed_0..dressed_{n-1}, flags`; the eigenvalues go in a
/// second comment line.
pub fn write_dressed_csv<W: Write>(
    mut w: W,
    eigenvalues: &[f64],
    rows: &[(f64, Option<Vec<f64>>)],
    config_json: &str,
) -> Result<(), IoError> {
    write_config_line(&mut w, config_json)?;
    let ev: Vec<String> = eigenvalues.iter().map(|e| format_float(*e)).collect();
    writeln!(w, "# eigenvalues: {}", ev.join(" "))?;
    let mut out = csv::Writer::from_writer(w);
    let n = eigenvalues.len();
    let mut header = vec!["omega".to_string()];
    header.extend((0..n).map(|i| format!("dressed_{i}")));
    header.push("flags".into());
    out.write_record(&header)?;
    for (omega, pops) in rows {
        let mut rec = vec![format_float(*omega)];
        match pops {
            Some(p) => {
                rec.extend(p.iter().map(|v| format_float(*v)));
                rec.push("ok".into());
            }
            None => {
                rec.extend(std::iter::repeat_n("nan".to_string(), n));
                rec.push("singular".into());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// A numeric table read back from a spectrum CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCsv {
    pub columns: Vec<String>,
    /// Row-major values for every column except `flags`.
    pub values: Vec<Vec<f64>>,
    pub flags: Vec<String>,
}

impl SpectrumCsv {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.values.iter().map(|r| r[k]).collect())
    }

    /// `(omega, column)` pairs from rows flagged `ok`.
    pub fn series(&self, name: &str) -> Option<(Vec<f64>, Vec<f64>)> {
        let x = self.column("omega")?;
        let y = self.column(name)?;
        Some(
            x.into_iter()
                .zip(y)
                .zip(&self.flags)
                .filter(|(_, f)| f.as_str() == "ok")
                .map(|(p, _)| p)
                .unzip(),
        )
    }
}

/// Reads a spectrum CSV. Lines starting with `#` are ignored; an `omega`
/// column is required and a trailing `flags` column is optional.
pub fn parse_spectrum_csv<R: Read>(r: R) -> Result<SpectrumCsv, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if !header.iter().any(|h| h == "omega") {
        return Err(IoError::Malformed {
            line: 1,
            msg: "missing `omega` column".into(),
        });
    }
    let flag_col = header.iter().position(|h| h == "flags");
    if flag_col.is_some_and(|k| k + 1 != header.len()) {
        return Err(IoError::Malformed {
            line: 1,
            msg: "`flags` must be the last column".into(),
        });
    }
    let columns: Vec<String> = header.iter().filter(|h| h.as_str() != "flags").cloned().collect();

    let mut values = Vec::new();
    let mut flags = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(columns.len());
        for (k, field) in rec.iter().enumerate() {
            if Some(k) == flag_col {
                continue;
            }
            let v = field.trim().parse::<f64>().map_err(|_| IoError::Malformed {
                line,
                msg: format!("`{field}` is not a number"),
            })?;
            row.push(v);
        }
        flags.push(flag_col.map_or("ok", |k| rec.get(k).unwrap_or("ok").trim()).to_string());
        values.push(row);
    }
    Ok(SpectrumCsv { columns, values, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SystemParams;
    use crate::scattering::{sweep_spectrum, SpectrumOptions};

    #[test]
    fn float_format() {
        assert_eq!(format_float(1.0), "1.00000000000e0");
        assert_eq!(format_float(-0.00123456789012345), "-1.23456789012e-3");
        assert_eq!(format_float(f64::NAN), "nan");
    }

    #[test]
    fn spectrum_roundtrip() {
        let t = sweep_spectrum(&SystemParams::default(), 0.9, 1.1, 21, &SpectrumOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&mut buf, &t, "{\"a\": 1}").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config: {\"a\": 1}\n"));
        let parsed = parse_spectrum_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed.columns.len(), spectrum_header().len() - 1);
        assert_eq!(parsed.values.len(), 21);
        let r = parsed.column("R").unwrap();
        for ((a, b), f) in r.iter().zip(&t.rows).zip(&parsed.flags) {
            assert_eq!(f, b.flag.as_str());
            if b.is_ok() {
                assert!((a - b.reflection).abs() <= 1e-11 * b.reflection.abs());
            } else {
                assert!(a.is_nan());
            }
        }
        let (x, y) = parsed.series("pop_gg10").unwrap();
        assert_eq!(x.len(), y.len());
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_spectrum_csv("R,T\n1,2\n".as_bytes()).is_err());
        assert!(parse_spectrum_csv("omega,R\n1,x\n".as_bytes()).is_err());
        assert!(parse_spectrum_csv("omega,R\n1\n".as_bytes()).is_err());
        assert!(parse_spectrum_csv("omega,flags,R\n1,ok,2\n".as_bytes()).is_err());
        let ok = parse_spectrum_csv("# c\nomega,R\n1,0.5\n".as_bytes()).unwrap();
        assert_eq!(ok.flags, ["ok"]);
    }
}
