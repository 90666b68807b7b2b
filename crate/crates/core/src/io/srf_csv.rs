//! SRF tables as CSV: header `wavelength_nm,band_1,...,band_c`, then one row
//! per ascending wavelength sample.

use std::fmt::Write as _;
use std::path::Path;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::spectral::Srf;

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_srf(text: &str) -> Result<Srf> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (header_line, header) = lines.next().ok_or_else(|| parse_err(1, "empty SRF file"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns[0] != "wavelength_nm" {
        return Err(parse_err(header_line, "header must start with `wavelength_nm`"));
    }
    let bands = columns.len() - 1;
    if bands == 0 {
        return Err(parse_err(header_line, "header names no bands"));
    }
    let mut wavelengths = Vec::new();
    let mut responses = Vec::new();
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != bands + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", bands + 1, fields.len()),
            ));
        }
        let mut values = Vec::with_capacity(fields.len());
        for (k, f) in fields.iter().enumerate() {
            let v: f32 = f
                .parse()
                .map_err(|_| parse_err(line, format!("column {} is not a number: {f:?}", k + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {} is not finite", k + 1)));
            }
            values.push(v);
        }
        let wl = values[0];
        if let Some(&prev) = wavelengths.last() {
            if wl <= prev {
                return Err(parse_err(
                    line,
                    format!("wavelength {wl} does not exceed the previous sample {prev}"),
                ));
            }
        }
        if let Some(k) = values[1..].iter().position(|v| *v < 0.0) {
            return Err(parse_err(line, format!("negative response for {}", columns[k + 1])));
        }
        wavelengths.push(wl);
        responses.extend_from_slice(&values[1..]);
    }
    if wavelengths.is_empty() {
        return Err(parse_err(header_line, "no sample rows"));
    }
    Srf::new(wavelengths, responses, bands)
}

/// CSV text whose numbers parse back to the identical `f32` values.
pub fn format_srf(srf: &Srf) -> String {
    let mut out = String::from("wavelength_nm");
    for b in 0..srf.num_bands() {
        let _ = write!(out, ",band_{}", b + 1);
    }
    out.push('\n');
    for (s, wl) in srf.sample_wavelengths_nm().iter().enumerate() {
        let _ = write!(out, "{wl}");
        for b in 0..srf.num_bands() {
            let _ = write!(out, ",{}", srf.response_at_sample(s, b));
        }
        out.push('\n');
    }
    out
}

pub fn read_srf(path: &Path) -> Result<Srf> {
    parse_srf(&std::fs::read_to_string(path)?)
}

pub fn write_srf(path: &Path, srf: &Srf) -> Result<()> {
    write_atomic(path, format_srf(srf).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(err: Error) -> usize {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn two_bands_three_samples() {
        let srf = parse_srf("wavelength_nm,band_1,band_2\n400,1,0\n500,0.5,0.5\n600,0,1\n").unwrap();
        assert_eq!(srf.num_bands(), 2);
        assert_eq!(srf.num_samples(), 3);
        assert_eq!(srf.sample_wavelengths_nm(), &[400.0, 500.0, 600.0]);
        assert_eq!(srf.response_at_sample(1, 1), 0.5);
        assert_eq!(srf.response_at_sample(2, 0), 0.0);
    }

    #[test]
    fn errors_cite_their_line() {
        let negative = "wavelength_nm,band_1\n400,1\n500,-0.2\n";
        assert_eq!(line_of(parse_srf(negative).unwrap_err()), 3);
        let descending = "wavelength_nm,band_1\n500,1\n400,1\n";
        assert_eq!(line_of(parse_srf(descending).unwrap_err()), 3);
        let ragged = "wavelength_nm,band_1,band_2\n400,1,1\n500,1\n";
        assert_eq!(line_of(parse_srf(ragged).unwrap_err()), 3);
        let junk = "wavelength_nm,band_1\n400,abc\n";
        assert_eq!(line_of(parse_srf(junk).unwrap_err()), 2);
        assert_eq!(line_of(parse_srf("").unwrap_err()), 1);
        assert_eq!(line_of(parse_srf("nm,band_1\n400,1\n").unwrap_err()), 1);
    }

    #[test]
    fn silent_band_is_degenerate() {
        let err = parse_srf("wavelength_nm,band_1,band_2\n400,1,0\n500,1,0\n").unwrap_err();
        assert!(matches!(err, Error::DegenerateSrf(_)));
    }

    #[test]
    fn format_round_trips_exactly() {
        let srf = Srf::new(vec![400.0, 410.5, 433.3], vec![0.1, 1.0 / 3.0, 2e-7, 0.0, 0.9, 1.0], 2).unwrap();
        let text = format_srf(&srf);
        let back = parse_srf(&text).unwrap();
        assert_eq!(back, srf);
        assert_eq!(format_srf(&back), text);
    }
}
