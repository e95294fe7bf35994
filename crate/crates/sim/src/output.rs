use std::io::{self, Write};

use crate::experiment::Row;

pub const CSV_HEADER: &str =
    "sweep_param,sweep_value,scheme,mean_bpcu,stderr_bpcu,mean_downlink_bpcu,feasible_frac,n_trials";

/// C `%.10e`: ten fraction digits and a signed exponent of at least two digits.
pub fn format_e10(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.10e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn write_csv<W: Write>(rows: &[Row], mut out: W) -> io::Result<()> {
    out.write_all(CSV_HEADER.as_bytes())?;
    out.write_all(b"\n")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.sweep_param,
            format_e10(r.sweep_value),
            r.scheme,
            format_e10(r.mean_bpcu),
            format_e10(r.stderr_bpcu),
            format_e10(r.mean_downlink_bpcu),
            format_e10(r.feasible_frac),
            r.n_trials
        )?;
    }
    out.flush()
}

/// Parses a file written by [`write_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<Row>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing or unexpected header".into());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| format!("row {}: bad {what}", i + 1);
            if f.len() != 8 {
                return Err(bad("field count"));
            }
            let num = |j: usize, what: &str| f[j].parse::<f64>().map_err(|_| bad(what));
            Ok(Row {
                sweep_param: f[0].to_string(),
                sweep_value: num(1, "sweep_value")?,
                scheme: f[2].parse().map_err(|_| bad("scheme"))?,
                mean_bpcu: num(3, "mean_bpcu")?,
                stderr_bpcu: num(4, "stderr_bpcu")?,
                mean_downlink_bpcu: num(5, "mean_downlink_bpcu")?,
                feasible_frac: num(6, "feasible_frac")?,
                n_trials: f[7].parse().map_err(|_| bad("n_trials"))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::SchemeKind;

    #[test]
    fn matches_c_formatting() {
        assert_eq!(format_e10(1.23456789e-3), "1.2345678900e-03");
        assert_eq!(format_e10(0.0), "0.0000000000e+00");
        assert_eq!(format_e10(-42.5), "-4.2500000000e+01");
        assert_eq!(format_e10(1e100), "1.0000000000e+100");
        assert_eq!(format_e10(f64::NAN), "nan");
    }

    #[test]
    fn round_trips_with_lf_endings() {
        let rows = vec![Row {
            sweep_param: "alpha".into(),
            sweep_value: 1e-3,
            scheme: SchemeKind::ApproachIRandomEta,
            mean_bpcu: 12.5,
            stderr_bpcu: 0.25,
            mean_downlink_bpcu: 30.0,
            feasible_frac: 1.0,
            n_trials: 200,
        }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains('\r'));
        assert!(text.ends_with('\n'));
        assert_eq!(parse_csv(&text).unwrap(), rows);
    }
}
