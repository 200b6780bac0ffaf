//! CSV and plot-data artifacts.
//!
//! Floats are written in their shortest round-trip representation so that
//! identical runs produce byte-identical files.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::evaluation::{FiveNumber, LossReport, WeightTrace};
use crate::tvar::{TvarParams, TvarRealization};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        ryu::Buffer::new().format_finite(v).to_string()
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Columns `u, theta_1..theta_d, sigma`.
pub fn write_params_csv<W: Write>(out: W, params: &TvarParams) -> Result<()> {
    let mut w = writer(out);
    let d = params.order();
    let mut header = vec!["u".to_string()];
    header.extend((1..=d).map(|j| format!("theta_{j}")));
    header.push("sigma".into());
    w.write_record(&header)?;
    for ((u, theta), sigma) in params
        .grid()
        .iter()
        .zip(params.theta_grid())
        .zip(params.sigma_grid())
    {
        let mut row = vec![fmt_f64(*u)];
        row.extend(theta.iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(*sigma));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Raw parameter table read from CSV, not yet validated for stability.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamsTable {
    pub grid: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

pub fn read_params_csv(path: &Path) -> Result<ParamsTable> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Config(format!(
            "cannot open parameter file {}: {e}",
            path.display()
        ))
    })?;
    parse_params_csv(file).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_params_csv<R: std::io::Read>(input: R) -> Result<ParamsTable> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let d = header.len().saturating_sub(2);
    let expected: Vec<String> = std::iter::once("u".to_string())
        .chain((1..=d).map(|j| format!("theta_{j}")))
        .chain(std::iter::once("sigma".to_string()))
        .collect();
    if d == 0 || header != expected {
        return Err(domain(format!(
            "header must be u,theta_1..theta_d,sigma, found {}",
            header.join(",")
        )));
    }
    let mut table = ParamsTable {
        grid: Vec::new(),
        theta: Vec::new(),
        sigma: Vec::new(),
    };
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| domain(format!("line {}: {e}", line + 2)))?;
        table.grid.push(values[0]);
        table.theta.push(values[1..=d].to_vec());
        table.sigma.push(values[d + 1]);
    }
    if table.grid.len() < 2 {
        return Err(domain("parameter file needs at least two rows"));
    }
    Ok(table)
}

/// Columns `t, x, sigma_t`.
pub fn write_realization_csv<W: Write>(out: W, real: &TvarRealization) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["t", "x", "sigma_t"])?;
    for (t, (x, s)) in real.x.iter().zip(&real.sigma_trace).enumerate() {
        w.write_record([(t + 1).to_string(), fmt_f64(*x), fmt_f64(*s)])?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: `replication, predictor_id, L_T`.
pub fn write_replications_csv<W: Write>(out: W, report: &LossReport) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["replication", "predictor_id", "L_T"])?;
    for rec in &report.records {
        for (id, loss) in report.predictor_ids.iter().zip(&rec.losses) {
            w.write_record([rec.replication.to_string(), id.clone(), fmt_f64(*loss)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `predictor_id, min, q25, median, q75, max`.
pub fn write_summary_csv<W: Write>(out: W, report: &LossReport) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["predictor_id", "min", "q25", "median", "q75", "max"])?;
    for (id, s) in report.predictor_ids.iter().zip(&report.summary) {
        w.write_record([
            id.clone(),
            fmt_f64(s.min),
            fmt_f64(s.q25),
            fmt_f64(s.median),
            fmt_f64(s.q75),
            fmt_f64(s.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Columns `t, alpha_1..alpha_N`.
pub fn write_weights_csv<W: Write>(out: W, trace: &WeightTrace) -> Result<()> {
    let mut w = writer(out);
    let n = trace.rows.first().map_or(0, Vec::len);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("alpha_{i}")));
    w.write_record(&header)?;
    for (t, row) in trace.rows.iter().enumerate() {
        let mut rec = vec![(t + 1).to_string()];
        rec.extend(row.iter().map(|v| fmt_f64(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct BoxplotEntry<'a> {
    predictor_id: &'a str,
    #[serde(flatten)]
    summary: FiveNumber,
}

/// Plot data: one five-number summary per predictor, bank first, then the
/// aggregates.
pub fn write_plot_data<W: Write>(mut out: W, report: &LossReport) -> Result<()> {
    let entries: Vec<BoxplotEntry> = report
        .predictor_ids
        .iter()
        .zip(&report.summary)
        .map(|(id, s)| BoxplotEntry {
            predictor_id: id,
            summary: *s,
        })
        .collect();
    let value = serde_json::json!({
        "statistic": "L_T",
        "replications": report.records.len(),
        "bank_size": report.bank.n,
        "boxes": entries,
    });
    serde_json::to_writer_pretty(&mut out, &value)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Static SVG boxplot of the five-number summaries. A dashed separator
/// splits the bank from the aggregates.
pub fn write_boxplot_svg<W: Write>(mut out: W, report: &LossReport) -> Result<()> {
    let (width, height, margin) = (80.0 * report.summary.len() as f64 + 80.0, 360.0, 40.0);
    let finite: Vec<f64> = report
        .summary
        .iter()
        .flat_map(|s| [s.min, s.max])
        .filter(|v| v.is_finite())
        .collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (-1.0, 1.0)
    };
    let y = |v: f64| margin + (hi - v) / (hi - lo) * (height - 2.0 * margin);

    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    )?;
    for (k, (id, s)) in report.predictor_ids.iter().zip(&report.summary).enumerate() {
        if !s.median.is_finite() {
            continue;
        }
        let cx = margin + 40.0 + 80.0 * k as f64;
        writeln!(
            out,
            r#"<line x1="{cx}" y1="{:.2}" x2="{cx}" y2="{:.2}" stroke="black"/>"#,
            y(s.max),
            y(s.min)
        )?;
        writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="40" height="{:.2}" fill="white" stroke="black"/>"#,
            cx - 20.0,
            y(s.q75),
            (y(s.q25) - y(s.q75)).max(0.5)
        )?;
        writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="red"/>"#,
            cx - 20.0,
            y(s.median),
            cx + 20.0,
            y(s.median)
        )?;
        writeln!(
            out,
            r#"<text x="{cx}" y="{:.2}" text-anchor="middle">{id}</text>"#,
            height - 10.0
        )?;
    }
    let sep = margin + 80.0 * report.bank.n as f64;
    writeln!(
        out,
        r#"<line x1="{sep}" y1="{margin}" x2="{sep}" y2="{:.2}" stroke="red" stroke-dasharray="4"/>"#,
        height - margin
    )?;
    writeln!(out, "</svg>")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tvar::TvarParams;

    #[test]
    fn float_format_round_trips() {
        for v in [
            0.0,
            1.0,
            -0.1,
            1e-300,
            123456.789,
            f64::MIN_POSITIVE,
            1.0 / 3.0,
        ] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(f64::NAN), "NaN");
    }

    #[test]
    fn params_csv_round_trip() {
        let params = TvarParams::new(
            vec![0.0, 0.3, 1.0],
            vec![vec![0.1, -0.2], vec![0.3, 0.0], vec![1.0 / 3.0, 0.05]],
            vec![1.0, 0.7, 0.9],
            0.9,
            0.5,
            1.0,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_params_csv(&mut buf, &params).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("u,theta_1,theta_2,sigma\n"));
        let table = parse_params_csv(buf.as_slice()).unwrap();
        assert_eq!(table.grid, params.grid());
        assert_eq!(table.theta, params.theta_grid());
        assert_eq!(table.sigma, params.sigma_grid());
    }

    #[test]
    fn params_csv_rejects_bad_header() {
        assert!(parse_params_csv("u,sigma\n0,1\n1,1\n".as_bytes()).is_err());
        assert!(parse_params_csv("u,theta_2,sigma\n0,0,1\n1,0,1\n".as_bytes()).is_err());
        assert!(parse_params_csv("u,theta_1,sigma\n0,x,1\n1,0,1\n".as_bytes()).is_err());
    }
}
