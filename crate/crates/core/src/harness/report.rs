use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::plot::{LinePlot, Series};
use super::runs::{ConvergenceReport, FattenedReport, LimitReport};
use crate::error::Result;
use crate::transfer::{write_defect_csv, TransferDefectReport};

pub const CONVERGE_CSV_HEADER: &str = "n,lambda_limit,eps,lambda_eps,gap,alpha_fit";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn write_limit_csv<W: Write>(mut w: W, r: &LimitReport) -> Result<()> {
    write!(w, "n,lambda_oracle,lambda_extrapolated,error")?;
    for run in &r.runs {
        write!(w, ",lambda_h{}", run.h)?;
    }
    writeln!(w)?;
    for n in 0..r.oracle.len() {
        let ext = r.extrapolated.get(n).map(|&x| num(x)).unwrap_or_default();
        let err = r.error.get(n).map(|&x| num(x)).unwrap_or_default();
        write!(w, "{n},{},{ext},{err}", num(r.oracle[n]))?;
        for run in &r.runs {
            let v = run.values.get(n).map(|&x| num(x)).unwrap_or_default();
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_fattened_csv<W: Write>(mut w: W, r: &FattenedReport) -> Result<()> {
    writeln!(w, "eps,h,n_z,dofs,n,lambda")?;
    for run in &r.runs {
        for (n, &v) in run.values.iter().enumerate() {
            writeln!(w, "{},{},{},{},{n},{}", run.eps, run.h, run.n_z, run.dofs, num(v))?;
        }
    }
    for s in &r.per_eps {
        for (n, &v) in s.extrapolated.iter().enumerate() {
            writeln!(w, "{},extrapolated,,,{n},{}", s.eps, num(v))?;
        }
    }
    Ok(())
}

pub fn write_converge_csv<W: Write>(mut w: W, r: &ConvergenceReport) -> Result<()> {
    writeln!(w, "{CONVERGE_CSV_HEADER}")?;
    for row in &r.rows {
        let alpha = r
            .fits
            .iter()
            .find(|f| f.n == row.n)
            .and_then(|f| f.fit)
            .map(|f| num(f.alpha))
            .unwrap_or_else(|| "nan".into());
        writeln!(
            w,
            "{},{},{},{},{},{alpha}",
            row.n,
            num(row.lambda_limit),
            row.eps,
            num(row.lambda_eps),
            num(row.gap)
        )?;
    }
    Ok(())
}

pub fn write_limit_outputs(dir: &Path, r: &LimitReport) -> Result<()> {
    let mut w = create(dir, "limit_spectrum.csv")?;
    write_limit_csv(&mut w, r)?;
    w.flush()?;
    write_json(dir, "limit_spectrum.json", r)
}

pub fn write_fattened_outputs(dir: &Path, r: &FattenedReport) -> Result<()> {
    let mut w = create(dir, "fattened_spectrum.csv")?;
    write_fattened_csv(&mut w, r)?;
    w.flush()?;
    write_json(dir, "fattened_spectrum.json", r)
}

pub fn write_defect_outputs(dir: &Path, reports: &[TransferDefectReport]) -> Result<()> {
    let mut w = create(dir, "defects.csv")?;
    write_defect_csv(&mut w, reports)?;
    w.flush()?;
    write_json(dir, "defects.json", &reports)
}

pub fn spectrum_plot(r: &ConvergenceReport) -> LinePlot {
    let mut series = Vec::new();
    for f in &r.fits {
        let pts: Vec<(f64, f64)> = r.rows.iter().filter(|x| x.n == f.n).map(|x| (x.eps, x.lambda_eps)).collect();
        let Some(limit) = r.rows.iter().find(|x| x.n == f.n).map(|x| x.lambda_limit) else {
            continue;
        };
        series.push(Series {
            name: format!("n = {}", f.n),
            points: pts.clone(),
            dashed: false,
        });
        let (lo, hi) = pts.iter().fold((f64::INFINITY, 0.0f64), |(a, b), p| (a.min(p.0), b.max(p.0)));
        series.push(Series {
            name: format!("limit {}", f.n),
            points: vec![(0.0f64.max(lo * 0.5), limit), (hi, limit)],
            dashed: true,
        });
    }
    LinePlot {
        title: "Fattened eigenvalues against eps".into(),
        x_label: "eps".into(),
        y_label: "lambda".into(),
        log_x: false,
        log_y: false,
        series,
    }
}

pub fn defect_plot(reports: &[TransferDefectReport]) -> LinePlot {
    let names = ["dJ_iso", "dJ_en", "dK_iso", "dK_en"];
    let series = (0..4)
        .map(|k| Series {
            name: names[k].into(),
            points: reports.iter().map(|r| (r.eps, r.defects()[k])).collect(),
            dashed: false,
        })
        .collect();
    LinePlot {
        title: "Transfer defects".into(),
        x_label: "eps".into(),
        y_label: "defect".into(),
        log_x: true,
        log_y: true,
        series,
    }
}

/// Writes the CSV, JSON and SVG outputs of a convergence study.
pub fn write_convergence_outputs(dir: &Path, r: &ConvergenceReport) -> Result<()> {
    let mut w = create(dir, "converge.csv")?;
    write_converge_csv(&mut w, r)?;
    w.flush()?;
    write_json(dir, "converge.json", r)?;
    write_limit_outputs(dir, &r.limit)?;
    write_fattened_outputs(dir, &r.fattened)?;
    write_defect_outputs(dir, &r.defects)?;
    fs::write(dir.join("spectrum_vs_eps.svg"), spectrum_plot(r).to_svg())?;
    fs::write(dir.join("defects.svg"), defect_plot(&r.defects).to_svg())?;
    Ok(())
}
