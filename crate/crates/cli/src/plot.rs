//! SVG figures from the CSVs written by `eval` and `sweep-beta`. Every plot
//! also writes the tidy table it was drawn from.

use std::ops::Range;
use std::path::{Path, PathBuf};

use ibuq::datagen::{read_csv, write_csv};
use ndarray::{Array1, Array2};
use plotters::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::PlotKind;

pub const FIGURE_FILE: &str = "figure.svg";
pub const TIDY_FILE: &str = "data.csv";

const SIZE: (u32, u32) = (800, 560);

/// A CSV whose columns are looked up by name.
pub struct Table {
    path: PathBuf,
    header: Vec<String>,
    data: Array2<f64>,
}

impl Table {
    pub fn read(path: &Path) -> CliResult<Self> {
        if !path.exists() {
            return Err(CliError::usage(format!(
                "{} does not exist",
                path.display()
            )));
        }
        let (header, data) = read_csv(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            header,
            data,
        })
    }

    pub fn has(&self, name: &str) -> bool {
        self.header.iter().any(|h| h == name)
    }

    pub fn col(&self, name: &str) -> CliResult<Array1<f64>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Schema {
                path: self.path.clone(),
                column: name.to_string(),
            })?;
        Ok(self.data.column(i).to_owned())
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }
}

fn range(values: &[&Array1<f64>]) -> Range<f64> {
    let (lo, hi) = values
        .iter()
        .flat_map(|v| v.iter())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !lo.is_finite() {
        return 0.0..1.0;
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    lo - pad..hi + pad
}

fn plot_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Plot {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

type Chart<'a> = ChartContext<
    'a,
    SVGBackend<'a>,
    Cartesian2d<plotters::coord::types::RangedCoordf64, plotters::coord::types::RangedCoordf64>,
>;

/// Draws axes over `x` × `y` and hands the chart to `draw`.
fn render(
    path: &Path,
    x: Range<f64>,
    y: Range<f64>,
    draw: impl FnOnce(&mut Chart) -> Result<(), Box<dyn std::error::Error>>,
) -> CliResult<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    let run = || -> Result<(), Box<dyn std::error::Error>> {
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(20)
            .x_label_area_size(0)
            .y_label_area_size(0)
            .build_cartesian_2d(x, y)?;
        chart
            .configure_mesh()
            .disable_x_mesh()
            .disable_y_mesh()
            .x_labels(0)
            .y_labels(0)
            .draw()?;
        draw(&mut chart)?;
        root.present()?;
        Ok(())
    };
    run().map_err(|e| plot_error(path, e))
}

fn line(xs: &Array1<f64>, ys: &Array1<f64>) -> Vec<(f64, f64)> {
    xs.iter().copied().zip(ys.iter().copied()).collect()
}

pub fn info_plane(input: &Path, out: &Path) -> CliResult<()> {
    let t = Table::read(input)?;
    let (beta, ixz, iyz) = (t.col("beta")?, t.col("ixz")?, t.col("iyz")?);
    let tidy = ndarray::stack(ndarray::Axis(1), &[beta.view(), ixz.view(), iyz.view()]).unwrap();
    write_csv(&out.join(TIDY_FILE), &["beta", "ixz", "iyz"], &tidy)?;
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| ixz[a].total_cmp(&ixz[b]));
    let pts: Vec<(f64, f64)> = order.iter().map(|&i| (ixz[i], iyz[i])).collect();
    render(
        &out.join(FIGURE_FILE),
        range(&[&ixz]),
        range(&[&iyz]),
        |c| {
            c.draw_series(LineSeries::new(pts.clone(), &BLUE))?;
            c.draw_series(pts.iter().map(|&p| Circle::new(p, 4, BLUE.filled())))?;
            c.draw_series(order.iter().map(|&i| {
                Text::new(
                    format!("β={}", beta[i]),
                    (ixz[i], iyz[i]),
                    ("sans-serif", 14),
                )
            }))?;
            Ok(())
        },
    )
}

pub fn band(input: &Path, train: Option<&Path>, out: &Path) -> CliResult<()> {
    let t = Table::read(input)?;
    let (x, mean, std) = (t.col("x")?, t.col("mean")?, t.col("std")?);
    let lower = &mean - &(2.0 * &std);
    let upper = &mean + &(2.0 * &std);
    let truth = if t.has("truth") {
        Some(t.col("truth")?)
    } else {
        None
    };
    let mut header = vec!["x", "mean", "lower", "upper"];
    let mut cols = vec![x.view(), mean.view(), lower.view(), upper.view()];
    if let Some(tr) = &truth {
        header.push("truth");
        cols.push(tr.view());
    }
    write_csv(
        &out.join(TIDY_FILE),
        &header,
        &ndarray::stack(ndarray::Axis(1), &cols).unwrap(),
    )?;
    let points = match train {
        Some(p) => {
            let tt = Table::read(p)?;
            Some((tt.col("x")?, tt.col("y")?))
        }
        None => None,
    };
    let mut ys = vec![&lower, &upper];
    if let Some((_, py)) = &points {
        ys.push(py);
    }
    render(&out.join(FIGURE_FILE), range(&[&x]), range(&ys), |c| {
        let mut poly = line(&x, &upper);
        poly.extend(line(&x, &lower).into_iter().rev());
        c.draw_series(std::iter::once(Polygon::new(poly, BLUE.mix(0.2).filled())))?;
        if let Some(tr) = &truth {
            c.draw_series(LineSeries::new(line(&x, tr), &BLACK))?;
        }
        c.draw_series(LineSeries::new(line(&x, &mean), &BLUE))?;
        if let Some((px, py)) = &points {
            c.draw_series(
                px.iter()
                    .zip(py.iter())
                    .map(|(&a, &b)| Circle::new((a, b), 2, RED.filled())),
            )?;
        }
        Ok(())
    })
}

pub fn lengths(input: &Path, out: &Path) -> CliResult<()> {
    let t = Table::read(input)?;
    let (l, rmse, std) = (t.col("length")?, t.col("rmse")?, t.col("mean_std")?);
    write_csv(
        &out.join(TIDY_FILE),
        &["length", "rmse", "mean_std"],
        &ndarray::stack(ndarray::Axis(1), &[l.view(), rmse.view(), std.view()]).unwrap(),
    )?;
    render(
        &out.join(FIGURE_FILE),
        range(&[&l]),
        range(&[&rmse, &std]),
        |c| {
            c.draw_series(LineSeries::new(line(&l, &rmse), &BLUE))?;
            c.draw_series(LineSeries::new(line(&l, &std), &RED))?;
            Ok(())
        },
    )
}

/// One panel per time cut, stacked vertically; each shows the mean, a
/// two-std band and the reference when present.
pub fn field(input: &Path, out: &Path) -> CliResult<()> {
    let t = Table::read(input)?;
    let (x, time, mean, std) = (t.col("x")?, t.col("t")?, t.col("mean")?, t.col("std")?);
    let reference = if t.has("reference") {
        Some(t.col("reference")?)
    } else {
        None
    };
    let lower = &mean - &(2.0 * &std);
    let upper = &mean + &(2.0 * &std);
    let mut header = vec!["x", "t", "mean", "lower", "upper"];
    let mut cols = vec![
        x.view(),
        time.view(),
        mean.view(),
        lower.view(),
        upper.view(),
    ];
    if let Some(r) = &reference {
        header.push("reference");
        cols.push(r.view());
    }
    write_csv(
        &out.join(TIDY_FILE),
        &header,
        &ndarray::stack(ndarray::Axis(1), &cols).unwrap(),
    )?;

    let mut cuts: Vec<f64> = time.to_vec();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let path = out.join(FIGURE_FILE);
    let root = SVGBackend::new(&path, (SIZE.0, 280 * cuts.len().max(1) as u32)).into_drawing_area();
    let mut ys = vec![&lower, &upper];
    if let Some(r) = &reference {
        ys.push(r);
    }
    let yr = range(&ys);
    let xr = range(&[&x]);
    let run = || -> Result<(), Box<dyn std::error::Error>> {
        root.fill(&WHITE)?;
        for (panel, &tc) in root.split_evenly((cuts.len().max(1), 1)).iter().zip(&cuts) {
            let rows: Vec<usize> = (0..t.len()).filter(|&i| time[i] == tc).collect();
            let pick = |v: &Array1<f64>| rows.iter().map(|&i| v[i]).collect::<Array1<f64>>();
            let (px, pm, pl, pu) = (pick(&x), pick(&mean), pick(&lower), pick(&upper));
            let mut chart = ChartBuilder::on(panel)
                .margin(15)
                .build_cartesian_2d(xr.clone(), yr.clone())?;
            chart
                .configure_mesh()
                .disable_x_mesh()
                .disable_y_mesh()
                .x_labels(0)
                .y_labels(0)
                .draw()?;
            let mut poly = line(&px, &pu);
            poly.extend(line(&px, &pl).into_iter().rev());
            chart.draw_series(std::iter::once(Polygon::new(poly, BLUE.mix(0.2).filled())))?;
            if let Some(r) = &reference {
                chart.draw_series(LineSeries::new(line(&px, &pick(r)), &BLACK))?;
            }
            chart.draw_series(LineSeries::new(line(&px, &pm), &BLUE))?;
        }
        root.present()?;
        Ok(())
    };
    run().map_err(|e| plot_error(&path, e))
}

pub fn run(kind: PlotKind, c: &RunConfig) -> CliResult<()> {
    let input = c.path("input");
    let train = c.optional::<PathBuf>("train")?;
    let out = c.path("out");
    // validate the input before creating the output directory
    Table::read(&input)?;
    c.write(&out)?;
    match kind {
        PlotKind::InfoPlane => info_plane(&input, &out),
        PlotKind::Band => band(&input, train.as_deref(), &out),
        PlotKind::Lengths => lengths(&input, &out),
        PlotKind::Field => field(&input, &out),
    }?;
    println!("wrote {}", out.join(FIGURE_FILE).display());
    Ok(())
}
