use std::f64::consts::PI;
use std::path::Path;

use ndarray::{concatenate, Array1, Array2, Axis};

use super::csvio::{read_csv, write_csv};
use crate::netcore::SeededRng;
use crate::{Error, Result};

/// Training intervals of the benchmark; the rest of `[-1, 1]` is
/// out-of-distribution.
pub const ID_INTERVALS: [(f64, f64); 2] = [(-0.8, -0.2), (0.2, 0.8)];

/// Paired inputs and targets, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl RegressionData {
    pub fn new(x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::shape(
                format!("{} target rows", x.nrows()),
                y.nrows(),
            ));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), rows),
            y: self.y.select(Axis(0), rows),
        }
    }

    /// Columns `x0.., y0..` (or `x, y` when both are scalar).
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let names = column_names(self.x.ncols(), self.y.ncols());
        let header: Vec<&str> = names.iter().map(String::as_str).collect();
        let table = concatenate(Axis(1), &[self.x.view(), self.y.view()]).unwrap();
        write_csv(path, &header, &table)
    }

    /// Reads a CSV whose last `output_dim` columns are targets.
    pub fn from_csv(path: &Path, output_dim: usize) -> Result<Self> {
        let (_, table) = read_csv(path)?;
        if table.ncols() <= output_dim {
            return Err(Error::format(
                path,
                format!("need more than {output_dim} columns"),
            ));
        }
        let split = table.ncols() - output_dim;
        Ok(Self {
            x: table.slice(ndarray::s![.., ..split]).to_owned(),
            y: table.slice(ndarray::s![.., split..]).to_owned(),
        })
    }
}

fn column_names(dx: usize, dy: usize) -> Vec<String> {
    if dx == 1 && dy == 1 {
        return vec!["x".into(), "y".into()];
    }
    (0..dx)
        .map(|i| format!("x{i}"))
        .chain((0..dy).map(|i| format!("y{i}")))
        .collect()
}

/// The piecewise benchmark: `½(sin³(2πx) − 1)` on `[-1, 0)` and
/// `½(sin³(3πx) + 1)` on `[0, 1]`.
pub fn discontinuous_fn(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * ((2.0 * PI * x).sin().powi(3) - 1.0)
    } else {
        0.5 * ((3.0 * PI * x).sin().powi(3) + 1.0)
    }
}

pub fn is_in_distribution(x: f64) -> bool {
    ID_INTERVALS.iter().any(|&(a, b)| x >= a && x <= b)
}

/// `n` equidistant points per training interval, endpoints included.
fn layout(n_per: usize) -> Vec<f64> {
    ID_INTERVALS
        .iter()
        .flat_map(|&(a, b)| {
            (0..n_per).map(move |i| {
                let t = if n_per == 1 {
                    0.0
                } else {
                    i as f64 / (n_per - 1) as f64
                };
                a * (1.0 - t) + b * t
            })
        })
        .collect()
}

/// `N/2` equidistant points on each training interval with additive
/// `N(0, noise_std²)` noise on the targets.
pub fn sample_discontinuous(
    n: usize,
    noise_std: f64,
    rng: &mut SeededRng,
) -> Result<RegressionData> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "N must be even and at least 2, got {n}"
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise std must be non-negative, got {noise_std}"
        )));
    }
    let xs = layout(n / 2);
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| discontinuous_fn(x) + noise_std * rng.normal())
        .collect();
    RegressionData::new(
        Array2::from_shape_vec((n, 1), xs).unwrap(),
        Array2::from_shape_vec((n, 1), ys).unwrap(),
    )
}

/// `n` equispaced points on `[-1, 1]` with exact targets, for evaluation.
pub fn evaluation_grid(n: usize) -> RegressionData {
    let x = Array1::linspace(-1.0, 1.0, n);
    let y = x.mapv(discontinuous_fn);
    RegressionData {
        x: x.insert_axis(Axis(1)),
        y: y.insert_axis(Axis(1)),
    }
}
