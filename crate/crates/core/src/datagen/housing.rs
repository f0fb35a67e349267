use std::path::Path;

use ndarray::{concatenate, Array1, Array2, Axis};

use super::csvio::{read_csv, write_csv};
use super::discontinuous::RegressionData;
use super::lof::lof_scores;
use crate::netcore::SeededRng;
use crate::{Error, Result};

/// Column order of the housing CSV: eight features, then the target
/// (median house value in units of $100k).
pub const HOUSING_COLUMNS: [&str; 9] = [
    "MedInc",
    "HouseAge",
    "AveRooms",
    "AveBedrms",
    "Population",
    "AveOccup",
    "Latitude",
    "Longitude",
    "MedHouseVal",
];

pub const HOUSING_ROWS: usize = 20640;

#[derive(Debug, Clone, PartialEq)]
pub struct HousingTable {
    pub features: Array2<f64>,
    pub target: Array1<f64>,
}

impl HousingTable {
    pub fn new(features: Array2<f64>, target: Array1<f64>) -> Result<Self> {
        if features.ncols() != 8 {
            return Err(Error::shape("8 feature columns", features.ncols()));
        }
        if features.nrows() != target.len() {
            return Err(Error::shape(
                format!("{} targets", features.nrows()),
                target.len(),
            ));
        }
        Ok(Self { features, target })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// Reads a CSV with a header and the nine [`HOUSING_COLUMNS`] in order.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let (header, table) = read_csv(path)?;
        if header.len() != 9 {
            return Err(Error::format(
                path,
                format!("expected 9 columns, found {}", header.len()),
            ));
        }
        let features = table.slice(ndarray::s![.., ..8]).to_owned();
        let target = table.column(8).to_owned();
        Self::new(features, target).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let t = self.target.view().insert_axis(Axis(1));
        let table = concatenate(Axis(1), &[self.features.view(), t]).unwrap();
        write_csv(path, &HOUSING_COLUMNS, &table)
    }

    /// Converts the original StatLib `cal_housing.data` layout (longitude,
    /// latitude, median age, total rooms, total bedrooms, population,
    /// households, median income, median value; comma-separated, no header)
    /// into per-household averages with the value in $100k.
    pub fn from_statlib(text: &str) -> std::result::Result<Self, String> {
        let mut feats = Vec::new();
        let mut target = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| format!("line {}: not numeric", i + 1))?;
            if v.len() != 9 {
                return Err(format!(
                    "line {}: expected 9 fields, found {}",
                    i + 1,
                    v.len()
                ));
            }
            let households = v[6];
            feats.extend_from_slice(&[
                v[7],
                v[2],
                v[3] / households,
                v[4] / households,
                v[5],
                v[5] / households,
                v[1],
                v[0],
            ]);
            target.push(v[8] / 100_000.0);
        }
        let n = target.len();
        Self::new(
            Array2::from_shape_vec((n, 8), feats).unwrap(),
            Array1::from(target),
        )
        .map_err(|e| e.to_string())
    }
}

/// LOF score bands, from most to least typical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    Id,
    Part1,
    Part2,
    Part3,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::Id, Band::Part1, Band::Part2, Band::Part3];

    /// `thresholds` are the descending band edges (−1.2, −1.5, −2 by default).
    pub fn of(score: f64, thresholds: [f64; 3]) -> Self {
        if score > thresholds[0] {
            Band::Id
        } else if score > thresholds[1] {
            Band::Part1
        } else if score > thresholds[2] {
            Band::Part2
        } else {
            Band::Part3
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Id => "id",
            Band::Part1 => "ood_part1",
            Band::Part2 => "ood_part2",
            Band::Part3 => "ood_part3",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HousingSplitConfig {
    pub k: usize,
    pub thresholds: [f64; 3],
    pub split_seed: u64,
    /// Row count the table must have, if any.
    pub expected_rows: Option<usize>,
}

impl Default for HousingSplitConfig {
    fn default() -> Self {
        Self {
            k: 20,
            thresholds: [-1.2, -1.5, -2.0],
            split_seed: 0,
            expected_rows: Some(HOUSING_ROWS),
        }
    }
}

/// Standardized table, LOF scores and the row indices of each block.
#[derive(Debug, Clone, PartialEq)]
pub struct HousingSplit {
    pub features: Array2<f64>,
    pub target: Array1<f64>,
    pub scores: Array1<f64>,
    pub id_train: Vec<usize>,
    pub id_test: Vec<usize>,
    /// Rows of OOD parts 1, 2 and 3.
    pub ood: [Vec<usize>; 3],
}

impl HousingSplit {
    pub fn rows(&self, band: Band) -> Vec<usize> {
        match band {
            Band::Id => {
                let mut v = self.id_train.clone();
                v.extend_from_slice(&self.id_test);
                v
            }
            Band::Part1 => self.ood[0].clone(),
            Band::Part2 => self.ood[1].clone(),
            Band::Part3 => self.ood[2].clone(),
        }
    }

    /// Band sizes in [`Band::ALL`] order.
    pub fn band_sizes(&self) -> [usize; 4] {
        [
            self.id_train.len() + self.id_test.len(),
            self.ood[0].len(),
            self.ood[1].len(),
            self.ood[2].len(),
        ]
    }

    pub fn data(&self, rows: &[usize]) -> RegressionData {
        RegressionData {
            x: self.features.select(Axis(0), rows),
            y: self.target.select(Axis(0), rows).insert_axis(Axis(1)),
        }
    }
}

/// Column-wise z-scores; constant columns are only centred.
pub fn standardize_columns(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).unwrap();
    let std = x
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 0.0 { s } else { 1.0 });
    ((x - &mean) / &std, mean, std)
}

/// Standardizes, scores with LOF, bands the scores and splits the ID rows
/// 2:1 into train and test.
pub fn split_housing(table: &HousingTable, cfg: &HousingSplitConfig) -> Result<HousingSplit> {
    if let Some(rows) = cfg.expected_rows {
        if table.len() != rows {
            return Err(Error::shape(format!("{rows} housing rows"), table.len()));
        }
    }
    let (features, _, _) = standardize_columns(&table.features);
    let scores = lof_scores(&features, cfg.k)?;
    let mut id = Vec::new();
    let mut ood: [Vec<usize>; 3] = Default::default();
    for (i, &s) in scores.iter().enumerate() {
        match Band::of(s, cfg.thresholds) {
            Band::Id => id.push(i),
            Band::Part1 => ood[0].push(i),
            Band::Part2 => ood[1].push(i),
            Band::Part3 => ood[2].push(i),
        }
    }
    let perm = SeededRng::new(cfg.split_seed).permutation(id.len());
    let n_train = (2 * id.len() + 1) / 3;
    let mut id_train: Vec<usize> = perm[..n_train].iter().map(|&p| id[p]).collect();
    let mut id_test: Vec<usize> = perm[n_train..].iter().map(|&p| id[p]).collect();
    id_train.sort_unstable();
    id_test.sort_unstable();
    Ok(HousingSplit {
        features,
        target: table.target.clone(),
        scores,
        id_train,
        id_test,
        ood,
    })
}
