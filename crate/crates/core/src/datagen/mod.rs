//! Data pipelines: the discontinuous regression benchmark, Gaussian random
//! field inputs, the diffusion-reaction solver, LOF-based partitioning of the
//! housing table, and dataset files.

mod csvio;
mod discontinuous;
mod grf;
mod housing;
mod lof;
mod operator_data;
pub(crate) mod pde;

pub use csvio::{read_csv, write_csv};
pub use discontinuous::{
    discontinuous_fn, evaluation_grid, is_in_distribution, sample_discontinuous, RegressionData,
    ID_INTERVALS,
};
pub use grf::{grf_sample, rbf_kernel, GrfConfig, GrfSampler};
pub use housing::{
    split_housing, standardize_columns, Band, HousingSplit, HousingSplitConfig, HousingTable,
    HOUSING_COLUMNS, HOUSING_ROWS,
};
pub use lof::lof_scores;
pub use operator_data::{build_operator_dataset, OperatorDataConfig, OperatorDataset};
pub use pde::{periodic_heat_step, solve_diffusion_reaction, PdeConfig};

pub(crate) use operator_data::{generate_pair, query_grid};
