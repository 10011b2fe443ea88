//! Shared numerical kernels.

mod gradcheck;
mod kmeans;
pub mod linalg;
mod matrix;
mod ops;
mod pca;
mod rng;
mod scalar;

pub use gradcheck::{finite_diff_grad, max_relative_error};
pub use kmeans::{kmeans, KMeansFit};
pub use matrix::{dot, squared_distance, DenseMatrix};
pub use ops::{log_softmax_at, logsumexp, softmax_in_place, softmax_rows};
pub use pca::{covariance, pca_explained_variance};
pub use rng::RandomSource;
pub use scalar::{sigmoid, Real};
