//! Sensing matrices, block partitioning and the three equivalent acquisition
//! forms: per-block products, the block-diagonal full operator, and a strided
//! convolution whose filters are the matrix rows.

mod acquire;
mod io;
mod matrix;
mod partition;

pub use acquire::{
    acquire_block, acquire_image, acquire_image_conv, acquire_image_full, expand_block_diagonal, MeasurementSet,
};
pub(crate) use io::ByteReader;
pub use io::{read_matrix, read_measurements, write_matrix, write_measurements};
pub use matrix::{
    chebyshev_sequence, make_bernoulli, make_chebyshev, make_gaussian, rows_for_rate, ChebyshevConfig, MatrixKind,
    SensingMatrix,
};
pub use partition::{assemble_blocks, block_partition, BlockGrid};
