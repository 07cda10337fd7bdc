//! Image files, the dataset pipeline, run configuration and CSV reports used
//! by the command-line front end.

mod config;
mod dataset;
mod pgm;
mod report;
mod synthetic;

pub use config::{Precision, RunConfig};
pub use dataset::{build_dataset, extract_patches, load_directory, split_indices, Dataset, DatasetSpec, Source};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm};
pub use report::{
    write_analysis_csv, write_epoch_csv, write_eval_csv, write_histogram_csv, AnalysisReport, EvalRow, EVAL_HEADER,
    HISTOGRAM_HEADER,
};
pub use synthetic::{synthetic_corpus, synthetic_image};
