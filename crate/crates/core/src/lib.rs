//! Iris template aging analysis: covariate extraction from iris images, a
//! Hamming-distance iris matcher, genuine-pair assembly and linear models of
//! score degradation over time.
//!
//! The modules follow the data flow:
//!
//! - [`imaging`]: rasters, rubber-sheet unwrapping, median and LoG filters
//! - [`quality`]: OC, LC, IL, SH and radii per image
//! - [`matcher`]: iris codes and masked Hamming distance
//! - [`dataset`]: manifests, genuine pairs, score/covariate/record CSVs
//! - [`regression`]: model language, catalog, QR least squares, reports
//! - [`synth`]: seeded synthetic eyes and scores with known effects
//! - [`pipeline`]: the file-based steps the command line chains together

pub mod dataset;
pub mod imaging;
pub mod matcher;
pub mod par;
pub mod pipeline;
pub mod quality;
pub mod regression;
pub mod synth;

pub use par::Execution;
