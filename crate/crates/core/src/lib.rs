//! Simulation laboratory for sampling bias on a Twitter-like platform.
//!
//! A census-grounded synthetic population joins the platform under a known
//! inclusion design, emits a month of tweets, and is sampled by four
//! collection mechanisms. Each sample then goes through filtering, noisy
//! demographic inference and regression-based population estimation, and the
//! estimates are scored against the census.

pub mod census;
pub mod debias;
pub mod demographics;
pub mod error;
pub mod evaluate;
pub mod geo;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod polygon;
pub mod preprocess;
pub mod rng;
pub mod samplers;
pub mod snowflake;
pub mod stats;
pub mod tiler;
pub mod worldgen;

pub use census::{DemographicCell, PopulationTable};
pub use debias::{DesignRow, FitOptions, FittedModel, ModelSpec, RegressionTable, ZeroRowPolicy};
pub use demographics::{AgeBracket, CountryCode, Gender, LangCode};
pub use error::{Error, ErrorClass, Result};
pub use evaluate::{EstimateReport, Variant};
pub use metrics::{MetricTable, TTest};
pub use geo::{Division, GeoLevel, GeoUnit, Rect, Region, State};
pub use inference::{ConfusionSpec, LabeledUser};
pub use pipeline::{run_pipeline, PipelineConfig, ReportBundle};
pub use polygon::Polygon;
pub use samplers::{Method, SampleSet, UserSample};
pub use snowflake::{SnowflakeGenerator, SnowflakeId};
pub use tiler::{BoundingBox, TileSet};
pub use preprocess::{FilterConfig, FilterKind, RemovalReport};
pub use worldgen::{BehaviorConfig, InclusionDesign, SimUser, TweetEvent, Window};
