//! CSV ingestion and export, day aggregation, per-group summaries, and
//! synthetic cohorts with known truth.

mod aggregate;
mod csv_io;
mod summary;
mod synth;

pub use aggregate::{aggregate_daily, DailyAggregation};
pub use csv_io::{read_csv, read_table, write_csv, write_table, DropReport, SchemaConfig, TimeFormat};
pub use summary::{summarize, GroupSummary, LevelShare, Stats, SummaryTable};
pub use synth::{synthesize, BinaryFactor, Curve, GroupDef, Shape, Synthetic, SyntheticScenario, Truth, TruthSamples};
