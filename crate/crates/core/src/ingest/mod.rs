//! Loading, validation, aggregation and alignment of the three modalities.

pub mod events;
pub mod features;
pub mod split;
pub mod tracts;
pub mod weather;

pub use events::{
    rasterize_events, read_events, DropReport, EventLocation, EventRecord, ObservationCube,
    OutputManifest, TimeWindow,
};
pub use features::{derive_aggregates, Category, FeatureTable};
pub use split::{chronological_split, Batch, DatasetSplit, Normalizer, Segment, SegmentOrder, WindowSource};
pub use tracts::{ingest_tracts, LatLon, Polygon, TractGeometry};
pub use weather::{ingest_weather, WeatherSeries};
