//! Spatial graph construction: distance kernel, feature correlations and
//! their homophily-weighted combination.

pub mod correlation;
pub mod distance;
pub mod homophily;

pub use correlation::{node_correlations, pearson, CorrelationGroup, CorrelationStack};
pub use distance::{distance_kernel, pairwise_distances, DistanceMatrix};
pub use homophily::{
    adjacency_csv, build_graph, heatmap_csv, homophily_embed, load_adjacency, parse_adjacency_csv,
    AdjacencyManifest, GraphParams, HomophilyGraph,
};
