//! Grid case data and the graph operators built from it.

mod case;
mod graph;

pub use case::{parse_case, Branch, Bus, CaseData, Generator};
pub use graph::{build_graph, normalized_adjacency, GridGraph};
