"""Street and city graph toolkit for predicting urban restoration quality.

Builds undirected entity graphs from street scene segmentation, embeds each
road's spatial structure into a fixed-length vector, assembles a city-level
road graph with spatial weights, trains graph neural classifiers, runs the
pairwise rating workflow that produces road labels, and generates the
clustering / centrality analysis reports.
"""

__version__ = "0.1.0"

from .entity_graph import (
    EntityGraph,
    EntityNode,
    SegmentationMap,
    build_entity_graph,
    compute_class_centroids,
    degree_centrality,
    merge_road_graphs,
    top_centrality,
)

__all__ = [
    "EntityGraph",
    "EntityNode",
    "SegmentationMap",
    "build_entity_graph",
    "compute_class_centroids",
    "degree_centrality",
    "merge_road_graphs",
    "top_centrality",
]
