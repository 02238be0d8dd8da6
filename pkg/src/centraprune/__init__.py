"""Prune dense layers by eigenvector centrality on a neuron cosine-similarity graph."""

__version__ = "0.1.0"

from .centrality import CentralityScores, eigenvector_centrality, rank_neurons
from .errors import CentrapruneError
from .graph import SimilarityGraph, SimilarityMatrix, build_graph, layer_graph, normalize_columns, similarity_matrix
from .net import MlpModel, TrainConfig, evaluate, forward, init_model, rebuild_with_plan, train
from .prune import PrunePlan, PrunedLayer, apply_plan, magnitude_plan, make_plan, slice_downstream
from .tensor_io import Dataset, LayerBundle, TensorFile, read_layer, read_tensor, write_layer, write_tensor

__all__ = [
    "CentralityScores",
    "CentrapruneError",
    "Dataset",
    "LayerBundle",
    "MlpModel",
    "PrunePlan",
    "PrunedLayer",
    "SimilarityGraph",
    "SimilarityMatrix",
    "TensorFile",
    "TrainConfig",
    "apply_plan",
    "build_graph",
    "eigenvector_centrality",
    "evaluate",
    "forward",
    "init_model",
    "layer_graph",
    "magnitude_plan",
    "make_plan",
    "normalize_columns",
    "rank_neurons",
    "read_layer",
    "read_tensor",
    "rebuild_with_plan",
    "similarity_matrix",
    "slice_downstream",
    "train",
    "write_layer",
    "write_tensor",
]
