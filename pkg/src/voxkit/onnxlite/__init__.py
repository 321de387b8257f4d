"""Embedded ONNX support: wire-format codec, model parser/serializer, and a
numpy executor for the elementwise/softmax op subset used by patch
predictors. No external runtime required.
"""

from .model import OnnxGraph, OnnxModel, OnnxNode, OnnxValueInfo, parse_model
from .runtime import GraphRunner, SUPPORTED_OPS, load_model, run_graph

__all__ = [
    "OnnxGraph",
    "OnnxModel",
    "OnnxNode",
    "OnnxValueInfo",
    "parse_model",
    "run_graph",
    "load_model",
    "GraphRunner",
    "SUPPORTED_OPS",
]
