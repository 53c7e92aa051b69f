"""Surfacing engine for dense ribbon-stroke 3D drawings.

Turns collections of width-annotated 3D polylines (as drawn with a VR
brush) into manifold triangle meshes by matching stroke vertices
sideways, zipping matched sections into strips, consolidating the
strips with correlation clustering, and closing the remaining gaps.
"""

from .consolidate import InvariantError
from .mesher import SurfaceMesh
from .pipeline import PipelineOptions, run_pipeline
from .scoring import Side, persistence_score, vertex_score
from .stroke_model import (Config, Drawing, Stroke, StrokeFormatError,
                           ValidationError, load_drawing, save_drawing)
from .synth_eval import (EvalReport, GroundTruthSurface, SplitMix64,
                         SyntheticSpec, evaluate, generate)

__version__ = "0.1.0"

__all__ = [
    "Config", "Drawing", "Stroke", "StrokeFormatError", "ValidationError",
    "SurfaceMesh", "PipelineOptions", "run_pipeline", "Side",
    "vertex_score", "persistence_score", "SyntheticSpec", "generate",
    "evaluate", "EvalReport", "GroundTruthSurface", "SplitMix64",
    "InvariantError", "__version__",
]
