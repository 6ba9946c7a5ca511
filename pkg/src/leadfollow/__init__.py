"""Leadership dynamics and followership from group trajectories.

Pipeline: trajectories -> dynamic following network (DTW lag scores) ->
faction initiators per window -> diagram of leadership dynamics and its
frequent sequences -> co-faction / lead-follow networks and clusters.
"""
from .core import Dataset, WindowSpec, ingest_csv, windows
from .pipeline import PipelineConfig, PipelineResult, run_pipeline
from .simgen import GroundTruth, ScenarioSpec, simulate

__all__ = [
    "Dataset",
    "GroundTruth",
    "PipelineConfig",
    "PipelineResult",
    "ScenarioSpec",
    "WindowSpec",
    "ingest_csv",
    "run_pipeline",
    "simulate",
    "windows",
]
__version__ = "0.1.0"
