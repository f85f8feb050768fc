"""Preference-weighted tool selection with online capability correction and
stepwise preference training for a subtask planner."""

from .capability_matrix import DimensionSet, PerformanceMatrix, ToolInfo, init_new_tool, normalize
from .estimator import EvaluationGoals, StepEvaluation, evaluate
from .selector import PreferenceWeights, Ranking, SuitabilityScores, rank, score, select
from .updater import AdaptiveUpdater, UpdateConfig

__all__ = [
    "AdaptiveUpdater",
    "DimensionSet",
    "EvaluationGoals",
    "PerformanceMatrix",
    "PreferenceWeights",
    "Ranking",
    "StepEvaluation",
    "SuitabilityScores",
    "ToolInfo",
    "UpdateConfig",
    "evaluate",
    "init_new_tool",
    "normalize",
    "rank",
    "score",
    "select",
]

__version__ = "0.1.0"
