"""Tool capability boundaries: the dimensions x tools score matrix.

Raw scores are the source of truth. Normalization (each dimension row divided
by its maximum over tools) is computed on read, so repeated updates never
compound rounding in stored values.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateDimension,
    DimensionMismatch,
    DuplicateTool,
    ParseError,
    SchemaMismatch,
    UnknownPeer,
    UnknownTool,
)

logger = logging.getLogger(__name__)


class Category(str, Enum):
    GENERATION = "generation"
    EDITING = "editing"
    CUSTOM = "custom"


GENERATION_DIMS = (
    "color",
    "shape",
    "texture",
    "2D-spatial",
    "3D-spatial",
    "numeracy",
    "non-spatial",
)
EDITING_DIMS = (
    "addition",
    "removement",
    "replacement",
    "attribute-alter",
    "motion-change",
    "style-transfer",
    "background-change",
)
CANONICAL_DIMS = {Category.GENERATION: GENERATION_DIMS, Category.EDITING: EDITING_DIMS}


@dataclass(frozen=True)
class DimensionSet:
    names: tuple[str, ...]
    category: Category = Category.CUSTOM

    def __post_init__(self) -> None:
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "category", Category(self.category))
        if not self.names:
            raise SchemaMismatch("a dimension set needs at least one dimension")
        if len(set(self.names)) != len(self.names):
            raise SchemaMismatch(f"duplicate dimension labels in {list(self.names)}")
        canonical = CANONICAL_DIMS.get(self.category)
        if canonical is not None and set(self.names) != set(canonical):
            unexpected = sorted(set(self.names) - set(canonical))
            missing = sorted(set(canonical) - set(self.names))
            raise SchemaMismatch(
                f"dimensions do not match category {self.category.value!r}: "
                f"unexpected {unexpected}, missing {missing}"
            )

    @classmethod
    def generation(cls) -> "DimensionSet":
        return cls(GENERATION_DIMS, Category.GENERATION)

    @classmethod
    def editing(cls) -> "DimensionSet":
        return cls(EDITING_DIMS, Category.EDITING)

    @classmethod
    def custom(cls, d: int, prefix: str = "dim") -> "DimensionSet":
        return cls(tuple(f"{prefix}{i}" for i in range(d)), Category.CUSTOM)

    def __len__(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class ToolInfo:
    id: str
    description: str = ""


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PerformanceMatrix:
    """Capability scores with one row per dimension and one column per tool.

    Instances are immutable; every operation returns a new matrix.
    """

    dims: DimensionSet
    tools: tuple[str, ...]
    scores: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tools", tuple(self.tools))
        object.__setattr__(self, "scores", _frozen(self.scores))
        if self.scores.shape != (len(self.dims), len(self.tools)):
            raise DimensionMismatch(
                f"scores shape {self.scores.shape} != "
                f"({len(self.dims)}, {len(self.tools)})"
            )
        if any(not t for t in self.tools):
            raise ValueError("tool ids must be non-empty")
        if len(set(self.tools)) != len(self.tools):
            raise DuplicateTool(f"duplicate tool ids in {list(self.tools)}")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")
        if np.any(self.scores < 0):
            raise ValueError("scores must be nonnegative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape

    def index(self, tool: str) -> int:
        try:
            return self.tools.index(tool)
        except ValueError:
            raise UnknownTool(tool) from None

    def column(self, tool: str) -> np.ndarray:
        return self.scores[:, self.index(tool)]

    def degenerate_dims(self) -> list[str]:
        """Labels of dimensions where no tool scores above zero."""
        flat = ~np.any(self.scores > 0, axis=1)
        return [name for name, bad in zip(self.dims.names, flat) if bad]

    def with_scores(self, scores: np.ndarray) -> "PerformanceMatrix":
        return PerformanceMatrix(self.dims, self.tools, scores)

    def normalized(self) -> "PerformanceMatrix":
        return normalize(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PerformanceMatrix):
            return NotImplemented
        return (
            self.dims == other.dims
            and self.tools == other.tools
            and np.array_equal(self.scores, other.scores)
        )

    __hash__ = None  # type: ignore[assignment]


def normalize(matrix: PerformanceMatrix) -> PerformanceMatrix:
    """Divide every dimension row by its maximum over tools.

    All-zero rows are left as they are and reported with a
    :class:`DegenerateDimension` warning.
    """
    scores = np.array(matrix.scores, dtype=float)
    row_max = scores.max(axis=1)
    degenerate = row_max <= 0
    if np.any(degenerate):
        names = [n for n, bad in zip(matrix.dims.names, degenerate) if bad]
        warnings.warn(f"degenerate dimensions (all zero): {names}", DegenerateDimension, stacklevel=2)
    safe = np.where(degenerate, 1.0, row_max)
    out = scores / safe[:, None]
    # x / x is exactly 1.0 in IEEE arithmetic, so the row maximum lands on 1
    # and a second pass divides by 1.0, which keeps the operation idempotent.
    return matrix.with_scores(out)


def init_new_tool(
    matrix: PerformanceMatrix, new_id: str, peer_ids: Sequence[str]
) -> PerformanceMatrix:
    """Append a column for ``new_id`` equal to the mean raw column of its peers."""
    if not peer_ids:
        raise UnknownPeer("at least one peer tool is required")
    missing = [p for p in peer_ids if p not in matrix.tools]
    if missing:
        raise UnknownPeer(f"peer tools not in matrix: {missing}")
    if new_id in matrix.tools:
        raise DuplicateTool(new_id)
    peers = np.stack([matrix.column(p) for p in peer_ids], axis=1)
    new_col = peers.mean(axis=1)
    scores = np.concatenate([matrix.scores, new_col[:, None]], axis=1)
    return PerformanceMatrix(matrix.dims, matrix.tools + (new_id,), scores)


# -- persistence ---------------------------------------------------------------


def registry_to_dict(matrix: PerformanceMatrix, tools: Iterable[ToolInfo] = ()) -> dict:
    info = {t.id: t for t in tools}
    return {
        "category": matrix.dims.category.value,
        "dimensions": list(matrix.dims.names),
        "tools": [
            {
                "id": tool,
                "description": info[tool].description if tool in info else "",
                "scores": [float(x) for x in matrix.scores[:, j]],
            }
            for j, tool in enumerate(matrix.tools)
        ],
    }


def registry_from_dict(data: object) -> tuple[PerformanceMatrix, list[ToolInfo]]:
    if not isinstance(data, dict):
        raise ParseError("registry must be a JSON object", "<root>")
    for key in ("category", "dimensions", "tools"):
        if key not in data:
            raise ParseError(f"missing required field {key!r}", key)
    try:
        category = Category(data["category"])
    except ValueError:
        raise ParseError(f"unknown category {data['category']!r}", "category") from None
    names = data["dimensions"]
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ParseError("expected a list of strings", "dimensions")
    dims = DimensionSet(tuple(names), category)

    raw_tools = data["tools"]
    if not isinstance(raw_tools, list) or not raw_tools:
        raise ParseError("expected a non-empty list of tools", "tools")
    infos: list[ToolInfo] = []
    columns: list[list[float]] = []
    for i, entry in enumerate(raw_tools):
        where = f"tools[{i}]"
        if not isinstance(entry, dict):
            raise ParseError("expected an object", where)
        tool_id = entry.get("id")
        if not isinstance(tool_id, str) or not tool_id:
            raise ParseError("expected a non-empty string", f"{where}.id")
        description = entry.get("description", "")
        if not isinstance(description, str):
            raise ParseError("expected a string", f"{where}.description")
        scores = entry.get("scores")
        if not isinstance(scores, list) or len(scores) != len(dims):
            raise ParseError(f"expected {len(dims)} scores", f"{where}.scores")
        for k, value in enumerate(scores):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParseError("expected a number", f"{where}.scores[{k}]")
            if not np.isfinite(value) or value < 0:
                raise ParseError("scores must be finite and nonnegative", f"{where}.scores[{k}]")
        infos.append(ToolInfo(tool_id, description))
        columns.append([float(v) for v in scores])

    ids = [t.id for t in infos]
    if len(set(ids)) != len(ids):
        raise DuplicateTool(f"duplicate tool ids in registry: {ids}")
    matrix = PerformanceMatrix(dims, tuple(ids), np.array(columns, dtype=float).T)
    degenerate = matrix.degenerate_dims()
    if degenerate:
        warnings.warn(f"degenerate dimensions (all zero): {degenerate}", DegenerateDimension, stacklevel=2)
    return matrix, infos


def dumps_registry(matrix: PerformanceMatrix, tools: Iterable[ToolInfo] = ()) -> str:
    return json.dumps(registry_to_dict(matrix, tools), indent=2) + "\n"


def loads_registry(text: str) -> tuple[PerformanceMatrix, list[ToolInfo]]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    return registry_from_dict(data)


def load_registry(path: str | Path) -> tuple[PerformanceMatrix, list[ToolInfo]]:
    return loads_registry(Path(path).read_text(encoding="utf-8"))


def save_registry(
    path: str | Path, matrix: PerformanceMatrix, tools: Iterable[ToolInfo] = ()
) -> None:
    Path(path).write_text(dumps_registry(matrix, tools), encoding="utf-8")


def to_csv(matrix: PerformanceMatrix) -> str:
    """One row per tool, columns in dimension order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tool", *matrix.dims.names])
    for j, tool in enumerate(matrix.tools):
        writer.writerow([tool, *(repr(float(x)) for x in matrix.scores[:, j])])
    return buf.getvalue()
