"""Backend selection for the message-passing inner loops.

The compiled ``_kernels`` extension is used when it imports; otherwise the
numpy twin in ``_kernels_py``. Set ``BHTBP_PURE_PYTHON=1`` to force the
fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("BHTBP_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

__all__ = ["EdgeLayout", "BACKEND", "available_backends", "variable_update", "check_combine"]

BACKEND = "compiled" if _compiled is not None else "python"


def available_backends() -> list[str]:
    return ["compiled", "python"] if _compiled is not None else ["python"]


def _padded(ptr: np.ndarray, order: np.ndarray, sentinel: int):
    counts = np.diff(ptr)
    width = max(int(counts.max()) if counts.size else 0, 1)
    pad = np.full((len(counts), width), sentinel, dtype=np.int64)
    mask = np.arange(width)[None, :] < counts[:, None]
    pad[mask] = order
    return pad, mask


@dataclass
class EdgeLayout:
    """Edge indexing shared by both backends.

    Edges are numbered variable-major: variable i owns edges
    ``var_ptr[i]:var_ptr[i+1]``; ``edge_check[e]`` is the measurement on the
    other end. ``row_edges[row_ptr[j]:row_ptr[j+1]]`` lists the edges of
    measurement j.
    """

    n: int
    m: int
    var_ptr: np.ndarray
    edge_var: np.ndarray
    edge_check: np.ndarray
    row_ptr: np.ndarray
    row_edges: np.ndarray

    @classmethod
    def from_columns(cls, columns, m: int) -> "EdgeLayout":
        n = len(columns)
        degrees = np.array([len(c) for c in columns], dtype=np.int64)
        var_ptr = np.concatenate([[0], np.cumsum(degrees)]).astype(np.int64)
        edge_var = np.repeat(np.arange(n, dtype=np.int64), degrees)
        edge_check = (np.concatenate([np.asarray(c, dtype=np.int64) for c in columns])
                      if n else np.zeros(0, dtype=np.int64))
        row_edges = np.argsort(edge_check, kind="stable").astype(np.int64)
        row_counts = np.bincount(edge_check, minlength=m)
        row_ptr = np.concatenate([[0], np.cumsum(row_counts)]).astype(np.int64)
        return cls(n, m, var_ptr, edge_var, edge_check, row_ptr, row_edges)

    @property
    def n_edges(self) -> int:
        return int(self.var_ptr[-1])

    def __post_init__(self):
        e = self.n_edges
        self.var_pad, self.var_mask = _padded(self.var_ptr, np.arange(e, dtype=np.int64), e)
        self.row_pad, self.row_mask = _padded(self.row_ptr, self.row_edges, e)


def variable_update(prior, b, layout: EdgeLayout, a_out, marg_out, backend: str | None = None) -> int:
    if (backend or BACKEND) == "compiled":
        return _compiled.variable_update(prior, b, layout.var_ptr, a_out, marg_out)
    return _kernels_py.variable_update(prior, b, layout.var_pad, layout.var_mask, a_out, marg_out)


def check_combine(noise_spec, a_spec, layout: EdgeLayout, out, backend: str | None = None) -> None:
    if (backend or BACKEND) == "compiled":
        _compiled.check_combine(noise_spec, a_spec, layout.row_ptr, layout.row_edges, out)
    else:
        _kernels_py.check_combine(noise_spec, a_spec, layout.row_pad, layout.row_mask, layout.row_edges, out)
