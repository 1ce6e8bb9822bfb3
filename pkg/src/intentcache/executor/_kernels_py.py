"""Grouped reductions over dense group ids (pure-Python/numpy fallback).

Same signatures and results as the compiled ``_kernels`` module.
"""

from __future__ import annotations

import numpy as np


def _prep(gid, values, valid):
    keep = np.asarray(valid, dtype=bool)
    return np.asarray(gid, dtype=np.int64)[keep], np.asarray(values)[keep]


def group_count(gid, ngroups, valid):
    g = np.asarray(gid, dtype=np.int64)[np.asarray(valid, dtype=bool)]
    return np.bincount(g, minlength=ngroups).astype(np.int64)


def group_sum(gid, ngroups, values, valid):
    g, v = _prep(gid, values, valid)
    out = np.zeros(ngroups, dtype=np.float64 if v.dtype.kind == "f" else np.int64)
    # ufunc.at accumulates in row order, matching the compiled loop bit for bit
    np.add.at(out, g, v)
    return out, np.bincount(g, minlength=ngroups).astype(np.int64)


def _extreme(gid, ngroups, values, valid, ufunc, fill):
    g, v = _prep(gid, values, valid)
    out = np.full(ngroups, fill, dtype=v.dtype)
    ufunc.at(out, g, v)
    counts = np.bincount(g, minlength=ngroups).astype(np.int64)
    out[counts == 0] = 0
    return out, counts


def group_min(gid, ngroups, values, valid):
    v = np.asarray(values)
    fill = np.inf if v.dtype.kind == "f" else np.iinfo(np.int64).max
    return _extreme(gid, ngroups, v, valid, np.minimum, fill)


def group_max(gid, ngroups, values, valid):
    v = np.asarray(values)
    fill = -np.inf if v.dtype.kind == "f" else np.iinfo(np.int64).min
    return _extreme(gid, ngroups, v, valid, np.maximum, fill)
