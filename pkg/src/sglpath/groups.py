from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["GroupStructure"]


@dataclass(frozen=True, eq=False)
class GroupStructure:
    """Partition of the features into contiguous column blocks.

    Build with :meth:`from_labels` or :meth:`equal`. ``group_weights`` holds
    the multiplier of each group's l2 norm (default: square root of the
    group size); ``feature_weights`` the per-feature l1 multipliers
    (default 1).
    """

    starts: np.ndarray
    ends: np.ndarray
    group_weights: np.ndarray
    feature_weights: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=np.int64)
        ends = np.asarray(self.ends, dtype=np.int64)
        gw = np.asarray(self.group_weights, dtype=float)
        fw = np.asarray(self.feature_weights, dtype=float)
        if starts.size == 0 or starts[0] != 0 or np.any(ends <= starts) \
                or np.any(starts[1:] != ends[:-1]):
            raise ValueError("groups must tile the columns in contiguous, "
                             "non-empty blocks")
        if gw.shape != starts.shape:
            raise ValueError(f"expected {starts.size} group weights, "
                             f"got {gw.size}")
        if fw.shape != (ends[-1],):
            raise ValueError(f"expected {ends[-1]} feature weights, "
                             f"got {fw.size}")
        if np.any(~np.isfinite(gw)) or np.any(gw <= 0):
            raise ValueError("group weights must be finite and positive")
        if np.any(~np.isfinite(fw)) or np.any(fw < 0):
            raise ValueError("feature weights must be finite and non-negative")
        for name, arr in (("starts", starts), ("ends", ends),
                          ("group_weights", gw), ("feature_weights", fw)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_labels(cls, labels, group_weights=None, feature_weights=None):
        """One label per feature; each label must occupy a single run."""
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("need a non-empty 1-d array of group labels")
        change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
        starts = np.concatenate([[0], change])
        ends = np.concatenate([change, [labels.size]])
        run_labels = labels[starts]
        if np.unique(run_labels).size != run_labels.size:
            dup = [v for v in run_labels
                   if np.count_nonzero(run_labels == v) > 1][0]
            raise ValueError(
                f"group {dup!r} is not a contiguous block of columns; "
                "reorder the columns so each group is contiguous")
        sizes = ends - starts
        if group_weights is None:
            group_weights = np.sqrt(sizes)
        if feature_weights is None:
            feature_weights = np.ones(labels.size)
        return cls(starts, ends, group_weights, feature_weights,
                   tuple(run_labels.tolist()))

    @classmethod
    def equal(cls, p, size, **kw):
        """Consecutive groups of ``size`` features (the last may be short)."""
        if size < 1:
            raise ValueError("group size must be >= 1")
        return cls.from_labels(np.arange(p) // size + 1, **kw)

    @property
    def n_groups(self):
        return int(self.starts.size)

    @property
    def n_features(self):
        return int(self.ends[-1])

    @property
    def sizes(self):
        return self.ends - self.starts

    @property
    def ranges(self):
        return list(zip(self.starts.tolist(), self.ends.tolist()))

    @property
    def group_index(self):
        """Group number (0-based) of each feature."""
        return np.repeat(np.arange(self.n_groups), self.sizes)

    def replace_weights(self, group_weights=None, feature_weights=None):
        return GroupStructure(
            self.starts, self.ends,
            self.group_weights if group_weights is None else group_weights,
            self.feature_weights if feature_weights is None
            else feature_weights,
            self.labels)

    def to_dict(self):
        return dict(starts=self.starts.tolist(), ends=self.ends.tolist(),
                    group_weights=self.group_weights.tolist(),
                    feature_weights=self.feature_weights.tolist(),
                    labels=list(self.labels))

    @classmethod
    def from_dict(cls, d):
        return cls(d["starts"], d["ends"], d["group_weights"],
                   d["feature_weights"], tuple(d.get("labels", ())))
