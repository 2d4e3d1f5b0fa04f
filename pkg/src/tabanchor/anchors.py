"""Anchor shapes: traditional scale/ratio grids and K-means under 1 - IoU.

The optimizer clusters ground-truth (width, height) pairs with the distance
``1 - IoU`` of co-centred rectangles, starting from a traditional anchor
grid. :class:`AnchorKMeans` exposes it with the scikit-learn estimator API.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import EmptySampleSet, KTooLarge
from .geometry import Shape, shape_iou_matrix
from .ingest import BoxClass, apply_resize_policy

logger = logging.getLogger(__name__)

DEFAULT_SCALES = (16, 32, 64, 128, 256)
ROW_RATIOS = (50, 25, 10, 3)
COLUMN_RATIOS = (0.1, 0.3, 0.5, 1)
TRADITIONAL_RATIOS = (0.5, 1, 2)


class Provenance(str, Enum):
    TRADITIONAL = "traditional"
    OPTIMIZED = "optimized"


@dataclass(frozen=True)
class AnchorSpec:
    scales: tuple = DEFAULT_SCALES
    ratios: tuple = TRADITIONAL_RATIOS

    def __post_init__(self):
        for name in ("scales", "ratios"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"{name} must be nonempty")
            if not all(v > 0 and math.isfinite(v) for v in values):
                raise ValueError(f"{name} must be positive and finite")
            object.__setattr__(self, name, values)


@dataclass(frozen=True)
class AnchorSet:
    shapes: tuple
    provenance: Provenance = Provenance.TRADITIONAL
    iterations_run: int = 0
    coverage_history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not self.shapes:
            raise ValueError("an AnchorSet needs at least one shape")
        object.__setattr__(self, "shapes", tuple(self.shapes))

    def as_array(self):
        return np.array([s.as_list() for s in self.shapes], dtype=float)

    def to_json(self):
        """Anchor file text: one ``[w, h]`` / ``[scale, ratio]`` pair per line."""

        def pairs(items):
            return "[\n" + ",\n".join(f"    {json.dumps(list(p))}" for p in items) + "\n  ]"

        return (
            "{\n"
            f'  "provenance": {json.dumps(Provenance(self.provenance).value)},\n'
            f'  "iterations_run": {int(self.iterations_run)},\n'
            f'  "shapes": {pairs((s.width, s.height) for s in self.shapes)},\n'
            f'  "decomposed": {pairs(decompose_anchor(s) for s in self.shapes)}\n'
            "}\n"
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        shapes = tuple(Shape(float(w), float(h)) for w, h in data["shapes"])
        return cls(shapes, Provenance(data.get("provenance", "optimized")), int(data.get("iterations_run", 0)))


@dataclass(frozen=True)
class KMeansParams:
    k: int
    max_iterations: int = 300
    seed: int = 0
    min_improvement: float = 1e-9
    update: str = "mean"

    def __post_init__(self):
        if self.k < 1 or self.max_iterations < 1:
            raise ValueError("k and max_iterations must be positive")
        if self.update not in ("mean", "medoid"):
            raise ValueError("update must be 'mean' or 'medoid'")


def extract_shape_samples(dataset, cls, resize=True):
    """One (width, height) sample per ground-truth box of ``cls``.

    Boxes are taken after the input resize policy; zero-area boxes are
    skipped and counted in a warning.
    """
    cls = BoxClass(cls)
    if len(dataset) == 0:
        raise EmptySampleSet("dataset holds no pages")
    samples, skipped = [], 0
    for record in dataset:
        if resize:
            record, _, _ = apply_resize_policy(record)
        for box in record.boxes(cls):
            if box.width > 0 and box.height > 0:
                samples.append(Shape(box.width, box.height))
            else:
                skipped += 1
    if skipped:
        logger.warning("skipped %d zero-area %s boxes", skipped, cls.value)
    if not samples:
        raise EmptySampleSet(f"no {cls.value} boxes with positive area in the dataset")
    return samples


def anchor_shape(scale, ratio):
    r = math.sqrt(ratio)
    return Shape(scale * r, scale / r)


def generate_traditional_anchors(spec: AnchorSpec) -> AnchorSet:
    """Scale-major cross product: ``width = s*sqrt(r)``, ``height = s/sqrt(r)``."""
    return AnchorSet(tuple(anchor_shape(s, r) for s in spec.scales for r in spec.ratios), Provenance.TRADITIONAL, 0)


def decompose_anchor(shape: Shape):
    return math.sqrt(shape.width * shape.height), shape.width / shape.height


def _as_wh(items):
    if isinstance(items, AnchorSet):
        return items.as_array()
    if len(items) and isinstance(items[0], Shape):
        return np.array([s.as_list() for s in items], dtype=float)
    return np.asarray(items, dtype=float).reshape(-1, 2)


def mean_best_iou(samples, anchors) -> float:
    """Mean over samples of the best co-centred IoU against any anchor."""
    s, a = _as_wh(samples), _as_wh(anchors)
    return float(shape_iou_matrix(s, a).max(axis=1).mean())


def _update(X, labels, dist, C, update):
    k = C.shape[0]
    new = np.empty_like(C)
    counts = np.bincount(labels, minlength=k)
    if update == "mean":
        sums = np.zeros_like(C)
        np.add.at(sums, labels, X)
        nz = counts > 0
        new[nz] = sums[nz] / counts[nz, None]
    else:
        for j in range(k):
            members = X[labels == j]
            if len(members):
                d = 1.0 - shape_iou_matrix(members, members)
                new[j] = members[int(np.argmin(d.sum(axis=1)))]
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        # reseed with the worst-fitted samples; stable sort keeps ties by index
        own = dist[np.arange(len(X)), labels]
        order = np.argsort(-own, kind="stable")
        for j, i in zip(empty, order):
            new[j] = X[i]
    return new


def lloyd(X, C, max_iter=300, min_improvement=1e-9, update="mean"):
    """Lloyd iterations on width/height arrays.

    Returns ``(centroids, labels, n_iter, history)`` where ``history`` lists
    the mean best IoU after every accepted step (entry 0 is the start). A step
    that would lower coverage is rejected and ends the run, so coverage never
    decreases.
    """
    X = np.asarray(X, dtype=float)
    C = np.array(C, dtype=float)
    dist = 1.0 - shape_iou_matrix(X, C)
    labels = np.argmin(dist, axis=1)
    obj = float(dist.min(axis=1).mean())
    history = [1.0 - obj]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        new_c = _update(X, labels, dist, C, update)
        new_dist = 1.0 - shape_iou_matrix(X, new_c)
        new_obj = float(new_dist.min(axis=1).mean())
        if new_obj > obj:
            break
        improvement = obj - new_obj
        C, dist, obj = new_c, new_dist, new_obj
        history.append(1.0 - obj)
        new_labels = np.argmin(dist, axis=1)
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if stable or improvement < min_improvement:
            break
    return C, labels, n_iter, history


def kmeans_optimize(samples, init: AnchorSet, params: KMeansParams) -> AnchorSet:
    """Refine ``init`` into anchors fitted to ``samples``; ``params.k`` must equal ``len(init.shapes)``."""
    X = _as_wh(samples)
    if params.k != len(init.shapes):
        raise ValueError(f"k={params.k} but the initial anchor set has {len(init.shapes)} shapes")
    if params.k > len(X):
        raise KTooLarge(f"k={params.k} exceeds the {len(X)} available samples")
    C, _, n_iter, history = lloyd(X, init.as_array(), params.max_iterations, params.min_improvement, params.update)
    shapes = tuple(Shape(float(w), float(h)) for w, h in C)
    return AnchorSet(shapes, Provenance.OPTIMIZED, n_iter, tuple(history))


class AnchorKMeans(ClusterMixin, TransformerMixin, BaseEstimator):
    """K-means over box shapes with the ``1 - IoU`` distance.

    Parameters
    ----------
    init : "traditional", "random" or array-like of shape (k, 2)
        Starting anchors. "traditional" builds the scale/ratio grid from
        ``scales`` and ``ratios``; "random" draws ``n_clusters`` distinct
        samples using ``random_state``.
    scales, ratios : sequences of float
        Grid used when ``init="traditional"``.
    n_clusters : int or None
        Only used with ``init="random"``.
    max_iter : int
    min_improvement : float
        Stop once the mean distance improves by less than this.
    update : {"mean", "medoid"}
    random_state : int

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (k, 2)
    labels_ : ndarray of shape (n_samples,)
    n_iter_ : int
    inertia_ : float
        Sum over samples of the distance to the closest anchor.
    coverage_history_ : list of float
    """

    def __init__(
        self,
        init="traditional",
        scales=DEFAULT_SCALES,
        ratios=TRADITIONAL_RATIOS,
        n_clusters=None,
        max_iter=300,
        min_improvement=1e-9,
        update="mean",
        random_state=0,
    ):
        self.init = init
        self.scales = scales
        self.ratios = ratios
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.min_improvement = min_improvement
        self.update = update
        self.random_state = random_state

    def _validate_shapes(self, X):
        X = check_array(_as_wh(X), dtype=np.float64)
        if X.shape[1] != 2:
            raise ValueError(f"expected (width, height) columns, got {X.shape[1]} features")
        if not np.all(X > 0):
            raise ValueError("widths and heights must be positive")
        return X

    def _initial_centers(self, X):
        if isinstance(self.init, str):
            if self.init == "traditional":
                return generate_traditional_anchors(AnchorSpec(self.scales, self.ratios)).as_array()
            if self.init == "random":
                if self.n_clusters is None:
                    raise ValueError("init='random' needs n_clusters")
                rng = np.random.default_rng(self.random_state)
                return X[rng.choice(len(X), size=self.n_clusters, replace=False)].copy()
            raise ValueError(f"unknown init {self.init!r}")
        return self._validate_shapes(self.init)

    def fit(self, X, y=None):
        X = self._validate_shapes(X)
        C0 = self._initial_centers(X)
        if len(C0) > len(X):
            raise KTooLarge(f"k={len(C0)} exceeds the {len(X)} available samples")
        C, labels, n_iter, history = lloyd(X, C0, self.max_iter, self.min_improvement, self.update)
        self.cluster_centers_ = C
        self.labels_ = labels
        self.n_iter_ = n_iter
        self.coverage_history_ = history
        self.inertia_ = float((1.0 - shape_iou_matrix(X, C)).min(axis=1).sum())
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        """Distance ``1 - IoU`` from every sample to every anchor."""
        check_is_fitted(self)
        return 1.0 - shape_iou_matrix(self._validate_shapes(X), self.cluster_centers_)

    def predict(self, X):
        return np.argmin(self.transform(X), axis=1)

    def score(self, X, y=None):
        """Mean best IoU of ``X`` against the fitted anchors."""
        check_is_fitted(self)
        return mean_best_iou(self._validate_shapes(X), self.cluster_centers_)

    def anchor_set(self):
        check_is_fitted(self)
        shapes = tuple(Shape(float(w), float(h)) for w, h in self.cluster_centers_)
        return AnchorSet(shapes, Provenance.OPTIMIZED, self.n_iter_, tuple(self.coverage_history_))
