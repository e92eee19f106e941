"""Prototype libraries built with self-organizing maps.

For every (action, viewpoint) cell of the training data, the reduced frame
vectors are clustered by a self-organizing map laid out as an m-dimensional
lattice with q units per side (q^m units total). Units are then replaced by
the arithmetic mean of their assigned members, in both the reduced space and
the original 26-dimensional space, and empty units are discarded. Stacking
the surviving prototypes of all viewpoints of an action gives that action's
library; pose libraries come from pose vectors, motion libraries from
derivative vectors.

Training is the classic online scheme: per step, the best-matching unit is
the nearest unit in data space (ties to the lowest unit index), and every
unit moves toward the sample weighted by a Gaussian neighborhood kernel on
the lattice. Learning rate and radius both shrink as exp(-t / T) with t the
global step counter and T the total number of steps.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ParseError
from .pca import FEATURE_DIM, PcaModel, fit_pca, project, reroll, unroll
from .preprocess import LabeledSequence

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "posehar-bundle/1"
LIBRARY_KINDS = ("spatial", "temporal")


@dataclass(frozen=True)
class SomConfig:
    """Lattice geometry and training schedule of one map.

    q is the units-per-side of the m-dimensional lattice. The default radius
    starts at q / 2. ``init`` is "axes" (units span the leading principal
    axes of the training data, the default) or "random" (seeded Gaussian
    draws around the data mean).
    """

    q: int = 4
    m: int = 3
    epochs: int = 20
    lr0: float = 0.5
    radius0: float | None = None
    lr_decay: str = "exp"
    init: str = "axes"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.q < 1 or self.m < 1:
            raise ValueError("q and m must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.lr_decay != "exp":
            raise ValueError(f"unsupported decay schedule {self.lr_decay!r}")
        if self.init not in ("axes", "random"):
            raise ValueError(f"unsupported init {self.init!r}")

    @property
    def n_units(self) -> int:
        return self.q ** self.m


@dataclass(frozen=True)
class SomFit:
    """Trained map: unit weights, per-sample assignments, lattice layout."""

    weights: np.ndarray           # (U, d)
    assignments: np.ndarray      # (N,) unit index per training sample
    grid: np.ndarray              # (U, m) integer lattice coordinates
    initial_weights: np.ndarray   # (U, d) before any update


def lattice(q: int, m: int) -> np.ndarray:
    """Integer lattice coordinates of all q^m units, row-major."""
    return np.array(list(itertools.product(range(q), repeat=m)), dtype=np.float64)


def quantization_error(data: np.ndarray, weights: np.ndarray) -> float:
    """Mean distance from each sample to its nearest unit."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    d2 = ((data[:, None, :] - weights[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min(axis=1)).mean())


def _init_weights(data: np.ndarray, grid: np.ndarray, config: SomConfig) -> np.ndarray:
    mean = data.mean(axis=0)
    if config.init == "random":
        rng = np.random.default_rng([config.rng_seed, 1])
        std = data.std(axis=0)
        std[std == 0.0] = 1.0
        return rng.normal(mean, std, (grid.shape[0], data.shape[1]))
    # Linear lattice spanning the leading principal axes of this data slice.
    if data.shape[0] < 2:
        return np.tile(mean, (grid.shape[0], 1))
    centered = data - mean
    cov = centered.T @ centered / (data.shape[0] - 1)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][: config.m]
    spread = 2.0 * np.sqrt(np.clip(eigenvalues[order], 0.0, None))
    axes = eigenvectors[:, order].T  # (m, d)
    fractions = (grid - (config.q - 1) / 2.0) / max(config.q - 1, 1)
    return mean + (fractions * spread) @ axes


def train_som(data: np.ndarray, config: SomConfig) -> SomFit:
    """Train one map on (N, d) vectors. Deterministic under a fixed seed and
    input order."""
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError(f"expected (N, d) training data, got {data.shape}")
    grid = lattice(config.q, config.m)
    weights = _init_weights(data, grid, config)
    initial = weights.copy()

    diff = grid[:, None, :] - grid[None, :, :]
    grid_d2 = (diff * diff).sum(axis=2)   # squared lattice distances
    radius0 = config.radius0 if config.radius0 is not None else config.q / 2.0
    radius0 = max(float(radius0), 1e-12)
    total = config.epochs * data.shape[0]

    rng = np.random.default_rng(config.rng_seed)
    step = 0
    for _ in range(config.epochs):
        for i in rng.permutation(data.shape[0]):
            x = data[i]
            decay = np.exp(-step / total)
            lr = config.lr0 * decay
            radius = radius0 * decay
            towards = x - weights
            best = int(np.argmin((towards * towards).sum(axis=1)))
            kernel = np.exp(grid_d2[best] / (-2.0 * radius * radius))
            weights += (lr * kernel)[:, None] * towards
            step += 1

    d2 = ((data[:, None, :] - weights[None, :, :]) ** 2).sum(axis=2)
    assignments = d2.argmin(axis=1)
    return SomFit(weights, assignments, grid, initial)


# --------------------------------------------------------------------------
# Libraries


@dataclass(frozen=True)
class Prototype:
    """Mean of one non-empty cluster, kept in both spaces."""

    full: np.ndarray        # (26,) mean of the members' unrolled vectors
    reduced: np.ndarray     # (m,) mean of the members' projections
    weight: int             # member count
    viewpoint: str


@dataclass(frozen=True)
class PoseLibrary:
    """All prototypes of one action, stacked over its viewpoints."""

    action: str
    kind: str
    prototypes: tuple[Prototype, ...]

    def __len__(self) -> int:
        return len(self.prototypes)

    def full_matrix(self) -> np.ndarray:
        return np.stack([p.full for p in self.prototypes])

    def landmark_array(self) -> np.ndarray:
        """Prototypes as (P, 14, 2) landmark coordinates, root at origin."""
        return reroll(self.full_matrix())


def _cell_frames(items: Sequence[LabeledSequence], kind: str) -> dict[tuple[str, str], list[np.ndarray]]:
    cells: dict[tuple[str, str], list[np.ndarray]] = {}
    for item in items:
        frames = item.seq.xy if kind == "spatial" else item.seq.deriv
        if frames.shape[0] == 0:
            continue
        cells.setdefault((item.action, item.viewpoint), []).append(unroll(frames))
    return cells


def build_library(items: Sequence[LabeledSequence], kind: str, pca: PcaModel,
                  config: SomConfig) -> dict[str, PoseLibrary]:
    """Cluster each (action, viewpoint) cell and stack prototypes per action.

    Cells without any frame are skipped with a warning; actions whose every
    cell is empty get no library at all, which the embedding stage reports
    as MissingLibrary if it is ever asked for them.
    """
    if kind not in LIBRARY_KINDS:
        raise ValueError(f"kind must be one of {LIBRARY_KINDS}")
    cells = _cell_frames(items, kind)
    actions = sorted({item.action for item in items})
    viewpoints = sorted({item.viewpoint for item in items})
    libraries: dict[str, PoseLibrary] = {}
    for action in actions:
        prototypes: list[Prototype] = []
        for viewpoint in viewpoints:
            chunks = cells.get((action, viewpoint))
            if not chunks:
                log.warning("no %s frames for action=%r viewpoint=%r; cell skipped",
                            kind, action, viewpoint)
                continue
            full = np.vstack(chunks)
            reduced = project(pca, full)
            fit = train_som(reduced, config)
            for unit in range(fit.weights.shape[0]):
                members = fit.assignments == unit
                count = int(members.sum())
                if count == 0:
                    continue
                prototypes.append(Prototype(
                    full=full[members].mean(axis=0),
                    reduced=reduced[members].mean(axis=0),
                    weight=count,
                    viewpoint=viewpoint,
                ))
        if prototypes:
            libraries[action] = PoseLibrary(action, kind, tuple(prototypes))
        else:
            log.warning("action %r has no %s prototypes at all", action, kind)
    return libraries


# --------------------------------------------------------------------------
# Bundle persistence


@dataclass(frozen=True)
class ModelBundle:
    """Everything the embedding stage needs, as produced from training data."""

    spatial_pca: PcaModel
    temporal_pca: PcaModel
    spatial: Mapping[str, PoseLibrary]
    temporal: Mapping[str, PoseLibrary]
    actions: tuple[str, ...]
    viewpoints: tuple[str, ...]
    config: dict


def build_bundle(items: Sequence[LabeledSequence], n_components: int = 3,
                 som_config: SomConfig | None = None) -> ModelBundle:
    """Fit both reduction models and both library kinds from training data."""
    som_config = som_config or SomConfig(m=n_components)
    if som_config.m != n_components:
        raise ValueError("som lattice dimensionality must equal the reduced dimension")
    pose_vectors = np.vstack([unroll(item.seq.xy) for item in items])
    deriv_chunks = [unroll(item.seq.deriv) for item in items if item.seq.deriv.shape[0] > 0]
    deriv_vectors = (np.vstack(deriv_chunks) if deriv_chunks
                     else np.zeros((0, FEATURE_DIM)))
    spatial_pca = fit_pca(pose_vectors, n_components)
    temporal_pca = fit_pca(deriv_vectors, n_components)
    return ModelBundle(
        spatial_pca=spatial_pca,
        temporal_pca=temporal_pca,
        spatial=build_library(items, "spatial", spatial_pca, som_config),
        temporal=build_library(items, "temporal", temporal_pca, som_config),
        actions=tuple(sorted({item.action for item in items})),
        viewpoints=tuple(sorted({item.viewpoint for item in items})),
        config={"pca_components": n_components, "som": asdict(som_config)},
    )


def _pack_pca(arrays: dict, prefix: str, model: PcaModel) -> dict:
    arrays[f"{prefix}/mean"] = model.mean
    arrays[f"{prefix}/components"] = model.components
    arrays[f"{prefix}/eigenvalues"] = model.eigenvalues
    arrays[f"{prefix}/total_variance"] = np.float64(model.total_variance)
    return arrays


def _unpack_pca(data, prefix: str) -> PcaModel:
    return PcaModel(
        mean=data[f"{prefix}/mean"],
        components=data[f"{prefix}/components"],
        eigenvalues=data[f"{prefix}/eigenvalues"],
        total_variance=float(data[f"{prefix}/total_variance"]),
    )


def save_bundle(path: str | os.PathLike, bundle: ModelBundle) -> None:
    """Write a bundle to a .npz archive with a versioned JSON metadata entry."""
    meta = {
        "format": BUNDLE_FORMAT,
        "actions": list(bundle.actions),
        "viewpoints": list(bundle.viewpoints),
        "config": bundle.config,
        "libraries": {kind: sorted(getattr(bundle, kind)) for kind in LIBRARY_KINDS},
    }
    arrays: dict = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    _pack_pca(arrays, "pca/spatial", bundle.spatial_pca)
    _pack_pca(arrays, "pca/temporal", bundle.temporal_pca)
    for kind in LIBRARY_KINDS:
        for action, library in getattr(bundle, kind).items():
            prefix = f"lib/{kind}/{action}"
            arrays[f"{prefix}/full"] = library.full_matrix()
            arrays[f"{prefix}/reduced"] = np.stack([p.reduced for p in library.prototypes])
            arrays[f"{prefix}/weight"] = np.array([p.weight for p in library.prototypes])
            arrays[f"{prefix}/viewpoint"] = np.array([p.viewpoint for p in library.prototypes])
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_bundle(path: str | os.PathLike) -> ModelBundle:
    with np.load(path, allow_pickle=False) as data:
        try:
            meta = json.loads(str(data["meta"]))
        except (KeyError, json.JSONDecodeError) as exc:
            raise ParseError(f"{path}: not a model bundle ({exc})") from exc
        if meta.get("format") != BUNDLE_FORMAT:
            raise ParseError(f"{path}: unsupported bundle format {meta.get('format')!r}")
        libraries: dict[str, dict[str, PoseLibrary]] = {}
        for kind in LIBRARY_KINDS:
            libraries[kind] = {}
            for action in meta["libraries"][kind]:
                prefix = f"lib/{kind}/{action}"
                full = data[f"{prefix}/full"]
                reduced = data[f"{prefix}/reduced"]
                weight = data[f"{prefix}/weight"]
                viewpoint = data[f"{prefix}/viewpoint"]
                prototypes = tuple(
                    Prototype(full[i], reduced[i], int(weight[i]), str(viewpoint[i]))
                    for i in range(full.shape[0]))
                libraries[kind][action] = PoseLibrary(action, kind, prototypes)
        return ModelBundle(
            spatial_pca=_unpack_pca(data, "pca/spatial"),
            temporal_pca=_unpack_pca(data, "pca/temporal"),
            spatial=libraries["spatial"],
            temporal=libraries["temporal"],
            actions=tuple(meta["actions"]),
            viewpoints=tuple(meta["viewpoints"]),
            config=meta["config"],
        )
