"""Evaluation protocols, fold construction, metrics, and experiment runs.

Three protocols cover the usual splits:

* ``split``: fixed group lists (actors or datasets) for train, validation,
  and test. With dataset grouping this expresses cross-dataset transfer.
* ``loao``: leave-one-actor-out; one fold per actor, that actor's samples
  form the test set.
* ``kfold``: per-action k-fold; every action's samples are shuffled and cut
  into k near-equal parts, and fold f tests part f of every action, so each
  fold sees the full class vocabulary.

Protocols that have no explicit validation list carve a stratified fraction
out of the training fold. Folds are index-based and pairwise disjoint by
construction; the runner re-checks that before fitting anything.

Scores: absolute accuracy is the fraction of correct test predictions;
relative accuracy is the mean per-class recall, which weighs every class
equally no matter how common it is. Confusion matrices have one row per
true class, in sorted action order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .augment import AugmentConfig, augment_set, noise_sample
from .classifier import ClassifierConfig, predict, train
from .embed import baseline_channels, embed_sequence
from .errors import TooFewSamples
from .pose import Sample
from .preprocess import preprocess_sample
from .som import SomConfig, build_bundle

log = logging.getLogger(__name__)

PROTOCOL_KINDS = ("split", "loao", "kfold")


@dataclass(frozen=True)
class Protocol:
    """How samples are partitioned into train / validation / test."""

    kind: str = "kfold"
    folds: int = 10
    train_groups: tuple[str, ...] = ()
    val_groups: tuple[str, ...] = ()
    test_groups: tuple[str, ...] = ()
    group_by: str = "actor"         # "actor" or "dataset"
    val_fraction: float = 0.15

    def __post_init__(self) -> None:
        if self.kind not in PROTOCOL_KINDS:
            raise ValueError(f"unknown protocol kind {self.kind!r}")
        if self.kind == "kfold" and self.folds < 2:
            raise ValueError("kfold needs at least two folds")
        if self.group_by not in ("actor", "dataset"):
            raise ValueError("group_by must be 'actor' or 'dataset'")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in (0, 1)")
        object.__setattr__(self, "train_groups", tuple(self.train_groups))
        object.__setattr__(self, "val_groups", tuple(self.val_groups))
        object.__setattr__(self, "test_groups", tuple(self.test_groups))


@dataclass(frozen=True)
class Fold:
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]


def _carve_validation(pool: list[int], samples: Sequence[Sample], fraction: float,
                      rng: np.random.Generator) -> tuple[list[int], list[int]]:
    """Split a training pool into train and validation, stratified by action.

    Every action keeps at least one training sample; actions with a single
    sample contribute nothing to validation.
    """
    by_action: dict[str, list[int]] = {}
    for i in pool:
        by_action.setdefault(samples[i].action, []).append(i)
    train: list[int] = []
    val: list[int] = []
    for action in sorted(by_action):
        indices = np.array(by_action[action])
        indices = indices[rng.permutation(indices.size)]
        if indices.size < 2:
            train.extend(int(i) for i in indices)
            continue
        take = int(round(fraction * indices.size))
        take = min(max(take, 1), indices.size - 1)
        val.extend(int(i) for i in indices[:take])
        train.extend(int(i) for i in indices[take:])
    return sorted(train), sorted(val)


def make_folds(samples: Sequence[Sample], protocol: Protocol,
               seed: int = 0) -> list[Fold]:
    """Build the index folds of a protocol. Deterministic under a fixed seed."""
    if not samples:
        raise TooFewSamples("no samples to partition")
    if protocol.kind == "split":
        return [_split_fold(samples, protocol, seed)]
    if protocol.kind == "loao":
        return _loao_folds(samples, protocol, seed)
    return _kfold_folds(samples, protocol, seed)


def _split_fold(samples: Sequence[Sample], protocol: Protocol, seed: int) -> Fold:
    groups = (set(protocol.train_groups), set(protocol.val_groups),
              set(protocol.test_groups))
    if groups[0] & groups[2] or groups[1] & groups[2] or groups[0] & groups[1]:
        raise ValueError("split group lists overlap")
    key = lambda s: s.actor if protocol.group_by == "actor" else s.dataset
    train = [i for i, s in enumerate(samples) if key(s) in groups[0]]
    val = [i for i, s in enumerate(samples) if key(s) in groups[1]]
    test = [i for i, s in enumerate(samples) if key(s) in groups[2]]
    if not train or not test:
        raise TooFewSamples("split protocol left train or test empty")
    if not val:
        rng = np.random.default_rng([seed, 3, 0])
        train, val = _carve_validation(train, samples, protocol.val_fraction, rng)
    return Fold(tuple(train), tuple(val), tuple(test))


def _loao_folds(samples: Sequence[Sample], protocol: Protocol,
                seed: int) -> list[Fold]:
    actors = sorted({s.actor for s in samples})
    if len(actors) < 2:
        raise TooFewSamples("leave-one-actor-out needs at least two actors")
    folds = []
    for f, actor in enumerate(actors):
        test = [i for i, s in enumerate(samples) if s.actor == actor]
        pool = [i for i, s in enumerate(samples) if s.actor != actor]
        rng = np.random.default_rng([seed, 3, f])
        train, val = _carve_validation(pool, samples, protocol.val_fraction, rng)
        folds.append(Fold(tuple(train), tuple(val), tuple(test)))
    return folds


def _kfold_folds(samples: Sequence[Sample], protocol: Protocol,
                 seed: int) -> list[Fold]:
    by_action: dict[str, list[int]] = {}
    for i, s in enumerate(samples):
        by_action.setdefault(s.action, []).append(i)
    rng = np.random.default_rng([seed, 2])
    parts: dict[str, list[np.ndarray]] = {}
    for action in sorted(by_action):
        indices = np.array(by_action[action])
        if indices.size < protocol.folds:
            raise TooFewSamples(
                f"action {action!r} has {indices.size} samples, "
                f"fewer than {protocol.folds} folds")
        shuffled = indices[rng.permutation(indices.size)]
        parts[action] = np.array_split(shuffled, protocol.folds)
    folds = []
    for f in range(protocol.folds):
        test = sorted(int(i) for action in parts for i in parts[action][f])
        test_set = set(test)
        pool = [i for i in range(len(samples)) if i not in test_set]
        carve_rng = np.random.default_rng([seed, 3, f])
        train, val = _carve_validation(pool, samples, protocol.val_fraction,
                                       carve_rng)
        folds.append(Fold(tuple(train), tuple(val), tuple(test)))
    return folds


# --------------------------------------------------------------------------
# Metrics


def confusion_matrix(truth: Sequence[int], predicted: Sequence[int],
                     classes: int) -> np.ndarray:
    matrix = np.zeros((classes, classes), dtype=np.int64)
    for t, p in zip(truth, predicted):
        matrix[t, p] += 1
    return matrix


def accuracy_scores(confusion: np.ndarray) -> tuple[float, float]:
    """(absolute, relative) accuracy of a confusion matrix.

    Absolute is the global fraction correct; relative is the unweighted mean
    of per-class recalls over classes that appear in the test data.
    """
    total = confusion.sum()
    absolute = float(np.trace(confusion) / total) if total else 0.0
    rows = confusion.sum(axis=1)
    present = rows > 0
    if not present.any():
        return absolute, 0.0
    recalls = np.diag(confusion)[present] / rows[present]
    return absolute, float(recalls.mean())


@dataclass
class EvalReport:
    actions: tuple[str, ...]
    confusion: np.ndarray
    absolute_accuracy: float
    relative_accuracy: float
    per_fold: list[dict]
    config: dict

    def to_dict(self) -> dict:
        return {
            "format": "posehar-report/1",
            "actions": list(self.actions),
            "confusion": self.confusion.tolist(),
            "absolute_accuracy": self.absolute_accuracy,
            "relative_accuracy": self.relative_accuracy,
            "per_fold": self.per_fold,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def render_confusion(self) -> str:
        """Plain-text confusion table, rows true, columns predicted."""
        width = max([len(a) for a in self.actions] + [5])
        cell = max(width, 5)
        header = " " * (width + 2) + " ".join(f"{a:>{cell}}" for a in self.actions)
        lines = [header]
        for r, action in enumerate(self.actions):
            row = " ".join(f"{int(v):>{cell}}" for v in self.confusion[r])
            lines.append(f"{action:<{width}}  {row}")
        return "\n".join(lines)


# --------------------------------------------------------------------------
# Experiment runner


@dataclass
class PipelineConfig:
    """Everything an experiment run needs besides the data and protocol."""

    mode: str = "advanced"
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    som: SomConfig = field(default_factory=SomConfig)
    pca_components: int = 3
    classifier: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("basic", "advanced", "baseline"):
            raise ValueError(f"unknown mode {self.mode!r}")


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _classifier_config(pipeline: PipelineConfig, channels: int, classes: int,
                       fold: int) -> ClassifierConfig:
    overrides = dict(pipeline.classifier)
    overrides.setdefault("rng_seed", _derived_seed(pipeline.seed, 7, fold))
    if "conv_blocks" in overrides:
        overrides["conv_blocks"] = tuple(tuple(b) for b in overrides["conv_blocks"])
    return ClassifierConfig(channels=channels, classes=classes, **overrides)


def run_experiment(samples: Sequence[Sample], protocol: Protocol,
                   pipeline: PipelineConfig) -> EvalReport:
    """Run the full pipeline under a protocol and score the test folds.

    Everything fitted (reduction models, libraries, classifier, batch-norm
    statistics) sees training-fold data only; augmentation is applied to the
    training fold only.
    """
    actions = sorted({s.action for s in samples})
    class_of = {a: i for i, a in enumerate(actions)}
    folds = make_folds(samples, protocol, pipeline.seed)

    prep_cache: dict[int, object] = {}

    def prepped(i: int):
        if i not in prep_cache:
            prep_cache[i], _ = preprocess_sample(samples[i])
        return prep_cache[i]

    confusion = np.zeros((len(actions), len(actions)), dtype=np.int64)
    per_fold: list[dict] = []
    for f, fold in enumerate(folds):
        train_idx, val_idx, test_idx = list(fold.train), list(fold.val), list(fold.test)
        taken = set(train_idx) | set(val_idx)
        if taken & set(test_idx) or set(train_idx) & set(val_idx):
            raise ValueError("fold partitions overlap; refusing to continue")

        train_actions = {samples[i].action for i in train_idx}
        unseen = [i for i in test_idx if samples[i].action not in train_actions]
        if unseen:
            log.warning("dropping %d test sample(s) of action(s) absent from training",
                        len(unseen))
            test_idx = [i for i in test_idx if samples[i].action in train_actions]

        if pipeline.mode == "baseline":
            train_pairs, val_pairs, test_series = _baseline_fold(
                samples, train_idx, val_idx, test_idx, pipeline, class_of)
        else:
            train_pairs, val_pairs, test_series = _pipeline_fold(
                samples, prepped, train_idx, val_idx, test_idx, pipeline, class_of)

        channels = train_pairs[0][0].shape[0]
        config = _classifier_config(pipeline, channels, len(actions), f)
        model, history = train(config, train_pairs, val_pairs)
        predicted = predict(model, test_series)
        truth = [class_of[samples[i].action] for i in test_idx]
        fold_confusion = confusion_matrix(truth, predicted, len(actions))
        confusion += fold_confusion
        fold_abs, fold_rel = accuracy_scores(fold_confusion)
        per_fold.append({
            "fold": f,
            "test_samples": len(test_idx),
            "absolute_accuracy": fold_abs,
            "relative_accuracy": fold_rel,
            "epochs_run": len(history),
        })
        log.info("fold %d/%d: accuracy %.3f on %d test samples",
                 f + 1, len(folds), fold_abs, len(test_idx))

    absolute, relative = accuracy_scores(confusion)
    config_echo = {
        "mode": pipeline.mode,
        "augment": asdict(pipeline.augment),
        "som": asdict(pipeline.som),
        "pca_components": pipeline.pca_components,
        "classifier": dict(pipeline.classifier),
        "protocol": asdict(protocol),
        "seed": pipeline.seed,
    }
    return EvalReport(tuple(actions), confusion, absolute, relative, per_fold,
                      config_echo)


def _baseline_fold(samples, train_idx, val_idx, test_idx, pipeline, class_of):
    augment = pipeline.augment
    if augment.flip:
        log.warning("baseline mode works on raw coordinates; flip augmentation skipped")
    train_samples = [samples[i] for i in train_idx]
    if augment.z > 0:
        extra = []
        for n, s in enumerate(train_samples):
            extra.extend(noise_sample(s, augment, n))
        train_samples = train_samples + extra
    train_pairs = [(baseline_channels(s).values, class_of[s.action])
                   for s in train_samples]
    val_pairs = [(baseline_channels(samples[i]).values, class_of[samples[i].action])
                 for i in val_idx]
    test_series = [baseline_channels(samples[i]).values for i in test_idx]
    return train_pairs, val_pairs, test_series


def _pipeline_fold(samples, prepped, train_idx, val_idx, test_idx, pipeline, class_of):
    train_items = [prepped(i) for i in train_idx]
    augmented = augment_set(train_items, pipeline.augment)
    if pipeline.mode == "advanced":
        bundle = build_bundle(augmented, pipeline.pca_components, pipeline.som)
        spatial, temporal = bundle.spatial, bundle.temporal
    else:
        spatial = temporal = None

    def channels_of(item):
        return embed_sequence(item.seq, spatial, temporal, pipeline.mode).values

    train_pairs = [(channels_of(it), class_of[it.action]) for it in augmented]
    val_pairs = [(channels_of(prepped(i)), class_of[samples[i].action])
                 for i in val_idx]
    test_series = [channels_of(prepped(i)) for i in test_idx]
    return train_pairs, val_pairs, test_series
