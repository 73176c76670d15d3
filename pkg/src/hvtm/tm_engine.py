"""Tsetlin Machine over Boolean (hyper)feature vectors.

The vectorised helpers in this module (:func:`type_i_feedback`,
:func:`clause_eval`, ...) are the reference semantics; training runs through
the numba kernels in :mod:`hvtm._kernels`, which implement the same tables.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as K
from .hv_core import DimensionMismatchError, Hypervector, n_words, pack_bits, stack

log = logging.getLogger(__name__)


class TMConfigError(ValueError):
    pass


@dataclass
class TMConfig:
    clauses_per_class: int = 100
    threshold: int = 50
    specificity: float = 5.0
    states_per_action: int = 127
    # None resolves to on iff specificity == 1 (reasoning by elimination)
    boost_true_positive: bool | None = None
    seed: int = 0
    num_features: int = 0

    def __post_init__(self) -> None:
        if self.clauses_per_class < 2 or self.clauses_per_class % 2:
            raise TMConfigError(f"clauses_per_class must be even and >= 2, got {self.clauses_per_class}")
        if self.threshold < 1:
            raise TMConfigError(f"threshold must be >= 1, got {self.threshold}")
        if self.specificity < 1:
            raise TMConfigError(f"specificity must be >= 1, got {self.specificity}")
        if not 1 <= self.states_per_action <= 127:
            raise TMConfigError("states_per_action must be in [1, 127] so states fit in a byte")
        if self.num_features < 1:
            raise TMConfigError(f"num_features must be positive, got {self.num_features}")
        if self.boost_true_positive is None:
            self.boost_true_positive = self.specificity == 1
        self.clauses_per_class = int(self.clauses_per_class)
        self.threshold = int(self.threshold)
        self.specificity = float(self.specificity)

    @property
    def num_literals(self) -> int:
        return 2 * self.num_features

    def to_dict(self) -> dict:
        return asdict(self)


def clause_polarity(n: int) -> np.ndarray:
    """+1 for odd clause indices (vote for the class), -1 for even ones."""
    return np.where(np.arange(n) % 2 == 1, 1, -1).astype(np.int8)


@dataclass
class ClauseBank:
    """The clauses of one class: automaton states ``(n, 2D)`` and their polarity.

    ``states`` may be a view into a :class:`TsetlinMachine`'s storage.
    """

    states: np.ndarray
    states_per_action: int
    polarity: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.polarity is None:
            self.polarity = clause_polarity(self.states.shape[0])

    @classmethod
    def fresh(cls, n: int, num_features: int, states_per_action: int = 127) -> ClauseBank:
        states = np.full((n, 2 * num_features), states_per_action, dtype=np.uint8)
        return cls(states, states_per_action)

    @property
    def num_features(self) -> int:
        return self.states.shape[1] // 2

    def included(self) -> np.ndarray:
        """Boolean ``(n, 2D)`` include mask."""
        return self.states > self.states_per_action


@dataclass
class Prediction:
    class_sums: np.ndarray
    predicted_class: int
    margin: int


@dataclass
class Metrics:
    accuracy: float
    balanced_accuracy: float
    per_class_recall: list[float]
    n_samples: int
    # classes with no examples; their recall is counted as 0
    empty_classes: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def literals_of(x: Hypervector | np.ndarray, num_features: int | None = None) -> np.ndarray:
    """``[x, not x]`` as a uint8 vector of length 2D."""
    bits = x.bits() if isinstance(x, Hypervector) else np.asarray(x, dtype=bool)
    if num_features is not None and bits.shape[-1] != num_features:
        raise DimensionMismatchError(f"input has {bits.shape[-1]} features, machine expects {num_features}")
    return np.concatenate([bits, ~bits], axis=-1).astype(np.uint8)


def clause_eval(included: np.ndarray, literals: np.ndarray, learning: bool) -> int:
    """Conjunction of the included literals; an empty clause outputs 1 only while learning."""
    included = np.asarray(included, dtype=bool)
    if not included.any():
        return int(learning)
    return int(np.all(np.asarray(literals, dtype=bool)[included]))


def class_sum(bank: ClauseBank, literals: np.ndarray, threshold: int, learning: bool = False) -> int:
    inc = bank.included()
    outputs = np.array([clause_eval(inc[j], literals, learning) for j in range(inc.shape[0])])
    v = int(np.dot(outputs, bank.polarity.astype(np.int64)))
    return max(-threshold, min(threshold, v))


def unit_step(v: int) -> int:
    return 1 if v >= 0 else 0


def predict_binary(bank: ClauseBank, x: Hypervector | np.ndarray, threshold: int) -> int:
    return unit_step(class_sum(bank, literals_of(x, bank.num_features), threshold))


def predict_multiclass(class_sums: Sequence[int] | np.ndarray) -> int:
    """Index of the largest sum; ties go to the lowest class id."""
    return int(np.argmax(np.asarray(class_sums)))


def type_i_feedback(states: np.ndarray, literals: np.ndarray, clause_output: int,
                    specificity: float, boost_true_positive: bool, states_per_action: int,
                    rng) -> np.ndarray:
    """Apply Type I feedback to one clause's state row in place.

    ``rng`` needs only a ``random(size)`` method returning uniforms in [0, 1).
    """
    s = float(specificity)
    lits = np.asarray(literals, dtype=bool)
    u = rng.random(lits.shape[0])
    p_up = 1.0 if boost_true_positive else (s - 1.0) / s
    up = lits & bool(clause_output)
    move_up = up & (u < p_up)
    move_down = ~up & (u < 1.0 / s)
    new = states.astype(np.int16) + move_up - move_down
    states[:] = np.clip(new, 1, 2 * states_per_action)
    return states


def type_ii_feedback(states: np.ndarray, literals: np.ndarray, states_per_action: int) -> np.ndarray:
    """Apply Type II feedback (caller guarantees the clause fired) in place."""
    lits = np.asarray(literals, dtype=bool)
    move = ~lits & (states <= states_per_action)
    states[move] += 1
    return states


def balanced_accuracy(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int | None = None) -> Metrics:
    """Accuracy and mean per-class recall over ``n_classes`` classes."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise ValueError("cannot evaluate an empty dataset")
    if y_true.shape != y_pred.shape:
        raise ValueError("prediction and label arrays differ in length")
    if n_classes is None:
        n_classes = int(max(y_true.max(), y_pred.max())) + 1
    support = np.bincount(y_true, minlength=n_classes)[:n_classes]
    hits = np.bincount(y_true[y_true == y_pred], minlength=n_classes)[:n_classes]
    empty = [int(c) for c in np.flatnonzero(support == 0)]
    recall = np.divide(hits, support, out=np.zeros(n_classes), where=support > 0)
    return Metrics(
        accuracy=float(np.mean(y_true == y_pred)),
        balanced_accuracy=float(recall.sum() / n_classes),
        per_class_recall=[float(r) for r in recall],
        n_samples=int(y_true.size),
        empty_classes=empty,
    )


@dataclass
class PackedLiterals:
    """Bit-packed ``[x, not x]`` rows for a whole dataset."""

    words: np.ndarray
    num_features: int

    def __len__(self) -> int:
        return self.words.shape[0]


def prepare_literals(X) -> PackedLiterals:
    """Accept a ``(S, D)`` 0/1 matrix, a list of hypervectors, or already packed literals."""
    if isinstance(X, PackedLiterals):
        return X
    if len(X) and isinstance(X[0], Hypervector):
        X = stack(X)
    X = np.asarray(X, dtype=bool)
    if X.ndim != 2:
        raise DimensionMismatchError("features must be a 2-D (samples, features) matrix")
    D = X.shape[1]
    words = pack_bits(np.concatenate([X, ~X], axis=1))
    return PackedLiterals(np.ascontiguousarray(words), D)


def _seed_state(seed: int, *key: int) -> np.ndarray:
    ss = np.random.SeedSequence(entropy=seed % 2**64, spawn_key=key)
    return ss.generate_state(1, dtype=np.uint64)


class TsetlinMachine:
    """Multiclass (one bank per class) or binary (one bank, unit-step) Tsetlin Machine."""

    def __init__(self, config: TMConfig, n_classes: int = 2, binary: bool = False):
        if n_classes < 1:
            raise TMConfigError("need at least one class")
        if binary and n_classes != 2:
            raise TMConfigError("a binary machine has exactly two classes")
        self.config = config
        self.n_classes = n_classes
        self.binary = binary
        self.epoch = 0
        n_banks = 1 if binary else n_classes
        n = config.clauses_per_class
        L = config.num_literals
        self.states = np.full((n_banks, n, L), config.states_per_action, dtype=np.uint8)
        self.polarity = clause_polarity(n)
        self.include = np.zeros((n_banks, n, n_words(L)), dtype=np.uint64)
        self.inc_count = np.zeros((n_banks, n), dtype=np.int32)

    @property
    def num_features(self) -> int:
        return self.config.num_features

    @property
    def banks(self) -> list[ClauseBank]:
        N = self.config.states_per_action
        return [ClauseBank(self.states[b], N, self.polarity) for b in range(self.states.shape[0])]

    def sync_from_states(self) -> None:
        """Rebuild the packed include masks after editing ``states`` directly."""
        inc = self.states > self.config.states_per_action
        self.include = np.ascontiguousarray(pack_bits(inc))
        self.inc_count = inc.sum(axis=2).astype(np.int32)

    def _literals(self, X) -> PackedLiterals:
        lits = prepare_literals(X)
        if lits.num_features != self.num_features:
            raise DimensionMismatchError(
                f"data has {lits.num_features} features, machine expects {self.num_features}")
        return lits

    def fit_epoch(self, X, y) -> TsetlinMachine:
        lits = self._literals(X)
        y = np.asarray(y, dtype=np.int64)
        if len(lits) == 0:
            log.warning("fit_epoch called with an empty dataset; nothing to do")
            return self
        if y.shape != (len(lits),):
            raise ValueError("label count does not match sample count")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        cfg = self.config
        order = np.random.default_rng(_seed_state(cfg.seed, self.epoch, 0)).permutation(len(lits))
        rng = _seed_state(cfg.seed, self.epoch, 1)
        K.fit_epoch(self.states, self.include, self.inc_count, self.polarity, lits.words, y, order,
                    cfg.threshold, cfg.specificity, bool(cfg.boost_true_positive),
                    cfg.states_per_action, self.binary, rng)
        self.epoch += 1
        return self

    def fit(self, X, y, epochs: int, callback=None) -> TsetlinMachine:
        lits = self._literals(X)
        for _ in range(epochs):
            self.fit_epoch(lits, y)
            if callback is not None:
                callback(self)
        return self

    def raw_class_sums(self, X) -> np.ndarray:
        lits = self._literals(X)
        return K.class_sums(self.include, self.inc_count, self.polarity, lits.words, 0)

    def class_sums(self, X) -> np.ndarray:
        T = self.config.threshold
        return np.clip(self.raw_class_sums(X), -T, T)

    def clause_outputs(self, X, learning: bool = False) -> np.ndarray:
        lits = self._literals(X)
        return K.clause_matrix(self.include, self.inc_count, lits.words, int(learning))

    def predict(self, X) -> np.ndarray:
        sums = self.class_sums(X)
        if self.binary:
            return (sums[:, 0] >= 0).astype(np.int64)
        return np.argmax(sums, axis=1).astype(np.int64)

    def predict_one(self, x) -> Prediction:
        sums = self.class_sums([x] if isinstance(x, Hypervector) else np.atleast_2d(x))[0]
        if self.binary:
            return Prediction(sums, unit_step(int(sums[0])), int(sums[0]))
        order = np.sort(sums)
        margin = int(order[-1] - order[-2]) if sums.size > 1 else int(order[-1])
        return Prediction(sums, predict_multiclass(sums), margin)

    def evaluate(self, X, y) -> Metrics:
        y = np.asarray(y, dtype=np.int64)
        return balanced_accuracy(y, self.predict(X), self.n_classes)
