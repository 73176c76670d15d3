"""Run configuration, dataset preparation and the ensemble training protocol."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import data_io
from .data_io import Dataset, DataError, EpochMetrics, RunRecord
from .encoders import (
    FingerprintEncoder,
    FingerprintEncoderSpec,
    ImageEncoder,
    ImageEncoderSpec,
    TextEncoder,
    TextEncoderSpec,
    binarize,
    tokenize,
)
from .hv_core import TokenCodebook, unpack_bits
from .tm_engine import PackedLiterals, TMConfig, TsetlinMachine, prepare_literals

log = logging.getLogger(__name__)

DATASETS = ("xor", "idx", "text", "fingerprint")
ENCODERS = ("vanilla", "hv")
LABEL_MAPS = {"none": None, "hiv": data_io.HIV_LABEL_MAP, "trec-coarse": data_io.trec_coarse}

XOR_X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=np.uint8)
XOR_Y = np.array([0, 1, 1, 0], dtype=np.int64)


class ConfigError(ValueError):
    """Invalid run configuration (usage error)."""


@dataclass
class RunConfig:
    dataset: str = "xor"
    encoder: str = "hv"
    # idx: image/label files; text/fingerprint: TSV files
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_path: str | None = None
    test_path: str | None = None
    # without separate test files the training pool is split per class
    n_train_per_class: int | None = None
    n_test_per_class: int | None = None
    subset_seed: int = 0
    # None: "trec-coarse" for text, "hiv" for fingerprints (both leave other labels unchanged)
    label_map: str | None = None
    fingerprint_length: int = 4096
    # hypervector encoding
    hv_size: int = 2048
    nbits: int = 4
    patch_height: int = 1
    patch_width: int = 1
    stride: int = 1
    binarize_threshold: int = 75
    skip_blank: bool = True
    position_tokens: bool = True
    # machine
    clauses: int | None = None
    threshold: int | None = None
    specificity: float | None = None
    states_per_action: int = 127
    boost_true_positive: bool | None = None
    # protocol
    epochs: int | None = None
    ensembles: int = 1
    seed: int = 0
    workers: int = 1
    output_dir: str = "runs/out"
    # sweep axes
    hv_sizes: list[int] = field(default_factory=list)
    nbits_list: list[int] = field(default_factory=list)
    clauses_list: list[int] = field(default_factory=list)

    def resolved(self) -> RunConfig:
        """Fill dataset-dependent defaults and validate."""
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset: expected one of {DATASETS}, got {self.dataset!r}")
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder: expected one of {ENCODERS}, got {self.encoder!r}")
        xor = self.dataset == "xor"
        defaults = {"clauses": 10 if xor else 100, "threshold": 5 if xor else 25,
                    "specificity": 3.0, "epochs": 200 if xor else 30,
                    "label_map": {"text": "trec-coarse", "fingerprint": "hiv"}.get(self.dataset, "none")}
        if self.label_map is not None and self.label_map not in LABEL_MAPS:
            raise ConfigError(f"label_map: expected one of {sorted(LABEL_MAPS)}, got {self.label_map!r}")
        cfg = dataclasses.replace(self, **{k: v for k, v in defaults.items() if getattr(self, k) is None})
        for name in ("ensembles", "workers", "hv_size", "nbits", "threshold"):
            if getattr(cfg, name) < 1:
                raise ConfigError(f"{name}: must be >= 1")
        if cfg.epochs < 0:
            raise ConfigError("epochs: must be >= 0")
        if cfg.clauses < 2 or cfg.clauses % 2:
            raise ConfigError("clauses: must be an even number >= 2")
        if cfg.specificity < 1:
            raise ConfigError("specificity: must be >= 1")
        if cfg.nbits > cfg.hv_size:
            raise ConfigError("nbits: must not exceed hv_size")
        required = {"idx": ("train_images", "train_labels"), "text": ("train_path",),
                    "fingerprint": ("train_path",)}.get(cfg.dataset, ())
        for name in required:
            if not getattr(cfg, name):
                raise ConfigError(f"{name}: required for dataset {cfg.dataset!r}")
        for name in ("train_images", "train_labels", "test_images", "test_labels", "train_path", "test_path"):
            p = getattr(cfg, name)
            if p and not Path(p).is_file():
                raise ConfigError(f"{name}: no such file {p!r}")
        if (cfg.test_images is None) != (cfg.test_labels is None):
            raise ConfigError("test_images and test_labels must be given together")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        if "run_config" in d:
            d = d["run_config"]
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from exc


@dataclass
class PreparedData:
    train: PackedLiterals
    train_labels: np.ndarray
    test: PackedLiterals
    test_labels: np.ndarray
    n_classes: int
    class_names: list[str]
    binary: bool
    codebooks: dict[str, TokenCodebook]
    encoder: dict
    manifest: dict

    @property
    def num_features(self) -> int:
        return self.train.num_features


def _load_raw(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    label_map = LABEL_MAPS[cfg.label_map]
    if cfg.dataset == "idx":
        pool = data_io.load_idx(cfg.train_images, cfg.train_labels)
        test = data_io.load_idx(cfg.test_images, cfg.test_labels) if cfg.test_images else None
    else:
        pool = data_io.load_tsv(cfg.train_path, cfg.dataset, cfg.fingerprint_length, label_map)
        test = (data_io.load_tsv(cfg.test_path, cfg.dataset, cfg.fingerprint_length, label_map)
                if cfg.test_path else None)
        if test is not None and test.class_names != pool.class_names:
            raise DataError("train and test files have different label sets")
    if len(pool) == 0:
        raise DataError("training data is empty")
    if test is None:
        if cfg.n_train_per_class is None or cfg.n_test_per_class is None:
            raise ConfigError("n_train_per_class/n_test_per_class: required without separate test data")
        return data_io.split(pool, cfg.n_train_per_class, cfg.n_test_per_class, cfg.subset_seed)
    train = pool
    if cfg.n_train_per_class is not None:
        train = data_io.subset(pool, n_per_class=cfg.n_train_per_class, seed=cfg.subset_seed)
    if cfg.n_test_per_class is not None:
        test = data_io.subset(test, n_per_class=cfg.n_test_per_class, seed=cfg.subset_seed)
    return train, test


def image_spec(cfg: RunConfig) -> ImageEncoderSpec:
    return ImageEncoderSpec(size=cfg.hv_size, nbits=cfg.nbits, seed=cfg.seed,
                            patch_height=cfg.patch_height, patch_width=cfg.patch_width,
                            stride=cfg.stride, binarize_threshold=cfg.binarize_threshold,
                            skip_blank=cfg.skip_blank, position_tokens=cfg.position_tokens)


def encode_dataset(cfg: RunConfig, ds: Dataset, state: dict, train: bool) -> np.ndarray:
    """Encode raw samples to a ``(S, D)`` uint8 feature matrix.

    ``state`` carries encoders and vocabularies from the training pass to
    the evaluation pass.
    """
    if cfg.dataset == "idx":
        if cfg.encoder == "vanilla":
            return binarize(ds.samples.reshape(len(ds), -1), cfg.binarize_threshold).astype(np.uint8)
        if "enc" not in state:
            state["enc"] = ImageEncoder(image_spec(cfg), state.get("codebooks"))
        enc = state["enc"]
        return unpack_bits(enc.encode_batch(ds.samples), cfg.hv_size).astype(np.uint8)
    if cfg.dataset == "fingerprint":
        if cfg.encoder == "vanilla":
            X = np.zeros((len(ds), cfg.fingerprint_length), dtype=np.uint8)
            for i, pos in enumerate(ds.samples):
                X[i, list(pos)] = 1
            return X
        spec = FingerprintEncoderSpec(cfg.hv_size, cfg.nbits, cfg.seed, cfg.fingerprint_length)
        if "enc" not in state:
            cbs = state.get("codebooks")
            state["enc"] = FingerprintEncoder(spec, cbs["bit"] if cbs else None)
        enc = state["enc"]
        return unpack_bits(enc.encode_batch(ds.samples), cfg.hv_size).astype(np.uint8)
    if cfg.dataset == "text":
        if cfg.encoder == "vanilla":
            vocab = state.get("vocab")
            if vocab is None:
                words = sorted({w for t in ds.samples for w in tokenize(t)})
                vocab = state["vocab"] = {w: i for i, w in enumerate(words)}
            X = np.zeros((len(ds), max(1, len(vocab))), dtype=np.uint8)
            for i, t in enumerate(ds.samples):
                idx = [vocab[w] for w in tokenize(t) if w in vocab]
                X[i, idx] = 1
            return X
        if "enc" not in state:
            cbs = state.get("codebooks")
            state["enc"] = TextEncoder(TextEncoderSpec(cfg.hv_size, cfg.nbits, cfg.seed),
                                       cbs["word"] if cbs else None)
        enc = state["enc"]
        return unpack_bits(enc.encode_batch(ds.samples, train=train), cfg.hv_size).astype(np.uint8)
    raise ConfigError(f"dataset: cannot encode {cfg.dataset!r}")


def encoder_description(cfg: RunConfig, state: dict) -> dict:
    desc = {"dataset": cfg.dataset, "encoder": cfg.encoder}
    if cfg.dataset == "idx":
        desc["binarize_threshold"] = cfg.binarize_threshold
        if cfg.encoder == "hv":
            desc["image"] = image_spec(cfg).to_dict()
            desc["role_shifts"] = state["enc"].role_shifts()
    elif cfg.dataset == "text" and cfg.encoder == "vanilla":
        desc["vocabulary"] = sorted(state["vocab"], key=state["vocab"].get)
    elif cfg.encoder == "hv":
        desc.update(hv_size=cfg.hv_size, nbits=cfg.nbits, seed=cfg.seed)
        desc["role_shifts"] = {"word": 0} if cfg.dataset == "text" else {"bit": 0}
    if cfg.dataset == "fingerprint":
        desc["fingerprint_length"] = cfg.fingerprint_length
    return desc


def prepare(cfg: RunConfig, codebooks: dict[str, TokenCodebook] | None = None) -> PreparedData:
    """Load, split and encode. Pass a saved model's ``codebooks`` to reuse its tokens."""
    cfg = cfg.resolved()
    if cfg.dataset == "xor":
        lits = prepare_literals(XOR_X)
        return PreparedData(lits, XOR_Y, lits, XOR_Y, 2, ["0", "1"], True, {},
                            {"dataset": "xor", "encoder": "vanilla"}, {"source": "builtin:xor"})
    train, test = _load_raw(cfg)
    state: dict = {"codebooks": codebooks} if codebooks else {}
    Xtr = encode_dataset(cfg, train, state, train=True)
    Xte = encode_dataset(cfg, test, state, train=False)
    enc = state.get("enc")
    codebooks = dict(enc.codebooks) if enc is not None else {}
    manifest = {"train": train.manifest, "test": test.manifest}
    return PreparedData(prepare_literals(Xtr), train.labels, prepare_literals(Xte), test.labels,
                        train.n_classes, train.class_names, False, codebooks,
                        encoder_description(cfg, state), manifest)


def replica_seed(master: int, ensemble: int) -> int:
    ss = np.random.SeedSequence(entropy=master % 2**64, spawn_key=(ensemble,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def make_machine(cfg: RunConfig, data: PreparedData, seed: int) -> TsetlinMachine:
    tm_cfg = TMConfig(clauses_per_class=cfg.clauses, threshold=cfg.threshold,
                      specificity=cfg.specificity, states_per_action=cfg.states_per_action,
                      boost_true_positive=cfg.boost_true_positive, seed=seed,
                      num_features=data.num_features)
    return TsetlinMachine(tm_cfg, n_classes=data.n_classes, binary=data.binary)


@dataclass
class ReplicaResult:
    record: RunRecord
    best: TsetlinMachine
    final: TsetlinMachine


def run_replica(cfg: RunConfig, data: PreparedData, ensemble: int) -> ReplicaResult:
    """Train one seeded replica, evaluating on the test split after every epoch."""
    cfg = cfg.resolved()
    seed = replica_seed(cfg.seed, ensemble)
    tm = make_machine(cfg, data, seed)
    record = RunRecord(config=cfg.to_dict(), ensemble=ensemble, seed=seed,
                       hv_size=data.num_features, nbits=cfg.nbits if cfg.encoder == "hv" else None,
                       clauses=cfg.clauses)
    best_states = tm.states.copy()
    best_epoch = 0
    best_acc = -1.0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        tm.fit_epoch(data.train, data.train_labels)
        m = tm.evaluate(data.test, data.test_labels)
        record.add(EpochMetrics(epoch, m.accuracy, m.balanced_accuracy, time.perf_counter() - t0))
        if m.accuracy > best_acc:
            best_acc = m.accuracy
            best_epoch = epoch
            best_states = tm.states.copy()
    best = make_machine(cfg, data, seed)
    best.states[:] = best_states
    best.epoch = best_epoch
    best.sync_from_states()
    return ReplicaResult(record, best, tm)


def _replica_worker(args):
    cfg, data, ensemble = args
    return run_replica(cfg, data, ensemble)


def run_ensembles(cfg: RunConfig, data: PreparedData) -> list[ReplicaResult]:
    cfg = cfg.resolved()
    jobs = [(cfg, data, i) for i in range(cfg.ensembles)]
    if cfg.workers > 1 and cfg.ensembles > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_replica_worker, jobs))
    return [_replica_worker(j) for j in jobs]
