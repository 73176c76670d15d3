"""Dataset loaders, deterministic subsetting, model persistence and sweep tables."""

from __future__ import annotations

import base64
import csv
import gzip
import hashlib
import json
import logging
import math
import statistics
import struct
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .hv_core import TokenCodebook
from .tm_engine import TMConfig, TsetlinMachine

log = logging.getLogger(__name__)

MODEL_VERSION = 1
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

HIV_LABEL_MAP = {"CI": "Inactive", "CA": "Active", "CM": "Active"}


class DataError(Exception):
    """Malformed or inconsistent input data."""


class IdxFormatError(DataError):
    pass


class UnsupportedVersionError(DataError):
    pass


class ChecksumError(DataError):
    pass


@dataclass
class LineError:
    line: int
    reason: str


@dataclass
class Dataset:
    samples: Sequence
    labels: np.ndarray
    class_names: list[str]
    manifest: dict = field(default_factory=dict)
    errors: list[LineError] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.samples) != len(self.labels):
            raise DataError(f"{len(self.samples)} samples but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def take(self, indices: Sequence[int], **manifest_updates) -> Dataset:
        idx = np.asarray(indices, dtype=np.int64)
        if isinstance(self.samples, np.ndarray):
            samples = self.samples[idx]
        else:
            samples = [self.samples[i] for i in idx]
        manifest = {**self.manifest, **manifest_updates}
        return Dataset(samples, self.labels[idx], list(self.class_names), manifest)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def parse_idx(raw: bytes, expected_magic: int, name: str = "idx") -> np.ndarray:
    if len(raw) < 4:
        raise IdxFormatError(f"{name}: truncated header at byte offset {len(raw)}")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(f"{name}: bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{name}: truncated header at byte offset {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    n = math.prod(dims)
    if len(raw) < header + n:
        raise IdxFormatError(
            f"{name}: truncated data at byte offset {len(raw)}, expected {header + n} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=n, offset=header).reshape(dims).copy()


def write_idx(arr: np.ndarray) -> bytes:
    """Serialize a uint8 array as IDX bytes (magic 0x08 type code, big-endian dims)."""
    arr = np.ascontiguousarray(arr, dtype=np.uint8)
    magic = 0x0800 | arr.ndim
    return struct.pack(f">I{arr.ndim}I", magic, *arr.shape) + arr.tobytes()


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """Load an IDX image/label pair (optionally gzipped) into a raw image dataset."""
    images = parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, str(images_path))
    labels = parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, str(labels_path))
    if len(images) != len(labels):
        raise IdxFormatError(f"count mismatch: {len(images)} images vs {len(labels)} labels")
    n_classes = int(labels.max()) + 1 if len(labels) else 0
    manifest = {
        "source": {str(images_path): file_sha256(images_path), str(labels_path): file_sha256(labels_path)},
        "n_samples": len(labels),
    }
    return Dataset(images, labels.astype(np.int64), [str(c) for c in range(n_classes)], manifest)


def hex_to_positions(hex_bits: str, length: int) -> frozenset[int]:
    """Set-bit positions of a hex string, first character holding bits 0..3 (MSB first)."""
    if len(hex_bits) * 4 != length:
        raise ValueError(f"expected {length // 4} hex digits, got {len(hex_bits)}")
    value = int(hex_bits, 16)
    return frozenset(i for i in range(length) if (value >> (length - 1 - i)) & 1)


def positions_to_hex(positions: Iterable[int], length: int) -> str:
    value = 0
    for p in positions:
        value |= 1 << (length - 1 - p)
    return f"{value:0{length // 4}x}"


def trec_coarse(label: str) -> str:
    return label.split(":", 1)[0]


def load_tsv(path: str | Path, schema: str, fingerprint_length: int = 4096,
             label_map: dict[str, str] | Callable[[str], str] | None = None) -> Dataset:
    """One sample per line: ``label<TAB>payload``.

    ``schema="text"`` keeps the UTF-8 text; ``schema="fingerprint"`` parses a
    hex bit string into a frozenset of set positions.  Malformed lines are
    recorded in ``Dataset.errors`` and skipped.
    """
    if schema not in ("text", "fingerprint"):
        raise ValueError(f"unknown TSV schema {schema!r}")
    if fingerprint_length % 4:
        raise ValueError("fingerprint_length must be a multiple of 4")
    if isinstance(label_map, dict):
        mapping = label_map
        label_map = lambda lab: mapping.get(lab, lab)  # noqa: E731
    names: list[str] = []
    payloads: list = []
    errors: list[LineError] = []
    text = Path(path).read_bytes().decode("utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "\t" not in line:
            errors.append(LineError(lineno, "missing TAB separator"))
            continue
        label, payload = line.split("\t", 1)
        label = label.strip()
        if not label:
            errors.append(LineError(lineno, "empty label"))
            continue
        if schema == "fingerprint":
            try:
                payload = hex_to_positions(payload.strip(), fingerprint_length)
            except ValueError as exc:
                errors.append(LineError(lineno, str(exc)))
                continue
        names.append(label_map(label) if label_map else label)
        payloads.append(payload)
    for err in errors:
        log.warning("%s:%d: %s", path, err.line, err.reason)
    class_names = sorted(set(names))
    index = {c: i for i, c in enumerate(class_names)}
    manifest = {"source": {str(path): file_sha256(path)}, "n_samples": len(payloads),
                "rejected_lines": len(errors)}
    return Dataset(payloads, np.array([index[n] for n in names], dtype=np.int64), class_names,
                   manifest, errors)


def _class_indices(labels: np.ndarray, n_classes: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [rng.permutation(np.flatnonzero(labels == c)) for c in range(n_classes)]


def subset(dataset: Dataset, n_per_class: int | None = None, fraction: float | None = None,
           seed: int = 0) -> Dataset:
    """Stratified deterministic subset; the original sample order is kept."""
    if (n_per_class is None) == (fraction is None):
        raise ValueError("give exactly one of n_per_class or fraction")
    if fraction is not None and not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    if fraction == 1.0:
        return dataset.take(np.arange(len(dataset)), subset={"fraction": 1.0, "seed": seed})
    rng = np.random.default_rng(seed)
    chosen = []
    for c, idx in enumerate(_class_indices(dataset.labels, dataset.n_classes, rng)):
        k = round(fraction * len(idx)) if fraction is not None else n_per_class
        if k > len(idx):
            log.warning("class %s has %d samples, fewer than the %d requested", c, len(idx), k)
        chosen.append(idx[:k])
    keep = np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=np.int64)
    info = {"n_per_class": n_per_class, "fraction": fraction, "seed": seed, "size": int(keep.size)}
    return dataset.take(keep, subset=info)


def split(dataset: Dataset, n_train_per_class: int, n_test_per_class: int,
          seed: int = 0) -> tuple[Dataset, Dataset]:
    """Disjoint stratified train/test subsets drawn from one pool."""
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c, idx in enumerate(_class_indices(dataset.labels, dataset.n_classes, rng)):
        if n_train_per_class + n_test_per_class > len(idx):
            log.warning("class %s has only %d samples for a %d/%d split", c, len(idx),
                        n_train_per_class, n_test_per_class)
        train.append(idx[:n_train_per_class])
        test.append(idx[n_train_per_class:n_train_per_class + n_test_per_class])
    info = {"n_train_per_class": n_train_per_class, "n_test_per_class": n_test_per_class, "seed": seed}
    tr = np.sort(np.concatenate(train))
    te = np.sort(np.concatenate(test))
    return dataset.take(tr, split={**info, "part": "train"}), dataset.take(te, split={**info, "part": "test"})


# -- model persistence -------------------------------------------------------

@dataclass
class ModelBundle:
    machine: TsetlinMachine
    codebooks: dict[str, TokenCodebook] = field(default_factory=dict)
    encoder: dict | None = None


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def model_to_dict(machine: TsetlinMachine, codebooks: dict[str, TokenCodebook] | None = None,
                  encoder: dict | None = None) -> dict:
    classes = []
    for b, bank in enumerate(machine.states):
        clauses = [{"polarity": int(machine.polarity[j]),
                    "states": base64.b64encode(bank[j].tobytes()).decode("ascii")}
                   for j in range(bank.shape[0])]
        classes.append({"class_id": b, "clauses": clauses})
    body = {
        "version": MODEL_VERSION,
        "config": machine.config.to_dict(),
        "n_classes": machine.n_classes,
        "binary": machine.binary,
        "epoch": machine.epoch,
        "classes": classes,
        "codebooks": {k: v.to_dict() for k, v in (codebooks or {}).items()},
        "encoder": encoder,
    }
    body["checksum"] = hashlib.sha256(_canonical(body)).hexdigest()
    return body


def model_from_dict(d: dict) -> ModelBundle:
    if d.get("version") != MODEL_VERSION:
        raise UnsupportedVersionError(f"unsupported model version {d.get('version')!r}")
    body = {k: v for k, v in d.items() if k != "checksum"}
    if hashlib.sha256(_canonical(body)).hexdigest() != d.get("checksum"):
        raise ChecksumError("model checksum mismatch; file is corrupted")
    config = TMConfig(**d["config"])
    machine = TsetlinMachine(config, n_classes=d["n_classes"], binary=d["binary"])
    machine.epoch = int(d["epoch"])
    L = config.num_literals
    for cls in d["classes"]:
        for j, clause in enumerate(cls["clauses"]):
            row = np.frombuffer(base64.b64decode(clause["states"]), dtype=np.uint8)
            if row.shape != (L,):
                raise DataError(f"class {cls['class_id']} clause {j}: expected {L} states")
            if clause["polarity"] != machine.polarity[j]:
                raise DataError(f"class {cls['class_id']} clause {j}: polarity does not match index")
            machine.states[cls["class_id"], j] = row
    N = config.states_per_action
    if machine.states.min() < 1 or machine.states.max() > 2 * N:
        raise DataError("automaton state outside [1, 2N]")
    machine.sync_from_states()
    codebooks = {k: TokenCodebook.from_dict(v) for k, v in d.get("codebooks", {}).items()}
    return ModelBundle(machine, codebooks, d.get("encoder"))


def dumps_model(machine: TsetlinMachine, codebooks=None, encoder=None) -> str:
    return json.dumps(model_to_dict(machine, codebooks, encoder), separators=(",", ":"))


def save_model(path: str | Path, machine: TsetlinMachine,
               codebooks: dict[str, TokenCodebook] | None = None, encoder: dict | None = None) -> None:
    Path(path).write_text(dumps_model(machine, codebooks, encoder), encoding="utf-8")


def load_model(path: str | Path) -> ModelBundle:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChecksumError(f"{path}: unreadable model file ({exc})") from exc
    return model_from_dict(d)


# -- run records and sweep tables --------------------------------------------

@dataclass
class EpochMetrics:
    epoch: int
    accuracy: float
    balanced_accuracy: float
    wall_time: float


@dataclass
class RunRecord:
    config: dict
    ensemble: int
    seed: int
    hv_size: int | None = None
    nbits: int | None = None
    clauses: int | None = None
    epochs: list[EpochMetrics] = field(default_factory=list)

    def add(self, m: EpochMetrics) -> None:
        if self.epochs and m.epoch <= self.epochs[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        for v in (m.accuracy, m.balanced_accuracy):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"metric {v} outside [0, 1]")
        self.epochs.append(m)

    @property
    def final(self) -> EpochMetrics | None:
        return self.epochs[-1] if self.epochs else None

    @property
    def max_accuracy(self) -> float:
        return max((e.accuracy for e in self.epochs), default=float("nan"))

    @property
    def max_balanced_accuracy(self) -> float:
        return max((e.balanced_accuracy for e in self.epochs), default=float("nan"))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunRecord:
        d = dict(d)
        d["epochs"] = [EpochMetrics(**e) for e in d.get("epochs", [])]
        return cls(**d)


LONG_COLUMNS = ["hv_size", "nbits", "ensemble", "epoch", "accuracy", "balanced_accuracy", "seed", "clauses"]
SUMMARY_COLUMNS = ["hv_size", "nbits", "clauses", "n_ensembles",
                   "max_accuracy_mean", "max_accuracy_sd",
                   "max_balanced_accuracy_mean", "max_balanced_accuracy_sd",
                   "final_accuracy_mean", "final_accuracy_sd"]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


def mean_sd(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample (n-1) standard deviation; sd is nan for fewer than two values."""
    values = list(values)
    if not values:
        return float("nan"), float("nan")
    sd = statistics.stdev(values) if len(values) > 1 else float("nan")
    return statistics.fmean(values), sd


def _cell(r: RunRecord) -> tuple:
    return (r.hv_size if r.hv_size is not None else -1, r.nbits if r.nbits is not None else -1,
            r.clauses if r.clauses is not None else -1)


def summarize(records: Sequence[RunRecord]) -> list[dict]:
    cells: dict[tuple, list[RunRecord]] = {}
    for r in records:
        cells.setdefault(_cell(r), []).append(r)
    rows = []
    for key in sorted(cells):
        rs = [r for r in cells[key] if r.epochs]
        first = cells[key][0]
        max_acc = mean_sd([r.max_accuracy for r in rs])
        max_bal = mean_sd([r.max_balanced_accuracy for r in rs])
        final = mean_sd([r.final.accuracy for r in rs])
        rows.append({
            "hv_size": first.hv_size, "nbits": first.nbits, "clauses": first.clauses,
            "n_ensembles": len(rs),
            "max_accuracy_mean": max_acc[0], "max_accuracy_sd": max_acc[1],
            "max_balanced_accuracy_mean": max_bal[0], "max_balanced_accuracy_sd": max_bal[1],
            "final_accuracy_mean": final[0], "final_accuracy_sd": final[1],
        })
    return rows


def write_sweep_table(records: Sequence[RunRecord], path: str | Path,
                      summary_path: str | Path | None = None) -> tuple[Path, Path]:
    """Write the long-format per-epoch CSV and the per-cell summary CSV."""
    path = Path(path)
    summary_path = Path(summary_path) if summary_path else path.with_name(path.stem + "_summary.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for r in sorted(records, key=lambda r: (_cell(r), r.ensemble)):
            for e in r.epochs:
                w.writerow([fmt(r.hv_size), fmt(r.nbits), r.ensemble, e.epoch, fmt(e.accuracy),
                            fmt(e.balanced_accuracy), r.seed, fmt(r.clauses)])
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in summarize(records):
            w.writerow([fmt(row[c]) for c in SUMMARY_COLUMNS])
    return path, summary_path
