"""Clause export and decoding of hyperliterals back into codebook tokens."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .hv_core import ConfigurationError, Hypervector, TokenCodebook, rotate
from .tm_engine import TsetlinMachine


@dataclass
class Match:
    token_id: str
    role: str
    overlap: int
    score: float
    vote: str  # "for" (positive literal) or "against" (negated literal)


@dataclass
class ClauseReport:
    class_id: int
    clause_index: int
    polarity: int
    positive_includes: list[int]
    negated_includes: list[int]
    matches: list[Match] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.positive_includes and not self.negated_includes

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def render(self) -> str:
        sign = "+" if self.polarity > 0 else "-"
        lits = [f"x{p}" for p in self.positive_includes] + [f"¬x{p}" for p in self.negated_includes]
        lines = [f"class {self.class_id} clause {self.clause_index} ({sign}): "
                 + (" ∧ ".join(lits) if lits else "<empty>")]
        for m in self.matches:
            lines.append(f"  {m.vote:<7} {m.role:<8} {m.token_id:<16} overlap={m.overlap} score={m.score:.3f}")
        return "\n".join(lines)


@dataclass
class NegatedFraction:
    overall: float
    per_class: list[float]
    zero_denominator: bool


def export_clauses(machine: TsetlinMachine) -> list[ClauseReport]:
    D = machine.num_features
    N = machine.config.states_per_action
    reports = []
    for b, bank in enumerate(machine.states):
        inc = bank > N
        for j in range(bank.shape[0]):
            lits = np.flatnonzero(inc[j])
            reports.append(ClauseReport(
                class_id=b,
                clause_index=j,
                polarity=int(machine.polarity[j]),
                positive_includes=lits[lits < D].tolist(),
                negated_includes=(lits[lits >= D] - D).tolist(),
            ))
    return reports


def _token_table(codebook: TokenCodebook, shift: int) -> tuple[list[str], np.ndarray]:
    ids = list(codebook.entries)
    if not ids:
        return ids, np.zeros((0, 0), dtype=np.uint64)
    words = np.stack([rotate(codebook[t], shift).words for t in ids])
    return ids, words


def decode_clause(report: ClauseReport, codebooks: dict[str, TokenCodebook],
                  role_shifts: dict[str, int], size: int, top_k: int | None = None) -> ClauseReport:
    """Attach the tokens whose (shifted) hypervectors overlap the clause's includes.

    A token matches when at least ceil(nbits/2) of its bits are included;
    matches are ranked by overlap/nbits, highest first.
    """
    missing = set(role_shifts) - set(codebooks)
    if missing:
        raise ConfigurationError(f"no codebook for role(s) {sorted(missing)}")
    groups = [("for", report.positive_includes), ("against", report.negated_includes)]
    matches: list[Match] = []
    for role, shift in role_shifts.items():
        cb = codebooks[role]
        if cb.size != size:
            raise ConfigurationError(f"{role} codebook size {cb.size} differs from model size {size}")
        ids, table = _token_table(cb, shift)
        if not ids:
            continue
        need = math.ceil(cb.nbits / 2)
        for vote, positions in groups:
            if not positions:
                continue
            hv = Hypervector.from_positions(size, positions)
            ov = np.bitwise_count(table & hv.words).sum(axis=1)
            for i in np.flatnonzero(ov >= need):
                matches.append(Match(ids[i], role, int(ov[i]), float(ov[i]) / cb.nbits, vote))
    matches.sort(key=lambda m: (-m.score, -m.overlap, m.vote, m.role, m.token_id))
    if top_k is not None:
        matches = matches[:top_k]
    return replace(report, matches=matches)


def negated_literal_fraction(machine: TsetlinMachine) -> NegatedFraction:
    """Share of included literals that are negations, per class and overall."""
    D = machine.num_features
    inc = machine.states > machine.config.states_per_action
    pos = inc[:, :, :D].sum(axis=(1, 2))
    neg = inc[:, :, D:].sum(axis=(1, 2))
    per_class = [float(n / (n + p)) if n + p else 0.0 for n, p in zip(neg, pos)]
    total = int(pos.sum() + neg.sum())
    overall = float(neg.sum() / total) if total else 0.0
    return NegatedFraction(overall, per_class, total == 0)
