"""Shared oracles for the unit and acceptance suites."""

import math

import numpy as np

from hvtm import _kernels as K
from hvtm.explain import ClauseReport, decode_clause
from hvtm.hv_core import TokenCodebook, pack_bits, rotate
from hvtm.tm_engine import type_i_feedback, type_ii_feedback

N = 127


class StubRng:
    """Minimal stand-in for a generator: replays uniforms from a seeded source."""

    def __init__(self, seed):
        self._gen = np.random.default_rng(seed)

    def random(self, size=None):
        return self._gen.random(size)


def expected_type_i(c, x, s, boost):
    """(P[step toward include], P[step toward exclude]) from an interior state."""
    if c == 1 and x == 1:
        return (1.0 if boost else (s - 1) / s), 0.0
    return 0.0, 1 / s


def within(freq, p, trials, k=3.0):
    se = math.sqrt(p * (1 - p) / trials)
    if se == 0:
        return freq == p
    return abs(freq - p) <= k * se


def type_i_trials(impl, c, x, s, boost, trials, start=N, seed=0):
    """Run ``trials`` independent literals through one Type I update; return (up, down) frequencies.

    Every literal of one wide clause shares the same (c, x, state) cell, and
    each literal gets its own draw, so one call yields ``trials`` samples.
    """
    states = np.full(trials, start, dtype=np.uint8)
    lits = np.full(trials, x, dtype=np.uint8)
    if impl == "reference":
        after = type_i_feedback(states.copy(), lits, c, s, boost, N, StubRng(seed))
    else:
        st = states[None, :].copy()
        inc = pack_bits(st > N)
        cnt = (st > N).sum(axis=1).astype(np.int32)
        rng = np.array([seed + 1], dtype=np.uint64)
        K.type_i_clause(st, inc, cnt, 0, pack_bits(lits.astype(bool)), c, float(s), boost, N, rng)
        after = st[0]
        assert np.array_equal(pack_bits(st > N), inc) and cnt[0] == (st > N).sum()
    delta = after.astype(np.int16) - start
    return float(np.mean(delta == 1)), float(np.mean(delta == -1))


def type_ii_outcome(impl, x, start):
    states = np.full(64, start, dtype=np.uint8)
    lits = np.full(64, x, dtype=np.uint8)
    if impl == "reference":
        after = type_ii_feedback(states.copy(), lits, N)
    else:
        st = states[None, :].copy()
        inc = pack_bits(st > N)
        cnt = (st > N).sum(axis=1).astype(np.int32)
        K.type_ii_clause(st, inc, cnt, 0, pack_bits(lits.astype(bool)), N)
        after = st[0]
    return set((after.astype(np.int16) - start).tolist())


def expected_type_ii(x, start):
    return {1} if (x == 0 and start <= N) else {0}


def confusion_balanced_accuracy(y_true, y_pred, n_classes):
    """Brute-force oracle: build the confusion matrix cell by cell."""
    cm = [[0] * n_classes for _ in range(n_classes)]
    for t, p in zip(y_true, y_pred):
        cm[t][p] += 1
    recalls = []
    for k in range(n_classes):
        support = sum(cm[k])
        recalls.append(cm[k][k] / support if support else 0.0)
    return sum(recalls) / n_classes


def planted_round_trip(n_tokens, size=2048, nbits=4, seed=0):
    """Plant clauses equal to shifted token vectors and decode them back.

    Returns (hits, total): a hit is the planted token at rank 1 with score 1.0.
    """
    rng = np.random.default_rng(seed)
    shifts = {"patch": 0, "row": 1, "column": 2}
    codebooks = {}
    for i, role in enumerate(shifts):
        cb = TokenCodebook(size, nbits, seed + i)
        for t in range(40):
            cb.new_token(f"{role}-{t}")
        codebooks[role] = cb
    hits = 0
    for _ in range(n_tokens):
        role = list(shifts)[int(rng.integers(3))]
        tok = f"{role}-{int(rng.integers(40))}"
        planted = rotate(codebooks[role][tok], shifts[role]).positions()
        report = ClauseReport(0, 0, 1, planted, [])
        top = decode_clause(report, codebooks, shifts, size).matches[0]
        hits += (top.token_id, top.role, top.score, top.vote) == (tok, role, 1.0, "for")
    return hits, n_tokens
