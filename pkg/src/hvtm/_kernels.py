"""Numba kernels for clause evaluation and feedback over bit-packed literals.

Layout shared by every kernel:

* ``states``   uint8  (C, n, L)  automaton state per literal, in [1, 2N]
* ``include``  uint64 (C, n, W)  bit k set iff states[..., k] > N
* ``inc_count`` int32 (C, n)     number of included literals per clause
* ``lits``     uint64 (S, W)     packed literal vectors [x, not x]
* ``polarity`` int8   (n,)       +1 votes for the class, -1 against

Randomness comes from a splitmix64 stream whose single-word state lives in
a caller-owned ``uint64[1]`` array.
"""

import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0

_jit = numba.njit(cache=True, nogil=True)


@_jit
def next_u64(rng):
    z = rng[0] + _GOLDEN
    rng[0] = z
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@_jit
def uniform(rng):
    return (next_u64(rng) >> np.uint64(11)) * _INV53


@_jit
def randbelow(rng, n):
    # n is tiny (class count); modulo bias is below 2**-58
    return np.int64(next_u64(rng) % np.uint64(n))


@_jit
def clause_output(inc_row, inc_count, lit_row, empty_value):
    if inc_count == 0:
        return empty_value
    for w in range(inc_row.shape[0]):
        if inc_row[w] & ~lit_row[w]:
            return 0
    return 1


@_jit
def bank_outputs(include, inc_count, lit_row, empty_value, out):
    for j in range(include.shape[0]):
        out[j] = clause_output(include[j], inc_count[j], lit_row, empty_value)


@_jit
def raw_sum(outputs, polarity):
    v = 0
    for j in range(outputs.shape[0]):
        if outputs[j]:
            v += polarity[j]
    return v


@_jit
def clamp(v, T):
    if v > T:
        return T
    if v < -T:
        return -T
    return v


@_jit
def _bernoulli(rng, p):
    if p >= 1.0:
        return True
    if p <= 0.0:
        return False
    return uniform(rng) < p


@_jit
def type_i_clause(states, include, inc_count, j, lit_row, c, s, boost, N, rng):
    """Type I feedback on clause ``j`` of one bank, given its output ``c``.

    Moves toward Include are drawn w.p. (s-1)/s (1 with boost) for true
    literals of a firing clause; every other literal moves toward Exclude
    w.p. 1/s.  Draws are skipped where the move would be clipped.
    """
    L = states.shape[1]
    top = 2 * N
    p_up = 1.0 if boost else (s - 1.0) / s
    p_down = 1.0 / s
    st = states[j]
    inc = include[j]
    for k in range(L):
        w = k >> 6
        bit = np.uint64(1) << np.uint64(k & 63)
        v = st[k]
        if c == 1 and (lit_row[w] & bit) != 0:
            if v < top and _bernoulli(rng, p_up):
                st[k] = v + 1
                if v == N:
                    inc[w] |= bit
                    inc_count[j] += 1
        elif v > 1 and _bernoulli(rng, p_down):
            st[k] = v - 1
            if v == N + 1:
                inc[w] &= ~bit
                inc_count[j] -= 1


@_jit
def type_ii_clause(states, include, inc_count, j, lit_row, N):
    """Type II feedback: every excluded false literal steps toward Include."""
    L = states.shape[1]
    st = states[j]
    inc = include[j]
    for k in range(L):
        w = k >> 6
        bit = np.uint64(1) << np.uint64(k & 63)
        if (lit_row[w] & bit) == 0 and (inc[w] & bit) == 0:
            v = st[k] + 1
            st[k] = v
            if v == N + 1:
                inc[w] |= bit
                inc_count[j] += 1


@_jit
def _bank_feedback(states, include, inc_count, polarity, outputs, lit_row, target,
                   p_update, s, boost, N, rng):
    for j in range(states.shape[0]):
        if not _bernoulli(rng, p_update):
            continue
        c = outputs[j]
        if (polarity[j] > 0) == target:
            type_i_clause(states, include, inc_count, j, lit_row, c, s, boost, N, rng)
        elif c == 1:
            type_ii_clause(states, include, inc_count, j, lit_row, N)


@_jit
def fit_epoch(states, include, inc_count, polarity, lits, labels, order,
              T, s, boost, N, binary, rng):
    n_banks = states.shape[0]
    n = states.shape[1]
    outputs = np.zeros(n, dtype=np.uint8)
    twoT = 2.0 * T
    for e in order:
        lit_row = lits[e]
        y = labels[e]
        if binary:
            bank_outputs(include[0], inc_count[0], lit_row, 1, outputs)
            v = clamp(raw_sum(outputs, polarity), T)
            if y == 1:
                p = (T - v) / twoT
            else:
                p = (T + v) / twoT
            _bank_feedback(states[0], include[0], inc_count[0], polarity, outputs, lit_row,
                           y == 1, p, s, boost, N, rng)
            continue
        bank_outputs(include[y], inc_count[y], lit_row, 1, outputs)
        v = clamp(raw_sum(outputs, polarity), T)
        _bank_feedback(states[y], include[y], inc_count[y], polarity, outputs, lit_row,
                       True, (T - v) / twoT, s, boost, N, rng)
        if n_banks < 2:
            continue
        other = randbelow(rng, n_banks - 1)
        if other >= y:
            other += 1
        bank_outputs(include[other], inc_count[other], lit_row, 1, outputs)
        v = clamp(raw_sum(outputs, polarity), T)
        _bank_feedback(states[other], include[other], inc_count[other], polarity, outputs,
                       lit_row, False, (T + v) / twoT, s, boost, N, rng)


@_jit
def class_sums(include, inc_count, polarity, lits, empty_value):
    """Unclamped vote sums, shape (S, C)."""
    S = lits.shape[0]
    C = include.shape[0]
    n = include.shape[1]
    out = np.zeros((S, C), dtype=np.int32)
    for e in range(S):
        lit_row = lits[e]
        for c in range(C):
            v = 0
            for j in range(n):
                if clause_output(include[c, j], inc_count[c, j], lit_row, empty_value):
                    v += polarity[j]
            out[e, c] = v
    return out


@_jit
def clause_matrix(include, inc_count, lits, empty_value):
    """Clause outputs for every sample, shape (S, C, n)."""
    S = lits.shape[0]
    C, n = inc_count.shape
    out = np.zeros((S, C, n), dtype=np.uint8)
    for e in range(S):
        for c in range(C):
            for j in range(n):
                out[e, c, j] = clause_output(include[c, j], inc_count[c, j], lits[e], empty_value)
    return out
