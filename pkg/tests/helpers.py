"""Shared test oracles.

Every oracle here is deliberately naive: direct definition evaluation,
full sorts, triple loops, central differences.  None of them share code
with the library under test.
"""

import cmath
import math
from dataclasses import replace

import numpy as np

from vardrop.model import ModelParams, forward


def dft_amps_loop(signal):
    """O(T^2) DFT magnitudes for bins 1..floor(T/2), pure Python loops."""
    values = [float(v) for v in signal]
    length = len(values)
    amps = []
    for freq in range(1, length // 2 + 1):
        acc = 0j
        for t, value in enumerate(values):
            acc += value * cmath.exp(-2j * math.pi * freq * t / length)
        amps.append(abs(acc))
    return np.array(amps)


def dft_amps_matrix(signal):
    """O(T^2) DFT magnitudes via an explicit exponential matrix (no FFT)."""
    signal = np.asarray(signal, dtype=float)
    length = signal.shape[0]
    freqs = np.arange(1, length // 2 + 1)
    grid = np.exp(-2j * np.pi * np.outer(freqs, np.arange(length)) / length)
    return np.abs(grid @ signal)


def topk_bins_sorted(amps, k):
    """Top-k bins by full sort: descending amplitude, ties to the lower bin."""
    order = sorted(range(len(amps)), key=lambda i: (-amps[i], i))
    return tuple(i + 1 for i in order[:k])


def oracle_hash_keys(batch_tensor, k, epsilon):
    """Recompute hash keys per variate from scratch (loops + full sort)."""
    tensor = np.asarray(batch_tensor, dtype=float)
    n_inst, n_var, _ = tensor.shape
    keys = []
    for v in range(n_var):
        acc = np.zeros(epsilon)
        for j in range(n_inst):
            acc = acc + dft_amps_matrix(tensor[j, v])[:epsilon]
        keys.append(topk_bins_sorted(acc / n_inst, k))
    return keys


def matmul_loops(a, b):
    """Triple-loop matrix multiply."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    rows, inner = a.shape
    inner2, cols = b.shape
    assert inner == inner2
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            total = 0.0
            for k in range(inner):
                total += a[i, k] * b[k, j]
            out[i, j] = total
    return out


def sine_mixture(rng, length, n_components, amp_lo=0.5, amp_hi=4.0, min_gap=0.15):
    """Random integer-bin sinusoid sum with pairwise-distinct amplitudes.

    Returns (signal, bins, amps).  Bins stay below the Nyquist bin and the
    amplitude gaps keep the dominance ordering unambiguous.
    """
    max_bin = length // 2 - 1 if length % 2 == 0 else length // 2
    bins = rng.choice(np.arange(1, max_bin + 1), size=n_components, replace=False)
    while True:
        amps = rng.uniform(amp_lo, amp_hi, size=n_components)
        gaps = np.diff(np.sort(amps))
        if gaps.size == 0 or gaps.min() >= min_gap:
            break
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_components)
    t = np.arange(length)
    signal = np.zeros(length)
    for b, a, p in zip(bins, amps, phases):
        signal += a * np.sin(2.0 * np.pi * b * t / length + p)
    return signal, bins, amps


PARAM_FIELDS = (
    "w_embed", "b_embed", "w_query", "w_key", "w_value",
    "w_out", "w_head", "b_head",
)


def numeric_gradients(window, params, retained, step=1e-5):
    """Central-difference gradients of the forward loss w.r.t. every array."""
    out = {}
    for name in PARAM_FIELDS:
        base = getattr(params, name)
        grad = np.zeros_like(base)
        flat = base.ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            bumped = base.copy()
            bumped.ravel()[idx] = orig + step
            hi = forward(window, replace(params, **{name: bumped}), retained).loss
            bumped.ravel()[idx] = orig - step
            lo = forward(window, replace(params, **{name: bumped}), retained).loss
            grad.ravel()[idx] = (hi - lo) / (2.0 * step)
        out[name] = grad
    return out


def max_rel_error(analytic, numeric):
    """max |a - n| / max(|a| + |n|, 1e-6) over paired gradient arrays."""
    worst = 0.0
    for name, num in numeric.items():
        ana = analytic[name]
        denom = np.maximum(np.abs(ana) + np.abs(num), 1e-6)
        worst = max(worst, float(np.max(np.abs(ana - num) / denom)))
    return worst


def adjusted_rand_index(labels_a, labels_b):
    """ARI from the contingency table, math.comb throughout."""
    labels_a = list(labels_a)
    labels_b = list(labels_b)
    assert len(labels_a) == len(labels_b)
    n = len(labels_a)
    table = {}
    for a, b in zip(labels_a, labels_b):
        table[(a, b)] = table.get((a, b), 0) + 1
    rows = {}
    cols = {}
    for (a, b), cnt in table.items():
        rows[a] = rows.get(a, 0) + cnt
        cols[b] = cols.get(b, 0) + cnt
    sum_cells = sum(math.comb(c, 2) for c in table.values())
    sum_rows = sum(math.comb(c, 2) for c in rows.values())
    sum_cols = sum(math.comb(c, 2) for c in cols.values())
    total = math.comb(n, 2)
    expected = sum_rows * sum_cols / total if total else 0.0
    maximum = 0.5 * (sum_rows + sum_cols)
    if maximum == expected:
        return 1.0
    return (sum_cells - expected) / (maximum - expected)


def pearson_pair(x, y):
    """Textbook two-pass Pearson correlation of two sequences."""
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    if vx == 0.0 or vy == 0.0:
        return 0.0
    return cov / math.sqrt(vx * vy)
