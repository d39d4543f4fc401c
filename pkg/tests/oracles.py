"""Independent reference implementations used as test oracles.

These are written for clarity, not speed, and share no code with the package
beyond the simulated cost model itself.
"""
import itertools
import math

import numpy as np


def brute_force_synergy(model, prog, universe):
    """Evaluate every single pass and every ordered pair, then filter."""
    def count(seq):
        return model.count(model.apply(prog, seq))

    v_p = count(())
    v1 = {b: count((b,)) for b in universe}
    v2 = {(a, b): count((a, b)) for a in universe for b in universe}
    return {(a, b) for (a, b), v in v2.items() if v1[b] < v_p and v < v1[b]}


def exhaustive_kmeans(x, k):
    """Global optimum of the within-cluster squared distance over all partitions into k nonempty parts."""
    n = len(x)
    best = math.inf
    for labels in itertools.product(range(k), repeat=n):
        if labels[0] != 0 or len(set(labels)) != k:
            continue  # fix the first label to skip relabelings
        total = 0.0
        for j in range(k):
            pts = [x[i] for i in range(n) if labels[i] == j]
            mu = [sum(col) / len(pts) for col in zip(*pts)]
            total += sum(sum((a - b) ** 2 for a, b in zip(p, mu)) for p in pts)
        best = min(best, total)
    return best


def _dist(a, b):
    return math.sqrt(sum((p - q) ** 2 for p, q in zip(a, b)))


def loop_silhouette(x, labels):
    n = len(x)
    total = 0.0
    for i in range(n):
        same = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not same:
            continue  # singleton contributes 0
        a = sum(_dist(x[i], x[j]) for j in same) / len(same)
        b = math.inf
        for c in set(labels):
            if c == labels[i]:
                continue
            other = [j for j in range(n) if labels[j] == c]
            b = min(b, sum(_dist(x[i], x[j]) for j in other) / len(other))
        total += (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return total / n


def loop_dbi(x, labels):
    ks = sorted(set(labels))
    cents, spread = {}, {}
    for c in ks:
        pts = [x[i] for i in range(len(x)) if labels[i] == c]
        cents[c] = [sum(col) / len(pts) for col in zip(*pts)]
        spread[c] = sum(_dist(p, cents[c]) for p in pts) / len(pts)
    total = 0.0
    for c in ks:
        total += max((spread[c] + spread[d]) / _dist(cents[c], cents[d]) for d in ks if d != c)
    return total / len(ks)


def scalar_contrastive_loss(z, pos, tau):
    """Per-sample losses from the similarity matrix, one scalar at a time."""
    m = len(z)
    s = [[math.exp(-sum((a - b) ** 2 for a, b in zip(z[i], z[j])) / tau) for j in range(m)]
         for i in range(m)]
    losses = []
    for a in range(m):
        denom = sum(math.exp(s[a][k]) for k in range(m) if k != a)
        losses.append(-math.log(math.exp(s[a][pos[a]]) / denom))
    return sum(losses) / m, losses


def central_diff(f, arr, eps=1e-6):
    """Central finite-difference gradient of scalar ``f()`` w.r.t. ``arr`` (mutated in place, then restored)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + eps
        hi = f()
        arr[i] = old - eps
        lo = f()
        arr[i] = old
        g[i] = (hi - lo) / (2 * eps)
    return g


def exhaustive_best(count, passes, max_len):
    """Lowest count over all sequences of length <= max_len (including the empty one)."""
    best = (count(()), ())
    for L in range(1, max_len + 1):
        for seq in itertools.product(passes, repeat=L):
            best = min(best, (count(seq), seq), key=lambda t: (t[0], len(t[1]), t[1]))
    return best
