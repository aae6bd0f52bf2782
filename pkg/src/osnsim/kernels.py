"""Hot numeric kernels.

Each kernel has a numba implementation (``*_nb``) and an independent pure-numpy
implementation (``*_np``). The public dispatchers pick one according to
:data:`osnsim._accel.USE_NUMBA`. Both paths consume the same pre-drawn random
numbers, so they produce identical results.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# Brandes single-source accumulation (unweighted, undirected CSR)
# ---------------------------------------------------------------------------


@njit(cache=True)
def brandes_nb(indptr, indices, sources):
    """Accumulate dependencies from each source.

    Returns ``(bc, dist_sum, reached)``: ``bc[v]`` is the summed dependency of v
    over all sources (ordered-pair count), ``dist_sum[k]``/``reached[k]`` are the
    total BFS distance and number of reached nodes (including itself) for
    ``sources[k]``.
    """
    n = indptr.shape[0] - 1
    bc = np.zeros(n, np.float64)
    dist_sum = np.zeros(sources.shape[0], np.float64)
    reached = np.zeros(sources.shape[0], np.int64)
    dist = np.full(n, -1, np.int64)
    sigma = np.zeros(n, np.float64)
    delta = np.zeros(n, np.float64)
    queue = np.empty(n, np.int64)
    for k in range(sources.shape[0]):
        s = sources[k]
        dist[s] = 0
        sigma[s] = 1.0
        queue[0] = s
        head = 0
        tail = 1
        total = 0
        while head < tail:
            v = queue[head]
            head += 1
            dv = dist[v]
            total += dv
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    queue[tail] = w
                    tail += 1
                if dist[w] == dv + 1:
                    sigma[w] += sigma[v]
        dist_sum[k] = total
        reached[k] = tail
        for i in range(tail - 1, 0, -1):
            w = queue[i]
            coeff = (1.0 + delta[w]) / sigma[w]
            dw = dist[w]
            for p in range(indptr[w], indptr[w + 1]):
                v = indices[p]
                if dist[v] == dw - 1:
                    delta[v] += sigma[v] * coeff
            bc[w] += delta[w]
        for i in range(tail):
            w = queue[i]
            dist[w] = -1
            sigma[w] = 0.0
            delta[w] = 0.0
    return bc, dist_sum, reached


def _expand(indptr, indices, frontier):
    """Neighbour lists of ``frontier`` flattened: (source-of-edge, neighbour)."""
    starts = indptr[frontier]
    counts = indptr[frontier + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    offsets = np.repeat(starts - np.cumsum(counts) + counts, counts)
    pos = offsets + np.arange(total)
    return np.repeat(frontier, counts), indices[pos]


def brandes_np(indptr, indices, sources):
    """Level-synchronous numpy version of :func:`brandes_nb`."""
    indptr = np.asarray(indptr, np.int64)
    indices = np.asarray(indices, np.int64)
    sources = np.asarray(sources, np.int64)
    n = indptr.shape[0] - 1
    bc = np.zeros(n)
    dist_sum = np.zeros(sources.shape[0])
    reached = np.zeros(sources.shape[0], np.int64)
    for k, s in enumerate(sources):
        dist = np.full(n, -1, np.int64)
        sigma = np.zeros(n)
        dist[s] = 0
        sigma[s] = 1.0
        frontier = np.array([s], np.int64)
        levels = []  # per level: (parents, children) tree edges into the next level
        level = 0
        while frontier.size:
            src, nbr = _expand(indptr, indices, frontier)
            fresh = np.unique(nbr[dist[nbr] < 0])
            dist[fresh] = level + 1
            mask = dist[nbr] == level + 1
            src, nbr = src[mask], nbr[mask]
            np.add.at(sigma, nbr, sigma[src])
            levels.append((src, nbr))
            frontier = fresh
            level += 1
        seen = dist >= 0
        dist_sum[k] = dist[seen].sum()
        reached[k] = int(seen.sum())
        delta = np.zeros(n)
        for src, nbr in reversed(levels):
            if src.size:
                np.add.at(delta, src, sigma[src] / sigma[nbr] * (1.0 + delta[nbr]))
        delta[s] = 0.0
        bc += delta
    return bc, dist_sum, reached


def brandes(indptr, indices, sources):
    if USE_NUMBA:
        return brandes_nb(np.asarray(indptr, np.int64), np.asarray(indices, np.int64),
                          np.asarray(sources, np.int64))
    return brandes_np(indptr, indices, sources)


# ---------------------------------------------------------------------------
# Markov chain sampling
# ---------------------------------------------------------------------------


@njit(cache=True)
def sample_chain_nb(cum, start, uniforms):
    """States visited after ``start`` given row-wise cumulative probabilities."""
    m = cum.shape[1]
    out = np.empty(uniforms.shape[0], np.int64)
    s = start
    for t in range(uniforms.shape[0]):
        u = uniforms[t]
        j = 0
        while j < m - 1 and u >= cum[s, j]:
            j += 1
        s = j
        out[t] = s
    return out


def sample_chain_np(cum, start, uniforms):
    cum = np.asarray(cum, np.float64)
    m = cum.shape[1]
    out = np.empty(len(uniforms), np.int64)
    s = int(start)
    rows = [cum[i] for i in range(m)]
    for t, u in enumerate(uniforms):
        s = min(int(np.searchsorted(rows[s], u, side="right")), m - 1)
        out[t] = s
    return out


def sample_chain(cum, start, uniforms):
    if USE_NUMBA:
        return sample_chain_nb(np.ascontiguousarray(cum, np.float64), int(start),
                               np.ascontiguousarray(uniforms, np.float64))
    return sample_chain_np(cum, start, uniforms)


def transition_counts(states, start, m):
    """m x m matrix of observed transitions in ``start, states[0], states[1], ...``."""
    seq = np.concatenate(([start], np.asarray(states, np.int64)))
    counts = np.zeros((m, m), np.int64)
    np.add.at(counts, (seq[:-1], seq[1:]), 1)
    return counts
