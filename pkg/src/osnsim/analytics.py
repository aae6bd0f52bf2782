"""Structural metrics, behavioral distributions and the content-evaluation harness."""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .behavior import ACTION_NAMES, ActionState
from .content import JUDGE_DIMENSIONS, TextGenerator, build_judge_prompt, parse_scores
from .errors import HarnessError, ScoreParseError, ValidationError
from .kernels import brandes
from .netgen import SocialGraph
from .profilegen import AgentProfile

log = logging.getLogger(__name__)

METRIC_NAMES = ("avg_degree", "density", "mean_betweenness", "mean_closeness")
MAX_JUDGE_FAILURE_RATE = 0.2


# ---------------------------------------------------------------------------
# graph metrics
# ---------------------------------------------------------------------------

def undirected_csr(graph: SocialGraph) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Undirected projection as CSR over nodes in sorted id order."""
    nodes = sorted(graph.nodes)
    idx = {v: i for i, v in enumerate(nodes)}
    pairs = np.array(sorted((idx[a], idx[b]) for a, b in graph.undirected_edges()), np.int64).reshape(-1, 2)
    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((dst, src))
    indptr = np.zeros(len(nodes) + 1, np.int64)
    np.cumsum(np.bincount(src, minlength=len(nodes)), out=indptr[1:])
    return nodes, indptr, dst[order].astype(np.int64)


def component_labels(indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    n = len(indptr) - 1
    labels = np.full(n, -1, np.int64)
    comp = 0
    for s in range(n):
        if labels[s] >= 0:
            continue
        labels[s] = comp
        frontier = np.array([s])
        while frontier.size:
            nbrs = np.concatenate([indices[indptr[v]:indptr[v + 1]] for v in frontier])
            nbrs = np.unique(nbrs[labels[nbrs] < 0])
            labels[nbrs] = comp
            frontier = nbrs
        comp += 1
    return labels


@dataclass
class NetworkMetrics:
    n_nodes: int
    n_edges: int
    avg_degree: float
    density: float
    mean_betweenness: float
    mean_closeness: float
    lcc_fraction: float
    estimator: str
    n_pivots: int | None = None
    seed: int | None = None

    def values(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRIC_NAMES}

    def to_dict(self) -> dict:
        return asdict(self)


def centralities(indptr: np.ndarray, indices: np.ndarray, sources: np.ndarray | None = None
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalized betweenness per node plus per-source closeness and component size.

    With ``sources`` a sample drawn uniformly with replacement, dependencies are
    scaled by ``n / len(sources)`` which gives an unbiased betweenness estimate.
    Closeness of a source is ``(r - 1) / sum of distances`` inside its component
    of size ``r``.
    """
    n = len(indptr) - 1
    if sources is None:
        sources = np.arange(n, dtype=np.int64)
    bc, dist_sum, reached = brandes(indptr, indices, np.asarray(sources, np.int64))
    norm = (n - 1) * (n - 2) if n > 2 else 1
    bc = bc * (n / len(sources)) / norm
    with np.errstate(invalid="ignore", divide="ignore"):
        close = np.where(dist_sum > 0, (reached - 1) / dist_sum, 0.0)
    return bc, close, reached


def compute_metrics(graph: SocialGraph, exact_threshold: int = 2000, n_pivots: int = 500,
                    seed: int = 0) -> NetworkMetrics:
    """Degree, density, betweenness and closeness on the undirected projection.

    Graphs above ``exact_threshold`` nodes use ``n_pivots`` uniform pivots. Closeness
    is averaged over the largest connected component only.
    """
    n = len(graph)
    if n == 0:
        raise ValidationError("graph is empty")
    nodes, indptr, indices = undirected_csr(graph)
    m = len(indices) // 2
    labels = component_labels(indptr, indices)
    sizes = np.bincount(labels)
    giant = int(np.argmax(sizes))
    in_lcc = labels == giant
    if n <= exact_threshold:
        estimator, sources, pivots = "exact", np.arange(n, dtype=np.int64), None
    else:
        if n_pivots < 500:
            raise ValidationError("pivot sampling needs at least 500 pivots")
        estimator, pivots = "uniform_pivot", n_pivots
        sources = np.sort(np.random.default_rng(seed).integers(0, n, n_pivots))
    bc, close, _ = centralities(indptr, indices, sources)
    lcc_sources = in_lcc[sources]
    mean_close = float(close[lcc_sources].mean()) if lcc_sources.any() else 0.0
    if lcc_sources.sum() < len(sources) or sizes[giant] < n:
        log.info("graph has %d components; closeness uses the giant one (%.1f%% of nodes)",
                 len(sizes), 100.0 * sizes[giant] / n)
    return NetworkMetrics(
        n_nodes=n, n_edges=m, avg_degree=2.0 * m / n,
        density=m / (n * (n - 1) / 2) if n > 1 else 0.0,
        mean_betweenness=float(bc.mean()), mean_closeness=mean_close,
        lcc_fraction=float(sizes[giant] / n), estimator=estimator, n_pivots=pivots,
        seed=None if pivots is None else seed,
    )


# ---------------------------------------------------------------------------
# multi-run summaries
# ---------------------------------------------------------------------------

def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard deviation (ddof=1; 0 for a single run)."""
    arr = np.asarray(values, float)
    return float(arr.mean()), float(arr.std(ddof=1)) if len(arr) > 1 else 0.0


def format_mean_std(mean: float, std: float) -> str:
    """``"9.96 (0.21)"``; small magnitudes switch to scientific notation."""
    if mean != 0 and abs(mean) < 1e-2:
        exp = math.floor(math.log10(abs(mean)))
        return f"{mean / 10 ** exp:.2f} ({std / 10 ** exp:.2f}) e{exp}"
    digits = 3 if abs(mean) < 1 else 2
    return f"{mean:.{digits}f} ({std:.{digits}f})"


def summarize_runs(runs: dict[str, Sequence[NetworkMetrics]]) -> dict:
    """``{scale: {metric: {mean, std, display}}}`` over the runs at each scale."""
    out: dict = {}
    for scale, metrics in runs.items():
        out[scale] = {"runs": len(metrics)}
        for name in METRIC_NAMES:
            mu, sd = mean_std([getattr(r, name) for r in metrics])
            out[scale][name] = {"mean": mu, "std": sd, "display": format_mean_std(mu, sd)}
        out[scale]["estimator"] = sorted({r.estimator for r in metrics})
        out[scale]["lcc_fraction"] = min(r.lcc_fraction for r in metrics)
    return out


def write_metrics_csv(runs: dict[str, Sequence[NetworkMetrics]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scale", "run", "metric", "value"])
        for scale, metrics in runs.items():
            for i, r in enumerate(metrics):
                for name, value in r.values().items():
                    w.writerow([scale, i, name, repr(float(value))])


def read_metrics_csv(path: str | Path) -> dict[str, list[dict[str, float]]]:
    out: dict[str, dict[int, dict[str, float]]] = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["scale"]].setdefault(int(row["run"]), {})[row["metric"]] = float(row["value"])
    return {s: [runs[i] for i in sorted(runs)] for s, runs in out.items()}


def write_summary_json(runs: dict[str, Sequence[NetworkMetrics]], path: str | Path) -> dict:
    summary = summarize_runs(runs)
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    return summary


# ---------------------------------------------------------------------------
# action distributions
# ---------------------------------------------------------------------------

RED_GROUP = "red"


@dataclass
class ActionDistribution:
    proportions: dict[int, np.ndarray]
    groups: dict[int, str]
    summary: dict[str, dict[str, dict[str, float]]] = field(default_factory=dict)

    def by_group(self, group: str) -> np.ndarray:
        rows = [self.proportions[a] for a in sorted(self.proportions) if self.groups[a] == group]
        return np.vstack(rows) if rows else np.zeros((0, len(ACTION_NAMES)))

    def median(self, group: str, action: str) -> float:
        return self.summary[group][action]["median"]


def action_counts(events: Iterable) -> dict[int, np.ndarray]:
    """Per-agent executed-action counts. Seed posts are setup, not behavior, and are skipped."""
    counts: dict[int, np.ndarray] = {}
    for ev in events:
        meta = ev.meta if hasattr(ev, "meta") else ev.get("meta", {})
        if meta.get("seed"):
            continue
        aid = ev.agent_id if hasattr(ev, "agent_id") else ev["agent_id"]
        action = ActionState(ev.action if hasattr(ev, "action") else ev["action"])
        row = counts.setdefault(aid, np.zeros(len(ACTION_NAMES), np.int64))
        row[action.index] += 1
    return counts


def action_distributions(events: Iterable, population: Sequence[AgentProfile]) -> ActionDistribution:
    counts = action_counts(events)
    if not counts:
        raise ValidationError("event log is empty")
    profiles = {p.id: p for p in population}
    props = {a: c / c.sum() for a, c in counts.items()}
    groups = {a: RED_GROUP if profiles[a].is_red else profiles[a].user_type for a in props}
    dist = ActionDistribution(props, groups)
    for g in sorted(set(groups.values())):
        mat = dist.by_group(g)
        q1, med, q3 = np.percentile(mat, [25, 50, 75], axis=0)
        dist.summary[g] = {
            name: {"n_agents": int(mat.shape[0]), "min": float(mat[:, j].min()), "q1": float(q1[j]),
                   "median": float(med[j]), "q3": float(q3[j]), "max": float(mat[:, j].max()),
                   "mean": float(mat[:, j].mean())}
            for j, name in enumerate(ACTION_NAMES)
        }
    return dist


def write_action_csv(dist: ActionDistribution, path: str | Path) -> None:
    cols = ["n_agents", "min", "q1", "median", "q3", "max", "mean"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_type", "action", *cols])
        for g, per_action in dist.summary.items():
            for name in ACTION_NAMES:
                s = per_action[name]
                w.writerow([g, name, *(s[c] for c in cols)])


# ---------------------------------------------------------------------------
# content evaluation
# ---------------------------------------------------------------------------

@dataclass
class JudgeReport:
    n_sampled: int
    n_scored: int
    n_failed: int
    means: dict[str, float]
    stds: dict[str, float]
    cohorts: dict[str, dict[str, float]]
    red_minus_organic: dict[str, float] | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _cohort_stats(rows: list[tuple[int, int, int]]) -> tuple[dict, dict]:
    arr = np.asarray(rows, float).reshape(-1, 3)
    means = {d: float(arr[:, i].mean()) for i, d in enumerate(JUDGE_DIMENSIONS)}
    stds = {d: float(arr[:, i].std(ddof=1)) if len(arr) > 1 else 0.0 for i, d in enumerate(JUDGE_DIMENSIONS)}
    return means, stds


def judge_sample(events: Sequence, sample_size: int, backend: TextGenerator,
                 population: Sequence[AgentProfile], seed: int = 0) -> JudgeReport:
    """Score a uniform sample of text posts with an LLM judge, split by red and organic authors."""
    profiles = {p.id: p for p in population}
    posts = [ev for ev in events
             if ev.action in (ActionState.POST, ActionState.REPLY) and ev.text]
    if len(posts) < sample_size:
        raise HarnessError(f"need {sample_size} posts with text, log has {len(posts)}")
    rng = np.random.default_rng(seed)
    picked = [posts[i] for i in sorted(rng.choice(len(posts), size=sample_size, replace=False))]
    scored: dict[str, list] = {"organic": [], "red": []}
    failed = 0
    for ev in picked:
        author = profiles[ev.agent_id]
        try:
            s = parse_scores(backend.complete(build_judge_prompt(ev.text, author)))
        except ScoreParseError as exc:
            failed += 1
            log.warning("judge reply for event %s excluded: %s", ev.event_id, exc)
            continue
        scored["red" if author.is_red else "organic"].append(s.as_tuple())
    if sample_size and failed / sample_size > MAX_JUDGE_FAILURE_RATE:
        raise HarnessError(f"{failed}/{sample_size} judge replies unparseable (limit 20%)")
    every = scored["organic"] + scored["red"]
    means, stds = _cohort_stats(every) if every else ({}, {})
    cohorts = {}
    for name, rows in scored.items():
        if rows:
            mu, sd = _cohort_stats(rows)
            cohorts[name] = {"n": len(rows), **{f"{d}_mean": mu[d] for d in JUDGE_DIMENSIONS},
                             **{f"{d}_std": sd[d] for d in JUDGE_DIMENSIONS}}
    gap = None
    if "red" in cohorts and "organic" in cohorts:
        gap = {d: cohorts["red"][f"{d}_mean"] - cohorts["organic"][f"{d}_mean"] for d in JUDGE_DIMENSIONS}
    return JudgeReport(sample_size, len(every), failed, means, stds, cohorts, gap)


__all__ = [
    "ActionDistribution", "JudgeReport", "METRIC_NAMES", "NetworkMetrics", "action_counts",
    "action_distributions", "centralities", "component_labels", "compute_metrics", "format_mean_std",
    "judge_sample", "mean_std", "read_metrics_csv", "summarize_runs", "undirected_csr",
    "write_action_csv", "write_metrics_csv", "write_summary_json",
]
