"""Directed follow-graph generation: homophily, triadic closure, long-range links."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError
from .profilegen import AGE_BANDS, TRAIT_NAMES, AgentProfile, interest_taxonomy

AGE_SPAN = float(AGE_BANDS[-1][1] - AGE_BANDS[0][0])

# calibration anchors for scale_parameters: mean degree 9.96 at 1e3 agents, 13.30 at 1e5
BASE_DEGREE = 9.96
DEGREE_PER_DECADE = (13.30 - 9.96) / 2.0


@dataclass(frozen=True)
class SimilarityWeights:
    interests: float = 0.1
    age: float = 0.85
    traits: float = 0.05

    def normalized(self) -> tuple[float, float, float]:
        total = self.interests + self.age + self.traits
        return self.interests / total, self.age / total, self.traits / total


@dataclass
class NetGenConfig:
    homophily_weight: float = 0.99
    triadic_prob: float = 0.3
    explore_prob: float = 0.002
    target_mean_degree: float = BASE_DEGREE
    similarity_weights: SimilarityWeights = field(default_factory=SimilarityWeights)
    rng_seed: int = 0
    candidate_pool: int = 200
    reciprocation_prob: float = 0.6
    explore_reciprocation_prob: float = 0.1

    def validate(self) -> None:
        for name in ("homophily_weight", "triadic_prob", "explore_prob",
                     "reciprocation_prob", "explore_reciprocation_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}", name)
        if self.triadic_prob + self.explore_prob > 1.0 + 1e-12:
            raise ConfigError("triadic_prob + explore_prob must not exceed 1", "triadic_prob")
        if self.target_mean_degree <= 0:
            raise ConfigError("target_mean_degree must be positive", "target_mean_degree")
        w = self.similarity_weights
        if min(w.interests, w.age, w.traits) < 0 or w.interests + w.age + w.traits <= 0:
            raise ConfigError("similarity weights must be non-negative with a positive sum",
                              "similarity_weights")
        if self.candidate_pool < 1:
            raise ConfigError("candidate_pool must be >= 1", "candidate_pool")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "NetGenConfig":
        kwargs = dict(data)
        if isinstance(kwargs.get("similarity_weights"), dict):
            kwargs["similarity_weights"] = SimilarityWeights(**kwargs["similarity_weights"])
        try:
            cfg = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad graph config: {exc}") from exc
        cfg.validate()
        return cfg


class SocialGraph:
    """Directed follow graph. An edge ``(a, b)`` means *a follows b*."""

    def __init__(self, nodes: Iterable[int] = ()):
        self.following: dict[int, dict[int, None]] = {}
        self.followers: dict[int, dict[int, None]] = {}
        # insertion order of edges; needed for the "oldest edge" tie-break
        self.edge_created: dict[tuple[int, int], int] = {}
        self.interaction_counts: dict[tuple[int, int], int] = {}
        self._clock = 0
        for n in nodes:
            self.add_node(n)

    # -- structure ---------------------------------------------------------
    def add_node(self, n: int) -> None:
        self.following.setdefault(n, {})
        self.followers.setdefault(n, {})

    @property
    def nodes(self) -> list[int]:
        return list(self.following)

    def __contains__(self, n) -> bool:
        return n in self.following

    def __len__(self) -> int:
        return len(self.following)

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.following.get(a, ())

    def add_edge(self, a: int, b: int) -> bool:
        """Add ``a -> b``. Returns False for self-loops or duplicates."""
        if a == b or b in self.following[a]:
            return False
        if b not in self.following:
            raise KeyError(f"unknown agent id {b}")
        self.following[a][b] = None
        self.followers[b][a] = None
        self.edge_created[(a, b)] = self._clock
        self._clock += 1
        self.interaction_counts.setdefault((a, b), 0)
        return True

    def remove_edge(self, a: int, b: int) -> bool:
        if b not in self.following.get(a, ()):
            return False
        del self.following[a][b]
        del self.followers[b][a]
        del self.edge_created[(a, b)]
        self.interaction_counts.pop((a, b), None)
        return True

    def edges(self) -> list[tuple[int, int]]:
        return [(a, b) for a, out in self.following.items() for b in out]

    def n_edges(self) -> int:
        return len(self.edge_created)

    def neighbors(self, n: int) -> set[int]:
        return set(self.following[n]) | set(self.followers[n])

    def bump_interaction(self, a: int, b: int, amount: int = 1) -> None:
        if self.has_edge(a, b):
            self.interaction_counts[(a, b)] += amount

    def undirected_edges(self) -> set[tuple[int, int]]:
        return {(min(a, b), max(a, b)) for a, b in self.edge_created}

    def copy(self) -> "SocialGraph":
        g = SocialGraph()
        g.following = {k: dict(v) for k, v in self.following.items()}
        g.followers = {k: dict(v) for k, v in self.followers.items()}
        g.edge_created = dict(self.edge_created)
        g.interaction_counts = dict(self.interaction_counts)
        g._clock = self._clock
        return g

    def check_invariants(self) -> None:
        for a, out in self.following.items():
            assert a not in out, f"self-loop at {a}"
            for b in out:
                assert b in self.following, f"dangling endpoint {b}"
                assert a in self.followers[b]
        assert sum(len(v) for v in self.followers.values()) == self.n_edges()


# ---------------------------------------------------------------------------
# similarity kernel
# ---------------------------------------------------------------------------

def _interest_mask(profile: AgentProfile, index: dict[str, int]) -> int:
    return sum(1 << index[t] for t in set(profile.interests))


def _trait_mask(profile: AgentProfile) -> int:
    return sum(int(getattr(profile.traits, n)) << k for k, n in enumerate(TRAIT_NAMES))


def similarity(a: AgentProfile, b: AgentProfile, w: SimilarityWeights | None = None) -> float:
    """Weighted mix of interest Jaccard, age proximity and trait agreement, in [0, 1]."""
    wi, wa, wt = (w or SimilarityWeights()).normalized()
    ia, ib = set(a.interests), set(b.interests)
    union = ia | ib
    jaccard = len(ia & ib) / len(union) if union else 1.0
    age = 1.0 - min(abs(a.age - b.age), AGE_SPAN) / AGE_SPAN
    agree = sum(getattr(a.traits, n) == getattr(b.traits, n) for n in TRAIT_NAMES) / len(TRAIT_NAMES)
    return wi * jaccard + wa * age + wt * agree


class _Encoded:
    """Vectorised profile attributes for batch similarity."""

    def __init__(self, population: Sequence[AgentProfile], taxonomy: Sequence[str] | None = None):
        tax = list(taxonomy or interest_taxonomy())
        for p in population:
            for t in p.interests:
                if t not in tax:
                    tax.append(t)
        if len(tax) > 63:
            raise ConfigError("interest taxonomy too large for bitmask encoding")
        index = {t: i for i, t in enumerate(tax)}
        self.interests = np.array([_interest_mask(p, index) for p in population], np.uint64)
        self.traits = np.array([_trait_mask(p) for p in population], np.uint64)
        self.age = np.array([p.age for p in population], np.float64)
        self.influence = np.array([p.social_influence for p in population], np.float64)

    def similarity_to(self, i: int, cand: np.ndarray, w: SimilarityWeights) -> np.ndarray:
        wi, wa, wt = w.normalized()
        inter = np.bitwise_count(self.interests[i] & self.interests[cand]).astype(np.float64)
        union = np.bitwise_count(self.interests[i] | self.interests[cand]).astype(np.float64)
        jac = np.where(union > 0, inter / np.maximum(union, 1.0), 1.0)
        age = 1.0 - np.minimum(np.abs(self.age[i] - self.age[cand]), AGE_SPAN) / AGE_SPAN
        agree = 1.0 - np.bitwise_count(self.traits[i] ^ self.traits[cand]).astype(np.float64) / 5.0
        return wi * jac + wa * age + wt * agree


def homophily_weights(sim: np.ndarray, influence: np.ndarray, homophily_weight: float) -> np.ndarray:
    """Attachment weight ``sim ** (1 / (1 - h)) * (1 + influence / 100)``."""
    boost = 1.0 + influence / 100.0
    if homophily_weight >= 1.0 - 1e-12:
        best = sim >= sim.max() - 1e-15
        return np.where(best, boost, 0.0)
    with np.errstate(under="ignore"):
        return np.power(sim, 1.0 / (1.0 - homophily_weight)) * boost


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def scale_parameters(n: int, cfg: NetGenConfig) -> NetGenConfig:
    """Adapt ``cfg`` (stated for 1e3 agents) to a population of ``n``.

    Mean degree drifts logarithmically, ``d(N) = 9.96 + 1.67 * log10(N / 1e3)``.
    ``explore_prob`` shrinks as ``1e3 / N`` so the absolute number of long-range
    shortcuts stays constant and path lengths grow with the network.
    """
    if n < 2:
        raise ConfigError("scale_parameters needs N >= 2", "n_agents")
    degree = BASE_DEGREE + DEGREE_PER_DECADE * math.log10(n / 1e3)
    explore = min(cfg.explore_prob * 1e3 / n, 1.0 - cfg.triadic_prob)
    return replace(cfg, target_mean_degree=max(1.0, degree), explore_prob=explore)


def _degree_budgets(influence: np.ndarray, mean_degree: float, rng: np.random.Generator) -> np.ndarray:
    # each initiated edge contributes one undirected edge, i.e. two endpoint degrees
    weight = 1.0 + influence / 100.0
    lam = 0.5 * mean_degree * weight / weight.mean()
    return rng.poisson(lam)


def generate_graph(population: Sequence[AgentProfile], cfg: NetGenConfig | None = None) -> SocialGraph:
    """Sequential attachment over a fixed population.

    Agents are visited in a seeded random order. Each spends a Poisson budget of
    new ties; every tie is a friend-of-friend (``triadic_prob``), a uniform
    non-neighbour (``explore_prob``) or a homophily draw from a random candidate
    pool. A failed friend-of-friend draw falls back to homophily. Targets are
    never existing neighbours, so every tie adds one undirected edge.
    """
    cfg = cfg or NetGenConfig()
    cfg.validate()
    n = len(population)
    if n < 2:
        raise ConfigError("generate_graph needs at least 2 agents", "n_agents")
    ids = [p.id for p in population]
    enc = _Encoded(population)
    rng = np.random.default_rng(cfg.rng_seed)
    budgets = _degree_budgets(enc.influence, cfg.target_mean_degree, rng)
    order = rng.permutation(n)
    pool_size = min(cfg.candidate_pool, n - 1)

    out: list[set[int]] = [set() for _ in range(n)]
    inn: list[set[int]] = [set() for _ in range(n)]
    nbrs: list[set[int]] = [set() for _ in range(n)]
    nbr_list: list[list[int]] = [[] for _ in range(n)]  # insertion order, for reproducible sampling
    edges: list[tuple[int, int]] = []

    def link(a: int, b: int) -> None:
        out[a].add(b)
        inn[b].add(a)
        edges.append((a, b))
        if b not in nbrs[a]:
            nbrs[a].add(b)
            nbrs[b].add(a)
            nbr_list[a].append(b)
            nbr_list[b].append(a)

    for u in order:
        u = int(u)
        for _ in range(int(budgets[u])):
            if len(nbrs[u]) >= n - 1:
                break
            r = rng.random()
            v = -1
            kind = "homophily"
            if r < cfg.triadic_prob and nbr_list[u]:
                x = nbr_list[u][int(rng.integers(len(nbr_list[u])))]
                fof = [y for y in nbr_list[x] if y != u and y not in nbrs[u]]
                if fof:
                    v = fof[int(rng.integers(len(fof)))]
                    kind = "triadic"
            elif cfg.triadic_prob <= r < cfg.triadic_prob + cfg.explore_prob:
                while True:
                    v = int(rng.integers(n))
                    if v != u and v not in nbrs[u]:
                        break
                kind = "explore"
            if v < 0:
                cand = rng.choice(n, size=pool_size + 1, replace=False)
                cand = cand[cand != u][:pool_size]
                weights = homophily_weights(enc.similarity_to(u, cand, cfg.similarity_weights),
                                            enc.influence[cand], cfg.homophily_weight)
                taken = np.fromiter((c in nbrs[u] for c in cand), bool, len(cand))
                weights[taken] = 0.0
                total = weights.sum()
                if total <= 0.0:
                    free = cand[~taken]
                    if free.size == 0:
                        continue
                    v = int(free[int(rng.integers(free.size))])
                else:
                    v = int(cand[np.searchsorted(np.cumsum(weights), rng.random() * total, side="right")
                                 .clip(max=len(cand) - 1)])
            link(u, v)
            p_back = cfg.explore_reciprocation_prob if kind == "explore" else cfg.reciprocation_prob
            if rng.random() < p_back and u not in out[v]:
                link(v, u)

    graph = SocialGraph(ids)
    for a, b in edges:
        graph.add_edge(ids[a], ids[b])
    return graph


# ---------------------------------------------------------------------------
# edge-list I/O
# ---------------------------------------------------------------------------

def write_edges(graph: SocialGraph, path: str | Path, header: dict | None = None) -> None:
    """``#`` + JSON header line, then ``follower<TAB>followee`` per edge in creation order."""
    meta = dict(header or {})
    meta.setdefault("nodes", graph.nodes)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        for a, b in sorted(graph.edge_created, key=graph.edge_created.__getitem__):
            fh.write(f"{a}\t{b}\n")


def read_edges(path: str | Path) -> tuple[SocialGraph, dict]:
    header: dict = {}
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                header = json.loads(line[1:].strip())
                continue
            if line.strip():
                a, b = line.rstrip("\n").split("\t")
                pairs.append((int(a), int(b)))
    nodes = header.get("nodes") or sorted({x for e in pairs for x in e})
    graph = SocialGraph(int(n) for n in nodes)
    for a, b in pairs:
        graph.add_edge(a, b)
    return graph, header
