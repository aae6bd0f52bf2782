"""Acceptance suite: one PASS/FAIL line per criterion, printed at the end of the session.

Run alone with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""
import hashlib
import io
import time
from collections import Counter

import networkx as nx
import numpy as np
import pytest

from osnsim.analytics import action_distributions, compute_metrics, judge_sample
from osnsim.behavior import ActionState, BehaviorConfig, cumulative, default_matrices, stationary_distribution
from osnsim.content import FixedGenerator
from osnsim.engine import SimConfig, Simulation, run_simulation
from osnsim.kernels import sample_chain, transition_counts
from osnsim.netgen import NetGenConfig, SocialGraph, generate_graph, scale_parameters
from osnsim.profilegen import PopulationConfig, generate_population
from osnsim.red import Campaign, CampaignSpec, campaign_report, matches

from test_memory import VecEmbedder, brute_force_top_k, random_store

RESULTS: list[str] = []


def record(label, ok, detail):
    RESULTS.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    return ok


def build(n, seed):
    pop = generate_population(PopulationConfig(n_agents=n, rng_seed=seed, with_backstory=False))
    return pop, generate_graph(pop, scale_parameters(n, NetGenConfig(rng_seed=seed)))


@pytest.fixture(scope="module")
def desk_runs():
    runs = []
    for seed in range(3):
        t0 = time.perf_counter()
        _, graph = build(1000, seed)
        m = compute_metrics(graph)
        runs.append((m, time.perf_counter() - t0))
    return runs


# 1 -------------------------------------------------------------------------

def _mean(runs, name):
    return float(np.mean([getattr(m, name) for m, _ in runs]))


def test_c1_structure_degree_density_closeness(desk_runs):
    deg, dens, clo = (_mean(desk_runs, k) for k in ("avg_degree", "density", "mean_closeness"))
    slowest = max(t for _, t in desk_runs)
    ok = (abs(deg - 9.96) <= 1.5 and abs(dens - 1.0e-2) <= 0.4e-2 and abs(clo - 0.194) <= 0.04
          and slowest < 300)
    record("1a structure N=1e3 (degree, density, closeness, runtime)", ok,
           f"degree {deg:.2f} (9.96+-1.5), density {dens:.4f} (0.010+-0.004), "
           f"closeness {clo:.3f} (0.194+-0.04), slowest run {slowest:.1f}s (<300s)")
    assert ok


@pytest.mark.xfail(strict=True, reason="betweenness 0.013 is inconsistent with closeness 0.194 on a "
                                       "connected 1e3-node graph; see README")
def test_c1_structure_betweenness(desk_runs):
    bc = _mean(desk_runs, "mean_betweenness")
    clo = _mean(desk_runs, "mean_closeness")
    # on a connected graph mean normalized betweenness is (mean distance - 1) / (n - 2)
    implied = (1 / clo - 1) / (1000 - 2)
    ok = abs(bc - 0.013) <= 0.007
    record("1b structure N=1e3 (betweenness)", ok,
           f"betweenness {bc:.4f} (0.013+-0.007); closeness {clo:.3f} implies {implied:.4f}")
    assert ok


# 2 -------------------------------------------------------------------------

def test_c2_scale_trends(desk_runs):
    small = desk_runs[0][0]
    t0 = time.perf_counter()
    _, graph = build(10_000, 0)
    big = compute_metrics(graph, seed=0)
    elapsed = time.perf_counter() - t0
    ratio = small.density / big.density
    ok = (ratio >= 5 and big.avg_degree > small.avg_degree
          and big.mean_betweenness < small.mean_betweenness and big.mean_closeness < small.mean_closeness)
    record("2 scale trends 1e3 -> 1e4", ok,
           f"density /{ratio:.1f} (>=5), degree {small.avg_degree:.2f}->{big.avg_degree:.2f}, "
           f"betweenness {small.mean_betweenness:.2e}->{big.mean_betweenness:.2e}, "
           f"closeness {small.mean_closeness:.3f}->{big.mean_closeness:.3f} ({elapsed:.1f}s at 1e4)")
    assert ok


# 3 -------------------------------------------------------------------------

@pytest.mark.slow
def test_c3_behavioral_fidelity():
    pop, graph = build(1000, 0)
    t0 = time.perf_counter()
    res = run_simulation(pop, graph, SimConfig(actions_per_agent=500, n_ticks=None, rng_seed=0),
                         BehaviorConfig(sigma=0.5, lam=0.6))
    elapsed = time.perf_counter() - t0
    dist = action_distributions(res.events, res.population)
    types = sorted(set(dist.groups.values()))
    read = {t: dist.median(t, "read") for t in types}
    post = {t: dist.median(t, "post") for t in types}
    churn = {}
    fi, ui = ActionState.FOLLOW.index, ActionState.UNFOLLOW.index
    for t in types:
        rows = dist.by_group(t)
        churn[t] = float(np.mean(rows[:, fi] + rows[:, ui]))
    a = all(read["lurker"] > v for t, v in read.items() if t != "lurker")
    b = all(post["advanced"] > v for t, v in post.items() if t != "advanced")
    c = all(v < 0.05 for v in churn.values())
    ok = a and b and c and elapsed < 600
    record("3 behavior 1e3 agents x 500 actions", ok,
           f"(a) lurker read median {read['lurker']:.3f} vs max other "
           f"{max(v for t, v in read.items() if t != 'lurker'):.3f}; (b) advanced post median "
           f"{post['advanced']:.3f} vs max other {max(v for t, v in post.items() if t != 'advanced'):.3f}; "
           f"(c) max follow+unfollow {max(churn.values()):.4f} (<0.05); {elapsed:.0f}s (<600s)")
    assert ok


# 4 -------------------------------------------------------------------------

def _chain_rows(seed):
    rng = np.random.default_rng(seed)
    worst_row, worst_stat = 0.0, 0.0
    for name, m in sorted(default_matrices().items()):
        states = sample_chain(cumulative(m), 0, rng.random(1_000_000))
        counts = transition_counts(states, 0, m.shape[0]).astype(float)
        emp = counts / counts.sum(axis=1, keepdims=True)
        worst_row = max(worst_row, float(np.abs(emp - m).sum(axis=1).max()))
        freq = np.bincount(states, minlength=m.shape[0]) / len(states)
        worst_stat = max(worst_stat, float(np.abs(freq - stationary_distribution(m)).sum()))
    return worst_row, worst_stat


@pytest.mark.xfail(strict=True, reason="rarely visited rows (follow/unfollow) get ~1e4 visits in a 1e6-step "
                                       "chain; their expected sampling L1 is already about 0.02; see README")
def test_c4a_markov_rows_single_chain():
    worst_row, _ = _chain_rows(4)
    ok = worst_row <= 0.02
    record("4a Markov rows, one 1e6-step chain per matrix", ok, f"worst row L1 {worst_row:.4f} (<=0.02)")
    assert ok


def test_c4b_markov_stationary_and_sampler():
    _, worst_stat = _chain_rows(4)
    rng = np.random.default_rng(44)
    worst_row = 0.0
    for name, m in sorted(default_matrices().items()):
        cum = cumulative(m)
        for i in range(m.shape[0]):
            # every row replaced by row i, so all 1e6 transitions are drawn from it
            nxt = sample_chain(np.tile(cum[i], (m.shape[0], 1)), i, rng.random(1_000_000))
            emp = np.bincount(nxt, minlength=m.shape[0]) / 1_000_000
            worst_row = max(worst_row, float(np.abs(emp - m[i]).sum()))
    ok = worst_stat <= 0.01 and worst_row <= 0.02
    record("4b Markov stationary + per-row sampler", ok,
           f"worst stationary L1 {worst_stat:.4f} (<=0.01), worst row L1 with 1e6 draws per row "
           f"{worst_row:.4f} (<=0.02)")
    assert ok


# 5 -------------------------------------------------------------------------

def test_c5_memory_oracle(small_population, small_graph):
    rng = np.random.default_rng(5)
    agree = 0
    for _ in range(1000):
        store, pool = random_store(rng)
        q = pool[int(rng.integers(len(pool)))] if rng.random() < 0.5 else rng.normal(size=pool.shape[1])
        got = [it.id for it in store.retrieve("q", 5, VecEmbedder({"q": q}))]
        agree += got == brute_force_top_k(store.ltm, q, 5)
    res = run_simulation(small_population, small_graph, SimConfig(actions_per_agent=60, n_ticks=None))
    violations = res.manifest["counts"]["stm_violations"]
    ok = agree == 1000 and violations == 0
    record("5 memory retrieval oracle", ok, f"{agree}/1000 stores agree, STM violations {violations}")
    assert ok


# 6 / 7 ---------------------------------------------------------------------

TARGETS = {"all": [{"field": "age", "op": "between", "value": [25, 54]},
                   {"field": "interests", "op": "contains", "value": "Politics"}]}


def campaign_spec(n_red=3):
    return CampaignSpec.from_dict({
        "workflow": "narrative_amplification", "objective": "divide", "target_filter": TARGETS,
        "narratives": [{"narrative_id": "n1", "title": "Rules for the few",
                        "framing": "The new AI rules were written by industry lobbyists."}],
        "n_red_agents": n_red, "strategy": {"post_rate": 2, "mutual_boost": True},
        "schedule": {"start": 1, "end": 11}})


@pytest.fixture(scope="module")
def campaign_world():
    return build(300, 6)


def run_hash(pop, graph, red, ticks=12):
    buf = io.StringIO()
    res = Simulation(pop, graph, SimConfig(n_ticks=ticks, actions_per_agent=None, rng_seed=6), red=red,
                     event_sink=buf).run()
    return hashlib.sha256(buf.getvalue().encode()).hexdigest(), res


def test_c6_deterministic_replay(campaign_world):
    pop, graph = campaign_world
    plain = run_hash(pop, graph, None)[0] == run_hash(pop, graph, None)[0]
    red = run_hash(pop, graph, Campaign(campaign_spec()))[0] == run_hash(pop, graph, Campaign(campaign_spec()))[0]
    ok = plain and red
    record("6 deterministic replay", ok, f"plain run hashes equal: {plain}; with campaign: {red}")
    assert ok


def test_c7_red_campaign(campaign_world):
    pop, graph = campaign_world
    camp = Campaign(campaign_spec())
    _, res = run_hash(pop, graph, camp)
    reds = sorted(camp.agents)
    red_events = [e for e in res.events if e.agent_id in camp.agents]
    posts = sum(1 for e in red_events if e.action is ActionState.POST)
    boosts = Counter((e.tick, e.agent_id, e.target_agent) for e in red_events
                     if e.meta.get("script") == "mutual_boost")
    missing = [(t, a, b) for t in range(1, 11) for a in reds for b in reds if a != b and not boosts[(t, a, b)]]
    oracle = [p.id for p in pop if 25 <= p.age <= 54 and any(i.lower() == "politics" for i in p.interests)]
    traced = sum(1 for e in red_events if e.meta.get("narrative_id") == "n1")
    report = campaign_report(camp, res.events)
    base = run_hash(pop, graph, None)[0]
    silent = run_hash(pop, graph, Campaign(campaign_spec(n_red=0)))[0]
    ok = (posts == 60 and not missing and camp.targets == oracle and traced == len(red_events)
          and report["untraceable_red_events"] == 0 and silent == base)
    record("7 red campaign", ok,
           f"{posts} red posts (==60), {len(missing)} missing pair-round boosts (==0), targets "
           f"{'==' if camp.targets == oracle else '!='} oracle ({len(oracle)}), {traced}/{len(red_events)} "
           f"traceable, n_red=0 hash {'equal' if silent == base else 'differs'}")
    assert ok


# 8 -------------------------------------------------------------------------

def test_c8_judge_roundtrip(campaign_world):
    pop, graph = campaign_world
    camp = Campaign(campaign_spec())
    _, res = run_hash(pop, graph, camp)
    rep = judge_sample(res.events, 200, FixedGenerator("naturalness=4; consistency=5; engagingness=3"),
                       res.population, seed=8)
    expect = {"naturalness": 4.0, "consistency": 5.0, "engagingness": 3.0}
    cohorts_ok = set(rep.cohorts) == {"organic", "red"} and all(
        c[f"{d}_mean"] == v and c[f"{d}_std"] == 0.0 for c in rep.cohorts.values() for d, v in expect.items())
    ok = rep.means == expect and rep.n_failed == 0 and rep.n_scored == 200 and cohorts_ok
    record("8 judge pipeline round-trip", ok,
           f"means {rep.means}, failed {rep.n_failed}, cohorts exact: {cohorts_ok}")
    assert ok


# 9 -------------------------------------------------------------------------

def random_graph(rng):
    n = int(rng.integers(30, 201))
    kind = rng.integers(3)
    s = int(rng.integers(1 << 30))
    if kind == 0:
        G = nx.gnp_random_graph(n, float(rng.uniform(4, 10)) / n, seed=s)
    elif kind == 1:
        G = nx.connected_watts_strogatz_graph(n, 2 * int(rng.integers(2, 5)), float(rng.uniform(0.05, 0.3)), seed=s)
    else:
        G = nx.barabasi_albert_graph(n, int(rng.integers(2, 5)), seed=s)
    g = SocialGraph(range(n))
    for a, b in G.edges():
        g.add_edge(a, b)
    return g


def test_c9_sampled_vs_exact():
    rng = np.random.default_rng(9)
    worst = 0.0
    for i in range(100):
        g = random_graph(rng)
        exact = compute_metrics(g)
        est = compute_metrics(g, exact_threshold=0, n_pivots=500, seed=i)
        for name in ("mean_betweenness", "mean_closeness"):
            worst = max(worst, abs(getattr(est, name) / getattr(exact, name) - 1))
    ok = worst <= 0.05
    record("9 sampled vs exact centrality, 100 graphs", ok, f"worst relative error {worst:.4f} (<=0.05)")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
