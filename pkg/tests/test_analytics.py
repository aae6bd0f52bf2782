import csv
import json

import networkx as nx
import numpy as np
import pytest

from osnsim import kernels
from osnsim.analytics import (action_distributions, centralities, compute_metrics, format_mean_std,
                              judge_sample, mean_std, read_metrics_csv, summarize_runs, undirected_csr,
                              write_action_csv, write_metrics_csv, write_summary_json)
from osnsim.behavior import ActionState
from osnsim.content import FixedGenerator
from osnsim.engine import SimEvent
from osnsim.errors import HarnessError, ValidationError
from osnsim.netgen import SocialGraph
from osnsim.profilegen import AgentProfile, Traits

from conftest import graph_from_edges


def nx_to_social(G, directed_flip_seed=0):
    rng = np.random.default_rng(directed_flip_seed)
    g = SocialGraph(G.nodes)
    for a, b in G.edges():
        if rng.random() < 0.5:
            g.add_edge(a, b)
        else:
            g.add_edge(b, a)
    return g


def test_complete_graph():
    m = compute_metrics(nx_to_social(nx.complete_graph(5)))
    assert m.density == 1.0 and m.avg_degree == 4.0 and m.mean_betweenness == 0.0
    assert m.mean_closeness == 1.0


def test_path_graph():
    m = compute_metrics(graph_from_edges(4, [(0, 1), (2, 1), (2, 3)]))
    assert m.mean_betweenness == pytest.approx(1 / 3)
    assert m.n_edges == 3 and m.density == pytest.approx(0.5)


def test_reciprocal_edges_count_once():
    m = compute_metrics(graph_from_edges(3, [(0, 1), (1, 0), (1, 2)]))
    assert m.n_edges == 2 and m.avg_degree == pytest.approx(4 / 3)


def test_disconnected_closeness_on_giant_component():
    G = nx.disjoint_union(nx.path_graph(5), nx.path_graph(2))
    m = compute_metrics(nx_to_social(G))
    lcc = G.subgraph(max(nx.connected_components(G), key=len))
    assert m.lcc_fraction == pytest.approx(5 / 7)
    assert m.mean_closeness == pytest.approx(np.mean(list(nx.closeness_centrality(lcc).values())))
    assert m.mean_betweenness == pytest.approx(np.mean(list(nx.betweenness_centrality(G).values())))


@pytest.mark.parametrize("seed", range(8))
def test_exact_matches_networkx(seed):
    G = nx.gnp_random_graph(60, 0.06, seed=seed)
    m = compute_metrics(nx_to_social(G, seed))
    assert m.mean_betweenness == pytest.approx(np.mean(list(nx.betweenness_centrality(G).values())), abs=1e-12)
    lcc = G.subgraph(max(nx.connected_components(G), key=len))
    assert m.mean_closeness == pytest.approx(np.mean(list(nx.closeness_centrality(lcc).values())), abs=1e-12)
    assert m.density == pytest.approx(nx.density(G))


def test_sampling_within_five_percent():
    G = nx.connected_watts_strogatz_graph(200, 6, 0.1, seed=1)
    g = nx_to_social(G)
    exact = compute_metrics(g)
    est = compute_metrics(g, exact_threshold=0, n_pivots=500, seed=3)
    assert est.estimator == "uniform_pivot" and est.n_pivots == 500
    assert est.mean_betweenness == pytest.approx(exact.mean_betweenness, rel=0.05)
    assert est.mean_closeness == pytest.approx(exact.mean_closeness, rel=0.05)
    with pytest.raises(ValidationError):
        compute_metrics(g, exact_threshold=0, n_pivots=100)


def test_metrics_bit_stable(small_graph):
    a = compute_metrics(small_graph, exact_threshold=0, seed=5)
    b = compute_metrics(small_graph, exact_threshold=0, seed=5)
    assert a == b


def test_brandes_kernels_agree(small_graph):
    _, indptr, indices = undirected_csr(small_graph)
    src = np.arange(len(indptr) - 1, dtype=np.int64)
    bc1, d1, r1 = kernels.brandes_nb(indptr, indices, src)
    bc2, d2, r2 = kernels.brandes_np(indptr, indices, src)
    np.testing.assert_allclose(bc1, bc2, rtol=1e-12, atol=1e-12)
    assert np.array_equal(d1, d2) and np.array_equal(r1, r2)


def test_empty_graph_rejected():
    with pytest.raises(ValidationError):
        compute_metrics(SocialGraph())


def test_summary_mean_std_and_csv(tmp_path):
    runs = {"1000": [compute_metrics(nx_to_social(nx.gnp_random_graph(40, 0.2, seed=s))) for s in range(3)]}
    summary = write_summary_json(runs, tmp_path / "s.json")
    degs = [r.avg_degree for r in runs["1000"]]
    assert summary["1000"]["avg_degree"]["mean"] == pytest.approx(np.mean(degs))
    assert summary["1000"]["avg_degree"]["std"] == pytest.approx(np.std(degs, ddof=1))
    assert summary["1000"]["avg_degree"]["display"] == format_mean_std(np.mean(degs), np.std(degs, ddof=1))
    write_metrics_csv(runs, tmp_path / "m.csv")
    rows = list(csv.DictReader(open(tmp_path / "m.csv")))
    assert set(rows[0]) == {"scale", "run", "metric", "value"} and len(rows) == 12
    back = read_metrics_csv(tmp_path / "m.csv")
    assert back["1000"][1]["density"] == runs["1000"][1].density


def test_format_mean_std():
    assert format_mean_std(9.96, 0.21) == "9.96 (0.21)"
    assert format_mean_std(0.194, 0.004) == "0.194 (0.004)"
    assert format_mean_std(0.0044, 0.0002) == "4.40 (0.20) e-3"
    assert mean_std([1.0]) == (1.0, 0.0)


def _profile(i, utype="lurker", red=False):
    return AgentProfile(i, f"U{i}", "male", 30, "Teacher", ("Science",), Traits(), 10.0, 10.0, utype,
                        is_red=red)


def _ev(i, agent, action, text=None, **meta):
    return SimEvent(i, 1, agent, ActionState(action), text=text, content_ref=i, meta=meta)


def test_action_distribution_examples():
    d = action_distributions([_ev(i, 0, "read") for i in range(10)], [_profile(0)])
    assert d.proportions[0][ActionState.READ.index] == 1.0
    evs = [_ev(i, 1, "post") for i in range(3)] + [_ev(3, 1, "like")]
    d = action_distributions(evs, [_profile(1, "debater")])
    p = d.proportions[1]
    assert (p[ActionState.POST.index], p[ActionState.LIKE.index]) == (0.75, 0.25)
    assert abs(p.sum() - 1.0) < 1e-9


def test_action_distribution_skips_seed_and_groups_red(tmp_path):
    evs = [_ev(0, 0, "post", seed=True), _ev(1, 0, "read"), _ev(2, 1, "post", narrative_id="n")]
    d = action_distributions(evs, [_profile(0), _profile(1, "advanced", red=True)])
    assert d.proportions[0][ActionState.READ.index] == 1.0
    assert d.groups[1] == "red"
    write_action_csv(d, tmp_path / "a.csv")
    rows = list(csv.DictReader(open(tmp_path / "a.csv")))
    assert len(rows) == 14 and rows[0]["user_type"] in ("lurker", "red")
    with pytest.raises(ValidationError):
        action_distributions([], [])


def test_judge_constant_backend():
    pop = [_profile(0), _profile(1, red=True)]
    evs = [_ev(i, i % 2, "post", text=f"post {i}") for i in range(40)]
    rep = judge_sample(evs, 20, FixedGenerator("naturalness=4; consistency=5; engagingness=3"), pop)
    assert (rep.means["naturalness"], rep.means["consistency"], rep.means["engagingness"]) == (4, 5, 3)
    assert rep.n_failed == 0 and rep.n_scored == 20


class CohortJudge:
    def complete(self, prompt):
        e = 4 if "U1," in prompt else 3
        return f"naturalness=4; consistency=4; engagingness={e}"


def test_judge_cohort_gap():
    pop = [_profile(0), _profile(1, red=True)]
    evs = [_ev(i, i % 2, "post", text=f"post {i}") for i in range(40)]
    rep = judge_sample(evs, 40, CohortJudge(), pop)
    assert rep.red_minus_organic["engagingness"] == pytest.approx(1.0)


class FlakyJudge:
    def __init__(self, every):
        self.every, self.n = every, 0

    def complete(self, prompt):
        self.n += 1
        return "meh" if self.n % self.every == 0 else "naturalness=3; consistency=3; engagingness=3"


def test_judge_failures_counted_and_limit():
    pop = [_profile(0)]
    evs = [_ev(i, 0, "post", text=f"p{i}") for i in range(50)]
    rep = judge_sample(evs, 50, FlakyJudge(10), pop)
    assert rep.n_failed == 5 and rep.n_scored == 45
    with pytest.raises(HarnessError):
        judge_sample(evs, 50, FlakyJudge(3), pop)
    with pytest.raises(HarnessError):
        judge_sample(evs, 51, FlakyJudge(3), pop)
