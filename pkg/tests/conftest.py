import sys

import numpy as np
import pytest

from osnsim.netgen import NetGenConfig, SocialGraph, generate_graph
from osnsim.profilegen import AgentProfile, PopulationConfig, Traits, generate_population


@pytest.fixture(scope="session")
def small_population():
    return generate_population(PopulationConfig(n_agents=80, rng_seed=7))


@pytest.fixture(scope="session")
def small_graph(small_population):
    return generate_graph(small_population, NetGenConfig(rng_seed=7))


@pytest.fixture
def bob():
    return AgentProfile(id=0, name="Bob", gender="male", age=45, occupation="Engineer",
                        interests=("Politics", "Science"),
                        traits=Traits(conscientiousness=True, neuroticism=True),
                        social_influence=40.2, social_activity=48.9, user_type="debater")


def graph_from_edges(n, edges):
    g = SocialGraph(range(n))
    for a, b in edges:
        g.add_edge(a, b)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
