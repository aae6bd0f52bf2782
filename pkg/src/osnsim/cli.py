"""Command-line entry point: ``osnsim generate|simulate|campaign validate|metrics|export``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from .analytics import (action_distributions, compute_metrics, write_action_csv, write_metrics_csv,
                        write_summary_json)
from .behavior import BehaviorConfig, personalize, validate_defaults, write_matrix_csv
from .content import AuditLog, BackendConfig, make_backend
from .engine import MASTODON_ENTITY, SimConfig, read_events, run_simulation
from .errors import BackendError, ConfigError, OsnSimError, PlanningError, RefusalError, ValidationError
from .memory import write_snapshots
from .netgen import NetGenConfig, generate_graph, read_edges, scale_parameters, write_edges
from .profilegen import PopulationConfig, generate_population, read_population, write_population
from .red import Campaign, campaign_report, load_campaign, plan

log = logging.getLogger("osnsim")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_BACKEND = 0, 2, 3, 4
SECTIONS = ("population", "graph", "simulation", "behavior", "backend")

POPULATION_FILE = "population.jsonl"
GRAPH_FILE = "graph.edges"
EVENTS_FILE = "events.jsonl"
RED_FILE = "red_agents.jsonl"
MANIFEST_FILE = "manifest.json"


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist", "config")
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}", "config") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}", "config") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table/object", "config")
    unknown = sorted(set(data) - set(SECTIONS) - {"campaign"})
    if unknown:
        raise ConfigError(f"unknown config section(s): {unknown}", unknown[0])
    return data


def _section(cfg: dict, name: str, seed: int | None) -> dict:
    sec = dict(cfg.get(name) or {})
    if seed is not None:
        sec["seed" if name == "backend" else "rng_seed"] = seed
    return sec


def population_config(cfg: dict, seed: int | None) -> PopulationConfig:
    sec = _section(cfg, "population", seed)
    if "n_agents" not in sec:
        raise ConfigError("population.n_agents is required", "population.n_agents")
    return PopulationConfig.from_dict(sec)


def graph_config(cfg: dict, seed: int | None, n: int) -> NetGenConfig:
    sec = _section(cfg, "graph", seed)
    auto = sec.pop("auto_scale", True)
    ng = NetGenConfig.from_dict(sec)
    # explicitly configured degree/exploration values are never rescaled
    if auto and "target_mean_degree" not in sec and "explore_prob" not in sec:
        ng = scale_parameters(n, ng)
    return ng


def backend_config(cfg: dict, seed: int | None, kind: str | None) -> BackendConfig:
    sec = _section(cfg, "backend", seed)
    if kind is not None:
        sec["kind"] = kind
    return BackendConfig.from_dict(sec)


# ---------------------------------------------------------------------------
# bundle manifest
# ---------------------------------------------------------------------------

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def update_manifest(out: Path, section: str, payload: dict) -> dict:
    """Merge ``payload`` under ``section`` and re-hash every artifact in the bundle."""
    path = out / MANIFEST_FILE
    manifest = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    manifest[section] = payload
    artifacts = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != MANIFEST_FILE:
            artifacts[p.relative_to(out).as_posix()] = sha256_file(p)
    manifest["artifacts"] = artifacts
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return manifest


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{path} not found; {hint}", path.name)
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    pcfg = population_config(cfg, args.seed)
    gcfg = graph_config(cfg, args.seed, pcfg.n_agents)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    population = generate_population(pcfg)
    graph = generate_graph(population, gcfg)
    write_population(population, out / POPULATION_FILE)
    write_edges(graph, out / GRAPH_FILE, {"graph_config": gcfg.to_dict()})
    update_manifest(out, "generate", {"population": pcfg.to_dict(), "graph": gcfg.to_dict()})
    print(f"generated {len(population)} agents, {graph.n_edges()} follow edges -> {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    population = read_population(_require(out / POPULATION_FILE, "run 'osnsim generate' first"))
    graph, _ = read_edges(_require(out / GRAPH_FILE, "run 'osnsim generate' first"))
    scfg = SimConfig.from_dict(_section(cfg, "simulation", args.seed))
    bcfg = BehaviorConfig.from_dict(_section(cfg, "behavior", args.seed))
    kcfg = backend_config(cfg, args.seed, args.backend)
    if kcfg.kind == "remote" and not os.environ.get(kcfg.api_key_env):
        raise BackendError(f"remote backend selected but ${kcfg.api_key_env} is empty")
    backend = make_backend(kcfg)
    campaign = None
    spec_path = args.campaign or (cfg.get("campaign") or {}).get("spec")
    if spec_path:
        campaign = Campaign(load_campaign(spec_path), homophily_weight=graph_config(cfg, None, len(population))
                            .homophily_weight)
    audit = AuditLog(out / "generations.jsonl") if args.audit else None
    result = run_simulation(population, graph, scfg, bcfg, backend, campaign,
                            events_path=out / EVENTS_FILE, audit=audit)
    red_profiles = [p for p in result.population if p.is_red]
    if red_profiles:
        write_population(red_profiles, out / RED_FILE)
    write_snapshots(result.memories, out / "memory")
    if campaign is not None:
        report = campaign_report(campaign, result.events)
        (out / "campaign_report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    run = dict(result.manifest)
    run["config"]["backend"] = kcfg.to_dict()
    update_manifest(out, "simulate", run)
    c = run["counts"]
    print(f"simulated {run['ticks_executed']} rounds: {c['events']} events, {c['posts']} posts -> {out}")
    return EXIT_OK


def cmd_campaign_validate(args) -> int:
    spec = load_campaign(args.spec)
    print(f"campaign OK: {spec.workflow.value}, objective {spec.objective.value}, "
          f"{len(spec.narratives)} narrative(s), rounds {spec.start_tick}..{spec.end_tick - 1}")
    if args.out:
        pop_path = Path(args.out) / POPULATION_FILE
        if pop_path.exists():
            organic = [p for p in read_population(pop_path) if not p.is_red]
            targets = plan(spec, organic)
            print(f"targets: {len(targets)} of {len(organic)} agents; red agents: {spec.red_count(len(organic))}")
    return EXIT_OK


def bundle_population(out: Path) -> list:
    """Organic agents plus any red agents a campaign added."""
    pop = read_population(_require(out / POPULATION_FILE, "run 'osnsim generate' first"))
    if (out / RED_FILE).exists():
        pop += read_population(out / RED_FILE)
    return pop


def _bundle_metrics(bundle: Path, seed: int):
    graph, _ = read_edges(_require(bundle / GRAPH_FILE, "metrics need a bundle with graph.edges"))
    return compute_metrics(graph, seed=seed)


def cmd_metrics(args) -> int:
    out = Path(args.out)
    seed = args.seed or 0
    bundles = [Path(b) for b in args.multi] if args.multi else [out]
    runs: dict[str, list] = {}
    for b in bundles:
        m = _bundle_metrics(b, seed)
        runs.setdefault(str(m.n_nodes), []).append(m)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(runs, out / "metrics.csv")
    summary = write_summary_json(runs, out / "metrics_summary.json")
    for scale, s in summary.items():
        cells = ", ".join(f"{k} {s[k]['display']}" for k in ("avg_degree", "density", "mean_betweenness",
                                                             "mean_closeness"))
        print(f"N={scale} ({s['runs']} run(s)): {cells}")
    events_path = out / EVENTS_FILE
    events = read_events(events_path) if events_path.exists() else []
    if events:
        dist = action_distributions(events, bundle_population(out))
        write_action_csv(dist, out / "actions.csv")
        print(f"action distributions for {len(dist.proportions)} agents -> {out / 'actions.csv'}")
    else:
        print("no events found; action distribution CSV omitted")
    update_manifest(out, "metrics", {"summary": summary, "bundles": [str(b) for b in bundles]})
    return EXIT_OK


def cmd_export(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    target = out / "export"
    bcfg = BehaviorConfig.from_dict(_section(cfg, "behavior", args.seed))
    report = validate_defaults(bcfg)
    mat_dir = target / "matrices"
    mat_dir.mkdir(parents=True, exist_ok=True)
    for name, m in sorted(bcfg.base_matrices.items()):
        write_matrix_csv(m, mat_dir / f"{name}.csv")
    pop_path = out / POPULATION_FILE
    if pop_path.exists():
        import numpy as np
        agent_dir = mat_dir / "agents"
        agent_dir.mkdir(exist_ok=True)
        for p in read_population(pop_path):
            if p.is_red:
                continue
            m = personalize(bcfg.matrix_for(p.user_type), p.traits, bcfg.sigma, bcfg.lam,
                            np.random.default_rng([bcfg.rng_seed, p.id, 1]), bcfg.trait_effects)
            write_matrix_csv(m, agent_dir / f"agent_{p.id}.csv")
    events_path = out / EVENTS_FILE
    n_events = 0
    if events_path.exists():
        with open(target / "mastodon.jsonl", "w", encoding="utf-8") as fh:
            for ev in read_events(events_path):
                if MASTODON_ENTITY[ev.action.value] is None:
                    continue  # reads have no platform-side counterpart
                fh.write(ev.to_json() + "\n")
                n_events += 1
    update_manifest(out, "export", {"constraints": report.results, "mastodon_events": n_events})
    print(f"exported {len(bcfg.base_matrices)} base matrices and {n_events} events -> {target}")
    if not report.ok:
        print(f"warning: behavioral constraints failing: {', '.join(report.failed())}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON config with population/graph/simulation/behavior/backend")
    common.add_argument("--seed", type=int, help="override every rng seed in the config")
    common.add_argument("--out", default="run", help="bundle directory (default: ./run)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="osnsim", description="Agent-based social network simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="synthesize population and follow graph")
    s = sub.add_parser("simulate", parents=[common], help="run the engine on a generated bundle")
    s.add_argument("--backend", choices=("stub", "remote"), help="text backend (default from config: stub)")
    s.add_argument("--campaign", help="campaign spec (TOML/JSON)")
    s.add_argument("--audit", action="store_true", help="log every prompt/response to generations.jsonl")
    c = sub.add_parser("campaign", help="campaign tools")
    csub = c.add_subparsers(dest="campaign_command", required=True)
    v = csub.add_parser("validate", parents=[common], help="check a campaign spec")
    v.add_argument("spec")
    m = sub.add_parser("metrics", parents=[common], help="structural and behavioral metrics")
    m.add_argument("--multi", nargs="+", metavar="BUNDLE", help="several bundles; reports mean (std)")
    sub.add_parser("export", parents=[common], help="behavior matrices as CSV and events as Mastodon entities")
    return p


COMMANDS = {"generate": cmd_generate, "simulate": cmd_simulate, "metrics": cmd_metrics, "export": cmd_export}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = cmd_campaign_validate if args.command == "campaign" else COMMANDS[args.command]
    try:
        return handler(args)
    except (ConfigError, ValidationError, PlanningError) as exc:
        field = getattr(exc, "field", None)
        print(f"config error{f' [{field}]' if field else ''}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BackendError, RefusalError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (OsnSimError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
