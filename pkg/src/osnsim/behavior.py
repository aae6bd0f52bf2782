"""Seven-state Markov action model with per-agent personalization."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError, ConstraintViolation, ValidationError
from .kernels import sample_chain
from .profilegen import TRAIT_NAMES, Traits, UserType


class ActionState(str, Enum):
    READ = "read"
    POST = "post"
    REPLY = "reply"
    SHARE = "share"
    LIKE = "like"
    FOLLOW = "follow"
    UNFOLLOW = "unfollow"

    @property
    def index(self) -> int:
        return ACTIONS.index(self)


ACTIONS: tuple[ActionState, ...] = tuple(ActionState)
ACTION_NAMES: tuple[str, ...] = tuple(a.value for a in ACTIONS)
N_ACTIONS = len(ACTIONS)
CONTENT_ACTIONS = (ActionState.POST, ActionState.REPLY, ActionState.SHARE)

_R, _P, _C, _S, _L, _F, _U = range(N_ACTIONS)

# Trait -> [(column, direction)]; the factor applied is 1 + direction * strength * lambda.
# Extraversion acts at full strength, the others at half.
DEFAULT_TRAIT_EFFECTS: dict[str, tuple[tuple[str, int, float], ...]] = {
    "extraversion": (("post", +1, 1.0), ("reply", +1, 1.0)),
    "neuroticism": (("reply", +1, 0.5),),
    "openness": (("share", +1, 0.5), ("follow", +1, 0.5)),
    "agreeableness": (("like", +1, 0.5),),
    "conscientiousness": (("unfollow", -1, 0.5),),
}


# ---------------------------------------------------------------------------
# default matrices (rows/columns: read post reply share like follow unfollow)
# ---------------------------------------------------------------------------

_LURKER = [
    [0.82, 0.01, 0.01, 0.07, 0.08, 0.008, 0.002],
    [0.75, 0.02, 0.03, 0.07, 0.12, 0.008, 0.002],
    [0.75, 0.02, 0.03, 0.08, 0.11, 0.008, 0.002],
    [0.78, 0.01, 0.01, 0.09, 0.10, 0.008, 0.002],
    [0.78, 0.01, 0.01, 0.08, 0.11, 0.008, 0.002],
    [0.82, 0.01, 0.01, 0.06, 0.09, 0.008, 0.002],
    [0.85, 0.01, 0.01, 0.05, 0.07, 0.008, 0.002],
]

_SOCIALIZER = [
    [0.40, 0.04, 0.14, 0.21, 0.18, 0.02, 0.01],
    [0.40, 0.03, 0.16, 0.21, 0.17, 0.02, 0.01],
    [0.35, 0.03, 0.22, 0.20, 0.17, 0.02, 0.01],
    [0.37, 0.04, 0.14, 0.25, 0.17, 0.02, 0.01],
    [0.38, 0.04, 0.15, 0.21, 0.19, 0.02, 0.01],
    [0.45, 0.04, 0.12, 0.18, 0.18, 0.02, 0.01],
    [0.50, 0.04, 0.10, 0.17, 0.16, 0.02, 0.01],
]

_DEBATER = [
    [0.35, 0.15, 0.20, 0.15, 0.12, 0.02, 0.01],
    [0.20, 0.15, 0.35, 0.15, 0.12, 0.02, 0.01],
    [0.20, 0.30, 0.20, 0.15, 0.12, 0.02, 0.01],
    [0.30, 0.17, 0.20, 0.18, 0.12, 0.02, 0.01],
    [0.30, 0.15, 0.22, 0.16, 0.14, 0.02, 0.01],
    [0.40, 0.12, 0.18, 0.15, 0.12, 0.02, 0.01],
    [0.42, 0.12, 0.18, 0.13, 0.12, 0.02, 0.01],
]

_ADVANCED = [
    [0.20, 0.24, 0.16, 0.20, 0.17, 0.02, 0.01],
    [0.22, 0.20, 0.18, 0.20, 0.17, 0.02, 0.01],
    [0.20, 0.24, 0.16, 0.20, 0.17, 0.02, 0.01],
    [0.20, 0.24, 0.16, 0.20, 0.17, 0.02, 0.01],
    [0.20, 0.24, 0.16, 0.20, 0.17, 0.02, 0.01],
    [0.22, 0.24, 0.16, 0.19, 0.16, 0.02, 0.01],
    [0.24, 0.24, 0.16, 0.18, 0.15, 0.02, 0.01],
]


def default_matrices() -> dict[str, np.ndarray]:
    """Shipped base matrices keyed by user type; ``sporadic`` aliases ``lurker``."""
    return {
        UserType.LURKER.value: np.array(_LURKER),
        UserType.SOCIALIZER.value: np.array(_SOCIALIZER),
        UserType.DEBATER.value: np.array(_DEBATER),
        UserType.ADVANCED.value: np.array(_ADVANCED),
    }


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def check_stochastic(m: np.ndarray, tol: float = 1e-9, name: str = "matrix") -> None:
    m = np.asarray(m, dtype=float)
    if m.shape != (N_ACTIONS, N_ACTIONS):
        raise ValidationError(f"{name}: expected {N_ACTIONS}x{N_ACTIONS}, got {m.shape}")
    if not np.all(np.isfinite(m)) or (m < 0).any():
        raise ValidationError(f"{name}: entries must be finite and non-negative")
    bad = np.abs(m.sum(axis=1) - 1.0) > tol
    if bad.any():
        rows = [ACTION_NAMES[i] for i in np.flatnonzero(bad)]
        raise ValidationError(f"{name}: rows {rows} do not sum to 1")


def is_stochastic(m: np.ndarray, tol: float = 1e-9) -> bool:
    try:
        check_stochastic(m, tol)
    except ValidationError:
        return False
    return True


@dataclass
class BehaviorConfig:
    base_matrices: dict[str, np.ndarray] = field(default_factory=default_matrices)
    sigma: float = 0.5
    lam: float = 0.6
    rng_seed: int = 0
    trait_effects: Mapping[str, tuple] = field(default_factory=lambda: dict(DEFAULT_TRAIT_EFFECTS))

    def validate(self) -> None:
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative", "sigma")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lambda must be in [0, 1]", "lambda")
        for t in (UserType.LURKER, UserType.SOCIALIZER, UserType.DEBATER, UserType.ADVANCED):
            if t.value not in self.base_matrices:
                raise ConfigError(f"missing base matrix for {t.value}", "base_matrices")
        for name, m in self.base_matrices.items():
            check_stochastic(m, name=name)
        for trait, effects in self.trait_effects.items():
            if trait not in TRAIT_NAMES:
                raise ConfigError(f"unknown trait {trait!r}", "trait_effects")
            for col, _, _ in effects:
                if col not in ACTION_NAMES:
                    raise ConfigError(f"unknown action {col!r}", "trait_effects")

    def matrix_for(self, user_type: str | UserType) -> np.ndarray:
        key = UserType(user_type)
        if key is UserType.SPORADIC:
            key = UserType.LURKER
        return self.base_matrices[key.value]

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma, "lambda": self.lam, "rng_seed": self.rng_seed,
            "base_matrices": {k: np.asarray(v).tolist() for k, v in self.base_matrices.items()},
            "trait_effects": {k: [list(e) for e in v] for k, v in self.trait_effects.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BehaviorConfig":
        data = dict(data)
        known = {"sigma", "lambda", "lam", "rng_seed", "base_matrices", "trait_effects"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown behavior setting(s): {sorted(unknown)}", sorted(unknown)[0])
        cfg = cls()
        if "sigma" in data:
            cfg.sigma = float(data["sigma"])
        if "lambda" in data or "lam" in data:
            cfg.lam = float(data.get("lambda", data.get("lam")))
        if "rng_seed" in data:
            cfg.rng_seed = int(data["rng_seed"])
        if "base_matrices" in data:
            mats = default_matrices()
            mats.update({k: np.asarray(v, dtype=float) for k, v in data["base_matrices"].items()})
            cfg.base_matrices = mats
        if "trait_effects" in data:
            cfg.trait_effects = {k: tuple(tuple(e) for e in v) for k, v in data["trait_effects"].items()}
        cfg.validate()
        return cfg


# ---------------------------------------------------------------------------
# personalization and sampling
# ---------------------------------------------------------------------------

def trait_factors(traits: Traits, lam: float,
                  effects: Mapping[str, tuple] = DEFAULT_TRAIT_EFFECTS) -> np.ndarray:
    """Per-column multipliers induced by the agent's active traits."""
    f = np.ones(N_ACTIONS)
    for trait, cols in effects.items():
        if getattr(traits, trait):
            for col, direction, strength in cols:
                f[ACTION_NAMES.index(col)] *= 1.0 + direction * strength * lam
    return f


def modulate(base: np.ndarray, traits: Traits, lam: float,
             effects: Mapping[str, tuple] = DEFAULT_TRAIT_EFFECTS) -> np.ndarray:
    """Trait modulation only (the zero-noise personalized matrix)."""
    m = np.asarray(base, dtype=float) * trait_factors(traits, lam, effects)
    return m / m.sum(axis=1, keepdims=True)


def personalize(base: np.ndarray, traits: Traits, sigma: float, lam: float,
                rng: np.random.Generator,
                effects: Mapping[str, tuple] = DEFAULT_TRAIT_EFFECTS) -> np.ndarray:
    """Trait modulation, then multiplicative Gaussian noise, then row renormalization."""
    check_stochastic(base, name="base")
    if sigma == 0.0 and lam == 0.0:
        return np.array(base, dtype=float)
    m = modulate(base, traits, lam, effects)
    if sigma > 0.0:
        noisy = np.maximum(0.0, m + rng.normal(0.0, 1.0, m.shape) * sigma * m)
        sums = noisy.sum(axis=1, keepdims=True)
        # a row wiped out entirely by noise keeps its modulated values
        m = np.where(sums > 0.0, noisy / np.where(sums > 0.0, sums, 1.0), m)
    return m


def cumulative(matrix: np.ndarray) -> np.ndarray:
    cum = np.cumsum(np.asarray(matrix, dtype=float), axis=1)
    cum[:, -1] = 1.0
    return cum


def _pick(cum_row: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cum_row, u, side="right")), N_ACTIONS - 1)


def next_action(current: ActionState | int, matrix: np.ndarray, rng: np.random.Generator) -> ActionState:
    row = ACTIONS[current].index if isinstance(current, int) else ActionState(current).index
    return ACTIONS[_pick(cumulative(matrix)[row], rng.random())]


class AgentChain:
    """A personalized matrix with its current state; starts in ``read``."""

    __slots__ = ("matrix", "cum", "state")

    def __init__(self, matrix: np.ndarray):
        self.matrix = matrix
        self.cum = cumulative(matrix)
        self.state = _R

    def step(self, rng: np.random.Generator) -> ActionState:
        self.state = _pick(self.cum[self.state], rng.random())
        return ACTIONS[self.state]


def simulate_chain(matrix: np.ndarray, n_steps: int, rng: np.random.Generator,
                   start: ActionState = ActionState.READ) -> np.ndarray:
    """Indices of ``n_steps`` states following ``start``."""
    return sample_chain(cumulative(matrix), ActionState(start).index, rng.random(n_steps))


def stationary_distribution(matrix: np.ndarray, tol: float = 1e-14, max_iter: int = 100_000) -> np.ndarray:
    """Power iteration for the left fixed point ``pi P = pi``."""
    p = np.asarray(matrix, dtype=float)
    pi = np.full(p.shape[0], 1.0 / p.shape[0])
    for _ in range(max_iter):
        nxt = pi @ p
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    return pi


def row_entropy(matrix: np.ndarray) -> float:
    """Mean Shannon entropy (nats) over rows."""
    p = np.asarray(matrix, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
    return float(h.mean())


# ---------------------------------------------------------------------------
# qualitative validation
# ---------------------------------------------------------------------------

@dataclass
class ConstraintReport:
    results: dict[str, bool]
    details: dict[str, str]

    @property
    def ok(self) -> bool:
        return all(self.results.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.results.items() if not v]

    def raise_for_failure(self) -> None:
        if not self.ok:
            name = self.failed()[0]
            raise ConstraintViolation(name, self.details.get(name, ""))


def validate_defaults(cfg: BehaviorConfig) -> ConstraintReport:
    """Check the qualitative tendencies each type's matrix must express."""
    mats = {t: np.asarray(cfg.matrix_for(t), float) for t in ("lurker", "socializer", "debater", "advanced")}
    results: dict[str, bool] = {}
    details: dict[str, str] = {}

    lurk_read = mats["lurker"][:, _R].min()
    results["lurker passivity"] = bool(lurk_read >= 0.70)
    details["lurker passivity"] = f"min read mass {lurk_read:.3f} (need >= 0.70)"

    soc = mats["socializer"]
    react = soc[:, [_C, _L, _S]].sum(axis=1)
    results["socializer reactivity"] = bool((react > soc[:, _P]).all())
    details["socializer reactivity"] = f"min reply+like+share {react.min():.3f} vs max post {soc[:, _P].max():.3f}"

    cycling = {t: m[_P, _C] + m[_C, _P] for t, m in mats.items()}
    others = max(v for t, v in cycling.items() if t != "debater")
    results["debater post-reply cycling"] = bool(cycling["debater"] > others)
    details["debater post-reply cycling"] = f"debater {cycling['debater']:.3f} vs best other {others:.3f}"

    ent = {t: row_entropy(m) for t, m in mats.items()}
    best_other = max(v for t, v in ent.items() if t != "advanced")
    results["advanced balance"] = bool(ent["advanced"] > best_other)
    details["advanced balance"] = f"advanced {ent['advanced']:.3f} vs best other {best_other:.3f}"

    agg = sum(stationary_distribution(m) for m in mats.values())
    content = {a.value: agg[a.index] for a in CONTENT_ACTIONS}
    results["share dominance"] = bool(content["share"] > max(content["post"], content["reply"]))
    details["share dominance"] = ", ".join(f"{k}={v:.3f}" for k, v in content.items())
    return ConstraintReport(results, details)


# ---------------------------------------------------------------------------
# CSV I/O
# ---------------------------------------------------------------------------

def write_matrix_csv(matrix: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ACTION_NAMES)
        for row in np.asarray(matrix, float):
            w.writerow([repr(float(x)) for x in row])


def read_matrix_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(h.strip() for h in rows[0]) != ACTION_NAMES:
        raise ValidationError(f"{path}: header must be {','.join(ACTION_NAMES)}")
    m = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    check_stochastic(m, name=str(path))
    return m


__all__ = [
    "ACTIONS", "ACTION_NAMES", "ActionState", "AgentChain", "BehaviorConfig", "ConstraintReport",
    "check_stochastic", "default_matrices", "modulate", "next_action", "personalize",
    "read_matrix_csv", "row_entropy", "simulate_chain", "stationary_distribution",
    "validate_defaults", "write_matrix_csv",
]
