"""Synthetic population: demographic and behavioural attributes per agent."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

AGE_BANDS: tuple[tuple[int, int], ...] = ((18, 24), (25, 34), (35, 44), (45, 54), (55, 64), (65, 90))
AGE_BAND_LABELS = ("18-24", "25-34", "35-44", "45-54", "55-64", "65+")
SENIOR_AGE = 65
STUDENT_AGE = 22
TRAIT_NAMES = ("openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism")
_TRAIT_ABBREV = {"openness": "Opn", "conscientiousness": "Con", "extraversion": "Ext",
                 "agreeableness": "Agr", "neuroticism": "Neu"}


class Gender(str, Enum):
    FEMALE = "female"
    MALE = "male"
    NONBINARY = "nonbinary"


class UserType(str, Enum):
    LURKER = "lurker"
    SPORADIC = "sporadic"
    SOCIALIZER = "socializer"
    DEBATER = "debater"
    ADVANCED = "advanced"

    @property
    def rank(self) -> int:
        return _TYPE_ORDER.index(self)


_TYPE_ORDER = [UserType.LURKER, UserType.SPORADIC, UserType.SOCIALIZER, UserType.DEBATER, UserType.ADVANCED]


@dataclass(frozen=True)
class Traits:
    openness: bool = False
    conscientiousness: bool = False
    extraversion: bool = False
    agreeableness: bool = False
    neuroticism: bool = False

    @classmethod
    def from_bits(cls, bits: int) -> "Traits":
        return cls(*[bool(bits >> i & 1) for i in range(5)])

    @classmethod
    def from_abbrev(cls, text: str) -> "Traits":
        """Parse the table notation, e.g. ``"Con+, Neu+"``. Unlisted traits are False."""
        values = {}
        inverse = {v: k for k, v in _TRAIT_ABBREV.items()}
        for part in text.replace(" ", "").split(","):
            if not part:
                continue
            sign = part[-1]
            key = part.rstrip("+-–")
            values[inverse[key]] = sign == "+"
        return cls(**values)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in TRAIT_NAMES], dtype=bool)

    def as_dict(self) -> dict[str, bool]:
        return {n: getattr(self, n) for n in TRAIT_NAMES}

    def describe(self) -> str:
        return ", ".join(f"{_TRAIT_ABBREV[n]}{'+' if getattr(self, n) else '-'}" for n in TRAIT_NAMES)


@dataclass(frozen=True)
class TypeThresholds:
    """Activity/influence cut-offs used by :func:`assign_user_type`.

    Types are ordered lurker < sporadic < socializer < debater < advanced. Debater
    needs conscientiousness or low agreeableness on top of ``debater_activity``.
    """

    sporadic_activity: float = 25.0
    social_activity: float = 36.0
    debater_activity: float = 45.0
    advanced_activity: float = 60.0
    advanced_influence: float = 56.0


@dataclass
class PopulationConfig:
    n_agents: int = 1000
    rng_seed: int = 0
    age_band_weights: tuple[float, ...] = (0.18, 0.28, 0.22, 0.15, 0.10, 0.07)
    trait_prevalence: dict[str, float] = field(default_factory=lambda: {
        "openness": 0.5, "conscientiousness": 0.5, "extraversion": 0.45,
        "agreeableness": 0.5, "neuroticism": 0.5})
    influence_pareto_alpha: float = 2.5
    influence_scale: float = 20.0
    extraversion_influence_bonus: float = 10.0
    senior_influence_penalty: float = 8.0
    type_thresholds: TypeThresholds = field(default_factory=TypeThresholds)
    max_interests: int = 5
    with_backstory: bool = True

    def validate(self) -> None:
        if not isinstance(self.n_agents, int) or self.n_agents < 1:
            raise ConfigError(f"n_agents must be a positive integer, got {self.n_agents!r}", "n_agents")
        w = np.asarray(self.age_band_weights, dtype=float)
        if w.shape != (len(AGE_BANDS),):
            raise ConfigError(f"age_band_weights needs {len(AGE_BANDS)} entries", "age_band_weights")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError(f"age_band_weights must be non-negative and sum to 1 (sum={w.sum():.12g})",
                              "age_band_weights")
        for name in TRAIT_NAMES:
            p = self.trait_prevalence.get(name)
            if p is None or not 0.0 <= p <= 1.0:
                raise ConfigError(f"trait_prevalence[{name}] must be in [0, 1], got {p!r}", "trait_prevalence")
        if self.influence_pareto_alpha <= 0:
            raise ConfigError("influence_pareto_alpha must be positive", "influence_pareto_alpha")
        if not 1 <= self.max_interests <= 5:
            raise ConfigError("max_interests must be within 1..5", "max_interests")

    @classmethod
    def from_dict(cls, data: dict) -> "PopulationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown population config field(s): {sorted(unknown)}", sorted(unknown)[0])
        kwargs = dict(data)
        if "type_thresholds" in kwargs and isinstance(kwargs["type_thresholds"], dict):
            kwargs["type_thresholds"] = TypeThresholds(**kwargs["type_thresholds"])
        if "age_band_weights" in kwargs:
            kwargs["age_band_weights"] = tuple(kwargs["age_band_weights"])
        if "trait_prevalence" in kwargs:
            merged = cls().trait_prevalence
            merged.update(kwargs["trait_prevalence"])
            kwargs["trait_prevalence"] = merged
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["age_band_weights"] = list(self.age_band_weights)
        return d


@dataclass
class AgentProfile:
    id: int
    name: str
    gender: str
    age: int
    occupation: str
    interests: tuple[str, ...]
    traits: Traits
    social_influence: float
    social_activity: float
    user_type: str
    backstory: str = ""
    is_red: bool = False

    @property
    def education(self) -> str:
        return education_level(self.occupation, self.age)

    @property
    def utype(self) -> UserType:
        return UserType(self.user_type)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "name": self.name, "gender": self.gender, "age": self.age,
            "occupation": self.occupation, "interests": list(self.interests),
            "traits": self.traits.as_dict(), "social_influence": self.social_influence,
            "social_activity": self.social_activity, "user_type": self.user_type,
            "backstory": self.backstory, "is_red": self.is_red,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AgentProfile":
        return cls(
            id=d["id"], name=d["name"], gender=d["gender"], age=int(d["age"]),
            occupation=d["occupation"], interests=tuple(d["interests"]),
            traits=Traits(**d["traits"]), social_influence=float(d["social_influence"]),
            social_activity=float(d["social_activity"]), user_type=d["user_type"],
            backstory=d.get("backstory", ""), is_red=bool(d.get("is_red", False)),
        )


# ---------------------------------------------------------------------------
# bundled data
# ---------------------------------------------------------------------------

def _data_text(name: str) -> str:
    return resources.files("osnsim.data").joinpath(name).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def occupations() -> tuple[dict, ...]:
    return tuple(json.loads(_data_text("occupations.json")))


@lru_cache(maxsize=None)
def interest_taxonomy() -> tuple[str, ...]:
    return tuple(line.strip() for line in _data_text("interests.txt").splitlines() if line.strip())


@lru_cache(maxsize=None)
def name_lists() -> dict[str, list[str]]:
    return json.loads(_data_text("names.json"))


STUDENT_OCCUPATIONS = frozenset({"Student"})
RETIRED_OCCUPATIONS = frozenset({"Retired"})

_EDUCATION_BY_SKILL = {1: "primary education", 2: "secondary education",
                       3: "vocational or technical diploma", 4: "university degree"}


def education_level(occupation: str, age: int) -> str:
    """Coarse education level derived from occupation skill level and age."""
    if occupation in STUDENT_OCCUPATIONS:
        return "secondary education" if age < 19 else "undergraduate studies (in progress)"
    for occ in occupations():
        if occ["name"] == occupation:
            return _EDUCATION_BY_SKILL[occ["skill_level"]]
    return "secondary education"


def occupation_consistent(occupation: str, age: int) -> bool:
    if age < STUDENT_AGE:
        return occupation in STUDENT_OCCUPATIONS
    if age >= SENIOR_AGE:
        return occupation in RETIRED_OCCUPATIONS
    return True


# ---------------------------------------------------------------------------
# attribute samplers
# ---------------------------------------------------------------------------

def raw_influence(rng: np.random.Generator, alpha: float = 2.5, scale: float = 20.0, size=None):
    """Unclamped Pareto draws with minimum ``scale`` and tail exponent ``alpha``."""
    return scale * (1.0 + rng.pareto(alpha, size=size))


def sample_influence(age: int, extraverted: bool, rng: np.random.Generator, *,
                     alpha: float = 2.5, scale: float = 20.0,
                     extraversion_bonus: float = 10.0, senior_penalty: float = 8.0) -> float:
    value = min(100.0, float(raw_influence(rng, alpha, scale)))
    if extraverted:
        value += extraversion_bonus
    if age >= SENIOR_AGE:
        value -= senior_penalty
    return float(np.clip(value, 0.0, 100.0))


def derive_activity(influence: float, traits: Traits, rng: np.random.Generator) -> float:
    value = (0.7 * influence + 15.0 * traits.extraversion - 10.0 * traits.neuroticism
             + rng.normal(0.0, 8.0))
    return float(np.clip(value, 0.0, 100.0))


def assign_user_type(activity: float, influence: float, traits: Traits,
                     thresholds: TypeThresholds | None = None) -> UserType:
    t = thresholds or TypeThresholds()
    if activity >= t.advanced_activity and influence >= t.advanced_influence:
        return UserType.ADVANCED
    if activity >= t.debater_activity and (traits.conscientiousness or not traits.agreeableness):
        return UserType.DEBATER
    if activity >= t.social_activity:
        return UserType.SOCIALIZER
    if activity >= t.sporadic_activity:
        return UserType.SPORADIC
    return UserType.LURKER


def sample_age(rng: np.random.Generator, weights: Sequence[float]) -> int:
    band = AGE_BANDS[rng.choice(len(AGE_BANDS), p=np.asarray(weights, dtype=float))]
    return int(rng.integers(band[0], band[1] + 1))


def age_band_index(age: int) -> int:
    for i, (lo, hi) in enumerate(AGE_BANDS):
        if lo <= age <= hi:
            return i
    raise ValueError(f"age {age} outside supported bands")


def sample_occupation(age: int, rng: np.random.Generator) -> str:
    if age < STUDENT_AGE:
        return "Student"
    if age >= SENIOR_AGE:
        return "Retired"
    if age < 25 and rng.random() < 0.3:
        return "Student"
    pool = [o["name"] for o in occupations()
            if o["name"] not in STUDENT_OCCUPATIONS | RETIRED_OCCUPATIONS
            and o["age_min"] <= age <= o["age_max"]]
    return pool[int(rng.integers(len(pool)))]


def sample_interests(rng: np.random.Generator, max_interests: int = 5) -> tuple[str, ...]:
    taxonomy = interest_taxonomy()
    k = int(rng.integers(1, max_interests + 1))
    idx = rng.choice(len(taxonomy), size=k, replace=False)
    return tuple(sorted(taxonomy[i] for i in idx))


def sample_name(gender: Gender, rng: np.random.Generator) -> str:
    names = name_lists()
    first = names[gender.value][int(rng.integers(len(names[gender.value])))]
    last = names["surnames"][int(rng.integers(len(names["surnames"])))]
    return f"{first} {last}"


def agent_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one agent so output does not depend on scheduling order."""
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, index, stream])


def make_profile(index: int, cfg: PopulationConfig) -> AgentProfile:
    rng = agent_rng(cfg.rng_seed, index)
    gender = [Gender.FEMALE, Gender.MALE, Gender.NONBINARY][rng.choice(3, p=[0.49, 0.49, 0.02])]
    age = sample_age(rng, cfg.age_band_weights)
    traits = Traits(**{n: bool(rng.random() < cfg.trait_prevalence[n]) for n in TRAIT_NAMES})
    influence = sample_influence(age, traits.extraversion, rng,
                                 alpha=cfg.influence_pareto_alpha, scale=cfg.influence_scale,
                                 extraversion_bonus=cfg.extraversion_influence_bonus,
                                 senior_penalty=cfg.senior_influence_penalty)
    activity = derive_activity(influence, traits, rng)
    profile = AgentProfile(
        id=index,
        name=sample_name(gender, rng),
        gender=gender.value,
        age=age,
        occupation=sample_occupation(age, rng),
        interests=sample_interests(rng, cfg.max_interests),
        traits=traits,
        social_influence=round(influence, 1),
        social_activity=round(activity, 1),
        user_type="",
    )
    profile.user_type = assign_user_type(profile.social_activity, profile.social_influence,
                                         traits, cfg.type_thresholds).value
    return profile


def generate_population(cfg: PopulationConfig, generator=None) -> list[AgentProfile]:
    """Build ``cfg.n_agents`` profiles. Pure function of ``cfg`` (and the generator's seed)."""
    cfg.validate()
    population = [make_profile(i, cfg) for i in range(cfg.n_agents)]
    if cfg.with_backstory:
        from .content import StubGenerator
        gen = generator or StubGenerator(seed=cfg.rng_seed)
        for p in population:
            p.backstory = generate_backstory(p, gen)
    return population


def generate_backstory(profile: AgentProfile, generator) -> str:
    from .content import GenerationRequest, Task, build_prompt, generate
    req = GenerationRequest(agent_id=profile.id, task=Task.BACKSTORY, topic="", post_len=4000)
    prompt = build_prompt(req, profile, "")
    return generate(req, generator, prompt=prompt, profile=profile)


def validate_profile(p: AgentProfile, taxonomy: Iterable[str] | None = None,
                     thresholds: TypeThresholds | None = None) -> list[str]:
    """Return a list of invariant violations (empty when the profile is valid)."""
    problems = []
    tax = set(taxonomy or interest_taxonomy())
    if not 0.0 <= p.social_influence <= 100.0:
        problems.append("social_influence out of [0, 100]")
    if not 0.0 <= p.social_activity <= 100.0:
        problems.append("social_activity out of [0, 100]")
    if not 1 <= len(set(p.interests)) <= 5 or len(set(p.interests)) != len(p.interests):
        problems.append("interests must hold 1-5 distinct tags")
    if not set(p.interests) <= tax:
        problems.append(f"interests outside taxonomy: {sorted(set(p.interests) - tax)}")
    if not occupation_consistent(p.occupation, p.age):
        problems.append(f"occupation {p.occupation!r} inconsistent with age {p.age}")
    if p.gender not in {g.value for g in Gender}:
        problems.append(f"unknown gender {p.gender!r}")
    if not p.is_red:
        expected = assign_user_type(p.social_activity, p.social_influence, p.traits, thresholds)
        if p.user_type != expected.value:
            problems.append(f"user_type {p.user_type} != {expected.value}")
    return problems


# ---------------------------------------------------------------------------
# JSON Lines I/O
# ---------------------------------------------------------------------------

def write_population(population: Sequence[AgentProfile], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in population:
            fh.write(json.dumps(p.to_dict(), sort_keys=False, ensure_ascii=False) + "\n")


def read_population(path: str | Path) -> list[AgentProfile]:
    with open(path, encoding="utf-8") as fh:
        return [AgentProfile.from_dict(json.loads(line)) for line in fh if line.strip()]


def type_counts(population: Iterable[AgentProfile]) -> dict[str, int]:
    counts = {t.value: 0 for t in UserType}
    for p in population:
        counts[p.user_type] += 1
    return counts


def age_band_frequencies(population: Sequence[AgentProfile]) -> np.ndarray:
    counts = np.zeros(len(AGE_BANDS))
    for p in population:
        counts[age_band_index(p.age)] += 1
    return counts / max(1, len(population))


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


__all__ = [
    "AGE_BANDS", "AgentProfile", "Gender", "PopulationConfig", "Traits", "TypeThresholds", "UserType",
    "assign_user_type", "generate_backstory", "generate_population", "sample_influence",
    "read_population", "write_population", "validate_profile",
]
