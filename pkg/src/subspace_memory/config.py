"""Experiment configuration: a flat ``key = value`` file layered over named presets.

Keys and defaults::

    preset        desk      named profile applied before the file's keys
    # pattern set
    n L k k_g               sizes (desk: 100 4 15 40)
    C             1000      training-set size
    gamma_gen     2         generator alphabet
    upsilon       2         message alphabet
    S             (auto)    state alphabet; d_star_cap*(gamma_gen-1)*(upsilon-1)+1
    d_star_cap    (k)       generator column-degree cap
    correctable_blocks      resample blocks until single errors are distinguishable
    # learning
    epsilon_norm  0.01      lower bound on ||w||^2
    delta         10        multiplier step size
    theta_coef    0.25      threshold schedule theta_t = theta_coef / t
    alpha_mode    paper-table   or theorem-safe
    alpha_fixed   0.49      step size while the multiplier is zero
    p_stop        0.01      stop once max |x.w| <= p_stop (i.e. p = p_stop / ||X||_2)
    sigma         1.0       sharpness of the smooth sparsity penalty
    max_iters     50000
    q_relaxed     (n/2)     penalty budget of the reference learner
    converged_fraction 0.99 share of patterns a row must satisfy
    max_cosine    0.95      diversity filter between rows
    m_local       (n/L-k)   constraints per local graph
    m_global      (n-k_g)   constraints in the global graph
    # recall
    phi           0.8       update confidence threshold
    eps_zero      0.01      band in which a constraint counts as satisfied
    t_max_coef    20        iteration budget t_max = t_max_coef * noise weight
    # sweep
    weights       1,2,3,4,5
    trials        2000
    seed          1
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .dataset import GeneratorSpec
from .errors import ValidationError
from .learner import LearnParams
from .recall import RecallParams

PRESETS = {
    "desk": {
        "n": 100, "L": 4, "k": 15, "k_g": 40, "C": 1000, "d_star_cap": 4,
        "correctable_blocks": True, "weights": (1, 2, 3, 4, 5), "trials": 2000,
    },
    "tiny": {
        "n": 20, "L": 2, "k": 5, "k_g": 7, "C": 64, "d_star_cap": 3,
        "correctable_blocks": True, "weights": (0, 1, 2), "trials": 20,
    },
    "paper": {
        "n": 400, "L": 4, "k": 40, "k_g": 100, "C": 10000, "d_star_cap": 4,
        "correctable_blocks": True, "weights": (1, 2, 3, 4, 5), "trials": 2000,
    },
}

_GEN_KEYS = {"n", "L", "k", "k_g", "gamma_gen", "upsilon", "S", "d_star_cap",
             "correctable_blocks"}
_LEARN_KEYS = {f.name for f in fields(LearnParams)} - {"seed"}
_RECALL_KEYS = {"phi", "eps_zero", "t_max_coef"}
_TOP_KEYS = {"preset", "C", "m_local", "m_global", "weights", "trials", "seed"}
KNOWN_KEYS = _GEN_KEYS | _LEARN_KEYS | _RECALL_KEYS | _TOP_KEYS


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorSpec
    C: int
    learn: LearnParams = field(default_factory=LearnParams)
    recall: RecallParams = field(default_factory=RecallParams)
    weights: tuple = (1, 2, 3, 4, 5)
    trials: int = 2000
    seed: int = 1
    m_local: int | None = None
    m_global: int | None = None
    preset: str = ""

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if not self.weights:
            raise ValidationError("the error-weight sweep is empty")
        if any(w < 0 or w > self.generator.n for w in self.weights):
            raise ValidationError(f"weights must lie in [0, n={self.generator.n}]")
        if self.C < 1:
            raise ValidationError("C must be >= 1")
        if self.m_local is None:
            object.__setattr__(self, "m_local", self.generator.block_size - self.generator.k)
        if self.m_global is None:
            object.__setattr__(self, "m_global", self.generator.n - self.generator.k_g)
        if self.m_local < 1 or self.m_global < 1:
            raise ValidationError("m_local and m_global must be >= 1")
        if self.recall.S != self.generator.S:
            object.__setattr__(self, "recall", replace(self.recall, S=self.generator.S))

    def flat(self) -> dict:
        """Every setting as one flat dict; round-trips through :func:`from_mapping`."""
        out = {"preset": self.preset, "C": self.C, "m_local": self.m_local,
               "m_global": self.m_global, "weights": list(self.weights),
               "trials": self.trials, "seed": self.seed}
        out.update({k: getattr(self.generator, k) for k in _GEN_KEYS})
        learn = asdict(self.learn)
        out.update({k: learn[k] for k in _LEARN_KEYS})
        out.update({k: getattr(self.recall, k) for k in _RECALL_KEYS})
        return dict(sorted(out.items()))

    def dumps(self) -> str:
        lines = []
        for key, value in self.flat().items():
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(map(str, value))
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"not a boolean: {value!r}")


def _as_optional(kind):
    def convert(value):
        if value is None or str(value).strip().lower() in ("", "none", "auto"):
            return None
        return kind(value)
    return convert


def _as_weights(value) -> tuple:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    return tuple(int(v) for v in str(value).replace(" ", "").split(",") if v)


_CONVERTERS = {
    "n": int, "L": int, "k": int, "k_g": int, "gamma_gen": int, "upsilon": int,
    "S": _as_optional(int), "d_star_cap": _as_optional(int),
    "correctable_blocks": _as_bool, "C": int,
    "epsilon_norm": float, "q_sparsity": _as_optional(float), "q_relaxed": _as_optional(float),
    "delta": float, "theta_coef": float, "alpha_mode": str, "alpha_fixed": float,
    "p_stop": float, "scale_p_by_norm": _as_bool, "sigma": float, "max_iters": int,
    "converged_fraction": float, "max_cosine": float,
    "phi": float, "eps_zero": float, "t_max_coef": int,
    "m_local": _as_optional(int), "m_global": _as_optional(int),
    "weights": _as_weights, "trials": int, "seed": int, "preset": str,
}


def from_mapping(values: dict) -> ExperimentConfig:
    """Build a config from ``preset`` defaults overridden by ``values``."""
    unknown = set(values) - KNOWN_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    preset = str(values.get("preset") or "desk")
    if preset not in PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    merged = dict(PRESETS[preset])
    merged.update(values)
    try:
        v = {k: _CONVERTERS[k](val) for k, val in merged.items() if k != "preset"}
    except (TypeError, ValueError) as err:
        if isinstance(err, ValidationError):
            raise
        raise ValidationError(f"bad config value: {err}") from None
    seed = v.get("seed", 1)
    gen_kw = {k: v[k] for k in _GEN_KEYS if k in v}
    learn_kw = {k: v[k] for k in _LEARN_KEYS if k in v}
    recall_kw = {k: v[k] for k in _RECALL_KEYS if k in v}
    return ExperimentConfig(
        generator=GeneratorSpec(seed=seed, **gen_kw),
        C=v["C"],
        learn=LearnParams(seed=seed, **learn_kw),
        recall=RecallParams(**recall_kw),
        weights=v.get("weights", (1, 2, 3, 4, 5)),
        trials=v.get("trials", 2000),
        seed=seed,
        m_local=v.get("m_local"),
        m_global=v.get("m_global"),
        preset=preset,
    )


def parse(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` and ``;`` start comments."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as err:
        raise ValidationError(f"unreadable config: {err}") from None
    return dict(parser["config"])


def load(path=None, **overrides) -> ExperimentConfig:
    values = parse(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    return from_mapping(values)
