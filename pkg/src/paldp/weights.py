"""Linear attachment weights ``f_t(k, a) = gamma(t, a) k + beta(t, a)``.

Time dependence is piecewise constant on buckets ``(b_{i-1}, b_i]`` that
partition ``(0, 1]``.  Colour pairs are ordered ``(parent, child)`` row-major,
matching :func:`paldp.measures.color_pairs`.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .measures import color_pairs

C_TOL = 1e-12


class InvalidSpec(ValueError):
    """A weight specification failed one of the standing assumptions."""

    def __init__(self, report: "ValidationReport"):
        super().__init__("; ".join(f"{c.name}: {c.detail}" for c in report.failures))
        self.report = report


class ConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Coefficient tables of a linear weight function.

    Parameters
    ----------
    colors : sequence of str
        Colour alphabet; ``("x",)`` for the plain model.
    boundaries : sequence of float
        Right endpoints of the time buckets; the last must be 1.
    gamma, beta : array_like, shape (B, P)
        Per-bucket, per-pair coefficients (P = |colours|**2).  Scalars and
        (P,) vectors broadcast.
    allow_zero_beta : bool
        Accept ``beta = 0``.  Degree-0 vertices then have weight 0 and are
        never chosen as parents.
    """

    colors: tuple[str, ...]
    boundaries: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    allow_zero_beta: bool = False
    _c: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        colors = tuple(str(c) for c in self.colors)
        if not colors or len(set(colors)) != len(colors):
            raise ValueError("colour alphabet must be non-empty with distinct names")
        bounds = np.array(self.boundaries, dtype=float).ravel()
        if bounds.size == 0 or bounds[-1] != 1.0 or bounds[0] <= 0 or np.any(np.diff(bounds) <= 0):
            raise ValueError("bucket boundaries must increase strictly in (0, 1] and end at 1")
        shape = (bounds.size, len(colors) ** 2)
        gamma = np.array(np.broadcast_to(np.asarray(self.gamma, float), shape))
        beta = np.array(np.broadcast_to(np.asarray(self.beta, float), shape))
        if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(beta))):
            raise ValueError("weight coefficients must be finite")
        for name, val in (("boundaries", bounds), ("gamma", gamma), ("beta", beta)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "colors", colors)
        c = (gamma + beta).mean(axis=1)
        c.setflags(write=False)
        object.__setattr__(self, "_c", c)

    @classmethod
    def plain(cls, gamma: float = 1.0, beta: float = 1.0, **kw) -> "WeightSpec":
        return cls(("x",), (1.0,), gamma, beta, **kw)

    @classmethod
    def colored(cls, colors: Sequence[str], gamma, beta, boundaries=(1.0,), **kw) -> "WeightSpec":
        """Tables given as dicts ``{(x1, x2): value}`` or arrays."""
        pairs = color_pairs(colors)

        def table(v):
            if isinstance(v, dict):
                return np.array([v[p] for p in pairs], dtype=float)
            return v

        return cls(tuple(colors), boundaries, table(gamma), table(beta), **kw)

    @property
    def n_buckets(self) -> int:
        return self.boundaries.size

    @property
    def n_pairs(self) -> int:
        return len(self.colors) ** 2

    @property
    def pairs(self) -> list[tuple[str, str]]:
        return color_pairs(self.colors)

    @property
    def c(self) -> np.ndarray:
        """``c_b = gamma_b(a) + beta_b(a)`` per bucket (averaged over pairs)."""
        return self._c

    @property
    def time_constant(self) -> bool:
        return self.n_buckets == 1

    def pair_index(self, pair) -> int:
        if isinstance(pair, (int, np.integer)):
            return int(pair)
        x1, x2 = pair
        q = len(self.colors)
        return self.colors.index(x1) * q + self.colors.index(x2)

    def bucket(self, t: float) -> int:
        """Index of the bucket ``(b_{i-1}, b_i]`` containing ``t``."""
        if not (0.0 < t <= 1.0):
            raise ValueError(f"time {t!r} outside (0, 1]")
        return int(np.searchsorted(self.boundaries, t, side="left"))

    def step_buckets(self, n: int) -> np.ndarray:
        """Bucket of ``t = m/n`` for each arrival ``m = 2..n``."""
        return np.searchsorted(self.boundaries, np.arange(2, n + 1) / n, side="left")

    def f_table(self, bucket: int, kmax: int) -> np.ndarray:
        """``f(k, a)`` for ``k = 0..kmax`` as a (kmax+1, P) array."""
        k = np.arange(kmax + 1, dtype=float)[:, None]
        return self.gamma[bucket] * k + self.beta[bucket]

    def evaluate(self, t: float, k: int, pair=0) -> float:
        b = self.bucket(t)
        p = self.pair_index(pair)
        return float(self.gamma[b, p] * k + self.beta[b, p])

    def require_valid(self) -> "WeightSpec":
        report = validate(self)
        if not report.ok:
            raise InvalidSpec(report)
        return self

    def to_config(self) -> str:
        lines = ["[colors]", "alphabet = " + ", ".join(self.colors), "", "[weights]",
                 "buckets = " + ", ".join(repr(float(b)) for b in self.boundaries)]
        for name, tab in (("gamma", self.gamma), ("beta", self.beta)):
            for p, (x1, x2) in enumerate(self.pairs):
                key = name if self.n_pairs == 1 else f"{name}.{x1}.{x2}"
                lines.append(f"{key} = " + ", ".join(repr(float(v)) for v in tab[:, p]))
        if self.allow_zero_beta:
            lines.append("allow_zero_beta = true")
        return "\n".join(lines) + "\n"


def evaluate(spec: WeightSpec, t: float, k: int, pair=0) -> float:
    """``gamma_b(a) k + beta_b(a)`` for the bucket ``b`` containing ``t``."""
    return spec.evaluate(t, k, pair)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate(spec: WeightSpec) -> ValidationReport:
    """Check the standing assumptions on a weight specification.

    Conditions: constant ``gamma + beta`` across pairs within each bucket;
    ``min c >= 1``; ``gamma > 0``; ``beta > 0`` (or ``>= 0`` when allowed);
    finite ``sup_a int log(1 + beta/gamma) dt``.  With ``gamma > 0`` the
    series ``sum_k 1/(gamma k + beta)`` diverges, so persistence holds.
    """
    checks = []
    pairs = spec.pairs
    s = spec.gamma + spec.beta
    bad = np.argwhere(np.abs(s - s[:, :1]) > C_TOL)
    if bad.size:
        b, p = bad[0]
        checks.append(Check("constant_c", False,
                            f"bucket {b}: gamma+beta={s[b, p]!r} at pair {pairs[p]} "
                            f"but {s[b, 0]!r} at pair {pairs[0]}"))
    else:
        checks.append(Check("constant_c", True))
    b = int(np.argmin(spec.c))
    checks.append(Check("min_c_ge_1", bool(spec.c[b] >= 1.0),
                        "" if spec.c[b] >= 1.0 else f"c={spec.c[b]!r} < 1 in bucket {b}"))
    bad = np.argwhere(spec.gamma <= 0)
    checks.append(Check("gamma_positive", bad.size == 0,
                        "" if bad.size == 0 else f"gamma<=0 at bucket {bad[0][0]}, pair {pairs[bad[0][1]]}"))
    floor_ok = (spec.beta >= 0) if spec.allow_zero_beta else (spec.beta > 0)
    bad = np.argwhere(~floor_ok)
    checks.append(Check("beta_positive", bad.size == 0,
                        "" if bad.size == 0 else f"beta={spec.beta[tuple(bad[0])]!r} at bucket {bad[0][0]}, "
                                                 f"pair {pairs[bad[0][1]]}"))
    with np.errstate(divide="ignore", invalid="ignore"):
        widths = np.diff(spec.boundaries, prepend=0.0)[:, None]
        integral = (np.log1p(spec.beta / spec.gamma) * widths).sum(axis=0)
    finite = bool(np.all(np.isfinite(integral)))
    checks.append(Check("log_ratio_integrable", finite, "" if finite else "sup_a int log(1+beta/gamma) dt = inf"))
    checks.append(Check("persistent", bool(np.all(spec.gamma > 0)),
                        "" if np.all(spec.gamma > 0) else "sum_k 1/f(k) may converge when gamma = 0"))
    return ValidationReport(checks)


# configuration files ---------------------------------------------------------

_WEIGHT_KEYS = {"buckets", "gamma", "beta", "allow_zero_beta"}
_COLOR_KEYS = {"alphabet", "law"}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def read_config(text: str):
    """Parse a ``[colors]``/``[weights]``/``[experiment]`` config.

    Returns ``(spec, mu, experiment)`` where ``mu`` is the colour law (uniform
    when omitted) and ``experiment`` a dict of raw strings.  Unknown sections
    or keys are rejected.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(parser.sections()) - {"colors", "weights", "experiment"}
    if unknown:
        raise ConfigError(f"unknown section(s): {sorted(unknown)}")
    colors_sec = parser["colors"] if parser.has_section("colors") else {}
    for key in colors_sec:
        if key not in _COLOR_KEYS:
            raise ConfigError(f"unknown key in [colors]: {key!r}")
    colors = tuple(x.strip() for x in colors_sec.get("alphabet", "x").split(",") if x.strip())
    if not parser.has_section("weights"):
        raise ConfigError("missing [weights] section")
    wsec = parser["weights"]
    bounds = _floats(wsec.get("buckets", "1.0"))
    B, pairs = len(bounds), color_pairs(colors)
    tables = {}
    for name in ("gamma", "beta"):
        tab = np.full((B, len(pairs)), np.nan)
        if name in wsec:
            tab[:] = np.array(_broadcast_bucket(_floats(wsec[name]), B, name))[:, None]
        tables[name] = tab
    for key, value in wsec.items():
        head, _, rest = key.partition(".")
        if key in _WEIGHT_KEYS:
            continue
        if head not in ("gamma", "beta") or rest.count(".") != 1:
            raise ConfigError(f"unknown key in [weights]: {key!r}")
        x1, x2 = rest.split(".")
        if (x1, x2) not in pairs:
            raise ConfigError(f"unknown colour pair in key {key!r}")
        tables[head][:, pairs.index((x1, x2))] = _broadcast_bucket(_floats(value), B, key)
    for name, tab in tables.items():
        if np.any(np.isnan(tab)):
            raise ConfigError(f"{name} not specified for every bucket and colour pair")
    allow = wsec.get("allow_zero_beta", "false").strip().lower() in ("1", "true", "yes")
    spec = WeightSpec(colors, bounds, tables["gamma"], tables["beta"], allow_zero_beta=allow)
    if "law" in colors_sec:
        mu = np.array(_floats(colors_sec["law"]))
        if mu.size != len(colors):
            raise ConfigError("colour law length differs from alphabet size")
    else:
        mu = np.full(len(colors), 1.0 / len(colors))
    experiment = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    return spec, mu, experiment


def _broadcast_bucket(values: list[float], B: int, key: str) -> list[float]:
    if len(values) == 1:
        return values * B
    if len(values) != B:
        raise ConfigError(f"{key}: expected 1 or {B} values, got {len(values)}")
    return values


def check_color_law(mu, colors) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (len(colors),):
        raise ValueError("colour law must have one entry per colour")
    if np.any(mu <= 0) or not math.isclose(mu.sum(), 1.0, abs_tol=1e-12):
        raise ValueError("colour law must be a positive probability vector")
    return mu
