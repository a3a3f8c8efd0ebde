"""Truncated probability measures on degrees, degree/colour-pair products and
time-indexed paths.

Every measure carries an explicit truncation ``K_max`` and the mass that lies
beyond it.  Logarithms are natural throughout.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MASS_TOL = 1e-12


class MeasureError(ValueError):
    """Raised for invalid measure data (negative atoms, wrong total mass)."""


class StructureError(ValueError):
    """Raised when two measures do not share an index structure."""


class UndefinedConditional(ValueError):
    """Raised when conditioning on a colour pair that carries no mass."""

    def __init__(self, pair):
        super().__init__(f"conditional on colour pair {pair!r} is undefined (zero mass)")
        self.pair = pair


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class DegreeMeasure:
    """Probability measure on ``{0, ..., K_max}`` plus a tail atom.

    Parameters
    ----------
    probs : array_like
        ``probs[k]`` is the mass at degree ``k``.
    tail_mass : float
        Mass assigned to degrees strictly above ``K_max``.
    """

    probs: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 1 or probs.size == 0:
            raise MeasureError("probs must be a non-empty vector")
        tail = float(self.tail_mass)
        if not np.all(np.isfinite(probs)) or not math.isfinite(tail):
            raise MeasureError("measure entries must be finite")
        if np.any(probs < 0) or tail < 0:
            raise MeasureError("measure entries must be nonnegative")
        total = float(probs.sum()) + tail
        if abs(total - 1.0) > MASS_TOL:
            raise MeasureError(f"total mass {total!r} differs from 1")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "tail_mass", tail)

    @property
    def kmax(self) -> int:
        return self.probs.size - 1

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, k: int) -> float:
        if k < 0:
            raise IndexError(k)
        return float(self.probs[k]) if k <= self.kmax else 0.0

    def __eq__(self, other):
        if not isinstance(other, DegreeMeasure):
            return NotImplemented
        return self.tail_mass == other.tail_mass and np.array_equal(self.probs, other.probs)

    def __repr__(self):
        return f"DegreeMeasure(kmax={self.kmax}, probs={self.probs.tolist()!r}, tail_mass={self.tail_mass!r})"

    @classmethod
    def delta(cls, k: int, kmax: int | None = None) -> "DegreeMeasure":
        kmax = k if kmax is None else kmax
        probs = np.zeros(kmax + 1)
        probs[k] = 1.0
        return cls(probs)

    @classmethod
    def from_counts(cls, counts) -> "DegreeMeasure":
        counts = np.asarray(counts, dtype=float)
        return cls(counts / counts.sum())

    def with_kmax(self, kmax: int) -> "DegreeMeasure":
        """Re-truncate at ``kmax``.

        Shrinking folds the dropped atoms into the tail.  Growing is only
        possible when the tail is empty, since the tail's shape is unknown.
        """
        if kmax == self.kmax:
            return self
        if kmax < self.kmax:
            tail = self.tail_mass + float(self.probs[kmax + 1:].sum())
            return DegreeMeasure(self.probs[: kmax + 1], tail)
        if self.tail_mass > 0:
            raise StructureError("cannot extend a measure whose tail mass is positive")
        probs = np.zeros(kmax + 1)
        probs[: self.probs.size] = self.probs
        return DegreeMeasure(probs)

    def mean(self) -> float:
        """Mean over the truncated support (tail excluded)."""
        return float(np.arange(self.probs.size) @ self.probs)

    def coordinates(self) -> np.ndarray:
        """Atoms followed by the tail mass as one aggregated coordinate."""
        return np.append(self.probs, self.tail_mass)

    # serialisation
    def to_table(self) -> str:
        rows = ["k,value"]
        rows += [f"{k},{_fmt(v)}" for k, v in enumerate(self.probs)]
        rows.append(f"tail,{_fmt(self.tail_mass)}")
        return "\n".join(rows) + "\n"

    @classmethod
    def from_table(cls, text: str) -> "DegreeMeasure":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if lines[0] != "k,value":
            raise MeasureError(f"unexpected header {lines[0]!r}")
        probs, tail = [], 0.0
        for expected, line in enumerate(lines[1:]):
            key, value = line.split(",")
            if key == "tail":
                tail = float(value)
                continue
            if int(key) != expected:
                raise MeasureError("degree rows must be consecutive from 0")
            probs.append(float(value))
        return cls(probs, tail)

    def to_json(self) -> str:
        return json.dumps({"type": "DegreeMeasure", "probs": [_fmt(v) for v in self.probs],
                           "tail_mass": _fmt(self.tail_mass)})

    @classmethod
    def from_json(cls, text: str) -> "DegreeMeasure":
        obj = json.loads(text)
        if obj.get("type") != "DegreeMeasure":
            raise MeasureError("not a DegreeMeasure record")
        return cls([float(v) for v in obj["probs"]], float(obj["tail_mass"]))


def color_pairs(colors: Sequence[str]) -> list[tuple[str, str]]:
    """Colour pairs ``(parent colour, child colour)`` in row-major order."""
    return [(x1, x2) for x1 in colors for x2 in colors]


@dataclass(frozen=True, eq=False)
class PairMeasure:
    """Probability measure on degree x colour pair.

    ``probs[k, p]`` is the mass of degree ``k`` with colour pair ``pairs[p]``
    and ``tails[p]`` the mass beyond ``K_max`` for that pair.  Pairs are
    ``(parent colour, child colour)``.
    """

    probs: np.ndarray
    colors: tuple[str, ...] = ("x",)
    tails: np.ndarray | None = None

    def __post_init__(self):
        colors = tuple(str(c) for c in self.colors)
        if len(colors) == 0 or len(set(colors)) != len(colors):
            raise MeasureError("colour alphabet must be non-empty with distinct names")
        probs = np.array(self.probs, dtype=float)
        npairs = len(colors) ** 2
        if probs.ndim == 1 and npairs == 1:
            probs = probs[:, None]
        if probs.ndim != 2 or probs.shape[1] != npairs or probs.shape[0] == 0:
            raise MeasureError(f"probs must have shape (K_max+1, {npairs})")
        tails = np.zeros(npairs) if self.tails is None else np.array(self.tails, dtype=float).reshape(npairs)
        if not (np.all(np.isfinite(probs)) and np.all(np.isfinite(tails))):
            raise MeasureError("measure entries must be finite")
        if np.any(probs < 0) or np.any(tails < 0):
            raise MeasureError("measure entries must be nonnegative")
        total = float(probs.sum() + tails.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise MeasureError(f"total mass {total!r} differs from 1")
        object.__setattr__(self, "colors", colors)
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "tails", _frozen(tails))

    @property
    def kmax(self) -> int:
        return self.probs.shape[0] - 1

    @property
    def pairs(self) -> list[tuple[str, str]]:
        return color_pairs(self.colors)

    def pair_index(self, pair) -> int:
        if isinstance(pair, (int, np.integer)):
            return int(pair)
        x1, x2 = pair
        q = len(self.colors)
        return self.colors.index(x1) * q + self.colors.index(x2)

    def __eq__(self, other):
        if not isinstance(other, PairMeasure):
            return NotImplemented
        return (self.colors == other.colors and np.array_equal(self.probs, other.probs)
                and np.array_equal(self.tails, other.tails))

    def __repr__(self):
        return f"PairMeasure(colors={self.colors!r}, kmax={self.kmax})"

    @classmethod
    def from_degree_measure(cls, ell: DegreeMeasure, colors=("x",), pair_weights=None) -> "PairMeasure":
        """Product measure ``ell (x) pair_weights`` (one-colour default)."""
        npairs = len(colors) ** 2
        w = np.ones(1) if pair_weights is None else np.asarray(pair_weights, dtype=float)
        if w.size != npairs:
            raise StructureError("pair_weights length must equal |colours|^2")
        return cls(np.outer(ell.probs, w), colors, ell.tail_mass * w)

    @classmethod
    def from_conditionals(cls, pair_weights, conditionals: Sequence[DegreeMeasure],
                          colors: Sequence[str]) -> "PairMeasure":
        """Assemble ``omega(k, a) = w(a) * cond_a(k)`` from per-pair conditionals."""
        w = np.asarray(pair_weights, dtype=float)
        kmax = max(c.kmax for c in conditionals)
        probs = np.zeros((kmax + 1, w.size))
        tails = np.zeros(w.size)
        for p, cond in enumerate(conditionals):
            probs[: cond.kmax + 1, p] = w[p] * cond.probs
            tails[p] = w[p] * cond.tail_mass
        return cls(probs, tuple(colors), tails)

    def with_kmax(self, kmax: int) -> "PairMeasure":
        if kmax == self.kmax:
            return self
        if kmax < self.kmax:
            tails = self.tails + self.probs[kmax + 1:].sum(axis=0)
            return PairMeasure(self.probs[: kmax + 1], self.colors, tails)
        if np.any(self.tails > 0):
            raise StructureError("cannot extend a measure whose tail mass is positive")
        probs = np.zeros((kmax + 1, self.probs.shape[1]))
        probs[: self.kmax + 1] = self.probs
        return PairMeasure(probs, self.colors)

    def coordinates(self) -> np.ndarray:
        return np.vstack([self.probs, self.tails[None, :]]).ravel()

    def to_table(self) -> str:
        rows = ["k,parent_color,child_color,value"]
        for k in range(self.kmax + 1):
            for p, (x1, x2) in enumerate(self.pairs):
                rows.append(f"{k},{x1},{x2},{_fmt(self.probs[k, p])}")
        for p, (x1, x2) in enumerate(self.pairs):
            rows.append(f"tail,{x1},{x2},{_fmt(self.tails[p])}")
        return "\n".join(rows) + "\n"

    @classmethod
    def from_table(cls, text: str, colors: Sequence[str] | None = None) -> "PairMeasure":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if lines[0] != "k,parent_color,child_color,value":
            raise MeasureError(f"unexpected header {lines[0]!r}")
        rows = [ln.split(",") for ln in lines[1:]]
        if colors is None:
            seen: list[str] = []
            for _, x1, x2, _ in rows:
                for x in (x1, x2):
                    if x not in seen:
                        seen.append(x)
            colors = seen
        colors = tuple(colors)
        q = len(colors)
        kmax = max(int(r[0]) for r in rows if r[0] != "tail")
        probs = np.zeros((kmax + 1, q * q))
        tails = np.zeros(q * q)
        for key, x1, x2, value in rows:
            p = colors.index(x1) * q + colors.index(x2)
            if key == "tail":
                tails[p] = float(value)
            else:
                probs[int(key), p] = float(value)
        return cls(probs, colors, tails)

    def to_json(self) -> str:
        return json.dumps({"type": "PairMeasure", "colors": list(self.colors),
                           "probs": [[_fmt(v) for v in row] for row in self.probs],
                           "tails": [_fmt(v) for v in self.tails]})

    @classmethod
    def from_json(cls, text: str) -> "PairMeasure":
        obj = json.loads(text)
        if obj.get("type") != "PairMeasure":
            raise MeasureError("not a PairMeasure record")
        probs = [[float(v) for v in row] for row in obj["probs"]]
        return cls(np.array(probs).reshape(len(probs), -1), tuple(obj["colors"]),
                   [float(v) for v in obj["tails"]])


def pair_marginal(omega: PairMeasure) -> np.ndarray:
    """``omega_2(a) = sum_k omega(k, a)`` (tails included)."""
    return omega.probs.sum(axis=0) + omega.tails


def child_color_marginal(omega: PairMeasure) -> np.ndarray:
    """Colour law of the arriving vertex: sums ``omega_2`` over parent colours."""
    q = len(omega.colors)
    return pair_marginal(omega).reshape(q, q).sum(axis=0)


def degree_marginal(omega: PairMeasure) -> DegreeMeasure:
    return DegreeMeasure(omega.probs.sum(axis=1), float(omega.tails.sum()))


def marginals(omega: PairMeasure):
    """Return ``(omega_2, omega_{2,1}, degree marginal)``."""
    return pair_marginal(omega), child_color_marginal(omega), degree_marginal(omega)


def conditional(omega: PairMeasure, pair) -> DegreeMeasure:
    """Degree law given colour pair; raises :class:`UndefinedConditional`."""
    p = omega.pair_index(pair)
    mass = float(omega.probs[:, p].sum() + omega.tails[p])
    if mass <= 0:
        raise UndefinedConditional(omega.pairs[p])
    return DegreeMeasure(omega.probs[:, p] / mass, omega.tails[p] / mass)


def conditionals(omega: PairMeasure) -> dict[int, DegreeMeasure]:
    """All defined conditionals keyed by pair index."""
    out = {}
    for p in range(len(omega.pairs)):
        try:
            out[p] = conditional(omega, p)
        except UndefinedConditional:
            pass
    return out


def _as_reference(q, size: int) -> np.ndarray:
    """Reference weights over ``size`` atoms plus a tail coordinate."""
    if isinstance(q, DegreeMeasure):
        arr = q.coordinates()
    else:
        arr = np.asarray(q, dtype=float)
        if arr.ndim != 1:
            raise StructureError("reference must be one-dimensional")
        if arr.size == size:
            arr = np.append(arr, 0.0)
    if arr.size != size + 1:
        raise StructureError(f"reference has {arr.size} coordinates, expected {size} or {size + 1}")
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise MeasureError("reference weights must be nonnegative")
    return arr


def entropy_terms(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Elementwise ``p log(p/q)`` with ``0 log(0/x) = 0`` and ``+inf`` when ``q = 0 < p``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.zeros(np.broadcast(p, q).shape)
    pos = p > 0
    with np.errstate(divide="ignore"):
        out[pos] = p[pos] * (np.log(p[pos]) - np.log(q[pos]))
    return out


def relative_entropy(p: DegreeMeasure, q, include_tail: bool = True) -> float:
    """Relative entropy ``H(p || q)`` in nats.

    ``q`` need not be normalised: a :class:`DegreeMeasure`, a vector over
    ``0..K_max`` (tail weight taken as zero) or a vector with one extra
    trailing tail coordinate.  Tails are compared as a single aggregated
    atom unless ``include_tail`` is false.
    """
    ref = _as_reference(q, p.probs.size)
    coords = p.coordinates()
    if not include_tail:
        coords, ref = coords[:-1], ref[:-1]
    return float(entropy_terms(coords, ref).sum())


def tv_distance(p, q) -> float:
    """Total variation ``0.5 * sum |p - q|`` with tails as one coordinate."""
    if type(p) is not type(q):
        raise StructureError("measures must have the same type")
    if isinstance(p, PairMeasure) and p.colors != q.colors:
        raise StructureError("colour alphabets differ")
    if p.kmax != q.kmax:
        raise StructureError(f"truncations differ: {p.kmax} vs {q.kmax}")
    return 0.5 * float(np.abs(p.coordinates() - q.coordinates()).sum())


def tail(ell: DegreeMeasure) -> np.ndarray:
    """``1 - sum_{j<=k} ell(j)`` for ``k = 0..K_max``.

    Accumulated from the top (tail mass plus atoms above ``k``) so small
    tails keep full relative precision.
    """
    above = np.cumsum(ell.probs[::-1])[::-1]
    return np.append(above[1:], 0.0) + ell.tail_mass


def jensen_floor(reference) -> float:
    """``-log sum(reference)``: lower bound of ``H(p || reference)`` over probability ``p``."""
    return -math.log(float(np.sum(reference)))


@dataclass(frozen=True, eq=False)
class PathMeasure:
    """Time-gridded family of per-pair degree laws.

    On ``(grid[i-1], grid[i]]`` (with ``grid[-1] := 0``) the path equals
    the snapshot stored at ``grid[i]``, so integrals over ``[0, 1]`` are
    exact finite sums for piecewise-constant paths.

    Attributes
    ----------
    grid : (G,) increasing times in [0, 1], last equal to 1.
    probs : (G, K_max+1, P) conditional degree laws per pair.
    tails : (G, P) conditional tail masses.
    pair_weights : (G, P) colour-pair weights per time.
    defined : (G, P) bool; False where the conditional is undefined.
    """

    grid: np.ndarray
    probs: np.ndarray
    tails: np.ndarray
    pair_weights: np.ndarray
    colors: tuple[str, ...] = ("x",)
    defined: np.ndarray | None = field(default=None)

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        probs = np.array(self.probs, dtype=float)
        tails = np.array(self.tails, dtype=float)
        weights = np.array(self.pair_weights, dtype=float)
        colors = tuple(self.colors)
        npairs = len(colors) ** 2
        G = grid.size
        if G == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] != 1.0:
            raise MeasureError("grid must be strictly increasing in [0, 1] and end at 1")
        if probs.shape[0] != G or probs.shape[2] != npairs or tails.shape != (G, npairs) \
                or weights.shape != (G, npairs):
            raise StructureError("snapshot arrays do not match grid/colour shapes")
        defined = np.ones((G, npairs), bool) if self.defined is None else np.array(self.defined, bool)
        if np.any(probs < 0) or np.any(tails < 0) or np.any(weights < 0):
            raise MeasureError("path entries must be nonnegative")
        mass = probs.sum(axis=1) + tails
        if np.any(np.abs(mass[defined] - 1.0) > MASS_TOL):
            raise MeasureError("every defined snapshot must be a probability measure")
        if np.any(np.abs(weights.sum(axis=1) - 1.0) > MASS_TOL):
            raise MeasureError("pair weights must sum to 1 at every time")
        for name, val in (("grid", grid), ("probs", probs), ("tails", tails),
                          ("pair_weights", weights), ("defined", defined)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "colors", colors)

    @property
    def kmax(self) -> int:
        return self.probs.shape[1] - 1

    def interval_weights(self) -> np.ndarray:
        return np.diff(self.grid, prepend=0.0)

    def snapshot(self, i: int, pair) -> DegreeMeasure:
        p = pair if isinstance(pair, (int, np.integer)) else color_pairs(self.colors).index(tuple(pair))
        if not self.defined[i, p]:
            raise UndefinedConditional(color_pairs(self.colors)[p])
        return DegreeMeasure(self.probs[i, :, p], self.tails[i, p])

    @classmethod
    def constant(cls, conditionals: Sequence[DegreeMeasure], pair_weights, colors=("x",),
                 grid=(1.0,)) -> "PathMeasure":
        """Path equal to the same per-pair laws at every time."""
        grid = np.asarray(grid, dtype=float)
        kmax = max(c.kmax for c in conditionals)
        conds = [c.with_kmax(kmax) if c.kmax < kmax and c.tail_mass == 0 else c for c in conditionals]
        probs = np.stack([c.probs for c in conds], axis=1)
        tails = np.array([c.tail_mass for c in conds])
        G = grid.size
        return cls(grid, np.broadcast_to(probs, (G,) + probs.shape),
                   np.broadcast_to(tails, (G, tails.size)),
                   np.broadcast_to(np.asarray(pair_weights, float), (G, tails.size)), tuple(colors))

    @classmethod
    def piecewise(cls, grid, snapshots: Sequence[Sequence[DegreeMeasure]], pair_weights,
                  colors=("x",)) -> "PathMeasure":
        """Build from ``snapshots[i][p]`` at ``grid[i]``."""
        kmax = max(c.kmax for row in snapshots for c in row)
        probs = np.array([[c.with_kmax(kmax).probs if c.kmax < kmax else c.probs for c in row]
                          for row in snapshots]).transpose(0, 2, 1)
        tails = np.array([[c.tail_mass for c in row] for row in snapshots])
        w = np.asarray(pair_weights, dtype=float)
        if w.ndim == 1:
            w = np.broadcast_to(w, tails.shape)
        return cls(np.asarray(grid, float), probs, tails, w, tuple(colors))

    def to_table(self) -> str:
        rows = ["t,k,parent_color,child_color,value"]
        pairs = color_pairs(self.colors)
        for i, t in enumerate(self.grid):
            for p, (x1, x2) in enumerate(pairs):
                if not self.defined[i, p]:
                    continue
                for k in range(self.kmax + 1):
                    rows.append(f"{_fmt(t)},{k},{x1},{x2},{_fmt(self.probs[i, k, p])}")
                rows.append(f"{_fmt(t)},tail,{x1},{x2},{_fmt(self.tails[i, p])}")
                rows.append(f"{_fmt(t)},weight,{x1},{x2},{_fmt(self.pair_weights[i, p])}")
        return "\n".join(rows) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "type": "PathMeasure", "colors": list(self.colors),
            "grid": [_fmt(t) for t in self.grid],
            "probs": [[[_fmt(v) for v in row] for row in snap] for snap in self.probs],
            "tails": [[_fmt(v) for v in row] for row in self.tails],
            "pair_weights": [[_fmt(v) for v in row] for row in self.pair_weights],
            "defined": self.defined.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "PathMeasure":
        obj = json.loads(text)
        if obj.get("type") != "PathMeasure":
            raise MeasureError("not a PathMeasure record")
        f = np.vectorize(float)
        return cls(f(np.array(obj["grid"])), f(np.array(obj["probs"])), f(np.array(obj["tails"])),
                   f(np.array(obj["pair_weights"])), tuple(obj["colors"]), np.array(obj["defined"]))
