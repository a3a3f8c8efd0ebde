"""Sequential construction of (coloured) preferential attachment trees.

Vertex 1 is the root.  Vertex ``m = 2..n`` draws a colour and then one parent
among ``1..m-1`` with probability proportional to
``f_{m/n}(N(i), (X(i), X(m)))`` where ``N(i)`` is the in-degree of ``i``
before the new edge.

Because ``f`` is affine in the degree, the weight of a colour class is
``gamma * D_x + beta * V_x`` (total in-degree, vertex count), and inside the
class a parent is drawn either uniformly from the list of past attachment
hits (degree-proportional part) or uniformly over the class (constant part).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .weights import WeightSpec, check_color_law

CSV_HEADER = "m,parent,parent_color,child_color,parent_indeg"


class CorruptedLog(ValueError):
    """An event log is not a consistent attachment history."""


def make_rng(seed=None, replica: int | None = None) -> np.random.Generator:
    """PCG64 stream for ``(seed, replica)``; replicas get independent streams."""
    if replica is None:
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(replica),)))


@dataclass(frozen=True, eq=False)
class EventLog:
    """Complete attachment history of one tree.

    ``parents[e]`` (1-based) is the parent of vertex ``m = e + 2`` and
    ``parent_indeg[e]`` its in-degree just before that edge.
    ``vertex_colors[v - 1]`` is the colour index of vertex ``v``.
    """

    n: int
    colors: tuple[str, ...]
    vertex_colors: np.ndarray
    parents: np.ndarray
    parent_indeg: np.ndarray
    seed: object = None
    replica: int | None = None

    def __post_init__(self):
        for name in ("vertex_colors", "parents", "parent_indeg"):
            arr = np.array(getattr(self, name), dtype=np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return (self.n == other.n and self.colors == other.colors
                and np.array_equal(self.vertex_colors, other.vertex_colors)
                and np.array_equal(self.parents, other.parents)
                and np.array_equal(self.parent_indeg, other.parent_indeg))

    def __hash__(self):
        return hash((self.n, self.vertex_colors.tobytes(), self.parents.tobytes()))

    @property
    def arrivals(self) -> np.ndarray:
        return np.arange(2, self.n + 1)

    @property
    def parent_colors(self) -> np.ndarray:
        return self.vertex_colors[self.parents - 1]

    @property
    def child_colors(self) -> np.ndarray:
        return self.vertex_colors[1:]

    @property
    def pair_indices(self) -> np.ndarray:
        return self.parent_colors * len(self.colors) + self.child_colors

    def final_indegrees(self) -> np.ndarray:
        return np.bincount(self.parents - 1, minlength=self.n)

    def check(self) -> "EventLog":
        """Replay the log and raise :class:`CorruptedLog` on any inconsistency."""
        n = self.n
        if n < 2 or self.parents.size != n - 1 or self.parent_indeg.size != n - 1 \
                or self.vertex_colors.size != n:
            raise CorruptedLog("array lengths do not match n")
        if np.any(self.vertex_colors < 0) or np.any(self.vertex_colors >= len(self.colors)):
            raise CorruptedLog("colour index out of range")
        m = self.arrivals
        if np.any(self.parents < 1) or np.any(self.parents >= m):
            bad = int(np.argmax((self.parents < 1) | (self.parents >= m)))
            raise CorruptedLog(f"event m={bad + 2} has parent {self.parents[bad]} not below m")
        if not np.array_equal(self.parent_indeg, _running_counts(self.parents)):
            bad = int(np.argmax(self.parent_indeg != _running_counts(self.parents)))
            raise CorruptedLog(f"event m={bad + 2}: recorded parent in-degree does not match replay")
        return self

    def to_csv(self) -> str:
        m = self.arrivals.tolist()
        p = self.parents.tolist()
        d = self.parent_indeg.tolist()
        if len(self.colors) == 1:
            x = self.colors[0]
            body = "".join([f"{a},{b},{x},{x},{c}\n" for a, b, c in zip(m, p, d)])
        else:
            names = self.colors
            pc = [names[i] for i in self.parent_colors.tolist()]
            cc = [names[i] for i in self.child_colors.tolist()]
            body = "".join([f"{a},{b},{x},{y},{c}\n" for a, b, x, y, c in zip(m, p, pc, cc, d)])
        return CSV_HEADER + "\n" + body

    @classmethod
    def from_csv(cls, text: str, colors=None) -> "EventLog":
        """Parse and replay-validate a CSV export."""
        lines = text.strip().splitlines()
        if not lines or lines[0].strip() != CSV_HEADER:
            raise CorruptedLog("missing or wrong CSV header")
        rows = [ln.split(",") for ln in lines[1:] if ln.strip()]
        if colors is None:
            seen: list[str] = []
            for r in rows:
                for x in (r[2], r[3]):
                    if x not in seen:
                        seen.append(x)
            colors = tuple(seen) or ("x",)
        colors = tuple(colors)
        n = len(rows) + 1
        vc = np.full(n, -1, dtype=np.int64)
        parents = np.empty(n - 1, dtype=np.int64)
        indeg = np.empty(n - 1, dtype=np.int64)
        for e, r in enumerate(rows):
            m, p, a, b, d = int(r[0]), int(r[1]), r[2], r[3], int(r[4])
            if m != e + 2:
                raise CorruptedLog(f"row {e + 1}: expected m={e + 2}, got {m}")
            if not 1 <= p < m:
                raise CorruptedLog(f"event m={m} has parent {p} not below m")
            ia, ib = colors.index(a), colors.index(b)
            if vc[p - 1] == -1:
                vc[p - 1] = ia
            elif vc[p - 1] != ia:
                raise CorruptedLog(f"event m={m}: parent colour {a!r} contradicts earlier rows")
            vc[m - 1] = ib
            parents[e], indeg[e] = p, d
        if vc[0] == -1:
            raise CorruptedLog("root colour not determined")
        return cls(n, colors, vc, parents, indeg).check()


def _running_counts(parents: np.ndarray) -> np.ndarray:
    """Number of earlier occurrences of each entry (stable)."""
    order = np.argsort(parents, kind="stable")
    sorted_p = parents[order]
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_p)) + 1]
    group_start = np.repeat(starts, np.diff(np.r_[starts, sorted_p.size]))
    out = np.empty_like(parents)
    out[order] = np.arange(sorted_p.size) - group_start
    return out


def _draw_colors(rng: np.random.Generator, law: np.ndarray, size) -> np.ndarray:
    if law.size == 1:
        return np.zeros(size, dtype=np.int64)
    cum = np.cumsum(law)
    idx = np.searchsorted(cum / cum[-1], rng.random(size), side="right")
    return np.minimum(idx, law.size - 1)


def generate(spec: WeightSpec, mu=None, n: int = 2, seed=None, replica: int | None = None,
             method: str = "auto") -> EventLog:
    """Generate one coloured PA tree with ``n`` vertices.

    ``method="loop"`` forces the per-step two-stage sampler; ``"auto"`` uses
    a vectorised equivalent for one-colour specs (same uniforms, same output).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    spec.require_valid()
    mu = check_color_law(np.ones(1) if mu is None and len(spec.colors) == 1 else mu, spec.colors)
    rng = make_rng(seed, replica)
    q = len(spec.colors)
    colors = _draw_colors(rng, mu, n)
    u_class = rng.random(n - 1) if q > 1 else None
    u_mode = rng.random(n - 1)
    u_idx = rng.random(n - 1)
    buckets = spec.step_buckets(n)
    if q == 1 and method == "auto":
        parents = _plain_vectorised(spec, n, buckets, u_mode, u_idx)
        indeg = _running_counts(parents)
    else:
        parents, indeg = _two_stage_loop(spec, colors, buckets, u_class, u_mode, u_idx)
    return EventLog(n, spec.colors, colors, parents, indeg, seed, replica)


def _plain_vectorised(spec, n, buckets, u_mode, u_idx):
    e = np.arange(n - 1)
    D = e.astype(float)
    V = D + 1.0
    g = spec.gamma[buckets, 0]
    b = spec.beta[buckets, 0]
    gD = g * D
    total = gD + b * V
    if np.any(total <= 0):
        raise ValueError("all candidate parents have zero weight")
    hit = u_mode * total < gD
    ptr = (u_idx * D).astype(np.int64)
    parents = np.where(hit, -1, (u_idx * V).astype(np.int64) + 1)
    todo = np.flatnonzero(hit)
    while todo.size:
        resolved = parents[ptr[todo]]
        done = resolved >= 0
        parents[todo[done]] = resolved[done]
        todo = todo[~done]
    return parents


def _two_stage_loop(spec, colors, buckets, u_class, u_mode, u_idx):
    q = len(spec.colors)
    n = colors.size
    gamma = spec.gamma.tolist()
    beta = spec.beta.tolist()
    hits = [[] for _ in range(q)]
    members = [[] for _ in range(q)]
    members[colors[0]].append(1)
    indeg = [0] * (n + 1)
    parents = np.empty(n - 1, dtype=np.int64)
    rec = np.empty(n - 1, dtype=np.int64)
    col = colors.tolist()
    for e in range(n - 1):
        m = e + 2
        x = col[m - 1]
        gb, bb = gamma[buckets[e]], beta[buckets[e]]
        if q == 1:
            x1 = 0
        else:
            w = [gb[y * q + x] * len(hits[y]) + bb[y * q + x] * len(members[y]) for y in range(q)]
            tot = sum(w)
            if tot <= 0:
                raise ValueError("all candidate parents have zero weight")
            thr = u_class[e] * tot
            x1, acc = 0, w[0]
            while acc <= thr and x1 < q - 1:
                x1 += 1
                acc += w[x1]
            while w[x1] == 0:  # rounding guard: never land on an empty class
                x1 -= 1
        p = x1 * q + x
        D, V = len(hits[x1]), len(members[x1])
        gD = gb[p] * D
        total = gD + bb[p] * V
        if total <= 0:
            raise ValueError("all candidate parents have zero weight")
        if u_mode[e] * total < gD:
            parent = hits[x1][int(u_idx[e] * D)]
        else:
            parent = members[x1][int(u_idx[e] * V)]
        parents[e] = parent
        rec[e] = indeg[parent]
        indeg[parent] += 1
        hits[x1].append(parent)
        members[x].append(m)
    return parents, rec


def class_normalizer(spec: WeightSpec, bucket: int, parent_color: int, child_color: int,
                     in_degree_total: int, class_size: int) -> float:
    """``sum_i f(N(i), (x1, x2))`` over a colour class via ``gamma D + beta V``."""
    p = parent_color * len(spec.colors) + child_color
    return float(spec.gamma[bucket, p] * in_degree_total + spec.beta[bucket, p] * class_size)


def generate_tilted(spec: WeightSpec, mu, tilt, n: int, seed=None, replica: int | None = None) -> EventLog:
    """Generate under the tilted dynamics of ``tilt``.

    Colours follow ``mu~ = exp(h - U(h)) mu`` and parents are drawn with
    probability proportional to ``f~ = (c/f) exp(g) = f exp(delta)``.  The
    tilted weight is not affine in the degree, so each step sums over the
    per-class degree histograms.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    spec.require_valid()
    mu = check_color_law(np.ones(1) if mu is None and len(spec.colors) == 1 else mu, spec.colors)
    rng = make_rng(seed, replica)
    q = len(spec.colors)
    law = tilt.tilted_color_law(mu)
    colors = _draw_colors(rng, law, n)
    u_pick = rng.random(n - 1)
    u_idx = rng.random(n - 1)
    buckets = spec.step_buckets(n)
    tables = _TiltedTables(spec, tilt)
    # by_degree[x][k] -> list of vertices of colour x with in-degree k
    by_degree: list[dict[int, list[int]]] = [dict() for _ in range(q)]
    where: dict[int, int] = {}
    indeg = [0] * (n + 1)

    def add(v, x, k):
        lst = by_degree[x].setdefault(k, [])
        where[v] = len(lst)
        lst.append(v)

    def remove(v, x, k):
        lst = by_degree[x][k]
        i = where[v]
        last = lst.pop()
        if last != v:
            lst[i] = last
            where[last] = i
        if not lst:
            del by_degree[x][k]

    add(1, int(colors[0]), 0)
    parents = np.empty(n - 1, dtype=np.int64)
    rec = np.empty(n - 1, dtype=np.int64)
    for e in range(n - 1):
        m = e + 2
        x = int(colors[m - 1])
        b = int(buckets[e])
        cells, weights = [], []
        for y in range(q):
            p = y * q + x
            for k, lst in by_degree[y].items():
                cells.append((y, k))
                weights.append(len(lst) * tables.ftilde(b, k, p))
        cum = np.cumsum(weights)
        if cum[-1] <= 0:
            raise ValueError("all candidate parents have zero tilted weight")
        j = min(int(np.searchsorted(cum, u_pick[e] * cum[-1], side="right")), len(cells) - 1)
        y, k = cells[j]
        lst = by_degree[y][k]
        parent = lst[int(u_idx[e] * len(lst))]
        parents[e] = parent
        rec[e] = k
        remove(parent, y, k)
        indeg[parent] = k + 1
        add(parent, y, k + 1)
        add(m, x, 0)
    return EventLog(n, spec.colors, colors, parents, rec, seed, replica)


class _TiltedTables:
    """Cached ``f`` and ``f exp(delta)`` lookups, grown on demand."""

    def __init__(self, spec: WeightSpec, tilt, kmax: int = 32):
        self.spec, self.tilt = spec, tilt
        self._build(kmax)

    def _build(self, kmax):
        self.kmax = kmax
        self.f = [self.spec.f_table(b, kmax) for b in range(self.spec.n_buckets)]
        self.delta = [self.tilt.log_ratio_table(self.spec, b, kmax) for b in range(self.spec.n_buckets)]
        self.ft = [f * np.exp(d) for f, d in zip(self.f, self.delta)]
        self.ft_list = [t.tolist() for t in self.ft]

    def ensure(self, kmax):
        if kmax > self.kmax:
            self._build(max(kmax, 2 * self.kmax))

    def ftilde(self, b, k, p):
        if k > self.kmax:
            self.ensure(k)
        return self.ft_list[b][k][p]


# batched histogram engine ------------------------------------------------------

def simulate_attachment_counts(spec: WeightSpec, mu, n: int, reps: int, seed=None, tilt=None,
                               replica: int | None = None, chunk: int = 20000):
    """Simulate ``reps`` independent trees and return their attachment counts.

    Only the per-class degree histograms are tracked, which is all the law of
    the attachment measure (and of the likelihood ratio) depends on.

    Returns
    -------
    counts : (reps, K+1, P) int array
        ``counts[r, k, a]`` events of replica ``r`` whose parent had in-degree
        ``k`` and colour pair ``a``; ``K`` is the largest degree reached.
    llr : (reps,) float array or None
        ``log dP~/dP`` of each replica when ``tilt`` is given.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if reps < 1:
        raise ValueError("reps must be positive")
    spec.require_valid()
    mu = check_color_law(np.ones(1) if mu is None and len(spec.colors) == 1 else mu, spec.colors)
    rng = make_rng(seed, replica)
    parts = []
    for start in range(0, reps, chunk):
        parts.append(_simulate_chunk(spec, mu, n, min(chunk, reps - start), rng, tilt))
    kmax = max(c.shape[1] for c, _ in parts) - 1
    counts = np.zeros((reps, kmax + 1, spec.n_pairs), dtype=np.int64)
    llr = None if tilt is None else np.empty(reps)
    r0 = 0
    for c, l in parts:
        counts[r0:r0 + c.shape[0], : c.shape[1]] = c
        if tilt is not None:
            llr[r0:r0 + c.shape[0]] = l
        r0 += c.shape[0]
    return counts, llr


def _simulate_chunk(spec, mu, n, R, rng, tilt):
    q = len(spec.colors)
    P = q * q
    law = mu if tilt is None else tilt.tilted_color_law(mu)
    colors = _draw_colors(rng, law, (R, n))
    u = rng.random((R, n - 1))
    buckets = spec.step_buckets(n)
    kcap = n
    hist = np.zeros((R, q, kcap + 1), dtype=np.int32)
    rows = np.arange(R)
    hist[rows, colors[:, 0], 0] = 1
    counts = np.zeros((R, kcap, P), dtype=np.int64)
    f_tabs = [spec.f_table(b, kcap) for b in range(spec.n_buckets)]
    if tilt is not None:
        d_tabs = [tilt.log_ratio_table(spec, b, kcap) for b in range(spec.n_buckets)]
        ft_tabs = [f * np.exp(d) for f, d in zip(f_tabs, d_tabs)]
        llr = tilt.color_log_ratio(mu)[colors].sum(axis=1)
    else:
        ft_tabs, llr = f_tabs, None
    top = 0  # largest degree present in any replica
    for e in range(n - 1):
        m = e + 2
        b = buckets[e]
        K = top + 1
        xc = colors[:, m - 1]
        h = hist[:, :, :K]
        # weights[r, y, k] = hist * f~(k, (y, xc[r]))
        ft = ft_tabs[b][:K].T.reshape(q, q, K)  # [parent, child, k]
        w = h * ft[:, xc, :].transpose(1, 0, 2)
        flat = w.reshape(R, q * K)
        cum = np.cumsum(flat, axis=1)
        tot = cum[:, -1]
        idx = (cum <= (u[:, e] * tot)[:, None]).sum(axis=1)
        # u * tot can round up to tot; fall back to the last positive cell
        over = idx >= q * K
        if np.any(over):
            idx[over] = q * K - 1 - np.argmax(flat[over, ::-1] > 0, axis=1)
        y, k = np.divmod(idx, K)
        pair = y * q + xc
        counts[rows, k, pair] += 1
        if tilt is not None:
            f = f_tabs[b][:K].T.reshape(q, q, K)
            base = np.cumsum((h * f[:, xc, :].transpose(1, 0, 2)).reshape(R, -1), axis=1)[:, -1]
            llr += d_tabs[b][k, pair] - (np.log(tot) - np.log(base))
        hist[rows, y, k] -= 1
        hist[rows, y, k + 1] += 1
        hist[rows, xc, 0] += 1
        top = max(top, int(k.max()) + 1)
    return counts[:, : top], llr
