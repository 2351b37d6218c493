"""Quenched experiments on sampled block-model graphs.

Labels are 0-based (``0 .. q-1``) everywhere, including the text format.
Messages live on directed edges, indexed by position in the CSR adjacency:
position ``e`` in ``indices[indptr[i]:indptr[i+1]]`` is the message ``i -> indices[e]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment

from ._rng import keyed_uniform
from .cavity_general import ModelParams

FINAL_KEY = 2**40  # sweep slot of the tiebreak stream reserved for the final labelling


@dataclass
class SbmGraph:
    n: int
    edges: np.ndarray  # (m, 2) int64, u < v, sorted, unique
    planted: np.ndarray  # (n,) int64
    revealed: np.ndarray  # (n,) bool
    params: ModelParams
    seed: int = 0
    _csr: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def q(self) -> int:
        return self.params.q

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def csr(self):
        """``(indptr, indices, src, rev)`` for the directed-edge view."""
        if self._csr is None:
            self._csr = _build_csr(self.n, self.edges)
        return self._csr


def _build_csr(n: int, edges: np.ndarray):
    u = np.concatenate([edges[:, 0], edges[:, 1]])
    v = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((v, u))
    u, v = u[order], v[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(u, minlength=n), out=indptr[1:])
    # reverse of (u, v) is (v, u); find it by sorting keys
    key = u * n + v
    rkey = v * n + u
    rev = np.searchsorted(key, rkey)
    return indptr, v.astype(np.int64), u.astype(np.int64), rev.astype(np.int64)


def group_sizes(n: int, q: int) -> np.ndarray:
    sizes = np.full(q, n // q, dtype=np.int64)
    sizes[: n % q] += 1
    return sizes


def _sample_within(rng, start: int, size: int, p: float) -> np.ndarray:
    total = size * (size - 1) // 2
    if total == 0 or p == 0:
        return np.empty((0, 2), dtype=np.int64)
    m = rng.binomial(total, p)
    t = rng.choice(total, m, replace=False) if m else np.empty(0, dtype=np.int64)
    # row i of the upper triangle holds pairs (i, i+1..size-1) and starts at row_start[i]
    rows = np.arange(size, dtype=np.int64)
    row_start = rows * size - rows * (rows + 1) // 2
    i = np.searchsorted(row_start, t, side="right") - 1
    j = t - row_start[i] + i + 1
    return np.stack([start + i, start + j], axis=1)


def _sample_between(rng, start_a: int, size_a: int, start_b: int, size_b: int, p: float):
    total = size_a * size_b
    if total == 0 or p == 0:
        return np.empty((0, 2), dtype=np.int64)
    m = rng.binomial(total, p)
    t = rng.choice(total, m, replace=False) if m else np.empty(0, dtype=np.int64)
    return np.stack([start_a + t // size_b, start_b + t % size_b], axis=1)


def generate(params: ModelParams, n: int, seed: int = 0) -> SbmGraph:
    """Sample a planted-partition graph with equal groups in O(edges) time.

    Groups are contiguous blocks of nodes; sizes differ by at most one.
    A fraction ``rho`` of nodes (rounded up) is marked revealed.
    """
    q = params.q
    if n < q:
        raise ValueError("need at least one node per group")
    p_in = q * params.alpha / n
    p_out = q * params.gamma / n
    if p_in > 1 or p_out > 1:
        raise ValueError(f"edge probability exceeds 1 (p_in={p_in:.3g}); n too small for c")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    sizes = group_sizes(n, q)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    parts = []
    for a in range(q):
        parts.append(_sample_within(rng, int(starts[a]), int(sizes[a]), p_in))
        for b in range(a + 1, q):
            parts.append(_sample_between(rng, int(starts[a]), int(sizes[a]), int(starts[b]),
                                         int(sizes[b]), p_out))
    edges = np.concatenate(parts).astype(np.int64)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    planted = np.repeat(np.arange(q, dtype=np.int64), sizes)
    revealed = np.zeros(n, dtype=bool)
    n_rev = int(math.ceil(params.rho * n))
    if n_rev:
        revealed[rng.choice(n, n_rev, replace=False)] = True
    return SbmGraph(n=n, edges=edges, planted=planted, revealed=revealed, params=params, seed=seed)


# --- message passing -------------------------------------------------------


@njit(inline="always")
def _pick(field_row, q, own, beta, literal, u):
    """Argmax label of ``field_row`` with a random tiebreak drawn from ``u``."""
    best = field_row[0]
    for lab in range(1, q):
        if field_row[lab] > best:
            best = field_row[lab]
    n_tied = 0
    own_tied = False
    for lab in range(q):
        if field_row[lab] == best:
            n_tied += 1
            if lab == own:
                own_tied = True
    if n_tied == 1 or beta == 1.0 or not own_tied:
        target = int(u * n_tied)
        for lab in range(q):
            if field_row[lab] == best:
                if target == 0:
                    return lab
                target -= 1
    n_wrong = n_tied - 1
    if literal:
        p_own = min(1.0, beta / (n_wrong + 1.0))
    else:
        p_own = beta / (beta + n_wrong)
    if u < p_own:
        return own
    target = min(int((u - p_own) / (1.0 - p_own) * n_wrong), n_wrong - 1)
    for lab in range(q):
        if field_row[lab] == best and lab != own:
            if target == 0:
                return lab
            target -= 1
    return own


@njit(cache=True)
def _sweep(order, src, dst, rev, msg, field, planted, revealed, q, beta, literal, seed, sweep):
    cav = np.empty(q, dtype=np.int64)
    changes = 0
    for e in order:
        i = src[e]
        if revealed[i]:
            new = planted[i]
        else:
            for lab in range(q):
                cav[lab] = field[i, lab]
            cav[msg[rev[e]]] -= 1
            new = _pick(cav, q, planted[i], beta, literal, keyed_uniform(seed, sweep, e))
        old = msg[e]
        if new != old:
            j = dst[e]
            field[j, old] -= 1
            field[j, new] += 1
            msg[e] = new
            changes += 1
    return changes


@njit(cache=True)
def _final_labels(field, planted, revealed, q, beta, literal, seed, key):
    n = field.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        if revealed[i]:
            out[i] = planted[i]
        else:
            out[i] = _pick(field[i], q, planted[i], beta, literal, keyed_uniform(seed, key, i))
    return out


def _field_from_messages(n: int, q: int, dst: np.ndarray, msg: np.ndarray) -> np.ndarray:
    return np.bincount(dst * q + msg, minlength=n * q).reshape(n, q).astype(np.int64)


@dataclass
class MaxProductResult:
    messages: np.ndarray  # label per directed edge (CSR order)
    labels: np.ndarray  # label per node
    converged: bool
    sweeps: int
    changes: list = field(default_factory=list)  # message changes per sweep


def initial_messages(graph: SbmGraph, init: str = "random", planted_fraction: float = 0.0,
                     seed: int = 0) -> np.ndarray:
    """Messages for ``init='random'`` (uniform labels) or ``'planted'`` (a fraction
    ``planted_fraction`` of directed edges carry the sender's planted label)."""
    _, _, src, _ = graph.csr()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    msg = rng.integers(0, graph.q, src.size).astype(np.int64)
    if init == "planted":
        take = rng.random(src.size) < planted_fraction
        msg[take] = graph.planted[src[take]]
    elif init != "random":
        raise ValueError(f"unknown init {init!r}")
    rev_src = graph.revealed[src]
    msg[rev_src] = graph.planted[src[rev_src]]
    return msg


def run_max_product(graph: SbmGraph, init: str = "random", planted_fraction: float = 0.0,
                    messages: np.ndarray | None = None, seed: int = 0,
                    max_sweeps: int = 1000) -> MaxProductResult:
    """Asynchronous zero-temperature message passing with random tiebreaking.

    Each sweep visits all directed edges in a fresh random order. Tiebreak
    draws are keyed by ``(seed, sweep, edge)``. Stops after a sweep with no
    message change or after ``max_sweeps``; non-convergence is reported, not
    raised, because argmax dynamics can oscillate.
    """
    indptr, dst, src, rev = graph.csr()
    q = graph.q
    if messages is None:
        msg = initial_messages(graph, init, planted_fraction, seed)
    else:
        msg = np.array(messages, dtype=np.int64)
        if msg.shape != src.shape:
            raise ValueError("messages must have one entry per directed edge")
    field_ = _field_from_messages(graph.n, q, dst, msg)
    beta = float(graph.params.beta)
    literal = graph.params.beta_mode == "literal"
    changes = []
    converged = False
    sweep = 0
    for sweep in range(1, max_sweeps + 1):
        order = np.random.default_rng(np.random.SeedSequence([seed, 2, sweep])).permutation(src.size)
        ch = _sweep(order, src, dst, rev, msg, field_, graph.planted, graph.revealed, q, beta,
                    literal, seed, sweep)
        changes.append(int(ch))
        if ch == 0:
            converged = True
            break
    labels = _final_labels(field_, graph.planted, graph.revealed, q, beta, literal, seed,
                           FINAL_KEY)
    return MaxProductResult(messages=msg, labels=labels, converged=converged, sweeps=sweep,
                            changes=changes)


# --- scoring ----------------------------------------------------------------


@dataclass
class OverlapReport:
    raw_agreement: float
    permuted_agreement: float
    normalized_overlap: float
    hamiltonian_energy: int
    permutation: list = field(default_factory=list)  # candidate label -> planted label


def potts_energy(graph: SbmGraph, labels: np.ndarray) -> int:
    """``-sum_{i,j} A_ij [s_i == s_j]`` over ordered pairs, i.e. twice the
    number of edges whose endpoints share a label, negated."""
    labels = np.asarray(labels)
    same = labels[graph.edges[:, 0]] == labels[graph.edges[:, 1]]
    return -2 * int(np.count_nonzero(same))


def score(graph: SbmGraph, labels) -> OverlapReport:
    """Agreement with the planted labels, maximised over label permutations."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (graph.n,):
        raise ValueError("need one label per node")
    q = graph.q
    conf = np.bincount(graph.planted * q + labels, minlength=q * q).reshape(q, q)
    rows, cols = linear_sum_assignment(conf, maximize=True)
    perm = int(conf[rows, cols].sum()) / graph.n
    raw = float(np.mean(labels == graph.planted))
    mapping = [0] * q
    for r, c in zip(rows, cols):
        mapping[int(c)] = int(r)
    return OverlapReport(raw_agreement=raw, permuted_agreement=perm,
                         normalized_overlap=(perm - 1.0 / q) / (1.0 - 1.0 / q),
                         hamiltonian_energy=potts_energy(graph, labels), permutation=mapping)


# --- text format -------------------------------------------------------------


def write_graph(graph: SbmGraph, path) -> None:
    """Header ``n q c delta rho seed``, then ``u v`` per edge, ``label <node> <planted>``
    per node and ``revealed <node>`` per revealed node."""
    p = graph.params
    lines = [f"{graph.n} {p.q} {p.c!r} {p.delta!r} {p.rho!r} {graph.seed}"]
    lines += [f"{u} {v}" for u, v in graph.edges.tolist()]
    lines += [f"label {i} {s}" for i, s in enumerate(graph.planted.tolist())]
    lines += [f"revealed {i}" for i in np.flatnonzero(graph.revealed).tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_graph(path) -> SbmGraph:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 6:
            raise ValueError("bad header: expected 'n q c delta rho seed'")
        n, q = int(header[0]), int(header[1])
        c, delta, rho = (float(x) for x in header[2:5])
        seed = int(header[5])
        edges, planted = [], np.full(n, -1, dtype=np.int64)
        revealed = np.zeros(n, dtype=bool)
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "label":
                planted[int(parts[1])] = int(parts[2])
            elif parts[0] == "revealed":
                revealed[int(parts[1])] = True
            else:
                edges.append((int(parts[0]), int(parts[1])))
    if np.any(planted < 0):
        raise ValueError("every node needs a label line")
    edge_arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    return SbmGraph(n=n, edges=edge_arr, planted=planted, revealed=revealed,
                    params=ModelParams(q=q, c=c, delta=delta, rho=rho), seed=seed)
