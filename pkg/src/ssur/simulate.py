"""Synthetic data for simulation studies.

Two generators share one scenario description: one adds a per-response
intercept, the other adds group random effects.  Residual rows are
Gaussian with precision drawn from a G-Wishart law on a decomposable
response graph, or with a fixed block-compound-symmetric covariance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.stats import invwishart

from .data import Dataset, cell_index, edges_to_matrix
from .graph import DecomposableGraph, GraphError, build_junction_tree, is_decomposable


class ScenarioError(ValueError):
    """Invalid simulation scenario."""


@dataclass(frozen=True)
class AssociationBlock:
    """A set of responses all associated with the same set of predictors (0-based indices)."""

    responses: tuple
    predictors: tuple

    def cells(self, p: int) -> np.ndarray:
        return np.array([cell_index(k, j, p) for j in self.responses for k in self.predictors],
                        dtype=np.int64)


@dataclass(frozen=True)
class Scenario:
    """Dimensions, true structure and generating laws of one simulation design."""

    n: int
    p: int
    m: int
    blocks: tuple
    graph: DecomposableGraph
    T: int = 4
    coef_mean: float = 0.5
    coef_sd: float = 0.2
    re_sd: float = 2.0
    group_probs: tuple = (0.1, 0.2, 0.3, 0.4)
    gw_df: float = 3.0
    scale_offdiag: float = 0.9
    noise: str = "gwishart"
    sigma_u_sizes: tuple = (8, 4, 8)
    sigma_u_offdiag: tuple = (0.5, 0.6)
    seed: int | None = None
    name: str = "custom"

    def __post_init__(self):
        if min(self.n, self.p, self.m) < 1:
            raise ScenarioError("n, p and m must be positive")
        if self.graph.m != self.m:
            raise ScenarioError(f"graph has {self.graph.m} vertices, scenario has m={self.m}")
        if not is_decomposable(self.graph):
            raise ScenarioError("response graph is not decomposable")
        probs = np.asarray(self.group_probs, dtype=float)
        if probs.size != self.T or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-12):
            raise ScenarioError("group probabilities must be T nonnegative values summing to 1")
        for b in self.blocks:
            if not all(0 <= j < self.m for j in b.responses) or not all(0 <= k < self.p for k in b.predictors):
                raise ScenarioError("association block index out of range")
        if self.noise not in ("gwishart", "sigma_u"):
            raise ScenarioError(f"noise: expected gwishart or sigma_u, got {self.noise!r}")
        if self.noise == "sigma_u" and sum(self.sigma_u_sizes[:2]) > self.m:
            raise ScenarioError("sigma_u block sizes exceed m")

    @property
    def gamma(self) -> np.ndarray:
        """True p x m indicator pattern: the union of the association blocks."""
        g = np.zeros((self.p, self.m), dtype=np.int8)
        for b in self.blocks:
            g[np.ix_(list(b.predictors), list(b.responses))] = 1
        return g

    def scale_matrix(self) -> np.ndarray:
        M = np.full((self.m, self.m), self.scale_offdiag)
        np.fill_diagonal(M, 1.0)
        return M

    def noise_graph(self) -> DecomposableGraph:
        """Graph whose edges carry residual dependence under the chosen noise mode."""
        if self.noise == "gwishart":
            return self.graph
        return DecomposableGraph(self.m, _block_edges(_sigma_u_groups(self.m, self.sigma_u_sizes)[:2]))


def _ranges(*spans):
    """1-based inclusive spans to a 0-based index tuple."""
    out = []
    for a, b in spans:
        out.extend(range(a - 1, b))
    return tuple(out)


def _block_edges(groups):
    return [(a, b) for g in groups for i, a in enumerate(g) for b in g[i + 1:]]


def _sigma_u_groups(m, sizes):
    out, start = [], 0
    for s in sizes[:2]:
        out.append(tuple(range(start, start + s)))
        start += s
    out.append(tuple(range(start, m)))
    return out


def _make_blocks(response_groups, predictor_groups):
    blocks = []
    for resp, preds in zip(response_groups, predictor_groups):
        for span in preds:
            blocks.append(AssociationBlock(_ranges(resp), _ranges(span)))
    return tuple(blocks)


def full_scenario(**overrides) -> Scenario:
    """Full-scale design: n = 250, p = 300, m = 20, three response groups, six predictor groups.

    The third response group's middle predictor span is taken as x70..x90.
    """
    responses = [(1, 5), (6, 12), (13, 20)]
    predictors = [
        [(1, 5), (30, 50), (51, 60), (110, 120)],
        [(10, 20), (51, 60), (70, 90), (110, 120)],
        [(30, 50), (70, 90), (110, 120)],
    ]
    graph_blocks = [_ranges(s) for s in [(1, 3), (4, 5), (6, 9), (10, 12), (13, 16), (17, 20)]]
    kw = dict(n=250, p=300, m=20, blocks=_make_blocks(responses, predictors),
              graph=DecomposableGraph(20, _block_edges(graph_blocks)), name="full")
    kw.update(overrides)
    return Scenario(**kw)


def desk_scenario(**overrides) -> Scenario:
    """Reduced design: n = 150, p = 100, m = 10 with the same block layout scaled down."""
    responses = [(1, 3), (4, 6), (7, 10)]
    predictors = [
        [(1, 2), (10, 16), (17, 20), (37, 40)],
        [(4, 7), (17, 20), (24, 30), (37, 40)],
        [(10, 16), (24, 30), (37, 40)],
    ]
    graph_blocks = [_ranges(s) for s in [(1, 2), (3, 5), (6, 7), (8, 10)]]
    kw = dict(n=150, p=100, m=10, blocks=_make_blocks(responses, predictors),
              graph=DecomposableGraph(10, _block_edges(graph_blocks)), sigma_u_sizes=(4, 2, 4),
              name="desk")
    kw.update(overrides)
    return Scenario(**kw)


PRESETS = {"full": full_scenario, "desk": desk_scenario}


# ---------------------------------------------------------------- noise laws


def _inv_wishart(df, scale, rng) -> np.ndarray:
    return np.atleast_2d(invwishart(df=df, scale=scale).rvs(random_state=rng))


def sample_g_wishart(graph: DecomposableGraph, df: float, M, rng) -> np.ndarray:
    """Precision matrix from the G-Wishart law with density proportional to
    ``|P|^((df - 2)/2) exp(-tr(M P) / 2)`` on matrices with zeros at non-edges.

    Draws the covariance clique by clique along a perfect sequence (each
    clique's residual block given its separator), then assembles the
    precision from clique and separator inverses so that non-edge
    entries are never written.
    """
    M = np.asarray(M, dtype=float)
    m = graph.m
    if M.shape != (m, m):
        raise ValueError(f"scale matrix must be {m} x {m}")
    if not np.allclose(M, M.T, rtol=0, atol=0):
        raise ValueError("scale matrix must be symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValueError("scale matrix must be positive definite") from None
    if not df > 0:
        raise ValueError("df must be positive")
    if not is_decomposable(graph):
        raise GraphError("graph is not decomposable")
    jt = build_junction_tree(graph)
    Sigma = np.zeros((m, m))
    for C, S in zip(jt.cliques, jt.separators):
        S = list(S)
        R = [v for v in C if v not in S]
        k = df + len(C) - 1
        if not S:
            Sigma[np.ix_(R, R)] = _inv_wishart(k, M[np.ix_(R, R)], rng)
            continue
        M_ss = M[np.ix_(S, S)]
        M_rs = M[np.ix_(R, S)]
        A = np.linalg.solve(M_ss, M_rs.T).T
        cond = _inv_wishart(k, M[np.ix_(R, R)] - A @ M_rs.T, rng)
        left = np.linalg.cholesky(cond)
        right = np.linalg.cholesky(np.linalg.inv(M_ss))
        regress = A + left @ rng.standard_normal((len(R), len(S))) @ right.T
        Sig_s = Sigma[np.ix_(S, S)]
        Sigma[np.ix_(R, S)] = regress @ Sig_s
        Sigma[np.ix_(S, R)] = Sigma[np.ix_(R, S)].T
        Sigma[np.ix_(R, R)] = cond + regress @ Sig_s @ regress.T
    P = np.zeros((m, m))
    for C, S in zip(jt.cliques, jt.separators):
        C = list(C)
        P[np.ix_(C, C)] += np.linalg.inv(Sigma[np.ix_(C, C)])
        if S:
            S = list(S)
            P[np.ix_(S, S)] -= np.linalg.inv(Sigma[np.ix_(S, S)])
    P = 0.5 * (P + P.T)
    return P


def sigma_u_covariance(m: int, sizes=(8, 4, 8), offdiag=(0.5, 0.6)) -> np.ndarray:
    """Block-diagonal covariance: two compound-symmetric blocks, identity on the rest."""
    S = np.eye(m)
    for g, r in zip(_sigma_u_groups(m, sizes)[:2], offdiag):
        idx = np.ix_(g, g)
        S[idx] = r
        S[g, g] = 1.0
    return S


def _noise_covariance(sc: Scenario, rng):
    """Returns (covariance, precision) of residual rows for the scenario's noise mode."""
    if sc.noise == "gwishart":
        P = sample_g_wishart(sc.graph, sc.gw_df, sc.scale_matrix(), rng)
        return np.linalg.inv(P), P
    S = sigma_u_covariance(sc.m, sc.sigma_u_sizes, sc.sigma_u_offdiag)
    return S, np.linalg.inv(S)


def correlated_noise(std_normal, cov) -> np.ndarray:
    """Right-multiply iid standard normal rows by the transposed lower Cholesky factor of ``cov``."""
    L = np.linalg.cholesky(cov)
    return std_normal @ L.T


# ---------------------------------------------------------------- generators


@dataclass
class Truth:
    gamma: np.ndarray
    B: np.ndarray
    graph: DecomposableGraph
    precision: np.ndarray
    covariance: np.ndarray
    alpha: np.ndarray | None = None
    B0: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


@dataclass
class Simulation:
    train: Dataset
    validation: Dataset
    truth: Truth
    scenario: Scenario


def _coefficients(sc: Scenario, rng):
    B = rng.normal(sc.coef_mean, sc.coef_sd, size=(sc.p, sc.m)) * sc.gamma
    return B


def simulate_alg1(scenario: Scenario, rng=None) -> Simulation:
    """Intercept plus sparse regression plus correlated noise; validation replicate of equal size."""
    sc = scenario
    rng = np.random.default_rng(sc.seed) if rng is None else rng
    gamma = sc.gamma
    X = rng.standard_normal((sc.n, sc.p))
    alpha = rng.normal(sc.coef_mean, sc.coef_sd, size=sc.m)
    B = _coefficients(sc, rng)
    U_std = rng.standard_normal((sc.n, sc.m))
    cov, P = _noise_covariance(sc, rng)
    U = correlated_noise(U_std, cov)
    Y = alpha[None, :] + X @ B + U
    Xv = rng.standard_normal((sc.n, sc.p))
    Yv = alpha[None, :] + Xv @ B + correlated_noise(rng.standard_normal((sc.n, sc.m)), cov)
    truth = Truth(gamma, B, sc.noise_graph(), P, cov, alpha=alpha)
    return Simulation(Dataset(Y, X), Dataset(Yv, Xv), truth, sc)


def _groups(sc: Scenario, rng, n):
    labels = rng.choice(sc.T, size=n, p=np.asarray(sc.group_probs, dtype=float))
    Z = np.zeros((n, sc.T))
    Z[np.arange(n), labels] = 1.0
    return Z


def simulate_alg2(scenario: Scenario, rng=None) -> Simulation:
    """Sparse regression plus group random effects plus correlated noise (no intercept)."""
    sc = scenario
    if sc.T < 1:
        raise ScenarioError("random-effect design needs T >= 1")
    rng = np.random.default_rng(sc.seed) if rng is None else rng
    gamma = sc.gamma
    X = rng.standard_normal((sc.n, sc.p))
    B = _coefficients(sc, rng)
    Z = _groups(sc, rng, sc.n)
    B0 = rng.normal(0.0, sc.re_sd, size=(sc.T, sc.m))
    U_std = rng.standard_normal((sc.n, sc.m))
    cov, P = _noise_covariance(sc, rng)
    Y = X @ B + Z @ B0 + correlated_noise(U_std, cov)
    Xv = rng.standard_normal((sc.n, sc.p))
    Zv = _groups(sc, rng, sc.n)
    Yv = Xv @ B + Zv @ B0 + correlated_noise(rng.standard_normal((sc.n, sc.m)), cov)
    truth = Truth(gamma, B, sc.noise_graph(), P, cov, B0=B0)
    return Simulation(Dataset(Y, X, Z), Dataset(Yv, Xv, Zv), truth, sc)


# ---------------------------------------------------------------- MRF structure


def mrf_edge_blocks(scenario: Scenario) -> list:
    """True structure edges, one block per association pattern: every pair of cells in a block."""
    out = []
    p = scenario.p
    for b in scenario.blocks:
        cells = b.cells(p)
        i, j = np.triu_indices(cells.size, k=1)
        rows = np.column_stack([cells[i], cells[j], np.ones(i.size)]).astype(float)
        lo = np.minimum(rows[:, 0], rows[:, 1])
        hi = np.maximum(rows[:, 0], rows[:, 1])
        rows[:, 0], rows[:, 1] = lo, hi
        out.append(rows[np.lexsort((rows[:, 1], rows[:, 0]))])
    return out


def mrf_structure(scenario: Scenario) -> sp.csr_matrix:
    blocks = mrf_edge_blocks(scenario)
    edges = np.vstack(blocks) if blocks else np.zeros((0, 3))
    return edges_to_matrix(edges, scenario.m * scenario.p)


PERTURB_MODES = ("uniform-delete", "block-delete", "add-noise", "tail-delete")


def uniform_delete_positions(n_edges: int, fraction: float) -> np.ndarray:
    """0-based positions removed by strided deletion.

    Position ``1 + i (1 - 1/E) / f`` (1-based, truncated) for
    ``i = 0, ..., floor(f E)``; repeats collapse.
    """
    if n_edges == 0 or fraction == 0:
        return np.zeros(0, dtype=np.int64)
    count = math.floor(fraction * n_edges + 1e-9)
    stride = (1.0 - 1.0 / n_edges) / fraction
    pos = np.floor(1.0 + stride * np.arange(count + 1) + 1e-9).astype(np.int64) - 1
    return np.unique(np.clip(pos, 0, n_edges - 1))


def n_noise_edges(size: int, fraction: float) -> int:
    """Number of noise edges requested: floor(fraction * size (size - 1) / 2)."""
    return math.floor(fraction * size * (size - 1) / 2 + 1e-9)


def perturb_mrf_graph(blocks, size: int, mode: str, fraction: float, rng=None) -> list:
    """Perturbed copy of an MRF edge list given as blocks of ``(v, v2, weight)`` rows.

    ``uniform-delete`` drops a strided subset of the concatenated edge
    list; ``block-delete`` drops the last ``ceil(f * #blocks)`` blocks;
    ``tail-delete`` drops the last ``ceil(f * E)`` edges; ``add-noise``
    appends a block of ``floor(f * size (size - 1) / 2)`` distinct random
    non-edges with unit weight.  Returns the new list of blocks.
    """
    if mode not in PERTURB_MODES:
        raise ValueError(f"mode: expected one of {', '.join(PERTURB_MODES)}, got {mode!r}")
    if not (0.0 <= fraction <= 1.0) or not math.isfinite(fraction):
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    blocks = [np.asarray(b, dtype=float).reshape(-1, 3) for b in blocks]
    sizes = [b.shape[0] for b in blocks]
    if mode == "block-delete":
        drop = math.ceil(fraction * len(blocks) - 1e-9)
        return [b.copy() for b in blocks[:len(blocks) - drop]]
    if mode in ("uniform-delete", "tail-delete"):
        total = sum(sizes)
        if mode == "uniform-delete":
            gone = uniform_delete_positions(total, fraction)
        else:
            k = math.ceil(fraction * total - 1e-9)
            gone = np.arange(total - k, total)
        keep = np.ones(total, dtype=bool)
        keep[gone] = False
        out, start = [], 0
        for b, s in zip(blocks, sizes):
            out.append(b[keep[start:start + s]])
            start += s
        return out
    rng = np.random.default_rng() if rng is None else rng
    want = n_noise_edges(size, fraction)
    if want == 0:
        return [b.copy() for b in blocks]
    npairs = size * (size - 1) // 2
    existing = set()
    for b in blocks:
        for v, v2 in b[:, :2].astype(np.int64):
            existing.add(_pair_id(min(v, v2), max(v, v2), size))
    if want > npairs - len(existing):
        raise ValueError(f"cannot add {want} noise edges: only {npairs - len(existing)} non-edges")
    chosen = set()
    while len(chosen) < want:
        draw = rng.integers(npairs, size=max(2 * (want - len(chosen)), 16))
        for d in draw.tolist():
            if d not in existing and d not in chosen:
                chosen.add(d)
                if len(chosen) == want:
                    break
    ids = np.array(sorted(chosen), dtype=np.int64)
    a, b = _pair_from_id(ids, size)
    noise = np.column_stack([a, b, np.ones(ids.size)]).astype(float)
    return [bl.copy() for bl in blocks] + [noise]


def _pair_id(a, b, size):
    return a * (2 * size - a - 1) // 2 + (b - a - 1)


def _pair_from_id(ids, size):
    """Invert the row-major upper-triangle pair index."""
    ids = np.asarray(ids, dtype=np.int64)
    # rows start at s(a) = a (2 size - a - 1) / 2; solve the quadratic, then correct
    a = np.floor(((2 * size - 1) - np.sqrt((2 * size - 1) ** 2 - 8.0 * ids)) / 2).astype(np.int64)
    a = np.clip(a, 0, size - 2)
    start = a * (2 * size - a - 1) // 2
    over = start > ids
    while over.any():
        a[over] -= 1
        start = a * (2 * size - a - 1) // 2
        over = start > ids
    nxt = (a + 1) * (2 * size - a - 2) // 2
    under = nxt <= ids
    while under.any():
        a[under] += 1
        start = a * (2 * size - a - 1) // 2
        nxt = (a + 1) * (2 * size - a - 2) // 2
        under = nxt <= ids
    b = ids - start + a + 1
    return a, b
