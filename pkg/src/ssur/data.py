"""Input data containers, CSV ingestion and MRF structure matrices.

Indicator vectors are the column-major vectorisation of the p x m
indicator matrix: cell (k, j) (predictor k, response j, both 0-based)
lives at position ``j * p + k``.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import scipy.sparse as sp


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class Standardization:
    """Column centres and scales used to standardise a dataset."""

    y_center: np.ndarray
    y_scale: np.ndarray
    x_center: np.ndarray
    x_scale: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Responses ``Y`` (n x m), predictors ``X`` (n x p), optional groups ``Z`` (n x T)."""

    Y: np.ndarray
    X: np.ndarray
    Z: np.ndarray | None = None
    response_names: tuple = ()
    predictor_names: tuple = ()
    group_names: tuple = ()
    standardization: Standardization | None = field(default=None, compare=False)

    def __post_init__(self):
        Y = np.ascontiguousarray(np.asarray(self.Y, dtype=float))
        X = np.ascontiguousarray(np.asarray(self.X, dtype=float))
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim != 2 or X.ndim != 2:
            raise DataError("Y and X must be matrices")
        if Y.shape[0] != X.shape[0]:
            raise DataError(f"dimension mismatch: Y has {Y.shape[0]} rows, X has {X.shape[0]}")
        if Y.shape[0] < 2 or Y.shape[1] < 1 or X.shape[1] < 1:
            raise DataError("need n >= 2, m >= 1 and p >= 1")
        for name, a in (("Y", Y), ("X", X)):
            if not np.all(np.isfinite(a)):
                raise DataError(f"{name} contains missing or non-finite entries")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)
        if self.Z is not None:
            Z = np.asarray(self.Z, dtype=float)
            if Z.ndim == 1:
                Z = Z[:, None]
            if Z.shape[0] != Y.shape[0]:
                raise DataError(f"dimension mismatch: Z has {Z.shape[0]} rows, Y has {Y.shape[0]}")
            if not np.all((Z == 0) | (Z == 1)):
                raise DataError("Z must contain only 0/1 entries")
            bad = np.flatnonzero(Z.sum(axis=1) != 1)
            if bad.size:
                raise DataError(f"Z row {bad[0] + 1} does not sum to 1")
            object.__setattr__(self, "Z", np.ascontiguousarray(Z))
        if not self.response_names:
            object.__setattr__(self, "response_names", tuple(f"y{j + 1}" for j in range(self.m)))
        if not self.predictor_names:
            object.__setattr__(self, "predictor_names", tuple(f"x{k + 1}" for k in range(self.p)))
        if self.Z is not None and not self.group_names:
            object.__setattr__(self, "group_names", tuple(f"z{t + 1}" for t in range(self.T)))

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def T(self) -> int:
        return 0 if self.Z is None else self.Z.shape[1]

    def standardized(self) -> "Dataset":
        """Return a copy with every column of Y and X at mean 0, unbiased sd 1."""
        yc, ys = _column_stats(self.Y, "Y")
        xc, xs = _column_stats(self.X, "X")
        return Dataset(
            (self.Y - yc) / ys, (self.X - xc) / xs, self.Z,
            self.response_names, self.predictor_names, self.group_names,
            Standardization(yc, ys, xc, xs),
        )

    def apply_standardization(self, stats: Standardization) -> "Dataset":
        """Standardise with externally supplied centres and scales (e.g. training statistics)."""
        return Dataset(
            (self.Y - stats.y_center) / stats.y_scale,
            (self.X - stats.x_center) / stats.x_scale,
            self.Z, self.response_names, self.predictor_names, self.group_names, stats,
        )


def _column_stats(a, name):
    center = a.mean(axis=0)
    scale = a.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(scale > 0))
    if bad.size:
        raise DataError(f"zero-variance column {bad[0] + 1} in {name}")
    return center, scale


def read_matrix_csv(path) -> tuple[np.ndarray, tuple, tuple]:
    """Read a numeric CSV with a mandatory header and optional row-name column.

    Returns ``(values, column_names, row_names)``.  The first column is taken
    as row names when its header is blank or any of its cells is non-numeric.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    try:
        df = pd.read_csv(path, header=0, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataError(f"{path.name}: empty file") from None
    if df.shape[1] == 0:
        raise DataError(f"{path.name}: no columns")
    row_names = ()
    first = df.columns[0]
    if df.shape[1] > 1 and (str(first).startswith("Unnamed") or str(first).strip() == ""
                            or not _all_numeric(df[first])):
        row_names = tuple(df[first])
        df = df.drop(columns=first)
    values = np.empty(df.shape, dtype=float)
    for c, col in enumerate(df.columns):
        cells = df[col].str.strip()
        try:
            # numpy parses decimal strings with correct rounding, pandas may not
            values[:, c] = np.asarray(cells.to_numpy(), dtype=float)
        except ValueError:
            num = pd.to_numeric(cells, errors="coerce").to_numpy(dtype=float)
            r = int(np.flatnonzero(np.isnan(num) & (cells.str.lower() != "nan").to_numpy())[0])
            raise DataError(
                f"{path.name}: non-numeric cell {cells.iloc[r]!r} at row {r + 1}, column {col!r}"
            ) from None
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path.name}: missing or non-finite values are not supported")
    return values, tuple(str(c) for c in df.columns), row_names


def _all_numeric(series) -> bool:
    try:
        series.astype(float)
    except ValueError:
        return False
    return True


def load_dataset(y_path, x_path, z_path=None, standardize: bool = False) -> Dataset:
    """Load Y, X and optional Z from CSV files."""
    Y, ynames, _ = read_matrix_csv(y_path)
    X, xnames, _ = read_matrix_csv(x_path)
    Z, znames = None, ()
    if z_path is not None:
        Z, znames, _ = read_matrix_csv(z_path)
    data = Dataset(Y, X, Z, ynames, xnames, znames)
    return data.standardized() if standardize else data


def write_matrix_csv(path, values, column_names=None, row_names=None):
    """Write a matrix as CSV with a header row; floats use round-trip precision."""
    values = np.atleast_2d(np.asarray(values))
    if column_names is None:
        column_names = [f"V{c + 1}" for c in range(values.shape[1])]
    lines = []
    head = ([""] if row_names is not None else []) + list(column_names)
    lines.append(",".join(head))
    for r, row in enumerate(values):
        cells = [_fmt(v) for v in row]
        if row_names is not None:
            cells.insert(0, str(row_names[r]))
        lines.append(",".join(cells))
    from .io import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


@dataclass(frozen=True)
class MrfPrior:
    """Sparse symmetric structure matrix ``G`` over the mp indicators plus ``d`` and ``e``."""

    G: sp.csr_matrix
    d: float = -2.0
    e: float = 0.1

    def __post_init__(self):
        G = sp.csr_matrix(self.G, dtype=float)
        G.eliminate_zeros()
        G.sort_indices()
        if G.shape[0] != G.shape[1]:
            raise DataError("G must be square")
        if not np.all(np.isfinite(G.data)):
            raise DataError("G contains non-finite weights")
        if G.diagonal().any():
            raise DataError("G must have a zero diagonal")
        if (G - G.T).count_nonzero():
            raise DataError("G must be symmetric")
        if (G.data < 0).any():
            warnings.warn("G has negative weights", stacklevel=2)
        if not np.isfinite(self.d) or not np.isfinite(self.e):
            raise DataError("d and e must be finite")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "e", float(self.e))

    @property
    def size(self) -> int:
        return self.G.shape[0]


def cell_index(k: int, j: int, p: int) -> int:
    """Position of indicator (predictor k, response j) in the vectorised matrix."""
    return j * p + k


def kron_structure_graph(G_y, G_x) -> sp.csr_matrix:
    """Structure matrix from response and predictor relationship matrices.

    Both inputs must be symmetric with a unit diagonal; the result is
    ``kron(G_y, G_x) - I``.
    """
    G_y = sp.csr_matrix(G_y, dtype=float)
    G_x = sp.csr_matrix(G_x, dtype=float)
    for name, A in (("G_y", G_y), ("G_x", G_x)):
        if A.shape[0] != A.shape[1]:
            raise DataError(f"{name} must be square")
        if (A - A.T).count_nonzero():
            raise DataError(f"{name} is not symmetric")
        if not np.all(A.diagonal() == 1):
            raise DataError(f"{name} must have a unit diagonal")
    G = sp.kron(G_y, G_x, format="csr") - sp.identity(G_y.shape[0] * G_x.shape[0], format="csr")
    G.eliminate_zeros()
    return G.tocsr()


_SPLIT = re.compile(r"[,\s]+")


def read_edge_blocks(path, m: int, p: int) -> list[np.ndarray]:
    """Parse an edge-list file into blocks of rows ``(v, v2, weight)``.

    Rows are ``k j k' j' weight`` with 1-based predictor/response indices.
    A comment line starting with ``# block`` opens a new block; other
    comment lines are ignored.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    blocks: list[list] = [[]]
    seen: set = set()
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().lower().startswith("block") and blocks[-1]:
                blocks.append([])
            continue
        parts = [s for s in _SPLIT.split(line) if s]
        if len(parts) != 5:
            raise DataError(f"{path.name}:{lineno}: expected 5 columns, got {len(parts)}")
        try:
            k, j, k2, j2 = (int(s) for s in parts[:4])
            wgt = float(parts[4])
        except ValueError:
            raise DataError(f"{path.name}:{lineno}: malformed row {line!r}") from None
        if not (1 <= k <= p and 1 <= k2 <= p and 1 <= j <= m and 1 <= j2 <= m):
            raise DataError(f"{path.name}:{lineno}: index out of range for m={m}, p={p}")
        if not np.isfinite(wgt):
            raise DataError(f"{path.name}:{lineno}: non-finite weight")
        v, v2 = cell_index(k - 1, j - 1, p), cell_index(k2 - 1, j2 - 1, p)
        if v == v2:
            raise DataError(f"{path.name}:{lineno}: self-edge")
        key = (min(v, v2), max(v, v2))
        if key in seen:
            raise DataError(f"{path.name}:{lineno}: duplicate edge")
        seen.add(key)
        blocks[-1].append((v, v2, wgt))
    out = []
    for b in blocks:
        arr = np.array(b, dtype=float).reshape(-1, 3)
        out.append(arr)
    return out


def edges_to_matrix(edges, size: int) -> sp.csr_matrix:
    """Symmetric sparse matrix from rows ``(v, v2, weight)``."""
    edges = np.asarray(edges, dtype=float).reshape(-1, 3)
    r = edges[:, 0].astype(np.int64)
    c = edges[:, 1].astype(np.int64)
    w = edges[:, 2]
    G = sp.coo_matrix(
        (np.concatenate([w, w]), (np.concatenate([r, c]), np.concatenate([c, r]))),
        shape=(size, size),
    ).tocsr()
    G.eliminate_zeros()
    G.sort_indices()
    return G


def load_edge_list(path, m: int, p: int) -> sp.csr_matrix:
    """Read an edge-list file into the symmetric mp x mp structure matrix."""
    blocks = read_edge_blocks(path, m, p)
    return edges_to_matrix(np.vstack(blocks), m * p)


def matrix_to_edges(G) -> np.ndarray:
    """Upper-triangular nonzero entries of ``G`` as rows ``(v, v2, weight)``."""
    U = sp.triu(sp.csr_matrix(G), k=1).tocoo()
    order = np.lexsort((U.col, U.row))
    return np.column_stack([U.row[order], U.col[order], U.data[order]]).astype(float)


def format_edge_list(blocks, p: int, header: str | None = None) -> str:
    """Render blocks of ``(v, v2, weight)`` rows in the 5-column text format."""
    lines = []
    if header:
        lines.extend("# " + h for h in header.splitlines())
    for b, rows in enumerate(blocks):
        if len(blocks) > 1:
            lines.append(f"# block {b + 1}")
        for v, v2, wgt in np.asarray(rows).reshape(-1, 3):
            v, v2 = int(v), int(v2)
            lines.append(f"{v % p + 1} {v // p + 1} {v2 % p + 1} {v2 // p + 1} {float(wgt)!r}")
    return "\n".join(lines) + "\n"


def write_edge_list(G, path, m: int, p: int, blocks=None):
    """Write ``G`` (or explicit edge blocks) to ``path``."""
    from .io import atomic_write_text

    if blocks is None:
        blocks = [matrix_to_edges(G)]
    atomic_write_text(path, format_edge_list(blocks, p, header=f"k j k' j' weight (m={m}, p={p})"))
