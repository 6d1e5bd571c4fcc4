"""Dense multivariate polynomials over a graded-lex monomial basis."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

DEFAULT_BASIS_CAP = 10**6
# rows per block when expanding features, keeps peak memory near 64 MB
_CHUNK_BYTES = 64 * 2**20


class BasisSizeError(ValueError):
    pass


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MonomialBasis:
    """All monomials of total degree <= ``degree`` in ``dimension`` variables.

    Monomials are ordered by total degree, then lexicographically with the
    first variable most significant, so index 0 is the constant and indices
    ``1..d`` are ``x_1..x_d``.
    """

    dimension: int
    degree: int
    exponents: np.ndarray = field(repr=False)
    # monomial j = monomial parent[j] * x[var[j]] for j >= 1
    parent: np.ndarray = field(repr=False)
    var: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.exponents.shape[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MonomialBasis):
            return NotImplemented
        return (self.dimension, self.degree) == (other.dimension, other.degree)

    def __hash__(self) -> int:
        return hash((self.dimension, self.degree))

    def features(self, X: np.ndarray) -> np.ndarray:
        """Evaluate every monomial at every row of ``X`` -> (n, len(basis))."""
        return self.features_t(X).T

    def features_t(self, X: np.ndarray) -> np.ndarray:
        """Transposed feature matrix (len(basis), n); rows are contiguous."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dimension:
            raise DimensionError(
                f"expected points of dimension {self.dimension}, got {X.shape[1]}"
            )
        XT = np.ascontiguousarray(X.T)
        F = np.empty((len(self), X.shape[0]))
        F[0] = 1.0
        for j in range(1, len(self)):
            np.multiply(F[self.parent[j]], XT[self.var[j]], out=F[j])
        return F

    def chunk_rows(self) -> int:
        return max(1, _CHUNK_BYTES // (8 * len(self)))


def basis_size(d: int, k: int) -> int:
    return math.comb(d + k, k)


@lru_cache(maxsize=64)
def _build_basis(d: int, k: int) -> MonomialBasis:
    combos = [()]
    for deg in range(1, k + 1):
        combos.extend(itertools.combinations_with_replacement(range(d), deg))
    index = {c: j for j, c in enumerate(combos)}
    exps = np.zeros((len(combos), d), dtype=np.int64)
    parent = np.zeros(len(combos), dtype=np.int64)
    var = np.zeros(len(combos), dtype=np.int64)
    for j, c in enumerate(combos):
        for i in c:
            exps[j, i] += 1
        if c:
            parent[j] = index[c[:-1]]
            var[j] = c[-1]
    for a in (exps, parent, var):
        a.setflags(write=False)
    return MonomialBasis(d, k, exps, parent, var)


def make_basis(d: int, k: int, cap: int = DEFAULT_BASIS_CAP) -> MonomialBasis:
    if d < 1 or k < 1:
        raise ValueError(f"dimension and degree must be >= 1, got d={d}, k={k}")
    size = basis_size(d, k)
    if size > cap:
        raise BasisSizeError(
            f"basis for d={d}, k={k} has binomial(d+k, k) = {size} monomials, "
            f"above the cap of {cap}"
        )
    return _build_basis(d, k)


@dataclass(frozen=True, eq=False)
class Polynomial:
    basis: MonomialBasis
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.shape != (len(self.basis),):
            raise ValueError(
                f"need {len(self.basis)} coefficients for the d={self.basis.dimension}, "
                f"k={self.basis.degree} basis, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def dimension(self) -> int:
        return self.basis.dimension

    @property
    def degree(self) -> int:
        return self.basis.degree

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return evaluate_many(self, X)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        _check_same_basis(self, other)
        return Polynomial(self.basis, self.coefficients + other.coefficients)

    def __mul__(self, alpha: float) -> "Polynomial":
        return Polynomial(self.basis, alpha * self.coefficients)

    __rmul__ = __mul__

    def gradient(self, X: np.ndarray) -> np.ndarray:
        """Analytic gradient at each row of ``X`` -> (n, d)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        F = self.basis.features(X)
        rows, idx, mult = _derivative_maps(self.basis.dimension, self.basis.degree)
        G = np.zeros((X.shape[0], self.dimension))
        for i in range(self.dimension):
            sel = rows[i]
            if sel.size:
                G[:, i] = F[:, idx[i]] @ (mult[i] * self.coefficients[sel])
        return G

    def to_dict(self) -> dict:
        return {
            "d": self.dimension,
            "k": self.degree,
            "coefficients": [float(c) for c in self.coefficients],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Polynomial":
        return cls(make_basis(int(obj["d"]), int(obj["k"])), obj["coefficients"])

    @classmethod
    def zero(cls, basis: MonomialBasis) -> "Polynomial":
        return cls(basis, np.zeros(len(basis)))

    @classmethod
    def linear(cls, basis: MonomialBasis, weights, offset: float = 0.0) -> "Polynomial":
        """``offset + weights . x`` expressed in ``basis``."""
        c = np.zeros(len(basis))
        c[0] = offset
        c[1 : basis.dimension + 1] = weights
        return cls(basis, c)


def _check_same_basis(p: Polynomial, q: Polynomial) -> None:
    if p.basis != q.basis:
        raise ValueError("polynomials live in different bases")


@lru_cache(maxsize=64)
def _derivative_maps(d: int, k: int):
    basis = _build_basis(d, k)
    lookup = {tuple(e): j for j, e in enumerate(basis.exponents.tolist())}
    rows, idx, mult = [], [], []
    for i in range(d):
        r, ix, m = [], [], []
        for j, e in enumerate(basis.exponents.tolist()):
            if e[i] > 0:
                lower = list(e)
                lower[i] -= 1
                r.append(j)
                ix.append(lookup[tuple(lower)])
                m.append(e[i])
        rows.append(np.array(r, dtype=np.int64))
        idx.append(np.array(ix, dtype=np.int64))
        mult.append(np.array(m, dtype=float))
    return rows, idx, mult


@lru_cache(maxsize=64)
def _shift_terms(d: int, k: int):
    """Triples (e, a, b) with a + b = e, plus multinomial weights binom(e, a).

    Expanding (x + h)^e = sum_a binom(e, a) x^b h^a over these triples turns a
    polynomial in x + h into a polynomial in h with x-dependent coefficients.
    """
    basis = _build_basis(d, k)
    exps = basis.exponents.tolist()
    lookup = {tuple(e): j for j, e in enumerate(exps)}
    e_idx, a_idx, b_idx, weight = [], [], [], []
    for j, e in enumerate(exps):
        for a in itertools.product(*(range(ei + 1) for ei in e)):
            b = tuple(ei - ai for ei, ai in zip(e, a))
            e_idx.append(j)
            a_idx.append(lookup[a])
            b_idx.append(lookup[b])
            weight.append(math.prod(math.comb(ei, ai) for ei, ai in zip(e, a)))
    degree_a = basis.exponents.sum(axis=1)
    return (
        np.array(e_idx),
        np.array(a_idx),
        np.array(b_idx),
        np.array(weight, dtype=float),
        degree_a,
    )


def shift_matrix(p: Polynomial, scale: float) -> np.ndarray:
    """Matrix W with ``p(x + scale*z) = features(x) @ W @ features(z)``."""
    e_idx, a_idx, b_idx, weight, deg = _shift_terms(p.dimension, p.degree)
    nb = len(p.basis)
    W = np.zeros((nb, nb))
    np.add.at(W, (b_idx, a_idx), p.coefficients[e_idx] * weight)
    return W * scale ** deg[None, :]


def shifted_coefficients(p: Polynomial, X, scale: float) -> np.ndarray:
    """Row j holds the coefficients of ``z -> p(X[j] + scale*z)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return p.basis.features(X) @ shift_matrix(p, scale)


def shift_adjoint(basis: MonomialBasis, FX: np.ndarray, A: np.ndarray, scale: float,
                  per_row: bool = False) -> np.ndarray:
    """Pull coefficient-space gradients back through the shift.

    ``L_j[e, a] = binom(e, a) scale^|a| x_j^(e - a)`` maps features(z) to
    features(x_j + scale*z); ``FX`` holds features(x_j) as rows and ``A``
    holds one vector in z-feature space per row.  Returns
    ``sum_j L_j @ A[j]`` or, with ``per_row``, the (n, len(basis)) stack of
    ``L_j @ A[j]``.
    """
    e_idx, a_idx, b_idx, weight, deg = _shift_terms(basis.dimension, basis.degree)
    coef = weight * scale ** deg[a_idx]
    if not per_row:
        G = FX.T @ A  # (nb_b, nb_a)
        return np.bincount(e_idx, weights=coef * G[b_idx, a_idx], minlength=len(basis))
    out = np.zeros((FX.shape[0], len(basis)))
    for e in range(len(basis)):
        sel = np.flatnonzero(e_idx == e)
        out[:, e] = (FX[:, b_idx[sel]] * A[:, a_idx[sel]]) @ coef[sel]
    return out


def evaluate(p: Polynomial, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != p.dimension:
        raise DimensionError(
            f"expected a point of dimension {p.dimension}, got shape {x.shape}"
        )
    return float(evaluate_many(p, x[None, :])[0])


def evaluate_many(p: Polynomial, X: np.ndarray) -> np.ndarray:
    """Evaluate ``p`` at each row of ``X``, in bounded-memory blocks."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != p.dimension:
        raise DimensionError(
            f"expected points of dimension {p.dimension}, got {X.shape[1]}"
        )
    step = p.basis.chunk_rows()
    if X.shape[0] <= step:
        return p.coefficients @ p.basis.features_t(X)
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], step):
        out[s : s + step] = p.coefficients @ p.basis.features_t(X[s : s + step])
    return out


@dataclass(frozen=True)
class PTF:
    """Polynomial threshold function ``x -> sign(p(x) - t)`` with sign(0) = +1."""

    poly: Polynomial
    threshold: float

    def __post_init__(self):
        t = float(self.threshold)
        if not -1.0 <= t <= 1.0:
            raise ValueError(f"PTF threshold must lie in [-1, 1], got {t}")
        object.__setattr__(self, "threshold", t)

    @property
    def dimension(self) -> int:
        return self.poly.dimension

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return sign(evaluate_many(self.poly, X) - self.threshold)


def sign(values) -> np.ndarray:
    """Elementwise sign with the tie sign(0) = +1, as int8 labels."""
    return np.where(np.asarray(values) >= 0, 1, -1).astype(np.int8)


def ptf_eval(f: PTF, x) -> int:
    return 1 if evaluate(f.poly, x) - f.threshold >= 0 else -1
