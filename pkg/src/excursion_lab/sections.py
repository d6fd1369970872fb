"""Holomorphic section bases, Gram matrices and orthonormalization.

The L^2 inner product is taken against the volume form of L itself,
``<s1, s2> = int h_N(s1, s2) omega^m / m!``, so that the Szegő kernel
carries the ``N^m / pi^m`` leading behaviour.  Quadrature weights measure
the form of L^N and are divided by ``N^m`` here.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from ._validation import ValidationError, as_point_arrays
from .geometry import ELLIPTIC, PROJECTIVE, Geometry, QuadratureRule, quadrature_rule

# condition number beyond which the Gram matrix is considered singular
MAX_CONDITION = 1e12
# tail of the truncated theta series, relative to the dominant term
THETA_TAIL_TARGET = 40.0  # exp(-40) ~ 4e-18


class SingularGramError(ValidationError):
    pass


def _exponents(m: int, N: int) -> np.ndarray:
    """Homogeneous exponents (N - |b|, b) for |b| <= N, ordered by degree in chart 0."""
    rows = []
    for deg in range(N + 1):
        for b in product(range(deg + 1), repeat=m):
            if sum(b) == deg:
                rows.append((N - deg,) + b)
    # product() yields lexicographic order; keep it stable within each degree
    return np.array(rows, dtype=int)


def theta_terms(D: int, t: float) -> int:
    """Half-width of the theta window so the truncated tail is below exp(-40)."""
    return int(math.ceil(math.sqrt(THETA_TAIL_TARGET / (math.pi * D * t)))) + 2


def theta_tail_bound(D: int, t: float) -> float:
    """Bound on the truncated theta tail relative to the dominant term."""
    K = theta_terms(D, t)
    q = math.exp(-math.pi * D * t * (K - 1) ** 2)
    r = math.exp(-2 * math.pi * D * t * (K - 1))
    return 2 * q / (1 - r)


@dataclass(frozen=True, eq=False)
class RawBasis:
    """Holomorphic basis ``s_i = f_i e_L^N`` in the active chart frame.

    Projective space: multinomially scaled monomials ``sqrt(N!/a!) Z^a``,
    which on CP^1 in chart 0 are ``sqrt(binom(N, j)) z^j``.  Elliptic curve:
    theta functions with characteristics ``j / (N degL)``.
    """

    geometry: Geometry

    @property
    def size(self) -> int:
        spec = self.geometry.spec
        if spec.family == PROJECTIVE:
            return math.comb(spec.N + spec.m, spec.m)
        return spec.total_degree

    @property
    def m(self) -> int:
        return self.geometry.m

    @property
    def n_sections(self) -> int:
        return self.size

    def potential(self, charts, coords):
        return self.geometry.potential(charts, coords)

    def evaluate(self, charts, coords):
        """Return ``f`` of shape (k, n+1) and ``df`` of shape (k, m, n+1)."""
        charts, coords = as_point_arrays(charts, coords, self.m)
        if self.geometry.family == PROJECTIVE:
            return self._monomials(charts, coords)
        return self._thetas(coords[:, 0])

    def _monomials(self, charts, coords):
        geo = self.geometry
        N, m = geo.N, geo.m
        alpha = _exponents(m, N)
        scale = np.sqrt([math.factorial(N) / math.prod(math.factorial(a) for a in row) for row in alpha])
        Z = geo.homogeneous(charts, coords)
        f = scale[None, :] * np.prod(Z[:, None, :] ** alpha[None, :, :], axis=2)
        k = Z.shape[0]
        df = np.zeros((k, m, len(alpha)), dtype=complex)
        for c in range(m + 1):
            sel = charts == c
            if not np.any(sel):
                continue
            cols = [j for j in range(m + 1) if j != c]
            Zs = Z[sel]
            for i, col in enumerate(cols):
                a = alpha[:, col]
                reduced = alpha.copy()
                reduced[:, col] = np.maximum(a - 1, 0)
                mono = np.prod(Zs[:, None, :] ** reduced[None, :, :], axis=2)
                df[sel, i, :] = scale[None, :] * a[None, :] * mono
        return f, df

    def _thetas(self, z):
        spec = self.geometry.spec
        D = spec.total_degree
        tau = spec.tau
        t = tau.imag
        K = theta_terms(D, t)
        kc = np.round(-z.imag / t)
        koff = np.arange(-K, K + 1)
        a = kc[:, None, None] + koff[None, None, :] + (np.arange(D) / D)[None, :, None]
        expo = 1j * math.pi * tau * D * a**2 + 2j * math.pi * D * a * z[:, None, None]
        terms = np.exp(expo)
        f = terms.sum(axis=2)
        df = (2j * math.pi * D * a * terms).sum(axis=2)
        return f, df[:, None, :]


def raw_basis(geometry: Geometry) -> RawBasis:
    """Raw holomorphic basis of H^0(M, L^N); size equals h^0."""
    if geometry.family == ELLIPTIC and geometry.spec.total_degree < 1:
        raise ValidationError("elliptic sections need N * degL >= 1")
    return RawBasis(geometry)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    tolerance: float

    @property
    def condition(self) -> float:
        d = np.sqrt(np.real(np.diag(self.entries)))
        eq = self.entries / np.outer(d, d)
        return float(np.linalg.cond(eq))


def gram_matrix(basis, rule: QuadratureRule) -> GramMatrix:
    """``G_ij = int f_i conj(f_j) exp(-phi) dV`` against the form of L.

    ``basis`` is anything with ``evaluate``, ``potential`` and ``geometry``
    (raw or orthonormal bases).
    """
    f, _ = basis.evaluate(rule.charts, rule.coords)
    geo = basis.geometry
    w = rule.weights * np.exp(-basis.potential(rule.charts, rule.coords)) / geo.N**geo.m
    G = (f * w[:, None]).T @ np.conj(f)
    G = 0.5 * (G + G.conj().T)
    return GramMatrix(G, tolerance=1e-12)


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """Orthonormal sections ``F = A f`` (rows of ``A`` over the raw basis)."""

    geometry: Geometry
    raw: object
    A: np.ndarray

    @property
    def m(self) -> int:
        return self.geometry.m

    @property
    def n_sections(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.geometry.N

    def potential(self, charts, coords):
        return self.geometry.potential(charts, coords)

    def distance(self, c1, z1, c2, z2):
        return self.geometry.distance(c1, z1, c2, z2)

    def evaluate(self, charts, coords):
        """``F`` of shape (k, n+1) and ``dF`` of shape (k, m, n+1)."""
        f, df = self.raw.evaluate(charts, coords)
        return f @ self.A.T, df @ self.A.T

    def remix(self, U) -> "OrthonormalBasis":
        """Basis ``U F`` for a unitary ``U``; every kernel quantity is invariant."""
        U = np.asarray(U, dtype=complex)
        return OrthonormalBasis(self.geometry, self.raw, U @ self.A)

    def coefficients_csv(self) -> str:
        """Coefficient matrix, one row per section, interleaved re/im columns."""
        n = self.A.shape[1]
        buf = io.StringIO()
        header = ",".join(f"re_{j},im_{j}" for j in range(n))
        buf.write("section," + header + "\n")
        for i, row in enumerate(self.A):
            vals = ",".join(f"{c.real:.17g},{c.imag:.17g}" for c in row)
            buf.write(f"{i},{vals}\n")
        return buf.getvalue()


def orthonormalize(basis, gram: GramMatrix) -> OrthonormalBasis:
    """Orthonormalize through the Cholesky factor ``G = L L^*``, ``A = L^{-1}``.

    When ``basis`` is already an :class:`OrthonormalBasis` the new
    coefficients are composed with its own, so a second pass returns a
    factor within rounding of the identity.
    """
    G = gram.entries
    if not np.all(np.real(np.diag(G)) > 0):
        raise SingularGramError("Gram matrix has a non-positive diagonal entry")
    cond = gram.condition
    geo = basis.geometry
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularGramError(
            f"Gram matrix numerically singular (condition {cond:.3g}) for {geo.spec}; "
            "raise the quadrature order"
        )
    L = cholesky(G, lower=True)
    A = solve_triangular(L, np.eye(len(G)), lower=True)
    if isinstance(basis, OrthonormalBasis):
        return OrthonormalBasis(geo, basis.raw, A @ basis.A)
    return OrthonormalBasis(geo, basis, A)


def orthonormal_basis(geometry: Geometry, order=None) -> OrthonormalBasis:
    """Raw basis, Gram matrix and orthonormalization in one call."""
    raw = raw_basis(geometry)
    rule = quadrature_rule(geometry, order)
    return orthonormalize(raw, gram_matrix(raw, rule))
