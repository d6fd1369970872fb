"""scikit-learn style wrappers around the functional API.

The functional modules stay the primary interface; these classes bundle a
geometry configuration with ``fit`` so experiments compose with
``get_params``/``set_params``, ``clone`` and grid utilities.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import ValidationError, as_point_arrays
from .embedding import GEOMETRIC, critical_radius
from .excursion import mc_run
from .geometry import PROJECTIVE, GeometrySpec, build_mesh, make_geometry
from .sections import orthonormal_basis


class _GeometryParams(BaseEstimator):
    def _spec(self) -> GeometrySpec:
        return GeometrySpec(family=self.family, N=self.N, m=self.m, tau=self.tau, degL=self.degL)

    def _build(self):
        geometry = make_geometry(self._spec())
        return geometry, orthonormal_basis(geometry, self.quadrature_order)


class KodairaEmbedding(TransformerMixin, _GeometryParams):
    """Map chart points to unit representatives of Phi_N(z) in C^{n+1}.

    Parameters
    ----------
    family : {"ProjectiveSpace", "EllipticCurve"}
    N : int
        Tensor power of L.
    m : int
        Complex dimension (projective space only).
    tau : complex
        Elliptic modulus.
    degL : int
        Degree of L on the elliptic curve.
    quadrature_order : int or None
        Order of the Gram-matrix quadrature; the family default when None.
    chart : int
        Chart in which the rows of ``X`` are given.

    Attributes
    ----------
    geometry_ : Geometry
    basis_ : OrthonormalBasis
    n_sections_ : int
    """

    def __init__(self, family=PROJECTIVE, N=4, m=1, tau=1j, degL=1, quadrature_order=None, chart=0):
        self.family = family
        self.N = N
        self.m = m
        self.tau = tau
        self.degL = degL
        self.quadrature_order = quadrature_order
        self.chart = chart

    def fit(self, X=None, y=None):
        self.geometry_, self.basis_ = self._build()
        self.n_sections_ = self.basis_.n_sections
        return self

    def _points(self, X):
        X = np.asarray(X)
        if X.ndim == 0 or X.size == 0:
            raise ValidationError("X must hold at least one point")
        if np.iscomplexobj(X):
            return as_point_arrays(self.chart, X, self.geometry_.m)
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2 * self.geometry_.m:
            raise ValidationError("real input must have 2 m columns (real parts, then imaginary parts)")
        m = self.geometry_.m
        return as_point_arrays(self.chart, X[:, :m] + 1j * X[:, m:], m)

    def transform(self, X):
        """Unit vectors F(z)/|F(z)|, shape (k, n+1), complex."""
        check_is_fitted(self, "basis_")
        charts, coords = self._points(X)
        self.geometry_.check_domain(charts, coords)
        F, _ = self.basis_.evaluate(charts, coords)
        return F / np.linalg.norm(F, axis=1)[:, None]

    def kernel(self, X, Y):
        """Matrix of P_N(x_i, y_j) = |<Phi(x_i), Phi(y_j)>|."""
        A = self.transform(X)
        B = self.transform(Y)
        return np.minimum(np.abs(A @ B.conj().T), 1.0)


class CriticalRadiusEstimator(_GeometryParams):
    """Resolution-limited critical-radius estimate for a curve.

    ``fit`` builds the basis and a mesh with edge ``edge_factor * 0.2 /
    sqrt(N)`` and stores the report in ``report_`` and ``r_hat_``.
    """

    def __init__(self, family=PROJECTIVE, N=4, tau=1j, degL=1, quadrature_order=None,
                 edge_factor=1.0, pair_budget=64, seed=0, mode=GEOMETRIC):
        self.family = family
        self.N = N
        self.tau = tau
        self.degL = degL
        self.quadrature_order = quadrature_order
        self.edge_factor = edge_factor
        self.pair_budget = pair_budget
        self.seed = seed
        self.mode = mode

    m = 1

    def fit(self, X=None, y=None):
        geometry, basis = self._build()
        if not 0 < float(self.edge_factor) <= 1:
            raise ValidationError("edge_factor must lie in (0, 1]")
        self.mesh_ = build_mesh(geometry, self.edge_factor * 0.2 / math.sqrt(self.N))
        self.report_ = critical_radius(basis, self.mesh_, self.pair_budget, seed=self.seed, mode=self.mode)
        self.r_hat_ = self.report_.r_hat
        return self


class ExcursionMonteCarlo(_GeometryParams):
    """Monte-Carlo expected Euler characteristic of ``{f > u}`` on a curve.

    After ``fit``: ``report_`` (MCReport), ``mean_chi_``, ``prob_nonempty_``.
    """

    def __init__(self, family=PROJECTIVE, N=4, tau=1j, degL=1, quadrature_order=None,
                 u=0.96, n_samples=10000, seed=0, edge_factor=1.0, workers=None):
        self.family = family
        self.N = N
        self.tau = tau
        self.degL = degL
        self.quadrature_order = quadrature_order
        self.u = u
        self.n_samples = n_samples
        self.seed = seed
        self.edge_factor = edge_factor
        self.workers = workers

    m = 1

    def fit(self, X=None, y=None):
        geometry, basis = self._build()
        if not 0 < float(self.edge_factor) <= 1:
            raise ValidationError("edge_factor must lie in (0, 1]")
        mesh = build_mesh(geometry, self.edge_factor * 0.2 / math.sqrt(self.N))
        self.report_ = mc_run(geometry, basis, mesh, self.u, self.n_samples, self.seed, workers=self.workers)
        self.mean_chi_ = self.report_.mean_chi
        self.prob_nonempty_ = self.report_.prob_nonempty
        return self
