"""Independent oracles used only by the test suite.

None of these share code paths with the production formulas: derivatives
come from Cauchy contour integrals, distances from constrained numerical
optimization, Gram entries from Beta integrals, kernels from closed forms.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize
from scipy.special import beta as beta_fn


# ------------------------------------------------------------ closed forms
def cp1_normalized_kernel(N, z, w):
    """P_N(z, w) on CP^1 from the Fubini-Study closed form."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    num = np.abs(1 + z * np.conj(w)) ** N
    den = ((1 + np.abs(z) ** 2) * (1 + np.abs(w) ** 2)) ** (N / 2)
    return num / den


def cp1_gaussian_curve(N, u, v):
    """|1 + u conj(v)/N|^N / ((1 + |u|^2/N)(1 + |v|^2/N))^(N/2)."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    num = np.abs(1 + u * np.conj(v) / N) ** N
    den = ((1 + np.abs(u) ** 2 / N) * (1 + np.abs(v) ** 2 / N)) ** (N / 2)
    return num / den


def cp1_gram_diagonal(N):
    """Gram diagonal of sqrt(binom(N, j)) z^j against (1+|z|^2)^-N dV_FS.

    ``int |z|^{2j} (1+|z|^2)^{-N-2} d^2z = pi B(j+1, N-j+1)``.
    """
    j = np.arange(N + 1)
    binom = np.array([math.comb(N, int(k)) for k in j], dtype=float)
    return binom * math.pi * beta_fn(j + 1, N - j + 1)


# ------------------------------------------------------ contour derivatives
def cauchy_derivative(f, z0, radius=1e-2, nodes=64):
    """f'(z0) for holomorphic (vector-valued) f by the trapezoid rule on a circle."""
    theta = 2 * np.pi * np.arange(nodes) / nodes
    pts = z0 + radius * np.exp(1j * theta)
    vals = np.array([f(p) for p in pts])
    weights = np.exp(-1j * theta) / (radius * nodes)
    return np.tensordot(weights, vals, axes=(0, 0))


def _frame(basis, chart):
    def F(z):
        return basis.evaluate([chart], np.array([[z]]))[0][0]
    return F


def polarized_E(basis, chart_z, chart_w):
    """E(z, zeta, w, omega) = A(z, omega) A(w, zeta) / (A(z, zeta) A(w, omega)).

    With ``A(a, b) = sum F_i(a) Fstar_i(b)`` and ``Fstar(b) = conj(F(conj b))``,
    it is holomorphic in all four arguments and equals E(z, w) at
    ``zeta = conj(z)``, ``omega = conj(w)``.
    """
    Fz = _frame(basis, chart_z)
    Fw = _frame(basis, chart_w)

    def A(Fa, a, Fb, b):
        return np.sum(Fa(a) * np.conj(Fb(np.conj(b))))

    def E(z, zeta, w, omega):
        return (A(Fz, z, Fw, omega) * A(Fw, w, Fz, zeta)) / (A(Fz, z, Fz, zeta) * A(Fw, w, Fw, omega))

    return E


def contour_E_derivatives(basis, z, w, chart_z=0, chart_w=0, radius=1e-2, nodes=48):
    """(E, dE/dz, d^2E/dz dwbar) from the polarized kernel and nested contours."""
    E = polarized_E(basis, chart_z, chart_w)
    zb, wb = np.conj(z), np.conj(w)
    e0 = E(z, zb, w, wb)
    ez = cauchy_derivative(lambda s: E(s, zb, w, wb), z, radius, nodes)
    ezw = cauchy_derivative(
        lambda o: cauchy_derivative(lambda s: E(s, zb, w, o), z, radius, nodes), wb, radius, nodes
    )
    return complex(e0), complex(ez), complex(ezw)


# --------------------------------------------------- brute-force distances
def brute_force_slice_sin2(Fz, Pz, Fw, Pw, restarts=8, seed=0):
    """sin^2 of the FS distance from [F(w)] to H_z ∩ H_w by constrained search.

    H_z is the hyperplane orthogonal to T_inf(z); the distance is found by
    maximizing |<X, F(w)>|^2 / |F(w)|^2 over unit X orthogonal to both
    tangent points, using SLSQP on the real coordinates of X.
    """
    def tangent(F, P):
        return P - (np.vdot(F, P) / np.vdot(F, F)) * F

    Tz, Tw = tangent(Fz, Pz), tangent(Fw, Pw)
    fw = Fw / np.linalg.norm(Fw)
    n = len(Fz)

    def cplx(x):
        return x[:n] + 1j * x[n:]

    def objective(x):
        X = cplx(x)
        return -abs(np.vdot(fw, X)) ** 2 / np.vdot(X, X).real

    cons = [
        {"type": "eq", "fun": lambda x: np.vdot(cplx(x), cplx(x)).real - 1.0},
        {"type": "eq", "fun": lambda x: np.vdot(Tz, cplx(x)).real},
        {"type": "eq", "fun": lambda x: np.vdot(Tz, cplx(x)).imag},
        {"type": "eq", "fun": lambda x: np.vdot(Tw, cplx(x)).real},
        {"type": "eq", "fun": lambda x: np.vdot(Tw, cplx(x)).imag},
    ]
    rng = np.random.default_rng(seed)
    best = -np.inf
    for _ in range(restarts):
        x0 = rng.standard_normal(2 * n)
        res = minimize(objective, x0 / np.linalg.norm(x0), constraints=cons, method="SLSQP",
                       options={"ftol": 1e-14, "maxiter": 500})
        X = cplx(res.x)
        feasible = abs(np.vdot(Tz, X)) < 1e-7 * np.linalg.norm(Tz) and abs(np.vdot(Tw, X)) < 1e-7 * np.linalg.norm(Tw)
        if feasible:
            best = max(best, -objective(res.x))
    return 1.0 - best


def brute_force_critical_radius(basis, mesh, N):
    """Full pair sweep over every vertex pair (the estimator's definition, no subsampling)."""
    from excursion_lab.embedding import slice_sin2_geometric

    F, dF = basis.evaluate(mesh.charts, mesh.coords)
    P = dF[:, 0, :]
    Fn = F / np.linalg.norm(F, axis=1)[:, None]
    V = len(F)
    thr = 1 / math.sqrt(2 * N)
    best = np.inf
    for i in range(V):
        d = basis.distance(np.full(V, mesh.charts[i]), np.repeat(mesh.coords[i:i + 1], V, axis=0),
                           mesh.charts, mesh.coords)
        near = (d < thr) & (d >= 1e-6)
        far = d >= thr
        if near.any():
            j = np.flatnonzero(near)
            a = slice_sin2_geometric(np.repeat(F[i:i + 1], len(j), 0), np.repeat(P[i:i + 1], len(j), 0), F[j], P[j])
            b = slice_sin2_geometric(F[j], P[j], np.repeat(F[i:i + 1], len(j), 0), np.repeat(P[i:i + 1], len(j), 0))
            best = min(best, float(np.arcsin(np.sqrt(np.min(np.minimum(a, b))))))
        if far.any():
            c = np.clip(np.abs(Fn[far] @ Fn[i].conj()), 0, 1)
            best = min(best, 0.5 * float(np.arccos(np.max(c))))
    return best


# ---------------------------------------------------------------- topology
def region_growing_components(mesh, mask):
    """Connected components of the masked vertex set by breadth-first search."""
    adj = [[] for _ in range(mesh.n_vertices)]
    for a, b in mesh.edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = np.zeros(mesh.n_vertices, dtype=bool)
    count = 0
    for s in np.flatnonzero(mask):
        if seen[s]:
            continue
        count += 1
        stack = [s]
        seen[s] = True
        while stack:
            v = stack.pop()
            for nb in adj[v]:
                if mask[nb] and not seen[nb]:
                    seen[nb] = True
                    stack.append(nb)
    return count
