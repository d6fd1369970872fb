"""Kodaira embedding geometry in (CP^n, Fubini-Study).

Normal-slice distances ``sin^2 d(Phi(w), H_z ∩ H_w)`` are computed along two
independent routes: the projective construction through the tangent point
T_inf and the projection O_w, and the kernel route through E = P_N^2 and its
derivatives.  :func:`critical_radius` sweeps mesh pairs for a
resolution-limited estimate of the critical radius; it is an estimator,
never a certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import ChartPoint, ValidationError, as_chart_point, as_point_arrays
from .kernel import NEAR_DIAGONAL, derivs_arrays, frame_vector, inner, tangent_vectors

GEOMETRIC = "GeometricPath"
KERNEL = "KernelPath"
# fall back to the geometric route when the kernel-path denominator bracket is this small
BRACKET_FLOOR = 1e-12


class EmbeddingError(ValidationError):
    pass


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    """Unit representative of a point of CP^n; equality is modulo phase."""

    homogeneous: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.homogeneous, dtype=complex)
        nrm = np.linalg.norm(v)
        if not nrm > 0:
            raise EmbeddingError("zero vector has no projective class")
        object.__setattr__(self, "homogeneous", v / nrm)

    def same_as(self, other: "ProjectivePoint", tol: float = 1e-12) -> bool:
        return fs_distance(self, other) <= tol


@dataclass(frozen=True)
class NormalSliceResult:
    sin2: float
    mode: str
    pair: tuple
    fallback: bool = False


@dataclass
class CriticalRadiusReport:
    N: int
    r_hat: float
    near_min: float
    far_min: float
    near_min_sin2: float
    n_pairs: int
    n_near: int
    n_far: int
    mesh_edge_length: float
    per_base_min: np.ndarray = field(repr=False)
    fallbacks: int = 0

    def to_json(self) -> dict:
        return {
            "N": self.N,
            "rHat": self.r_hat,
            "nearMin": self.near_min,
            "farMin": self.far_min,
            "nearMinSin2": self.near_min_sin2,
            "pairs": self.n_pairs,
            "nearPairs": self.n_near,
            "farPairs": self.n_far,
            "meshEdgeLength": self.mesh_edge_length,
            "fallbacks": self.fallbacks,
        }


# -------------------------------------------------------------- projective
def fs_distance(p: ProjectivePoint, q: ProjectivePoint) -> float:
    """Fubini-Study distance, arccos |<p, q>|, in [0, pi/2]."""
    a, b = p.homogeneous, q.homogeneous
    c = abs(np.vdot(b, a))
    if c > 0.9:
        # chordal form keeps precision near the diagonal
        s = np.linalg.norm(a - np.vdot(b, a) * b)
        return float(math.asin(min(s, 1.0)))
    return float(math.acos(min(c, 1.0)))


def kodaira_point(basis, z) -> ProjectivePoint:
    """Phi_N(z) as a unit vector."""
    return ProjectivePoint(frame_vector(basis, z).F)


def check_injective(basis, mesh, tol: float = 1e-10) -> float:
    """Smallest FS distance between images of distinct mesh vertices.

    Raises EmbeddingError when two vertices land within ``tol``.
    """
    F, _ = basis.evaluate(mesh.charts, mesh.coords)
    U = F / np.linalg.norm(F, axis=1)[:, None]
    C = np.abs(U @ U.conj().T)
    np.fill_diagonal(C, 0.0)
    i, j = np.unravel_index(np.argmax(C), C.shape)
    s = np.linalg.norm(U[i] - np.vdot(U[j], U[i]) * U[j])
    dmin = math.asin(min(s, 1.0)) if C[i, j] > 0.9 else math.acos(min(C[i, j], 1.0))
    if dmin <= tol:
        raise EmbeddingError(
            f"mesh vertices {i} and {j} map to the same point; the basis does not "
            "separate points, use a larger N"
        )
    return dmin


def _tangent(basis, z):
    fv = frame_vector(basis, z)
    P = fv.Fprime if basis.m == 1 else fv.Fprime[0]
    return fv.F, P, tangent_vectors(fv.F, P)


def tangent_infinity(basis, z) -> ProjectivePoint:
    """[T_inf(z)]: the point of the tangent line at distance pi/2 from Phi_N(z)."""
    F, P, T = _tangent(basis, z)
    if np.linalg.norm(T) <= 1e-14 * np.linalg.norm(P) or not np.linalg.norm(T) > 0:
        raise EmbeddingError("degenerate derivative: Phi_N is not immersed here")
    return ProjectivePoint(T)


def project_from_tangent(basis, z, v: ProjectivePoint) -> ProjectivePoint:
    """O_z([v]) = [v - <v, T>/|T|^2 T], projection from T_inf(z) to H_z."""
    T = tangent_infinity(basis, z).homogeneous
    x = v.homogeneous
    out = x - np.vdot(T, x) * T
    if np.linalg.norm(out) <= 1e-12:
        raise EmbeddingError("projection from T_inf(z) is undefined at T_inf(z) itself")
    return ProjectivePoint(out)


# ------------------------------------------------------------ normal slice
def slice_sin2_geometric(Fz, Pz, Fw, Pw):
    """|<F(w), O_w(T(z))>|^2 / (|F(w)|^2 |O_w(T(z))|^2), vectorized."""
    Tz = tangent_vectors(Fz, Pz)
    Tw = tangent_vectors(Fw, Pw)
    Tz = Tz / np.linalg.norm(Tz, axis=-1)[..., None]
    Tw = Tw / np.linalg.norm(Tw, axis=-1)[..., None]
    O = Tz - inner(Tz, Tw)[..., None] * Tw
    Fn = Fw / np.linalg.norm(Fw, axis=-1)[..., None]
    On = np.linalg.norm(O, axis=-1)
    return np.clip(np.abs(inner(Fn, O)) ** 2 / On**2, 0.0, 1.0)


def slice_sin2_kernel(Fz, Pz, Fw, Pw):
    """The same quantity from E and its derivatives; returns (sin2, bracket)."""
    E, Ez, Ezw, dz, dw = derivs_arrays(Fz, Pz, Fw, Pw)
    bracket = 1.0 - np.abs(Ezw) ** 2 / (dz * dw * E)
    sin2 = np.abs(Ez) ** 2 / (E * dz * bracket)
    return sin2, bracket


def _basis_distance(basis, c1, z1, c2, z2):
    if hasattr(basis, "distance"):
        return basis.distance(c1, z1, c2, z2)
    return basis.geometry.distance(c1, z1, c2, z2)


def normal_slice_distance(basis, z, w, mode: str = GEOMETRIC) -> NormalSliceResult:
    """sin^2 of the distance from Phi_N(w) to the intersection of the normal hyperplanes at z and w."""
    if mode not in (GEOMETRIC, KERNEL):
        raise ValidationError(f"mode must be {GEOMETRIC!r} or {KERNEL!r}")
    pz = as_chart_point(z, basis.m)
    pw = as_chart_point(w, basis.m)
    d = float(_basis_distance(basis, [pz.chart], pz.z[None], [pw.chart], pw.z[None])[0])
    if d < NEAR_DIAGONAL:
        raise ValidationError("z and w coincide within the near-diagonal floor")
    Fz, Pz, Tz = _tangent(basis, pz)
    Fw, Pw, Tw = _tangent(basis, pw)
    for T, P in ((Tz, Pz), (Tw, Pw)):
        if np.linalg.norm(T) <= 1e-14 * np.linalg.norm(P):
            raise EmbeddingError("degenerate derivative: Phi_N is not immersed here")
    pair = (pz, pw)
    if mode == KERNEL:
        sin2, bracket = slice_sin2_kernel(Fz, Pz, Fw, Pw)
        if not abs(bracket) > BRACKET_FLOOR:
            sin2 = slice_sin2_geometric(Fz, Pz, Fw, Pw)
            return NormalSliceResult(float(sin2), GEOMETRIC, pair, fallback=True)
        return NormalSliceResult(float(np.clip(sin2, 0.0, 1.0)), KERNEL, pair)
    return NormalSliceResult(float(slice_sin2_geometric(Fz, Pz, Fw, Pw)), GEOMETRIC, pair)


# ---------------------------------------------------------- line restriction
@dataclass(frozen=True, eq=False)
class LineRestriction:
    """Basis restricted to the complex line ``t -> z0 + t * direction``.

    Behaves like a one-dimensional basis: ``evaluate`` returns F(t) and the
    directional derivative, so every curve routine applies unchanged.
    """

    basis: object
    origin: ChartPoint
    direction: np.ndarray
    t_max: Optional[float] = None

    m = 1

    @property
    def N(self) -> int:
        return self.basis.N

    @property
    def n_sections(self) -> int:
        return self.basis.n_sections

    def _ambient(self, charts, t):
        charts, t = as_point_arrays(charts, t, 1)
        if np.any(charts != 0):
            raise ValidationError("a line restriction has a single chart (id 0)")
        t = t[:, 0]
        if self.t_max is not None and np.any(np.abs(t) > self.t_max):
            raise ValidationError("line leaves the chart domain for the requested t")
        pts = self.origin.z[None, :] + t[:, None] * self.direction[None, :]
        c = np.full(len(t), self.origin.chart)
        geo = getattr(self.basis, "geometry", None)
        if geo is not None:
            geo.check_domain(c, pts)
        return c, pts

    def evaluate(self, charts, t):
        c, pts = self._ambient(charts, t)
        F, dF = self.basis.evaluate(c, pts)
        dirF = np.einsum("kmn,m->kn", dF, self.direction)
        return F, dirF[:, None, :]

    def potential(self, charts, t):
        c, pts = self._ambient(charts, t)
        return self.basis.potential(c, pts)

    def distance(self, c1, t1, c2, t2):
        _, t1 = as_point_arrays(c1, t1, 1)
        _, t2 = as_point_arrays(c2, t2, 1)
        return np.abs(t1[:, 0] - t2[:, 0])


def restrict_to_line(basis, z, direction, t_max: Optional[float] = None) -> LineRestriction:
    """Restrict the embedding to a complex line through ``z``."""
    p = as_chart_point(z, basis.m)
    d = np.atleast_1d(np.asarray(direction, dtype=complex))
    if d.shape != (basis.m,):
        raise ValidationError(f"direction must have {basis.m} components")
    nd = np.linalg.norm(d)
    if not nd > 0:
        raise ValidationError("direction must be nonzero")
    if abs(nd - 1.0) > 1e-12:
        d = d / nd
    return LineRestriction(basis, p, d, t_max)


# ----------------------------------------------------------- critical radius
def critical_radius(basis, mesh, pair_budget: int = 64, seed: int = 0, mode: str = GEOMETRIC,
                    check_resolution: bool = True) -> CriticalRadiusReport:
    """Resolution-limited estimate of the critical radius of Phi_N(M).

    ``pair_budget`` base vertices are drawn (seeded) and paired with every
    other mesh vertex.  Pairs closer than ``1/sqrt(2N)`` in the metric of L
    contribute ``arcsin sqrt(sin^2)`` of the normal-slice distance, minimized
    over both orientations; farther pairs contribute half their FS distance.
    """
    N = basis.N
    limit = 0.2 / math.sqrt(N)
    if check_resolution and mesh.max_edge_length > limit * (1 + 1e-9):
        raise ValidationError(
            f"mesh too coarse for N={N}: edge {mesh.max_edge_length:.4g} > {limit:.4g}"
        )
    if mode not in (GEOMETRIC, KERNEL):
        raise ValidationError("unknown mode")
    V = mesh.n_vertices
    F, dF = basis.evaluate(mesh.charts, mesh.coords)
    P = dF[:, 0, :]
    Fn = F / np.linalg.norm(F, axis=1)[:, None]
    rng = np.random.default_rng(seed)
    k = min(int(pair_budget), V)
    bases = np.sort(rng.choice(V, size=k, replace=False))
    threshold = 1.0 / math.sqrt(2 * N)
    near_min = math.inf
    near_min_sin2 = math.inf
    far_min = math.inf
    n_near = n_far = 0
    fallbacks = 0
    per_base = np.empty(k)
    others = np.arange(V)
    for idx, b in enumerate(bases):
        w = others[others != b]
        d = _basis_distance(basis, mesh.charts[[b]].repeat(len(w)), mesh.coords[[b]].repeat(len(w), axis=0),
                            mesh.charts[w], mesh.coords[w])
        near = (d < threshold) & (d >= NEAR_DIAGONAL)
        far = d >= threshold
        best = math.inf
        if np.any(near):
            wn = w[near]
            Fz = np.broadcast_to(F[b], (len(wn), F.shape[1]))
            Pz = np.broadcast_to(P[b], (len(wn), F.shape[1]))
            s_fwd = _slice(Fz, Pz, F[wn], P[wn], mode)
            s_bwd = _slice(F[wn], P[wn], Fz, Pz, mode)
            fallbacks += int(s_fwd[1] + s_bwd[1])
            s = np.minimum(s_fwd[0], s_bwd[0])
            smin = float(np.min(s))
            near_min_sin2 = min(near_min_sin2, smin)
            r = math.asin(math.sqrt(min(max(smin, 0.0), 1.0)))
            near_min = min(near_min, r)
            best = min(best, r)
            n_near += len(wn)
        if np.any(far):
            c = np.clip(np.abs(Fn[w[far]] @ Fn[b].conj()), 0.0, 1.0)
            r = 0.5 * float(np.arccos(np.max(c)))
            far_min = min(far_min, r)
            best = min(best, r)
            n_far += int(np.sum(far))
        per_base[idx] = best
    r_hat = min(near_min, far_min)
    if not math.isfinite(r_hat) or r_hat <= 0:
        raise EmbeddingError("critical radius estimate is not positive; the embedding degenerates")
    return CriticalRadiusReport(
        N=N,
        r_hat=r_hat,
        near_min=near_min,
        far_min=far_min,
        near_min_sin2=near_min_sin2,
        n_pairs=n_near + n_far,
        n_near=n_near,
        n_far=n_far,
        mesh_edge_length=mesh.max_edge_length,
        per_base_min=per_base,
        fallbacks=fallbacks,
    )


def _slice(Fz, Pz, Fw, Pw, mode):
    if mode == GEOMETRIC:
        return slice_sin2_geometric(Fz, Pz, Fw, Pw), 0
    s, bracket = slice_sin2_kernel(Fz, Pz, Fw, Pw)
    bad = ~(np.abs(bracket) > BRACKET_FLOOR)
    if np.any(bad):
        s = s.copy()
        s[bad] = slice_sin2_geometric(Fz[bad], Pz[bad], Fw[bad], Pw[bad])
    return np.clip(s, 0.0, 1.0), int(np.sum(bad))
