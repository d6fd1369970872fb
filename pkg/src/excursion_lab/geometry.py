"""Model Kähler manifolds with positive line bundles.

Two families are supported:

* ``ProjectiveSpace``: CP^m with the hyperplane bundle O(1) and the
  Fubini-Study metric, |e_L|^2 = 1 / (1 + |w|^2) in every affine chart.
* ``EllipticCurve``: C / (Z + tau Z) with a degree ``degL`` bundle whose
  metric has constant positive curvature; sections are theta functions.

Normalization: for the bundle L itself, omega = (i/2) dd^c phi has total
volume ``pi * degL`` (``pi^m / m!`` on CP^m).  ``Geometry.total_volume`` and
the quadrature weights measure the form of the N-th power, N * omega, so a
curve has ``total_volume = pi * N * degL``.  Sections are normalized against
``omega`` itself (see :mod:`excursion_lab.sections`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

import numpy as np

from ._validation import ValidationError, as_chart_point, as_point_arrays, check_positive_int

PROJECTIVE = "ProjectiveSpace"
ELLIPTIC = "EllipticCurve"
FAMILIES = (PROJECTIVE, ELLIPTIC)

# chart handoff radius on CP^m: chart 0 is preferred while max |w_j| <= 1.5
HANDOFF_RADIUS = 1.5
# CP^m affine charts accept coordinates up to this modulus
CHART_LIMIT = 1e4
# elliptic chart: |Im z| / Im(tau) must stay below this (theta sums stay finite)
ELLIPTIC_STRIP = 4.0


@dataclass(frozen=True)
class GeometrySpec:
    """Parameters of a model geometry.

    Parameters
    ----------
    family : {"ProjectiveSpace", "EllipticCurve"}
    N : int
        Tensor power of the line bundle.
    m : int
        Complex dimension (ProjectiveSpace only; elliptic curves have m = 1).
    tau : complex
        Modulus of the elliptic curve, ``Im(tau) > 0``.
    degL : int
        Degree of the base line bundle (fixed to 1 on projective space).
    """

    family: str
    N: int
    m: int = 1
    tau: complex = 1j
    degL: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        check_positive_int(self.N, "N")
        check_positive_int(self.m, "m")
        check_positive_int(self.degL, "degL")
        tau = complex(self.tau)
        if not np.isfinite(tau) or tau.imag <= 0:
            raise ValidationError(f"tau must have positive imaginary part, got {self.tau!r}")
        object.__setattr__(self, "tau", tau)
        if self.family == PROJECTIVE and self.degL != 1:
            raise ValidationError("ProjectiveSpace uses the hyperplane bundle, degL must be 1")
        if self.family == ELLIPTIC and self.m != 1:
            raise ValidationError("EllipticCurve has complex dimension m = 1")

    @property
    def total_degree(self) -> int:
        """``N * degL``; the degree of L^N on a curve."""
        return self.N * self.degL

    def with_power(self, N: int) -> "GeometrySpec":
        return GeometrySpec(self.family, N, self.m, self.tau, self.degL)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "N": self.N,
            "m": self.m,
            "tau": [self.tau.real, self.tau.imag],
            "degL": self.degL,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeometrySpec":
        tau = data.get("tau", [0.0, 1.0])
        if isinstance(tau, (list, tuple)):
            tau = complex(float(tau[0]), float(tau[1]))
        elif isinstance(tau, str):
            tau = complex(tau.replace(" ", ""))
        return cls(
            family=data["family"],
            N=data["N"],
            m=data.get("m", 1),
            tau=tau,
            degL=data.get("degL", 1),
        )


@dataclass(frozen=True, eq=False)
class Geometry:
    """A model Kähler manifold with the metric data of L^N.

    Built by :func:`make_geometry`; immutable afterwards.
    """

    spec: GeometrySpec
    total_volume: float
    genus: Optional[int]

    # ------------------------------------------------------------------ basics
    @property
    def family(self) -> str:
        return self.spec.family

    @property
    def m(self) -> int:
        return self.spec.m

    @property
    def N(self) -> int:
        return self.spec.N

    @property
    def n_charts(self) -> int:
        return self.m + 1 if self.family == PROJECTIVE else 1

    @property
    def base_volume(self) -> float:
        """Volume of M for the form of L itself (power one)."""
        return self.total_volume / self.N**self.m

    @property
    def _lam(self) -> float:
        # elliptic: constant curvature d^2 phi / dz dzbar of the base potential
        t = self.spec.tau.imag
        return math.pi * self.spec.degL / t

    def charts(self) -> list[dict]:
        """Describe the chart atlas."""
        if self.family == PROJECTIVE:
            return [
                {
                    "id": k,
                    "domain": f"affine chart Z_{k} != 0, |w| <= {CHART_LIMIT:g}",
                    "transition": "w -> Z / Z_k with Z_k removed",
                    "preferred": f"max|w| <= {HANDOFF_RADIUS}" if k == 0 else "largest |Z_k|",
                }
                for k in range(self.m + 1)
            ]
        return [
            {
                "id": 0,
                "domain": f"|Im z| <= {ELLIPTIC_STRIP} Im(tau)",
                "transition": "lattice translations z -> z + a + b tau",
                "preferred": "fundamental parallelogram",
            }
        ]

    def check_domain(self, charts, coords) -> None:
        charts, coords = as_point_arrays(charts, coords, self.m)
        if np.any((charts < 0) | (charts >= self.n_charts)):
            raise ValidationError("chart id out of range")
        if not np.all(np.isfinite(coords)):
            raise ValidationError("chart coordinates must be finite")
        if self.family == PROJECTIVE:
            if np.any(np.abs(coords) > CHART_LIMIT):
                raise ValidationError("point outside chart domain")
        else:
            t = self.spec.tau.imag
            if np.any(np.abs(coords[:, 0].imag) > ELLIPTIC_STRIP * t):
                raise ValidationError("point outside chart domain")

    # --------------------------------------------------------- metric data
    def potential(self, charts, coords) -> np.ndarray:
        """Potential phi of L^N, with |e_L^N|_h^2 = exp(-phi)."""
        charts, coords = as_point_arrays(charts, coords, self.m)
        if self.family == PROJECTIVE:
            return self.N * np.log1p(np.sum(np.abs(coords) ** 2, axis=1))
        t = self.spec.tau.imag
        return 2.0 * math.pi * self.spec.total_degree * coords[:, 0].imag ** 2 / t

    def curvature(self, charts, coords) -> np.ndarray:
        """Hermitian matrices ``d^2 phi / dz_i dzbar_j`` of L^N, shape (k, m, m).

        The Kähler form of L^N is ``(i/2) sum g_ij dz_i ^ dzbar_j``.
        """
        charts, coords = as_point_arrays(charts, coords, self.m)
        k = coords.shape[0]
        if self.family == PROJECTIVE:
            r2 = 1.0 + np.sum(np.abs(coords) ** 2, axis=1)
            eye = np.eye(self.m)[None, :, :] * r2[:, None, None]
            outer = np.conj(coords)[:, :, None] * coords[:, None, :]
            return self.N * (eye - outer) / r2[:, None, None] ** 2
        return np.full((k, 1, 1), self.N * self._lam, dtype=complex)

    def base_scale(self, charts, coords) -> np.ndarray:
        """Conformal factor of the base metric on a curve (``g/N`` for m = 1)."""
        return np.real(self.curvature(charts, coords)[:, 0, 0]) / self.N

    # ------------------------------------------------------- chart handling
    def homogeneous(self, charts, coords) -> np.ndarray:
        """Homogeneous coordinates (k, m+1) of CP^m points."""
        if self.family != PROJECTIVE:
            raise ValidationError("homogeneous coordinates exist only on projective space")
        charts, coords = as_point_arrays(charts, coords, self.m)
        k = coords.shape[0]
        Z = np.empty((k, self.m + 1), dtype=complex)
        for c in range(self.m + 1):
            sel = charts == c
            if not np.any(sel):
                continue
            cols = [j for j in range(self.m + 1) if j != c]
            Z[np.ix_(sel, cols)] = coords[sel]
            Z[sel, c] = 1.0
        return Z

    def from_homogeneous(self, Z, charts=None):
        """Chart coordinates of homogeneous points; preferred chart when ``charts`` is None."""
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        if charts is None:
            charts = self._preferred_projective_chart(Z)
        charts = np.broadcast_to(np.asarray(charts, dtype=int), (Z.shape[0],)).copy()
        coords = np.empty((Z.shape[0], self.m), dtype=complex)
        for c in range(self.m + 1):
            sel = charts == c
            if not np.any(sel):
                continue
            cols = [j for j in range(self.m + 1) if j != c]
            coords[sel] = Z[np.ix_(sel, cols)] / Z[sel, c][:, None]
        return charts, coords

    def _preferred_projective_chart(self, Z):
        a = np.abs(Z)
        chart = np.argmax(a, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            in0 = np.max(a[:, 1:], axis=1) <= HANDOFF_RADIUS * a[:, 0]
        chart[in0] = 0
        return chart

    def normalize(self, charts, coords):
        """Re-express points in their preferred chart.

        CP^m: chart 0 while ``max|w| <= 1.5``, otherwise the chart of the
        largest homogeneous coordinate.  Elliptic: reduce into the
        fundamental parallelogram.
        """
        charts, coords = as_point_arrays(charts, coords, self.m)
        if self.family == PROJECTIVE:
            return self.from_homogeneous(self.homogeneous(charts, coords))
        a, b = self.lattice_coords(coords[:, 0])
        a = a - np.floor(a)
        b = b - np.floor(b)
        return charts, (a + b * self.spec.tau)[:, None]

    def to_chart(self, charts, coords, target: int):
        """Re-express points in a given chart."""
        charts, coords = as_point_arrays(charts, coords, self.m)
        if self.family == PROJECTIVE:
            return self.from_homogeneous(self.homogeneous(charts, coords), target)
        return np.full_like(charts, target), coords

    def lattice_coords(self, z):
        """Real coordinates (a, b) with ``z = a + b * tau``."""
        z = np.asarray(z, dtype=complex)
        tau = self.spec.tau
        b = z.imag / tau.imag
        a = z.real - b * tau.real
        return a, b

    # ------------------------------------------------------------ distance
    def distance(self, c1, z1, c2, z2) -> np.ndarray:
        """Geodesic distance for the metric of L (power one), vectorized.

        Near a point this agrees with preferred (normal) coordinates, so it
        is the "chart unit" distance used for near/far pair splits.
        """
        c1, z1 = as_point_arrays(c1, z1, self.m)
        c2, z2 = as_point_arrays(c2, z2, self.m)
        if self.family == PROJECTIVE:
            Z1 = self.homogeneous(c1, z1)
            Z2 = self.homogeneous(c2, z2)
            num = np.abs(np.sum(Z1 * np.conj(Z2), axis=1))
            den = np.linalg.norm(Z1, axis=1) * np.linalg.norm(Z2, axis=1)
            return _stable_arccos(num / den, Z1, Z2)
        tau = self.spec.tau
        dz = z1[:, 0] - z2[:, 0]
        a, b = self.lattice_coords(dz)
        a = a - np.round(a)
        b = b - np.round(b)
        best = np.full(dz.shape, np.inf)
        for i, j in product((-1, 0, 1), repeat=2):
            best = np.minimum(best, np.abs((a + i) + (b + j) * tau))
        return math.sqrt(self._lam) * best

    def midpoint(self, c1, z1, c2, z2):
        """Geodesic midpoints on a curve (short arc), in preferred charts."""
        if self.m != 1:
            raise ValidationError("midpoints are only needed for curve meshes")
        c1, z1 = as_point_arrays(c1, z1, 1)
        c2, z2 = as_point_arrays(c2, z2, 1)
        if self.family == PROJECTIVE:
            Z1 = self.homogeneous(c1, z1)
            Z2 = self.homogeneous(c2, z2)
            Z1 = Z1 / np.linalg.norm(Z1, axis=1)[:, None]
            Z2 = Z2 / np.linalg.norm(Z2, axis=1)[:, None]
            ip = np.sum(Z1 * np.conj(Z2), axis=1)
            phase = np.where(np.abs(ip) > 0, ip / np.where(np.abs(ip) > 0, np.abs(ip), 1.0), 1.0)
            return self.from_homogeneous(Z1 + phase[:, None] * Z2)
        dz = z2[:, 0] - z1[:, 0]
        a, b = self.lattice_coords(dz)
        dz = (a - np.round(a)) + (b - np.round(b)) * self.spec.tau
        return self.normalize(c1, (z1[:, 0] + 0.5 * dz)[:, None])

    # ------------------------------------------------------------ sampling
    def sample_uniform(self, rng: np.random.Generator, k: int):
        """Points distributed by the volume form, returned in preferred charts."""
        if self.family == PROJECTIVE:
            Z = rng.standard_normal((k, self.m + 1)) + 1j * rng.standard_normal((k, self.m + 1))
            return self.from_homogeneous(Z)
        a = rng.random(k)
        b = rng.random(k)
        return np.zeros(k, dtype=int), (a + b * self.spec.tau)[:, None]


def _stable_arccos(c, Z1, Z2):
    # arccos loses precision near 1; use the arcsin of the projective chord there
    c = np.clip(c, 0.0, 1.0)
    out = np.arccos(c)
    near = c > 0.9
    if np.any(near):
        u = Z1[near] / np.linalg.norm(Z1[near], axis=1)[:, None]
        v = Z2[near] / np.linalg.norm(Z2[near], axis=1)[:, None]
        ip = np.sum(u * np.conj(v), axis=1)
        s = np.linalg.norm(u - ip[:, None] * v, axis=1)
        out[near] = np.arcsin(np.clip(s, 0.0, 1.0))
    return out


# ====================================================================== build
def make_geometry(spec: GeometrySpec, probe: int = 12) -> Geometry:
    """Build a geometry, checking positivity of the curvature on a probe grid.

    Examples
    --------
    >>> g = make_geometry(GeometrySpec("ProjectiveSpace", N=4))
    >>> round(g.total_volume / math.pi, 10), g.genus
    (4.0, 0)
    """
    if not isinstance(spec, GeometrySpec):
        raise ValidationError("make_geometry expects a GeometrySpec")
    if spec.family == PROJECTIVE:
        genus = 0 if spec.m == 1 else None
    else:
        genus = 1
    # provisional object to evaluate the quadrature; volume filled in below
    geo = Geometry(spec=spec, total_volume=float("nan"), genus=genus)
    charts, coords = _probe_grid(geo, probe)
    eig = np.linalg.eigvalsh(geo.curvature(charts, coords))
    if np.min(eig) <= 0:
        raise ValidationError("curvature is not positive on the probe grid")
    rule = quadrature_rule(geo, order=max(4, spec.m + 2))
    volume = float(math.fsum(rule.weights))
    return Geometry(spec=spec, total_volume=volume, genus=genus)


def _probe_grid(geo: Geometry, k: int):
    if geo.family == PROJECTIVE:
        grid = np.linspace(-2.0, 2.0, k)
        pts = np.array(list(product(grid, repeat=2 * geo.m)))
        coords = pts[:, : geo.m] + 1j * pts[:, geo.m :]
        return np.zeros(len(coords), dtype=int), coords
    a, b = np.meshgrid(np.linspace(0, 1, k), np.linspace(0, 1, k))
    z = (a + b * geo.spec.tau).ravel()
    return np.zeros(z.size, dtype=int), z[:, None]


def curvature_form(geometry: Geometry, point) -> np.ndarray:
    """Curvature matrix ``d^2 phi / dz_i dzbar_j`` of L^N at one chart point.

    The Kähler form is ``(i/2) sum g_ij dz_i ^ dzbar_j``; on CP^1 at the
    origin the value is ``N``.
    """
    p = as_chart_point(point, geometry.m)
    geometry.check_domain([p.chart], p.z[None, :])
    return geometry.curvature([p.chart], p.z[None, :])[0]


def curvature_fd(geometry: Geometry, point, h: float = 1e-3) -> np.ndarray:
    """Fourth-order finite-difference curvature matrix from the potential."""
    p = as_chart_point(point, geometry.m)
    m = geometry.m

    def phi(z):
        return geometry.potential([p.chart], z[None, :])[0]

    def d2(dir1, dir2):
        # mixed second derivative along real directions dir1, dir2 (complex m-vectors)
        st = [(-2, 1.0 / 12), (-1, -8.0 / 12), (1, 8.0 / 12), (2, -1.0 / 12)]
        total = 0.0
        for a, wa in st:
            for b, wb in st:
                total += wa * wb * phi(p.z + a * h * dir1 + b * h * dir2)
        return total / h**2

    g = np.empty((m, m), dtype=complex)
    e = np.eye(m)
    for i in range(m):
        for j in range(m):
            xi, yi = e[i], 1j * e[i]
            xj, yj = e[j], 1j * e[j]
            g[i, j] = 0.25 * (d2(xi, xj) + d2(yi, yj) + 1j * (d2(xi, yj) - d2(yi, xj)))
    return g


# ======================================================================= mesh
@dataclass(frozen=True, eq=False)
class TriMesh:
    """Closed oriented triangulated surface with chart coordinates per vertex."""

    charts: np.ndarray
    coords: np.ndarray
    edges: np.ndarray
    triangles: np.ndarray
    genus: int
    max_edge_length: float
    neighbors: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.charts)

    @property
    def euler_characteristic(self) -> int:
        return len(self.charts) - len(self.edges) + len(self.triangles)

    def to_text(self) -> str:
        """Vertex/face listing, one record per line."""
        lines = [f"# genus {self.genus} vertices {self.n_vertices} faces {len(self.triangles)}"]
        for c, z in zip(self.charts, self.coords):
            zs = " ".join(f"{w.real:.17g} {w.imag:.17g}" for w in z)
            lines.append(f"v {c} {zs}")
        for a, b, c in self.triangles:
            lines.append(f"f {a} {b} {c}")
        return "\n".join(lines) + "\n"


def _edges_and_neighbors(triangles: np.ndarray, n_vertices: int):
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e.sort(axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    if np.any(counts != 2):
        raise ValidationError("mesh is not closed: some edge is not shared by two triangles")
    adj = [[] for _ in range(n_vertices)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    width = max(len(a) for a in adj)
    nbr = np.empty((n_vertices, width), dtype=np.intp)
    for v, a in enumerate(adj):
        nbr[v, : len(a)] = a
        nbr[v, len(a) :] = v
    return edges, nbr


def _icosahedron():
    p = (1 + 5**0.5) / 2
    v = np.array(
        [
            [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
            [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
            [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    return v / np.linalg.norm(v, axis=1)[:, None], f


def icosphere(freq: int):
    """Unit-sphere vertices and outward-oriented faces, class I subdivision."""
    base_v, base_f = _icosahedron()
    keys: dict = {}
    verts: list = []
    tris: list = []

    def vid(p):
        p = p / np.linalg.norm(p)
        key = tuple(np.round(p, 9))
        idx = keys.get(key)
        if idx is None:
            idx = keys[key] = len(verts)
            verts.append(p)
        return idx

    for a, b, c in base_f:
        A, B, C = base_v[a], base_v[b], base_v[c]
        grid = {}
        for i in range(freq + 1):
            for j in range(freq + 1 - i):
                grid[i, j] = vid(A * (freq - i - j) + B * i + C * j)
        for i in range(freq):
            for j in range(freq - i):
                tris.append((grid[i, j], grid[i + 1, j], grid[i, j + 1]))
                if i + j < freq - 1:
                    tris.append((grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]))
    V = np.array(verts)
    T = np.array(tris)
    # outward orientation
    n = np.cross(V[T[:, 1]] - V[T[:, 0]], V[T[:, 2]] - V[T[:, 0]])
    flip = np.sum(n * V[T[:, 0]], axis=1) < 0
    T[flip] = T[flip][:, [0, 2, 1]]
    return V, T


def _sphere_to_chart(V):
    # Hopf map: sphere point -> [Z0 : Z1] with w = (X + iY) / (1 + Z)
    X, Y, Zc = V[:, 0], V[:, 1], V[:, 2]
    xy = X + 1j * Y
    with np.errstate(divide="ignore", invalid="ignore"):
        phase = np.where(np.abs(xy) > 0, xy / np.abs(xy), 1.0)
    Z0 = np.sqrt(np.clip(1.0 + Zc, 0, None) / 2.0)
    Z1 = np.sqrt(np.clip(1.0 - Zc, 0, None) / 2.0) * phase
    return np.stack([Z0 + 0j, Z1], axis=1)


def build_mesh(geometry: Geometry, target_edge_length: float) -> TriMesh:
    """Triangulate a curve with edges no longer than ``target_edge_length``.

    Lengths are geodesic lengths for the metric of L (power one), which are
    chart units at the centre of preferred coordinates.  Genus 0 uses an
    icosphere, genus 1 a structured grid on the fundamental parallelogram.
    """
    if geometry.m != 1:
        raise ValidationError("meshing is supported only for curves (m = 1)")
    h = float(target_edge_length)
    if not np.isfinite(h) or h <= 0:
        raise ValidationError("target edge length must be positive")
    if geometry.family == PROJECTIVE:
        # sphere of radius 1/2: base length = half the unit-sphere angle
        freq = max(1, int(math.ceil(1.1071487177940904 / (2 * h))))
        while True:
            V, T = icosphere(freq)
            e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
            cosang = np.clip(np.sum(V[e[:, 0]] * V[e[:, 1]], axis=1), -1, 1)
            longest = 0.5 * float(np.max(np.arccos(cosang)))
            if longest <= h:
                break
            freq += 1
        hom = _sphere_to_chart(V)
        charts, coords = geometry.from_homogeneous(hom)
        edges, nbr = _edges_and_neighbors(T, len(V))
        mesh = TriMesh(charts, coords, edges, T, 0, longest, nbr)
    else:
        tau = geometry.spec.tau
        scale = math.sqrt(geometry._lam)
        anti = abs(tau - 1) <= abs(tau + 1)
        diag = abs(tau - 1) if anti else abs(tau + 1)
        longest_unit = max(1.0, abs(tau), diag)
        K = max(3, int(math.ceil(scale * longest_unit / h)))
        longest = scale * longest_unit / K
        idx = np.arange(K * K).reshape(K, K)
        tris = []
        for i in range(K):
            for j in range(K):
                v00, v10 = idx[i, j], idx[(i + 1) % K, j]
                v01, v11 = idx[i, (j + 1) % K], idx[(i + 1) % K, (j + 1) % K]
                if anti:
                    tris.append((v00, v10, v01))
                    tris.append((v10, v11, v01))
                else:
                    tris.append((v00, v10, v11))
                    tris.append((v00, v11, v01))
        T = np.array(tris)
        a, b = np.meshgrid(np.arange(K) / K, np.arange(K) / K, indexing="ij")
        z = (a + b * tau).ravel()
        charts = np.zeros(K * K, dtype=int)
        edges, nbr = _edges_and_neighbors(T, K * K)
        mesh = TriMesh(charts, z[:, None], edges, T, 1, longest, nbr)
    if mesh.euler_characteristic != 2 - 2 * mesh.genus:
        raise ValidationError("resolution too coarse to close the surface")
    return mesh


# ================================================================= quadrature
@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes (chart, coordinates) and positive weights for the volume of L^N."""

    charts: np.ndarray
    coords: np.ndarray
    weights: np.ndarray
    order: int

    def integrate(self, values) -> complex:
        values = np.asarray(values)
        return np.sum(self.weights * values)


def default_quadrature_order(spec: GeometrySpec) -> int:
    if spec.family == PROJECTIVE:
        return max(8, spec.N + 2)
    return max(24, 8 * spec.total_degree + 8)


def quadrature_rule(geometry: Geometry, order: Optional[int] = None) -> QuadratureRule:
    """Quadrature for integrals against the volume form of L^N.

    Projective space: a product rule in simplex/angle coordinates
    ``t_j = |Z_j|^2 / |Z|^2`` (collapsed Gauss-Legendre) times uniform
    angles, exact for the polynomial integrands of Gram matrices once
    ``order > N``.  Elliptic curve: uniform ``order x order`` grid on the
    fundamental parallelogram, spectrally accurate for periodic integrands.
    """
    if order is None:
        order = default_quadrature_order(geometry.spec)
    order = check_positive_int(order, "order")
    spec = geometry.spec
    scale = spec.N**spec.m
    if spec.family == ELLIPTIC:
        K = order
        a, b = np.meshgrid((np.arange(K) + 0.5) / K, (np.arange(K) + 0.5) / K, indexing="ij")
        z = (a + b * spec.tau).ravel()
        area = math.pi * spec.total_degree
        w = np.full(z.size, area / z.size)
        return QuadratureRule(np.zeros(z.size, dtype=int), z[:, None], w, order)

    m = spec.m
    x, wx = np.polynomial.legendre.leggauss(order + m)
    x = 0.5 * (x + 1.0)
    wx = 0.5 * wx
    n_ang = 2 * order
    theta = 2 * math.pi * np.arange(n_ang) / n_ang
    t_nodes = []
    t_weights = []
    for combo in product(range(len(x)), repeat=m):
        xs = x[list(combo)]
        rest = 1.0
        ts = []
        jac = 1.0
        for xj in xs:
            ts.append(rest * xj)
            jac *= rest
            rest *= 1.0 - xj
        t_nodes.append([rest] + ts)
        t_weights.append(float(np.prod(wx[list(combo)])) * jac)
    t_nodes = np.array(t_nodes)
    t_weights = np.array(t_weights)
    angles = np.array(list(product(theta, repeat=m)))
    Z = np.sqrt(t_nodes)[:, None, :].astype(complex).repeat(len(angles), axis=1)
    Z[:, :, 1:] *= np.exp(1j * angles)[None, :, :]
    Z = Z.reshape(-1, m + 1)
    # uniform measure: dV = 2^-m dt dtheta for omega of O(1)
    w = (t_weights[:, None] * np.full(len(angles), (2 * math.pi / n_ang) ** m)[None, :]).ravel()
    w = w / 2**m * scale
    charts, coords = geometry.from_homogeneous(Z)
    return QuadratureRule(charts, coords, w, order)
