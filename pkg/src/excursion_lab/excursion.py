"""Random unit sections, excursion-set topology and the Monte-Carlo driver.

A coefficient vector C on the unit sphere of C^{n+1} defines the section
``s = sum conj(C_i) s_i``, whose normalized amplitude is

    f(z) = |s(z)|_h / sqrt(Pi_N(z, z)) = |<C, F(z)>| / |F(z)| = cos d_FS(C, Phi_N(z)).

Monte-Carlo runs are split into fixed-size chunks keyed only by sample
index, so results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ._validation import ValidationError, check_positive_int

# vertex values closer than this to the threshold trigger a resample
DEGENERACY_DELTA = 1e-9
CHUNK_SIZE = 2048
MAX_ATTEMPTS = 64
SUP_TOL = 1e-10
QUANTILE_LEVELS = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)


class DegenerateThresholdError(ValidationError):
    """A vertex value lies within the degeneracy band around the threshold."""


# ------------------------------------------------------------- sampling
@dataclass(frozen=True, eq=False)
class CoefficientVector:
    C: np.ndarray
    seed: int
    index: int
    attempt: int = 0


def _stream(seed: int, index: int, attempt: int) -> np.random.Generator:
    # counter-based: the stream is a pure function of (seed, index, attempt)
    bitgen = np.random.Philox(key=int(seed), counter=[0, int(index), int(attempt), 0])
    return np.random.Generator(bitgen)


def _check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValidationError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


def sample_coefficients(seed: int, index: int, n: int, attempt: int = 0) -> CoefficientVector:
    """Uniform point of the unit sphere in C^{n+1}, reproducible from (seed, index)."""
    seed = _check_seed(seed)
    n = check_positive_int(n, "n")
    if index < 0 or attempt < 0:
        raise ValidationError("index and attempt must be non-negative")
    x = _stream(seed, index, attempt).standard_normal(2 * (n + 1))
    C = x[: n + 1] + 1j * x[n + 1:]
    return CoefficientVector(C / np.linalg.norm(C), seed, int(index), int(attempt))


def sample_block(seed: int, start: int, count: int, n: int) -> np.ndarray:
    """Rows ``sample_coefficients(seed, start + i, n).C`` for ``i < count``."""
    out = np.empty((count, n + 1), dtype=complex)
    for i in range(count):
        out[i] = sample_coefficients(seed, start + i, n).C
    return out


# ----------------------------------------------------------------- fields
@dataclass(frozen=True, eq=False)
class FieldValues:
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def _unit_frames(onb, charts, coords) -> np.ndarray:
    F, _ = onb.evaluate(charts, coords)
    return F / np.linalg.norm(F, axis=1)[:, None]


def _as_C(C) -> np.ndarray:
    if isinstance(C, CoefficientVector):
        C = C.C
    C = np.asarray(C, dtype=complex)
    nrm = np.linalg.norm(C)
    if not nrm > 0:
        raise ValidationError("coefficient vector must be nonzero")
    return C / nrm


def field_on_mesh(onb, C, mesh) -> FieldValues:
    """``f_v = |<C, F(v)>| / |F(v)|`` at every mesh vertex."""
    C = _as_C(C)
    Fh = _unit_frames(onb, mesh.charts, mesh.coords)
    return FieldValues(np.minimum(np.abs(Fh @ np.conj(C)), 1.0))


def field_hnorm(onb, C, mesh) -> FieldValues:
    """The same field through h-norms: ``|s(v)|_h / sqrt(Pi_N(v, v))``."""
    C = _as_C(C)
    F, _ = onb.evaluate(mesh.charts, mesh.coords)
    half = np.exp(-0.5 * onb.potential(mesh.charts, mesh.coords))
    s_h = np.abs(F @ np.conj(C)) * half
    pi_diag = np.sum(np.abs(F) ** 2, axis=1) * half**2
    return FieldValues(s_h / np.sqrt(pi_diag))


# --------------------------------------------------------------- topology
def _values_array(values) -> np.ndarray:
    return np.asarray(values.values if isinstance(values, FieldValues) else values, dtype=float)


def _check_threshold(vals, u):
    if np.any(np.abs(vals - u) < DEGENERACY_DELTA):
        raise DegenerateThresholdError(
            f"a vertex value lies within {DEGENERACY_DELTA:g} of u = {u!r}; resample"
        )


def superlevel_euler(mesh, values, u: float) -> int:
    """Euler characteristic of the vertex-induced subcomplex on ``{f > u}``."""
    vals = _values_array(values)
    _check_threshold(vals, u)
    return int(_batch_chi(mesh, (vals > u)[None, :])[0])


def component_count(mesh, values, u: float) -> int:
    """Connected components of the vertex-induced subcomplex on ``{f > u}``."""
    vals = _values_array(values)
    _check_threshold(vals, u)
    return _components(mesh, vals > u)


def _batch_chi(mesh, mask: np.ndarray) -> np.ndarray:
    e = mesh.edges
    t = mesh.triangles
    V = mask.sum(axis=1)
    E = (mask[:, e[:, 0]] & mask[:, e[:, 1]]).sum(axis=1)
    F = (mask[:, t[:, 0]] & mask[:, t[:, 1]] & mask[:, t[:, 2]]).sum(axis=1)
    return V - E + F


def _components(mesh, mask: np.ndarray) -> int:
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return 0
    e = mesh.edges
    keep = mask[e[:, 0]] & mask[e[:, 1]]
    remap = np.full(mesh.n_vertices, -1)
    remap[idx] = np.arange(idx.size)
    a = remap[e[keep, 0]]
    b = remap[e[keep, 1]]
    graph = coo_matrix((np.ones(a.size), (a, b)), shape=(idx.size, idx.size))
    n, _ = connected_components(graph, directed=False)
    return int(n)


# ---------------------------------------------------------- sup refinement
def _log_field_grad(onb, charts, z, C):
    """h = log f^2 with its complex derivative dh/dz and the metric density k."""
    F, dF = onb.evaluate(charts, z[:, None])
    P = dF[:, 0, :]
    a = np.sum(F * np.conj(C), axis=1)
    da = np.sum(P * np.conj(C), axis=1)
    nF = np.sum(np.abs(F) ** 2, axis=1)
    pf = np.sum(P * np.conj(F), axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.log(np.abs(a) ** 2 / nF)
        dh = da / a - pf / nF
    k = np.sum(np.abs(P) ** 2, axis=1) / nF - np.abs(pf) ** 2 / nF**2
    return h, dh, k


def _ascend(onb, charts, z, C, max_iter: int = 60):
    """Batched maximization of log f^2 from the given starts.

    Newton steps with a finite-difference Hessian of the analytic gradient;
    when that Hessian is not negative definite the step falls back to
    ``conj(dh) / k``, which is exact for the Laplacian part.  Steps are
    halved until the objective does not decrease.
    """
    geo = onb.geometry
    charts = charts.copy()
    z = z.astype(complex).copy()
    C = np.asarray(C)
    h, dh, k = _log_field_grad(onb, charts, z, C)
    active = np.isfinite(h)
    scale = 1.0 / np.sqrt(k)
    for _ in range(max_iter):
        if not np.any(active):
            break
        ia = np.flatnonzero(active)
        ca, za, Ca = charts[ia], z[ia], C[ia]
        eps = 1e-5 * scale[ia]
        g0 = np.stack([2 * dh[ia].real, -2 * dh[ia].imag], axis=1)
        H = np.empty((ia.size, 2, 2))
        for col, dirn in enumerate((1.0, 1j)):
            _, dp, _ = _log_field_grad(onb, ca, za + eps * dirn, Ca)
            _, dm, _ = _log_field_grad(onb, ca, za - eps * dirn, Ca)
            H[:, 0, col] = (2 * dp.real - 2 * dm.real) / (2 * eps)
            H[:, 1, col] = (-2 * dp.imag + 2 * dm.imag) / (2 * eps)
        H = 0.5 * (H + np.transpose(H, (0, 2, 1)))
        det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] ** 2
        negdef = (H[:, 0, 0] < 0) & (det > 0)
        step = np.conj(dh[ia]) / k[ia]
        if np.any(negdef):
            Hn, gn = H[negdef], g0[negdef]
            sol = -np.linalg.solve(Hn, gn[:, :, None])[:, :, 0]
            step[negdef] = sol[:, 0] + 1j * sol[:, 1]
        # keep steps inside a ball of a few metric lengths
        cap = 2.0 * scale[ia]
        big = np.abs(step) > cap
        step[big] *= cap[big] / np.abs(step[big])
        t = np.ones(ia.size)
        new_h = np.full(ia.size, -np.inf)
        pending = np.ones(ia.size, dtype=bool)
        nc, nz = ca.copy(), za.copy()
        for _ in range(30):
            ip = np.flatnonzero(pending)
            if ip.size == 0:
                break
            cc, zz = geo.normalize(ca[ip], (za[ip] + t[ip] * step[ip])[:, None])
            hh, _, _ = _log_field_grad(onb, cc, zz[:, 0], Ca[ip])
            ok = hh >= h[ia][ip] - 1e-15 * np.abs(h[ia][ip])
            good = ip[ok]
            new_h[good] = hh[ok]
            nc[good], nz[good] = cc[ok], zz[ok, 0]
            pending[good] = False
            t[ip[~ok]] *= 0.5
        moved = ~pending
        # converged: tiny step or no admissible step
        done = (~moved) | (np.abs(t * step) < SUP_TOL * 1e-2 * scale[ia])
        upd = ia[moved]
        charts[upd], z[upd] = nc[moved], nz[moved]
        hh, dd, kk = _log_field_grad(onb, charts[upd], z[upd], C[upd])
        h[upd], dh[upd], k[upd] = hh, dd, kk
        scale[upd] = 1.0 / np.sqrt(kk)
        active[ia[done]] = False
    f = np.minimum(np.sqrt(np.exp(h)), 1.0)
    return f, charts, z


def _lipschitz(onb, mesh) -> float:
    """Bound on |grad d_FS(C, Phi_N(z))| in units of the base metric, with a safety factor."""
    F, dF = onb.evaluate(mesh.charts, mesh.coords)
    P = dF[:, 0, :]
    nF = np.sum(np.abs(F) ** 2, axis=1)
    k = np.sum(np.abs(P) ** 2, axis=1) / nF - np.abs(np.sum(P * np.conj(F), axis=1)) ** 2 / nF**2
    lam = onb.geometry.base_scale(mesh.charts, mesh.coords)
    return 1.25 * float(np.sqrt(np.max(k / lam)))


def _start_vertices(mesh, vals, cutoff):
    """Local-maximum vertices with value at least ``cutoff`` (always includes the argmax)."""
    nb = mesh.neighbors
    is_max = vals >= np.max(vals[nb], axis=1)
    sel = np.flatnonzero(is_max & (vals >= cutoff))
    best = int(np.argmax(vals))
    if best not in sel:
        sel = np.append(sel, best)
    return sel


def sup_refine(onb, C, mesh, values=None) -> float:
    """Refined supremum of the field, starting from the best mesh vertices."""
    C = _as_C(C)
    vals = field_on_mesh(onb, C, mesh).values if values is None else _values_array(values)
    L = _lipschitz(onb, mesh)
    vmax = float(np.max(vals))
    cutoff = math.cos(min(math.acos(min(vmax, 1.0)) + L * mesh.max_edge_length, math.pi / 2))
    starts = _start_vertices(mesh, vals, cutoff)
    f, _, _ = _ascend(onb, mesh.charts[starts], mesh.coords[starts, 0],
                      np.broadcast_to(C, (len(starts), C.size)))
    return float(max(vmax, np.max(f)))


# ------------------------------------------------------ local refinement
MAX_REFINE_LEVELS = 6


def _local_topology(T: np.ndarray, mask: np.ndarray) -> tuple[int, int]:
    """(chi, components) of the subcomplex of triangles T induced by ``mask``."""
    e = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
    e = np.unique(e, axis=0)
    used = np.unique(T)
    inV = used[mask[used]]
    ke = mask[e[:, 0]] & mask[e[:, 1]]
    kt = mask[T[:, 0]] & mask[T[:, 1]] & mask[T[:, 2]]
    chi = inV.size - int(ke.sum()) + int(kt.sum())
    if inV.size == 0:
        return 0, 0
    remap = np.full(mask.size, -1)
    remap[inV] = np.arange(inV.size)
    a, b = remap[e[ke, 0]], remap[e[ke, 1]]
    graph = coo_matrix((np.ones(a.size), (a, b)), shape=(inV.size, inV.size))
    return int(chi), int(connected_components(graph, directed=False)[0])


def _subdivide(onb, C, T, charts, coords, vals):
    """Split every triangle into four through geodesic edge midpoints."""
    nv = len(vals)
    e = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
    e, inv = np.unique(e, axis=0, return_inverse=True)
    inv = inv.reshape(3, -1)
    mc, mz = onb.geometry.midpoint(charts[e[:, 0]], coords[e[:, 0]], charts[e[:, 1]], coords[e[:, 1]])
    mv = np.minimum(np.abs(_unit_frames(onb, mc, mz) @ np.conj(C)), 1.0)
    ab, bc, ca = nv + inv[0], nv + inv[1], nv + inv[2]
    a, b, c = T[:, 0], T[:, 1], T[:, 2]
    T2 = np.concatenate([
        np.stack([a, ab, ca], axis=1),
        np.stack([ab, b, bc], axis=1),
        np.stack([ca, bc, c], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ])
    return T2, np.concatenate([charts, mc]), np.concatenate([coords, mz[:, 0]]), np.concatenate([vals, mv])


def _prune(T, charts, coords, vals, cutoff):
    T = T[np.max(vals[T], axis=1) > cutoff]
    ids, inv = np.unique(T, return_inverse=True)
    return inv.reshape(-1, 3), charts[ids], coords[ids], vals[ids]


def patch_topology(onb, C, mesh, values, u: float, lipschitz: float,
                   max_levels: int = MAX_REFINE_LEVELS) -> tuple[int, int, int]:
    """(chi, components, levels) of ``{f > u}`` from adaptive local refinement.

    Only triangles that can reach above ``u`` are kept, judged by the
    Lipschitz bound of the field; they are subdivided until two successive
    levels give the same nonempty topology.  Returns (0, 0, levels) when no
    vertex ever exceeds ``u``.
    """
    C = _as_C(C)
    vals = _values_array(values)
    h = mesh.max_edge_length
    alpha = math.acos(min(u, 1.0))

    def cutoff(level):
        # midpoint subdivision shrinks edges by about one half per level
        return math.cos(min(alpha + 1.05 * lipschitz * h * 0.5**level, math.pi / 2))

    T, ch, zz, vv = _prune(mesh.triangles, mesh.charts, mesh.coords[:, 0], vals, cutoff(0))
    prev = _local_topology(T, vv > u)
    for level in range(1, max_levels + 1):
        T, ch, zz, vv = _subdivide(onb, C, T, ch, zz, vv)
        T, ch, zz, vv = _prune(T, ch, zz, vv, cutoff(level))
        cur = _local_topology(T, vv > u)
        if cur == prev and cur != (0, 0):
            return cur[0], cur[1], level
        prev = cur
    return prev[0], prev[1], max_levels


# ------------------------------------------------------------ Monte Carlo
@dataclass(frozen=True)
class ExcursionSample:
    index: int
    u: float
    chi: int
    components: int
    sup_value: float
    degenerate: bool = False
    attempts: int = 0
    coarse_chi: int = 0
    coarse_components: int = 0
    refine_levels: int = 0

    @property
    def nonempty(self) -> bool:
        return self.sup_value > self.u


@dataclass
class MCReport:
    n_samples: int
    mean_chi: float
    stderr_chi: float
    prob_nonempty: float
    stderr_prob: float
    component_histogram: dict
    chi_histogram: dict
    sup_quantiles: dict
    degenerate_resamples: int
    refinement_changes: int
    config: dict
    samples: list = field(default_factory=list, repr=False)

    def to_json(self) -> dict:
        return {
            "nSamples": self.n_samples,
            "meanChi": self.mean_chi,
            "stderrChi": self.stderr_chi,
            "probNonempty": self.prob_nonempty,
            "stderrProb": self.stderr_prob,
            "componentHistogram": {str(k): v for k, v in sorted(self.component_histogram.items())},
            "chiHistogram": {str(k): v for k, v in sorted(self.chi_histogram.items())},
            "supQuantiles": {f"{q:g}": v for q, v in self.sup_quantiles.items()},
            "degenerateResamples": self.degenerate_resamples,
            "refinementChanges": self.refinement_changes,
            "config": self.config,
        }

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "sup", "chi", "components"])
        for s in self.samples:
            w.writerow([s.index, f"{s.sup_value:.17g}", s.chi, s.components])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class _Context:
    onb: object
    mesh: object
    Fh: np.ndarray
    lipschitz: float
    u: float
    seed: int


def _run_chunk(ctx: _Context, start: int, count: int) -> list:
    mesh, onb, u = ctx.mesh, ctx.onb, ctx.u
    n = ctx.Fh.shape[1] - 1
    attempts = np.zeros(count, dtype=int)
    C = sample_block(ctx.seed, start, count, n)
    vals = np.minimum(np.abs(np.conj(C) @ ctx.Fh.T), 1.0)
    while True:
        bad = np.flatnonzero(np.any(np.abs(vals - u) < DEGENERACY_DELTA, axis=1))
        if bad.size == 0:
            break
        attempts[bad] += 1
        if np.any(attempts > MAX_ATTEMPTS):
            raise ValidationError("threshold keeps hitting vertex values; check u")
        C[bad] = np.stack([sample_coefficients(ctx.seed, start + int(i), n, int(attempts[i])).C for i in bad])
        vals[bad] = np.minimum(np.abs(np.conj(C[bad]) @ ctx.Fh.T), 1.0)
    vmax = vals.max(axis=1)
    dmin = np.arccos(vmax)
    reach = ctx.lipschitz * mesh.max_edge_length
    # the field cannot exceed u anywhere when every vertex is this far from C
    candidates = np.flatnonzero(dmin - reach < math.acos(u))
    sup = vmax.copy()
    if candidates.size:
        cut = np.cos(np.minimum(dmin[candidates] + reach, math.pi / 2))
        owners, verts = [], []
        for j, i in enumerate(candidates):
            sel = _start_vertices(mesh, vals[i], cut[j])
            owners.append(np.full(sel.size, i))
            verts.append(sel)
        owners = np.concatenate(owners)
        verts = np.concatenate(verts)
        f, _, _ = _ascend(onb, mesh.charts[verts], mesh.coords[verts, 0], C[owners])
        best = np.full(count, -np.inf)
        np.maximum.at(best, owners, f)
        sup[candidates] = np.maximum(sup[candidates], best[candidates])
    mask = vals > u
    chi = _batch_chi(mesh, mask)
    out = []
    for i in range(count):
        c0 = k0 = levels = 0
        c = k = 0
        if sup[i] > u:
            if mask[i].any():
                c0, k0 = int(chi[i]), _components(mesh, mask[i])
            c, k, levels = patch_topology(onb, C[i], mesh, vals[i], u, ctx.lipschitz)
            if (c, k) == (0, 0):
                # the excursion set is a cap below the finest resolution
                c, k = 1, 1
        out.append(ExcursionSample(start + i, u, c, k, float(sup[i]), bool(attempts[i]), int(attempts[i]),
                                   c0, k0, levels))
    return out


def _worker_count(workers) -> int:
    if workers is None:
        env = os.environ.get("EXCURSION_LAB_WORKERS")
        workers = int(env) if env else 1
    return check_positive_int(int(workers), "workers")


def mc_run(geometry, onb, mesh, u: float, n_samples: int, seed: int, workers: Optional[int] = None,
           chunk_size: int = CHUNK_SIZE, keep_samples: bool = True) -> MCReport:
    """Monte-Carlo estimate of the expected Euler characteristic of ``{f > u}``.

    Results are identical for every worker count: samples are processed in
    fixed chunks and reduced in index order.
    """
    if geometry.m != 1:
        raise ValidationError("Monte Carlo is supported on curves only")
    u = float(u)
    if not 0 < u <= 1:
        raise ValidationError("u must lie in (0, 1]")
    n_samples = check_positive_int(n_samples, "n_samples")
    seed = _check_seed(seed)
    limit = 0.2 / math.sqrt(geometry.N)
    if mesh.max_edge_length > limit * (1 + 1e-9):
        raise ValidationError(f"mesh edge {mesh.max_edge_length:.4g} exceeds 0.2/sqrt(N) = {limit:.4g}")
    workers = _worker_count(workers)
    Fh = _unit_frames(onb, mesh.charts, mesh.coords)
    ctx = _Context(onb, mesh, Fh, _lipschitz(onb, mesh), u, seed)
    chunks = [(s, min(chunk_size, n_samples - s)) for s in range(0, n_samples, chunk_size)]
    if workers == 1 or len(chunks) == 1:
        parts = [_run_chunk(ctx, s, c) for s, c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [ctx] * len(chunks), *zip(*chunks)))
    samples = [s for part in parts for s in part]
    return _aggregate(samples, geometry, mesh, u, seed, chunk_size, keep_samples)


def _mean_stderr(x: list) -> tuple[float, float]:
    n = len(x)
    mean = math.fsum(x) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in x) / (n - 1)
    return mean, math.sqrt(var / n)


def _aggregate(samples, geometry, mesh, u, seed, chunk_size, keep_samples) -> MCReport:
    chis = [float(s.chi) for s in samples]
    nonempty = [1.0 if s.nonempty else 0.0 for s in samples]
    mean_chi, se_chi = _mean_stderr(chis)
    p, se_p = _mean_stderr(nonempty)
    comp_hist: dict = {}
    chi_hist: dict = {}
    for s in samples:
        comp_hist[s.components] = comp_hist.get(s.components, 0) + 1
        chi_hist[s.chi] = chi_hist.get(s.chi, 0) + 1
    sups = np.array([s.sup_value for s in samples])
    quant = {q: float(v) for q, v in zip(QUANTILE_LEVELS, np.quantile(sups, QUANTILE_LEVELS))}
    config = {
        "geometry": geometry.spec.to_dict(),
        "N": geometry.N,
        "u": u,
        "seed": seed,
        "nSamples": len(samples),
        "meshEdgeLength": mesh.max_edge_length,
        "meshVertices": mesh.n_vertices,
        "chunkSize": chunk_size,
    }
    return MCReport(
        n_samples=len(samples),
        mean_chi=mean_chi,
        stderr_chi=se_chi,
        prob_nonempty=p,
        stderr_prob=se_p,
        component_histogram=comp_hist,
        chi_histogram=chi_hist,
        sup_quantiles=quant,
        degenerate_resamples=int(sum(s.attempts for s in samples)),
        refinement_changes=sum(1 for s in samples if (s.chi, s.components) != (s.coarse_chi, s.coarse_components)),
        config=config,
        samples=samples if keep_samples else [],
    )
