"""Szegő kernel evaluation and the squared normalized kernel E = P_N^2.

Every routine works with a basis object exposing ``evaluate(charts,
coords) -> (F, dF)``, ``potential``, ``distance`` and ``N``; orthonormal
bases and their complex-line restrictions both qualify.  Inner products are
``<a, b> = sum a_i conj(b_i)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import ChartPoint, ValidationError, as_chart_point, as_point_arrays

# below this chart distance pairs are treated as diagonal
NEAR_DIAGONAL = 1e-6


def inner(a, b):
    return np.sum(a * np.conj(b), axis=-1)


@dataclass(frozen=True)
class FrameVector:
    F: np.ndarray
    Fprime: np.ndarray
    chart: int
    point: np.ndarray


@dataclass(frozen=True)
class KernelDerivs:
    """E, its z-derivative and mixed derivative at a point pair, plus the diagonal values."""

    E: float
    Ez: complex
    Ezwbar: complex
    EzwbarDiagZ: float
    EzwbarDiagW: float


@dataclass
class AsymptoticReport:
    N: int
    probe_count: int
    max_deviation: float
    spread: float = 0.0
    fitted_constant: Optional[float] = None
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        if not self.rows:
            return ""
        writer = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "N": self.N,
            "probe_count": self.probe_count,
            "max_deviation": self.max_deviation,
            "spread": self.spread,
            "fitted_constant": self.fitted_constant,
        }


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, complex):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    return v


def _single(basis, point):
    p = as_chart_point(point, basis.m)
    return p, np.array([p.chart]), p.z[None, :]


def frame_vector(basis, point) -> FrameVector:
    """F(z) and F'(z) (gradient rows for m > 1) at one chart point."""
    p, c, z = _single(basis, point)
    geo = getattr(basis, "geometry", None)
    if geo is not None and hasattr(geo, "check_domain") and basis.m == geo.m:
        geo.check_domain(c, z)
    F, dF = basis.evaluate(c, z)
    if not np.linalg.norm(F[0]) > 0:
        raise ValidationError("F vanishes: base point of the linear system")
    Fp = dF[0, 0] if basis.m == 1 else dF[0]
    return FrameVector(F[0], Fp, p.chart, p.z)


def szego_diag_many(basis, charts, coords) -> np.ndarray:
    charts, coords = as_point_arrays(charts, coords, basis.m)
    F, _ = basis.evaluate(charts, coords)
    return np.sum(np.abs(F) ** 2, axis=1) * np.exp(-basis.potential(charts, coords))


def szego_diag(basis, point) -> float:
    """Pi_N(z, z) = |F(z)|^2 exp(-phi(z))."""
    _, c, z = _single(basis, point)
    return float(szego_diag_many(basis, c, z)[0])


def normalized_kernel(basis, z, w) -> float:
    """P_N(z, w) = |<F(z), F(w)>| / (|F(z)| |F(w)|)."""
    fz = frame_vector(basis, z).F
    fw = frame_vector(basis, w).F
    return float(_pn(fz, fw))


def _pn(Fz, Fw):
    num = np.abs(inner(Fz, Fw))
    den = np.linalg.norm(Fz, axis=-1) * np.linalg.norm(Fw, axis=-1)
    return np.minimum(num / den, 1.0)


def tangent_vectors(F, P):
    """Unnormalized T_inf = F' - <F', F>/<F, F> F, vectorized over leading axes."""
    coef = inner(P, F) / inner(F, F)
    return P - coef[..., None] * F


def derivs_arrays(Fz, Pz, Fw, Pw):
    """Vectorized E, E_z, E_{z wbar}, and diagonal E_{z wbar} values.

    Direct transcription of the inner-product formulas for the derivatives of
    E(z, w) = |<F(z), F(w)>|^2 / (|F(z)|^2 |F(w)|^2).
    """
    nz = np.real(inner(Fz, Fz))
    nw = np.real(inner(Fw, Fw))
    zw = inner(Fz, Fw)
    wz = np.conj(zw)
    E = np.abs(zw) ** 2 / (nz * nw)
    pre = wz / (nz * nw)
    pz_fz = inner(Pz, Fz)
    pz_fw = inner(Pz, Fw)
    fw_pw = inner(Fw, Pw)
    fz_pw = inner(Fz, Pw)
    Ez = pre * (pz_fw - zw * pz_fz / nz)
    Ezw = pre * (
        inner(Pz, Pw)
        - fw_pw * pz_fw / nw
        - fz_pw * pz_fz / nz
        + zw * fw_pw * pz_fz / (nz * nw)
    )
    Tz = tangent_vectors(Fz, Pz)
    Tw = tangent_vectors(Fw, Pw)
    diag_z = np.real(inner(Tz, Tz)) / nz
    diag_w = np.real(inner(Tw, Tw)) / nw
    return E, Ez, Ezw, diag_z, diag_w


def _same_point(basis, pz: ChartPoint, pw: ChartPoint) -> bool:
    if pz.chart == pw.chart and np.array_equal(pz.z, pw.z):
        return True
    return False


def e_derivatives(basis, z, w) -> KernelDerivs:
    """KernelDerivs at (z, w); identical points use the diagonal identities."""
    fz = frame_vector(basis, z)
    fw = frame_vector(basis, w)
    Pz = fz.Fprime if basis.m == 1 else fz.Fprime[0]
    Pw = fw.Fprime if basis.m == 1 else fw.Fprime[0]
    E, Ez, Ezw, dz, dw = derivs_arrays(fz.F, Pz, fw.F, Pw)
    if _same_point(basis, as_chart_point(z, basis.m), as_chart_point(w, basis.m)):
        return KernelDerivs(1.0, 0j, complex(dz), float(dz), float(dz))
    return KernelDerivs(float(E), complex(Ez), complex(Ezw), float(dz), float(dw))


# ------------------------------------------------------------------ checks
def _probe_arrays(basis, probe):
    if hasattr(probe, "triangles"):
        return probe.charts, probe.coords
    charts, coords = probe
    return as_point_arrays(charts, coords, basis.m)


def tyz_check(basis, probe) -> AsymptoticReport:
    """Leading TYZ coefficient: deviation of pi^m Pi_N / N^m from 1 over a probe set.

    ``probe`` is a TriMesh or a ``(charts, coords)`` pair.
    """
    charts, coords = _probe_arrays(basis, probe)
    m, N = basis.m, basis.N
    ratio = math.pi**m * szego_diag_many(basis, charts, coords) / N**m
    dev = np.abs(ratio - 1.0)
    rows = [
        {"chart": int(c), "re": float(z[0].real), "im": float(z[0].imag), "ratio": float(r)}
        for c, z, r in zip(charts, coords, ratio)
    ]
    return AsymptoticReport(
        N=N,
        probe_count=len(ratio),
        max_deviation=float(np.max(dev)),
        spread=float(np.max(ratio) - np.min(ratio)),
        rows=rows,
    )


def gaussian_window(N: int, b: float) -> float:
    return b * math.sqrt(math.log(N)) if N > 1 else 0.0


def gaussian_check(basis, center, u, v, b: float = 2.0, epsilon: float = 0.25) -> AsymptoticReport:
    """Compare P_N(z0 + u/sqrt(N), z0 + v/sqrt(N)) with exp(-|u - v|^2 / 2).

    Offsets are in normal units: the chart coordinate is rescaled by the
    square root of the base curvature at ``center``.  The fitted constant is
    the largest deviation divided by ``|u - v|^2 N^(-1/2 + epsilon)``.
    """
    if basis.m != 1:
        raise ValidationError("gaussian_check supports curves only")
    c = as_chart_point(center, 1)
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    if u.shape != v.shape:
        raise ValidationError("offset arrays must have equal shape")
    N = basis.N
    window = gaussian_window(N, b)
    if np.any(np.abs(u) + np.abs(v) >= window):
        raise ValidationError(f"offsets outside the admissible window |u|+|v| < {window:.6g}")
    geo = basis.geometry
    lam = float(geo.base_scale([c.chart], c.z[None, :])[0])
    scale = 1.0 / math.sqrt(N * lam)
    zc = np.full(u.shape, c.chart)
    Fz, _ = basis.evaluate(zc, (c.z[0] + u * scale)[:, None])
    Fw, _ = basis.evaluate(zc, (c.z[0] + v * scale)[:, None])
    P = _pn(Fz, Fw)
    gauss = np.exp(-0.5 * np.abs(u - v) ** 2)
    dev = np.abs(P - gauss)
    d2 = np.abs(u - v) ** 2
    rate = N ** (-0.5 + epsilon)
    off = d2 > 0
    fitted = float(np.max(dev[off] / (d2[off] * rate))) if np.any(off) else 0.0
    rows = [
        {"u": complex(a), "v": complex(bb), "P_N": float(p), "gaussian": float(g), "deviation": float(d)}
        for a, bb, p, g, d in zip(u, v, P, gauss, dev)
    ]
    return AsymptoticReport(
        N=N,
        probe_count=len(dev),
        max_deviation=float(np.max(dev)),
        fitted_constant=fitted,
        rows=rows,
    )
