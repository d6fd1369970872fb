"""Closed-form expectations of excursion-set Euler characteristics.

Classes live in a truncated ring Q[x]/(x^{m+1}): the hyperplane class H on
CP^m, the point class P on a curve.  Evaluations are exact (``Fraction``)
when the dimension n of the section space is moderate and fall back to
log-space floats with compensated summation otherwise.

For a curve the bracket used is

    (N d)^2 u^2 - N d (g u^2 + 1 - u^2) + (2 - 2g)(1 - u^2),

which is what the tube-volume formula and the Chern-class integral both
expand to.  The variant with ``g u^2 - 1 + u^2`` inside the middle term
does not reproduce chi = 1 for lines in CP^1 and is not used.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

from ._validation import ValidationError, check_positive_int

CURVE = "Curve"
PROJSPACE = "ProjSpace"
# largest n handled with exact rationals in mode "auto"
EXACT_LIMIT = 512
_EPS = 2.0**-52

Number = Union[int, float, Fraction]


# ---------------------------------------------------------------- ring data
@dataclass(frozen=True)
class RingSpec:
    """Chern data of a supported manifold.

    ``Curve``: genus ``g`` and ``degL``; ``int c_1(L) = degL`` and
    ``int c_1(M) = 2 - 2g``.  ``ProjSpace``: dimension ``m`` with L the
    hyperplane bundle, ``int H^m = 1``.
    """

    kind: str
    g: int = 0
    degL: int = 1
    m: int = 1

    def __post_init__(self):
        if self.kind not in (CURVE, PROJSPACE):
            raise ValidationError(f"kind must be {CURVE!r} or {PROJSPACE!r}")
        if self.kind == CURVE:
            if isinstance(self.g, bool) or not isinstance(self.g, int) or self.g < 0:
                raise ValidationError("genus must be a non-negative integer")
            check_positive_int(self.degL, "degL")
            object.__setattr__(self, "m", 1)
        else:
            check_positive_int(self.m, "m")
            object.__setattr__(self, "degL", 1)
            object.__setattr__(self, "g", 0)

    @classmethod
    def curve(cls, g: int, degL: int) -> "RingSpec":
        return cls(CURVE, g=g, degL=degL)

    @classmethod
    def projspace(cls, m: int) -> "RingSpec":
        return cls(PROJSPACE, m=m)

    @property
    def dim(self) -> int:
        return self.m

    def c1_L(self) -> "CohomologyClass":
        return CohomologyClass.generator(self.m, self.degL)

    def chern_polynomial(self, t: "CohomologyClass") -> "CohomologyClass":
        """c(M)(t) = sum_k c_k(M) t^{m-k}."""
        m = self.m
        out = CohomologyClass.zero(m)
        for k in range(m + 1):
            if self.kind == CURVE:
                ck = [Fraction(1), Fraction(2 - 2 * self.g)][k]
            else:
                ck = Fraction(math.comb(m + 1, k))
            out = out + CohomologyClass.monomial(m, k, ck) * t ** (m - k)
        return out

    def to_dict(self) -> dict:
        if self.kind == CURVE:
            return {"kind": CURVE, "g": self.g, "degL": self.degL}
        return {"kind": PROJSPACE, "m": self.m}


@dataclass(frozen=True)
class CohomologyClass:
    """Element ``sum_k coefficients[k] x^k`` of Q[x]/(x^{m+1})."""

    coefficients: tuple

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(Fraction(c) for c in self.coefficients))

    @property
    def m(self) -> int:
        return len(self.coefficients) - 1

    @classmethod
    def zero(cls, m: int) -> "CohomologyClass":
        return cls((0,) * (m + 1))

    @classmethod
    def scalar(cls, m: int, value) -> "CohomologyClass":
        return cls((value,) + (0,) * m)

    @classmethod
    def monomial(cls, m: int, k: int, value=1) -> "CohomologyClass":
        c = [0] * (m + 1)
        if k <= m:
            c[k] = value
        return cls(tuple(c))

    @classmethod
    def generator(cls, m: int, value=1) -> "CohomologyClass":
        return cls.monomial(m, 1, value)

    def _coerce(self, other) -> "CohomologyClass":
        if isinstance(other, CohomologyClass):
            if other.m != self.m:
                raise ValidationError("classes live in rings of different dimension")
            return other
        return CohomologyClass.scalar(self.m, other)

    def __add__(self, other):
        o = self._coerce(other)
        return CohomologyClass(tuple(a + b for a, b in zip(self.coefficients, o.coefficients)))

    __radd__ = __add__

    def __neg__(self):
        return CohomologyClass(tuple(-a for a in self.coefficients))

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        m = self.m
        out = [Fraction(0)] * (m + 1)
        for i, a in enumerate(self.coefficients):
            if a == 0:
                continue
            for j in range(m + 1 - i):
                out[i + j] += a * o.coefficients[j]
        return CohomologyClass(tuple(out))

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValidationError("negative powers are not defined")
        result = CohomologyClass.scalar(self.m, 1)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def top(self) -> Fraction:
        """Integral over M: the coefficient of x^m (with int x^m = 1)."""
        return self.coefficients[-1]


@dataclass
class FormulaResult:
    """Value of a closed-form expression.

    ``exact`` is the rational value when computed in exact mode.  For tube
    volumes it is the volume in units of Vol(CP^n) = pi^n / n!, and
    ``value`` carries the volume itself.
    """

    value: float
    exact: Optional[Fraction]
    error_bound: float
    mode: str
    params: dict = field(default_factory=dict)
    switched: bool = False
    # sign and log|value| stay finite where the float value underflows
    sign: int = 0
    log_abs: float = -math.inf

    def __float__(self) -> float:
        return float(self.value)


# ----------------------------------------------------------- parameter prep
def as_rational(x: Number) -> Fraction:
    """Exact rational of a float's shortest repr (0.9 -> 9/10)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    xf = float(x)
    if not math.isfinite(xf):
        raise ValidationError(f"non-finite parameter {x!r}")
    return Fraction(repr(xf))


def _check_u(u) -> Fraction:
    q = as_rational(u)
    if q < 0 or q > 1:
        raise ValidationError(f"u must lie in [0, 1], got {u!r}")
    return q


def _choose_mode(mode: str, n: int) -> tuple[str, bool]:
    if mode not in ("auto", "exact", "float"):
        raise ValidationError("mode must be 'auto', 'exact' or 'float'")
    if mode == "auto":
        return ("exact", False) if n <= EXACT_LIMIT else ("float", True)
    return mode, False


def _n_sections(spec: RingSpec, N: int) -> int:
    return h0_dimension(spec, N) - 1


# --------------------------------------------------------- ring evaluation
def _ring_terms(spec: RingSpec, N: int):
    """Coefficients a_k with  c(M)(1 - N c_1)  =  sum_k a_k x^k  (exact)."""
    t = CohomologyClass.scalar(spec.m, 1) - spec.c1_L() * N
    return spec.chern_polynomial(t).coefficients


def ring_eval_expected_chi(spec: RingSpec, N: int, u: Number, mode: str = "auto") -> FormulaResult:
    """Integral of ``c(M)(1 - N c_1(L)) (N c_1(L) u^2 + 1 - u^2)^n`` over M.

    Only the powers of ``N c_1(L) u^2`` up to the top degree survive, so
    the binomial expansion is truncated at degree m.
    """
    N = check_positive_int(N, "N")
    q = _check_u(u)
    n = _n_sections(spec, N)
    if n < 1:
        raise ValidationError(f"need n >= 1 sections beyond the first, got n = {n}")
    if spec.kind == CURVE and not N * spec.degL > 2 * spec.g - 2:
        raise ValidationError("need N degL > 2g - 2")
    m = spec.m
    a = _ring_terms(spec, N)
    dN = spec.degL * N
    mode, switched = _choose_mode(mode, n)
    params = dict(spec.to_dict(), N=N, u=float(u), n=n)
    if mode == "exact":
        c, s = q * q, 1 - q * q
        total = Fraction(0)
        for k in range(min(m, n) + 1):
            total += a[m - k] * math.comb(n, k) * s ** (n - k) * (dN * c) ** k
        return _exact_result(total, params, switched)
    uf = float(q)
    c, s = uf * uf, 1.0 - uf * uf
    terms = []
    for k in range(min(m, n) + 1):
        coef = a[m - k]
        if coef != 0:
            terms.append((float(coef), _log_binom(n, k) + _xlogy(n - k, s) + _xlogy(k, dN * c)))
    return _float_result(terms, n, params, switched)


def _log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _xlogy(k: int, x: float) -> float:
    if k == 0:
        return 0.0
    if x <= 0.0:
        return -math.inf
    return k * math.log(x)


def _log_fraction(q: Fraction) -> float:
    # math.log accepts arbitrarily large integers
    return math.log(q.numerator) - math.log(q.denominator)


def _exact_result(q: Fraction, params, switched, log_unit: float = 0.0) -> FormulaResult:
    sign = (q > 0) - (q < 0)
    la = _log_fraction(abs(q)) + log_unit if sign else -math.inf
    return FormulaResult(sign * math.exp(la) if sign else 0.0, q, 0.0, "exact", params, switched, sign, la)


def _float_result(terms, n, params, switched) -> FormulaResult:
    """Combine ``(coefficient, log magnitude)`` terms with compensated summation."""
    live = [(c, lt) for c, lt in terms if c != 0 and lt > -math.inf]
    if not live:
        return FormulaResult(0.0, None, 0.0, "float", params, switched, 0, -math.inf)
    lmax = max(lt for _, lt in live)
    scaled = [c * math.exp(lt - lmax) for c, lt in live]
    total = math.fsum(scaled)
    mag = math.fsum(abs(t) for t in scaled)
    # each log-space term carries O(n) roundings in its exponent
    rel = (4 * n + 16) * _EPS
    sign = (total > 0) - (total < 0)
    la = lmax + math.log(abs(total)) if sign else -math.inf
    value = sign * math.exp(la) if sign else 0.0
    bound = rel * mag * math.exp(lmax)
    return FormulaResult(value, None, bound, "float", params, switched, sign, la)


# -------------------------------------------------------------- curve forms
def _check_curve(g: int, degL: int, N: int) -> int:
    RingSpec.curve(g, degL)
    N = check_positive_int(N, "N")
    if not N * degL > 2 * g - 2:
        raise ValidationError("need N degL > 2g - 2")
    n = N * degL - g
    if n < 1:
        raise ValidationError(f"need n >= 1, got n = {n}")
    return n


def expected_chi_curve(g: int, degL: int, N: int, u: Number, mode: str = "auto") -> FormulaResult:
    """``(1 - u^2)^(n-1) [(Nd)^2 u^2 - Nd (g u^2 + 1 - u^2) + (2 - 2g)(1 - u^2)]``."""
    n = _check_curve(g, degL, N)
    q = _check_u(u)
    D = N * degL
    mode, switched = _choose_mode(mode, n)
    params = {"kind": CURVE, "g": g, "degL": degL, "N": N, "u": float(u), "n": n}
    if mode == "exact":
        c = q * q
        s = 1 - c
        val = s ** (n - 1) * (D * D * c - D * (g * c + s) + (2 - 2 * g) * s)
        return _exact_result(val, params, switched)
    uf = float(q)
    c, s = uf * uf, 1.0 - uf * uf
    bracket = [D * D * c, -D * (g * c + s), (2 - 2 * g) * s]
    lp = _xlogy(n - 1, s)
    return _float_result([(b, lp) for b in bracket], n, params, switched)


def tube_volume_curve(g: int, degL: int, N: int, rho: Optional[float] = None, *,
                      cos2: Optional[Number] = None, mode: str = "auto") -> FormulaResult:
    """Volume of the radius-rho tube around Phi_N(M) in CP^n.

    ``V = (1/n!) [(pi s)^n (chi - Nd) + n N d pi (pi s)^(n-1) c]`` with
    ``s = sin^2 rho``, ``c = cos^2 rho``.  Pass ``cos2`` as a rational for
    an exact result; ``exact`` then holds ``V / Vol(CP^n)``.  ``cos2 = 1``
    is the rho -> 0 limit.
    """
    n = _check_curve(g, degL, N)
    if (rho is None) == (cos2 is None):
        raise ValidationError("give exactly one of rho and cos2")
    if rho is not None:
        r = float(rho)
        if not 0 < r < math.pi / 2:
            raise ValidationError("rho must lie in (0, pi/2)")
        c = as_rational(math.cos(r) ** 2)
    else:
        c = as_rational(cos2)
        if not 0 <= c <= 1:
            raise ValidationError("cos2 must lie in [0, 1]")
    D = N * degL
    chi = 2 - 2 * g
    mode, switched = _choose_mode(mode, n)
    params = {"g": g, "degL": degL, "N": N, "cos2": float(c), "n": n}
    log_unit = n * math.log(math.pi) - math.lgamma(n + 1)
    if mode == "exact":
        s = 1 - c
        norm = s**n * (chi - D) + n * D * s ** (n - 1) * c
        return _exact_result(norm, params, switched, log_unit)
    cf = float(c)
    s = 1.0 - cf
    terms = [(float(chi - D), _xlogy(n, s) + log_unit),
             (n * D * cf, _xlogy(n - 1, s) + log_unit)]
    return _float_result(terms, n, params, switched)


def leading_term(m: int, n: int, u: float, log: bool = False) -> float:
    """``n^(m+1) (1 - u^2)^(n-m) u^(2m)``, evaluated in log space.

    With ``log=True`` the natural logarithm is returned, which stays finite
    where the value itself underflows.
    """
    m = check_positive_int(m, "m")
    n = check_positive_int(n, "n")
    if not n > m:
        raise ValidationError("need n > m")
    uf = float(u)
    if not 0 <= uf <= 1:
        raise ValidationError("u must lie in [0, 1]")
    if uf == 0.0 or uf == 1.0:
        return -math.inf if log else 0.0
    lt = (m + 1) * math.log(n) + (n - m) * math.log1p(-uf * uf) + 2 * m * math.log(uf)
    return lt if log else math.exp(lt)


def leading_ratio(result: FormulaResult, m: int, n: int, u: float) -> float:
    """``result / leading_term(m, n, u)`` computed from logarithms."""
    if result.sign == 0:
        return 0.0
    return result.sign * math.exp(result.log_abs - leading_term(m, n, u, log=True))


def h0_dimension(spec, N: Optional[int] = None) -> int:
    """dim H^0(M, L^N).

    Accepts a RingSpec (with ``N``), a GeometrySpec or a Geometry.
    """
    if not isinstance(spec, RingSpec):
        gspec = getattr(spec, "spec", spec)
        family = getattr(gspec, "family", None)
        if family is None:
            raise ValidationError(f"cannot read a dimension from {spec!r}")
        N = gspec.N
        if family == "EllipticCurve":
            spec = RingSpec.curve(1, gspec.degL)
        else:
            spec = RingSpec.projspace(gspec.m)
    N = check_positive_int(N, "N")
    if spec.kind == CURVE:
        D = N * spec.degL
        if not D > 2 * spec.g - 2:
            raise ValidationError("need N degL > 2g - 2")
        return D - spec.g + 1
    return math.comb(N + spec.m, spec.m)


# ------------------------------------------------------------------ sweeps
SWEEP_COLUMNS = (
    "kind", "g", "degL_or_m", "N", "u", "n",
    "expected_chi_exact", "expected_chi_float", "ring_exact", "tube_normalized_exact",
    "leading_term",
)


def _fmt_exact(q: Optional[Fraction]) -> str:
    if q is None:
        return ""
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def sweep_rows(specs: Sequence[RingSpec], Ns: Sequence[int], us: Sequence[Number],
               mode: str = "auto") -> list[dict]:
    """One row per (spec, N, u) with closed-form, ring and tube columns."""
    rows = []
    for spec in specs:
        for N in Ns:
            for u in us:
                n = _n_sections(spec, N)
                ring = ring_eval_expected_chi(spec, N, u, mode=mode)
                if spec.kind == CURVE:
                    closed = expected_chi_curve(spec.g, spec.degL, N, u, mode=mode)
                    q = _check_u(u)
                    tube_exact = tube_volume_curve(spec.g, spec.degL, N, cos2=q * q, mode=mode).exact
                else:
                    closed, tube_exact = ring, None
                lead = leading_term(spec.m, n, float(u)) if n > spec.m else float("nan")
                rows.append({
                    "kind": spec.kind,
                    "g": spec.g,
                    "degL_or_m": spec.degL if spec.kind == CURVE else spec.m,
                    "N": N,
                    "u": float(u),
                    "n": n,
                    "expected_chi_exact": _fmt_exact(closed.exact),
                    "expected_chi_float": closed.value,
                    "ring_exact": _fmt_exact(ring.exact),
                    "tube_normalized_exact": _fmt_exact(tube_exact),
                    "leading_term": lead,
                })
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(SWEEP_COLUMNS), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
