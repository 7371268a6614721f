"""Momentum-space test functions, sources, and static sesquilinear forms.

Test functions live entirely on the Fourier side.  Each is a finite sum of
components

    fhat_c(k) = coeff * profile(|k|) * exp(i*u*omega(k))
                * exp(-i*k.x) * exp(-t*omega(k)/2),

with omega(k) = |k|^s.  Only three analytic radial families are supported
(gaussian, hard-cutoff power bump, flat point source) so that membership in
L1, L2 and the domain of the m-functional is decidable by exact exponent
arithmetic instead of fragile numerics.

All integrals are reduced to the radial coordinate.  In d = 3 a spatial
shift x contributes the angular factor 4*pi*sin(k*r)/(k*r) with r the
relative shift between the two paired components; in other dimensions only
unshifted components are supported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.integrate import quad

NEG_INF = float("-inf")

#: default absolute quadrature target for form evaluation
DEFAULT_QUAD_TOL = 1e-10


class DivergentIntegralError(ValueError):
    """Raised when exponent arithmetic declares an integral divergent."""

    def __init__(self, message, exponent=None):
        super().__init__(message)
        self.exponent = exponent


def dispersion(k_mag, s):
    """Dispersion relation |k|^s.  Vectorized in ``k_mag``; requires s > 0."""
    if s <= 0:
        raise ValueError("dispersion exponent must be positive")
    k = np.asarray(k_mag, dtype=float)
    if np.any(k < 0):
        raise ValueError("momentum magnitude must be non-negative")
    out = np.power(k, s)
    return out if out.ndim else float(out)


def sphere_area(d):
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class RadialProfile:
    """One of the three analytic radial families.

    kind:
        "gaussian"          -> amplitude * exp(-k^2 / (2 width^2))
        "power_bump"        -> amplitude * k^exponent_at_zero for k <= cutoff, else 0
        "point_source_flat" -> amplitude (constant)
    """

    kind: str
    amplitude: float = 1.0
    width: float | None = None
    exponent_at_zero: float | None = None
    cutoff: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")
        if self.kind == "gaussian":
            if self.width is None or self.width <= 0:
                raise ValueError("gaussian profile needs width > 0")
        elif self.kind == "power_bump":
            if self.cutoff is None or self.cutoff <= 0:
                raise ValueError("power bump needs cutoff > 0")
            if self.exponent_at_zero is None:
                raise ValueError("power bump needs exponent_at_zero")
        elif self.kind == "point_source_flat":
            pass
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def value(self, k):
        """Profile value at radial momentum k (vectorized)."""
        k = np.asarray(k, dtype=float)
        if self.kind == "gaussian":
            out = self.amplitude * np.exp(-(k ** 2) / (2.0 * self.width ** 2))
        elif self.kind == "point_source_flat":
            out = np.full_like(k, self.amplitude)
        else:
            a = self.exponent_at_zero
            with np.errstate(divide="ignore"):
                out = np.where(k <= self.cutoff,
                               self.amplitude * np.power(k, a), 0.0)
        return out if out.ndim else float(out)

    @property
    def a0(self):
        """Exact power-law exponent at k -> 0."""
        if self.kind == "power_bump":
            return float(self.exponent_at_zero)
        return 0.0

    @property
    def a_inf(self):
        """Exact power-law exponent at k -> infinity (-inf if compactly
        supported or super-polynomially decaying)."""
        if self.kind == "point_source_flat":
            return 0.0
        return NEG_INF

    @property
    def breakpoints(self):
        return (self.cutoff,) if self.kind == "power_bump" else ()


@dataclass(frozen=True)
class Component:
    """One additive component of a test function (Fourier side)."""

    profile: RadialProfile
    coeff: complex = 1.0 + 0.0j
    time_phase: float = 0.0      # u in exp(i u omega)
    shift: tuple = (0.0, 0.0, 0.0)
    damp: float = 0.0            # t >= 0 in exp(-t omega / 2)

    def __post_init__(self):
        if self.damp < 0:
            raise ValueError("euclidean damping must be >= 0")
        object.__setattr__(self, "coeff", complex(self.coeff))
        object.__setattr__(self, "shift", tuple(float(x) for x in self.shift))


@dataclass(frozen=True)
class TestFunction:
    """Momentum-space test function: a sum of analytic components.

    The asymptotic exponents a0, a_inf of |fhat| at k -> 0 and k -> infinity
    are derived from the components at construction (no cancellation between
    components is assumed).
    """

    components: tuple
    d: int = 3
    s: float = 1.0
    a0: float = field(init=False)
    a_inf: float = field(init=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("test function needs at least one component")
        for c in comps:
            if len(c.shift) != self.d:
                raise ValueError("shift dimension mismatch")
            if any(c.shift) and self.d != 3:
                raise ValueError("spatial shifts are supported only in d = 3")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "a0", min(c.profile.a0 for c in comps))
        a_inf = max(
            NEG_INF if c.damp > 0 else c.profile.a_inf for c in comps
        )
        object.__setattr__(self, "a_inf", a_inf)

    # -- simple constructors -------------------------------------------------

    @staticmethod
    def from_profile(profile, d=3, s=1.0, **kw):
        return TestFunction((Component(profile, **kw),), d=d, s=s)

    @staticmethod
    def gaussian(width=1.0, amplitude=1.0, d=3, s=1.0, **kw):
        prof = RadialProfile("gaussian", amplitude=amplitude, width=width)
        return TestFunction((Component(prof, **kw),), d=d, s=s)

    @staticmethod
    def power_bump(exponent, cutoff=1.0, amplitude=1.0, d=3, s=1.0, **kw):
        prof = RadialProfile("power_bump", amplitude=amplitude,
                             exponent_at_zero=exponent, cutoff=cutoff)
        return TestFunction((Component(prof, **kw),), d=d, s=s)

    # -- algebra -------------------------------------------------------------

    def scaled(self, alpha):
        """alpha * f (complex scalar)."""
        comps = tuple(replace(c, coeff=alpha * c.coeff) for c in self.components)
        return TestFunction(comps, d=self.d, s=self.s)

    def __add__(self, other):
        if not isinstance(other, TestFunction):
            return NotImplemented
        if (other.d, other.s) != (self.d, self.s):
            raise ValueError("cannot add test functions with different (d, s)")
        return TestFunction(self.components + other.components, d=self.d, s=self.s)

    def time_evolved(self, u):
        """exp(i u omega) f."""
        comps = tuple(replace(c, time_phase=c.time_phase + u)
                      for c in self.components)
        return TestFunction(comps, d=self.d, s=self.s)

    def shifted(self, x):
        """Spatial translation: fhat -> exp(-i k.x) fhat."""
        x = tuple(float(v) for v in x)
        comps = tuple(
            replace(c, shift=tuple(a + b for a, b in zip(c.shift, x)))
            for c in self.components
        )
        return TestFunction(comps, d=self.d, s=self.s)

    def damped(self, t):
        """Euclidean damping exp(-|t| omega / 2) f."""
        t = abs(float(t))
        comps = tuple(replace(c, damp=c.damp + t) for c in self.components)
        return TestFunction(comps, d=self.d, s=self.s)

    # -- evaluation ----------------------------------------------------------

    def fhat0(self):
        """fhat(0).  Requires a0 >= 0 (finite zero mode)."""
        if self.a0 < 0:
            raise DivergentIntegralError(
                "zero-mode value undefined for a0 < 0", exponent=self.a0)
        return sum(c.coeff * c.profile.value(0.0) for c in self.components)

    def radial_factor(self, k, component):
        """Radial part of one component (everything except the shift phase)."""
        c = component
        om = dispersion(k, self.s)
        return (c.coeff * c.profile.value(k)
                * np.exp((1j * c.time_phase - 0.5 * c.damp) * om))

    # -- membership by exponent arithmetic -----------------------------------

    def in_l2(self):
        low = self.d - 1 + 2 * self.a0 > -1
        high = self.a_inf == NEG_INF or self.d - 1 + 2 * self.a_inf < -1
        return low and high

    def in_l1(self):
        low = self.d - 1 + self.a0 > -1
        high = self.a_inf == NEG_INF or self.d - 1 + self.a_inf < -1
        return low and high


@dataclass(frozen=True)
class SourceProfile:
    """Coupling source rho (radial momentum profile) with dimension and
    dispersion exponent.  Derived functions:

        mhat(k)    = omega^{-3/2} rhohat(k)
        omhat(k)   = omega^{-1/2} rhohat(k)    (the interaction direction)
    """

    rho: RadialProfile
    d: int = 3
    s: float = 1.0

    def __post_init__(self):
        if self.s <= 0:
            raise ValueError("dispersion exponent must be positive")
        # m and omega*m must be radially integrable against k^{d-1} when
        # paired with any gaussian (only the k -> 0 end can fail).
        if self.rho.amplitude != 0.0:
            for p in (-1.5 * self.s, -0.5 * self.s):
                expo = self.d - 1 + self.rho.a0 + p
                if expo <= -1:
                    raise DivergentIntegralError(
                        "source not integrable against gaussians near k = 0",
                        exponent=expo)

    @property
    def is_zero(self):
        return self.rho.amplitude == 0.0

    @staticmethod
    def gaussian(width=1.0, amplitude=1.0, d=3, s=1.0):
        return SourceProfile(RadialProfile("gaussian", amplitude=amplitude,
                                           width=width), d=d, s=s)

    @staticmethod
    def zero(d=3, s=1.0):
        return SourceProfile(RadialProfile("gaussian", amplitude=0.0,
                                           width=1.0), d=d, s=s)

    @staticmethod
    def point_flat(amplitude=1.0, d=3, s=1.0):
        return SourceProfile(RadialProfile("point_source_flat",
                                           amplitude=amplitude), d=d, s=s)


@dataclass(frozen=True)
class FormValue:
    """A numerically evaluated form value with its absolute error bound."""

    value: complex
    abs_error: float = 0.0

    @property
    def real(self):
        return self.value.real


class DirectionClass(Enum):
    PHYSICAL = "physical"
    INFRARED_SINGULAR = "infrared_singular"
    BEC_GENERATOR = "bec_generator"
    OUTSIDE_D0 = "outside_D0"


# ---------------------------------------------------------------------------
# radial quadrature
# ---------------------------------------------------------------------------

def _radial_quad(fn, tol, breakpoints=()):
    """Adaptive quadrature of a complex radial integrand on (0, inf).

    The interval is split at profile breakpoints (hard cutoffs); the final
    piece runs to infinity via QUADPACK's tail transformation.  Returns
    (complex value, absolute error bound).
    """
    pts = sorted({float(b) for b in breakpoints if b is not None})
    edges = [0.0] + pts + [np.inf]
    total = 0.0 + 0.0j
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        re, re_err = quad(lambda k: fn(k).real, a, b,
                          epsabs=tol, epsrel=tol, limit=800)
        im, im_err = quad(lambda k: fn(k).imag, a, b,
                          epsabs=tol, epsrel=tol, limit=800)
        total += re + 1j * im
        err += re_err + im_err
    return total, err


def _pair_terms(f, g):
    """Component pairs of conj(fhat) * ghat with their relative shift."""
    for cf in f.components:
        for cg in g.components:
            r = math.dist(cf.shift, cg.shift)
            yield cf, cg, r


def _angular(d, k, r):
    """Angular integral factor for relative shift r (r = 0: full sphere)."""
    if r == 0.0:
        return sphere_area(d)
    # d == 3 enforced at construction for shifted components
    kr = k * r
    return 4.0 * math.pi * np.sinc(kr / math.pi)


def weighted_pairing(f, g, weight, tol=DEFAULT_QUAD_TOL,
                     check=None):
    """< f, weight(omega) g > as a radial integral.  ``weight`` maps the
    dispersion value to a real factor; ``check`` optionally pre-validates
    convergence and raises DivergentIntegralError."""
    if (f.d, f.s) != (g.d, g.s):
        raise ValueError("test functions live on different (d, s) spaces")
    if check is not None:
        check()
    d, s = f.d, f.s
    total = 0.0 + 0.0j
    err = 0.0
    for cf, cg, r in _pair_terms(f, g):
        bps = cf.profile.breakpoints + cg.profile.breakpoints
        cc = np.conj(cf.coeff) * cg.coeff
        du = cg.time_phase - cf.time_phase
        tt = 0.5 * (cf.damp + cg.damp)

        def integrand(k, cf=cf, cg=cg, r=r, du=du, tt=tt):
            om = dispersion(k, s)
            rad = cf.profile.value(k) * cg.profile.value(k)
            return (k ** (d - 1) * rad * np.exp((1j * du - tt) * om)
                    * _angular(d, k, r) * weight(om))

        val, e = _radial_quad(integrand, tol, bps)
        total += cc * val
        err += abs(cc) * e
    return FormValue(total, err)


def source_pairing(f, src, omega_power, weight, tol=DEFAULT_QUAD_TOL):
    """< f, weight(omega) * omega^omega_power * rho > as a radial integral."""
    if (f.d, f.s) != (src.d, src.s):
        raise ValueError("test function and source live on different (d, s)")
    d, s = f.d, f.s
    total = 0.0 + 0.0j
    err = 0.0
    for cf in f.components:
        r = math.hypot(*cf.shift)
        bps = cf.profile.breakpoints + src.rho.breakpoints
        cc = np.conj(cf.coeff)

        def integrand(k, cf=cf, r=r):
            om = dispersion(k, s)
            rad = cf.profile.value(k) * src.rho.value(k)
            return (k ** (d - 1) * rad
                    * np.exp((-1j * cf.time_phase - 0.5 * cf.damp) * om)
                    * np.power(om, omega_power) * _angular(d, k, r)
                    * weight(om))

        val, e = _radial_quad(integrand, tol, bps)
        total += cc * val
        err += abs(cc) * e
    return FormValue(total, err)


# ---------------------------------------------------------------------------
# the static forms
# ---------------------------------------------------------------------------

def form_zero(f, g, n0):
    """Zero-mode (condensate) form 2 (2 pi)^d n0 conj(fhat(0)) ghat(0).

    Exact arithmetic; rejects inputs whose zero-mode value is undefined
    (a0 < 0).  For f = g the result is real and >= 0.
    """
    if n0 < 0:
        raise ValueError("condensate density must be >= 0")
    if f.a0 < 0 or g.a0 < 0:
        raise DivergentIntegralError("zero mode undefined for a0 < 0",
                                     exponent=min(f.a0, g.a0))
    if f.d != g.d:
        raise ValueError("dimension mismatch")
    val = 2.0 * (2.0 * math.pi) ** f.d * n0 * np.conj(f.fhat0()) * g.fhat0()
    return FormValue(complex(val), 0.0)


def _check_nonzero_convergence(f, g, mu):
    d, s = f.d, f.s
    # k -> 0: coth(beta(omega - mu)/2) ~ 2/(beta(omega - mu)); an extra
    # omega^{-1} ~ k^{-s} only at mu = 0.
    low_weight = -s if mu == 0.0 else 0.0
    e0 = d - 1 + f.a0 + g.a0 + low_weight
    if e0 <= -1:
        raise DivergentIntegralError(
            f"thermal form divergent at k -> 0 (exponent {e0})", exponent=e0)
    if f.a_inf != NEG_INF and g.a_inf != NEG_INF:
        ei = d - 1 + f.a_inf + g.a_inf
        if ei >= -1:
            raise DivergentIntegralError(
                f"thermal form divergent at k -> infinity (exponent {ei})",
                exponent=ei)


def form_nonzero(f, g, beta, mu=0.0, tol=DEFAULT_QUAD_TOL):
    """Non-zero-mode thermal form < f, coth(beta (omega - mu)/2) g >.

    mu <= 0; the mu = 0 path evaluates the exact coth(beta omega / 2)
    integrand.  Conjugate-symmetric, and real >= 0 on the diagonal.
    """
    if beta <= 0:
        raise ValueError("inverse temperature must be positive")
    if mu > 0:
        raise ValueError("chemical potential must be <= 0")
    return weighted_pairing(
        f, g,
        weight=lambda om: 1.0 / np.tanh(0.5 * beta * (om - mu)),
        tol=tol,
        check=lambda: _check_nonzero_convergence(f, g, mu))


def _check_plain_convergence(f, g):
    d = f.d
    e0 = d - 1 + f.a0 + g.a0
    if e0 <= -1:
        raise DivergentIntegralError(
            f"inner product divergent at k -> 0 (exponent {e0})", exponent=e0)
    if f.a_inf != NEG_INF and g.a_inf != NEG_INF:
        ei = d - 1 + f.a_inf + g.a_inf
        if ei >= -1:
            raise DivergentIntegralError(
                f"inner product divergent at k -> infinity (exponent {ei})",
                exponent=ei)


def inner_product(f, g, tol=DEFAULT_QUAD_TOL):
    """Plain L2 inner product < f, g >."""
    return weighted_pairing(f, g, weight=lambda om: 1.0, tol=tol,
                            check=lambda: _check_plain_convergence(f, g))


def symplectic(f, g, tol=DEFAULT_QUAD_TOL):
    """Symplectic form sigma(f, g) = Im < f, g >."""
    return inner_product(f, g, tol=tol).value.imag


@dataclass(frozen=True)
class MPairingResult:
    """Result of the m-pairing: either a value or the "not in dom m" tag."""

    in_domain: bool
    value: FormValue | None = None
    diverging_exponent: float | None = None


def m_pairing_exponents(f, src):
    """(exponent at 0, exponent at infinity) of the |m-pairing| integrand."""
    d, s = f.d, f.s
    e0 = d - 1 + f.a0 + src.rho.a0 - 1.5 * s
    if f.a_inf == NEG_INF or src.rho.a_inf == NEG_INF:
        ei = NEG_INF
    else:
        ei = d - 1 + f.a_inf + src.rho.a_inf - 1.5 * s
    return e0, ei


def m_pairing(f, src, tol=DEFAULT_QUAD_TOL):
    """< f, m > with mhat = omega^{-3/2} rhohat.

    Divergence (by exponent arithmetic) yields a tagged "not in dom m"
    result instead of an exception.
    """
    if src.is_zero:
        return MPairingResult(True, FormValue(0.0 + 0.0j, 0.0))
    e0, ei = m_pairing_exponents(f, src)
    if e0 <= -1:
        return MPairingResult(False, diverging_exponent=e0)
    if ei != NEG_INF and ei >= -1:
        return MPairingResult(False, diverging_exponent=ei)
    val = source_pairing(f, src, omega_power=-1.5,
                         weight=lambda om: 1.0, tol=tol)
    return MPairingResult(True, val)


def classify_direction(f, src, n0):
    """Direction classification for the ideal-structure bookkeeping.

    outside_D0          : f not in L1 ∩ L2 (zero-mode form undefined)
    infrared_singular   : zero mode fine but the m-pairing diverges
    bec_generator       : physical with positive condensate form
    physical            : everything else
    """
    if not (f.in_l1() and f.in_l2()):
        return DirectionClass.OUTSIDE_D0
    if not m_pairing(f, src).in_domain:
        return DirectionClass.INFRARED_SINGULAR
    if n0 > 0 and form_zero(f, f, n0).value.real > 0:
        return DirectionClass.BEC_GENERATOR
    return DirectionClass.PHYSICAL
