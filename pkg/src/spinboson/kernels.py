"""Beta-periodic thermal covariance kernels and their time antiderivatives.

The scalar self-kernel is

    kappa(tau) = Omega_d * int k^{d-1} |rhohat(k)|^2 omega^{-1}
                 * T_beta(tau, omega) dk,

with the periodic thermal factor

    T_beta(tau, omega) = (e^{-tau w} + e^{-(beta-tau) w}) / (1 - e^{-beta w}),
    tau in [0, beta].

The per-test-function kernel K_f(tau) pairs f against the interaction
direction omega^{-1/2} rho with the same thermal factor.

Time integrals of T_beta are exponentials and are carried out in closed
form (see thermal_antider / thermal_antider2); the momentum integral is
evaluated once per tabulation node on a refined Gauss-Legendre rule with
the infinite tail mapped through k = tan(theta).  Double time integrals of
kappa then reduce to differences of the tabulated second antiderivative
Psi, which is the workhorse of the loop-weight evaluation.
"""

from __future__ import annotations

import hashlib
import math
import struct

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from spinboson.momentum import (
    NEG_INF,
    DivergentIntegralError,
    SourceProfile,
    TestFunction,
    dispersion,
    sphere_area,
)


class QuadratureError(RuntimeError):
    """Momentum quadrature failed to converge within the panel budget."""


# ---------------------------------------------------------------------------
# exact time integrals of the periodic thermal factor
# ---------------------------------------------------------------------------

def thermal_factor(tau, omega, beta):
    """T_beta(tau, omega); broadcasts over tau and omega."""
    denom = -np.expm1(-beta * omega)
    return (np.exp(-tau * omega) + np.exp(-(beta - tau) * omega)) / denom


def thermal_antider(tau, omega, beta):
    """int_0^tau T_beta(v, omega) dv in overflow-free closed form.

    At tau = beta the value is exactly 2/omega (the full-circle identity).
    """
    denom = -np.expm1(-beta * omega)
    num = (-np.expm1(-tau * omega)
           + np.exp(-(beta - tau) * omega) - np.exp(-beta * omega))
    return num / (omega * denom)


def _expm1mx(x):
    """expm1(x) - x, stable near 0 (series through x^9 below |x| = 0.1)."""
    x = np.asarray(x, dtype=float)
    xs = np.where(np.abs(x) < 0.1, x, 0.0)
    series = np.zeros_like(xs)
    term = xs * xs / 2.0
    for n in range(2, 10):
        series += term
        term = term * xs / (n + 1.0)
    direct = np.expm1(np.where(np.abs(x) < 700.0, x, 0.0)) - x
    return np.where(np.abs(x) < 0.1, series, direct)


def thermal_antider2(u, omega, beta):
    """int_0^u int_0^v T_beta(tau, omega) dtau dv, closed form.

    Two branches: for small u*omega the naive expression cancels
    catastrophically, so it is rearranged into 4 sinh^2(x/2) minus a
    product term; for large arguments the original decaying-exponential
    form is overflow-free.
    """
    u = np.asarray(u, dtype=float)
    x = u * omega
    denom = -np.expm1(-beta * omega)
    small = x < 0.1
    xs = np.where(small, x, 0.0)
    num_small = 4.0 * np.sinh(0.5 * xs) ** 2 - denom * _expm1mx(xs)
    num_large = (x * denom + np.expm1(-x)
                 + np.exp(-(beta - u) * omega) - np.exp(-beta * omega))
    num = np.where(small, num_small, num_large)
    return num / (omega * omega * denom)


def thermal_factor_dtau(tau, omega, beta):
    """d/dtau of T_beta (for Hermite tabulation of K)."""
    denom = -np.expm1(-beta * omega)
    return omega * (-np.exp(-tau * omega)
                    + np.exp(-(beta - tau) * omega)) / denom


# ---------------------------------------------------------------------------
# momentum rule: composite Gauss-Legendre on k = tan(theta)
# ---------------------------------------------------------------------------

_GL_ORDER = 16


def _theta_edges(breaks, n_per_seg):
    """Panel edges in theta covering (0, pi/2), split at profile cutoffs.

    The lower half of the first segment is geometrically graded toward 0:
    the unresolved mass of an integrable power singularity k^a then decays
    like 2^{-n(1+a)} in the panel count, so doubling always converges."""
    pts = sorted({math.atan(b) for b in breaks if b})
    segs = [0.0] + [p for p in pts if 0.0 < p < 0.5 * math.pi] + [0.5 * math.pi]
    edges = [np.array([0.0])]
    for a, b in zip(segs[:-1], segs[1:]):
        if a == 0.0:
            # split the panel budget: geometric grading below the
            # midpoint, uniform above, so the total count stays n_per_seg
            nl = max(n_per_seg // 2, 8)
            nu = max(n_per_seg - nl, 8)
            # floor the grading exponent so k^s stays above underflow
            lower = 0.5 * (b - a) * np.geomspace(
                2.0 ** -min(nl, 200), 1.0, nl + 1)[1:]
            upper = a + (b - a) * np.linspace(0.5, 1.0, nu + 1)[1:]
            edges.append(np.concatenate([a + lower, upper]))
        else:
            edges.append(a + (b - a)
                         * np.linspace(0.0, 1.0, n_per_seg + 1)[1:])
    return np.concatenate(edges)


def _gl_rule(edges, order=_GL_ORDER):
    """Gauss-Legendre nodes/weights on the theta panels, mapped to k."""
    x, w = np.polynomial.legendre.leggauss(order)
    a = edges[:-1]
    b = edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    theta = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wt = (half[:, None] * w[None, :]).ravel()
    k = np.tan(theta)
    jac = 1.0 / np.cos(theta) ** 2
    return k, wt * jac


def _refine_rule(gfun, breaks, probe, tol, max_panels=1024):
    """Double the panel count until the probe vector stabilizes.

    gfun(k) is the momentum weight (everything except the thermal factor);
    probe(k, gw) maps a candidate rule to a small vector of representative
    integrals.  Returns (k, gw) of the accepted rule."""
    prev = None
    n = 16
    while n <= max_panels:
        k, w = _gl_rule(_theta_edges(breaks, n))
        gw = w * gfun(k)
        vals = np.atleast_1d(probe(k, gw))
        if prev is not None and tol > 0:
            scale = 1.0 + np.max(np.abs(vals))
            # tol = 0 never accepts (probes can agree to the last bit by
            # coincidence long before the rule is trustworthy)
            if np.max(np.abs(vals - prev)) <= tol * scale:
                return k, gw
        prev = vals
        n *= 2
    raise QuadratureError(
        "momentum rule did not converge within the panel budget")


def _shift_angular(d, k, r):
    if r == 0.0:
        return sphere_area(d)
    return 4.0 * math.pi * np.sinc(k * r / math.pi)


class _ComplexSpline:
    """Cubic Hermite interpolant with complex values."""

    def __init__(self, x, y, dy):
        y = np.asarray(y)
        dy = np.asarray(dy)
        self._re = CubicHermiteSpline(x, y.real, dy.real)
        self._im = (CubicHermiteSpline(x, y.imag, dy.imag)
                    if np.iscomplexobj(y) else None)
        self.complex = self._im is not None

    def __call__(self, x):
        out = self._re(x)
        if self._im is not None:
            out = out + 1j * self._im(x)
        return out


class _ZeroEntry:
    """Kernel entry for a vanishing source."""

    m_value = 0.0 + 0.0j

    @staticmethod
    def K(tau):
        return np.zeros_like(np.asarray(tau, dtype=float))

    @staticmethod
    def A(tau):
        return np.zeros_like(np.asarray(tau, dtype=float))


class _KernelEntry:
    """Tabulated K_f and its first time antiderivative A_f on [0, beta]."""

    def __init__(self, grid, kvals, avals, dkvals, m_value):
        self.K = _ComplexSpline(grid, kvals, dkvals)
        self.A = _ComplexSpline(grid, avals, kvals)
        self.m_value = m_value


_CACHE_MAGIC = b"SBKT"
_CACHE_VERSION = 1


class ThermalKernelTable:
    """Precomputed kappa, Psi and per-test-function kernels at fixed
    (beta, source).

    Psi(u) = int_0^u int_0^v kappa(tau) dtau dv is tabulated on a uniform
    grid (default 2048 cells, doubled until a refinement check passes) with
    exact nodal derivatives, so interval and double-block integrals of the
    covariance are O(1) spline-difference evaluations.
    """

    def __init__(self, src, beta, n_grid=2048, tol=1e-9, cache_path=None):
        if beta <= 0:
            raise ValueError("inverse temperature must be positive")
        self.src = src
        self.beta = float(beta)
        self.d = src.d
        self.s = src.s
        self.tol = float(tol)
        self._entries = {}
        self._const = None
        if src.is_zero:
            self._zero = True
            self.n_grid = n_grid
            self.grid = np.linspace(0.0, self.beta, 2)
            return
        self._zero = False
        self._check_self_convergence()
        self._build_rule()
        self.n_grid = n_grid
        if cache_path is not None and self.load_cache(cache_path):
            return
        self._tabulate(n_grid)
        if cache_path is not None:
            self.save_cache(cache_path)

    # -- construction hooks --------------------------------------------------

    @classmethod
    def constant(cls, beta, c0):
        """Test hook: a table whose kappa is the constant c0 (so
        Psi(u) = c0 u^2 / 2 exactly)."""
        obj = cls.__new__(cls)
        obj.beta = float(beta)
        obj.src = None
        obj.d = 3
        obj.s = 1.0
        obj.tol = 0.0
        obj._entries = {}
        obj._zero = False
        obj._const = float(c0)
        obj.n_grid = 0
        obj.grid = np.linspace(0.0, beta, 2)
        return obj

    def _check_self_convergence(self):
        d, s, rho = self.d, self.s, self.src.rho
        e0 = d - 1 + 2 * rho.a0 - 2 * s
        if e0 <= -1:
            raise DivergentIntegralError(
                f"kappa divergent at k -> 0 (exponent {e0})", exponent=e0)
        if rho.a_inf != NEG_INF:
            ei = d - 1 + 2 * rho.a_inf - s
            if ei >= -1:
                raise DivergentIntegralError(
                    f"kappa divergent at k -> infinity (exponent {ei})",
                    exponent=ei)

    def _build_rule(self):
        d, s, beta = self.d, self.s, self.beta
        rho = self.src.rho
        omega_d = sphere_area(d)

        def gfun(k):
            om = dispersion(k, s)
            return omega_d * k ** (d - 1) * rho.value(k) ** 2 / om

        def probe(k, gw):
            om = dispersion(k, s)
            return np.array([
                gw @ thermal_factor(0.0, om, beta),
                gw @ thermal_factor(0.5 * beta, om, beta),
                gw @ thermal_antider2(beta, om, beta),
            ])

        self._k, self._gw = _refine_rule(gfun, rho.breakpoints, probe,
                                         self.tol)
        self._om = dispersion(self._k, s)

    def _tabulate(self, n_grid):
        beta = self.beta
        while True:
            grid = np.linspace(0.0, beta, n_grid + 1)
            psi = self._momentum_sum(thermal_antider2, grid)
            apsi = self._momentum_sum(thermal_antider, grid)
            spline = CubicHermiteSpline(grid, psi.real, apsi.real)
            # refinement check at midpoints against exact values
            mids = 0.5 * (grid[:-1] + grid[1:])
            exact = self._momentum_sum(thermal_antider2, mids).real
            scale = 1.0 + abs(psi.real[-1])
            if np.max(np.abs(spline(mids) - exact)) <= self.tol * scale:
                break
            if n_grid >= 1 << 16:
                raise QuadratureError("Psi grid refinement did not converge")
            n_grid *= 2
        self.n_grid = n_grid
        self.grid = grid
        self._psi_vals = psi.real
        self._apsi_vals = apsi.real
        self._psi = spline

    def _momentum_sum(self, time_fn, tau, k=None, gw=None, om=None):
        """sum_j gw_j * time_fn(tau_i, omega_j) over the momentum rule."""
        if k is None:
            k, gw, om = self._k, self._gw, self._om
        tau = np.asarray(tau, dtype=float)
        if tau.ndim == 1:
            # slab over tau so the (tau, k) matrix stays a few MB even on
            # deeply refined grids
            slab = max(1, (1 << 22) // max(len(om), 1))
            out = np.empty(len(tau), dtype=complex)
            for lo in range(0, len(tau), slab):
                hi = min(lo + slab, len(tau))
                out[lo:hi] = time_fn(tau[lo:hi, None], om, self.beta) @ gw
            return out
        vals = time_fn(tau.reshape(tau.shape + (1,)), om, self.beta)
        out = vals @ gw
        return out if out.ndim else out[()]

    # -- scalar kernel -------------------------------------------------------

    def kappa(self, tau):
        """The self-kernel kappa(tau), 0 <= tau <= beta (vectorized)."""
        tau = np.asarray(tau, dtype=float)
        if np.any((tau < -1e-12) | (tau > self.beta + 1e-12)):
            raise ValueError("tau must lie in [0, beta]")
        if self._const is not None:
            return np.broadcast_to(self._const, tau.shape).copy() \
                if tau.ndim else self._const
        if self._zero:
            return np.zeros(tau.shape) if tau.ndim else 0.0
        out = self._momentum_sum(thermal_factor, tau)
        return out.real if np.ndim(out) else float(np.real(out))

    def Psi(self, u):
        """Second iterated antiderivative of kappa (tabulated spline)."""
        u = np.asarray(u, dtype=float)
        if self._const is not None:
            out = 0.5 * self._const * u ** 2
        elif self._zero:
            out = np.zeros(u.shape)
        else:
            out = self._psi(u)
        return out if out.ndim else float(out)

    def Psi_exact(self, u):
        """Psi by direct momentum quadrature (oracle path, no spline)."""
        if self._const is not None:
            return 0.5 * self._const * np.asarray(u, dtype=float) ** 2
        if self._zero:
            return np.zeros_like(np.asarray(u, dtype=float))
        out = self._momentum_sum(thermal_antider2, u)
        return np.real(out)

    def kappa_antider(self, u):
        """First antiderivative int_0^u kappa (direct momentum sum)."""
        if self._const is not None:
            return self._const * np.asarray(u, dtype=float)
        if self._zero:
            return np.zeros_like(np.asarray(u, dtype=float))
        return np.real(self._momentum_sum(thermal_antider, u))

    def double_block(self, a, b, c, d):
        """Double integral of kappa(|t-s|) over [a,b] x [c,d] via the
        difference-kernel identity."""
        pa = self.Psi(abs(d - a))
        pb = self.Psi(abs(c - a))
        pc = self.Psi(abs(d - b))
        pd = self.Psi(abs(c - b))
        return float(pa - pb - pc + pd)

    # -- per-test-function kernels -------------------------------------------

    def _check_f_convergence(self, f):
        d, s = self.d, self.s
        rho = self.src.rho
        e0 = d - 1 + f.a0 + rho.a0 - 1.5 * s
        if e0 <= -1:
            raise DivergentIntegralError(
                f"K_f divergent at k -> 0 (exponent {e0})", exponent=e0)
        if f.a_inf != NEG_INF and rho.a_inf != NEG_INF:
            ei = d - 1 + f.a_inf + rho.a_inf - 0.5 * s
            if ei >= -1:
                raise DivergentIntegralError(
                    f"K_f divergent at k -> infinity (exponent {ei})",
                    exponent=ei)

    def _f_rule_and_weight(self, f):
        """Refined rule (k, complex weight) for the f-against-source
        integrand, with the thermal factor left out."""
        d, s, beta = self.d, self.s, self.beta
        rho = self.src.rho
        breaks = rho.breakpoints + tuple(
            b for c in f.components for b in c.profile.breakpoints)

        def gfun(k):
            om = dispersion(k, s)
            base = k ** (d - 1) * rho.value(k) / np.sqrt(om)
            tot = np.zeros_like(k, dtype=complex)
            for c in f.components:
                r = math.hypot(*c.shift)
                tot += (np.conj(c.coeff) * c.profile.value(k)
                        * np.exp((-1j * c.time_phase - 0.5 * c.damp) * om)
                        * _shift_angular(d, k, r))
            return base * tot

        def probe(k, gw):
            om = dispersion(k, s)
            v0 = gw @ thermal_factor(0.0, om, beta)
            vb = gw @ thermal_antider(beta, om, beta)
            return np.array([v0.real, v0.imag, vb.real, vb.imag])

        k, gw = _refine_rule(gfun, breaks, probe, self.tol)
        return k, gw, dispersion(k, s)

    def register(self, f):
        """Tabulate K_f and its antiderivative; cached per test function."""
        if self._const is not None:
            raise ValueError("constant test tables carry no source")
        entry = self._entries.get(f)
        if entry is not None:
            return entry
        if self._zero:
            entry = _ZeroEntry()
        else:
            if (f.d, f.s) != (self.d, self.s):
                raise ValueError("test function on a different (d, s) space")
            self._check_f_convergence(f)
            k, gw, om = self._f_rule_and_weight(f)
            grid = np.linspace(0.0, self.beta, self.n_grid + 1)
            kv = self._momentum_sum(thermal_factor, grid, k, gw, om)
            av = self._momentum_sum(thermal_antider, grid, k, gw, om)
            dk = self._momentum_sum(thermal_factor_dtau, grid, k, gw, om)
            m_value = 0.5 * complex(av[-1])
            entry = _KernelEntry(grid, kv, av, dk, m_value)
        self._entries[f] = entry
        return entry

    def kernel_K(self, f, t, s_time):
        """K_{f,t}(s) = <f, T_beta(|t-s|) omega m> via the tabulated entry."""
        tau = abs(t - s_time)
        if tau > self.beta:
            raise ValueError("|t - s| exceeds beta")
        entry = self.register(f)
        return complex(entry.K(tau)) if np.ndim(tau) == 0 else entry.K(tau)

    def interval_K_integral(self, f, t, a, b):
        """int_a^b K_{f,t}(u) du from the tabulated antiderivative."""
        half = 0.5 * self.beta
        eps = 1e-12 * self.beta
        for x in (a, b, t):
            if x < -half - eps or x > half + eps:
                raise ValueError("times must lie in [-beta/2, beta/2]")
        entry = self.register(f)

        def G(u):
            return math.copysign(1.0, u - t) * entry.A(abs(u - t)) \
                if u != t else 0.0

        return complex(G(b) - G(a))

    def m_value(self, f):
        """<f, m> recovered from the exact full-circle identity
        A_f(beta) = 2 <f, m>."""
        return self.register(f).m_value

    # -- identity / caching --------------------------------------------------

    def content_hash(self):
        """Hash identifying (beta, source, grid) for handle consistency."""
        h = hashlib.sha256()
        h.update(struct.pack("<dqd", self.beta, self.n_grid, self.tol))
        h.update(repr(self.src).encode())
        return h.hexdigest()

    def save_cache(self, path):
        """Write the Psi table as versioned little-endian float64."""
        if self._zero or self._const is not None:
            raise ValueError("nothing to cache for degenerate tables")
        with open(path, "wb") as fh:
            fh.write(_CACHE_MAGIC)
            fh.write(struct.pack("<I", _CACHE_VERSION))
            fh.write(bytes.fromhex(self.content_hash()))
            fh.write(struct.pack("<qd", self.n_grid, self.beta))
            fh.write(self._psi_vals.astype("<f8").tobytes())
            fh.write(self._apsi_vals.astype("<f8").tobytes())

    def load_cache(self, path):
        """Load a Psi table written by save_cache; returns False on any
        mismatch (wrong magic, version, or content hash)."""
        try:
            with open(path, "rb") as fh:
                if fh.read(4) != _CACHE_MAGIC:
                    return False
                (ver,) = struct.unpack("<I", fh.read(4))
                if ver != _CACHE_VERSION:
                    return False
                if fh.read(32) != bytes.fromhex(self.content_hash()):
                    return False
                n, beta = struct.unpack("<qd", fh.read(16))
                if n != self.n_grid or beta != self.beta:
                    return False
                m = n + 1
                psi = np.frombuffer(fh.read(8 * m), dtype="<f8")
                apsi = np.frombuffer(fh.read(8 * m), dtype="<f8")
        except OSError:
            return False
        grid = np.linspace(0.0, self.beta, self.n_grid + 1)
        self.grid = grid
        self._psi_vals = psi.copy()
        self._apsi_vals = apsi.copy()
        self._psi = CubicHermiteSpline(grid, self._psi_vals, self._apsi_vals)
        return True
