"""Characteristic functionals of the assembled equilibrium state.

The state is accessed only through Euclidean data:

    psi(W(f)) = exp(-1/4 q0(f) - 1/4 q_{!=0,beta}(f)) * S(f),

where the Gaussian forms come from the momentum module and the spin
factor S is a tilted-ensemble average.  Zero-mode and non-zero-mode
contributions stay separated throughout, which is what the cluster and
no-go diagnostics exploit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from spinboson.ensemble import build_ensemble
from spinboson.kernels import ThermalKernelTable
from spinboson.loops import SpinMeasureParams
from spinboson.momentum import (
    DirectionClass,
    classify_direction,
    form_nonzero,
    form_zero,
    m_pairing,
    symplectic,
)


class DirectionRejected(ValueError):
    """Raised for test functions outside the admissible direction set
    (infrared-singular directions generate the rejected ideal)."""

    def __init__(self, classification, message):
        super().__init__(message)
        self.classification = classification


@dataclass
class StateConfig:
    """Parameter tuple plus the shared kernel table and loop ensemble."""

    beta: float
    eps: float
    d: int
    s: float
    n0: float
    source: object
    kernels: ThermalKernelTable
    ensemble: object
    mu: float = 0.0
    _q_cache: dict = field(default_factory=dict, repr=False)
    _class_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kernels.beta != self.beta:
            raise ValueError("kernel table built at a different beta")
        if self.kernels.src is not self.source \
                and self.kernels.src != self.source:
            raise ValueError("kernel table built for a different source")
        if self.ensemble.kernels is not self.kernels:
            raise ValueError("ensemble does not share the kernel table")
        if self.ensemble.params.beta != self.beta \
                or self.ensemble.params.eps != self.eps:
            raise ValueError("ensemble built at different (beta, eps)")

    @classmethod
    def build(cls, source, beta, eps, n0=0.0, n_loops=20000, seed=0,
              n_grid=2048, tol=1e-9, workers=1, frozen_spin=False,
              cache_path=None):
        kernels = ThermalKernelTable(source, beta, n_grid=n_grid, tol=tol,
                                     cache_path=cache_path)
        params = SpinMeasureParams(beta, eps)
        ens = build_ensemble(params, kernels, n_loops, seed,
                             workers=workers, frozen_spin=frozen_spin)
        return cls(beta=beta, eps=eps, d=source.d, s=source.s, n0=n0,
                   source=source, kernels=kernels, ensemble=ens)

    # -- cached forms --------------------------------------------------------

    def q0(self, f, g=None):
        key = ("q0", f, g)
        if key not in self._q_cache:
            self._q_cache[key] = form_zero(f, g if g is not None else f,
                                           self.n0).value
        return self._q_cache[key]

    def q_nonzero(self, f, g=None):
        key = ("qne", f, g)
        if key not in self._q_cache:
            self._q_cache[key] = form_nonzero(
                f, g if g is not None else f, self.beta, self.mu).value
        return self._q_cache[key]

    def q_bec(self, f):
        """q0(f,f) + q_{!=0}(f,f), both real on the diagonal."""
        return self.q0(f).real + self.q_nonzero(f).real

    def classify(self, f):
        if f not in self._class_cache:
            self._class_cache[f] = classify_direction(f, self.source, self.n0)
        return self._class_cache[f]

    def require_admissible(self, f):
        c = self.classify(f)
        if c in (DirectionClass.INFRARED_SINGULAR, DirectionClass.OUTSIDE_D0):
            raise DirectionRejected(
                c, f"direction rejected with classification {c.value}")
        return c


def _gauss_prefactor(qtot, s=1.0):
    return math.exp(-0.25 * qtot * s * s)


def charfun(cfg, f, t=0.0):
    """psi(W(e^{i t omega} f)) as (value, standard error)."""
    cfg.require_admissible(f)
    fd = f.damped(t)
    # the zero mode is blind to Euclidean damping (omega(0) = 0)
    if fd.fhat0() != f.fhat0():
        raise AssertionError("zero mode changed under damping")
    qtot = cfg.q0(f).real + cfg.q_nonzero(fd).real
    sval, se = cfg.ensemble.spin_factor(f, t)
    pref = _gauss_prefactor(qtot)
    return pref * sval, pref * se


def charfun_scaled(cfg, f, s):
    """psi(e^{i s Phi(f)}) on a real s-grid: Gaussian(s^2) * E~[e^{-isZ}]."""
    cfg.require_admissible(f)
    qtot = cfg.q0(f).real + cfg.q_nonzero(f).real
    vals, ses = cfg.ensemble.char_function(f, s)
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    pref = np.array([_gauss_prefactor(qtot, sj) for sj in s_arr])
    if np.ndim(s) == 0:
        return pref[0] * vals, pref[0] * ses
    return pref * vals, pref * ses


def transported(g, mode, amount):
    """Apply the two-point transport: time evolution or spatial shift."""
    if mode == "time":
        return g.time_evolved(amount)
    if mode == "space":
        shift = (amount,) + (0.0,) * (g.d - 1)
        return g.shifted(shift)
    raise ValueError(f"unknown transport mode {mode!r}")


def two_point_charfun(cfg, f, g, mode="time", amount=0.0, weyl_phase=False):
    """psi(W(f) W(T g)) via the substitution f + T g, with the zero mode
    evaluated on the untransported sum.

    weyl_phase optionally multiplies by exp(-(i/2) sigma(f, Tg)); the
    default keeps the bare substitution.
    """
    tg = transported(g, mode, amount)
    cfg.require_admissible(f)
    cfg.require_admissible(tg)
    fg0 = f + g
    ftg = f + tg
    qtot = cfg.q0(fg0).real + cfg.q_nonzero(ftg).real
    sval, se = cfg.ensemble.spin_factor(ftg, 0.0)
    pref = _gauss_prefactor(qtot)
    val = pref * sval
    if weyl_phase:
        val = val * np.exp(-0.5j * symplectic(f, tg))
    return val, pref * se


def van_hove_charfun(cfg, f, s):
    """The comparator state: same Gaussian body, pure phase interaction."""
    pairing = m_pairing(f, cfg.source)
    if not pairing.in_domain:
        raise DirectionRejected(
            DirectionClass.INFRARED_SINGULAR,
            "van Hove comparator needs f in dom m")
    qtot = cfg.q0(f).real + cfg.q_nonzero(f).real
    c = pairing.value.value.real
    s_arr = np.asarray(s, dtype=float)
    out = np.exp(-0.25 * qtot * s_arr ** 2) * np.exp(-1j * s_arr * c)
    return out if out.ndim else complex(out)


def ground_limit_spin_factor(cfg, f, beta_ladder, n_loops=20000, seed=0):
    """S_{beta,0}(f) along an increasing beta ladder.

    Returns rows (beta, value, se) and the successive differences as a
    convergence diagnostic; no extrapolated limit is asserted.
    """
    betas = list(beta_ladder)
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("beta ladder must be increasing")
    rows = []
    for b in betas:
        kern = ThermalKernelTable(cfg.source, b, tol=cfg.kernels.tol)
        ens = build_ensemble(SpinMeasureParams(b, cfg.eps), kern,
                             n_loops, seed)
        val, se = ens.spin_factor(f, 0.0)
        rows.append((b, val, se))
    diffs = [abs(rows[i + 1][1] - rows[i][1]) for i in range(len(rows) - 1)]
    return rows, diffs


def weyl_matrix(cfg, fs):
    """Gram matrix M_jk = psi(W(f_j)* W(f_k)) assembled with the Weyl
    relation W(f)* W(g) = e^{(i/2) sigma(f, g)} W(g - f).

    Returns (M, max standard error); positive semi-definiteness up to
    statistical error is a smoke test of the state.
    """
    k = len(fs)
    m = np.empty((k, k), dtype=complex)
    max_se = 0.0
    for i, fi in enumerate(fs):
        for j, fj in enumerate(fs):
            diff = fj + fi.scaled(-1.0)
            val, se = charfun(cfg, diff, 0.0)
            m[i, j] = np.exp(0.5j * symplectic(fi, fj)) * val
            max_se = max(max_se, se)
    return m, max_se
