"""A priori bounds and contraction horizons for the decoupling-field iteration.

Everything here is a scalar function of the structure constants
(gamma, b, nu, M, nu_T, M_T, m, |G|, T).  The growth bound alpha_t and the
Jacobian bound beta_t control the field globally; mu_t, rho_t, theta_h and
sigma_h control one local fixed-point interval, and ``layer_plan`` tiles
[0, T] with such intervals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy import integrate

from .errors import RegimeError
from .problem import GramOperator, ProblemSpec, gram as _gram

__all__ = [
    "RegimeConstants",
    "LocalHorizon",
    "HorizonPlan",
    "Regime",
    "select_k",
    "riccati_bound",
]

# tangent blow-up guard for the arctan inversions
_ARCTAN_CAP = 0.5 * math.pi - 1e-9
_GOLDEN = 0.5 * (math.sqrt(5.0) - 1.0)


@dataclass(frozen=True)
class RegimeConstants:
    k: float | None
    alpha0: float | None
    beta0: float | None
    first_estimate_ok: bool
    second_estimate_ok: bool
    fixed_point_ok: bool

    @property
    def flags(self) -> dict:
        return {
            "first_estimate_ok": self.first_estimate_ok,
            "second_estimate_ok": self.second_estimate_ok,
            "fixed_point_ok": self.fixed_point_ok,
        }


@dataclass(frozen=True)
class LocalHorizon:
    """Admissible local interval for a given terminal Lipschitz constant."""

    terminal_constant: float
    h_max: float          # with safety margin
    h_limit: float        # largest h with contraction factor < 1
    theta_h: float
    sigma_h: float
    contraction: float    # factor evaluated at h_max


@dataclass(frozen=True)
class HorizonPlan:
    """Tiling T = t_0 > t_1 > ... > t_L = 0 of the horizon into local intervals."""

    breakpoints: tuple[float, ...]
    terminal_constants: tuple[float, ...]
    horizons: tuple[LocalHorizon, ...] = field(repr=False)

    @property
    def n_layers(self) -> int:
        return max(len(self.breakpoints) - 1, 0)

    @property
    def layers(self) -> list[tuple[float, float]]:
        """(start, end) pairs, latest layer first."""
        b = self.breakpoints
        return [(b[j + 1], b[j]) for j in range(self.n_layers)]

    @property
    def h_max(self) -> float:
        return self.horizons[0].h_max

    @property
    def theta_h(self) -> float:
        return self.horizons[0].theta_h

    @property
    def sigma_h(self) -> float:
        return self.horizons[0].sigma_h

    @property
    def contraction(self) -> float:
        return self.horizons[0].contraction

    def layer_of(self, t: float) -> int:
        """Index j with t_{j+1} <= t < t_j; -1 for t at the final time."""
        b = self.breakpoints
        if not b or t > b[0] + 1e-14 or t < b[-1] - 1e-14:
            raise RegimeError(f"time {t} outside the planned horizon")
        if t >= b[0]:
            return -1
        for j in range(self.n_layers):
            if t >= b[j + 1]:
                return j
        return self.n_layers - 1


def riccati_bound(tau: float, terminal: float, M: float, g: float, gamma: float) -> float:
    """Backward solution of  d mu/dt = -g mu^2 - 2 gamma mu - M,  mu = terminal at tau = 0.

    Closed form through the arctan inversion; ``tau`` is the time to go.
    """
    disc = M * g - gamma * gamma
    if disc <= 0 or g <= 0:
        raise RegimeError("fixed-point regime violated: gamma^2 >= M*|G|")
    w = math.sqrt(disc)
    arg = math.atan((terminal * g + gamma) / w) + w * tau
    if arg >= _ARCTAN_CAP:
        raise RegimeError("horizon exceeds mu blow-up")
    return (w * math.tan(arg) - gamma) / g


def _alpha_terminal(M_T: float, nu_T: float) -> float:
    return 0.0 if M_T == 0 else M_T * M_T / nu_T


def select_k(spec: ProblemSpec, gram: GramOperator | None = None, *,
             tol: float = 1e-10) -> RegimeConstants:
    """Choose the splitting constant k and evaluate the regime flags.

    With b = 0 any k below min(m, nu) works and we take 0.99 of it.  Otherwise
    alpha_0 is decreasing in k, and golden-section search drives k to the edge
    of the admissible set  b^2/16 < (m - k)(nu - k).
    """
    g = gram if gram is not None else _gram(spec)
    m, nu, b = g.m_coer, spec.nu, spec.b_const
    T = spec.horizon_T
    fixed_ok = spec.gamma ** 2 < spec.M * g.g_norm
    a_T = _alpha_terminal(spec.M_T, spec.nu_T)
    kmax = min(m, nu)
    if kmax <= 0 or b * b / 16.0 >= m * nu:
        return RegimeConstants(None, None, None, False, False, fixed_ok)

    def alpha0(k):
        return a_T + (spec.gamma ** 2 + spec.M ** 2) * T / k

    if b == 0:
        k = 0.99 * kmax
    else:
        def f(k):
            if not (0 < k < kmax) or b * b / 16.0 >= (m - k) * (nu - k):
                return math.inf
            return alpha0(k)

        lo, hi = 0.0, kmax
        c = hi - _GOLDEN * (hi - lo)
        d = lo + _GOLDEN * (hi - lo)
        fc, fd = f(c), f(d)
        while hi - lo > tol:
            if fc <= fd:
                hi, d, fd = d, c, fc
                c = hi - _GOLDEN * (hi - lo)
                fc = f(c)
            else:
                lo, c, fc = c, d, fd
                d = lo + _GOLDEN * (hi - lo)
                fd = f(d)
        k = lo if f(lo) < math.inf else c
        if f(k) == math.inf:
            raise RegimeError("k search failed to find an admissible point")

    a0 = alpha0(k)
    second_ok = nu - b * a0 > 0
    beta0 = None
    if second_ok:
        beta0 = _beta(0.0, spec, g.m_coer, k)
    return RegimeConstants(k, a0, beta0, True, second_ok, fixed_ok)


def _beta(t: float, spec: ProblemSpec, m: float, k: float) -> float:
    T, b = spec.horizon_T, spec.b_const
    a_T = _alpha_terminal(spec.M_T, spec.nu_T)
    slope = (spec.gamma ** 2 + spec.M ** 2) / k

    def integrand(s):
        a = a_T + slope * (T - s)
        return (spec.M + b * a) ** 2 / (spec.nu - b * a)

    val = 0.0
    if T > t:
        val, _ = integrate.quad(integrand, t, T, epsabs=1e-10, epsrel=1e-12, limit=200)
    return a_T + spec.gamma ** 2 * (T - t) / m + val


class Regime:
    """All scalar regime quantities for one problem.

    Parameters
    ----------
    spec : ProblemSpec
    gram : GramOperator, optional
        Precomputed ``B N^{-1} B^T`` spectrum.
    margin : float
        Safety margin on the contraction factor (accept factor <= 1 - margin).
    """

    def __init__(self, spec: ProblemSpec, gram: GramOperator | None = None, *,
                 margin: float = 0.1):
        self.spec = spec
        self.gram = gram if gram is not None else _gram(spec)
        self.margin = margin
        self.constants = select_k(spec, self.gram)
        self._horizon_cache: dict[float, LocalHorizon] = {}

    # shorthands
    @property
    def g(self) -> float:
        return self.gram.g_norm

    @property
    def T(self) -> float:
        return self.spec.horizon_T

    def _check_t(self, t):
        if not (0.0 - 1e-14 <= t <= self.T + 1e-14):
            raise RegimeError(f"t={t} outside [0, {self.T}]")

    # a priori estimates ------------------------------------------------
    def alpha(self, t: float) -> float:
        """Growth bound  |Gamma(x, t)| <= alpha_t |x|."""
        c = self.constants
        if not c.first_estimate_ok:
            raise RegimeError("first estimate regime violated (no admissible k)")
        self._check_t(t)
        s = self.spec
        return _alpha_terminal(s.M_T, s.nu_T) + (s.gamma ** 2 + s.M ** 2) * (self.T - t) / c.k

    def beta(self, t: float) -> float:
        """Jacobian bound  |D_x Gamma(x, t)| <= beta_t."""
        c = self.constants
        if not c.first_estimate_ok:
            raise RegimeError("first estimate regime violated (no admissible k)")
        if not c.second_estimate_ok:
            raise RegimeError("second estimate regime violated: nu - b*alpha_0 <= 0")
        self._check_t(t)
        return _beta(t, self.spec, self.gram.m_coer, c.k)

    def field_bound(self, t: float) -> float:
        return min(self.alpha(t), self.beta(t))

    # local contraction quantities -------------------------------------
    def _require_fixed_point(self):
        if not self.constants.fixed_point_ok:
            raise RegimeError("fixed-point regime violated: gamma^2 >= M*|G|")

    def mu(self, t: float, terminal: float | None = None, end: float | None = None) -> float:
        """Growth bound on the iterates, decreasing in t with mu_end = terminal."""
        self._require_fixed_point()
        terminal = self.spec.M_T if terminal is None else terminal
        end = self.T if end is None else end
        if t > end:
            raise RegimeError("t after the interval end")
        return riccati_bound(end - t, terminal, self.spec.M, self.g, self.spec.gamma)

    def rho(self, t: float, theta_h: float, terminal: float | None = None,
            end: float | None = None) -> float:
        """Lipschitz bound on the iterates (M replaced by M + b theta_h)."""
        self._require_fixed_point()
        terminal = self.spec.M_T if terminal is None else terminal
        end = self.T if end is None else end
        if t > end:
            raise RegimeError("t after the interval end")
        M_eff = self.spec.M + self.spec.b_const * theta_h
        return riccati_bound(end - t, terminal, M_eff, self.g, self.spec.gamma)

    def theta(self, h: float, terminal: float | None = None) -> float:
        self._require_fixed_point()
        terminal = self.spec.M_T if terminal is None else terminal
        return riccati_bound(h, terminal, self.spec.M, self.g, self.spec.gamma)

    def sigma(self, h: float, terminal: float | None = None) -> float:
        terminal = self.spec.M_T if terminal is None else terminal
        th = self.theta(h, terminal)
        M_eff = self.spec.M + self.spec.b_const * th
        return riccati_bound(h, terminal, M_eff, self.g, self.spec.gamma)

    def contraction_factor(self, h: float, terminal: float | None = None) -> float:
        """Lipschitz constant of the fixed-point map on an interval of length h."""
        terminal = self.spec.M_T if terminal is None else terminal
        g, gam = self.g, self.spec.gamma
        th = self.theta(h, terminal)
        sg = self.sigma(h, terminal)
        return h * (sg * g + gam * math.exp(h * (gam + g * th)))

    def blowup_bound(self, terminal: float | None = None) -> float:
        """Supremum of h for which the growth bound stays finite."""
        self._require_fixed_point()
        terminal = self.spec.M_T if terminal is None else terminal
        s, g = self.spec, self.g
        w = math.sqrt(s.M * g - s.gamma ** 2)
        return (0.5 * math.pi - math.atan((terminal * g + s.gamma) / w)) / w

    def _admissible(self, h: float, terminal: float, limit: float) -> bool:
        s, g = self.spec, self.g
        w = math.sqrt(s.M * g - s.gamma ** 2)
        base = math.atan((terminal * g + s.gamma) / w)
        if base + w * h >= _ARCTAN_CAP:
            return False
        th = self.theta(h, terminal)
        w2 = math.sqrt((s.M + s.b_const * th) * g - s.gamma ** 2)
        if base + w2 * h >= _ARCTAN_CAP:
            return False
        try:
            return self.contraction_factor(h, terminal) < limit
        except RegimeError:
            return False

    def _largest_h(self, terminal: float, limit: float, tol: float) -> float:
        lo, hi = 0.0, self.blowup_bound(terminal)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self._admissible(mid, terminal, limit):
                lo = mid
            else:
                hi = mid
        if lo <= 0:
            raise RegimeError("no positive admissible interval length")
        return lo

    def admissible_h(self, terminal: float | None = None, *, tol: float = 1e-8) -> LocalHorizon:
        """Largest local interval on which the fixed-point map contracts."""
        self._require_fixed_point()
        terminal = self.spec.M_T if terminal is None else float(terminal)
        cached = self._horizon_cache.get(terminal)
        if cached is not None:
            return cached
        h_limit = self._largest_h(terminal, 1.0, tol)
        h = self._largest_h(terminal, 1.0 - self.margin, tol)
        out = LocalHorizon(terminal_constant=terminal, h_max=h, h_limit=h_limit,
                           theta_h=self.theta(h, terminal), sigma_h=self.sigma(h, terminal),
                           contraction=self.contraction_factor(h, terminal))
        self._horizon_cache[terminal] = out
        return out

    def layer_plan(self) -> HorizonPlan:
        """Tile [0, T]: first layer with terminal constant M_T, the rest with beta_0."""
        c = self.constants
        if not (c.first_estimate_ok and c.second_estimate_ok):
            raise RegimeError("a priori estimates unavailable: global extension not certified")
        self._require_fixed_point()
        T = self.T
        if T <= 0:
            return HorizonPlan((), (), ())
        first = self.admissible_h(self.spec.M_T)
        rest = self.admissible_h(c.beta0)
        points, consts, hors = [T], [], []
        t, j = T, 0
        while t > 0:
            hz = first if j == 0 else rest
            nxt = t - hz.h_max
            if nxt <= 1e-9 * max(1.0, T):
                nxt = 0.0
            points.append(nxt)
            consts.append(hz.terminal_constant)
            hors.append(hz)
            t, j = nxt, j + 1
        return HorizonPlan(tuple(points), tuple(consts), tuple(hors))

    def to_dict(self) -> dict:
        c = self.constants
        out = {
            "k": c.k,
            "alpha0": c.alpha0,
            "beta0": c.beta0,
            "m_coer": self.gram.m_coer,
            "g_norm": self.gram.g_norm,
            "h_max": None,
            "h_limit": None,
            "contraction": None,
            "layers": [],
            "flags": c.flags,
        }
        if c.fixed_point_ok:
            hz = self.admissible_h()
            out.update(h_max=hz.h_max, h_limit=hz.h_limit, contraction=hz.contraction,
                       theta_h=hz.theta_h, sigma_h=hz.sigma_h)
            try:
                plan = self.layer_plan()
            except RegimeError:
                plan = None
            if plan is not None:
                out["layers"] = [
                    {"start": a, "end": b, "terminal_constant": tc}
                    for (a, b), tc in zip(plan.layers, plan.terminal_constants)
                ]
        return out


def regime_for(spec: ProblemSpec) -> Regime:
    return Regime(spec)

