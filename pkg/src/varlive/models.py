"""Spherically symmetric test models with exactly known geometry.

Three likelihood families (gaussian, exp_power, cauchy), all radially
decreasing around the origin, paired with a centred spherical Gaussian prior
of width sigma_pi.  That combination makes every quantity the samplers need a
one-dimensional map: the prior mass enclosed by the likelihood contour
through radius r is X(r) = P(d/2, r^2/(2 sigma_pi^2)), with P the
regularized lower incomplete gamma function from `specialfn`.

Because the maps are strictly monotone, expensive inverse solves can be
avoided almost everywhere: `ContourMap` tabulates exact forward evaluations
of ln X on an adaptive grid once per model and serves interpolated
ln X <-> ln L and ln X -> radius queries from monotone cubic (PCHIP) fits.
Samplers and quadrature oracles all read from that shared cache.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import specialfn as sf

__all__ = [
    "GAUSSIAN",
    "EXP_POWER",
    "CAUCHY",
    "FAMILIES",
    "ModelSpec",
    "log_likelihood_at_radius",
    "radius_from_log_likelihood",
    "log_x_from_radius",
    "radius_from_log_x",
    "log_likelihood_from_log_x",
    "log_x_from_log_likelihood",
    "analytic_log_evidence",
    "log_evidence_quadrature",
    "log_evidence_radius_quadrature",
    "relative_posterior_mass",
    "log_relative_posterior_mass",
    "posterior_mass_remaining",
    "log_posterior_mass_remaining",
    "argmax_log_x_relative_posterior_mass",
    "ContourMap",
    "get_contour_map",
    "posterior_grid",
    "PosteriorGrid",
]

GAUSSIAN = "gaussian"
EXP_POWER = "exp_power"
CAUCHY = "cauchy"
FAMILIES = (GAUSSIAN, EXP_POWER, CAUCHY)


@dataclass(frozen=True)
class ModelSpec:
    """Immutable model description: family, dimension, shape, prior width."""

    family: str
    d: int
    sigma_pi: float
    b: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if not (isinstance(self.d, int) and self.d >= 1):
            raise ValueError("d must be an integer >= 1")
        if not (self.sigma_pi > 0.0 and math.isfinite(self.sigma_pi)):
            raise ValueError("sigma_pi must be positive and finite")
        if not (self.b > 0.0 and math.isfinite(self.b)):
            raise ValueError("b must be positive and finite")

    def to_dict(self):
        return {"family": self.family, "d": self.d,
                "b": self.b, "sigma_pi": self.sigma_pi}

    @classmethod
    def from_dict(cls, data):
        return cls(family=data["family"], d=int(data["d"]),
                   sigma_pi=float(data["sigma_pi"]), b=float(data.get("b", 1.0)))


def _log_norm_const(m: ModelSpec) -> float:
    """ln L at r = 0 (the normalization constant of the likelihood)."""
    d = m.d
    if m.family == GAUSSIAN:
        return -0.5 * d * math.log(2.0 * math.pi)
    if m.family == EXP_POWER:
        b = m.b
        return (math.log(d) + math.lgamma(0.5 * d) - 0.5 * d * math.log(math.pi)
                - (1.0 + 0.5 * d / b) * math.log(2.0)
                - math.lgamma(1.0 + 0.5 * d / b))
    # cauchy
    return math.lgamma(0.5 * (d + 1)) - 0.5 * (d + 1) * math.log(math.pi)


def log_likelihood_at_radius(m: ModelSpec, r):
    """ln L(theta) for |theta| = r; scalar or array, r may be +inf."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0.0) or np.any(np.isnan(r_arr)):
        raise ValueError("radius must be nonnegative")
    c = _log_norm_const(m)
    if m.family == GAUSSIAN:
        out = c - 0.5 * r_arr * r_arr
    elif m.family == EXP_POWER:
        out = c - 0.5 * np.power(r_arr, 2.0 * m.b)
    else:
        out = c - 0.5 * (m.d + 1) * np.log1p(r_arr * r_arr)
    return float(out) if out.ndim == 0 else out


def radius_from_log_likelihood(m: ModelSpec, logl):
    """Closed-form inverse of log_likelihood_at_radius; -inf maps to +inf."""
    logl_arr = np.asarray(logl, dtype=float)
    c = _log_norm_const(m)
    if np.any(logl_arr > c):
        raise ValueError("log-likelihood above the peak value")
    drop = c - logl_arr  # >= 0
    if m.family == GAUSSIAN:
        out = np.sqrt(2.0 * drop)
    elif m.family == EXP_POWER:
        out = np.power(2.0 * drop, 1.0 / (2.0 * m.b))
    else:
        out = np.sqrt(np.expm1(2.0 * drop / (m.d + 1)))
    return float(out) if out.ndim == 0 else out


def log_x_from_radius(m: ModelSpec, r):
    """ln of the prior mass enclosed by radius r; r=0 -> -inf, r=inf -> 0."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0.0) or np.any(np.isnan(r_arr)):
        raise ValueError("radius must be nonnegative")
    t = 0.5 * (r_arr / m.sigma_pi) ** 2
    inf_mask = np.isinf(r_arr)
    out = np.where(inf_mask, 0.0,
                   sf.log_reg_lower_inc_gamma(0.5 * m.d, np.where(inf_mask, 1.0, t)))
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def radius_from_log_x(m: ModelSpec, logx):
    """Inverse of log_x_from_radius (scalar solve per element)."""
    logx_arr = np.asarray(logx, dtype=float)
    if np.any(logx_arr > 0.0) or np.any(np.isnan(logx_arr)):
        raise ValueError("logx must be <= 0")
    a = 0.5 * m.d
    flat = np.atleast_1d(logx_arr).ravel()
    out = np.empty_like(flat)
    for i, lx in enumerate(flat):
        if lx == 0.0:
            out[i] = np.inf
        else:
            out[i] = m.sigma_pi * math.sqrt(2.0 * sf.inv_log_reg_lower_inc_gamma(a, lx))
    out = out.reshape(np.shape(logx_arr))
    return float(out) if out.ndim == 0 else out


def log_likelihood_from_log_x(m: ModelSpec, logx):
    """L(X) on log scales: the likelihood on the contour enclosing mass X.

    logx = 0 is the r -> inf boundary and returns -inf for every family.
    """
    return log_likelihood_at_radius(m, radius_from_log_x(m, logx))


def log_x_from_log_likelihood(m: ModelSpec, logl):
    """Enclosed prior mass of the contour at height logl (exact composition)."""
    return log_x_from_radius(m, radius_from_log_likelihood(m, logl))


# ---------------------------------------------------------------------------
# Cached monotone contour tables


class ContourMap:
    """Tabulated ln X <-> ln L and ln X -> radius maps for one model.

    Built from exact forward evaluations of ln X on an adaptive grid:
    a coarse pass in ln t locates the ln X values, a second pass re-grids to
    near-uniform ln X spacing (`nodes_per_unit` per ln-unit) plus a stack of
    geometrically spaced levels hugging ln X = 0 where uniform spacing cannot
    reach.  Queries outside the tabulated range raise rather than
    extrapolate; `get_contour_map` rebuilds deeper on demand.
    """

    COARSE_NODES = 20_001
    NODES_PER_UNIT = 400.0
    MIN_NODES = 200_000

    def __init__(self, model: ModelSpec, log_x_floor: float):
        if not (log_x_floor < -1.0):
            raise ValueError("log_x_floor must be well below 0")
        self.model = model
        self.log_x_floor = float(log_x_floor)
        a = 0.5 * model.d
        t_floor = sf.inv_log_reg_lower_inc_gamma(a, self.log_x_floor)
        t_hi = a + 45.0 * math.sqrt(a) + 300.0
        u_coarse = np.linspace(math.log(t_floor), math.log(t_hi), self.COARSE_NODES)
        lnx_coarse = sf.log_reg_lower_inc_gamma(a, np.exp(u_coarse))

        n_uniform = max(self.MIN_NODES,
                        int(-self.log_x_floor * self.NODES_PER_UNIT))
        targets = np.linspace(self.log_x_floor, -0.05, n_uniform)
        # geometric levels from -0.05 toward 0 (|ln X| down to 1e-14, ~7%
        # steps), already ascending as ln X values; no realized draw lands
        # closer to X = 1 than that
        levels = -np.geomspace(0.05, 1e-14, 400)[1:]
        targets = np.concatenate([targets, levels])
        u_nodes = np.interp(targets, lnx_coarse, u_coarse)
        lnx_nodes = sf.log_reg_lower_inc_gamma(a, np.exp(u_nodes))
        # exact forward values may collide after interpolation; enforce strict order
        keep = np.concatenate([[True], np.diff(lnx_nodes) > 0.0])
        lnx_nodes = lnx_nodes[keep]
        u_nodes = u_nodes[keep]

        t_nodes = np.exp(u_nodes)
        r_nodes = model.sigma_pi * np.sqrt(2.0 * t_nodes)
        logl_nodes = log_likelihood_at_radius(model, r_nodes)

        self._lnx = lnx_nodes
        self._logl = logl_nodes
        self._radius = r_nodes
        self._logl_of_lnx = PchipInterpolator(lnx_nodes, logl_nodes, extrapolate=False)
        self._radius_of_lnx = PchipInterpolator(lnx_nodes, r_nodes, extrapolate=False)
        # logl decreases with lnx, so reverse for the inverse map; deep nodes
        # where logl has flattened onto the peak at double precision are
        # dropped (the geometry itself is indistinguishable there)
        strict = np.concatenate([[True], np.diff(logl_nodes) < 0.0])
        self._lnx_of_logl = PchipInterpolator(logl_nodes[strict][::-1],
                                              lnx_nodes[strict][::-1],
                                              extrapolate=False)

    @property
    def log_x_top(self) -> float:
        return float(self._lnx[-1])

    @property
    def log_l_range(self):
        return float(self._logl[-1]), float(self._logl[0])

    def _check(self, out, what):
        if np.any(np.isnan(out)):
            raise ValueError(f"{what} query outside tabulated contour range")
        return out

    def log_l(self, logx):
        out = self._logl_of_lnx(logx)
        return self._check(out, "log_l")

    def radius(self, logx):
        out = self._radius_of_lnx(logx)
        return self._check(out, "radius")

    def log_x(self, logl):
        out = self._lnx_of_logl(logl)
        return self._check(out, "log_x")


_MAP_CACHE: dict[ModelSpec, ContourMap] = {}


def get_contour_map(model: ModelSpec, log_x_floor: float) -> ContourMap:
    """Shared per-model map, kept at the deepest floor requested so far."""
    cached = _MAP_CACHE.get(model)
    if cached is not None and cached.log_x_floor <= log_x_floor:
        return cached
    # hysteresis: overshoot the request so nearby demands reuse this build
    built = ContourMap(model, 1.25 * log_x_floor - 20.0)
    _MAP_CACHE[model] = built
    return built


# ---------------------------------------------------------------------------
# Quadrature oracles


def _quad_floor(m: ModelSpec) -> float:
    return -(40.0 * m.d + 100.0)


@lru_cache(maxsize=None)
def _posterior_support_floor(m: ModelSpec) -> float:
    """ln X below which posterior mass is negligible (< ~1e-12 of total).

    Located on a coarse exact grid so fine tables never need to span the
    full quadrature range at high d.
    """
    a = 0.5 * m.d
    deep = _quad_floor(m)
    t_floor = sf.inv_log_reg_lower_inc_gamma(a, deep)
    t_hi = a + 45.0 * math.sqrt(a) + 300.0
    u = np.linspace(math.log(t_floor), math.log(t_hi), 60_000)
    lnx = sf.log_reg_lower_inc_gamma(a, np.exp(u))
    logl = log_likelihood_at_radius(m, m.sigma_pi * np.sqrt(2.0 * np.exp(u)))
    f = logl + lnx  # integrand of Z in d(ln X)
    peak = np.max(f)
    # cumulative from the deep end; first index where it is within e^-28 of the peak sum
    rel = f - peak
    csum = np.logaddexp.accumulate(rel)
    idx = int(np.searchsorted(csum, csum[-1] - 28.0))
    return float(lnx[max(idx - 2, 0)])


def sampling_log_x_floor(m: ModelSpec, n_live: int) -> float:
    """Pre-draw depth for a run with n_live points: posterior support plus
    shrinkage-noise margin (realized ln X at a given index wanders by
    ~sqrt(|ln X|/n))."""
    base = _posterior_support_floor(m)
    return base - 8.0 * math.sqrt(-base / max(n_live, 1)) - 25.0


def log_evidence_quadrature(m: ModelSpec, n_nodes: int = 1_000_001) -> float:
    """Trapezoid evidence on a uniform ln X grid spanning [-(40 d + 100), 0].

    Contour heights are read from the cached exact-node PCHIP table; below
    the table floor the integrand is bounded by peak * X and contributes
    nothing at double precision.
    """
    deep = _quad_floor(m)
    fine_floor = _posterior_support_floor(m) - 60.0
    cmap = get_contour_map(m, max(fine_floor, deep))
    grid = np.linspace(deep, 0.0, n_nodes)
    logl = np.full(n_nodes, _log_norm_const(m))
    inside = grid >= cmap.log_x_floor
    top = cmap.log_x_top
    capped = np.minimum(grid[inside], top)
    logl[inside] = cmap.log_l(capped)
    logl[-1] = -np.inf  # X = 1 boundary: L -> 0 for every family
    h = grid[1] - grid[0]
    logw = np.full(n_nodes, math.log(h))
    logw[0] += math.log(0.5)
    logw[-1] += math.log(0.5)
    terms = logl + grid + logw
    mx = np.max(terms)
    return float(mx + math.log(np.sum(np.exp(terms - mx))))


def log_evidence_radius_quadrature(m: ModelSpec, n_nodes: int = 400_001) -> float:
    """Independent evidence oracle integrating over radius instead of ln X.

    Z = int L(r) dX(r) with dX/dr = t^(a-1) e^-t / Gamma(a) * r / sigma^2,
    t = r^2/(2 sigma^2).  Shares no code path with the ln X route beyond the
    likelihood formula itself.
    """
    a = 0.5 * m.d
    sig = m.sigma_pi
    # the integrand is cut off by the prior factor, so prior support suffices
    r_hi = sig * math.sqrt(2.0 * (a + 45.0 * math.sqrt(a) + 120.0))
    r = np.linspace(0.0, r_hi, n_nodes)
    t = 0.5 * (r / sig) ** 2
    with np.errstate(divide="ignore"):
        log_dxdr = (a - 1.0) * np.log(t) - t - math.lgamma(a) + np.log(r) - 2.0 * math.log(sig)
    log_dxdr[0] = -np.inf
    logl = log_likelihood_at_radius(m, r)
    h = r[1] - r[0]
    terms = logl + log_dxdr + math.log(h)
    terms[0] -= math.log(2.0)
    terms[-1] -= math.log(2.0)
    mx = np.max(terms)
    return float(mx + math.log(np.sum(np.exp(terms - mx))))


@lru_cache(maxsize=None)
def analytic_log_evidence(m: ModelSpec) -> float:
    """True ln Z: Gaussian closed form, high-resolution quadrature otherwise."""
    if m.family == GAUSSIAN:
        return -0.5 * m.d * math.log(2.0 * math.pi * (1.0 + m.sigma_pi ** 2))
    return log_evidence_quadrature(m)


@dataclass(frozen=True)
class PosteriorGrid:
    """Dense posterior representation on a ln X grid (weights sum to 1)."""

    log_x: np.ndarray
    log_l: np.ndarray
    radius: np.ndarray
    weight: np.ndarray
    log_z: float


@lru_cache(maxsize=None)
def posterior_grid(m: ModelSpec, n_nodes: int = 400_001) -> PosteriorGrid:
    fine_floor = _posterior_support_floor(m) - 60.0
    cmap = get_contour_map(m, fine_floor)
    grid = np.linspace(fine_floor, min(-1e-9, cmap.log_x_top), n_nodes)
    logl = cmap.log_l(grid)
    radius = cmap.radius(grid)
    h = grid[1] - grid[0]
    logw = logl + grid + math.log(h)
    logw[0] -= math.log(2.0)
    logw[-1] -= math.log(2.0)
    mx = float(np.max(logw))
    log_z = mx + math.log(np.sum(np.exp(logw - mx)))
    weight = np.exp(logw - log_z)
    return PosteriorGrid(log_x=grid, log_l=logl, radius=radius,
                         weight=weight / float(np.sum(weight)), log_z=float(log_z))


def log_relative_posterior_mass(m: ModelSpec, logx):
    """ln of L(X) * X, the (unnormalized) posterior density in ln X."""
    logx_arr = np.asarray(logx, dtype=float)
    logl = np.asarray(log_likelihood_from_log_x(m, logx_arr))
    with np.errstate(invalid="ignore"):
        out = logl + logx_arr
    # both boundaries are genuine zeros of L(X) X
    out = np.where(np.isnan(out), -np.inf, out)
    return float(out) if out.ndim == 0 else out


def relative_posterior_mass(m: ModelSpec, logx):
    out = np.exp(log_relative_posterior_mass(m, logx))
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def _remaining_table(m: ModelSpec):
    g = posterior_grid(m)
    with np.errstate(divide="ignore"):
        logw = np.log(g.weight) + g.log_z
    log_cum = np.logaddexp.accumulate(logw)
    return g.log_x, log_cum


def log_posterior_mass_remaining(m: ModelSpec, logx):
    """ln of int_{-inf}^{logx} L(X) X d(ln X): posterior mass below logx."""
    logx_arr = np.asarray(logx, dtype=float)
    if np.any(logx_arr > 0.0):
        raise ValueError("logx must be <= 0")
    xs, log_cum = _remaining_table(m)
    out = np.interp(logx_arr, xs, log_cum,
                    left=-np.inf, right=float(log_cum[-1]))
    return float(out) if out.ndim == 0 else out


def posterior_mass_remaining(m: ModelSpec, logx):
    out = np.exp(log_posterior_mass_remaining(m, logx))
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def argmax_log_x_relative_posterior_mass(m: ModelSpec) -> float:
    """ln X at which L(X) * X peaks (parabolic refinement on the grid)."""
    g = posterior_grid(m)
    f = g.log_l + g.log_x
    i = int(np.argmax(f))
    if 0 < i < len(f) - 1:
        denom = f[i - 1] - 2.0 * f[i] + f[i + 1]
        if denom < 0.0:
            shift = 0.5 * (f[i - 1] - f[i + 1]) / denom
            h = g.log_x[1] - g.log_x[0]
            return float(g.log_x[i] + shift * h)
    return float(g.log_x[i])
