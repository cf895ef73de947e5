"""Mollifiers, scale laws, and convolution regularization of rough systems.

The mollifier rho is a unit-mass kernel supported in the unit ball; scaled
kernels rho_s(x) = s^-n rho(x/s) regularize coefficients and data by
convolution, u_s = u * rho_s.  The scale s attached to eps is a law:

  pure        s = eps                 (data, generic nets)
  log         s = 1 / log(1/eps)      (coefficients needing log-type
                                       derivative growth)
  slow_scale  s = 1 / log(1/eps)^p    (declared slow-scale net; p = 1 gives
                                       the log law back)

Kernels with vanishing moments up to order q-1 approximate W^{q,inf}
functions at rate s^q; they are built as linear combinations of dilated
copies of a base profile solving the small even-moment system, which keeps
the support inside the unit ball (no Schwartz tails to truncate — the
"wide-support" profile is a numerically-compact truncated Gaussian).

All convolutions are panel Gauss quadrature in the kernel variable; for
piecewise-smooth fields the panels are split exactly at the jump preimages,
so the smeared layers are quadrature-exact.  This accuracy is what every
downstream rate fit leans on.

Everything is normalized against the kernel's own panel rule: the discrete
mass is exactly one, so regularizing a constant is the identity to rounding.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .linalg import hermitian_part, opnorm_field
from .system import CoefficientField, DataField, Grid, SystemSpec

__all__ = [
    "Mollifier",
    "MollifierError",
    "ScaleLaw",
    "RegularizationError",
    "RateFitError",
    "RegularizedSystem",
    "make_mollifier",
    "regularize",
    "norm_ledger",
    "rate_fit",
    "default_eps_grid",
    "LEDGER_KEYS",
]


class MollifierError(ValueError):
    pass


class RegularizationError(ValueError):
    def __init__(self, msg, required_dx=None, required_nodes=None):
        super().__init__(msg)
        self.required_dx = required_dx
        self.required_nodes = required_nodes


class RateFitError(ValueError):
    pass


# ---------------------------------------------------------------------------
# profiles and quadrature
# ---------------------------------------------------------------------------

_GL_ORDER = 12


def _bump(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zi = z[inside]
    out[inside] = np.exp(-1.0 / (1.0 - zi * zi))
    return out


def _bump_d(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.zeros_like(z)
    inside = np.abs(z) < 1.0
    zi = z[inside]
    w = 1.0 - zi * zi
    out[inside] = np.exp(-1.0 / w) * (-2.0 * zi / (w * w))
    return out


_GAUSS_SHARPNESS = 6.0


def _tgauss(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.zeros_like(z)
    inside = np.abs(z) <= 1.0
    out[inside] = np.exp(-0.5 * (_GAUSS_SHARPNESS * z[inside]) ** 2)
    return out


def _tgauss_d(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.zeros_like(z)
    inside = np.abs(z) <= 1.0
    zi = z[inside]
    out[inside] = -(_GAUSS_SHARPNESS**2) * zi * np.exp(-0.5 * (_GAUSS_SHARPNESS * zi) ** 2)
    return out


_PROFILES = {
    "bump": (_bump, _bump_d),
    "truncated_gaussian": (_tgauss, _tgauss_d),
}


def smooth_bump(z):
    """C-infinity bump normalized to 1 at the center, supported on |z| < 1."""
    return np.e * _bump(z)


def smooth_bump_dx(z):
    return np.e * _bump_d(z)


def _panel_rule(boundaries, order=_GL_ORDER):
    """Composite Gauss-Legendre nodes/weights on consecutive intervals."""
    gz, gw = np.polynomial.legendre.leggauss(order)
    bnd = np.asarray(boundaries, dtype=np.float64)
    mid = 0.5 * (bnd[1:] + bnd[:-1])
    half = 0.5 * (bnd[1:] - bnd[:-1])
    nodes = (mid[:, None] + half[:, None] * gz[None, :]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    keep = weights > 0
    return nodes[keep], weights[keep]


def _graded_boundaries(special, per_interval=6):
    """Panels between the component support edges, cos-clustered at both ends.

    The profile's derivatives blow up toward each (dilated) support edge, so
    panel widths shrink there; this keeps every quadrature in the module at
    ~1e-14 absolute for the profiles used here.
    """
    special = np.unique(np.asarray(special, dtype=np.float64))
    u = np.linspace(0.0, 1.0, per_interval + 1)
    g = 0.5 * (1.0 - np.cos(np.pi * u))
    parts = [special[i] + (special[i + 1] - special[i]) * g
             for i in range(special.size - 1)]
    return np.unique(np.concatenate(parts))


@dataclass(frozen=True)
class Mollifier:
    """Unit-mass kernel with `moment_order - 1` vanishing moments.

    components: ((c_i, d_i), ...) mixing dilated copies of the base profile;
    normalization is solved against the kernel's own panel rule, so the
    discrete mass is exactly one.
    """

    profile: str
    moment_order: int
    dim: int
    components: tuple
    base_norm: float
    boundaries: tuple = ()

    def density(self, z):
        f = _PROFILES[self.profile][0]
        z = np.asarray(z, dtype=np.float64)
        if self.dim == 1:
            acc = np.zeros_like(z)
            for c, d in self.components:
                acc += (c / d) * f(z / d)
        else:
            r = np.sqrt(np.sum(z * z, axis=-1))
            acc = np.zeros_like(r)
            for c, d in self.components:
                acc += (c / d**2) * f(r / d)
        return acc / self.base_norm

    def density_grad(self, z):
        """d rho/dz in 1D; the gradient (K, 2) in 2D."""
        fd = _PROFILES[self.profile][1]
        z = np.asarray(z, dtype=np.float64)
        if self.dim == 1:
            acc = np.zeros_like(z)
            for c, d in self.components:
                acc += (c / d**2) * fd(z / d)
            return acc / self.base_norm
        r = np.sqrt(np.sum(z * z, axis=-1))
        acc = np.zeros_like(r)
        for c, d in self.components:
            acc += (c / d**3) * fd(r / d)
        acc /= self.base_norm
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[..., None] > 0, z / np.maximum(r, 1e-300)[..., None], 0.0)
        return acc[..., None] * unit

    def scaled_density(self, sigma, x, center=0.0):
        """rho_sigma(x - center) = sigma^-dim rho((x - center)/sigma)."""
        x = np.asarray(x, dtype=np.float64)
        return self.density((x - center) / sigma) / sigma**self.dim

    def panel_boundaries(self, fine=False):
        if self.boundaries and not fine:
            return np.asarray(self.boundaries)
        edges = sorted({s * d for _, d in self.components for s in (-1.0, 1.0)} | {0.0})
        return _graded_boundaries(edges, per_interval=10 if fine else 6)

    def rule_1d(self, fine=False):
        return _panel_rule(self.panel_boundaries(fine), order=18 if fine else _GL_ORDER)

    def rule_nd(self, fine=False):
        z, w = self.rule_1d(fine)
        if self.dim == 1:
            return z, w
        Z1, Z2 = np.meshgrid(z, z, indexing="ij")
        pts = np.stack([Z1.ravel(), Z2.ravel()], axis=-1)
        return pts, np.outer(w, w).ravel()

    def quadrature_mass(self):
        # 2D tensor panels do not align with the radial support circles, so
        # the reference mass uses the fine rule there
        z, w = self.rule_nd(fine=self.dim == 2)
        return float(np.sum(w * self.density(z)))

    def moments(self, upto):
        """1D raw moments (2D: along the first axis) for the invariant checks."""
        z, w = self.rule_nd(fine=self.dim == 2)
        zz = z if self.dim == 1 else z[:, 0]
        rho = self.density(z)
        return [float(np.sum(w * rho * zz**k)) for k in range(upto + 1)]

    def kernel_samples(self, sigma, dx):
        """Discrete-convolution stencil: offsets and dx-weighted kernel values."""
        half = int(np.ceil(sigma / dx))
        offs = np.arange(-half, half + 1)
        vals = self.scaled_density(sigma, offs * dx) * dx
        s = vals.sum()
        if abs(s) > 1e-12:
            vals = vals / s
        return offs, vals


def make_mollifier(profile="bump", moment_order=1, dim=1):
    """Build a kernel whose moments of order 1 .. moment_order-1 vanish.

    Odd moments vanish by symmetry; the even ones are killed by mixing
    dilated copies d = 1, 1/2, 1/3, ... of the base profile (the moment
    system is a small Vandermonde solve, machine-exact against the panel
    rule).  moment_order <= 2 needs a single nonnegative component; from 3
    on the mix is signed.
    """
    if moment_order < 1:
        raise MollifierError("moment order must be at least 1")
    if moment_order > 6:
        raise MollifierError("moment orders above 6 are not supported")
    if profile not in _PROFILES:
        raise MollifierError(f"unknown profile {profile!r}")
    if dim not in (1, 2):
        raise MollifierError("dim must be 1 or 2")

    even_orders = [k for k in range(2, moment_order) if k % 2 == 0]
    ncomp = len(even_orders) + 1
    dil = np.array([1.0 / (i + 1) for i in range(ncomp)])
    edges = sorted({float(s * d) for d in dil for s in (-1.0, 1.0)} | {0.0})
    boundaries = tuple(_graded_boundaries(edges))

    probe = Mollifier(profile, 1, dim, ((1.0, 1.0),), 1.0, boundaries)
    base_mass = probe.quadrature_mass()
    if not np.isfinite(base_mass) or abs(base_mass) < 1e-8:
        raise MollifierError("profile quadrature mass is degenerate; cannot normalize")

    z, w = probe.rule_nd(fine=dim == 2)
    zz = z if dim == 1 else z[:, 0]
    f = _PROFILES[profile][0]

    def comp_moment(d, k):
        if dim == 1:
            rho = f(zz / d) / (d * base_mass)
        else:
            r = np.sqrt(np.sum(z * z, axis=-1))
            rho = f(r / d) / (d * d * base_mass)
        return float(np.sum(w * rho * zz**k))

    M = np.zeros((ncomp, ncomp))
    rhs = np.zeros(ncomp)
    for i, d in enumerate(dil):
        M[0, i] = comp_moment(d, 0)
    rhs[0] = 1.0
    for row, k in enumerate(even_orders, start=1):
        for i, d in enumerate(dil):
            M[row, i] = comp_moment(d, k)
    coeffs = np.linalg.solve(M, rhs)

    moll = Mollifier(profile, moment_order, dim,
                     tuple((float(c), float(d)) for c, d in zip(coeffs, dil)),
                     base_mass, boundaries)
    mass = moll.quadrature_mass()
    if abs(mass - 1.0) > 1e-10:
        raise MollifierError(f"kernel failed to normalize: mass = {mass!r}")
    moms = moll.moments(max(moment_order - 1, 0))
    for k in range(1, moment_order):
        if abs(moms[k]) > 1e-8:
            raise MollifierError(f"moment {k} did not vanish: {moms[k]!r}")
    return moll


@dataclass(frozen=True)
class ScaleLaw:
    kind: str = "pure"
    power: float = 1.0

    def __post_init__(self):
        if self.kind not in ("pure", "log", "slow_scale"):
            raise ValueError(f"unknown scale law {self.kind!r}")

    def sigma(self, eps):
        if not (0 < eps < 1):
            raise ValueError("scale laws are defined for eps in (0, 1)")
        if self.kind == "pure":
            return float(eps)
        return float(1.0 / math.log(1.0 / eps) ** self.power)


def default_eps_grid(k_min=2, k_max=12):
    """Geometric sweep grid eps_k = 2^-k (equal log spacing for rate fits)."""
    return [2.0**-k for k in range(k_min, k_max + 1)]


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

_CHUNK = 1 << 22


def convolve_1d(g, sigma, moll, xq, deriv=0, jumps=()):
    """(g * rho_sigma)(xq), or its x-derivative via the kernel derivative.

    g maps a point array (K,) to values (K, ...).  Panels are split at the
    jump preimages z = (x - s)/sigma inside the support, so piecewise-smooth
    g is integrated exactly piece by piece.
    """
    xq = np.atleast_1d(np.asarray(xq, dtype=np.float64))
    z0, w0 = moll.rule_1d()
    kernel = moll.density if deriv == 0 else moll.density_grad
    kw0 = w0 * kernel(z0) / (sigma**deriv)

    jumps = np.asarray(jumps, dtype=np.float64)
    if jumps.size:
        dist = np.min(np.abs(xq[:, None] - jumps[None, :]), axis=1)
        near = dist < sigma
    else:
        near = np.zeros(xq.shape, dtype=bool)

    probe = g(xq[:1] if xq.size else np.zeros(1))
    out = np.zeros(xq.shape + probe.shape[1:], dtype=probe.dtype)

    far_idx = np.nonzero(~near)[0]
    if far_idx.size:
        Q = z0.size
        step = max(1, _CHUNK // max(Q * int(np.prod(probe.shape[1:], dtype=int) or 1), 1))
        for s in range(0, far_idx.size, step):
            idx = far_idx[s : s + step]
            pts = xq[idx, None] - sigma * z0[None, :]
            vals = g(pts.ravel()).reshape(idx.size, Q, *probe.shape[1:])
            out[idx] = np.einsum("kq...,q->k...", vals, kw0)
    base_bnd = moll.panel_boundaries()
    for i in np.nonzero(near)[0]:
        cuts = (xq[i] - jumps) / sigma
        cuts = cuts[(cuts > -1.0) & (cuts < 1.0)]
        bnd = np.unique(np.concatenate([base_bnd, cuts]))
        zi, wi = _panel_rule(bnd)
        kwi = wi * kernel(zi) / (sigma**deriv)
        vals = g(xq[i] - sigma * zi)
        out[i] = np.einsum("q...,q->...", vals, kwi)
    return out


def convolve_nd(g, sigma, moll, Xq, deriv_axis=None):
    """Smooth-field convolution in 2D (tensor panel rule, radial kernel)."""
    Xq = np.asarray(Xq, dtype=np.float64).reshape(-1, 2)
    z, w = moll.rule_nd()
    if deriv_axis is None:
        kw = w * moll.density(z)
        kw = kw / kw.sum()  # tensor panels vs radial support: pin the mass
    else:
        kw = w * moll.density_grad(z)[:, deriv_axis] / sigma
    probe = g(Xq[:1])
    out = np.zeros((Xq.shape[0],) + probe.shape[1:], dtype=probe.dtype)
    Q = z.shape[0]
    step = max(1, _CHUNK // max(Q * int(np.prod(probe.shape[1:], dtype=int) or 1), 1))
    for s in range(0, Xq.shape[0], step):
        pts = Xq[s : s + step, None, :] - sigma * z[None, :, :]
        vals = g(pts.reshape(-1, 2)).reshape(pts.shape[0], Q, *probe.shape[1:])
        out[s : s + step] = np.einsum("kq...,q->k...", vals, kw)
    return out


# ---------------------------------------------------------------------------
# regularized systems
# ---------------------------------------------------------------------------

@dataclass
class SmoothedCoefficient:
    m: int
    dim: int
    eval: Callable                      # (t, X) -> (K, m, m)
    dx: tuple                           # per-axis (t, X) -> (K, m, m)
    dt: Optional[Callable] = None
    time_dependent: bool = False
    time_factor: Optional[Callable] = None    # separable: eval = factor(t)*spatial(X)
    time_factor_dt: Optional[Callable] = None
    spatial_eval: Optional[Callable] = None
    time_scale: Optional[float] = None
    source: Optional[CoefficientField] = None


@dataclass
class SmoothedData:
    m: int
    dim: int
    eval: Callable                      # G: (X) -> (K, m);  F: (t, X) -> (K, m)
    depends_on_t: bool
    scale: float = 1.0                  # eps^q factor already applied
    support_radius: float = 0.0
    source: Optional[DataField] = None


def _smooth_coefficient(C, moll, sigma):
    if C.kind == "eps_indexed":
        raise AssertionError("eps_indexed handled by the caller")
    if C.kind == "time_delta":
        spatial = C.time_delta_part
        t0 = C.time_delta_center
        # the delta sits in time: mollify the time profile with the 1D kernel
        moll1 = moll if moll.dim == 1 else make_mollifier(moll.profile, moll.moment_order, 1)

        def factor1(t, _t0=t0, _s=sigma, _m=moll1):
            return float(_m.scaled_density(_s, np.array([t - _t0]))[0])

        def factor1_dt(t, _t0=t0, _s=sigma, _m=moll1):
            return float(_m.density_grad(np.array([(t - _t0) / _s]))[0] / _s**2)

        def ev(t, X, _f=factor1, _sp=spatial):
            return _f(t) * _sp(X)

        def evdx(axis):
            def d(t, X, _f=factor1, _sp=spatial, _a=axis):
                return _f(t) * _spatial_dx(_sp, X, _a, C.dim)
            return d

        return SmoothedCoefficient(
            m=C.m, dim=C.dim, eval=ev,
            dx=tuple(evdx(a) for a in range(C.dim)),
            dt=lambda t, X, _f=factor1_dt, _sp=spatial: _f(t) * _sp(X),
            time_dependent=True,
            time_factor=factor1, time_factor_dt=factor1_dt, spatial_eval=spatial,
            time_scale=sigma, source=C)

    # smooth / piecewise / lattice: spatial convolution of the evaluator
    def ev(t, X, _C=C, _s=sigma):
        if _C.dim == 1:
            return convolve_1d(lambda p, _t=t: _C.evaluate(_t, p), _s, moll, X,
                               deriv=0, jumps=_C.jumps)
        return convolve_nd(lambda p, _t=t: _C.evaluate(_t, p), _s, moll, X)

    def evdx(axis):
        def d(t, X, _C=C, _s=sigma, _a=axis):
            if _C.dim == 1:
                return convolve_1d(lambda p, _t=t: _C.evaluate(_t, p), _s, moll, X,
                                   deriv=1, jumps=_C.jumps)
            return convolve_nd(lambda p, _t=t: _C.evaluate(_t, p), _s, moll, X,
                               deriv_axis=_a)
        return d

    dt = None
    if C.time_dependent and C.dt_evaluate is not None:
        def dt(t, X, _C=C, _s=sigma):
            if _C.dim == 1:
                return convolve_1d(lambda p, _t=t: _C.dt_evaluate(_t, p), _s, moll, X,
                                   deriv=0, jumps=_C.jumps)
            return convolve_nd(lambda p, _t=t: _C.dt_evaluate(_t, p), _s, moll, X)

    return SmoothedCoefficient(m=C.m, dim=C.dim, eval=ev,
                               dx=tuple(evdx(a) for a in range(C.dim)),
                               dt=dt, time_dependent=C.time_dependent, source=C)


def _spatial_dx(sp, X, axis, dim, h=1e-6):
    """Central difference of a smooth spatial evaluator (exact parts declared)."""
    X = np.asarray(X, dtype=np.float64)
    if dim == 1:
        return (sp(X + h) - sp(X - h)) / (2 * h)
    e = np.zeros(2)
    e[axis] = h
    return (sp(X + e) - sp(X - e)) / (2 * h)


def _wrap_eps_indexed(C, eps):
    inst = C.eps_family(eps)

    def zero_dx(t, X, _m=C.m, _d=C.dim):
        K = (np.atleast_1d(np.asarray(X, dtype=float)).shape[0] if _d == 1
             else np.asarray(X, dtype=float).reshape(-1, _d).shape[0])
        return np.zeros((K, _m, _m), dtype=np.complex128)

    dxs = inst.dx_evaluate if inst.dx_evaluate is not None else \
        tuple(zero_dx for _ in range(C.dim))
    return SmoothedCoefficient(m=C.m, dim=C.dim, eval=inst.evaluate, dx=tuple(dxs),
                               dt=inst.dt_evaluate, time_dependent=inst.time_dependent,
                               time_scale=(C.resolution_scale(eps)
                                           if C.resolution_scale else None),
                               source=C)


def _smooth_data(D, moll, sigma, eps):
    scale = float(eps**D.eps_power) if D.eps_power else 1.0
    if D.kind == "delta":
        wts = np.asarray(D.delta_weights, dtype=np.complex128)

        def ev(X, _w=wts, _s=sigma, _c=D.delta_center):
            rho = moll.scaled_density(_s, np.asarray(X, dtype=np.float64), center=_c)
            return scale * rho[..., None] * _w

        return SmoothedData(m=D.m, dim=D.dim, eval=ev, depends_on_t=False,
                            scale=scale, support_radius=abs(D.delta_center) + sigma,
                            source=D)

    if D.depends_on_t:
        def ev(t, X, _D=D, _s=sigma):
            if _D.dim == 1:
                return scale * convolve_1d(lambda p, _t=t: _D.evaluate(_t, p), _s, moll,
                                           X, jumps=_D.jumps)
            return scale * convolve_nd(lambda p, _t=t: _D.evaluate(_t, p), _s, moll, X)
    else:
        def ev(X, _D=D, _s=sigma):
            if _D.dim == 1:
                return scale * convolve_1d(_D.evaluate, _s, moll, X, jumps=_D.jumps)
            return scale * convolve_nd(_D.evaluate, _s, moll, X)

    return SmoothedData(m=D.m, dim=D.dim, eval=ev, depends_on_t=D.depends_on_t,
                        scale=scale, support_radius=D.support_radius + sigma, source=D)


@dataclass
class RegularizedSystem:
    """One eps-instance: smoothed fields, grid samples, and a norm ledger."""

    spec: SystemSpec
    eps: float
    sigma: float
    mollifier: Mollifier
    law: ScaleLaw
    grid: Grid
    A: tuple
    B: SmoothedCoefficient
    F: SmoothedData
    G: SmoothedData
    _ledger: Optional[dict] = field(default=None, repr=False)

    @property
    def dim(self):
        return self.spec.dim

    @property
    def m(self):
        return self.spec.m

    @property
    def time_dependent(self):
        return any(C.time_dependent for C in (*self.A, self.B))

    @property
    def time_scale(self):
        scales = [C.time_scale for C in (*self.A, self.B) if C.time_scale]
        return min(scales) if scales else None

    def sample_coeff(self, C, t=0.0):
        pts = self.grid.points()
        vals = C.eval(t, pts)
        if self.dim == 2:
            n = self.grid.nodes
            return np.ascontiguousarray(vals.reshape(n, n, self.m, self.m))
        return np.ascontiguousarray(vals)

    def sample_A(self, t=0.0):
        return [self.sample_coeff(Aj, t) for Aj in self.A]

    def sample_B(self, t=0.0):
        return self.sample_coeff(self.B, t)

    def sample_G(self):
        vals = self.G.eval(self.grid.points())
        if self.dim == 2:
            n = self.grid.nodes
            return np.ascontiguousarray(vals.reshape(n, n, self.m))
        return np.ascontiguousarray(vals)

    def sample_F(self, t):
        if self.F.source is not None and self.F.source.kind == "zero":
            shape = ((self.grid.nodes, self.m) if self.dim == 1
                     else (self.grid.nodes, self.grid.nodes, self.m))
            return np.zeros(shape, dtype=np.complex128)
        vals = self.F.eval(t, self.grid.points())
        if self.dim == 2:
            n = self.grid.nodes
            return np.ascontiguousarray(vals.reshape(n, n, self.m))
        return np.ascontiguousarray(vals)

    def coeff_stack_eval(self, t, x):
        """Stacked principal coefficients (K, n, m, m) at mapped points."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        x = np.asarray(x, dtype=np.float64)
        pts = x if self.dim == 1 else x.reshape(-1, 2)
        K = pts.shape[0] if self.dim == 2 else np.atleast_1d(pts).shape[0]
        out = np.empty((K, self.dim, self.m, self.m), dtype=np.complex128)
        for tv in np.unique(t):
            sel = np.nonzero(t == tv)[0]
            sub = pts[sel] if self.dim == 2 else np.atleast_1d(pts)[sel]
            for j, Aj in enumerate(self.A):
                out[sel, j] = Aj.eval(float(tv), sub)
        return out

    def div_minus_herm_eval(self, t, x):
        """(div A - B - B*)(t, x) as a Hermitian (K, m, m) field."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        x = np.asarray(x, dtype=np.float64)
        pts = x if self.dim == 1 else x.reshape(-1, 2)
        K = pts.shape[0] if self.dim == 2 else np.atleast_1d(pts).shape[0]
        out = np.empty((K, self.m, self.m), dtype=np.complex128)
        for tv in np.unique(t):
            sel = np.nonzero(t == tv)[0]
            sub = pts[sel] if self.dim == 2 else np.atleast_1d(pts)[sel]
            acc = np.zeros((sel.size, self.m, self.m), dtype=np.complex128)
            for j, Aj in enumerate(self.A):
                acc += Aj.dx[j](float(tv), sub)
            Bv = self.B.eval(float(tv), sub)
            acc -= Bv + np.conj(np.swapaxes(Bv, -1, -2))
            out[sel] = acc
        return out

    def ledger_time_grid(self, base=65):
        if not self.time_dependent:
            return np.array([0.0])
        T = self.spec.T
        n = base
        if self.time_scale:
            n = int(min(max(base, 16 * math.ceil(T / self.time_scale)), 20001))
        return np.linspace(0.0, T, n)

    @property
    def max_speed(self):
        return norm_ledger(self)["sup_A"]

    @property
    def ledger(self):
        return norm_ledger(self)


def regularize(spec, moll, law, eps, grid):
    """Convolve one system at scale sigma(eps) and sample it on the grid.

    Refuses when the smeared layer would be unresolved (sigma < 2 dx) and
    when the data support plus smearing plus the propagation margin does not
    fit inside the grid.
    """
    if moll.dim != spec.dim:
        raise RegularizationError("mollifier dimension does not match the system")
    sigma = law.sigma(eps)
    dx = grid.dx
    if sigma < 2.0 * dx:
        need_dx = sigma / 2.0
        need_nodes = int(math.ceil(2.0 * grid.half_width / need_dx))
        raise RegularizationError(
            f"sigma={sigma:.3e} is below the resolvable layer 2*dx={2 * dx:.3e}; "
            f"refine to dx <= {need_dx:.3e} ({need_nodes} nodes)",
            required_dx=need_dx, required_nodes=need_nodes)

    A = tuple(
        _wrap_eps_indexed(Aj, eps) if Aj.kind == "eps_indexed"
        else _smooth_coefficient(Aj, moll, sigma)
        for Aj in spec.A
    )
    B = (_wrap_eps_indexed(spec.B, eps) if spec.B.kind == "eps_indexed"
         else _smooth_coefficient(spec.B, moll, sigma))
    G = _smooth_data(spec.G, moll, sigma, eps)
    F = _smooth_data(spec.F, moll, sigma, eps)

    speed = spec.declared_speed
    if speed is not None:
        margin = G.support_radius + spec.T * speed + sigma + 4 * dx
        f_sup = F.support_radius + spec.T * speed + sigma + 4 * dx \
            if F.source is not None and F.source.kind != "zero" else 0.0
        if max(margin, f_sup) > grid.half_width:
            raise RegularizationError(
                f"domain half-width {grid.half_width} cannot contain data support "
                f"plus smearing plus the propagation margin ({margin:.3f}); "
                "enlarge the grid")

    return RegularizedSystem(spec=spec, eps=eps, sigma=sigma, mollifier=moll,
                             law=law, grid=grid, A=A, B=B, F=F, G=G)


# ---------------------------------------------------------------------------
# norm ledger
# ---------------------------------------------------------------------------

LEDGER_KEYS = [
    "sup_A", "sup_dA", "sup_B", "sup_hermB",
    "alpha_core_linf", "alpha_core_l1inf",
    "G_l2", "G_h1", "G_sup", "F_l2", "F_sup", "rapid_product",
]


def _grid_l2(vals, grid):
    w = grid.dx**grid.dim
    return float(np.sqrt(np.sum(np.abs(vals) ** 2) * w))


def _axis_diff(vals, dx, axis=0):
    out = np.zeros_like(vals)
    sl_p = [slice(None)] * vals.ndim
    sl_m = [slice(None)] * vals.ndim
    sl_c = [slice(None)] * vals.ndim
    sl_p[axis] = slice(2, None)
    sl_m[axis] = slice(None, -2)
    sl_c[axis] = slice(1, -1)
    out[tuple(sl_c)] = (vals[tuple(sl_p)] - vals[tuple(sl_m)]) / (2 * dx)
    return out


def norm_ledger(reg):
    """Sup norms of the smoothed fields plus the energy-constant ingredients.

    Always recomputed per RegularizedSystem (one eps each): the L-infinity
    and time-integrated L-infinity flavors of ||div A - B - B*||, sup norms
    of the coefficient derivatives, and the data norms.  `rapid_product` is
    the convergence-speed product from the distributional-limit discussion,
    NaN when no rough reference evaluator exists.
    """
    if reg._ledger is not None:
        return reg._ledger
    grid = reg.grid
    pts = grid.points()
    tgrid = reg.ledger_time_grid()

    sup_A = 0.0
    sup_dA = 0.0
    for Aj in reg.A:
        ts = tgrid if Aj.time_dependent else np.array([0.0])
        for t in ts:
            sup_A = max(sup_A, float(np.max(opnorm_field(Aj.eval(float(t), pts)))))
            for d in Aj.dx:
                sup_dA = max(sup_dA, float(np.max(opnorm_field(d(float(t), pts)))))

    sup_B = 0.0
    sup_hermB = 0.0
    if reg.B.time_factor is not None:
        # separable in time: one spatial sweep, exact time profile factored out
        spatial = reg.B.spatial_eval(pts)
        nb = float(np.max(opnorm_field(spatial, hermitian=False)))
        nhb = float(np.max(opnorm_field(hermitian_part(spatial))))
        fmax = float(np.max(np.abs([reg.B.time_factor(float(t)) for t in tgrid])))
        sup_B = nb * fmax
        sup_hermB = 2.0 * nhb * fmax
    else:
        ts = tgrid if reg.B.time_dependent else np.array([0.0])
        for t in ts:
            Bv = reg.B.eval(float(t), pts)
            sup_B = max(sup_B, float(np.max(opnorm_field(Bv, hermitian=False))))
            sup_hermB = max(sup_hermB,
                            float(np.max(opnorm_field(Bv + np.conj(np.swapaxes(Bv, -1, -2))))))

    core_sup = core_norm_values(reg, tgrid, pts)
    alpha_core_linf = float(np.max(core_sup))
    if tgrid.size == 1:
        alpha_core_l1inf = alpha_core_linf * reg.spec.T
    else:
        alpha_core_l1inf = float(np.trapezoid(core_sup, tgrid))

    Gv = reg.sample_G()
    G_l2 = _grid_l2(Gv, grid)
    dG = sum(_grid_l2(_axis_diff(Gv, grid.dx, a), grid) ** 2 for a in range(grid.dim))
    G_h1 = float(np.sqrt(G_l2**2 + dG))
    G_sup = float(np.max(np.abs(Gv))) if Gv.size else 0.0

    if reg.F.source is not None and reg.F.source.kind == "zero":
        F_l2 = 0.0
        F_sup = 0.0
    else:
        tF = np.linspace(0.0, reg.spec.T, 17)
        sq = np.empty(tF.size)
        F_sup = 0.0
        for k, t in enumerate(tF):
            Fv = reg.sample_F(float(t))
            sq[k] = _grid_l2(Fv, grid) ** 2
            F_sup = max(F_sup, float(np.max(np.abs(Fv))))
        F_l2 = float(np.sqrt(np.trapezoid(sq, tF)))

    rapid = float("nan")
    rough_ok = all(Aj.source is not None and Aj.source.evaluate is not None
                   and Aj.source.kind != "eps_indexed" for Aj in reg.A)
    if rough_ok:
        dev = 0.0
        for Aj in reg.A:
            ts = tgrid if Aj.time_dependent else np.array([0.0])
            for t in ts:
                diff = Aj.eval(float(t), pts) - Aj.source.evaluate(float(t), pts)
                dev = max(dev, float(np.max(np.abs(diff))))
        dB = 0.0
        ts = tgrid if reg.B.time_dependent else np.array([0.0])
        for t in ts:
            for d in reg.B.dx:
                dB = max(dB, float(np.max(opnorm_field(d(float(t), pts),
                                                       hermitian=False))))
        rapid = dev * max(dB, G_h1, F_l2)

    reg._ledger = {
        "sup_A": sup_A, "sup_dA": sup_dA, "sup_B": sup_B, "sup_hermB": sup_hermB,
        "alpha_core_linf": alpha_core_linf, "alpha_core_l1inf": alpha_core_l1inf,
        "G_l2": G_l2, "G_h1": G_h1, "G_sup": G_sup, "F_l2": F_l2, "F_sup": F_sup,
        "rapid_product": rapid,
    }
    return reg._ledger


def _div_A(reg, t, pts):
    acc = None
    for j, Aj in enumerate(reg.A):
        v = Aj.dx[j](t, pts)
        acc = v if acc is None else acc + v
    return acc


def core_norm_values(reg, tgrid, pts=None):
    """||(div A - B - B*)(t, .)||_{L-inf over the grid} at given times."""
    if pts is None:
        pts = reg.grid.points()
    tgrid = np.atleast_1d(np.asarray(tgrid, dtype=np.float64))
    if not reg.time_dependent:
        core = _div_A(reg, 0.0, pts)
        Bv = reg.B.eval(0.0, pts)
        core = core - (Bv + np.conj(np.swapaxes(Bv, -1, -2)))
        return np.full(tgrid.size, float(np.max(opnorm_field(core))))
    out = np.empty(tgrid.size)
    if reg.B.time_factor is not None and not any(Aj.time_dependent for Aj in reg.A):
        divA = _div_A(reg, 0.0, pts)
        spatial = reg.B.spatial_eval(pts)
        BB = spatial + np.conj(np.swapaxes(spatial, -1, -2))
        for k, t in enumerate(tgrid):
            out[k] = float(np.max(opnorm_field(divA - reg.B.time_factor(float(t)) * BB)))
        return out
    for k, t in enumerate(tgrid):
        core = _div_A(reg, float(t), pts)
        Bv = reg.B.eval(float(t), pts)
        core = core - (Bv + np.conj(np.swapaxes(Bv, -1, -2)))
        out[k] = float(np.max(opnorm_field(core)))
    return out


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_used: int


def rate_fit(values):
    """Least-squares slope of log(error) against log(scale).

    values: iterable of (scale, error).  Nonpositive errors are dropped;
    fewer than 4 survivors refuse the fit.
    """
    pts = [(s, e) for s, e in values if e > 0 and s > 0 and np.isfinite(e)]
    if len(pts) < 4:
        raise RateFitError(f"need at least 4 positive points, have {len(pts)}")
    x = np.log(np.array([p[0] for p in pts]))
    y = np.log(np.array([p[1] for p in pts]))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sstot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / sstot if sstot > 0 else 1.0
    return RateFit(float(slope), float(intercept), float(r2), len(pts))
