"""Lens-shaped space-time domains: geometry, quadrature, spacelike margins.

A lens of thickness T and radii R1 < R2 is the image of the cylinder
[0,1] x B_{R2} under

    psi(Theta, y) = (Theta*T, y)                              |y| <= R1,
    psi(Theta, y) = (Theta*T*(R2-|y|)/(R2-R1), y)             |y| >  R1,

a flat core over the inner ball with a conical skirt tapering to t = 0 at
|y| = R2.  All slices share the boundary sphere {t=0, |x|=R2}.  The map is
Lipschitz but kinked on |y| = R1; that ring is Lebesgue-null on every slice,
so quadrature uses midpoint rules whose sample points never land on it.

Supported dimensions: n in {1, 2}.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import min_eig_field


class LensError(ValueError):
    pass


@dataclass(frozen=True)
class Lens:
    thickness: float
    inner_radius: float
    outer_radius: float
    dim: int = 1

    def __post_init__(self):
        if not (self.thickness > 0):
            raise LensError("lens thickness must be positive")
        if not (0 < self.inner_radius < self.outer_radius):
            raise LensError("lens radii must satisfy 0 < R1 < R2")
        if self.dim not in (1, 2):
            raise LensError("lens dimension must be 1 or 2")

    @property
    def skirt_width(self):
        return self.outer_radius - self.inner_radius


def min_outer_radius(thickness, dim, far_field_bound, inner_radius):
    """Smallest admissible R2 for spacelike slices: R1 + T*(1 + 2*sqrt(n)*C)."""
    if thickness <= 0 or inner_radius <= 0 or far_field_bound < 0:
        raise LensError("need T > 0, R1 > 0, C >= 0")
    return inner_radius + thickness * (1.0 + 2.0 * np.sqrt(dim) * far_field_bound)


def _radii(y, dim):
    y = np.asarray(y, dtype=np.float64)
    if dim == 1:
        return np.abs(y)
    return np.sqrt(np.sum(y * y, axis=-1))


def lens_map(lens, theta, y):
    """Map cylinder points (theta, y) to space-time (t, x).  Vectorized in y."""
    r = _radii(y, lens.dim)
    if np.any(r > lens.outer_radius * (1 + 1e-12)):
        raise LensError("lens_map: |y| exceeds the outer radius")
    t_core = theta * lens.thickness
    t = np.where(r <= lens.inner_radius,
                 t_core,
                 t_core * (lens.outer_radius - r) / lens.skirt_width)
    return t, np.asarray(y, dtype=np.float64)


def slice_density(lens, theta, y):
    """Volume density rho_Theta(y) = sqrt(1 + |grad_y t(y)|^2) of a slice.

    Equals 1 on the flat core; constant sqrt(1 + (Theta*T/(R2-R1))^2) on the
    skirt (the slice graph depends on |y| with that radial slope).
    """
    r = _radii(y, lens.dim)
    slope = theta * lens.thickness / lens.skirt_width
    return np.where(r < lens.inner_radius, 1.0, np.sqrt(1.0 + slope * slope))


def map_jacobian(lens, theta, y):
    """|det D psi(Theta, y)| = |d t/d Theta|: T on the core, tapered on the skirt."""
    r = _radii(y, lens.dim)
    return np.where(
        r <= lens.inner_radius,
        lens.thickness,
        lens.thickness * (lens.outer_radius - r) / lens.skirt_width,
    )


def normal_field(lens, theta, x):
    """Outward unit normal of the slice H_Theta at spatial point(s) x.

    (1, 0, ..., 0) over the core; on the skirt
    (R2-R1, Theta*T*x/|x|) / sqrt((Theta*T)^2 + (R2-R1)^2).
    The kink ring |x| = R1 is excluded (measure zero; callers sample off it).
    """
    if not (0 < theta <= 1):
        raise LensError("normal_field needs Theta in (0, 1]")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 0 if lens.dim == 1 else x.ndim == 1
    pts = x.reshape(-1, lens.dim)
    r = _radii(pts, lens.dim)
    if np.any(np.abs(r - lens.inner_radius) < 1e-14 * max(1.0, lens.inner_radius)):
        raise LensError("normal_field sampled on the kink ring |x| = R1")
    if np.any(r >= lens.outer_radius):
        raise LensError("normal_field needs |x| < R2")
    out = np.zeros((pts.shape[0], lens.dim + 1))
    core = r < lens.inner_radius
    out[core, 0] = 1.0
    skirt = ~core
    tt = theta * lens.thickness
    denom = np.sqrt(tt * tt + lens.skirt_width**2)
    out[skirt, 0] = lens.skirt_width / denom
    rs = r[skirt]
    out[skirt, 1:] = (tt / denom) * pts[skirt] / rs[:, None]
    return out[0] if single else out


def _param_grid(lens, n_y):
    """Midpoint grid on B_{R2} avoiding |y| = R1 and the boundary.

    Returns (points (K, dim), weights (K,)).  Cells are uniform midpoint
    cells on [-R2, R2]^dim; in 2D, cells outside the ball are dropped.
    """
    R2 = lens.outer_radius
    h = 2.0 * R2 / n_y
    c = -R2 + (np.arange(n_y) + 0.5) * h
    if lens.dim == 1:
        pts = c.reshape(-1, 1)
        wts = np.full(n_y, h)
    else:
        X, Y = np.meshgrid(c, c, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
        wts = np.full(pts.shape[0], h * h)
        keep = _radii(pts, 2) <= R2
        pts, wts = pts[keep], wts[keep]
    # nudge any sample that sits on the kink ring (can only happen for
    # special rational radii; keep the quadrature measure unchanged).
    r = _radii(pts, lens.dim)
    onkink = np.abs(r - lens.inner_radius) < 1e-12 * max(1.0, R2)
    if np.any(onkink):
        pts = pts.copy()
        pts[onkink] *= 1.0 + 1e-9
    return pts, wts


def integrate_slice(field, lens, theta, n_y=257):
    """Integral of |field| over the slice H_Theta via the parametrization.

    `field(t, x)` must accept arrays: t (K,), x (K,) in 1D / (K, 2) in 2D.
    """
    pts, wts = _param_grid(lens, n_y)
    t, x = lens_map(lens, theta, pts if lens.dim == 2 else pts[:, 0])
    rho = slice_density(lens, theta, pts if lens.dim == 2 else pts[:, 0])
    vals = np.abs(field(t, x))
    return float(np.sum(vals * rho * wts))


def integrate_lens(field, lens, theta_max=1.0, n_theta=65, n_y=257):
    """Integral of |field| over the partial lens L_{theta_max}.

    Transformation-formula quadrature: midpoint in Theta and in y with the
    exact Jacobian |det D psi| = |d t / d Theta|.
    """
    pts, wts = _param_grid(lens, n_y)
    dth = theta_max / n_theta
    thetas = (np.arange(n_theta) + 0.5) * dth
    total = 0.0
    yarg = pts if lens.dim == 2 else pts[:, 0]
    for th in thetas:
        t, x = lens_map(lens, th, yarg)
        jac = map_jacobian(lens, th, yarg)
        total += float(np.sum(np.abs(field(t, x)) * jac * wts)) * dth
    return total


def lens_sample_points(lens, n_theta=33, n_y=129):
    """Midpoint sample set {(Theta_i, y_j)} with mapped (t, x) coordinates."""
    pts, _ = _param_grid(lens, n_y)
    thetas = (np.arange(n_theta) + 0.5) / n_theta
    yarg = pts if lens.dim == 2 else pts[:, 0]
    out = []
    for th in thetas:
        t, x = lens_map(lens, th, yarg)
        out.append((th, t, x))
    return out


def spacelike_margin(lens, coeff_eval, n_theta=17, n_y=65, tol=1e-9):
    """Minimum eigenvalue of the symbol nu^0 I + sum_j nu^j A^j over samples.

    `coeff_eval(t, x)` returns the stacked principal coefficients with shape
    (K, n, m, m) (Hermitian).  Certifies PASS when the margin stays >= 1/2 -
    tol; a FAIL carries the witness point.
    """
    margin = np.inf
    witness = None
    for th, t, x in lens_sample_points(lens, n_theta, n_y):
        nu = normal_field(lens, th, x)
        nu = np.atleast_2d(nu)
        A = coeff_eval(t, x)
        m = A.shape[-1]
        sym = nu[:, 0, None, None] * np.eye(m) + np.einsum("kj,kjab->kab", nu[:, 1:], A)
        ev = min_eig_field(sym)
        k = int(np.argmin(ev))
        if ev[k] < margin:
            margin = float(ev[k])
            witness = {
                "theta": float(th),
                "t": float(np.atleast_1d(t)[k]),
                "x": np.atleast_1d(x)[k].tolist() if lens.dim > 1 else float(np.atleast_1d(x)[k]),
            }
    return {
        "margin": margin,
        "passed": bool(margin >= 0.5 - tol),
        "witness": witness,
    }
