"""Symmetric hyperbolic systems: coefficient fields, data, grids, hypotheses.

A system is the first-order operator

    P = d/dt + sum_j A^j(t,x) d/dx_j + B(t,x)

acting on m-vectors over [0,T] x R^n (n in {1,2}), together with a source F
and an initial datum G.  Rough coefficients are kept as exact evaluators
plus declared jump interfaces so the regularization stage can integrate the
mollifier exactly across jumps.  Distribution-valued inputs (delta data, a
delta-in-time lower-order coefficient) carry no evaluator; the mollifier
instantiates them directly.

Hypothesis validation mirrors the three solvability regimes: the general
one (bounded principal part far out, log-type derivative growth), the
sup-norm-data one (no far-field condition), and the square-integrable-data
one (time-integrated log-type growth).  Membership of the data in the
ambient generalized-function spaces is an equivalence-class statement; here
it is checked at representative-net level only, and the kernel of the
canonical map between the sup-norm and general spaces (constant-speed
escape to spatial infinity) is documented rather than simulated.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .linalg import hermitian_part, operator_norm, opnorm_field

__all__ = [
    "CoefficientField",
    "DataField",
    "SystemSpec",
    "Grid",
    "ValidationReport",
    "HypothesisCheck",
    "StructuralError",
    "hermitian_part",
    "validate_hypotheses",
]

HERMITIAN_TOL = 1e-12


class StructuralError(ValueError):
    """The system is not symmetric hyperbolic (non-Hermitian principal part)."""


@dataclass(frozen=True)
class CoefficientField:
    """One m x m coefficient matrix field.

    kinds:
      smooth      closed-form evaluator, optionally with analytic derivatives
      piecewise   piecewise-smooth evaluator with declared jump interfaces (1D)
      lattice     smooth bump lattice (an alias for smooth with many features)
      time_delta  delta(t - t0) * Btilde(x); no evaluator, mollified in t
      eps_indexed coefficient net indexed directly by eps (bypasses convolution)
    """

    kind: str
    m: int
    dim: int = 1
    evaluate: Optional[Callable] = None          # (t, X) -> (K, m, m)
    dx_evaluate: Optional[tuple] = None          # per axis, same signature
    dt_evaluate: Optional[Callable] = None
    jumps: tuple = ()
    time_dependent: bool = False
    sup_bound: Optional[float] = None            # declared sup ||.||_op
    lipschitz_x: Optional[float] = None
    far_field: Optional[tuple] = None            # (C, R_A)
    time_delta_part: Optional[Callable] = None   # x -> (K, m, m), for time_delta
    time_delta_center: float = 0.0
    eps_family: Optional[Callable] = None        # eps -> CoefficientField
    resolution_scale: Optional[Callable] = None  # eps -> finest feature length
    label: str = "A"

    def __post_init__(self):
        known = {"smooth", "piecewise", "lattice", "time_delta", "eps_indexed"}
        if self.kind not in known:
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if self.kind in ("smooth", "piecewise", "lattice") and self.evaluate is None:
            raise ValueError(f"kind {self.kind!r} requires an evaluator")
        if self.kind == "time_delta" and self.time_delta_part is None:
            raise ValueError("time_delta coefficient requires its spatial part")
        if self.kind == "eps_indexed" and self.eps_family is None:
            raise ValueError("eps_indexed coefficient requires the eps family")

    @classmethod
    def constant(cls, M, dim=1, label="A"):
        M = np.asarray(M, dtype=np.complex128)
        if M.ndim == 0:
            M = M.reshape(1, 1)
        m = M.shape[0]
        sup = operator_norm(M)

        def ev(t, X, _M=M):
            K = np.shape(np.atleast_1d(np.asarray(X, dtype=float)))[0] if dim == 1 \
                else np.asarray(X, dtype=float).reshape(-1, dim).shape[0]
            out = np.empty((K, m, m), dtype=np.complex128)
            out[...] = _M
            return out

        def dzero(t, X, _m=m, _d=dim):
            K = (np.atleast_1d(np.asarray(X, dtype=float)).shape[0] if _d == 1
                 else np.asarray(X, dtype=float).reshape(-1, _d).shape[0])
            return np.zeros((K, _m, _m), dtype=np.complex128)

        return cls(kind="smooth", m=m, dim=dim, evaluate=ev,
                   dx_evaluate=tuple(dzero for _ in range(dim)),
                   sup_bound=sup, lipschitz_x=0.0, far_field=(sup, 0.0), label=label)

    @classmethod
    def zero(cls, m, dim=1, label="B"):
        return cls.constant(np.zeros((m, m)), dim=dim, label=label)


@dataclass(frozen=True)
class DataField:
    """Initial datum G (x only) or right-hand side F (t and x).

    kinds: smooth | piecewise | delta | zero.  `eps_power` q rescales the
    smoothed field by eps^q (negligible-net scenarios).
    """

    kind: str
    m: int
    dim: int = 1
    evaluate: Optional[Callable] = None   # G: (X)->(K,m);  F: (t,X)->(K,m)
    depends_on_t: bool = False
    jumps: tuple = ()
    support_radius: float = 0.0
    eps_power: float = 0.0
    delta_weights: Optional[np.ndarray] = None
    delta_center: float = 0.0
    label: str = "G"

    def __post_init__(self):
        known = {"smooth", "piecewise", "delta", "zero"}
        if self.kind not in known:
            raise ValueError(f"unknown data kind {self.kind!r}")
        if self.kind in ("smooth", "piecewise") and self.evaluate is None:
            raise ValueError(f"kind {self.kind!r} requires an evaluator")
        if self.kind == "delta" and self.delta_weights is None:
            raise ValueError("delta data needs amplitude weights")

    @classmethod
    def zero(cls, m, dim=1, depends_on_t=False, label="F"):
        def ev(*args, _m=m, _d=dim):
            X = args[-1]
            K = (np.atleast_1d(np.asarray(X, dtype=float)).shape[0] if _d == 1
                 else np.asarray(X, dtype=float).reshape(-1, _d).shape[0])
            return np.zeros((K, _m), dtype=np.complex128)
        return cls(kind="zero", m=m, dim=dim, evaluate=ev,
                   depends_on_t=depends_on_t, support_radius=0.0, label=label)


@dataclass(frozen=True)
class SystemSpec:
    dim: int
    m: int
    T: float
    A: tuple
    B: CoefficientField
    F: DataField
    G: DataField
    data_class: str = "general"   # "general" | "Linf" | "L2"
    name: str = ""

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("spatial dimension must be 1 or 2")
        if self.m < 1 or self.T <= 0:
            raise ValueError("need m >= 1 and T > 0")
        if len(self.A) != self.dim:
            raise ValueError("need one principal coefficient per axis")
        if self.data_class not in ("general", "Linf", "L2"):
            raise ValueError("data class must be general, Linf or L2")
        for C in (*self.A, self.B):
            if C.m != self.m or C.dim != self.dim:
                raise ValueError("coefficient shape mismatch")
        for D in (self.F, self.G):
            if D.m != self.m or D.dim != self.dim:
                raise ValueError("data shape mismatch")

    @property
    def declared_speed(self):
        """Best available bound on max_j sup ||A^j||_op (None if undeclared)."""
        sups = [C.sup_bound for C in self.A]
        if any(s is None for s in sups):
            return None
        return max(sups) if sups else 0.0


@dataclass(frozen=True)
class Grid:
    """Cell-centered uniform grid on [-L, L]^dim.

    Nodes sit at -L + (i + 1/2) dx, which keeps quadrature off both the
    domain boundary and any symmetric jump interface.
    """

    dim: int
    half_width: float
    nodes: int
    cfl_limit: float = 0.9

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2")
        if self.half_width <= 0 or self.nodes < 8:
            raise ValueError("need positive extent and at least 8 nodes per axis")
        if not (0 < self.cfl_limit < 1):
            raise ValueError("CFL limit must sit strictly inside (0, 1)")

    @property
    def dx(self):
        return 2.0 * self.half_width / self.nodes

    @property
    def axis(self):
        return -self.half_width + (np.arange(self.nodes) + 0.5) * self.dx

    def points(self):
        """All nodes: (N,) in 1D, (N*N, 2) in 2D (row-major in the first axis)."""
        if self.dim == 1:
            return self.axis
        X, Y = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def refined(self, factor=2):
        return Grid(self.dim, self.half_width, self.nodes * factor, self.cfl_limit)


# ---------------------------------------------------------------------------
# hypothesis validation
# ---------------------------------------------------------------------------

@dataclass
class HypothesisCheck:
    name: str
    status: str       # "satisfied" | "violated" | "deferred"
    detail: str
    evidence: dict = field(default_factory=dict)


@dataclass
class ValidationReport:
    theorem: str
    checks: list
    structural_ok: bool
    suggestion: str = ""

    @property
    def passed(self):
        return self.structural_ok and all(c.status != "violated" for c in self.checks)

    def to_dict(self):
        return {
            "theorem": self.theorem,
            "structural_ok": self.structural_ok,
            "passed": self.passed,
            "suggestion": self.suggestion,
            "checks": [
                {"name": c.name, "status": c.status, "detail": c.detail,
                 "evidence": c.evidence}
                for c in self.checks
            ],
        }


def _coeff_instance(C, eps=0.0625):
    """A sampleable stand-in: eps_indexed nets are instantiated at probe eps."""
    if C.kind == "eps_indexed":
        return C.eps_family(eps)
    return C


def hermitian_defect(C, T, rng, count=1000, radius=3.0):
    """Worst sampled |A - A*| entry relative to 1 + ||A||_op, with location."""
    C = _coeff_instance(C)
    if C.evaluate is None:
        return 0.0, {}
    worst = -1.0
    where = {}
    for tk in np.linspace(0.0, T, 5):
        _, x = _sample_points_dim(C.dim, rng, count // 5, radius)
        vals = C.evaluate(tk, x)
        defect = np.max(np.abs(vals - np.conj(np.swapaxes(vals, -1, -2))), axis=(-1, -2))
        norms = opnorm_field(hermitian_part(vals), hermitian=True)
        rel = defect / (1.0 + norms)
        k = int(np.argmax(rel))
        if rel[k] > worst:
            worst = float(rel[k])
            xk = x[k] if C.dim == 1 else x[k].tolist()
            where = {"t": float(tk), "x": xk, "defect": float(defect[k])}
    return worst, where


def _sample_points_dim(dim, rng, count, radius):
    t = None
    if dim == 1:
        x = rng.uniform(-radius, radius, size=count)
    else:
        x = rng.uniform(-radius, radius, size=(count, 2))
    return t, x


def _check_far_field(C, T, rng, count=400):
    if C.far_field is None:
        return None
    bound, r_a = C.far_field
    Ceff = _coeff_instance(C)
    if Ceff.evaluate is None:
        return {"bound": bound, "radius": r_a, "max_norm": 0.0, "ok": True}
    worst = 0.0
    for tk in np.linspace(0.0, T, 4):
        if C.dim == 1:
            x = r_a + 0.5 + rng.uniform(0.0, 4.0, size=count)
            x *= rng.choice([-1.0, 1.0], size=count)
        else:
            ang = rng.uniform(0, 2 * np.pi, size=count)
            rad = r_a + 0.5 + rng.uniform(0.0, 4.0, size=count)
            x = np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
        norms = opnorm_field(Ceff.evaluate(tk, x), hermitian=True)
        worst = max(worst, float(np.max(norms)))
    return {"bound": bound, "radius": r_a, "max_norm": worst,
            "ok": worst <= bound * (1.0 + 1e-9) + 1e-12}


_CLASS_RANK = {"general": 0, "Linf": 1, "L2": 1}


def validate_hypotheses(spec, theorem, *, mollifier=None, scale_law=None,
                        grid=None, probe_k=(2, 3, 4, 5, 6), seed=0):
    """Check the hypothesis set of one solvability regime against a system.

    theorem is one of "T3.1", "T3.2", "T3.3".  Structural failure
    (non-Hermitian principal part) raises StructuralError.  Growth-type
    hypotheses are checked by sampling the coefficient norm ledger at probe
    eps values when a regularization context (mollifier + scale law + grid)
    is supplied, and deferred otherwise.
    """
    if theorem not in ("T3.1", "T3.2", "T3.3"):
        raise ValueError(f"unknown theorem key {theorem!r}")
    rng = np.random.default_rng(seed)
    checks = []

    worst = 0.0
    for j, Aj in enumerate(spec.A):
        rel, where = hermitian_defect(Aj, spec.T, rng)
        worst = max(worst, rel)
        if rel > HERMITIAN_TOL:
            raise StructuralError(
                f"principal coefficient A{j + 1} is not Hermitian at "
                f"t={where.get('t')}, x={where.get('x')} "
                f"(relative defect {rel:.3e}); the system is not symmetric hyperbolic"
            )
    checks.append(HypothesisCheck(
        "hermitian_principal", "satisfied",
        "principal coefficients Hermitian at all sampled points",
        {"max_relative_defect": worst}))

    # data-class hypothesis (representative-net level only)
    need = {"T3.1": "general", "T3.2": "Linf", "T3.3": "L2"}[theorem]
    if need == "general":
        checks.append(HypothesisCheck(
            "data_class", "satisfied",
            "general coefficients admit any representative data net "
            "(checked at representative level, not as an equivalence class)",
            {"declared": spec.data_class}))
    elif spec.data_class == need:
        checks.append(HypothesisCheck(
            "data_class", "satisfied",
            f"declared data class matches the {need} requirement",
            {"declared": spec.data_class}))
    else:
        checks.append(HypothesisCheck(
            "data_class", "violated",
            f"theorem requires {need}-type data, scenario declares "
            f"{spec.data_class!r}",
            {"declared": spec.data_class}))

    # growth-type hypothesis on dA and the Hermitian part of B
    trivially = _trivial_growth(spec, rng)
    flavor = {"T3.1": "locally log-type", "T3.2": "sup-norm log-type",
              "T3.3": "time-integrated log-type"}[theorem]
    if trivially:
        checks.append(HypothesisCheck(
            "growth_type", "satisfied",
            f"{flavor} condition holds trivially: Hermitian part of B "
            "vanishes and the principal part is divergence-free at every eps",
            {"trivial": True}))
    elif mollifier is not None and scale_law is not None and grid is not None:
        ev = _probe_growth(spec, theorem, mollifier, scale_law, grid, probe_k)
        checks.append(HypothesisCheck("growth_type", ev.pop("status"),
                                      ev.pop("detail"), ev))
    else:
        checks.append(HypothesisCheck(
            "growth_type", "deferred",
            f"{flavor} condition is not checkable symbolically; supply a "
            "regularization context or run a sweep for sampled evidence", {}))

    suggestion = ""
    if theorem == "T3.1":
        missing = [f"A{j + 1}" for j, Aj in enumerate(spec.A) if Aj.far_field is None]
        if missing:
            suggestion = "T3.2"
            checks.append(HypothesisCheck(
                "far_field_bound", "violated",
                f"no far-field operator-norm bound declared for {', '.join(missing)}; "
                "the sup-norm-data regime (T3.2) drops this condition",
                {"missing": missing}))
        else:
            evs = [_check_far_field(Aj, spec.T, rng) for Aj in spec.A]
            ok = all(e["ok"] for e in evs)
            checks.append(HypothesisCheck(
                "far_field_bound", "satisfied" if ok else "violated",
                "sampled far-field operator norms stay within the declared bound"
                if ok else "sampled far-field norms exceed the declared bound",
                {"per_coefficient": evs}))

    return ValidationReport(theorem=theorem, checks=checks, structural_ok=True,
                            suggestion=suggestion)


def _trivial_growth(spec, rng, count=200, radius=3.0):
    """True when B + B* == 0 and all A^j are x-constant (div A == 0) exactly."""
    B = spec.B
    if B.kind == "time_delta" or B.evaluate is None:
        return False
    for tk in np.linspace(0.0, spec.T, 3):
        _, x = _sample_points_dim(B.dim, rng, count, radius)
        vals = B.evaluate(tk, x)
        if np.max(np.abs(vals + np.conj(np.swapaxes(vals, -1, -2)))) > 1e-12:
            return False
    for Aj in spec.A:
        if Aj.kind == "eps_indexed" or Aj.evaluate is None:
            return False
        if Aj.jumps:
            return False
        if Aj.lipschitz_x == 0.0:
            continue
        for tk in np.linspace(0.0, spec.T, 3):
            _, x = _sample_points_dim(Aj.dim, rng, count, radius)
            vals = Aj.evaluate(tk, x)
            if np.max(np.abs(vals - vals[:1])) > 1e-12:
                return False
    return True


def _probe_growth(spec, theorem, mollifier, scale_law, grid, probe_k):
    from .mollify import regularize, norm_ledger
    from .sweep import classify_log_type_values

    eps = [2.0**-k for k in probe_k]
    key = "alpha_core_l1inf" if theorem == "T3.3" else "alpha_core_linf"
    vals = []
    for e in eps:
        reg = regularize(spec, mollifier, scale_law, e, grid)
        led = norm_ledger(reg)
        vals.append(max(led[key], led["sup_dA"]))
    verdict = classify_log_type_values(np.array(eps), np.array(vals))
    ok = verdict["classification"] in ("bounded", "log-type")
    status = "satisfied" if ok else "violated"
    detail = (f"probe ledger classifies the growth as {verdict['classification']}"
              + ("" if ok else "; log-type growth required"))
    return {"status": status, "detail": detail, "probe_eps": eps,
            "probe_values": vals, **verdict}
