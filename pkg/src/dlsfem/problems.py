"""Benchmark Helmholtz problems with closed-form solutions.

Every problem is posed as

    -lap u - k^2 u = f  in Omega,
    u = g0               on the Dirichlet boundary,
    du/dn + i k u = g    on the Robin boundary,

and carries its exact solution.  Laplacians are evaluated from closed-form
second derivatives (Bessel/Hankel recurrences), independently of the
stated source term, so the construction-time consistency check is a real
check rather than a tautology.

All callables take arrays of points with shape (..., dim).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import qmc

from . import mesh as meshmod
from .special import bessel_j, bessel_j_derivative, hankel1, hankel1_derivative

PROBLEMS = (
    "plane_wave_2d",
    "bessel_square",
    "plane_wave_3d",
    "lshape_singular",
    "cylinder_radiation",
    "manufactured_poly",
)

CONSISTENCY_TOL = 1e-8
SMALL_R = 1e-6


class ProblemError(ValueError):
    pass


@dataclass(frozen=True)
class ExactSolution:
    """u, grad u and lap u in closed form; p = grad u / k."""

    k: float
    u: Callable
    grad_u: Callable
    laplacian: Callable

    def p(self, x):
        return self.grad_u(x) / self.k

    def div_p(self, x):
        return self.laplacian(x) / self.k


@dataclass(frozen=True)
class ProblemSpec:
    """Helmholtz data, domain and optional exact solution.

    ``robin_data`` takes points and outward unit normals because on polygonal
    boundaries g depends on the face normal.
    """

    name: str
    dim: int
    k: float
    source: Callable
    dirichlet_data: Callable
    robin_data: Callable
    domain: str
    domain_params: dict
    contains: Callable
    exact: ExactSolution | None = None
    params: dict = field(default_factory=dict)

    def f_scaled(self, x):
        """f / k."""
        return self.source(x) / self.k

    def g_scaled(self, x, n):
        """g / k."""
        return self.robin_data(x, n) / self.k

    def mesh(self, n: int) -> meshmod.SimplicialMesh:
        """Default structured mesh of this problem's domain with parameter n."""
        if self.domain == "annulus":
            return meshmod.annulus(**self.domain_params, n_layers=None if n is None else n)
        return meshmod.generate_structured(self.domain, n=n, **self.domain_params)


def _from_exact(name, dim, k, exact, source, domain, domain_params, contains, params):
    def g0(x):
        return exact.u(x)

    def g(x, n):
        return np.einsum("...d,...d->...", exact.grad_u(x), n) + 1j * k * exact.u(x)

    spec = ProblemSpec(
        name=name,
        dim=dim,
        k=k,
        source=source,
        dirichlet_data=g0,
        robin_data=g,
        domain=domain,
        domain_params=domain_params,
        contains=contains,
        exact=exact,
        params=params,
    )
    check_consistency(spec)
    return spec


# -- exact solutions ---------------------------------------------------------
def _plane_wave(k: float, direction: np.ndarray) -> ExactSolution:
    d = np.asarray(direction, dtype=float)

    def u(x):
        return np.exp(1j * k * (np.asarray(x) @ d))

    def grad_u(x):
        return (1j * k * u(x))[..., None] * d

    def laplacian(x):
        return -(k**2) * (d @ d) * u(x)

    return ExactSolution(k, u, grad_u, laplacian)


def _polar(x):
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    theta = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2.0 * math.pi)
    return r, theta


def _bessel_square(k: float) -> ExactSolution:
    c = (math.cos(k) + 1j * math.sin(k)) / (k * complex(bessel_j(0, k), bessel_j(1, k)))

    def u(x):
        r, _ = _polar(x)
        return np.cos(k * r) / k - c * bessel_j(0, k * r)

    def radial_over_r(r):
        """u_r / r with the removable singularity at r = 0 expanded."""
        kr = k * r
        small = r < SMALL_R
        safe = np.where(small, 1.0, r)
        sin_over_r = np.where(small, k * (1 - kr**2 / 6), np.sin(kr) / safe)
        j1_over_r = np.where(small, 0.5 * k * (1 - kr**2 / 8), bessel_j(1, kr) / safe)
        return -sin_over_r + c * k * j1_over_r

    def grad_u(x):
        r, _ = _polar(x)
        return radial_over_r(r)[..., None] * np.asarray(x, dtype=float)

    def laplacian(x):
        r, _ = _polar(x)
        kr = k * r
        u_rr = -k * np.cos(kr) + c * k**2 * 0.5 * (bessel_j(0, kr) - bessel_j(2, kr))
        return u_rr + radial_over_r(r)

    return ExactSolution(k, u, grad_u, laplacian)


def _angular_mode(k: float, order: float, radial, radial_d1, radial_d2, scale=1.0) -> ExactSolution:
    """u = R(k r) cos(order * theta) / scale, R a cylinder function."""

    def u(x):
        r, th = _polar(x)
        return radial(order, k * r) * np.cos(order * th) / scale

    def grad_u(x):
        r, th = _polar(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            u_r = k * radial_d1(order, k * r) * np.cos(order * th)
            u_th_over_r = -order * radial(order, k * r) * np.sin(order * th) / r
        gx = u_r * np.cos(th) - u_th_over_r * np.sin(th)
        gy = u_r * np.sin(th) + u_th_over_r * np.cos(th)
        return np.stack([gx, gy], axis=-1) / scale

    def laplacian(x):
        r, th = _polar(x)
        kr = k * r
        with np.errstate(divide="ignore", invalid="ignore"):
            lap = (
                k**2 * radial_d2(order, kr)
                + k * radial_d1(order, kr) / r
                - order**2 * radial(order, kr) / r**2
            ) * np.cos(order * th)
        return lap / scale

    return ExactSolution(k, u, grad_u, laplacian)


def _polynomial(k: float, dim: int, degree: int) -> tuple[ExactSolution, Callable]:
    """Fixed complex polynomial of total degree ``degree``."""
    exps = [
        e for e in np.ndindex(*([degree + 1] * dim)) if sum(e) <= degree
    ]
    rng = np.random.default_rng(20240521 + 10 * dim + degree)
    coef = rng.uniform(-1, 1, len(exps)) + 1j * rng.uniform(-1, 1, len(exps))

    def mono(x, e, shift=None):
        x = np.asarray(x, dtype=float)
        out = np.ones(x.shape[:-1])
        factor = 1.0
        for d, p in enumerate(e):
            s = shift[d] if shift is not None else 0
            q = p - s
            if q < 0:
                return np.zeros(x.shape[:-1])
            factor *= math.factorial(p) / math.factorial(q)
            out = out * x[..., d] ** q
        return factor * out

    def u(x):
        return sum(c * mono(x, e) for c, e in zip(coef, exps))

    def grad_u(x):
        comps = []
        for d in range(dim):
            shift = [1 if j == d else 0 for j in range(dim)]
            comps.append(sum(c * mono(x, e, shift) for c, e in zip(coef, exps)))
        return np.stack(comps, axis=-1)

    def laplacian(x):
        total = 0
        for d in range(dim):
            shift = [2 if j == d else 0 for j in range(dim)]
            total = total + sum(c * mono(x, e, shift) for c, e in zip(coef, exps))
        return total

    def source(x):
        return -laplacian(x) - k**2 * u(x)

    return ExactSolution(k, u, grad_u, laplacian), source


# -- domains -----------------------------------------------------------------
def _inside_box(lo, hi):
    def contains(x):
        x = np.asarray(x)
        return np.all((x > lo) & (x < hi), axis=-1)

    return contains


def _inside_lshape(x):
    x = np.asarray(x)
    box = np.all((x > -1) & (x < 1), axis=-1)
    return box & ~((x[..., 0] >= 0) & (x[..., 1] <= 0))


def _inside_ring(a):
    def contains(x):
        r = np.hypot(np.asarray(x)[..., 0], np.asarray(x)[..., 1])
        return (r > a) & (r < 2 * a)

    return contains


def _zero(x):
    return np.zeros(np.asarray(x).shape[:-1], dtype=complex)


# -- catalog -----------------------------------------------------------------
def make_problem(name: str, k: float = 1.0, **params) -> ProblemSpec:
    """Build one of the cataloged problems.

    Parameters per problem: ``plane_wave_3d`` takes ``theta`` and ``phi``
    (defaults pi/4, pi/5); ``lshape_singular`` takes ``alpha`` (default 2/3);
    ``cylinder_radiation`` takes ``a``, ``n`` and ``segments`` (defaults 1, 4,
    64); ``manufactured_poly`` takes ``m`` and ``dim`` (defaults 1, 2).
    """
    if name not in PROBLEMS:
        raise ProblemError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    if not k > 0:
        raise ProblemError("wavenumber k must be positive")
    k = float(k)

    def take(allowed: dict):
        unknown = set(params) - set(allowed)
        if unknown:
            raise ProblemError(f"unknown parameters for {name}: {', '.join(sorted(unknown))}")
        return {key: params.get(key, default) for key, default in allowed.items()}

    if name == "plane_wave_2d":
        take({})
        d = np.array([math.cos(math.pi / 5), math.sin(math.pi / 5)])
        return _from_exact(name, 2, k, _plane_wave(k, d), _zero, "unit_square", {},
                           _inside_box(0.0, 1.0), {})

    if name == "plane_wave_3d":
        p = take({"theta": math.pi / 4, "phi": math.pi / 5})
        th, ph = p["theta"], p["phi"]
        d = np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])
        return _from_exact(name, 3, k, _plane_wave(k, d), _zero, "cube", {},
                           _inside_box(-1.0, 1.0), p)

    if name == "bessel_square":
        take({})
        if k * math.sqrt(0.5) > 60:
            raise ProblemError("k too large for the supported Bessel range")

        def source(x):
            r, _ = _polar(x)
            small = r < SMALL_R
            safe = np.where(small, 1.0, r)
            return np.where(small, k * (1 - (k * r) ** 2 / 6), np.sin(k * r) / safe) + 0j

        return _from_exact(name, 2, k, _bessel_square(k), source, "square",
                           {"lower": -0.5, "upper": 0.5}, _inside_box(-0.5, 0.5), {})

    if name == "lshape_singular":
        p = take({"alpha": 2.0 / 3.0})
        alpha = float(p["alpha"])
        if not 0 < alpha <= 10:
            raise ProblemError("alpha must lie in (0, 10]")
        exact = _angular_mode(
            k, alpha, bessel_j,
            lambda nu, x: bessel_j_derivative(nu, x, 1),
            lambda nu, x: bessel_j_derivative(nu, x, 2),
        )
        return _from_exact(name, 2, k, exact, _zero, "l_shape", {}, _inside_lshape, p)

    if name == "cylinder_radiation":
        p = take({"a": 1.0, "n": 4, "segments": 64})
        a, n = float(p["a"]), int(p["n"])
        if not a > 0 or n < 0:
            raise ProblemError("cylinder_radiation needs a > 0 and integer n >= 0")
        if 2 * a * k > 60 or a * k < 0.5:
            raise ProblemError("k*r outside the supported Hankel range [0.5, 60]")
        exact = _angular_mode(
            k, n, hankel1,
            lambda nu, x: hankel1_derivative(nu, x, 1),
            lambda nu, x: hankel1_derivative(nu, x, 2),
            scale=complex(hankel1(n, k * a)),
        )
        return _from_exact(name, 2, k, exact, _zero, "annulus",
                           {"a": a, "segments": int(p["segments"])}, _inside_ring(a), p)

    p = take({"m": 1, "dim": 2})
    dim, deg = int(p["dim"]), int(p["m"])
    if dim not in (2, 3) or deg < 0:
        raise ProblemError("manufactured_poly needs dim in {2, 3} and m >= 0")
    exact, source = _polynomial(k, dim, deg)
    domain = "unit_square" if dim == 2 else "cube"
    lo = 0.0 if dim == 2 else -1.0
    return _from_exact(name, dim, k, exact, source, domain, {}, _inside_box(lo, 1.0), p)


def sample_points(problem: ProblemSpec, count: int = 200, seed: int = 7) -> np.ndarray:
    """Quasi-random interior points of the problem domain (Halton)."""
    lo, hi = {
        "unit_square": (0.0, 1.0),
        "square": (-0.5, 0.5),
        "cube": (-1.0, 1.0),
        "l_shape": (-1.0, 1.0),
        "annulus": (-2.0 * problem.domain_params.get("a", 1.0), 2.0 * problem.domain_params.get("a", 1.0)),
    }[problem.domain]
    sampler = qmc.Halton(d=problem.dim, seed=seed)
    out = []
    while sum(len(o) for o in out) < count:
        pts = lo + (hi - lo) * sampler.random(4 * count)
        out.append(pts[problem.contains(pts)])
    return np.concatenate(out)[:count]


def check_consistency(problem: ProblemSpec, count: int = 200) -> float:
    """Max residual of the first-order system at interior sample points.

    Raises ProblemError above ``CONSISTENCY_TOL`` relative to the data scale.
    """
    ex = problem.exact
    x = sample_points(problem, count)
    k = problem.k
    r1 = -ex.div_p(x) - k * ex.u(x) - problem.f_scaled(x)
    r2 = ex.grad_u(x) - k * ex.p(x)
    scale = max(1.0, float(np.max(np.abs(k * ex.u(x)))), float(np.max(np.abs(ex.div_p(x)))))
    res = max(float(np.max(np.abs(r1))), float(np.max(np.abs(r2)))) / scale
    if res > CONSISTENCY_TOL:
        raise ProblemError(f"exact solution of {problem.name} fails the first-order system ({res:.2e})")
    return res
