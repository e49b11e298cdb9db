"""Explicit window evaluation of a one-dimensional pedestrian-flow model.

The two-equation model (conservation of walkers plus the unit-cost eikonal
constraint on the guiding field) collapses, in one space dimension, to a
single Hamilton-Jacobi equation for the potential ``phi`` with
``rho = phi_x``:

    phi_t^2 = phi_x^2 f(phi_x)^2 ,      phi(0, x) = integral of rho_0 .

For monotone initial densities the sign ambiguity resolves into one of two
branches, each solvable in closed form by a Hopf-Lax envelope:

    increasing data:  phi_t - phi_x f(phi_x) = 0, convex  H(p) = -p f(p),
                      phi(t,x) = min_y { t L((x-y)/t) + phi(0,y) } ;
    decreasing data:  phi_t + phi_x f(phi_x) = 0, concave H(p) = +p f(p),
                      phi(t,x) = max_y { t L((x-y)/t) + phi(0,y) } .

The branch is an explicit user tag, never auto-detected: non-monotone data
has genuine turning-point dynamics that the envelope formulas do not cover,
and this module refuses it rather than silently producing one branch.

Everything is evaluated on a truncated window with the density extended by
its edge values outside; the candidate lattice for each envelope search is
padded by the transport radius ``t * max |H'|`` so the true minimizer stays
strictly inside the search bracket, which is checked at runtime.  A coarse
lattice argmin is then sharpened by golden-section iteration, so values at
smooth points are exact to solver precision rather than lattice precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LinearSpeed",
    "CongestionSpeed",
    "HughesSpec",
    "HughesSolution",
    "cumulative_potential",
    "hopf_lax",
    "solve_hughes",
]


@dataclass(frozen=True)
class LinearSpeed:
    """Classical speed law ``f(rho) = 1 - rho`` on densities in [0, 1].

    Both branch Lagrangians are exact quadratics: the convex branch has
    ``L(w) = (w+1)^2/4`` (value 1/4 at rest) and the concave branch
    ``L(w) = -(1-w)^2/4``.
    """

    def f(self, rho):
        return 1.0 - np.asarray(rho, dtype=float)

    def lagrangian_min(self, w):
        w = np.asarray(w, dtype=float)
        return (w + 1.0) ** 2 / 4.0

    def lagrangian_max(self, w):
        w = np.asarray(w, dtype=float)
        return -((1.0 - w) ** 2) / 4.0

    def check_density(self, rho0: np.ndarray) -> None:
        if np.min(rho0) < 0.0 or np.max(rho0) > 1.0:
            raise ValueError("densities must lie in [0, 1] for the linear speed law")

    def transport_bound(self, rho_lo: float, rho_hi: float) -> float:
        # |H'(p)| = |2p - 1| on either branch
        return max(abs(2.0 * rho_lo - 1.0), abs(2.0 * rho_hi - 1.0))


@dataclass(frozen=True)
class CongestionSpeed:
    """Power-law congestion speed ``f(rho) = k1 / (k2 rho)^beta``.

    Valid for ``0 < beta < 1/2`` and strictly positive densities; the
    convex-branch Lagrangian is finite only for leftward transport
    (``w < 0``) and the concave branch mirrors it, both with the closed
    form obtained from the stationary point of ``p w + c p^(1-beta)``.
    """

    k1: float = 1.0
    k2: float = 1.0
    beta: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.beta < 0.5:
            raise ValueError(f"beta={self.beta} outside (0, 1/2)")
        if self.k1 <= 0.0 or self.k2 <= 0.0:
            raise ValueError("speed constants must be positive")

    @property
    def scale(self) -> float:
        return self.k1 * self.k2 ** (-self.beta)

    def f(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.k1 / (self.k2 * rho) ** self.beta

    def lagrangian_min(self, w):
        w = np.asarray(w, dtype=float)
        c, b = self.scale, self.beta
        out = np.full(w.shape, np.inf)
        neg = w < 0.0
        pstar = (c * (1.0 - b) / (-w[neg])) ** (1.0 / b)
        out[neg] = pstar * w[neg] + c * pstar ** (1.0 - b)
        return out if out.ndim else float(out)

    def lagrangian_max(self, w):
        w = np.asarray(w, dtype=float)
        c, b = self.scale, self.beta
        out = np.full(w.shape, -np.inf)
        pos = w > 0.0
        pstar = (c * (1.0 - b) / w[pos]) ** (1.0 / b)
        out[pos] = pstar * w[pos] - c * pstar ** (1.0 - b)
        return out if out.ndim else float(out)

    def check_density(self, rho0: np.ndarray) -> None:
        if np.min(rho0) <= 0.0:
            raise ValueError(
                "densities must be strictly positive for the congestion speed law"
            )

    def transport_bound(self, rho_lo: float, rho_hi: float) -> float:
        # |H'(p)| = c (1 - beta) p^(-beta), largest at the smallest density
        return self.scale * (1.0 - self.beta) * rho_lo ** (-self.beta)


@dataclass(frozen=True)
class HughesSpec:
    """Window-truncated instance: sampled initial density plus a branch tag."""

    x_min: float
    x_max: float
    rho0: np.ndarray
    times: tuple[float, ...]
    branch: str = "increasing"
    speed: LinearSpeed | CongestionSpeed = field(default_factory=LinearSpeed)

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError("window must have positive width")
        rho0 = np.asarray(self.rho0, dtype=float)
        if rho0.ndim != 1 or rho0.size < 3:
            raise ValueError("rho0 must be a 1-D sample with at least 3 nodes")
        if np.min(rho0) < 0.0:
            raise ValueError("initial density must be nonnegative")
        self.speed.check_density(rho0)
        object.__setattr__(self, "rho0", rho0)
        if self.branch not in ("increasing", "decreasing"):
            raise ValueError(f"branch must be increasing or decreasing, got {self.branch!r}")
        d = np.diff(rho0)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(rho0))))
        if self.branch == "increasing" and np.min(d) < -tol:
            raise ValueError("rho0 is not nondecreasing but the increasing branch was tagged")
        if self.branch == "decreasing" and np.max(d) > tol:
            raise ValueError("rho0 is not nonincreasing but the decreasing branch was tagged")
        times = tuple(float(t) for t in self.times)
        if not times or any(t < 0.0 or not np.isfinite(t) for t in times):
            raise ValueError("evaluation times must be nonnegative and finite")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("evaluation times must be strictly increasing")
        object.__setattr__(self, "times", times)

    @property
    def nx(self) -> int:
        return self.rho0.size

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.nx - 1)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)


@dataclass(frozen=True)
class HughesSolution:
    """Potential, density, tracked envelope argument, and eikonal defect."""

    times: tuple[float, ...]
    xs: np.ndarray
    phi: np.ndarray
    rho: np.ndarray
    ystar: np.ndarray
    eikonal_residual: np.ndarray


def cumulative_potential(spec: HughesSpec) -> np.ndarray:
    """Initial potential: left-rectangle cumulative integral of the density.

    Exact for piecewise-constant-from-the-left data, hence exactly linear
    for constant density; nondecreasing with Lipschitz constant
    ``max(rho0)``.
    """
    out = np.zeros(spec.nx)
    np.cumsum(spec.rho0[:-1] * spec.dx, out=out[1:])
    return out


def _phi0_eval(spec: HughesSpec, phi0: np.ndarray, y) -> np.ndarray:
    """Initial potential at arbitrary points, edge-value density outside."""
    y = np.asarray(y, dtype=float)
    xs = spec.xs
    base = np.interp(y, xs, phi0)
    low = y < xs[0]
    high = y > xs[-1]
    if np.any(low):
        base = np.where(low, phi0[0] + spec.rho0[0] * (y - xs[0]), base)
    if np.any(high):
        base = np.where(high, phi0[-1] + spec.rho0[-1] * (y - xs[-1]), base)
    return base


def _golden(fun, a: float, b: float, iters: int = 70) -> float:
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - ratio * (b - a)
    d = a + ratio * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - ratio * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + ratio * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def hopf_lax(spec: HughesSpec, t: float, x: float) -> tuple[float, float]:
    """Envelope value and its optimizer for one space-time point.

    Minimization (increasing branch) or maximization (decreasing branch)
    over a lattice covering the window plus the transport radius, followed
    by golden-section sharpening between the flanking lattice nodes.

    Raises
    ------
    ValueError
        For ``t <= 0``, or when the optimizer lands on the edge of the
        search bracket ("window too small").
    """
    if t <= 0.0:
        raise ValueError(f"positive time required, got t={t}")
    phi0 = cumulative_potential(spec)
    rho_lo = float(np.min(spec.rho0))
    rho_hi = float(np.max(spec.rho0))
    radius = t * spec.speed.transport_bound(rho_lo, rho_hi) + 4.0 * spec.dx
    lo = min(spec.x_min, x - radius)
    hi = max(spec.x_max, x + radius)
    ys = np.arange(lo, hi + 0.5 * spec.dx, spec.dx)

    sign = 1.0 if spec.branch == "increasing" else -1.0
    lag = spec.speed.lagrangian_min if spec.branch == "increasing" else spec.speed.lagrangian_max

    def objective(y):
        return sign * (t * lag((x - y) / t) + _phi0_eval(spec, phi0, y))

    values = objective(ys)
    j = int(np.argmin(values))
    if j == 0 or j == ys.size - 1:
        raise ValueError(
            f"window too small: envelope optimizer for (t={t:.6g}, x={x:.6g}) "
            f"sits on the search boundary y={ys[j]:.6g}"
        )
    ystar = _golden(lambda y: float(objective(y)), float(ys[j - 1]), float(ys[j + 1]))
    return sign * float(objective(ystar)), ystar


def solve_hughes(spec: HughesSpec) -> HughesSolution:
    """Evaluate the envelope on the whole window lattice at every time.

    The ``t = 0`` row is the initial potential itself.  The density is the
    spatial derivative of the potential; the eikonal defect
    ``|phi_t| - |phi_x f(phi_x)|`` is formed with the same lattice
    derivatives and is meaningful where the density is smooth (envelope
    kinks create O(1) spikes that refinement does not remove).
    """
    xs = spec.xs
    nt = len(spec.times)
    phi = np.empty((nt, xs.size))
    ystar = np.empty((nt, xs.size))
    for i, t in enumerate(spec.times):
        if t == 0.0:
            phi[i] = cumulative_potential(spec)
            ystar[i] = xs
            continue
        for j, x in enumerate(xs):
            phi[i, j], ystar[i, j] = hopf_lax(spec, t, x)

    rho = np.gradient(phi, xs, axis=1)
    if nt >= 2:
        phi_t = np.gradient(phi, np.asarray(spec.times), axis=0)
        residual = np.abs(phi_t) - np.abs(rho * spec.speed.f(np.maximum(rho, 1e-300)))
    else:
        residual = np.zeros_like(phi)
    return HughesSolution(
        times=spec.times,
        xs=xs,
        phi=phi,
        rho=rho,
        ystar=ystar,
        eikonal_residual=residual,
    )
