"""Non-learned low-rank + sparse decomposition ``D = B + O``.

Two solvers share :class:`SolverParams`:

* :func:`pcp_solve` - principal component pursuit (nuclear norm + l1) by the
  inexact augmented Lagrangian method.
* :func:`relaxed_solve` - the unconstrained model
  ``min_B,O  ||B||_* + lam * S(O) + mu/2 ||D - B - O||_F^2`` with the
  smooth-l1 surrogate ``S(o) = sum(sqrt(o^2 + eps^2) - eps)``, solved by
  alternating an SVT step on ``B`` with a linearised (majorise-minimise)
  step on ``O``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import UsageError
from .linalg import as_matrix, soft_threshold, svd, svt

PCP_MU_GROWTH = 1.5
RELAXED_MU_GROWTH = 1.05


@dataclass(frozen=True)
class SolverParams:
    """Solver settings; ``None`` fields are resolved from the input.

    ``lam`` defaults to ``1/sqrt(max(m, n))`` and ``mu`` to ``1.25 / sigma_1(D)``.
    ``gamma`` and ``rho`` default to ``lam*L_S/(lam*L_S + mu)`` and
    ``lam/(lam*L_S + mu)`` re-evaluated as ``mu`` grows; fixing them pins
    the object update coefficients. ``lipschitz`` defaults to ``1/smooth_eps``.
    """

    lam: float = None
    mu: float = None
    mu_growth: float = None
    mu_max_factor: float = 1e7
    gamma: float = None
    rho: float = None
    smooth_eps: float = 0.01
    lipschitz: float = None
    c_t: float = 1.0
    weight_eps: float = 1e-6
    reweight: bool = False
    tol: float = 1e-7
    max_iter: int = 500

    def __post_init__(self):
        for name in ("lam", "mu", "lipschitz"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise UsageError(f"{name} must be finite and > 0, got {v}")
        if self.gamma is not None and not 0 <= self.gamma <= 1:
            raise UsageError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.rho is not None and not (self.rho >= 0 and math.isfinite(self.rho)):
            raise UsageError(f"rho must be finite and >= 0, got {self.rho}")
        if self.mu_growth is not None and not self.mu_growth >= 1:
            raise UsageError(f"mu_growth must be >= 1, got {self.mu_growth}")
        if not self.mu_max_factor >= 1:
            raise UsageError("mu_max_factor must be >= 1")
        for name in ("smooth_eps", "c_t", "weight_eps", "tol"):
            if not getattr(self, name) > 0:
                raise UsageError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.max_iter < 1:
            raise UsageError(f"max_iter must be >= 1, got {self.max_iter}")

    @property
    def lipschitz_s(self):
        return self.lipschitz if self.lipschitz is not None else 1.0 / self.smooth_eps

    def coefficients(self, mu):
        """``(gamma, rho)`` for penalty ``mu``; satisfies ``gamma == rho * L_S`` when derived."""
        ls = self.lipschitz_s
        gamma = self.gamma if self.gamma is not None else self.lam * ls / (self.lam * ls + mu)
        rho = self.rho if self.rho is not None else self.lam / (self.lam * ls + mu)
        return gamma, rho

    def resolve(self, d, growth):
        """Fill in the data-dependent defaults for input ``d``."""
        lam = self.lam if self.lam is not None else 1.0 / math.sqrt(max(d.shape))
        mu = self.mu
        if mu is None:
            s1 = svd(d).singular_values[0]
            mu = 1.25 / s1 if s1 > 0 else 1.0
        return replace(self, lam=lam, mu=mu,
                       mu_growth=self.mu_growth if self.mu_growth is not None else growth)


@dataclass
class Decomposition:
    B: np.ndarray
    O: np.ndarray
    D: np.ndarray
    iterations_used: int
    residual_trace: list = field(default_factory=list)
    non_converged: bool = False
    params: SolverParams = None


def _residual(d, b, o, scale):
    return float(np.linalg.norm(d - b - o) / scale)


def _zero_result(d, params):
    z = np.zeros_like(d)
    return Decomposition(z, z.copy(), z.copy(), 1, [0.0], False, params)


def pcp_solve(d, params=SolverParams()):
    """Principal component pursuit by inexact ALM.

    Each iteration takes ``B = svt(D - O + Y/mu, 1/mu)``,
    ``O = soft_threshold(D - B + Y/mu, lam/mu)``, then the multiplier step
    ``Y += mu (D - B - O)`` and ``mu *= mu_growth`` up to ``mu_max_factor * mu_0``.
    Stops when the relative residual reaches ``tol``. Without convergence
    the lowest-residual iterate is returned with ``non_converged=True``.
    """
    d = as_matrix(d, "d")
    scale = np.linalg.norm(d)
    if scale == 0:
        return _zero_result(d, params)
    p = params.resolve(d, PCP_MU_GROWTH)
    mu, mu_max = p.mu, p.mu * p.mu_max_factor
    o = np.zeros_like(d)
    y = np.zeros_like(d)
    trace, best = [], None
    for k in range(1, p.max_iter + 1):
        b = svt(d - o + y / mu, 1.0 / mu)
        o = soft_threshold(d - b + y / mu, p.lam / mu)
        r = _residual(d, b, o, scale)
        trace.append(r)
        if best is None or r <= best[0]:
            best = (r, b, o, k)
        if r <= p.tol:
            return Decomposition(b, o, b + o, k, trace, False, p)
        y = y + mu * (d - b - o)
        mu = min(mu * p.mu_growth, mu_max)
    _, b, o, _ = best
    return Decomposition(b, o, b + o, p.max_iter, trace, True, p)


def smooth_l1(o, eps=0.01):
    """``sum(sqrt(o^2 + eps^2) - eps)``; its gradient is ``1/eps``-Lipschitz."""
    o = np.asarray(o, dtype=np.float64)
    return float((np.sqrt(o * o + eps * eps) - eps).sum())


def smooth_l1_grad(o, eps=0.01):
    o = np.asarray(o, dtype=np.float64)
    return o / np.sqrt(o * o + eps * eps)


def reweight_map(o, c_t=1.0, eps=1e-6):
    """Prior weights ``C_T / (|O| + eps)``: positive and decreasing in ``|O|``."""
    return c_t / (np.abs(o) + eps)


def object_update(o_prev, d_prev, b, gamma, rho, grad_s):
    """``gamma * O_prev + (1 - gamma) (D_prev - B) - rho * grad_s(O_prev)``."""
    return gamma * o_prev + (1.0 - gamma) * (d_prev - b) - rho * grad_s(o_prev)


def relaxed_solve(d, params=SolverParams()):
    """Alternating closed-form updates for the relaxed model.

    Per iteration, with ``(gamma, rho)`` from :meth:`SolverParams.coefficients`::

        B^k = svt(D - O^{k-1}, 1/mu)
        O^k = gamma O^{k-1} + (1 - gamma)(D - B^k) - rho grad S(O^{k-1})
        D^k = B^k + O^k

    The data term stays anchored to the observed ``D``; ``D^k`` is the
    restored image reported in the result. With ``reweight=True`` the
    gradient is taken at ``W o O`` where ``W = C_T / (|O^{k-1}| + eps)``.
    Stops when the residual reaches ``tol`` or the iterates stop moving.
    """
    d = as_matrix(d, "d")
    scale = np.linalg.norm(d)
    if scale == 0:
        return _zero_result(d, params)
    p = params.resolve(d, RELAXED_MU_GROWTH)
    mu, mu_max = p.mu, p.mu * p.mu_max_factor
    eps = p.smooth_eps
    b = np.zeros_like(d)
    o = np.zeros_like(d)
    trace, best = [], None
    for k in range(1, p.max_iter + 1):
        gamma, rho = p.coefficients(mu)
        if p.reweight:
            w = reweight_map(o, p.c_t, p.weight_eps)
            grad_s = lambda x, w=w: smooth_l1_grad(w * x, eps)
        else:
            grad_s = lambda x: smooth_l1_grad(x, eps)
        b_new = svt(d - o, 1.0 / mu)
        o_new = object_update(o, d, b_new, gamma, rho, grad_s)
        step = (np.linalg.norm(b_new - b) + np.linalg.norm(o_new - o)) / scale
        b, o = b_new, o_new
        r = _residual(d, b, o, scale)
        trace.append(r)
        if best is None or r <= best[0]:
            best = (r, b, o, k)
        if r <= p.tol or (k > 1 and step <= p.tol):
            return Decomposition(b, o, b + o, k, trace, False, p)
        mu = min(mu * p.mu_growth, mu_max)
    _, b, o, _ = best
    return Decomposition(b, o, b + o, p.max_iter, trace, True, p)


def taylor_majorizer_check(s_fn=None, o=None, o0=None, L=None, eps=0.01, rtol=1e-12):
    """Whether ``S(o) <= S(o0) + <grad S(o0), o - o0> + L/2 ||o - o0||^2``.

    ``s_fn(x)`` must return ``(value, gradient)``; the default is the
    smooth-l1 surrogate with parameter ``eps``, for which ``L = 1/eps`` is
    a valid bound. ``rtol`` absorbs rounding in the comparison.
    """
    if s_fn is None:
        s_fn = lambda x: (smooth_l1(x, eps), smooth_l1_grad(x, eps))
    if L is None:
        L = 1.0 / eps
    o = np.asarray(o, dtype=np.float64)
    o0 = np.asarray(o0, dtype=np.float64)
    s, _ = s_fn(o)
    s0, g0 = s_fn(o0)
    delta = o - o0
    bound = s0 + float(np.sum(g0 * delta)) + 0.5 * L * float(np.sum(delta * delta))
    return bool(s <= bound + rtol * (1.0 + abs(bound)))
