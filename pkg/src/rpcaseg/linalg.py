"""Dense linear algebra for the solvers and the interpretability metrics."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError, UsageError

RECON_TOL = 1e-8


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = U @ diag(s) @ V.T`` with ``r = min(m, n)``."""

    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    @property
    def s(self):
        return self.singular_values

    def reconstruct(self):
        return (self.U * self.singular_values) @ self.V.T


def as_matrix(a, name="a"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-d matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NumericalError(f"{name} has non-finite entries")
    return a


def svd(a, method="lapack"):
    """Thin SVD with singular values in non-increasing order.

    ``method="lapack"`` uses the divide-and-conquer driver, falling back to
    the self-contained one-sided Jacobi routine if LAPACK fails to converge;
    ``method="jacobi"`` uses Jacobi directly.
    """
    a = as_matrix(a)
    if method == "jacobi":
        return jacobi_svd(a)
    if method != "lapack":
        raise UsageError(f"unknown svd method {method!r}")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        return jacobi_svd(a)
    res = SvdResult(u, s, vt.T)
    _check_residual(a, res)
    return res


def _check_residual(a, res):
    scale = np.linalg.norm(a)
    if scale == 0:
        return
    err = np.linalg.norm(a - res.reconstruct()) / scale
    if not err <= RECON_TOL:
        raise NumericalError(f"svd reconstruction residual {err:.3e} exceeds {RECON_TOL:.0e}")


def _complete_basis(q, k):
    """Replace columns k.. of the orthonormal-prefix matrix ``q`` with an orthonormal complement."""
    m, r = q.shape
    if k >= r:
        return q
    basis, _ = np.linalg.qr(np.hstack([q[:, :k], np.eye(m)]))
    # Columns of ``basis`` after the first k span the complement of q[:, :k].
    q = q.copy()
    q[:, k:] = basis[:, k:r]
    return q


def jacobi_svd(a, tol=1e-15, max_sweeps=None):
    """One-sided (Hestenes) Jacobi SVD.

    Columns are rotated pairwise until every pair is orthogonal to within
    ``tol`` relative to the columns' norms. The sweep cap defaults to
    ``100 * min(m, n)``; exceeding it raises :class:`NumericalError` with the
    remaining off-orthogonality.
    """
    a = as_matrix(a)
    transpose = a.shape[0] < a.shape[1]
    # Work on a copy scaled to unit max-magnitude so the column inner
    # products neither overflow nor underflow.
    scale = float(np.abs(a).max()) or 1.0
    w = (a.T if transpose else a) / scale
    m, n = w.shape
    v = np.eye(n)
    # Columns below this squared norm are rounding noise and count as zero.
    negligible = (np.finfo(np.float64).eps * np.linalg.norm(w)) ** 2
    sweeps = max_sweeps if max_sweeps is not None else 100 * n
    for _ in range(sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                wi, wj = w[:, i], w[:, j]
                alpha = wi @ wi
                beta = wj @ wj
                gamma = wi @ wj
                if alpha <= negligible or beta <= negligible:
                    continue
                rel = abs(gamma) / (np.sqrt(alpha) * np.sqrt(beta))
                off = max(off, rel)
                if rel <= tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                w[:, [i, j]] = np.column_stack([c * wi - s * wj, s * wi + c * wj])
                vi, vj = v[:, i].copy(), v[:, j].copy()
                v[:, i], v[:, j] = c * vi - s * vj, s * vi + c * vj
        if off <= tol:
            break
    else:
        raise NumericalError(f"jacobi_svd did not converge in {sweeps} sweeps (max off-orthogonality {off:.3e})")
    sig = np.linalg.norm(w, axis=0)
    order = np.argsort(-sig, kind="stable")
    sig, w, v = sig[order], w[:, order], v[:, order]
    # Columns with negligible norm carry rounding noise, not direction.
    nz = int(np.count_nonzero(sig > sig[0] * 1e-13)) if sig[0] > 0 else 0
    u = np.zeros((m, n))
    u[:, :nz] = w[:, :nz] / sig[:nz]
    u = _complete_basis(u, nz)
    if transpose:
        u, v = v, u
    return SvdResult(u, sig * scale, v)


def soft_threshold(x, tau):
    """Elementwise ``sign(x) * max(|x| - tau, 0)``."""
    if not tau >= 0:
        raise UsageError(f"soft_threshold needs tau >= 0, got {tau}")
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def svt(a, mu, method="lapack"):
    """Singular value thresholding ``U diag(max(s - mu, 0)) V^T``.

    This is the minimiser of ``mu * ||X||_* + 0.5 * ||X - a||_F^2``.
    """
    if not mu >= 0:
        raise UsageError(f"svt needs mu >= 0, got {mu}")
    res = svd(a, method)
    s = np.maximum(res.singular_values - mu, 0.0)
    keep = s > 0
    return (res.U[:, keep] * s[keep]) @ res.V[:, keep].T


def fro(a):
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


def l1(a):
    return float(np.abs(np.asarray(a, dtype=np.float64)).sum())


def l0(a, zero_tol=1e-6):
    """Number of entries with ``|x| > zero_tol``."""
    if not zero_tol >= 0:
        raise UsageError(f"zero_tol must be >= 0, got {zero_tol}")
    return int(np.count_nonzero(np.abs(np.asarray(a)) > zero_tol))


def nuclear(a):
    return float(svd(a).singular_values.sum())
