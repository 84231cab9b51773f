"""Domain types, derivative providers and small dense symmetric linear algebra."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

EPS = np.finfo(float).eps
FD_FACTOR = np.cbrt(EPS)

# asymmetry above this (relative) is an error; below it is repaired silently
SYMMETRY_TOL = 1e-8


class LyatensorError(Exception):
    """Base class for all library errors."""


class NumericFailure(LyatensorError):
    """A non-finite value appeared during evaluation."""


class ContractViolation(LyatensorError):
    """An input violated a documented precondition."""


class BlowUpError(NumericFailure):
    """Integration could not reach the requested time.

    ``t_reached`` is the last time the solver got to; a blow-up inside the
    probed window means the vector field is not complete there.
    """

    def __init__(self, message: str, t_reached: float, state=None):
        super().__init__(message)
        self.t_reached = float(t_reached)
        self.state = None if state is None else np.array(state, dtype=float)


class RangeError(LyatensorError):
    """A time argument lies outside the domain of a stored object."""


class DegenerateInputError(LyatensorError):
    """Inputs are degenerate (e.g. coincident trajectories)."""


def _check_finite(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericFailure(f"non-finite value in {what}")
    return values


def fd_jacobian(f: Callable, t: float, y, scale=None) -> np.ndarray:
    """Central-difference Jacobian of ``f(t, y)`` with respect to ``y``.

    Entry ``(i, j)`` is ``d f_i / d y_j``; the step for coordinate ``j`` is
    ``cbrt(eps) * max(scale_j, |y_j|)``.
    """
    y = np.asarray(y, dtype=float)
    dim = y.size
    if scale is None:
        scale = np.ones(dim)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), (dim,))
    if np.any(scale <= 0):
        raise ContractViolation("fd_jacobian: scale must be strictly positive")
    steps = FD_FACTOR * np.maximum(scale, np.abs(y))
    cols = []
    for j in range(dim):
        yp = y.copy()
        ym = y.copy()
        yp[j] += steps[j]
        ym[j] -= steps[j]
        # the realised step differs from steps[j] by rounding
        h = yp[j] - ym[j]
        fp = _check_finite(np.asarray(f(t, yp), dtype=float), "fd_jacobian stencil")
        fm = _check_finite(np.asarray(f(t, ym), dtype=float), "fd_jacobian stencil")
        cols.append((fp - fm) / h)
    return np.stack(cols, axis=-1)


def fd_time_derivative(f: Callable, t: float, y) -> np.ndarray:
    """Central difference of ``f(t, y)`` in ``t``."""
    h = FD_FACTOR * max(1.0, abs(t))
    tp, tm = t + h, t - h
    fp = _check_finite(np.asarray(f(tp, y), dtype=float), "time stencil")
    fm = _check_finite(np.asarray(f(tm, y), dtype=float), "time stencil")
    return (fp - fm) / (tp - tm)


def symmetrize(m, what: str = "matrix") -> np.ndarray:
    """Return ``(m + m.T) / 2``; asymmetry beyond 1e-8 relative raises."""
    m = np.asarray(m, dtype=float)
    nrm = np.max(np.abs(m)) if m.size else 0.0
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOL * max(nrm, 1e-300):
        raise ContractViolation(f"{what} is not symmetric")
    return 0.5 * (m + m.T)


def jacobi_eigenvalues(m, tol: float = 1e-15, max_sweeps: int = 60) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations (ascending)."""
    a = np.array(m, dtype=float)
    n = a.shape[0]
    if n == 1:
        return a.reshape(1).copy()
    scale = np.sqrt(np.sum(a * a))
    if scale == 0.0:
        return np.zeros(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2) * 2.0)
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    tn = 0.5 / theta
                else:
                    tn = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(tn * tn + 1.0)
                s = tn * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


def eigen_extremes(m) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix."""
    m = np.asarray(m, dtype=float)
    nrm = np.max(np.abs(m)) if m.size else 0.0
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-10 * max(nrm, 1e-300):
        raise ContractViolation("eigen_extremes: matrix is not symmetric")
    ev = jacobi_eigenvalues(0.5 * (m + m.T))
    return float(ev[0]), float(ev[-1])


DEFINITENESS_CLASSES = (
    "negative_definite",
    "negative_semidefinite",
    "indefinite",
    "positive_semidefinite",
    "positive_definite",
    "zero",
)


def default_margin(m) -> float:
    return 1e-8 * (1.0 + float(np.linalg.norm(m, 2)))


def classify(eigen_min: float, eigen_max: float, margin: float) -> str:
    if max(abs(eigen_min), abs(eigen_max)) <= margin:
        return "zero"
    if eigen_max < -margin:
        return "negative_definite"
    if eigen_min > margin:
        return "positive_definite"
    if eigen_max <= margin:
        return "negative_semidefinite"
    if eigen_min >= -margin:
        return "positive_semidefinite"
    return "indefinite"


@dataclass(frozen=True)
class SymmetricForm:
    """A symmetric bilinear form together with its definiteness class."""

    m: np.ndarray
    eigen_min: float
    eigen_max: float
    definiteness: str
    margin: float

    @classmethod
    def from_matrix(cls, m, margin: Optional[float] = None) -> "SymmetricForm":
        m = np.asarray(m, dtype=float)
        m = 0.5 * (m + m.T)
        lo, hi = eigen_extremes(m)
        if margin is None:
            margin = default_margin(m)
        return cls(m, lo, hi, classify(lo, hi, margin), margin)

    @property
    def is_negative_definite(self) -> bool:
        return self.definiteness == "negative_definite"


@dataclass(frozen=True)
class VectorField:
    """Fibre components of a first order dynamic equation ``y' = gamma(t, y)``.

    ``jacobian(t, y)`` returns the matrix with entry ``(lam, mu)`` equal to
    ``d gamma^lam / d y^mu``. If it is omitted, central differences are used.
    ``hessian_fn`` (optional) gives ``[lam, mu, nu] = d^2 gamma^lam / d y^mu d y^nu``.
    """

    dim: int
    eval: Callable
    jacobian_fn: Optional[Callable] = None
    name: str = "vector_field"
    fd_scale: Optional[tuple] = None
    hessian_fn: Optional[Callable] = None

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ContractViolation("VectorField.dim must be positive")

    def __call__(self, t: float, y) -> np.ndarray:
        out = np.asarray(self.eval(t, y), dtype=float)
        if out.shape != (self.dim,):
            raise ContractViolation(
                f"{self.name}: expected {self.dim} components, got shape {out.shape}"
            )
        return _check_finite(out, self.name)

    @property
    def has_analytic_jacobian(self) -> bool:
        return self.jacobian_fn is not None

    def jacobian(self, t: float, y) -> np.ndarray:
        if self.jacobian_fn is not None:
            jac = np.asarray(self.jacobian_fn(t, y), dtype=float)
            return _check_finite(jac.reshape(self.dim, self.dim), f"{self.name} jacobian")
        return fd_jacobian(self.__call__, t, y, self.fd_scale)

    def fd_jacobian(self, t: float, y) -> np.ndarray:
        return fd_jacobian(self.__call__, t, y, self.fd_scale)

    def hessian(self, t: float, y) -> np.ndarray:
        """Second derivatives of the field; central differences of :meth:`jacobian` by default."""
        n = self.dim
        if self.hessian_fn is not None:
            hes = np.asarray(self.hessian_fn(t, y), dtype=float).reshape(n, n, n)
            return _check_finite(hes, f"{self.name} hessian")
        flat = fd_jacobian(lambda s, z: self.jacobian(s, z).ravel(), t, y, self.fd_scale)
        hes = flat.reshape(n, n, n)
        return 0.5 * (hes + hes.transpose(0, 2, 1))

    def without_jacobian(self) -> "VectorField":
        return VectorField(self.dim, self.eval, None, self.name + "[fd]", self.fd_scale)


@dataclass(frozen=True)
class FibreMetric:
    """Time-dependent Riemannian fibre metric ``g(t, y)``.

    ``dt(t, y)`` gives ``d_t g`` and ``dy(t, y)`` gives the array with entry
    ``[lam, a, b] = d g_ab / d y^lam``; both fall back to central differences.
    """

    dim: int
    eval: Callable
    dt: Optional[Callable] = None
    dy: Optional[Callable] = None
    name: str = "metric"
    fd_scale: Optional[tuple] = None
    check_pd: bool = True

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ContractViolation("FibreMetric.dim must be positive")

    def __call__(self, t: float, y) -> np.ndarray:
        g = np.asarray(self.eval(t, y), dtype=float).reshape(self.dim, self.dim)
        _check_finite(g, self.name)
        g = symmetrize(g, self.name)
        if self.check_pd:
            try:
                np.linalg.cholesky(g)
            except np.linalg.LinAlgError:
                raise ContractViolation(
                    f"{self.name} is not positive-definite at t={t}, y={np.asarray(y).tolist()}"
                ) from None
        return g

    @property
    def has_analytic_dt(self) -> bool:
        return self.dt is not None

    @property
    def has_analytic_dy(self) -> bool:
        return self.dy is not None

    def d_t(self, t: float, y) -> np.ndarray:
        if self.dt is not None:
            d = np.asarray(self.dt(t, y), dtype=float).reshape(self.dim, self.dim)
            return _check_finite(0.5 * (d + d.T), f"{self.name} d_t")
        return fd_time_derivative(self.__call__, t, y)

    def d_y(self, t: float, y) -> np.ndarray:
        if self.dy is not None:
            d = np.asarray(self.dy(t, y), dtype=float).reshape(self.dim, self.dim, self.dim)
            return _check_finite(0.5 * (d + d.transpose(0, 2, 1)), f"{self.name} d_y")
        flat = fd_jacobian(lambda s, z: self(s, z).ravel(), t, y, self.fd_scale)
        # flat[(a, b), lam] -> [lam, a, b]
        return np.moveaxis(flat.reshape(self.dim, self.dim, self.dim), -1, 0)

    def without_derivatives(self) -> "FibreMetric":
        return FibreMetric(self.dim, self.eval, None, None, self.name + "[fd]", self.fd_scale, self.check_pd)

    def norm(self, t: float, y, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(v @ self(t, y) @ v))


@dataclass(frozen=True)
class DerivativeProvenance:
    """Records which derivatives came from analytic providers."""

    jacobian: str
    metric_dt: str
    metric_dy: str

    @classmethod
    def of(cls, vf: VectorField, g: FibreMetric) -> "DerivativeProvenance":
        # metrics may label their supplied derivatives, e.g. "variational"
        kind = getattr(g, "derivative_kind", "analytic")
        return cls(
            "analytic" if vf.has_analytic_jacobian else "finite_difference",
            kind if g.has_analytic_dt else "finite_difference",
            kind if g.has_analytic_dy else "finite_difference",
        )

    def as_dict(self) -> dict:
        return {"jacobian": self.jacobian, "metric_dt": self.metric_dt, "metric_dy": self.metric_dy}
