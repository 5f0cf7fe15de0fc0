"""Matérn covariance, its isotropic spectral density and the induced coefficient variances."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .basis import BasisSpec
from .numerics import DimensionMismatch

# the prior mean of every model is identically zero
PRIOR_MEAN = 0.0


class UnsupportedSmoothness(ValueError):
    pass


class SmoothnessViolation(ValueError):
    pass


@dataclass(frozen=True)
class MaternKernel:
    nu: float
    lengthscale: float = 1.0
    amplitude: float = 1.0
    d: int = 1

    def __post_init__(self):
        if self.nu <= 0 or self.lengthscale <= 0 or self.amplitude <= 0:
            raise ValueError(f"Matérn parameters must be positive: {self}")

    @property
    def hyperparameters(self) -> np.ndarray:
        """``(log amplitude, log lengthscale)``."""
        return np.array([math.log(self.amplitude), math.log(self.lengthscale)])

    def with_hyperparameters(self, theta) -> "MaternKernel":
        theta = np.asarray(theta, dtype=float)
        return replace(self, amplitude=float(np.exp(theta[0])), lengthscale=float(np.exp(theta[1])))

    def validate(self, functional) -> None:
        r = required_smoothness(functional)
        if self.nu < r + 0.5:
            raise SmoothnessViolation(
                f"{type(functional).__name__} needs nu >= {r + 0.5}, kernel has nu = {self.nu}"
            )


def _half_integer_order(nu: float) -> int:
    r = nu - 0.5
    if r < 0 or abs(r - round(r)) > 1e-12:
        raise UnsupportedSmoothness(f"only half-integer smoothness is supported, got nu={nu}")
    return int(round(r))


def matern_cov(z, nu: float, rho: float) -> np.ndarray | float:
    """Unit-variance Matérn correlation at lag ``z`` for ``nu = p + 1/2``.

    Uses the closed form ``exp(-s) p!/(2p)! sum_i (p+i)!/(i!(p-i)!) (2s)^(p-i)``
    with ``s = sqrt(2 nu) |z| / rho``.
    """
    if rho <= 0:
        raise ValueError("lengthscale must be positive")
    p = _half_integer_order(nu)
    s = np.sqrt(2.0 * nu) * np.abs(np.asarray(z, dtype=float)) / rho
    poly = np.zeros_like(s)
    for i in range(p + 1):
        c = math.factorial(p + i) / (math.factorial(i) * math.factorial(p - i))
        poly = poly + c * (2.0 * s) ** (p - i)
    out = np.exp(-s) * poly * math.factorial(p) / math.factorial(2 * p)
    return float(out) if out.ndim == 0 else out


def tensor_matern_cov(x, xp, nu: float, rho: float, amplitude: float = 1.0) -> float:
    """Product-form Matérn ``amplitude * prod_i k_nu(x_i - x'_i)``."""
    diff = np.asarray(x, dtype=float) - np.asarray(xp, dtype=float)
    return float(amplitude * np.prod(matern_cov(diff, nu, rho)))


def spectral_log_constant(nu: float, d: int) -> float:
    # log of 2^d pi^{d/2} Gamma(nu + d/2) (2 nu)^nu / Gamma(nu)
    return (d * math.log(2.0) + 0.5 * d * math.log(math.pi) + gammaln(nu + 0.5 * d)
            + nu * math.log(2.0 * nu) - gammaln(nu))


def spectral_density(omega_norm, kernel: MaternKernel, log_amplitude=None, log_lengthscale=None):
    """Isotropic Matérn spectral density in ``d`` dimensions (angular frequency).

    Normalised so that ``(2 pi)^{-d} int s(w) exp(i w.x) dw = amplitude * k_nu(|x|)``.
    ``log_amplitude`` / ``log_lengthscale`` may be supplied as duals to differentiate
    with respect to the hyperparameters.
    """
    nu, d = kernel.nu, kernel.d
    la = math.log(kernel.amplitude) if log_amplitude is None else log_amplitude
    lr = math.log(kernel.lengthscale) if log_lengthscale is None else log_lengthscale
    w2 = np.asarray(omega_norm, dtype=float) ** 2
    # log s = C + la - 2 nu lr - (nu + d/2) log(2 nu / rho^2 + w^2)
    inner = np.exp(lr * -2.0) * (2.0 * nu) + w2
    return np.exp(la + lr * (-2.0 * nu) + spectral_log_constant(nu, d) - np.log(inner) * (nu + 0.5 * d))


def coefficient_variances(spec: BasisSpec, kernel: MaternKernel, log_amplitude=None, log_lengthscale=None):
    """Prior variances of the basis coefficients, in ``spec`` order."""
    if spec.d != kernel.d:
        raise DimensionMismatch(f"basis dimension {spec.d} != kernel dimension {kernel.d}")
    return spectral_density(np.sqrt(spec.eigenvalues()), kernel, log_amplitude, log_lengthscale)


def required_smoothness(functional) -> int:
    """Differentiability order demanded by a functional (dispatches on its ``order`` attribute)."""
    return int(functional.order)
