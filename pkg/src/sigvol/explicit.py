"""Closed-form and ODE oracles for the classical Stein-Stein and Heston models.

Used as independent references for the signature-model pricers and hedgers.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

__all__ = ["SteinSteinCoefficients", "stein_stein_coefficients", "stein_stein_charfun", "heston_charfun"]


class SteinSteinCoefficients:
    """``log M_t(u) = int_0^t f dlogS + int_0^t g X^2 ds + A_t + B_t X_t + C_t X_t^2``.

    Arrays ``A, B, C`` have shape ``(n_nodes, n_times)`` on ``t_grid``.
    """

    def __init__(self, u_nodes, t_grid, A, B, C, params):
        self.u_nodes, self.t_grid = u_nodes, t_grid
        self.A, self.B, self.C = A, B, C
        self.params = params

    def at(self, t):
        j = np.clip(np.searchsorted(self.t_grid, t, side="right") - 1, 0, len(self.t_grid) - 2)
        w = (t - self.t_grid[j]) / (self.t_grid[j + 1] - self.t_grid[j])
        lerp = lambda z: (1 - w) * z[:, j] + w * z[:, j + 1]
        return lerp(self.A), lerp(self.B), lerp(self.C)

    def log_phi0(self, x0):
        return self.A[:, 0] + self.B[:, 0] * x0 + self.C[:, 0] * x0**2


def stein_stein_coefficients(kappa, theta, eta, rho, T, u_nodes, transform, t_grid=None,
                             rtol=1e-11, atol=1e-13) -> SteinSteinCoefficients:
    """Integrate the three scalar Riccati ODEs backward from zero terminal values.

    ``transform`` supplies ``f(t,u)`` and ``g(t,u)`` (see :class:`PayoffTransform`).
    """
    u = np.atleast_1d(np.asarray(u_nodes, dtype=complex))
    n = u.size
    if t_grid is None:
        t_grid = np.linspace(0.0, T, 101)
    t_grid = np.asarray(t_grid, dtype=float)

    def rhs(t, y):
        A, B, C = y[:n], y[n : 2 * n], y[2 * n :]
        f = transform.f(t, u)
        g = transform.g(t, u)
        dC = 2 * kappa * C - 2 * eta**2 * C**2 - (f * f - f) / 2 - g - 2 * f * rho * eta * C
        dB = kappa * B - 2 * kappa * theta * C - 2 * eta**2 * B * C - f * rho * eta * B
        dA = -kappa * theta * B - 0.5 * eta**2 * B**2 - eta**2 * C
        return np.concatenate([dA, dB, dC])

    sol = solve_ivp(rhs, (T, t_grid[0]), np.zeros(3 * n, dtype=complex), method="DOP853",
                    t_eval=t_grid[::-1], rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    y = sol.y[:, ::-1]
    return SteinSteinCoefficients(u, t_grid, y[:n], y[n : 2 * n], y[2 * n :],
                                  dict(kappa=kappa, theta=theta, eta=eta, rho=rho, T=T))


def stein_stein_charfun(kappa, theta, eta, rho, T, u_nodes, transform, x0=None) -> np.ndarray:
    """``E[exp(int f dlogS + int g X^2 ds)]`` at time zero with ``X_0 = x0`` (default ``theta``)."""
    x0 = theta if x0 is None else x0
    co = stein_stein_coefficients(kappa, theta, eta, rho, T, u_nodes, transform, np.array([0.0, T]))
    return np.exp(co.log_phi0(x0))


def heston_charfun(u, tau, kappa, theta, eta, rho, v0=None) -> np.ndarray:
    """Characteristic function of ``log S_T`` for Heston with ``S_0 = 1``, rate zero.

    Uses the rotation-free branch of the complex logarithm.
    """
    v0 = theta if v0 is None else v0
    u = np.asarray(u, dtype=complex)
    b = kappa - rho * eta * 1j * u
    d = np.sqrt(b**2 + eta**2 * (1j * u + u**2))
    g2 = (b - d) / (b + d)
    e = np.exp(-d * tau)
    C = kappa * theta / eta**2 * ((b - d) * tau - 2.0 * np.log((1 - g2 * e) / (1 - g2)))
    D = (b - d) / eta**2 * (1 - e) / (1 - g2 * e)
    return np.exp(C + D * v0)
