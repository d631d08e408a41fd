"""Closed-form data families for boundary/initial data and body force.

A generator is a sum of separable terms p_k(t) * g_k(x) with p_k a
polynomial and g_k a smooth profile with exact gradient and Hessian.
The stress data is slaved to the displacement data through the elastic
law, sigma0 = A^-1 E(u0), and the body force is f = -div sigma0
(computed analytically), so the equilibrium compatibility and the
initial condition E(u0(0)) = A sigma0(0) hold exactly by construction.
"""

from __future__ import annotations

import numpy as np

from . import tensors
from .tensors import Tensor4Sym


class PolyProfile:
    """g_i(x) = c_i + L_ij x_j + 0.5 x . Q_i . x with symmetric Q_i."""

    def __init__(self, d, linear=None, quadratic=None, const=None):
        self.d = d
        self.L = np.zeros((d, d)) if linear is None else np.asarray(linear, float)
        self.c = np.zeros(d) if const is None else np.asarray(const, float)
        if quadratic is None:
            self.Q = np.zeros((d, d, d))
        else:
            Q = np.asarray(quadratic, float)
            self.Q = 0.5 * (Q + np.swapaxes(Q, 1, 2))

    def value(self, x):
        quad = 0.5 * np.einsum("ijk,...j,...k->...i", self.Q, x, x)
        return x @ self.L.T + quad + self.c

    def grad(self, x):
        g = np.einsum("ijk,...k->...ij", self.Q, x)
        return g + self.L

    def hess(self, x):
        shape = np.asarray(x).shape[:-1]
        return np.broadcast_to(self.Q, shape + self.Q.shape)


class SineProfile:
    """g_i(x) = amp_i * prod_j sin(freq_ij x_j + phase_ij)."""

    def __init__(self, d, amp, freq, phase=None):
        self.d = d
        self.amp = np.asarray(amp, float)
        self.freq = np.asarray(freq, float)
        self.phase = (np.zeros((d, d)) if phase is None
                      else np.asarray(phase, float))

    def _args(self, x):
        # arg[..., i, j] = freq_ij x_j + phase_ij
        return self.freq * x[..., None, :] + self.phase

    def value(self, x):
        return self.amp * np.sin(self._args(x)).prod(axis=-1)

    def grad(self, x):
        arg = self._args(x)
        s, c = np.sin(arg), np.cos(arg)
        out = np.empty(arg.shape)
        for j in range(self.d):
            rest = np.prod(np.delete(s, j, axis=-1), axis=-1)
            out[..., :, j] = self.amp * self.freq[:, j] * c[..., :, j] * rest
        return out

    def hess(self, x):
        arg = self._args(x)
        s, c = np.sin(arg), np.cos(arg)
        d = self.d
        out = np.empty(arg.shape[:-1] + (d, d))
        for j in range(d):
            for k in range(j, d):
                if j == k:
                    val = -self.amp * self.freq[:, j] ** 2 * s.prod(axis=-1)
                else:
                    keep = [m for m in range(d) if m not in (j, k)]
                    rest = (np.prod(s[..., :, keep], axis=-1)
                            if keep else np.ones(arg.shape[:-1]))
                    val = (self.amp * self.freq[:, j] * self.freq[:, k]
                           * c[..., :, j] * c[..., :, k] * rest)
                out[..., :, j, k] = val
                out[..., :, k, j] = val
        return out


def _poly_eval(coeffs, t, tder):
    """Value of the tder-th derivative of sum_k coeffs[k] t^k."""
    val = 0.0
    for k in range(tder, len(coeffs)):
        fac = 1.0
        for j in range(k - tder + 1, k + 1):
            fac *= j
        val += coeffs[k] * fac * t ** (k - tder)
    return val


class DataGenerator:
    """Sum of separable closed-form terms defining (u0, sigma0, f)."""

    def __init__(self, terms, elastic: Tensor4Sym):
        self.terms = list(terms)            # (tpoly coeffs, profile)
        self.elastic = elastic
        self.d = elastic.d
        self._a_inv = elastic.inverse()
        self._a_inv_full = self._a_inv.as_full_tensor()

    def u0(self, t, x, tder=0):
        x = np.asarray(x, float)
        out = np.zeros(x.shape)
        for coeffs, prof in self.terms:
            out += _poly_eval(coeffs, t, tder) * prof.value(x)
        return out

    def grad_u0(self, t, x, tder=0):
        x = np.asarray(x, float)
        out = np.zeros(x.shape + (self.d,))
        for coeffs, prof in self.terms:
            out += _poly_eval(coeffs, t, tder) * prof.grad(x)
        return out

    def hess_u0(self, t, x, tder=0):
        x = np.asarray(x, float)
        out = np.zeros(x.shape + (self.d, self.d))
        for coeffs, prof in self.terms:
            out += _poly_eval(coeffs, t, tder) * prof.hess(x)
        return out

    def strain0(self, t, x, tder=0):
        """Mandel components of E(d^r u0/dt^r)."""
        g = self.grad_u0(t, x, tder)
        return tensors.from_matrix(0.5 * (g + np.swapaxes(g, -1, -2)))

    def sigma0(self, t, x, tder=0):
        return self._a_inv.apply(self.strain0(t, x, tder))

    def body_force(self, t, x):
        """f = -div sigma0, exact (second derivatives of the profiles)."""
        H = self.hess_u0(t, x)              # H[..., i, j, k] = d2 u_i / dx_j dx_k
        # dE[..., k, l, j] = d_j E_kl; uses Hessian symmetry in (j, k)
        dE = 0.5 * (np.swapaxes(H, -3, -2) + H)
        return -np.einsum("ijkl,...klj->...i", self._a_inv_full, dE,
                          optimize=True)
