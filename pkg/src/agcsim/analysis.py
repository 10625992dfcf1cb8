"""Closed-form analysis of the reduced AGC dynamics.

Covers the spectral facts about I - g 1^T, the equal-time-constant LTI model
with its disturbance-to-eta and disturbance-to-ACE transfer functions, the
sensitivity peak, the cross-area peak response, and the Lyapunov function
used to certify global convergence of the saturated reduced model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .reduced import InterconnectionMatrix, build_matrix, overbias, phi, _breakpoints

POLE_TOL = 1e-12


def _gamma(gamma):
    g = np.asarray(gamma, dtype=float)
    if g.ndim != 1:
        raise ValueError("gamma must be a vector")
    return g


def lemma2_eigs(gamma) -> np.ndarray:
    """Eigenvalues of I - g 1^T: N-1 ones and 1 - sum(g)."""
    g = _gamma(gamma)
    out = np.ones(g.size)
    out[-1] = 1.0 - g.sum()
    return out


def lemma2_inverse(gamma) -> np.ndarray:
    """(I - g 1^T)^{-1} = I + g 1^T / (1 - 1^T g)."""
    g = _gamma(gamma)
    denom = 1.0 - g.sum()
    if abs(denom) < POLE_TOL:
        raise ZeroDivisionError("I - g 1^T is singular (1^T g = 1)")
    return np.eye(g.size) + np.outer(g, np.ones(g.size)) / denom


def lemma2_resolvent(s, gamma) -> np.ndarray:
    """(sI + I - g 1^T)^{-1} by Sherman-Morrison."""
    g = _gamma(gamma)
    s = complex(s)
    a = s + 1.0
    c = a - g.sum()
    if abs(a) < POLE_TOL or abs(c) < POLE_TOL:
        raise ZeroDivisionError(f"s = {s} is a pole of the resolvent")
    return (np.eye(g.size) + np.outer(g, np.ones(g.size)) / c) / a


@dataclass(frozen=True, eq=False)
class LtiReducedModel:
    """Unsaturated simplified-AGC reduced model with one common time constant."""

    B_ace: InterconnectionMatrix
    tau_prime: float

    @classmethod
    def from_params(cls, b, beta_vec, tau_prime):
        if tau_prime <= 0:
            raise ValueError("tau_prime must be positive")
        return cls(build_matrix("ace", b, beta_vec), float(tau_prime))

    @classmethod
    def from_model(cls, model):
        tau = model.tau_vec
        if not np.all(tau == tau[0]):
            raise ValueError("the LTI reduced model needs equal AGC time constants in all areas")
        return cls.from_params(model.b_vec, model.beta_vec, tau[0])

    @property
    def gamma(self) -> np.ndarray:
        return self.B_ace.gamma

    @property
    def O(self) -> np.ndarray:
        return overbias(self.B_ace.b, self.B_ace.beta)

    @property
    def n(self) -> int:
        return self.B_ace.b.size

    @property
    def bias_ratio(self) -> float:
        """sum(b) / sum(beta)."""
        return float(self.B_ace.b.sum() / self.B_ace.beta.sum())


class Dominance(NamedTuple):
    lambda_n: float
    cluster: float
    dominant: str  # "lambda_N", "cluster" or "degenerate"


def dominant_eigenvalue(lti: LtiReducedModel) -> Dominance:
    """lambda_N = -(sum b / sum beta) / tau' against the -1/tau' cluster."""
    lam = -lti.bias_ratio / lti.tau_prime
    cluster = -1.0 / lti.tau_prime
    if lti.n == 1 or lam == cluster:
        dom = "degenerate"
    elif lam > cluster:
        dom = "lambda_N"
    else:
        dom = "cluster"
    return Dominance(lam, cluster, dom)


def _bracket(i, j, s, lti):
    ts = lti.tau_prime * s
    g = lti.gamma
    return (1.0 if i == j else 0.0) - g[i] * ts / (ts + lti.bias_ratio)


def _check_pole(s, lti):
    ts = lti.tau_prime * s
    if abs(ts + 1.0) < POLE_TOL or abs(ts + lti.bias_ratio) < POLE_TOL:
        raise ZeroDivisionError(f"s = {s} is a pole")


def transfer_T(i, j, s, lti: LtiReducedModel) -> complex:
    """dP_L in area j -> eta_i."""
    s = complex(s)
    _check_pole(s, lti)
    return _bracket(i, j, s, lti) / (lti.tau_prime * s + 1.0)


def transfer_S(i, j, s, lti: LtiReducedModel) -> complex:
    """dP_L in area j -> ACE_i."""
    s = complex(s)
    _check_pole(s, lti)
    ts = lti.tau_prime * s
    return -ts / (ts + 1.0) * _bracket(i, j, s, lti)


def transfer_matrices_state_space(s, lti: LtiReducedModel):
    """T(s) and S(s) from the resolvent: T = (tau' s I + B)^{-1} B, S = B (T - I)."""
    B = lti.B_ace.entries
    R = lemma2_resolvent(lti.tau_prime * complex(s), lti.gamma)
    T = R @ B
    S = B @ (T - np.eye(lti.n))
    return T, S


@dataclass(frozen=True)
class FrequencyResponse:
    omega: np.ndarray
    magnitude: np.ndarray
    phase_deg: np.ndarray
    sup_magnitude: float  # max of grid_sup and hf_limit
    sup_omega: float
    hf_limit: float
    grid_sup: float


def _golden_max(f, a, b, iters=80):
    gr = (np.sqrt(5) - 1) / 2
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def bode_S(i, lti: LtiReducedModel, omega=None, j=None) -> FrequencyResponse:
    """|S_ij(jw)| over a grid, with the supremum refined around the grid maximum.

    The supremum may only be approached as w -> inf, so ``sup_magnitude`` is
    the larger of the refined grid maximum and the high-frequency limit.
    """
    j = i if j is None else j
    if omega is None:
        omega = np.logspace(-4, 2, 2000)
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0) or np.any(np.diff(omega) <= 0):
        raise ValueError("frequency grid must be positive and strictly increasing")
    vals = np.array([transfer_S(i, j, 1j * w, lti) for w in omega])
    mag = np.abs(vals)
    k = int(np.argmax(mag))
    lo = np.log(omega[max(k - 1, 0)])
    hi = np.log(omega[min(k + 1, omega.size - 1)])
    w_star, m_star = _golden_max(lambda lw: abs(transfer_S(i, j, 1j * np.exp(lw), lti)), lo, hi)
    if m_star >= mag[k]:
        sup, sup_w = float(m_star), float(np.exp(w_star))
    else:
        sup, sup_w = float(mag[k]), float(omega[k])
    hf = abs(1.0 + lti.O[i]) if i == j else 0.0
    best, best_w = (sup, sup_w) if sup >= hf else (float(hf), float("inf"))
    return FrequencyResponse(omega=omega, magnitude=mag, phase_deg=np.degrees(np.angle(vals)),
                             sup_magnitude=best, sup_omega=best_w, hf_limit=float(hf),
                             grid_sup=sup)


def _check_peak_domain(O):
    O = np.asarray(O, dtype=float)
    c = 1.0 + O.sum()
    if c <= 0:
        raise ValueError("peak response needs 1 + sum(O) > 0")
    return O, c


def peak_eta(O, i=0) -> float:
    """Closed-form peak estimate for the cross response of eta_i to a unit step elsewhere:
    O_i (1 + S)^(S / (1 + S)) with S = sum(O).

    This closed form does not coincide with the extremum of the LTI step
    response; see :func:`peak_eta_step` for that quantity.
    """
    O, c = _check_peak_domain(np.atleast_1d(O))
    S = c - 1.0
    return float(O[i] * c ** (S / c))


def peak_eta_step(O, i=0) -> float:
    """Extremum of eta_i(t) after a unit step in another area, unsaturated LTI model.

    The cross response is O_i (exp(-x) - exp(-c x)) / (c - 1) with x = t/tau'
    and c = 1 + sum(O); its extremum is O_i c^(-c/(c-1)), or O_i/e at c = 1.
    """
    O, c = _check_peak_domain(np.atleast_1d(O))
    if abs(c - 1.0) < 1e-12:
        return float(O[i] / np.e)
    return float(O[i] * c ** (-c / (c - 1.0)))


def min_sym_eig(d, B) -> float:
    """Smallest eigenvalue of D B + B^T D."""
    DB = np.asarray(d)[:, None] * np.asarray(B)
    return float(np.linalg.eigvalsh(DB + DB.T).min())


def diagonal_certificate(B, bounds=(1e-2, 1e2), max_sweeps=200):
    """Search for positive diagonal d with D B + B^T D positive definite.

    Coordinate search in log(d) maximising the smallest eigenvalue of the
    symmetric part, normalised by max(d). Returns d or None if inconclusive.
    """
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    lo, hi = np.log(bounds[0]), np.log(bounds[1])

    def score(ld):
        d = np.exp(ld)
        return min_sym_eig(d, B) / d.max()

    # start from the better of the uniform and row-scaled guesses
    starts = [np.zeros(n), np.clip(-np.log(np.abs(np.diag(B)) + 1e-12), lo, hi)]
    ld = max(starts, key=score)
    best = score(ld)
    step = 1.0
    for _ in range(max_sweeps):
        improved = False
        for k in range(n):
            for sgn in (1.0, -1.0):
                trial = ld.copy()
                trial[k] = np.clip(trial[k] + sgn * step, lo, hi)
                sc = score(trial)
                if sc > best + 1e-15:
                    ld, best, improved = trial, sc, True
        if not improved:
            step /= 2
            if step < 1e-6:
                break
    return np.exp(ld) if best > 0 else None


def _phi_integral(area, a, b) -> float:
    """Exact integral of phi(xi) - phi(a) for xi from a to b (piecewise linear)."""
    if a == b:
        return 0.0
    lo, hi = min(a, b), max(a, b)
    bp = _breakpoints(area)
    pts = np.concatenate([[lo], bp[(bp > lo) & (bp < hi)], [hi]])
    vals = np.array([phi(p, area) for p in pts]) - phi(a, area)
    integral = float(np.sum((vals[1:] + vals[:-1]) * np.diff(pts)) / 2)
    return integral if b > a else -integral


def lyapunov_V(eta, eta_bar, model, d, tau=None, B=None) -> float:
    """V = 1/2 sum_k d_k tau_k int_{eta_bar_k}^{eta_k} (phi_k(xi) - phi_k(eta_bar_k)) dxi.

    ``B`` (default: the model's B_ace) is checked for D B + B^T D > 0 first.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("certificate entries must be strictly positive")
    if B is None:
        B = build_matrix("ace", model.b_vec, model.beta_vec).entries
    if min_sym_eig(d, B) <= 0:
        raise ValueError("D B + B^T D is not positive definite for the supplied D")
    tau = model.tau_vec if tau is None else np.asarray(tau, dtype=float)
    eta = np.asarray(eta, dtype=float)
    eta_bar = np.asarray(eta_bar, dtype=float)
    total = 0.0
    for k, area in enumerate(model.areas):
        total += d[k] * tau[k] * _phi_integral(area, eta_bar[k], eta[k])
    return 0.5 * total
