"""Slow time-scale AGC models.

Once primary control has settled, the plant is replaced by its steady-state
map and only the AGC signals eta remain as states::

    tau * deta/dt = -B (phi(eta) - dP_L)
    ACE           =  B_ace (phi(eta) - dP_L)

with B = B_ace for the simplified integrator and B = B_txt for the textbook
one. Both matrices are rank-one perturbations of the identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .agc import AgcVariant, capacity_interval
from .errors import InfeasibleError


@dataclass(frozen=True, eq=False)
class InterconnectionMatrix:
    entries: np.ndarray
    variant: str
    b: np.ndarray
    beta: np.ndarray
    r_inv: Optional[np.ndarray] = None

    @property
    def gamma(self) -> np.ndarray:
        """The vector g with entries = I - g 1^T."""
        g = (self.beta - self.b) / self.beta.sum()
        if self.variant == "txt":
            g = g - self.r_inv / self.beta.sum()
        return g

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def build_matrix(variant, b, beta_vec, r_inv=None) -> InterconnectionMatrix:
    """B_ace or B_txt, entry (k, j) = (delta_kj * beta + b_k [+ 1/R_k] - beta_k) / beta."""
    variant = {"ace": "ace", "simplified": "ace", "txt": "txt", "textbook": "txt"}[
        getattr(variant, "value", variant)]
    b = np.asarray(b, dtype=float)
    beta_vec = np.asarray(beta_vec, dtype=float)
    if b.shape != beta_vec.shape or b.ndim != 1:
        raise ValueError(f"bias {b.shape} and FRC {beta_vec.shape} must be equal-length vectors")
    if np.any(b <= 0) or np.any(beta_vec <= 0):
        raise ValueError("bias and FRC entries must be positive")
    off = b - beta_vec
    if variant == "txt":
        if r_inv is None:
            raise ValueError("the textbook matrix needs the aggregate droop gains 1/R_k")
        r_inv = np.asarray(r_inv, dtype=float)
        if r_inv.shape != b.shape:
            raise ValueError(f"1/R has shape {r_inv.shape}, expected {b.shape}")
        off = off + r_inv
    beta = beta_vec.sum()
    n = b.size
    entries = (np.eye(n) * beta + off[:, None] * np.ones(n)) / beta
    entries.setflags(write=False)
    return InterconnectionMatrix(entries=entries, variant=variant, b=b, beta=beta_vec,
                                 r_inv=None if r_inv is None else np.asarray(r_inv, dtype=float))


def model_matrix(model, variant) -> InterconnectionMatrix:
    variant = AgcVariant(variant)
    if variant is AgcVariant.TEXTBOOK:
        return build_matrix("txt", model.b_vec, model.beta_vec, model.r_inv_vec)
    return build_matrix("ace", model.b_vec, model.beta_vec)


def overbias(b, beta_vec) -> np.ndarray:
    """O_k = (b_k - beta_k) / beta."""
    b = np.asarray(b, dtype=float)
    beta_vec = np.asarray(beta_vec, dtype=float)
    return (b - beta_vec) / beta_vec.sum()


def phi(eta_k, area):
    """Aggregate AGC-driven deviation of one area: sum of clamped allocations minus u*."""
    eta_k = np.asarray(eta_k, dtype=float)
    total = np.zeros_like(eta_k)
    for g in area.generators:
        if g.participant:
            total = total + np.clip(g.u_star + g.alpha * eta_k, g.u_min, g.u_max) - g.u_star
    return total if total.ndim else float(total)


def phi_vector(eta, model) -> np.ndarray:
    """phi applied per area; ``eta`` may be (..., N)."""
    eta = np.asarray(eta, dtype=float)
    u = np.clip(model.u_star + model.alpha * eta[..., model.gen_area], model.u_min, model.u_max)
    dev = u - model.u_star
    out = np.zeros(eta.shape)
    for k in range(model.n_areas):
        out[..., k] = dev[..., model.gen_area == k].sum(axis=-1)
    return out


def preimage_interval(area) -> tuple[float, float]:
    """Open interval of eta_k on which phi_k is strictly increasing."""
    lo = min((g.u_min - g.u_star) / g.alpha for g in area.generators if g.participant and g.alpha > 0)
    hi = max((g.u_max - g.u_star) / g.alpha for g in area.generators if g.participant and g.alpha > 0)
    return lo, hi


def _breakpoints(area) -> np.ndarray:
    pts = set()
    for g in area.generators:
        if g.participant and g.alpha > 0:
            pts.add((g.u_min - g.u_star) / g.alpha)
            pts.add((g.u_max - g.u_star) / g.alpha)
    return np.array(sorted(pts))


def invert_phi(target, area) -> float:
    """The unique eta in the preimage interval with phi(eta) = target.

    phi is piecewise linear, so walking its breakpoints gives the answer exactly.
    """
    lo, hi = capacity_interval(area)
    if not lo < target < hi:
        raise InfeasibleError(f"target {target:g} outside capacity interval ({lo:g}, {hi:g})")
    bp = _breakpoints(area)
    vals = np.array([phi(e, area) for e in bp])
    j = int(np.searchsorted(vals, target, side="right"))
    # vals[j-1] <= target < vals[j]; flat pieces lie outside the preimage interval
    e0, e1 = bp[j - 1], bp[j]
    v0, v1 = vals[j - 1], vals[j]
    eta = e0 + (target - v0) * (e1 - e0) / (v1 - v0)
    # polish against rounding in the interpolation
    slope = (v1 - v0) / (e1 - e0)
    return float(eta + (target - phi(eta, area)) / slope)


def equilibrium(dpl, model) -> np.ndarray:
    """eta_bar with phi(eta_bar) = dP_L in every area."""
    dpl = np.asarray(dpl, dtype=float)
    out = np.empty(model.n_areas)
    bad = []
    for k, area in enumerate(model.areas):
        try:
            out[k] = invert_phi(dpl[k], area)
        except InfeasibleError:
            bad.append(k)
    if bad:
        raise InfeasibleError("net-load deviation outside regulation capacity in area(s) "
                              + ", ".join(str(k + 1) for k in bad), areas=bad)
    return out


def reduced_rhs(variant, eta, dpl, tau, model) -> np.ndarray:
    """deta/dt = -tau^{-1} B (phi(eta) - dP_L)."""
    B = model_matrix(model, variant).entries
    eta = np.asarray(eta, dtype=float)
    r = phi_vector(eta, model) - np.asarray(dpl, dtype=float)
    return -(r @ B.T) / np.asarray(tau, dtype=float)


def reduced_rhs_linear(B, eta, dpl, tau) -> np.ndarray:
    """Same law with phi = identity, for a bare interconnection matrix."""
    B = np.asarray(B, dtype=float)
    return -(B @ (np.asarray(eta, dtype=float) - np.asarray(dpl, dtype=float))) / np.asarray(tau)


def reduced_ace(eta, dpl, b_ace, model=None) -> np.ndarray:
    """ACE = B_ace (phi(eta) - dP_L); phi is the identity when ``model`` is None."""
    B = np.asarray(b_ace, dtype=float)
    eta = np.asarray(eta, dtype=float)
    ph = eta if model is None else phi_vector(eta, model)
    return (ph - np.asarray(dpl, dtype=float)) @ B.T


def steady_state_freq_and_NI(u_dev, dpl, beta_vec):
    """Settled frequency and net interchange for aggregate unit deviations ``u_dev``.

    Inputs may carry leading batch dimensions (..., N).
    """
    beta_vec = np.asarray(beta_vec, dtype=float)
    m = np.asarray(u_dev, dtype=float) - np.asarray(dpl, dtype=float)
    beta = beta_vec.sum()
    total = m.sum(axis=-1, keepdims=True)
    ni = (beta - beta_vec) / beta * m - beta_vec / beta * (total - m)
    df = total[..., 0] / beta
    return df, ni


def phi_slope(eta, model) -> np.ndarray:
    """d phi_k / d eta_k: summed factors of participants strictly inside their limits."""
    eta = np.asarray(eta, dtype=float)
    u = model.u_star + model.alpha * eta[model.gen_area]
    free = (u > model.u_min) & (u < model.u_max)
    return np.bincount(model.gen_area, weights=model.alpha * free, minlength=model.n_areas)


def reduced_eigenvalues(model, variant=AgcVariant.SIMPLIFIED, eta=None) -> np.ndarray:
    """Eigenvalues of -tau^{-1} B diag(phi'(eta)); phi' = 1 when ``eta`` is None."""
    B = model_matrix(model, variant).entries
    if eta is not None:
        B = B * phi_slope(eta, model)[None, :]
    return np.linalg.eigvals(-B / model.tau_vec[:, None])


def _kernel_args(model, variant):
    return model_matrix(model, variant).entries.copy(), model.tau_vec.copy(), model.gen_area, model.gen_p


def rhs_compiled(model, variant, eta, dpl) -> np.ndarray:
    """The compiled reduced right-hand side (what the integrator uses)."""
    B, tau, ga, gp = _kernel_args(model, variant)
    out = np.empty(model.n_areas)
    K.reduced_rhs(np.asarray(eta, dtype=float), np.asarray(dpl, dtype=float), B, tau, ga, gp, out)
    return out
