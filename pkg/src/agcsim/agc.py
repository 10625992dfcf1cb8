"""Area control error, the two AGC integrator laws, and unit allocation."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InfeasibleError, ModelError


class AgcVariant(str, Enum):
    """Which integrator law drives eta.

    SIMPLIFIED integrates the ACE alone; TEXTBOOK adds the electric power
    feedback term summed over every unit in the area.
    """

    SIMPLIFIED = "simplified"
    TEXTBOOK = "textbook"


@dataclass(frozen=True)
class AceSample:
    value: np.ndarray
    ni: np.ndarray
    bias_term: np.ndarray


def compute_ace(ni, df, b) -> AceSample:
    """ACE_k = dNI_k + b_k * df_k, componentwise."""
    b = np.asarray(b, dtype=float)
    if np.any(b <= 0):
        raise ModelError("frequency_bias must be positive", field="b")
    ni = np.asarray(ni, dtype=float)
    bias_term = b * np.asarray(df, dtype=float)
    return AceSample(value=ni + bias_term, ni=ni, bias_term=bias_term)


def controller_rhs(variant, ace_k, tau_k, u_k=None, p_k=None) -> float:
    """Time derivative of eta_k for one area.

    For the textbook law ``u_k`` and ``p_k`` must cover every generator in the
    area, participating or not.
    """
    if tau_k <= 0:
        raise ModelError("agc_time_constant must be positive", field="tau")
    variant = AgcVariant(variant)
    if variant is AgcVariant.SIMPLIFIED:
        return -ace_k / tau_k
    if u_k is None or p_k is None:
        raise ValueError("textbook AGC needs u and P for every generator in the area")
    u_k = np.asarray(u_k, dtype=float)
    p_k = np.asarray(p_k, dtype=float)
    if u_k.shape != p_k.shape:
        raise ValueError(f"u and P channel counts differ: {u_k.shape} vs {p_k.shape}")
    return (-ace_k - float(np.sum(u_k - p_k))) / tau_k


def allocate(eta_k, generators) -> np.ndarray:
    """Load references for every unit of one area.

    Participants get ``clamp(u* + alpha * eta_k)``; the rest stay at u*.
    """
    out = np.empty(len(generators))
    for i, g in enumerate(generators):
        if g.participant:
            out[i] = min(max(g.u_star + g.alpha * eta_k, g.u_min), g.u_max)
        else:
            out[i] = g.u_star
    return out


def allocate_all(model, eta) -> np.ndarray:
    """Vectorised allocation over every generator; ``eta`` may be (..., N)."""
    eta = np.asarray(eta, dtype=float)
    u = model.u_star + model.alpha * eta[..., model.gen_area]
    return np.clip(u, model.u_min, model.u_max)


def capacity_interval(area) -> tuple[float, float]:
    """Open interval of net-load steps the participants of ``area`` can absorb."""
    lo = sum(g.u_min - g.u_star for g in area.generators if g.participant)
    hi = sum(g.u_max - g.u_star for g in area.generators if g.participant)
    return lo, hi


def check_feasibility(dpl, model) -> np.ndarray:
    """Per-area verdict: dP^L_k strictly inside the capacity interval."""
    dpl = np.asarray(dpl, dtype=float)
    verdict = np.empty(model.n_areas, dtype=bool)
    for k, area in enumerate(model.areas):
        lo, hi = capacity_interval(area)
        verdict[k] = lo < dpl[k] < hi
    return verdict


def require_feasible(dpl, model):
    ok = check_feasibility(dpl, model)
    if not ok.all():
        bad = [int(k) for k in np.flatnonzero(~ok)]
        raise InfeasibleError(
            "net-load deviation outside regulation capacity in area(s) "
            + ", ".join(str(k + 1) for k in bad),
            areas=bad,
        )
