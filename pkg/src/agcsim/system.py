"""Multi-area nonlinear frequency model, its equilibria, and identity checks.

Each area is aggregated to one equivalent rotor angle with a swing equation,
each generator to a governor lag followed by a turbine lag, and tie lines to
lossless sine couplings. Measurements of frequency and net interchange pass
through first-order filters before they reach the AGC integrators.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import _kernels as K
from .agc import AgcVariant, allocate_all
from .errors import ConvergenceError, ModelError

OMEGA_S = K.OMEGA_S

TAU_RANGE = (1.0, 10000.0)


@dataclass(frozen=True)
class GeneratorParams:
    droop: float
    u_star: float
    u_min: float
    u_max: float
    alpha: float = 0.0
    participant: bool = False
    T_g: float = 0.2
    T_t: float = 0.5
    name: str = ""


@dataclass(frozen=True)
class AreaParams:
    generators: tuple
    b: float
    D: float = 0.0
    H: float = 6.5
    tau: float = 60.0
    T_f: float = 1.0
    name: str = ""

    @property
    def r_inv(self) -> float:
        return sum(1.0 / g.droop for g in self.generators)

    @property
    def beta(self) -> float:
        """Frequency response characteristic D + sum(1/R)."""
        return self.D + self.r_inv


@dataclass(frozen=True)
class TieLine:
    area_a: int
    area_b: int
    p_max: float = 2.0
    # lossless damping on the speed difference; zero in steady state
    damping: float = 10.0


@dataclass(frozen=True)
class Disturbance:
    time: float
    area: int
    dP: float


class FullState(NamedTuple):
    angle: np.ndarray
    freq: np.ndarray
    freq_filt: np.ndarray
    ni_filt: np.ndarray
    p_gov: np.ndarray
    p_mech: np.ndarray
    eta: np.ndarray


class Measurements(NamedTuple):
    freq: np.ndarray
    ni: np.ndarray
    power: np.ndarray
    u: np.ndarray
    freq_filt: np.ndarray
    ni_filt: np.ndarray
    ace: np.ndarray


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Validated, immutable system with cached per-area and per-unit arrays."""

    areas: tuple
    ties: tuple
    base_mva: float
    scheduled_angles: np.ndarray
    beta_vec: np.ndarray = field(repr=False)
    r_inv_vec: np.ndarray = field(repr=False)
    b_vec: np.ndarray = field(repr=False)
    tau_vec: np.ndarray = field(repr=False)
    gen_area: np.ndarray = field(repr=False)
    u_star: np.ndarray = field(repr=False)
    u_min: np.ndarray = field(repr=False)
    u_max: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    droop: np.ndarray = field(repr=False)
    area_p: np.ndarray = field(repr=False)
    gen_p: np.ndarray = field(repr=False)
    tie_ij: np.ndarray = field(repr=False)
    tie_p: np.ndarray = field(repr=False)

    @property
    def n_areas(self) -> int:
        return len(self.areas)

    @property
    def n_gens(self) -> int:
        return len(self.gen_area)

    @property
    def beta(self) -> float:
        return float(self.beta_vec.sum())

    @property
    def n_states(self) -> int:
        return 5 * self.n_areas + 2 * self.n_gens

    def slices(self) -> FullState:
        N, G = self.n_areas, self.n_gens
        return FullState(
            angle=slice(0, N),
            freq=slice(N, 2 * N),
            freq_filt=slice(2 * N, 3 * N),
            ni_filt=slice(3 * N, 4 * N),
            p_gov=slice(4 * N, 4 * N + G),
            p_mech=slice(4 * N + G, 4 * N + 2 * G),
            eta=slice(4 * N + 2 * G, 5 * N + 2 * G),
        )

    def unpack(self, x) -> FullState:
        x = np.asarray(x, dtype=float)
        return FullState(*(x[..., s] for s in self.slices()))

    def pack(self, state: FullState) -> np.ndarray:
        x = np.empty(self.n_states)
        for s, v in zip(self.slices(), state):
            x[s] = v
        return x

    def schedule_state(self) -> np.ndarray:
        """The scheduled operating point: zero deviations, eta = 0."""
        x = np.zeros(self.n_states)
        sl = self.slices()
        x[sl.angle] = self.scheduled_angles
        x[sl.p_gov] = self.u_star
        x[sl.p_mech] = self.u_star
        return x

    def inert_filter_idx(self) -> set:
        """Filter states of areas with T_f = 0; they carry no dynamics."""
        sl = self.slices()
        out = set()
        for k in np.flatnonzero(self.area_p[:, 4] == 0):
            out.update({sl.freq_filt.start + int(k), sl.ni_filt.start + int(k)})
        return out

    def gens_of(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.gen_area == k)

    def with_agc(self, b=None, tau=None) -> "SystemModel":
        """Copy of the model with new bias and/or AGC time constants."""
        areas = list(self.areas)
        for k, a in enumerate(areas):
            kw = {}
            if b is not None:
                kw["b"] = float(b[k])
            if tau is not None:
                kw["tau"] = float(tau[k])
            areas[k] = replace(a, **kw)
        return build_system(areas, self.ties, self.base_mva, self.scheduled_angles)


def _positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ModelError("must be positive", field=name)


def _check_area(k, area: AreaParams):
    p = f"areas[{k}]"
    if not area.generators:
        raise ModelError("area has no generators", field=f"{p}.generators")
    if not np.isfinite(area.b) or area.b <= 0:
        raise ModelError("frequency_bias must be positive", field=f"{p}.b")
    if not np.isfinite(area.D) or area.D < 0:
        raise ModelError("load_damping must be nonnegative", field=f"{p}.D")
    _positive(area.H, f"{p}.H")
    if not TAU_RANGE[0] <= area.tau <= TAU_RANGE[1]:
        raise ModelError(f"agc_time_constant must lie in [{TAU_RANGE[0]:g}, {TAU_RANGE[1]:g}] s",
                         field=f"{p}.tau")
    if not np.isfinite(area.T_f) or area.T_f < 0:
        raise ModelError("measurement_filter must be nonnegative", field=f"{p}.T_f")
    alpha_sum = 0.0
    for i, g in enumerate(area.generators):
        q = f"{p}.generators[{i}]"
        _positive(g.droop, f"{q}.droop")
        _positive(g.T_g, f"{q}.T_g")
        _positive(g.T_t, f"{q}.T_t")
        if not g.u_min <= g.u_star <= g.u_max:
            raise ModelError("limits must satisfy u_min <= u_star <= u_max", field=f"{q}.u_star")
        if g.alpha < 0:
            raise ModelError("participation factor must be nonnegative", field=f"{q}.alpha")
        if not g.participant and g.alpha != 0:
            raise ModelError("non-participating unit must have alpha = 0", field=f"{q}.alpha")
        alpha_sum += g.alpha if g.participant else 0.0
    if abs(alpha_sum - 1.0) > 1e-9:
        raise ModelError(f"participation factors sum to {alpha_sum:g}, expected 1",
                         field=f"{p}.alpha")
    if area.beta <= 0:
        raise ModelError("frequency response characteristic must be positive", field=f"{p}.beta")


def _connected(n, ties) -> bool:
    seen = {0}
    frontier = [0]
    adj = {k: set() for k in range(n)}
    for t in ties:
        adj[t.area_a].add(t.area_b)
        adj[t.area_b].add(t.area_a)
    while frontier:
        k = frontier.pop()
        for j in adj[k] - seen:
            seen.add(j)
            frontier.append(j)
    return len(seen) == n


def build_system(areas: Sequence[AreaParams], ties: Sequence[TieLine], base_mva: float = 900.0,
                 scheduled_angles=None) -> SystemModel:
    """Validate parameters and cache the derived arrays.

    Raises ModelError on nonpositive parameters, bad participation factors or
    a disconnected tie graph.
    """
    areas = tuple(a if isinstance(a.generators, tuple) else replace(a, generators=tuple(a.generators))
                  for a in areas)
    ties = tuple(ties)
    if not areas:
        raise ModelError("at least one area is required", field="areas")
    _positive(base_mva, "base_mva")
    for k, a in enumerate(areas):
        _check_area(k, a)
    n = len(areas)
    for t_idx, t in enumerate(ties):
        q = f"ties[{t_idx}]"
        if not (0 <= t.area_a < n and 0 <= t.area_b < n):
            raise ModelError("tie endpoint is not a configured area", field=q)
        if t.area_a == t.area_b:
            raise ModelError("tie must join two different areas", field=q)
        _positive(t.p_max, f"{q}.p_max")
        if t.damping < 0:
            raise ModelError("damping must be nonnegative", field=f"{q}.damping")
    if not _connected(n, ties):
        raise ModelError("tie graph does not connect all areas", field="ties")

    if scheduled_angles is None:
        scheduled_angles = np.zeros(n)
    scheduled_angles = np.array(scheduled_angles, dtype=float)
    if scheduled_angles.shape != (n,):
        raise ModelError("one scheduled angle per area is required", field="scheduled_angles")

    gens = [(k, g) for k, a in enumerate(areas) for g in a.generators]
    gen_area = np.array([k for k, _ in gens], dtype=np.int64)
    u_star = np.array([g.u_star for _, g in gens])
    u_min = np.array([g.u_min for _, g in gens])
    u_max = np.array([g.u_max for _, g in gens])
    alpha = np.array([g.alpha if g.participant else 0.0 for _, g in gens])
    droop = np.array([g.droop for _, g in gens])
    gen_p = np.column_stack([1.0 / droop, [g.T_g for _, g in gens], [g.T_t for _, g in gens],
                             u_star, u_min, u_max, alpha])
    area_p = np.array([[a.H, a.D, a.b, a.tau, a.T_f] for a in areas])
    tie_ij = np.array([[t.area_a, t.area_b] for t in ties], dtype=np.int64).reshape(-1, 2)
    tie_p = np.array([[t.p_max, t.damping,
                       np.sin(scheduled_angles[t.area_a] - scheduled_angles[t.area_b])]
                      for t in ties]).reshape(-1, 3)
    for arr in (scheduled_angles, gen_area, u_star, u_min, u_max, alpha, droop, gen_p, area_p,
                tie_ij, tie_p):
        arr.setflags(write=False)

    def ro(v):
        v = np.array(v, dtype=float)
        v.setflags(write=False)
        return v

    return SystemModel(
        areas=areas, ties=ties, base_mva=float(base_mva), scheduled_angles=scheduled_angles,
        beta_vec=ro([a.beta for a in areas]), r_inv_vec=ro([a.r_inv for a in areas]),
        b_vec=ro([a.b for a in areas]), tau_vec=ro([a.tau for a in areas]),
        gen_area=gen_area, u_star=u_star, u_min=u_min, u_max=u_max, alpha=alpha, droop=droop,
        area_p=area_p, gen_p=gen_p, tie_ij=tie_ij, tie_p=tie_p,
    )


def _mode(variant) -> int:
    if variant is None or variant == "primary_only":
        return K.MODE_PRIMARY
    variant = AgcVariant(variant)
    return K.MODE_SIMPLIFIED if variant is AgcVariant.SIMPLIFIED else K.MODE_TEXTBOOK


def _rhs(model, x, dpl, mode, u_fixed=None):
    out = np.empty(model.n_states)
    use_fixed = u_fixed is not None
    uf = np.asarray(u_fixed, dtype=float) if use_fixed else model.u_star
    K.full_rhs(x, dpl, mode, model.area_p, model.gen_area, model.gen_p, model.tie_ij,
               model.tie_p, uf, use_fixed, out)
    return out


def _check_state(model, x):
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (model.n_states,):
        raise ValueError(f"state has shape {x.shape}, model expects ({model.n_states},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("state contains non-finite entries")
    return x


def full_derivatives(model: SystemModel, x, dpl, variant=None, u=None) -> np.ndarray:
    """dx/dt of the closed loop.

    ``variant`` None (or "primary_only") freezes the AGC integrators. ``u``
    overrides the allocation with explicit load references per generator.
    """
    x = _check_state(model, x)
    dpl = np.asarray(dpl, dtype=float)
    if dpl.shape != (model.n_areas,):
        raise ValueError(f"disturbance has shape {dpl.shape}, expected ({model.n_areas},)")
    return _rhs(model, x, dpl, _mode(variant), u)


def tie_flows(model, x) -> np.ndarray:
    """Net flow out of each area, including the damping term; x may be (..., n)."""
    x = np.asarray(x, dtype=float)
    sl = model.slices()
    ang = x[..., sl.angle]
    f = x[..., sl.freq]
    ni = np.zeros(x.shape[:-1] + (model.n_areas,))
    for t, (a, b) in enumerate(model.tie_ij):
        pmax, kd, s0 = model.tie_p[t]
        flow = pmax * (np.sin(ang[..., a] - ang[..., b]) - s0) + kd * (f[..., a] - f[..., b])
        ni[..., a] += flow
        ni[..., b] -= flow
    return ni


def sine_flows(model, x) -> np.ndarray:
    """Synchronising (sine) part of the net outflow only."""
    x = np.asarray(x, dtype=float)
    ang = x[..., model.slices().angle]
    out = np.zeros(x.shape[:-1] + (model.n_areas,))
    for t, (a, b) in enumerate(model.tie_ij):
        flow = model.tie_p[t, 0] * (np.sin(ang[..., a] - ang[..., b]) - model.tie_p[t, 2])
        out[..., a] += flow
        out[..., b] -= flow
    return out


def measurements(model: SystemModel, x, u=None) -> Measurements:
    """Frequency, net interchange, electric power and filtered channels.

    Works on a single state or a stack of states with shape (..., n_states).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n_states:
        raise ValueError(f"state length {x.shape[-1]} does not match model ({model.n_states})")
    st = model.unpack(x)
    ni = tie_flows(model, x)
    if u is None:
        u = allocate_all(model, st.eta)
    df_gen = st.freq[..., model.gen_area]
    power = u - df_gen / model.droop
    tf = model.area_p[:, 4]
    f_meas = np.where(tf > 0, st.freq_filt, st.freq)
    ni_meas = np.where(tf > 0, st.ni_filt, ni)
    ace = ni_meas + model.b_vec * f_meas
    return Measurements(freq=st.freq, ni=ni, power=power, u=u, freq_filt=f_meas,
                        ni_filt=ni_meas, ace=ace)


def newton_solve(fun, z0, tol=1e-10, max_iter=50, fd_step=1e-6):
    """Newton iteration with a central-difference Jacobian.

    Returns (z, residual_norm); raises ConvergenceError when the 2-norm of the
    residual is still above ``tol`` after ``max_iter`` iterations.
    """
    z = np.array(z0, dtype=float)
    r = fun(z)
    res = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if res <= tol:
            return z, res
        n = z.size
        J = np.empty((r.size, n))
        for j in range(n):
            zp = z.copy()
            zm = z.copy()
            zp[j] += fd_step
            zm[j] -= fd_step
            J[:, j] = (fun(zp) - fun(zm)) / (2 * fd_step)
        try:
            dz = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Jacobian: {exc}", residual=res) from exc
        z = z + dz
        r = fun(z)
        res = float(np.linalg.norm(r))
    if res <= tol:
        return z, res
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations "
                           f"(residual {res:.3e})", residual=res)


def _equilibrium_guess(model, u, dpl, eta=None):
    sl = model.slices()
    x = model.schedule_state()
    agg = np.bincount(model.gen_area, weights=u - model.u_star, minlength=model.n_areas)
    m = agg - dpl
    df = m.sum() / model.beta
    ni = (model.beta_vec.sum() - model.beta_vec) / model.beta * m \
        - model.beta_vec / model.beta * (m.sum() - m)
    x[sl.freq] = df
    x[sl.freq_filt] = df
    x[sl.ni_filt] = ni
    x[sl.p_gov] = u - df / model.droop
    x[sl.p_mech] = x[sl.p_gov]
    if eta is not None:
        x[sl.eta] = eta
    return x


def _solve(model, dpl, mode, u_fixed, x0, with_eta, tol, max_iter):
    sl = model.slices()
    n = model.n_states
    N = model.n_areas
    ang0 = sl.angle.start
    eta_idx = np.arange(sl.eta.start, sl.eta.stop)
    # unknowns: everything except the reference angle (and eta when frozen)
    inert = model.inert_filter_idx()
    frozen = set() if with_eta else set(eta_idx.tolist())
    unknown = np.array([i for i in range(n) if i != ang0 and i not in frozen | inert])
    # equations: non-angle derivatives, angle drift relative to area 1
    eq_rows = np.array([i for i in range(N, n) if i not in frozen | inert])
    base = np.array(x0, dtype=float)

    def resid(z):
        x = base.copy()
        x[unknown] = z
        f = _rhs(model, x, dpl, mode, u_fixed)
        drift = f[1:N] - f[0]
        return np.concatenate([drift, f[eq_rows]])

    z, res = newton_solve(resid, base[unknown], tol=tol, max_iter=max_iter)
    x = base.copy()
    x[unknown] = z
    ang = x[sl.angle]
    for t, (a, b) in enumerate(model.tie_ij):
        if abs(ang[a] - ang[b]) >= np.pi / 2:
            raise ConvergenceError(
                f"tie {a + 1}-{b + 1} angle difference {ang[a] - ang[b]:.3f} rad beyond pi/2 "
                "(loss of synchronism)", residual=res)
    return x


def steady_state(model: SystemModel, u=None, dpl=None, eta=0.0, tol=1e-10, max_iter=50) -> np.ndarray:
    """Equilibrium with AGC frozen for fixed load references ``u``.

    ``u`` defaults to the schedule u*. Angles are returned with area 1 at its
    scheduled value; when the settled frequency is nonzero all angles drift
    together, which is the only non-stationary direction.
    """
    u = model.u_star.copy() if u is None else np.asarray(u, dtype=float)
    dpl = np.zeros(model.n_areas) if dpl is None else np.asarray(dpl, dtype=float)
    if u.shape != (model.n_gens,):
        raise ValueError(f"u has shape {u.shape}, expected ({model.n_gens},)")
    x0 = _equilibrium_guess(model, u, dpl, eta=np.broadcast_to(eta, (model.n_areas,)))
    return _solve(model, dpl, K.MODE_PRIMARY, u, x0, False, tol, max_iter)


def closed_loop_equilibrium(model: SystemModel, dpl, variant=AgcVariant.SIMPLIFIED,
                            tol=1e-10, max_iter=50) -> np.ndarray:
    """Equilibrium of plant plus AGC integrators (eta solved as well)."""
    from .reduced import equilibrium as eta_equilibrium

    dpl = np.asarray(dpl, dtype=float)
    eta = eta_equilibrium(dpl, model)
    u = allocate_all(model, eta)
    x0 = _equilibrium_guess(model, u, dpl, eta=eta)
    return _solve(model, dpl, _mode(variant), None, x0, True, tol, max_iter)


@dataclass(frozen=True)
class IdentityReport:
    violations: dict
    tol: float = 1e-8

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.violations.values())


def verify_steady_state_identities(model: SystemModel, x, dpl, u=None, tol=1e-8) -> IdentityReport:
    """Max absolute violation of synchronism, interchange balance, area balance,
    governor statics and outflow = net interchange."""
    x = np.asarray(x, dtype=float)
    dpl = np.asarray(dpl, dtype=float)
    st = model.unpack(x)
    if u is None:
        u = allocate_all(model, st.eta)
    ni = tie_flows(model, x)
    p_out = sine_flows(model, x)
    df = st.freq
    gen_dev = np.bincount(model.gen_area, weights=st.p_mech - model.u_star, minlength=model.n_areas)
    D = model.area_p[:, 1]
    statics = st.p_mech - (u - df[model.gen_area] / model.droop)
    v = {
        "synchronism": float(df.max() - df.min()),
        "interchange_balance": float(abs(ni.sum())),
        "area_balance": float(np.max(np.abs(gen_dev - D * df - dpl - p_out))),
        "governor_statics": float(np.max(np.abs(statics))),
        "outflow_equals_ni": float(np.max(np.abs(p_out - ni))),
    }
    return IdentityReport(violations=v, tol=tol)


def frozen_jacobian(model: SystemModel, x, dpl, u=None, h=1e-6) -> np.ndarray:
    """Central-difference Jacobian of the plant with the AGC states removed."""
    x = _check_state(model, x)
    dpl = np.asarray(dpl, dtype=float)
    if u is None:
        u = allocate_all(model, model.unpack(x).eta)
    inert = model.inert_filter_idx()
    idx = np.array([i for i in range(model.slices().eta.start) if i not in inert])
    J = np.empty((idx.size, idx.size))
    for c, j in enumerate(idx):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, c] = (_rhs(model, xp, dpl, K.MODE_PRIMARY, u)[idx]
                   - _rhs(model, xm, dpl, K.MODE_PRIMARY, u)[idx]) / (2 * h)
    return J
