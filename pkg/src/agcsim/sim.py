"""Time-domain runs of the full closed loop and of the reduced models.

Both integrators are classic fixed-step RK4. Disturbances are net-load steps;
integration restarts exactly at each step time, so no step straddles a
discontinuity and reruns are bit-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels as K
from .agc import AgcVariant, allocate_all, require_feasible
from .analysis import LtiReducedModel, dominant_eigenvalue, peak_eta, peak_eta_step
from .errors import SimulationDiverged
from .reduced import (equilibrium, model_matrix, phi_vector, reduced_ace,
                      reduced_eigenvalues, steady_state_freq_and_NI)
from .system import (AreaParams, Disturbance, GeneratorParams, SystemModel, TieLine,
                     build_system, frozen_jacobian, measurements, _mode)

STEP_MW = 50.0
BASE_MVA = 900.0
STEP_PU = STEP_MW / BASE_MVA


@dataclass(frozen=True)
class Scenario:
    horizon: float
    disturbances: tuple = ()
    dt_full: float = 0.01
    dt_reduced: float = 0.1
    variant: AgcVariant = AgcVariant.SIMPLIFIED
    agc_enabled: bool = True
    record_interval: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", AgcVariant(self.variant))
        object.__setattr__(self, "disturbances",
                           tuple(sorted(self.disturbances, key=lambda d: d.time)))
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0 < self.dt_full <= self.dt_reduced:
            raise ValueError("need 0 < dt_full <= dt_reduced")
        for d in self.disturbances:
            if not 0 <= d.time <= self.horizon:
                raise ValueError(f"disturbance time {d.time} outside [0, {self.horizon}]")
            if not np.isfinite(d.dP):
                raise ValueError("disturbance size must be finite")
        if self.record_interval is not None and self.record_interval < self.dt_full:
            raise ValueError("record_interval must be at least dt_full")

    @property
    def sample_dt(self) -> float:
        return self.record_interval if self.record_interval is not None else self.dt_reduced

    @property
    def event_times(self) -> tuple:
        return tuple(sorted({d.time for d in self.disturbances}))

    def load_profile(self, n_areas):
        """Piecewise-constant disturbance: list of (t_start, t_end, dP vector)."""
        bounds = [0.0] + [t for t in self.event_times if 0 < t < self.horizon] + [self.horizon]
        segs = []
        for t0, t1 in zip(bounds[:-1], bounds[1:]):
            dpl = np.zeros(n_areas)
            for d in self.disturbances:
                if d.time <= t0:
                    dpl[d.area] += d.dP
            segs.append((t0, t1, dpl))
        return segs

    def final_load(self, n_areas) -> np.ndarray:
        return self.load_profile(n_areas)[-1][2]


@dataclass
class TimeSeries:
    time: np.ndarray
    channels: dict
    events: tuple = ()
    states: Optional[np.ndarray] = field(default=None, repr=False)

    def __getitem__(self, name) -> np.ndarray:
        return self.channels[name]

    def __len__(self):
        return self.time.size

    def names(self):
        return list(self.channels)

    def to_csv(self, path, channels=None):
        names = self.names() if channels is None else list(channels)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s"] + names)
            cols = [self.time] + [self.channels[n] for n in names]
            for row in zip(*cols):
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path, events=()):
        with open(path, newline="", encoding="utf-8") as fh:
            r = csv.reader(fh)
            header = next(r)
            data = np.array([[float(v) for v in row] for row in r]).reshape(-1, len(header))
        return cls(time=data[:, 0], channels={h: data[:, i] for i, h in enumerate(header) if i},
                   events=tuple(events))


def _record_grid(scenario):
    n = int(np.floor(scenario.horizon / scenario.sample_dt + 1e-9))
    grid = np.arange(1, n + 1) * scenario.sample_dt
    # make sure the horizon and every event time are sampled
    extra = [t for t in scenario.event_times if t > 0] + [scenario.horizon]
    grid = np.unique(np.concatenate([grid, extra]))
    return grid[grid <= scenario.horizon + 1e-12]


def _gen_labels(model):
    labels = []
    for k, area in enumerate(model.areas):
        for i, _ in enumerate(area.generators):
            labels.append(f"gen{k + 1}.{i + 1}")
    return labels


def _channels(model, freq, ni, ace, eta, u, power):
    ch = {}
    N = model.n_areas
    for k in range(N):
        p = f"area{k + 1}."
        ch[p + "freq"] = freq[:, k]
        ch[p + "ni"] = ni[:, k]
        ch[p + "ace"] = ace[:, k]
        ch[p + "eta"] = eta[:, k]
    for g, label in enumerate(_gen_labels(model)):
        ch[label + ".u"] = u[:, g]
        ch[label + ".p"] = power[:, g]
    return ch


def _check_feasible(model, scenario):
    if scenario.agc_enabled:
        for _, _, dpl in scenario.load_profile(model.n_areas):
            require_feasible(dpl, model)


def integrate_full(model: SystemModel, scenario: Scenario, x0=None, keep_states=False) -> TimeSeries:
    """RK4 run of the nonlinear closed loop from the scheduled equilibrium."""
    _check_feasible(model, scenario)
    mode = _mode(scenario.variant if scenario.agc_enabled else None)
    x = model.schedule_state() if x0 is None else np.array(x0, dtype=float)
    grid = _record_grid(scenario)
    rec_t = np.empty(grid.size)
    rec_x = np.empty((grid.size, model.n_states))
    ptr = 0
    for t0, t1, dpl in scenario.load_profile(model.n_areas):
        ptr, status, t_fail = K.rk4_full_segment(
            x, t0, t1, scenario.dt_full, dpl, mode, model.area_p, model.gen_area, model.gen_p,
            model.tie_ij, model.tie_p, model.u_star, False, grid, rec_t, rec_x, ptr)
        if status != K.STATUS_OK:
            raise SimulationDiverged(t_fail)
    X = np.vstack([model.schedule_state() if x0 is None else np.asarray(x0, float), rec_x[:ptr]])
    t = np.concatenate([[0.0], rec_t[:ptr]])
    m = measurements(model, X)
    eta = model.unpack(X).eta
    ts = TimeSeries(time=t, channels=_channels(model, m.freq, m.ni, m.ace, eta, m.u, m.power),
                    events=scenario.event_times, states=X if keep_states else None)
    return ts


def _load_at(scenario, n_areas, t):
    """Net-load vector in effect at each time in ``t`` (right-continuous)."""
    out = np.zeros((t.size, n_areas))
    for d in scenario.disturbances:
        out[t >= d.time - 1e-12, d.area] += d.dP
    return out


def integrate_reduced(model: SystemModel, scenario: Scenario, eta0=None) -> TimeSeries:
    """RK4 run of the reduced model; algebraic channels from the steady-state map."""
    _check_feasible(model, scenario)
    eta = np.zeros(model.n_areas) if eta0 is None else np.array(eta0, dtype=float)
    eta_init = eta.copy()
    grid = _record_grid(scenario)
    rec_t = np.empty(grid.size)
    rec_x = np.empty((grid.size, model.n_areas))
    ptr = 0
    B = model_matrix(model, scenario.variant).entries.copy()
    tau = model.tau_vec.copy()
    for t0, t1, dpl in scenario.load_profile(model.n_areas):
        if scenario.agc_enabled:
            ptr, status, t_fail = K.rk4_reduced_segment(
                eta, t0, t1, scenario.dt_reduced, dpl, B, tau, model.gen_area, model.gen_p,
                grid, rec_t, rec_x, ptr)
            if status != K.STATUS_OK:
                raise SimulationDiverged(t_fail)
        else:
            sel = (grid > t0 + 1e-12) & (grid <= t1 + 1e-12)
            n = int(sel.sum())
            rec_t[ptr:ptr + n] = grid[sel]
            rec_x[ptr:ptr + n] = eta
            ptr += n
    t = np.concatenate([[0.0], rec_t[:ptr]])
    E = np.vstack([eta_init, rec_x[:ptr]])
    dpl_t = _load_at(scenario, model.n_areas, t)
    b_ace = model_matrix(model, AgcVariant.SIMPLIFIED)
    ace = reduced_ace(E, dpl_t, b_ace, model)
    df, ni = steady_state_freq_and_NI(phi_vector(E, model), dpl_t, model.beta_vec)
    freq = np.repeat(df[:, None], model.n_areas, axis=1)
    u = allocate_all(model, E)
    power = u - df[:, None] / model.droop
    return TimeSeries(time=t, channels=_channels(model, freq, ni, ace, E, u, power),
                      events=scenario.event_times)


@dataclass
class CompareReport:
    rms: dict
    max: dict
    exclusion: float
    n_samples: int

    def worst(self, suffix) -> tuple:
        """(max RMS, max abs) over channels whose name ends with ``suffix``."""
        keys = [k for k in self.rms if k.endswith(suffix)]
        return max(self.rms[k] for k in keys), max(self.max[k] for k in keys)

    def to_dict(self):
        return {"exclusion_s": self.exclusion, "n_samples": self.n_samples,
                "rms": self.rms, "max": self.max}


def exclusion_mask(t, events, exclusion) -> np.ndarray:
    keep = np.ones(t.size, dtype=bool)
    for te in events:
        keep &= ~((t >= te) & (t <= te + exclusion))
    return keep


def compare(full: TimeSeries, reduced: TimeSeries, exclusion: float = 30.0,
            channels=None) -> CompareReport:
    """RMS and max |full - reduced| per channel, skipping post-disturbance windows."""
    names = full.names() if channels is None else list(channels)
    missing = [n for n in names if n not in reduced.channels or n not in full.channels]
    if missing:
        raise KeyError(f"channels missing from one of the series: {missing}")
    lo = max(full.time[0], reduced.time[0])
    hi = min(full.time[-1], reduced.time[-1])
    if hi <= lo:
        raise ValueError("time series do not overlap")
    t = full.time
    keep = (t >= lo) & (t <= hi) & exclusion_mask(t, set(full.events) | set(reduced.events),
                                                  exclusion)
    rms, mx = {}, {}
    for n in names:
        r = np.interp(t[keep], reduced.time, reduced[n])
        e = full[n][keep] - r
        rms[n] = float(np.sqrt(np.mean(e ** 2))) if e.size else 0.0
        mx[n] = float(np.max(np.abs(e))) if e.size else 0.0
    return CompareReport(rms=rms, max=mx, exclusion=exclusion, n_samples=int(keep.sum()))


# --- reference systems -------------------------------------------------------

TUNINGS = {"overbiased": 1.5, "underbiased": 0.5, "matched": 1.0}


def two_area_system(b1_factor=1.5, tau=60.0, headroom=0.5, **area_kw) -> SystemModel:
    """Aggregated two-area four-machine surrogate on a 900 MVA base.

    Two 5 %-droop units per area and no load damping give beta_k = 40 pu/pu.
    Only the first unit of each area (G1, G3) takes part in AGC.
    """
    u_star = 700.0 / BASE_MVA
    areas = []
    names = [("G1", "G2"), ("G3", "G4")]
    for k in range(2):
        gens = (
            GeneratorParams(droop=0.05, u_star=u_star, u_min=u_star - headroom,
                            u_max=u_star + headroom, alpha=1.0, participant=True, name=names[k][0]),
            GeneratorParams(droop=0.05, u_star=u_star, u_min=u_star - headroom,
                            u_max=u_star + headroom, name=names[k][1]),
        )
        b = 40.0 * (b1_factor if k == 0 else 1.0)
        areas.append(AreaParams(generators=gens, b=b, D=0.0, tau=tau, name=f"area{k + 1}", **area_kw))
    return build_system(areas, [TieLine(0, 1)], base_mva=BASE_MVA)


def paper_scenario(horizon=600.0, second_step=True, **kw) -> Scenario:
    steps = [Disturbance(20.0, 0, STEP_PU)]
    if second_step:
        steps.append(Disturbance(250.0, 1, STEP_PU))
    return Scenario(horizon=horizon, disturbances=tuple(steps), **kw)


def fit_decay_rate(t, y, y_final, t0, t1) -> float:
    """Least-squares slope of log|y - y_final| on [t0, t1]; returns the decay rate."""
    sel = (t >= t0) & (t <= t1)
    e = np.abs(y[sel] - y_final)
    ok = e > 0
    slope = np.polyfit(t[sel][ok], np.log(e[ok]), 1)[0]
    return float(-slope)


def settling_time(t, y, y_final, t_start, band=0.02, scale=None) -> float:
    """Time after ``t_start`` at which |y - y_final| last exceeds band * scale."""
    scale = abs(y_final) if scale is None else scale
    sel = t >= t_start
    tt, e = t[sel], np.abs(y[sel] - y_final)
    outside = np.flatnonzero(e > band * scale)
    if outside.size == 0:
        return 0.0
    if outside[-1] == tt.size - 1:
        return float("inf")
    return float(tt[outside[-1] + 1] - t_start)


def cross_extremum(t, y, t_start, baseline=None) -> float:
    """Signed extremum of y - baseline after ``t_start``."""
    sel = t >= t_start
    d = y[sel] - (0.0 if baseline is None else baseline[sel])
    return float(d[np.argmax(np.abs(d))])


@dataclass
class ExperimentResult:
    tuning: str
    model: SystemModel
    scenario: Scenario
    full: TimeSeries
    reduced: TimeSeries
    comparison: CompareReport
    summary: dict


def run_paper_experiment(tuning="overbiased", tau=60.0, horizon=600.0,
                         variant=AgcVariant.SIMPLIFIED, exclusion=30.0,
                         dt_full=0.01, dt_reduced=0.1) -> ExperimentResult:
    """Two-area experiment: 50 MW steps in area 1 at 20 s and in area 2 at 250 s.

    Besides the full and reduced runs, a companion run without the second step
    isolates the cross response of eta_1 to the area-2 disturbance.
    """
    factor = TUNINGS[tuning]
    model = two_area_system(b1_factor=factor, tau=tau)
    kw = dict(dt_full=dt_full, dt_reduced=dt_reduced, variant=variant)
    scen = paper_scenario(horizon, **kw)
    first_only = paper_scenario(horizon, second_step=False, **kw)
    full = integrate_full(model, scen)
    red = integrate_reduced(model, scen)
    full_1 = integrate_full(model, first_only)
    red_1 = integrate_reduced(model, first_only)
    cmp_ = compare(full, red, exclusion)

    lti = LtiReducedModel.from_model(model)
    dom = dominant_eigenvalue(lti)
    O = lti.O
    t2 = 250.0
    cross_full = cross_extremum(full.time, full["area1.eta"], t2, full_1["area1.eta"])
    cross_red = cross_extremum(red.time, red["area1.eta"], t2, red_1["area1.eta"])
    rate_red = fit_decay_rate(red_1.time, red_1["area1.ace"], 0.0, 60.0, 240.0)
    summary = {
        "tuning": tuning,
        "b": model.b_vec.tolist(),
        "beta": model.beta_vec.tolist(),
        "tau": model.tau_vec.tolist(),
        "B_ace": model_matrix(model, AgcVariant.SIMPLIFIED).entries.tolist(),
        "B_txt": model_matrix(model, AgcVariant.TEXTBOOK).entries.tolist(),
        "eigenvalues": sorted(reduced_eigenvalues(model, variant).real.tolist()),
        "lambda_N": dom.lambda_n,
        "dominant": dom.dominant,
        "O": O.tolist(),
        "peak_eta_closed_form": peak_eta(O, 0) * STEP_PU,
        "peak_eta_step": peak_eta_step(O, 0) * STEP_PU,
        "cross_peak_eta1_full": cross_full,
        "cross_peak_eta1_reduced": cross_red,
        "cross_peak_eta2_full_first_step": cross_extremum(full_1.time, full_1["area2.eta"], 20.0),
        "settling_eta1_full_s": settling_time(full_1.time, full_1["area1.eta"], STEP_PU, 20.0,
                                              scale=STEP_PU),
        "settling_eta1_reduced_s": settling_time(red_1.time, red_1["area1.eta"], STEP_PU, 20.0,
                                                 scale=STEP_PU),
        "ace1_decay_rate_reduced": rate_red,
        "rms_eta": cmp_.worst(".eta")[0],
        "rms_ace": cmp_.worst(".ace")[0],
        "max_eta": cmp_.worst(".eta")[1],
        "max_ace": cmp_.worst(".ace")[1],
        "step_pu": STEP_PU,
    }
    return ExperimentResult(tuning, model, scen, full, red, cmp_, summary)


# --- randomised systems ------------------------------------------------------

def random_system(rng, n_areas, b_range=(0.2, 3.0), tau_range=(30.0, 200.0),
                  max_tries=50) -> SystemModel:
    """Random connected system whose frozen-AGC plant is locally stable.

    Candidates failing the small-signal check at the schedule are redrawn.
    """
    for _ in range(max_tries):
        areas = []
        for k in range(n_areas):
            m = int(rng.integers(1, 4))
            alpha = rng.dirichlet(np.ones(m))
            gens = []
            for i in range(m):
                u_star = rng.uniform(0.4, 0.9)
                gens.append(GeneratorParams(
                    droop=rng.uniform(0.04, 0.06), u_star=u_star,
                    u_min=u_star - rng.uniform(0.2, 0.4), u_max=u_star + rng.uniform(0.2, 0.4),
                    alpha=float(alpha[i]), participant=True,
                    T_g=rng.uniform(0.1, 0.3), T_t=rng.uniform(0.3, 0.6)))
            # renormalise so the factors sum to one exactly
            s = sum(g.alpha for g in gens)
            gens = [replace(g, alpha=g.alpha / s) for g in gens]
            D = rng.uniform(0.0, 2.0)
            beta_k = D + sum(1 / g.droop for g in gens)
            areas.append(AreaParams(generators=tuple(gens), b=beta_k * rng.uniform(*b_range), D=D,
                                    H=rng.uniform(5.0, 8.0), tau=rng.uniform(*tau_range)))
        ties = [TieLine(k, k + 1, p_max=rng.uniform(1.5, 3.0)) for k in range(n_areas - 1)]
        if n_areas > 2 and rng.random() < 0.5:
            ties.append(TieLine(0, n_areas - 1, p_max=rng.uniform(1.5, 3.0)))
        model = build_system(areas, ties)
        ev = np.linalg.eigvals(frozen_jacobian(model, model.schedule_state(), np.zeros(n_areas)))
        ev = ev[np.argsort(ev.real)][:-1]  # drop the uniform-angle zero mode
        if np.all(ev.real < -1e-6):
            return model
    raise RuntimeError("could not draw a small-signal stable system")


def random_feasible_load(rng, model, fraction=0.5) -> np.ndarray:
    from .agc import capacity_interval

    out = np.empty(model.n_areas)
    for k, area in enumerate(model.areas):
        lo, hi = capacity_interval(area)
        out[k] = rng.uniform(fraction * lo, fraction * hi)
    return out


def convergence_horizon(model, dpl, variant=AgcVariant.SIMPLIFIED, decades=6.0,
                        t_step=10.0) -> float:
    """Horizon long enough for the slowest reduced mode at the equilibrium to
    decay by ``decades``; saturated units flatten phi and slow that mode."""
    eta_bar = equilibrium(dpl, model)
    rate = -np.max(reduced_eigenvalues(model, variant, eta=eta_bar).real)
    return float(t_step + decades * np.log(10.0) / rate + 60.0)


def stability_run(seed, variant=AgcVariant.SIMPLIFIED, ace_tol=1e-4) -> dict:
    """One randomised closed-loop trial; returns final |ACE| of both models."""
    rng = np.random.default_rng(seed)
    n_areas = int(rng.integers(2, 5))
    model = random_system(rng, n_areas)
    dpl = random_feasible_load(rng, model)
    t_step = 10.0
    horizon = convergence_horizon(model, dpl, variant, t_step=t_step)
    steps = tuple(Disturbance(t_step, k, float(dpl[k])) for k in range(n_areas))
    scen = Scenario(horizon=horizon, disturbances=steps, variant=variant,
                    record_interval=max(1.0, horizon / 2000))
    full = integrate_full(model, scen)
    red = integrate_reduced(model, scen)
    ace_full = max(abs(full[f"area{k + 1}.ace"][-1]) for k in range(n_areas))
    ace_red = max(abs(red[f"area{k + 1}.ace"][-1]) for k in range(n_areas))
    eta_bar = equilibrium(dpl, model)
    eta_err = max(abs(full[f"area{k + 1}.eta"][-1] - eta_bar[k]) for k in range(n_areas))
    return {
        "seed": seed, "n_areas": n_areas, "horizon": horizon,
        "b_over_beta": (model.b_vec / model.beta_vec).tolist(), "tau": model.tau_vec.tolist(),
        "ace_full": ace_full, "ace_reduced": ace_red, "eta_error_full": eta_err,
        "converged": bool(ace_full <= ace_tol and ace_red <= ace_tol),
    }


def stability_sweep(count=50, seed=0, variant=AgcVariant.SIMPLIFIED, jobs=1) -> list:
    seeds = [seed + i for i in range(count)]
    if jobs <= 1:
        return [stability_run(s, variant) for s in seeds]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(stability_run, seeds, [variant] * count))
