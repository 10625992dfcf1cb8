"""Command-line front end: ``agcsim simulate|reduce|compare|analyze|experiment``.

Exit codes: 0 success, 1 bad configuration or usage, 2 infeasible scenario,
3 numerical failure (divergence or Newton breakdown).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from .agc import AgcVariant
from .analysis import (LtiReducedModel, bode_S, dominant_eigenvalue, peak_eta, peak_eta_step)
from .errors import ConvergenceError, InfeasibleError, ModelError, SimulationDiverged
from .reduced import model_matrix, reduced_eigenvalues, steady_state_freq_and_NI
from .sim import (Scenario, compare, integrate_full, integrate_reduced, run_paper_experiment,
                  stability_sweep)
from .system import (AreaParams, Disturbance, GeneratorParams, TieLine, build_system,
                     steady_state, tie_flows)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 1, 2, 3
RMS_THRESHOLD = 0.05
REPORTS = ("eig", "bode", "peak", "matrices", "steady-state")


class ScenarioError(ModelError):
    """Scenario file problem, located by line/column or by field path."""


class ParsedScenario:
    def __init__(self, model, scenario, output_dir=None, channels=None, source=None):
        self.model = model
        self.scenario = scenario
        self.output_dir = output_dir
        self.channels = channels
        self.source = source


def bundled_scenarios() -> list:
    root = resources.files("agcsim") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _resolve(path_or_name) -> tuple:
    p = Path(path_or_name)
    if p.is_file():
        return p.read_text(encoding="utf-8"), str(p)
    name = p.name[:-5] if p.name.endswith(".json") else p.name
    res = resources.files("agcsim") / "scenarios" / f"{name}.json"
    if res.is_file():
        return res.read_text(encoding="utf-8"), f"<bundled:{name}>"
    raise ScenarioError(f"no such file or bundled scenario: {path_or_name}")


def _get(d, key, path, default=None, required=False):
    if key in d:
        return d[key]
    if required:
        raise ScenarioError("missing required field", field=f"{path}.{key}" if path else key)
    return default


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"expected a number, got {v!r}", field=path)
    return float(v)


def _per_area(values, n, path):
    if not isinstance(values, list) or len(values) != n:
        raise ScenarioError(f"expected a list of {n} values (one per area)", field=path)
    return [_num(v, f"{path}[{k}]") for k, v in enumerate(values)]


# build_system field -> location in the scenario file
def _relocate(field):
    if field is None:
        return None
    for src, dst in ((".b", "agc.b"), (".tau", "agc.tau"), (".alpha", "agc.participation")):
        if field.startswith("areas[") and field.endswith(src) and field.count(".") == 1:
            k = field[len("areas["):field.index("]")]
            return f"{dst}[{k}]"
    if ".generators[" in field and field.endswith(".alpha"):
        k = field[len("areas["):field.index("]")]
        i = field[field.index(".generators[") + len(".generators["):field.rindex("]")]
        return f"agc.participation[{k}][{i}]"
    return f"system.{field}"


def parse_scenario_text(text, source="<string>") -> ParsedScenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("top level must be an object")
    system = _get(doc, "system", "", required=True)
    agc = _get(doc, "agc", "", default={})
    scen = _get(doc, "scenario", "", required=True)
    out = _get(doc, "output", "", default={})

    areas_in = _get(system, "areas", "system", required=True)
    if not isinstance(areas_in, list) or not areas_in:
        raise ScenarioError("expected a non-empty list of areas", field="system.areas")
    n = len(areas_in)
    b = _per_area(_get(agc, "b", "agc", required=True), n, "agc.b")
    for k, bk in enumerate(b):
        if bk <= 0:
            raise ScenarioError("frequency_bias must be positive", field=f"agc.b[{k}]")
    tau = _per_area(_get(agc, "tau", "agc", default=[60.0] * n), n, "agc.tau")
    part = _get(agc, "participation", "agc", required=True)
    if not isinstance(part, list) or len(part) != n:
        raise ScenarioError(f"expected {n} lists of participation factors", field="agc.participation")

    areas = []
    for k, a in enumerate(areas_in):
        p = f"system.areas[{k}]"
        gens_in = _get(a, "generators", p, required=True)
        if not isinstance(part[k], list) or len(part[k]) != len(gens_in):
            raise ScenarioError(f"expected {len(gens_in)} factors (one per generator)",
                                field=f"agc.participation[{k}]")
        alphas = [_num(v, f"agc.participation[{k}][{i}]") for i, v in enumerate(part[k])]
        if abs(sum(alphas) - 1.0) > 1e-9:
            raise ScenarioError(f"participation factors sum to {sum(alphas):g}, expected 1",
                                field=f"agc.participation[{k}]")
        gens = []
        for i, g in enumerate(gens_in):
            q = f"{p}.generators[{i}]"
            kw = {key: _num(g[key], f"{q}.{key}") for key in ("T_g", "T_t") if key in g}
            gens.append(GeneratorParams(
                droop=_num(_get(g, "droop", q, required=True), f"{q}.droop"),
                u_star=_num(_get(g, "u_star", q, required=True), f"{q}.u_star"),
                u_min=_num(_get(g, "u_min", q, required=True), f"{q}.u_min"),
                u_max=_num(_get(g, "u_max", q, required=True), f"{q}.u_max"),
                alpha=alphas[i], participant=alphas[i] > 0, name=str(g.get("name", "")), **kw))
        kw = {key: _num(a[key], f"{p}.{key}") for key in ("D", "H", "T_f") if key in a}
        areas.append(AreaParams(generators=tuple(gens), b=b[k], tau=tau[k],
                                name=str(a.get("name", f"area{k + 1}")), **kw))

    ties = []
    for t_idx, t in enumerate(_get(system, "ties", "system", default=[])):
        q = f"system.ties[{t_idx}]"
        kw = {key: _num(t[key], f"{q}.{key}") for key in ("p_max", "damping") if key in t}
        ends = _get(t, "areas", q, required=True)
        if not isinstance(ends, list) or len(ends) != 2 or not all(isinstance(e, int) for e in ends):
            raise ScenarioError("expected two 1-based area numbers", field=f"{q}.areas")
        ties.append(TieLine(ends[0] - 1, ends[1] - 1, **kw))
    base = _num(system.get("base_mva", 900.0), "system.base_mva")
    try:
        model = build_system(areas, ties, base_mva=base)
    except ScenarioError:
        raise
    except ModelError as exc:
        raise ScenarioError(exc.reason, field=_relocate(exc.field)) from None

    steps = []
    for s_idx, s in enumerate(_get(scen, "steps", "scenario", default=[])):
        q = f"scenario.steps[{s_idx}]"
        area = _get(s, "area", q, required=True)
        if not isinstance(area, int) or not 1 <= area <= n:
            raise ScenarioError(f"area must be an integer in 1..{n}", field=f"{q}.area")
        if "dP_MW" in s:
            dp = _num(s["dP_MW"], f"{q}.dP_MW") / base
        else:
            dp = _num(_get(s, "dP", q, required=True), f"{q}.dP")
        steps.append(Disturbance(_num(_get(s, "time", q, required=True), f"{q}.time"), area - 1, dp))
    variant = agc.get("variant", "simplified")
    if variant not in ("simplified", "textbook"):
        raise ScenarioError("variant must be 'simplified' or 'textbook'", field="agc.variant")
    kw = {key: _num(scen[key], f"scenario.{key}")
          for key in ("dt_full", "dt_reduced", "record_interval") if key in scen}
    try:
        scenario = Scenario(horizon=_num(_get(scen, "horizon", "scenario", required=True),
                                         "scenario.horizon"),
                            disturbances=tuple(steps), variant=AgcVariant(variant),
                            agc_enabled=bool(agc.get("enabled", True)), **kw)
    except ValueError as exc:
        raise ScenarioError(str(exc), field="scenario") from None
    channels = out.get("channels")
    return ParsedScenario(model, scenario, out.get("directory"), channels, source)


def parse_scenario(path_or_name) -> ParsedScenario:
    text, source = _resolve(path_or_name)
    return parse_scenario_text(text, source)


# --- commands ----------------------------------------------------------------

def _out_dir(args, parsed) -> Path:
    d = Path(args.out or parsed.output_dir or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _with_variant(parsed, args):
    if getattr(args, "variant", None):
        parsed.scenario = replace(parsed.scenario, variant=AgcVariant(args.variant))
    return parsed


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n", encoding="utf-8")


def _channels_for(parsed, ts):
    if parsed.channels is None:
        return None
    unknown = [c for c in parsed.channels if c not in ts.channels]
    if unknown:
        raise ScenarioError(f"unknown channel(s) {unknown}", field="output.channels")
    return parsed.channels


def cmd_simulate(args) -> int:
    parsed = _with_variant(parse_scenario(args.scenario), args)
    ts = integrate_full(parsed.model, parsed.scenario)
    path = _out_dir(args, parsed) / "timeseries_full.csv"
    ts.to_csv(path, _channels_for(parsed, ts))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_reduce(args) -> int:
    parsed = _with_variant(parse_scenario(args.scenario), args)
    ts = integrate_reduced(parsed.model, parsed.scenario)
    path = _out_dir(args, parsed) / "timeseries_reduced.csv"
    ts.to_csv(path, _channels_for(parsed, ts))
    print(f"wrote {path}")
    return EXIT_OK


def _step_scale(parsed):
    steps = [abs(d.dP) for d in parsed.scenario.disturbances]
    return max(steps) if steps else 0.0


def cmd_compare(args) -> int:
    parsed = _with_variant(parse_scenario(args.scenario), args)
    full = integrate_full(parsed.model, parsed.scenario)
    red = integrate_reduced(parsed.model, parsed.scenario)
    rep = compare(full, red, args.exclusion_s)
    out = _out_dir(args, parsed)
    chans = _channels_for(parsed, full)
    full.to_csv(out / "timeseries_full.csv", chans)
    red.to_csv(out / "timeseries_reduced.csv", chans)
    scale = _step_scale(parsed)
    body = rep.to_dict()
    body["step_pu"] = scale
    body["threshold"] = RMS_THRESHOLD * scale
    checks = {}
    for suffix in (".eta", ".ace"):
        worst = rep.worst(suffix)[0]
        checks[suffix[1:]] = {"worst_rms": worst,
                              "pass": bool(scale > 0 and worst <= RMS_THRESHOLD * scale)}
    body["checks"] = checks
    body["pass"] = all(c["pass"] for c in checks.values())
    _write_json(out / "compare.json", body)
    print(f"wrote {out / 'compare.json'} (pass={body['pass']})")
    return EXIT_OK


def _parse_indices(text, n):
    if text is None:
        return list(range(n))
    try:
        idx = [int(v) - 1 for v in text.split(",")]
    except ValueError:
        raise ScenarioError(f"bad channel list {text!r}", field="--channels") from None
    bad = [i + 1 for i in idx if not 0 <= i < n]
    if bad:
        raise ScenarioError(f"unknown channel indices {bad}; areas are 1..{n}", field="--channels")
    return idx


def cmd_analyze(args) -> int:
    parsed = parse_scenario(args.scenario)
    model = parsed.model
    variant = AgcVariant(args.variant or parsed.scenario.variant)
    out = _out_dir(args, parsed)
    what = set(args.what or ["eig", "matrices", "steady-state"])
    unknown = sorted(what - set(REPORTS))
    if unknown:
        raise ScenarioError(f"unknown report(s) {unknown}; choose from {list(REPORTS)}")
    report = {"variant": variant.value}
    if "matrices" in what:
        report["B_ace"] = model_matrix(model, AgcVariant.SIMPLIFIED).entries.tolist()
        report["B_txt"] = model_matrix(model, AgcVariant.TEXTBOOK).entries.tolist()
    if "eig" in what:
        ev = reduced_eigenvalues(model, variant)
        report["eigenvalues"] = sorted(ev.real.tolist(), reverse=True)
        if np.all(model.tau_vec == model.tau_vec[0]):
            dom = dominant_eigenvalue(LtiReducedModel.from_model(model))
            report["lambda_N"] = dom.lambda_n
            report["cluster"] = dom.cluster
            report["dominant"] = dom.dominant
    needs_lti = what & {"bode", "peak"}
    if needs_lti:
        try:
            lti = LtiReducedModel.from_model(model)
        except ValueError as exc:
            raise ScenarioError(str(exc), field="agc.tau") from None
        report["O"] = lti.O.tolist()
    if "bode" in what:
        files = {}
        for i in _parse_indices(args.channels, model.n_areas):
            fr = bode_S(i, lti)
            path = out / f"bode_S{i + 1}{i + 1}.csv"
            np.savetxt(path, np.column_stack([fr.omega, fr.magnitude, fr.phase_deg]),
                       delimiter=",", header="omega_rad_s,magnitude,phase_deg", comments="",
                       fmt="%.17g")
            w_sup = fr.sup_omega if np.isfinite(fr.sup_omega) else None
            files[f"S{i + 1}{i + 1}"] = {"file": path.name, "sup": fr.sup_magnitude,
                                         "grid_sup": fr.grid_sup, "sup_omega": w_sup,
                                         "hf_limit": fr.hf_limit}
        report["bode"] = files
    if "peak" in what:
        lo, hi, step = args.o_range
        grid = np.round(np.arange(lo, hi + step / 2, step), 12)
        rows = [(o, peak_eta([o], 0), peak_eta_step([o], 0)) for o in grid]
        path = out / "peak.csv"
        np.savetxt(path, np.array(rows), delimiter=",", header="O,peak_eta,peak_eta_step",
                   comments="", fmt="%.17g")
        report["peak"] = {"file": path.name, "endpoints": {f"{rows[0][0]:g}": rows[0][1],
                                                            f"{rows[-1][0]:g}": rows[-1][1]}}
    if "steady-state" in what:
        dpl = parsed.scenario.final_load(model.n_areas)
        df, ni = steady_state_freq_and_NI(np.zeros(model.n_areas), dpl, model.beta_vec)
        x = steady_state(model, dpl=dpl)
        m = model.unpack(x)
        report["steady_state"] = {
            "dP_L": dpl.tolist(), "df_closed_form": float(df), "ni_closed_form": ni.tolist(),
            "df_newton": m.freq.tolist(), "ni_newton": tie_flows(model, x).tolist(),
        }
    _write_json(out / "analysis.json", report)
    print(f"wrote {out / 'analysis.json'}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    if args.which == "sweep":
        variant = AgcVariant(args.variant or "simplified")
        rows = stability_sweep(args.count, args.seed, variant, jobs=args.jobs)
        _write_json(out / "sweep.json", {"variant": variant.value, "runs": rows,
                                         "all_converged": all(r["converged"] for r in rows)})
        n_ok = sum(r["converged"] for r in rows)
        print(f"{n_ok}/{len(rows)} runs converged; wrote {out / 'sweep.json'}")
        return EXIT_OK
    tunings = ["overbiased", "underbiased", "matched"] if args.tuning == "all" else [args.tuning]
    summaries = {}
    for tuning in tunings:
        res = run_paper_experiment(tuning, variant=AgcVariant(args.variant or "simplified"),
                                   exclusion=args.exclusion_s)
        res.full.to_csv(out / f"{tuning}_full.csv")
        res.reduced.to_csv(out / f"{tuning}_reduced.csv")
        summaries[tuning] = res.summary
        summaries[tuning]["comparison"] = res.comparison.to_dict()
    _write_json(out / "summary.json", summaries)
    print(f"wrote {out / 'summary.json'}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="agcsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", required=True,
                            help="scenario JSON path or bundled name (%s)" % ", ".join(bundled_scenarios()))
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--variant", choices=[v.value for v in AgcVariant])

    sp = sub.add_parser("simulate", help="integrate the full nonlinear closed loop")
    common(sp)
    sp.set_defaults(func=cmd_simulate)
    sp = sub.add_parser("reduce", help="integrate the reduced AGC model")
    common(sp)
    sp.set_defaults(func=cmd_reduce)
    sp = sub.add_parser("compare", help="full vs reduced error report")
    common(sp)
    sp.add_argument("--exclusion-s", type=float, default=30.0)
    sp.set_defaults(func=cmd_compare)
    sp = sub.add_parser("analyze", help="matrices, eigenvalues, Bode, peak and steady state")
    common(sp)
    sp.add_argument("what", nargs="*", metavar="REPORT",
                    help="any of: %s (default: eig matrices steady-state)" % " ".join(REPORTS))
    sp.add_argument("--channels", help="comma-separated 1-based areas for bode")
    sp.add_argument("--o-range", type=float, nargs=3, default=[-0.5, 0.5, 0.05],
                    metavar=("LO", "HI", "STEP"))
    sp.set_defaults(func=cmd_analyze)
    sp = sub.add_parser("experiment", help="two-area reference experiment or stability sweep")
    sp.add_argument("which", choices=["paper", "sweep"])
    common(sp, scenario=False)
    sp.add_argument("--tuning", default="all", choices=["overbiased", "underbiased", "matched", "all"])
    sp.add_argument("--exclusion-s", type=float, default=30.0)
    sp.add_argument("--count", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SimulationDiverged, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
