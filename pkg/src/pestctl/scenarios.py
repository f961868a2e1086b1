"""Scenario runners behind the command line: compute, then write files.

Work is fanned out over a bounded thread pool (the compiled kernels
release the GIL). Results are merged in input order and written by the
calling thread only, so outputs do not depend on the worker count.
"""

import concurrent.futures
import json
import os

import numpy as np

from .config import ScenarioConfig
from .control import evaluate_constant, fbsm
from .equilibria import EquilibriumKind, make_equilibrium, all_equilibria, boundary_equilibrium_check
from .errors import ConsistencyError, InvariantViolation, NumericDomainError, PestctlError
from .integrate import TimeGrid, bounds_certificate, integrate_forward
from .stability import (classify, coefficient_deviations, hopf_scan, quartic_coefficients,
                        thresholds, track_coexistence)

STATE_COLS = ("X", "S", "I", "A")


def fmt(x):
    """17 significant digits, enough to round-trip a double."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (str,)):
        return x
    return "%.17g" % x


def write_csv(path, header, rows, meta=()):
    """Write ``# key=value`` metadata lines, a header row, then data rows."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def _cell(v):
    if v == "":
        return np.nan
    if v in ("true", "false"):
        return float(v == "true")
    try:
        return float(v)
    except ValueError:
        return v


def read_csv(path):
    """Parse a file written by :func:`write_csv` into ``(header, rows)``.

    Rows come back as a float array, or an object array when some column
    holds text (equilibrium kinds, verdicts).
    """
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    rows = [[_cell(v) for v in ln.split(",")] for ln in lines[1:]]
    numeric = all(isinstance(v, float) for row in rows for v in row)
    arr = np.array(rows, dtype=float if numeric else object)
    return header, arr.reshape(len(rows), len(header))


def write_gnuplot(path, title, data, xcol, ycols, xlabel, ylabel, labels=None):
    """Emit a gnuplot script plotting ``ycols`` of each file in ``data`` against ``xcol``."""
    stem = os.path.splitext(os.path.basename(path))[0]
    plots = []
    for fname in data:
        for j, col in enumerate(ycols):
            stem_ = os.path.splitext(os.path.basename(fname))[0]
            label = (labels or {}).get((fname, col), col if len(data) == 1 else f"{stem_} {col}")
            plots.append(f"'{os.path.basename(fname)}' using '{xcol}':'{col}' with lines title '{label}'")
    text = "\n".join([
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,600",
        f"set output '{stem}.png'",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "plot " + ", \\\n     ".join(plots),
        "",
    ])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _pool_map(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _variants(cfg: ScenarioConfig):
    if cfg.scan is None:
        return [(None, cfg.params)]
    return [(v, cfg.params.replace(**{cfg.scan.param: v})) for v in cfg.scan.values]


def _tag(cfg, value):
    return "" if value is None else f"_{cfg.scan.param}_{value:.6g}"


def _write_echo(cfg, out, command):
    path = os.path.join(out, f"{command}_config.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(cfg.echo(command)) + "\n")
    return path


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def run_simulate(cfg: ScenarioConfig, out, threads=1):
    """Uncontrolled trajectories, one CSV per scan value, plus a gnuplot script."""
    grid = cfg.grid("simulate")
    variants = _variants(cfg)

    def work(item):
        value, p = item
        traj = integrate_forward(p, cfg.initial_state, grid)
        return value, p, traj, bounds_certificate(p, traj)

    results = _pool_map(work, variants, threads)
    files = []
    for value, p, traj, cert in results:
        path = os.path.join(out, f"simulate{_tag(cfg, value)}.csv")
        meta = [f"scenario=simulate tf={fmt(grid.tf)} h={fmt(grid.h)} n_steps={grid.n_steps}",
                f"bounds L={fmt(cert.L)} bound_XSI={fmt(cert.bound_XSI)} bound_A={fmt(cert.bound_A)} "
                f"sup_XSI={fmt(cert.sup_XSI)} sup_A={fmt(cert.sup_A)} tail_only={fmt(cert.tail_only)} "
                f"satisfied={fmt(cert.satisfied)}"]
        if value is not None:
            meta.insert(1, f"{cfg.scan.param}={fmt(value)}")
        rows = np.column_stack([traj.times, traj.values])
        files.append(write_csv(path, ("t",) + STATE_COLS, rows, meta))
    for col in STATE_COLS:
        write_gnuplot(os.path.join(out, f"simulate_{col}.gp"), f"{col}(t)", files, "t", [col],
                      "t (days)", col)
    _write_echo(cfg, out, "simulate")
    return {"files": files, "certificates": [r[3] for r in results]}


# ---------------------------------------------------------------------------
# equilibria / stability
# ---------------------------------------------------------------------------

def _json_float(x):
    if isinstance(x, complex) or isinstance(x, np.complexfloating):
        return [float(x.real), float(x.imag)]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    return x


def _verdict_record(p, eq):
    rec = {"kind": eq.kind.value, "state": [float(v) for v in eq.state],
           "residual_norm": float(eq.residual_norm),
           "existence_flags": {k: _json_float(v) for k, v in eq.existence_flags.items()}}
    try:
        v = classify(p, eq)
        rec["verdict"] = v.verdict.value
        rec["consistency"] = "ok"
        rec["eigenvalues"] = [_json_float(z) for z in v.eigenvalues]
        if eq.kind is EquilibriumKind.HEALTHY_PEST_FREE:
            rec["C"] = [float(v.C1), float(v.C2), float(v.C3)]
            rec["F"] = [float(v.F11), float(v.F22), float(v.F33)]
            rec["conditions"] = {k: bool(b) for k, b in v.conditions_met.items()}
        elif eq.kind is EquilibriumKind.COEXISTENCE:
            rec["y"] = [float(x) for x in quartic_coefficients(p, eq)]
            rec["conditions"] = {k: bool(b) for k, b in v.details["conditions"].items()}
        elif v.witness is not None:
            rec["witness"] = _json_float(v.witness)
    except ConsistencyError as exc:
        rec["verdict"] = "unknown"
        rec["consistency"] = f"FAILED: {exc}"
    if eq.kind in (EquilibriumKind.HEALTHY_PEST_FREE, EquilibriumKind.COEXISTENCE):
        rec["published_coefficient_deviation"] = {
            k: {kk: float(vv) for kk, vv in d.items()} for k, d in coefficient_deviations(p, eq).items()}
    return rec


def equilibria_report(p):
    """Everything known about the fixed points of ``p`` as a JSON-ready dict."""
    R = thresholds(p)
    e2 = boundary_equilibrium_check(p)
    recs = [_verdict_record(p, eq) for eq in all_equilibria(p)]
    return {
        "params": p.as_dict(),
        "thresholds": {"R0": R.R0, "R1": R.R1},
        "E1_implication": ("E1 locally asymptotically stable (R0 < 1 and R1 < 1)"
                           if R.R0 < 1 and R.R1 < 1 else "E1 unstable (R0 >= 1 or R1 >= 1)"),
        "E2_check": {"quadratic": list(e2.coefficients),
                     "roots": [_json_float(z) for z in e2.roots],
                     "has_positive_root": e2.has_positive_root},
        "equilibria": recs,
    }


def _human(report):
    lines = [f"R0 = {report['thresholds']['R0']:.10g}", f"R1 = {report['thresholds']['R1']:.10g}",
             report["E1_implication"],
             "E2: positive root of the boundary quadratic: "
             + ("yes" if report["E2_check"]["has_positive_root"] else "none, E2 does not exist"),
             ""]
    for rec in report["equilibria"]:
        st = ", ".join(f"{c}={v:.10g}" for c, v in zip(STATE_COLS, rec["state"]))
        lines.append(f"{rec['kind']}: ({st})  residual={rec['residual_norm']:.3g}  "
                     f"verdict={rec['verdict']}  consistency={rec['consistency']}")
        if "witness" in rec:
            w = rec["witness"]
            lines.append(f"    witness eigenvalue {w if not isinstance(w, list) else complex(*w)}")
        for name, d in rec.get("published_coefficient_deviation", {}).items():
            if d["rel_dev"] > 1e-6:
                lines.append(f"    published {name} deviates: {d['verbatim']:.10g} vs "
                             f"{d['corrected']:.10g} (rel {d['rel_dev']:.3g})")
    return lines


def run_equilibria_stability(cfg: ScenarioConfig, out, command="stability", threads=1):
    """Report equilibria, verdicts, thresholds and coefficient checks."""
    variants = _variants(cfg)
    reports = _pool_map(lambda item: (item[0], equilibria_report(item[1])), variants, threads)
    files = []
    failed = False
    for value, report in reports:
        tag = _tag(cfg, value)
        rows = []
        for rec in report["equilibria"]:
            rows.append([rec["kind"], *rec["state"], rec["residual_norm"], rec["verdict"]])
            failed |= rec["consistency"] != "ok"
        files.append(write_csv(os.path.join(out, f"equilibria{tag}.csv"),
                               ("kind",) + STATE_COLS + ("residual", "verdict"), rows))
        path = os.path.join(out, f"{command}{tag}_report.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(_human(report)) + "\n\n## machine-readable\n")
            fh.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
        files.append(path)
    _write_echo(cfg, out, command)
    return {"files": files, "reports": [r for _, r in reports], "consistency_failed": failed}


def parse_report(path):
    """Return the machine-readable section of a report as a dict."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return json.loads(text.split("## machine-readable\n", 1)[1])


# ---------------------------------------------------------------------------
# Hopf scan and bifurcation diagram
# ---------------------------------------------------------------------------

def _alpha_values(cfg):
    if cfg.scan is None or cfg.scan.param != "alpha":
        raise InvariantViolation("this command needs scan_param = alpha")
    return np.array(cfg.scan.values, dtype=float)


HOPF_HEADER = ("alpha_star", "psi", "psi_scale", "re_at_star", "omega0", "omega0_sq_y3_over_y1",
               "transversality_AC_plus_BD", "predicted_slope_sign", "observed_slope",
               "crossing_verified")


def _hopf_rows(results):
    return [[r.alpha_star, r.psi_at_star, r.psi_scale, r.real_part_at_star, r.imag_part_omega0,
             r.omega0_sq_from_y, r.transversality_value, r.predicted_slope_sign,
             r.observed_slope, r.eigen_crossing_verified] for r in results]


def run_hopf_scan(cfg: ScenarioConfig, out, threads=1):
    """Psi along the alpha grid and the refined Hopf points."""
    alphas = _alpha_values(cfg)
    res = hopf_scan(cfg.params, (alphas[0], alphas[-1]), len(alphas))
    rows = [[a, v] for a, v in res.grid]
    f1 = write_csv(os.path.join(out, "hopf_psi.csv"), ("alpha", "psi"), rows,
                   [f"skipped_without_coexistence={len(res.skipped)}"])
    f2 = write_csv(os.path.join(out, "hopf_points.csv"), HOPF_HEADER, _hopf_rows(res))
    write_gnuplot(os.path.join(out, "hopf_psi.gp"), "psi(alpha)", [f1], "alpha", ["psi"],
                  "alpha", "psi")
    _write_echo(cfg, out, "hopf-scan")
    return {"files": [f1, f2], "hopf": res}


BIF_HEADER = (("alpha", "has_equilibrium") + tuple(f"{c}_star" for c in STATE_COLS)
              + ("verdict", "integration")
              + tuple(f"{c}_{m}" for c in STATE_COLS for m in ("min", "max")))


def bifurcation_points(cfg: ScenarioConfig, threads=1):
    """Per-alpha rows of the bifurcation diagram plus Hopf candidates."""
    alphas = _alpha_values(cfg)
    p = cfg.params
    states = track_coexistence(p, alphas)
    grid = TimeGrid.from_step(cfg.attractor_tf, cfg.h)
    start = int(np.floor(cfg.transient_fraction * grid.n_steps))

    def attractor(al):
        try:
            traj = integrate_forward(p.replace(alpha=float(al)), cfg.initial_state, grid)
        except PestctlError as exc:
            return type(exc).__name__, None
        tail = traj.values[start:]
        return "ok", np.column_stack([tail.min(axis=0), tail.max(axis=0)]).ravel()

    tails = _pool_map(attractor, alphas, threads)
    rows = []
    for al, s, (status, mm) in zip(alphas, states, tails):
        q = p.replace(alpha=float(al))
        if s is None:
            star, verdict = [None] * 4, ""
        else:
            eq = make_equilibrium(EquilibriumKind.COEXISTENCE, q, s)
            star = list(s)
            try:
                verdict = classify(q, eq).verdict.value
            except (ConsistencyError, NumericDomainError):
                verdict = "inconsistent"
        mm = [None] * 8 if mm is None else list(mm)
        rows.append([al, s is not None, *star, verdict, status, *mm])
    hopf = hopf_scan(p, (alphas[0], alphas[-1]), len(alphas)) if len(alphas) >= 2 else []
    return rows, hopf


def run_bifurcation(cfg: ScenarioConfig, out, threads=1):
    """E* branch, verdicts and attractor extremes over the alpha scan."""
    rows, hopf = bifurcation_points(cfg, threads)
    meta = [f"scenario=bifurcation attractor_tf={fmt(cfg.attractor_tf)} h={fmt(cfg.h)} "
            f"transient_fraction={fmt(cfg.transient_fraction)}"]
    f1 = write_csv(os.path.join(out, "bifurcation.csv"), BIF_HEADER, rows, meta)
    f2 = write_csv(os.path.join(out, "bifurcation_hopf.csv"), HOPF_HEADER, _hopf_rows(hopf))
    for col in STATE_COLS:
        write_gnuplot(os.path.join(out, f"bifurcation_{col}.gp"), f"{col} vs alpha", [f1], "alpha",
                      [f"{col}_star", f"{col}_min", f"{col}_max"], "alpha", col)
    _write_echo(cfg, out, "bifurcation")
    return {"files": [f1, f2], "rows": rows, "hopf": hopf}


# ---------------------------------------------------------------------------
# optimal control
# ---------------------------------------------------------------------------

def run_optimal_control(cfg: ScenarioConfig, out, threads=1):
    """FBSM solution, its adjoints and iteration log, and a no-control baseline."""
    grid = cfg.grid("optimal-control")
    p, w, s0 = cfg.params, cfg.weights, cfg.initial_state
    res = fbsm(p, w, s0, grid, cfg.relaxation, cfg.tol, cfg.max_iter)
    base_traj, base_J = evaluate_constant(p, w, s0, grid, (0.0, 0.0, 0.0))
    t = grid.times
    meta = [f"scenario=optimal-control tf={fmt(grid.tf)} h={fmt(grid.h)}",
            f"converged={fmt(res.converged)} iterations={res.iterations} objective={fmt(res.objective)}",
            f"baseline=no-control objective={fmt(base_J)}"]
    files = [
        write_csv(os.path.join(out, "oc_state.csv"), ("t",) + STATE_COLS,
                  np.column_stack([t, res.state.values]), meta),
        write_csv(os.path.join(out, "oc_control.csv"), ("t", "u1", "u2", "u3"),
                  np.column_stack([t, res.control.values]), meta),
        write_csv(os.path.join(out, "oc_adjoint.csv"), ("t", "lambda1", "lambda2", "lambda3", "lambda4"),
                  np.column_stack([t, res.adjoint.values]), meta),
        write_csv(os.path.join(out, "oc_iterations.csv"), ("iteration", "objective", "max_change"),
                  [[h["iteration"], h["objective"], h["max_change"]] for h in res.history], meta),
        write_csv(os.path.join(out, "oc_baseline.csv"), ("t",) + STATE_COLS,
                  np.column_stack([t, base_traj.values]), meta),
    ]
    write_gnuplot(os.path.join(out, "oc_state.gp"), "controlled vs no-control",
                  [files[0], files[4]], "t", list(STATE_COLS), "t (days)", "state")
    write_gnuplot(os.path.join(out, "oc_control.gp"), "optimal controls", [files[1]], "t",
                  ["u1", "u2", "u3"], "t (days)", "control")
    summary = os.path.join(out, "oc_summary.txt")
    with open(summary, "w", encoding="utf-8") as fh:
        fh.write("\n".join(meta + [
            f"S_controlled(tf)={fmt(res.state.final[1])}",
            f"S_baseline(tf)={fmt(base_traj.final[1])}",
        ]) + "\n")
    files.append(summary)
    _write_echo(cfg, out, "optimal-control")
    return {"files": files, "result": res, "baseline": (base_traj, base_J)}
