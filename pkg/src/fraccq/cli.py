"""Experiment harness: convergence, subdiffusion timing, transparent-boundary
Schroedinger snapshots, weight diagnostics, and a selftest battery.

Emits machine-readable CSV/JSON only; plotting is out of scope. Numeric
experiment output is bitwise reproducible for a fixed spec and worker
count; wall-clock fields in the timing report naturally are not.
"""

from __future__ import annotations

from . import _env  # noqa: F401  (pin BLAS pools before numpy loads)

import argparse
import csv
import json
import sys

import numpy as np

from . import caputo, contour, fastcq, operators, smallmat, tableau as tableau_mod
from .errors import ConfigError, FracCQError

SCHEMA_PREFIX = "fraccq"
_EXPERIMENTS = ("convergence", "subdiffusion", "schrodinger", "weights", "selftest")

# per-method step ladders ending at t = N h = t_end, chosen to sit inside
# the pre-saturation convergence range at K = 25
_DEFAULT_LADDERS = {
    "radau1": (80, 160, 320, 640, 1280, 2560),
    "radau3": (160, 320, 640, 1280, 2560),
    "radau5": (20, 40, 80, 160, 320, 640),
}

_FLAG_TYPES = {
    "alpha": float,
    "h": float,
    "steps": str,
    "K": int,
    "Lambda": int,
    "kappa": int,
    "J": int,
    "method": str,
    "workers": int,
    "grid": int,
    "a_half": float,
    "t_end": float,
    "out": str,
    "format": str,
    "real": bool,
    "complex": bool,
    "repeats": int,
    "reference": bool,
    "bound": float,
    "dump_config": bool,
}


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _parse_steps(text):
    try:
        steps = tuple(int(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse step list {text!r}") from exc
    if not steps or any(n < 0 for n in steps):
        raise ConfigError(f"step list must hold nonnegative integers, got {text!r}")
    return steps


def read_config_file(path):
    """Flat key=value file; keys identical to flag names, '#' comments."""
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _FLAG_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            typ = _FLAG_TYPES[key]
            if typ is bool:
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ConfigError(f"{path}:{lineno}: boolean expected for {key}")
                entries[key] = value.lower() in ("true", "1")
            else:
                try:
                    entries[key] = typ(value)
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return entries


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fraccq",
        description="Experiments for the fast Runge-Kutta convolution quadrature solver.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in _EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--h", type=float, default=None)
        p.add_argument("--steps", type=str, default=None,
                       help="comma-separated step counts")
        p.add_argument("--K", type=int, default=None)
        p.add_argument("--Lambda", type=int, default=None)
        p.add_argument("--kappa", type=int, default=None)
        p.add_argument("--J", type=int, default=None)
        p.add_argument("--method", choices=("radau1", "radau3", "radau5"), default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--grid", type=int, default=None)
        p.add_argument("--a-half", dest="a_half", type=float, default=None)
        p.add_argument("--t-end", dest="t_end", type=float, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--format", choices=("csv", "json"), default=None)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--real", dest="real", action="store_const", const=True, default=None)
        p.add_argument("--complex", dest="complex", action="store_const", const=True, default=None)
        p.add_argument("--repeats", type=int, default=None)
        p.add_argument("--reference", action="store_const", const=True, default=None)
        p.add_argument("--bound", type=float, default=None)
        p.add_argument("--dump-config", dest="dump_config", action="store_const",
                       const=True, default=None)
    return parser


_DEFAULTS = {
    "alpha": None,
    "h": None,
    "steps": None,
    "K": 25,
    "Lambda": 5,
    "kappa": 20,
    "J": 160,
    "method": None,
    "workers": 1,
    "grid": None,
    "a_half": 2.0,
    "t_end": None,
    "out": None,
    "format": None,
    "real": None,
    "complex": None,
    "repeats": 3,
    "reference": False,
    "bound": 0.05,
    "dump_config": False,
}


def resolve_spec(args):
    """defaults < config file < explicitly passed flags."""
    spec = dict(_DEFAULTS)
    spec["experiment"] = args.experiment
    if args.config:
        spec.update(read_config_file(args.config))
    for key in _FLAG_TYPES:
        value = getattr(args, key, None)
        if value is not None:
            spec[key] = value
    if spec.get("real") and spec.get("complex"):
        raise ConfigError("--real and --complex are mutually exclusive")
    if spec["steps"] is not None:
        spec["steps"] = _parse_steps(spec["steps"])
    _validate_numeric(spec)
    return spec


def _validate_numeric(spec):
    """Reject invalid numeric flags before any computation starts."""
    if spec["workers"] < 1:
        raise ConfigError(f"workers must be >= 1, got {spec['workers']}")
    if spec["K"] < 2:
        raise ConfigError(f"K must be >= 2, got {spec['K']}")
    if spec["Lambda"] < 2:
        raise ConfigError(f"Lambda must be >= 2, got {spec['Lambda']}")
    if spec["kappa"] < 1:
        raise ConfigError(f"kappa must be >= 1, got {spec['kappa']}")
    if spec["J"] < spec["kappa"] + 1:
        raise ConfigError(f"J must be >= kappa+1, got J={spec['J']} kappa={spec['kappa']}")
    if spec["alpha"] is not None and not 0.0 < spec["alpha"] <= 1.0:
        raise ConfigError(f"alpha must lie in (0, 1], got {spec['alpha']}")
    if spec["h"] is not None and spec["h"] <= 0.0:
        raise ConfigError(f"h must be positive, got {spec['h']}")
    if spec["repeats"] < 1:
        raise ConfigError(f"repeats must be >= 1, got {spec['repeats']}")


def _real_mode(spec, default):
    """--real/--complex override the experiment's natural mode."""
    if spec.get("complex"):
        return False
    if spec.get("real"):
        return True
    return default


def _write_csv(path, schema, header, rows):
    out = sys.stdout if path is None else open(path, "w", newline="", encoding="utf-8")
    try:
        out.write(f"# schema={SCHEMA_PREFIX}.{schema}.v1\n")
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    finally:
        if path is not None:
            out.close()


def _write_json(path, schema, payload):
    payload = {"schema": f"{SCHEMA_PREFIX}.{schema}.v1", **payload}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is None:
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _emit_rows(spec, schema, header, rows):
    """Row tables default to CSV; --format json wraps the same content."""
    if (spec["format"] or "csv") == "csv":
        _write_csv(spec["out"], schema, header, rows)
    else:
        _write_json(spec["out"], schema,
                    {"header": list(header), "rows": [list(r) for r in rows]})


# ---------------------------------------------------------------------------
# convergence


def convergence_rows(spec, problem=None):
    """Rows (method, s, h, N, K, error_inf, fitted_slope_so_far, note)."""
    t_end = spec["t_end"] if spec["t_end"] is not None else 10.0
    if problem is None:
        problem = caputo.example1_problem().problem
    methods = [spec["method"]] if spec["method"] else ["radau1", "radau3", "radau5"]
    rows = []
    for method in methods:
        tab = tableau_mod.by_name(method)
        steps = spec["steps"] or _DEFAULT_LADDERS[method]
        if spec["h"] is not None:
            for n in steps:
                if abs(n * spec["h"] - t_end) > 1e-9 * max(1.0, t_end):
                    raise ConfigError(
                        f"ladder entry N={n} with h={spec['h']} misses t_end={t_end}"
                    )
        log_h, log_e = [], []
        for n in steps:
            h = t_end / n
            cfg = fastcq.CQConfig(
                tableau=tab, h=h, N=n, K=spec["K"], Lambda=spec["Lambda"],
                kappa=spec["kappa"], J=spec["J"], workers=spec["workers"],
                real_input=_real_mode(spec, True),
            )
            u, _ = fastcq.fast_solve(problem, cfg)
            err = float(np.max(np.abs(u - problem.u_exact(t_end))))
            note = "direct-only" if n <= spec["kappa"] + 1 else ""
            log_h.append(np.log(h))
            log_e.append(np.log(max(err, 1e-300)))
            slope = ""
            if len(log_h) >= 2:
                slope = float(np.polyfit(log_h, log_e, 1)[0])
            rows.append((method, tab.s, h, n, spec["K"], err, slope, note))
    return rows


def run_convergence(spec):
    rows = convergence_rows(spec)
    _emit_rows(
        spec, "convergence",
        ("method", "s", "h", "N", "K", "error_inf", "fitted_slope_so_far", "note"),
        rows,
    )
    return 0


# ---------------------------------------------------------------------------
# subdiffusion timing


def _median(values):
    return float(np.median(np.asarray(values)))


def subdiffusion_report(spec, problem=None):
    grid = spec["grid"] if spec["grid"] is not None else 16
    t_end = spec["t_end"] if spec["t_end"] is not None else 123.45
    steps = spec["steps"] or (1000, 10000, 100000)
    repeats = max(1, spec["repeats"])
    kappa = spec["kappa"] if spec["kappa"] != _DEFAULTS["kappa"] else 12
    J = spec["J"] if spec["J"] != _DEFAULTS["J"] else kappa + 2
    K = spec["K"] if spec["K"] != _DEFAULTS["K"] else 20
    if problem is None:
        problem = caputo.example2_problem(grid, t_max=t_end * 1.01).problem
    tab = tableau_mod.by_name(spec["method"] or "radau5")

    def timed_run(n, workers):
        cfg = fastcq.CQConfig(
            tableau=tab, h=t_end / n, N=n, K=K, Lambda=spec["Lambda"],
            kappa=kappa, J=J, workers=workers,
            real_input=_real_mode(spec, True),
        )
        phases = {"first_block": [], "rk_marches": [], "resolvent_solves": []}
        u = stats = None
        for _ in range(repeats):
            u, stats = fastcq.fast_solve(problem, cfg)
            for key in phases:
                phases[key].append(stats.wall_times[key])
        med = {key: _median(vals) for key, vals in phases.items()}
        flagged = any(
            (max(vals) - min(vals)) > 0.5 * max(med[key], 1e-9)
            for key, vals in phases.items()
        )
        err = float(np.max(np.abs(u - problem.u_exact(t_end))))
        return {
            "N": n,
            "workers": workers,
            "phases": med,
            "rk_steps": stats.rk_steps,
            "resolvent_solves": stats.resolvent_solves,
            "first_block_solves": stats.first_block_solves,
            "error_inf": err,
            "timing_flagged": flagged,
        }

    ladder = [timed_run(n, spec["workers"]) for n in steps]
    for rung in ladder:
        if rung["error_inf"] > spec["bound"]:
            raise FracCQError(
                f"error {rung['error_inf']:.3e} at N={rung['N']} exceeds bound {spec['bound']}"
            )
    worker_counts = sorted({w for w in (1, 2, 4, spec["workers"]) if w >= 1})
    n_fixed = steps[len(steps) // 2]
    worker_ladder = [timed_run(n_fixed, w) for w in worker_counts]
    return {
        "grid": grid,
        "t_end": t_end,
        "method": tab.name,
        "K": K,
        "kappa": kappa,
        "J": J,
        "repeats": repeats,
        "n_ladder": ladder,
        "worker_ladder": worker_ladder,
    }


def run_subdiffusion(spec):
    if spec["format"] == "csv":
        raise ConfigError("the subdiffusion report is nested; only json is supported")
    _write_json(spec["out"], "subdiffusion", subdiffusion_report(spec))
    return 0


# ---------------------------------------------------------------------------
# schrodinger snapshots


def schrodinger_rows(spec):
    n_points = spec["grid"] if spec["grid"] is not None else 801
    a_half = spec["a_half"]
    alpha = spec["alpha"] if spec["alpha"] is not None else 0.75
    h = spec["h"] if spec["h"] is not None else 0.00025
    t_end = spec["t_end"] if spec["t_end"] is not None else 1.0
    K = spec["K"] if spec["K"] != _DEFAULTS["K"] else 50
    J = spec["J"] if spec["J"] != _DEFAULTS["J"] else 80
    snap_times = [t_end * (i + 1) / 20 for i in range(20)]
    for t in snap_times:
        n = t / h
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigError(f"snapshot t={t} is not a multiple of h={h}")

    problem0 = caputo.example3_problem(n_points, a_half, alpha)
    problem, offset = fastcq.transform_initial(problem0)
    grid_x = problem.family.x

    reference = None
    if spec["reference"]:
        ref_points = 2 * (n_points - 1) + 1
        ref0 = caputo.example3_problem(ref_points, 4.0 * a_half, alpha)
        ref_problem, ref_offset = fastcq.transform_initial(ref0)
        ref_x = ref_problem.family.x
        # run grid points present on the reference grid (every other one)
        idx_ref = []
        idx_run = []
        for i, x in enumerate(grid_x):
            j = np.argmin(np.abs(ref_x - x))
            if abs(ref_x[j] - x) < 1e-9:
                idx_ref.append(int(j))
                idx_run.append(i)
        if not idx_run:
            raise ConfigError("reference grid does not align with the run grid")
        reference = (ref_problem, ref_offset, np.array(idx_ref), np.array(idx_run))

    rows = []
    tab = tableau_mod.by_name(spec["method"] or "radau5")
    # t = 0 snapshot: the transformed unknown vanishes, so |v| = |u0| exactly
    zero_err = [""] * n_points
    if reference is not None:
        ref_problem, ref_offset, idx_ref, idx_run = reference
        for i_run, i_ref in zip(idx_run, idx_ref):
            zero_err[i_run] = float(abs(offset[i_run] - ref_offset[i_ref]))
    for i, x in enumerate(grid_x):
        rows.append((0.0, float(x), float(abs(offset[i])), zero_err[i]))
    for t in snap_times:
        n = int(round(t / h))
        cfg = fastcq.CQConfig(
            tableau=tab, h=h, N=n, K=K, Lambda=spec["Lambda"], kappa=spec["kappa"],
            J=J, workers=spec["workers"], real_input=_real_mode(spec, False),
        )
        u, _ = fastcq.fast_solve(problem, cfg)
        v = u + offset
        err_col = [""] * n_points
        if reference is not None:
            ref_problem, ref_offset, idx_ref, idx_run = reference
            cfg_ref = fastcq.CQConfig(
                tableau=tab, h=h, N=n, K=110, Lambda=spec["Lambda"], kappa=60,
                J=240, workers=spec["workers"], real_input=False,
            )
            u_ref, _ = fastcq.fast_solve(ref_problem, cfg_ref)
            v_ref = u_ref + ref_offset
            for i_run, i_ref in zip(idx_run, idx_ref):
                err_col[i_run] = float(abs(v[i_run] - v_ref[i_ref]))
        for i, x in enumerate(grid_x):
            rows.append((t, float(x), float(abs(v[i])), err_col[i]))
    return rows


def run_schrodinger(spec):
    rows = schrodinger_rows(spec)
    _emit_rows(spec, "schrodinger", ("t", "x", "abs_u", "abs_err"), rows)
    return 0


# ---------------------------------------------------------------------------
# weight diagnostics


def weights_rows(spec):
    """Rows (n, K, level, err_direct_vs_contour, note).

    The plan is fixed by N = t_end / h; indices at or beyond N fall outside
    every planned interval and are reported with a notice instead of data.
    Below-cutoff indices are evaluated on the first hyperbola anyway, to
    document why the direct block exists.
    """
    alpha = spec["alpha"] if spec["alpha"] is not None else 0.5
    h = spec["h"] if spec["h"] is not None else 0.01
    t_end = spec["t_end"] if spec["t_end"] is not None else 10.0
    N = int(round(t_end / h))
    tab = tableau_mod.by_name(spec["method"] or "radau5")
    kappa = spec["kappa"]
    family = operators.dense_operator(None, caputo.EXAMPLE1_MATRIX)
    n_list = spec["steps"] or (
        0, 1, 2, 4, 8, 12, 16, 20, 21, 25, 30, 40, 60, 90, 130, 200, 300, 450, 700, 1000
    )
    k_values = (10, 15, 20, 25) if spec["K"] == _DEFAULTS["K"] else (spec["K"],)
    plan = fastcq.plan_levels(N, kappa, spec["Lambda"])
    inside = [n for n in n_list if n < plan.m[-1]]
    w_direct = {}
    if inside:
        blocks = fastcq.weight_rows_direct(family, tab, alpha, h, inside)
        w_direct = dict(zip(inside, blocks))
    rows = []
    for K in k_values:
        params = contour.select_parameters(K, spec["Lambda"], np.pi / 2 * (1 - 1e-9))
        levels = {
            ell: contour.level_nodes(
                contour.mu_level(ell, K, h, kappa, params), params, ell
            )
            for ell in range(1, plan.L + 1)
        }
        for n in n_list:
            if n >= plan.m[-1]:
                rows.append((n, K, "", "", "beyond-plan"))
                continue
            if plan.L == 0:
                rows.append((n, K, "", "", "direct-only"))
                continue
            note = ""
            ell = 1
            if n < plan.m[0]:
                note = "below-cutoff"
            else:
                while plan.m[ell] <= n:
                    ell += 1
            w_c = fastcq.weight_rows_contour(family, tab, alpha, h, n, levels[ell])
            err = float(np.max(np.abs(w_c - w_direct[n])))
            rows.append((n, K, ell, err, note))
    return rows


def run_weights(spec):
    rows = weights_rows(spec)
    _emit_rows(spec, "weights", ("n", "K", "level", "err_inf", "note"), rows)
    return 0


# ---------------------------------------------------------------------------
# selftest


def selftest_checks():
    """Fast battery of correctness checks; yields (name, ok, detail)."""
    rng = np.random.default_rng(2024)

    def check_tableaux():
        for s in (1, 2, 3):
            rep = tableau_mod.check_assumptions(tableau_mod.radau_iia(s))
            if not rep.all_pass:
                return False, f"assumptions fail for s={s}"
        return True, "radau1/3/5 pass structural assumptions"

    def check_delta():
        tab = tableau_mod.radau_iia(3)
        for _ in range(20):
            z = 0.9 * (rng.random() + 1j * rng.random())
            d = tableau_mod.delta(z, tab)
            inner = tab.A + z / (1 - z) * np.outer(np.ones(3), tab.b)
            resid = np.max(np.abs(d @ inner - np.eye(3)))
            if resid > 1e-12:
                return False, f"Delta identity residual {resid:.2e}"
        return True, "Delta(zeta) inverse identity"

    def check_dft():
        x = rng.standard_normal(160) + 1j * rng.standard_normal(160)
        back = smallmat.dft(smallmat.dft(x, -1), 1) / 160
        resid = np.max(np.abs(back - x))
        return resid < 1e-12 * 160, f"roundtrip residual {resid:.2e}"

    def check_caputo():
        import math
        got = caputo.caputo_oracle(lambda t: 2 * t, 0.5, 1.0)
        ref = 8 / (3 * math.sqrt(math.pi))
        return abs(got - ref) < 1e-10, f"power rule err {abs(got - ref):.2e}"

    def check_plan():
        plan = fastcq.plan_levels(1000, 20, 5)
        return plan.m == (21, 105, 525, 1000), f"plan {plan.m}"

    def check_equivalence():
        problem = caputo.example1_problem().problem
        cfg = fastcq.CQConfig(tableau=tableau_mod.radau_iia(2), h=1.0 / 60, N=60, K=25)
        u_fast, stats = fastcq.fast_solve(problem, cfg)
        u_dir = fastcq.direct_cq(problem, cfg)
        diff = float(np.max(np.abs(u_fast - u_dir)))
        counters_ok = (
            stats.resolvent_solves == plans_solves(60, 20, 5, 25)
            and stats.rk_steps == (25 + 1) * (60 - 21)
        )
        return diff < 1e-6 and counters_ok, f"fast-direct diff {diff:.2e}"

    def plans_solves(N, kappa, Lambda, K):
        plan = fastcq.plan_levels(N, kappa, Lambda)
        return plan.L * (K + 1)

    def check_tbc():
        fam = operators.schrodinger_tbc_1d(2.0, 61, 0.75)
        nu = 3.0 + 2.0j
        z1, z2 = fam.roots(nu)
        ok = abs(z1 * z2 - 1) < 1e-12 and abs(z1) < 1 < abs(z2)
        return ok, f"|z1|={abs(z1):.3f} |z2|={abs(z2):.3f}"

    checks = [
        ("tableau-assumptions", check_tableaux),
        ("delta-identity", check_delta),
        ("dft-roundtrip", check_dft),
        ("caputo-power-rule", check_caputo),
        ("level-plan", check_plan),
        ("fast-vs-direct", check_equivalence),
        ("tbc-roots", check_tbc),
    ]
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as exc:  # pragma: no cover - defensive
            ok, detail = False, f"exception: {exc}"
        yield name, ok, detail


def run_selftest(spec):
    failures = 0
    for name, ok, detail in selftest_checks():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            failures += 1
    if failures:
        print(f"{failures} selftest check(s) failed")
        return 4
    print("selftest passed")
    return 0


# ---------------------------------------------------------------------------


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = resolve_spec(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if spec["dump_config"]:
        for key in sorted(k for k in spec if k != "dump_config"):
            print(f"{key}={spec[key]}")
        return 0
    runners = {
        "convergence": run_convergence,
        "subdiffusion": run_subdiffusion,
        "schrodinger": run_schrodinger,
        "weights": run_weights,
        "selftest": run_selftest,
    }
    try:
        return runners[spec["experiment"]](spec)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FracCQError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
