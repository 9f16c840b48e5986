"""Command-line front end.

Every numeric report field is emitted as ``{"value": x, "provenance": tag}``
with ``tag`` one of ``"exact"``, ``"paper formula"``, ``"numeric"``,
``"monte-carlo"`` or ``"monte-carlo ± se"``.  Output is a deterministic
function of (config, seed, workers): JSON keys are sorted and no timestamps
are written.  Non-finite numbers are written as the strings ``"inf"``,
``"-inf"`` and ``"nan"``.

Exit codes: 0 success, 2 validation/domain error, 3 size-cap refusal,
1 other library errors (e.g. non-convergence).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import coloring, ensembles, graphsim, thresholds, treesim
from .errors import CSPLabError, DomainError, SizeCapError, ValidationError

EXACT, PAPER, NUMERIC, MC = "exact", "paper formula", "numeric", "monte-carlo"
MC_SE = "monte-carlo ± se"

COMMANDS = ("analyze", "thresholds", "tree-recon", "second-moment", "instances", "coloring-opt")

DEFAULTS = {
    "ensemble": None,
    "k": None,
    "q": None,
    "alpha": None,
    "alpha_range": None,
    "depth": 6,
    "samples": None,
    "seed": 0,
    "grid": None,
    "out": None,
    "format": "json",
    "workers": None,
    "table": False,
    "n": None,
    "delta": 0.0,
    "epsilon": 0.1,
}


def tag(value, provenance):
    return {"value": value, "provenance": provenance}


def _clean(obj):
    """Convert numpy scalars/arrays and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def derive_seed(master, *counter):
    """Child seed from the master seed by counter-mode splitting."""
    ss = np.random.SeedSequence([int(master) & (2**64 - 1), *map(int, counter)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# --- config -----------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="csplab", description="Random CSP reconstruction and clustering toolkit.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON file with option values (command-line flags win)")
    p.add_argument("--ensemble", help="builtin name (hyp2col, nae, xor, coloring), comma list, or JSON file")
    p.add_argument("--k", help="clause arity; comma list allowed for --table")
    p.add_argument("--q", type=int, help="number of colors")
    p.add_argument("--alpha", type=float)
    p.add_argument("--alpha-range", dest="alpha_range", help="a:b:step (inclusive of b)")
    p.add_argument("--depth", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--n", type=int, help="number of variables / vertices")
    p.add_argument("--delta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--workers", type=int)
    p.add_argument("--table", action="store_true", default=None)
    return p


def resolve_config(ns):
    cfg = dict(DEFAULTS)
    if ns.config:
        try:
            loaded = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {ns.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(loaded) - set(DEFAULTS) - {"command"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in loaded.items() if k != "command"})
    for key in DEFAULTS:
        val = getattr(ns, key, None)
        if val is not None:
            cfg[key] = val
    cfg["command"] = ns.command
    if cfg["k"] is not None:
        cfg["k"] = str(cfg["k"])
    if cfg["workers"] is None:
        cfg["workers"] = os.cpu_count() or 1
    if cfg["seed"] is None:
        cfg["seed"] = 0
    return cfg


def _alphas(cfg):
    if cfg["alpha_range"] is not None:
        try:
            a, b, step = (float(t) for t in str(cfg["alpha_range"]).split(":"))
        except ValueError as exc:
            raise ValidationError("--alpha-range must be a:b:step") from exc
        if step <= 0 or b < a:
            raise ValidationError("--alpha-range needs step > 0 and b >= a")
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        return [round(a + i * step, 12) for i in range(count)]
    if cfg["alpha"] is None:
        raise ValidationError("an --alpha or --alpha-range is required")
    return [float(cfg["alpha"])]


def _ks(cfg):
    if cfg["k"] is None:
        raise ValidationError("--k is required")
    try:
        return [int(t) for t in str(cfg["k"]).split(",")]
    except ValueError as exc:
        raise ValidationError(f"bad --k {cfg['k']!r}") from exc


def _ensemble_names(cfg):
    if not cfg["ensemble"]:
        raise ValidationError("--ensemble is required")
    return [t.strip() for t in str(cfg["ensemble"]).split(",") if t.strip()]


def _distribution(name, k):
    if name.endswith(".json") or Path(name).is_file():
        return ensembles.load_distribution(name)
    return ensembles.builtin(name, k)


def _single_distribution(cfg):
    names = _ensemble_names(cfg)
    if len(names) != 1:
        raise ValidationError("exactly one ensemble source is required for this command")
    ks = _ks(cfg) if not Path(names[0]).is_file() else [None]
    if len(ks) != 1:
        raise ValidationError("exactly one --k is required for this command")
    return _distribution(names[0], ks[0])


# --- commands ---------------------------------------------------------------------------


def cmd_analyze(cfg):
    dist = _single_distribution(cfg)
    rep = ensembles.check_conditions(dist, cfg["grid"] or 201)
    const = ensembles.ensemble_constants(dist)
    checks = {
        name: {"passed": getattr(rep, name).passed, "detail": getattr(rep, name).detail}
        for name in ("permutation_symmetric", "balanced", "feasible", "dominance")
    }
    result = {
        "ensemble": dist.name,
        "k": dist.k,
        "conditions": checks,
        "all_passed": rep.all_passed,
        "omega": tag(const.omega, EXACT),
        "omega_hat": tag(const.omega_hat, EXACT),
        "constants_advisory": const.advisory,
        "dominance_margin": tag(rep.dominance_margin, NUMERIC),
        "dominance_worst_theta": tag(rep.dominance_worst_theta, NUMERIC),
        "norm_floor": tag(rep.norm_floor, NUMERIC),
        "l1_exponent_a": tag(rep.l1_exponent_a, NUMERIC),
        "decay_constant_C": tag(rep.decay_constant_C, NUMERIC),
        "decay_argmin_theta": tag(rep.decay_argmin_theta, NUMERIC),
        "influence_identity_error": tag(rep.influence_identity_error, NUMERIC),
        "grid_resolution": rep.grid_resolution,
    }
    return result, None


def _threshold_row(name, k, q=None):
    if name == "coloring":
        s, d, r = thresholds.coloring_thresholds(q)
        return {
            "ensemble": "coloring",
            "q": q,
            "reconstruction_clustering": tag(d, PAPER),
            "reconstruction_upper": tag(r, PAPER),
            "sat_upper": tag(s, PAPER),
        }
    dist = _distribution(name, k)
    rep = thresholds.threshold_report(dist)
    return {
        "ensemble": dist.name,
        "k": dist.k,
        "reconstruction_clustering": tag(rep.alpha_recon_leading, PAPER),
        "sat_lower": tag(rep.alpha_sat_lower, PAPER),
        "sat_upper": tag(rep.alpha_sat_upper, PAPER),
        "tree_threshold": tag(rep.alpha_tree_numeric, NUMERIC),
        "tree_threshold_printed_formula": tag(rep.alpha_tree_paper_formula, PAPER),
        "notes": rep.notes,
    }


def cmd_thresholds(cfg):
    names = _ensemble_names(cfg)
    rows, skipped = [], []
    for name in names:
        if name == "coloring":
            if cfg["q"] is None:
                raise ValidationError("--q is required for the coloring ensemble")
            rows.append(_threshold_row(name, None, cfg["q"]))
            continue
        for k in _ks(cfg):
            try:
                rows.append(_threshold_row(name, k))
            except DomainError as exc:
                if len(names) * len(_ks(cfg)) == 1:
                    raise
                skipped.append(f"{name} k={k}: {exc}")
    if cfg["table"]:
        cols = ("reconstruction_clustering", "sat_lower", "sat_upper")
        table = [
            {"ensemble": r["ensemble"], "k": r.get("k"), "q": r.get("q"), **{c: r[c] for c in cols if c in r}}
            for r in rows
        ]
        table_rows = [
            {"ensemble": t["ensemble"], "k": t["k"] if t["k"] is not None else "",
             "q": t["q"] if t["q"] is not None else "",
             **{c: t[c]["value"] for c in cols if c in t}}
            for t in table
        ]
        return {"table": table, "skipped": skipped}, table_rows
    flat = [
        {"ensemble": r["ensemble"], **{key: val["value"] for key, val in r.items() if isinstance(val, dict)}}
        for r in rows
    ]
    return {"rows": rows, "skipped": skipped}, flat


def cmd_tree_recon(cfg):
    dist = _single_distribution(cfg)
    depth = cfg["depth"]
    if depth is None or depth < 1:
        raise ValidationError("--depth must be at least 1")
    samples = cfg["samples"] or 10_000
    rows, out = [], []
    for ia, alpha in enumerate(_alphas(cfg)):
        rec = thresholds.naive_recursion_limit(dist, alpha, max_iter=depth)
        z = rec.z + [rec.z[-1]] * (depth + 1 - len(rec.z))
        for d in range(1, depth + 1):
            seed = derive_seed(cfg["seed"], ia, d)
            h = treesim.sample_biases(dist, alpha, d, samples, seed=seed, workers=cfg["workers"])
            st = treesim.summarize_biases(h, alpha, d)
            cons = treesim.consistency_diagnostics(h)
            row = st.as_row()
            row["z_recursion"] = z[d]
            row["consistency_passed"] = cons.passed
            rows.append(row)
            out.append(
                {
                    "alpha": tag(alpha, EXACT),
                    "depth": d,
                    "n_samples": st.n_samples,
                    "mean_abs_h": tag([st.mean_abs_h, st.se_mean_abs_h], MC_SE),
                    "mean_h_plus": tag([st.mean_h_plus, st.se_mean_h_plus], MC_SE),
                    "z_rate": tag([st.z_rate, st.se_z_rate], MC_SE),
                    "z_recursion": tag(z[d], NUMERIC),
                    "consistency_mean_diff": tag([cons.mean_diff, cons.mean_diff_se], MC_SE),
                    "consistency_ratio_diff": tag([cons.ratio_diff, cons.ratio_diff_se], MC_SE),
                    "consistency_passed": cons.passed,
                    "seed": seed,
                }
            )
    return {"ensemble": dist.name, "k": dist.k, "rows": out}, rows


def cmd_second_moment(cfg):
    dist = _single_distribution(cfg)
    grid = cfg["grid"] or 101
    theta = np.linspace(0.0, 1.0, grid)
    rows, out = [], []
    for alpha in _alphas(cfg):
        vals = thresholds.phi(dist, alpha, theta)
        sup = thresholds.phi_sup(dist, alpha)
        first = thresholds.first_moment_exponent(dist, alpha, theta)
        out.append(
            {
                "alpha": tag(alpha, EXACT),
                "phi": tag(vals, NUMERIC),
                "first_moment_exponent": tag(first, NUMERIC),
                "phi_sup": tag(sup.value, NUMERIC),
                "phi_argmax": tag(sup.argmax, NUMERIC),
                "phi_sup_open": tag(sup.value_open, NUMERIC),
                "phi_argmax_open": tag(sup.argmax_open, NUMERIC),
                "certified": bool(sup.value_open < 0),
                "delta": tag(sup.delta, EXACT),
            }
        )
        rows.extend(
            {"alpha": alpha, "theta": float(t), "phi": float(v), "first_moment_exponent": float(f)}
            for t, v, f in zip(theta, vals, first)
        )
    bounds = thresholds.sat_bounds(dist)
    result = {
        "ensemble": dist.name,
        "k": dist.k,
        "theta": tag(theta, EXACT),
        "sweep": out,
        "sat_lower": tag(bounds.lower, PAPER),
        "sat_upper": tag(bounds.upper, PAPER),
        "certificate_alpha": tag(bounds.certificate_alpha, PAPER),
        "certificate_sup": tag(bounds.certificate_sup, NUMERIC),
        "certificate_passed": bounds.certified,
    }
    return result, rows


def cmd_instances(cfg):
    names = _ensemble_names(cfg)
    n = cfg["n"] or 12
    count = cfg["samples"] or 100
    alphas = _alphas(cfg)
    rows, out = [], []
    coloring_mode = names == ["coloring"]
    dist = None if coloring_mode else _single_distribution(cfg)
    if coloring_mode and cfg["q"] is None:
        raise ValidationError("--q is required for the coloring ensemble")
    for ia, alpha in enumerate(alphas):
        zs, sph = [], []
        for s in range(count):
            seed = derive_seed(cfg["seed"], ia, s)
            if coloring_mode:
                inst = graphsim.sample_coloring_instance(n, cfg["q"], alpha, seed)
            else:
                inst = graphsim.sample_instance(dist, n, alpha, seed)
            stats = graphsim.solve_exhaustive(inst)
            zs.append(stats.Z)
            if coloring_mode and 0 < stats.Z and stats.solutions is not None:
                sph.append(graphsim.mean_joint_type_dist2(stats.solutions, cfg["q"]))
            rows.append({"alpha": alpha, "instance": s, "seed": seed, "Z": stats.Z,
                         "Z_b": "" if stats.Z_b is None else stats.Z_b})
        zs = np.array(zs, dtype=float)
        ez = graphsim.expected_Z_coloring(n, cfg["q"], alpha) if coloring_mode else graphsim.expected_Z(dist, n, alpha)
        se = float(zs.std(ddof=1) / math.sqrt(count)) if count > 1 else 0.0
        entry = {
            "alpha": tag(alpha, EXACT),
            "n": n,
            "instances": count,
            "mean_Z": tag([float(zs.mean()), se], MC_SE),
            "expected_Z": tag(ez, EXACT),
            "sat_fraction": tag(float(np.mean(zs > 0)), MC),
        }
        if coloring_mode:
            sph = np.array(sph)
            entry["mean_joint_type_dist2"] = tag(
                [float(sph.mean()) if sph.size else math.nan,
                 float(sph.std(ddof=1) / math.sqrt(sph.size)) if sph.size > 1 else 0.0],
                MC_SE,
            )
        out.append(entry)
    name = "coloring" if coloring_mode else dist.name
    return {"ensemble": name, "q": cfg["q"], "k": None if coloring_mode else dist.k, "sweep": out}, rows


def cmd_coloring_opt(cfg):
    q = cfg["q"]
    if q is None:
        raise ValidationError("--q is required")
    rng = np.random.default_rng(derive_seed(cfg["seed"], 0))
    draws = cfg["samples"] or 1000
    delta, eps = float(cfg["delta"]), float(cfg["epsilon"])
    rows, out = [], []
    kap = coloring.kappa(q, delta, eps, seed=derive_seed(cfg["seed"], 1))
    for ia, alpha in enumerate(_alphas(cfg)):
        res = coloring.birkhoff_sup(q, alpha, seed=derive_seed(cfg["seed"], 2, ia))
        vec_slack = _vector_slacks(q, alpha, eps, draws, rng)
        mat_slack = math.nan
        if alpha < kap.kappa and eps > 2 * delta:
            mat_slack = _matrix_slacks(q, alpha, delta, eps, kap.kappa, draws, rng)
        out.append(
            {
                "alpha": tag(alpha, EXACT),
                "birkhoff_sup": tag(res.value, NUMERIC),
                "uniform_value": tag(res.reference, PAPER),
                "argmax_distance": tag(float(np.max(np.abs(res.argmax - 1.0 / q**2))), NUMERIC),
                "argmax": tag(res.argmax, NUMERIC),
                "converged": res.converged,
                "min_vector_gap_slack": tag(vec_slack, MC),
                "min_matrix_gap_slack": tag(mat_slack, MC),
            }
        )
        rows.append({"alpha": alpha, "birkhoff_sup": res.value, "uniform_value": res.reference,
                     "min_vector_gap_slack": vec_slack, "min_matrix_gap_slack": mat_slack})
    result = {
        "q": q,
        "delta": tag(delta, EXACT),
        "epsilon": tag(eps, EXACT),
        "kappa": tag(kap.kappa, NUMERIC),
        "kappa_bracket": tag(list(kap.bracket), NUMERIC),
        "reference_alpha": tag((q - 1) * math.log(q - 1), PAPER),
        "draws": draws,
        "sweep": out,
    }
    return result, rows


def _vector_slacks(q, alpha, eps, draws, rng):
    worst, n = math.inf, 0
    while n < draws:
        d = rng.normal(size=q)
        d -= d.mean()
        d *= math.sqrt(eps / float(d @ d))
        w = 1.0 / q + d
        if w.min() < 0:
            continue
        n += 1
        worst = min(worst, coloring.gap_bounds(w / w.sum(), alpha, eps))
    return worst


def _matrix_slacks(q, alpha, delta, eps, kap, draws, rng):
    perms = np.array([np.eye(q)[rng.permutation(q)] for _ in range(2 * q)]) / q
    # mixtures of permutation types have uniform marginals; noise (delta > 0 only)
    # moves the marginals inside the delta-ball
    scale = math.sqrt(delta) / q
    worst, n, tries = math.inf, 0, 0
    while n < draws and tries < 100 * draws:
        tries += 1
        v = np.tensordot(rng.dirichlet(np.full(perms.shape[0], 0.5)), perms, 1)
        if scale > 0:
            v = np.clip(v + rng.normal(scale=scale, size=(q, q)), 0.0, None)
            v /= v.sum()
        if not coloring.membership(v, delta, eps).member:
            continue
        n += 1
        worst = min(worst, coloring.gap_bounds(v, alpha, eps, kap, delta))
    return worst if n else math.nan


HANDLERS = {
    "analyze": cmd_analyze,
    "thresholds": cmd_thresholds,
    "tree-recon": cmd_tree_recon,
    "second-moment": cmd_second_moment,
    "instances": cmd_instances,
    "coloring-opt": cmd_coloring_opt,
}


# --- output -----------------------------------------------------------------------------


def render(cfg, result, rows):
    if cfg["format"] == "csv":
        if not rows:
            raise ValidationError(f"command {cfg['command']} has no tabular output; use --format json")
        buf = io.StringIO()
        fields = list(rows[0].keys())
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _csv_cell(r.get(k)) for k in fields})
        return buf.getvalue()
    config = {k: cfg[k] for k in sorted(cfg) if k not in ("out",)}
    doc = {"command": cfg["command"], "config": config, "result": result}
    return json.dumps(_clean(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _csv_cell(x):
    x = _clean(x)
    return repr(x) if isinstance(x, float) else x


def run(argv=None):
    """Parse ``argv``, run the command and return ``(exit_code, text)``."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = resolve_config(ns)
        result, rows = HANDLERS[cfg["command"]](cfg)
        text = render(cfg, result, rows)
    except SizeCapError as exc:
        return 3, f"error: {exc}\n"
    except (ValidationError, DomainError) as exc:
        return 2, f"error: {exc}\n"
    except CSPLabError as exc:
        return 1, f"error: {exc}\n"
    if cfg["out"]:
        Path(cfg["out"]).write_text(text)
        return 0, ""
    return 0, text


def main(argv=None):
    code, text = run(argv)
    if text:
        (sys.stdout if code == 0 else sys.stderr).write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
