"""Command-line entry point: ``cltlab <command> --config run.yaml``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 degenerate observable. Errors are printed to stderr as one JSON object.
"""

import argparse
import json
import math
from pathlib import Path
import sys
import time

import numpy as np
import yaml

from cltlab import __version__, billiard, clt, correlations, regularity, transfer
from cltlab.config import parse_config
from cltlab.errors import (
    CltLabError,
    ConfigError,
    DegenerateObservableError,
    NumericError,
    UnsupportedSystemError,
)
from cltlab.io import sha256_file, write_csv, write_json
from cltlab.rng import generator, substream
from cltlab.systems import IntervalMap, ToralAutomorphism

COMMANDS = ("simulate", "correlations", "clt", "bernstein", "transfer", "billiard-check", "regularity")


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, cfg, command):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg.output)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return self.out / name

    def report(self, name, payload):
        payload = {"command": self.command, "version": __version__, **self.cfg.provenance(), **payload}
        write_json(self.path(name), payload)
        return payload

    def manifest(self, wall):
        files = {name: sha256_file(self.out / name) for name in sorted(set(self.files))}
        write_json(self.out / "manifest.json", {"config_sha256": self.cfg.config_hash, "version": __version__,
                                                "seed": self.cfg.seed, "command": self.command,
                                                "files": files, "wall_time_s": wall})


def _interval_only(cfg, what):
    if not isinstance(cfg.system, IntervalMap):
        raise ConfigError(f"{what} needs an interval map", "system.name")


def _billiard_only(cfg, what):
    if not isinstance(cfg.system, billiard.BilliardMap):
        raise ConfigError(f"{what} needs a billiard system", "system.name")


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg, run):
    n = cfg.budgets["trajectory"]
    rng = generator(cfg.seed, "simulate")
    system, f = cfg.system, cfg.observable
    if isinstance(system, billiard.BilliardMap):
        start = billiard.sample_srb(system.geometry, rng)
        rows = billiard.trajectory(system.geometry, start, n)
        write_csv(run.path("trajectory.csv"), ("step", "scatterer_id", "r", "phi", "free_path"), rows)
        path = np.array([(r[1], r[2], r[3]) for r in rows])
    else:
        path = system.sample_paths(rng, 1, n)[0]
        cols = ("x1", "x2") if isinstance(system, ToralAutomorphism) else ("x",)
        pts = path.reshape(n, -1)
        write_csv(run.path("trajectory.csv"), ("step",) + cols, [(j, *map(float, pts[j])) for j in range(n)])
    vals = np.asarray(f(path))
    return run.report("simulate.json", {"steps": n, "birkhoff_sum": complex(vals.sum()),
                                        "time_average": complex(vals.mean()), "system": system.descriptor(),
                                        "observable": f.descriptor()})


def cmd_correlations(cfg, run):
    b = cfg.budgets
    series = correlations.autocorrelation(cfg.system, cfg.observable, range(b["lags"] + 1), b["samples"],
                                          substream(cfg.seed, "correlations"), workers=cfg.workers)
    series.to_csv(run.path("autocorrelation.csv"))
    run.files.append("autocorrelation.json")
    out = {"budget": b["samples"], "lags": b["lags"]}
    try:
        fit = correlations.fit_decay_rate(series)
        out["decay_fit"] = {"rate_hat": fit.rate_hat, "prefactor_hat": fit.prefactor_hat, "window": fit.window,
                            "residual": fit.residual, "lags_used": fit.lags_used}
    except NumericError as exc:
        out["decay_fit"] = {"error": str(exc)}
    cutoff = min(b["gk_cutoff"], b["lags"])
    partial, flag = correlations.moment_condition(series, cutoff)
    sigma2, diag = clt.green_kubo_variance(series, cutoff)
    out.update(moment_partial_sum=partial, moment_tail_flag=flag, sigma2_green_kubo=sigma2, green_kubo=diag)
    return run.report("correlations.json", out)


def cmd_clt(cfg, run):
    b = cfg.budgets
    rep = clt.clt_test(cfg.system, cfg.observable, b["clt_n"], b["clt_samples"], substream(cfg.seed, "clt"),
                       mean=cfg.observable_mean, gk_budget=b["gk_budget"], gk_cutoff=b["gk_cutoff"],
                       workers=cfg.workers)
    clt.emit_histogram(rep.normalized, b["histogram_bins"], run.path("histogram.csv"))
    ratio, se = clt.variance_ratio(cfg.system, cfg.observable, b["clt_n"], max(b["clt_samples"], 1000),
                                   substream(cfg.seed, "clt-ratio"), workers=cfg.workers)
    return run.report("clt.json", {**rep.to_dict(), "variance_ratio_independent": ratio,
                                   "variance_ratio_se": se})


def cmd_bernstein(cfg, run):
    sch = cfg.schedule
    ts = [0.0] + [t for t in cfg.t_grid if t != 0]
    st = clt.block_statistics(cfg.system, cfg.observable, sch, ts, cfg.budgets["block_samples"],
                              substream(cfg.seed, "bernstein"), workers=cfg.workers)
    rows = []
    for i, t in enumerate(ts):
        gap, se = st.gap(i)
        pg, _ = st.pair_gaps(i)
        rows.append({"t": t, "block_gap": gap, "block_gap_se": se, "pair_gap_sum": float(pg.sum()),
                     "telescoping_residual": abs(st.direct(i) - st.telescoped(i)),
                     "max_abs_mean_w": float(np.abs(st.means[i]).max())})
    return run.report("bernstein.json", {"schedule": sch.to_dict(), "var_sp": st.var_sp, "budget": st.samples,
                                         "t_grid": rows})


def cmd_transfer(cfg, run):
    _interval_only(cfg, "transfer")
    system, G = cfg.system, cfg.budgets["grid"]
    phi = transfer.ulam_density(system, G)
    phi.to_csv(run.path("density.csv"))
    f = transfer.GridFunction.sample(lambda x: np.real(cfg.observable(x)), G)
    sch = cfg.schedule
    var_sp = transfer.grid_block_variance(system, f, sch.p, phi)
    if not var_sp > 1e-12 * sch.p * f.sup() ** 2:
        raise DegenerateObservableError(f"grid Var S_p = {var_sp:.3g}")
    scale = math.sqrt(sch.k * var_sp)
    out = {"grid": G, "density_fixed_point_tv": transfer.total_variation(transfer.transfer_apply(system, phi) - phi),
           "density_iterations": phi.metadata.get("iterations"), "var_sp_grid": var_sp}
    one = transfer.GridFunction(np.ones(G))
    out["identity_deviation"] = transfer.verify_transfer_identity(system, f, one)
    try:
        rows = transfer.variation_recursion(system, f, 1.0, sch, phi, var_sp)
        write_csv(run.path("variation_recursion.csv"), ("p", "variation", "bound"), rows)
        out["variation_recursion_within_bound"] = all(r[1] <= r[2] for r in rows)
    except UnsupportedSystemError as exc:
        out["variation_recursion"] = {"skipped": str(exc)}
    qs = list(range(1, sch.q + 1))
    table = []
    for t in cfg.t_grid:
        tv, gtv = transfer.block_transfer_variation(system, f, t, sch.p, scale, phi)
        gaps = transfer.block_gap_vs_q(system, f, t, sch.p, qs, scale, phi)
        entry = {"t": t, "block_tv": tv, "g_tv": gtv, "gaps": gaps.tolist()}
        if np.all(gaps > 0) and len(qs) >= 3:
            rho, pref, resid = transfer.fit_geometric(qs, gaps)
            lam = 1.0 / rho
            ratio = gaps / (lam ** (-np.asarray(qs) - 1.0) * (1 + cfg.pw_constants.b * tv))
            entry["fit"] = {"rho": rho, "prefactor": pref, "log_residual": resid, "Lambda": lam,
                            "K_fitted": float(ratio.max()), "b": cfg.pw_constants.b, "label": "fitted"}
        table.append(entry)
    out["blocks"] = table
    return run.report("transfer.json", out)


def cmd_billiard_check(cfg, run):
    _billiard_only(cfg, "billiard-check")
    geom = cfg.system.geometry
    n = cfg.budgets["samples"]
    rep = billiard.validate_geometry(geom, min(n, 100_000), seed=cfg.seed)
    mfp, mfp_se, capped = billiard.mean_free_path(geom, n, seed=cfg.seed)
    rng = generator(cfg.seed, "srb-check")
    X = billiard.sample_srb(geom, rng, n)
    res = billiard.collision_batch(geom, X)
    ok = res.status == billiard.OK
    ks = clt.ks_statistic(res.coords[ok, 2], lambda p: (np.sin(p) + 1) / 2)
    from scipy.stats import kstwo

    crit = float(kstwo.ppf(0.99, int(ok.sum())))
    back = billiard.collision_batch(geom, billiard.reverse(res.coords[ok]))
    Z = billiard.reverse(back.coords)
    dr = np.abs(Z[:, 1] - X[ok, 1])
    per = geom.perimeters[X[ok, 0].astype(int)]
    dr = np.minimum(dr, per - dr)
    rev = float(max(dr.max(), np.abs(Z[:, 2] - X[ok, 2]).max(), np.abs(Z[:, 0] - X[ok, 0]).max()))
    params = billiard.HStripParams(getattr(cfg.system, "k0", 2))
    holder = {}
    for name, f in (("reflection-angle", billiard.reflection_angle()), ("free-path", billiard.free_path(geom))):
        try:
            est = billiard.estimate_dynamical_holder(geom, f, cfg.budgets["pair_budget"], cfg.budgets["cap"],
                                                     seed=cfg.seed, params=params)
            holder[name] = {"K": est.K, "theta": est.theta, "violation_fraction": est.violation_fraction,
                            "diagnostics": est.diagnostics}
        except NumericError as exc:
            holder[name] = {"error": str(exc)}
    return run.report("billiard_check.json", {
        "horizon": rep.status, "max_free_path": rep.max_free_path, "capped_rays": rep.capped,
        "open_directions": rep.probe_directions, "mean_free_path": mfp, "mean_free_path_se": mfp_se,
        "mean_free_path_formula": billiard.mean_free_path_formula(geom), "capped_flights": capped,
        "srb_ks": ks, "srb_ks_critical_1pct": crit, "srb_pass": ks < crit, "reversal_max_error": rev,
        "singular_or_capped": int((~ok).sum()), "holder": holder,
        "downstream_flag": rep.status != "verified-finite"})


def cmd_regularity(cfg, run):
    reg = cfg.regularity
    f, g = reg["f"], reg["g"]
    est = {}
    if reg["estimate"]:
        _billiard_only(cfg, "regularity estimation")
        geom = cfg.system.geometry
        params = billiard.HStripParams(getattr(cfg.system, "k0", 2))
        for direction, tag in (("past", regularity.H_PLUS), ("future", regularity.H_MINUS)):
            e = billiard.estimate_dynamical_holder(geom, cfg.observable, cfg.budgets["pair_budget"],
                                                   cfg.budgets["cap"], seed=cfg.seed, direction=direction,
                                                   params=params)
            est[direction] = {"K": e.K, "theta": e.theta, "violation_fraction": e.violation_fraction}
            b = e.to_budget(cfg.observable.sup_norm, tag)
            if tag == regularity.H_PLUS and f is None:
                f = b
            if tag == regularity.H_MINUS and g is None:
                g = b
    out = {"estimated": est}
    if f is not None and g is not None:
        c = cfg.billiard_constants
        pair = [regularity.billiard_pair_bound(f, g, c, n)[0] for n in range(reg["n_max"] + 1)]
        out["billiard"] = {"f": f.to_dict(), "g": g.to_dict(), "constants": vars(c),
                           "rate": regularity.billiard_rate(f, g, c), "pair_bound": pair,
                           "multi_bound": [regularity.billiard_multi_bound(f, reg["r"], g, reg["k"], c, n)
                                           for n in range(reg["n_max"] + 1)], "r": reg["r"], "k": reg["k"]}
        if isinstance(cfg.system, billiard.BilliardMap):
            series = correlations.pair_correlation(cfg.system, cfg.observable, cfg.observable,
                                                   range(reg["n_max"] + 1), cfg.budgets["samples"],
                                                   substream(cfg.seed, "regularity"), workers=cfg.workers)
            rows = []
            for n, est_n, se in zip(series.lags, series.estimates, series.standard_errors):
                bound = pair[int(n)]
                usable = se < 0.1 * bound
                rows.append({"n": int(n), "measured": abs(est_n), "se": float(se), "bound": bound,
                             "checked": bool(usable), "within": bool(abs(est_n) <= bound) if usable else None})
            out["bound_consistency"] = rows
    if reg["anosov"]:
        fac = reg["anosov"]
        ac = cfg.anosov_constants
        s_b = regularity.anosov_product_budget(fac, "stable", ac.volume_of_one)
        u_b = regularity.anosov_product_budget(fac, "unstable", ac.volume_of_one)
        out["anosov"] = {"stable_norm": s_b.s_norm, "unstable_norm": u_b.u_norm,
                         "pair_bound": [regularity.anosov_pair_bound(u_b, s_b, ac, n)
                                        for n in range(reg["n_max"] + 1)]}
    return run.report("regularity.json", out)


HANDLERS = {
    "simulate": cmd_simulate,
    "correlations": cmd_correlations,
    "clt": cmd_clt,
    "bernstein": cmd_bernstein,
    "transfer": cmd_transfer,
    "billiard-check": cmd_billiard_check,
    "regularity": cmd_regularity,
}


def build_parser():
    p = argparse.ArgumentParser(prog="cltlab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML experiment file")
    p.add_argument("--seed", type=int, help="override the root seed (u64)")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--workers", type=int, help="worker threads for ensembles")
    return p


def _fail(code, kind, message, field=None, out=None):
    err = {"error": kind, "message": message, "exit_code": code}
    if field is not None:
        err["field"] = field
    print(json.dumps(err), file=sys.stderr)
    if out is not None and Path(out).is_dir():
        write_json(Path(out) / "error.json", err)
    return code


def run(argv=None):
    args = build_parser().parse_args(argv)
    out = args.out
    try:
        try:
            data = yaml.safe_load(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}", "--config") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"YAML parse error: {exc}", "<root>") from None
        if isinstance(data, dict):
            if args.seed is not None:
                data["seed"] = args.seed
            if args.out is not None:
                data["output"] = args.out
            if args.workers is not None:
                data["workers"] = args.workers
        cfg = parse_config(data)
        out = cfg.output
        started = time.perf_counter()
        r = Run(cfg, args.command)
        HANDLERS[args.command](cfg, r)
        r.manifest(round(time.perf_counter() - started, 3))
    except ConfigError as exc:
        return _fail(2, "config", str(exc), exc.field, out)
    except DegenerateObservableError as exc:
        return _fail(4, "degenerate-observable", str(exc), out=out)
    except (NumericError, CltLabError, ValueError, ArithmeticError) as exc:
        return _fail(3, "numeric", f"{type(exc).__name__}: {exc}", out=out)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
