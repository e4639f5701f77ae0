"""levy-she command line: one config file in, CSV/JSON reports out."""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, growth, simulator, tail_analytics
from .config import EXPERIMENTS, SECTION, ExperimentConfig, load
from .errors import ConfigInvalid, LevySheError, Unclassified

SCHEMA = 1
TAIL_HEADER = ("quantity", "r", "value", "kind", "ci_halfwidth")


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.12g" % float(v)
    return str(v)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows, comments: dict) -> str:
    lines = [f"# schema={SCHEMA}"] + [f"# {k}={fmt(v)}" for k, v in comments.items()]
    lines.append(",".join(header))
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def json_text(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=1, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


def _levels(sec, lo=1.0, hi=1e4, per_decade=10):
    if "levels" in sec:
        return np.asarray(sec["levels"], dtype=float)
    return tail_analytics.level_grid(float(sec.get("r_min", lo)), float(sec.get("r_max", hi)), int(sec.get("per_decade", per_decade)))


def _box(sec, d):
    box = sec.get("A", {})
    lo = np.broadcast_to(np.asarray(box.get("lo", 0.0), dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(box.get("hi", 1.0), dtype=float), (d,))
    return lo, hi


def _curve_rows(quantity, curve):
    hw = curve.ci_halfwidth if curve.ci_halfwidth is not None else [None] * len(curve.levels)
    for r, v, h in zip(curve.levels, curve.values, hw):
        yield quantity, float(r), float(v), curve.kind, h


# ---------------------------------------------------------------------------
def run_tails(cfg, spec, params, out: Path, comments):
    sec = cfg.section("tails")
    levels = _levels(sec)
    A = _box(sec, params.d)
    rows, skipped = [], []
    for quantity in ("eta", "tau", "eta0", "etaA"):
        for kind in ("exact_quadrature", "exact_alternate", "asymptotic"):
            try:
                curve = tail_analytics.tail_curve(quantity, spec, params, levels, kind, A=A)
            except ValueError:
                continue
            except Unclassified as exc:
                skipped.append(f"{quantity}/{kind}: {exc}")
                continue
            rows.extend(_curve_rows(quantity, curve))
    if skipped:
        comments = {**comments, "skipped": " | ".join(skipped)}
    write_atomic(out / "tails.csv", csv_text(TAIL_HEADER, rows, comments))
    return ["tails.csv"]


def run_simulate(cfg, spec, params, out: Path, comments):
    sec = cfg.section("simulate")
    d = params.d
    lo = np.broadcast_to(np.asarray(sec.get("grid_lo", -1.0), dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(sec.get("grid_hi", 1.0), dtype=float), (d,))
    n = int(sec.get("grid_n", 21))
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    sample = simulator.simulate_field(spec, params, grid, sec.get("eps"), sec.get("padding"), cfg.seed)
    meta = {k: sample.meta[k] for k in ("padding", "eps", "n_atoms", "shift")}
    comments = {**comments, "bias_bound": sample.bias_bound, **meta}
    header = [f"x{i + 1}" for i in range(d)] + ["value"]
    rows = [list(x) + [v] for x, v in zip(sample.grid, sample.values)]
    write_atomic(out / "field.csv", csv_text(header, rows, comments))
    return ["field.csv"]


def _overlay(estimand, spec, params, levels, A):
    vol = float(np.prod(A[1] - A[0]))
    if estimand == "Ybar":
        return [("Ybar", "exact_quadrature", 1 - tail_analytics.sup_law_Ybar(spec, params, levels))]
    if estimand == "XbarA":
        return [("XbarA", "exact_quadrature", tail_analytics.sup_law_XbarA(spec, params, vol, levels))]
    if estimand == "Y_point":
        out = [("eta", "exact_quadrature", tail_analytics.eta_tail(spec, params, levels))]
        try:
            out.append(("eta", "asymptotic", tail_analytics.eta_tail_asymptotic(spec, params, levels)))
        except Unclassified:
            pass
        return out
    if estimand == "XA_sum":
        return [("tau_scaled", "exact_quadrature", vol * tail_analytics.tau_tail(spec, params, levels))]
    return [("etaA", "exact_quadrature", tail_analytics.etaA_tail(spec, params, levels, A=A))]


def run_mc_tail(cfg, spec, params, out: Path, comments):
    sec = cfg.section("mc-tail")
    estimand = sec.get("estimand", "Ybar")
    levels = _levels(sec)
    A = _box(sec, params.d)
    n = int(sec.get("n_replicates", 10_000))
    kw = {k: sec[k] for k in ("eps", "padding", "level", "points_per_axis") if k in sec}
    samples, meta = simulator.sample_estimand(estimand, spec, params, n, cfg.seed, A, float(kw.pop("level", levels[0])), **kw)
    curve = simulator.empirical_curve(samples, levels)
    rows = list(_curve_rows(estimand, curve))
    for quantity, kind, values in _overlay(estimand, spec, params, levels, A):
        rows += [(quantity, float(r), float(v), kind, None) for r, v in zip(levels, np.atleast_1d(values))]
    comments = {**comments, "n_replicates": n, **{k: v for k, v in sorted(meta.items())}}
    files = ["mc_tail.csv"]
    write_atomic(out / "mc_tail.csv", csv_text(TAIL_HEADER, rows, comments))
    if sec.get("replicates_csv", False):
        write_atomic(out / "replicates.csv", csv_text(("replicate", "estimand", "value"), simulator.replicate_rows(estimand, samples), comments))
        files.append("replicates.csv")
    return files


def _rate(sec):
    return growth.rate_from_dict(sec.get("rate", {"form": "PowerLog", "a": 0.5, "b": 0.5}))


def run_growth(cfg, spec, params, out: Path, comments):
    sec = cfg.section("growth-test")
    which = sec.get("which", ["tau", "eta", "eta0"])
    which = [which] if isinstance(which, str) else list(which)
    f = _rate(sec)
    R_values = tuple(float(v) for v in sec.get("R_values", (1e2, 1e4, 1e6)))
    reports = {w: growth.integral_test(w, spec, params, f, R_values).to_json() for w in which}
    write_atomic(out / "growth.json", json_text({"schema": SCHEMA, **comments, "reports": reports}))
    return ["growth.json"]


def run_peaks(cfg, spec, params, out: Path, comments):
    sec = cfg.section("peaks")
    rep = growth.peak_events(
        sec.get("event_kind", "V_event"),
        spec,
        params,
        _rate(sec),
        float(sec.get("K", 1.0)),
        int(sec.get("n_max", 1000)),
        sec.get("delta"),
        cfg.seed,
        int(sec.get("runs", 1)),
    )
    write_atomic(out / "peaks.json", json_text({"schema": SCHEMA, **comments, "report": rep.to_json()}))
    header = ["n", "mean", "expected_cumulative", "observed_cumulative"]
    n, e, o = rep.cumulative()
    write_atomic(out / "peaks.csv", csv_text(header, zip(n, rep.means, e, o), comments))
    return ["peaks.json", "peaks.csv"]


RUNNERS = {
    "tails": run_tails,
    "simulate": run_simulate,
    "mc-tail": run_mc_tail,
    "growth-test": run_growth,
    "peaks": run_peaks,
}


def run(experiment: str, cfg: ExperimentConfig, out: Path) -> list:
    """Validate, run one experiment and write its artifacts; returns file names."""
    if cfg.experiment is not None and cfg.experiment != experiment:
        raise ConfigInvalid(f"config is for experiment {cfg.experiment!r}, not {experiment!r}")
    cfg.validate(experiment)
    spec, params = cfg.build()
    fp = tail_analytics.fingerprint(cfg.to_dict())
    comments = {"experiment": experiment, "fingerprint": fp, "seed": cfg.seed}
    files = RUNNERS[experiment](cfg, spec, params, out, comments)
    manifest = {"schema": SCHEMA, "version": __version__, "config": cfg.to_dict(), "files": files, **comments}
    write_atomic(out / f"manifest_{SECTION[experiment]}.json", json_text(manifest))
    return files


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levy-she", description="Tails, peaks and simulation of the heat equation with Levy noise.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("config", help="TOML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigInvalid("seed must be non-negative")
            cfg.seed = args.seed
        files = run(args.command, cfg, Path(args.out))
    except OSError as exc:
        print(f"CONFIG_INVALID: {exc}", file=sys.stderr)
        return ConfigInvalid.exit_status
    except LevySheError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status
    except (ValueError, KeyError, TypeError) as exc:
        print(f"CONFIG_INVALID: {exc}", file=sys.stderr)
        return ConfigInvalid.exit_status
    for name in files:
        print(Path(args.out) / name)
    return 0


if __name__ == "__main__":
    sys.exit(main())
