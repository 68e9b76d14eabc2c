"""Command-line entry point: ``hypoparam <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import ExperimentConfig
from .ct_estimator import fit_contrast, write_fits_csv
from .dt_estimator import NarmaModel, NarmaSpec, fit_narma, stability_probe
from .errors import ConfigError, HypoparamError
from .experiments import (
    FIT_KEY, PROBE_KEY, STABILITY_HORIZON, STABILITY_RUNS, TABLE_SPACINGS,
    consistency_scan, forecast_pipeline, long_run_statistics, narma_spec, replicate_across,
    select_structure, simulate_dataset, t_values, write_replicate_csv,
)
from .forecast import write_wide_csv
from .rng import stream
from .sde_sim import read_series_csv, write_series_csv
from .stats import empirical_acf, empirical_pdf

TARGETS = ("table1", "table2", "table3", "table4", "table5", "fig-rmse", "fig-acfpdf")


class Run:
    """Resolved config plus the output directory and its manifest."""

    def __init__(self, args, cfg: ExperimentConfig):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []
        self.notes = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def write_manifest(self, command: str) -> None:
        lines = [
            f"library = hypoparam {__version__}",
            f"command = {command}",
            "",
            "[config]",
            self.cfg.to_text().rstrip("\n"),
            "",
            "[outputs]",
            *self.files,
        ]
        if self.notes:
            lines += ["", "[notes]", *self.notes]
        (self.out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _series(run: Run, data: str | None):
    if data is not None:
        return read_series_csv(data)
    (obs,) = simulate_dataset(run.cfg, 0)
    return obs


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_simulate(run: Run) -> None:
    (obs,) = simulate_dataset(run.cfg, 0)
    write_series_csv(run.path("observations.csv"), obs)


def cmd_estimate_ct(run: Run) -> None:
    obs = _series(run, run.args.data)
    fit = fit_contrast(obs, run.cfg.family)
    write_fits_csv(run.path("ct_fit.csv"), [fit])


def _write_model(run: Run, model: NarmaModel, name="narma_model.txt") -> None:
    run.path(name).write_text(model.to_text())


def cmd_fit_narma(run: Run) -> None:
    cfg = run.cfg
    obs = _series(run, run.args.data)
    seed = cfg["sim.seed"]
    if run.args.select:
        best, candidates = select_structure(cfg, obs, seed=seed)
        with open(run.path("candidates.csv"), "w") as fh:
            fh.write("structure,q,stable,score,note\n")
            for c in candidates:
                fh.write(f"{c.spec.structure},{c.spec.q},{int(c.stable)},{c.score:.17g},{c.note}\n")
        if best is None:
            raise HypoparamError("no candidate structure is stable")
        run.notes.append(f"selected {best.spec.structure} q={best.spec.q}")
        _write_model(run, best.model)
        return
    spec = narma_spec(cfg)
    model = fit_narma(spec, obs, restarts=cfg["fit.restarts"], rng=stream(seed, 0, FIT_KEY))
    _write_model(run, model)
    probe = stability_probe(model, STABILITY_HORIZON, STABILITY_RUNS, stream(seed, 0, PROBE_KEY))
    with open(run.path("stability.csv"), "w") as fh:
        fh.write("structure,q,stable,diverged,realizations,horizon\n")
        fh.write(f"{spec.structure},{spec.q},{int(probe.stable)},{probe.diverged_count},"
                 f"{probe.n_realizations},{STABILITY_HORIZON}\n")


def _load_model(path):
    return None if path is None else NarmaModel.from_text(Path(path).read_text())


def cmd_forecast(run: Run) -> None:
    curves, ctx = forecast_pipeline(run.cfg, 0, _load_model(run.args.model))
    write_wide_csv(run.path("rmse.csv"), curves)
    for name, curve in curves.items():
        curve.to_csv(run.path(f"rmse_{name}.csv"))
    _write_model(run, ctx["narma"])
    est = ctx["est_params"]
    run.notes.append(f"estimated sde: gamma={est.gamma!r} drift2={est.potential.drift2()!r} sigma={est.sigma!r}")
    for name, c in curves.items():
        run.notes.append(f"{name}: {c.diverged_members} diverged members, {c.pieces_used} pieces used")


def cmd_stats(run: Run) -> None:
    cfg = run.cfg
    obs = _series(run, run.args.data)
    empirical_pdf(obs, cfg["stats.n_bins"]).to_csv(run.path("pdf.csv"))
    empirical_acf(obs, cfg["stats.max_lag"]).to_csv(run.path("acf.csv"))


def _replicate(run: Run, cfg: ExperimentConfig, hs, name: str) -> None:
    reports = replicate_across(cfg, hs, workers=run.args.workers)
    write_replicate_csv(run.path(name), reports)
    for rep in reports:
        for idx, msg in rep.failures:
            run.notes.append(f"h={rep.h!r} dataset {idx} excluded: {msg}")


def cmd_replicate(run: Run) -> None:
    _replicate(run, run.cfg, [run.cfg.h], "replicate.csv")


def _consistency(run: Run, cfg: ExperimentConfig, specs) -> None:
    (obs,) = simulate_dataset(cfg, 0)
    table = consistency_scan(obs, specs, restarts=cfg["fit.restarts"], seed=cfg["sim.seed"])
    table.write_csv(run.path("consistency.csv"))
    table.write_oscillation_csv(run.path("oscillation.csv"))


def cmd_consistency(run: Run) -> None:
    cfg = run.cfg
    specs = [NarmaSpec(s, cfg["fit.q"]) for s in ("M2", "M3")]
    _consistency(run, cfg, specs)


def _with(run: Run, **updates) -> ExperimentConfig:
    """Target-specific config; the manifest echoes it."""
    run.cfg = run.cfg.replace(**updates)
    return run.cfg


def cmd_reproduce(run: Run) -> None:
    target = run.args.target
    cfg = run.cfg
    if target == "table1":
        _replicate(run, _with(run, model__family="linear", fit__method="ct"), TABLE_SPACINGS, "table1.csv")
    elif target == "table2":
        lin = _with(run, model__family="linear", fit__method="narma", fit__structure="ARMA", fit__q=1)
        with open(run.path("table2_tvalues.csv"), "w") as fh:
            fh.write("h,a1,a2,theta1,sigma_w\n")
            for row in t_values(lin):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        _replicate(run, lin, TABLE_SPACINGS, "table2.csv")
    elif target == "table3":
        _replicate(run, _with(run, model__family="kramers", fit__method="ct"), TABLE_SPACINGS, "table3.csv")
    elif target == "table4":
        kr = _with(run, model__family="kramers", fit__method="narma", fit__structure="M3", fit__q=0)
        _replicate(run, kr, TABLE_SPACINGS, "table4.csv")
    elif target == "table5":
        kr = _with(run, model__family="kramers", obs__h=1.0 / 32)
        _consistency(run, kr, [NarmaSpec("M2", 0), NarmaSpec("M3", 0)])
    elif target == "fig-rmse":
        cmd_forecast(run)
    elif target == "fig-acfpdf":
        pdfs, acfs, notes = long_run_statistics(cfg, 0, _load_model(run.args.model))
        for name, hist in pdfs.items():
            hist.to_csv(run.path(f"pdf_{name}.csv"))
        for name, acf in acfs.items():
            acf.to_csv(run.path(f"acf_{name}.csv"))
        run.notes += notes


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate-ct": cmd_estimate_ct,
    "fit-narma": cmd_fit_narma,
    "forecast": cmd_forecast,
    "stats": cmd_stats,
    "replicate": cmd_replicate,
    "consistency": cmd_consistency,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="base seed (overrides sim.seed)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for replicates")

    parser = argparse.ArgumentParser(prog="hypoparam", parents=[common],
                                     description="Continuous- and discrete-time inference for Langevin data.")
    parser.add_argument("--version", action="version", version=f"hypoparam {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write observations.csv")
    for name, text in (("estimate-ct", "contrast estimator"), ("stats", "empirical PDF and ACF")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--data", help="observation CSV (n,t,x); simulated when omitted")
    p = sub.add_parser("fit-narma", parents=[common], help="conditional-likelihood NARMA fit")
    p.add_argument("--data", help="observation CSV (n,t,x); simulated when omitted")
    p.add_argument("--select", action="store_true", help="rank candidate structures and keep the best")
    p = sub.add_parser("forecast", parents=[common], help="RMSE curves of the three predictors")
    p.add_argument("--model", help="NARMA model file to use instead of fitting")
    sub.add_parser("replicate", parents=[common], help="mean and std over replicated datasets")
    sub.add_parser("consistency", parents=[common], help="M2/M3 fits on growing data prefixes")
    p = sub.add_parser("reproduce", parents=[common], help="regenerate a table or figure dataset")
    p.add_argument("target", choices=TARGETS)
    p.add_argument("--model", help="NARMA model file for figure targets")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    forecasting = args.command == "forecast" or getattr(args, "target", None) == "fig-rmse"
    try:
        if args.workers < 1:
            raise ConfigError(["--workers must be >= 1"])
        cfg = ExperimentConfig.load(args.config, args.set, seed=args.seed, forecasting=forecasting)
        run = Run(args, cfg)
        COMMANDS[args.command](run)
        run.write_manifest(args.command if args.command != "reproduce" else f"reproduce {args.target}")
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"hypoparam: config error: {problem}", file=sys.stderr)
        return 2
    except (HypoparamError, OSError, ValueError) as exc:
        print(f"hypoparam: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
