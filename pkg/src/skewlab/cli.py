"""Batch experiment runner: config parsing, suite orchestration, reports.

Configuration is flat dotted-key text (``suite=skew_law``,
``schedule.boundaries=0,0.5``), overridable by command-line flags of the same
names.  Reports serialize to one JSON document or CSV files; a rerun with the
same config and seed reproduces every byte except the timestamp.  Exit codes:
0 all selected reports pass, 1 at least one failed, 2 usage error,
3 hypothesis-not-met outcomes only.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .excursion import decompose_excursions, last_zero_curve
from .grid_paths import SamplePath, SeedSpec, make_grid, refine_bridge, sample_brownian
from .localtime import identity_residual, ito_sum
from .signed_measure import (
    HYPOTHESIS_NOT_MET,
    Decomposition,
    PROCESS_ZOO,
    TestReport,
    build_model,
    martingale_drift_test,
    optional_representation_check,
    sigma_h_check,
)
from .signflip import AlphaSchedule, apply_sign, assign_signs
from .skewbm import (
    SkewLaw,
    birth_frozen_sign_path,
    harrison_shepp_terminals,
    law_test,
    sde_residual,
    skew_terminal_sample,
    skew_transition_density,
)

SUITES = ("identities", "martingale", "sigma_h", "skew_law", "skew_residual", "representation")

SUITE_BLURBS = {
    "identities": "pathwise residuals: Tanaka, frozen-k balayage, f(v)M transform, across mesh levels",
    "martingale": "conditional-drift tests of the density-weighted product processes, with a drifting negative control",
    "sigma_h": "carried-by membership checks for X = M + A, with a Lebesgue-drift negative control",
    "skew_law": "terminal-law verification of the sign-flip construction: closed-form KS, sign probability, skew-walk cross-check",
    "skew_residual": "pathwise skew SDE residuals across mesh levels for the configured schedule",
    "representation": "weak-form optional representation identity over an event dictionary",
}


class UsageError(ValueError):
    """Bad configuration or command line; mapped to exit code 2."""


@dataclass
class ExperimentConfig:
    suite: str = "skew_law"
    model: str = "trivial"
    alpha: float = 0.7
    schedule_boundaries: tuple[float, ...] = ()
    schedule_values: tuple[float, ...] = ()
    n_paths: int = 10_000
    n_steps: tuple[int, ...] = (4096,)
    master_seed: int = 20240817
    out_dir: str = "."
    fmt: str = "json"
    n_seeds: int = 32
    tolerances: dict = field(default_factory=dict)

    def schedule(self) -> AlphaSchedule:
        if self.schedule_boundaries:
            return AlphaSchedule.piecewise(self.schedule_boundaries, self.schedule_values)
        return AlphaSchedule.constant(self.alpha)

    def tol(self, key: str, default: float) -> float:
        return float(self.tolerances.get(key, default))

    def validate(self) -> None:
        if self.suite not in SUITES + ("all",):
            raise UsageError(f"unknown suite {self.suite!r}; see list-suites")
        if self.model not in ("trivial", "shifted_brownian"):
            raise UsageError(f"unknown model {self.model!r}")
        if self.n_paths <= 0 or any(n <= 0 for n in self.n_steps):
            raise UsageError("paths and steps must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise UsageError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.schedule_boundaries or self.schedule_values:
            try:
                self.schedule()
            except ValueError as e:
                raise UsageError(f"bad schedule: {e}") from None
        if self.fmt not in ("json", "csv"):
            raise UsageError(f"format must be json or csv, got {self.fmt!r}")


@dataclass
class CurveSeries:
    """Plot-ready curve: emitted as CSV rows t,value,series."""

    series: str
    t: np.ndarray
    values: np.ndarray


@dataclass
class ReportBundle:
    reports: list
    curves: list
    provenance: dict

    @property
    def exit_code(self) -> int:
        failed = [r for r in self.reports if not r.passed]
        if not failed:
            return 0
        if all(r.hypothesis_not_met for r in failed):
            return 3
        return 1


def parse_config_text(text: str) -> dict:
    """Flat dotted-key config: one key=value per line, # comments."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def config_from_pairs(pairs: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    setters = {
        "suite": lambda v: setattr(cfg, "suite", v),
        "model": lambda v: setattr(cfg, "model", v),
        "alpha": lambda v: setattr(cfg, "alpha", float(v)),
        "schedule.boundaries": lambda v: setattr(cfg, "schedule_boundaries", _floats(v)),
        "schedule.values": lambda v: setattr(cfg, "schedule_values", _floats(v)),
        "paths": lambda v: setattr(cfg, "n_paths", int(v)),
        "steps": lambda v: setattr(cfg, "n_steps", _ints(v)),
        "seed": lambda v: setattr(cfg, "master_seed", int(v)),
        "out": lambda v: setattr(cfg, "out_dir", v),
        "format": lambda v: setattr(cfg, "fmt", v),
        "seeds": lambda v: setattr(cfg, "n_seeds", int(v)),
    }
    for key, value in pairs.items():
        if key in setters:
            try:
                setters[key](value)
            except ValueError as e:
                raise UsageError(f"bad value for {key}: {e}") from None
        elif key.startswith("tol."):
            try:
                cfg.tolerances[key[4:]] = float(value)
            except ValueError:
                raise UsageError(f"bad tolerance {key}={value}") from None
        else:
            raise UsageError(f"unknown configuration key {key!r}")
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# Suite drivers
# ---------------------------------------------------------------------------


def _coupled_paths(seed: SeedSpec, n_steps_list, i: int):
    """One coarse driver refined through every requested mesh level."""
    coarse = min(n_steps_list)
    s = seed.with_path(i)
    p = sample_brownian(make_grid(1.0, coarse), s)
    return {n: refine_bridge(p, n // coarse, s) for n in sorted(n_steps_list)}


def _monotone_report(name: str, medians: dict, seed: SeedSpec, n_paths: int) -> TestReport:
    levels = sorted(medians)
    values = [medians[n] for n in levels]
    decreasing = all(a > b for a, b in zip(values, values[1:]))
    return TestReport(
        suite=f"{name}.monotone",
        statistic=1.0 if decreasing else 0.0,
        threshold=1.0,
        n_paths=n_paths,
        n_steps=max(levels),
        seed=seed,
        passed=decreasing,
        detail="medians " + " ".join(f"{n}:{medians[n]:.4f}" for n in levels),
    )


def _check_refinable(n_steps) -> None:
    coarse = min(n_steps)
    for n in n_steps:
        ratio = n // coarse
        if n % coarse or ratio & (ratio - 1):
            raise UsageError(
                "mesh levels must be power-of-two multiples of the coarsest"
            )


def run_identities(cfg: ExperimentConfig, seed: SeedSpec):
    _check_refinable(cfg.n_steps)
    reports, curves = [], []
    kinds = {"tanaka": {}, "balayage": {}, "transform": {}}
    for i in range(cfg.n_seeds):
        paths = _coupled_paths(seed.child("identities"), cfg.n_steps, i)
        for n, p in paths.items():
            gamma, _ = last_zero_curve(decompose_excursions(p))
            y = p.with_values(np.abs(p.values))
            k = p.with_values(np.cos(p.grid.times[gamma.gamma]))
            sgn = p.with_values(np.sign(p.values))
            m = ito_sum(sgn, p)
            v = p.with_values(y.values - m.values)
            rs = {
                "tanaka": identity_residual("tanaka", path=p),
                "balayage": identity_residual(
                    "balayage_predictable", y=y, k=k, reference=p
                ),
                "transform": identity_residual(
                    "transform_c3", total=y, martingale_part=m, fv_part=v,
                    f=np.cos, F=np.sin,
                ),
            }
            for kind, r in rs.items():
                kinds[kind].setdefault(n, []).append(r.sup_norm)
            if i == 0:
                curves.append(
                    CurveSeries(f"tanaka_residual_n{n}", p.grid.times,
                                _tanaka_curve(p))
                )
    # the cross-estimator local-time residual floors at O(N^{-1/4}); the
    # default threshold follows that rate so coarse-mesh runs stay calibrated
    finest_level = max(cfg.n_steps)
    tol = cfg.tol("identities", max(0.1, 2.5 * finest_level**-0.25))
    for kind, by_level in kinds.items():
        medians = {n: float(np.median(v)) for n, v in by_level.items()}
        finest = max(medians)
        reports.append(
            TestReport(
                suite=f"identities.{kind}",
                statistic=medians[finest],
                threshold=tol,
                n_paths=cfg.n_seeds,
                n_steps=finest,
                seed=seed,
                passed=medians[finest] < tol,
                detail="median sup-norm at finest level",
            )
        )
        if len(medians) > 1:
            reports.append(_monotone_report(f"identities.{kind}", medians, seed, cfg.n_seeds))
    return reports, curves


def _tanaka_curve(p: SamplePath) -> np.ndarray:
    from .localtime import local_time

    occ = local_time(p, "occupation").curve.values
    tan = local_time(p, "tanaka").curve.values
    return tan - occ


def run_martingale(cfg: ExperimentConfig, seed: SeedSpec):
    n = max(cfg.n_steps)
    g = make_grid(1.0, n)
    reports = []

    def family(base_name, tag):
        def fam(p):
            s = seed.child(f"mart/{tag}").with_path(p)
            model = build_model("shifted_brownian", g, s.child("model"))
            dec = PROCESS_ZOO[base_name](model, g, s)
            return SamplePath(g, model.d_path.values * dec.total.values)

        return fam

    for base_name in ("bm", "bm_plus_local_time"):
        rep = martingale_drift_test(
            family(base_name, base_name), cfg.n_paths, [0.5, 1.0],
            seed=seed, threshold=cfg.tol("drift", 4.0),
        )
        reports.append(
            TestReport(
                suite=f"martingale.{base_name}", statistic=rep.statistic,
                threshold=rep.threshold, n_paths=rep.n_paths, n_steps=rep.n_steps,
                seed=seed, passed=rep.passed, detail=rep.detail,
            )
        )
    neg = martingale_drift_test(
        family("bm_plus_drift", "neg"), cfg.n_paths, [0.5, 1.0], seed=seed
    )
    thresh = cfg.tol("drift_reject", 5.0)
    reports.append(
        TestReport(
            suite="martingale.negative_control", statistic=neg.statistic,
            threshold=thresh, n_paths=neg.n_paths, n_steps=neg.n_steps, seed=seed,
            passed=neg.statistic > thresh,
            detail="acceptance region above threshold: control must be rejected",
        )
    )
    return reports, []


def run_sigma_h(cfg: ExperimentConfig, seed: SeedSpec):
    n = max(cfg.n_steps)
    g = make_grid(1.0, n)
    reports = []
    cases = [
        ("reflected_bm", "trivial", True),
        ("bm_plus_local_time", "shifted_brownian", True),
        ("bm_plus_drift", "shifted_brownian", False),
    ]
    tol = cfg.tol("carried_by", 0.05)
    for base_name, fam, positive in cases:
        stats, passes = [], []
        for i in range(cfg.n_seeds):
            s = seed.child(f"sigma/{base_name}").with_path(i)
            model = build_model(fam, g, s.child("model"))
            rep = sigma_h_check(PROCESS_ZOO[base_name](model, g, s), model, tol=tol)
            stats.append(rep.statistic)
            passes.append(rep.passed)
        frac = float(np.mean(passes))
        ok = frac >= 0.5 if positive else frac < 0.5
        name = base_name if positive else "negative_control"
        reports.append(
            TestReport(
                suite=f"sigma_h.{name}", statistic=float(np.median(stats)),
                threshold=1.0 - tol, n_paths=cfg.n_seeds, n_steps=n, seed=seed,
                passed=ok,
                detail=f"pass fraction {frac:.2f} over {cfg.n_seeds} paths"
                + ("" if positive else "; acceptance region below threshold"),
            )
        )
    return reports, []


def run_skew_law(cfg: ExperimentConfig, seed: SeedSpec):
    if cfg.model != "trivial":
        return (
            [
                TestReport(
                    suite="skew_law", statistic=float("nan"), threshold=0.0,
                    n_paths=cfg.n_paths, n_steps=max(cfg.n_steps), seed=seed,
                    passed=False,
                    detail=f"{HYPOTHESIS_NOT_MET}: law-level claims need the "
                    "trivial model (no construction with base vanishing on a "
                    "nontrivial H is available)",
                )
            ],
            [],
        )
    n = max(cfg.n_steps)
    sched = cfg.schedule()
    alpha = sched.values[-1]
    sample = skew_terminal_sample(sched, cfg.n_paths, n, seed.child("law"))
    reports, curves = [], []
    if sched.kind == "constant":
        ks = law_test(sample, SkewLaw(alpha, 1.0), seed=seed)
        reports.append(
            TestReport(
                suite="skew_law.ks", statistic=ks.statistic, threshold=ks.threshold,
                n_paths=ks.n_paths, n_steps=n, seed=seed, passed=ks.passed,
                detail=ks.detail,
            )
        )
        # 0.01 is the acceptance band at 10^5 paths; at smaller sizes fall
        # back to a 4-sigma binomial band so the default is calibrated
        four_sigma = 4.0 * float(np.sqrt(max(alpha * (1 - alpha), 0.05) / sample.n))
        sign_tol = cfg.tol("sign_probability", max(0.01, four_sigma))
        frac = float(np.mean(sample.values > 0))
        reports.append(
            TestReport(
                suite="skew_law.sign_probability", statistic=abs(frac - alpha),
                threshold=sign_tol, n_paths=sample.n, n_steps=n, seed=seed,
                passed=abs(frac - alpha) < sign_tol,
                detail=f"empirical {frac:.4f} vs alpha {alpha:g}",
            )
        )
        walk = harrison_shepp_terminals(alpha, n, cfg.n_paths, seed.child("walk"))
        spacing = 2.0 / float(np.sqrt(n))
        allowance = cfg.tol("lattice_allowance", 0.005)
        wrep = law_test(
            sample, walk, lattice_allowance=allowance, lattice_spacing=spacing,
            seed=seed,
        )
        reports.append(
            TestReport(
                suite="skew_law.walk_cross_check", statistic=wrep.statistic,
                threshold=wrep.threshold, n_paths=wrep.n_paths, n_steps=n,
                seed=seed, passed=wrep.passed, detail=wrep.detail,
            )
        )
        ys = np.linspace(-4, 4, 161)
        curves.append(CurveSeries(f"skew_density_alpha{alpha:g}", ys,
                                  skew_transition_density(alpha, 1.0, ys)))
        hist, edges = np.histogram(sample.values, bins=80, range=(-4, 4), density=True)
        curves.append(CurveSeries("skew_empirical_density",
                                  0.5 * (edges[:-1] + edges[1:]), hist))
    else:
        # piecewise law: compare against an independently seeded equal-cell
        # homogeneous sample when the schedule is flat, else report the
        # sign fraction only
        frac = float(np.mean(sample.values > 0))
        reports.append(
            TestReport(
                suite="skew_law.sign_fraction", statistic=frac, threshold=1.0,
                n_paths=sample.n, n_steps=n, seed=seed, passed=True,
                detail="informational: piecewise schedules have no closed-form "
                "terminal density here",
            )
        )
    return reports, curves


def run_skew_residual(cfg: ExperimentConfig, seed: SeedSpec):
    _check_refinable(cfg.n_steps)
    sched = cfg.schedule()
    medians = {}
    for n in sorted(cfg.n_steps):
        sups = []
        for i in range(cfg.n_seeds):
            s = seed.child("sde").with_path(i)
            coarse = min(cfg.n_steps)
            p = sample_brownian(make_grid(1.0, coarse), s.child("base"))
            p = refine_bridge(p, n // coarse, s.child("base"))
            exc = decompose_excursions(p)
            z = birth_frozen_sign_path(
                exc, assign_signs(exc, sched, s.child("signs")), sched
            )
            x = apply_sign(z, p, mode="absolute")
            base = Decomposition.martingale(p)
            sups.append(sde_residual(x, base, z, sched, "absolute").sup_norm)
        medians[n] = float(np.median(sups))
    tol = cfg.tol("sde_residual", max(0.1, 2.5 * max(cfg.n_steps) ** -0.25))
    finest = max(medians)
    reports = [
        TestReport(
            suite="skew_residual", statistic=medians[finest], threshold=tol,
            n_paths=cfg.n_seeds, n_steps=finest, seed=seed,
            passed=medians[finest] < tol,
            detail="median sup-norm at finest level, absolute variant",
        )
    ]
    if len(medians) > 1:
        reports.append(_monotone_report("skew_residual", medians, seed, cfg.n_seeds))
    return reports, []


def run_representation(cfg: ExperimentConfig, seed: SeedSpec):
    g = make_grid(1.0, max(cfg.n_steps))
    events = {
        "omega": lambda m, model: True,
        "w_quarter_pos": lambda m, model: m.values[m.grid.index_at(0.25)] > 0,
    }
    family = PROCESS_ZOO["bm" if cfg.model == "trivial" else "bm_minus_frozen"]
    reports = []
    for t_stop in (0.5, 1.0):
        rep = optional_representation_check(
            family, t_stop, events, cfg.n_paths, cfg.model, g,
            seed.child(f"rep/{t_stop:g}"), threshold=cfg.tol("representation", 4.0),
        )
        reports.append(
            TestReport(
                suite=f"representation.T{t_stop:g}", statistic=rep.statistic,
                threshold=rep.threshold, n_paths=rep.n_paths, n_steps=rep.n_steps,
                seed=seed, passed=rep.passed, detail=f"model={cfg.model} " + rep.detail,
            )
        )
    return reports, []


SUITE_RUNNERS = {
    "identities": run_identities,
    "martingale": run_martingale,
    "sigma_h": run_sigma_h,
    "skew_law": run_skew_law,
    "skew_residual": run_skew_residual,
    "representation": run_representation,
}


def run_experiment(config: ExperimentConfig) -> ReportBundle:
    """Execute the selected suites and assemble a reproducible bundle."""
    config.validate()
    seed = SeedSpec(config.master_seed)
    selected = SUITES if config.suite == "all" else (config.suite,)
    reports, curves = [], []
    for name in selected:
        r, c = SUITE_RUNNERS[name](config, seed.child(name))
        reports.extend(r)
        curves.extend(c)
    provenance = {
        "artifact_version": __version__,
        "master_seed": config.master_seed,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": {
            "suite": config.suite,
            "model": config.model,
            "alpha": config.alpha,
            "schedule.boundaries": list(config.schedule_boundaries),
            "schedule.values": list(config.schedule_values),
            "paths": config.n_paths,
            "steps": list(config.n_steps),
            "seeds": config.n_seeds,
            "tolerances": dict(sorted(config.tolerances.items())),
        },
    }
    return ReportBundle(reports=reports, curves=curves, provenance=provenance)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _report_row(r: TestReport) -> dict:
    return {
        "suite": r.suite,
        "statistic": r.statistic,
        "threshold": r.threshold,
        "n_paths": r.n_paths,
        "n_steps": r.n_steps,
        "seed": r.seed.token() if r.seed is not None else "",
        "pass": bool(r.passed),
        "detail": r.detail,
    }


def emit_report(bundle: ReportBundle, fmt: str, destination: str) -> list[str]:
    """Write the bundle; returns the paths written.

    JSON: one document with the provenance block and the reports array.
    CSV: a main table plus one t,value,series file per curve.
    """
    os.makedirs(destination, exist_ok=True)
    written = []
    if fmt == "json":
        doc = {
            "provenance": bundle.provenance,
            "reports": [_report_row(r) for r in bundle.reports],
        }
        path = os.path.join(destination, "reports.json")
        with open(path, "w") as f:
            json.dump(doc, f, indent=2, sort_keys=True)
            f.write("\n")
        written.append(path)
    elif fmt == "csv":
        path = os.path.join(destination, "reports.csv")
        with open(path, "w") as f:
            f.write("suite,statistic,threshold,n_paths,n_steps,seed,pass\n")
            for r in bundle.reports:
                row = _report_row(r)
                f.write(
                    f"{row['suite']},{row['statistic']!r},{row['threshold']!r},"
                    f"{row['n_paths']},{row['n_steps']},{row['seed']},"
                    f"{str(row['pass']).lower()}\n"
                )
        written.append(path)
    else:
        raise UsageError(f"unknown format {fmt!r}")
    for curve in bundle.curves:
        path = os.path.join(destination, f"curve_{curve.series}.csv")
        with open(path, "w") as f:
            f.write("t,value,series\n")
            for t, v in zip(curve.t, curve.values):
                f.write(f"{t!r},{v!r},{curve.series}\n")
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skewlab",
        description="Monte Carlo verification lab for the sign-flip skew construction",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a suite and emit reports")
    run.add_argument("--config", help="config file of key=value lines")
    run.add_argument("--suite", help="suite selector (overrides config)")
    run.add_argument("--model", help="model family (overrides config)")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--paths", type=int, help="Monte Carlo paths")
    run.add_argument("--steps", help="comma-separated step counts")
    run.add_argument("--alpha", type=float, help="constant skewness")
    run.add_argument("--out", help="output directory (default $SKEWLAB_OUT or .)")
    run.add_argument("--format", dest="fmt", choices=("json", "csv"), help="report format")
    sub.add_parser("list-suites", help="list the available suites")
    desc = sub.add_parser("describe", help="describe one suite")
    desc.add_argument("suite")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    pairs = {}
    if args.config:
        try:
            with open(args.config) as f:
                pairs.update(parse_config_text(f.read()))
        except OSError as e:
            raise UsageError(f"cannot read config: {e}") from None
    overrides = {
        "suite": args.suite,
        "model": args.model,
        "seed": args.seed,
        "paths": args.paths,
        "steps": args.steps,
        "alpha": args.alpha,
        "out": args.out,
        "format": args.fmt,
    }
    for key, value in overrides.items():
        if value is not None:
            pairs[key] = str(value)
    if "out" not in pairs and os.environ.get("SKEWLAB_OUT"):
        pairs["out"] = os.environ["SKEWLAB_OUT"]
    return config_from_pairs(pairs)


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    if args.command == "list-suites":
        for name in SUITES + ("all",):
            print(name)
        return 0
    if args.command == "describe":
        if args.suite not in SUITE_BLURBS:
            print(f"unknown suite {args.suite!r}", file=sys.stderr)
            return 2
        print(f"{args.suite}: {SUITE_BLURBS[args.suite]}")
        return 0
    try:
        config = _config_from_args(args)
        bundle = run_experiment(config)
        written = emit_report(bundle, config.fmt, config.out_dir)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    for r in bundle.reports:
        status = "PASS" if r.passed else ("HYP" if r.hypothesis_not_met else "FAIL")
        print(f"[{status}] {r.suite}: statistic={r.statistic:.6g} threshold={r.threshold:.6g}")
    for path in written:
        print(f"wrote {path}")
    return bundle.exit_code


if __name__ == "__main__":
    sys.exit(main())
