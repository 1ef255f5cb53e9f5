"""Command-line pipeline runner with machine-readable artifacts.

Subcommands mirror the construction order: validate the data assumptions,
solve the leading layer, the outer corrector and the first-order layer,
compose and measure residuals, solve the remainder fixed point, run the
epsilon-sweep study, and evaluate the inequality audits.  Every artifact
file name carries a short hash of the canonical config serialization, so
identical configs always map to identical output paths and contents.

CSV column schemas:
  layer0:   x, y, u0p, v0p, h0p, g0p
  euler1:   x, Y, v1e, g1e, u1e, h1e, p1e
  layer1:   x, y, up, vp, hp, gp
  remainder: x, y, u, v, h, g, p, q
  study-slopes: eps, R1, R2, R3, R4, weighted
Two-column whitespace-separated data files accompany the study for each
fitted quantity; the JSON manifest lists every artifact written.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import audit as audit_mod
from . import remainder as rem
from .composer import compose, residual_ledger, residuals, run_pipeline, \
    scaling_study
from .grid import GridSpec
from .profiles import (AssumptionThresholds, PhysicalParams, builtin_profile,
                       params_for, validate_assumptions)


class ConfigError(ValueError):
    """The run configuration is missing or inconsistent."""


class DependencyMissing(RuntimeError):
    """A subcommand needs an input the configuration does not provide."""


_DEFAULT_SWEEP = [4e-2, 2e-2, 1e-2, 5e-3, 2.5e-3]


@dataclass
class RunConfig:
    profile: str
    params: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    eps_sweep: list = field(default_factory=lambda: list(_DEFAULT_SWEEP))
    out_dir: str = "out"
    ledger_mode: bool = False
    picard_rtol: float = 1e-8
    picard_max_iter: int = 30
    ratio_max: float = 0.5
    inflow_margin: float | None = None
    jobs: int = 1

    def __post_init__(self):
        if not self.profile:
            raise ConfigError("profile is required")

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "profile" not in raw:
            raise ConfigError("profile is required")
        return cls(**raw)

    def canonical(self) -> str:
        return json.dumps(asdict(self), sort_keys=True,
                          separators=(",", ":"))

    def config_hash(self) -> str:
        # Execution parameters (parallelism, output location) do not change
        # the computed results, so they are excluded from artifact naming.
        payload = asdict(self)
        payload.pop("jobs", None)
        payload.pop("out_dir", None)
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    def physical_params(self, eps: float | None = None) -> PhysicalParams:
        base = asdict(params_for(self.profile))
        base.update(self.params)
        if eps is not None:
            base["eps"] = eps
        return PhysicalParams(**base)

    def grid_spec(self) -> GridSpec:
        kw = dict(self.grid)
        kw.setdefault("L", self.physical_params().L)
        return GridSpec(**kw)

    def margin(self) -> float:
        if self.inflow_margin is not None:
            return float(self.inflow_margin)
        return 0.1 * self.grid_spec().L


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


class Runner:
    def __init__(self, config: RunConfig):
        self.config = config
        self.tag = config.config_hash()
        os.makedirs(config.out_dir, exist_ok=True)
        self.artifacts: list[str] = []

    def path(self, name: str) -> str:
        base, ext = os.path.splitext(name)
        p = os.path.join(self.config.out_dir, f"{base}-{self.tag}{ext or '.json'}")
        self.artifacts.append(p)
        return p

    def _pipeline(self, params: PhysicalParams):
        flow, data = builtin_profile(self.config.profile, params)
        grid = self.config.grid_spec()
        l0, e1, l1 = run_pipeline(flow, data, params, grid)
        return flow, data, grid, l0, e1, l1

    def validate(self) -> int:
        params = self.config.physical_params()
        flow, data = builtin_profile(self.config.profile, params)
        thresholds = AssumptionThresholds(**self.config.thresholds) \
            if self.config.thresholds else AssumptionThresholds()
        report = validate_assumptions(params, flow, data, thresholds,
                                      self.config.grid_spec())
        payload = {"profile": self.config.profile}
        payload.update(report.as_dict())
        _write_json(self.path("validate"), payload)
        return 0 if report.all_passed else 1

    def layer0(self) -> int:
        params = self.config.physical_params()
        _, _, _, l0, _, _ = self._pipeline(params)
        l0.write_csv(self.path("layer0.csv"))
        l0.write_monitor_json(self.path("layer0-monitor.json"))
        return 0

    def euler1(self) -> int:
        params = self.config.physical_params()
        _, _, _, _, e1, _ = self._pipeline(params)
        e1.write_csv(self.path("euler1.csv"))
        return 0

    def layer1(self) -> int:
        params = self.config.physical_params()
        _, _, _, _, _, l1 = self._pipeline(params)
        l1.write_csv(self.path("layer1.csv"))
        return 0

    def compose(self) -> int:
        params = self.config.physical_params()
        flow, data, grid, l0, e1, l1 = self._pipeline(params)
        app = compose(l0, e1, l1, flow, params)
        res = residuals(app, params, inflow_margin=self.config.margin())
        payload = {"norms": {k: float(v) for k, v in res.norms.items()},
                   "weighted_sum": float(res.weighted_sum)}
        if self.config.ledger_mode:
            payload["ledger"] = {
                k: float(v) for k, v in residual_ledger(
                    app, l0, e1, l1, flow, params,
                    inflow_margin=self.config.margin()).items()}
        _write_json(self.path("compose"), payload)
        return 0

    def _remainder_once(self, params: PhysicalParams):
        flow, data, grid, l0, e1, l1 = self._pipeline(params)
        app = compose(l0, e1, l1, flow, params)
        res = residuals(app, params, inflow_margin=self.config.margin())
        base = rem.build_baseline(l0, e1, flow, params,
                                 ratio_max=self.config.ratio_max)
        state = rem.picard_iterate(base, res, l1, params,
                                   max_iter=self.config.picard_max_iter,
                                   rtol=self.config.picard_rtol,
                                   inflow_margin=self.config.margin())
        report = rem.reconstruct_and_verify(app, state, l0, e1, flow, params)
        return flow, l0, e1, l1, app, res, base, state, report

    def remainder(self) -> int:
        params = self.config.physical_params()
        *_, state, report = self._remainder_once(params)
        state.write_csv(self.path("remainder.csv"))
        report.write_json(self.path("main-theorem"))
        return 0

    def audit(self) -> int:
        params = self.config.physical_params()
        _, _, _, l1, _, res, base, state, _ = self._remainder_once(params)
        f = rem.nonlinear_sources(state, res, l1, params)
        erep = audit_mod.energy_audit(state, base, *f, params)
        prep = audit_mod.positivity_audit(state, base, *f, params)
        F = audit_mod.stokes_sources(state, base, *f)
        lrep = audit_mod.linf_audit(state, *F, params)
        hp = audit_mod.hardy_poincare_check(state.u_eps)

        def pack(r):
            return {"lhs": r.lhs, "rhs_terms": r.rhs_terms, "ratio": r.ratio,
                    "passed": bool(r.passed), "extra": r.extra}

        _write_json(self.path("audit"), {"energy": pack(erep),
                                         "positivity": pack(prep),
                                         "linf": pack(lrep),
                                         "hardy_poincare": hp})
        return 0

    def study(self) -> int:
        cfg = self.config
        params = cfg.physical_params()
        slope = scaling_study(cfg.profile, params, cfg.eps_sweep,
                              grid=cfg.grid_spec(),
                              inflow_margin=cfg.inflow_margin)
        eps_sorted = sorted(cfg.eps_sweep, reverse=True)

        def one(eps):
            return self._remainder_once(cfg.physical_params(eps=eps))[-1]

        if cfg.jobs > 1:
            with concurrent.futures.ThreadPoolExecutor(cfg.jobs) as pool:
                reports = list(pool.map(one, eps_sorted))
        else:
            reports = [one(e) for e in eps_sorted]

        rows = [dict(r) for r in slope.norms]
        for r in rows:
            r["weighted"] = (r["R1"] + r["R3"] +
                             np.sqrt(r["eps"]) * (r["R2"] + r["R4"]))
        keys = sorted(k for k in rows[0]
                      if k not in ("eps", "inflow_margin"))
        slope_csv = self.path("study-slopes.csv")
        with open(slope_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eps"] + keys)
            for eps, row in zip(slope.eps, rows):
                w.writerow([eps] + [row[k] for k in keys])
        for key in keys:
            dat = self.path(f"study-{key}.dat")
            with open(dat, "w") as fh:
                for eps, row in zip(slope.eps, rows):
                    fh.write(f"{eps:.12e} {row[key]:.12e}\n")
        table = [r.to_dict() for r in reports]
        payload = {
            "profile": cfg.profile,
            "slopes": {k: {"slope": f.slope, "r_squared": f.r_squared}
                       for k, f in slope.fits.items()},
            "main_theorem": table,
            "artifacts": [os.path.basename(p) for p in self.artifacts],
        }
        _write_json(self.path("study"), payload)
        if getattr(self, "strict", False):
            w = slope.fits["weighted"]
            ok = 0.65 <= w.slope <= 1.1 and w.r_squared >= 0.98
            return 0 if ok else 2
        return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="mhdbl", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("subcommand",
                        choices=["validate", "layer0", "euler1", "layer1",
                                 "compose", "remainder", "study", "audit"])
    parser.add_argument("--config", required=False,
                        help="JSON run configuration (profile is required)")
    parser.add_argument("--profile", help="built-in profile name "
                        "(shortcut when no --config is given)")
    parser.add_argument("--out", default=None,
                        help="output directory (env MHDBL_OUT overrides)")
    parser.add_argument("--jobs", type=int, default=1,
                        help="concurrent sweep members for `study`")
    parser.add_argument("--strict", action="store_true",
                        help="non-zero exit when an acceptance bound fails")
    parser.add_argument("--ledger", action="store_true",
                        help="evaluate the per-term diagnostic ledger in "
                             "`compose`")
    args = parser.parse_args(argv)
    try:
        if args.config:
            config = RunConfig.from_file(args.config)
        elif args.profile:
            config = RunConfig(profile=args.profile)
        else:
            raise ConfigError("either --config or --profile is required")
        out = os.environ.get("MHDBL_OUT") or args.out
        if out:
            config.out_dir = out
        if args.ledger:
            config.ledger_mode = True
        config.jobs = args.jobs
        runner = Runner(config)
        runner.strict = args.strict
        rc = getattr(runner, args.subcommand)()
    except (ConfigError, DependencyMissing) as exc:
        print(f"cli: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # propagate solver errors with attribution
        mod = type(exc).__module__.split(".")[-1]
        print(f"{mod}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return rc


if __name__ == "__main__":
    raise SystemExit(main())
