"""Command-line batch front end.

Exit codes: 0 success, 1 numerical failure, 2 configuration error, 3 I/O error.
Every output file carries the run digest (config, version, subcommand, seed,
thread count); ``manifest.json`` adds timestamps and the list of outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from . import config as cfgmod
from .errors import AxyGateError, ConfigError
from .physics import TWO_PI, heating_rates

EXIT_NUMERIC, EXIT_CONFIG, EXIT_IO = 1, 2, 3


class Run:
    """Output bookkeeping for one invocation."""

    def __init__(self, cfg: dict, subcommand: str, outDir: str):
        self.cfg = cfg
        self.subcommand = subcommand
        self.outDir = outDir
        self.started = datetime.now(timezone.utc).isoformat()
        self.digest = cfgmod.digest(cfg, {"version": __version__, "subcommand": subcommand})
        self.outputs: list[str] = []
        os.makedirs(outDir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.outDir, name)

    def write_json(self, name: str, payload: dict) -> str:
        body = {"digest": self.digest, **payload}
        return self._write(name, json.dumps(body, indent=1, sort_keys=True, default=_jsonable) + "\n")

    def write_csv(self, name: str, text: str) -> str:
        return self._write(name, f"# digest={self.digest}\n" + text)

    def _write(self, name: str, text: str) -> str:
        p = self.path(name)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.outputs.append(name)
        return p

    def finish(self) -> None:
        manifest = {
            "tool": "axygate", "version": __version__, "digest": self.digest,
            "subcommand": self.subcommand, "seed": self.cfg["run"]["seed"],
            "threads": self.cfg["run"]["threads"], "started": self.started,
            "finished": datetime.now(timezone.utc).isoformat(), "outputs": self.outputs,
            "config": self.cfg,
        }
        with open(self.path("manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _pmap(fn, items, threads: int):
    """Ordered map; results do not depend on ``threads``."""
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# -- design helpers -------------------------------------------------------------------------

def _design(cfg: dict):
    from .designer import GateDesign, design_gate
    g = cfg["gate"]
    if g["design_file"]:
        with open(g["design_file"], encoding="utf-8") as fh:
            data = json.load(fh)
        data.pop("digest", None)
        return GateDesign.from_dict(data.get("design", data))
    return design_gate(cfgmod.trap_from(cfg), g["target_phase_rad"], g["r"], g["k"], g["n_blocks"],
                       constants=cfgmod.constants_from(cfg), gridN=g["grid"], selection=g["selection"])


# -- subcommands --------------------------------------------------------------------------------

def cmd_scan(cfg: dict, run: Run) -> None:
    from .designer import scan_plane
    s = cfg["scan"]
    for r in s["r_list"]:
        res = scan_plane(r, s["n_blocks"], s["grid"], tuple(s["tau_bounds"]))
        run.write_csv(f"scan_r{r}.csv", res.to_csv())


def cmd_design(cfg: dict, run: Run) -> None:
    d = _design(cfg)
    run.write_json("design.json", {"design": d.to_dict()})


def cmd_simulate(cfg: dict, run: Run) -> None:
    from .lindblad import TIMESERIES_COLUMNS, ErrorInjection, IntegratorSettings, SimConfig, evolve, run_table
    from .noise import sweep_csv
    d = _design(cfg)
    s = cfg["simulate"]
    h = heating_rates(d.trap, cfgmod.heating_reference_from(cfg), d.constants)
    sim = SimConfig(
        design=d, fockB=s["fock_b"], fockC=s["fock_c"], initThermal=s["init_thermal"],
        dissipation=s["dissipation"], heating=(h.gammaCom, h.nBarCom, h.gammaBre, h.nBarBre),
        errors=ErrorInjection(s["rabi_rel_error"], s["trap_rel_shift"], TWO_PI * s["qubit_shift_hz"]),
        integrator=IntegratorSettings(method=s["method"]), pulses=s["pulses"], crosstalk=s["crosstalk"],
        truncationTol=s["truncation_tol"])
    rep = run_table(sim, s["states"], truncation_check=s["truncation_check"])
    run.write_json("simulate.json", {"design": d.to_dict(), "report": json.loads(rep.to_json()),
                                     "heating": h.as_report()})
    if s["timeseries"]:
        if s["method"] != "exact":
            raise ConfigError("simulate.timeseries needs simulate.method: exact")
        ev = evolve(sim, [s["states"][0]], record=True)
        run.write_csv("simulate_timeseries.csv", sweep_csv(ev.timeseries, TIMESERIES_COLUMNS))


def cmd_heating(cfg: dict, run: Run) -> None:
    trap = cfgmod.trap_from(cfg)
    h = heating_rates(trap, cfgmod.heating_reference_from(cfg), cfgmod.constants_from(cfg))
    run.write_json("heating.json", {"electrode_distance_m": trap.electrodeDistance, "heating": h.as_report()})


def cmd_noise(cfg: dict, run: Run, kind: str) -> None:
    from . import noise
    seed = cfg["run"]["seed"]
    threads = cfg["run"]["threads"]
    o = cfg["noise_ou"]
    ou = noise.OUParams.from_t2(o["correlation_time_s"], o["t2_s"])
    if kind == "ou":
        t2 = noise.fit_t2(ou, trajectories=o["trajectories"], seed=seed)
        run.write_json("noise_ou.json", {"correlation_time_s": ou.correlationTime, "diffusion": ou.diffusion,
                                         "stationary_variance": ou.variance, "target_t2_s": o["t2_s"],
                                         "fitted_t2_s": t2, "trajectories": o["trajectories"], "seed": seed})
    elif kind == "leakage":
        lk = cfg["noise_leakage"]
        d = _design(cfg)
        rabi = TWO_PI * lk["rabi_hz"]
        base = noise.FourLevelConfig(energies=tuple(noise.hyperfine_energies(lk["field_gauss"])), rabi=rabi,
                                     schedule=noise.single_ion_schedule(d, rabi), trajectories=lk["trajectories"],
                                     seed=seed, counterRotating=lk["counter_rotating"])
        rows = _pmap(lambda e: _leak_row(base, ou, e), lk["leakage_values"], threads)
        run.write_csv("noise_leakage.csv", noise.sweep_csv(rows, ["epsilon", "mean_infidelity", "mean_infidelity_4x4"]))
    elif kind == "radial":
        rd = cfg["noise_radial"]
        d = _design(cfg)
        base = noise.RadialConfig(nuRadial=TWO_PI * rd["nu_radial_hz"], thermalN=rd["thermal_n"])

        def one(b):
            res = noise.radial_run(replace(base, beta=float(b)), d, rd["state"])
            return (float(b), res.infidelity, res.analytic)
        rows = _pmap(one, rd["beta_values"], threads)
        run.write_csv("noise_radial.csv", noise.sweep_csv(rows, ["beta", "infidelity", "infidelity_closed_form"]))
    else:
        raise ConfigError(f"unknown noise study '{kind}'")


def _leak_row(base, ou, eps):
    from . import noise
    r = noise.four_level_run(replace(base, leakage=float(eps)), ou)
    return (float(eps), r.meanInfidelity, r.meanInfidelityFull)


def cmd_validate(cfg: dict, run: Run) -> bool:
    from .validation import run_invariants
    checks = run_invariants(cfg["run"]["seed"])
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    run.write_json("validate.json", {"checks": [c.__dict__ for c in checks]})
    return all(c.passed for c in checks)


# -- entry point ---------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file (defaults apply when omitted)")
    common.add_argument("--out-dir", default=".", help="directory for reports and manifest.json")
    common.add_argument("--seed", type=int, help="master seed, overrides run.seed")
    common.add_argument("--threads", type=int, help="worker cap, overrides run.threads")
    common.add_argument("--r-list", help="comma-separated harmonic indices for scan, e.g. 1,2,3")
    common.add_argument("--grid", type=int, help="scan grid size per axis")
    p = argparse.ArgumentParser(prog="axygate", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"axygate {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, hlp in (("scan", "residual and phase maps over the spacing plane"),
                      ("design", "solve for a gate with the configured phase"),
                      ("simulate", "open-system simulation of the five test states"),
                      ("heating", "scaled heating rates"),
                      ("validate", "fast invariant checks")):
        sub.add_parser(name, parents=[common], help=hlp)
    nz = sub.add_parser("noise", parents=[common], help="field-noise and radial-mode studies")
    nz.add_argument("study", choices=["ou", "leakage", "radial"])
    return p


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = json.loads(json.dumps(cfg))
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg["run"]["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        cfg["run"]["threads"] = args.threads
    if args.r_list is not None:
        try:
            rl = [int(x) for x in args.r_list.split(",") if x.strip()]
        except ValueError:
            raise ConfigError("--r-list must be comma-separated integers") from None
        if not rl or min(rl) < 1:
            raise ConfigError("--r-list must contain positive integers")
        cfg["scan"]["r_list"] = rl
    if args.grid is not None:
        if args.grid < 2:
            raise ConfigError("--grid must be at least 2")
        cfg["scan"]["grid"] = args.grid
        cfg["gate"]["grid"] = args.grid
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load(args.config) if args.config else cfgmod.defaults()
        cfg = _apply_overrides(cfg, args)
        sub = args.command + (f"-{args.study}" if args.command == "noise" else "")
        run = Run(cfg, sub, args.out_dir)
        ok = True
        if args.command == "scan":
            cmd_scan(cfg, run)
        elif args.command == "design":
            cmd_design(cfg, run)
        elif args.command == "simulate":
            cmd_simulate(cfg, run)
        elif args.command == "heating":
            cmd_heating(cfg, run)
        elif args.command == "noise":
            cmd_noise(cfg, run, args.study)
        elif args.command == "validate":
            ok = cmd_validate(cfg, run)
        run.finish()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AxyGateError, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for name in run.outputs:
        print(run.path(name))
    return 0 if ok else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
