"""Command line entry point: ``python3 -m helmlab <command> <config> [options]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import harness as H
from .config import ConfigError
from .scenarios import BUILTIN, load_scenario


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _prepare(args) -> tuple:
    scn = load_scenario(args.config, _overrides(args.set), args.budget_scale, args.seed)
    out = Path(args.out) if args.out else Path("runs") / scn.name
    out.mkdir(parents=True, exist_ok=True)
    if args.seed is not None:
        scn.config.set("seed", str(args.seed))
    (out / "config.txt").write_text(scn.config.dumps())
    rep = H.validate(scn)
    (out / "validation.txt").write_text(rep.text())
    return scn, out, rep


def cmd_validate(args) -> int:
    scn, out, rep = _prepare(args)
    print(rep.text(), end="")
    return 0 if rep.passed else 1


def _gate(rep) -> bool:
    if not rep.passed:
        print(rep.text(), end="", file=sys.stderr)
        print("hypothesis validation failed; not running", file=sys.stderr)
    return rep.passed


def cmd_rays(args) -> int:
    scn, out, rep = _prepare(args)
    if not _gate(rep):
        return 1
    run = H.run_rays(scn, out)
    for e in run.evaluations:
        print(f"{e.q_name}\t{e.value!r}\t{e.error_estimate!r}")
    return 0 if all(e.n_inconclusive == 0 for e in run.evaluations) else 1


def cmd_wave(args) -> int:
    scn, out, rep = _prepare(args)
    if not _gate(rep):
        return 1
    rays = None if scn.T is not None else H.run_rays(scn, out)
    table = H.run_wave(scn, out, rays=rays)
    for h, vals in table.items():
        for name, v in vals.items():
            print(f"{name}\t{h!r}\t" + ("skipped" if v is None else f"{v.real!r}\t{v.imag!r}"))
    return 0


def cmd_compare(args) -> int:
    scn, out, rep = _prepare(args)
    if not _gate(rep):
        return 1
    run = H.run_convergence(scn, out)
    print(H.emit_report(out), end="")
    return 0 if run.passed else 1


def cmd_report(args) -> int:
    text = H.emit_report(args.rundir)
    print(text, end="")
    path = Path(args.rundir) / "assertions.csv"
    if not path.exists():
        return 0
    with open(path, newline="") as fh:
        return 0 if all(r["status"] == "pass" for r in csv.DictReader(fh)) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="helmlab", description="Wave vs ray experiments for high-frequency "
                                "Helmholtz sources concentrated on submanifolds.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in [("validate", cmd_validate, "check the standing hypotheses"),
                               ("rays", cmd_rays, "ray-side predictions"),
                               ("wave", cmd_wave, "wave-side pairings for every h"),
                               ("compare", cmd_compare, "h-sweep of wave against rays")]:
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config", help=f"config file or built-in name ({', '.join(sorted(BUILTIN))})")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--out", default=None, help="run directory (default runs/<scenario>)")
        s.add_argument("--budget-scale", type=float, default=1.0, help="multiply the ray quadrature budget")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        s.set_defaults(func=fn)
    s = sub.add_parser("report", help="summarise an existing run directory")
    s.add_argument("rundir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
