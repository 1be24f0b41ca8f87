"""Full wave-vs-ray h-sweep for one scenario, with timings, then the text report.

    python3 scripts/sweep.py free_point [--out runs/free_point] [--set key=value ...]

Same artifacts as ``python3 -m helmlab compare``; this script also logs each wave run.
"""
import argparse
import logging
import sys
import time
from pathlib import Path

from helmlab import harness as H
from helmlab.scenarios import load_scenario


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--out", default=None)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    scn = load_scenario(args.config, dict(s.split("=", 1) for s in args.set))
    out = Path(args.out or f"runs/{scn.name}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(scn.config.dumps())
    rep = H.validate(scn)
    (out / "validation.txt").write_text(rep.text())
    if not rep.passed:
        print(rep.text(), file=sys.stderr)
        return 1
    t0 = time.perf_counter()
    run = H.run_convergence(scn, out)
    logging.info("sweep finished in %.1fs (T = %.3f)", time.perf_counter() - t0, run.T)
    print(H.emit_report(out), end="")
    return 0 if run.passed else 1


if __name__ == "__main__":
    sys.exit(main())
