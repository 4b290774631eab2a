"""Command-line entry point: ``mmqueue {analyze,simulate,ht-sweep,validate} --config FILE``.

Exit codes: 0 success, 2 bad configuration or I/O, 3 ill-posed model,
4 a validation check failed or a sweep point errored.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import MODES, read_config
from .errors import ConfigError, ModelError
from .harness import RUNNERS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_CHECK = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmqueue", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--seed", type=int, default=None, help="overrides MMQUEUE_SEED and the config")
        p.add_argument("--out", default=None, help="output directory (default MMQUEUE_OUT or .)")
    return parser


def _summary(rep) -> str:
    rec = rep.record
    if rep.name == "analyze":
        return f"rho_inf={rec['rho_inf']:.6g} ew_ht={rec['ew_ht']:.6g} ew={rec['ew']}"
    if rep.name == "simulate":
        ew = rec["estimates"]["ew"]
        return f"ew={ew['mean']:.6g} +/- {ew['half_width']:.2g} events={rec['n_events']}"
    if rep.name == "ht_sweep":
        lines = []
        for row in rec["rows"]:
            if row["status"] != "ok":
                lines.append(f"N={row['N']} {row['status']}")
            else:
                lines.append(f"N={row['N']} ratio={row['ratio']} ks={row['ks_stat']}")
        return "\n".join(lines)
    return "\n".join(f"{c['check']}: {'PASS' if c['passed'] else 'FAIL'}" for c in rec["checks"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = read_config(args.config, args.command)
        if args.seed is not None:
            cfg.seed = args.seed
        elif os.environ.get("MMQUEUE_SEED"):
            try:
                cfg.seed = int(os.environ["MMQUEUE_SEED"])
            except ValueError:
                raise ConfigError("MMQUEUE_SEED must be an integer") from None
        if cfg.seed < 0:
            raise ConfigError("seed must be non-negative")
        out = args.out or os.environ.get("MMQUEUE_OUT") or "."
        rep = RUNNERS[args.command](cfg)
        paths = rep.write(out)
    except ModelError as exc:
        print(f"model error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(_summary(rep))
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK if rep.ok else EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
