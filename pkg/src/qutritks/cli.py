"""Command line interface: ``qutritks {verify,run,tables,oracle}``.

Exit codes: 0 ok, 1 configuration error, 2 identity-check failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from qutritks.optics import PRESET_STATES
from qutritks.oracle import oracle_summary
from qutritks.runner import (
    DEFAULT_HERALDS,
    DEFAULT_SEED,
    Campaign,
    ConfigError,
    PreparationError,
    bundle_from_json,
    emit_angle_tables,
    emit_tables,
    parse_state,
    run_campaign,
    summary_text,
    verify_identities,
)

log = logging.getLogger("qutritks")

EXIT_OK, EXIT_CONFIG, EXIT_IDENTITY = 0, 1, 2

# config-file key -> Campaign field
_CONFIG_KEYS = {
    "heralds": "mean_heralds",
    "mean_heralds": "mean_heralds",
    "efficiency": "efficiency",
    "seed": "seed",
    "zero_triples": "zero_triple_counts",
    "zero_triple_counts": "zero_triple_counts",
    "direct_h_correlations": "relabel",
    "triple_suppression": "triple_suppression",
    "out": "output_dir",
    "output_dir": "output_dir",
    "workers": "workers",
}


def _campaign_from_args(args) -> Campaign:
    kwargs = {
        "mean_heralds": args.heralds,
        "efficiency": args.efficiency,
        "seed": args.seed,
        "zero_triple_counts": args.zero_triples,
        "relabel": not args.direct_h_correlations,
        "output_dir": args.out,
        "workers": args.workers,
    }
    states = [s.strip() for s in args.states.split(",") if s.strip()] if args.states else list(PRESET_STATES)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        for key, value in doc.items():
            if key == "states":
                states = value
            elif key in _CONFIG_KEYS:
                field = _CONFIG_KEYS[key]
                kwargs[field] = (not value) if key == "direct_h_correlations" else value
            else:
                raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(states, list):
        raise ConfigError("'states' must be a list")
    return Campaign(states=tuple(parse_state(s) for s in states), **kwargs)


def cmd_verify(args) -> int:
    ok, checks = verify_identities()
    if args.json:
        print(json.dumps({"passed": ok, "checks": checks}, indent=2))
    else:
        for c in checks:
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: {c['value']} (expected {c['expected']})")
    return EXIT_OK if ok else EXIT_IDENTITY


def cmd_run(args) -> int:
    campaign = _campaign_from_args(args)
    t0 = time.perf_counter()
    bundle = run_campaign(campaign)
    log.info("campaign over %d states took %.1f s", len(campaign.states), time.perf_counter() - t0)
    written = emit_tables(bundle, campaign.output_dir)
    written += emit_angle_tables(campaign.output_dir, campaign.relabel)
    print(summary_text(bundle), end="")
    print(f"wrote {len(written)} files to {campaign.output_dir}")
    return EXIT_OK


def cmd_tables(args) -> int:
    written = emit_angle_tables(args.out, not args.direct_h_correlations)
    if args.bundle:
        try:
            bundle = bundle_from_json(Path(args.bundle).read_text())
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot read bundle {args.bundle}: {exc}") from exc
        written += emit_tables(bundle, args.out)
    for p in written:
        print(p)
    return EXIT_OK


def cmd_oracle(args) -> int:
    summary = oracle_summary(workers=args.workers)
    if args.json:
        print(json.dumps(summary, indent=2))
        return EXIT_OK
    print(f"assignments checked     {summary['n_assignments']}")
    print(f"classical maximum       {summary['classical_max']}")
    print(f"maximizing assignments  {summary['n_maximizers']}")
    print(f"KS colorings            {summary['n_ks_colorings']}")
    print(f"max sum of b_h          {summary['max_h_sum']}")
    print()
    labels = list(summary["maximizers"][0])
    print(" ".join(f"{k:>4}" for k in labels))
    for a in summary["maximizers"]:
        print(" ".join(f"{a[k]:>4d}" for k in labels))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qutritks", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="check the operator identities and classical bounds")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="simulate the measurement campaign")
    p.add_argument("--states", help="comma-separated presets (psi1..psi7, rho8, rho9 or aliases 0,1,2,01,02,12,s)")
    p.add_argument("--heralds", type=float, default=DEFAULT_HERALDS, help="mean heralds per setting")
    p.add_argument("--efficiency", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--zero-triples", action="store_true", help="ignore three-fold coincidences")
    p.add_argument("--direct-h-correlations", action="store_true",
                   help="measure y1/y2-h correlations directly instead of by basis exchange")
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", help="JSON config; its entries override the flags")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("tables", help="write angle tables, and result tables from a saved bundle")
    p.add_argument("--bundle", help="bundle.json written by 'run'")
    p.add_argument("--out", default="tables")
    p.add_argument("--direct-h-correlations", action="store_true")
    p.set_defaults(func=cmd_tables)

    p = sub.add_parser("oracle", help="exhaustive noncontextual bounds")
    p.add_argument("--json", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, PreparationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
