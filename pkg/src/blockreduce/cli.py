"""Command-line scenario runner.

Verbs: run, attack, bandwidth-sweep, validate-config, export-chain.

Every invocation writes ``manifest.json`` (resolved config, seed, package
version) into its output directory. Passing that manifest back through
``--config`` reproduces the outputs exactly.

Exit codes: 0 ok, 1 scenario failure, 2 bad flags, 3 invalid config.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import yaml

from . import __version__
from .netsim import (ConfigError, SimConfig, Simulation, bandwidth_sweep, from_dict,
                     run_attack_scenario)

OUT_ENV = "BLOCKREDUCE_OUT"
DEFAULT_OUT = "blockreduce-out"

EXIT_FAILURE, EXIT_FLAGS, EXIT_CONFIG = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_FLAGS)


def bundled_configs() -> list[str]:
    root = resources.files("blockreduce") / "configs"
    return sorted(p.name.removesuffix(".yaml") for p in root.iterdir() if p.name.endswith(".yaml"))


def resolve_config(ref: str | None) -> SimConfig:
    """Load a config from a path, a manifest, or a bundled name like ``base10x10``."""
    if ref is None:
        return SimConfig()
    path = Path(ref)
    if not path.exists():
        bundled = resources.files("blockreduce") / "configs" / f"{ref}.yaml"
        if not bundled.is_file():
            raise ConfigError(f"no such config: {ref} (bundled: {', '.join(bundled_configs())})")
        text = bundled.read_text()
    else:
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read {ref}: {exc}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {ref}: {exc}") from None
    if isinstance(data, dict) and "artifact_version" in data and "config" in data:
        data = data["config"]
    return from_dict(data)


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, verb: str, cfg: SimConfig, extra: dict | None = None) -> None:
    manifest = {"artifact_version": __version__, "verb": verb, "seed": cfg.seed,
                "config": cfg.to_dict(), **(extra or {})}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _seeds(args, cfg: SimConfig) -> list[int]:
    first = cfg.seed
    return list(range(first, first + max(1, args.parallel_seeds)))


def _fan_out(fn, items, parallel: bool):
    if parallel and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(len(items), os.cpu_count() or 1)) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _run_one(cfg: SimConfig):
    sim = Simulation(cfg)
    return sim.run()


def _chain_one(cfg: SimConfig) -> str:
    sim = Simulation(cfg, account_bandwidth=False)
    sim.run()
    return sim.export_chain()


def cmd_run(args, cfg: SimConfig) -> int:
    out = _out_dir(args)
    cfgs = [cfg.replace(seed=s) for s in _seeds(args, cfg)]
    results = _fan_out(_run_one, cfgs, args.parallel_seeds > 1)
    for c, m in zip(cfgs, results):
        d = out if len(cfgs) == 1 else out / f"seed-{c.seed}"
        d.mkdir(parents=True, exist_ok=True)
        _write_manifest(d, "run", c)
        (d / "metrics.jsonl").write_text(m.to_records())
        table = m.summary_table()
        (d / "summary.txt").write_text(table)
        print(table)
    return 0


def cmd_attack(args, cfg: SimConfig) -> int:
    out = _out_dir(args)
    if cfg.attack is None:
        cfg = cfg.replace(attack={"region": 0, "zone": 0, "share": 0.6})
    cfgs = [cfg.replace(seed=s) for s in _seeds(args, cfg)]
    reports = _fan_out(run_attack_scenario, cfgs, args.parallel_seeds > 1)
    _write_manifest(out, "attack", cfg, {"seeds": [c.seed for c in cfgs]})
    (out / "attack.jsonl").write_text(
        "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in reports))
    wins = sum(r.honest_canonical for r in reports)
    lines = [f"{'seed':>6} {'honest':>8} {'attacker':>9} {'migrants':>9} {'overtake_s':>11} canonical"]
    for r in reports:
        t = "-" if r.time_to_overtake is None else f"{r.time_to_overtake:.1f}"
        lines.append(f"{r.seed:>6} {r.honest_work:>8.0f} {r.attacker_work:>9.0f} "
                     f"{r.migrations:>9} {t:>11} {'honest' if r.honest_canonical else 'attacker'}")
    lines.append(f"honest fork canonical in {wins}/{len(reports)} runs")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_sweep(args, cfg: SimConfig) -> int:
    try:
        mults = [float(x) for x in args.multipliers.split(",") if x.strip()]
    except ValueError:
        print(f"bad --multipliers: {args.multipliers!r}", file=sys.stderr)
        return EXIT_FLAGS
    if not mults or any(m <= 0 for m in mults):
        print("--multipliers needs positive numbers", file=sys.stderr)
        return EXIT_FLAGS
    out = _out_dir(args)
    result = bandwidth_sweep(cfg, mults)
    _write_manifest(out, "bandwidth-sweep", cfg, {"multipliers": mults})
    (out / "sweep.jsonl").write_text(
        "".join(json.dumps(r, sort_keys=True) + "\n" for r in result.records()))
    text = result.table()
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_validate(args, cfg: SimConfig) -> int:
    print(f"config ok: {cfg.name} ({cfg.zone_count} zones, {cfg.node_count} nodes)")
    return 0


def cmd_export(args, cfg: SimConfig) -> int:
    out = _out_dir(args)
    _write_manifest(out, "export-chain", cfg)
    (out / "chain.jsonl").write_text(_chain_one(cfg))
    print(f"wrote {out / 'chain.jsonl'}")
    return 0


COMMANDS = {"run": cmd_run, "attack": cmd_attack, "bandwidth-sweep": cmd_sweep,
            "validate-config": cmd_validate, "export-chain": cmd_export}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="blockreduce", description="BlockReduce protocol simulator")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb in COMMANDS:
        s = sub.add_parser(verb)
        s.add_argument("--config", help="YAML path, manifest.json, or bundled name")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
        s.add_argument("--duration", type=float, help="simulated seconds")
        s.add_argument("--parallel-seeds", type=int, default=1, metavar="N",
                       help="run N consecutive seeds in separate processes")
        if verb == "bandwidth-sweep":
            s.add_argument("--multipliers", default="1,2,4,8,16")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.parallel_seeds < 1:
        print("--parallel-seeds must be at least 1", file=sys.stderr)
        return EXIT_FLAGS
    try:
        cfg = resolve_config(args.config)
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.duration is not None:
            changes["duration"] = args.duration
        if changes:
            cfg = cfg.replace(**changes)
    except ConfigError as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.verb](args, cfg)
    except ConfigError as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any scenario crash as exit 1
        print(f"scenario failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
