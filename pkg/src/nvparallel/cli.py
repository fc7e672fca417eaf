"""``nvsim`` command line.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 acceptance
failure.
"""
import argparse
import json
import os
import sys

from . import scenarios
from .config import COMMANDS, RunConfig, load_config
from .errors import ConfigError, InvalidArgumentError, NVSimError
from .simulator.io import atomic_write

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_ACCEPTANCE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    p = _Parser(prog="nvsim", description="Parallel NV readout simulation, analysis and planning.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="strict JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed (64-bit, >= 0)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--scenario", help="named preset, e.g. conditional-init or correlation-checkerboard")
    p.add_argument("--shots", type=int, help="number of shots or trials")
    p.add_argument("--threads", type=int, help="worker threads (default: $NVSIM_THREADS or 1)")
    p.add_argument("--input", help="input file for analyze/fit")
    p.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                   help="scenario parameter override, value parsed as JSON")
    return p


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    if cfg.command is not None and cfg.command != args.command:
        raise ConfigError(f"{args.config}: config is for '{cfg.command}', not '{args.command}'")
    cfg.command = args.command
    for key in ("seed", "out", "scenario", "shots", "input"):
        value = getattr(args, key)
        if value is not None:
            setattr(cfg, key, value)
    if args.threads is not None:
        cfg.threads = args.threads
    elif cfg.threads is None:
        cfg.threads = 1
        env = os.environ.get("NVSIM_THREADS")
        if env:
            try:
                cfg.threads = int(env)
            except ValueError:
                raise ConfigError(f"NVSIM_THREADS must be an integer, got {env!r}") from None
    for item in args.param:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects KEY=JSON, got {item!r}")
        try:
            cfg.params[key] = json.loads(raw)
        except json.JSONDecodeError:
            cfg.params[key] = raw
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    if cfg.threads < 1 or (cfg.shots is not None and cfg.shots < 1):
        raise ConfigError("threads and shots must be >= 1")
    if cfg.command in ("analyze", "fit") and not cfg.input:
        raise ConfigError(f"{cfg.command} needs --input")
    if cfg.command == "simulate" and not cfg.scenario:
        raise ConfigError(f"simulate needs --scenario (one of {sorted(scenarios.SIMULATE)})")
    return cfg


def write_outputs(out_dir, files):
    os.makedirs(out_dir, exist_ok=True)
    for name in sorted(files):
        atomic_write(os.path.join(out_dir, name), files[name])


def _print_summary(summary, stdout):
    keys = ("scenario", "n_shots", "mean_abs_r", "sign_matches", "unconditional_mean", "crossover_n",
            "speedup_n10", "speedup_n100", "threshold", "c1", "c2")
    for key in keys:
        if key in summary and summary[key] is not None:
            print(f"{key}: {scenarios.clean(summary[key])}", file=stdout)


def reproduce(cfg, stdout):
    from .acceptance import run_all

    lines = []

    def report(line):
        lines.append(line)
        print(line, file=stdout, flush=True)

    results = run_all(cfg.seed, report)
    n_pass = sum(r.passed for r in results)
    report(f"{n_pass}/{len(results)} criteria passed (seed {cfg.seed})")
    if cfg.out:
        write_outputs(cfg.out, {"acceptance.txt": ("\n".join(l.rsplit(" (", 1)[0] for l in lines) + "\n").encode()})
    return EXIT_OK if n_pass == len(results) else EXIT_ACCEPTANCE


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
        if cfg.command == "reproduce":
            return reproduce(cfg, stdout)
        runner = {"simulate": scenarios.simulate, "analyze": scenarios.analyze, "fit": scenarios.fit,
                  "plan": scenarios.plan}[cfg.command]
        files, summary = runner(cfg)
        write_outputs(cfg.out or ".", files)
        _print_summary(summary, stdout)
        print(f"wrote {len(files)} file(s) to {cfg.out or '.'}", file=stdout)
        return EXIT_OK
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"nvsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NVSimError, OSError, ValueError, RuntimeError) as exc:
        print(f"nvsim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
