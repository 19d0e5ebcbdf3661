"""Command-line surface: dataset generation, training, evaluation, rollouts,
super-resolution checks, and the exact-vs-learned benchmark.

Exit codes: 0 success, 1 usage or validation problem, 2 I/O problem.
A ``--config FILE`` of key=value lines supplies per-flag defaults; flags given
on the command line always win.
"""

import argparse
import math
import sys

from .evaluate import (
    bench,
    evaluate_direct,
    initial_binary_columns,
    rollout_eval,
    superres_eval,
)
from .evolve import (
    build_energy_dataset,
    build_observables_dataset,
    build_time_dataset,
)
from .fno import FnoModel, make_energy_model, make_observables_model, make_time_model
from .io import (
    FileFormatError,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
    write_metrics_csv,
)
from .numerics import NumericError, ValidationError
from .spin import SpinChainSpec, build_hamiltonian
from .states import WaveFunction
from .train import TrainConfig, TrainingAbortError, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2

VTI_INTERVALS = (0, 1, 2)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; the contract here is 1."""

    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="qfno", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    gen = sub.add_parser("gen", help="generate an exact-evolution dataset")
    gen.add_argument("--qubits", type=int, default=None)
    gen.add_argument("--model", choices=["heisenberg", "ising"], default="heisenberg")
    gen.add_argument("--arch", choices=["energy", "time", "observables"], default=None)
    gen.add_argument("--input-type", choices=["random", "low-energy"], default="random")
    gen.add_argument("--samples", type=int, default=1000)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--vti", action="store_true",
                     help="energy arch: three training windows instead of one")
    gen.add_argument("--fraction", type=float, default=0.25)
    gen.add_argument("--period", type=float, default=math.pi)
    gen.add_argument("--state-seed", type=int, default=None,
                     help="seed for initial states (defaults to --seed)")
    gen.add_argument("--out", default=None, help="defaults to a name built from the flags")

    tr = sub.add_parser("train", help="train an operator on a dataset file")
    tr.add_argument("--data", default=None)
    tr.add_argument("--modes", type=int, default=None)
    tr.add_argument("--blocks", type=int, default=None)
    tr.add_argument("--width", type=int, default=None)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--epochs", type=int, default=500)
    tr.add_argument("--batch", type=int, default=64)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", default=None)
    tr.add_argument("--metrics", default=None, help="per-epoch CSV log")
    tr.add_argument("--log-every", type=int, default=10)

    ev = sub.add_parser("eval", help="score a checkpoint on a dataset, one pass")
    ev.add_argument("--ckpt", default=None)
    ev.add_argument("--data", default=None)
    ev.add_argument("--out", default=None)

    ro = sub.add_parser("rollout", help="score an autoregressive rollout")
    ro.add_argument("--ckpt", default=None)
    ro.add_argument("--data", default=None)
    ro.add_argument("--rounds", type=int, default=10)
    ro.add_argument("--gt-fed", action="store_true",
                    help="feed exact windows instead of the model's own output")
    ro.add_argument("--samples", type=int, default=None)
    ro.add_argument("--out", default=None)

    sr = sub.add_parser("superres", help="same interval, finer grid, zero-shot")
    sr.add_argument("--ckpt", default=None)
    sr.add_argument("--data", default=None)
    sr.add_argument("--factor", type=int, default=None)
    sr.add_argument("--samples", type=int, default=25)
    sr.add_argument("--out", default=None)

    be = sub.add_parser("bench", help="time the learned rollout against exact evolution")
    be.add_argument("--ckpt", default=None)
    be.add_argument("--data", default=None)
    be.add_argument("--rounds", type=int, default=10)
    be.add_argument("--samples", type=int, default=None)
    be.add_argument("--out", default=None)

    for command in (gen, tr, ev, ro, sr, be):
        command.add_argument("--config", default=None,
                             help="key=value file of flag defaults")
    return parser


def _read_config(path) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise ValidationError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, _, value = text.partition("=")
            values[key.strip()] = value.strip()
    return values


def _config_namespace(command_parser, raw: dict[str, str]) -> argparse.Namespace:
    namespace = argparse.Namespace()
    actions = {a.dest: a for a in command_parser._actions}
    for key, value in raw.items():
        dest = key.replace("-", "_")
        if dest not in actions or dest in ("help", "config"):
            raise ValidationError(f"unknown config key {key!r}")
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            setattr(namespace, dest, value.lower() in ("1", "true", "yes", "on"))
        elif action.type is not None:
            try:
                setattr(namespace, dest, action.type(value))
            except ValueError as exc:
                raise ValidationError(f"config key {key!r}: {exc}") from exc
        else:
            setattr(namespace, dest, value)
    return namespace


def _require(parser_usage: str, args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        flags = ", ".join(f"--{n}" for n in missing)
        raise UsageError(f"{parser_usage}missing required flag(s): {flags}")


def _load_model(path) -> FnoModel:
    return FnoModel.from_checkpoint(load_checkpoint(path))


def _emit(report, out_path) -> None:
    if out_path is not None:
        report.write_csv(out_path)
        print(f"wrote {out_path}")
    for name, value in report.summary.items():
        print(f"{name} = {value:.6g}")


def _cmd_gen(args) -> int:
    input_type = args.input_type.replace("-", "_")
    spec = SpinChainSpec.random(args.qubits, args.model, args.seed)
    if args.arch == "energy":
        dataset = build_energy_dataset(
            spec,
            samples=args.samples,
            input_type=input_type,
            intervals=VTI_INTERVALS if args.vti else (0,),
            period=args.period,
            fraction=args.fraction,
            states_seed=args.state_seed,
        )
    elif args.arch == "time":
        if args.vti:
            raise ValidationError("--vti applies to energy datasets only")
        dataset = build_time_dataset(
            spec,
            samples=args.samples,
            input_type=input_type,
            period=args.period,
            fraction=args.fraction,
            states_seed=args.state_seed,
        )
    else:
        if args.vti:
            raise ValidationError("--vti applies to energy datasets only")
        if input_type != "random":
            raise ValidationError("observable datasets use random inputs only")
        dataset = build_observables_dataset(
            spec,
            samples=args.samples,
            period=args.period,
            states_seed=args.state_seed,
        )
    out = args.out
    if out is None:
        out = f"{args.arch}_{args.model}_{args.qubits}q_seed{args.seed}.qfno"
    save_dataset(out, dataset)
    print(f"wrote {out} ({len(dataset)} samples, arch={dataset.arch})")
    return EXIT_OK


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    n = dataset.spec.n
    maker = {
        "energy": make_energy_model,
        "time": make_time_model,
        "observables": make_observables_model,
    }[dataset.arch]
    model_kwargs = {"seed": args.seed}
    if args.width is not None:
        model_kwargs["width"] = args.width
    if args.blocks is not None:
        model_kwargs["blocks"] = args.blocks
    if args.modes is not None:
        model_kwargs["modes"] = args.modes
    model = maker(n, **model_kwargs)
    config = TrainConfig(
        lr=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        seed=args.seed,
        log_every=args.log_every,
    )
    checkpoint, metrics = train(model, dataset, config)
    save_checkpoint(args.out, checkpoint)
    print(f"wrote {args.out} (best epoch {checkpoint.meta['best_epoch']}, "
          f"val loss {checkpoint.meta['best_val_loss']:.6g})")
    if args.metrics is not None:
        write_metrics_csv(args.metrics, metrics)
        print(f"wrote {args.metrics}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    _emit(evaluate_direct(_load_model(args.ckpt), load_dataset(args.data)), args.out)
    return EXIT_OK


def _cmd_rollout(args) -> int:
    report = rollout_eval(
        _load_model(args.ckpt),
        load_dataset(args.data),
        rounds=args.rounds,
        gt_fed=args.gt_fed,
        samples=args.samples,
    )
    _emit(report, args.out)
    return EXIT_OK


def _cmd_superres(args) -> int:
    dataset = load_dataset(args.data)
    if dataset.arch != "time":
        raise ValidationError("super-resolution needs a time-arch dataset")
    hamiltonian = build_hamiltonian(dataset.spec)
    count = min(args.samples, len(dataset))
    columns = initial_binary_columns(dataset, hamiltonian, count)
    states = [WaveFunction(columns[:, i]) for i in range(count)]
    report = superres_eval(
        _load_model(args.ckpt), hamiltonian, states, args.factor, dataset.period
    )
    _emit(report, args.out)
    return EXIT_OK


def _cmd_bench(args) -> int:
    report = bench(
        _load_model(args.ckpt),
        load_dataset(args.data),
        passes=args.rounds,
        samples=args.samples,
    )
    _emit(report, args.out)
    return EXIT_OK


_COMMANDS = {
    "gen": (_cmd_gen, ("qubits", "arch")),
    "train": (_cmd_train, ("data", "out")),
    "eval": (_cmd_eval, ("ckpt", "data")),
    "rollout": (_cmd_rollout, ("ckpt", "data")),
    "superres": (_cmd_superres, ("ckpt", "data", "factor")),
    "bench": (_cmd_bench, ("ckpt", "data")),
}


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = _build_parser()
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help paths
            return int(exc.code or 0)
        if args.command is None:
            raise UsageError(parser.format_usage() + "qfno: error: a subcommand is required")
        handler, required = _COMMANDS[args.command]
        command_parser = parser._subparsers._group_actions[0].choices[args.command]
        if args.config is not None:
            # Re-parse just the subcommand args on top of the config values:
            # attributes already present are not overwritten by defaults, but
            # explicit flags still are. argv[0] is the subcommand itself
            # (the top-level parser takes nothing before it).
            namespace = _config_namespace(command_parser, _read_config(args.config))
            args = command_parser.parse_args(argv[1:], namespace=namespace)
            args.command = argv[0]
        _require(command_parser.format_usage(), args, *required)
        return handler(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, NumericError, TrainingAbortError) as exc:
        print(f"qfno: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FileFormatError) as exc:
        print(f"qfno: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
