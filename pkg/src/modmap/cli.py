"""Command-line front end: ``modmap {compile,reuse,bench,train,fidelity,gen}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .architecture import ArchitectureError, make_grid, parse_arch
from .bench import RandomCircuitSpec, generate_random_circuit, instance_source, run_bench, run_pipeline, shape_name
from .env import InfeasibleError
from .fidelity import FidelityParams
from .learned import LearnedPolicyParams, TrainConfig, TrainingDivergedError, train_reinforce
from .policies import KINDS, PolicyConfig
from .qasm import QasmError, emit_qasm, load_qasm
from .reuse import PRESETS, ReuseWeights, optimize_qubit_reuse


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_weights(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--weights", help="reuse cost weights w_depth,w_earliness,w_gap (default 1,1,1)")
    g.add_argument("--preset", choices=sorted(PRESETS), help="named reuse weight preset")


def _add_solver(p):
    p.add_argument("--arch", default="grid:2x5:10", help="grid:RxC:CAP or a JSON architecture file")
    p.add_argument("--solver", choices=KINDS, default="beam")
    p.add_argument("--reuse", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beam-width", type=int, default=8)
    p.add_argument("--restarts", type=int, default=1)
    p.add_argument("--params", help="learned policy weights JSON (solver=learned)")
    p.add_argument("--fidelity-params", help="fidelity parameter JSON")
    _add_weights(p)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="modmap", description="Qubit reuse and core allocation for modular quantum processors.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("compile", help="reuse, allocate and score one circuit")
    p.add_argument("input")
    _add_solver(p)
    p.add_argument("--latency", type=float, help="latency factor for the fidelity estimate")
    p.add_argument("--out", help="write the allocation as JSON")

    p = sub.add_parser("reuse", help="rewrite a circuit with qubit reuse and print QASM")
    p.add_argument("input")
    _add_weights(p)
    p.add_argument("--out")

    p = sub.add_parser("bench", help="batch run to CSV")
    p.add_argument("inputs", nargs="*", help="QASM files")
    p.add_argument("--random", action="append", default=[], metavar="Q,D,CX[,SEED]",
                   help="add a generated circuit (repeatable)")
    p.add_argument("--arch", action="append", help="repeatable; default grid:2x5:10")
    p.add_argument("--solver", action="append", choices=KINDS, help="repeatable; default beam")
    p.add_argument("--reuse", type=_on_off, default=True, metavar="on|off")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beam-width", type=int, default=8)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--no-timing", action="store_true", help="leave wall_ms empty for reproducible output")
    p.add_argument("--out", help="CSV path (default stdout)")
    _add_weights(p)

    p = sub.add_parser("train", help="train the linear policy with REINFORCE")
    p.add_argument("--qubits", type=int, default=6)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--cx", type=int, default=6)
    p.add_argument("--cores", type=int, default=2)
    p.add_argument("--capacity", type=int, default=4)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--instances", type=int, default=64, help="training instances per epoch")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="params JSON path")

    p = sub.add_parser("fidelity", help="fidelity over a sweep of latency factors")
    p.add_argument("input")
    _add_solver(p)
    p.add_argument("--latency", type=_floats, default=[5, 10, 20, 40, 60, 80, 100])

    p = sub.add_parser("gen", help="emit a random circuit as QASM")
    p.add_argument("--qubits", type=int, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--cx", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    return ap


def _weights(args) -> ReuseWeights:
    if args.preset:
        return ReuseWeights.preset(args.preset)
    if args.weights:
        return ReuseWeights.parse(args.weights)
    return ReuseWeights()


def _policy(args) -> PolicyConfig:
    return PolicyConfig(kind=args.solver, seed=args.seed, beam_width=args.beam_width, restarts=args.restarts)


def _fparams(args) -> FidelityParams:
    return FidelityParams.load(args.fidelity_params) if args.fidelity_params else FidelityParams()


def _learned(args):
    if args.solver != "learned" or not args.params:
        return None
    return LearnedPolicyParams.from_json(json.loads(Path(args.params).read_text()))


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_compile(args) -> None:
    fp = _fparams(args)
    if args.latency is not None:
        fp = fp.with_latency(args.latency)
    sol, rep, _ = run_pipeline(load_qasm(args.input), parse_arch(args.arch), _policy(args), args.reuse,
                               _weights(args), fp, _learned(args))
    if args.out:
        Path(args.out).write_text(json.dumps(sol.to_json(), indent=1) + "\n", encoding="utf-8")
    print(f"transfers={sol.transfers} cost={sol.weighted_cost:g} fidelity={rep.circuit_fidelity:.6e}")


def _cmd_reuse(args) -> None:
    c = load_qasm(args.input)
    res = optimize_qubit_reuse(c, _weights(args))
    _write(emit_qasm(res.circuit), args.out)
    print(f"qubits {res.qubit_count_before} -> {res.qubit_count_after}, depth {res.depth_before} -> {res.depth_after}",
          file=sys.stderr)


def _cmd_bench(args) -> None:
    circuits = [(Path(p).stem, load_qasm(p)) for p in args.inputs]
    for text in args.random:
        nums = [int(x) for x in text.split(",")]
        if len(nums) not in (3, 4):
            raise ValueError(f"--random expects Q,D,CX[,SEED], got {text!r}")
        c = generate_random_circuit(RandomCircuitSpec(*nums))
        circuits.append((shape_name(c), c))
    archs = [parse_arch(a) for a in (args.arch or ["grid:2x5:10"])]
    solvers = [PolicyConfig(kind=k, seed=args.seed, beam_width=args.beam_width) for k in (args.solver or ["beam"])]
    report = run_bench(circuits, archs, solvers, args.reuse, None, weights=_weights(args),
                       jobs=args.jobs, timing=not args.no_timing)
    _write(report.to_csv(), args.out)
    for r in report.rows:
        if r.error:
            print(f"{r.circuit}/{r.solver}/{r.arch}: {r.error}", file=sys.stderr)


def _cmd_train(args) -> None:
    arch = make_grid(1, args.cores, args.capacity)
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs,
                      instances_per_epoch=args.instances, seed=args.seed)
    try:
        params = train_reinforce(cfg, instance_source(args.qubits, args.depth, args.cx, arch))
    except TrainingDivergedError as exc:
        Path(args.out).write_text(exc.best.dumps() + "\n", encoding="utf-8")
        raise
    Path(args.out).write_text(params.dumps() + "\n", encoding="utf-8")


def _cmd_fidelity(args) -> None:
    c, arch, cfg, fp = load_qasm(args.input), parse_arch(args.arch), _policy(args), _fparams(args)
    for lf in args.latency:
        sol, rep, _ = run_pipeline(c, arch, cfg, args.reuse, _weights(args), fp.with_latency(lf), _learned(args))
        print(f"latency={lf:g} transfers={rep.transfer_count} fidelity={rep.circuit_fidelity:.6e}")


def _cmd_gen(args) -> None:
    c = generate_random_circuit(RandomCircuitSpec(args.qubits, args.depth, args.cx, args.seed))
    _write(f"// {shape_name(c)}\n" + emit_qasm(c), args.out)


_COMMANDS = {"compile": _cmd_compile, "reuse": _cmd_reuse, "bench": _cmd_bench, "train": _cmd_train,
             "fidelity": _cmd_fidelity, "gen": _cmd_gen}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _COMMANDS[args.cmd](args)
    except QasmError as exc:
        d = exc.diagnostic
        print(f"{getattr(args, 'input', '')}:{d.line}:{d.column}: {d.kind}: {d.message}", file=sys.stderr)
        return 1
    except (ArchitectureError, InfeasibleError, TrainingDivergedError, ValueError, OSError, RuntimeError) as exc:
        print(f"modmap {args.cmd}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
