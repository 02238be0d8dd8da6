"""``centraprune`` command line.

Exit codes: 0 success, 1 invalid input (reported before any computation),
2 failure during computation. Errors go to stderr as one JSON object
``{"error": <code>, "detail": <message>}``.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__
from .centrality import DEFAULT_MAX_ITER, DEFAULT_TOL, eigenvector_centrality
from .errors import (
    CentrapruneError,
    InvalidArgument,
    InvalidConfig,
    InvalidRatio,
    InvalidThreshold,
    IoFailure,
    MissingFile,
)
from .experiment import SweepSpec, parse_json, render_json, render_report, run_sweep
from .graph import DEFAULT_EPSILON, layer_graph
from .net import (
    TASKS,
    TrainConfig,
    evaluate,
    init_model,
    load_model,
    make_task,
    model_files,
    rebuild_with_plan,
    train,
)
from .prune import apply_plan, magnitude_plan, make_plan, slice_downstream
from .tensor_io import (
    TensorFile,
    atomic_write_bytes,
    commit_files,
    dump_json,
    encode_tensor,
    layer_files,
    read_dataset,
    read_json,
    read_layer,
    write_dataset,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidArgument(message)


def _ratio(text: str) -> float:
    value = _float(text)
    if not 0.0 < value < 1.0:
        raise InvalidRatio(f"--ratio must lie in (0, 1), got {text}")
    return value


def _tau(text: str) -> float:
    value = _float(text)
    if not 0.0 <= value < 1.0:
        raise InvalidThreshold(f"--tau must lie in [0, 1), got {text}")
    return value


def _float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InvalidArgument(f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise InvalidArgument(f"not a finite number: {text!r}")
    return value


def _positive_float(text: str) -> float:
    value = _float(text)
    if value <= 0:
        raise InvalidArgument(f"expected a positive number, got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = _float(text)
    if value < 0:
        raise InvalidArgument(f"expected a nonnegative number, got {text}")
    return value


def _int(minimum: int):
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise InvalidArgument(f"not an integer: {text!r}") from None
        if value < minimum:
            raise InvalidArgument(f"expected an integer >= {minimum}, got {text}")
        return value

    return parse


def _int_list(text: str) -> list[int]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise InvalidArgument("expected a comma-separated list of sizes")
    return [_int(1)(p) for p in parts]


def _require_dir(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise MissingFile(f"{what} directory not found: {path}")
    return p


def _emit(obj: dict, out: str | None) -> None:
    text = dump_json(obj)
    if out:
        atomic_write_bytes(out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def _centrality_flags(p: argparse.ArgumentParser, tau_required: bool) -> None:
    p.add_argument("--tau", type=_tau, required=tau_required, help="similarity threshold in [0, 1)")
    p.add_argument("--epsilon", type=_positive_float, default=DEFAULT_EPSILON)
    p.add_argument("--tol", type=_positive_float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=_int(1), default=DEFAULT_MAX_ITER)


def cmd_analyze(args) -> int:
    layer = read_layer(_require_dir(args.weights, "layer"))
    g = layer_graph(layer.weights, args.tau, args.epsilon)
    c = eigenvector_centrality(g, args.tol, args.max_iter)
    _emit({**g.to_json(), **c.to_json()}, args.out)
    return 0


def _plan_for(layer, args):
    if args.baseline == "magnitude":
        plan = magnitude_plan(layer, args.ratio)
        if args.tau is not None:
            plan.params["tau"] = args.tau
    else:
        g = layer_graph(layer.weights, args.tau, args.epsilon)
        c = eigenvector_centrality(g, args.tol, args.max_iter)
        plan = make_plan(c, args.ratio, tau=args.tau, epsilon=args.epsilon, tol=args.tol)
    for warning in plan.warnings:
        print(json.dumps({"warning": warning}), file=sys.stderr)
    return plan


def cmd_prune(args) -> int:
    if args.baseline is None and args.tau is None:
        raise InvalidArgument("--tau is required unless --baseline magnitude is given")
    if (args.weights is None) == (args.model is None):
        raise InvalidArgument("pass exactly one of --weights <layer dir> or --model <model dir>")
    if args.model is not None:
        if args.layer is None:
            raise InvalidArgument("--model needs --layer <hidden layer name>")
        if args.next is not None or args.head_only:
            raise InvalidArgument("--next/--head-only only apply with --weights")
        model = load_model(_require_dir(args.model, "model"))
        plan = _plan_for(model.all_layers[model.layer_index(args.layer)], args)
        files = model_files(rebuild_with_plan(model, args.layer, plan))
        files["plan.json"] = dump_json(plan.to_json()).encode("utf-8")
        commit_files(args.out, files)
        return 0

    if args.layer is not None:
        raise InvalidArgument("--layer only applies with --model")
    if args.next is None and not args.head_only:
        raise InvalidArgument("pass --next <consumer layer dir> or --head-only")
    if args.next is not None and args.head_only:
        raise InvalidArgument("--next and --head-only are mutually exclusive")
    layer = read_layer(_require_dir(args.weights, "layer"))
    consumer = read_layer(_require_dir(args.next, "consumer layer")) if args.next else None
    plan = _plan_for(layer, args)

    pruned = apply_plan(layer, plan).bundle(layer.name, layer.activation)
    files = layer_files(pruned)
    if consumer is not None:
        files["next_weights"] = encode_tensor(TensorFile(slice_downstream(consumer.weights, plan)))
    files["plan.json"] = dump_json(plan.to_json()).encode("utf-8")
    commit_files(args.out, files)
    return 0


def cmd_train(args) -> int:
    cfg = TrainConfig(args.epochs, args.batch, args.lr, args.seed)
    model = load_model(_require_dir(args.model, "model"))
    data = read_dataset(_require_dir(args.data, "dataset"))
    result = train(model, data, cfg)
    files = model_files(result.model)
    history = {"loss": result.loss_history, "train_accuracy": evaluate(result.model, data)}
    files["history.json"] = dump_json(history).encode("utf-8")
    commit_files(args.out, files)
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(_require_dir(args.model, "model"))
    data = read_dataset(_require_dir(args.data, "dataset"))
    _emit({"accuracy": evaluate(model, data), "examples": len(data), "params": model.num_params}, args.out)
    return 0


def cmd_init(args) -> int:
    model = init_model(args.input_dim, args.hidden, args.classes, seed=args.seed, activation=args.activation)
    commit_files(args.out, model_files(model))
    return 0


def cmd_make_data(args) -> int:
    params = {"n_samples": args.samples, "num_classes": args.classes, "n_features": args.features, "seed": args.seed}
    if args.task == "blobs":
        params["spread"] = args.spread
    else:
        params["noise"] = args.spread
    try:
        data = make_task(args.task, **params)
    except InvalidConfig as exc:
        raise InvalidArgument(str(exc)) from None
    write_dataset(args.out, data)
    return 0


def cmd_sweep(args) -> int:
    if args.jobs < 1:
        raise InvalidArgument("--jobs must be at least 1")
    spec = SweepSpec.from_json(read_json(args.spec))
    log = (lambda line: print(line, file=sys.stderr)) if args.verbose else None
    report = run_sweep(spec, jobs=args.jobs, log=log)
    atomic_write_bytes(args.out, render_json(report).encode("utf-8"))
    if args.timings:
        atomic_write_bytes(args.timings, dump_json(report.timings()).encode("utf-8"))
    return 0


def cmd_report(args) -> int:
    path = Path(args.input)
    if not path.is_file():
        raise MissingFile(f"no such report: {args.input}")
    try:
        report = parse_json(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{args.input} is not valid JSON: {exc}") from None
    text = render_report(report, args.fmt)
    if args.out:
        atomic_write_bytes(args.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="centraprune", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="similarity graph and centrality of one layer", allow_abbrev=False)
    p.add_argument("--weights", required=True, help="layer directory")
    _centrality_flags(p, tau_required=True)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("prune", help="prune one layer and slice its consumer", allow_abbrev=False)
    p.add_argument("--weights", help="layer directory (layer mode)")
    p.add_argument("--model", help="model directory (whole-model mode)")
    p.add_argument("--layer", help="hidden layer to prune in whole-model mode, e.g. dense_0")
    p.add_argument("--ratio", type=_ratio, required=True)
    _centrality_flags(p, tau_required=False)
    p.add_argument("--baseline", choices=["magnitude"], help="rank by column norm instead of centrality")
    p.add_argument("--next", help="consumer layer directory; its weights are sliced to match")
    p.add_argument("--head-only", action="store_true", help="the layer has no consumer to slice")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("train", help="SGD training / fine-tuning of a model directory", allow_abbrev=False)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=_int(0), required=True)
    p.add_argument("--lr", type=_nonneg_float, required=True)
    p.add_argument("--batch", type=_int(1), required=True)
    p.add_argument("--seed", type=_int(0), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="top-1 accuracy of a model on a dataset", allow_abbrev=False)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("init", help="write a freshly initialised model directory", allow_abbrev=False)
    p.add_argument("--input-dim", type=_int(1), required=True)
    p.add_argument("--hidden", type=_int_list, required=True, help="comma-separated hidden sizes, e.g. 64,32")
    p.add_argument("--classes", type=_int(2), required=True)
    p.add_argument("--activation", choices=["relu", "linear"], default="relu")
    p.add_argument("--seed", type=_int(0), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("make-data", help="write a synthetic dataset directory", allow_abbrev=False)
    p.add_argument("--task", choices=sorted(TASKS), required=True)
    p.add_argument("--samples", type=_int(1), default=600)
    p.add_argument("--classes", type=_int(2), default=4)
    p.add_argument("--features", type=_int(1), default=8)
    p.add_argument("--spread", type=_positive_float, default=1.0, help="blob std or ring noise")
    p.add_argument("--seed", type=_int(0), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("sweep", help="run a method x ratio x threshold x seed grid", allow_abbrev=False)
    p.add_argument("--spec", required=True, help="sweep.json")
    p.add_argument("--out", required=True, help="report.json")
    p.add_argument("--jobs", type=_int(1), default=1)
    p.add_argument("--timings", help="also write per-cell wall times here")
    p.add_argument("--verbose", action="store_true", help="log one line per cell to stderr")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="render a sweep report", allow_abbrev=False)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--fmt", choices=["json", "csv", "md", "markdown"], default="md")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CentrapruneError as exc:
        print(json.dumps({"error": exc.code, "detail": str(exc)}), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        err = IoFailure(str(exc))
        print(json.dumps({"error": err.code, "detail": str(err)}), file=sys.stderr)
        return err.exit_code


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
