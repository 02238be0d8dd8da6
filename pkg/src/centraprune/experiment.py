"""Method x ratio x threshold x seed sweeps on synthetic tasks.

Every cell runs pretrain -> plan -> rebuild -> fine-tune -> evaluate and is
recorded whether it succeeds or fails. Reports serialize to JSON (canonical,
byte-stable), CSV and a markdown comparison table.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .centrality import DEFAULT_MAX_ITER, DEFAULT_TOL, eigenvector_centrality
from .errors import CentrapruneError, EmptyReport, InvalidSpec
from .graph import DEFAULT_EPSILON, layer_graph
from .net import (
    MlpModel,
    TrainConfig,
    evaluate,
    init_model,
    make_task,
    rebuild_with_plan,
    train,
    train_val_split,
)
from .prune import magnitude_plan, make_plan

METHODS = ("centrality", "magnitude", "none")
_PHASE_CONFIG_KEYS = ("epochs", "batch_size", "learning_rate")


@dataclass
class PhaseConfig:
    """Training knobs for one phase; the RNG seed comes from the sweep cell."""

    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.1

    def with_seed(self, seed: int) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.learning_rate, seed)


@dataclass
class SweepSpec:
    ratios: list[float]
    thresholds: list[float]
    methods: list[str]
    seeds: list[int] = field(default_factory=lambda: [0, 1])
    pretrain: PhaseConfig = field(default_factory=PhaseConfig)
    finetune: PhaseConfig = field(default_factory=PhaseConfig)
    task: str = "blobs"
    task_params: dict = field(default_factory=dict)
    data_seed: int = 0
    val_fraction: float = 0.25
    hidden: list[int] = field(default_factory=lambda: [32])
    prune_layer: str | None = None
    epsilon: float = DEFAULT_EPSILON
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self) -> None:
        if isinstance(self.pretrain, dict):
            self.pretrain = _phase_from_dict(self.pretrain, "pretrain")
        if isinstance(self.finetune, dict):
            self.finetune = _phase_from_dict(self.finetune, "finetune")
        self.validate()

    def validate(self) -> None:
        for name in ("ratios", "thresholds", "methods", "seeds", "hidden"):
            if not getattr(self, name):
                raise InvalidSpec(f"{name} must be a nonempty list")
        if any(not (0.0 < p < 1.0) for p in self.ratios):
            raise InvalidSpec(f"every ratio must lie in (0, 1): {self.ratios}")
        if any(not (0.0 <= t < 1.0) for t in self.thresholds):
            raise InvalidSpec(f"every threshold must lie in [0, 1): {self.thresholds}")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise InvalidSpec(f"unknown methods {sorted(unknown)}; choose from {list(METHODS)}")
        if any(int(s) != s or s < 0 for s in self.seeds):
            raise InvalidSpec(f"seeds must be nonnegative integers: {self.seeds}")
        if any(int(h) != h or h < 1 for h in self.hidden):
            raise InvalidSpec(f"hidden sizes must be positive integers: {self.hidden}")
        if self.prune_layer is not None and self.prune_layer not in self.hidden_names:
            raise InvalidSpec(f"prune_layer {self.prune_layer!r} is not one of {self.hidden_names}")
        if not (self.epsilon > 0 and self.tol > 0 and self.max_iter >= 1):
            raise InvalidSpec("epsilon and tol must be positive, max_iter at least 1")
        for phase in (self.pretrain, self.finetune):
            if phase.epochs < 0 or phase.batch_size < 1 or not phase.learning_rate >= 0:
                raise InvalidSpec(f"invalid training phase {phase}")

    @property
    def hidden_names(self) -> list[str]:
        return [f"dense_{i}" for i in range(len(self.hidden))]

    @property
    def target_layer(self) -> str:
        return self.prune_layer or self.hidden_names[-1]

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "SweepSpec":
        if not isinstance(obj, dict):
            raise InvalidSpec("sweep spec must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise InvalidSpec(f"unknown sweep spec fields {sorted(extra)}")
        missing = {"ratios", "thresholds", "methods", "seeds"} - set(obj)
        if missing:
            raise InvalidSpec(f"sweep spec is missing {sorted(missing)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from exc


def _phase_from_dict(obj: dict, label: str) -> PhaseConfig:
    extra = set(obj) - set(_PHASE_CONFIG_KEYS)
    if extra:
        raise InvalidSpec(f"unknown {label} fields {sorted(extra)}")
    return PhaseConfig(**obj)


@dataclass
class CellRecord:
    method: str
    p: float
    tau: float
    seed: int
    status: str = "ok"
    accuracy: float | None = None
    k: int = 0
    params_before: int = 0
    params_after: int = 0
    error: str | None = None
    wall_time: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple:
        return (self.method, self.p, self.tau, self.seed)

    def to_json(self, include_timing: bool = False) -> dict:
        out = asdict(self)
        if not include_timing:
            del out["wall_time"]
        return out


@dataclass
class ExperimentReport:
    task: str
    methods: list[str]
    cells: list[CellRecord]

    def summary(self) -> list[dict]:
        """Mean and population std of accuracy over seeds, per (method, p, tau)."""
        groups: dict[tuple, list[CellRecord]] = {}
        for cell in self.cells:
            groups.setdefault((cell.method, cell.p, cell.tau), []).append(cell)
        rows = []
        for (method, p, tau), cells in groups.items():
            accs = [c.accuracy for c in cells if c.status == "ok"]
            rows.append(
                {
                    "method": method,
                    "p": p,
                    "tau": tau,
                    "runs": len(cells),
                    "failed": len(cells) - len(accs),
                    "mean": float(np.mean(accs)) if accs else None,
                    "std": float(np.std(accs)) if accs else None,
                    "params_after": cells[0].params_after,
                }
            )
        return rows

    def to_json(self, include_timing: bool = False) -> dict:
        return {
            "task": self.task,
            "methods": list(self.methods),
            "cells": [c.to_json(include_timing) for c in self.cells],
            "summary": self.summary(),
        }

    def timings(self) -> dict:
        return {
            "cells": [
                {"method": c.method, "p": c.p, "tau": c.tau, "seed": c.seed, "wall_time": c.wall_time}
                for c in self.cells
            ]
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentReport":
        try:
            cells = [CellRecord(**c) for c in obj["cells"]]
            return cls(obj["task"], list(obj["methods"]), cells)
        except (KeyError, TypeError) as exc:
            raise InvalidSpec(f"not a report: {exc}") from exc


def _prune_cell(
    spec: SweepSpec,
    pretrained: MlpModel,
    train_data,
    val_data,
    method: str,
    p: float,
    tau: float,
    seed: int,
) -> CellRecord:
    record = CellRecord(method, p, tau, seed, params_before=pretrained.num_params)
    layer_name = spec.target_layer
    try:
        model = pretrained
        if method != "none":
            layer = model.layers[model.layer_index(layer_name)]
            if method == "centrality":
                t0 = time.perf_counter()
                g = layer_graph(layer.weights, tau, spec.epsilon)
                t1 = time.perf_counter()
                scores = eigenvector_centrality(g, spec.tol, spec.max_iter)
                t2 = time.perf_counter()
                record.wall_time["graph"] = t1 - t0
                record.wall_time["centrality"] = t2 - t1
                plan = make_plan(scores, p, tau=tau, epsilon=spec.epsilon, tol=spec.tol)
            else:
                plan = magnitude_plan(layer, p)
            record.k = plan.k
            model = rebuild_with_plan(model, layer_name, plan)
        record.params_after = model.num_params
        t0 = time.perf_counter()
        tuned = train(model, train_data, spec.finetune.with_seed(seed)).model
        record.wall_time["finetune"] = time.perf_counter() - t0
        record.accuracy = evaluate(tuned, val_data)
    except CentrapruneError as exc:
        record.status = "failed"
        record.error = f"{exc.code}: {exc}"
        record.accuracy = None
    return record


def run_sweep(spec: SweepSpec, jobs: int = 1, log=None) -> ExperimentReport:
    """Execute every (method, p, tau, seed) cell of the grid.

    The pretrained model depends only on the seed, so it is trained once per
    seed and shared by that seed's cells. Output order follows the spec's
    list order, whatever order cells finish in.
    """
    spec.validate()
    data = make_task(spec.task, seed=spec.data_seed, **spec.task_params)
    train_data, val_data = train_val_split(data, spec.val_fraction, seed=spec.data_seed)

    pretrained: dict[int, MlpModel | CentrapruneError] = {}
    pretrain_time: dict[int, float] = {}
    for seed in spec.seeds:
        t0 = time.perf_counter()
        try:
            model = init_model(train_data.x.shape[1], list(spec.hidden), data.num_classes, seed=seed)
            pretrained[seed] = train(model, train_data, spec.pretrain.with_seed(seed)).model
        except CentrapruneError as exc:
            pretrained[seed] = exc
        pretrain_time[seed] = time.perf_counter() - t0

    grid = [
        (method, p, tau, seed)
        for method in spec.methods
        for p in spec.ratios
        for tau in spec.thresholds
        for seed in spec.seeds
    ]

    def run(cell: tuple) -> CellRecord:
        method, p, tau, seed = cell
        base = pretrained[seed]
        if isinstance(base, CentrapruneError):
            rec = CellRecord(method, p, tau, seed, status="failed", error=f"{base.code}: {base}")
        else:
            rec = _prune_cell(spec, base, train_data, val_data, method, p, tau, seed)
        rec.wall_time["pretrain"] = pretrain_time[seed]
        if log is not None:
            acc = "failed" if rec.accuracy is None else f"{rec.accuracy:.4f}"
            log(f"{method} p={p} tau={tau} seed={seed} k={rec.k} acc={acc}")
        return rec

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(run, grid))
    else:
        cells = [run(c) for c in grid]
    return ExperimentReport(spec.task, list(spec.methods), cells)


# -- rendering ---------------------------------------------------------------

CSV_FIELDS = ("method", "p", "tau", "seed", "status", "accuracy", "k", "params_before", "params_after", "error")


def render_json(r: ExperimentReport, include_timing: bool = False) -> str:
    return json.dumps(r.to_json(include_timing), indent=2) + "\n"


def parse_json(text: str) -> ExperimentReport:
    return ExperimentReport.from_json(json.loads(text))


def render_csv(r: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for c in r.cells:
        row = c.to_json()
        writer.writerow(["" if row[f] is None else repr(row[f]) if isinstance(row[f], float) else row[f] for f in CSV_FIELDS])
    return buf.getvalue()


def parse_csv(text: str, task: str = "", methods: list[str] | None = None) -> ExperimentReport:
    cells = []
    for row in csv.DictReader(io.StringIO(text)):
        cells.append(
            CellRecord(
                method=row["method"],
                p=float(row["p"]),
                tau=float(row["tau"]),
                seed=int(row["seed"]),
                status=row["status"],
                accuracy=float(row["accuracy"]) if row["accuracy"] else None,
                k=int(row["k"]),
                params_before=int(row["params_before"]),
                params_after=int(row["params_after"]),
                error=row["error"] or None,
            )
        )
    if methods is None:
        methods = list(dict.fromkeys(c.method for c in cells))
    return ExperimentReport(task, methods, cells)


def _fmt_cell(row: dict | None) -> str:
    if row is None:
        return "-"
    if row["mean"] is None:
        return "failed"
    text = f"{100 * row['mean']:.2f} ± {100 * row['std']:.2f}"
    if row["failed"]:
        text += f" ({row['failed']} failed)"
    return text


def render_markdown(r: ExperimentReport) -> str:
    """One row per (ratio, tau), one column per method, cells are mean ± std in %."""
    summary = {(s["method"], s["p"], s["tau"]): s for s in r.summary()}
    rows = list(dict.fromkeys((s["p"], s["tau"]) for s in summary.values()))
    rows.sort()
    header = ["Dataset", "Ratio", "Threshold", *r.methods]
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join(["---"] * 3 + [":---:"] * len(r.methods)) + "|"]
    for p, tau in rows:
        cells = [_fmt_cell(summary.get((m, p, tau))) for m in r.methods]
        lines.append("| " + " | ".join([r.task, f"{p:g}", f"{tau:g}", *cells]) + " |")
    ratios = sorted({p for p, _ in rows})
    params = {(s["method"], s["p"]): s["params_after"] for s in summary.values()}
    lines += ["", "| Parameters | Ratio | " + " | ".join(r.methods) + " |", "|---|---|" + "---:|" * len(r.methods)]
    lines.append(f"| before | - | " + " | ".join(str(r.cells[0].params_before) for _ in r.methods) + " |")
    for p in ratios:
        lines.append(f"| after | {p:g} | " + " | ".join(str(params.get((m, p), "-")) for m in r.methods) + " |")
    return "\n".join(lines) + "\n"


def render_report(r: ExperimentReport, fmt: str = "json") -> str:
    if not r.cells:
        raise EmptyReport("report has no cells")
    if fmt == "json":
        return render_json(r)
    if fmt == "csv":
        return render_csv(r)
    if fmt in ("md", "markdown", "markdown-table"):
        return render_markdown(r)
    raise InvalidSpec(f"unknown report format {fmt!r}")
