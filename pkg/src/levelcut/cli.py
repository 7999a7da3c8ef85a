"""Experiment harness: YAML configs, replicate orchestration, JSON-lines
traces, CSV aggregates, and the ``levelcut`` command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .classify import BootstrapLinearConfig, TreeEnsembleConfig
from .core import ContinuousBox, DiscreteSpace, RoundRecord, RunTrace, SeedPolicy
from .objectives import (
    Hartmann6,
    Shekel4,
    SubprocessObjective,
    gen_linear_quadratic,
    gen_random_linear,
    gen_synthetic_pbm,
    load_pbm,
)
from .optimize import (
    OptimizerConfig,
    PairwiseConfig,
    run_classify_opt,
    run_random,
    run_random2x,
)
from .theory import verify_weight_bound

WORKERS_ENV = "LEVELCUT_WORKERS"


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_METHOD_KINDS = (
    "classify-rf",
    "classify-tuned",
    "css",
    "oracle",
    "random",
    "random-2x",
    "pairwise",
)

_KIND_TO_CLASSIFIER = {
    "classify-rf": "tree",
    "classify-tuned": "bootstrap-linear",
    "css": "css-linear",
    "oracle": "oracle",
}

_OBJECTIVES = (
    "random-linear",
    "linear-quadratic",
    "shekel4",
    "hartmann6",
    "pbm-synthetic",
    "pbm-file",
    "subprocess",
)


@dataclass
class ExperimentConfig:
    problem: dict
    methods: list
    rounds: int
    batch_size: int
    eta: float = 0.5
    replicates: int = 15
    base_seed: int = 0
    output_dir: str = "out"
    threshold_policy: str = "latest-batch"
    theory_log: bool = False
    store_points: bool = True
    classifier: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not 0.0 <= self.eta <= 0.5:
            raise ConfigError("eta must lie in [0, 1/2]")


def _expect_keys(section: dict, allowed: set, context: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {context}: {unknown}")


def _normalize_method(entry) -> dict:
    if isinstance(entry, str):
        entry = {"name": entry}
    if not isinstance(entry, dict):
        raise ConfigError(f"method entries must be strings or mappings, got {entry!r}")
    _expect_keys(entry, {"name", "c", "classifier"}, f"method {entry!r}")
    name = entry.get("name")
    if name not in _METHOD_KINDS:
        raise ConfigError(f"unknown method {name!r}; choose from {_METHOD_KINDS}")
    method = {"kind": name, "label": name}
    if name == "pairwise":
        c = int(entry.get("c", 10))
        if c < 1:
            raise ConfigError("pairwise c must be >= 1")
        classifier = entry.get("classifier", "rf")
        if classifier not in ("rf", "tuned"):
            raise ConfigError("pairwise classifier must be 'rf' or 'tuned'")
        method.update(c=c, classifier=classifier, label=f"pairwise-{classifier}-c{c}")
    elif "c" in entry or "classifier" in entry:
        raise ConfigError(f"method {name!r} takes no extra parameters")
    return method


def _normalize_problem(problem: dict) -> dict:
    if not isinstance(problem, dict) or "objective" not in problem:
        raise ConfigError("problem section must define an objective")
    kind = problem["objective"]
    if kind not in _OBJECTIVES:
        raise ConfigError(f"unknown objective {kind!r}; choose from {_OBJECTIVES}")
    allowed = {
        "random-linear": {"objective", "d", "discretize"},
        "linear-quadratic": {"objective", "d", "mix", "discretize"},
        "shekel4": {"objective"},
        "hartmann6": {"objective"},
        "pbm-synthetic": {"objective", "noise_scale"},
        "pbm-file": {"objective", "path"},
        "subprocess": {"objective", "command", "d", "error_value", "timeout", "lo", "hi"},
    }[kind]
    _expect_keys(problem, allowed, "problem")
    if kind in ("random-linear", "linear-quadratic") and "d" not in problem:
        raise ConfigError(f"{kind} requires a dimension d")
    if kind == "pbm-file" and "path" not in problem:
        raise ConfigError("pbm-file requires a path")
    if kind == "subprocess":
        for key in ("command", "d", "lo", "hi"):
            if key not in problem:
                raise ConfigError(f"subprocess objective requires {key!r}")
    return dict(problem)


_TOP_KEYS = {
    "problem",
    "methods",
    "rounds",
    "batch_size",
    "eta",
    "replicates",
    "base_seed",
    "output_dir",
    "threshold_policy",
    "theory_log",
    "store_points",
    "classifier",
    "sampler",
}

_CLASSIFIER_KEYS = {
    "n_trees",
    "max_depth",
    "min_leaf",
    "feature_fraction",
    "bootstrap_rows",
    "consensus_tau",
    "bootstrap_b",
    "sigma",
    "ridge",
    "tol",
    "max_iter",
}

_SAMPLER_KEYS = {"mode", "bandwidth_factor", "spread_factor", "drift_gain", "oversample"}


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    _expect_keys(raw, _TOP_KEYS, "config")
    for key in ("problem", "methods", "rounds", "batch_size"):
        if key not in raw:
            raise ConfigError(f"config is missing required key {key!r}")
    _expect_keys(raw.get("classifier", {}) or {}, _CLASSIFIER_KEYS, "classifier")
    _expect_keys(raw.get("sampler", {}) or {}, _SAMPLER_KEYS, "sampler")
    methods = [_normalize_method(m) for m in raw["methods"]]
    labels = [m["label"] for m in methods]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate method labels: {labels}")
    try:
        return ExperimentConfig(
            problem=_normalize_problem(raw["problem"]),
            methods=methods,
            rounds=int(raw["rounds"]),
            batch_size=int(raw["batch_size"]),
            eta=float(raw.get("eta", 0.5)),
            replicates=int(raw.get("replicates", 15)),
            base_seed=int(raw.get("base_seed", 0)),
            output_dir=str(raw.get("output_dir", "out")),
            threshold_policy=str(raw.get("threshold_policy", "latest-batch")),
            theory_log=bool(raw.get("theory_log", False)),
            store_points=bool(raw.get("store_points", True)),
            classifier=dict(raw.get("classifier", {}) or {}),
            sampler=dict(raw.get("sampler", {}) or {}),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# Problem construction
# ---------------------------------------------------------------------------

_PBM_FILE_CACHE: dict = {}


def build_problem(problem: dict, policy: SeedPolicy):
    """Instantiate (objective, space) for one replicate.

    Generated problems derive from (base_seed, replicate) so every method in
    a replicate sees the same instance, while replicates differ.
    """
    rng = policy.rng("problem")
    kind = problem["objective"]
    if kind == "random-linear":
        obj = gen_random_linear(int(problem["d"]), rng)
        return obj, _maybe_discretize(obj, problem, rng)
    if kind == "linear-quadratic":
        obj = gen_linear_quadratic(int(problem["d"]), float(problem.get("mix", 1.0)), rng)
        return obj, _maybe_discretize(obj, problem, rng)
    if kind == "shekel4":
        obj = Shekel4()
        return obj, obj.domain
    if kind == "hartmann6":
        obj = Hartmann6()
        return obj, obj.domain
    if kind == "pbm-synthetic":
        prob = gen_synthetic_pbm(rng, noise_scale=float(problem.get("noise_scale", 0.01)))
        return prob.objective(), prob.space()
    if kind == "pbm-file":
        path = str(problem["path"])
        if path not in _PBM_FILE_CACHE:
            _PBM_FILE_CACHE[path] = load_pbm(path)
        prob = _PBM_FILE_CACHE[path]
        return prob.objective(), prob.space()
    if kind == "subprocess":
        lo = np.asarray(problem["lo"], dtype=float)
        hi = np.asarray(problem["hi"], dtype=float)
        box = ContinuousBox(lo, hi)
        obj = SubprocessObjective(
            argv=tuple(problem["command"]),
            d=int(problem["d"]),
            error_value=float(problem.get("error_value", 0.0)),
            timeout=problem.get("timeout"),
            domain=box,
        )
        return obj, box
    raise ConfigError(f"unknown objective {kind!r}")


def _maybe_discretize(obj, problem: dict, rng: np.random.Generator):
    k = problem.get("discretize")
    if k is None:
        return obj.domain
    k = int(k)
    feats = rng.uniform(-1.0, 1.0, size=(k, obj.d))
    return DiscreteSpace(ids=tuple(range(k)), features=feats)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _optimizer_config(config: ExperimentConfig, method: dict) -> OptimizerConfig:
    cls = config.classifier
    tree = TreeEnsembleConfig(
        n_trees=int(cls.get("n_trees", 100)),
        max_depth=cls.get("max_depth"),
        min_leaf=int(cls.get("min_leaf", 1)),
        feature_fraction=cls.get("feature_fraction"),
        bootstrap_rows=bool(cls.get("bootstrap_rows", True)),
        consensus_tau=float(cls.get("consensus_tau", 0.75)),
    )
    linear = BootstrapLinearConfig(
        B=int(cls.get("bootstrap_b", 62)),
        sigma=cls.get("sigma", 2.0),
        ridge=float(cls.get("ridge", 1e-2)),
        tol=float(cls.get("tol", 1e-8)),
        max_iter=int(cls.get("max_iter", 100)),
    )
    if method["kind"] == "pairwise":
        classifier = "tree" if method["classifier"] == "rf" else "bootstrap-linear"
        labeling = "pairwise"
        pairwise = PairwiseConfig(c=method["c"])
    else:
        classifier = _KIND_TO_CLASSIFIER[method["kind"]]
        labeling = "values"
        pairwise = PairwiseConfig()
    return OptimizerConfig(
        T=config.rounds,
        n=config.batch_size,
        eta=config.eta,
        classifier=classifier,
        threshold_policy=config.threshold_policy,
        labeling=labeling,
        pairwise=pairwise,
        tree=tree,
        linear=linear,
        sampler_mode=str(config.sampler.get("mode", "survivor")),
        bandwidth_factor=float(config.sampler.get("bandwidth_factor", 0.3)),
        spread_factor=float(config.sampler.get("spread_factor", 1.0)),
        drift_gain=float(config.sampler.get("drift_gain", 4.0)),
        oversample=int(config.sampler.get("oversample", 20)),
        theory_log=config.theory_log,
        store_points=config.store_points,
    )


def run_single(config: ExperimentConfig, method: dict, replicate: int) -> RunTrace:
    """One (method, replicate) run; the unit of parallelism."""
    policy = SeedPolicy(config.base_seed, replicate)
    objective, space = build_problem(config.problem, policy)
    kind = method["kind"]
    # Baselines draw rounds+1 uniform batches so that every method observes
    # the same number of batches (classify runs spend one on initialization).
    if kind == "random":
        return run_random(objective, space, config.batch_size, config.rounds + 1, policy)
    if kind == "random-2x":
        return run_random2x(objective, space, config.batch_size, config.rounds + 1, policy)
    cfg = _optimizer_config(config, method)
    return run_classify_opt(objective, space, cfg, policy, method_label=method["label"])


def _task(args):
    config, method, replicate = args
    return method["label"], replicate, run_single(config, method, replicate)


def resolve_workers(workers: Optional[int]) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None):
    """Run every (method, replicate) pair, write traces and the aggregate.

    Returns (AggregateReport, failures).  Partial failures leave the
    aggregate computed over the completed replicates.
    """
    out = Path(config.output_dir)
    trace_dir = out / "traces"
    trace_dir.mkdir(parents=True, exist_ok=True)

    tasks = [
        (config, method, r)
        for method in config.methods
        for r in range(config.replicates)
    ]
    n_workers = resolve_workers(workers)
    results = {}
    failures = []

    def record(label, replicate, trace):
        results[(label, replicate)] = trace
        write_trace(trace, trace_dir / _trace_filename(label, replicate))

    if n_workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_workers) as pool:
            futures = {pool.submit(_task, t): t for t in tasks}
            for fut in concurrent.futures.as_completed(futures):
                _, method, replicate = futures[fut]
                try:
                    label, rep, trace = fut.result()
                    record(label, rep, trace)
                except Exception as exc:  # noqa: BLE001 - recorded per replicate
                    failures.append(
                        {"method": method["label"], "replicate": replicate, "error": str(exc)}
                    )
    else:
        for t in tasks:
            _, method, replicate = t
            try:
                label, rep, trace = _task(t)
                record(label, rep, trace)
            except Exception as exc:  # noqa: BLE001
                failures.append(
                    {"method": method["label"], "replicate": replicate, "error": str(exc)}
                )

    grouped = {}
    for method in config.methods:
        label = method["label"]
        traces = [
            results[(label, r)]
            for r in range(config.replicates)
            if (label, r) in results
        ]
        if traces:
            grouped[label] = traces
    report = AggregateReport.from_traces(grouped)

    (out / "aggregate.csv").write_text(emit_plot_data(report), encoding="utf-8")
    report_doc = {
        "aggregate": report.rows,
        "failures": sorted(failures, key=lambda f: (f["method"], f["replicate"])),
        "config": asdict(config),
    }
    (out / "report.json").write_text(_dumps(report_doc) + "\n", encoding="utf-8")
    return report, failures


def _trace_filename(label: str, replicate: int) -> str:
    return f"{label}__rep{replicate:03d}.jsonl"


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass
class AggregateReport:
    """Per (method, round): median and quartiles of best-so-far across
    replicates."""

    rows: list

    @classmethod
    def from_traces(cls, grouped: dict) -> "AggregateReport":
        rows = []
        for label in sorted(grouped):
            traces = grouped[label]
            curves = np.array([[r.best_so_far for r in tr.rounds] for tr in traces])
            q25, med, q75 = np.percentile(curves, [25, 50, 75], axis=0)
            for t in range(curves.shape[1]):
                rows.append(
                    {
                        "method": label,
                        "round": t,
                        "median": float(med[t]),
                        "q25": float(q25[t]),
                        "q75": float(q75[t]),
                    }
                )
        return cls(rows=rows)

    def curve(self, label: str) -> list:
        return [r for r in self.rows if r["method"] == label]


def emit_plot_data(report: AggregateReport) -> str:
    """CSV with columns method,round,median,q25,q75 in stable order."""
    lines = ["method,round,median,q25,q75"]
    for row in sorted(report.rows, key=lambda r: (r["method"], r["round"])):
        lines.append(
            f"{row['method']},{row['round']},{row['median']!r},{row['q25']!r},{row['q75']!r}"
        )
    return "\n".join(lines) + "\n"


def load_plot_data(text: str) -> AggregateReport:
    """Inverse of emit_plot_data."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "method,round,median,q25,q75":
        raise ValueError("not a plot-data CSV")
    rows = []
    for ln in lines[1:]:
        method, rnd, med, q25, q75 = ln.split(",")
        rows.append(
            {
                "method": method,
                "round": int(rnd),
                "median": float(med),
                "q25": float(q25),
                "q75": float(q75),
            }
        )
    return AggregateReport(rows=rows)


# ---------------------------------------------------------------------------
# Trace serialization (JSON lines, one round per line)
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def write_trace(trace: RunTrace, path):
    lines = []
    header = {
        "kind": "header",
        "schema": 1,
        "method": trace.method,
        "seed": trace.seed,
        "space": trace.space_info,
        "config": trace.config_snapshot,
        "eta": trace.eta,
        "values_table": trace.values_table,
    }
    lines.append(_dumps(header))
    for rec in trace.rounds:
        lines.append(
            _dumps(
                {
                    "kind": "round",
                    "t": rec.t,
                    "values": rec.values,
                    "best_so_far": rec.best_so_far,
                    "evals": rec.evals,
                    "indices": rec.indices,
                    "points": rec.points,
                    "alpha": rec.alpha,
                    "coverage": rec.coverage,
                    "ess": rec.ess,
                    "bandwidth": rec.bandwidth,
                    "comparisons": rec.comparisons,
                    "warnings": rec.warnings,
                    "h": rec.h_vector,
                    "log_weights": rec.log_weights,
                }
            )
        )
    lines.append(_dumps({"kind": "final", **trace.final}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_trace(path) -> RunTrace:
    rounds = []
    header = None
    final = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            doc = json.loads(line)
            kind = doc.pop("kind")
            if kind == "header":
                header = doc
            elif kind == "round":
                rounds.append(
                    RoundRecord(
                        t=doc["t"],
                        values=np.asarray(doc["values"]),
                        best_so_far=doc["best_so_far"],
                        evals=doc["evals"],
                        indices=None if doc["indices"] is None else np.asarray(doc["indices"]),
                        points=None if doc["points"] is None else np.asarray(doc["points"]),
                        alpha=doc["alpha"],
                        coverage=doc["coverage"],
                        ess=doc["ess"],
                        bandwidth=None
                        if doc["bandwidth"] is None
                        else np.asarray(doc["bandwidth"]),
                        comparisons=doc["comparisons"],
                        warnings=doc["warnings"],
                        h_vector=None if doc["h"] is None else np.asarray(doc["h"]),
                        log_weights=None
                        if doc["log_weights"] is None
                        else np.asarray(doc["log_weights"]),
                    )
                )
            elif kind == "final":
                final = doc
    if header is None:
        raise ValueError(f"{path} is not a trace file")
    return RunTrace(
        method=header["method"],
        rounds=rounds,
        config_snapshot=header["config"],
        seed=header["seed"],
        space_info=header["space"],
        final=final,
        values_table=None
        if header.get("values_table") is None
        else np.asarray(header["values_table"]),
        eta=header.get("eta"),
    )


# ---------------------------------------------------------------------------
# Command-line interface
# ---------------------------------------------------------------------------


def _cmd_run(args) -> int:
    config = load_config(args.config)
    report, failures = run_experiment(config, workers=args.workers)
    for method in config.methods:
        curve = report.curve(method["label"])
        if curve:
            last = curve[-1]
            print(
                f"{method['label']:>20s}  round {last['round']:>3d}  "
                f"median {last['median']:.6g}  [{last['q25']:.6g}, {last['q75']:.6g}]"
            )
    if failures:
        for f in failures:
            print(
                f"FAILED {f['method']} replicate {f['replicate']}: {f['error']}",
                file=sys.stderr,
            )
        return 3
    print(f"wrote {Path(config.output_dir) / 'aggregate.csv'}")
    return 0


def _cmd_aggregate(args) -> int:
    trace_dir = Path(args.directory) / "traces"
    if not trace_dir.is_dir():
        trace_dir = Path(args.directory)
    files = sorted(trace_dir.glob("*.jsonl"))
    if not files:
        raise ConfigError(f"no trace files under {args.directory}")
    grouped = {}
    for path in files:
        trace = read_trace(path)
        grouped.setdefault(trace.method, []).append(trace)
    report = AggregateReport.from_traces(grouped)
    csv_text = emit_plot_data(report)
    out = Path(args.out) if args.out else Path(args.directory) / "aggregate.csv"
    out.write_text(csv_text, encoding="utf-8")
    print(f"wrote {out}")
    return 0


def _cmd_validate_theory(args) -> int:
    trace = read_trace(args.trace)
    if args.x_star is not None:
        x_star = int(args.x_star)
    elif trace.values_table is not None:
        x_star = int(np.argmin(trace.values_table))
    else:
        raise ConfigError("trace has no value table; pass --x-star explicitly")
    report = verify_weight_bound(trace, x_star)
    doc = _dumps(report.to_dict())
    if args.out:
        Path(args.out).write_text(doc + "\n", encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(doc)
    return 0 if report.verdict else 3


def _cmd_plot_data(args) -> int:
    doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
    report = AggregateReport(rows=doc["aggregate"])
    Path(args.out).write_text(emit_plot_data(report), encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levelcut",
        description="Batched derivative-free optimization by sublevel-set classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.set_defaults(fn=_cmd_run)

    p_agg = sub.add_parser("aggregate", help="recompute the aggregate from traces")
    p_agg.add_argument("directory")
    p_agg.add_argument("--out", default=None)
    p_agg.set_defaults(fn=_cmd_aggregate)

    p_val = sub.add_parser("validate-theory", help="check the weight bound on a trace")
    p_val.add_argument("trace")
    p_val.add_argument("--x-star", default=None)
    p_val.add_argument("--out", default=None)
    p_val.set_defaults(fn=_cmd_validate_theory)

    p_plot = sub.add_parser("plot-data", help="emit plot CSV from a report.json")
    p_plot.add_argument("report")
    p_plot.add_argument("--out", required=True)
    p_plot.set_defaults(fn=_cmd_plot_data)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
