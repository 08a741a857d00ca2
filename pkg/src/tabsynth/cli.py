"""Command-line entry point: ``tabsynth <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or configuration, 2 evaluation
thresholds not met. Every subcommand writes its fully resolved configuration
to ``<primary output>.effective.json`` (or ``--echo``).
"""

import argparse
import dataclasses
import json
import logging
import sys

from ._validation import TrainingError, ValidationError
from .artifact import load_artifact, save_artifact
from .benchmarks import BENCHMARKS, make_benchmark
from .evaluation import DEFAULT_THRESHOLDS, TstrConfig, encoded_matrix, evaluate
from .gan import GanConfig, generate, train, write_log_csv
from .pipeline import TARGET_ROLES, Schema, fit_pipeline, infer_schema
from .table import atomic_write_text, read_csv, write_csv
from .tsne import TsneConfig, combined_embed, mixing_score

logger = logging.getLogger("tabsynth")

EXIT_OK, EXIT_INVALID, EXIT_THRESHOLD = 0, 1, 2


# -- run configuration --------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class PipelineOptions:
    scaler: str = "standard"
    boxcox: bool = True
    skew_threshold: float = 1.0


@dataclasses.dataclass(frozen=True)
class Thresholds:
    ks_max: float = DEFAULT_THRESHOLDS["ks_max"]
    js_max: float = DEFAULT_THRESHOLDS["js_max"]
    tstr_gap_max: float = DEFAULT_THRESHOLDS["tstr_gap_max"]
    mixing_max: float = DEFAULT_THRESHOLDS["mixing_max"]


@dataclasses.dataclass(frozen=True)
class MixingOptions:
    enabled: bool = True
    subsample: int = 1000
    k: int = 10


@dataclasses.dataclass(frozen=True)
class RunConfig:
    gan: GanConfig = dataclasses.field(default_factory=GanConfig)
    pipeline: PipelineOptions = dataclasses.field(default_factory=PipelineOptions)
    thresholds: Thresholds = dataclasses.field(default_factory=Thresholds)
    tstr: TstrConfig = dataclasses.field(default_factory=TstrConfig)
    tsne: TsneConfig = dataclasses.field(default_factory=TsneConfig)
    mixing: MixingOptions = dataclasses.field(default_factory=MixingOptions)

    def to_dict(self):
        return _to_plain(self)

    @classmethod
    def from_dict(cls, d):
        return _build(cls, d, "")

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(d)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    return obj


def _default(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    return f.default_factory()


def _type_ok(value, default):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, str):
        return isinstance(value, str)
    if isinstance(default, tuple):
        return isinstance(value, (list, tuple)) and all(
            isinstance(v, int) and not isinstance(v, bool) for v in value)
    return True


def _build(cls, d, prefix):
    where = prefix.rstrip(".") or "config"
    if not isinstance(d, dict):
        raise ValidationError(f"{where}: expected an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    for key in d:
        if key not in known:
            raise ValidationError(f"unknown config key '{prefix}{key}'")
    kwargs = {}
    for name, value in d.items():
        default = _default(known[name])
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{prefix}{name}.")
        elif not _type_ok(value, default):
            raise ValidationError(
                f"config key '{prefix}{name}' expects {type(default).__name__}, "
                f"got {type(value).__name__}")
        else:
            kwargs[name] = tuple(value) if isinstance(default, tuple) else value
    try:
        return cls(**kwargs)
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _echo(args, primary_out, payload):
    path = args.echo or f"{primary_out}.effective.json"
    doc = {"command": args.command,
           "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)},
           **payload}
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- subcommands ----------------------------------------------------------------

def _parse_sentinels(items):
    out = {}
    for item in items or ():
        col, sep, value = item.partition("=")
        if not sep or not col:
            raise ValidationError(f"--sentinel expects COLUMN=VALUE, got {item!r}")
        out.setdefault(col, []).append(value)
    return out


def cmd_infer_schema(args):
    table = read_csv(args.data)
    hints = {col: {"sentinels": tuple(v)} for col, v in _parse_sentinels(args.sentinel).items()}
    if args.target:
        hints.setdefault(args.target, {})["target"] = args.target_role
    schema = infer_schema(table, hints)
    schema.save(args.out)
    _echo(args, args.out, {"schema": schema.to_dict()})
    print(f"schema with {len(schema.columns)} columns written to {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = RunConfig.load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, gan=dataclasses.replace(cfg.gan, seed=args.seed))
    if args.steps is not None:
        cfg = dataclasses.replace(cfg, gan=dataclasses.replace(cfg.gan, steps=args.steps))
    schema = Schema.load(args.schema)
    table = read_csv(args.data, schema)
    p = cfg.pipeline
    pipeline = fit_pipeline(table, schema, p.scaler, p.boxcox, p.skew_threshold)
    model = train(cfg.gan, pipeline.transform(table), pipeline)
    save_artifact(model, args.out)
    log_path = args.log or f"{args.out}.convergence.csv"
    write_log_csv(model.log, log_path)
    if args.pipeline_out:
        pipeline.save(args.pipeline_out)
    _echo(args, args.out, {"config": cfg.to_dict()})
    print(f"trained {cfg.gan.variant} for {cfg.gan.steps} steps; model written to {args.out}")
    return EXIT_OK


def cmd_generate(args):
    if args.n < 0:
        raise ValidationError("--n must be >= 0")
    model = load_artifact(args.model)
    table, report = generate(model, args.n, args.seed, return_report=True)
    write_csv(table, args.out)
    report_path = args.report or f"{args.out}.report.json"
    atomic_write_text(report_path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    _echo(args, args.out, {"config": {"gan": model.config.to_dict()}})
    print(f"wrote {args.n} rows to {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    cfg = RunConfig.load(args.config)
    schema = Schema.load(args.schema)
    real = read_csv(args.real, schema)
    synth = read_csv(args.synth, schema)
    holdout = read_csv(args.holdout, schema) if args.holdout else None
    with_mixing = cfg.mixing.enabled and not args.no_tsne
    report = evaluate(real, synth, schema, holdout=holdout,
                      thresholds=dataclasses.asdict(cfg.thresholds), tstr_config=cfg.tstr,
                      tsne_config=cfg.tsne, with_mixing=with_mixing,
                      mixing_subsample=cfg.mixing.subsample, mixing_k=cfg.mixing.k)
    report.save(args.out)
    if args.hist_dir:
        report.write_histograms(args.hist_dir)
    _echo(args, args.out, {"config": cfg.to_dict()})
    for name, ok in report.checks.items():
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_THRESHOLD


def cmd_tsne(args):
    cfg = RunConfig.load(args.config)
    real = read_csv(args.real)
    schema = Schema.load(args.schema) if args.schema else infer_schema(real)
    real = schema.apply_sentinels(real)
    synth = read_csv(args.synth, schema)
    pipeline = fit_pipeline(real, schema, strict=False)
    subsample = args.subsample or cfg.mixing.subsample
    emb = combined_embed(encoded_matrix(pipeline, real), encoded_matrix(pipeline, synth),
                         cfg.tsne, subsample)
    score = mixing_score(emb, cfg.mixing.k)
    lines = ["x,y,source"] + [f"{x!r},{y!r},{s}" for (x, y), s in
                              zip(emb.coords.tolist(), emb.labels)]
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    kl_path = args.kl_out or f"{args.out}.kl.csv"
    atomic_write_text(kl_path, "iteration,kl\n" + "".join(f"{i},{kl!r}\n" for i, kl in emb.kl_trace))
    _echo(args, args.out, {"config": {"tsne": _to_plain(cfg.tsne), "mixing": _to_plain(cfg.mixing)},
                           "mixing_score": score})
    print(f"mixing score {score:.4f}; embedding written to {args.out}")
    return EXIT_OK


def cmd_benchmark(args):
    table, schema = make_benchmark(args.name, args.n, args.seed)
    write_csv(table, args.out)
    schema_out = args.schema_out or f"{args.out}.schema.json"
    schema.save(schema_out)
    _echo(args, args.out, {"schema": schema.to_dict()})
    print(f"wrote {args.n} rows of {args.name} to {args.out}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors, which would collide with the threshold code
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="tabsynth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--echo", help="where to write the effective configuration")
        return p

    p = add("infer-schema", cmd_infer_schema, "guess a schema from a CSV file")
    p.add_argument("data")
    p.add_argument("--out", required=True)
    p.add_argument("--target")
    p.add_argument("--target-role", default="binary_target", choices=TARGET_ROLES[1:])
    p.add_argument("--sentinel", action="append", metavar="COLUMN=VALUE")

    p = add("train", cmd_train, "fit the encoder and train a GAN")
    p.add_argument("data")
    p.add_argument("--schema", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="model artifact path")
    p.add_argument("--log", help="convergence CSV path")
    p.add_argument("--pipeline-out", help="also save the fitted encoder as JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)

    p = add("generate", cmd_generate, "sample synthetic rows from a trained model")
    p.add_argument("model")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="generation report path")

    p = add("evaluate", cmd_evaluate, "compare synthetic rows with real ones")
    p.add_argument("real")
    p.add_argument("synth")
    p.add_argument("--schema", required=True)
    p.add_argument("--holdout", help="held-out real rows for train-on-synthetic scoring")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--hist-dir")
    p.add_argument("--no-tsne", action="store_true")

    p = add("tsne", cmd_tsne, "joint t-SNE embedding of real and synthetic rows")
    p.add_argument("real")
    p.add_argument("synth")
    p.add_argument("--schema")
    p.add_argument("--config")
    p.add_argument("--subsample", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--kl-out")

    p = add("benchmark", cmd_benchmark, "write a benchmark fixture and its schema")
    p.add_argument("name", choices=BENCHMARKS)
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--schema-out")
    return parser


def run_cli(argv=None):
    """Run one subcommand; returns the exit code instead of exiting."""
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (ValidationError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run_cli())
