"""Command-line entry point: validate, derive, predict, score, decide, fixtures, config.

Exit codes: 0 success, 1 domain violation or parse error, 2 I/O or usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import List, Optional, Sequence, Tuple

from .config import CONFIG_ENV, ConfigError, RunConfig, config_hash, config_to_tree, load_config
from .description import derive
from .dsl import TrajectoryLog, parse_annotation_text, parse_trajectory_log, serialize, serialize_anticipation
from .evaluation import (
    actions_to_tree,
    decide,
    render_score_text,
    rows_to_csv,
    score_rows,
    score_to_tree,
    score_understanding,
)
from .fixtures import SCENARIO_IDS, emit_fixture
from .model import TASK_KINDS, Context, ScenarioAnticipation, ScenarioDescription, TaskSpec
from .physics import anticipate
from .schema import (
    SchemaError,
    anticipation_from_tree,
    anticipation_to_json,
    context_from_tree,
    description_from_tree,
    description_to_json,
    dumps_json,
)
from .validation import validate_description

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# -- input helpers ----------------------------------------------------------------


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc.strerror or exc}") from None


def _is_json(text: str) -> bool:
    return text.lstrip().startswith("{")


def _json(text: str, path: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_DOMAIN, f"{path}: invalid JSON: {exc}") from None


def load_annotations(path: str) -> Tuple[ScenarioDescription, Optional[ScenarioAnticipation], list]:
    """Description (plus anticipation and actions when present) from a JSON or block-language file."""
    text = _read(path)
    if _is_json(text):
        try:
            return description_from_tree(_json(text, path)), None, []
        except SchemaError as exc:
            raise CliError(EXIT_DOMAIN, f"{path}: {exc}") from None
    result = parse_annotation_text(text)
    if not result.ok:
        raise CliError(EXIT_DOMAIN, "\n".join(f"{path}:{e}" for e in result.errors))
    return result.description, result.anticipation, result.actions  # type: ignore[return-value]


def load_anticipation(path: str) -> ScenarioAnticipation:
    text = _read(path)
    if _is_json(text):
        try:
            return anticipation_from_tree(_json(text, path))
        except SchemaError as exc:
            raise CliError(EXIT_DOMAIN, f"{path}: {exc}") from None
    _, ant, _ = load_annotations(path)
    if ant is None:
        raise CliError(EXIT_DOMAIN, f"{path}: no ANTICIPATE block")
    return ant


def _config(args) -> RunConfig:
    try:
        cfg = load_config(getattr(args, "config", None))
    except ConfigError as exc:
        raise CliError(EXIT_DOMAIN, str(exc)) from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config: {exc.strerror or exc}") from None
    overrides = {}
    for name in ("horizon", "dt"):
        value = getattr(args, name, None)
        if value is not None:
            if not value > 0:
                raise CliError(EXIT_IO, f"--{name} must be > 0")
            overrides[name] = float(value)
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


# -- commands ---------------------------------------------------------------------


def cmd_validate(args) -> int:
    text = _read(args.path)
    if _is_json(text):
        report = validate_description(_json(text, args.path))
    else:
        result = parse_annotation_text(text)
        if not result.ok:
            _emit_errors(args, [str(e) for e in result.errors])
            return EXIT_DOMAIN
        report = validate_description(result.description)  # type: ignore[arg-type]
    if args.format == "json":
        tree = {"valid": report.ok, "violations": [dataclasses.asdict(v) for v in report.violations]}
        _write(args.output, dumps_json(tree))
    else:
        _write(args.output, report.render())
    return EXIT_OK if report.ok else EXIT_DOMAIN


def _emit_errors(args, messages: List[str]) -> None:
    if getattr(args, "format", "text") == "json":
        sys.stdout.write(dumps_json({"errors": messages}))
    else:
        sys.stderr.write("".join(m + "\n" for m in messages))


def cmd_derive(args) -> int:
    cfg = _config(args)
    log = parse_trajectory_log(_read(args.log))
    if not isinstance(log, TrajectoryLog):
        _emit_errors(args, [f"{args.log}:{e}" for e in log])
        return EXIT_DOMAIN
    context = Context()
    if args.context:
        try:
            context = context_from_tree(_json(_read(args.context), args.context))
        except SchemaError as exc:
            raise CliError(EXIT_DOMAIN, f"{args.context}: {exc}") from None
    scenario_id = args.id or os.path.splitext(os.path.basename(args.log))[0]
    desc = derive(log, context, cfg, scenario_id)
    _write(args.output, serialize(desc) if args.format == "dsl" else description_to_json(desc))
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _config(args)
    desc, _, _ = load_annotations(args.description)
    try:
        ant = anticipate(desc, cfg.horizon, cfg.dt, cfg.anticipation)
    except ValueError as exc:
        raise CliError(EXIT_DOMAIN, str(exc)) from None
    _write(args.output, serialize_anticipation(ant) if args.format == "dsl" else anticipation_to_json(ant))
    return EXIT_OK


def cmd_decide(args) -> int:
    cfg = _config(args)
    desc, embedded, _ = load_annotations(args.description)
    ant = load_anticipation(args.anticipation) if args.anticipation else embedded
    try:
        actions = decide(desc, ant, TaskSpec(args.task), cfg.decision)
    except ValueError as exc:
        raise CliError(EXIT_DOMAIN, str(exc)) from None
    if args.format == "json":
        _write(args.output, dumps_json(actions_to_tree(actions)))
    else:
        _write(args.output, "".join(f"{a.verb}\t{', '.join(a.justification)}\n" for a in actions) or "no action\n")
    return EXIT_OK


def score_pair(gt_path: str, cand_path: str, gt_ant_path: Optional[str], cfg: RunConfig):
    """Score one candidate file against one ground-truth file; pure given its inputs."""
    gt, gt_embedded, _ = load_annotations(gt_path)
    cand, cand_ant, _ = load_annotations(cand_path)
    gt_ant = load_anticipation(gt_ant_path) if gt_ant_path else gt_embedded
    return score_understanding(gt, cand, gt_ant, cand_ant, cfg.scoring)


def _score_job(job):
    name, gt_path, cand_path, gt_ant_path, cfg = job
    try:
        return name, score_pair(gt_path, cand_path, gt_ant_path, cfg), None
    except CliError as exc:
        return name, None, (exc.code, str(exc))


def _batch_jobs(directory: str, cfg: RunConfig):
    """One job per sub-directory holding description.json and candidate.(dsl|json)."""
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot list {directory}: {exc.strerror or exc}") from None
    jobs = []
    for name in names:
        sub = os.path.join(directory, name)
        gt = os.path.join(sub, "description.json")
        cand = next((os.path.join(sub, c) for c in ("candidate.dsl", "candidate.json") if os.path.exists(os.path.join(sub, c))), None)
        if not os.path.isdir(sub) or not os.path.exists(gt) or cand is None:
            continue
        ant = os.path.join(sub, "anticipation.json")
        jobs.append((name, gt, cand, ant if os.path.exists(ant) else None, cfg))
    if not jobs:
        raise CliError(EXIT_IO, f"{directory}: no scenario sub-directories with description.json and candidate.dsl")
    return jobs


def cmd_score(args) -> int:
    cfg = _config(args)
    digest = config_hash(cfg)
    if args.dir:
        if args.gt or args.candidate:
            raise CliError(EXIT_IO, "give either --dir or GT CANDIDATE, not both")
        jobs = _batch_jobs(args.dir, cfg)
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                results = list(pool.map(_score_job, jobs))
        else:
            results = [_score_job(j) for j in jobs]
    else:
        if not (args.gt and args.candidate):
            raise CliError(EXIT_IO, "score needs GT and CANDIDATE paths (or --dir)")
        name = os.path.splitext(os.path.basename(args.gt))[0]
        results = [(name, score_pair(args.gt, args.candidate, args.gt_anticipation, cfg), None)]

    failures = [(n, err) for n, _, err in results if err is not None]
    for name, (code, message) in failures:
        sys.stderr.write(f"{name}: {message}\n")
    scored = [(n, s) for n, s, err in results if err is None]
    rows = [row for n, s in scored for row in score_rows(s, n)]
    if args.csv:
        _write(args.csv, rows_to_csv(rows))
    if args.format == "json":
        if len(scored) == 1 and not args.dir:
            tree = score_to_tree(scored[0][1], digest)
        else:
            tree = {"config_hash": digest, "scenarios": {n: score_to_tree(s, digest) for n, s in scored}}
        _write(args.output, dumps_json(tree))
    else:
        text = f"config {digest}\n" + "".join(
            (f"== {n}\n" if len(scored) > 1 or args.dir else "") + render_score_text(s) for n, s in scored
        )
        _write(args.output, text)
    if failures:
        return max(code for _, (code, _) in failures)
    return EXIT_OK


def cmd_fixtures(args) -> int:
    cfg = _config(args)
    ids = SCENARIO_IDS if args.id == "all" else (args.id,)
    lines = []
    for sid in ids:
        out = os.path.join(args.out_dir, sid) if len(ids) > 1 else args.out_dir
        try:
            manifest = emit_fixture(sid, out, cfg)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write fixture {sid}: {exc.strerror or exc}") from None
        lines.append(f"{sid}: {len(manifest.files) + 1} files in {out}")
    sys.stdout.write("".join(line + "\n" for line in lines))
    return EXIT_OK


def cmd_config(args) -> int:
    cfg = _config(args)
    tree = config_to_tree(cfg)
    if args.format == "json":
        sys.stdout.write(dumps_json({"config": tree, "hash": config_hash(cfg)}))
    else:
        sys.stdout.write(dumps_json(tree) + f"hash {config_hash(cfg)}\n")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenario-understanding",
        description="Derive, anticipate, score and decide on structured traffic scenario descriptions.",
        epilog=f"A default config file can be named in ${CONFIG_ENV}; --config and flags take precedence.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, formats=("text", "json")):
        p.add_argument("--config", help="JSON config file (partial overrides allowed)")
        p.add_argument("--format", choices=formats, default=formats[0])
        p.add_argument("-o", "--output", help="output file (default: standard output)")

    p = sub.add_parser("validate", help="check a description for schema and invariant violations")
    p.add_argument("path", help="description as JSON or block-language text")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("derive", help="ground-truth description from a trajectory log")
    p.add_argument("log", help="trajectory log (CSV with '#ego=<id> rate=<hz>' header)")
    p.add_argument("context", nargs="?", help="context JSON (layers, rules, driver channel)")
    p.add_argument("--id", help="scenario id (default: log file name)")
    common(p, ("json", "dsl"))
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("predict", help="anticipation of a description over a horizon")
    p.add_argument("description")
    p.add_argument("--horizon", type=float, help="seconds ahead (default from config)")
    p.add_argument("--dt", type=float, help="prediction step in s (default from config)")
    common(p, ("json", "dsl"))
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score", help="score a candidate description against ground truth")
    p.add_argument("gt", nargs="?", help="ground-truth description")
    p.add_argument("candidate", nargs="?", help="candidate description")
    p.add_argument("--gt-anticipation", help="ground-truth anticipation JSON")
    p.add_argument("--dir", help="batch mode: score every sub-directory with description.json and candidate.dsl")
    p.add_argument("--workers", type=int, default=1, help="parallel workers in batch mode")
    p.add_argument("--csv", help="also write the flat CSV table here")
    common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("decide", help="actions for a task from a description and its anticipation")
    p.add_argument("description")
    p.add_argument("anticipation", nargs="?", help="anticipation JSON (default: ANTICIPATE block of the description)")
    p.add_argument("--task", choices=TASK_KINDS, default="decision")
    common(p)
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("fixtures", help="write the reference scenario files")
    p.add_argument("id", choices=SCENARIO_IDS + ("all",))
    p.add_argument("out_dir")
    p.add_argument("--config", help="JSON config file")
    p.set_defaults(func=cmd_fixtures)

    p = sub.add_parser("config", help="print the effective configuration")
    p.add_argument("--show", action="store_true", help="print the merged config (the default action)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_IO
    if getattr(args, "workers", 1) < 1:
        sys.stderr.write("--workers must be >= 1\n")
        return EXIT_IO
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
