"""Command-line interface: ingest CSVs, run attributions, verify reports.

Subcommands:
  attribute  run the pipeline on a CSV per a JSON manifest
  generate   write a synthetic dataset as CSV
  verify     re-check the invariants of an existing report.json
  fixture    run one of the built-in games with zero data

``attribute`` and ``fixture`` write report.json, ranking.csv,
plotdata.csv, shapley_values.png and run.log into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .attribution import AttributionConfig, AttributionReport, attribute, verify_efficiency
from .cem import (
    CategoricalRule,
    CoarseningSpec,
    CutpointRule,
    EqualFrequencyRule,
    EqualWidthRule,
    Rule,
)
from .errors import (
    DegenerateFunnel,
    EmptyDataset,
    EmptyInput,
    EvaluationFailed,
    FunnelShapError,
    InvalidConfig,
    InvalidK,
    InvalidParameter,
    MissingReport,
    NoMatchedStrata,
    NonNumericForNumericRule,
    ParseError,
    SchemaMismatch,
    UnsatisfiableCoalitions,
)
from .fixtures import FIXTURES, fixture_report
from .funnel import CONTROL, TREATMENT, FunnelDataset, UnitRecord
from .plots import render_shapley_bars
from .synth import GeneratorConfig, generate

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
# 2 is argparse's usage-error exit
EXIT_SCHEMA = 3
EXIT_PARSE = 4
EXIT_DEGENERATE = 5
EXIT_NO_MATCHED_STRATA = 6
EXIT_UNSATISFIABLE = 7
EXIT_MISSING_FILE = 8
EXIT_BAD_CONFIG = 9
EXIT_ERROR = 10

_TRUE = {"1", "true"}
_FALSE = {"0", "false"}


@dataclass
class ConfounderDecl:
    name: str
    kind: str = "categorical"
    rule: Rule | None = None


@dataclass
class RunManifest:
    """Everything one attribution run needs beyond the CSV itself."""

    confounders: list[ConfounderDecl]
    group_column: str = "group"
    treatment_label: str = TREATMENT
    previous_column: str = "in_previous"
    current_column: str = "survived"
    unit_id_column: str | None = None
    input_path: str | None = None
    output_dir: str | None = None
    attribution: AttributionConfig = field(default_factory=AttributionConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        decls = []
        for c in data.get("confounders", ()):
            decls.append(
                ConfounderDecl(
                    name=c["name"],
                    kind=c.get("kind", "categorical"),
                    rule=_parse_rule(c.get("coarsening")),
                )
            )
        if not decls:
            raise InvalidConfig("manifest declares no confounders")
        attribution = AttributionConfig(**data.get("attribution", {}))
        return cls(
            confounders=decls,
            group_column=data.get("group_column", "group"),
            treatment_label=data.get("treatment_label", TREATMENT),
            previous_column=data.get("previous_column", "in_previous"),
            current_column=data.get("current_column", "survived"),
            unit_id_column=data.get("unit_id_column"),
            input_path=data.get("input"),
            output_dir=data.get("output_dir"),
            attribution=attribution,
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "RunManifest":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"manifest not found: {path}")
        with path.open(encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def coarsening_spec(self) -> CoarseningSpec:
        return CoarseningSpec({c.name: c.rule for c in self.confounders if c.rule is not None})


def _parse_rule(data: dict | None) -> Rule | None:
    if data is None:
        return None
    kind = data.get("rule")
    try:
        if kind == "categorical":
            return CategoricalRule()
        if kind == "equal_width":
            return EqualWidthRule(int(data["bins"]))
        if kind == "equal_frequency":
            return EqualFrequencyRule(int(data["bins"]))
        if kind == "cutpoints":
            return CutpointRule(tuple(float(e) for e in data["edges"]))
    except (KeyError, ValueError) as exc:
        raise InvalidConfig(f"bad coarsening rule {data!r}: {exc}") from exc
    raise InvalidConfig(f"unknown coarsening rule {kind!r}")


def _parse_flag(cell: str | None, row: int, column: str) -> bool:
    if cell is None:
        raise ParseError(f"row {row}: missing value in column {column!r}", row=row, column=column)
    token = cell.strip().lower()
    if token in _TRUE:
        return True
    if token in _FALSE:
        return False
    raise ParseError(
        f"row {row}, column {column!r}: expected one of 0/1/true/false, got {cell!r}",
        row=row,
        column=column,
    )


def ingest(csv_path: str | Path, manifest: RunManifest) -> tuple[FunnelDataset, int]:
    """Parse one unit per CSV row; returns the dataset and the rejected-row count.

    Rows claiming current-funnel membership without previous-funnel
    membership are rejected and counted rather than aborting the run.
    """
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise FileNotFoundError(f"input not found: {csv_path}")
    names = [c.name for c in manifest.confounders]
    kinds = [c.kind for c in manifest.confounders]
    required = [manifest.group_column, manifest.previous_column, manifest.current_column]
    if manifest.unit_id_column:
        required.append(manifest.unit_id_column)
    required.extend(names)

    records: list[UnitRecord] = []
    rejected = 0
    saw_treatment = False
    with csv_path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in required:
            if column not in header:
                raise SchemaMismatch(f"input is missing column {column!r}")
        for rownum, raw in enumerate(reader, start=2):
            in_previous = _parse_flag(raw[manifest.previous_column], rownum, manifest.previous_column)
            survived = _parse_flag(raw[manifest.current_column], rownum, manifest.current_column)
            if survived and not in_previous:
                rejected += 1
                continue
            group_cell = raw[manifest.group_column]
            is_treatment = group_cell == manifest.treatment_label
            saw_treatment = saw_treatment or is_treatment
            values = []
            for name, kind in zip(names, kinds):
                cell = raw[name]
                if cell is None or cell == "":
                    values.append(None)
                elif kind == "numeric":
                    try:
                        values.append(float(cell))
                    except ValueError:
                        raise ParseError(
                            f"row {rownum}, column {name!r}: not a number: {cell!r}",
                            row=rownum,
                            column=name,
                        ) from None
                else:
                    values.append(cell)
            unit_id = raw[manifest.unit_id_column] if manifest.unit_id_column else str(rownum - 1)
            records.append(
                UnitRecord(
                    unit_id=unit_id,
                    group=TREATMENT if is_treatment else CONTROL,
                    in_previous=in_previous,
                    survived=survived,
                    confounders=tuple(values),
                )
            )
    if not records:
        raise EmptyInput(f"no usable data rows in {csv_path} ({rejected} rejected)")
    if not saw_treatment:
        raise SchemaMismatch(
            f"treatment label {manifest.treatment_label!r} never appears "
            f"in column {manifest.group_column!r}"
        )
    return FunnelDataset(records, names, kinds), rejected


def write_units_csv(dataset: FunnelDataset, path: str | Path) -> Path:
    """Emit a dataset in the ingestion schema (floats via repr, so they round-trip)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "group", "in_previous", "survived", *dataset.confounder_names])
        for r in dataset:
            cells = [r.unit_id, r.group, "1" if r.in_previous else "0", "1" if r.survived else "0"]
            for v in r.confounders:
                cells.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
            writer.writerow(cells)
    return path


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_artifacts(report: AttributionReport, outdir: Path, log_lines: list[str]) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    by_rank = report.rows_by_rank()
    with (outdir / "ranking.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "shapley", "stderr", "add_one", "remove_one", "rank", "pct_contribution"])
        for r in by_rank:
            writer.writerow(
                [r.name, _fmt(r.shapley), _fmt(r.shapley_stderr), _fmt(r.add_one),
                 _fmt(r.remove_one), r.rank, _fmt(r.pct_contribution)]
            )
    with (outdir / "plotdata.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "shapley"])
        for r in by_rank:
            writer.writerow([r.name, _fmt(r.shapley)])

    render_shapley_bars(report, outdir / "shapley_values.png")

    lines = list(log_lines)
    lines.append(f"seed={report.seed}")
    lines.append(f"mode={report.mode}")
    lines.append(f"m={report.m}")
    lines.append(f"m_used={report.m_used}")
    lines.append(f"dead_draws={report.dead_draws}")
    lines.append(f"r_empty={_fmt(report.r_empty)}")
    lines.append(f"r_full={_fmt(report.r_full)}")
    lines.append(f"delta={_fmt(report.delta)}")
    lines.append(f"sum_shapley={_fmt(report.sum_shapley)}")
    if report.matched_fraction_full is not None:
        lines.append(f"matched_fraction_full={_fmt(report.matched_fraction_full)}")
        for row, frac in zip(report.rows, report.matched_fraction_singletons or ()):
            lines.append(f"matched_fraction[{row.name}]={_fmt(frac)}")
    if report.selection is not None:
        lines.append(f"selection={','.join(report.selection)} (by {report.selection_mode})")
    (outdir / "run.log").write_text("\n".join(lines) + "\n", encoding="utf-8")


def run(manifest: RunManifest) -> int:
    """Execute one attribution run and write its artifacts."""
    if not manifest.input_path:
        raise InvalidConfig("no input CSV given (flag --input or manifest key 'input')")
    if not manifest.output_dir:
        raise InvalidConfig("no output directory given (flag --out or manifest key 'output_dir')")
    dataset, rejected = ingest(manifest.input_path, manifest)
    report = attribute(dataset, manifest.coarsening_spec(), manifest.attribution)
    outdir = Path(manifest.output_dir)
    _write_artifacts(
        report,
        outdir,
        [f"input={manifest.input_path}", f"units={len(dataset)}", f"rejected_rows={rejected}"],
    )
    check = verify_efficiency(report)
    print(f"wrote {outdir}/report.json ranking.csv plotdata.csv shapley_values.png run.log")
    print(
        f"mode={report.mode} delta={report.delta:.6g} sum_shapley={report.sum_shapley:.6g} "
        f"efficiency_residual={check.residual:.3g}"
    )
    for row in report.rows_by_rank():
        print(f"  #{row.rank} {row.name}: shapley={row.shapley:.6g}")
    return EXIT_OK


def verify_report(report_path: str | Path) -> int:
    """Re-check a written report: efficiency, percentage sum, rank order."""
    path = Path(report_path)
    if not path.exists():
        raise MissingReport(f"report not found: {path}")
    report = AttributionReport.from_dict(json.loads(path.read_text(encoding="utf-8")))

    checks: list[tuple[str, bool, str]] = []
    # Recompute the total from the rows so edits to either side are caught.
    row_sum = float(sum(r.shapley for r in report.rows))
    consistent = abs(row_sum - report.sum_shapley) <= 1e-12 * max(1.0, abs(row_sum))
    checks.append(
        ("totals", consistent, f"rows sum to {row_sum!r}, report says {report.sum_shapley!r}")
    )
    eff = verify_efficiency(dataclasses.replace(report, sum_shapley=row_sum))
    checks.append(
        (
            "efficiency",
            eff.passed,
            f"residual={eff.residual:.3g} bound={eff.bound:.3g} ({eff.mode} mode)",
        )
    )

    pcts = [r.pct_contribution for r in report.rows]
    if any(p is None for p in pcts):
        checks.append(("pct_sum", True, "skipped: sum of Shapley values is ~0"))
    else:
        total = sum(pcts)
        checks.append(("pct_sum", abs(total - 1.0) <= 1e-9, f"sum={total!r}"))

    values = report.shapley_values
    order = sorted(range(len(values)), key=lambda i: (-values[i], i))
    expected = {i: rank for rank, i in enumerate(order, start=1)}
    rank_ok = all(report.rows[i].rank == expected[i] for i in range(len(values)))
    checks.append(("rank_order", rank_ok, "descending by shapley, ties by input order"))

    all_ok = True
    for name, ok, detail in checks:
        print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
        all_ok = all_ok and ok
    return EXIT_OK if all_ok else EXIT_CHECK_FAILED


def _cmd_attribute(args) -> int:
    manifest = RunManifest.from_json(args.manifest)
    if args.input:
        manifest.input_path = args.input
    if args.out:
        manifest.output_dir = args.out
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.m is not None:
        overrides["permutations_m"] = args.m
    if args.exact_threshold is not None:
        overrides["exact_threshold"] = args.exact_threshold
    if args.top_k is not None:
        overrides["top_k"] = args.top_k
    if args.rank_by is not None:
        overrides["rank_by"] = args.rank_by
    if args.workers is not None:
        overrides["workers"] = args.workers
    if overrides:
        manifest.attribution = dataclasses.replace(manifest.attribution, **overrides)
    return run(manifest)


def _cmd_generate(args) -> int:
    path = Path(args.config)
    if not path.exists():
        raise FileNotFoundError(f"generator config not found: {path}")
    cfg = GeneratorConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))
    dataset = generate(cfg)
    out = write_units_csv(dataset, args.out)
    print(f"wrote {len(dataset)} units to {out}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    return verify_report(args.report)


def _cmd_fixture(args) -> int:
    report = fixture_report(args.name)
    outdir = Path(args.out)
    _write_artifacts(report, outdir, [f"fixture={args.name}"])
    print(f"wrote fixture {args.name!r} artifacts to {outdir}")
    for row in report.rows_by_rank():
        print(
            f"  {row.name}: shapley={row.shapley:g} add_one={row.add_one:g} "
            f"remove_one={row.remove_one:g}"
        )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="funnelshap",
        description="Rank confounders by their Shapley contribution to the CEM-adjusted funnel survival ratio.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("attribute", help="run the attribution pipeline on a CSV")
    p.add_argument("--input", help="input CSV (overrides the manifest)")
    p.add_argument("--manifest", required=True, help="JSON run manifest")
    p.add_argument("--out", help="output directory (overrides the manifest)")
    p.add_argument("--seed", type=int)
    p.add_argument("--m", type=int, help="permutations for sampled mode")
    p.add_argument("--exact-threshold", type=int, dest="exact_threshold")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--rank-by", choices=["signed", "magnitude"], dest="rank_by")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=_cmd_attribute)

    p = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    p.add_argument("--config", required=True, help="JSON generator config")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("verify", help="re-check an existing report.json")
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("fixture", help="run a built-in game")
    p.add_argument("--name", required=True, choices=sorted(FIXTURES))
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_fixture)

    return parser


_EXIT_BY_ERROR: list[tuple[type, int]] = [
    (SchemaMismatch, EXIT_SCHEMA),
    (EmptyInput, EXIT_SCHEMA),
    (EmptyDataset, EXIT_SCHEMA),
    (ParseError, EXIT_PARSE),
    (DegenerateFunnel, EXIT_DEGENERATE),
    (NoMatchedStrata, EXIT_NO_MATCHED_STRATA),
    (UnsatisfiableCoalitions, EXIT_UNSATISFIABLE),
    (MissingReport, EXIT_MISSING_FILE),
    (InvalidConfig, EXIT_BAD_CONFIG),
    (InvalidParameter, EXIT_BAD_CONFIG),
    (InvalidK, EXIT_BAD_CONFIG),
    (NonNumericForNumericRule, EXIT_BAD_CONFIG),
]


def _exit_code_for(exc: Exception) -> int:
    if isinstance(exc, EvaluationFailed) and exc.__cause__ is not None:
        return _exit_code_for(exc.__cause__)
    if isinstance(exc, FileNotFoundError):
        return EXIT_MISSING_FILE
    for cls, code in _EXIT_BY_ERROR:
        if isinstance(exc, cls):
            return code
    return EXIT_ERROR


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FunnelShapError, FileNotFoundError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return _exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
