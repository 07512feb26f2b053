"""
Report Emission
JSON, aligned text table and CSV renderings of a RunReport
"""

import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd

from app.errors import DataFormatError, LabError
from app.models.experiment import ReportFormat, RunReport
from app.utils.encoding import atomic_write_text, dump_json

logger = logging.getLogger(__name__)

ABSENT = "—"

TABLE_COLUMNS = [
    ("defense", "Defense"),
    ("lam", "λ"),
    ("train_accuracy", "Train acc"),
    ("test_accuracy", "Test acc"),
    ("gap", "Gap g"),
    ("best_direct", "Best direct"),
    ("best_label_only", "Best label-only"),
    ("best_adaptive", "Best adaptive"),
    ("best_overall", "Best overall"),
]

FILE_NAMES = {
    ReportFormat.JSON: "report.json",
    ReportFormat.TEXT_TABLE: "report.txt",
    ReportFormat.CSV: "report.csv",
}
TIMINGS_FILE = "timings.json"


def _cell(value) -> str:
    if value is None:
        return ABSENT
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def render_table(headers: Sequence[str], rows: Iterable[Sequence], title: Optional[str] = None) -> str:
    """Column-aligned plain-text table"""
    cells = [[_cell(v) for v in row] for row in rows]
    widths = [len(h) for h in headers]
    for row in cells:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    lines = []
    if title:
        lines.append(title)
    lines.append("  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def report_records(report: RunReport) -> List[Dict]:
    """One flat record per defense row, taken from the JSON rendering"""
    dumped = report.model_dump(mode="json")["rows"]
    return [{key: row.get(key) for key, _ in TABLE_COLUMNS} for row in dumped]


def render_text(report: RunReport) -> str:
    """Main table plus any sweeps present in the report"""
    records = report_records(report)
    sections = [
        render_table(
            [label for _, label in TABLE_COLUMNS],
            [[r[key] for key, _ in TABLE_COLUMNS] for r in records],
            title=f"Run '{report.config.name}' (seed={report.config.seed}, schema {report.schema_version})",
        )
    ]
    if report.early_stopping:
        sections.append(
            render_table(
                ["Epoch", "Train acc", "Test acc", "Best direct"],
                [[p.epoch, p.train_accuracy, p.test_accuracy, p.best_direct] for p in report.early_stopping],
                title="Early stopping",
            )
        )
    if report.knowledge_sweep:
        sections.append(
            render_table(
                ["Known fraction", "λ", "Best adaptive"],
                [[p.knowledge_fraction, p.lam, p.best_adaptive] for p in report.knowledge_sweep],
                title="Attacker knowledge sweep",
            )
        )
    if report.kl_sweep:
        sections.append(
            render_table(
                ["K", "L", "Split-AI test", "Sub-model test", "Split-AI attack", "Distilled test", "Distilled attack"],
                [
                    [p.K, p.L, p.splitai_test_accuracy, p.mean_submodel_accuracy, p.splitai_best_direct,
                     p.distilled_test_accuracy, p.distilled_best_direct]
                    for p in report.kl_sweep
                ],
                title="K/L sweep",
            )
        )
    if report.game is not None:
        game = report.game
        rows = []
        for name, est in (("splitai", game.splitai), ("undefended", game.undefended)):
            if est is not None:
                rows.append([name, est.advantage, est.ci_half_width, est.trials])
        bound = game.distillation_bound
        if bound is not None:
            rows.append(["distilled", bound.sqmi_distilled.advantage, bound.sqmi_distilled.ci_half_width, bound.sqmi_distilled.trials])
        sections.append(render_table(["Learner", "SQMI", "CI ±", "Trials"], rows, title=f"Security game (n={game.n})"))
        if bound is not None:
            sections.append(
                f"Distillation bound: alpha={bound.alpha}, beta_hat={bound.beta_hat:.4f} (per-trial average), "
                f"bound={bound.bound:.4f}, satisfied={bound.bound_satisfied}"
            )
    if report.failed_stages:
        sections.append("Failed stages: " + ", ".join(report.failed_stages))
    if report.unevaluated:
        sections.append("Unevaluated: " + ", ".join(report.unevaluated))
    return "\n\n".join(sections) + "\n"


def render_csv(report: RunReport) -> str:
    frame = pd.DataFrame(report_records(report), columns=[key for key, _ in TABLE_COLUMNS])
    return frame.to_csv(index=False, lineterminator="\n")


def render_json(report: RunReport) -> str:
    return dump_json(report.model_dump(mode="json"))


def emit_report(
    report: RunReport,
    formats: Iterable[Union[ReportFormat, str]],
    out_dir: Union[str, Path],
) -> Dict[ReportFormat, Path]:
    """
    Write every requested rendering atomically

    Best-attack cells are recomputed from the stored per-attack results on
    every call. Timings go to a separate sidecar so report.json depends only
    on the configuration and code.

    Args:
        report: Run report
        formats: Any of json, text_table, csv
        out_dir: Output directory (created when missing)

    Returns:
        Mapping of format to written path
    """
    out_dir = Path(out_dir)
    renderers = {
        ReportFormat.JSON: render_json,
        ReportFormat.TEXT_TABLE: render_text,
        ReportFormat.CSV: render_csv,
    }
    written: Dict[ReportFormat, Path] = {}
    try:
        for fmt in formats:
            fmt = ReportFormat(fmt)
            written[fmt] = atomic_write_text(out_dir / FILE_NAMES[fmt], renderers[fmt](report))
        if report.timings:
            atomic_write_text(out_dir / TIMINGS_FILE, dump_json(report.timings))
    except OSError as exc:
        raise LabError(f"Cannot write report: {exc}", path=str(out_dir)) from exc
    logger.info(f"Report written to {out_dir} ({', '.join(f.value for f in written)})")
    return written


def load_report(path: Union[str, Path]) -> RunReport:
    """Parse a report.json written by emit_report"""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"File not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"Invalid JSON ({exc.msg})", line=exc.lineno) from exc
    return RunReport.model_validate(data)
