"""
Report rendering and emission
"""

import pandas as pd
import pytest

from app.errors import DataFormatError
from app.models.attack import AttackFamily, AttackResult, DecisionRule, Direction, ThresholdMode
from app.models.experiment import Defense, DefenseRow, ExperimentConfig, ReportFormat, RunReport
from app.services.report import ABSENT, emit_report, load_report, render_csv, render_json, render_text, render_table


@pytest.fixture
def report() -> RunReport:
    rule = DecisionRule(
        mode=ThresholdMode.PER_CLASS,
        direction=Direction.HIGHER_MEANS_MEMBER,
        threshold=0.5,
        class_thresholds={0: 0.4, 2: 0.7},
        calibration_accuracy=0.75,
    )
    return RunReport(
        config=ExperimentConfig(name="fixture", seed=3),
        dataset={"n": 4000, "d": 100, "k": 10},
        rows=[
            DefenseRow(
                defense=Defense.UNDEFENDED,
                train_accuracy=0.99,
                test_accuracy=0.72,
                attacks=[
                    AttackResult(name="confidence", family=AttackFamily.DIRECT, accuracy=0.81, rule=rule),
                    AttackResult(name="label_only_noise", family=AttackFamily.LABEL_ONLY, accuracy=0.78, queries_per_target=3000),
                    AttackResult(name="replay", family=AttackFamily.REPLAY, accuracy=0.5, queries_per_target=3),
                ],
            ),
            DefenseRow(defense=Defense.SPLITAI, train_accuracy=0.76, test_accuracy=0.75),
            DefenseRow(
                defense=Defense.DISTILLED,
                lam=0.0,
                train_accuracy=0.78,
                test_accuracy=0.74,
                attacks=[
                    AttackResult(name="adaptive_nn1", family=AttackFamily.ADAPTIVE, accuracy=0.53),
                    AttackResult(name="replay", family=AttackFamily.REPLAY, accuracy=0.99, queries_per_target=3),
                ],
            ),
        ],
        unevaluated=["multi_query_label_only_adaptive"],
        timings={"data": 0.1},
    )


class TestRows:
    def test_best_columns(self, report):
        undefended = report.rows[0]
        assert undefended.gap == pytest.approx(0.27)
        assert undefended.best_direct == 0.81
        assert undefended.best_label_only == 0.78
        assert undefended.best_adaptive is None
        assert undefended.best_overall == 0.81
        assert undefended.best_attack == "confidence"

    def test_replay_not_in_headline(self, report):
        distilled = report.row(Defense.DISTILLED, 0.0)
        assert distilled.best_overall == 0.53
        assert distilled.best_attack == "adaptive_nn1"

    def test_empty_attacks(self, report):
        row = report.row(Defense.SPLITAI)
        assert row.best_overall is None
        assert row.best_attack is None

    def test_attack_report_ranges_over_all_families(self, report):
        listing = report.row(Defense.DISTILLED, 0.0).attack_report()
        assert listing.target == "distilled[0.0]"
        assert listing.best_attack == {"name": "replay", "accuracy": 0.99}
        assert listing.best_of(AttackFamily.ADAPTIVE) == 0.53


class TestRendering:
    def test_absent_cells(self, report):
        text = render_text(report)
        splitai_line = next(line for line in text.splitlines() if line.startswith("splitai"))
        assert splitai_line.count(ABSENT) == 5
        assert "Unevaluated: multi_query_label_only_adaptive" in text

    def test_csv_rows_match_report(self, report, tmp_path):
        path = tmp_path / "report.csv"
        path.write_text(render_csv(report))
        frame = pd.read_csv(path)
        assert list(frame["defense"]) == ["undefended", "splitai", "distilled"]
        assert frame.loc[0, "best_overall"] == pytest.approx(0.81)

    def test_timings_not_in_json(self, report):
        assert "timings" not in render_json(report)

    def test_render_table_alignment(self):
        table = render_table(["a", "bb"], [[1.0, None], ["xyz", 2]])
        lines = table.splitlines()
        assert lines[0] == "a       bb"
        assert lines[2] == f"1.0000  {ABSENT}"


class TestEmission:
    def test_json_round_trip_is_byte_identical(self, report, tmp_path):
        written = emit_report(report, [ReportFormat.JSON], tmp_path)
        loaded = load_report(written[ReportFormat.JSON])
        assert render_json(loaded) == written[ReportFormat.JSON].read_text()

    def test_all_formats_and_sidecar(self, report, tmp_path):
        written = emit_report(report, ["json", "text_table", "csv"], tmp_path / "out")
        assert {p.name for p in written.values()} == {"report.json", "report.txt", "report.csv"}
        assert (tmp_path / "out" / "timings.json").exists()

    def test_load_missing(self, tmp_path):
        with pytest.raises(DataFormatError):
            load_report(tmp_path / "nope.json")

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text("{\n  broken")
        with pytest.raises(DataFormatError) as info:
            load_report(path)
        assert info.value.detail.get("line") == 2
