"""
Desk benchmark: defense and attack relations on the full `desk` preset

One run feeds every test in this module.
"""

import pytest

from app.models.experiment import Defense, ExperimentConfig, RunReport
from app.services.experiment import run_experiment

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk(tmp_path_factory) -> RunReport:
    cfg = ExperimentConfig.desk(seed=0).model_copy(
        update={"output_dir": str(tmp_path_factory.mktemp("desk"))}
    )
    report = run_experiment(cfg, emit=False)
    assert report.complete, report.failed_stages
    return report


def _advantage(accuracy: float) -> float:
    return accuracy - 0.5


def test_splitai_resists_direct_attacks(desk):
    assert 0.48 <= desk.row(Defense.SPLITAI).best_direct <= 0.52


def test_undefended_model_leaks(desk):
    undefended = desk.row(Defense.UNDEFENDED)
    assert undefended.train_accuracy >= 0.99
    assert undefended.best_direct >= 0.60


def test_distilled_beats_undefended(desk):
    undefended = desk.row(Defense.UNDEFENDED)
    distilled = desk.row(Defense.DISTILLED, 0.0)
    assert distilled.best_overall <= undefended.best_overall - 0.05
    assert _advantage(distilled.best_overall) <= _advantage(undefended.best_overall) / 2


def test_distilled_keeps_utility(desk):
    undefended = desk.row(Defense.UNDEFENDED)
    assert desk.row(Defense.DISTILLED, 0.0).test_accuracy >= undefended.test_accuracy - 0.05


def test_all_average_view_leaks_more_than_adaptive_inference(desk):
    assert desk.row(Defense.AOAO).best_overall >= desk.row(Defense.SPLITAI).best_overall + 0.05


def test_one_flip_queries(desk):
    splitai = desk.row(Defense.SPLITAI)
    distilled = desk.row(Defense.DISTILLED, 0.0)
    assert splitai.attack("indirect_noisy_single").accuracy >= 0.55
    assert distilled.attack("indirect_noisy_single").accuracy <= distilled.best_direct + 0.01


def test_replay_separates_splitai_only(desk):
    assert desk.row(Defense.SPLITAI).attack("replay").accuracy >= 0.9
    assert desk.row(Defense.DISTILLED, 0.0).attack("replay").accuracy == 0.5


def test_distillation_bound_holds(desk):
    check = desk.game.distillation_bound
    assert check.alpha == pytest.approx(0.1)
    assert check.bound_satisfied
    assert check.sqmi_distilled.advantage <= 0.5 + check.alpha + check.beta_hat + check.sqmi_distilled.ci_half_width


def test_splitai_game_is_chance(desk):
    assert desk.game.splitai.contains(0.5)


def test_lambda_endpoints(desk):
    undefended = desk.row(Defense.UNDEFENDED)
    hard = desk.row(Defense.DISTILLED, 1.0)
    soft = desk.row(Defense.DISTILLED, 0.0)
    assert hard.best_direct == pytest.approx(undefended.best_direct, abs=0.02)
    assert hard.best_overall >= soft.best_overall


def test_adaptive_accuracy_grows_with_knowledge(desk):
    points = sorted(desk.knowledge_sweep, key=lambda p: p.knowledge_fraction)
    assert [p.knowledge_fraction for p in points] == [0.1, 0.5, 0.9]
    for low, high in zip(points, points[1:]):
        assert high.best_adaptive >= low.best_adaptive - 0.02
