import numpy as np
import pytest

from closedqn.study import (
    StudyConfig,
    StudyError,
    pick_population,
    random_closed_model,
    run_study,
    sample_demands,
)


def test_sampled_cv_matches_target():
    rng = np.random.default_rng(0)
    X = sample_demands(rng, 200_000, 0.3)
    assert X.std() / X.mean() == pytest.approx(0.3, rel=0.01)
    assert X.min() > 0


def test_config_rejects_unknown_field():
    with pytest.raises(StudyError, match="bogus"):
        StudyConfig.from_mapping({"bogus": 1})


def test_config_rejects_wide_cv():
    with pytest.raises(StudyError):
        StudyConfig(cv_range=(0.1, 0.6))


def test_pick_population_errors_outside_band():
    cfg = StudyConfig(population=(1, 2), utilization_band=(0.8, 0.9))
    with pytest.raises(StudyError, match="unreachable"):
        pick_population(np.array([0, 0.1, 0.2]), 1.0, cfg)


def test_report_is_deterministic_and_seed_sensitive():
    a = run_study(StudyConfig(samples=15, seed=1)).to_text()
    b = run_study(StudyConfig(samples=15, seed=1)).to_text()
    c = run_study(StudyConfig(samples=15, seed=2)).to_text()
    assert a == b != c


def test_utilization_near_target():
    r = run_study(StudyConfig(samples=30, seed=5))
    assert np.all((r.utilizations >= 0.35) & (r.utilizations <= 0.45))


def test_optional_sections():
    r = run_study(StudyConfig(samples=5, seed=9, bounds=True, pam_samples=3))
    text = r.to_text()
    assert "GSB" in text and "PAM_TWO" in text


def test_random_closed_model_shape():
    m = random_closed_model(np.random.default_rng(1), max_stations=4, max_population=9)
    assert 1 <= len(m.stations) <= 4 and 1 <= m.population <= 9
