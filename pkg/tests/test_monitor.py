import json

import numpy as np
import pytest

from engageopt import monitor, reward, simulator


def make_pairs(model, n, seed):
    corpus = simulator.gen_corpus(200, seed=seed)
    return simulator.sample_preference_pairs(model, corpus, n, seed=seed)


@pytest.fixture(scope="module")
def trained():
    model = simulator.planted_user_model()
    pairs = make_pairs(model, 3000, seed=1)
    params = reward.train_pairwise(
        pairs, reward.TrainConfig(learning_rate=1.0, max_epochs=300, seed=0)
    )
    return model, params


class TestDailyCheck:
    def accuracy_stub(self, accuracy, n=600):
        # fabricate a report through the arithmetic only
        baseline = monitor.MonitorBaseline(baseline_accuracy=0.67, established_at="2025-01-01")
        report = monitor.MonitorReport(
            day="", sample_size=n, accuracy=accuracy,
            relative_drop=(0.67 - accuracy) / 0.67,
            retrain_triggered=(n >= 500 and (0.67 - accuracy) / 0.67 > 0.10),
            insufficient_sample=n < 500,
        )
        return report

    def test_triggered_at_twelve_percent_drop(self):
        report = self.accuracy_stub(0.59)
        assert report.relative_drop == pytest.approx(0.1194, abs=1e-3)
        assert report.retrain_triggered

    def test_not_triggered_at_seven_percent_drop(self):
        report = self.accuracy_stub(0.62)
        assert report.relative_drop == pytest.approx(0.0746, abs=1e-3)
        assert not report.retrain_triggered

    def test_insufficient_sample_guard(self, trained):
        model, params = trained
        baseline = monitor.MonitorBaseline(baseline_accuracy=0.9, established_at="2025-01-01")
        report = monitor.daily_check(params, make_pairs(model, 100, seed=5), baseline)
        assert report.insufficient_sample
        assert not report.retrain_triggered

    def test_daily_check_end_to_end_arithmetic(self, trained):
        model, params = trained
        fresh = make_pairs(model, 600, seed=9)
        accuracy = reward.evaluate_accuracy(params, fresh)
        baseline = monitor.MonitorBaseline(baseline_accuracy=accuracy, established_at="2025-01-01")
        report = monitor.daily_check(params, fresh, baseline, day="2025-02-01")
        assert report.sample_size == 600
        assert report.accuracy == accuracy
        assert report.relative_drop == 0.0
        assert not report.retrain_triggered


class TestRetrainAndSwap:
    def test_swap_on_improvement(self, trained):
        model, params = trained
        shifted = simulator.negate_weight(model, "ends_with_ellipsis")
        train = make_pairs(shifted, 2500, seed=21)
        holdout = make_pairs(shifted, 800, seed=22)
        result = monitor.retrain_and_swap(
            params, train, holdout,
            reward.TrainConfig(learning_rate=1.0, max_epochs=300, seed=0),
        )
        assert result.swapped
        assert result.candidate_accuracy >= result.incumbent_accuracy
        assert result.baseline_accuracy == result.candidate_accuracy
        assert not result.alert

    def test_keep_incumbent_on_regression(self, trained):
        model, params = trained
        # candidate trained on garbage (reversed labels) regresses on holdout
        good_holdout = make_pairs(model, 800, seed=31)
        reversed_pairs = [
            reward.PairDatum(p.post_text, p.loser_text, p.winner_text)
            for p in make_pairs(model, 1500, seed=32)
        ]
        result = monitor.retrain_and_swap(
            params, reversed_pairs, good_holdout,
            reward.TrainConfig(learning_rate=1.0, max_epochs=200, seed=0),
        )
        assert not result.swapped
        assert result.alert
        assert result.params is params

    def test_retrain_deterministic(self, trained):
        model, _ = trained
        train = make_pairs(model, 500, seed=41)
        config = reward.TrainConfig(seed=3)
        a = reward.train_pairwise(train, config)
        b = reward.train_pairwise(train, config)
        assert np.array_equal(a.weights, b.weights)
        assert a.bias == b.bias

    def test_atomic_file_swap_keeps_previous(self, trained, tmp_path):
        model, params = trained
        path = tmp_path / "live.json"
        params.save(path)
        shifted = simulator.negate_weight(model, "ends_with_ellipsis")
        result = monitor.retrain_and_swap(
            params,
            make_pairs(shifted, 1200, seed=51),
            make_pairs(shifted, 500, seed=52),
            reward.TrainConfig(learning_rate=1.0, max_epochs=200, seed=0),
            params_path=path,
        )
        assert result.swapped
        live = reward.RewardModelParams.load(path)
        assert np.array_equal(live.weights, result.params.weights)
        prev = reward.RewardModelParams.load(tmp_path / "live.prev")
        assert np.array_equal(prev.weights, params.weights)


def test_report_log_append(tmp_path):
    report = monitor.MonitorReport(
        day="2025-02-01", sample_size=600, accuracy=0.61, relative_drop=0.09,
        retrain_triggered=False, insufficient_sample=False,
    )
    log = tmp_path / "reports.jsonl"
    monitor.append_report(report, log)
    monitor.append_report(report, log)
    lines = log.read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["accuracy"] == 0.61
