import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from musecognet.data_io import synth_generate
from musecognet.evaluation import (
    FoldResult,
    LosoResult,
    MetricError,
    accuracy,
    confusion_matrix,
    f1_score,
    macro_f1,
    predict,
    predict_logits,
    report,
    run_loso,
)
from musecognet.model import ModelConfig, init_params
from musecognet.training import TrainConfig

labels3 = st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=40)


class TestPredict:
    def test_tie_lowest_class(self):
        assert predict_logits(np.array([[1.0, 1.0, 1.0]]))[0] == 0

    def test_argmax(self):
        assert predict_logits(np.array([[0.0, 5.0, 1.0]]))[0] == 1

    # integer-valued logits so the shift is exact and ties survive it
    @given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=3), st.integers(-1000, 1000))
    def test_shift_invariant(self, logits, c):
        logits = np.array([logits], dtype=float)
        assert predict_logits(logits)[0] == predict_logits(logits + c)[0]

    def test_predict_windows(self):
        windows = synth_generate(2, 1, seed=0)
        preds = predict(init_params(ModelConfig(), np.random.default_rng(0)), windows, ModelConfig())
        assert len(preds) == 6 and set(preds) <= {0, 1, 2}


class TestAccuracy:
    def test_perfect(self):
        assert accuracy([0, 1, 2], [0, 1, 2]) == 100.0

    def test_all_wrong(self):
        assert accuracy([1, 2, 0], [0, 1, 2]) == 0.0

    def test_two_of_three(self):
        assert accuracy([0, 1, 1], [0, 1, 2]) == pytest.approx(66.667, abs=1e-3)

    def test_empty(self):
        with pytest.raises(MetricError):
            accuracy([], [])

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            accuracy([0, 1], [0])

    @given(labels3)
    def test_trace_of_confusion(self, pairs):
        preds, labels = zip(*pairs)
        cm = confusion_matrix(preds, labels)
        assert cm.sum() == len(pairs) and np.all(cm >= 0)
        assert accuracy(preds, labels) == pytest.approx(100.0 * np.trace(cm) / cm.sum())


class TestF1:
    def test_perfect(self):
        assert macro_f1([0, 1, 2, 2], [0, 1, 2, 2]) == 100.0

    def test_hand_example(self):
        # class 0: P = 2/3, R = 1 -> F1 = 0.8; classes 1 and 2 score 0
        assert macro_f1([0, 0, 0], [0, 0, 1]) == pytest.approx(80.0 / 3, abs=1e-9)
        assert macro_f1([0, 0, 0], [0, 0, 1]) == pytest.approx(26.667, abs=1e-3)

    def test_empty(self):
        with pytest.raises(MetricError):
            macro_f1([], [])

    def test_other_averages(self):
        preds, labels = [0, 0, 0], [0, 0, 1]
        assert f1_score(preds, labels, average="micro") == pytest.approx(200 / 3)
        assert f1_score(preds, labels, average="weighted") == pytest.approx(100 * 0.8 * 2 / 3)
        with pytest.raises(MetricError):
            f1_score(preds, labels, average="samples")

    @given(labels3, st.randoms(use_true_random=False))
    def test_order_invariant(self, pairs, r):
        shuffled = list(pairs)
        r.shuffle(shuffled)
        assert macro_f1(*zip(*pairs)) == pytest.approx(macro_f1(*zip(*shuffled)), abs=1e-12)

    @given(labels3, st.permutations([0, 1, 2]))
    def test_relabeling_invariant(self, pairs, perm):
        preds, labels = zip(*pairs)
        p2 = [perm[p] for p in preds]
        l2 = [perm[lab] for lab in labels]
        assert macro_f1(preds, labels) == pytest.approx(macro_f1(p2, l2), abs=1e-12)
        assert accuracy(preds, labels) == accuracy(p2, l2)


@pytest.fixture(scope="module")
def loso_result():
    windows = synth_generate(3, 1, seed=1)
    return windows, run_loso(windows, ModelConfig(), TrainConfig(epochs=2, batch_size=4, seed=3))


class TestRunLoso:
    def test_folds(self, loso_result):
        windows, result = loso_result
        assert [f.held_out_subject for f in result.folds] == ["s01", "s02", "s03"]
        assert sum(int(f.confusion.sum()) for f in result.folds) == len(windows)

    def test_summary_is_mean(self, loso_result):
        _, result = loso_result
        assert result.accuracy == pytest.approx(np.mean([f.accuracy for f in result.folds]), abs=1e-9)
        assert result.macro_f1 == pytest.approx(np.mean([f.macro_f1 for f in result.folds]), abs=1e-9)

    def test_ablation_schema(self, loso_result):
        windows, full = loso_result
        ablated = run_loso(windows, ModelConfig(), TrainConfig(epochs=2, batch_size=4, seed=3), lam=0.0)
        assert ablated.ablation == "W/O SSL" and full.ablation == "full"
        a, b = json.loads(report(full)[1]), json.loads(report(ablated)[1])
        assert a.keys() == b.keys() and a["folds"][0].keys() == b["folds"][0].keys()
        assert b["config"]["lambda"] == 0.0

    def test_parallel_matches_serial(self, loso_result):
        windows, result = loso_result
        parallel = run_loso(windows, ModelConfig(), TrainConfig(epochs=2, batch_size=4, seed=3), jobs=2)
        assert report(parallel)[1] == report(result)[1]


def _result(n_folds):
    folds = [
        FoldResult(f"s{i:02d}", 50.0 + i, 40.0 + i, np.eye(3, dtype=np.int64) * (i + 1)) for i in range(n_folds)
    ]
    return LosoResult(
        folds=folds,
        accuracy=float(np.mean([f.accuracy for f in folds])),
        macro_f1=float(np.mean([f.macro_f1 for f in folds])),
        model_config=ModelConfig(),
        train_config=TrainConfig(seed=7),
    )


class TestReport:
    def test_one_fold_table(self):
        table, _ = report(_result(1))
        lines = table.strip().splitlines()
        data_rows = [line for line in lines if line.startswith("s0")]
        assert len(data_rows) == 1
        assert lines[-1].split()[0] == "MEAN"

    def test_json_schema(self):
        doc = json.loads(report(_result(2))[1])
        assert set(doc) >= {"config", "seed", "folds", "summary"}
        assert set(doc["folds"][0]) == {"subject", "accuracy", "macro_f1", "confusion"}
        assert set(doc["summary"]) == {"accuracy", "macro_f1"}
        assert doc["seed"] == 7 and doc["config"]["lr"] == 0.001
        assert doc["folds"][1]["confusion"] == [[2, 0, 0], [0, 2, 0], [0, 0, 2]]

    def test_json_round_trip(self):
        text = report(_result(3))[1]
        doc = json.loads(text)
        assert json.dumps(doc, indent=2) + "\n" == text
