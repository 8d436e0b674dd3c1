import random

import pytest

from ctafbench.metrics import (
    Condition,
    ConfusionMatrix,
    EvalRecord,
    accuracy,
    auroc,
    confusion,
    latency_summary,
    macro_f1,
    per_class_f1,
    percentile,
    pr_curve,
    read_records,
    summary_tables,
    write_records,
    write_report,
)

from oracles import pairwise_auroc, sweep_average_precision

COND = Condition(model="m", framing="binary", strategy="OS", protocol="cot")


def binary_records(tn, fp, fn, tp, scores=None, source="logprob"):
    """Fixture records realizing the given confusion counts."""
    rows = (
        [("nominal", "nominal")] * tn + [("nominal", "danger")] * fp
        + [("danger", "nominal")] * fn + [("danger", "danger")] * tp
    )
    records = []
    for i, (gold, pred) in enumerate(rows):
        if scores is not None:
            score = scores[i]
        else:
            score = 0.9 if pred == "danger" else 0.1
        records.append(EvalRecord(
            scenario_id=f"S{i + 1:03d}", condition=COND, gold=gold, pred=pred,
            confidence=0.9, score_danger=score, score_source=source,
            latency_s=1.0,
        ))
    return records


class TestConfusion:
    def test_all_correct_diagonal(self):
        cm = confusion(binary_records(31, 0, 0, 63))
        assert cm.counts["nominal"]["nominal"] == 31
        assert cm.counts["danger"]["danger"] == 63
        assert cm.total == 94

    def test_best_open_model_rates(self):
        cm = confusion(binary_records(29, 2, 1, 62))
        rates = cm.row_normalized()
        assert rates["nominal"]["nominal"] == pytest.approx(0.935, abs=5e-4)
        assert rates["nominal"]["danger"] == pytest.approx(0.065, abs=5e-4)
        assert rates["danger"]["nominal"] == pytest.approx(0.016, abs=5e-4)
        assert rates["danger"]["danger"] == pytest.approx(0.984, abs=5e-4)

    def test_overalerting_model_rates(self):
        cm = confusion(binary_records(21, 10, 0, 63))
        rates = cm.row_normalized()
        assert rates["danger"]["nominal"] == 0.0
        assert rates["nominal"]["danger"] == pytest.approx(0.323, abs=5e-4)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            confusion([])


class TestF1:
    def test_best_open_model_cells(self):
        cm = confusion(binary_records(29, 2, 1, 62))
        scores = per_class_f1(cm)
        assert scores["danger"] == pytest.approx(0.976, abs=1e-3)
        assert scores["nominal"] == pytest.approx(0.951, abs=1e-3)
        assert macro_f1(cm) == pytest.approx(0.964, abs=1e-3)
        assert accuracy(cm) == pytest.approx(0.968, abs=1e-3)

    def test_perfect(self):
        cm = confusion(binary_records(31, 0, 0, 63))
        assert per_class_f1(cm) == {"nominal": 1.0, "danger": 1.0}
        assert macro_f1(cm) == 1.0

    def test_three_class_hand_case(self):
        # gold (n, w, h) vs pred (n, h, h): hazard has TP=1, FP=1, FN=0,
        # so F1 = 2/(2+1+0) = 2/3 (cross-checked against sklearn).
        cond = Condition(model="m", framing="three_class", strategy="ZS",
                         protocol="direct")
        rows = [("nominal", "nominal"), ("warning", "hazard"), ("hazard", "hazard")]
        records = [
            EvalRecord(scenario_id=f"S{i}", condition=cond, gold=g, pred=p,
                       confidence=0.5, score_danger=0.5,
                       score_source="confidence_fallback", latency_s=0.1)
            for i, (g, p) in enumerate(rows)
        ]
        cm = confusion(records)
        scores = per_class_f1(cm)
        assert scores == {"nominal": 1.0, "warning": 0.0,
                          "hazard": pytest.approx(2 / 3)}
        assert macro_f1(cm) == pytest.approx(5 / 9)

    def test_zero_support_zero_predictions_scores_zero(self):
        cm = ConfusionMatrix(classes=("nominal", "warning", "hazard"))
        cm.counts["nominal"]["nominal"] = 5
        cm.counts["warning"]["warning"] = 5
        assert per_class_f1(cm)["hazard"] == 0.0

    def test_macro_equals_mean_of_per_class(self):
        cm = confusion(binary_records(17, 9, 4, 33))
        scores = per_class_f1(cm)
        assert macro_f1(cm) == sum(scores.values()) / len(scores)

    def test_accuracy_is_trace_over_total(self):
        cm = confusion(binary_records(17, 9, 4, 33))
        assert accuracy(cm) == (17 + 33) / 63


class TestAuroc:
    def test_perfect_separation(self):
        records = binary_records(2, 0, 0, 3, scores=[0.1, 0.2, 0.8, 0.9, 0.95])
        assert auroc(records) == 1.0

    def test_all_tied(self):
        records = binary_records(2, 0, 0, 3, scores=[0.5] * 5)
        assert auroc(records) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            auroc(binary_records(0, 0, 0, 5))

    def test_matches_pairwise_oracle(self):
        rng = random.Random(60)
        for _ in range(200):
            n = rng.randint(2, 25)
            labels = [rng.randint(0, 1) for _ in range(n)]
            if len(set(labels)) < 2:
                labels[0], labels[1] = 0, 1
            scores = [rng.choice([0.1, 0.25, 0.5, 0.75, 0.9, rng.random()])
                      for _ in range(n)]
            records = [
                EvalRecord(scenario_id=f"S{i}", condition=COND,
                           gold="danger" if y else "nominal",
                           pred="danger", confidence=s, score_danger=s,
                           score_source="logprob", latency_s=0.0)
                for i, (y, s) in enumerate(zip(labels, scores))
            ]
            assert auroc(records) == pairwise_auroc(labels, scores)

    def test_invariant_under_monotone_transform(self):
        rng = random.Random(61)
        labels = [rng.randint(0, 1) for _ in range(30)]
        labels[0], labels[1] = 0, 1
        scores = [rng.random() for _ in range(30)]

        def recs(ss):
            return [EvalRecord(scenario_id=f"S{i}", condition=COND,
                               gold="danger" if y else "nominal", pred="danger",
                               confidence=0.5, score_danger=s,
                               score_source="logprob", latency_s=0.0)
                    for i, (y, s) in enumerate(zip(labels, ss))]

        import math
        transformed = [1.0 / (1.0 + math.exp(-6 * (s - 0.5))) for s in scores]
        assert auroc(recs(scores)) == pytest.approx(auroc(recs(transformed)), abs=1e-12)


class TestPrCurve:
    def test_perfect_separation_ap(self):
        records = binary_records(2, 0, 0, 3, scores=[0.1, 0.2, 0.8, 0.9, 0.95])
        assert pr_curve(records).average_precision == 1.0

    def test_random_scores_ap_near_prevalence(self):
        rng = random.Random(1905)
        scores = [rng.random() for _ in range(94)]
        records = binary_records(31, 0, 0, 63, scores=scores)
        ap = pr_curve(records).average_precision
        assert ap == pytest.approx(63 / 94, abs=0.05)

    def test_matches_threshold_sweep(self):
        rng = random.Random(62)
        for _ in range(100):
            n = rng.randint(2, 25)
            labels = [rng.randint(0, 1) for _ in range(n)]
            if len(set(labels)) < 2:
                labels[0], labels[1] = 0, 1
            scores = [rng.choice([0.2, 0.4, 0.6, 0.8, rng.random()])
                      for _ in range(n)]
            records = [
                EvalRecord(scenario_id=f"S{i}", condition=COND,
                           gold="danger" if y else "nominal", pred="danger",
                           confidence=s, score_danger=s, score_source="logprob",
                           latency_s=0.0)
                for i, (y, s) in enumerate(zip(labels, scores))
            ]
            got = pr_curve(records).average_precision
            want = sweep_average_precision(labels, scores)
            assert got == pytest.approx(want, abs=1e-12)


class TestLatency:
    def test_mean(self):
        records = binary_records(1, 0, 0, 1)
        records[0] = EvalRecord(**{**records[0].__dict__, "latency_s": 2.0,
                                   "condition": COND})
        records[1] = EvalRecord(**{**records[1].__dict__, "latency_s": 4.0,
                                   "condition": COND})
        summary = latency_summary(records)
        assert summary[COND.key()]["mean"] == pytest.approx(3.0)

    def test_p50_of_three(self):
        assert percentile([1.0, 2.0, 3.0], 50) == 2.0

    def test_empty_absent(self):
        assert latency_summary([]) == {}


class TestReport:
    def test_tables_reproduce_fixture_cells(self):
        records = binary_records(29, 2, 1, 62)
        tables = summary_tables(records)
        metrics_csv = tables["binary_metrics"]
        row = next(ln for ln in metrics_csv.splitlines() if "macro_f1" in ln)
        assert ",0.964" in row
        perclass_csv = tables["binary_per_class_f1"]
        assert any("nominal" in ln and "0.951" in ln
                   for ln in perclass_csv.splitlines())
        confusion_csv = tables["binary_confusion_best"]
        assert any("OS+cot" in ln and ",29,2,1,62," in ln
                   for ln in confusion_csv.splitlines())

    def test_fallback_models_get_conf_marker(self):
        records = binary_records(29, 2, 1, 62, source="confidence_fallback")
        tables = summary_tables(records)
        assert "m (conf*)" in tables["binary_metrics"]

    def test_logprob_models_unmarked(self):
        tables = summary_tables(binary_records(29, 2, 1, 62))
        assert "conf*" not in tables["binary_metrics"]

    def test_report_files_written(self, tmp_path):
        written = write_report(binary_records(29, 2, 1, 62), tmp_path)
        names = {p.name for p in written}
        assert "binary_metrics.csv" in names
        assert "binary_per_class_f1.csv" in names
        assert "curves_best_run.csv" in names
        assert "pr_roc_binary.svg" in names

    def test_records_round_trip(self, tmp_path):
        records = binary_records(3, 1, 2, 4)
        path = tmp_path / "records.jsonl"
        write_records(records, path)
        assert read_records(path) == records
