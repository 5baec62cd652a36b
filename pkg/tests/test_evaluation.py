"""Recall metric against brute-force counting, plus table round-trips."""

from __future__ import annotations

import pytest
import torch

from stlg.config import TrainConfig
from stlg.data import generate_synthetic, nearest_signature_predictions
from stlg.evaluation import (
    IOU_THRESHOLDS,
    RECALL_NS,
    MetricTable,
    evaluate_model,
    recall_at,
)
from stlg.models import build_model
from stlg.temporal import ScoredSegment, TemporalSegment, iou


def wrap(segs):
    return [[ScoredSegment(TemporalSegment(s, e), 1.0)] for s, e in segs]


def test_perfect_predictions_score_100():
    gts = [TemporalSegment(0.1, 0.4), TemporalSegment(0.5, 0.9)]
    preds = [[ScoredSegment(g, 1.0)] for g in gts]
    for n in RECALL_NS:
        for m in IOU_THRESHOLDS:
            assert recall_at(preds, gts, n, m) == 100.0


def test_disjoint_predictions_score_0():
    gts = [TemporalSegment(0.0, 0.2), TemporalSegment(0.0, 0.3)]
    preds = wrap([(0.5, 0.9), (0.6, 1.0)])
    for m in IOU_THRESHOLDS:
        assert recall_at(preds, gts, 1, m) == 0.0


def test_half_hit_hand_count():
    # best IoUs 0.6 and 0.2 at m=0.5 -> one of two queries counts
    gts = [TemporalSegment(0.0, 0.5), TemporalSegment(0.0, 0.5)]
    preds = wrap([(0.0, 0.3), (0.0, 0.1)])
    assert iou(preds[0][0].segment, gts[0]) == pytest.approx(0.6)
    assert iou(preds[1][0].segment, gts[1]) == pytest.approx(0.2)
    assert recall_at(preds, gts, 1, 0.5) == 50.0


def test_strict_inequality_at_threshold():
    gts = [TemporalSegment(0.0, 0.4)]
    preds = wrap([(0.0, 0.2)])  # IoU exactly 0.5
    assert iou(preds[0][0].segment, gts[0]) == pytest.approx(0.5)
    assert recall_at(preds, gts, 1, 0.5) == 0.0
    assert recall_at(preds, gts, 1, 0.49999) == 100.0


def test_rank_cutoff_and_repetition():
    gt = [TemporalSegment(0.2, 0.6)]
    good = ScoredSegment(TemporalSegment(0.2, 0.6), 0.3)
    bad = ScoredSegment(TemporalSegment(0.8, 0.9), 0.9)
    # the hit sits at rank 2: n=1 misses it, n=2 finds it
    assert recall_at([[bad, good]], gt, 1, 0.5) == 0.0
    assert recall_at([[bad, good]], gt, 2, 0.5) == 100.0
    # a single repeated prediction makes every n equivalent
    assert recall_at([[good] * 5], gt, 5, 0.5) == recall_at([[good]], gt, 1, 0.5)


def test_recall_validation_errors():
    gt = [TemporalSegment(0.2, 0.6)]
    preds = wrap([(0.2, 0.6)])
    with pytest.raises(ValueError):
        recall_at([[]], gt, 1, 0.5)
    with pytest.raises(ValueError):
        recall_at(preds, gt, 0, 0.5)
    with pytest.raises(ValueError):
        recall_at(preds, gt, 1, 0.0)
    with pytest.raises(ValueError):
        recall_at(preds, [], 1, 0.5)
    with pytest.raises(ValueError):
        recall_at(preds, gt * 2, 1, 0.5)


def brute_force_recall(preds, gts, n, m):
    count = 0
    for plist, gt in zip(preds, gts):
        best = max(iou(p.segment, gt) for p in plist[:n])
        count += 1 if best > m else 0
    return 100.0 * count / len(gts)


def test_matches_bruteforce_counter(rng):
    for _ in range(25):
        q = int(rng.integers(1, 12))
        gts, preds = [], []
        for _ in range(q):
            s, e = sorted(rng.uniform(0, 1, size=2))
            gts.append(TemporalSegment(float(s), float(e)))
            plist = []
            for _ in range(int(rng.integers(1, 6))):
                ps, pe = sorted(rng.uniform(0, 1, size=2))
                plist.append(ScoredSegment(TemporalSegment(float(ps), float(pe)), float(rng.uniform())))
            preds.append(plist)
        for n in (1, 2, 5):
            for m in IOU_THRESHOLDS:
                assert recall_at(preds, gts, n, m) == brute_force_recall(preds, gts, n, m)


def test_monotone_in_n_and_m(rng):
    q = 40
    gts, preds = [], []
    for _ in range(q):
        s, e = sorted(rng.uniform(0, 1, size=2))
        gts.append(TemporalSegment(float(s), float(e)))
        plist = [
            ScoredSegment(TemporalSegment(*sorted(map(float, rng.uniform(0, 1, size=2)))), 1.0)
            for _ in range(5)
        ]
        preds.append(plist)
    for n in (1, 3, 5):
        vals = [recall_at(preds, gts, n, m) for m in IOU_THRESHOLDS]
        assert vals == sorted(vals, reverse=True)
    for m in IOU_THRESHOLDS:
        by_n = [recall_at(preds, gts, n, m) for n in (1, 3, 5)]
        assert by_n == sorted(by_n)


# ---------------------------------------------------------------------------
# metric table


def test_metric_table_round_trip(tmp_path):
    values = {(n, m): float(10 * n + m) for n in RECALL_NS for m in IOU_THRESHOLDS}
    table = MetricTable(values)
    path = tmp_path / "metrics.csv"
    table.to_csv(path)
    again = MetricTable.from_csv(path)
    assert again.values == pytest.approx(values)
    text = table.as_text()
    assert "R@1" in text and "R@5" in text and "IoU=0.7" in text


def test_metric_table_rejects_bad_header(tmp_path):
    path = tmp_path / "junk.csv"
    path.write_text("foo,bar\n1,2\n", encoding="utf-8")
    with pytest.raises(ValueError):
        MetricTable.from_csv(path)


# ---------------------------------------------------------------------------
# model evaluation


def tiny_model(model_type):
    torch.manual_seed(0)
    cfg = TrainConfig(
        model_type=model_type,
        hidden_dim=16,
        encoder_arch="conv",
        sentence_arch="conv",
        video_dim=8,
        word_dim=6,
        anchor_widths=(0.25, 0.5),
    )
    return build_model(cfg)


def tiny_data(n=12):
    return generate_synthetic(
        num_samples=n, num_steps=16, video_dim=8, word_dim=6, num_concepts=3, seed=3
    )


def test_evaluate_model_grid_and_determinism():
    data = tiny_data()
    model = tiny_model("regression")
    a = evaluate_model(model, data)
    b = evaluate_model(model, data)
    assert set(a.values) == {(n, m) for n in RECALL_NS for m in IOU_THRESHOLDS}
    assert a.values == b.values
    # the regression model has one candidate, so R@5 equals R@1
    for m in IOU_THRESHOLDS:
        assert a.get(5, m) == a.get(1, m)


def test_evaluate_proposal_rank_monotone():
    data = tiny_data()
    model = tiny_model("proposal")
    table = evaluate_model(model, data)
    for m in IOU_THRESHOLDS:
        assert table.get(5, m) >= table.get(1, m)


def test_evaluate_requires_labels():
    data = tiny_data()
    stripped = [
        type(s)(
            sample_id=s.sample_id,
            video=s.video,
            video_mask=s.video_mask,
            sentence=s.sentence,
            sentence_mask=s.sentence_mask,
            label=None,
        )
        for s in data.samples
    ]
    with pytest.raises(ValueError):
        evaluate_model(tiny_model("regression"), stripped)


def test_oracle_predictor_acceptance_on_clean_data():
    # with zero noise the analytic localizer is exact
    data = generate_synthetic(
        num_samples=40, num_steps=64, video_dim=16, word_dim=8, num_concepts=4,
        noise_sigma=0.0, seed=11,
    )
    preds = nearest_signature_predictions(data)
    gts = [s.label for s in data.samples]
    assert recall_at(preds, gts, 1, 0.5) == 100.0
