"""Smoke tests for the Python bindings."""

import json
import math
import os

import pytest

import kgdialog

TOY_DIR = os.environ.get("KGDIALOG_TOY_DIR", "data/toy")


def toy(name):
    return os.path.join(TOY_DIR, name)


def test_tokenize():
    assert kgdialog.tokenize("Can I bring my dog?") == [
        "can", "i", "bring", "my", "dog",
    ]
    assert kgdialog.tokenize("") == []


def test_ngrams():
    assert kgdialog.ngrams(["a", "b", "c"], 2) == ["a b", "b c"]
    assert kgdialog.ngrams(["a"], 3) == []


def test_edit_distance():
    assert kgdialog.edit_distance("hotel", "hotel") == 0
    assert kgdialog.edit_distance("center", "centre") == 2
    assert kgdialog.edit_distance("gonvile", "gonville") == 1


def test_cosine():
    assert kgdialog.cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(
        1.0 / math.sqrt(2.0)
    )
    assert kgdialog.cosine([0.0, 0.0], [1.0, 0.0]) == 0.0


def test_focal_loss_identities():
    # gamma 0 reduces to cross-entropy; gamma 2 never exceeds it.
    ce = kgdialog.binary_cross_entropy(0.7, True)
    assert kgdialog.binary_focal_loss(0.7, True, 0.0) == pytest.approx(ce)
    assert kgdialog.binary_focal_loss(0.7, True, 2.0) <= ce
    assert kgdialog.focal_loss([0.5, 0.5], [1.0, 0.0], 0.0) == pytest.approx(
        math.log(2.0)
    )


def test_metrics():
    p, r, f1 = kgdialog.prf1([True, False], [True, False])
    assert (p, r, f1) == (1.0, 1.0, 1.0)
    assert kgdialog.bleu_n(["the", "cat"], ["the", "cat", "sat"], 1) == (
        pytest.approx(math.exp(-0.5))
    )
    assert kgdialog.rouge_l(["a", "b", "c"], ["a", "c"]) == pytest.approx(0.8)


def test_tune_threshold():
    assert kgdialog.tune_threshold([0.9, 0.4], [True, False]) == pytest.approx(
        0.41
    )


def test_warmup_lr():
    assert kgdialog.warmup_lr(1e-4, 250, 500) == pytest.approx(5e-5)
    assert kgdialog.warmup_lr(1e-4, 5000, 500) == pytest.approx(1e-4)


def test_validate_and_filter_stats():
    findings = kgdialog.validate_split(
        toy("logs.json"), toy("labels.json"), toy("knowledge.json")
    )
    assert findings == []

    stats = kgdialog.filter_stats(
        toy("logs.json"),
        toy("labels.json"),
        toy("knowledge.json"),
        t1=4,
        t3=2,
        fuzzy=True,
    )
    assert stats["total_entities"] == 8
    assert stats["recall"] == pytest.approx(1.0)

    exact = kgdialog.filter_stats(
        toy("logs.json"),
        toy("labels.json"),
        toy("knowledge.json"),
        t1=4,
        t3=2,
        fuzzy=False,
    )
    assert exact["recall"] == pytest.approx(8.0 / 9.0)


def test_evaluate():
    report = json.loads(
        kgdialog.evaluate(
            toy("predictions.json"), toy("labels.json"), toy("knowledge.json")
        )
    )
    assert report["detection"]["f1"] == pytest.approx(8.0 / 9.0)
    assert report["selection"]["r_at_1"] == pytest.approx(6.0 / 9.0)
    assert report["generation"]["bleu1"] == pytest.approx(8.0 / 9.0)


def test_gradcheck():
    errors = kgdialog.gradcheck(seed=1, points=3)
    assert set(errors) == {
        "encoder",
        "classifier",
        "focal_loss",
        "triplet_cosine_loss",
        "p_gen_head",
        "mixture_nll",
    }
    for op, err in errors.items():
        assert err < 1e-4, op
