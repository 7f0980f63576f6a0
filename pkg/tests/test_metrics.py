import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from galenet.errors import EmptyInputError, NoComputableClassError
from galenet.metrics import (
    EvalReport,
    average_precision,
    balanced_accuracy,
    binary_roc_auc,
    confusion_matrix,
    evaluate,
    pr_auc_macro,
    roc_auc_macro,
    roc_curve,
    summarize,
)


def brute_auc(pos, score):
    """Concordant-pair count with half credit for ties."""
    p, n = score[pos], score[~pos]
    total = 0.0
    for a in p:
        for b in n:
            total += 1.0 if a > b else 0.5 if a == b else 0.0
    return total / (len(p) * len(n))


def brute_ap(pos, score):
    """Precision at each positive's rank, all tied items admitted together."""
    order = np.argsort(-score, kind="stable")
    s, y = score[order], pos[order]
    ap, tp, i, n_pos = 0.0, 0, 0, pos.sum()
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        new_tp = y[i:j].sum()
        tp += new_tp
        ap += (tp / j) * (new_tp / n_pos)
        i = j
    return ap


def random_problem(rng, n, ties=False):
    y = rng.integers(0, 4, n)
    s = rng.random((n, 4))
    if ties:
        s = np.round(s * 5) / 5
    return y, s


def test_balanced_accuracy_examples():
    assert balanced_accuracy([0, 1, 2, 3], [0, 1, 2, 3]) == 1.0
    assert balanced_accuracy([0, 0, 1, 1], [0, 0, 1, 0]) == 0.75
    assert balanced_accuracy([0, 1, 2, 3] * 5, [0] * 20) == 0.25


def test_balanced_accuracy_errors():
    with pytest.raises(EmptyInputError):
        balanced_accuracy([], [])
    with pytest.raises(ValueError):
        balanced_accuracy([0, 1], [0])


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60),
       st.permutations(range(4)))
def test_balanced_accuracy_relabel_invariance(pairs, perm):
    y, p = map(np.array, zip(*pairs))
    perm = np.array(perm)
    assert balanced_accuracy(perm[y], perm[p]) == pytest.approx(balanced_accuracy(y, p), abs=1e-12)


def test_confusion_rows_are_support(rng):
    y, s = random_problem(rng, 200)
    cm = confusion_matrix(y, s.argmax(axis=1))
    assert cm.sum(axis=1).tolist() == np.bincount(y, minlength=4).tolist()


def test_auc_examples():
    pos = np.array([True, False, True, False])
    assert binary_roc_auc(pos, np.array([0.9, 0.8, 0.7, 0.6])) == 0.75
    assert binary_roc_auc(pos, np.array([0.9, 0.1, 0.7, 0.2])) == 1.0
    assert binary_roc_auc(pos, np.full(4, 0.3)) == 0.5


def test_macro_auc_perfect_and_constant():
    y = np.array([0, 1, 2, 3, 0, 1])
    assert roc_auc_macro(y, np.eye(4)[y]) == 1.0
    assert roc_auc_macro(y, np.full((6, 4), 0.25)) == 0.5


def test_roc_auc_matches_brute_force(rng):
    for n in list(range(4, 60)) + [100, 250, 500]:
        for ties in (False, True):
            y, s = random_problem(rng, n, ties)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                present = [c for c in range(4) if 0 < (y == c).sum() < n]
                if not present:
                    continue
                got = roc_auc_macro(y, s)
            expected = np.mean([brute_auc(y == c, s[:, c]) for c in present])
            assert abs(got - expected) <= 1e-12


def test_average_precision_examples():
    assert average_precision(np.array([True, False, True, False]), np.array([0.9, 0.8, 0.7, 0.6])) == \
        pytest.approx((1 + 2 / 3) / 2, abs=1e-12)
    assert average_precision(np.array([False] * 4 + [True]), np.array([5.0, 4, 3, 2, 1])) == pytest.approx(0.2)
    y = np.array([0, 1, 2, 3])
    assert pr_auc_macro(y, np.eye(4)[y]) == 1.0


def test_average_precision_matches_oracle(rng):
    for n in range(3, 200, 7):
        for ties in (False, True):
            pos = rng.random(n) < 0.3
            if not pos.any():
                continue
            s = rng.random(n)
            if ties:
                s = np.round(s * 4) / 4
            assert average_precision(pos, s) == pytest.approx(brute_ap(pos, s), abs=1e-12)


def test_excluded_classes_warn():
    y = np.array([0, 0, 1, 1])
    s = np.random.default_rng(0).random((4, 4))
    with pytest.warns(UserWarning):
        auc = roc_auc_macro(y, s)
    assert auc == pytest.approx(np.mean([brute_auc(y == c, s[:, c]) for c in (0, 1)]))
    with pytest.warns(UserWarning):
        rep = evaluate(y, s)
    assert rep.excluded_classes == [2, 3]
    assert rep.per_class_roc[2] is None


def test_no_computable_class():
    with pytest.raises(NoComputableClassError):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            roc_auc_macro(np.zeros(5, dtype=int), np.random.default_rng(0).random((5, 4)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_monotone_transform_and_duplication_invariance(seed):
    rng = np.random.default_rng(seed)
    y = np.r_[np.arange(4), rng.integers(0, 4, 36)]
    s = rng.random((40, 4))
    base = evaluate(y, s)
    warped = evaluate(y, np.exp(3 * s) - 7)
    doubled = evaluate(np.r_[y, y], np.r_[s, s])
    for r in (warped, doubled):
        assert r.balanced_accuracy == pytest.approx(base.balanced_accuracy, abs=1e-12)
        assert r.macro_roc_auc == pytest.approx(base.macro_roc_auc, abs=1e-12)
        assert r.macro_pr_auc == pytest.approx(base.macro_pr_auc, abs=1e-12)


def test_roc_curve_monotone(rng):
    pos = rng.random(100) < 0.4
    score = np.round(rng.random(100), 1)
    fpr, tpr = roc_curve(pos, score)
    assert fpr[0] == 0 and tpr[0] == 0 and fpr[-1] == 1 and tpr[-1] == 1
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
    # trapezoids over the tie-grouped points give the half-credit AUC
    area = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    assert area == pytest.approx(binary_roc_auc(pos, score), abs=1e-12)


def test_report_json_round_trip(rng):
    y, s = random_problem(rng, 80)
    rep = evaluate(y, s)
    keys = list(json.loads(rep.to_json()))
    assert keys[:4] == ["balanced_accuracy", "macro_pr_auc", "macro_roc_auc", "confusion"]
    back = EvalReport.from_json(rep.to_json())
    assert back == rep
    with pytest.raises(ValueError):
        EvalReport.from_dict({**rep.to_dict(), "macro_roc_auc": 1.5})
    with pytest.raises(ValueError):
        EvalReport.from_dict({"balanced_accuracy": 0.5})
    csv_text = rep.roc_csv()
    assert csv_text.splitlines()[0] == "class,fpr,tpr"


def test_summarize():
    rep = EvalReport(0.5, 0.6, 0.7, np.eye(4, dtype=int).tolist())
    one = summarize([rep])
    assert one["balanced_accuracy"] == {"mean": 0.5, "std": 0.0}
    two = summarize([rep, EvalReport(0.7, 0.6, 0.7, rep.confusion)])
    assert two["balanced_accuracy"]["mean"] == pytest.approx(0.6)
    assert two["balanced_accuracy"]["std"] == pytest.approx(0.1)
    assert two["macro_pr_auc"]["std"] == 0.0
    with pytest.raises(EmptyInputError):
        summarize([])
