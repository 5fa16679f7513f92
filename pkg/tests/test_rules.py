from __future__ import division

import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_almost_equal as aae

from lta.core import (DataSet, DataError, DataWarning, NumericalError,
                      forward_sample)
from lta.joint import ClassSummary, merge_summary
from lta.rules import (TARGET, COMPLEMENT, GIVEN, SCORE, CONTRIBUTION,
                       ClassificationRule, derive_rule, apply_rule,
                       apply_rule_dataset, model_classify,
                       model_classify_dataset, rule_accuracy,
                       simplify_sweep, integerize, round_half_away)
from tests.helpers import (PHLEGM_SYMPTOMS, SYNDROME_STRONG, phlegm_model,
                           class_model, syndrome_model, all_records)


def phlegm_summary(smoothing=1e-6):
    return merge_summary(phlegm_model(), 'Z', [1, 2], smoothing=smoothing)


# published Phlegm-Dampness rule, threshold 4.2
PUBLISHED_SCORES = [
    ('greasy tongue fur', 7.1), ('slippery pulse', 2.1),
    ('sticky feel in mouth', 2.8), ('thick tongue fur', 1.5),
    ('dizzy headache', 1.8), ('tooth-marked tongue', 1.0),
    ('fat tongue', 1.0), ('urinary incontinence', 0.6),
    ('dizziness', 0.4), ('thirst without desire to drink', 0.6),
    ('heavy head', 0.4), ('expectoration', 0.3),
    ('nausea or vomiting', 0.4), ('distending headache', 0.2),
    ('insomnia', 0.02), ('dreamfulness', 0.02),
]


def phlegm_rule():
    names, scores = zip(*PUBLISHED_SCORES)
    return ClassificationRule(pd.Series(scores, index=names), 4.2)


def record(*present):
    return dict((x, int(x in present)) for x, _ in PUBLISHED_SCORES)


def test_scores_phlegm():
    rule = derive_rule(phlegm_summary(smoothing=0.0))
    scores = rule.scores

    assert abs(scores['greasy tongue fur'] - 7.1) <= 0.25
    assert abs(scores['slippery pulse'] - 2.1) <= 0.25
    assert abs(scores['sticky feel in mouth'] - 2.8) <= 0.25
    aae(scores['greasy tongue fur'], 6.99, 2)
    assert rule.base == 2


def test_score_from_odds():
    s = ClassSummary.from_probabilities(0.58, {'greasy': 0.8},
                                        {'greasy': 0.03 / 1.03})
    rule = derive_rule(s)

    aae(rule.scores['greasy'], 2 - math.log(0.03, 2), 12)
    assert abs(rule.scores['greasy'] - 7.1) <= 0.1


def test_score_sign_follows_probabilities():
    s = phlegm_summary()
    rule = derive_rule(s)

    for x in rule.symptoms:
        p = s.table.loc[x, 'p_target']
        q = s.table.loc[x, 'p_complement']
        assert np.sign(rule.scores[x]) == np.sign(p - q)


def test_zero_score():
    s = ClassSummary.from_probabilities(0.5, {'a': 0.4, 'b': 0.9},
                                        {'a': 0.4, 'b': 0.2})
    rule = derive_rule(s, ordering=GIVEN)

    assert rule.scores['a'] == 0.0
    aae(rule.threshold, -math.log((0.1 / 0.8), 2), 12)


def test_constant_rule():
    s = ClassSummary.from_probabilities(0.3, {'a': 0.4, 'b': 0.7},
                                        {'a': 0.4, 'b': 0.7})
    rule = derive_rule(s)

    aae(rule.scores.values, [0.0, 0.0], 12)
    aae(rule.threshold, math.log(0.7 / 0.3, 2), 12)
    for record in ({}, {'a': 1}, {'a': 1, 'b': 1}):
        assert apply_rule(rule, dict({'a': 0, 'b': 0}, **record))[0] == \
            COMPLEMENT

    s = ClassSummary(0.7, s.table)
    rule = derive_rule(s)
    assert apply_rule(rule, {'a': 1, 'b': 0})[0] == TARGET


def test_threshold_of_absent_record():
    s = phlegm_summary()
    rule = derive_rule(s)
    p = s.table['p_target'].values
    q = s.table['p_complement'].values
    expected = (math.log(s.prior / (1 - s.prior), 2) +
                np.sum(np.log2((1 - p) / (1 - q))))

    aae(-rule.threshold, expected, 12)
    decision, total = apply_rule(rule, dict((x, 0) for x in rule.symptoms))
    assert total == 0.0
    assert decision == (TARGET if expected > 0 else COMPLEMENT)


def test_threshold_removal_law():
    s = phlegm_summary()
    rule = derive_rule(s)

    for k in range(1, len(rule) + 1):
        x = rule.symptoms[k - 1]
        p = s.table.loc[x, 'p_target']
        q = s.table.loc[x, 'p_complement']
        step = rule.prefix(k).threshold - rule.prefix(k - 1).threshold
        aae(step, -math.log((1 - p) / (1 - q), 2), 12)
    aae(rule.prefix(0).threshold, math.log(0.42 / 0.58, 2), 9)
    assert rule.prefix(len(rule)) == rule
    assert rule.prefix(2).symptoms == rule.symptoms[:2]


def test_prefix_errors():
    with pytest.raises(ValueError):
        phlegm_rule().prefix(1)

    rule = derive_rule(phlegm_summary())
    with pytest.raises(ValueError):
        rule.prefix(8)
    with pytest.raises(ValueError):
        rule.prefix(-1)


def test_orderings():
    s = phlegm_summary()

    assert derive_rule(s).symptoms == [
        'greasy tongue fur', 'slippery pulse', 'sticky feel in mouth',
        'dizziness', 'urinary incontinence', 'expectoration',
        'dizzy headache']
    assert derive_rule(s, GIVEN).symptoms == list(PHLEGM_SYMPTOMS)
    scores = derive_rule(s, SCORE).scores.values
    assert list(scores) == sorted(scores, reverse=True)

    # the ordering does not change the threshold
    aae(derive_rule(s, GIVEN).threshold, derive_rule(s).threshold, 12)

    with pytest.raises(ValueError):
        derive_rule(s, 'alphabetic')


def test_rule_provenance():
    rule = derive_rule(phlegm_summary())

    assert rule.provenance == {'latent': 'Z', 'target_states': [1, 2],
                               'target_label': 'Z=s12'}
    assert rule.ordering == CONTRIBUTION
    assert rule.smoothing == 1e-6


def test_infinite_score():
    s = merge_summary(phlegm_model(), 'Z', [1], smoothing=0.0)

    with pytest.raises(NumericalError):
        derive_rule(s)

    s = merge_summary(phlegm_model(), 'Z', [1], smoothing=1e-6)
    assert np.all(np.isfinite(derive_rule(s).scores.values))


def test_to_frame():
    rule = derive_rule(phlegm_summary())
    frame = rule.to_frame()

    assert list(frame.columns) == ['score', 'threshold']
    assert frame.index.name == 'symptom'
    aae(frame['threshold'].values[-1], rule.threshold, 12)
    assert list(phlegm_rule().to_frame().columns) == ['score']


def test_rule_equality():
    s = phlegm_summary()

    assert derive_rule(s) == derive_rule(s)
    assert derive_rule(s) != derive_rule(s, GIVEN)
    with pytest.raises(ValueError):
        ClassificationRule(pd.Series([1.0, 2.0], index=['a', 'a']), 0.0)


def test_apply_phlegm_rule():
    rule = phlegm_rule()

    decision, total = apply_rule(rule, record('greasy tongue fur',
                                              'slippery pulse'))
    assert decision == TARGET
    aae(total, 9.2, 12)
    decision, total = apply_rule(rule, record('urinary incontinence'))
    assert decision == COMPLEMENT
    aae(total, 0.6, 12)
    assert apply_rule(rule, record()) == (COMPLEMENT, 0.0)
    assert apply_rule(rule, record('greasy tongue fur'))[0] == TARGET
    assert apply_rule(rule, record('slippery pulse',
                                   'sticky feel in mouth'))[0] == TARGET
    assert apply_rule(rule, record('slippery pulse', 'thick tongue fur'))[0] \
        == COMPLEMENT
    missing = pd.Series(record('slippery pulse', 'sticky feel in mouth'),
                        dtype=object)
    missing['sticky feel in mouth'] = None
    assert apply_rule(rule, missing)[0] == COMPLEMENT


def test_apply_rule_threshold_is_strict():
    rule = ClassificationRule(pd.Series([2.0, 1.0], index=['a', 'b']), 2.0)

    assert apply_rule(rule, {'a': 1, 'b': 0}) == (COMPLEMENT, 2.0)
    assert apply_rule(rule, {'a': 1, 'b': 1}) == (TARGET, 3.0)


def test_apply_rule_missing_symptom():
    rule = phlegm_rule()

    with pytest.warns(DataWarning):
        decision, total = apply_rule(rule, {'greasy tongue fur': 1})
    assert decision == TARGET
    assert total == 7.1


def test_apply_rule_dataset():
    rule = phlegm_rule()
    rng = np.random.default_rng(6)
    data = DataSet(rule.symptoms, rng.integers(0, 2, size=(200, len(rule))))
    decisions, totals = apply_rule_dataset(rule, data)

    for i in range(len(data)):
        d, t = apply_rule(rule, dict(zip(data.names, data.values[i])))
        assert decisions[i] == (d == TARGET)
        aae(totals[i], t, 12)


def test_rule_is_exact_for_class_models():
    rng = np.random.default_rng(0)
    for ordering in (CONTRIBUTION, SCORE, GIVEN):
        for _ in range(200 // 3 + 1):
            k = int(rng.integers(2, 7))
            names = ['s%d' % j for j in range(k)]
            prior = rng.uniform(0.1, 0.9)
            m = class_model('Z', [1 - prior, prior],
                            dict((x, rng.uniform(0.05, 0.95, size=2))
                                 for x in names))
            rule = derive_rule(merge_summary(m, 'Z', [1], smoothing=0.0),
                               ordering)
            data = all_records(names)
            decisions, _ = apply_rule_dataset(rule, data)
            reference = model_classify_dataset(m, 'Z', [1], data)

            assert np.array_equal(decisions, reference)
            assert rule_accuracy(rule, m, 'Z', [1], data) == 1.0


def test_model_classify():
    m = phlegm_model()

    assert model_classify(m, 'Z', [1, 2], {}) == TARGET
    assert model_classify(m, 'Z', [0], {}) == COMPLEMENT
    assert model_classify(m, 'Z', [0], {'greasy tongue fur': 0,
                                         'dizziness': 0}) == TARGET

    with pytest.raises(ValueError):
        model_classify(m, 'Z', [0, 1, 2], {})
    with pytest.raises(ValueError):
        model_classify(m, 'dizziness', [1], {})


def test_model_classify_dataset():
    m = phlegm_model()
    data = forward_sample(m, 40, seed=1)
    decisions = model_classify_dataset(m, 'Z', [1, 2], data)

    for i in range(len(data)):
        record = dict(zip(data.names, data.values[i]))
        assert decisions[i] == (model_classify(m, 'Z', [1, 2], record) ==
                                TARGET)


def test_rule_accuracy_empty():
    m = phlegm_model()
    rule = derive_rule(phlegm_summary())

    with pytest.raises(DataError):
        rule_accuracy(rule, m, 'Z', [1, 2], forward_sample(m, 0, seed=0))


def test_simplify_sweep():
    m = phlegm_model()
    s = phlegm_summary()
    data = forward_sample(m, 2000, seed=2)
    sweep = simplify_sweep(s, m, 'Z', [1, 2], data)
    rows = sweep.rows

    assert list(rows.index) == sweep.rule.symptoms
    assert list(rows['kept']) == list(range(1, 8))
    assert list(rows['removed']) == sweep.rule.symptoms[1:] + ['']
    assert sweep.baseline == rule_accuracy(sweep.rule, m, 'Z', [1, 2], data)
    for k in range(1, 8):
        aae(rows['threshold'].iloc[k - 1],
            sweep.rule.prefix(k).threshold, 12)
        assert rows['accuracy'].iloc[k - 1] == rule_accuracy(
            sweep.rule.prefix(k), m, 'Z', [1, 2], data)
    assert list(sweep.to_frame().columns) == ['score', 'threshold',
                                              'accuracy']


def test_sweep_zero_score_removal():
    m = class_model('Z', [0.6, 0.4], {'a': [0.2, 0.8], 'b': [0.3, 0.6],
                                      'z': [0.4, 0.4]})
    s = merge_summary(m, 'Z', [1], smoothing=0.0)
    sweep = simplify_sweep(s, m, 'Z', [1], all_records(['a', 'b', 'z']),
                           ordering=GIVEN)

    assert sweep.rule.symptoms[-1] == 'z'
    aae(sweep.rule.scores['z'], 0.0, 12)
    assert sweep.rows['accuracy'].iloc[-1] == sweep.rows['accuracy'].iloc[-2]
    assert sweep.baseline == 1.0


def test_round_half_away():
    aae(round_half_away([0.5, -0.5, 1.5, -2.5, 2.4, -2.6, 0.0]),
        [1, -1, 2, -3, 2, -3, 0])


def test_integerize_phlegm_rule():
    rule, report = integerize(phlegm_rule(), 10)

    assert list(rule.scores.values) == [71, 21, 28, 15, 18, 10, 10, 6, 4,
                                        6, 4, 3, 4, 2, 0, 0]
    assert rule.threshold == 42
    assert rule.scale == 10
    assert rule.symptoms == phlegm_rule().symptoms
    assert report == {'scale': 10}


def test_integerize_integer_rule():
    base = ClassificationRule(pd.Series([3.0, -2.0], index=['a', 'b']), 1.0)
    rule, _ = integerize(base, 1)

    assert list(rule.scores.values) == [3.0, -2.0]
    assert rule.threshold == 1.0
    assert rule.symptoms == base.symptoms


def test_integerize_scale_must_be_positive():
    with pytest.raises(ValueError):
        integerize(phlegm_rule(), 0)
    with pytest.raises(ValueError):
        integerize(phlegm_rule(), -10)


def test_integerize_fine_scale_agrees():
    m = phlegm_model()
    real = derive_rule(phlegm_summary())
    data = all_records(list(PHLEGM_SYMPTOMS))
    rule, report = integerize(real, 10 ** 6, data, m, 'Z', [1, 2])

    assert report['scale'] == 10 ** 6
    assert report['agreement'] == 1.0
    assert report['accuracy'] == report['real_accuracy']
    assert np.all(rule.scores.values == np.round(rule.scores.values))


def test_syndrome_rule_simplifies_and_integerizes():
    m = syndrome_model()
    data = forward_sample(m, 5000, seed=9)
    sweep = simplify_sweep(merge_summary(m, 'Z', [1, 2]), m, 'Z', [1, 2],
                           data)
    rows = sweep.rows

    assert set(sweep.rule.symptoms[:8]) == set(SYNDROME_STRONG)
    prefix = rows['accuracy'][rows['kept'] == 8].iloc[0]
    assert abs(prefix - sweep.baseline) <= 0.02

    real = sweep.rule
    rule, report = integerize(real, 100, data, m, 'Z', [1, 2])
    before, totals = apply_rule_dataset(real, data)
    after, _ = apply_rule_dataset(rule, data)
    # rounding moves a total by at most half a unit per score and threshold
    safe = np.abs(totals - real.threshold) > (len(real) + 1) / 200.0
    assert np.array_equal(before[safe], after[safe])
    assert report['agreement'] >= safe.mean() - 1e-12
    assert report['agreement'] >= 0.99
