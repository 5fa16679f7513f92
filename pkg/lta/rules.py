"""
Score based classification rules derived from class summaries.

A rule gives every symptom a score (the log odds ratio of its presence
between the target class and the complement) and a threshold. A record is
put in the target class when the scores of its present symptoms add up to
more than the threshold. Under conditional independence of the symptoms
given the class this is an exact rewrite of comparing the two posteriors.
"""
from __future__ import division
import logging
import math
import warnings

import numpy as np
import pandas as pd

from lta.core import DataError, DataWarning, NumericalError
from lta.inference import posterior, posterior_matrix


logger = logging.getLogger(__name__)

TARGET = 'target'
COMPLEMENT = 'complement'

CONTRIBUTION = 'contribution'
SCORE = 'score'
GIVEN = 'given'
ORDERINGS = (CONTRIBUTION, SCORE, GIVEN)

DEFAULT_SMOOTHING = 1e-6


def _log(x, base):
    if base == 2:
        return np.log2(x)
    return np.log(x) / math.log(base)


class ClassificationRule(object):

    """
    Per-symptom presence scores and a threshold.

    Args:
        * scores (Series): score per symptom, in rule order
        * threshold (float): decision threshold; target iff total > it
        * smoothing (float): smoothing constant the scores were built with
        * base (float): log base of scores and threshold
        * ordering (str): ordering key of the symptoms
        * provenance (dict): where the rule came from (Z, target states,
            label)
        * scale (float): scaling factor of an integerized rule
        * prior_term (float): log(P(complement) / P(target))
        * absent_terms (Series): log(P(X=0|target) / P(X=0|complement))
            per symptom; the threshold is prior_term minus their sum

    """

    def __init__(self, scores, threshold, smoothing=DEFAULT_SMOOTHING,
                 base=2, ordering=GIVEN, provenance=None, scale=None,
                 prior_term=None, absent_terms=None):
        self.scores = pd.Series(scores, dtype=float)
        self.scores.index = [str(x) for x in self.scores.index]
        if self.scores.index.has_duplicates:
            raise ValueError('rule lists a symptom twice')
        self.threshold = float(threshold)
        self.smoothing = float(smoothing)
        self.base = base
        self.ordering = ordering
        self.provenance = dict(provenance or {})
        self.scale = scale
        self.prior_term = prior_term
        self.absent_terms = absent_terms

    @property
    def symptoms(self):
        return list(self.scores.index)

    def __len__(self):
        return len(self.scores)

    def prefix(self, k):
        """
        Rule over the first k symptoms with the threshold recomputed over
        the kept symptoms.
        """
        if self.absent_terms is None or self.prior_term is None:
            raise ValueError('rule carries no threshold terms; derive it '
                             'from a class summary')
        if not 0 <= k <= len(self):
            raise ValueError('prefix length %d outside 0..%d'
                             % (k, len(self)))
        return ClassificationRule(
            self.scores.iloc[:k], _threshold(self.prior_term,
                                             self.absent_terms.iloc[:k]),
            self.smoothing, self.base, self.ordering, self.provenance,
            self.scale, self.prior_term, self.absent_terms.iloc[:k])

    def to_frame(self):
        """
        Scores with the threshold of every prefix of the rule.
        """
        frame = pd.DataFrame({'score': self.scores})
        if self.absent_terms is not None and self.prior_term is not None:
            frame['threshold'] = _prefix_thresholds(self.prior_term,
                                                    self.absent_terms)
        frame.index.name = 'symptom'
        return frame

    def __eq__(self, other):
        return (isinstance(other, ClassificationRule) and
                self.symptoms == other.symptoms and
                np.array_equal(self.scores.values, other.scores.values) and
                self.threshold == other.threshold and
                self.scale == other.scale)

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return '<ClassificationRule %d symptoms threshold=%.4f%s>' % (
            len(self), self.threshold,
            '' if self.scale is None else ' scale=%g' % self.scale)


def _prefix_thresholds(prior_term, absent_terms):
    return prior_term - np.cumsum(np.asarray(absent_terms, dtype=float))


def _threshold(prior_term, absent_terms):
    if len(absent_terms) == 0:
        return float(prior_term)
    return float(_prefix_thresholds(prior_term, absent_terms)[-1])


def _totals(present, scores):
    present = np.atleast_2d(present)
    if present.shape[1] == 0:
        return np.zeros(present.shape[0])
    return np.cumsum(present * np.asarray(scores)[None, :], axis=1)[:, -1]


def derive_rule(summary, ordering=CONTRIBUTION, base=2):
    """
    Builds the classification rule of a class summary.

    score(X) = log[(p / (1 - p)) / (q / (1 - q))] and
    threshold = log[P(complement) / P(target)] - sum log[(1 - p) / (1 - q)]
    with p = P(X=1 | target) and q = P(X=1 | complement).

    Symptoms are ordered by the ordering key: 'contribution' sorts by
    score * P(X=1) descending, then by mutual information with Z, then by
    name; 'score' by score; 'given' keeps the summary order.

    Raises:
        NumericalError if a score or the threshold is infinite (only
        possible without smoothing)

    """
    if ordering not in ORDERINGS:
        raise ValueError('unknown ordering %r, expected one of %s'
                         % (ordering, ', '.join(ORDERINGS)))
    prior = summary.prior
    if not 0 < prior < 1:
        raise NumericalError('degenerate class prior %s' % prior)
    table = summary.table
    p = table['p_target'].values
    q = table['p_complement'].values
    with np.errstate(divide='ignore', invalid='ignore'):
        scores = _log(p / (1 - p), base) - _log(q / (1 - q), base)
        absent = _log((1 - p) / (1 - q), base)
    bad = [x for x, s, a in zip(table.index, scores, absent)
           if not (np.isfinite(s) and np.isfinite(a))]
    if bad:
        raise NumericalError('infinite score for %s (smoothing %g)'
                             % (', '.join(bad), summary.smoothing))
    prior_term = float(_log((1 - prior) / prior, base))

    names = list(table.index)
    if ordering != GIVEN:
        if 'marginal' in table.columns:
            marg = table['marginal'].values
        else:
            marg = prior * p + (1 - prior) * q
        mi = table['mi'].values if 'mi' in table.columns \
            else np.zeros(len(names))
        if ordering == CONTRIBUTION:
            keys = [(-s * m, -i, x)
                    for s, m, i, x in zip(scores, marg, mi, names)]
        else:
            keys = [(-s, -i, x) for s, i, x in zip(scores, mi, names)]
        idx = sorted(range(len(names)), key=lambda j: keys[j])
    else:
        idx = list(range(len(names)))

    ordered = [names[j] for j in idx]
    scores = pd.Series(scores[idx], index=ordered)
    absent = pd.Series(absent[idx], index=ordered)
    provenance = {'latent': summary.latent,
                  'target_states': (list(summary.target_states)
                                    if summary.target_states is not None
                                    else None),
                  'target_label': summary.target_label}
    return ClassificationRule(scores, _threshold(prior_term, absent),
                              summary.smoothing, base, ordering, provenance,
                              None, prior_term, absent)


def _is_present(value):
    if value is None:
        return False
    try:
        return float(value) == 1.0
    except (TypeError, ValueError):
        return False


def _warn_absent(names):
    if names:
        msg = ('rule symptoms not in the data, counted as absent: %s'
               % ', '.join(names))
        logger.warning(msg)
        warnings.warn(msg, DataWarning)


def apply_rule(rule, record):
    """
    Classifies one record.

    Args:
        * rule (ClassificationRule): the rule
        * record (dict or Series): {symptom: value}; value 1 is present,
            anything else (0, missing) absent

    Returns:
        (TARGET or COMPLEMENT, total score)

    """
    _warn_absent([x for x in rule.symptoms if x not in record])
    present = np.array([_is_present(record.get(x)) for x in rule.symptoms],
                       dtype=float)
    total = float(_totals(present[None, :], rule.scores.values)[0])
    return (TARGET if total > rule.threshold else COMPLEMENT), total


def presence_matrix(rule, dataset):
    """
    0/1 matrix of present rule symptoms, one row per record.
    """
    _warn_absent([x for x in rule.symptoms if x not in dataset.names])
    res = np.zeros((len(dataset), len(rule)))
    for j, x in enumerate(rule.symptoms):
        if x in dataset.names:
            res[:, j] = dataset.column(x) == 1
    return res


def apply_rule_dataset(rule, dataset):
    """
    Classifies every record of a DataSet.

    Returns:
        (boolean array, True for the target class; array of totals)

    """
    totals = _totals(presence_matrix(rule, dataset), rule.scores.values)
    return totals > rule.threshold, totals


def _split_states(model, z, target_states):
    if z not in model or not model[z].is_latent:
        raise ValueError('%r is not a latent variable of the model' % z)
    target = sorted(set(int(s) for s in target_states))
    card = model.cardinality(z)
    if not target or target[0] < 0 or target[-1] >= card or \
            len(target) == card:
        raise ValueError('target states %s must be a nonempty proper '
                         'subset of 0..%d' % (target, card - 1))
    return target, [s for s in range(card) if s not in target]


def model_classify(model, z, target_states, record):
    """
    Model based classification: target iff the posterior mass of the
    target states exceeds that of the other states.
    """
    target, complement = _split_states(model, z, target_states)
    post = posterior(model, record, z)
    return TARGET if post[target].sum() > post[complement].sum() \
        else COMPLEMENT


def model_classify_dataset(model, z, target_states, dataset):
    """
    Model based decisions for every record (True for the target class).
    Columns that are not observed variables of the model are ignored.
    """
    target, complement = _split_states(model, z, target_states)
    names = [x for x in dataset.names
             if x in model and not model[x].is_latent]
    post = posterior_matrix(model, dataset.subset(names), z)
    return post[:, target].sum(axis=1) > post[:, complement].sum(axis=1)


def _agreement(a, b, weights):
    return math.fsum(weights[a == b]) / math.fsum(weights)


def rule_accuracy(rule, model, z, target_states, dataset):
    """
    Weighted fraction of records on which the rule agrees with model based
    classification.
    """
    if len(dataset) == 0:
        raise DataError('cannot measure accuracy on an empty dataset')
    decisions, _ = apply_rule_dataset(rule, dataset)
    reference = model_classify_dataset(model, z, target_states, dataset)
    return _agreement(decisions, reference, np.asarray(dataset.weights))


class SimplificationSweep(object):

    """
    Accuracy of every prefix of a rule.

    Attributes:
        * rule (ClassificationRule): the full rule
        * rows (DataFrame): one row per symptom in rule order; the row of
            the k-th symptom describes the rule keeping the first k
            symptoms: columns score, kept, removed (the next symptom,
            dropped to reach this prefix), threshold, accuracy
        * baseline (float): accuracy with every symptom kept

    """

    def __init__(self, rule, rows):
        self.rule = rule
        self.rows = rows
        self.baseline = float(rows['accuracy'].iloc[-1]) if len(rows) \
            else float('nan')

    def to_frame(self):
        return self.rows[['score', 'threshold', 'accuracy']]

    def __repr__(self):
        return '<SimplificationSweep %d rows baseline=%.4f>' % (
            len(self.rows), self.baseline)


def simplify_sweep(summary, model, z, target_states, dataset,
                   ordering=CONTRIBUTION, base=2):
    """
    Removes symptoms from the bottom of the rule one at a time and records
    the recomputed threshold and the accuracy of what is left.
    """
    if len(dataset) == 0:
        raise DataError('cannot measure accuracy on an empty dataset')
    rule = derive_rule(summary, ordering, base)
    reference = model_classify_dataset(model, z, target_states, dataset)
    weights = np.asarray(dataset.weights)
    present = presence_matrix(rule, dataset)
    cum = np.cumsum(present * rule.scores.values[None, :], axis=1)
    thresholds = _prefix_thresholds(rule.prior_term, rule.absent_terms)

    rows = []
    names = rule.symptoms
    for k in range(1, len(rule) + 1):
        decisions = cum[:, k - 1] > thresholds[k - 1]
        rows.append({'score': rule.scores.iloc[k - 1], 'kept': k,
                     'removed': names[k] if k < len(names) else '',
                     'threshold': thresholds[k - 1],
                     'accuracy': _agreement(decisions, reference, weights)})
    frame = pd.DataFrame(rows, index=names,
                         columns=['score', 'kept', 'removed', 'threshold',
                                  'accuracy'])
    frame.index.name = 'symptom'
    return SimplificationSweep(rule, frame)


def round_half_away(values):
    values = np.asarray(values, dtype=float)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def integerize(rule, scale, dataset=None, model=None, z=None,
               target_states=None):
    """
    Multiplies scores and threshold by scale and rounds them (half away
    from zero).

    Args:
        * rule (ClassificationRule): real valued rule
        * scale (float): scaling factor, > 0
        * dataset (DataSet): optional records for the agreement report
        * model, z, target_states: optional model for the accuracy report

    Returns:
        (integerized ClassificationRule, report dict with scale,
        agreement with the real valued rule and accuracies against the
        model when given)

    """
    if not scale > 0:
        raise ValueError('scale must be > 0, got %s' % scale)
    scores = pd.Series(round_half_away(rule.scores.values * scale),
                       index=rule.symptoms)
    threshold = float(round_half_away(rule.threshold * scale))
    res = ClassificationRule(scores, threshold, rule.smoothing, rule.base,
                             rule.ordering, rule.provenance, scale)

    report = {'scale': scale}
    if dataset is not None and len(dataset):
        weights = np.asarray(dataset.weights)
        real, _ = apply_rule_dataset(rule, dataset)
        whole, _ = apply_rule_dataset(res, dataset)
        report['agreement'] = _agreement(real, whole, weights)
        if model is not None:
            reference = model_classify_dataset(model, z, target_states,
                                               dataset)
            report['accuracy'] = _agreement(whole, reference, weights)
            report['real_accuracy'] = _agreement(real, reference, weights)
    return res, report
