"""
Joint clustering: a top latent variable Z over declared feature groups,
selection of its cardinality, merged class summaries and cumulative
information coverage.
"""
from __future__ import division
import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
from scipy.special import rel_entr

from lta.core import (LatentTreeModel, Latent, Observed, DataError,
                      MAX_TABLE_SIZE, check_model, forward_sample, marginal,
                      state_labels)
from lta.em import EmConfig, LcaResult, fit_em, select_by_bic
from lta.inference import Propagation
from lta.report import mi_order, mutual_info


logger = logging.getLogger(__name__)

AUTO = 'auto'
# candidate intermediate cardinalities for AUTO groups
AUTO_CARDINALITIES = (2, 3)
# Monte-Carlo sample count for the information coverage
CIC_SAMPLES = 10 ** 6
CIC_CUT = 0.95


class FeatureGroup(object):

    """
    Symptoms taken from one latent aspect.

    Args:
        * label (str): aspect name, also used as the name of the
            intermediate latent variable
        * symptoms (list): observed variable names
        * cardinality (int or 'auto'): intermediate latent cardinality;
            'auto' picks 2 or 3 by BIC

    """

    def __init__(self, label, symptoms, cardinality=2):
        self.label = str(label)
        self.symptoms = tuple(symptoms)
        if not self.symptoms:
            raise ValueError('feature group %r has no symptoms' % self.label)
        if cardinality != AUTO:
            cardinality = int(cardinality)
            if cardinality < 1:
                raise ValueError('feature group %r: cardinality must be '
                                 '>= 1' % self.label)
        self.cardinality = cardinality

    def to_dict(self):
        res = {'label': self.label, 'symptoms': list(self.symptoms)}
        if self.cardinality != 2:
            res['cardinality'] = self.cardinality
        return res

    def __repr__(self):
        return '<FeatureGroup %s %s>' % (self.label, list(self.symptoms))


class FeatureGroupSpec(object):

    """
    Declaration of a joint clustering model.

    Args:
        * groups (list): FeatureGroup objects (disjoint symptoms, unique
            labels)
        * z_cardinalities (iterable): candidate cardinalities of Z
        * target_label (str): name of the class the rule will target
        * latent (str): name of the joint variable

    """

    def __init__(self, groups, z_cardinalities=(2, 3, 4), target_label=None,
                 latent='Z'):
        self.groups = list(groups)
        if not self.groups:
            raise ValueError('feature group spec has no groups')
        self.z_cardinalities = tuple(sorted(set(int(k)
                                                for k in z_cardinalities)))
        if not self.z_cardinalities or self.z_cardinalities[0] < 1:
            raise ValueError('z cardinalities must be a nonempty set of '
                             'integers >= 1, got %s'
                             % list(self.z_cardinalities))
        self.target_label = target_label
        self.latent = latent

        labels = [g.label for g in self.groups]
        for label in labels:
            if labels.count(label) > 1:
                raise ValueError('duplicate group label %r' % label)
        seen = {}
        for g in self.groups:
            for x in g.symptoms:
                if x in seen:
                    raise ValueError('duplicate symptom %r in groups %r and '
                                     '%r' % (x, seen[x], g.label))
                seen[x] = g.label
        names = set(seen)
        for n in [latent] + labels:
            if n in names:
                raise ValueError('name %r is used for a symptom and a '
                                 'latent variable' % n)
        if latent in labels:
            raise ValueError('group label %r collides with the joint '
                             'variable' % latent)

    @property
    def symptoms(self):
        return tuple(x for g in self.groups for x in g.symptoms)

    def to_dict(self):
        return {'target_label': self.target_label,
                'latent': self.latent,
                'groups': [g.to_dict() for g in self.groups],
                'z_cardinality_range': list(self.z_cardinalities)}

    def __repr__(self):
        return '<FeatureGroupSpec %s groups=%d>' % (self.latent,
                                                     len(self.groups))


def build_skeleton(spec, z_cardinality, cardinalities=None,
                   intermediate=None):
    """
    Skeleton with Z at the root. Single-symptom groups hang off Z
    directly; every other group gets an intermediate latent variable
    (named by the group label) holding its symptoms.

    Args:
        * spec (FeatureGroupSpec): groups
        * z_cardinality (int): cardinality of Z
        * cardinalities (dict): observed cardinalities (default 2)
        * intermediate (dict): {label: cardinality} overriding the group
            defaults ('auto' groups default to 2)

    """
    if int(z_cardinality) < 1:
        raise ValueError('cardinality of %s must be >= 1' % spec.latent)
    cardinalities = cardinalities or {}
    intermediate = intermediate or {}
    z = spec.latent
    variables = [Latent(z, z_cardinality)]
    edges = []
    for g in spec.groups:
        if len(g.symptoms) == 1:
            x = g.symptoms[0]
            variables.append(Observed(x, cardinalities.get(x, 2)))
            edges.append((z, x))
            continue
        card = intermediate.get(g.label, g.cardinality)
        variables.append(Latent(g.label, 2 if card == AUTO else card))
        edges.append((z, g.label))
        for x in g.symptoms:
            variables.append(Observed(x, cardinalities.get(x, 2)))
            edges.append((g.label, x))
    return LatentTreeModel(variables, edges, z)


class JointResult(LcaResult):

    """
    Joint clustering models fitted over the candidate cardinalities of Z.

    Attributes:
        * spec (FeatureGroupSpec): the groups
        * intermediate (dict): chosen intermediate cardinalities
    """

    def __init__(self, spec, fits, best_cardinality, intermediate):
        super(JointResult, self).__init__(fits, best_cardinality)
        self.spec = spec
        self.intermediate = intermediate


def fit_joint(dataset, spec, config=None):
    """
    Fits the joint clustering model for every candidate cardinality of Z
    and selects the one with the highest BIC (ties to the smaller).

    Groups with cardinality 'auto' are settled first, one at a time in
    spec order, by comparing their candidate cardinalities at the smallest
    cardinality of Z.

    Returns:
        JointResult

    """
    config = config or EmConfig()
    missing = [x for x in spec.symptoms if x not in dataset.names]
    if missing:
        raise DataError('data has no column for %s' % ', '.join(missing))
    cards = {x: dataset.cardinality(x) for x in spec.symptoms}

    intermediate = {}
    for g in spec.groups:
        if g.cardinality != AUTO or len(g.symptoms) == 1:
            continue
        trial = {}
        for k in AUTO_CARDINALITIES:
            overrides = dict(intermediate)
            overrides[g.label] = k
            skeleton = build_skeleton(spec, spec.z_cardinalities[0], cards,
                                      overrides)
            trial[k] = fit_em(skeleton, dataset, config)
        intermediate[g.label] = select_by_bic(trial)
        logger.info('group %s: intermediate cardinality %d', g.label,
                    intermediate[g.label])

    if config.threads > 1:
        # restarts stay sequential inside each candidate
        inner = config.replace(threads=1, progress_bar=False)
    else:
        inner = config

    def fit(k):
        return fit_em(build_skeleton(spec, k, cards, intermediate), dataset,
                      inner)

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            results = list(pool.map(fit, spec.z_cardinalities))
    else:
        results = [fit(k) for k in spec.z_cardinalities]

    fits = dict(zip(spec.z_cardinalities, results))
    best = select_by_bic(fits)
    logger.info('selected |%s| = %d (BIC %.4f)', spec.latent, best,
                fits[best].bic)
    return JointResult(spec, fits, best, intermediate)


class ClassSummary(object):

    """
    A target class (one or more states of Z merged) against its complement.

    Args:
        * prior (float): P(Z in target), strictly between 0 and 1
        * table (DataFrame): one row per symptom with columns 'p_target'
            (P(X=1 | target)) and 'p_complement' (P(X=1 | complement)),
            optionally 'marginal' (P(X=1)) and 'mi' (I(Z; X))
        * target_label (str): name of the class
        * target_states (tuple): merged states of Z
        * smoothing (float): smoothing constant used to build the table
        * latent (str): name of Z

    """

    def __init__(self, prior, table, target_label=None, target_states=None,
                 smoothing=0.0, latent=None):
        prior = float(prior)
        if not 0 < prior < 1:
            raise ValueError('class prior must be in (0, 1), got %s' % prior)
        table = pd.DataFrame(table).astype(float)
        for col in ('p_target', 'p_complement'):
            if col not in table.columns:
                raise ValueError('class summary needs a %r column' % col)
            values = table[col].values
            if np.any((values < 0) | (values > 1)) or \
                    np.any(np.isnan(values)):
                raise ValueError('%s values must lie in [0, 1]' % col)
        self.prior = prior
        self.table = table
        self.target_label = target_label
        self.target_states = (None if target_states is None
                              else tuple(target_states))
        self.smoothing = float(smoothing)
        self.latent = latent

    @classmethod
    def from_probabilities(cls, prior, p_target, p_complement, **kwargs):
        """
        Builds a summary from {symptom: probability} dicts (insertion
        order is kept).
        """
        names = list(p_target)
        table = pd.DataFrame({'p_target': [p_target[x] for x in names],
                              'p_complement': [p_complement[x]
                                               for x in names]},
                             index=names)
        return cls(prior, table, **kwargs)

    @property
    def prior_complement(self):
        return 1.0 - self.prior

    @property
    def symptoms(self):
        return list(self.table.index)

    def __repr__(self):
        return '<ClassSummary %s prior=%.4f symptoms=%d>' % (
            self.target_label, self.prior, len(self.table))


def _check_states(model, z, target_states):
    if z not in model or not model[z].is_latent:
        raise ValueError('%r is not a latent variable of the model' % z)
    card = model.cardinality(z)
    states = sorted(set(int(s) for s in target_states))
    if not states:
        raise ValueError('target states cannot be empty')
    if states[0] < 0 or states[-1] >= card:
        raise ValueError('target states %s outside 0..%d' % (states,
                                                             card - 1))
    if len(states) == card:
        raise ValueError('target states cannot cover every state of %r' % z)
    return states, [s for s in range(card) if s not in states]


def merged_label(z, states):
    return '%s=s%s' % (z, ''.join(str(s) for s in states))


def merge_summary(model, z, target_states, smoothing=1e-6, symptoms=None,
                  target_label=None):
    """
    Summary of the merged target states of Z against the other states.

    Conditionals are mixtures over the merged states, smoothed at the joint
    level: P(X=1 | T) = (P(X=1, T) + c) / (P(T) + |X| c).

    Args:
        * model (LatentTreeModel): fitted joint clustering model
        * z (str): joint latent variable
        * target_states (iterable): states merged into the target class
        * smoothing (float): smoothing constant c
        * symptoms (list): default: every observed variable of the model
        * target_label (str): name recorded in the summary

    """
    if smoothing < 0:
        raise ValueError('smoothing must be >= 0, got %s' % smoothing)
    target, complement = _check_states(model, z, target_states)
    symptoms = list(model.observed if symptoms is None else symptoms)
    sizes = marginal(model, [z])
    prior = sizes[target].sum()
    prior_n = sizes[complement].sum()

    rows = []
    for x in symptoms:
        if x not in model or model[x].is_latent:
            raise DataError('%r is not an observed variable of the model'
                            % x)
        joint = marginal(model, [z, x])
        k = model.cardinality(x)
        c = smoothing
        rows.append({
            'p_target': (joint[target, 1].sum() + c) / (prior + k * c),
            'p_complement': ((joint[complement, 1].sum() + c) /
                             (prior_n + k * c)),
            'marginal': joint[:, 1].sum(),
            'mi': mutual_info(model, z, x)})
    table = pd.DataFrame(rows, index=symptoms,
                         columns=['p_target', 'p_complement', 'marginal',
                                  'mi'])
    return ClassSummary(prior, table,
                        target_label or merged_label(z, target),
                        target, smoothing, z)


def _exact_coverage(model, z, ordered, space):
    joint = marginal(model, [z] + ordered,
                     max_size=space * model.cardinality(z))
    pz = joint.reshape(joint.shape[0], -1).sum(axis=1)
    res = []
    for k in range(len(ordered), 0, -1):
        px = joint.sum(axis=0)
        outer = pz.reshape((-1,) + (1,) * k) * px[None]
        res.append(max(float(rel_entr(joint, outer).sum()), 0.0))
        joint = joint.sum(axis=-1)
    return res[::-1]


def _sampled_coverage(model, z, ordered, samples, seed):
    data = forward_sample(model, samples, seed=seed, include_latent=True)
    data = data.subset([z] + ordered).dedupe()
    zs = data.column(z)
    w = np.asarray(data.weights)
    prior = marginal(model, [z])
    res = []
    for k in range(1, len(ordered) + 1):
        evidence = {x: data.column(x) for x in ordered[:k]}
        prop = Propagation(model, evidence, size=len(data))
        post = prop.posterior(z)[np.arange(len(data)), zs]
        terms = np.log(post) - np.log(prior[zs])
        res.append(math.fsum(w * terms) / data.N)
    return res


def cic_table(model, z, symptoms=None, threshold=CIC_CUT,
              samples=CIC_SAMPLES, seed=0, base=math.e):
    """
    Cumulative information coverage of the symptoms about Z.

    Symptoms are ordered by I(Z; X) descending; row k holds
    I(Z; X_1..X_k) / I(Z; X_1..X_n). The joint information is computed
    exactly when the symptom state space has at most 2**20 entries,
    otherwise it is estimated from forward samples of the model.

    Returns:
        DataFrame indexed by symptom with columns 'MI', 'CIC' and 'cut'
        (True up to and including the first row reaching the threshold);
        attrs hold the estimator, its seed and the total information

    """
    check_model(model)
    if z not in model or not model[z].is_latent:
        raise ValueError('%r is not a latent variable of the model' % z)
    symptoms = list(model.observed if symptoms is None else symptoms)
    if not symptoms:
        raise ValueError('no symptoms given')
    ordered, mi = mi_order(model, z, symptoms, base)

    space = 1
    for x in ordered:
        space *= model.cardinality(x)
    if space <= MAX_TABLE_SIZE:
        joint_mi = _exact_coverage(model, z, ordered, space)
        estimator = 'exact'
    else:
        logger.info('symptom state space has %d entries, estimating '
                    'coverage from %d samples (seed %d)', space, samples,
                    seed)
        joint_mi = _sampled_coverage(model, z, ordered, samples, seed)
        estimator = 'monte-carlo'
    joint_mi = [v / math.log(base) for v in joint_mi]

    total = joint_mi[-1]
    if total > 0:
        cic = [v / total for v in joint_mi]
    else:
        cic = [1.0] * len(ordered)
    cut = []
    reached = False
    for v in cic:
        cut.append(not reached)
        reached = reached or v >= threshold

    table = pd.DataFrame({'MI': [mi[x] for x in ordered], 'CIC': cic,
                          'cut': cut}, index=ordered,
                         columns=['MI', 'CIC', 'cut'])
    table.index.name = 'symptom'
    table.attrs['estimator'] = estimator
    table.attrs['samples'] = samples if estimator != 'exact' else None
    table.attrs['seed'] = seed if estimator != 'exact' else None
    table.attrs['total'] = total
    return table


def joint_report(model, z, target_states=None, symptoms=None,
                 smoothing=0.0, threshold=CIC_CUT, prune=False, seed=0):
    """
    Occurrence probabilities per state of Z, the merged target column,
    MI and CIC for every symptom, ordered by MI.

    Column headers carry the state sizes, e.g. 'Z=s0 (0.42)' and
    'Z=s12 (0.58)'. With prune only the rows up to the coverage cut are
    kept.
    """
    cic = cic_table(model, z, symptoms, threshold, seed=seed)
    ordered = list(cic.index)
    sizes = marginal(model, [z])
    columns = {}
    names = []
    for s, label in enumerate(state_labels(model.cardinality(z))):
        name = '%s=%s (%.2f)' % (z, label, sizes[s])
        names.append(name)
        col = []
        for x in ordered:
            joint = marginal(model, [z, x])
            col.append(joint[s, 1] / sizes[s] if sizes[s] > 0 else 0.0)
        columns[name] = col
    if target_states is not None:
        summary = merge_summary(model, z, target_states, smoothing, ordered)
        name = '%s (%.2f)' % (merged_label(z, summary.target_states),
                              summary.prior)
        names.append(name)
        columns[name] = list(summary.table['p_target'])
    columns['MI'] = list(cic['MI'])
    columns['CIC'] = list(cic['CIC'])
    names.extend(['MI', 'CIC'])
    frame = pd.DataFrame(columns, index=ordered, columns=names)
    frame.index.name = 'symptom'
    frame.attrs.update(cic.attrs)
    if prune:
        frame = frame[cic['cut'].values]
    return frame
