"""
Reports on the partitions defined by latent variables: cluster sizes,
symptom occurrence probabilities, mutual information and the
co-occurrence / mutual-exclusion structure of the symptoms.
"""
from __future__ import division
import logging
import math
from collections import namedtuple
from itertools import combinations

import networkx as nx
import numpy as np
import pandas as pd
from scipy.special import rel_entr

from lta.core import DataError, marginal, state_labels


logger = logging.getLogger(__name__)

# correlations below this are treated as zero when typing patterns
ZERO_CORRELATION = 1e-6


class CoOccurrence(namedtuple('CoOccurrence', ['symptoms'])):

    def __str__(self):
        return 'co-occurrence: %s' % ', '.join(self.symptoms)


class MutualExclusion(namedtuple('MutualExclusion',
                                 ['group_a', 'group_b'])):

    def __str__(self):
        return 'mutual exclusion: {%s} vs {%s}' % (', '.join(self.group_a),
                                                  ', '.join(self.group_b))


class Mixed(namedtuple('Mixed', ['triple'])):

    def __str__(self):
        return 'mixed: %s' % ', '.join(self.triple)


def unit_name(base):
    if base == math.e:
        return 'nats'
    if base == 2:
        return 'bits'
    return 'log%g' % base


def _check_latent(model, latent):
    if latent not in model:
        raise DataError('unknown variable %r' % latent)
    if not model[latent].is_latent:
        raise ValueError('%r is not a latent variable' % latent)


def _check_observed(model, names):
    for x in names:
        if x not in model:
            raise DataError('unknown variable %r' % x)
        if model[x].is_latent:
            raise ValueError('%r is not an observed variable' % x)


def information(joint, base=math.e):
    """
    Mutual information of the two axes of a joint table, clipped at 0.
    """
    joint = np.asarray(joint, dtype=float)
    a = joint.sum(axis=1)
    b = joint.sum(axis=0)
    mi = rel_entr(joint, np.outer(a, b)).sum() / math.log(base)
    return max(float(mi), 0.0)


def mutual_info(model, a, b, base=math.e):
    """
    I(a; b) under the model, in units of the log base (default nats).
    """
    if a == b:
        raise ValueError('mutual information needs two distinct variables')
    for n in (a, b):
        if n not in model:
            raise DataError('unknown variable %r' % n)
    return information(marginal(model, [a, b]), base)


def occurrence_table(model, latent, symptoms, state=1):
    """
    Cluster sizes P(Y=s) and occurrence probabilities P(X=state | Y=s).

    Args:
        * model (LatentTreeModel): valid parameterized model
        * latent (str): latent variable defining the partition
        * symptoms (list): observed variables (anywhere in the model)
        * state (int): state counted as an occurrence

    Returns:
        (sizes Series, DataFrame with one row per symptom and one column
        per latent state)

    """
    _check_latent(model, latent)
    _check_observed(model, symptoms)
    labels = state_labels(model.cardinality(latent))
    sizes = marginal(model, [latent])
    rows = []
    for x in symptoms:
        joint = marginal(model, [latent, x])
        with np.errstate(invalid='ignore', divide='ignore'):
            rows.append(np.where(sizes > 0, joint[:, state] / sizes, 0.0))
    table = pd.DataFrame(rows, index=list(symptoms), columns=labels,
                         dtype=float)
    return pd.Series(sizes, index=labels, name='size'), table


def _presence_correlation(model, a, b, state=1):
    joint = marginal(model, [a, b])
    p_ab = joint[state, state]
    p_a = joint[state].sum()
    p_b = joint[:, state].sum()
    var = p_a * (1 - p_a) * p_b * (1 - p_b)
    if var <= 0:
        return 0.0
    return (p_ab - p_a * p_b) / math.sqrt(var)


def mi_order(model, latent, symptoms, base=math.e):
    mi = dict((x, mutual_info(model, latent, x, base)) for x in symptoms)
    return sorted(symptoms, key=lambda x: (-mi[x], x)), mi


def pattern_type(model, latent, symptoms=None):
    """
    Classifies the symptoms around a latent variable as a co-occurrence
    pattern or a mutual exclusion of two groups.

    Symptom pairs are linked by the sign of the Pearson correlation of
    their presence indicators under the model. Without negative links the
    symptoms co-occur. Otherwise the link graph is 2-coloured (positive
    links join, negative links separate); group_a holds the symptom with the
    highest mutual information. A sign structure with no such colouring is
    reported as Mixed with an offending triple.

    Args:
        * model (LatentTreeModel): valid parameterized model
        * latent (str): latent variable
        * symptoms (list): default: observed neighbors of the latent

    """
    _check_latent(model, latent)
    if symptoms is None:
        symptoms = [x for x in model.neighbors(latent)
                    if not model[x].is_latent]
    symptoms = list(symptoms)
    if not symptoms:
        raise ValueError('%r has no adjacent observed variable' % latent)
    _check_observed(model, symptoms)
    ordered, _ = mi_order(model, latent, symptoms)

    graph = nx.Graph()
    graph.add_nodes_from(ordered)
    for a, b in combinations(ordered, 2):
        rho = _presence_correlation(model, a, b)
        if abs(rho) >= ZERO_CORRELATION:
            graph.add_edge(a, b, sign=1 if rho > 0 else -1)

    if all(d['sign'] > 0 for _, _, d in graph.edges(data=True)):
        return CoOccurrence(tuple(ordered))

    colour = {}
    for start in ordered:
        if start in colour:
            continue
        colour[start] = 0
        for u, v in nx.bfs_edges(graph, start):
            colour[v] = colour[u] ^ (graph[u][v]['sign'] < 0)

    for u, v, d in graph.edges(data=True):
        if (colour[u] != colour[v]) != (d['sign'] < 0):
            return Mixed(_conflict(graph, ordered, (u, v)))

    group_a = tuple(x for x in ordered if colour[x] == colour[ordered[0]])
    group_b = tuple(x for x in ordered if colour[x] != colour[ordered[0]])
    return MutualExclusion(group_a, group_b)


def _conflict(graph, ordered, edge):
    for tri in combinations(ordered, 3):
        pairs = list(combinations(tri, 2))
        if all(graph.has_edge(*p) for p in pairs):
            signs = [graph.edges[p]['sign'] for p in pairs]
            if signs[0] * signs[1] * signs[2] < 0:
                return tri
    u, v = edge
    rest = [x for x in ordered if x not in edge]
    return (u, v, rest[0]) if rest else (u, v)


class PartitionReport(object):

    """
    The partition defined by one latent variable.

    Attributes:
        * latent (str): latent variable
        * sizes (Series): P(Y=s) per state
        * rows (DataFrame): one row per symptom, sorted by mutual
            information (descending, ties by name), holding P(X=1|Y=s) per
            state and the mutual information in column 'MI'
        * pattern: CoOccurrence, MutualExclusion or Mixed
        * base (float): log base of the MI column

    """

    def __init__(self, latent, sizes, rows, pattern, base=math.e):
        self.latent = latent
        self.sizes = sizes
        self.rows = rows
        self.pattern = pattern
        self.base = base

    @property
    def mi_column(self):
        return 'MI (%s)' % unit_name(self.base)

    def to_frame(self):
        """
        Report table: a size row, then one row per symptom.
        """
        head = pd.DataFrame([list(self.sizes.values) + [np.nan]],
                            index=['size'],
                            columns=list(self.sizes.index) + ['MI'])
        frame = pd.concat([head, self.rows])
        frame.index.name = 'cluster'
        return frame.rename(columns={'MI': self.mi_column})

    def to_tsv(self):
        from lta import io
        return io.write_table(self.to_frame())

    def to_text(self):
        frame = self.to_frame()
        body = frame.to_string(float_format=lambda v: '%.2f' % v,
                               na_rep='')
        return '%s (%s)\n%s\n' % (self.latent, self.pattern, body)

    def __repr__(self):
        return '<PartitionReport %s %d symptoms>' % (self.latent,
                                                      len(self.rows))


def build_report(model, latent, symptoms=None, base=math.e):
    """
    Partition report for a latent variable over its adjacent observed
    variables (or the given symptoms).
    """
    _check_latent(model, latent)
    if symptoms is None:
        symptoms = [x for x in model.neighbors(latent)
                    if not model[x].is_latent]
    ordered, mi = mi_order(model, latent, list(symptoms), base)
    sizes, table = occurrence_table(model, latent, ordered)
    table['MI'] = [mi[x] for x in ordered]
    pattern = pattern_type(model, latent, ordered) if ordered \
        else CoOccurrence(())
    return PartitionReport(latent, sizes, table, pattern, base)


def model_report(model, base=math.e):
    """
    One PartitionReport per latent variable, sorted by name.
    """
    return [build_report(model, y, base=base) for y in sorted(model.latents)]


def edge_mutual_info(model, base=math.e):
    """
    Mutual information across every edge of the model.
    """
    rows = [(a, b, mutual_info(model, a, b, base)) for a, b in model.edges]
    return pd.DataFrame(rows, columns=['u', 'v', 'MI'])
