"""
Model builders and a brute force oracle shared by the tests.
"""
from __future__ import division
import itertools
import math

import numpy as np

from lta.core import LatentTreeModel, Latent, Observed, DataSet, MISSING


def grades_model():
    """
    Two skills (AS, LS) and four grades; state 0 is 'low'.
    """
    variables = [Latent('AS'), Latent('LS'), Observed('MG'), Observed('SG'),
                 Observed('EG'), Observed('HG')]
    edges = [('AS', 'LS'), ('AS', 'MG'), ('AS', 'SG'), ('LS', 'EG'),
             ('LS', 'HG')]
    cpts = {
        'AS': [0.7, 0.3],
        'LS': [[0.6, 0.4], [0.4, 0.6]],
        'MG': [[0.8, 0.2], [0.2, 0.8]],
        'SG': [[0.75, 0.25], [0.3, 0.7]],
        'EG': [[0.7, 0.3], [0.25, 0.75]],
        'HG': [[0.85, 0.15], [0.35, 0.65]],
    }
    return LatentTreeModel(variables, edges, 'AS', cpts)


def class_model(latent, sizes, occurrence):
    """
    Latent class model from cluster sizes and P(X=1 | state) lists.
    """
    names = list(occurrence)
    variables = [Latent(latent, len(sizes))]
    variables.extend(Observed(x) for x in names)
    cpts = {latent: sizes}
    for x in names:
        p = np.asarray(occurrence[x], dtype=float)
        cpts[x] = np.column_stack([1 - p, p])
    return LatentTreeModel(variables, [(latent, x) for x in names], latent,
                           cpts)


def tongue_fur_model():
    return class_model('Y06', [0.79, 0.21],
                       {'thick tongue fur': [0.05, 0.63],
                        'greasy tongue fur': [0.38, 0.79]})


def pulse_model():
    return class_model('Y12', [0.43, 0.57],
                       {'slippery pulse': [0.85, 0.16],
                        'thin pulse': [0.00, 0.57]})


def sleep_model():
    return class_model('Y25', [0.64, 0.36],
                       {'insomnia': [0.16, 0.78],
                        'dreamfulness': [0.23, 0.83],
                        'flushed face': [0.10, 0.03]})


PHLEGM_SYMPTOMS = {
    'greasy tongue fur': [0.03, 0.86, 0.60],
    'sticky feel in mouth': [0.05, 0.18, 0.62],
    'slippery pulse': [0.27, 0.67, 0.39],
    'urinary incontinence': [0.17, 0.13, 0.65],
    'dizzy headache': [0.02, 0.00, 0.25],
    'expectoration': [0.26, 0.20, 0.63],
    'dizziness': [0.45, 0.42, 0.80],
}


def phlegm_model():
    return class_model('Z', [0.42, 0.44, 0.14], PHLEGM_SYMPTOMS)


SYNDROME_GROUPS = {'tongue': ['t1', 't2', 't3'], 'pulse': ['p1', 'p2']}
SYNDROME_STRONG = ['t1', 't2', 't3', 'p1', 'p2', 'a1', 'a2', 'a3']
SYNDROME_WEAK = ['w%d' % i for i in range(1, 9)]


def syndrome_model():
    """
    Three-state Z over 16 symptoms: two symptom groups behind binary
    intermediate latents, three strong singletons and eight symptoms that
    barely depend on Z. States 1 and 2 form the target class.
    """
    variables = [Latent('Z', 3), Latent('tongue'), Latent('pulse')]
    variables.extend(Observed(x) for x in SYNDROME_STRONG + SYNDROME_WEAK)
    edges = [('Z', 'tongue'), ('Z', 'pulse')]
    for g, xs in SYNDROME_GROUPS.items():
        edges.extend((g, x) for x in xs)
    edges.extend(('Z', x) for x in ['a1', 'a2', 'a3'] + SYNDROME_WEAK)

    occurrence = {
        'tongue': [0.05, 0.9, 0.9], 'pulse': [0.1, 0.9, 0.15],
        't1': [0.1, 0.85], 't2': [0.1, 0.8], 't3': [0.05, 0.75],
        'p1': [0.1, 0.85], 'p2': [0.15, 0.8],
        'a1': [0.05, 0.8, 0.1], 'a2': [0.1, 0.1, 0.85],
        'a3': [0.05, 0.15, 0.9],
    }
    for i, x in enumerate(SYNDROME_WEAK):
        b = 0.15 + 0.05 * i
        occurrence[x] = [b, b + 0.02, b + 0.01]
    cpts = {'Z': [0.42, 0.44, 0.14]}
    for x, p in occurrence.items():
        p = np.asarray(p)
        cpts[x] = np.column_stack([1 - p, p])
    return LatentTreeModel(variables, edges, 'Z', cpts)


def two_island_model(strength=0.85):
    """
    Two linked binary latents (A, B) with three symptoms each; every
    conditional keeps the parent's state with the given probability.
    """
    keep = [[strength, 1 - strength], [1 - strength, strength]]
    names = ['X%d' % i for i in range(1, 7)]
    variables = [Latent('A'), Latent('B')] + [Observed(x) for x in names]
    edges = [('A', 'B')]
    edges.extend(('A' if i < 3 else 'B', x) for i, x in enumerate(names))
    cpts = dict((x, keep) for x in names)
    cpts.update({'A': [0.5, 0.5], 'B': keep})
    return LatentTreeModel(variables, edges, 'A', cpts)


def sibling_sets(model):
    """
    Sets of observed variables sharing a latent parent.
    """
    res = set()
    for h in model.latents:
        kids = frozenset(x for x in model.children(h)
                         if not model[x].is_latent)
        if kids:
            res.add(kids)
    return res


def random_model(rng, latents=2, observed=5, max_card=3, min_card=1):
    """
    Random valid latent tree model with binary observed variables.
    """
    hs = ['H%d' % i for i in range(latents)]
    xs = ['X%d' % i for i in range(observed)]
    edges = []
    for i in range(1, latents):
        edges.append((hs[int(rng.integers(i))], hs[i]))
    degree = dict((h, 0) for h in hs)
    for a, b in edges:
        degree[a] += 1
        degree[b] += 1
    free = list(xs)
    for h in hs:
        while degree[h] < 2:
            if not free:
                raise ValueError('too few observed variables')
            edges.append((h, free.pop(0)))
            degree[h] += 1
    for x in free:
        edges.append((hs[int(rng.integers(latents))], x))
    variables = [Latent(h, int(rng.integers(min_card, max_card + 1)))
                 for h in hs]
    variables.extend(Observed(x) for x in xs)
    skeleton = LatentTreeModel(variables, edges, hs[0])
    cpts = {}
    for v in skeleton.order:
        card = skeleton.cardinality(v)
        parent = skeleton.parent(v)
        if parent is None:
            cpts[v] = rng.dirichlet(np.ones(card))
        else:
            cpts[v] = rng.dirichlet(np.ones(card),
                                    size=skeleton.cardinality(parent))
    return skeleton.with_cpts(cpts)


def full_joint(model):
    """
    Joint table over all variables (axes in model.names order) by
    enumerating every assignment.
    """
    names = model.names
    cards = [model.cardinality(n) for n in names]
    pos = dict((n, i) for i, n in enumerate(names))
    joint = np.zeros(cards)
    for states in itertools.product(*[range(k) for k in cards]):
        p = 1.0
        for n in names:
            parent = model.parent(n)
            if parent is None:
                p *= model.cpt(n)[states[pos[n]]]
            else:
                p *= model.cpt(n)[states[pos[parent]], states[pos[n]]]
        joint[states] = p
    return joint


def brute_marginal(model, subset, joint=None):
    if joint is None:
        joint = full_joint(model)
    names = list(model.names)
    drop = tuple(i for i, n in enumerate(names) if n not in subset)
    table = joint.sum(axis=drop)
    kept = [n for n in names if n in subset]
    return np.transpose(table, [kept.index(n) for n in subset])


def brute_loglik(model, evidence):
    joint = full_joint(model)
    idx = []
    for n in model.names:
        s = evidence.get(n, MISSING)
        idx.append(slice(None) if s == MISSING else s)
    p = joint[tuple(idx)].sum()
    return math.log(p) if p > 0 else -np.inf


def brute_mi(table):
    """
    Mutual information between the first axis and all the others.
    """
    table = table.reshape(table.shape[0], -1)
    a = table.sum(axis=1)
    b = table.sum(axis=0)
    res = 0.0
    for i in range(table.shape[0]):
        for j in range(table.shape[1]):
            if table[i, j] > 0:
                res += table[i, j] * math.log(table[i, j] / (a[i] * b[j]))
    return res


def random_evidence(rng, model, missing=0.3):
    res = {}
    for x in model.observed:
        if rng.random() >= missing:
            res[x] = int(rng.integers(model.cardinality(x)))
    return res


def all_records(names):
    """
    DataSet holding every complete binary record over the names.
    """
    rows = list(itertools.product([0, 1], repeat=len(names)))
    return DataSet(names, np.array(rows, dtype=np.int64).reshape(
        len(rows), len(names)))
