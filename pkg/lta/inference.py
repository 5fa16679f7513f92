"""
Exact inference on latent tree models by two-pass message passing.

Messages are kept row-normalized (one row per record) and the normalizers
are accumulated in log space, so large models with extreme parameters do
not underflow.
"""
from __future__ import division
import logging
import math

import numpy as np

from lta.core import MISSING, DataError, NumericalError, check_model


logger = logging.getLogger(__name__)


def _normalized(table):
    s = table.max(axis=1)
    s[s <= 0] = 1.0
    return table / s[:, None]


class Propagation(object):

    """
    Upward and downward message passing over a batch of records.

    The upward pass runs on construction and yields the log-likelihood of
    every record. The downward pass runs on first use of a posterior or
    of the expected counts.

    Args:
        * model (LatentTreeModel): valid parameterized model
        * evidence (dict): {observed name: int array of states}; MISSING
            entries and unmentioned variables are summed out
        * size (int): number of records; taken from evidence if omitted

    Attributes:
        * loglik (ndarray): natural log probability per record, -inf for
            records with probability zero

    """

    def __init__(self, model, evidence, size=None):
        check_model(model)
        self.model = model
        if size is None:
            size = len(next(iter(evidence.values()))) if evidence else 1
        self.size = size
        self._evidence = evidence
        self._lam = {}
        self._up = {}
        self._pi = None
        self._outside = None
        self._log_scale = np.zeros(size)
        with np.errstate(divide='ignore'):
            self._collect()

    def _rescale(self, table):
        s = table.max(axis=1)
        zero = s <= 0
        self._log_scale += np.log(np.where(zero, 0.0, s))
        s[zero] = 1.0
        return table / s[:, None]

    def _collect(self):
        model = self.model
        for v in reversed(model.order):
            lam = np.ones((self.size, model.cardinality(v)))
            ev = self._evidence.get(v)
            if ev is not None:
                seen = ev != MISSING
                lam[seen] = 0.0
                lam[np.flatnonzero(seen), ev[seen]] = 1.0
            for c in model.children(v):
                lam = self._rescale(lam * self._up[c])
            self._lam[v] = lam
            if model.parent(v) is not None:
                self._up[v] = self._rescale(lam.dot(model.cpt(v).T))

        root = model.root
        lik = self._lam[root].dot(model.cpt(root))
        self.loglik = np.log(lik) + self._log_scale
        if np.any(np.isneginf(self.loglik)):
            logger.debug('%d of %d records have probability zero',
                         np.isneginf(self.loglik).sum(), self.size)

    def _distribute(self):
        if self._pi is not None:
            return
        model = self.model
        root = model.root
        pi = {root: np.tile(model.cpt(root), (self.size, 1))}
        outside = {}
        for v in model.order:
            kids = model.children(v)
            if not kids:
                continue
            # products of the parent side with all siblings but one
            prefix = [pi[v]]
            for c in kids[:-1]:
                prefix.append(_normalized(prefix[-1] * self._up[c]))
            suffix = np.ones_like(pi[v])
            for i in range(len(kids) - 1, -1, -1):
                c = kids[i]
                excl = _normalized(prefix[i] * suffix)
                outside[c] = excl
                pi[c] = _normalized(excl.dot(model.cpt(c)))
                suffix = _normalized(suffix * self._up[c])
        self._pi = pi
        self._outside = outside

    def posterior(self, name):
        """
        Posterior of a variable per record (rows of NaN for records with
        probability zero).
        """
        self._distribute()
        p = self._pi[name] * self._lam[name]
        with np.errstate(invalid='ignore', divide='ignore'):
            return p / p.sum(axis=1)[:, None]

    def edge_posterior(self, child):
        """
        Joint posterior of (parent, child) per record, shape
        (records, card(parent), card(child)).
        """
        self._distribute()
        table = (self._outside[child][:, :, None] *
                 self.model.cpt(child)[None, :, :] *
                 self._lam[child][:, None, :])
        with np.errstate(invalid='ignore', divide='ignore'):
            return table / table.sum(axis=(1, 2))[:, None, None]

    def edge_counts(self, child, weights):
        """
        Expected counts table[i, j] of (parent=i, child=j) summed over the
        weighted records.
        """
        self._distribute()
        cpt = self.model.cpt(child)
        outside = self._outside[child]
        lam = self._lam[child]
        z = (outside.dot(cpt) * lam).sum(axis=1)
        wz = np.zeros(self.size)
        ok = z > 0
        wz[ok] = weights[ok] / z[ok]
        return cpt * (outside * wz[:, None]).T.dot(lam)

    def root_counts(self, weights):
        post = self.posterior(self.model.root)
        post[~np.isfinite(post)] = 0.0
        return (weights[:, None] * post).sum(axis=0)

    def total_loglik(self, weights):
        if np.any(np.isneginf(self.loglik) & (weights > 0)):
            return -np.inf
        return math.fsum(weights * self.loglik)


def _state(value):
    if value is None:
        return MISSING
    if isinstance(value, float) and math.isnan(value):
        return MISSING
    try:
        state = int(value)
    except (TypeError, ValueError):
        raise DataError('state %r is not an integer' % (value,))
    if state != value:
        raise DataError('state %r is not an integer' % (value,))
    return state


def _check_state(model, name, state):
    if name not in model:
        raise DataError('unknown variable %r' % name)
    if model[name].is_latent:
        raise DataError('latent variable %r cannot carry evidence' % name)
    card = model.cardinality(name)
    if state != MISSING and not 0 <= state < card:
        raise DataError('state %d of %r is outside 0..%d'
                        % (state, name, card - 1))


def record_evidence(model, evidence):
    """
    Converts {name: state} into the array form Propagation expects.
    None, NaN and MISSING mark missing values.
    """
    res = {}
    for name, value in (evidence or {}).items():
        state = _state(value)
        _check_state(model, name, state)
        res[name] = np.array([state], dtype=np.int64)
    return res


def dataset_evidence(model, dataset):
    """
    Column arrays of a DataSet matched to the model's observed variables
    by name.
    """
    res = {}
    for i, name in enumerate(dataset.names):
        if name not in model or model[name].is_latent:
            raise DataError('data variable %r is not an observed variable '
                            'of the model' % name)
        col = dataset.values[:, i]
        top = col.max() if len(col) else MISSING
        _check_state(model, name, int(top))
        res[name] = col
    return res


def _propagate_unique(model, dataset):
    if len(dataset) == 0:
        return None, np.empty(0, dtype=np.int64)
    rows, inverse = np.unique(dataset.values, axis=0, return_inverse=True)
    evidence = dataset_evidence(model, dataset)
    evidence = {n: rows[:, dataset.index(n)] for n in evidence}
    return (Propagation(model, evidence, size=len(rows)),
            np.ravel(inverse))


def record_loglik(model, evidence):
    """
    Natural log probability of the evidence, -inf if it is impossible.

    Args:
        * model (LatentTreeModel): valid parameterized model
        * evidence (dict): {observed name: state}

    """
    prop = Propagation(model, record_evidence(model, evidence), size=1)
    return float(prop.loglik[0])


def posterior(model, evidence, latent):
    """
    Posterior distribution of a latent variable given the evidence.
    """
    if latent not in model:
        raise DataError('unknown variable %r' % latent)
    if not model[latent].is_latent:
        raise ValueError('%r is not a latent variable' % latent)
    prop = Propagation(model, record_evidence(model, evidence), size=1)
    if np.isneginf(prop.loglik[0]):
        raise NumericalError('evidence has probability zero')
    return prop.posterior(latent)[0]


def edge_posterior(model, evidence, edge):
    """
    Joint posterior over the two end points of an edge.

    Args:
        * model (LatentTreeModel): valid parameterized model
        * evidence (dict): {observed name: state}
        * edge (tuple): pair of adjacent names; the result has one axis
            per end point in this order

    """
    a, b = edge
    if a in model and model.parent(b) == a:
        flip = False
        child = b
    elif b in model and model.parent(a) == b:
        flip = True
        child = a
    else:
        raise DataError('unknown edge %s-%s' % (a, b))
    prop = Propagation(model, record_evidence(model, evidence), size=1)
    if np.isneginf(prop.loglik[0]):
        raise NumericalError('evidence has probability zero')
    table = prop.edge_posterior(child)[0]
    return table.T if flip else table


def dataset_logliks(model, dataset):
    """
    Natural log probability of every record of a DataSet.
    """
    prop, inverse = _propagate_unique(model, dataset)
    if prop is None:
        return np.empty(0)
    return prop.loglik[inverse]


def dataset_loglik(model, dataset):
    """
    Weighted sum of record log-likelihoods, summed with math.fsum so the
    result does not depend on record order.
    """
    if len(dataset) == 0:
        dataset_evidence(model, dataset)
        return 0.0
    ll = dataset_logliks(model, dataset)
    if np.any(np.isneginf(ll)):
        return -np.inf
    return math.fsum(dataset.weights * ll)


def posterior_matrix(model, dataset, latent):
    """
    Posterior of a latent variable for every record, one row per record.
    """
    if latent not in model or not model[latent].is_latent:
        raise ValueError('%r is not a latent variable of the model' % latent)
    prop, inverse = _propagate_unique(model, dataset)
    if prop is None:
        return np.empty((0, model.cardinality(latent)))
    if np.any(np.isneginf(prop.loglik)):
        raise NumericalError('data contains records with probability zero')
    return prop.posterior(latent)[inverse]
