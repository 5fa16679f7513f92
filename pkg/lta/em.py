"""
Maximum likelihood estimation by EM with random restarts, BIC scoring and
latent class cardinality selection.
"""
from __future__ import division
import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
import pyprind

from lta.core import (LatentTreeModel, Latent, Observed, DataError,
                      NumericalError, ConvergenceWarning, check_model,
                      dimension, random_parameters, substream)
from lta.inference import Propagation, dataset_evidence, dataset_loglik


logger = logging.getLogger(__name__)


class EmConfig(object):

    """
    Settings of an EM fit.

    Args:
        * max_iterations (int): EM iterations per restart
        * tolerance (float): stop once the relative log-likelihood
            improvement (l_t - l_t-1) / (|l_t-1| + 1) falls below this
        * restarts (int): number of random initializations
        * seed (int): base seed; restart r draws from substream
            (seed, 'em', r)
        * smoothing (float): pseudo count added to every cell in the
            M-step
        * threads (int): restarts evaluated concurrently
        * progress_bar (bool): display a progress bar over restarts

    """

    def __init__(self, max_iterations=500, tolerance=1e-6, restarts=16,
                 seed=0, smoothing=0.0, threads=1, progress_bar=False):
        if int(max_iterations) < 1:
            raise ValueError('max_iterations must be >= 1, got %s'
                             % max_iterations)
        if not tolerance > 0:
            raise ValueError('tolerance must be > 0, got %s' % tolerance)
        if int(restarts) < 1:
            raise ValueError('restarts must be >= 1, got %s' % restarts)
        if int(seed) < 0:
            raise ValueError('seed must be non-negative, got %s' % seed)
        if not smoothing >= 0:
            raise ValueError('smoothing must be >= 0, got %s' % smoothing)
        if int(threads) < 1:
            raise ValueError('threads must be >= 1, got %s' % threads)
        self.max_iterations = int(max_iterations)
        self.tolerance = float(tolerance)
        self.restarts = int(restarts)
        self.seed = int(seed)
        self.smoothing = float(smoothing)
        self.threads = int(threads)
        self.progress_bar = bool(progress_bar)

    def to_dict(self):
        # threads and progress do not change results
        return {'max_iterations': self.max_iterations,
                'tolerance': self.tolerance,
                'restarts': self.restarts,
                'seed': self.seed,
                'smoothing': self.smoothing}

    def replace(self, **kwargs):
        args = self.to_dict()
        args.update(threads=self.threads, progress_bar=self.progress_bar)
        args.update(kwargs)
        return EmConfig(**args)

    def __repr__(self):
        return '<EmConfig %s>' % ', '.join(
            '%s=%s' % kv for kv in sorted(self.to_dict().items()))


class FitResult(object):

    """
    Outcome of an EM fit.

    Attributes:
        * model (LatentTreeModel): fitted model
        * loglik (float): log-likelihood of the data
        * bic (float): loglik - dimension / 2 * ln N
        * dimension (int): free parameter count
        * N (float): total weight of the data
        * trace (tuple): log-likelihood after initialization and after
            every iteration of the returned run
        * restart_logliks (tuple): final log-likelihood of every restart
        * converged (bool): False if the returned run hit max_iterations

    """

    def __init__(self, model, loglik, bic, trace, restart_logliks=(),
                 dimension=None, N=None, converged=True):
        self.model = model
        self.loglik = loglik
        self.bic = bic
        self.trace = tuple(trace)
        self.restart_logliks = tuple(restart_logliks)
        self.dimension = dimension
        self.N = N
        self.converged = converged

    def __repr__(self):
        return '<FitResult loglik=%.4f bic=%.4f d=%s>' % (
            self.loglik, self.bic, self.dimension)


def bic_score(loglik, dim, N):
    if not N > 0:
        raise ValueError('BIC needs a positive sample size, got N=%s' % N)
    return loglik - dim / 2.0 * math.log(N)


def bic(model, dataset):
    """
    BIC of a parameterized model on a dataset: loglik - d(m) / 2 * ln N.
    """
    return bic_score(dataset_loglik(model, dataset), dimension(model),
                     dataset.N)


def lca_skeleton(variables, cardinality, latent='Y', cardinalities=None):
    """
    Latent class model skeleton: one latent variable with every observed
    variable as its child.

    Args:
        * variables (list): observed variable names
        * cardinality (int): latent cardinality
        * latent (str): latent variable name
        * cardinalities (dict): observed cardinalities (default 2)

    """
    variables = list(variables)
    if latent in variables:
        raise ValueError('latent name %r collides with an observed variable'
                         % latent)
    cardinalities = cardinalities or {}
    vs = [Latent(latent, cardinality)]
    vs.extend(Observed(x, cardinalities.get(x, 2)) for x in variables)
    return LatentTreeModel(vs, [(latent, x) for x in variables], latent)


def training_data(skeleton, dataset):
    missing = [x for x in skeleton.observed if x not in dataset.names]
    if missing:
        raise DataError('data has no column for %s' % ', '.join(missing))
    data = dataset.subset(skeleton.observed)
    if len(data) == 0 or not data.N > 0:
        raise DataError('cannot fit a model to an empty dataset')
    for x in skeleton.observed:
        if data.cardinality(x) > skeleton.cardinality(x):
            raise DataError('variable %r has %d states in the data but %d '
                            'in the model' % (x, data.cardinality(x),
                                              skeleton.cardinality(x)))
    return data.dedupe()


def _normalize_rows(counts, smoothing, fallback):
    card = counts.shape[1]
    totals = counts.sum(axis=1) + card * smoothing
    res = np.array(fallback, dtype=float, copy=True)
    ok = totals > 0
    res[ok] = (counts[ok] + smoothing) / totals[ok][:, None]
    return res


def _maximize(model, prop, weights, smoothing, free):
    cpts = {}
    for v in model.order:
        old = model.cpt(v)
        if free is not None and v not in free:
            cpts[v] = old
        elif model.parent(v) is None:
            counts = prop.root_counts(weights)[None, :]
            cpts[v] = _normalize_rows(counts, smoothing, old[None, :])[0]
        else:
            counts = prop.edge_counts(v, weights)
            cpts[v] = _normalize_rows(counts, smoothing, old)
    return model.with_cpts(cpts)


def run_em(model, data, max_iterations, tolerance, smoothing=0.0,
           free=None):
    """
    EM from a given starting point.

    Args:
        * model (LatentTreeModel): parameterized starting model
        * data (DataSet): training data over the model's observed variables
        * max_iterations (int): iteration budget
        * tolerance (float): relative improvement threshold
        * smoothing (float): M-step pseudo count
        * free (set): names whose tables are re-estimated; None means all

    Returns:
        (model, loglik, trace, converged)

    """
    evidence = dataset_evidence(model, data)
    weights = np.asarray(data.weights)
    size = len(data)

    prop = Propagation(model, evidence, size=size)
    ll = prop.total_loglik(weights)
    if np.isneginf(ll):
        raise NumericalError('data has probability zero under the '
                             'starting parameters')
    trace = [ll]
    converged = False
    for it in range(max_iterations):
        model = _maximize(model, prop, weights, smoothing, free)
        prop = Propagation(model, evidence, size=size)
        new = prop.total_loglik(weights)
        trace.append(new)
        logger.debug('iteration %d: loglik %.10f', it + 1, new)
        improvement = (new - ll) / (abs(ll) + 1.0)
        ll = new
        if improvement < tolerance:
            converged = True
            break
    return model, ll, trace, converged


def fit_em(skeleton, dataset, config=None, init=None, free=None):
    """
    Fits the parameters of a model structure by EM.

    Each restart starts from parameters drawn from a symmetric
    Dirichlet(1); the run with the highest log-likelihood is returned
    (lowest restart index on ties).

    Args:
        * skeleton (LatentTreeModel): structure and cardinalities
        * dataset (DataSet): training data; must cover every observed
            variable of the skeleton (extra columns are ignored)
        * config (EmConfig): settings
        * init (LatentTreeModel): starting parameters with the skeleton's
            structure; replaces the random restarts
        * free (iterable): only re-estimate these tables

    Returns:
        FitResult

    """
    config = config or EmConfig()
    check_model(skeleton, structure_only=True)
    data = training_data(skeleton, dataset)
    free = None if free is None else set(free)
    skeleton = skeleton.skeleton()

    if init is not None:
        if (init.variables != skeleton.variables or
                init.edges != skeleton.edges or init.root != skeleton.root):
            raise ValueError('initial model does not match the skeleton')
        check_model(init)
        starts = [lambda: init]
    else:
        def start(r):
            return lambda: skeleton.with_cpts(random_parameters(
                skeleton, substream(config.seed, 'em', r)))
        starts = [start(r) for r in range(config.restarts)]

    def run(make):
        return run_em(make(), data, config.max_iterations,
                      config.tolerance, config.smoothing, free)

    if config.progress_bar:
        bar = pyprind.ProgBar(len(starts), title='EM restarts', stream=1)

    runs = []
    if config.threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            for res in pool.map(run, starts):
                runs.append(res)
                if config.progress_bar:
                    bar.update()
    else:
        for make in starts:
            runs.append(run(make))
            if config.progress_bar:
                bar.update()

    best = 0
    for r, res in enumerate(runs):
        logger.debug('restart %d: loglik %.6f after %d iterations',
                     r, res[1], len(res[2]) - 1)
        if res[1] > runs[best][1]:
            best = r
    model, ll, trace, converged = runs[best]
    if not converged and config.max_iterations > 1:
        msg = ('EM stopped after %d iterations without reaching tolerance %g'
               % (config.max_iterations, config.tolerance))
        logger.warning(msg)
        warnings.warn(msg, ConvergenceWarning)

    dim = dimension(model)
    score = bic_score(ll, dim, data.N)
    logger.info('fitted %r: loglik %.4f, BIC %.4f', model, ll, score)
    return FitResult(model, ll, score, trace, [r[1] for r in runs], dim,
                     data.N, converged)


class LcaResult(object):

    """
    Latent class models fitted over a range of cardinalities.

    Attributes:
        * fits (dict): {cardinality: FitResult}, ascending
        * best_cardinality (int): cardinality with the highest BIC
        * best (FitResult): the selected fit
        * table (DataFrame): cardinality, loglik, dimension, bic and
            selected flag per fit

    """

    def __init__(self, fits, best_cardinality):
        self.fits = fits
        self.best_cardinality = best_cardinality
        self.best = fits[best_cardinality]
        self.table = pd.DataFrame(
            [{'cardinality': k, 'loglik': f.loglik,
              'dimension': f.dimension, 'bic': f.bic,
              'selected': k == best_cardinality}
             for k, f in fits.items()],
            columns=['cardinality', 'loglik', 'dimension', 'bic',
                     'selected'])

    def display(self):
        print(self.table.to_string(index=False))

    def __repr__(self):
        return '<LcaResult best=%d of %s>' % (self.best_cardinality,
                                               list(self.fits))


def select_by_bic(fits, tie=1e-6):
    """
    Key of the fit with the highest BIC; fits whose BIC is within tie of
    the best keep the smaller key.
    """
    best = None
    for k in sorted(fits):
        if best is None or fits[k].bic > fits[best].bic + tie:
            best = k
    return best


def fit_lca(dataset, variables=None, cardinalities=(1, 2, 3, 4),
            config=None, latent='Y'):
    """
    Latent class analysis: fits one latent class model per latent
    cardinality and selects the one with the highest BIC (ties within
    1e-6 go to the smaller cardinality).

    Args:
        * dataset (DataSet): data
        * variables (list): observed variables to model (default all)
        * cardinalities (iterable): latent cardinalities to try
        * config (EmConfig): EM settings
        * latent (str): name of the latent variable

    Returns:
        LcaResult

    """
    cards = sorted(set(int(k) for k in cardinalities))
    if not cards:
        raise ValueError('cardinality range is empty')
    if cards[0] < 1:
        raise ValueError('latent cardinalities must be >= 1, got %s' % cards)
    variables = list(dataset.names if variables is None else variables)
    if len(variables) == 1 and cards[-1] > 1:
        raise DataError('a single variable only supports latent cardinality '
                        '1, got %s' % cards)
    obs_cards = {x: dataset.cardinality(x) for x in variables}

    fits = {}
    for k in cards:
        skeleton = lca_skeleton(variables, k, latent, obs_cards)
        fits[k] = fit_em(skeleton, dataset, config)
    best = select_by_bic(fits)
    logger.info('selected latent cardinality %d (BIC %.4f)', best,
                fits[best].bic)
    return LcaResult(fits, best)
