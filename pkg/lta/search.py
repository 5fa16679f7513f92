"""
BIC guided greedy search over latent tree structures.

The search cycles through three phases (Expansion, Adjustment,
Simplification). Every phase repeatedly screens all candidate edits of the
current model with a few iterations of local EM, refits the most promising
few with full EM and keeps the best of them if the BIC improves. Expansion
candidates are ranked by BIC gain per added parameter, and a new latent
node is refined (relocations into it, state changes of the two latent
variables it joins) before it is judged. The search stops once a whole
cycle brings no improvement.
"""
from __future__ import division
import logging
import re
import warnings
from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
from itertools import combinations, count

import numpy as np
import pyprind

from lta.core import (LatentTreeModel, Latent, DataError, DataWarning,
                      MISSING, dimension, marginal, reroot, substream)
from lta.em import (EmConfig, FitResult, bic_score, fit_em, lca_skeleton,
                    run_em, select_by_bic, training_data)


logger = logging.getLogger(__name__)


EXPANSION = 'Expansion'
ADJUSTMENT = 'Adjustment'
SIMPLIFICATION = 'Simplification'
PHASES = (EXPANSION, ADJUSTMENT, SIMPLIFICATION)

# minimum BIC gain for accepting a move and tolerance for ties
BIC_TOL = 1e-9

_GENERATED = re.compile(r'^Y(\d+)$')


def next_latent_name(names):
    """
    Next free generated latent name: Y01, Y02, ...
    """
    names = set(names)
    used = [int(m.group(1)) for m in map(_GENERATED.match, names) if m]
    k = max(used) + 1 if used else 1
    while 'Y%02d' % k in names:
        k += 1
    return 'Y%02d' % k


class SearchConfig(object):

    """
    Settings of a structure search.

    Args:
        * em_config (EmConfig): settings of the full EM fits
        * screening_iterations (int): local EM iterations per candidate
        * refit_candidates (int): screened candidates refit with full EM
            in every round
        * max_latent_cardinality (int): no state is added beyond this
        * max_latent_count (int): no latent node is added beyond this
            (default: number of observed variables)
        * initial_cardinalities (tuple): the search starts from the best
            latent class model over these cardinalities
        * seed (int): seed of the candidate initialization jitter
        * threads (int): candidates screened concurrently
        * progress_bar (bool): show a progress bar over candidates

    """

    def __init__(self, em_config=None, screening_iterations=20,
                 max_latent_cardinality=10, max_latent_count=None,
                 initial_cardinalities=(1, 2, 3, 4), seed=0, threads=1,
                 progress_bar=False, refit_candidates=3):
        if int(screening_iterations) < 1:
            raise ValueError('screening_iterations must be >= 1, got %s'
                             % screening_iterations)
        if int(refit_candidates) < 1:
            raise ValueError('refit_candidates must be >= 1, got %s'
                             % refit_candidates)
        if int(max_latent_cardinality) < 2:
            raise ValueError('max_latent_cardinality must be >= 2, got %s'
                             % max_latent_cardinality)
        if max_latent_count is not None and int(max_latent_count) < 1:
            raise ValueError('max_latent_count must be >= 1, got %s'
                             % max_latent_count)
        if not initial_cardinalities:
            raise ValueError('initial_cardinalities cannot be empty')
        if int(threads) < 1:
            raise ValueError('threads must be >= 1, got %s' % threads)
        self.em_config = em_config or EmConfig(seed=seed)
        self.screening_iterations = int(screening_iterations)
        self.refit_candidates = int(refit_candidates)
        self.max_latent_cardinality = int(max_latent_cardinality)
        self.max_latent_count = (None if max_latent_count is None
                                 else int(max_latent_count))
        self.initial_cardinalities = tuple(
            k for k in sorted(set(int(k) for k in initial_cardinalities))
            if k <= self.max_latent_cardinality)
        self.seed = int(seed)
        self.threads = int(threads)
        self.progress_bar = bool(progress_bar)

    def to_dict(self):
        return {'em': self.em_config.to_dict(),
                'screening_iterations': self.screening_iterations,
                'refit_candidates': self.refit_candidates,
                'max_latent_cardinality': self.max_latent_cardinality,
                'max_latent_count': self.max_latent_count,
                'initial_cardinalities': list(self.initial_cardinalities),
                'seed': self.seed}


class SearchOperator(object):

    """
    A structure edit applied to a parameterized model.

    Calling an operator with a model and a random stream returns the
    edited model, with the tables of untouched nodes carried over, and the
    set of node names whose tables were re-initialized.

    Args:
        * latent (str): latent variable the edit is anchored at

    """

    def __init__(self, latent):
        self.latent = latent

    @property
    def name(self):
        return self.__class__.__name__

    def targets(self):
        return [self.latent]

    @property
    def descriptor(self):
        return '%s(%s)' % (self.name, ';'.join(self.targets()))

    def __call__(self, model, rng):
        raise NotImplementedError('%s not implemented!' % self.name)

    def __eq__(self, other):
        return (isinstance(other, SearchOperator) and
                self.descriptor == other.descriptor)

    def __hash__(self):
        return hash(self.descriptor)

    def __repr__(self):
        return '<%s>' % self.descriptor


def _renormalize(table):
    table = np.atleast_2d(table)
    totals = table.sum(axis=1)
    res = np.full(table.shape, 1.0 / table.shape[1])
    ok = totals > 0
    res[ok] = table[ok] / totals[ok][:, None]
    return res


class StateIntroduction(SearchOperator):

    """
    Adds a state to a latent variable by splitting its most probable state.
    """

    def __call__(self, model, rng):
        y = self.latent
        card = model.cardinality(y)
        s = int(np.argmax(marginal(model, [y])))
        variables = [v.with_cardinality(card + 1) if v.name == y else v
                     for v in model.variables]
        cpts = model.cpts
        own = cpts[y]
        if model.parent(y) is None:
            new = np.append(own, own[s] / 2.0)
            new[s] /= 2.0
        else:
            new = np.column_stack([own, own[:, s] / 2.0])
            new[:, s] /= 2.0
        cpts[y] = new
        for c in model.children(y):
            t = cpts[c]
            jitter = rng.dirichlet(np.ones(t.shape[1]))
            cpts[c] = np.vstack([t, 0.9 * t[s] + 0.1 * jitter])
        changed = set([y]) | set(model.children(y))
        return (LatentTreeModel(variables, model.edges, model.root, cpts),
                changed)


class StateDeletion(SearchOperator):

    """
    Removes the least probable state of a latent variable.
    """

    def __call__(self, model, rng):
        y = self.latent
        card = model.cardinality(y)
        if card < 2:
            raise ValueError('%r has a single state' % y)
        d = int(np.argmin(marginal(model, [y])))
        variables = [v.with_cardinality(card - 1) if v.name == y else v
                     for v in model.variables]
        cpts = model.cpts
        if model.parent(y) is None:
            cpts[y] = _renormalize(np.delete(cpts[y], d))[0]
        else:
            cpts[y] = _renormalize(np.delete(cpts[y], d, axis=1))
        for c in model.children(y):
            cpts[c] = np.delete(cpts[c], d, axis=0)
        changed = set([y]) | set(model.children(y))
        return (LatentTreeModel(variables, model.edges, model.root, cpts),
                changed)


class NodeIntroduction(SearchOperator):

    """
    Inserts a new binary latent variable between a latent variable and two
    of its neighbors.

    Args:
        * latent (str): latent variable losing the two neighbors
        * pair (tuple): the two neighbors moved below the new node

    """

    def __init__(self, latent, pair):
        super(NodeIntroduction, self).__init__(latent)
        self.pair = tuple(sorted(pair))

    def targets(self):
        return [self.latent, ','.join(self.pair)]

    def __call__(self, model, rng):
        y = self.latent
        a, b = self.pair
        m = reroot(model, y)
        h = next_latent_name(m.names)
        variables = list(m.variables) + [Latent(h, 2)]
        edges = [e for e in m.edges
                 if set(e) != set([y, a]) and set(e) != set([y, b])]
        edges.extend([(y, h), (h, a), (h, b)])
        cpts = m.cpts
        cpts[h] = rng.dirichlet(np.ones(2), size=m.cardinality(y))
        for x in (a, b):
            cpts[x] = rng.dirichlet(np.ones(m.cardinality(x)), size=2)
        return (LatentTreeModel(variables, edges, y, cpts),
                set([h, a, b]))


class NodeDeletion(SearchOperator):

    """
    Removes a latent variable; its other neighbors are reattached to an
    adjacent latent variable.

    Args:
        * latent (str): latent variable to remove (degree at most 3)
        * target (str): adjacent latent variable receiving the neighbors

    """

    def __init__(self, latent, target):
        super(NodeDeletion, self).__init__(latent)
        self.target = target

    def targets(self):
        return [self.latent, self.target]

    def __call__(self, model, rng):
        y, t = self.latent, self.target
        m = reroot(model, t)
        kids = m.children(y)
        variables = [v for v in m.variables if v.name != y]
        edges = [e for e in m.edges if y not in e]
        edges.extend((t, k) for k in kids)
        cpts = m.cpts
        del cpts[y]
        for k in kids:
            cpts[k] = m.cpt(y).dot(m.cpt(k))
        return LatentTreeModel(variables, edges, t, cpts), set(kids)


class NodeRelocation(SearchOperator):

    """
    Moves a neighbor of a latent variable to an adjacent latent variable.

    Args:
        * node (str): neighbor being moved
        * source (str): latent variable currently holding the node
        * destination (str): latent neighbor of source receiving it

    """

    def __init__(self, node, source, destination):
        super(NodeRelocation, self).__init__(source)
        self.node = node
        self.destination = destination

    def targets(self):
        return [self.node, self.latent, self.destination]

    def __call__(self, model, rng):
        x, y, t = self.node, self.latent, self.destination
        m = reroot(model, t)
        edges = [e for e in m.edges if set(e) != set([y, x])]
        edges.append((t, x))
        cpts = m.cpts
        cpts[x] = m.cpt(y).dot(m.cpt(x))
        return (LatentTreeModel(m.variables, edges, t, cpts), set([x]))


def enumerate_candidates(model, phase, config=None):
    """
    All edits of a phase applicable to the model, sorted by descriptor.

    Args:
        * model (LatentTreeModel): current model
        * phase (str): Expansion, Adjustment or Simplification
        * config (SearchConfig): supplies the cardinality and latent
            count limits

    """
    if phase not in PHASES:
        raise ValueError('unknown phase %r, expected one of %s'
                         % (phase, ', '.join(PHASES)))
    config = config or SearchConfig()
    max_count = config.max_latent_count or len(model.observed)
    latents = sorted(model.latents)
    res = []

    if phase == EXPANSION:
        for y in latents:
            if model.cardinality(y) < config.max_latent_cardinality:
                res.append(StateIntroduction(y))
        if len(latents) < max_count:
            for y in latents:
                nb = model.neighbors(y)
                if len(nb) >= 3:
                    res.extend(NodeIntroduction(y, p)
                               for p in combinations(nb, 2))

    elif phase == ADJUSTMENT:
        for y in latents:
            nb = model.neighbors(y)
            if len(nb) < 3:
                continue
            for t in nb:
                if not model[t].is_latent:
                    continue
                res.extend(NodeRelocation(x, y, t) for x in nb if x != t)

    else:
        for y in latents:
            if model.cardinality(y) >= 2:
                res.append(StateDeletion(y))
        for y in latents:
            nb = model.neighbors(y)
            if len(nb) > 3:
                continue
            res.extend(NodeDeletion(y, t) for t in nb if model[t].is_latent)

    return sorted(res, key=lambda op: op.descriptor)


SearchStep = namedtuple('SearchStep',
                        ['phase', 'operator', 'bic_before', 'bic_after'])


class Candidate(namedtuple('Candidate', ['moves', 'model', 'loglik', 'bic',
                                         'dimension', 'trace',
                                         'converged'])):

    """
    A scored model reached from the current one by a sequence of edits.
    """

    __slots__ = ()

    @property
    def operator(self):
        return self.moves[0]

    @property
    def descriptor(self):
        return ' + '.join(op.descriptor for op in self.moves)


class SearchResult(object):

    """
    Outcome of a structure search.

    Attributes:
        * initial (FitResult): starting latent class model
        * result (FitResult): best model found
        * steps (list): accepted SearchStep entries in order

    """

    def __init__(self, initial, result, steps):
        self.initial = initial
        self.result = result
        self.steps = list(steps)

    @property
    def model(self):
        return self.result.model

    @property
    def bic(self):
        return self.result.bic

    def log_lines(self):
        return ['%s\t%s\t%.6f\t%.6f' % (s.phase, s.operator, s.bic_before,
                                        s.bic_after)
                for s in self.steps]

    def to_text(self):
        lines = ['# initial %s BIC %.6f' % (self.initial.model.root,
                                            self.initial.bic)]
        lines.extend(self.log_lines())
        lines.append('# final BIC %.6f' % self.result.bic)
        return '\n'.join(lines) + '\n'

    def __repr__(self):
        return '<SearchResult steps=%d bic=%.4f>' % (len(self.steps),
                                                      self.bic)




def _better(a, b):
    """
    True if candidate a ranks before candidate b.
    """
    if b is None:
        return True
    if a.bic > b.bic + BIC_TOL:
        return True
    if a.bic < b.bic - BIC_TOL:
        return False
    if a.dimension != b.dimension:
        return a.dimension < b.dimension
    return a.descriptor < b.descriptor


def gain_per_parameter(candidate, current):
    """
    BIC gain of a candidate over the current fit divided by the number of
    parameters it adds (at least one).
    """
    added = candidate.dimension - dimension(current.model)
    return (candidate.bic - current.bic) / max(added, 1)


def rank_candidates(candidates, current, phase):
    """
    Orders screened candidates for refitting: by gain per added parameter
    in the Expansion phase and by BIC otherwise, then by dimension and
    descriptor.
    """
    def by_gain(c):
        return (-gain_per_parameter(c, current), c.dimension, c.descriptor)

    def by_bic(c):
        return (-c.bic, c.dimension, c.descriptor)

    return sorted(candidates, key=by_gain if phase == EXPANSION else by_bic)


def refinements(model, latent, new, config):
    """
    Follow-up edits of a node introduction: moving another neighbor of the
    split latent variable below the new one, or adding or removing a state
    of either of them.
    """
    res = []
    nb = model.neighbors(latent)
    if len(nb) >= 3:
        res.extend(NodeRelocation(x, latent, new) for x in nb if x != new)
    for y in (latent, new):
        card = model.cardinality(y)
        if card >= 2:
            res.append(StateDeletion(y))
        if card < config.max_latent_cardinality:
            res.append(StateIntroduction(y))
    return sorted(res, key=lambda op: op.descriptor)


def _warn_degenerate(dataset):
    for i, name in enumerate(dataset.names):
        col = dataset.values[:, i]
        if len(np.unique(col[col != MISSING])) <= 1:
            msg = 'variable %r takes a single value in the data' % name
            logger.warning(msg)
            warnings.warn(msg, DataWarning)


def search(dataset, config=None):
    """
    Learns a latent tree model by greedy BIC search.

    The search starts from the latent class model with the best BIC over
    config.initial_cardinalities and only accepts moves that raise the BIC
    by more than 1e-9. A node introduction is accepted together with the
    refinements that followed it, as one logged step.

    Args:
        * dataset (DataSet): training data (at least two variables)
        * config (SearchConfig): settings

    Returns:
        SearchResult

    """
    config = config or SearchConfig()
    if len(dataset.names) < 2:
        raise DataError('structure search needs at least two variables')
    if len(dataset) == 0 or not dataset.N > 0:
        raise DataError('cannot search on an empty dataset')
    _warn_degenerate(dataset)
    em = config.em_config

    latent = next_latent_name(dataset.names)
    cards = {x: dataset.cardinality(x) for x in dataset.names}
    lcms = {}
    for k in config.initial_cardinalities:
        lcms[k] = fit_em(lca_skeleton(dataset.names, k, latent, cards),
                         dataset, em)
    initial = lcms[select_by_bic(lcms)]
    logger.info('initial model %r, BIC %.4f', initial.model, initial.bic)
    data = training_data(initial.model, dataset)
    N = data.N

    def screen(args):
        key, moves, op, model = args
        rng = substream(config.seed, 'search', *(key + (op.descriptor,)))
        edited, changed = op(model, rng)
        edited, ll, trace, converged = run_em(
            edited, data, config.screening_iterations, em.tolerance,
            em.smoothing, free=changed)
        dim = dimension(edited)
        return Candidate(moves + (op,), edited, ll, bic_score(ll, dim, N),
                         dim, trace, converged)

    def screen_all(key, moves, model, ops, title):
        jobs = [(key, moves, op, model) for op in ops]
        if config.threads > 1:
            with ThreadPoolExecutor(config.threads) as pool:
                return list(pool.map(screen, jobs))
        if config.progress_bar:
            bar = pyprind.ProgBar(len(jobs), title=title, stream=1)
        res = []
        for job in jobs:
            res.append(screen(job))
            if config.progress_bar:
                bar.update()
        return res

    def refit(cand):
        model, ll, trace, converged = run_em(
            cand.model, data, em.max_iterations, em.tolerance, em.smoothing)
        dim = dimension(model)
        return cand._replace(model=model, loglik=ll,
                             bic=bic_score(ll, dim, N), dimension=dim,
                             trace=trace, converged=converged)

    def refine(cand, base, step):
        y = cand.operator.latent
        new = [h for h in cand.model.latents if h not in base.latents][0]
        key = (step, 'refine', cand.descriptor)
        for rnd in count():
            ops = refinements(cand.model, y, new, config)
            if not ops:
                return cand
            best = None
            for c in screen_all(key + (rnd,), cand.moves, cand.model, ops,
                                'Refinement'):
                if _better(c, best):
                    best = c
            best = refit(best)
            if best.bic <= cand.bic + BIC_TOL:
                return cand
            logger.debug('%s: refined BIC %.4f', best.descriptor, best.bic)
            cand = best

    current = initial
    steps = []
    step = 0
    improved = True
    while improved:
        improved = False
        for phase in PHASES:
            while True:
                ops = enumerate_candidates(current.model, phase, config)
                if not ops:
                    break
                cands = screen_all((step,), (), current.model, ops, phase)
                for cand in cands:
                    logger.debug('%s: screened BIC %.4f', cand.descriptor,
                                 cand.bic)
                ranked = rank_candidates(cands, current, phase)
                best = None
                for cand in ranked[:config.refit_candidates]:
                    cand = refit(cand)
                    if isinstance(cand.operator, NodeIntroduction):
                        cand = refine(cand, current.model, step)
                    if _better(cand, best):
                        best = cand
                step += 1

                if best.bic <= current.bic + BIC_TOL:
                    logger.debug('%s rejected: BIC %.4f', best.descriptor,
                                 best.bic)
                    break
                steps.append(SearchStep(phase, best.descriptor, current.bic,
                                        best.bic))
                logger.info('%s %s: BIC %.4f -> %.4f', phase,
                            best.descriptor, current.bic, best.bic)
                current = FitResult(best.model, best.loglik, best.bic,
                                    best.trace, (best.loglik,),
                                    best.dimension, N, best.converged)
                improved = True

    return SearchResult(initial, current, steps)
