"""
Contains the core building blocks: variables, latent tree models and data sets.
"""
from __future__ import division
import math
import string
import zlib
from collections import OrderedDict

import cython as cy
import networkx as nx
import numpy as np
import pandas as pd


OBSERVED = 'observed'
LATENT = 'latent'

# marker for a missing value in a DataSet
MISSING = -1

TOL = 1e-9
# largest joint table marginal() will build
MAX_TABLE_SIZE = 2 ** 20
# records per forward sampling substream
SAMPLE_BLOCK = 4096

_LETTERS = string.ascii_letters


class DataError(ValueError):

    """
    Raised when data does not fit a model or a file cannot be parsed.
    """


class ModelFormatError(DataError):

    """
    Raised when a model, group spec or rule file violates its schema.
    """


class InvalidModelError(ValueError):

    """
    Raised when an operation receives a model that fails validate().
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super(InvalidModelError, self).__init__(
            'invalid model: %s' % '; '.join(self.violations))


class NumericalError(ArithmeticError):

    """
    Raised when a computation breaks down numerically (zero probability
    data, infinite scores, degenerate priors).
    """


class DataWarning(UserWarning):
    pass


class ConvergenceWarning(UserWarning):
    pass


@cy.locals(x=cy.double)
def is_zero(x):
    """
    Test for zero that is robust against floating point precision errors
    """
    return abs(x) < TOL


def substream(seed, *names):
    """
    Returns a numpy Generator for the named substream of a seed.

    All randomness in the package is derived from a single integer seed.
    Each consumer asks for its own substream, e.g. substream(seed, 'em', 3)
    for the fourth EM restart, so results do not depend on the order in
    which consumers run.

    Args:
        * seed (int): Non-negative base seed.
        * names: Any number of str or int keys naming the substream.

    """
    seed = int(seed)
    if seed < 0:
        raise ValueError('seed must be non-negative, got %s' % seed)
    entropy = [seed] + [zlib.crc32(str(n).encode('utf-8')) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def state_labels(cardinality):
    return ['s%d' % i for i in range(cardinality)]


class Variable(object):

    """
    A categorical variable of a latent tree model.

    Args:
        * name (str): Unique name
        * cardinality (int): Number of states
        * kind (str): 'observed' or 'latent'

    """

    __slots__ = ('name', 'cardinality', 'kind')

    def __init__(self, name, cardinality=2, kind=OBSERVED):
        if kind not in (OBSERVED, LATENT):
            raise ValueError('unknown variable kind %r' % (kind,))
        self.name = str(name)
        self.cardinality = int(cardinality)
        self.kind = kind

    @property
    def is_latent(self):
        return self.kind == LATENT

    def with_cardinality(self, cardinality):
        return Variable(self.name, cardinality, self.kind)

    def __eq__(self, other):
        return (isinstance(other, Variable) and
                (self.name, self.cardinality, self.kind) ==
                (other.name, other.cardinality, other.kind))

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash((self.name, self.cardinality, self.kind))

    def __repr__(self):
        return '<Variable %s %s (%d)>' % (self.kind, self.name,
                                          self.cardinality)


def Latent(name, cardinality=2):
    return Variable(name, cardinality, LATENT)


def Observed(name, cardinality=2):
    return Variable(name, cardinality, OBSERVED)


class LatentTreeModel(object):

    """
    A latent tree model: an undirected tree over categorical variables with
    observed variables at the leaves, parameterized by orienting the tree
    away from a latent root.

    The model is immutable. A model built without cpts is a skeleton: it
    carries structure and cardinalities only, which is what the learners
    take as input.

    Args:
        * variables (list): Variable objects. Their order is kept and used
            as the column order whenever one is needed.
        * edges (list): Pairs of variable names.
        * root (str): Name of the root (a latent variable).
        * cpts (dict): {name: table}. The root's table is its marginal
            distribution (1-d). Every other table is 2-d with one row per
            state of the parent: table[i, j] = P(v=j | parent=i).

    Attributes:
        * root (str): Root name
        * observed (tuple): Observed variable names
        * latents (tuple): Latent variable names
        * order (tuple): Variables reachable from the root, root first,
            children sorted by name
        * edges (tuple): Sorted name pairs

    """

    def __init__(self, variables, edges, root, cpts=None):
        self._vars = OrderedDict()
        for v in variables:
            if v.name in self._vars:
                raise ValueError('duplicate variable name %r' % v.name)
            self._vars[v.name] = v

        pairs = []
        for e in edges:
            a, b = e
            for n in (a, b):
                if n not in self._vars:
                    raise ValueError('edge %s-%s references unknown '
                                     'variable %r' % (a, b, n))
            pairs.append(tuple(sorted((str(a), str(b)))))
        self.edges = tuple(sorted(pairs))
        self.root = str(root)

        self._graph = nx.MultiGraph()
        self._graph.add_nodes_from(self._vars)
        self._graph.add_edges_from(self.edges)

        # orient away from the root; children are visited in name order
        self._parent = {}
        self._children = {n: [] for n in self._vars}
        order = []
        if self.root in self._vars:
            order.append(self.root)
            seen = set([self.root])
            i = 0
            while i < len(order):
                u = order[i]
                i += 1
                for w in sorted(set(self._graph.neighbors(u))):
                    if w not in seen:
                        seen.add(w)
                        self._parent[w] = u
                        self._children[u].append(w)
                        order.append(w)
        self.order = tuple(order)

        if cpts is None:
            self._cpts = None
        else:
            self._cpts = {}
            for name, table in cpts.items():
                arr = np.array(table, dtype=float)
                arr.setflags(write=False)
                self._cpts[str(name)] = arr

        self._violations = None
        self._structure_violations = None

    def __getitem__(self, key):
        return self._vars[key]

    def __contains__(self, key):
        return key in self._vars

    def __len__(self):
        return len(self._vars)

    @property
    def variables(self):
        return tuple(self._vars.values())

    @property
    def names(self):
        return tuple(self._vars)

    @property
    def observed(self):
        return tuple(n for n, v in self._vars.items() if not v.is_latent)

    @property
    def latents(self):
        return tuple(n for n, v in self._vars.items() if v.is_latent)

    @property
    def is_skeleton(self):
        return self._cpts is None

    @property
    def cpts(self):
        """
        Dict of parameter tables (empty for a skeleton).
        """
        return dict(self._cpts or {})

    def cardinality(self, name):
        return self._vars[name].cardinality

    def cpt(self, name):
        if self._cpts is None:
            raise ValueError('model skeleton has no parameters')
        return self._cpts[name]

    def parent(self, name):
        return self._parent.get(name)

    def children(self, name):
        return tuple(self._children[name])

    def neighbors(self, name):
        return tuple(sorted(set(self._graph.neighbors(name))))

    def degree(self, name):
        return self._graph.degree(name)

    def members(self, name):
        """
        Names of the variable and everything below it.
        """
        res = [name]
        for c in self._children[name]:
            res.extend(self.members(c))
        return res

    def full_name(self, name):
        parent = self._parent.get(name)
        if parent is None:
            return name
        return '%s>%s' % (self.full_name(parent), name)

    def skeleton(self):
        """
        Copy of the structure without parameters.
        """
        return LatentTreeModel(self.variables, self.edges, self.root)

    def with_cpts(self, cpts):
        """
        Copy of the structure carrying the given parameter tables.
        """
        return LatentTreeModel(self.variables, self.edges, self.root, cpts)

    def to_dot(self):
        """
        Represent the model structure in DOT format. Latent variables carry
        their cardinality in the label.
        """
        lines = ['graph {']
        for v in self.variables:
            if v.is_latent:
                lines.append('\t"%s" [label="%s (%d)", shape=ellipse];'
                             % (v.name, v.name, v.cardinality))
            else:
                lines.append('\t"%s" [shape=box];' % v.name)
        for a, b in self.edges:
            lines.append('\t"%s" -- "%s";' % (a, b))
        lines.append('}')
        return '\n'.join(lines)

    def __repr__(self):
        return '<LatentTreeModel root=%s latents=%d observed=%d%s>' % (
            self.root, len(self.latents), len(self.observed),
            ' skeleton' if self.is_skeleton else '')

    # validation is cached since models are immutable
    def _validate(self, structure_only):
        if structure_only:
            if self._structure_violations is None:
                self._structure_violations = _structure_violations(self)
            return list(self._structure_violations)
        if self._violations is None:
            res = list(self.validate(structure_only=True))
            res.extend(_parameter_violations(self))
            self._violations = res
        return list(self._violations)

    def validate(self, structure_only=False):
        return self._validate(structure_only)

    @property
    def is_valid(self):
        return not self._validate(False)


def _structure_violations(model):
    res = []
    names = model.names
    if model.root not in model:
        res.append('root %r is not a variable of the model' % model.root)
    elif not model[model.root].is_latent:
        res.append('root %r is not latent' % model.root)

    for v in model.variables:
        if v.is_latent and v.cardinality < 1:
            res.append('latent variable %r has cardinality %d < 1'
                       % (v.name, v.cardinality))
        elif not v.is_latent and v.cardinality < 2:
            res.append('observed variable %r has cardinality %d < 2'
                       % (v.name, v.cardinality))

    seen = set()
    for a, b in model.edges:
        if a == b:
            res.append('edge %s-%s is a self loop' % (a, b))
        elif (a, b) in seen:
            res.append('edge %s-%s appears more than once' % (a, b))
        seen.add((a, b))

    if len(model.edges) != len(names) - 1:
        res.append('a tree over %d variables needs %d edges, found %d'
                   % (len(names), len(names) - 1, len(model.edges)))

    simple = nx.Graph(model._graph)
    for cycle in nx.cycle_basis(simple):
        res.append('edges form a cycle %s' % '-'.join(cycle + cycle[:1]))

    reached = set(model.order)
    for n in names:
        if n not in reached and model.root in model:
            res.append('variable %r is not connected to root %r'
                       % (n, model.root))

    for v in model.variables:
        d = len(set(model._graph.neighbors(v.name)))
        if not v.is_latent and d != 1:
            res.append('observed variable %r must be a leaf, has degree %d'
                       % (v.name, d))
        elif v.is_latent and d < 2 and not _single_variable_baseline(model):
            res.append('latent variable %r must be internal, has degree %d'
                       % (v.name, d))
    return res


def _single_variable_baseline(model):
    # one observed variable under a one-state latent: its own marginal
    return (len(model.variables) == 2 and len(model.observed) == 1 and
            all(model.cardinality(h) == 1 for h in model.latents))


def _parameter_violations(model):
    if model._cpts is None:
        return ['model has no parameter tables']
    res = []
    for name in model._cpts:
        if name not in model:
            res.append('table given for unknown variable %r' % name)
    for v in model.variables:
        table = model._cpts.get(v.name)
        if table is None:
            res.append('no table for %r' % v.name)
            continue
        parent = model.parent(v.name)
        if parent is None:
            expected = (v.cardinality,)
        else:
            expected = (model.cardinality(parent), v.cardinality)
        if table.shape != expected:
            res.append('table for %r has shape %s, expected %s'
                       % (v.name, table.shape, expected))
            continue
        if not np.all(np.isfinite(table)):
            res.append('table for %r has non-finite entries' % v.name)
            continue
        if np.any(table < 0):
            res.append('table for %r has negative entries' % v.name)
        if parent is None:
            total = table.sum()
            if not is_zero(total - 1.0):
                res.append('distribution P(%s) sums to %.12g'
                           % (v.name, total))
        else:
            labels = state_labels(model.cardinality(parent))
            for i, total in enumerate(table.sum(axis=1)):
                if not is_zero(total - 1.0):
                    res.append('distribution P(%s|%s=%s) sums to %.12g'
                               % (v.name, parent, labels[i], total))
    return res


def validate(model, structure_only=False):
    """
    Returns a list of violation descriptions; empty iff the model is a
    valid latent tree model. Violations are data, nothing is raised.

    Args:
        * model (LatentTreeModel): model to check
        * structure_only (bool): skip parameter table checks (skeletons)

    """
    return model.validate(structure_only=structure_only)


def check_model(model, structure_only=False):
    violations = model.validate(structure_only=structure_only)
    if violations:
        raise InvalidModelError(violations)


def dimension(model):
    """
    Number of free parameters d(m) used by the BIC penalty.
    """
    check_model(model, structure_only=True)
    res = model.cardinality(model.root) - 1
    for name in model.order[1:]:
        res += ((model.cardinality(name) - 1) *
                model.cardinality(model.parent(name)))
    return res


def random_parameters(model, rng, alpha=1.0):
    """
    Draws every distribution of the model from a symmetric Dirichlet.

    Args:
        * model (LatentTreeModel): model or skeleton providing structure
        * rng (numpy.random.Generator): random stream
        * alpha (float): Dirichlet concentration

    """
    cpts = {}
    for name in model.order:
        card = model.cardinality(name)
        parent = model.parent(name)
        if parent is None:
            cpts[name] = rng.dirichlet(np.full(card, alpha))
        else:
            cpts[name] = rng.dirichlet(np.full(card, alpha),
                                       size=model.cardinality(parent))
    return cpts


def reroot(model, new_root):
    """
    Returns an equivalent model rooted at another latent variable.

    Tables along the path between the old and new root are reversed with
    Bayes rule; every other table is kept as is.

    Args:
        * model (LatentTreeModel): valid parameterized model
        * new_root (str): name of a latent variable

    """
    if new_root not in model:
        raise ValueError('%r is not a variable of the model' % new_root)
    if not model[new_root].is_latent:
        raise ValueError('cannot root the model at observed variable %r'
                         % new_root)
    check_model(model)
    if new_root == model.root:
        return model

    path = [new_root]
    while path[-1] != model.root:
        path.append(model.parent(path[-1]))
    path.reverse()

    cpts = model.cpts
    m = cpts[model.root]
    for up, down in zip(path[:-1], path[1:]):
        joint = m[:, None] * cpts[down]
        m = joint.sum(axis=0)
        rev = np.empty(joint.T.shape)
        for j in range(len(m)):
            if m[j] > 0:
                rev[j] = joint[:, j] / m[j]
            else:
                # unreachable state, any distribution keeps the joint
                rev[j] = 1.0 / joint.shape[0]
        cpts[up] = rev
    cpts[new_root] = m / m.sum()
    return LatentTreeModel(model.variables, model.edges, new_root, cpts)


def _einsum(factors, out):
    letters = {}

    def idx(names):
        res = []
        for n in names:
            if n not in letters:
                if len(letters) >= len(_LETTERS):
                    raise ValueError('too many variables in one table')
                letters[n] = _LETTERS[len(letters)]
            res.append(letters[n])
        return ''.join(res)

    spec = ','.join(idx(names) for names, _ in factors)
    spec += '->' + idx(out)
    return np.einsum(spec, *[t for _, t in factors], optimize=True)


def marginal(model, subset, max_size=MAX_TABLE_SIZE):
    """
    Exact joint distribution of a few variables.

    Variables outside the subset are summed out by variable elimination
    along the tree, leaves first.

    Args:
        * model (LatentTreeModel): valid parameterized model
        * subset (list): variable names; the result has one axis per name
            in this order
        * max_size (int): largest table allowed

    Returns:
        numpy array with table[i, j, ...] = P(subset[0]=i, subset[1]=j, ...)

    """
    subset = list(subset)
    for n in subset:
        if n not in model:
            raise DataError('unknown variable %r' % n)
    if len(set(subset)) != len(subset):
        raise ValueError('subset names must be distinct: %s' % subset)
    size = 1
    for n in subset:
        size *= model.cardinality(n)
    if size > max_size:
        raise ValueError('joint table over %d variables has %d entries, '
                         'limit is %d' % (len(subset), size, max_size))
    check_model(model)

    keep = set(subset)
    relevant = {}
    for name in reversed(model.order):
        relevant[name] = (name in keep or
                          any(relevant[c] for c in model.children(name)))

    def collect(v):
        factors = []
        for c in model.children(v):
            if not relevant[c]:
                continue
            names, table = collect(c)
            out = [v] + [n for n in names if n != c or c in keep]
            factors.append((out, _einsum([((v, c), model.cpt(c)),
                                          (names, table)], out)))
        if not factors:
            return [v], np.ones(model.cardinality(v))
        out = [v]
        for names, _ in factors:
            out.extend(n for n in names if n != v)
        return out, _einsum(factors, out)

    names, table = collect(model.root)
    if not subset:
        return np.array(1.0)
    return _einsum([((model.root,), model.cpt(model.root)),
                    (names, table)], subset)


def _sample_states(model, n, seed):
    states = {name: np.empty(n, dtype=np.int64) for name in model.order}
    for block, start in enumerate(range(0, n, SAMPLE_BLOCK)):
        rng = substream(seed, 'sample', block)
        stop = min(n, start + SAMPLE_BLOCK)
        m = stop - start
        for name in model.order:
            card = model.cardinality(name)
            u = rng.random(m)
            parent = model.parent(name)
            if parent is None:
                cum = np.cumsum(model.cpt(name))[None, :]
            else:
                cum = np.cumsum(model.cpt(name), axis=1)
                cum = cum[states[parent][start:stop]]
            s = (cum <= u[:, None]).sum(axis=1)
            states[name][start:stop] = np.minimum(s, card - 1)
    return states


def forward_sample(model, n, seed, include_latent=False):
    """
    Draws complete records from the model, root first along the tree.

    Records are drawn in fixed-size blocks, each from its own substream of
    the seed, so the result depends on the seed only.

    Args:
        * model (LatentTreeModel): valid parameterized model
        * n (int): number of records
        * seed (int): base seed
        * include_latent (bool): also emit the latent columns

    Returns:
        DataSet with the observed columns (in model order)

    """
    n = int(n)
    if n < 0:
        raise ValueError('n cannot be negative')
    check_model(model)
    states = _sample_states(model, n, seed)
    names = [v.name for v in model.variables
             if include_latent or not v.is_latent]
    values = np.column_stack([states[x] for x in names]) if names \
        else np.empty((n, 0), dtype=np.int64)
    values = values.reshape(n, len(names))
    return DataSet(names, values,
                   cardinalities={x: model.cardinality(x) for x in names})


class DataSet(object):

    """
    Weighted records of categorical values, possibly with missing entries.

    Args:
        * names (list): Column names
        * values (array): Integer matrix, one row per record; MISSING (-1)
            marks a missing value
        * weights (array): Positive record weights (default 1)
        * cardinalities (dict): {name: cardinality}; inferred from the data
            when not given (at least 2)

    Attributes:
        * names (tuple): Column names
        * values (ndarray): Read-only value matrix
        * weights (ndarray): Read-only weights
        * N (float): Total weight

    """

    def __init__(self, names, values, weights=None, cardinalities=None):
        self.names = tuple(str(n) for n in names)
        if len(set(self.names)) != len(self.names):
            dup = sorted(set(n for n in self.names
                             if self.names.count(n) > 1))
            raise DataError('duplicate variable names: %s' % ', '.join(dup))

        values = np.asarray(values)
        if values.size == 0 and values.ndim != 2:
            values = values.reshape(0, len(self.names))
        if values.ndim != 2 or values.shape[1] != len(self.names):
            raise DataError('value matrix has shape %s, expected %d columns'
                            % (values.shape, len(self.names)))
        self.values = np.array(values, dtype=np.int64)
        if np.any(self.values < MISSING):
            raise DataError('negative state index in data')

        if weights is None:
            weights = np.ones(len(self.values))
        weights = np.array(weights, dtype=float)
        if weights.shape != (len(self.values),):
            raise DataError('%d weights given for %d records'
                            % (len(weights), len(self.values)))
        if np.any(~np.isfinite(weights)) or np.any(weights <= 0):
            raise DataError('record weights must be positive reals')
        self.weights = weights

        cards = {}
        for i, n in enumerate(self.names):
            col = self.values[:, i]
            top = int(col.max()) + 1 if len(col) else 0
            given = (cardinalities or {}).get(n)
            if given is None:
                cards[n] = max(2, top)
            else:
                if top > given:
                    raise DataError('variable %r has state %d outside its '
                                    'cardinality %d' % (n, top - 1, given))
                cards[n] = int(given)
        self.cardinalities = cards

        self.values.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def N(self):
        return math.fsum(self.weights)

    def __len__(self):
        return len(self.values)

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError('variable %r is not in the data' % name)

    def column(self, name):
        return self.values[:, self.index(name)]

    def cardinality(self, name):
        self.index(name)
        return self.cardinalities[name]

    def subset(self, names):
        """
        DataSet restricted to the given columns (same records).
        """
        idx = [self.index(n) for n in names]
        return DataSet(names, self.values[:, idx], self.weights,
                       {n: self.cardinalities[n] for n in names})

    def dedupe(self):
        """
        Collapses identical records into one weighted record. Rows come
        out in lexicographic order.
        """
        if len(self) == 0:
            return self
        rows, inverse = np.unique(self.values, axis=0, return_inverse=True)
        weights = np.bincount(np.ravel(inverse), weights=self.weights,
                              minlength=len(rows))
        return DataSet(self.names, rows, weights, self.cardinalities)

    def to_frame(self, weight_column='_weight'):
        """
        DataFrame with nullable integer columns; weights are added as a
        column unless every weight is 1.
        """
        frame = pd.DataFrame({
            n: pd.array(np.where(self.values[:, i] == MISSING, None,
                                 self.values[:, i]).tolist(), dtype='Int64')
            for i, n in enumerate(self.names)}, columns=list(self.names))
        if np.any(self.weights != 1.0):
            frame[weight_column] = self.weights
        return frame

    @classmethod
    def from_frame(cls, frame, cardinalities=None, weight_column='_weight'):
        names = [c for c in frame.columns if c != weight_column]
        weights = None
        if weight_column in frame.columns:
            weights = frame[weight_column].to_numpy(dtype=float)
        sub = frame[names]
        values = sub.fillna(MISSING).to_numpy(dtype=np.int64) \
            if len(names) else np.empty((len(frame), 0))
        return cls(names, values, weights, cardinalities)

    def __repr__(self):
        return '<DataSet %d records x %d variables, N=%g>' % (
            len(self), len(self.names), self.N)
