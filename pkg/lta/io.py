"""
Reading and writing data sets, models, feature group specs, rules, report
tables and run manifests.
"""
from __future__ import division
import csv
import datetime
import hashlib
import json
import logging
import math
import os

import networkx as nx
import numpy as np
import pandas as pd

from lta.core import (LatentTreeModel, Variable, OBSERVED, LATENT, MISSING,
                      DataError, DataSet, ModelFormatError)
from lta.joint import AUTO, FeatureGroup, FeatureGroupSpec
from lta.rules import ClassificationRule


logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
WEIGHT_COLUMN = '_weight'
FLOAT_FORMAT = '%.6f'


def parse_dataset(path, dedupe=False):
    """
    Reads a CSV data file.

    The first row names the variables; cells hold integer state indices,
    an empty cell is a missing value. An optional '_weight' column holds
    positive record weights.

    Args:
        * path (str): CSV file
        * dedupe (bool): collapse identical records into weights

    Returns:
        DataSet

    """
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError('%s: empty file' % path)
        seen = set()
        for h in header:
            if not h:
                raise DataError('%s:1: empty column name' % path)
            if h in seen:
                raise DataError('%s:1: duplicate column name %r' % (path, h))
            seen.add(h)
        wcol = header.index(WEIGHT_COLUMN) if WEIGHT_COLUMN in seen else None
        names = [h for h in header if h != WEIGHT_COLUMN]

        rows = []
        weights = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError('%s:%d: expected %d fields, found %d'
                                % (path, line, len(header), len(row)))
            values = []
            for i, cell in enumerate(row):
                cell = cell.strip()
                if i == wcol:
                    try:
                        w = float(cell)
                    except ValueError:
                        raise DataError('%s:%d: weight %r is not a number'
                                        % (path, line, cell))
                    if not (math.isfinite(w) and w > 0):
                        raise DataError('%s:%d: weight %r is not positive'
                                        % (path, line, cell))
                    weights.append(w)
                    continue
                if cell == '':
                    values.append(MISSING)
                    continue
                try:
                    v = int(cell)
                except ValueError:
                    raise DataError('%s:%d: value %r in column %r is not an '
                                    'integer' % (path, line, cell,
                                                 header[i]))
                if v < 0:
                    raise DataError('%s:%d: negative value %d in column %r'
                                    % (path, line, v, header[i]))
                values.append(v)
            rows.append(values)

    if not rows:
        raise DataError('%s: no records' % path)
    data = DataSet(names, np.array(rows, dtype=np.int64).reshape(
        len(rows), len(names)), weights if wcol is not None else None)
    logger.info('read %r from %s', data, path)
    return data.dedupe() if dedupe else data


def write_dataset(dataset, path):
    dataset.to_frame(WEIGHT_COLUMN).to_csv(path, index=False,
                                           lineterminator='\n')


def model_to_dict(model):
    res = {'format_version': FORMAT_VERSION,
           'variables': [{'name': v.name, 'kind': v.kind,
                          'cardinality': v.cardinality}
                         for v in model.variables],
           'edges': [list(e) for e in model.edges],
           'root': model.root}
    if not model.is_skeleton:
        cpts = {}
        for name in model.order:
            table = model.cpt(name)
            cpts[name] = {'parent': model.parent(name),
                          'shape': list(table.shape),
                          'values': [float(x) for x in table.ravel()]}
        res['cpts'] = cpts
    return res


def _require(obj, key, kind, path):
    if not isinstance(obj, dict) or key not in obj:
        raise ModelFormatError('%s: missing field' % path)
    value = obj[key]
    if kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ModelFormatError('%s: expected %s, found %r'
                               % (path, kind.__name__, value))
    return value


def _check_version(d):
    if not isinstance(d, dict):
        raise ModelFormatError('file does not hold a JSON object')
    version = d.get('format_version')
    if version is None:
        raise ModelFormatError('format_version: missing field')
    if version != FORMAT_VERSION:
        raise ModelFormatError('format_version: unsupported version %r, '
                               'expected %d' % (version, FORMAT_VERSION))


def model_from_dict(d):
    """
    Builds a model from its JSON form. Schema problems raise
    ModelFormatError naming the field; tree and distribution invariants
    are left to validate().
    """
    _check_version(d)
    variables = []
    for i, item in enumerate(_require(d, 'variables', list, 'variables')):
        path = 'variables[%d]' % i
        name = _require(item, 'name', str, path + '.name')
        kind = _require(item, 'kind', str, path + '.kind')
        if kind not in (OBSERVED, LATENT):
            raise ModelFormatError('%s.kind: expected observed or latent, '
                                   'found %r' % (path, kind))
        card = _require(item, 'cardinality', int, path + '.cardinality')
        variables.append(Variable(name, card, kind))
    names = set(v.name for v in variables)
    if len(names) != len(variables):
        raise ModelFormatError('variables: duplicate names')

    edges = []
    for i, e in enumerate(_require(d, 'edges', list, 'edges')):
        if not (isinstance(e, list) and len(e) == 2):
            raise ModelFormatError('edges[%d]: expected a pair of names' % i)
        for n in e:
            if n not in names:
                raise ModelFormatError('edges[%d]: unknown variable %r'
                                       % (i, n))
        edges.append(tuple(e))
    graph = nx.MultiGraph()
    graph.add_edges_from(edges)
    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        cycle = None
    if cycle:
        nodes = [u for u, v, *_ in cycle] + [cycle[0][0]]
        raise ModelFormatError('edges: cycle %s' % '-'.join(nodes))

    root = _require(d, 'root', str, 'root')
    if root not in names:
        raise ModelFormatError('root: unknown variable %r' % root)
    skeleton = LatentTreeModel(variables, edges, root)
    if 'cpts' not in d:
        return skeleton

    cpts = {}
    raw = _require(d, 'cpts', dict, 'cpts')
    for name, item in raw.items():
        path = 'cpts.%s' % name
        if name not in names:
            raise ModelFormatError('%s: unknown variable' % path)
        if not isinstance(item, dict):
            raise ModelFormatError('%s: expected an object' % path)
        parent = item.get('parent')
        if parent != skeleton.parent(name):
            raise ModelFormatError('%s.parent: expected %r, found %r'
                                   % (path, skeleton.parent(name), parent))
        shape = _require(item, 'shape', list, path + '.shape')
        values = _require(item, 'values', list, path + '.values')
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                   for x in values):
            raise ModelFormatError('%s.values: expected numbers' % path)
        if not all(isinstance(x, int) and x >= 0 for x in shape) or \
                int(np.prod(shape)) != len(values):
            raise ModelFormatError('%s.shape: %r does not match %d values'
                                   % (path, shape, len(values)))
        cpts[name] = np.array(values, dtype=float).reshape(shape)
    return skeleton.with_cpts(cpts)


def _write_json(obj, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(obj, f, indent=2, ensure_ascii=False)
        f.write('\n')


def _read_json(path):
    with open(path, encoding='utf-8') as f:
        try:
            return json.load(f)
        except ValueError as e:
            raise ModelFormatError('%s: not valid JSON (%s)' % (path, e))


def save_model(model, path):
    _write_json(model_to_dict(model), path)


def load_model(path):
    try:
        return model_from_dict(_read_json(path))
    except ModelFormatError as e:
        if str(e).startswith(str(path)):
            raise
        raise ModelFormatError('%s: %s' % (path, e))


def group_spec_from_dict(d):
    if not isinstance(d, dict):
        raise ModelFormatError('group spec: expected an object')
    groups = []
    for i, item in enumerate(_require(d, 'groups', list, 'groups')):
        path = 'groups[%d]' % i
        label = _require(item, 'label', str, path + '.label')
        symptoms = _require(item, 'symptoms', list, path + '.symptoms')
        if not all(isinstance(x, str) for x in symptoms):
            raise ModelFormatError('%s.symptoms: expected names' % path)
        card = item.get('cardinality', 2)
        if card != AUTO and not (isinstance(card, int) and
                                 not isinstance(card, bool)):
            raise ModelFormatError('%s.cardinality: expected an integer or '
                                   '"auto", found %r' % (path, card))
        try:
            groups.append(FeatureGroup(label, symptoms, card))
        except ValueError as e:
            raise ModelFormatError('%s: %s' % (path, e))
    cards = d.get('z_cardinality_range', [2, 3, 4])
    if isinstance(cards, str):
        try:
            cards = parse_range(cards)
        except ValueError as e:
            raise ModelFormatError('z_cardinality_range: %s' % e)
    if not isinstance(cards, list) or not all(
            isinstance(k, int) and not isinstance(k, bool) for k in cards):
        raise ModelFormatError('z_cardinality_range: expected a list of '
                               'integers, found %r' % (cards,))
    target = d.get('target_label')
    if target is not None and not isinstance(target, str):
        raise ModelFormatError('target_label: expected str, found %r'
                               % (target,))
    try:
        return FeatureGroupSpec(groups, cards, target, d.get('latent', 'Z'))
    except ValueError as e:
        raise ModelFormatError('groups: %s' % e)


def load_group_spec(path):
    try:
        return group_spec_from_dict(_read_json(path))
    except ModelFormatError as e:
        if str(e).startswith(str(path)):
            raise
        raise ModelFormatError('%s: %s' % (path, e))


def save_group_spec(spec, path):
    _write_json(spec.to_dict(), path)


def parse_range(text):
    """
    Parses '1..5', '2,3,4' or '3' into a list of integers.
    """
    text = str(text).strip()
    try:
        if '..' in text:
            lo, hi = text.split('..', 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise ValueError('invalid range %r, expected e.g. 1..5 or 1,2,3'
                         % text)


def _number(value):
    return FLOAT_FORMAT % value


def rule_to_text(rule):
    lines = ['symptom\tscore']
    for x, s in rule.scores.items():
        lines.append('%s\t%s' % (x, _number(s)))
    lines.append('#threshold\t%s' % _number(rule.threshold))
    lines.append('#base\t%s' % ('2' if rule.base == 2 else repr(rule.base)))
    lines.append('#smoothing\t%r' % rule.smoothing)
    if rule.scale is not None:
        lines.append('#scale\t%s' % ('%g' % rule.scale))
    lines.append('#ordering\t%s' % rule.ordering)
    prov = rule.provenance
    if prov.get('latent') is not None:
        lines.append('#latent\t%s' % prov['latent'])
    if prov.get('target_states') is not None:
        lines.append('#target_states\t%s'
                     % ','.join(str(s) for s in prov['target_states']))
    if prov.get('target_label') is not None:
        lines.append('#target_label\t%s' % prov['target_label'])
    return '\n'.join(lines) + '\n'


def save_rule(rule, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(rule_to_text(rule))


def load_rule(path):
    """
    Reads a rule file: a 'symptom<TAB>score' header, one row per symptom
    and '#key<TAB>value' footer rows.
    """
    with open(path, encoding='utf-8') as f:
        lines = [l.rstrip('\n').rstrip('\r') for l in f]
    if not lines or lines[0].split('\t') != ['symptom', 'score']:
        raise ModelFormatError('%s:1: expected header "symptom<TAB>score"'
                               % path)
    scores = []
    footer = {}
    for line, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        cells = text.split('\t')
        if len(cells) != 2:
            raise ModelFormatError('%s:%d: expected 2 fields, found %d'
                                   % (path, line, len(cells)))
        key, value = cells
        if key.startswith('#'):
            footer[key[1:]] = value
            continue
        try:
            scores.append((key, float(value)))
        except ValueError:
            raise ModelFormatError('%s:%d: score %r is not a number'
                                   % (path, line, value))
    if 'threshold' not in footer:
        raise ModelFormatError('%s: missing #threshold row' % path)

    def number(key, default):
        if key not in footer:
            return default
        try:
            return float(footer[key])
        except ValueError:
            raise ModelFormatError('%s: #%s %r is not a number'
                                   % (path, key, footer[key]))

    base = number('base', 2.0)
    provenance = {}
    if 'latent' in footer:
        provenance['latent'] = footer['latent']
    if 'target_states' in footer:
        try:
            provenance['target_states'] = parse_range(footer['target_states'])
        except ValueError as e:
            raise ModelFormatError('%s: #target_states: %s' % (path, e))
    if 'target_label' in footer:
        provenance['target_label'] = footer['target_label']
    names = [x for x, _ in scores]
    return ClassificationRule(
        pd.Series([s for _, s in scores], index=names, dtype=float),
        number('threshold', None), number('smoothing', 0.0),
        2 if base == 2 else base, footer.get('ordering', 'given'),
        provenance, number('scale', None))


def write_table(frame, path=None, index=True):
    """
    Writes a report table as TSV with 6 decimal floats; without a path the
    TSV text is returned.
    """
    return frame.to_csv(path, sep='\t', float_format=FLOAT_FORMAT,
                        index=index, lineterminator='\n')


def read_table(path):
    return pd.read_csv(path, sep='\t', index_col=0)


def write_text(text, path):
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)


def file_digest(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def config_digest(config):
    text = json.dumps(config, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


class RunManifest(object):

    """
    Record of one command run: what went in, what came out.

    Args:
        * command (str): subcommand name
        * arguments (list): command line
        * seed (int): base seed
        * config (dict): settings that influence the outputs

    """

    def __init__(self, command, arguments=(), seed=None, config=None):
        from lta import __version__
        self.command = command
        self.arguments = list(arguments)
        self.seed = seed
        self.config = config or {}
        self.version = '.'.join(str(x) for x in __version__)
        self.inputs = []
        self.outputs = []
        self.started = _now()
        self.finished = None

    def add_input(self, path):
        self.inputs.append({'path': str(path), 'sha256': file_digest(path)})

    def add_output(self, path):
        self.outputs.append({'path': str(path), 'sha256': file_digest(path)})

    def to_dict(self):
        return {'command': self.command,
                'arguments': self.arguments,
                'version': self.version,
                'seed': self.seed,
                'config': self.config,
                'config_digest': config_digest(self.config),
                'inputs': self.inputs,
                'outputs': self.outputs,
                'started': self.started,
                'finished': self.finished}

    def write(self, path):
        self.finished = _now()
        _write_json(self.to_dict(), path)
        logger.info('wrote manifest %s', path)


def manifest_path(output):
    if os.path.isdir(output):
        return os.path.join(output, 'manifest.json')
    return '%s.manifest.json' % output
