from __future__ import division

import numpy as np
import pytest
from numpy.testing import assert_almost_equal as aae

from lta.core import (DataSet, DataError, DataWarning, check_model,
                      dimension, forward_sample, marginal, substream)
from lta.em import EmConfig, fit_em, lca_skeleton
from lta import search as ls
from lta.search import (SearchConfig, SearchOperator, StateIntroduction,
                        StateDeletion, NodeIntroduction, NodeDeletion,
                        NodeRelocation, enumerate_candidates,
                        next_latent_name, search, Candidate,
                        gain_per_parameter, rank_candidates, refinements)
from tests.helpers import (grades_model, class_model, two_island_model,
                           sibling_sets)


def lcm4():
    return class_model('Y', [0.5, 0.5],
                       dict(('x%d' % i, [0.2, 0.8]) for i in range(4)))


def independent_data(n=1000, seed=0):
    m = class_model('H', [1.0], {'a': [0.3], 'b': [0.6], 'c': [0.5],
                                 'd': [0.8]})
    return forward_sample(m, n, seed=seed)


def quick_config(**kwargs):
    return SearchConfig(em_config=EmConfig(restarts=4), **kwargs)


def test_package_keeps_search_module():
    import lta
    import lta.search as module

    assert lta.search is module
    assert lta.search.search is search
    assert lta.search.EXPANSION == 'Expansion'
    assert lta.SearchConfig is SearchConfig


def test_next_latent_name():
    assert next_latent_name([]) == 'Y01'
    assert next_latent_name(['a', 'b']) == 'Y01'
    assert next_latent_name(['Y01', 'Y03', 'a']) == 'Y04'
    assert next_latent_name(['Y', 'Y1']) == 'Y02'
    assert next_latent_name(['Y09']) == 'Y10'


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(screening_iterations=0)
    with pytest.raises(ValueError):
        SearchConfig(max_latent_cardinality=1)
    with pytest.raises(ValueError):
        SearchConfig(max_latent_count=0)
    with pytest.raises(ValueError):
        SearchConfig(initial_cardinalities=())
    with pytest.raises(ValueError):
        SearchConfig(threads=0)


def test_config_limits_initial_cardinalities():
    c = SearchConfig(max_latent_cardinality=2,
                     initial_cardinalities=[3, 1, 2])

    assert c.initial_cardinalities == (1, 2)
    assert c.to_dict()['initial_cardinalities'] == [1, 2]
    assert c.to_dict()['em']['restarts'] == 16


def test_operator_not_implemented():
    op = SearchOperator('Y')

    assert op.name == 'SearchOperator'
    assert op.descriptor == 'SearchOperator(Y)'
    with pytest.raises(NotImplementedError):
        op(lcm4(), substream(0))


def test_descriptors():
    assert StateIntroduction('Y').descriptor == 'StateIntroduction(Y)'
    assert (NodeIntroduction('Y', ('b', 'a')).descriptor ==
            'NodeIntroduction(Y;a,b)')
    assert NodeDeletion('A', 'B').descriptor == 'NodeDeletion(A;B)'
    assert (NodeRelocation('x', 'A', 'B').descriptor ==
            'NodeRelocation(x;A;B)')
    assert StateDeletion('Y') == StateDeletion('Y')
    assert StateDeletion('Y') != StateIntroduction('Y')


def test_expansion_candidates_of_class_model():
    ops = enumerate_candidates(lcm4(), ls.EXPANSION)
    descriptors = [op.descriptor for op in ops]

    assert len(ops) == 7
    assert descriptors == sorted(descriptors)
    assert 'StateIntroduction(Y)' in descriptors
    assert 'NodeIntroduction(Y;x0,x3)' in descriptors


def test_expansion_limits():
    c = SearchConfig(max_latent_cardinality=2, max_latent_count=1)

    assert enumerate_candidates(lcm4(), ls.EXPANSION, c) == []


def test_adjustment_candidates_of_class_model():
    assert enumerate_candidates(lcm4(), ls.ADJUSTMENT) == []


def test_simplification_candidates():
    ops = enumerate_candidates(grades_model(), ls.SIMPLIFICATION)

    assert [op.descriptor for op in ops] == [
        'NodeDeletion(AS;LS)', 'NodeDeletion(LS;AS)',
        'StateDeletion(AS)', 'StateDeletion(LS)']


def test_adjustment_candidates():
    ops = enumerate_candidates(grades_model(), ls.ADJUSTMENT)

    assert [op.descriptor for op in ops] == [
        'NodeRelocation(EG;LS;AS)', 'NodeRelocation(HG;LS;AS)',
        'NodeRelocation(MG;AS;LS)', 'NodeRelocation(SG;AS;LS)']


def test_expansion_candidates_of_grades_model():
    ops = enumerate_candidates(grades_model(), ls.EXPANSION)

    assert len(ops) == 8


def test_unknown_phase():
    with pytest.raises(ValueError):
        enumerate_candidates(lcm4(), 'Growth')


def test_operators_yield_valid_models():
    m = grades_model()
    for phase in ls.PHASES:
        for op in enumerate_candidates(m, phase):
            edited, changed = op(m, substream(0, op.descriptor))
            check_model(edited)
            assert changed
            assert set(edited.observed) == set(m.observed)


def test_state_introduction():
    m = grades_model()
    edited, changed = StateIntroduction('LS')(m, substream(1))

    assert edited.cardinality('LS') == 3
    assert changed == set(['LS', 'EG', 'HG'])
    assert dimension(edited) == dimension(m) + 2 + 2
    aae(marginal(edited, ['MG']), marginal(m, ['MG']), 12)


def test_state_deletion():
    m = grades_model()
    edited, _ = StateDeletion('AS')(m, substream(2))

    assert edited.cardinality('AS') == 1
    check_model(edited)

    with pytest.raises(ValueError):
        StateDeletion('AS')(edited, substream(2))


def test_node_introduction():
    m = lcm4()
    edited, changed = NodeIntroduction('Y', ('x1', 'x2'))(m, substream(3))

    assert edited.latents == ('Y', 'Y01')
    assert edited.children('Y01') == ('x1', 'x2')
    assert edited.parent('Y01') == 'Y'
    assert changed == set(['Y01', 'x1', 'x2'])
    assert dimension(edited) == dimension(m) + 2


def test_node_deletion_keeps_marginals():
    m = grades_model()
    edited, changed = NodeDeletion('LS', 'AS')(m, substream(4))

    assert edited.latents == ('AS',)
    assert changed == set(['EG', 'HG'])
    for x in ('EG', 'HG'):
        aae(marginal(edited, [x]), marginal(m, [x]), 12)
        assert edited.parent(x) == 'AS'


def test_node_relocation_keeps_marginals():
    m = grades_model()
    edited, changed = NodeRelocation('MG', 'AS', 'LS')(m, substream(5))

    assert changed == set(['MG'])
    assert 'MG' in edited.neighbors('LS')
    assert 'MG' not in edited.neighbors('AS')
    aae(marginal(edited, ['MG']), marginal(m, ['MG']), 12)
    aae(marginal(edited, ['HG', 'EG']), marginal(m, ['HG', 'EG']), 12)


def test_search_on_independent_data():
    data = independent_data()
    res = search(data, quick_config())
    single = fit_em(lca_skeleton(data.names, 1, 'Y01'), data,
                    EmConfig(restarts=4))

    assert res.steps == []
    assert res.model.root == 'Y01'
    assert res.model.cardinality('Y01') == 1
    aae(res.bic, single.bic, 6)
    assert res.bic == res.initial.bic


def test_search_improves_bic():
    data = forward_sample(grades_model(), 2000, seed=3)
    res = search(data, quick_config(screening_iterations=10))

    check_model(res.model)
    assert res.bic >= res.initial.bic
    assert set(res.model.observed) == set(data.names)
    bics = [res.initial.bic] + [s.bic_after for s in res.steps]
    assert all(b > a for a, b in zip(bics, bics[1:]))
    for s in res.steps:
        assert s.phase in ls.PHASES
        assert s.bic_after > s.bic_before

    text = res.to_text()
    lines = text.splitlines()
    assert lines[0].startswith('# initial ')
    assert lines[-1] == '# final BIC %.6f' % res.bic
    assert len(lines) == len(res.steps) + 2


def test_search_is_deterministic():
    data = forward_sample(grades_model(), 500, seed=4)
    a = search(data, quick_config(screening_iterations=5))
    b = search(data, quick_config(screening_iterations=5, threads=3))

    assert a.to_text() == b.to_text()
    assert a.model.edges == b.model.edges


def test_search_needs_two_variables():
    with pytest.raises(DataError):
        search(DataSet(['a'], [[0], [1]]))
    with pytest.raises(DataError):
        search(independent_data(n=0))


def test_search_warns_on_constant_column():
    values = np.array(independent_data(n=200).values)
    values[:, 2] = 0
    data = DataSet(['a', 'b', 'c', 'd'], values)

    with pytest.warns(DataWarning):
        search(data, quick_config(max_latent_count=1))


def test_refit_candidates_validation():
    with pytest.raises(ValueError):
        SearchConfig(refit_candidates=0)
    assert SearchConfig().to_dict()['refit_candidates'] == 3


def test_expansion_ranked_by_gain_per_parameter():
    current = fit_em(lcm4(), forward_sample(lcm4(), 200, seed=0),
                     EmConfig(restarts=1))
    base = current.bic
    d = dimension(current.model)
    cheap = Candidate((NodeIntroduction('Y', ('x0', 'x1')),), None, 0.0,
                      base - 2.0, d + 2, (), True)
    costly = Candidate((StateIntroduction('Y'),), None, 0.0, base - 1.0,
                       d + 5, (), True)

    aae(gain_per_parameter(cheap, current), -1.0, 9)
    aae(gain_per_parameter(costly, current), -0.2, 9)
    assert rank_candidates([cheap, costly], current, ls.EXPANSION) == \
        [costly, cheap]
    assert rank_candidates([cheap, costly], current, ls.ADJUSTMENT) == \
        [costly, cheap]

    flat = cheap._replace(dimension=d, bic=base - 0.1)
    aae(gain_per_parameter(flat, current), -0.1, 9)
    assert rank_candidates([cheap, costly, flat], current,
                           ls.EXPANSION)[0] == flat


def test_candidate_descriptor_joins_moves():
    c = Candidate((NodeIntroduction('Y', ('x0', 'x1')),
                   NodeRelocation('x2', 'Y', 'Y01')), None, 0.0, 0.0, 0,
                  (), True)

    assert c.operator == NodeIntroduction('Y', ('x0', 'x1'))
    assert c.descriptor == ('NodeIntroduction(Y;x0,x1) + '
                            'NodeRelocation(x2;Y;Y01)')


def test_refinements_of_node_introduction():
    m, _ = NodeIntroduction('Y', ('x1', 'x2'))(lcm4(), substream(3))
    ops = refinements(m, 'Y', 'Y01', SearchConfig())

    assert [op.descriptor for op in ops] == [
        'NodeRelocation(x0;Y;Y01)', 'NodeRelocation(x3;Y;Y01)',
        'StateDeletion(Y)', 'StateDeletion(Y01)',
        'StateIntroduction(Y)', 'StateIntroduction(Y01)']
    for op in ops:
        check_model(op(m, substream(0, op.descriptor))[0])

    capped = refinements(m, 'Y', 'Y01', SearchConfig(
        max_latent_cardinality=2))
    assert not [op for op in capped if isinstance(op, StateIntroduction)]


@pytest.mark.slow
def test_search_recovers_two_islands():
    truth = sibling_sets(two_island_model())
    assert truth == set([frozenset(['X1', 'X2', 'X3']),
                         frozenset(['X4', 'X5', 'X6'])])

    hits = 0
    for seed in range(20):
        data = forward_sample(two_island_model(), 5000, seed=seed)
        res = search(data, SearchConfig(EmConfig(restarts=4, seed=seed),
                                        seed=seed))
        assert res.bic >= res.initial.bic
        hits += sibling_sets(res.model) == truth
    assert hits >= 16
