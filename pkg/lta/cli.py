"""
Command line interface.

Every subcommand reads its inputs from files, writes its outputs to files
and records a run manifest next to its primary output. Exit codes: 0
success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import division
import argparse
import logging
import math
import os
import sys

import pandas as pd

from lta.core import DataError, validate, forward_sample
from lta.em import EmConfig, fit_lca
from lta.search import SearchConfig, search
from lta.report import model_report, edge_mutual_info
from lta.joint import fit_joint, joint_report, merge_summary
from lta.rules import (DEFAULT_SMOOTHING, ORDERINGS, CONTRIBUTION, TARGET,
                       COMPLEMENT, derive_rule, simplify_sweep, integerize,
                       apply_rule_dataset, model_classify_dataset,
                       rule_accuracy)
from lta import io


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

LOG_FORMAT = '%(asctime)s %(name)s %(levelname)s %(message)s'


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):

    def error(self, message):
        raise UsageError('%s: %s' % (self.prog, message))


def _cards(text):
    try:
        res = io.parse_range(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))
    if not res:
        raise argparse.ArgumentTypeError('empty range %r' % text)
    return res


def _states(text):
    try:
        return [int(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError('invalid state list %r' % text)


def _base(text):
    if text == 'e':
        return math.e
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError('invalid log base %r' % text)


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument('--seed', type=int, default=0,
                   help='base seed of all random streams')
    p.add_argument('--threads', type=int, default=1,
                   help='worker threads; results do not depend on it')
    p.add_argument('-v', '--verbose', action='count', default=0,
                   help='-v for progress, -vv for details')
    p.add_argument('--progress', action='store_true',
                   help='show progress bars')
    return p


def _em_options(p):
    p.add_argument('--restarts', type=int, default=16)
    p.add_argument('--max-iterations', type=int, default=500)
    p.add_argument('--tolerance', type=float, default=1e-6)
    p.add_argument('--em-smoothing', type=float, default=0.0)
    p.add_argument('--dedupe', action='store_true',
                   help='collapse identical records into weights')


def _target_options(p, required=True):
    p.add_argument('--latent', default='Z', help='class variable')
    p.add_argument('--target-states', type=_states, required=required,
                   help='comma separated states merged into the target')


def build_parser():
    common = _common()
    parser = ArgumentParser(prog='lta', description='Latent tree analysis')
    sub = parser.add_subparsers(dest='command', metavar='command',
                                parser_class=ArgumentParser)
    sub.required = True

    p = sub.add_parser('sample', parents=[common],
                       help='draw records from a model')
    p.add_argument('--model', required=True)
    p.add_argument('-n', '--records', type=int, required=True)
    p.add_argument('--output', required=True)

    p = sub.add_parser('learn-lca', parents=[common],
                       help='latent class analysis')
    p.add_argument('--data', required=True)
    p.add_argument('--cards', type=_cards, default=[1, 2, 3, 4])
    p.add_argument('--variables', help='comma separated subset')
    p.add_argument('--latent-name', default='Y')
    p.add_argument('--output', required=True)
    p.add_argument('--table', help='BIC table (default <output>.bic.tsv)')
    _em_options(p)

    p = sub.add_parser('learn-ltm', parents=[common],
                       help='latent tree structure search')
    p.add_argument('--data', required=True)
    p.add_argument('--output', required=True)
    p.add_argument('--log', help='search log (default <output>.log)')
    p.add_argument('--screening-iterations', type=int, default=20)
    p.add_argument('--max-cardinality', type=int, default=10)
    p.add_argument('--max-latents', type=int)
    _em_options(p)

    p = sub.add_parser('report-partitions', parents=[common],
                       help='partition reports of every latent variable')
    p.add_argument('--model', required=True)
    p.add_argument('--output-dir', required=True)
    p.add_argument('--base', type=_base, default=math.e,
                   help="log base of mutual information ('e' or a number)")

    p = sub.add_parser('joint-cluster', parents=[common],
                       help='joint clustering over feature groups')
    p.add_argument('--data', required=True)
    p.add_argument('--spec', required=True)
    p.add_argument('--output', required=True)
    p.add_argument('--report', help='table TSV (default <output>.tsv)')
    p.add_argument('--target-states', type=_states)
    p.add_argument('--smoothing', type=float, default=0.0)
    p.add_argument('--prune', action='store_true',
                   help='keep rows up to the coverage cut')
    _em_options(p)

    p = sub.add_parser('derive-rule', parents=[common],
                       help='classification rule of a merged class')
    p.add_argument('--model', required=True)
    _target_options(p)
    p.add_argument('--label')
    p.add_argument('--smoothing', type=float, default=DEFAULT_SMOOTHING)
    p.add_argument('--ordering', choices=ORDERINGS, default=CONTRIBUTION)
    p.add_argument('--output', required=True)

    p = sub.add_parser('sweep-rule', parents=[common],
                       help='accuracy of simplified rules')
    p.add_argument('--model', required=True)
    p.add_argument('--data', required=True)
    _target_options(p)
    p.add_argument('--smoothing', type=float, default=DEFAULT_SMOOTHING)
    p.add_argument('--ordering', choices=ORDERINGS, default=CONTRIBUTION)
    p.add_argument('--output', required=True)

    p = sub.add_parser('integerize-rule', parents=[common],
                       help='scale and round a rule')
    p.add_argument('--rule', required=True)
    p.add_argument('--scale', type=float, required=True)
    p.add_argument('--output', required=True)
    p.add_argument('--data')
    p.add_argument('--model')
    _target_options(p, required=False)

    p = sub.add_parser('classify', parents=[common],
                       help='classify records with a rule or a model')
    p.add_argument('--data', required=True)
    p.add_argument('--rule')
    p.add_argument('--model')
    _target_options(p, required=False)
    p.add_argument('--output', required=True)

    p = sub.add_parser('validate', parents=[common],
                       help='check a model file')
    p.add_argument('--model', required=True)
    return parser


def _em_config(args):
    return EmConfig(max_iterations=args.max_iterations,
                    tolerance=args.tolerance, restarts=args.restarts,
                    seed=args.seed, smoothing=args.em_smoothing,
                    threads=args.threads, progress_bar=args.progress)


def _finish(manifest, inputs, outputs, primary):
    for path in inputs:
        manifest.add_input(path)
    for path in outputs:
        manifest.add_output(path)
    manifest.write(io.manifest_path(primary))


def cmd_sample(args, argv):
    model = io.load_model(args.model)
    data = forward_sample(model, args.records, args.seed)
    io.write_dataset(data, args.output)
    manifest = io.RunManifest('sample', argv, args.seed,
                              {'records': args.records})
    _finish(manifest, [args.model], [args.output], args.output)


def cmd_learn_lca(args, argv):
    data = io.parse_dataset(args.data, args.dedupe)
    variables = None
    if args.variables:
        variables = [x.strip() for x in args.variables.split(',')]
    config = _em_config(args)
    res = fit_lca(data, variables, args.cards, config, args.latent_name)
    table = args.table or '%s.bic.tsv' % args.output
    io.save_model(res.best.model, args.output)
    io.write_table(res.table, table, index=False)
    res.display()
    manifest = io.RunManifest('learn-lca', argv, args.seed,
                              {'em': config.to_dict(), 'cards': args.cards,
                               'variables': variables})
    _finish(manifest, [args.data], [args.output, table], args.output)


def cmd_learn_ltm(args, argv):
    data = io.parse_dataset(args.data, args.dedupe)
    config = SearchConfig(_em_config(args), args.screening_iterations,
                          args.max_cardinality, args.max_latents,
                          seed=args.seed, threads=args.threads,
                          progress_bar=args.progress)
    res = search(data, config)
    log = args.log or '%s.log' % args.output
    io.save_model(res.model, args.output)
    io.write_text(res.to_text(), log)
    print('BIC %.6f -> %.6f in %d steps' % (res.initial.bic, res.bic,
                                             len(res.steps)))
    manifest = io.RunManifest('learn-ltm', argv, args.seed, config.to_dict())
    _finish(manifest, [args.data], [args.output, log], args.output)


def cmd_report_partitions(args, argv):
    model = io.load_model(args.model)
    if not os.path.isdir(args.output_dir):
        os.makedirs(args.output_dir)
    outputs = []
    for report in model_report(model, args.base):
        stem = os.path.join(args.output_dir, report.latent)
        io.write_table(report.to_frame(), stem + '.tsv')
        io.write_text(report.to_text(), stem + '.txt')
        outputs.extend([stem + '.tsv', stem + '.txt'])
        print(report.to_text())
    edges = os.path.join(args.output_dir, 'edges.tsv')
    io.write_table(edge_mutual_info(model, args.base), edges, index=False)
    outputs.append(edges)
    manifest = io.RunManifest('report-partitions', argv, args.seed,
                              {'base': args.base})
    _finish(manifest, [args.model], outputs, args.output_dir)


def cmd_joint_cluster(args, argv):
    data = io.parse_dataset(args.data, args.dedupe)
    spec = io.load_group_spec(args.spec)
    config = _em_config(args)
    res = fit_joint(data, spec, config)
    model = res.best.model
    report = args.report or '%s.tsv' % args.output
    table = '%s.bic.tsv' % args.output
    io.save_model(model, args.output)
    io.write_table(res.table, table, index=False)
    frame = joint_report(model, spec.latent, args.target_states,
                         smoothing=args.smoothing, prune=args.prune,
                         seed=args.seed)
    io.write_table(frame, report)
    res.display()
    print(frame.to_string(float_format=lambda v: '%.2f' % v))
    manifest = io.RunManifest('joint-cluster', argv, args.seed,
                              {'em': config.to_dict(),
                               'spec': spec.to_dict(),
                               'target_states': args.target_states,
                               'smoothing': args.smoothing,
                               'prune': args.prune})
    _finish(manifest, [args.data, args.spec], [args.output, table, report],
            args.output)


def cmd_derive_rule(args, argv):
    model = io.load_model(args.model)
    summary = merge_summary(model, args.latent, args.target_states,
                            args.smoothing, target_label=args.label)
    rule = derive_rule(summary, args.ordering)
    io.save_rule(rule, args.output)
    print(io.rule_to_text(rule), end='')
    manifest = io.RunManifest('derive-rule', argv, args.seed,
                              {'latent': args.latent,
                               'target_states': args.target_states,
                               'smoothing': args.smoothing,
                               'ordering': args.ordering})
    _finish(manifest, [args.model], [args.output], args.output)


def cmd_sweep_rule(args, argv):
    model = io.load_model(args.model)
    data = io.parse_dataset(args.data)
    summary = merge_summary(model, args.latent, args.target_states,
                            args.smoothing)
    sweep = simplify_sweep(summary, model, args.latent, args.target_states,
                           data, args.ordering)
    io.write_table(sweep.to_frame(), args.output)
    print(sweep.to_frame().to_string(float_format=lambda v: '%.3f' % v))
    print('accuracy %.6f' % sweep.baseline)
    manifest = io.RunManifest('sweep-rule', argv, args.seed,
                              {'latent': args.latent,
                               'target_states': args.target_states,
                               'smoothing': args.smoothing,
                               'ordering': args.ordering})
    _finish(manifest, [args.model, args.data], [args.output], args.output)


def _need_target(args, command):
    if args.target_states is None:
        raise UsageError('lta %s: --model needs --target-states' % command)


def cmd_integerize_rule(args, argv):
    rule = io.load_rule(args.rule)
    data = model = None
    inputs = [args.rule]
    if args.data:
        data = io.parse_dataset(args.data)
        inputs.append(args.data)
    if args.model:
        _need_target(args, 'integerize-rule')
        if data is None:
            raise UsageError('lta integerize-rule: --model needs --data')
        model = io.load_model(args.model)
        inputs.append(args.model)
    res, report = integerize(rule, args.scale, data, model, args.latent,
                             args.target_states)
    io.save_rule(res, args.output)
    for key in sorted(report):
        print('%s\t%s' % (key, report[key]))
    manifest = io.RunManifest('integerize-rule', argv, args.seed,
                              {'scale': args.scale})
    _finish(manifest, inputs, [args.output], args.output)


def cmd_classify(args, argv):
    if not args.rule and not args.model:
        raise UsageError('lta classify: give --rule or --model')
    data = io.parse_dataset(args.data)
    inputs = [args.data]
    frame = pd.DataFrame(index=pd.RangeIndex(len(data), name='record'))
    model = None
    if args.model:
        _need_target(args, 'classify')
        model = io.load_model(args.model)
        inputs.append(args.model)
    if args.rule:
        rule = io.load_rule(args.rule)
        inputs.append(args.rule)
        decisions, totals = apply_rule_dataset(rule, data)
        frame['total'] = totals
    else:
        decisions = model_classify_dataset(model, args.latent,
                                           args.target_states, data)
    frame['decision'] = [TARGET if d else COMPLEMENT for d in decisions]
    io.write_table(frame, args.output)
    if args.rule and model is not None:
        print('accuracy %.6f' % rule_accuracy(rule, model, args.latent,
                                              args.target_states, data))
    manifest = io.RunManifest('classify', argv, args.seed,
                              {'latent': args.latent,
                               'target_states': args.target_states})
    _finish(manifest, inputs, [args.output], args.output)


def cmd_validate(args, argv):
    model = io.load_model(args.model)
    violations = validate(model, structure_only=model.is_skeleton)
    if violations:
        for v in violations:
            print(v)
        raise DataError('%s: %d violations' % (args.model,
                                                  len(violations)))
    print('%s: valid' % args.model)


COMMANDS = {
    'sample': cmd_sample,
    'learn-lca': cmd_learn_lca,
    'learn-ltm': cmd_learn_ltm,
    'report-partitions': cmd_report_partitions,
    'joint-cluster': cmd_joint_cluster,
    'derive-rule': cmd_derive_rule,
    'sweep-rule': cmd_sweep_rule,
    'integerize-rule': cmd_integerize_rule,
    'classify': cmd_classify,
    'validate': cmd_validate,
}


def _configure_logging(verbose):
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def run_command(argv=None):
    """
    Runs one command line and returns its exit code.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.verbose)
        if args.threads < 1:
            raise UsageError('lta: --threads must be >= 1')
        COMMANDS[args.command](args, argv)
    except UsageError as e:
        sys.stderr.write('%s\n' % e)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK
    except ArithmeticError as e:
        sys.stderr.write('lta: error: %s\n' % e)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as e:
        sys.stderr.write('lta: error: %s\n' % e)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run_command())
