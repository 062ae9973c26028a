import argparse
import logging
import sys
from dataclasses import asdict

import pandas as pd
from django.core.management.base import BaseCommand, CommandError, handle_default_options

from cli.models import OutputEnvelope, OutputFormat, dumps
from cli.services import InputService
from core.conf import quadlab_setting
from core.exceptions import InternalError, NumericalFailure, QuadLabError, StudyFailed, UsageError
from experiments.models import CSV_COLUMNS, Family, SweepSpec
from experiments.sampling import random_convex_quads, write_quads_file
from experiments.services import DEFAULT_PSI_M, DEFAULT_PSI_M_MAX, ExperimentService
from norms_quadrature.services import NormService
from quad_geometry.models import CanonicalQuad, ConvexQuad
from quad_geometry.services import ConditionService

logger = logging.getLogger(__name__)

DJANGO_OPTIONS = {
    'verbosity', 'settings', 'pythonpath', 'traceback', 'no_color', 'force_color', 'skip_checks', 'subcommand',
}

STUDY_SCHEMA = (
    'JSON: {tool, version, command, input, result: {study, k, p, slope, residual, verdict, rates, details}}. '
    'CSV: a "# {...}" header comment, then the columns ' + ','.join(CSV_COLUMNS) + '.'
)


class Command(BaseCommand):
    help = 'Q_k interpolation on convex quadrilaterals: shape classification, error norms, I_p and studies'
    requires_system_checks = []

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest='subcommand', required=True, metavar='subcommand')

        def add(name, help_text, schema):
            return subparsers.add_parser(
                name, help=help_text, description=help_text, epilog=f'Output: {schema}',
                formatter_class=argparse.ArgumentDefaultsHelpFormatter,
            )

        classify = add(
            'classify', 'Angle conditions, RDP, regularity and canonical flags of quads',
            'JSON {psi_min, psi_max, mac, MAC, DAC, rdp: {diag, N, psiM}, h_over_rho, flags}, a list for files.',
        )
        self._element_arguments(classify, required=True)
        self._angle_arguments(classify)
        classify.add_argument('--flag-constant', type=float, default=None, help='C of the canonical flags')
        self._output_arguments(classify)

        interp = add(
            'interp-error', 'Interpolation error norms of Q_k u on quads',
            'JSON row {param, h, err_w1p, err_lp, semnorm_u, ratio_seminorm, ratio_lp, aux1, aux2, converged}.',
        )
        self._element_arguments(interp, required=True)
        self._degree_arguments(interp)
        interp.add_argument('--field', default='trig-box', help='cex1, cex2, trig, trig-box or poly:i:j:c,...')
        self._numerics_arguments(interp)
        self._output_arguments(interp)

        ip = add('ip-integral', 'I_p of a canonical element', 'JSON {value, converged, certificate, ...}.')
        ip.add_argument('--quad', '--canonical', dest='canonical', required=True, help='a,b,at,bt')
        ip.add_argument('--p', type=float, default=2.0)
        self._output_arguments(ip)

        cex1 = add('cex1', 'Minimum-angle counterexample on K(1,s,s,2s)', STUDY_SCHEMA)
        cex1.add_argument('--p', type=float, default=2.0)
        cex1.add_argument('--grid', default=None, help='s values in (0, 1/2); default 0.2 0.1 0.05 0.025')
        self._study_arguments(cex1)

        cex2 = add('cex2', 'Maximum-angle counterexample on K(1,1,s,s)', STUDY_SCHEMA)
        cex2.add_argument('--p', type=float, default=2.0)
        cex2.add_argument('--grid', default=None, help='s values in (1/2, 5/8]; default 1/2 + 2^-10 .. 2^-14')
        self._study_arguments(cex2)

        uniform = add('lp-uniform', 'Largest L^p error ratio over random convex quads', STUDY_SCHEMA)
        self._degree_arguments(uniform)
        uniform.add_argument('--num-random', type=int, default=500)
        uniform.add_argument('--seed', type=int, default=42)
        uniform.add_argument('--no-cex1', action='store_true', help='skip the K(1,s,s,2s) contrast rows')
        self._study_arguments(uniform)

        convergence = add('convergence', 'h-refinement rates on a fixed shape', STUDY_SCHEMA)
        convergence.add_argument('--family', default=Family.CEX1, type=str.upper, choices=Family.values)
        convergence.add_argument('--param', type=float, default=None, help='family parameter s')
        convergence.add_argument('--seed', type=int, default=None, help='seed of the RANDOM_CONVEX shape')
        self._element_arguments(convergence, required=False)
        self._degree_arguments(convergence)
        convergence.add_argument('--field', default='trig')
        convergence.add_argument('--grid', default=None, help='h levels; default 2^-2 .. 2^-6')
        self._angle_arguments(convergence)
        self._study_arguments(convergence)

        sweep = add('constant-sweep', 'Empirical constant against the extreme angles', STUDY_SCHEMA)
        self._degree_arguments(sweep)
        sweep.add_argument('--min-grid', default=None, help='s values of the K(1,s,s,2s) sweep')
        sweep.add_argument('--max-grid', default=None, help='s values of the K(1,1,s,s) sweep')
        self._study_arguments(sweep)

        generate = add('generate-quads', 'Write seeded random convex quads to a file', 'JSON {count, path}.')
        generate.add_argument('--count', type=int, required=True)
        generate.add_argument('--seed', type=int, default=0)
        generate.add_argument('--max-stretch', type=float, default=50.0)
        generate.add_argument('--out', required=True, help='quads file to write')

    @staticmethod
    def _element_arguments(parser, required):
        group = parser.add_mutually_exclusive_group(required=required)
        group.add_argument('--quad', help='"x1 y1 x2 y2 x3 y3 x4 y4", counterclockwise')
        group.add_argument('--canonical', help='a,b,at,bt')
        group.add_argument('--quads-file', help='one quad per line')

    @staticmethod
    def _angle_arguments(parser):
        parser.add_argument('--psi-m', dest='psi_m', type=float, default=DEFAULT_PSI_M, help='minimum angle bound')
        parser.add_argument('--psi-M', dest='psi_M', type=float, default=DEFAULT_PSI_M_MAX, help='maximum angle bound')

    @staticmethod
    def _degree_arguments(parser):
        parser.add_argument('--k', type=int, default=2)
        parser.add_argument('--p', type=float, default=2.0)

    @staticmethod
    def _numerics_arguments(parser):
        parser.add_argument('--quad-order', type=int, default=None, help='Gauss points per direction; default k+6')
        parser.add_argument('--require-converged', action='store_true', help='exit 1 on unconverged quadrature')

    @staticmethod
    def _output_arguments(parser):
        parser.add_argument('--format', default=OutputFormat.JSON, choices=OutputFormat.values)
        parser.add_argument('--out', default=None, help='output path; standard output when omitted')

    def _study_arguments(self, parser):
        parser.add_argument('--rate-window', type=int, default=None, help='finest points in rate fits; default 4')
        parser.add_argument('--jobs', type=int, default=1)
        self._numerics_arguments(parser)
        self._output_arguments(parser)

    def run_from_argv(self, argv):
        # parser errors raise CommandError instead of exiting
        self._called_from_command_line = False
        try:
            parser = self.create_parser(argv[0], argv[1])
            options = parser.parse_args(argv[2:])
            cmd_options = vars(options)
            args = cmd_options.pop('args', ())
            handle_default_options(options)
            self.execute(*args, **cmd_options)
        except QuadLabError as exc:
            self._fail(exc)
        except CommandError as exc:
            self._fail(UsageError(str(exc).removeprefix('Error: ')))
        except OSError as exc:
            self._fail(UsageError('Cannot access file', path=exc.filename, reason=exc.strerror))
        except Exception as exc:
            logger.info('Unexpected failure in %s', argv[1:3], exc_info=True)
            self._fail(InternalError(str(exc) or type(exc).__name__, exception=type(exc).__name__))

    def _fail(self, error):
        logger.debug('Command failed: %s', error.as_dict())
        self.stderr.write(dumps(error.as_dict(), indent=None))
        sys.exit(error.exit_code)

    def handle(self, *args, **options):
        subcommand = options['subcommand']
        inputs = {key: value for key, value in options.items() if key not in DJANGO_OPTIONS}
        for key in ('stdout', 'stderr'):
            inputs.pop(key, None)
        envelope = OutputEnvelope(
            command=subcommand,
            format=options.get('format') or OutputFormat.JSON,
            destination=options.get('out') if subcommand != 'generate-quads' else None,
            inputs=inputs,
        )
        logger.info('Running %s', subcommand)
        getattr(self, 'handle_' + subcommand.replace('-', '_'))(options, envelope)

    @staticmethod
    def _elements(options):
        """(line, element) pairs from --quad, --canonical or --quads-file"""
        if options.get('quads_file'):
            return InputService.read_quads_file(options['quads_file'])
        if options.get('canonical'):
            return [(None, InputService.parse_canonical(options['canonical']))]
        if options.get('quad'):
            return [(None, InputService.parse_quad(options['quad']))]
        return []

    @staticmethod
    def _single_or_list(items, options):
        return items if options.get('quads_file') else items[0]

    def _finish_study(self, result, envelope, spec):
        envelope.inputs = {**spec.as_dict(), 'require_converged': envelope.inputs.get('require_converged', False)}
        frame = result.to_frame() if envelope.format == OutputFormat.CSV else None
        envelope.write(self.stdout, result.summary(), frame)
        if envelope.inputs['require_converged'] and not all(row.converged for row in self._all_rows(result)):
            raise NumericalFailure('Quadrature did not converge on every grid point', study=result.study)
        if result.failed:
            raise StudyFailed(
                'Study verdict differs from the expected one',
                study=result.study,
                verdict=str(result.verdict),
                expected=[str(v) for v in result.expected],
            )

    @staticmethod
    def _spec(result, options, **kwargs):
        """Resolved study parameters; grid defaults are filled in from the rows"""
        return SweepSpec(
            study=result.study,
            grid=tuple(row.param for row in result.rows),
            k=result.k,
            p=result.p,
            order=options.get('quad_order'),
            window=options.get('rate_window') or quadlab_setting('RATE_WINDOW'),
            jobs=options.get('jobs', 1),
            **kwargs,
        )

    @staticmethod
    def _all_rows(result):
        if result.children:
            return [row for child in result.children for row in child.rows]
        return result.rows

    @staticmethod
    def _grid(text):
        return InputService.parse_grid(text) if text else None

    def handle_classify(self, options, envelope):
        flag_constant = options['flag_constant']
        reports = []
        for line, element in self._elements(options):
            quad = element if isinstance(element, ConvexQuad) else element.to_convex_quad()
            report = ConditionService.classify(quad, options['psi_m'], options['psi_M'], flag_constant).as_dict()
            reports.append({'line': line, **report} if line else report)
        envelope.write(self.stdout, self._single_or_list(reports, options))

    def handle_interp_error(self, options, envelope):
        rows = []
        for line, element in self._elements(options):
            row, _ = ExperimentService.measure(
                element, options['k'], options['p'], options['field'], line or 0, options['quad_order']
            )
            rows.append(row)
        frame = pd.DataFrame([asdict(r) for r in rows], columns=list(CSV_COLUMNS))
        envelope.write(self.stdout, self._single_or_list([asdict(r) for r in rows], options), frame)
        if options['require_converged'] and not all(r.converged for r in rows):
            raise NumericalFailure('Quadrature did not converge', rows=[r.param for r in rows if not r.converged])

    def handle_ip_integral(self, options, envelope):
        element = InputService.parse_element(options['canonical'])
        if not isinstance(element, CanonicalQuad):
            raise UsageError('ip-integral needs a canonical element a,b,at,bt')
        result = NormService.ip_integral(element, options['p'])
        envelope.write(self.stdout, {**result.as_dict(), 'certificate': element.certificate})

    def handle_cex1(self, options, envelope):
        result = ExperimentService.run_cex1(
            options['p'], self._grid(options['grid']), options['quad_order'], options['rate_window'], options['jobs']
        )
        self._finish_study(result, envelope, self._spec(result, options, family=Family.CEX1, field='cex1'))

    def handle_cex2(self, options, envelope):
        result = ExperimentService.run_cex2(
            options['p'], self._grid(options['grid']), options['quad_order'], options['rate_window'], options['jobs']
        )
        self._finish_study(result, envelope, self._spec(result, options, family=Family.CEX2, field='cex2'))

    def handle_lp_uniform(self, options, envelope):
        result = ExperimentService.run_lp_uniformity(
            options['k'], options['p'], options['num_random'], options['seed'],
            include_cex1=not options['no_cex1'], order=options['quad_order'], jobs=options['jobs'],
        )
        spec = self._spec(
            result, options, family=Family.RANDOM_CONVEX, seed=options['seed'],
            extra={'num_random': options['num_random'], 'include_cex1': not options['no_cex1']},
        )
        self._finish_study(result, envelope, spec)

    def handle_convergence(self, options, envelope):
        quads = [element for _, element in self._elements(options)]
        family = Family.USER if quads else Family(options['family'])
        result = ExperimentService.run_convergence(
            family=family,
            k=options['k'],
            p=options['p'],
            h_levels=self._grid(options['grid']),
            field=options['field'],
            param=options['param'],
            seed=options['seed'],
            quads=quads,
            psi_m=options['psi_m'],
            psi_M=options['psi_M'],
            order=options['quad_order'],
            window=options['rate_window'],
            jobs=options['jobs'],
        )
        spec = self._spec(
            result, options, family=family, field=options['field'], seed=options['seed'],
            extra={'param': options['param'], 'shape': result.details['shape'],
                   'psi_m': options['psi_m'], 'psi_M': options['psi_M']},
        )
        self._finish_study(result, envelope, spec)

    def handle_constant_sweep(self, options, envelope):
        result = ExperimentService.run_constant_vs_angle(
            options['k'], options['p'], self._grid(options['min_grid']), self._grid(options['max_grid']),
            options['quad_order'], options['rate_window'], options['jobs'],
        )
        minimum, maximum = result.children
        spec = self._spec(
            result, options,
            extra={'min_grid': [row.aux1 for row in minimum.rows], 'max_grid': [row.aux1 for row in maximum.rows]},
        )
        self._finish_study(result, envelope, spec)

    def handle_generate_quads(self, options, envelope):
        if options['count'] < 1:
            raise UsageError('--count must be positive', count=options['count'])
        quads = random_convex_quads(options['count'], options['seed'], options['max_stretch'])
        write_quads_file(options['out'], quads)
        envelope.write(self.stdout, {'count': len(quads), 'path': options['out']})
