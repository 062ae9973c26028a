import json
import math
import os
import tempfile
from io import StringIO
from unittest import mock

from django.core.management import call_command
from django.test import SimpleTestCase

from core.exceptions import ConvexityError, ParseError, StudyFailed, UsageError
from experiments.models import CSV_COLUMNS, StudyResult, SweepSpec, Verdict
from experiments.sampling import random_convex_quads, write_quads_file
from quad_geometry.models import CanonicalQuad, ConvexQuad
from quad_geometry.services import ConditionService

from .management.commands.quadlab import Command
from .models import OutputEnvelope, OutputFormat
from .services import InputService

UNIT_SQUARE = '0 0 1 0 1 1 0 1'
REFLEX = '0 0 2 0 0.5 0.5 0 2'


def run(*args):
    out = StringIO()
    call_command('quadlab', *args, stdout=out)
    return out.getvalue()


def run_from_argv(*args):
    out, err = StringIO(), StringIO()
    command = Command(stdout=out, stderr=err)
    code = 0
    try:
        command.run_from_argv(['manage.py', 'quadlab', *args])
    except SystemExit as exc:
        code = exc.code
    return code, out.getvalue(), err.getvalue()


class InputServiceTest(SimpleTestCase):
    def test_parse_quad(self):
        quad = InputService.parse_quad('0,0, 1 0  1,1 0 1')
        self.assertIsInstance(quad, ConvexQuad)
        with self.assertRaises(ParseError):
            InputService.parse_quad('0 0 1 0 1 1 0')
        with self.assertRaises(ParseError):
            InputService.parse_quad('0 0 1 0 1 1 0 one')

    def test_parse_element_by_count(self):
        self.assertIsInstance(InputService.parse_element('1,1,0.5,0.75'), CanonicalQuad)
        self.assertIsInstance(InputService.parse_element(UNIT_SQUARE), ConvexQuad)
        self.assertEqual(InputService.parse_grid('0.2, 0.1 0.05'), (0.2, 0.1, 0.05))
        with self.assertRaises(ParseError):
            InputService.parse_grid(' ')

    def test_quads_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'quads.txt')
            with open(path, 'w') as handle:
                handle.write(f'# unit square\n\n{UNIT_SQUARE}  # trailing\n')
            quads = InputService.read_quads_file(path)
        self.assertEqual([line for line, _ in quads], [3])
        self.assertAlmostEqual(quads[0][1].diameter, math.sqrt(2), delta=1e-15)

    def test_reflex_line_is_reported(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'quads.txt')
            with open(path, 'w') as handle:
                handle.write(f'{UNIT_SQUARE}\n{UNIT_SQUARE}\n{REFLEX}\n')
            with self.assertRaises(ConvexityError) as ctx:
                InputService.read_quads_file(path)
        self.assertEqual(ctx.exception.details['line'], 3)

    def test_generated_file_reads_back(self):
        quads = random_convex_quads(1000, seed=11)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'quads.txt')
            write_quads_file(path, quads)
            read = InputService.read_quads_file(path)
        self.assertEqual(len(read), 1000)
        self.assertEqual(read[0][0], 2)
        self.assertEqual(read[-1][1].to_line(), quads[-1].to_line())


class OutputEnvelopeTest(SimpleTestCase):
    def test_json_header(self):
        payload = json.loads(OutputEnvelope('classify', inputs={'k': 2}).render({'value': 1.0}))
        self.assertEqual(payload['tool'], 'quadlab')
        self.assertEqual(payload['input'], {'k': 2})
        self.assertEqual(payload['result'], {'value': 1.0})


class CommandTest(SimpleTestCase):
    def test_classify_square(self):
        result = json.loads(run('classify', '--quad', UNIT_SQUARE))['result']
        self.assertAlmostEqual(result['psi_min'], math.pi / 2, delta=1e-14)
        self.assertTrue(result['DAC'])
        self.assertAlmostEqual(result['h_over_rho'], math.sqrt(2), delta=1e-12)

    def test_classify_file_lists_lines(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'quads.txt')
            run('generate-quads', '--count', '5', '--seed', '3', '--out', path)
            payload = json.loads(run('classify', '--quads-file', path))
        self.assertEqual([item['line'] for item in payload['result']], [2, 3, 4, 5, 6])

    def test_ip_integral(self):
        payload = json.loads(run('ip-integral', '--canonical', '1,1,0.5,0.75', '--p', '2'))
        self.assertAlmostEqual(payload['result']['value'], 1.726092434710687, delta=1e-12)
        self.assertAlmostEqual(payload['result']['certificate'], 0.25, delta=1e-15)
        self.assertEqual(payload['input']['p'], 2.0)

    def test_ip_integral_needs_canonical(self):
        with self.assertRaises(UsageError):
            run('ip-integral', '--quad', UNIT_SQUARE)

    def test_interp_error_reproduces_polynomials(self):
        result = json.loads(run('interp-error', '--quad', UNIT_SQUARE, '--k', '2', '--field', 'poly:2:2:1'))['result']
        self.assertLess(result['err_w1p'], 1e-10)
        self.assertGreater(result['semnorm_u'], 0.0)

    def test_cex1_csv(self):
        lines = run('cex1', '--format', OutputFormat.CSV).splitlines()
        self.assertTrue(lines[0].startswith('# '))
        header = json.loads(lines[0][2:])
        self.assertEqual(header['summary']['verdict'], 'DIVERGES')
        self.assertEqual(header['input']['grid'], [0.025, 0.05, 0.1, 0.2])
        self.assertEqual(lines[1], ','.join(CSV_COLUMNS))
        self.assertEqual(len(lines), 6)

    def test_failed_study_is_reported_after_output(self):
        out = StringIO()
        command = Command(stdout=out)
        result = StudyResult(study='cex2', k=2, p=4.0, rows=[], verdict=Verdict.BOUNDED, expected=(Verdict.DIVERGES,))
        with self.assertRaises(StudyFailed):
            command._finish_study(result, OutputEnvelope('cex2'), SweepSpec(study='cex2'))
        self.assertEqual(json.loads(out.getvalue())['result']['verdict'], 'BOUNDED')


class ExitCodeTest(SimpleTestCase):
    def test_success(self):
        code, out, _ = run_from_argv('classify', '--quad', UNIT_SQUARE)
        self.assertEqual(code, 0)
        self.assertIn('"psi_min"', out)

    def test_reflex_quad(self):
        code, _, err = run_from_argv('classify', '--quad', REFLEX)
        self.assertEqual(code, 2)
        self.assertEqual(len(err.strip().splitlines()), 1)
        self.assertEqual(json.loads(err)['error'], 'convexity_error')

    def test_bad_arguments(self):
        for args in (('classify', '--quad', '0 0 1'), ('interp-error', '--quad', UNIT_SQUARE, '--k', 'two'), ()):
            code, _, err = run_from_argv(*args)
            self.assertEqual(code, 2, args)
            self.assertIn(json.loads(err)['error'], {'parse_error', 'usage_error'})

    def test_grid_out_of_range(self):
        code, _, err = run_from_argv('cex1', '--grid', '0.2 0.6')
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(err)['error'], 'grid_out_of_range')

    def test_missing_file(self):
        code, _, err = run_from_argv('classify', '--quads-file', '/nonexistent/quads.txt')
        self.assertEqual(code, 2)
        self.assertEqual(json.loads(err)['path'], '/nonexistent/quads.txt')

    def test_unexpected_exception(self):
        with mock.patch.object(ConditionService, 'classify', side_effect=ValueError('boom')):
            code, _, err = run_from_argv('classify', '--quad', UNIT_SQUARE)
        self.assertEqual(code, 1)
        self.assertEqual(len(err.strip().splitlines()), 1)
        payload = json.loads(err)
        self.assertEqual(payload['error'], 'internal_error')
        self.assertEqual(payload['exception'], 'ValueError')
