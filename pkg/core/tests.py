from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from django.test import SimpleTestCase, override_settings

from .conf import quadlab_setting
from .exceptions import (
    ConvexityError, DegenerateQuad, FlagsNotSatisfied, NumericalFailure, QuadLabError, StudyFailed, UsageError
)


class SettingsTest(SimpleTestCase):
    def test_reads_project_settings(self):
        self.assertEqual(quadlab_setting('RATE_WINDOW'), settings.QUADLAB['RATE_WINDOW'])

    @override_settings(QUADLAB={**settings.QUADLAB, 'FLAG_CONSTANT': 8.0})
    def test_override(self):
        self.assertEqual(quadlab_setting('FLAG_CONSTANT'), 8.0)
        self.assertEqual(quadlab_setting('CONVEXITY_RTOL'), settings.QUADLAB['CONVEXITY_RTOL'])

    @override_settings(QUADLAB={})
    def test_missing_setting(self):
        with self.assertRaises(ImproperlyConfigured):
            quadlab_setting('FLAG_CONSTANT')


class ErrorTest(SimpleTestCase):
    def test_exit_codes(self):
        self.assertEqual(ConvexityError('x').exit_code, 2)
        self.assertEqual(UsageError('x').exit_code, 2)
        self.assertEqual(FlagsNotSatisfied('x').exit_code, 2)
        self.assertEqual(NumericalFailure('x').exit_code, 1)
        self.assertEqual(StudyFailed('x').exit_code, 3)

    def test_hierarchy(self):
        self.assertTrue(issubclass(ConvexityError, DegenerateQuad))
        self.assertTrue(issubclass(StudyFailed, QuadLabError))

    def test_flat_dict(self):
        error = FlagsNotSatisfied('Flags fail', node=[1, 1], attained={'d1': 9.0})
        self.assertEqual(
            error.as_dict(),
            {'error': 'flags_not_satisfied', 'message': 'Flags fail', 'node': [1, 1], 'attained': {'d1': 9.0}},
        )
