import logging
import re

from core.exceptions import DegenerateQuad, ParseError
from quad_geometry.models import CanonicalQuad, ConvexQuad

logger = logging.getLogger(__name__)

SEPARATORS = re.compile(r'[\s,]+')


def _numbers(text, what):
    tokens = [t for t in SEPARATORS.split(text.strip()) if t]
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise ParseError(f'{what} contains a malformed number', text=text)


class InputService:
    """Service for parsing quads, grids and quad files given on the command line"""

    @staticmethod
    def parse_quad(text):
        """Eight numbers "x1 y1 ... x4 y4" as a ConvexQuad"""
        values = _numbers(text, 'Quad')
        if len(values) != 8:
            raise ParseError('A quad needs eight coordinates', count=len(values), text=text)
        return ConvexQuad.from_coords(values)

    @staticmethod
    def parse_canonical(text):
        """Four numbers "a,b,at,bt" as a CanonicalQuad"""
        values = _numbers(text, 'Canonical quad')
        if len(values) != 4:
            raise ParseError('A canonical quad needs a, b, a_tilde, b_tilde', count=len(values), text=text)
        return CanonicalQuad(*values)

    @staticmethod
    def parse_element(text):
        """Canonical element for four numbers, general quad for eight"""
        if len(_numbers(text, 'Element')) == 4:
            return InputService.parse_canonical(text)
        return InputService.parse_quad(text)

    @staticmethod
    def parse_grid(text):
        values = _numbers(text, 'Grid')
        if not values:
            raise ParseError('Grid is empty', text=text)
        return tuple(values)

    @staticmethod
    def read_quads_file(path):
        """Quads of a plain-text file with their 1-based line numbers; blank and '#' lines are skipped"""
        quads = []
        with open(path) as handle:
            for number, line in enumerate(handle, start=1):
                stripped = line.split('#', 1)[0].strip()
                if not stripped:
                    continue
                try:
                    quads.append((number, InputService.parse_quad(stripped)))
                except ParseError as exc:
                    raise ParseError(exc.message, line=number, path=str(path))
                except DegenerateQuad as exc:
                    raise type(exc)(exc.message, line=number, path=str(path), **exc.details)
        logger.debug('Read %d quads from %s', len(quads), path)
        return quads
