import json
from dataclasses import dataclass, field

import numpy as np
from django.db import models

import quadlab


class OutputFormat(models.TextChoices):
    JSON = 'json', 'JSON document'
    CSV = 'csv', 'CSV table preceded by a JSON comment line'


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, tuple):
        return list(value)
    raise TypeError(f'{type(value).__name__} is not JSON serializable')


def dumps(payload, indent=2):
    return json.dumps(payload, indent=indent, default=_jsonable)


@dataclass
class OutputEnvelope:
    """Wraps every result with the tool version and the resolved input"""

    command: str
    format: str = OutputFormat.JSON
    destination: str = None
    inputs: dict = field(default_factory=dict)
    version: str = quadlab.__version__

    def header(self):
        return {'tool': 'quadlab', 'version': self.version, 'command': self.command, 'input': self.inputs}

    def render(self, result, frame=None):
        if self.format == OutputFormat.CSV and frame is not None:
            body = frame.to_csv(index=False, float_format='%.17g', lineterminator='\n')
            return '# ' + dumps({**self.header(), 'summary': result}, indent=None) + '\n' + body
        return dumps({**self.header(), 'result': result}) + '\n'

    def write(self, stream, result, frame=None):
        text = self.render(result, frame)
        if self.destination:
            with open(self.destination, 'w') as handle:
                handle.write(text)
        else:
            stream.write(text, ending='')
        return text
