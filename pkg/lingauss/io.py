"""Problem, sequence and result files.

Problem document (JSON, or YAML by file suffix):

    {"dim": D, "A": [[D entries] per constraint], "b": [M entries],
     "mean": [D entries] (optional), "cov": [[D entries] * D] (optional)}

Rows of "A" are the aₘᵀ. Malformed documents are rejected with the byte
offset (syntax) or the field (content) at fault.

Results are written as JSON, floats in their shortest round-trip
representation; samples as CSV of 17 significant digits.

"""
import csv
import hashlib
import json
import math
import pathlib
import sys

import yaml

from lingauss.constraints import GaussianProblem
from lingauss.exc import ProblemError, ProblemFormatError
from lingauss.nestings import ShiftSequence


YAML_SUFFIXES = ('.yaml', '.yml')


def file_fingerprint(path):
    """Content hash of a file."""
    return hashlib.sha256(pathlib.Path(path).read_bytes()).hexdigest()


#
# reading
#

def _parse(path):
    path = pathlib.Path(path)

    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ProblemFormatError(exc.strerror or str(exc), path=path) from None

    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as exc:
        raise ProblemFormatError('invalid UTF-8', path=path, line=None, column=None,
                                 offset=exc.start) from None

    if path.suffix.lower() in YAML_SUFFIXES:
        try:
            return yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, 'problem_mark', None)

            if mark is None:
                raise ProblemFormatError(str(exc), path=path) from None

            raise ProblemFormatError(
                getattr(exc, 'problem', None) or str(exc),
                path=path,
                line=mark.line + 1,
                column=mark.column + 1,
                offset=len(text[:mark.index].encode('utf-8')),
            ) from None

    try:
        # NaN/Infinity literals parse here and are rejected by field below
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(
            exc.msg,
            path=path,
            line=exc.lineno,
            column=exc.colno,
            offset=len(text[:exc.pos].encode('utf-8')),
        ) from None


class _Fields:
    """Field-locating validation of a parsed document."""

    def __init__(self, document, path):
        if not isinstance(document, dict):
            raise ProblemFormatError('expected an object at top level', path=path)

        self.document = document
        self.path = path

    def error(self, message, field):
        return ProblemFormatError(message, field, self.path)

    def get(self, key, required=True):
        try:
            return self.document[key]
        except KeyError:
            if required:
                raise self.error('missing field', key) from None

            return None

    def real(self, value, field):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f'expected a number not {value!r}', field)

        try:
            value = float(value)
        except OverflowError:
            raise self.error('non-finite value (integer beyond float range)', field) from None

        if not math.isfinite(value):
            raise self.error(f'non-finite value {value!r}', field)

        return value

    def vector(self, key, length=None, required=True):
        value = self.get(key, required)

        if value is None:
            return None

        if not isinstance(value, list):
            raise self.error('expected a list', key)

        if length is not None and len(value) != length:
            raise self.error(f'expected {length} entries, found {len(value)}', key)

        return [self.real(entry, f'{key}[{index}]') for (index, entry) in enumerate(value)]

    def matrix(self, key, width, height=None, required=True):
        value = self.get(key, required)

        if value is None:
            return None

        if not isinstance(value, list) or not value:
            raise self.error('expected a non-empty list of rows', key)

        if height is not None and len(value) != height:
            raise self.error(f'expected {height} rows, found {len(value)}', key)

        rows = []

        for (index, row) in enumerate(value):
            field = f'{key}[{index}]'

            if not isinstance(row, list):
                raise self.error('expected a row (list)', field)

            if len(row) != width:
                raise self.error(f'ragged row: expected {width} entries, found {len(row)}', field)

            rows.append([self.real(entry, f'{field}[{column}]')
                         for (column, entry) in enumerate(row)])

        return rows


def load_problem(path):
    """Read a GaussianProblem from its JSON (or YAML) document."""
    fields = _Fields(_parse(path), path)

    dim = fields.get('dim')

    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise fields.error(f'expected a positive integer not {dim!r}', 'dim')

    document = {
        'dim': dim,
        'A': fields.matrix('A', dim),
    }

    document['b'] = fields.vector('b', len(document['A']))
    document['mean'] = fields.vector('mean', dim, required=False)
    document['cov'] = fields.matrix('cov', dim, dim, required=False)

    try:
        return GaussianProblem.from_mapping(document)
    except ProblemError as exc:
        raise ProblemFormatError(exc.message, exc.field, path) from None


def load_sequence(path):
    """Read a ShiftSequence from its seq.json document."""
    fields = _Fields(_parse(path), path)

    document = {'gammas': fields.vector('gammas')}

    for key in ('rho_hats', 'seeds', 'biased_log2_z'):
        if key in fields.document:
            document[key] = fields.document[key]

    try:
        return ShiftSequence.from_mapping(document)
    except (TypeError, ValueError) as exc:
        raise ProblemFormatError(str(exc), 'gammas', path) from None


def parse_point(text, dim):
    """Point from comma-separated decimals (e.g. --x0)."""
    try:
        point = [float(entry) for entry in text.split(',')]
    except ValueError as exc:
        raise ProblemError(str(exc), 'x0') from None

    if len(point) != dim or not all(math.isfinite(entry) for entry in point):
        raise ProblemError(f'expected {dim} finite entries', 'x0')

    return point


#
# writing
#

def _jsonable(value):
    """Non-finite floats become null (JSON has no NaN)."""
    if isinstance(value, float) and not math.isfinite(value):
        return None

    if isinstance(value, dict):
        return {key: _jsonable(item) for (key, item) in value.items()}

    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]

    return value


def dumps(document):
    return json.dumps(_jsonable(document), indent=2, allow_nan=False) + '\n'


def write_json(path, document):
    """Write document to path ('-' for stdout)."""
    text = dumps(document)

    if str(path) == '-':
        sys.stdout.write(text)
    else:
        pathlib.Path(path).write_text(text, encoding='utf-8')


def read_json(path):
    return json.loads(pathlib.Path(path).read_text(encoding='utf-8'))


def write_samples(path, samples):
    """Write one sample per row, 17 significant digits per column."""
    def write(stream):
        writer = csv.writer(stream, lineterminator='\n')

        for sample in samples:
            writer.writerow(format(value, '.17g') for value in sample)

    if str(path) == '-':
        write(sys.stdout)
    else:
        with open(path, 'w', newline='', encoding='utf-8') as stream:
            write(stream)


def read_samples(path):
    with open(path, newline='', encoding='utf-8') as stream:
        return [[float(value) for value in row] for row in csv.reader(stream)]
