"""Utility functions for reading and writing files"""

import os
import re
import json

import numpy as np

from astropy.table import Table, MaskedColumn

from . import Defaults

from .utilities import makedir_safe

from .exceptions import DatasetError

_SEPARATOR = re.compile(r'[\s,]+')


def read_dataset_csv(path):
    """Read features and labels from a CSV file

    The header row must be f0,...,f{d-1},label and every cell numeric.

    Parameters
    ----------
    path : `str`
        File path

    Returns
    -------
    features : `np.ndarray`
        N x d float64 matrix
    labels : `np.ndarray`
        Length N int64 array

    Raises
    ------
    DatasetError : naming the line of the first malformed row
    """
    if not os.path.exists(path):
        raise DatasetError("no such file", path)
    with open(path, 'rt') as fin:
        lines = fin.read().splitlines()
    if not lines:
        raise DatasetError("empty file", path, 1)
    header = [cell.strip() for cell in lines[0].split(',')]
    dim = len(header) - 1
    expected = ['f%i' % i for i in range(dim)] + ['label']
    if dim < 1 or header != expected:
        raise DatasetError("header must be %s, got %s" % (','.join(expected), lines[0]), path, 1)
    features = []
    labels = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(',')
        if len(cells) != dim + 1:
            raise DatasetError("expected %i columns, got %i" % (dim + 1, len(cells)), path, lineno)
        try:
            values = np.array(cells, dtype=np.float64)
        except ValueError as err:
            raise DatasetError("non-numeric cell (%s)" % err, path, lineno)
        if not np.all(np.isfinite(values)):
            raise DatasetError("non-finite value", path, lineno)
        if values[-1] != np.round(values[-1]):
            raise DatasetError("label %s is not an integer" % cells[-1].strip(), path, lineno)
        if values[-1] < 0:
            raise DatasetError("label %s is negative" % cells[-1].strip(), path, lineno)
        features.append(values[:-1])
        labels.append(int(values[-1]))
    if not features:
        raise DatasetError("no data rows", path)
    return np.vstack(features), np.array(labels, dtype=np.int64)


def read_vector_file(path):
    """Read a vector of reals separated by whitespace and/or commas

    Raises
    ------
    DatasetError : with the 1-based position of the first bad token
    """
    if not os.path.exists(path):
        raise DatasetError("no such file", path)
    with open(path, 'rt') as fin:
        tokens = [tok for tok in _SEPARATOR.split(fin.read()) if tok]
    if not tokens:
        raise DatasetError("no values found", path)
    values = np.empty(len(tokens))
    for i, tok in enumerate(tokens):
        try:
            values[i] = float(tok)
        except ValueError:
            raise DatasetError("token %i (%s) is not a real number" % (i + 1, tok), path)
        if not np.isfinite(values[i]):
            raise DatasetError("token %i (%s) is not finite" % (i + 1, tok), path)
    return values


def write_checkpoint(path, weights):
    """Write a float checkpoint: 16 byte header (magic, version u32, n u32)
    followed by n little-endian float64 values

    Parameters
    ----------
    path : `str`
        Output file
    weights : `np.ndarray`
        Flat weight vector
    """
    weights = np.ascontiguousarray(weights, dtype='<f8').reshape(-1)
    header = np.zeros(1, dtype=Defaults.CHECKPOINT_HEADER)
    header['magic'] = Defaults.CHECKPOINT_MAGIC
    header['version'] = Defaults.CHECKPOINT_VERSION
    header['n'] = weights.size
    makedir_safe(path)
    with open(path, 'wb') as fout:
        fout.write(header.tobytes())
        fout.write(weights.tobytes())


def read_checkpoint(path):
    """Read a float checkpoint written by `write_checkpoint`

    Returns
    -------
    weights : `np.ndarray`
        Flat float64 weights

    Raises
    ------
    DatasetError : on a bad magic, version or size
    """
    if not os.path.exists(path):
        raise DatasetError("no such checkpoint", path)
    with open(path, 'rb') as fin:
        blob = fin.read()
    hsize = Defaults.CHECKPOINT_HEADER.itemsize
    if len(blob) < hsize:
        raise DatasetError("checkpoint shorter than its header", path)
    header = np.frombuffer(blob[:hsize], dtype=Defaults.CHECKPOINT_HEADER)[0]
    if header['magic'] != Defaults.CHECKPOINT_MAGIC:
        raise DatasetError("bad checkpoint magic %s" % str(header['magic']), path)
    if header['version'] != Defaults.CHECKPOINT_VERSION:
        raise DatasetError("unsupported checkpoint version %i" % header['version'], path)
    weights = np.frombuffer(blob[hsize:], dtype='<f8')
    if weights.size != header['n']:
        raise DatasetError("checkpoint holds %i values, header says %i" % (weights.size, header['n']), path)
    return weights.astype(np.float64)


def _format_table(table):
    for col in table.itercols():
        if col.dtype.kind == 'f':
            col.info.format = Defaults.FLOAT_FORMAT
    return table


def write_metrics_csv(records, path):
    """Write `MetricsRecord` objects to a CSV file with the fixed column order

    Parameters
    ----------
    records : `list`
        `MetricsRecord` objects
    path : `str`
        Output file
    """
    rows = [record.csv_row() for record in records]
    table = Table(rows=rows if rows else None, names=Defaults.METRICS_COLUMNS,
                  dtype=[int, int, 'U8', float, float, float, float, float, float, float, float, int, float])
    table.meta['comments'] = ['quantRelax metrics schema %i' % Defaults.METRICS_SCHEMA_VERSION]
    makedir_safe(path)
    _format_table(table).write(path, format='ascii.csv', overwrite=True)


def read_metrics_csv(path):
    """Read a metrics CSV back into an `astropy.table.Table`"""
    return Table.read(path, format='ascii.csv')


def write_table(columns, path, masks=None):
    """Write a column dictionary to CSV

    Parameters
    ----------
    columns : `dict`
        Column name : values, in output order
    path : `str`
        Output file
    masks : `dict` or `None`
        Column name : boolean mask of entries to leave blank
    """
    masks = {} if masks is None else masks
    table = Table()
    for name, values in columns.items():
        if name in masks:
            table[name] = MaskedColumn(values, mask=masks[name])
        else:
            table[name] = values
    makedir_safe(path)
    _format_table(table).write(path, format='ascii.csv', overwrite=True)


def write_json(obj, path):
    """Write a json document with sorted keys"""
    makedir_safe(path)
    with open(path, 'wt') as fout:
        json.dump(obj, fout, indent=2, sort_keys=True, default=_json_default)
        fout.write('\n')


def read_json(path):
    """Read a json document"""
    if not os.path.exists(path):
        raise DatasetError("no such file", path)
    with open(path, 'rt') as fin:
        try:
            return json.load(fin)
        except json.JSONDecodeError as err:
            raise DatasetError("invalid json: %s" % err.msg, path, err.lineno)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError("%s is not json serializable" % type(obj))
