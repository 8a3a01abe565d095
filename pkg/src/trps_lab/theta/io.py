"""CSV snapshot and histogram formats (17 significant digits, ``\\n`` endings)."""

from __future__ import annotations

import csv

import numpy as np

from ..errors import InvalidInputError
from .particles import ParticleSet
from .statistics import PhaseSpaceHistogram

SNAPSHOT_HEADER = ["id", "x1", "x2", "x3", "p1", "p2", "p3", "s1", "s2", "s3", "m"]
HISTOGRAM_HEADER = ["eps_lo", "eps_hi", "f"]


def fmt(value) -> str:
    return "%.17g" % value


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (str, int, np.integer)) else fmt(v) for v in row])


def read_rows(path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        got = next(reader, None)
        if got != header:
            raise InvalidInputError(f"{path}: expected header {','.join(header)}, got {got}")
        return [row for row in reader if row]


def write_snapshot(path, particles: ParticleSet):
    rows = (
        [int(i), *x, *p, *s, m]
        for i, x, p, s, m in zip(particles.ids, particles.x, particles.p, particles.s, particles.m)
    )
    write_rows(path, SNAPSHOT_HEADER, rows)


def read_snapshot(path) -> ParticleSet:
    rows = read_rows(path, SNAPSHOT_HEADER)
    if not rows:
        return ParticleSet(np.empty((0, 3)), np.empty((0, 3)), np.empty((0, 3)), np.empty(0))
    ids = np.array([int(r[0]) for r in rows])
    data = np.array([[float(v) for v in r[1:]] for r in rows])
    return ParticleSet(data[:, 0:3], data[:, 3:6], data[:, 6:9], data[:, 9], ids)


def write_histogram(path, hist: PhaseSpaceHistogram):
    write_rows(path, HISTOGRAM_HEADER, zip(hist.edges[:-1], hist.edges[1:], hist.f))


def read_histogram(path) -> PhaseSpaceHistogram:
    rows = np.array([[float(v) for v in r] for r in read_rows(path, HISTOGRAM_HEADER)])
    edges = np.append(rows[:, 0], rows[-1, 1])
    return PhaseSpaceHistogram.from_samples(edges, rows[:, 2])
