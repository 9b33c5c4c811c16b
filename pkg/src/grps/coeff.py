"""Rough scalar coefficient fields sampled per fine triangle."""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, InvalidCoefficient, RasterParseError

__all__ = ['CoefficientField', 'RasterGrid', 'MSTRIG_EPS', 'mstrig_eval',
           'mstrig_grad', 'sample_field', 'load_raster', 'write_raster',
           'channel_raster']

MSTRIG_EPS = (1 / 5, 1 / 13, 1 / 17, 1 / 31, 1 / 65)


def mstrig_eval(x1, x2):
    """Multiscale trigonometric coefficient on [0, 1]^2 (vectorised)."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    e1, e2, e3, e4, e5 = MSTRIG_EPS
    tp = 2 * np.pi
    s = ((1.1 + np.sin(tp * x1 / e1)) / (1.1 + np.sin(tp * x2 / e1))
         + (1.1 + np.sin(tp * x2 / e2)) / (1.1 + np.cos(tp * x1 / e2))
         + (1.1 + np.cos(tp * x2 / e3)) / (1.1 + np.sin(tp * x1 / e3))
         + (1.1 + np.sin(tp * x2 / e4)) / (1.1 + np.cos(tp * x1 / e4))
         + (1.1 + np.cos(tp * x1 / e5)) / (1.1 + np.sin(tp * x2 / e5))
         + np.sin(4 * x1**2 * x2**2) + 1)
    return s / 6


def mstrig_grad(x1, x2):
    """Analytic gradient of :func:`mstrig_eval`, term by term."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    e1, e2, e3, e4, e5 = MSTRIG_EPS
    tp = 2 * np.pi
    g1 = np.zeros(np.broadcast(x1, x2).shape)
    g2 = np.zeros_like(g1)

    # (1.1 + sin(a x1)) / (1.1 + sin(a x2))
    a = tp / e1
    g1 += a * np.cos(a * x1) / (1.1 + np.sin(a * x2))
    g2 += -(1.1 + np.sin(a * x1)) * a * np.cos(a * x2) / (1.1 + np.sin(a * x2))**2
    # (1.1 + sin(a x2)) / (1.1 + cos(a x1))
    a = tp / e2
    g1 += (1.1 + np.sin(a * x2)) * a * np.sin(a * x1) / (1.1 + np.cos(a * x1))**2
    g2 += a * np.cos(a * x2) / (1.1 + np.cos(a * x1))
    # (1.1 + cos(a x2)) / (1.1 + sin(a x1))
    a = tp / e3
    g1 += -(1.1 + np.cos(a * x2)) * a * np.cos(a * x1) / (1.1 + np.sin(a * x1))**2
    g2 += -a * np.sin(a * x2) / (1.1 + np.sin(a * x1))
    # (1.1 + sin(a x2)) / (1.1 + cos(a x1))
    a = tp / e4
    g1 += (1.1 + np.sin(a * x2)) * a * np.sin(a * x1) / (1.1 + np.cos(a * x1))**2
    g2 += a * np.cos(a * x2) / (1.1 + np.cos(a * x1))
    # (1.1 + cos(a x1)) / (1.1 + sin(a x2))
    a = tp / e5
    g1 += -a * np.sin(a * x1) / (1.1 + np.sin(a * x2))
    g2 += -(1.1 + np.cos(a * x1)) * a * np.cos(a * x2) / (1.1 + np.sin(a * x2))**2
    # sin(4 x1^2 x2^2)
    c = np.cos(4 * x1**2 * x2**2)
    g1 += 8 * x1 * x2**2 * c
    g2 += 8 * x1**2 * x2 * c
    return g1 / 6, g2 / 6


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Piecewise-constant coefficient, one positive value per fine triangle."""
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise InvalidCoefficient('coefficient values must be a finite 1-D array')
        if np.any(v <= 0):
            raise InvalidCoefficient(f'coefficient must be positive, min = {v.min():g}')
        v.setflags(write=False)
        object.__setattr__(self, 'values', v)

    @property
    def kappa_min(self):
        return float(self.values.min())

    @property
    def kappa_max(self):
        return float(self.values.max())

    @property
    def contrast(self):
        return self.kappa_max / self.kappa_min

    def scaled(self, s):
        return CoefficientField(self.values * s)


@dataclass(frozen=True, eq=False)
class RasterGrid:
    """Cell-valued raster over a bounding box, row-major with y outer.

    When ``log10`` is set the stored ``values`` are exponents and
    :meth:`decoded` returns ``10 ** values``.
    """
    nx: int
    ny: int
    bbox: tuple
    values: np.ndarray
    log10: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if self.nx < 1 or self.ny < 1:
            raise InvalidArgument('raster needs at least one cell per axis')
        if v.size != self.nx * self.ny:
            raise InvalidArgument(f'expected {self.nx * self.ny} values, got {v.size}')
        if not np.all(np.isfinite(v)):
            raise InvalidArgument('raster values must be finite')
        xmin, xmax, ymin, ymax = self.bbox
        if not (xmax > xmin and ymax > ymin):
            raise InvalidArgument('degenerate raster bounding box')
        object.__setattr__(self, 'values', v)
        object.__setattr__(self, 'bbox', tuple(float(b) for b in self.bbox))

    def decoded(self):
        return 10.0 ** self.values if self.log10 else self.values.copy()

    def lookup(self, x, y):
        """Decoded cell values at points; half-open cells, last cell closed."""
        xmin, xmax, ymin, ymax = self.bbox
        ix = np.floor((np.asarray(x) - xmin) / (xmax - xmin) * self.nx).astype(np.int64)
        iy = np.floor((np.asarray(y) - ymin) / (ymax - ymin) * self.ny).astype(np.int64)
        ix = np.clip(ix, 0, self.nx - 1)
        iy = np.clip(iy, 0, self.ny - 1)
        return self.decoded()[iy * self.nx + ix]


def sample_field(spec, h):
    """Sample an analytic ``fn(x1, x2)``, a constant, or a :class:`RasterGrid`
    at the fine-triangle centroids of hierarchy ``h``."""
    centroids = h.fine.vertices[h.fine.triangles].mean(axis=1)
    x, y = centroids[:, 0], centroids[:, 1]
    if isinstance(spec, RasterGrid):
        vals = spec.lookup(x, y)
    elif callable(spec):
        vals = np.broadcast_to(np.asarray(spec(x, y), dtype=float), x.shape).copy()
    else:
        vals = np.full(x.shape, float(spec))
    return CoefficientField(vals)


def _parse_float(tok, line):
    try:
        val = float(tok)
    except ValueError:
        raise RasterParseError(f'not a number: {tok!r}', line) from None
    if not np.isfinite(val):
        raise RasterParseError(f'non-finite entry {tok!r}', line)
    return val


def load_raster(path):
    """Read the text raster format (header ``nx ny xmin xmax ymin ymax [log10]``)."""
    lines = Path(path).read_text(encoding='utf-8').splitlines()
    header_line = None
    for k, line in enumerate(lines):
        if line.strip():
            header_line = k
            break
    if header_line is None:
        raise RasterParseError('empty raster file', 1)
    tokens = lines[header_line].split()
    lineno = header_line + 1
    log10 = False
    if len(tokens) == 7:
        if tokens[6].lower() != 'log10':
            raise RasterParseError(f'unknown header flag {tokens[6]!r}', lineno)
        log10 = True
    elif len(tokens) != 6:
        raise RasterParseError('header must be "nx ny xmin xmax ymin ymax [log10]"', lineno)
    try:
        nx, ny = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise RasterParseError('nx and ny must be integers', lineno) from None
    if nx < 1 or ny < 1:
        raise RasterParseError('nx and ny must be positive', lineno)
    bbox = tuple(_parse_float(t, lineno) for t in tokens[2:6])
    if not (bbox[1] > bbox[0] and bbox[3] > bbox[2]):
        raise RasterParseError('degenerate bounding box', lineno)

    expected = nx * ny
    values = []
    for k in range(header_line + 1, len(lines)):
        for tok in lines[k].split():
            if len(values) == expected:
                raise RasterParseError(f'expected {expected} values, found more', k + 1)
            values.append(_parse_float(tok, k + 1))
    if len(values) != expected:
        raise RasterParseError(f'expected {expected} values, got {len(values)}', len(lines))
    return RasterGrid(nx, ny, bbox, np.array(values), log10)


def write_raster(grid, path):
    xmin, xmax, ymin, ymax = grid.bbox
    head = f'{grid.nx} {grid.ny} {xmin!r} {xmax!r} {ymin!r} {ymax!r}'
    if grid.log10:
        head += ' log10'
    rows = [' '.join(f'{v:.17g}' for v in grid.values[j * grid.nx:(j + 1) * grid.nx])
            for j in range(grid.ny)]
    Path(path).write_text('\n'.join([head] + rows) + '\n', encoding='utf-8')


def channel_raster(n=64, contrast=1e6, width=2, spacing=8):
    """Synthetic high-contrast raster: horizontal and vertical channels of
    value ``contrast`` on a background of 1, ``width`` cells thick every
    ``spacing`` cells."""
    iy, ix = np.divmod(np.arange(n * n), n)
    chan = ((ix % spacing) < width) | ((iy % spacing) < width)
    vals = np.where(chan, np.log10(contrast), 0.0)
    return RasterGrid(n, n, (0.0, 1.0, 0.0, 1.0), vals, log10=True)
