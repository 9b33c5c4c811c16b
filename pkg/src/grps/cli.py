"""Command line entry point: ``grps <subcommand> [--key value ...]``.

Exit codes: 0 success, 1 compute failure, 2 configuration error.
"""
import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, GrpsError

log = logging.getLogger('grps')

SUBCOMMANDS = ('mesh-info', 'basis', 'decay', 'converge', 'wave')


def fmt(x):
    """17-significant-digit text for floats, plain text for everything else."""
    if isinstance(x, (float, np.floating)):
        return f'{float(x):.17g}'
    return str(x)


def parse_int_list(text):
    """``"8,16,32"`` or ``"0..6"`` (inclusive) or a mix, to a list of ints."""
    out = []
    for part in str(text).split(','):
        part = part.strip()
        if not part:
            continue
        try:
            if '..' in part:
                a, b = part.split('..')
                a, b = int(a), int(b)
                if b < a:
                    raise ConfigError(f'empty range {part!r}')
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError(f'not an integer list: {text!r}') from None
    if not out:
        raise ConfigError(f'empty list: {text!r}')
    return out


def coefficient_spec(text):
    """``mstrig`` | ``constant:<value>`` | ``raster:<path>``."""
    from .coeff import load_raster, mstrig_eval

    text = str(text)
    if text == 'mstrig':
        return mstrig_eval
    kind, _, arg = text.partition(':')
    if kind == 'constant':
        try:
            v = float(arg)
        except ValueError:
            raise ConfigError(f'bad constant coefficient {text!r}') from None
        if not v > 0:
            raise ConfigError('constant coefficient must be positive')
        return v
    if kind == 'raster':
        try:
            return load_raster(arg)
        except (OSError, ValueError) as exc:
            raise ConfigError(f'cannot read raster {arg!r}: {exc}') from exc
    raise ConfigError(f'unknown coefficient spec {text!r}')


def load_spec(text):
    """``sin`` (sin x1, the default) | ``constant:<value>`` | ``zero``."""
    text = str(text)
    if text == 'sin':
        return lambda x1, x2: np.sin(x1)
    if text == 'zero':
        return 0.0
    kind, _, arg = text.partition(':')
    if kind == 'constant':
        try:
            return float(arg)
        except ValueError:
            pass
    raise ConfigError(f'unknown load spec {text!r}')


def _positive_int(name, value):
    if value is None or int(value) < 1:
        raise ConfigError(f'{name} must be a positive integer, got {value}')
    return int(value)


def validate(cfg):
    """Check a config dict before any computation; returns normalised copy."""
    cfg = dict(cfg)
    cmd = cfg.get('command')
    if cmd not in SUBCOMMANDS:
        raise ConfigError(f'unknown subcommand {cmd!r}')
    case = str(cfg.get('case', 'd')).lower()
    if case not in ('v', 'e', 'd'):
        raise ConfigError(f'case must be one of v, e, d; got {case!r}')
    cfg['case'] = case
    if cmd == 'converge':
        cfg['Nc'] = parse_int_list(cfg['Nc'])
        for n in cfg['Nc']:
            _positive_int('Nc', n)
            if n & (n - 1):
                raise ConfigError(f'converge needs power-of-two Nc, got {n}')
            if n > 2 ** int(cfg['fine_level']):
                raise ConfigError(f'Nc = {n} is finer than h = 2^-{cfg["fine_level"]}')
    else:
        cfg['Nc'] = _positive_int('Nc', parse_int_list(cfg['Nc'])[0])
    if cmd != 'converge':
        if cfg.get('J') is None or int(cfg['J']) < 0:
            raise ConfigError(f'J must be a nonnegative integer, got {cfg.get("J")}')
        cfg['J'] = int(cfg['J'])
        if cmd != 'mesh-info' and case in ('e', 'd') and cfg['J'] < 2:
            raise ConfigError(f'case {case} needs J >= 2')
        if cmd != 'mesh-info' and cfg['J'] < 1:
            raise ConfigError('basis construction needs J >= 1')
    elif case in ('e', 'd'):
        if min(int(cfg['fine_level']) - (n.bit_length() - 1) for n in cfg['Nc']) < 2:
            raise ConfigError(f'case {case} needs J >= 2 for every Nc')
    cfg['levels'] = parse_int_list(cfg.get('levels', '0'))
    if min(cfg['levels']) < 0:
        raise ConfigError('levels must be nonnegative')
    if cmd == 'wave':
        from .wave import step_count
        try:
            step_count(float(cfg['dt']), float(cfg['T']))
        except GrpsError as exc:
            raise ConfigError(str(exc)) from exc
    coefficient_spec(cfg['coeff'])
    load_spec(cfg['g'])
    cfg['threads'] = _positive_int('threads', cfg['threads'])
    return cfg


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def _write_config(cfg, out):
    if out is None:
        return
    p = Path(str(out) + '.config.json')
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(cfg, indent=2, sort_keys=True) + '\n')


def _setup(cfg, J=None):
    from .coeff import sample_field
    from .fem import assemble_load, fine_operator
    from .measurements import build_measurements
    from .mesh import build_coarse_mesh, refine

    h = refine(build_coarse_mesh(cfg['Nc']), cfg['J'] if J is None else J)
    kappa = sample_field(coefficient_spec(cfg['coeff']), h)
    op = fine_operator(h, kappa)
    m = build_measurements(h, cfg['case'])
    b = assemble_load(h, load_spec(cfg['g']))
    return h, op, m, b


def cmd_mesh_info(cfg):
    from .mesh import build_coarse_mesh, refine

    c = build_coarse_mesh(cfg['Nc'])
    h = refine(c, cfg['J'])
    Nc = c.N
    info = {
        'Nc': Nc, 'J': h.J, 'H': h.H, 'h': h.h,
        'coarse_diameter': c.diameter, 'fine_diameter': h.fine.diameter,
        'coarse': {
            'vertices': c.n_vertices, 'triangles': c.n_triangles, 'edges': c.n_edges,
            'interior_edges': int(len(c.interior_edges)),
            'interior_vertices': int(len(c.interior_vertices)),
        },
        'closed_form': {
            'triangles': 2 * Nc**2, 'edges': 3 * Nc**2 + 2 * Nc,
            'interior_edges': 3 * Nc**2 - 2 * Nc, 'interior_vertices': (Nc - 1)**2,
        },
        'fine': {
            'vertices': h.fine.n_vertices, 'triangles': h.fine.n_triangles,
            'edges': h.fine.n_edges, 'interior_dofs': h.n_dofs,
        },
        'measurements': {'V': 2 * Nc**2, 'E': 3 * Nc**2 - 2 * Nc, 'D': 5 * Nc**2 - 2 * Nc},
        'extremes': {
            'min_area': float(c.areas.min()), 'max_area': float(c.areas.max()),
            'min_edge': float(c.edge_lengths.min()), 'max_edge': float(c.edge_lengths.max()),
        },
    }
    text = json.dumps(info, indent=2, sort_keys=True) + '\n'
    sys.stdout.write(text)
    if cfg.get('out'):
        Path(cfg['out']).write_text(text)
    return 0


def write_basis(path, basis, Nc, J):
    """Basis export: header line then, per row, ``row i nnz`` and ``dof value`` lines."""
    M = basis.matrix.tocsr()
    lines = [f'grps-basis case={basis.case} Nc={Nc} J={J} level={basis.level} '
             f'N={M.shape[0]} n_dofs={M.shape[1]}']
    for i in range(M.shape[0]):
        a, b = M.indptr[i], M.indptr[i + 1]
        lines.append(f'row {i} {b - a}')
        lines.extend(f'{j} {v:.17g}' for j, v in zip(M.indices[a:b], M.data[a:b]))
    Path(path).write_text('\n'.join(lines) + '\n')


def read_basis(path):
    """Inverse of :func:`write_basis`; returns (header dict, CSR matrix)."""
    import scipy.sparse as sp

    it = iter(Path(path).read_text().splitlines())
    head = next(it).split()
    if head[0] != 'grps-basis':
        raise ValueError('not a grps basis file')
    meta = dict(kv.split('=') for kv in head[1:])
    N, n = int(meta['N']), int(meta['n_dofs'])
    indptr, idx, vals = [0], [], []
    for _ in range(N):
        _, _, nnz = next(it).split()
        for _ in range(int(nnz)):
            j, v = next(it).split()
            idx.append(int(j))
            vals.append(float(v))
        indptr.append(len(idx))
    return meta, sp.csr_matrix((vals, idx, indptr), shape=(N, n))


def cmd_basis(cfg):
    from .basis import build_all

    h, op, m, _ = _setup(cfg)
    rows = []
    for level in cfg['levels']:
        B = build_all(level, op.A, m, h, threads=cfg['threads'])
        if cfg.get('export'):
            write_basis(f'{cfg["export"]}.l{level}.txt', B, h.coarse.N, h.J)
        for i in range(B.N):
            rows.append([cfg['case'].upper(), level, i, int(B.active_counts[i]),
                         int(B.matrix.indptr[i + 1] - B.matrix.indptr[i]),
                         float(B.kkt_residuals[i])])
    _write_csv(cfg['out'], ['case', 'level', 'row', 'active_constraints', 'nnz',
                            'constraint_residual'], rows)
    return 0


def _resolve_row(spec, h, m):
    from .basis import central_rows

    if str(spec) == 'center':
        return central_rows(h, m, 1)[0]
    try:
        i = int(spec)
    except ValueError:
        raise ConfigError(f'row must be an integer or "center", got {spec!r}') from None
    if not 0 <= i < m.N:
        raise ConfigError(f'row {i} out of range 0..{m.N - 1}')
    return i


def cmd_decay(cfg):
    from .basis import decay_profile

    h, op, m, _ = _setup(cfg)
    i = _resolve_row(cfg['row'], h, m)
    levels = cfg['levels']
    if levels != list(range(levels[0], levels[-1] + 1)) or levels[0] != 0:
        raise ConfigError('decay levels must be a range starting at 0, e.g. 0..6')
    prof = decay_profile(i, op.A, m, h, level_max=levels[-1])
    rows = [[cfg['case'].upper(), i, int(l), float(d), float(e), prof.rho]
            for l, d, e in zip(prof.levels, prof.distances, prof.energies)]
    _write_csv(cfg['out'], ['case', 'row', 'level', 'energy_distance', 'energy_norm', 'rho'],
               rows)
    return 0


def cmd_converge(cfg):
    from .homog import CSV_FIELDS, converge_study

    reps = converge_study(cfg['case'].upper(), coefficient_spec(cfg['coeff']),
                          load_spec(cfg['g']), cfg['Nc'], cfg['levels'],
                          fine_level=cfg['fine_level'], threads=cfg['threads'])
    rows = []
    for r in reps:
        if not cfg.get('timings'):
            r.build_seconds = 0.0
            r.solve_seconds = 0.0
        rows.append(r.row())
    _write_csv(cfg['out'], CSV_FIELDS, rows)
    return 1 if any(r.error for r in reps) else 0


def cmd_wave(cfg):
    from .basis import build_all
    from .wave import coarse_wave_system, wave_run

    h, op, m, _ = _setup(cfg)
    level = cfg['levels'][0]
    B = build_all(level, op.A, m, h, threads=cfg['threads'])
    sys_ = coarse_wave_system(op, B)
    run = wave_run(sys_, op, h, dt=float(cfg['dt']), T=float(cfg['T']))
    rows = []
    if cfg.get('per_step', True):
        rows = [[float(t), float(e), float(r)]
                for t, e, r in zip(run.times[1:], run.energy[1:], run.rel_error_at_t[1:])]
    rows.append(['summary', float(run.energy[-1]), run.rel_error])
    _write_csv(cfg['out'], ['t', 'energy', 'rel_h1_error_at_t'], rows)
    summary = {
        'case': cfg['case'].upper(), 'Nc': h.coarse.N, 'J': h.J, 'level': level,
        'dt': run.dt, 'T': run.T, 'steps': run.steps,
        'rel_space_time_error': run.rel_error, 'abs_space_time_error': run.abs_error,
        'reference_energy_initial': float(run.reference_energy[0]),
        'reference_energy_max_ratio': float(run.reference_energy.max() / run.reference_energy[0]),
    }
    Path(str(cfg['out']) + '.summary.json').write_text(
        json.dumps(summary, indent=2, sort_keys=True, default=fmt) + '\n')
    return 0


COMMANDS = {'mesh-info': cmd_mesh_info, 'basis': cmd_basis, 'decay': cmd_decay,
            'converge': cmd_converge, 'wave': cmd_wave}

DEFAULTS = {
    'case': 'd', 'Nc': '8', 'J': 3, 'levels': '6', 'coeff': 'mstrig', 'g': 'sin',
    'fine_level': 7, 'dt': 1 / 200, 'T': 1.0, 'out': None, 'threads': None,
    'seed': 0, 'row': 'center', 'export': None, 'timings': False, 'per_step': True,
}


def build_parser():
    p = argparse.ArgumentParser(prog='grps', description=__doc__.splitlines()[0])
    p.add_argument('-v', '--verbose', action='store_true')
    sub = p.add_subparsers(dest='command', required=True)

    def common(sp_, out_required=True):
        sp_.add_argument('--config', help='effective-config JSON written by an earlier run')
        sp_.add_argument('--case', choices=['v', 'e', 'd', 'V', 'E', 'D'])
        sp_.add_argument('--Nc')
        sp_.add_argument('--J', type=int)
        sp_.add_argument('--levels')
        sp_.add_argument('--coeff', help='mstrig | constant:<v> | raster:<path>')
        sp_.add_argument('--g', help='sin | zero | constant:<v>')
        sp_.add_argument('--out')
        sp_.add_argument('--threads', type=int)
        sp_.add_argument('--seed', type=int)

    common(sub.add_parser('mesh-info', help='entity counts and mesh sizes as JSON'))
    b = sub.add_parser('basis', help='build localized bases, write diagnostics CSV')
    common(b)
    b.add_argument('--export', help='path prefix for basis export files')
    d = sub.add_parser('decay', help='truncation-decay profile of one row')
    common(d)
    d.add_argument('--row', help='row index or "center"')
    c = sub.add_parser('converge', help='coarse Galerkin error sweep')
    common(c)
    c.add_argument('--fine-level', dest='fine_level', type=int,
                   help='fine mesh size h = 2^-fine_level shared by all Nc')
    c.add_argument('--timings', action='store_true', default=None,
                   help='record wall-clock seconds (breaks byte reproducibility)')
    w = sub.add_parser('wave', help='coarse wave run against the fine reference')
    common(w)
    w.add_argument('--dt', type=float)
    w.add_argument('--T', type=float)
    w.add_argument('--summary-only', dest='per_step', action='store_false', default=None)
    return p


def resolve_config(args):
    cfg = dict(DEFAULTS)
    if getattr(args, 'config', None):
        try:
            saved = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f'cannot read config {args.config!r}: {exc}') from exc
        if saved.get('command') not in (None, args.command):
            raise ConfigError(f'config is for {saved["command"]!r}, not {args.command!r}')
        cfg.update(saved)
    for k, v in vars(args).items():
        if k in ('config', 'verbose') or v is None:
            continue
        cfg[k] = v
    cfg['command'] = args.command
    if cfg.get('threads') is None:
        env = os.environ.get('GRPS_THREADS')
        try:
            cfg['threads'] = int(env) if env else 1
        except ValueError:
            raise ConfigError(f'GRPS_THREADS must be an integer, got {env!r}') from None
    if args.command != 'mesh-info' and not cfg.get('out'):
        raise ConfigError('--out is required')
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        cfg = validate(resolve_config(args))
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f'grps: error: {exc}', file=sys.stderr)
        return 2
    np.random.seed(cfg['seed'])
    saved = dict(cfg)
    saved['Nc'] = ','.join(map(str, cfg['Nc'])) if isinstance(cfg['Nc'], list) else cfg['Nc']
    saved['levels'] = ','.join(map(str, cfg['levels']))
    _write_config(saved, cfg.get('out') if args.command != 'mesh-info' else None)
    try:
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f'grps: error: {exc}', file=sys.stderr)
        return 2
    except GrpsError as exc:
        print(f'grps: computation failed: {exc}', file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
