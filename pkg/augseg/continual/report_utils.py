"""
Consolidated tables over saved run directories. Nothing is recomputed from predictions:
the summary table copies summary.json's metrics, the per-task table copies its final row.
"""
from pathlib import Path

from ..utils import common_utils, metric_utils
from ..utils.exceptions import ArtifactFormatError, ValidationError
from .run_record import load_run

_SUMMARY_KEYS = ('aa', 'fm', 'ft')


def _fmt(val):
    return '-' if val is None else '%.4f' % val


def build_report(run_dirs, logger=None):
    """
    Returns {'runs': [...], 'failed': [(dir, reason), ...]}; each run entry carries its name,
    mode, metrics and final row. Corrupt directories are reported and skipped.
    """
    logger = common_utils.get_logger(logger)
    if not run_dirs:
        raise ValidationError('report needs at least one run directory')
    runs, failed = [], []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        try:
            summary, _ = load_run(run_dir)
        except (ArtifactFormatError, ValueError, KeyError) as e:
            logger.warning('skipping %s: %s' % (run_dir, e))
            failed.append((str(run_dir), str(e)))
            continue
        runs.append({
            'name': run_dir.name,
            'path': str(run_dir),
            'mode': summary['mode'],
            'variant': summary.get('variant'),
            'domains': summary['domains'],
            'complete': summary.get('complete', False),
            'metrics': summary['metrics'],
            'final_row': summary['final_row'],
        })
    return {'runs': runs, 'failed': failed}


def format_summary_table(runs):
    header = ['run', 'mode'] + ['%s_%s' % (m, k) for m in metric_utils.SEG_METRICS for k in _SUMMARY_KEYS]
    lines = ['\t'.join(header)]
    for run in runs:
        cells = [run['name'], run['mode']]
        for metric in metric_utils.SEG_METRICS:
            vals = run['metrics'].get(metric) or {}
            cells.extend(_fmt(vals.get(k)) for k in _SUMMARY_KEYS)
        lines.append('\t'.join(cells))
    return '\n'.join(lines)


def format_final_table(run, metric='miou'):
    header = ['run'] + list(run['domains'])
    row = [run['name']] + [_fmt(v) for v in run['final_row'][metric]]
    return '\n'.join(['\t'.join(header), '\t'.join(row)])


def format_report(report):
    parts = ['== continual summary ==', format_summary_table(report['runs'])]
    for metric in metric_utils.SEG_METRICS:
        parts.append('== final %s per task ==' % metric)
        parts.extend(format_final_table(run, metric) for run in report['runs'])
    if report['failed']:
        parts.append('== skipped ==')
        parts.extend('%s: %s' % item for item in report['failed'])
    return '\n'.join(parts)
