"""
One run = one directory:

    manifest.json              file list with sha256 digests
    summary.json               AA / FM / FT per metric, per-step selection and storage, config echo;
                               wall-clock numbers live under the 'timing' key only
    config_echo.yaml           resolved configuration
    accuracy_<metric>.csv      rows = training step, cols = task, empty cell = not evaluated
    adapters/, selector/, buffer.bin, masks/   written by the harness
"""
from pathlib import Path

import numpy as np

from ..config import SCHEMA_VERSION, dump_config, to_plain_dict
from ..utils import common_utils, file_utils, metric_utils
from ..utils.exceptions import ArtifactFormatError, IncompleteMatrixError

RUN_MANIFEST_KIND = 'augseg-run'


def _finite_or_none(val):
    if val is None:
        return None
    val = float(val)
    return None if np.isnan(val) else val


class RunRecord(object):
    def __init__(self, domains, mode, seed, variant=None, start_block=None, config=None):
        self.domains = list(domains)
        self.num_tasks = len(self.domains)
        self.mode = mode
        self.seed = seed
        self.variant = variant
        self.start_block = start_block
        self.config = to_plain_dict(config) if config is not None else None
        self.matrices = {m: metric_utils.AccuracyMatrix(self.num_tasks, m) for m in metric_utils.SEG_METRICS}
        self.selection_accuracy = [None] * self.num_tasks
        self.transfer_selection = [None] * self.num_tasks
        self.storage = [None] * self.num_tasks
        self.step_seconds = [None] * self.num_tasks
        self.steps_completed = 0
        self.extra = {}

    def set_scores(self, step, task, scores):
        for metric in metric_utils.SEG_METRICS:
            self.matrices[metric].set(step, task, scores[metric])

    def complete_step(self, step, selection_accuracy=None, transfer_selection=None, storage=None, seconds=None):
        self.selection_accuracy[step] = selection_accuracy
        self.transfer_selection[step] = transfer_selection
        self.storage[step] = storage
        self.step_seconds[step] = seconds
        self.steps_completed = step + 1

    def continual_metrics(self):
        out = {}
        for metric, matrix in self.matrices.items():
            try:
                out[metric] = metric_utils.continual_summary(matrix)
            except IncompleteMatrixError:
                out[metric] = None
        return out

    def final_row(self):
        return {m: [_finite_or_none(v) for v in matrix.values[-1]] for m, matrix in self.matrices.items()}

    def summary(self):
        return {
            'schema_version': SCHEMA_VERSION,
            'mode': self.mode,
            'variant': self.variant,
            'start_block': self.start_block,
            'seed': self.seed,
            'domains': self.domains,
            'num_tasks': self.num_tasks,
            'steps_completed': self.steps_completed,
            'complete': self.steps_completed == self.num_tasks,
            'metrics': self.continual_metrics(),
            'final_row': self.final_row(),
            'diagonal': {m: [_finite_or_none(v) for v in np.diag(mat.values)] for m, mat in self.matrices.items()},
            'selection_accuracy': self.selection_accuracy,
            'transfer_selection': self.transfer_selection,
            'storage': self.storage,
            'extra': self.extra,
            'config': self.config,
            'timing': {
                'step_seconds': self.step_seconds,
                'total_seconds': sum(s for s in self.step_seconds if s is not None),
            },
        }

    def save(self, run_dir):
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        for metric, matrix in self.matrices.items():
            matrix.to_csv(run_dir / ('accuracy_%s.csv' % metric))
        file_utils.write_json(run_dir / 'summary.json', self.summary())
        if self.config is not None:
            dump_config(self.config, run_dir / 'config_echo.yaml')
        write_run_manifest(run_dir)
        return run_dir


def write_run_manifest(run_dir):
    run_dir = Path(run_dir)
    files = sorted(p for p in run_dir.rglob('*')
                   if p.is_file() and p.name != 'manifest.json' and not p.name.startswith('log_')
                   and 'tensorboard' not in p.parts)
    manifest = {
        'kind': RUN_MANIFEST_KIND,
        'version': SCHEMA_VERSION,
        'files': {str(p.relative_to(run_dir)): common_utils.file_digest(p) for p in files},
    }
    file_utils.write_json(run_dir / 'manifest.json', manifest)
    return manifest


def load_run(run_dir):
    """
    Returns (summary, matrices) of a saved run, matrices rebuilt from the CSVs.

    Raises:
        ArtifactFormatError for missing or inconsistent files
    """
    run_dir = Path(run_dir)
    manifest_path = run_dir / 'manifest.json'
    summary_path = run_dir / 'summary.json'
    if not manifest_path.exists() or not summary_path.exists():
        raise ArtifactFormatError('%s is not a run directory (manifest.json / summary.json missing)' % run_dir)
    manifest = file_utils.read_json(manifest_path)
    if manifest.get('kind') != RUN_MANIFEST_KIND or manifest.get('version') != SCHEMA_VERSION:
        raise ArtifactFormatError('%s: unsupported run manifest %s/%s'
                                  % (run_dir, manifest.get('kind'), manifest.get('version')))
    summary = file_utils.read_json(summary_path)
    matrices = {}
    for metric in metric_utils.SEG_METRICS:
        csv_path = run_dir / ('accuracy_%s.csv' % metric)
        if not csv_path.exists():
            raise ArtifactFormatError('%s missing' % csv_path)
        try:
            matrices[metric] = metric_utils.AccuracyMatrix.from_csv(csv_path, metric=metric)
        except (ValueError, IndexError) as e:
            raise ArtifactFormatError('%s: %s' % (csv_path, e))
        if matrices[metric].num_tasks != summary.get('num_tasks'):
            raise ArtifactFormatError('%s has %d tasks, summary says %s'
                                      % (csv_path, matrices[metric].num_tasks, summary.get('num_tasks')))
    return summary, matrices


def summary_without_timing(summary):
    return {k: v for k, v in summary.items() if k != 'timing'}
