"""
Segmentation quality (mIoU / mF1 / mMAE) and continual-learning aggregates (AA / FM / FT).

a[i, j] is the score on task j after training task i (0-based here). Cells that were never
evaluated hold NaN and are reported as absent, never as zero.
"""
import csv
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, IncompleteMatrixError, UndefinedMetricError, ValidationError

SEG_METRICS = ('miou', 'mf1', 'mmae')


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise DimensionError('prediction %s and ground truth %s differ' % (a.shape, b.shape))


def miou(pred_mask, gt_mask):
    """IoU of two binary masks; 1.0 when both are empty."""
    pred_mask, gt_mask = np.asarray(pred_mask).astype(bool), np.asarray(gt_mask).astype(bool)
    _check_same_shape(pred_mask, gt_mask)
    union = np.logical_or(pred_mask, gt_mask).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred_mask, gt_mask).sum() / union)


def mf1(pred_mask, gt_mask):
    """F1 (Dice) of two binary masks; 1.0 when both are empty, 0.0 when only one is."""
    pred_mask, gt_mask = np.asarray(pred_mask).astype(bool), np.asarray(gt_mask).astype(bool)
    _check_same_shape(pred_mask, gt_mask)
    n_pred, n_gt = pred_mask.sum(), gt_mask.sum()
    if n_pred == 0 and n_gt == 0:
        return 1.0
    tp = np.logical_and(pred_mask, gt_mask).sum()
    if tp == 0:
        return 0.0
    precision, recall = tp / n_pred, tp / n_gt
    return float(2 * precision * recall / (precision + recall))


def mmae(prob_map, gt_mask):
    """Mean absolute error between a probability map and a binary mask."""
    prob_map, gt_mask = np.asarray(prob_map, dtype=np.float64), np.asarray(gt_mask, dtype=np.float64)
    _check_same_shape(prob_map, gt_mask)
    return float(np.abs(prob_map - gt_mask).mean())


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def image_scores(mask_logits, gt_mask):
    """All three per-image scores from raw logits (threshold 0 for the binary mask)."""
    mask_logits = np.asarray(mask_logits, dtype=np.float64)
    pred = mask_logits > 0
    return {
        'miou': miou(pred, gt_mask),
        'mf1': mf1(pred, gt_mask),
        'mmae': mmae(sigmoid(mask_logits), gt_mask),
    }


class SegMetricAccumulator(object):
    """Dataset-level scores are plain means of per-image scores."""

    def __init__(self):
        self.values = {key: [] for key in SEG_METRICS}

    def update(self, mask_logits, gt_mask):
        scores = image_scores(mask_logits, gt_mask)
        for key, val in scores.items():
            self.values[key].append(val)
        return scores

    def __len__(self):
        return len(self.values['miou'])

    def summary(self):
        if len(self) == 0:
            return {key: float('nan') for key in SEG_METRICS}
        return {key: float(np.mean(vals)) for key, vals in self.values.items()}


class AccuracyMatrix(object):
    """T x T optional scores; filled cells are j <= i and j = i + 1."""

    def __init__(self, num_tasks, metric='miou'):
        self.num_tasks = int(num_tasks)
        self.metric = metric
        self.values = np.full((self.num_tasks, self.num_tasks), np.nan, dtype=np.float64)

    @classmethod
    def from_array(cls, values, metric='miou'):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise DimensionError('accuracy matrix must be square, got %s' % (values.shape,))
        scores = values[~np.isnan(values)]
        if ((scores < 0.0) | (scores > 1.0)).any():
            raise ValidationError('%s scores must lie in [0, 1], got range [%s, %s]'
                                  % (metric, scores.min(), scores.max()))
        matrix = cls(values.shape[0], metric=metric)
        matrix.values[...] = values
        return matrix

    def set(self, i, j, value):
        if not (0 <= i < self.num_tasks and 0 <= j < self.num_tasks) or j > i + 1:
            raise IndexError('cell (%d, %d) is not part of a %d-task accuracy matrix' % (i, j, self.num_tasks))
        if not 0.0 <= value <= 1.0:
            raise ValidationError('%s score %r for cell (%d, %d) is outside [0, 1]' % (self.metric, value, i, j))
        self.values[i, j] = value

    def get(self, i, j):
        val = self.values[i, j]
        return None if np.isnan(val) else float(val)

    def _require(self, cells):
        missing = [(i, j) for i, j in cells if np.isnan(self.values[i, j])]
        if missing:
            raise IncompleteMatrixError('%s accuracy matrix is missing cells %s' % (self.metric, missing))

    def rows_filled(self):
        """Number of leading rows whose j <= i part is complete."""
        for i in range(self.num_tasks):
            if np.isnan(self.values[i, :i + 1]).any():
                return i
        return self.num_tasks

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(['step'] + ['task%d' % j for j in range(self.num_tasks)])
            for i in range(self.num_tasks):
                writer.writerow([i] + ['' if np.isnan(v) else repr(float(v)) for v in self.values[i]])

    @classmethod
    def from_csv(cls, path, metric='miou'):
        with open(path, 'r', newline='') as f:
            rows = list(csv.reader(f))
        if len(rows) < 2:
            raise IncompleteMatrixError('%s holds no accuracy rows' % path)
        values = [[float(v) if v != '' else np.nan for v in row[1:]] for row in rows[1:]]
        return cls.from_array(values, metric=metric)


def _as_values(matrix):
    return matrix.values if isinstance(matrix, AccuracyMatrix) else np.asarray(matrix, dtype=np.float64)


def aa(matrix):
    """Average accuracy: mean of the final row."""
    values = _as_values(matrix)
    T = values.shape[0]
    if np.isnan(values[T - 1]).any():
        raise IncompleteMatrixError('final row is incomplete')
    return float(values[T - 1].sum() / T)


def fm(matrix):
    """Forgetting measure: mean over tasks of a[j, j] - a[T-1, j]. Reported raw (for mMAE, negative is good)."""
    values = _as_values(matrix)
    T = values.shape[0]
    diag, final = np.diag(values), values[T - 1]
    if np.isnan(diag).any() or np.isnan(final).any():
        raise IncompleteMatrixError('diagonal or final row is incomplete')
    return float((diag - final).sum() / T)


def ft(matrix):
    """Forward transfer: mean of the superdiagonal a[i, i+1]."""
    values = _as_values(matrix)
    T = values.shape[0]
    if T < 2:
        raise UndefinedMetricError('forward transfer needs at least 2 tasks')
    superdiag = np.diag(values, k=1)
    if np.isnan(superdiag).any():
        raise IncompleteMatrixError('superdiagonal is incomplete')
    return float(superdiag.sum() / (T - 1))


def continual_summary(matrix):
    """{'aa', 'fm', 'ft'} with ft None when undefined."""
    try:
        forward = ft(matrix)
    except UndefinedMetricError:
        forward = None
    return {'aa': aa(matrix), 'fm': fm(matrix), 'ft': forward}
