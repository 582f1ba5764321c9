from dataclasses import dataclass

import numpy as np

from ...utils.exceptions import PromptBoundsError, ValidationError


@dataclass(frozen=True)
class PromptSet:
    """K positive point prompts, (row, col) in pixel coordinates."""
    points: tuple

    @classmethod
    def from_array(cls, points):
        points = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        return cls(points=tuple((int(r), int(c)) for r, c in points))

    def to_array(self):
        return np.asarray(self.points, dtype=np.int64).reshape(-1, 2)

    def __len__(self):
        return len(self.points)


def check_prompts_in_bounds(points, image_size):
    points = np.asarray(points).reshape(-1, 2)
    inside = (points >= 0) & (points < image_size)
    if not inside.all():
        bad = points[~inside.all(axis=1)][0]
        raise PromptBoundsError('prompt point (%d, %d) lies outside a %dx%d image'
                                % (bad[0], bad[1], image_size, image_size))


def make_heatmap(prompts, grid, patch_size, sigma=1.0, image_size=None):
    """
    Render point prompts as a patch-resolution heatmap.

    Each point contributes an isotropic Gaussian centred on the patch cell that contains it;
    bumps are combined by elementwise max and the result is normalised so the peak is 1.

    Args:
        prompts: PromptSet or (K, 2) array of (row, col) pixel coordinates
        grid: (H', W') patch grid dims
        patch_size: pixels per patch side
        sigma: bump width in patch units
        image_size: pixel bounds, defaults to grid * patch_size
    Returns:
        heatmap: (H', W') float64 in [0, 1]
    """
    points = prompts.to_array() if isinstance(prompts, PromptSet) else np.asarray(prompts, dtype=np.int64).reshape(-1, 2)
    if points.shape[0] < 1:
        raise ValidationError('at least one prompt point is required')
    if sigma <= 0:
        raise ValidationError('sigma must be > 0, got %s' % sigma)
    gh, gw = grid
    if image_size is None:
        image_size = gh * patch_size
    check_prompts_in_bounds(points, image_size)

    rows = np.arange(gh, dtype=np.float64)[:, None]
    cols = np.arange(gw, dtype=np.float64)[None, :]
    heatmap = np.zeros((gh, gw), dtype=np.float64)
    for r, c in points:
        cr, cc = r // patch_size, c // patch_size
        bump = np.exp(-((rows - cr) ** 2 + (cols - cc) ** 2) / (2.0 * sigma ** 2))
        np.maximum(heatmap, bump, out=heatmap)
    return heatmap / heatmap.max()
