"""
Procedural segmentation domains.

Each domain pairs a palette and texture recipe with a family of foreground shapes. Images are
value-noise textures (several octaves of bilinearly upsampled uniform noise) composited through
a rasterized binary mask, plus pixel noise. Every sample is a pure function of
(spec, seed, split, index).
"""
from dataclasses import asdict, dataclass, field

import numpy as np
from skimage import draw, transform

from ...config import DOMAIN_KINDS
from ...models.segmentor.prompt_heatmap import PromptSet
from ...utils.exceptions import ValidationError

SPLIT_CODES = {'train': 0, 'test': 1}

MAX_SHAPE_TRIES = 500


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    texture_freq: int = 4
    contrast: float = 1.0
    noise: float = 0.03
    area_range: tuple = (0.05, 0.35)
    seed_base: int = 0

    def validate(self):
        if self.kind not in DOMAIN_KINDS:
            raise ValidationError('unknown domain kind %s' % self.kind)
        if not 1 <= self.texture_freq <= 32:
            raise ValidationError('texture_freq must be in [1, 32], got %s' % self.texture_freq)
        if not 0.0 < self.contrast <= 1.0:
            raise ValidationError('contrast must be in (0, 1], got %s' % self.contrast)
        if not 0.0 <= self.noise <= 0.3:
            raise ValidationError('noise must be in [0, 0.3], got %s' % self.noise)
        lo, hi = self.area_range
        if not 0.02 < lo < hi < 0.5:
            raise ValidationError('area_range must satisfy 0.02 < lo < hi < 0.5, got %s' % (self.area_range,))
        return self

    def to_dict(self):
        d = asdict(self)
        d['area_range'] = list(self.area_range)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d['area_range'] = tuple(d['area_range'])
        return cls(**d)


DEFAULT_SPECS = {
    'bright-blob': DomainSpec('bright-blob', texture_freq=3, contrast=1.0, noise=0.03, seed_base=101),
    'camouflage-texture': DomainSpec('camouflage-texture', texture_freq=8, contrast=0.6, noise=0.04, seed_base=202),
    'shadow-region': DomainSpec('shadow-region', texture_freq=6, contrast=0.9, noise=0.03,
                                area_range=(0.08, 0.4), seed_base=303),
    'noisy-lesion': DomainSpec('noisy-lesion', texture_freq=4, contrast=0.8, noise=0.12, seed_base=404),
    'low-contrast-texture': DomainSpec('low-contrast-texture', texture_freq=12, contrast=0.5, noise=0.03,
                                       seed_base=505),
    'base-shapes': DomainSpec('base-shapes', texture_freq=4, contrast=1.0, noise=0.03,
                              area_range=(0.05, 0.4), seed_base=9001),
}

# (background rgb, foreground rgb, texture amplitude)
_PALETTES = {
    'bright-blob': ((0.35, 0.12, 0.10), (0.95, 0.78, 0.55), 0.3),
    'camouflage-texture': ((0.33, 0.40, 0.18), (0.45, 0.48, 0.26), 0.6),
    'shadow-region': ((0.80, 0.75, 0.66), (0.28, 0.27, 0.27), 0.35),
    'noisy-lesion': ((0.90, 0.72, 0.62), (0.42, 0.26, 0.18), 0.2),
    'low-contrast-texture': ((0.44, 0.50, 0.62), (0.56, 0.62, 0.74), 0.5),
}


@dataclass
class Sample:
    image: np.ndarray          # (3, H, W) float64 in [0, 1]
    mask: np.ndarray           # (H, W) uint8 in {0, 1}
    prompts: PromptSet
    domain: str
    index: int = 0
    split: str = 'train'
    meta: dict = field(default_factory=dict)


def get_domain_spec(kind, overrides=None):
    if kind not in DEFAULT_SPECS:
        raise ValidationError('unknown domain kind %s' % kind)
    spec = DEFAULT_SPECS[kind]
    if overrides:
        d = spec.to_dict()
        d.update(overrides)
        spec = DomainSpec.from_dict(d)
    return spec.validate()


def value_noise(rng, size, freq, octaves=3, persistence=0.5):
    """(size, size) multi-octave value noise normalised to [0, 1]."""
    total = np.zeros((size, size), dtype=np.float64)
    amp = 1.0
    for octave in range(octaves):
        cells = freq * (2 ** octave) + 1
        lattice = rng.random((cells, cells))
        total += amp * transform.resize(lattice, (size, size), order=1, mode='reflect', anti_aliasing=False)
        amp *= persistence
    lo, hi = total.min(), total.max()
    return (total - lo) / max(hi - lo, 1e-12)


def stripes(rng, size, freq):
    theta = rng.uniform(0, np.pi)
    phase = rng.uniform(0, 2 * np.pi)
    rr, cc = np.mgrid[0:size, 0:size].astype(np.float64)
    return 0.5 + 0.5 * np.sin(2 * np.pi * freq * (rr * np.cos(theta) + cc * np.sin(theta)) / size + phase)


def _ellipse_mask(rng, size, target_area):
    aspect = rng.uniform(0.6, 1.6)
    r_radius = np.sqrt(target_area / (np.pi * aspect))
    c_radius = r_radius * aspect
    margin = min(max(r_radius, c_radius), size / 2.0)
    r0 = rng.uniform(margin, size - margin)
    c0 = rng.uniform(margin, size - margin)
    mask = np.zeros((size, size), dtype=np.uint8)
    rr, cc = draw.ellipse(r0, c0, r_radius, c_radius, shape=(size, size), rotation=rng.uniform(-np.pi, np.pi))
    mask[rr, cc] = 1
    return mask


def _blob_mask(rng, size, target_area, freq):
    """Ellipse envelope whose boundary is perturbed by low-frequency noise."""
    aspect = rng.uniform(0.7, 1.4)
    r_radius = np.sqrt(target_area / (np.pi * aspect))
    c_radius = r_radius * aspect
    margin = min(max(r_radius, c_radius) * 1.2, size / 2.0)
    r0 = rng.uniform(margin, size - margin)
    c0 = rng.uniform(margin, size - margin)
    rr, cc = np.mgrid[0:size, 0:size].astype(np.float64)
    dist = ((rr - r0) / r_radius) ** 2 + ((cc - c0) / c_radius) ** 2
    wobble = value_noise(rng, size, max(1, freq // 2), octaves=2)
    return (dist < 1.0 + 0.8 * (wobble - 0.5)).astype(np.uint8)


def _polygon_mask(rng, size, target_area):
    num_vertices = int(rng.integers(5, 9))
    radius = np.sqrt(target_area / np.pi)
    angles = np.sort(rng.uniform(0, 2 * np.pi, num_vertices))
    radii = radius * rng.uniform(0.7, 1.3, num_vertices)
    margin = min(radius * 1.3, size / 2.0)
    r0 = rng.uniform(margin, size - margin)
    c0 = rng.uniform(margin, size - margin)
    mask = np.zeros((size, size), dtype=np.uint8)
    rr, cc = draw.polygon(r0 + radii * np.sin(angles), c0 + radii * np.cos(angles), shape=(size, size))
    mask[rr, cc] = 1
    return mask


def _rectangle_mask(rng, size, target_area):
    aspect = rng.uniform(0.5, 2.0)
    h = max(1, int(round(np.sqrt(target_area / aspect))))
    w = max(1, int(round(h * aspect)))
    h, w = min(h, size), min(w, size)
    r0 = int(rng.integers(0, size - h + 1))
    c0 = int(rng.integers(0, size - w + 1))
    mask = np.zeros((size, size), dtype=np.uint8)
    rr, cc = draw.rectangle((r0, c0), extent=(h, w), shape=(size, size))
    mask[rr, cc] = 1
    return mask


def make_mask(rng, spec, size):
    """Rejection-sample a shape until its area fraction lies inside spec.area_range."""
    lo, hi = spec.area_range
    for _ in range(MAX_SHAPE_TRIES):
        target = rng.uniform(lo, hi) * size * size
        if spec.kind in ('bright-blob', 'camouflage-texture'):
            mask = _ellipse_mask(rng, size, target)
        elif spec.kind == 'shadow-region':
            mask = _polygon_mask(rng, size, target)
        elif spec.kind in ('noisy-lesion', 'low-contrast-texture'):
            mask = _blob_mask(rng, size, target, spec.texture_freq)
        else:
            shape = rng.integers(0, 3)
            mask = [_ellipse_mask, _rectangle_mask, _polygon_mask][shape](rng, size, target)
        area = mask.mean()
        if lo <= area <= hi:
            return mask
    raise ValidationError('could not draw a %s mask with area in %s on a %dx%d image'
                          % (spec.kind, spec.area_range, size, size))


def _texture(rng, spec, size, color, amplitude):
    tex = value_noise(rng, size, spec.texture_freq)
    color = np.asarray(color, dtype=np.float64)[:, None, None]
    return color * (1.0 - amplitude + amplitude * tex)[None]


def render_image(rng, spec, mask):
    size = mask.shape[0]
    if spec.kind == 'base-shapes':
        bg_color = rng.uniform(0.05, 0.95, 3)
        fg_color = rng.uniform(0.05, 0.95, 3)
        while np.abs(fg_color - bg_color).sum() < 0.9:
            fg_color = rng.uniform(0.05, 0.95, 3)
        amplitude = 0.3
    else:
        bg_color, fg_palette, amplitude = _PALETTES[spec.kind]
        bg_color = np.clip(np.asarray(bg_color) + rng.normal(0, 0.03, 3), 0, 1)
        fg_color = np.clip(np.asarray(fg_palette) + rng.normal(0, 0.03, 3), 0, 1)
    fg_color = bg_color + spec.contrast * (np.asarray(fg_color) - bg_color)

    background = _texture(rng, spec, size, bg_color, amplitude)
    foreground = _texture(rng, spec, size, fg_color, amplitude)
    if spec.kind == 'low-contrast-texture':
        foreground = foreground * (0.85 + 0.3 * stripes(rng, size, spec.texture_freq / 2.0))[None]
    elif spec.kind == 'shadow-region':
        # shadows keep the ground texture underneath
        foreground = background * (fg_color / np.maximum(bg_color, 1e-6))[:, None, None]

    m = mask.astype(np.float64)[None]
    image = background * (1.0 - m) + foreground * m
    image = image + rng.normal(0.0, spec.noise, image.shape)
    return np.clip(image, 0.0, 1.0)


def sample_prompts(mask, K, seed):
    """
    K distinct foreground pixels, uniformly without replacement.

    Args:
        mask: (H, W) binary
        K: number of points
        seed: int or sequence accepted by np.random.default_rng
    Returns:
        PromptSet with (row, col) points
    """
    coords = np.argwhere(np.asarray(mask) > 0)
    if coords.shape[0] == 0:
        raise ValidationError('cannot sample prompts from an empty mask')
    if K > coords.shape[0]:
        raise ValidationError('asked for %d prompts but the mask has only %d pixels' % (K, coords.shape[0]))
    rng = np.random.default_rng(seed)
    index = rng.choice(coords.shape[0], size=K, replace=False)
    return PromptSet.from_array(coords[index])


def generate_sample(spec, seed, split, index, image_size=64, num_prompts=3):
    rng = np.random.default_rng([int(seed), spec.seed_base, SPLIT_CODES[split], int(index)])
    mask = make_mask(rng, spec, image_size)
    image = render_image(rng, spec, mask)
    prompts = sample_prompts(mask, num_prompts, seed=[int(seed), spec.seed_base, SPLIT_CODES[split], int(index), 1])
    return Sample(image=image, mask=mask, prompts=prompts, domain=spec.kind, index=index, split=split)


def generate_domain(spec, n, seed, split='train', image_size=64, num_prompts=3):
    """n samples fully determined by (spec, seed, split); train and test use disjoint seed streams."""
    if n < 1:
        raise ValidationError('n must be >= 1, got %d' % n)
    if split not in SPLIT_CODES:
        raise ValidationError('unknown split %s' % split)
    spec.validate()
    return [generate_sample(spec, seed, split, i, image_size=image_size, num_prompts=num_prompts) for i in range(n)]
