"""
On-disk segmentation datasets.

Layout under a root directory:

    manifest.json
    <domain>/<split>/images/<idx>.ppm     8-bit RGB
    <domain>/<split>/masks/<idx>.pgm      8-bit gray, foreground > 127
    <domain>/<split>/prompts/<idx>.txt    one "row col" line per point (optional)

The manifest lists every sample with relative paths. External data in the same layout can be
loaded; samples without a prompt file get prompts drawn with the manifest seed.
"""
from pathlib import Path

import numpy as np
from skimage import io

from ...utils import file_utils
from ...utils.exceptions import ArtifactFormatError
from ...models.segmentor.prompt_heatmap import PromptSet
from ..dataset import DatasetTemplate
from ..synth.synth_domains import SPLIT_CODES, Sample, generate_domain, get_domain_spec, sample_prompts

MANIFEST_NAME = 'manifest.json'
MANIFEST_VERSION = 1


def save_image(path, array):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    io.imsave(str(path), np.ascontiguousarray(array, dtype=np.uint8), check_contrast=False)


def load_image(path):
    path = Path(path)
    if not path.exists():
        raise ArtifactFormatError('image not found: %s' % path)
    try:
        image = io.imread(str(path))
    except Exception as e:
        raise ArtifactFormatError('%s: unreadable image: %s' % (path, e))
    if image.dtype != np.uint8:
        raise ArtifactFormatError('%s: expected 8-bit data, got %s' % (path, image.dtype))
    return image


def write_samples(samples, root_path, domain, split):
    root_path = Path(root_path)
    entries = []
    for sample in samples:
        stem = '%05d' % sample.index
        rel = Path(domain) / split
        image = np.clip(np.round(np.transpose(sample.image, (1, 2, 0)) * 255.0), 0, 255).astype(np.uint8)
        save_image(root_path / rel / 'images' / (stem + '.ppm'), image)
        save_image(root_path / rel / 'masks' / (stem + '.pgm'), sample.mask.astype(np.uint8) * 255)
        prompt_file = root_path / rel / 'prompts' / (stem + '.txt')
        prompt_file.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(prompt_file, sample.prompts.to_array(), fmt='%d')
        entries.append({
            'index': int(sample.index),
            'image': str(rel / 'images' / (stem + '.ppm')),
            'mask': str(rel / 'masks' / (stem + '.pgm')),
            'prompts': str(rel / 'prompts' / (stem + '.txt')),
        })
    return entries


def create_folder_dataset(data_cfg, root_path, seed, image_size, domains=None, logger=None):
    """Generate every configured domain (plus the base domain) and dump it with a manifest."""
    domains = list(domains) if domains is not None else list(data_cfg.DOMAINS) + [data_cfg.BASE_DOMAIN]
    manifest = {'version': MANIFEST_VERSION, 'seed': int(seed), 'image_size': int(image_size),
                'num_prompts': int(data_cfg.NUM_PROMPTS), 'domains': {}}
    for domain in domains:
        spec = get_domain_spec(domain)
        splits = {}
        for split in SPLIT_CODES:
            n = data_cfg.NUM_TRAIN if split == 'train' else data_cfg.NUM_TEST
            samples = generate_domain(spec, n, seed, split=split, image_size=image_size,
                                      num_prompts=data_cfg.NUM_PROMPTS)
            splits[split] = write_samples(samples, root_path, domain, split)
            if logger is not None:
                logger.info('wrote %d %s/%s samples' % (len(samples), domain, split))
        manifest['domains'][domain] = {'spec': spec.to_dict(), 'splits': splits}
    file_utils.write_json(Path(root_path) / MANIFEST_NAME, manifest)
    return manifest


def read_manifest(root_path):
    path = Path(root_path) / MANIFEST_NAME
    if not path.exists():
        raise ArtifactFormatError('no %s in %s' % (MANIFEST_NAME, root_path))
    manifest = file_utils.read_json(path)
    if manifest.get('version') != MANIFEST_VERSION:
        raise ArtifactFormatError('%s: unsupported manifest version %s' % (path, manifest.get('version')))
    return manifest


class FolderSegDataset(DatasetTemplate):
    def __init__(self, dataset_cfg, model_cfg, domain, split='train', root_path=None, logger=None, **kwargs):
        super().__init__(dataset_cfg=dataset_cfg, model_cfg=model_cfg, domain=domain, split=split,
                         root_path=root_path, logger=logger)
        if self.root_path is None:
            raise ArtifactFormatError('FolderSegDataset needs DATA_CONFIG.DATA_PATH or root_path')
        self.manifest = read_manifest(self.root_path)
        if domain not in self.manifest['domains']:
            raise ArtifactFormatError('domain %s is not in %s' % (domain, self.root_path / MANIFEST_NAME))
        self.include_data()

    def include_data(self):
        entries = self.manifest['domains'][self.domain]['splits'][self.split]
        num_prompts = self.manifest.get('num_prompts', self.dataset_cfg.NUM_PROMPTS)
        for entry in entries:
            image = load_image(self.root_path / entry['image'])
            mask = load_image(self.root_path / entry['mask'])
            if mask.ndim == 3:
                mask = mask[..., 0]
            mask = (mask > 127).astype(np.uint8)
            if image.ndim != 3 or image.shape[:2] != mask.shape:
                raise ArtifactFormatError('%s: image %s and mask %s differ' % (entry['image'], image.shape, mask.shape))
            prompt_file = self.root_path / entry['prompts'] if entry.get('prompts') else None
            if prompt_file is not None and prompt_file.exists():
                prompts = PromptSet.from_array(np.loadtxt(prompt_file, dtype=np.int64, ndmin=2))
            else:
                prompts = sample_prompts(mask, num_prompts,
                                         seed=[self.manifest['seed'], SPLIT_CODES[self.split], entry['index']])
            self.samples.append(Sample(image=np.transpose(image, (2, 0, 1)).astype(np.float64) / 255.0, mask=mask,
                                       prompts=prompts, domain=self.domain, index=entry['index'], split=self.split))
        if self.logger is not None:
            self.logger.info('Total samples for %s/%s: %d' % (self.domain, self.split, len(self.samples)))
