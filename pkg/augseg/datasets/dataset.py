from collections import defaultdict
from pathlib import Path

import numpy as np
import torch.utils.data as torch_data

from ..models.segmentor.prompt_heatmap import make_heatmap


class DatasetTemplate(torch_data.Dataset):
    """
    Holds a list of Samples for one (domain, split) and turns each into the data_dict the model
    consumes: images (3, H, W), masks (H, W), prompts (K, 2) and patch-grid heatmaps (H', W').
    """

    def __init__(self, dataset_cfg=None, model_cfg=None, domain=None, split='train', root_path=None, logger=None):
        super().__init__()
        self.dataset_cfg = dataset_cfg
        self.model_cfg = model_cfg
        self.domain = domain
        self.split = split
        self.logger = logger
        self.root_path = Path(root_path) if root_path is not None else (
            Path(dataset_cfg.DATA_PATH) if dataset_cfg is not None and dataset_cfg.get('DATA_PATH') else None
        )
        self.samples = []
        if model_cfg is not None:
            self.patch_size = model_cfg.PATCH_SIZE
            self.grid = (model_cfg.IMAGE_SIZE // model_cfg.PATCH_SIZE,) * 2
            self.heatmap_sigma = model_cfg.HEATMAP_SIGMA
            self.image_size = model_cfg.IMAGE_SIZE

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, index):
        return self.prepare_data(self.samples[index])

    def prepare_data(self, sample):
        """
        Args:
            sample: Sample
        Returns:
            data_dict:
                images: (3, H, W) float64
                masks: (H, W) uint8
                prompts: (K, 2) int64
                heatmaps: (H', W') float64
                sample_id, domain
        """
        prompts = sample.prompts.to_array()
        heatmap = make_heatmap(prompts, self.grid, self.patch_size, sigma=self.heatmap_sigma,
                               image_size=self.image_size)
        return {
            'images': np.asarray(sample.image, dtype=np.float64),
            'masks': np.asarray(sample.mask, dtype=np.uint8),
            'prompts': prompts,
            'heatmaps': heatmap,
            'sample_id': sample.index,
            'domain': sample.domain,
        }

    @staticmethod
    def collate_batch(batch_list, _unused=False):
        data_dict = defaultdict(list)
        for cur_sample in batch_list:
            for key, val in cur_sample.items():
                data_dict[key].append(val)
        batch_size = len(batch_list)
        ret = {}

        for key, val in data_dict.items():
            if key in ['domain']:
                ret[key] = val
            elif key in ['sample_id']:
                ret[key] = np.asarray(val, dtype=np.int64)
            else:
                ret[key] = np.stack(val, axis=0)

        ret['batch_size'] = batch_size
        return ret
