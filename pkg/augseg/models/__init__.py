from collections import namedtuple

import numpy as np
import torch

from ..utils import tensor_utils
from .segmentor import __all__ as segmentor_all


def build_network(model_cfg):
    return segmentor_all[model_cfg.NAME](model_cfg=model_cfg)


def load_data_to_tensor(batch_dict):
    for key, val in batch_dict.items():
        if not isinstance(val, np.ndarray):
            continue
        elif key in ['sample_id', 'domain', 'prompts', 'masks']:
            continue
        batch_dict[key] = torch.from_numpy(val).to(tensor_utils.DTYPE)


def model_fn_decorator(loss_fn):
    """Wraps (model, adapters, batch) into (loss, tb_dict, disp_dict) for the adapter training loops."""
    ModelReturn = namedtuple('ModelReturn', ['loss', 'tb_dict', 'disp_dict'])

    def model_func(model, batch_dict, adapters=None):
        load_data_to_tensor(batch_dict)
        batch_dict = model(batch_dict, adapters=adapters)
        gt_masks = torch.from_numpy(batch_dict['masks']).to(tensor_utils.DTYPE)
        loss, tb_dict = loss_fn(batch_dict['mask_logits'], gt_masks, batch_dict['predicted_iou'])
        disp_dict = {'loss': '%.4f' % loss.item()}
        return ModelReturn(loss, tb_dict, disp_dict)

    return model_func
