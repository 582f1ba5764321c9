from collections import namedtuple

import numpy as np
import torch
import tqdm

from ..models.adapters.lora import AdapterSet
from ..models.selector.module_selector import select
from ..utils import metric_utils, tensor_utils

EvalResult = namedtuple('EvalResult', ['scores', 'selections', 'predictions'])


def _single(dataset, index):
    data_dict = dataset[index]
    images = torch.from_numpy(data_dict['images']).to(tensor_utils.DTYPE).unsqueeze(0)
    heatmaps = torch.from_numpy(data_dict['heatmaps']).to(tensor_utils.DTYPE).unsqueeze(0)
    return data_dict, images, heatmaps


def infer_with_adapter(model, adapters, images, heatmaps):
    """
    Forward one image with a known adapter set (or the bare base when adapters is None).
    Adapted inference goes through blocks 1..k and resumes at k + 1, the same path as
    infer_with_selection, so both routes give identical numbers for the same adapter.
    """
    with torch.no_grad():
        if adapters is None:
            features = model.encode(images).features
        else:
            k = adapters.start_block
            activation_k = model.encode_prefix(images, k)
            features = model.resume(activation_k, k, adapters=adapters, heatmaps=heatmaps)
        logits, predicted_iou = model.decode(features, heatmaps)
    return logits[0], predicted_iou[0]


def infer_with_selection(model, module_set, selector, images, heatmaps, k):
    """
    Task-agnostic inference: blocks 1..k run once, the pooled block-k activation picks the
    adapter, and the cached activation resumes through the adapted blocks k+1..n.

    Returns:
        mask_logits (H, W), predicted_iou (scalar tensor), SelectionResult
    """
    with torch.no_grad():
        activation_k = model.encode_prefix(images, k)
        selection = select(selector, tensor_utils.mean_pool_hw(activation_k)[0], block=k)
        adapters = module_set.get(selection.task_id)
        features = model.resume(activation_k, k, adapters=adapters, heatmaps=heatmaps)
        logits, predicted_iou = model.decode(features, heatmaps)
    return logits[0], predicted_iou[0], selection


def compute_embeddings(model, dataset, k, desc='embed'):
    """(n, D) pooled block-k embeddings of the frozen base, one image at a time."""
    vecs = []
    with torch.no_grad():
        for i in tqdm.trange(len(dataset), desc=desc, leave=False, dynamic_ncols=True):
            _, images, _ = _single(dataset, i)
            vecs.append(tensor_utils.mean_pool_hw(model.encode_prefix(images, k))[0].numpy())
    return np.stack(vecs, axis=0)


def evaluate_dataset(model, dataset, route=None, keep_predictions=False, desc='eval'):
    """
    Per-image evaluation over a whole dataset.

    Args:
        route: None for the bare base, an adapter set for fixed routing, or a callable
            (images, heatmaps) -> (logits, predicted_iou, selection)
        keep_predictions: also return each image's logits as a numpy array
    Returns:
        EvalResult(scores={'miou', 'mf1', 'mmae'}, selections=[task id or None], predictions)
    """
    accumulator = metric_utils.SegMetricAccumulator()
    selections, predictions = [], []
    for i in tqdm.trange(len(dataset), desc=desc, leave=False, dynamic_ncols=True):
        data_dict, images, heatmaps = _single(dataset, i)
        if route is None or isinstance(route, AdapterSet):
            logits, _ = infer_with_adapter(model, route, images, heatmaps)
            selection = None
        else:
            logits, _, selection = route(images, heatmaps)
        logits = logits.numpy()
        accumulator.update(logits, data_dict['masks'])
        selections.append(selection.task_id if selection is not None else None)
        if keep_predictions:
            predictions.append(logits)
    return EvalResult(accumulator.summary(), selections, predictions if keep_predictions else None)


def compute_block_embeddings(model, dataset, desc='embed'):
    """(n_blocks + 1, n, D) pooled embeddings of every block output (index 0 = patch embedding)."""
    per_image = []
    with torch.no_grad():
        for i in tqdm.trange(len(dataset), desc=desc, leave=False, dynamic_ncols=True):
            _, images, _ = _single(dataset, i)
            activations = model.encode(images).activations
            per_image.append(np.stack([tensor_utils.mean_pool_hw(a)[0].numpy() for a in activations], axis=0))
    return np.stack(per_image, axis=1)
