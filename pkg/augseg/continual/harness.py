"""
Continual segmentation driver.

Per-task modules (samcl / samcl-oracle):
    for each task t: buffer block-k embeddings of its train split, retrain the selector on the
    whole buffer, train a fresh adapter set against the frozen base, store it write-once, then
    evaluate tasks 0..t (routed by the selector, or by ground truth in oracle mode) and task t+1
    (always routed by the learned selector, giving the forward-transfer column).

Sequential baselines (baseline-lora / baseline-slora / baseline-augmodule):
    one adapter set of the given variant keeps training across tasks; every evaluation uses its
    current state.
"""
import copy
import time
from collections import OrderedDict
from pathlib import Path

import numpy as np
import torch
from skimage import io

from ..models.adapters.lora import AdapterSet, AdapterVariant, build_adapter_set
from ..models.adapters.param_count import count_adapter_set
from ..models.selector.module_selector import EmbeddingBuffer, selection_accuracy, storage_report, train_selector
from ..utils import common_utils, file_utils
from ..utils.exceptions import InvariantViolationError, StateError, ValidationError
from . import eval_utils
from .run_record import RunRecord
from .train_utils import derive_seed, train_task

BASELINE_VARIANTS = {
    'baseline-lora': AdapterVariant.VANILLA,
    'baseline-slora': AdapterVariant.SLORA,
    'baseline-augmodule': AdapterVariant.AUGMODULE,
}
PER_TASK_MODES = ('samcl', 'samcl-oracle')

# purpose codes for derive_seed
_SEED_ADAPTER_INIT, _SEED_TRAIN, _SEED_BUFFER, _SEED_SELECTOR = 1, 2, 3, 4


class ModuleSet(object):
    """task id -> adapter set; entries are write-once and frozen on insertion."""

    def __init__(self):
        self.modules = OrderedDict()
        self.paths = {}

    def __len__(self):
        return len(self.modules)

    def __contains__(self, task_id):
        return task_id in self.modules

    @property
    def task_ids(self):
        return list(self.modules.keys())

    def add(self, task_id, adapter_set, out_dir=None):
        if task_id in self.modules:
            raise StateError('module for task %d already exists' % task_id)
        adapter_set.freeze()
        self.modules[task_id] = adapter_set
        if out_dir is not None:
            path = Path(out_dir) / ('task%02d.bin' % task_id)
            save_adapter_set(adapter_set, path)
            self.paths[task_id] = path
        return adapter_set

    def get(self, task_id):
        if task_id not in self.modules:
            raise StateError('no module for selected task %d (have %s)' % (task_id, self.task_ids))
        return self.modules[task_id]

    def stored_bytes(self):
        return sum(count_adapter_set(m).stored_bytes for m in self.modules.values())


def save_adapter_set(adapter_set, path):
    """Returns the payload byte count, equal to count_adapter_set(adapter_set).stored_bytes."""
    return file_utils.write_container(path, file_utils.MAGIC_ADAPTER, adapter_set.metadata(),
                                      adapter_set.stored_tensors())


def load_adapter_set(path):
    meta, tensors, _ = file_utils.read_container(path, file_utils.MAGIC_ADAPTER)
    adapter_set = AdapterSet.from_metadata(meta)
    adapter_set.load_stored_tensors(tensors)
    return adapter_set.freeze()


def snapshot_adapter_set(adapter_set):
    """Frozen deep copy, used to persist the sequential baseline after each task."""
    snap = copy.deepcopy(adapter_set)
    return snap.freeze()


class SelectionRoute(object):
    """Callable route for evaluate_dataset that also counts how often each module is picked."""

    def __init__(self, model, module_set, selector, k):
        self.model = model
        self.module_set = module_set
        self.selector = selector
        self.k = k

    def __call__(self, images, heatmaps):
        return eval_utils.infer_with_selection(self.model, self.module_set, self.selector, images, heatmaps, self.k)


def _histogram(selections, num_modules):
    counts = np.bincount(np.asarray(selections, dtype=np.int64), minlength=num_modules)
    return [int(c) for c in counts]


def _check_base(model, digest, where):
    if common_utils.state_dict_digest(model.state_dict()) != digest:
        raise InvariantViolationError('base weights changed during %s' % where)


def _dump_masks(run_dir, task_id, result, dataset):
    mask_dir = Path(run_dir) / 'masks' / ('task%02d' % task_id)
    mask_dir.mkdir(parents=True, exist_ok=True)
    for sample, logits in zip(dataset.samples, result.predictions):
        io.imsave(str(mask_dir / ('%05d.pgm' % sample.index)), (logits > 0).astype(np.uint8) * 255,
                  check_contrast=False)


def run_continual(model, stream, cfg, mode=None, run_dir=None, seed=None, logger=None, tb_log=None):
    """
    Runs the task stream and returns its RunRecord. With run_dir set, adapters, buffer,
    selector and a partial record are written after every step, so a failure leaves
    everything up to the last finished step on disk.
    """
    logger = common_utils.get_logger(logger)
    mode = mode or cfg.CONTINUAL.MODE
    seed = cfg.CONTINUAL.SEED if seed is None else seed
    if mode not in PER_TASK_MODES and mode not in BASELINE_VARIANTS:
        raise ValidationError('unknown run mode %s' % mode)
    if not model.is_frozen:
        raise StateError('run_continual needs a frozen base model')

    per_task = mode in PER_TASK_MODES
    variant = AdapterVariant(cfg.ADAPTER.VARIANT) if per_task else BASELINE_VARIANTS[mode]
    k = cfg.ADAPTER.START_BLOCK
    T = len(stream)
    run_dir = Path(run_dir) if run_dir is not None else None
    adapter_dir = run_dir / 'adapters' if run_dir is not None else None

    record = RunRecord(stream.domains, mode, seed, variant=variant.value, start_block=k, config=cfg)
    record.extra['permutation_id'] = stream.permutation_id
    record.extra['order'] = stream.order
    base_digest = common_utils.state_dict_digest(model.state_dict())
    record.extra['base_digest'] = base_digest

    module_set = ModuleSet()
    buffer = EmbeddingBuffer(cfg.SELECTOR.BUFFER_SIZE, model.embed_dim)
    selector = None
    baseline_adapter = None
    test_embeddings = {}

    logger.info('**********************Start continual run: mode=%s variant=%s k=%d T=%d**********************'
                % (mode, variant.value, k, T))
    for t, task in enumerate(stream):
        step_start = time.time()
        logger.info('==> task %d/%d: %s' % (t + 1, T, task.domain))

        if per_task:
            # buffer and selector come first; block-k embeddings do not depend on any adapter
            buffer.add(t, eval_utils.compute_embeddings(model, task.train_set, k), seed=derive_seed(seed, t, _SEED_BUFFER))
            selector, train_acc = train_selector(buffer, cfg.SELECTOR, seed=derive_seed(seed, t, _SEED_SELECTOR),
                                                 logger=logger)
            adapter_set = build_adapter_set(model, cfg.ADAPTER, task_id=t, seed=derive_seed(seed, t, _SEED_ADAPTER_INIT),
                                            variant=variant)
            train_task(model, adapter_set, task.train_set, cfg, seed=derive_seed(seed, t, _SEED_TRAIN),
                       tb_log=tb_log, logger=logger)
            module_set.add(t, adapter_set, out_dir=adapter_dir)
        else:
            if baseline_adapter is None:
                baseline_adapter = build_adapter_set(model, cfg.ADAPTER, task_id=0,
                                                     seed=derive_seed(seed, 0, _SEED_ADAPTER_INIT), variant=variant)
            baseline_adapter.task_id = t
            train_task(model, baseline_adapter, task.train_set, cfg, seed=derive_seed(seed, t, _SEED_TRAIN),
                       tb_log=tb_log, logger=logger)
            module_set.add(t, snapshot_adapter_set(baseline_adapter), out_dir=adapter_dir)
        _check_base(model, base_digest, 'task %d' % t)

        route_learned = SelectionRoute(model, module_set, selector, k) if per_task else None
        last_step = t == T - 1
        transfer = None
        for j in range(0, min(t + 2, T)):
            if per_task:
                if j <= t and mode == 'samcl-oracle':
                    route = module_set.get(j)
                else:
                    route = route_learned
            else:
                route = module_set.get(t)
            keep = bool(cfg.CONTINUAL.DUMP_MASKS) and last_step and run_dir is not None
            result = eval_utils.evaluate_dataset(model, stream[j].test_set, route=route, keep_predictions=keep,
                                                 desc='eval t%d/j%d' % (t, j))
            record.set_scores(t, j, result.scores)
            if keep:
                _dump_masks(run_dir, j, result, stream[j].test_set)
            if j == t + 1 and per_task:
                transfer = {'task': j, 'counts': _histogram(result.selections, len(module_set))}
            logger.info('a[%d,%d] (%s): mIoU %.4f mF1 %.4f mMAE %.4f'
                        % (t, j, stream[j].domain, result.scores['miou'], result.scores['mf1'], result.scores['mmae']))
            if tb_log is not None:
                for metric, val in result.scores.items():
                    tb_log.add_scalar('eval_%s/task%d' % (metric, j), val, t)

        sel_acc = None
        if per_task:
            # held-out selection accuracy over every task seen so far
            embs, labels = [], []
            for j in range(t + 1):
                if j not in test_embeddings:
                    test_embeddings[j] = eval_utils.compute_embeddings(model, stream[j].test_set, k)
                embs.append(test_embeddings[j])
                labels.append(np.full(test_embeddings[j].shape[0], j, dtype=np.int64))
            sel_acc = selection_accuracy(selector, torch.from_numpy(np.concatenate(embs)), np.concatenate(labels))
            logger.info('selection accuracy after task %d: %.4f (train %.4f)' % (t, sel_acc, train_acc))

        storage = storage_report(buffer, selector, (model.model_cfg.IN_CHANNELS, model.model_cfg.IMAGE_SIZE,
                                                    model.model_cfg.IMAGE_SIZE),
                                 float_bytes=cfg.SELECTOR.FLOAT_BYTES, image_byte_depth=cfg.SELECTOR.IMAGE_BYTE_DEPTH)
        adapter_bytes = count_adapter_set(module_set.get(t)).stored_bytes
        storage['adapter_bytes'] = adapter_bytes
        storage['module_set_bytes'] = module_set.stored_bytes() if per_task else adapter_bytes

        _check_base(model, base_digest, 'evaluation after task %d' % t)
        record.complete_step(t, selection_accuracy=sel_acc, transfer_selection=transfer, storage=storage,
                             seconds=time.time() - step_start)

        if run_dir is not None:
            if per_task:
                buffer.save(run_dir / 'buffer.bin')
                selector.save(run_dir / 'selector.bin', block=k)
            record.save(run_dir)

    metrics = record.continual_metrics()
    for metric, vals in metrics.items():
        if vals is not None:
            logger.info('%s: AA %.4f FM %.4f FT %s' % (metric, vals['aa'], vals['fm'],
                                                       '%.4f' % vals['ft'] if vals['ft'] is not None else 'n/a'))
    logger.info('**********************End continual run**********************')
    return record


def baseline_sequential(model, stream, cfg, variant='vanilla', run_dir=None, seed=None, logger=None, tb_log=None):
    """One adapter set of `variant` trained across all tasks in turn, no selector."""
    modes = {v.value: m for m, v in BASELINE_VARIANTS.items()}
    variant = AdapterVariant(variant).value
    if variant not in modes:
        raise ValidationError('no sequential baseline for variant %s' % variant)
    return run_continual(model, stream, cfg, mode=modes[variant], run_dir=run_dir, seed=seed, logger=logger,
                         tb_log=tb_log)
