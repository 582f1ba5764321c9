"""
Ablation sweeps. Each grid cell is a full run in its own directory under <out>/<kind>/; the
comparison table goes to <out>/ablation_<kind>.csv (plus a tab-separated copy for plotting)
and <out>/ablation_<kind>.json.

    variant-sweep         ADAPTER.VARIANT over ABLATION.VARIANTS, per-task modules with oracle routing
    block-sweep           ADAPTER.START_BLOCK over ABLATION.BLOCKS
    buffer-sweep          SELECTOR.BUFFER_SIZE over ABLATION.BUFFER_SIZES
    order-sweep           ABLATION.NUM_PERMUTATIONS task orders x ABLATION.ORDER_MODES
    component-sweep       run modes in ABLATION.COMPONENT_MODES (sequential LoRA / SLoRA / AugModule, full method)
    selector-block-sweep  held-out selector accuracy from every block's embeddings, no adapters
"""
import copy
import csv
from pathlib import Path

import numpy as np
import torch

from ..config import ABLATION_KINDS, validate_config
from ..models.adapters.param_count import count_params
from ..models.selector.module_selector import EmbeddingBuffer, selection_accuracy, train_selector
from ..utils import common_utils, file_utils
from ..utils.exceptions import ValidationError
from . import eval_utils
from .harness import BASELINE_VARIANTS, run_continual
from .task_stream import permute_stream
from .train_utils import derive_seed

_SEED_SWEEP_BUFFER, _SEED_SWEEP_SELECTOR = 11, 12


def parse_sweep_spec(spec):
    """'block-sweep' or 'block-sweep:2,4,6' -> (kind, values or None)."""
    kind, _, values = spec.partition(':')
    kind = kind.strip()
    if kind not in ABLATION_KINDS:
        raise ValidationError('unknown sweep %s (expected one of %s)' % (kind, ', '.join(ABLATION_KINDS)))
    if not values.strip():
        return kind, None
    parsed = []
    for v in values.split(','):
        v = v.strip()
        try:
            parsed.append(int(v))
        except ValueError:
            parsed.append(v)
    return kind, parsed


def sweep_grid(kind, cfg, values=None):
    a = cfg.ABLATION
    if kind == 'variant-sweep':
        grid = values if values is not None else list(a.VARIANTS)
    elif kind == 'block-sweep':
        grid = values if values is not None else list(a.BLOCKS)
    elif kind == 'buffer-sweep':
        grid = values if values is not None else list(a.BUFFER_SIZES)
    elif kind == 'order-sweep':
        perms = values if values is not None else list(range(a.NUM_PERMUTATIONS))
        if len(set(perms)) != len(perms):
            raise ValidationError('order-sweep permutation ids repeat: %s' % perms)
        grid = [(mode, p) for mode in a.ORDER_MODES for p in perms]
    elif kind == 'component-sweep':
        grid = values if values is not None else list(a.COMPONENT_MODES)
    elif kind == 'selector-block-sweep':
        grid = values if values is not None else list(range(cfg.MODEL.NUM_BLOCKS + 1))
    else:
        raise ValidationError('unknown sweep %s' % kind)
    if len(grid) == 0:
        raise ValidationError('%s has an empty grid' % kind)
    return grid


def _cell_config(cfg, kind, value):
    cell = copy.deepcopy(cfg)
    mode = cfg.CONTINUAL.MODE
    if kind == 'variant-sweep':
        cell.ADAPTER.VARIANT = value
        mode = 'samcl-oracle'
    elif kind == 'block-sweep':
        cell.ADAPTER.START_BLOCK = int(value)
    elif kind == 'buffer-sweep':
        cell.SELECTOR.BUFFER_SIZE = int(value)
        mode = 'samcl'
    elif kind == 'order-sweep':
        mode = value[0]
    elif kind == 'component-sweep':
        mode = value
    cell.CONTINUAL.MODE = mode
    validate_config(cell)
    return cell, mode


def _cell_name(kind, value):
    if kind == 'order-sweep':
        return '%s_perm%d' % value
    return '%s_%s' % (kind.split('-')[0], value)


def _record_row(record):
    summary = record.summary()
    row = {'mode': record.mode, 'variant': record.variant, 'start_block': record.start_block}
    for metric, vals in summary['metrics'].items():
        for key in ('aa', 'fm', 'ft'):
            row['%s_%s' % (metric, key)] = vals[key] if vals is not None else None
    sel = [s for s in record.selection_accuracy if s is not None]
    row['final_selection_accuracy'] = sel[-1] if sel else None
    storage = record.storage[-1] or {}
    row['adapter_bytes'] = storage.get('adapter_bytes')
    row['buffer_bytes'] = storage.get('buffer_bytes')
    return row


def _variant_accounting(model, cfg, variant):
    sites = model.injection_sites(cfg.ADAPTER.START_BLOCK, cfg.ADAPTER.SITES)
    dims = [model.site_dims(s) for s in sites]
    counts = count_params(variant, sites, cfg.ADAPTER.RANK, dims, embed_dim=model.embed_dim)
    return {'trainable_count': counts.trainable_count, 'stored_count': counts.stored_count,
            'stored_bytes': counts.stored_bytes}


def _spread(vals):
    vals = [v for v in vals if v is not None]
    if not vals:
        return {'mean': None, 'std': None, 'spread': None}
    vals = np.asarray(vals, dtype=np.float64)
    return {'mean': float(vals.mean()), 'std': float(vals.std()), 'spread': float(vals.max() - vals.min())}


def selector_block_sweep(model, stream, cfg, blocks, seed, logger=None):
    """Held-out selection accuracy of a selector trained on each block's pooled embeddings."""
    logger = common_utils.get_logger(logger)
    train_embs = [eval_utils.compute_block_embeddings(model, task.train_set) for task in stream]
    test_embs = [eval_utils.compute_block_embeddings(model, task.test_set) for task in stream]
    rows = []
    for b in blocks:
        if not 0 <= b <= model.num_blocks:
            raise ValidationError('block %d outside [0, %d]' % (b, model.num_blocks))
        buffer = EmbeddingBuffer(cfg.SELECTOR.BUFFER_SIZE, model.embed_dim)
        for t, embs in enumerate(train_embs):
            buffer.add(t, embs[b], seed=derive_seed(seed, t, b, _SEED_SWEEP_BUFFER))
        selector, train_acc = train_selector(buffer, cfg.SELECTOR, seed=derive_seed(seed, b, _SEED_SWEEP_SELECTOR),
                                             logger=logger)
        x = np.concatenate([embs[b] for embs in test_embs], axis=0)
        y = np.concatenate([np.full(embs.shape[1], t, dtype=np.int64) for t, embs in enumerate(test_embs)])
        test_acc = selection_accuracy(selector, torch.from_numpy(x), y)
        logger.info('selector from block %d: train acc %.4f, held-out acc %.4f' % (b, train_acc, test_acc))
        rows.append({'block': int(b), 'train_accuracy': train_acc, 'heldout_accuracy': test_acc})
    return rows


def ablate(kind, cfg, model, stream, out_dir, values=None, seed=None, logger=None, tb_log=None):
    """
    Runs one sweep and returns {'kind', 'rows', 'aggregate'}.

    Args:
        stream: TaskStream in the configured order (order-sweep permutes it)
        values: optional explicit grid replacing the ABLATION defaults
    """
    logger = common_utils.get_logger(logger)
    seed = cfg.CONTINUAL.SEED if seed is None else seed
    grid = sweep_grid(kind, cfg, values)
    out_dir = Path(out_dir)
    rows, aggregate = [], {}

    if kind == 'selector-block-sweep':
        rows = selector_block_sweep(model, stream, cfg, grid, seed, logger=logger)
        best = max(rows, key=lambda r: r['heldout_accuracy'])
        aggregate = {'best_block': best['block'], 'best_heldout_accuracy': best['heldout_accuracy']}
    else:
        for value in grid:
            cell_cfg, mode = _cell_config(cfg, kind, value)
            name = _cell_name(kind, value)
            cell_stream = permute_stream(stream, value[1], seed) if kind == 'order-sweep' else stream
            logger.info('---- %s: cell %s (mode %s) ----' % (kind, name, mode))
            record = run_continual(model, cell_stream, cell_cfg, mode=mode, run_dir=out_dir / kind / name,
                                   seed=seed, logger=logger, tb_log=tb_log)
            row = {'cell': name}
            row.update(_record_row(record))
            if kind == 'variant-sweep':
                row.update(_variant_accounting(model, cell_cfg, value))
            elif kind == 'block-sweep':
                row['start_block'] = int(value)
            elif kind == 'buffer-sweep':
                row['buffer_size'] = int(value)
            elif kind == 'order-sweep':
                row['permutation'] = int(value[1])
                row['order'] = ' '.join(str(i) for i in cell_stream.order)
            rows.append(row)

        if kind == 'order-sweep':
            for mode in cfg.ABLATION.ORDER_MODES:
                mode_rows = [r for r in rows if r['mode'] == mode]
                aggregate[mode] = {key: _spread([r[key] for r in mode_rows])
                                   for key in mode_rows[0] if key.startswith(('miou_', 'mf1_', 'mmae_'))}
        elif kind == 'buffer-sweep':
            accs = [r['final_selection_accuracy'] for r in rows]
            aggregate['selection_accuracy'] = _spread(accs)
        elif kind == 'component-sweep':
            aggregate['baseline_modes'] = [r['cell'] for r in rows if r['mode'] in BASELINE_VARIANTS]

    report = {'kind': kind, 'seed': seed, 'grid': [list(v) if isinstance(v, tuple) else v for v in grid],
              'rows': rows, 'aggregate': aggregate}
    write_table(rows, out_dir / ('ablation_%s.csv' % kind))
    write_table(rows, out_dir / ('ablation_%s.tsv' % kind), delimiter='\t')
    file_utils.write_json(out_dir / ('ablation_%s.json' % kind), report)
    return report


def write_table(rows, path, delimiter=','):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = []
    for row in rows:
        fields.extend(key for key in row if key not in fields)
    with open(path, 'w', newline='') as f:
        writer = csv.DictWriter(f, fieldnames=fields, delimiter=delimiter)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: ('' if row.get(key) is None else row.get(key)) for key in fields})
