import copy
import time

import numpy as np
import torch
import tqdm
from easydict import EasyDict
from torch.nn.utils import clip_grad_norm_

from ..datasets import build_dataloader
from ..models import model_fn_decorator
from ..utils import common_utils
from ..utils.exceptions import InvariantViolationError, StateError, TrainingFailureError
from ..utils.loss_utils import SegmentationLoss
from .eval_utils import evaluate_dataset
from .optimization import build_optimizer, build_scheduler


def derive_seed(seed, *keys):
    """Independent 31-bit seed for one purpose (task index, buffer, selector, ...) of a run."""
    return int(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]).generate_state(1)[0] & 0x7FFFFFFF)


def train_one_epoch(model, params, optimizer, train_loader, model_func, lr_scheduler, accumulated_iter, optim_cfg,
                    tbar, adapters=None, tb_log=None, tb_prefix='train', leave_pbar=False, logger=None,
                    logger_iter_interval=50, cur_epoch=None, total_epochs=None):
    pbar = tqdm.tqdm(total=len(train_loader), leave=leave_pbar, desc='train', dynamic_ncols=True)
    loss_disp = common_utils.AverageMeter()
    batch_time = common_utils.AverageMeter()

    end = time.time()
    for cur_it, batch in enumerate(train_loader):
        cur_lr = optimizer.param_groups[0]['lr']
        optimizer.zero_grad()

        loss, tb_dict, disp_dict = model_func(model, batch, adapters=adapters)
        if not torch.isfinite(loss):
            raise TrainingFailureError('non-finite loss at iteration %d' % accumulated_iter,
                                       report={'iteration': accumulated_iter, 'tb_dict': tb_dict})
        loss.backward()
        total_norm = clip_grad_norm_(params, optim_cfg.GRAD_NORM_CLIP)
        optimizer.step()
        lr_scheduler.step()
        accumulated_iter += 1

        batch_time.update(time.time() - end)
        end = time.time()
        loss_disp.update(loss.item())
        disp_dict.update({'loss': '%.4f' % loss_disp.avg, 'lr': cur_lr, 'norm': '%.3f' % total_norm.item()})

        if logger is not None and logger_iter_interval and accumulated_iter % logger_iter_interval == 0:
            logger.info('epoch: %s/%s, acc_iter=%d, cur_iter=%d/%d, b_time=%.3f(%.3f), loss=%.4f, lr=%.6f'
                        % (cur_epoch, total_epochs, accumulated_iter, cur_it, len(train_loader),
                           batch_time.val, batch_time.avg, loss_disp.avg, cur_lr))
        pbar.update()
        pbar.set_postfix(dict(total_it=accumulated_iter))
        tbar.set_postfix(disp_dict)

        if tb_log is not None:
            tb_log.add_scalar('%s/loss' % tb_prefix, loss.item(), accumulated_iter)
            tb_log.add_scalar('%s/learning_rate' % tb_prefix, cur_lr, accumulated_iter)
            for key, val in tb_dict.items():
                tb_log.add_scalar('%s/%s' % (tb_prefix, key), val, accumulated_iter)

    pbar.close()
    return accumulated_iter, loss_disp.avg


def train_model(model, params, train_set, optim_cfg, seed, adapters=None, tb_log=None, tb_prefix='train',
                logger=None, logger_iter_interval=50):
    """Shared loop of pretrain_base and train_task; returns the mean loss of the last epoch."""
    common_utils.set_random_seed(seed)
    params = list(params)
    train_loader = build_dataloader(train_set, optim_cfg.BATCH_SIZE, seed=seed, training=True)
    optimizer = build_optimizer(params, optim_cfg)
    lr_scheduler = build_scheduler(optimizer, len(train_loader), optim_cfg.NUM_EPOCHS, optim_cfg)
    model_func = model_fn_decorator(SegmentationLoss(optim_cfg.LOSS))

    accumulated_iter, last_loss = 0, None
    with tqdm.trange(0, optim_cfg.NUM_EPOCHS, desc='epochs', dynamic_ncols=True, leave=False) as tbar:
        for cur_epoch in tbar:
            accumulated_iter, last_loss = train_one_epoch(
                model, params, optimizer, train_loader, model_func, lr_scheduler, accumulated_iter, optim_cfg,
                tbar, adapters=adapters, tb_log=tb_log, tb_prefix=tb_prefix, logger=logger,
                logger_iter_interval=logger_iter_interval, cur_epoch=cur_epoch, total_epochs=optim_cfg.NUM_EPOCHS
            )
    return last_loss


def train_task(model, adapter_set, train_set, cfg, seed, tb_log=None, logger=None):
    """
    Train one task's adapter set against the frozen base. Only adapter parameters are handed to
    the optimizer; a base weight that changes anyway is a hard failure.
    """
    logger = common_utils.get_logger(logger)
    if not model.is_frozen:
        raise StateError('train_task needs a frozen base model')
    base_digest = common_utils.state_dict_digest(model.state_dict())

    params = adapter_set.trainable_parameters()
    if cfg.OPTIMIZATION.NUM_EPOCHS > 0 and len(params) > 0:
        last_loss = train_model(model, params, train_set, cfg.OPTIMIZATION, seed, adapters=adapter_set,
                                tb_log=tb_log, tb_prefix='task%d' % adapter_set.task_id, logger=logger,
                                logger_iter_interval=cfg.CONTINUAL.LOGGER_ITER_INTERVAL)
        logger.info('task %d (%s): %d epochs, final loss %.4f'
                    % (adapter_set.task_id, adapter_set.variant.value, cfg.OPTIMIZATION.NUM_EPOCHS, last_loss))

    if common_utils.state_dict_digest(model.state_dict()) != base_digest:
        raise InvariantViolationError('base weights changed while training task %d' % adapter_set.task_id)
    return adapter_set


def pretrain_base(model, train_set, test_set, cfg, seed, tb_log=None, logger=None):
    """
    Train every base weight on the base domain, then freeze.

    Returns:
        model: frozen
        report: {'miou', 'mf1', 'mmae', 'threshold', 'epochs', 'final_loss'}
    Raises:
        TrainingFailureError when held-out mIoU stays under PRETRAIN.MIOU_THRESHOLD
    """
    logger = common_utils.get_logger(logger)
    pre_cfg = cfg.PRETRAIN
    optim_cfg = pretrain_optim_cfg(cfg.OPTIMIZATION, pre_cfg)
    for p in model.parameters():
        p.requires_grad_(True)

    final_loss = train_model(model, model.parameters(), train_set, optim_cfg, seed, tb_log=tb_log,
                             tb_prefix='pretrain', logger=logger,
                             logger_iter_interval=cfg.CONTINUAL.LOGGER_ITER_INTERVAL)
    model.freeze()
    scores = evaluate_dataset(model, test_set, route=None).scores
    report = dict(scores)
    report.update({'threshold': pre_cfg.MIOU_THRESHOLD, 'epochs': pre_cfg.NUM_EPOCHS, 'final_loss': final_loss})
    logger.info('base model: held-out mIoU %.4f mF1 %.4f mMAE %.4f (threshold %.2f)'
                % (scores['miou'], scores['mf1'], scores['mmae'], pre_cfg.MIOU_THRESHOLD))
    if scores['miou'] < pre_cfg.MIOU_THRESHOLD:
        raise TrainingFailureError('base model reached mIoU %.4f < %.2f after %d epochs'
                                   % (scores['miou'], pre_cfg.MIOU_THRESHOLD, pre_cfg.NUM_EPOCHS), report=report)
    return model, report


def pretrain_optim_cfg(optim_cfg, pre_cfg):
    """OPTIMIZATION with PRETRAIN's epochs, batch size, lr and weight decay."""
    merged = EasyDict(copy.deepcopy(optim_cfg))
    merged.NUM_EPOCHS = pre_cfg.NUM_EPOCHS
    merged.BATCH_SIZE = pre_cfg.BATCH_SIZE
    merged.LR = pre_cfg.LR
    merged.WEIGHT_DECAY = pre_cfg.WEIGHT_DECAY
    return merged
