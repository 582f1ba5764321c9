import numpy as np
import torch.optim as optim
import torch.optim.lr_scheduler as lr_sched


def annealing_cos(start, end, pct):
    "Cosine anneal from `start` to `end` as pct goes from 0.0 to 1.0."
    cos_out = np.cos(np.pi * pct) + 1
    return end + (start - end) / 2 * cos_out


def build_optimizer(params, optim_cfg):
    params = list(params)
    if optim_cfg.OPTIMIZER == 'adamw':
        optimizer = optim.AdamW(params, lr=optim_cfg.LR, weight_decay=optim_cfg.WEIGHT_DECAY,
                                betas=tuple(optim_cfg.BETAS))
    elif optim_cfg.OPTIMIZER == 'adam':
        optimizer = optim.Adam(params, lr=optim_cfg.LR, weight_decay=optim_cfg.WEIGHT_DECAY,
                               betas=tuple(optim_cfg.get('BETAS', (0.9, 0.999))))
    elif optim_cfg.OPTIMIZER == 'sgd':
        optimizer = optim.SGD(params, lr=optim_cfg.LR, weight_decay=optim_cfg.WEIGHT_DECAY,
                              momentum=optim_cfg.get('MOMENTUM', 0.9))
    else:
        raise NotImplementedError(optim_cfg.OPTIMIZER)

    return optimizer


def build_scheduler(optimizer, total_iters_each_epoch, total_epochs, optim_cfg):
    """Per-iteration LambdaLR: cosine decay from LR to LR_CLIP over all steps, or constant."""
    total_steps = max(total_iters_each_epoch * total_epochs, 1)
    floor = optim_cfg.get('LR_CLIP', 0.0) / optim_cfg.LR

    if optim_cfg.get('SCHEDULER', 'cosine') == 'cosine':
        def lr_lbmd(cur_iter):
            return annealing_cos(1.0, floor, min(cur_iter / total_steps, 1.0))
    else:
        def lr_lbmd(cur_iter):
            return 1.0

    return lr_sched.LambdaLR(optimizer, lr_lbmd)
