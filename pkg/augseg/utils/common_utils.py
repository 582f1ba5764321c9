import hashlib
import logging
import os
import random
from pathlib import Path

import numpy as np
import torch


def create_logger(log_file=None, log_level=logging.INFO, name='augseg'):
    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    # repeated calls in one process (tests, sweeps) must not stack handlers
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    formatter = logging.Formatter('%(asctime)s  %(levelname)5s  %(message)s')
    console = logging.StreamHandler()
    console.setLevel(log_level)
    console.setFormatter(formatter)
    logger.addHandler(console)
    if log_file is not None:
        file_handler = logging.FileHandler(filename=log_file)
        file_handler.setLevel(log_level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    logger.propagate = False
    return logger


def get_logger(logger=None):
    return logger if logger is not None else logging.getLogger('augseg')


def set_random_seed(seed):
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def worker_init_fn(worker_id, seed=666):
    if seed is not None:
        random.seed(seed + worker_id)
        np.random.seed(seed + worker_id)
        torch.manual_seed(seed + worker_id)


def make_generator(seed):
    g = torch.Generator()
    g.manual_seed(int(seed))
    return g


def get_output_root():
    return Path(os.environ.get('AUGSEG_OUTPUT_ROOT', './output')).resolve()


def state_dict_digest(state_dict):
    """sha256 over names, shapes and raw bytes of every tensor, in key order."""
    digest = hashlib.sha256()
    for key in sorted(state_dict.keys()):
        val = state_dict[key].detach().cpu().contiguous()
        digest.update(key.encode('utf-8'))
        digest.update(str(tuple(val.shape)).encode('utf-8'))
        digest.update(val.numpy().tobytes())
    return digest.hexdigest()


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class AverageMeter(object):
    """Computes and stores the average and current value"""
    def __init__(self):
        self.reset()

    def reset(self):
        self.val = 0
        self.avg = 0
        self.sum = 0
        self.count = 0

    def update(self, val, n=1):
        self.val = val
        self.sum += val * n
        self.count += n
        self.avg = self.sum / self.count
