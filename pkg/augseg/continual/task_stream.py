import math
from collections import namedtuple

import numpy as np

from ..datasets import build_dataset
from ..utils import common_utils
from ..utils.exceptions import ValidationError

Task = namedtuple('Task', ['task_id', 'domain', 'train_set', 'test_set'])


def permutation_order(num_tasks, permutation_id, seed):
    """
    Permutation 0 is the configured order. Ids 1, 2, ... walk one seeded sequence of shuffles
    that skips the identity and every order already drawn, so distinct ids give distinct orders.
    """
    permutation_id = int(permutation_id)
    if permutation_id < 0 or permutation_id >= math.factorial(num_tasks):
        raise ValidationError('permutation id %d out of range for %d tasks (%d orders)'
                              % (permutation_id, num_tasks, math.factorial(num_tasks)))
    identity = tuple(range(num_tasks))
    if permutation_id == 0:
        return list(identity)
    rng = np.random.default_rng(int(seed))
    seen = {identity}
    order = identity
    while len(seen) <= permutation_id:
        order = tuple(int(i) for i in rng.permutation(num_tasks))
        seen.add(order)
    return list(order)


class TaskStream(object):
    """Ordered (domain, train split, test split) triples; task ids are stream positions."""

    def __init__(self, tasks, permutation_id=0, order=None):
        self.tasks = list(tasks)
        self.permutation_id = permutation_id
        self.order = order if order is not None else list(range(len(self.tasks)))

    def __len__(self):
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, index):
        return self.tasks[index]

    @property
    def domains(self):
        return [task.domain for task in self.tasks]

    def truncate(self, num_tasks):
        return TaskStream(self.tasks[:num_tasks], permutation_id=self.permutation_id, order=self.order[:num_tasks])


def build_task_stream(cfg, seed, permutation_id=0, logger=None):
    """
    Builds every domain of DATA_CONFIG.DOMAINS once, then orders them by DATA_CONFIG.PERMUTATION
    (an explicit index list) or by permutation_id.
    """
    logger = common_utils.get_logger(logger)
    domains = list(cfg.DATA_CONFIG.DOMAINS)
    if cfg.DATA_CONFIG.get('PERMUTATION'):
        order = [int(i) for i in cfg.DATA_CONFIG.PERMUTATION]
        if sorted(order) != list(range(len(domains))):
            raise ValidationError('DATA_CONFIG.PERMUTATION %s is not a permutation of %d tasks' % (order, len(domains)))
    else:
        order = permutation_order(len(domains), permutation_id, seed)

    tasks = []
    for task_id, index in enumerate(order):
        domain = domains[index]
        train_set = build_dataset(cfg.DATA_CONFIG, cfg.MODEL, domain, 'train', seed=seed, logger=logger)
        test_set = build_dataset(cfg.DATA_CONFIG, cfg.MODEL, domain, 'test', seed=seed, logger=logger)
        tasks.append(Task(task_id, domain, train_set, test_set))
    logger.info('task stream (permutation %d): %s' % (permutation_id, ' -> '.join(t.domain for t in tasks)))
    return TaskStream(tasks, permutation_id=permutation_id, order=order)


def build_base_splits(cfg, seed, logger=None):
    """Train/test splits of the base domain used for pre-training."""
    pre = cfg.PRETRAIN
    train_set = build_dataset(cfg.DATA_CONFIG, cfg.MODEL, cfg.DATA_CONFIG.BASE_DOMAIN, 'train', seed=seed,
                              num_samples=pre.NUM_TRAIN, logger=logger)
    test_set = build_dataset(cfg.DATA_CONFIG, cfg.MODEL, cfg.DATA_CONFIG.BASE_DOMAIN, 'test', seed=seed,
                             num_samples=pre.NUM_TEST, logger=logger)
    return train_set, test_set


def permute_stream(stream, permutation_id, seed):
    """Same tasks (data untouched) in the order of permutation_id, re-numbered by position."""
    order = permutation_order(len(stream), permutation_id, seed)
    tasks = [Task(task_id, stream[i].domain, stream[i].train_set, stream[i].test_set)
             for task_id, i in enumerate(order)]
    return TaskStream(tasks, permutation_id=permutation_id, order=[stream.order[i] for i in order])
