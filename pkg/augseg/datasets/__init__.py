from functools import partial

from torch.utils.data import DataLoader

from ..utils import common_utils
from .custom.folder_dataset import FolderSegDataset
from .dataset import DatasetTemplate
from .synth.synth_dataset import SynthDomainDataset

__all__ = {
    'DatasetTemplate': DatasetTemplate,
    'SynthDomainDataset': SynthDomainDataset,
    'FolderSegDataset': FolderSegDataset,
}


def build_dataset(dataset_cfg, model_cfg, domain, split, seed=0, num_samples=None, logger=None):
    kwargs = {'seed': seed, 'num_samples': num_samples} if dataset_cfg.DATASET == 'SynthDomainDataset' else {}
    return __all__[dataset_cfg.DATASET](
        dataset_cfg=dataset_cfg,
        model_cfg=model_cfg,
        domain=domain,
        split=split,
        logger=logger,
        **kwargs
    )


def build_dataloader(dataset, batch_size, seed=None, training=True, workers=0):
    """Shuffling draws from a generator seeded with `seed`, so epochs replay exactly."""
    generator = common_utils.make_generator(seed if seed is not None else 0)
    dataloader = DataLoader(
        dataset, batch_size=batch_size, pin_memory=False, num_workers=workers,
        shuffle=training, collate_fn=dataset.collate_batch, generator=generator,
        drop_last=False, timeout=0, worker_init_fn=partial(common_utils.worker_init_fn, seed=seed)
    )
    return dataloader
