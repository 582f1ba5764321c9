from ..dataset import DatasetTemplate
from .synth_domains import generate_domain, get_domain_spec


class SynthDomainDataset(DatasetTemplate):
    def __init__(self, dataset_cfg, model_cfg, domain, split='train', num_samples=None, seed=0,
                 spec_overrides=None, root_path=None, logger=None):
        """
        Args:
            dataset_cfg: DATA_CONFIG section
            model_cfg: MODEL section (image size, patch grid, heatmap sigma)
            domain: one of the synthetic domain kinds
            split: 'train' or 'test'
            num_samples: defaults to DATA_CONFIG.NUM_TRAIN / NUM_TEST
            seed: data seed shared by every domain of a run
        """
        super().__init__(dataset_cfg=dataset_cfg, model_cfg=model_cfg, domain=domain, split=split,
                         root_path=root_path, logger=logger)
        if num_samples is None:
            num_samples = dataset_cfg.NUM_TRAIN if split == 'train' else dataset_cfg.NUM_TEST
        self.spec = get_domain_spec(domain, spec_overrides)
        self.seed = seed
        self.samples = generate_domain(self.spec, num_samples, seed, split=split, image_size=model_cfg.IMAGE_SIZE,
                                       num_prompts=dataset_cfg.NUM_PROMPTS)
        if self.logger is not None:
            self.logger.info('Generated %d %s samples of domain %s' % (len(self.samples), split, domain))
