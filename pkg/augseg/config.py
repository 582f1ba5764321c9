import copy
from pathlib import Path

import yaml
from easydict import EasyDict

from .utils.exceptions import ConfigError

SCHEMA_VERSION = 1

ADAPTER_VARIANTS = ('vanilla', 'frozen_A', 'slora', 'augmodule')
SITE_KINDS = ('attn_query', 'attn_value', 'mlp_in')
RUN_MODES = ('samcl', 'samcl-oracle', 'baseline-lora', 'baseline-slora', 'baseline-augmodule')
MAX_SELECTOR_EPOCHS = 25
ABLATION_KINDS = (
    'variant-sweep', 'block-sweep', 'buffer-sweep', 'order-sweep', 'component-sweep', 'selector-block-sweep'
)
DOMAIN_KINDS = (
    'bright-blob', 'camouflage-texture', 'shadow-region', 'noisy-lesion', 'low-contrast-texture', 'base-shapes'
)

_DEFAULTS = {
    'SCHEMA_VERSION': SCHEMA_VERSION,
    'MODEL': {
        'NAME': 'PromptableSegmentor',
        'IMAGE_SIZE': 64,
        'IN_CHANNELS': 3,
        'PATCH_SIZE': 8,
        'EMBED_DIM': 64,
        'NUM_BLOCKS': 8,
        'NUM_HEADS': 4,
        'MLP_RATIO': 4,
        'DECODER_HIDDEN': 64,
        'DECODER_UPSAMPLE': 'nearest',
        'HEATMAP_SIGMA': 1.0,
    },
    'DATA_CONFIG': {
        'DATASET': 'SynthDomainDataset',
        'DOMAINS': ['bright-blob', 'camouflage-texture', 'shadow-region', 'noisy-lesion', 'low-contrast-texture'],
        'BASE_DOMAIN': 'base-shapes',
        'NUM_TRAIN': 200,
        'NUM_TEST': 80,
        'NUM_PROMPTS': 3,
        'PERMUTATION': None,
        'DATA_PATH': None,
    },
    'PRETRAIN': {
        'NUM_TRAIN': 1200,
        'NUM_TEST': 120,
        'NUM_EPOCHS': 30,
        'BATCH_SIZE': 16,
        'LR': 0.002,
        'WEIGHT_DECAY': 0.01,
        'MIOU_THRESHOLD': 0.7,
    },
    'ADAPTER': {
        'VARIANT': 'augmodule',
        'RANK': 4,
        'START_BLOCK': 4,
        'SITES': list(SITE_KINDS),
        'INIT_STD': 0.02,
    },
    'OPTIMIZATION': {
        'OPTIMIZER': 'adamw',
        'NUM_EPOCHS': 20,
        'BATCH_SIZE': 8,
        'LR': 0.005,
        'WEIGHT_DECAY': 0.01,
        'BETAS': [0.9, 0.999],
        'SCHEDULER': 'cosine',
        'LR_CLIP': 0.0,
        'GRAD_NORM_CLIP': 10.0,
        'LOSS': {
            'FOCAL_GAMMA': 2.0,
            'FOCAL_ALPHA': 0.25,
            'DICE_WEIGHT': 10.0,
            'DICE_SMOOTH': 1.0,
            'IOU_WEIGHT': 1.0,
        },
    },
    'SELECTOR': {
        'BUFFER_SIZE': 300,
        'NUM_EPOCHS': 25,
        'BATCH_SIZE': 64,
        'LR': 0.01,
        'WEIGHT_DECAY': 0.0,
        'FLOAT_BYTES': 8,
        'IMAGE_BYTE_DEPTH': 1,
    },
    'CONTINUAL': {
        'MODE': 'samcl',
        'SEED': 0,
        'DUMP_MASKS': False,
        'LOGGER_ITER_INTERVAL': 50,
    },
    'ABLATION': {
        'KIND': None,
        'VARIANTS': ['frozen_A', 'vanilla', 'slora', 'augmodule'],
        'BLOCKS': [2, 4, 6],
        'BUFFER_SIZES': [50, 100, 300],
        'NUM_PERMUTATIONS': 6,
        'ORDER_MODES': ['samcl-oracle', 'baseline-lora'],
        'COMPONENT_MODES': ['baseline-lora', 'baseline-slora', 'baseline-augmodule', 'samcl'],
    },
}


def get_default_config():
    return EasyDict(copy.deepcopy(_DEFAULTS))


def log_config_to_file(cfg, pre='cfg', logger=None):
    for key, val in cfg.items():
        if isinstance(cfg[key], EasyDict):
            logger.info('\n%s.%s = edict()' % (pre, key))
            log_config_to_file(cfg[key], pre=pre + '.' + key, logger=logger)
            continue
        logger.info('%s.%s: %s' % (pre, key, val))


def cfg_from_list(cfg_list, config):
    """Set config keys via list (e.g., from command line)."""
    from ast import literal_eval
    if len(cfg_list) % 2 != 0:
        raise ConfigError('--set expects KEY VALUE pairs, got %d tokens' % len(cfg_list))
    for k, v in zip(cfg_list[0::2], cfg_list[1::2]):
        key_list = k.split('.')
        d = config
        for subkey in key_list[:-1]:
            if subkey not in d:
                raise ConfigError('NotFoundKey: %s' % subkey)
            d = d[subkey]
        subkey = key_list[-1]
        if subkey not in d:
            raise ConfigError('NotFoundKey: %s' % subkey)
        try:
            value = literal_eval(v)
        except (ValueError, SyntaxError):
            value = v

        if d[subkey] is None or value is None:
            d[subkey] = value
        elif type(value) != type(d[subkey]) and isinstance(d[subkey], list):
            val_list = value.split(',') if isinstance(value, str) else [value]
            elem_type = type(d[subkey][0]) if len(d[subkey]) > 0 else str
            d[subkey] = [elem_type(x) for x in val_list]
        elif isinstance(d[subkey], float) and isinstance(value, int) and not isinstance(value, bool):
            d[subkey] = float(value)
        else:
            if type(value) != type(d[subkey]):
                raise ConfigError('type {} does not match original type {} for key {}'.format(
                    type(value), type(d[subkey]), k))
            d[subkey] = value


def merge_new_config(config, new_config, cfg_dir=None):
    if '_BASE_CONFIG_' in new_config:
        base_path = Path(new_config['_BASE_CONFIG_'])
        if not base_path.is_absolute() and cfg_dir is not None and not base_path.exists():
            base_path = cfg_dir / base_path
        with open(base_path, 'r') as f:
            yaml_config = yaml.safe_load(f) or {}
        merge_new_config(config, yaml_config, cfg_dir=base_path.parent)

    for key, val in new_config.items():
        if key == '_BASE_CONFIG_':
            continue
        if not isinstance(val, dict):
            config[key] = val
            continue
        if key not in config or not isinstance(config[key], dict):
            config[key] = EasyDict()
        merge_new_config(config[key], val, cfg_dir=cfg_dir)

    return config


def cfg_from_yaml_file(cfg_file, config):
    cfg_file = Path(cfg_file)
    if not cfg_file.exists():
        raise ConfigError('config file not found: %s' % cfg_file)
    with open(cfg_file, 'r') as f:
        try:
            new_config = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError('cannot parse %s: %s' % (cfg_file, e))

    merge_new_config(config=config, new_config=new_config, cfg_dir=cfg_file.parent)
    return config


def load_run_config(cfg_file=None, set_cfgs=None):
    config = get_default_config()
    if cfg_file is not None:
        cfg_from_yaml_file(cfg_file, config)
    if set_cfgs:
        cfg_from_list(set_cfgs, config)
    validate_config(config)
    return config


def validate_config(cfg):
    def check(cond, msg):
        if not cond:
            raise ConfigError(msg)

    check(cfg.get('SCHEMA_VERSION') == SCHEMA_VERSION,
          'unsupported SCHEMA_VERSION %s (expected %d)' % (cfg.get('SCHEMA_VERSION'), SCHEMA_VERSION))
    m = cfg.MODEL
    check(m.IMAGE_SIZE > 0 and m.PATCH_SIZE > 0 and m.IMAGE_SIZE % m.PATCH_SIZE == 0,
          'IMAGE_SIZE %d must be a positive multiple of PATCH_SIZE %d' % (m.IMAGE_SIZE, m.PATCH_SIZE))
    check(m.EMBED_DIM > 0 and m.NUM_HEADS > 0 and m.EMBED_DIM % m.NUM_HEADS == 0,
          'EMBED_DIM %d must be divisible by NUM_HEADS %d' % (m.EMBED_DIM, m.NUM_HEADS))
    check(m.EMBED_DIM % 4 == 0, 'EMBED_DIM must be divisible by 4 for the selector widths')
    check(m.NUM_BLOCKS >= 1, 'NUM_BLOCKS must be >= 1')
    check(m.HEATMAP_SIGMA > 0, 'HEATMAP_SIGMA must be > 0')
    check(m.DECODER_UPSAMPLE in ('pixel_shuffle', 'nearest'), 'unknown DECODER_UPSAMPLE %s' % m.DECODER_UPSAMPLE)

    a = cfg.ADAPTER
    check(a.VARIANT in ADAPTER_VARIANTS, 'unknown adapter variant %s' % a.VARIANT)
    check(a.RANK >= 1, 'ADAPTER.RANK must be >= 1')
    check(0 <= a.START_BLOCK < m.NUM_BLOCKS,
          'ADAPTER.START_BLOCK %d must satisfy 0 <= k < NUM_BLOCKS (%d)' % (a.START_BLOCK, m.NUM_BLOCKS))
    check(len(a.SITES) > 0 and all(s in SITE_KINDS for s in a.SITES), 'ADAPTER.SITES must be a subset of %s' % (SITE_KINDS,))

    o = cfg.OPTIMIZATION
    check(o.NUM_EPOCHS >= 0 and o.BATCH_SIZE >= 1 and o.LR > 0, 'OPTIMIZATION epochs/batch/lr must be positive')
    s = cfg.SELECTOR
    check(s.NUM_EPOCHS <= MAX_SELECTOR_EPOCHS,
          'SELECTOR.NUM_EPOCHS must be <= %d, got %s' % (MAX_SELECTOR_EPOCHS, s.NUM_EPOCHS))
    check(s.BUFFER_SIZE >= 1 and s.NUM_EPOCHS >= 0 and s.BATCH_SIZE >= 1 and s.LR > 0,
          'SELECTOR buffer/epochs/batch/lr must be positive')
    d = cfg.DATA_CONFIG
    check(len(d.DOMAINS) >= 1, 'DATA_CONFIG.DOMAINS must not be empty')
    check(all(x in DOMAIN_KINDS for x in d.DOMAINS), 'unknown domain in %s' % (d.DOMAINS,))
    check(d.BASE_DOMAIN not in d.DOMAINS, 'BASE_DOMAIN must be disjoint from the continual domains')
    check(d.NUM_TRAIN >= 1 and d.NUM_TEST >= 1 and d.NUM_PROMPTS >= 1, 'DATA_CONFIG sizes must be >= 1')
    check(cfg.CONTINUAL.MODE in RUN_MODES, 'unknown CONTINUAL.MODE %s' % cfg.CONTINUAL.MODE)
    return cfg


def to_plain_dict(cfg):
    if isinstance(cfg, dict):
        return {k: to_plain_dict(v) for k, v in cfg.items()}
    if isinstance(cfg, (list, tuple)):
        return [to_plain_dict(v) for v in cfg]
    return cfg


def dump_config(cfg, path):
    with open(path, 'w') as f:
        yaml.safe_dump(to_plain_dict(cfg), f, sort_keys=True)
