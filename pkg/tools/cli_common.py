"""Argument parsing, output directories and logging shared by the command-line verbs."""
import argparse
import datetime
import hashlib
import json
from pathlib import Path

from tensorboardX import SummaryWriter

from augseg.config import RUN_MODES, load_run_config, log_config_to_file, to_plain_dict
from augseg.models.segmentor import PromptableSegmentor
from augseg.utils import common_utils
from augseg.utils.exceptions import ArtifactFormatError, ConfigError, exit_code_for

BASE_CKPT_NAME = 'checkpoint_base.bin'


def build_parser(verb, description):
    parser = argparse.ArgumentParser(prog='augseg %s' % verb, description=description)
    parser.add_argument('--config', '--cfg_file', dest='cfg_file', type=str, default=None,
                        help='specify the yaml config (defaults are used for missing keys)')
    parser.add_argument('--seed', type=int, default=None, help='overrides CONTINUAL.SEED')
    parser.add_argument('--out', type=str, default=None,
                        help='output directory (default: $AUGSEG_OUTPUT_ROOT/<verb>/<config name>)')
    parser.add_argument('--set', dest='set_cfgs', default=None, nargs=argparse.REMAINDER,
                        help='set extra config keys if needed')
    return parser


def parse_config(args):
    cfg = load_run_config(args.cfg_file, args.set_cfgs)
    if args.seed is not None:
        cfg.CONTINUAL.SEED = args.seed
    cfg.TAG = Path(args.cfg_file).stem if args.cfg_file else 'default'
    return cfg


def default_output_dir(verb, tag):
    return common_utils.get_output_root() / verb / tag


def default_base_dir():
    """Shared by every config, so run and ablate find the checkpoint without --ckpt."""
    return common_utils.get_output_root() / 'base'


def setup_output(verb, args, cfg, output_dir=None):
    output_dir = Path(output_dir or args.out or default_output_dir(verb, cfg.TAG))
    output_dir.mkdir(parents=True, exist_ok=True)
    log_file = output_dir / ('log_%s_%s.txt' % (verb, datetime.datetime.now().strftime('%Y%m%d-%H%M%S')))
    logger = common_utils.create_logger(log_file)
    logger.info('**********************Start logging: %s**********************' % verb)
    for key, val in vars(args).items():
        logger.info('{:16} {}'.format(key, val))
    log_config_to_file(cfg, logger=logger)
    return output_dir, logger


def make_tb_log(output_dir):
    return SummaryWriter(log_dir=str(Path(output_dir) / 'tensorboard'))


def config_digest(cfg, sections):
    """sha256 of the listed config sections, used to tell whether an artifact is up to date."""
    plain = {key: to_plain_dict(cfg[key]) for key in sections}
    return hashlib.sha256(json.dumps(plain, sort_keys=True).encode('utf-8')).hexdigest()


def check_model_config(ckpt_meta, cfg):
    """A run must use the architecture its base checkpoint was trained with."""
    saved = ckpt_meta.get('model_cfg', {})
    wanted = to_plain_dict(cfg.MODEL)
    diff = sorted(k for k in set(saved) | set(wanted) if saved.get(k) != wanted.get(k))
    if diff:
        raise ConfigError('MODEL config differs from the base checkpoint in %s' % ', '.join(diff))


def report_failure(exc, parser=None, logger=None):
    """Logs a library error and returns its exit code; anything else propagates."""
    code = exit_code_for(exc)
    if code == 1:
        raise exc
    logger = logger if logger is not None else common_utils.get_logger()
    logger.error('%s: %s' % (type(exc).__name__, exc))
    if parser is not None and isinstance(exc, ConfigError):
        parser.print_usage()
    return code


def add_base_args(parser):
    parser.add_argument('--ckpt', type=str, default=None,
                        help='base checkpoint (default: $AUGSEG_OUTPUT_ROOT/base/%s)' % BASE_CKPT_NAME)
    parser.add_argument('--mode', type=str, default=None, choices=RUN_MODES, help='overrides CONTINUAL.MODE')
    parser.add_argument('--dump-masks', dest='dump_masks', action='store_true', default=False,
                        help='write predicted masks of the final step as PGM files')
    return parser


def load_base(args, cfg, logger):
    """Loads and freezes the base checkpoint named by --ckpt (or the default one)."""
    ckpt_path = Path(args.ckpt) if args.ckpt else default_base_dir() / BASE_CKPT_NAME
    if not ckpt_path.exists():
        raise ArtifactFormatError('base checkpoint %s not found, run `augseg pretrain` first' % ckpt_path)
    model, meta = PromptableSegmentor.load_checkpoint(ckpt_path)
    check_model_config(meta, cfg)
    model.freeze()
    logger.info('loaded base checkpoint %s (seed %s)' % (ckpt_path, meta.get('seed')))
    return model, meta
