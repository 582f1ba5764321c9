"""Pre-train the base promptable segmentor on the base domain and freeze it."""
import _init_path  # noqa: F401

from cli_common import (BASE_CKPT_NAME, build_parser, config_digest, default_base_dir, make_tb_log, parse_config,
                        report_failure, setup_output)

from augseg.continual import build_base_splits, pretrain_base
from augseg.models import build_network
from augseg.models.segmentor import PromptableSegmentor
from augseg.utils import common_utils, file_utils
from augseg.utils.exceptions import AugSegError, TrainingFailureError

DIGEST_SECTIONS = ('MODEL', 'DATA_CONFIG', 'PRETRAIN', 'OPTIMIZATION')


def parse_args(argv=None):
    parser = build_parser('pretrain', __doc__)
    parser.add_argument('--force', action='store_true', default=False,
                        help='retrain even if an up-to-date checkpoint exists')
    return parser, parser.parse_args(argv)


def pretrain(args, cfg, output_dir, logger):
    seed = cfg.CONTINUAL.SEED
    ckpt_path = output_dir / BASE_CKPT_NAME
    digest = config_digest(cfg, DIGEST_SECTIONS)
    if ckpt_path.exists() and not args.force:
        _, meta = PromptableSegmentor.load_checkpoint(ckpt_path)
        if meta.get('seed') == seed and meta.get('config_digest') == digest:
            logger.info('%s is up-to-date (seed %d), skipping pre-training' % (ckpt_path, seed))
            return 0
        logger.info('%s exists but was trained with another seed or config, retraining' % ckpt_path)

    common_utils.set_random_seed(seed)
    train_set, test_set = build_base_splits(cfg, seed, logger=logger)
    model = build_network(cfg.MODEL)
    tb_log = make_tb_log(output_dir)
    try:
        model, report = pretrain_base(model, train_set, test_set, cfg, seed, tb_log=tb_log, logger=logger)
    except TrainingFailureError as e:
        file_utils.write_json(output_dir / 'pretrain_report.json', dict(e.report, status='failed', seed=seed))
        raise
    finally:
        tb_log.close()

    report = dict(report, status='ok', seed=seed)
    model.save_checkpoint(ckpt_path, extra_meta={'seed': seed, 'config_digest': digest, 'report': report})
    file_utils.write_json(output_dir / 'pretrain_report.json', report)
    logger.info('base checkpoint saved to %s' % ckpt_path)
    return 0


def main(argv=None):
    parser, args = parse_args(argv)
    logger = None
    try:
        cfg = parse_config(args)
        output_dir, logger = setup_output('pretrain', args, cfg, output_dir=args.out or default_base_dir())
        return pretrain(args, cfg, output_dir, logger)
    except (AugSegError, OSError) as e:
        return report_failure(e, parser=parser, logger=logger)


if __name__ == '__main__':
    raise SystemExit(main())
