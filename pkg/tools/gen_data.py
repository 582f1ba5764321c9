"""Write the synthetic domains to disk (PPM images, PGM masks, prompt files, manifest.json)."""
import _init_path  # noqa: F401

from cli_common import build_parser, default_output_dir, parse_config, report_failure, setup_output

from augseg.datasets.custom.folder_dataset import create_folder_dataset
from augseg.utils.exceptions import AugSegError


def parse_args(argv=None):
    parser = build_parser('gen-data', __doc__)
    parser.add_argument('--domains', type=str, nargs='+', default=None,
                        help='domains to write (default: DATA_CONFIG.DOMAINS plus the base domain)')
    return parser, parser.parse_args(argv)


def main(argv=None):
    parser, args = parse_args(argv)
    logger = None
    try:
        cfg = parse_config(args)
        output_dir, logger = setup_output('gen_data', args, cfg,
                                          output_dir=args.out or default_output_dir('gen_data', cfg.TAG))
        manifest = create_folder_dataset(cfg.DATA_CONFIG, output_dir, seed=cfg.CONTINUAL.SEED,
                                         image_size=cfg.MODEL.IMAGE_SIZE, domains=args.domains, logger=logger)
        logger.info('wrote %d domains to %s' % (len(manifest['domains']), output_dir))
        return 0
    except (AugSegError, OSError) as e:
        return report_failure(e, parser=parser, logger=logger)


if __name__ == '__main__':
    raise SystemExit(main())
