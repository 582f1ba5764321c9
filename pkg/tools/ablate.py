"""
Run one ablation sweep. --sweep takes a kind and an optional explicit grid, e.g.

    python ablate.py --config cfgs/ablations/block_sweep.yaml --sweep block-sweep:2,4,6
"""
import _init_path  # noqa: F401

from cli_common import (add_base_args, build_parser, default_output_dir, load_base, make_tb_log, parse_config,
                        report_failure, setup_output)

from augseg.continual import ablate, build_task_stream, parse_sweep_spec
from augseg.utils.exceptions import AugSegError, ConfigError


def parse_args(argv=None):
    parser = add_base_args(build_parser('ablate', __doc__))
    parser.add_argument('--sweep', type=str, default=None, help='kind[:v1,v2,...], defaults to ABLATION.KIND')
    return parser, parser.parse_args(argv)


def run_ablation(args, cfg, kind, values, output_dir, logger):
    seed = cfg.CONTINUAL.SEED
    model, _ = load_base(args, cfg, logger)
    stream = build_task_stream(cfg, seed, logger=logger)
    tb_log = make_tb_log(output_dir)
    try:
        report = ablate(kind, cfg, model, stream, output_dir, values=values, seed=seed, logger=logger,
                        tb_log=tb_log)
    finally:
        tb_log.close()
    for row in report['rows']:
        logger.info(', '.join('%s=%s' % (k, v) for k, v in row.items()))
    logger.info('aggregate: %s' % report['aggregate'])
    return 0


def main(argv=None):
    parser, args = parse_args(argv)
    logger = None
    try:
        cfg = parse_config(args)
        spec = args.sweep or cfg.ABLATION.KIND
        if not spec:
            raise ConfigError('no sweep given: pass --sweep or set ABLATION.KIND')
        kind, values = parse_sweep_spec(spec)
        if args.mode is not None:
            cfg.CONTINUAL.MODE = args.mode
        if args.dump_masks:
            cfg.CONTINUAL.DUMP_MASKS = True
        output_dir = args.out or default_output_dir('ablate', cfg.TAG)
        output_dir, logger = setup_output('ablate', args, cfg, output_dir=output_dir)
        return run_ablation(args, cfg, kind, values, output_dir, logger)
    except (AugSegError, OSError) as e:
        return report_failure(e, parser=parser, logger=logger)


if __name__ == '__main__':
    raise SystemExit(main())
