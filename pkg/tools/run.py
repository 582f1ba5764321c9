"""Run the continual task stream against a frozen base checkpoint and write one run directory."""
import _init_path  # noqa: F401

from cli_common import (add_base_args, build_parser, default_output_dir, load_base, make_tb_log, parse_config,
                        report_failure, setup_output)

from augseg.config import validate_config
from augseg.continual import build_task_stream, run_continual
from augseg.utils.exceptions import AugSegError


def parse_args(argv=None):
    parser = add_base_args(build_parser('run', __doc__))
    return parser, parser.parse_args(argv)


def run(args, cfg, output_dir, logger):
    seed = cfg.CONTINUAL.SEED
    model, _ = load_base(args, cfg, logger)
    stream = build_task_stream(cfg, seed, logger=logger)
    tb_log = make_tb_log(output_dir)
    try:
        record = run_continual(model, stream, cfg, mode=cfg.CONTINUAL.MODE, run_dir=output_dir, seed=seed,
                               logger=logger, tb_log=tb_log)
    finally:
        tb_log.close()
    logger.info('run directory: %s (%d/%d steps)' % (output_dir, record.steps_completed, record.num_tasks))
    return 0


def main(argv=None):
    parser, args = parse_args(argv)
    logger = None
    try:
        cfg = parse_config(args)
        if args.mode is not None:
            cfg.CONTINUAL.MODE = args.mode
        if args.dump_masks:
            cfg.CONTINUAL.DUMP_MASKS = True
        validate_config(cfg)
        output_dir = args.out or default_output_dir('run', cfg.TAG) / ('%s_seed%d' % (cfg.CONTINUAL.MODE,
                                                                                      cfg.CONTINUAL.SEED))
        output_dir, logger = setup_output('run', args, cfg, output_dir=output_dir)
        return run(args, cfg, output_dir, logger)
    except (AugSegError, OSError) as e:
        return report_failure(e, parser=parser, logger=logger)


if __name__ == '__main__':
    raise SystemExit(main())
