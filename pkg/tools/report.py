"""Consolidate saved run directories into summary and per-task tables."""
import _init_path  # noqa: F401

import argparse
from pathlib import Path

from cli_common import report_failure

from augseg.continual import build_report, format_report
from augseg.utils import common_utils, file_utils
from augseg.utils.exceptions import ArtifactFormatError, AugSegError


def parse_args(argv=None):
    parser = argparse.ArgumentParser(prog='augseg report', description=__doc__)
    parser.add_argument('run_dirs', nargs='*', help='run directories written by run.py or ablate.py')
    parser.add_argument('--out', type=str, default=None, help='also write report.txt and report.json here')
    return parser, parser.parse_args(argv)


def main(argv=None):
    parser, args = parse_args(argv)
    logger = common_utils.create_logger()
    try:
        report = build_report(args.run_dirs, logger=logger)
        text = format_report(report)
        print(text)
        if args.out is not None:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / 'report.txt').write_text(text + '\n')
            file_utils.write_json(out / 'report.json', report)
        if report['failed']:
            raise ArtifactFormatError('%d of %d run directories could not be read'
                                      % (len(report['failed']), len(args.run_dirs)))
        return 0
    except (AugSegError, OSError) as e:
        return report_failure(e, parser=parser, logger=logger)


if __name__ == '__main__':
    raise SystemExit(main())
