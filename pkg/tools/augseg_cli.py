"""
Single entry point dispatching to the verb scripts:

    python augseg_cli.py {pretrain,run,ablate,report,gen-data} [options]
"""
import _init_path  # noqa: F401

import sys

import ablate
import gen_data
import pretrain
import report
import run

VERBS = {
    'pretrain': pretrain.main,
    'run': run.main,
    'ablate': ablate.main,
    'report': report.main,
    'gen-data': gen_data.main,
}


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in VERBS:
        print('usage: augseg {%s} [options]' % ','.join(VERBS), file=sys.stderr)
        return 2
    return VERBS[argv[0]](argv[1:])


if __name__ == '__main__':
    raise SystemExit(main())
