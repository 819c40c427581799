"""Run the acceptance criteria and print one PASS/FAIL line each.

    python3 scripts/run_acceptance.py            # all eleven
    python3 scripts/run_acceptance.py 1 4 10     # a subset
"""
import sys

from viscobeam.acceptance import run_all


def main(argv):
    ids = [int(a) for a in argv] or None
    results = run_all(ids, echo=print)
    failed = [r.id for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed" + (f"; failing: {failed}" if failed else ""))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
