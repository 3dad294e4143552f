"""Console entry point; applies the thread cap before numpy loads."""

import os
import sys


def main(argv=None) -> int:
    threads = os.environ.get("MAXNIT_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    from .harness import main as harness_main

    return harness_main(argv)


if __name__ == "__main__":
    sys.exit(main())
